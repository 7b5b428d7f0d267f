//! Trains a one-epoch model, saves it, loads it back and checks that scores
//! on random images are bit-identical before and after.
//!
//! cargo run --release --example persistence

use std::collections::BTreeMap;

use classigraph::corpus::{generate_synthetic, load_dataset, LoadOptions, SynthConfig, MANIFEST_NAME};
use classigraph::inference::detect_concept;
use classigraph::learner::{train, EpochSpec, TrainConfig};
use classigraph::model_io::{load_model, save_model};
use classigraph::selftest::random_image;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    generate_synthetic(&SynthConfig::default(), 3, dir.path())?;
    let opts = LoadOptions { class: "disc".into(), split: Some("train".into()), ..LoadOptions::default() };
    let data = BTreeMap::from([("disc".to_string(), load_dataset(&dir.path().join(MANIFEST_NAME), &opts)?)]);
    let config = TrainConfig { seed: 7, epochs: vec![EpochSpec { class: "disc".into(), subset: Default::default() }], ..Default::default() };
    let outcome = train(&data, &config)?;
    let graph = &outcome.state.graph;

    let path = dir.path().join("disc.model.json");
    save_model(graph, &outcome.state.pool, Some(&serde_json::json!({ "seed": config.seed })), &path)?;
    let loaded = load_model(&path)?;
    println!("saved {} bytes; graph identical after reload: {}", std::fs::metadata(&path)?.len(), loaded.graph == *graph);

    let concept = outcome.reports[0].concept;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let image = random_image(&mut rng, 32, 32);
        let before = detect_concept(graph, concept, &image)?;
        let after = detect_concept(&loaded.graph, concept, &image)?;
        worst = worst.max((before - after).abs());
    }
    println!("max score difference over 20 random images: {worst:e}");
    Ok(())
}
