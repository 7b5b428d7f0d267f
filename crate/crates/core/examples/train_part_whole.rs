//! Generates the synthetic part-whole corpus, learns "disc" and "bar" from
//! initial features, then learns "face" on top of them and reports held-out
//! accuracy and which parents the face classifier picked.
//!
//! cargo run --release --example train_part_whole

use std::collections::BTreeMap;
use std::time::Instant;

use classigraph::corpus::{generate_synthetic, load_dataset, LoadOptions, SynthConfig, MANIFEST_NAME};
use classigraph::learner::{accuracy, train, EpochSpec, TrainConfig};

fn options(class: &str, split: &str, negative_classes: &[&str]) -> LoadOptions {
    LoadOptions {
        class: class.into(),
        split: Some(split.into()),
        negative_classes: negative_classes.iter().map(|s| s.to_string()).collect(),
        seed: 17,
        ..Default::default()
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let start = Instant::now();
    generate_synthetic(&SynthConfig::default(), 3, dir.path())?;
    let manifest = dir.path().join(MANIFEST_NAME);

    let schedule = [("disc", vec![]), ("bar", vec![]), ("face", vec!["cart"])];
    let mut train_sets = BTreeMap::new();
    let mut test_sets = BTreeMap::new();
    for (class, hard) in &schedule {
        train_sets.insert(class.to_string(), load_dataset(&manifest, &options(class, "train", hard))?);
        test_sets.insert(class.to_string(), load_dataset(&manifest, &options(class, "test", hard))?);
    }
    let config = TrainConfig {
        seed: 7,
        epochs: schedule.iter().map(|(c, _)| EpochSpec { class: c.to_string(), subset: Default::default() }).collect(),
        ..Default::default()
    };
    let outcome = train(&train_sets, &config)?;
    for report in &outcome.reports {
        let acc = accuracy(&outcome.state.graph, report.concept, &test_sets[&report.class])?;
        println!(
            "epoch {} {:>4}: c{} parents {} ({} spawned) train err {:.3} held-out acc {:.3}",
            report.epoch,
            report.class,
            report.concept.0,
            report.parents.len(),
            report.spawned_parents(),
            report.training_error,
            acc
        );
        for r in &report.rounds {
            println!("    round {} {:>8}: {} clusters, {} kept, dunn {:.3}", r.round, r.space, r.produced, r.kept, r.dunn);
        }
    }
    print!("{}", outcome.trace_jsonl());
    println!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
