//! Generates the synthetic part-whole corpus (faces, carts, distractors),
//! then cuts training crops for "face" with carts as hard negatives.
//!
//! cargo run --example synthetic_corpus -- [out_dir]

use std::path::PathBuf;

use classigraph::corpus::{generate_synthetic, load_dataset, LoadOptions, SynthConfig, MANIFEST_NAME};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let out: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());
    let manifest = generate_synthetic(&SynthConfig::default(), 3, &out)?;
    println!("{} images, {} boxes in {}", manifest.images().len(), manifest.annotations.len(), out.display());
    for a in manifest.annotations.iter().take(4) {
        println!("  {} {} {:?} ({})", a.image, a.class, a.bbox, a.split);
    }

    let opts = LoadOptions {
        class: "face".into(),
        split: Some("train".into()),
        negative_classes: vec!["cart".into()],
        seed: 1,
        ..LoadOptions::default()
    };
    let samples = load_dataset(&out.join(MANIFEST_NAME), &opts)?;
    let positives = samples.iter().filter(|s| s.positive).count();
    let clipped = samples.iter().filter(|s| s.clipped).count();
    println!("face/train: {} crops, {positives} positive, {} negative, {clipped} clipped by the border",
        samples.len(), samples.len() - positives);
    if let Some(first) = samples.first() {
        let path = out.join("example_face_crop.ppm");
        first.image.write(&path)?;
        println!("first crop {}x{} written to {}", first.image.width(), first.image.height(), path.display());
    }
    Ok(())
}
