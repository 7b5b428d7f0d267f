#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use classigraph::corpus::{generate_synthetic, load_dataset, LoadOptions, SynthConfig, MANIFEST_NAME};
use classigraph::learner::Sample;

pub const CORPUS_SEED: u64 = 3;

/// The default synthetic corpus, generated once per test binary.
pub fn corpus() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir").keep();
        generate_synthetic(&SynthConfig::default(), CORPUS_SEED, &dir).expect("default corpus generates");
        dir
    })
}

pub fn manifest() -> PathBuf {
    corpus().join(MANIFEST_NAME)
}

/// Faces use carts as hard negatives and vice versa.
pub fn options(class: &str, split: &str) -> LoadOptions {
    let hard: &[&str] = match class {
        "face" => &["cart"],
        "cart" => &["face"],
        _ => &[],
    };
    LoadOptions {
        class: class.into(),
        split: Some(split.into()),
        negative_classes: hard.iter().map(|s| s.to_string()).collect(),
        seed: 17,
        ..LoadOptions::default()
    }
}

pub fn datasets(classes: &[&str], split: &str) -> BTreeMap<String, Vec<Sample>> {
    classes.iter().map(|c| (c.to_string(), load_dataset(&manifest(), &options(c, split)).expect("dataset loads"))).collect()
}
