//! Deep detection on a graph whose composites share one leaf many times.
//! The memoized, bottom-up parallel and naive evaluators agree exactly,
//! while the memo evaluates each (concept, frame) pair at most once.
//! Also prints a coarse response map of the leaf.
//!
//! cargo run --example deep_detection

use classigraph::graph::FeatureSource;
use classigraph::inference::{deep_detect, deep_detect_parallel, naive_deep_detect, response_map, DetectionCache};
use classigraph::selftest::{random_image, shared_subgraph_fixture};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (graph, root) = shared_subgraph_fixture();
    let image = random_image(&mut ChaCha8Rng::seed_from_u64(5), 24, 24);
    let reference = image.bounds();

    let mut cache = DetectionCache::new();
    let memo = deep_detect(&graph, root, &image, &reference, &mut cache)?;
    let (naive, counters) = naive_deep_detect(&graph, root, &image, &reference)?;
    let mut par_cache = DetectionCache::new();
    let parallel = deep_detect_parallel(&graph, root, &image, &reference, &mut par_cache)?;
    println!("memo {memo:.17} naive {naive:.17} parallel {parallel:.17}");
    println!(
        "leaf evaluations: memo {} naive {}; cache keys {}, max evaluations per key {}",
        cache.leaf_evaluations,
        counters.leaf_evaluations,
        cache.len(),
        cache.max_evaluations()
    );

    let leaf = graph.concepts().iter().find(|c| c.kind.is_leaf()).map(|c| c.id).expect("fixture has a leaf");
    let grid = response_map(&graph, leaf, &image, &reference, 0.5, &mut DetectionCache::new())?;
    println!("response map of {leaf} at scale 0.5 ({}x{} lattice):", grid.cols(), grid.rows());
    for r in 0..grid.rows() {
        let row: String = (0..grid.cols()).map(|c| if grid.at(r, c) >= 0.5 { '#' } else { '.' }).collect();
        println!("  {row}");
    }
    if let Some(FeatureSource::Concept(top)) = graph.feature(root).map(|f| f.source) {
        println!("root feature copies concept {top}");
    }
    Ok(())
}
