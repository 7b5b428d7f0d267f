//! Property tests for deep detection on randomized graphs and images.

use classigraph::graph::{FeatureSource, Geometry};
use classigraph::inference::{deep_detect, deep_detect_parallel, naive_deep_detect, pooling_frames_inside, DetectionCache};
use classigraph::selftest::{compare_evaluators, oracle_case, random_graph, random_image};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn memo_and_parallel_match_naive(seed in any::<u64>(), i in 0u64..1000) {
        let (g, root, image) = oracle_case(seed, i);
        let c = compare_evaluators(&g, root, &image);
        prop_assert!((c.memo - c.naive).abs() <= 1e-12, "memo {} naive {}", c.memo, c.naive);
        prop_assert_eq!(c.memo.to_bits(), c.parallel.to_bits());
    }

    #[test]
    fn every_cache_key_is_evaluated_at_most_once(seed in any::<u64>(), i in 0u64..1000) {
        let (g, root, image) = oracle_case(seed, i);
        let c = compare_evaluators(&g, root, &image);
        prop_assert!(c.memo_max_evaluations <= 1);
        prop_assert!(c.parallel_max_evaluations <= 1);
    }

    #[test]
    fn enlarging_the_search_area_never_lowers_the_score(seed in any::<u64>(), grow in 0.01f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut g, root) = random_graph(&mut rng, 6);
        let image = random_image(&mut rng, 24, 24);
        let node = g.feature(root).unwrap().clone();
        let a = node.geometry.area;
        let wider = Geometry::new(node.geometry.location, node.geometry.scale, [a[0] + grow, a[1] + grow]);
        let big = g.add_feature_node(node.source, wider).unwrap();
        let reference = image.bounds();
        let stride = g.params.lattice_stride;
        let small_frames = pooling_frames_inside(&node.geometry, &reference, stride, 24, 24);
        let big_frames = pooling_frames_inside(&wider, &reference, stride, 24, 24);
        prop_assert!(small_frames.iter().all(|f| big_frames.contains(f)));
        let mut cache = DetectionCache::new();
        let s = deep_detect(&g, root, &image, &reference, &mut cache).unwrap();
        let b = deep_detect(&g, big, &image, &reference, &mut cache).unwrap();
        prop_assert!(b >= s, "{b} < {s}");
        prop_assert!(matches!(node.source, FeatureSource::Concept(_)));
    }
}

#[test]
fn worker_count_does_not_change_scores() {
    let pools: Vec<rayon::ThreadPool> =
        [1, 4].iter().map(|&n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()).collect();
    for i in 0..40 {
        let (g, root, image) = oracle_case(9, i);
        let scores: Vec<u64> = pools
            .iter()
            .map(|p| {
                p.install(|| {
                    let mut cache = DetectionCache::new();
                    deep_detect_parallel(&g, root, &image, &image.bounds(), &mut cache).unwrap().to_bits()
                })
            })
            .collect();
        assert_eq!(scores[0], scores[1], "case {i}");
        let (naive, _) = naive_deep_detect(&g, root, &image, &image.bounds()).unwrap();
        assert!((f64::from_bits(scores[0]) - naive).abs() <= 1e-12);
    }
}
