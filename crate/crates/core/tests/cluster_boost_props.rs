//! Property tests for cluster filtering and the boosting weight rule.

use classigraph::cluster::{cluster_rounds, Algorithm, Distance, Linkage, QualityThresholds, RoundInput};
use classigraph::learner::{alpha, clusterboost, BoostConfig, Candidate, CandidateInputs};
use classigraph::graph::{FeatureId, Provenance};
use proptest::prelude::*;

fn points(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kept_clusters_meet_both_thresholds(
        pos in points(12),
        neg in points(6),
        k in 1usize..5,
        min_dunn in 0.0f64..0.6,
        min_purity in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let quality = QualityThresholds { min_dunn, min_purity };
        let rounds: Vec<RoundInput> = [
            Algorithm::KMeans { k, max_iter: 50, tol: 1e-9 },
            Algorithm::Agglomerative { k, linkage: Linkage::Complete },
            Algorithm::Agglomerative { k, linkage: Linkage::Single },
        ]
        .into_iter()
        .enumerate()
        .map(|(i, algorithm)| RoundInput {
            space: format!("r{i}"),
            algorithm,
            distance: Distance::Euclidean,
            positives: pos.clone(),
            ids: (0..pos.len()).collect(),
            negatives: neg.clone(),
        })
        .collect();
        // an empty result is reported as an error; anything returned must pass
        if let Ok(set) = cluster_rounds(&rounds, &quality, seed) {
            for c in &set.clusters {
                prop_assert!(c.quality.dunn >= min_dunn, "dunn {}", c.quality.dunn);
                prop_assert!(c.quality.purity >= min_purity, "purity {}", c.quality.purity);
            }
        }
    }

    #[test]
    fn alpha_is_positive_exactly_below_one_half(err in 1e-6f64..(1.0 - 1e-6)) {
        prop_assert_eq!(alpha(err) > 0.0, err < 0.5);
        prop_assert_eq!(alpha(err) < 0.0, err > 0.5);
    }

    #[test]
    fn clusterboost_stays_within_budget(scores in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 16), 1..8), k in 1usize..6) {
        let labels: Vec<bool> = (0..16).map(|i| i < 8).collect();
        let clusters = vec![(0..4).collect(), (4..8).collect()];
        let candidates: Vec<Candidate> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| Candidate { feature: FeatureId(i as u32), provenance: Provenance::Initial, inputs: CandidateInputs::Scores(s.clone()) })
            .collect();
        let config = BoostConfig { max_parents: k, ..BoostConfig::default() };
        match clusterboost(&labels, &clusters, &candidates, None, &config) {
            Ok(out) => {
                prop_assert!(out.selections.len() <= k);
                let mut ids: Vec<u32> = out.selections.iter().map(|s| s.feature.0).collect();
                prop_assert!(ids.iter().all(|&id| (id as usize) < candidates.len()));
                ids.dedup();
                prop_assert_eq!(ids.len(), out.selections.len());
                let sum: f64 = out.final_weights.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
                prop_assert!(out.final_weights.iter().all(|&w| w > 0.0));
                let again = clusterboost(&labels, &clusters, &candidates, None, &config).unwrap();
                prop_assert_eq!(again.selections, out.selections);
            }
            // more rounds than distinct candidates
            Err(e) => prop_assert!(k > candidates.len(), "{e}"),
        }
    }
}
