//! Cluster-guided boosting on a toy problem with two positive modes. Each
//! round targets the heaviest positive cluster, picks the candidate with the
//! lowest weighted error, and reweights; a composite logistic is refit over
//! the picks at the end.
//!
//! cargo run --example clusterboost

use classigraph::graph::{FeatureId, Provenance};
use classigraph::learner::{clusterboost, BoostConfig, Candidate, CandidateInputs};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Positives 0..6 are "left" (x small), 6..12 "right" (x large); negatives sit in the middle.
    let xs: Vec<f64> = (0..6)
        .map(|i| 0.1 + 0.02 * i as f64)
        .chain((0..6).map(|i| 0.8 + 0.02 * i as f64))
        .chain((0..10).map(|i| 0.4 + 0.02 * i as f64))
        .collect();
    let labels: Vec<bool> = (0..xs.len()).map(|i| i < 12).collect();
    let clusters = vec![(0..6).collect::<Vec<_>>(), (6..12).collect()];

    // Detector-like responses that peak near a given x.
    let bump = |c: f64| CandidateInputs::Scores(xs.iter().map(|x| (-((x - c) / 0.1).powi(2)).exp()).collect());
    let candidates = vec![
        Candidate { feature: FeatureId(0), provenance: Provenance::Initial, inputs: bump(0.15) },
        Candidate { feature: FeatureId(1), provenance: Provenance::Initial, inputs: bump(0.85) },
        // Uninformative noise.
        Candidate {
            feature: FeatureId(2),
            provenance: Provenance::Spawned { epoch: 0 },
            inputs: CandidateInputs::Scores((0..xs.len()).map(|i| ((i * 7) % 5) as f64 / 5.0).collect()),
        },
        // A raw descriptor; this one is fit with a logistic instead of a threshold.
        Candidate {
            feature: FeatureId(3),
            provenance: Provenance::Initial,
            inputs: CandidateInputs::Descriptors(xs.iter().map(|&x| Some(vec![x, x * x])).collect()),
        },
    ];
    let config = BoostConfig { max_parents: 3, ..BoostConfig::default() };
    let outcome = clusterboost(&labels, &clusters, &candidates, None, &config)?;
    for s in &outcome.selections {
        println!(
            "round {}: cluster {} (weight {:.3}) -> {} err {:.4} alpha {:.3}, vote error {:.3}, err after reweight {:.3}",
            s.round, s.cluster, s.cluster_weight, s.feature, s.error, s.alpha, s.ensemble_error, s.error_after_reweight
        );
    }
    println!("composite weights {:?} bias {:.3}", outcome.composite.weights, outcome.composite.bias);
    println!("training error {:.3}", outcome.training_error);
    Ok(())
}
