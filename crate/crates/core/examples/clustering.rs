//! The clustering toolkit: k-means++ with Lloyd iterations, agglomerative
//! linkage, Dunn index, purity, Jaccard similarity of evolved descriptors,
//! and a multi-round run with quality filtering.
//!
//! cargo run --example clustering

use classigraph::cluster::{
    agglomerative, cluster_rounds, dunn_index, euclidean, jaccard_similarity, kmeans, purity, Algorithm, Distance,
    DistanceMatrix, EvolvedDescriptor, Linkage, QualityThresholds, RoundInput,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let blob = |cx: f64, cy: f64| (0..6).map(move |i| vec![cx + 0.1 * (i % 3) as f64, cy + 0.1 * (i / 3) as f64]);
    let points: Vec<Vec<f64>> = blob(0.0, 0.0).chain(blob(5.0, 5.0)).collect();

    let km = kmeans(&points, 2, 1, 100, 1e-9)?;
    println!("k-means clusters {:?}", km.clusters());
    println!("objective per iteration {:?}", km.objective_history);

    let dm = DistanceMatrix::euclidean(&points);
    for linkage in [Linkage::Single, Linkage::Complete] {
        let clusters = agglomerative(&dm, 2, linkage)?;
        let dunn = dunn_index(&clusters, |i, j| euclidean(&points[i], &points[j]))?;
        println!("{linkage:?} linkage: {clusters:?}, dunn {dunn:.3}");
    }
    println!("purity of [+,+,+,-]: {}", purity(&[true, true, true, false]));

    let a = EvolvedDescriptor(vec![true, true, false]);
    let b = EvolvedDescriptor(vec![true, false, true]);
    println!("jaccard similarity {:.4}", jaccard_similarity(&a, &b)?);

    let negatives = vec![vec![0.05, 0.05], vec![9.0, 9.0]];
    let rounds = vec![
        RoundInput {
            space: "xy".into(),
            algorithm: Algorithm::KMeans { k: 2, max_iter: 100, tol: 1e-9 },
            distance: Distance::Euclidean,
            positives: points.clone(),
            ids: (0..points.len()).collect(),
            negatives: negatives.clone(),
        },
        RoundInput {
            space: "xy-linkage".into(),
            algorithm: Algorithm::Agglomerative { k: 3, linkage: Linkage::Complete },
            distance: Distance::Euclidean,
            positives: points.clone(),
            ids: (0..points.len()).collect(),
            negatives,
        },
    ];
    let set = cluster_rounds(&rounds, &QualityThresholds::default(), 3)?;
    for r in &set.rounds {
        println!("round {} {}: produced {}, kept {}, dunn {:.3}", r.round, r.space, r.produced, r.kept, r.dunn);
    }
    print!("{}", set.to_csv());
    Ok(())
}
