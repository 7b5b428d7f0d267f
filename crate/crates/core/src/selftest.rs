//! Randomized fixtures and the invariant checks run by `classigraph selftest`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::{dunn_index, jaccard_similarity, kmeans, purity, EvolvedDescriptor};
use crate::features::{HaarKind, InitialFeature};
use crate::graph::{ClassifierGraph, ConceptKind, FeatureId, FeaturePool, FeatureSource, Geometry, GraphParams};
use crate::image::Image;
use crate::inference::{deep_detect, deep_detect_parallel, naive_deep_detect, DetectionCache};
use crate::learner::{adaboost_reweight, alpha, weighted_error, LogisticProblem};
use crate::model_io::{model_from_str, model_to_string};

pub fn random_image(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Image {
    // smooth blobs plus noise so every extractor sees structure
    let (cx, cy) = (rng.gen_range(0.0..width as f64), rng.gen_range(0.0..height as f64));
    let tint: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let px = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            let near = (-((x - cx).powi(2) + (y - cy).powi(2)) / 40.0).exp();
            tint.map(|t| (0.6 * near * t + 0.4 * rng.gen::<f64>()).clamp(0.0, 1.0))
        })
        .collect();
    Image::from_rgb(width, height, px).expect("nonempty")
}

fn random_feature(rng: &mut ChaCha8Rng) -> InitialFeature {
    match rng.gen_range(0..3) {
        0 => InitialFeature::Haar { kind: HaarKind::ALL[rng.gen_range(0..4)] },
        1 => InitialFeature::Gradient { cells: rng.gen_range(1..=2), bins: rng.gen_range(3..=9) },
        _ => InitialFeature::Hue { cells: rng.gen_range(1..=2), bins: rng.gen_range(4..=12) },
    }
}

fn random_geometry(rng: &mut ChaCha8Rng) -> Geometry {
    let s = [0.3, 0.5, 0.7, 1.0][rng.gen_range(0..4)];
    let a = [0.0, 0.05, 0.1, 0.15][rng.gen_range(0..4)];
    // mostly placements that fit inside the reference, sometimes anywhere
    let mut loc = || if rng.gen_bool(0.85) { s / 2.0 + rng.gen::<f64>() * (1.0 - s) } else { rng.gen() };
    let location = [loc(), loc()];
    Geometry::new(location, [s, s], [a, a])
}

/// A random graph of `1..=max_concepts` concepts plus a feature node on its
/// last concept, which is returned as the evaluation root.
pub fn random_graph(rng: &mut ChaCha8Rng, max_concepts: usize) -> (ClassifierGraph, FeatureId) {
    let params = GraphParams { max_parents: 3, lattice_stride: rng.gen_range(1..=2) };
    let mut g = ClassifierGraph::new(params);
    let n = rng.gen_range(1..=max_concepts.max(1));
    for i in 0..n {
        let kind = if i == 0 || rng.gen_bool(0.35) {
            let feature = random_feature(rng);
            let weights = (0..feature.dimension()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            ConceptKind::Leaf { feature, weights, bias: rng.gen_range(-1.0..1.0) }
        } else {
            let k = rng.gen_range(1..=2);
            let parents: Vec<FeatureId> = (0..k)
                .map(|_| {
                    let target = g.concepts()[rng.gen_range(0..i)].id;
                    let geometry = random_geometry(rng);
                    g.add_feature_node(FeatureSource::Concept(target), geometry).expect("valid geometry")
                })
                .collect();
            let weights = (0..k).map(|_| rng.gen_range(-4.0..4.0)).collect();
            ConceptKind::Composite { parents, weights, bias: rng.gen_range(-2.0..2.0) }
        };
        g.add_concept_node(kind, i as u32).expect("well-formed random concept");
    }
    let last = g.concepts()[n - 1].id;
    let root = g.add_feature_node(FeatureSource::Concept(last), random_geometry(rng)).expect("valid geometry");
    (g, root)
}

/// A leaf shared by two mid-level composites that a top composite combines,
/// so a cache-free evaluation reaches the leaf along two paths.
pub fn shared_subgraph_fixture() -> (ClassifierGraph, FeatureId) {
    let mut g = ClassifierGraph::new(GraphParams { max_parents: 3, lattice_stride: 1 });
    let leaf = g
        .add_concept_node(ConceptKind::Leaf { feature: InitialFeature::Haar { kind: HaarKind::TwoRectHoriz }, weights: vec![4.0], bias: 0.0 }, 0)
        .expect("leaf");
    let area = Geometry::new([0.5, 0.5], [0.5, 0.5], [0.25, 0.25]);
    let fl = g.add_feature_node(FeatureSource::Concept(leaf), area).expect("feature");
    let a = g.add_concept_node(ConceptKind::Composite { parents: vec![fl], weights: vec![2.0], bias: -1.0 }, 1).expect("mid");
    let b = g.add_concept_node(ConceptKind::Composite { parents: vec![fl], weights: vec![-1.0], bias: 0.5 }, 1).expect("mid");
    let fa = g.add_feature_node(FeatureSource::Concept(a), area).expect("feature");
    let fb = g.add_feature_node(FeatureSource::Concept(b), area).expect("feature");
    let top = g.add_concept_node(ConceptKind::Composite { parents: vec![fa, fb], weights: vec![1.0, 1.0], bias: 0.0 }, 2).expect("top");
    let root = g.add_feature_node(FeatureSource::Concept(top), Geometry::IDENTITY).expect("root");
    (g, root)
}

/// Scores and counters of one evaluator comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleCase {
    pub memo: f64,
    pub naive: f64,
    pub parallel: f64,
    pub memo_max_evaluations: u32,
    pub parallel_max_evaluations: u32,
    pub memo_leaf_evaluations: u64,
    pub naive_leaf_evaluations: u64,
}

pub fn compare_evaluators(graph: &ClassifierGraph, root: FeatureId, image: &Image) -> OracleCase {
    let reference = image.bounds();
    let mut cache = DetectionCache::new();
    let memo = deep_detect(graph, root, image, &reference, &mut cache).expect("evaluable fixture");
    let (naive, counters) = naive_deep_detect(graph, root, image, &reference).expect("evaluable fixture");
    let mut par_cache = DetectionCache::new();
    let parallel = deep_detect_parallel(graph, root, image, &reference, &mut par_cache).expect("evaluable fixture");
    OracleCase {
        memo,
        naive,
        parallel,
        memo_max_evaluations: cache.max_evaluations(),
        parallel_max_evaluations: par_cache.max_evaluations(),
        memo_leaf_evaluations: cache.leaf_evaluations,
        naive_leaf_evaluations: counters.leaf_evaluations,
    }
}

/// Case `i` of the randomized evaluator comparison.
pub fn oracle_case(seed: u64, i: u64) -> (ClassifierGraph, FeatureId, Image) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(i));
    let (g, root) = random_graph(&mut rng, 6);
    let (w, h) = (rng.gen_range(8..=32), rng.gen_range(8..=32));
    let image = random_image(&mut rng, w, h);
    (g, root, image)
}

/// A random weighted logistic instance and a parameter point.
pub fn logistic_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<bool>, Vec<f64>, f64, Vec<f64>) {
    let n = rng.gen_range(5..40);
    let d = rng.gen_range(1..6);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let mut y: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
    y[0] = true;
    y[1] = false;
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let l2 = rng.gen_range(0.0..0.1);
    let theta: Vec<f64> = (0..=d).map(|_| rng.gen_range(-1.5..1.5)).collect();
    (x, y, w, l2, theta)
}

/// Largest relative gap between the analytic gradient and central
/// differences with step `h`, relative to `max(|g|, 1)`.
pub fn gradient_check_error(x: &[Vec<f64>], y: &[bool], w: &[f64], l2: f64, theta: &[f64], h: f64) -> f64 {
    let p = LogisticProblem::new(x, y, w, l2).expect("valid instance");
    let g = p.gradient(theta);
    let mut worst: f64 = 0.0;
    for j in 0..theta.len() {
        let mut up = theta.to_vec();
        let mut down = theta.to_vec();
        up[j] += h;
        down[j] -= h;
        let fd = (p.loss(&up) - p.loss(&down)) / (2.0 * h);
        worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1.0));
    }
    worst
}

/// Normalized random weights, labels and predictions whose weighted error
/// lies strictly inside the clamp range.
pub fn reweight_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>, Vec<bool>) {
    loop {
        let n = rng.gen_range(2..60);
        let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let labels: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let pred: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let err = weighted_error(&w, &pred, &labels);
        if err > crate::learner::ERR_EPS && err < 1.0 - crate::learner::ERR_EPS {
            return (w, pred, labels);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check_evaluators(seed: u64, cases: u64) -> (Check, Check) {
    let mut worst: f64 = 0.0;
    let mut max_evals = 0;
    for i in 0..cases {
        let (g, root, image) = oracle_case(seed, i);
        let c = compare_evaluators(&g, root, &image);
        worst = worst.max((c.memo - c.naive).abs()).max((c.parallel - c.naive).abs());
        max_evals = max_evals.max(c.memo_max_evaluations).max(c.parallel_max_evaluations);
    }
    let (g, root) = shared_subgraph_fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared = compare_evaluators(&g, root, &random_image(&mut rng, 24, 24));
    let ratio = shared.naive_leaf_evaluations as f64 / shared.memo_leaf_evaluations.max(1) as f64;
    (
        Check {
            name: "oracle-equivalence",
            passed: worst <= 1e-12,
            detail: format!("{cases} random cases, max |memo - naive| = {worst:e}"),
        },
        Check {
            name: "single-call",
            passed: max_evals <= 1 && shared.memo_max_evaluations <= 1 && ratio >= 2.0,
            detail: format!("max evaluations per key {max_evals}, shared fixture naive/memo leaf ratio {ratio:.2}"),
        },
    )
}

fn check_boosting(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_half: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for _ in 0..100 {
        let (w, pred, labels) = reweight_instance(&mut rng);
        let a = alpha(weighted_error(&w, &pred, &labels));
        let next = adaboost_reweight(&w, &pred, &labels, a);
        worst_half = worst_half.max((weighted_error(&next, &pred, &labels) - 0.5).abs());
        worst_sum = worst_sum.max((next.iter().sum::<f64>() - 1.0).abs());
    }
    let ok = alpha(0.5) == 0.0 && (alpha(0.25) - 3f64.ln()).abs() <= 1e-12 && worst_half <= 1e-9 && worst_sum <= 1e-12;
    Check { name: "boosting-identities", passed: ok, detail: format!("|err' - 1/2| <= {worst_half:e}, |sum w - 1| <= {worst_sum:e}") }
}

fn check_gradient(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let worst = (0..50)
        .map(|_| {
            let (x, y, w, l2, theta) = logistic_instance(&mut rng);
            gradient_check_error(&x, &y, &w, l2, &theta, 1e-5)
        })
        .fold(0.0, f64::max);
    Check { name: "gradient-check", passed: worst <= 1e-5, detail: format!("50 instances, worst relative gap {worst:e}") }
}

fn check_clustering(seed: u64) -> Check {
    let xs: [f64; 4] = [0.0, 0.1, 1.0, 1.1];
    let dunn = dunn_index(&[vec![0, 1], vec![2, 3]], |i, j| (xs[i] - xs[j]).abs()).unwrap_or(f64::NAN);
    let blobs: Vec<Vec<f64>> = [0.05, -0.1, 0.0, 0.1, -0.03, 10.1, 9.9, 10.0, 10.04, 9.95].iter().map(|&v| vec![v]).collect();
    let mut monotone = true;
    let mut exact = true;
    for s in 0..20 {
        let r = kmeans(&blobs, 2, seed.wrapping_add(s), 100, 1e-12).expect("k <= n");
        monotone &= r.objective_history.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12) + 1e-12);
        exact &= r.assignments[..5].iter().all(|&a| a == r.assignments[0])
            && r.assignments[5..].iter().all(|&a| a == r.assignments[5])
            && r.assignments[0] != r.assignments[5];
    }
    let pure = purity(&[true, true, true, false]) == 0.75 && purity(&[true; 3]) == 1.0 && purity(&[false; 3]) == 0.0;
    let ok = (dunn - 9.0).abs() <= 1e-12 && monotone && exact && pure;
    Check {
        name: "clustering",
        passed: ok,
        detail: format!("dunn {dunn}, monotone {monotone}, two-blob exact {exact}, purity fixtures {pure}"),
    }
}

fn check_jaccard() -> Check {
    let d = |v: [u8; 3]| EvolvedDescriptor(v.iter().map(|&b| b == 1).collect());
    let same = jaccard_similarity(&d([1, 0, 1]), &d([1, 0, 1])).ok();
    let disjoint = jaccard_similarity(&d([1, 0, 0]), &d([0, 1, 1])).ok();
    let third = jaccard_similarity(&d([1, 0, 1]), &d([1, 1, 0])).ok();
    Check {
        name: "jaccard",
        passed: same == Some(1.0) && disjoint == Some(0.0) && third == Some(1.0 / 3.0),
        detail: format!("{same:?} {disjoint:?} {third:?}"),
    }
}

fn check_persistence(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut identical = true;
    for _ in 0..20 {
        let (g, root) = random_graph(&mut rng, 6);
        let pool = FeaturePool::default();
        let m = model_from_str(&model_to_string(&g, &pool, None));
        let Ok(m) = m else {
            identical = false;
            continue;
        };
        identical &= m.graph == g;
        let (w, h) = (rng.gen_range(8..=32), rng.gen_range(8..=32));
        let image = random_image(&mut rng, w, h);
        let before = deep_detect(&g, root, &image, &image.bounds(), &mut DetectionCache::new()).expect("evaluable");
        let after = deep_detect(&m.graph, root, &image, &image.bounds(), &mut DetectionCache::new()).expect("evaluable");
        worst = worst.max((before - after).abs());
    }
    Check { name: "persistence", passed: identical && worst == 0.0, detail: format!("20 graphs, identical {identical}, max score change {worst}") }
}

/// Runs every check with `seed`.
pub fn run_selftest(seed: u64) -> SelftestReport {
    let (oracle, single) = check_evaluators(seed, 200);
    SelftestReport {
        checks: vec![oracle, single, check_boosting(seed), check_gradient(seed), check_clustering(seed), check_jaccard(), check_persistence(seed)],
    }
}
