//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Tolerances are pinned as constants below.

mod common;

use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use classigraph::cluster::{dunn_index, jaccard_similarity, kmeans, purity, EvolvedDescriptor};
use classigraph::inference::detect_concept;
use classigraph::learner::{accuracy, adaboost_reweight, alpha, train, weighted_error, EpochSpec, LogisticProblem, TrainConfig, TrainOutcome};
use classigraph::model_io::{load_model, save_model};
use classigraph::selftest::{compare_evaluators, logistic_instance, oracle_case, random_image, reweight_instance, shared_subgraph_fixture};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_CASES: u64 = 200;
const ORACLE_TOL: f64 = 1e-12;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const SHARED_RATIO_MIN: f64 = 2.0;
const ALPHA_TOL: f64 = 1e-12;
const HALF_TOL: f64 = 1e-9;
const WEIGHT_SUM_TOL: f64 = 1e-12;
const REWEIGHT_INSTANCES: usize = 100;
const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-5;
const FD_INSTANCES: usize = 50;
const DUNN_TARGET: f64 = 9.0;
const DUNN_TOL: f64 = 1e-12;
const PART_ACC_MIN: f64 = 0.95;
const WHOLE_ACC_MIN: f64 = 0.90;
const TRAIN_BUDGET: Duration = Duration::from_secs(600);
const PERSIST_IMAGES: usize = 20;
const SEED: u64 = 7;

type Outcome = Result<(bool, String), String>;

fn report(id: u32, name: &str, outcome: Outcome) -> bool {
    let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    println!("criterion {id} {name}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    ok
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..ORACLE_CASES {
        let (g, root, image) = oracle_case(SEED, i);
        assert!(g.concept_count() <= 6 && image.width() <= 32 && image.height() <= 32);
        let c = compare_evaluators(&g, root, &image);
        worst = worst.max((c.memo - c.naive).abs()).max((c.parallel - c.naive).abs());
    }
    let took = start.elapsed();
    Ok((worst <= ORACLE_TOL && took < ORACLE_BUDGET, format!("{ORACLE_CASES} cases, max |diff| {worst:e}, {:.2}s", took.as_secs_f64())))
}

fn single_call() -> Outcome {
    let mut max_evals = 0;
    for i in 0..ORACLE_CASES {
        let (g, root, image) = oracle_case(SEED, i);
        let c = compare_evaluators(&g, root, &image);
        max_evals = max_evals.max(c.memo_max_evaluations).max(c.parallel_max_evaluations);
    }
    let (g, root) = shared_subgraph_fixture();
    let c = compare_evaluators(&g, root, &random_image(&mut ChaCha8Rng::seed_from_u64(SEED), 24, 24));
    let ratio = c.naive_leaf_evaluations as f64 / c.memo_leaf_evaluations as f64;
    Ok((
        max_evals <= 1 && c.memo_max_evaluations <= 1 && ratio >= SHARED_RATIO_MIN,
        format!("max per-key evaluations {max_evals}, shared fixture leaf evaluations naive {} memo {} (ratio {ratio:.2})", c.naive_leaf_evaluations, c.memo_leaf_evaluations),
    ))
}

fn boosting_identities() -> Outcome {
    let a_half = alpha(0.5);
    let a_quarter = (alpha(0.25) - 3f64.ln()).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut worst_half, mut worst_sum): (f64, f64) = (0.0, 0.0);
    for _ in 0..REWEIGHT_INSTANCES {
        let (w, pred, labels) = reweight_instance(&mut rng);
        worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
        // error recomputed here rather than through the library
        let err: f64 = w.iter().zip(&pred).zip(&labels).filter(|((_, p), l)| p != l).map(|((w, _), _)| w).sum();
        let next = adaboost_reweight(&w, &pred, &labels, alpha(err));
        let after: f64 = next.iter().zip(&pred).zip(&labels).filter(|((_, p), l)| p != l).map(|((w, _), _)| w).sum();
        worst_half = worst_half.max((after - 0.5).abs());
        worst_sum = worst_sum.max((next.iter().sum::<f64>() - 1.0).abs());
        assert_eq!(weighted_error(&w, &pred, &labels).to_bits(), err.to_bits());
    }
    Ok((
        a_half == 0.0 && a_quarter <= ALPHA_TOL && worst_half <= HALF_TOL && worst_sum <= WEIGHT_SUM_TOL,
        format!("alpha(0.5) = {a_half}, |alpha(0.25) - ln 3| = {a_quarter:e}, max |err' - 1/2| = {worst_half:e}, max |sum w - 1| = {worst_sum:e}"),
    ))
}

/// Weighted logistic loss written out independently of the library.
fn reference_loss(x: &[Vec<f64>], y: &[bool], w: &[f64], l2: f64, theta: &[f64]) -> f64 {
    let d = theta.len() - 1;
    let data: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((row, &yi), &wi)| {
            let z: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + theta[d];
            let nll = if yi { (1.0 + (-z).exp()).ln() } else { (1.0 + z.exp()).ln() };
            wi * nll
        })
        .sum();
    data + l2 * theta[..d].iter().map(|t| t * t).sum::<f64>()
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..FD_INSTANCES {
        let (x, y, w, l2, theta) = logistic_instance(&mut rng);
        let p = LogisticProblem::new(&x, &y, &w, l2).map_err(|e| e.to_string())?;
        let lib = p.loss(&theta);
        let ours = reference_loss(&x, &y, &w, l2, &theta);
        if (lib - ours).abs() > 1e-10 * ours.abs().max(1.0) {
            return Ok((false, format!("library loss {lib} disagrees with reference {ours}")));
        }
        let g = p.gradient(&theta);
        for j in 0..theta.len() {
            let (mut up, mut down) = (theta.clone(), theta.clone());
            up[j] += FD_STEP;
            down[j] -= FD_STEP;
            let fd = (reference_loss(&x, &y, &w, l2, &up) - reference_loss(&x, &y, &w, l2, &down)) / (2.0 * FD_STEP);
            worst = worst.max((fd - g[j]).abs() / g[j].abs().max(fd.abs()).max(1.0));
        }
    }
    Ok((worst <= FD_TOL, format!("{FD_INSTANCES} instances, h = {FD_STEP:e}, max relative gap {worst:e}")))
}

fn clustering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut monotone = true;
    let mut runs = 0;
    for _ in 0..50 {
        let n = rng.gen_range(4..40);
        let data: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        let k = rng.gen_range(1..=4);
        let r = kmeans(&data, k, rng.gen(), 100, 0.0).map_err(|e| e.to_string())?;
        monotone &= r.objective_history.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12));
        runs += 1;
    }
    let blobs: Vec<Vec<f64>> = (0..10).map(|i| if i < 5 { vec![0.1 * i as f64, 0.0] } else { vec![20.0 + 0.1 * i as f64, 20.0] }).collect();
    let mut exact = true;
    for s in 0..20 {
        let r = kmeans(&blobs, 2, s, 100, 1e-12).map_err(|e| e.to_string())?;
        let mut got = r.clusters();
        got.sort();
        exact &= got == vec![vec![0, 1, 2, 3, 4], vec![5, 6, 7, 8, 9]];
    }
    // points 0, 0.1 | 1.0, 1.1: separation 0.9 over diameter 0.1
    let xs = [0.0, 0.1, 1.0, 1.1];
    let dunn = dunn_index(&[vec![0, 1], vec![2, 3]], |i, j| f64::abs(xs[i] - xs[j])).map_err(|e| e.to_string())?;
    let purities = [purity(&[true, true, true, false]), purity(&[true; 4]), purity(&[false, false]), purity(&[true, false])];
    let pure = purities == [0.75, 1.0, 0.0, 0.5];
    Ok((
        monotone && exact && (dunn - DUNN_TARGET).abs() <= DUNN_TOL && pure,
        format!("{runs} k-means runs monotone {monotone}, two-blob exact {exact}, dunn {dunn} (|diff| {:e}), purities {purities:?}", (dunn - DUNN_TARGET).abs()),
    ))
}

struct EndToEnd {
    outcome: TrainOutcome,
    took: Duration,
}

fn part_whole_config() -> TrainConfig {
    TrainConfig {
        seed: SEED,
        epochs: ["disc", "bar", "face"].iter().map(|c| EpochSpec { class: c.to_string(), subset: Default::default() }).collect(),
        ..TrainConfig::default()
    }
}

fn end_to_end(run: &Result<EndToEnd, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let test = common::datasets(&["disc", "bar", "face"], "test");
    let mut details = Vec::new();
    let mut ok = run.took < TRAIN_BUDGET;
    for r in &run.outcome.reports {
        let acc = accuracy(&run.outcome.state.graph, r.concept, &test[&r.class]).map_err(|e| e.to_string())?;
        let min = if r.class == "face" { WHOLE_ACC_MIN } else { PART_ACC_MIN };
        ok &= acc >= min;
        if r.class == "face" {
            ok &= r.spawned_parents() >= 1;
            details.push(format!("{} {acc:.3} (>= {min}), {} spawned parent(s)", r.class, r.spawned_parents()));
        } else {
            details.push(format!("{} {acc:.3} (>= {min})", r.class));
        }
    }
    details.push(format!(
        "training {:.1}s on {} thread(s)",
        run.took.as_secs_f64(),
        rayon::current_num_threads()
    ));
    Ok((ok, details.join(", ")))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("train.json");
    fs::write(
        &cfg,
        r#"{"epochs": [{"class": "disc"}, {"class": "bar"}, {"class": "face"}], "data": {"seed": 17, "hard_negatives": {"face": ["cart"]}}}"#,
    )
    .map_err(|e| e.to_string())?;
    let manifest = common::manifest();
    let mut files = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "1"), ("c", "4"), ("d", "4")] {
        let out = dir.path().join(format!("{name}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_classigraph"))
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--data")
            .arg(&manifest)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "7", "--workers", workers])
            .env_remove("CLASSIGRAPH_WORKERS")
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        files.push(fs::read(&out).map_err(|e| e.to_string())?);
    }
    let same = files.windows(2).all(|w| w[0] == w[1]);
    Ok((same, format!("4 runs (--workers 1, 1, 4, 4), {} bytes each, identical {same}", files[0].len())))
}

fn persistence(run: &Result<EndToEnd, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.json");
    let state = &run.outcome.state;
    save_model(&state.graph, &state.pool, None, &path).map_err(|e| e.to_string())?;
    let loaded = load_model(&path).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..PERSIST_IMAGES {
        let image = random_image(&mut rng, 64, 64);
        for c in state.graph.concepts() {
            let a = detect_concept(&state.graph, c.id, &image).map_err(|e| e.to_string())?;
            let b = detect_concept(&loaded.graph, c.id, &image).map_err(|e| e.to_string())?;
            worst = worst.max((a - b).abs());
        }
    }
    let identical = loaded.graph == state.graph && loaded.pool == state.pool;
    Ok((
        identical && worst == 0.0,
        format!("{PERSIST_IMAGES} images x {} concepts, max score difference {worst}, field-identical {identical}", state.graph.concept_count()),
    ))
}

fn evolving_distance(run: &Result<EndToEnd, String>) -> Outcome {
    let d = |v: &[u8]| EvolvedDescriptor(v.iter().map(|&b| b == 1).collect());
    let s = |a: &[u8], b: &[u8]| jaccard_similarity(&d(a), &d(b)).map_err(|e| e.to_string());
    let fixtures = [s(&[1, 1, 0], &[1, 1, 0])?, s(&[1, 0, 0], &[0, 1, 1])?, s(&[1, 1, 0], &[1, 0, 1])?];
    let exact = fixtures == [1.0, 0.0, 1.0 / 3.0];
    let run = run.as_ref().map_err(Clone::clone)?;
    let face = run.outcome.reports.iter().find(|r| r.class == "face").ok_or("no face epoch")?;
    let evolved = face.rounds.iter().find(|r| r.space == "evolved");
    Ok((
        exact && evolved.is_some(),
        format!(
            "fixtures {fixtures:?}; face epoch rounds [{}]",
            face.rounds.iter().map(|r| format!("{}: {} produced, {} kept", r.space, r.produced, r.kept)).collect::<Vec<_>>().join("; ")
        ),
    ))
}

fn main() -> ExitCode {
    let mut ok = true;
    ok &= report(1, "oracle equivalence", oracle_equivalence());
    ok &= report(2, "single-call guarantee", single_call());
    ok &= report(3, "boosting identities", boosting_identities());
    ok &= report(4, "gradient check", gradient_check());
    ok &= report(5, "clustering", clustering());

    let config = part_whole_config();
    let data = common::datasets(&["disc", "bar", "face"], "train");
    let start = Instant::now();
    let run = train(&data, &config).map(|outcome| EndToEnd { outcome, took: start.elapsed() }).map_err(|e| e.to_string());
    ok &= report(6, "end-to-end part-whole", end_to_end(&run));
    ok &= report(7, "determinism", determinism());
    ok &= report(8, "persistence", persistence(&run));
    ok &= report(9, "evolving distance", evolving_distance(&run));
    println!("acceptance: {}", if ok { "all criteria pass" } else { "FAILURES" });
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
