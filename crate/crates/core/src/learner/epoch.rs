//! The epoch loop: cluster the positives, boost a new composite over the
//! pool, add it to the graph and spawn random copies of it into the pool.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boost::{clusterboost, BoostConfig, Candidate, CandidateInputs, CandidateRule, Selection};
use super::{LearnError, Sample};
use crate::cluster::{
    cluster_rounds, Algorithm, ClusterSet, Distance, EvolvedDescriptor, Linkage, QualityThresholds, RoundInput,
    RoundSummary,
};
use crate::features::{InitialFeature, PreparedImage};
use crate::graph::{
    seed_initial_pool, spawn_feature_nodes, validate_graph, ClassifierGraph, ConceptId, ConceptKind, FeatureId,
    FeaturePool, FeatureSource, Geometry, GraphParams, InitialPoolConfig, Provenance, Sampler, DEFAULT_DUPLICATE_TOL,
};
use crate::inference::{pooling_frames_inside, Detector};

/// splitmix64 finalizer over `seed ^ tag`.
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    /// Clusters requested per round (clamped to the positive count).
    pub k: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub quality: QualityThresholds,
    /// Let negatives join their nearest cluster when measuring purity.
    pub negatives_in_purity: bool,
    pub gradient: InitialFeature,
    pub hue: InitialFeature,
    /// Add a Jaccard round over classifier outputs once the graph has concepts.
    pub evolved: bool,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k: 3,
            kmeans_max_iter: 100,
            kmeans_tol: 1e-9,
            quality: QualityThresholds::default(),
            negatives_in_purity: false,
            gradient: InitialFeature::Gradient { cells: 2, bins: 9 },
            hue: InitialFeature::Hue { cells: 2, bins: 12 },
            evolved: true,
        }
    }
}

/// Which positive clusters an epoch trains on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClusterSubset {
    #[default]
    All,
    /// Clusters whose index is congruent to the epoch number modulo `parts`.
    Rotate { parts: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSpec {
    pub class: String,
    #[serde(default)]
    pub subset: ClusterSubset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpochConfig {
    pub boost: BoostConfig,
    pub sampler: Sampler,
    pub clustering: ClusteringConfig,
    /// Pools larger than this are scanned through a seeded subsample per round.
    pub candidate_budget: usize,
}

impl Default for EpochConfig {
    fn default() -> Self {
        Self {
            boost: BoostConfig::default(),
            sampler: Sampler::desk(),
            clustering: ClusteringConfig::default(),
            candidate_budget: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub graph: GraphParams,
    pub initial_pool: InitialPoolConfig,
    pub duplicate_tol: f64,
    pub epochs: Vec<EpochSpec>,
    pub epoch: EpochConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            graph: GraphParams::default(),
            initial_pool: InitialPoolConfig::default(),
            duplicate_tol: DEFAULT_DUPLICATE_TOL,
            epochs: Vec::new(),
            epoch: EpochConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub graph: ClassifierGraph,
    pub pool: FeaturePool,
    /// Number of completed epochs.
    pub epoch: u32,
    pub seed: u64,
}

impl TrainState {
    /// Empty graph plus the initial candidate pool.
    pub fn initial(config: &TrainConfig) -> Result<Self, LearnError> {
        let mut graph = ClassifierGraph::new(config.graph);
        let mut pool = FeaturePool::new(config.duplicate_tol);
        seed_initial_pool(&mut graph, &mut pool, &config.initial_pool)?;
        Ok(Self { graph, pool, epoch: 0, seed: config.seed })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: u32,
    pub class: String,
    pub samples: usize,
    pub positives: usize,
    pub negatives: usize,
    pub concept: ConceptId,
    pub parents: Vec<FeatureId>,
    pub leaves_added: usize,
    pub selections: Vec<Selection>,
    pub rounds: Vec<RoundReport>,
    pub clusters_kept: usize,
    pub training_error: f64,
    pub pool_before: usize,
    pub pool_after: usize,
    pub spawned: usize,
    pub duplicate_hits: usize,
}

impl EpochReport {
    pub fn spawned_parents(&self) -> usize {
        self.selections.iter().filter(|s| matches!(s.provenance, Provenance::Spawned { .. })).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub space: String,
    pub produced: usize,
    pub kept: usize,
    pub dunn: f64,
}

impl From<&RoundSummary> for RoundReport {
    fn from(r: &RoundSummary) -> Self {
        Self { round: r.round, space: r.space.clone(), produced: r.produced, kept: r.kept, dunn: r.dunn }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub reports: Vec<EpochReport>,
}

impl TrainOutcome {
    /// One row per epoch.
    pub fn report_csv(&self) -> String {
        let mut out = String::from(
            "epoch,class,concept,parents,spawned_parents,training_error,samples,positives,negatives,clusters_kept,pool_size,spawned,duplicate_hits\n",
        );
        for r in &self.reports {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.epoch,
                r.class,
                r.concept.0,
                r.parents.len(),
                r.spawned_parents(),
                r.training_error,
                r.samples,
                r.positives,
                r.negatives,
                r.clusters_kept,
                r.pool_after,
                r.spawned,
                r.duplicate_hits
            ));
        }
        out
    }

    /// One JSON object per boosting round.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            for s in &r.selections {
                let line = serde_json::json!({ "epoch": r.epoch, "class": r.class, "selection": s });
                out.push_str(&line.to_string());
                out.push('\n');
            }
        }
        out
    }
}

fn full_descriptors(samples: &[Sample], feature: &InitialFeature) -> Option<Vec<Vec<f64>>> {
    samples
        .par_iter()
        .map(|s| PreparedImage::new(&s.image).descriptor(feature, &s.image.bounds()).ok().map(|d| d.values))
        .collect()
}

fn evolved_vectors(graph: &ClassifierGraph, samples: &[Sample]) -> Result<Vec<Vec<f64>>, LearnError> {
    let concepts: Vec<ConceptId> = graph.concepts().iter().map(|c| c.id).collect();
    samples
        .par_iter()
        .map(|s| {
            let mut det = Detector::new(graph, &s.image);
            let scores = concepts.iter().map(|&c| det.classify(c)).collect::<Result<Vec<_>, _>>()?;
            Ok(EvolvedDescriptor::from_scores(&scores).as_f64())
        })
        .collect()
}

fn build_rounds(
    graph: &ClassifierGraph,
    samples: &[Sample],
    cfg: &ClusteringConfig,
) -> Result<Vec<RoundInput>, LearnError> {
    let pos: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].positive).collect();
    let neg: Vec<usize> = (0..samples.len()).filter(|&i| !samples[i].positive).collect();
    let split = |all: Vec<Vec<f64>>| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let p = pos.iter().map(|&i| all[i].clone()).collect();
        let n = if cfg.negatives_in_purity { neg.iter().map(|&i| all[i].clone()).collect() } else { Vec::new() };
        (p, n)
    };
    let mut rounds = Vec::new();
    let spaces = [
        ("gradient", cfg.gradient, Algorithm::KMeans { k: cfg.k, max_iter: cfg.kmeans_max_iter, tol: cfg.kmeans_tol }),
        ("hue", cfg.hue, Algorithm::Agglomerative { k: cfg.k, linkage: Linkage::Complete }),
    ];
    for (name, feature, algorithm) in spaces {
        let Some(all) = full_descriptors(samples, &feature) else {
            log::info!("skipping the {name} clustering round: descriptor unavailable on some sample");
            continue;
        };
        let (positives, negatives) = split(all);
        rounds.push(RoundInput { space: name.into(), algorithm, distance: Distance::Euclidean, positives, ids: pos.clone(), negatives });
    }
    if cfg.evolved && graph.concept_count() > 0 {
        let (positives, negatives) = split(evolved_vectors(graph, samples)?);
        rounds.push(RoundInput {
            space: "evolved".into(),
            algorithm: Algorithm::Agglomerative { k: cfg.k, linkage: Linkage::Complete },
            distance: Distance::Jaccard,
            positives,
            ids: pos.clone(),
            negatives,
        });
    }
    Ok(rounds)
}

/// Per-sample inputs of every candidate, computed once per epoch. Initial
/// features are read at their nominal placement; learned features are
/// deep-detected with the whole crop as reference.
fn candidate_inputs(
    graph: &ClassifierGraph,
    samples: &[Sample],
    entries: &[(FeatureId, Provenance)],
) -> Result<Vec<Candidate>, LearnError> {
    let stride = graph.params.lattice_stride;
    let per_sample: Vec<Vec<CandidateValue>> = samples
        .par_iter()
        .map(|s| {
            let scene = PreparedImage::new(&s.image);
            let mut det = Detector::new(graph, &s.image);
            let bounds = s.image.bounds();
            entries
                .iter()
                .map(|&(id, _)| {
                    let node = graph.feature(id).expect("pool entries live in the arena");
                    match node.source {
                        FeatureSource::Initial(feature) => {
                            let g = nominal(&node.geometry);
                            let frames = pooling_frames_inside(&g, &bounds, stride, s.image.width(), s.image.height());
                            let d = match frames.first() {
                                Some(f) => Some(scene.descriptor(&feature, f).map_err(crate::inference::InferenceError::from)?.values),
                                None => None,
                            };
                            Ok(CandidateValue::Descriptor(d))
                        }
                        FeatureSource::Concept(_) => Ok(CandidateValue::Score(det.feature_score(id, &bounds)?)),
                    }
                })
                .collect::<Result<Vec<_>, LearnError>>()
        })
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(entries.len());
    for (k, &(feature, provenance)) in entries.iter().enumerate() {
        let inputs = match per_sample.first().map(|row| &row[k]) {
            Some(CandidateValue::Score(_)) => CandidateInputs::Scores(
                per_sample.iter().map(|row| if let CandidateValue::Score(v) = row[k] { v } else { unreachable!() }).collect(),
            ),
            _ => CandidateInputs::Descriptors(
                per_sample.iter().map(|row| if let CandidateValue::Descriptor(d) = &row[k] { d.clone() } else { unreachable!() }).collect(),
            ),
        };
        out.push(Candidate { feature, provenance, inputs });
    }
    Ok(out)
}

enum CandidateValue {
    Descriptor(Option<Vec<f64>>),
    Score(f64),
}

/// Initial features are read at one placement: the search area is dropped.
fn nominal(g: &Geometry) -> Geometry {
    Geometry { area: [0.0, 0.0], ..*g }
}

fn select_clusters(set: &ClusterSet, subset: ClusterSubset, epoch: u32) -> Vec<Vec<usize>> {
    let all: Vec<Vec<usize>> = set.clusters.iter().map(|c| c.members.clone()).collect();
    match subset {
        ClusterSubset::All => all,
        ClusterSubset::Rotate { parts } => {
            let parts = parts.max(1);
            let picked: Vec<Vec<usize>> =
                all.iter().enumerate().filter(|(i, _)| i % parts == epoch as usize % parts).map(|(_, c)| c.clone()).collect();
            if picked.is_empty() {
                all
            } else {
                picked
            }
        }
    }
}

/// Runs one epoch on a copy of `state`; on error the input state is untouched.
pub fn run_epoch(
    state: &TrainState,
    samples: &[Sample],
    spec: &EpochSpec,
    config: &EpochConfig,
) -> Result<(TrainState, EpochReport), LearnError> {
    let t = state.epoch;
    if !samples.iter().any(|s| s.positive) || !samples.iter().any(|s| !s.positive) {
        return Err(LearnError::OneSided);
    }
    if config.boost.max_parents == 0 || config.boost.max_parents > state.graph.params.max_parents {
        return Err(LearnError::Config(format!(
            "max_parents {} outside 1..={}",
            config.boost.max_parents, state.graph.params.max_parents
        )));
    }
    let seed = derive_seed(state.seed, t as u64);

    let rounds = build_rounds(&state.graph, samples, &config.clustering)?;
    let set = cluster_rounds(&rounds, &config.clustering.quality, derive_seed(seed, 1))?;
    let chosen = select_clusters(&set, spec.subset, t);

    // restrict the epoch's samples to the chosen clusters' positives plus all negatives
    let keep: Vec<usize> = if spec.subset == ClusterSubset::All {
        (0..samples.len()).collect()
    } else {
        let members: std::collections::BTreeSet<usize> = chosen.iter().flatten().copied().collect();
        (0..samples.len()).filter(|i| !samples[*i].positive || members.contains(i)).collect()
    };
    let remap: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let epoch_samples: Vec<Sample> = keep.iter().map(|&i| samples[i].clone()).collect();
    let clusters: Vec<Vec<usize>> = chosen.iter().map(|c| c.iter().map(|m| remap[m]).collect()).collect();
    let labels: Vec<bool> = epoch_samples.iter().map(|s| s.positive).collect();

    let entries: Vec<(FeatureId, Provenance)> = state.pool.entries().iter().map(|e| (e.id, e.provenance)).collect();
    let (scanned, per_round): (Vec<(FeatureId, Provenance)>, Option<Vec<Vec<usize>>>) =
        if entries.len() > config.candidate_budget && config.candidate_budget > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
            let draws: Vec<Vec<usize>> = (0..config.boost.max_parents)
                .map(|_| {
                    let mut v = sample_indices(&mut rng, entries.len(), config.candidate_budget).into_vec();
                    v.sort_unstable();
                    v
                })
                .collect();
            let used: std::collections::BTreeSet<usize> = draws.iter().flatten().copied().collect();
            let used: Vec<usize> = used.into_iter().collect();
            let pos: BTreeMap<usize, usize> = used.iter().enumerate().map(|(k, &e)| (e, k)).collect();
            let rounds = draws.iter().map(|d| d.iter().map(|e| pos[e]).collect()).collect();
            (used.iter().map(|&e| entries[e]).collect(), Some(rounds))
        } else {
            (entries, None)
        };
    let candidates = candidate_inputs(&state.graph, &epoch_samples, &scanned)?;
    let outcome = clusterboost(&labels, &clusters, &candidates, per_round.as_deref(), &config.boost)?;

    let mut next = state.clone();
    let pool_before = next.pool.len();
    let mut parents = Vec::with_capacity(outcome.scorers.len());
    let mut leaves_added = 0;
    for scorer in &outcome.scorers {
        let node = next.graph.feature(scorer.feature).expect("candidate in arena").clone();
        match (node.source, &scorer.rule) {
            (FeatureSource::Initial(feature), CandidateRule::Logistic { weights, bias }) => {
                let leaf = next.graph.add_concept_node(ConceptKind::Leaf { feature, weights: weights.clone(), bias: *bias }, t)?;
                parents.push(next.graph.add_feature_node(FeatureSource::Concept(leaf), nominal(&node.geometry))?);
                leaves_added += 1;
            }
            (FeatureSource::Initial(feature), _) => {
                // an unfittable candidate contributes a constant zero; keep it as a silent leaf
                let dim = feature.dimension();
                let leaf = next.graph.add_concept_node(ConceptKind::Leaf { feature, weights: vec![0.0; dim], bias: -50.0 }, t)?;
                parents.push(next.graph.add_feature_node(FeatureSource::Concept(leaf), nominal(&node.geometry))?);
                leaves_added += 1;
            }
            (FeatureSource::Concept(_), _) => parents.push(scorer.feature),
        }
    }
    let h = next.graph.add_concept_node(
        ConceptKind::Composite { parents: parents.clone(), weights: outcome.composite.weights.clone(), bias: outcome.composite.bias },
        t,
    )?;
    next.graph.register_class(&spec.class, h)?;
    let spawn = spawn_feature_nodes(&mut next.graph, &mut next.pool, h, &config.sampler, derive_seed(seed, 3), t)?;
    if let Err(v) = validate_graph(&next.graph) {
        return Err(LearnError::Config(format!("graph invariants broken after epoch {t}: {v:?}")));
    }
    next.epoch += 1;

    let report = EpochReport {
        epoch: t,
        class: spec.class.clone(),
        samples: epoch_samples.len(),
        positives: labels.iter().filter(|&&l| l).count(),
        negatives: labels.iter().filter(|&&l| !l).count(),
        concept: h,
        parents,
        leaves_added,
        selections: outcome.selections,
        rounds: set.rounds.iter().map(RoundReport::from).collect(),
        clusters_kept: set.clusters.len(),
        training_error: outcome.training_error,
        pool_before,
        pool_after: next.pool.len(),
        spawned: spawn.inserted,
        duplicate_hits: spawn.duplicates,
    };
    log::info!(
        "epoch {t} ({}): c{} with {} parents ({} spawned), training error {:.4}, pool {} -> {}",
        report.class,
        h.0,
        report.parents.len(),
        report.spawned_parents(),
        report.training_error,
        pool_before,
        report.pool_after
    );
    Ok((next, report))
}

/// Runs the epoch schedule in order. `datasets` maps class names to samples.
pub fn train(datasets: &BTreeMap<String, Vec<Sample>>, config: &TrainConfig) -> Result<TrainOutcome, LearnError> {
    let mut state = TrainState::initial(config)?;
    let mut reports = Vec::new();
    for spec in &config.epochs {
        let samples = datasets.get(&spec.class).ok_or_else(|| LearnError::MissingClass(spec.class.clone()))?;
        let (next, report) = run_epoch(&state, samples, spec, &config.epoch)?;
        state = next;
        reports.push(report);
    }
    Ok(TrainOutcome { state, reports })
}

/// Fraction of samples whose whole-crop score of `concept` lands on the
/// right side of 0.5.
pub fn accuracy(graph: &ClassifierGraph, concept: ConceptId, samples: &[Sample]) -> Result<f64, LearnError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let correct: Vec<bool> = samples
        .par_iter()
        .map(|s| Ok((Detector::new(graph, &s.image).classify(concept)? >= 0.5) == s.positive))
        .collect::<Result<_, LearnError>>()?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / samples.len() as f64)
}
