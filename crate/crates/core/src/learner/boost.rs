//! Cluster-guided boosting: each round targets the positive cluster carrying
//! the most weight, picks the candidate feature that best separates it from
//! the negatives, and re-weights the samples Adaboost-style.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::{fit_logistic, LogisticFit, LogisticParams};
use super::LearnError;
use crate::graph::{FeatureId, Provenance};

/// Errors are clamped to `[ERR_EPS, 1 - ERR_EPS]` before taking the log-odds.
pub const ERR_EPS: f64 = 1e-6;

pub fn clamp_error(err: f64) -> f64 {
    err.clamp(ERR_EPS, 1.0 - ERR_EPS)
}

/// `log((1 - err) / err)` on the clamped error.
pub fn alpha(err: f64) -> f64 {
    let e = clamp_error(err);
    ((1.0 - e) / e).ln()
}

pub fn weighted_error(weights: &[f64], predictions: &[bool], labels: &[bool]) -> f64 {
    weights.iter().zip(predictions.iter().zip(labels)).filter(|(_, (p, l))| p != l).fold(0.0, |acc, (w, _)| acc + w)
}

/// `w_i * exp(alpha * [y_i != F(x_i)])`, renormalized to sum to one.
pub fn adaboost_reweight(weights: &[f64], predictions: &[bool], labels: &[bool], alpha: f64) -> Vec<f64> {
    let scale = alpha.exp();
    let raw: Vec<f64> = weights
        .iter()
        .zip(predictions.iter().zip(labels))
        .map(|(&w, (p, l))| if p != l { w * scale } else { w })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Index of the cluster with the largest weight sum; ties go to the lowest index.
pub fn heaviest_cluster(clusters: &[Vec<usize>], weights: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in clusters.iter().enumerate() {
        let mass: f64 = c.iter().map(|&s| weights[s]).sum();
        if best.is_none_or(|(_, m)| mass > m) {
            best = Some((i, mass));
        }
    }
    best
}

/// What a candidate produces on each sample, independent of the weights.
#[derive(Clone, Debug, PartialEq)]
pub enum CandidateInputs {
    /// Descriptor of an initial feature at the candidate's placement, or
    /// `None` where the placement leaves the sample.
    Descriptors(Vec<Option<Vec<f64>>>),
    /// Pooled score of a learned feature.
    Scores(Vec<f64>),
}

impl CandidateInputs {
    pub fn len(&self) -> usize {
        match self {
            CandidateInputs::Descriptors(d) => d.len(),
            CandidateInputs::Scores(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CandidateRule {
    /// Logistic over the descriptor, positive at output >= 0.5.
    Logistic { weights: Vec<f64>, bias: f64 },
    /// Positive when the score is at least the threshold.
    Threshold(f64),
    /// No usable training data; always negative.
    Never,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateScorer {
    pub feature: FeatureId,
    pub rule: CandidateRule,
    /// Weighted error over all samples.
    pub error: f64,
    /// Value this candidate feeds into a composite, per sample.
    pub outputs: Vec<f64>,
    pub predictions: Vec<bool>,
}

impl CandidateScorer {
    pub fn clamped_error(&self) -> f64 {
        clamp_error(self.error)
    }
}

/// Threshold minimizing the weighted error of `score >= t` over `idx`;
/// ties go to the lower threshold. Returns `(threshold, error)`.
pub fn best_threshold(scores: &[f64], labels: &[bool], weights: &[f64], idx: &[usize]) -> (f64, f64) {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    // everything predicted positive at the lowest threshold
    let mut err: f64 = order.iter().filter(|&&i| !labels[i]).map(|&i| weights[i]).sum();
    let mut best = (order.first().map_or(f64::INFINITY, |&i| scores[i]), err);
    let mut k = 0;
    while k < order.len() {
        let v = scores[order[k]];
        while k < order.len() && scores[order[k]] == v {
            let i = order[k];
            err += if labels[i] { weights[i] } else { -weights[i] };
            k += 1;
        }
        let next = if k < order.len() { scores[order[k]] } else { f64::INFINITY };
        if err < best.1 {
            best = (next, err);
        }
    }
    best
}

fn renormalized(weights: &[f64], idx: &[usize]) -> Vec<f64> {
    let total: f64 = idx.iter().map(|&i| weights[i]).sum();
    let mut out = vec![0.0; weights.len()];
    if total > 0.0 {
        for &i in idx {
            out[i] = weights[i] / total;
        }
    }
    out
}

/// Fits the candidate's rule on the target cluster plus every negative
/// (weights restricted to that set and renormalized), then scores the
/// rule on all samples with the full weights.
pub fn evaluate_candidate(
    feature: FeatureId,
    inputs: &CandidateInputs,
    labels: &[bool],
    weights: &[f64],
    target: &[usize],
    params: &LogisticParams,
) -> Result<CandidateScorer, LearnError> {
    if target.is_empty() {
        return Err(LearnError::EmptyCluster);
    }
    if inputs.len() != labels.len() || weights.len() != labels.len() {
        return Err(LearnError::LengthMismatch(format!("{} inputs, {} labels, {} weights", inputs.len(), labels.len(), weights.len())));
    }
    let mut train: Vec<usize> = target.to_vec();
    train.extend((0..labels.len()).filter(|&i| !labels[i]));
    train.sort_unstable();
    train.dedup();
    let local = renormalized(weights, &train);
    let (rule, outputs) = match inputs {
        CandidateInputs::Scores(scores) => {
            let (t, _) = best_threshold(scores, labels, &local, &train);
            (CandidateRule::Threshold(t), scores.clone())
        }
        CandidateInputs::Descriptors(desc) => {
            let usable: Vec<usize> = train.iter().copied().filter(|&i| desc[i].is_some()).collect();
            let x: Vec<Vec<f64>> = usable.iter().map(|&i| desc[i].clone().expect("usable")).collect();
            let y: Vec<bool> = usable.iter().map(|&i| labels[i]).collect();
            let w: Vec<f64> = usable.iter().map(|&i| local[i]).collect();
            match fit_logistic(&x, &y, &w, params) {
                Ok(LogisticFit { weights: fw, bias, .. }) => {
                    let outputs = desc
                        .iter()
                        .map(|d| d.as_ref().map_or(0.0, |v| crate::inference::logistic_output(&fw, bias, v.iter().copied())))
                        .collect();
                    (CandidateRule::Logistic { weights: fw, bias }, outputs)
                }
                Err(LearnError::OneSided) => (CandidateRule::Never, vec![0.0; labels.len()]),
                Err(e) => return Err(e),
            }
        }
    };
    let predictions: Vec<bool> = match &rule {
        CandidateRule::Threshold(t) => outputs.iter().map(|s| s >= t).collect(),
        CandidateRule::Logistic { .. } => outputs.iter().map(|&o| o >= 0.5).collect(),
        CandidateRule::Never => vec![false; labels.len()],
    };
    let error = weighted_error(weights, &predictions, labels);
    Ok(CandidateScorer { feature, rule, error, outputs, predictions })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub feature: FeatureId,
    pub provenance: Provenance,
    pub inputs: CandidateInputs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    /// Maximum number of parents (boosting rounds).
    pub max_parents: usize,
    /// Fitting parameters of initial-feature candidates.
    pub candidate_logistic: LogisticParams,
    /// Fitting parameters of the final composite.
    pub refit: LogisticParams,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            max_parents: 5,
            candidate_logistic: LogisticParams { l2: 1e-3, tol: 1e-6, max_iter: 50 },
            refit: LogisticParams::default(),
        }
    }
}

/// One boosting round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub round: usize,
    pub cluster: usize,
    pub cluster_weight: f64,
    pub feature: FeatureId,
    pub provenance: Provenance,
    pub error: f64,
    pub alpha: f64,
    pub scanned: usize,
    /// Training error of the weighted vote of the rounds so far.
    pub ensemble_error: f64,
    /// Weighted error of this round's pick under the updated weights.
    pub error_after_reweight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoostOutcome {
    pub selections: Vec<Selection>,
    pub scorers: Vec<CandidateScorer>,
    /// Composite logistic over the selected outputs, in selection order.
    pub composite: LogisticFit,
    /// Error of the composite at 0.5 on the training samples (unweighted).
    pub training_error: f64,
    pub final_weights: Vec<f64>,
}

/// Runs up to `max_parents` rounds. `rounds[k]` lists the candidate indices
/// scanned in round `k` (all of them when shorter than `max_parents`).
pub fn clusterboost(
    labels: &[bool],
    clusters: &[Vec<usize>],
    candidates: &[Candidate],
    rounds: Option<&[Vec<usize>]>,
    config: &BoostConfig,
) -> Result<BoostOutcome, LearnError> {
    let n = labels.len();
    if clusters.is_empty() || clusters.iter().any(|c| c.is_empty()) {
        return Err(LearnError::EmptyCluster);
    }
    if clusters.iter().flatten().any(|&i| i >= n || !labels[i]) {
        return Err(LearnError::ClusterNotPositive);
    }
    if !labels.iter().any(|&l| !l) {
        return Err(LearnError::OneSided);
    }
    if candidates.is_empty() {
        return Err(LearnError::PoolExhausted);
    }
    let mut weights = vec![1.0 / n as f64; n];
    let mut selections: Vec<Selection> = Vec::new();
    let mut scorers: Vec<CandidateScorer> = Vec::new();
    let mut vote = vec![0.0; n];
    let all: Vec<usize> = (0..candidates.len()).collect();
    for round in 0..config.max_parents {
        let (cluster, cluster_weight) = heaviest_cluster(clusters, &weights).expect("nonempty clusters");
        let target = &clusters[cluster];
        let scan: &[usize] = rounds.and_then(|r| r.get(round)).map_or(&all, |v| v.as_slice());
        let open: Vec<usize> =
            scan.iter().copied().filter(|&c| !selections.iter().any(|s| s.feature == candidates[c].feature)).collect();
        if open.is_empty() {
            return Err(LearnError::PoolExhausted);
        }
        let evaluated: Vec<CandidateScorer> = open
            .par_iter()
            .map(|&c| {
                let cand = &candidates[c];
                evaluate_candidate(cand.feature, &cand.inputs, labels, &weights, target, &config.candidate_logistic)
            })
            .collect::<Result<_, _>>()?;
        // order-fixed argmin: lowest error, then lowest feature id
        let (pick, best) = evaluated
            .into_iter()
            .zip(&open)
            .min_by(|(a, _), (b, _)| a.error.total_cmp(&b.error).then(a.feature.cmp(&b.feature)))
            .map(|(s, &c)| (c, s))
            .expect("nonempty scan");
        let a = alpha(best.error);
        weights = adaboost_reweight(&weights, &best.predictions, labels, a);
        let error_after_reweight = weighted_error(&weights, &best.predictions, labels);
        for (v, &p) in vote.iter_mut().zip(&best.predictions) {
            *v += if p { a } else { -a };
        }
        let ensemble_error =
            vote.iter().zip(labels).filter(|(v, &l)| (**v > 0.0) != l).count() as f64 / n as f64;
        log::debug!("round {round}: cluster {cluster}, {} err {:.4} alpha {a:.4}", best.feature, best.error);
        selections.push(Selection {
            round,
            cluster,
            cluster_weight,
            feature: best.feature,
            provenance: candidates[pick].provenance,
            error: best.error,
            alpha: a,
            scanned: open.len(),
            ensemble_error,
            error_after_reweight,
        });
        let stop = best.error <= ERR_EPS || ensemble_error == 0.0;
        scorers.push(best);
        if stop {
            break;
        }
    }
    let x: Vec<Vec<f64>> = (0..n).map(|i| scorers.iter().map(|s| s.outputs[i]).collect()).collect();
    let composite = fit_logistic(&x, labels, &vec![1.0 / n as f64; n], &config.refit)?;
    let wrong = x.iter().zip(labels).filter(|(row, &l)| (composite.predict(row) >= 0.5) != l).count();
    Ok(BoostOutcome { selections, scorers, composite, training_error: wrong as f64 / n as f64, final_weights: weights })
}
