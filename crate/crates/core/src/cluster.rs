//! Unsupervised organization of positive samples: k-means, agglomerative
//! clustering, Dunn index and purity, several filtered clustering rounds,
//! and the classifier-output (evolved) descriptors compared by Jaccard overlap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ClassifierGraph, ConceptId};
use crate::image::Image;
use crate::inference::{Detector, InferenceError};

/// Classifier outputs at or above this count as a positive response.
pub const EVOLVED_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("k = {k} is invalid for {n} points")]
    BadK { k: usize, n: usize },
    #[error("need at least 2 clusters, got {0}")]
    TooFewClusters(usize),
    #[error("descriptor lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no clustering rounds given")]
    NoRounds,
    #[error("no cluster passed the quality thresholds (min_dunn = {min_dunn}, min_purity = {min_purity})")]
    EmptyResult { min_dunn: f64, min_purity: f64 },
    #[error("k-means needs Euclidean distance")]
    KMeansNeedsEuclidean,
    #[error("classifier subset is empty")]
    EmptySubset,
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Objective after each assignment step.
    pub objective_history: Vec<f64>,
}

impl KMeansResult {
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.centroids.len()];
        for (i, &a) in self.assignments.iter().enumerate() {
            out[a].push(i);
        }
        out.retain(|c| !c.is_empty());
        out
    }
}

fn objective(data: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    data.iter().zip(assignments).map(|(x, &a)| squared_euclidean(x, &centroids[a])).sum()
}

fn kmeans_pp(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.gen_range(0..data.len())];
    let mut d2: Vec<f64> = data.iter().map(|x| squared_euclidean(x, &data[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive mass")
        } else {
            // every remaining point coincides with a chosen one
            (0..data.len()).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(squared_euclidean(x, &data[next]));
        }
    }
    chosen.into_iter().map(|i| data[i].clone()).collect()
}

/// k-means++ seeding then Lloyd iterations until the largest centroid shift
/// drops below `tol`, assignments stop changing, or `max_iter` is reached.
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansResult, ClusterError> {
    let n = data.len();
    if k == 0 || k > n {
        return Err(ClusterError::BadK { k, n });
    }
    let dim = data[0].len();
    if let Some(x) = data.iter().find(|x| x.len() != dim) {
        return Err(ClusterError::LengthMismatch(dim, x.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(data, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (i, x) in data.iter().enumerate() {
            let current = assignments[i];
            let mut best = current;
            let mut best_d = if current == usize::MAX { f64::INFINITY } else { squared_euclidean(x, &centroids[current]) };
            for (c, centroid) in centroids.iter().enumerate() {
                let d = squared_euclidean(x, centroid);
                // strict improvement only, so ties keep the current (or lowest) centroid
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if best != current {
                assignments[i] = best;
                changed = true;
            }
        }
        history.push(objective(data, &centroids, &assignments));
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.iter().zip(&assignments) {
            counts[a] += 1;
            sums[a].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(euclidean(&mean, &centroids[c]));
            centroids[c] = mean;
        }
        if shift < tol {
            // one final assignment against the settled centroids
            for (i, x) in data.iter().enumerate() {
                let mut best = assignments[i];
                let mut best_d = squared_euclidean(x, &centroids[best]);
                for (c, centroid) in centroids.iter().enumerate() {
                    let d = squared_euclidean(x, centroid);
                    if d < best_d {
                        best = c;
                        best_d = d;
                    }
                }
                assignments[i] = best;
            }
            history.push(objective(data, &centroids, &assignments));
            break;
        }
    }
    Ok(KMeansResult { assignments, centroids, objective_history: history })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Linkage {
    Single,
    Complete,
}

/// Dense symmetric distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Self { n, values }
    }

    pub fn euclidean(points: &[Vec<f64>]) -> Self {
        Self::from_fn(points.len(), |i, j| euclidean(&points[i], &points[j]))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Bottom-up merging to `k` clusters. Clusters are identified by their
/// smallest member; ties between equally close pairs go to the
/// lexicographically smallest pair. Output is sorted by smallest member.
pub fn agglomerative(dist: &DistanceMatrix, k: usize, linkage: Linkage) -> Result<Vec<Vec<usize>>, ClusterError> {
    let n = dist.len();
    if k == 0 || k > n {
        return Err(ClusterError::BadK { k, n });
    }
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut between: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dist.get(i, j)).collect()).collect();
    while clusters.len() > k {
        let m = clusters.len();
        let (mut bi, mut bj, mut bd) = (0, 1, f64::INFINITY);
        for i in 0..m {
            for j in i + 1..m {
                // clusters stay sorted by smallest member, so (i, j) order is the tie order
                if between[i][j] < bd {
                    (bi, bj, bd) = (i, j, between[i][j]);
                }
            }
        }
        for t in 0..m {
            if t == bi || t == bj {
                continue;
            }
            let merged = match linkage {
                Linkage::Single => between[bi][t].min(between[bj][t]),
                Linkage::Complete => between[bi][t].max(between[bj][t]),
            };
            between[bi][t] = merged;
            between[t][bi] = merged;
        }
        let moved = clusters.remove(bj);
        clusters[bi].extend(moved);
        clusters[bi].sort_unstable();
        between.remove(bj);
        for row in &mut between {
            row.remove(bj);
        }
    }
    Ok(clusters)
}

/// Minimum single-link distance between clusters over the maximum complete
/// diameter within clusters. Infinite when every diameter is zero.
pub fn dunn_index(clusters: &[Vec<usize>], distance: impl Fn(usize, usize) -> f64) -> Result<f64, ClusterError> {
    if clusters.len() < 2 {
        return Err(ClusterError::TooFewClusters(clusters.len()));
    }
    let mut diameter: f64 = 0.0;
    for c in clusters {
        for (a, &i) in c.iter().enumerate() {
            for &j in &c[a + 1..] {
                diameter = diameter.max(distance(i, j));
            }
        }
    }
    let mut separation = f64::INFINITY;
    for (a, ca) in clusters.iter().enumerate() {
        for cb in &clusters[a + 1..] {
            for &i in ca {
                for &j in cb {
                    separation = separation.min(distance(i, j));
                }
            }
        }
    }
    if diameter == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(separation / diameter)
}

/// Fraction of positive labels among a cluster's members.
pub fn purity(labels: &[bool]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64
}

/// Binarized classifier outputs of one image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvolvedDescriptor(pub Vec<bool>);

impl EvolvedDescriptor {
    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| b as u8 as f64).collect()
    }

    pub fn from_scores(scores: &[f64]) -> Self {
        Self(scores.iter().map(|&s| s >= EVOLVED_THRESHOLD).collect())
    }
}

/// `d(k) = 1` iff concept `k` fires (score >= 0.5) on the whole image.
pub fn evolved_descriptor(concepts: &[ConceptId], graph: &ClassifierGraph, image: &Image) -> Result<EvolvedDescriptor, ClusterError> {
    if concepts.is_empty() {
        return Err(ClusterError::EmptySubset);
    }
    let mut detector = Detector::new(graph, image);
    let scores = concepts.iter().map(|&c| detector.classify(c)).collect::<Result<Vec<_>, _>>()?;
    Ok(EvolvedDescriptor::from_scores(&scores))
}

/// Size of the intersection over size of the union of positive outputs;
/// two all-zero descriptors are identical (1).
pub fn jaccard_similarity(a: &EvolvedDescriptor, b: &EvolvedDescriptor) -> Result<f64, ClusterError> {
    if a.0.len() != b.0.len() {
        return Err(ClusterError::LengthMismatch(a.0.len(), b.0.len()));
    }
    let inter = a.0.iter().zip(&b.0).filter(|(x, y)| **x && **y).count();
    let union = a.0.iter().zip(&b.0).filter(|(x, y)| **x || **y).count();
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

fn jaccard_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x >= EVOLVED_THRESHOLD, y >= EVOLVED_THRESHOLD);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distance {
    Euclidean,
    /// One minus the Jaccard similarity of binarized vectors.
    Jaccard,
}

impl Distance {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => euclidean(a, b),
            Distance::Jaccard => jaccard_distance(a, b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum Algorithm {
    KMeans { k: usize, max_iter: usize, tol: f64 },
    Agglomerative { k: usize, linkage: Linkage },
}

impl Algorithm {
    pub fn k(&self) -> usize {
        match *self {
            Algorithm::KMeans { k, .. } | Algorithm::Agglomerative { k, .. } => k,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityThresholds {
    pub min_dunn: f64,
    pub min_purity: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self { min_dunn: 0.0, min_purity: 0.8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    /// Dunn index of the round the cluster came from.
    pub dunn: f64,
    pub purity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    /// Sample ids as supplied by the caller.
    pub members: Vec<usize>,
    pub round: usize,
    pub space: String,
    pub quality: ClusterQuality,
}

/// One clustering round: an algorithm applied to one descriptor space.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundInput {
    pub space: String,
    pub algorithm: Algorithm,
    pub distance: Distance,
    /// Descriptors of the positives, aligned with `ids`.
    pub positives: Vec<Vec<f64>>,
    pub ids: Vec<usize>,
    /// Descriptors of negatives; when non-empty each joins its nearest
    /// cluster and counts against that cluster's purity.
    pub negatives: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundSummary {
    pub round: usize,
    pub space: String,
    pub produced: usize,
    pub kept: usize,
    pub dunn: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    pub rounds: Vec<RoundSummary>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// `sample_id,round_id,cluster_id` rows, one per membership.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,round_id,cluster_id\n");
        for (cid, c) in self.clusters.iter().enumerate() {
            for m in &c.members {
                out.push_str(&format!("{m},{},{cid}\n", c.round));
            }
        }
        out
    }
}

/// Medoid of a cluster: the member with the smallest distance sum, lowest
/// index on ties.
fn medoid(members: &[usize], points: &[Vec<f64>], distance: Distance) -> usize {
    let mut best = (members[0], f64::INFINITY);
    for &a in members {
        let total: f64 = members.iter().map(|&j| distance.eval(&points[a], &points[j])).sum();
        if total < best.1 {
            best = (a, total);
        }
    }
    best.0
}

/// Purity of each cluster after every negative joins the cluster with the
/// nearest medoid (lowest cluster index on ties).
fn purities_with_negatives(clusters: &[Vec<usize>], points: &[Vec<f64>], negatives: &[Vec<f64>], distance: Distance) -> Vec<f64> {
    let medoids: Vec<usize> = clusters.iter().map(|c| medoid(c, points, distance)).collect();
    let mut joined = vec![0usize; clusters.len()];
    for n in negatives {
        let mut best = (0, f64::INFINITY);
        for (k, &m) in medoids.iter().enumerate() {
            let d = distance.eval(&points[m], n);
            if d < best.1 {
                best = (k, d);
            }
        }
        if !medoids.is_empty() {
            joined[best.0] += 1;
        }
    }
    clusters
        .iter()
        .zip(&joined)
        .map(|(c, &neg)| {
            let mut labels = vec![true; c.len()];
            labels.extend(std::iter::repeat_n(false, neg));
            purity(&labels)
        })
        .collect()
}

fn run_round(index: usize, input: &RoundInput, seed: u64) -> Result<(Vec<Cluster>, RoundSummary), ClusterError> {
    let n = input.positives.len();
    let k = input.algorithm.k().min(n);
    let local: Vec<Vec<usize>> = if n == 0 {
        Vec::new()
    } else {
        match input.algorithm {
            Algorithm::KMeans { max_iter, tol, .. } => {
                if input.distance != Distance::Euclidean {
                    return Err(ClusterError::KMeansNeedsEuclidean);
                }
                kmeans(&input.positives, k, seed, max_iter, tol)?.clusters()
            }
            Algorithm::Agglomerative { linkage, .. } => {
                let dm = DistanceMatrix::from_fn(n, |i, j| input.distance.eval(&input.positives[i], &input.positives[j]));
                agglomerative(&dm, k, linkage)?
            }
        }
    };
    let dunn = if local.len() < 2 {
        f64::INFINITY
    } else {
        dunn_index(&local, |i, j| input.distance.eval(&input.positives[i], &input.positives[j]))?
    };
    let purities = purities_with_negatives(&local, &input.positives, &input.negatives, input.distance);
    let clusters: Vec<Cluster> = local
        .iter()
        .zip(purities)
        .map(|(members, purity)| Cluster {
            members: members.iter().map(|&i| input.ids[i]).collect(),
            round: index,
            space: input.space.clone(),
            quality: ClusterQuality { dunn, purity },
        })
        .collect();
    let summary = RoundSummary { round: index, space: input.space.clone(), produced: clusters.len(), kept: 0, dunn };
    Ok((clusters, summary))
}

/// Runs every round (concurrently), keeps the clusters meeting both quality
/// thresholds and returns their union. Clusters from different rounds may
/// share members.
pub fn cluster_rounds(rounds: &[RoundInput], quality: &QualityThresholds, seed: u64) -> Result<ClusterSet, ClusterError> {
    if rounds.is_empty() {
        return Err(ClusterError::NoRounds);
    }
    let results: Vec<_> = rounds
        .par_iter()
        .enumerate()
        .map(|(i, r)| run_round(i, r, seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1))))
        .collect();
    let mut set = ClusterSet::default();
    for result in results {
        let (clusters, mut summary) = result?;
        for c in clusters {
            if c.quality.dunn >= quality.min_dunn && c.quality.purity >= quality.min_purity {
                summary.kept += 1;
                set.clusters.push(c);
            }
        }
        set.rounds.push(summary);
    }
    if set.clusters.is_empty() {
        return Err(ClusterError::EmptyResult { min_dunn: quality.min_dunn, min_purity: quality.min_purity });
    }
    Ok(set)
}
