//! Deep detection: recursive max-pooled evaluation of the classifier graph.
//!
//! A concept evaluated on a pixel frame either classifies the descriptor of
//! its initial feature (leaf) or classifies the pooled responses of its
//! parent feature nodes placed relative to that frame (composite). A feature
//! node's response is the maximum of its concept over the lattice locations
//! inside its search area.
//!
//! Three evaluators share these semantics:
//! - [`deep_detect`]: top-down recursion memoized in a [`DetectionCache`];
//! - [`deep_detect_parallel`] and [`response_map`]: plan every
//!   `(concept, frame)` key first, then fill them bottom-up in concept id
//!   order, each level in parallel;
//! - [`naive_deep_detect`]: the literal recursion without memoization, kept
//!   as an oracle.
//!
//! Frames are integer pixel rectangles whose top-left corners lie on a global
//! lattice with spacing [`GraphParams::lattice_stride`](crate::graph::GraphParams),
//! so cache keys are exact and all three evaluators agree bit for bit.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use thiserror::Error;

use crate::features::{FeatureError, PreparedImage};
use crate::graph::{ClassifierGraph, ConceptId, ConceptKind, FeatureId, FeatureSource, Geometry};
use crate::image::{Image, PixelRect};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("unknown feature node f{0}")]
    UnknownFeature(u32),
    #[error("unknown concept node c{0}")]
    UnknownConcept(u32),
    #[error("feature node f{0} points at an initial feature and has no classifier")]
    NotEvaluable(u32),
    #[error("invalid geometry {0:?}")]
    InvalidGeometry(Geometry),
    #[error("reference box {0:?} is not inside the image")]
    ReferenceOutside(PixelRect),
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid(w . x + b)`, summed left to right so every evaluator agrees.
#[inline]
pub fn logistic_output(weights: &[f64], bias: f64, inputs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    for (w, x) in weights.iter().zip(inputs) {
        acc += w * x;
    }
    sigmoid(acc + bias)
}

#[inline]
fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Frame size of a box at `scale` inside `reference`, at least 2x2.
pub fn frame_size(scale: [f64; 2], reference: &PixelRect) -> (u32, u32) {
    let w = round_half_up(scale[0] * reference.w as f64).max(2);
    let h = round_half_up(scale[1] * reference.h as f64).max(2);
    (w as u32, h as u32)
}

fn lattice_span(target: f64, half: f64, stride: f64) -> Vec<i64> {
    let lo = ((target - half) / stride).ceil() as i64;
    let hi = ((target + half) / stride).floor() as i64;
    if lo > hi {
        vec![round_half_up(target / stride)]
    } else {
        (lo..=hi).collect()
    }
}

/// Every frame a feature node with `geometry` pools over when its child
/// evaluates on `reference`, in row-major location order, before clipping
/// against the image. An area that contains no lattice point falls back to
/// the lattice point nearest the nominal placement.
pub fn pooling_frames(geometry: &Geometry, reference: &PixelRect, stride: u32) -> Vec<PixelRect> {
    let (w, h) = frame_size(geometry.scale, reference);
    let s = stride.max(1) as f64;
    let cx = reference.x as f64 + geometry.location[0] * reference.w as f64;
    let cy = reference.y as f64 + geometry.location[1] * reference.h as f64;
    let xs = lattice_span(cx - w as f64 / 2.0, geometry.area[0] * reference.w as f64, s);
    let ys = lattice_span(cy - h as f64 / 2.0, geometry.area[1] * reference.h as f64, s);
    let stride = stride.max(1) as i64;
    ys.iter()
        .flat_map(|&ky| xs.iter().map(move |&kx| PixelRect::new((kx * stride) as i32, (ky * stride) as i32, w, h)))
        .collect()
}

/// The pooling frames that lie inside the image.
pub fn pooling_frames_inside(geometry: &Geometry, reference: &PixelRect, stride: u32, width: usize, height: usize) -> Vec<PixelRect> {
    let mut frames = pooling_frames(geometry, reference, stride);
    frames.retain(|f| f.inside(width, height));
    frames
}

/// `(concept, frame)`: the frame's lattice position is the quantized
/// location, its size the quantized scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub concept: ConceptId,
    pub frame: PixelRect,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct CacheEntry {
    score: f64,
    evaluations: u32,
}

/// Memo table of concept scores plus instrumentation.
#[derive(Clone, Debug, Default)]
pub struct DetectionCache {
    entries: HashMap<CacheKey, CacheEntry>,
    pub hits: u64,
    pub misses: u64,
    pub leaf_evaluations: u64,
    pub composite_evaluations: u64,
    /// Pooling calls whose every location fell outside the image.
    pub degenerate_pools: u64,
}

impl DetectionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &CacheKey) -> Option<f64> {
        self.entries.get(key).map(|e| e.score)
    }

    pub fn evaluations(&self, key: &CacheKey) -> u32 {
        self.entries.get(key).map_or(0, |e| e.evaluations)
    }

    /// Largest per-key evaluation count; 1 whenever memoization held.
    pub fn max_evaluations(&self) -> u32 {
        self.entries.values().map(|e| e.evaluations).max().unwrap_or(0)
    }

    fn record(&mut self, key: CacheKey, score: f64, leaf: bool) {
        if leaf {
            self.leaf_evaluations += 1;
        } else {
            self.composite_evaluations += 1;
        }
        self.entries
            .entry(key)
            .and_modify(|e| {
                e.score = score;
                e.evaluations += 1;
            })
            .or_insert(CacheEntry { score, evaluations: 1 });
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }
}

/// Responses of one concept over the lattice locations of one scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseGrid {
    pub concept: ConceptId,
    pub frame_size: (u32, u32),
    /// Lattice x and y coordinates of the frame origins.
    pub xs: Vec<i32>,
    pub ys: Vec<i32>,
    /// Row-major scores, `ys.len() * xs.len()` of them.
    pub scores: Vec<f64>,
}

impl ResponseGrid {
    pub fn rows(&self) -> usize {
        self.ys.len()
    }

    pub fn cols(&self) -> usize {
        self.xs.len()
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.xs.len() + col]
    }

    /// Maximum score, 0 for an empty grid.
    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(0.0, f64::max)
    }

    pub fn frame(&self, row: usize, col: usize) -> PixelRect {
        PixelRect::new(self.xs[col], self.ys[row], self.frame_size.0, self.frame_size.1)
    }
}

fn concept_node(graph: &ClassifierGraph, id: ConceptId) -> Result<&ConceptKind, InferenceError> {
    graph.concept(id).map(|c| &c.kind).ok_or(InferenceError::UnknownConcept(id.0))
}

fn concept_target(graph: &ClassifierGraph, id: FeatureId) -> Result<(ConceptId, Geometry), InferenceError> {
    let node = graph.feature(id).ok_or(InferenceError::UnknownFeature(id.0))?;
    if !node.geometry.is_valid() {
        return Err(InferenceError::InvalidGeometry(node.geometry));
    }
    match node.source {
        FeatureSource::Concept(c) => Ok((c, node.geometry)),
        FeatureSource::Initial(_) => Err(InferenceError::NotEvaluable(id.0)),
    }
}

fn check_reference(image: &Image, reference: &PixelRect) -> Result<(), InferenceError> {
    if reference.is_empty() || !reference.inside(image.width(), image.height()) {
        return Err(InferenceError::ReferenceOutside(*reference));
    }
    Ok(())
}

fn leaf_score(scene: &PreparedImage<'_>, kind: &ConceptKind, frame: &PixelRect) -> Result<f64, InferenceError> {
    let ConceptKind::Leaf { feature, weights, bias } = kind else { unreachable!("leaf_score on composite") };
    let d = scene.descriptor(feature, frame)?;
    Ok(logistic_output(weights, *bias, d.values.iter().copied()))
}

/// Top-down memoized evaluator over one image.
struct Memo<'a, 'c> {
    graph: &'a ClassifierGraph,
    scene: &'a PreparedImage<'a>,
    cache: &'c mut DetectionCache,
}

impl Memo<'_, '_> {
    fn feature_score(&mut self, feature: FeatureId, reference: &PixelRect) -> Result<f64, InferenceError> {
        let (concept, geometry) = concept_target(self.graph, feature)?;
        let image = self.scene.image();
        let frames = pooling_frames_inside(&geometry, reference, self.graph.params.lattice_stride, image.width(), image.height());
        if frames.is_empty() {
            self.cache.degenerate_pools += 1;
            log::debug!("f{}: every pooling location leaves the image", feature.0);
            return Ok(0.0);
        }
        let mut best = f64::NEG_INFINITY;
        for frame in &frames {
            best = best.max(self.concept_score(concept, frame)?);
        }
        Ok(best)
    }

    fn concept_score(&mut self, concept: ConceptId, frame: &PixelRect) -> Result<f64, InferenceError> {
        let key = CacheKey { concept, frame: *frame };
        if let Some(score) = self.cache.get(&key) {
            self.cache.hits += 1;
            return Ok(score);
        }
        self.cache.misses += 1;
        let graph = self.graph;
        let kind = concept_node(graph, concept)?;
        let score = match kind {
            ConceptKind::Leaf { .. } => leaf_score(self.scene, kind, frame)?,
            ConceptKind::Composite { parents, weights, bias } => {
                let mut inputs = Vec::with_capacity(parents.len());
                for &p in parents {
                    inputs.push(self.feature_score(p, frame)?);
                }
                logistic_output(weights, *bias, inputs)
            }
        };
        self.cache.record(key, score, kind.is_leaf());
        Ok(score)
    }
}

/// Reusable detector for one image: keeps the integral image and a cache
/// across calls. Its cache scope is whatever the owner decides; the free
/// functions below scope it to one call tree.
pub struct Detector<'a> {
    graph: &'a ClassifierGraph,
    scene: PreparedImage<'a>,
    cache: DetectionCache,
}

impl<'a> Detector<'a> {
    pub fn new(graph: &'a ClassifierGraph, image: &'a Image) -> Self {
        Self { graph, scene: PreparedImage::new(image), cache: DetectionCache::new() }
    }

    pub fn image(&self) -> &'a Image {
        self.scene.image()
    }

    pub fn cache(&self) -> &DetectionCache {
        &self.cache
    }

    /// Pooled response of a feature node positioned on `reference`.
    pub fn feature_score(&mut self, feature: FeatureId, reference: &PixelRect) -> Result<f64, InferenceError> {
        check_reference(self.scene.image(), reference)?;
        Memo { graph: self.graph, scene: &self.scene, cache: &mut self.cache }.feature_score(feature, reference)
    }

    /// Output of a concept on exactly `frame`.
    pub fn concept_score(&mut self, concept: ConceptId, frame: &PixelRect) -> Result<f64, InferenceError> {
        check_reference(self.scene.image(), frame)?;
        Memo { graph: self.graph, scene: &self.scene, cache: &mut self.cache }.concept_score(concept, frame)
    }

    /// Output of a concept over the whole image.
    pub fn classify(&mut self, concept: ConceptId) -> Result<f64, InferenceError> {
        let full = self.scene.image().bounds();
        self.concept_score(concept, &full)
    }
}

/// Max-pooled response of `feature` placed relative to `reference`,
/// memoized in `cache` so each `(concept, frame)` is evaluated once.
pub fn deep_detect(
    graph: &ClassifierGraph,
    feature: FeatureId,
    image: &Image,
    reference: &PixelRect,
    cache: &mut DetectionCache,
) -> Result<f64, InferenceError> {
    check_reference(image, reference)?;
    let scene = PreparedImage::new(image);
    Memo { graph, scene: &scene, cache }.feature_score(feature, reference)
}

/// Score of `concept` over the whole image.
pub fn detect_concept(graph: &ClassifierGraph, concept: ConceptId, image: &Image) -> Result<f64, InferenceError> {
    let scene = PreparedImage::new(image);
    let mut cache = DetectionCache::new();
    Memo { graph, scene: &scene, cache: &mut cache }.concept_score(concept, &image.bounds())
}

/// Counters kept by the naive oracle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NaiveCounters {
    pub leaf_evaluations: u64,
    pub composite_evaluations: u64,
}

struct Naive<'a> {
    graph: &'a ClassifierGraph,
    scene: &'a PreparedImage<'a>,
    counters: NaiveCounters,
}

impl Naive<'_> {
    fn deep_detection(&mut self, feature: FeatureId, reference: &PixelRect) -> Result<f64, InferenceError> {
        let (concept, geometry) = concept_target(self.graph, feature)?;
        let kind = concept_node(self.graph, concept)?;
        let image = self.scene.image();
        let mut out: Option<f64> = None;
        for p in pooling_frames(&geometry, reference, self.graph.params.lattice_stride) {
            if !p.inside(image.width(), image.height()) {
                continue;
            }
            let r = match kind {
                ConceptKind::Leaf { .. } => {
                    self.counters.leaf_evaluations += 1;
                    leaf_score(self.scene, kind, &p)?
                }
                ConceptKind::Composite { parents, weights, bias } => {
                    let mut x = Vec::with_capacity(parents.len());
                    for &parent in parents {
                        x.push(self.deep_detection(parent, &p)?);
                    }
                    self.counters.composite_evaluations += 1;
                    logistic_output(weights, *bias, x)
                }
            };
            out = Some(out.map_or(r, |o: f64| o.max(r)));
        }
        Ok(out.unwrap_or(0.0))
    }
}

/// Literal recursion without caching. Same contract as [`deep_detect`].
pub fn naive_deep_detect(
    graph: &ClassifierGraph,
    feature: FeatureId,
    image: &Image,
    reference: &PixelRect,
) -> Result<(f64, NaiveCounters), InferenceError> {
    check_reference(image, reference)?;
    let scene = PreparedImage::new(image);
    let mut naive = Naive { graph, scene: &scene, counters: NaiveCounters::default() };
    let score = naive.deep_detection(feature, reference)?;
    Ok((score, naive.counters))
}

/// Collects every `(concept, frame)` that evaluating `concept` on `frame`
/// will touch.
fn plan_concept(
    graph: &ClassifierGraph,
    concept: ConceptId,
    frame: PixelRect,
    dims: (usize, usize),
    plan: &mut HashSet<CacheKey>,
) -> Result<(), InferenceError> {
    if !plan.insert(CacheKey { concept, frame }) {
        return Ok(());
    }
    if let ConceptKind::Composite { parents, .. } = concept_node(graph, concept)? {
        for &p in parents {
            plan_feature(graph, p, &frame, dims, plan)?;
        }
    }
    Ok(())
}

fn plan_feature(
    graph: &ClassifierGraph,
    feature: FeatureId,
    reference: &PixelRect,
    dims: (usize, usize),
    plan: &mut HashSet<CacheKey>,
) -> Result<(), InferenceError> {
    let (concept, geometry) = concept_target(graph, feature)?;
    for q in pooling_frames_inside(&geometry, reference, graph.params.lattice_stride, dims.0, dims.1) {
        plan_concept(graph, concept, q, dims, plan)?;
    }
    Ok(())
}

/// Pooled parent response read from an already-filled cache.
fn cached_feature_score(
    graph: &ClassifierGraph,
    cache: &DetectionCache,
    feature: FeatureId,
    reference: &PixelRect,
    dims: (usize, usize),
) -> Result<(f64, bool), InferenceError> {
    let (concept, geometry) = concept_target(graph, feature)?;
    let frames = pooling_frames_inside(&geometry, reference, graph.params.lattice_stride, dims.0, dims.1);
    if frames.is_empty() {
        return Ok((0.0, true));
    }
    let mut best = f64::NEG_INFINITY;
    for frame in frames {
        let key = CacheKey { concept, frame };
        let score = cache.get(&key).expect("bottom-up order fills parents first");
        best = best.max(score);
    }
    Ok((best, false))
}

/// Fills `cache` for every planned key, lowest concept id first. Keys of one
/// concept depend only on lower ids, so each level runs in parallel on the
/// current rayon pool; results are inserted in sorted key order.
fn fill_bottom_up(
    graph: &ClassifierGraph,
    scene: &PreparedImage<'_>,
    plan: HashSet<CacheKey>,
    cache: &mut DetectionCache,
) -> Result<(), InferenceError> {
    let dims = (scene.image().width(), scene.image().height());
    let mut levels: BTreeMap<ConceptId, Vec<PixelRect>> = BTreeMap::new();
    for key in plan {
        if cache.get(&key).is_some() {
            cache.hits += 1;
            continue;
        }
        levels.entry(key.concept).or_default().push(key.frame);
    }
    for (concept, mut frames) in levels {
        frames.sort();
        let kind = concept_node(graph, concept)?;
        let shared: &DetectionCache = cache;
        let results: Vec<Result<(f64, u64), InferenceError>> = frames
            .par_iter()
            .map(|frame| match kind {
                ConceptKind::Leaf { .. } => leaf_score(scene, kind, frame).map(|s| (s, 0)),
                ConceptKind::Composite { parents, weights, bias } => {
                    let mut inputs = Vec::with_capacity(parents.len());
                    let mut degenerate = 0;
                    for &p in parents {
                        let (score, empty) = cached_feature_score(graph, shared, p, frame, dims)?;
                        degenerate += empty as u64;
                        inputs.push(score);
                    }
                    Ok((logistic_output(weights, *bias, inputs), degenerate))
                }
            })
            .collect();
        for (frame, result) in frames.into_iter().zip(results) {
            let (score, degenerate) = result?;
            cache.misses += 1;
            cache.degenerate_pools += degenerate;
            cache.record(CacheKey { concept, frame }, score, kind.is_leaf());
        }
    }
    Ok(())
}

/// [`deep_detect`] computed by planning all keys and filling them bottom-up,
/// with independent keys evaluated concurrently. Identical results for any
/// worker count.
pub fn deep_detect_parallel(
    graph: &ClassifierGraph,
    feature: FeatureId,
    image: &Image,
    reference: &PixelRect,
    cache: &mut DetectionCache,
) -> Result<f64, InferenceError> {
    check_reference(image, reference)?;
    let dims = (image.width(), image.height());
    let scene = PreparedImage::new(image);
    let mut plan = HashSet::new();
    plan_feature(graph, feature, reference, dims, &mut plan)?;
    fill_bottom_up(graph, &scene, plan, cache)?;
    let (score, degenerate) = cached_feature_score(graph, cache, feature, reference, dims)?;
    cache.degenerate_pools += degenerate as u64;
    Ok(score)
}

/// Responses of `concept` at every lattice location inside `reference` for
/// frames of `scale` relative to `reference`, computed bottom-up.
pub fn response_map(
    graph: &ClassifierGraph,
    concept: ConceptId,
    image: &Image,
    reference: &PixelRect,
    scale: f64,
    cache: &mut DetectionCache,
) -> Result<ResponseGrid, InferenceError> {
    check_reference(image, reference)?;
    concept_node(graph, concept)?;
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(InferenceError::InvalidGeometry(Geometry::new([0.5, 0.5], [scale, scale], [0.0, 0.0])));
    }
    let (w, h) = frame_size([scale, scale], reference);
    let s = graph.params.lattice_stride.max(1) as i64;
    let axis = |origin: i32, extent: u32, size: u32| -> Vec<i32> {
        let lo = (origin as i64 + s - 1).div_euclid(s);
        let hi = (origin as i64 + extent as i64 - size as i64).div_euclid(s);
        (lo..=hi).map(|k| (k * s) as i32).collect()
    };
    let xs = axis(reference.x, reference.w, w);
    let ys = axis(reference.y, reference.h, h);
    let dims = (image.width(), image.height());
    let scene = PreparedImage::new(image);
    let mut plan = HashSet::new();
    for &y in &ys {
        for &x in &xs {
            plan_concept(graph, concept, PixelRect::new(x, y, w, h), dims, &mut plan)?;
        }
    }
    fill_bottom_up(graph, &scene, plan, cache)?;
    let scores = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| PixelRect::new(x, y, w, h)))
        .map(|frame| cache.get(&CacheKey { concept, frame }).expect("planned"))
        .collect();
    Ok(ResponseGrid { concept, frame_size: (w, h), xs, ys, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{HaarKind, InitialFeature};
    use crate::graph::GraphParams;

    fn haar_leaf(graph: &mut ClassifierGraph, w: f64, b: f64) -> ConceptId {
        graph
            .add_concept_node(
                ConceptKind::Leaf { feature: InitialFeature::Haar { kind: HaarKind::TwoRectHoriz }, weights: vec![w], bias: b },
                0,
            )
            .unwrap()
    }

    fn ramp(w: usize, h: usize) -> Image {
        let px = (0..h).flat_map(|y| (0..w).map(move |x| ((x * 13 + y * 7) % 17) as f64 / 16.0)).collect();
        Image::from_gray(w, h, px).unwrap()
    }

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pooling_frames_snap_to_the_lattice() {
        let reference = PixelRect::new(0, 0, 20, 20);
        let g = Geometry::new([0.5, 0.5], [0.5, 0.5], [0.0, 0.0]);
        assert_eq!(pooling_frames(&g, &reference, 1), vec![PixelRect::new(5, 5, 10, 10)]);
        // half-extent 0.1 * 20 = 2 px around x = 5 on a stride-2 lattice: {4, 6}
        let g = Geometry::new([0.5, 0.5], [0.5, 0.5], [0.1, 0.0]);
        let frames = pooling_frames(&g, &reference, 2);
        let xs: Vec<i32> = frames.iter().map(|f| f.x).collect();
        assert_eq!(xs, vec![4, 6]);
        assert!(frames.iter().all(|f| f.y == 6));
    }

    #[test]
    fn zero_weight_leaf_returns_logistic_of_bias() {
        let mut graph = ClassifierGraph::new(GraphParams { max_parents: 3, lattice_stride: 1 });
        let c = haar_leaf(&mut graph, 0.0, 0.0);
        let f = graph.add_feature_node(FeatureSource::Concept(c), Geometry::IDENTITY).unwrap();
        let img = ramp(8, 8);
        let mut cache = DetectionCache::new();
        assert_eq!(deep_detect(&graph, f, &img, &img.bounds(), &mut cache).unwrap(), 0.5);
        let c2 = haar_leaf(&mut graph, 0.0, 1.5);
        let f2 = graph.add_feature_node(FeatureSource::Concept(c2), Geometry::IDENTITY).unwrap();
        assert_eq!(deep_detect(&graph, f2, &img, &img.bounds(), &mut cache).unwrap(), sigmoid(1.5));
    }

    #[test]
    fn point_search_area_equals_direct_evaluation() {
        let mut graph = ClassifierGraph::new(GraphParams { max_parents: 3, lattice_stride: 2 });
        let c = haar_leaf(&mut graph, 3.0, -0.2);
        let g = Geometry::new([0.3, 0.6], [0.5, 0.25], [0.0, 0.0]);
        let f = graph.add_feature_node(FeatureSource::Concept(c), g).unwrap();
        let img = ramp(16, 16);
        let frames = pooling_frames(&g, &img.bounds(), 2);
        assert_eq!(frames.len(), 1);
        let direct = detect_concept_at(&graph, c, &img, &frames[0]);
        let mut cache = DetectionCache::new();
        assert_eq!(deep_detect(&graph, f, &img, &img.bounds(), &mut cache).unwrap(), direct);
    }

    fn detect_concept_at(graph: &ClassifierGraph, c: ConceptId, img: &Image, frame: &PixelRect) -> f64 {
        Detector::new(graph, img).concept_score(c, frame).unwrap()
    }

    #[test]
    fn all_locations_outside_scores_zero() {
        let mut graph = ClassifierGraph::new(GraphParams { max_parents: 3, lattice_stride: 1 });
        let c = haar_leaf(&mut graph, 1.0, 5.0);
        // a full-size box centered on the corner cannot fit
        let f = graph
            .add_feature_node(FeatureSource::Concept(c), Geometry::new([0.0, 0.0], [1.0, 1.0], [0.0, 0.0]))
            .unwrap();
        let img = ramp(8, 8);
        let mut cache = DetectionCache::new();
        assert_eq!(deep_detect(&graph, f, &img, &img.bounds(), &mut cache).unwrap(), 0.0);
        assert_eq!(cache.degenerate_pools, 1);
        assert_eq!(naive_deep_detect(&graph, f, &img, &img.bounds()).unwrap().0, 0.0);
    }

    #[test]
    fn shared_parent_is_evaluated_once_per_key() {
        let mut graph = ClassifierGraph::new(GraphParams { max_parents: 3, lattice_stride: 1 });
        let leaf = haar_leaf(&mut graph, 4.0, 0.0);
        let area = Geometry::new([0.5, 0.5], [0.5, 0.5], [0.25, 0.25]);
        let fl = graph.add_feature_node(FeatureSource::Concept(leaf), area).unwrap();
        let mid_a = graph.add_concept_node(ConceptKind::Composite { parents: vec![fl], weights: vec![2.0], bias: -1.0 }, 1).unwrap();
        let mid_b = graph.add_concept_node(ConceptKind::Composite { parents: vec![fl], weights: vec![-1.0], bias: 0.5 }, 1).unwrap();
        let fa = graph.add_feature_node(FeatureSource::Concept(mid_a), area).unwrap();
        let fb = graph.add_feature_node(FeatureSource::Concept(mid_b), area).unwrap();
        let top = graph
            .add_concept_node(ConceptKind::Composite { parents: vec![fa, fb], weights: vec![1.0, 1.0], bias: 0.0 }, 2)
            .unwrap();
        let ft = graph.add_feature_node(FeatureSource::Concept(top), Geometry::IDENTITY).unwrap();
        let img = ramp(24, 24);
        let mut cache = DetectionCache::new();
        let memo = deep_detect(&graph, ft, &img, &img.bounds(), &mut cache).unwrap();
        let (naive, counters) = naive_deep_detect(&graph, ft, &img, &img.bounds()).unwrap();
        assert_eq!(memo.to_bits(), naive.to_bits());
        assert_eq!(cache.max_evaluations(), 1);
        assert!(counters.leaf_evaluations >= 2 * cache.leaf_evaluations);

        let mut par_cache = DetectionCache::new();
        let par = deep_detect_parallel(&graph, ft, &img, &img.bounds(), &mut par_cache).unwrap();
        assert_eq!(par.to_bits(), memo.to_bits());
        assert_eq!(par_cache.max_evaluations(), 1);
        assert_eq!(par_cache.leaf_evaluations, cache.leaf_evaluations);
    }

    #[test]
    fn response_map_on_constant_image_is_constant() {
        let mut graph = ClassifierGraph::new(GraphParams { max_parents: 3, lattice_stride: 1 });
        let leaf = graph
            .add_concept_node(
                ConceptKind::Leaf { feature: InitialFeature::Gradient { cells: 1, bins: 4 }, weights: vec![1.0, -2.0, 0.5, 3.0], bias: 0.1 },
                0,
            )
            .unwrap();
        let img = Image::filled(12, 10, 0.3).unwrap();
        let mut cache = DetectionCache::new();
        let grid = response_map(&graph, leaf, &img, &img.bounds(), 0.5, &mut cache).unwrap();
        assert_eq!(grid.frame_size, (6, 5));
        assert_eq!((grid.cols(), grid.rows()), (7, 6));
        assert!(grid.scores.iter().all(|&s| s == grid.scores[0]));
    }

    #[test]
    fn response_map_max_equals_full_area_pooling() {
        let mut graph = ClassifierGraph::new(GraphParams { max_parents: 3, lattice_stride: 2 });
        let leaf = haar_leaf(&mut graph, 5.0, -1.0);
        let img = ramp(17, 13);
        let mut cache = DetectionCache::new();
        let grid = response_map(&graph, leaf, &img, &img.bounds(), 0.4, &mut cache).unwrap();
        let f = graph
            .add_feature_node(FeatureSource::Concept(leaf), Geometry::new([0.5, 0.5], [0.4, 0.4], [0.5, 0.5]))
            .unwrap();
        let mut cache2 = DetectionCache::new();
        let pooled = deep_detect(&graph, f, &img, &img.bounds(), &mut cache2).unwrap();
        assert_eq!(grid.max(), pooled);
        // every grid cell is an independent single evaluation
        for r in 0..grid.rows() {
            for c in 0..grid.cols() {
                assert_eq!(grid.at(r, c), detect_concept_at(&graph, leaf, &img, &grid.frame(r, c)));
            }
        }
    }

    #[test]
    fn initial_feature_nodes_are_not_evaluable() {
        let mut graph = ClassifierGraph::default();
        let f = graph
            .add_feature_node(FeatureSource::Initial(InitialFeature::Hue { cells: 1, bins: 12 }), Geometry::IDENTITY)
            .unwrap();
        let img = ramp(4, 4);
        let mut cache = DetectionCache::new();
        assert_eq!(deep_detect(&graph, f, &img, &img.bounds(), &mut cache), Err(InferenceError::NotEvaluable(0)));
        assert!(matches!(
            deep_detect(&graph, f, &img, &PixelRect::new(2, 2, 4, 4), &mut cache),
            Err(InferenceError::ReferenceOutside(_))
        ));
    }
}
