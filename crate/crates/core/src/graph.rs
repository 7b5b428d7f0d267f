//! Classifier graph storage: concept nodes (learned classifiers), feature
//! nodes (geometric copies that point at a concept or an initial feature),
//! the feature pool, copy spawning and de-duplication.
//!
//! All feature nodes live in one arena owned by [`ClassifierGraph`]; the
//! [`FeaturePool`] indexes the subset that are candidates for selection.
//! Concept ids are assigned in creation order and a composite may only cite
//! feature nodes whose concept predates it, so the concept graph is acyclic
//! by construction.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::InitialFeature;

/// Default tolerance for geometric de-duplication.
pub const DEFAULT_DUPLICATE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConceptId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureId(pub u32);

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

/// Placement of a feature node relative to its child's reference box.
///
/// All values are normalized to the reference box with the origin at the
/// top-left: `location` is the center, `scale` the box size as a fraction of
/// the reference box, and `area` the half-extents of the max-pooling search
/// rectangle centered at `location`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub location: [f64; 2],
    pub scale: [f64; 2],
    pub area: [f64; 2],
}

impl Geometry {
    /// The whole reference box, no pooling: how a concept node sees its input.
    pub const IDENTITY: Geometry = Geometry { location: [0.5, 0.5], scale: [1.0, 1.0], area: [0.0, 0.0] };

    pub fn new(location: [f64; 2], scale: [f64; 2], area: [f64; 2]) -> Self {
        Self { location, scale, area }
    }

    pub fn is_valid(&self) -> bool {
        let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        self.location.iter().all(|&v| unit(v))
            && self.scale.iter().all(|&v| v.is_finite() && v > 0.0 && v <= 1.0)
            && self.area.iter().all(|&v| v.is_finite() && v >= 0.0)
    }

    /// L-infinity distance over location, scale and area.
    pub fn linf_distance(&self, other: &Geometry) -> f64 {
        self.components()
            .iter()
            .zip(other.components())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn components(&self) -> [f64; 6] {
        [self.location[0], self.location[1], self.scale[0], self.scale[1], self.area[0], self.area[1]]
    }
}

/// What a feature node evaluates: a learned concept, or (for first-stage
/// pool candidates) an initial feature type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSource {
    Concept(ConceptId),
    Initial(InitialFeature),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureNode {
    pub id: FeatureId,
    pub source: FeatureSource,
    pub geometry: Geometry,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConceptKind {
    /// Logistic classifier over the descriptor of one initial feature.
    Leaf { feature: InitialFeature, weights: Vec<f64>, bias: f64 },
    /// Logistic classifier over the pooled outputs of parent feature nodes.
    Composite { parents: Vec<FeatureId>, weights: Vec<f64>, bias: f64 },
}

impl ConceptKind {
    pub fn weights(&self) -> (&[f64], f64) {
        match self {
            ConceptKind::Leaf { weights, bias, .. } | ConceptKind::Composite { weights, bias, .. } => (weights, *bias),
        }
    }

    pub fn parents(&self) -> &[FeatureId] {
        match self {
            ConceptKind::Leaf { .. } => &[],
            ConceptKind::Composite { parents, .. } => parents,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ConceptKind::Leaf { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConceptNode {
    pub id: ConceptId,
    pub kind: ConceptKind,
    pub epoch_created: u32,
}

/// Graph-wide parameters that define how the graph is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphParams {
    /// Upper bound K on a composite's parent count.
    pub max_parents: usize,
    /// Spacing in pixels of the global lattice that pooling locations snap to.
    pub lattice_stride: u32,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { max_parents: 5, lattice_stride: 2 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown feature node {0}")]
    UnknownFeature(FeatureId),
    #[error("unknown concept node {0}")]
    UnknownConcept(ConceptId),
    #[error("parent {0} does not reference a learned concept")]
    ParentNotConcept(FeatureId),
    #[error("composite has {got} parents, allowed 1..={max}")]
    ParentCount { got: usize, max: usize },
    #[error("{got} weights for {expected} inputs")]
    WeightCount { expected: usize, got: usize },
    #[error("non-finite weight or bias")]
    NonFiniteWeight,
    #[error("invalid geometry {0:?}")]
    InvalidGeometry(Geometry),
    #[error("invalid initial feature: {0}")]
    Feature(#[from] crate::features::FeatureError),
    #[error("sampler catalogs are empty but {0} copies were requested")]
    EmptySampler(usize),
    #[error("negative duplicate tolerance {0}")]
    BadTolerance(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Ordering,
    Reference,
    ParentCount,
    Geometry,
    Weights,
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassifierGraph {
    pub params: GraphParams,
    concepts: Vec<ConceptNode>,
    features: Vec<FeatureNode>,
    classes: BTreeMap<String, Vec<ConceptId>>,
}

fn finite(weights: &[f64], bias: f64) -> bool {
    bias.is_finite() && weights.iter().all(|w| w.is_finite())
}

impl ClassifierGraph {
    pub fn new(params: GraphParams) -> Self {
        Self { params, ..Default::default() }
    }

    /// Reassembles a graph from raw tables without any checking; pair with
    /// [`validate_graph`].
    pub fn from_parts(
        params: GraphParams,
        concepts: Vec<ConceptNode>,
        features: Vec<FeatureNode>,
        classes: BTreeMap<String, Vec<ConceptId>>,
    ) -> Self {
        Self { params, concepts, features, classes }
    }

    pub fn concepts(&self) -> &[ConceptNode] {
        &self.concepts
    }

    pub fn features(&self) -> &[FeatureNode] {
        &self.features
    }

    pub fn classes(&self) -> &BTreeMap<String, Vec<ConceptId>> {
        &self.classes
    }

    pub fn concept(&self, id: ConceptId) -> Option<&ConceptNode> {
        self.concepts.get(id.0 as usize)
    }

    pub fn feature(&self, id: FeatureId) -> Option<&FeatureNode> {
        self.features.get(id.0 as usize)
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn classifiers_for(&self, class: &str) -> &[ConceptId] {
        self.classes.get(class).map_or(&[], Vec::as_slice)
    }

    pub fn register_class(&mut self, class: &str, concept: ConceptId) -> Result<(), GraphError> {
        self.concept(concept).ok_or(GraphError::UnknownConcept(concept))?;
        self.classes.entry(class.to_string()).or_default().push(concept);
        Ok(())
    }

    /// Checks a concept payload against the current graph without inserting.
    pub fn check_concept(&self, kind: &ConceptKind) -> Result<(), GraphError> {
        let next = self.concepts.len() as u32;
        match kind {
            ConceptKind::Leaf { feature, weights, bias } => {
                feature.validate()?;
                if weights.len() != feature.dimension() {
                    return Err(GraphError::WeightCount { expected: feature.dimension(), got: weights.len() });
                }
                if !finite(weights, *bias) {
                    return Err(GraphError::NonFiniteWeight);
                }
            }
            ConceptKind::Composite { parents, weights, bias } => {
                if parents.is_empty() || parents.len() > self.params.max_parents {
                    return Err(GraphError::ParentCount { got: parents.len(), max: self.params.max_parents });
                }
                if weights.len() != parents.len() {
                    return Err(GraphError::WeightCount { expected: parents.len(), got: weights.len() });
                }
                for &p in parents {
                    let node = self.feature(p).ok_or(GraphError::UnknownFeature(p))?;
                    match node.source {
                        FeatureSource::Concept(c) if c.0 < next => {}
                        FeatureSource::Concept(c) => return Err(GraphError::UnknownConcept(c)),
                        FeatureSource::Initial(_) => return Err(GraphError::ParentNotConcept(p)),
                    }
                }
                if !finite(weights, *bias) {
                    return Err(GraphError::NonFiniteWeight);
                }
            }
        }
        Ok(())
    }

    pub fn add_concept_node(&mut self, kind: ConceptKind, epoch: u32) -> Result<ConceptId, GraphError> {
        self.check_concept(&kind)?;
        let id = ConceptId(self.concepts.len() as u32);
        self.concepts.push(ConceptNode { id, kind, epoch_created: epoch });
        Ok(id)
    }

    pub fn add_feature_node(&mut self, source: FeatureSource, geometry: Geometry) -> Result<FeatureId, GraphError> {
        if !geometry.is_valid() {
            return Err(GraphError::InvalidGeometry(geometry));
        }
        match source {
            FeatureSource::Concept(c) => {
                self.concept(c).ok_or(GraphError::UnknownConcept(c))?;
            }
            FeatureSource::Initial(f) => f.validate()?,
        }
        let id = FeatureId(self.features.len() as u32);
        self.features.push(FeatureNode { id, source, geometry });
        Ok(id)
    }

    /// Concepts reachable from `root` through parent links, `root` included,
    /// in ascending id order.
    pub fn subgraph(&self, root: ConceptId) -> Vec<ConceptId> {
        let mut seen = HashSet::new();
        let mut stack = vec![root];
        while let Some(c) = stack.pop() {
            if !seen.insert(c) {
                continue;
            }
            if let Some(node) = self.concept(c) {
                for &p in node.kind.parents() {
                    if let Some(FeatureNode { source: FeatureSource::Concept(pc), .. }) = self.feature(p) {
                        stack.push(*pc);
                    }
                }
            }
        }
        let mut out: Vec<_> = seen.into_iter().collect();
        out.sort();
        out
    }

    /// Depth of a concept: 0 for leaves, 1 + max parent depth otherwise.
    pub fn depth(&self, id: ConceptId) -> usize {
        let mut depth = vec![0usize; id.0 as usize + 1];
        for c in 0..=id.0 as usize {
            let Some(node) = self.concepts.get(c) else { break };
            depth[c] = node
                .kind
                .parents()
                .iter()
                .filter_map(|&p| match self.feature(p)?.source {
                    FeatureSource::Concept(pc) if (pc.0 as usize) < c => Some(depth[pc.0 as usize] + 1),
                    _ => None,
                })
                .max()
                .unwrap_or(0);
        }
        depth[id.0 as usize]
    }
}

/// Checks id ordering, referential integrity, parent-count bounds, weights
/// and geometry. Never aborts; returns every violation found.
pub fn validate_graph(graph: &ClassifierGraph) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut push = |kind, detail: String| out.push(Violation { kind, detail });
    for (i, f) in graph.features.iter().enumerate() {
        if f.id.0 as usize != i {
            push(ViolationKind::Identity, format!("feature at slot {i} has id {}", f.id));
        }
        if !f.geometry.is_valid() {
            push(ViolationKind::Geometry, format!("{} has geometry {:?}", f.id, f.geometry));
        }
        match f.source {
            FeatureSource::Concept(c) if graph.concept(c).is_none() => {
                push(ViolationKind::Reference, format!("{} references missing {c}", f.id))
            }
            FeatureSource::Initial(spec) => {
                if let Err(e) = spec.validate() {
                    push(ViolationKind::Reference, format!("{}: {e}", f.id));
                }
            }
            _ => {}
        }
    }
    for (i, c) in graph.concepts.iter().enumerate() {
        if c.id.0 as usize != i {
            push(ViolationKind::Identity, format!("concept at slot {i} has id {}", c.id));
        }
        let (weights, bias) = c.kind.weights();
        if !finite(weights, bias) {
            push(ViolationKind::Weights, format!("{} has non-finite weights", c.id));
        }
        match &c.kind {
            ConceptKind::Leaf { feature, weights, .. } => {
                if let Err(e) = feature.validate() {
                    push(ViolationKind::Reference, format!("{}: {e}", c.id));
                } else if weights.len() != feature.dimension() {
                    push(ViolationKind::Weights, format!("{} has {} weights for {feature}", c.id, weights.len()));
                }
            }
            ConceptKind::Composite { parents, weights, .. } => {
                if parents.is_empty() || parents.len() > graph.params.max_parents {
                    push(
                        ViolationKind::ParentCount,
                        format!("{} has {} parents, K = {}", c.id, parents.len(), graph.params.max_parents),
                    );
                }
                if weights.len() != parents.len() {
                    push(ViolationKind::Weights, format!("{} has {} weights for {} parents", c.id, weights.len(), parents.len()));
                }
                for &p in parents {
                    match graph.feature(p).map(|f| f.source) {
                        None => push(ViolationKind::Reference, format!("{} cites missing {p}", c.id)),
                        Some(FeatureSource::Initial(_)) => {
                            push(ViolationKind::Reference, format!("{} cites {p}, which is not a concept copy", c.id))
                        }
                        Some(FeatureSource::Concept(pc)) if pc >= c.id => {
                            push(ViolationKind::Ordering, format!("{} cites {p} -> {pc}, not an earlier concept", c.id))
                        }
                        Some(FeatureSource::Concept(_)) => {}
                    }
                }
            }
        }
    }
    for (class, ids) in &graph.classes {
        if class.is_empty() {
            push(ViolationKind::Reference, "empty class name".into());
        }
        for &id in ids {
            if graph.concept(id).is_none() {
                push(ViolationKind::Reference, format!("class {class:?} lists missing {id}"));
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Initial,
    Spawned { epoch: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolEntry {
    pub id: FeatureId,
    pub provenance: Provenance,
}

/// The candidate catalog. Entries refer to feature nodes in the graph arena.
#[derive(Clone, Debug)]
pub struct FeaturePool {
    entries: Vec<PoolEntry>,
    tol: f64,
    index: HashMap<(FeatureSource, [i64; 6]), Vec<FeatureId>>,
}

impl PartialEq for FeaturePool {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.tol.to_bits() == other.tol.to_bits()
    }
}

impl Default for FeaturePool {
    fn default() -> Self {
        Self::new(DEFAULT_DUPLICATE_TOL)
    }
}

impl FeaturePool {
    pub fn new(tol: f64) -> Self {
        Self { entries: Vec::new(), tol: tol.max(0.0), index: HashMap::new() }
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn provenance(&self, id: FeatureId) -> Option<Provenance> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.provenance)
    }

    fn bucket_width(&self) -> f64 {
        (4.0 * self.tol).max(1e-12)
    }

    fn bucket(&self, g: &Geometry) -> [i64; 6] {
        let w = self.bucket_width();
        g.components().map(|v| (v / w).floor() as i64)
    }

    /// Adds an existing arena node to the pool. Ids must be unique.
    pub fn insert(&mut self, graph: &ClassifierGraph, id: FeatureId, provenance: Provenance) -> Result<(), GraphError> {
        let node = graph.feature(id).ok_or(GraphError::UnknownFeature(id))?;
        let key = (node.source, self.bucket(&node.geometry));
        self.index.entry(key).or_default().push(id);
        self.entries.push(PoolEntry { id, provenance });
        Ok(())
    }

    /// Indexed form of [`find_duplicate`] at the pool's own tolerance.
    pub fn lookup(&self, graph: &ClassifierGraph, source: FeatureSource, geometry: &Geometry) -> Option<FeatureId> {
        let w = self.bucket_width();
        let comps = geometry.components();
        let base = self.bucket(geometry);
        // a match can sit in the neighbouring bucket only when the value lies
        // within tol of that bucket boundary
        let mut options: Vec<Vec<i64>> = Vec::with_capacity(6);
        for (d, &v) in comps.iter().enumerate() {
            let b = base[d];
            let mut o = vec![b];
            if v - b as f64 * w <= self.tol {
                o.push(b - 1);
            }
            if (b + 1) as f64 * w - v <= self.tol {
                o.push(b + 1);
            }
            options.push(o);
        }
        let mut best: Option<FeatureId> = None;
        let mut key = [0i64; 6];
        let mut visit = |key: &[i64; 6]| {
            if let Some(ids) = self.index.get(&(source, *key)) {
                for &id in ids {
                    let node = &graph.features[id.0 as usize];
                    if node.geometry.linf_distance(geometry) <= self.tol && best.is_none_or(|b| id < b) {
                        best = Some(id);
                    }
                }
            }
        };
        fn walk(options: &[Vec<i64>], d: usize, key: &mut [i64; 6], visit: &mut dyn FnMut(&[i64; 6])) {
            if d == options.len() {
                visit(key);
                return;
            }
            for &b in &options[d] {
                key[d] = b;
                walk(options, d + 1, key, visit);
            }
        }
        walk(&options, 0, &mut key, &mut visit);
        best
    }

    /// Restores the lookup index after deserialization.
    pub fn rebuild(graph: &ClassifierGraph, tol: f64, entries: Vec<PoolEntry>) -> Result<Self, GraphError> {
        let mut pool = FeaturePool::new(tol);
        for e in entries {
            pool.insert(graph, e.id, e.provenance)?;
        }
        Ok(pool)
    }
}

/// Lowest-id pool entry with the same source whose geometry lies within
/// L-infinity distance `tol` of the candidate's.
pub fn find_duplicate(
    pool: &FeaturePool,
    graph: &ClassifierGraph,
    source: FeatureSource,
    geometry: &Geometry,
    tol: f64,
) -> Option<FeatureId> {
    pool.entries
        .iter()
        .filter_map(|e| graph.feature(e.id))
        .filter(|n| n.source == source && n.geometry.linf_distance(geometry) <= tol)
        .map(|n| n.id)
        .min()
}

/// Catalogs that random copies are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampler {
    pub n_copies: usize,
    /// Locations are the centers of a `grid x grid` partition of the box.
    pub grid: u32,
    pub scales: Vec<f64>,
    /// Search-area half-extents `(ax, ay)`.
    pub areas: Vec<[f64; 2]>,
}

impl Default for Sampler {
    fn default() -> Self {
        Self::desk()
    }
}

impl Sampler {
    /// 5x5 locations, 3 scales, 9 search areas, 200 copies.
    pub fn desk() -> Self {
        let mut areas = vec![[0.0, 0.0]];
        for a in [0.05, 0.1, 0.25, 0.5] {
            areas.push([a, a]);
            areas.push([0.5, a]);
        }
        Self { n_copies: 200, grid: 5, scales: vec![0.25, 0.5, 1.0], areas }
    }

    /// About 100 locations, 5 scales and 100 search areas per location and
    /// scale, for 5e4 copies per concept.
    pub fn full_scale() -> Self {
        let halves: Vec<f64> = (0..10).map(|i| i as f64 * 0.05).collect();
        let areas = halves.iter().flat_map(|&ax| halves.iter().map(move |&ay| [ax, ay])).collect();
        Self { n_copies: 50_000, grid: 10, scales: vec![0.2, 0.4, 0.6, 0.8, 1.0], areas }
    }

    pub fn catalog_size(&self) -> usize {
        (self.grid as usize).pow(2) * self.scales.len() * self.areas.len()
    }

    pub fn locations(&self) -> Vec<[f64; 2]> {
        let n = self.grid as usize;
        let c = |i: usize| (i as f64 + 0.5) / n as f64;
        (0..n).flat_map(|iy| (0..n).map(move |ix| [c(ix), c(iy)])).collect()
    }

    /// Geometry for catalog index `k` (location-major, then scale, then area).
    pub fn geometry(&self, k: usize) -> Geometry {
        let per_loc = self.scales.len() * self.areas.len();
        let n = self.grid as usize;
        let loc = k / per_loc;
        let s = self.scales[(k % per_loc) / self.areas.len()];
        let a = self.areas[k % self.areas.len()];
        let c = |i: usize| (i as f64 + 0.5) / n as f64;
        Geometry::new([c(loc % n), c(loc / n)], [s, s], a)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.n_copies > 0 && self.catalog_size() == 0 {
            return Err(GraphError::EmptySampler(self.n_copies));
        }
        for k in [0, self.catalog_size().saturating_sub(1)] {
            if self.catalog_size() > 0 && !self.geometry(k).is_valid() {
                return Err(GraphError::InvalidGeometry(self.geometry(k)));
            }
        }
        for &s in &self.scales {
            if !(s > 0.0 && s <= 1.0) {
                return Err(GraphError::InvalidGeometry(Geometry::new([0.5, 0.5], [s, s], [0.0, 0.0])));
            }
        }
        for a in &self.areas {
            if !a.iter().all(|v| v.is_finite() && *v >= 0.0) {
                return Err(GraphError::InvalidGeometry(Geometry::new([0.5, 0.5], [1.0, 1.0], *a)));
            }
        }
        Ok(())
    }

    /// The seeded sequence of geometries a spawn draws.
    pub fn draw(&self, seed: u64) -> Result<Vec<Geometry>, GraphError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = self.catalog_size();
        Ok((0..self.n_copies).map(|_| self.geometry(rng.gen_range(0..total))).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SpawnOutcome {
    /// One id per drawn copy, in draw order: the new entry or the duplicate it matched.
    pub ids: Vec<FeatureId>,
    pub inserted: usize,
    pub duplicates: usize,
}

/// Draws `sampler.n_copies` random copies of `concept`, de-duplicates each
/// against the pool and inserts the new ones.
pub fn spawn_feature_nodes(
    graph: &mut ClassifierGraph,
    pool: &mut FeaturePool,
    concept: ConceptId,
    sampler: &Sampler,
    seed: u64,
    epoch: u32,
) -> Result<SpawnOutcome, GraphError> {
    graph.concept(concept).ok_or(GraphError::UnknownConcept(concept))?;
    let source = FeatureSource::Concept(concept);
    let mut out = SpawnOutcome::default();
    for geometry in sampler.draw(seed)? {
        if let Some(existing) = pool.lookup(graph, source, &geometry) {
            out.ids.push(existing);
            out.duplicates += 1;
            continue;
        }
        let id = graph.add_feature_node(source, geometry)?;
        pool.insert(graph, id, Provenance::Spawned { epoch })?;
        out.ids.push(id);
        out.inserted += 1;
    }
    Ok(out)
}

/// Placement grid for the first-stage candidates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialPoolConfig {
    pub features: Vec<InitialFeature>,
    pub scales: Vec<f64>,
    /// Center positions per axis at each scale, spread so the box stays inside.
    pub steps: u32,
}

impl Default for InitialPoolConfig {
    fn default() -> Self {
        use crate::features::HaarKind;
        let mut features: Vec<InitialFeature> = HaarKind::ALL.iter().map(|&kind| InitialFeature::Haar { kind }).collect();
        features.push(InitialFeature::Gradient { cells: 1, bins: 9 });
        features.push(InitialFeature::Gradient { cells: 2, bins: 4 });
        features.push(InitialFeature::Hue { cells: 1, bins: 12 });
        Self { features, scales: vec![0.25, 0.5, 1.0], steps: 5 }
    }
}

impl InitialPoolConfig {
    pub fn geometries(&self) -> Vec<Geometry> {
        let mut out = Vec::new();
        for &s in &self.scales {
            let positions: Vec<f64> = if s >= 1.0 || self.steps <= 1 {
                vec![0.5]
            } else {
                (0..self.steps).map(|i| s / 2.0 + i as f64 * (1.0 - s) / (self.steps - 1) as f64).collect()
            };
            for &y in &positions {
                for &x in &positions {
                    out.push(Geometry::new([x, y], [s, s], [0.0, 0.0]));
                }
            }
        }
        out
    }
}

/// Fills an empty pool with every initial feature at every placement (F0).
pub fn seed_initial_pool(
    graph: &mut ClassifierGraph,
    pool: &mut FeaturePool,
    config: &InitialPoolConfig,
) -> Result<Vec<FeatureId>, GraphError> {
    let mut ids = Vec::new();
    for feature in &config.features {
        let source = FeatureSource::Initial(*feature);
        for g in config.geometries() {
            if pool.lookup(graph, source, &g).is_some() {
                continue;
            }
            let id = graph.add_feature_node(source, g)?;
            pool.insert(graph, id, Provenance::Initial)?;
            ids.push(id);
        }
    }
    Ok(ids)
}
