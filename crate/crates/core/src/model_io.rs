//! Versioned JSON model files. Every float is written as a decimal string
//! with 17 significant digits, which parses back to the identical `f64`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::InitialFeature;
use crate::graph::{
    validate_graph, ClassifierGraph, ConceptId, ConceptKind, ConceptNode, FeatureId, FeatureNode, FeaturePool,
    FeatureSource, Geometry, GraphParams, PoolEntry, Provenance, Violation,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model parse error: {0}")]
    Parse(String),
    #[error("unsupported model format_version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("model violates graph invariant(s): {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invariant(Vec<Violation>),
}

/// A graph, its pool and an optional echo of how it was trained.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub graph: ClassifierGraph,
    pub pool: FeaturePool,
    /// Free-form training record (seed, configuration, reports).
    pub training: Option<serde_json::Value>,
}

fn enc(v: f64) -> String {
    format!("{v:.16e}")
}

fn dec(s: &str) -> Result<f64, ModelError> {
    s.trim().parse::<f64>().map_err(|_| ModelError::Parse(format!("bad float `{s}`")))
}

fn enc_all(v: &[f64]) -> Vec<String> {
    v.iter().map(|&x| enc(x)).collect()
}

fn dec_all(v: &[String]) -> Result<Vec<f64>, ModelError> {
    v.iter().map(|s| dec(s)).collect()
}

fn dec_pair(v: &[String; 2]) -> Result<[f64; 2], ModelError> {
    Ok([dec(&v[0])?, dec(&v[1])?])
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    format_version: u32,
    params: GraphParams,
    concepts: Vec<ConceptDoc>,
    features: Vec<FeatureDoc>,
    classes: BTreeMap<String, Vec<u32>>,
    pool: PoolDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct VersionProbe {
    format_version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum ConceptDoc {
    Leaf { id: u32, epoch: u32, feature: InitialFeature, weights: Vec<String>, bias: String },
    Composite { id: u32, epoch: u32, parents: Vec<u32>, weights: Vec<String>, bias: String },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SourceDoc {
    Concept(u32),
    Initial(InitialFeature),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureDoc {
    id: u32,
    source: SourceDoc,
    location: [String; 2],
    scale: [String; 2],
    area: [String; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolDoc {
    tolerance: String,
    entries: Vec<PoolEntryDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolEntryDoc {
    id: u32,
    provenance: Provenance,
}

/// Serialized form of a model; deterministic for equal inputs.
pub fn model_to_string(graph: &ClassifierGraph, pool: &FeaturePool, training: Option<&serde_json::Value>) -> String {
    let concepts = graph
        .concepts()
        .iter()
        .map(|c| match &c.kind {
            ConceptKind::Leaf { feature, weights, bias } => ConceptDoc::Leaf {
                id: c.id.0,
                epoch: c.epoch_created,
                feature: *feature,
                weights: enc_all(weights),
                bias: enc(*bias),
            },
            ConceptKind::Composite { parents, weights, bias } => ConceptDoc::Composite {
                id: c.id.0,
                epoch: c.epoch_created,
                parents: parents.iter().map(|p| p.0).collect(),
                weights: enc_all(weights),
                bias: enc(*bias),
            },
        })
        .collect();
    let features = graph
        .features()
        .iter()
        .map(|f| FeatureDoc {
            id: f.id.0,
            source: match f.source {
                FeatureSource::Concept(c) => SourceDoc::Concept(c.0),
                FeatureSource::Initial(i) => SourceDoc::Initial(i),
            },
            location: f.geometry.location.map(enc),
            scale: f.geometry.scale.map(enc),
            area: f.geometry.area.map(enc),
        })
        .collect();
    let doc = Doc {
        format_version: FORMAT_VERSION,
        params: graph.params,
        concepts,
        features,
        classes: graph.classes().iter().map(|(k, v)| (k.clone(), v.iter().map(|c| c.0).collect())).collect(),
        pool: PoolDoc {
            tolerance: enc(pool.tolerance()),
            entries: pool.entries().iter().map(|e| PoolEntryDoc { id: e.id.0, provenance: e.provenance }).collect(),
        },
        training: training.cloned(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("model document serializes");
    s.push('\n');
    s
}

pub fn model_from_str(text: &str) -> Result<Model, ModelError> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(ModelError::Version(probe.format_version));
    }
    let doc: Doc = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    let concepts = doc
        .concepts
        .iter()
        .map(|c| {
            Ok(match c {
                ConceptDoc::Leaf { id, epoch, feature, weights, bias } => ConceptNode {
                    id: ConceptId(*id),
                    kind: ConceptKind::Leaf { feature: *feature, weights: dec_all(weights)?, bias: dec(bias)? },
                    epoch_created: *epoch,
                },
                ConceptDoc::Composite { id, epoch, parents, weights, bias } => ConceptNode {
                    id: ConceptId(*id),
                    kind: ConceptKind::Composite {
                        parents: parents.iter().map(|&p| FeatureId(p)).collect(),
                        weights: dec_all(weights)?,
                        bias: dec(bias)?,
                    },
                    epoch_created: *epoch,
                },
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let features = doc
        .features
        .iter()
        .map(|f| {
            Ok(FeatureNode {
                id: FeatureId(f.id),
                source: match &f.source {
                    SourceDoc::Concept(c) => FeatureSource::Concept(ConceptId(*c)),
                    SourceDoc::Initial(i) => FeatureSource::Initial(*i),
                },
                geometry: Geometry::new(dec_pair(&f.location)?, dec_pair(&f.scale)?, dec_pair(&f.area)?),
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let classes = doc.classes.iter().map(|(k, v)| (k.clone(), v.iter().map(|&c| ConceptId(c)).collect())).collect();
    let graph = ClassifierGraph::from_parts(doc.params, concepts, features, classes);
    validate_graph(&graph).map_err(ModelError::Invariant)?;
    let entries: Vec<PoolEntry> =
        doc.pool.entries.iter().map(|e| PoolEntry { id: FeatureId(e.id), provenance: e.provenance }).collect();
    let tol = dec(&doc.pool.tolerance)?;
    let pool = FeaturePool::rebuild(&graph, tol, entries).map_err(|e| {
        ModelError::Invariant(vec![Violation { kind: crate::graph::ViolationKind::Reference, detail: e.to_string() }])
    })?;
    Ok(Model { graph, pool, training: doc.training })
}

pub fn save_model(
    graph: &ClassifierGraph,
    pool: &FeaturePool,
    training: Option<&serde_json::Value>,
    path: &Path,
) -> Result<(), ModelError> {
    if let Err(v) = validate_graph(graph) {
        return Err(ModelError::Invariant(v));
    }
    fs::write(path, model_to_string(graph, pool, training))
        .map_err(|source| ModelError::Io { path: path.display().to_string(), source })
}

pub fn load_model(path: &Path) -> Result<Model, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    model_from_str(&text)
}
