//! Training: logistic fitting, cluster-guided boosting and the epoch loop
//! that grows the graph and its feature pool.

pub mod boost;
pub mod epoch;
pub mod logistic;

use thiserror::Error;

use crate::cluster::ClusterError;
use crate::graph::GraphError;
use crate::image::Image;
use crate::inference::InferenceError;

pub use boost::{
    adaboost_reweight, alpha, clusterboost, evaluate_candidate, heaviest_cluster, weighted_error, BoostConfig,
    BoostOutcome, Candidate, CandidateInputs, CandidateRule, CandidateScorer, Selection, ERR_EPS,
};
pub use epoch::{
    accuracy, run_epoch, train, ClusterSubset, ClusteringConfig, EpochConfig, EpochReport, EpochSpec, TrainConfig,
    TrainOutcome, TrainState,
};
pub use logistic::{fit_logistic, LogisticFit, LogisticParams, LogisticProblem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("need at least one positive and one negative sample")]
    OneSided,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("target cluster is empty")]
    EmptyCluster,
    #[error("cluster members must be positive samples")]
    ClusterNotPositive,
    #[error("feature pool has no unused candidate left")]
    PoolExhausted,
    #[error("no samples for class `{0}`")]
    MissingClass(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// A training crop with its label.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub positive: bool,
    pub class: String,
    /// Index of the annotation (or mined box) the crop came from.
    pub source: usize,
    /// The context margin was cut by the image border.
    pub clipped: bool,
}
