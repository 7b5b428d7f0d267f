pub mod cli;
pub mod cluster;
pub mod corpus;
pub mod features;
pub mod graph;
pub mod image;
pub mod inference;
pub mod learner;
pub mod model_io;
pub mod selftest;
