//! Taxonomy-informed representation learning on text-rich networks.
//!
//! The pipeline has two stages. Stage one pretrains a graph-convolutional
//! encoder with a similarity-guided contrastive loss, clusters the frozen
//! embeddings with hierarchical K-Means, and optionally refines the finest
//! clusters through an LLM (split / merge / redistribute / summarize /
//! reassign). Stage two trains a fresh encoder plus classification head,
//! regularized so that prototype distances in the embedding space correlate
//! with cophenetic distances in the constructed taxonomy tree.
//!
//! The crate is organized around the pipeline:
//!
//! * [`graph`] / [`io`]: data model and file formats
//! * [`similarity`]: positive-pair indicator matrices and the
//!   approximation-error oracle
//! * [`encoder`]: GCN encoder with hand-derived backprop
//! * [`objectives`]: contrastive, cross-entropy, and cophenetic losses
//! * [`kmeans`] / [`taxonomy`]: flat clustering and tree construction
//! * [`refiner`]: the pluggable split/merge/summarize/assign interface
//! * [`trainer`]: stage orchestration and evaluation
//! * [`synthetic`]: seeded dataset generators for experiments and tests

pub mod encoder;
pub mod error;
pub mod graph;
pub mod io;
pub mod kmeans;
pub mod matrix;
pub mod metrics;
pub mod objectives;
pub mod optim;
pub mod refiner;
pub mod rng;
pub mod similarity;
pub mod synthetic;
pub mod taxonomy;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{ClusterAssignment, NodeSplit, TextRichGraph};
pub use matrix::Matrix;
pub use taxonomy::{TaxonomyTree, TreeShape};
