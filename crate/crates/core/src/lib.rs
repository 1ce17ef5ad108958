//! Supervised stochastic blockmodels for node classification, fit by collapsed
//! variational inference.
//!
//! Three models share one interface ([`model::FittedModel`]):
//! the stochastic blockmodel (`sbm`, roles are classes), the supervised
//! single-membership blockmodel (`ssmb`, roles carry class distributions) and
//! the supervised mixed-membership blockmodel (`smmb`, role pairs per
//! interaction with a softmax class likelihood).

pub mod error;
pub mod eval;
pub mod generator;
pub mod graph;
pub mod model;
pub mod node_cvb;
pub mod rng;
pub mod sbm;
pub mod smmb;
pub mod softmax;
pub mod ssmb;
pub mod stats;
pub mod summary;

pub use error::{Error, Result};
pub use graph::{DirectedGraph, LabelTable, Split};
pub use model::{Blockmodel, FitConfig, FittedModel, ModelRegistry};
pub use stats::SuffStats;
