//! Gradient-saliency structure poisoning attacks on semi-supervised node
//! classifiers, with homophily-restricted objectives and numerical
//! diagnostics for the oversmoothing and label-propagation arguments behind
//! them.

pub mod attack;
pub mod autodiff;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod io;
pub mod rng;
pub mod sparse;
pub mod surrogate;
pub mod victim;

pub use attack::{AttackConfig, AttackTrace, LossKind, PerturbationRecord, SaliencyMap};
pub use error::{Error, Result};
pub use graph::{Graph, LabelData, NormalizedView};
pub use sparse::Csr;
pub use surrogate::{Architecture, SurrogateParams, TrainConfig};
pub use victim::EvalReport;
