//! Community detection in multilayer networks whose layers fall into a few
//! groups, each group sharing one stochastic block model.

pub mod alma;
pub mod cluster;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod init;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod synthgen;
pub mod tensor;
pub mod twist;

pub use alma::{alma_fit, AlmaConfig, FactorPair};
pub use error::{Error, Result};
pub use model::{GroundTruth, MmlsbmInstance};
pub use pipeline::{ClusteringErrors, ClusteringResult};
pub use tensor::{Matrix, Tensor3};
