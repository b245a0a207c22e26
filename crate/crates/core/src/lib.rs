//! Execution-Cache-Memory performance modeling for stencil kernels.
//!
//! Machine and kernel descriptions are parsed from small INI-like files,
//! combined into in-core times, layer conditions and per-boundary traffic,
//! and composed into an ECM model with scaling and Roofline comparisons. A
//! cacheline-level LRU simulator serves as an independent check.

pub mod analysis;
pub mod cachesim;
pub mod ecm;
pub mod error;
pub mod incore;
pub mod kernel;
pub mod layers;
pub mod machine;
pub mod scaling;
mod sections;
pub mod traffic;

pub use analysis::{analyze, analyze_with, Analysis};
pub use ecm::{predict, EcmModel, EcmPrediction, Metric, Precision};
pub use error::{Error, Result};
pub use kernel::{parse_kernel, GridConfig, KernelSpec};
pub use machine::{parse_machine, MachineModel};
