//! Hybrid PV power forecaster: a genetic-programming symbolic regressor and a
//! from-scratch multilayer perceptron whose predictions are averaged.
//!
//! The crate is organised bottom-up:
//!
//! - [`expr`]: expression trees, the genotype of the symbolic regressor
//! - [`gp`]: the evolutionary loop that searches over expression trees
//! - [`mlp`]: feedforward network trained by backpropagation
//! - [`featsel`]: elastic-net and boosted-stump feature importance
//! - [`metrics`]: RMSE / MAE / R² and time-ordered cross-validation
//! - [`data`]: time-series frames, CSV ingest, cleaning, lags, scaling
//! - [`pvsynth`]: synthetic weather and PV power generator
//! - [`pipeline`]: the end-to-end experiment and the averaged hybrid model

pub mod data;
pub mod error;
pub mod expr;
pub mod featsel;
pub mod gp;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod pvsynth;
pub mod rng;

pub use data::{ScalingParams, TimeSeriesFrame};
pub use error::{Error, Result};
pub use expr::{ExprNode, ExprTree, OpKind};
pub use gp::{GpConfig, GpRunReport, Individual};
pub use metrics::MetricsReport;
pub use mlp::{Activation, MlpConfig, NetworkParams};
pub use pipeline::{ComparisonTable, ExperimentConfig, HybridModel};
