//! Training and evaluation toolkit for MOS-prediction regressors built on
//! rank-similarity objectives.
//!
//! The crate covers the full loop at desk scale:
//!
//! - [`data`]: dataset ingestion (JSONL/CSV), deterministic splitting, and
//!   per-system grouping;
//! - [`rankloss`]: the partial-rank-matrix loss family (plain, cache-extended,
//!   combined with a regression term, and a margin baseline), each with an
//!   analytic gradient;
//! - [`metrics`]: MSE/LCC/SRCC/KTAU at utterance and system level, with
//!   undefined correlations surfaced instead of masked;
//! - [`model`]: linear and MLP regressors with hand-rolled backprop, SGD/Adam,
//!   and dev-SRCC-gated checkpointing;
//! - [`semisup`]: balanced pseudo-label selection and the iterative
//!   self-training driver;
//! - [`simulate`]: a synthetic listening-test generator plus the distortion
//!   and loss-comparison experiments that show why absolute-value metrics
//!   mislead when comparing rank-trained predictors.
//!
//! Everything is deterministic given a single seed; randomness is routed
//! through named substreams (see [`rng`]).

pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod rankloss;
pub mod rng;
pub mod semisup;
pub mod simulate;

pub use data::{group_by_system, load_dataset, split, Dataset, DatasetRecord, FileFormat, SplitSpec};
pub use error::{Error, Result};
pub use metrics::{both_level_reports, metric_report, Level, MetricReport, ReportStatus};
pub use model::{
    init_regressor, predict, train, Activation, Architecture, OptimizerKind, Regressor,
    TrainConfig, TrainLog,
};
pub use rankloss::{
    combined_loss, eprs_loss, gradient_check, l1_loss, partial_rank_matrix, prs_loss,
    utmos_margin_loss, BoundLoss, ComparisonCache, LossConfig, LossFamily, LossResult,
    PartialRankMatrix,
};
pub use semisup::{
    bapmos_select, generate_pseudo, run_semisup, BApMOSConfig, PseudoLabelPool, RangePolicy,
    RoundArtifact, Selection, SemiSupConfig, SemiSupOutcome,
};
pub use simulate::{
    distort, run_distortion_experiment, run_loss_comparison, simulate_dataset, ComparisonTable,
    DistortionExperiment, DistortionKind, DistortionSpec, DistortionTarget, SimConfig,
};
