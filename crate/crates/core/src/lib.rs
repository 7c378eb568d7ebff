//! Federated brain-age simulation toolkit.
//!
//! The crate is organised around the pipeline it reproduces:
//!
//! * [`model`]: linear MAE regressors trained by SGD, a layer-normalised
//!   feedforward regressor, learning-rate schedules and L2 tuning.
//! * [`federation`]: FedAvg orchestration over an in-process or TCP transport.
//! * [`cohort`]: synthetic multi-site cohorts, CSV I/O, min-max scaling and
//!   center-stratified folds.
//! * [`brainage`]: predicted age difference and cross-validated bias correction.
//! * [`stats`]: Wilcoxon, Mann-Whitney, Kruskal-Wallis, Yates chi-squared and
//!   logistic regression with Wald inference.
//! * [`harness`]: the end-to-end experiment protocol and its reports.

pub mod brainage;
pub mod cohort;
pub mod error;
pub mod federation;
pub mod harness;
pub mod model;
pub mod rng;
pub mod stats;

pub use brainage::{BiasLine, PredictionRecord};
pub use cohort::{Cohort, CohortSpec, FoldAssignment, NormStats, SubjectRecord};
pub use error::{Error, Result};
pub use federation::{ClientSite, ClientUpdate, FederationPlan, RoundRecord};
pub use harness::{Configuration, ExperimentConfig, ModelFamily};
pub use model::{Dataset, LrSchedule, ModelParams, ModelSpec, Optimizer, TrainConfig};
pub use stats::{LogisticFit, StatResult};
