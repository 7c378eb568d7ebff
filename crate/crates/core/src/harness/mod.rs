//! End-to-end experiment: cohort, training configurations, BrainAGE,
//! statistics and reports.

mod analysis;
mod config;
mod features;
mod protocol;
mod report;

pub use analysis::{
    cohort_summary, compare_error_differences, compare_errors, outcome_analysis, outcome_design,
    paired_error_differences, phenotype_analysis, phenotype_flag, CenterDependence, CenterSummary,
    ErrorComparison, ErrorSummary, GroupComparison, OutcomeAnalysis, BINARY_VARIABLES,
    OUTCOME_PREDICTORS, PHENOTYPES,
};
pub use config::{
    CohortSource, Configuration, ExperimentConfig, FamilySchedules, ModelFamily, TransportKind,
};
pub use features::{raw_features, FeaturePipeline};
pub use protocol::{
    federated_fold, run_training_protocol, single_site_l2, split_cohort, FederatedFold,
    FoldOutcome, ProtocolRun, Split,
};
pub use report::{
    error_comparisons, error_table, evaluate, generate_data, report, stats, train, write_run,
    ConfigurationComparison,
};
