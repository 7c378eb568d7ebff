//! The three training configurations and the test-set protocol.
//!
//! The reference center never enters the test set. Single-site trains on it
//! alone and predicts every test subject. Centralized and federated split
//! the test set into center-stratified folds and, per fold, train on the
//! reference center plus the other folds.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Configuration, ExperimentConfig, FeaturePipeline, ModelFamily, TransportKind};
use crate::brainage::PredictionRecord;
use crate::cohort::{stratified_center_kfold, Cohort, FoldAssignment, SubjectRecord};
use crate::error::{Error, Result};
use crate::federation::{
    run_federation, run_tcp_client, ClientSite, FederationPlan, InProcessTransport, RoundRecord,
    TcpServerTransport,
};
use crate::model::{predict, tune_l2_cv, ModelParams, Optimizer, TrainConfig};
use crate::rng::{derive_seed, stream};

const SINGLE_SITE_SLOT: u64 = u64::MAX;

/// Reference-center subjects, the test set and its fold assignment.
pub struct Split<'a> {
    pub reference_center: u32,
    pub reference: Vec<&'a SubjectRecord>,
    pub test: Vec<&'a SubjectRecord>,
    pub folds: FoldAssignment,
}

impl<'a> Split<'a> {
    /// Training subjects for test fold `fold`: the reference center plus
    /// every test subject outside the fold, in subject-id order.
    pub fn training_set(&self, fold: usize) -> Vec<&'a SubjectRecord> {
        let mut out: Vec<&SubjectRecord> = self.reference.clone();
        out.extend(
            self.test
                .iter()
                .copied()
                .filter(|s| self.folds.fold_of(s.subject_id) != Some(fold)),
        );
        out.sort_by_key(|s| s.subject_id);
        out
    }

    pub fn held_out(&self, fold: usize) -> Vec<&'a SubjectRecord> {
        self.test
            .iter()
            .copied()
            .filter(|s| self.folds.fold_of(s.subject_id) == Some(fold))
            .collect()
    }
}

pub fn split_cohort<'a>(
    cohort: &'a Cohort,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Split<'a>> {
    let reference_center = cfg.reference_center_of(cohort)?;
    let (mut reference, mut test): (Vec<&SubjectRecord>, Vec<&SubjectRecord>) = cohort
        .subjects
        .iter()
        .partition(|s| s.center_id == reference_center);
    if test.is_empty() {
        return Err(Error::Config(
            "no subjects outside the reference center".into(),
        ));
    }
    reference.sort_by_key(|s| s.subject_id);
    test.sort_by_key(|s| s.subject_id);
    let test_records: Vec<SubjectRecord> = test.iter().map(|s| (*s).clone()).collect();
    let folds = stratified_center_kfold(&test_records, cfg.cv_folds_test, seed)?;
    Ok(Split {
        reference_center,
        reference,
        test,
        folds,
    })
}

fn training_seed(seed: u64, family: ModelFamily, slot: u64) -> u64 {
    derive_seed(seed, &[stream::TRAINING, family.code(), slot])
}

fn mean_age(subjects: &[&SubjectRecord]) -> f64 {
    subjects.iter().map(|s| s.age).sum::<f64>() / subjects.len() as f64
}

/// Model fitted for one fold (or the single single-site model).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    /// Test fold predicted by this model; `None` for single-site.
    pub fold: Option<usize>,
    pub l2_penalty: f64,
    pub intercept_init: f64,
    pub n_train: usize,
    pub n_clients: usize,
    pub checksum: String,
    pub params: ModelParams,
    /// Per-round history of federated runs.
    pub history: Vec<RoundRecord>,
    #[serde(skip)]
    pub predictions: Vec<PredictionRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub seed: u64,
    pub family: ModelFamily,
    pub configuration: Configuration,
    pub reference_center: u32,
    /// Test fold per test subject (centralized and federated).
    pub fold_of: BTreeMap<u64, usize>,
    pub folds: Vec<FoldOutcome>,
    /// One prediction per test subject, by subject id.
    #[serde(skip)]
    pub records: Vec<PredictionRecord>,
}

fn centralized_cfg(
    cfg: &ExperimentConfig,
    family: ModelFamily,
    seed: u64,
    intercept_init: f64,
) -> TrainConfig {
    let epochs = cfg.epoch_budget();
    let sched = cfg.schedules(family);
    TrainConfig {
        epochs,
        batch_size: cfg.batch_size,
        l2_penalty: 0.0,
        schedule: sched.centralized.with_horizon(epochs),
        optimizer: sched.centralized_optimizer,
        seed,
        intercept_init,
    }
}

fn predict_all(
    cohort: &Cohort,
    pipeline: &FeaturePipeline,
    params: &ModelParams,
    subjects: &[&SubjectRecord],
) -> Result<Vec<PredictionRecord>> {
    subjects
        .iter()
        .map(|s| {
            Ok(PredictionRecord::new(
                s.subject_id,
                s.age,
                predict(params, &pipeline.transform(cohort, s))?,
            ))
        })
        .collect()
}

/// Fits a pooled model on `train` with the L2 penalty chosen by CV (linear
/// families) and the intercept starting at `intercept_init`.
fn fit_pooled(
    cohort: &Cohort,
    cfg: &ExperimentConfig,
    family: ModelFamily,
    train: &[&SubjectRecord],
    seed: u64,
    intercept_init: f64,
) -> Result<(FeaturePipeline, TrainConfig, ModelParams)> {
    let pipeline = FeaturePipeline::fit(cohort, train, family)?;
    let data = pipeline.dataset(cohort, train)?;
    let spec = cfg.model_spec(family);
    let mut tcfg = centralized_cfg(cfg, family, seed, intercept_init);
    tcfg.l2_penalty = if family.is_linear() {
        tune_l2_cv(&data, &cfg.l2_grid, cfg.cv_folds_tuning, &tcfg, &spec)?
    } else {
        cfg.feedforward_l2
    };
    let params = spec.fit(&data, &tcfg)?;
    Ok((pipeline, tcfg, params))
}

fn single_site(
    cohort: &Cohort,
    cfg: &ExperimentConfig,
    family: ModelFamily,
    seed: u64,
    split: &Split,
) -> Result<FoldOutcome> {
    let intercept = mean_age(&split.reference);
    let tseed = training_seed(seed, family, SINGLE_SITE_SLOT);
    let (pipeline, tcfg, params) =
        fit_pooled(cohort, cfg, family, &split.reference, tseed, intercept)?;
    Ok(FoldOutcome {
        fold: None,
        l2_penalty: tcfg.l2_penalty,
        intercept_init: intercept,
        n_train: split.reference.len(),
        n_clients: 1,
        checksum: params.checksum(),
        predictions: predict_all(cohort, &pipeline, &params, &split.test)?,
        params,
        history: Vec::new(),
    })
}

/// L2 penalty selected for the single-site model, reused by federated runs.
pub fn single_site_l2(
    cohort: &Cohort,
    cfg: &ExperimentConfig,
    family: ModelFamily,
    seed: u64,
    split: &Split,
) -> Result<f64> {
    if !family.is_linear() {
        return Ok(cfg.feedforward_l2);
    }
    let pipeline = FeaturePipeline::fit(cohort, &split.reference, family)?;
    let data = pipeline.dataset(cohort, &split.reference)?;
    let tseed = training_seed(seed, family, SINGLE_SITE_SLOT);
    let tcfg = centralized_cfg(cfg, family, tseed, mean_age(&split.reference));
    Ok(tune_l2_cv(
        &data,
        &cfg.l2_grid,
        cfg.cv_folds_tuning,
        &tcfg,
        &cfg.model_spec(family),
    )?)
}

fn centralized_fold(
    cohort: &Cohort,
    cfg: &ExperimentConfig,
    family: ModelFamily,
    seed: u64,
    split: &Split,
    fold: usize,
) -> Result<FoldOutcome> {
    let train = split.training_set(fold);
    let intercept = mean_age(&train);
    let tseed = training_seed(seed, family, fold as u64);
    let (pipeline, tcfg, params) = fit_pooled(cohort, cfg, family, &train, tseed, intercept)?;
    Ok(FoldOutcome {
        fold: Some(fold),
        l2_penalty: tcfg.l2_penalty,
        intercept_init: intercept,
        n_train: train.len(),
        n_clients: 1,
        checksum: params.checksum(),
        predictions: predict_all(cohort, &pipeline, &params, &split.held_out(fold))?,
        params,
        history: Vec::new(),
    })
}

/// Everything needed to run one federated fold, on any transport.
pub struct FederatedFold {
    pub fold: usize,
    pub plan: FederationPlan,
    pub pipeline: FeaturePipeline,
    pub test_ids: Vec<u64>,
}

/// Builds the federation for test fold `fold`: one client per center with
/// training subjects, features scaled with the pooled training statistics,
/// intercept starting at the reference center's mean age and the L2 penalty
/// `l2` (the single-site choice).
pub fn federated_fold(
    cohort: &Cohort,
    cfg: &ExperimentConfig,
    family: ModelFamily,
    seed: u64,
    split: &Split,
    fold: usize,
    l2: f64,
) -> Result<FederatedFold> {
    let train = split.training_set(fold);
    let pipeline = FeaturePipeline::fit(cohort, &train, family)?;
    let tseed = training_seed(seed, family, fold as u64);
    let mut by_center: BTreeMap<u32, Vec<&SubjectRecord>> = BTreeMap::new();
    for s in &train {
        by_center.entry(s.center_id).or_default().push(s);
    }
    let clients = by_center
        .into_iter()
        .map(|(c, subjects)| {
            let data = pipeline.dataset(cohort, &subjects)?;
            Ok(ClientSite::new(
                c,
                data,
                derive_seed(tseed, &[stream::CLIENT, c as u64]),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let rounds = cfg.round_budget(family);
    let train_cfg = TrainConfig {
        epochs: rounds,
        batch_size: cfg.batch_size,
        l2_penalty: l2,
        schedule: cfg.schedules(family).federated.with_horizon(rounds),
        optimizer: Optimizer::Sgd,
        seed: tseed,
        intercept_init: mean_age(&split.reference),
    };
    let plan = FederationPlan {
        clients,
        rounds,
        train_cfg,
        model: cfg.model_spec(family),
    };
    plan.validate()?;
    Ok(FederatedFold {
        fold,
        plan,
        pipeline,
        test_ids: split.held_out(fold).iter().map(|s| s.subject_id).collect(),
    })
}

impl FederatedFold {
    /// Runs the plan in this process.
    pub fn run_in_process(&self) -> Result<(ModelParams, Vec<RoundRecord>)> {
        Ok(run_federation(
            &self.plan,
            &mut InProcessTransport::new(&self.plan),
        )?)
    }

    /// Runs the plan over loopback TCP with one client thread per center.
    pub fn run_loopback_tcp(
        &self,
        timeout: std::time::Duration,
    ) -> Result<(ModelParams, Vec<RoundRecord>)> {
        let listener =
            std::net::TcpListener::bind("127.0.0.1:0").map_err(|e| Error::io("127.0.0.1:0", e))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Error::io("127.0.0.1:0", e))?
            .to_string();
        let roster = self
            .plan
            .clients
            .iter()
            .map(|c| (c.client_id, c.sample_count))
            .collect();
        let cfg = &self.plan.train_cfg;
        std::thread::scope(|s| {
            let clients: Vec<_> = self
                .plan
                .clients
                .iter()
                .map(|c| s.spawn(|| run_tcp_client(&addr, c, cfg, timeout)))
                .collect();
            let result = TcpServerTransport::accept(&listener, &roster, timeout)
                .and_then(|mut t| run_federation(&self.plan, &mut t));
            for h in clients {
                let served = h
                    .join()
                    .map_err(|_| Error::Config("federated client thread panicked".into()))?;
                if result.is_ok() {
                    served?;
                }
            }
            Ok(result?)
        })
    }

    /// Packages the result of running `self.plan` into a fold outcome.
    pub fn finish(
        &self,
        cohort: &Cohort,
        params: ModelParams,
        history: Vec<RoundRecord>,
    ) -> Result<FoldOutcome> {
        let index: BTreeMap<u64, &SubjectRecord> =
            cohort.subjects.iter().map(|s| (s.subject_id, s)).collect();
        let test: Vec<&SubjectRecord> = self.test_ids.iter().map(|id| index[id]).collect();
        Ok(FoldOutcome {
            fold: Some(self.fold),
            l2_penalty: self.plan.train_cfg.l2_penalty,
            intercept_init: self.plan.train_cfg.intercept_init,
            n_train: self.plan.clients.iter().map(|c| c.sample_count).sum(),
            n_clients: self.plan.clients.len(),
            checksum: params.checksum(),
            predictions: predict_all(cohort, &self.pipeline, &params, &test)?,
            params,
            history,
        })
    }
}

/// Trains `family` under `configuration` and predicts every test subject
/// exactly once.
pub fn run_training_protocol(
    cohort: &Cohort,
    cfg: &ExperimentConfig,
    family: ModelFamily,
    configuration: Configuration,
    seed: u64,
) -> Result<ProtocolRun> {
    let split = split_cohort(cohort, cfg, seed)?;
    let k = cfg.cv_folds_test;
    let folds: Vec<FoldOutcome> = match configuration {
        Configuration::SingleSite => vec![single_site(cohort, cfg, family, seed, &split)?],
        Configuration::Centralized => (0..k)
            .into_par_iter()
            .map(|f| centralized_fold(cohort, cfg, family, seed, &split, f))
            .collect::<Result<_>>()?,
        Configuration::Federated => {
            let l2 = single_site_l2(cohort, cfg, family, seed, &split)?;
            (0..k)
                .into_par_iter()
                .map(|f| {
                    let ff = federated_fold(cohort, cfg, family, seed, &split, f, l2)?;
                    let (params, history) = match cfg.transport {
                        TransportKind::Inproc => ff.run_in_process()?,
                        TransportKind::Tcp => ff.run_loopback_tcp(cfg.tcp_timeout())?,
                    };
                    ff.finish(cohort, params, history)
                })
                .collect::<Result<_>>()?
        }
    };
    let mut records: Vec<PredictionRecord> = folds
        .iter()
        .flat_map(|f| f.predictions.iter().cloned())
        .collect();
    records.sort_by_key(|r| r.subject_id);
    let fold_of = match configuration {
        Configuration::SingleSite => BTreeMap::new(),
        _ => split.folds.folds.clone(),
    };
    Ok(ProtocolRun {
        seed,
        family,
        configuration,
        reference_center: split.reference_center,
        fold_of,
        folds,
        records,
    })
}
