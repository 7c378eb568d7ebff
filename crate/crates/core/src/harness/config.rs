use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::{generate_cohort, load_cohort_csv, Cohort, CohortSpec};
use crate::error::{Error, Result};
use crate::model::{LrSchedule, ModelSpec, Optimizer, DEFAULT_HIDDEN, DEFAULT_L2_GRID};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    /// Linear model on the ICV-normalized volume block.
    VolSimple,
    /// Linear model on the degree-2 expansion of the volume block.
    VolAugmented,
    /// Linear model on the radiomic block.
    RadiomicsLike,
    /// Layer-normalized feedforward network on the volume block.
    Feedforward,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::VolSimple,
        ModelFamily::VolAugmented,
        ModelFamily::RadiomicsLike,
        ModelFamily::Feedforward,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelFamily::VolSimple => "vol_simple",
            ModelFamily::VolAugmented => "vol_augmented",
            ModelFamily::RadiomicsLike => "radiomics_like",
            ModelFamily::Feedforward => "feedforward",
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self, ModelFamily::Feedforward)
    }

    pub(crate) fn code(&self) -> u64 {
        *self as u64 + 1
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model family `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    Centralized,
    Federated,
    SingleSite,
}

impl Configuration {
    pub const ALL: [Configuration; 3] = [
        Configuration::Centralized,
        Configuration::Federated,
        Configuration::SingleSite,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Configuration::Centralized => "centralized",
            Configuration::Federated => "federated",
            Configuration::SingleSite => "single_site",
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Configuration {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Configuration::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown configuration `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CohortSource {
    /// Synthetic cohort. The run seed is added to `seed`, so every run seed
    /// sees its own cohort.
    Generate(CohortSpec),
    /// A cohort CSV, shared by every run seed.
    Csv {
        path: PathBuf,
        n_volume_features: usize,
    },
}

impl Default for CohortSource {
    fn default() -> Self {
        CohortSource::Generate(CohortSpec::default())
    }
}

/// Learning-rate schedules and optimizer of one model family. Horizons are
/// overwritten with the epoch or round budget at run time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySchedules {
    /// Centralized and single-site training, advanced per epoch.
    pub centralized: LrSchedule,
    /// Federated training, advanced per round.
    pub federated: LrSchedule,
    pub centralized_optimizer: Optimizer,
}

impl FamilySchedules {
    pub fn defaults(family: ModelFamily, power: f64) -> Self {
        let inv = |eta0| LrSchedule::InverseScaling {
            eta0,
            power,
            horizon: 1,
        };
        let lin = |eta0, eta_end| LrSchedule::LinearDecay {
            eta0,
            eta_end,
            horizon: 1,
        };
        match family {
            ModelFamily::VolSimple => FamilySchedules {
                centralized: inv(0.5),
                federated: lin(0.1, 0.01),
                centralized_optimizer: Optimizer::Sgd,
            },
            ModelFamily::VolAugmented => FamilySchedules {
                centralized: inv(0.07),
                federated: lin(0.02, 0.002),
                centralized_optimizer: Optimizer::Sgd,
            },
            ModelFamily::RadiomicsLike => FamilySchedules {
                centralized: inv(0.004),
                federated: lin(0.01, 0.001),
                centralized_optimizer: Optimizer::Sgd,
            },
            ModelFamily::Feedforward => FamilySchedules {
                centralized: lin(0.001, 0.0001),
                federated: lin(0.0005, 0.00005),
                centralized_optimizer: Optimizer::Adam,
            },
        }
    }
}

/// How federated runs move parameters: in-process, or over loopback TCP
/// with one client thread per center.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Inproc,
    Tcp,
}

impl FromStr for TransportKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inproc" => Ok(TransportKind::Inproc),
            "tcp" => Ok(TransportKind::Tcp),
            _ => Err(Error::Config(format!("unknown transport `{s}`"))),
        }
    }
}

fn default_families() -> Vec<ModelFamily> {
    ModelFamily::ALL.to_vec()
}
fn default_configurations() -> Vec<Configuration> {
    Configuration::ALL.to_vec()
}
fn default_test_folds() -> usize {
    5
}
fn default_correction_folds() -> usize {
    10
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_epochs() -> usize {
    100
}
fn default_batch_size() -> usize {
    8
}
fn default_l2_grid() -> Vec<f64> {
    DEFAULT_L2_GRID.to_vec()
}
fn default_power() -> f64 {
    LrSchedule::DEFAULT_POWER
}
fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}
fn default_tcp_timeout() -> u64 {
    60
}

/// One experiment: which cohort, which models and configurations, which
/// seeds, and every training knob. All fields are optional in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub cohort: CohortSource,
    #[serde(default = "default_families")]
    pub families: Vec<ModelFamily>,
    #[serde(default = "default_configurations")]
    pub configurations: Vec<Configuration>,
    /// Center whose subjects train the single-site model and never enter the
    /// test set. Defaults to the largest center.
    #[serde(default)]
    pub reference_center: Option<u32>,
    #[serde(default = "default_test_folds")]
    pub cv_folds_test: usize,
    #[serde(default = "default_correction_folds")]
    pub cv_folds_correction: usize,
    /// Folds used to pick the L2 penalty.
    #[serde(default = "default_test_folds")]
    pub cv_folds_tuning: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Epochs for centralized and single-site training.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Round budget per family; families not listed use `epochs`.
    #[serde(default)]
    pub rounds: BTreeMap<ModelFamily, usize>,
    /// Replaces the default budget of 100 with 1000 epochs and rounds.
    #[serde(default)]
    pub paper_scale: bool,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_l2_grid")]
    pub l2_grid: Vec<f64>,
    /// L2 penalty of the feedforward model, which is not tuned.
    #[serde(default)]
    pub feedforward_l2: f64,
    #[serde(default = "default_power")]
    pub inverse_scaling_power: f64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Per-family schedule overrides.
    #[serde(default)]
    pub schedules: BTreeMap<ModelFamily, FamilySchedules>,
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default = "default_tcp_timeout")]
    pub tcp_timeout_secs: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl ExperimentConfig {
    /// Parses JSON, reporting the offending field path on failure.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.families.is_empty() || self.configurations.is_empty() {
            return bad("families and configurations must not be empty".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.cv_folds_test < 2 || self.cv_folds_correction < 2 || self.cv_folds_tuning < 2 {
            return bad("fold counts must be at least 2".into());
        }
        if self.epochs == 0 || self.rounds.values().any(|&r| r == 0) {
            return bad("epoch and round budgets must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.l2_grid.is_empty() || self.l2_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("l2_grid must hold finite non-negative values".into());
        }
        if !(self.feedforward_l2.is_finite() && self.feedforward_l2 >= 0.0) {
            return bad("feedforward_l2 must be finite and non-negative".into());
        }
        if !(self.inverse_scaling_power.is_finite() && self.inverse_scaling_power > 0.0) {
            return bad("inverse_scaling_power must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden sizes must be positive".into());
        }
        if let CohortSource::Generate(spec) = &self.cohort {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn epoch_budget(&self) -> usize {
        if self.paper_scale {
            1000
        } else {
            self.epochs
        }
    }

    pub fn round_budget(&self, family: ModelFamily) -> usize {
        self.rounds
            .get(&family)
            .copied()
            .unwrap_or_else(|| self.epoch_budget())
    }

    pub fn schedules(&self, family: ModelFamily) -> FamilySchedules {
        self.schedules
            .get(&family)
            .cloned()
            .unwrap_or_else(|| FamilySchedules::defaults(family, self.inverse_scaling_power))
    }

    pub fn model_spec(&self, family: ModelFamily) -> ModelSpec {
        match family {
            ModelFamily::Feedforward => ModelSpec::Feedforward {
                hidden: self.hidden.clone(),
            },
            _ => ModelSpec::Linear,
        }
    }

    pub fn tcp_timeout(&self) -> std::time::Duration {
        std::time::Duration::from_secs(self.tcp_timeout_secs)
    }

    /// The cohort seen by run seed `seed`.
    pub fn load_cohort(&self, seed: u64) -> Result<Cohort> {
        let cohort = match &self.cohort {
            CohortSource::Generate(spec) => {
                let spec = CohortSpec {
                    seed: spec.seed.wrapping_add(seed),
                    ..spec.clone()
                };
                generate_cohort(&spec)?
            }
            CohortSource::Csv {
                path,
                n_volume_features,
            } => load_cohort_csv(path, *n_volume_features)?,
        };
        self.reference_center_of(&cohort)?;
        Ok(cohort)
    }

    pub fn reference_center_of(&self, cohort: &Cohort) -> Result<u32> {
        match self.reference_center {
            Some(c) if cohort.center_size(c) > 0 => Ok(c),
            Some(c) => Err(Error::Config(format!(
                "reference center {c} has no subjects"
            ))),
            None => cohort
                .largest_center()
                .ok_or_else(|| Error::Config("cohort is empty".into())),
        }
    }

    /// Directory of one (seed, family, configuration) run.
    pub fn run_dir(&self, seed: u64, family: ModelFamily, configuration: Configuration) -> PathBuf {
        self.seed_dir(seed)
            .join(family.as_str())
            .join(configuration.as_str())
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed_{seed}"))
    }
}
