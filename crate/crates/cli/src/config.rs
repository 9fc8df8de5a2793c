use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ppisvrg::data::{self, OutcomeKind, SplitDataset};
use ppisvrg::harness::{Target, UnlabeledSource};
use ppisvrg::inference::Method;
use ppisvrg::losses::{AuxMode, Calibration, LossKind, Summation};
use ppisvrg::optim::{Algorithm, Objective, SnapshotRule, DEFAULT_EPOCH_CAP};
use ppisvrg::rng::{child_seed, tags};
use ppisvrg::theory::FloorEstimator;
use ppisvrg::{LossModel, SyntheticSpec};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Full experiment description. Every random stream is derived from `seed`:
/// the synthetic data, optimizer and bootstrap seeds are children of it, and
/// the Monte Carlo master seed is `seed` itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub data: DataBlock,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub optimizer: OptimizerBlock,
    #[serde(default)]
    pub protocol: ProtocolBlock,
    #[serde(default)]
    pub bound: BoundBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    /// Dataset CSV (`x_0..x_{d-1},y,f`, empty `y` for unlabeled rows).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticBlock>,
}

/// Synthetic generator settings; the seed comes from the experiment seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticBlock {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub outcome_kind: OutcomeKind,
    #[serde(default)]
    pub dim: usize,
    #[serde(default)]
    pub theta_star: Vec<f64>,
    #[serde(default)]
    pub pred_noise_sigma: f64,
    #[serde(default)]
    pub flip_prob: f64,
    #[serde(default = "half")]
    pub prevalence: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default = "default_kind")]
    pub kind: LossKind,
    #[serde(default)]
    pub regularization: f64,
    #[serde(default)]
    pub intercept: bool,
    #[serde(default)]
    pub aux_mode: AuxMode,
    /// Calibration map for `aux_mode = "calibrated"`; taken from the
    /// synthetic generator when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration<f64>>,
    /// Per-sample smoothness `lambda`; certified from the data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong_convexity: Option<f64>,
    #[serde(default)]
    pub summation: Summation,
}

fn default_kind() -> LossKind {
    LossKind::MeanSq
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            kind: LossKind::MeanSq,
            regularization: 0.0,
            intercept: false,
            aux_mode: AuxMode::default(),
            calibration: None,
            smoothness: None,
            strong_convexity: None,
            summation: Summation::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    None,
    #[default]
    Labeled,
    Ppi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerBlock {
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    /// Step size; `1 / (10 lambda)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_inner_steps")]
    pub inner_steps: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_rule: Option<SnapshotRule>,
    #[serde(default)]
    pub record_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default)]
    pub strict: bool,
    #[serde(default = "default_cap")]
    pub max_epoch_len: usize,
    /// Objective the recorded gaps are measured on.
    #[serde(default)]
    pub gaps: GapMode,
}

fn default_algorithm() -> Algorithm {
    Algorithm::PpiSvrg
}
fn default_inner_steps() -> usize {
    100
}
fn default_epochs() -> usize {
    10
}
fn default_cap() -> usize {
    DEFAULT_EPOCH_CAP
}

impl Default for OptimizerBlock {
    fn default() -> Self {
        Self {
            algorithm: default_algorithm(),
            eta: None,
            inner_steps: default_inner_steps(),
            epochs: default_epochs(),
            snapshot_rule: None,
            record_every: 0,
            theta0: None,
            strict: false,
            max_epoch_len: default_cap(),
            gaps: GapMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolBlock {
    #[serde(default = "default_grid")]
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Truth for bias and coverage; the generator's population mean for
    /// synthetic data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Target<f64>>,
    /// Unlabeled draws per repetition; the generator's `N` (synthetic data)
    /// or the file's unlabeled count when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_unlabeled: Option<usize>,
    /// `all_records` for synthetic data, `unlabeled` for files when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled_source: Option<UnlabeledSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_base: Option<usize>,
    #[serde(default)]
    pub bootstrap: BootstrapBlock,
    #[serde(default)]
    pub keep_reps: bool,
}

fn default_grid() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4, 0.5]
}
fn default_reps() -> usize {
    200
}
fn default_methods() -> Vec<Method> {
    vec![Method::Naive, Method::Ppi, Method::PpiSvrg]
}

impl Default for ProtocolBlock {
    fn default() -> Self {
        Self {
            gamma_grid: default_grid(),
            reps: default_reps(),
            methods: default_methods(),
            target: None,
            n_unlabeled: None,
            unlabeled_source: None,
            n_base: None,
            bootstrap: BootstrapBlock::default(),
            keep_reps: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapBlock {
    #[serde(default = "default_boot_reps")]
    pub reps: usize,
    #[serde(default = "default_deflation")]
    pub deflation: f64,
    #[serde(default = "yes")]
    pub warm_start: bool,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
}

fn default_boot_reps() -> usize {
    100
}
fn default_deflation() -> f64 {
    0.95
}
fn yes() -> bool {
    true
}
fn default_grad_tol() -> f64 {
    1e-6
}

impl Default for BootstrapBlock {
    fn default() -> Self {
        Self {
            reps: default_boot_reps(),
            deflation: default_deflation(),
            warm_start: true,
            grad_tol: default_grad_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundBlock {
    /// Optimizer runs averaged into the empirical gap curve.
    #[serde(default = "default_bound_seeds")]
    pub seeds: usize,
    /// Relative excess tolerated on an epoch before it counts as a violation.
    #[serde(default = "default_allowance")]
    pub allowance: f64,
    /// Epochs allowed to exceed the bound by less than `allowance`.
    #[serde(default = "default_max_violations")]
    pub max_violations: usize,
    /// Floor estimator; analytic for synthetic data, residual otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<FloorEstimator>,
}

fn default_bound_seeds() -> usize {
    20
}
fn default_allowance() -> f64 {
    0.1
}
fn default_max_violations() -> usize {
    2
}

impl Default for BoundBlock {
    fn default() -> Self {
        Self {
            seeds: default_bound_seeds(),
            allowance: default_allowance(),
            max_violations: default_max_violations(),
            floor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub format: Option<Format>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::config(None, e.message().to_string()))?;
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.output.dir = Some(out.clone());
        }
        if let Some(jobs) = overrides.jobs {
            cfg.output.jobs = Some(jobs);
        }
        if let Some(format) = overrides.format {
            cfg.output.format = Some(format);
        }
        cfg.validate()?;
        cfg.resolve_protocol();
        Ok(cfg)
    }

    /// Writes the data-dependent protocol defaults into the config so the
    /// echo states them.
    fn resolve_protocol(&mut self) {
        let Some(spec) = self.synthetic_spec() else {
            self.protocol.unlabeled_source.get_or_insert(UnlabeledSource::Unlabeled);
            return;
        };
        let p = &mut self.protocol;
        p.unlabeled_source.get_or_insert(UnlabeledSource::AllRecords);
        p.n_unlabeled.get_or_insert(spec.big_n);
        if p.target.is_none() {
            p.target = spec.population_mean().map(Target::Fixed);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.data.path, &self.data.synthetic) {
            (Some(_), Some(_)) => {
                return Err(CliError::config(Some("data"), "give either `path` or `synthetic`, not both"))
            }
            (None, None) => return Err(CliError::config(Some("data"), "one of `path` or `synthetic` is required")),
            _ => {}
        }
        if let Some(eta) = self.optimizer.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(CliError::config(Some("optimizer.eta"), "must be finite and > 0"));
            }
        }
        if let Some(l) = self.model.smoothness {
            if !(l > 0.0 && l.is_finite()) {
                return Err(CliError::config(Some("model.smoothness"), "must be finite and > 0"));
            }
        }
        if self.output.jobs == Some(0) {
            return Err(CliError::config(Some("jobs"), "must be at least 1"));
        }
        if self.bound.seeds == 0 {
            return Err(CliError::config(Some("bound.seeds"), "must be at least 1"));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn format(&self) -> Format {
        self.output.format.unwrap_or_default()
    }

    pub fn synthetic_spec(&self) -> Option<SyntheticSpec> {
        self.data.synthetic.as_ref().map(|s| SyntheticSpec {
            n: s.n,
            big_n: s.big_n,
            outcome_kind: s.outcome_kind,
            dim: s.dim,
            theta_star: s.theta_star.clone(),
            pred_noise_sigma: s.pred_noise_sigma,
            flip_prob: s.flip_prob,
            prevalence: s.prevalence,
            seed: child_seed(self.seed, tags::POOL),
        })
    }

    pub fn load_dataset(&self) -> Result<SplitDataset<f64>, CliError> {
        match (&self.data.path, self.synthetic_spec()) {
            (Some(path), _) => data::read_csv(path).map_err(CliError::from),
            (None, Some(spec)) => Ok(data::generate(&spec)?),
            (None, None) => Err(CliError::config(Some("data"), "no dataset source")),
        }
    }

    /// Builds the loss model, certifying `lambda` on `ds` unless given.
    pub fn loss_model(&self, ds: &SplitDataset<f64>) -> Result<LossModel, CliError> {
        let b = &self.model;
        let mut model = match b.kind {
            LossKind::MeanSq => LossModel::mean_sq(),
            LossKind::Ridge => LossModel::ridge(b.regularization),
            LossKind::LogisticL2 => LossModel::logistic_l2(b.regularization),
            LossKind::LogisticPlain => LossModel::logistic_plain(),
        };
        model.regularization = b.regularization;
        model.intercept = b.intercept;
        model.summation = b.summation;
        if b.aux_mode == AuxMode::Calibrated {
            let cal =
                b.calibration.clone().or_else(|| self.synthetic_spec().and_then(|s| s.calibration())).ok_or_else(
                    || CliError::config(Some("model.calibration"), "calibrated mode needs a calibration map"),
                )?;
            model = model.calibrated(cal);
        }
        model = match b.smoothness {
            Some(l) => model.with_smoothness(l),
            None => model.certify(ds),
        };
        if let Some(g) = b.strong_convexity {
            model.strong_convexity = g;
        }
        model.validate()?;
        Ok(model)
    }

    pub fn eta(&self, model: &LossModel) -> f64 {
        self.optimizer.eta.unwrap_or_else(|| ppisvrg::theory::default_pplus_eta(model.smoothness))
    }

    pub fn gap_objective(&self) -> Option<Objective> {
        match self.optimizer.gaps {
            GapMode::None => None,
            GapMode::Labeled => Some(Objective::Labeled),
            GapMode::Ppi => Some(Objective::Ppi),
        }
    }

    /// Monte Carlo pool: a fully labeled population of `n + N` records for
    /// synthetic data, the file as-is otherwise.
    pub fn pool(&self) -> Result<(SplitDataset<f64>, UnlabeledSource, Option<usize>), CliError> {
        match self.synthetic_spec() {
            Some(spec) => {
                let pool = ppisvrg::harness::pool_from_spec(&spec)?;
                let source = self.protocol.unlabeled_source.unwrap_or(UnlabeledSource::AllRecords);
                Ok((pool, source, self.protocol.n_unlabeled.or(Some(spec.big_n))))
            }
            None => {
                let ds = self.load_dataset()?;
                let source = self.protocol.unlabeled_source.unwrap_or(UnlabeledSource::Unlabeled);
                Ok((ds, source, self.protocol.n_unlabeled))
            }
        }
    }

    pub fn target(&self) -> Result<Target<f64>, CliError> {
        self.protocol
            .target
            .or_else(|| self.synthetic_spec().and_then(|s| s.population_mean()).map(Target::Fixed))
            .ok_or_else(|| CliError::config(Some("protocol.target"), "required when the population mean is unknown"))
    }

    pub fn floor_estimator(&self) -> FloorEstimator {
        self.bound.floor.unwrap_or(if self.data.synthetic.is_some() {
            FloorEstimator::Analytic
        } else {
            FloorEstimator::Residual
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
