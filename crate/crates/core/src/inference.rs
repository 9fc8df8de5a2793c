//! Point estimators for a population mean with standard errors and normal
//! confidence intervals `theta_hat +- z * se`.
//!
//! * naive: `Ybar_lab`, `se^2 = Var(Y) / n`;
//! * PPI: `Ybar_lab + Fbar_all - Fbar_lab`, with
//!   `se^2 = Var(Y - w F) / n + Var(w F_unlab) / N` and `w = N / (N + n)`;
//! * PPI-SVRG: the final snapshot of the optimizer on the squared mean
//!   loss, with a deflated nonparametric bootstrap standard error.
//!
//! Variances use the unbiased `n - 1` divisor throughout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{resample_with_replacement, SplitDataset};
use crate::error::{Error, Result};
use crate::losses::{ppi_objective_grad, LossKind, LossModel};
use crate::optim::{run_ppi_svrg, OptConfig};
use crate::rng::{child_seed, path_seed, tags};
use crate::scalar::{mean, norm, sample_variance, Scalar};

/// Two-sided 95% normal critical value.
pub const Z_975: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Ppi,
    PpiSvrg,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Ppi => "ppi",
            Method::PpiSvrg => "ppi_svrg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EstimateReport<T> {
    pub method: Method,
    pub theta_hat: T,
    pub se: T,
    pub ci_lo: T,
    pub ci_hi: T,
    pub z: T,
    /// Bootstrap replicates (optimizer-based estimates only).
    #[serde(rename = "B")]
    pub bootstrap_reps: Option<usize>,
    pub deflation: Option<T>,
    /// Whether the optimizer reached the gradient tolerance.
    pub converged: Option<bool>,
}

impl<T: Scalar> EstimateReport<T> {
    pub fn new(method: Method, theta_hat: T, se: T) -> Self {
        let z = T::of(Z_975);
        Self {
            method,
            theta_hat,
            se,
            ci_lo: theta_hat - z * se,
            ci_hi: theta_hat + z * se,
            z,
            bootstrap_reps: None,
            deflation: None,
            converged: None,
        }
    }

    /// Recomputes the interval for critical value `z`.
    pub fn with_z(mut self, z: T) -> Self {
        self.z = z;
        self.ci_lo = self.theta_hat - z * self.se;
        self.ci_hi = self.theta_hat + z * self.se;
        self
    }

    pub fn ci_width(&self) -> T {
        self.ci_hi - self.ci_lo
    }

    pub fn covers(&self, target: T) -> bool {
        self.ci_lo <= target && target <= self.ci_hi
    }
}

pub fn naive_estimate<T: Scalar>(ds: &SplitDataset<T>) -> Result<EstimateReport<T>> {
    let y = ds.labeled_y();
    let theta = mean(&y).ok_or(Error::Empty("labeled set"))?;
    let var =
        sample_variance(&y).ok_or_else(|| Error::SeUndefined(format!("naive SE needs n >= 2, got n = {}", y.len())))?;
    Ok(EstimateReport::new(Method::Naive, theta, (var / T::of_usize(y.len())).sqrt()))
}

/// `Ybar_lab + Fbar_all - Fbar_lab`, with `Fbar_all` over all `N + n`
/// predictions.
pub fn ppi_point<T: Scalar>(ds: &SplitDataset<T>) -> T {
    let n = T::of_usize(ds.n());
    let ybar = ds.labeled().iter().map(|r| r.y).sum::<T>() / n;
    let flab = ds.labeled().iter().map(|r| r.f).sum::<T>() / n;
    let fall = ds.predictions().map(|(_, f)| f).sum::<T>() / T::of_usize(ds.n() + ds.big_n());
    ybar + fall - flab
}

pub fn ppi_estimate<T: Scalar>(ds: &SplitDataset<T>) -> Result<EstimateReport<T>> {
    let (n, big_n) = (ds.n(), ds.big_n());
    if n < 2 || big_n < 2 {
        return Err(Error::SeUndefined(format!("PPI SE needs n >= 2 and N >= 2, got n = {n}, N = {big_n}")));
    }
    let w = T::of_usize(big_n) / T::of_usize(big_n + n);
    let lab: Vec<T> = ds.labeled().iter().map(|r| r.y - w * r.f).collect();
    let unlab: Vec<T> = ds.unlabeled().iter().map(|r| w * r.f).collect();
    let v_lab = sample_variance(&lab).expect("n >= 2");
    let v_unlab = sample_variance(&unlab).expect("N >= 2");
    let se = (v_lab / T::of_usize(n) + v_unlab / T::of_usize(big_n)).sqrt();
    Ok(EstimateReport::new(Method::Ppi, ppi_point(ds), se))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BootstrapConfig<T> {
    /// Replicates `B >= 2`.
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Multiplier on the bootstrap standard deviation.
    #[serde(default = "default_deflation")]
    pub deflation: T,
    #[serde(default)]
    pub seed: u64,
    /// Start the optimizer at `Ybar_lab` instead of the configured `theta0`.
    #[serde(default)]
    pub warm_start: bool,
    /// Gradient-norm tolerance of the prediction-augmented objective for the
    /// `converged` flag.
    #[serde(default = "default_grad_tol")]
    pub grad_tol: T,
}

fn default_reps() -> usize {
    100
}

fn default_deflation<T: Scalar>() -> T {
    T::of(0.95)
}

fn default_grad_tol<T: Scalar>() -> T {
    T::of(1e-6)
}

impl<T: Scalar> Default for BootstrapConfig<T> {
    fn default() -> Self {
        Self {
            reps: default_reps(),
            deflation: default_deflation(),
            seed: 0,
            warm_start: false,
            grad_tol: default_grad_tol(),
        }
    }
}

/// Replicates of [`BootstrapConfig::fast`].
pub const FAST_BOOTSTRAP_REPS: usize = 25;

impl<T: Scalar> BootstrapConfig<T> {
    /// Reduced bootstrap for smoke tests of interval widths. Standard errors
    /// from 25 replicates are too noisy for coverage studies.
    pub fn fast() -> Self {
        Self { reps: FAST_BOOTSTRAP_REPS, ..Self::default() }
    }
}

/// `deflation * SD(values)` with the `n - 1` divisor.
pub fn bootstrap_se<T: Scalar>(values: &[T], deflation: T) -> Result<T> {
    let v =
        sample_variance(values).ok_or_else(|| Error::SeUndefined("bootstrap needs at least 2 replicates".into()))?;
    Ok(deflation * v.sqrt())
}

fn optimizer_point<T: Scalar>(ds: &SplitDataset<T>, model: &LossModel<T>, opt: &OptConfig<T>, warm: bool) -> Result<T> {
    let mut cfg = opt.clone();
    if warm {
        cfg.theta0 = Some(vec![mean(&ds.labeled_y()).ok_or(Error::Empty("labeled set"))?]);
    }
    Ok(run_ppi_svrg(model, ds, &cfg)?.final_theta()[0])
}

/// Optimizer-based estimate on the squared mean loss.
///
/// Replicate `b` resamples both parts of `ds` (sizes `n` and `N`) with seed
/// `child_seed(path_seed(boot.seed, [BOOTSTRAP]), b)` and reruns the
/// optimizer with the same configuration, its seed replaced by a child of
/// the replicate seed.
pub fn ppi_svrg_estimate<T: Scalar>(
    ds: &SplitDataset<T>,
    model: &LossModel<T>,
    opt: &OptConfig<T>,
    boot: &BootstrapConfig<T>,
) -> Result<EstimateReport<T>> {
    if model.kind != LossKind::MeanSq {
        return Err(Error::invalid("model", "the optimizer-based mean estimate needs the mean_sq loss"));
    }
    if boot.reps < 2 {
        return Err(Error::invalid("reps", "bootstrap needs B >= 2"));
    }
    if !(boot.deflation >= T::zero()) {
        return Err(Error::invalid("deflation", "must be >= 0"));
    }
    let theta = optimizer_point(ds, model, opt, boot.warm_start)?;
    let grad = ppi_objective_grad(model, &[theta], ds)?;
    let converged = norm(&grad) < boot.grad_tol;
    let root = path_seed(boot.seed, &[tags::BOOTSTRAP]);
    let replicates = (0..boot.reps)
        .into_par_iter()
        .map(|b| {
            let seed = child_seed(root, b as u64);
            let sample = resample_with_replacement(ds, ds.n(), ds.big_n(), seed)?;
            let cfg = OptConfig { seed: child_seed(seed, tags::OPTIMIZER), ..opt.clone() };
            optimizer_point(&sample, model, &cfg, boot.warm_start)
        })
        .collect::<Result<Vec<T>>>()?;
    let se = bootstrap_se(&replicates, boot.deflation)?;
    let mut report = EstimateReport::new(Method::PpiSvrg, theta, se);
    report.bootstrap_reps = Some(boot.reps);
    report.deflation = Some(boot.deflation);
    report.converged = Some(converged);
    Ok(report)
}
