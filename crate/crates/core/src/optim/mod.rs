//! SGD, SVRG, PPI-SVRG and PPI-SVRG++ with full trajectory recording.
//!
//! All four share one inner loop. Per outer epoch the loop draws indices
//! `i_t` uniformly with replacement from the labeled records and applies
//! `theta <- theta - eta * v_t`, where
//!
//! * SGD: `v_t = grad l(theta; x_i, y_i)`;
//! * SVRG: `v_t = grad l(theta; x_i, y_i) - grad l(snap; x_i, y_i) + mu`,
//!   `mu` the mean labeled gradient at the snapshot;
//! * PPI-SVRG(++): `v_t = grad l(theta; x_i, y_i) - grad g(snap; x_i, f_i) + mu`,
//!   `mu` the mean auxiliary gradient over all `N + n` predictions.
//!
//! PPI-SVRG restarts every epoch from the snapshot and picks the next
//! snapshot as a uniformly random inner iterate; the index is drawn from the
//! epoch's stream right after its `m` index draws. PPI-SVRG++ doubles the
//! epoch length (`m0 * 2^(s-1)`), averages the inner iterates into the
//! snapshot and continues from the last iterate.

mod engine;
mod output;
mod reference;

pub use output::{write_trajectory_csv, TrajectorySummary};

pub use reference::{objective_value, reference_optimum, ReferenceOptions};

use serde::{Deserialize, Serialize};

use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sgd,
    Svrg,
    PpiSvrg,
    PpiSvrgPp,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Svrg => "svrg",
            Algorithm::PpiSvrg => "ppi_svrg",
            Algorithm::PpiSvrgPp => "ppi_svrg_pp",
        }
    }

    pub const ALL: [Algorithm; 4] = [Algorithm::Sgd, Algorithm::Svrg, Algorithm::PpiSvrg, Algorithm::PpiSvrgPp];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotRule {
    /// Uniformly random iterate among `theta_0 .. theta_{m-1}`.
    RandomIterate,
    /// Mean of `theta_0 .. theta_{m-1}`.
    Average,
    /// Last iterate `theta_m` (SGD bookkeeping).
    Last,
}

/// Which objective the suboptimality gaps are measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Mean labeled loss `L^n`.
    #[default]
    Labeled,
    /// Prediction-augmented objective.
    Ppi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GapReference<T> {
    pub theta_star: Vec<T>,
    #[serde(default)]
    pub objective: Objective,
}

pub const DEFAULT_EPOCH_CAP: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OptConfig<T> {
    /// Step size `eta > 0`.
    pub eta: T,
    /// Inner steps `m` per epoch; the initial length `m0` for PPI-SVRG++.
    pub inner_steps: usize,
    /// Outer epochs `S >= 1`.
    pub epochs: usize,
    pub seed: u64,
    /// Overrides the algorithm's snapshot rule.
    #[serde(default)]
    pub snapshot_rule: Option<SnapshotRule>,
    /// Record every k-th inner iterate (0 disables inner records).
    #[serde(default)]
    pub record_every: usize,
    /// Starting point; zeros when absent.
    #[serde(default)]
    pub theta0: Option<Vec<T>>,
    /// Enforce the step-size conditions of the convergence results:
    /// `2 lambda eta < 1` (fixed epochs) or `eta < 1 / (4 lambda)` (doubling).
    #[serde(default)]
    pub strict: bool,
    #[serde(default = "default_cap")]
    pub max_epoch_len: usize,
    #[serde(default)]
    pub reference: Option<GapReference<T>>,
}

fn default_cap() -> usize {
    DEFAULT_EPOCH_CAP
}

impl<T: Scalar> OptConfig<T> {
    pub fn new(eta: T, inner_steps: usize, epochs: usize, seed: u64) -> Self {
        Self {
            eta,
            inner_steps,
            epochs,
            seed,
            snapshot_rule: None,
            record_every: 0,
            theta0: None,
            strict: false,
            max_epoch_len: DEFAULT_EPOCH_CAP,
            reference: None,
        }
    }

    pub fn with_theta0(mut self, theta0: Vec<T>) -> Self {
        self.theta0 = Some(theta0);
        self
    }

    pub fn with_reference(mut self, theta_star: Vec<T>, objective: Objective) -> Self {
        self.reference = Some(GapReference { theta_star, objective });
        self
    }

    pub fn with_record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= T::zero()) || !self.eta.is_finite() {
            return Err(Error::invalid("eta", format!("must be finite and >= 0, got {}", self.eta)));
        }
        if self.inner_steps == 0 {
            return Err(Error::invalid("inner_steps", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if let Some(t) = &self.theta0 {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("theta0", "non-finite entry"));
            }
        }
        Ok(())
    }

    /// Epoch lengths for `algorithm`, with overflow and cap checks for the
    /// doubling schedule.
    pub fn epoch_lengths(&self, algorithm: Algorithm) -> Result<Vec<usize>> {
        match algorithm {
            Algorithm::PpiSvrgPp => {
                let cap = self.max_epoch_len;
                (0..self.epochs)
                    .map(|s| {
                        u32::try_from(s)
                            .ok()
                            .and_then(|s| 1usize.checked_shl(s))
                            .and_then(|p| self.inner_steps.checked_mul(p))
                            .filter(|&m| m <= cap)
                            .ok_or(Error::EpochOverflow { cap })
                    })
                    .collect()
            }
            _ => Ok(vec![self.inner_steps; self.epochs]),
        }
    }
}

/// Total inner iterations `m0 (2^S - 1)` of the doubling schedule.
pub fn doubling_total(m0: usize, epochs: usize) -> Option<usize> {
    let p = 1usize.checked_shl(u32::try_from(epochs).ok()?)?;
    m0.checked_mul(p - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InnerRecord<T> {
    /// Zero-based outer epoch.
    pub epoch: usize,
    /// Inner index; `theta` is the iterate `theta_t` of this epoch.
    pub t: usize,
    pub theta: Vec<T>,
    /// Norm of the direction that produced `theta_t` (absent at `t = 0`).
    pub v_norm: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Trajectory<T> {
    pub algorithm: Algorithm,
    pub epoch_lengths: Vec<usize>,
    /// `snapshots[s]` is the snapshot entering epoch `s`; the last entry is
    /// the output. Length `S + 1`.
    pub snapshots: Vec<Vec<T>>,
    /// Snapshot gradient used in each epoch (empty for SGD).
    pub mu_tilde: Vec<Vec<T>>,
    /// Norm of the last update direction of each epoch.
    pub last_v_norm: Vec<T>,
    /// Last inner iterate of each epoch.
    pub last_iterates: Vec<Vec<T>>,
    pub inner_records: Vec<InnerRecord<T>>,
    /// `objective(snapshots[s]) - objective(theta_star)` when a reference is
    /// configured.
    pub gaps: Option<Vec<T>>,
    pub total_inner_iterations: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn final_theta(&self) -> &[T] {
        self.snapshots.last().expect("trajectory has at least one snapshot")
    }
}

pub fn run<T: Scalar>(
    algorithm: Algorithm,
    model: &LossModel<T>,
    ds: &SplitDataset<T>,
    cfg: &OptConfig<T>,
) -> Result<Trajectory<T>> {
    engine::run(algorithm, model, ds, cfg)
}

pub fn run_sgd<T: Scalar>(model: &LossModel<T>, ds: &SplitDataset<T>, cfg: &OptConfig<T>) -> Result<Trajectory<T>> {
    run(Algorithm::Sgd, model, ds, cfg)
}

pub fn run_svrg<T: Scalar>(model: &LossModel<T>, ds: &SplitDataset<T>, cfg: &OptConfig<T>) -> Result<Trajectory<T>> {
    run(Algorithm::Svrg, model, ds, cfg)
}

pub fn run_ppi_svrg<T: Scalar>(
    model: &LossModel<T>,
    ds: &SplitDataset<T>,
    cfg: &OptConfig<T>,
) -> Result<Trajectory<T>> {
    run(Algorithm::PpiSvrg, model, ds, cfg)
}

pub fn run_ppi_svrg_pp<T: Scalar>(
    model: &LossModel<T>,
    ds: &SplitDataset<T>,
    cfg: &OptConfig<T>,
) -> Result<Trajectory<T>> {
    run(Algorithm::PpiSvrgPp, model, ds, cfg)
}

/// PPI-SVRG update direction at `theta` for labeled record `i`.
pub fn ppi_direction<T: Scalar>(
    model: &LossModel<T>,
    ds: &SplitDataset<T>,
    theta: &[T],
    snapshot: &[T],
    mu: &[T],
    i: usize,
) -> Result<Vec<T>> {
    let r = &ds.labeled()[i];
    let g = model.grad(theta, &r.x, r.y)?;
    let c = model.aux_grad(snapshot, &r.x, r.f)?;
    Ok(engine::combine(&g, &c, mu))
}

/// SVRG update direction at `theta` for labeled record `i`.
pub fn svrg_direction<T: Scalar>(
    model: &LossModel<T>,
    ds: &SplitDataset<T>,
    theta: &[T],
    snapshot: &[T],
    mu: &[T],
    i: usize,
) -> Result<Vec<T>> {
    let r = &ds.labeled()[i];
    let g = model.grad(theta, &r.x, r.y)?;
    let c = model.grad(snapshot, &r.x, r.y)?;
    Ok(engine::combine(&g, &c, mu))
}
