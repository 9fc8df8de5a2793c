//! Per-sample losses, their gradients, and the auxiliary gradient `grad g`
//! used as the prediction-based control variate.
//!
//! Binary outcomes are stored as 0/1; the logistic code maps them to the
//! signed label `2y - 1` internally. Regularization is part of every
//! per-sample loss so per-sample smoothness and strong convexity constants
//! carry over to the averaged objective.

use serde::{Deserialize, Serialize};

use crate::data::{LabeledRecord, OutcomeKind, SplitDataset};
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Parameter vector. Length 1 for `MeanSq`, otherwise the feature dimension
/// plus one when an intercept is fitted.
pub type Theta<T> = Vec<T>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `0.5 (theta - y)^2`, features ignored.
    MeanSq,
    /// `0.5 (theta . x - y)^2 + 0.5 reg |theta|^2`.
    Ridge,
    /// `log(1 + exp(-s theta . x)) + 0.5 reg |theta|^2` with `s = 2y - 1`.
    LogisticL2,
    /// Logistic loss without regularization (not strongly convex).
    LogisticPlain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AuxMode {
    /// `g = loss`, evaluated with the prediction in place of the outcome.
    #[default]
    GEqualsEll,
    /// `grad g = E[grad loss | X, F]` through a calibration map.
    Calibrated,
}

/// Conditional-mean map `f -> E[Y | X, F = f]` (for binary outcomes,
/// `P(Y = 1 | X, F = f)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", bound = "T: Scalar")]
pub enum Calibration<T> {
    Identity,
    Affine {
        intercept: T,
        slope: T,
    },
    /// Hard 0/1 predictions with the outcome probability for each.
    Binary {
        p_given_0: T,
        p_given_1: T,
    },
}

impl<T: Scalar> Calibration<T> {
    pub fn apply(&self, f: T) -> Result<T> {
        match *self {
            Calibration::Identity => Ok(f),
            Calibration::Affine { intercept, slope } => Ok(intercept + slope * f),
            Calibration::Binary { p_given_0, p_given_1 } => {
                if f == T::zero() {
                    Ok(p_given_0)
                } else if f == T::one() {
                    Ok(p_given_1)
                } else {
                    Err(Error::AuxUndefined(format!("binary calibration needs a 0/1 prediction, got {f}")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Summation {
    /// Plain left-to-right accumulation.
    #[default]
    Sequential,
    /// Kahan-compensated left-to-right accumulation.
    Compensated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LossModel<T> {
    pub kind: LossKind,
    #[serde(default)]
    pub regularization: T,
    #[serde(default)]
    pub intercept: bool,
    #[serde(default)]
    pub aux_mode: AuxMode,
    #[serde(default)]
    pub calibration: Option<Calibration<T>>,
    /// Per-sample smoothness constant `lambda`.
    pub smoothness: T,
    /// Strong convexity constant of the averaged loss.
    pub strong_convexity: T,
    #[serde(default)]
    pub summation: Summation,
}

impl<T: Scalar> LossModel<T> {
    fn base(kind: LossKind, reg: T) -> Self {
        let mut m = Self {
            kind,
            regularization: reg,
            intercept: false,
            aux_mode: AuxMode::GEqualsEll,
            calibration: None,
            smoothness: T::one(),
            strong_convexity: T::zero(),
            summation: Summation::Sequential,
        };
        m.strong_convexity = m.default_strong_convexity();
        m
    }

    pub fn mean_sq() -> Self {
        Self::base(LossKind::MeanSq, T::zero())
    }

    /// Ridge loss; call [`LossModel::certify`] to set `lambda` from data.
    pub fn ridge(reg: T) -> Self {
        Self::base(LossKind::Ridge, reg)
    }

    pub fn logistic_l2(reg: T) -> Self {
        Self::base(LossKind::LogisticL2, reg)
    }

    pub fn logistic_plain() -> Self {
        Self::base(LossKind::LogisticPlain, T::zero())
    }

    pub fn with_intercept(mut self) -> Self {
        self.intercept = true;
        self
    }

    pub fn calibrated(mut self, calibration: Calibration<T>) -> Self {
        self.aux_mode = AuxMode::Calibrated;
        self.calibration = Some(calibration);
        self
    }

    pub fn with_smoothness(mut self, lambda: T) -> Self {
        self.smoothness = lambda;
        self
    }

    pub fn with_summation(mut self, summation: Summation) -> Self {
        self.summation = summation;
        self
    }

    fn default_strong_convexity(&self) -> T {
        match self.kind {
            LossKind::MeanSq => T::one(),
            LossKind::Ridge | LossKind::LogisticL2 => self.regularization,
            LossKind::LogisticPlain => T::zero(),
        }
    }

    /// Sets `lambda` analytically from the largest augmented feature norm over
    /// every record of `ds`: `1` for the squared mean loss, `max|x|^2 + reg`
    /// for ridge and `max|x|^2 / 4 + reg` for logistic losses.
    pub fn certify(mut self, ds: &SplitDataset<T>) -> Self {
        let extra = if self.intercept { T::one() } else { T::zero() };
        let max_sq = ds.predictions().map(|(x, _)| dot(x, x) + extra).fold(T::zero(), |a, b| a.max(b));
        self.smoothness = match self.kind {
            LossKind::MeanSq => T::one(),
            LossKind::Ridge => max_sq + self.regularization,
            LossKind::LogisticL2 | LossKind::LogisticPlain => max_sq * T::of(0.25) + self.regularization,
        };
        self.strong_convexity = self.default_strong_convexity();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.regularization >= T::zero()) || !self.regularization.is_finite() {
            return Err(Error::invalid("regularization", "must be finite and >= 0"));
        }
        match self.kind {
            LossKind::MeanSq | LossKind::LogisticPlain if self.regularization != T::zero() => {
                return Err(Error::invalid("regularization", format!("{:?} takes no regularization", self.kind)));
            }
            LossKind::Ridge | LossKind::LogisticL2 if self.regularization <= T::zero() => {
                return Err(Error::invalid("regularization", format!("{:?} needs reg > 0", self.kind)));
            }
            _ => {}
        }
        if !(self.smoothness > T::zero()) || !self.smoothness.is_finite() {
            return Err(Error::invalid("smoothness", "lambda must be finite and > 0"));
        }
        if self.strong_convexity < T::zero() {
            return Err(Error::invalid("strong_convexity", "must be >= 0"));
        }
        if self.kind == LossKind::LogisticPlain && self.strong_convexity != T::zero() {
            return Err(Error::invalid("strong_convexity", "plain logistic loss is not strongly convex"));
        }
        if self.aux_mode == AuxMode::Calibrated && self.calibration.is_none() {
            return Err(Error::AuxUndefined("calibrated mode without a calibration map".into()));
        }
        Ok(())
    }

    /// Parameter dimension `k` for features of dimension `d`.
    pub fn param_dim(&self, d: usize) -> usize {
        match self.kind {
            LossKind::MeanSq => 1,
            _ => d + usize::from(self.intercept),
        }
    }

    fn is_logistic(&self) -> bool {
        matches!(self.kind, LossKind::LogisticL2 | LossKind::LogisticPlain)
    }

    fn check_dims(&self, theta: &[T], x: &[T]) -> Result<()> {
        let k = self.param_dim(x.len());
        if theta.len() != k {
            return Err(Error::Dimension { expected: k, got: theta.len() });
        }
        Ok(())
    }

    fn check_label(&self, y: T, what: &str) -> Result<()> {
        if self.is_logistic() && y != T::zero() && y != T::one() {
            return Err(Error::AuxUndefined(format!("logistic loss needs a 0/1 {what}, got {y}")));
        }
        Ok(())
    }

    /// Linear predictor `theta . x (+ intercept)`.
    #[inline]
    fn linear(&self, theta: &[T], x: &[T]) -> T {
        let d = x.len();
        let z = dot(&theta[..d], x);
        if self.intercept {
            z + theta[d]
        } else {
            z
        }
    }

    #[inline]
    fn half_reg_norm(&self, theta: &[T]) -> T {
        if self.regularization == T::zero() {
            T::zero()
        } else {
            T::of(0.5) * self.regularization * dot(theta, theta)
        }
    }

    /// Writes `scale * x_tilde + reg * theta` into `out`.
    #[inline]
    fn feature_grad(&self, theta: &[T], x: &[T], scale: T, out: &mut [T]) {
        let d = x.len();
        for (o, &xi) in out[..d].iter_mut().zip(x) {
            *o = scale * xi;
        }
        if self.intercept {
            out[d] = scale;
        }
        if self.regularization != T::zero() {
            for (o, &t) in out.iter_mut().zip(theta) {
                *o += self.regularization * t;
            }
        }
    }

    pub(crate) fn loss_unchecked(&self, theta: &[T], x: &[T], y: T) -> T {
        match self.kind {
            LossKind::MeanSq => {
                let r = theta[0] - y;
                T::of(0.5) * r * r
            }
            LossKind::Ridge => {
                let r = self.linear(theta, x) - y;
                T::of(0.5) * r * r + self.half_reg_norm(theta)
            }
            LossKind::LogisticL2 | LossKind::LogisticPlain => {
                let s = T::of(2.0) * y - T::one();
                softplus(-s * self.linear(theta, x)) + self.half_reg_norm(theta)
            }
        }
    }

    #[inline]
    pub(crate) fn grad_into(&self, theta: &[T], x: &[T], y: T, out: &mut [T]) {
        match self.kind {
            LossKind::MeanSq => out[0] = theta[0] - y,
            LossKind::Ridge => {
                let r = self.linear(theta, x) - y;
                self.feature_grad(theta, x, r, out);
            }
            LossKind::LogisticL2 | LossKind::LogisticPlain => {
                let s = T::of(2.0) * y - T::one();
                let scale = -s * sigmoid(-s * self.linear(theta, x));
                self.feature_grad(theta, x, scale, out);
            }
        }
    }

    /// Auxiliary gradient without dimension checks; fails only when `f` is
    /// outside the domain of the auxiliary function.
    #[inline]
    pub(crate) fn aux_grad_into(&self, theta: &[T], x: &[T], f: T, out: &mut [T]) -> Result<()> {
        match self.aux_mode {
            AuxMode::GEqualsEll => {
                self.check_label(f, "prediction")?;
                self.grad_into(theta, x, f, out);
            }
            AuxMode::Calibrated => {
                let cal =
                    self.calibration.as_ref().ok_or_else(|| Error::AuxUndefined("missing calibration map".into()))?;
                let m = cal.apply(f)?;
                match self.kind {
                    // Gradient is affine in y, so the conditional mean plugs in.
                    LossKind::MeanSq | LossKind::Ridge => self.grad_into(theta, x, m, out),
                    LossKind::LogisticL2 | LossKind::LogisticPlain => {
                        let z = self.linear(theta, x);
                        // p * grad(y = 1) + (1 - p) * grad(y = 0)
                        let scale = -m * sigmoid(-z) + (T::one() - m) * sigmoid(z);
                        self.feature_grad(theta, x, scale, out);
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn aux_loss_unchecked(&self, theta: &[T], x: &[T], f: T) -> Result<T> {
        match self.aux_mode {
            AuxMode::GEqualsEll => {
                self.check_label(f, "prediction")?;
                Ok(self.loss_unchecked(theta, x, f))
            }
            AuxMode::Calibrated => {
                let cal =
                    self.calibration.as_ref().ok_or_else(|| Error::AuxUndefined("missing calibration map".into()))?;
                let m = cal.apply(f)?;
                Ok(if self.is_logistic() {
                    m * self.loss_unchecked(theta, x, T::one())
                        + (T::one() - m) * self.loss_unchecked(theta, x, T::zero())
                } else {
                    self.loss_unchecked(theta, x, m)
                })
            }
        }
    }

    pub fn loss(&self, theta: &[T], x: &[T], y: T) -> Result<T> {
        self.check_dims(theta, x)?;
        self.check_label(y, "outcome")?;
        Ok(self.loss_unchecked(theta, x, y))
    }

    pub fn grad(&self, theta: &[T], x: &[T], y: T) -> Result<Theta<T>> {
        self.check_dims(theta, x)?;
        self.check_label(y, "outcome")?;
        let mut out = vec![T::zero(); theta.len()];
        self.grad_into(theta, x, y, &mut out);
        Ok(out)
    }

    /// `grad g(theta; x, f)`; see [`AuxMode`].
    pub fn aux_grad(&self, theta: &[T], x: &[T], f: T) -> Result<Theta<T>> {
        self.check_dims(theta, x)?;
        let mut out = vec![T::zero(); theta.len()];
        self.aux_grad_into(theta, x, f, &mut out)?;
        Ok(out)
    }

    pub fn aux_loss(&self, theta: &[T], x: &[T], f: T) -> Result<T> {
        self.check_dims(theta, x)?;
        self.aux_loss_unchecked(theta, x, f)
    }

    /// Checks that every outcome and prediction of `ds` lies in the domain
    /// of the loss and of the auxiliary function, and that `theta` fits.
    pub fn check_dataset(&self, ds: &SplitDataset<T>, theta: &[T]) -> Result<()> {
        self.validate()?;
        let k = self.param_dim(ds.dim());
        if theta.len() != k {
            return Err(Error::Dimension { expected: k, got: theta.len() });
        }
        if self.is_logistic() && ds.outcome_kind() != OutcomeKind::Binary {
            return Err(Error::invalid("outcome_kind", "logistic loss needs a binary dataset"));
        }
        let mut scratch = vec![T::zero(); k];
        for (x, f) in ds.predictions() {
            self.aux_grad_into(theta, x, f, &mut scratch)?;
        }
        Ok(())
    }
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Coordinate-wise running sum honoring [`Summation`].
pub(crate) struct Accumulator<T> {
    sum: Vec<T>,
    comp: Vec<T>,
    mode: Summation,
    count: usize,
}

impl<T: Scalar> Accumulator<T> {
    pub(crate) fn new(k: usize, mode: Summation) -> Self {
        Self { sum: vec![T::zero(); k], comp: vec![T::zero(); k], mode, count: 0 }
    }

    #[inline]
    pub(crate) fn add(&mut self, v: &[T]) {
        self.count += 1;
        match self.mode {
            Summation::Sequential => {
                for (s, &x) in self.sum.iter_mut().zip(v) {
                    *s += x;
                }
            }
            Summation::Compensated => {
                for ((s, c), &x) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(v) {
                    let y = x - *c;
                    let t = *s + y;
                    *c = (t - *s) - y;
                    *s = t;
                }
            }
        }
    }

    pub(crate) fn mean_into(&self, out: &mut [T]) {
        let n = T::of_usize(self.count.max(1));
        for (o, &s) in out.iter_mut().zip(&self.sum) {
            *o = s / n;
        }
    }

    pub(crate) fn mean(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.sum.len()];
        self.mean_into(&mut out);
        out
    }
}

/// Mean per-sample gradient over `records`.
pub fn full_grad<T: Scalar>(model: &LossModel<T>, theta: &[T], records: &[LabeledRecord<T>]) -> Result<Theta<T>> {
    let first = records.first().ok_or(Error::Empty("record set"))?;
    model.check_dims(theta, &first.x)?;
    let mut acc = Accumulator::new(theta.len(), model.summation);
    let mut g = vec![T::zero(); theta.len()];
    for r in records {
        model.check_label(r.y, "outcome")?;
        model.grad_into(theta, &r.x, r.y, &mut g);
        acc.add(&g);
    }
    Ok(acc.mean())
}

/// Mean auxiliary gradient over all `N + n` prediction records (labeled
/// first, then unlabeled). This is the snapshot gradient of PPI-SVRG.
pub fn pooled_aux_grad<T: Scalar>(model: &LossModel<T>, theta: &[T], ds: &SplitDataset<T>) -> Result<Theta<T>> {
    let mut out = vec![T::zero(); theta.len()];
    let mut scratch = vec![T::zero(); theta.len()];
    pooled_aux_grad_into(model, theta, ds, &mut scratch, &mut out)?;
    Ok(out)
}

pub(crate) fn pooled_aux_grad_into<T: Scalar>(
    model: &LossModel<T>,
    theta: &[T],
    ds: &SplitDataset<T>,
    scratch: &mut [T],
    out: &mut [T],
) -> Result<()> {
    let mut acc = Accumulator::new(theta.len(), model.summation);
    for (x, f) in ds.predictions() {
        model.aux_grad_into(theta, x, f, scratch)?;
        acc.add(scratch);
    }
    acc.mean_into(out);
    Ok(())
}

/// Gradient of the prediction-augmented objective:
/// `(1/n) sum_lab grad l + (1/(N+n)) sum_all grad g - (1/n) sum_lab grad g`.
pub fn ppi_objective_grad<T: Scalar>(model: &LossModel<T>, theta: &[T], ds: &SplitDataset<T>) -> Result<Theta<T>> {
    let k = theta.len();
    let lab = full_grad(model, theta, ds.labeled())?;
    let all = pooled_aux_grad(model, theta, ds)?;
    let mut acc = Accumulator::new(k, model.summation);
    let mut g = vec![T::zero(); k];
    for r in ds.labeled() {
        model.aux_grad_into(theta, &r.x, r.f, &mut g)?;
        acc.add(&g);
    }
    let lab_aux = acc.mean();
    Ok((0..k).map(|j| lab[j] + (all[j] - lab_aux[j])).collect())
}

/// Mean loss over the labeled records.
pub fn labeled_objective<T: Scalar>(model: &LossModel<T>, theta: &[T], ds: &SplitDataset<T>) -> Result<T> {
    let first = ds.labeled().first().ok_or(Error::Empty("labeled set"))?;
    model.check_dims(theta, &first.x)?;
    let n = T::of_usize(ds.n());
    let s = ds.labeled().iter().fold(T::zero(), |a, r| a + model.loss_unchecked(theta, &r.x, r.y));
    Ok(s / n)
}

/// Value of the prediction-augmented objective.
pub fn ppi_objective<T: Scalar>(model: &LossModel<T>, theta: &[T], ds: &SplitDataset<T>) -> Result<T> {
    let lab = labeled_objective(model, theta, ds)?;
    let mut all = T::zero();
    for (x, f) in ds.predictions() {
        all += model.aux_loss_unchecked(theta, x, f)?;
    }
    let mut lab_aux = T::zero();
    for r in ds.labeled() {
        lab_aux += model.aux_loss_unchecked(theta, &r.x, r.f)?;
    }
    let n = T::of_usize(ds.n());
    let total = T::of_usize(ds.n() + ds.big_n());
    Ok(lab + (all / total - lab_aux / n))
}
