//! Convergence constants, error floors and bound curves.
//!
//! For the fixed-epoch method with step `eta`, epoch length `m`,
//! smoothness `lambda` and strong convexity `gamma`,
//!
//! ```text
//! alpha = 1 / (gamma eta (1 - 2 lambda eta) m) + 2 lambda eta / (1 - 2 lambda eta)
//! beta  = eta / (1 - 2 lambda eta)
//! E[gap_s] <= alpha^s gap_0 + beta (1 - alpha^s) / (1 - alpha) * floor
//! ```
//!
//! where `floor = E[Var(grad l(theta*; X, Y) | X, F)]`, scalarized as the
//! trace of the coordinate variances. The doubling method is bounded by
//! `2 |theta_0 - theta*|^2 / (eta T) + 4 lambda eta gap_0 / 2^(S-1) + 2 C`
//! with `C = 2 eta sigma_ppi^2 + 2 D eps_bias`.

use serde::{Deserialize, Serialize};

use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::scalar::{norm_sq, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RateConstants<T> {
    pub alpha: T,
    pub beta: T,
    /// `alpha < 1` (the step condition `2 lambda eta < 1` is checked on
    /// construction).
    pub valid: bool,
}

pub fn rate_constants<T: Scalar>(gamma_sc: T, lambda: T, eta: T, m: usize) -> Result<RateConstants<T>> {
    let two = T::of(2.0);
    if !(eta > T::zero()) || !(lambda > T::zero()) || two * lambda * eta >= T::one() {
        return Err(Error::InvalidStepSize { lambda: lambda.as_f64(), eta: eta.as_f64() });
    }
    if !(gamma_sc > T::zero()) {
        return Err(Error::invalid("gamma_sc", "strong convexity must be > 0"));
    }
    if m == 0 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    let shrink = T::one() - two * lambda * eta;
    // Same value as the two-term form, with one rounding fewer.
    let alpha = (T::one() / (gamma_sc * eta * T::of_usize(m)) + two * lambda * eta) / shrink;
    let beta = eta / shrink;
    Ok(RateConstants { alpha, beta, valid: alpha < T::one() && alpha > T::zero() })
}

/// `alpha^s gap0 + beta (1 - alpha^s) / (1 - alpha) floor` for `s = 0..=epochs`.
pub fn bound_curve<T: Scalar>(c: &RateConstants<T>, gap0: T, floor: T, epochs: usize) -> Result<Vec<T>> {
    if !c.valid {
        return Err(Error::invalid("alpha", format!("contraction factor {} is not in (0, 1)", c.alpha)));
    }
    let mut out = Vec::with_capacity(epochs + 1);
    let mut a = T::one();
    for _ in 0..=epochs {
        out.push(a * gap0 + c.beta * (T::one() - a) / (T::one() - c.alpha) * floor);
        a *= c.alpha;
    }
    Ok(out)
}

/// Limit of [`bound_curve`] as `s -> inf`.
pub fn asymptotic_floor<T: Scalar>(c: &RateConstants<T>, floor: T) -> T {
    c.beta * floor / (T::one() - c.alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorEstimator {
    /// Closed form from the generating model.
    Analytic,
    /// Mean squared residual `|grad l - grad g|^2` over labeled records.
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FloorEstimate<T> {
    pub conditional_variance: T,
    pub estimator: FloorEstimator,
    pub se: T,
}

/// Analytic floor for a synthetic spec.
///
/// Known cases: continuous outcomes (`sigma^2` times `E|x_tilde|^2`, which is
/// `sigma^2` for the mean loss and `sigma^2 (d + intercept)` for ridge), and
/// binary outcomes without features under the mean or intercept-only
/// logistic loss, where the gradient is `theta - y` or `sigmoid(theta) - y`
/// and the floor is `E[Var(Y | F)]`.
pub fn analytic_floor<T: Scalar>(
    model: &LossModel<T>,
    spec: &crate::data::SyntheticSpec<T>,
) -> Result<FloorEstimate<T>> {
    use crate::data::OutcomeKind;
    use crate::losses::LossKind;
    spec.validate()?;
    let value = match (spec.outcome_kind, model.kind) {
        (OutcomeKind::Continuous, LossKind::MeanSq) => Some(spec.pred_noise_sigma * spec.pred_noise_sigma),
        (OutcomeKind::Continuous, LossKind::Ridge) => {
            let k = T::of_usize(spec.dim + usize::from(model.intercept));
            Some(spec.pred_noise_sigma * spec.pred_noise_sigma * k)
        }
        (OutcomeKind::Binary, LossKind::MeanSq) if spec.dim == 0 => spec.conditional_outcome_variance(),
        (OutcomeKind::Binary, LossKind::LogisticPlain | LossKind::LogisticL2) if spec.dim == 0 && model.intercept => {
            spec.conditional_outcome_variance()
        }
        _ => None,
    };
    let conditional_variance =
        value.ok_or_else(|| Error::invalid("spec", "no closed-form floor for this loss and generating model"))?;
    Ok(FloorEstimate { conditional_variance, estimator: FloorEstimator::Analytic, se: T::zero() })
}

/// Residual estimate `mean |grad l(theta*; x, y) - grad g(theta*; x, f)|^2`
/// over the labeled records, with its Monte Carlo standard error. It
/// targets the floor when `g` is calibrated (`grad g = E[grad l | X, F]`).
pub fn residual_floor<T: Scalar>(
    model: &LossModel<T>,
    ds: &SplitDataset<T>,
    theta_star: &[T],
) -> Result<FloorEstimate<T>> {
    model.check_dataset(ds, theta_star)?;
    let k = theta_star.len();
    let mut g = vec![T::zero(); k];
    let mut a = vec![T::zero(); k];
    let mut values = Vec::with_capacity(ds.n());
    for r in ds.labeled() {
        model.grad_into(theta_star, &r.x, r.y, &mut g);
        model.aux_grad_into(theta_star, &r.x, r.f, &mut a)?;
        for (gj, aj) in g.iter_mut().zip(&a) {
            *gj -= *aj;
        }
        values.push(norm_sq(&g));
    }
    let mean = crate::scalar::mean(&values).ok_or(Error::Empty("labeled set"))?;
    let se =
        crate::scalar::sample_variance(&values).map(|v| (v / T::of_usize(values.len())).sqrt()).unwrap_or_else(T::zero);
    Ok(FloorEstimate { conditional_variance: mean, estimator: FloorEstimator::Residual, se })
}

/// Finite joint distribution of `(F, Y)` without features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DiscreteJoint<T> {
    /// `(f, y, probability)` atoms; probabilities sum to one.
    pub atoms: Vec<(T, T, T)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct VarianceDecomposition<T> {
    /// `Var(grad l)`.
    pub total: T,
    /// `E[Var(grad l | F)]`, the floor.
    pub within: T,
    /// `Var(E[grad l | F])`.
    pub between: T,
}

impl<T: Scalar> DiscreteJoint<T> {
    pub fn new(atoms: Vec<(T, T, T)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("atoms"));
        }
        if atoms.iter().any(|a| !(a.2 >= T::zero())) {
            return Err(Error::invalid("atoms", "probabilities must be >= 0"));
        }
        let total: T = atoms.iter().map(|a| a.2).sum();
        if (total - T::one()).abs() > T::of(1e-9) {
            return Err(Error::invalid("atoms", format!("probabilities sum to {total}")));
        }
        Ok(Self { atoms })
    }

    fn distinct_f(&self) -> Vec<T> {
        let mut fs: Vec<T> = Vec::new();
        for a in &self.atoms {
            if !fs.contains(&a.0) {
                fs.push(a.0);
            }
        }
        fs
    }

    /// `E[Y | F = f]` for each distinct `f`, in order of first appearance.
    pub fn conditional_means(&self) -> Vec<(T, T)> {
        self.distinct_f()
            .into_iter()
            .map(|f| {
                let (p, s) = self
                    .atoms
                    .iter()
                    .filter(|a| a.0 == f)
                    .fold((T::zero(), T::zero()), |(p, s), a| (p + a.2, s + a.2 * a.1));
                (f, if p > T::zero() { s / p } else { T::zero() })
            })
            .collect()
    }

    /// Exact decomposition of the gradient variance at `theta` by
    /// enumeration; the model must take no features.
    pub fn decompose(&self, model: &LossModel<T>, theta: &[T]) -> Result<VarianceDecomposition<T>> {
        let k = theta.len();
        let grad = |y: T| model.grad(theta, &[], y);
        let mut mean = vec![T::zero(); k];
        for a in &self.atoms {
            for (m, g) in mean.iter_mut().zip(grad(a.1)?) {
                *m += a.2 * g;
            }
        }
        let mut total = T::zero();
        let mut within = T::zero();
        let mut between = T::zero();
        for f in self.distinct_f() {
            let group: Vec<_> = self.atoms.iter().filter(|a| a.0 == f).collect();
            let pf: T = group.iter().map(|a| a.2).sum();
            if pf == T::zero() {
                continue;
            }
            let mut cmean = vec![T::zero(); k];
            for a in &group {
                for (m, g) in cmean.iter_mut().zip(grad(a.1)?) {
                    *m += a.2 / pf * g;
                }
            }
            for a in &group {
                let g = grad(a.1)?;
                let dt: Vec<T> = g.iter().zip(&mean).map(|(g, m)| *g - *m).collect();
                let dw: Vec<T> = g.iter().zip(&cmean).map(|(g, m)| *g - *m).collect();
                total += a.2 * norm_sq(&dt);
                within += a.2 * norm_sq(&dw);
            }
            let db: Vec<T> = cmean.iter().zip(&mean).map(|(c, m)| *c - *m).collect();
            between += pf * norm_sq(&db);
        }
        Ok(VarianceDecomposition { total, within, between })
    }
}

/// Inputs of the doubling-schedule bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PPlusBoundInputs<T> {
    pub sigma_ppi_sq: T,
    pub epsilon_bias: T,
    pub diameter: T,
    pub eta: T,
    pub lambda: T,
    /// Total inner iterations `T`.
    pub total_iterations: usize,
}

/// Default step for the doubling schedule, `1 / (10 lambda)`.
pub fn default_pplus_eta<T: Scalar>(lambda: T) -> T {
    T::one() / (T::of(10.0) * lambda)
}

/// `2 dist0_sq / (eta T) + 4 lambda eta gap0 / 2^(S-1) + 2 (2 eta sigma^2 + 2 D eps)`.
pub fn pplus_bound<T: Scalar>(inputs: &PPlusBoundInputs<T>, dist0_sq: T, gap0: T, epochs: usize) -> Result<T> {
    let i = inputs;
    let fields = [
        ("sigma_ppi_sq", i.sigma_ppi_sq),
        ("epsilon_bias", i.epsilon_bias),
        ("diameter", i.diameter),
        ("lambda", i.lambda),
        ("dist0_sq", dist0_sq),
        ("gap0", gap0),
    ];
    for (name, v) in fields {
        if !(v >= T::zero()) {
            return Err(Error::invalid(name, "must be >= 0"));
        }
    }
    if !(i.eta > T::zero()) || i.total_iterations == 0 || epochs == 0 {
        return Err(Error::invalid("eta", "eta, T and S must be positive"));
    }
    let two = T::of(2.0);
    let t = T::of_usize(i.total_iterations);
    let halvings = two.powi(i32::try_from(epochs - 1).map_err(|_| Error::EpochOverflow { cap: usize::MAX })?);
    let c_stat = two * i.eta * i.sigma_ppi_sq + two * i.diameter * i.epsilon_bias;
    Ok(two * dist0_sq / (i.eta * t) + T::of(4.0) * i.lambda * i.eta * gap0 / halvings + two * c_stat)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RateFit<T> {
    /// Fitted contraction factor; `None` when the gaps carry no decay.
    pub alpha_hat: Option<T>,
    pub floor_hat: T,
    /// Fitted transient amplitude `c` in `gap_s ~ c alpha^s + floor`.
    pub amplitude: T,
    /// Mean of the trailing plateau window.
    pub plateau_mean: T,
    pub identifiable: bool,
}

/// Fits `gap_s ~ c alpha^s + floor` with `c, floor >= 0`.
///
/// Residuals are measured relative to each gap (the fit minimizes
/// `sum ((gap_s - c alpha^s - floor) / gap_s)^2`), so the transient and the
/// plateau are weighed alike even when they differ by many orders of
/// magnitude. For each `alpha` the pair `(c, floor)` solves a weighted
/// linear least-squares problem; `alpha` is found by a grid search on
/// `(0, 1)` refined by golden section. `plateau_mean` is the mean of the
/// last `window` gaps (default `max(3, len / 4)`).
pub fn fit_empirical_rate<T: Scalar>(gaps: &[T], window: Option<usize>) -> Result<RateFit<T>> {
    if gaps.len() < 4 {
        return Err(Error::invalid("gaps", format!("need at least 4 gaps, got {}", gaps.len())));
    }
    if gaps.iter().any(|g| !(*g > T::zero()) || !g.is_finite()) {
        return Err(Error::invalid("gaps", "gaps must be finite and > 0"));
    }
    let g: Vec<f64> = gaps.iter().map(|v| v.as_f64()).collect();
    let w = window.unwrap_or_else(|| (g.len() / 4).max(3)).clamp(1, g.len());
    let plateau_mean = g[g.len() - w..].iter().sum::<f64>() / w as f64;
    let (lo, hi) = g.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if (hi - lo) <= 1e-9 * hi {
        return Ok(RateFit {
            alpha_hat: None,
            floor_hat: T::of(g.iter().sum::<f64>() / g.len() as f64),
            amplitude: T::zero(),
            plateau_mean: T::of(plateau_mean),
            identifiable: false,
        });
    }
    let sse = |alpha: f64| weighted_fit(&g, alpha).2;
    let grid = 2000;
    let mut best = (0.5, f64::INFINITY);
    for j in 1..grid {
        let a = j as f64 / grid as f64;
        let e = sse(a);
        if e < best.1 {
            best = (a, e);
        }
    }
    let step = 1.0 / grid as f64;
    let (mut a, mut b) = ((best.0 - step).max(1e-12), (best.0 + step).min(1.0 - 1e-12));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if sse(c) <= sse(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mut alpha = 0.5 * (a + b);
    if sse(best.0) < sse(alpha) {
        alpha = best.0;
    }
    let (amp, floor, _) = weighted_fit(&g, alpha);
    Ok(RateFit {
        alpha_hat: Some(T::of(alpha)),
        floor_hat: T::of(floor),
        amplitude: T::of(amp),
        plateau_mean: T::of(plateau_mean),
        identifiable: amp > 0.0,
    })
}

/// Weighted least squares for `(c, floor) >= 0` at fixed `alpha`; returns
/// `(c, floor, sse)`.
fn weighted_fit(g: &[f64], alpha: f64) -> (f64, f64, f64) {
    let a: Vec<f64> = (0..g.len()).map(|s| alpha.powi(s as i32)).collect();
    let w: Vec<f64> = g.iter().map(|v| 1.0 / (v * v)).collect();
    let sse = |c: f64, f: f64| g.iter().zip(&a).zip(&w).map(|((g, a), w)| w * (g - c * a - f).powi(2)).sum::<f64>();
    let (mut saa, mut sa1, mut s11, mut sag, mut s1g) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((g, a), w) in g.iter().zip(&a).zip(&w) {
        saa += w * a * a;
        sa1 += w * a;
        s11 += w;
        sag += w * a * g;
        s1g += w * g;
    }
    let mut candidates = Vec::with_capacity(3);
    let det = saa * s11 - sa1 * sa1;
    if det.abs() > 1e-300 {
        let c = (sag * s11 - s1g * sa1) / det;
        let f = (saa * s1g - sa1 * sag) / det;
        if c >= 0.0 && f >= 0.0 {
            candidates.push((c, f));
        }
    }
    candidates.push(((sag / saa).max(0.0), 0.0));
    candidates.push((0.0, (s1g / s11).max(0.0)));
    candidates
        .into_iter()
        .map(|(c, f)| (c, f, sse(c, f)))
        .min_by(|x, y| x.2.total_cmp(&y.2))
        .expect("at least one candidate")
}

/// Outcome of comparing measured gaps with a bound curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BoundCheck<T> {
    /// Epochs where `gap_s > bound_s`.
    pub violations: Vec<usize>,
    /// Largest `gap_s / bound_s`.
    pub max_ratio: T,
    /// No violation exceeds the bound by more than `rel_allowance`, and at
    /// most `max_violations` epochs exceed it at all.
    pub satisfied: bool,
}

pub fn check_bound<T: Scalar>(
    gaps: &[T],
    bound: &[T],
    rel_allowance: T,
    max_violations: usize,
) -> Result<BoundCheck<T>> {
    if gaps.len() != bound.len() {
        return Err(Error::Dimension { expected: bound.len(), got: gaps.len() });
    }
    let mut violations = Vec::new();
    let mut max_ratio = T::zero();
    let mut within = true;
    for (s, (&g, &b)) in gaps.iter().zip(bound).enumerate() {
        let ratio = if b > T::zero() {
            g / b
        } else if g > T::zero() {
            T::infinity()
        } else {
            T::zero()
        };
        max_ratio = max_ratio.max(ratio);
        if g > b {
            violations.push(s);
            within &= ratio <= T::one() + rel_allowance;
        }
    }
    let satisfied = within && violations.len() <= max_violations;
    Ok(BoundCheck { violations, max_ratio, satisfied })
}

/// Theory-versus-measurement record emitted by the `bound` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BoundComparison<T> {
    pub alpha: T,
    pub beta: T,
    pub floor: T,
    pub bound_curve: Vec<T>,
    pub empirical_gaps: Vec<T>,
    pub satisfied: bool,
}
