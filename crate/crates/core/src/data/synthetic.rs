use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{LabeledRecord, OutcomeKind, SplitDataset, UnlabeledRecord};
use crate::error::{Error, Result};
use crate::losses::Calibration;
use crate::rng;
use crate::scalar::{dot, Scalar};

/// Parameters of a synthetic split dataset with controllable prediction
/// quality.
///
/// Continuous outcomes follow `Y = F + eps` with `eps ~ N(0, sigma^2)`. For
/// `d = 0` the prediction is `F ~ N(theta_star[0], 1)`; for `d > 0` features
/// are standard normal and `F = theta_star . x + xi` with `xi ~ N(0, 1)`.
/// Either way `Var(Y | X, F) = sigma^2`.
///
/// Binary outcomes are `Y ~ Bernoulli(prevalence)` for `d = 0`, or
/// `Bernoulli(sigmoid(theta_star . x + logit(prevalence)))` for `d > 0`. The
/// prediction `F` equals `Y` except on an independent `flip_prob` coin, so
/// `P(F != Y) = flip_prob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SyntheticSpec<T> {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub outcome_kind: OutcomeKind,
    #[serde(default)]
    pub dim: usize,
    #[serde(default)]
    pub theta_star: Vec<T>,
    #[serde(default)]
    pub pred_noise_sigma: T,
    #[serde(default)]
    pub flip_prob: T,
    #[serde(default = "default_prevalence")]
    pub prevalence: T,
    pub seed: u64,
}

fn default_prevalence<T: Scalar>() -> T {
    T::of(0.5)
}

impl<T: Scalar> SyntheticSpec<T> {
    pub fn continuous(n: usize, big_n: usize, theta_star: T, sigma: T, seed: u64) -> Self {
        Self {
            n,
            big_n,
            outcome_kind: OutcomeKind::Continuous,
            dim: 0,
            theta_star: vec![theta_star],
            pred_noise_sigma: sigma,
            flip_prob: T::zero(),
            prevalence: T::of(0.5),
            seed,
        }
    }

    pub fn binary(n: usize, big_n: usize, prevalence: T, flip_prob: T, seed: u64) -> Self {
        Self {
            n,
            big_n,
            outcome_kind: OutcomeKind::Binary,
            dim: 0,
            theta_star: Vec::new(),
            pred_noise_sigma: T::zero(),
            flip_prob,
            prevalence,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        if !(self.pred_noise_sigma >= T::zero()) || !self.pred_noise_sigma.is_finite() {
            return Err(Error::invalid(
                "pred_noise_sigma",
                format!("must be finite and >= 0, got {}", self.pred_noise_sigma),
            ));
        }
        if !(self.flip_prob >= T::zero() && self.flip_prob <= T::of(0.5)) {
            return Err(Error::invalid("flip_prob", format!("must lie in [0, 0.5], got {}", self.flip_prob)));
        }
        if !(self.prevalence > T::zero() && self.prevalence < T::one()) {
            return Err(Error::invalid("prevalence", format!("must lie in (0, 1), got {}", self.prevalence)));
        }
        if self.theta_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta_star", "non-finite entry"));
        }
        let want = match (self.outcome_kind, self.dim) {
            (OutcomeKind::Continuous, 0) => Some(1),
            (OutcomeKind::Binary, 0) => None,
            (_, d) => Some(d),
        };
        if let Some(k) = want {
            if self.theta_star.len() != k {
                return Err(Error::invalid(
                    "theta_star",
                    format!("expected {k} entries, got {}", self.theta_star.len()),
                ));
            }
        }
        Ok(())
    }

    /// `E[Y]` under the generating distribution, when it has a closed form.
    pub fn population_mean(&self) -> Option<T> {
        match (self.outcome_kind, self.dim) {
            (OutcomeKind::Continuous, 0) => self.theta_star.first().copied(),
            (OutcomeKind::Continuous, _) => Some(T::zero()),
            (OutcomeKind::Binary, 0) => Some(self.prevalence),
            (OutcomeKind::Binary, _) => None,
        }
    }

    /// The exact conditional-mean map `f -> E[Y | X, F = f]`, when it depends
    /// on `f` alone.
    pub fn calibration(&self) -> Option<Calibration<T>> {
        match (self.outcome_kind, self.dim) {
            (OutcomeKind::Continuous, _) => Some(Calibration::Identity),
            (OutcomeKind::Binary, 0) => {
                let (p, q) = (self.prevalence, self.flip_prob);
                let one = T::one();
                // P(Y=1 | F=1) and P(Y=1 | F=0) under symmetric flips.
                let p1 = p * (one - q) / (p * (one - q) + (one - p) * q);
                let p0 = p * q / (p * q + (one - p) * (one - q));
                Some(Calibration::Binary { p_given_0: p0, p_given_1: p1 })
            }
            (OutcomeKind::Binary, _) => None,
        }
    }

    /// `E[Var(Y | X, F)]`, which is the conditional-variance floor of the
    /// squared mean loss.
    pub fn conditional_outcome_variance(&self) -> Option<T> {
        match (self.outcome_kind, self.dim) {
            (OutcomeKind::Continuous, _) => Some(self.pred_noise_sigma * self.pred_noise_sigma),
            (OutcomeKind::Binary, 0) => {
                let Some(Calibration::Binary { p_given_0, p_given_1 }) = self.calibration() else {
                    return None;
                };
                let (p, q, one) = (self.prevalence, self.flip_prob, T::one());
                let pf1 = p * (one - q) + (one - p) * q;
                Some(pf1 * p_given_1 * (one - p_given_1) + (one - pf1) * p_given_0 * (one - p_given_0))
            }
            (OutcomeKind::Binary, _) => None,
        }
    }
}

struct Draw<T> {
    x: Vec<T>,
    y: T,
    f: T,
}

fn draw<T: Scalar, R: Rng>(spec: &SyntheticSpec<T>, rng: &mut R) -> Draw<T> {
    let normal = |rng: &mut R| -> T { T::of(rng.sample::<f64, _>(StandardNormal)) };
    let x: Vec<T> = (0..spec.dim).map(|_| normal(rng)).collect();
    match spec.outcome_kind {
        OutcomeKind::Continuous => {
            let center = if spec.dim == 0 { spec.theta_star[0] } else { dot(&spec.theta_star, &x) };
            let f = center + normal(rng);
            let y = f + spec.pred_noise_sigma * normal(rng);
            Draw { x, y, f }
        }
        OutcomeKind::Binary => {
            let p = if spec.dim == 0 {
                spec.prevalence
            } else {
                let logit = (spec.prevalence / (T::one() - spec.prevalence)).ln();
                let z = dot(&spec.theta_star, &x) + logit;
                T::one() / (T::one() + (-z).exp())
            };
            let y = if T::of(rng.random::<f64>()) < p { T::one() } else { T::zero() };
            let flip = T::of(rng.random::<f64>()) < spec.flip_prob;
            let f = if flip { T::one() - y } else { y };
            Draw { x, y, f }
        }
    }
}

/// Builds the dataset described by `spec`; a pure function of the spec.
pub fn generate<T: Scalar>(spec: &SyntheticSpec<T>) -> Result<SplitDataset<T>> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed);
    let labeled = (0..spec.n)
        .map(|_| {
            let d = draw(spec, &mut rng);
            LabeledRecord::new(d.x, d.y, d.f)
        })
        .collect();
    let unlabeled = (0..spec.big_n)
        .map(|_| {
            let d = draw(spec, &mut rng);
            UnlabeledRecord::new(d.x, d.f)
        })
        .collect();
    SplitDataset::new(labeled, unlabeled, spec.outcome_kind)
}
