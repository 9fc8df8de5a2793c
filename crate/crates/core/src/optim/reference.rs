use super::Objective;
use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::losses::{full_grad, labeled_objective, ppi_objective, ppi_objective_grad, LossModel};
use crate::scalar::{norm, Scalar};

pub fn objective_value<T: Scalar>(
    model: &LossModel<T>,
    ds: &SplitDataset<T>,
    theta: &[T],
    objective: Objective,
) -> Result<T> {
    match objective {
        Objective::Labeled => labeled_objective(model, theta, ds),
        Objective::Ppi => ppi_objective(model, theta, ds),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReferenceOptions {
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-12, max_iter: 2_000_000 }
    }
}

/// High-precision minimizer by deterministic full-gradient descent with
/// step `1 / lambda` (`1 / (3 lambda)` for the prediction-augmented
/// objective, whose three averaged terms are each `lambda`-smooth).
///
/// The tolerance is floored at `100 * epsilon` of the scalar type. Fails if
/// the tolerance is not reached within `max_iter` steps.
pub fn reference_optimum<T: Scalar>(
    model: &LossModel<T>,
    ds: &SplitDataset<T>,
    objective: Objective,
    start: Option<&[T]>,
    opts: ReferenceOptions,
) -> Result<Vec<T>> {
    model.validate()?;
    let k = model.param_dim(ds.dim());
    let mut theta = start.map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); k]);
    let tol = T::of(opts.grad_tol).max(T::epsilon() * T::of(100.0));
    let step = match objective {
        Objective::Labeled => T::one() / model.smoothness,
        Objective::Ppi => T::one() / (T::of(3.0) * model.smoothness),
    };
    for _ in 0..opts.max_iter {
        let g = match objective {
            Objective::Labeled => full_grad(model, &theta, ds.labeled())?,
            Objective::Ppi => ppi_objective_grad(model, &theta, ds)?,
        };
        if norm(&g) < tol {
            return Ok(theta);
        }
        for (t, gj) in theta.iter_mut().zip(&g) {
            *t -= step * *gj;
        }
    }
    Err(Error::invalid(
        "reference",
        format!("gradient descent did not reach tolerance {} in {} steps", opts.grad_tol, opts.max_iter),
    ))
}
