use rand::Rng;

use super::{Algorithm, InnerRecord, OptConfig, SnapshotRule, Trajectory};
use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::losses::{full_grad, pooled_aux_grad_into, Accumulator, LossModel, Summation};
use crate::rng::{self, tags};
use crate::scalar::{norm, Scalar};

/// `v = (g - c) + mu`, the single arithmetic path shared by SVRG and PPI-SVRG.
#[inline]
pub(super) fn combine<T: Scalar>(g: &[T], c: &[T], mu: &[T]) -> Vec<T> {
    g.iter().zip(c).zip(mu).map(|((&g, &c), &m)| (g - c) + m).collect()
}

/// Iterates stored for the random-iterate snapshot beyond this many scalars
/// are replaced by a replayed stream.
const STORE_LIMIT: usize = 1 << 24;

struct Control<T> {
    /// Per-labeled-record control variate at the snapshot, `n * k` row-major.
    per_record: Vec<T>,
    mu: Vec<T>,
}

fn control<T: Scalar>(
    algorithm: Algorithm,
    model: &LossModel<T>,
    ds: &SplitDataset<T>,
    snapshot: &[T],
    scratch: &mut [T],
) -> Result<Option<Control<T>>> {
    let k = snapshot.len();
    match algorithm {
        Algorithm::Sgd => Ok(None),
        Algorithm::Svrg => {
            let mut per_record = vec![T::zero(); ds.n() * k];
            for (r, row) in ds.labeled().iter().zip(per_record.chunks_exact_mut(k)) {
                model.grad_into(snapshot, &r.x, r.y, row);
            }
            let mu = full_grad(model, snapshot, ds.labeled())?;
            Ok(Some(Control { per_record, mu }))
        }
        Algorithm::PpiSvrg | Algorithm::PpiSvrgPp => {
            let mut mu = vec![T::zero(); k];
            pooled_aux_grad_into(model, snapshot, ds, scratch, &mut mu)?;
            let mut per_record = vec![T::zero(); ds.n() * k];
            for (r, row) in ds.labeled().iter().zip(per_record.chunks_exact_mut(k)) {
                model.aux_grad_into(snapshot, &r.x, r.f, row)?;
            }
            Ok(Some(Control { per_record, mu }))
        }
    }
}

fn default_rule(algorithm: Algorithm) -> SnapshotRule {
    match algorithm {
        Algorithm::Sgd => SnapshotRule::Last,
        Algorithm::Svrg | Algorithm::PpiSvrg => SnapshotRule::RandomIterate,
        Algorithm::PpiSvrgPp => SnapshotRule::Average,
    }
}

fn check_step<T: Scalar>(algorithm: Algorithm, model: &LossModel<T>, eta: T) -> Result<()> {
    let lam = model.smoothness;
    let ok = match algorithm {
        Algorithm::Sgd => true,
        Algorithm::Svrg | Algorithm::PpiSvrg => T::of(2.0) * lam * eta < T::one(),
        Algorithm::PpiSvrgPp => eta * T::of(4.0) * lam < T::one(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidStepSize { lambda: lam.as_f64(), eta: eta.as_f64() })
    }
}

pub(super) fn run<T: Scalar>(
    algorithm: Algorithm,
    model: &LossModel<T>,
    ds: &SplitDataset<T>,
    cfg: &OptConfig<T>,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    let k = model.param_dim(ds.dim());
    let theta0 = cfg.theta0.clone().unwrap_or_else(|| vec![T::zero(); k]);
    if algorithm == Algorithm::Svrg || algorithm == Algorithm::Sgd {
        model.validate()?;
        if theta0.len() != k {
            return Err(Error::Dimension { expected: k, got: theta0.len() });
        }
        full_grad(model, &theta0, ds.labeled())?;
    } else {
        model.check_dataset(ds, &theta0)?;
    }
    if cfg.strict {
        check_step(algorithm, model, cfg.eta)?;
    }
    let lengths = cfg.epoch_lengths(algorithm)?;
    let rule = cfg.snapshot_rule.unwrap_or_else(|| default_rule(algorithm));
    let restart_from_snapshot = algorithm != Algorithm::PpiSvrgPp;
    let n = ds.n();
    let eta = cfg.eta;

    let mut snapshots = vec![theta0.clone()];
    let mut mu_tilde = Vec::new();
    let mut last_v_norm = Vec::new();
    let mut last_iterates = Vec::new();
    let mut inner_records = Vec::new();
    let mut theta = theta0;
    let mut g = vec![T::zero(); k];
    let mut v = vec![T::zero(); k];
    let mut scratch = vec![T::zero(); k];
    let mut stored: Vec<T> = Vec::new();

    for (s, &m) in lengths.iter().enumerate() {
        let snap = snapshots[s].clone();
        let ctrl = control(algorithm, model, ds, &snap, &mut scratch)?;
        if let Some(c) = &ctrl {
            mu_tilde.push(c.mu.clone());
        }
        if restart_from_snapshot {
            theta.copy_from_slice(&snap);
        }
        let mut rng = rng::stream(rng::path_seed(cfg.seed, &[tags::OPTIMIZER, s as u64]));
        // Index of the random-iterate snapshot, drawn right after the m
        // index draws of this epoch.
        let store = rule == SnapshotRule::RandomIterate && m.saturating_mul(k) <= STORE_LIMIT;
        let mut tau_ahead = None;
        if rule == SnapshotRule::RandomIterate && !store {
            let mut replay = rng.clone();
            for _ in 0..m {
                replay.random_range(0..n);
            }
            tau_ahead = Some(replay.random_range(0..m));
        }
        stored.clear();
        let mut avg = Accumulator::new(k, Summation::Sequential);
        let mut tau_theta = None;
        let mut v_norm = T::zero();
        if cfg.record_every > 0 {
            inner_records.push(InnerRecord { epoch: s, t: 0, theta: theta.clone(), v_norm: None });
        }
        for t in 0..m {
            match rule {
                SnapshotRule::Average => avg.add(&theta),
                SnapshotRule::RandomIterate if store => stored.extend_from_slice(&theta),
                SnapshotRule::RandomIterate if tau_ahead == Some(t) => tau_theta = Some(theta.clone()),
                _ => {}
            }
            let i = rng.random_range(0..n);
            let r = &ds.labeled()[i];
            model.grad_into(&theta, &r.x, r.y, &mut g);
            match &ctrl {
                None => v.copy_from_slice(&g),
                Some(c) => {
                    let row = &c.per_record[i * k..(i + 1) * k];
                    for j in 0..k {
                        v[j] = (g[j] - row[j]) + c.mu[j];
                    }
                }
            }
            for j in 0..k {
                theta[j] -= eta * v[j];
            }
            let record = cfg.record_every > 0 && ((t + 1) % cfg.record_every == 0 || t + 1 == m);
            if record || t + 1 == m {
                v_norm = norm(&v);
            }
            if record {
                inner_records.push(InnerRecord { epoch: s, t: t + 1, theta: theta.clone(), v_norm: Some(v_norm) });
            }
        }
        let next = match rule {
            SnapshotRule::Last => theta.clone(),
            SnapshotRule::Average => avg.mean(),
            SnapshotRule::RandomIterate => {
                let tau = rng.random_range(0..m);
                if store {
                    stored[tau * k..(tau + 1) * k].to_vec()
                } else {
                    debug_assert_eq!(Some(tau), tau_ahead);
                    tau_theta.take().expect("replayed snapshot index was visited")
                }
            }
        };
        last_v_norm.push(v_norm);
        last_iterates.push(theta.clone());
        snapshots.push(next);
    }

    let gaps = match &cfg.reference {
        None => None,
        Some(reference) => {
            let star = super::objective_value(model, ds, &reference.theta_star, reference.objective)?;
            Some(
                snapshots
                    .iter()
                    .map(|th| super::objective_value(model, ds, th, reference.objective).map(|v| v - star))
                    .collect::<Result<Vec<T>>>()?,
            )
        }
    };
    let total_inner_iterations = lengths.iter().sum();
    Ok(Trajectory {
        algorithm,
        epoch_lengths: lengths,
        snapshots,
        mu_tilde,
        last_v_norm,
        last_iterates,
        inner_records,
        gaps,
        total_inner_iterations,
    })
}
