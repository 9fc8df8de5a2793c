use std::io::Write;

use serde::Serialize;

use super::{Algorithm, Trajectory};
use crate::error::Result;
use crate::scalar::{norm, Scalar};

/// Writes the trajectory as CSV with columns `epoch,t,gap,v_norm,mu_norm`.
///
/// Row `epoch = s, t = 0` carries the gap of the snapshot entering epoch `s`;
/// the row `t = m_s` of the last epoch carries the gap of the output. Inner
/// records fill the rows in between; empty cells mean "not measured".
pub fn write_trajectory_csv<T: Scalar, W: Write>(traj: &Trajectory<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "t", "gap", "v_norm", "mu_norm"])?;
    let cell = |v: Option<T>| v.map(|v| v.to_string()).unwrap_or_default();
    let gap = |s: usize| traj.gaps.as_ref().map(|g| g[s]);
    let last = traj.epoch_lengths.len() - 1;
    let mut end_written = false;
    for (s, &m) in traj.epoch_lengths.iter().enumerate() {
        let mu = cell(traj.mu_tilde.get(s).map(|mu| norm(mu)));
        let records: Vec<_> = traj.inner_records.iter().filter(|r| r.epoch == s).collect();
        if !records.first().is_some_and(|r| r.t == 0) {
            w.write_record([s.to_string(), "0".into(), cell(gap(s)), String::new(), mu.clone()])?;
        }
        for r in records {
            let g = match r.t {
                0 => gap(s),
                t if s == last && t == m => {
                    end_written = true;
                    gap(s + 1)
                }
                _ => None,
            };
            w.write_record([s.to_string(), r.t.to_string(), cell(g), cell(r.v_norm), mu.clone()])?;
        }
        if s == last && !end_written {
            w.write_record([s.to_string(), m.to_string(), cell(gap(s + 1)), cell(Some(traj.last_v_norm[s])), mu])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct TrajectorySummary<'a, T> {
    pub algorithm: Algorithm,
    pub final_theta: &'a [T],
    pub total_inner_iterations: usize,
    pub epoch_lengths: &'a [usize],
    pub final_gap: Option<T>,
    pub gaps: Option<&'a [T]>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn summary(&self) -> TrajectorySummary<'_, T> {
        TrajectorySummary {
            algorithm: self.algorithm,
            final_theta: self.final_theta(),
            total_inner_iterations: self.total_inner_iterations,
            epoch_lengths: &self.epoch_lengths,
            final_gap: self.gaps.as_ref().and_then(|g| g.last().copied()),
            gaps: self.gaps.as_deref(),
        }
    }
}
