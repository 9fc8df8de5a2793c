//! Labeled/unlabeled datasets, synthetic generation and CSV ingestion.

mod io;
mod synthetic;

pub use io::{read_csv, read_metadata, write_csv, write_metadata, DatasetMetadata};
pub use synthetic::{generate, SyntheticSpec};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tags};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    /// Outcomes stored as 0/1.
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LabeledRecord<T> {
    pub x: Vec<T>,
    pub y: T,
    pub f: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct UnlabeledRecord<T> {
    pub x: Vec<T>,
    pub f: T,
}

impl<T: Scalar> LabeledRecord<T> {
    pub fn new(x: Vec<T>, y: T, f: T) -> Self {
        Self { x, y, f }
    }
}

impl<T: Scalar> UnlabeledRecord<T> {
    pub fn new(x: Vec<T>, f: T) -> Self {
        Self { x, f }
    }
}

/// `n >= 1` labeled records and `N >= 0` prediction-only records sharing one
/// feature dimension. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset<T> {
    labeled: Vec<LabeledRecord<T>>,
    unlabeled: Vec<UnlabeledRecord<T>>,
    outcome_kind: OutcomeKind,
    dim: usize,
}

impl<T: Scalar> SplitDataset<T> {
    pub fn new(
        labeled: Vec<LabeledRecord<T>>,
        unlabeled: Vec<UnlabeledRecord<T>>,
        outcome_kind: OutcomeKind,
    ) -> Result<Self> {
        let first = labeled.first().ok_or(Error::Empty("labeled set"))?;
        let dim = first.x.len();
        for r in &labeled {
            if r.x.len() != dim {
                return Err(Error::Dimension { expected: dim, got: r.x.len() });
            }
            if !r.y.is_finite() || !r.f.is_finite() || r.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("labeled", "non-finite value"));
            }
            if outcome_kind == OutcomeKind::Binary && r.y != T::zero() && r.y != T::one() {
                return Err(Error::invalid("y", format!("binary outcome must be 0 or 1, got {}", r.y)));
            }
        }
        for r in &unlabeled {
            if r.x.len() != dim {
                return Err(Error::Dimension { expected: dim, got: r.x.len() });
            }
            if !r.f.is_finite() || r.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("unlabeled", "non-finite value"));
            }
        }
        Ok(Self { labeled, unlabeled, outcome_kind, dim })
    }

    /// Pure mean-estimation dataset (`d = 0`) from outcome/prediction columns.
    pub fn from_columns(y: &[T], f_lab: &[T], f_unlab: &[T], kind: OutcomeKind) -> Result<Self> {
        if y.len() != f_lab.len() {
            return Err(Error::Dimension { expected: y.len(), got: f_lab.len() });
        }
        let labeled = y.iter().zip(f_lab).map(|(&y, &f)| LabeledRecord::new(Vec::new(), y, f)).collect();
        let unlabeled = f_unlab.iter().map(|&f| UnlabeledRecord::new(Vec::new(), f)).collect();
        Self::new(labeled, unlabeled, kind)
    }

    pub fn labeled(&self) -> &[LabeledRecord<T>] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[UnlabeledRecord<T>] {
        &self.unlabeled
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of labeled records `n`.
    pub fn n(&self) -> usize {
        self.labeled.len()
    }

    /// Number of prediction-only records `N`.
    pub fn big_n(&self) -> usize {
        self.unlabeled.len()
    }

    /// `n / (n + N)`.
    pub fn labeled_fraction(&self) -> f64 {
        self.n() as f64 / (self.n() + self.big_n()) as f64
    }

    /// Every `(x, f)` pair: labeled records first, then unlabeled, in stored order.
    pub fn predictions(&self) -> impl Iterator<Item = (&[T], T)> + '_ {
        self.labeled.iter().map(|r| (r.x.as_slice(), r.f)).chain(self.unlabeled.iter().map(|r| (r.x.as_slice(), r.f)))
    }

    pub fn labeled_y(&self) -> Vec<T> {
        self.labeled.iter().map(|r| r.y).collect()
    }

    pub fn labeled_f(&self) -> Vec<T> {
        self.labeled.iter().map(|r| r.f).collect()
    }

    pub fn unlabeled_f(&self) -> Vec<T> {
        self.unlabeled.iter().map(|r| r.f).collect()
    }

    /// Copy whose prediction-only part holds the predictions of every record
    /// (labeled records contribute their `(x, f)` as well). Used when the
    /// unlabeled draws of a resampling protocol come from the full record set.
    pub fn with_pooled_predictions(&self) -> Self {
        let unlabeled = self
            .labeled
            .iter()
            .map(|r| UnlabeledRecord::new(r.x.clone(), r.f))
            .chain(self.unlabeled.iter().cloned())
            .collect();
        Self { labeled: self.labeled.clone(), unlabeled, outcome_kind: self.outcome_kind, dim: self.dim }
    }
}

/// Draws `n_lab` labeled and `n_unlab` unlabeled records uniformly with
/// replacement, from independent child streams of `seed`.
pub fn resample_with_replacement<T: Scalar>(
    ds: &SplitDataset<T>,
    n_lab: usize,
    n_unlab: usize,
    seed: u64,
) -> Result<SplitDataset<T>> {
    if n_lab == 0 {
        return Err(Error::invalid("n_lab", "at least one labeled draw is required"));
    }
    if n_unlab > 0 && ds.unlabeled.is_empty() {
        return Err(Error::Empty("unlabeled pool"));
    }
    let mut lab_rng = rng::stream(rng::child_seed(seed, tags::LABELED));
    let labeled = (0..n_lab).map(|_| ds.labeled[lab_rng.random_range(0..ds.n())].clone()).collect();
    let mut unlab_rng = rng::stream(rng::child_seed(seed, tags::UNLABELED));
    let unlabeled = (0..n_unlab).map(|_| ds.unlabeled[unlab_rng.random_range(0..ds.big_n())].clone()).collect();
    Ok(SplitDataset { labeled, unlabeled, outcome_kind: ds.outcome_kind, dim: ds.dim })
}

/// Labeled subset size `floor(gamma * n_base)`.
pub fn labeled_size(gamma: f64, n_base: usize) -> usize {
    (gamma * n_base as f64 + 1e-9).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SplitDataset<f64> {
        SplitDataset::from_columns(
            &[0.0, 1.0, 2.0, 3.0, 4.0],
            &[0.0, 1.0, 2.0, 3.0, 4.0],
            &[10.0, 11.0],
            OutcomeKind::Continuous,
        )
        .unwrap()
    }

    #[test]
    fn rejects_empty_and_mixed_dimensions() {
        assert!(matches!(SplitDataset::<f64>::new(vec![], vec![], OutcomeKind::Continuous), Err(Error::Empty(_))));
        let lab = vec![LabeledRecord::new(vec![1.0], 0.0, 0.0), LabeledRecord::new(vec![1.0, 2.0], 0.0, 0.0)];
        assert!(matches!(SplitDataset::new(lab, vec![], OutcomeKind::Continuous), Err(Error::Dimension { .. })));
        let lab = vec![LabeledRecord::new(vec![], 0.5, 0.0)];
        assert!(SplitDataset::new(lab, vec![], OutcomeKind::Binary).is_err());
    }

    #[test]
    fn labeled_fraction_in_unit_interval() {
        let ds = small();
        assert_eq!(ds.labeled_fraction(), 5.0 / 7.0);
        assert_eq!(ds.predictions().count(), 7);
    }

    #[test]
    fn resample_draws_from_pool_with_duplicates() {
        let ds = small();
        let r = resample_with_replacement(&ds, 5, 0, 3).unwrap();
        assert_eq!(r.n(), 5);
        assert_eq!(r.big_n(), 0);
        for rec in r.labeled() {
            assert!(ds.labeled().contains(rec));
        }
        // Over many seeds at least one draw repeats an index.
        let dup = (0..50u64).any(|s| {
            let mut ys: Vec<i64> =
                resample_with_replacement(&ds, 5, 0, s).unwrap().labeled_y().iter().map(|&v| v as i64).collect();
            ys.sort_unstable();
            ys.windows(2).any(|w| w[0] == w[1])
        });
        assert!(dup);
        assert_eq!(
            resample_with_replacement(&ds, 5, 3, 11).unwrap(),
            resample_with_replacement(&ds, 5, 3, 11).unwrap()
        );
    }

    #[test]
    fn resample_from_empty_unlabeled_pool_fails() {
        let ds = SplitDataset::from_columns(&[1.0], &[1.0], &[], OutcomeKind::Continuous).unwrap();
        assert!(matches!(resample_with_replacement(&ds, 1, 1, 0), Err(Error::Empty(_))));
        assert!(resample_with_replacement(&ds, 1, 0, 0).is_ok());
    }

    #[test]
    fn gamma_sweep_sizes() {
        assert_eq!(labeled_size(0.1, 1674), 167);
        assert_eq!(labeled_size(0.1, 1596), 159);
        assert_eq!(labeled_size(0.3, 10), 3);
        assert_eq!(labeled_size(0.5, 160), 80);
    }

    #[test]
    fn distinct_seeds_give_distinct_draws() {
        let y: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ds = SplitDataset::from_columns(&y, &y, &[], OutcomeKind::Continuous).unwrap();
        // Two 100-draw multisets from 100 items coincide with negligible probability.
        for t in 0..100u64 {
            let a = resample_with_replacement(&ds, 100, 0, 2 * t).unwrap().labeled_y();
            let b = resample_with_replacement(&ds, 100, 0, 2 * t + 1).unwrap().labeled_y();
            assert_ne!(a, b);
        }
    }

    #[test]
    fn pooled_predictions_prepend_labeled() {
        let ds = small().with_pooled_predictions();
        assert_eq!(ds.big_n(), 7);
        assert_eq!(ds.unlabeled_f()[..5], [0.0, 1.0, 2.0, 3.0, 4.0]);
    }
}
