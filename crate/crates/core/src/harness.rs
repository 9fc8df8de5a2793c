//! Monte Carlo evaluation of the estimators over a grid of labeled
//! fractions.
//!
//! For each fraction `gamma` and repetition `r`, a labeled subset of size
//! `floor(gamma * n_base)` and an unlabeled subset of fixed size are drawn
//! with replacement from a pool, independently, with seed
//! `path_seed(master_seed, [RESAMPLE, g, r])`. Every configured method is
//! applied to the same draw and the results are aggregated into MSE, bias,
//! mean CI width and coverage per `(method, gamma)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate, labeled_size, resample_with_replacement, SplitDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::inference::{naive_estimate, ppi_estimate, ppi_svrg_estimate, BootstrapConfig, EstimateReport, Method};
use crate::losses::LossModel;
use crate::optim::OptConfig;
use crate::rng::{child_seed, path_seed, tags};
use crate::scalar::Scalar;

/// Truth used for bias and coverage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target<T> {
    /// A fixed value, typically the generator's population mean.
    Fixed(T),
    /// Mean outcome of the pool's labeled records (finite-population target).
    PoolMean,
}

/// Where the unlabeled draws come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UnlabeledSource {
    /// The pool's prediction-only records.
    #[default]
    Unlabeled,
    /// Predictions of every pool record, labeled ones included.
    AllRecords,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ProtocolConfig<T> {
    #[serde(default = "default_grid")]
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub target: Target<T>,
    #[serde(default)]
    pub master_seed: u64,
    /// Unlabeled draws per repetition; the source's size when absent.
    #[serde(default)]
    pub n_unlabeled: Option<usize>,
    #[serde(default)]
    pub unlabeled_source: UnlabeledSource,
    /// Base of the labeled sizes `floor(gamma * n_base)`; defaults to the
    /// pool's record count `n + N`.
    #[serde(default)]
    pub n_base: Option<usize>,
    /// Loss for the optimizer-based method (`mean_sq`, possibly calibrated).
    pub model: LossModel<T>,
    /// Optimizer settings; the seed is replaced per repetition.
    pub opt: OptConfig<T>,
    #[serde(default)]
    pub bootstrap: BootstrapConfig<T>,
    /// Worker threads; rayon's global pool when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Keep per-repetition estimates in the report.
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

/// Bootstrap replicates above which a runtime warning is attached.
pub const BOOTSTRAP_WARN_WORK: f64 = 1e10;

impl<T: Scalar> ProtocolConfig<T> {
    pub fn new(target: Target<T>, model: LossModel<T>, opt: OptConfig<T>) -> Self {
        Self {
            gamma_grid: default_grid(),
            reps: default_reps(),
            methods: default_methods(),
            target,
            master_seed: 0,
            n_unlabeled: None,
            unlabeled_source: UnlabeledSource::default(),
            n_base: None,
            model,
            opt,
            bootstrap: BootstrapConfig::default(),
            jobs: None,
            keep_reps: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::invalid("reps", "must be at least 1"));
        }
        if self.gamma_grid.is_empty() {
            return Err(Error::invalid("gamma_grid", "must not be empty"));
        }
        if let Some(g) = self.gamma_grid.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(Error::invalid("gamma_grid", format!("{g} is outside (0, 1]")));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("methods", "must not be empty"));
        }
        if self.jobs == Some(0) {
            return Err(Error::invalid("jobs", "must be at least 1"));
        }
        Ok(())
    }
}

/// Finite population for a synthetic spec: `n + N` fully labeled records,
/// drawn with the spec's seed. Pair it with
/// [`UnlabeledSource::AllRecords`] and `n_unlabeled = N`.
pub fn pool_from_spec<T: Scalar>(spec: &SyntheticSpec<T>) -> Result<SplitDataset<T>> {
    let pool_spec = SyntheticSpec { n: spec.n + spec.big_n, big_n: 0, ..spec.clone() };
    generate(&pool_spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CellSummary<T> {
    pub method: Method,
    pub gamma: f64,
    pub n_labeled: usize,
    pub mse: T,
    pub bias: T,
    pub mean_ci_width: T,
    pub coverage: T,
    pub mean_se: T,
    pub reps_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RepRecord<T> {
    pub gamma: f64,
    pub rep: usize,
    pub report: EstimateReport<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MonteCarloReport<T> {
    pub target: T,
    pub cells: Vec<CellSummary<T>>,
    #[serde(default)]
    pub reps: Vec<RepRecord<T>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl<T: Scalar> MonteCarloReport<T> {
    pub fn cell(&self, method: Method, gamma: f64) -> Option<&CellSummary<T>> {
        self.cells.iter().find(|c| c.method == method && c.gamma == gamma)
    }

    /// CSV with columns `method,gamma,mse,bias,ci_width,coverage,reps`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "gamma", "mse", "bias", "ci_width", "coverage", "reps"])?;
        for c in &self.cells {
            w.write_record([
                c.method.name().to_string(),
                c.gamma.to_string(),
                c.mse.to_string(),
                c.bias.to_string(),
                c.mean_ci_width.to_string(),
                c.coverage.to_string(),
                c.reps_used.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn estimate<T: Scalar>(
    method: Method,
    ds: &SplitDataset<T>,
    cfg: &ProtocolConfig<T>,
    seed: u64,
) -> Result<EstimateReport<T>> {
    match method {
        Method::Naive => naive_estimate(ds),
        Method::Ppi => ppi_estimate(ds),
        Method::PpiSvrg => {
            let opt = OptConfig { seed: child_seed(seed, tags::OPTIMIZER), ..cfg.opt.clone() };
            let boot = BootstrapConfig { seed: child_seed(seed, tags::BOOTSTRAP), ..cfg.bootstrap.clone() };
            ppi_svrg_estimate(ds, &cfg.model, &opt, &boot)
        }
    }
}

pub fn run_protocol<T: Scalar>(pool: &SplitDataset<T>, cfg: &ProtocolConfig<T>) -> Result<MonteCarloReport<T>> {
    cfg.validate()?;
    let source = match cfg.unlabeled_source {
        UnlabeledSource::Unlabeled => pool.clone(),
        UnlabeledSource::AllRecords => pool.with_pooled_predictions(),
    };
    let n_unlab = cfg.n_unlabeled.unwrap_or(source.big_n());
    let n_base = cfg.n_base.unwrap_or(pool.n() + pool.big_n());
    let sizes = cfg
        .gamma_grid
        .iter()
        .map(|&g| {
            let n = labeled_size(g, n_base);
            if n < 2 {
                Err(Error::invalid(
                    "gamma_grid",
                    format!("gamma {g} gives {n} labeled draws from a base of {n_base}; at least 2 are needed"),
                ))
            } else if n > pool.n() {
                Err(Error::invalid(
                    "gamma_grid",
                    format!("gamma {g} needs {n} labeled draws but the pool has only {} labeled records", pool.n()),
                ))
            } else {
                Ok(n)
            }
        })
        .collect::<Result<Vec<usize>>>()?;
    let target = match cfg.target {
        Target::Fixed(t) => t,
        Target::PoolMean => crate::scalar::mean(&pool.labeled_y()).ok_or(Error::Empty("pool"))?,
    };
    let mut warnings = Vec::new();
    if cfg.methods.contains(&Method::PpiSvrg) {
        let steps: usize = cfg.opt.epoch_lengths(crate::optim::Algorithm::PpiSvrg)?.iter().sum();
        let work = (cfg.bootstrap.reps + 1) as f64 * steps as f64 * (cfg.reps * cfg.gamma_grid.len()) as f64;
        if work > BOOTSTRAP_WARN_WORK {
            warnings.push(format!(
                "ppi_svrg runs {} bootstrap replicates of {steps} optimizer steps per repetition ({work:.2e} steps in total)",
                cfg.bootstrap.reps
            ));
        }
    }

    let jobs: Vec<(usize, usize)> = (0..sizes.len()).flat_map(|g| (0..cfg.reps).map(move |r| (g, r))).collect();
    let work = || {
        jobs.par_iter()
            .map(|&(g, r)| {
                let seed = path_seed(cfg.master_seed, &[tags::RESAMPLE, g as u64, r as u64]);
                let ds = resample_with_replacement(&source, sizes[g], n_unlab, seed)?;
                cfg.methods.iter().map(|&m| estimate(m, &ds, cfg, seed)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<Vec<EstimateReport<T>>>>>()
    };
    let results = match cfg.jobs {
        None => work()?,
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::invalid("jobs", e.to_string()))?
            .install(work)?,
    };

    let mut cells = Vec::new();
    for (g, &gamma) in cfg.gamma_grid.iter().enumerate() {
        let rows = &results[g * cfg.reps..(g + 1) * cfg.reps];
        for (k, &method) in cfg.methods.iter().enumerate() {
            let reports: Vec<&EstimateReport<T>> = rows.iter().map(|row| &row[k]).collect();
            cells.push(summarize(method, gamma, sizes[g], target, &reports));
        }
    }
    let mut reps = Vec::new();
    if cfg.keep_reps {
        for (&(g, rep), row) in jobs.iter().zip(results) {
            reps.extend(row.into_iter().map(|report| RepRecord { gamma: cfg.gamma_grid[g], rep, report }));
        }
    }
    Ok(MonteCarloReport { target, cells, reps, warnings })
}

fn summarize<T: Scalar>(
    method: Method,
    gamma: f64,
    n_labeled: usize,
    target: T,
    reports: &[&EstimateReport<T>],
) -> CellSummary<T> {
    let count = T::of_usize(reports.len());
    let mut sq = T::zero();
    let mut err = T::zero();
    let mut width = T::zero();
    let mut se = T::zero();
    let mut covered = 0usize;
    for r in reports {
        let e = r.theta_hat - target;
        sq += e * e;
        err += e;
        width += T::of(2.0) * r.z * r.se;
        se += r.se;
        covered += usize::from(r.covers(target));
    }
    CellSummary {
        method,
        gamma,
        n_labeled,
        mse: sq / count,
        bias: err / count,
        mean_ci_width: width / count,
        coverage: T::of_usize(covered) / count,
        mean_se: se / count,
        reps_used: reports.len(),
    }
}

/// `100 (1 - mse_a / mse_b)`.
pub fn reduction<T: Scalar>(mse_a: T, mse_b: T) -> Result<T> {
    if !(mse_b > T::zero()) {
        return Err(Error::invalid("mse", "baseline MSE must be > 0"));
    }
    Ok(T::of(100.0) * (T::one() - mse_a / mse_b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ReductionRow<T> {
    pub gamma: f64,
    /// Percent MSE reduction of `ppi_svrg` relative to `ppi`.
    pub vs_ppi: T,
    /// Percent MSE reduction of `ppi_svrg` relative to `naive`.
    pub vs_naive: T,
}

pub fn reduction_table<T: Scalar>(report: &MonteCarloReport<T>) -> Result<Vec<ReductionRow<T>>> {
    let mut gammas: Vec<f64> = Vec::new();
    for c in &report.cells {
        if !gammas.contains(&c.gamma) {
            gammas.push(c.gamma);
        }
    }
    gammas
        .into_iter()
        .map(|gamma| {
            let get = |m: Method| {
                report
                    .cell(m, gamma)
                    .map(|c| c.mse)
                    .ok_or_else(|| Error::invalid("report", format!("no {} cell at gamma {gamma}", m.name())))
            };
            let svrg = get(Method::PpiSvrg)?;
            Ok(ReductionRow {
                gamma,
                vs_ppi: reduction(svrg, get(Method::Ppi)?)?,
                vs_naive: reduction(svrg, get(Method::Naive)?)?,
            })
        })
        .collect()
}

/// Average ranks (ties share the mean rank).
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanTest {
    pub rho: f64,
    /// One-sided p-value for a negative association, by exact enumeration of
    /// all permutations of `y`.
    pub p_negative: f64,
}

/// Spearman rank correlation with an exact permutation p-value; at most 9
/// points.
pub fn spearman_test(x: &[f64], y: &[f64]) -> Result<SpearmanTest> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    if !(3..=9).contains(&x.len()) {
        return Err(Error::invalid("x", "exact test needs 3 to 9 points"));
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let rho = pearson(&rx, &ry);
    let mut perm = ry.clone();
    let (mut hits, mut total) = (0usize, 0usize);
    heap_permutations(&mut perm, &mut |p| {
        total += 1;
        if pearson(&rx, p) <= rho + 1e-12 {
            hits += 1;
        }
    });
    Ok(SpearmanTest { rho, p_negative: hits as f64 / total as f64 })
}

fn heap_permutations(v: &mut [f64], visit: &mut impl FnMut(&[f64])) {
    let n = v.len();
    let mut c = vec![0usize; n];
    visit(v);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                v.swap(0, i);
            } else {
                v.swap(c[i], i);
            }
            visit(v);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}
