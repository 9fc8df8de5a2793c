use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use ppisvrg::data::{self, DatasetMetadata, SplitDataset};
use ppisvrg::harness::{reduction_table, run_protocol, ProtocolConfig};
use ppisvrg::inference::BootstrapConfig;
use ppisvrg::optim::{self, reference_optimum, write_trajectory_csv, Algorithm, Objective, ReferenceOptions};
use ppisvrg::rng::{child_seed, tags};
use ppisvrg::theory::{
    analytic_floor, bound_curve, check_bound, rate_constants, residual_floor, BoundComparison, FloorEstimator,
};
use ppisvrg::{LossModel, OptConfig};

use crate::config::{ExperimentConfig, Format};
use crate::CliError;

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<PathBuf, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::from(ppisvrg::Error::from(e)))?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn config_json(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

pub fn gen(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let spec = cfg
        .synthetic_spec()
        .ok_or_else(|| CliError::config(Some("data.synthetic"), "gen needs a synthetic data block"))?;
    let ds = data::generate(&spec)?;
    let csv_path = out.join("dataset.csv");
    data::write_csv(&ds, &csv_path)?;
    let meta = DatasetMetadata {
        n: ds.n(),
        big_n: ds.big_n(),
        dim: ds.dim(),
        outcome_kind: ds.outcome_kind(),
        spec: Some(spec),
    };
    let meta_path = data::write_metadata(&meta, &csv_path)?;
    Ok(vec![csv_path, meta_path])
}

/// Optimizer settings for `algorithm`, with the gap reference attached when
/// gaps are requested.
fn opt_config(cfg: &ExperimentConfig, model: &LossModel, ds: &SplitDataset<f64>) -> Result<OptConfig, CliError> {
    let o = &cfg.optimizer;
    let mut opt = OptConfig::new(cfg.eta(model), o.inner_steps, o.epochs, child_seed(cfg.seed, tags::OPTIMIZER))
        .with_record_every(o.record_every);
    opt.snapshot_rule = o.snapshot_rule;
    opt.theta0 = o.theta0.clone();
    opt.strict = o.strict;
    opt.max_epoch_len = o.max_epoch_len;
    opt.validate()?;
    if let Some(objective) = cfg.gap_objective() {
        let star = reference_optimum(model, ds, objective, None, ReferenceOptions::default())?;
        opt = opt.with_reference(star, objective);
    }
    Ok(opt)
}

fn trajectory_csv(traj: &optim::Trajectory<f64>, path: &Path) -> Result<PathBuf, CliError> {
    let mut buf = Vec::new();
    write_trajectory_csv(traj, &mut buf)?;
    write_file(path, &buf)
}

pub fn optimize(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let ds = cfg.load_dataset()?;
    let model = cfg.loss_model(&ds)?;
    let opt = opt_config(cfg, &model, &ds)?;
    let traj = optim::run(cfg.optimizer.algorithm, &model, &ds, &opt)?;
    let path = match cfg.format() {
        Format::Csv => trajectory_csv(&traj, &out.join("trajectory.csv"))?,
        Format::Json => write_json(
            &out.join("trajectory.json"),
            &json!({ "config": config_json(cfg), "trajectory": traj.summary() }),
        )?,
    };
    Ok(vec![path])
}

pub fn compare(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let ds = cfg.load_dataset()?;
    let model = cfg.loss_model(&ds)?;
    let opt = opt_config(cfg, &model, &ds)?;
    let runs =
        Algorithm::ALL.iter().map(|&alg| optim::run(alg, &model, &ds, &opt)).collect::<ppisvrg::Result<Vec<_>>>()?;
    match cfg.format() {
        Format::Csv => runs
            .iter()
            .map(|traj| trajectory_csv(traj, &out.join(format!("trajectory_{}.csv", traj.algorithm.name()))))
            .collect(),
        Format::Json => {
            let summaries: Vec<_> = runs.iter().map(|t| t.summary()).collect();
            let doc = json!({ "config": config_json(cfg), "trajectories": summaries });
            Ok(vec![write_json(&out.join("compare.json"), &doc)?])
        }
    }
}

pub fn mc(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let (pool, source, n_unlabeled) = cfg.pool()?;
    let model = cfg.loss_model(&pool)?;
    let p = &cfg.protocol;
    let mut opt = OptConfig::new(cfg.eta(&model), cfg.optimizer.inner_steps, cfg.optimizer.epochs, 0);
    opt.snapshot_rule = cfg.optimizer.snapshot_rule;
    opt.theta0 = cfg.optimizer.theta0.clone();
    opt.strict = cfg.optimizer.strict;
    opt.max_epoch_len = cfg.optimizer.max_epoch_len;
    let mut protocol = ProtocolConfig::new(cfg.target()?, model, opt);
    protocol.gamma_grid = p.gamma_grid.clone();
    protocol.reps = p.reps;
    protocol.methods = p.methods.clone();
    protocol.master_seed = cfg.seed;
    protocol.n_unlabeled = n_unlabeled;
    protocol.unlabeled_source = source;
    protocol.n_base = p.n_base;
    protocol.bootstrap = BootstrapConfig {
        reps: p.bootstrap.reps,
        deflation: p.bootstrap.deflation,
        seed: child_seed(cfg.seed, tags::BOOTSTRAP),
        warm_start: p.bootstrap.warm_start,
        grad_tol: p.bootstrap.grad_tol,
    };
    protocol.jobs = cfg.output.jobs;
    protocol.keep_reps = p.keep_reps;
    let report = run_protocol(&pool, &protocol)?;
    for w in &report.warnings {
        eprintln!("{}", json!({ "warning": w }));
    }
    let path = match cfg.format() {
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            write_file(&out.join("mc.csv"), &buf)?
        }
        Format::Json => {
            let reductions = reduction_table(&report).ok();
            write_json(
                &out.join("mc.json"),
                &json!({ "config": config_json(cfg), "report": report, "reductions": reductions }),
            )?
        }
    };
    Ok(vec![path])
}

pub fn bound(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let ds = cfg.load_dataset()?;
    let model = cfg.loss_model(&ds)?;
    if !(model.strong_convexity > 0.0) {
        return Err(CliError::config(
            Some("model.strong_convexity"),
            "the fixed-epoch bound needs a strongly convex loss",
        ));
    }
    let eta = cfg.eta(&model);
    let (m, epochs) = (cfg.optimizer.inner_steps, cfg.optimizer.epochs);
    let constants = rate_constants(model.strong_convexity, model.smoothness, eta, m)?;
    let star = reference_optimum(&model, &ds, Objective::Labeled, None, ReferenceOptions::default())?;
    let floor = match cfg.floor_estimator() {
        FloorEstimator::Analytic => {
            let spec = cfg
                .synthetic_spec()
                .ok_or_else(|| CliError::config(Some("bound.floor"), "the analytic floor needs synthetic data"))?;
            analytic_floor(&model, &spec)?
        }
        FloorEstimator::Residual => residual_floor(&model, &ds, &star)?,
    };
    let base_seed = child_seed(cfg.seed, tags::OPTIMIZER);
    let mut gaps = vec![0.0; epochs + 1];
    for i in 0..cfg.bound.seeds {
        let mut opt = OptConfig::new(eta, m, epochs, child_seed(base_seed, i as u64))
            .with_reference(star.clone(), Objective::Labeled);
        opt.theta0 = cfg.optimizer.theta0.clone();
        opt.snapshot_rule = cfg.optimizer.snapshot_rule;
        let traj = optim::run(Algorithm::PpiSvrg, &model, &ds, &opt)?;
        for (acc, g) in gaps.iter_mut().zip(traj.gaps.as_deref().unwrap_or_default()) {
            *acc += g / cfg.bound.seeds as f64;
        }
    }
    let curve = bound_curve(&constants, gaps[0], floor.conditional_variance, epochs)?;
    let check = check_bound(&gaps[1..], &curve[1..], cfg.bound.allowance, cfg.bound.max_violations)?;
    let comparison = BoundComparison {
        alpha: constants.alpha,
        beta: constants.beta,
        floor: floor.conditional_variance,
        bound_curve: curve,
        empirical_gaps: gaps,
        satisfied: check.satisfied,
    };
    let mut doc = serde_json::to_value(&comparison).expect("comparison serializes");
    doc["violations"] = json!(check.violations);
    doc["max_ratio"] = json!(check.max_ratio);
    doc["config"] = config_json(cfg);
    let mut written = vec![write_json(&out.join("bound.json"), &doc)?];
    if cfg.format() == Format::Csv {
        let mut w = String::from("epoch,bound,gap\n");
        for (s, (b, g)) in comparison.bound_curve.iter().zip(&comparison.empirical_gaps).enumerate() {
            w.push_str(&format!("{s},{b},{g}\n"));
        }
        written.push(write_file(&out.join("bound.csv"), w.as_bytes())?);
    }
    Ok(written)
}
