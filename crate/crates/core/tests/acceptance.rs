//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. Pass
//! criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p ppisvrg --test acceptance -- 2 5`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;

use ppisvrg::data::{generate, LabeledRecord, OutcomeKind, SplitDataset, SyntheticSpec, UnlabeledRecord};
use ppisvrg::harness::{reduction, run_protocol, ProtocolConfig, Target, UnlabeledSource};
use ppisvrg::inference::{naive_estimate, ppi_estimate, ppi_svrg_estimate, BootstrapConfig, Method};
use ppisvrg::losses::{labeled_objective, LossModel};
use ppisvrg::optim::{
    doubling_total, reference_optimum, run_ppi_svrg, run_ppi_svrg_pp, run_svrg, Objective, OptConfig, ReferenceOptions,
};
use ppisvrg::rng::{self, child_seed, tags};
use ppisvrg::theory::{
    analytic_floor, bound_curve, check_bound, default_pplus_eta, fit_empirical_rate, rate_constants, DiscreteJoint,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Criterion = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion, Option<Duration>); 10] = [
        ("svrg equivalence", c1_svrg_equivalence, Some(Duration::from_secs(1))),
        ("closed-form oracle", c2_closed_form, Some(Duration::from_secs(10))),
        ("fixed-epoch upper bound", c3_upper_bound, Some(Duration::from_secs(30))),
        ("rate/floor separation", c4_rate_floor, Some(Duration::from_secs(60))),
        ("doubling bookkeeping", c5_doubling, None),
        ("doubling sublinear decay", c6_sublinear, Some(Duration::from_secs(60))),
        ("total-variance identity", c7_total_variance, None),
        ("monte carlo protocol", c8_monte_carlo, Some(Duration::from_secs(300))),
        ("standard errors", c9_standard_errors, None),
        ("constants calculator", c10_constants, None),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let k = i + 1;
        if !selected.is_empty() && !selected.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let mut out = run();
        let elapsed = start.elapsed();
        if let Some(b) = budget {
            if elapsed > *b {
                out.pass = false;
                out.detail.push_str(&format!("; over the {:.0?} budget", b));
            }
        }
        failed += usize::from(!out.pass);
        println!(
            "criterion {k:>2} {:<26} {} ({:.2?}) {}",
            name,
            if out.pass { "PASS" } else { "FAIL" },
            elapsed,
            out.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}

fn normal(r: &mut impl Rng) -> f64 {
    r.sample(StandardNormal)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Independent closed form `Ybar_lab + Fbar_all - Fbar_lab`.
fn closed_form(y: &[f64], f_lab: &[f64], f_unlab: &[f64]) -> f64 {
    let all = (f_lab.iter().sum::<f64>() + f_unlab.iter().sum::<f64>()) / (f_lab.len() + f_unlab.len()) as f64;
    mean(y) + all - mean(f_lab)
}

fn c1_svrg_equivalence() -> Outcome {
    let mut r = rng::stream(101);
    let d = 5;
    let labeled: Vec<LabeledRecord<f64>> = (0..60)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
            let y = x.iter().enumerate().map(|(j, v)| (j as f64 - 2.0) * v).sum::<f64>() + normal(&mut r);
            LabeledRecord::new(x, y, y)
        })
        .collect();
    let ds = SplitDataset::new(labeled, Vec::new(), OutcomeKind::Continuous).unwrap();
    let model = LossModel::ridge(0.1).certify(&ds);
    let cfg = OptConfig::new(0.2 / model.smoothness, 100, 10, 7).with_record_every(1);
    let a = run_svrg(&model, &ds, &cfg).unwrap();
    let b = run_ppi_svrg(&model, &ds, &cfg).unwrap();
    let bits = |t: &ppisvrg::Trajectory| -> Vec<u64> {
        t.inner_records.iter().flat_map(|r| r.theta.iter().map(|v| v.to_bits())).collect()
    };
    let same = bits(&a) == bits(&b) && a.snapshots == b.snapshots && a.total_inner_iterations == 1000;
    outcome(same, format!("{} inner iterates compared bitwise", a.inner_records.iter().filter(|r| r.t > 0).count()))
}

fn c2_closed_form() -> Outcome {
    // Labeled residuals y - f are constant within each dataset, so the
    // gradient-noise floor is zero and a constant step converges exactly.
    let mut r = rng::stream(202);
    let mut worst: f64 = 0.0;
    for k in 0..50u64 {
        let n = r.random_range(4..=100);
        let big_n = r.random_range(0..=1000);
        let shift = 2.0 * normal(&mut r);
        let y: Vec<f64> = (0..n).map(|_| 3.0 * normal(&mut r)).collect();
        let f_lab: Vec<f64> = y.iter().map(|v| v - shift).collect();
        let f_unlab: Vec<f64> = (0..big_n).map(|_| 1.0 + 3.0 * normal(&mut r)).collect();
        let ds = SplitDataset::from_columns(&y, &f_lab, &f_unlab, OutcomeKind::Continuous).unwrap();
        let tr = run_ppi_svrg(&LossModel::mean_sq(), &ds, &OptConfig::new(0.5, 20, 30, k)).unwrap();
        worst = worst.max((tr.final_theta()[0] - closed_form(&y, &f_lab, &f_unlab)).abs());
    }
    outcome(worst < 1e-8, format!("max |theta - closed form| = {worst:.2e} over 50 datasets"))
}

fn c3_upper_bound() -> Outcome {
    let (eta, m, sigma, epochs, seeds) = (0.1, 50, 0.5, 20, 50u64);
    let model = LossModel::mean_sq();
    let c = rate_constants(model.strong_convexity, model.smoothness, eta, m).unwrap();
    let base = SyntheticSpec::continuous(200, 0, 1.0, sigma, 0);
    let floor = analytic_floor(&model, &base).unwrap().conditional_variance;
    let offset = 3.0;
    let mut mean_gaps = vec![0.0; epochs + 1];
    for seed in 0..seeds {
        let ds = generate(&SyntheticSpec { seed: child_seed(seed, tags::POOL), ..base.clone() }).unwrap();
        let ybar = mean(&ds.labeled_y());
        let cfg = OptConfig::new(eta, m, epochs, seed).with_theta0(vec![ybar + offset]);
        let tr = run_ppi_svrg(&model, &ds, &cfg).unwrap();
        for (g, th) in mean_gaps.iter_mut().zip(&tr.snapshots) {
            *g += 0.5 * (th[0] - ybar).powi(2) / seeds as f64;
        }
    }
    let gap0 = 0.5 * offset * offset;
    let bound = bound_curve(&c, gap0, floor, epochs).unwrap();
    let check = check_bound(&mean_gaps[1..], &bound[1..], 0.1, 2).unwrap();
    outcome(
        check.satisfied,
        format!(
            "alpha={} beta={} floor={floor}; max gap/bound = {:.3}, {} epochs above",
            c.alpha,
            c.beta,
            check.max_ratio,
            check.violations.len()
        ),
    )
}

fn c4_rate_floor() -> Outcome {
    // Common random numbers: the same seeds drive the data and the
    // optimizer at every noise level, so only sigma changes.
    let (eta, m, epochs, seeds, offset) = (0.1, 10, 30, 20_000u64, 1.0);
    let model = LossModel::mean_sq();
    let mut fits = Vec::new();
    for sigma in [0.0, 0.25, 0.5, 1.0] {
        let mut mean_gaps = vec![0.0; epochs + 1];
        for seed in 0..seeds {
            let spec = SyntheticSpec::continuous(20, 0, 1.0, sigma, child_seed(seed, tags::POOL));
            let ds = generate(&spec).unwrap();
            let ybar = mean(&ds.labeled_y());
            let cfg = OptConfig::new(eta, m, epochs, seed).with_theta0(vec![ybar + offset]);
            let tr = run_ppi_svrg(&model, &ds, &cfg).unwrap();
            for (g, th) in mean_gaps.iter_mut().zip(&tr.snapshots) {
                *g += 0.5 * (th[0] - ybar).powi(2) / seeds as f64;
            }
        }
        match fit_empirical_rate(&mean_gaps, None) {
            Ok(fit) => fits.push((sigma, fit)),
            Err(e) => return outcome(false, format!("sigma={sigma}: fit failed: {e}")),
        }
    }
    let alphas: Vec<f64> = fits.iter().map(|(_, f)| f.alpha_hat.unwrap_or(f64::NAN)).collect();
    let floors: Vec<f64> = fits.iter().map(|(_, f)| f.floor_hat).collect();
    let (lo, hi) = alphas.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), a| (l.min(*a), h.max(*a)));
    let agree = hi - lo <= 0.1;
    let increasing = floors.windows(2).all(|w| w[1] > w[0]);
    let zero_floor = floors[0] < 1e-8;
    outcome(
        agree && increasing && zero_floor,
        format!("alpha_hat={alphas:.4?} floor_hat={:?}", floors.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()),
    )
}

fn c5_doubling() -> Outcome {
    let mut r = rng::stream(505);
    let labeled: Vec<LabeledRecord<f64>> = (0..25)
        .map(|_| {
            let x = vec![normal(&mut r), normal(&mut r)];
            let y = x[0] - x[1] + normal(&mut r);
            LabeledRecord::new(x, y, y + 0.5 * normal(&mut r))
        })
        .collect();
    let unlabeled: Vec<UnlabeledRecord<f64>> =
        (0..40).map(|_| UnlabeledRecord::new(vec![normal(&mut r), normal(&mut r)], normal(&mut r))).collect();
    let ds = SplitDataset::new(labeled, unlabeled, OutcomeKind::Continuous).unwrap();
    let model = LossModel::ridge(0.2).certify(&ds);
    let mut worst_mean: f64 = 0.0;
    let mut ok = true;
    for m0 in [1, 2, 3, 5, 8] {
        for s in 1..=5 {
            let cfg = OptConfig::new(0.05 / model.smoothness, m0, s, (m0 * 10 + s) as u64).with_record_every(1);
            let tr = run_ppi_svrg_pp(&model, &ds, &cfg).unwrap();
            ok &= tr.total_inner_iterations == m0 * ((1 << s) - 1)
                && Some(tr.total_inner_iterations) == doubling_total(m0, s);
            for (e, &len) in tr.epoch_lengths.iter().enumerate() {
                ok &= len == m0 << e;
                let iterates: Vec<&Vec<f64>> =
                    tr.inner_records.iter().filter(|x| x.epoch == e && x.t < len).map(|x| &x.theta).collect();
                ok &= iterates.len() == len;
                for j in 0..2 {
                    let avg = iterates.iter().map(|t| t[j]).sum::<f64>() / len as f64;
                    worst_mean = worst_mean.max((avg - tr.snapshots[e + 1][j]).abs());
                }
                if e + 1 < tr.epoch_lengths.len() {
                    let next = tr.inner_records.iter().find(|x| x.epoch == e + 1 && x.t == 0).unwrap();
                    let last = tr.inner_records.iter().find(|x| x.epoch == e && x.t == len).unwrap();
                    ok &= next.theta == last.theta;
                }
            }
        }
    }
    outcome(
        ok && worst_mean <= 1e-12,
        format!("25 (m0, S) pairs; max |snapshot - mean of iterates| = {worst_mean:.1e}"),
    )
}

#[allow(clippy::needless_range_loop)]
fn c6_sublinear() -> Outcome {
    let seeds = 20u64;
    let m0 = 16;
    let mut gt = [0.0; 9];
    for seed in 0..seeds {
        let mut r = rng::stream(child_seed(606, seed));
        let labeled: Vec<LabeledRecord<f64>> = (0..200)
            .map(|_| {
                let x = vec![normal(&mut r), normal(&mut r)];
                let p = 1.0 / (1.0 + (-(1.5 * x[0] - x[1] + 0.3)).exp());
                let y = if r.random::<f64>() < p { 1.0 } else { 0.0 };
                LabeledRecord::new(x, y, y)
            })
            .collect();
        let ds = SplitDataset::new(labeled, Vec::new(), OutcomeKind::Binary).unwrap();
        let model = LossModel::logistic_plain().with_intercept().certify(&ds);
        let star = reference_optimum(&model, &ds, Objective::Labeled, None, ReferenceOptions::default()).unwrap();
        let l_star = labeled_objective(&model, &star, &ds).unwrap();
        let eta = default_pplus_eta(model.smoothness);
        for s in 3..=8 {
            let cfg = OptConfig::new(eta, m0, s, seed).strict();
            let tr = run_ppi_svrg_pp(&model, &ds, &cfg).unwrap();
            let gap = labeled_objective(&model, tr.final_theta(), &ds).unwrap() - l_star;
            gt[s] += gap * tr.total_inner_iterations as f64 / seeds as f64;
        }
    }
    let base = gt[3];
    let ok = base > 0.0 && (3..=8).all(|s| gt[s] <= 3.0 * base);
    outcome(ok, format!("mean gap*T for S=3..8: {:.4?}", &gt[3..]))
}

fn c7_total_variance() -> Outcome {
    let toy =
        DiscreteJoint::new(vec![(1.0, 1.0, 0.45), (1.0, -1.0, 0.05), (-1.0, -1.0, 0.45), (-1.0, 1.0, 0.05)]).unwrap();
    let d = toy.decompose(&LossModel::<f64>::mean_sq(), &[0.0]).unwrap();
    let mut worst = (d.total - d.within - d.between).abs();
    let toy_ok = (d.within - 0.36).abs() < 1e-12;
    let mut r = rng::stream(707);
    for k in 0..200 {
        let atoms: Vec<(f64, f64, f64)> = (0..8)
            .map(|i| {
                let f = (i % 3) as f64;
                let y = if k % 2 == 0 { normal(&mut r) } else { f64::from(r.random::<bool>()) };
                (f, y, r.random::<f64>() + 0.01)
            })
            .collect();
        let z: f64 = atoms.iter().map(|a| a.2).sum();
        let joint = DiscreteJoint::new(atoms.into_iter().map(|(f, y, p)| (f, y, p / z)).collect()).unwrap();
        let theta = normal(&mut r);
        let model = if k % 2 == 0 { LossModel::mean_sq() } else { LossModel::logistic_plain().with_intercept() };
        let d = joint.decompose(&model, &[theta]).unwrap();
        worst = worst.max((d.total - d.within - d.between).abs());
    }
    outcome(toy_ok && worst < 1e-10, format!("toy floor {}; max identity residual {worst:.1e} over 200 toys", d.within))
}

fn c8_monte_carlo() -> Outcome {
    let env = |key: &str, default: u64| std::env::var(key).ok().and_then(|s| s.parse().ok()).unwrap_or(default);
    let seeds = env("ACCEPTANCE_MC_SEEDS", 30);
    // The reduction trend needs a second gamma; it is checked on the
    // first few master seeds to stay inside the runtime budget.
    let trend_seeds = env("ACCEPTANCE_TREND_SEEDS", 10).min(seeds);
    let spec = SyntheticSpec::binary(1596, 0, 0.1516, 0.05, 0);
    let cal = spec.calibration().unwrap();
    let methods = [Method::Naive, Method::Ppi, Method::PpiSvrg];
    let mut wins = 0;
    let mut mse = [0.0; 3];
    let mut covered = [0.0; 3];
    // Pooled (naive, ppi_svrg) MSE over the trend seeds, at 0.1 and 0.5.
    let mut trend = [[0.0; 2]; 2];
    for k in 0..seeds {
        let pool = generate(&SyntheticSpec { seed: child_seed(k, tags::POOL), ..spec.clone() }).unwrap();
        let model = LossModel::mean_sq().calibrated(cal.clone());
        let mut cfg = ProtocolConfig::new(Target::PoolMean, model, OptConfig::new(0.001, 4000, 3, 0));
        cfg.gamma_grid = if k < trend_seeds { vec![0.1, 0.5] } else { vec![0.1] };
        cfg.reps = 200;
        cfg.master_seed = k;
        cfg.unlabeled_source = UnlabeledSource::AllRecords;
        cfg.n_unlabeled = Some(1436);
        cfg.bootstrap = BootstrapConfig { reps: 100, warm_start: true, ..Default::default() };
        let rep = match run_protocol(&pool, &cfg) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("protocol failed: {e}")),
        };
        let at = |m, gamma| rep.cell(m, gamma).unwrap();
        for (j, &m) in methods.iter().enumerate() {
            mse[j] += at(m, 0.1).mse / seeds as f64;
            covered[j] += at(m, 0.1).coverage / seeds as f64;
        }
        if k < trend_seeds {
            for (g, gamma) in [0.1, 0.5].into_iter().enumerate() {
                trend[g][0] += at(Method::Naive, gamma).mse;
                trend[g][1] += at(Method::PpiSvrg, gamma).mse;
            }
        }
        let m = |m| at(m, 0.1).mse;
        wins += usize::from(m(Method::PpiSvrg) < m(Method::Ppi) && m(Method::Ppi) < m(Method::Naive));
    }
    let dominance = wins as f64 >= 0.8 * seeds as f64;
    let coverage_ok = covered.iter().all(|c| (0.90..=0.98).contains(c));
    let red_lo = reduction(trend[0][1], trend[0][0]).unwrap_or(f64::NAN);
    let red_hi = reduction(trend[1][1], trend[1][0]).unwrap_or(f64::NAN);
    let trend_ok = trend_seeds == 0 || red_hi <= red_lo;
    outcome(
        dominance && coverage_ok && trend_ok,
        format!(
            "ordering in {wins}/{seeds} seeds; gamma=0.1 mse(naive,ppi,ppi_svrg) x1e4={:.3?} coverage={:.3?}; \
             reduction vs naive over {trend_seeds} seeds {red_lo:.1}% at 0.1, {red_hi:.1}% at 0.5",
            mse.map(|v| v * 1e4),
            covered
        ),
    )
}

fn c9_standard_errors() -> Outcome {
    let ds = SplitDataset::from_columns(&[0.0, 1.0], &[0.0, 0.0], &[], OutcomeKind::Continuous).unwrap();
    let naive = naive_estimate(&ds).unwrap();
    let naive_ok = naive.se == 0.5 && naive.theta_hat == 0.5;

    let y = [0.2, 1.4, 0.9, 2.2, 1.7];
    let ds = SplitDataset::from_columns(&y, &[3.0; 5], &[3.0; 7], OutcomeKind::Continuous).unwrap();
    let ppi = ppi_estimate(&ds).unwrap();
    let w = 7.0 / 12.0;
    let lab: Vec<f64> = y.iter().map(|v| v - w * 3.0).collect();
    let m = mean(&lab);
    let lab_only = (lab.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 4.0 / 5.0).sqrt();
    let ppi_ok = (ppi.se - lab_only).abs() < 1e-15;

    let spec = SyntheticSpec::continuous(40, 120, 0.5, 1.0, 9);
    let ds = generate(&spec).unwrap();
    let opt = OptConfig::new(0.2, 20, 4, 3);
    let boot = BootstrapConfig { reps: 100, seed: 11, ..Default::default() };
    let model = LossModel::<f64>::mean_sq();
    let a = ppi_svrg_estimate(&ds, &model, &opt, &boot).unwrap();
    let b = ppi_svrg_estimate(&ds, &model, &opt, &boot).unwrap();
    let raw = ppi_svrg_estimate(&ds, &model, &opt, &BootstrapConfig { deflation: 1.0, ..boot.clone() }).unwrap();
    let boot_ok = a.se.to_bits() == b.se.to_bits() && a.se == 0.95 * raw.se && a.bootstrap_reps == Some(100);
    outcome(
        naive_ok && ppi_ok && boot_ok,
        format!(
            "naive se {}; ppi se {} vs labeled-only {}; bootstrap se {} = 0.95 x {}",
            naive.se, ppi.se, lab_only, a.se, raw.se
        ),
    )
}

fn c10_constants() -> Outcome {
    let c = rate_constants(1.0, 1.0, 0.1, 50).unwrap();
    let exact = c.alpha == 0.5 && c.beta == 0.125;
    let rejects = rate_constants(1.0, 1.0, 0.5, 50).is_err() && rate_constants(1.0, 2.0, 0.3, 50).is_err();
    outcome(exact && rejects, format!("alpha={} beta={}", c.alpha, c.beta))
}
