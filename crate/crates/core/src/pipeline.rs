//! End-to-end workflows: dataset generation, solution-quality evaluation,
//! the unseen-region experiment, and timing comparisons.
//!
//! Everything here is deterministic given the seeds in the configs: loads
//! are drawn sequentially from one stream and solved in parallel with an
//! index-preserving merge.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::activeset::solve_from_prices_lenient;
use crate::dataset::DataSample;
use crate::error::{Error, Result};
use crate::genbound::fingerprint_regions;
use crate::grid::{FlowBasis, GridCase};
use crate::icnn::{train_icnn, train_mlp, IcnnModel, MlpModel, TrainConfig, TrainReport};
use crate::lp::{solve_dcopf, DcopfStatus, SolverConfig};

#[derive(Debug, Clone, Serialize)]
pub struct GenSummary {
    pub draws: usize,
    pub feasible: usize,
    pub infeasible: usize,
    pub degenerate: usize,
}

/// Draws `count` loads componentwise uniform in
/// `[(1 - variation) * nominal, (1 + variation) * nominal]`, solves each and
/// keeps the feasible ones. Aborts when more than half the draws are
/// infeasible, which signals an unusable case/variation combination.
pub fn generate_dataset(
    case: &GridCase,
    basis: &FlowBasis,
    variation: f64,
    count: usize,
    seed: u64,
    solver: &SolverConfig,
) -> Result<(Vec<DataSample>, GenSummary)> {
    let nominal = case.nominal_load();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loads: Vec<DVector<f64>> = (0..count)
        .map(|_| {
            DVector::from_fn(case.n, |i, _| {
                let lo = (1.0 - variation) * nominal[i];
                let hi = (1.0 + variation) * nominal[i];
                if hi > lo {
                    rng.gen_range(lo..hi)
                } else {
                    nominal[i]
                }
            })
        })
        .collect();

    let solved: Vec<Result<Option<DataSample>>> = loads
        .into_par_iter()
        .map(|load| {
            let sol = solve_dcopf(case, basis, &load, solver)?;
            Ok(match sol.status {
                DcopfStatus::Infeasible => None,
                _ => Some(DataSample::from_solution(load, &sol)),
            })
        })
        .collect();

    let mut samples = Vec::with_capacity(count);
    let mut infeasible = 0;
    let mut degenerate = 0;
    for s in solved {
        match s? {
            Some(sample) => {
                degenerate += sample.degenerate as usize;
                samples.push(sample);
            }
            None => infeasible += 1,
        }
    }
    if infeasible * 2 > count {
        return Err(Error::InfeasibleRateTooHigh { infeasible, attempts: count });
    }
    Ok((
        samples,
        GenSummary { draws: count, feasible: count - infeasible, infeasible, degenerate },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EvalMode {
    /// Prices from the convex surrogate, dispatch from the active-set solve.
    Icnn,
    /// Dispatch straight from the baseline net, flows from nodal balance.
    EndToEnd,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingStats {
    pub infer_mean_us: f64,
    pub infer_median_us: f64,
    pub solve_mean_us: f64,
    pub solve_median_us: f64,
}

/// Solution-quality report in the three-bucket form: optimal solutions are
/// also feasible; every sample lands in exactly one bucket.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub total: usize,
    pub skipped_degenerate: usize,
    pub optimal: usize,
    pub feasible_suboptimal: usize,
    pub infeasible: usize,
    pub optimality_pct: f64,
    pub feasibility_pct: f64,
    pub infeasibility_pct: f64,
    /// Samples violating each constraint family beyond the tolerance.
    pub violations_nodal_balance: usize,
    pub violations_gen_limits: usize,
    pub violations_line_limits: usize,
    pub mismatch_tol: f64,
    pub timing: TimingStats,
}

pub enum Predictor<'a> {
    Icnn(&'a IcnnModel),
    EndToEnd(&'a MlpModel),
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

struct SampleVerdict {
    feasible: bool,
    optimal: bool,
    viol_balance: bool,
    viol_gen: bool,
    viol_line: bool,
    infer_us: f64,
    solve_us: f64,
}

/// Classifies predicted dispatches against the labels with a relative
/// mismatch tolerance: a solution is feasible when every constraint family
/// is violated by at most `mismatch_tol` relative to its governing limit
/// (with a floor of one for near-zero limits), and optimal when additionally
/// the predicted cost is within the tolerance of the labeled optimum.
pub fn evaluate(
    case: &GridCase,
    basis: &FlowBasis,
    predictor: &Predictor,
    samples: &[DataSample],
    mode_tol: f64,
    eps_act: f64,
    solver: &SolverConfig,
) -> Result<EvalReport> {
    let c = case.cost_vector();
    let xmax = case.xmax_vector();
    let fmax = case.fmax_vector();

    let verdicts: Vec<Result<SampleVerdict>> = samples
        .par_iter()
        .map(|sample| {
            let load = &sample.load;
            let t0 = Instant::now();
            let (x_hat, flows_hat) = match predictor {
                Predictor::Icnn(model) => {
                    let mu_hat = model.input_gradient(load)?;
                    let (rec, _) =
                        solve_from_prices_lenient(case, basis, load, &mu_hat, eps_act, solver);
                    (rec.x, rec.flows)
                }
                Predictor::EndToEnd(model) => {
                    let x_hat = model.forward(load)?;
                    // Flows from the nodal balance, minimum-norm.
                    let rhs = load - &x_hat;
                    let f_hat = basis
                        .a_tilde
                        .clone()
                        .svd(true, true)
                        .solve(&rhs, 1e-12)
                        .unwrap_or_else(|_| DVector::zeros(basis.dim()));
                    (x_hat, &basis.k * f_hat)
                }
            };
            let infer_us = t0.elapsed().as_secs_f64() * 1e6;

            let t1 = Instant::now();
            let _ = solve_dcopf(case, basis, load, solver)?;
            let solve_us = t1.elapsed().as_secs_f64() * 1e6;

            let gen_viol = (0..case.n)
                .map(|i| (-x_hat[i]).max(x_hat[i] - xmax[i]) / xmax[i].max(1.0))
                .fold(f64::NEG_INFINITY, f64::max);
            let line_viol = (0..case.m())
                .map(|e| (flows_hat[e].abs() - fmax[e]) / fmax[e].max(1.0))
                .fold(f64::NEG_INFINITY, f64::max)
                .max(0.0);
            let balance_res = {
                // Balance is checked on line flows so both predictors are
                // judged on the same physical quantity.
                let mut imbalance: f64 = 0.0;
                let a = case.incidence();
                let net = &x_hat - &a * &flows_hat;
                for i in 0..case.n {
                    imbalance = imbalance.max((net[i] - load[i]).abs());
                }
                imbalance / load.amax().max(1.0)
            };

            let viol_gen = gen_viol > mode_tol;
            let viol_line = line_viol > mode_tol;
            let viol_balance = balance_res > mode_tol;
            let feasible = !(viol_gen || viol_line || viol_balance);
            let cost = c.dot(&x_hat);
            let optimal = feasible && (cost - sample.j).abs() <= mode_tol * sample.j.abs().max(1.0);
            Ok(SampleVerdict {
                feasible,
                optimal,
                viol_balance,
                viol_gen,
                viol_line,
                infer_us,
                solve_us,
            })
        })
        .collect();

    let mut optimal = 0;
    let mut feasible_suboptimal = 0;
    let mut infeasible = 0;
    let mut viol_b = 0;
    let mut viol_g = 0;
    let mut viol_l = 0;
    let mut infer_times = Vec::with_capacity(samples.len());
    let mut solve_times = Vec::with_capacity(samples.len());
    for v in verdicts {
        let v = v?;
        if v.optimal {
            optimal += 1;
        } else if v.feasible {
            feasible_suboptimal += 1;
        } else {
            infeasible += 1;
        }
        viol_b += v.viol_balance as usize;
        viol_g += v.viol_gen as usize;
        viol_l += v.viol_line as usize;
        infer_times.push(v.infer_us);
        solve_times.push(v.solve_us);
    }

    let total = samples.len();
    let pct = |k: usize| if total > 0 { 100.0 * k as f64 / total as f64 } else { 0.0 };
    Ok(EvalReport {
        mode: match predictor {
            Predictor::Icnn(_) => EvalMode::Icnn,
            Predictor::EndToEnd(_) => EvalMode::EndToEnd,
        },
        total,
        skipped_degenerate: 0,
        optimal,
        feasible_suboptimal,
        infeasible,
        optimality_pct: pct(optimal),
        feasibility_pct: pct(optimal + feasible_suboptimal),
        infeasibility_pct: pct(infeasible),
        violations_nodal_balance: viol_b,
        violations_gen_limits: viol_g,
        violations_line_limits: viol_l,
        mismatch_tol: mode_tol,
        timing: TimingStats {
            infer_mean_us: infer_times.iter().sum::<f64>() / total.max(1) as f64,
            infer_median_us: median(&mut infer_times),
            solve_mean_us: solve_times.iter().sum::<f64>() / total.max(1) as f64,
            solve_median_us: median(&mut solve_times),
        },
    })
}

/// Configuration of the two-bus load-plane experiment.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct UnseenConfig {
    pub bus_a: usize,
    pub bus_b: usize,
    pub range_a: (f64, f64),
    pub range_b: (f64, f64),
    pub labeled_count: usize,
    pub helper_count: usize,
    pub seed: u64,
    pub mismatch_tol: f64,
    pub eval_eps_act: f64,
    pub train: TrainConfig,
    pub end_to_end_train: TrainConfig,
}

impl Default for UnseenConfig {
    fn default() -> Self {
        Self {
            bus_a: 0,
            bus_b: 1,
            range_a: (0.05, 1.95),
            range_b: (0.05, 1.95),
            labeled_count: 400,
            helper_count: 300,
            seed: 17,
            mismatch_tol: 0.003,
            eval_eps_act: 0.05,
            train: TrainConfig::default(),
            end_to_end_train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UnseenExperimentReport {
    pub regions_found: usize,
    pub test_region_mu: Vec<f64>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub helper_samples: usize,
    pub with_helper: EvalReport,
    pub without_helper: EvalReport,
    pub end_to_end: EvalReport,
    pub with_helper_train: TrainReport,
    pub without_helper_train: TrainReport,
    pub end_to_end_train: TrainReport,
}

/// Varies the load at two buses over a rectangle, holds out the price region
/// containing the rectangle's center, and compares three predictors on it:
/// the convex surrogate trained with an unlabeled helper set covering the
/// plane, the same surrogate without helpers, and the end-to-end baseline.
pub fn run_unseen_region_experiment(
    case: &GridCase,
    basis: &FlowBasis,
    cfg: &UnseenConfig,
    solver: &SolverConfig,
) -> Result<UnseenExperimentReport> {
    if cfg.bus_a >= case.n || cfg.bus_b >= case.n || cfg.bus_a == cfg.bus_b {
        return Err(Error::InvalidCase("experiment buses out of range or equal".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nominal = case.nominal_load();
    let draw_plane = |rng: &mut ChaCha8Rng| {
        let mut load = nominal.clone();
        load[cfg.bus_a] = rng.gen_range(cfg.range_a.0..cfg.range_a.1);
        load[cfg.bus_b] = rng.gen_range(cfg.range_b.0..cfg.range_b.1);
        load
    };

    // Labeled pool over the whole plane.
    let loads: Vec<DVector<f64>> = (0..cfg.labeled_count).map(|_| draw_plane(&mut rng)).collect();
    let helper: Vec<DVector<f64>> = (0..cfg.helper_count).map(|_| draw_plane(&mut rng)).collect();

    let solved: Vec<Result<Option<DataSample>>> = loads
        .into_par_iter()
        .map(|load| {
            let sol = solve_dcopf(case, basis, &load, solver)?;
            Ok(match sol.status {
                DcopfStatus::Optimal => Some(DataSample::from_solution(load, &sol)),
                _ => None,
            })
        })
        .collect();
    let samples: Vec<DataSample> = solved
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let regions = fingerprint_regions(&samples);
    if regions.len() < 2 {
        return Err(Error::RegionCountMismatch(regions.len()));
    }

    // Held-out region: the one owning the center of the plane.
    let mut center = nominal.clone();
    center[cfg.bus_a] = 0.5 * (cfg.range_a.0 + cfg.range_a.1);
    center[cfg.bus_b] = 0.5 * (cfg.range_b.0 + cfg.range_b.1);
    let center_sol = solve_dcopf(case, basis, &center, solver)?;
    if center_sol.status != DcopfStatus::Optimal {
        return Err(Error::PreconditionFailed(
            "plane center is infeasible or degenerate; adjust the ranges".into(),
        ));
    }
    let resolution = crate::genbound::FINGERPRINT_RESOLUTION;
    let center_key: Vec<i64> =
        center_sol.mu.iter().map(|&v| (v / resolution).round() as i64).collect();
    let test_region = regions
        .iter()
        .find(|r| {
            r.mu.iter()
                .zip(&center_key)
                .all(|(&mu, &k)| (mu / resolution).round() as i64 == k)
        })
        .ok_or_else(|| {
            Error::PreconditionFailed("no samples landed in the center region".into())
        })?;

    let in_test: Vec<bool> = {
        let mut flags = vec![false; samples.len()];
        for &i in &test_region.samples {
            flags[i] = true;
        }
        flags
    };
    let train_set: Vec<DataSample> = samples
        .iter()
        .zip(&in_test)
        .filter(|(_, &t)| !t)
        .map(|(s, _)| s.clone())
        .collect();
    let test_set: Vec<DataSample> = samples
        .iter()
        .zip(&in_test)
        .filter(|(_, &t)| t)
        .map(|(s, _)| s.clone())
        .collect();
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::PreconditionFailed("train/test split left an empty side".into()));
    }

    let c_out = case.cost_vector();
    let widths = {
        let mut w = cfg.train.hidden_widths.clone();
        *w.last_mut().unwrap() = case.n;
        w
    };

    let mut with_helper_model = IcnnModel::new(
        case.n,
        &widths,
        c_out.clone(),
        &mut ChaCha8Rng::seed_from_u64(cfg.train.seed),
    );
    let with_helper_train =
        train_icnn(&mut with_helper_model, case, basis, &train_set, &helper, &cfg.train, solver)?;

    let mut without_helper_model = IcnnModel::new(
        case.n,
        &widths,
        c_out,
        &mut ChaCha8Rng::seed_from_u64(cfg.train.seed),
    );
    let without_helper_train =
        train_icnn(&mut without_helper_model, case, basis, &train_set, &[], &cfg.train, solver)?;

    let mlp_widths = {
        let mut w = cfg.end_to_end_train.hidden_widths.clone();
        *w.last_mut().unwrap() = case.n;
        w
    };
    let mut mlp = MlpModel::new(
        case.n,
        &mlp_widths,
        &mut ChaCha8Rng::seed_from_u64(cfg.end_to_end_train.seed),
    );
    let end_to_end_train = train_mlp(&mut mlp, &train_set, &cfg.end_to_end_train)?;

    let with_helper = evaluate(
        case,
        basis,
        &Predictor::Icnn(&with_helper_model),
        &test_set,
        cfg.mismatch_tol,
        cfg.eval_eps_act,
        solver,
    )?;
    let without_helper = evaluate(
        case,
        basis,
        &Predictor::Icnn(&without_helper_model),
        &test_set,
        cfg.mismatch_tol,
        cfg.eval_eps_act,
        solver,
    )?;
    let end_to_end = evaluate(
        case,
        basis,
        &Predictor::EndToEnd(&mlp),
        &test_set,
        cfg.mismatch_tol,
        cfg.eval_eps_act,
        solver,
    )?;

    Ok(UnseenExperimentReport {
        regions_found: regions.len(),
        test_region_mu: test_region.mu.clone(),
        train_samples: train_set.len(),
        test_samples: test_set.len(),
        helper_samples: helper.len(),
        with_helper,
        without_helper,
        end_to_end,
        with_helper_train,
        without_helper_train,
        end_to_end_train,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub index: usize,
    pub simplex_us: f64,
    pub surrogate_us: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub simplex_mean_us: f64,
    pub simplex_median_us: f64,
    pub surrogate_mean_us: f64,
    pub surrogate_median_us: f64,
    /// Simplex median over surrogate median; reported, never asserted
    /// (hardware dependent).
    pub median_speedup: f64,
}

/// Wall-clock comparison: exact simplex solve versus surrogate inference
/// (gradient, dual recovery, linear solve) per sample.
pub fn bench(
    case: &GridCase,
    basis: &FlowBasis,
    model: &IcnnModel,
    samples: &[DataSample],
    eps_act: f64,
    solver: &SolverConfig,
) -> Result<BenchReport> {
    let mut rows = Vec::with_capacity(samples.len());
    for (index, sample) in samples.iter().enumerate() {
        let t0 = Instant::now();
        let _ = solve_dcopf(case, basis, &sample.load, solver)?;
        let simplex_us = t0.elapsed().as_secs_f64() * 1e6;
        let t1 = Instant::now();
        let mu_hat = model.input_gradient(&sample.load)?;
        let _ = solve_from_prices_lenient(case, basis, &sample.load, &mu_hat, eps_act, solver);
        let surrogate_us = t1.elapsed().as_secs_f64() * 1e6;
        rows.push(BenchRow { index, simplex_us, surrogate_us });
    }
    let mut s: Vec<f64> = rows.iter().map(|r| r.simplex_us).collect();
    let mut g: Vec<f64> = rows.iter().map(|r| r.surrogate_us).collect();
    let s_med = median(&mut s);
    let g_med = median(&mut g);
    Ok(BenchReport {
        simplex_mean_us: rows.iter().map(|r| r.simplex_us).sum::<f64>() / rows.len().max(1) as f64,
        surrogate_mean_us: rows.iter().map(|r| r.surrogate_us).sum::<f64>()
            / rows.len().max(1) as f64,
        simplex_median_us: s_med,
        surrogate_median_us: g_med,
        median_speedup: if g_med > 0.0 { s_med / g_med } else { 0.0 },
        rows,
    })
}
