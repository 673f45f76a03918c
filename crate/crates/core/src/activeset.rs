//! Price-driven active-set detection and dispatch reconstruction.
//!
//! Given nodal prices, generator bounds bind according to the sign of
//! `mu_i - c_i` and line limits according to the sign of the recovered flow
//! duals. Fixing the binding variables and stacking the nodal balance yields
//! a linear system whose solution is the optimal dispatch whenever the
//! detected set is the true one. Wrong or degenerate sets are an expected
//! outcome when prices come from a neural network, so the solve reports
//! rank/residual/bound diagnostics instead of trusting its inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{FlowBasis, GridCase};
use crate::lp::{recover_flow_duals, SolverConfig};

/// Threshold on prices for the three-way classification; the same value is
/// used for flow duals. Configurable everywhere it is consumed.
pub const DEFAULT_EPS_ACT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum GenStatus {
    AtZero,
    AtUpper,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum LineStatus {
    AtNeg,
    AtPos,
    Free,
}

/// Binding pattern for one load: which generator and line constraints are
/// treated as equalities by the reconstruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet {
    pub gen_status: Vec<GenStatus>,
    pub line_status: Vec<LineStatus>,
}

/// Generator rule: `mu_i - c_i < -eps` pins output at zero, `> eps` at
/// capacity, otherwise the generator is marginal.
pub fn detect_gen_active(mu: &DVector<f64>, c: &DVector<f64>, eps_act: f64) -> Vec<GenStatus> {
    assert_eq!(mu.len(), c.len(), "price and cost vectors must match");
    (0..mu.len())
        .map(|i| {
            let gap = mu[i] - c[i];
            if gap < -eps_act {
                GenStatus::AtZero
            } else if gap > eps_act {
                GenStatus::AtUpper
            } else {
                GenStatus::Free
            }
        })
        .collect()
}

/// Line rule on the recovered duals: `nu_e / fmax_e` beyond `eps_act` pins
/// the flow at the corresponding limit. Zero-limit lines are permanently
/// pinned (flow zero, treated as the positive limit of width zero).
pub fn detect_flow_active(nu: &DVector<f64>, fmax: &DVector<f64>, eps_act: f64) -> Vec<LineStatus> {
    assert_eq!(nu.len(), fmax.len(), "dual and limit vectors must match");
    (0..nu.len())
        .map(|e| {
            if fmax[e] == 0.0 {
                return LineStatus::AtPos;
            }
            let w = nu[e] / fmax[e];
            if w > eps_act {
                LineStatus::AtPos
            } else if w < -eps_act {
                LineStatus::AtNeg
            } else {
                LineStatus::Free
            }
        })
        .collect()
}

/// Which stage of the price-to-dispatch pipeline went wrong, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum FailedStage {
    FlowDuals,
    Solve,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Diagnostics {
    /// Equations match unknowns, the generic non-degenerate situation.
    pub square: bool,
    /// The solution space is not a single point (or the system was treated
    /// as such because of conditioning); the returned point is minimum-norm.
    pub rank_deficient: bool,
    /// Ratio of extreme singular values of the stacked system.
    pub condition: f64,
    /// Infinity-norm residual of the stacked equations at the returned point.
    pub residual: f64,
    /// Residual within tolerance.
    pub consistent: bool,
    /// Bounds of the original problem hold at the returned point (slack 1e-6)
    /// and the system was consistent.
    pub feasible: bool,
    pub failed_stage: Option<FailedStage>,
}

/// Dispatch candidate reconstructed from an active set.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub x: DVector<f64>,
    pub f: DVector<f64>,
    pub flows: DVector<f64>,
    pub active: ActiveSet,
    pub diagnostics: Diagnostics,
}

const BOUND_SLACK: f64 = 1e-6;

/// Stacks the balance equations with the active-set pins and solves for the
/// free unknowns. Never fails: wrong sets surface through the diagnostics.
pub fn assemble(
    case: &GridCase,
    basis: &FlowBasis,
    load: &DVector<f64>,
    active: &ActiveSet,
) -> Reconstruction {
    let n = case.n;
    let nf = basis.dim();
    let unknowns = n + nf;
    let pinned_gens: Vec<(usize, f64)> = active
        .gen_status
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s {
            GenStatus::AtZero => Some((i, 0.0)),
            GenStatus::AtUpper => Some((i, case.xmax[i])),
            GenStatus::Free => None,
        })
        .collect();
    let pinned_lines: Vec<(usize, f64)> = active
        .line_status
        .iter()
        .enumerate()
        .filter_map(|(e, s)| match s {
            LineStatus::AtPos => Some((e, case.lines[e].fmax)),
            LineStatus::AtNeg => Some((e, -case.lines[e].fmax)),
            LineStatus::Free => None,
        })
        .collect();

    let rows = n + pinned_gens.len() + pinned_lines.len();
    let mut mat = DMatrix::zeros(rows, unknowns);
    let mut rhs = DVector::zeros(rows);
    mat.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    mat.view_mut((0, n), (n, nf)).copy_from(&basis.a_tilde);
    rhs.rows_mut(0, n).copy_from(load);
    for (r, &(i, v)) in pinned_gens.iter().enumerate() {
        mat[(n + r, i)] = 1.0;
        rhs[n + r] = v;
    }
    for (r, &(e, v)) in pinned_lines.iter().enumerate() {
        let row = n + pinned_gens.len() + r;
        mat.view_mut((row, n), (1, nf)).copy_from(&basis.k.row(e));
        rhs[row] = v;
    }

    let svd = mat.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    let eps_rank = sigma_max * 1e-10;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps_rank).count();
    let z = svd
        .solve(&rhs, eps_rank)
        .unwrap_or_else(|_| DVector::zeros(unknowns));

    let x = DVector::from(z.rows(0, n));
    let f = DVector::from(z.rows(n, nf));
    let flows = &basis.k * &f;
    let residual = (&mat * &z - &rhs).amax();
    let consistent = residual <= 1e-6 * (1.0 + load.amax());
    let mut bounds_ok = true;
    for i in 0..n {
        if x[i] < -BOUND_SLACK || x[i] > case.xmax[i] + BOUND_SLACK {
            bounds_ok = false;
        }
    }
    for (e, line) in case.lines.iter().enumerate() {
        if flows[e].abs() > line.fmax + BOUND_SLACK {
            bounds_ok = false;
        }
    }

    Reconstruction {
        x,
        f,
        flows,
        active: active.clone(),
        diagnostics: Diagnostics {
            square: rows == unknowns,
            rank_deficient: rank < unknowns,
            condition: if sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY },
            residual,
            consistent,
            feasible: consistent && bounds_ok,
            failed_stage: if consistent { None } else { Some(FailedStage::Solve) },
        },
    }
}

/// [`assemble`] with the inconsistency turned into an error, for callers that
/// treat a wrong active set as exceptional.
pub fn assemble_and_solve(
    case: &GridCase,
    basis: &FlowBasis,
    load: &DVector<f64>,
    active: &ActiveSet,
) -> Result<Reconstruction> {
    let rec = assemble(case, basis, load, active);
    if !rec.diagnostics.consistent {
        return Err(Error::NoSolution {
            residual: rec.diagnostics.residual,
            tol: 1e-6 * (1.0 + load.amax()),
        });
    }
    Ok(rec)
}

/// Full inference path: prices -> flow duals -> binding sets -> dispatch.
///
/// Only the flow-dual recovery can fail hard (its l1 program has no solution
/// when the prices are inconsistent with the network). A wrong active set is
/// an expected outcome and is reported through the diagnostics, so batch
/// evaluation can classify the sample instead of aborting.
pub fn solve_from_prices(
    case: &GridCase,
    basis: &FlowBasis,
    load: &DVector<f64>,
    mu: &DVector<f64>,
    eps_act: f64,
    config: &SolverConfig,
) -> Result<Reconstruction> {
    let fmax = case.fmax_vector();
    let nu = recover_flow_duals(mu, basis, &fmax, config)?;
    let active = ActiveSet {
        gen_status: detect_gen_active(mu, &case.cost_vector(), eps_act),
        line_status: detect_flow_active(&nu, &fmax, eps_act),
    };
    Ok(assemble(case, basis, load, &active))
}

/// [`solve_from_prices`] that never fails: if the dual recovery is
/// infeasible, lines are left free and the failure is recorded. Used by the
/// KKT loss, which needs a candidate dispatch for every sample.
pub fn solve_from_prices_lenient(
    case: &GridCase,
    basis: &FlowBasis,
    load: &DVector<f64>,
    mu: &DVector<f64>,
    eps_act: f64,
    config: &SolverConfig,
) -> (Reconstruction, DVector<f64>) {
    let fmax = case.fmax_vector();
    let (nu, recover_failed) = match recover_flow_duals(mu, basis, &fmax, config) {
        Ok(nu) => (nu, false),
        Err(_) => (DVector::zeros(case.m()), true),
    };
    let active = ActiveSet {
        gen_status: detect_gen_active(mu, &case.cost_vector(), eps_act),
        line_status: detect_flow_active(&nu, &fmax, eps_act),
    };
    let mut rec = assemble(case, basis, load, &active);
    if recover_failed {
        rec.diagnostics.failed_stage = Some(FailedStage::FlowDuals);
        rec.diagnostics.feasible = false;
    }
    (rec, nu)
}

/// Classifies a solved dispatch into the same status alphabet, used to
/// cross-check detection against the simplex ground truth.
pub fn activity_from_solution(
    case: &GridCase,
    x: &DVector<f64>,
    flows: &DVector<f64>,
    tol: f64,
) -> ActiveSet {
    let gen_status = (0..case.n)
        .map(|i| {
            if x[i].abs() <= tol {
                GenStatus::AtZero
            } else if (x[i] - case.xmax[i]).abs() <= tol {
                GenStatus::AtUpper
            } else {
                GenStatus::Free
            }
        })
        .collect();
    let line_status = case
        .lines
        .iter()
        .enumerate()
        .map(|(e, line)| {
            if (flows[e] - line.fmax).abs() <= tol {
                LineStatus::AtPos
            } else if (flows[e] + line.fmax).abs() <= tol {
                LineStatus::AtNeg
            } else {
                LineStatus::Free
            }
        })
        .collect();
    ActiveSet { gen_status, line_status }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::grid::build_flow_basis;
    use crate::lp::{solve_dcopf, DcopfStatus};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn gen_rule_single_bus_middle_segment() {
        let c = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let mu = DVector::from_element(3, 2.0);
        assert_eq!(
            detect_gen_active(&mu, &c, DEFAULT_EPS_ACT),
            vec![GenStatus::AtUpper, GenStatus::Free, GenStatus::AtZero]
        );
    }

    #[test]
    fn gen_rule_marginal_everywhere() {
        let c = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        assert!(detect_gen_active(&c, &c, DEFAULT_EPS_ACT)
            .iter()
            .all(|s| *s == GenStatus::Free));
    }

    #[test]
    fn flow_rule_no_congestion_and_two_bus() {
        let fmax = DVector::from_column_slice(&[2.0, 3.0]);
        let zero = DVector::zeros(2);
        assert!(detect_flow_active(&zero, &fmax, DEFAULT_EPS_ACT)
            .iter()
            .all(|s| *s == LineStatus::Free));
        // Continuation of the two-bus hand example: nu = -1, fmax = 2.
        let nu = DVector::from_column_slice(&[-1.0]);
        let fmax = DVector::from_column_slice(&[2.0]);
        assert_eq!(detect_flow_active(&nu, &fmax, DEFAULT_EPS_ACT), vec![LineStatus::AtNeg]);
    }

    #[test]
    fn statuses_match_simplex_activity_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for case in [fixtures::four_band_chain(), fixtures::triangle()] {
            let basis = build_flow_basis(&case).unwrap();
            let fmax = case.fmax_vector();
            let c = case.cost_vector();
            let mut checked = 0;
            for _ in 0..120 {
                let load = DVector::from_fn(case.n, |_, _| rng.gen_range(0.0..0.9));
                let sol = solve_dcopf(&case, &basis, &load, &cfg()).unwrap();
                if sol.status != DcopfStatus::Optimal {
                    continue;
                }
                let truth = activity_from_solution(&case, &sol.x, &sol.flows, 1e-7);
                let gens = detect_gen_active(&sol.mu, &c, DEFAULT_EPS_ACT);
                let nu = recover_flow_duals(&sol.mu, &basis, &fmax, &cfg()).unwrap();
                let lines = detect_flow_active(&nu, &fmax, DEFAULT_EPS_ACT);
                assert_eq!(gens, truth.gen_status, "load {load:?}");
                assert_eq!(lines, truth.line_status, "load {load:?}");
                checked += 1;
            }
            assert!(checked >= 60, "too few optimal samples: {checked}");
        }
    }

    #[test]
    fn assemble_single_bus_hand_system() {
        let case = fixtures::single_bus();
        let basis = build_flow_basis(&case).unwrap();
        let load = DVector::from_column_slice(&[1.5, 0.0, 0.0]);
        let active = ActiveSet {
            gen_status: vec![GenStatus::AtUpper, GenStatus::Free, GenStatus::AtZero],
            line_status: vec![LineStatus::Free, LineStatus::Free],
        };
        let rec = assemble_and_solve(&case, &basis, &load, &active).unwrap();
        assert!(rec.diagnostics.square);
        assert!(!rec.diagnostics.rank_deficient);
        assert!(rec.diagnostics.feasible);
        assert_abs_diff_eq!(rec.x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rec.x[1], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(rec.x[2], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn assemble_roundtrips_simplex_solution() {
        let case = fixtures::triangle();
        let basis = build_flow_basis(&case).unwrap();
        let load = DVector::from_column_slice(&[0.2, 0.8, 0.5]);
        let sol = solve_dcopf(&case, &basis, &load, &cfg()).unwrap();
        assert_eq!(sol.status, DcopfStatus::Optimal);
        let active = activity_from_solution(&case, &sol.x, &sol.flows, 1e-7);
        let rec = assemble_and_solve(&case, &basis, &load, &active).unwrap();
        assert!((&rec.x - &sol.x).amax() <= 1e-6);
        assert!((&rec.f - &sol.f).amax() <= 1e-6);
    }

    #[test]
    fn all_free_on_congested_case_is_underdetermined() {
        let case = fixtures::triangle();
        let basis = build_flow_basis(&case).unwrap();
        let load = DVector::from_column_slice(&[0.0, 0.9, 0.9]);
        let active = ActiveSet {
            gen_status: vec![GenStatus::Free; 3],
            line_status: vec![LineStatus::Free; 3],
        };
        let rec = assemble(&case, &basis, &load, &active);
        assert!(rec.diagnostics.rank_deficient || !rec.diagnostics.feasible);
    }

    #[test]
    fn roundtrip_from_exact_prices_across_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for case in [fixtures::single_bus(), fixtures::two_bus(), fixtures::triangle()] {
            let basis = build_flow_basis(&case).unwrap();
            let mut recovered = 0;
            for _ in 0..200 {
                let load = DVector::from_fn(case.n, |i, _| {
                    rng.gen_range(0.0..(case.xmax[i].max(1.0)).min(1.2))
                });
                let sol = solve_dcopf(&case, &basis, &load, &cfg()).unwrap();
                if sol.status != DcopfStatus::Optimal {
                    continue;
                }
                let rec =
                    solve_from_prices(&case, &basis, &load, &sol.mu, DEFAULT_EPS_ACT, &cfg())
                        .unwrap();
                assert!(rec.diagnostics.feasible, "diagnostics: {:?}", rec.diagnostics);
                assert!(
                    (&rec.x - &sol.x).amax() <= 1e-6,
                    "x mismatch {:?} vs {:?}",
                    rec.x,
                    sol.x
                );
                assert!((&rec.f - &sol.f).amax() <= 1e-6);
                recovered += 1;
            }
            assert!(recovered >= 100, "too few non-degenerate samples: {recovered}");
        }
    }

    #[test]
    fn active_set_stable_under_small_price_perturbations() {
        let case = fixtures::single_bus();
        let basis = build_flow_basis(&case).unwrap();
        let load = DVector::from_column_slice(&[1.5, 0.0, 0.0]);
        let sol = solve_dcopf(&case, &basis, &load, &cfg()).unwrap();
        let base = solve_from_prices(&case, &basis, &load, &sol.mu, 1e-3, &cfg()).unwrap();
        // Stay inside the sign pattern: the margin is |mu - c| = 1 on the
        // pinned generators, eps_act = 1e-3.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let noise = DVector::from_fn(3, |_, _| rng.gen_range(-1e-4..1e-4));
            // Keep the marginal generator marginal: do not perturb bus 1.
            let mut mu = &sol.mu + noise;
            mu[1] = sol.mu[1];
            let rec = solve_from_prices(&case, &basis, &load, &mu, 1e-3, &cfg()).unwrap();
            assert_eq!(rec.active, base.active);
            assert!((&rec.x - &base.x).amax() <= 1e-9);
            assert!((&rec.f - &base.f).amax() <= 1e-9);
        }
    }

    #[test]
    fn flipped_marginal_generator_reports_infeasible() {
        let case = fixtures::single_bus();
        let basis = build_flow_basis(&case).unwrap();
        let load = DVector::from_column_slice(&[1.5, 0.0, 0.0]);
        let sol = solve_dcopf(&case, &basis, &load, &cfg()).unwrap();
        let mut mu = sol.mu.clone();
        mu[1] += 0.1; // marginal generator now reads as at-capacity
        let rec = solve_from_prices(&case, &basis, &load, &mu, DEFAULT_EPS_ACT, &cfg()).unwrap();
        assert!(!rec.diagnostics.feasible);
    }
}
