//! Exact LP ground truth for DCOPF.
//!
//! A dense bounded-variable simplex ([`solve_lp`]) provides primal and dual
//! solutions for the dispatch problem ([`solve_dcopf`]), the l1 flow-dual
//! recovery ([`recover_flow_duals`]), cost rays ([`cost_curve`]), and a
//! brute-force vertex enumerator ([`enumerate_vertices`]) kept as an
//! independent oracle for testing the simplex itself.

mod simplex;
mod vertex;

pub use simplex::{solve_lp, LpSolution, LpStatus, SolverConfig};
pub use vertex::{enumerate_vertices, Vertex};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{FlowBasis, GridCase};

/// A generic LP in bounded standard form:
/// minimize `objective . x` subject to `a x = rhs`, `lower <= x <= upper`.
///
/// Infinite bounds are allowed (`f64::NEG_INFINITY` / `f64::INFINITY`);
/// inequality rows are modeled by the caller with bounded slack variables.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: DVector<f64>,
    pub a: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl LpProblem {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.a.ncols(),
                context: "constraint matrix columns",
            });
        }
        if self.rhs.len() != self.a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.a.nrows(),
                got: self.rhs.len(),
                context: "rhs length",
            });
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.lower.len().min(self.upper.len()),
                context: "bound vectors",
            });
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] {
                return Err(Error::InvalidCase(format!(
                    "variable {j} has lower bound above upper bound"
                )));
            }
        }
        let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
        if !finite(&self.objective) || !finite(&self.rhs) || !self.a.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidCase("non-finite LP data".into()));
        }
        Ok(())
    }
}

/// Solver outcome for a DCOPF instance.
///
/// `Degenerate` still carries a valid optimal basis; it flags that some basic
/// variable sits on a bound, so the dual vector need not be unique and the
/// prices are one subgradient among several.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcopfStatus {
    Optimal,
    Degenerate,
    Infeasible,
}

/// Primal-dual solution of the dispatch problem.
#[derive(Debug, Clone)]
pub struct DcopfSolution {
    /// Generation per bus.
    pub x: DVector<f64>,
    /// Fundamental flows (tree-branch coordinates).
    pub f: DVector<f64>,
    /// Flows on all lines, `k * f`.
    pub flows: DVector<f64>,
    /// Optimal cost.
    pub j: f64,
    /// Nodal prices (duals of the balance rows).
    pub mu: DVector<f64>,
    /// Duals of the generator lower bounds `x >= 0`.
    pub tau_lo: DVector<f64>,
    /// Duals of the generator capacities `x <= xmax`.
    pub tau_hi: DVector<f64>,
    /// Duals of the line lower limits `k f >= -fmax`.
    pub lam_lo: DVector<f64>,
    /// Duals of the line upper limits `k f <= fmax`.
    pub lam_hi: DVector<f64>,
    pub status: DcopfStatus,
}

/// Assembles the dispatch LP over variables `[x, f, s]` where `s = k f` are
/// slack flows carrying the line limits as bounds.
pub fn dcopf_problem(case: &GridCase, basis: &FlowBasis, load: &DVector<f64>) -> LpProblem {
    let n = case.n;
    let m = case.m();
    let nf = basis.dim();
    let nv = n + nf + m;
    let rows = n + m;

    let mut a = DMatrix::zeros(rows, nv);
    a.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    a.view_mut((0, n), (n, nf)).copy_from(&basis.a_tilde);
    a.view_mut((n, n), (m, nf)).copy_from(&basis.k);
    a.view_mut((n, n + nf), (m, m))
        .copy_from(&(-DMatrix::<f64>::identity(m, m)));

    let mut rhs = DVector::zeros(rows);
    rhs.rows_mut(0, n).copy_from(load);

    let mut objective = DVector::zeros(nv);
    objective.rows_mut(0, n).copy_from(&case.cost_vector());

    let mut lower = DVector::from_element(nv, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(nv, f64::INFINITY);
    for i in 0..n {
        lower[i] = 0.0;
        upper[i] = case.xmax[i];
    }
    for (e, line) in case.lines.iter().enumerate() {
        lower[n + nf + e] = -line.fmax;
        upper[n + nf + e] = line.fmax;
    }

    LpProblem { objective, a, rhs, lower, upper }
}

/// Solves DCOPF for one load vector, returning primal dispatch, fundamental
/// flows and the full dual vector.
pub fn solve_dcopf(
    case: &GridCase,
    basis: &FlowBasis,
    load: &DVector<f64>,
    config: &SolverConfig,
) -> Result<DcopfSolution> {
    if load.len() != case.n {
        return Err(Error::DimensionMismatch {
            expected: case.n,
            got: load.len(),
            context: "load vector",
        });
    }
    let n = case.n;
    let m = case.m();
    let nf = basis.dim();
    let problem = dcopf_problem(case, basis, load);
    let sol = solve_lp(&problem, config)?;

    if sol.status != LpStatus::Optimal {
        return Ok(DcopfSolution {
            x: DVector::zeros(n),
            f: DVector::zeros(nf),
            flows: DVector::zeros(m),
            j: f64::INFINITY,
            mu: DVector::zeros(n),
            tau_lo: DVector::zeros(n),
            tau_hi: DVector::zeros(n),
            lam_lo: DVector::zeros(m),
            lam_hi: DVector::zeros(m),
            status: DcopfStatus::Infeasible,
        });
    }

    let x = DVector::from(sol.x.rows(0, n));
    let f = DVector::from(sol.x.rows(n, nf));
    let flows = &basis.k * &f;
    let mu = DVector::from(sol.duals.rows(0, n));
    // Row duals of the slack-definition rows `k f - s = 0` equal
    // `lam_lo - lam_hi`; the simplex keeps one side zero.
    let y2 = sol.duals.rows(n, m);
    let lam_lo = y2.map(|v| v.max(0.0));
    let lam_hi = y2.map(|v| (-v).max(0.0));
    // Reduced costs of the generation block split into the bound duals.
    let d = sol.reduced_costs.rows(0, n);
    let tau_lo = d.map(|v| v.max(0.0));
    let tau_hi = d.map(|v| (-v).max(0.0));

    Ok(DcopfSolution {
        x,
        f,
        flows,
        j: sol.objective,
        mu,
        tau_lo,
        tau_hi,
        lam_lo,
        lam_hi,
        status: if sol.degenerate { DcopfStatus::Degenerate } else { DcopfStatus::Optimal },
    })
}

/// One sample of a cost ray.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub t: f64,
    /// `None` when the sampled load is infeasible.
    pub j: Option<f64>,
    pub mu: Option<DVector<f64>>,
    pub degenerate: bool,
}

/// Samples `J*(load0 + t d)` at `steps + 1` points, `t = t_max * k / steps`.
/// Infeasible points are marked rather than dropped.
pub fn cost_curve(
    case: &GridCase,
    basis: &FlowBasis,
    load0: &DVector<f64>,
    direction: &DVector<f64>,
    t_max: f64,
    steps: usize,
    config: &SolverConfig,
) -> Result<Vec<CurvePoint>> {
    let mut points = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = if steps == 0 { 0.0 } else { t_max * k as f64 / steps as f64 };
        let load = load0 + direction * t;
        let sol = solve_dcopf(case, basis, &load, config)?;
        points.push(match sol.status {
            DcopfStatus::Infeasible => CurvePoint { t, j: None, mu: None, degenerate: false },
            status => CurvePoint {
                t,
                j: Some(sol.j),
                mu: Some(sol.mu),
                degenerate: status == DcopfStatus::Degenerate,
            },
        });
    }
    Ok(points)
}

/// Recovers the flow-dual signature from prices by the l1 program
/// `min |nu|_1  s.t.  k^T diag(fmax) nu = a_tilde^T mu`,
/// reformulated with the split `nu = p - q`, `p, q >= 0`.
///
/// The caller maps `lam_hi_e - lam_lo_e = nu_e / fmax_e`. Lines with
/// `fmax_e = 0` are excluded from the diagonal and forced to `nu_e = 0`.
pub fn recover_flow_duals(
    mu: &DVector<f64>,
    basis: &FlowBasis,
    fmax: &DVector<f64>,
    config: &SolverConfig,
) -> Result<DVector<f64>> {
    let m = fmax.len();
    let nf = basis.dim();
    if mu.len() != basis.a_tilde.nrows() {
        return Err(Error::DimensionMismatch {
            expected: basis.a_tilde.nrows(),
            got: mu.len(),
            context: "price vector",
        });
    }
    let rhs = basis.a_tilde.transpose() * mu;
    let live: Vec<usize> = (0..m).filter(|&e| fmax[e] > 0.0).collect();
    let nl = live.len();

    // Columns of k^T diag(fmax) restricted to lines with positive limits.
    let mut cols = DMatrix::zeros(nf, nl);
    for (j, &e) in live.iter().enumerate() {
        cols.column_mut(j).copy_from(&(basis.k.row(e).transpose() * fmax[e]));
    }
    let mut a = DMatrix::zeros(nf, 2 * nl);
    a.view_mut((0, 0), (nf, nl)).copy_from(&cols);
    a.view_mut((0, nl), (nf, nl)).copy_from(&(-cols));

    let problem = LpProblem {
        objective: DVector::from_element(2 * nl, 1.0),
        a,
        rhs,
        lower: DVector::zeros(2 * nl),
        upper: DVector::from_element(2 * nl, f64::INFINITY),
    };
    let sol = solve_lp(&problem, config)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Infeasible);
    }
    let mut nu = DVector::zeros(m);
    for (j, &e) in live.iter().enumerate() {
        nu[e] = sol.x[j] - sol.x[nl + j];
    }
    Ok(nu)
}

#[cfg(test)]
mod tests;
