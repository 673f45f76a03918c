//! Dense bounded-variable revised simplex, two phases, Bland's rule.
//!
//! Built for exactness and determinism rather than speed: the basis is
//! refactorized every iteration and basic values are recomputed from the
//! nonbasic bound states, so nothing drifts across pivots. Dual values and
//! reduced costs come straight from the final basis, which is what the rest
//! of the crate needs (prices are the product, not a byproduct).

use nalgebra::{DMatrix, DVector};

use super::LpProblem;
use crate::error::{Error, Result};

/// Numerical knobs shared by every LP-backed routine.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Bound/row feasibility tolerance.
    pub feas_tol: f64,
    /// Reduced-cost optimality tolerance.
    pub opt_tol: f64,
    /// A basic variable within this distance of a finite bound marks the
    /// basis as degenerate.
    pub degen_tol: f64,
    /// Pivot cap as a multiple of rows + columns.
    pub max_iter_factor: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            degen_tol: 1e-9,
            max_iter_factor: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point (structural variables only). Zeros unless Optimal.
    pub x: DVector<f64>,
    /// Row duals `y` from the final basis: `reduced_costs = c - a^T y`.
    pub duals: DVector<f64>,
    /// Reduced costs of the structural variables; the multiplier of an active
    /// lower bound is `d_j`, of an active upper bound `-d_j`.
    pub reduced_costs: DVector<f64>,
    pub objective: f64,
    /// Some basic variable sits on a finite bound: the vertex is degenerate
    /// and the dual vector need not be unique.
    pub degenerate: bool,
    pub iterations: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum NonbasicState {
    AtLower,
    AtUpper,
    /// Free variable parked at zero.
    AtZero,
}

struct Tableau {
    /// Structural columns followed by one artificial column per row.
    a: DMatrix<f64>,
    cost: DVector<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    rhs: DVector<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    state: Vec<NonbasicState>,
}

impl Tableau {
    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            NonbasicState::AtLower => self.lower[j],
            NonbasicState::AtUpper => self.upper[j],
            NonbasicState::AtZero => 0.0,
        }
    }

    /// Basic values for the current bound states: `B x_B = rhs - N x_N`.
    fn basic_values(&self, binv_rhs: &dyn Fn(&DVector<f64>) -> DVector<f64>) -> DVector<f64> {
        let mut r = self.rhs.clone();
        for j in 0..self.a.ncols() {
            if !self.in_basis[j] {
                let v = self.nonbasic_value(j);
                if v != 0.0 {
                    r -= self.a.column(j) * v;
                }
            }
        }
        binv_rhs(&r)
    }
}

/// Solves `min c.x  s.t.  a x = rhs, lower <= x <= upper`.
///
/// Returns `Err(IterationLimit)` when the pivot cap is hit; infeasibility and
/// unboundedness are reported through [`LpStatus`].
pub fn solve_lp(problem: &LpProblem, config: &SolverConfig) -> Result<LpSolution> {
    problem.validate()?;
    let n = problem.num_vars();
    let rows = problem.num_rows();
    let total = n + rows;

    let mut t = Tableau {
        a: DMatrix::zeros(rows, total),
        cost: DVector::zeros(total),
        lower: DVector::from_element(total, 0.0),
        upper: DVector::from_element(total, f64::INFINITY),
        rhs: problem.rhs.clone(),
        basis: (n..total).collect(),
        in_basis: (0..total).map(|j| j >= n).collect(),
        state: Vec::with_capacity(total),
    };
    t.a.view_mut((0, 0), (rows, n)).copy_from(&problem.a);
    t.lower.rows_mut(0, n).copy_from(&problem.lower);
    t.upper.rows_mut(0, n).copy_from(&problem.upper);
    for j in 0..total {
        t.state.push(if t.lower[j].is_finite() {
            NonbasicState::AtLower
        } else if t.upper[j].is_finite() {
            NonbasicState::AtUpper
        } else {
            NonbasicState::AtZero
        });
    }

    // Orient artificial columns so the starting artificial values are >= 0.
    let mut residual = problem.rhs.clone();
    for j in 0..n {
        let v = t.nonbasic_value(j);
        if v != 0.0 {
            residual -= problem.a.column(j) * v;
        }
    }
    for i in 0..rows {
        t.a[(i, n + i)] = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
    }

    let max_iters = config.max_iter_factor * (rows + total).max(1);
    let mut iterations = 0usize;

    // Phase 1: drive the artificial sum to zero.
    for i in 0..rows {
        t.cost[n + i] = 1.0;
    }
    let phase1 = run_simplex(&mut t, config, max_iters, &mut iterations)?;
    if phase1 == LpStatus::Unbounded {
        // Cannot happen: the phase-1 objective is bounded below by zero.
        return Err(Error::IterationLimit(iterations));
    }
    let (xb, _, _) = factor_and_values(&t)?;
    let mut art_sum = 0.0;
    for (pos, &var) in t.basis.iter().enumerate() {
        if var >= n {
            art_sum += xb[pos].abs();
        }
    }
    for j in n..total {
        if !t.in_basis[j] {
            art_sum += t.nonbasic_value(j).abs();
        }
    }
    let scale = 1.0 + problem.rhs.amax();
    if art_sum > config.feas_tol * scale * (rows.max(1) as f64) * 10.0 {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: DVector::zeros(n),
            duals: DVector::zeros(rows),
            reduced_costs: DVector::zeros(n),
            objective: f64::INFINITY,
            degenerate: false,
            iterations,
        });
    }

    // Phase 2: real objective, artificials pinned to zero.
    t.cost.fill(0.0);
    t.cost.rows_mut(0, n).copy_from(&problem.objective);
    for j in n..total {
        t.upper[j] = 0.0;
        if !t.in_basis[j] {
            t.state[j] = NonbasicState::AtLower;
        }
    }
    let phase2 = run_simplex(&mut t, config, max_iters, &mut iterations)?;
    if phase2 == LpStatus::Unbounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: DVector::zeros(n),
            duals: DVector::zeros(rows),
            reduced_costs: DVector::zeros(n),
            objective: f64::NEG_INFINITY,
            degenerate: false,
            iterations,
        });
    }

    let (xb, y, _) = factor_and_values(&t)?;
    let mut x = DVector::zeros(n);
    for j in 0..n {
        if !t.in_basis[j] {
            x[j] = t.nonbasic_value(j);
        }
    }
    // Primal degeneracy: a basic variable resting on a finite bound.
    let mut degenerate = false;
    for (pos, &var) in t.basis.iter().enumerate() {
        if var < n {
            x[var] = xb[pos];
        }
        let (lo, hi) = (t.lower[var], t.upper[var]);
        if (lo.is_finite() && (xb[pos] - lo).abs() <= config.degen_tol)
            || (hi.is_finite() && (xb[pos] - hi).abs() <= config.degen_tol)
        {
            degenerate = true;
        }
    }
    let reduced = problem.objective.clone() - problem.a.transpose() * &y;
    // Dual degeneracy: a nonbasic variable held at a bound with a vanishing
    // reduced cost, meaning the optimal vertex is not unique. Free variables
    // are skipped: their reduced cost is forced to zero by dual feasibility.
    for j in 0..n {
        let at_bound = !t.in_basis[j]
            && t.lower[j] < t.upper[j]
            && matches!(t.state[j], NonbasicState::AtLower | NonbasicState::AtUpper);
        if at_bound && reduced[j].abs() <= config.degen_tol {
            degenerate = true;
        }
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: problem.objective.dot(&x),
        x,
        duals: y,
        reduced_costs: reduced,
        degenerate,
        iterations,
    })
}

/// Factorizes the current basis and returns basic values, row duals and a
/// solver closure for further right-hand sides.
fn factor_and_values(t: &Tableau) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
    let rows = t.a.nrows();
    if rows == 0 {
        return Ok((DVector::zeros(0), DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let mut b = DMatrix::zeros(rows, rows);
    for (pos, &var) in t.basis.iter().enumerate() {
        b.column_mut(pos).copy_from(&t.a.column(var));
    }
    let lu = b.clone().lu();
    let binv_rhs = |r: &DVector<f64>| lu.solve(r).expect("basis matrix is invertible");
    let xb = t.basic_values(&binv_rhs);
    let cb = DVector::from_iterator(rows, t.basis.iter().map(|&v| t.cost[v]));
    let y = b
        .transpose()
        .lu()
        .solve(&cb)
        .expect("basis matrix is invertible");
    Ok((xb, y, b))
}

fn run_simplex(
    t: &mut Tableau,
    config: &SolverConfig,
    max_iters: usize,
    iterations: &mut usize,
) -> Result<LpStatus> {
    let rows = t.a.nrows();
    loop {
        if *iterations >= max_iters {
            return Err(Error::IterationLimit(*iterations));
        }
        *iterations += 1;

        let (xb, y, _b) = factor_and_values(t)?;

        // Bland: entering is the lowest-index nonbasic with a profitable
        // reduced cost in an admissible direction.
        let mut entering = None;
        for j in 0..t.a.ncols() {
            if t.in_basis[j] || t.lower[j] == t.upper[j] {
                continue;
            }
            let d = t.cost[j] - y.dot(&DVector::from(t.a.column(j)));
            let dir = match t.state[j] {
                NonbasicState::AtLower if d < -config.opt_tol => 1.0,
                NonbasicState::AtUpper if d > config.opt_tol => -1.0,
                NonbasicState::AtZero if d < -config.opt_tol => 1.0,
                NonbasicState::AtZero if d > config.opt_tol => -1.0,
                _ => continue,
            };
            entering = Some((j, dir));
            break;
        }
        let Some((enter, dir)) = entering else {
            return Ok(LpStatus::Optimal);
        };

        // Movement of the basics per unit step of the entering variable.
        let w = if rows == 0 {
            DVector::zeros(0)
        } else {
            let mut bmat = DMatrix::zeros(rows, rows);
            for (pos, &var) in t.basis.iter().enumerate() {
                bmat.column_mut(pos).copy_from(&t.a.column(var));
            }
            bmat.lu()
                .solve(&DVector::from(t.a.column(enter)))
                .expect("basis matrix is invertible")
        };

        // Ratio test: the entering variable's own range caps the step, and
        // each basic variable blocks at whichever bound it approaches.
        let range = t.upper[enter] - t.lower[enter];
        let mut best_t = if range.is_finite() { range } else { f64::INFINITY };
        let mut leaving: Option<(usize, bool)> = None; // (basis pos, hits upper)
        const PIVOT_TOL: f64 = 1e-10;
        for pos in 0..rows {
            let delta = -dir * w[pos];
            if delta.abs() <= PIVOT_TOL {
                continue;
            }
            let var = t.basis[pos];
            let (bound, hits_upper) = if delta > 0.0 {
                (t.upper[var], true)
            } else {
                (t.lower[var], false)
            };
            if !bound.is_finite() {
                continue;
            }
            let step = ((bound - xb[pos]) / delta).max(0.0);
            let better = step < best_t - 1e-12
                || (step < best_t + 1e-12
                    && leaving.is_some_and(|(p, _)| var < t.basis[p]));
            if better {
                best_t = step;
                leaving = Some((pos, hits_upper));
            }
        }

        if best_t.is_infinite() {
            return Ok(LpStatus::Unbounded);
        }

        match leaving {
            // The entering variable only flips to its opposite bound.
            None => {
                t.state[enter] = match t.state[enter] {
                    NonbasicState::AtLower => NonbasicState::AtUpper,
                    NonbasicState::AtUpper => NonbasicState::AtLower,
                    NonbasicState::AtZero => unreachable!("free variables have no bound to flip to"),
                };
            }
            Some((pos, hits_upper)) => {
                let out = t.basis[pos];
                t.in_basis[out] = false;
                t.state[out] = if hits_upper {
                    NonbasicState::AtUpper
                } else {
                    NonbasicState::AtLower
                };
                t.basis[pos] = enter;
                t.in_basis[enter] = true;
            }
        }
    }
}
