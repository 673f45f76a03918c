//! Brute-force enumeration of basic feasible solutions.
//!
//! Deliberately independent of the simplex: bases are enumerated
//! combinatorially and solved directly, so agreement between the two routes
//! is a meaningful check rather than a tautology.

use nalgebra::{DMatrix, DVector};

use super::LpProblem;
use crate::error::{Error, Result};

const VAR_LIMIT: usize = 12;

#[derive(Debug, Clone)]
pub struct Vertex {
    pub x: DVector<f64>,
    pub objective: f64,
}

/// Lists every basic feasible solution of a small LP.
///
/// A vertex is a choice of `rows` basic columns (which must include every
/// free variable) plus an at-lower/at-upper assignment for the rest. The
/// optimum of the LP is the minimum objective over the returned list.
pub fn enumerate_vertices(problem: &LpProblem, feas_tol: f64) -> Result<Vec<Vertex>> {
    problem.validate()?;
    let n = problem.num_vars();
    if n > VAR_LIMIT {
        return Err(Error::TooLarge { vars: n, limit: VAR_LIMIT });
    }
    let rows = problem.num_rows();
    let mut vertices = Vec::new();
    let mut basis = Vec::with_capacity(rows);
    combos(problem, rows, 0, &mut basis, feas_tol, &mut vertices);
    Ok(vertices)
}

fn combos(
    p: &LpProblem,
    rows: usize,
    start: usize,
    basis: &mut Vec<usize>,
    feas_tol: f64,
    vertices: &mut Vec<Vertex>,
) {
    if basis.len() == rows {
        expand_basis(p, basis, feas_tol, vertices);
        return;
    }
    if start >= p.num_vars() || p.num_vars() - start < rows - basis.len() {
        return;
    }
    basis.push(start);
    combos(p, rows, start + 1, basis, feas_tol, vertices);
    basis.pop();
    combos(p, rows, start + 1, basis, feas_tol, vertices);
}

fn expand_basis(p: &LpProblem, basis: &[usize], feas_tol: f64, vertices: &mut Vec<Vertex>) {
    let rows = p.num_rows();
    let n = p.num_vars();
    let in_basis: Vec<bool> = {
        let mut v = vec![false; n];
        for &j in basis {
            v[j] = true;
        }
        v
    };
    // Free nonbasic variables cannot sit at a bound, so such a basis yields
    // no vertex.
    let nonbasic: Vec<usize> = (0..n).filter(|&j| !in_basis[j]).collect();
    if nonbasic
        .iter()
        .any(|&j| !p.lower[j].is_finite() && !p.upper[j].is_finite())
    {
        return;
    }

    let mut bmat = DMatrix::zeros(rows, rows);
    for (pos, &j) in basis.iter().enumerate() {
        bmat.column_mut(pos).copy_from(&p.a.column(j));
    }
    let lu = bmat.clone().lu();

    // Every at-lower/at-upper assignment of the nonbasic variables.
    let choices: Vec<Vec<f64>> = nonbasic
        .iter()
        .map(|&j| {
            let mut c = Vec::new();
            if p.lower[j].is_finite() {
                c.push(p.lower[j]);
            }
            if p.upper[j].is_finite() && p.upper[j] != p.lower[j] {
                c.push(p.upper[j]);
            }
            c
        })
        .collect();
    let mut assignment = vec![0usize; nonbasic.len()];
    loop {
        let mut rhs = p.rhs.clone();
        let mut x = DVector::zeros(n);
        for (pos, &j) in nonbasic.iter().enumerate() {
            let v = choices[pos][assignment[pos]];
            x[j] = v;
            if v != 0.0 {
                rhs -= p.a.column(j) * v;
            }
        }
        let solved = if rows == 0 { Some(DVector::zeros(0)) } else { lu.solve(&rhs) };
        if let Some(xb) = solved {
            // Reject near-singular bases: the solve must actually reproduce
            // the right-hand side.
            let residual = (&bmat * &xb - &rhs).amax();
            let mut ok = residual <= feas_tol * (1.0 + rhs.amax()) * 1e3;
            for (pos, &j) in basis.iter().enumerate() {
                x[j] = xb[pos];
                let slack = feas_tol * (1.0 + xb[pos].abs());
                if xb[pos] < p.lower[j] - slack || xb[pos] > p.upper[j] + slack {
                    ok = false;
                    break;
                }
            }
            if ok {
                vertices.push(Vertex {
                    objective: p.objective.dot(&x),
                    x,
                });
            }
        }

        // Next assignment, odometer-style.
        let mut pos = 0;
        loop {
            if pos == nonbasic.len() {
                return;
            }
            assignment[pos] += 1;
            if assignment[pos] < choices[pos].len() {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}
