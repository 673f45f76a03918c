//! Power network model and the fundamental-flow embedding.
//!
//! Flows on a connected network with `n` buses and `m` lines live in an
//! `n-1`-dimensional subspace: picking a spanning tree, the tree-branch flows
//! are a basis (the fundamental flows) and every other flow follows from the
//! weighted cycle equation `sum_e f_e / b_e = 0` around its fundamental cycle.
//!
//! Sign conventions, fixed here and tested against the angle model:
//! - a line is oriented `from -> to` as listed in the case file, and its flow
//!   is `f_e = b_e (theta_from - theta_to)`, so positive flow moves power from
//!   `from` to `to`;
//! - `a_tilde` is assembled so that `x + a_tilde * f = load` holds, i.e. flow
//!   on line `e` is counted as an export from `from(e)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One transmission line: orientation `from -> to`, susceptance `b > 0`,
/// symmetric flow limit `fmax >= 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub b: f64,
    pub fmax: f64,
}

/// A DCOPF instance: topology, susceptances, limits, costs and nominal loads.
///
/// Every bus carries a (possibly zero-capacity) generator and a load, matching
/// the formulation where absent generation is encoded as `xmax_i = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCase {
    /// Bus count.
    pub n: usize,
    pub lines: Vec<Line>,
    /// Generation cost per bus (currency/MW), nonnegative with at least one
    /// strictly positive entry.
    pub c: Vec<f64>,
    /// Generation capacity per bus (MW), nonnegative.
    pub xmax: Vec<f64>,
    /// Nominal load per bus (MW), nonnegative.
    pub load_nominal: Vec<f64>,
}

impl GridCase {
    pub fn m(&self) -> usize {
        self.lines.len()
    }

    /// Checks every structural invariant; called by the loader and the
    /// solvers' entry points.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::InvalidCase("bus count must be positive".into()));
        }
        for v in [&self.c, &self.xmax, &self.load_nominal] {
            if v.len() != n {
                return Err(Error::InvalidCase(format!(
                    "vector length {} does not match bus count {n}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidCase("non-finite entry in case vector".into()));
            }
        }
        if self.c.iter().any(|&c| c < 0.0) || self.c.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidCase(
                "costs must be nonnegative with at least one positive entry".into(),
            ));
        }
        if self.xmax.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidCase("generation capacities must be nonnegative".into()));
        }
        if self.load_nominal.iter().any(|&l| l < 0.0) {
            return Err(Error::InvalidCase("nominal loads must be nonnegative".into()));
        }
        for (e, line) in self.lines.iter().enumerate() {
            if line.from >= n || line.to >= n {
                return Err(Error::InvalidCase(format!(
                    "line {e} references bus out of range [0, {n})"
                )));
            }
            if line.from == line.to {
                return Err(Error::InvalidCase(format!("line {e} is a self-loop")));
            }
            if !(line.b.is_finite() && line.b > 0.0) {
                return Err(Error::InvalidCase(format!(
                    "line {e} susceptance must be finite and positive"
                )));
            }
            if !(line.fmax.is_finite() && line.fmax >= 0.0) {
                return Err(Error::InvalidCase(format!(
                    "line {e} flow limit must be finite and nonnegative"
                )));
            }
        }
        // Connectivity is established by the spanning-tree builder.
        bfs_tree(self).map(|_| ())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let case: GridCase = serde_json::from_str(text)?;
        case.validate()?;
        Ok(case)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }

    pub fn cost_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.c)
    }

    pub fn xmax_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.xmax)
    }

    pub fn fmax_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.lines.iter().map(|l| l.fmax))
    }

    pub fn nominal_load(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.load_nominal)
    }

    /// Signed incidence matrix `A` (n x m): +1 at `from(e)`, -1 at `to(e)`.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.m());
        for (e, line) in self.lines.iter().enumerate() {
            a[(line.from, e)] = 1.0;
            a[(line.to, e)] = -1.0;
        }
        a
    }
}

/// Rooted spanning tree: for every non-root bus, the tree line connecting it
/// to its parent and which endpoint of that line it is.
#[derive(Debug, Clone)]
struct SpanningTree {
    /// Tree line indices in discovery order; the fundamental-flow coordinate
    /// of tree line `tree_edges[j]` is `j`.
    edges: Vec<usize>,
    parent: Vec<Option<usize>>,
    parent_edge: Vec<Option<usize>>,
    /// Buses in BFS discovery order, root first.
    order: Vec<usize>,
}

/// Breadth-first spanning tree rooted at bus 0, scanning lines in file order,
/// so the basis is reproducible bit-for-bit.
fn bfs_tree(case: &GridCase) -> Result<SpanningTree> {
    let n = case.n;
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n]; // (line, other bus)
    for (e, line) in case.lines.iter().enumerate() {
        adj[line.from].push((e, line.to));
        adj[line.to].push((e, line.from));
    }
    // Neighbors in line-file order regardless of which endpoint we sit on.
    for list in &mut adj {
        list.sort_by_key(|&(e, _)| e);
    }

    let mut tree = SpanningTree {
        edges: Vec::with_capacity(n.saturating_sub(1)),
        parent: vec![None; n],
        parent_edge: vec![None; n],
        order: Vec::with_capacity(n),
    };
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        tree.order.push(u);
        for &(e, v) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                tree.parent[v] = Some(u);
                tree.parent_edge[v] = Some(e);
                tree.edges.push(e);
                queue.push_back(v);
            }
        }
    }
    if tree.order.len() < n {
        return Err(Error::DisconnectedGraph {
            reached: tree.order.len(),
            total: n,
        });
    }
    Ok(tree)
}

fn tree_from_edges(case: &GridCase, edges: &[usize]) -> Result<SpanningTree> {
    if edges.len() + 1 != case.n {
        return Err(Error::InvalidCase(format!(
            "spanning tree needs {} edges, got {}",
            case.n - 1,
            edges.len()
        )));
    }
    let restricted = GridCase {
        lines: edges.iter().map(|&e| case.lines[e].clone()).collect(),
        ..case.clone()
    };
    let tree = bfs_tree(&restricted)?;
    Ok(SpanningTree {
        edges: tree.edges.iter().map(|&j| edges[j]).collect(),
        parent_edge: tree
            .parent_edge
            .iter()
            .map(|pe| pe.map(|j| edges[j]))
            .collect(),
        parent: tree.parent,
        order: tree.order,
    })
}

/// The fundamental-flow embedding of a case: `k` (m x (n-1)) maps fundamental
/// flows to all line flows, `a_tilde` (n x (n-1)) maps them to the nodal
/// balance so that `x + a_tilde * f = load`.
#[derive(Debug, Clone)]
pub struct FlowBasis {
    pub tree_edges: Vec<usize>,
    pub k: DMatrix<f64>,
    pub a_tilde: DMatrix<f64>,
    tree: SpanningTree,
}

/// Builds the fundamental-flow basis on the BFS spanning tree rooted at bus 0.
pub fn build_flow_basis(case: &GridCase) -> Result<FlowBasis> {
    let tree = bfs_tree(case)?;
    basis_from_tree(case, tree)
}

impl FlowBasis {
    /// Builds the basis on an explicitly chosen spanning tree (line indices).
    pub fn with_tree(case: &GridCase, tree_edges: &[usize]) -> Result<FlowBasis> {
        let tree = tree_from_edges(case, tree_edges)?;
        basis_from_tree(case, tree)
    }

    /// Number of fundamental flows, `n - 1`.
    pub fn dim(&self) -> usize {
        self.tree_edges.len()
    }
}

fn basis_from_tree(case: &GridCase, tree: SpanningTree) -> Result<FlowBasis> {
    let n = case.n;
    let m = case.m();
    let nf = n - 1;

    // Column of each tree line in the fundamental coordinates.
    let mut col = vec![usize::MAX; m];
    for (j, &e) in tree.edges.iter().enumerate() {
        col[e] = j;
    }
    let mut depth = vec![0usize; n];
    for &u in &tree.order {
        if let Some(p) = tree.parent[u] {
            depth[u] = depth[p] + 1;
        }
    }

    // Walk one step towards the root; returns (coefficient of f_t in
    // theta_u - theta_parent(u), tree line t). From f_t = b_t (theta_from -
    // theta_to), the step picks up sign +1 when u is the line's from-bus.
    let step = |u: usize| -> (f64, usize) {
        let t = tree.parent_edge[u].expect("non-root bus has a parent edge");
        let sign = if case.lines[t].from == u { 1.0 } else { -1.0 };
        (sign / case.lines[t].b, t)
    };

    let mut k = DMatrix::zeros(m, nf);
    for (e, line) in case.lines.iter().enumerate() {
        if col[e] != usize::MAX {
            k[(e, col[e])] = 1.0;
            continue;
        }
        // theta_from - theta_to along the tree path, accumulated as
        // coefficients on the fundamental flows; then f_e = b_e * that.
        let (mut u, mut v) = (line.from, line.to);
        let mut coeff = vec![0.0; nf];
        while u != v {
            if depth[u] >= depth[v] {
                let (c, t) = step(u);
                coeff[col[t]] += c;
                u = tree.parent[u].unwrap();
            } else {
                let (c, t) = step(v);
                coeff[col[t]] -= c;
                v = tree.parent[v].unwrap();
            }
        }
        for (j, c) in coeff.into_iter().enumerate() {
            k[(e, j)] = line.b * c;
        }
    }

    // x + a_tilde f = load  <=>  x - A (K f) = load.
    let a_tilde = -case.incidence() * &k;
    Ok(FlowBasis {
        tree_edges: tree.edges.clone(),
        k,
        a_tilde,
        tree,
    })
}

/// Recovers bus angles from fundamental flows: `theta_0 = 0`, every tree line
/// pins one angle, and every remaining line is checked for consistency.
///
/// The residual check is a guard against a mis-built `K`; it fails with
/// [`Error::InconsistentFlows`] rather than returning angles that do not
/// reproduce the flows.
pub fn recover_angles(basis: &FlowBasis, case: &GridCase, f: &DVector<f64>) -> Result<DVector<f64>> {
    if f.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: f.len(),
            context: "fundamental flow vector",
        });
    }
    let flows = &basis.k * f;
    let mut theta = DVector::zeros(case.n);
    for &u in &basis.tree.order {
        let Some(p) = basis.tree.parent[u] else { continue };
        let t = basis.tree.parent_edge[u].unwrap();
        let line = &case.lines[t];
        // f_t = b_t (theta_from - theta_to)
        let drop = flows[t] / line.b;
        theta[u] = if line.from == u { theta[p] + drop } else { theta[p] - drop };
    }

    let tol = 1e-9 * (1.0 + flows.amax());
    let mut residual: f64 = 0.0;
    for (e, line) in case.lines.iter().enumerate() {
        let model: f64 = line.b * (theta[line.from] - theta[line.to]);
        residual = residual.max((flows[e] - model).abs());
    }
    if residual > tol {
        return Err(Error::InconsistentFlows { residual, tol });
    }
    Ok(theta)
}
