//! Learning-accelerated DC optimal power flow.
//!
//! The crate is organized around one pipeline:
//!
//! 1. [`grid`] models the network and builds the fundamental-flow embedding
//!    (spanning-tree flows `f`, cycle-completion matrix `K`, injection map `Ã`).
//! 2. [`lp`] is the exact ground-truth engine: a dense bounded-variable simplex
//!    with full dual extraction, the DCOPF wrapper, and a brute-force vertex
//!    enumerator used as a testing oracle.
//! 3. [`activeset`] turns nodal prices into binding-constraint sets and
//!    reconstructs the optimal dispatch from a linear system.
//! 4. [`icnn`] is the input-convex network: analytic first- and second-order
//!    backprop, KKT violation degrees, and the training loops (plus the plain
//!    end-to-end MLP baseline).
//! 5. [`genbound`] machine-checks the generalization claims: gradient constancy
//!    over convex hulls of same-price samples and gradient polytope bounds for
//!    unseen regions.
//! 6. [`pipeline`] wires everything into dataset generation, evaluation with
//!    optimality/feasibility ratios, the unseen-region experiment, and timing.

pub mod activeset;
pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod genbound;
pub mod grid;
pub mod icnn;
pub mod lp;
pub mod pipeline;

pub use error::{Error, Result};
