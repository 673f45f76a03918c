//! KKT machinery: violation degrees, the fixed-point reformulation check,
//! and the two training losses.
//!
//! The dual completion is cheap and explicit: generator-bound duals follow
//! from the prices by bracket formulas and line duals come from the l1
//! recovery. The fixed-point equations are zero exactly at primal-dual
//! optima, which is what makes them usable as a loss on unlabeled loads.

use nalgebra::DVector;

use super::IcnnModel;
use crate::activeset::solve_from_prices_lenient;
use crate::error::Result;
use crate::grid::{FlowBasis, GridCase};
use crate::lp::{recover_flow_duals, DcopfSolution, SolverConfig};

fn pos(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| x.max(0.0))
}

/// Generator-bound duals from prices: `tau_hi = [mu - c]+` and
/// `tau_lo = [mu - c]+ - (mu - c)`, so `tau_hi - tau_lo = mu - c` restores
/// dual stationarity identically. Returns `(tau_lo, tau_hi)`.
pub fn dual_from_prices(mu: &DVector<f64>, c: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let gap = mu - c;
    let tau_hi = pos(&gap);
    let tau_lo = &tau_hi - gap;
    (tau_lo, tau_hi)
}

/// Residuals of the bracket fixed-point equations plus the balance equation.
/// All are zero iff the supplied point is primal-dual optimal.
#[derive(Debug, Clone)]
pub struct ViolationDegrees {
    pub nu_lam_hi: DVector<f64>,
    pub nu_lam_lo: DVector<f64>,
    pub nu_tau_hi: DVector<f64>,
    pub nu_tau_lo: DVector<f64>,
    pub nu_p: DVector<f64>,
}

impl ViolationDegrees {
    pub fn squared_norm(&self) -> f64 {
        self.nu_lam_hi.norm_squared()
            + self.nu_lam_lo.norm_squared()
            + self.nu_tau_hi.norm_squared()
            + self.nu_tau_lo.norm_squared()
            + self.nu_p.norm_squared()
    }

    pub fn max(&self) -> f64 {
        [
            &self.nu_lam_hi,
            &self.nu_lam_lo,
            &self.nu_tau_hi,
            &self.nu_tau_lo,
            &self.nu_p,
        ]
        .iter()
        .map(|v| if v.is_empty() { 0.0 } else { v.amax() })
        .fold(0.0, f64::max)
    }
}

/// Violation degrees with the line duals supplied by the caller (used by the
/// loss, which recovers them once per sample).
pub fn violation_degrees_with_duals(
    case: &GridCase,
    basis: &FlowBasis,
    load: &DVector<f64>,
    mu: &DVector<f64>,
    x: &DVector<f64>,
    f: &DVector<f64>,
    lam_lo: &DVector<f64>,
    lam_hi: &DVector<f64>,
) -> ViolationDegrees {
    let fmax = case.fmax_vector();
    let flows = &basis.k * f;
    let (tau_lo, tau_hi) = dual_from_prices(mu, &case.cost_vector());
    ViolationDegrees {
        nu_lam_hi: pos(&(lam_hi + &flows - &fmax)) - lam_hi,
        nu_lam_lo: pos(&(lam_lo - (&flows + &fmax))) - lam_lo,
        nu_tau_hi: pos(&(&tau_hi + x - &case.xmax_vector())) - &tau_hi,
        nu_tau_lo: pos(&(&tau_lo - x)) - &tau_lo,
        nu_p: load - x - &basis.a_tilde * f,
    }
}

/// Violation degrees for a price estimate and a candidate dispatch; the line
/// duals are recovered from the prices and sign-split as
/// `lam_hi = [nu/fmax]+`, `lam_lo = [-nu/fmax]+`.
pub fn violation_degrees(
    case: &GridCase,
    basis: &FlowBasis,
    load: &DVector<f64>,
    mu: &DVector<f64>,
    x: &DVector<f64>,
    f: &DVector<f64>,
    config: &SolverConfig,
) -> Result<ViolationDegrees> {
    let fmax = case.fmax_vector();
    let nu = recover_flow_duals(mu, basis, &fmax, config)?;
    let (lam_lo, lam_hi) = split_line_duals(&nu, &fmax);
    Ok(violation_degrees_with_duals(case, basis, load, mu, x, f, &lam_lo, &lam_hi))
}

pub(crate) fn split_line_duals(
    nu: &DVector<f64>,
    fmax: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let m = nu.len();
    let mut lam_lo = DVector::zeros(m);
    let mut lam_hi = DVector::zeros(m);
    for e in 0..m {
        if fmax[e] > 0.0 {
            let w = nu[e] / fmax[e];
            lam_hi[e] = w.max(0.0);
            lam_lo[e] = (-w).max(0.0);
        }
    }
    (lam_lo, lam_hi)
}

/// Per-family maxima of the textbook KKT residuals for a solved dispatch.
#[derive(Debug, Clone)]
pub struct KktResiduals {
    /// `c - tau_lo + tau_hi - mu`
    pub stationarity_x: f64,
    /// `-K^T lam_lo + K^T lam_hi - A~^T mu`
    pub stationarity_f: f64,
    /// Generator bound violations.
    pub primal_gen: f64,
    /// Line limit violations.
    pub primal_flow: f64,
    /// `x + A~ f - load`
    pub balance: f64,
    /// Negative parts of the inequality duals.
    pub dual_sign: f64,
    /// Complementary slackness products.
    pub comp_slack: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity_x
            .max(self.stationarity_f)
            .max(self.primal_gen)
            .max(self.primal_flow)
            .max(self.balance)
            .max(self.dual_sign)
            .max(self.comp_slack)
    }

    /// The families equivalent to the bracket equations: primal bounds, dual
    /// signs and complementary slackness.
    pub fn bracket_equivalent_max(&self) -> f64 {
        self.primal_gen
            .max(self.primal_flow)
            .max(self.dual_sign)
            .max(self.comp_slack)
    }
}

pub fn kkt_residuals(case: &GridCase, basis: &FlowBasis, sol: &DcopfSolution, load: &DVector<f64>) -> KktResiduals {
    let c = case.cost_vector();
    let xmax = case.xmax_vector();
    let fmax = case.fmax_vector();
    let flows = &basis.k * &sol.f;

    let stationarity_x = (&c - &sol.tau_lo + &sol.tau_hi - &sol.mu).amax();
    let stationarity_f = (basis.k.transpose() * (&sol.lam_hi - &sol.lam_lo)
        - basis.a_tilde.transpose() * &sol.mu)
        .amax();
    let primal_gen = (0..case.n)
        .map(|i| (-sol.x[i]).max(sol.x[i] - xmax[i]).max(0.0))
        .fold(0.0, f64::max);
    let primal_flow = (0..case.m())
        .map(|e| (flows[e].abs() - fmax[e]).max(0.0))
        .fold(0.0, f64::max);
    let balance = (&sol.x + &basis.a_tilde * &sol.f - load).amax();
    let dual_sign = [&sol.tau_lo, &sol.tau_hi, &sol.lam_lo, &sol.lam_hi]
        .iter()
        .map(|v| if v.is_empty() { 0.0 } else { v.map(|t| (-t).max(0.0)).amax() })
        .fold(0.0, f64::max);
    let mut comp_slack: f64 = 0.0;
    for i in 0..case.n {
        comp_slack = comp_slack
            .max((sol.tau_lo[i] * sol.x[i]).abs())
            .max((sol.tau_hi[i] * (sol.x[i] - xmax[i])).abs());
    }
    for e in 0..case.m() {
        comp_slack = comp_slack
            .max((sol.lam_lo[e] * (fmax[e] + flows[e])).abs())
            .max((sol.lam_hi[e] * (flows[e] - fmax[e])).abs());
    }

    KktResiduals {
        stationarity_x,
        stationarity_f,
        primal_gen,
        primal_flow,
        balance,
        dual_sign,
        comp_slack,
    }
}

/// Residuals of the four bracket equations, plus the shared stationarity and
/// balance equations that the reformulation presumes.
#[derive(Debug, Clone)]
pub struct FixedPointResiduals {
    pub v_lam_hi: f64,
    pub v_lam_lo: f64,
    pub v_tau_hi: f64,
    pub v_tau_lo: f64,
    pub stationarity_x: f64,
    pub stationarity_f: f64,
    pub balance: f64,
}

impl FixedPointResiduals {
    pub fn bracket_max(&self) -> f64 {
        self.v_lam_hi.max(self.v_lam_lo).max(self.v_tau_hi).max(self.v_tau_lo)
    }

    pub fn max(&self) -> f64 {
        self.bracket_max()
            .max(self.stationarity_x)
            .max(self.stationarity_f)
            .max(self.balance)
    }
}

pub fn fixed_point_residuals(
    case: &GridCase,
    basis: &FlowBasis,
    sol: &DcopfSolution,
    load: &DVector<f64>,
) -> FixedPointResiduals {
    let fmax = case.fmax_vector();
    let flows = &basis.k * &sol.f;
    let v_lam_hi = (pos(&(&sol.lam_hi + &flows - &fmax)) - &sol.lam_hi).amax();
    let v_lam_lo = (pos(&(&sol.lam_lo - (&flows + &fmax))) - &sol.lam_lo).amax();
    let v_tau_hi = (pos(&(&sol.tau_hi + &sol.x - case.xmax_vector())) - &sol.tau_hi).amax();
    let v_tau_lo = (pos(&(&sol.tau_lo - &sol.x)) - &sol.tau_lo).amax();
    let stationarity_x = (case.cost_vector() - &sol.tau_lo + &sol.tau_hi - &sol.mu).amax();
    let stationarity_f = (basis.k.transpose() * (&sol.lam_hi - &sol.lam_lo)
        - basis.a_tilde.transpose() * &sol.mu)
        .amax();
    let balance = (&sol.x + &basis.a_tilde * &sol.f - load).amax();
    FixedPointResiduals {
        v_lam_hi,
        v_lam_lo,
        v_tau_hi,
        v_tau_lo,
        stationarity_x,
        stationarity_f,
        balance,
    }
}

/// True iff the bracket reformulation and the full KKT system both hold to
/// `tol`. The two formulations are provably equivalent; tests assert that
/// their verdicts agree on every sample.
pub fn kkt_fixed_point_check(
    case: &GridCase,
    basis: &FlowBasis,
    sol: &DcopfSolution,
    load: &DVector<f64>,
    tol: f64,
) -> bool {
    fixed_point_residuals(case, basis, sol, load).max() <= tol
        && kkt_residuals(case, basis, sol, load).max() <= tol
}

/// Loss value plus the upstream sensitivities fed into
/// [`IcnnModel::parameter_gradients`].
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub value: f64,
    pub d_output: f64,
    pub d_mu: DVector<f64>,
}

/// Squared-norm regression loss `(J_hat - J*)^2 + |mu_hat - mu*|^2`.
pub fn loss_regression(
    output: f64,
    mu_hat: &DVector<f64>,
    j_star: f64,
    mu_star: &DVector<f64>,
) -> LossBreakdown {
    let dj = output - j_star;
    let dmu = mu_hat - mu_star;
    LossBreakdown {
        value: dj * dj + dmu.norm_squared(),
        d_output: 2.0 * dj,
        d_mu: dmu * 2.0,
    }
}

/// KKT violation loss at a price estimate, with a candidate dispatch.
///
/// `candidate` supplies `(x, f)`; pass labels where available, otherwise the
/// reconstruction from the current prices (see [`loss_kkt_reconstructed`]).
/// Only the generator-dual terms depend differentiably on `mu_hat`: the line
/// duals come through the l1 program and are treated as constants, and the
/// candidate dispatch is likewise held fixed.
pub fn loss_kkt(
    case: &GridCase,
    basis: &FlowBasis,
    load: &DVector<f64>,
    mu_hat: &DVector<f64>,
    candidate: (&DVector<f64>, &DVector<f64>),
    nu: &DVector<f64>,
) -> LossBreakdown {
    let (x, f) = candidate;
    let fmax = case.fmax_vector();
    let (lam_lo, lam_hi) = split_line_duals(nu, &fmax);
    let deg = violation_degrees_with_duals(case, basis, load, mu_hat, x, f, &lam_lo, &lam_hi);

    // Gradient through tau_hi = [g]+ and tau_lo = [g]+ - g, g = mu - c.
    let c = case.cost_vector();
    let xmax = case.xmax_vector();
    let (tau_lo, tau_hi) = dual_from_prices(mu_hat, &c);
    let mut d_mu = DVector::zeros(mu_hat.len());
    for i in 0..mu_hat.len() {
        let p = if mu_hat[i] - c[i] > 0.0 { 1.0 } else { 0.0 };
        let g_hi = if tau_hi[i] + x[i] - xmax[i] > 0.0 { 1.0 } else { 0.0 };
        let g_lo = if tau_lo[i] - x[i] > 0.0 { 1.0 } else { 0.0 };
        d_mu[i] = 2.0 * deg.nu_tau_hi[i] * (g_hi - 1.0) * p
            + 2.0 * deg.nu_tau_lo[i] * (g_lo - 1.0) * (p - 1.0);
    }

    LossBreakdown { value: deg.squared_norm(), d_output: 0.0, d_mu }
}

/// [`loss_kkt`] with the candidate dispatch reconstructed from the current
/// prices (the unlabeled/helper path). The reconstruction and the recovered
/// duals are stop-gradient.
pub fn loss_kkt_reconstructed(
    model: &IcnnModel,
    case: &GridCase,
    basis: &FlowBasis,
    load: &DVector<f64>,
    eps_act: f64,
    config: &SolverConfig,
) -> Result<LossBreakdown> {
    let mu_hat = model.input_gradient(load)?;
    let (rec, nu) = solve_from_prices_lenient(case, basis, load, &mu_hat, eps_act, config);
    Ok(loss_kkt(case, basis, load, &mu_hat, (&rec.x, &rec.f), &nu))
}
