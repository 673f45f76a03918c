use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataset::DataSample;
use crate::fixtures;
use crate::grid::build_flow_basis;
use crate::lp::{solve_dcopf, DcopfStatus, SolverConfig};

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn tiny_model(rng: &mut ChaCha8Rng) -> IcnnModel {
    random_model(3, &[5, 4], rng)
}

#[test]
fn forward_zero_model_is_zero() {
    let mut model = random_model(2, &[4, 3], &mut ChaCha8Rng::seed_from_u64(0));
    for w in &mut model.w_l {
        w.fill(0.0);
    }
    for w in &mut model.w_z {
        w.fill(0.0);
    }
    for b in &mut model.bias {
        b.fill(0.0);
    }
    for l in [[0.0, 0.0], [1.0, -2.0], [5.0, 3.0]] {
        let load = DVector::from_column_slice(&l);
        assert_eq!(model.forward(&load).unwrap(), 0.0);
        assert_eq!(model.input_gradient(&load).unwrap(), DVector::zeros(2));
    }
}

#[test]
fn forward_single_unit_hand_value() {
    // One hidden unit: relu(1 * l) scaled by c_out = 2; at l = 3 the output
    // is 6.
    let model = IcnnModel {
        input_dim: 1,
        widths: vec![1],
        w_l: vec![DMatrix::from_row_slice(1, 1, &[1.0])],
        w_z: vec![],
        bias: vec![DVector::zeros(1)],
        c_out: DVector::from_column_slice(&[2.0]),
    };
    let out = model.forward(&DVector::from_column_slice(&[3.0])).unwrap();
    assert_abs_diff_eq!(out, 6.0, epsilon = 1e-15);
}

#[test]
fn forward_dimension_mismatch_is_reported() {
    let model = tiny_model(&mut ChaCha8Rng::seed_from_u64(1));
    assert!(model.forward(&DVector::zeros(5)).is_err());
}

#[test]
fn random_models_are_midpoint_convex() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..20 {
        let model = random_model(3, &[6, 5, 4], &mut rng);
        assert!(model.is_convex_parameterization());
        for _ in 0..50 {
            let a = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let b = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let t: f64 = rng.gen_range(0.0..1.0);
            let mid = &a * t + &b * (1.0 - t);
            let lhs = model.forward(&mid).unwrap();
            let rhs = t * model.forward(&a).unwrap() + (1.0 - t) * model.forward(&b).unwrap();
            assert!(lhs <= rhs + 1e-9, "trial {trial}: {lhs} > {rhs}");
        }
    }
}

#[test]
fn forward_is_piecewise_linear_along_rays() {
    // Second difference vanishes except at finitely many kinks.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = random_model(2, &[6, 5], &mut rng);
    let origin = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
    let dir = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
    let h = 1e-3;
    let mut kinks = 0;
    for k in 1..200 {
        let t = k as f64 * h;
        let f = |s: f64| model.forward(&(&origin + &dir * s)).unwrap();
        let second = f(t + h) - 2.0 * f(t) + f(t - h);
        if second.abs() > 1e-10 {
            kinks += 1;
        }
    }
    assert!(kinks < 20, "too many nonlinear stations: {kinks}");
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    'outer: for _ in 0..80 {
        let model = random_model(3, &[6, 5, 4], &mut rng);
        let load = DVector::from_fn(3, |_, _| rng.gen_range(-1.5..1.5));
        let grad = model.input_gradient(&load).unwrap();
        let base_masks = model.forward_cached(&load).unwrap().masks;
        for i in 0..3 {
            let eps = 1e-6 * (1.0 + load[i].abs());
            let mut hi = load.clone();
            hi[i] += eps;
            let mut lo = load.clone();
            lo[i] -= eps;
            // Skip kink-straddling samples: the contract is away from kinks.
            let hi_cache = model.forward_cached(&hi).unwrap();
            let lo_cache = model.forward_cached(&lo).unwrap();
            if hi_cache.masks != base_masks || lo_cache.masks != base_masks {
                continue 'outer;
            }
            let fd = (hi_cache.output - lo_cache.output) / (2.0 * eps);
            let denom = 1.0 + fd.abs();
            assert!(
                (fd - grad[i]).abs() / denom <= 1e-5,
                "component {i}: fd {fd} vs analytic {}",
                grad[i]
            );
        }
        checked += 1;
    }
    assert!(checked >= 50, "only {checked} mask-stable samples");
}

#[test]
fn input_gradient_constant_within_region() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = random_model(2, &[5, 5], &mut rng);
    let load = DVector::from_column_slice(&[0.37, -0.81]);
    let dir = DVector::from_column_slice(&[1.0, 0.4]);
    let base = model.forward_cached(&load).unwrap();
    let g0 = model.input_gradient(&load).unwrap();
    let mut steps = 0;
    for k in 1..=20 {
        let p = &load + &dir * (1e-5 * k as f64);
        let cache = model.forward_cached(&p).unwrap();
        if cache.masks != base.masks {
            break; // crossed a kink; the claim is per-region
        }
        let g = model.input_gradient(&p).unwrap();
        assert!((&g - &g0).amax() <= 1e-12);
        steps += 1;
    }
    assert!(steps > 0);
}

/// Composite loss used by the parameter finite-difference oracle: a fixed
/// quadratic in (J_hat, mu_hat) with arbitrary targets.
fn composite_loss(model: &IcnnModel, load: &DVector<f64>, j_t: f64, mu_t: &DVector<f64>) -> f64 {
    let cache = model.forward_cached(load).unwrap();
    let mu = model.input_gradient_cached(&cache);
    (cache.output - j_t).powi(2) + (mu - mu_t).norm_squared()
}

fn composite_upstreams(
    model: &IcnnModel,
    load: &DVector<f64>,
    j_t: f64,
    mu_t: &DVector<f64>,
) -> (f64, DVector<f64>) {
    let cache = model.forward_cached(load).unwrap();
    let mu = model.input_gradient_cached(&cache);
    (2.0 * (cache.output - j_t), (mu - mu_t) * 2.0)
}

/// Central finite difference of the composite loss w.r.t. one parameter,
/// with a mask-stability guard. Returns None at kinks.
fn fd_param(
    model: &IcnnModel,
    load: &DVector<f64>,
    j_t: f64,
    mu_t: &DVector<f64>,
    peek: impl Fn(&mut IcnnModel, f64),
) -> Option<f64> {
    let h = 1e-6;
    let mut hi = model.clone();
    peek(&mut hi, h);
    let mut lo = model.clone();
    peek(&mut lo, -h);
    let base_masks = model.forward_cached(load).unwrap().masks;
    if hi.forward_cached(load).unwrap().masks != base_masks
        || lo.forward_cached(load).unwrap().masks != base_masks
    {
        return None;
    }
    Some((composite_loss(&hi, load, j_t, mu_t) - composite_loss(&lo, load, j_t, mu_t)) / (2.0 * h))
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut models_checked = 0;
    for _ in 0..60 {
        let model = random_model(2, &[4, 3], &mut rng);
        let load = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let j_t: f64 = rng.gen_range(-1.0..1.0);
        let mu_t = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let (d_out, d_mu) = composite_upstreams(&model, &load, j_t, &mu_t);
        let (_, grads) = model.parameter_gradients(&load, d_out, &d_mu).unwrap();

        let mut compared = 0;
        let mut worst: f64 = 0.0;
        for li in 0..model.w_l.len() {
            for r in 0..model.w_l[li].nrows() {
                for c in 0..model.w_l[li].ncols() {
                    if let Some(fd) =
                        fd_param(&model, &load, j_t, &mu_t, |m, h| m.w_l[li][(r, c)] += h)
                    {
                        let rel = (fd - grads.w_l[li][(r, c)]).abs() / (1.0 + fd.abs());
                        worst = worst.max(rel);
                        compared += 1;
                    }
                }
            }
        }
        for zi in 0..model.w_z.len() {
            for r in 0..model.w_z[zi].nrows() {
                for c in 0..model.w_z[zi].ncols() {
                    if let Some(fd) =
                        fd_param(&model, &load, j_t, &mu_t, |m, h| m.w_z[zi][(r, c)] += h)
                    {
                        let rel = (fd - grads.w_z[zi][(r, c)]).abs() / (1.0 + fd.abs());
                        worst = worst.max(rel);
                        compared += 1;
                    }
                }
            }
        }
        for bi in 0..model.bias.len() {
            for r in 0..model.bias[bi].len() {
                if let Some(fd) = fd_param(&model, &load, j_t, &mu_t, |m, h| m.bias[bi][r] += h) {
                    let rel = (fd - grads.bias[bi][r]).abs() / (1.0 + fd.abs());
                    worst = worst.max(rel);
                    compared += 1;
                }
            }
        }
        if compared > 10 {
            assert!(worst <= 1e-4, "worst relative gradient error {worst}");
            models_checked += 1;
        }
    }
    assert!(models_checked >= 50, "only {models_checked} models checked");
}

#[test]
fn output_only_loss_reduces_to_plain_backprop() {
    // With d_mu = 0 the second-order path must not contribute.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = random_model(2, &[4, 3], &mut rng);
    let load = DVector::from_column_slice(&[0.3, -0.2]);
    let (_, g1) = model.parameter_gradients(&load, 1.0, &DVector::zeros(2)).unwrap();
    // Finite difference of the raw output w.r.t. one passthrough weight.
    let h = 1e-6;
    let mut hi = model.clone();
    hi.w_l[0][(1, 0)] += h;
    let mut lo = model.clone();
    lo.w_l[0][(1, 0)] -= h;
    let fd = (hi.forward(&load).unwrap() - lo.forward(&load).unwrap()) / (2.0 * h);
    assert_abs_diff_eq!(fd, g1.w_l[0][(1, 0)], epsilon = 1e-6);
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let model = tiny_model(&mut ChaCha8Rng::seed_from_u64(8));
    let load = DVector::from_column_slice(&[0.1, 0.2, -0.3]);
    let (_, grads) = model.parameter_gradients(&load, 0.0, &DVector::zeros(3)).unwrap();
    for g in grads.w_l.iter().chain(&grads.w_z) {
        assert_eq!(g.amax(), 0.0);
    }
    for g in &grads.bias {
        assert!(g.is_empty() || g.amax() == 0.0);
    }
}

#[test]
fn projection_is_idempotent_and_restores_convexity() {
    let mut model = tiny_model(&mut ChaCha8Rng::seed_from_u64(9));
    model.w_z[0][(0, 0)] = -0.5;
    assert!(!model.is_convex_parameterization());
    model.project();
    assert!(model.is_convex_parameterization());
    let snapshot = model.w_z.clone();
    model.project();
    assert_eq!(snapshot, model.w_z);
}

#[test]
fn serialization_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let model = random_model(3, &[5, 4], &mut ChaCha8Rng::seed_from_u64(10));
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let back = IcnnModel::load(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let load = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        assert_eq!(model.forward(&load).unwrap(), back.forward(&load).unwrap());
        assert_eq!(
            model.input_gradient(&load).unwrap(),
            back.input_gradient(&load).unwrap()
        );
    }
}

#[test]
fn dual_from_prices_bracket_examples() {
    let c = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
    // mu = c: both dual vectors vanish.
    let (lo, hi) = dual_from_prices(&c, &c);
    assert_eq!(lo.amax(), 0.0);
    assert_eq!(hi.amax(), 0.0);
    // mu = (2,2,2): tau_hi = (1,0,0), tau_lo = (0,0,1).
    let mu = DVector::from_element(3, 2.0);
    let (lo, hi) = dual_from_prices(&mu, &c);
    assert_eq!(hi.as_slice(), &[1.0, 0.0, 0.0]);
    assert_eq!(lo.as_slice(), &[0.0, 0.0, 1.0]);
    // Stationarity identity holds for arbitrary vectors.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let mu = DVector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0));
        let (lo, hi) = dual_from_prices(&mu, &c);
        assert!(lo.iter().all(|&v| v >= 0.0) && hi.iter().all(|&v| v >= 0.0));
        assert_abs_diff_eq!((&c - &lo + &hi - &mu).amax(), 0.0, epsilon = 1e-12);
    }
}

#[test]
fn violation_degrees_vanish_at_exact_optima() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in [fixtures::single_bus(), fixtures::triangle()] {
        let basis = build_flow_basis(&case).unwrap();
        let mut checked = 0;
        for _ in 0..80 {
            let load = DVector::from_fn(case.n, |_, _| rng.gen_range(0.0..0.9));
            let sol = solve_dcopf(&case, &basis, &load, &cfg()).unwrap();
            if sol.status != DcopfStatus::Optimal {
                continue;
            }
            let deg =
                violation_degrees(&case, &basis, &load, &sol.mu, &sol.x, &sol.f, &cfg()).unwrap();
            assert!(deg.max() <= 1e-6, "violation degrees {deg:?}");
            checked += 1;
        }
        assert!(checked >= 40);
    }
}

#[test]
fn violation_degree_responds_to_capacity_overrun() {
    // Pushing one generator a hair over its capacity moves exactly the
    // corresponding entry of the upper-bound violation.
    let case = fixtures::single_bus();
    let basis = build_flow_basis(&case).unwrap();
    let load = DVector::from_column_slice(&[1.5, 0.0, 0.0]);
    let sol = solve_dcopf(&case, &basis, &load, &cfg()).unwrap();
    let delta = 0.1;
    let mut x = sol.x.clone();
    x[0] = case.xmax[0] + delta;
    let deg = violation_degrees(&case, &basis, &load, &sol.mu, &x, &sol.f, &cfg()).unwrap();
    assert_abs_diff_eq!(deg.nu_tau_hi[0], delta, epsilon = 1e-9);
    assert_abs_diff_eq!(deg.nu_tau_hi[1], 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(deg.nu_tau_hi[2], 0.0, epsilon = 1e-9);
}

#[test]
fn violation_degrees_zero_load_zero_model() {
    let case = fixtures::single_bus();
    let basis = build_flow_basis(&case).unwrap();
    let zero3 = DVector::zeros(3);
    let zero2 = DVector::zeros(2);
    let deg = violation_degrees(&case, &basis, &zero3, &zero3, &zero3, &zero2, &cfg()).unwrap();
    assert_eq!(deg.max(), 0.0);
}

#[test]
fn fixed_point_and_kkt_agree_on_optima_and_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let case = fixtures::triangle();
    let basis = build_flow_basis(&case).unwrap();
    let tol = 1e-6;
    let mut optima = 0;
    while optima < 30 {
        let load = DVector::from_fn(3, |_, _| rng.gen_range(0.0..0.9));
        let sol = solve_dcopf(&case, &basis, &load, &cfg()).unwrap();
        if sol.status != DcopfStatus::Optimal {
            continue;
        }
        optima += 1;
        assert!(kkt_fixed_point_check(&case, &basis, &sol, &load, tol));
        let fp = fixed_point_residuals(&case, &basis, &sol, &load);
        let kkt = kkt_residuals(&case, &basis, &sol, &load);
        assert_eq!(fp.bracket_max() <= tol, kkt.bracket_equivalent_max() <= tol);

        // Random dual perturbation well above tolerance must fail both
        // formulations.
        let mut bad = sol.clone();
        let bump: f64 = rng.gen_range(0.1..1.0);
        match rng.gen_range(0..4) {
            0 => bad.tau_hi[rng.gen_range(0..3)] += bump,
            1 => bad.tau_lo[rng.gen_range(0..3)] += bump,
            2 => bad.lam_hi[rng.gen_range(0..3)] += bump,
            _ => bad.mu[rng.gen_range(0..3)] += bump,
        }
        assert!(!kkt_fixed_point_check(&case, &basis, &bad, &load, tol));
        let fp_bad = fixed_point_residuals(&case, &basis, &bad, &load);
        let kkt_bad = kkt_residuals(&case, &basis, &bad, &load);
        assert!(fp_bad.max() > tol && kkt_bad.max() > tol);
    }
}

#[test]
fn raising_dual_on_slack_line_fails_both_formulations() {
    let case = fixtures::single_bus();
    let basis = build_flow_basis(&case).unwrap();
    let load = DVector::from_column_slice(&[1.5, 0.0, 0.0]);
    let sol = solve_dcopf(&case, &basis, &load, &cfg()).unwrap();
    // Lines are far from their limits here.
    let mut bad = sol.clone();
    bad.lam_hi[0] += 1.0;
    let tol = 1e-6;
    assert!(kkt_fixed_point_check(&case, &basis, &sol, &load, tol));
    let fp = fixed_point_residuals(&case, &basis, &bad, &load);
    let kkt = kkt_residuals(&case, &basis, &bad, &load);
    assert!(fp.max() > tol, "bracket side missed the bad dual");
    assert!(kkt.max() > tol, "kkt side missed the bad dual");
}

#[test]
fn regression_loss_values() {
    let mu = DVector::from_column_slice(&[1.0, 2.0]);
    let exact = loss_regression(5.0, &mu, 5.0, &mu);
    assert_eq!(exact.value, 0.0);
    let off = loss_regression(6.0, &mu, 5.0, &mu);
    assert_eq!(off.value, 1.0);
    assert_eq!(off.d_output, 2.0);
    // Random sample: direct arithmetic.
    let mu_hat = DVector::from_column_slice(&[1.5, -0.5]);
    let l = loss_regression(2.0, &mu_hat, 3.5, &mu);
    assert_abs_diff_eq!(l.value, 2.25 + 0.25 + 6.25, epsilon = 1e-12);
}

#[test]
fn kkt_loss_zero_at_truth_and_positive_for_zero_model() {
    let case = fixtures::single_bus();
    let basis = build_flow_basis(&case).unwrap();
    let load = DVector::from_column_slice(&[1.5, 0.0, 0.0]);
    let sol = solve_dcopf(&case, &basis, &load, &cfg()).unwrap();
    let fmax = case.fmax_vector();
    let nu = crate::lp::recover_flow_duals(&sol.mu, &basis, &fmax, &cfg()).unwrap();
    let at_truth = loss_kkt(&case, &basis, &load, &sol.mu, (&sol.x, &sol.f), &nu);
    assert!(at_truth.value <= 1e-8, "loss at truth {}", at_truth.value);

    // Zero model: prices zero, every generator reads at-zero, the balance
    // cannot hold, and the imbalance shows up through nu_p.
    let mut zero = random_model(3, &[4, 3], &mut ChaCha8Rng::seed_from_u64(15));
    for w in &mut zero.w_l {
        w.fill(0.0);
    }
    for b in &mut zero.bias {
        b.fill(0.0);
    }
    let l = loss_kkt_reconstructed(&zero, &case, &basis, &load, 1e-6, &cfg()).unwrap();
    assert!(l.value > 0.1, "zero model should violate balance, loss {}", l.value);
}

#[test]
fn kkt_loss_gradient_matches_finite_differences() {
    // The differentiable path of the KKT loss runs through the generator
    // dual brackets; check it against finite differences in mu space.
    let case = fixtures::single_bus();
    let basis = build_flow_basis(&case).unwrap();
    let load = DVector::from_column_slice(&[1.5, 0.0, 0.0]);
    let sol = solve_dcopf(&case, &basis, &load, &cfg()).unwrap();
    let fmax = case.fmax_vector();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..30 {
        let mu = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..4.0));
        let nu = crate::lp::recover_flow_duals(&mu, &basis, &fmax, &cfg())
            .unwrap_or_else(|_| DVector::zeros(2));
        let l = loss_kkt(&case, &basis, &load, &mu, (&sol.x, &sol.f), &nu);
        for i in 0..3 {
            let h = 1e-7;
            let mut hi = mu.clone();
            hi[i] += h;
            let mut lo = mu.clone();
            lo[i] -= h;
            // Freeze nu across the perturbation (stop-gradient semantics).
            let lh = loss_kkt(&case, &basis, &load, &hi, (&sol.x, &sol.f), &nu);
            let ll = loss_kkt(&case, &basis, &load, &lo, (&sol.x, &sol.f), &nu);
            let fd = (lh.value - ll.value) / (2.0 * h);
            if (fd - l.d_mu[i]).abs() > 1e-5 * (1.0 + fd.abs()) {
                // Bracket kinks make one-sided derivatives differ; accept
                // when the analytic value matches either side.
                let fwd = (lh.value - l.value) / h;
                let bwd = (l.value - ll.value) / h;
                assert!(
                    (fwd - l.d_mu[i]).abs() <= 1e-4 * (1.0 + fwd.abs())
                        || (bwd - l.d_mu[i]).abs() <= 1e-4 * (1.0 + bwd.abs()),
                    "component {i}: fd {fd}, fwd {fwd}, bwd {bwd}, analytic {}",
                    l.d_mu[i]
                );
            }
        }
    }
}

fn single_bus_dataset(count: usize, lo: f64, hi: f64, seed: u64) -> Vec<DataSample> {
    let case = fixtures::single_bus();
    let basis = build_flow_basis(&case).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    while samples.len() < count {
        let t = rng.gen_range(lo..hi);
        let load = DVector::from_column_slice(&[t, 0.0, 0.0]);
        let sol = solve_dcopf(&case, &basis, &load, &cfg()).unwrap();
        if sol.status == DcopfStatus::Optimal {
            samples.push(DataSample::from_solution(load, &sol));
        }
    }
    samples
}

#[test]
fn zero_epochs_leave_model_unchanged() {
    let case = fixtures::single_bus();
    let basis = build_flow_basis(&case).unwrap();
    let samples = single_bus_dataset(5, 1.1, 1.9, 17);
    let mut model = random_model(3, &[6, 3], &mut ChaCha8Rng::seed_from_u64(18));
    let snapshot = model.clone();
    let cfg_train = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let report =
        train_icnn(&mut model, &case, &basis, &samples, &[], &cfg_train, &cfg()).unwrap();
    assert_eq!(report.loss_history.len(), 0);
    assert_eq!(model.w_l, snapshot.w_l);
    assert_eq!(model.w_z, snapshot.w_z);
    assert_eq!(model.bias, snapshot.bias);
}

#[test]
fn same_seed_gives_identical_trajectories() {
    let case = fixtures::single_bus();
    let basis = build_flow_basis(&case).unwrap();
    let samples = single_bus_dataset(24, 0.1, 2.9, 19);
    let cfg_train = TrainConfig {
        epochs: 12,
        batch_size: 8,
        learning_rate: 5e-3,
        seed: 7,
        ..TrainConfig::default()
    };
    let run = || {
        let mut model = IcnnModel::new(
            3,
            &[8, 3],
            fixtures::single_bus().cost_vector(),
            &mut ChaCha8Rng::seed_from_u64(cfg_train.seed),
        );
        let report =
            train_icnn(&mut model, &case, &basis, &samples, &[], &cfg_train, &cfg()).unwrap();
        (model, report)
    };
    let (m1, r1) = run();
    let (m2, r2) = run();
    assert_eq!(r1.loss_history, r2.loss_history);
    assert_eq!(m1.w_l, m2.w_l);
    assert_eq!(m1.w_z, m2.w_z);
    assert_eq!(m1.bias, m2.bias);
}

#[test]
fn training_reduces_loss_and_keeps_convexity() {
    let case = fixtures::single_bus();
    let basis = build_flow_basis(&case).unwrap();
    let samples = single_bus_dataset(60, 0.1, 2.9, 20);
    let mut model = IcnnModel::new(
        3,
        &[16, 16, 3],
        case.cost_vector(),
        &mut ChaCha8Rng::seed_from_u64(3),
    );
    let cfg_train = TrainConfig {
        epochs: 150,
        batch_size: 16,
        learning_rate: 3e-3,
        optimizer: OptimizerKind::adam(),
        w_kkt: 0.0,
        ..TrainConfig::default()
    };
    let report = train_icnn(&mut model, &case, &basis, &samples, &[], &cfg_train, &cfg()).unwrap();
    let first = report.loss_history[0];
    let last = report.final_loss;
    assert!(last < 0.2 * first, "loss did not drop: {first} -> {last}");
    assert!(model.is_convex_parameterization());
    // Mean price error on held-out middle-segment points.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut err = 0.0;
    for _ in 0..50 {
        let t = rng.gen_range(1.1..1.9);
        let load = DVector::from_column_slice(&[t, 0.0, 0.0]);
        let mu = model.input_gradient(&load).unwrap();
        err += (mu[0] - 2.0).abs() / 50.0;
    }
    assert!(err < 0.25, "mean middle-segment price error {err}");
}

#[test]
fn mlp_memorizes_tiny_dataset() {
    let case = fixtures::single_bus();
    let basis = build_flow_basis(&case).unwrap();
    let samples: Vec<DataSample> = [0.3, 0.8, 1.4, 2.0, 2.6]
        .iter()
        .map(|&t| {
            let load = DVector::from_column_slice(&[t, 0.0, 0.0]);
            let sol = solve_dcopf(&case, &basis, &load, &cfg()).unwrap();
            DataSample::from_solution(load, &sol)
        })
        .collect();
    let mut model = MlpModel::new(3, &[32, 32, 3], &mut ChaCha8Rng::seed_from_u64(23));
    let cfg_train = TrainConfig {
        epochs: 3000,
        batch_size: 5,
        learning_rate: 1e-2,
        optimizer: OptimizerKind::adam(),
        ..TrainConfig::default()
    };
    let report = train_mlp(&mut model, &samples, &cfg_train).unwrap();
    assert!(report.final_loss < 1e-4, "train loss {}", report.final_loss);
    // Zero model predicts the biases.
    let mut zero = MlpModel::new(3, &[4, 3], &mut ChaCha8Rng::seed_from_u64(24));
    for w in &mut zero.w {
        w.fill(0.0);
    }
    zero.b[1] = DVector::from_column_slice(&[0.4, 0.5, 0.6]);
    let out = zero.forward(&DVector::from_column_slice(&[1.0, 1.0, 1.0])).unwrap();
    assert_eq!(out.as_slice(), &[0.4, 0.5, 0.6]);
}
