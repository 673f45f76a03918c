//! Machine checks of the generalization properties of a trained convex
//! surrogate.
//!
//! Two facts about convex piecewise-linear fits are operationalized here:
//! if a model reproduces a common gradient on a set of points, it has that
//! same gradient everywhere in their convex hull; and for any point in the
//! hull, convexity inequalities against the training points confine the
//! model's gradient to a polytope that is bounded as soon as the points
//! affinely span the load space. Both checks run on the model's own
//! gradients, which is the level at which the statements are literally true.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataset::DataSample;
use crate::error::{Error, Result};
use crate::grid::{FlowBasis, GridCase};
use crate::icnn::{total_loss, IcnnModel, TrainConfig};
use crate::lp::{solve_lp, LpProblem, LpStatus, SolverConfig};

/// Group of samples sharing one rounded price vector, i.e. one LP region.
#[derive(Debug, Clone, Serialize)]
pub struct RegionFingerprint {
    /// Canonical prices (rounded to the fingerprint resolution).
    pub mu: Vec<f64>,
    /// Indices of the member samples, ascending.
    pub samples: Vec<usize>,
}

pub const FINGERPRINT_RESOLUTION: f64 = 1e-6;

/// Groups samples by rounded prices; regions are ordered by their first
/// sample index so the output is deterministic.
pub fn fingerprint_regions(samples: &[DataSample]) -> Vec<RegionFingerprint> {
    fingerprint_regions_with(samples, FINGERPRINT_RESOLUTION)
}

pub fn fingerprint_regions_with(samples: &[DataSample], resolution: f64) -> Vec<RegionFingerprint> {
    let mut regions: Vec<(Vec<i64>, RegionFingerprint)> = Vec::new();
    for (idx, s) in samples.iter().enumerate() {
        let key: Vec<i64> = s.mu.iter().map(|&v| (v / resolution).round() as i64).collect();
        match regions.iter_mut().find(|(k, _)| *k == key) {
            Some((_, region)) => region.samples.push(idx),
            None => {
                let mu = key.iter().map(|&k| k as f64 * resolution).collect();
                regions.push((key, RegionFingerprint { mu, samples: vec![idx] }));
            }
        }
    }
    regions.into_iter().map(|(_, r)| r).collect()
}

/// LP feasibility test for `l_new` being a convex combination of `points`;
/// returns the coefficients when it is.
pub fn hull_membership(
    points: &[DVector<f64>],
    l_new: &DVector<f64>,
    config: &SolverConfig,
) -> Result<(bool, Option<DVector<f64>>)> {
    if points.is_empty() {
        return Err(Error::PreconditionFailed("hull test needs at least one point".into()));
    }
    let n = l_new.len();
    let count = points.len();
    let mut a = DMatrix::zeros(n + 1, count);
    for (j, p) in points.iter().enumerate() {
        a.view_mut((0, j), (n, 1)).copy_from(p);
        a[(n, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(l_new);
    rhs[n] = 1.0;
    let problem = LpProblem {
        objective: DVector::zeros(count),
        a,
        rhs,
        lower: DVector::zeros(count),
        upper: DVector::from_element(count, f64::INFINITY),
    };
    let sol = solve_lp(&problem, config)?;
    match sol.status {
        LpStatus::Optimal => {
            // The simplex certifies feasibility to its own tolerance, which
            // is tighter than the 1e-8 contract here.
            Ok((true, Some(sol.x)))
        }
        _ => Ok((false, None)),
    }
}

/// A model is well-trained when its configured training loss over the
/// dataset is below `tol` (default `1e-6 * len`). Both theorem checks state
/// this as their hypothesis.
pub fn well_trained_check(
    model: &IcnnModel,
    case: &GridCase,
    basis: &FlowBasis,
    samples: &[DataSample],
    cfg: &TrainConfig,
    solver: &SolverConfig,
    tol: Option<f64>,
) -> Result<(bool, f64)> {
    if samples.is_empty() {
        return Ok((true, 0.0));
    }
    let tol = tol.unwrap_or(1e-6 * samples.len() as f64);
    let loss = total_loss(model, case, basis, samples, cfg, solver)?;
    Ok((loss < tol, loss))
}

#[derive(Debug, Clone, Serialize)]
pub struct SameRegionReport {
    pub region_mu: Vec<f64>,
    pub achieved_loss: f64,
    pub trial_points: usize,
    /// Largest deviation of a trial gradient from the reference gradient.
    pub max_gradient_deviation: f64,
    /// Largest violation of `g(sum a_i l_i) = sum a_i g(l_i)`.
    pub max_linearity_error: f64,
    pub tol_grad: f64,
    pub passed: bool,
}

/// Gradient-constancy check over the convex hull of one region's samples.
///
/// Preconditions (the theorem's hypotheses): all samples share a price
/// fingerprint, the model is well-trained on them, and every trial point
/// passes the hull test. Violations return `PreconditionFailed` rather than
/// a failed report.
#[allow(clippy::too_many_arguments)]
pub fn same_region_check(
    model: &IcnnModel,
    case: &GridCase,
    basis: &FlowBasis,
    region_samples: &[DataSample],
    trial_points: &[DVector<f64>],
    cfg: &TrainConfig,
    solver: &SolverConfig,
    tol_grad: f64,
) -> Result<SameRegionReport> {
    if region_samples.is_empty() {
        return Err(Error::PreconditionFailed("region has no samples".into()));
    }
    let regions = fingerprint_regions(region_samples);
    if regions.len() != 1 {
        return Err(Error::PreconditionFailed(format!(
            "samples span {} fingerprints, expected one region",
            regions.len()
        )));
    }
    let (ok, achieved_loss) =
        well_trained_check(model, case, basis, region_samples, cfg, solver, None)?;
    if !ok {
        return Err(Error::PreconditionFailed(format!(
            "model is not well-trained on the region (loss {achieved_loss:.3e})"
        )));
    }

    let points: Vec<DVector<f64>> = region_samples.iter().map(|s| s.load.clone()).collect();
    let reference = model.input_gradient(&points[0])?;
    let values: Vec<f64> = region_samples
        .iter()
        .map(|s| model.forward(&s.load))
        .collect::<Result<_>>()?;

    let mut max_dev: f64 = 0.0;
    let mut max_lin: f64 = 0.0;
    for l_new in trial_points {
        let (inside, alpha) = hull_membership(&points, l_new, solver)?;
        if !inside {
            return Err(Error::PreconditionFailed(
                "trial point lies outside the region hull".into(),
            ));
        }
        let grad = model.input_gradient(l_new)?;
        max_dev = max_dev.max((&grad - &reference).amax());
        // Linearity: the model value must interpolate the sample values.
        let alpha = alpha.unwrap();
        let combo: f64 = values.iter().zip(alpha.iter()).map(|(v, a)| v * a).sum();
        max_lin = max_lin.max((model.forward(l_new)? - combo).abs());
    }

    Ok(SameRegionReport {
        region_mu: regions[0].mu.clone(),
        achieved_loss,
        trial_points: trial_points.len(),
        max_gradient_deviation: max_dev,
        max_linearity_error: max_lin,
        tol_grad,
        passed: max_dev <= tol_grad,
    })
}

/// Half-space system confining the gradient at `l_new`, one inequality per
/// training point: `(l_new - l_i) . mu <= (l_new - l_i) . mu_i`.
#[derive(Debug, Clone)]
pub struct GradientPolytope {
    /// Rows of the half-space normals.
    pub normals: DMatrix<f64>,
    pub offsets: DVector<f64>,
    pub l_new: DVector<f64>,
    /// Per-coordinate `[min, max]` over the polytope.
    pub coordinate_bounds: Vec<(f64, f64)>,
    pub bounded: bool,
}

impl GradientPolytope {
    pub fn contains(&self, mu: &DVector<f64>, slack: f64) -> bool {
        let vals = &self.normals * mu;
        (0..vals.len()).all(|i| vals[i] <= self.offsets[i] + slack)
    }
}

/// Builds the gradient polytope from training points and their model
/// gradients, and certifies boundedness by maximizing each coordinate in
/// both directions.
///
/// Hypotheses checked: at least `n + 1` points that do not lie in a lower
/// dimensional affine subspace ([`Error::DegenerateSpan`] otherwise).
pub fn gradient_polytope(
    points: &[DVector<f64>],
    gradients: &[DVector<f64>],
    l_new: &DVector<f64>,
    config: &SolverConfig,
) -> Result<GradientPolytope> {
    let n = l_new.len();
    if points.len() != gradients.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: gradients.len(),
            context: "gradient list",
        });
    }
    if points.len() < n + 1 {
        return Err(Error::PreconditionFailed(format!(
            "need at least {} points, got {}",
            n + 1,
            points.len()
        )));
    }
    // Affine span: rank of the centered point matrix must be n.
    let mut centered = DMatrix::zeros(n, points.len() - 1);
    for (j, p) in points.iter().skip(1).enumerate() {
        centered.column_mut(j).copy_from(&(p - &points[0]));
    }
    let svd = centered.svd(false, false);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > smax * 1e-10 && s > 1e-14)
        .count();
    if rank < n {
        return Err(Error::DegenerateSpan { rank, needed: n });
    }

    // Gradient monotonicity of a convex map: (g_i - mu) . (l_i - l_new) >= 0,
    // i.e. mu . (l_i - l_new) <= g_i . (l_i - l_new).
    let count = points.len();
    let mut normals = DMatrix::zeros(count, n);
    let mut offsets = DVector::zeros(count);
    for (i, (p, g)) in points.iter().zip(gradients).enumerate() {
        let normal = p - l_new;
        offsets[i] = normal.dot(g);
        normals.row_mut(i).copy_from(&normal.transpose());
    }

    // Boundedness: max +/- e_j . mu over the polytope, via the LP
    // `normals mu + s = offsets, s >= 0` with free mu.
    let mut coordinate_bounds = Vec::with_capacity(n);
    let mut bounded = true;
    for j in 0..n {
        let mut bounds_j = [0.0f64; 2];
        for (dir_idx, sign) in [(0usize, -1.0f64), (1usize, 1.0f64)] {
            let mut a = DMatrix::zeros(count, n + count);
            a.view_mut((0, 0), (count, n)).copy_from(&normals);
            a.view_mut((0, n), (count, count))
                .copy_from(&DMatrix::identity(count, count));
            let mut objective = DVector::zeros(n + count);
            // Maximize sign * mu_j, i.e. minimize -sign * mu_j.
            objective[j] = -sign;
            let mut lower = DVector::from_element(n + count, f64::NEG_INFINITY);
            let upper = DVector::from_element(n + count, f64::INFINITY);
            for s in 0..count {
                lower[n + s] = 0.0;
            }
            let problem = LpProblem { objective, a, rhs: offsets.clone(), lower, upper };
            let sol = solve_lp(&problem, config)?;
            match sol.status {
                LpStatus::Optimal => bounds_j[dir_idx] = sign * -sol.objective,
                LpStatus::Unbounded => {
                    bounds_j[dir_idx] = sign * f64::INFINITY;
                    bounded = false;
                }
                LpStatus::Infeasible => {
                    return Err(Error::PreconditionFailed(
                        "gradient polytope is empty, which contradicts convexity".into(),
                    ))
                }
            }
        }
        coordinate_bounds.push((bounds_j[0], bounds_j[1]));
    }

    Ok(GradientPolytope {
        normals,
        offsets,
        l_new: l_new.clone(),
        coordinate_bounds,
        bounded,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct UnseenRegionReport {
    pub tested: usize,
    pub contained: usize,
    pub skipped_outside_hull: usize,
    pub all_bounded: bool,
    pub containment_rate: f64,
}

/// For each test point inside the hull of the training points: build the
/// gradient polytope and check that the model's own gradient lies in it
/// (slack 1e-6). Points outside the hull are skipped and counted.
pub fn unseen_region_audit(
    model: &IcnnModel,
    train_points: &[DVector<f64>],
    test_points: &[DVector<f64>],
    config: &SolverConfig,
) -> Result<UnseenRegionReport> {
    let gradients: Vec<DVector<f64>> = train_points
        .iter()
        .map(|p| model.input_gradient(p))
        .collect::<Result<_>>()?;
    let mut tested = 0;
    let mut contained = 0;
    let mut skipped = 0;
    let mut all_bounded = true;
    for l_new in test_points {
        let (inside, _) = hull_membership(train_points, l_new, config)?;
        if !inside {
            skipped += 1;
            continue;
        }
        let polytope = gradient_polytope(train_points, &gradients, l_new, config)?;
        all_bounded &= polytope.bounded;
        let mu = model.input_gradient(l_new)?;
        tested += 1;
        if polytope.contains(&mu, 1e-6) {
            contained += 1;
        }
    }
    Ok(UnseenRegionReport {
        tested,
        contained,
        skipped_outside_hull: skipped,
        all_bounded,
        containment_rate: if tested > 0 { contained as f64 / tested as f64 } else { 1.0 },
    })
}
