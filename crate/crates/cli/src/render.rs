//! Aligned-column text views of the report structures. JSON sidecars carry
//! the full data; these are for terminals.

use gridprice_core::pipeline::{BenchReport, EvalReport, UnseenExperimentReport};

use crate::commands::AuditReport;

pub fn eval_report(r: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("mode: {:?}   samples: {}", r.mode, r.total));
    if r.skipped_degenerate > 0 {
        out.push_str(&format!("   (skipped {} degenerate)", r.skipped_degenerate));
    }
    out.push('\n');
    out.push_str(&format!(
        "{:<22} {:>8} {:>9}\n",
        "bucket", "count", "percent"
    ));
    for (name, count, pct) in [
        ("optimal", r.optimal, r.optimality_pct),
        ("feasible (suboptimal)", r.feasible_suboptimal, 0.0),
        ("infeasible", r.infeasible, r.infeasibility_pct),
    ] {
        if name == "feasible (suboptimal)" {
            out.push_str(&format!(
                "{:<22} {:>8} {:>8.2}%\n",
                name,
                count,
                100.0 * count as f64 / r.total.max(1) as f64
            ));
        } else {
            out.push_str(&format!("{name:<22} {count:>8} {pct:>8.2}%\n"));
        }
    }
    out.push_str(&format!(
        "feasibility total: {:.2}%   mismatch tolerance: {}\n",
        r.feasibility_pct, r.mismatch_tol
    ));
    out.push_str(&format!(
        "violations: balance {}  gen-limits {}  line-limits {}\n",
        r.violations_nodal_balance, r.violations_gen_limits, r.violations_line_limits
    ));
    out.push_str(&format!(
        "timing per sample: inference {:.1} us (median {:.1}), exact solve {:.1} us (median {:.1})\n",
        r.timing.infer_mean_us,
        r.timing.infer_median_us,
        r.timing.solve_mean_us,
        r.timing.solve_median_us
    ));
    out
}

pub fn audit_report(r: &AuditReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "well-trained: {}   training loss {:.3e}\n",
        if r.well_trained { "yes" } else { "no" },
        r.training_loss
    ));
    out.push_str(&format!(
        "{:<10} {:>8} {:>14} {:>14} {:>8}\n",
        "region", "trials", "max grad dev", "max lin err", "passed"
    ));
    for (i, region) in r.regions.iter().enumerate() {
        out.push_str(&format!(
            "{:<10} {:>8} {:>14.3e} {:>14.3e} {:>8}\n",
            format!("R{i}"),
            region.trial_points,
            region.max_gradient_deviation,
            region.max_linearity_error,
            region.passed
        ));
    }
    if r.regions_skipped > 0 {
        out.push_str(&format!("regions skipped (too small / hypotheses unmet): {}\n", r.regions_skipped));
    }
    out.push_str(&format!(
        "gradient polytope: {} / {} contained ({} outside hull skipped), bounded: {}\n",
        r.unseen.contained, r.unseen.tested, r.unseen.skipped_outside_hull, r.unseen.all_bounded
    ));
    out.push_str(&format!("audit passed: {}\n", r.passed));
    out
}

pub fn unseen_report(r: &UnseenExperimentReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "regions found: {}   train/test/helper: {}/{}/{}\n",
        r.regions_found, r.train_samples, r.test_samples, r.helper_samples
    ));
    out.push_str(&format!(
        "{:<26} {:>12} {:>12} {:>12}\n",
        "predictor", "optimality", "feasibility", "infeasible"
    ));
    for (name, rep) in [
        ("icnn + helper set", &r.with_helper),
        ("icnn, no helper", &r.without_helper),
        ("end-to-end baseline", &r.end_to_end),
    ] {
        out.push_str(&format!(
            "{:<26} {:>11.2}% {:>11.2}% {:>11.2}%\n",
            name, rep.optimality_pct, rep.feasibility_pct, rep.infeasibility_pct
        ));
    }
    out
}

pub fn bench_report(r: &BenchReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8} {:>14} {:>14}\n",
        "sample", "simplex (us)", "surrogate (us)"
    ));
    for row in &r.rows {
        out.push_str(&format!(
            "{:<8} {:>14.1} {:>14.1}\n",
            row.index, row.simplex_us, row.surrogate_us
        ));
    }
    out.push_str(&format!(
        "mean: simplex {:.1} us, surrogate {:.1} us; median: {:.1} vs {:.1} (ratio {:.2}x)\n",
        r.simplex_mean_us,
        r.surrogate_mean_us,
        r.simplex_median_us,
        r.surrogate_median_us,
        r.median_speedup
    ));
    out
}
