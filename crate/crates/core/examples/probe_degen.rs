use gridprice_core::*;
use gridprice_core::grid::build_flow_basis;
use gridprice_core::lp::{SolverConfig, solve_lp, dcopf_problem};
use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() {
    let case = fixtures::synthetic_14bus();
    let basis = build_flow_basis(&case).unwrap();
    let solver = SolverConfig::default();
    let nominal = case.nominal_load();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = case.n; let nf = basis.dim(); let m = case.m();
    let mut found = 0;
    for _ in 0..400 {
        let load = DVector::from_fn(n, |i, _| {
            let lo = 0.7*nominal[i]; let hi = 1.3*nominal[i];
            if hi > lo { rng.gen_range(lo..hi) } else { nominal[i] }
        });
        let p = dcopf_problem(&case, &basis, &load);
        let sol = solve_lp(&p, &solver).unwrap();
        if sol.degenerate && found < 6 {
            found += 1;
            // which structural vars sit at bounds with zero reduced cost, or basic-at-bound
            for j in 0..p.num_vars() {
                let lo = p.lower[j]; let hi = p.upper[j];
                let at_lo = lo.is_finite() && (sol.x[j]-lo).abs() <= 1e-9;
                let at_hi = hi.is_finite() && (sol.x[j]-hi).abs() <= 1e-9;
                let d = sol.reduced_costs[j];
                let kind = if j < n { "gen" } else if j < n+nf { "f" } else { "s" };
                if (at_lo || at_hi) && d.abs() <= 1e-9 && lo < hi {
                    println!("sample {found}: {kind}{} at bound with zero reduced cost (val {:.6}, lo {lo:.3}, hi {hi:.3})", if j<n {j} else if j<n+nf {j-n} else {j-n-nf}, sol.x[j]);
                }
            }
        }
    }
    let _ = m;
    println!("done, showed {found}");
}
