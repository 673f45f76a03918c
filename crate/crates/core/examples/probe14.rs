use gridprice_core::*;
use gridprice_core::grid::build_flow_basis;
use gridprice_core::lp::SolverConfig;
use gridprice_core::genbound::fingerprint_regions;

fn main() {
    let case = fixtures::synthetic_14bus();
    let basis = build_flow_basis(&case).unwrap();
    let solver = SolverConfig::default();
    let (samples, summary) = pipeline::generate_dataset(&case, &basis, 0.3, 2000, 42, &solver).unwrap();
    println!("draws {} feasible {} infeasible {} degenerate {}", summary.draws, summary.feasible, summary.infeasible, summary.degenerate);
    let keep = dataset::non_degenerate(&samples);
    let regions = fingerprint_regions(&keep);
    println!("non-degenerate {} regions {}", keep.len(), regions.len());
    let mut sizes: Vec<usize> = regions.iter().map(|r| r.samples.len()).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    println!("region sizes: {:?}", &sizes[..sizes.len().min(12)]);
    // price stats
    if let Some(r) = regions.first() {
        println!("sample mu: {:?}", &r.mu);
    }
    // margin stats: distance of mu_i to c_i for non-marginal gens
    let c = case.cost_vector();
    let mut min_margin = f64::INFINITY;
    for s in keep.iter().take(200) {
        for i in 0..case.n {
            let gap = (s.mu[i] - c[i]).abs();
            if gap > 1e-7 { min_margin = min_margin.min(gap); }
        }
    }
    println!("min nonzero |mu - c| margin over 200 samples: {min_margin:.4}");
}
