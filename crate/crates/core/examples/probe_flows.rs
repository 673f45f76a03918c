use gridprice_core::*;
use gridprice_core::grid::build_flow_basis;
use gridprice_core::lp::SolverConfig;

fn main() {
    let case = fixtures::synthetic_14bus();
    let basis = build_flow_basis(&case).unwrap();
    let solver = SolverConfig::default();
    let (samples, summary) = pipeline::generate_dataset(&case, &basis, 0.3, 500, 42, &solver).unwrap();
    println!("feasible {} degenerate {}", summary.feasible, summary.degenerate);
    let m = case.m();
    let mut peak = vec![0.0f64; m];
    for s in &samples {
        let flows = &basis.k * &s.f;
        for e in 0..m { peak[e] = peak[e].max(flows[e].abs()); }
    }
    for (e, line) in case.lines.iter().enumerate() {
        println!("line {e:2} ({:2}->{:2}) fmax {:4.1}  peak|flow| {:6.3}  util {:5.2}", line.from, line.to, line.fmax, peak[e], peak[e]/line.fmax);
    }
    let keep = dataset::non_degenerate(&samples);
    let regions = genbound::fingerprint_regions(&keep);
    println!("regions {}", regions.len());
}
