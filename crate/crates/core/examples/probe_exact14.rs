use gridprice_core::*;
use gridprice_core::activeset::*;
use gridprice_core::grid::build_flow_basis;
use gridprice_core::lp::{recover_flow_duals, SolverConfig};

fn main() {
    let case = fixtures::synthetic_14bus();
    let basis = build_flow_basis(&case).unwrap();
    let solver = SolverConfig::default();
    let (samples, _) = pipeline::generate_dataset(&case, &basis, 0.3, 500, 42, &solver).unwrap();
    let c = case.cost_vector();
    let fmax = case.fmax_vector();
    let mut gen_mismatch = 0; let mut line_mismatch = 0; let mut both = 0; let mut fails = 0;
    let mut line_detail = std::collections::BTreeMap::<String, usize>::new();
    for s in &samples {
        if s.degenerate { continue; }
        let truth = activity_from_solution(&case, &s.x, &(&basis.k * &s.f), 1e-7);
        let gens = detect_gen_active(&s.mu, &c, 1e-6);
        let nu = recover_flow_duals(&s.mu, &basis, &fmax, &solver).unwrap();
        let lines = detect_flow_active(&nu, &fmax, 1e-6);
        let g_bad = gens != truth.gen_status;
        let l_bad = lines != truth.line_status;
        if g_bad || l_bad { fails += 1; }
        if g_bad && !l_bad { gen_mismatch += 1; }
        if l_bad && !g_bad { line_mismatch += 1; }
        if g_bad && l_bad { both += 1; }
        if l_bad {
            for (e, (d, t)) in lines.iter().zip(&truth.line_status).enumerate() {
                if d != t {
                    *line_detail.entry(format!("line{e}: detected {d:?} true {t:?}")).or_default() += 1;
                }
            }
        }
    }
    println!("fails {fails}/500: gen-only {gen_mismatch}, line-only {line_mismatch}, both {both}");
    for (k, v) in line_detail { println!("  {k}: {v}"); }
}
