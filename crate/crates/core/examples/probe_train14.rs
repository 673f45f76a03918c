use gridprice_core::*;
use gridprice_core::grid::build_flow_basis;
use gridprice_core::lp::SolverConfig;
use gridprice_core::icnn::*;
use gridprice_core::pipeline::{evaluate, Predictor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let case = fixtures::synthetic_14bus();
    let basis = build_flow_basis(&case).unwrap();
    let solver = SolverConfig::default();
    let (train, _) = pipeline::generate_dataset(&case, &basis, 0.3, 2000, 42, &solver).unwrap();
    let (test, _) = pipeline::generate_dataset(&case, &basis, 0.3, 400, 777, &solver).unwrap();
    println!("train {} test {}", train.len(), test.len());

    let widths = vec![96usize, 96, 96, 14];
    let stages = [(400usize, 1e-2f64), (400, 3e-3), (300, 1e-3), (300, 3e-4), (200, 1e-4)];
    let mut model = IcnnModel::new(case.n, &widths, case.cost_vector(), &mut ChaCha8Rng::seed_from_u64(11));
    let t0 = Instant::now();
    for (i, (epochs, lr)) in stages.iter().enumerate() {
        let cfg = TrainConfig {
            epochs: *epochs, learning_rate: *lr, batch_size: 64, seed: 11 + i as u64,
            w_kkt: 0.0, hidden_widths: widths.clone(),
            optimizer: OptimizerKind::adam(),
            ..TrainConfig::default()
        };
        let rep = train_icnn(&mut model, &case, &basis, &train, &[], &cfg, &solver).unwrap();
        let ev = evaluate(&case, &basis, &Predictor::Icnn(&model), &test, 0.003, 0.05, &solver).unwrap();
        println!("stage {i} (lr {lr}): loss {:.3e} cum {:.0}s -> opt {:.1}% feas {:.1}%",
            rep.final_loss, t0.elapsed().as_secs_f64(), ev.optimality_pct, ev.feasibility_pct);
    }
}
