use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gridprice_core::dataset::{self, DataSample};
use gridprice_core::genbound;
use gridprice_core::grid::{build_flow_basis, FlowBasis, GridCase};
use gridprice_core::icnn::{
    train_icnn, train_mlp, IcnnModel, MlpModel, TrainConfig,
};
use gridprice_core::lp::{cost_curve, SolverConfig};
use gridprice_core::pipeline::{
    self, EvalReport, Predictor, UnseenConfig,
};
use gridprice_core::fixtures;

use crate::render;

/// Case files can be paths or `fixture:<name>` references to the bundled
/// synthetic systems.
fn load_case(spec: &str) -> Result<GridCase> {
    if let Some(name) = spec.strip_prefix("fixture:") {
        return fixtures::by_name(name)
            .with_context(|| format!("unknown fixture '{name}' (known: {})", fixtures::FIXTURE_NAMES.join(", ")));
    }
    Ok(GridCase::load(spec)?)
}

fn prepare(spec: &str) -> Result<(GridCase, FlowBasis)> {
    let case = load_case(spec)?;
    let basis = build_flow_basis(&case)?;
    Ok((case, basis))
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            Ok(serde_json::from_str(&text)?)
        }
        None => Ok(T::default()),
    }
}

fn write_json<T: serde::Serialize>(path: &Option<PathBuf>, value: &T) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, serde_json::to_string_pretty(value)?)?;
    }
    Ok(())
}

/// Reads helper loads from a JSONL file; each line needs only a "load" array
/// (full dataset records work too).
fn read_helper_loads(path: &Path) -> Result<Vec<DVector<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut loads = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)?;
        let arr = value
            .get("load")
            .and_then(|v| v.as_array())
            .context("helper record has no load array")?;
        let load: Vec<f64> = arr.iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect();
        if load.iter().any(|v| !v.is_finite()) {
            bail!("non-finite load entry in helper file");
        }
        loads.push(DVector::from_column_slice(&load));
    }
    Ok(loads)
}

#[derive(Args)]
pub struct GenDataArgs {
    /// Case file path or fixture:<name>.
    #[arg(long)]
    case: String,
    /// Relative load variation, e.g. 0.3 for +/-30%.
    #[arg(long, default_value_t = 0.3)]
    variation: f64,
    /// Number of load draws (infeasible draws are recorded and skipped).
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSONL path.
    #[arg(long)]
    out: PathBuf,
    /// Write only unlabeled loads (helper-set format; skips solving).
    #[arg(long, default_value_t = false)]
    unlabeled: bool,
    /// Optional JSON summary (draw/feasible/degenerate counts).
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

pub fn gen_data(args: GenDataArgs) -> Result<bool> {
    let (case, basis) = prepare(&args.case)?;
    if args.unlabeled {
        let nominal = case.nominal_load();
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let mut out = String::new();
        for _ in 0..args.count {
            let load: Vec<f64> = (0..case.n)
                .map(|i| {
                    let lo = (1.0 - args.variation) * nominal[i];
                    let hi = (1.0 + args.variation) * nominal[i];
                    if hi > lo { rng.gen_range(lo..hi) } else { nominal[i] }
                })
                .collect();
            out.push_str(&serde_json::to_string(&serde_json::json!({ "load": load }))?);
            out.push('\n');
        }
        std::fs::write(&args.out, out)?;
        println!("wrote {} unlabeled loads to {}", args.count, args.out.display());
        return Ok(true);
    }

    let solver = SolverConfig::default();
    let (samples, summary) = pipeline::generate_dataset(
        &case, &basis, args.variation, args.count, args.seed, &solver,
    )?;
    dataset::write_jsonl(&args.out, &samples)?;
    println!(
        "{} draws -> {} feasible ({} degenerate flagged), wrote {}",
        summary.draws,
        summary.feasible,
        summary.degenerate,
        args.out.display()
    );
    write_json(&args.summary_out, &summary)?;
    Ok(true)
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    case: String,
    /// Labeled dataset (JSONL from gen-data).
    #[arg(long)]
    data: PathBuf,
    /// Optional unlabeled helper loads (JSONL with "load" entries).
    #[arg(long)]
    helper: Option<PathBuf>,
    /// Training config JSON; flags below override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model_out: PathBuf,
    /// Loss-history JSON (one mean batch loss per epoch).
    #[arg(long)]
    history_out: Option<PathBuf>,
    /// Train the end-to-end baseline instead of the convex surrogate.
    #[arg(long, default_value_t = false)]
    end_to_end: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    w_kkt: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    hidden_widths: Option<Vec<usize>>,
    /// Use Adam instead of plain projected SGD.
    #[arg(long, default_value_t = false)]
    adam: bool,
}

pub fn train(args: TrainArgs) -> Result<bool> {
    let (case, basis) = prepare(&args.case)?;
    let samples = dataset::read_jsonl(&args.data)?;
    let mut cfg: TrainConfig = read_config(&args.config)?;
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.w_kkt {
        cfg.w_kkt = v;
    }
    if let Some(v) = &args.hidden_widths {
        cfg.hidden_widths = v.clone();
    }
    if args.adam {
        cfg.optimizer = gridprice_core::icnn::OptimizerKind::adam();
    }
    let solver = SolverConfig::default();

    let report = if args.end_to_end {
        let mut widths = cfg.hidden_widths.clone();
        *widths.last_mut().context("empty widths")? = case.n;
        let mut model = MlpModel::new(case.n, &widths, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let report = train_mlp(&mut model, &samples, &cfg)?;
        model.save(&args.model_out)?;
        report
    } else {
        let mut widths = cfg.hidden_widths.clone();
        *widths.last_mut().context("empty widths")? = case.n;
        let helper = match &args.helper {
            Some(p) => read_helper_loads(p)?,
            None => Vec::new(),
        };
        let mut model = IcnnModel::new(
            case.n,
            &widths,
            case.cost_vector(),
            &mut ChaCha8Rng::seed_from_u64(cfg.seed),
        );
        let report = train_icnn(&mut model, &case, &basis, &samples, &helper, &cfg, &solver)?;
        model.save(&args.model_out)?;
        report
    };

    println!(
        "trained {} epochs on {} samples; final mean batch loss {:.6e}",
        report.epochs_run, report.labeled_used, report.final_loss
    );
    write_json(&args.history_out, &report)?;
    Ok(report.final_loss.is_finite())
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    case: String,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// icnn or end-to-end (must match the model file).
    #[arg(long, default_value = "icnn")]
    mode: String,
    /// Relative mismatch allowed when classifying feasibility.
    #[arg(long, default_value_t = 0.003)]
    mismatch_tol: f64,
    /// Activity threshold for the price-driven reconstruction.
    #[arg(long, default_value_t = 0.05)]
    eps_act: f64,
    /// Skip samples flagged degenerate.
    #[arg(long, default_value_t = false)]
    skip_degenerate: bool,
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// Exit nonzero when the optimality percentage falls below this.
    #[arg(long)]
    min_optimality_pct: Option<f64>,
}

pub fn eval(args: EvalArgs) -> Result<bool> {
    let (case, basis) = prepare(&args.case)?;
    let mut samples = dataset::read_jsonl(&args.data)?;
    let mut skipped = 0;
    if args.skip_degenerate {
        let before = samples.len();
        samples.retain(|s| !s.degenerate);
        skipped = before - samples.len();
    }
    let solver = SolverConfig::default();
    let mut report: EvalReport = match args.mode.as_str() {
        "icnn" => {
            let model = IcnnModel::load(&args.model)?;
            pipeline::evaluate(
                &case,
                &basis,
                &Predictor::Icnn(&model),
                &samples,
                args.mismatch_tol,
                args.eps_act,
                &solver,
            )?
        }
        "end-to-end" => {
            let model = MlpModel::load(&args.model)?;
            pipeline::evaluate(
                &case,
                &basis,
                &Predictor::EndToEnd(&model),
                &samples,
                args.mismatch_tol,
                args.eps_act,
                &solver,
            )?
        }
        other => bail!("unknown mode '{other}' (use icnn or end-to-end)"),
    };
    report.skipped_degenerate = skipped;
    print!("{}", render::eval_report(&report));
    write_json(&args.report_out, &report)?;
    match args.min_optimality_pct {
        Some(min) => Ok(report.optimality_pct >= min),
        None => Ok(true),
    }
}

#[derive(Args)]
pub struct AuditArgs {
    #[arg(long)]
    case: String,
    #[arg(long)]
    model: PathBuf,
    /// Labeled dataset on which the model is supposed to be well-trained.
    #[arg(long)]
    data: PathBuf,
    /// Training config used (defines the loss for the well-trained check).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hull trial points per region.
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Gradient-constancy tolerance per region.
    #[arg(long, default_value_t = 1e-3)]
    tol_grad: f64,
    /// Well-trained threshold; default 1e-6 per sample.
    #[arg(long)]
    well_trained_tol: Option<f64>,
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(serde::Serialize)]
pub struct AuditReport {
    pub well_trained: bool,
    pub training_loss: f64,
    pub regions: Vec<genbound::SameRegionReport>,
    pub regions_skipped: usize,
    pub unseen: genbound::UnseenRegionReport,
    pub passed: bool,
}

/// Random convex combinations of `points`, seeded.
fn hull_samples(
    points: &[DVector<f64>],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<DVector<f64>> {
    let n = points.len();
    (0..count)
        .map(|_| {
            let mut weights: Vec<f64> = (0..n).map(|_| -f64::ln(rng.gen_range(1e-12..1.0))).collect();
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }
            let mut p = DVector::zeros(points[0].len());
            for (w, point) in weights.iter().zip(points) {
                p += point * *w;
            }
            p
        })
        .collect()
}

pub fn audit(args: AuditArgs) -> Result<bool> {
    let (case, basis) = prepare(&args.case)?;
    let model = IcnnModel::load(&args.model)?;
    let samples: Vec<DataSample> = dataset::read_jsonl(&args.data)?
        .into_iter()
        .filter(|s| !s.degenerate)
        .collect();
    if samples.is_empty() {
        bail!("dataset has no non-degenerate samples");
    }
    let cfg: TrainConfig = read_config(&args.config)?;
    let solver = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    let (well_trained, training_loss) = genbound::well_trained_check(
        &model,
        &case,
        &basis,
        &samples,
        &cfg,
        &solver,
        args.well_trained_tol,
    )?;

    let mut regions = Vec::new();
    let mut regions_skipped = 0;
    for region in genbound::fingerprint_regions(&samples) {
        if region.samples.len() < 2 {
            regions_skipped += 1;
            continue;
        }
        let members: Vec<DataSample> =
            region.samples.iter().map(|&i| samples[i].clone()).collect();
        let points: Vec<DVector<f64>> = members.iter().map(|s| s.load.clone()).collect();
        let trials = hull_samples(&points, args.trials, &mut rng);
        match genbound::same_region_check(
            &model, &case, &basis, &members, &trials, &cfg, &solver, args.tol_grad,
        ) {
            Ok(report) => regions.push(report),
            Err(gridprice_core::Error::PreconditionFailed(_)) => regions_skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }

    let train_points: Vec<DVector<f64>> = samples.iter().map(|s| s.load.clone()).collect();
    let test_points = hull_samples(&train_points, args.trials, &mut rng);
    let unseen = genbound::unseen_region_audit(&model, &train_points, &test_points, &solver)?;

    let passed = well_trained
        && !regions.is_empty()
        && regions.iter().all(|r| r.passed)
        && unseen.tested > 0
        && unseen.contained == unseen.tested;
    let report = AuditReport {
        well_trained,
        training_loss,
        regions,
        regions_skipped,
        unseen,
        passed,
    };
    print!("{}", render::audit_report(&report));
    write_json(&args.report_out, &report)?;
    Ok(report.passed)
}

#[derive(Args)]
pub struct UnseenArgs {
    #[arg(long)]
    case: String,
    /// Experiment config JSON (buses, ranges, counts, train settings).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// Require: with-helper optimality >= without-helper + 10 points, and
    /// both >= the end-to-end baseline.
    #[arg(long, default_value_t = false)]
    assert_directional: bool,
}

pub fn unseen(args: UnseenArgs) -> Result<bool> {
    let (case, basis) = prepare(&args.case)?;
    let mut cfg: UnseenConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let solver = SolverConfig::default();
    let report = pipeline::run_unseen_region_experiment(&case, &basis, &cfg, &solver)?;
    print!("{}", render::unseen_report(&report));
    write_json(&args.report_out, &report)?;
    if args.assert_directional {
        let wh = report.with_helper.optimality_pct;
        let wo = report.without_helper.optimality_pct;
        let e2e = report.end_to_end.optimality_pct;
        let ok = wh >= wo + 10.0 && wo >= e2e && wh >= e2e;
        if !ok {
            eprintln!("directional assertion failed: with={wh:.2} without={wo:.2} end-to-end={e2e:.2}");
        }
        return Ok(ok);
    }
    Ok(true)
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    case: String,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    eps_act: f64,
    #[arg(long)]
    report_out: Option<PathBuf>,
}

pub fn bench(args: BenchArgs) -> Result<bool> {
    let (case, basis) = prepare(&args.case)?;
    let model = IcnnModel::load(&args.model)?;
    let samples = dataset::read_jsonl(&args.data)?;
    let solver = SolverConfig::default();
    let report = pipeline::bench(&case, &basis, &model, &samples, args.eps_act, &solver)?;
    print!("{}", render::bench_report(&report));
    write_json(&args.report_out, &report)?;
    Ok(true)
}

#[derive(Args)]
pub struct CurveArgs {
    #[arg(long)]
    case: String,
    /// Optional surrogate model to overlay predicted costs.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Bus whose load is swept from 0 to t_max (others at zero).
    #[arg(long, default_value_t = 0)]
    bus: usize,
    #[arg(long, default_value_t = 3.0)]
    t_max: f64,
    #[arg(long, default_value_t = 60)]
    steps: usize,
    #[arg(long)]
    csv_out: PathBuf,
}

/// CSV columns: t, J_star, J_hat, slope_star, slope_hat (empty where
/// undefined: infeasible points and the first row's slopes).
pub fn curve(args: CurveArgs) -> Result<bool> {
    let (case, basis) = prepare(&args.case)?;
    if args.bus >= case.n {
        bail!("bus {} out of range", args.bus);
    }
    let solver = SolverConfig::default();
    let model = match &args.model {
        Some(p) => Some(IcnnModel::load(p)?),
        None => None,
    };
    let mut direction = DVector::zeros(case.n);
    direction[args.bus] = 1.0;
    let points = cost_curve(
        &case,
        &basis,
        &DVector::zeros(case.n),
        &direction,
        args.t_max,
        args.steps,
        &solver,
    )?;

    let mut csv = String::from("t,J_star,J_hat,slope_star,slope_hat\n");
    let mut prev: Option<(f64, Option<f64>, Option<f64>)> = None;
    for p in &points {
        let j_hat = match &model {
            Some(m) => {
                let mut load = DVector::zeros(case.n);
                load[args.bus] = p.t;
                Some(m.forward(&load)?)
            }
            None => None,
        };
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let (slope_star, slope_hat) = match &prev {
            Some((t0, j0, jh0)) if p.t > *t0 => {
                let s_star = match (j0, p.j) {
                    (Some(a), Some(b)) => Some((b - a) / (p.t - t0)),
                    _ => None,
                };
                let s_hat = match (jh0, j_hat) {
                    (Some(a), Some(b)) => Some((b - a) / (p.t - t0)),
                    _ => None,
                };
                (s_star, s_hat)
            }
            _ => (None, None),
        };
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            p.t,
            fmt(p.j),
            fmt(j_hat),
            fmt(slope_star),
            fmt(slope_hat)
        ));
        prev = Some((p.t, p.j, j_hat));
    }
    std::fs::write(&args.csv_out, csv)?;
    println!("wrote {} curve points to {}", points.len(), args.csv_out.display());
    Ok(true)
}
