//! Training loops: projected mini-batch descent for the convex surrogate and
//! plain descent for the end-to-end baseline.
//!
//! Determinism contract: the same seed gives bit-identical weight
//! trajectories and loss histories. Batch gradients are evaluated in
//! parallel but reduced in a fixed order.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{loss_kkt, loss_regression, LossBreakdown};
use super::{IcnnModel, MlpModel, ParamGrads};
use crate::activeset::solve_from_prices_lenient;
use crate::dataset::DataSample;
use crate::error::{Error, Result};
use crate::grid::{FlowBasis, GridCase};
use crate::lp::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Fixed-step projected gradient descent.
    Sgd,
    /// Adam with bias correction; projection still runs after every step.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Sgd
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight of the regression loss on labeled samples.
    pub w_regression: f64,
    /// Weight of the KKT violation loss (labeled and helper samples).
    pub w_kkt: f64,
    pub hidden_widths: Vec<usize>,
    /// Activity threshold used when the KKT loss reconstructs a candidate
    /// dispatch from the current prices.
    pub eps_act: f64,
    pub optimizer: OptimizerKind,
    /// Drop degenerate samples from the labeled set (their prices are one of
    /// several subgradients).
    pub exclude_degenerate: bool,
    /// Evaluate the KKT loss on labeled samples too, not only on helpers.
    pub kkt_on_labeled: bool,
    /// On labeled samples, take the KKT candidate dispatch from the labels
    /// instead of reconstructing it from the current prices.
    pub kkt_candidate_from_labels: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            w_regression: 1.0,
            w_kkt: 1.0,
            hidden_widths: vec![64, 64, 64, 64],
            eps_act: crate::activeset::DEFAULT_EPS_ACT,
            optimizer: OptimizerKind::Sgd,
            exclude_degenerate: true,
            kkt_on_labeled: true,
            kkt_candidate_from_labels: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub loss_history: Vec<f64>,
    pub final_loss: f64,
    pub epochs_run: usize,
    pub labeled_used: usize,
    pub helper_used: usize,
}

struct AdamState {
    m: ParamGrads,
    v: ParamGrads,
    t: usize,
}

fn adam_update(
    state: &mut AdamState,
    grads: &ParamGrads,
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
) -> ParamGrads {
    state.t += 1;
    let t = state.t as i32;
    let mut step = grads.clone();
    let update = |m: &mut f64, v: &mut f64, g: f64| -> f64 {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let mhat = *m / (1.0 - beta1.powi(t));
        let vhat = *v / (1.0 - beta2.powi(t));
        lr * mhat / (vhat.sqrt() + eps)
    };
    for (i, g) in grads.w_l.iter().enumerate() {
        for r in 0..g.nrows() {
            for c in 0..g.ncols() {
                step.w_l[i][(r, c)] =
                    update(&mut state.m.w_l[i][(r, c)], &mut state.v.w_l[i][(r, c)], g[(r, c)]);
            }
        }
    }
    for (i, g) in grads.w_z.iter().enumerate() {
        for r in 0..g.nrows() {
            for c in 0..g.ncols() {
                step.w_z[i][(r, c)] =
                    update(&mut state.m.w_z[i][(r, c)], &mut state.v.w_z[i][(r, c)], g[(r, c)]);
            }
        }
    }
    for (i, g) in grads.bias.iter().enumerate() {
        for r in 0..g.len() {
            step.bias[i][r] = update(&mut state.m.bias[i][r], &mut state.v.bias[i][r], g[(r, 0)]);
        }
    }
    step
}

/// Per-sample gradient work item: regression and/or KKT upstreams are merged
/// into a single backward pass.
fn sample_loss_and_grads(
    model: &IcnnModel,
    case: &GridCase,
    basis: &FlowBasis,
    load: &DVector<f64>,
    labels: Option<&DataSample>,
    cfg: &TrainConfig,
    solver: &SolverConfig,
    w_reg: f64,
    w_kkt: f64,
) -> Result<(f64, ParamGrads)> {
    let cache = model.forward_cached(load)?;
    let mu_hat = model.input_gradient_cached(&cache);

    let mut value = 0.0;
    let mut d_output = 0.0;
    let mut d_mu = DVector::zeros(model.input_dim);

    if let Some(sample) = labels {
        if w_reg != 0.0 {
            let LossBreakdown { value: v, d_output: dj, d_mu: dm } =
                loss_regression(cache.output, &mu_hat, sample.j, &sample.mu);
            value += w_reg * v;
            d_output += w_reg * dj;
            d_mu += dm * w_reg;
        }
    }

    if w_kkt != 0.0 {
        let use_labels = cfg.kkt_candidate_from_labels && labels.is_some();
        let (candidate_x, candidate_f, nu);
        if use_labels {
            let sample = labels.unwrap();
            candidate_x = sample.x.clone();
            candidate_f = sample.f.clone();
            nu = match crate::lp::recover_flow_duals(&mu_hat, basis, &case.fmax_vector(), solver)
            {
                Ok(v) => v,
                Err(_) => DVector::zeros(case.m()),
            };
        } else {
            let (rec, recovered) =
                solve_from_prices_lenient(case, basis, load, &mu_hat, cfg.eps_act, solver);
            candidate_x = rec.x;
            candidate_f = rec.f;
            nu = recovered;
        }
        let LossBreakdown { value: v, d_output: dj, d_mu: dm } =
            loss_kkt(case, basis, load, &mu_hat, (&candidate_x, &candidate_f), &nu);
        value += w_kkt * v;
        d_output += w_kkt * dj;
        d_mu += dm * w_kkt;
    }

    let (_, grads) = model.parameter_gradients(load, d_output, &d_mu)?;
    Ok((value, grads))
}

/// Projected mini-batch training of the convex surrogate.
///
/// Loss: `w_regression * L_R(labeled) + w_kkt * L_K(labeled and helper)`,
/// with `w_z` clamped to the nonnegative orthant after every step. Helper
/// samples are unlabeled loads visited once per epoch alongside the labeled
/// batches.
pub fn train_icnn(
    model: &mut IcnnModel,
    case: &GridCase,
    basis: &FlowBasis,
    labeled: &[DataSample],
    helper: &[DVector<f64>],
    cfg: &TrainConfig,
    solver: &SolverConfig,
) -> Result<TrainReport> {
    let labeled: Vec<&DataSample> = labeled
        .iter()
        .filter(|s| !(cfg.exclude_degenerate && s.degenerate))
        .collect();
    if labeled.is_empty() {
        return Err(Error::PreconditionFailed("labeled training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState {
        m: ParamGrads::zeros_like(model),
        v: ParamGrads::zeros_like(model),
        t: 0,
    };

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut labeled_idx: Vec<usize> = (0..labeled.len()).collect();
    let mut helper_idx: Vec<usize> = (0..helper.len()).collect();
    let batch = cfg.batch_size.max(1);
    let helper_batch = if helper.is_empty() {
        0
    } else {
        // Spread the helper set over the epoch's batches.
        let batches = labeled.len().div_ceil(batch);
        helper.len().div_ceil(batches).max(1)
    };

    for epoch in 0..cfg.epochs {
        labeled_idx.shuffle(&mut rng);
        helper_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        let mut helper_cursor = 0usize;

        for chunk in labeled_idx.chunks(batch) {
            let helper_slice: &[usize] = if helper_batch == 0 {
                &[]
            } else {
                let end = (helper_cursor + helper_batch).min(helper_idx.len());
                let s = &helper_idx[helper_cursor..end];
                helper_cursor = end;
                s
            };

            let denom_reg = chunk.len() as f64;
            let denom_kkt = (if cfg.kkt_on_labeled { chunk.len() } else { 0 }
                + helper_slice.len()) as f64;
            let w_reg = cfg.w_regression / denom_reg;
            let w_kkt_l = if cfg.kkt_on_labeled && denom_kkt > 0.0 {
                cfg.w_kkt / denom_kkt
            } else {
                0.0
            };
            let w_kkt_h = if denom_kkt > 0.0 { cfg.w_kkt / denom_kkt } else { 0.0 };

            // (is_helper, index) work items; evaluated in parallel, reduced
            // in deterministic order.
            let work: Vec<(bool, usize)> = chunk
                .iter()
                .map(|&i| (false, i))
                .chain(helper_slice.iter().map(|&i| (true, i)))
                .collect();
            let results: Vec<Result<(f64, ParamGrads)>> = work
                .par_iter()
                .map(|&(is_helper, i)| {
                    if is_helper {
                        sample_loss_and_grads(
                            model, case, basis, &helper[i], None, cfg, solver, 0.0, w_kkt_h,
                        )
                    } else {
                        sample_loss_and_grads(
                            model,
                            case,
                            basis,
                            &labeled[i].load,
                            Some(labeled[i]),
                            cfg,
                            solver,
                            w_reg,
                            w_kkt_l,
                        )
                    }
                })
                .collect();

            let mut batch_loss = 0.0;
            let mut grads = ParamGrads::zeros_like(model);
            for r in results {
                let (v, g) = r?;
                batch_loss += v;
                grads.add_scaled(&g, 1.0);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batches });
            }

            match cfg.optimizer {
                OptimizerKind::Sgd => model.step_projected(&grads, cfg.learning_rate),
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let step = adam_update(&mut adam, &grads, beta1, beta2, eps, cfg.learning_rate);
                    model.step_projected(&step, 1.0);
                }
            }
            epoch_loss += batch_loss;
            batches += 1;
        }
        history.push(epoch_loss / batches.max(1) as f64);
    }

    Ok(TrainReport {
        final_loss: history.last().copied().unwrap_or(f64::NAN),
        loss_history: history,
        epochs_run: cfg.epochs,
        labeled_used: labeled.len(),
        helper_used: helper.len(),
    })
}

/// Evaluates the configured training loss over a dataset without updating
/// the model; this is the quantity the well-trained definition refers to.
pub fn total_loss(
    model: &IcnnModel,
    case: &GridCase,
    basis: &FlowBasis,
    labeled: &[DataSample],
    cfg: &TrainConfig,
    solver: &SolverConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for sample in labeled {
        let (v, _) = sample_loss_and_grads(
            model,
            case,
            basis,
            &sample.load,
            Some(sample),
            cfg,
            solver,
            cfg.w_regression,
            if cfg.kkt_on_labeled { cfg.w_kkt } else { 0.0 },
        )?;
        total += v;
    }
    Ok(total)
}

/// Trains the end-to-end baseline `load -> dispatch` on squared error.
pub fn train_mlp(
    model: &mut MlpModel,
    labeled: &[DataSample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let labeled: Vec<&DataSample> = labeled
        .iter()
        .filter(|s| !(cfg.exclude_degenerate && s.degenerate))
        .collect();
    if labeled.is_empty() {
        return Err(Error::PreconditionFailed("labeled training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut idx: Vec<usize> = (0..labeled.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let batch = cfg.batch_size.max(1);
    let mut adam_m: Option<super::mlp::MlpGrads> = None;
    let mut adam_v: Option<super::mlp::MlpGrads> = None;
    let mut adam_t = 0usize;

    for epoch in 0..cfg.epochs {
        idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in idx.chunks(batch) {
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            let mut acc: Option<super::mlp::MlpGrads> = None;
            for &i in chunk {
                let (v, g) = model.loss_and_grads(&labeled[i].load, &labeled[i].x)?;
                batch_loss += v * scale;
                match &mut acc {
                    None => {
                        let mut g = g;
                        for w in &mut g.w {
                            *w *= scale;
                        }
                        for b in &mut g.b {
                            *b *= scale;
                        }
                        acc = Some(g);
                    }
                    Some(a) => {
                        for (aw, gw) in a.w.iter_mut().zip(&g.w) {
                            *aw += gw * scale;
                        }
                        for (ab, gb) in a.b.iter_mut().zip(&g.b) {
                            *ab += gb * scale;
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batches });
            }
            let mut step = acc.unwrap();
            if let OptimizerKind::Adam { beta1, beta2, eps } = cfg.optimizer {
                let m = adam_m.get_or_insert_with(|| zero_mlp_grads(model));
                let v = adam_v.get_or_insert_with(|| zero_mlp_grads(model));
                adam_t += 1;
                let t = adam_t as i32;
                let upd = |m: &mut f64, v: &mut f64, g: &mut f64| {
                    *m = beta1 * *m + (1.0 - beta1) * *g;
                    *v = beta2 * *v + (1.0 - beta2) * *g * *g;
                    let mhat = *m / (1.0 - beta1.powi(t));
                    let vhat = *v / (1.0 - beta2.powi(t));
                    *g = mhat / (vhat.sqrt() + eps);
                };
                for i in 0..step.w.len() {
                    for r in 0..step.w[i].nrows() {
                        for c in 0..step.w[i].ncols() {
                            upd(&mut m.w[i][(r, c)], &mut v.w[i][(r, c)], &mut step.w[i][(r, c)]);
                        }
                    }
                    for r in 0..step.b[i].len() {
                        upd(&mut m.b[i][r], &mut v.b[i][r], &mut step.b[i][r]);
                    }
                }
            }
            model.step(&step, cfg.learning_rate);
            epoch_loss += batch_loss;
            batches += 1;
        }
        history.push(epoch_loss / batches.max(1) as f64);
    }

    Ok(TrainReport {
        final_loss: history.last().copied().unwrap_or(f64::NAN),
        loss_history: history,
        epochs_run: cfg.epochs,
        labeled_used: labeled.len(),
        helper_used: 0,
    })
}

fn zero_mlp_grads(model: &MlpModel) -> super::mlp::MlpGrads {
    super::mlp::MlpGrads {
        w: model.w.iter().map(|m| nalgebra::DMatrix::zeros(m.nrows(), m.ncols())).collect(),
        b: model.b.iter().map(|v| DVector::zeros(v.len())).collect(),
    }
}
