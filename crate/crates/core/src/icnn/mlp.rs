//! Plain fully-connected ReLU network mapping loads directly to dispatch.
//! This is the end-to-end comparison baseline; nothing constrains its
//! outputs, which is exactly the point of the comparison.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{matrix_from_rows, matrix_to_rows};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MlpModel {
    pub input_dim: usize,
    /// Widths of every layer after the input; the last is the output size.
    pub widths: Vec<usize>,
    pub w: Vec<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
}

pub struct MlpGrads {
    pub w: Vec<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
}

impl MlpModel {
    pub fn new(input_dim: usize, widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(!widths.is_empty());
        let mut w = Vec::with_capacity(widths.len());
        let mut b = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for &width in widths {
            let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            w.push(DMatrix::from_fn(width, fan_in, |_, _| dist.sample(rng)));
            b.push(DVector::zeros(width));
            fan_in = width;
        }
        Self { input_dim, widths: widths.to_vec(), w, b }
    }

    /// ReLU between layers, linear output layer.
    pub fn forward(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        if input.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: input.len(),
                context: "mlp input",
            });
        }
        let last = self.w.len() - 1;
        let mut h = input.clone();
        for (i, (w, b)) in self.w.iter().zip(&self.b).enumerate() {
            h = w * h + b;
            if i < last {
                h.apply(|v| *v = v.max(0.0));
            }
        }
        Ok(h)
    }

    /// Squared-error loss and its parameter gradient for one sample.
    pub fn loss_and_grads(
        &self,
        input: &DVector<f64>,
        target: &DVector<f64>,
    ) -> Result<(f64, MlpGrads)> {
        let last = self.w.len() - 1;
        let mut acts = vec![input.clone()];
        let mut masks: Vec<Vec<bool>> = Vec::new();
        for (i, (w, b)) in self.w.iter().zip(&self.b).enumerate() {
            let mut h = w * acts.last().unwrap() + b;
            if i < last {
                let mask: Vec<bool> = h.iter().map(|&v| v > 0.0).collect();
                h = DVector::from_fn(h.len(), |r, _| if mask[r] { h[r] } else { 0.0 });
                masks.push(mask);
            }
            acts.push(h);
        }
        let err = acts.last().unwrap() - target;
        let loss = err.norm_squared();

        let mut gw = Vec::with_capacity(self.w.len());
        let mut gb = Vec::with_capacity(self.b.len());
        let mut delta = err * 2.0;
        for i in (0..self.w.len()).rev() {
            gw.push(&delta * acts[i].transpose());
            gb.push(delta.clone());
            if i > 0 {
                let back = self.w[i].transpose() * &delta;
                delta = DVector::from_fn(back.len(), |r, _| {
                    if masks[i - 1][r] { back[r] } else { 0.0 }
                });
            }
        }
        gw.reverse();
        gb.reverse();
        Ok((loss, MlpGrads { w: gw, b: gb }))
    }

    pub fn step(&mut self, grads: &MlpGrads, lr: f64) {
        for (w, g) in self.w.iter_mut().zip(&grads.w) {
            *w -= g * lr;
        }
        for (b, g) in self.b.iter_mut().zip(&grads.b) {
            *b -= g * lr;
        }
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string(&SerializedMlp::from(self))?)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let raw: SerializedMlp = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        raw.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct SerializedMlp {
    version: u32,
    kind: String,
    input_dim: usize,
    widths: Vec<usize>,
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl From<&MlpModel> for SerializedMlp {
    fn from(m: &MlpModel) -> Self {
        Self {
            version: 1,
            kind: "mlp".into(),
            input_dim: m.input_dim,
            widths: m.widths.clone(),
            w: m.w.iter().map(matrix_to_rows).collect(),
            b: m.b.iter().map(|v| v.as_slice().to_vec()).collect(),
        }
    }
}

impl TryFrom<SerializedMlp> for MlpModel {
    type Error = Error;

    fn try_from(raw: SerializedMlp) -> Result<Self> {
        if raw.kind != "mlp" || raw.version != 1 {
            return Err(Error::InvalidCase("unsupported mlp model file".into()));
        }
        let mut w = Vec::new();
        let mut b = Vec::new();
        let mut fan_in = raw.input_dim;
        for (i, &width) in raw.widths.iter().enumerate() {
            w.push(matrix_from_rows(width, fan_in, &raw.w[i])?);
            b.push(DVector::from_column_slice(&raw.b[i]));
            fan_in = width;
        }
        Ok(MlpModel { input_dim: raw.input_dim, widths: raw.widths, w, b })
    }
}
