//! Curve quality classifier: a per-timestep dense layer feeding a stack of
//! LSTM layers; the top layer's last hidden state goes through an affine
//! readout to a single logit (sigmoid = probability the case is accurate).

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::autograd::{Graph, ParamId, ParamSet, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Number of stacked LSTM layers.
pub const LSTM_LAYERS: usize = 3;

const FORGET_BIAS: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QcArchConfig {
    pub input_dim: usize,
    pub dense_dim: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
}

impl QcArchConfig {
    pub fn new(input_dim: usize) -> Self {
        Self { input_dim, dense_dim: 8, lstm_layers: LSTM_LAYERS, lstm_hidden: 16 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lstm_layers != LSTM_LAYERS {
            return Err(Error::invalid("lstm_layers", format!("must be {LSTM_LAYERS}")));
        }
        for (name, v) in [("input_dim", self.input_dim), ("dense_dim", self.dense_dim), ("lstm_hidden", self.lstm_hidden)] {
            if v == 0 {
                return Err(Error::invalid(name, "must be at least 1"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Lstm {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
pub struct QcNet {
    pub config: QcArchConfig,
    dense_w: ParamId,
    dense_b: ParamId,
    layers: Vec<Lstm>,
    head_w: ParamId,
    head_b: ParamId,
}

impl QcNet {
    pub fn init(config: &QcArchConfig, rng: &mut Rng) -> Result<(Self, ParamSet)> {
        Self::build(config, &mut |shape, fan_in| {
            let a = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-a..a)).collect())
        })
    }

    pub fn layout(config: &QcArchConfig) -> Result<(Self, ParamSet)> {
        Self::build(config, &mut |shape, _| Tensor::zeros(shape))
    }

    fn build(config: &QcArchConfig, init: &mut dyn FnMut(&[usize], usize) -> Tensor) -> Result<(Self, ParamSet)> {
        config.validate()?;
        let mut p = ParamSet::new();
        let hdim = config.lstm_hidden;
        let dense_w = p.push("dense.w", init(&[config.dense_dim, config.input_dim], config.input_dim));
        let dense_b = p.push("dense.b", Tensor::zeros(&[config.dense_dim]));
        let mut layers = Vec::new();
        for l in 0..config.lstm_layers {
            let input = if l == 0 { config.dense_dim } else { hdim };
            let wx = p.push(format!("lstm{l}.wx"), init(&[4 * hdim, input], hdim));
            let wh = p.push(format!("lstm{l}.wh"), init(&[4 * hdim, hdim], hdim));
            // gate order i, f, g, o; forget gate starts open so early frames reach the readout
            let mut bias = Tensor::zeros(&[4 * hdim]);
            bias.data[hdim..2 * hdim].fill(FORGET_BIAS);
            let b = p.push(format!("lstm{l}.b"), bias);
            layers.push(Lstm { wx, wh, b });
        }
        let head_w = p.push("head.w", init(&[1, hdim], hdim));
        let head_b = p.push("head.b", Tensor::zeros(&[1]));
        Ok((Self { config: config.clone(), dense_w, dense_b, layers, head_w, head_b }, p))
    }

    pub fn check_input(&self, seq: &[Vec<f64>]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::Empty("feature sequence".into()));
        }
        if let Some(row) = seq.iter().find(|r| r.len() != self.config.input_dim) {
            return Err(Error::Shape(format!(
                "feature dim {} does not match classifier input {}",
                row.len(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    /// Scalar logit for a `[T][D]` sequence.
    pub fn forward(&self, g: &mut Graph, seq: &[Vec<f64>]) -> Var {
        let hdim = self.config.lstm_hidden;
        let zeros = Tensor::zeros(&[hdim]);
        let mut h: Vec<Var> = (0..self.layers.len()).map(|_| g.input(zeros.clone())).collect();
        let mut c: Vec<Var> = (0..self.layers.len()).map(|_| g.input(zeros.clone())).collect();
        let (dw, db) = (g.param(self.dense_w), g.param(self.dense_b));
        let lw: Vec<(Var, Var, Var)> = self
            .layers
            .iter()
            .map(|l| (g.param(l.wx), g.param(l.wh), g.param(l.b)))
            .collect();
        for x in seq {
            let xv = g.input(Tensor::new(vec![x.len()], x.clone()));
            let z = g.matvec(dw, xv);
            let mut inp = g.add(z, db);
            for (l, &(wx, wh, b)) in lw.iter().enumerate() {
                let a = g.matvec(wx, inp);
                let r = g.matvec(wh, h[l]);
                let s = g.add(a, r);
                let gates = g.add(s, b);
                let i = g.slice(gates, 0, hdim);
                let i = g.sigmoid(i);
                let f = g.slice(gates, hdim, hdim);
                let f = g.sigmoid(f);
                let gg = g.slice(gates, 2 * hdim, hdim);
                let gg = g.tanh(gg);
                let o = g.slice(gates, 3 * hdim, hdim);
                let o = g.sigmoid(o);
                let fc = g.mul(f, c[l]);
                let ig = g.mul(i, gg);
                c[l] = g.add(fc, ig);
                let tc = g.tanh(c[l]);
                h[l] = g.mul(o, tc);
                inp = h[l];
            }
        }
        let (hw, hb) = (g.param(self.head_w), g.param(self.head_b));
        let top = *h.last().expect("at least one layer");
        let y = g.matvec(hw, top);
        g.add(y, hb)
    }
}
