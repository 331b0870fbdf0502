//! LSTM followed by a fully connected layer, with either a regression head
//! on the last hidden state or a per-step softmax head.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cell::{self, Activation, LstmCellParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    /// Outputs read from the final hidden state; mean squared error loss.
    Regression,
    /// Class scores at every step; mean cross-entropy loss.
    PerStepSoftmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub cell: LstmCellParams,
    /// `out x h`.
    pub fc_w: Array2<f64>,
    pub fc_b: Array1<f64>,
}

impl NetParams {
    pub fn zeros_like(other: &NetParams) -> Self {
        Self {
            cell: LstmCellParams::zeros(other.cell.hidden(), other.cell.input()),
            fc_w: Array2::zeros(other.fc_w.raw_dim()),
            fc_b: Array1::zeros(other.fc_b.len()),
        }
    }

    pub fn buffers(&self) -> [&[f64]; 5] {
        [
            self.cell.w.as_slice().expect("standard layout"),
            self.cell.u.as_slice().expect("standard layout"),
            self.cell.b.as_slice().expect("standard layout"),
            self.fc_w.as_slice().expect("standard layout"),
            self.fc_b.as_slice().expect("standard layout"),
        ]
    }

    pub fn buffers_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.cell.w.as_slice_mut().expect("standard layout"),
            self.cell.u.as_slice_mut().expect("standard layout"),
            self.cell.b.as_slice_mut().expect("standard layout"),
            self.fc_w.as_slice_mut().expect("standard layout"),
            self.fc_b.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn len(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm(&self) -> f64 {
        self.buffers()
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for b in self.buffers_mut() {
            b.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.buffers().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// One value per output unit.
    Values(Vec<f64>),
    /// One class index per step.
    Classes(Vec<usize>),
}

/// One training sequence: `input` is `T x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Array2<f64>,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNet {
    pub params: NetParams,
    pub activation: Activation,
    pub head: Head,
}

impl LstmNet {
    pub fn new(input: usize, hidden: usize, output: usize, activation: Activation, head: Head, seed: u64) -> Result<Self> {
        if input == 0 || hidden == 0 || output == 0 {
            return Err(Error::invalid("network dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell = LstmCellParams::random(hidden, input, &mut rng);
        let k = 1.0 / (hidden as f64).sqrt();
        let fc_w = Array2::from_shape_fn((output, hidden), |_| rng.random_range(-k..k));
        let fc_b = Array1::from_shape_fn(output, |_| rng.random_range(-k..k));
        Ok(Self {
            params: NetParams { cell, fc_w, fc_b },
            activation,
            head,
        })
    }

    pub fn input_width(&self) -> usize {
        self.params.cell.input()
    }

    pub fn hidden(&self) -> usize {
        self.params.cell.hidden()
    }

    pub fn output_width(&self) -> usize {
        self.params.fc_b.len()
    }

    fn stack_steps(&self, inputs: &[&Array2<f64>]) -> Result<Vec<Array2<f64>>> {
        let first = inputs.first().ok_or_else(|| Error::invalid("empty batch"))?;
        let (steps, d) = first.dim();
        if steps == 0 {
            return Err(Error::invalid("sequence of length 0"));
        }
        if d != self.input_width() {
            return Err(Error::DimensionMismatch {
                context: "network input width",
                expected: self.input_width(),
                got: d,
            });
        }
        for x in inputs {
            if x.dim() != (steps, d) {
                return Err(Error::DimensionMismatch {
                    context: "sequence length within batch",
                    expected: steps,
                    got: x.nrows(),
                });
            }
        }
        Ok((0..steps)
            .map(|t| {
                let mut m = Array2::zeros((inputs.len(), d));
                for (r, x) in inputs.iter().enumerate() {
                    m.row_mut(r).assign(&x.row(t));
                }
                m
            })
            .collect())
    }

    fn dense(&self, h: &Array2<f64>) -> Array2<f64> {
        h.dot(&self.params.fc_w.t()) + &self.params.fc_b
    }

    /// Regression: `B x out` outputs. Softmax head: class probabilities
    /// averaged over the steps of each sequence.
    pub fn outputs(&self, inputs: &[&Array2<f64>]) -> Result<Array2<f64>> {
        let xs = self.stack_steps(inputs)?;
        let steps = xs.len();
        let cache = cell::forward(&self.params.cell, self.activation, xs);
        Ok(match self.head {
            Head::Regression => self.dense(cache.last_hidden()),
            Head::PerStepSoftmax => {
                let mut acc = Array2::zeros((inputs.len(), self.output_width()));
                for h in &cache.hs[1..] {
                    acc += &softmax_rows(self.dense(h));
                }
                acc / steps as f64
            }
        })
    }

    pub fn loss(&self, samples: &[&Sample]) -> Result<f64> {
        Ok(self.evaluate(samples, false)?.0)
    }

    pub fn loss_and_grad(&self, samples: &[&Sample]) -> Result<(f64, NetParams)> {
        let (loss, grad) = self.evaluate(samples, true)?;
        Ok((loss, grad.expect("requested")))
    }

    fn evaluate(&self, samples: &[&Sample], want_grad: bool) -> Result<(f64, Option<NetParams>)> {
        let inputs: Vec<&Array2<f64>> = samples.iter().map(|s| &s.input).collect();
        let xs = self.stack_steps(&inputs)?;
        let steps = xs.len();
        let batch = samples.len();
        let out = self.output_width();
        let cache = cell::forward(&self.params.cell, self.activation, xs);
        let mut grad = want_grad.then(|| NetParams::zeros_like(&self.params));
        let mut dh_ext: Vec<Option<Array2<f64>>> = vec![None; steps];
        let loss = match self.head {
            Head::Regression => {
                let y = self.dense(cache.last_hidden());
                let mut target = Array2::zeros((batch, out));
                for (r, s) in samples.iter().enumerate() {
                    match &s.target {
                        Target::Values(v) if v.len() == out => {
                            target.row_mut(r).assign(&Array1::from(v.clone()));
                        }
                        Target::Values(v) => {
                            return Err(Error::DimensionMismatch {
                                context: "regression target",
                                expected: out,
                                got: v.len(),
                            })
                        }
                        Target::Classes(_) => return Err(Error::invalid("class target given to a regression head")),
                    }
                }
                let diff = &y - &target;
                let n = (batch * out) as f64;
                let loss = diff.iter().map(|v| v * v).sum::<f64>() / n;
                if let Some(g) = grad.as_mut() {
                    let dy = diff * (2.0 / n);
                    g.fc_w += &dy.t().dot(cache.last_hidden());
                    g.fc_b += &dy.sum_axis(Axis(0));
                    dh_ext[steps - 1] = Some(dy.dot(&self.params.fc_w));
                }
                loss
            }
            Head::PerStepSoftmax => {
                let mut classes = Vec::with_capacity(batch);
                for s in samples {
                    match &s.target {
                        Target::Classes(c) if c.len() == steps => {
                            if let Some(&bad) = c.iter().find(|&&k| k >= out) {
                                return Err(Error::invalid(format!("class {bad} out of range for {out} outputs")));
                            }
                            classes.push(c)
                        }
                        Target::Classes(c) => {
                            return Err(Error::DimensionMismatch {
                                context: "per-step class targets",
                                expected: steps,
                                got: c.len(),
                            })
                        }
                        Target::Values(_) => return Err(Error::invalid("value target given to a softmax head")),
                    }
                }
                let n = (batch * steps) as f64;
                let mut loss = 0.0;
                for t in 0..steps {
                    let h = &cache.hs[t + 1];
                    let mut p = softmax_rows(self.dense(h));
                    for (r, c) in classes.iter().enumerate() {
                        loss -= p[[r, c[t]]].max(1e-300).ln();
                        p[[r, c[t]]] -= 1.0;
                    }
                    if let Some(g) = grad.as_mut() {
                        let dlogit = p / n;
                        g.fc_w += &dlogit.t().dot(h);
                        g.fc_b += &dlogit.sum_axis(Axis(0));
                        dh_ext[t] = Some(dlogit.dot(&self.params.fc_w));
                    }
                }
                loss / n
            }
        };
        if let Some(g) = grad.as_mut() {
            cell::backward(&self.params.cell, self.activation, &cache, &dh_ext, &mut g.cell);
        }
        Ok((loss, grad))
    }
}

pub(crate) fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    logits
}
