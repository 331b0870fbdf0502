use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{LstmNet, NetParams, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    /// Plain gradient descent.
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl std::str::FromStr for Optimizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" | "gd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::adam()),
            other => Err(Error::invalid(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// 0 means full batch.
    pub batch_size: usize,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub clip_norm: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 0.005,
            batch_size: 32,
            clip_norm: 1.0,
            optimizer: Optimizer::adam(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Loss over the whole training set before the first update.
    pub initial_loss: f64,
    /// Mean mini-batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss over the whole training set after the last update.
    pub final_loss: f64,
}

struct AdamState {
    m: NetParams,
    v: NetParams,
    t: i32,
}

/// Mini-batch training with seeded shuffling. Deterministic for a given
/// network, data and config.
pub fn train_net(net: &mut LstmNet, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    let all: Vec<&Sample> = samples.iter().collect();
    let initial_loss = net.loss(&all)?;
    let batch_size = if cfg.batch_size == 0 { samples.len() } else { cfg.batch_size };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut adam = match cfg.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            m: NetParams::zeros_like(&net.params),
            v: NetParams::zeros_like(&net.params),
            t: 0,
        }),
        Optimizer::Sgd => None,
    };
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (loss, mut grad) = net.loss_and_grad(&batch)?;
            if !loss.is_finite() {
                return Err(diverged(epoch, loss, cfg));
            }
            total += loss * batch.len() as f64;
            if cfg.clip_norm > 0.0 {
                let norm = grad.norm();
                if norm > cfg.clip_norm {
                    grad.scale(cfg.clip_norm / norm);
                }
            }
            apply_update(&mut net.params, &grad, cfg, adam.as_mut());
        }
        let mean = total / samples.len() as f64;
        if !mean.is_finite() || !net.params.is_finite() {
            return Err(diverged(epoch, mean, cfg));
        }
        epoch_losses.push(mean);
    }
    let final_loss = net.loss(&all)?;
    if !final_loss.is_finite() {
        return Err(diverged(cfg.epochs, final_loss, cfg));
    }
    Ok(TrainReport {
        initial_loss,
        epoch_losses,
        final_loss,
    })
}

fn diverged(epoch: usize, loss: f64, cfg: &TrainConfig) -> Error {
    Error::Diverged {
        epoch,
        loss,
        suggested_lr: cfg.learning_rate / 10.0,
    }
}

fn apply_update(params: &mut NetParams, grad: &NetParams, cfg: &TrainConfig, adam: Option<&mut AdamState>) {
    let lr = cfg.learning_rate;
    match (cfg.optimizer, adam) {
        (Optimizer::Adam { beta1, beta2, eps }, Some(state)) => {
            state.t += 1;
            let c1 = 1.0 - beta1.powi(state.t);
            let c2 = 1.0 - beta2.powi(state.t);
            let grads = grad.buffers();
            let ms = state.m.buffers_mut();
            let vs = state.v.buffers_mut();
            for (((p, g), m), v) in params.buffers_mut().into_iter().zip(grads).zip(ms).zip(vs) {
                for k in 0..p.len() {
                    m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                    v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                    p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                }
            }
        }
        _ => {
            for (p, g) in params.buffers_mut().into_iter().zip(grad.buffers()) {
                p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Flat parameter index of the worst entry.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the analytic gradient with central finite differences over every
/// parameter. Relative error is `|a - n| / max(|a| + |n|, floor)`.
pub fn gradient_check(net: &LstmNet, samples: &[Sample], epsilon: f64) -> Result<GradCheck> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    const FLOOR: f64 = 1e-7;
    let batch: Vec<&Sample> = samples.iter().collect();
    let (_, grad) = net.loss_and_grad(&batch)?;
    let analytic: Vec<f64> = grad.buffers().iter().flat_map(|b| b.iter().copied()).collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe = net.clone();
    let sizes: Vec<usize> = net.params.buffers().iter().map(|b| b.len()).collect();
    for (which, &len) in sizes.iter().enumerate() {
        for k in 0..len {
            let orig = probe.params.buffers()[which][k];
            probe.params.buffers_mut()[which][k] = orig + epsilon;
            let up = probe.loss(&batch)?;
            probe.params.buffers_mut()[which][k] = orig - epsilon;
            let down = probe.loss(&batch)?;
            probe.params.buffers_mut()[which][k] = orig;
            numeric.push((up - down) / (2.0 * epsilon));
        }
    }
    let (worst_index, max_relative_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(FLOOR))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    Ok(GradCheck {
        max_relative_error,
        worst_index,
        analytic,
        numeric,
    })
}

pub fn write_loss_curve_csv<W: Write>(w: &mut W, losses: &[f64]) -> std::io::Result<()> {
    writeln!(w, "epoch,mse")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, l)?;
    }
    Ok(())
}
