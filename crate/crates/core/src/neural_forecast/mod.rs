//! LSTM regression network trained with backpropagation through time.

mod cell;
mod net;
mod train;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use cell::{cell_step, sigmoid, Activation, Gate, LstmCellParams, StepGates};
pub use net::{Head, LstmNet, NetParams, Sample, Target};
pub use train::{gradient_check, train_net, write_loss_curve_csv, GradCheck, Optimizer, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::featurize::Normalizer;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ForecastMode {
    /// One output unit per horizon step.
    #[default]
    MultiOutput,
    /// A single-step head iterated, feeding predictions back as the target
    /// feature.
    Recursive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    pub hidden: usize,
    /// Input bins per sample.
    pub window: usize,
    pub horizon: usize,
    pub activation: Activation,
    pub mode: ForecastMode,
    pub train: TrainConfig,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            window: 20,
            horizon: 1,
            activation: Activation::default(),
            mode: ForecastMode::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionNet {
    pub version: u32,
    pub net: LstmNet,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
    pub window: usize,
    pub mode: ForecastMode,
    /// Input column holding the forecast target, needed by recursive mode.
    pub target_column: Option<usize>,
}

fn normalize_window(norm: &Normalizer, rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let d = norm.width();
    let mut m = Array2::zeros((rows.len(), d));
    for (r, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                context: "feature row width",
                expected: d,
                got: row.len(),
            });
        }
        for (c, v) in norm.apply(row).into_iter().enumerate() {
            m[[r, c]] = v;
        }
    }
    Ok(m)
}

impl RegressionNet {
    /// Trains on sliding windows over a feature matrix: each sample maps
    /// `rows[i - window..i]` to `targets[i..i + out]`.
    pub fn fit_series(
        rows: &[Vec<f64>],
        targets: &[f64],
        target_column: Option<usize>,
        cfg: &RegressionConfig,
    ) -> Result<(Self, TrainReport)> {
        if rows.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                context: "targets per feature row",
                expected: rows.len(),
                got: targets.len(),
            });
        }
        if cfg.window == 0 || cfg.horizon == 0 {
            return Err(Error::invalid("window and horizon must be at least 1"));
        }
        if cfg.mode == ForecastMode::Recursive && target_column.is_none() {
            return Err(Error::invalid("recursive mode needs the target among the inputs"));
        }
        let out = match cfg.mode {
            ForecastMode::MultiOutput => cfg.horizon,
            ForecastMode::Recursive => 1,
        };
        if rows.len() < cfg.window + out {
            return Err(Error::invalid(format!(
                "{} rows cannot form a window of {} plus {out} targets",
                rows.len(),
                cfg.window
            )));
        }
        let input_norm = Normalizer::fit(rows)?;
        let t = Normalizer::fit(&targets.iter().map(|&v| vec![v]).collect::<Vec<_>>())?;
        let output_norm = Normalizer {
            mean: vec![t.mean[0]; out],
            std: vec![t.std[0]; out],
        };
        let mut sequences = Vec::new();
        let mut outputs = Vec::new();
        for i in cfg.window..=rows.len() - out {
            sequences.push(rows[i - cfg.window..i].to_vec());
            outputs.push(targets[i..i + out].to_vec());
        }
        let mut fitted = Self::fit_pairs(&sequences, &outputs, input_norm, output_norm, cfg)?;
        fitted.0.target_column = target_column;
        Ok(fitted)
    }

    /// Trains on explicit (sequence, output vector) pairs with the given
    /// normalization constants.
    pub fn fit_pairs(
        sequences: &[Vec<Vec<f64>>],
        outputs: &[Vec<f64>],
        input_norm: Normalizer,
        output_norm: Normalizer,
        cfg: &RegressionConfig,
    ) -> Result<(Self, TrainReport)> {
        if sequences.len() != outputs.len() || sequences.is_empty() {
            return Err(Error::invalid("need equally many non-zero sequences and outputs"));
        }
        let mut samples = Vec::with_capacity(sequences.len());
        for (seq, out) in sequences.iter().zip(outputs) {
            if out.len() != output_norm.width() {
                return Err(Error::DimensionMismatch {
                    context: "output vector",
                    expected: output_norm.width(),
                    got: out.len(),
                });
            }
            samples.push(Sample {
                input: normalize_window(&input_norm, seq)?,
                target: Target::Values(output_norm.apply(out)),
            });
        }
        let mut net = LstmNet::new(
            input_norm.width(),
            cfg.hidden,
            output_norm.width(),
            cfg.activation,
            Head::Regression,
            cfg.train.seed,
        )?;
        let report = train_net(&mut net, &samples, &cfg.train)?;
        Ok((
            Self {
                version: CHECKPOINT_VERSION,
                net,
                input_norm,
                output_norm,
                window: sequences[0].len(),
                mode: cfg.mode,
                target_column: None,
            },
            report,
        ))
    }

    pub fn output_width(&self) -> usize {
        self.output_norm.width()
    }

    /// Denormalized outputs for several equally long raw windows at once.
    pub fn predict_batch(&self, windows: &[&[Vec<f64>]]) -> Result<Vec<Vec<f64>>> {
        let mats = windows
            .iter()
            .map(|w| normalize_window(&self.input_norm, w))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Array2<f64>> = mats.iter().collect();
        let y = self.net.outputs(&refs)?;
        Ok(y.rows()
            .into_iter()
            .map(|row| row.iter().enumerate().map(|(c, &z)| self.output_norm.invert_col(c, z)).collect())
            .collect())
    }

    /// Denormalized outputs for one raw window.
    pub fn predict(&self, window: &[Vec<f64>]) -> Result<Vec<f64>> {
        if window.is_empty() {
            return Err(Error::invalid("prediction window is empty"));
        }
        Ok(self.predict_batch(&[window])?.remove(0))
    }

    /// Forecasts the next `horizon` target values from the most recent raw
    /// feature rows (only the last `window` rows are used).
    pub fn predict_horizon(&self, recent: &[Vec<f64>], horizon: usize) -> Result<Vec<f64>> {
        if recent.is_empty() {
            return Err(Error::invalid("recent window is empty"));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        let start = recent.len().saturating_sub(self.window);
        match self.mode {
            ForecastMode::MultiOutput => {
                if horizon > self.output_width() {
                    return Err(Error::invalid(format!(
                        "horizon {horizon} exceeds the network's {} outputs",
                        self.output_width()
                    )));
                }
                let mut y = self.predict(&recent[start..])?;
                y.truncate(horizon);
                Ok(y)
            }
            ForecastMode::Recursive => {
                let col = self
                    .target_column
                    .ok_or_else(|| Error::invalid("recursive net has no target column"))?;
                let mut buf = recent[start..].to_vec();
                let mut out = Vec::with_capacity(horizon);
                for _ in 0..horizon {
                    let y = self.predict(&buf)?[0];
                    out.push(y);
                    let mut next = buf.last().expect("non-empty").clone();
                    next[col] = y;
                    buf.push(next);
                    if buf.len() > self.window {
                        buf.remove(0);
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let net: Self = serde_json::from_str(&text)?;
        if net.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                net.version
            )));
        }
        Ok(net)
    }
}
