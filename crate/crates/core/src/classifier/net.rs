use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::Normalizer;
use crate::neural_forecast::{train_net, Activation, Head, LstmNet, Sample, Target, TrainConfig, TrainReport};
use crate::trace_io::AppClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: usize,
    /// Bins per training sequence.
    pub seq_len: usize,
    /// Offset between consecutive training sequences.
    pub stride: usize,
    pub activation: Activation,
    pub train: TrainConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            seq_len: 5,
            stride: 1,
            activation: Activation::default(),
            train: TrainConfig::default(),
        }
    }
}

/// LSTM with a per-step softmax over the application classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierNet {
    pub net: LstmNet,
    pub input_norm: Normalizer,
}

impl ClassifierNet {
    /// Trains on labeled feature rows. Each element of `sequences` is one
    /// contiguous labeled recording of `(row, class)` pairs.
    pub fn fit(sequences: &[(Vec<Vec<f64>>, Vec<AppClass>)], cfg: &ClassifierConfig) -> Result<(Self, TrainReport)> {
        if cfg.seq_len == 0 || cfg.stride == 0 {
            return Err(Error::invalid("seq_len and stride must be at least 1"));
        }
        let all_rows: Vec<Vec<f64>> = sequences.iter().flat_map(|(r, _)| r.iter().cloned()).collect();
        let input_norm = Normalizer::fit(&all_rows)?;
        let mut samples = Vec::new();
        for (rows, labels) in sequences {
            if rows.len() != labels.len() {
                return Err(Error::DimensionMismatch {
                    context: "labels per row",
                    expected: rows.len(),
                    got: labels.len(),
                });
            }
            let mut start = 0;
            while start + cfg.seq_len <= rows.len() {
                samples.push(Sample {
                    input: to_matrix(&input_norm, &rows[start..start + cfg.seq_len])?,
                    target: Target::Classes(labels[start..start + cfg.seq_len].iter().map(|c| c.index()).collect()),
                });
                start += cfg.stride;
            }
        }
        if samples.is_empty() {
            return Err(Error::invalid("no sequence is long enough for seq_len"));
        }
        let mut net = LstmNet::new(
            input_norm.width(),
            cfg.hidden,
            AppClass::COUNT,
            cfg.activation,
            Head::PerStepSoftmax,
            cfg.train.seed,
        )?;
        let report = train_net(&mut net, &samples, &cfg.train)?;
        Ok((Self { net, input_norm }, report))
    }

    /// Softmax averaged over the window's bins, for several equally long
    /// windows.
    pub fn window_probabilities(&self, windows: &[&[Vec<f64>]]) -> Result<Array2<f64>> {
        let mats = windows
            .iter()
            .map(|w| to_matrix(&self.input_norm, w))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Array2<f64>> = mats.iter().collect();
        self.net.outputs(&refs)
    }
}

fn to_matrix(norm: &Normalizer, rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let d = norm.width();
    let mut m = Array2::zeros((rows.len(), d));
    for (r, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                context: "classifier feature width",
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
