//! Application classification over fixed-length windows of feature bins:
//! decision trees, random forests and an LSTM softmax network.

mod eval;
mod forest;
mod net;
mod tree;

pub use eval::{evaluate_classification, write_classification_csv, ClassificationReport, ClassificationRow, CLASSIFICATION_HEADER};
pub use forest::{fit_forest, majority_vote, ForestParams, RandomForest};
pub use net::{ClassifierConfig, ClassifierNet};
pub use tree::{fit_tree, DecisionTree, Node, TreeParams};

use crate::error::{Error, Result};
use crate::featurize::FeatureSeries;
use crate::trace_io::AppClass;

/// Anything that labels windows of masked feature rows.
pub trait WindowModel {
    fn classify_windows(&self, windows: &[&[Vec<f64>]]) -> Result<Vec<AppClass>>;
}

/// Column-wise mean of a window's rows.
pub fn mean_row(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; rows.first().map_or(0, Vec::len)];
    for r in rows {
        for (a, v) in m.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = rows.len().max(1) as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn class_of(idx: usize) -> Result<AppClass> {
    AppClass::from_index(idx).ok_or_else(|| Error::invalid(format!("class index {idx} out of range")))
}

impl WindowModel for DecisionTree {
    fn classify_windows(&self, windows: &[&[Vec<f64>]]) -> Result<Vec<AppClass>> {
        windows.iter().map(|w| class_of(self.predict(&mean_row(w)))).collect()
    }
}

impl WindowModel for RandomForest {
    fn classify_windows(&self, windows: &[&[Vec<f64>]]) -> Result<Vec<AppClass>> {
        windows.iter().map(|w| class_of(self.predict(&mean_row(w)))).collect()
    }
}

impl WindowModel for ClassifierNet {
    fn classify_windows(&self, windows: &[&[Vec<f64>]]) -> Result<Vec<AppClass>> {
        if windows.is_empty() {
            return Ok(Vec::new());
        }
        let probs = self.window_probabilities(windows)?;
        probs
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                class_of(best)
            })
            .collect()
    }
}

/// Number of bins in a window of `window_len_s`; must be a positive
/// multiple of `tau`.
pub fn window_bins(tau: f64, window_len_s: f64) -> Result<usize> {
    let ratio = window_len_s / tau;
    let bins = ratio.round();
    if !(window_len_s > 0.0) || bins < 1.0 {
        return Err(Error::invalid(format!(
            "window of {window_len_s} s is shorter than one {tau} s bin"
        )));
    }
    if (ratio - bins).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::invalid(format!(
            "window of {window_len_s} s is not a multiple of tau = {tau} s"
        )));
    }
    Ok(bins as usize)
}

fn windows(series: &FeatureSeries, bins: usize) -> Vec<std::ops::Range<usize>> {
    (0..series.len() / bins).map(|k| k * bins..(k + 1) * bins).collect()
}

/// One label per non-overlapping window; a trailing partial window is
/// dropped.
pub fn classify_window(model: &dyn WindowModel, series: &FeatureSeries, window_len_s: f64) -> Result<Vec<AppClass>> {
    let bins = window_bins(series.tau, window_len_s)?;
    let matrix = series.matrix();
    let ws: Vec<&[Vec<f64>]> = windows(series, bins).into_iter().map(|r| &matrix[r]).collect();
    model.classify_windows(&ws)
}

/// Majority ground-truth label of each window, ties to the smallest class
/// index.
pub fn window_truth(series: &FeatureSeries, window_len_s: f64) -> Result<Vec<AppClass>> {
    let bins = window_bins(series.tau, window_len_s)?;
    let labels = series
        .labels
        .as_ref()
        .ok_or_else(|| Error::invalid("series carries no labels"))?;
    windows(series, bins)
        .into_iter()
        .map(|r| {
            let votes: Vec<usize> = labels[r].iter().map(|c| c.index()).collect();
            class_of(majority_vote(&votes, AppClass::COUNT))
        })
        .collect()
}

/// Mean-feature examples and labels of every full window, for tree learners.
pub fn window_examples(series: &FeatureSeries, window_len_s: f64) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let bins = window_bins(series.tau, window_len_s)?;
    let truth = window_truth(series, window_len_s)?;
    let matrix = series.matrix();
    let x = windows(series, bins).into_iter().map(|r| mean_row(&matrix[r])).collect();
    Ok((x, truth.into_iter().map(AppClass::index).collect()))
}
