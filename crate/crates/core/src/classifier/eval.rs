use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace_io::AppClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    /// `None` for classes absent from the ground truth.
    pub recall: [Option<f64>; AppClass::COUNT],
    /// `confusion[actual][predicted]`.
    pub confusion: [[usize; AppClass::COUNT]; AppClass::COUNT],
    pub total: usize,
}

impl ClassificationReport {
    pub fn actual_counts(&self) -> [usize; AppClass::COUNT] {
        let mut out = [0; AppClass::COUNT];
        for (a, row) in self.confusion.iter().enumerate() {
            out[a] = row.iter().sum();
        }
        out
    }

    /// `sum_c (actual_c / total) * recall_c`, which must equal accuracy.
    pub fn weighted_recall(&self) -> f64 {
        let actual = self.actual_counts();
        self.recall
            .iter()
            .zip(actual)
            .map(|(r, n)| r.unwrap_or(0.0) * n as f64 / self.total as f64)
            .sum()
    }
}

pub fn evaluate_classification(predictions: &[AppClass], truth: &[AppClass]) -> Result<ClassificationReport> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "predictions vs ground truth",
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    let mut confusion = [[0usize; AppClass::COUNT]; AppClass::COUNT];
    for (p, t) in predictions.iter().zip(truth) {
        confusion[t.index()][p.index()] += 1;
    }
    let correct: usize = (0..AppClass::COUNT).map(|c| confusion[c][c]).sum();
    let mut recall = [None; AppClass::COUNT];
    for c in 0..AppClass::COUNT {
        let actual: usize = confusion[c].iter().sum();
        if actual > 0 {
            recall[c] = Some(confusion[c][c] as f64 / actual as f64);
        }
    }
    Ok(ClassificationReport {
        accuracy: correct as f64 / truth.len() as f64,
        recall,
        confusion,
        total: truth.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub feature_set: String,
    pub window_len_s: f64,
    pub accuracy: f64,
    pub recall: [Option<f64>; AppClass::COUNT],
}

pub const CLASSIFICATION_HEADER: &str = "feature_set,window_len_s,accuracy,recall_surf,recall_vcall,recall_voice,recall_stream";

/// Recalls are written in the order surf, video call, voice call, streaming;
/// absent classes are left empty.
pub fn write_classification_csv<W: Write>(w: &mut W, rows: &[ClassificationRow]) -> std::io::Result<()> {
    writeln!(w, "{CLASSIFICATION_HEADER}")?;
    for r in rows {
        write!(w, "{},{},{}", r.feature_set, r.window_len_s, r.accuracy)?;
        for c in [AppClass::Surf, AppClass::VideoCall, AppClass::VoiceCall, AppClass::VideoStream] {
            match r.recall[c.index()] {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}
