//! Leave-one-trace-out application classification over feature sets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::fmt;
use std::str::FromStr;

use crate::classifier::{
    classify_window, evaluate_classification, fit_forest, window_examples, window_truth, ClassificationReport, ClassifierConfig, ClassifierNet,
    ForestParams,
};
use crate::error::{Error, Result};
use crate::featurize::{apply_mask, bin_trace, FeatureSeries, FeatureSet};
use crate::neural_forecast::TrainConfig;
use crate::report::predict::job_seed;
use crate::trace_io::{synthesize_trace, AppClass, SynthDefaults};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierModel {
    Lstm,
    Forest,
}

impl ClassifierModel {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierModel::Lstm => "lstm",
            ClassifierModel::Forest => "forest",
        }
    }
}

impl fmt::Display for ClassifierModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lstm" => Ok(ClassifierModel::Lstm),
            "forest" => Ok(ClassifierModel::Forest),
            other => Err(Error::Config(format!("unknown classifier `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifySetup {
    pub tau: f64,
    pub window_len_s: f64,
    pub traces_per_class: usize,
    pub trace_s: f64,
    pub net: ClassifierConfig,
    pub forest: ForestParams,
}

impl Default for ClassifySetup {
    fn default() -> Self {
        Self {
            tau: 1.0,
            window_len_s: 5.0,
            traces_per_class: 4,
            trace_s: 240.0,
            net: ClassifierConfig {
                hidden: 24,
                seq_len: 5,
                stride: 2,
                train: TrainConfig {
                    epochs: 15,
                    ..TrainConfig::default()
                },
                ..ClassifierConfig::default()
            },
            forest: ForestParams::default(),
        }
    }
}

/// Single-application labeled traces, `traces_per_class` per class, binned
/// with every feature. Trace `i` has class `i % 4`.
pub fn labeled_corpus(defaults: &SynthDefaults, setup: &ClassifySetup, seed: u64) -> Result<Vec<FeatureSeries>> {
    (0..setup.traces_per_class * AppClass::COUNT)
        .map(|i| {
            let app = AppClass::ALL[i % AppClass::COUNT];
            let trace = synthesize_trace(defaults, app, setup.trace_s, job_seed(seed, 0, i))?;
            bin_trace(&trace, setup.tau)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub model: ClassifierModel,
    pub feature_set: FeatureSet,
    /// Index of the held-out trace.
    pub fold: usize,
    pub predictions: Vec<AppClass>,
    pub truth: Vec<AppClass>,
    pub report: ClassificationReport,
}

fn labeled_rows(s: &FeatureSeries) -> Result<(Vec<Vec<f64>>, Vec<AppClass>)> {
    let labels = s.labels.clone().ok_or_else(|| Error::invalid("classification corpus needs labeled traces"))?;
    Ok((s.matrix(), labels))
}

/// Trains one model per (model kind, feature set, held-out trace) and
/// classifies the held-out trace's windows. Results are ordered by model,
/// feature set, then fold.
pub fn run_folds(
    corpus: &[FeatureSeries],
    models: &[ClassifierModel],
    sets: &[FeatureSet],
    setup: &ClassifySetup,
    seed: u64,
) -> Result<Vec<FoldOutcome>> {
    if corpus.len() < 2 {
        return Err(Error::Config("leave-one-out needs at least two traces".into()));
    }
    let jobs: Vec<(ClassifierModel, usize, usize)> = models
        .iter()
        .flat_map(|&m| (0..sets.len()).flat_map(move |s| (0..corpus.len()).map(move |f| (m, s, f))))
        .collect();
    jobs.par_iter()
        .map(|&(model, si, fold)| {
            let fs = sets[si];
            let masked = corpus
                .iter()
                .map(|s| apply_mask(s, fs.mask()))
                .collect::<Result<Vec<_>>>()?;
            let training = masked.iter().enumerate().filter(|(i, _)| *i != fold).map(|(_, s)| s);
            let model_seed = job_seed(seed, si + 1, fold);
            let stage = |e: Error| Error::Config(format!("{model} {fs}, fold {fold}: {e}"));
            let predictions = match model {
                ClassifierModel::Lstm => {
                    let train = training.map(labeled_rows).collect::<Result<Vec<_>>>()?;
                    let mut cfg = setup.net.clone();
                    cfg.train.seed = model_seed;
                    let (net, _) = ClassifierNet::fit(&train, &cfg).map_err(stage)?;
                    classify_window(&net, &masked[fold], setup.window_len_s)?
                }
                ClassifierModel::Forest => {
                    let mut x = Vec::new();
                    let mut y = Vec::new();
                    for s in training {
                        let (xs, ys) = window_examples(s, setup.window_len_s)?;
                        x.extend(xs);
                        y.extend(ys);
                    }
                    let forest = fit_forest(&x, &y, AppClass::COUNT, setup.forest, model_seed).map_err(stage)?;
                    classify_window(&forest, &masked[fold], setup.window_len_s)?
                }
            };
            let truth = window_truth(&masked[fold], setup.window_len_s)?;
            let report = evaluate_classification(&predictions, &truth)?;
            Ok(FoldOutcome {
                model,
                feature_set: fs,
                fold,
                predictions,
                truth,
                report,
            })
        })
        .collect()
}

/// Pools every fold's windows of one model and feature set.
pub fn pooled_report(folds: &[FoldOutcome], model: ClassifierModel, fs: FeatureSet) -> Result<ClassificationReport> {
    let mut p = Vec::new();
    let mut t = Vec::new();
    for f in folds.iter().filter(|f| f.model == model && f.feature_set == fs) {
        p.extend_from_slice(&f.predictions);
        t.extend_from_slice(&f.truth);
    }
    evaluate_classification(&p, &t)
}
