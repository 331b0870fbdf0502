//! Forecasting sweeps: persistence, grid-searched ARIMA and an LSTM scored
//! by rolling forecasts over a held-out test slice.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{apply_mask, bin_trace, split_experiment, FeatureSeries, FeatureSet};
use crate::linear_forecast::grid_search;
use crate::neural_forecast::{RegressionConfig, RegressionNet, TrainConfig};
use crate::report::metrics::{relative_rmse, rmse};
use crate::trace_io::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictScheme {
    Persistence,
    Arima,
    Lstm,
}

impl PredictScheme {
    pub const ALL: [PredictScheme; 3] = [PredictScheme::Persistence, PredictScheme::Arima, PredictScheme::Lstm];

    pub fn as_str(self) -> &'static str {
        match self {
            PredictScheme::Persistence => "persistence",
            PredictScheme::Arima => "arima",
            PredictScheme::Lstm => "lstm",
        }
    }
}

impl fmt::Display for PredictScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredictScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "persistence" => Ok(PredictScheme::Persistence),
            "arima" => Ok(PredictScheme::Arima),
            "lstm" => Ok(PredictScheme::Lstm),
            other => Err(Error::Config(format!("unknown prediction scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictSetup {
    pub train_bins: usize,
    pub test_bins: usize,
    /// Tail of the training slice held out to pick the ARIMA order.
    pub validation_fraction: f64,
    pub p_max: usize,
    pub d_max: usize,
    pub q_max: usize,
    pub feature_set: FeatureSet,
    pub lstm: RegressionConfig,
}

impl Default for PredictSetup {
    fn default() -> Self {
        Self {
            train_bins: 500,
            test_bins: 200,
            validation_fraction: 0.2,
            p_max: 3,
            d_max: 1,
            q_max: 2,
            feature_set: FeatureSet::Fs6,
            lstm: RegressionConfig {
                hidden: 24,
                window: 10,
                horizon: 1,
                train: TrainConfig {
                    epochs: 15,
                    learning_rate: 0.005,
                    ..TrainConfig::default()
                },
                ..RegressionConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeScore {
    pub scheme: PredictScheme,
    pub rmse: f64,
    pub relative_rmse: Option<f64>,
}

/// Scores every scheme on `test`, forecasting each test bin `horizon` bins
/// ahead. Models see `train` and the test bins already revealed. Forecasts
/// are clamped at zero since every target is a count.
pub fn evaluate_split(
    train: &FeatureSeries,
    test: &FeatureSeries,
    schemes: &[PredictScheme],
    setup: &PredictSetup,
    horizon: usize,
    seed: u64,
) -> Result<Vec<SchemeScore>> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if test.is_empty() || train.len() < horizon {
        return Err(Error::invalid("train and test slices are too short"));
    }
    let y_train = train.target_values();
    let y_test = test.target_values();
    let n = y_train.len();
    let mut all = y_train.clone();
    all.extend_from_slice(&y_test);

    let mut out = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let preds: Vec<f64> = match scheme {
            PredictScheme::Persistence => (0..y_test.len()).map(|i| all[n + i - horizon]).collect(),
            PredictScheme::Arima => {
                let cut = ((n as f64) * (1.0 - setup.validation_fraction)).round() as usize;
                let grid = grid_search(&y_train[..cut], &y_train[cut..], 0..=setup.p_max, 0..=setup.d_max, 0..=setup.q_max)?;
                let model = grid.refit_stable(&y_train)?;
                model.rolling_h_step(&y_test, horizon)
            }
            PredictScheme::Lstm => {
                let mut cfg = setup.lstm.clone();
                cfg.horizon = horizon;
                cfg.train.seed = seed;
                let rows = train.matrix();
                let (net, _) = RegressionNet::fit_series(&rows, &y_train, train.target_column(), &cfg)?;
                let mut all_rows = rows;
                all_rows.extend(test.matrix());
                let w = cfg.window;
                let windows: Vec<&[Vec<f64>]> = (0..y_test.len())
                    .map(|i| {
                        let end = n + i + 1 - horizon;
                        &all_rows[end.saturating_sub(w)..end]
                    })
                    .collect();
                // Early windows may be shorter than the net's window; batch
                // only the full ones.
                let mut preds = Vec::with_capacity(windows.len());
                let full: Vec<&[Vec<f64>]> = windows.iter().copied().filter(|w2| w2.len() == w).collect();
                let mut full_out = net.predict_batch(&full)?.into_iter();
                for win in &windows {
                    let y = if win.len() == w {
                        full_out.next().expect("one output per full window")
                    } else {
                        net.predict(win)?
                    };
                    preds.push(y[horizon - 1]);
                }
                preds
            }
        };
        let preds: Vec<f64> = preds.into_iter().map(|p| if p.is_nan() { p } else { p.max(0.0) }).collect();
        out.push(SchemeScore {
            scheme,
            rmse: rmse(&preds, &y_test)?,
            relative_rmse: relative_rmse(&preds, &y_test)?,
        });
    }
    Ok(out)
}

/// One repetition of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScore {
    pub axis: String,
    pub value: f64,
    pub rep: usize,
    pub start: usize,
    pub scheme: PredictScheme,
    pub rmse: f64,
    pub relative_rmse: Option<f64>,
}

/// A point of a prediction sweep: bin width, training length and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub train_bins: usize,
    pub horizon: usize,
}

pub(crate) fn job_seed(seed: u64, point: usize, rep: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (point as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(rep as u64);
    rng.random()
}

/// Runs `reps` repetitions per point, each on a split starting at a seeded
/// random bin. Repetitions run in parallel; results keep point/rep order.
pub fn run_points(
    trace: &Trace,
    axis: &str,
    points: &[(f64, SweepPoint)],
    reps: usize,
    schemes: &[PredictScheme],
    setup: &PredictSetup,
    seed: u64,
) -> Result<Vec<RawScore>> {
    if reps == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let mut binned = Vec::with_capacity(points.len());
    for (value, p) in points {
        let series = apply_mask(&bin_trace(trace, p.tau)?, setup.feature_set.mask())?;
        let need = p.train_bins + setup.test_bins;
        if series.len() < need {
            return Err(Error::Config(format!(
                "{axis} = {value}: trace gives {} bins, the split needs {need}",
                series.len()
            )));
        }
        binned.push(series);
    }
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|i| (0..reps).map(move |r| (i, r))).collect();
    let results: Vec<Result<Vec<RawScore>>> = jobs
        .par_iter()
        .map(|&(i, rep)| {
            let (value, p) = points[i];
            let series = &binned[i];
            let s = job_seed(seed, i, rep);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let start = rng.random_range(0..=series.len() - p.train_bins - setup.test_bins);
            let (train, test) = split_experiment(series, p.train_bins, setup.test_bins, start)?;
            let scores = evaluate_split(&train, &test, schemes, setup, p.horizon, s)
                .map_err(|e| Error::Config(format!("{axis} = {value}, repetition {rep}: {e}")))?;
            Ok(scores
                .into_iter()
                .map(|sc| RawScore {
                    axis: axis.to_string(),
                    value,
                    rep,
                    start,
                    scheme: sc.scheme,
                    rmse: sc.rmse,
                    relative_rmse: sc.relative_rmse,
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
