//! Paired DRX scheme comparison: static minimum-energy and minimum-delay
//! sets against the prediction-driven policy.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{oracle_contexts, train_h, AdaptivePolicy, HTrainParams, MappingH, OracleConfig, PredictorConfig, TrafficPredictor};
use crate::drx::DrxConfig;
use crate::error::{Error, Result};
use crate::report::predict::job_seed;
use crate::sim::{compare_schemes, Scheme, SimConfig, SimReport, UePolicy};
use crate::trace_io::{synthesize_user_trace, tti_byte_totals, Direction, QuantizationScheme, SynthDefaults, UserProfile};

pub const MIN_ENERGY: &str = "min_energy";
pub const ML: &str = "ml";
pub const MIN_DELAY: &str = "min_delay";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HSource {
    /// Decision tree fitted to simulation-oracle labels.
    Trained,
    /// The fixed two-by-two threshold table.
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrxCompareSetup {
    pub sim: SimConfig,
    /// UEs and seconds of separate traffic used to train F and H.
    pub train_ues: usize,
    pub train_s: f64,
    pub omega: f64,
    pub h_source: HSource,
    pub predictor: PredictorConfig,
    pub oracle: OracleConfig,
    pub h_params: HTrainParams,
    pub cdf_grid_ms: Vec<f64>,
}

impl Default for DrxCompareSetup {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            train_ues: 10,
            train_s: 600.0,
            omega: 0.5,
            h_source: HSource::Trained,
            predictor: PredictorConfig::default(),
            oracle: OracleConfig::default(),
            h_params: HTrainParams::default(),
            cdf_grid_ms: (0..=100).map(f64::from).collect(),
        }
    }
}

/// DL bytes per TTI for `n` independent users.
pub fn user_traffic(defaults: &SynthDefaults, profile: &UserProfile, n: usize, seconds: f64, tti_ms: f64, seed: u64) -> Result<Vec<Vec<u64>>> {
    (0..n)
        .into_par_iter()
        .map(|ue| {
            let trace = synthesize_user_trace(defaults, profile, seconds, job_seed(seed, 0, ue))?;
            let mut bytes = tti_byte_totals(&trace, tti_ms, Direction::Dl)?;
            bytes.resize((seconds * 1000.0 / tti_ms).round() as usize, 0);
            Ok(bytes)
        })
        .collect()
}

pub fn labels_of(bytes: &[u64]) -> Vec<u8> {
    let q = QuantizationScheme::default();
    bytes.iter().map(|&b| q.label(b)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedAdapt {
    pub predictor: TrafficPredictor,
    pub h: MappingH,
    pub contexts: usize,
}

/// Trains F on the concatenated label streams, then H on oracle outcomes of
/// every 1000-TTI context, featurized by F's forecasts.
pub fn train_adapt(train_traffic: &[Vec<u64>], setup: &DrxCompareSetup) -> Result<TrainedAdapt> {
    if train_traffic.is_empty() {
        return Err(Error::Config("no training traffic for the adaptive policy".into()));
    }
    let labels: Vec<Vec<u8>> = train_traffic.iter().map(|b| labels_of(b)).collect();
    let all: Vec<u8> = labels.concat();
    let (predictor, _) = TrafficPredictor::train(&all, &setup.predictor)?;
    let h = match setup.h_source {
        HSource::Table => MappingH::default(),
        HSource::Trained => {
            let per_ue = train_traffic
                .par_iter()
                .zip(&labels)
                .map(|(b, l)| oracle_contexts(b, l, Some(&predictor), &setup.oracle))
                .collect::<Result<Vec<_>>>()?;
            let contexts: Vec<_> = per_ue.concat();
            let h = train_h(&contexts, setup.omega, &setup.sim.power, setup.h_params)?;
            return Ok(TrainedAdapt {
                predictor,
                h,
                contexts: contexts.len(),
            });
        }
    };
    Ok(TrainedAdapt { predictor, h, contexts: 0 })
}

/// Runs minimum-energy (set 2), the adaptive policy and minimum-delay
/// (set 3) over identical traffic, in that order.
pub fn compare(setup: &DrxCompareSetup, traffic: &[Vec<u64>], adapt: &TrainedAdapt, seed: u64) -> Result<Vec<SimReport>> {
    let n = setup.sim.n_ues;
    let f = Arc::new(adapt.predictor.clone());
    let h = Arc::new(adapt.h.clone());
    let ml = Scheme {
        name: ML.into(),
        policies: (0..n)
            .map(|_| UePolicy::Adaptive(Box::new(AdaptivePolicy::new(f.clone(), h.clone()))))
            .collect(),
    };
    compare_schemes(
        &setup.sim,
        traffic,
        vec![
            Scheme::uniform(MIN_ENERGY, DrxConfig::set(2)?, n),
            ml,
            Scheme::uniform(MIN_DELAY, DrxConfig::set(3)?, n),
        ],
        seed,
    )
}
