//! Prediction-driven DRX set selection: traffic snapshots over quantized
//! arrival labels, the snapshot forecaster F, the decision mapping H and the
//! simulation oracle H is trained from.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classifier::{fit_tree, DecisionTree, Node, TreeParams};
use crate::drx::{transmission_duration, DrxConfig, Packet, PowerModel, UeState};
use crate::error::{Error, Result};
use crate::featurize::Normalizer;
use crate::neural_forecast::{RegressionConfig, RegressionNet, TrainReport};
use crate::sim::{DrxPolicy, PolicyDecision};

/// Label assigned to a TTI without arrivals, also used to pad history.
pub const SILENT_LABEL: u8 = 1;
pub const MAX_LABEL: u8 = 9;
/// Window lengths of the three summed entries.
pub const SUM_WINDOWS: [usize; 3] = [10, 100, 1000];
/// Valid range of each of the seven entries.
pub const ENTRY_RANGES: [(f64, f64); 7] = [
    (1.0, 9.0),
    (1.0, 9.0),
    (1.0, 9.0),
    (1.0, 9.0),
    (10.0, 90.0),
    (100.0, 900.0),
    (1000.0, 9000.0),
];
pub const X_SHORT_RANGE: (f64, f64) = (14.0, 126.0);
pub const X_LONG_RANGE: (f64, f64) = (1100.0, 9900.0);
pub const DECISION_EPOCH_TTIS: u64 = 1000;

/// Last four labels (most recent first) and label sums over the last 10,
/// 100 and 1000 TTIs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficSnapshot {
    pub entries: [f64; 7],
}

fn label_or_pad(labels: &[u8], i: isize) -> u8 {
    if i < 0 {
        SILENT_LABEL
    } else {
        labels.get(i as usize).copied().unwrap_or(SILENT_LABEL)
    }
}

/// Snapshot at TTI `t` from `labels[..t]`; TTIs before 0 count as silent.
pub fn snapshot(labels: &[u8], t: usize) -> Result<TrafficSnapshot> {
    if t == 0 {
        return Err(Error::invalid("snapshot needs t >= 1"));
    }
    if t > labels.len() {
        return Err(Error::invalid(format!("t = {t} beyond {} labels", labels.len())));
    }
    let mut e = [0.0; 7];
    for (k, slot) in e.iter_mut().take(4).enumerate() {
        *slot = label_or_pad(labels, t as isize - 1 - k as isize) as f64;
    }
    for (k, &w) in SUM_WINDOWS.iter().enumerate() {
        let have = w.min(t);
        let sum: u64 = labels[t - have..t].iter().map(|&l| l as u64).sum();
        e[4 + k] = (sum + (w - have) as u64 * SILENT_LABEL as u64) as f64;
    }
    Ok(TrafficSnapshot { entries: e })
}

/// The realized future counterpart of [`snapshot`]: labels of TTIs
/// `t..t+4` and sums over the next 10, 100 and 1000 TTIs, padded as silent
/// past the end.
pub fn future_vector(labels: &[u8], t: usize) -> [f64; 7] {
    let mut e = [0.0; 7];
    for (k, slot) in e.iter_mut().take(4).enumerate() {
        *slot = label_or_pad(labels, (t + k) as isize) as f64;
    }
    for (k, &w) in SUM_WINDOWS.iter().enumerate() {
        e[4 + k] = (t..t + w).map(|i| label_or_pad(labels, i as isize) as f64).sum();
    }
    e
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionVector {
    pub entries: [f64; 7],
    pub x_short: f64,
    pub x_long: f64,
}

impl PredictionVector {
    /// Clamps every entry into its range and forms the two sums.
    pub fn from_entries(raw: [f64; 7]) -> Self {
        let mut entries = [0.0; 7];
        for (k, v) in raw.iter().enumerate() {
            let (lo, hi) = ENTRY_RANGES[k];
            entries[k] = if v.is_nan() { lo } else { v.clamp(lo, hi) };
        }
        Self {
            entries,
            x_short: entries[..5].iter().sum(),
            x_long: entries[5..].iter().sum(),
        }
    }
}

fn range_normalizer() -> Normalizer {
    Normalizer {
        mean: ENTRY_RANGES.iter().map(|r| r.0).collect(),
        std: ENTRY_RANGES.iter().map(|r| r.1 - r.0).collect(),
    }
}

/// The forecaster F: a one-step LSTM regression net from a snapshot to the
/// next seven-entry vector, with inputs and outputs scaled by entry range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficPredictor {
    pub net: RegressionNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub net: RegressionConfig,
    /// TTIs between consecutive training snapshots.
    pub stride: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            net: RegressionConfig {
                hidden: 16,
                window: 1,
                horizon: 7,
                train: crate::neural_forecast::TrainConfig {
                    epochs: 40,
                    ..Default::default()
                },
                ..RegressionConfig::default()
            },
            stride: 100,
        }
    }
}

impl TrafficPredictor {
    /// Offline training on one UE's label stream.
    pub fn train(labels: &[u8], cfg: &PredictorConfig) -> Result<(Self, TrainReport)> {
        if cfg.stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut t = 1;
        while t + 1 < labels.len() {
            inputs.push(vec![snapshot(labels, t)?.entries.to_vec()]);
            outputs.push(future_vector(labels, t).to_vec());
            t += cfg.stride;
        }
        if inputs.is_empty() {
            return Err(Error::invalid("label stream too short to train the predictor"));
        }
        let (net, report) = RegressionNet::fit_pairs(&inputs, &outputs, range_normalizer(), range_normalizer(), &cfg.net)?;
        Ok((Self { net }, report))
    }

    pub fn predict(&self, snap: &TrafficSnapshot) -> Result<PredictionVector> {
        let y = self.net.predict(&[snap.entries.to_vec()])?;
        let mut raw = [0.0; 7];
        raw.copy_from_slice(&y);
        Ok(PredictionVector::from_entries(raw))
    }
}

/// Two-by-two table over range-normalized activity scores in `[0, 10]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    /// Scores above this are "high" short-term activity.
    pub short_boundary: f64,
    /// Scores above this are "high" long-term activity.
    pub long_boundary: f64,
    /// `sets[short_high][long_high]`.
    pub sets: [[u8; 2]; 2],
}

impl Default for ThresholdTable {
    fn default() -> Self {
        Self {
            short_boundary: 8.0,
            long_boundary: 3.0,
            sets: [[2, 4], [1, 3]],
        }
    }
}

pub fn short_score(x_short: f64) -> f64 {
    (x_short - X_SHORT_RANGE.0) / (X_SHORT_RANGE.1 - X_SHORT_RANGE.0) * 10.0
}

pub fn long_score(x_long: f64) -> f64 {
    (x_long - X_LONG_RANGE.0) / (X_LONG_RANGE.1 - X_LONG_RANGE.0) * 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MappingH {
    ThresholdTable(ThresholdTable),
    /// Tree over `[x_short, x_long]`; class `k` is DRX set `k + 1`.
    DecisionTree(DecisionTree),
}

impl Default for MappingH {
    fn default() -> Self {
        MappingH::ThresholdTable(ThresholdTable::default())
    }
}

impl MappingH {
    /// DRX set id in 1..=4. A score exactly on a boundary belongs to the
    /// lower region.
    pub fn decide(&self, p: &PredictionVector) -> u8 {
        match self {
            MappingH::ThresholdTable(t) => {
                let hs = usize::from(short_score(p.x_short) > t.short_boundary);
                let hl = usize::from(long_score(p.x_long) > t.long_boundary);
                t.sets[hs][hl]
            }
            MappingH::DecisionTree(tree) => tree.predict(&[p.x_short, p.x_long]) as u8 + 1,
        }
    }

    /// Human-readable rules, one line per split or leaf.
    pub fn describe(&self) -> String {
        match self {
            MappingH::ThresholdTable(t) => {
                let mut s = String::new();
                for (hs, short) in ["short <= ", "short > "].iter().enumerate() {
                    for (hl, long) in ["long <= ", "long > "].iter().enumerate() {
                        s += &format!(
                            "{short}{} and {long}{} -> set {}\n",
                            t.short_boundary, t.long_boundary, t.sets[hs][hl]
                        );
                    }
                }
                s
            }
            MappingH::DecisionTree(tree) => {
                let mut s = String::new();
                describe_node(tree, 0, 0, &mut s);
                s
            }
        }
    }
}

fn describe_node(tree: &DecisionTree, idx: usize, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match &tree.nodes[idx] {
        Node::Leaf { class } => *out += &format!("{pad}set {}\n", class + 1),
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let name = ["x_short", "x_long"].get(*feature).copied().unwrap_or("x");
            *out += &format!("{pad}if {name} <= {threshold}\n");
            describe_node(tree, *left, depth + 1, out);
            *out += &format!("{pad}else\n");
            describe_node(tree, *right, depth + 1, out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub context_ttis: usize,
    /// Silent TTIs simulated after each context so queued packets finish;
    /// extended when the context's transmissions need longer.
    pub drain_ttis: usize,
    /// TTIs since the UE's last activity at the start of a context; results
    /// are averaged over these.
    pub start_offsets: Vec<u32>,
    pub power: PowerModel,
    pub carrier_rate_bps: f64,
    pub tti_ms: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            context_ttis: DECISION_EPOCH_TTIS as usize,
            drain_ttis: 500,
            start_offsets: vec![0, 7, 23, 61, 113, 257],
            power: PowerModel::default(),
            carrier_rate_bps: 1e6,
            tti_ms: 1.0,
        }
    }
}

/// Per-set mean delay (ms) and energy (mJ) of one context, sets in order
/// 1..=4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextOutcome {
    pub features: [f64; 2],
    pub delay: [f64; 4],
    pub energy: [f64; 4],
}

/// Mean delay and energy of `context` (bytes per TTI) on a dedicated
/// carrier, averaged over the configured start offsets.
pub fn evaluate_context(context: &[u64], cfg: &OracleConfig) -> Result<([f64; 4], [f64; 4])> {
    if cfg.start_offsets.is_empty() {
        return Err(Error::invalid("oracle needs at least one start offset"));
    }
    let busy: u64 = context
        .iter()
        .filter(|&&b| b > 0)
        .map(|&b| transmission_duration(b, cfg.carrier_rate_bps, cfg.tti_ms) as u64)
        .sum();
    // Long enough for a backlogged context to empty under every set.
    let drain = cfg.drain_ttis.max(busy as usize + 100);
    let mut delay = [0.0; 4];
    let mut energy = [0.0; 4];
    for set in 1..=4u8 {
        let drx = DrxConfig::set(set)?;
        for &offset in &cfg.start_offsets {
            let mut ue = UeState::new(&drx, cfg.tti_ms);
            for t in 0..offset as u64 {
                ue.tick(&drx, &cfg.power, t, [], None, None)?;
            }
            let e0 = ue.energy_mj;
            let mut delays = 0u64;
            let mut delivered = 0u64;
            let mut next_id = 0;
            let start = offset as u64;
            for k in 0..(context.len() + drain) as u64 {
                let t = start + k;
                if let Some(&b) = context.get(k as usize) {
                    if b > 0 {
                        ue.enqueue(Packet {
                            id: next_id,
                            size: b,
                            enqueue_tti: t,
                        });
                        next_id += 1;
                    }
                }
                let grant = ue
                    .wants_carrier()
                    .then(|| transmission_duration(ue.head().expect("non-empty").size, cfg.carrier_rate_bps, cfg.tti_ms));
                if let Some(d) = ue.tick(&drx, &cfg.power, t, [], grant, None)? {
                    delays += d.delay();
                    delivered += 1;
                }
            }
            if delivered < next_id {
                return Err(Error::invalid("drain too short for the oracle context"));
            }
            let i = set as usize - 1;
            if delivered > 0 {
                delay[i] += delays as f64 * cfg.tti_ms / delivered as f64;
            }
            energy[i] += ue.energy_mj - e0;
        }
    }
    let k = cfg.start_offsets.len() as f64;
    delay.iter_mut().for_each(|d| *d /= k);
    energy.iter_mut().for_each(|e| *e /= k);
    Ok((delay, energy))
}

/// Mean wait of a packet arriving at a uniformly random time in steady
/// long-cycle sleep, in TTIs.
pub fn idle_access_latency(cfg: &DrxConfig) -> f64 {
    let sleep = (cfg.t_long_cycle - cfg.t_on) as f64;
    sleep * (sleep + 1.0) / (2.0 * cfg.t_long_cycle as f64)
}

fn normalized(v: &[f64; 4]) -> [f64; 4] {
    let m = v.iter().cloned().fold(0.0, f64::max);
    if m > 0.0 {
        v.map(|x| x / m)
    } else {
        [0.0; 4]
    }
}

/// Set minimizing `omega * D/max(D) + (1 - omega) * E/max(E)`; near-ties
/// are settled by the same objective on idle access latency and idle power,
/// then by the smaller id.
pub fn best_set(delay: &[f64; 4], energy: &[f64; 4], omega: f64, power: &PowerModel) -> Result<u8> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::invalid(format!("omega must be in [0, 1], got {omega}")));
    }
    let (dn, en) = (normalized(delay), normalized(energy));
    let mut lat = [0.0; 4];
    let mut idle = [0.0; 4];
    for s in 0..4 {
        let c = DrxConfig::set(s as u8 + 1)?;
        lat[s] = idle_access_latency(&c);
        idle[s] = c.steady_idle_power(power);
    }
    let (ln, pn) = (normalized(&lat), normalized(&idle));
    let obj: Vec<f64> = (0..4).map(|s| omega * dn[s] + (1.0 - omega) * en[s]).collect();
    let tie: Vec<f64> = (0..4).map(|s| omega * ln[s] + (1.0 - omega) * pn[s]).collect();
    let mut best = 0;
    for s in 1..4 {
        let diff = obj[s] - obj[best];
        if diff < -1e-9 || (diff.abs() <= 1e-9 && tie[s] < tie[best] - 1e-12) {
            best = s;
        }
    }
    Ok(best as u8 + 1)
}

/// Oracle outcomes for consecutive contexts of one UE's DL byte trace.
/// Features are the realized `(x_short, x_long)` of each context, or the
/// predictor's forecast when one is given.
pub fn oracle_contexts(
    bytes: &[u64],
    labels: &[u8],
    predictor: Option<&TrafficPredictor>,
    cfg: &OracleConfig,
) -> Result<Vec<ContextOutcome>> {
    if bytes.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "labels per TTI",
            expected: bytes.len(),
            got: labels.len(),
        });
    }
    let n = cfg.context_ttis.max(1);
    let mut out = Vec::new();
    let mut t = n;
    while t + n <= bytes.len() {
        let p = match predictor {
            Some(f) => f.predict(&snapshot(labels, t)?)?,
            None => PredictionVector::from_entries(future_vector(labels, t)),
        };
        let (delay, energy) = evaluate_context(&bytes[t..t + n], cfg)?;
        out.push(ContextOutcome {
            features: [p.x_short, p.x_long],
            delay,
            energy,
        });
        t += n;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HTrainParams {
    pub max_depth: usize,
    /// Minimum leaf size as a fraction of the training contexts.
    pub min_leaf_fraction: f64,
}

impl Default for HTrainParams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_leaf_fraction: 0.03,
        }
    }
}

/// Labels every context with its best set under `omega` and fits a shallow
/// decision tree over `(x_short, x_long)`.
pub fn train_h(contexts: &[ContextOutcome], omega: f64, power: &PowerModel, params: HTrainParams) -> Result<MappingH> {
    if contexts.is_empty() {
        return Err(Error::invalid("no oracle contexts to train H on"));
    }
    let x: Vec<Vec<f64>> = contexts.iter().map(|c| c.features.to_vec()).collect();
    let y = contexts
        .iter()
        .map(|c| Ok(best_set(&c.delay, &c.energy, omega, power)? as usize - 1))
        .collect::<Result<Vec<_>>>()?;
    let min_leaf = ((contexts.len() as f64 * params.min_leaf_fraction).ceil() as usize).max(1);
    let tree = fit_tree(
        &x,
        &y,
        4,
        TreeParams {
            max_depth: params.max_depth.min(3),
            min_samples_leaf: min_leaf,
            max_features: None,
        },
        0,
    )?;
    Ok(MappingH::DecisionTree(tree))
}

/// Adaptive DRX policy: every epoch, snapshot the label history, forecast it
/// with F and map the forecast through H.
pub struct AdaptivePolicy {
    pub predictor: Arc<TrafficPredictor>,
    pub h: Arc<MappingH>,
    pub epoch: u64,
    pub initial_set: u8,
}

impl AdaptivePolicy {
    pub fn new(predictor: Arc<TrafficPredictor>, h: Arc<MappingH>) -> Self {
        Self {
            predictor,
            h,
            epoch: DECISION_EPOCH_TTIS,
            initial_set: 2,
        }
    }
}

impl DrxPolicy for AdaptivePolicy {
    fn initial_config(&self) -> DrxConfig {
        DrxConfig::set(self.initial_set).expect("valid initial set")
    }

    fn epoch(&self) -> u64 {
        self.epoch
    }

    fn decide(&mut self, tti: u64, labels: &[u8]) -> Result<PolicyDecision> {
        let p = self.predictor.predict(&snapshot(labels, tti as usize)?)?;
        let set_id = self.h.decide(&p);
        Ok(PolicyDecision {
            set_id,
            config: DrxConfig::set(set_id)?,
            x_short: p.x_short,
            x_long: p.x_long,
        })
    }
}

#[cfg(test)]
mod tests;
