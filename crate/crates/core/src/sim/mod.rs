//! Multi-UE downlink simulation: shared carriers, per-UE DRX machines and
//! static or adaptive DRX policies.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drx::{transmission_duration, DrxConfig, DrxEvent, Packet, PowerModel, UeState};
use crate::error::{Error, Result};
use crate::trace_io::QuantizationScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_ues: usize,
    pub n_carriers: usize,
    pub carrier_rate_bps: f64,
    pub tti_ms: f64,
    pub duration_ttis: u64,
    pub power: PowerModel,
    /// Treat missing trace TTIs as silent instead of failing.
    pub zero_pad: bool,
    /// Record every phase change and delivery.
    pub log_events: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_ues: 10,
            n_carriers: 5,
            carrier_rate_bps: 1e6,
            tti_ms: 1.0,
            duration_ttis: 600_000,
            power: PowerModel::default(),
            zero_pad: false,
            log_events: false,
        }
    }
}

impl SimConfig {
    /// The 175-minute reference run.
    pub fn full_scale() -> Self {
        Self {
            duration_ttis: 175 * 60 * 1000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ues == 0 || self.n_carriers == 0 || self.duration_ttis == 0 {
            return Err(Error::invalid("n_ues, n_carriers and duration must be at least 1"));
        }
        if !(self.carrier_rate_bps > 0.0) || !(self.tti_ms > 0.0) {
            return Err(Error::invalid("carrier rate and TTI length must be positive"));
        }
        self.power.validate()
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ttis as f64 * self.tti_ms / 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub set_id: u8,
    pub config: DrxConfig,
    pub x_short: f64,
    pub x_long: f64,
}

/// A DRX policy that revisits its choice every `epoch()` TTIs using the
/// UE's quantized arrival labels so far.
pub trait DrxPolicy: Send {
    fn initial_config(&self) -> DrxConfig;
    fn epoch(&self) -> u64;
    /// `labels[t]` is the label of TTI `t`, for every TTI before `tti`.
    fn decide(&mut self, tti: u64, labels: &[u8]) -> Result<PolicyDecision>;
}

pub enum UePolicy {
    Static(DrxConfig),
    Adaptive(Box<dyn DrxPolicy>),
}

impl UePolicy {
    fn initial(&self) -> DrxConfig {
        match self {
            UePolicy::Static(c) => *c,
            UePolicy::Adaptive(p) => p.initial_config(),
        }
    }
}

/// One simulated scheme: a label and a policy per UE.
pub struct Scheme {
    pub name: String,
    pub policies: Vec<UePolicy>,
}

impl Scheme {
    pub fn uniform(name: impl Into<String>, config: DrxConfig, n_ues: usize) -> Self {
        Self {
            name: name.into(),
            policies: (0..n_ues).map(|_| UePolicy::Static(config)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketOutcome {
    pub ue: usize,
    pub enq_tti: u64,
    pub del_tti: u64,
    pub delay_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeSummary {
    pub ue: usize,
    pub energy_mj: f64,
    /// TTIs per phase, indexed by [`Phase::index`].
    pub phase_ttis: [u64; 6],
    pub tti_rx: u64,
    pub tti_active: u64,
    pub tti_sleep: u64,
    pub arrivals: u64,
    pub undelivered: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub tti: u64,
    pub ue: usize,
    pub x_short: f64,
    pub x_long: f64,
    pub set_id: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scheme: String,
    pub config: SimConfig,
    pub seed: u64,
    pub packets: Vec<PacketOutcome>,
    pub ues: Vec<UeSummary>,
    pub decisions: Vec<DecisionRecord>,
    pub events: Vec<(usize, DrxEvent)>,
}

impl SimReport {
    pub fn total_arrivals(&self) -> u64 {
        self.ues.iter().map(|u| u.arrivals).sum()
    }

    pub fn total_undelivered(&self) -> u64 {
        self.ues.iter().map(|u| u.undelivered).sum()
    }

    pub fn write_packets_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "ue,enq_tti,del_tti,delay_ms")?;
        for p in &self.packets {
            writeln!(w, "{},{},{},{}", p.ue, p.enq_tti, p.del_tti, p.delay_ms)?;
        }
        Ok(())
    }

    pub fn write_ues_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "ue,energy_mJ,tti_rx,tti_active,tti_sleep")?;
        for u in &self.ues {
            writeln!(w, "{},{},{},{},{}", u.ue, u.energy_mj, u.tti_rx, u.tti_active, u.tti_sleep)?;
        }
        Ok(())
    }

    pub fn write_decisions_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "tti,ue,x_short,x_long,set_id")?;
        for d in &self.decisions {
            writeln!(w, "{},{},{},{},{}", d.tti, d.ue, d.x_short, d.x_long, d.set_id)?;
        }
        Ok(())
    }
}

struct Lane {
    state: UeState,
    config: DrxConfig,
    policy: UePolicy,
    labels: Vec<u8>,
    arrivals: u64,
    next_packet: u64,
}

/// Runs one scheme over per-UE DL byte arrivals (one entry per TTI).
pub fn run(config: &SimConfig, traffic: &[Vec<u64>], scheme: Scheme, seed: u64) -> Result<SimReport> {
    config.validate()?;
    if traffic.len() != config.n_ues || scheme.policies.len() != config.n_ues {
        return Err(Error::invalid(format!(
            "need traffic and a policy for each of {} UEs (got {} and {})",
            config.n_ues,
            traffic.len(),
            scheme.policies.len()
        )));
    }
    for (ue, t) in traffic.iter().enumerate() {
        if (t.len() as u64) < config.duration_ttis && !config.zero_pad {
            return Err(Error::invalid(format!(
                "trace of UE {ue} covers {} TTIs, simulation needs {}",
                t.len(),
                config.duration_ttis
            )));
        }
    }
    let quantizer = QuantizationScheme::default();
    let mut lanes: Vec<Lane> = scheme
        .policies
        .into_iter()
        .zip(traffic)
        .map(|(policy, t)| {
            let cfg = policy.initial();
            cfg.validate()?;
            let labels = match policy {
                UePolicy::Adaptive(_) => (0..config.duration_ttis as usize)
                    .map(|i| quantizer.label(t.get(i).copied().unwrap_or(0)))
                    .collect(),
                UePolicy::Static(_) => Vec::new(),
            };
            Ok(Lane {
                state: UeState::new(&cfg, config.tti_ms),
                config: cfg,
                policy,
                labels,
                arrivals: 0,
                next_packet: 0,
            })
        })
        .collect::<Result<_>>()?;

    let n = config.n_ues;
    let mut carrier_free_at = vec![0u64; config.n_carriers];
    let mut holds_carrier_until = vec![0u64; n];
    let mut packets = Vec::new();
    let mut decisions = Vec::new();
    let mut events = Vec::new();
    let mut ue_events = Vec::new();
    let mut grants: Vec<Option<u32>> = vec![None; n];
    let mut candidates: Vec<(u64, usize)> = Vec::with_capacity(n);

    for t in 0..config.duration_ttis {
        for (ue, lane) in lanes.iter_mut().enumerate() {
            if let UePolicy::Adaptive(p) = &mut lane.policy {
                let epoch = p.epoch().max(1);
                if t > 0 && t % epoch == 0 {
                    let d = p.decide(t, &lane.labels[..t as usize])?;
                    d.config.validate()?;
                    decisions.push(DecisionRecord {
                        tti: t,
                        ue,
                        x_short: d.x_short,
                        x_long: d.x_long,
                        set_id: d.set_id,
                    });
                    if d.config != lane.config {
                        lane.config = d.config;
                        lane.state.reconfigure(&d.config);
                    }
                }
            }
            let bytes = traffic[ue].get(t as usize).copied().unwrap_or(0);
            if bytes > 0 {
                lane.state.enqueue(Packet {
                    id: lane.next_packet,
                    size: bytes,
                    enqueue_tti: t,
                });
                lane.next_packet += 1;
                lane.arrivals += 1;
            }
        }

        candidates.clear();
        for (ue, lane) in lanes.iter().enumerate() {
            if holds_carrier_until[ue] <= t && lane.state.wants_carrier() {
                candidates.push((lane.state.head().expect("non-empty").enqueue_tti, ue));
            }
        }
        candidates.sort_unstable();
        grants.iter_mut().for_each(|g| *g = None);
        let mut next_candidate = candidates.iter();
        for free_at in carrier_free_at.iter_mut() {
            if *free_at > t {
                continue;
            }
            let Some(&(_, ue)) = next_candidate.next() else { break };
            let size = lanes[ue].state.head().expect("candidate has a packet").size;
            let ttis = transmission_duration(size, config.carrier_rate_bps, config.tti_ms);
            *free_at = t + ttis as u64;
            holds_carrier_until[ue] = t + ttis as u64;
            grants[ue] = Some(ttis);
        }
        let busy = carrier_free_at.iter().filter(|&&f| f > t).count();
        if busy < config.n_carriers && next_candidate.next().is_some() {
            return Err(Error::ContractViolation(format!(
                "carrier idle at TTI {t} while a reachable UE has data"
            )));
        }

        for (ue, lane) in lanes.iter_mut().enumerate() {
            let log = config.log_events.then_some(&mut ue_events);
            if let Some(d) = lane.state.tick(&lane.config, &config.power, t, [], grants[ue], log)? {
                packets.push(PacketOutcome {
                    ue,
                    enq_tti: d.packet.enqueue_tti,
                    del_tti: d.completion_tti,
                    delay_ms: (d.delay() as f64 * config.tti_ms).round() as u64,
                });
            }
            events.extend(ue_events.drain(..).map(|e| (ue, e)));
        }
    }

    let ues = lanes
        .iter()
        .enumerate()
        .map(|(ue, lane)| {
            let (rx, active, sleep) = lane.state.power_class_ttis();
            let pending = lane.state.buffer.len() as u64 + u64::from(lane.state.in_flight().is_some());
            UeSummary {
                ue,
                energy_mj: lane.state.energy_mj,
                phase_ttis: lane.state.phase_ttis,
                tti_rx: rx,
                tti_active: active,
                tti_sleep: sleep,
                arrivals: lane.arrivals,
                undelivered: pending,
            }
        })
        .collect();
    Ok(SimReport {
        scheme: scheme.name,
        config: config.clone(),
        seed,
        packets,
        ues,
        decisions,
        events,
    })
}

/// Runs every scheme over the same traffic, in parallel.
pub fn compare_schemes(config: &SimConfig, traffic: &[Vec<u64>], schemes: Vec<Scheme>, seed: u64) -> Result<Vec<SimReport>> {
    schemes
        .into_par_iter()
        .map(|s| run(config, traffic, s, seed))
        .collect()
}

#[cfg(test)]
mod tests;
