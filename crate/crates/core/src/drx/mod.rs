//! Per-UE RRC-connected DRX state machine at TTI resolution with a
//! base-station packet buffer and energy accounting.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Five DRX timers, all in TTIs (ms at the default TTI length).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DrxConfig {
    pub t_inactivity: u32,
    pub t_on: u32,
    pub t_short_cycle: u32,
    pub n_short_cycles: u32,
    pub t_long_cycle: u32,
}

impl DrxConfig {
    pub fn new(t_inactivity: u32, t_on: u32, t_short_cycle: u32, n_short_cycles: u32, t_long_cycle: u32) -> Result<Self> {
        let c = Self {
            t_inactivity,
            t_on,
            t_short_cycle,
            n_short_cycles,
            t_long_cycle,
        };
        c.validate()?;
        Ok(c)
    }

    /// From the `[T_I, T_on, T_sc, N_sc, T_lc]` encoding.
    pub fn from_array(v: [u32; 5]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn to_array(self) -> [u32; 5] {
        [
            self.t_inactivity,
            self.t_on,
            self.t_short_cycle,
            self.n_short_cycles,
            self.t_long_cycle,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_inactivity == 0 || self.t_on == 0 || self.t_short_cycle == 0 || self.t_long_cycle == 0 {
            return Err(Error::invalid(format!("DRX timers must be at least 1 TTI: {self}")));
        }
        if self.t_on > self.t_short_cycle || self.t_on > self.t_long_cycle {
            return Err(Error::invalid(format!("on-duration exceeds a cycle length: {self}")));
        }
        Ok(())
    }

    /// The four predefined parameter sets, `id` in 1..=4.
    pub fn set(id: u8) -> Result<Self> {
        let v = match id {
            1 => [2, 1, 5, 10, 15],
            2 => [2, 1, 10, 1, 50],
            3 => [10, 3, 4, 20, 10],
            4 => [10, 3, 4, 10, 50],
            _ => return Err(Error::invalid(format!("DRX set id must be 1..=4, got {id}"))),
        };
        Self::from_array(v)
    }

    /// Never sleeps: every cycle is entirely on-duration.
    pub fn always_on() -> Self {
        Self {
            t_inactivity: 1,
            t_on: 1,
            t_short_cycle: 1,
            n_short_cycles: 0,
            t_long_cycle: 1,
        }
    }

    /// Mean power once the UE has settled into long cycles with no traffic.
    pub fn steady_idle_power(&self, power: &PowerModel) -> f64 {
        let on = self.t_on as f64;
        let cycle = self.t_long_cycle as f64;
        (on * power.p_active + (cycle - on) * power.p_sleep) / cycle
    }

    fn duration(&self, phase: Phase) -> u32 {
        match phase {
            Phase::Receiving => 0,
            Phase::Inactivity => self.t_inactivity,
            Phase::ShortSleep => self.t_short_cycle - self.t_on,
            Phase::ShortOn | Phase::LongOn => self.t_on,
            Phase::LongSleep => self.t_long_cycle - self.t_on,
        }
    }
}

impl fmt::Display for DrxConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_array();
        write!(f, "[{},{},{},{},{}]", v[0], v[1], v[2], v[3], v[4])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    /// mW while receiving.
    pub p_rx: f64,
    /// mW while awake without reception.
    pub p_active: f64,
    /// mW while asleep.
    pub p_sleep: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            p_rx: 200.0,
            p_active: 100.0,
            p_sleep: 10.0,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        if self.p_rx > self.p_active && self.p_active > self.p_sleep && self.p_sleep > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("power model must satisfy p_rx > p_active > p_sleep > 0"))
        }
    }

    pub fn of(&self, phase: Phase) -> f64 {
        match phase.power_class() {
            PowerClass::Rx => self.p_rx,
            PowerClass::Active => self.p_active,
            PowerClass::Sleep => self.p_sleep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Receiving,
    Inactivity,
    ShortSleep,
    ShortOn,
    LongSleep,
    LongOn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerClass {
    Rx,
    Active,
    Sleep,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Receiving,
        Phase::Inactivity,
        Phase::ShortSleep,
        Phase::ShortOn,
        Phase::LongSleep,
        Phase::LongOn,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether the UE is monitoring the control channel.
    pub fn is_reachable(self) -> bool {
        !matches!(self, Phase::ShortSleep | Phase::LongSleep)
    }

    pub fn power_class(self) -> PowerClass {
        match self {
            Phase::Receiving => PowerClass::Rx,
            Phase::Inactivity | Phase::ShortOn | Phase::LongOn => PowerClass::Active,
            Phase::ShortSleep | Phase::LongSleep => PowerClass::Sleep,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Receiving => "RECEIVING",
            Phase::Inactivity => "INACTIVITY",
            Phase::ShortSleep => "SHORT_SLEEP",
            Phase::ShortOn => "SHORT_ON",
            Phase::LongSleep => "LONG_SLEEP",
            Phase::LongOn => "LONG_ON",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// TTIs needed to send `size` bytes at `rate_bps`; at least one.
pub fn transmission_duration(size: u64, rate_bps: f64, tti_ms: f64) -> u32 {
    assert!(rate_bps > 0.0 && tti_ms > 0.0, "rate and TTI must be positive");
    let ttis = (size as f64 * 8.0 * 1000.0 / (rate_bps * tti_ms)).ceil();
    (ttis as u32).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub id: u64,
    pub size: u64,
    pub enqueue_tti: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub packet: Packet,
    /// First TTI after the last transmission TTI.
    pub completion_tti: u64,
}

impl Delivery {
    pub fn delay(&self) -> u64 {
        self.completion_tti - self.packet.enqueue_tti
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DrxEvent {
    PhaseChange { tti: u64, from: Phase, to: Phase },
    Delivered { tti: u64, delivery: Delivery },
}

impl DrxEvent {
    fn csv_fields(&self) -> (u64, &'static str, String) {
        match self {
            DrxEvent::PhaseChange { tti, from, to } => (*tti, "phase", format!("{from}->{to}")),
            DrxEvent::Delivered { tti, delivery } => (
                *tti,
                "delivered",
                format!("packet={} delay={}", delivery.packet.id, delivery.delay()),
            ),
        }
    }
}

pub fn write_event_log_csv<W: Write>(w: &mut W, events: &[(usize, DrxEvent)]) -> std::io::Result<()> {
    writeln!(w, "tti,ue_id,event,detail")?;
    for (ue, e) in events {
        let (tti, kind, detail) = e.csv_fields();
        writeln!(w, "{tti},{ue},{kind},{detail}")?;
    }
    Ok(())
}

/// Per-UE DRX position, buffered packets and accumulated energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeState {
    pub phase: Phase,
    /// TTIs left in the current phase, counting the next one.
    pub phase_timer: u32,
    pub short_cycles_done: u32,
    pub buffer: VecDeque<Packet>,
    in_flight: Option<Packet>,
    pub energy_mj: f64,
    /// TTIs spent in each phase, indexed by [`Phase::index`].
    pub phase_ttis: [u64; 6],
    tti_s: f64,
}

impl UeState {
    /// A UE that has just become inactive at TTI 0.
    pub fn new(config: &DrxConfig, tti_ms: f64) -> Self {
        Self {
            phase: Phase::Inactivity,
            phase_timer: config.t_inactivity,
            short_cycles_done: 0,
            buffer: VecDeque::new(),
            in_flight: None,
            energy_mj: 0.0,
            phase_ttis: [0; 6],
            tti_s: tti_ms / 1000.0,
        }
    }

    pub fn is_reachable(&self) -> bool {
        self.phase.is_reachable()
    }

    /// Reachable with something to send and no delivery under way.
    pub fn wants_carrier(&self) -> bool {
        self.is_reachable() && self.phase != Phase::Receiving && !self.buffer.is_empty()
    }

    pub fn head(&self) -> Option<&Packet> {
        self.buffer.front()
    }

    pub fn in_flight(&self) -> Option<&Packet> {
        self.in_flight.as_ref()
    }

    pub fn enqueue(&mut self, packet: Packet) {
        self.buffer.push_back(packet);
    }

    /// TTIs by power class: `(rx, active, sleep)`.
    pub fn power_class_ttis(&self) -> (u64, u64, u64) {
        let mut out = (0, 0, 0);
        for p in Phase::ALL {
            let n = self.phase_ttis[p.index()];
            match p.power_class() {
                PowerClass::Rx => out.0 += n,
                PowerClass::Active => out.1 += n,
                PowerClass::Sleep => out.2 += n,
            }
        }
        out
    }

    /// Energy recomputed from the per-phase TTI counters.
    pub fn energy_from_counters(&self, power: &PowerModel) -> f64 {
        Phase::ALL
            .iter()
            .map(|&p| self.phase_ttis[p.index()] as f64 * power.of(p) * self.tti_s)
            .sum()
    }

    fn enter(&mut self, config: &DrxConfig, mut phase: Phase, tti: u64, events: &mut Option<&mut Vec<DrxEvent>>) {
        // zero-length sleeps are skipped
        loop {
            let d = config.duration(phase);
            if d > 0 {
                if let Some(ev) = events.as_deref_mut() {
                    ev.push(DrxEvent::PhaseChange {
                        tti,
                        from: self.phase,
                        to: phase,
                    });
                }
                self.phase = phase;
                self.phase_timer = d;
                return;
            }
            phase = match phase {
                Phase::ShortSleep => Phase::ShortOn,
                Phase::LongSleep => Phase::LongOn,
                other => unreachable!("{other} always has a positive duration"),
            };
        }
    }

    fn after_cycles(&self, config: &DrxConfig) -> Phase {
        if self.short_cycles_done < config.n_short_cycles {
            Phase::ShortSleep
        } else {
            Phase::LongSleep
        }
    }

    /// Advances one TTI: enqueue `arrivals`, start a delivery of the
    /// head-of-line packet if `grant` carries its transmission length, charge
    /// this TTI's energy, then run the timers. Returns the delivery that
    /// completes at the end of this TTI, if any.
    pub fn tick(
        &mut self,
        config: &DrxConfig,
        power: &PowerModel,
        tti: u64,
        arrivals: impl IntoIterator<Item = Packet>,
        grant: Option<u32>,
        mut events: Option<&mut Vec<DrxEvent>>,
    ) -> Result<Option<Delivery>> {
        self.buffer.extend(arrivals);
        if let Some(ttis) = grant {
            if !self.is_reachable() || self.phase == Phase::Receiving {
                return Err(Error::ContractViolation(format!(
                    "grant at TTI {tti} while UE is in {}",
                    self.phase
                )));
            }
            let packet = self
                .buffer
                .pop_front()
                .ok_or_else(|| Error::ContractViolation(format!("grant at TTI {tti} with an empty buffer")))?;
            if ttis == 0 {
                return Err(Error::ContractViolation("grant of zero TTIs".into()));
            }
            self.in_flight = Some(packet);
            if let Some(ev) = events.as_deref_mut() {
                ev.push(DrxEvent::PhaseChange {
                    tti,
                    from: self.phase,
                    to: Phase::Receiving,
                });
            }
            self.phase = Phase::Receiving;
            self.phase_timer = ttis;
        }

        self.energy_mj += power.of(self.phase) * self.tti_s;
        self.phase_ttis[self.phase.index()] += 1;

        self.phase_timer -= 1;
        if self.phase_timer > 0 {
            return Ok(None);
        }
        let next_tti = tti + 1;
        let mut delivered = None;
        match self.phase {
            Phase::Receiving => {
                let packet = self.in_flight.take().expect("receiving implies a packet in flight");
                let d = Delivery {
                    packet,
                    completion_tti: next_tti,
                };
                if let Some(ev) = events.as_deref_mut() {
                    ev.push(DrxEvent::Delivered { tti: next_tti, delivery: d });
                }
                delivered = Some(d);
                self.short_cycles_done = 0;
                self.enter(config, Phase::Inactivity, next_tti, &mut events);
            }
            Phase::Inactivity => {
                self.short_cycles_done = 0;
                let next = self.after_cycles(config);
                self.enter(config, next, next_tti, &mut events);
            }
            Phase::ShortSleep => self.enter(config, Phase::ShortOn, next_tti, &mut events),
            Phase::ShortOn => {
                self.short_cycles_done += 1;
                let next = self.after_cycles(config);
                self.enter(config, next, next_tti, &mut events);
            }
            Phase::LongSleep => self.enter(config, Phase::LongOn, next_tti, &mut events),
            Phase::LongOn => self.enter(config, Phase::LongSleep, next_tti, &mut events),
        }
        Ok(delivered)
    }

    /// Switches parameter sets mid-run: the phase is kept and its remaining
    /// time is clamped to the new phase length. Receptions are unaffected.
    pub fn reconfigure(&mut self, config: &DrxConfig) {
        if self.phase != Phase::Receiving {
            let d = config.duration(self.phase);
            if d == 0 {
                // a sleep that no longer exists: go straight to its on-duration
                self.phase = match self.phase {
                    Phase::ShortSleep => Phase::ShortOn,
                    _ => Phase::LongOn,
                };
                self.phase_timer = self.phase_timer.min(config.t_on).max(1);
            } else {
                self.phase_timer = self.phase_timer.min(d);
            }
        }
    }
}
