//! Seeded synthetic traffic. Every class is a two-state burst process
//! whose parameters live in `defaults.kv`; see that file for the model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::{round_micros, AppClass, Direction, PacketRecord, Protocol, Trace};
use crate::error::{Error, Result};
use crate::kv::KvMap;

pub const DEFAULTS_TEXT: &str = include_str!("defaults.kv");

const MIN_PACKET: f64 = 20.0;
const MAX_PACKET: f64 = 1500.0;
const PERIODIC_JITTER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cadence {
    Exponential,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppModel {
    pub cadence: Cadence,
    pub jitter: f64,
    pub on_mean_s: f64,
    pub off_mean_s: f64,
    pub periodic: bool,
    pub ul_rate_on: f64,
    pub dl_rate_on: f64,
    pub ul_rate_off: f64,
    pub dl_rate_off: f64,
    pub ul_size_mean: f64,
    pub ul_size_sd: f64,
    pub dl_size_mean: f64,
    pub dl_size_sd: f64,
    pub udp_fraction: f64,
    pub udp_flip_prob: f64,
}

impl AppModel {
    /// Long-run UL packets per DL packet implied by the configured rates.
    pub fn ul_dl_ratio(&self) -> f64 {
        let on = self.on_mean_s / (self.on_mean_s + self.off_mean_s);
        let ul = on * self.ul_rate_on + (1.0 - on) * self.ul_rate_off;
        let dl = on * self.dl_rate_on + (1.0 - on) * self.dl_rate_off;
        ul / dl
    }

    fn from_kv(kv: &KvMap, section: &str) -> Result<Self> {
        let f = |k: &str| kv.require::<f64>(&format!("{section}.{k}"));
        let cadence = match kv.require::<String>(&format!("{section}.cadence"))?.as_str() {
            "exp" => Cadence::Exponential,
            "uniform" => Cadence::Uniform,
            other => return Err(Error::Config(format!("{section}.cadence: unknown `{other}`"))),
        };
        let periodic = match kv.require::<String>(&format!("{section}.arrivals"))?.as_str() {
            "poisson" => false,
            "periodic" => true,
            other => return Err(Error::Config(format!("{section}.arrivals: unknown `{other}`"))),
        };
        let m = Self {
            cadence,
            jitter: f("jitter")?,
            on_mean_s: f("on_mean_s")?,
            off_mean_s: f("off_mean_s")?,
            periodic,
            ul_rate_on: f("ul_rate_on")?,
            dl_rate_on: f("dl_rate_on")?,
            ul_rate_off: f("ul_rate_off")?,
            dl_rate_off: f("dl_rate_off")?,
            ul_size_mean: f("ul_size_mean")?,
            ul_size_sd: f("ul_size_sd")?,
            dl_size_mean: f("dl_size_mean")?,
            dl_size_sd: f("dl_size_sd")?,
            udp_fraction: f("udp_fraction")?,
            udp_flip_prob: f("udp_flip_prob")?,
        };
        if m.on_mean_s <= 0.0 || m.off_mean_s <= 0.0 || !(0.0..1.0).contains(&m.jitter) {
            return Err(Error::Config(format!("{section}: state durations must be > 0 and jitter in [0,1)")));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variation {
    pub rate_scale: (f64, f64),
    pub size_scale: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub idle_mean_s: f64,
    pub session_mean_s: f64,
    /// Indexed by `AppClass::index`.
    pub weights: [f64; 4],
    pub background_ul_rate: f64,
    pub background_dl_rate: f64,
    pub background_size: u32,
    pub rate_scale: f64,
}

impl UserProfile {
    fn from_kv(kv: &KvMap, section: &str) -> Result<Self> {
        let f = |k: &str| kv.require::<f64>(&format!("{section}.{k}"));
        let mut weights = [0.0; 4];
        for app in AppClass::ALL {
            weights[app.index()] = f(&format!("weight_{}", app.config_key()))?;
        }
        if weights.iter().any(|w| *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(format!("{section}: weights must be >= 0 with a positive sum")));
        }
        Ok(Self {
            idle_mean_s: f("idle_mean_s")?,
            session_mean_s: f("session_mean_s")?,
            weights,
            background_ul_rate: f("background_ul_rate")?,
            background_dl_rate: f("background_dl_rate")?,
            background_size: kv.require(&format!("{section}.background_size"))?,
            rate_scale: f("rate_scale")?,
        })
    }
}

/// The parsed defaults file.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDefaults {
    pub version: u32,
    pub variation: Variation,
    apps: [AppModel; 4],
    pub predict_user: UserProfile,
    pub drx_user: UserProfile,
}

impl SynthDefaults {
    pub fn builtin() -> Self {
        Self::parse(DEFAULTS_TEXT).expect("built-in synthesizer defaults are valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;
        let apps = [
            AppModel::from_kv(&kv, AppClass::Surf.config_key())?,
            AppModel::from_kv(&kv, AppClass::VideoCall.config_key())?,
            AppModel::from_kv(&kv, AppClass::VoiceCall.config_key())?,
            AppModel::from_kv(&kv, AppClass::VideoStream.config_key())?,
        ];
        let variation = Variation {
            rate_scale: (
                kv.require("variation.rate_scale_min")?,
                kv.require("variation.rate_scale_max")?,
            ),
            size_scale: (
                kv.require("variation.size_scale_min")?,
                kv.require("variation.size_scale_max")?,
            ),
        };
        Ok(Self {
            version: kv.require("version")?,
            variation,
            apps,
            predict_user: UserProfile::from_kv(&kv, "user.predict")?,
            drx_user: UserProfile::from_kv(&kv, "user.drx")?,
        })
    }

    pub fn app(&self, app: AppClass) -> &AppModel {
        &self.apps[app.index()]
    }

    pub fn app_mut(&mut self, app: AppClass) -> &mut AppModel {
        &mut self.apps[app.index()]
    }
}

/// Capture-specific draws applied on top of an `AppModel`.
#[derive(Debug, Clone, Copy)]
struct Capture {
    rate_scale: f64,
    size_scale: f64,
    udp_fraction: f64,
}

impl Capture {
    fn draw(rng: &mut ChaCha8Rng, var: &Variation, model: &AppModel) -> Self {
        let (rlo, rhi) = var.rate_scale;
        let (slo, shi) = var.size_scale;
        let rate_scale = rlo + (rhi - rlo) * rng.random::<f64>();
        let size_scale = (slo.ln() + (shi.ln() - slo.ln()) * rng.random::<f64>()).exp();
        let udp_fraction = if rng.random::<f64>() < model.udp_flip_prob {
            1.0 - model.udp_fraction
        } else {
            model.udp_fraction
        };
        Self {
            rate_scale,
            size_scale,
            udp_fraction,
        }
    }
}

fn check_duration(duration: f64) -> Result<()> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::invalid(format!("duration must be > 0 s, got {duration}")));
    }
    Ok(())
}

/// Single-application trace; every record is labeled `app`.
pub fn synthesize_trace(
    defaults: &SynthDefaults,
    app: AppClass,
    duration: f64,
    seed: u64,
) -> Result<Trace> {
    check_duration(duration)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = defaults.app(app);
    let cap = Capture::draw(&mut rng, &defaults.variation, model);
    let mut out = Vec::new();
    emit_app(&mut rng, model, &cap, 1.0, app, 0.0, duration, &mut out);
    Ok(finish(out, duration))
}

/// Concatenated single-application segments, one per entry of `apps`, each
/// `segment_s` long. Used for the labeled classification datasets.
pub fn synthesize_labeled_session(
    defaults: &SynthDefaults,
    apps: &[AppClass],
    segment_s: f64,
    seed: u64,
) -> Result<Trace> {
    check_duration(segment_s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Trace {
        labeled: true,
        ..Trace::default()
    };
    for &app in apps {
        let sub = rng.random::<u64>();
        trace.append_shifted(synthesize_trace(defaults, app, segment_s, sub)?);
    }
    Ok(trace)
}

/// Per-user traffic: application sessions separated by idle gaps with
/// background traffic. Records are labeled with the session application;
/// background packets carry no label, so the result is unlabeled.
pub fn synthesize_user_trace(
    defaults: &SynthDefaults,
    profile: &UserProfile,
    duration: f64,
    seed: u64,
) -> Result<Trace> {
    check_duration(duration)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let captures: Vec<Capture> = AppClass::ALL
        .iter()
        .map(|&a| Capture::draw(&mut rng, &defaults.variation, defaults.app(a)))
        .collect();
    let idle = Exp::new(1.0 / profile.idle_mean_s).map_err(|e| Error::Config(e.to_string()))?;
    let session = Exp::new(1.0 / profile.session_mean_s).map_err(|e| Error::Config(e.to_string()))?;
    let total_w: f64 = profile.weights.iter().sum();

    let mut out = Vec::new();
    let mut t = 0.0;
    let mut in_session = rng.random::<f64>()
        < profile.session_mean_s / (profile.session_mean_s + profile.idle_mean_s);
    while t < duration {
        if in_session {
            let len = session.sample(&mut rng);
            let end = (t + len).min(duration);
            let mut pick = rng.random::<f64>() * total_w;
            let mut app = AppClass::Surf;
            for a in AppClass::ALL {
                app = a;
                pick -= profile.weights[a.index()];
                if pick < 0.0 {
                    break;
                }
            }
            emit_app(
                &mut rng,
                defaults.app(app),
                &captures[app.index()],
                profile.rate_scale,
                app,
                t,
                end,
                &mut out,
            );
            t = end;
        } else {
            let end = (t + idle.sample(&mut rng)).min(duration);
            for (dir, rate) in [
                (Direction::Ul, profile.background_ul_rate),
                (Direction::Dl, profile.background_dl_rate),
            ] {
                let mut ts = Vec::new();
                poisson_times(&mut rng, rate, t, end, &mut ts);
                out.extend(ts.into_iter().map(|timestamp| PacketRecord {
                    timestamp,
                    direction: dir,
                    size: profile.background_size,
                    protocol: Protocol::Tcp,
                    app: None,
                }));
            }
            t = end;
        }
        in_session = !in_session;
    }
    let mut trace = finish(out, duration);
    trace.labeled = false;
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn emit_app(
    rng: &mut ChaCha8Rng,
    model: &AppModel,
    cap: &Capture,
    rate_scale: f64,
    app: AppClass,
    start: f64,
    end: f64,
    out: &mut Vec<PacketRecord>,
) {
    let scale = cap.rate_scale * rate_scale;
    let ul_size = normal(model.ul_size_mean * cap.size_scale, model.ul_size_sd * cap.size_scale);
    let dl_size = normal(model.dl_size_mean * cap.size_scale, model.dl_size_sd * cap.size_scale);
    let p_on = model.on_mean_s / (model.on_mean_s + model.off_mean_s);
    let mut on = rng.random::<f64>() < p_on;
    let mut t = start;
    let mut times = Vec::new();
    while t < end {
        let mean = if on { model.on_mean_s } else { model.off_mean_s };
        let len = match model.cadence {
            Cadence::Exponential => -mean * (1.0 - rng.random::<f64>()).ln(),
            Cadence::Uniform => mean * (1.0 + model.jitter * (2.0 * rng.random::<f64>() - 1.0)),
        };
        let seg_end = (t + len).min(end);
        let (ul_rate, dl_rate) = if on {
            (model.ul_rate_on, model.dl_rate_on)
        } else {
            (model.ul_rate_off, model.dl_rate_off)
        };
        for (dir, rate, sizes) in [
            (Direction::Ul, ul_rate * scale, &ul_size),
            (Direction::Dl, dl_rate * scale, &dl_size),
        ] {
            times.clear();
            if model.periodic {
                periodic_times(rng, rate, t, seg_end, &mut times);
            } else {
                poisson_times(rng, rate, t, seg_end, &mut times);
            }
            for &timestamp in &times {
                let size = sizes.sample(rng).clamp(MIN_PACKET, MAX_PACKET).round() as u32;
                let protocol = if rng.random::<f64>() < cap.udp_fraction {
                    Protocol::Udp
                } else {
                    Protocol::Tcp
                };
                out.push(PacketRecord {
                    timestamp,
                    direction: dir,
                    size,
                    protocol,
                    app: Some(app),
                });
            }
        }
        t = seg_end;
        on = !on;
    }
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd.max(0.0)).expect("finite size parameters")
}

fn poisson_times(rng: &mut ChaCha8Rng, rate: f64, start: f64, end: f64, out: &mut Vec<f64>) {
    if rate <= 0.0 {
        return;
    }
    let mut t = start;
    loop {
        t += -(1.0 - rng.random::<f64>()).ln() / rate;
        if t >= end {
            break;
        }
        out.push(t);
    }
}

fn periodic_times(rng: &mut ChaCha8Rng, rate: f64, start: f64, end: f64, out: &mut Vec<f64>) {
    if rate <= 0.0 {
        return;
    }
    let period = 1.0 / rate;
    let mut t = start + period * rng.random::<f64>();
    while t < end {
        out.push(t);
        t += period * (1.0 + PERIODIC_JITTER * (2.0 * rng.random::<f64>() - 1.0));
    }
}

fn finish(mut records: Vec<PacketRecord>, duration: f64) -> Trace {
    for r in &mut records {
        r.timestamp = round_micros(r.timestamp);
        if r.timestamp >= duration {
            // rounding can push the last packet onto the boundary
            r.timestamp = round_micros(duration - 1e-6).max(0.0);
        }
    }
    records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let labeled = !records.is_empty() && records.iter().all(|r| r.app.is_some());
    Trace {
        records,
        duration,
        labeled,
    }
}
