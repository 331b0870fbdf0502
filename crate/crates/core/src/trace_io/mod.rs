//! Packet traces: CSV ingestion and export, a seeded per-application
//! traffic synthesizer, and per-TTI byte quantization into labels 1..=9.

mod csv_io;
mod quantize;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use csv_io::{load_trace, parse_trace, save_trace, write_trace, LoadOptions, UnsortedPolicy};
pub use quantize::{quantize_tti_arrivals, tti_byte_totals, QuantizationScheme};
pub use synth::{
    synthesize_labeled_session, synthesize_trace, synthesize_user_trace, AppModel, Cadence,
    SynthDefaults, UserProfile, Variation, DEFAULTS_TEXT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Ul,
    Dl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    Tcp,
    Udp,
    Other,
}

/// Application generating the traffic. The discriminant doubles as the
/// class index used by the classifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AppClass {
    Surf = 0,
    VideoCall = 1,
    VoiceCall = 2,
    VideoStream = 3,
}

impl AppClass {
    pub const ALL: [AppClass; 4] = [
        AppClass::Surf,
        AppClass::VideoCall,
        AppClass::VoiceCall,
        AppClass::VideoStream,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AppClass::Surf => "SURF",
            AppClass::VideoCall => "VIDEO_CALL",
            AppClass::VoiceCall => "VOICE_CALL",
            AppClass::VideoStream => "VIDEO_STREAM",
        }
    }

    /// Section name of this class in the synthesizer defaults file.
    pub fn config_key(self) -> &'static str {
        match self {
            AppClass::Surf => "surf",
            AppClass::VideoCall => "video_call",
            AppClass::VoiceCall => "voice_call",
            AppClass::VideoStream => "video_stream",
        }
    }
}

impl fmt::Display for AppClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AppClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        match norm.as_str() {
            "SURF" => Ok(AppClass::Surf),
            "VIDEO_CALL" | "VCALL" => Ok(AppClass::VideoCall),
            "VOICE_CALL" | "VOICE" => Ok(AppClass::VoiceCall),
            "VIDEO_STREAM" | "STREAM" => Ok(AppClass::VideoStream),
            _ => Err(Error::UnknownClass(s.to_string())),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Ul => "UL",
            Direction::Dl => "DL",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "UL" => Ok(Direction::Ul),
            "DL" => Ok(Direction::Dl),
            other => Err(format!("direction must be UL or DL, found `{other}`")),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Tcp => "TCP",
            Protocol::Udp => "UDP",
            Protocol::Other => "OTHER",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "TCP" => Ok(Protocol::Tcp),
            "UDP" => Ok(Protocol::Udp),
            "OTHER" => Ok(Protocol::Other),
            other => Err(format!("protocol must be TCP, UDP or OTHER, found `{other}`")),
        }
    }
}

/// One captured IP packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    /// Seconds since trace start.
    pub timestamp: f64,
    pub direction: Direction,
    /// Bytes on the wire.
    pub size: u32,
    pub protocol: Protocol,
    pub app: Option<AppClass>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub records: Vec<PacketRecord>,
    /// Seconds; never smaller than the last timestamp.
    pub duration: f64,
    pub labeled: bool,
}

impl Trace {
    pub fn new(records: Vec<PacketRecord>, duration: f64) -> Self {
        let labeled = !records.is_empty() && records.iter().all(|r| r.app.is_some());
        let last = records.last().map_or(0.0, |r| r.timestamp);
        Self {
            records,
            duration: duration.max(last),
            labeled,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, direction: Direction) -> usize {
        self.records
            .iter()
            .filter(|r| r.direction == direction)
            .count()
    }

    /// Appends `other` shifted to start at this trace's end.
    pub fn append_shifted(&mut self, other: Trace) {
        let offset = self.duration;
        self.records.extend(other.records.into_iter().map(|mut r| {
            r.timestamp = round_micros(r.timestamp + offset);
            r
        }));
        self.duration = offset + other.duration;
        self.labeled = !self.records.is_empty() && self.records.iter().all(|r| r.app.is_some());
    }
}

/// Rounds to the microsecond grid the CSV writer uses, so traces survive a
/// save/load cycle unchanged.
pub(crate) fn round_micros(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}
