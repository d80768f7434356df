use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{RateProfile, SensorGeometry, DEFAULT_WINDOW_US};
use crate::partition::{PartitionConfig, Strategy};
use crate::receiver::DEFAULT_STALL_WINDOWS;
use crate::reduction::Bandwidth;
use crate::transport::{DEFAULT_BURST_US, DEFAULT_QUEUE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Simulated,
    Sockets,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulated" | "sim" => Ok(Mode::Simulated),
            "sockets" | "socket" => Ok(Mode::Sockets),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

/// Everything needed to run one publisher/relay/receiver experiment.
///
/// Files use TOML (`key = value` per line); every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `.evst` source; when absent a synthetic stream is generated.
    pub input: Option<PathBuf>,
    pub profile: RateProfile,
    /// Length of a synthetic stream.
    pub duration_s: f64,
    pub width: u16,
    pub height: u16,
    pub window_us: u64,
    pub strategy: Strategy,
    pub tracks: u16,
    pub events_per_track: u32,
    pub bandwidth_mbps: f64,
    /// Exact link rate in bits per second; overrides `bandwidth_mbps`.
    pub bandwidth_bps: Option<u64>,
    /// Shaper burst, as milliseconds of traffic at the link rate.
    pub burst_ms: f64,
    pub latency_target_ms: f64,
    pub mode: Mode,
    pub seed: u64,
    pub queue_cap: usize,
    /// One-way delay of each hop (publisher to relay, relay to receiver).
    pub propagation_us: u64,
    /// Time between session start and the first window deadline.
    pub warmup_us: u64,
    pub stall_windows: u64,
    /// Adds a second receiver that subscribes to every track and never adapts.
    pub passive_receiver: bool,
    pub session_id: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            input: None,
            profile: RateProfile::Constant(2_000),
            duration_s: 30.0,
            width: SensorGeometry::HD.width,
            height: SensorGeometry::HD.height,
            window_us: DEFAULT_WINDOW_US,
            strategy: Strategy::Bucket,
            tracks: 5,
            events_per_track: 250,
            bandwidth_mbps: 100.0,
            bandwidth_bps: None,
            burst_ms: DEFAULT_BURST_US as f64 / 1e3,
            latency_target_ms: 5.0,
            mode: Mode::Simulated,
            seed: 0,
            queue_cap: DEFAULT_QUEUE_CAP,
            propagation_us: 250,
            warmup_us: 10_000,
            stall_windows: DEFAULT_STALL_WINDOWS,
            passive_receiver: false,
            session_id: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.partition()?;
        self.geometry()?;
        self.bandwidth()?;
        if self.window_us == 0 {
            return Err(Error::Config("window length must be positive".into()));
        }
        if !(self.burst_ms.is_finite() && self.burst_ms >= 0.0) {
            return Err(Error::Config(format!("invalid burst {}", self.burst_ms)));
        }
        if !(self.latency_target_ms.is_finite() && self.latency_target_ms > 0.0) {
            return Err(Error::Config(format!("invalid latency target {}", self.latency_target_ms)));
        }
        if self.input.is_none() && !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Config(format!("invalid duration {}", self.duration_s)));
        }
        if self.queue_cap == 0 {
            return Err(Error::Config("queue capacity must be positive".into()));
        }
        if self.session_id == 0 {
            return Err(Error::Config("session id 0 is reserved".into()));
        }
        Ok(())
    }

    pub fn partition(&self) -> Result<PartitionConfig> {
        PartitionConfig::new(self.strategy, self.tracks, self.events_per_track)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn geometry(&self) -> Result<SensorGeometry> {
        SensorGeometry::new(self.width, self.height).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn bandwidth(&self) -> Result<Bandwidth> {
        match self.bandwidth_bps {
            Some(bps) => Bandwidth::from_bps(bps),
            None => Bandwidth::from_mbps(self.bandwidth_mbps),
        }
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn burst_us(&self) -> u64 {
        (self.burst_ms * 1e3).round() as u64
    }

    pub fn latency_target_us(&self) -> u64 {
        (self.latency_target_ms * 1e3).round() as u64
    }

    /// Window count of a synthetic stream.
    pub fn synthetic_windows(&self) -> u64 {
        ((self.duration_s * 1e6) / self.window_us as f64).round().max(1.0) as u64
    }
}
