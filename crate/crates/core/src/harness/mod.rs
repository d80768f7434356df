//! End-to-end experiments: source loading, simulated and socket runs,
//! artifacts and sweeps.

mod config;
pub mod live;
pub mod sim;
mod sweep;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

pub use config::{ExperimentConfig, Mode};
pub use sweep::{sweep, write_sweep_csv, SweepRow, SWEEP_HEADER};

use crate::adaptation::WindowMetrics;
use crate::error::{Error, Result};
use crate::event::{
    flatten, generate_synthetic, read_evst, window_split, write_evst, EventWindow, SensorGeometry, EVENT_BITS,
};
use crate::receiver::{ReceiverConfig, ReceiverMode, ReconstructedWindow};
use crate::sink::{summarize, write_metrics_csv, write_summary_json, RunSummary};
use crate::transport::Announce;
use sim::{AuditEntry, SimParams};

/// Peak bit rate of one full track: `E` 128-bit records per window.
pub fn track_rate(events_per_track: u32, window_length: u64) -> f64 {
    (events_per_track as u128 * EVENT_BITS as u128 * 1_000_000) as f64 / window_length as f64
}

/// Loads the configured `.evst` file or generates the synthetic stream, split
/// into windows.
pub fn load_source(config: &ExperimentConfig) -> Result<(SensorGeometry, Vec<EventWindow>)> {
    match &config.input {
        Some(path) => {
            let (header, events) = read_evst(File::open(path)?)?;
            Ok((header.geometry, window_split(&events, config.window_us)?))
        }
        None => {
            let geometry = config.geometry()?;
            let n = config.synthetic_windows();
            let counts = config.profile.counts(n);
            let events = generate_synthetic(geometry, config.window_us, &counts, config.seed);
            let mut windows = window_split(&events, config.window_us)?;
            while (windows.len() as u64) < n {
                windows.push(EventWindow::empty(windows.len() as u64, config.window_us));
            }
            Ok((geometry, windows))
        }
    }
}

/// Results for one receiver.
#[derive(Debug, Clone)]
pub struct ReceiverReport {
    pub mode: ReceiverMode,
    pub metrics: Vec<WindowMetrics>,
    pub windows: Vec<EventWindow>,
    pub summary: RunSummary,
    pub lost_windows: u64,
    pub discarded_segments: u64,
    pub relay_drops: u64,
}

impl ReceiverReport {
    /// Attaches source counts (when the source is known) and summarizes.
    /// `counters` is (lost windows, discarded segments, relay drops).
    pub fn build(
        mode: ReceiverMode,
        rebuilt: Vec<ReconstructedWindow>,
        source: Option<&[EventWindow]>,
        session_start: u64,
        counters: (u64, u64, u64),
    ) -> Result<Self> {
        let total = source.map(|s| s.iter().map(|w| w.len() as u64).sum());
        let mut metrics = Vec::with_capacity(rebuilt.len());
        let mut windows = Vec::with_capacity(rebuilt.len());
        for r in rebuilt {
            let mut m = r.metrics;
            m.source_events = source.and_then(|s| s.get(m.window_index as usize)).map(|w| w.len() as u64);
            metrics.push(m);
            windows.push(r.window);
        }
        let end = metrics.iter().map(|m| m.reconstruct_time).max().unwrap_or(session_start);
        let summary = summarize(&metrics, end.saturating_sub(session_start), total)?;
        Ok(Self {
            mode,
            metrics,
            windows,
            summary,
            lost_windows: counters.0,
            discarded_segments: counters.1,
            relay_drops: counters.2,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub geometry: SensorGeometry,
    pub source_events: u64,
    pub publisher_dropped: u64,
    /// Windows as published (after the bucket cap).
    pub published: Vec<EventWindow>,
    /// The adaptive receiver first, then the passive one if configured.
    pub receivers: Vec<ReceiverReport>,
    /// Control-plane log (simulated mode only).
    pub audit: Vec<AuditEntry>,
}

impl ExperimentRun {
    pub fn primary(&self) -> &ReceiverReport {
        &self.receivers[0]
    }

    pub fn summary(&self) -> &RunSummary {
        &self.primary().summary
    }

    /// Writes `metrics.csv` and `summary.json` for the adaptive receiver and,
    /// when requested, its reconstructed stream as `reconstructed.evst`.
    /// A passive receiver gets `passive_metrics.csv` / `passive_summary.json`.
    pub fn write_artifacts(&self, dir: &Path, reconstructed: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, r) in self.receivers.iter().enumerate() {
            let prefix = if i == 0 { "" } else { "passive_" };
            write_metrics_csv(BufWriter::new(File::create(dir.join(format!("{prefix}metrics.csv")))?), &r.metrics)?;
            write_summary_json(File::create(dir.join(format!("{prefix}summary.json")))?, &r.summary)?;
        }
        if reconstructed {
            write_evst(
                File::create(dir.join("reconstructed.evst"))?,
                self.geometry,
                &flatten(&self.primary().windows),
            )?;
        }
        Ok(())
    }
}

/// Session description for `config` over a source of `geometry`.
pub fn announce(config: &ExperimentConfig, geometry: SensorGeometry) -> Announce {
    Announce {
        session_id: config.session_id,
        tracks: config.tracks,
        events_per_track: config.events_per_track,
        geometry,
        window_length: config.window_us,
        strategy: config.strategy,
    }
}

fn receiver_configs(config: &ExperimentConfig) -> Vec<ReceiverConfig> {
    let mut adaptive = ReceiverConfig::adaptive(config.latency_target_us());
    adaptive.stall_windows = config.stall_windows;
    let mut out = vec![adaptive];
    if config.passive_receiver {
        let mut passive = ReceiverConfig::passive();
        passive.stall_windows = config.stall_windows;
        out.push(passive);
    }
    out
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let (geometry, source) = load_source(config)?;
    if source.iter().all(|w| w.is_empty()) {
        return Err(Error::NoData("source stream has no events".into()));
    }
    match config.mode {
        Mode::Simulated => run_simulated(config, geometry, source),
        Mode::Sockets => live::run_local(config, geometry, source),
    }
}

fn run_simulated(
    config: &ExperimentConfig,
    geometry: SensorGeometry,
    source: Vec<EventWindow>,
) -> Result<ExperimentRun> {
    let params = SimParams {
        announce: announce(config, geometry),
        bandwidth: config.bandwidth()?,
        burst_us: config.burst_us(),
        queue_cap: config.queue_cap,
        propagation_us: config.propagation_us,
        session_start: config.warmup_us,
        receivers: receiver_configs(config),
    };
    let out = sim::simulate(&source, &params)?;
    let receivers = out
        .receivers
        .into_iter()
        .zip(&params.receivers)
        .map(|(r, cfg)| {
            ReceiverReport::build(
                cfg.mode,
                r.windows,
                Some(&source),
                params.session_start,
                (r.lost_windows, r.discarded_segments, r.relay_drops),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentRun {
        config: config.clone(),
        geometry,
        source_events: source.iter().map(|w| w.len() as u64).sum(),
        publisher_dropped: out.publisher_dropped,
        published: out.published,
        receivers,
        audit: out.audit,
    })
}
