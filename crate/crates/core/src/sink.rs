//! Consumers of reconstructed windows: the detector-input tensor, run
//! statistics and the on-disk metric formats.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::adaptation::WindowMetrics;
use crate::error::{Error, Result};
use crate::event::{EventWindow, SensorGeometry};
use crate::reduction::{loss_rate, sub_bin};

/// Temporal sub-bins per window in the detector representation.
pub const TENSOR_BINS: usize = 10;

/// Per-window event histogram of shape `(2T, H, W)`: cell
/// `(p * T + tau, y, x)` counts events of polarity `p` in sub-bin `tau` at
/// pixel `(x, y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventTensor {
    pub window_index: u64,
    pub bins: usize,
    pub geometry: SensorGeometry,
    pub counts: Vec<u32>,
}

impl EventTensor {
    pub fn shape(&self) -> [usize; 3] {
        [2 * self.bins, self.geometry.height as usize, self.geometry.width as usize]
    }

    pub fn index(&self, channel: usize, y: usize, x: usize) -> usize {
        (channel * self.geometry.height as usize + y) * self.geometry.width as usize + x
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> u32 {
        self.counts[self.index(channel, y, x)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Share of this tensor's mass also present in `other`
    /// (`sum min(a, b) / sum a`). 1.0 when this tensor is empty.
    pub fn retained_in(&self, other: &EventTensor) -> f64 {
        let total = self.total();
        if total == 0 {
            return 1.0;
        }
        let common: u64 = self.counts.iter().zip(&other.counts).map(|(&a, &b)| a.min(b) as u64).sum();
        common as f64 / total as f64
    }

    /// Sums each polarity over time, giving two `H x W` planes.
    pub fn polarity_planes(&self) -> [Vec<u32>; 2] {
        let plane = self.geometry.pixels();
        let mut out = [vec![0u32; plane], vec![0u32; plane]];
        for (p, dst) in out.iter_mut().enumerate() {
            for tau in 0..self.bins {
                let base = (p * self.bins + tau) * plane;
                for (d, &c) in dst.iter_mut().zip(&self.counts[base..base + plane]) {
                    *d += c;
                }
            }
        }
        out
    }

    /// Little-endian `u32` cells in row-major `(2T, H, W)` order.
    pub fn write_raw<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(self.counts.len() * 4);
        for c in &self.counts {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn sidecar(&self) -> TensorSidecar {
        TensorSidecar {
            shape: self.shape(),
            width: self.geometry.width,
            height: self.geometry.height,
            bins: self.bins,
            window_index: self.window_index,
            dtype: "u32le".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSidecar {
    pub shape: [usize; 3],
    pub width: u16,
    pub height: u16,
    pub bins: usize,
    pub window_index: u64,
    pub dtype: String,
}

pub fn build_tensor(window: &EventWindow, geometry: SensorGeometry) -> Result<EventTensor> {
    build_tensor_bins(window, geometry, TENSOR_BINS)
}

pub fn build_tensor_bins(window: &EventWindow, geometry: SensorGeometry, bins: usize) -> Result<EventTensor> {
    if bins == 0 {
        return Err(Error::Parameter("tensor needs at least one time bin".into()));
    }
    let mut t =
        EventTensor { window_index: window.index, bins, geometry, counts: vec![0; 2 * bins * geometry.pixels()] };
    for e in &window.events {
        geometry.check(e)?;
        if e.t < window.start_t || e.t >= window.end_t() {
            return Err(Error::Parameter(format!("event t={} outside window {}", e.t, window.index)));
        }
        let tau = sub_bin(e.t, window.start_t, window.length_us, bins as u64) as usize;
        let ch = e.p.as_u8() as usize * bins + tau;
        let idx = t.index(ch, e.y as usize, e.x as usize);
        t.counts[idx] += 1;
    }
    Ok(t)
}

/// Aggregate statistics of a run, in the units of the result tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub windows: usize,
    pub max_latency_ms: f64,
    pub median_latency_ms: f64,
    pub mean_latency_ms: f64,
    pub mean_throughput_mbps: f64,
    /// Total-event loss against the source, when the source count is known.
    pub loss_fraction: Option<f64>,
    pub received_events: u64,
    pub source_events: Option<u64>,
    pub duration_us: u64,
}

/// Exact max/median/mean latency over `series`, mean throughput over
/// `duration_us` and loss against `source_events` (or, if absent, the
/// per-window source counts when every window carries one).
pub fn summarize(series: &[WindowMetrics], duration_us: u64, source_events: Option<u64>) -> Result<RunSummary> {
    if series.is_empty() {
        return Err(Error::NoData("no reconstructed windows".into()));
    }
    let mut lat: Vec<u64> = series.iter().map(|m| m.latency).collect();
    lat.sort_unstable();
    let n = lat.len();
    let median_us = if n % 2 == 1 { lat[n / 2] as f64 } else { (lat[n / 2 - 1] as f64 + lat[n / 2] as f64) / 2.0 };
    let sum: u128 = lat.iter().map(|&l| l as u128).sum();
    let received_events: u64 = series.iter().map(|m| m.received_events).sum();
    let received_bytes: u64 = series.iter().map(|m| m.received_bytes).sum();
    let source = source_events.or_else(|| series.iter().map(|m| m.source_events).sum());
    let loss_fraction = source.map(|s| loss_rate(s, received_events)).transpose()?;
    let mean_throughput_mbps = if duration_us == 0 { 0.0 } else { received_bytes as f64 * 8.0 / duration_us as f64 };
    Ok(RunSummary {
        windows: n,
        max_latency_ms: *lat.last().unwrap() as f64 / 1e3,
        median_latency_ms: median_us / 1e3,
        mean_latency_ms: sum as f64 / n as f64 / 1e3,
        mean_throughput_mbps,
        loss_fraction,
        received_events,
        source_events: source,
        duration_us,
    })
}

pub const METRICS_HEADER: &str = "window_index,latency_us,received_events,received_bytes,subscribed_tracks,chunk_size";

/// One CSV row per window.
pub fn write_metrics_csv<W: Write>(mut w: W, series: &[WindowMetrics]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for m in series {
        writeln!(
            w,
            "{},{},{},{},{},{:.3}",
            m.window_index, m.latency, m.received_events, m.received_bytes, m.subscribed_tracks, m.chunk_size
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV written by [`write_metrics_csv`]. Send and reconstruct
/// times are not stored, so they come back as zero and `latency`.
pub fn read_metrics_csv<R: Read>(r: R) -> Result<Vec<WindowMetrics>> {
    let mut lines = BufReader::new(r).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == METRICS_HEADER => {}
        _ => return Err(Error::Format("metrics CSV header missing".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("metrics CSV row {}", i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let int = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
        let latency = int(f[1])?;
        out.push(WindowMetrics {
            window_index: int(f[0])?,
            first_send_time: 0,
            reconstruct_time: latency,
            latency,
            received_events: int(f[2])?,
            received_bytes: int(f[3])?,
            source_events: None,
            subscribed_tracks: f[4].trim().parse().map_err(|_| bad())?,
            chunk_size: f[5].trim().parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

pub fn write_summary_json<W: Write>(w: W, summary: &RunSummary) -> Result<()> {
    serde_json::to_writer_pretty(w, summary).map_err(|e| Error::Io(e.into()))
}
