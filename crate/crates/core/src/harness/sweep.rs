use std::io::Write;

use serde::Serialize;

use super::{run_experiment, ExperimentConfig};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub bandwidth_mbps: f64,
    pub tracks: u16,
    pub max_latency_ms: f64,
    pub median_latency_ms: f64,
    pub mean_latency_ms: f64,
    pub mean_throughput_mbps: f64,
    pub loss_fraction: f64,
}

pub const SWEEP_HEADER: &str =
    "bandwidth_mbps,tracks,max_latency_ms,median_latency_ms,mean_latency_ms,mean_throughput_mbps,loss_fraction";

/// Runs every configuration and returns one row each, ordered by bandwidth
/// and then track count.
pub fn sweep(configs: &[ExperimentConfig]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(configs.len());
    for c in configs {
        let run = run_experiment(c)?;
        let s = run.summary();
        rows.push(SweepRow {
            bandwidth_mbps: c.bandwidth()?.mbps(),
            tracks: c.tracks,
            max_latency_ms: s.max_latency_ms,
            median_latency_ms: s.median_latency_ms,
            mean_latency_ms: s.mean_latency_ms,
            mean_throughput_mbps: s.mean_throughput_mbps,
            loss_fraction: s.loss_fraction.unwrap_or(0.0),
        });
    }
    rows.sort_by(|a, b| a.bandwidth_mbps.total_cmp(&b.bandwidth_mbps).then(a.tracks.cmp(&b.tracks)));
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.3},{:.3},{:.3},{:.3},{:.4}",
            r.bandwidth_mbps,
            r.tracks,
            r.max_latency_ms,
            r.median_latency_ms,
            r.mean_latency_ms,
            r.mean_throughput_mbps,
            r.loss_fraction
        )?;
    }
    Ok(())
}
