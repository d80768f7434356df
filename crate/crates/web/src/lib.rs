//! Browser bindings for the demo page in `www/`. Every entry point returns a
//! JSON string so the page can stay plain JavaScript.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use evstream::event::{Event, EventWindow, Polarity, SensorGeometry, DEFAULT_WINDOW_US};
use evstream::harness::{run_experiment, ExperimentConfig, Mode};
use evstream::partition::{PartitionConfig, Strategy, TrackId};
use evstream::reduction::{budget_events, sample_even, truncate_tail};
use evstream::sink::build_tensor;

// Errors stay strings until the exported boundary; `JsValue` only exists
// on wasm targets, and this keeps the logic testable natively.
type Out<T = String> = Result<T, String>;

fn js_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn to_json<T: Serialize>(v: &T) -> Out {
    serde_json::to_string(v).map_err(js_err)
}

fn export(r: Out) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[derive(Serialize)]
struct SimPoint {
    window: u64,
    latency_ms: f64,
    tracks: u16,
    chunk: f64,
    received: u64,
    source: Option<u64>,
}

#[derive(Serialize)]
struct SimView {
    config: ExperimentConfig,
    summary: evstream::sink::RunSummary,
    series: Vec<SimPoint>,
    publisher_dropped: u64,
}

/// Runs a virtual-time experiment described by a TOML config and returns the
/// adaptive receiver's per-window series and summary.
#[wasm_bindgen]
pub fn simulate(config_toml: &str) -> Result<String, JsValue> {
    export(simulate_json(config_toml))
}

fn simulate_json(config_toml: &str) -> Out {
    let config = ExperimentConfig::from_toml(config_toml).map_err(js_err)?;
    if config.mode != Mode::Simulated || config.input.is_some() {
        return Err(js_err("the browser demo runs synthetic streams in simulated mode only"));
    }
    let run = run_experiment(&config).map_err(js_err)?;
    let series = run
        .primary()
        .metrics
        .iter()
        .map(|m| SimPoint {
            window: m.window_index,
            latency_ms: m.latency as f64 / 1e3,
            tracks: m.subscribed_tracks,
            chunk: m.chunk_size,
            received: m.received_events,
            source: m.source_events,
        })
        .collect();
    to_json(&SimView { summary: run.summary().clone(), series, publisher_dropped: run.publisher_dropped, config })
}

#[derive(Serialize)]
struct PartitionView {
    /// Track of each source event, or `null` if the bucket cap dropped it.
    assignment: Vec<Option<TrackId>>,
    /// Source positions in reconstruction order using tracks `0..keep`.
    reconstructed: Vec<usize>,
}

/// Splits `count` events over `tracks` tracks and rebuilds from the first
/// `keep` of them.
#[wasm_bindgen]
pub fn partition_demo(
    strategy: &str,
    count: u32,
    tracks: u16,
    events_per_track: u32,
    keep: u16,
) -> Result<String, JsValue> {
    export(partition_demo_json(strategy, count, tracks, events_per_track, keep))
}

fn partition_demo_json(strategy: &str, count: u32, tracks: u16, events_per_track: u32, keep: u16) -> Out {
    let strategy: Strategy = strategy.parse().map_err(js_err)?;
    let cfg = PartitionConfig::new(strategy, tracks, events_per_track).map_err(js_err)?;
    // timestamps double as source positions
    let events = (0..count as u64).map(|i| Event::new(i, 0, 0, Polarity::Positive)).collect();
    let window = EventWindow::with_events(0, DEFAULT_WINDOW_US, events);
    let part = cfg.partition(&window);
    let mut assignment = vec![None; count as usize];
    for seg in &part.segments {
        for e in &seg.events {
            assignment[e.t as usize] = Some(seg.track_id);
        }
    }
    let held: Vec<TrackId> = (0..keep.min(tracks)).collect();
    let rebuilt = cfg.reconstruct(&part.segments, &held).map_err(js_err)?;
    to_json(&PartitionView { assignment, reconstructed: rebuilt.iter().map(|e| e.t as usize).collect() })
}

const DEMO_GEOMETRY: SensorGeometry = SensorGeometry { width: 160, height: 120 };

/// One window of a bright bar sweeping left to right over sensor noise, so
/// the reduction modes differ visibly in where they keep events.
fn sweeping_bar(count: u32, seed: u64) -> EventWindow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (DEMO_GEOMETRY.width as u64, DEMO_GEOMETRY.height);
    let mut ts: Vec<u64> = (0..count).map(|_| rng.random_range(0..DEFAULT_WINDOW_US)).collect();
    ts.sort_unstable();
    let events = ts
        .into_iter()
        .map(|t| {
            let p = if rng.random_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            if rng.random_bool(0.15) {
                return Event::new(t, rng.random_range(0..w as u16), rng.random_range(0..h), p);
            }
            let centre = 8 + t * (w - 16) / DEFAULT_WINDOW_US;
            let x = (centre + rng.random_range(0..9)).saturating_sub(4).min(w - 1);
            // leading edge brightens, trailing edge darkens
            let p = if x >= centre { Polarity::Positive } else { Polarity::Negative };
            Event::new(t, x as u16, rng.random_range(20..h - 20), p)
        })
        .collect();
    EventWindow::with_events(0, DEFAULT_WINDOW_US, events)
}

#[derive(Serialize)]
struct ReductionView {
    width: u16,
    height: u16,
    budget: u64,
    source_events: usize,
    kept_events: usize,
    /// Per-pixel counts, positive minus negative polarity.
    source: Vec<i32>,
    kept: Vec<i32>,
    source_bins: Vec<u64>,
    kept_bins: Vec<u64>,
}

fn signed_plane(window: &EventWindow) -> Out<(Vec<i32>, Vec<u64>)> {
    let t = build_tensor(window, DEMO_GEOMETRY).map_err(js_err)?;
    let [neg, pos] = t.polarity_planes();
    let plane = pos.iter().zip(&neg).map(|(&a, &b)| a as i32 - b as i32).collect();
    let per_bin = DEMO_GEOMETRY.pixels();
    let bins = (0..t.bins)
        .map(|tau| {
            (0..2)
                .map(|p| t.counts[(p * t.bins + tau) * per_bin..][..per_bin].iter().map(|&c| c as u64).sum::<u64>())
                .sum()
        })
        .collect();
    Ok((plane, bins))
}

/// Reduces one synthetic window to what a `bandwidth_mbps` link carries and
/// returns before/after event images and sub-bin histograms.
#[wasm_bindgen]
pub fn reduce_window(count: u32, bandwidth_mbps: f64, mode: &str, seed: u64) -> Result<String, JsValue> {
    export(reduce_window_json(count, bandwidth_mbps, mode, seed))
}

fn reduce_window_json(count: u32, bandwidth_mbps: f64, mode: &str, seed: u64) -> Out {
    let window = sweeping_bar(count, seed);
    let budget = budget_events(bandwidth_mbps, DEFAULT_WINDOW_US).map_err(js_err)?;
    let kept = match mode {
        "tail" => truncate_tail(&window, budget),
        "even" => sample_even(&window, budget, 10).map_err(js_err)?,
        other => return Err(js_err(format!("unknown mode {other:?}"))),
    };
    let (source, source_bins) = signed_plane(&window)?;
    let (kept_plane, kept_bins) = signed_plane(&kept)?;
    to_json(&ReductionView {
        width: DEMO_GEOMETRY.width,
        height: DEMO_GEOMETRY.height,
        budget,
        source_events: window.len(),
        kept_events: kept.len(),
        source,
        kept: kept_plane,
        source_bins,
        kept_bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_keeps_a_prefix() {
        let v: serde_json::Value = serde_json::from_str(&partition_demo_json("bucket", 10, 3, 3, 2).unwrap()).unwrap();
        assert_eq!(v["reconstructed"], serde_json::json!([0, 1, 2, 3, 4, 5]));
        assert_eq!(v["assignment"][9], serde_json::Value::Null);
    }

    #[test]
    fn round_robin_interleaves() {
        let v: serde_json::Value =
            serde_json::from_str(&partition_demo_json("round_robin", 7, 3, 3, 2).unwrap()).unwrap();
        assert_eq!(v["assignment"][4], 1);
        assert_eq!(v["reconstructed"], serde_json::json!([0, 1, 3, 4, 6]));
    }

    #[test]
    fn even_mode_spreads_over_the_window() {
        let tail: serde_json::Value =
            serde_json::from_str(&reduce_window_json(20_000, 1.0, "tail", 1).unwrap()).unwrap();
        let even: serde_json::Value =
            serde_json::from_str(&reduce_window_json(20_000, 1.0, "even", 1).unwrap()).unwrap();
        assert_eq!(tail["kept_events"], 390);
        assert_eq!(even["kept_events"], 390);
        assert_eq!(tail["kept_bins"][9], 0);
        assert!(even["kept_bins"].as_array().unwrap().iter().all(|b| b.as_u64().unwrap() >= 38));
    }

    #[test]
    fn simulate_reports_a_series() {
        let v: serde_json::Value =
            serde_json::from_str(&simulate_json("duration_s = 0.5\nbandwidth_mbps = 5\n").unwrap()).unwrap();
        assert_eq!(v["series"].as_array().unwrap().len(), 10);
        assert!(simulate_json("mode = \"sockets\"").is_err());
    }
}
