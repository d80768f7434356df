use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tracing::info;

use evstream::clock::monotonic_us;
use evstream::event::{
    generate_synthetic, read_evst, read_text, window_split, write_evst, Event, RateProfile, SensorGeometry, EVENT_BITS,
};
use evstream::harness::live::{publish, subscribe};
use evstream::harness::{
    announce, load_source, run_experiment, sweep, write_sweep_csv, ExperimentConfig, Mode, ReceiverReport,
};
use evstream::partition::Strategy;
use evstream::receiver::{ReceiverConfig, ReceiverMode};
use evstream::reduction::{loss_rate, reduce_windows, ReduceMode};
use evstream::sink::{build_tensor, read_metrics_csv, summarize, write_metrics_csv, write_summary_json};
use evstream::transport::net::{RelayConfig, RelayServer};
use evstream::{Error, Result};

#[derive(Parser)]
#[command(name = "evstream", version, about = "Scalable multi-track streaming of event-camera data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run publisher, relay and receiver together (virtual time or loopback sockets).
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `simulated` (virtual time) or `sockets` (loopback TCP).
        #[arg(long)]
        mode: Option<Mode>,
        /// Directory for metrics.csv and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the adaptive receiver's stream as reconstructed.evst.
        #[arg(long)]
        reconstructed: bool,
    },
    /// Run one simulation per (bandwidth, track count) pair and print a table.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,5,25,50,100")]
        bandwidths: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "5,10,25")]
        track_counts: Vec<u16>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a stream to a relay, one window every window length.
    Publish {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1:4443")]
        relay: String,
        /// Delay before the first window, in milliseconds.
        #[arg(long, default_value_t = 500)]
        start_delay: u64,
    },
    /// Serve one session: accept a publisher and shape traffic to subscribers.
    Relay {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1:4443")]
        listen: String,
        /// Shaper queue capacity per track, in segments.
        #[arg(long)]
        queue_cap: Option<usize>,
    },
    /// Join a session, adapt the subscription and record metrics.
    Subscribe {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1:4443")]
        relay: String,
        /// Subscribe to every track and never adapt.
        #[arg(long)]
        passive: bool,
        /// Directory for metrics.csv, summary.json and reconstructed.evst.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Source stream, for loss accounting.
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Drop events that do not fit a fixed link, window by window.
    Reduce {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "tail")]
        mode: ReduceMode,
        /// Per-window kept/source counts as CSV.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Describe an event file, or summarize a metrics CSV.
    Stats {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `.evst` or text event file.
        #[arg(long = "in", conflicts_with = "metrics")]
        input: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Write a synthetic stream as `.evst`.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export one window as a (2T, H, W) count tensor plus JSON sidecar.
    Tensor {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        window: u64,
        /// Output prefix; writes `<prefix>.u32` and `<prefix>.json`.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Flags shared by every subcommand. Each overrides the config file.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source `.evst` file (otherwise a synthetic stream).
    #[arg(long)]
    input_stream: Option<PathBuf>,
    /// Synthetic profile: `constant:N`, `surge:N` or `N,N,...`.
    #[arg(long)]
    profile: Option<RateProfile>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    tracks: Option<u16>,
    #[arg(long)]
    events_per_track: Option<u32>,
    /// Link rate in Mbps.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Shaper burst in milliseconds of link time.
    #[arg(long)]
    burst: Option<f64>,
    /// Receiver latency target in milliseconds.
    #[arg(long)]
    latency_target: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    session: Option<u64>,
    #[arg(long)]
    passive_receiver: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.input_stream {
            c.input = Some(v.clone());
        }
        if let Some(v) = &self.profile {
            c.profile = v.clone();
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {$(
                if let Some(v) = self.$flag {
                    c.$field = v;
                }
            )*};
        }
        set!(duration => duration_s, strategy => strategy, tracks => tracks,
             events_per_track => events_per_track, burst => burst_ms,
             latency_target => latency_target_ms, seed => seed, session => session_id);
        if let Some(b) = self.bandwidth {
            c.bandwidth_mbps = b;
            c.bandwidth_bps = None;
        }
        c.passive_receiver |= self.passive_receiver;
        c.validate()?;
        Ok(c)
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

/// `.txt` / `.csv` files are read as text events; anything else as `.evst`.
fn read_events(path: &Path, c: &ExperimentConfig) -> Result<(SensorGeometry, Vec<Event>)> {
    let text = matches!(path.extension().and_then(|e| e.to_str()), Some("txt" | "csv"));
    let f = BufReader::new(open(path)?);
    if text {
        let events = read_text(f)?;
        let geometry = c.geometry()?;
        events.iter().try_for_each(|e| geometry.check(e))?;
        Ok((geometry, events))
    } else {
        let (h, events) = read_evst(f)?;
        Ok((h.geometry, events))
    }
}

fn mode_name(mode: ReceiverMode) -> &'static str {
    match mode {
        ReceiverMode::Adaptive { .. } => "adaptive",
        ReceiverMode::Passive => "passive",
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_report(dir: &Path, report: &ReceiverReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_metrics_csv(BufWriter::new(File::create(dir.join("metrics.csv"))?), &report.metrics)?;
    write_summary_json(File::create(dir.join("summary.json"))?, &report.summary)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { cfg, mode, out, reconstructed } => {
            let mut c = cfg.resolve()?;
            c.mode = mode.unwrap_or(c.mode);
            let run = run_experiment(&c)?;
            if let Some(dir) = out {
                run.write_artifacts(&dir, reconstructed)?;
                info!(dir = %dir.display(), "artifacts written");
            }
            let receivers: Vec<_> = run
                .receivers
                .iter()
                .map(|r| {
                    json!({
                        "mode": mode_name(r.mode),
                        "summary": r.summary,
                        "lost_windows": r.lost_windows,
                        "discarded_segments": r.discarded_segments,
                        "relay_drops": r.relay_drops,
                    })
                })
                .collect();
            print_json(&json!({
                "source_events": run.source_events,
                "publisher_dropped": run.publisher_dropped,
                "receivers": receivers,
            }))
        }
        Command::Sweep { cfg, bandwidths, track_counts, out } => {
            let base = cfg.resolve()?;
            let mut configs = Vec::new();
            for &b in &bandwidths {
                for &n in &track_counts {
                    configs.push(ExperimentConfig {
                        bandwidth_mbps: b,
                        bandwidth_bps: None,
                        tracks: n,
                        ..base.clone()
                    });
                }
            }
            let rows = sweep(&configs)?;
            match out {
                Some(path) => write_sweep_csv(BufWriter::new(File::create(path)?), &rows),
                None => write_sweep_csv(std::io::stdout().lock(), &rows),
            }
        }
        Command::Publish { cfg, relay, start_delay } => {
            let c = cfg.resolve()?;
            let (geometry, windows) = load_source(&c)?;
            let start = monotonic_us() + start_delay * 1_000;
            let report = publish(relay.as_str(), announce(&c, geometry), &windows, start)?;
            print_json(&json!({
                "windows": report.published.len(),
                "segments": report.segments,
                "publisher_dropped": report.dropped,
            }))
        }
        Command::Relay { cfg, listen, queue_cap } => {
            let c = cfg.resolve()?;
            let server = RelayServer::bind(
                listen.as_str(),
                RelayConfig {
                    bandwidth: c.bandwidth()?,
                    burst_us: c.burst_us(),
                    queue_cap: queue_cap.unwrap_or(c.queue_cap),
                },
            )?;
            info!(addr = %server.local_addr()?, "relay listening");
            let report = server.run()?;
            print_json(&json!({ "segments_in": report.segments_in, "drops": report.drops }))
        }
        Command::Subscribe { cfg, relay, passive, out, source } => {
            let c = cfg.resolve()?;
            let mut rc = if passive || c.passive_receiver {
                ReceiverConfig::passive()
            } else {
                ReceiverConfig::adaptive(c.latency_target_us())
            };
            rc.stall_windows = c.stall_windows;
            let run = subscribe(relay.as_str(), c.session_id, rc, |w| {
                info!(
                    window = w.metrics.window_index,
                    latency_us = w.metrics.latency,
                    tracks = w.metrics.subscribed_tracks
                )
            })?;
            let source = match source {
                Some(path) => Some(window_split(&read_events(&path, &c)?.1, run.announce.window_length)?),
                None => None,
            };
            let start = run.windows.iter().map(|w| w.metrics.first_send_time).min().unwrap_or(0);
            let windows: Vec<Event> = run.windows.iter().flat_map(|w| w.window.events.iter().copied()).collect();
            let report = ReceiverReport::build(
                if passive { ReceiverMode::Passive } else { rc.mode },
                run.windows,
                source.as_deref(),
                start,
                (run.lost_windows, run.discarded_segments, 0),
            )?;
            if let Some(dir) = out {
                write_report(&dir, &report)?;
                write_evst(
                    BufWriter::new(File::create(dir.join("reconstructed.evst"))?),
                    run.announce.geometry,
                    &windows,
                )?;
            }
            print_json(&json!({
                "summary": report.summary,
                "lost_windows": report.lost_windows,
                "discarded_segments": report.discarded_segments,
            }))
        }
        Command::Reduce { cfg, input, out, mode, stats } => {
            let c = cfg.resolve()?;
            let (geometry, events) = read_events(&input, &c)?;
            let windows = window_split(&events, c.window_us)?;
            let (kept, per_window) = reduce_windows(&windows, c.bandwidth()?, mode)?;
            let kept_events: Vec<Event> = kept.iter().flat_map(|w| w.events.iter().copied()).collect();
            write_evst(BufWriter::new(File::create(&out)?), geometry, &kept_events)?;
            if let Some(path) = stats {
                let mut w = BufWriter::new(File::create(path)?);
                writeln!(w, "window_index,source_events,kept_events")?;
                for s in &per_window {
                    writeln!(w, "{},{},{}", s.window_index, s.source_events, s.kept_events)?;
                }
                w.flush()?;
            }
            print_json(&json!({
                "bandwidth_mbps": c.bandwidth()?.mbps(),
                "mode": format!("{mode:?}").to_lowercase(),
                "windows": windows.len(),
                "source_events": events.len(),
                "kept_events": kept_events.len(),
                "loss_fraction": loss_rate(events.len() as u64, kept_events.len() as u64)?,
            }))
        }
        Command::Stats { cfg, input, metrics } => {
            let c = cfg.resolve()?;
            if let Some(path) = metrics {
                // The CSV has no wall-clock columns; throughput is taken over
                // the span of windows it covers.
                let series = read_metrics_csv(BufReader::new(open(&path)?))?;
                let first = series.iter().map(|m| m.window_index).min().unwrap_or(0);
                let last = series.iter().map(|m| m.window_index).max().unwrap_or(0);
                let summary = summarize(&series, (last - first + 1) * c.window_us, None)?;
                return print_json(&serde_json::to_value(summary).map_err(|e| Error::Io(e.into()))?);
            }
            let path = input.ok_or_else(|| Error::Config("stats needs --in or --metrics".into()))?;
            let (geometry, events) = read_events(&path, &c)?;
            let windows = window_split(&events, c.window_us)?;
            let counts: Vec<u64> = windows.iter().map(|w| w.len() as u64).collect();
            let span = windows.len() as u64 * c.window_us;
            let bits = events.len() as u64 * EVENT_BITS;
            print_json(&json!({
                "width": geometry.width,
                "height": geometry.height,
                "events": events.len(),
                "windows": windows.len(),
                "first_t": events.first().map(|e| e.t),
                "last_t": events.last().map(|e| e.t),
                "max_events_per_window": counts.iter().max(),
                "mean_events_per_window": counts.iter().sum::<u64>() as f64 / counts.len().max(1) as f64,
                "mean_rate_mbps": if span == 0 { 0.0 } else { bits as f64 / span as f64 },
            }))
        }
        Command::Generate { cfg, out } => {
            let c = cfg.resolve()?;
            let geometry = c.geometry()?;
            let counts = c.profile.counts(c.synthetic_windows());
            let events = generate_synthetic(geometry, c.window_us, &counts, c.seed);
            write_evst(BufWriter::new(File::create(&out)?), geometry, &events)?;
            print_json(&json!({ "events": events.len(), "windows": counts.len(), "profile": c.profile.to_string() }))
        }
        Command::Tensor { cfg, input, window, out } => {
            let c = cfg.resolve()?;
            let (geometry, events) = read_events(&input, &c)?;
            let windows = window_split(&events, c.window_us)?;
            let w = windows
                .get(window as usize)
                .ok_or_else(|| Error::NoData(format!("stream has {} windows", windows.len())))?;
            let tensor = build_tensor(w, geometry)?;
            tensor.write_raw(BufWriter::new(File::create(out.with_extension("u32"))?))?;
            let sidecar = serde_json::to_string_pretty(&tensor.sidecar()).map_err(|e| Error::Io(e.into()))?;
            std::fs::write(out.with_extension("json"), sidecar)?;
            print_json(&json!({ "shape": tensor.shape(), "events": tensor.total() }))
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "evstream=warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
