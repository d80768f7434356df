//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line to
//! the real stdout (bypassing capture) before asserting.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evstream::adaptation::{AdaptationState, SubscriptionAction};
use evstream::event::{generate_synthetic, window_split, Event, EventWindow, Polarity, RateProfile, SensorGeometry};
use evstream::harness::sim::max_subscribes_in_flight;
use evstream::harness::{run_experiment, track_rate, ExperimentConfig, ExperimentRun};
use evstream::partition::{
    partition_bucket, partition_round_robin, reconstruct_bucket, reconstruct_round_robin, TrackId,
};
use evstream::reduction::{
    budget_events, loss_rate, reduce_windows, sample_even, truncate_tail, Bandwidth, ReduceMode,
};
use evstream::sink::write_metrics_csv;
use evstream::transport::{segment_frame_bytes, TokenBucket, DEFAULT_BURST_US};

const W: u64 = 50_000;

fn report(label: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {label}: {verdict} ({detail})");
    let _ = out.flush();
}

fn window(ts: &[u64]) -> EventWindow {
    let events = ts.iter().enumerate().map(|(i, &t)| Event::new(t, (i % 1280) as u16, 0, Polarity::Positive)).collect();
    EventWindow::with_events(0, W, events)
}

fn sorted_times() -> impl Strategy<Value = Vec<u64>> + Clone {
    prop::collection::vec(0..W, 0..1_500).prop_map(|mut v| {
        v.sort_unstable();
        v
    })
}

fn run_cases<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn metrics_csv(run: &ExperimentRun) -> Vec<u8> {
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &run.primary().metrics).unwrap();
    buf
}

// E=250 strict setting: N=5, L=5 ms, constant 2 000 events/window, 30 s.
fn strict_config() -> ExperimentConfig {
    ExperimentConfig {
        profile: RateProfile::Constant(2_000),
        duration_s: 30.0,
        tracks: 5,
        events_per_track: 250,
        latency_target_ms: 5.0,
        bandwidth_mbps: 100.0,
        seed: 7,
        ..Default::default()
    }
}

// E=2500 relaxed setting on a surge profile: 4 000 events/window with a 5x
// spike over the middle fifth of a 30 s stream.
fn relaxed_config(bandwidth_mbps: f64) -> ExperimentConfig {
    ExperimentConfig {
        profile: RateProfile::Surge(4_000),
        duration_s: 30.0,
        tracks: 5,
        events_per_track: 2_500,
        latency_target_ms: 50.0,
        bandwidth_mbps,
        seed: 11,
        ..Default::default()
    }
}

// Link sustaining exactly 3.2 full tracks: 3.2 full-segment frames per window.
fn convergence_config() -> ExperimentConfig {
    let frame_bits = segment_frame_bytes(250) as u64 * 8;
    ExperimentConfig {
        profile: RateProfile::Constant(2_000),
        duration_s: 30.0,
        tracks: 5,
        events_per_track: 250,
        latency_target_ms: 5.0,
        bandwidth_bps: Some(frame_bits * 32 * 1_000_000 / (10 * W)),
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn criterion_1_rate_arithmetic() {
    let big = |v: u64| BigUint::from(v);
    // track rate oracle: E * 128 * 10^6 / W_us, exact
    let oracle_rate = |e: u64| {
        let num = big(e) * big(128) * big(1_000_000);
        assert_eq!(&num % big(W), big(0));
        num / big(W)
    };
    // budget oracle: floor(B_bps * W_us / (10^6 * 128))
    let oracle_budget = |mbps: u64| (big(mbps) * big(1_000_000) * big(W)) / (big(1_000_000) * big(128));

    let r250 = track_rate(250, W);
    let r2500 = track_rate(2_500, W);
    let b1 = budget_events(1.0, W).unwrap();
    let b100 = budget_events(100.0, W).unwrap();
    let pass = r250 == 640_000.0
        && r2500 == 6_400_000.0
        && big(r250 as u64) == oracle_rate(250)
        && big(r2500 as u64) == oracle_rate(2_500)
        && b1 == 390
        && b100 == 39_062
        && big(b1) == oracle_budget(1)
        && big(b100) == oracle_budget(100);
    report(
        "1",
        pass,
        &format!("track_rate 250 -> {r250} bps, 2500 -> {r2500} bps; budget 1 Mbps -> {b1}, 100 Mbps -> {b100}"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_partition_identities() {
    let cases = 1_000;
    let input = (sorted_times(), 1u16..12, 1u32..300);
    let rr = run_cases(cases, input.clone(), |(ts, n, _)| {
        let w = window(&ts);
        let segs = partition_round_robin(&w, n);
        let all: Vec<TrackId> = (0..n).collect();
        prop_assert_eq!(reconstruct_round_robin(&segs, &all, n).unwrap(), w.events.clone());
        // any subset: non-decreasing timestamps, and equal to slicing positions
        let subset: Vec<TrackId> = (0..n).filter(|t| t % 2 == 0).collect();
        let got = reconstruct_round_robin(&segs, &subset, n).unwrap();
        let expect: Vec<Event> =
            w.events.iter().enumerate().filter(|(i, _)| (i % n as usize).is_multiple_of(2)).map(|(_, e)| *e).collect();
        prop_assert_eq!(&got, &expect);
        prop_assert!(got.windows(2).all(|p| p[0].t <= p[1].t));
        Ok(())
    });
    let bucket = run_cases(cases, input.clone(), |(ts, n, e)| {
        let w = window(&ts);
        let p = partition_bucket(&w, n, e);
        for k in 1..=n {
            let tracks: Vec<TrackId> = (0..k).collect();
            let got = reconstruct_bucket(&p.segments, &tracks).unwrap();
            let keep = w.len().min(k as usize * e as usize);
            prop_assert_eq!(&got[..], &w.events[..keep]);
            prop_assert!(got.windows(2).all(|p| p[0].t <= p[1].t));
        }
        Ok(())
    });
    let layered = run_cases(cases, input, |(ts, n, e)| {
        let w = window(&ts);
        let p = partition_bucket(&w, n, e);
        for k in 1..n {
            let small = reconstruct_bucket(&p.segments, &(0..k).collect::<Vec<_>>()).unwrap();
            let large = reconstruct_bucket(&p.segments, &(0..k + 1).collect::<Vec<_>>()).unwrap();
            prop_assert!(large.starts_with(&small));
        }
        Ok(())
    });
    let pass = rr.is_ok() && bucket.is_ok() && layered.is_ok();
    report(
        "2",
        pass,
        &format!(
            "{cases} cases each: round-robin {}, bucket prefix {}, layered prefix {}",
            rr.as_ref().map_or("failed", |_| "ok"),
            bucket.as_ref().map_or("failed", |_| "ok"),
            layered.as_ref().map_or("failed", |_| "ok")
        ),
    );
    rr.unwrap();
    bucket.unwrap();
    layered.unwrap();
}

#[test]
fn criterion_3_reduction() {
    let tail = run_cases(1_000, (sorted_times(), 0u64..2_000), |(ts, budget)| {
        let w = window(&ts);
        let r = truncate_tail(&w, budget);
        let keep = w.len().min(budget as usize);
        prop_assert_eq!(&r.events[..], &w.events[..keep]);
        Ok(())
    });

    // uniform input: every 5 ms bin holds more than its quota
    let even = run_cases(500, (200u64..3_000, 1u64..200, any::<u64>()), |(per_bin, budget_scale, seed)| {
        let counts = vec![per_bin * 10];
        let events = generate_synthetic(SensorGeometry::HD, W, &counts, seed);
        let mut bins = [0u64; 10];
        events.iter().for_each(|e| bins[(e.t / 5_000) as usize] += 1);
        let min_bin = *bins.iter().min().unwrap();
        let budget = (budget_scale * 10).min(min_bin * 10);
        let w = EventWindow::with_events(0, W, events);
        let r = sample_even(&w, budget, 10).unwrap();
        prop_assert_eq!(r.len() as u64, budget.min(w.len() as u64));
        let mut kept = [0u64; 10];
        r.events.iter().for_each(|e| kept[(e.t / 5_000) as usize] += 1);
        let quota = budget / 10;
        prop_assert!(kept.iter().all(|&k| k.abs_diff(quota) <= 1), "kept {kept:?}, quota {quota}");
        Ok(())
    });

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let counts: Vec<u64> = (0..200).map(|_| rng.random_range(500..60_000)).collect();
    let events = generate_synthetic(SensorGeometry::HD, W, &counts, 42);
    let windows = window_split(&events, W).unwrap();
    let source: u64 = counts.iter().sum();
    let mut losses = Vec::new();
    for b in [1.0, 5.0, 25.0, 50.0, 100.0] {
        let (_, stats) = reduce_windows(&windows, Bandwidth::from_mbps(b).unwrap(), ReduceMode::Tail).unwrap();
        let kept: u64 = stats.iter().map(|s| s.kept_events).sum();
        losses.push(loss_rate(source, kept).unwrap());
    }
    let monotone = losses.windows(2).all(|p| p[1] <= p[0]);
    let pass = tail.is_ok() && even.is_ok() && monotone;
    let pct: Vec<String> = losses.iter().map(|l| format!("{:.1}%", l * 100.0)).collect();
    report(
        "3",
        pass,
        &format!(
            "tail prefix {}, even quotas {}, loss over 1/5/25/50/100 Mbps = {}",
            if tail.is_ok() { "ok" } else { "failed" },
            if even.is_ok() { "ok" } else { "failed" },
            pct.join(" ")
        ),
    );
    tail.unwrap();
    even.unwrap();
    assert!(monotone, "{losses:?}");
}

#[test]
fn criterion_4_shaper_conformance() {
    let horizon = 10_000_000u64;
    let frame_bytes = segment_frame_bytes(250) as u64;
    let mut details = Vec::new();
    let mut pass = true;
    for mbps in [1.0, 25.0, 100.0] {
        let bw = Bandwidth::from_mbps(mbps).unwrap();
        let mut bucket = TokenBucket::with_burst_time(bw, DEFAULT_BURST_US, 0);
        let burst = bucket.burst_bits();
        // saturated sender: the next frame is always waiting
        let mut now = 0;
        let mut delivered_bytes = 0u64;
        loop {
            now = bucket.admit(frame_bytes * 8, now);
            if now > horizon {
                break;
            }
            delivered_bytes += frame_bytes;
        }
        let delivered_bits = delivered_bytes * 8;
        let bound = mbps * 1e7 + burst as f64;
        let ok = delivered_bits as f64 <= bound * 1.001;
        pass &= ok;
        details.push(format!("{mbps} Mbps: {delivered_bits} <= {bound:.0} bits"));
    }
    report("4", pass, &details.join("; "));
    assert!(pass);
}

#[test]
fn criterion_5a_controller_invariants() {
    let (n, e) = (5u16, 250u32);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sequences = 100_000;
    let mut violation = None;
    'outer: for seq in 0..sequences {
        let mut s = AdaptationState::new(n, e, 5_000).unwrap();
        let mut held: BTreeSet<TrackId> = BTreeSet::new();
        let mut in_flight: Option<TrackId> = None;
        let apply =
            |acts: &[SubscriptionAction], held: &mut BTreeSet<TrackId>, in_flight: &mut Option<TrackId>| -> bool {
                for a in acts {
                    match *a {
                        SubscriptionAction::Subscribe(t) => {
                            if in_flight.is_some() {
                                return false;
                            }
                            *in_flight = Some(t);
                        }
                        SubscriptionAction::Unsubscribe(t) => {
                            held.remove(&t);
                        }
                    }
                }
                true
            };
        let acts = s.bootstrap();
        if !apply(&acts, &mut held, &mut in_flight) {
            violation = Some(format!("sequence {seq}: two subscribes in flight"));
            break;
        }
        let len = rng.random_range(1..60);
        for _ in 0..len {
            if let Some(t) = in_flight {
                if rng.random_bool(0.5) {
                    in_flight = None;
                    held.insert(t);
                    let acts: Vec<_> = s.on_subscribe_ok(t).unwrap().into_iter().collect();
                    apply(&acts, &mut held, &mut in_flight);
                }
            }
            let latency = rng.random_range(0..10_000);
            let acts = s.tick(latency);
            if !apply(&acts, &mut held, &mut in_flight) {
                violation = Some(format!("sequence {seq}: two subscribes in flight"));
                break 'outer;
            }
            let c = s.chunk_size();
            if !(250.0..=1250.0).contains(&c) {
                violation = Some(format!("sequence {seq}: chunk {c} outside [E, N*E]"));
                break 'outer;
            }
            let prefix: BTreeSet<TrackId> = (0..held.len() as u16).collect();
            if held != prefix {
                violation = Some(format!("sequence {seq}: held {held:?} is not a prefix"));
                break 'outer;
            }
        }
    }
    let pass = violation.is_none();
    report(
        "5(a)",
        pass,
        &violation.unwrap_or_else(|| format!("{sequences} random latency sequences, clamp/prefix/one-in-flight hold")),
    );
    assert!(pass);
}

#[test]
fn criterion_5b_convergence() {
    let c = convergence_config();
    let run = run_experiment(&c).unwrap();
    let ks: Vec<u16> = run.primary().metrics.iter().map(|m| m.subscribed_tracks).collect();
    let in_band = |k: &u16| (3..=4).contains(k);
    // enters within the first 100 windows and never leaves afterwards
    let entered = ks.iter().position(in_band);
    let pass = entered.is_some_and(|f| f < 100 && ks[f..].iter().all(in_band));
    let tail = &ks[ks.len().min(100)..];
    let lo = tail.iter().min().copied().unwrap_or(0);
    let hi = tail.iter().max().copied().unwrap_or(0);
    let outside = tail.iter().filter(|k| !in_band(k)).count();
    report(
        "5(b)",
        pass,
        &format!(
            "link {} bps = 3.2 track frames/window, L={} ms; first in-band window {:?}; windows 100.. span {lo}..={hi} tracks, {outside}/{} outside {{3,4}}",
            c.bandwidth_bps.unwrap(),
            c.latency_target_ms,
            entered,
            tail.len()
        ),
    );
    assert!(pass, "subscription counts: {ks:?}");
}

#[test]
fn criterion_5c_one_subscribe_in_flight() {
    let runs = [convergence_config(), strict_config(), relaxed_config(25.0)];
    let mut worst = 0;
    let mut subscribes = 0;
    for c in &runs {
        let run = run_experiment(c).unwrap();
        worst = worst.max(max_subscribes_in_flight(&run.audit, 0));
        subscribes += run
            .audit
            .iter()
            .filter(|a| a.receiver == 0 && a.kind == evstream::harness::sim::AuditKind::SubscribeSent)
            .count();
    }
    let pass = worst <= 1 && subscribes > 0;
    report("5(c)", pass, &format!("{subscribes} audited subscribes over 3 runs, max in flight {worst}"));
    assert!(pass);
}

#[test]
fn criterion_6_strict_latency() {
    let c = strict_config();
    let started = Instant::now();
    let run = run_experiment(&c).unwrap();
    let s = run.summary();
    let windows = c.synthetic_windows() as usize;
    let complete = run.primary().metrics.len() == windows && run.primary().lost_windows == 0;
    let pass = s.mean_latency_ms < 5.0 && s.max_latency_ms.is_finite() && complete;
    report(
        "6",
        pass,
        &format!(
            "mean {:.3} ms, median {:.3} ms, max {:.3} ms, {}/{} windows rebuilt, loss {:.1}%, {:?}",
            s.mean_latency_ms,
            s.median_latency_ms,
            s.max_latency_ms,
            run.primary().metrics.len(),
            windows,
            s.loss_fraction.unwrap_or(0.0) * 100.0,
            started.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_relaxed_latency_surge() {
    let fast = run_experiment(&relaxed_config(100.0)).unwrap();
    let slow = run_experiment(&relaxed_config(25.0)).unwrap();
    let (f, s) = (fast.summary(), slow.summary());
    let pass = f.mean_latency_ms < 50.0 && s.max_latency_ms > 50.0;
    report(
        "7",
        pass,
        &format!(
            "B=100: mean {:.2} ms max {:.2} ms; B=25: mean {:.2} ms max {:.2} ms",
            f.mean_latency_ms, f.max_latency_ms, s.mean_latency_ms, s.max_latency_ms
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_passive_receiver_archive() {
    let c = ExperimentConfig { passive_receiver: true, duration_s: 20.0, ..strict_config() };
    let run = run_experiment(&c).unwrap();
    let passive = &run.receivers[1];
    let equal = passive.windows == run.published;
    let adaptive_events: u64 = run.primary().metrics.iter().map(|m| m.received_events).sum();
    let published_events: usize = run.published.iter().map(|w| w.len()).sum();
    let pass = equal && !run.published.is_empty();
    report(
        "8",
        pass,
        &format!(
            "passive rebuilt {} windows / {} events, published {} windows / {} events, identical: {equal}; adaptive received {adaptive_events}",
            passive.windows.len(),
            passive.windows.iter().map(|w| w.len()).sum::<usize>(),
            run.published.len(),
            published_events
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_interleave_overhead() {
    let n = 10u16;
    let counts = vec![50_000u64; 20];
    let events = generate_synthetic(SensorGeometry::HD, W, &counts, 9);
    assert_eq!(events.len(), 1_000_000);
    let windows = window_split(&events, W).unwrap();
    let all: Vec<TrackId> = (0..n).collect();
    let rr: Vec<_> = windows.iter().map(|w| partition_round_robin(w, n)).collect();
    let bk: Vec<_> = windows.iter().map(|w| partition_bucket(w, n, 5_000).segments).collect();
    let time = |f: &dyn Fn() -> usize| {
        (0..3)
            .map(|_| {
                let t = Instant::now();
                std::hint::black_box(f());
                t.elapsed()
            })
            .min()
            .unwrap_or(Duration::ZERO)
    };
    let t_rr = time(&|| rr.iter().map(|s| reconstruct_round_robin(s, &all, n).unwrap().len()).sum());
    let t_bk = time(&|| bk.iter().map(|s| reconstruct_bucket(s, &all).unwrap().len()).sum());
    let pass = t_rr > t_bk;
    report("9", pass, &format!("10^6 events, N={n}: round-robin {t_rr:?} vs bucket {t_bk:?}"));
    assert!(pass);
}

#[test]
fn criterion_10_determinism() {
    let configs = [
        ("strict", strict_config()),
        ("convergence", convergence_config()),
        ("surge B=25", relaxed_config(25.0)),
        ("broadcast", ExperimentConfig { passive_receiver: true, duration_s: 20.0, ..strict_config() }),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (name, c) in configs {
        let a = metrics_csv(&run_experiment(&c).unwrap());
        let b = metrics_csv(&run_experiment(&c).unwrap());
        pass &= a == b;
        details.push(format!("{name} {} bytes {}", a.len(), if a == b { "identical" } else { "DIFFER" }));
    }
    report("10", pass, &details.join("; "));
    assert!(pass);
}
