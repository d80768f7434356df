//! Loopback runs over real TCP. Timing is host-dependent, so these check
//! protocol behaviour and data integrity rather than latency figures.

use std::thread;

use evstream::clock::monotonic_us;
use evstream::event::{generate_synthetic, window_split, SensorGeometry};
use evstream::harness::live::{publish, subscribe};
use evstream::harness::{run_experiment, ExperimentConfig, Mode};
use evstream::partition::Strategy;
use evstream::receiver::ReceiverConfig;
use evstream::reduction::Bandwidth;
use evstream::transport::net::{RelayConfig, RelayServer};
use evstream::transport::{Announce, DEFAULT_BURST_US};

#[test]
fn passive_subscriber_receives_the_published_stream() {
    let c = ExperimentConfig {
        mode: Mode::Sockets,
        duration_s: 1.0,
        passive_receiver: true,
        profile: evstream::event::RateProfile::Constant(1_000),
        seed: 2,
        ..Default::default()
    };
    let run = run_experiment(&c).unwrap();
    assert_eq!(run.published.len(), 20);
    let passive = &run.receivers[1];
    assert_eq!(passive.windows, run.published);
    assert_eq!(passive.lost_windows, 0);
    let adaptive = run.primary();
    assert!(!adaptive.windows.is_empty());
    for w in &adaptive.windows {
        assert!(run.published[w.index as usize].events.starts_with(&w.events));
    }
}

#[test]
fn relay_serves_a_late_announced_session() {
    let server = RelayServer::bind(
        "127.0.0.1:0",
        RelayConfig { bandwidth: Bandwidth::from_mbps(50.0).unwrap(), burst_us: DEFAULT_BURST_US, queue_cap: 64 },
    )
    .unwrap();
    let addr = server.local_addr().unwrap();
    let relay = thread::spawn(move || server.run());
    let geometry = SensorGeometry::new(64, 48).unwrap();
    let windows = window_split(&generate_synthetic(geometry, 50_000, &[300, 0, 700, 100], 8), 50_000).unwrap();
    // subscriber connects before the publisher announces
    let sub = thread::spawn(move || subscribe(addr, 9, ReceiverConfig::passive(), |_| {}));
    thread::sleep(std::time::Duration::from_millis(100));
    let announce = Announce {
        session_id: 9,
        tracks: 4,
        events_per_track: 200,
        geometry,
        window_length: 50_000,
        strategy: Strategy::RoundRobin,
    };
    let report = publish(addr, announce, &windows, monotonic_us() + 100_000).unwrap();
    let got = sub.join().unwrap().unwrap();
    let relay = relay.join().unwrap().unwrap();
    assert_eq!(got.announce, announce);
    assert_eq!(report.segments, 16);
    assert_eq!(relay.segments_in, 16);
    let rebuilt: Vec<_> = got.windows.into_iter().map(|r| r.window).collect();
    assert_eq!(rebuilt, report.published);
    assert_eq!(rebuilt, windows);
}
