//! Socket-mode publisher and subscriber clients, and a one-host run that
//! wires them to an in-process TCP relay.
//!
//! All roles timestamp with the host monotonic clock, so send times taken by
//! the publisher are directly comparable with arrival times at subscribers.

use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::thread;

use tracing::{debug, info};

use super::{announce, receiver_configs, ExperimentConfig, ExperimentRun, ReceiverReport};
use crate::adaptation::SubscriptionAction;
use crate::clock::{monotonic_us, sleep_until};
use crate::error::{Error, Result};
use crate::event::{replay_schedule, EventWindow, SensorGeometry};
use crate::partition::TrackId;
use crate::receiver::{Receiver, ReceiverConfig, ReconstructedWindow};
use crate::transport::net::{RelayConfig, RelayServer};
use crate::transport::{read_message, write_message, Announce, Message};

#[derive(Debug, Clone)]
pub struct PublishReport {
    pub published: Vec<EventWindow>,
    pub segments: u64,
    pub dropped: u64,
}

/// Replays `windows` to the relay at `addr`, sending window `i` at
/// `session_start + i * window_length` on the monotonic clock.
pub fn publish<A: ToSocketAddrs>(
    addr: A,
    announce: Announce,
    windows: &[EventWindow],
    session_start: u64,
) -> Result<PublishReport> {
    let partition = announce.partition()?;
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    let mut w = BufWriter::new(stream);
    write_message(&mut w, &Message::Announce(announce))?;
    w.flush()?;
    let all: Vec<TrackId> = (0..announce.tracks).collect();
    let mut report = PublishReport { published: Vec::with_capacity(windows.len()), segments: 0, dropped: 0 };
    for (deadline, window) in replay_schedule(windows, session_start) {
        sleep_until(deadline);
        let part = partition.partition(window);
        report.dropped += part.dropped;
        let send_time = monotonic_us();
        let events = partition.reconstruct(&part.segments, &all)?;
        for mut seg in part.segments {
            seg.send_time = send_time;
            write_message(&mut w, &Message::Segment(seg))?;
            report.segments += 1;
        }
        w.flush()?;
        report.published.push(EventWindow { events, ..EventWindow::empty(window.index, window.length_us) });
    }
    w.flush()?;
    w.get_ref().shutdown(Shutdown::Write)?;
    info!(windows = windows.len(), segments = report.segments, "publisher done");
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SubscriberRun {
    pub announce: Announce,
    pub windows: Vec<ReconstructedWindow>,
    pub lost_windows: u64,
    pub discarded_segments: u64,
}

fn send_actions<W: Write>(w: &mut W, session_id: u64, actions: &[SubscriptionAction]) -> Result<()> {
    for a in actions {
        let msg = match *a {
            SubscriptionAction::Subscribe(track_id) => Message::Subscribe { session_id, track_id },
            SubscriptionAction::Unsubscribe(track_id) => Message::Unsubscribe { session_id, track_id },
        };
        write_message(w, &msg)?;
    }
    w.flush()?;
    Ok(())
}

/// Joins `session_id` at the relay and receives until the relay closes the
/// stream. `on_window` sees each reconstructed window as it is produced.
pub fn subscribe<A: ToSocketAddrs>(
    addr: A,
    session_id: u64,
    config: ReceiverConfig,
    mut on_window: impl FnMut(&ReconstructedWindow),
) -> Result<SubscriberRun> {
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    let mut w = BufWriter::new(stream.try_clone()?);
    let mut r = BufReader::new(stream);
    // Every receiver starts with track 0; the relay answers the opening
    // subscribe with the session description.
    write_message(&mut w, &Message::Subscribe { session_id, track_id: 0 })?;
    w.flush()?;
    let announce = match read_message(&mut r)? {
        Some(Message::Announce(a)) => a,
        Some(other) => return Err(Error::Protocol(format!("expected ANNOUNCE, got {}", other.kind()))),
        None => return Err(Error::Protocol("relay closed before announcing".into())),
    };
    let mut rx = Receiver::new(announce, config)?;
    let opening = rx.start();
    let rest: Vec<_> = opening.into_iter().filter(|a| *a != SubscriptionAction::Subscribe(0)).collect();
    send_actions(&mut w, session_id, &rest)?;
    let mut windows = Vec::new();
    while let Some(msg) = read_message(&mut r)? {
        match msg {
            Message::SubscribeOk { track_id, start_window, .. } => {
                debug!(track_id, start_window, "subscribed");
                let actions = rx.on_subscribe_ok(track_id, start_window)?;
                send_actions(&mut w, session_id, &actions)?;
            }
            Message::Segment(seg) => {
                let out = rx.on_segment(seg, monotonic_us())?;
                out.windows.iter().for_each(&mut on_window);
                windows.extend(out.windows);
                send_actions(&mut w, session_id, &out.control)?;
            }
            other => return Err(Error::Protocol(format!("relay sent {}", other.kind()))),
        }
    }
    let tail = rx.finish(monotonic_us());
    tail.windows.iter().for_each(&mut on_window);
    windows.extend(tail.windows);
    let _ = w.get_ref().shutdown(Shutdown::Both);
    Ok(SubscriberRun {
        announce,
        windows,
        lost_windows: rx.lost_windows(),
        discarded_segments: rx.discarded_segments(),
    })
}

/// Lead time given to subscribers to attach before the first window.
const SOCKET_WARMUP_US: u64 = 200_000;

pub(super) fn run_local(
    config: &ExperimentConfig,
    geometry: SensorGeometry,
    source: Vec<EventWindow>,
) -> Result<ExperimentRun> {
    let server = RelayServer::bind(
        "127.0.0.1:0",
        RelayConfig { bandwidth: config.bandwidth()?, burst_us: config.burst_us(), queue_cap: config.queue_cap },
    )?;
    let addr = server.local_addr()?;
    let relay = thread::spawn(move || server.run());
    let configs = receiver_configs(config);
    let subscribers: Vec<_> = configs
        .iter()
        .map(|&cfg| {
            let sid = config.session_id;
            thread::spawn(move || subscribe(addr, sid, cfg, |_| {}))
        })
        .collect();
    let session_start = monotonic_us() + config.warmup_us.max(SOCKET_WARMUP_US);
    let published = publish(addr, announce(config, geometry), &source, session_start);
    let runs: Vec<Result<SubscriberRun>> = subscribers
        .into_iter()
        .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("subscriber panicked".into()))))
        .collect();
    let relay = relay.join().unwrap_or_else(|_| Err(Error::Protocol("relay panicked".into())))?;
    let published = published?;
    let mut receivers = Vec::new();
    for (i, (run, cfg)) in runs.into_iter().zip(&configs).enumerate() {
        let run = run?;
        // Relay subscriber ids follow attach order, which is only known
        // when there is a single subscriber.
        let drops = if configs.len() == 1 { relay.drops.first().copied().unwrap_or(0) } else { 0 };
        debug!(receiver = i, drops, "receiver finished");
        receivers.push(ReceiverReport::build(
            cfg.mode,
            run.windows,
            Some(&source),
            session_start,
            (run.lost_windows, run.discarded_segments, drops),
        )?);
    }
    Ok(ExperimentRun {
        config: config.clone(),
        geometry,
        source_events: source.iter().map(|w| w.len() as u64).sum(),
        publisher_dropped: published.dropped,
        published: published.published,
        receivers,
        audit: Vec::new(),
    })
}
