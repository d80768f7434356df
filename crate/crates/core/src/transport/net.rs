//! TCP relay server.
//!
//! A connection's first frame decides its role: `ANNOUNCE` opens a
//! publisher, `SUBSCRIBE` opens a subscriber. A subscriber names the session
//! it wants; the relay holds it until that session is announced, then
//! replies with the `ANNOUNCE` followed by `SUBSCRIBE_OK`. Each subscriber
//! has a writer thread that drains its relay queue through its own token
//! bucket. When the publisher disconnects, writers flush what is queued and
//! close their side; the server returns once every connection has ended.

use std::collections::VecDeque;
use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::Duration;

use tracing::{debug, info, warn};

use super::relay::{RelayState, SubscriberId};
use super::shaper::TokenBucket;
use super::wire::{read_message, write_message, Message};
use crate::clock::{monotonic_us, sleep_until};
use crate::error::{Error, Result};
use crate::partition::TrackId;
use crate::reduction::Bandwidth;

#[derive(Debug, Clone, Copy)]
pub struct RelayConfig {
    pub bandwidth: Bandwidth,
    pub burst_us: u64,
    pub queue_cap: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelayReport {
    pub segments_in: u64,
    /// Relay drops per subscriber, in connection order.
    pub drops: Vec<u64>,
}

#[derive(Debug)]
struct Shared {
    relay: RelayState,
    outbox: Vec<VecDeque<Message>>,
    closed: Vec<bool>,
    publisher_done: bool,
    segments_in: u64,
}

struct Hub {
    state: Mutex<Shared>,
    changed: Condvar,
    connections: AtomicUsize,
}

impl Hub {
    fn lock(&self) -> MutexGuard<'_, Shared> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn wait<'a>(&self, g: MutexGuard<'a, Shared>) -> MutexGuard<'a, Shared> {
        self.changed.wait_timeout(g, Duration::from_millis(50)).unwrap_or_else(|p| p.into_inner()).0
    }
}

pub struct RelayServer {
    listener: TcpListener,
    config: RelayConfig,
}

impl RelayServer {
    pub fn bind<A: ToSocketAddrs>(addr: A, config: RelayConfig) -> Result<Self> {
        Ok(Self { listener: TcpListener::bind(addr)?, config })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Serves one session until the publisher has gone and every
    /// subscriber connection has been drained and closed.
    pub fn run(self) -> Result<RelayReport> {
        let hub = Arc::new(Hub {
            state: Mutex::new(Shared {
                relay: RelayState::new(self.config.queue_cap),
                outbox: Vec::new(),
                closed: Vec::new(),
                publisher_done: false,
                segments_in: 0,
            }),
            changed: Condvar::new(),
            connections: AtomicUsize::new(0),
        });
        self.listener.set_nonblocking(true)?;
        info!(addr = %self.listener.local_addr()?, "relay listening");
        loop {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    debug!(%peer, "connection");
                    stream.set_nonblocking(false)?;
                    stream.set_nodelay(true)?;
                    hub.connections.fetch_add(1, Ordering::SeqCst);
                    let hub = Arc::clone(&hub);
                    let config = self.config;
                    thread::spawn(move || {
                        if let Err(e) = serve_connection(stream, &hub, config) {
                            warn!(%peer, error = %e, "connection ended with error");
                        }
                        hub.connections.fetch_sub(1, Ordering::SeqCst);
                        hub.changed.notify_all();
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    let done = hub.lock().publisher_done;
                    if done && hub.connections.load(Ordering::SeqCst) == 0 {
                        break;
                    }
                    thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(e.into()),
            }
        }
        let s = hub.lock();
        let drops = (0..s.outbox.len()).map(|id| s.relay.drops(id)).collect();
        Ok(RelayReport { segments_in: s.segments_in, drops })
    }
}

fn serve_connection(stream: TcpStream, hub: &Hub, config: RelayConfig) -> Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    match read_message(&mut reader)? {
        None => Ok(()),
        Some(Message::Announce(a)) => {
            let result = serve_publisher(reader, a, hub);
            hub.lock().publisher_done = true;
            hub.changed.notify_all();
            info!("publisher finished");
            result
        }
        Some(Message::Subscribe { session_id, track_id }) => {
            serve_subscriber(stream, reader, session_id, track_id, hub, config)
        }
        Some(other) => Err(Error::Protocol(format!("connection opened with {}", other.kind()))),
    }
}

fn serve_publisher(mut reader: BufReader<TcpStream>, a: super::Announce, hub: &Hub) -> Result<()> {
    hub.lock().relay.announce(a)?;
    hub.changed.notify_all();
    info!(session = a.session_id, tracks = a.tracks, "session announced");
    while let Some(msg) = read_message(&mut reader)? {
        match msg {
            Message::Segment(seg) => {
                let mut s = hub.lock();
                s.segments_in += 1;
                s.relay.forward(seg)?;
                drop(s);
                hub.changed.notify_all();
            }
            other => return Err(Error::Protocol(format!("publisher sent {}", other.kind()))),
        }
    }
    Ok(())
}

fn subscribe(s: &mut Shared, id: SubscriberId, session_id: u64, track: TrackId) -> Result<()> {
    let out = s.relay.subscribe(id, session_id, track)?;
    s.outbox[id].push_back(Message::SubscribeOk { session_id, track_id: track, start_window: out.start_window });
    Ok(())
}

fn serve_subscriber(
    stream: TcpStream,
    mut reader: BufReader<TcpStream>,
    session_id: u64,
    first_track: TrackId,
    hub: &Hub,
    config: RelayConfig,
) -> Result<()> {
    let id = {
        let mut s = hub.lock();
        loop {
            if let Some(a) = s.relay.session() {
                if a.session_id != session_id {
                    return Err(Error::Protocol(format!("unknown session {session_id}")));
                }
                break;
            }
            s = hub.wait(s);
        }
        let id = s.relay.add_subscriber();
        let announce = *s.relay.session().unwrap();
        s.outbox.push(VecDeque::from([Message::Announce(announce)]));
        s.closed.push(false);
        subscribe(&mut s, id, session_id, first_track)?;
        id
    };
    hub.changed.notify_all();
    debug!(id, "subscriber attached");

    thread::scope(|scope| {
        let w = scope.spawn(|| write_loop(stream, id, hub, config));
        let r = read_loop(&mut reader, id, hub);
        {
            let mut s = hub.lock();
            s.closed[id] = true;
            s.relay.remove_subscriber(id);
        }
        hub.changed.notify_all();
        let w = w.join().unwrap_or_else(|_| Err(Error::Protocol("writer panicked".into())));
        r.and(w)
    })
}

fn read_loop(reader: &mut BufReader<TcpStream>, id: SubscriberId, hub: &Hub) -> Result<()> {
    while let Some(msg) = read_message(reader)? {
        let mut s = hub.lock();
        match msg {
            Message::Subscribe { session_id, track_id } => subscribe(&mut s, id, session_id, track_id)?,
            Message::Unsubscribe { session_id, track_id } => {
                let purged = s.relay.unsubscribe(id, session_id, track_id)?;
                debug!(id, track_id, purged, "unsubscribed");
            }
            other => return Err(Error::Protocol(format!("subscriber sent {}", other.kind()))),
        }
        drop(s);
        hub.changed.notify_all();
    }
    Ok(())
}

enum Outgoing {
    Control(Message),
    Segment(Message),
}

fn write_loop(stream: TcpStream, id: SubscriberId, hub: &Hub, config: RelayConfig) -> Result<()> {
    let mut bucket = TokenBucket::with_burst_time(config.bandwidth, config.burst_us, monotonic_us());
    let mut w = BufWriter::new(stream);
    loop {
        let next = {
            let mut s = hub.lock();
            loop {
                if s.closed[id] {
                    return Ok(());
                }
                if let Some(m) = s.outbox[id].pop_front() {
                    break Outgoing::Control(m);
                }
                if let Some(seg) = s.relay.pop(id) {
                    break Outgoing::Segment(Message::Segment((*seg).clone()));
                }
                if s.publisher_done {
                    drop(s);
                    w.flush()?;
                    w.get_ref().shutdown(Shutdown::Write)?;
                    return Ok(());
                }
                s = hub.wait(s);
            }
        };
        match next {
            Outgoing::Control(m) => write_message(&mut w, &m)?,
            Outgoing::Segment(m) => {
                let done = bucket.admit(m.wire_bits(), monotonic_us());
                sleep_until(done);
                write_message(&mut w, &m)?;
            }
        }
        w.flush()?;
    }
}
