//! Discrete-event simulation of publisher, relay and receivers on one
//! virtual microsecond clock.
//!
//! The publisher sends every track's segment of window `i` at its replay
//! deadline. Segments reach the relay after one propagation delay, are fanned
//! out into per-receiver queues and leave through a per-receiver token
//! bucket, one frame at a time; each arrives one propagation delay after it
//! has left the shaper. Control messages travel with the propagation delay
//! only. Ties in time are broken by scheduling order, so a run is a pure
//! function of its inputs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::adaptation::SubscriptionAction;
use crate::error::Result;
use crate::event::{replay_deadline, EventWindow};
use crate::partition::{PartitionConfig, TrackId, TrackSegment};
use crate::receiver::{Receiver, ReceiverConfig, ReconstructedWindow};
use crate::reduction::Bandwidth;
use crate::transport::{segment_frame_bytes, Announce, RelayState, TokenBucket};

#[derive(Debug, Clone)]
pub struct SimParams {
    pub announce: Announce,
    pub bandwidth: Bandwidth,
    pub burst_us: u64,
    pub queue_cap: usize,
    pub propagation_us: u64,
    /// First window deadline; receivers start subscribing at time 0.
    pub session_start: u64,
    pub receivers: Vec<ReceiverConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditKind {
    SubscribeSent,
    SubscribeOkReceived,
    UnsubscribeSent,
}

/// One control-plane event as seen by a receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditEntry {
    pub time: u64,
    pub receiver: usize,
    pub kind: AuditKind,
    pub track: TrackId,
}

/// Largest number of subscriptions `receiver` ever had awaiting
/// confirmation at once.
pub fn max_subscribes_in_flight(audit: &[AuditEntry], receiver: usize) -> usize {
    let mut in_flight = 0usize;
    let mut max = 0;
    for a in audit.iter().filter(|a| a.receiver == receiver) {
        match a.kind {
            AuditKind::SubscribeSent => {
                in_flight += 1;
                max = max.max(in_flight);
            }
            AuditKind::SubscribeOkReceived => in_flight = in_flight.saturating_sub(1),
            AuditKind::UnsubscribeSent => {}
        }
    }
    max
}

#[derive(Debug, Clone)]
pub struct SimReceiver {
    pub windows: Vec<ReconstructedWindow>,
    pub lost_windows: u64,
    pub discarded_segments: u64,
    pub relay_drops: u64,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    /// What the publisher actually sent, per window (after any cap).
    pub published: Vec<EventWindow>,
    pub publisher_dropped: u64,
    pub receivers: Vec<SimReceiver>,
    pub audit: Vec<AuditEntry>,
    pub end_time: u64,
}

#[derive(Debug)]
enum Ev {
    Publish(usize),
    RelayIngress(Vec<TrackSegment>),
    LinkDone(usize),
    Deliver(usize, Arc<TrackSegment>),
    ToRelay(usize, SubscriptionAction),
    SubscribeOk(usize, TrackId, u64),
}

struct Link {
    bucket: TokenBucket,
    busy: Option<Arc<TrackSegment>>,
}

struct Sim<'a> {
    p: &'a SimParams,
    partition: PartitionConfig,
    windows: &'a [EventWindow],
    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64, usize)>>,
    slots: Vec<Option<Ev>>,
    relay: RelayState,
    links: Vec<Link>,
    receivers: Vec<Receiver>,
    out: Vec<Vec<ReconstructedWindow>>,
    audit: Vec<AuditEntry>,
    published: Vec<EventWindow>,
    publisher_dropped: u64,
}

impl Sim<'_> {
    fn at(&mut self, time: u64, ev: Ev) {
        self.slots.push(Some(ev));
        self.queue.push(Reverse((time, self.seq, self.slots.len() - 1)));
        self.seq += 1;
    }

    fn send_control(&mut self, rx: usize, actions: &[SubscriptionAction]) {
        for &a in actions {
            let (kind, track) = match a {
                SubscriptionAction::Subscribe(t) => (AuditKind::SubscribeSent, t),
                SubscriptionAction::Unsubscribe(t) => (AuditKind::UnsubscribeSent, t),
            };
            self.audit.push(AuditEntry { time: self.now, receiver: rx, kind, track });
            self.at(self.now + self.p.propagation_us, Ev::ToRelay(rx, a));
        }
    }

    fn kick(&mut self, rx: usize) {
        if self.links[rx].busy.is_some() {
            return;
        }
        if let Some(seg) = self.relay.pop(rx) {
            let bits = segment_frame_bytes(seg.events.len()) as u64 * 8;
            let done = self.links[rx].bucket.admit(bits, self.now);
            self.links[rx].busy = Some(seg);
            self.at(done, Ev::LinkDone(rx));
        }
    }

    fn step(&mut self, ev: Ev) -> Result<()> {
        let sid = self.p.announce.session_id;
        match ev {
            Ev::Publish(i) => {
                let w = &self.windows[i];
                let part = self.partition.partition(w);
                self.publisher_dropped += part.dropped;
                let mut segs = part.segments;
                for s in &mut segs {
                    s.send_time = self.now;
                }
                let all: Vec<TrackId> = (0..self.p.announce.tracks).collect();
                let events = self.partition.reconstruct(&segs, &all)?;
                self.published.push(EventWindow { index: w.index, start_t: w.start_t, length_us: w.length_us, events });
                self.at(self.now + self.p.propagation_us, Ev::RelayIngress(segs));
            }
            Ev::RelayIngress(segs) => {
                for s in segs {
                    self.relay.forward(s)?;
                }
                for rx in 0..self.links.len() {
                    self.kick(rx);
                }
            }
            Ev::LinkDone(rx) => {
                let seg = self.links[rx].busy.take().expect("link was busy");
                self.at(self.now + self.p.propagation_us, Ev::Deliver(rx, seg));
                self.kick(rx);
            }
            Ev::Deliver(rx, seg) => {
                let seg = Arc::unwrap_or_clone(seg);
                let out = self.receivers[rx].on_segment(seg, self.now)?;
                self.out[rx].extend(out.windows);
                self.send_control(rx, &out.control);
            }
            Ev::ToRelay(rx, SubscriptionAction::Subscribe(t)) => {
                let ok = self.relay.subscribe(rx, sid, t)?;
                self.at(self.now + self.p.propagation_us, Ev::SubscribeOk(rx, t, ok.start_window));
            }
            Ev::ToRelay(rx, SubscriptionAction::Unsubscribe(t)) => {
                self.relay.unsubscribe(rx, sid, t)?;
            }
            Ev::SubscribeOk(rx, t, start) => {
                self.audit.push(AuditEntry {
                    time: self.now,
                    receiver: rx,
                    kind: AuditKind::SubscribeOkReceived,
                    track: t,
                });
                let actions = self.receivers[rx].on_subscribe_ok(t, start)?;
                self.send_control(rx, &actions);
            }
        }
        Ok(())
    }
}

/// Runs the whole stream through the simulated pipeline.
pub fn simulate(windows: &[EventWindow], p: &SimParams) -> Result<SimOutcome> {
    let mut relay = RelayState::new(p.queue_cap);
    relay.announce(p.announce)?;
    let mut receivers = Vec::new();
    let mut links = Vec::new();
    for cfg in &p.receivers {
        let id = relay.add_subscriber();
        debug_assert_eq!(id, receivers.len());
        receivers.push(Receiver::new(p.announce, *cfg)?);
        links.push(Link { bucket: TokenBucket::with_burst_time(p.bandwidth, p.burst_us, 0), busy: None });
    }
    let mut sim = Sim {
        p,
        partition: p.announce.partition()?,
        windows,
        now: 0,
        seq: 0,
        queue: BinaryHeap::new(),
        slots: Vec::new(),
        relay,
        links,
        out: vec![Vec::new(); receivers.len()],
        receivers,
        audit: Vec::new(),
        published: Vec::with_capacity(windows.len()),
        publisher_dropped: 0,
    };
    for rx in 0..sim.receivers.len() {
        let actions = sim.receivers[rx].start();
        sim.send_control(rx, &actions);
    }
    for (i, w) in windows.iter().enumerate() {
        let deadline = replay_deadline(p.session_start, w.index, w.length_us);
        sim.at(deadline, Ev::Publish(i));
    }
    while let Some(Reverse((time, _, slot))) = sim.queue.pop() {
        sim.now = time;
        let ev = sim.slots[slot].take().expect("event fires once");
        sim.step(ev)?;
    }
    let end = sim.now;
    let mut results = Vec::new();
    for (rx, r) in sim.receivers.iter_mut().enumerate() {
        let tail = r.finish(end);
        sim.out[rx].extend(tail.windows);
        results.push(SimReceiver {
            windows: std::mem::take(&mut sim.out[rx]),
            lost_windows: r.lost_windows(),
            discarded_segments: r.discarded_segments(),
            relay_drops: sim.relay.drops(rx),
        });
    }
    Ok(SimOutcome {
        published: sim.published,
        publisher_dropped: sim.publisher_dropped,
        receivers: results,
        audit: sim.audit,
        end_time: end,
    })
}
