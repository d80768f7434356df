//! Relay fan-out state, independent of any I/O.
//!
//! The relay holds one announced session. Each subscriber has a set of
//! subscribed tracks and a single egress queue shared by all of its tracks,
//! with a per-track bound. Segments are appended in publish order, so
//! per-track order is preserved; when a track is at its bound the incoming
//! (newest) segment is dropped for that subscriber and counted.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use tracing::warn;

use super::wire::Announce;
use crate::error::{Error, Result};
use crate::partition::{TrackId, TrackSegment};

pub const DEFAULT_QUEUE_CAP: usize = 64;

pub type SubscriberId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Enqueued(SubscriberId),
    Dropped(SubscriberId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubscribeOutcome {
    pub start_window: u64,
    pub duplicate: bool,
}

#[derive(Debug, Default)]
struct Subscriber {
    /// track -> first window forwarded
    tracks: BTreeMap<TrackId, u64>,
    queue: VecDeque<Arc<TrackSegment>>,
    queued_per_track: Vec<usize>,
    drops_per_track: Vec<u64>,
    active: bool,
}

#[derive(Debug)]
pub struct RelayState {
    queue_cap: usize,
    session: Option<Announce>,
    latest_window: Vec<Option<u64>>,
    subscribers: Vec<Subscriber>,
}

impl RelayState {
    pub fn new(queue_cap: usize) -> Self {
        Self { queue_cap: queue_cap.max(1), session: None, latest_window: Vec::new(), subscribers: Vec::new() }
    }

    pub fn session(&self) -> Option<&Announce> {
        self.session.as_ref()
    }

    pub fn queue_cap(&self) -> usize {
        self.queue_cap
    }

    pub fn announce(&mut self, a: Announce) -> Result<()> {
        match &self.session {
            Some(cur) if *cur != a => Err(Error::Protocol(format!("session {} already announced", cur.session_id))),
            Some(_) => Ok(()),
            None => {
                self.latest_window = vec![None; a.tracks as usize];
                for s in &mut self.subscribers {
                    s.queued_per_track = vec![0; a.tracks as usize];
                    s.drops_per_track = vec![0; a.tracks as usize];
                }
                self.session = Some(a);
                Ok(())
            }
        }
    }

    fn tracks(&self) -> usize {
        self.session.map_or(0, |s| s.tracks as usize)
    }

    pub fn add_subscriber(&mut self) -> SubscriberId {
        let n = self.tracks();
        self.subscribers.push(Subscriber {
            queued_per_track: vec![0; n],
            drops_per_track: vec![0; n],
            active: true,
            ..Default::default()
        });
        self.subscribers.len() - 1
    }

    pub fn remove_subscriber(&mut self, sub: SubscriberId) {
        if let Some(s) = self.subscribers.get_mut(sub) {
            s.active = false;
            s.tracks.clear();
            s.queue.clear();
            s.queued_per_track.iter_mut().for_each(|c| *c = 0);
        }
    }

    fn check_track(&self, session_id: Option<u64>, track: TrackId) -> Result<Announce> {
        let a = self.session.ok_or_else(|| Error::Protocol("no session announced".into()))?;
        if let Some(id) = session_id {
            if id != a.session_id {
                return Err(Error::Protocol(format!("unknown session {id}")));
            }
        }
        if track >= a.tracks {
            return Err(Error::Protocol(format!("track {track} not announced (session has {})", a.tracks)));
        }
        Ok(a)
    }

    fn subscriber(&mut self, sub: SubscriberId) -> Result<&mut Subscriber> {
        match self.subscribers.get_mut(sub) {
            Some(s) if s.active => Ok(s),
            _ => Err(Error::Protocol(format!("unknown subscriber {sub}"))),
        }
    }

    /// Starts forwarding `track` to `sub` from the next window published on
    /// that track. Re-subscribing is a no-op that reports the original start.
    pub fn subscribe(&mut self, sub: SubscriberId, session_id: u64, track: TrackId) -> Result<SubscribeOutcome> {
        self.check_track(Some(session_id), track)?;
        let start = self.latest_window[track as usize].map_or(0, |w| w + 1);
        let s = self.subscriber(sub)?;
        if let Some(&start_window) = s.tracks.get(&track) {
            warn!(sub, track, "duplicate subscribe ignored");
            return Ok(SubscribeOutcome { start_window, duplicate: true });
        }
        s.tracks.insert(track, start);
        Ok(SubscribeOutcome { start_window: start, duplicate: false })
    }

    /// Stops forwarding and discards anything still queued for the track.
    /// Returns the number of purged segments.
    pub fn unsubscribe(&mut self, sub: SubscriberId, session_id: u64, track: TrackId) -> Result<usize> {
        self.check_track(Some(session_id), track)?;
        let s = self.subscriber(sub)?;
        if s.tracks.remove(&track).is_none() {
            warn!(sub, track, "unsubscribe for track not subscribed");
            return Ok(0);
        }
        let before = s.queue.len();
        s.queue.retain(|seg| seg.track_id != track);
        s.queued_per_track[track as usize] = 0;
        Ok(before - s.queue.len())
    }

    pub fn is_subscribed(&self, sub: SubscriberId, track: TrackId) -> bool {
        self.subscribers.get(sub).is_some_and(|s| s.tracks.contains_key(&track))
    }

    /// Fans a published segment out to every subscriber of its track.
    pub fn forward(&mut self, seg: TrackSegment) -> Result<Vec<Delivery>> {
        self.check_track(None, seg.track_id)?;
        let track = seg.track_id as usize;
        let latest = &mut self.latest_window[track];
        *latest = Some(latest.map_or(seg.window_index, |w| w.max(seg.window_index)));
        let seg = Arc::new(seg);
        let cap = self.queue_cap;
        let mut out = Vec::new();
        for (id, s) in self.subscribers.iter_mut().enumerate() {
            if !s.active {
                continue;
            }
            match s.tracks.get(&seg.track_id) {
                Some(&start) if seg.window_index >= start => {}
                _ => continue,
            }
            if s.queued_per_track[track] >= cap {
                s.drops_per_track[track] += 1;
                out.push(Delivery::Dropped(id));
            } else {
                s.queued_per_track[track] += 1;
                s.queue.push_back(Arc::clone(&seg));
                out.push(Delivery::Enqueued(id));
            }
        }
        Ok(out)
    }

    /// Next segment to put on `sub`'s link.
    pub fn pop(&mut self, sub: SubscriberId) -> Option<Arc<TrackSegment>> {
        let s = self.subscribers.get_mut(sub)?;
        let seg = s.queue.pop_front()?;
        s.queued_per_track[seg.track_id as usize] -= 1;
        Some(seg)
    }

    pub fn queued(&self, sub: SubscriberId) -> usize {
        self.subscribers.get(sub).map_or(0, |s| s.queue.len())
    }

    pub fn drops(&self, sub: SubscriberId) -> u64 {
        self.subscribers.get(sub).map_or(0, |s| s.drops_per_track.iter().sum())
    }

    pub fn drops_per_track(&self, sub: SubscriberId) -> &[u64] {
        self.subscribers.get(sub).map_or(&[], |s| &s.drops_per_track)
    }
}
