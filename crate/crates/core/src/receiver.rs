//! Receiver coordinator.
//!
//! Collects segments arriving on each subscribed track, decides when a
//! window is complete, rebuilds it, measures latency and (for adaptive
//! receivers) runs the track-selection step. It performs no I/O: transports
//! feed it segments and control replies and carry its subscription actions
//! back to the relay.
//!
//! A window is complete when every track expected for it has either
//! delivered its segment or delivered a later window (the relay dropped the
//! segment; tracks are ordered, so it will never arrive). A track whose
//! segment is still missing once some track has delivered a window
//! `stall_windows` ahead is treated as stalled.

use std::collections::BTreeMap;

use crate::adaptation::{measure_latency, AdaptationState, SubscriptionAction, WindowMetrics};
use crate::error::{Error, Result};
use crate::event::EventWindow;
use crate::partition::{PartitionConfig, TrackId, TrackSegment};
use crate::transport::Announce;

pub const DEFAULT_STALL_WINDOWS: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiverMode {
    /// Latency-driven track selection.
    Adaptive { target_latency_us: u64 },
    /// Subscribes to every track and never adapts (archival consumer).
    Passive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceiverConfig {
    pub mode: ReceiverMode,
    pub stall_windows: u64,
}

impl ReceiverConfig {
    pub fn adaptive(target_latency_us: u64) -> Self {
        Self { mode: ReceiverMode::Adaptive { target_latency_us }, stall_windows: DEFAULT_STALL_WINDOWS }
    }

    pub fn passive() -> Self {
        Self { mode: ReceiverMode::Passive, stall_windows: DEFAULT_STALL_WINDOWS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TrackState {
    Idle,
    Pending,
    Active { start: u64, last: Option<u64> },
}

#[derive(Debug, Clone)]
pub struct ReconstructedWindow {
    pub window: EventWindow,
    pub metrics: WindowMetrics,
    pub tracks: Vec<TrackId>,
}

#[derive(Debug, Default)]
pub struct ReceiverOutput {
    pub control: Vec<SubscriptionAction>,
    pub windows: Vec<ReconstructedWindow>,
}

impl ReceiverOutput {
    fn extend(&mut self, other: ReceiverOutput) {
        self.control.extend(other.control);
        self.windows.extend(other.windows);
    }
}

#[derive(Debug)]
pub struct Receiver {
    session: Announce,
    partition: PartitionConfig,
    config: ReceiverConfig,
    adaptation: Option<AdaptationState>,
    tracks: Vec<TrackState>,
    pending: BTreeMap<u64, Vec<TrackSegment>>,
    next_window: Option<u64>,
    newest_seen: Option<u64>,
    lost_windows: u64,
    discarded_segments: u64,
}

impl Receiver {
    pub fn new(session: Announce, config: ReceiverConfig) -> Result<Self> {
        let partition = session.partition()?;
        let adaptation = match config.mode {
            ReceiverMode::Adaptive { target_latency_us } => {
                Some(AdaptationState::new(session.tracks, session.events_per_track, target_latency_us)?)
            }
            ReceiverMode::Passive => None,
        };
        Ok(Self {
            session,
            partition,
            config,
            adaptation,
            tracks: vec![TrackState::Idle; session.tracks as usize],
            pending: BTreeMap::new(),
            next_window: None,
            newest_seen: None,
            lost_windows: 0,
            discarded_segments: 0,
        })
    }

    pub fn session(&self) -> &Announce {
        &self.session
    }

    pub fn adaptation(&self) -> Option<&AdaptationState> {
        self.adaptation.as_ref()
    }

    /// Windows skipped because no segment for them ever arrived.
    pub fn lost_windows(&self) -> u64 {
        self.lost_windows
    }

    /// Segments ignored because they arrived for a track no longer held or
    /// a window already rebuilt.
    pub fn discarded_segments(&self) -> u64 {
        self.discarded_segments
    }

    pub fn active_tracks(&self) -> u16 {
        self.tracks.iter().filter(|t| matches!(t, TrackState::Active { .. })).count() as u16
    }

    /// Initial subscriptions.
    pub fn start(&mut self) -> Vec<SubscriptionAction> {
        let actions = match &mut self.adaptation {
            Some(a) => a.bootstrap(),
            None => (0..self.session.tracks).map(SubscriptionAction::Subscribe).collect(),
        };
        self.apply(&actions);
        actions
    }

    /// Completes a subscription handshake. Returns an unsubscribe when the
    /// track was no longer wanted by the time it was confirmed.
    pub fn on_subscribe_ok(&mut self, track: TrackId, start_window: u64) -> Result<Vec<SubscriptionAction>> {
        match self.tracks.get(track as usize) {
            Some(TrackState::Pending) => {}
            _ => return Err(Error::Protocol(format!("unexpected SUBSCRIBE_OK for track {track}"))),
        }
        if let Some(a) = &mut self.adaptation {
            if let Some(cancel) = a.on_subscribe_ok(track)? {
                self.apply(&[cancel]);
                return Ok(vec![cancel]);
            }
        }
        self.tracks[track as usize] = TrackState::Active { start: start_window, last: None };
        if self.next_window.is_none() {
            self.next_window = Some(start_window);
        }
        Ok(Vec::new())
    }

    pub fn on_segment(&mut self, seg: TrackSegment, now: u64) -> Result<ReceiverOutput> {
        let w = seg.window_index;
        let Some(TrackState::Active { start, last }) = self.tracks.get_mut(seg.track_id as usize) else {
            self.discarded_segments += 1;
            return Ok(ReceiverOutput::default());
        };
        if w < *start || self.next_window.is_some_and(|nw| w < nw) {
            self.discarded_segments += 1;
            return Ok(ReceiverOutput::default());
        }
        if last.is_some_and(|l| w <= l) {
            return Err(Error::Protocol(format!(
                "track {} delivered window {w} after window {}",
                seg.track_id,
                last.unwrap()
            )));
        }
        *last = Some(w);
        self.newest_seen = Some(self.newest_seen.map_or(w, |n| n.max(w)));
        self.pending.entry(w).or_default().push(seg);
        Ok(self.drain(now, false))
    }

    /// Rebuilds everything still buffered, e.g. when the stream has ended.
    pub fn finish(&mut self, now: u64) -> ReceiverOutput {
        self.drain(now, true)
    }

    fn expected(&self, window: u64) -> Vec<(TrackId, bool)> {
        let have = self.pending.get(&window);
        self.tracks
            .iter()
            .enumerate()
            .filter_map(|(i, t)| match *t {
                TrackState::Active { start, last } if start <= window => {
                    let delivered = have.is_some_and(|v| v.iter().any(|s| s.track_id as usize == i))
                        || last.is_some_and(|l| l > window);
                    Some((i as TrackId, delivered))
                }
                _ => None,
            })
            .collect()
    }

    fn drain(&mut self, now: u64, flush: bool) -> ReceiverOutput {
        let mut out = ReceiverOutput::default();
        while let Some(nw) = self.next_window {
            if flush && self.pending.range(nw..).next().is_none() {
                break;
            }
            let expected = self.expected(nw);
            if expected.is_empty() && !flush {
                break;
            }
            if let Some(&(missing, _)) = expected.iter().find(|(_, ok)| !ok) {
                let stalled = self.newest_seen.is_some_and(|n| n >= nw.saturating_add(self.config.stall_windows));
                if !flush && !stalled {
                    break;
                }
                if stalled && !flush {
                    if let Some(a) = &mut self.adaptation {
                        let shed = a.shed_from(missing);
                        self.apply(&shed);
                        out.control.extend(shed);
                    }
                }
            }
            let subscribed = expected.len() as u16;
            let r = self.rebuild(nw, subscribed, now);
            out.extend(r);
            self.next_window = Some(nw + 1);
        }
        out
    }

    fn rebuild(&mut self, window: u64, subscribed: u16, now: u64) -> ReceiverOutput {
        let mut segs = self.pending.remove(&window).unwrap_or_default();
        segs.retain(|s| matches!(self.tracks[s.track_id as usize], TrackState::Active { .. }));
        segs.sort_by_key(|s| s.track_id);
        let Some(mut metrics) = measure_latency(&segs, now) else {
            self.lost_windows += 1;
            return ReceiverOutput::default();
        };
        let tracks: Vec<TrackId> = segs.iter().map(|s| s.track_id).collect();
        let events = self.partition.reconstruct(&segs, &tracks).expect("segments were selected by track id");
        metrics.subscribed_tracks = subscribed;
        let mut control = Vec::new();
        if let Some(a) = &mut self.adaptation {
            control = a.tick(metrics.latency);
            metrics.chunk_size = a.chunk_size();
        } else {
            metrics.chunk_size = self.partition.window_cap().unwrap_or(0) as f64;
        }
        self.apply(&control);
        let window = EventWindow::with_events(window, self.session.window_length, events);
        ReceiverOutput { control, windows: vec![ReconstructedWindow { window, metrics, tracks }] }
    }

    fn apply(&mut self, actions: &[SubscriptionAction]) {
        for a in actions {
            match *a {
                SubscriptionAction::Subscribe(t) => self.tracks[t as usize] = TrackState::Pending,
                SubscriptionAction::Unsubscribe(t) => {
                    self.tracks[t as usize] = TrackState::Idle;
                    for segs in self.pending.values_mut() {
                        segs.retain(|s| s.track_id != t);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, Polarity, SensorGeometry};
    use crate::partition::Strategy;

    fn announce(tracks: u16, e: u32) -> Announce {
        Announce {
            session_id: 1,
            tracks,
            events_per_track: e,
            geometry: SensorGeometry::HD,
            window_length: 50_000,
            strategy: Strategy::Bucket,
        }
    }

    fn seg(track: TrackId, window: u64, n: usize) -> TrackSegment {
        let events = (0..n)
            .map(|i| Event::new(window * 50_000 + track as u64 * 100 + i as u64, 0, 0, Polarity::Positive))
            .collect();
        TrackSegment { track_id: track, window_index: window, send_time: window * 50_000, events }
    }

    fn passive(tracks: u16) -> Receiver {
        let mut r = Receiver::new(announce(tracks, 2), ReceiverConfig::passive()).unwrap();
        let acts = r.start();
        assert_eq!(acts.len(), tracks as usize);
        for t in 0..tracks {
            r.on_subscribe_ok(t, 0).unwrap();
        }
        r
    }

    #[test]
    fn waits_for_all_tracks() {
        let mut r = passive(2);
        assert!(r.on_segment(seg(0, 0, 2), 10).unwrap().windows.is_empty());
        let out = r.on_segment(seg(1, 0, 1), 20).unwrap();
        assert_eq!(out.windows.len(), 1);
        let w = &out.windows[0];
        assert_eq!(w.window.len(), 3);
        assert_eq!(w.metrics.latency, 20);
        assert_eq!(w.metrics.subscribed_tracks, 2);
    }

    #[test]
    fn gap_on_one_track_completes_window() {
        let mut r = passive(2);
        r.on_segment(seg(0, 0, 2), 10).unwrap();
        r.on_segment(seg(0, 1, 2), 11).unwrap();
        // track 1 skips window 0 (dropped at relay)
        let out = r.on_segment(seg(1, 1, 2), 12).unwrap();
        assert_eq!(out.windows.len(), 2);
        assert_eq!(out.windows[0].tracks, [0]);
        assert_eq!(out.windows[1].tracks, [0, 1]);
    }

    #[test]
    fn rejects_reordered_track() {
        let mut r = passive(1);
        r.on_segment(seg(0, 3, 1), 0).unwrap();
        r.next_window = Some(0);
        assert!(matches!(r.on_segment(seg(0, 2, 1), 0), Err(Error::Protocol(_))));
    }

    #[test]
    fn unexpected_subscribe_ok() {
        let mut r = passive(2);
        assert!(r.on_subscribe_ok(1, 0).is_err());
    }

    #[test]
    fn adaptive_grows_then_sheds() {
        let mut r = Receiver::new(announce(3, 2), ReceiverConfig::adaptive(5_000)).unwrap();
        assert_eq!(r.start(), [SubscriptionAction::Subscribe(0)]);
        r.on_subscribe_ok(0, 0).unwrap();
        // fast window: chunk 2 -> 2.4, target 1
        let out = r.on_segment(seg(0, 0, 2), 1_000).unwrap();
        assert!(out.control.is_empty());
        // second fast window: 2.88 -> still 1; third: 3.456 -> still 1; 4th: 4.15 -> 2
        let mut ctl = Vec::new();
        for w in 1..4 {
            let s = seg(0, w, 2);
            let t = s.send_time + 1_000;
            ctl.extend(r.on_segment(s, t).unwrap().control);
        }
        assert_eq!(ctl, [SubscriptionAction::Subscribe(1)]);
        r.on_subscribe_ok(1, 4).unwrap();
        // slow window 4: chunk shrinks, unsubscribes track 1
        r.on_segment(seg(0, 4, 2), 260_000).unwrap();
        let out = r.on_segment(seg(1, 4, 2), 260_001).unwrap();
        assert_eq!(out.windows[0].tracks, [0, 1]);
        assert_eq!(out.control, [SubscriptionAction::Unsubscribe(1)]);
        assert_eq!(r.active_tracks(), 1);
        // late segment on the dropped track is ignored
        assert!(r.on_segment(seg(1, 5, 2), 260_002).unwrap().windows.is_empty());
        assert_eq!(r.discarded_segments(), 1);
    }

    #[test]
    fn stalled_track_is_shed() {
        let mut r = Receiver::new(announce(3, 2), ReceiverConfig::adaptive(1_000_000)).unwrap();
        r.start();
        r.on_subscribe_ok(0, 0).unwrap();
        // force a second track
        r.adaptation.as_mut().unwrap().subscription_actions(2);
        r.tracks[1] = TrackState::Pending;
        r.on_subscribe_ok(1, 0).unwrap();
        let mut shed = Vec::new();
        for w in 0..25 {
            shed.extend(r.on_segment(seg(0, w, 1), w * 50_000 + 10).unwrap().control);
        }
        assert!(shed.contains(&SubscriptionAction::Unsubscribe(1)));
        assert!(r.next_window.unwrap() > 0);
    }

    #[test]
    fn finish_flushes_partial_windows() {
        let mut r = passive(2);
        r.on_segment(seg(0, 0, 1), 5).unwrap();
        r.on_segment(seg(0, 1, 1), 6).unwrap();
        let out = r.finish(100);
        assert_eq!(out.windows.len(), 2);
        assert!(r.finish(200).windows.is_empty());
    }
}
