//! Receiver-side track selection.
//!
//! After each reconstructed window the receiver compares the measured latency
//! with its target and scales a "chunk" estimate (events per window it can
//! absorb) down or up by 20%. The chunk divided by the per-track capacity `E`
//! gives the number of tracks to hold. Tracks are added one at a time, each
//! only after the previous subscription was confirmed; surplus tracks are all
//! dropped at once.

use crate::error::{Error, Result};
use crate::partition::{TrackId, TrackSegment};

pub const DECREASE_FACTOR: f64 = 0.8;
pub const INCREASE_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubscriptionAction {
    Subscribe(TrackId),
    Unsubscribe(TrackId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationState {
    chunk_size: f64,
    target_latency: u64,
    events_per_track: u32,
    tracks: u16,
    /// Tracks `0..subscribed` are held.
    subscribed: u16,
    pending: Option<TrackId>,
    /// The pending subscription became surplus before it was confirmed.
    cancel_pending: bool,
}

impl AdaptationState {
    /// Starts at one track's worth of events with nothing subscribed yet;
    /// [`AdaptationState::bootstrap`] issues the subscription for track 0.
    pub fn new(tracks: u16, events_per_track: u32, target_latency_us: u64) -> Result<Self> {
        if tracks == 0 || events_per_track == 0 {
            return Err(Error::Parameter("tracks and events per track must be positive".into()));
        }
        Ok(Self {
            chunk_size: events_per_track as f64,
            target_latency: target_latency_us,
            events_per_track,
            tracks,
            subscribed: 0,
            pending: None,
            cancel_pending: false,
        })
    }

    pub fn bootstrap(&mut self) -> Vec<SubscriptionAction> {
        if self.subscribed == 0 && self.pending.is_none() {
            self.pending = Some(0);
            vec![SubscriptionAction::Subscribe(0)]
        } else {
            Vec::new()
        }
    }

    pub fn chunk_size(&self) -> f64 {
        self.chunk_size
    }

    pub fn subscribed(&self) -> u16 {
        self.subscribed
    }

    pub fn pending(&self) -> Option<TrackId> {
        self.pending
    }

    pub fn target_latency(&self) -> u64 {
        self.target_latency
    }

    pub fn min_chunk(&self) -> f64 {
        self.events_per_track as f64
    }

    pub fn max_chunk(&self) -> f64 {
        self.tracks as f64 * self.events_per_track as f64
    }

    /// Scales the chunk by 0.8 when `latency` is above target, 1.2 when below,
    /// and clamps it to `[E, N * E]`.
    pub fn adapt_chunk(&mut self, latency: u64) -> f64 {
        let factor = match latency.cmp(&self.target_latency) {
            std::cmp::Ordering::Greater => DECREASE_FACTOR,
            std::cmp::Ordering::Less => INCREASE_FACTOR,
            std::cmp::Ordering::Equal => 1.0,
        };
        self.chunk_size = (self.chunk_size * factor).clamp(self.min_chunk(), self.max_chunk());
        self.chunk_size
    }

    pub fn target_tracks(&self) -> u16 {
        target_tracks(self.chunk_size, self.events_per_track, self.tracks)
    }

    /// Moves the subscription toward `target`. Unsubscribes take effect
    /// immediately; a subscribe only marks the track pending. A pending
    /// subscribe that falls above the new target is released as soon as it
    /// is confirmed.
    pub fn subscription_actions(&mut self, target: u16) -> Vec<SubscriptionAction> {
        let target = target.clamp(1, self.tracks);
        let current = self.subscribed;
        if target < current {
            self.subscribed = target;
            self.cancel_pending |= self.pending.is_some();
            (target..current).map(SubscriptionAction::Unsubscribe).collect()
        } else if target > current && self.pending.is_none() {
            self.pending = Some(current);
            vec![SubscriptionAction::Subscribe(current)]
        } else {
            Vec::new()
        }
    }

    /// One adaptation step for a freshly reconstructed window.
    pub fn tick(&mut self, latency: u64) -> Vec<SubscriptionAction> {
        self.adapt_chunk(latency);
        let target = self.target_tracks();
        self.subscription_actions(target)
    }

    /// Completes the handshake for the pending track. Returns the
    /// unsubscribe to send if the track was cancelled in the meantime.
    pub fn on_subscribe_ok(&mut self, track: TrackId) -> Result<Option<SubscriptionAction>> {
        match self.pending {
            Some(p) if p == track && self.cancel_pending => {
                self.pending = None;
                self.cancel_pending = false;
                Ok(Some(SubscriptionAction::Unsubscribe(track)))
            }
            Some(p) if p == track && track == self.subscribed => {
                self.subscribed += 1;
                self.pending = None;
                Ok(None)
            }
            Some(p) => Err(Error::Protocol(format!("SUBSCRIBE_OK for track {track}, pending {p}"))),
            None => Err(Error::Protocol(format!("SUBSCRIBE_OK for track {track} with none pending"))),
        }
    }

    /// Drops `track` and everything above it, keeping at least track 0.
    /// Used when a track stops delivering.
    pub fn shed_from(&mut self, track: TrackId) -> Vec<SubscriptionAction> {
        let from = track.max(1);
        if from >= self.subscribed {
            return Vec::new();
        }
        let current = self.subscribed;
        self.subscribed = from;
        self.cancel_pending |= self.pending.is_some();
        (from..current).map(SubscriptionAction::Unsubscribe).collect()
    }
}

/// `max(1, floor(chunk / E))`, capped at `tracks`.
pub fn target_tracks(chunk_size: f64, events_per_track: u32, tracks: u16) -> u16 {
    let k = (chunk_size / events_per_track as f64).floor();
    (k.max(1.0) as u64).min(tracks as u64) as u16
}

/// Per-window measurement taken when a window is rebuilt.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMetrics {
    pub window_index: u64,
    pub first_send_time: u64,
    pub reconstruct_time: u64,
    pub latency: u64,
    pub received_events: u64,
    pub received_bytes: u64,
    pub source_events: Option<u64>,
    /// Tracks in effect for this window.
    pub subscribed_tracks: u16,
    /// Chunk estimate after this window's adaptation step.
    pub chunk_size: f64,
}

/// Latency is measured from the send time of the lowest-numbered track
/// present for the window. `segments` must be non-empty.
pub fn measure_latency(segments: &[TrackSegment], reconstruct_time: u64) -> Option<WindowMetrics> {
    let first = segments.iter().min_by_key(|s| s.track_id)?;
    let received_events: u64 = segments.iter().map(|s| s.events.len() as u64).sum();
    Some(WindowMetrics {
        window_index: first.window_index,
        first_send_time: first.send_time,
        reconstruct_time,
        latency: reconstruct_time.saturating_sub(first.send_time),
        received_events,
        received_bytes: received_events * crate::event::EVENT_BYTES as u64,
        source_events: None,
        subscribed_tracks: segments.len() as u16,
        chunk_size: 0.0,
    })
}
