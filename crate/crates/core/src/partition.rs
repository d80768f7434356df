//! Splitting windows across tracks and merging them back.
//!
//! Two strategies are supported. Round-robin sends the n-th event of a
//! window to track `(n - 1) mod N`; any subset of tracks is a uniform
//! subsample, but rebuilding the stream needs a k-way interleave. Bucket
//! fills track 0 with the first `E` events, track 1 with the next `E`, and
//! so on, so any prefix of tracks rebuilds a prefix of the window by plain
//! concatenation. Bucket publication is capped at `N * E` events per window.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, EventWindow};

pub type TrackId = u16;

/// One track's share of one window; the unit carried on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackSegment {
    pub track_id: TrackId,
    pub window_index: u64,
    /// Publisher clock, microseconds.
    pub send_time: u64,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    RoundRobin,
    Bucket,
}

impl Strategy {
    pub fn as_u8(self) -> u8 {
        match self {
            Strategy::RoundRobin => 0,
            Strategy::Bucket => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Strategy::RoundRobin),
            1 => Ok(Strategy::Bucket),
            other => Err(Error::Framing(format!("unknown partition strategy {other}"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::RoundRobin => "round_robin",
            Strategy::Bucket => "bucket",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round_robin" | "round-robin" | "rr" => Ok(Strategy::RoundRobin),
            "bucket" => Ok(Strategy::Bucket),
            other => Err(Error::Config(format!("strategy {other:?}: expected round_robin or bucket"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub strategy: Strategy,
    pub tracks: u16,
    /// Bucket capacity per track per window. Ignored by round-robin.
    pub events_per_track: u32,
}

impl PartitionConfig {
    pub fn new(strategy: Strategy, tracks: u16, events_per_track: u32) -> Result<Self> {
        if tracks == 0 {
            return Err(Error::Parameter("track count must be at least 1".into()));
        }
        if events_per_track == 0 {
            return Err(Error::Parameter("events per track must be at least 1".into()));
        }
        Ok(Self { strategy, tracks, events_per_track })
    }

    /// Maximum events published per window (`N * E` for bucket).
    pub fn window_cap(&self) -> Option<u64> {
        match self.strategy {
            Strategy::Bucket => Some(self.tracks as u64 * self.events_per_track as u64),
            Strategy::RoundRobin => None,
        }
    }

    pub fn partition(&self, window: &EventWindow) -> Partitioned {
        match self.strategy {
            Strategy::RoundRobin => Partitioned { segments: partition_round_robin(window, self.tracks), dropped: 0 },
            Strategy::Bucket => partition_bucket(window, self.tracks, self.events_per_track),
        }
    }

    pub fn reconstruct(&self, segments: &[TrackSegment], tracks: &[TrackId]) -> Result<Vec<Event>> {
        match self.strategy {
            Strategy::RoundRobin => reconstruct_round_robin(segments, tracks, self.tracks),
            Strategy::Bucket => reconstruct_bucket(segments, tracks),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partitioned {
    /// Exactly one segment per track, in track order; some may be empty.
    pub segments: Vec<TrackSegment>,
    /// Events beyond the bucket cap, discarded at the publisher.
    pub dropped: u64,
}

fn empty_segments(window: &EventWindow, n: u16) -> Vec<TrackSegment> {
    (0..n)
        .map(|track_id| TrackSegment { track_id, window_index: window.index, send_time: 0, events: Vec::new() })
        .collect()
}

pub fn partition_round_robin(window: &EventWindow, n: u16) -> Vec<TrackSegment> {
    assert!(n > 0, "track count must be positive");
    let mut segs = empty_segments(window, n);
    let per = window.len() / n as usize + 1;
    for s in &mut segs {
        s.events.reserve(per);
    }
    for (i, e) in window.events.iter().enumerate() {
        segs[i % n as usize].events.push(*e);
    }
    segs
}

pub fn partition_bucket(window: &EventWindow, n: u16, e: u32) -> Partitioned {
    assert!(n > 0 && e > 0, "track count and capacity must be positive");
    let mut segments = empty_segments(window, n);
    let mut chunks = window.events.chunks(e as usize);
    for seg in &mut segments {
        match chunks.next() {
            Some(c) => seg.events.extend_from_slice(c),
            None => break,
        }
    }
    let cap = n as usize * e as usize;
    let dropped = window.len().saturating_sub(cap) as u64;
    Partitioned { segments, dropped }
}

fn find(segments: &[TrackSegment], track: TrackId) -> Result<&TrackSegment> {
    let window = segments.first().map_or(0, |s| s.window_index);
    segments.iter().find(|s| s.track_id == track).ok_or(Error::IncompleteWindow { window, track })
}

fn sorted_tracks(tracks: &[TrackId]) -> Vec<TrackId> {
    let mut t = tracks.to_vec();
    t.sort_unstable();
    t.dedup();
    t
}

/// Concatenates the listed tracks' segments in ascending track order.
pub fn reconstruct_bucket(segments: &[TrackSegment], tracks: &[TrackId]) -> Result<Vec<Event>> {
    let tracks = sorted_tracks(tracks);
    let parts = tracks.iter().map(|&t| find(segments, t)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(parts.iter().map(|s| s.events.len()).sum());
    for s in parts {
        out.extend_from_slice(&s.events);
    }
    Ok(out)
}

/// Merges the listed tracks back into source order. The source position of
/// the i-th event on track `k` is `i * n + k`, so no per-event sequence
/// numbers are needed.
pub fn reconstruct_round_robin(segments: &[TrackSegment], tracks: &[TrackId], n: u16) -> Result<Vec<Event>> {
    let tracks = sorted_tracks(tracks);
    let parts = tracks.iter().map(|&t| find(segments, t)).collect::<Result<Vec<_>>>()?;
    let n = n as u64;
    let mut heap = BinaryHeap::with_capacity(parts.len());
    for (slot, s) in parts.iter().enumerate() {
        if !s.events.is_empty() {
            heap.push(Reverse((s.track_id as u64, slot, 0usize)));
        }
    }
    let mut out = Vec::with_capacity(parts.iter().map(|s| s.events.len()).sum());
    while let Some(Reverse((_, slot, i))) = heap.pop() {
        let s = parts[slot];
        out.push(s.events[i]);
        if i + 1 < s.events.len() {
            heap.push(Reverse(((i as u64 + 1) * n + s.track_id as u64, slot, i + 1)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Polarity;

    fn win(n: u64) -> EventWindow {
        let events = (0..n).map(|i| Event::new(i * 10, i as u16, 0, Polarity::Positive)).collect();
        EventWindow::with_events(0, 50_000, events)
    }

    fn xs(segment: &TrackSegment) -> Vec<u16> {
        segment.events.iter().map(|e| e.x).collect()
    }

    #[test]
    fn round_robin_assignment() {
        let segs = partition_round_robin(&win(7), 3);
        assert_eq!(xs(&segs[0]), [0, 3, 6]);
        assert_eq!(xs(&segs[1]), [1, 4]);
        assert_eq!(xs(&segs[2]), [2, 5]);
        assert_eq!(partition_round_robin(&win(7), 1)[0].events, win(7).events);
    }

    #[test]
    fn round_robin_rebuild() {
        let w = win(7);
        let segs = partition_round_robin(&w, 3);
        assert_eq!(reconstruct_round_robin(&segs, &[0, 1, 2], 3).unwrap(), w.events);
        let only0 = reconstruct_round_robin(&segs, &[0], 3).unwrap();
        assert_eq!(only0.iter().map(|e| e.x).collect::<Vec<_>>(), [0, 3, 6]);
        let odd = reconstruct_round_robin(&segs, &[2, 0], 3).unwrap();
        assert_eq!(odd.iter().map(|e| e.x).collect::<Vec<_>>(), [0, 2, 3, 5, 6]);
    }

    #[test]
    fn bucket_assignment() {
        let p = partition_bucket(&win(5), 2, 3);
        assert_eq!(xs(&p.segments[0]), [0, 1, 2]);
        assert_eq!(xs(&p.segments[1]), [3, 4]);
        assert_eq!(p.dropped, 0);

        let p = partition_bucket(&win(0), 3, 3);
        assert_eq!(p.segments.len(), 3);
        assert!(p.segments.iter().all(|s| s.events.is_empty()));

        let p = partition_bucket(&win(10), 2, 3);
        assert_eq!(p.segments.iter().map(|s| s.events.len()).sum::<usize>(), 6);
        assert_eq!(p.dropped, 4);
        assert_eq!(crate::reduction::loss_rate(10, 6).unwrap(), 0.4);
    }

    #[test]
    fn bucket_rebuild() {
        let w = win(5);
        let p = partition_bucket(&w, 2, 3);
        assert_eq!(reconstruct_bucket(&p.segments, &[0, 1]).unwrap(), w.events);
        assert_eq!(reconstruct_bucket(&p.segments, &[0]).unwrap(), w.events[..3]);
    }

    #[test]
    fn missing_segment() {
        let mut p = partition_bucket(&win(5), 3, 2);
        p.segments.remove(1);
        assert!(matches!(reconstruct_bucket(&p.segments, &[0, 1]), Err(Error::IncompleteWindow { track: 1, .. })));
        assert!(reconstruct_round_robin(&p.segments, &[1], 3).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PartitionConfig::new(Strategy::Bucket, 0, 1).is_err());
        assert!(PartitionConfig::new(Strategy::Bucket, 1, 0).is_err());
        let c = PartitionConfig::new(Strategy::Bucket, 5, 250).unwrap();
        assert_eq!(c.window_cap(), Some(1250));
        assert_eq!("rr".parse::<Strategy>().unwrap(), Strategy::RoundRobin);
    }
}
