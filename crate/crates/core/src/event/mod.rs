//! Event-camera data model.
//!
//! An [`Event`] is one DVS sample: pixel column/row, a microsecond timestamp
//! and a polarity bit. Streams are cut into fixed-length [`EventWindow`]s
//! (50 ms by default), which are the unit of partitioning, transport and
//! latency measurement.

pub(crate) mod codec;
mod file;
mod synth;

pub use codec::{decode_event, encode_event, EVENT_BITS, EVENT_BYTES};
pub use file::{read_evst, read_text, write_evst, write_text, EventStreamHeader, EVST_MAGIC, EVST_VERSION};
pub use synth::{generate_synthetic, RateProfile};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default window length: 50 ms.
pub const DEFAULT_WINDOW_US: u64 = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Polarity {
    Negative = 0,
    Positive = 1,
}

impl Polarity {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Polarity {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            0 => Ok(Polarity::Negative),
            1 => Ok(Polarity::Positive),
            other => Err(Error::CorruptRecord(format!("polarity byte {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    /// Timestamp in microseconds.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Self { t, x, y, p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl SensorGeometry {
    /// 1280x720, the resolution of the traffic-monitoring footage the
    /// defaults were tuned on.
    pub const HD: SensorGeometry = SensorGeometry { width: 1280, height: 720 };

    pub fn new(width: u16, height: u16) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!("sensor geometry {width}x{height}")));
        }
        Ok(Self { width, height })
    }

    pub fn contains(&self, e: &Event) -> bool {
        e.x < self.width && e.y < self.height
    }

    pub fn check(&self, e: &Event) -> Result<()> {
        if self.contains(e) {
            Ok(())
        } else {
            Err(Error::OutOfBounds { x: e.x, y: e.y, width: self.width, height: self.height })
        }
    }

    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// All events of one interval `[start_t, start_t + length_us)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventWindow {
    pub index: u64,
    pub start_t: u64,
    pub length_us: u64,
    pub events: Vec<Event>,
}

impl EventWindow {
    pub fn empty(index: u64, length_us: u64) -> Self {
        Self { index, start_t: index * length_us, length_us, events: Vec::new() }
    }

    pub fn with_events(index: u64, length_us: u64, events: Vec<Event>) -> Self {
        Self { index, start_t: index * length_us, length_us, events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn end_t(&self) -> u64 {
        self.start_t + self.length_us
    }
}

/// Groups a time-ordered stream into consecutive windows, starting at index 0
/// and running through `max_t / window_length`. Windows without events are
/// kept.
pub fn window_split(events: &[Event], window_length: u64) -> Result<Vec<EventWindow>> {
    if window_length == 0 {
        return Err(Error::Parameter("window length must be positive".into()));
    }
    check_sorted(events)?;
    let Some(last) = events.last() else {
        return Ok(Vec::new());
    };
    let count = last.t / window_length + 1;
    let mut windows: Vec<EventWindow> = (0..count).map(|i| EventWindow::empty(i, window_length)).collect();
    for e in events {
        windows[(e.t / window_length) as usize].events.push(*e);
    }
    Ok(windows)
}

pub fn check_sorted(events: &[Event]) -> Result<()> {
    for pair in events.windows(2) {
        if pair[1].t < pair[0].t {
            return Err(Error::Ordering { prev: pair[0].t, next: pair[1].t });
        }
    }
    Ok(())
}

/// Concatenates window contents back into one stream.
pub fn flatten(windows: &[EventWindow]) -> Vec<Event> {
    windows.iter().flat_map(|w| w.events.iter().copied()).collect()
}

/// Send deadline for each window when replaying a recording as if it came
/// from a live sensor: window `i` leaves no earlier than
/// `session_start + i * window_length`.
pub fn replay_schedule(windows: &[EventWindow], session_start: u64) -> impl Iterator<Item = (u64, &EventWindow)> + '_ {
    windows.iter().map(move |w| (replay_deadline(session_start, w.index, w.length_us), w))
}

pub fn replay_deadline(session_start: u64, index: u64, window_length: u64) -> u64 {
    session_start + index * window_length
}
