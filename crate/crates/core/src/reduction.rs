//! Fixed-bandwidth event reduction.
//!
//! Each window gets an independent event budget derived from a link
//! bandwidth; events beyond the budget are discarded either from the tail of
//! the window or evenly across its temporal sub-bins.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{EventWindow, EVENT_BITS};

/// Link rate in bits per second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bandwidth(u64);

impl Bandwidth {
    pub fn from_bps(bps: u64) -> Result<Self> {
        if bps == 0 {
            return Err(Error::Parameter("bandwidth must be positive".into()));
        }
        Ok(Self(bps))
    }

    /// Rounds to the nearest bit per second.
    pub fn from_mbps(mbps: f64) -> Result<Self> {
        if !(mbps.is_finite() && mbps > 0.0) {
            return Err(Error::Parameter(format!("bandwidth {mbps} Mbps must be positive")));
        }
        Self::from_bps((mbps * 1e6).round() as u64)
    }

    pub fn bps(self) -> u64 {
        self.0
    }

    pub fn mbps(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Bits that fit in `micros` microseconds, rounded down.
    pub fn bits_in(self, micros: u64) -> u64 {
        (self.0 as u128 * micros as u128 / 1_000_000) as u64
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Mbps", self.mbps())
    }
}

/// Per-window event allowance at a fixed bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandwidthBudget {
    pub bandwidth: Bandwidth,
    pub window_length: u64,
    pub event_bits: u64,
    pub events_per_window: u64,
}

impl BandwidthBudget {
    pub fn new(bandwidth: Bandwidth, window_length: u64) -> Self {
        let event_bits = EVENT_BITS;
        let events_per_window = bandwidth.bits_in(window_length) / event_bits;
        Self { bandwidth, window_length, event_bits, events_per_window }
    }
}

/// `floor(bandwidth * window / 128 bits)`.
pub fn budget_events(bandwidth_mbps: f64, window_length: u64) -> Result<u64> {
    Ok(BandwidthBudget::new(Bandwidth::from_mbps(bandwidth_mbps)?, window_length).events_per_window)
}

/// Keeps the first `budget` events of the window.
pub fn truncate_tail(window: &EventWindow, budget: u64) -> EventWindow {
    let keep = (budget as usize).min(window.len());
    EventWindow { events: window.events[..keep].to_vec(), ..*window }
}

/// Spreads the budget over `sub_bins` equal slices of the window.
///
/// Bin `b` is allotted `budget / sub_bins`, plus one while the remainder
/// lasts (earliest bins first). Unused allotment carries forward to later
/// bins; whatever is still unused at the end of the window goes back to
/// bins with leftover events, earliest first. Within a bin the earliest
/// events are kept, so the kept count is always `min(len, budget)`.
pub fn sample_even(window: &EventWindow, budget: u64, sub_bins: u32) -> Result<EventWindow> {
    let bins = bin_ranges(window, sub_bins)?;
    let keep = even_quotas(&bins, budget, sub_bins);
    let mut events = Vec::with_capacity(keep.iter().sum::<usize>());
    for (range, k) in bins.iter().zip(&keep) {
        events.extend_from_slice(&window.events[range.start..range.start + k]);
    }
    Ok(EventWindow { events, ..*window })
}

/// Like [`sample_even`] but picks a seeded random subset inside each bin
/// rather than the earliest events. Order is preserved.
pub fn sample_even_random(window: &EventWindow, budget: u64, sub_bins: u32, seed: u64) -> Result<EventWindow> {
    let bins = bin_ranges(window, sub_bins)?;
    let keep = even_quotas(&bins, budget, sub_bins);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ window.index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut events = Vec::with_capacity(keep.iter().sum::<usize>());
    for (range, &k) in bins.iter().zip(&keep) {
        let mut picked = sample(&mut rng, range.len(), k).into_vec();
        picked.sort_unstable();
        events.extend(picked.into_iter().map(|i| window.events[range.start + i]));
    }
    Ok(EventWindow { events, ..*window })
}

/// Index ranges of each temporal sub-bin within the window's event list.
fn bin_ranges(window: &EventWindow, sub_bins: u32) -> Result<Vec<std::ops::Range<usize>>> {
    if sub_bins == 0 {
        return Err(Error::Parameter("sub_bins must be at least 1".into()));
    }
    let bins = sub_bins as u64;
    let mut ranges = Vec::with_capacity(sub_bins as usize);
    let mut start = 0;
    for b in 0..bins {
        // first event index whose bin is > b
        let end = window.events[start..].partition_point(|e| sub_bin(e.t, window.start_t, window.length_us, bins) <= b)
            + start;
        ranges.push(start..end);
        start = end;
    }
    debug_assert_eq!(start, window.len());
    Ok(ranges)
}

pub(crate) fn sub_bin(t: u64, start_t: u64, length: u64, bins: u64) -> u64 {
    (((t.saturating_sub(start_t)) as u128 * bins as u128 / length.max(1) as u128) as u64).min(bins - 1)
}

fn even_quotas(bins: &[std::ops::Range<usize>], budget: u64, sub_bins: u32) -> Vec<usize> {
    let n = sub_bins as u64;
    let base = budget / n;
    let extra = budget % n;
    let mut keep = Vec::with_capacity(bins.len());
    let mut carry = 0u64;
    for (b, range) in bins.iter().enumerate() {
        let quota = base + u64::from((b as u64) < extra) + carry;
        let k = quota.min(range.len() as u64);
        carry = quota - k;
        keep.push(k as usize);
    }
    for (range, k) in bins.iter().zip(keep.iter_mut()) {
        if carry == 0 {
            break;
        }
        let more = ((range.len() - *k) as u64).min(carry);
        *k += more as usize;
        carry -= more;
    }
    keep
}

/// Fraction of source events discarded; zero for an empty source.
pub fn loss_rate(source_count: u64, kept_count: u64) -> Result<f64> {
    if kept_count > source_count {
        return Err(Error::Accounting { source_count, kept: kept_count });
    }
    if source_count == 0 {
        return Ok(0.0);
    }
    Ok((source_count - kept_count) as f64 / source_count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceMode {
    Tail,
    Even,
}

impl FromStr for ReduceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tail" => Ok(ReduceMode::Tail),
            "even" => Ok(ReduceMode::Even),
            other => Err(Error::Config(format!("reduce mode {other:?}: expected tail or even"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowReduction {
    pub window_index: u64,
    pub source_events: u64,
    pub kept_events: u64,
}

/// Applies the per-window budget to a whole stream.
pub fn reduce_windows(
    windows: &[EventWindow],
    bandwidth: Bandwidth,
    mode: ReduceMode,
) -> Result<(Vec<EventWindow>, Vec<WindowReduction>)> {
    let mut out = Vec::with_capacity(windows.len());
    let mut stats = Vec::with_capacity(windows.len());
    for w in windows {
        let budget = BandwidthBudget::new(bandwidth, w.length_us).events_per_window;
        let r = match mode {
            ReduceMode::Tail => truncate_tail(w, budget),
            ReduceMode::Even => sample_even(w, budget, 10)?,
        };
        stats.push(WindowReduction {
            window_index: w.index,
            source_events: w.len() as u64,
            kept_events: r.len() as u64,
        });
        out.push(r);
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, Polarity};
    use proptest::prelude::*;

    fn window_at(ts: &[u64]) -> EventWindow {
        let events = ts.iter().map(|&t| Event::new(t, 0, 0, Polarity::Positive)).collect();
        EventWindow::with_events(0, 50_000, events)
    }

    fn uniform(per_bin: u64) -> EventWindow {
        let ts: Vec<u64> = (0..10).flat_map(|b| (0..per_bin).map(move |i| b * 5_000 + i)).collect();
        window_at(&ts)
    }

    #[test]
    fn budgets() {
        assert_eq!(budget_events(1.0, 50_000).unwrap(), 390);
        assert_eq!(budget_events(100.0, 50_000).unwrap(), 39_062);
        assert_eq!(budget_events(0.00256, 50_000).unwrap(), 1);
        assert!(budget_events(0.0, 50_000).is_err());
        assert!(budget_events(-1.0, 50_000).is_err());
    }

    #[test]
    fn tail() {
        let w = uniform(10);
        assert_eq!(truncate_tail(&w, 100), w);
        let t = truncate_tail(&w, 30);
        assert_eq!(t.events, w.events[..30]);
    }

    #[test]
    fn even_identity_and_split() {
        let w = uniform(10);
        assert_eq!(sample_even(&w, 100, 10).unwrap(), w);
        let r = sample_even(&w, 50, 10).unwrap();
        let per_bin = bin_ranges(&r, 10).unwrap();
        assert!(per_bin.iter().all(|b| b.len() == 5));
    }

    #[test]
    fn even_remainder_goes_early() {
        let r = sample_even(&uniform(10), 53, 10).unwrap();
        let lens: Vec<usize> = bin_ranges(&r, 10).unwrap().iter().map(|b| b.len()).collect();
        assert_eq!(lens, [6, 6, 6, 5, 5, 5, 5, 5, 5, 5]);
    }

    #[test]
    fn even_unused_quota_is_redistributed() {
        // everything in bin 0: forward carry alone would keep only 10
        let ts: Vec<u64> = (0..1000).collect();
        let r = sample_even(&window_at(&ts), 100, 10).unwrap();
        assert_eq!(r.events, window_at(&ts).events[..100]);
        // sparse early bin donates forward
        let mut ts = vec![0, 1];
        ts.extend((0..40).map(|i| 5_000 + i));
        let r = sample_even(&window_at(&ts), 20, 10).unwrap();
        assert_eq!(r.len(), 20);
        assert_eq!(&r.events[..2], &window_at(&ts).events[..2]);
    }

    #[test]
    fn even_rejects_zero_bins() {
        assert!(sample_even(&uniform(1), 5, 0).is_err());
    }

    #[test]
    fn random_variant_counts() {
        let w = uniform(20);
        let a = sample_even_random(&w, 50, 10, 3).unwrap();
        assert_eq!(a.len(), 50);
        assert!(a.events.windows(2).all(|p| p[0].t <= p[1].t));
        assert_eq!(a, sample_even_random(&w, 50, 10, 3).unwrap());
    }

    #[test]
    fn loss() {
        assert_eq!(loss_rate(1000, 1000).unwrap(), 0.0);
        assert_eq!(loss_rate(1000, 0).unwrap(), 1.0);
        assert!((loss_rate(1000, 351).unwrap() - 0.649).abs() < 1e-12);
        assert_eq!(loss_rate(0, 0).unwrap(), 0.0);
        assert!(matches!(loss_rate(1, 2), Err(Error::Accounting { .. })));
    }

    fn arb_window() -> impl Strategy<Value = EventWindow> {
        prop::collection::vec(0u64..50_000, 0..400).prop_map(|mut ts| {
            ts.sort_unstable();
            window_at(&ts)
        })
    }

    proptest! {
        #[test]
        fn reducers_agree_on_count(w in arb_window(), budget in 0u64..500, bins in 1u32..16) {
            let t = truncate_tail(&w, budget);
            let e = sample_even(&w, budget, bins).unwrap();
            let expect = (budget as usize).min(w.len());
            prop_assert_eq!(t.len(), expect);
            prop_assert_eq!(e.len(), expect);
            prop_assert_eq!(&t.events[..], &w.events[..expect]);
            prop_assert!(e.events.windows(2).all(|p| p[0].t <= p[1].t));
            // idempotent once within budget
            prop_assert_eq!(truncate_tail(&t, budget), t.clone());
            prop_assert_eq!(sample_even(&e, budget, bins).unwrap(), e);
        }
    }
}
