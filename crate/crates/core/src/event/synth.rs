use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Event, Polarity, SensorGeometry};
use crate::error::{Error, Result};

/// Per-window event counts for synthetic streams.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RateProfile {
    Constant(u64),
    /// `base` events per window, with a 5x spike over the middle fifth of
    /// the stream (windows in `[0.4n, 0.6n)`).
    Surge(u64),
    Explicit(Vec<u64>),
}

pub const SURGE_FACTOR: u64 = 5;

impl RateProfile {
    pub fn counts(&self, windows: u64) -> Vec<u64> {
        match self {
            RateProfile::Constant(c) => vec![*c; windows as usize],
            RateProfile::Surge(base) => {
                let lo = windows * 2 / 5;
                let hi = windows * 3 / 5;
                (0..windows).map(|i| if (lo..hi).contains(&i) { base * SURGE_FACTOR } else { *base }).collect()
            }
            RateProfile::Explicit(v) => v.iter().copied().cycle().take(windows as usize).collect(),
        }
    }
}

impl fmt::Display for RateProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateProfile::Constant(c) => write!(f, "constant:{c}"),
            RateProfile::Surge(b) => write!(f, "surge:{b}"),
            RateProfile::Explicit(v) => {
                let parts: Vec<String> = v.iter().map(u64::to_string).collect();
                write!(f, "list:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for RateProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("rate profile {s:?}: expected constant:N, surge:N or list:a,b,..."));
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "constant" => Ok(RateProfile::Constant(arg.trim().parse().map_err(|_| bad())?)),
            "surge" => Ok(RateProfile::Surge(arg.trim().parse().map_err(|_| bad())?)),
            "list" => {
                let v = arg
                    .split(',')
                    .map(|x| x.trim().parse::<u64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad())?;
                if v.is_empty() {
                    return Err(bad());
                }
                Ok(RateProfile::Explicit(v))
            }
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for RateProfile {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RateProfile> for String {
    fn from(p: RateProfile) -> String {
        p.to_string()
    }
}

/// Deterministic synthetic stream: window `i` gets exactly `counts[i]` events
/// with uniform timestamps inside the window and uniform pixel coordinates.
pub fn generate_synthetic(geometry: SensorGeometry, window_length: u64, counts: &[u64], seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: u64 = counts.iter().sum();
    let mut events = Vec::with_capacity(total as usize);
    let mut offsets = Vec::new();
    for (i, &n) in counts.iter().enumerate() {
        let start = i as u64 * window_length;
        offsets.clear();
        offsets.extend((0..n).map(|_| rng.random_range(0..window_length)));
        offsets.sort_unstable();
        for &off in &offsets {
            let x = rng.random_range(0..geometry.width);
            let y = rng.random_range(0..geometry.height);
            let p = if rng.random::<bool>() { Polarity::Positive } else { Polarity::Negative };
            events.push(Event::new(start + off, x, y, p));
        }
    }
    events
}
