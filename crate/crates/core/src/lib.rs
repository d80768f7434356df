//! Scalable multi-track streaming of event-camera data.
//!
//! A publisher splits each 50 ms window of events across `N` tracks, a relay
//! fans the tracks out to subscribers over bandwidth-limited links, and each
//! receiver picks how many tracks to hold from the latency it measures.

pub mod adaptation;
pub mod clock;
pub mod error;
pub mod event;
pub mod harness;
pub mod partition;
pub mod receiver;
pub mod reduction;
pub mod sink;
pub mod transport;

pub use error::{Category, Error, Result};
