//! Publish/subscribe wire protocol, relay state, link shaping and the TCP
//! relay server.

pub mod net;
mod relay;
mod shaper;
mod wire;

pub use relay::{Delivery, RelayState, SubscribeOutcome, SubscriberId, DEFAULT_QUEUE_CAP};
pub use shaper::TokenBucket;
pub use wire::{
    read_message, segment_frame_bytes, write_message, Announce, Message, FRAME_HEADER_BYTES, MAX_BODY_BYTES,
    SEGMENT_HEADER_BYTES,
};

/// Default shaper burst, as time at the configured rate.
pub const DEFAULT_BURST_US: u64 = 100_000;
