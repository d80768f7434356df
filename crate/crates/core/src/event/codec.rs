use super::{Event, Polarity};
use crate::error::Result;

pub const EVENT_BYTES: usize = 16;
pub const EVENT_BITS: u64 = 8 * EVENT_BYTES as u64;

/// Raw 16-byte record, little-endian: `t:u64 | x:u16 | y:u16 | p:u8 | 3 zero bytes`.
pub fn encode_event(e: &Event) -> [u8; EVENT_BYTES] {
    let mut rec = [0u8; EVENT_BYTES];
    rec[0..8].copy_from_slice(&e.t.to_le_bytes());
    rec[8..10].copy_from_slice(&e.x.to_le_bytes());
    rec[10..12].copy_from_slice(&e.y.to_le_bytes());
    rec[12] = e.p.as_u8();
    rec
}

/// Inverse of [`encode_event`]. Reserved bytes are ignored.
pub fn decode_event(rec: &[u8; EVENT_BYTES]) -> Result<Event> {
    let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
    let x = u16::from_le_bytes([rec[8], rec[9]]);
    let y = u16::from_le_bytes([rec[10], rec[11]]);
    let p = Polarity::try_from(rec[12])?;
    Ok(Event { t, x, y, p })
}

pub(crate) fn encode_into(events: &[Event], out: &mut Vec<u8>) {
    out.reserve(events.len() * EVENT_BYTES);
    for e in events {
        out.extend_from_slice(&encode_event(e));
    }
}

pub(crate) fn decode_all(bytes: &[u8]) -> Result<Vec<Event>> {
    bytes.chunks_exact(EVENT_BYTES).map(|c| decode_event(c.try_into().unwrap())).collect()
}
