//! Length-prefixed binary framing for the relay protocol.
//!
//! Every frame is `tag:u8 | body_len:u32 | body`, all little-endian. Bodies:
//!
//! | tag | kind          | body                                                          |
//! |-----|---------------|---------------------------------------------------------------|
//! | 1   | ANNOUNCE      | session:u64 tracks:u16 events_per_track:u32 width:u16 height:u16 window_us:u64 strategy:u8 |
//! | 2   | SUBSCRIBE     | session:u64 track:u16                                         |
//! | 3   | SUBSCRIBE_OK  | session:u64 track:u16 start_window:u64                        |
//! | 4   | UNSUBSCRIBE   | session:u64 track:u16                                         |
//! | 5   | SEGMENT       | track:u16 window:u64 send_time:u64 event_count:u32 records    |

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::event::{codec, SensorGeometry, EVENT_BYTES};
use crate::partition::{PartitionConfig, Strategy, TrackId, TrackSegment};

pub const FRAME_HEADER_BYTES: usize = 5;
pub const SEGMENT_HEADER_BYTES: usize = 22;
const ANNOUNCE_BYTES: usize = 27;
const TRACK_MSG_BYTES: usize = 10;
const SUBSCRIBE_OK_BYTES: usize = 18;
/// Upper bound on a frame body; larger lengths are treated as corruption.
pub const MAX_BODY_BYTES: usize = 256 << 20;

const TAG_ANNOUNCE: u8 = 1;
const TAG_SUBSCRIBE: u8 = 2;
const TAG_SUBSCRIBE_OK: u8 = 3;
const TAG_UNSUBSCRIBE: u8 = 4;
const TAG_SEGMENT: u8 = 5;

/// Session description sent by the publisher.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Announce {
    pub session_id: u64,
    pub tracks: u16,
    pub events_per_track: u32,
    pub geometry: SensorGeometry,
    pub window_length: u64,
    pub strategy: Strategy,
}

impl Announce {
    pub fn partition(&self) -> Result<PartitionConfig> {
        PartitionConfig::new(self.strategy, self.tracks, self.events_per_track)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Announce(Announce),
    Subscribe {
        session_id: u64,
        track_id: TrackId,
    },
    /// `start_window` is the first window the relay will forward on this
    /// track to this subscriber.
    SubscribeOk {
        session_id: u64,
        track_id: TrackId,
        start_window: u64,
    },
    Unsubscribe {
        session_id: u64,
        track_id: TrackId,
    },
    Segment(TrackSegment),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Announce(_) => "ANNOUNCE",
            Message::Subscribe { .. } => "SUBSCRIBE",
            Message::SubscribeOk { .. } => "SUBSCRIBE_OK",
            Message::Unsubscribe { .. } => "UNSUBSCRIBE",
            Message::Segment(_) => "SEGMENT",
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Message::Announce(_) => TAG_ANNOUNCE,
            Message::Subscribe { .. } => TAG_SUBSCRIBE,
            Message::SubscribeOk { .. } => TAG_SUBSCRIBE_OK,
            Message::Unsubscribe { .. } => TAG_UNSUBSCRIBE,
            Message::Segment(_) => TAG_SEGMENT,
        }
    }

    pub fn body_len(&self) -> usize {
        match self {
            Message::Announce(_) => ANNOUNCE_BYTES,
            Message::Subscribe { .. } | Message::Unsubscribe { .. } => TRACK_MSG_BYTES,
            Message::SubscribeOk { .. } => SUBSCRIBE_OK_BYTES,
            Message::Segment(s) => SEGMENT_HEADER_BYTES + s.events.len() * EVENT_BYTES,
        }
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_BYTES + self.body_len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.tag());
        out.extend_from_slice(&(self.body_len() as u32).to_le_bytes());
        match self {
            Message::Announce(a) => {
                out.extend_from_slice(&a.session_id.to_le_bytes());
                out.extend_from_slice(&a.tracks.to_le_bytes());
                out.extend_from_slice(&a.events_per_track.to_le_bytes());
                out.extend_from_slice(&a.geometry.width.to_le_bytes());
                out.extend_from_slice(&a.geometry.height.to_le_bytes());
                out.extend_from_slice(&a.window_length.to_le_bytes());
                out.push(a.strategy.as_u8());
            }
            Message::Subscribe { session_id, track_id } | Message::Unsubscribe { session_id, track_id } => {
                out.extend_from_slice(&session_id.to_le_bytes());
                out.extend_from_slice(&track_id.to_le_bytes());
            }
            Message::SubscribeOk { session_id, track_id, start_window } => {
                out.extend_from_slice(&session_id.to_le_bytes());
                out.extend_from_slice(&track_id.to_le_bytes());
                out.extend_from_slice(&start_window.to_le_bytes());
            }
            Message::Segment(s) => {
                out.extend_from_slice(&s.track_id.to_le_bytes());
                out.extend_from_slice(&s.window_index.to_le_bytes());
                out.extend_from_slice(&s.send_time.to_le_bytes());
                out.extend_from_slice(&(s.events.len() as u32).to_le_bytes());
                codec::encode_into(&s.events, out);
            }
        }
    }

    /// Decodes one frame from the front of `buf`, returning it with the
    /// number of bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Message, usize)> {
        if buf.len() < FRAME_HEADER_BYTES {
            return Err(Error::Framing(format!("truncated frame header ({} bytes)", buf.len())));
        }
        let tag = buf[0];
        let len = u32::from_le_bytes(buf[1..5].try_into().unwrap()) as usize;
        let body = buf.get(FRAME_HEADER_BYTES..FRAME_HEADER_BYTES + len).ok_or_else(|| {
            Error::Framing(format!("truncated frame: body {len} bytes, have {}", buf.len() - FRAME_HEADER_BYTES))
        })?;
        Ok((decode_body(tag, body)?, FRAME_HEADER_BYTES + len))
    }

    /// Bits this message occupies on the link.
    pub fn wire_bits(&self) -> u64 {
        8 * self.encoded_len() as u64
    }
}

/// Frame size of a segment carrying `events` records.
pub fn segment_frame_bytes(events: usize) -> usize {
    FRAME_HEADER_BYTES + SEGMENT_HEADER_BYTES + events * EVENT_BYTES
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        head.try_into().unwrap()
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
}

fn expect_len(kind: &str, body: &[u8], want: usize) -> Result<()> {
    if body.len() != want {
        return Err(Error::Framing(format!("{kind} body is {} bytes, expected {want}", body.len())));
    }
    Ok(())
}

fn decode_body(tag: u8, body: &[u8]) -> Result<Message> {
    let mut c = Cursor { buf: body };
    match tag {
        TAG_ANNOUNCE => {
            expect_len("ANNOUNCE", body, ANNOUNCE_BYTES)?;
            let session_id = c.u64();
            let tracks = c.u16();
            let events_per_track = c.u32();
            let width = c.u16();
            let height = c.u16();
            let window_length = c.u64();
            let strategy = Strategy::from_u8(c.u8())?;
            let geometry = SensorGeometry::new(width, height).map_err(|e| Error::Framing(e.to_string()))?;
            if tracks == 0 || events_per_track == 0 || window_length == 0 {
                return Err(Error::Framing("ANNOUNCE with zero tracks, capacity or window".into()));
            }
            Ok(Message::Announce(Announce { session_id, tracks, events_per_track, geometry, window_length, strategy }))
        }
        TAG_SUBSCRIBE | TAG_UNSUBSCRIBE => {
            expect_len("track message", body, TRACK_MSG_BYTES)?;
            let session_id = c.u64();
            let track_id = c.u16();
            Ok(if tag == TAG_SUBSCRIBE {
                Message::Subscribe { session_id, track_id }
            } else {
                Message::Unsubscribe { session_id, track_id }
            })
        }
        TAG_SUBSCRIBE_OK => {
            expect_len("SUBSCRIBE_OK", body, SUBSCRIBE_OK_BYTES)?;
            Ok(Message::SubscribeOk { session_id: c.u64(), track_id: c.u16(), start_window: c.u64() })
        }
        TAG_SEGMENT => {
            if body.len() < SEGMENT_HEADER_BYTES {
                return Err(Error::Framing("SEGMENT body shorter than header".into()));
            }
            let track_id = c.u16();
            let window_index = c.u64();
            let send_time = c.u64();
            let count = c.u32() as usize;
            if c.buf.len() != count * EVENT_BYTES {
                return Err(Error::Framing(format!(
                    "SEGMENT declares {count} events but carries {} payload bytes",
                    c.buf.len()
                )));
            }
            let events = codec::decode_all(c.buf)?;
            Ok(Message::Segment(TrackSegment { track_id, window_index, send_time, events }))
        }
        other => Err(Error::Framing(format!("unknown message tag {other}"))),
    }
}

/// Writes one frame.
pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<()> {
    w.write_all(&msg.encode())?;
    Ok(())
}

/// Reads one frame from a byte stream. Returns `Ok(None)` on a clean end of
/// stream between frames; a stream ending mid-frame is a framing error.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Message>> {
    let mut header = [0u8; FRAME_HEADER_BYTES];
    let mut filled = 0;
    while filled < header.len() {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(Error::Framing("stream ended inside frame header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(header[1..5].try_into().unwrap()) as usize;
    if len > MAX_BODY_BYTES {
        return Err(Error::Framing(format!("frame body of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Framing("stream ended inside frame body".into()),
        _ => e.into(),
    })?;
    decode_body(header[0], &body).map(Some)
}
