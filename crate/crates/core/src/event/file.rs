//! `.evst` container and the `t,x,y,p` text interchange format.
//!
//! `.evst` layout (little-endian): `"EVST" | version:u16 | width:u16 |
//! height:u16 | event_count:u64`, then `event_count` packed 16-byte records.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use super::codec::{decode_event, encode_event, EVENT_BYTES};
use super::{check_sorted, Event, Polarity, SensorGeometry};
use crate::error::{Error, Result};

pub const EVST_MAGIC: [u8; 4] = *b"EVST";
pub const EVST_VERSION: u16 = 1;
const HEADER_BYTES: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventStreamHeader {
    pub version: u16,
    pub geometry: SensorGeometry,
    pub event_count: u64,
}

impl EventStreamHeader {
    fn to_bytes(self) -> [u8; HEADER_BYTES] {
        let mut b = [0u8; HEADER_BYTES];
        b[0..4].copy_from_slice(&EVST_MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..8].copy_from_slice(&self.geometry.width.to_le_bytes());
        b[8..10].copy_from_slice(&self.geometry.height.to_le_bytes());
        b[10..18].copy_from_slice(&self.event_count.to_le_bytes());
        b
    }

    fn from_bytes(b: &[u8; HEADER_BYTES]) -> Result<Self> {
        if b[0..4] != EVST_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != EVST_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let geometry = SensorGeometry::new(u16::from_le_bytes([b[6], b[7]]), u16::from_le_bytes([b[8], b[9]]))
            .map_err(|e| Error::Format(e.to_string()))?;
        let event_count = u64::from_le_bytes(b[10..18].try_into().unwrap());
        Ok(Self { version, geometry, event_count })
    }
}

pub fn write_evst<W: Write>(w: W, geometry: SensorGeometry, events: &[Event]) -> Result<()> {
    let mut w = BufWriter::new(w);
    let header = EventStreamHeader { version: EVST_VERSION, geometry, event_count: events.len() as u64 };
    w.write_all(&header.to_bytes())?;
    for e in events {
        w.write_all(&encode_event(e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_evst<R: Read>(r: R) -> Result<(EventStreamHeader, Vec<Event>)> {
    let mut r = BufReader::new(r);
    let mut hb = [0u8; HEADER_BYTES];
    r.read_exact(&mut hb).map_err(|_| Error::Format("truncated header".into()))?;
    let header = EventStreamHeader::from_bytes(&hb)?;
    let mut events = Vec::with_capacity(header.event_count.min(1 << 24) as usize);
    let mut rec = [0u8; EVENT_BYTES];
    for i in 0..header.event_count {
        r.read_exact(&mut rec).map_err(|_| Error::Format(format!("truncated at record {i}")))?;
        let e = decode_event(&rec)?;
        header.geometry.check(&e)?;
        events.push(e);
    }
    if r.read(&mut rec)? != 0 {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    check_sorted(&events)?;
    Ok((header, events))
}

/// Reads ASCII `t,x,y,p` lines. Blank lines and `#` comments are skipped.
pub fn read_text<R: Read>(r: R) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Format(format!("line {}: expected t,x,y,p", n + 1));
        let mut it = line.split(',').map(str::trim);
        let mut field = || it.next().ok_or_else(bad);
        let t = field()?.parse::<u64>().map_err(|_| bad())?;
        let x = field()?.parse::<u16>().map_err(|_| bad())?;
        let y = field()?.parse::<u16>().map_err(|_| bad())?;
        let p = Polarity::try_from(field()?.parse::<u8>().map_err(|_| bad())?)?;
        if it.next().is_some() {
            return Err(bad());
        }
        events.push(Event { t, x, y, p });
    }
    check_sorted(&events)?;
    Ok(events)
}

pub fn write_text<W: Write>(w: W, events: &[Event]) -> Result<()> {
    let mut w = BufWriter::new(w);
    for e in events {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.p.as_u8())?;
    }
    w.flush()?;
    Ok(())
}
