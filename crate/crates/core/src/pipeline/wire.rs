//! Byte encoding of bus messages and length-prefixed framing over a stream.
//!
//! Frame: `u32` LE body length, then the body:
//! `u8` version, `u8` topic, `u64` tick, `u64` seq, `u16` publisher length,
//! publisher (UTF-8), payload. Frame payloads are binary (`u16` count, then per frame
//! `u16` camera, `u64` index, `u64` timestamp, `u32` width, `u32` height, RGB bytes);
//! every other topic carries JSON.

use std::io::{self, Read, Write};
use std::sync::Arc;

use thiserror::Error;

use super::bus::{BusMessage, Payload, Topic};
use crate::geom::Frame;

pub const WIRE_VERSION: u8 = 1;
/// Upper bound on a single frame, guarding against corrupt length prefixes.
pub const MAX_FRAME_BYTES: usize = 256 << 20;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported wire version {0}")]
    Version(u8),
    #[error("unknown topic code {0}")]
    Topic(u8),
    #[error("truncated message")]
    Truncated,
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("payload: {0}")]
    Payload(String),
}

fn topic_code(t: Topic) -> u8 {
    Topic::ALL
        .iter()
        .position(|&x| x == t)
        .expect("known topic") as u8
}

pub fn encode(msg: &BusMessage) -> Vec<u8> {
    let mut out = Vec::new();
    out.push(WIRE_VERSION);
    out.push(topic_code(msg.topic));
    out.extend_from_slice(&msg.tick.to_le_bytes());
    out.extend_from_slice(&msg.seq.to_le_bytes());
    let name = msg.publisher.as_bytes();
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name);
    match &msg.payload {
        Payload::Frames(frames) => {
            out.extend_from_slice(&(frames.len() as u16).to_le_bytes());
            for f in frames.iter() {
                out.extend_from_slice(&f.camera_id.to_le_bytes());
                out.extend_from_slice(&f.frame_index.to_le_bytes());
                out.extend_from_slice(&f.timestamp_ms.to_le_bytes());
                out.extend_from_slice(&(f.width() as u32).to_le_bytes());
                out.extend_from_slice(&(f.height() as u32).to_le_bytes());
                out.extend_from_slice(f.pixels());
            }
        }
        Payload::ExposureMaps(m) => out.extend(json(m.as_ref())),
        Payload::Detections(d) => out.extend(json(d)),
        Payload::Tracks(t) => out.extend(json(t.as_ref())),
        Payload::Positions(p) => out.extend(json(p)),
        Payload::Health(h) => out.extend(json(h)),
    }
    out
}

fn json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("payload serializes")
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated);
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(body: &[u8]) -> Result<BusMessage, WireError> {
    let mut c = Cursor { buf: body };
    let version = c.u8()?;
    if version != WIRE_VERSION {
        return Err(WireError::Version(version));
    }
    let code = c.u8()?;
    let topic = *Topic::ALL
        .get(code as usize)
        .ok_or(WireError::Topic(code))?;
    let tick = c.u64()?;
    let seq = c.u64()?;
    let n = c.u16()? as usize;
    let publisher =
        String::from_utf8(c.take(n)?.to_vec()).map_err(|e| WireError::Payload(e.to_string()))?;
    let bad = |e: serde_json::Error| WireError::Payload(e.to_string());
    let rest = c.buf;
    let payload = match topic {
        Topic::Frames => {
            let count = c.u16()? as usize;
            let mut frames = Vec::with_capacity(count);
            for _ in 0..count {
                let cam = c.u16()?;
                let idx = c.u64()?;
                let ts = c.u64()?;
                let w = c.u32()? as usize;
                let h = c.u32()? as usize;
                let px = c.take(w * h * 3)?.to_vec();
                frames.push(
                    Frame::new(cam, idx, ts, w, h, px)
                        .map_err(|e| WireError::Payload(e.to_string()))?,
                );
            }
            Payload::Frames(Arc::new(frames))
        }
        Topic::ExposureMaps => {
            Payload::ExposureMaps(Arc::new(serde_json::from_slice(rest).map_err(bad)?))
        }
        Topic::Detections => Payload::Detections(serde_json::from_slice(rest).map_err(bad)?),
        Topic::Tracks => Payload::Tracks(Arc::new(serde_json::from_slice(rest).map_err(bad)?)),
        Topic::Positions => Payload::Positions(serde_json::from_slice(rest).map_err(bad)?),
        Topic::Health => Payload::Health(serde_json::from_slice(rest).map_err(bad)?),
    };
    Ok(BusMessage {
        topic,
        tick,
        publisher,
        seq,
        payload,
    })
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> Result<(), WireError> {
    if body.len() > MAX_FRAME_BYTES {
        return Err(WireError::TooLarge(body.len()));
    }
    w.write_all(&(body.len() as u32).to_le_bytes())?;
    w.write_all(body)?;
    w.flush()?;
    Ok(())
}

/// `Ok(None)` on a clean end of stream before a length prefix.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, WireError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let n = u32::from_le_bytes(len) as usize;
    if n > MAX_FRAME_BYTES {
        return Err(WireError::TooLarge(n));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn send<W: Write>(w: &mut W, msg: &BusMessage) -> Result<(), WireError> {
    write_frame(w, &encode(msg))
}

pub fn recv<R: Read>(r: &mut R) -> Result<Option<BusMessage>, WireError> {
    read_frame(r)?.map(|b| decode(&b)).transpose()
}
