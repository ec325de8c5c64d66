//! Binary packet layout for monitoring events.
//!
//! Header (19 bytes, all integers big-endian):
//! magic `0x53 0x43`, kind u8 (1=login 2=open 3=close), version u8 (=1),
//! flags u8 (bit 0 = text truncated), payload length u16, server_id u32,
//! timestamp u64. Text fields are a u16 length followed by UTF-8 bytes.
//! A packet never exceeds [`MAX_PACKET_LEN`]; oversized hostnames/paths
//! are truncated at a character boundary and flagged.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{AuthMethod, EventBody, EventKind, IpVersion, MonitorEvent};

pub const MAX_PACKET_LEN: usize = 512;

const MAGIC: [u8; 2] = [0x53, 0x43];
const VERSION: u8 = 1;
const FLAG_TRUNCATED: u8 = 0x01;
const HEADER_LEN: usize = 19;
/// Pre-truncation ceiling for text fields (u16 length prefix).
const MAX_TEXT_LEN: usize = u16::MAX as usize;

const LOGIN_FIXED: usize = 4 + 1 + 1;
const OPEN_FIXED: usize = 4 + 4 + 8;
const CLOSE_LEN: usize = 4 + 8 + 8 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodeError {
    /// A text field exceeds 64 KiB before truncation even applies.
    TextTooLong { len: usize },
    /// server_id, user_id, and file_id must be nonzero.
    ZeroId,
}

impl fmt::Display for EncodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncodeError::TextTooLong { len } => write!(f, "text field of {len} bytes is unencodable"),
            EncodeError::ZeroId => write!(f, "event ids must be nonzero"),
        }
    }
}

impl core::error::Error for EncodeError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeError {
    TooShort,
    BadMagic,
    BadVersion,
    BadKind,
    /// Declared payload length disagrees with the datagram size.
    LengthMismatch,
    BadPayload,
    BadEnum,
    BadUtf8,
    ZeroId,
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            DecodeError::TooShort => "datagram shorter than header",
            DecodeError::BadMagic => "bad magic bytes",
            DecodeError::BadVersion => "unsupported version",
            DecodeError::BadKind => "unknown event kind",
            DecodeError::LengthMismatch => "payload length disagrees with datagram size",
            DecodeError::BadPayload => "payload too short for its kind",
            DecodeError::BadEnum => "invalid enum value",
            DecodeError::BadUtf8 => "text field is not UTF-8",
            DecodeError::ZeroId => "zero id",
        };
        f.write_str(msg)
    }
}

impl core::error::Error for DecodeError {}

/// A decoded packet plus whether its text field was truncated at encode
/// time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub event: MonitorEvent,
    pub truncated: bool,
}

fn put_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_be_bytes());
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_be_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_be_bytes());
}

fn truncate_at_char_boundary(s: &str, max: usize) -> &str {
    if s.len() <= max {
        return s;
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}

pub fn encode_packet(event: &MonitorEvent) -> Result<Vec<u8>, EncodeError> {
    if event.server_id == 0 {
        return Err(EncodeError::ZeroId);
    }
    let (kind, fixed, text) = match &event.body {
        EventBody::Login { user_id, hostname, .. } => {
            if *user_id == 0 {
                return Err(EncodeError::ZeroId);
            }
            (EventKind::Login, LOGIN_FIXED, Some(hostname.as_str()))
        }
        EventBody::Open { file_id, user_id, path, .. } => {
            if *file_id == 0 || *user_id == 0 {
                return Err(EncodeError::ZeroId);
            }
            (EventKind::Open, OPEN_FIXED, Some(path.as_str()))
        }
        EventBody::Close { file_id, .. } => {
            if *file_id == 0 {
                return Err(EncodeError::ZeroId);
            }
            (EventKind::Close, CLOSE_LEN, None)
        }
    };

    let mut truncated = false;
    let text = match text {
        Some(t) => {
            if t.len() > MAX_TEXT_LEN {
                return Err(EncodeError::TextTooLong { len: t.len() });
            }
            let budget = MAX_PACKET_LEN - HEADER_LEN - fixed - 2;
            let cut = truncate_at_char_boundary(t, budget);
            truncated = cut.len() != t.len();
            Some(cut)
        }
        None => None,
    };

    let payload_len = fixed + text.map_or(0, |t| 2 + t.len());
    let mut buf = Vec::with_capacity(HEADER_LEN + payload_len);
    buf.extend_from_slice(&MAGIC);
    buf.push(kind as u8);
    buf.push(VERSION);
    buf.push(if truncated { FLAG_TRUNCATED } else { 0 });
    put_u16(&mut buf, payload_len as u16);
    put_u32(&mut buf, event.server_id);
    put_u64(&mut buf, event.timestamp);

    match &event.body {
        EventBody::Login { user_id, auth, ip_version, .. } => {
            put_u32(&mut buf, *user_id);
            buf.push(auth.wire());
            buf.push(u8::from(*ip_version));
            let t = text.expect("login carries hostname");
            put_u16(&mut buf, t.len() as u16);
            buf.extend_from_slice(t.as_bytes());
        }
        EventBody::Open { file_id, user_id, file_size, .. } => {
            put_u32(&mut buf, *file_id);
            put_u32(&mut buf, *user_id);
            put_u64(&mut buf, *file_size);
            let t = text.expect("open carries path");
            put_u16(&mut buf, t.len() as u16);
            buf.extend_from_slice(t.as_bytes());
        }
        EventBody::Close { file_id, bytes_read, bytes_written, read_ops, write_ops } => {
            put_u32(&mut buf, *file_id);
            put_u64(&mut buf, *bytes_read);
            put_u64(&mut buf, *bytes_written);
            put_u32(&mut buf, *read_ops);
            put_u32(&mut buf, *write_ops);
        }
    }
    debug_assert!(buf.len() <= MAX_PACKET_LEN);
    Ok(buf)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.data.len() {
            return Err(DecodeError::BadPayload);
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn text(&mut self) -> Result<String, DecodeError> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        core::str::from_utf8(bytes)
            .map(String::from)
            .map_err(|_| DecodeError::BadUtf8)
    }

    fn done(&self) -> bool {
        self.pos == self.data.len()
    }
}

pub fn decode_packet(datagram: &[u8]) -> Result<Decoded, DecodeError> {
    if datagram.len() < HEADER_LEN {
        return Err(DecodeError::TooShort);
    }
    if datagram[0..2] != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let kind = datagram[2];
    if datagram[3] != VERSION {
        return Err(DecodeError::BadVersion);
    }
    let flags = datagram[4];
    let payload_len = u16::from_be_bytes([datagram[5], datagram[6]]) as usize;
    if datagram.len() != HEADER_LEN + payload_len {
        return Err(DecodeError::LengthMismatch);
    }
    let server_id = u32::from_be_bytes(datagram[7..11].try_into().unwrap());
    if server_id == 0 {
        return Err(DecodeError::ZeroId);
    }
    let timestamp = u64::from_be_bytes(datagram[11..19].try_into().unwrap());

    let mut r = Reader { data: &datagram[HEADER_LEN..], pos: 0 };
    let body = match kind {
        1 => {
            let user_id = nonzero(r.u32()?)?;
            let auth = AuthMethod::from_wire(r.u8()?).ok_or(DecodeError::BadEnum)?;
            let ip_version = IpVersion::try_from(r.u8()?).map_err(|_| DecodeError::BadEnum)?;
            let hostname = r.text()?;
            EventBody::Login { user_id, auth, ip_version, hostname }
        }
        2 => {
            let file_id = nonzero(r.u32()?)?;
            let user_id = nonzero(r.u32()?)?;
            let file_size = r.u64()?;
            let path = r.text()?;
            EventBody::Open { file_id, user_id, file_size, path }
        }
        3 => {
            let file_id = nonzero(r.u32()?)?;
            let bytes_read = r.u64()?;
            let bytes_written = r.u64()?;
            let read_ops = r.u32()?;
            let write_ops = r.u32()?;
            EventBody::Close { file_id, bytes_read, bytes_written, read_ops, write_ops }
        }
        _ => return Err(DecodeError::BadKind),
    };
    if !r.done() {
        return Err(DecodeError::LengthMismatch);
    }
    Ok(Decoded {
        event: MonitorEvent { server_id, timestamp, body },
        truncated: flags & FLAG_TRUNCATED != 0,
    })
}

fn nonzero(v: u32) -> Result<u32, DecodeError> {
    if v == 0 {
        Err(DecodeError::ZeroId)
    } else {
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn login(hostname: &str) -> MonitorEvent {
        MonitorEvent {
            server_id: 42,
            timestamp: 1_700_000_123,
            body: EventBody::Login {
                user_id: 7,
                auth: AuthMethod::Http,
                ip_version: IpVersion::V4,
                hostname: hostname.to_string(),
            },
        }
    }

    #[test]
    fn login_round_trips() {
        let e = login("node1");
        let bytes = encode_packet(&e).unwrap();
        let d = decode_packet(&bytes).unwrap();
        assert_eq!(d.event, e);
        assert!(!d.truncated);
    }

    #[test]
    fn close_round_trips() {
        let e = MonitorEvent {
            server_id: 9,
            timestamp: 5,
            body: EventBody::Close {
                file_id: 9,
                bytes_read: 5_797,
                bytes_written: 0,
                read_ops: 3,
                write_ops: 0,
            },
        };
        let bytes = encode_packet(&e).unwrap();
        assert_eq!(decode_packet(&bytes).unwrap().event, e);
    }

    #[test]
    fn oversized_hostname_is_truncated_and_flagged() {
        let e = login(&"h".repeat(600));
        let bytes = encode_packet(&e).unwrap();
        assert!(bytes.len() <= MAX_PACKET_LEN);
        let d = decode_packet(&bytes).unwrap();
        assert!(d.truncated);
        match d.event.body {
            EventBody::Login { hostname, .. } => {
                assert_eq!(hostname.len(), MAX_PACKET_LEN - HEADER_LEN - LOGIN_FIXED - 2);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        // 3-byte chars: the budget of 485 is not a multiple of 3.
        let e = login(&"\u{20AC}".repeat(300));
        let bytes = encode_packet(&e).unwrap();
        let d = decode_packet(&bytes).unwrap();
        assert!(d.truncated);
    }

    #[test]
    fn giant_text_is_unencodable() {
        let e = login(&"x".repeat(70_000));
        assert_eq!(encode_packet(&e), Err(EncodeError::TextTooLong { len: 70_000 }));
    }

    #[test]
    fn zero_ids_are_rejected_both_ways() {
        let mut e = login("h");
        e.server_id = 0;
        assert_eq!(encode_packet(&e), Err(EncodeError::ZeroId));

        let mut bytes = encode_packet(&login("h")).unwrap();
        bytes[7..11].copy_from_slice(&0u32.to_be_bytes());
        assert_eq!(decode_packet(&bytes), Err(DecodeError::ZeroId));
    }

    #[test]
    fn malformed_datagrams_are_rejected() {
        let good = encode_packet(&login("node1")).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = 0x00;
        assert_eq!(decode_packet(&bad_magic), Err(DecodeError::BadMagic));

        let mut bad_kind = good.clone();
        bad_kind[2] = 9;
        assert_eq!(decode_packet(&bad_kind), Err(DecodeError::BadKind));

        let mut bad_version = good.clone();
        bad_version[3] = 2;
        assert_eq!(decode_packet(&bad_version), Err(DecodeError::BadVersion));

        assert_eq!(decode_packet(&good[..10]), Err(DecodeError::TooShort));
        assert_eq!(decode_packet(&good[..good.len() - 1]), Err(DecodeError::LengthMismatch));
        assert_eq!(decode_packet(&[]), Err(DecodeError::TooShort));
    }
}
