//! Telemetry for the federation: servers emit one binary UDP packet per
//! user login, file open, and file close; a collector joins the three
//! into per-transfer records.

mod codec;
mod collector;

pub use codec::{decode_packet, encode_packet, DecodeError, Decoded, EncodeError, MAX_PACKET_LEN};
pub use collector::{Collector, CollectorConfig, CollectorCounters};

use alloc::string::String;
use core::fmt;

/// How the client authenticated in a login event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuthMethod {
    None,
    Http,
    Federation,
}

impl AuthMethod {
    pub(crate) fn wire(self) -> u8 {
        match self {
            AuthMethod::None => 0,
            AuthMethod::Http => 1,
            AuthMethod::Federation => 2,
        }
    }

    pub(crate) fn from_wire(v: u8) -> Option<Self> {
        match v {
            0 => Some(AuthMethod::None),
            1 => Some(AuthMethod::Http),
            2 => Some(AuthMethod::Federation),
            _ => None,
        }
    }
}

/// Address family recorded at login; serialized as the literal 4 or 6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum IpVersion {
    V4,
    V6,
}

impl From<IpVersion> for u8 {
    fn from(v: IpVersion) -> u8 {
        match v {
            IpVersion::V4 => 4,
            IpVersion::V6 => 6,
        }
    }
}

impl TryFrom<u8> for IpVersion {
    type Error = BadIpVersion;
    fn try_from(v: u8) -> Result<Self, BadIpVersion> {
        match v {
            4 => Ok(IpVersion::V4),
            6 => Ok(IpVersion::V6),
            other => Err(BadIpVersion(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BadIpVersion(pub u8);

impl fmt::Display for BadIpVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ip version must be 4 or 6, got {}", self.0)
    }
}

impl core::error::Error for BadIpVersion {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Login = 1,
    Open = 2,
    Close = 3,
}

/// One decoded telemetry packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorEvent {
    pub server_id: u32,
    pub timestamp: u64,
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventBody {
    Login {
        user_id: u32,
        auth: AuthMethod,
        ip_version: IpVersion,
        hostname: String,
    },
    Open {
        file_id: u32,
        user_id: u32,
        file_size: u64,
        path: String,
    },
    Close {
        file_id: u32,
        bytes_read: u64,
        bytes_written: u64,
        read_ops: u32,
        write_ops: u32,
    },
}

impl MonitorEvent {
    pub fn kind(&self) -> EventKind {
        match self.body {
            EventBody::Login { .. } => EventKind::Login,
            EventBody::Open { .. } => EventKind::Open,
            EventBody::Close { .. } => EventKind::Close,
        }
    }
}

/// The joined per-transfer record emitted on file close (or on grace-period
/// expiry for closes whose open never arrived). Fields that the missing
/// events would have supplied are `null` in the JSON form.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransferRecord {
    pub server_id: u32,
    pub path: Option<String>,
    pub file_size: Option<u64>,
    #[serde(rename = "host")]
    pub hostname: Option<String>,
    #[serde(rename = "auth")]
    pub auth_method: Option<AuthMethod>,
    #[serde(rename = "ipv")]
    pub ip_version: Option<IpVersion>,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub read_ops: u32,
    pub write_ops: u32,
    #[serde(rename = "open_ts")]
    pub open_time: Option<u64>,
    #[serde(rename = "close_ts")]
    pub close_time: u64,
    /// True iff the close was joined to both its open and its login.
    pub complete: bool,
}
