//! The stateful join: login + open + close → one transfer record.
//!
//! Joins happen on close (by `(server_id, file_id)` to the open, then by
//! `(server_id, user_id)` to the login). Closes that arrive before their
//! open (UDP reordering) wait in a grace buffer; if the open never shows
//! up within the grace period the record is emitted incomplete. Each
//! file_id is retired after its record is emitted, so a transfer is
//! emitted at most once.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use super::{AuthMethod, EventBody, IpVersion, MonitorEvent, TransferRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectorConfig {
    /// How long an orphan close waits for its open.
    pub grace_ms: u64,
    /// How long login sessions are remembered.
    pub login_ttl_ms: u64,
    /// How long unclosed opens are remembered.
    pub open_ttl_ms: u64,
}

impl Default for CollectorConfig {
    fn default() -> Self {
        CollectorConfig {
            grace_ms: 5_000,
            login_ttl_ms: 3_600_000,
            open_ttl_ms: 86_400_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CollectorCounters {
    pub logins_received: u64,
    pub opens_received: u64,
    pub closes_received: u64,
    pub duplicate_opens: u64,
    pub duplicate_closes: u64,
    /// Closes emitted with `complete = false` because no open matched.
    pub orphan_closes: u64,
    /// Opens that aged out without ever seeing a close.
    pub orphan_opens: u64,
    pub records_emitted: u64,
    pub complete_records: u64,
}

#[derive(Debug, Clone)]
struct LoginState {
    auth: AuthMethod,
    ip_version: IpVersion,
    hostname: String,
    last_seen_ms: u64,
}

#[derive(Debug, Clone)]
struct OpenState {
    user_id: u32,
    file_size: u64,
    path: String,
    open_timestamp: u64,
    arrived_ms: u64,
}

#[derive(Debug, Clone)]
struct PendingClose {
    server_id: u32,
    file_id: u32,
    bytes_read: u64,
    bytes_written: u64,
    read_ops: u32,
    write_ops: u32,
    close_timestamp: u64,
    arrived_ms: u64,
}

#[derive(Debug, Clone)]
pub struct Collector {
    cfg: CollectorConfig,
    logins: BTreeMap<(u32, u32), LoginState>,
    opens: BTreeMap<(u32, u32), OpenState>,
    pending: VecDeque<PendingClose>,
    retired: BTreeMap<(u32, u32), u64>,
    counters: CollectorCounters,
}

impl Collector {
    pub fn new(cfg: CollectorConfig) -> Self {
        Collector {
            cfg,
            logins: BTreeMap::new(),
            opens: BTreeMap::new(),
            pending: VecDeque::new(),
            retired: BTreeMap::new(),
            counters: CollectorCounters::default(),
        }
    }

    pub fn counters(&self) -> CollectorCounters {
        self.counters
    }

    /// `(logins, opens, pending closes, retired ids)` — each bounded by its
    /// TTL sweep.
    pub fn state_size(&self) -> (usize, usize, usize, usize) {
        (self.logins.len(), self.opens.len(), self.pending.len(), self.retired.len())
    }

    /// Feeds one event at arrival time `now_ms`; returns any records it
    /// completed.
    pub fn ingest(&mut self, now_ms: u64, event: MonitorEvent) -> Vec<TransferRecord> {
        let server_id = event.server_id;
        match event.body {
            EventBody::Login { user_id, auth, ip_version, hostname } => {
                self.counters.logins_received += 1;
                self.logins.insert(
                    (server_id, user_id),
                    LoginState { auth, ip_version, hostname, last_seen_ms: now_ms },
                );
                Vec::new()
            }
            EventBody::Open { file_id, user_id, file_size, path } => {
                self.counters.opens_received += 1;
                let key = (server_id, file_id);
                if self.opens.contains_key(&key) || self.retired.contains_key(&key) {
                    self.counters.duplicate_opens += 1;
                    return Vec::new();
                }
                let open = OpenState {
                    user_id,
                    file_size,
                    path,
                    open_timestamp: event.timestamp,
                    arrived_ms: now_ms,
                };
                // A reordered close may already be waiting, still within
                // its grace window.
                if let Some(idx) = self
                    .pending
                    .iter()
                    .position(|c| (c.server_id, c.file_id) == key && c.arrived_ms + self.cfg.grace_ms >= now_ms)
                {
                    let close = self.pending.remove(idx).expect("index just found");
                    let record = self.join(now_ms, &close, Some(&open));
                    return alloc::vec![record];
                }
                self.opens.insert(key, open);
                Vec::new()
            }
            EventBody::Close { file_id, bytes_read, bytes_written, read_ops, write_ops } => {
                self.counters.closes_received += 1;
                let key = (server_id, file_id);
                if self.retired.contains_key(&key) {
                    self.counters.duplicate_closes += 1;
                    return Vec::new();
                }
                let close = PendingClose {
                    server_id,
                    file_id,
                    bytes_read,
                    bytes_written,
                    read_ops,
                    write_ops,
                    close_timestamp: event.timestamp,
                    arrived_ms: now_ms,
                };
                if let Some(open) = self.opens.remove(&key) {
                    let record = self.join(now_ms, &close, Some(&open));
                    return alloc::vec![record];
                }
                self.pending.push_back(close);
                Vec::new()
            }
        }
    }

    /// Expires grace-period and TTL state; returns records for closes whose
    /// open never arrived.
    pub fn sweep(&mut self, now_ms: u64) -> Vec<TransferRecord> {
        let mut emitted = Vec::new();
        while let Some(front) = self.pending.front() {
            if front.arrived_ms + self.cfg.grace_ms >= now_ms {
                break;
            }
            let close = self.pending.pop_front().expect("front just observed");
            let key = (close.server_id, close.file_id);
            if self.retired.contains_key(&key) {
                self.counters.duplicate_closes += 1;
                continue;
            }
            self.counters.orphan_closes += 1;
            emitted.push(self.join(now_ms, &close, None));
        }

        let login_ttl = self.cfg.login_ttl_ms;
        self.logins.retain(|_, l| l.last_seen_ms + login_ttl >= now_ms);

        let open_ttl = self.cfg.open_ttl_ms;
        let before = self.opens.len();
        self.opens.retain(|_, o| o.arrived_ms + open_ttl >= now_ms);
        self.counters.orphan_opens += (before - self.opens.len()) as u64;

        // Retired ids only need to outlive the duplicate window.
        let retire_ttl = self.cfg.grace_ms * 2;
        self.retired.retain(|_, t| *t + retire_ttl >= now_ms);

        emitted
    }

    fn join(&mut self, now_ms: u64, close: &PendingClose, open: Option<&OpenState>) -> TransferRecord {
        let login = open.and_then(|o| self.logins.get(&(close.server_id, o.user_id)));
        let complete = open.is_some() && login.is_some();
        self.retired.insert((close.server_id, close.file_id), now_ms);
        self.counters.records_emitted += 1;
        if complete {
            self.counters.complete_records += 1;
        }
        TransferRecord {
            server_id: close.server_id,
            path: open.map(|o| o.path.clone()),
            file_size: open.map(|o| o.file_size),
            hostname: login.map(|l| l.hostname.clone()),
            auth_method: login.map(|l| l.auth),
            ip_version: login.map(|l| l.ip_version),
            bytes_read: close.bytes_read,
            bytes_written: close.bytes_written,
            read_ops: close.read_ops,
            write_ops: close.write_ops,
            open_time: open.map(|o| o.open_timestamp),
            close_time: close.close_timestamp,
            complete,
        }
    }
}
