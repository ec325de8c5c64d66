//! Best-effort UDP telemetry: origins and caches emit one packet per user
//! login, file open, and file close.

use std::collections::HashMap;
use std::net::{SocketAddr, UdpSocket};
use std::sync::Mutex;

use stashfed_core::monitor::{encode_packet, AuthMethod, EventBody, IpVersion, MonitorEvent};

use crate::clock::epoch_seconds;

/// Sessions older than this get a fresh login packet.
const RELOGIN_SECS: u64 = 900;

struct EmitState {
    users: HashMap<String, UserSession>,
    next_user: u32,
    next_file: u32,
}

struct UserSession {
    user_id: u32,
    last_login: u64,
}

pub struct TelemetryEmitter {
    socket: UdpSocket,
    target: String,
    server_id: u32,
    state: Mutex<EmitState>,
}

/// FNV-1a, folded to a nonzero 32-bit server id.
pub fn server_id_for(name: &str) -> u32 {
    let mut hash: u32 = 0x811c9dc5;
    for b in name.as_bytes() {
        hash ^= u32::from(*b);
        hash = hash.wrapping_mul(0x0100_0193);
    }
    hash.max(1)
}

impl TelemetryEmitter {
    pub fn new(server_name: &str, target: &str) -> std::io::Result<Self> {
        let socket = UdpSocket::bind("0.0.0.0:0")?;
        Ok(TelemetryEmitter {
            socket,
            target: target.to_string(),
            server_id: server_id_for(server_name),
            state: Mutex::new(EmitState { users: HashMap::new(), next_user: 1, next_file: 1 }),
        })
    }

    pub fn server_id(&self) -> u32 {
        self.server_id
    }

    fn send(&self, body: EventBody) {
        let event = MonitorEvent {
            server_id: self.server_id,
            timestamp: epoch_seconds(),
            body,
        };
        if let Ok(packet) = encode_packet(&event) {
            // Telemetry is fire-and-forget; a lost datagram is not an error.
            let _ = self.socket.send_to(&packet, &self.target);
        }
    }

    /// Emits a login (when the peer starts or refreshes a session) and a
    /// file open; returns the file id for the matching close.
    pub fn file_open(
        &self,
        remote: Option<&SocketAddr>,
        federation_agent: bool,
        path: &str,
        file_size: u64,
    ) -> u32 {
        let host = remote.map_or_else(|| "unknown".to_string(), |a| a.ip().to_string());
        let ip_version = match remote {
            Some(SocketAddr::V6(_)) => IpVersion::V6,
            _ => IpVersion::V4,
        };
        let now = epoch_seconds();
        let (user_id, needs_login, file_id) = {
            let mut guard = self.state.lock().expect("emitter state poisoned");
            let st = &mut *guard;
            let mut fresh = false;
            let user_id = match st.users.get_mut(&host) {
                Some(session) => {
                    if now.saturating_sub(session.last_login) > RELOGIN_SECS {
                        session.last_login = now;
                        fresh = true;
                    }
                    session.user_id
                }
                None => {
                    let id = st.next_user;
                    st.next_user += 1;
                    st.users.insert(host.clone(), UserSession { user_id: id, last_login: now });
                    fresh = true;
                    id
                }
            };
            let file_id = st.next_file;
            st.next_file += 1;
            (user_id, fresh, file_id)
        };
        if needs_login {
            self.send(EventBody::Login {
                user_id,
                auth: if federation_agent { AuthMethod::Federation } else { AuthMethod::Http },
                ip_version,
                hostname: host,
            });
        }
        self.send(EventBody::Open {
            file_id,
            user_id,
            file_size,
            path: path.to_string(),
        });
        file_id
    }

    pub fn file_close(&self, file_id: u32, bytes_read: u64, read_ops: u32) {
        self.send(EventBody::Close {
            file_id,
            bytes_read,
            bytes_written: 0,
            read_ops,
            write_ops: 0,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn server_ids_are_nonzero_and_stable() {
        assert_eq!(server_id_for("cache-1"), server_id_for("cache-1"));
        assert_ne!(server_id_for("cache-1"), server_id_for("cache-2"));
        assert!(server_id_for("") >= 1);
    }

    #[test]
    fn login_emitted_once_per_session() {
        let sink = UdpSocket::bind("127.0.0.1:0").unwrap();
        sink.set_nonblocking(true).unwrap();
        let emitter =
            TelemetryEmitter::new("t", &sink.local_addr().unwrap().to_string()).unwrap();
        let remote: SocketAddr = "10.0.0.1:5000".parse().unwrap();

        let f1 = emitter.file_open(Some(&remote), true, "/exp1/a", 10);
        emitter.file_close(f1, 10, 1);
        let f2 = emitter.file_open(Some(&remote), true, "/exp1/b", 20);
        emitter.file_close(f2, 20, 1);
        assert_ne!(f1, f2);

        std::thread::sleep(std::time::Duration::from_millis(100));
        let mut kinds = Vec::new();
        let mut buf = [0u8; 1024];
        while let Ok((n, _)) = sink.recv_from(&mut buf) {
            let decoded = stashfed_core::monitor::decode_packet(&buf[..n]).unwrap();
            kinds.push(decoded.event.kind());
        }
        use stashfed_core::monitor::EventKind::*;
        assert_eq!(kinds, vec![Login, Open, Close, Open, Close]);
    }
}
