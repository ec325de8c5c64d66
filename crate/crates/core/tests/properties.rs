//! Property tests for the pure core: canonicalization, chunk coverage,
//! distance metric laws, codec totality, and routing against a
//! brute-force oracle.

use proptest::prelude::*;
use stashfed_core::chunk::{chunk_checksum, chunk_count, chunk_layout, CHUNK_SIZE};
use stashfed_core::geo::{haversine_km, GeoCoordinate};
use stashfed_core::monitor::{
    decode_packet, encode_packet, AuthMethod, EventBody, IpVersion, MonitorEvent,
};
use stashfed_core::path::{normalize_path, FederationPath};
use stashfed_core::routing::PrefixMap;

fn raw_path_strategy() -> impl Strategy<Value = String> {
    // Fragments deliberately include '.', '..', and empty segments.
    let fragment = prop_oneof![
        3 => "[a-z]{1,4}",
        1 => Just(String::from(".")),
        1 => Just(String::from("..")),
        1 => Just(String::new()),
    ];
    proptest::collection::vec(fragment, 0..8).prop_map(|parts| format!("/{}", parts.join("/")))
}

proptest! {
    #[test]
    fn normalize_is_idempotent_on_its_outputs(raw in raw_path_strategy()) {
        if let Ok(canonical) = normalize_path(&raw) {
            let again = normalize_path(canonical.as_str()).unwrap();
            prop_assert_eq!(again, canonical);
        }
    }

    #[test]
    fn chunks_cover_file_exactly(size in 0u64..200 * CHUNK_SIZE) {
        let layout = chunk_layout(size);
        prop_assert_eq!(layout.len() as u32, chunk_count(size));
        prop_assert_eq!(layout.iter().map(|c| c.length).sum::<u64>(), size);
        let mut cursor = 0;
        for (i, c) in layout.iter().enumerate() {
            prop_assert_eq!(c.index as usize, i);
            prop_assert_eq!(c.offset, cursor);
            prop_assert!(c.length >= 1 && c.length <= CHUNK_SIZE);
            cursor += c.length;
        }
        if let Some(&[ref init @ .., _]) = Some(layout.as_slice()) {
            prop_assert!(init.iter().all(|c| c.length == CHUNK_SIZE));
        }
    }

    #[test]
    fn haversine_symmetry_and_triangle(
        (lat_a, lon_a) in (-90f64..=90.0, -180f64..=180.0),
        (lat_b, lon_b) in (-90f64..=90.0, -180f64..=180.0),
        (lat_c, lon_c) in (-90f64..=90.0, -180f64..=180.0),
    ) {
        let a = GeoCoordinate::new(lat_a, lon_a).unwrap();
        let b = GeoCoordinate::new(lat_b, lon_b).unwrap();
        let c = GeoCoordinate::new(lat_c, lon_c).unwrap();
        let ab = haversine_km(a, b);
        let ba = haversine_km(b, a);
        prop_assert!((ab - ba).abs() < 1e-6);
        prop_assert!(ab >= 0.0);
        let ac = haversine_km(a, c);
        let cb = haversine_km(c, b);
        prop_assert!(ab <= ac + cb + 1e-6);
    }

    #[test]
    fn checksum_is_deterministic(data in proptest::collection::vec(any::<u8>(), 0..4096)) {
        let copy = data.clone();
        prop_assert_eq!(chunk_checksum(&data).unwrap(), chunk_checksum(&copy).unwrap());
    }

    #[test]
    fn codec_round_trips(event in event_strategy()) {
        let bytes = encode_packet(&event).unwrap();
        let decoded = decode_packet(&bytes).unwrap();
        prop_assert_eq!(decoded.event, event);
        prop_assert!(!decoded.truncated);
    }

    #[test]
    fn decoder_never_panics(data in proptest::collection::vec(any::<u8>(), 0..600)) {
        let _ = decode_packet(&data);
    }

    #[test]
    fn longest_prefix_matches_brute_force(
        prefixes in proptest::collection::btree_set("[a-c]{1,2}(/[a-c]{1,2}){0,3}", 1..10),
        query in "[a-c]{1,2}(/[a-c]{1,2}){0,4}",
    ) {
        let mut map = PrefixMap::new();
        for (i, p) in prefixes.iter().enumerate() {
            map.insert(FederationPath::parse(&format!("/{p}")).unwrap(), i);
        }
        let path = FederationPath::parse(&format!("/{query}")).unwrap();

        // Brute force: scan every registration, keep prefixes of the path,
        // take the longest.
        let mut oracle: Vec<(FederationPath, usize)> = prefixes
            .iter()
            .enumerate()
            .map(|(i, p)| (FederationPath::parse(&format!("/{p}")).unwrap(), i))
            .filter(|(p, _)| p.is_prefix_of(&path))
            .collect();
        oracle.sort_by(|(a, _), (b, _)| b.as_str().len().cmp(&a.as_str().len()));

        let got = map.matches(&path);
        prop_assert_eq!(got.len(), oracle.len());
        for ((gp, gv), (op, ov)) in got.iter().zip(oracle.iter()) {
            prop_assert_eq!(*gp, op);
            prop_assert_eq!(**gv, *ov);
        }
        if let Some((longest, _)) = map.longest_match(&path) {
            prop_assert!(longest.is_prefix_of(&path));
            for (p, _) in map.iter() {
                if p.is_prefix_of(&path) {
                    prop_assert!(p.as_str().len() <= longest.as_str().len());
                }
            }
        } else {
            prop_assert!(oracle.is_empty());
        }
    }
}

fn event_strategy() -> impl Strategy<Value = MonitorEvent> {
    let login = (1u32..u32::MAX, any::<u64>(), 1u32..u32::MAX, 0u8..3, prop::bool::ANY, "[ -~]{0,80}")
        .prop_map(|(sid, ts, uid, auth, v6, host)| MonitorEvent {
            server_id: sid,
            timestamp: ts,
            body: EventBody::Login {
                user_id: uid,
                auth: match auth {
                    0 => AuthMethod::None,
                    1 => AuthMethod::Http,
                    _ => AuthMethod::Federation,
                },
                ip_version: if v6 { IpVersion::V6 } else { IpVersion::V4 },
                hostname: host,
            },
        });
    let open = (1u32..u32::MAX, any::<u64>(), 1u32..u32::MAX, 1u32..u32::MAX, any::<u64>(), "(/[a-z]{1,6}){1,6}")
        .prop_map(|(sid, ts, fid, uid, size, path)| MonitorEvent {
            server_id: sid,
            timestamp: ts,
            body: EventBody::Open { file_id: fid, user_id: uid, file_size: size, path },
        });
    let close = (1u32..u32::MAX, any::<u64>(), 1u32..u32::MAX, any::<u64>(), any::<u64>(), any::<u32>(), any::<u32>())
        .prop_map(|(sid, ts, fid, br, bw, ro, wo)| MonitorEvent {
            server_id: sid,
            timestamp: ts,
            body: EventBody::Close {
                file_id: fid,
                bytes_read: br,
                bytes_written: bw,
                read_ops: ro,
                write_ops: wo,
            },
        });
    prop_oneof![login, open, close]
}

/// Digest stability: these vectors are pinned for good — a change is a
/// format break.
#[test]
fn pinned_digest_vectors_never_change() {
    assert_eq!(
        chunk_checksum(b"").unwrap().to_hex(),
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    );
    assert_eq!(
        chunk_checksum(&[0u8]).unwrap().to_hex(),
        "6e340b9cffb37a989ca544e6bb780a2c78901d3fb33738768511a30617afa01d"
    );
    let full = vec![0u8; CHUNK_SIZE as usize];
    assert_eq!(
        chunk_checksum(&full).unwrap().to_hex(),
        "95aeaae03b56c171cf88753c821630a3c24f1fcf406cec3e17d56781aa3f8369"
    );
}
