mod common;

use common::*;
use wied_core::io::{read_field, write_field};
use wied_core::*;

#[test]
fn dump_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let grid = square(4, 0.5, 3);
    let u = ScalarField::from_fn(grid, |p, t| (p[0] * 3.1).sin() * (1.0 + t) + p[1] / 7.0).unwrap();
    write_field(dir.path(), "u", &u, 1.0, 0.1).unwrap();
    for name in ["u", "u.json", "u.f64"] {
        let (back, meta) = read_field(&dir.path().join(name)).unwrap();
        assert_eq!(meta.gamma, 1.0);
        assert_eq!(meta.epsilon, 0.1);
        assert_eq!(meta.ordering, "t-slowest");
        assert!(back
            .values()
            .iter()
            .zip(u.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    let text = std::fs::read_to_string(dir.path().join("u.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["dim", "extents", "nx", "T", "nt", "gamma", "epsilon", "ordering"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn truncated_dump_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let u = ScalarField::zeros(line(4, 1.0, 2));
    write_field(dir.path(), "u", &u, 1.0, 0.1).unwrap();
    let raw = dir.path().join("u.f64");
    let bytes = std::fs::read(&raw).unwrap();
    std::fs::write(&raw, &bytes[..bytes.len() - 3]).unwrap();
    match read_field(&raw) {
        Err(Error::Format(msg)) => {
            assert!(msg.contains("expected 120 bytes"), "{msg}");
            assert!(msg.contains("found 117"), "{msg}");
        }
        other => panic!("{other:?}"),
    }
}
