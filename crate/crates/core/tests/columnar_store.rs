//! Columnar round trips, corruption detection and store versioning.

use std::collections::BTreeMap;

use dvats::columnar::{read_columnar, write_columnar, Column, ColumnarError, Table};
use dvats::store::{ArtifactKind, ArtifactStore, StoreError};
use dvats::synthetic::solar_like;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn special_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => any::<f64>(),
        1 => Just(f64::NAN),
        1 => Just(f64::INFINITY),
        1 => Just(f64::NEG_INFINITY),
        1 => Just(-0.0),
        1 => any::<u64>().prop_map(f64::from_bits),
    ]
}

fn table() -> impl Strategy<Value = Table> {
    (0usize..200, 1usize..5).prop_flat_map(|(rows, cols)| {
        proptest::collection::vec(
            (
                "[a-z_]{1,12}",
                prop_oneof![
                    proptest::collection::vec(special_f64(), rows).prop_map(|v| (Some(v), None)),
                    proptest::collection::vec(any::<i64>(), rows).prop_map(|v| (None, Some(v))),
                ],
            ),
            cols,
        )
        .prop_map(|cols| {
            Table::new(
                cols.into_iter()
                    .map(|(name, data)| match data {
                        (Some(f), _) => Column::f64(name, f),
                        (_, Some(i)) => Column::i64(name, i),
                        _ => unreachable!(),
                    })
                    .collect(),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn round_trip_is_bit_exact(t in table()) {
        let bytes = write_columnar(&t).unwrap();
        let back = read_columnar(&bytes).unwrap();
        prop_assert!(back.bit_eq(&t));
        prop_assert_eq!(write_columnar(&back).unwrap(), bytes);
    }

    #[test]
    fn any_single_byte_flip_is_detected(t in table(), pos in any::<prop::sample::Index>(), mask in 1u8..=255) {
        let mut bytes = write_columnar(&t).unwrap();
        let i = pos.index(bytes.len());
        bytes[i] ^= mask;
        prop_assert!(read_columnar(&bytes).is_err());
    }
}

#[test]
fn hundred_random_corruptions_of_a_large_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = Table::new(vec![
        Column::i64("t", (0..1_000).collect()),
        Column::f64("a", (0..1_000).map(|_| rng.random::<f64>()).collect()),
        Column::f64("b", (0..1_000).map(|i| if i % 7 == 0 { f64::NAN } else { i as f64 }).collect()),
        Column::f64("c", (0..1_000).map(|i| if i % 2 == 0 { f64::INFINITY } else { f64::NEG_INFINITY }).collect()),
    ]);
    let clean = write_columnar(&t).unwrap();
    for _ in 0..100 {
        let mut bytes = clean.clone();
        let i = rng.random_range(0..bytes.len());
        bytes[i] ^= rng.random_range(1..=255u8);
        assert!(read_columnar(&bytes).is_err(), "flip at {i} undetected");
    }
    assert!(read_columnar(&clean[..clean.len() - 1]).is_err());
    let mut longer = clean.clone();
    longer.push(0);
    assert!(read_columnar(&longer).is_err());
    assert!(matches!(read_columnar(b"NOPE"), Err(ColumnarError::BadMagic | ColumnarError::TruncatedFile)));
}

#[test]
fn store_detects_tampered_payload_and_versions_monotonically() {
    let dir = tempfile::tempdir().unwrap();
    let store = ArtifactStore::open(dir.path()).unwrap();
    let meta = BTreeMap::new();
    let a = store.put_series("s", &solar_like(1_000, 0), &meta).unwrap();
    assert_eq!(store.put_series("s", &solar_like(1_000, 0), &meta).unwrap().version, 1);
    let b = store.put_series("s", &solar_like(1_000, 1), &meta).unwrap();
    assert_eq!((a.version, b.version), (1, 2));
    assert_ne!(a.id, b.id);

    let path = dir.path().join(&b.payload_path);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[100] ^= 0x10;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(
        store.get_series("s", Some(2)),
        Err(StoreError::DigestMismatch { version: 2, .. })
    ));
    assert!(store.get_series("s", Some(1)).is_ok());

    let reopened = ArtifactStore::open(dir.path()).unwrap();
    assert_eq!(reopened.artifact_meta(ArtifactKind::Dataset, "s", None).unwrap().version, 2);
    assert!(matches!(
        reopened.artifact_meta(ArtifactKind::Dataset, "s", Some(3)),
        Err(StoreError::NotFound { .. })
    ));
}
