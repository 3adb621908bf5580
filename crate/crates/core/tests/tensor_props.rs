mod common;

use common::rng;
use proptest::prelude::*;
use rand::Rng;
use spa_core::{read_tensor, write_tensor, DenseTensor, Map2D, SpaError};

#[test]
fn thousand_random_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(51);
    for i in 0..1000 {
        let ndim = r.random_range(1..=4);
        let dims: Vec<usize> = (0..ndim).map(|_| r.random_range(1..=6)).collect();
        let len: usize = dims.iter().product();
        let data: Vec<f32> = (0..len).map(|_| r.random_range(-1e6f32..1e6)).collect();
        let t = DenseTensor::new(dims, data).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), 6 + 4 * ndim + 4 * len);
        assert_eq!(DenseTensor::from_bytes(&bytes).unwrap(), t);
        if i % 50 == 0 {
            let path = dir.path().join(format!("t{i}.spt"));
            write_tensor(&t, &path).unwrap();
            assert_eq!(read_tensor(&path).unwrap(), t);
        }
    }
}

#[test]
fn truncated_and_foreign_inputs_are_rejected() {
    let t = DenseTensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
    let bytes = t.to_bytes();
    for cut in 0..bytes.len() {
        assert!(DenseTensor::from_bytes(&bytes[..cut]).is_err(), "prefix of {cut} accepted");
    }
    let mut nan = bytes.clone();
    let at = bytes.len() - 4;
    nan[at..].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(DenseTensor::from_bytes(&nan), Err(SpaError::NonFinite { index: 5 })));
    let mut magic = bytes;
    magic[0] = b'X';
    assert!(matches!(DenseTensor::from_bytes(&magic), Err(SpaError::BadMagic { .. })));
}

fn map_strategy() -> impl Strategy<Value = Map2D> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(h, w)| {
        prop::collection::vec(-100.0f32..100.0, h * w).prop_map(move |v| Map2D::new(h, w, v).unwrap())
    })
}

proptest! {
    #[test]
    fn minmax_lands_in_unit_interval_and_keeps_argmax(m in map_strategy()) {
        let n = m.minmax_normalize();
        prop_assert!(n.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let (lo, hi) = m.min_max();
        if hi > lo {
            let arg = m.values().iter().position(|&v| v == hi).unwrap();
            prop_assert_eq!(n.values()[arg], 1.0);
            let arg = m.values().iter().position(|&v| v == lo).unwrap();
            prop_assert_eq!(n.values()[arg], 0.0);
        } else {
            prop_assert!(n.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn resize_stays_within_input_range(m in map_strategy(), oh in 1usize..20, ow in 1usize..20) {
        let (lo, hi) = m.min_max();
        let r = m.resize_bilinear(oh, ow).unwrap();
        prop_assert_eq!((r.height(), r.width()), (oh, ow));
        for &v in r.values() {
            prop_assert!(v >= lo - 1e-3 && v <= hi + 1e-3);
        }
    }

    #[test]
    fn identity_resize_is_exact(m in map_strategy()) {
        let r = m.resize_bilinear(m.height(), m.width()).unwrap();
        for (a, b) in r.values().iter().zip(m.values()) {
            prop_assert!((a - b).abs() <= 1e-4 * b.abs().max(1.0));
        }
    }
}
