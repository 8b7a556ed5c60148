use entroprune_core::tensor_io::{encode_npy, parse_npy, read_npy, write_npy};
use entroprune_core::{DenseMatrix, Error};
use proptest::prelude::*;

fn finite_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE / 8.0),
        Just(f64::MAX),
    ]
}

fn matrix() -> impl Strategy<Value = DenseMatrix> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        prop::collection::vec(finite_f64(), r * c)
            .prop_map(move |data| DenseMatrix::from_vec(r, c, data).unwrap())
    })
}

fn bits(m: &DenseMatrix) -> Vec<u64> {
    m.as_slice().iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn encode_parse_is_bit_exact(m in matrix()) {
        let bytes = encode_npy(&m);
        prop_assert_eq!(bytes.len() % 8, 0);
        let prefix = bytes.len() - 8 * m.rows() * m.cols();
        prop_assert_eq!(prefix % 64, 0);
        prop_assert_eq!(bytes[prefix - 1], b'\n');
        let back = parse_npy(&bytes).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        prop_assert_eq!(bits(&back), bits(&m));
        prop_assert_eq!(encode_npy(&back), bytes);
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.npy");
    let m = DenseMatrix::from_rows(&[vec![1.0, -2.5e-300], vec![3.0, f64::MAX]]).unwrap();
    write_npy(&m, &path).unwrap();
    assert_eq!(bits(&read_npy(&path).unwrap()), bits(&m));
}

#[test]
fn float32_widening_is_exact() {
    let values = [1.0f32, -0.1, f32::MIN_POSITIVE, 3.4e38];
    let header = "{'descr': '<f4', 'fortran_order': False, 'shape': (4,), }";
    let mut bytes = b"\x93NUMPY\x01\x00".to_vec();
    let pad = 64 - (10 + header.len() + 1) % 64;
    let full = format!("{header}{}\n", " ".repeat(pad));
    bytes.extend_from_slice(&(full.len() as u16).to_le_bytes());
    bytes.extend_from_slice(full.as_bytes());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let m = parse_npy(&bytes).unwrap();
    assert_eq!(m.shape(), (1, 4));
    for (got, want) in m.as_slice().iter().zip(values) {
        assert_eq!(*got, want as f64);
    }
}

#[test]
fn missing_file_is_io_error() {
    let err = read_npy("/nonexistent/path/x.npy").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}
