use cmtf_core::io::{
    format_matrix, format_tensor, format_vector, parse_matrix, parse_tensor, parse_vector,
};
use cmtf_core::{DenseMatrix, DenseTensor3};
use proptest::num::f64::{NEGATIVE, NORMAL, POSITIVE, SUBNORMAL, ZERO};
use proptest::prelude::*;

fn any_finite() -> impl Strategy<Value = f64> {
    POSITIVE | NEGATIVE | NORMAL | SUBNORMAL | ZERO
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #[test]
    fn tensor_text_is_lossless(
        (dims, v) in (1..5usize, 1..5usize, 1..4usize)
            .prop_flat_map(|(i, j, k)| (Just([i, j, k]), prop::collection::vec(any_finite(), i * j * k)))
    ) {
        let t = DenseTensor3::new(dims, v).unwrap();
        let back = parse_tensor(&format_tensor(&t)).unwrap();
        prop_assert_eq!(back.dims(), t.dims());
        prop_assert_eq!(bits(back.as_slice()), bits(t.as_slice()));
    }

    #[test]
    fn matrix_text_is_lossless(
        (r, c, v) in (1..6usize, 1..6usize)
            .prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(any_finite(), r * c)))
    ) {
        let m = DenseMatrix::from_col_major(r, c, v).unwrap();
        let back = parse_matrix(&format_matrix(&m)).unwrap();
        prop_assert_eq!(bits(back.as_slice()), bits(m.as_slice()));
        let w = parse_vector(&format_vector(m.as_slice())).unwrap();
        prop_assert_eq!(bits(&w), bits(m.as_slice()));
    }
}

#[test]
fn value_count_mismatch_is_rejected() {
    assert!(parse_matrix("matrix 2 2\n1 2 3\n").is_err());
    assert!(parse_matrix("matrix 2 2\n1 2 3 4 5\n").is_err());
    assert!(parse_tensor("tensor3 2 2\n1 2 3 4\n").is_err());
    assert!(parse_tensor("tensor3 1 1 1\ninf\n").is_err());
}
