use nalgebra::DMatrix;
use proptest::prelude::*;
use stls_bench::io::{format_csv, format_matrix_market, parse_csv, parse_matrix_market};

fn matrices() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..7, 1usize..7).prop_flat_map(|(m, n)| {
        prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, m * n)
            .prop_map(move |v| DMatrix::from_vec(m, n, v))
    })
}

proptest! {
    #[test]
    fn csv_is_lossless(a in matrices()) {
        prop_assert_eq!(parse_csv(&format_csv(&a)).unwrap(), a);
    }

    #[test]
    fn matrix_market_is_lossless(a in matrices()) {
        prop_assert_eq!(parse_matrix_market(&format_matrix_market(&a)).unwrap(), a);
    }
}
