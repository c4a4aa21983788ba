mod common;

use common::*;
use proptest::prelude::*;
use rgmca::metrics::{delta_a_with, DeltaNorm};

proptest! {
    #[test]
    fn soft_threshold_semigroup_and_contraction(pair in matrix_pair(50.0), a in 0.0f64..20.0, b in 0.0f64..20.0) {
        soft_threshold_properties(&pair, a, b)?;
    }

    #[test]
    fn pseudo_inverse_meets_moore_penrose(f in factored()) {
        moore_penrose_properties(&f)?;
    }

    #[test]
    fn mad_is_affine_equivariant(
        v in prop::collection::vec(-1e3f64..1e3, 1..200),
        scale in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
        shift in -1e3f64..1e3,
    ) {
        mad_properties(&v, scale, shift)?;
    }

    #[test]
    fn singular_value_threshold_is_monotone(m in matrix(1..=8, 1..=12, 10.0), a in 0.0f64..30.0, b in 0.0f64..30.0) {
        svt_properties(&m, a, b)?;
    }

    #[test]
    fn delta_a_ignores_permutation_and_sign((a, perm, flips) in mixing_with_ambiguity()) {
        delta_invariance(&a, &perm, &flips)?;
    }
}

proptest! {
    #[test]
    fn delta_norms_differ_by_at_most_n(
        (a, _, _) in mixing_with_ambiguity(),
        noise in prop::collection::vec(-0.3f64..0.3, 16 * 8),
    ) {
        let n = a.cols();
        let est = rgmca::Matrix::from_fn(a.rows(), n, |i, j| a[(i, j)] + noise[i * 8 + j]);
        let entry = delta_a_with(&est, &a, DeltaNorm::Entrywise).unwrap();
        let induced = delta_a_with(&est, &a, DeltaNorm::Induced).unwrap();
        if entry.is_finite() {
            prop_assert!(induced <= entry * (1.0 + 1e-12));
            prop_assert!(entry <= n as f64 * induced * (1.0 + 1e-12));
        }
    }
}
