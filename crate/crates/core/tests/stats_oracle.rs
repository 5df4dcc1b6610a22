//! Two-sided Student t tail probabilities against values frozen from a
//! 40-digit evaluation (quadrature of the density, cross-checked against an
//! independent incomplete-beta routine).

use cmtf_core::stats::{
    significance_for_factor, student_t_two_sided_p, two_sample_ttest, GroupLabels, TTestKind,
};
use cmtf_core::DenseMatrix;
use proptest::prelude::*;

/// Rows of `t df p` with `p = P(|T_df| >= t)`.
const GRID: &str = include_str!("data/t_tail_grid.txt");

fn grid() -> Vec<(f64, f64, f64)> {
    GRID.lines()
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|x| x.parse().unwrap()).collect();
            (v[0], v[1], v[2])
        })
        .collect()
}

#[test]
fn tail_probability_matches_reference_grid() {
    let rows = grid();
    assert_eq!(rows.len(), 99);
    for (t, df, p) in rows {
        let got = student_t_two_sided_p(t, df);
        assert!((got - p).abs() <= 1e-10, "t={t} df={df}: {got} vs {p}");
        assert_eq!(student_t_two_sided_p(-t, df), got);
    }
}

#[test]
fn worked_example_matches_reference() {
    let labels = GroupLabels::from_counts(4, 4).unwrap();
    let r = two_sample_ttest(
        &[1.0, 2.0, 3.0, 4.0, 3.0, 4.0, 5.0, 6.0],
        &labels,
        TTestKind::Pooled,
    )
    .unwrap();
    assert!((r.t - -2.190890230020664).abs() < 1e-14);
    assert_eq!(r.df, 6.0);
    assert!((r.p - 0.07098765432098765).abs() < 1e-10, "{}", r.p);
}

#[test]
fn bonferroni_caps_at_one() {
    let f = DenseMatrix::from_col_major(
        6,
        3,
        vec![
            0.1, 0.4, 0.2, 1.5, 1.9, 1.2, 0.5, 0.1, 0.3, 0.2, 0.6, 0.4, 1.0, 0.0, 2.0, 1.0, 0.0,
            2.0,
        ],
    )
    .unwrap();
    let s = significance_for_factor(
        &f,
        &GroupLabels::from_counts(3, 3).unwrap(),
        TTestKind::Pooled,
    )
    .unwrap();
    for c in &s.components {
        assert_eq!(c.p_bonferroni, (3.0 * c.p).min(1.0));
        assert!((0.0..=1.0).contains(&c.p));
    }
    assert_eq!(s.components[2].p_bonferroni, 1.0);
}

fn sample_and_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (4..30usize).prop_flat_map(|n| {
        (
            prop::collection::vec(-50.0..50.0f64, n),
            prop::collection::vec(0..2u8, n).prop_filter("two per group", |l| {
                let n1 = l.iter().filter(|&&v| v == 1).count();
                n1 >= 2 && l.len() - n1 >= 2
            }),
        )
    })
}

proptest! {
    #[test]
    fn t_is_invariant_to_shift_and_positive_scale(
        (v, l) in sample_and_labels(), shift in -100.0..100.0f64, scale in 0.01..100.0f64
    ) {
        let labels = GroupLabels::new(&l).unwrap();
        let base = two_sample_ttest(&v, &labels, TTestKind::Pooled).unwrap();
        let moved: Vec<f64> = v.iter().map(|x| scale * x + shift).collect();
        let other = two_sample_ttest(&moved, &labels, TTestKind::Pooled).unwrap();
        prop_assert!((base.t - other.t).abs() <= 1e-8 * (1.0 + base.t.abs()));
        prop_assert!((base.p - other.p).abs() <= 1e-8);
    }

    #[test]
    fn swapping_groups_negates_t((v, l) in sample_and_labels()) {
        let labels = GroupLabels::new(&l).unwrap();
        for kind in [TTestKind::Pooled, TTestKind::Welch] {
            let a = two_sample_ttest(&v, &labels, kind).unwrap();
            let b = two_sample_ttest(&v, &labels.swapped(), kind).unwrap();
            prop_assert_eq!(a.t, -b.t);
            prop_assert_eq!(a.p, b.p);
        }
    }

    #[test]
    fn p_decreases_with_abs_t(t1 in 0.0..20.0f64, dt in 0.001..5.0f64, df in 1.0..200.0f64) {
        prop_assert!(student_t_two_sided_p(t1 + dt, df) <= student_t_two_sided_p(t1, df));
    }
}
