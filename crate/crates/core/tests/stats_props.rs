mod common;

use proptest::prelude::*;

use common::{close, ref_anova, ref_ols, ref_pearson, rows_from};
use scalarexp::stats::{self, anova_nested, fit_linear, fit_matrix, StatsError, TransformRegistry};

fn vec_pair(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    n.prop_flat_map(|n| {
        (
            prop::collection::vec(-100.0..100.0f64, n),
            prop::collection::vec(-100.0..100.0f64, n),
        )
    })
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

proptest! {
    #[test]
    fn pearson_is_affine_invariant(
        (x, y) in vec_pair(5..40),
        a in 0.01..50.0f64,
        b in -100.0..100.0f64,
        c in 0.01..50.0f64,
        d in -100.0..100.0f64,
    ) {
        prop_assume!(spread(&x) > 1e-3 && spread(&y) > 1e-3);
        let base = stats::pearson(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let ys: Vec<f64> = y.iter().map(|v| c * v + d).collect();
        let moved = stats::pearson(&xs, &ys).unwrap();
        prop_assert!((base.rho - moved.rho).abs() < 1e-9);
        prop_assert!((base.p - moved.p).abs() < 1e-7);
    }

    #[test]
    fn pearson_is_bounded_and_symmetric((x, y) in vec_pair(3..40)) {
        prop_assume!(spread(&x) > 1e-3 && spread(&y) > 1e-3);
        let xy = stats::pearson(&x, &y).unwrap();
        let yx = stats::pearson(&y, &x).unwrap();
        prop_assert!((-1.0..=1.0).contains(&xy.rho));
        prop_assert!((0.0..=1.0).contains(&xy.p));
        prop_assert!((xy.rho - yx.rho).abs() < 1e-12);
    }

    #[test]
    fn residuals_are_orthogonal_to_design(seed in any::<u64>(), n in 10usize..50, k in 1usize..4) {
        let inst = common::random_instance(&mut common::rng(seed), n, k);
        let names: Vec<String> = common::predictor_names(k);
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let fit = fit_matrix("y", &names, &inst.columns, &inst.y).unwrap();
        let beta: Vec<f64> = fit.terms.iter().map(|t| t.beta).collect();
        let resid: Vec<f64> = (0..n)
            .map(|r| inst.y[r] - beta[0] - (0..k).map(|j| beta[j + 1] * inst.columns[j][r]).sum::<f64>())
            .collect();
        let rnorm = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((rnorm * rnorm - fit.residual_ss).abs() < 1e-8 * fit.residual_ss.max(1.0));
        let mut design = vec![vec![1.0; n]];
        design.extend(inst.columns.iter().cloned());
        for col in &design {
            let cnorm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = col.iter().zip(&resid).map(|(a, b)| a * b).sum();
            prop_assert!(dot.abs() / (cnorm * rnorm.max(1e-300)) < 1e-8, "dot {dot}");
        }
    }

    #[test]
    fn anova_p_falls_as_full_rss_falls(seed in any::<u64>(), n in 8usize..40, s in 0.05..0.95f64) {
        // y = signal + s * e with e orthogonal to the design: the explained
        // sum of squares stays fixed while the full model's RSS shrinks by s^2.
        let mut rng = common::rng(seed);
        let inst = common::random_instance(&mut rng, n, 2);
        let names = ["x1", "x2"];
        let first = fit_matrix("y", &names, &inst.columns, &inst.y).unwrap();
        let beta: Vec<f64> = first.terms.iter().map(|t| t.beta).collect();
        let fitted: Vec<f64> = (0..n)
            .map(|r| beta[0] + beta[1] * inst.columns[0][r] + beta[2] * inst.columns[1][r])
            .collect();
        let resid: Vec<f64> = inst.y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
        let scaled: Vec<f64> = fitted.iter().zip(&resid).map(|(f, e)| f + s * e).collect();
        let compare = |y: &[f64]| {
            let full = fit_matrix("y", &names, &inst.columns, y).unwrap();
            let null = fit_matrix("y", &[], &[], y).unwrap();
            (full.residual_ss, anova_nested(&full, &null).unwrap())
        };
        let (rss_a, a) = compare(&inst.y);
        let (rss_b, b) = compare(&scaled);
        prop_assert!(rss_b < rss_a);
        prop_assert_eq!(a.df_numerator, b.df_numerator);
        prop_assert_eq!(a.df_denominator, b.df_denominator);
        prop_assert!(b.f_statistic >= a.f_statistic);
        prop_assert!(b.p_value <= a.p_value);
    }

    #[test]
    fn fit_linear_matches_normal_equations(seed in any::<u64>(), n in 10usize..50, k in 1usize..4) {
        let inst = common::random_instance(&mut common::rng(seed), n, k);
        let names = common::predictor_names(k);
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let rows = rows_from(&inst.columns, &inst.y);
        let fit = fit_linear(&rows, "human_si", &names, &TransformRegistry::raw()).unwrap();
        let oracle = ref_ols(&inst.columns, &inst.y);
        for (i, t) in fit.terms.iter().enumerate() {
            prop_assert!(close(t.beta, oracle.beta[i], 1e-8), "beta {} vs {}", t.beta, oracle.beta[i]);
            prop_assert!(close(t.se, oracle.se[i], 1e-8));
            prop_assert!((t.p - oracle.p[i]).abs() < 1e-8);
        }
        let null = fit_linear(&rows, "human_si", &[], &TransformRegistry::raw()).unwrap();
        let a = anova_nested(&fit, &null).unwrap();
        let (f, p) = ref_anova(&oracle, &ref_ols(&[], &inst.y));
        prop_assert!(close(a.f_statistic, f, 1e-8));
        prop_assert!((a.p_value - p).abs() < 1e-8);
    }

    #[test]
    fn pearson_matches_reference((x, y) in vec_pair(5..50)) {
        prop_assume!(spread(&x) > 1e-3 && spread(&y) > 1e-3);
        let got = stats::pearson(&x, &y).unwrap();
        let want = ref_pearson(&x, &y);
        prop_assert!((got.rho - want.rho).abs() < 1e-10);
        prop_assert!((got.p - want.p).abs() < 1e-8);
    }
}

#[test]
fn t_and_f_tails_match_statrs() {
    use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
    for df in [1.0, 2.0, 3.5, 10.0, 37.0, 1361.0] {
        let d = StudentsT::new(0.0, 1.0, df).unwrap();
        for t in [0.0, 0.1, 0.7, 1.96, 3.0, 8.0] {
            let got = stats::special::t_two_sided(t, df);
            assert!((got - 2.0 * d.sf(t)).abs() < 1e-10, "t={t} df={df}");
        }
    }
    for (d1, d2) in [(1.0, 5.0), (2.0, 2.0), (2.0, 36.0), (8.0, 1354.0)] {
        let d = FisherSnedecor::new(d1, d2).unwrap();
        for f in [0.05, 0.5, 1.0, 3.2, 12.0] {
            let got = stats::special::f_upper(f, d1, d2);
            assert!((got - d.sf(f)).abs() < 1e-10, "F={f} ({d1},{d2})");
        }
    }
}

#[test]
fn rank_deficiency_names_the_columns() {
    let a: Vec<f64> = (0..10).map(f64::from).collect();
    let b: Vec<f64> = (0..10).map(|i| f64::from(i * i % 7)).collect();
    let c: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a - 2.0 * b).collect();
    let y: Vec<f64> = (0..10).map(|i| f64::from(i % 4)).collect();
    match fit_matrix("y", &["a", "b", "c"], &[a, b, c], &y) {
        Err(StatsError::RankDeficient { column, with }) => {
            assert_eq!(column, "c");
            assert_eq!(with, vec!["a".to_string(), "b".to_string()]);
        }
        other => panic!("expected rank error, got {other:?}"),
    }
}

#[test]
fn too_few_rows_for_the_model() {
    let x = vec![vec![1.0, 2.0, 3.0]];
    assert!(fit_matrix("y", &["x"], &x, &[1.0, 2.0, 2.5]).is_ok());
    assert!(matches!(
        fit_matrix("y", &["x"], &[vec![1.0, 2.0]], &[1.0, 2.0]),
        Err(StatsError::TooFewObservations { .. })
    ));
}
