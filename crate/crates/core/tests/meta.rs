mod common;

use common::oracles;
use metapool::meta::{restricted_log_likelihood, search_bound};
use metapool::prelude::*;
use proptest::prelude::*;

fn pooled(y: &[f64], v: &[f64], method: IntervalMethod, weighting: Weighting) -> PoolResult {
    let tau = reml_tau2(y, v).unwrap();
    pool(
        y,
        v,
        tau,
        &PoolConfig {
            method,
            weighting,
            ..PoolConfig::default()
        },
        false,
    )
    .unwrap()
}

#[test]
fn two_point_closed_form_and_grid() {
    let (y, v) = ([0.0, 1.0], [0.1, 0.1]);
    let est = reml_tau2(&y, &v).unwrap();
    assert!((est.tau2 - 0.4).abs() < 1e-10);
    assert!((est.tau2 - oracles::reml_equal_variance(&y, 0.1)).abs() < 1e-10);
    let at = restricted_log_likelihood(&y, &v, est.tau2);
    for i in 0..=200_000 {
        let t = i as f64 * 1e-5;
        assert!(restricted_log_likelihood(&y, &v, t) <= at + 1e-12, "{t}");
    }
}

#[test]
fn identical_inputs_wald() {
    let s: f64 = 0.2;
    let r = pooled(&[1.5; 4], &[s * s; 4], IntervalMethod::Wald, Weighting::Equal);
    assert_eq!(r.tau2, 0.0);
    assert_eq!(r.theta_hat, 1.5);
    let half = 1.6448536269514722 * s / 2.0;
    assert!((r.ci_high - 1.5 - half).abs() < 1e-12);
    assert!((1.5 - r.ci_low - half).abs() < 1e-12);
}

#[test]
fn knha_hand_example() {
    let r = pooled(&[1.0, 2.0, 3.0], &[1.0; 3], IntervalMethod::Knha, Weighting::Equal);
    assert_eq!(r.tau2, 0.0);
    assert_eq!(r.theta_hat, 2.0);
    assert!((r.knha_scale.unwrap() - 1.0).abs() < 1e-12);
    let t = oracles::t_quantile(0.95, 2.0);
    let half = t * (1.0f64 / 3.0).sqrt();
    assert!((r.ci_low - (2.0 - half)).abs() < 1e-8 && (r.ci_high - (2.0 + half)).abs() < 1e-8);
    assert!((r.ci_low - 0.314).abs() < 5e-4 && (r.ci_high - 3.686).abs() < 5e-4);
}

#[test]
fn two_models_give_wide_knha() {
    let wald = pooled(&[0.7, 0.9], &[1e-4, 1e-4], IntervalMethod::Wald, Weighting::Equal);
    let knha = pooled(&[0.7, 0.9], &[1e-4, 1e-4], IntervalMethod::Knha, Weighting::Equal);
    assert!(knha.ci_high - knha.ci_low > 2.0 * (wald.ci_high - wald.ci_low));
}

fn inputs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=12).prop_flat_map(|k| {
        (
            prop::collection::vec(-2.0f64..2.0, k),
            prop::collection::vec(1e-4f64..1.0, k),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn reml_beats_grid((y, v) in inputs()) {
        let est = reml_tau2(&y, &v).unwrap();
        prop_assert!(est.tau2 >= 0.0);
        let at = restricted_log_likelihood(&y, &v, est.tau2);
        let b = search_bound(&y, &v);
        for i in 0..1000 {
            let t = b * i as f64 / 999.0;
            prop_assert!(restricted_log_likelihood(&y, &v, t) <= at + 1e-9);
        }
    }

    #[test]
    fn equal_variance_closed_form(y in prop::collection::vec(-2.0f64..2.0, 2..12), v in 1e-4f64..1.0) {
        let vs = vec![v; y.len()];
        let est = reml_tau2(&y, &vs).unwrap();
        prop_assert!((est.tau2 - oracles::reml_equal_variance(&y, v)).abs() <= 1e-8);
    }

    #[test]
    fn interval_shape((y, v) in inputs()) {
        for method in [IntervalMethod::Wald, IntervalMethod::Knha] {
            let r = pooled(&y, &v, method, Weighting::Equal);
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            prop_assert!((r.theta_hat - mean).abs() <= 4.0 * f64::EPSILON * (1.0 + mean.abs()));
            prop_assert!(r.cr_low <= r.ci_low && r.ci_low <= r.theta_hat);
            prop_assert!(r.theta_hat <= r.ci_high && r.ci_high <= r.cr_high);
            let asym = (r.theta_hat - r.ci_low) - (r.ci_high - r.theta_hat);
            prop_assert!(asym.abs() < 1e-12 * (1.0 + mean.abs()));
        }
    }

    #[test]
    fn clamping_only_raises_lower_bounds_to_zero((y, v) in inputs()) {
        let y: Vec<f64> = y.iter().map(|x| x.abs() * 0.01).collect();
        let tau = reml_tau2(&y, &v).unwrap();
        let cfg = PoolConfig::default();
        let free = pool(&y, &v, tau, &cfg, false).unwrap();
        let clamped = pool(&y, &v, tau, &cfg, true).unwrap();
        prop_assert_eq!(clamped.ci_high, free.ci_high);
        prop_assert_eq!(clamped.cr_high, free.cr_high);
        prop_assert_eq!(clamped.ci_low, free.ci_low.max(0.0));
        prop_assert_eq!(clamped.cr_low, free.cr_low.max(0.0));
        prop_assert_eq!(clamped.clamped_low, free.ci_low < 0.0 || free.cr_low < 0.0);
    }
}
