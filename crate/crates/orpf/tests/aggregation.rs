use orpf::objectives::{eval_f_alpha, performance, tune_weights};
use proptest::prelude::*;

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1e-3, 0.0f64..10.0, 1.0f64..1e4], 5)
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 1e-3f64..1e3], 5)
        .prop_filter("one positive weight", |a| a.iter().any(|&w| w > 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn single_weight_returns_the_objective_exactly(f in values(), o in 0usize..5, a in 1e-6f64..1e6) {
        let mut alpha = vec![0.0; 5];
        alpha[o] = a;
        prop_assert_eq!(eval_f_alpha(&alpha, &f).unwrap().to_bits(), f[o].abs().to_bits());
    }

    #[test]
    fn weighted_performance_lies_between_the_objectives(f in values(), alpha in weights()) {
        let active: Vec<f64> = f.iter().zip(&alpha).filter(|(_, a)| **a > 0.0).map(|(v, _)| *v).collect();
        let lo = active.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = active.iter().cloned().fold(0.0, f64::max);
        let v = eval_f_alpha(&alpha, &f).unwrap();
        prop_assert!(v >= lo * (1.0 - 1e-15) && v <= hi * (1.0 + 1e-15), "{lo} <= {v} <= {hi}");
    }

    #[test]
    fn weights_act_only_through_their_ratios(f in values(), alpha in weights(), c in 1e-3f64..1e3) {
        let scaled: Vec<f64> = alpha.iter().map(|a| a * c).collect();
        let (a, b) = (eval_f_alpha(&alpha, &f).unwrap(), eval_f_alpha(&scaled, &f).unwrap());
        prop_assert!((a - b).abs() <= 1e-14 * a.max(1e-300));
    }

    #[test]
    fn aggregate_of_performances_equals_performance_of_aggregates(
        per_case in prop::collection::vec(values(), 1..60),
        alpha in weights(),
    ) {
        // performance per objective, then weighted
        let per_obj: Vec<f64> = (0..5)
            .map(|o| performance(&per_case.iter().map(|f| f[o]).collect::<Vec<_>>()).unwrap())
            .collect();
        let from_objectives = eval_f_alpha(&alpha, &per_obj).unwrap();
        // weighted per case, then performance
        let per_case_alpha: Vec<f64> = per_case.iter().map(|f| eval_f_alpha(&alpha, f).unwrap()).collect();
        let from_cases = performance(&per_case_alpha).unwrap();
        prop_assert!(
            (from_objectives - from_cases).abs() <= 1e-12 * from_objectives.max(from_cases).max(f64::MIN_POSITIVE),
            "{from_objectives} vs {from_cases}"
        );
    }
}

#[test]
fn tuning_divides_by_the_means() {
    let alpha = tune_weights(&[10.0, 5.0, 0.0], &[0.5, 2.0, 0.0]).unwrap();
    assert_eq!(alpha, vec![20.0, 2.5, 0.0]);
    assert!(tune_weights(&[1.0], &[0.0]).is_err());
    assert!(tune_weights(&[-1.0], &[1.0]).is_err());
}

#[test]
fn invalid_weights_are_rejected() {
    assert!(eval_f_alpha(&[0.0, 0.0], &[1.0, 2.0]).is_err());
    assert!(eval_f_alpha(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    assert!(eval_f_alpha(&[1.0], &[1.0, 2.0]).is_err());
    assert!(eval_f_alpha(&[1.0, 1.0], &[1.0, f64::INFINITY]).is_err());
}
