mod common;

use common::grad::{model_report, primitive_reports, TOL};
use hcar::model::Aggregator;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn primitives_match_central_differences(seed in any::<u64>(), r in 1usize..5, c in 1usize..5, k in 1usize..4) {
        for (name, report) in primitive_reports(seed, r, c, k) {
            prop_assert!(report.checked > 0, "{}: nothing checked", name);
            prop_assert!(report.max_rel_error < TOL, "{}: {:?}", name, report);
        }
    }
}

fn check_full_model(aggregator: Aggregator) {
    for i in 0..10 {
        let report = model_report(aggregator, i);
        assert!(report.max_rel_error < TOL, "{aggregator:?} instance {i}: {report:?}");
    }
}

#[test]
fn cnn_model_gradients_match_central_differences() {
    check_full_model(Aggregator::Cnn);
}

#[test]
fn lstm_model_gradients_match_central_differences() {
    check_full_model(Aggregator::RnnLstm);
}
