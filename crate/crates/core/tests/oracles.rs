mod common;

use common::suites::{self, AGG_ORACLE_TOL, EER_ORACLE_TOL};

#[test]
fn sam_matches_reference() {
    for seed in 0..50 {
        let e = suites::sam_oracle_error(seed);
        assert!(e < AGG_ORACLE_TOL, "seed {seed}: {e:e}");
    }
}

#[test]
fn gcn_matches_reference() {
    for seed in 0..50 {
        let e = suites::gcn_oracle_error(seed);
        assert!(e < AGG_ORACLE_TOL, "seed {seed}: {e:e}");
    }
}

#[test]
fn masked_softmax_matches_compensated_reference() {
    for seed in 0..100 {
        let e = suites::softmax_oracle_error(seed);
        assert!(e < 1e-12, "seed {seed}: {e:e}");
    }
}

#[test]
fn eer_matches_threshold_sweep() {
    for seed in 0..100 {
        let e = suites::eer_oracle_error(seed);
        assert!(e < EER_ORACLE_TOL, "seed {seed}: {e:e}");
    }
}

#[test]
fn selection_masks_match_sorted_reference() {
    suites::run_all(suites::prior_matches_oracle, 200).unwrap();
}

#[test]
fn top_k_matches_bubble_sort() {
    suites::run_all(suites::top_k_matches_sort, 200).unwrap();
}
