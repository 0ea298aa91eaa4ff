//! Library kernels against independent reference implementations.

mod common;

use common::*;

fn check(report: SuiteReport) {
    println!("{}", report.line());
    assert!(report.passed(), "{}", report.line());
}

#[test]
fn segment_distance_matches_grid_oracle() {
    check(segment_suite(1000));
}

#[test]
fn capsule_clearance_matches_monte_carlo_oracle() {
    check(capsule_suite(200));
}

#[test]
fn rnea_matches_two_link_lagrangian() {
    check(rnea_suite(1000));
}

#[test]
fn se3_log_exp_round_trip() {
    check(se3_suite(1000));
}

#[test]
fn weights_are_normalized_and_shift_invariant() {
    check(weights_suite(1000));
}

#[test]
fn survival_is_monotone_and_bounded() {
    check(survival_suite(10_000));
}

#[test]
fn cat_reduces_to_vanilla_without_hazard() {
    check(cat_reduction_suite(100));
}
