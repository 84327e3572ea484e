mod support;

use support::oracles::{aggregation_oracle, avg_distance_oracle, conv2d_oracle, edt_oracle};

#[test]
fn conv2d_matches_nested_loops() {
    let r = conv2d_oracle(200, 1);
    assert!(r.passed, "{r:?}");
}

#[test]
fn edt_matches_brute_force() {
    let r = edt_oracle(50, 2);
    assert!(r.passed, "{r:?}");
}

#[test]
fn aggregations_match_brute_force() {
    for seed in 0..5 {
        let r = aggregation_oracle(1000, seed);
        assert!(r.passed, "{r:?}");
    }
}

#[test]
fn avg_distance_matches_pixel_counting() {
    let r = avg_distance_oracle(300, 3);
    assert!(r.passed, "{r:?}");
}
