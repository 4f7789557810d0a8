mod common;

use common::oracles;

#[test]
fn bm25_matches_reference() {
    let worst = oracles::bm25_max_deviation();
    assert!(worst < 1e-9, "max |delta| = {worst:e}");
}

#[test]
fn metrics_match_brute_force() {
    let worst = oracles::metric_max_deviation(1000);
    assert!(worst < 1e-12, "max |delta| = {worst:e}");
}

#[test]
fn ttest_matches_students_t() {
    let worst = oracles::ttest_max_deviation(20);
    assert!(worst < 1e-6, "max |delta| = {worst:e}");
}
