mod support;

use support::fixture;

#[test]
fn bathing_providers_leave_no_stale_context() {
    let out = support::lifecycle::check(&fixture("scenarios/bathing.scn")).unwrap();
    assert_eq!(out.providers, 4);
    // One case matching itself: renormalized weights keep S at 1 on any subset.
    assert_eq!(out.changed, 0);
}

#[test]
fn noonbreak_scores_follow_departing_sensors() {
    let out = support::lifecycle::check(&fixture("scenarios/noonbreak.scn")).unwrap();
    assert!(out.providers >= 2);
    assert!(out.changed >= 1, "{out:?}");
}
