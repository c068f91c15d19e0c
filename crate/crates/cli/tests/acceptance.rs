//! Runs the eleven acceptance criteria and prints one line per criterion.
//!
//! Failing criteria are reported, not asserted, so the rest of the suite
//! stays usable; set `FRACZAKAI_STRICT=1` to turn any failure into a test
//! failure.

use fraczakai::checks::DEFAULT_SEED;
use fraczakai_cli::suite::run_suite;

#[test]
fn acceptance_suite() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_suite(dir.path(), DEFAULT_SEED, &[], |_| {}).expect("every check runs to completion");
    assert_eq!(report.outcomes.len(), 10);

    println!();
    for o in &report.outcomes {
        let status = if o.passed() { "PASS" } else { "FAIL" };
        let details: Vec<String> = o.entries.iter().filter(|(k, _)| !k.ends_with("_tolerance")).map(|(k, v)| format!("{k}={v}")).collect();
        println!("criterion {:>2} [{status}] {} ({:.1?}, budget {:?}): {}", o.id, o.name, o.elapsed, o.budget, details.join(" "));
    }
    let deterministic = report.nondeterministic.is_empty();
    println!(
        "criterion 11 [{}] determinism of CSV outputs{}",
        if deterministic { "PASS" } else { "FAIL" },
        if deterministic { String::new() } else { format!(": differing {}", report.nondeterministic.join(",")) }
    );
    let failed: Vec<usize> = report.outcomes.iter().filter(|o| !o.passed()).map(|o| o.id).chain((!deterministic).then_some(11)).collect();
    println!("{} of 11 criteria pass; failing: {failed:?}", 11 - failed.len());

    let summary = std::fs::read_to_string(dir.path().join("check_summary.txt")).unwrap();
    assert!(summary.contains(&format!("pass = {}", report.passed())));
    if std::env::var("FRACZAKAI_STRICT").is_ok_and(|v| v == "1") {
        assert!(failed.is_empty(), "failing criteria: {failed:?}");
    }
}
