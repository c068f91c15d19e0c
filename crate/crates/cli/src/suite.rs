//! The `check` command: built-in acceptance checks plus output determinism.

use std::fs;
use std::io;
use std::path::Path;

use fraczakai::checks::{registry, run_check, CheckOutcome};

use crate::config::parse_config;
use crate::output::write_table;
use crate::run::{run_experiment, RunError};

/// CSV bytes of a check's table.
pub fn outcome_csv(outcome: &CheckOutcome, dir: &Path) -> io::Result<Vec<u8>> {
    let path = dir.join(format!("check_{:02}.csv", outcome.id));
    let columns: Vec<&str> = outcome.table.columns.iter().map(String::as_str).collect();
    write_table(&path, &columns, &outcome.table.rows)?;
    fs::read(path)
}

/// `key = value` lines for one check.
pub fn outcome_summary(outcome: &CheckOutcome) -> String {
    let mut out = String::new();
    let p = format!("check.{:02}", outcome.id);
    out.push_str(&format!("{p}.name = {}\n", outcome.name));
    for (k, v) in &outcome.entries {
        out.push_str(&format!("{p}.{k} = {v}\n"));
    }
    out.push_str(&format!("{p}.seconds = {:.3}\n", outcome.elapsed.as_secs_f64()));
    out.push_str(&format!("{p}.budget_seconds = {}\n", outcome.budget.as_secs()));
    out.push_str(&format!("{p}.pass = {}\n", outcome.passed()));
    out
}

/// Small configs exercising every reproducible run kind.
pub const DETERMINISM_CONFIGS: &[(&str, &str)] = &[
    ("density", "run = density\nbeta = 0.5\ncheckpoints = 0.5, 1\n"),
    ("simulate", "run = simulate\nmodel = jump-poisson\nstep = 0.01\n"),
    ("zakai", "run = zakai\nstep = 0.005\ngrid.spacing = 0.05\n"),
    ("frac-zakai", "run = frac-zakai\nstep = 0.005\ngrid.spacing = 0.05\n"),
    ("oracle", "run = oracle\nstep = 0.005\ngrid.spacing = 0.05\n"),
    ("subordinate", "run = subordinate\nstep = 0.01\nensemble = 8\ngrid.spacing = 0.1\n"),
    ("jump-filter", "run = jump-filter\nmodel = jump-poisson\nstep = 0.01\nparticles = 500\n"),
];

/// Runs each config twice into sibling directories and compares every CSV
/// byte for byte. Returns the names of the runs whose outputs differ.
pub fn determinism_of_runs(dir: &Path, seed: u64) -> Result<Vec<String>, RunError> {
    let mut differing = Vec::new();
    for (name, text) in DETERMINISM_CONFIGS {
        let mut cfg = parse_config(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.seed = seed;
        let mut outputs = Vec::new();
        for rep in ["a", "b"] {
            let out = dir.join(format!("{name}_{rep}"));
            let summary = run_experiment(&cfg, &out)?;
            let mut csvs: Vec<(String, Vec<u8>)> = summary
                .files
                .iter()
                .filter(|p| p.extension().is_some_and(|e| e == "csv"))
                .map(|p| Ok((p.file_name().unwrap_or_default().to_string_lossy().into_owned(), fs::read(p)?)))
                .collect::<io::Result<_>>()?;
            csvs.sort();
            outputs.push(csvs);
        }
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            differing.push(name.to_string());
        }
    }
    Ok(differing)
}

/// Outcome of the full suite.
pub struct SuiteReport {
    pub outcomes: Vec<CheckOutcome>,
    /// Check tables or run outputs that changed on a repeat with the same seed.
    pub nondeterministic: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(CheckOutcome::passed) && self.nondeterministic.is_empty()
    }
}

/// Runs the selected checks (all when `only` is empty), repeats each to
/// compare its CSV, checks run-kind determinism, and writes everything to `out`.
pub fn run_suite(out: &Path, seed: u64, only: &[usize], mut progress: impl FnMut(&str)) -> Result<SuiteReport, RunError> {
    fs::create_dir_all(out)?;
    let mut outcomes = Vec::new();
    let mut nondeterministic = Vec::new();
    let mut summary = String::new();
    let repeat_dir = out.join("repeat");
    fs::create_dir_all(&repeat_dir)?;
    for spec in registry().iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let first = run_check(spec, seed)?;
        progress(&first.line());
        let bytes = outcome_csv(&first, out)?;
        let again = run_check(spec, seed)?;
        if outcome_csv(&again, &repeat_dir)? != bytes {
            nondeterministic.push(format!("check_{:02}", spec.id));
        }
        summary.push_str(&outcome_summary(&first));
        outcomes.push(first);
    }
    if only.is_empty() || only.contains(&11) {
        let runs = determinism_of_runs(&out.join("determinism"), seed)?;
        nondeterministic.extend(runs);
        let ok = nondeterministic.is_empty();
        progress(&format!("[{}] 11 determinism of CSV outputs", if ok { "PASS" } else { "FAIL" }));
    }
    summary.push_str(&format!("check.11.name = determinism\ncheck.11.differing = {}\n", nondeterministic.join(",")));
    summary.push_str(&format!("check.11.pass = {}\n", nondeterministic.is_empty()));
    let report = SuiteReport { outcomes, nondeterministic };
    summary.push_str(&format!("pass = {}\n", report.passed()));
    fs::write(out.join("check_summary.txt"), summary)?;
    Ok(report)
}
