//! Flat `key = value` experiment configuration.
//!
//! One pair per line; `#` starts a comment; values may be quoted. Dotted
//! keys group related settings (`model.drift`, `grid.spacing`, `jump.marks`).

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use fraczakai::{Coefficient, InitialLaw, JumpAtom, JumpSpec, ModelSpec};

use crate::expr::Expr;

/// What an experiment computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Density,
    Simulate,
    Zakai,
    FracZakai,
    Oracle,
    Subordinate,
    JumpFilter,
    Benchmark,
}

impl RunKind {
    pub const ALL: [(&'static str, RunKind); 8] = [
        ("density", RunKind::Density),
        ("simulate", RunKind::Simulate),
        ("zakai", RunKind::Zakai),
        ("frac-zakai", RunKind::FracZakai),
        ("oracle", RunKind::Oracle),
        ("subordinate", RunKind::Subordinate),
        ("jump-filter", RunKind::JumpFilter),
        ("benchmark", RunKind::Benchmark),
    ];

    pub fn name(self) -> &'static str {
        RunKind::ALL.iter().find(|(_, k)| *k == self).expect("every kind is listed").0
    }
}

/// Signal model: a built-in by name or inline coefficient expressions.
#[derive(Debug, Clone)]
pub enum ModelChoice {
    Builtin(String),
    Inline { drift: Expr, diffusion: Expr, observation: Vec<Expr> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpTarget {
    State,
    Observation,
}

/// Finite jump measure; `function` is `G(x, w)` for state jumps and
/// `λ(x, w)` for observation jumps.
#[derive(Debug, Clone)]
pub struct JumpConfig {
    pub target: JumpTarget,
    pub intensity: f64,
    pub marks: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub function: Expr,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub run: RunKind,
    pub model: ModelChoice,
    pub beta: f64,
    pub initial: Option<(f64, f64)>,
    pub jumps: Option<JumpConfig>,
    pub seed: u64,
    pub horizon: f64,
    pub step: f64,
    pub operational_step: f64,
    pub grid_spacing: f64,
    pub grid_bounds: Option<(f64, f64)>,
    pub particles: usize,
    pub ensemble: usize,
    pub checkpoints: Vec<f64>,
    pub output: Option<PathBuf>,
    pub tolerance: Option<f64>,
}

/// One problem in a config file; line 0 means the file as a whole.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

/// All problems found in a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const KEYS: &[&str] = &[
    "run",
    "model",
    "beta",
    "seed",
    "horizon",
    "step",
    "operational_step",
    "grid.spacing",
    "grid.lower",
    "grid.upper",
    "particles",
    "ensemble",
    "checkpoints",
    "output",
    "tolerance",
    "model.drift",
    "model.diffusion",
    "model.observation",
    "model.initial_mean",
    "model.initial_sd",
    "jump.kind",
    "jump.intensity",
    "jump.marks",
    "jump.probabilities",
    "jump.function",
];

/// Removes a trailing comment that is not inside quotes.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

struct Entries {
    map: HashMap<String, (usize, String)>,
    errors: Vec<ConfigError>,
}

impl Entries {
    fn err(&mut self, line: usize, message: impl Into<String>) {
        self.errors.push(ConfigError { line, message: message.into() });
    }

    fn line_of(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |(l, _)| *l)
    }

    fn raw(&self, key: &str) -> Option<(usize, String)> {
        self.map.get(key).cloned()
    }

    fn float(&mut self, key: &str, default: f64, ok: impl Fn(f64) -> bool, range: &str) -> f64 {
        match self.raw(key) {
            None => default,
            Some((line, v)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() && ok(x) => x,
                Ok(x) => {
                    self.err(line, format!("{key} = {x} is out of range: must be {range}"));
                    default
                }
                Err(_) => {
                    self.err(line, format!("{key}: '{v}' is not a number"));
                    default
                }
            },
        }
    }

    fn optional_float(&mut self, key: &str) -> Option<f64> {
        self.map.contains_key(key).then(|| self.float(key, 0.0, |_| true, "finite"))
    }

    fn count(&mut self, key: &str, default: usize, lo: usize, hi: usize) -> usize {
        match self.raw(key) {
            None => default,
            Some((line, v)) => match v.parse::<usize>() {
                Ok(n) if (lo..=hi).contains(&n) => n,
                Ok(n) => {
                    self.err(line, format!("{key} = {n} is out of range: must be in [{lo}, {hi}]"));
                    default
                }
                Err(_) => {
                    self.err(line, format!("{key}: '{v}' is not a nonnegative integer"));
                    default
                }
            },
        }
    }

    fn list(&mut self, key: &str) -> Option<(usize, Vec<f64>)> {
        let (line, v) = self.raw(key)?;
        let parsed: Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(xs) if xs.iter().all(|x| x.is_finite()) => Some((line, xs)),
            _ => {
                self.err(line, format!("{key}: '{v}' is not a comma-separated list of numbers"));
                None
            }
        }
    }

    fn expression(&mut self, key: &str) -> Option<Expr> {
        let (line, v) = self.raw(key)?;
        match Expr::parse(&v) {
            Ok(e) => Some(e),
            Err(m) => {
                self.err(line, format!("{key}: {m}"));
                None
            }
        }
    }
}

/// Parses and validates a configuration; every problem is reported with its line.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut e = Entries { map: HashMap::new(), errors: Vec::new() };
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = strip_comment(raw_line).trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            e.err(line_no, format!("expected 'key = value', found '{line}'"));
            continue;
        };
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            e.err(line_no, format!("unknown key '{key}'"));
            continue;
        }
        if let Some((first, _)) = e.map.get(&key) {
            let first = *first;
            e.err(line_no, format!("duplicate key '{key}' (lines {first} and {line_no})"));
            continue;
        }
        e.map.insert(key, (line_no, unquote(value).to_string()));
    }

    let run = match e.raw("run") {
        None => {
            e.err(0, "missing required key 'run'");
            RunKind::Oracle
        }
        Some((line, v)) => RunKind::ALL.iter().find(|(n, _)| *n == v).map(|(_, k)| *k).unwrap_or_else(|| {
            let names: Vec<&str> = RunKind::ALL.iter().map(|(n, _)| *n).collect();
            e.err(line, format!("unknown run kind '{v}' (expected one of {})", names.join(", ")));
            RunKind::Oracle
        }),
    };

    let beta = e.float("beta", 0.5, |b| b > 0.0 && b < 1.0, "in (0, 1)");
    let seed = match e.raw("seed") {
        None => 1,
        Some((line, v)) => v.parse::<u64>().unwrap_or_else(|_| {
            e.err(line, format!("seed: '{v}' is not a nonnegative integer"));
            1
        }),
    };
    let horizon = e.float("horizon", 1.0, |h| h > 0.0 && h <= 100.0, "in (0, 100]");
    let step = e.float("step", 1e-3, |s| s > 0.0 && s <= horizon, "in (0, horizon]");
    let operational_step = e.float("operational_step", step, |s| s > 0.0 && s <= 1.0, "in (0, 1]");
    let grid_spacing = e.float("grid.spacing", 0.02, |s| s > 0.0 && s <= 1.0, "in (0, 1]");
    let grid_bounds = match (e.optional_float("grid.lower"), e.optional_float("grid.upper")) {
        (None, None) => None,
        (Some(lo), Some(hi)) if hi > lo => Some((lo, hi)),
        (Some(_), Some(_)) => {
            let line = e.line_of("grid.upper");
            e.err(line, "grid.upper must exceed grid.lower");
            None
        }
        _ => {
            let line = e.line_of("grid.lower").max(e.line_of("grid.upper"));
            e.err(line, "grid.lower and grid.upper must be given together");
            None
        }
    };
    let particles = e.count("particles", 10_000, 100, 10_000_000);
    let ensemble = e.count("ensemble", 100, 1, 1_000_000);
    let checkpoints = match e.list("checkpoints") {
        None => [0.25, 0.5, 1.0].iter().map(|c| c * horizon).collect(),
        Some((line, xs)) => {
            if xs.iter().any(|c| !(*c >= 0.0 && *c <= horizon)) || xs.windows(2).any(|w| w[1] <= w[0]) {
                e.err(line, "checkpoints must be increasing and lie in [0, horizon]");
            }
            xs
        }
    };
    let output = e.raw("output").map(|(_, v)| PathBuf::from(v));
    let tolerance = e.map.contains_key("tolerance").then(|| e.float("tolerance", 1.0, |t| t > 0.0, "positive"));

    let inline_keys = ["model.drift", "model.diffusion", "model.observation"];
    let has_inline = inline_keys.iter().any(|k| e.map.contains_key(*k));
    let model = if has_inline {
        if let Some((line, _)) = e.raw("model") {
            e.err(line, "'model' and inline model.* coefficients are exclusive");
        }
        for k in ["model.drift", "model.diffusion"] {
            if !e.map.contains_key(k) {
                let line = inline_keys.iter().map(|k| e.line_of(k)).max().unwrap_or(0);
                e.err(line, format!("inline model needs '{k}'"));
            }
        }
        let drift = e.expression("model.drift");
        let diffusion = e.expression("model.diffusion");
        let observation: Vec<Expr> = match e.raw("model.observation") {
            None => vec![Expr::parse("0").expect("constant parses")],
            Some((line, v)) => v
                .split(',')
                .filter_map(|s| match Expr::parse(s) {
                    Ok(x) => Some(x),
                    Err(m) => {
                        e.err(line, format!("model.observation: {m}"));
                        None
                    }
                })
                .collect(),
        };
        for (k, x) in [("model.drift", &drift), ("model.diffusion", &diffusion)] {
            if x.as_ref().is_some_and(|x| x.uses_w()) {
                let line = e.line_of(k);
                e.err(line, format!("{k} may only use x"));
            }
        }
        match (drift, diffusion) {
            (Some(drift), Some(diffusion)) => ModelChoice::Inline { drift, diffusion, observation },
            _ => ModelChoice::Builtin("ou-linear".into()),
        }
    } else {
        let name = e.raw("model").map_or_else(|| "ou-linear".to_string(), |(_, v)| v);
        if ModelSpec::builtin(&name, 0.5).is_err() {
            let line = e.line_of("model");
            e.err(line, format!("unknown model '{name}' (expected ou-linear, benes-like or jump-poisson)"));
        }
        ModelChoice::Builtin(name)
    };

    let initial = match (e.optional_float("model.initial_mean"), e.raw("model.initial_sd")) {
        (None, None) => None,
        (mean, _) => {
            let sd = e.float("model.initial_sd", 1.0, |s| s >= 0.0, "nonnegative");
            Some((mean.unwrap_or(0.0), sd))
        }
    };

    let jump_keys = ["jump.kind", "jump.intensity", "jump.marks", "jump.probabilities", "jump.function"];
    let jumps = if jump_keys.iter().any(|k| e.map.contains_key(*k)) {
        parse_jumps(&mut e, &jump_keys)
    } else {
        None
    };

    if e.errors.is_empty() {
        Ok(ExperimentConfig {
            run,
            model,
            beta,
            initial,
            jumps,
            seed,
            horizon,
            step,
            operational_step,
            grid_spacing,
            grid_bounds,
            particles,
            ensemble,
            checkpoints,
            output,
            tolerance,
        })
    } else {
        e.errors.sort_by_key(|x| x.line);
        Err(ConfigErrors(e.errors))
    }
}

fn parse_jumps(e: &mut Entries, keys: &[&str]) -> Option<JumpConfig> {
    let anchor = keys.iter().map(|k| e.line_of(k)).max().unwrap_or(0);
    for k in keys {
        if !e.map.contains_key(*k) {
            e.err(anchor, format!("jump specification needs '{k}'"));
        }
    }
    let target = match e.raw("jump.kind") {
        Some((_, v)) if v == "state" => Some(JumpTarget::State),
        Some((_, v)) if v == "observation" => Some(JumpTarget::Observation),
        Some((line, v)) => {
            e.err(line, format!("jump.kind must be 'state' or 'observation', got '{v}'"));
            None
        }
        None => None,
    };
    let intensity = e.float("jump.intensity", 0.0, |l| l >= 0.0, "nonnegative");
    let marks = e.list("jump.marks");
    let probabilities = e.list("jump.probabilities");
    if let (Some((line, m)), Some((_, p))) = (&marks, &probabilities) {
        if m.len() != p.len() {
            e.err(*line, "jump.marks and jump.probabilities differ in length");
        }
    }
    let function = e.expression("jump.function");
    Some(JumpConfig { target: target?, intensity, marks: marks?.1, probabilities: probabilities?.1, function: function? })
}

impl ExperimentConfig {
    /// The model with initial-law and jump overrides applied.
    pub fn model_spec(&self) -> fraczakai::Result<ModelSpec> {
        let mut model = match &self.model {
            ModelChoice::Builtin(name) => ModelSpec::builtin(name, self.beta)?,
            ModelChoice::Inline { drift, diffusion, observation } => {
                let coef = |e: &Expr| {
                    let e2 = e.clone();
                    Coefficient::new(e.source().to_string(), move |x| e2.eval(x, 0.0))
                };
                ModelSpec::new(coef(drift), coef(diffusion), observation.iter().map(coef).collect(), self.beta, InitialLaw::Gaussian { mean: 0.0, sd: 1.0 })?
            }
        };
        if let Some((mean, sd)) = self.initial {
            model = model.with_initial(if sd == 0.0 { InitialLaw::Point(mean) } else { InitialLaw::Gaussian { mean, sd } });
        }
        if let Some(j) = &self.jumps {
            let atoms = j.marks.iter().zip(&j.probabilities).map(|(&mark, &probability)| JumpAtom { mark, probability }).collect();
            let f = j.function.clone();
            let spec = match j.target {
                JumpTarget::State => JumpSpec::state(j.intensity, atoms, move |x, w| f.eval(x, w))?,
                JumpTarget::Observation => JumpSpec::observation(j.intensity, atoms, move |x, w| f.eval(x, w))?,
            };
            model = model.with_jumps(spec);
        }
        Ok(model)
    }

    /// Whether the model is the linear-Gaussian built-in with a Gaussian start.
    pub fn is_linear_gaussian(&self) -> bool {
        matches!(&self.model, ModelChoice::Builtin(n) if n == "ou-linear") && self.jumps.is_none() && self.initial.is_none_or(|(_, sd)| sd > 0.0)
    }

    pub fn model_label(&self) -> String {
        match &self.model {
            ModelChoice::Builtin(n) => n.clone(),
            ModelChoice::Inline { drift, diffusion, observation } => {
                let obs: Vec<&str> = observation.iter().map(|o| o.source()).collect();
                format!("inline(b = {}; sigma = {}; h = {})", drift.source(), diffusion.source(), obs.join(", "))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("model = \"ou-linear\"\nbeta = 0.5\nrun = \"oracle\"\n").unwrap();
        assert_eq!(c.run, RunKind::Oracle);
        assert_eq!(c.seed, 1);
        assert_eq!(c.horizon, 1.0);
        assert_eq!(c.step, 1e-3);
        assert_eq!(c.checkpoints, vec![0.25, 0.5, 1.0]);
        assert!(c.is_linear_gaussian());
        assert!(c.model_spec().is_ok());
    }

    #[test]
    fn beta_out_of_range() {
        let err = parse_config("run = oracle\nbeta = 1.5").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].line, 2);
        assert!(err.0[0].message.contains("out of range"), "{}", err);
    }

    #[test]
    fn duplicate_keys_name_both_lines() {
        let err = parse_config("run = oracle\n# note\nbeta = 0.4\nbeta = 0.6\n").unwrap_err();
        assert_eq!(err.0[0].line, 4);
        assert!(err.0[0].message.contains("lines 3 and 4"), "{}", err);
    }

    #[test]
    fn unknown_and_missing_keys() {
        let err = parse_config("colour = blue\nnonsense line").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("line 1: unknown key 'colour'"), "{text}");
        assert!(text.contains("line 2: expected 'key = value'"), "{text}");
        assert!(text.contains("missing required key 'run'"), "{text}");
    }

    #[test]
    fn inline_model_and_jumps() {
        let text = "run = jump-filter\nmodel.drift = -x\nmodel.diffusion = 1 # unit\nmodel.observation = x, tanh(x)\n\
                    jump.kind = observation\njump.intensity = 2\njump.marks = 1, -1\njump.probabilities = 0.5, 0.5\njump.function = 1 + 0.5*tanh(x*w)\n";
        let c = parse_config(text).unwrap();
        let m = c.model_spec().unwrap();
        assert_eq!(m.obs_dim(), 2);
        assert_eq!(m.drift.eval(2.0), -2.0);
        assert!(m.observation_jumps().is_some());
        assert!(!c.is_linear_gaussian());
    }

    #[test]
    fn inline_errors_carry_lines() {
        let err = parse_config("run = zakai\nmodel.drift = -x +\nmodel = ou-linear\njump.kind = sideways\n").unwrap_err();
        let lines: Vec<usize> = err.0.iter().map(|e| e.line).collect();
        assert!(lines.contains(&2) && lines.contains(&3) && lines.contains(&4), "{err}");
    }

    #[test]
    fn hash_inside_quotes_is_kept() {
        let c = parse_config("run = density\noutput = \"a#b\" # trailing").unwrap();
        assert_eq!(c.output, Some(PathBuf::from("a#b")));
    }

    #[test]
    fn checkpoints_are_validated() {
        assert!(parse_config("run = oracle\ncheckpoints = 0.5, 0.25").is_err());
        assert!(parse_config("run = oracle\ncheckpoints = 2").is_err());
        assert_eq!(parse_config("run = oracle\nhorizon = 2\ncheckpoints = 0.5,2").unwrap().checkpoints, vec![0.5, 2.0]);
    }
}
