//! Command-line front end: one reproducible scenario per invocation.
//!
//! Parameters come from flags and, optionally, a `key = value` file given
//! with `--config` (flags win). [`validate_config`] checks everything at
//! once and reports every violation; [`run_scenario`] executes, writes
//! CSV or JSON, prints a one-line summary and maps the result onto the
//! exit codes 0 (success), 2 (invalid configuration) and 3 (a statistical
//! check failed under `--assert`, or a run failed to collapse or accept).

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use crate::classical::{ClassicalState, PhaseFunction};
use crate::ensemble::{
    meter_equivalence_check, repeat_weak_limit_classical, run_anomaly_experiment, run_classical_collapse_statistics,
    run_collapse_statistics, write_reports_csv, ExperimentReport, SampleMoments, WeakLimitPlan,
};
use crate::error::Error;
use crate::format::{csv_line, sig17};
use crate::quantum::{DensityOperator, Observable};
use crate::rng::{derive_run_seed, SeededRng};
use crate::trajectories::{
    classical_ensemble_average, classical_trajectory, decoherence_evolve, ensemble_average_check,
    integrate_master_equation, matrix_csv_fields, matrix_csv_header, quantum_trajectory, ContinuousMeasurementConfig,
    QuantumIntegrator,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_FAILED: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Repeated noisy measurements of a classical variable.
    WeakLimit,
    /// Postselected weak measurement with an anomalous weak value.
    Anomaly,
    /// Exact decoherence of a qubit under continuous σ_z measurement,
    /// optionally against a trajectory ensemble (--n-traj).
    Decoherence,
    /// Endpoint statistics of continuously measured quantum (or, with
    /// --classical, classical) trajectories.
    Collapse,
    /// Classical continuous measurement: one trajectory, or the ensemble
    /// average with --n-traj.
    ClassicalContinuous,
    /// Direct outcome density against the von Neumann meter model.
    MeterCheck,
}

impl Scenario {
    fn name(self) -> &'static str {
        match self {
            Scenario::WeakLimit => "weak-limit",
            Scenario::Anomaly => "anomaly",
            Scenario::Decoherence => "decoherence",
            Scenario::Collapse => "collapse",
            Scenario::ClassicalContinuous => "classical-continuous",
            Scenario::MeterCheck => "meter-check",
        }
    }

    fn accepts(self, key: &str) -> bool {
        let common = ["seed", "format", "output", "threads"];
        let own: &[&str] = match self {
            Scenario::WeakLimit => &["sigma", "n", "reps", "weights", "values"],
            Scenario::Anomaly => &["phi", "sigma", "n"],
            Scenario::Decoherence => &["phi", "g2", "dt", "t", "n_traj", "record_every", "record", "integrator"],
            Scenario::Collapse => &[
                "phi",
                "g2",
                "dt",
                "t",
                "n_traj",
                "classical",
                "weights",
                "values",
                "record",
                "integrator",
            ],
            Scenario::ClassicalContinuous => {
                &["g2", "dt", "t", "n_traj", "record_every", "weights", "values", "record"]
            }
            Scenario::MeterCheck => &["n"],
        };
        common.contains(&key) || own.contains(&key)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Raw command line. Numeric values are kept as text so that every bad
/// value can be reported together.
#[derive(Debug, Clone, Parser)]
#[command(
    name = "weakmeas",
    version,
    about = "Weak and continuous quantum measurement simulations",
    allow_negative_numbers = true
)]
pub struct RawArgs {
    #[arg(value_enum)]
    pub scenario: Scenario,
    /// Angle of the initial state, radians.
    #[arg(long)]
    pub phi: Option<String>,
    /// Measurement precision σ.
    #[arg(long)]
    pub sigma: Option<String>,
    /// Number of measurements (or random cases for meter-check).
    #[arg(long)]
    pub n: Option<String>,
    /// Continuous-measurement rate constant g².
    #[arg(long)]
    pub g2: Option<String>,
    /// Integrator step; defaults to 1e-3·g².
    #[arg(long)]
    pub dt: Option<String>,
    /// Final time.
    #[arg(long, visible_alias = "t-final")]
    pub t: Option<String>,
    /// Number of trajectories.
    #[arg(long)]
    pub n_traj: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Number of repeated experiments (weak-limit).
    #[arg(long)]
    pub reps: Option<String>,
    /// Store every k-th integrator step.
    #[arg(long)]
    pub record_every: Option<String>,
    /// Comma-separated initial classical weights.
    #[arg(long)]
    pub weights: Option<String>,
    /// Comma-separated values of the measured classical variable.
    #[arg(long)]
    pub values: Option<String>,
    /// Quantum integrator: kraus (default) or euler-maruyama.
    #[arg(long)]
    pub integrator: Option<String>,
    /// Use classical trajectories (collapse).
    #[arg(long)]
    pub classical: bool,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write trajectory 0 as CSV to this file.
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Worker threads for ensembles; output does not depend on it.
    #[arg(long)]
    pub threads: Option<String>,
    /// Exit with status 3 if any statistical check fails.
    #[arg(long)]
    pub assert: bool,
    /// File of `key = value` lines supplying defaults for the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// A fully validated run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub phi: f64,
    pub sigma: f64,
    pub n: usize,
    pub g2: f64,
    pub dt: f64,
    pub t_final: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub reps: usize,
    pub record_every: usize,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub classical: bool,
    pub integrator: QuantumIntegrator,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub record: Option<PathBuf>,
    #[serde(skip)]
    pub format: OutputFormat,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub assert: bool,
}

impl ScenarioConfig {
    fn continuous(&self) -> ContinuousMeasurementConfig {
        ContinuousMeasurementConfig {
            g2: self.g2,
            dt: self.dt,
            t_final: self.t_final,
            record_every: self.record_every,
            integrator: self.integrator,
        }
    }

    fn tilted_state(&self) -> DensityOperator {
        DensityOperator::pure_real(&[self.phi.cos(), self.phi.sin()]).expect("unit vector")
    }

    fn classical_state(&self) -> ClassicalState {
        ClassicalState::normalized(self.weights.clone()).expect("validated weights")
    }

    fn phase_function(&self) -> PhaseFunction {
        PhaseFunction::new(self.values.clone())
    }
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError(pub Vec<String>);

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for v in &self.0 {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationError {}

/// Parses `key = value` lines; `#` starts a comment, `-` in keys is read as `_`.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, Vec<String>> {
    let mut map = BTreeMap::new();
    let mut errors = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                map.insert(k.trim().replace('-', "_"), v.trim().to_string());
            }
            None => errors.push(format!("config line {}: expected key = value, got {line:?}", no + 1)),
        }
    }
    if errors.is_empty() {
        Ok(map)
    } else {
        Err(errors)
    }
}

struct Collector {
    values: BTreeMap<String, String>,
    errors: Vec<String>,
}

impl Collector {
    fn take<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let raw = self.values.get(key)?.clone();
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("{key} must be {what}, got {raw:?}"));
                None
            }
        }
    }

    fn real(&mut self, key: &str, default: f64) -> f64 {
        match self.take::<f64>(key, "a real number") {
            Some(v) if v.is_finite() => v,
            Some(v) => {
                self.errors.push(format!("{key} must be finite, got {v}"));
                default
            }
            None => default,
        }
    }

    fn count(&mut self, key: &str, default: usize) -> usize {
        self.take::<usize>(key, "a non-negative integer").unwrap_or(default)
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        let raw = self.values.get(key)?.clone();
        let parsed: Result<Vec<f64>, _> = raw.split(',').map(|x| x.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.iter().all(|x| x.is_finite()) && !v.is_empty() => Some(v),
            _ => {
                self.errors.push(format!(
                    "{key} must be a comma-separated list of real numbers, got {raw:?}"
                ));
                None
            }
        }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.errors.push(msg());
        }
    }
}

/// Merges the config file under the flags, applies scenario defaults and
/// checks every constraint.
pub fn validate_config(raw: &RawArgs) -> Result<ScenarioConfig, ValidationError> {
    let scenario = raw.scenario;
    let mut values = BTreeMap::new();
    let mut errors = Vec::new();
    if let Some(path) = &raw.config {
        match fs::read_to_string(path) {
            Ok(text) => match parse_config_file(&text) {
                Ok(map) => values = map,
                Err(e) => errors.extend(e),
            },
            Err(e) => errors.push(format!("cannot read config file {}: {e}", path.display())),
        }
    }
    if let Some(v) = values.remove("t_final") {
        values.entry("t".into()).or_insert(v);
    }
    let flags: [(&str, &Option<String>); 12] = [
        ("phi", &raw.phi),
        ("sigma", &raw.sigma),
        ("n", &raw.n),
        ("g2", &raw.g2),
        ("dt", &raw.dt),
        ("t", &raw.t),
        ("n_traj", &raw.n_traj),
        ("seed", &raw.seed),
        ("reps", &raw.reps),
        ("record_every", &raw.record_every),
        ("weights", &raw.weights),
        ("values", &raw.values),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            values.insert(k.to_string(), v.clone());
        }
    }
    let string_flags: [(&str, Option<String>); 4] = [
        ("threads", raw.threads.clone()),
        ("integrator", raw.integrator.clone()),
        ("output", raw.output.as_ref().map(|p| p.display().to_string())),
        ("record", raw.record.as_ref().map(|p| p.display().to_string())),
    ];
    for (k, v) in string_flags {
        if let Some(v) = v {
            values.insert(k.to_string(), v);
        }
    }
    if raw.classical {
        values.insert("classical".into(), "true".into());
    }
    if let Some(f) = raw.format {
        values.insert(
            "format".into(),
            if f == OutputFormat::Csv { "csv" } else { "json" }.into(),
        );
    }
    for key in values.keys() {
        if !scenario.accepts(key) {
            errors.push(format!("{key} does not apply to the {scenario} scenario"));
        }
    }

    let mut c = Collector { values, errors };
    let default_phi = match scenario {
        Scenario::Decoherence => FRAC_PI_4,
        _ => FRAC_PI_3,
    };
    let phi = c.real("phi", default_phi);
    let sigma = c.real("sigma", 10.0);
    let n = c.count(
        "n",
        match scenario {
            Scenario::Anomaly => 3600,
            Scenario::MeterCheck => 50,
            _ => 100,
        },
    );
    let g2 = c.real("g2", 1.0);
    let dt = c.real("dt", 1e-3 * g2);
    let t_final = c.real(
        "t",
        g2 * match scenario {
            Scenario::Collapse => 50.0,
            Scenario::ClassicalContinuous => 20.0,
            _ => 5.0,
        },
    );
    let n_traj = c.count(
        "n_traj",
        match scenario {
            Scenario::Collapse => 1000,
            Scenario::ClassicalContinuous => 1,
            _ => 0,
        },
    );
    let seed = c.take::<u64>("seed", "a non-negative 64-bit integer").unwrap_or(0);
    let reps = c.count("reps", 1);
    let steps = ((t_final / dt).round().max(1.0)) as usize;
    let ensemble = n_traj > 1 || scenario == Scenario::Collapse;
    let default_every = if ensemble { (steps / 50).max(1) } else { 1 };
    let record_every = c.count("record_every", default_every);
    let weights = c.list("weights").unwrap_or_else(|| vec![0.5, 0.5]);
    let values = c.list("values").unwrap_or_else(|| vec![1.0, -1.0]);
    let classical = c.values.contains_key("classical");
    let threads = c.take::<usize>("threads", "a positive integer");
    let format = match c.values.get("format").map(String::as_str) {
        None | Some("csv") => OutputFormat::Csv,
        Some("json") => OutputFormat::Json,
        Some(other) => {
            c.errors.push(format!("format must be csv or json, got {other:?}"));
            OutputFormat::Csv
        }
    };
    let integrator = match c.values.get("integrator").map(String::as_str) {
        None | Some("kraus") => QuantumIntegrator::Kraus,
        Some("euler-maruyama") => QuantumIntegrator::EulerMaruyama,
        Some(other) => {
            c.errors
                .push(format!("integrator must be kraus or euler-maruyama, got {other:?}"));
            QuantumIntegrator::Kraus
        }
    };
    let output = c.values.get("output").map(PathBuf::from);
    let record = c.values.get("record").map(PathBuf::from);

    c.check(threads != Some(0), || "threads must be at least 1".into());
    let uses = |k: &str| scenario.accepts(k);
    if uses("sigma") {
        c.check(sigma > 0.0, || format!("sigma must be positive, got {sigma}"));
    }
    if uses("n") {
        c.check(n >= 1, || "n must be at least 1".into());
    }
    if uses("reps") {
        c.check(reps >= 1, || "reps must be at least 1".into());
    }
    if scenario == Scenario::Anomaly {
        c.check((0.0..FRAC_PI_2).contains(&phi), || {
            format!("phi must lie in [0, π/2) for anomaly: acceptance rate cos²φ must be positive, got {phi}")
        });
    }
    if uses("g2") {
        c.check(g2 > 0.0, || format!("g2 must be positive, got {g2}"));
        c.check(dt > 0.0, || format!("dt must be positive, got {dt}"));
        c.check(t_final > 0.0, || format!("t must be positive, got {t_final}"));
        c.check(g2 <= 0.0 || dt <= g2 / 10.0 * (1.0 + 1e-12), || {
            format!("dt must not exceed g2/10 = {} (stability guard), got {dt}", g2 / 10.0)
        });
        c.check(record_every >= 1, || "record_every must be at least 1".into());
    }
    match scenario {
        Scenario::Decoherence => c.check(n_traj == 0 || n_traj >= 100, || {
            format!("n_traj must be 0 (exact solution only) or at least 100, got {n_traj}")
        }),
        Scenario::Collapse => c.check(n_traj >= 1, || "n_traj must be at least 1".into()),
        Scenario::ClassicalContinuous => c.check(n_traj == 1 || n_traj >= 100, || {
            format!("n_traj must be 1 (single trajectory) or at least 100, got {n_traj}")
        }),
        _ => {}
    }
    if uses("weights") {
        c.check(weights.len() == values.len(), || {
            format!(
                "weights and values must have equal length, got {} and {}",
                weights.len(),
                values.len()
            )
        });
        c.check(
            weights.iter().all(|&w| w >= 0.0) && weights.iter().sum::<f64>() > 0.0,
            || "weights must be non-negative with a positive sum".into(),
        );
        c.check(
            classical || scenario != Scenario::Collapse || !c.values.contains_key("weights"),
            || "weights and values apply to collapse only with --classical".into(),
        );
    }
    if classical {
        c.check(!c.values.contains_key("phi"), || {
            "phi does not apply to classical collapse".into()
        });
    }

    if !c.errors.is_empty() {
        return Err(ValidationError(c.errors));
    }
    Ok(ScenarioConfig {
        scenario,
        phi,
        sigma,
        n,
        g2,
        dt,
        t_final,
        n_traj,
        seed,
        reps,
        record_every,
        weights,
        values,
        classical,
        integrator,
        output,
        record,
        format,
        threads,
        assert: raw.assert,
    })
}

/// One statistical check reported under `--assert`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub line: String,
    pub checks: Vec<Check>,
}

/// Why a scenario did not produce output.
#[derive(Debug)]
pub enum RunError {
    Sim(Error),
    Io(io::Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Sim(e)
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Sim(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io(_) => EXIT_IO,
            RunError::Sim(Error::NoAcceptedRuns { .. } | Error::Unconverged { .. } | Error::StepUnstable { .. }) => {
                EXIT_FAILED
            }
            RunError::Sim(_) => EXIT_INVALID,
        }
    }
}

fn write_json<W: Write + ?Sized, T: Serialize>(out: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    out.write_all(b"\n")
}

/// Runs the scenario, writing its data to `out` and trajectory 0 (where
/// applicable) to `record`.
pub fn execute(
    cfg: &ScenarioConfig,
    out: &mut dyn Write,
    record: Option<&mut dyn Write>,
) -> Result<RunSummary, RunError> {
    match cfg.scenario {
        Scenario::WeakLimit => weak_limit(cfg, out),
        Scenario::Anomaly => anomaly(cfg, out),
        Scenario::Decoherence => decoherence(cfg, out, record),
        Scenario::Collapse => collapse(cfg, out, record),
        Scenario::ClassicalContinuous => classical_continuous(cfg, out, record),
        Scenario::MeterCheck => meter_check(cfg, out),
    }
}

fn weak_limit(cfg: &ScenarioConfig, out: &mut dyn Write) -> Result<RunSummary, RunError> {
    let state = cfg.classical_state();
    let f = cfg.phase_function();
    let plan = WeakLimitPlan::new(cfg.sigma, cfg.n)?;
    let reports = repeat_weak_limit_classical(&state, &f, &plan, cfg.seed, cfg.reps)?;
    match cfg.format {
        OutputFormat::Csv => write_reports_csv(&reports, &mut *out)?,
        OutputFormat::Json if reports.len() == 1 => write_json(out, &reports[0])?,
        OutputFormat::Json => write_json(out, &reports)?,
    }
    let predicted = reports[0].predicted_mean;
    let mut checks = Vec::new();
    let line = if reports.len() == 1 {
        let r = &reports[0];
        checks.push(Check::new(
            "mean within 4 delta",
            (r.mean - predicted).abs() <= 4.0 * plan.delta(),
            format!("|{} - {}| vs {}", r.mean, predicted, 4.0 * plan.delta()),
        ));
        format!(
            "weak-limit: mean={:.6} predicted={:.6} delta={:.6} z={:.3}",
            r.mean, predicted, r.predicted_delta, r.z_score
        )
    } else {
        let means: Vec<f64> = reports.iter().map(|r| r.mean).collect();
        let m = SampleMoments::from_slice(&means);
        checks.push(Check::new(
            "variance of mean within 25% of delta2",
            (m.variance - plan.delta2).abs() <= 0.25 * plan.delta2,
            format!("{} vs {}", m.variance, plan.delta2),
        ));
        checks.push(Check::new(
            "|skewness| < 0.2",
            m.skewness.abs() < 0.2,
            format!("{}", m.skewness),
        ));
        checks.push(Check::new(
            "|excess kurtosis| < 0.5",
            m.excess_kurtosis.abs() < 0.5,
            format!("{}", m.excess_kurtosis),
        ));
        format!(
            "weak-limit: reps={} mean of means={:.6} predicted={:.6} variance={:.6} predicted delta2={:.6}",
            reports.len(),
            m.mean,
            predicted,
            m.variance,
            plan.delta2
        )
    };
    Ok(RunSummary { line, checks })
}

fn anomaly(cfg: &ScenarioConfig, out: &mut dyn Write) -> Result<RunSummary, RunError> {
    let r = run_anomaly_experiment(cfg.phi, cfg.sigma, cfg.n, cfg.seed)?;
    write_single_report(cfg, out, &r)?;
    let rate = cfg.phi.cos().powi(2);
    let n = cfg.n as f64;
    let count_se = (n * rate * (1.0 - rate)).sqrt();
    let mut checks = vec![
        Check::new(
            "accepted count within 3 binomial se",
            (r.accepted_count as f64 - n * rate).abs() <= 3.0 * count_se,
            format!("{} vs {} ± {}", r.accepted_count, n * rate, 3.0 * count_se),
        ),
        Check::new(
            "mean within 3 delta of the weak value",
            (r.mean - r.predicted_mean).abs() <= 3.0 * r.predicted_delta,
            format!("{} vs {} ± {}", r.mean, r.predicted_mean, 3.0 * r.predicted_delta),
        ),
    ];
    // The anomaly is only claimed when the run can resolve it: the weak
    // value sits at least six expected deltas above the largest eigenvalue.
    let expected_delta = cfg.sigma / (n * rate).sqrt();
    if r.predicted_mean - 1.0 >= 6.0 * expected_delta {
        checks.push(Check::new(
            "mean exceeds 1 + 3 stderr",
            r.mean > 1.0 + 3.0 * r.stderr,
            format!("{} vs {}", r.mean, 1.0 + 3.0 * r.stderr),
        ));
    }
    let line = format!(
        "anomaly: accepted={}/{} rate={:.4} mean={:.6} predicted={:.6} delta={:.4} z={:.3}",
        r.accepted_count, cfg.n, r.acceptance_rate, r.mean, r.predicted_mean, r.predicted_delta, r.z_score
    );
    Ok(RunSummary { line, checks })
}

fn write_single_report(cfg: &ScenarioConfig, out: &mut dyn Write, r: &ExperimentReport) -> io::Result<()> {
    match cfg.format {
        OutputFormat::Csv => {
            out.write_all(csv_line(ExperimentReport::CSV_HEADER).as_bytes())?;
            out.write_all(csv_line(r.csv_fields()).as_bytes())
        }
        OutputFormat::Json => write_json(out, r),
    }
}

#[derive(Serialize)]
struct MatrixSeries<'a> {
    times: &'a [f64],
    /// Row-major `[re, im]` pairs per time.
    states: Vec<Vec<[f64; 2]>>,
}

fn pairs(m: &crate::linalg::CMatrix) -> Vec<[f64; 2]> {
    m.as_slice().iter().map(|z| [z.re, z.im]).collect()
}

fn decoherence(
    cfg: &ScenarioConfig,
    out: &mut dyn Write,
    record: Option<&mut dyn Write>,
) -> Result<RunSummary, RunError> {
    let rho0 = cfg.tilted_state();
    let z = Observable::pauli_z();
    let mcfg = cfg.continuous();
    mcfg.validate()?;
    let times = mcfg.record_times();
    let exact: Vec<_> = times
        .iter()
        .map(|&t| decoherence_evolve(&rho0, &z, cfg.g2, t))
        .collect::<Result<_, _>>()?;
    let c0 = cfg.phi.cos() * cfg.phi.sin();
    let closed_form_dev = times
        .iter()
        .zip(&exact)
        .map(|(&t, e)| (e.matrix()[(0, 1)].re - c0 * (-t / (2.0 * cfg.g2)).exp()).abs())
        .fold(0.0, f64::max);
    let rk4 = integrate_master_equation(&rho0, &z, cfg.g2, cfg.dt, cfg.t_final, cfg.record_every)?;
    let rk4_dev = rk4
        .iter()
        .zip(&exact)
        .map(|((_, m), e)| m.max_abs_diff(e.matrix()))
        .fold(0.0, f64::max);
    let mut checks = vec![
        Check::new(
            "off-diagonal equals cos(phi) sin(phi) exp(-t/2g2)",
            closed_form_dev <= 1e-12,
            format!("max deviation {closed_form_dev:e}"),
        ),
        Check::new(
            "RK4 within 1e-8 of closed form",
            rk4_dev <= 1e-8,
            format!("max deviation {rk4_dev:e}"),
        ),
    ];

    let offdiag_end = exact.last().expect("at least one time").matrix()[(0, 1)].re;
    let mut line = format!(
        "decoherence: offdiag(t={})={:.6e} predicted={:.6e}",
        cfg.t_final,
        offdiag_end,
        c0 * (-cfg.t_final / (2.0 * cfg.g2)).exp()
    );

    if cfg.n_traj == 0 {
        match cfg.format {
            OutputFormat::Csv => {
                let mut header = vec!["t".to_string()];
                header.extend(matrix_csv_header(2));
                out.write_all(csv_line(header).as_bytes())?;
                for (t, e) in times.iter().zip(&exact) {
                    let mut row = vec![sig17(*t)];
                    row.extend(matrix_csv_fields(e.matrix()));
                    out.write_all(csv_line(row).as_bytes())?;
                }
            }
            OutputFormat::Json => write_json(
                out,
                &MatrixSeries {
                    times: &times,
                    states: exact.iter().map(|e| pairs(e.matrix())).collect(),
                },
            )?,
        }
    } else {
        let rep = ensemble_average_check(&rho0, &z, &mcfg, cfg.n_traj, cfg.seed)?;
        let coh = rep.coherence(0, 1);
        let monotone = coh.windows(2).all(|w| w[1] < w[0]);
        let se_end = rep.stderr.last().expect("recorded").as_slice()[1].norm();
        let resolved = coh[0] - coh[coh.len() - 1] > 3.0 * se_end;
        checks.push(Check::new(
            "ensemble average within 3 se of closed form",
            rep.within_three_se,
            format!("max z {:.3}", rep.max_z),
        ));
        checks.push(Check::new(
            "ensemble off-diagonal decreases monotonically",
            monotone && resolved,
            format!(
                "from {:.6} to {:.6}, final se {:.2e}",
                coh[0],
                coh[coh.len() - 1],
                se_end
            ),
        ));
        match cfg.format {
            OutputFormat::Csv => {
                let mut header = vec!["t".to_string()];
                let h = matrix_csv_header(2);
                header.extend(h.iter().cloned());
                header.extend(h.iter().map(|c| format!("mean_{c}")));
                header.extend(h.iter().map(|c| format!("se_{c}")));
                out.write_all(csv_line(header).as_bytes())?;
                for k in 0..rep.times.len() {
                    let mut row = vec![sig17(rep.times[k])];
                    row.extend(matrix_csv_fields(&rep.reference[k]));
                    row.extend(matrix_csv_fields(&rep.mean[k]));
                    row.extend(matrix_csv_fields(&rep.stderr[k]));
                    out.write_all(csv_line(row).as_bytes())?;
                }
            }
            OutputFormat::Json => {
                #[derive(Serialize)]
                struct Ensemble<'a> {
                    times: &'a [f64],
                    reference: Vec<Vec<[f64; 2]>>,
                    mean: Vec<Vec<[f64; 2]>>,
                    stderr: Vec<Vec<[f64; 2]>>,
                    max_deviation: f64,
                    max_z: f64,
                }
                write_json(
                    out,
                    &Ensemble {
                        times: &rep.times,
                        reference: rep.reference.iter().map(pairs).collect(),
                        mean: rep.mean.iter().map(pairs).collect(),
                        stderr: rep.stderr.iter().map(pairs).collect(),
                        max_deviation: rep.max_deviation,
                        max_z: rep.max_z,
                    },
                )?
            }
        }
        line.push_str(&format!(" ensemble n_traj={} max_z={:.3}", cfg.n_traj, rep.max_z));
    }
    if let Some(rec) = record {
        let mut rng = SeededRng::new(derive_run_seed(cfg.seed, 0));
        quantum_trajectory(&rho0, &z, &mcfg, &mut rng)?.write_csv(rec)?;
    }
    Ok(RunSummary { line, checks })
}

fn collapse(cfg: &ScenarioConfig, out: &mut dyn Write, record: Option<&mut dyn Write>) -> Result<RunSummary, RunError> {
    let mcfg = cfg.continuous();
    let hist = if cfg.classical {
        let (s, f) = (cfg.classical_state(), cfg.phase_function());
        if let Some(rec) = record {
            let mut rng = SeededRng::new(derive_run_seed(cfg.seed, 0));
            classical_trajectory(&s, &f, &mcfg, &mut rng)?.write_csv(rec)?;
        }
        run_classical_collapse_statistics(&s, &f, &mcfg, cfg.n_traj, cfg.seed)?
    } else {
        let (rho0, z) = (cfg.tilted_state(), Observable::pauli_z());
        if let Some(rec) = record {
            let mut rng = SeededRng::new(derive_run_seed(cfg.seed, 0));
            quantum_trajectory(&rho0, &z, &mcfg, &mut rng)?.write_csv(rec)?;
        }
        run_collapse_statistics(&rho0, &z, &mcfg, cfg.n_traj, cfg.seed)?
    };
    match cfg.format {
        OutputFormat::Csv => hist.write_csv(&mut *out)?,
        OutputFormat::Json => write_json(out, &hist)?,
    }
    let checks = vec![
        Check::new(
            "at least 99% of trajectories collapsed",
            hist.convergence_fraction() >= 0.99,
            format!("{}/{}", hist.converged, hist.total),
        ),
        Check::new(
            "frequencies within 3 se of the initial weights",
            hist.within(3.0),
            format!("{:?} vs {:?}", hist.frequencies, hist.predicted),
        ),
    ];
    let detail: Vec<String> = (0..hist.eigenvalues.len())
        .map(|k| {
            format!(
                "{}: {:.4} (predicted {:.4})",
                hist.eigenvalues[k], hist.frequencies[k], hist.predicted[k]
            )
        })
        .collect();
    let line = format!(
        "collapse{}: converged={}/{} {}",
        if cfg.classical { " (classical)" } else { "" },
        hist.converged,
        hist.total,
        detail.join(", ")
    );
    Ok(RunSummary { line, checks })
}

fn classical_continuous(
    cfg: &ScenarioConfig,
    out: &mut dyn Write,
    record: Option<&mut dyn Write>,
) -> Result<RunSummary, RunError> {
    let (s, f) = (cfg.classical_state(), cfg.phase_function());
    let mcfg = cfg.continuous();
    let rec0 = {
        let mut rng = SeededRng::new(derive_run_seed(cfg.seed, 0));
        classical_trajectory(&s, &f, &mcfg, &mut rng)?
    };
    if let Some(w) = record {
        rec0.write_csv(w)?;
    }
    if cfg.n_traj == 1 {
        match cfg.format {
            OutputFormat::Csv => rec0.write_csv(&mut *out)?,
            OutputFormat::Json => {
                #[derive(Serialize)]
                struct Record<'a> {
                    times: &'a [f64],
                    alpha: &'a [f64],
                    weights: Vec<&'a [f64]>,
                }
                write_json(
                    out,
                    &Record {
                        times: &rec0.times,
                        alpha: &rec0.alpha,
                        weights: rec0.states.iter().map(|s| s.weights()).collect(),
                    },
                )?
            }
        }
        let fin = rec0.final_state().weights();
        let line = format!(
            "classical-continuous: t={} alpha={:.6} final weights={:?}",
            cfg.t_final,
            rec0.alpha.last().expect("recorded"),
            fin
        );
        return Ok(RunSummary { line, checks: vec![] });
    }
    let rep = classical_ensemble_average(&s, &f, &mcfg, cfg.n_traj, cfg.seed)?;
    match cfg.format {
        OutputFormat::Csv => {
            let k = s.len();
            let mut header = vec!["t".to_string()];
            header.extend((0..k).map(|i| format!("mean_w_{i}")));
            header.extend((0..k).map(|i| format!("se_w_{i}")));
            out.write_all(csv_line(header).as_bytes())?;
            for (ti, t) in rep.times.iter().enumerate() {
                let mut row = vec![sig17(*t)];
                row.extend(rep.mean[ti].iter().map(|&x| sig17(x)));
                row.extend(rep.stderr[ti].iter().map(|&x| sig17(x)));
                out.write_all(csv_line(row).as_bytes())?;
            }
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Ensemble<'a> {
                times: &'a [f64],
                mean: &'a [Vec<f64>],
                stderr: &'a [Vec<f64>],
                initial: &'a [f64],
                max_z: f64,
            }
            write_json(
                out,
                &Ensemble {
                    times: &rep.times,
                    mean: &rep.mean,
                    stderr: &rep.stderr,
                    initial: &rep.initial,
                    max_z: rep.max_z,
                },
            )?
        }
    }
    let checks = vec![Check::new(
        "ensemble weights within 3 se of initial weights",
        rep.within_three_se,
        format!("max z {:.3}", rep.max_z),
    )];
    let line = format!(
        "classical-continuous: n_traj={} final mean weights={:?} initial={:?} max_z={:.3}",
        cfg.n_traj,
        rep.mean.last().expect("recorded"),
        rep.initial,
        rep.max_z
    );
    Ok(RunSummary { line, checks })
}

fn meter_check(cfg: &ScenarioConfig, out: &mut dyn Write) -> Result<RunSummary, RunError> {
    let rep = meter_equivalence_check(cfg.n, 100, cfg.seed)?;
    match cfg.format {
        OutputFormat::Csv => rep.write_csv(&mut *out)?,
        OutputFormat::Json => write_json(out, &rep)?,
    }
    let checks = vec![Check::new(
        "meter model within 1e-12",
        rep.max_abs_diff <= 1e-12,
        format!("max deviation {:e}", rep.max_abs_diff),
    )];
    let line = format!(
        "meter-check: cases={} grid={} max |direct - meter| = {:e}",
        rep.cases.len(),
        rep.grid_points,
        rep.max_abs_diff
    );
    Ok(RunSummary { line, checks })
}

/// Executes a validated configuration: output goes to `--output` (or
/// standard output), the summary to standard output (or standard error
/// when data occupies standard output). Returns the exit status.
pub fn run_scenario(cfg: &ScenarioConfig) -> i32 {
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_IO;
        }
    };
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &ScenarioConfig) -> i32 {
    let mut data: Box<dyn Write> = match &cfg.output {
        Some(path) => match fs::File::create(path) {
            Ok(f) => Box::new(io::BufWriter::new(f)),
            Err(e) => {
                eprintln!("error: cannot create {}: {e}", path.display());
                return EXIT_IO;
            }
        },
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    };
    let mut record_file = match &cfg.record {
        Some(path) => match fs::File::create(path) {
            Ok(f) => Some(io::BufWriter::new(f)),
            Err(e) => {
                eprintln!("error: cannot create {}: {e}", path.display());
                return EXIT_IO;
            }
        },
        None => None,
    };
    let result = execute(cfg, &mut *data, record_file.as_mut().map(|w| w as &mut dyn Write));
    let flushed = data
        .flush()
        .and_then(|_| record_file.as_mut().map_or(Ok(()), |w| w.flush()));
    drop(data);
    let say = |msg: &str| {
        if cfg.output.is_some() {
            println!("{msg}");
        } else {
            eprintln!("{msg}");
        }
    };
    match (result, flushed) {
        (Err(e), _) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        (Ok(_), Err(e)) => {
            eprintln!("error: i/o error: {e}");
            EXIT_IO
        }
        (Ok(summary), Ok(())) => {
            say(&summary.line);
            if !cfg.assert {
                return EXIT_OK;
            }
            let mut ok = true;
            for c in &summary.checks {
                say(&format!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                ));
                ok &= c.passed;
            }
            if ok {
                EXIT_OK
            } else {
                EXIT_FAILED
            }
        }
    }
}

/// Entry point shared by the binary: parse, validate, run.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let raw = match RawArgs::try_parse_from(args) {
        Ok(r) => r,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match validate_config(&raw) {
        Ok(cfg) => run_scenario(&cfg),
        Err(e) => {
            eprintln!("{e}");
            EXIT_INVALID
        }
    }
}
