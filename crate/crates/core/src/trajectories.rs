//! Time-continuous measurement.
//!
//! Conditional states under continuous monitoring of an observable follow
//! coupled Itô equations for the integrated outcome `α_t` and the state,
//! driven by one shared Wiener increment per step:
//!
//! ```text
//! classical  dα = ⟨A⟩ dt + g dW        dρ = g⁻¹ (A − ⟨A⟩) ρ dW
//! quantum    dα = ⟨Â⟩ dt + g dW        dρ̂ = −(1/8g²)[Â,[Â,ρ̂]] dt
//!                                           + g⁻¹ (Herm(Âρ̂) − ⟨Â⟩ρ̂) dW
//! ```
//!
//! The classical filter is integrated with Euler–Maruyama. The quantum
//! equation has two integrators, see [`QuantumIntegrator`]: the default
//! measurement-operator form
//!
//! ```text
//! Â_c = Â − ⟨Â⟩,   M = 1 − (dt/8g²) Â_c² + (dW/2g) Â_c,   ρ̂' = Mρ̂M† / tr(Mρ̂M†)
//! ```
//!
//! which agrees with the Euler–Maruyama increment to first order, and the
//! plain Euler–Maruyama step. Plain Euler leaves the positive cone and the
//! eigenvalue clipping that pulls it back shrinks coherences on average, a
//! bias of order √dt in the ensemble mean.
//!
//! After every quantum step the raw matrix is repaired (Hermitized,
//! negative eigenvalues clipped, trace renormalized, in that order); the
//! repair magnitudes are tracked in [`RepairLog`]. The ensemble average of
//! the quantum equation obeys the decoherence master equation, solved here
//! in closed form by [`decoherence_evolve`] and by RK4 for cross-checking.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::classical::{classical_mean, ClassicalState, PhaseFunction};
use crate::error::{Error, Result};
use crate::format::{csv_line, sig17};
use crate::linalg::{eigh, is_positive_definite_shifted, CMatrix};
use crate::quantum::{quantum_mean, DensityOperator, Observable};
use crate::rng::{derive_run_seed, SeededRng};

/// Raw-step deviations beyond this count as unstable.
const UNSTABLE_THRESHOLD: f64 = 0.1;
/// Fraction of unstable steps tolerated before a run is rejected.
const UNSTABLE_FRACTION: f64 = 0.01;
/// Relative size of negative eigenvalues treated as round-off in repairs.
const ROUNDING: f64 = 1e-12;

/// Discretization of the quantum filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantumIntegrator {
    /// Normalized measurement-operator update `Mρ̂M†`; positivity preserving.
    #[default]
    Kraus,
    /// Raw Euler–Maruyama update followed by repair.
    EulerMaruyama,
}

/// Integration parameters for continuous measurement at rate `g²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousMeasurementConfig {
    pub g2: f64,
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
    /// Ignored by the classical filter.
    pub integrator: QuantumIntegrator,
}

impl ContinuousMeasurementConfig {
    pub fn new(g2: f64, dt: f64, t_final: f64, record_every: usize) -> Result<Self> {
        let cfg = Self {
            g2,
            dt,
            t_final,
            record_every,
            integrator: QuantumIntegrator::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_integrator(self, integrator: QuantumIntegrator) -> Self {
        Self { integrator, ..self }
    }

    /// `dt = 1e-3 g²`.
    pub fn with_default_dt(g2: f64, t_final: f64, record_every: usize) -> Result<Self> {
        Self::new(g2, 1e-3 * g2, t_final, record_every)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.g2 > 0.0 && self.g2.is_finite()) {
            return bad(format!("g2 must be positive, got {}", self.g2));
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(format!("t_final must be positive, got {}", self.t_final));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if self.dt > self.g2 / 10.0 * (1.0 + 1e-12) {
            return bad(format!(
                "dt = {} exceeds the stability bound g2/10 = {}",
                self.dt,
                self.g2 / 10.0
            ));
        }
        Ok(())
    }

    pub fn g(&self) -> f64 {
        self.g2.sqrt()
    }

    pub fn steps(&self) -> usize {
        ((self.t_final / self.dt).round() as usize).max(1)
    }

    fn is_recorded(&self, step: usize) -> bool {
        step.is_multiple_of(self.record_every) || step == self.steps()
    }

    /// Times at which snapshots are stored.
    pub fn record_times(&self) -> Vec<f64> {
        (0..=self.steps())
            .filter(|&k| self.is_recorded(k))
            .map(|k| k as f64 * self.dt)
            .collect()
    }
}

/// Bookkeeping of per-step corrections applied after the raw step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RepairLog {
    pub steps: usize,
    pub unstable_steps: usize,
    /// Largest elementwise change made by a repair.
    pub max_repair: f64,
    /// Largest total negative mass removed by clipping in one step.
    pub max_clipped: f64,
    /// Smallest purity `tr(ρ²)/(tr ρ)²` of a raw (pre-repair) quantum step,
    /// or the smallest pre-clip weight sum for classical steps.
    pub min_raw_purity: f64,
}

impl RepairLog {
    fn new() -> Self {
        Self {
            min_raw_purity: f64::INFINITY,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.unstable_steps as f64 > UNSTABLE_FRACTION * self.steps as f64 {
            return Err(Error::StepUnstable {
                unstable_steps: self.unstable_steps,
                steps: self.steps,
            });
        }
        Ok(())
    }
}

/// State types that can appear in a [`TrajectoryRecord`].
pub trait Snapshot {
    fn csv_header(&self) -> Vec<String>;
    fn csv_fields(&self) -> Vec<String>;
}

impl Snapshot for ClassicalState {
    fn csv_header(&self) -> Vec<String> {
        (0..self.len()).map(|i| format!("w_{i}")).collect()
    }

    fn csv_fields(&self) -> Vec<String> {
        self.weights().iter().map(|&w| sig17(w)).collect()
    }
}

impl Snapshot for DensityOperator {
    fn csv_header(&self) -> Vec<String> {
        matrix_csv_header(self.dim())
    }

    fn csv_fields(&self) -> Vec<String> {
        matrix_csv_fields(self.matrix())
    }
}

pub(crate) fn matrix_csv_header(dim: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(2 * dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            out.push(format!("rho_{i}_{j}_re"));
            out.push(format!("rho_{i}_{j}_im"));
        }
    }
    out
}

pub(crate) fn matrix_csv_fields(m: &CMatrix) -> Vec<String> {
    m.as_slice().iter().flat_map(|z| [sig17(z.re), sig17(z.im)]).collect()
}

/// One simulated measurement record.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord<S> {
    pub times: Vec<f64>,
    /// Integrated outcome `α_t`; `alpha[0] = 0`.
    pub alpha: Vec<f64>,
    pub states: Vec<S>,
    /// Seed of the generator that drew the Wiener increments, if any.
    pub wiener_seed: Option<u64>,
    pub repair: RepairLog,
}

impl<S: Snapshot> TrajectoryRecord<S> {
    pub fn final_state(&self) -> &S {
        self.states.last().expect("records always hold the initial state")
    }

    /// Columns `t, alpha`, then the state entries (matrices row-major with
    /// `re`/`im` pairs).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = vec!["t".to_string(), "alpha".to_string()];
        header.extend(self.states[0].csv_header());
        out.write_all(csv_line(header).as_bytes())?;
        for ((t, a), s) in self.times.iter().zip(&self.alpha).zip(&self.states) {
            let mut row = vec![sig17(*t), sig17(*a)];
            row.extend(s.csv_fields());
            out.write_all(csv_line(row).as_bytes())?;
        }
        Ok(())
    }
}

/// `steps` Wiener increments `ΔW ~ N(0, dt)`.
pub fn wiener_increments(rng: &mut SeededRng, steps: usize, dt: f64) -> Vec<f64> {
    let sd = dt.sqrt();
    (0..steps).map(|_| sd * rng.standard_normal()).collect()
}

/// Sums consecutive groups of `factor` increments: the same Wiener path
/// sampled on a grid `factor` times coarser.
pub fn coarsen_increments(fine: &[f64], factor: usize) -> Vec<f64> {
    assert!(
        factor > 0 && fine.len().is_multiple_of(factor),
        "path length must be a multiple of the factor"
    );
    fine.chunks(factor).map(|c| c.iter().sum()).collect()
}

/// One Euler step of the classical filter; returns the pre-step mean and
/// whether any relative weight update exceeded one in magnitude.
fn classical_step(weights: &mut [f64], values: &[f64], g: f64, dw: f64) -> (f64, bool, f64) {
    let mean: f64 = weights.iter().zip(values).map(|(w, a)| w * a).sum();
    let mut unstable = false;
    for (w, a) in weights.iter_mut().zip(values) {
        let rel = (a - mean) * dw / g;
        unstable |= rel.abs() > 1.0;
        *w += rel * *w;
    }
    let mut clipped = 0.0;
    for w in weights.iter_mut() {
        if *w < 0.0 {
            clipped -= *w;
            *w = 0.0;
        }
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    (mean, unstable, clipped)
}

/// Classical continuous measurement (Kushner–Stratonovich filter for a
/// finite phase space).
pub fn classical_trajectory(
    state0: &ClassicalState,
    f: &PhaseFunction,
    cfg: &ContinuousMeasurementConfig,
    rng: &mut SeededRng,
) -> Result<TrajectoryRecord<ClassicalState>> {
    let sd = cfg.dt.sqrt();
    let seed = rng.seed();
    let mut rec = run_classical(state0, f, cfg, || sd * rng.standard_normal())?;
    rec.wiener_seed = Some(seed);
    Ok(rec)
}

/// [`classical_trajectory`] driven by explicit increments (`cfg.steps()` of them).
pub fn classical_trajectory_with_increments(
    state0: &ClassicalState,
    f: &PhaseFunction,
    cfg: &ContinuousMeasurementConfig,
    increments: &[f64],
) -> Result<TrajectoryRecord<ClassicalState>> {
    check_increments(cfg, increments)?;
    let mut it = increments.iter().copied();
    run_classical(state0, f, cfg, || it.next().expect("length checked"))
}

fn run_classical(
    state0: &ClassicalState,
    f: &PhaseFunction,
    cfg: &ContinuousMeasurementConfig,
    mut next_dw: impl FnMut() -> f64,
) -> Result<TrajectoryRecord<ClassicalState>> {
    cfg.validate()?;
    classical_mean(state0, f)?;
    let g = cfg.g();
    let steps = cfg.steps();
    let mut weights = state0.weights().to_vec();
    let mut alpha = 0.0;
    let mut log = RepairLog::new();
    let mut rec = TrajectoryRecord {
        times: vec![0.0],
        alpha: vec![0.0],
        states: vec![state0.clone()],
        wiener_seed: None,
        repair: log,
    };
    for step in 1..=steps {
        let dw = next_dw();
        let (mean, unstable, clipped) = classical_step(&mut weights, f.values(), g, dw);
        alpha += mean * cfg.dt + g * dw;
        log.steps += 1;
        log.unstable_steps += unstable as usize;
        log.max_clipped = log.max_clipped.max(clipped);
        log.max_repair = log.max_repair.max(clipped);
        log.min_raw_purity = log.min_raw_purity.min(1.0 + clipped);
        if cfg.is_recorded(step) {
            rec.times.push(step as f64 * cfg.dt);
            rec.alpha.push(alpha);
            rec.states.push(ClassicalState::from_raw_unchecked(weights.clone()));
        }
    }
    log.check()?;
    rec.repair = log;
    Ok(rec)
}

/// Precomputed pieces of the quantum step for one observable.
struct QuantumStepper<'a> {
    obs: &'a CMatrix,
    obs_sq: CMatrix,
    g: f64,
    dt: f64,
}

impl<'a> QuantumStepper<'a> {
    fn new(obs: &'a Observable, g2: f64, dt: f64) -> Self {
        let m = obs.matrix();
        Self {
            obs: m,
            obs_sq: m * m,
            g: g2.sqrt(),
            dt,
        }
    }

    /// Raw Euler–Maruyama update and the pre-step mean `⟨Â⟩`.
    fn raw_step(&self, rho: &CMatrix, dw: f64) -> (CMatrix, f64) {
        // ρÂ and ρÂ² are the adjoints of Âρ and Â²ρ.
        let a_rho = self.obs * rho;
        let mean = a_rho.trace().re;
        let a_rho_a = &a_rho * self.obs;
        let a2_rho = &self.obs_sq * rho;

        let drift = -self.dt / (8.0 * self.g * self.g);
        let diff = dw / self.g;
        let n = rho.dim();
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let double_comm = a2_rho[(i, j)] - a_rho_a[(i, j)] * 2.0 + a2_rho[(j, i)].conj();
                let herm = (a_rho[(i, j)] + a_rho[(j, i)].conj()) * 0.5 - rho[(i, j)] * mean;
                out[(i, j)] = rho[(i, j)] + double_comm * drift + herm * diff;
            }
        }
        (out, mean)
    }

    /// Unnormalized `Mρ̂M†` and the pre-step mean `⟨Â⟩`, with `M` built
    /// from the centred observable `Â − ⟨Â⟩` so that `tr(Mρ̂M†) − 1` is
    /// `O(dt)` and insensitive to offsets of `Â`.
    fn kraus_step(&self, rho: &CMatrix, dw: f64) -> (CMatrix, f64) {
        let mean = self.obs.trace_product(rho).re;
        let c2 = -self.dt / (8.0 * self.g * self.g);
        let c1 = dw / (2.0 * self.g);
        // (Â − m)² = Â² − 2mÂ + m².
        let n = rho.dim();
        let mut m = CMatrix::identity(n);
        for i in 0..n {
            for j in 0..n {
                let a = self.obs[(i, j)];
                let centred_sq = self.obs_sq[(i, j)] - a * (2.0 * mean);
                m[(i, j)] += centred_sq * c2 + a * c1;
            }
            m[(i, i)] += Complex64::from(mean * mean * c2 - mean * c1);
        }
        // M is Hermitian, so Mρ̂M† = Mρ̂M.
        let m_rho = &m * rho;
        (&m_rho * &m, mean)
    }

    fn step(&self, integrator: QuantumIntegrator, rho: &CMatrix, dw: f64) -> (CMatrix, f64) {
        match integrator {
            QuantumIntegrator::Kraus => self.kraus_step(rho, dw),
            QuantumIntegrator::EulerMaruyama => self.raw_step(rho, dw),
        }
    }
}

/// Result of repairing a raw step into a density operator.
#[derive(Debug, Clone)]
pub struct Repair {
    pub state: DensityOperator,
    /// `|tr ρ_raw − 1|`.
    pub trace_drift: f64,
    /// Smallest eigenvalue of the Hermitized raw matrix; only computed when
    /// that matrix is not positive semidefinite up to round-off.
    pub min_eigenvalue: Option<f64>,
    /// Total negative eigenvalue mass removed.
    pub clipped: f64,
    /// Largest elementwise change `|ρ_repaired − ρ_raw / tr ρ_raw|`.
    pub magnitude: f64,
}

/// Hermitize, clip negative eigenvalues at zero, renormalize the trace.
/// Eigenvalues above `−1e-12 tr ρ` count as round-off and are kept.
pub fn repair_state(raw: &CMatrix) -> Repair {
    let herm = raw.hermitian_part();
    let trace_drift = (herm.trace().re - 1.0).abs();
    // Eigenvalues above −ROUNDING·tr are left alone: rank-deficient states
    // sit on the boundary of the cone by construction.
    let (fixed, min_eigenvalue, clipped) = if is_positive_definite_shifted(&herm, ROUNDING * herm.trace().re.abs()) {
        (herm, None, 0.0)
    } else {
        let eig = eigh(&herm);
        let clipped: f64 = eig.values.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
        let n = herm.dim();
        let mut m = CMatrix::zeros(n);
        for (k, &v) in eig.values.iter().enumerate() {
            if v <= 0.0 {
                continue;
            }
            for i in 0..n {
                let vi = eig.vectors[(i, k)] * v;
                for j in 0..n {
                    m[(i, j)] += vi * eig.vectors[(j, k)].conj();
                }
            }
        }
        (m.hermitian_part(), Some(eig.values[0]), clipped)
    };
    let fixed = fixed.scale(1.0 / fixed.trace().re);
    let raw_scale = 1.0 / raw.trace().re;
    let magnitude = fixed
        .as_slice()
        .iter()
        .zip(raw.as_slice())
        .map(|(f, r)| (f - r * raw_scale).norm())
        .fold(0.0, f64::max);
    Repair {
        state: DensityOperator::from_trusted(fixed),
        trace_drift,
        min_eigenvalue,
        clipped,
        magnitude,
    }
}

/// One raw (pre-repair) Euler–Maruyama step of the conditional quantum
/// state; exposed for integrator diagnostics.
pub fn quantum_em_step(rho: &CMatrix, obs: &Observable, g2: f64, dt: f64, dw: f64) -> CMatrix {
    QuantumStepper::new(obs, g2, dt).raw_step(rho, dw).0
}

/// One unnormalized measurement-operator step `Mρ̂M†`; after normalization
/// it matches [`quantum_em_step`] to first order in `dt`.
pub fn quantum_kraus_step(rho: &CMatrix, obs: &Observable, g2: f64, dt: f64, dw: f64) -> CMatrix {
    QuantumStepper::new(obs, g2, dt).kraus_step(rho, dw).0
}

/// Quantum continuous measurement of `obs` starting from `rho0`.
pub fn quantum_trajectory(
    rho0: &DensityOperator,
    obs: &Observable,
    cfg: &ContinuousMeasurementConfig,
    rng: &mut SeededRng,
) -> Result<TrajectoryRecord<DensityOperator>> {
    let sd = cfg.dt.sqrt();
    let seed = rng.seed();
    let mut rec = run_quantum(rho0, obs, cfg, || sd * rng.standard_normal())?;
    rec.wiener_seed = Some(seed);
    Ok(rec)
}

/// [`quantum_trajectory`] driven by explicit increments (`cfg.steps()` of them).
pub fn quantum_trajectory_with_increments(
    rho0: &DensityOperator,
    obs: &Observable,
    cfg: &ContinuousMeasurementConfig,
    increments: &[f64],
) -> Result<TrajectoryRecord<DensityOperator>> {
    check_increments(cfg, increments)?;
    let mut it = increments.iter().copied();
    run_quantum(rho0, obs, cfg, || it.next().expect("length checked"))
}

fn run_quantum(
    rho0: &DensityOperator,
    obs: &Observable,
    cfg: &ContinuousMeasurementConfig,
    mut next_dw: impl FnMut() -> f64,
) -> Result<TrajectoryRecord<DensityOperator>> {
    cfg.validate()?;
    quantum_mean(rho0, obs)?;
    let stepper = QuantumStepper::new(obs, cfg.g2, cfg.dt);
    let g = cfg.g();
    let mut rho = rho0.clone();
    let mut alpha = 0.0;
    let mut log = RepairLog::new();
    let mut rec = TrajectoryRecord {
        times: vec![0.0],
        alpha: vec![0.0],
        states: vec![rho0.clone()],
        wiener_seed: None,
        repair: log,
    };
    for step in 1..=cfg.steps() {
        let dw = next_dw();
        let (raw, mean) = stepper.step(cfg.integrator, rho.matrix(), dw);
        alpha += mean * cfg.dt + g * dw;
        let tr = raw.trace().re;
        let purity = raw.trace_product(&raw).re / (tr * tr);
        let fix = repair_state(&raw);
        log.steps += 1;
        log.unstable_steps += (fix.trace_drift > UNSTABLE_THRESHOLD
            || fix.min_eigenvalue.is_some_and(|v| v < -UNSTABLE_THRESHOLD)) as usize;
        log.max_repair = log.max_repair.max(fix.magnitude);
        log.max_clipped = log.max_clipped.max(fix.clipped);
        log.min_raw_purity = log.min_raw_purity.min(purity);
        rho = fix.state;
        if cfg.is_recorded(step) {
            rec.times.push(step as f64 * cfg.dt);
            rec.alpha.push(alpha);
            rec.states.push(rho.clone());
        }
    }
    log.check()?;
    rec.repair = log;
    Ok(rec)
}

fn check_increments(cfg: &ContinuousMeasurementConfig, increments: &[f64]) -> Result<()> {
    if increments.len() != cfg.steps() {
        return Err(Error::InvalidParameter(format!(
            "expected {} Wiener increments, got {}",
            cfg.steps(),
            increments.len()
        )));
    }
    Ok(())
}

/// Exact solution of `dρ/dt = −(1/8g²)[Â,[Â,ρ]]`: in the eigenbasis of `Â`
/// the `(λ, μ)` block decays by `exp(−(a^λ − a^μ)² t / 8g²)`.
pub fn decoherence_evolve(rho0: &DensityOperator, obs: &Observable, g2: f64, t: f64) -> Result<DensityOperator> {
    quantum_mean(rho0, obs)?;
    if !(g2 > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need g2 > 0 and t >= 0, got g2={g2}, t={t}"
        )));
    }
    let sd = obs.spectrum();
    let n = rho0.dim();
    let mut out = CMatrix::zeros(n);
    for (al, pl) in sd.iter() {
        let pl_rho = pl * rho0.matrix();
        for (am, pm) in sd.iter() {
            let factor = (-(al - am).powi(2) * t / (8.0 * g2)).exp();
            out = &out + &(&pl_rho * pm).scale(factor);
        }
    }
    Ok(DensityOperator::from_trusted(out.hermitian_part()))
}

/// Classical RK4 integration of the decoherence master equation; returns
/// `(t, ρ(t))` every `record_every` steps (and at the end).
pub fn integrate_master_equation(
    rho0: &DensityOperator,
    obs: &Observable,
    g2: f64,
    dt: f64,
    t_final: f64,
    record_every: usize,
) -> Result<Vec<(f64, CMatrix)>> {
    quantum_mean(rho0, obs)?;
    if !(g2 > 0.0 && dt > 0.0 && t_final >= 0.0) || record_every == 0 {
        return Err(Error::InvalidParameter(
            "need g2 > 0, dt > 0, t_final >= 0, record_every >= 1".into(),
        ));
    }
    let a = obs.matrix();
    let c = -1.0 / (8.0 * g2);
    let rhs = |r: &CMatrix| a.commutator(&a.commutator(r)).scale(c);
    let steps = (t_final / dt).round() as usize;
    let mut rho = rho0.matrix().clone();
    let mut out = vec![(0.0, rho.clone())];
    for step in 1..=steps {
        let k1 = rhs(&rho);
        let k2 = rhs(&(&rho + &k1.scale(dt / 2.0)));
        let k3 = rhs(&(&rho + &k2.scale(dt / 2.0)));
        let k4 = rhs(&(&rho + &k3.scale(dt)));
        let incr = &(&k1 + &k4) + &(&k2 + &k3).scale(2.0);
        rho = &rho + &incr.scale(dt / 6.0);
        if step % record_every == 0 || step == steps {
            out.push((step as f64 * dt, rho.clone()));
        }
    }
    Ok(out)
}

/// Ensemble average of quantum trajectories compared against the exact
/// decoherence solution.
#[derive(Debug, Clone)]
pub struct EnsembleAverageReport {
    pub n_traj: usize,
    pub times: Vec<f64>,
    pub mean: Vec<CMatrix>,
    /// Standard error of each entry, real and imaginary parts separately.
    pub stderr: Vec<CMatrix>,
    /// Closed-form `E[ρ_t]` at the recorded times.
    pub reference: Vec<CMatrix>,
    /// Largest `|mean − reference|` over entries and times.
    pub max_deviation: f64,
    /// Largest deviation measured in standard errors (components with zero
    /// standard error are compared exactly and excluded).
    pub max_z: f64,
    /// Every component satisfies `|mean − reference| ≤ 3 se`.
    pub within_three_se: bool,
    /// Largest gap between the RK4 solution at `cfg.dt` and the closed form.
    pub rk4_max_deviation: f64,
}

impl EnsembleAverageReport {
    /// `|E[ρ]_{ij}|` at each recorded time.
    pub fn coherence(&self, i: usize, j: usize) -> Vec<f64> {
        self.mean.iter().map(|m| m[(i, j)].norm()).collect()
    }
}

pub fn ensemble_average_check(
    rho0: &DensityOperator,
    obs: &Observable,
    cfg: &ContinuousMeasurementConfig,
    n_traj: usize,
    seed: u64,
) -> Result<EnsembleAverageReport> {
    if n_traj < 100 {
        return Err(Error::InvalidParameter(format!(
            "n_traj must be at least 100, got {n_traj}"
        )));
    }
    let runs: Vec<TrajectoryRecord<DensityOperator>> = (0..n_traj)
        .into_par_iter()
        .map(|k| {
            let mut rng = SeededRng::new(derive_run_seed(seed, k as u64));
            quantum_trajectory(rho0, obs, cfg, &mut rng)
        })
        .collect::<Result<_>>()?;
    let times = runs[0].times.clone();
    let dim = rho0.dim();
    let nt = n_traj as f64;

    let mut mean = Vec::with_capacity(times.len());
    let mut stderr = Vec::with_capacity(times.len());
    for ti in 0..times.len() {
        let mut sum = CMatrix::zeros(dim);
        let mut sum_sq = CMatrix::zeros(dim);
        for run in &runs {
            let m = run.states[ti].matrix();
            for i in 0..dim {
                for j in 0..dim {
                    let z = m[(i, j)];
                    sum[(i, j)] += z;
                    sum_sq[(i, j)] += Complex64::new(z.re * z.re, z.im * z.im);
                }
            }
        }
        let mu = sum.scale(1.0 / nt);
        let mut se = CMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                let m = mu[(i, j)];
                let s = sum_sq[(i, j)];
                let var = |s2: f64, m: f64| ((s2 / nt - m * m) * nt / (nt - 1.0)).max(0.0);
                se[(i, j)] = Complex64::new((var(s.re, m.re) / nt).sqrt(), (var(s.im, m.im) / nt).sqrt());
            }
        }
        mean.push(mu);
        stderr.push(se);
    }

    let reference: Vec<CMatrix> = times
        .iter()
        .map(|&t| decoherence_evolve(rho0, obs, cfg.g2, t).map(|r| r.matrix().clone()))
        .collect::<Result<_>>()?;

    let mut max_deviation = 0.0f64;
    let mut max_z = 0.0f64;
    let mut within = true;
    for ((mu, se), r) in mean.iter().zip(&stderr).zip(&reference) {
        for ((m, s), e) in mu.as_slice().iter().zip(se.as_slice()).zip(r.as_slice()) {
            for (dev, err) in [((m.re - e.re).abs(), s.re), ((m.im - e.im).abs(), s.im)] {
                max_deviation = max_deviation.max(dev);
                if err > 0.0 {
                    max_z = max_z.max(dev / err);
                }
                within &= dev <= 3.0 * err + 1e-12;
            }
        }
    }

    let rk4 = integrate_master_equation(rho0, obs, cfg.g2, cfg.dt, cfg.t_final, 1)?;
    let mut rk4_max_deviation = 0.0f64;
    for (t, m) in rk4.iter().step_by(cfg.record_every.max(1)) {
        let exact = decoherence_evolve(rho0, obs, cfg.g2, *t)?;
        rk4_max_deviation = rk4_max_deviation.max(m.max_abs_diff(exact.matrix()));
    }

    Ok(EnsembleAverageReport {
        n_traj,
        times,
        mean,
        stderr,
        reference,
        max_deviation,
        max_z,
        within_three_se: within,
        rk4_max_deviation,
    })
}

/// Ensemble average of classical trajectories compared against the initial
/// weights (classical monitoring leaves the unconditioned ensemble
/// unchanged).
#[derive(Debug, Clone)]
pub struct ClassicalEnsembleReport {
    pub n_traj: usize,
    pub times: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    pub max_z: f64,
    pub within_three_se: bool,
}

pub fn classical_ensemble_average(
    state0: &ClassicalState,
    f: &PhaseFunction,
    cfg: &ContinuousMeasurementConfig,
    n_traj: usize,
    seed: u64,
) -> Result<ClassicalEnsembleReport> {
    if n_traj < 100 {
        return Err(Error::InvalidParameter(format!(
            "n_traj must be at least 100, got {n_traj}"
        )));
    }
    let runs: Vec<TrajectoryRecord<ClassicalState>> = (0..n_traj)
        .into_par_iter()
        .map(|k| {
            let mut rng = SeededRng::new(derive_run_seed(seed, k as u64));
            classical_trajectory(state0, f, cfg, &mut rng)
        })
        .collect::<Result<_>>()?;
    let times = runs[0].times.clone();
    let n = state0.len();
    let nt = n_traj as f64;
    let mut mean = Vec::new();
    let mut stderr = Vec::new();
    let mut max_z = 0.0f64;
    let mut within = true;
    for ti in 0..times.len() {
        let mut mu = vec![0.0; n];
        let mut sq = vec![0.0; n];
        for run in &runs {
            for (k, w) in run.states[ti].weights().iter().enumerate() {
                mu[k] += w;
                sq[k] += w * w;
            }
        }
        let mut se = vec![0.0; n];
        for k in 0..n {
            mu[k] /= nt;
            let var = ((sq[k] / nt - mu[k] * mu[k]) * nt / (nt - 1.0)).max(0.0);
            se[k] = (var / nt).sqrt();
            let dev = (mu[k] - state0.weights()[k]).abs();
            if se[k] > 0.0 {
                max_z = max_z.max(dev / se[k]);
            }
            within &= dev <= 3.0 * se[k] + 1e-12;
        }
        mean.push(mu);
        stderr.push(se);
    }
    Ok(ClassicalEnsembleReport {
        n_traj,
        times,
        mean,
        stderr,
        initial: state0.weights().to_vec(),
        max_z,
        within_three_se: within,
    })
}
