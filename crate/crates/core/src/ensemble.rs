//! Seeded Monte Carlo experiments and their statistics.
//!
//! Every run `k` of an experiment with master seed `s` draws from its own
//! generator seeded with `derive_run_seed(s, k)`, so results do not depend
//! on how runs are scheduled across threads. Aggregation always walks the
//! runs in index order.

use std::f64::consts::FRAC_PI_2;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{classical_spread, noisy_measure, ClassicalState, PhaseFunction, RunOutcome};
use crate::error::{Error, Result};
use crate::format::{csv_line, sig17};
use crate::linalg::{eigh, CMatrix, HermitianMatrix};
use crate::quantum::{
    born_probabilities, meter_model_density, outcome_density, postselected_quantum_run, quantum_spread, AnomalySetup,
    DensityOperator, MeterModel, Observable,
};
use crate::rng::SeededRng;
use crate::trajectories::{classical_trajectory, quantum_trajectory, ContinuousMeasurementConfig};

pub use crate::rng::derive_run_seed;

/// Endpoint spread below which a trajectory counts as collapsed.
pub const COLLAPSE_SPREAD_TOL: f64 = 1e-6;
/// Largest tolerated fraction of trajectories that fail to collapse.
pub const MAX_UNCONVERGED_FRACTION: f64 = 0.01;

/// `N` measurements of precision `σ` at fixed `Δ² = σ²/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakLimitPlan {
    pub sigma: f64,
    pub n: usize,
    pub delta2: f64,
}

impl WeakLimitPlan {
    pub fn new(sigma: f64, n: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        Ok(Self {
            sigma,
            n,
            delta2: sigma * sigma / n as f64,
        })
    }

    /// The plan with the given `Δ²` held fixed: `σ = √(Δ² N)`.
    pub fn at_fixed_delta2(delta2: f64, n: usize) -> Result<Self> {
        if !(delta2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delta2 must be positive, got {delta2}"
            )));
        }
        Self::new((delta2 * n as f64).sqrt(), n)
    }

    pub fn delta(&self) -> f64 {
        self.delta2.sqrt()
    }
}

/// Summary of one experiment: the mean `ā` of accepted outcomes against
/// its prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub accepted_count: usize,
    pub acceptance_rate: f64,
    pub mean: f64,
    /// Sample standard deviation over `√accepted_count`; zero below two
    /// accepted runs.
    pub stderr: f64,
    pub predicted_mean: f64,
    pub predicted_delta: f64,
    /// `(mean − predicted_mean) / predicted_delta`.
    pub z_score: f64,
}

impl ExperimentReport {
    fn from_outcomes(outcomes: &[f64], total: usize, predicted_mean: f64, predicted_delta: f64) -> Self {
        let m = SampleMoments::from_slice(outcomes);
        let stderr = if outcomes.len() >= 2 {
            (m.variance / outcomes.len() as f64).sqrt()
        } else {
            0.0
        };
        Self {
            accepted_count: outcomes.len(),
            acceptance_rate: outcomes.len() as f64 / total as f64,
            mean: m.mean,
            stderr,
            predicted_mean,
            predicted_delta,
            z_score: (m.mean - predicted_mean) / predicted_delta,
        }
    }

    pub const CSV_HEADER: [&'static str; 7] = [
        "accepted_count",
        "acceptance_rate",
        "mean",
        "stderr",
        "predicted_mean",
        "predicted_delta",
        "z_score",
    ];

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.accepted_count.to_string(),
            sig17(self.acceptance_rate),
            sig17(self.mean),
            sig17(self.stderr),
            sig17(self.predicted_mean),
            sig17(self.predicted_delta),
            sig17(self.z_score),
        ]
    }
}

/// Writes reports as CSV, one row per repetition, preceded by a `rep` column.
pub fn write_reports_csv<W: Write>(reports: &[ExperimentReport], mut out: W) -> io::Result<()> {
    let mut header = vec!["rep".to_string()];
    header.extend(ExperimentReport::CSV_HEADER.iter().map(|s| s.to_string()));
    out.write_all(csv_line(header).as_bytes())?;
    for (k, r) in reports.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(r.csv_fields());
        out.write_all(csv_line(row).as_bytes())?;
    }
    Ok(())
}

/// Runs `f(k, rng_k)` for `k in 0..n` in parallel; results come back in index order.
fn seeded_runs<T: Send>(n: usize, seed: u64, f: impl Fn(&mut SeededRng) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..n)
        .into_par_iter()
        .map(|k| f(&mut SeededRng::new(derive_run_seed(seed, k as u64))))
        .collect()
}

/// `N` independent noisy measurements of `f` on fresh copies of `state`;
/// `ā` is compared with `⟨A⟩_ρ` at spread `Δ`.
pub fn run_weak_limit_classical(
    state: &ClassicalState,
    f: &PhaseFunction,
    plan: &WeakLimitPlan,
    seed: u64,
) -> Result<ExperimentReport> {
    let predicted = crate::classical::classical_mean(state, f)?;
    let outcomes = seeded_runs(plan.n, seed, |rng| Ok(noisy_measure(state, f, plan.sigma, rng)?.0))?;
    Ok(ExperimentReport::from_outcomes(
        &outcomes,
        plan.n,
        predicted,
        plan.delta(),
    ))
}

/// `reps` weak-limit experiments; repetition `r` uses master seed
/// `derive_run_seed(seed, r)`.
pub fn repeat_weak_limit_classical(
    state: &ClassicalState,
    f: &PhaseFunction,
    plan: &WeakLimitPlan,
    seed: u64,
    reps: usize,
) -> Result<Vec<ExperimentReport>> {
    (0..reps)
        .map(|r| run_weak_limit_classical(state, f, plan, derive_run_seed(seed, r as u64)))
        .collect()
}

/// The anomalous weak value experiment: `n` postselected measurements of
/// `σ_x` with precision `σ`; the accepted mean is compared with `1/cos φ`
/// at spread `σ/√accepted`.
pub fn run_anomaly_experiment(phi: f64, sigma: f64, n: usize, seed: u64) -> Result<ExperimentReport> {
    if !(0.0..FRAC_PI_2).contains(&phi) || phi.cos() <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "phi must lie in [0, π/2) so that the acceptance rate cos²φ is positive, got {phi}"
        )));
    }
    crate::classical::check_sigma(sigma)?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let setup = AnomalySetup::new(phi);
    let runs = seeded_runs(n, seed, |rng| {
        postselected_quantum_run(&setup.initial, &setup.postselector, &setup.observable, sigma, rng)
    })?;
    let accepted: Vec<f64> = runs.into_iter().filter_map(RunOutcome::accepted).collect();
    if accepted.is_empty() {
        return Err(Error::NoAcceptedRuns { runs: n });
    }
    let delta = sigma / (accepted.len() as f64).sqrt();
    Ok(ExperimentReport::from_outcomes(
        &accepted,
        n,
        setup.predicted_weak_value(),
        delta,
    ))
}

/// Histogram of trajectory endpoints over the eigenvalues of the measured
/// observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseHistogram {
    pub eigenvalues: Vec<f64>,
    pub counts: Vec<usize>,
    pub frequencies: Vec<f64>,
    /// Born (or prior) weights `p^λ` of the initial state.
    pub predicted: Vec<f64>,
    /// Binomial standard errors `√(p^λ(1−p^λ)/n)`.
    pub predicted_stderr: Vec<f64>,
    pub converged: usize,
    pub total: usize,
}

impl CollapseHistogram {
    fn build(labels: Vec<f64>, predicted: Vec<f64>, endpoints: &[(usize, bool)]) -> Result<Self> {
        let total = endpoints.len();
        let mut counts = vec![0; labels.len()];
        let mut converged = 0;
        for &(label, ok) in endpoints {
            counts[label] += 1;
            converged += ok as usize;
        }
        let failed = total - converged;
        if failed as f64 > MAX_UNCONVERGED_FRACTION * total as f64 {
            return Err(Error::Unconverged { failed, total });
        }
        let n = total as f64;
        Ok(Self {
            frequencies: counts.iter().map(|&c| c as f64 / n).collect(),
            predicted_stderr: predicted.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect(),
            eigenvalues: labels,
            counts,
            predicted,
            converged,
            total,
        })
    }

    /// Every frequency lies within `k` binomial standard errors of `p^λ`.
    pub fn within(&self, k: f64) -> bool {
        self.frequencies
            .iter()
            .zip(&self.predicted)
            .zip(&self.predicted_stderr)
            .all(|((f, p), se)| (f - p).abs() <= k * se + 1e-12)
    }

    pub fn convergence_fraction(&self) -> f64 {
        self.converged as f64 / self.total as f64
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(csv_line(["eigenvalue", "count", "frequency", "predicted", "predicted_stderr"]).as_bytes())?;
        for k in 0..self.eigenvalues.len() {
            let row = [
                sig17(self.eigenvalues[k]),
                self.counts[k].to_string(),
                sig17(self.frequencies[k]),
                sig17(self.predicted[k]),
                sig17(self.predicted_stderr[k]),
            ];
            out.write_all(csv_line(row).as_bytes())?;
        }
        Ok(())
    }
}

/// Runs `n_traj` quantum trajectories and classifies each endpoint by the
/// eigenprojector carrying the most weight.
pub fn run_collapse_statistics(
    rho0: &DensityOperator,
    obs: &Observable,
    cfg: &ContinuousMeasurementConfig,
    n_traj: usize,
    seed: u64,
) -> Result<CollapseHistogram> {
    let predicted = born_probabilities(rho0, obs)?;
    let endpoints = seeded_runs(n_traj, seed, |rng| {
        let rec = quantum_trajectory(rho0, obs, cfg, rng)?;
        let fin = rec.final_state();
        let label = argmax(&born_probabilities(fin, obs)?);
        Ok((label, quantum_spread(fin, obs)? < COLLAPSE_SPREAD_TOL))
    })?;
    CollapseHistogram::build(obs.spectrum().eigenvalues().to_vec(), predicted, &endpoints)
}

/// Classical counterpart: endpoints are classified by the level of `f`
/// carrying the most weight, and compared with the prior weight of each
/// level set.
pub fn run_classical_collapse_statistics(
    state0: &ClassicalState,
    f: &PhaseFunction,
    cfg: &ContinuousMeasurementConfig,
    n_traj: usize,
    seed: u64,
) -> Result<CollapseHistogram> {
    let levels = f.levels();
    let level_mass = |s: &ClassicalState| -> Vec<f64> {
        levels
            .iter()
            .map(|&l| {
                s.weights()
                    .iter()
                    .zip(f.values())
                    .filter(|(_, &a)| a == l)
                    .map(|(w, _)| w)
                    .sum()
            })
            .collect()
    };
    let predicted = level_mass(state0);
    let endpoints = seeded_runs(n_traj, seed, |rng| {
        let rec = classical_trajectory(state0, f, cfg, rng)?;
        let fin = rec.final_state();
        Ok((
            argmax(&level_mass(fin)),
            classical_spread(fin, f)? < COLLAPSE_SPREAD_TOL,
        ))
    })?;
    CollapseHistogram::build(levels, predicted, &endpoints)
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &x)| {
                if x > best.1 {
                    (i, x)
                } else {
                    best
                }
            },
        )
        .0
}

/// Agreement between the direct outcome density and the von Neumann meter
/// model on random cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterCheckReport {
    pub cases: Vec<MeterCase>,
    pub grid_points: usize,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeterCase {
    pub dim: usize,
    pub sigma: f64,
    pub max_abs_diff: f64,
}

impl MeterCheckReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(csv_line(["case", "dim", "sigma", "max_abs_diff"]).as_bytes())?;
        for (k, c) in self.cases.iter().enumerate() {
            let row = [k.to_string(), c.dim.to_string(), sig17(c.sigma), sig17(c.max_abs_diff)];
            out.write_all(csv_line(row).as_bytes())?;
        }
        Ok(())
    }
}

/// Compares `outcome_density` with `meter_model_density` on `grid_points`
/// outcomes for each of `cases` random states and observables of dimension
/// 2 to 4 (about one observable in five has a degenerate eigenvalue).
pub fn meter_equivalence_check(cases: usize, grid_points: usize, seed: u64) -> Result<MeterCheckReport> {
    if grid_points < 2 {
        return Err(Error::InvalidParameter("grid_points must be at least 2".into()));
    }
    let cases = seeded_runs(cases, seed, |rng| {
        let dim = 2 + (rng.uniform() * 3.0) as usize;
        let rho = random_density(dim, rng);
        let degenerate = rng.uniform() < 0.2;
        let obs = random_observable(dim, rng, degenerate)?;
        let sigma = 0.1 + 2.9 * rng.uniform();
        let meter = MeterModel::new(sigma)?;
        let ev = obs.spectrum().eigenvalues();
        let (lo, hi) = (ev[0] - 4.0 * sigma, ev[ev.len() - 1] + 4.0 * sigma);
        let mut worst = 0.0f64;
        for k in 0..grid_points {
            let a = lo + (hi - lo) * k as f64 / (grid_points - 1) as f64;
            let direct = outcome_density(&rho, &obs, sigma, a)?;
            let meter = meter_model_density(&rho, &obs, &meter, a)?;
            worst = worst.max((direct - meter).abs());
        }
        Ok(MeterCase {
            dim,
            sigma,
            max_abs_diff: worst,
        })
    })?;
    let max_abs_diff = cases.iter().map(|c| c.max_abs_diff).fold(0.0, f64::max);
    Ok(MeterCheckReport {
        cases,
        grid_points,
        max_abs_diff,
    })
}

fn random_density(dim: usize, rng: &mut SeededRng) -> DensityOperator {
    let mut g = CMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            g[(i, j)] = Complex64::new(rng.standard_normal(), rng.standard_normal());
        }
    }
    let m = &g * &g.adjoint();
    let tr = m.trace().re;
    DensityOperator::new(m.scale(1.0 / tr).hermitian_part()).expect("Gram matrices are positive")
}

fn random_observable(dim: usize, rng: &mut SeededRng, degenerate: bool) -> Result<Observable> {
    let mut h = CMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            h[(i, j)] = Complex64::new(rng.standard_normal(), rng.standard_normal());
        }
    }
    let h = h.hermitian_part();
    if !degenerate {
        return Observable::new(HermitianMatrix::new(h)?);
    }
    // Same eigenvectors, eigenvalues with the first two merged.
    let eig = eigh(&h);
    let mut values = eig.values.clone();
    values[1] = values[0];
    let mut m = CMatrix::zeros(dim);
    for (k, &v) in values.iter().enumerate() {
        let u = eig.vector(k);
        m = &m + &CMatrix::outer(&u, &u).scale(v);
    }
    Observable::new(HermitianMatrix::new(m.hermitian_part())?)
}

/// Sample moments of a data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl SampleMoments {
    /// Skewness and kurtosis use the plain (biased) central moments
    /// `m₃/m₂^{3/2}` and `m₄/m₂² − 3`.
    pub fn from_slice(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                variance: f64::NAN,
                skewness: f64::NAN,
                excess_kurtosis: f64::NAN,
            };
        }
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in xs {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let variance = if n > 1 { m2 / (nf - 1.0) } else { 0.0 };
        let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
        Self {
            n,
            mean,
            variance,
            skewness: m3 / m2.powf(1.5),
            excess_kurtosis: m4 / (m2 * m2) - 3.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use std::collections::HashSet;
    use std::f64::consts::FRAC_PI_3;

    fn coin() -> (ClassicalState, PhaseFunction) {
        (ClassicalState::uniform(2).unwrap(), PhaseFunction::new(vec![1.0, -1.0]))
    }

    #[test]
    fn plan_caches_delta2() {
        let p = WeakLimitPlan::new(10.0, 100).unwrap();
        assert!((p.delta2 - 1.0).abs() < 1e-12);
        let q = WeakLimitPlan::at_fixed_delta2(0.5, 800).unwrap();
        assert!((q.delta2 - 0.5).abs() < 1e-12);
        assert!(WeakLimitPlan::new(-1.0, 10).is_err());
        assert!(WeakLimitPlan::new(1.0, 0).is_err());
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seen = HashSet::with_capacity(1_000_000);
        for i in 0..1_000_000u64 {
            assert!(seen.insert(derive_run_seed(42, i)));
        }
        let mut rng = SeededRng::new(3);
        for _ in 0..100_000 {
            let i = (rng.uniform() * 1e15) as u64;
            assert_ne!(derive_run_seed(7, i), derive_run_seed(7, i + 1));
            assert_eq!(derive_run_seed(7, i), derive_run_seed(7, i));
        }
    }

    #[test]
    fn constant_function_only_sees_noise() {
        let s = ClassicalState::uniform(3).unwrap();
        let f = PhaseFunction::constant(3, 2.5);
        let plan = WeakLimitPlan::new(10.0, 100).unwrap();
        for seed in 0..20 {
            let r = run_weak_limit_classical(&s, &f, &plan, seed).unwrap();
            assert!((r.mean - 2.5).abs() <= 4.0 * plan.delta());
            assert_eq!(r.accepted_count, 100);
            assert_eq!(r.acceptance_rate, 1.0);
        }
    }

    #[test]
    fn weak_limit_stays_in_the_tail_bound() {
        let (s, f) = coin();
        let plan = WeakLimitPlan::new(10.0, 100).unwrap();
        for seed in 0..200 {
            let r = run_weak_limit_classical(&s, &f, &plan, seed).unwrap();
            assert!(r.mean.abs() <= 4.0, "seed {seed}: {}", r.mean);
            assert!(r.stderr > 0.0);
        }
    }

    #[test]
    fn weak_limit_variance_and_shape() {
        let (s, f) = coin();
        let plan = WeakLimitPlan::new(10.0, 100).unwrap();
        let reports = repeat_weak_limit_classical(&s, &f, &plan, 5, 200).unwrap();
        let means: Vec<f64> = reports.iter().map(|r| r.mean).collect();
        let m = SampleMoments::from_slice(&means);
        assert!((m.variance - 1.0).abs() <= 0.2, "variance {}", m.variance);
    }

    #[test]
    fn doubling_n_halves_the_variance() {
        let (s, f) = coin();
        let var = |n| {
            let plan = WeakLimitPlan::new(10.0, n).unwrap();
            let reps = repeat_weak_limit_classical(&s, &f, &plan, 9, 300).unwrap();
            SampleMoments::from_slice(&reps.iter().map(|r| r.mean).collect::<Vec<_>>()).variance
        };
        let ratio = var(200) / var(100);
        assert!((ratio - 0.5).abs() <= 0.25 * 0.5, "ratio {ratio}");
    }

    #[test]
    fn reports_are_reproducible() {
        let (s, f) = coin();
        let plan = WeakLimitPlan::new(3.0, 50).unwrap();
        assert_eq!(
            run_weak_limit_classical(&s, &f, &plan, 11).unwrap(),
            run_weak_limit_classical(&s, &f, &plan, 11).unwrap()
        );
        assert_eq!(
            run_anomaly_experiment(FRAC_PI_3, 10.0, 200, 4).unwrap(),
            run_anomaly_experiment(FRAC_PI_3, 10.0, 200, 4).unwrap()
        );
    }

    #[test]
    fn anomaly_at_zero_angle_is_ordinary() {
        let r = run_anomaly_experiment(0.0, 10.0, 3600, 2).unwrap();
        assert_eq!(r.acceptance_rate, 1.0);
        assert!((r.mean - 1.0).abs() < 3.0 * 10.0 / 60.0);
        assert_eq!(r.predicted_mean, 1.0);
    }

    #[test]
    fn anomaly_rate_and_mean() {
        let r = run_anomaly_experiment(FRAC_PI_3, 10.0, 3600, 1).unwrap();
        let se = (0.25 * 0.75 / 3600.0f64).sqrt();
        assert!((r.acceptance_rate - 0.25).abs() < 3.0 * se);
        assert!((r.mean - 2.0).abs() < 3.0 * r.predicted_delta);
        assert!((r.predicted_delta - 10.0 / (r.accepted_count as f64).sqrt()).abs() < 1e-15);
        assert!((r.z_score - (r.mean - 2.0) / r.predicted_delta).abs() < 1e-12);
    }

    #[test]
    fn anomaly_rejects_bad_angles() {
        for phi in [-0.1, FRAC_PI_2, 2.0] {
            assert!(matches!(
                run_anomaly_experiment(phi, 10.0, 10, 0),
                Err(Error::InvalidParameter(_))
            ));
        }
    }

    #[test]
    fn anomaly_with_no_acceptances() {
        // cos²φ ≈ 1e-6: three runs are all but certain to be discarded.
        let phi = (1e-3f64).acos();
        let err = run_anomaly_experiment(phi, 0.01, 3, 0).unwrap_err();
        assert_eq!(err, Error::NoAcceptedRuns { runs: 3 });
    }

    #[test]
    fn report_json_field_names() {
        let r = run_anomaly_experiment(FRAC_PI_3, 10.0, 100, 3).unwrap();
        let v: serde_json::Value = serde_json::to_value(r).unwrap();
        for key in ExperimentReport::CSV_HEADER {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: ExperimentReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn report_csv_rows() {
        let (s, f) = coin();
        let plan = WeakLimitPlan::new(2.0, 20).unwrap();
        let reps = repeat_weak_limit_classical(&s, &f, &plan, 1, 3).unwrap();
        let mut buf = Vec::new();
        write_reports_csv(&reps, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("rep,accepted_count,"));
        let mean: f64 = lines[2].split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(mean, reps[1].mean);
    }

    #[test]
    fn eigenstate_collapses_to_itself() {
        let up = DensityOperator::pure_real(&[0.0, 1.0]).unwrap();
        let cfg = ContinuousMeasurementConfig::new(1.0, 1e-2, 1.0, 100).unwrap();
        let h = run_collapse_statistics(&up, &Observable::pauli_z(), &cfg, 200, 1).unwrap();
        assert_eq!(h.eigenvalues, vec![-1.0, 1.0]);
        assert_eq!(h.counts, vec![200, 0]);
        assert_eq!(h.converged, 200);
    }

    #[test]
    fn mixed_state_splits_evenly() {
        let rho = DensityOperator::maximally_mixed(2);
        let cfg = ContinuousMeasurementConfig::new(1.0, 1e-2, 30.0, 3000).unwrap();
        let h = run_collapse_statistics(&rho, &Observable::pauli_z(), &cfg, 800, 2).unwrap();
        assert!(h.convergence_fraction() >= 0.99);
        assert!(h.within(3.0), "{:?}", h.frequencies);
    }

    #[test]
    fn short_runs_are_unconverged() {
        let rho = DensityOperator::maximally_mixed(2);
        let cfg = ContinuousMeasurementConfig::new(1.0, 1e-2, 0.1, 10).unwrap();
        let err = run_collapse_statistics(&rho, &Observable::pauli_z(), &cfg, 100, 3).unwrap_err();
        assert!(matches!(err, Error::Unconverged { total: 100, .. }));
    }

    #[test]
    fn classical_collapse_follows_prior() {
        let s = ClassicalState::new(vec![0.2, 0.3, 0.5]).unwrap();
        let f = PhaseFunction::new(vec![1.0, 1.0, -1.0]);
        let cfg = ContinuousMeasurementConfig::new(1.0, 1e-2, 30.0, 3000).unwrap();
        let h = run_classical_collapse_statistics(&s, &f, &cfg, 800, 4).unwrap();
        assert_eq!(h.eigenvalues, vec![-1.0, 1.0]);
        assert!((h.predicted[1] - 0.5).abs() < 1e-15);
        assert!(h.within(3.0), "{:?}", h.frequencies);
    }

    #[test]
    fn moments_of_known_samples() {
        let m = SampleMoments::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!(m.skewness.abs() < 1e-15);
        // m₂ = 1.25, m₄ = 2.5625
        assert!((m.excess_kurtosis - (2.5625 / 1.5625 - 3.0)).abs() < 1e-14);
        let skewed = SampleMoments::from_slice(&[0.0, 0.0, 0.0, 1.0]);
        // m₂ = 3/16, m₃ = 3/32
        assert!((skewed.skewness - (3.0 / 32.0) / (3.0f64 / 16.0).powf(1.5)).abs() < 1e-14);
    }

    #[test]
    fn meter_model_agrees_on_random_cases() {
        let r = meter_equivalence_check(20, 50, 8).unwrap();
        assert_eq!(r.cases.len(), 20);
        assert!(r.max_abs_diff < 1e-12, "{}", r.max_abs_diff);
        assert!(r.cases.iter().all(|c| (2..=4).contains(&c.dim)));
    }
}
