//! Density operators, non-ideal quantum measurement, postselection and weak
//! values.
//!
//! Observables carry their spectral decomposition, and every Gaussian
//! operator function `G_σ^{1/2}(a − Â)` is evaluated through it. The meter
//! (pointer) of the von Neumann measurement model is traced out analytically,
//! never discretized.

use num_complex::Complex64;

use crate::classical::{check_sigma, RunOutcome};
use crate::error::{Error, Result};
use crate::gaussian::{gaussian_density, gaussian_sqrt, overlap};
use crate::linalg::{
    eigh, spectral_decompose, CMatrix, HermitianMatrix, SpectralDecomposition, DEFAULT_DEGENERACY_TOL, HERMITIAN_TOL,
};
use crate::rng::SeededRng;

const TRACE_TOL: f64 = 1e-12;
const PSEUDO_TRACE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-10;
const POSTSELECTOR_TOL: f64 = 1e-12;
const MIN_RATE: f64 = 1e-14;

/// A Hermitian operator together with its spectral decomposition.
#[derive(Debug, Clone)]
pub struct Observable {
    matrix: HermitianMatrix,
    spectrum: SpectralDecomposition,
}

impl Observable {
    pub fn new(matrix: HermitianMatrix) -> Result<Self> {
        Self::with_degeneracy_tol(matrix, DEFAULT_DEGENERACY_TOL)
    }

    pub fn with_degeneracy_tol(matrix: HermitianMatrix, degeneracy_tol: f64) -> Result<Self> {
        let spectrum = spectral_decompose(&matrix, degeneracy_tol)?;
        Ok(Self { matrix, spectrum })
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(HermitianMatrix::from_real_rows(rows)?)
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(HermitianMatrix::diagonal(values)?)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(HermitianMatrix::identity(dim)?)
    }

    pub fn pauli_x() -> Self {
        Self::new(HermitianMatrix::pauli_x()).expect("σ_x is Hermitian")
    }

    pub fn pauli_z() -> Self {
        Self::new(HermitianMatrix::pauli_z()).expect("σ_z is Hermitian")
    }

    /// The projector `|ψ><ψ|` onto the normalized ket.
    pub fn projector(ket: &[Complex64]) -> Result<Self> {
        let ket = normalize_ket(ket)?;
        Self::new(HermitianMatrix::new(CMatrix::outer(&ket, &ket))?)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        self.matrix.matrix()
    }

    pub fn hermitian(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    /// Errors unless the spectrum lies in `[0, 1]` (within `1e-12`).
    pub fn check_postselector(&self) -> Result<()> {
        for &e in self.spectrum.eigenvalues() {
            if !(-POSTSELECTOR_TOL..=1.0 + POSTSELECTOR_TOL).contains(&e) {
                return Err(Error::InvalidPostselector { eigenvalue: e });
            }
        }
        Ok(())
    }
}

/// Nonnegative Hermitian operator with unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator(CMatrix);

impl DensityOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        let asymmetry = m.hermitian_asymmetry();
        if asymmetry > HERMITIAN_TOL {
            return Err(Error::NonHermitian { asymmetry });
        }
        let m = m.hermitian_part();
        let tr = m.trace().re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, not 1")));
        }
        let min = eigh(&m).values[0];
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min}")));
        }
        Ok(Self(m))
    }

    /// `|ψ><ψ|` for the normalized ket.
    pub fn pure(ket: &[Complex64]) -> Result<Self> {
        let ket = normalize_ket(ket)?;
        Ok(Self(CMatrix::outer(&ket, &ket)))
    }

    pub fn pure_real(ket: &[f64]) -> Result<Self> {
        let ket: Vec<Complex64> = ket.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::pure(&ket)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim).scale(1.0 / dim as f64))
    }

    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        Self::new(CMatrix::diagonal(weights))
    }

    /// Hermitian, positive, unit-trace input assumed.
    pub(crate) fn from_trusted(m: CMatrix) -> Self {
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn purity(&self) -> f64 {
        self.0.trace_product(&self.0).re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh(&self.0).values
    }
}

/// `Herm(Π̂ρ̂)/⟨Π̂⟩`: Hermitian and unit-trace but possibly indefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoState(CMatrix);

impl PseudoState {
    pub fn new(m: CMatrix) -> Result<Self> {
        let asymmetry = m.hermitian_asymmetry();
        if asymmetry > HERMITIAN_TOL {
            return Err(Error::NonHermitian { asymmetry });
        }
        let m = m.hermitian_part();
        let tr = m.trace().re;
        if (tr - 1.0).abs() > PSEUDO_TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, not 1")));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh(&self.0).values
    }

    pub fn is_positive(&self) -> bool {
        self.eigenvalues()[0] >= -POSITIVITY_TOL
    }

    /// `tr(Â ρ̂?)`.
    pub fn expectation(&self, obs: &Observable) -> Result<f64> {
        check_dims(self.0.dim(), obs.dim())?;
        Ok(obs.matrix().trace_product(&self.0).re)
    }
}

/// Gaussian pointer of width `sigma` coupled through `exp(iÂ⊗K̂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeterModel {
    sigma: f64,
}

impl MeterModel {
    pub fn new(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// `⟨Â⟩ = tr(Âρ̂)`.
pub fn quantum_mean(rho: &DensityOperator, obs: &Observable) -> Result<f64> {
    check_dims(rho.dim(), obs.dim())?;
    Ok(obs.matrix().trace_product(rho.matrix()).re)
}

/// `⟨Â²⟩ − ⟨Â⟩²`.
pub fn quantum_spread(rho: &DensityOperator, obs: &Observable) -> Result<f64> {
    check_dims(rho.dim(), obs.dim())?;
    let mut mean = 0.0;
    let mut second = 0.0;
    for (a, p) in obs.spectrum().eigenvalues().iter().zip(born_probabilities(rho, obs)?) {
        mean += a * p;
        second += a * a * p;
    }
    Ok((second - mean * mean).max(0.0))
}

/// `p^λ = tr(P̂^λ ρ̂)` for each distinct eigenvalue of `obs`.
pub fn born_probabilities(rho: &DensityOperator, obs: &Observable) -> Result<Vec<f64>> {
    check_dims(rho.dim(), obs.dim())?;
    Ok(obs
        .spectrum()
        .projectors()
        .iter()
        .map(|p| p.trace_product(rho.matrix()).re.max(0.0))
        .collect())
}

/// `p(a) = ⟨G_σ(a − Â)⟩_ρ̂ = Σ_λ p^λ G_σ(a − a^λ)`.
pub fn outcome_density(rho: &DensityOperator, obs: &Observable, sigma: f64, a: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let probs = born_probabilities(rho, obs)?;
    Ok(obs
        .spectrum()
        .eigenvalues()
        .iter()
        .zip(probs)
        .map(|(&ev, p)| p * gaussian_density(a - ev, sigma))
        .sum())
}

/// State after a Gaussian measurement of `obs` returned `outcome`:
/// `G_σ^{1/2}(a − Â) ρ̂ G_σ^{1/2}(a − Â) / p(a)`.
pub fn collapse(rho: &DensityOperator, obs: &Observable, sigma: f64, outcome: f64) -> Result<DensityOperator> {
    check_sigma(sigma)?;
    let probs = born_probabilities(rho, obs)?;
    // Factor out the largest supported amplitude so tiny sigma cannot
    // underflow every Kraus entry; it cancels in the normalization.
    let shift = obs
        .spectrum()
        .eigenvalues()
        .iter()
        .zip(&probs)
        .filter(|(_, p)| **p > 0.0)
        .map(|(&ev, _)| (outcome - ev).powi(2) / (4.0 * sigma * sigma))
        .fold(f64::INFINITY, f64::min);
    let kraus = obs
        .spectrum()
        .apply(|ev| (shift - (outcome - ev).powi(2) / (4.0 * sigma * sigma)).exp());
    let unnorm = &(&kraus * rho.matrix()) * &kraus;
    Ok(normalize_positive(unnorm))
}

/// Samples an outcome from [`outcome_density`] and returns it with the
/// collapsed state.
pub fn noisy_quantum_measure(
    rho: &DensityOperator,
    obs: &Observable,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<(f64, DensityOperator)> {
    check_sigma(sigma)?;
    let probs = born_probabilities(rho, obs)?;
    let level = rng.categorical(&probs);
    let outcome = rng.normal(obs.spectrum().eigenvalues()[level], sigma);
    Ok((outcome, collapse(rho, obs, sigma, outcome)?))
}

/// Ideal (projective) measurement: returns the eigenvalue index and the
/// projected state `P̂^λ ρ̂ P̂^λ / p^λ`.
pub fn ideal_measure(rho: &DensityOperator, obs: &Observable, rng: &mut SeededRng) -> Result<(usize, DensityOperator)> {
    let probs = born_probabilities(rho, obs)?;
    let level = rng.categorical(&probs);
    let proj = &obs.spectrum().projectors()[level];
    let projected = &(proj * rho.matrix()) * proj;
    Ok((level, normalize_positive(projected)))
}

/// Pointer readout density of the von Neumann meter model,
/// `Σ_λμ G^{1/2}(a − a^λ) G^{1/2}(a − a^μ) tr(P̂^λ ρ̂ P̂^μ)`, with the pointer
/// traced out in closed form.
pub fn meter_model_density(rho: &DensityOperator, obs: &Observable, meter: &MeterModel, a: f64) -> Result<f64> {
    check_dims(rho.dim(), obs.dim())?;
    let sd = obs.spectrum();
    let amps: Vec<f64> = sd
        .eigenvalues()
        .iter()
        .map(|&ev| gaussian_sqrt(a - ev, meter.sigma()))
        .collect();
    let mut total = 0.0;
    for (l, pl) in sd.projectors().iter().enumerate() {
        let pl_rho = pl * rho.matrix();
        for (m, pm) in sd.projectors().iter().enumerate() {
            total += amps[l] * amps[m] * pl_rho.trace_product(pm).re;
        }
    }
    Ok(total)
}

/// System state after the pointer reads `a`, traced over the pointer:
/// `Σ_λμ G^{1/2}(a − a^λ) G^{1/2}(a − a^μ) P̂^λ ρ̂ P̂^μ / p(a)`.
pub fn meter_model_collapse(
    rho: &DensityOperator,
    obs: &Observable,
    meter: &MeterModel,
    a: f64,
) -> Result<DensityOperator> {
    check_dims(rho.dim(), obs.dim())?;
    let sd = obs.spectrum();
    let amps: Vec<f64> = sd
        .eigenvalues()
        .iter()
        .map(|&ev| gaussian_sqrt(a - ev, meter.sigma()))
        .collect();
    let mut out = CMatrix::zeros(rho.dim());
    for (l, pl) in sd.projectors().iter().enumerate() {
        let pl_rho = pl * rho.matrix();
        for (m, pm) in sd.projectors().iter().enumerate() {
            out = &out + &(&pl_rho * pm).scale(amps[l] * amps[m]);
        }
    }
    Ok(normalize_positive(out))
}

/// `A_w = ⟨f|Â|i⟩ / ⟨f|i⟩` for pure pre- and postselected states.
///
/// Evaluated as `tr(Π̂Âρ̂)/tr(Π̂ρ̂)` with `ρ̂ = |i><i|`, `Π̂ = |f><f|`; the
/// ket phases cancel.
pub fn complex_weak_value(initial: &DensityOperator, fin: &DensityOperator, obs: &Observable) -> Result<Complex64> {
    check_dims(initial.dim(), obs.dim())?;
    check_dims(fin.dim(), obs.dim())?;
    for s in [initial, fin] {
        let purity = s.purity();
        if (purity - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("state is not pure (purity {purity})")));
        }
    }
    let overlap = fin.matrix().trace_product(initial.matrix()).re;
    if overlap < 1e-14 {
        return Err(Error::OrthogonalPrePost { overlap });
    }
    let num = (fin.matrix() * obs.matrix()).trace_product(initial.matrix());
    Ok(num / overlap)
}

/// Same as [`complex_weak_value`], from kets.
pub fn complex_weak_value_kets(initial: &[Complex64], fin: &[Complex64], obs: &Observable) -> Result<Complex64> {
    complex_weak_value(&DensityOperator::pure(initial)?, &DensityOperator::pure(fin)?, obs)
}

/// `⟨Π̂⟩_ρ̂`, the rate of quantum postselection.
pub fn postselection_rate(rho: &DensityOperator, sel: &Observable) -> Result<f64> {
    check_dims(rho.dim(), sel.dim())?;
    Ok(sel.matrix().trace_product(rho.matrix()).re)
}

/// Real weak value `Re⟨Π̂Â⟩_ρ̂ / ⟨Π̂⟩_ρ̂`.
pub fn real_weak_value(rho: &DensityOperator, sel: &Observable, obs: &Observable) -> Result<f64> {
    check_dims(rho.dim(), obs.dim())?;
    sel.check_postselector()?;
    let rate = nonzero_rate(rho, sel)?;
    Ok((sel.matrix() * obs.matrix()).trace_product(rho.matrix()).re / rate)
}

/// `ρ̂?_Π = (Π̂ρ̂ + ρ̂Π̂) / (2⟨Π̂⟩_ρ̂)`.
pub fn pseudo_state(rho: &DensityOperator, sel: &Observable) -> Result<PseudoState> {
    let rate = nonzero_rate(rho, sel)?;
    let pr = sel.matrix() * rho.matrix();
    PseudoState::new(pr.hermitian_part().scale(1.0 / rate))
}

/// Distribution of postselected outcomes,
/// `p(a) = (1/N) ⟨G^{1/2}(a − Â) Π̂ G^{1/2}(a − Â)⟩_ρ̂`.
///
/// Expanded over eigenprojector pairs of `Â` without any commutativity
/// assumption. The normalization `N` (the overall acceptance probability)
/// and the first two moments follow from Gaussian overlap integrals.
#[derive(Debug, Clone)]
pub struct PostselectedOutcomeDensity {
    eigenvalues: Vec<f64>,
    // Re tr(P̂^μ ρ̂ P̂^λ Π̂), indexed [λ][μ].
    weights: Vec<Vec<f64>>,
    sigma: f64,
    normalization: f64,
}

impl PostselectedOutcomeDensity {
    pub fn new(rho: &DensityOperator, sel: &Observable, obs: &Observable, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        check_dims(rho.dim(), obs.dim())?;
        sel.check_postselector()?;
        nonzero_rate(rho, sel)?;
        let sd = obs.spectrum();
        let projs = sd.projectors();
        let weights: Vec<Vec<f64>> = projs
            .iter()
            .map(|pl| {
                let pl_sel = pl * sel.matrix();
                projs
                    .iter()
                    .map(|pm| (pm * rho.matrix()).trace_product(&pl_sel).re)
                    .collect()
            })
            .collect();
        let eigenvalues = sd.eigenvalues().to_vec();
        let normalization = pair_sum(&eigenvalues, &weights, sigma, |_, _| 1.0);
        if !(normalization > 0.0) {
            return Err(Error::ZeroSelectionRate { rate: normalization });
        }
        Ok(Self {
            eigenvalues,
            weights,
            sigma,
            normalization,
        })
    }

    /// Probability that a run is accepted.
    pub fn acceptance_rate(&self) -> f64 {
        self.normalization
    }

    pub fn density(&self, a: f64) -> f64 {
        let amps: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|&ev| gaussian_sqrt(a - ev, self.sigma))
            .collect();
        let mut total = 0.0;
        for (l, row) in self.weights.iter().enumerate() {
            for (m, w) in row.iter().enumerate() {
                total += amps[l] * amps[m] * w;
            }
        }
        total / self.normalization
    }

    /// `E[a]` over accepted runs.
    pub fn mean(&self) -> f64 {
        pair_sum(&self.eigenvalues, &self.weights, self.sigma, |x, y| 0.5 * (x + y)) / self.normalization
    }

    /// `E[a²]` over accepted runs.
    pub fn second_moment(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        pair_sum(&self.eigenvalues, &self.weights, self.sigma, |x, y| {
            (0.5 * (x + y)).powi(2) + s2
        }) / self.normalization
    }
}

// The product G^{1/2}(a − x) G^{1/2}(a − y) is a unit-variance-σ² Gaussian in
// `a` centred at (x + y)/2 scaled by overlap(x, y); `moment` gives the
// corresponding moment of that Gaussian.
fn pair_sum(eigenvalues: &[f64], weights: &[Vec<f64>], sigma: f64, moment: impl Fn(f64, f64) -> f64) -> f64 {
    let mut total = 0.0;
    for (l, row) in weights.iter().enumerate() {
        for (m, w) in row.iter().enumerate() {
            let (x, y) = (eigenvalues[l], eigenvalues[m]);
            total += w * overlap(x, y, sigma) * moment(x, y);
        }
    }
    total
}

/// Convenience wrapper evaluating [`PostselectedOutcomeDensity`] at one point.
pub fn postselected_outcome_density(
    rho: &DensityOperator,
    sel: &Observable,
    obs: &Observable,
    sigma: f64,
    a: f64,
) -> Result<f64> {
    Ok(PostselectedOutcomeDensity::new(rho, sel, obs, sigma)?.density(a))
}

/// Gaussian measurement of `obs`, ideal measurement of `sel` on the collapsed
/// state, then acceptance with probability equal to the observed eigenvalue
/// of `sel`.
pub fn postselected_quantum_run(
    rho: &DensityOperator,
    sel: &Observable,
    obs: &Observable,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<RunOutcome> {
    check_dims(rho.dim(), sel.dim())?;
    let (outcome, collapsed) = noisy_quantum_measure(rho, obs, sigma, rng)?;
    let probs = born_probabilities(&collapsed, sel)?;
    let level = rng.categorical(&probs);
    let pi = sel.spectrum().eigenvalues()[level];
    Ok(if rng.bernoulli(pi) {
        RunOutcome::Accepted(outcome)
    } else {
        RunOutcome::Discarded
    })
}

/// Pre-/postselection setup exhibiting an anomalous weak value of `σ_x`:
/// `|i⟩ = (e^{iφ/2}, e^{−iφ/2})/√2`, `|f⟩ = (e^{−iφ/2}, e^{iφ/2})/√2`.
///
/// The postselection rate is `cos²φ` and the weak value is `1/cos φ`.
#[derive(Debug, Clone)]
pub struct AnomalySetup {
    pub phi: f64,
    pub initial_ket: Vec<Complex64>,
    pub final_ket: Vec<Complex64>,
    pub initial: DensityOperator,
    pub postselector: Observable,
    pub observable: Observable,
}

impl AnomalySetup {
    pub fn new(phi: f64) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let up = Complex64::from_polar(h, phi / 2.0);
        let down = Complex64::from_polar(h, -phi / 2.0);
        let initial_ket = vec![up, down];
        let final_ket = vec![down, up];
        Self {
            phi,
            initial: DensityOperator::pure(&initial_ket).expect("unit ket"),
            postselector: Observable::projector(&final_ket).expect("unit ket"),
            observable: Observable::pauli_x(),
            initial_ket,
            final_ket,
        }
    }

    pub fn final_state(&self) -> DensityOperator {
        DensityOperator::pure(&self.final_ket).expect("unit ket")
    }

    /// `1 / cos φ`.
    pub fn predicted_weak_value(&self) -> f64 {
        1.0 / self.phi.cos()
    }

    /// `cos² φ`.
    pub fn predicted_rate(&self) -> f64 {
        self.phi.cos().powi(2)
    }
}

fn nonzero_rate(rho: &DensityOperator, sel: &Observable) -> Result<f64> {
    let rate = postselection_rate(rho, sel)?;
    if rate <= MIN_RATE {
        return Err(Error::ZeroSelectionRate { rate });
    }
    Ok(rate)
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimMismatch { expected, found });
    }
    Ok(())
}

fn normalize_ket(ket: &[Complex64]) -> Result<Vec<Complex64>> {
    let norm = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidState("ket has zero norm".into()));
    }
    Ok(ket.iter().map(|z| z / norm).collect())
}

// Hermitizes and rescales an (analytically positive) operator to unit trace.
fn normalize_positive(m: CMatrix) -> DensityOperator {
    let m = m.hermitian_part();
    let tr = m.trace().re;
    DensityOperator::from_trusted(m.scale(1.0 / tr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{classical_mean, classical_postselected_mean, ClassicalState, PhaseFunction, Postselector};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn plus() -> DensityOperator {
        DensityOperator::pure_real(&[1.0, 1.0]).unwrap()
    }

    fn random_state(dim: usize, rng: &mut SeededRng) -> DensityOperator {
        let mut g = CMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                g[(i, j)] = Complex64::new(rng.standard_normal(), rng.standard_normal());
            }
        }
        let m = &g * &g.adjoint();
        let tr = m.trace().re;
        DensityOperator::new(m.scale(1.0 / tr)).unwrap()
    }

    fn random_observable(dim: usize, rng: &mut SeededRng) -> Observable {
        let mut m = CMatrix::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = c(2.0 * rng.standard_normal());
            for j in (i + 1)..dim {
                let z = Complex64::new(rng.standard_normal(), rng.standard_normal());
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        Observable::new(HermitianMatrix::new(m).unwrap()).unwrap()
    }

    #[test]
    fn mean_examples() {
        let mixed = DensityOperator::maximally_mixed(2);
        assert_eq!(quantum_mean(&mixed, &Observable::pauli_z()).unwrap(), 0.0);
        let phi = FRAC_PI_3;
        let s = AnomalySetup::new(phi);
        assert!((quantum_mean(&s.initial, &Observable::pauli_x()).unwrap() - 0.5).abs() < 1e-15);
        assert!((quantum_mean(&s.initial, &Observable::identity(2).unwrap()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spread_examples() {
        let mixed = DensityOperator::maximally_mixed(2);
        assert!((quantum_spread(&mixed, &Observable::pauli_z()).unwrap() - 1.0).abs() < 1e-15);
        assert!(
            quantum_spread(&plus(), &Observable::identity(2).unwrap())
                .unwrap()
                .abs()
                < 1e-15
        );
        assert!(quantum_spread(&plus(), &Observable::pauli_x()).unwrap().abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        let err = quantum_mean(&DensityOperator::maximally_mixed(3), &Observable::pauli_z()).unwrap_err();
        assert_eq!(err, Error::DimMismatch { expected: 3, found: 2 });
    }

    #[test]
    fn density_operator_validation() {
        assert!(DensityOperator::diagonal(&[0.5, 0.6]).is_err());
        assert!(DensityOperator::diagonal(&[1.5, -0.5]).is_err());
        assert!(DensityOperator::diagonal(&[0.3, 0.7]).is_ok());
    }

    #[test]
    fn outcome_density_examples() {
        let mixed = DensityOperator::maximally_mixed(2);
        let z = Observable::pauli_z();
        for &a in &[-2.0, -0.3, 0.0, 1.0, 4.0] {
            let expected = 0.5 * gaussian_density(a - 1.0, 1.0) + 0.5 * gaussian_density(a + 1.0, 1.0);
            assert!((outcome_density(&mixed, &z, 1.0, a).unwrap() - expected).abs() < 1e-15);
        }
        let zero = Observable::diagonal(&[0.0, 0.0]).unwrap();
        assert!((outcome_density(&plus(), &zero, 2.0, 0.7).unwrap() - gaussian_density(0.7, 2.0)).abs() < 1e-15);
    }

    #[test]
    fn outcome_density_integrates_to_one() {
        let mut rng = SeededRng::new(11);
        let rho = random_state(3, &mut rng);
        let obs = random_observable(3, &mut rng);
        let sigma = 0.6;
        let norm = obs.spectrum().eigenvalues().iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let (lo, hi) = (-8.0 * sigma - norm, 8.0 * sigma + norm);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        // Composite Simpson.
        let mut sum = 0.0;
        for k in 0..=n {
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            sum += w * outcome_density(&rho, &obs, sigma, lo + k as f64 * h).unwrap();
        }
        assert!((sum * h / 3.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn eigenstate_is_fixed_point() {
        let up = DensityOperator::pure_real(&[1.0, 0.0]).unwrap();
        let z = Observable::pauli_z();
        let mut rng = SeededRng::new(12);
        let n = 20_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let (a, after) = noisy_quantum_measure(&up, &z, 1.0, &mut rng).unwrap();
            assert!(after.matrix().max_abs_diff(up.matrix()) < 1e-15);
            sum += a;
        }
        assert!((sum / n as f64 - 1.0).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn sharp_measurement_projects() {
        let mixed = DensityOperator::maximally_mixed(2);
        let z = Observable::pauli_z();
        let mut rng = SeededRng::new(13);
        for _ in 0..100 {
            let (a, after) = noisy_quantum_measure(&mixed, &z, 1e-6, &mut rng).unwrap();
            let target = if a > 0.0 {
                CMatrix::diagonal(&[1.0, 0.0])
            } else {
                CMatrix::diagonal(&[0.0, 1.0])
            };
            assert!(after.matrix().max_abs_diff(&target) < 1e-12);
        }
    }

    #[test]
    fn broad_measurement_mean() {
        let mixed = DensityOperator::maximally_mixed(2);
        let z = Observable::pauli_z();
        let mut rng = SeededRng::new(14);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| noisy_quantum_measure(&mixed, &z, 10.0, &mut rng).unwrap().0)
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 3.0 * 10.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn collapse_keeps_states_valid() {
        let mut rng = SeededRng::new(15);
        for dim in 2..=4 {
            for _ in 0..30 {
                let rho = random_state(dim, &mut rng);
                let obs = random_observable(dim, &mut rng);
                let sigma = 0.05 + 3.0 * rng.uniform();
                let (_, after) = noisy_quantum_measure(&rho, &obs, sigma, &mut rng).unwrap();
                assert!(DensityOperator::new(after.matrix().clone()).is_ok());
            }
        }
    }

    #[test]
    fn meter_model_matches_postulated_measurement() {
        let mut rng = SeededRng::new(16);
        for dim in 2..=4 {
            let rho = random_state(dim, &mut rng);
            let obs = random_observable(dim, &mut rng);
            let meter = MeterModel::new(0.8).unwrap();
            for k in 0..25 {
                let a = -4.0 + 0.33 * k as f64;
                let direct = outcome_density(&rho, &obs, meter.sigma(), a).unwrap();
                let via_meter = meter_model_density(&rho, &obs, &meter, a).unwrap();
                assert!((direct - via_meter).abs() < 1e-12);
                let c1 = collapse(&rho, &obs, meter.sigma(), a).unwrap();
                let c2 = meter_model_collapse(&rho, &obs, &meter, a).unwrap();
                assert!(c1.matrix().max_abs_diff(c2.matrix()) < 1e-10);
            }
        }
    }

    #[test]
    fn meter_model_commuting_case() {
        let rho = DensityOperator::diagonal(&[0.3, 0.7]).unwrap();
        let z = Observable::pauli_z();
        let meter = MeterModel::new(1.0).unwrap();
        let a = 0.4;
        let expected = 0.3 * gaussian_density(a - 1.0, 1.0) + 0.7 * gaussian_density(a + 1.0, 1.0);
        assert!((meter_model_density(&rho, &z, &meter, a).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn meter_model_plus_state_hand_expansion() {
        // Diagonal terms (1/2)G(−1) + (1/2)G(1); the cross traces
        // tr(P̂⁺ ρ̂ P̂⁻) vanish by cyclicity and orthogonality.
        let z = Observable::pauli_z();
        let meter = MeterModel::new(1.0).unwrap();
        let cross = z.spectrum().projectors()[0].trace_product(&(plus().matrix() * &z.spectrum().projectors()[1]));
        assert!(cross.norm() < 1e-16);
        let g = |x: f64| gaussian_sqrt(x, 1.0);
        let expected = 0.5 * g(-1.0).powi(2) + 0.5 * g(1.0).powi(2) + 2.0 * g(-1.0) * g(1.0) * cross.re;
        assert!((meter_model_density(&plus(), &z, &meter, 0.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn complex_weak_value_examples() {
        let s = AnomalySetup::new(FRAC_PI_3);
        let x = Observable::pauli_x();
        let same = complex_weak_value(&s.initial, &s.initial, &x).unwrap();
        assert!((same - c(0.5)).norm() < 1e-14);
        let w = complex_weak_value(&s.initial, &s.final_state(), &x).unwrap();
        assert!((w - c(2.0)).norm() < 1e-12);
        let id = complex_weak_value(&s.initial, &s.final_state(), &Observable::identity(2).unwrap()).unwrap();
        assert!((id - c(1.0)).norm() < 1e-14);
        for &phi in &[0.0, 0.4, 1.2] {
            let s = AnomalySetup::new(phi);
            let w = complex_weak_value_kets(&s.initial_ket, &s.final_ket, &x).unwrap();
            assert!((w - c(1.0 / phi.cos())).norm() < 1e-12);
        }
    }

    #[test]
    fn complex_weak_value_has_imaginary_part_in_general() {
        let y = Observable::new(HermitianMatrix::pauli_y()).unwrap();
        let i = DensityOperator::pure_real(&[1.0, 0.0]).unwrap();
        let f = DensityOperator::pure_real(&[1.0, 1.0]).unwrap();
        // <f|σy|i>/<f|i> = (1/√2)(i)/(1/√2) = i.
        let w = complex_weak_value(&i, &f, &y).unwrap();
        assert!((w - Complex64::i()).norm() < 1e-14);
    }

    #[test]
    fn orthogonal_pre_post_is_an_error() {
        let s = AnomalySetup::new(FRAC_PI_2);
        let err = complex_weak_value(&s.initial, &s.final_state(), &Observable::pauli_x()).unwrap_err();
        assert!(matches!(err, Error::OrthogonalPrePost { .. }));
        assert!(matches!(
            complex_weak_value(&DensityOperator::maximally_mixed(2), &s.initial, &Observable::pauli_x()),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn real_weak_value_examples() {
        let mut rng = SeededRng::new(17);
        let rho = random_state(3, &mut rng);
        let obs = random_observable(3, &mut rng);
        let id = Observable::identity(3).unwrap();
        assert!((real_weak_value(&rho, &id, &obs).unwrap() - quantum_mean(&rho, &obs).unwrap()).abs() < 1e-12);

        let s = AnomalySetup::new(FRAC_PI_3);
        let w = real_weak_value(&s.initial, &s.postselector, &s.observable).unwrap();
        assert!((w - 2.0).abs() < 1e-12);
        assert!(w > 1.0, "outside the eigenvalue range");
    }

    #[test]
    fn real_weak_value_errors() {
        let s = AnomalySetup::new(FRAC_PI_2);
        assert!(matches!(
            real_weak_value(&s.initial, &s.postselector, &s.observable),
            Err(Error::ZeroSelectionRate { .. })
        ));
        let bad = Observable::diagonal(&[1.5, 0.0]).unwrap();
        assert!(matches!(
            real_weak_value(&s.initial, &bad, &s.observable),
            Err(Error::InvalidPostselector { .. })
        ));
    }

    #[test]
    fn commuting_case_matches_classical() {
        let weights = [0.2, 0.5, 0.3];
        let values = [-1.0, 0.5, 2.0];
        let sel_values = [0.9, 0.2, 0.6];
        let rho = DensityOperator::diagonal(&weights).unwrap();
        let obs = Observable::diagonal(&values).unwrap();
        let sel = Observable::diagonal(&sel_values).unwrap();
        let state = ClassicalState::new(weights.to_vec()).unwrap();
        let f = PhaseFunction::new(values.to_vec());
        let p = Postselector::new(sel_values.to_vec()).unwrap();

        assert!((quantum_mean(&rho, &obs).unwrap() - classical_mean(&state, &f).unwrap()).abs() < 1e-12);
        let q = real_weak_value(&rho, &sel, &obs).unwrap();
        let cl = classical_postselected_mean(&state, &f, &p).unwrap();
        assert!((q - cl).abs() < 1e-12);
        let ps = pseudo_state(&rho, &sel).unwrap();
        let eff = crate::classical::effective_postselected_state(&state, &p).unwrap();
        for (k, w) in eff.weights().iter().enumerate() {
            assert!((ps.matrix()[(k, k)].re - w).abs() < 1e-12);
        }
        for &a in &[-1.5, 0.0, 0.7, 2.2] {
            let classical_density: f64 = weights
                .iter()
                .zip(&values)
                .map(|(w, v)| w * gaussian_density(a - v, 0.9))
                .sum();
            assert!((outcome_density(&rho, &obs, 0.9, a).unwrap() - classical_density).abs() < 1e-12);
        }
    }

    #[test]
    fn pseudo_state_anomaly_matrix() {
        for &phi in &[0.3, FRAC_PI_3, 1.3] {
            let s = AnomalySetup::new(phi);
            let ps = pseudo_state(&s.initial, &s.postselector).unwrap();
            let sec = 1.0 / phi.cos();
            let expected = CMatrix::from_real_rows(&[vec![0.5, 0.5 * sec], vec![0.5 * sec, 0.5]]).unwrap();
            assert!(ps.matrix().max_abs_diff(&expected) < 1e-12);
            let ev = ps.eigenvalues();
            assert!((ev[0] - (1.0 - sec) / 2.0).abs() < 1e-10);
            assert!((ev[1] - (1.0 + sec) / 2.0).abs() < 1e-10);
            assert!(!ps.is_positive());
            assert!((ps.trace() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn pseudo_state_at_zero_angle_is_a_projector() {
        let s = AnomalySetup::new(0.0);
        let ps = pseudo_state(&s.initial, &s.postselector).unwrap();
        let expected = CMatrix::from_real_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(ps.matrix().max_abs_diff(&expected) < 1e-14);
        assert!(ps.is_positive());
        let sq = ps.matrix() * ps.matrix();
        assert!(sq.max_abs_diff(ps.matrix()) < 1e-14);
    }

    #[test]
    fn pseudo_state_reproduces_weak_value() {
        let mut rng = SeededRng::new(18);
        for dim in 2..=4 {
            for _ in 0..10 {
                let rho = random_state(dim, &mut rng);
                let obs = random_observable(dim, &mut rng);
                let ket: Vec<Complex64> = (0..dim)
                    .map(|_| Complex64::new(rng.standard_normal(), rng.standard_normal()))
                    .collect();
                let sel = Observable::projector(&ket).unwrap();
                let w = real_weak_value(&rho, &sel, &obs).unwrap();
                let ps = pseudo_state(&rho, &sel).unwrap();
                assert!((ps.expectation(&obs).unwrap() - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn real_weak_value_is_real_part_of_complex() {
        let mut rng = SeededRng::new(19);
        for dim in 2..=4 {
            for _ in 0..10 {
                let obs = random_observable(dim, &mut rng);
                let mk = |rng: &mut SeededRng| -> Vec<Complex64> {
                    (0..dim)
                        .map(|_| Complex64::new(rng.standard_normal(), rng.standard_normal()))
                        .collect()
                };
                let (i, f) = (mk(&mut rng), mk(&mut rng));
                let cw = complex_weak_value_kets(&i, &f, &obs).unwrap();
                let rw = real_weak_value(
                    &DensityOperator::pure(&i).unwrap(),
                    &Observable::projector(&f).unwrap(),
                    &obs,
                )
                .unwrap();
                assert!((cw.re - rw).abs() < 1e-12 * cw.re.abs().max(1.0));
            }
        }
    }

    #[test]
    fn postselected_density_without_selection_is_plain_density() {
        let mut rng = SeededRng::new(20);
        let rho = random_state(3, &mut rng);
        let obs = random_observable(3, &mut rng);
        let id = Observable::identity(3).unwrap();
        let d = PostselectedOutcomeDensity::new(&rho, &id, &obs, 0.7).unwrap();
        assert!((d.acceptance_rate() - 1.0).abs() < 1e-12);
        for &a in &[-3.0, -1.0, 0.2, 2.5] {
            assert!((d.density(a) - outcome_density(&rho, &obs, 0.7, a).unwrap()).abs() < 1e-12);
        }
        assert!((d.mean() - quantum_mean(&rho, &obs).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn postselected_density_moments_by_quadrature() {
        let s = AnomalySetup::new(FRAC_PI_3);
        for &sigma in &[0.5, 3.0] {
            let d = PostselectedOutcomeDensity::new(&s.initial, &s.postselector, &s.observable, sigma).unwrap();
            let (lo, hi, n) = (-12.0 * sigma - 1.0, 12.0 * sigma + 1.0, 40_000);
            let h = (hi - lo) / n as f64;
            let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
            for k in 0..=n {
                let w = if k == 0 || k == n {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let a = lo + k as f64 * h;
                let p = d.density(a);
                m0 += w * p;
                m1 += w * p * a;
                m2 += w * p * a * a;
            }
            let (m0, m1, m2) = (m0 * h / 3.0, m1 * h / 3.0, m2 * h / 3.0);
            assert!((m0 - 1.0).abs() < 1e-10);
            assert!((m1 - d.mean()).abs() < 1e-10);
            assert!((m2 - d.second_moment()).abs() < 1e-8 * sigma * sigma);
        }
    }

    #[test]
    fn anomaly_postselection_rate() {
        for &phi in &[0.0, 0.5, FRAC_PI_3, 1.4] {
            let s = AnomalySetup::new(phi);
            let rate = postselection_rate(&s.initial, &s.postselector).unwrap();
            assert!((rate - phi.cos().powi(2)).abs() < 1e-14);
        }
        let s = AnomalySetup::new(2.0 * PI / 3.0);
        assert!((s.predicted_weak_value() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn trivial_postselector_always_accepts() {
        let s = AnomalySetup::new(FRAC_PI_3);
        let id = Observable::identity(2).unwrap();
        let mut rng = SeededRng::new(21);
        for _ in 0..500 {
            let r = postselected_quantum_run(&s.initial, &id, &s.observable, 1.0, &mut rng).unwrap();
            assert!(matches!(r, RunOutcome::Accepted(_)));
        }
    }

    #[test]
    fn monte_carlo_matches_postselected_density() {
        let s = AnomalySetup::new(FRAC_PI_3);
        let sigma = 1.0;
        let d = PostselectedOutcomeDensity::new(&s.initial, &s.postselector, &s.observable, sigma).unwrap();
        let mut rng = SeededRng::new(22);
        let runs = 200_000;
        let accepted: Vec<f64> = (0..runs)
            .filter_map(|_| {
                postselected_quantum_run(&s.initial, &s.postselector, &s.observable, sigma, &mut rng)
                    .unwrap()
                    .accepted()
            })
            .collect();
        let n = accepted.len() as f64;
        let rate = n / runs as f64;
        let rate_se = (d.acceptance_rate() * (1.0 - d.acceptance_rate()) / runs as f64).sqrt();
        assert!((rate - d.acceptance_rate()).abs() < 3.0 * rate_se, "rate {rate}");
        let mean = accepted.iter().sum::<f64>() / n;
        let var = d.second_moment() - d.mean().powi(2);
        assert!(
            (mean - d.mean()).abs() < 3.0 * (var / n).sqrt(),
            "mean {mean} vs {}",
            d.mean()
        );
    }

    #[test]
    fn postselection_bias_away_from_weak_limit() {
        let s = AnomalySetup::new(FRAC_PI_3);
        let mut rng = SeededRng::new(23);
        let summary = |sigma: f64, rng: &mut SeededRng| {
            let acc: Vec<f64> = (0..3600)
                .filter_map(|_| {
                    postselected_quantum_run(&s.initial, &s.postselector, &s.observable, sigma, rng)
                        .unwrap()
                        .accepted()
                })
                .collect();
            let n = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let var = acc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        };
        let (sharp_mean, sharp_se) = summary(0.1, &mut rng);
        assert!(
            (sharp_mean - 2.0).abs() > 5.0 * sharp_se,
            "σ=0.1 mean {sharp_mean} se {sharp_se}"
        );
        let (weak_mean, weak_se) = summary(100.0, &mut rng);
        assert!(
            (weak_mean - 2.0).abs() < 3.0 * weak_se,
            "σ=100 mean {weak_mean} se {weak_se}"
        );
    }
}
