//! Classical states on a finite phase space.
//!
//! A state is a normalized weight vector over points `X_1..X_n`; phase-space
//! functions are value vectors over the same points. Means, Gaussian
//! measurement with Bayesian update, and postselection are all finite sums,
//! so there is no discretization error anywhere in this module.

use crate::error::{Error, Result};
use crate::rng::SeededRng;

const NORM_TOL: f64 = 1e-12;

/// Normalized probability weights over a finite set of phase-space points.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalState {
    weights: Vec<f64>,
}

impl ClassicalState {
    /// Accepts weights that are nonnegative and sum to one within `1e-12`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidState("state needs at least one point".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidState(format!("weight {w} is negative or not finite")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { weights })
    }

    /// Rescales nonnegative weights to unit sum.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidState(format!(
                "cannot normalize weights summing to {total}"
            )));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidState("state needs at least one point".into()));
        }
        Ok(Self {
            weights: vec![1.0 / n as f64; n],
        })
    }

    /// All weight on point `index`.
    pub fn point_mass(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::InvalidState(format!(
                "point {index} out of range for {n} points"
            )));
        }
        let mut weights = vec![0.0; n];
        weights[index] = 1.0;
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub(crate) fn from_raw_unchecked(weights: Vec<f64>) -> Self {
        Self { weights }
    }
}

/// A real function on the phase space, one value per point.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFunction {
    values: Vec<f64>,
}

impl PhaseFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Distinct values (step heights), ascending.
    pub fn levels(&self) -> Vec<f64> {
        let mut levels = self.values.clone();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        levels
    }

    /// Indicator of the level set `{X : A(X) = level}`.
    pub fn indicator(&self, level: f64) -> Postselector {
        Postselector(PhaseFunction::new(
            self.values
                .iter()
                .map(|&v| if v == level { 1.0 } else { 0.0 })
                .collect(),
        ))
    }

    fn check_len(&self, state: &ClassicalState) -> Result<()> {
        if self.len() != state.len() {
            return Err(Error::LengthMismatch {
                expected: state.len(),
                found: self.len(),
            });
        }
        Ok(())
    }
}

/// A phase function with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Postselector(PhaseFunction);

impl Postselector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            Some(&v) => Err(Error::InvalidPostselector { eigenvalue: v }),
            None => Ok(Self(PhaseFunction::new(values))),
        }
    }

    pub fn function(&self) -> &PhaseFunction {
        &self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }
}

/// Outcome of one postselected run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunOutcome {
    Accepted(f64),
    Discarded,
}

impl RunOutcome {
    pub fn accepted(self) -> Option<f64> {
        match self {
            RunOutcome::Accepted(a) => Some(a),
            RunOutcome::Discarded => None,
        }
    }
}

/// `⟨A⟩_ρ = Σ_i A_i ρ_i`.
pub fn classical_mean(state: &ClassicalState, f: &PhaseFunction) -> Result<f64> {
    f.check_len(state)?;
    Ok(dot(state.weights(), f.values()))
}

/// `Δ²_ρ A = ⟨A²⟩_ρ − ⟨A⟩²_ρ`, clamped at zero against round-off.
pub fn classical_spread(state: &ClassicalState, f: &PhaseFunction) -> Result<f64> {
    let mean = classical_mean(state, f)?;
    let second: f64 = state.weights().iter().zip(f.values()).map(|(w, a)| w * a * a).sum();
    Ok((second - mean * mean).max(0.0))
}

/// Gaussian measurement of `f` with error `sigma`, followed by Bayes' rule.
///
/// The outcome is drawn from the mixture `Σ_i ρ_i G_σ(a − A_i)` by first
/// drawing a point and then adding noise; the posterior is
/// `ρ_i G_σ(a − A_i) / p(a)`, computed in log space so that very small
/// `sigma` does not underflow.
pub fn noisy_measure(
    state: &ClassicalState,
    f: &PhaseFunction,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<(f64, ClassicalState)> {
    f.check_len(state)?;
    check_sigma(sigma)?;
    let point = rng.categorical(state.weights());
    let outcome = rng.normal(f.values()[point], sigma);
    Ok((outcome, bayes_update(state, f, sigma, outcome)))
}

/// Posterior after observing `outcome` with Gaussian error `sigma`.
pub fn bayes_update(state: &ClassicalState, f: &PhaseFunction, sigma: f64, outcome: f64) -> ClassicalState {
    let log_lik: Vec<f64> = f
        .values()
        .iter()
        .map(|&a| -0.5 * ((outcome - a) / sigma).powi(2))
        .collect();
    let max = state
        .weights()
        .iter()
        .zip(&log_lik)
        .filter(|(w, _)| **w > 0.0)
        .map(|(_, l)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = state
        .weights()
        .iter()
        .zip(&log_lik)
        .map(|(&w, &l)| if w > 0.0 { w * (l - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = unnorm.iter().sum();
    ClassicalState::from_raw_unchecked(unnorm.into_iter().map(|w| w / total).collect())
}

/// `⟨Π⟩_ρ`, the rate of postselection.
pub fn selection_rate(state: &ClassicalState, sel: &Postselector) -> Result<f64> {
    classical_mean(state, sel.function())
}

/// `⟨ΠA⟩_ρ / ⟨Π⟩_ρ`.
pub fn classical_postselected_mean(state: &ClassicalState, f: &PhaseFunction, sel: &Postselector) -> Result<f64> {
    f.check_len(state)?;
    let rate = nonzero_rate(state, sel)?;
    let num: f64 = state
        .weights()
        .iter()
        .zip(f.values())
        .zip(sel.values())
        .map(|((w, a), p)| w * a * p)
        .sum();
    Ok(num / rate)
}

/// `ρ_Π = Πρ / ⟨Π⟩_ρ`, always a valid state.
pub fn effective_postselected_state(state: &ClassicalState, sel: &Postselector) -> Result<ClassicalState> {
    let rate = nonzero_rate(state, sel)?;
    Ok(ClassicalState::from_raw_unchecked(
        state
            .weights()
            .iter()
            .zip(sel.values())
            .map(|(w, p)| w * p / rate)
            .collect(),
    ))
}

/// Noisy measurement of `f`, then an ideal measurement of `sel` on the
/// posterior (a point is drawn from it), then acceptance with probability
/// equal to the observed value of `sel`.
pub fn postselected_run(
    state: &ClassicalState,
    f: &PhaseFunction,
    sel: &Postselector,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<RunOutcome> {
    sel.function().check_len(state)?;
    let (outcome, posterior) = noisy_measure(state, f, sigma, rng)?;
    let point = rng.categorical(posterior.weights());
    let pi = sel.values()[point];
    Ok(if rng.bernoulli(pi) {
        RunOutcome::Accepted(outcome)
    } else {
        RunOutcome::Discarded
    })
}

fn nonzero_rate(state: &ClassicalState, sel: &Postselector) -> Result<f64> {
    let rate = selection_rate(state, sel)?;
    if rate <= 0.0 {
        return Err(Error::ZeroSelectionRate { rate });
    }
    Ok(rate)
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
