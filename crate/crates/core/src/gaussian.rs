//! Central Gaussian kernel `G_σ` and its square root.

use std::f64::consts::PI;

/// `G_σ(x) = exp(-x²/2σ²) / (√(2π) σ)`.
pub fn gaussian_density(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / ((2.0 * PI).sqrt() * sigma)
}

/// `G_σ^{1/2}(x)`, the pointer amplitude of a Gaussian meter.
pub fn gaussian_sqrt(x: f64, sigma: f64) -> f64 {
    (-0.25 * (x / sigma).powi(2)).exp() / (2.0 * PI * sigma * sigma).powf(0.25)
}

/// `∫ G_σ^{1/2}(a - x) G_σ^{1/2}(a - y) da = exp(-(x - y)²/8σ²)`.
pub fn overlap(x: f64, y: f64, sigma: f64) -> f64 {
    (-(x - y).powi(2) / (8.0 * sigma * sigma)).exp()
}
