//! Small dense complex matrices.
//!
//! Everything here is sized for the handful-of-levels systems the simulator
//! works with (dimension at most [`MAX_DIM`]). Hermitian eigenproblems are
//! solved with a cyclic complex Jacobi sweep, which is unconditionally stable
//! and accurate to a few ulps at these sizes.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 64;

/// Tolerance used when checking `m == m†`.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Default tolerance for merging nearly equal eigenvalues.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-9;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

/// Square complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![C0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C1;
        }
        m
    }

    /// Builds a matrix from rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Outer product `|u><v|`.
    pub fn outer(u: &[Complex64], v: &[Complex64]) -> Self {
        let dim = u.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = u[i] * v[j].conj();
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> Complex64 {
        self.data.iter().step_by(self.dim + 1).sum()
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(i, j)] = self[(j, i)].conj();
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &CMatrix) -> Complex64 {
        let n = self.dim;
        let mut acc = C0;
        for i in 0..n {
            for k in 0..n {
                acc += self.data[i * n + k] * other.data[k * n + i];
            }
        }
        acc
    }

    pub fn commutator(&self, other: &CMatrix) -> Self {
        &(self * other) - &(other * self)
    }

    /// `(m + m†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(i, j)] = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
            }
        }
        m
    }

    /// Largest `|m_ij - conj(m_ji)|`.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .fold(0.0, f64::max)
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn mat_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim;
        (0..n)
            .map(|i| (0..n).map(|k| self.data[i * n + k] * v[k]).sum())
            .collect()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl<'a> Mul<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &'a CMatrix) -> CMatrix {
        let n = self.dim;
        debug_assert_eq!(n, rhs.dim);
        let mut out = CMatrix::zeros(n);
        for (out_row, a_row) in out.data.chunks_exact_mut(n).zip(self.data.chunks_exact(n)) {
            for (&a, b_row) in a_row.iter().zip(rhs.data.chunks_exact(n)) {
                if a == C0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

impl<'a> Add<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &'a CMatrix) -> CMatrix {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &'a CMatrix) -> CMatrix {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{})[", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// A validated Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Validates `m` and stores its exact Hermitian part.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.dim() == 0 || m.dim() > MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "dimension must lie in 1..={MAX_DIM}, got {}",
                m.dim()
            )));
        }
        let asymmetry = m.hermitian_asymmetry();
        if asymmetry > HERMITIAN_TOL {
            return Err(Error::NonHermitian { asymmetry });
        }
        Ok(Self(m.hermitian_part()))
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(CMatrix::from_real_rows(rows)?)
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(CMatrix::diagonal(values))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(CMatrix::identity(dim))
    }

    pub fn pauli_x() -> Self {
        Self(CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap())
    }

    pub fn pauli_y() -> Self {
        let i = Complex64::i();
        Self(CMatrix::from_rows(&[vec![C0, -i], vec![i, C0]]).unwrap())
    }

    pub fn pauli_z() -> Self {
        Self(CMatrix::diagonal(&[1.0, -1.0]))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> Vec<Complex64> {
        (0..self.vectors.dim()).map(|i| self.vectors[(i, k)]).collect()
    }
}

/// Diagonalizes a Hermitian matrix by cyclic complex Jacobi rotations.
///
/// Only the Hermitian part of `m` is used; callers validate beforehand.
pub fn eigh(m: &CMatrix) -> Eigen {
    let n = m.dim();
    let mut a = m.hermitian_part();
    let mut v = CMatrix::identity(n);

    if n == 1 {
        return Eigen {
            values: vec![a[(0, 0)].re],
            vectors: v,
        };
    }

    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)].norm_sqr())
            .sum();
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = v[(row, src)];
        }
    }
    Eigen { values, vectors }
}

/// One Jacobi rotation annihilating `a[p][q]`; accumulates into `v`.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let n = a.dim();
    // Phase that makes the (p, q) element real, then a real rotation.
    let phase = apq / mag;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let tau = (aqq - app) / (2.0 * mag);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // Rotation R = D·J with D = diag(1, conj(phase)) on (p, q) and J the
    // real Givens rotation [[c, s], [-s, c]].
    let r_pp = Complex64::new(c, 0.0);
    let r_pq = Complex64::new(s, 0.0);
    let r_qp = phase.conj() * (-s);
    let r_qq = phase.conj() * c;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * r_pp + akq * r_qp;
        a[(k, q)] = akp * r_pq + akq * r_qq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = r_pp.conj() * apk + r_qp.conj() * aqk;
        a[(q, k)] = r_pq.conj() * apk + r_qq.conj() * aqk;
    }
    a[(p, q)] = C0;
    a[(q, p)] = C0;
    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * r_pp + vkq * r_qp;
        v[(k, q)] = vkp * r_pq + vkq * r_qq;
    }
}

/// Cholesky test for a Hermitian matrix: `true` iff every pivot is
/// strictly positive, i.e. the matrix is positive definite.
pub fn is_positive_definite(m: &CMatrix) -> bool {
    is_positive_definite_shifted(m, 0.0)
}

/// [`is_positive_definite`] for `m + shift·1`.
pub fn is_positive_definite_shifted(m: &CMatrix, shift: f64) -> bool {
    let n = m.dim();
    let mut l = m.data.clone();
    for j in 0..n {
        l[j * n + j] += shift;
    }
    for j in 0..n {
        let mut d = l[j * n + j].re;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        l[j * n + j] = Complex64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut x = l[i * n + j];
            for k in 0..j {
                x -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = x / d;
        }
    }
    true
}

/// Spectral resolution `m = Σ_λ a_λ P_λ` with degenerate eigenvalues merged.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    projectors: Vec<CMatrix>,
}

impl SpectralDecomposition {
    /// Distinct eigenvalues, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenprojectors, one per entry of [`eigenvalues`](Self::eigenvalues).
    pub fn projectors(&self) -> &[CMatrix] {
        &self.projectors
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.projectors[0].dim()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &CMatrix)> {
        self.eigenvalues.iter().copied().zip(self.projectors.iter())
    }

    /// `Σ_λ a_λ P_λ`.
    pub fn reconstruct(&self) -> CMatrix {
        self.apply(|x| x)
    }

    /// `Σ_λ f(a_λ) P_λ` as a raw matrix.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim());
        for (value, proj) in self.iter() {
            let fv = f(value);
            for (o, p) in out.data.iter_mut().zip(&proj.data) {
                *o += p * fv;
            }
        }
        out
    }
}

pub fn spectral_decompose(m: &HermitianMatrix, degeneracy_tol: f64) -> Result<SpectralDecomposition> {
    if !(degeneracy_tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "degeneracy_tol must be positive, got {degeneracy_tol}"
        )));
    }
    let asymmetry = m.matrix().hermitian_asymmetry();
    if asymmetry > HERMITIAN_TOL {
        return Err(Error::NonHermitian { asymmetry });
    }
    let eig = eigh(m.matrix());
    let n = m.dim();

    // Group consecutive (ascending) eigenvalues whose spread stays within tol.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for k in 0..n {
        match groups.last_mut() {
            Some(g) if eig.values[k] - eig.values[g[0]] <= degeneracy_tol => g.push(k),
            _ => groups.push(vec![k]),
        }
    }

    let mut eigenvalues = Vec::with_capacity(groups.len());
    let mut projectors = Vec::with_capacity(groups.len());
    for g in groups {
        let mean = g.iter().map(|&k| eig.values[k]).sum::<f64>() / g.len() as f64;
        let mut proj = CMatrix::zeros(n);
        for &k in &g {
            let u = eig.vector(k);
            for i in 0..n {
                for j in 0..n {
                    proj[(i, j)] += u[i] * u[j].conj();
                }
            }
        }
        eigenvalues.push(mean);
        projectors.push(proj);
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        projectors,
    })
}

/// `f(m) = Σ_λ f(a_λ) P_λ`.
pub fn matrix_function(sd: &SpectralDecomposition, f: impl Fn(f64) -> f64) -> HermitianMatrix {
    HermitianMatrix(sd.apply(f).hermitian_part())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::gaussian_sqrt;
    use crate::rng::SeededRng;

    fn random_hermitian(dim: usize, rng: &mut SeededRng) -> HermitianMatrix {
        let mut m = CMatrix::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(rng.standard_normal(), 0.0);
            for j in (i + 1)..dim {
                let z = Complex64::new(rng.standard_normal(), rng.standard_normal());
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        HermitianMatrix::new(m).unwrap()
    }

    fn assert_close(a: &CMatrix, b: &CMatrix, tol: f64) {
        let d = a.max_abs_diff(b);
        assert!(d <= tol, "max diff {d:e} > {tol:e}\n{a:?}\n{b:?}");
    }

    #[test]
    fn diagonal_decomposition() {
        let m = HermitianMatrix::diagonal(&[1.0, -1.0]).unwrap();
        let sd = spectral_decompose(&m, DEFAULT_DEGENERACY_TOL).unwrap();
        assert_eq!(sd.eigenvalues(), &[-1.0, 1.0]);
        assert_close(&sd.projectors()[0], &CMatrix::diagonal(&[0.0, 1.0]), 1e-15);
        assert_close(&sd.projectors()[1], &CMatrix::diagonal(&[1.0, 0.0]), 1e-15);
    }

    #[test]
    fn pauli_x_eigenvalues() {
        let sd = spectral_decompose(&HermitianMatrix::pauli_x(), DEFAULT_DEGENERACY_TOL).unwrap();
        assert_eq!(sd.len(), 2);
        assert!((sd.eigenvalues()[0] + 1.0).abs() < 1e-14);
        assert!((sd.eigenvalues()[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pauli_y_reconstructs() {
        let y = HermitianMatrix::pauli_y();
        let sd = spectral_decompose(&y, DEFAULT_DEGENERACY_TOL).unwrap();
        assert_close(&sd.reconstruct(), y.matrix(), 1e-14);
    }

    #[test]
    fn random_4x4_reconstruction() {
        let mut rng = SeededRng::new(20240601);
        let m = random_hermitian(4, &mut rng);
        let sd = spectral_decompose(&m, DEFAULT_DEGENERACY_TOL).unwrap();
        assert_eq!(sd.len(), 4);
        assert_close(&sd.reconstruct(), m.matrix(), 1e-10);
    }

    #[test]
    fn degenerate_eigenvalues_merge() {
        let m = HermitianMatrix::diagonal(&[2.0, 0.5, 2.0]).unwrap();
        let sd = spectral_decompose(&m, DEFAULT_DEGENERACY_TOL).unwrap();
        assert_eq!(sd.eigenvalues(), &[0.5, 2.0]);
        assert_close(&sd.projectors()[1], &CMatrix::diagonal(&[1.0, 0.0, 1.0]), 1e-15);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(HermitianMatrix::new(m), Err(Error::NonHermitian { .. })));
    }

    #[test]
    fn rejects_bad_tolerance() {
        let err = spectral_decompose(&HermitianMatrix::pauli_z(), 0.0).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn identity_function_on_pauli_z() {
        let z = HermitianMatrix::pauli_z();
        let sd = spectral_decompose(&z, DEFAULT_DEGENERACY_TOL).unwrap();
        assert_close(matrix_function(&sd, |x| x).matrix(), z.matrix(), 1e-15);
    }

    #[test]
    fn square_of_pauli_x_is_identity() {
        let sd = spectral_decompose(&HermitianMatrix::pauli_x(), DEFAULT_DEGENERACY_TOL).unwrap();
        assert_close(matrix_function(&sd, |x| x * x).matrix(), &CMatrix::identity(2), 1e-14);
    }

    #[test]
    fn gaussian_root_on_pauli_z() {
        let sd = spectral_decompose(&HermitianMatrix::pauli_z(), DEFAULT_DEGENERACY_TOL).unwrap();
        let f = matrix_function(&sd, |x| gaussian_sqrt(0.3 - x, 10.0));
        // Scalar oracle: exp(-x^2 / (4 sigma^2)) / (2 pi sigma^2)^(1/4).
        let oracle = |x: f64| (-x * x / 400.0).exp() / (2.0 * std::f64::consts::PI * 100.0).powf(0.25);
        let expected = CMatrix::diagonal(&[oracle(-0.7), oracle(1.3)]);
        assert_close(f.matrix(), &expected, 1e-15);
    }

    #[test]
    fn constant_function_gives_scaled_identity() {
        let mut rng = SeededRng::new(4);
        let m = random_hermitian(3, &mut rng);
        let sd = spectral_decompose(&m, DEFAULT_DEGENERACY_TOL).unwrap();
        let f = matrix_function(&sd, |_| 2.5);
        assert_close(f.matrix(), &CMatrix::identity(3).scale(2.5), 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn decomposition_invariants(seed in any::<u64>(), dim in 1usize..=6) {
                let mut rng = SeededRng::new(seed);
                let m = random_hermitian(dim, &mut rng);
                let sd = spectral_decompose(&m, DEFAULT_DEGENERACY_TOL).unwrap();

                prop_assert!(sd.reconstruct().max_abs_diff(m.matrix()) <= 1e-10);

                let mut sum = CMatrix::zeros(dim);
                for (i, p) in sd.projectors().iter().enumerate() {
                    sum = &sum + p;
                    for (j, q) in sd.projectors().iter().enumerate() {
                        let prod = p * q;
                        let expected = if i == j { p.clone() } else { CMatrix::zeros(dim) };
                        prop_assert!(prod.max_abs_diff(&expected) <= 1e-10);
                    }
                }
                prop_assert!(sum.max_abs_diff(&CMatrix::identity(dim)) <= 1e-10);
                prop_assert!(sd.eigenvalues().windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn positive_definiteness() {
        assert!(is_positive_definite(&CMatrix::identity(3)));
        assert!(!is_positive_definite(&CMatrix::diagonal(&[1.0, 0.0])));
        assert!(!is_positive_definite(&CMatrix::diagonal(&[1.0, -1e-15])));
        assert!(is_positive_definite_shifted(&CMatrix::diagonal(&[1.0, -1e-15]), 1e-14));
        assert!(!is_positive_definite_shifted(&CMatrix::diagonal(&[1.0, -1e-13]), 1e-14));
        let mut rng = SeededRng::new(17);
        for dim in 1..6 {
            for _ in 0..20 {
                let h = random_hermitian(dim, &mut rng);
                let min = eigh(h.matrix()).values[0];
                assert_eq!(is_positive_definite(h.matrix()), min > 0.0, "min eigenvalue {min}");
            }
        }
    }
}
