//! Quadrature covariance matrices of zero-mean Gaussian states.
//!
//! Quadratures are I = b + b†, Q = −i(b − b†), so the vacuum covariance is the
//! identity. Matrices are stored in interleaved order (I₁, Q₁, …, I_N, Q_N);
//! [`CovarianceMatrix::block_order`] gives the (I…, Q…) arrangement.

mod amplifier;
mod sampling;

pub use amplifier::{amplify, deamplify, normalize_raw_moments, AmplifierModel, FitUncertainty};
pub use sampling::{
    align_pair_phase, histogram_2d, sample, sample_with_rng, squeezing_stats, Histogram2d, PumpState,
    QuadratureSamples, SqueezingStats,
};

use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{interleaved_to_block, min_eigenvalue, symmetrize, uncertainty_min_eigenvalue};
use crate::modesys::ModeSpec;
use crate::scattering::QuadratureScattering;
use crate::units::bose_occupation;

/// Default tolerance on min-eig(V + iΩ) for the physicality predicate.
pub const PHYSICAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    v: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Wrap a matrix, requiring symmetry to 1e-12 (relative to its largest entry
    /// when that exceeds one). The stored matrix is exactly symmetrized.
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        if v.nrows() != v.ncols() || v.nrows() % 2 != 0 || v.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "covariance must be a nonempty even square matrix, got {}x{}",
                v.nrows(),
                v.ncols()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonPhysicalInput("covariance has non-finite entries".into()));
        }
        let scale = v.amax().max(1.0);
        let asym = (&v - v.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::NonPhysicalInput(format!("covariance not symmetric (max asymmetry {asym:.3e})")));
        }
        Ok(Self { v: symmetrize(&v) })
    }

    /// Symmetrize first, for estimates that are symmetric only up to rounding.
    pub fn from_symmetrized(v: DMatrix<f64>) -> Result<Self> {
        Self::new(symmetrize(&v))
    }

    pub fn vacuum(n_modes: usize) -> Self {
        Self { v: DMatrix::identity(2 * n_modes, 2 * n_modes) }
    }

    /// Ideal two-mode squeezed vacuum with squeezing parameter r: diagonal
    /// cosh 2r, cross block sinh 2r · diag(1, −1).
    pub fn two_mode_squeezed(r: f64) -> Self {
        let c = (2.0 * r).cosh();
        let s = (2.0 * r).sinh();
        #[rustfmt::skip]
        let v = DMatrix::from_row_slice(4, 4, &[
            c, 0.0, s, 0.0,
            0.0, c, 0.0, -s,
            s, 0.0, c, 0.0,
            0.0, -s, 0.0, c,
        ]);
        Self { v }
    }

    pub fn n_modes(&self) -> usize {
        self.v.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.v
    }

    /// Same state in block order (I₁…I_N, Q₁…Q_N).
    pub fn block_order(&self) -> DMatrix<f64> {
        let p = interleaved_to_block(self.n_modes());
        &p * &self.v * p.transpose()
    }

    /// ⟨I_i I_j⟩ submatrix.
    pub fn ii_block(&self) -> DMatrix<f64> {
        let n = self.n_modes();
        DMatrix::from_fn(n, n, |i, j| self.v[(2 * i, 2 * j)])
    }

    /// ⟨Q_i Q_j⟩ submatrix.
    pub fn qq_block(&self) -> DMatrix<f64> {
        let n = self.n_modes();
        DMatrix::from_fn(n, n, |i, j| self.v[(2 * i + 1, 2 * j + 1)])
    }

    /// ⟨I_i Q_j⟩ submatrix.
    pub fn iq_block(&self) -> DMatrix<f64> {
        let n = self.n_modes();
        DMatrix::from_fn(n, n, |i, j| self.v[(2 * i, 2 * j + 1)])
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.v)
    }

    /// min-eig(V + iΩ); equal to min-eig(V − iΩ) for real symmetric V.
    pub fn uncertainty_min_eigenvalue(&self) -> f64 {
        uncertainty_min_eigenvalue(&self.v)
    }

    /// V ⪰ 0 and V + iΩ ⪰ 0, each to within `tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol && self.uncertainty_min_eigenvalue() >= -tol
    }

    /// Reduced state of the listed modes, in the given order.
    pub fn submatrix(&self, modes: &[usize]) -> Result<Self> {
        let n = self.n_modes();
        if let Some(bad) = modes.iter().find(|&&m| m >= n) {
            return Err(Error::DimensionMismatch(format!("mode {bad} out of range for {n}-mode state")));
        }
        let idx: Vec<usize> = modes.iter().flat_map(|m| [2 * m, 2 * m + 1]).collect();
        Ok(Self { v: DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.v[(idx[r], idx[c])]) })
    }

    /// Apply a per-mode 2×2 real transform L = ⊕ L_j: V → L V Lᵀ.
    pub fn local_transform(&self, blocks: &[Matrix2<f64>]) -> Result<Self> {
        let n = self.n_modes();
        if blocks.len() != n {
            return Err(Error::DimensionMismatch(format!("{} local blocks for {n} modes", blocks.len())));
        }
        let mut l = DMatrix::zeros(2 * n, 2 * n);
        for (j, b) in blocks.iter().enumerate() {
            l.view_mut((2 * j, 2 * j), (2, 2)).copy_from(b);
        }
        Self::from_symmetrized(&l * &self.v * l.transpose())
    }

    /// Rotate each mode's phase: (I, Q) → (I cos φ + Q sin φ, −I sin φ + Q cos φ).
    pub fn rotate_modes(&self, angles: &[f64]) -> Result<Self> {
        let blocks: Vec<Matrix2<f64>> = angles.iter().map(|a| rotation(*a)).collect();
        self.local_transform(&blocks)
    }

    /// Add `t` times the identity (uniform thermal noise).
    pub fn add_noise(&self, t: f64) -> Self {
        let dim = self.v.nrows();
        Self { v: &self.v + DMatrix::identity(dim, dim) * t }
    }

    pub fn to_csv(&self) -> String {
        let dim = self.v.nrows();
        let mut s = String::new();
        let header: Vec<String> = (0..self.n_modes()).flat_map(|j| [format!("I{j}"), format!("Q{j}")]).collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for r in 0..dim {
            let row: Vec<String> = (0..dim).map(|c| format!("{:.12e}", self.v[(r, c)])).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
            match parsed {
                Ok(r) => rows.push(r),
                Err(_) if rows.is_empty() => continue, // header
                Err(e) => return Err(Error::InvalidParameter(format!("line {}: {e}", ln + 1))),
            }
        }
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("covariance CSV is not square".into()));
        }
        Self::new(DMatrix::from_fn(dim, dim, |r, c| rows[r][c]))
    }
}

pub fn rotation(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, s, -s, c)
}

/// Thermal state of the given modes: V_ii = 2n̄(ω_i, T) + 1.
pub fn thermal_covariance(modes: &[ModeSpec], temperature: f64) -> Result<CovarianceMatrix> {
    if !(temperature >= 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be nonnegative, got {temperature}")));
    }
    let n = modes.len();
    let mut v = DMatrix::zeros(2 * n, 2 * n);
    for (j, m) in modes.iter().enumerate() {
        let x = 2.0 * bose_occupation(m.omega, temperature) + 1.0;
        v[(2 * j, 2 * j)] = x;
        v[(2 * j + 1, 2 * j + 1)] = x;
    }
    CovarianceMatrix::new(v)
}

/// V_out = S V_in Sᵀ + S_loss V_loss S_lossᵀ.
pub fn output_covariance(
    sc: &QuadratureScattering,
    v_in: &CovarianceMatrix,
    v_loss: &CovarianceMatrix,
) -> Result<CovarianceMatrix> {
    let dim = sc.s.nrows();
    if sc.s_loss.nrows() != dim || v_in.v.nrows() != dim || v_loss.v.nrows() != dim {
        return Err(Error::DimensionMismatch(format!(
            "scattering {dim}x{dim}, inputs {} and {}",
            v_in.v.nrows(),
            v_loss.v.nrows()
        )));
    }
    let v = &sc.s * &v_in.v * sc.s.transpose() + &sc.s_loss * &v_loss.v * sc.s_loss.transpose();
    CovarianceMatrix::from_symmetrized(v)
}

/// C = sqrt(V₁₃² + V₁₄² + V₂₃² + V₂₄²) over the cross block of a two-mode state.
pub fn correlation_quantity(v: &CovarianceMatrix) -> Result<f64> {
    if v.n_modes() != 2 {
        return Err(Error::DimensionMismatch(format!("correlation quantity needs 2 modes, got {}", v.n_modes())));
    }
    let m = &v.v;
    Ok((m[(0, 2)].powi(2) + m[(0, 3)].powi(2) + m[(1, 2)].powi(2) + m[(1, 3)].powi(2)).sqrt())
}

/// Real symplectic matrix (interleaved order) of a passive transform b → U b.
pub fn passive_symplectic(u: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = u.nrows();
    let mut s = DMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let z = u[(r, c)];
            s[(2 * r, 2 * c)] = z.re;
            s[(2 * r, 2 * c + 1)] = -z.im;
            s[(2 * r + 1, 2 * c)] = z.im;
            s[(2 * r + 1, 2 * c + 1)] = z.re;
        }
    }
    s
}

/// Haar-random unitary from the QR decomposition of a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<Complex64> {
    let z = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for c in 0..n {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for row in 0..n {
            q[(row, c)] *= phase;
        }
    }
    q
}

/// Random symplectic matrix O₁ · ⊕diag(e^{r_k}, e^{−r_k}) · O₂ with r_k uniform in
/// [0, max_squeeze].
pub fn random_symplectic<R: Rng + ?Sized>(n: usize, max_squeeze: f64, rng: &mut R) -> DMatrix<f64> {
    let o1 = passive_symplectic(&random_unitary(n, rng));
    let o2 = passive_symplectic(&random_unitary(n, rng));
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        let r = rng.random_range(0.0..=max_squeeze);
        d[(2 * k, 2 * k)] = r.exp();
        d[(2 * k + 1, 2 * k + 1)] = (-r).exp();
    }
    o1 * d * o2
}

/// Random physical state S (⊕ν_k I₂) Sᵀ with symplectic eigenvalues ν_k in
/// [1, 1 + max_thermal].
pub fn random_physical<R: Rng + ?Sized>(n: usize, max_squeeze: f64, max_thermal: f64, rng: &mut R) -> CovarianceMatrix {
    let s = random_symplectic(n, max_squeeze, rng);
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        let nu = 1.0 + rng.random_range(0.0..=max_thermal);
        d[(2 * k, 2 * k)] = nu;
        d[(2 * k + 1, 2 * k + 1)] = nu;
    }
    CovarianceMatrix { v: symmetrize(&(&s * d * s.transpose())) }
}
