//! Input–output scattering: S = iKM⁻¹K − I and S_loss = iKM⁻¹K_int, plus the
//! change to the quadrature basis I = b + b†, Q = −i(b − b†).

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::linalg::{hadamard_ratio, max_abs, max_abs_c, symplectic_form};

/// Threshold on |det M| / Π‖row‖ below which M is treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Ladder,
    Quadrature,
}

/// Signal-port and internal-loss-port scattering matrices in the ladder basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringPair {
    pub s: DMatrix<Complex64>,
    pub s_loss: DMatrix<Complex64>,
    pub basis: Basis,
}

/// The same pair transformed to the interleaved quadrature basis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureScattering {
    pub s: DMatrix<f64>,
    pub s_loss: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScatteringOptions {
    /// Evaluate the formal stationary solution even when a pair is driven at or
    /// above its parametric threshold.
    pub allow_unstable: bool,
}

/// J = diag(+1, …, +1, −1, …, −1) in the ladder basis.
pub fn ladder_j(n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        if r != c {
            Complex64::new(0.0, 0.0)
        } else if r < n {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(-1.0, 0.0)
        }
    })
}

/// Refuse couplings with |B_jk| ≥ sqrt(γ_j γ_k)/2, the two-mode instability
/// threshold (γ_j/2 for single-mode squeezing).
pub fn check_threshold(cm: &CouplingMatrix, gamma_tot: &[f64]) -> Result<()> {
    let b = cm.b_block();
    for j in 0..cm.n_modes {
        for k in j..cm.n_modes {
            let eps = b[(j, k)].norm();
            if eps == 0.0 {
                continue;
            }
            let threshold = (gamma_tot[j] * gamma_tot[k]).sqrt() / 2.0;
            if eps >= threshold {
                return Err(Error::AboveThreshold { j, k, eps, threshold });
            }
        }
    }
    Ok(())
}

/// Smallest imaginary part over the eigenvalues of M. The network relaxes to a
/// steady state only when this is positive. Collective thresholds, such as a
/// ring of equal couplings, are reached before any single pair's threshold.
pub fn stability_margin(cm: &CouplingMatrix) -> f64 {
    cm.m.clone().schur().eigenvalues().map_or(f64::NAN, |e| e.iter().map(|z| z.im).fold(f64::INFINITY, f64::min))
}

pub fn scattering_matrices(cm: &CouplingMatrix, gamma_ext: &[f64], gamma_int: &[f64]) -> Result<ScatteringPair> {
    scattering_matrices_with(cm, gamma_ext, gamma_int, ScatteringOptions::default())
}

pub fn scattering_matrices_with(
    cm: &CouplingMatrix,
    gamma_ext: &[f64],
    gamma_int: &[f64],
    opts: ScatteringOptions,
) -> Result<ScatteringPair> {
    let n = cm.n_modes;
    if gamma_ext.len() != n || gamma_int.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} external and {} internal rates for {n} modes",
            gamma_ext.len(),
            gamma_int.len()
        )));
    }
    if gamma_ext.iter().chain(gamma_int).any(|g| !(*g >= 0.0)) {
        return Err(Error::InvalidParameter("loss rates must be nonnegative".into()));
    }
    if !opts.allow_unstable {
        let tot: Vec<f64> = gamma_ext.iter().zip(gamma_int).map(|(a, b)| a + b).collect();
        check_threshold(cm, &tot)?;
        if stability_margin(cm) <= 0.0 {
            log::warn!("mode-coupling matrix has an eigenvalue with Im ≤ 0; the network is beyond its collective threshold");
        }
    }
    let ratio = hadamard_ratio(&cm.m);
    if ratio < SINGULAR_RATIO {
        return Err(Error::SingularMatrix { ratio });
    }
    let m_inv = cm.m.clone().try_inverse().ok_or(Error::SingularMatrix { ratio })?;
    let diag = |rates: &[f64]| {
        let d: Vec<Complex64> = rates.iter().chain(rates).map(|g| Complex64::new(g.sqrt(), 0.0)).collect();
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d))
    };
    let k = diag(gamma_ext);
    let k_int = diag(gamma_int);
    let i = Complex64::new(0.0, 1.0);
    let km = &k * &m_inv;
    let s = (&km * &k) * i - DMatrix::identity(2 * n, 2 * n);
    let s_loss = (&km * &k_int) * i;
    Ok(ScatteringPair { s, s_loss, basis: Basis::Ladder })
}

impl ScatteringPair {
    pub fn n_modes(&self) -> usize {
        self.s.nrows() / 2
    }

    /// max |S J S† + S_loss J S_loss† − J|; zero for a valid (lossy) network.
    pub fn pseudo_unitarity_residual(&self) -> f64 {
        let j = ladder_j(self.n_modes());
        let lhs = &self.s * &j * self.s.adjoint() + &self.s_loss * &j * self.s_loss.adjoint();
        max_abs_c(&(lhs - j))
    }

    pub fn to_quadrature_basis(&self) -> Result<QuadratureScattering> {
        Ok(QuadratureScattering { s: to_quadrature(&self.s)?, s_loss: to_quadrature(&self.s_loss)? })
    }

    /// Magnitude table in dB relative to |S_ref| with phase in radians, one row
    /// per (output, input) element.
    pub fn magnitude_db_csv(&self, labels: &[i64], reference: (usize, usize)) -> Result<String> {
        let n = self.n_modes();
        if labels.len() != n || reference.0 >= n || reference.1 >= n {
            return Err(Error::DimensionMismatch("labels or reference element out of range".into()));
        }
        let r = self.s[reference].norm();
        if r == 0.0 {
            return Err(Error::InvalidParameter("reference element has zero magnitude".into()));
        }
        let mut out = String::from("out_mode,in_mode,magnitude_db,phase_rad,conjugate\n");
        for row in 0..n {
            for col in 0..2 * n {
                let v = self.s[(row, col)];
                let db = 20.0 * (v.norm() / r).log10();
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{:.9},{}",
                    labels[row],
                    labels[col % n],
                    db,
                    v.arg(),
                    u8::from(col >= n)
                );
            }
        }
        Ok(out)
    }
}

/// Ladder-to-quadrature transform U with x_IQ = U · (b, b†).
pub fn quadrature_transform(n: usize) -> DMatrix<Complex64> {
    let mut u = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        u[(2 * j, j)] = Complex64::new(1.0, 0.0);
        u[(2 * j, n + j)] = Complex64::new(1.0, 0.0);
        u[(2 * j + 1, j)] = Complex64::new(0.0, -1.0);
        u[(2 * j + 1, n + j)] = Complex64::new(0.0, 1.0);
    }
    u
}

/// Inverse of [`quadrature_transform`]: b = (I + iQ)/2, b† = (I − iQ)/2.
pub fn quadrature_transform_inverse(n: usize) -> DMatrix<Complex64> {
    let mut u = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        u[(j, 2 * j)] = Complex64::new(0.5, 0.0);
        u[(j, 2 * j + 1)] = Complex64::new(0.0, 0.5);
        u[(n + j, 2 * j)] = Complex64::new(0.5, 0.0);
        u[(n + j, 2 * j + 1)] = Complex64::new(0.0, -0.5);
    }
    u
}

/// S_IQ = U S U⁻¹. Errors if the result carries an imaginary part above 1e-9
/// (relative to the largest element when that exceeds one).
pub fn to_quadrature(s: &DMatrix<Complex64>) -> Result<DMatrix<f64>> {
    if s.nrows() != s.ncols() || s.nrows() % 2 != 0 {
        return Err(Error::DimensionMismatch(format!("expected even square matrix, got {}x{}", s.nrows(), s.ncols())));
    }
    let n = s.nrows() / 2;
    let t = quadrature_transform(n) * s * quadrature_transform_inverse(n);
    let scale = max_abs_c(&t).max(1.0);
    let residue = t.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    if residue > 1e-9 * scale {
        return Err(Error::NonPhysicalInput(format!("quadrature transform has imaginary residue {residue:.3e}")));
    }
    Ok(t.map(|z| z.re))
}

/// Inverse direction, quadrature to ladder.
pub fn to_ladder(s_iq: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = s_iq.nrows() / 2;
    quadrature_transform_inverse(n) * crate::linalg::to_complex(s_iq) * quadrature_transform(n)
}

/// max |S Ω Sᵀ − Ω|.
pub fn symplectic_residual(s_iq: &DMatrix<f64>) -> f64 {
    let omega = symplectic_form(s_iq.nrows() / 2);
    max_abs(&(s_iq * &omega * s_iq.transpose() - omega))
}
