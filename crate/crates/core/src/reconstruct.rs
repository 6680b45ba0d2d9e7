//! Nearest physical covariance matrix in the weighted max-norm:
//! minimize max_ab |V'_ab − V_ab| / σ_ab subject to V + iΩ ⪰ 0.
//!
//! Solved as min t over (V, t) with |V'_ab − V_ab| ≤ t·σ_ab and V + iΩ ⪰ 0 by a
//! log-barrier path-following method. Free variables are the upper-triangle
//! deviations scaled by σ, y_ab = (V_ab − V'_ab)/σ_ab, so the box is |y| < t.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gaussian::CovarianceMatrix;
use crate::linalg::{hermitian_min_eigenvalue, symmetrize, symplectic_form, uncertainty_min_eigenvalue};

/// Replacement for zero σ entries; such entries are held fixed unless that
/// admits no physical state.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructOptions {
    /// Barrier path is followed until the duality-gap bound falls below
    /// gap_tol · max(1, t).
    pub gap_tol: f64,
    pub max_newton_steps: usize,
    /// Inputs with min-eig(V' + iΩ) ≥ −physical_tol are returned unchanged.
    pub physical_tol: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-9, max_newton_steps: 100, physical_tol: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub v: CovarianceMatrix,
    /// Achieved max_ab |V'_ab − V_ab| / σ_ab.
    pub objective: f64,
    /// False when a Newton stage hit its step limit before converging.
    pub converged: bool,
}

struct Problem {
    v: DMatrix<f64>,
    omega: DMatrix<f64>,
    /// (row, col, σ) for each free upper-triangle entry.
    vars: Vec<(usize, usize, f64)>,
}

impl Problem {
    fn matrix(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.v.clone();
        for (k, &(a, b, s)) in self.vars.iter().enumerate() {
            m[(a, b)] += s * y[k];
            if a != b {
                m[(b, a)] += s * y[k];
            }
        }
        m
    }

    fn hermitian(&self, m: &DMatrix<f64>) -> DMatrix<Complex64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| Complex64::new(m[(r, c)], self.omega[(r, c)]))
    }

    /// Barrier value τ·t − log det H − Σ log(t − y_k) − Σ log(t + y_k), or None
    /// outside the domain.
    fn barrier(&self, tau: f64, y: &DVector<f64>, t: f64) -> Option<f64> {
        let mut f = tau * t;
        for k in 0..y.len() {
            let (u, w) = (t - y[k], t + y[k]);
            if u <= 0.0 || w <= 0.0 {
                return None;
            }
            f -= u.ln() + w.ln();
        }
        let h = self.hermitian(&self.matrix(y));
        let chol = hpd_cholesky(h)?;
        let logdet: f64 = chol.l_dirty().diagonal().iter().map(|z| 2.0 * z.re.ln()).sum();
        Some(f - logdet)
    }

    /// Gradient and Hessian of the barrier in (y, t); t is the last coordinate.
    fn derivatives(&self, tau: f64, y: &DVector<f64>, t: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let m = y.len();
        let h = self.hermitian(&self.matrix(y));
        let g = hpd_cholesky(h)?.inverse();
        let mut grad = DVector::zeros(m + 1);
        let mut hess = DMatrix::zeros(m + 1, m + 1);
        // d/dy_k of −log det H = −σ_k tr(G E_k), E_k the symmetric unit matrix.
        for (k, &(a, b, s)) in self.vars.iter().enumerate() {
            let tr = if a == b { g[(a, a)].re } else { 2.0 * g[(a, b)].re };
            grad[k] -= s * tr;
            for (l, &(c, d, s2)) in self.vars.iter().enumerate().skip(k) {
                let q = trace_gege(&g, a, b, c, d);
                hess[(k, l)] += s * s2 * q;
                if l != k {
                    hess[(l, k)] += s * s2 * q;
                }
            }
        }
        grad[m] += tau;
        for k in 0..m {
            let (u, w) = (t - y[k], t + y[k]);
            if u <= 0.0 || w <= 0.0 {
                return None;
            }
            grad[k] += 1.0 / u - 1.0 / w;
            grad[m] -= 1.0 / u + 1.0 / w;
            let (iu2, iw2) = (1.0 / (u * u), 1.0 / (w * w));
            hess[(k, k)] += iu2 + iw2;
            hess[(m, m)] += iu2 + iw2;
            hess[(k, m)] += iw2 - iu2;
            hess[(m, k)] += iw2 - iu2;
        }
        Some((grad, hess))
    }

    fn objective(&self, y: &DVector<f64>) -> f64 {
        y.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
    }
}

/// Cholesky factor of a Hermitian matrix, or None unless it is positive
/// definite. nalgebra takes complex square roots of the pivots without
/// checking their sign, so an indefinite matrix still factors; a pivot d is
/// positive exactly when its root l has |Im l| < Re l.
fn hpd_cholesky(h: DMatrix<Complex64>) -> Option<Cholesky<Complex64, nalgebra::Dyn>> {
    let chol = Cholesky::new(h)?;
    chol.l_dirty().diagonal().iter().all(|l| l.re > l.im.abs()).then_some(chol)
}

/// tr(G E_ab G E_cd) for symmetric unit matrices E (single entry on the diagonal).
fn trace_gege(g: &DMatrix<Complex64>, a: usize, b: usize, c: usize, d: usize) -> f64 {
    let term = |p: usize, q: usize, r: usize, s: usize| (g[(q, r)] * g[(s, p)]).re;
    // E_ab = e_a e_bᵀ + e_b e_aᵀ, halved when a = b
    let mut acc = term(a, b, c, d) + term(a, b, d, c) + term(b, a, c, d) + term(b, a, d, c);
    if a == b {
        acc *= 0.5;
    }
    if c == d {
        acc *= 0.5;
    }
    acc
}

pub fn reconstruct_physical(v_meas: &CovarianceMatrix, sigma: &DMatrix<f64>, tol: f64) -> Result<Reconstruction> {
    let opts = ReconstructOptions { physical_tol: tol.max(0.0), ..Default::default() };
    reconstruct_with(v_meas, sigma, &opts)
}

pub fn reconstruct_with(v_meas: &CovarianceMatrix, sigma: &DMatrix<f64>, opts: &ReconstructOptions) -> Result<Reconstruction> {
    let v = v_meas.matrix();
    let dim = v.nrows();
    if sigma.nrows() != dim || sigma.ncols() != dim {
        return Err(Error::DimensionMismatch(format!("σ-matrix {}x{} for {dim}x{dim} state", sigma.nrows(), sigma.ncols())));
    }
    if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidParameter("σ entries must be finite and nonnegative".into()));
    }
    let lmin0 = uncertainty_min_eigenvalue(v);
    if lmin0 >= -opts.physical_tol && v_meas.min_eigenvalue() >= -opts.physical_tol {
        return Ok(Reconstruction { v: v_meas.clone(), objective: 0.0, converged: true });
    }
    let sigma = symmetrize(sigma);
    // Zero-σ off-diagonals stay fixed. Diagonals always remain free so that
    // V' + κI is a strictly feasible start; a zero diagonal σ is floored, which
    // leaves it fixed unless no physical state exists otherwise.
    let vars: Vec<_> = upper(dim)
        .filter(|&(a, b)| a == b || sigma[(a, b)] > 0.0)
        .map(|(a, b)| (a, b, sigma[(a, b)].max(SIGMA_FLOOR)))
        .collect();
    let problem = Problem { v: v.clone(), omega: symplectic_form(dim / 2), vars };
    let r = solve(&problem, opts, lmin0).ok_or_else(|| Error::OptimizerFailure("barrier iterate left the cone".into()))?;
    let moved = (0..dim).any(|a| sigma[(a, a)] == 0.0 && (r.v.matrix()[(a, a)] - v[(a, a)]).abs() > 1e-9 * v.amax().max(1.0));
    if moved {
        warn!("zero-σ entries admit no physical state; σ floored at {SIGMA_FLOOR:e}");
    }
    Ok(r)
}

fn upper(dim: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..dim).flat_map(move |a| (a..dim).map(move |b| (a, b)))
}

/// Path-following from y = (κ + margin)/σ on the diagonal.
fn solve(problem: &Problem, opts: &ReconstructOptions, lmin0: f64) -> Option<Reconstruction> {
    let m = problem.vars.len();
    let dim = problem.v.nrows();
    let margin = 1e-3 * (1.0 + problem.v.amax());
    let shift = (-lmin0).max(0.0) + margin;
    let mut y = DVector::zeros(m);
    for (k, &(a, b, s)) in problem.vars.iter().enumerate() {
        if a == b {
            y[k] = shift / s;
        }
    }
    let mut t = problem.objective(&y) * 1.5 + 1.0;
    let nu = (dim + 2 * m) as f64;
    let mut tau = nu / t;
    let mut converged = true;
    loop {
        let decrement = newton(problem, tau, &mut y, &mut t, opts.max_newton_steps);
        // distance to the central point in t is bounded by about decrement/τ
        converged &= decrement / tau <= opts.gap_tol * t.max(1.0);
        if nu / tau <= opts.gap_tol * t.max(1.0) {
            break;
        }
        tau *= 8.0;
    }
    finish(problem, &y, converged)
}

/// Damped Newton on the barrier at fixed τ. Returns the last Newton
/// decrement (infinite if the iterate could not be evaluated).
fn newton(problem: &Problem, tau: f64, y: &mut DVector<f64>, t: &mut f64, max_steps: usize) -> f64 {
    let m = y.len();
    let mut decrement = f64::INFINITY;
    for _ in 0..max_steps {
        let Some((grad, hess)) = problem.derivatives(tau, y, *t) else {
            return f64::INFINITY;
        };
        let Some(chol) = Cholesky::new(hess) else {
            return f64::INFINITY;
        };
        let step = -chol.solve(&grad);
        decrement = -grad.dot(&step);
        if decrement <= 1e-10 {
            return decrement;
        }
        let Some(f0) = problem.barrier(tau, y, *t) else {
            return f64::INFINITY;
        };
        let mut alpha = 1.0;
        loop {
            let y_new = &*y + step.rows(0, m) * alpha;
            let t_new = *t + step[m] * alpha;
            if let Some(f) = problem.barrier(tau, &y_new, t_new) {
                if f <= f0 - 0.25 * alpha * decrement {
                    *y = y_new;
                    *t = t_new;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-14 {
                // barrier values no longer resolve the step
                return decrement;
            }
        }
    }
    decrement
}

fn finish(problem: &Problem, y: &DVector<f64>, converged: bool) -> Option<Reconstruction> {
    let out = symmetrize(&problem.matrix(y));
    let lmin = hermitian_min_eigenvalue(&problem.hermitian(&out));
    if lmin < -1e-12 {
        return None;
    }
    let v = CovarianceMatrix::from_symmetrized(out).ok()?;
    Some(Reconstruction { v, objective: problem.objective(y), converged })
}
