//! Bipartite entanglement tests: partial transposition for two-mode states and
//! a quadratic-form witness over arbitrary bipartitions, with error propagation
//! from the amplifier calibration and the sampling noise.

use std::fmt;

use log::warn;
use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{deamplify, AmplifierModel, CovarianceMatrix};
use crate::linalg::uncertainty_min_eigenvalue;

/// Frames whose residual I–Q cross norm exceeds this fraction of the in-block
/// norm are flagged.
pub const FRAME_RESIDUAL_LIMIT: f64 = 0.05;

/// Split of the modes into two nonempty sets, stored with mode 0 in `set_i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bipartition {
    pub set_i: Vec<usize>,
    pub set_j: Vec<usize>,
}

impl Bipartition {
    pub fn new(mut set_i: Vec<usize>, mut set_j: Vec<usize>, n_modes: usize) -> Result<Self> {
        set_i.sort_unstable();
        set_j.sort_unstable();
        if set_i.is_empty() || set_j.is_empty() {
            return Err(Error::InvalidParameter("bipartition sets must be nonempty".into()));
        }
        let mut all: Vec<usize> = set_i.iter().chain(&set_j).copied().collect();
        all.sort_unstable();
        if all != (0..n_modes).collect::<Vec<_>>() {
            return Err(Error::InvalidParameter(format!(
                "bipartition {set_i:?}|{set_j:?} does not cover 0..{n_modes} disjointly"
            )));
        }
        if set_j[0] < set_i[0] {
            std::mem::swap(&mut set_i, &mut set_j);
        }
        Ok(Self { set_i, set_j })
    }

    /// All 2^(N−1) − 1 bipartitions, ordered by the membership mask of modes 1..N.
    pub fn all(n_modes: usize) -> Vec<Self> {
        if n_modes < 2 {
            return Vec::new();
        }
        (1..(1usize << (n_modes - 1)))
            .map(|mask| {
                let (mut a, mut b) = (vec![0], Vec::new());
                for m in 1..n_modes {
                    if mask >> (m - 1) & 1 == 1 {
                        b.push(m);
                    } else {
                        a.push(m);
                    }
                }
                Self { set_i: a, set_j: b }
            })
            .collect()
    }

    pub fn n_modes(&self) -> usize {
        self.set_i.len() + self.set_j.len()
    }

    /// Label using external mode names, e.g. `{0,2}|{4,6}`.
    pub fn label(&self, names: &[i64]) -> String {
        let fmt_set = |s: &[usize]| {
            let items: Vec<String> = s.iter().map(|&m| names.get(m).map_or(m as i64, |x| *x).to_string()).collect();
            format!("{{{}}}", items.join(","))
        };
        format!("{}|{}", fmt_set(&self.set_i), fmt_set(&self.set_j))
    }
}

impl fmt::Display for Bipartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<i64> = (0..self.n_modes() as i64).collect();
        f.write_str(&self.label(&names))
    }
}

/// λ_min(ΛVΛ + iΩ) where Λ flips the Q quadrature of every mode in `transpose_set`.
pub fn ppt_min_eigenvalue(v: &CovarianceMatrix, transpose_set: &[usize]) -> Result<f64> {
    let n = v.n_modes();
    if let Some(m) = transpose_set.iter().find(|&&m| m >= n) {
        return Err(Error::DimensionMismatch(format!("mode {m} out of range for {n} modes")));
    }
    let mut sign = vec![1.0; 2 * n];
    for &m in transpose_set {
        sign[2 * m + 1] = -1.0;
    }
    let m = v.matrix();
    let pt = DMatrix::from_fn(2 * n, 2 * n, |r, c| sign[r] * m[(r, c)] * sign[c]);
    Ok(uncertainty_min_eigenvalue(&pt))
}

/// Local symplectic frame in which each mode's own block is ν_i·I and the I–Q
/// cross correlations between modes are minimized by per-mode rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Block-diagonal L with det L_i = 1; the framed state is L V Lᵀ.
    pub transform: DMatrix<f64>,
    /// ‖V^IQ‖_F over the mean of ‖V^II‖_F and ‖V^QQ‖_F in the framed state.
    pub residual: f64,
}

impl Frame {
    pub fn of(v: &CovarianceMatrix) -> Self {
        let n = v.n_modes();
        let normalizers: Vec<Matrix2<f64>> = (0..n)
            .map(|i| {
                let a = v.matrix().fixed_view::<2, 2>(2 * i, 2 * i).into_owned();
                local_normalizer(&a)
            })
            .collect();
        let normalized = v.local_transform(&normalizers).expect("block count matches");
        let rotations = minimize_cross_iq(&normalized);
        let blocks: Vec<Matrix2<f64>> = rotations.iter().zip(&normalizers).map(|(r, l)| r * l).collect();
        let mut transform = DMatrix::zeros(2 * n, 2 * n);
        for (i, b) in blocks.iter().enumerate() {
            transform.view_mut((2 * i, 2 * i), (2, 2)).copy_from(b);
        }
        let framed = v.local_transform(&blocks).expect("block count matches");
        Self { transform, residual: cross_residual(&framed) }
    }

    pub fn ok(&self) -> bool {
        self.residual <= FRAME_RESIDUAL_LIMIT
    }

    pub fn apply(&self, v: &CovarianceMatrix) -> Result<CovarianceMatrix> {
        let l = &self.transform;
        if l.nrows() != v.matrix().nrows() {
            return Err(Error::DimensionMismatch("frame and state differ in size".into()));
        }
        CovarianceMatrix::from_symmetrized(l * v.matrix() * l.transpose())
    }

    /// Linear propagation of independent element errors: σ'² = (L∘L) σ² (L∘L)ᵀ.
    pub fn apply_sigma(&self, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let l2 = self.transform.map(|x| x * x);
        if l2.nrows() != sigma.nrows() || sigma.nrows() != sigma.ncols() {
            return Err(Error::DimensionMismatch("frame and σ-matrix differ in size".into()));
        }
        let s2 = sigma.map(|x| x * x);
        Ok((&l2 * s2 * l2.transpose()).map(|x| x.max(0.0).sqrt()))
    }
}

/// L with L A Lᵀ = √det(A)·I and det L = 1. Falls back to the diagonalizing
/// rotation when A is not positive definite.
fn local_normalizer(a: &Matrix2<f64>) -> Matrix2<f64> {
    let eig = SymmetricEigen::new(*a);
    let (l0, l1) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    let mut q = eig.eigenvectors;
    if q.determinant() < 0.0 {
        q.column_mut(1).neg_mut();
    }
    if l0 > 0.0 && l1 > 0.0 {
        let nu = (l0 * l1).sqrt();
        let inv_sqrt = q * Matrix2::new(1.0 / l0.sqrt(), 0.0, 0.0, 1.0 / l1.sqrt()) * q.transpose();
        inv_sqrt * nu.sqrt()
    } else {
        q.transpose()
    }
}

fn rot(c: f64, s: f64) -> Matrix2<f64> {
    Matrix2::new(c, s, -s, c)
}

fn block(v: &DMatrix<f64>, i: usize, j: usize) -> Matrix2<f64> {
    v.fixed_view::<2, 2>(2 * i, 2 * j).into_owned()
}

fn cross_objective(v: &DMatrix<f64>, rs: &[Matrix2<f64>]) -> f64 {
    let n = rs.len();
    let mut f = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let c = rs[i] * block(v, i, j) * rs[j].transpose();
            f += c[(0, 1)].powi(2) + c[(1, 0)].powi(2);
        }
    }
    f
}

/// Rotations R_i minimizing Σ_{i<j} of the squared off-diagonal entries of
/// R_i C_ij R_jᵀ. Exact for two modes (signed SVD); coordinate descent with
/// closed-form single-angle updates otherwise.
fn minimize_cross_iq(v: &CovarianceMatrix) -> Vec<Matrix2<f64>> {
    let n = v.n_modes();
    let m = v.matrix();
    let pair_svd = |i: usize, j: usize| -> (Matrix2<f64>, Matrix2<f64>) {
        let svd = block(m, i, j).svd(true, true);
        let mut u = svd.u.expect("u requested");
        let mut vt = svd.v_t.expect("v_t requested");
        if u.determinant() < 0.0 {
            u.column_mut(1).neg_mut();
        }
        if vt.determinant() < 0.0 {
            vt.row_mut(1).neg_mut();
        }
        (u.transpose(), vt)
    };
    if n < 2 {
        return vec![Matrix2::identity(); n];
    }
    if n == 2 {
        let (r0, r1) = pair_svd(0, 1);
        return vec![r0, r1];
    }
    let mut starts = vec![vec![Matrix2::identity(); n]];
    let (mut bi, mut bj, mut best_norm) = (0, 1, -1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let nrm = block(m, i, j).norm();
            if nrm > best_norm {
                (bi, bj, best_norm) = (i, j, nrm);
            }
        }
    }
    let (ri, rj) = pair_svd(bi, bj);
    let mut s = vec![Matrix2::identity(); n];
    s[bi] = ri;
    s[bj] = rj;
    starts.push(s);

    let mut best: Option<(f64, Vec<Matrix2<f64>>)> = None;
    for mut rs in starts {
        let mut f = cross_objective(m, &rs);
        for _ in 0..500 {
            for i in 0..n {
                let mut k = Matrix2::<f64>::zeros();
                for j in (0..n).filter(|&j| j != i) {
                    let d = block(m, i, j) * rs[j].transpose();
                    let (d00, d01, d10, d11) = (d[(0, 0)], d[(0, 1)], d[(1, 0)], d[(1, 1)]);
                    k[(0, 0)] += d01 * d01 + d10 * d10;
                    k[(1, 1)] += d11 * d11 + d00 * d00;
                    let x = d01 * d11 - d10 * d00;
                    k[(0, 1)] += x;
                    k[(1, 0)] += x;
                }
                let eig = SymmetricEigen::new(k);
                let idx = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
                let e = eig.eigenvectors.column(idx);
                rs[i] = rot(e[0], e[1]);
            }
            let f_new = cross_objective(m, &rs);
            let done = f - f_new <= 1e-15 * f.max(1e-300);
            f = f_new;
            if done {
                break;
            }
        }
        if best.as_ref().is_none_or(|(fb, _)| f < *fb) {
            best = Some((f, rs));
        }
    }
    best.expect("at least one start").1
}

fn cross_residual(v: &CovarianceMatrix) -> f64 {
    let inblock = 0.5 * (v.ii_block().norm() + v.qq_block().norm());
    if inblock == 0.0 {
        return 0.0;
    }
    v.iq_block().norm() / inblock
}

fn check_bp(v: &CovarianceMatrix, bp: &Bipartition) -> Result<()> {
    if bp.n_modes() != v.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "bipartition covers {} modes, state has {}",
            bp.n_modes(),
            v.n_modes()
        )));
    }
    Ok(())
}

/// E = hᵀV^II h + gᵀV^QQ g − 2|⟨h_I, g_I⟩| − 2|⟨h_J, g_J⟩| on `v` as given.
pub fn svl_value(v: &CovarianceMatrix, bp: &Bipartition, h: &[f64], g: &[f64]) -> Result<f64> {
    check_bp(v, bp)?;
    let n = v.n_modes();
    if h.len() != n || g.len() != n {
        return Err(Error::DimensionMismatch(format!("h, g must have length {n}")));
    }
    let hv = DVector::from_column_slice(h);
    let gv = DVector::from_column_slice(g);
    let quad = hv.dot(&(v.ii_block() * &hv)) + gv.dot(&(v.qq_block() * &gv));
    let dot = |s: &[usize]| s.iter().map(|&m| h[m] * g[m]).sum::<f64>();
    Ok(quad - 2.0 * dot(&bp.set_i).abs() - 2.0 * dot(&bp.set_j).abs())
}

/// Global minimum of E over ‖h‖² + ‖g‖² = 2 on `v` as given. Splitting the two
/// absolute values by sign turns each branch into a Rayleigh quotient, so the
/// minimum is twice the smallest eigenvalue over the four sign branches.
pub fn svl_optimize(v: &CovarianceMatrix, bp: &Bipartition) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_bp(v, bp)?;
    let n = v.n_modes();
    let (ii, qq) = (v.ii_block(), v.qq_block());
    let mut best: Option<(f64, DVector<f64>)> = None;
    for s_i in [1.0, -1.0] {
        for s_j in [1.0, -1.0] {
            let mut m = DMatrix::zeros(2 * n, 2 * n);
            m.view_mut((0, 0), (n, n)).copy_from(&ii);
            m.view_mut((n, n), (n, n)).copy_from(&qq);
            for &a in &bp.set_i {
                m[(a, n + a)] -= s_i;
                m[(n + a, a)] -= s_i;
            }
            for &a in &bp.set_j {
                m[(a, n + a)] -= s_j;
                m[(n + a, a)] -= s_j;
            }
            let eig = SymmetricEigen::new(m);
            let (k, lam) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (k, &l)| if l < acc.1 { (k, l) } else { acc });
            if best.as_ref().is_none_or(|(b, _)| 2.0 * lam < *b - 1e-14) {
                best = Some((2.0 * lam, eig.eigenvectors.column(k).into_owned()));
            }
        }
    }
    let (_, mut x) = best.ok_or_else(|| Error::OptimizerFailure("no branch evaluated".into()))?;
    if let Some(first) = x.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            x.neg_mut();
        }
    }
    x *= std::f64::consts::SQRT_2;
    let h: Vec<f64> = x.rows(0, n).iter().copied().collect();
    let g: Vec<f64> = x.rows(n, n).iter().copied().collect();
    let e = svl_value(v, bp, &h, &g)?;
    Ok((e, h, g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementReport {
    pub bipartition: Bipartition,
    pub value_e: f64,
    pub sigma: Option<f64>,
    pub significance: Option<f64>,
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    pub frame_residual: f64,
}

impl EntanglementReport {
    pub fn entangled(&self) -> bool {
        self.value_e < 0.0
    }
}

/// Witness uncertainty σ = sqrt(Σ_ij σ²_ij h_i² h_j² + σ²_ij g_i² g_j²), with
/// σ_ij taken from the I–I and Q–Q entries of `sigma` (interleaved order).
pub fn witness_sigma(sigma: &DMatrix<f64>, h: &[f64], g: &[f64]) -> Result<f64> {
    let n = h.len();
    if g.len() != n || sigma.nrows() != 2 * n || sigma.ncols() != 2 * n {
        return Err(Error::DimensionMismatch("σ-matrix and weight vectors differ in size".into()));
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += sigma[(2 * i, 2 * j)].powi(2) * h[i].powi(2) * h[j].powi(2);
            acc += sigma[(2 * i + 1, 2 * j + 1)].powi(2) * g[i].powi(2) * g[j].powi(2);
        }
    }
    Ok(acc.sqrt())
}

fn finish(
    framed: &CovarianceMatrix,
    frame: &Frame,
    sigma: Option<&DMatrix<f64>>,
    bp: &Bipartition,
    e: f64,
    h: Vec<f64>,
    g: Vec<f64>,
) -> Result<EntanglementReport> {
    let _ = framed;
    let (sigma_e, sig) = match sigma {
        Some(s) => {
            let s_framed = frame.apply_sigma(s)?;
            let se = witness_sigma(&s_framed, &h, &g)?;
            (Some(se), if se > 0.0 { Some(e / se) } else { None })
        }
        None => (None, None),
    };
    Ok(EntanglementReport {
        bipartition: bp.clone(),
        value_e: e,
        sigma: sigma_e,
        significance: sig,
        h,
        g,
        frame_residual: frame.residual,
    })
}

fn framed_state(v: &CovarianceMatrix) -> Result<(Frame, CovarianceMatrix)> {
    let frame = Frame::of(v);
    if !frame.ok() {
        warn!("I-Q cross residual {:.3} exceeds {FRAME_RESIDUAL_LIMIT}", frame.residual);
    }
    let framed = frame.apply(v)?;
    Ok((frame, framed))
}

/// Bring `v` to its local frame and minimize the witness over (h, g).
pub fn svl_test(v: &CovarianceMatrix, bp: &Bipartition) -> Result<EntanglementReport> {
    svl_test_with_errors(v, None, bp)
}

/// As [`svl_test`], also propagating an element-wise σ-matrix (given in the
/// original frame) to the witness uncertainty.
pub fn svl_test_with_errors(v: &CovarianceMatrix, sigma: Option<&DMatrix<f64>>, bp: &Bipartition) -> Result<EntanglementReport> {
    check_bp(v, bp)?;
    let (frame, framed) = framed_state(v)?;
    let (e, h, g) = svl_optimize(&framed, bp)?;
    finish(&framed, &frame, sigma, bp, e, h, g)
}

/// Evaluate fixed (h, g) on `v` in its local frame.
pub fn svl_evaluate(
    v: &CovarianceMatrix,
    sigma: Option<&DMatrix<f64>>,
    bp: &Bipartition,
    h: &[f64],
    g: &[f64],
) -> Result<EntanglementReport> {
    let (frame, framed) = framed_state(v)?;
    let e = svl_value(&framed, bp, h, g)?;
    finish(&framed, &frame, sigma, bp, e, h.to_vec(), g.to_vec())
}

/// Witness over every bipartition, evaluated in parallel and returned in the
/// order of [`Bipartition::all`].
pub fn test_all_bipartitions(v: &CovarianceMatrix, sigma: Option<&DMatrix<f64>>) -> Result<Vec<EntanglementReport>> {
    Bipartition::all(v.n_modes())
        .par_iter()
        .map(|bp| svl_test_with_errors(v, sigma, bp))
        .collect()
}

/// Element-wise standard deviations of the de-amplified covariance from the
/// gain and noise fit uncertainties and the sampling standard errors `sem` of
/// the amplified matrix `v_raw`. Negative totals (possible through the
/// correlated diagonal term) are clamped to zero.
pub fn propagate_errors(v_raw: &CovarianceMatrix, amp: &AmplifierModel, sem: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = v_raw.n_modes();
    let dim = 2 * n;
    if amp.n_modes() != n || sem.nrows() != dim || sem.ncols() != dim {
        return Err(Error::DimensionMismatch("state, amplifier and sem sizes differ".into()));
    }
    let fits: Vec<_> = (0..n)
        .map(|i| amp.fit.get(i).copied().flatten().ok_or(Error::MissingFitCovariance(i)))
        .collect::<Result<_>>()?;
    let v = deamplify(v_raw, amp)?;
    let vt = v_raw.matrix();
    let mut out = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        for b in 0..dim {
            let (i, j) = (a / 2, b / 2);
            let (gi, gj) = (amp.gains[i], amp.gains[j]);
            let (sgi, sgj) = (fits[i].sigma_g, fits[j].sigma_g);
            let kron = if i == j { 2.0 } else { 1.0 };
            let mut s2 = ((vt[(a, b)] / (2.0 * (gi.powi(3) * gj).sqrt()) * sgi).powi(2)
                + (vt[(a, b)] / (2.0 * (gj.powi(3) * gi).sqrt()) * sgj).powi(2))
                * kron;
            s2 += (sem[(a, b)] / (gi * gj).sqrt()).powi(2);
            if a == b {
                let ni = amp.added[i];
                s2 += 2.0 * ((2.0 * ni + 1.0) / gi * sgi).powi(2);
                s2 += (2.0 * fits[i].sigma_n).powi(2);
                s2 += 4.0 * (v.matrix()[(a, a)] - (2.0 * ni + 1.0)) / gi * fits[i].cov_gn;
            }
            if s2 < 0.0 {
                warn!("negative error variance {s2:.3e} at ({a},{b}) clamped to zero");
                s2 = 0.0;
            }
            out[(a, b)] = s2.sqrt();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSignificance {
    /// Inverse-variance weighted mean of E.
    pub value_e: f64,
    /// Standard deviation of the weighted mean.
    pub sigma: f64,
    /// Σ_w = value_e / sigma.
    pub significance: f64,
}

/// Combine per-interval (E, σ) pairs with inverse-variance weights.
pub fn significance(intervals: &[(f64, f64)]) -> Result<WeightedSignificance> {
    if intervals.is_empty() {
        return Err(Error::InsufficientData("no intervals to combine".into()));
    }
    if intervals.iter().any(|(_, s)| !(*s > 0.0)) {
        return Err(Error::ZeroVariance);
    }
    let wsum: f64 = intervals.iter().map(|(_, s)| 1.0 / (s * s)).sum();
    let mean = intervals.iter().map(|(e, s)| e / (s * s)).sum::<f64>() / wsum;
    let sigma = 1.0 / wsum.sqrt();
    Ok(WeightedSignificance { value_e: mean, sigma, significance: mean / sigma })
}
