use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;

/// Eigenvalues of V above this (negative) bound are clipped before sampling.
pub const SAMPLE_PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PumpState {
    On,
    Off,
}

/// Zero-mean quadrature records, row-major `n_samples × 2N` in interleaved order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSamples {
    pub n_modes: usize,
    pub n_samples: usize,
    pub data: Vec<f64>,
    pub pump_state: PumpState,
    pub seed: u64,
}

/// Draw `n_samples` from N(0, V) with a ChaCha20 stream seeded by `seed`.
pub fn sample(v: &CovarianceMatrix, n_samples: usize, seed: u64) -> Result<QuadratureSamples> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut s = sample_with_rng(v, n_samples, &mut rng)?;
    s.seed = seed;
    Ok(s)
}

pub fn sample_with_rng<R: Rng + ?Sized>(v: &CovarianceMatrix, n_samples: usize, rng: &mut R) -> Result<QuadratureSamples> {
    let l = psd_sqrt(v.matrix(), SAMPLE_PSD_TOL)?;
    let dim = l.nrows();
    let mut data = Vec::with_capacity(n_samples * dim);
    let mut z = DVector::<f64>::zeros(dim);
    let mut x = DVector::<f64>::zeros(dim);
    for _ in 0..n_samples {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        l.mul_to(&z, &mut x);
        data.extend(x.iter());
    }
    Ok(QuadratureSamples { n_modes: dim / 2, n_samples, data, pump_state: PumpState::On, seed: 0 })
}

impl QuadratureSamples {
    pub fn with_pump_state(mut self, state: PumpState) -> Self {
        self.pump_state = state;
        self
    }

    fn dim(&self) -> usize {
        2 * self.n_modes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim())
    }

    /// Column `q` of the record (quadrature index in interleaved order).
    pub fn column(&self, q: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[q])
    }

    /// Second-moment estimate (1/n) Σ x xᵀ; the mean is known to be zero.
    pub fn covariance(&self) -> Result<CovarianceMatrix> {
        if self.n_samples == 0 {
            return Err(Error::EmptySamples);
        }
        let d = self.dim();
        let mut acc = DMatrix::<f64>::zeros(d, d);
        for r in self.rows() {
            for a in 0..d {
                for b in a..d {
                    acc[(a, b)] += r[a] * r[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                acc[(a, b)] = acc[(b, a)];
            }
        }
        CovarianceMatrix::new(acc / self.n_samples as f64)
    }

    /// Standard error of each second-moment estimate, std(x_a x_b)/√n.
    pub fn covariance_sem(&self) -> Result<DMatrix<f64>> {
        let n = self.n_samples;
        if n < 2 {
            return Err(Error::EmptySamples);
        }
        let d = self.dim();
        let mut s1 = DMatrix::<f64>::zeros(d, d);
        let mut s2 = DMatrix::<f64>::zeros(d, d);
        for r in self.rows() {
            for a in 0..d {
                for b in a..d {
                    let p = r[a] * r[b];
                    s1[(a, b)] += p;
                    s2[(a, b)] += p * p;
                }
            }
        }
        let nf = n as f64;
        Ok(DMatrix::from_fn(d, d, |a, b| {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            let mean = s1[(a, b)] / nf;
            let var = (s2[(a, b)] / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
            (var / nf).sqrt()
        }))
    }

    /// Rotate the phase of one mode in every record.
    pub fn rotate_mode(&self, mode: usize, angle: f64) -> Result<Self> {
        if mode >= self.n_modes {
            return Err(Error::DimensionMismatch(format!("mode {mode} of {}", self.n_modes)));
        }
        let (s, c) = angle.sin_cos();
        let d = self.dim();
        let mut out = self.clone();
        for r in out.data.chunks_exact_mut(d) {
            let (i, q) = (r[2 * mode], r[2 * mode + 1]);
            r[2 * mode] = c * i + s * q;
            r[2 * mode + 1] = -s * i + c * q;
        }
        Ok(out)
    }

    /// Append another record with the same mode count.
    pub fn extend(&mut self, other: &QuadratureSamples) -> Result<()> {
        if other.n_modes != self.n_modes {
            return Err(Error::DimensionMismatch("sample blocks differ in mode count".into()));
        }
        self.data.extend_from_slice(&other.data);
        self.n_samples += other.n_samples;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let header: Vec<String> = (0..self.n_modes).flat_map(|j| [format!("I{j}"), format!("Q{j}")]).collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for r in self.rows() {
            let row: Vec<String> = r.iter().map(|x| format!("{x:.9e}")).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

/// Rotate mode `k` so that ⟨I_j I_k⟩ is maximal (and ⟨I_j Q_k⟩ vanishes).
/// Returns the applied angle and the rotated samples.
pub fn align_pair_phase(samples: &QuadratureSamples, j: usize, k: usize) -> Result<(f64, QuadratureSamples)> {
    if samples.n_samples == 0 {
        return Err(Error::EmptySamples);
    }
    if j >= samples.n_modes || k >= samples.n_modes || j == k {
        return Err(Error::DimensionMismatch(format!("pair ({j}, {k}) of {} modes", samples.n_modes)));
    }
    let (mut a, mut b) = (0.0, 0.0);
    for r in samples.rows() {
        a += r[2 * j] * r[2 * k];
        b += r[2 * j] * r[2 * k + 1];
    }
    let angle = b.atan2(a);
    Ok((angle, samples.rotate_mode(k, angle)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezingStats {
    /// Ellipticity σ_max / σ_min.
    pub r_e: f64,
    /// σ_min / σ_off.
    pub r_p: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub sigma_off: f64,
}

/// Two-mode squeezing ratios from the I quadratures of modes j and k. σ± are the
/// RMS of I_j ± I_k with the pump on; σ_off is the single-mode pump-off I RMS,
/// averaged in variance over both modes.
pub fn squeezing_stats(on: &QuadratureSamples, off: &QuadratureSamples, pair: (usize, usize)) -> Result<SqueezingStats> {
    if on.n_samples == 0 || off.n_samples == 0 {
        return Err(Error::EmptySamples);
    }
    let (j, k) = pair;
    for s in [on, off] {
        if j >= s.n_modes || k >= s.n_modes || j == k {
            return Err(Error::DimensionMismatch(format!("pair ({j}, {k}) of {} modes", s.n_modes)));
        }
    }
    let (mut plus, mut minus) = (0.0, 0.0);
    for r in on.rows() {
        plus += (r[2 * j] + r[2 * k]).powi(2);
        minus += (r[2 * j] - r[2 * k]).powi(2);
    }
    let n_on = on.n_samples as f64;
    let (sp, sm) = ((plus / n_on).sqrt(), (minus / n_on).sqrt());
    let off_var = off.rows().map(|r| 0.5 * (r[2 * j].powi(2) + r[2 * k].powi(2))).sum::<f64>() / off.n_samples as f64;
    let sigma_off = off_var.sqrt();
    let (sigma_max, sigma_min) = if sp >= sm { (sp, sm) } else { (sm, sp) };
    if sigma_min == 0.0 || sigma_off == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(SqueezingStats { r_e: sigma_max / sigma_min, r_p: sigma_min / sigma_off, sigma_max, sigma_min, sigma_off })
}

/// Binned 2-D counts of two quadratures over the square [−h, h]².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub bins: usize,
    pub half_width: f64,
    /// Row-major `bins × bins`; row index follows the first quadrature.
    pub counts: Vec<i64>,
}

pub fn histogram_2d(samples: &QuadratureSamples, qa: usize, qb: usize, bins: usize, half_width: f64) -> Result<Histogram2d> {
    let d = 2 * samples.n_modes;
    if qa >= d || qb >= d {
        return Err(Error::DimensionMismatch(format!("quadrature index out of range for {d}")));
    }
    if bins == 0 || !(half_width > 0.0) {
        return Err(Error::InvalidParameter("histogram needs bins > 0 and positive width".into()));
    }
    let mut counts = vec![0i64; bins * bins];
    let scale = bins as f64 / (2.0 * half_width);
    for r in samples.rows() {
        let (x, y) = (r[qa], r[qb]);
        if x.abs() >= half_width || y.abs() >= half_width {
            continue;
        }
        let bx = (((x + half_width) * scale) as usize).min(bins - 1);
        let by = (((y + half_width) * scale) as usize).min(bins - 1);
        counts[bx * bins + by] += 1;
    }
    Ok(Histogram2d { bins, half_width, counts })
}

impl Histogram2d {
    pub fn bin_width(&self) -> f64 {
        2.0 * self.half_width / self.bins as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.bin_width()
    }

    /// Pump-on minus pump-off counts.
    pub fn subtract(&self, other: &Histogram2d) -> Result<Histogram2d> {
        if self.bins != other.bins || self.half_width != other.half_width {
            return Err(Error::DimensionMismatch("histogram binning differs".into()));
        }
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a - b).collect();
        Ok(Histogram2d { bins: self.bins, half_width: self.half_width, counts })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,count\n");
        for i in 0..self.bins {
            for j in 0..self.bins {
                let _ = writeln!(s, "{:.6e},{:.6e},{}", self.bin_center(i), self.bin_center(j), self.counts[i * self.bins + j]);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::correlation_quantity;

    #[test]
    fn vacuum_variance() {
        let s = sample(&CovarianceMatrix::vacuum(2), 1_000_000, 7).unwrap();
        let v = s.covariance().unwrap();
        for q in 0..4 {
            assert!((v.matrix()[(q, q)] - 1.0).abs() < 0.005, "{}", v.matrix()[(q, q)]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let v = CovarianceMatrix::two_mode_squeezed(0.3);
        let a = sample(&v, 1000, 42).unwrap();
        let b = sample(&v, 1000, 42).unwrap();
        let c = sample(&v, 1000, 43).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn covariance_within_five_se() {
        let v = CovarianceMatrix::two_mode_squeezed(0.4).rotate_modes(&[0.2, 1.0]).unwrap();
        let s = sample(&v, 200_000, 3).unwrap();
        let est = s.covariance().unwrap();
        let sem = s.covariance_sem().unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let z = (est.matrix()[(a, b)] - v.matrix()[(a, b)]).abs() / sem[(a, b)];
                assert!(z < 5.0, "({a},{b}) z = {z}");
            }
        }
    }

    #[test]
    fn tms_correlation_sampling() {
        let r: f64 = 0.5;
        let s = sample(&CovarianceMatrix::two_mode_squeezed(r), 400_000, 11).unwrap();
        let est = s.covariance().unwrap();
        let sem = s.covariance_sem().unwrap();
        let c = correlation_quantity(&est).unwrap();
        // error on C is dominated by the two nonzero cross terms
        let se = ((sem[(0, 2)].powi(2) + sem[(1, 3)].powi(2)) / 2.0).sqrt();
        assert!((c - 2f64.sqrt() * 1f64.sinh()).abs() < 3.0 * se, "{c}");
    }

    #[test]
    fn rejects_non_psd() {
        let mut m = DMatrix::identity(2, 2);
        m[(1, 1)] = -1e-3;
        assert!(matches!(sample(&CovarianceMatrix::new(m).unwrap(), 10, 0), Err(Error::NotPsd(_))));
        // boundary rounding is tolerated
        let mut m = DMatrix::identity(2, 2);
        m[(1, 1)] = -1e-12;
        assert!(sample(&CovarianceMatrix::new(m).unwrap(), 10, 0).is_ok());
    }

    #[test]
    fn squeezing_ratios_for_ideal_tms() {
        let r: f64 = 0.35;
        let on = sample(&CovarianceMatrix::two_mode_squeezed(r), 1_000_000, 5).unwrap();
        let off = sample(&CovarianceMatrix::vacuum(2), 1_000_000, 6).unwrap().with_pump_state(PumpState::Off);
        let st = squeezing_stats(&on, &off, (0, 1)).unwrap();
        assert!((st.r_e / (2.0 * r).exp() - 1.0).abs() < 0.01, "{}", st.r_e);
        assert!((st.r_p / (2f64.sqrt() * (-r).exp()) - 1.0).abs() < 0.01, "{}", st.r_p);
    }

    #[test]
    fn squeezing_without_pump() {
        let on = sample(&CovarianceMatrix::vacuum(2), 500_000, 1).unwrap();
        let off = sample(&CovarianceMatrix::vacuum(2), 500_000, 2).unwrap();
        let st = squeezing_stats(&on, &off, (0, 1)).unwrap();
        assert!((st.r_e - 1.0).abs() < 0.01);
        // the pair combination carries twice the single-mode variance
        assert!((st.r_p - 2f64.sqrt()).abs() < 0.01);
        let empty = QuadratureSamples { n_modes: 2, n_samples: 0, data: vec![], pump_state: PumpState::Off, seed: 0 };
        assert!(matches!(squeezing_stats(&on, &empty, (0, 1)), Err(Error::EmptySamples)));
    }

    #[test]
    fn alignment_undoes_rotation() {
        let v = CovarianceMatrix::two_mode_squeezed(0.4).rotate_modes(&[0.0, 0.9]).unwrap();
        let s = sample(&v, 200_000, 9).unwrap();
        let (angle, aligned) = align_pair_phase(&s, 0, 1).unwrap();
        assert!((angle + 0.9).abs() < 0.02, "{angle}");
        let est = aligned.covariance().unwrap();
        assert!(est.matrix()[(0, 2)] > 0.0 && est.matrix()[(0, 3)].abs() < 0.02);
    }

    #[test]
    fn histogram_counts_and_subtraction() {
        let on = sample(&CovarianceMatrix::two_mode_squeezed(0.5), 50_000, 1).unwrap();
        let off = sample(&CovarianceMatrix::vacuum(2), 50_000, 2).unwrap();
        let h_on = histogram_2d(&on, 0, 2, 20, 8.0).unwrap();
        let h_off = histogram_2d(&off, 0, 2, 20, 8.0).unwrap();
        assert!(h_off.counts.iter().sum::<i64>() > 49_900);
        let diff = h_on.subtract(&h_off).unwrap();
        // correlated pump-on counts pile up along x = y and leave the anti-diagonal
        let diag: i64 = (0..20).map(|i| diff.counts[i * 20 + i]).sum();
        let anti: i64 = (0..20).map(|i| diff.counts[i * 20 + 19 - i]).sum();
        assert!(diag > 0 && anti < 0);
        assert_eq!(diff.to_csv().lines().count(), 401);
    }
}
