//! Four-wave-mixing matches and the mode-coupling matrix M.
//!
//! M acts on the ladder vector (b₁, …, b_N, b₁†, …, b_N†) and has the
//! Bogoliubov block form `[[A, B], [−B*, −A*]]` with `A = diag(Δ_j)` and
//! `B_jk = −Σ ε_jk` over the pump matches coupling modes j and k.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modesys::{
    effective_couplings, parametric_coupling, pump_amplitude, renormalized_frequency, MirrorSpec, ModeSpec, PumpTone,
};
use crate::units::HBAR;

/// A pump/mode-pair combination satisfying ω_j + ω_k ≈ 2ω_p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourWaveMatch {
    pub pump_index: usize,
    /// Position of the lower mode in the mode list (`mode_j <= mode_k`).
    pub mode_j: usize,
    pub mode_k: usize,
    /// 2ω_p − ω_j − ω_k (rad/s).
    pub mismatch: f64,
}

/// Enumerate every (pump, j ≤ k) with |2ω_p − ω_j − ω_k| ≤ `tolerance`, ordered
/// by (pump, j, k).
pub fn match_four_wave(modes: &[ModeSpec], pumps: &[PumpTone], tolerance: f64) -> Result<Vec<FourWaveMatch>> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!("matching tolerance must be positive, got {tolerance}")));
    }
    let mut out = Vec::new();
    for (p, pump) in pumps.iter().enumerate() {
        for j in 0..modes.len() {
            for k in j..modes.len() {
                let mismatch = 2.0 * pump.omega_p - modes[j].omega - modes[k].omega;
                if mismatch.abs() <= tolerance {
                    out.push(FourWaveMatch { pump_index: p, mode_j: j, mode_k: k, mismatch });
                }
            }
        }
    }
    Ok(out)
}

/// Half the smallest total linewidth.
pub fn default_tolerance(modes: &[ModeSpec]) -> f64 {
    modes.iter().map(|m| m.gamma_tot()).fold(f64::INFINITY, f64::min) / 2.0
}

/// Modes kept as probes: by default those lying within `tolerance` of a pump
/// tone are dropped, since the pumped modes form a separate correlated set.
pub fn probe_modes(modes: &[ModeSpec], pumps: &[PumpTone], tolerance: f64, include_pumped: bool) -> Vec<ModeSpec> {
    modes
        .iter()
        .filter(|m| include_pumped || pumps.iter().all(|p| (p.omega_p - m.omega).abs() > tolerance))
        .copied()
        .collect()
}

/// Coupling between two modes contributed by one pump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCoupling {
    pub pump_index: usize,
    pub mode_j: usize,
    pub mode_k: usize,
    /// ε_jk (rad/s).
    pub epsilon: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    pub n_modes: usize,
    pub m: DMatrix<Complex64>,
    /// Δ_j (rad/s), complex: Re is the probe detuning, Im is γ_tot/2.
    pub probe_detunings: Vec<Complex64>,
    pub couplings: Vec<PairCoupling>,
}

impl CouplingMatrix {
    /// Assemble M from detunings and pair couplings. Couplings of the same pair
    /// from different pumps add.
    pub fn from_parts(detunings: &[Complex64], couplings: &[PairCoupling]) -> Result<Self> {
        let n = detunings.len();
        let mut b = DMatrix::<Complex64>::zeros(n, n);
        for c in couplings {
            if c.mode_j >= n || c.mode_k >= n {
                return Err(Error::DimensionMismatch(format!(
                    "coupling ({}, {}) references a mode outside 0..{n}",
                    c.mode_j, c.mode_k
                )));
            }
            b[(c.mode_j, c.mode_k)] -= c.epsilon;
            if c.mode_j != c.mode_k {
                b[(c.mode_k, c.mode_j)] -= c.epsilon;
            }
        }
        let mut m = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
        for j in 0..n {
            m[(j, j)] = detunings[j];
            m[(n + j, n + j)] = -detunings[j].conj();
            for k in 0..n {
                m[(j, n + k)] = b[(j, k)];
                m[(n + j, k)] = -b[(j, k)].conj();
            }
        }
        Ok(Self { n_modes: n, m, probe_detunings: detunings.to_vec(), couplings: couplings.to_vec() })
    }

    pub fn a_block(&self) -> DMatrix<Complex64> {
        self.m.view((0, 0), (self.n_modes, self.n_modes)).into_owned()
    }

    pub fn b_block(&self) -> DMatrix<Complex64> {
        self.m.view((0, self.n_modes), (self.n_modes, self.n_modes)).into_owned()
    }

    /// Largest elementwise violation of the Bogoliubov block identity, the
    /// diagonality of A and the symmetry of B.
    pub fn bogoliubov_residual(&self) -> f64 {
        let n = self.n_modes;
        let a = self.a_block();
        let b = self.b_block();
        let c = self.m.view((n, 0), (n, n));
        let d = self.m.view((n, n), (n, n));
        let mut r: f64 = 0.0;
        for j in 0..n {
            for k in 0..n {
                r = r.max((c[(j, k)] + b[(j, k)].conj()).norm());
                r = r.max((d[(j, k)] + a[(j, k)].conj()).norm());
                r = r.max((b[(j, k)] - b[(k, j)]).norm());
                if j != k {
                    r = r.max(a[(j, k)].norm());
                }
            }
        }
        r
    }

    /// CSV dump with real and imaginary parts interleaved per column.
    pub fn to_csv(&self) -> String {
        let dim = 2 * self.n_modes;
        let mut s = String::new();
        let header: Vec<String> = (0..dim).flat_map(|c| [format!("re{c}"), format!("im{c}")]).collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for r in 0..dim {
            let row: Vec<String> =
                (0..dim).flat_map(|c| [format!("{:e}", self.m[(r, c)].re), format!("{:e}", self.m[(r, c)].im)]).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

/// Quantities derived from the mirror and pump drive for a mode set.
#[derive(Debug, Clone)]
pub struct DriveModel {
    pub g_tilde: Vec<f64>,
    pub g_bar: Vec<f64>,
    /// Effective pump amplitude d per pump (J).
    pub pump_amplitudes: Vec<f64>,
    /// Renormalized frequencies ω̃_j (rad/s).
    pub renormalized: Vec<f64>,
    /// Static pump-induced shift Σ_p 2 d_p g̃_j² / ħ, equal to 4|ε| for a
    /// single pump with identical couplings.
    pub shifts: Vec<f64>,
}

impl DriveModel {
    pub fn new(mirror: &MirrorSpec, modes: &[ModeSpec], pumps: &[PumpTone]) -> Result<Self> {
        let (g_tilde, g_bar) = effective_couplings(mirror, modes)?;
        let pump_amplitudes: Vec<f64> = pumps.iter().map(|p| pump_amplitude(mirror, p)).collect();
        let renormalized = modes.iter().zip(&g_bar).map(|(m, gb)| renormalized_frequency(mirror, m, *gb)).collect();
        let dsum: f64 = pump_amplitudes.iter().sum();
        let shifts = g_tilde.iter().map(|gt| 2.0 * dsum * gt * gt / HBAR).collect();
        Ok(Self { g_tilde, g_bar, pump_amplitudes, renormalized, shifts })
    }

    /// Probe frequencies placing every mode on its shifted resonance, Δ_j = iγ_tot/2.
    pub fn on_resonance_probes(&self) -> Vec<f64> {
        self.renormalized.iter().zip(&self.shifts).map(|(w, s)| w - s).collect()
    }
}

/// Build M from the full drive model: Δ_j = Ω_j − ω̃_j + shift_j + iγ_tot/2 and
/// ε_jk = d g̃_j g̃_k e^{−2iθ}/2ħ for every match.
pub fn build_coupling_matrix(
    modes: &[ModeSpec],
    pumps: &[PumpTone],
    mirror: &MirrorSpec,
    probe_omegas: &[f64],
    matches: &[FourWaveMatch],
) -> Result<CouplingMatrix> {
    if probe_omegas.len() != modes.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} probe frequencies for {} modes",
            probe_omegas.len(),
            modes.len()
        )));
    }
    let drive = DriveModel::new(mirror, modes, pumps)?;
    let detunings: Vec<Complex64> = modes
        .iter()
        .enumerate()
        .map(|(j, m)| {
            Complex64::new(probe_omegas[j] - drive.renormalized[j] + drive.shifts[j], m.gamma_tot() / 2.0)
        })
        .collect();
    let couplings = matches
        .iter()
        .map(|mt| {
            let pump = pumps.get(mt.pump_index).ok_or_else(|| {
                Error::DimensionMismatch(format!("match references pump {} of {}", mt.pump_index, pumps.len()))
            })?;
            if mt.mode_k >= modes.len() {
                return Err(Error::DimensionMismatch(format!("match references mode {}", mt.mode_k)));
            }
            Ok(PairCoupling {
                pump_index: mt.pump_index,
                mode_j: mt.mode_j,
                mode_k: mt.mode_k,
                epsilon: parametric_coupling(
                    drive.pump_amplitudes[mt.pump_index],
                    drive.g_tilde[mt.mode_j],
                    drive.g_tilde[mt.mode_k],
                    pump.theta,
                ),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CouplingMatrix::from_parts(&detunings, &couplings)
}

/// Build M in the identical-coupling idealization: every pump contributes
/// ε = |ε_p| e^{−2iθ_p} to each pair it matches. `detunings` are probe offsets
/// from the shifted resonances (rad/s), so zero means on resonance.
pub fn build_idealized_coupling_matrix(
    modes: &[ModeSpec],
    pumps: &[PumpTone],
    epsilon_magnitudes: &[f64],
    detunings: &[f64],
    matches: &[FourWaveMatch],
) -> Result<CouplingMatrix> {
    if epsilon_magnitudes.len() != pumps.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coupling strengths for {} pumps",
            epsilon_magnitudes.len(),
            pumps.len()
        )));
    }
    if detunings.len() != modes.len() {
        return Err(Error::DimensionMismatch(format!("{} detunings for {} modes", detunings.len(), modes.len())));
    }
    let deltas: Vec<Complex64> =
        modes.iter().zip(detunings).map(|(m, d)| Complex64::new(*d, m.gamma_tot() / 2.0)).collect();
    let couplings = matches
        .iter()
        .map(|mt| {
            let pump = pumps.get(mt.pump_index).ok_or_else(|| {
                Error::DimensionMismatch(format!("match references pump {} of {}", mt.pump_index, pumps.len()))
            })?;
            Ok(PairCoupling {
                pump_index: mt.pump_index,
                mode_j: mt.mode_j,
                mode_k: mt.mode_k,
                epsilon: Complex64::from_polar(epsilon_magnitudes[mt.pump_index], -2.0 * pump.theta),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CouplingMatrix::from_parts(&deltas, &couplings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::hz_to_rad;

    fn comb(freqs_ghz: &[f64]) -> Vec<ModeSpec> {
        freqs_ghz
            .iter()
            .enumerate()
            .map(|(i, f)| ModeSpec::from_hz(i as i64, f * 1e9, 20e3, 20e3).unwrap())
            .collect()
    }

    /// Exhaustive enumeration over ordered pairs, deduplicated; independent of
    /// the j <= k loop in `match_four_wave`.
    fn brute_force(modes: &[ModeSpec], pumps: &[PumpTone], tol: f64) -> Vec<(usize, usize, usize)> {
        let mut v = Vec::new();
        for (p, pump) in pumps.iter().enumerate() {
            for a in 0..modes.len() {
                for b in 0..modes.len() {
                    if (2.0 * pump.omega_p - modes[a].omega - modes[b].omega).abs() <= tol {
                        v.push((p, a.min(b), a.max(b)));
                    }
                }
            }
        }
        v.sort();
        v.dedup();
        v
    }

    #[test]
    fn no_pumps_no_matches() {
        assert!(match_four_wave(&comb(&[3.85, 3.852]), &[], 1.0).unwrap().is_empty());
    }

    #[test]
    fn uniform_comb_matches() {
        let modes = comb(&[3.850, 3.852, 3.854]);
        let pumps = [PumpTone::from_hz(3.852e9, 0.1, 0.0).unwrap()];
        let tol = hz_to_rad(10e3);
        let got: Vec<_> =
            match_four_wave(&modes, &pumps, tol).unwrap().iter().map(|m| (m.pump_index, m.mode_j, m.mode_k)).collect();
        assert_eq!(got, brute_force(&modes, &pumps, tol));
        assert_eq!(got, vec![(0, 0, 2), (0, 1, 1)]);
    }

    #[test]
    fn nonuniform_comb_drops_pair() {
        let modes = comb(&[3.850, 3.852, 3.8545]);
        let pumps = [PumpTone::from_hz(3.852e9, 0.1, 0.0).unwrap()];
        let tol = hz_to_rad(10e3);
        let m = match_four_wave(&modes, &pumps, tol).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].mode_j, m[0].mode_k), (1, 1));
        let miss = 2.0 * pumps[0].omega_p - modes[0].omega - modes[2].omega;
        assert!((miss + hz_to_rad(0.5e6)).abs() < 1.0);
    }

    #[test]
    fn tolerance_must_be_positive() {
        assert!(match_four_wave(&comb(&[3.85]), &[], 0.0).is_err());
    }

    #[test]
    fn two_mode_hand_assembly() {
        let gamma = 1.0;
        let eps = 0.3;
        let deltas = [Complex64::new(0.0, gamma / 2.0); 2];
        let c = [PairCoupling { pump_index: 0, mode_j: 0, mode_k: 1, epsilon: Complex64::new(eps, 0.0) }];
        let m = CouplingMatrix::from_parts(&deltas, &c).unwrap().m;
        let i = Complex64::new(0.0, gamma / 2.0);
        let z = Complex64::new(0.0, 0.0);
        let e = Complex64::new(eps, 0.0);
        // lower diagonal is −conj(iγ/2) = +iγ/2
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(4, 4, &[
            i, z, z, -e,
            z, i, -e, z,
            z, e, i, z,
            e, z, z, i,
        ]);
        assert!((m - expected).iter().all(|x| x.norm() < 1e-15));
    }

    #[test]
    fn no_pumps_is_diagonal() {
        let d = [Complex64::new(0.1, 0.5), Complex64::new(-0.2, 0.4)];
        let m = CouplingMatrix::from_parts(&d, &[]).unwrap().m;
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![d[0], d[1], -d[0].conj(), -d[1].conj()]));
        assert_eq!(m, expected);
    }

    #[test]
    fn four_mode_comb_pattern() {
        // probes on every other mode, pumps on the modes between them
        let all = comb(&[3.850, 3.852, 3.854, 3.856, 3.858, 3.860, 3.862, 3.864]);
        let pumps: Vec<PumpTone> =
            [3.852, 3.856, 3.860, 3.864].iter().map(|f| PumpTone::from_hz(f * 1e9, 0.1, 0.0).unwrap()).collect();
        let tol = default_tolerance(&all);
        let probes = probe_modes(&all, &pumps, tol, false);
        assert_eq!(probes.len(), 4);
        let matches = match_four_wave(&probes, &pumps, tol).unwrap();
        let cm = build_idealized_coupling_matrix(&probes, &pumps, &[1.0; 4], &[0.0; 4], &matches).unwrap();
        let b = cm.b_block();
        // nonzero pattern of the B block: modes {0,2} couple to {1,3}
        for j in 0..4 {
            for k in 0..4 {
                assert_eq!(b[(j, k)].norm() > 0.0, (j + k) % 2 == 1, "({j},{k})");
            }
        }
        assert!(cm.bogoliubov_residual() < 1e-15);
    }

    #[test]
    fn physical_builder_on_resonance() {
        let modes = comb(&[3.850, 3.854]);
        let mirror = MirrorSpec::from_hz(2.1e9, 1.6e6).unwrap();
        let pumps = [PumpTone::from_hz(3.852e9, 0.2, 0.3).unwrap()];
        let matches = match_four_wave(&modes, &pumps, default_tolerance(&modes)).unwrap();
        let drive = DriveModel::new(&mirror, &modes, &pumps).unwrap();
        let cm = build_coupling_matrix(&modes, &pumps, &mirror, &drive.on_resonance_probes(), &matches).unwrap();
        for d in &cm.probe_detunings {
            assert!(d.re.abs() < 1e-3);
            assert!((d.im - hz_to_rad(40e3) / 2.0).abs() < 1e-9);
        }
        let eps = cm.couplings[0].epsilon;
        assert!((eps.arg() + 0.6).abs() < 1e-12);
        assert!((cm.b_block()[(0, 1)] + eps).norm() < 1e-15);
        assert!(cm.bogoliubov_residual() < 1e-12);
        assert!(build_coupling_matrix(&modes, &pumps, &mirror, &[1.0], &matches).is_err());
    }

    #[test]
    fn idealized_shift_equals_four_eps() {
        // single pump with identical couplings: 2 d g̃² / ħ = 4 |ε_jj|
        let mirror = MirrorSpec::from_hz(2.1e9, 1.6e6).unwrap();
        let modes = comb(&[3.852]);
        let pumps = [PumpTone::from_hz(3.852e9, 0.2, 0.0).unwrap()];
        let drive = DriveModel::new(&mirror, &modes, &pumps).unwrap();
        let eps = parametric_coupling(drive.pump_amplitudes[0], drive.g_tilde[0], drive.g_tilde[0], 0.0);
        assert!((drive.shifts[0] - 4.0 * eps.norm()).abs() < 1e-12 * drive.shifts[0]);
    }

    #[test]
    fn csv_shape() {
        let d = [Complex64::new(0.0, 0.5)];
        let csv = CouplingMatrix::from_parts(&d, &[]).unwrap().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "re0,im0,re1,im1");
        assert_eq!(lines[1].split(',').count(), 4);
    }
}
