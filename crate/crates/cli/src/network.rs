//! Turns the scenario's system section into coupling and scattering matrices.

use phonocomb::coupling::{build_coupling_matrix, build_idealized_coupling_matrix, default_tolerance, match_four_wave, DriveModel};
use phonocomb::gaussian::{output_covariance, thermal_covariance};
use phonocomb::modesys::{estimate_vacuum_coupling, MaterialParams};
use phonocomb::scattering::{scattering_matrices_with, stability_margin, ScatteringOptions};
use phonocomb::units::hz_to_rad;
use phonocomb::{CouplingMatrix, CovarianceMatrix, FourWaveMatch, MirrorSpec, ModeSpec, PumpTone, ScatteringPair};

use crate::config::{LoadedConfig, PumpConfig};
use crate::error::CliResult;

#[derive(Debug, Clone)]
pub enum Coupling {
    /// |ε| per pump (rad/s).
    Ideal(Vec<f64>),
    Drive(MirrorSpec),
}

#[derive(Debug, Clone)]
pub struct Network {
    pub modes: Vec<ModeSpec>,
    pub pumps: Vec<PumpTone>,
    pub coupling: Coupling,
    pub matches: Vec<FourWaveMatch>,
    pub allow_unstable: bool,
}

pub fn all_modes(cfg: &LoadedConfig) -> CliResult<Vec<ModeSpec>> {
    cfg.config
        .system
        .modes
        .get_ref()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            ModeSpec::from_hz(m.index, m.freq_hz, m.loss_ext_hz, m.loss_int_hz)
                .map_err(|e| cfg.error_at(cfg.config.system.modes.span(), &format!("system.modes[{i}]"), e.to_string()))
        })
        .collect()
}

/// Probe modes in the order listed under `probes.modes`, or every mode.
pub fn probe_modes(cfg: &LoadedConfig) -> CliResult<Vec<ModeSpec>> {
    let modes = all_modes(cfg)?;
    match &cfg.config.probes {
        None => Ok(modes),
        Some(p) => Ok(p.modes.get_ref().iter().map(|idx| modes[cfg.position_of(*idx).expect("validated")]).collect()),
    }
}

pub fn mirror(cfg: &LoadedConfig) -> CliResult<Option<MirrorSpec>> {
    let Some(m) = &cfg.config.system.mirror else { return Ok(None) };
    let circuit = m.l_j_h.zip(m.c_f);
    let g_vac_hz = match (m.g_vac_hz, &cfg.config.system.materials) {
        (Some(g), _) => g,
        (None, Some(mat)) => {
            let (l_j, c) = circuit.ok_or_else(|| cfg.error("system.mirror", "estimating g_vac needs l_j_h and c_f"))?;
            let params = MaterialParams {
                e14: mat.e14_c_per_m2,
                eps: mat.eps_f_per_m,
                rho: mat.rho_kg_per_m3,
                v_saw: mat.v_saw_m_per_s,
                area: mat.area_m2,
                l_p: mat.l_p_m,
                l_m: mat.l_m_m,
                e_l: MaterialParams::inductive_energy(l_j),
                e_c: MaterialParams::charging_energy(c),
            };
            let g = estimate_vacuum_coupling(&params).map_err(|e| cfg.error("system.materials", e.to_string()))?;
            g / (2.0 * std::f64::consts::PI)
        }
        (None, None) => return Err(cfg.error("system.mirror.g_vac_hz", "give g_vac_hz or a materials section")),
    };
    let spec = match (m.freq_lc_hz, circuit) {
        (Some(f), Some((l, c))) => MirrorSpec::from_hz(f, g_vac_hz).and_then(|s| s.with_circuit(l, c)),
        (Some(f), None) => MirrorSpec::from_hz(f, g_vac_hz),
        (None, Some((l, c))) => MirrorSpec::from_circuit(l, c, hz_to_rad(g_vac_hz)),
        (None, None) => return Err(cfg.error("system.mirror", "give freq_lc_hz or l_j_h and c_f")),
    };
    spec.map(Some).map_err(|e| cfg.error("system.mirror", e.to_string()))
}

pub fn pump_tones(cfg: &LoadedConfig, pumps: &[PumpConfig]) -> CliResult<Vec<PumpTone>> {
    pumps
        .iter()
        .enumerate()
        .map(|(i, p)| {
            PumpTone::from_hz(p.freq_hz, p.flux_phi0, p.theta_rad).map_err(|e| cfg.error(&format!("pumps[{i}]"), e.to_string()))
        })
        .collect()
}

pub fn matching_tolerance(cfg: &LoadedConfig, modes: &[ModeSpec]) -> f64 {
    cfg.config.system.matching_tol_hz.map_or_else(|| default_tolerance(modes), hz_to_rad)
}

impl Network {
    /// The scenario's probe modes and pump list.
    pub fn from_config(cfg: &LoadedConfig) -> CliResult<Self> {
        let pumps: Vec<PumpConfig> = cfg.config.pumps.iter().map(|p| p.get_ref().clone()).collect();
        let coupling = if pumps.iter().all(|p| p.epsilon_hz.is_some()) {
            Coupling::Ideal(pumps.iter().map(|p| hz_to_rad(p.epsilon_hz.unwrap())).collect())
        } else {
            Coupling::Drive(mirror(cfg)?.expect("validated"))
        };
        Self::build(cfg, probe_modes(cfg)?, pump_tones(cfg, &pumps)?, coupling)
    }

    pub fn build(cfg: &LoadedConfig, modes: Vec<ModeSpec>, pumps: Vec<PumpTone>, coupling: Coupling) -> CliResult<Self> {
        let tol = matching_tolerance(cfg, &modes);
        let matches = match_four_wave(&modes, &pumps, tol)?;
        Ok(Self { modes, pumps, coupling, matches, allow_unstable: cfg.config.system.allow_unstable })
    }

    pub fn labels(&self) -> Vec<i64> {
        self.modes.iter().map(|m| m.index).collect()
    }

    /// M with probe offsets (rad/s) from each mode's shifted resonance.
    pub fn coupling_matrix(&self, detunings: &[f64]) -> CliResult<CouplingMatrix> {
        Ok(match &self.coupling {
            Coupling::Ideal(eps) => build_idealized_coupling_matrix(&self.modes, &self.pumps, eps, detunings, &self.matches)?,
            Coupling::Drive(mirror) => {
                let drive = DriveModel::new(mirror, &self.modes, &self.pumps)?;
                let probes: Vec<f64> = drive.on_resonance_probes().iter().zip(detunings).map(|(w, d)| w + d).collect();
                build_coupling_matrix(&self.modes, &self.pumps, mirror, &probes, &self.matches)?
            }
        })
    }

    pub fn scattering(&self, detunings: &[f64]) -> CliResult<ScatteringPair> {
        let cm = self.coupling_matrix(detunings)?;
        let ge: Vec<f64> = self.modes.iter().map(|m| m.gamma_ext).collect();
        let gi: Vec<f64> = self.modes.iter().map(|m| m.gamma_int).collect();
        Ok(scattering_matrices_with(&cm, &ge, &gi, ScatteringOptions { allow_unstable: self.allow_unstable })?)
    }

    /// Smallest Im eigenvalue of M in Hz; negative beyond the collective threshold.
    pub fn stability_margin_hz(&self, detunings: &[f64]) -> CliResult<f64> {
        Ok(stability_margin(&self.coupling_matrix(detunings)?) / (2.0 * std::f64::consts::PI))
    }

    /// Output state with every input port thermal at `temp_k`.
    pub fn output_state(&self, detunings: &[f64], temp_k: f64) -> CliResult<CovarianceMatrix> {
        let sc = self.scattering(detunings)?.to_quadrature_basis()?;
        let v_in = thermal_covariance(&self.modes, temp_k)?;
        Ok(output_covariance(&sc, &v_in, &v_in)?)
    }
}
