//! Resonator modes, the dispersively coupled mirror mode and the flux pump.
//!
//! All frequencies and rates are stored as angular quantities (rad/s). The
//! `from_hz` constructors accept ordinary frequency and convert. Pump flux
//! amplitudes are expressed as fractions of the flux quantum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{hz_to_rad, E_CHARGE, HBAR, PHI_0};

/// Minimum |ω_j − ω_LC| (rad/s) for which the dispersive expansion is accepted.
pub const DEGENERACY_GUARD: f64 = 1e6;

/// One resonator mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub index: i64,
    /// Angular frequency (rad/s).
    pub omega: f64,
    /// External (port) loss rate (rad/s).
    pub gamma_ext: f64,
    /// Internal loss rate (rad/s).
    pub gamma_int: f64,
}

impl ModeSpec {
    pub fn new(index: i64, omega: f64, gamma_ext: f64, gamma_int: f64) -> Result<Self> {
        if !(omega > 0.0) || !(gamma_ext >= 0.0) || !(gamma_int >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mode {index}: need omega > 0 and nonnegative losses (omega={omega}, gamma_ext={gamma_ext}, gamma_int={gamma_int})"
            )));
        }
        Ok(Self { index, omega, gamma_ext, gamma_int })
    }

    /// Frequency and loss rates in Hz.
    pub fn from_hz(index: i64, freq_hz: f64, loss_ext_hz: f64, loss_int_hz: f64) -> Result<Self> {
        Self::new(index, hz_to_rad(freq_hz), hz_to_rad(loss_ext_hz), hz_to_rad(loss_int_hz))
    }

    #[inline]
    pub fn gamma_tot(&self) -> f64 {
        self.gamma_ext + self.gamma_int
    }
}

/// Check a mode list: unique indices, sorted by frequency.
pub fn validate_modes(modes: &[ModeSpec]) -> Result<()> {
    for w in modes.windows(2) {
        if w[1].omega < w[0].omega {
            return Err(Error::InvalidParameter(format!(
                "modes must be sorted by frequency (index {} after {})",
                w[1].index, w[0].index
            )));
        }
    }
    let mut idx: Vec<i64> = modes.iter().map(|m| m.index).collect();
    idx.sort_unstable();
    if idx.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("duplicate mode index".into()));
    }
    Ok(())
}

/// The LC mode formed by the mirror capacitance and the SQUID inductance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorSpec {
    /// LC-mode angular frequency (rad/s).
    pub omega_lc: f64,
    /// Vacuum coupling strength to each resonator mode (rad/s).
    pub g_vac: f64,
    /// Josephson inductance (H), optional.
    pub l_j: Option<f64>,
    /// Total mirror capacitance (F), optional.
    pub c_total: Option<f64>,
}

impl MirrorSpec {
    pub fn new(omega_lc: f64, g_vac: f64) -> Result<Self> {
        if !(omega_lc > 0.0) || !(g_vac >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mirror: need omega_lc > 0 and g_vac >= 0 (got {omega_lc}, {g_vac})"
            )));
        }
        Ok(Self { omega_lc, g_vac, l_j: None, c_total: None })
    }

    pub fn from_hz(freq_lc_hz: f64, g_vac_hz: f64) -> Result<Self> {
        Self::new(hz_to_rad(freq_lc_hz), hz_to_rad(g_vac_hz))
    }

    /// Mirror mode defined by its circuit elements; ω_LC = 1/sqrt(L_J C).
    pub fn from_circuit(l_j: f64, c_total: f64, g_vac: f64) -> Result<Self> {
        if !(l_j > 0.0) || !(c_total > 0.0) {
            return Err(Error::InvalidParameter("mirror: L_J and C must be positive".into()));
        }
        let mut m = Self::new(1.0 / (l_j * c_total).sqrt(), g_vac)?;
        m.l_j = Some(l_j);
        m.c_total = Some(c_total);
        Ok(m)
    }

    /// Attach circuit elements to an existing spec, checking consistency with ω_LC.
    pub fn with_circuit(mut self, l_j: f64, c_total: f64) -> Result<Self> {
        let expected = 1.0 / (l_j * c_total).sqrt();
        if ((expected - self.omega_lc) / self.omega_lc).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "mirror: 1/sqrt(L_J C) = {expected:.9e} rad/s disagrees with omega_lc = {:.9e}",
                self.omega_lc
            )));
        }
        self.l_j = Some(l_j);
        self.c_total = Some(c_total);
        Ok(self)
    }
}

/// One flux-pump tone Φ(t) = Φ_AC cos(ω_p t + θ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpTone {
    /// Angular frequency (rad/s).
    pub omega_p: f64,
    /// Flux amplitude as a fraction of Φ₀.
    pub phi_ac: f64,
    /// Phase (rad).
    pub theta: f64,
}

impl PumpTone {
    pub fn new(omega_p: f64, phi_ac: f64, theta: f64) -> Result<Self> {
        if !(omega_p > 0.0) {
            return Err(Error::InvalidParameter(format!("pump frequency must be positive, got {omega_p}")));
        }
        // small-flux expansion of the Josephson energy
        if !(0.0..0.5).contains(&phi_ac) {
            return Err(Error::InvalidParameter(format!("pump flux must lie in [0, 0.5) Φ₀, got {phi_ac}")));
        }
        Ok(Self { omega_p, phi_ac, theta })
    }

    pub fn from_hz(freq_hz: f64, phi_ac: f64, theta: f64) -> Result<Self> {
        Self::new(hz_to_rad(freq_hz), phi_ac, theta)
    }
}

/// Substrate and mirror parameters entering the vacuum-coupling estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Piezoelectric coefficient (C/m²).
    pub e14: f64,
    /// Dielectric constant (F/m).
    pub eps: f64,
    /// Substrate density (kg/m³).
    pub rho: f64,
    /// SAW velocity (m/s).
    pub v_saw: f64,
    /// Effective mode area (m²).
    pub area: f64,
    /// Penetration depth into the mirror (m).
    pub l_p: f64,
    /// Mirror length (m).
    pub l_m: f64,
    /// Inductive energy (Φ₀/2π)²/L_J (J).
    pub e_l: f64,
    /// Charging energy e²/2C (J).
    pub e_c: f64,
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("e14", self.e14),
            ("eps", self.eps),
            ("rho", self.rho),
            ("v_saw", self.v_saw),
            ("area", self.area),
            ("l_p", self.l_p),
            ("l_m", self.l_m),
            ("e_l", self.e_l),
            ("e_c", self.e_c),
        ];
        if let Some((name, v)) = fields.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::InvalidParameter(format!("material parameter {name} must be positive, got {v}")));
        }
        if self.l_p > self.l_m {
            return Err(Error::InvalidParameter("penetration depth exceeds mirror length".into()));
        }
        Ok(())
    }

    /// Inductive energy of a junction with inductance `l_j`.
    pub fn inductive_energy(l_j: f64) -> f64 {
        (PHI_0 / (2.0 * std::f64::consts::PI)).powi(2) / l_j
    }

    /// Charging energy of a capacitance `c`.
    pub fn charging_energy(c: f64) -> f64 {
        E_CHARGE * E_CHARGE / (2.0 * c)
    }

    /// Penetration depth inferred from the free spectral range of a cavity with
    /// mirror edge separation `l_edge`: FSR = v / (2 (L_edge + 2 L_p)).
    pub fn penetration_depth_from_fsr(v_saw: f64, fsr_hz: f64, l_edge: f64) -> f64 {
        (v_saw / (2.0 * fsr_hz) - l_edge) / 2.0
    }
}

/// Dimensionless effective couplings (g̃_j, ḡ_j) of each mode to the mirror:
/// g̃_j = −2gω_j/(ω_LC² − ω_j²), ḡ_j = 2gω_LC/(ω_LC² − ω_j²).
pub fn effective_couplings(mirror: &MirrorSpec, modes: &[ModeSpec]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut g_tilde = Vec::with_capacity(modes.len());
    let mut g_bar = Vec::with_capacity(modes.len());
    let wl = mirror.omega_lc;
    for m in modes {
        if (m.omega - wl).abs() < DEGENERACY_GUARD {
            return Err(Error::DegenerateMode { index: m.index, omega: m.omega });
        }
        let denom = wl * wl - m.omega * m.omega;
        g_tilde.push(-2.0 * mirror.g_vac * m.omega / denom);
        g_bar.push(2.0 * mirror.g_vac * wl / denom);
    }
    Ok((g_tilde, g_bar))
}

/// Renormalized mode frequency ω̃_j = ω_j + g ḡ_j.
pub fn renormalized_frequency(mirror: &MirrorSpec, mode: &ModeSpec, g_bar: f64) -> f64 {
    mode.omega + mirror.g_vac * g_bar
}

/// Vacuum coupling g (rad/s) from the product of the SAW zero-point voltage and
/// the mirror charge fluctuations, ħg = φ₀ Q₀.
pub fn estimate_vacuum_coupling(m: &MaterialParams) -> Result<f64> {
    m.validate()?;
    let phi0 = m.e14 / m.eps * (HBAR / (2.0 * m.rho * m.v_saw * m.area)).sqrt();
    let beta = m.l_p / m.l_m;
    let q0 = 2.0 * E_CHARGE * beta * (m.e_l / (32.0 * m.e_c)).powf(0.25);
    Ok(phi0 * q0 / HBAR)
}

/// Effective pump amplitude d = ħω_LC (πΦ_AC/2Φ₀)²/2 (J).
pub fn pump_amplitude(mirror: &MirrorSpec, tone: &PumpTone) -> f64 {
    let x = std::f64::consts::PI * tone.phi_ac / 2.0;
    HBAR * mirror.omega_lc * x * x / 2.0
}

/// Parametric coupling ε_jk = (d g̃_j g̃_k / 2ħ) e^{−2iθ} (rad/s), in the frame
/// rotating with the pump.
pub fn parametric_coupling(d: f64, g_tilde_j: f64, g_tilde_k: f64, theta: f64) -> Complex64 {
    let mag = d * g_tilde_j * g_tilde_k / (2.0 * HBAR);
    Complex64::from_polar(1.0, -2.0 * theta) * mag
}
