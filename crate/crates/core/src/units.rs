//! Physical constants (CODATA 2018, SI) and unit helpers.

use std::f64::consts::PI;

/// Planck constant (J s).
pub const H: f64 = 6.626_070_15e-34;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = H / (2.0 * PI);
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Elementary charge (C).
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Magnetic flux quantum h/2e (Wb).
pub const PHI_0: f64 = H / (2.0 * E_CHARGE);
/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Ordinary frequency (Hz) to angular frequency (rad/s).
#[inline]
pub fn hz_to_rad(f: f64) -> f64 {
    2.0 * PI * f
}

/// Angular frequency (rad/s) to ordinary frequency (Hz).
#[inline]
pub fn rad_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Power gain in dB to linear.
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power gain to dB.
#[inline]
pub fn linear_to_db(g: f64) -> f64 {
    10.0 * g.log10()
}

/// Bose-Einstein occupation of a mode at angular frequency `omega` and temperature `t`.
pub fn bose_occupation(omega: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let x = HBAR * omega / (K_B * t);
    1.0 / x.exp_m1()
}
