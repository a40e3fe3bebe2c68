//! CODATA 2018 physical constants in SI units.

use std::f64::consts::PI;

/// Bohr magneton (J/T).
pub const MU_B: f64 = 9.274_010_078_3e-24;
/// Nuclear magneton (J/T).
pub const MU_N: f64 = 5.050_783_746_1e-27;
/// Vacuum permeability (T m / A).
pub const MU_0: f64 = 1.256_637_062_12e-6;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = H_PLANCK / (2.0 * std::f64::consts::PI);
/// Planck constant (J s).
pub const H_PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;

/// mu_0 / (4 pi), the prefactor of every dipolar coupling.
pub const MU_0_OVER_4PI: f64 = MU_0 / (4.0 * PI);

/// Snapshot of the constants, for embedding in output metadata.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhysicalConstants {
    pub mu_b: f64,
    pub mu_n: f64,
    pub mu_0: f64,
    pub hbar: f64,
    pub k_b: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { mu_b: MU_B, mu_n: MU_N, mu_0: MU_0, hbar: HBAR, k_b: K_B }
    }
}

/// Converts a frequency in Hz to angular frequency in rad/s.
#[inline]
pub fn hz_to_rad(f: f64) -> f64 {
    2.0 * PI * f
}

/// Converts an angular frequency in rad/s to Hz.
#[inline]
pub fn rad_to_hz(w: f64) -> f64 {
    w / (2.0 * PI)
}
