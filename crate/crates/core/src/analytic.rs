//! Closed-form EPR models: electric-field (Stark) line broadening,
//! instantaneous diffusion, resonator reflection and ensemble coupling,
//! pulse/Rabi relations, direct-phonon relaxation and its scalings.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, K_B, MU_0, MU_0_OVER_4PI, MU_B};
use crate::fitkit::{levenberg_marquardt, CurveModel, LmOptions};
use crate::hamiltonian::{FieldConfig, GTensor};
use crate::{Error, Result};

/// Fraction of Er3+ in zero-nuclear-spin isotopes.
pub const ZERO_SPIN_ISOTOPE_FRACTION: f64 = 0.77;
/// Default resonator impedance (ohm).
pub const DEFAULT_Z0_OHM: f64 = 40.0;

// ---------------------------------------------------------------------------
// Stark broadening

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarkModel {
    /// Linear Stark coefficient alpha ((V/cm)^-1).
    pub alpha_per_v_cm: f64,
    /// Angle of vanishing sensitivity (deg).
    pub phi0_deg: f64,
    /// Residual linewidth, FWHM (Hz).
    pub gamma_min_hz: f64,
    /// Spread of the local electric field along c (V/cm).
    pub delta_ec_v_cm: f64,
}

impl Default for StarkModel {
    fn default() -> Self {
        Self { alpha_per_v_cm: 11e-6, phi0_deg: 31.0, gamma_min_hz: 1e6, delta_ec_v_cm: 32e3 }
    }
}

impl StarkModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_per_v_cm > 0.0) {
            return Err(Error::param("alpha", "must be positive"));
        }
        if !(self.gamma_min_hz >= 0.0) {
            return Err(Error::param("gamma_min", "must be non-negative"));
        }
        if !(self.delta_ec_v_cm >= 0.0) {
            return Err(Error::param("delta_Ec", "must be non-negative"));
        }
        Ok(())
    }
}

/// d omega / d E_c in rad s^-1 per V/cm.
pub fn stark_sensitivity(model: &StarkModel, field: &FieldConfig, g: &GTensor) -> f64 {
    let u = 2.0 * (field.phi_deg - model.phi0_deg).to_radians();
    model.alpha_per_v_cm * u.sin() / (2.0 * g.g_perp) * MU_B * field.b0_t / HBAR
}

/// Inhomogeneous linewidth (FWHM, Hz) at the field angle.
pub fn stark_linewidth(model: &StarkModel, field: &FieldConfig, g: &GTensor) -> Result<f64> {
    model.validate()?;
    if !(field.b0_t > 0.0) {
        return Err(Error::param("b0", "must be positive"));
    }
    Ok(model.gamma_min_hz + stark_sensitivity(model, field, g).abs() * model.delta_ec_v_cm / (2.0 * PI))
}

/// Fits (Gamma_min, Delta E_c, phi0) to (phi_deg, FWHM_Hz) samples at fixed alpha.
pub fn fit_stark(samples: &[(f64, f64)], b0_t: f64, g: &GTensor, alpha_per_v_cm: f64) -> Result<StarkFit> {
    if samples.len() < 4 {
        return Err(Error::Input(format!("need at least 4 angles, got {}", samples.len())));
    }
    if !(b0_t > 0.0) || !(alpha_per_v_cm > 0.0) {
        return Err(Error::param("stark", "field and alpha must be positive"));
    }
    let first = samples[0].0;
    if samples.iter().all(|s| ((s.0 - first).rem_euclid(90.0)).min(90.0 - (s.0 - first).rem_euclid(90.0)) < 1e-9) {
        return Err(Error::IllConditioned("all angles share one sensitivity zero class".into()));
    }
    // Hz per (V/cm) at unit |sin|
    let scale = alpha_per_v_cm / (2.0 * g.g_perp) * MU_B * b0_t / HBAR / (2.0 * PI);
    let f = move |phi: f64, p: &[f64]| p[0] + scale * p[1] * (2.0 * (phi - p[2]).to_radians()).sin().abs();
    let grad = move |phi: f64, p: &[f64], out: &mut [f64]| {
        let u = 2.0 * (phi - p[2]).to_radians();
        let s = u.sin();
        out[0] = 1.0;
        out[1] = scale * s.abs();
        out[2] = -scale * p[1] * s.signum() * u.cos() * 2.0 * PI / 180.0;
    };
    let problem = CurveModel {
        xs: samples.iter().map(|s| s.0).collect(),
        ys: samples.iter().map(|s| s.1).collect(),
        n_params: 3,
        f,
        grad,
        feasible: Some(|p: &[f64]| p[1] >= 0.0),
    };
    let (gmin, gmax) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.1), b.max(s.1)));
    let mut best: Option<crate::fitkit::LmReport> = None;
    let mut last_err = None;
    // every sample angle is a candidate zero; the |sin| kink makes the start matter
    for start in samples.iter().map(|s| s.0).chain((0..18).map(|k| 10.0 * k as f64)) {
        let peak = samples
            .iter()
            .map(|s| (2.0 * (s.0 - start).to_radians()).sin().abs())
            .fold(0.0, f64::max)
            .max(1e-3);
        let p0 = [gmin, ((gmax - gmin) / (scale * peak)).max(1.0), start];
        match levenberg_marquardt(&problem, &p0, &LmOptions::default()) {
            Ok(r) => {
                if best.as_ref().map_or(true, |b| r.ssr < b.ssr * (1.0 - 1e-12)) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let r = best.ok_or_else(|| last_err.expect("at least one start"))?;
    // fold phi0 into [0, 90) since the model has period 90 deg in |sin|
    let phi0 = r.params[2].rem_euclid(90.0);
    Ok(StarkFit {
        model: StarkModel {
            alpha_per_v_cm,
            phi0_deg: phi0,
            gamma_min_hz: r.params[0],
            delta_ec_v_cm: r.params[1],
        },
        gamma_min_err_hz: r.errors[0],
        delta_ec_err_v_cm: r.errors[1],
        phi0_err_deg: r.errors[2],
        residual_norm: r.ssr.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarkFit {
    pub model: StarkModel,
    pub gamma_min_err_hz: f64,
    pub delta_ec_err_v_cm: f64,
    pub phi0_err_deg: f64,
    pub residual_norm: f64,
}

// ---------------------------------------------------------------------------
// Instantaneous diffusion

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinLine {
    /// Spin transition frequency (rad/s).
    pub omega_s: f64,
    /// Inhomogeneous FWHM (rad/s).
    pub gamma: f64,
    /// Er number density (m^-3).
    pub rho_m3: f64,
}

impl SpinLine {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::param("Gamma", "linewidth must be positive"));
        }
        if !(self.rho_m3 >= 0.0) {
            return Err(Error::param("rho", "density must be non-negative"));
        }
        Ok(())
    }
}

/// cm^-3 to m^-3.
pub fn per_cm3_to_per_m3(rho: f64) -> f64 {
    rho * 1e6
}

/// Zero-nuclear-spin density from a total Er density.
pub fn zero_spin_density(total_er: f64) -> f64 {
    ZERO_SPIN_ISOTOPE_FRACTION * total_er
}

/// Square-pulse bandwidth (rad/s): Delta omega_pulse / 2pi = 1 / dt.
pub fn pulse_bandwidth(pulse_duration_s: f64) -> f64 {
    2.0 * PI / pulse_duration_s
}

/// Excitation bandwidth min(kappa, pulse bandwidth), rad/s.
pub fn excitation_bandwidth(kappa: f64, pulse_duration_s: f64) -> f64 {
    kappa.min(pulse_bandwidth(pulse_duration_s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdEstimate {
    /// None when there are no spins to flip (rho = 0).
    pub t2_s: Option<f64>,
    /// Set when the excitation bandwidth exceeds the linewidth.
    pub warning: Option<String>,
}

/// Instantaneous-diffusion coherence time of an exponential decay.
pub fn instantaneous_diffusion_t2(line: &SpinLine, delta_omega: f64, g_eff: f64, theta2: f64) -> Result<IdEstimate> {
    line.validate()?;
    if !(delta_omega >= 0.0) {
        return Err(Error::param("delta_omega", "must be non-negative"));
    }
    let warning = (delta_omega > line.gamma)
        .then(|| "excitation bandwidth exceeds the inhomogeneous linewidth; formula overestimates the flipped fraction".to_string());
    let rate = 2.5 * MU_0_OVER_4PI * (g_eff * MU_B).powi(2) / HBAR
        * line.rho_m3
        * (delta_omega / line.gamma)
        * (0.5 * theta2).sin().powi(2);
    let t2_s = (rate > 0.0).then(|| 1.0 / rate);
    Ok(IdEstimate { t2_s, warning })
}

// ---------------------------------------------------------------------------
// Resonator response

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    /// Resonance frequency (rad/s).
    pub omega0: f64,
    /// Coupling rate (rad/s).
    pub kappa_c: f64,
    /// Internal loss rate (rad/s).
    pub kappa_int: f64,
}

impl ResonatorParams {
    pub fn kappa(&self) -> f64 {
        self.kappa_c + self.kappa_int
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0 && self.kappa_c > 0.0 && self.kappa_int >= 0.0) {
            return Err(Error::param("resonator", "frequency and coupling must be positive, loss non-negative"));
        }
        Ok(())
    }

    /// From frequency (Hz) and quality factors.
    pub fn from_quality(f0_hz: f64, q_c: f64, q_i: f64) -> Self {
        let omega0 = 2.0 * PI * f0_hz;
        Self { omega0, kappa_c: omega0 / q_c, kappa_int: omega0 / q_i }
    }
}

/// Reflection of a resonator coupled to a Lorentzian spin ensemble.
pub fn reflection_coefficient(res: &ResonatorParams, line: &SpinLine, g_ens: f64, omega: f64) -> Complex64 {
    let i = Complex64::i();
    let spin = Complex64::new(omega - line.omega_s, 0.5 * line.gamma);
    let den = Complex64::new(omega - res.omega0, 0.5 * res.kappa()) - g_ens * g_ens / spin;
    i * res.kappa_c / den - 1.0
}

/// Internal loss including the ensemble absorption.
pub fn broadened_internal_loss(res: &ResonatorParams, line: &SpinLine, g_ens: f64, omega: f64) -> f64 {
    let d = omega - line.omega_s;
    res.kappa_int + g_ens * g_ens * line.gamma / (d * d + 0.25 * line.gamma * line.gamma)
}

// ---------------------------------------------------------------------------
// Vacuum field maps and ensemble coupling

/// Rms vacuum field on a rectangular (y, z) grid in the plane normal to the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B1Map {
    /// Strictly increasing coordinates (m).
    pub y_m: Vec<f64>,
    pub z_m: Vec<f64>,
    /// Field components (T), index `iy * z_m.len() + iz`.
    pub bx: Vec<f64>,
    pub by: Vec<f64>,
    pub bz: Vec<f64>,
}

/// Trapezoid weights of a strictly increasing abscissa.
pub fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for k in 1..n {
        let h = 0.5 * (x[k] - x[k - 1]);
        w[k - 1] += h;
        w[k] += h;
    }
    w
}

impl B1Map {
    pub fn validate(&self) -> Result<()> {
        let n = self.y_m.len() * self.z_m.len();
        if self.y_m.len() < 2 || self.z_m.len() < 2 {
            return Err(Error::Input("field map needs at least 2 x 2 grid points".into()));
        }
        if self.bx.len() != n || self.by.len() != n || self.bz.len() != n {
            return Err(Error::Input("field map components do not fill the grid".into()));
        }
        for axis in [&self.y_m, &self.z_m] {
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Input("field map coordinates must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    /// Area weight of every grid node (m^2), same layout as the field arrays.
    pub fn area_weights(&self) -> Vec<f64> {
        let wy = trapezoid_weights(&self.y_m);
        let wz = trapezoid_weights(&self.z_m);
        wy.iter().flat_map(|a| wz.iter().map(move |b| a * b)).collect()
    }

    /// Reads `y_um, z_um, B1x, B1y, B1z` rows (T per sqrt photon) on a full grid.
    pub fn from_csv(text: &str) -> Result<Self> {
        let table = crate::io::read_table(text)?;
        let col = |name: &str| {
            table
                .column(name)
                .ok_or_else(|| Error::Input(format!("field map is missing column `{name}`")))
        };
        let (y, z) = (col("y_um")?, col("z_um")?);
        let (bx, by, bz) = (col("B1x_T_per_sqrt_photon")?, col("B1y")?, col("B1z")?);
        let uniq = |v: &[f64]| {
            let mut u = v.to_vec();
            u.sort_by(f64::total_cmp);
            u.dedup();
            u
        };
        let (ys, zs) = (uniq(&y), uniq(&z));
        let nz = zs.len();
        let mut map = B1Map {
            y_m: ys.iter().map(|v| v * 1e-6).collect(),
            z_m: zs.iter().map(|v| v * 1e-6).collect(),
            bx: vec![f64::NAN; ys.len() * nz],
            by: vec![f64::NAN; ys.len() * nz],
            bz: vec![f64::NAN; ys.len() * nz],
        };
        for r in 0..y.len() {
            let iy = ys.binary_search_by(|p| p.total_cmp(&y[r])).expect("present");
            let iz = zs.binary_search_by(|p| p.total_cmp(&z[r])).expect("present");
            let k = iy * nz + iz;
            map.bx[k] = bx[r];
            map.by[k] = by[r];
            map.bz[k] = bz[r];
        }
        if map.by.iter().any(|v| v.is_nan()) {
            return Err(Error::Input("field map rows do not cover a full rectangular grid".into()));
        }
        map.validate()?;
        Ok(map)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("y_um,z_um,B1x_T_per_sqrt_photon,B1y,B1z\n");
        let nz = self.z_m.len();
        for (iy, y) in self.y_m.iter().enumerate() {
            for (iz, z) in self.z_m.iter().enumerate() {
                let k = iy * nz + iz;
                out.push_str(&format!("{:e},{:e},{:e},{:e},{:e}\n", y * 1e6, z * 1e6, self.bx[k], self.by[k], self.bz[k]));
            }
        }
        out
    }
}

/// Rms vacuum current fluctuation omega0 sqrt(hbar / 2 Z0) (A).
pub fn vacuum_current(omega0: f64, z0_ohm: f64) -> f64 {
    omega0 * (HBAR / (2.0 * z0_ohm)).sqrt()
}

/// Cross-section of the crystal under a flat inductor wire along x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireGeometry {
    /// Strip width (m); zero gives a filament.
    pub width_m: f64,
    /// Lateral extent of the map (m), centred on the wire.
    pub ly_m: f64,
    /// Depth of the map below the surface (m).
    pub lz_m: f64,
    /// Wire length (m), the extent of the integration volume along x.
    pub length_m: f64,
}

impl WireGeometry {
    /// Cross-section used for the coupling histograms, 400 x 200 um^2.
    pub fn strip(width_m: f64, length_m: f64) -> Self {
        Self { width_m, ly_m: 400e-6, lz_m: 200e-6, length_m }
    }
}

/// Field of a current sheet of width `w` at the origin, flowing along x, at (y, z).
pub fn strip_field(current: f64, width_m: f64, y: f64, z: f64) -> (f64, f64) {
    if width_m == 0.0 {
        let r2 = y * y + z * z;
        let k = MU_0 * current / (2.0 * PI * r2);
        return (-k * z, k * y);
    }
    let k = MU_0 * current / (2.0 * PI * width_m);
    let (a, b) = (y + 0.5 * width_m, y - 0.5 * width_m);
    let by = -k * ((a / z).atan() - (b / z).atan());
    let bz = 0.5 * k * ((a * a + z * z) / (b * b + z * z)).ln();
    (by, bz)
}

fn graded_axis(start: f64, end: f64, first_step: f64, fine_until: f64, growth: f64) -> Vec<f64> {
    // uniform steps up to `fine_until`, then geometric growth
    let mut out = vec![start];
    let mut x = start;
    let mut h = first_step;
    while x < end {
        if x >= fine_until {
            h *= growth;
        }
        x = (x + h).min(end);
        out.push(x);
    }
    out
}

/// Analytic vacuum-field map of a strip (or filament) wire.
pub fn wire_b1_map(geometry: &WireGeometry, omega0: f64, z0_ohm: f64) -> Result<B1Map> {
    if !(geometry.width_m >= 0.0 && geometry.ly_m > 0.0 && geometry.lz_m > 0.0) {
        return Err(Error::param("wire", "dimensions must be positive"));
    }
    if !(z0_ohm > 0.0 && omega0 > 0.0) {
        return Err(Error::param("wire", "impedance and frequency must be positive"));
    }
    let current = vacuum_current(omega0, z0_ohm);
    let w = geometry.width_m.max(1e-6);
    let step = w / 40.0;
    let half: Vec<f64> = graded_axis(0.5 * step, 0.5 * geometry.ly_m, step, w, 1.04);
    let mut y_m: Vec<f64> = half.iter().rev().map(|v| -v).collect();
    y_m.extend(half.iter());
    let depth = graded_axis(0.5 * step, geometry.lz_m, step, 0.5 * w, 1.04);
    let z_m: Vec<f64> = depth.iter().rev().map(|v| -v).collect();
    let mut map = B1Map {
        bx: vec![0.0; y_m.len() * z_m.len()],
        by: Vec::with_capacity(y_m.len() * z_m.len()),
        bz: Vec::with_capacity(y_m.len() * z_m.len()),
        y_m,
        z_m,
    };
    for &y in &map.y_m {
        for &z in &map.z_m {
            let (by, bz) = strip_field(current, geometry.width_m, y, z);
            map.by.push(by);
            map.bz.push(bz);
        }
    }
    Ok(map)
}

/// Single-spin coupling g0 (rad/s) from the local vacuum field.
pub fn single_spin_coupling(by: f64, bz: f64, g: &GTensor, delta_phi_deg: f64) -> f64 {
    let t = g.g_par * bz;
    let p = g.g_perp * delta_phi_deg.to_radians().cos() * by;
    MU_B / (2.0 * HBAR) * (t * t + p * p).sqrt()
}

/// Integral of g0^2 over the map cross-section times the wire length (rad^2 s^-2 m^3).
pub fn coupling_integral(map: &B1Map, g: &GTensor, delta_phi_deg: f64, length_m: f64) -> Result<f64> {
    map.validate()?;
    if !(length_m > 0.0) {
        return Err(Error::param("length", "must be positive"));
    }
    let w = map.area_weights();
    let s: f64 = (0..w.len())
        .map(|k| w[k] * single_spin_coupling(map.by[k], map.bz[k], g, delta_phi_deg).powi(2))
        .sum();
    Ok(s * length_m)
}

/// Ensemble coupling g_ens (rad/s) of density `rho_m3` under the mapped field.
pub fn ensemble_coupling(map: &B1Map, rho_m3: f64, g: &GTensor, delta_phi_deg: f64, length_m: f64) -> Result<f64> {
    if !(rho_m3 >= 0.0) {
        return Err(Error::param("rho", "density must be non-negative"));
    }
    Ok((rho_m3 * coupling_integral(map, g, delta_phi_deg, length_m)?).sqrt())
}

/// Density (m^-3) that yields the measured ensemble coupling.
pub fn density_from_coupling(map: &B1Map, g_ens: f64, g: &GTensor, delta_phi_deg: f64, length_m: f64) -> Result<f64> {
    let i = coupling_integral(map, g, delta_phi_deg, length_m)?;
    if !(i > 0.0) {
        return Err(Error::Input("field map carries no coupling".into()));
    }
    Ok(g_ens * g_ens / i)
}

// ---------------------------------------------------------------------------
// Pulses

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseContext {
    /// Drive amplitude (photons/s)^1/2.
    pub beta: f64,
    /// Pulse duration (s).
    pub dt_s: f64,
    pub theta1: f64,
    pub theta2: f64,
}

/// beta = sqrt(P_in / hbar omega0).
pub fn beta_from_power(p_in_w: f64, omega0: f64) -> f64 {
    (p_in_w / (HBAR * omega0)).sqrt()
}

/// Rabi angular frequency 4 g0 beta sqrt(kappa_c) / kappa.
pub fn rabi_frequency(res: &ResonatorParams, g0: f64, beta: f64) -> f64 {
    4.0 * g0 * beta * res.kappa_c.sqrt() / res.kappa()
}

/// Coupling for which a pulse of amplitude beta and duration dt is a pi rotation.
pub fn selected_g0(res: &ResonatorParams, beta: f64, dt_s: f64) -> Result<f64> {
    if !(beta > 0.0) || !(dt_s > 0.0) {
        return Err(Error::param("pulse", "amplitude and duration must be positive"));
    }
    Ok(PI * res.kappa() / (4.0 * dt_s * beta * res.kappa_c.sqrt()))
}

/// (Rabi frequency of the given coupling, selected coupling).
pub fn rabi_and_selection(res: &ResonatorParams, pulse: &PulseContext, g0: f64) -> Result<(f64, f64)> {
    res.validate()?;
    Ok((rabi_frequency(res, g0, pulse.beta), selected_g0(res, pulse.beta, pulse.dt_s)?))
}

// ---------------------------------------------------------------------------
// Spin-lattice relaxation

/// T1(T) = T1(0) tanh(hbar omega0 / 2 kB T).
pub fn direct_phonon_t1(t1_0k_s: f64, omega0: f64, temperature_k: f64) -> Result<f64> {
    if !(temperature_k >= 0.0) {
        return Err(Error::param("temperature", "must be non-negative"));
    }
    if temperature_k == 0.0 {
        return Ok(t1_0k_s);
    }
    Ok(t1_0k_s * (HBAR * omega0 / (2.0 * K_B * temperature_k)).tanh())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhononFit {
    pub t1_0k_s: f64,
    pub t1_0k_err_s: f64,
    pub residual_norm: f64,
}

/// Fits T1(0) to (temperature K, T1 s) samples.
pub fn fit_direct_phonon(samples: &[(f64, f64)], omega0: f64) -> Result<PhononFit> {
    if samples.len() < 2 {
        return Err(Error::Input("need at least 2 temperatures".into()));
    }
    let factor = move |t: f64| if t == 0.0 { 1.0 } else { (HBAR * omega0 / (2.0 * K_B * t)).tanh() };
    let problem = CurveModel {
        xs: samples.iter().map(|s| s.0).collect(),
        ys: samples.iter().map(|s| s.1).collect(),
        n_params: 1,
        f: move |t: f64, p: &[f64]| p[0] * factor(t),
        grad: move |t: f64, _p: &[f64], g: &mut [f64]| g[0] = factor(t),
        feasible: None,
    };
    let p0 = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let r = levenberg_marquardt(&problem, &[p0], &LmOptions::default())?;
    Ok(PhononFit { t1_0k_s: r.params[0], t1_0k_err_s: r.errors[0], residual_norm: r.ssr.sqrt() })
}

/// Direct-phonon rate scaled to another frequency: rate_ref (omega / omega_ref)^5.
pub fn omega5_scaling(rate_ref: f64, omega_ref: f64, omega: f64) -> Result<f64> {
    if !(omega_ref > 0.0 && omega > 0.0) {
        return Err(Error::param("omega", "frequencies must be positive"));
    }
    Ok(rate_ref * (omega / omega_ref).powi(5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnisotropyModel {
    /// Isotropic rate (s^-1).
    pub a: f64,
    /// Modulation rate (s^-1).
    pub b: f64,
    pub phi1_deg: f64,
}

/// T1(phi) = 1 / (A + B sin(4 phi + phi1)).
pub fn t1_anisotropy(model: &AnisotropyModel, phi_deg: f64) -> Result<f64> {
    if !(model.a > model.b.abs()) {
        return Err(Error::Domain("anisotropy model needs A > |B| for a positive rate".into()));
    }
    Ok(1.0 / (model.a + model.b * (4.0 * phi_deg + model.phi1_deg).to_radians().sin()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnisotropyFit {
    pub model: AnisotropyModel,
    pub a_err: f64,
    pub b_err: f64,
    pub phi1_err_deg: f64,
    pub residual_norm: f64,
}

/// Fits (A, B, phi1) to (phi_deg, T1_s) samples.
pub fn fit_t1_anisotropy(samples: &[(f64, f64)]) -> Result<AnisotropyFit> {
    if samples.len() < 4 {
        return Err(Error::Input(format!("need at least 4 angles, got {}", samples.len())));
    }
    if samples.iter().any(|s| !(s.1 > 0.0)) {
        return Err(Error::Input("relaxation times must be positive".into()));
    }
    // linear start in rate space: 1/T1 = A + C sin 4phi + D cos 4phi
    let m = DMatrix::from_fn(samples.len(), 3, |i, j| {
        let u = (4.0 * samples[i].0).to_radians();
        [1.0, u.sin(), u.cos()][j]
    });
    let rates = nalgebra::DVector::from_iterator(samples.len(), samples.iter().map(|s| 1.0 / s.1));
    let lin = m
        .clone()
        .svd(true, true)
        .solve(&rates, 1e-12)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    let b0 = lin[1].hypot(lin[2]).max(1e-6 * lin[0].abs());
    let phi1_0 = lin[2].atan2(lin[1]).to_degrees();

    let model = |phi: f64, p: &[f64]| 1.0 / (p[0] + p[1] * (4.0 * phi + p[2]).to_radians().sin());
    let grad = |phi: f64, p: &[f64], g: &mut [f64]| {
        let u = (4.0 * phi + p[2]).to_radians();
        let d = p[0] + p[1] * u.sin();
        let m2 = -1.0 / (d * d);
        g[0] = m2;
        g[1] = m2 * u.sin();
        g[2] = m2 * p[1] * u.cos() * PI / 180.0;
    };
    let problem = CurveModel {
        xs: samples.iter().map(|s| s.0).collect(),
        ys: samples.iter().map(|s| s.1).collect(),
        n_params: 3,
        f: model,
        grad,
        feasible: Some(|p: &[f64]| p[0] > p[1].abs()),
    };
    let start = [lin[0].max(1.01 * b0), b0, phi1_0];
    let r = levenberg_marquardt(&problem, &start, &LmOptions::default())?;
    let (mut b, mut phi1) = (r.params[1], r.params[2]);
    if b < 0.0 {
        b = -b;
        phi1 += 180.0;
    }
    Ok(AnisotropyFit {
        model: AnisotropyModel { a: r.params[0], b, phi1_deg: phi1.rem_euclid(360.0) },
        a_err: r.errors[0],
        b_err: r.errors[1],
        phi1_err_deg: r.errors[2],
        residual_norm: r.ssr.sqrt(),
    })
}

/// Lorentzian FWHM in field (T) converted to angular frequency via g mu_B / hbar.
pub fn field_width_to_angular(fwhm_t: f64, g_eff: f64) -> f64 {
    g_eff * MU_B * fwhm_t / HBAR
}
