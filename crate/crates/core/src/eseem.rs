//! Two-pulse electron spin-echo envelope modulation from individual 183W
//! neighbours, and the resonator / pulse-bandwidth low-pass that limits
//! which modulation frequencies reach the detector.

use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::crystal::LatticeSpec;
use crate::hamiltonian::{hyperfine_vector, FieldConfig, GTensor, NuclearSpecies};
use crate::{Error, Result};

/// Default radius of the W shell set contributing modulation (nm).
pub const DEFAULT_SHELL_RADIUS_NM: f64 = 1.0;
/// Largest accepted delay step (s).
pub const MAX_TAU_STEP_S: f64 = 1e-6;
/// Largest accepted delay (s).
pub const MAX_TAU_S: f64 = 300e-6;

/// A nucleus contributing modulation, with the probability that its site is occupied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EseemNucleus {
    pub position_nm: [f64; 3],
    pub species: NuclearSpecies,
    /// 1 for a definite spin, the isotopic abundance for a configuration average.
    pub occupancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EseemParams {
    pub nuclei: Vec<EseemNucleus>,
    pub field: FieldConfig,
    pub g: GTensor,
    /// Low-pass cutoff (Hz).
    pub filter_cutoff_hz: f64,
}

impl EseemParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.filter_cutoff_hz > 0.0) {
            return Err(Error::param("filter_cutoff", "must be positive"));
        }
        self.g.validate()?;
        for n in &self.nuclei {
            if !(0.0..=1.0).contains(&n.occupancy) {
                return Err(Error::param("occupancy", "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Every W site within `radius_nm` of the Er site, weighted by `abundance`.
pub fn shell_nuclei(lattice: &LatticeSpec, radius_nm: f64, abundance: f64, species: NuclearSpecies) -> Vec<EseemNucleus> {
    lattice
        .w_sites_within(radius_nm)
        .into_iter()
        .map(|position_nm| EseemNucleus { position_nm, species, occupancy: abundance })
        .collect()
}

/// Nuclear transition frequencies in the two electron manifolds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFrequencies {
    /// Secular hyperfine A (rad/s).
    pub a: f64,
    /// Pseudo-secular hyperfine B (rad/s).
    pub b: f64,
    /// Nuclear Larmor frequency (rad/s).
    pub omega_i: f64,
    pub omega_alpha: f64,
    pub omega_beta: f64,
    /// Modulation depth parameter k.
    pub depth: f64,
}

/// Frequencies for `H = wI Iz + Sz (A Iz + B Ix)`.
pub fn branch_frequencies(a: f64, b: f64, omega_i: f64) -> BranchFrequencies {
    let omega_alpha = ((omega_i + 0.5 * a).powi(2) + (0.5 * b).powi(2)).sqrt();
    let omega_beta = ((omega_i - 0.5 * a).powi(2) + (0.5 * b).powi(2)).sqrt();
    let depth = if omega_alpha > 0.0 && omega_beta > 0.0 {
        (b * omega_i / (omega_alpha * omega_beta)).powi(2)
    } else {
        0.0
    };
    BranchFrequencies { a, b, omega_i, omega_alpha, omega_beta, depth: depth.min(1.0) }
}

/// Branch frequencies of one nucleus from the full dipolar hyperfine row.
pub fn nucleus_frequencies(
    position_nm: [f64; 3],
    g: &GTensor,
    field: &FieldConfig,
    species: &NuclearSpecies,
) -> Result<BranchFrequencies> {
    let row = hyperfine_vector(position_nm, g, field, species)?;
    let z = field.direction();
    let a = row.dot(&z);
    let b = (row - z * a).norm();
    Ok(branch_frequencies(a, b, species.larmor(field)))
}

/// Two-pulse modulation factor at interpulse delay `tau`.
pub fn modulation_factor(f: &BranchFrequencies, tau: f64) -> f64 {
    let sa = (0.5 * f.omega_alpha * tau).sin();
    let sb = (0.5 * f.omega_beta * tau).sin();
    1.0 - 2.0 * f.depth * sa * sa * sb * sb
}

fn validate_tau_grid(tau_grid: &[f64]) -> Result<()> {
    if tau_grid.is_empty() {
        return Err(Error::param("tau_grid", "is empty"));
    }
    if tau_grid.iter().any(|&t| !(0.0..=MAX_TAU_S * (1.0 + 1e-12)).contains(&t)) {
        return Err(Error::param("tau_grid", "delays must lie in [0, 300 us]"));
    }
    if tau_grid.windows(2).any(|w| !(w[1] > w[0]) || w[1] - w[0] > MAX_TAU_STEP_S * (1.0 + 1e-9)) {
        return Err(Error::param("tau_grid", "must increase in steps of at most 1 us"));
    }
    Ok(())
}

/// Echo envelope `prod_i (1 - p_i + p_i V_i(tau))` on the delay grid.
pub fn eseem_trace(params: &EseemParams, tau_grid: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    validate_tau_grid(tau_grid)?;
    let freqs = params
        .nuclei
        .iter()
        .map(|n| Ok((nucleus_frequencies(n.position_nm, &params.g, &params.field, &n.species)?, n.occupancy)))
        .collect::<Result<Vec<_>>>()?;
    Ok(tau_grid
        .par_iter()
        .map(|&tau| {
            freqs
                .iter()
                .map(|(f, p)| 1.0 - p + p * modulation_factor(f, tau))
                .product()
        })
        .collect())
}

/// Pulse bandwidth of a square pulse (Hz): 1 / dt.
pub fn pulse_bandwidth_hz(pulse_duration_s: f64) -> f64 {
    1.0 / pulse_duration_s
}

/// Detection cutoff min(kappa / 2, pulse bandwidth / 2) in Hz.
pub fn filter_cutoff_hz(kappa_hz: f64, pulse_bandwidth_hz: f64) -> Result<f64> {
    if !(kappa_hz > 0.0) || !(pulse_bandwidth_hz > 0.0) {
        return Err(Error::param("bandwidth", "linewidth and pulse bandwidth must be positive"));
    }
    Ok(0.5 * kappa_hz.min(pulse_bandwidth_hz))
}

fn uniform_step(tau_grid: &[f64]) -> Result<f64> {
    if tau_grid.len() < 2 {
        return Err(Error::param("tau_grid", "needs at least two samples"));
    }
    let dt = (tau_grid[tau_grid.len() - 1] - tau_grid[0]) / (tau_grid.len() - 1) as f64;
    if tau_grid.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::param("tau_grid", "must be uniformly spaced"));
    }
    Ok(dt)
}

/// Brick-wall low-pass: every DFT bin above `cutoff_hz` is removed.
pub fn lowpass(trace: &[f64], dt: f64, cutoff_hz: f64) -> Vec<f64> {
    let n = trace.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = trace.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * dt);
    for (k, c) in buf.iter_mut().enumerate() {
        if k.min(n - k) as f64 * df > cutoff_hz {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Low-pass at the cutoff set by the resonator linewidth and pulse bandwidth.
pub fn apply_bandwidth_filter(trace: &[f64], tau_grid: &[f64], kappa_hz: f64, pulse_bandwidth_hz: f64) -> Result<Vec<f64>> {
    if trace.len() != tau_grid.len() {
        return Err(Error::Input("trace and delay grid differ in length".into()));
    }
    let cutoff = filter_cutoff_hz(kappa_hz, pulse_bandwidth_hz)?;
    Ok(lowpass(trace, uniform_step(tau_grid)?, cutoff))
}

/// One-sided amplitude spectrum of the mean-removed trace: (frequency Hz, amplitude).
pub fn spectrum(trace: &[f64], dt: f64) -> Vec<(f64, f64)> {
    let n = trace.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = trace.iter().map(|&v| Complex64::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * dt);
    (0..=n / 2).map(|k| (k as f64 * df, buf[k].norm() / n as f64)).collect()
}

/// Default delay grid: 1 us steps from 0 to 300 us.
pub fn default_tau_grid() -> Vec<f64> {
    (0..=300).map(|k| k as f64 * 1e-6).collect()
}
