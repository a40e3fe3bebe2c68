//! Inversion-recovery T1 of a spin ensemble detected through a resonator,
//! summed over independent detuning and coupling distributions with Purcell
//! and spin-lattice relaxation.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{rabi_frequency, single_spin_coupling, wire_b1_map, B1Map, ResonatorParams, WireGeometry};
use crate::fitkit::fit_exponential;
use crate::hamiltonian::GTensor;
use crate::{Error, Result};

/// Purcell rate kappa g0^2 / (kappa^2/4 + delta^2).
pub fn purcell_rate(g0: f64, delta: f64, kappa: f64) -> f64 {
    kappa * g0 * g0 / (0.25 * kappa * kappa + delta * delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionSource {
    FieldMap,
    AnalyticWire,
    Explicit,
}

/// Spin density over coupling values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingDistribution {
    /// Bin centres g0 (rad/s).
    pub g0_values: Vec<f64>,
    /// Spin number per bin (m^2 of cross-section for map-derived weights).
    pub weights: Vec<f64>,
    pub source: DistributionSource,
    /// Fraction of the mapped area whose coupling fell outside the bins.
    pub dropped_fraction: f64,
}

/// Every node's (g0 rad/s, area m^2).
pub fn coupling_samples(map: &B1Map, g: &GTensor, delta_phi_deg: f64) -> Result<Vec<(f64, f64)>> {
    map.validate()?;
    let w = map.area_weights();
    Ok((0..w.len())
        .map(|k| (single_spin_coupling(map.by[k], map.bz[k], g, delta_phi_deg), w[k]))
        .collect())
}

/// Largest coupling found on the map boundary: contours above it close inside the map.
pub fn boundary_coupling(map: &B1Map, g: &GTensor, delta_phi_deg: f64) -> f64 {
    let (ny, nz) = (map.y_m.len(), map.z_m.len());
    let mut best: f64 = 0.0;
    for iy in 0..ny {
        for iz in 0..nz {
            // the z = top row borders the wire plane, not the crystal edge
            let edge = iy == 0 || iy == ny - 1 || iz == 0;
            if edge {
                let k = iy * nz + iz;
                best = best.max(single_spin_coupling(map.by[k], map.bz[k], g, delta_phi_deg));
            }
        }
    }
    best
}

/// Bin centres `n` values equally spaced between `lo_hz` and `hi_hz`, as rad/s.
pub fn linear_g0_values(lo_hz: f64, hi_hz: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![2.0 * PI * lo_hz];
    }
    (0..n)
        .map(|k| 2.0 * PI * (lo_hz + (hi_hz - lo_hz) * k as f64 / (n - 1) as f64))
        .collect()
}

impl CouplingDistribution {
    pub fn validate(&self) -> Result<()> {
        if self.g0_values.is_empty() || self.g0_values.len() != self.weights.len() {
            return Err(Error::Input("coupling values and weights must be non-empty and equal in length".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) || self.g0_values.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::Input("couplings and weights must be non-negative".into()));
        }
        Ok(())
    }

    /// One coupling carrying all the weight.
    pub fn single(g0: f64) -> Self {
        Self { g0_values: vec![g0], weights: vec![1.0], source: DistributionSource::Explicit, dropped_fraction: 0.0 }
    }

    /// Histograms map nodes onto the nearest of the increasing centres `g0_values`.
    pub fn from_map(map: &B1Map, g: &GTensor, delta_phi_deg: f64, g0_values: &[f64]) -> Result<Self> {
        if g0_values.is_empty() || g0_values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("g0_values", "must be non-empty and increasing"));
        }
        let samples = coupling_samples(map, g, delta_phi_deg)?;
        let n = g0_values.len();
        let lo = if n > 1 { g0_values[0] - 0.5 * (g0_values[1] - g0_values[0]) } else { 0.0 };
        let hi = if n > 1 { g0_values[n - 1] + 0.5 * (g0_values[n - 1] - g0_values[n - 2]) } else { f64::INFINITY };
        let mut weights = vec![0.0; n];
        let (mut total, mut dropped) = (0.0, 0.0);
        for (g0, a) in samples {
            total += a;
            if g0 < lo || g0 >= hi {
                dropped += a;
                continue;
            }
            let k = g0_values.partition_point(|&c| c < g0);
            let k = if k == 0 {
                0
            } else if k == n || g0 - g0_values[k - 1] <= g0_values[k] - g0 {
                k - 1
            } else {
                k
            };
            weights[k] += a;
        }
        Ok(Self {
            g0_values: g0_values.to_vec(),
            weights,
            source: DistributionSource::FieldMap,
            dropped_fraction: if total > 0.0 { dropped / total } else { 0.0 },
        })
    }

    /// Distribution below an analytic strip wire.
    pub fn from_wire(
        geometry: &WireGeometry,
        omega0: f64,
        z0_ohm: f64,
        g: &GTensor,
        delta_phi_deg: f64,
        g0_values: &[f64],
    ) -> Result<Self> {
        let map = wire_b1_map(geometry, omega0, z0_ohm)?;
        Ok(Self { source: DistributionSource::AnalyticWire, ..Self::from_map(&map, g, delta_phi_deg, g0_values)? })
    }
}

/// Log-log slope of the coupling density between `g_lo` and `g_hi` (log-spaced bins).
pub fn tail_exponent(samples: &[(f64, f64)], g_lo: f64, g_hi: f64, n_bins: usize) -> Result<f64> {
    if !(g_hi > g_lo && g_lo > 0.0) || n_bins < 3 {
        return Err(Error::param("tail", "need 0 < g_lo < g_hi and at least 3 bins"));
    }
    let (llo, lhi) = (g_lo.ln(), g_hi.ln());
    let step = (lhi - llo) / n_bins as f64;
    let mut mass = vec![0.0; n_bins];
    for &(g0, a) in samples {
        if g0 >= g_lo && g0 < g_hi {
            let k = (((g0.ln() - llo) / step) as usize).min(n_bins - 1);
            mass[k] += a;
        }
    }
    let pts: Vec<(f64, f64)> = (0..n_bins)
        .filter(|&k| mass[k] > 0.0)
        .map(|k| {
            let (a, b) = ((llo + step * k as f64).exp(), (llo + step * (k + 1) as f64).exp());
            (((a * b).sqrt()).ln(), (mass[k] / (b - a)).ln())
        })
        .collect();
    if pts.len() < 3 {
        return Err(Error::Input("too few populated bins for a tail fit".into()));
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Detuning bins and relaxation constants of one resonator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxGrid {
    /// Spin-resonator detunings (rad/s), equally weighted.
    pub detunings: Vec<f64>,
    pub resonator: ResonatorParams,
    /// Spin-lattice rate (s^-1).
    pub gamma_sl: f64,
    /// Pulse duration (s).
    pub dt_s: f64,
}

impl RelaxGrid {
    pub fn kappa(&self) -> f64 {
        self.resonator.kappa()
    }

    pub fn validate(&self) -> Result<()> {
        self.resonator.validate()?;
        if self.detunings.is_empty() {
            return Err(Error::param("detunings", "need at least one bin"));
        }
        if !(self.gamma_sl >= 0.0) || !(self.dt_s > 0.0) {
            return Err(Error::param("relaxation", "rate must be non-negative and pulse duration positive"));
        }
        Ok(())
    }

    /// `n` detunings uniformly spaced on [-span kappa, +span kappa].
    pub fn uniform_detunings(kappa: f64, span: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![0.0];
        }
        (0..n).map(|k| -span * kappa + 2.0 * span * kappa * k as f64 / (n - 1) as f64).collect()
    }
}

/// Reference resonator set-ups for the T1 power dependence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WirePreset {
    /// 2 um wire, 7.025 GHz.
    Wire2um,
    /// 5 um wire, 7.881 GHz.
    Wire5um,
}

impl std::str::FromStr for WirePreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2um" | "wire2um" => Ok(Self::Wire2um),
            "5um" | "wire5um" => Ok(Self::Wire5um),
            other => Err(Error::Input(format!("unknown wire preset `{other}` (expected 2um or 5um)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxSetup {
    pub grid: RelaxGrid,
    pub geometry: WireGeometry,
    /// Coupling bin centres (rad/s).
    pub g0_values: Vec<f64>,
    /// Angle between B0 and the wire (deg).
    pub delta_phi_deg: f64,
    pub z0_ohm: f64,
}

impl WirePreset {
    /// Grid, geometry and coupling bins; `gamma_sl` and `dt_s` are caller choices.
    pub fn setup(self, gamma_sl: f64, dt_s: f64) -> RelaxSetup {
        let (f0, q_c, kappa_hz, width, length, span, n_det, g_lo, g_hi) = match self {
            Self::Wire2um => (7.025e9, 250e3, 185e3, 2e-6, 630e-6, 4.0, 420, 1.0, 1000.0),
            Self::Wire5um => (7.881e9, 29e3, 350e3, 5e-6, 630e-6, 3.5, 480, 0.5, 500.0),
        };
        let omega0 = 2.0 * PI * f0;
        let kappa = 2.0 * PI * kappa_hz;
        let kappa_c = omega0 / q_c;
        let resonator = ResonatorParams { omega0, kappa_c, kappa_int: (kappa - kappa_c).max(0.0) };
        RelaxSetup {
            grid: RelaxGrid { detunings: RelaxGrid::uniform_detunings(kappa, span, n_det), resonator, gamma_sl, dt_s },
            geometry: WireGeometry::strip(width, length),
            g0_values: linear_g0_values(g_lo, g_hi, 120),
            // field at 30 deg, wire at 51 deg
            delta_phi_deg: 21.0,
            z0_ohm: crate::analytic::DEFAULT_Z0_OHM,
        }
    }
}

/// Rotation angle of a pulse of amplitude `beta`, reduced by the resonator filter at `delta`.
pub fn rotation_angle(res: &ResonatorParams, g0: f64, beta: f64, dt_s: f64, delta: f64) -> f64 {
    let k2 = 0.5 * res.kappa();
    rabi_frequency(res, g0, beta) * dt_s * k2 / (k2 * k2 + delta * delta).sqrt()
}

/// Echo amplitude of one spin: g0 sin(theta1) sin^2(theta2 / 2).
pub fn echo_weight(g0: f64, theta1: f64, theta2: f64) -> f64 {
    g0 * theta1.sin() * (0.5 * theta2).sin().powi(2)
}

/// One (detuning, coupling) class reduced to its recovery parameters.
#[derive(Debug, Clone, Copy)]
struct SpinClass {
    amplitude: f64,
    inversion: f64,
    rate: f64,
}

fn spin_classes(grid: &RelaxGrid, dist: &CouplingDistribution, beta: f64) -> Vec<SpinClass> {
    let kappa = grid.kappa();
    // per-coupling blocks in parallel, concatenated in index order
    dist.g0_values
        .par_iter()
        .zip(dist.weights.par_iter())
        .map(|(&g0, &w)| {
            grid.detunings
                .iter()
                .map(|&delta| {
                    let theta = rotation_angle(&grid.resonator, g0, beta, grid.dt_s, delta);
                    SpinClass {
                        amplitude: w * echo_weight(g0, 0.5 * theta, theta),
                        inversion: 1.0 - theta.cos(),
                        rate: purcell_rate(g0, delta, kappa) + grid.gamma_sl,
                    }
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect()
}

fn signal_at(classes: &[SpinClass], t: f64) -> f64 {
    classes.iter().map(|c| c.amplitude * (1.0 - c.inversion * (-c.rate * t).exp())).sum()
}

/// Echo after an inversion pulse, a delay `t_s`, and the beta/2 - beta Hahn echo.
pub fn inversion_recovery_signal(grid: &RelaxGrid, dist: &CouplingDistribution, beta: f64, t_s: f64) -> Result<f64> {
    grid.validate()?;
    dist.validate()?;
    if !(t_s >= 0.0) {
        return Err(Error::param("T", "must be non-negative"));
    }
    Ok(signal_at(&spin_classes(grid, dist, beta), t_s))
}

/// Recovery curve on a delay grid.
pub fn recovery_curve(grid: &RelaxGrid, dist: &CouplingDistribution, beta: f64, times_s: &[f64]) -> Result<Vec<f64>> {
    grid.validate()?;
    dist.validate()?;
    let classes = spin_classes(grid, dist, beta);
    Ok(times_s.iter().map(|&t| signal_at(&classes, t)).collect())
}

/// Delay at which the inversion deficit has recovered to 1/e of its initial value.
fn recovery_time(classes: &[SpinClass]) -> f64 {
    let deficit = |t: f64| classes.iter().map(|c| c.amplitude * c.inversion * (-c.rate * t).exp()).sum::<f64>();
    let d0 = deficit(0.0);
    let (rmin, rmax) = classes.iter().fold((f64::INFINITY, 0.0f64), |(a, b), c| (a.min(c.rate), b.max(c.rate)));
    if d0 == 0.0 || !(rmin > 0.0) {
        return 1.0;
    }
    let target = d0 / std::f64::consts::E;
    let (mut lo, mut hi) = ((0.01 / rmax).ln(), (10.0 / rmin).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (deficit(mid.exp()) - target) * d0.signum() > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Delays spanning five 1/e recovery times.
fn delay_grid(classes: &[SpinClass], n: usize) -> Vec<f64> {
    let t_e = recovery_time(classes);
    (0..n).map(|k| 5.0 * t_e * k as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Point {
    /// Nominal pulse amplitude (photons/s)^1/2.
    pub beta: f64,
    /// Amplitude at the resonator after the line attenuation.
    pub beta_at_sample: f64,
    /// NaN when the fit failed.
    pub t1_s: f64,
    pub t1_err_s: f64,
    pub flag: Option<String>,
}

/// Fitted T1 for each beta, with input-line attenuation `attenuation_db`.
pub fn t1_vs_beta(grid: &RelaxGrid, dist: &CouplingDistribution, betas: &[f64], attenuation_db: f64) -> Result<Vec<T1Point>> {
    grid.validate()?;
    dist.validate()?;
    if betas.windows(2).any(|w| !(w[1] > w[0])) || betas.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::param("beta", "amplitudes must be positive and increasing"));
    }
    let scale = 10f64.powf(-attenuation_db / 20.0);
    Ok(betas
        .iter()
        .map(|&beta| {
            let b = beta * scale;
            let classes = spin_classes(grid, dist, b);
            let times = delay_grid(&classes, 60);
            let data: Vec<(f64, f64)> = times.iter().map(|&t| (t, signal_at(&classes, t))).collect();
            match fit_exponential(&data) {
                Ok(f) => T1Point { beta, beta_at_sample: b, t1_s: f.t1_s, t1_err_s: f.t1_err, flag: None },
                Err(e) => T1Point { beta, beta_at_sample: b, t1_s: f64::NAN, t1_err_s: f64::NAN, flag: Some(e.to_string()) },
            }
        })
        .collect())
}

/// `n` amplitudes log-spaced on [lo, hi].
pub fn log_betas(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}
