use std::f64::consts::PI;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use ercce::analytic::omega5_scaling;
use ercce::hamiltonian::GTensor;
use ercce::io::write_csv;
use ercce::relaxsim::{self, CouplingDistribution, DistributionSource, WirePreset};

use crate::analytic::field_map;
use crate::error::CliError;
use crate::output::Output;

/// Phonon-limited T1 measured on the 7.881 GHz resonator (s).
const T1_SL_REF_S: f64 = 4.8;
const F_REF_HZ: f64 = 7.881e9;

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct T1simArgs {
    /// Resonator preset: 2um (7.025 GHz) or 5um (7.881 GHz)
    #[arg(long, default_value = "5um")]
    pub wire: WirePreset,
    /// Spin-lattice T1 [s] [default: 4.8 s at 7.881 GHz, scaled as omega^-5 for other presets]
    #[arg(long = "t1-sl-s")]
    pub t1_sl_s: Option<f64>,
    /// Pulse duration [us]
    #[arg(long = "dt-us", default_value_t = 1.0)]
    pub dt_us: f64,
    /// Smallest pulse amplitude beta [(photons/s)^1/2]
    #[arg(long = "beta-min", default_value_t = 1e5)]
    pub beta_min: f64,
    /// Largest pulse amplitude beta [(photons/s)^1/2]
    #[arg(long = "beta-max", default_value_t = 1e9)]
    pub beta_max: f64,
    /// Number of log-spaced amplitudes
    #[arg(long = "n-beta", default_value_t = 41)]
    pub n_beta: usize,
    /// Input-line attenuation between the nominal and the on-chip amplitude [dB]
    #[arg(long = "attenuation-dB", default_value_t = 0.0)]
    pub attenuation_db: f64,
    /// Cross-section field map CSV replacing the analytic wire
    #[arg(long = "b1-map")]
    pub b1_map: Option<PathBuf>,
    /// Emit the T1-versus-beta sweep (always on; accepted for compatibility)
    #[arg(long = "beta-sweep")]
    pub beta_sweep: bool,
}

pub fn t1sim(a: T1simArgs, out: &Output) -> Result<(), CliError> {
    if a.n_beta == 0 || !(a.beta_min > 0.0) || !(a.beta_max >= a.beta_min) || !(a.dt_us > 0.0) {
        return Err(CliError::user("need --n-beta >= 1, 0 < --beta-min <= --beta-max and a positive --dt-us"));
    }
    let probe = a.wire.setup(1.0, a.dt_us * 1e-6);
    let omega0 = probe.grid.resonator.omega0;
    let gamma_sl = match a.t1_sl_s {
        Some(t) if t > 0.0 => 1.0 / t,
        Some(_) => return Err(CliError::user("--t1-sl-s must be positive")),
        None => omega5_scaling(1.0 / T1_SL_REF_S, 2.0 * PI * F_REF_HZ, omega0)?,
    };
    let setup = a.wire.setup(gamma_sl, a.dt_us * 1e-6);
    let g = GTensor::default();
    let map = field_map(a.b1_map.as_ref(), &setup.geometry, omega0, setup.z0_ohm)?;
    let mut dist = CouplingDistribution::from_map(&map, &g, setup.delta_phi_deg, &setup.g0_values)?;
    if a.b1_map.is_none() {
        dist.source = DistributionSource::AnalyticWire;
    }
    let betas = if a.n_beta == 1 { vec![a.beta_min] } else { relaxsim::log_betas(a.beta_min, a.beta_max, a.n_beta) };
    let points = relaxsim::t1_vs_beta(&setup.grid, &dist, &betas, a.attenuation_db)?;

    let samples = relaxsim::coupling_samples(&map, &g, setup.delta_phi_deg)?;
    let g_b = relaxsim::boundary_coupling(&map, &g, setup.delta_phi_deg);
    let tail = relaxsim::tail_exponent(&samples, g_b, 10.0 * g_b, 12).ok();

    let rows = points.iter().map(|p| [p.beta, p.beta_at_sample, p.t1_s, p.t1_err_s, f64::from(u8::from(p.flag.is_some()))]);
    let hist = dist.g0_values.iter().zip(&dist.weights).map(|(g0, w)| [g0 / (2.0 * PI), *w]);
    let flagged: Vec<_> = points.iter().filter_map(|p| p.flag.as_ref().map(|f| json!({ "beta": p.beta, "reason": f }))).collect();
    let result = json!({
        "gamma_sl_per_s": gamma_sl,
        "kappa_hz": setup.grid.kappa() / (2.0 * PI),
        "t1_at_max_beta_s": points.last().map(|p| p.t1_s),
        "dropped_coupling_fraction": dist.dropped_fraction,
        "tail_exponent": tail,
        "tail_window_hz": [g_b / (2.0 * PI), 10.0 * g_b / (2.0 * PI)],
        "flagged": flagged,
    });
    out.emit(
        &a,
        result,
        &[
            ("t1_vs_beta.csv", write_csv(&["beta", "beta_at_sample", "T1_s", "T1_err_s", "flagged"], rows)),
            ("coupling_hist.csv", write_csv(&["g0_Hz", "weight"], hist)),
        ],
    )
}
