use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use ercce::cce::{self, CceSettings};
use ercce::crystal::{build_bath, BathMode, BathSpec, LatticeSpec};
use ercce::eseem::{self, EseemParams};
use ercce::hamiltonian::{FieldConfig, GTensor, NuclearSpecies};
use ercce::io::write_csv;

use crate::error::CliError;
use crate::output::Output;

/// Electron g-tensor and nuclear species shared by the bath simulations.
#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct SpinArgs {
    /// In-plane electron g-factor [dimensionless]
    #[arg(long = "g-perp", default_value_t = 8.38)]
    pub g_perp: f64,
    /// Electron g-factor along c [dimensionless]
    #[arg(long = "g-par", default_value_t = 1.247)]
    pub g_par: f64,
    /// 183W gyromagnetic ratio gamma/2pi [MHz/T]
    #[arg(long = "gamma-n-MHz-per-T", default_value_t = 1.8)]
    pub gamma_n_mhz_per_t: f64,
}

impl SpinArgs {
    fn g(&self) -> GTensor {
        GTensor { g_perp: self.g_perp, g_par: self.g_par }
    }

    fn species(&self) -> NuclearSpecies {
        NuclearSpecies { gamma_mhz_per_t: self.gamma_n_mhz_per_t }
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct CceArgs {
    /// Static field [mT]
    #[arg(long = "b0-mT", default_value_t = 67.0)]
    pub b0_mt: f64,
    /// Field angle from the a axis in the ab plane [deg]
    #[arg(long = "phi-deg", default_value_t = 46.5)]
    pub phi_deg: f64,
    /// CCE truncation order (largest cluster, 1 to 3)
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Bath geometry: lattice or amorphous
    #[arg(long, default_value = "lattice")]
    pub mode: BathMode,
    /// 183W fraction of W sites [fraction]
    #[arg(long, default_value_t = 0.145)]
    pub abundance: f64,
    /// Bath radius [nm]
    #[arg(long = "radius-nm", default_value_t = 11.0)]
    pub radius_nm: f64,
    /// Largest separation of a coupled pair [nm]
    #[arg(long = "pair-cutoff-nm", default_value_t = 1.2)]
    pub pair_cutoff_nm: f64,
    /// Number of random bath configurations averaged
    #[arg(long, default_value_t = 1)]
    pub configurations: usize,
    /// Seed of the first configuration (configuration k uses seed + k)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Longest echo time 2tau [ms]
    #[arg(long = "max-two-tau-ms", default_value_t = 50.0)]
    pub max_two_tau_ms: f64,
    /// Number of echo times, uniform from 0
    #[arg(long = "n-tau", default_value_t = 60)]
    pub n_tau: usize,
    /// Also write one coherence column per configuration
    #[arg(long = "per-config")]
    pub per_config: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub spin: SpinArgs,
}

pub fn cce(a: CceArgs, out: &Output) -> Result<(), CliError> {
    let field = FieldConfig::new(a.b0_mt * 1e-3, a.phi_deg)?;
    let bath = BathSpec { abundance: a.abundance, radius_nm: a.radius_nm, mode: a.mode, seed: a.seed, ..BathSpec::default() };
    let settings = CceSettings {
        order: a.order,
        pair_cutoff_nm: a.pair_cutoff_nm,
        tau_grid_s: cce::uniform_two_tau_grid(a.max_two_tau_ms * 1e-3, a.n_tau),
        n_configurations: a.configurations,
        seed: a.seed,
    };
    let curve = cce::simulate(&LatticeSpec::default(), &bath, &a.spin.g(), &field, &a.spin.species(), &settings)?;
    let fit = match curve.fit() {
        Ok(f) => json!({ "t2_s": f.components[0].t2_s, "x": f.components[0].x, "t2_err_s": f.components[0].t2_err, "x_err": f.components[0].x_err }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let result = json!({ "fit": fit, "metadata": curve.metadata });
    out.emit(&a, result, &[("coherence.csv", curve.to_csv(a.per_config))])
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct BathgenArgs {
    /// Bath geometry: lattice or amorphous
    #[arg(long, default_value = "lattice")]
    pub mode: BathMode,
    /// 183W fraction of W sites [fraction]
    #[arg(long, default_value_t = 0.145)]
    pub abundance: f64,
    /// Bath radius [nm]
    #[arg(long = "radius-nm", default_value_t = 11.0)]
    pub radius_nm: f64,
    /// Configuration seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn bathgen(a: BathgenArgs, out: &Output) -> Result<(), CliError> {
    let spec = BathSpec { abundance: a.abundance, radius_nm: a.radius_nm, mode: a.mode, seed: a.seed, ..BathSpec::default() };
    let config = build_bath(&LatticeSpec::default(), &spec)?;
    let rows: Vec<[f64; 4]> = config
        .spins
        .iter()
        .map(|s| {
            let p = s.position;
            [p[0], p[1], p[2], (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()]
        })
        .collect();
    let result = json!({
        "n_spins": config.len(),
        "hard_core_nm": config.hard_core_nm,
        "generator": config.generator,
        "seed": config.seed,
    });
    out.emit(&a, result, &[("bath.csv", write_csv(&["x_nm", "y_nm", "z_nm", "r_nm"], rows))])
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct EseemArgs {
    /// Static field [mT]
    #[arg(long = "b0-mT", default_value_t = 67.0)]
    pub b0_mt: f64,
    /// Field angle from the a axis in the ab plane [deg]
    #[arg(long = "phi-deg", default_value_t = 46.5)]
    pub phi_deg: f64,
    /// Radius of the W shells contributing modulation [nm]
    #[arg(long = "shell-radius-nm", default_value_t = 1.0)]
    pub shell_radius_nm: f64,
    /// 183W occupancy of each shell site [fraction]
    #[arg(long, default_value_t = 0.145)]
    pub abundance: f64,
    /// Resonator linewidth kappa/2pi [kHz]
    #[arg(long = "kappa-kHz", default_value_t = 270.0)]
    pub kappa_khz: f64,
    /// Pulse bandwidth [kHz]
    #[arg(long = "pulse-bw-kHz", default_value_t = 250.0)]
    pub pulse_bw_khz: f64,
    /// Longest delay tau [us] (at most 300)
    #[arg(long = "tau-max-us", default_value_t = 300.0)]
    pub tau_max_us: f64,
    /// Delay step [us] (at most 1)
    #[arg(long = "tau-step-us", default_value_t = 1.0)]
    pub tau_step_us: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub spin: SpinArgs,
}

pub fn eseem(a: EseemArgs, out: &Output) -> Result<(), CliError> {
    if !(a.tau_step_us > 0.0) || !(a.tau_max_us > 0.0) {
        return Err(CliError::user("--tau-step-us and --tau-max-us must be positive"));
    }
    let field = FieldConfig::new(a.b0_mt * 1e-3, a.phi_deg)?;
    let (kappa_hz, bw_hz) = (a.kappa_khz * 1e3, a.pulse_bw_khz * 1e3);
    let cutoff = eseem::filter_cutoff_hz(kappa_hz, bw_hz)?;
    let params = EseemParams {
        nuclei: eseem::shell_nuclei(&LatticeSpec::default(), a.shell_radius_nm, a.abundance, a.spin.species()),
        field,
        g: a.spin.g(),
        filter_cutoff_hz: cutoff,
    };
    let n = (a.tau_max_us / a.tau_step_us + 1e-9).floor() as usize + 1;
    let dt = a.tau_step_us * 1e-6;
    let taus: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let raw = eseem::eseem_trace(&params, &taus)?;
    let filtered = eseem::apply_bandwidth_filter(&raw, &taus, kappa_hz, bw_hz)?;
    let (s_raw, s_filt) = (eseem::spectrum(&raw, dt), eseem::spectrum(&filtered, dt));
    let peak = s_raw.iter().skip(1).fold((0.0, 0.0), |best, &(f, v)| if v > best.1 { (f, v) } else { best });

    let trace_rows = (0..n).map(|k| [taus[k] * 1e6, raw[k], filtered[k]]);
    let fft_rows = s_raw.iter().zip(&s_filt).map(|(r, f)| [r.0 * 1e-3, r.1, f.1]);
    let result = json!({
        "n_nuclei": params.nuclei.len(),
        "filter_cutoff_hz": cutoff,
        "bandwidth_convention": "pulse bandwidth taken as 1/dt; cutoff min(kappa, bandwidth)/2",
        "dominant_frequency_hz": peak.0,
        "min_v": raw.iter().cloned().fold(f64::INFINITY, f64::min),
    });
    out.emit(
        &a,
        result,
        &[
            ("eseem_trace.csv", write_csv(&["tau_us", "V", "V_filtered"], trace_rows)),
            ("eseem_fft.csv", write_csv(&["freq_kHz", "amplitude", "amplitude_filtered"], fft_rows)),
        ],
    )
}
