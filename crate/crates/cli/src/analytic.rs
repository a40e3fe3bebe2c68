use std::f64::consts::PI;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use ercce::analytic::{
    self as an, B1Map, ResonatorParams, SpinLine, StarkModel, WireGeometry, ZERO_SPIN_ISOTOPE_FRACTION,
};
use ercce::hamiltonian::{FieldConfig, GTensor};
use ercce::io::{read_xy, write_csv};

use crate::error::CliError;
use crate::output::{read_input, Output};

/// Total Er3+ density whose zero-nuclear-spin part is 0.7e13 cm^-3.
const DEFAULT_ER_TOTAL_CM3: f64 = 0.7e13 / ZERO_SPIN_ISOTOPE_FRACTION;

fn two_col(path: &PathBuf) -> Result<Vec<(f64, f64)>, CliError> {
    Ok(read_xy(&read_input(path)?, None, None)?)
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct StarkArgs {
    /// Field angles to evaluate [deg]
    #[arg(long = "phi-deg", alias = "phi", value_delimiter = ',', default_value = "31,47")]
    pub phi_deg: Vec<f64>,
    /// Static field [mT]
    #[arg(long = "b0-mT", default_value_t = 67.2)]
    pub b0_mt: f64,
    /// Linear Stark coefficient [(V/cm)^-1]
    #[arg(long = "alpha-per-V-cm", default_value_t = 11e-6)]
    pub alpha_per_v_cm: f64,
    /// Angle of vanishing Stark sensitivity [deg]
    #[arg(long = "phi0-deg", default_value_t = 31.0)]
    pub phi0_deg: f64,
    /// Residual linewidth Gamma_min/2pi [MHz]
    #[arg(long = "gamma-min-MHz", default_value_t = 1.0)]
    pub gamma_min_mhz: f64,
    /// Electric-field spread Delta E_c [kV/cm]
    #[arg(long = "delta-ec-kV-cm", default_value_t = 32.0)]
    pub delta_ec_kv_cm: f64,
    /// Fit (phi_deg, Gamma_MHz) samples from this CSV instead of evaluating the model
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// In-plane electron g-factor [dimensionless]
    #[arg(long = "g-perp", default_value_t = 8.38)]
    pub g_perp: f64,
}

pub fn stark(a: StarkArgs, out: &Output) -> Result<(), CliError> {
    let g = GTensor { g_perp: a.g_perp, ..GTensor::default() };
    let model = match &a.fit {
        Some(path) => {
            let samples: Vec<(f64, f64)> = two_col(path)?.into_iter().map(|(p, w)| (p, w * 1e6)).collect();
            let f = an::fit_stark(&samples, a.b0_mt * 1e-3, &g, a.alpha_per_v_cm)?;
            let result = json!({
                "gamma_min_mhz": f.model.gamma_min_hz * 1e-6,
                "gamma_min_err_mhz": f.gamma_min_err_hz * 1e-6,
                "delta_ec_kv_cm": f.model.delta_ec_v_cm * 1e-3,
                "delta_ec_err_kv_cm": f.delta_ec_err_v_cm * 1e-3,
                "phi0_deg": f.model.phi0_deg,
                "phi0_err_deg": f.phi0_err_deg,
                "residual_norm_hz": f.residual_norm,
            });
            return out.emit(&a, result, &[]);
        }
        None => StarkModel {
            alpha_per_v_cm: a.alpha_per_v_cm,
            phi0_deg: a.phi0_deg,
            gamma_min_hz: a.gamma_min_mhz * 1e6,
            delta_ec_v_cm: a.delta_ec_kv_cm * 1e3,
        },
    };
    let width = |phi: f64| -> Result<f64, CliError> {
        Ok(an::stark_linewidth(&model, &FieldConfig::new(a.b0_mt * 1e-3, phi)?, &g)?)
    };
    let points = a
        .phi_deg
        .iter()
        .map(|&p| Ok(json!({ "phi_deg": p, "gamma_mhz": width(p)? * 1e-6 })))
        .collect::<Result<Vec<_>, CliError>>()?;
    let sweep = (0..=180).map(|d| Ok([d as f64, width(d as f64)? * 1e-6])).collect::<Result<Vec<_>, CliError>>()?;
    out.emit(&a, json!({ "linewidths": points }), &[("stark.csv", write_csv(&["phi_deg", "gamma_MHz"], sweep))])
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct IdArgs {
    /// Inhomogeneous linewidth Gamma/2pi [MHz]
    #[arg(long = "gamma-MHz", default_value_t = 10.0)]
    pub gamma_mhz: f64,
    /// Excitation bandwidth Delta omega/2pi; overrides the resonator and pulse values [kHz]
    #[arg(long = "bw-kHz")]
    pub bw_khz: Option<f64>,
    /// Resonator linewidth kappa/2pi [kHz]
    #[arg(long = "kappa-kHz", default_value_t = 350.0)]
    pub kappa_khz: f64,
    /// Pulse duration; bandwidth/2pi = 1/duration [us]
    #[arg(long = "pulse-us", default_value_t = 4.0)]
    pub pulse_us: f64,
    /// Total Er3+ density, all isotopes; 77% is counted as zero-nuclear-spin [cm^-3]
    #[arg(long = "er-total-cm3", default_value_t = DEFAULT_ER_TOTAL_CM3)]
    pub er_total_cm3: f64,
    /// Refocusing angle [deg]
    #[arg(long = "theta2-deg", default_value_t = 180.0)]
    pub theta2_deg: f64,
    /// Effective electron g-factor along the field [dimensionless]
    #[arg(long = "g-eff", default_value_t = 8.38)]
    pub g_eff: f64,
}

pub fn id(a: IdArgs, out: &Output) -> Result<(), CliError> {
    let delta_omega = match a.bw_khz {
        Some(bw) => 2.0 * PI * bw * 1e3,
        None => {
            if !(a.pulse_us > 0.0) {
                return Err(CliError::user("--pulse-us must be positive"));
            }
            an::excitation_bandwidth(2.0 * PI * a.kappa_khz * 1e3, a.pulse_us * 1e-6)
        }
    };
    let rho_cm3 = an::zero_spin_density(a.er_total_cm3);
    let line = SpinLine { omega_s: 0.0, gamma: 2.0 * PI * a.gamma_mhz * 1e6, rho_m3: an::per_cm3_to_per_m3(rho_cm3) };
    let est = an::instantaneous_diffusion_t2(&line, delta_omega, a.g_eff, a.theta2_deg.to_radians())?;
    let result = json!({
        "t2_id_s": est.t2_s,
        "rho_zero_spin_cm3": rho_cm3,
        "excitation_bandwidth_khz": delta_omega / (2.0 * PI) * 1e-3,
        "bandwidth_convention": "pulse bandwidth/2pi = 1/duration; excitation = min(kappa, pulse)",
        "warning": est.warning,
    });
    out.emit(&a, result, &[])
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct ReflectArgs {
    /// Resonance frequency [GHz]
    #[arg(long = "f0-GHz", default_value_t = 7.881)]
    pub f0_ghz: f64,
    /// Coupling rate kappa_c/2pi [kHz]
    #[arg(long = "kappa-c-kHz", default_value_t = 272.0)]
    pub kappa_c_khz: f64,
    /// Internal loss rate kappa_int/2pi [kHz]
    #[arg(long = "kappa-int-kHz", default_value_t = 78.0)]
    pub kappa_int_khz: f64,
    /// Ensemble coupling g_ens/2pi [kHz]
    #[arg(long = "g-ens-kHz", default_value_t = 140.0)]
    pub g_ens_khz: f64,
    /// Spin linewidth Gamma/2pi [MHz]
    #[arg(long = "gamma-MHz", default_value_t = 10.0)]
    pub gamma_mhz: f64,
    /// Spin frequency minus resonance frequency [MHz]
    #[arg(long = "spin-detuning-MHz", default_value_t = 0.0)]
    pub spin_detuning_mhz: f64,
    /// Half-width of the probe sweep around f0 [MHz]
    #[arg(long = "span-MHz", default_value_t = 2.0)]
    pub span_mhz: f64,
    /// Number of probe frequencies
    #[arg(long = "n-points", default_value_t = 801)]
    pub n_points: usize,
}

pub fn reflect(a: ReflectArgs, out: &Output) -> Result<(), CliError> {
    if a.n_points < 2 {
        return Err(CliError::user("--n-points must be at least 2"));
    }
    let omega0 = 2.0 * PI * a.f0_ghz * 1e9;
    let res = ResonatorParams { omega0, kappa_c: 2.0 * PI * a.kappa_c_khz * 1e3, kappa_int: 2.0 * PI * a.kappa_int_khz * 1e3 };
    res.validate()?;
    let line = SpinLine {
        omega_s: omega0 + 2.0 * PI * a.spin_detuning_mhz * 1e6,
        gamma: 2.0 * PI * a.gamma_mhz * 1e6,
        rho_m3: 0.0,
    };
    line.validate()?;
    let g_ens = 2.0 * PI * a.g_ens_khz * 1e3;
    let rows: Vec<[f64; 5]> = (0..a.n_points)
        .map(|k| {
            let f = a.f0_ghz * 1e9 + a.span_mhz * 1e6 * (2.0 * k as f64 / (a.n_points - 1) as f64 - 1.0);
            let w = 2.0 * PI * f;
            let r = an::reflection_coefficient(&res, &line, g_ens, w);
            let loss = an::broadened_internal_loss(&res, &line, g_ens, w);
            [f, r.re, r.im, r.norm(), loss / (2.0 * PI)]
        })
        .collect();
    let dip = rows.iter().fold(rows[0], |m, r| if r[3] < m[3] { *r } else { m });
    let result = json!({ "min_abs_r": dip[3], "min_abs_r_freq_hz": dip[0], "kappa_total_khz": res.kappa() / (2.0 * PI) * 1e-3 });
    let table = write_csv(&["freq_Hz", "re_r", "im_r", "abs_r", "kappa_int_eff_Hz"], rows);
    out.emit(&a, result, &[("reflection.csv", table)])
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct GensArgs {
    /// Measured ensemble coupling g_ens/2pi; inverted to a density [kHz]
    #[arg(long = "g-ens-kHz", conflicts_with = "er_total_cm3")]
    pub g_ens_khz: Option<f64>,
    /// Total Er3+ density; converted to an ensemble coupling [cm^-3]
    #[arg(long = "er-total-cm3")]
    pub er_total_cm3: Option<f64>,
    /// Inductor wire width [um]
    #[arg(long = "width-um", default_value_t = 5.0)]
    pub width_um: f64,
    /// Inductor wire length [um]
    #[arg(long = "length-um", default_value_t = 630.0)]
    pub length_um: f64,
    /// Resonance frequency [GHz]
    #[arg(long = "f0-GHz", default_value_t = 7.881)]
    pub f0_ghz: f64,
    /// Resonator characteristic impedance [ohm]
    #[arg(long = "z0-ohm", default_value_t = 40.0)]
    pub z0_ohm: f64,
    /// Angle between the field and the wire [deg]
    #[arg(long = "delta-phi-deg", default_value_t = 21.0)]
    pub delta_phi_deg: f64,
    /// Cross-section field map CSV (y_um, z_um, B1x/y/z per sqrt photon) replacing the analytic wire
    #[arg(long = "b1-map")]
    pub b1_map: Option<PathBuf>,
    /// Also write the field map used
    #[arg(long = "write-map")]
    pub write_map: bool,
}

/// Field map from a file or the analytic strip wire.
pub fn field_map(path: Option<&PathBuf>, geometry: &WireGeometry, omega0: f64, z0: f64) -> Result<B1Map, CliError> {
    Ok(match path {
        Some(p) => B1Map::from_csv(&read_input(p)?)?,
        None => an::wire_b1_map(geometry, omega0, z0)?,
    })
}

pub fn gens(a: GensArgs, out: &Output) -> Result<(), CliError> {
    let g = GTensor::default();
    let length = a.length_um * 1e-6;
    let geometry = WireGeometry::strip(a.width_um * 1e-6, length);
    let map = field_map(a.b1_map.as_ref(), &geometry, 2.0 * PI * a.f0_ghz * 1e9, a.z0_ohm)?;
    let integral = an::coupling_integral(&map, &g, a.delta_phi_deg, length)?;
    let result = match (a.g_ens_khz, a.er_total_cm3) {
        (_, Some(er)) => {
            let rho = an::zero_spin_density(er);
            let g_ens = an::ensemble_coupling(&map, an::per_cm3_to_per_m3(rho), &g, a.delta_phi_deg, length)?;
            json!({ "g_ens_khz": g_ens / (2.0 * PI) * 1e-3, "rho_zero_spin_cm3": rho, "er_total_cm3": er, "coupling_integral": integral })
        }
        (g_khz, None) => {
            let g_ens = 2.0 * PI * g_khz.unwrap_or(140.0) * 1e3;
            let rho = an::density_from_coupling(&map, g_ens, &g, a.delta_phi_deg, length)? * 1e-6;
            json!({
                "g_ens_khz": g_ens / (2.0 * PI) * 1e-3,
                "rho_zero_spin_cm3": rho,
                "er_total_cm3": rho / ZERO_SPIN_ISOTOPE_FRACTION,
                "coupling_integral": integral,
            })
        }
    };
    let tables = if a.write_map { vec![("b1_map.csv", map.to_csv())] } else { Vec::new() };
    out.emit(&a, result, &tables)
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct T1tempArgs {
    /// Zero-temperature T1 [s]
    #[arg(long = "t1-0K-s", default_value_t = 4.8)]
    pub t1_0k_s: f64,
    /// Spin transition frequency [GHz]
    #[arg(long = "f0-GHz", default_value_t = 7.881)]
    pub f0_ghz: f64,
    /// Temperatures to evaluate [mK]
    #[arg(long = "temps-mK", value_delimiter = ',', default_value = "10,50,100,150,200,250,300,350,400")]
    pub temps_mk: Vec<f64>,
    /// Fit T1(0) to (temperature_K, T1_s) samples from this CSV
    #[arg(long)]
    pub fit: Option<PathBuf>,
}

pub fn t1temp(a: T1tempArgs, out: &Output) -> Result<(), CliError> {
    let omega0 = 2.0 * PI * a.f0_ghz * 1e9;
    if let Some(path) = &a.fit {
        let f = an::fit_direct_phonon(&two_col(path)?, omega0)?;
        let result = json!({ "t1_0k_s": f.t1_0k_s, "t1_0k_err_s": f.t1_0k_err_s, "residual_norm_s": f.residual_norm });
        return out.emit(&a, result, &[]);
    }
    let rows = a
        .temps_mk
        .iter()
        .map(|&t| Ok([t * 1e-3, an::direct_phonon_t1(a.t1_0k_s, omega0, t * 1e-3)?]))
        .collect::<Result<Vec<_>, CliError>>()?;
    let points: Vec<_> = rows.iter().map(|r| json!({ "temperature_k": r[0], "t1_s": r[1] })).collect();
    out.emit(&a, json!({ "t1": points }), &[("t1_temperature.csv", write_csv(&["temperature_K", "T1_s"], rows))])
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct AnisotropyArgs {
    /// Isotropic rate A [s^-1]
    #[arg(long = "a-per-s", default_value_t = 0.2083)]
    pub a_per_s: f64,
    /// Modulation rate B [s^-1]
    #[arg(long = "b-per-s", default_value_t = 0.05)]
    pub b_per_s: f64,
    /// Phase phi1 [deg]
    #[arg(long = "phi1-deg", default_value_t = 92.0)]
    pub phi1_deg: f64,
    /// Fit (A, B, phi1) to (phi_deg, T1_s) samples from this CSV
    #[arg(long)]
    pub fit: Option<PathBuf>,
}

pub fn anisotropy(a: AnisotropyArgs, out: &Output) -> Result<(), CliError> {
    if let Some(path) = &a.fit {
        let f = an::fit_t1_anisotropy(&two_col(path)?)?;
        let result = json!({
            "a_per_s": f.model.a, "a_err_per_s": f.a_err,
            "b_per_s": f.model.b, "b_err_per_s": f.b_err,
            "phi1_deg": f.model.phi1_deg, "phi1_err_deg": f.phi1_err_deg,
            "residual_norm_s": f.residual_norm,
        });
        return out.emit(&a, result, &[]);
    }
    let model = an::AnisotropyModel { a: a.a_per_s, b: a.b_per_s, phi1_deg: a.phi1_deg };
    let rows = (0..=180)
        .map(|d| Ok([d as f64, an::t1_anisotropy(&model, d as f64)?]))
        .collect::<Result<Vec<_>, CliError>>()?;
    let (lo, hi) = rows.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(r[1]), h.max(r[1])));
    out.emit(&a, json!({ "t1_min_s": lo, "t1_max_s": hi }), &[("t1_anisotropy.csv", write_csv(&["phi_deg", "T1_s"], rows))])
}
