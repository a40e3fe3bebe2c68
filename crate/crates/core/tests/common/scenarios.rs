//! Synthetic round-trip scenarios for the fit kernels, shared by the fitting and acceptance targets.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use ercce::analytic::{
    direct_phonon_t1, field_width_to_angular, fit_direct_phonon, fit_stark, fit_t1_anisotropy, stark_linewidth,
    t1_anisotropy, AnisotropyModel, StarkModel,
};
use ercce::fitkit::{
    fit_lorentzian, fit_stretched, lorentzian_model, magnitude_average, phase_sensitive_average, AveragingModel,
    ComponentSpec, DecayFit, IqTrace, StretchedOptions,
};
use ercce::hamiltonian::{effective_g, FieldConfig, GTensor};

pub fn two_tau(max_s: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| max_s * k as f64 / (n - 1) as f64).collect()
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    Normal::new(0.0, sigma).unwrap().sample(rng)
}

/// Magnitude-averaged echo amplitudes of `n_avg` noisy shots, with an optional per-shot phase walk.
pub fn averaged_echo(
    amplitude: f64,
    sigma: f64,
    phase_sigma: f64,
    n_avg: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let traces: Vec<IqTrace> = (0..n_avg)
        .map(|_| {
            let phi = gauss(rng, phase_sigma.max(1e-300));
            let (i, q) = (amplitude * phi.cos() + gauss(rng, sigma), amplitude * phi.sin() + gauss(rng, sigma));
            IqTrace { i: vec![i], q: vec![q] }
        })
        .collect();
    (magnitude_average(&traces, 1.0), phase_sensitive_average(&traces, 1.0, 0.0))
}

fn stretched(t: f64, t2: f64, x: f64) -> f64 {
    (-(t / t2).powf(x)).exp()
}

/// Magnitude-mode recovery of T2 = 23.2 ms, x = 2.4 from noisy averaged echoes.
pub fn magnitude_round_trip(seed: u64) -> DecayFit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<(f64, f64)> = two_tau(60e-3, 61)
        .into_iter()
        .map(|t| (t, averaged_echo(stretched(t, 23.2e-3, 2.4), 0.05, 0.0, 400, &mut rng).0))
        .collect();
    fit_stretched(&data, &StretchedOptions::single(AveragingModel::magnitude())).unwrap()
}

/// Noiseless phase-sensitive data; returns the worst relative parameter error.
pub fn noiseless_recovery() -> f64 {
    let mut worst: f64 = 0.0;
    for (t2, x) in [(27.2e-3, 2.74), (8.05e-3, 1.88), (23.2e-3, 2.4)] {
        let data: Vec<(f64, f64)> = two_tau(3.0 * t2, 60).into_iter().map(|t| (t, stretched(t, t2, x))).collect();
        let fit = fit_stretched(&data, &StretchedOptions::single(AveragingModel::phase_sensitive())).unwrap();
        let c = &fit.components[0];
        worst = worst.max((c.t2_s / t2 - 1.0).abs()).max((c.x / x - 1.0).abs());
    }
    worst
}

/// Two-component decay with the nuclear term frozen at 27.2 ms / 2.74; the free term is 28 ms / 2.1.
pub fn frozen_component_round_trip(seed: u64) -> DecayFit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<(f64, f64)> = two_tau(50e-3, 60)
        .into_iter()
        .map(|t| (t, stretched(t, 27.2e-3, 2.74) * stretched(t, 28e-3, 2.1) + gauss(&mut rng, 0.005)))
        .collect();
    let opts = StretchedOptions {
        components: vec![ComponentSpec::frozen(27.2e-3, 2.74), ComponentSpec::free()],
        ..StretchedOptions::single(AveragingModel::phase_sensitive())
    };
    fit_stretched(&data, &opts).unwrap()
}

/// Fitted FWHM (Hz) of a 10 MHz Lorentzian with 5 % additive noise.
pub fn lorentzian_round_trip(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = [7.881e9, 10e6, 1.0];
    let data: Vec<(f64, f64)> = (0..201)
        .map(|k| {
            let f = p[0] + (k as f64 - 100.0) * 0.3e6;
            (f, lorentzian_model(f, &p) + gauss(&mut rng, 0.05))
        })
        .collect();
    fit_lorentzian(&data).unwrap().fwhm
}

/// A 0.09 mT field FWHM at phi = 47 deg expressed in Hz.
pub fn field_width_in_hz() -> f64 {
    let g_eff = effective_g(&GTensor::default(), &FieldConfig::new(0.0672, 47.0).unwrap());
    field_width_to_angular(0.09e-3, g_eff) / (2.0 * PI)
}

/// Fitted T1(0 K) from tanh-law samples with 1 % noise; truth 4.8 s.
pub fn phonon_round_trip(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w0 = 2.0 * PI * 7.881e9;
    let samples: Vec<(f64, f64)> = [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8]
        .iter()
        .map(|&t| (t, direct_phonon_t1(4.8, w0, t).unwrap() * (1.0 + gauss(&mut rng, 0.01))))
        .collect();
    fit_direct_phonon(&samples, w0).unwrap().t1_0k_s
}

/// Fitted Delta E_c (V/cm) from Stark-broadened widths with 2 % noise; truth 32 kV/cm.
pub fn stark_round_trip(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = StarkModel::default();
    let g = GTensor::default();
    let samples: Vec<(f64, f64)> = (0..36)
        .map(|k| {
            let phi = 5.0 * k as f64;
            let w = stark_linewidth(&model, &FieldConfig::new(0.0672, phi).unwrap(), &g).unwrap();
            (phi, w * (1.0 + gauss(&mut rng, 0.02)))
        })
        .collect();
    fit_stark(&samples, 0.0672, &g, model.alpha_per_v_cm).unwrap().model.delta_ec_v_cm
}

/// Fitted phi1 (deg) of the T1 anisotropy with 2 % noise; truth 92 deg.
pub fn anisotropy_round_trip(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = AnisotropyModel { a: 0.2083, b: 0.05, phi1_deg: 92.0 };
    let samples: Vec<(f64, f64)> = (0..37)
        .map(|k| {
            let phi = 5.0 * k as f64;
            (phi, t1_anisotropy(&model, phi).unwrap() * (1.0 + gauss(&mut rng, 0.02)))
        })
        .collect();
    fit_t1_anisotropy(&samples).unwrap().model.phi1_deg.rem_euclid(360.0)
}

/// (T2 phase-sensitive, T2 magnitude) when each shot carries a phase random walk growing with 2tau.
pub fn phase_walk_t2(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mag, mut phase) = (Vec::new(), Vec::new());
    for t in two_tau(60e-3, 61) {
        let a = stretched(t, 23.2e-3, 2.4);
        // diffusive phase: variance linear in the echo time
        let (m, p) = averaged_echo(a, 0.01, (t / 5e-3).sqrt(), 400, &mut rng);
        mag.push((t, m));
        phase.push((t, p));
    }
    let fm = fit_stretched(&mag, &StretchedOptions::single(AveragingModel::magnitude())).unwrap();
    let fp = fit_stretched(&phase, &StretchedOptions::single(AveragingModel::phase_sensitive())).unwrap();
    (fp.components[0].t2_s, fm.components[0].t2_s)
}

/// (measured mean |A_e|^2 over pure-noise traces, expected 2 sigma^2).
pub fn noise_floor(n_traces: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = 0.1;
    let (a, _) = averaged_echo(0.0, sigma, 0.0, n_traces, &mut rng);
    let model = AveragingModel { noise_sigma: sigma, ..AveragingModel::magnitude() };
    (a * a, model.expected_offset())
}
