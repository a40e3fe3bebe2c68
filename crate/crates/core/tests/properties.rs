use std::f64::consts::PI;

use proptest::prelude::*;

use ercce::analytic::{
    direct_phonon_t1, instantaneous_diffusion_t2, rabi_frequency, reflection_coefficient, selected_g0, stark_linewidth,
    t1_anisotropy, AnisotropyModel, ResonatorParams, SpinLine, StarkModel,
};
use ercce::cce::hahn_echo_cluster;
use ercce::crystal::{build_bath, BathConfiguration, BathMode, BathSpec, BathSpin, Isotope, LatticeSpec};
use ercce::eseem::{branch_frequencies, lowpass, modulation_factor};
use ercce::fitkit::{fit_stretched, magnitude_average, AveragingModel, IqTrace, StretchedOptions};
use ercce::hamiltonian::{conditional_hamiltonians, nuclear_dipolar, FieldConfig, GTensor, NuclearSpecies};
use ercce::relaxsim::{purcell_rate, t1_vs_beta, CouplingDistribution, WirePreset};

fn config(positions: &[[f64; 3]]) -> BathConfiguration {
    BathConfiguration {
        central_position: [0.0; 3],
        spins: positions.iter().map(|&position| BathSpin { position, species: Isotope::W183 }).collect(),
        seed: 0,
        generator: "prop".into(),
        hard_core_nm: 0.0,
        lattice: LatticeSpec::default(),
        bath: BathSpec::default(),
    }
}

fn position() -> impl Strategy<Value = [f64; 3]> {
    (0.35f64..3.0, 0.0f64..PI, 0.0f64..2.0 * PI)
        .prop_map(|(r, th, ph)| [r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()])
}

fn separated(a: &[f64; 3], b: &[f64; 3]) -> bool {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt() > 0.2
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cluster_echo_is_bounded(
        p in prop::collection::vec(position(), 1..=3),
        tau in 0.0f64..0.5,
        phi in 0.0f64..360.0,
    ) {
        prop_assume!(p.iter().enumerate().all(|(i, a)| p[i + 1..].iter().all(|b| separated(a, b))));
        let field = FieldConfig::new(0.067, phi).unwrap();
        let idx: Vec<usize> = (0..p.len()).collect();
        let (hp, hm) = conditional_hamiltonians(&idx, &config(&p), &GTensor::default(), &field, &NuclearSpecies::default()).unwrap();
        let l = hahn_echo_cluster(&hp, &hm, tau).unwrap();
        prop_assert!(l.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn dipolar_coupling_is_symmetric_and_scales(a in position(), b in position(), s in 0.5f64..4.0, phi in 0.0f64..360.0) {
        prop_assume!(separated(&a, &b));
        let field = FieldConfig::new(0.067, phi).unwrap();
        let sp = NuclearSpecies::default();
        let ab = nuclear_dipolar(a, b, &field, &sp).unwrap();
        let ba = nuclear_dipolar(b, a, &field, &sp).unwrap();
        prop_assert!((ab.zz - ba.zz).abs() <= 1e-12 * ab.zz.abs().max(1e-30));
        prop_assert!((ab.flipflop + 0.25 * ab.zz).abs() <= 1e-12 * ab.zz.abs().max(1e-30));
        let scaled = nuclear_dipolar(a.map(|v| v * s), b.map(|v| v * s), &field, &sp).unwrap();
        prop_assert!((scaled.zz * s.powi(3) - ab.zz).abs() <= 1e-9 * ab.zz.abs().max(1e-30));
    }

    #[test]
    fn eseem_modulation_is_bounded(a in -1e6f64..1e6, b in -1e6f64..1e6, wi in 1e4f64..2e6, tau in 0.0f64..3e-4) {
        let f = branch_frequencies(a, b, wi);
        prop_assert!((modulation_factor(&f, 0.0) - 1.0).abs() < 1e-15);
        prop_assert!(modulation_factor(&f, tau).abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn stark_width_has_floor_zeros_and_period(phi0 in 0.0f64..90.0, phi in 0.0f64..360.0, gmin in 1e5f64..5e6) {
        let model = StarkModel { phi0_deg: phi0, gamma_min_hz: gmin, ..StarkModel::default() };
        let g = GTensor::default();
        let w = |p: f64| stark_linewidth(&model, &FieldConfig::new(0.0672, p).unwrap(), &g).unwrap();
        prop_assert!(w(phi) >= gmin * (1.0 - 1e-12));
        prop_assert!((w(phi0) - gmin).abs() <= 1e-6 * gmin);
        prop_assert!((w(phi0 + 90.0) - gmin).abs() <= 1e-6 * gmin);
        prop_assert!((w(phi) - w(phi + 180.0)).abs() <= 1e-9 * w(phi));
    }

    #[test]
    fn id_time_is_inverse_in_density_and_bandwidth(rho in 1e17f64..1e20, k in 1.5f64..5.0, bw in 1e5f64..1e7) {
        let line = SpinLine { omega_s: 0.0, gamma: 2.0 * PI * 10e6, rho_m3: rho };
        let t = |l: &SpinLine, d: f64| instantaneous_diffusion_t2(l, d, 8.38, PI).unwrap().t2_s.unwrap();
        let dense = SpinLine { rho_m3: rho * k, ..line };
        prop_assert!((t(&line, bw) / t(&dense, bw) - k).abs() < 1e-9 * k);
        prop_assert!((t(&line, bw) / t(&line, bw * k) - k).abs() < 1e-9 * k);
    }

    #[test]
    fn reflection_of_passive_resonator_is_bounded(
        kc in 1e5f64..1e7, ki in 0.0f64..1e7, gens in 0.0f64..5e6, gamma in 1e5f64..1e8, det in -2e7f64..2e7,
    ) {
        let w0 = 2.0 * PI * 7.881e9;
        let res = ResonatorParams { omega0: w0, kappa_c: kc, kappa_int: ki };
        let line = SpinLine { omega_s: w0, gamma, rho_m3: 0.0 };
        prop_assert!(reflection_coefficient(&res, &line, gens, w0 + det).norm() <= 1.0 + 1e-9);
    }

    #[test]
    fn phonon_t1_falls_with_temperature(t in 1e-3f64..2.0, dt in 1e-3f64..1.0) {
        let w0 = 2.0 * PI * 7.881e9;
        let lo = direct_phonon_t1(4.8, w0, t).unwrap();
        let hi = direct_phonon_t1(4.8, w0, t + dt).unwrap();
        prop_assert!(hi <= lo && lo <= 4.8);
    }

    #[test]
    fn anisotropy_has_ninety_degree_period(a in 0.1f64..1.0, frac in -0.99f64..0.99, phi1 in 0.0f64..360.0, phi in 0.0f64..360.0) {
        let m = AnisotropyModel { a, b: a * frac, phi1_deg: phi1 };
        let x = t1_anisotropy(&m, phi).unwrap();
        prop_assert!((x - t1_anisotropy(&m, phi + 90.0).unwrap()).abs() <= 1e-9 * x);
    }

    #[test]
    fn purcell_rate_peaks_on_resonance(g0 in 1.0f64..1e3, delta in -1e7f64..1e7, kappa in 1e4f64..1e7) {
        let r = purcell_rate(g0, delta, kappa);
        prop_assert!((r - purcell_rate(g0, -delta, kappa)).abs() <= 1e-12 * r);
        prop_assert!(r <= purcell_rate(g0, 0.0, kappa) * (1.0 + 1e-12));
    }

    #[test]
    fn selected_coupling_gives_a_pi_pulse(beta in 1e4f64..1e10, dt in 1e-7f64..1e-5, q in 1e3f64..1e5) {
        let res = ResonatorParams::from_quality(7.881e9, q, 2.0 * q);
        let g0 = selected_g0(&res, beta, dt).unwrap();
        prop_assert!((rabi_frequency(&res, g0, beta) * dt - PI).abs() < 1e-9);
    }

    #[test]
    fn lowpass_keeps_the_mean(v in prop::collection::vec(-1.0f64..1.0, 8..200), cutoff in 0.0f64..5e5) {
        let out = lowpass(&v, 1e-6, cutoff);
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        prop_assert!((mean(&out) - mean(&v)).abs() < 1e-12);
    }

    #[test]
    fn magnitude_average_ignores_carrier_phase(
        iq in prop::collection::vec(prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16), 1..8),
        theta in 0.0f64..2.0 * PI,
    ) {
        let traces: Vec<IqTrace> = iq.iter().map(|t| IqTrace { i: t.iter().map(|p| p.0).collect(), q: t.iter().map(|p| p.1).collect() }).collect();
        let (c, s) = (theta.cos(), theta.sin());
        let rotated: Vec<IqTrace> = traces
            .iter()
            .map(|t| IqTrace {
                i: t.i.iter().zip(&t.q).map(|(i, q)| c * i - s * q).collect(),
                q: t.i.iter().zip(&t.q).map(|(i, q)| s * i + c * q).collect(),
            })
            .collect();
        let (a, b) = (magnitude_average(&traces, 1e-8), magnitude_average(&rotated, 1e-8));
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-30));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fits_never_end_worse_than_they_start(
        t2 in 5e-3f64..40e-3, x in 1.0f64..3.0, noise in prop::collection::vec(-0.02f64..0.02, 40), magnitude in any::<bool>(),
    ) {
        let data: Vec<(f64, f64)> = noise
            .iter()
            .enumerate()
            .map(|(k, n)| {
                let t = 5.0 * t2 * k as f64 / 39.0;
                (t, (-(t / t2).powf(x)).exp() + n)
            })
            .collect();
        let avg = if magnitude { AveragingModel::magnitude() } else { AveragingModel::phase_sensitive() };
        let fit = fit_stretched(&data, &StretchedOptions::single(avg)).unwrap();
        prop_assert!(fit.residual_norm <= fit.initial_residual_norm * (1.0 + 1e-12));
    }

    #[test]
    fn bath_generation_is_deterministic_and_bounded(seed in any::<u64>(), amorphous in any::<bool>(), radius in 2.0f64..5.0) {
        let spec = LatticeSpec::default();
        let bath = BathSpec { seed, radius_nm: radius, mode: if amorphous { BathMode::Amorphous } else { BathMode::Lattice }, ..BathSpec::default() };
        let a = build_bath(&spec, &bath).unwrap();
        let b = build_bath(&spec, &bath).unwrap();
        prop_assert_eq!(&a.spins, &b.spins);
        let hard = spec.nearest_er_w_distance();
        for p in a.positions() {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            prop_assert!(r <= radius + 1e-12 && r >= hard - 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn attenuation_scales_the_drive(db in 0.0f64..40.0, log_beta in 5.0f64..9.0) {
        let setup = WirePreset::Wire5um.setup(0.2, 1e-6);
        let dist = CouplingDistribution::single(2.0 * PI * 100.0);
        let beta = 10f64.powf(log_beta);
        let p = t1_vs_beta(&setup.grid, &dist, &[beta], db).unwrap();
        prop_assert!((p[0].beta_at_sample - beta * 10f64.powf(-db / 20.0)).abs() <= 1e-12 * beta);
    }
}
