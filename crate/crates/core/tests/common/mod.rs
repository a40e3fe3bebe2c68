//! Test-side oracles built independently of the library kernels.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;

use ercce::crystal::{BathConfiguration, BathMode, BathSpec, BathSpin, Isotope, LatticeSpec};
use ercce::hamiltonian::{nuclear_dipolar, secular_hyperfine, FieldConfig, GTensor, NuclearSpecies};

pub mod scenarios;

pub type CMat = DMatrix<Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Spin-1/2 operators (Ix, Iy, Iz) in the (up, down) basis.
pub fn pauli_half() -> (CMat, CMat, CMat) {
    let x = CMat::from_row_slice(2, 2, &[c(0.0), c(0.5), c(0.5), c(0.0)]);
    let y = CMat::from_row_slice(2, 2, &[c(0.0), Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5), c(0.0)]);
    let z = CMat::from_row_slice(2, 2, &[c(0.5), c(0.0), c(0.0), c(-0.5)]);
    (x, y, z)
}

/// Operator `op` acting on site `k` of an `n`-spin register.
pub fn site_op(op: &CMat, k: usize, n: usize) -> CMat {
    let id = identity(2);
    let mut out = identity(1);
    for s in 0..n {
        out = kron(&out, if s == k { op } else { &id });
    }
    out
}

/// exp(-i H t) by Taylor series with scaling and squaring.
pub fn expm_taylor(h: &CMat, t: f64) -> CMat {
    let n = h.nrows();
    let m = h * Complex64::new(0.0, -t);
    let norm: f64 = m.iter().map(|z| z.norm()).fold(0.0, f64::max) * n as f64;
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = &m * c(scale);
    let mut term = identity(n);
    let mut sum = identity(n);
    for k in 1..30 {
        term = &term * &a / c(k as f64);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Conditional bath Hamiltonians of the whole register, assembled from Kronecker products.
pub fn full_bath_hamiltonians(
    positions: &[[f64; 3]],
    g: &GTensor,
    field: &FieldConfig,
    species: &NuclearSpecies,
) -> (CMat, CMat) {
    let n = positions.len();
    let dim = 1 << n;
    let (ix, iy, iz) = pauli_half();
    let wi = species.larmor(field);
    let mut bath = CMat::zeros(dim, dim);
    let mut split = CMat::zeros(dim, dim);
    let z: Vec<CMat> = (0..n).map(|k| site_op(&iz, k, n)).collect();
    let x: Vec<CMat> = (0..n).map(|k| site_op(&ix, k, n)).collect();
    let y: Vec<CMat> = (0..n).map(|k| site_op(&iy, k, n)).collect();
    for k in 0..n {
        let a = secular_hyperfine(positions[k], g, field, species).unwrap();
        bath += &z[k] * c(wi);
        split += &z[k] * c(0.5 * a);
        for j in k + 1..n {
            let p = nuclear_dipolar(positions[k], positions[j], field, species).unwrap();
            // I+I- + I-I+ = 2 (IxIx + IyIy)
            bath += (&z[k] * &z[j]) * c(p.zz) + (&x[k] * &x[j] + &y[k] * &y[j]) * c(2.0 * p.flipflop);
        }
    }
    (&bath + &split, &bath - &split)
}

/// Exact normalised Hahn-echo magnitude |Tr(U-^dag U+^dag U- U+)| / d.
pub fn exact_echo(h_plus: &CMat, h_minus: &CMat, tau: f64) -> f64 {
    let up = expm_taylor(h_plus, tau);
    let um = expm_taylor(h_minus, tau);
    let m = um.adjoint() * up.adjoint() * &um * &up;
    (m.trace() / c(h_plus.nrows() as f64)).norm()
}

/// A bath configuration holding the given positions.
pub fn toy_configuration(positions: &[[f64; 3]]) -> BathConfiguration {
    BathConfiguration {
        central_position: [0.0; 3],
        spins: positions.iter().map(|&position| BathSpin { position, species: Isotope::W183 }).collect(),
        seed: 0,
        generator: "test".into(),
        hard_core_nm: 0.0,
        lattice: LatticeSpec::default(),
        bath: BathSpec { mode: BathMode::Lattice, ..BathSpec::default() },
    }
}

/// W sites within `radius_nm` of the Er at Ca site 0, by brute force over a translation box.
pub fn brute_force_w_sites(radius_nm: f64) -> Vec<[f64; 3]> {
    let (a, cc) = (0.524, 1.137);
    let w = [[0.0, 0.25, 0.125], [0.5, 0.25, 0.375], [0.5, 0.75, 0.625], [0.0, 0.75, 0.875]];
    let er = [0.0, 0.25 * a, 0.625 * cc];
    let na = (radius_nm / a).ceil() as i64 + 2;
    let nc = (radius_nm / cc).ceil() as i64 + 2;
    let mut out = Vec::new();
    for i in -na..=na {
        for j in -na..=na {
            for k in -nc..=nc {
                for b in &w {
                    let p = [
                        (i as f64 + b[0]) * a - er[0],
                        (j as f64 + b[1]) * a - er[1],
                        (k as f64 + b[2]) * cc - er[2],
                    ];
                    if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() <= radius_nm {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Echo signal of an S = 1/2, I = 1/2 pair after ideal pi/2 - tau - pi - tau pulses,
/// normalised to its tau = 0 value, from explicit 4x4 propagators.
pub fn eseem_propagator(omega_i: f64, a: f64, b: f64, taus: &[f64]) -> Vec<f64> {
    let (sx, sy, sz) = pauli_half();
    let one = identity(2);
    let (ix, _, iz) = pauli_half();
    let h = kron(&one, &iz) * c(omega_i) + kron(&sz, &iz) * c(a) + kron(&sz, &ix) * c(b);
    let sx4 = kron(&sx, &one);
    let p90 = expm_taylor(&sx4, std::f64::consts::FRAC_PI_2);
    let p180 = expm_taylor(&sx4, std::f64::consts::PI);
    let rho0 = kron(&sz, &one) * c(-0.5);
    let s_plus = kron(&(&sx + &sy * Complex64::new(0.0, 1.0)), &one);
    let signal = |tau: f64| {
        let u = expm_taylor(&h, tau);
        let seq = &u * &p180 * &u * &p90;
        let rho = &seq * &rho0 * seq.adjoint();
        (&rho * &s_plus).trace()
    };
    let s0 = signal(0.0);
    taus.iter().map(|&t| (signal(t) / s0).re).collect()
}

/// Indices of local maxima above `floor` in a one-sided spectrum.
pub fn spectral_peaks(spec: &[(f64, f64)], floor: f64) -> Vec<usize> {
    (1..spec.len().saturating_sub(1))
        .filter(|&k| spec[k].1 > floor && spec[k].1 >= spec[k - 1].1 && spec[k].1 >= spec[k + 1].1)
        .collect()
}

/// Ordinary least-squares slope of y on x.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
