//! Secular pure-dephasing Hamiltonians of 183W clusters.
//!
//! All couplings are angular frequencies (rad/s); positions are in nm and
//! converted to metres only inside the dipolar prefactors. The quantisation
//! axis z is along B0, which lies in the ab plane.
//!
//! The conditional Hamiltonians drop the common +-omega/2 electron term: it is
//! proportional to the identity within each branch and cancels in the echo.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, MU_0_OVER_4PI, MU_B};
use crate::crystal::{norm, BathConfiguration};
use crate::{Error, Result};

/// Largest cluster the dense builder accepts.
pub const MAX_CLUSTER_SIZE: usize = 3;

/// Diagonal g-tensor in the crystal frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GTensor {
    pub g_perp: f64,
    pub g_par: f64,
}

impl Default for GTensor {
    fn default() -> Self {
        Self { g_perp: 8.38, g_par: 1.247 }
    }
}

impl GTensor {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_perp > 0.0 && self.g_par > 0.0) {
            return Err(Error::param("g", "principal values must be positive"));
        }
        Ok(())
    }

    fn apply(&self, v: Vector3<f64>) -> Vector3<f64> {
        Vector3::new(self.g_perp * v.x, self.g_perp * v.y, self.g_par * v.z)
    }
}

/// In-plane static field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// Field magnitude (T).
    pub b0_t: f64,
    /// Angle from the a axis, degrees in [0, 360).
    pub phi_deg: f64,
}

impl FieldConfig {
    pub fn new(b0_t: f64, phi_deg: f64) -> Result<Self> {
        if !(b0_t >= 0.0 && b0_t.is_finite()) {
            return Err(Error::param("b0", "must be non-negative"));
        }
        if !phi_deg.is_finite() {
            return Err(Error::param("phi", "must be finite"));
        }
        Ok(Self { b0_t, phi_deg: phi_deg.rem_euclid(360.0) })
    }

    /// Unit vector along B0 in the crystal frame.
    pub fn direction(&self) -> Vector3<f64> {
        let phi = self.phi_deg.to_radians();
        Vector3::new(phi.cos(), phi.sin(), 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuclearSpecies {
    /// Gyromagnetic ratio gamma/2pi (MHz/T), signed.
    pub gamma_mhz_per_t: f64,
}

impl Default for NuclearSpecies {
    fn default() -> Self {
        Self { gamma_mhz_per_t: 1.8 }
    }
}

impl NuclearSpecies {
    /// Gyromagnetic ratio in rad s^-1 T^-1.
    pub fn gamma(&self) -> f64 {
        2.0 * std::f64::consts::PI * 1e6 * self.gamma_mhz_per_t
    }

    /// Nuclear Larmor angular frequency in the given field.
    pub fn larmor(&self, field: &FieldConfig) -> f64 {
        self.gamma() * field.b0_t
    }
}

/// Electron g-factor along an in-plane field; the ab-plane is isotropic.
pub fn effective_g(g: &GTensor, field: &FieldConfig) -> f64 {
    g.apply(field.direction()).norm()
}

/// Electron Larmor angular frequency g mu_B B0 / hbar.
pub fn electron_larmor(g: &GTensor, field: &FieldConfig) -> f64 {
    effective_g(g, field) * MU_B * field.b0_t / HBAR
}

fn checked_vector(r_nm: [f64; 3], what: &str) -> Result<(Vector3<f64>, f64)> {
    let r = norm(r_nm);
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("{what}: zero or non-finite separation")));
    }
    Ok((Vector3::new(r_nm[0], r_nm[1], r_nm[2]) * 1e-9, r * 1e-9))
}

/// The row z.A_i of the dipolar hyperfine tensor (rad/s), in the crystal frame.
///
/// Its component along z is the secular coupling; the transverse remainder
/// is the pseudo-secular part that drives ESEEM.
pub fn hyperfine_vector(
    r_nm: [f64; 3],
    g: &GTensor,
    field: &FieldConfig,
    species: &NuclearSpecies,
) -> Result<Vector3<f64>> {
    let (r, rn) = checked_vector(r_nm, "hyperfine")?;
    let z = field.direction();
    let pref = MU_0_OVER_4PI * MU_B * species.gamma();
    let gz = g.apply(z);
    let zgr = gz.dot(&r);
    Ok((gz / rn.powi(3) - r * (3.0 * zgr / rn.powi(5))) * pref)
}

/// Secular hyperfine coefficient z.A_i.z (rad/s).
///
/// Positive for a nucleus perpendicular to B0 with positive gamma; scales as r^-3.
pub fn secular_hyperfine(
    r_nm: [f64; 3],
    g: &GTensor,
    field: &FieldConfig,
    species: &NuclearSpecies,
) -> Result<f64> {
    Ok(hyperfine_vector(r_nm, g, field, species)?.dot(&field.direction()))
}

/// Secular homonuclear dipolar coupling of a pair.
///
/// The pair Hamiltonian is `zz * Iz_i Iz_j + flipflop * (I+_i I-_j + I-_i I+_j)`
/// with `flipflop = -zz / 4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCoupling {
    pub zz: f64,
    pub flipflop: f64,
}

pub fn nuclear_dipolar(
    r_i_nm: [f64; 3],
    r_j_nm: [f64; 3],
    field: &FieldConfig,
    species: &NuclearSpecies,
) -> Result<PairCoupling> {
    let d = [r_j_nm[0] - r_i_nm[0], r_j_nm[1] - r_i_nm[1], r_j_nm[2] - r_i_nm[2]];
    let (r, rn) = checked_vector(d, "nuclear dipolar")?;
    let cos = r.dot(&field.direction()) / rn;
    let gamma = species.gamma();
    let zz = MU_0_OVER_4PI * gamma * gamma * HBAR * (1.0 - 3.0 * cos * cos) / rn.powi(3);
    Ok(PairCoupling { zz, flipflop: -0.25 * zz })
}

/// Cached single-spin couplings of a bath, used to assemble cluster Hamiltonians.
#[derive(Debug, Clone)]
pub struct BathCouplings {
    positions: Vec<[f64; 3]>,
    hyperfine: Vec<f64>,
    zeeman: f64,
    field: FieldConfig,
    species: NuclearSpecies,
}

impl BathCouplings {
    pub fn new(
        config: &BathConfiguration,
        g: &GTensor,
        field: &FieldConfig,
        species: &NuclearSpecies,
    ) -> Result<Self> {
        let positions: Vec<_> = config.positions().collect();
        let hyperfine = positions
            .iter()
            .map(|&p| secular_hyperfine(p, g, field, species))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            positions,
            hyperfine,
            zeeman: species.larmor(field),
            field: *field,
            species: *species,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn hyperfine(&self, i: usize) -> f64 {
        self.hyperfine[i]
    }

    pub fn position(&self, i: usize) -> [f64; 3] {
        self.positions[i]
    }

    pub fn pair(&self, i: usize, j: usize) -> Result<PairCoupling> {
        nuclear_dipolar(self.positions[i], self.positions[j], &self.field, &self.species)
    }

    /// Dense (H+, H-) for a cluster of bath indices.
    pub fn conditional_hamiltonians(&self, cluster: &[usize]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let a: Vec<f64> = cluster.iter().map(|&i| self.hyperfine[i]).collect();
        let mut pairs = Vec::new();
        for (x, &i) in cluster.iter().enumerate() {
            for (y, &j) in cluster.iter().enumerate().skip(x + 1) {
                pairs.push((x, y, self.pair(i, j)?));
            }
        }
        build_conditional(&a, &pairs, self.zeeman)
    }
}

/// Builds H+ and H- in the product Iz basis.
///
/// Basis index bit k set means spin k is down (Iz = -1/2). `pairs` holds
/// local indices into `hyperfine`.
pub fn build_conditional(
    hyperfine: &[f64],
    pairs: &[(usize, usize, PairCoupling)],
    zeeman: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = hyperfine.len();
    if m > MAX_CLUSTER_SIZE {
        return Err(Error::UnsupportedOrder { size: m, max: MAX_CLUSTER_SIZE });
    }
    let dim = 1usize << m;
    let iz = |state: usize, k: usize| if state >> k & 1 == 0 { 0.5 } else { -0.5 };
    let mut bath = DMatrix::<f64>::zeros(dim, dim);
    let mut split = DMatrix::<f64>::zeros(dim, dim);
    for s in 0..dim {
        for (k, &ak) in hyperfine.iter().enumerate() {
            bath[(s, s)] += zeeman * iz(s, k);
            split[(s, s)] += 0.5 * ak * iz(s, k);
        }
        for &(x, y, c) in pairs {
            bath[(s, s)] += c.zz * iz(s, x) * iz(s, y);
            if (s >> x & 1) != (s >> y & 1) {
                let t = s ^ (1 << x) ^ (1 << y);
                bath[(t, s)] += c.flipflop;
            }
        }
    }
    Ok((&bath + &split, &bath - &split))
}

/// Dense (H+, H-) for an arbitrary cluster of a bath configuration.
pub fn conditional_hamiltonians(
    cluster: &[usize],
    config: &BathConfiguration,
    g: &GTensor,
    field: &FieldConfig,
    species: &NuclearSpecies,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if cluster.len() > MAX_CLUSTER_SIZE {
        return Err(Error::UnsupportedOrder { size: cluster.len(), max: MAX_CLUSTER_SIZE });
    }
    if let Some(&bad) = cluster.iter().find(|&&i| i >= config.len()) {
        return Err(Error::param("cluster", format!("index {bad} outside bath of {}", config.len())));
    }
    let a = cluster
        .iter()
        .map(|&i| secular_hyperfine(config.spins[i].position, g, field, species))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for (x, &i) in cluster.iter().enumerate() {
        for (y, &j) in cluster.iter().enumerate().skip(x + 1) {
            let c = nuclear_dipolar(config.spins[i].position, config.spins[j].position, field, species)?;
            pairs.push((x, y, c));
        }
    }
    build_conditional(&a, &pairs, species.larmor(field))
}
