//! Scheelite (CaWO4) geometry and 183W bath generation.
//!
//! Coordinates are Cartesian in nm with x, y, z along the crystal a, b, c
//! axes. The Er3+ ion replaces the Ca2+ at fractional position (0, 1/4, 5/8)
//! of the conventional cell, which is taken as the origin of every bath.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Name recorded in output files for the generator behind every seeded draw.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9)";

/// Natural abundance of 183W used by the simulations.
pub const DEFAULT_ABUNDANCE: f64 = 0.145;
/// Default bath radius (nm).
pub const DEFAULT_RADIUS_NM: f64 = 11.0;

/// Conventional-cell description of the host lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// In-plane lattice constant a = b (nm).
    pub a_nm: f64,
    /// c-axis lattice constant (nm).
    pub c_nm: f64,
    /// Fractional W positions in the conventional cell.
    pub w_basis: Vec<[f64; 3]>,
    /// Fractional Ca positions in the conventional cell.
    pub ca_basis: Vec<[f64; 3]>,
    /// Index into `ca_basis` of the site the Er3+ substitutes.
    pub er_site: usize,
}

impl Default for LatticeSpec {
    /// I4_1/a, origin choice 2: W on 4a, Ca on 4b.
    fn default() -> Self {
        Self {
            a_nm: 0.524,
            c_nm: 1.137,
            w_basis: vec![
                [0.0, 0.25, 0.125],
                [0.5, 0.25, 0.375],
                [0.5, 0.75, 0.625],
                [0.0, 0.75, 0.875],
            ],
            ca_basis: vec![
                [0.0, 0.25, 0.625],
                [0.5, 0.25, 0.875],
                [0.5, 0.75, 0.125],
                [0.0, 0.75, 0.375],
            ],
            er_site: 0,
        }
    }
}

impl LatticeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_nm > 0.0 && self.a_nm.is_finite()) {
            return Err(Error::param("a_nm", "must be positive"));
        }
        if !(self.c_nm > 0.0 && self.c_nm.is_finite()) {
            return Err(Error::param("c_nm", "must be positive"));
        }
        let in_cell = |f: &[f64; 3]| f.iter().all(|&x| (0.0..1.0).contains(&x));
        if !self.w_basis.iter().all(in_cell) || !self.ca_basis.iter().all(in_cell) {
            return Err(Error::param("site_basis", "fractional coordinates must lie in [0, 1)"));
        }
        if self.er_site >= self.ca_basis.len() {
            return Err(Error::param("er_site", "index outside the Ca basis"));
        }
        Ok(())
    }

    pub fn cell_volume_nm3(&self) -> f64 {
        self.a_nm * self.a_nm * self.c_nm
    }

    /// W sites per nm^3.
    pub fn w_density_nm3(&self) -> f64 {
        self.w_basis.len() as f64 / self.cell_volume_nm3()
    }

    fn to_cartesian(&self, f: [f64; 3]) -> [f64; 3] {
        [f[0] * self.a_nm, f[1] * self.a_nm, f[2] * self.c_nm]
    }

    /// Cartesian position of the substituted Ca site inside the home cell.
    fn er_origin(&self) -> [f64; 3] {
        self.to_cartesian(self.ca_basis[self.er_site])
    }

    /// All W sites within `radius_nm` of the Er site, relative to it.
    ///
    /// Sites are ordered by cell index (i, j, k) then basis index, so the list
    /// is reproducible for a given spec and radius.
    pub fn w_sites_within(&self, radius_nm: f64) -> Vec<[f64; 3]> {
        let origin = self.er_origin();
        let na = (radius_nm / self.a_nm).ceil() as i64 + 1;
        let nc = (radius_nm / self.c_nm).ceil() as i64 + 1;
        let r2 = radius_nm * radius_nm;
        let mut sites = Vec::new();
        for i in -na..=na {
            for j in -na..=na {
                for k in -nc..=nc {
                    for f in &self.w_basis {
                        let p = self.to_cartesian([
                            f[0] + i as f64,
                            f[1] + j as f64,
                            f[2] + k as f64,
                        ]);
                        let d = [p[0] - origin[0], p[1] - origin[1], p[2] - origin[2]];
                        let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                        if d2 <= r2 && d2 > 0.0 {
                            sites.push(d);
                        }
                    }
                }
            }
        }
        sites
    }

    /// Shortest Er-W distance (nm).
    pub fn nearest_er_w_distance(&self) -> f64 {
        let reach = 2.0 * self.a_nm.max(self.c_nm);
        self.w_sites_within(reach)
            .iter()
            .map(|p| norm(*p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Shortest W-W distance (nm).
    pub fn nearest_w_w_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for anchor in &self.w_basis {
            let a = self.to_cartesian(*anchor);
            for i in -1..=1 {
                for j in -1..=1 {
                    for k in -1..=1 {
                        for f in &self.w_basis {
                            let p = self.to_cartesian([f[0] + i as f64, f[1] + j as f64, f[2] + k as f64]);
                            let d = norm([p[0] - a[0], p[1] - a[1], p[2] - a[2]]);
                            if d > 1e-9 {
                                best = best.min(d);
                            }
                        }
                    }
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BathMode {
    Lattice,
    Amorphous,
}

impl std::str::FromStr for BathMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lattice" => Ok(BathMode::Lattice),
            "amorphous" => Ok(BathMode::Amorphous),
            other => Err(Error::param("mode", format!("expected lattice|amorphous, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    /// Fraction of W sites carrying a 183W nucleus.
    pub abundance: f64,
    pub radius_nm: f64,
    pub mode: BathMode,
    pub seed: u64,
    /// Er3+ number density (cm^-3); carried along for the analytic models.
    pub er_concentration_cm3: f64,
}

impl Default for BathSpec {
    fn default() -> Self {
        Self {
            abundance: DEFAULT_ABUNDANCE,
            radius_nm: DEFAULT_RADIUS_NM,
            mode: BathMode::Lattice,
            seed: 0,
            er_concentration_cm3: 0.7e13,
        }
    }
}

impl BathSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.abundance) {
            return Err(Error::param("abundance", "must lie in [0, 1]"));
        }
        if !(self.radius_nm > 0.0 && self.radius_nm.is_finite()) {
            return Err(Error::param("radius_nm", "must be positive"));
        }
        Ok(())
    }
}

/// Nuclear species tag. Only 183W carries spin in this host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Isotope {
    W183,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpin {
    /// Position relative to the central spin (nm).
    pub position: [f64; 3],
    pub species: Isotope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathConfiguration {
    pub central_position: [f64; 3],
    pub spins: Vec<BathSpin>,
    pub seed: u64,
    pub generator: String,
    /// Minimum allowed distance from the central spin (nm).
    pub hard_core_nm: f64,
    pub lattice: LatticeSpec,
    pub bath: BathSpec,
}

impl BathConfiguration {
    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.spins.iter().map(|s| s.position)
    }
}

pub(crate) fn norm(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Populates every W site within the bath radius independently with
/// probability `bath.abundance`.
pub fn build_lattice_bath(spec: &LatticeSpec, bath: &BathSpec) -> Result<BathConfiguration> {
    spec.validate()?;
    bath.validate()?;
    if bath.mode != BathMode::Lattice {
        return Err(Error::param("mode", "build_lattice_bath requires lattice mode"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(bath.seed);
    let spins = spec
        .w_sites_within(bath.radius_nm)
        .into_iter()
        .filter(|_| rng.random::<f64>() < bath.abundance)
        .map(|position| BathSpin { position, species: Isotope::W183 })
        .collect();
    Ok(BathConfiguration {
        central_position: [0.0; 3],
        spins,
        seed: bath.seed,
        generator: RNG_NAME.to_string(),
        hard_core_nm: spec.nearest_er_w_distance(),
        lattice: spec.clone(),
        bath: bath.clone(),
    })
}

/// Expected number of 183W spins in a sphere of the bath radius at the
/// lattice concentration.
pub fn expected_amorphous_count(spec: &LatticeSpec, bath: &BathSpec) -> f64 {
    let volume = 4.0 / 3.0 * std::f64::consts::PI * bath.radius_nm.powi(3);
    bath.abundance * spec.w_density_nm3() * volume
}

/// Scatters spins uniformly in the bath sphere at the lattice concentration.
///
/// The count is Poisson with mean [`expected_amorphous_count`]; positions
/// closer to the centre than the nearest Er-W distance are rejected.
pub fn build_amorphous_bath(spec: &LatticeSpec, bath: &BathSpec) -> Result<BathConfiguration> {
    spec.validate()?;
    bath.validate()?;
    if bath.mode != BathMode::Amorphous {
        return Err(Error::param("mode", "build_amorphous_bath requires amorphous mode"));
    }
    let hard_core = spec.nearest_er_w_distance();
    if hard_core >= bath.radius_nm {
        return Err(Error::param("radius_nm", "bath radius must exceed the hard-core radius"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(bath.seed);
    let mean = expected_amorphous_count(spec, bath);
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::param("abundance", e.to_string()))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    let r = bath.radius_nm;
    let mut spins = Vec::with_capacity(count);
    while spins.len() < count {
        let p = [
            rng.random_range(-r..r),
            rng.random_range(-r..r),
            rng.random_range(-r..r),
        ];
        let d = norm(p);
        if d <= r && d >= hard_core {
            spins.push(BathSpin { position: p, species: Isotope::W183 });
        }
    }
    Ok(BathConfiguration {
        central_position: [0.0; 3],
        spins,
        seed: bath.seed,
        generator: RNG_NAME.to_string(),
        hard_core_nm: hard_core,
        lattice: spec.clone(),
        bath: bath.clone(),
    })
}

/// Dispatches on `bath.mode`.
pub fn build_bath(spec: &LatticeSpec, bath: &BathSpec) -> Result<BathConfiguration> {
    match bath.mode {
        BathMode::Lattice => build_lattice_bath(spec, bath),
        BathMode::Amorphous => build_amorphous_bath(spec, bath),
    }
}
