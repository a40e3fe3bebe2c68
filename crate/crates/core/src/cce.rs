//! Cluster-correlation expansion of the Hahn-echo coherence.
//!
//! Each cluster's echo is evaluated exactly from the eigendecompositions of
//! its two conditional Hamiltonians. Irreducible correlations are formed by
//! dividing out every proper sub-cluster, and the truncated product is
//! accumulated as log-magnitude plus phase in fixed-size chunks so that the
//! result does not depend on the number of worker threads.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crystal::{build_bath, BathConfiguration, BathSpec, LatticeSpec, RNG_NAME};
use crate::fitkit::{fit_stretched, AveragingModel, DecayFit, StretchedOptions};
use crate::hamiltonian::{BathCouplings, FieldConfig, GTensor, NuclearSpecies, MAX_CLUSTER_SIZE};
use crate::{Error, Result, SCHEMA_VERSION};

/// Default pair cutoff (nm).
pub const DEFAULT_PAIR_CUTOFF_NM: f64 = 1.2;
/// Sub-cluster magnitudes below this are treated as fully decohered.
pub const DIVISION_GUARD: f64 = 1e-12;
/// Reduction chunk; fixed so the summation tree is independent of thread count.
const REDUCTION_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CceSettings {
    /// Truncation order M (largest cluster size).
    pub order: usize,
    pub pair_cutoff_nm: f64,
    /// Free-evolution delays tau (s); the echo is sampled at 2 tau.
    pub tau_grid_s: Vec<f64>,
    pub n_configurations: usize,
    /// Configuration k uses bath seed `seed + k`.
    pub seed: u64,
}

impl Default for CceSettings {
    fn default() -> Self {
        Self {
            order: 2,
            pair_cutoff_nm: DEFAULT_PAIR_CUTOFF_NM,
            tau_grid_s: default_tau_grid(),
            n_configurations: 1,
            seed: 0,
        }
    }
}

/// 60 delays with 2 tau uniform on [0, 50 ms].
pub fn default_tau_grid() -> Vec<f64> {
    uniform_two_tau_grid(50e-3, 60)
}

/// `n` delays with 2 tau uniform on [0, `max_two_tau_s`].
pub fn uniform_two_tau_grid(max_two_tau_s: f64, n: usize) -> Vec<f64> {
    let step = if n > 1 { max_two_tau_s / (n - 1) as f64 } else { 0.0 };
    (0..n).map(|k| 0.5 * step * k as f64).collect()
}

impl CceSettings {
    pub fn validate(&self, bath_radius_nm: f64) -> Result<()> {
        if !(1..=MAX_CLUSTER_SIZE).contains(&self.order) {
            return Err(Error::UnsupportedOrder { size: self.order, max: MAX_CLUSTER_SIZE });
        }
        if !(self.pair_cutoff_nm > 0.0) {
            return Err(Error::param("pair_cutoff", "must be positive"));
        }
        if self.pair_cutoff_nm > 2.0 * bath_radius_nm {
            return Err(Error::param("pair_cutoff", "must not exceed twice the bath radius"));
        }
        if self.tau_grid_s.is_empty() {
            return Err(Error::param("tau_grid", "must not be empty"));
        }
        if self.tau_grid_s[0] < 0.0 || self.tau_grid_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("tau_grid", "must be non-negative and strictly increasing"));
        }
        if self.n_configurations == 0 {
            return Err(Error::param("n_configurations", "must be at least 1"));
        }
        Ok(())
    }
}

/// Precomputed spectral data of one cluster's (H+, H-) pair.
///
/// With H+- = V+- diag(lambda+-) V+-^T and W = V-^T V+, the echo is
/// `Tr(P W^T conj(P) W^T) / d` where `P = conj(D-) W conj(D+)`.
#[derive(Debug, Clone)]
pub struct EchoKernel {
    dim: usize,
    lambda_plus: Vec<f64>,
    lambda_minus: Vec<f64>,
    /// Row-major overlap W.
    overlap: Vec<f64>,
}

fn hermiticity_defect(h: &DMatrix<f64>) -> f64 {
    let scale = h.amax().max(f64::MIN_POSITIVE);
    (h - h.transpose()).amax() / scale
}

impl EchoKernel {
    pub fn new(h_plus: &DMatrix<f64>, h_minus: &DMatrix<f64>) -> Result<Self> {
        if !h_plus.is_square() || h_plus.shape() != h_minus.shape() {
            return Err(Error::Input("conditional Hamiltonians must be square and of equal size".into()));
        }
        for h in [h_plus, h_minus] {
            let defect = hermiticity_defect(h);
            if defect > 1e-14 {
                return Err(Error::NotHermitian { deviation: defect });
            }
        }
        let dim = h_plus.nrows();
        let ep = SymmetricEigen::new(h_plus.clone());
        let em = SymmetricEigen::new(h_minus.clone());
        let w = em.eigenvectors.transpose() * &ep.eigenvectors;
        let mut overlap = Vec::with_capacity(dim * dim);
        for a in 0..dim {
            for b in 0..dim {
                overlap.push(w[(a, b)]);
            }
        }
        Ok(Self {
            dim,
            lambda_plus: ep.eigenvalues.iter().copied().collect(),
            lambda_minus: em.eigenvalues.iter().copied().collect(),
            overlap,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Normalised echo L(2 tau) for the infinite-temperature bath state.
    pub fn eval(&self, tau: f64) -> Complex64 {
        let d = self.dim;
        let w = &self.overlap;
        let dm: Vec<Complex64> = self.lambda_minus.iter().map(|&l| Complex64::from_polar(1.0, l * tau)).collect();
        let dp: Vec<Complex64> = self.lambda_plus.iter().map(|&l| Complex64::from_polar(1.0, l * tau)).collect();
        // P_ab = conj(d-_a) W_ab conj(d+_b); conj(exp(-i l t)) = exp(i l t).
        let mut p = vec![Complex64::new(0.0, 0.0); d * d];
        for a in 0..d {
            for b in 0..d {
                p[a * d + b] = dm[a] * dp[b] * w[a * d + b];
            }
        }
        // R = P W^T
        let mut r = vec![Complex64::new(0.0, 0.0); d * d];
        for a in 0..d {
            for c in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for b in 0..d {
                    acc += p[a * d + b] * w[c * d + b];
                }
                r[a * d + c] = acc;
            }
        }
        let mut tr = Complex64::new(0.0, 0.0);
        for a in 0..d {
            for c in 0..d {
                tr += r[a * d + c] * r[c * d + a].conj();
            }
        }
        tr / d as f64
    }
}

/// Hahn-echo signal of a single cluster at delay `tau`.
pub fn hahn_echo_cluster(h_plus: &DMatrix<f64>, h_minus: &DMatrix<f64>, tau: f64) -> Result<Complex64> {
    Ok(EchoKernel::new(h_plus, h_minus)?.eval(tau))
}

/// Singletons, pairs within the cutoff and (for order 3) triples whose three
/// separations are all within the cutoff, each sorted and in lexicographic order.
pub fn enumerate_clusters(config: &BathConfiguration, settings: &CceSettings) -> Vec<Vec<usize>> {
    let positions: Vec<[f64; 3]> = config.positions().collect();
    let n = positions.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    if settings.order < 2 || n < 2 {
        return clusters;
    }
    let neighbours = neighbour_lists(&positions, settings.pair_cutoff_nm);
    for (i, list) in neighbours.iter().enumerate() {
        clusters.extend(list.iter().filter(|&&j| j > i).map(|&j| vec![i, j]));
    }
    if settings.order >= 3 {
        for (i, li) in neighbours.iter().enumerate() {
            for &j in li.iter().filter(|&&j| j > i) {
                let lj = &neighbours[j];
                // both lists are sorted: merge for the common neighbours k > j
                let (mut x, mut y) = (0, 0);
                while x < li.len() && y < lj.len() {
                    match li[x].cmp(&lj[y]) {
                        std::cmp::Ordering::Less => x += 1,
                        std::cmp::Ordering::Greater => y += 1,
                        std::cmp::Ordering::Equal => {
                            if li[x] > j {
                                clusters.push(vec![i, j, li[x]]);
                            }
                            x += 1;
                            y += 1;
                        }
                    }
                }
            }
        }
    }
    clusters
}

/// Sorted neighbour indices within `cutoff` for every point, via a cell list.
fn neighbour_lists(positions: &[[f64; 3]], cutoff: f64) -> Vec<Vec<usize>> {
    let key = |p: &[f64; 3]| -> [i64; 3] {
        [
            (p[0] / cutoff).floor() as i64,
            (p[1] / cutoff).floor() as i64,
            (p[2] / cutoff).floor() as i64,
        ]
    };
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in positions.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let c2 = cutoff * cutoff;
    positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let k = key(p);
            let mut out = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(members) = cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            for &j in members {
                                if j == i {
                                    continue;
                                }
                                let q = positions[j];
                                let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                                if d2 <= c2 {
                                    out.push(j);
                                }
                            }
                        }
                    }
                }
            }
            out.sort_unstable();
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterContribution {
    pub cluster: Vec<usize>,
    /// Echo of the isolated cluster at each tau.
    pub values: Vec<Complex64>,
}

/// Echo of every cluster over the tau grid, in cluster order.
pub fn cluster_contributions(
    couplings: &BathCouplings,
    clusters: &[Vec<usize>],
    tau_grid: &[f64],
) -> Result<Vec<ClusterContribution>> {
    clusters
        .par_iter()
        .map(|c| {
            let (hp, hm) = couplings.conditional_hamiltonians(c)?;
            let kernel = EchoKernel::new(&hp, &hm)?;
            Ok(ClusterContribution {
                cluster: c.clone(),
                values: tau_grid.iter().map(|&t| kernel.eval(t)).collect(),
            })
        })
        .collect()
}

/// Truncated CCE product with bookkeeping of guarded points.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub values: Vec<Complex64>,
    /// Points where a sub-cluster fell below [`DIVISION_GUARD`].
    pub guarded: Vec<bool>,
}

/// Combines cluster echoes into the order-`order` CCE coherence.
///
/// Clusters larger than `order` are ignored. Every proper sub-cluster of an
/// included cluster must itself be present.
pub fn cce_assemble(contributions: &[ClusterContribution], order: usize, n_tau: usize) -> Result<Assembled> {
    if let Some(bad) = contributions.iter().find(|c| c.values.len() != n_tau) {
        return Err(Error::Input(format!(
            "cluster {:?} has {} samples, expected {n_tau}",
            bad.cluster,
            bad.values.len()
        )));
    }
    let mut index: HashMap<&[usize], usize> = HashMap::with_capacity(contributions.len());
    for (k, c) in contributions.iter().enumerate() {
        index.insert(c.cluster.as_slice(), k);
    }
    let mut irreducible: Vec<Option<Vec<Complex64>>> = vec![None; contributions.len()];
    let mut ln_mag = vec![0.0f64; n_tau];
    let mut phase = vec![0.0f64; n_tau];
    let mut guarded = vec![false; n_tau];

    for size in 1..=order.min(MAX_CLUSTER_SIZE) {
        let members: Vec<usize> = (0..contributions.len())
            .filter(|&k| contributions[k].cluster.len() == size)
            .collect();
        let computed: Vec<(usize, Vec<Complex64>, Vec<bool>)> = members
            .par_iter()
            .map(|&k| {
                let c = &contributions[k];
                let mut value = c.values.clone();
                let mut flags = vec![false; n_tau];
                for sub in proper_subsets(&c.cluster) {
                    let &s = index.get(sub.as_slice()).ok_or_else(|| Error::MissingSubCluster {
                        cluster: c.cluster.clone(),
                        missing: sub.clone(),
                    })?;
                    let sv = irreducible[s].as_ref().expect("smaller clusters are processed first");
                    for t in 0..n_tau {
                        if sv[t].norm() < DIVISION_GUARD {
                            flags[t] = true;
                        } else {
                            value[t] /= sv[t];
                        }
                    }
                }
                for t in 0..n_tau {
                    if flags[t] {
                        value[t] = Complex64::new(1.0, 0.0);
                    }
                }
                Ok((k, value, flags))
            })
            .collect::<Result<_>>()?;

        let partials: Vec<(Vec<f64>, Vec<f64>)> = computed
            .par_chunks(REDUCTION_CHUNK)
            .map(|chunk| {
                let mut lm = vec![0.0; n_tau];
                let mut ph = vec![0.0; n_tau];
                for (_, value, _) in chunk {
                    for t in 0..n_tau {
                        lm[t] += value[t].norm().ln();
                        ph[t] += value[t].arg();
                    }
                }
                (lm, ph)
            })
            .collect();
        for (lm, ph) in partials {
            for t in 0..n_tau {
                ln_mag[t] += lm[t];
                phase[t] += ph[t];
            }
        }
        for (k, value, flags) in computed {
            for t in 0..n_tau {
                guarded[t] |= flags[t];
            }
            irreducible[k] = Some(value);
        }
    }
    let values = ln_mag
        .iter()
        .zip(&phase)
        .map(|(&m, &p)| Complex64::from_polar(m.exp(), p))
        .collect();
    Ok(Assembled { values, guarded })
}

fn proper_subsets(cluster: &[usize]) -> Vec<Vec<usize>> {
    let m = cluster.len();
    (1..(1u32 << m) - 1)
        .map(|mask| (0..m).filter(|&b| mask >> b & 1 == 1).map(|b| cluster[b]).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub schema_version: u32,
    pub b0_t: f64,
    pub phi_deg: f64,
    pub order: usize,
    pub pair_cutoff_nm: f64,
    pub seeds: Vec<u64>,
    pub generator: String,
    pub bath_spec_hash: String,
    pub bath: BathSpec,
    pub lattice: LatticeSpec,
    pub hard_core_nm: f64,
    pub spin_counts: Vec<usize>,
    pub cluster_counts: Vec<usize>,
    /// Indices into the tau grid where the division guard fired.
    pub guarded_points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCurve {
    pub tau_s: Vec<f64>,
    pub two_tau_s: Vec<f64>,
    /// Mean of |L| over configurations.
    pub l_mean: Vec<f64>,
    pub l_std: Vec<f64>,
    /// |L| per configuration.
    pub per_config: Vec<Vec<f64>>,
    pub metadata: CurveMetadata,
}

impl CoherenceCurve {
    /// Stretched-exponential fit of the mean curve, `A = exp(-(2tau/T2)^x)`.
    pub fn fit(&self) -> Result<DecayFit> {
        fit_curve(&self.two_tau_s, &self.l_mean)
    }

    /// CSV with columns two_tau_s, L_mean, L_std and optionally one per configuration.
    pub fn to_csv(&self, per_config: bool) -> String {
        let mut out = String::from("two_tau_s,L_mean,L_std");
        if per_config {
            for k in 0..self.per_config.len() {
                out.push_str(&format!(",L_cfg{k}"));
            }
        }
        out.push('\n');
        for t in 0..self.two_tau_s.len() {
            out.push_str(&format!("{:e},{:e},{:e}", self.two_tau_s[t], self.l_mean[t], self.l_std[t]));
            if per_config {
                for c in &self.per_config {
                    out.push_str(&format!(",{:e}", c[t]));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Phase-sensitive stretched fit restricted to points with appreciable coherence.
pub fn fit_curve(two_tau: &[f64], l: &[f64]) -> Result<DecayFit> {
    let data: Vec<(f64, f64)> = two_tau.iter().copied().zip(l.iter().copied()).collect();
    fit_stretched(&data, &StretchedOptions::single(AveragingModel::phase_sensitive()))
}

fn bath_hash(lattice: &LatticeSpec, bath: &BathSpec) -> String {
    let json = serde_json::to_string(&(lattice, bath)).expect("plain data serialises");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Coherence of one bath configuration.
pub fn simulate_configuration(
    config: &BathConfiguration,
    g: &GTensor,
    field: &FieldConfig,
    species: &NuclearSpecies,
    settings: &CceSettings,
) -> Result<(Assembled, usize)> {
    let couplings = BathCouplings::new(config, g, field, species)?;
    let clusters = enumerate_clusters(config, settings);
    let contributions = cluster_contributions(&couplings, &clusters, &settings.tau_grid_s)?;
    let assembled = cce_assemble(&contributions, settings.order, settings.tau_grid_s.len())?;
    Ok((assembled, clusters.len()))
}

/// Ensemble-averaged CCE coherence over `settings.n_configurations` baths.
pub fn simulate(
    lattice: &LatticeSpec,
    bath: &BathSpec,
    g: &GTensor,
    field: &FieldConfig,
    species: &NuclearSpecies,
    settings: &CceSettings,
) -> Result<CoherenceCurve> {
    lattice.validate()?;
    bath.validate()?;
    g.validate()?;
    settings.validate(bath.radius_nm)?;
    let n_tau = settings.tau_grid_s.len();
    let seeds: Vec<u64> = (0..settings.n_configurations as u64).map(|k| settings.seed.wrapping_add(k)).collect();

    let mut per_config = Vec::with_capacity(seeds.len());
    let mut spin_counts = Vec::new();
    let mut cluster_counts = Vec::new();
    let mut guarded = vec![false; n_tau];
    let mut hard_core = 0.0;
    for &seed in &seeds {
        let spec = BathSpec { seed, ..bath.clone() };
        let config = build_bath(lattice, &spec)?;
        hard_core = config.hard_core_nm;
        let (assembled, n_clusters) = simulate_configuration(&config, g, field, species, settings)?;
        spin_counts.push(config.len());
        cluster_counts.push(n_clusters);
        for t in 0..n_tau {
            guarded[t] |= assembled.guarded[t];
        }
        per_config.push(assembled.values.iter().map(|v| v.norm()).collect::<Vec<f64>>());
    }

    let n = per_config.len() as f64;
    let l_mean: Vec<f64> = (0..n_tau).map(|t| per_config.iter().map(|c| c[t]).sum::<f64>() / n).collect();
    let l_std: Vec<f64> = (0..n_tau)
        .map(|t| {
            if per_config.len() < 2 {
                return 0.0;
            }
            let var = per_config.iter().map(|c| (c[t] - l_mean[t]).powi(2)).sum::<f64>() / (n - 1.0);
            var.sqrt()
        })
        .collect();

    Ok(CoherenceCurve {
        tau_s: settings.tau_grid_s.clone(),
        two_tau_s: settings.tau_grid_s.iter().map(|t| 2.0 * t).collect(),
        l_mean,
        l_std,
        per_config,
        metadata: CurveMetadata {
            schema_version: SCHEMA_VERSION,
            b0_t: field.b0_t,
            phi_deg: field.phi_deg,
            order: settings.order,
            pair_cutoff_nm: settings.pair_cutoff_nm,
            seeds,
            generator: RNG_NAME.to_string(),
            bath_spec_hash: bath_hash(lattice, bath),
            bath: bath.clone(),
            lattice: lattice.clone(),
            hard_core_nm: hard_core,
            spin_counts,
            cluster_counts,
            guarded_points: guarded.iter().enumerate().filter(|(_, &g)| g).map(|(k, _)| k).collect(),
        },
    })
}

/// One row of a pair-cutoff convergence sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPoint {
    pub pair_cutoff_nm: f64,
    pub t2_s: f64,
    pub x: f64,
}

/// Fitted (T2, x) of the ensemble curve for each pair cutoff.
pub fn pair_cutoff_sweep(
    lattice: &LatticeSpec,
    bath: &BathSpec,
    g: &GTensor,
    field: &FieldConfig,
    species: &NuclearSpecies,
    settings: &CceSettings,
    cutoffs_nm: &[f64],
) -> Result<Vec<CutoffPoint>> {
    cutoffs_nm
        .iter()
        .map(|&pair_cutoff_nm| {
            let s = CceSettings { pair_cutoff_nm, ..settings.clone() };
            let fit = simulate(lattice, bath, g, field, species, &s)?.fit()?;
            Ok(CutoffPoint { pair_cutoff_nm, t2_s: fit.components[0].t2_s, x: fit.components[0].x })
        })
        .collect()
}
