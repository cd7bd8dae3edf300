//! Edwards–Anderson spin-glass pieces: exhaustive cluster ground states, the
//! finite-size cluster lower bounds, frustration and gauge diagnostics, and
//! the classical free energy with its self-averaging signature.
//!
//! Cluster energies minimize `sum_b J_b s_i s_j` over Ising configurations;
//! the quantum variant diagonalizes the `2^sites` spin-coupling matrix with
//! anisotropy `(a_x, a_y, a_z)`. Bond orderings are canonical and documented
//! so exhaustive sums are auditable integers for Bernoulli couplings.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::disorder::{DistributionSpec, Law, MonteCarloEstimate, RealizationSeed};
use crate::error::{Error, Result};
use crate::numeric::{mean_and_std_error, pairwise_sum};

/// Plaquette: sites 0..3 around the square, bonds
/// (0,1), (1,2), (2,3), (3,0).
const PLAQUETTE_BONDS: [(usize, usize); 4] = [(0, 1), (1, 2), (2, 3), (3, 0)];

/// Cube: sites 0..7 indexed by coordinate bits (x = bit0, y = bit1,
/// z = bit2); the 12 edges in lexicographic order.
const CUBE_BONDS: [(usize, usize); 12] = [
    (0, 1),
    (0, 2),
    (0, 4),
    (1, 3),
    (1, 5),
    (2, 3),
    (2, 6),
    (3, 7),
    (4, 5),
    (4, 6),
    (5, 7),
    (6, 7),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClusterGeometry {
    Plaquette,
    Cube,
}

impl ClusterGeometry {
    pub fn sites(&self) -> usize {
        match self {
            ClusterGeometry::Plaquette => 4,
            ClusterGeometry::Cube => 8,
        }
    }

    pub fn bonds(&self) -> &'static [(usize, usize)] {
        match self {
            ClusterGeometry::Plaquette => &PLAQUETTE_BONDS,
            ClusterGeometry::Cube => &CUBE_BONDS,
        }
    }

    /// The cluster tiling dimension (plaquette for d=2, cube for d=3).
    pub fn dimension(&self) -> usize {
        match self {
            ClusterGeometry::Plaquette => 2,
            ClusterGeometry::Cube => 3,
        }
    }

    /// Multiple-counting factor of the cluster decomposition: each bond of
    /// the lattice appears in 1/c_d clusters (c_2 = 1/2, c_3 = 1/4).
    pub fn counting_factor(&self) -> f64 {
        match self {
            ClusterGeometry::Plaquette => 0.5,
            ClusterGeometry::Cube => 0.25,
        }
    }
}

/// A cluster with its coupling assignment and exchange anisotropy.
#[derive(Debug, Clone)]
pub struct ClusterInstance {
    pub geometry: ClusterGeometry,
    pub couplings: Vec<f64>,
    /// `(a_x, a_y, a_z)`; the classical Ising case is `(0, 0, a_z)`.
    pub anisotropy: [f64; 3],
}

impl ClusterInstance {
    pub fn classical(geometry: ClusterGeometry, couplings: Vec<f64>) -> Result<Self> {
        Self::new(geometry, couplings, [0.0, 0.0, 1.0])
    }

    pub fn new(geometry: ClusterGeometry, couplings: Vec<f64>, anisotropy: [f64; 3]) -> Result<Self> {
        if couplings.len() != geometry.bonds().len() {
            return Err(Error::Config(format!(
                "{:?} needs {} couplings, got {}",
                geometry,
                geometry.bonds().len(),
                couplings.len()
            )));
        }
        Ok(Self {
            geometry,
            couplings,
            anisotropy,
        })
    }

    pub fn is_classical(&self) -> bool {
        self.anisotropy[0] == 0.0 && self.anisotropy[1] == 0.0
    }
}

/// Ising configuration as a bit vector (bit = 1 means spin down).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SpinConfiguration {
    pub bits: u32,
    pub len: usize,
}

impl SpinConfiguration {
    pub fn spin(&self, site: usize) -> i8 {
        if self.bits >> site & 1 == 1 {
            -1
        } else {
            1
        }
    }
}

/// Ground-state result of one cluster.
#[derive(Debug, Clone, Serialize)]
pub struct GroundState {
    pub energy: f64,
    /// Classical minimizers with the first spin fixed to +1 (each stands for
    /// a global-flip pair); empty in quantum mode.
    pub minimizers: Vec<SpinConfiguration>,
    pub quantum: bool,
}

fn classical_cluster_energy(bonds: &[(usize, usize)], couplings: &[f64], bits: u32) -> f64 {
    let mut e = 0.0;
    for (b, &(i, j)) in bonds.iter().enumerate() {
        let si = 1 - 2 * ((bits >> i & 1) as i32);
        let sj = 1 - 2 * ((bits >> j & 1) as i32);
        e += couplings[b] * (si * sj) as f64;
    }
    e
}

/// Exhaustive ground state. Classical mode enumerates `2^(sites-1)` Ising
/// configurations (the first spin is fixed: global flips change nothing) and
/// returns all minimizers; quantum mode diagonalizes the dense
/// `2^sites`-dimensional coupling matrix and returns its lowest eigenvalue.
pub fn cluster_ground_state(cluster: &ClusterInstance) -> Result<GroundState> {
    let n = cluster.geometry.sites();
    let bonds = cluster.geometry.bonds();
    if cluster.is_classical() {
        let az = cluster.anisotropy[2];
        let mut best = f64::INFINITY;
        let mut minimizers = Vec::new();
        for half in 0..(1u32 << (n - 1)) {
            let bits = half << 1; // site 0 fixed to +1
            let e = az * classical_cluster_energy(bonds, &cluster.couplings, bits);
            if e < best {
                best = e;
                minimizers.clear();
                minimizers.push(SpinConfiguration { bits, len: n });
            } else if e == best {
                minimizers.push(SpinConfiguration { bits, len: n });
            }
        }
        Ok(GroundState {
            energy: best,
            minimizers,
            quantum: false,
        })
    } else {
        let h = quantum_cluster_matrix(cluster);
        let eigen = crate::linalg::sym_eigen_dense(&h);
        Ok(GroundState {
            energy: eigen.values[0],
            minimizers: Vec::new(),
            quantum: true,
        })
    }
}

/// Dense matrix of `sum_b J_b (a_x XX + a_y YY + a_z ZZ)` in the z-basis.
/// All three two-site couplings are real, so the matrix is real symmetric.
pub fn quantum_cluster_matrix(cluster: &ClusterInstance) -> DMatrix<f64> {
    let n = cluster.geometry.sites();
    let dim = 1usize << n;
    let [ax, ay, az] = cluster.anisotropy;
    let mut h = DMatrix::zeros(dim, dim);
    for (b, &(i, j)) in cluster.geometry.bonds().iter().enumerate() {
        let jb = cluster.couplings[b];
        for s in 0..dim {
            let si = 1.0 - 2.0 * ((s >> i & 1) as f64);
            let sj = 1.0 - 2.0 * ((s >> j & 1) as f64);
            // ZZ: diagonal
            h[(s, s)] += jb * az * si * sj;
            // XX: flips both spins
            let flipped = s ^ (1 << i) ^ (1 << j);
            h[(flipped, s)] += jb * ax;
            // YY: flips both, sign -s_i s_j
            h[(flipped, s)] += -jb * ay * si * sj;
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AverageMode {
    /// Exact average over every coupling sign/value pattern (discrete laws
    /// only).
    Exhaustive,
    /// Monte Carlo over realizations.
    MonteCarlo { n_samples: u64 },
}

/// Disorder-averaged cluster ground-state energy.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterAverage {
    pub value: f64,
    pub std_error: Option<f64>,
    pub n_patterns: u64,
    /// Sum of all pattern minima as an exact integer, available when the
    /// couplings are `±scale` and energies are integer multiples of the
    /// scale (Bernoulli with the anisotropy fixed to a_z = 1).
    pub checksum: Option<i64>,
}

/// `Av(E_0)` over the coupling law, exhaustively for discrete laws or by
/// Monte Carlo.
pub fn average_cluster_energy(
    geometry: ClusterGeometry,
    dist: &DistributionSpec,
    mode: AverageMode,
    seed: RealizationSeed,
) -> Result<ClusterAverage> {
    let n_bonds = geometry.bonds().len();
    match mode {
        AverageMode::Exhaustive => {
            let values: Vec<f64> = match &dist.law {
                Law::Bernoulli => vec![-dist.scale, dist.scale],
                Law::Tabulated(vs) => vs.clone(),
                _ => {
                    return Err(Error::Unsupported(format!(
                        "exhaustive averaging needs a discrete law, got {}",
                        dist.law.name()
                    )))
                }
            };
            let k = values.len() as u64;
            let n_patterns = k
                .checked_pow(n_bonds as u32)
                .filter(|&n| n <= 1 << 24)
                .ok_or_else(|| {
                    Error::Size(format!("{k}^{n_bonds} patterns exceed the enumeration cap"))
                })?;
            // integer-exact accumulation in units of the scale when possible
            let scale = dist.scale;
            let totals: Vec<(f64, Option<i64>)> = (0..n_patterns)
                .into_par_iter()
                .map(|pattern| {
                    let mut couplings = Vec::with_capacity(n_bonds);
                    let mut p = pattern;
                    for _ in 0..n_bonds {
                        couplings.push(values[(p % k) as usize]);
                        p /= k;
                    }
                    let cluster = ClusterInstance::classical(geometry, couplings).unwrap();
                    let gs = cluster_ground_state(&cluster).unwrap();
                    let ratio = gs.energy / scale;
                    let int = if (ratio - ratio.round()).abs() < 1e-9 {
                        Some(ratio.round() as i64)
                    } else {
                        None
                    };
                    (gs.energy, int)
                })
                .collect();
            let energies: Vec<f64> = totals.iter().map(|&(e, _)| e).collect();
            let checksum = totals
                .iter()
                .map(|&(_, i)| i)
                .try_fold(0i64, |acc, i| i.map(|v| acc + v));
            Ok(ClusterAverage {
                value: pairwise_sum(&energies) / n_patterns as f64,
                std_error: None,
                n_patterns,
                checksum,
            })
        }
        AverageMode::MonteCarlo { n_samples } => {
            let est: MonteCarloEstimate = crate::disorder::average(
                |rng| {
                    let couplings: Vec<f64> = (0..n_bonds).map(|_| dist.sample(rng)).collect();
                    let cluster = ClusterInstance::classical(geometry, couplings)?;
                    Ok(cluster_ground_state(&cluster)?.energy)
                },
                n_samples,
                seed,
            )?;
            Ok(ClusterAverage {
                value: est.mean,
                std_error: Some(est.std_error),
                n_patterns: n_samples,
                checksum: None,
            })
        }
    }
}

/// Per-site lower bound on the ground-state energy density:
/// `c_d * Av(E_0^{(d)})` with `c_2 = 1/2`, `c_3 = 1/4`.
pub fn lower_bound_e(d: usize, dist: &DistributionSpec, seed: RealizationSeed) -> Result<f64> {
    let geometry = match d {
        2 => ClusterGeometry::Plaquette,
        3 => ClusterGeometry::Cube,
        other => return Err(Error::Unsupported(format!("no cluster tiling for d = {other}"))),
    };
    let mode = match dist.law {
        Law::Bernoulli | Law::Tabulated(_) => AverageMode::Exhaustive,
        _ => AverageMode::MonteCarlo { n_samples: 200_000 },
    };
    let avg = average_cluster_energy(geometry, dist, mode, seed)?;
    Ok(geometry.counting_factor() * avg.value)
}

/// Sign product of the four plaquette couplings: -1 marks frustration.
pub fn frustration_indicator(couplings: &[f64; 4]) -> Result<i8> {
    let mut sign = 1i8;
    for &j in couplings {
        if j == 0.0 {
            return Err(Error::Domain("zero coupling leaves frustration undefined".into()));
        }
        if j < 0.0 {
            sign = -sign;
        }
    }
    Ok(sign)
}

/// Nearest-neighbor coupling assignment on a d-dimensional box.
///
/// Bonds are enumerated site-major, axis-minor: for each site in
/// lexicographic order, its +x, +y (and +z) bonds follow, wrapping under
/// periodic boundaries and skipped at free ones.
#[derive(Debug, Clone)]
pub struct LatticeInstance {
    pub d: usize,
    pub side: usize,
    pub periodic: bool,
    pub couplings: Vec<f64>,
    bonds: Vec<(usize, usize)>,
}

impl LatticeInstance {
    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    pub fn sites(&self) -> usize {
        self.side.pow(self.d as u32)
    }

    fn bond_list(d: usize, side: usize, periodic: bool) -> Vec<(usize, usize)> {
        let n = side.pow(d as u32);
        let decode = |site: usize| -> Vec<usize> {
            let mut s = site;
            let mut idx = vec![0usize; d];
            for k in (0..d).rev() {
                idx[k] = s % side;
                s /= side;
            }
            idx
        };
        let encode = |idx: &[usize]| -> usize {
            let mut s = 0usize;
            for &i in idx {
                s = s * side + i;
            }
            s
        };
        let mut bonds = Vec::new();
        for site in 0..n {
            let idx = decode(site);
            for axis in 0..d {
                let mut nb = idx.clone();
                if idx[axis] + 1 < side {
                    nb[axis] += 1;
                } else if periodic {
                    nb[axis] = 0;
                } else {
                    continue;
                }
                let other = encode(&nb);
                if other != site {
                    bonds.push((site, other));
                }
            }
        }
        bonds
    }

    /// Draw couplings from `dist` in canonical bond order.
    pub fn sample(
        d: usize,
        side: usize,
        periodic: bool,
        dist: &DistributionSpec,
        seed: RealizationSeed,
    ) -> Result<Self> {
        if !(d == 2 || d == 3) {
            return Err(Error::Unsupported(format!("d must be 2 or 3, got {d}")));
        }
        if side < 2 {
            return Err(Error::Domain("side must be >= 2".into()));
        }
        let bonds = Self::bond_list(d, side, periodic);
        let mut rng = seed.rng();
        let couplings = (0..bonds.len()).map(|_| dist.sample(&mut rng)).collect();
        Ok(Self {
            d,
            side,
            periodic,
            couplings,
            bonds,
        })
    }

    pub fn with_couplings(
        d: usize,
        side: usize,
        periodic: bool,
        couplings: Vec<f64>,
    ) -> Result<Self> {
        let bonds = Self::bond_list(d, side, periodic);
        if couplings.len() != bonds.len() {
            return Err(Error::Config(format!(
                "lattice has {} bonds, got {} couplings",
                bonds.len(),
                couplings.len()
            )));
        }
        Ok(Self {
            d,
            side,
            periodic,
            couplings,
            bonds,
        })
    }
}

/// Flip every coupling incident to `site` (the coupling half of the local
/// gauge transformation; paired with the spin flip it leaves all energies
/// invariant).
pub fn gauge_transform(lattice: &LatticeInstance, site: usize) -> LatticeInstance {
    let mut out = lattice.clone();
    for (b, &(i, j)) in lattice.bonds.iter().enumerate() {
        if i == site || j == site {
            out.couplings[b] = -out.couplings[b];
        }
    }
    out
}

/// Cluster version of the gauge flip.
pub fn gauge_transform_cluster(cluster: &ClusterInstance, site: usize) -> ClusterInstance {
    let mut out = cluster.clone();
    for (b, &(i, j)) in cluster.geometry.bonds().iter().enumerate() {
        if i == site || j == site {
            out.couplings[b] = -out.couplings[b];
        }
    }
    out
}

/// Misfit `m = (|E_ideal| - |E_0|) / |E_ideal|` of per-site energies.
pub fn misfit(e0_per_site: f64, e_ideal_per_site: f64) -> Result<f64> {
    if e_ideal_per_site == 0.0 {
        return Err(Error::Domain("ideal reference energy must be nonzero".into()));
    }
    Ok((e_ideal_per_site.abs() - e0_per_site.abs()) / e_ideal_per_site.abs())
}

/// Exact lattice ground state.
#[derive(Debug, Clone, Serialize)]
pub struct LatticeGroundState {
    pub energy: f64,
    pub per_site: f64,
    pub configuration: SpinConfiguration,
}

/// Exhaustive classical ground state of a finite lattice. Gray-code
/// enumeration with incremental energy updates; rejected beyond 24 sites.
pub fn finite_lattice_ground_state(lattice: &LatticeInstance) -> Result<LatticeGroundState> {
    let n = lattice.sites();
    if n > 24 {
        return Err(Error::Size(format!(
            "exhaustive enumeration capped at 24 sites, lattice has {n}"
        )));
    }
    // incident bonds per site for O(degree) flip updates
    let mut incident: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (b, &(i, j)) in lattice.bonds.iter().enumerate() {
        incident[i].push((b, j));
        incident[j].push((b, i));
    }
    let mut spins = vec![1i8; n];
    let mut energy: f64 = lattice.couplings.iter().sum();
    let mut best = energy;
    let mut best_bits = 0u32;
    let mut bits = 0u32;
    // first site fixed: enumerate the remaining n-1 in Gray order
    let steps = 1u64 << (n - 1);
    for g in 1..steps {
        let flip = g.trailing_zeros() as usize + 1;
        bits ^= 1 << flip;
        // flipping one spin re-signs its incident bond terms
        let mut delta = 0.0;
        for &(b, other) in &incident[flip] {
            delta -= 2.0 * lattice.couplings[b] * (spins[flip] * spins[other]) as f64;
        }
        spins[flip] = -spins[flip];
        energy += delta;
        if energy < best {
            best = energy;
            best_bits = bits;
        }
    }
    Ok(LatticeGroundState {
        energy: best,
        per_site: best / n as f64,
        configuration: SpinConfiguration {
            bits: best_bits,
            len: n,
        },
    })
}

/// Free energy per site of a free-boundary Ising chain with couplings `J_b`:
/// the bond variables decouple, so `Z = 2 prod_b 2 cosh(J_b / kT)` exactly.
///
/// Note that this depends on the couplings only through `|J_b|`: open chains
/// are gauge-trivial, so sign disorder (Bernoulli) leaves f deterministic.
pub fn chain_free_energy(couplings: &[f64], k_t: f64) -> f64 {
    let n = couplings.len() + 1;
    let beta = 1.0 / k_t;
    let terms: Vec<f64> = couplings
        .iter()
        .map(|&j| (2.0 * (beta * j).cosh()).ln())
        .collect();
    -k_t * (std::f64::consts::LN_2 + pairwise_sum(&terms)) / n as f64
}

/// Free energy per site of a periodic Ising ring with `n` couplings:
/// `Z = prod_b 2 cosh(beta J_b) + prod_b 2 sinh(beta J_b)`, so the loop sign
/// product survives and sign disorder is felt (the gauge-invariant
/// frustration of the ring).
pub fn ring_free_energy(couplings: &[f64], k_t: f64) -> f64 {
    let n = couplings.len();
    assert!(n >= 2, "a ring needs at least two bonds");
    let beta = 1.0 / k_t;
    let log_cosh: Vec<f64> = couplings
        .iter()
        .map(|&j| (2.0 * (beta * j).cosh()).ln())
        .collect();
    let lc = pairwise_sum(&log_cosh);
    // prod tanh = sign * exp(sum ln |tanh|)
    let mut sign = 1.0f64;
    let log_tanh: Vec<f64> = couplings
        .iter()
        .map(|&j| {
            let t = (beta * j).tanh();
            if t < 0.0 {
                sign = -sign;
            }
            t.abs().max(f64::MIN_POSITIVE).ln()
        })
        .collect();
    let tanh_prod = sign * pairwise_sum(&log_tanh).exp();
    -k_t * (lc + (1.0 + tanh_prod).ln()) / n as f64
}

/// Exhaustive free energy per site of a finite lattice (capped at 24 sites).
pub fn lattice_free_energy(lattice: &LatticeInstance, k_t: f64) -> Result<f64> {
    let n = lattice.sites();
    if n > 24 {
        return Err(Error::Size(format!(
            "exhaustive partition function capped at 24 sites, lattice has {n}"
        )));
    }
    let beta = 1.0 / k_t;
    // sum exp(-beta E) over all configurations, Gray-code incremental
    let mut incident: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (b, &(i, j)) in lattice.bonds.iter().enumerate() {
        incident[i].push((b, j));
        incident[j].push((b, i));
    }
    let mut spins = vec![1i8; n];
    let mut energy: f64 = lattice.couplings.iter().sum();
    // factor exp(-beta*E0) pulled out for overflow safety
    let e_ref = energy;
    let mut z_scaled = 1.0f64;
    let steps = 1u64 << n;
    for g in 1..steps {
        let flip = g.trailing_zeros() as usize;
        let mut delta = 0.0;
        for &(b, other) in &incident[flip] {
            delta -= 2.0 * lattice.couplings[b] * (spins[flip] * spins[other]) as f64;
        }
        spins[flip] = -spins[flip];
        energy += delta;
        z_scaled += (-beta * (energy - e_ref)).exp();
    }
    Ok(-k_t * (z_scaled.ln() - beta * e_ref) / n as f64)
}

/// Variance of the per-site free energy across disorder realizations, per
/// ring length: the self-averaging signature (variance shrinks with n).
///
/// Rings rather than open chains: an open chain's free energy is
/// gauge-trivial and for sign disorder literally deterministic, so only the
/// ring's frustration sign gives the variance something to average away.
pub fn chain_self_averaging(
    lengths: &[usize],
    n_realizations: u64,
    dist: &DistributionSpec,
    k_t: f64,
    seed: RealizationSeed,
) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::with_capacity(lengths.len());
    for (li, &n) in lengths.iter().enumerate() {
        if n < 2 {
            return Err(Error::Domain("chain length must be >= 2".into()));
        }
        let values: Vec<f64> = (0..n_realizations)
            .into_par_iter()
            .map(|r| {
                let mut rng = seed
                    .with_index(seed.realization_index + ((li as u64) << 32) + r)
                    .rng();
                let couplings: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
                ring_free_energy(&couplings, k_t)
            })
            .collect();
        let (mean, _) = mean_and_std_error(&values);
        let sq: Vec<f64> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
        let var = pairwise_sum(&sq) / (values.len() as f64 - 1.0);
        out.push((n, var));
    }
    Ok(out)
}

/// Thermodynamic-stability constant: `f >= -c` with
/// `c = kT ln 2 + (bonds per site) * scale` for bounded couplings.
pub fn stability_constant(dist: &DistributionSpec, bonds_per_site: f64, k_t: f64) -> Option<f64> {
    if dist.bounded() {
        Some(k_t * std::f64::consts::LN_2 + bonds_per_site * dist.scale)
    } else {
        None
    }
}
