//! Bethe-lattice model: population dynamics for the rooted-subtree Green's
//! function, Lyapunov exponent, free-energy function, extended-states
//! criteria, and tree transport profiles.
//!
//! The recursion is the standard cavity step
//! `g = 1/(lambda V - zeta - sum_{K children} g_child)`, which preserves the
//! Herglotz property `Im g > 0` whenever `Im zeta > 0`. A population (pool)
//! of samples stands in for the distribution of the infinite-tree cavity
//! Green's function; `G(0, x)` along a path factorizes into a chain of cavity
//! factors, which is exact on trees.
//!
//! The root of the tree can be given `K+1` neighbors (every vertex looks the
//! same, `RootMode::FullDegree`) or `K` (a rooted tree,
//! `RootMode::Rooted`). Decay-rate estimators (Lyapunov, free energy) use the
//! rooted convention, where the closed free-case forms like
//! `|g| = 1/sqrt(K)` at band center hold per step; density-of-states style
//! readouts default to the full degree.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::disorder::{DistributionSpec, RealizationSeed};
use crate::error::{Error, Result};
use crate::numeric::{linear_fit, mean_and_std_error, pairwise_sum};

/// Bethe-lattice Anderson model parameters.
#[derive(Debug, Clone)]
pub struct BetheModelSpec {
    /// Branching number `K >= 2`; non-root vertices have `K+1` neighbors.
    pub branching: u32,
    /// Disorder strength multiplying the potential draws.
    pub lambda: f64,
    /// Potential law; the default model uses the uniform density 1/2 on
    /// [-1, 1].
    pub disorder: DistributionSpec,
    /// Moment exponent bounding the free-energy domain `s in [-kappa, 2]`.
    pub kappa: f64,
}

impl BetheModelSpec {
    pub fn uniform(branching: u32, lambda: f64) -> Self {
        Self {
            branching,
            lambda,
            disorder: DistributionSpec::uniform(1.0),
            kappa: 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.branching < 2 {
            return Err(Error::Domain("branching K must be >= 2".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Domain("lambda must be >= 0".into()));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::Domain("kappa must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Edge of the almost-sure spectrum, `2 sqrt(K) + lambda` for potentials
    /// bounded by 1.
    pub fn spectrum_edge(&self) -> f64 {
        2.0 * (self.branching as f64).sqrt() + self.lambda * self.disorder.scale
    }

    /// Disorder threshold `(sqrt(K) - 1)^2 / 2` of the weak-disorder
    /// edge-delocalization regime.
    pub fn delta_k(&self) -> f64 {
        let s = (self.branching as f64).sqrt() - 1.0;
        s * s / 2.0
    }
}

/// Root connectivity convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RootMode {
    /// Root has `K+1` subtrees (homogeneous graph).
    FullDegree,
    /// Root has `K` subtrees (rooted tree); per-step closed forms hold.
    Rooted,
}

/// Population of rooted-subtree Green's samples at fixed `zeta`.
#[derive(Debug, Clone)]
pub struct TreeGreenEnsemble {
    pub pool: Vec<Complex64>,
    pub zeta: Complex64,
    pub generation: u32,
}

impl TreeGreenEnsemble {
    /// Fresh pool at `i` (trivially Herglotz).
    pub fn init(zeta: Complex64, pool_size: usize) -> Result<Self> {
        if zeta.im <= 0.0 {
            return Err(Error::Domain("Im zeta must be > 0".into()));
        }
        if pool_size == 0 {
            return Err(Error::Domain("pool must be nonempty".into()));
        }
        Ok(Self {
            pool: vec![Complex64::new(0.0, 1.0); pool_size],
            zeta,
            generation: 0,
        })
    }

    pub fn mean(&self) -> Complex64 {
        crate::numeric::pairwise_sum_complex(&self.pool) / self.pool.len() as f64
    }

    pub fn mean_log_abs(&self) -> f64 {
        let logs: Vec<f64> = self.pool.iter().map(|g| g.norm().ln()).collect();
        pairwise_sum(&logs) / logs.len() as f64
    }
}

/// Free-tree fixed point of `K g^2 + zeta g + 1 = 0`, Herglotz branch.
pub fn free_fixed_point(branching: u32, zeta: Complex64) -> Complex64 {
    let k = branching as f64;
    let disc = (zeta * zeta - 4.0 * k).sqrt();
    let g1 = (-zeta + disc) / (2.0 * k);
    let g2 = (-zeta - disc) / (2.0 * k);
    if g1.im > 0.0 {
        g1
    } else {
        g2
    }
}

fn sample_rng(master_seed: u64, generation: u32, slot: u64) -> rand_chacha::ChaCha8Rng {
    RealizationSeed::new(master_seed, ((generation as u64) << 34) | slot).rng()
}

/// One synchronous population update: every new sample combines `K`
/// resampled pool members with a fresh potential draw. Pure in the inputs;
/// sample `i` of generation `g` owns its own stream, so the update is
/// deterministic for any worker count.
pub fn green_recursion_step(
    ensemble: &TreeGreenEnsemble,
    spec: &BetheModelSpec,
    master_seed: u64,
) -> Result<TreeGreenEnsemble> {
    spec.validate()?;
    if ensemble.zeta.im <= 0.0 {
        return Err(Error::Domain("Im zeta must be > 0".into()));
    }
    let k = spec.branching as usize;
    let p = ensemble.pool.len();
    let pool: Vec<Complex64> = (0..p)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(master_seed, ensemble.generation, i as u64);
            let mut children = Complex64::new(0.0, 0.0);
            for _ in 0..k {
                use rand::Rng;
                children += ensemble.pool[rng.random_range(0..p)];
            }
            let v = spec.lambda * spec.disorder.sample(&mut rng);
            Complex64::new(1.0, 0.0) / (Complex64::new(v, 0.0) - ensemble.zeta - children)
        })
        .collect();
    if let Some(bad) = pool.iter().find(|g| !(g.im > 0.0)) {
        return Err(Error::Convergence(format!(
            "Herglotz property violated: sample {bad} has Im <= 0"
        )));
    }
    Ok(TreeGreenEnsemble {
        pool,
        zeta: ensemble.zeta,
        generation: ensemble.generation + 1,
    })
}

/// Pool-size / generation controls for population dynamics.
///
/// Inside the band the cavity map is only neutrally stable at small
/// `Im zeta` (the linearization has modulus `K |g|^2 -> 1`), so individual
/// orbits spiral in at rate O(eta) while rotating fast; block averages of the
/// pool mean cancel the rotation, and equilibration runs until consecutive
/// block means satisfy a Cauchy criterion rather than for a fixed count.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PopulationControls {
    pub pool_size: usize,
    /// Floor on the number of burn-in generations.
    pub min_generations: u32,
    /// Cap; hitting it without stabilizing is a convergence error.
    pub max_generations: u32,
    /// Block length for the Cauchy test.
    pub block: u32,
    /// Generations averaged in readouts after equilibration.
    pub readout: u32,
    /// Deterministic part of the Cauchy tolerance (the statistical part is
    /// estimated from the pool width).
    pub mean_tolerance: f64,
}

impl Default for PopulationControls {
    fn default() -> Self {
        Self {
            pool_size: 10_000,
            min_generations: 200,
            max_generations: 30_000,
            block: 20,
            readout: 100,
            mean_tolerance: 5e-5,
        }
    }
}

impl PopulationControls {
    /// Smaller pools for cheap unit-scale runs.
    pub fn fast() -> Self {
        Self {
            pool_size: 2000,
            min_generations: 100,
            readout: 40,
            ..Self::default()
        }
    }
}

/// Convergence diagnostics of the burn-in phase.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceDiag {
    pub drift: f64,
    pub tolerance: f64,
    pub generations: u32,
}

/// Run the burn-in until the block-averaged pool mean stabilizes.
///
/// Near the real axis the deterministic orbit contracts geometrically with
/// ratio `r = 1 - O(eta)` per block, so the drift between consecutive block
/// means underestimates the remaining bias by the factor `r/(1-r)`. The
/// stopping rule therefore extrapolates the geometric tail: converged when
/// `drift * r/(1-r)` (or the drift itself when the ratio is not geometric,
/// as for stochastic pools) falls below the tolerance.
pub fn equilibrate(
    spec: &BetheModelSpec,
    zeta: Complex64,
    controls: &PopulationControls,
    master_seed: u64,
) -> Result<(TreeGreenEnsemble, ConvergenceDiag)> {
    spec.validate()?;
    let mut ens = TreeGreenEnsemble::init(zeta, controls.pool_size)?;
    let block = controls.block.max(2);
    let mut prev_block_mean: Option<Complex64> = None;
    let mut prev_drift: Option<f64> = None;
    let mut bias_estimate = f64::INFINITY;
    let mut tolerance = controls.mean_tolerance;
    while ens.generation < controls.max_generations {
        let mut acc = Complex64::new(0.0, 0.0);
        for _ in 0..block {
            ens = green_recursion_step(&ens, spec, master_seed)?;
            acc += ens.mean();
        }
        let block_mean = acc / block as f64;
        // pool width sets the statistical floor of the drift between blocks
        let m = ens.mean();
        let spread: Vec<f64> = ens.pool.iter().map(|g| (g - m).norm_sqr()).collect();
        let pool_std = (pairwise_sum(&spread) / spread.len() as f64).sqrt();
        tolerance = controls
            .mean_tolerance
            .max(4.0 * pool_std / ((controls.pool_size as f64) * block as f64).sqrt());
        if let Some(prev) = prev_block_mean {
            let drift = (block_mean - prev).norm();
            let ratio = prev_drift.map(|p| if p > 0.0 { drift / p } else { 0.0 });
            bias_estimate = match ratio {
                Some(r) if r > 0.0 && r < 0.999 => drift * r / (1.0 - r),
                Some(r) if r >= 0.999 => f64::INFINITY,
                _ => drift,
            }
            .max(drift);
            if bias_estimate <= tolerance && ens.generation >= controls.min_generations {
                let diag = ConvergenceDiag {
                    drift: bias_estimate,
                    tolerance,
                    generations: ens.generation,
                };
                return Ok((ens, diag));
            }
            prev_drift = Some(drift);
        }
        prev_block_mean = Some(block_mean);
    }
    Err(Error::Convergence(format!(
        "pool mean still drifting after {} generations: bias estimate {bias_estimate:.3e} > tol {tolerance:.3e} at zeta {zeta}",
        ens.generation
    )))
}

/// Readout-averaged pool statistics (the cavity Green's function itself).
#[derive(Debug, Clone, Serialize)]
pub struct PoolStats {
    pub mean_re: f64,
    pub mean_im: f64,
    pub mean_log_abs: f64,
    pub convergence: ConvergenceDiag,
}

/// Equilibrate and average the pool mean and `Av log|g|` over the readout
/// generations (the generation average cancels the residual orbit rotation).
pub fn pool_statistics(
    spec: &BetheModelSpec,
    zeta: Complex64,
    controls: &PopulationControls,
    master_seed: u64,
) -> Result<PoolStats> {
    let (mut ens, convergence) = equilibrate(spec, zeta, controls, master_seed)?;
    let mut means = Vec::with_capacity(controls.readout as usize);
    let mut logs = Vec::with_capacity(controls.readout as usize);
    for _ in 0..controls.readout {
        ens = green_recursion_step(&ens, spec, master_seed)?;
        means.push(ens.mean());
        logs.push(ens.mean_log_abs());
    }
    let mean = means.iter().sum::<Complex64>() / means.len() as f64;
    Ok(PoolStats {
        mean_re: mean.re,
        mean_im: mean.im,
        mean_log_abs: pairwise_sum(&logs) / logs.len() as f64,
        convergence,
    })
}

/// Root Green's function statistics.
#[derive(Debug, Clone, Serialize)]
pub struct RootGreenStats {
    pub mean_re: f64,
    pub mean_im: f64,
    pub median_im: f64,
    /// Fraction of root samples with `Im G` above the detection threshold.
    pub im_positive_fraction: f64,
    pub im_threshold: f64,
    /// Spectral density estimate `median(Im G)/pi`.
    pub ac_density: f64,
    pub n_samples: usize,
    pub root_mode: RootMode,
    pub convergence: ConvergenceDiag,
}

/// Threshold used for the Im-positivity fraction: at readout width `eta` the
/// localized phase produces `Im G = O(eta)` while the a.c. phase keeps
/// `Im G = O(1)`, so a fixed small cut separates them.
pub const IM_POSITIVE_THRESHOLD: f64 = 0.01;

/// Combine pool samples into root Green's samples and report their
/// distribution.
pub fn root_green(
    spec: &BetheModelSpec,
    zeta: Complex64,
    controls: &PopulationControls,
    root_mode: RootMode,
    master_seed: u64,
) -> Result<RootGreenStats> {
    let (mut ens, convergence) = equilibrate(spec, zeta, controls, master_seed)?;
    let subtrees = match root_mode {
        RootMode::FullDegree => spec.branching as usize + 1,
        RootMode::Rooted => spec.branching as usize,
    };
    let p = ens.pool.len();
    let mut samples: Vec<Complex64> = Vec::with_capacity(p * controls.readout as usize);
    for _ in 0..controls.readout {
        ens = green_recursion_step(&ens, spec, master_seed)?;
        let gen = ens.generation;
        let batch: Vec<Complex64> = (0..p)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(master_seed ^ 0x726F6F74, gen, i as u64);
                let mut children = Complex64::new(0.0, 0.0);
                for _ in 0..subtrees {
                    use rand::Rng;
                    children += ens.pool[rng.random_range(0..p)];
                }
                let v = spec.lambda * spec.disorder.sample(&mut rng);
                Complex64::new(1.0, 0.0) / (Complex64::new(v, 0.0) - zeta - children)
            })
            .collect();
        samples.extend(batch);
    }
    let res: Vec<f64> = samples.iter().map(|g| g.re).collect();
    let ims: Vec<f64> = samples.iter().map(|g| g.im).collect();
    let mean_re = pairwise_sum(&res) / res.len() as f64;
    let mean_im = pairwise_sum(&ims) / ims.len() as f64;
    let mut sorted = ims.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_im = sorted[sorted.len() / 2];
    let above = ims.iter().filter(|&&x| x > IM_POSITIVE_THRESHOLD).count();
    Ok(RootGreenStats {
        mean_re,
        mean_im,
        median_im,
        im_positive_fraction: above as f64 / ims.len() as f64,
        im_threshold: IM_POSITIVE_THRESHOLD,
        ac_density: median_im / std::f64::consts::PI,
        n_samples: ims.len(),
        root_mode,
        convergence,
    })
}

/// Lyapunov exponent estimate with its eta-extrapolation trace and the
/// path-decay cross-check.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovEstimate {
    /// Intercept of the linear eta-fit of `-Av(log |g|)`.
    pub value: f64,
    pub per_eta: Vec<(f64, f64)>,
    /// Decay rate of `Av(log |G(0,x)|)` against path length at the smallest
    /// eta; agrees with `value` because the cavity chain is stationary.
    pub path_slope: f64,
}

/// `-Av(log|G(0,0;E+i eta)|)` extrapolated to the real axis along a
/// decreasing eta grid (rooted convention, so the estimate is the per-step
/// decay rate of the tree Green's function).
pub fn lyapunov_exponent(
    spec: &BetheModelSpec,
    energy: f64,
    eta_grid: &[f64],
    controls: &PopulationControls,
    master_seed: u64,
) -> Result<LyapunovEstimate> {
    spec.validate()?;
    if eta_grid.len() < 2 || eta_grid.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Domain(
            "eta grid must be strictly decreasing with >= 2 entries".into(),
        ));
    }
    let mut per_eta = Vec::new();
    let mut smallest: Option<TreeGreenEnsemble> = None;
    for &eta in eta_grid {
        let zeta = Complex64::new(energy, eta);
        let (mut ens, _) = equilibrate(spec, zeta, controls, master_seed)?;
        let mut acc = Vec::with_capacity(controls.readout as usize);
        for _ in 0..controls.readout {
            ens = green_recursion_step(&ens, spec, master_seed)?;
            acc.push(ens.mean_log_abs());
        }
        per_eta.push((eta, -pairwise_sum(&acc) / acc.len() as f64));
        smallest = Some(ens);
    }
    let xs: Vec<f64> = per_eta.iter().map(|&(e, _)| e).collect();
    let ys: Vec<f64> = per_eta.iter().map(|&(_, l)| l).collect();
    let value = linear_fit(&xs, &ys)?.intercept;

    // cross-check: decay of Av(log|G(0,x)|) along sampled paths
    let ens = smallest.unwrap();
    let x_max = 12usize;
    let n_paths = 4000usize;
    let chains = sample_path_logs(
        spec,
        ens,
        controls.readout,
        x_max,
        n_paths,
        RootMode::Rooted,
        master_seed ^ 0x70617468,
    )?;
    let mut avg_per_x = Vec::with_capacity(x_max);
    for x in 1..=x_max {
        let vals: Vec<f64> = chains.iter().map(|c| c[x]).collect();
        avg_per_x.push(pairwise_sum(&vals) / vals.len() as f64);
    }
    let xs: Vec<f64> = (1..=x_max).map(|x| x as f64).collect();
    let path_slope = -linear_fit(&xs, &avg_per_x)?.slope;
    Ok(LyapunovEstimate {
        value,
        per_eta,
        path_slope,
    })
}

/// For each path sample, `log|G(0,x)|` for `x = 0..=x_max` (index 0 holds the
/// root factor). Paths are built backward from a pool draw through the
/// stationary cavity chain: each step combines `K-1` fresh pool draws, a
/// fresh potential, and the previous chain element; the root adds `K-1`
/// (rooted) or `K` (full-degree) extra pool draws.
///
/// Path batches are spread across `gens` pool generations: near the real
/// axis the pool mean carries a slowly-decaying rotation (a 2-cycle at band
/// center), and only generation averages cancel it.
fn sample_path_logs(
    spec: &BetheModelSpec,
    mut ens: TreeGreenEnsemble,
    gens: u32,
    x_max: usize,
    n_paths: usize,
    root_mode: RootMode,
    master_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let k = spec.branching as usize;
    let root_extra = match root_mode {
        RootMode::FullDegree => k,
        RootMode::Rooted => k - 1,
    };
    let p = ens.pool.len();
    let zeta = ens.zeta;
    let gens = gens.max(1);
    let per_gen = n_paths.div_ceil(gens as usize);
    let mut chains: Vec<Vec<f64>> = Vec::with_capacity(n_paths);
    for _ in 0..gens {
        ens = green_recursion_step(&ens, spec, master_seed)?;
        let pool = &ens.pool;
        let generation = ens.generation;
        let batch = per_gen.min(n_paths - chains.len());
        let mut new: Vec<Vec<f64>> = (0..batch)
            .into_par_iter()
            .map(|i| {
                use rand::Rng;
                let mut rng = sample_rng(master_seed ^ 0x636861696E, generation, i as u64);
                // cavity factors g^{(x_max)} .. g^{(1)}
                let mut factors = vec![Complex64::new(0.0, 0.0); x_max + 1];
                let mut g_path = pool[rng.random_range(0..p)];
                for x in (1..=x_max).rev() {
                    factors[x] = g_path;
                    let mut children = g_path;
                    for _ in 0..k - 1 {
                        children += pool[rng.random_range(0..p)];
                    }
                    let v = spec.lambda * spec.disorder.sample(&mut rng);
                    g_path = Complex64::new(1.0, 0.0) / (Complex64::new(v, 0.0) - zeta - children);
                }
                // root vertex
                let mut children = g_path;
                for _ in 0..root_extra {
                    children += pool[rng.random_range(0..p)];
                }
                let v = spec.lambda * spec.disorder.sample(&mut rng);
                let g_root =
                    Complex64::new(1.0, 0.0) / (Complex64::new(v, 0.0) - zeta - children);
                let mut logs = vec![0.0f64; x_max + 1];
                logs[0] = g_root.norm().ln();
                let mut acc = logs[0];
                for x in 1..=x_max {
                    acc += factors[x].norm().ln();
                    logs[x] = acc;
                }
                logs
            })
            .collect();
        chains.append(&mut new);
        if chains.len() >= n_paths {
            break;
        }
    }
    Ok(chains)
}

/// Free-energy function estimate.
#[derive(Debug, Clone, Serialize)]
pub struct FreeEnergyEstimate {
    pub s: f64,
    pub phi: f64,
    pub std_error: f64,
    /// `log Av(|G(0,x)|^s)` per distance, the fitted series.
    pub log_avg_per_x: Vec<(f64, f64)>,
    /// Smallest effective sample size across distances; small values mean the
    /// average is tail-dominated.
    pub min_ess: f64,
    pub tail_dominated: bool,
}

/// Slope of `log Av(|G(0,x;zeta)|^s)` in the path length.
pub fn free_energy_fn(
    spec: &BetheModelSpec,
    zeta: Complex64,
    s: f64,
    x_max: usize,
    n_paths: usize,
    controls: &PopulationControls,
    master_seed: u64,
) -> Result<FreeEnergyEstimate> {
    spec.validate()?;
    if !(s >= -spec.kappa && s <= 2.0) {
        return Err(Error::Domain(format!(
            "s = {s} outside the moment domain [-kappa, 2] = [{}, 2]",
            -spec.kappa
        )));
    }
    if x_max < 8 {
        return Err(Error::Domain("x_max must be >= 8".into()));
    }
    if n_paths < 100 {
        return Err(Error::Domain("need at least 100 path samples".into()));
    }
    let (ens, _) = equilibrate(spec, zeta, controls, master_seed)?;
    let chains = sample_path_logs(
        spec,
        ens,
        controls.readout,
        x_max,
        n_paths,
        RootMode::Rooted,
        master_seed ^ 0x706869,
    )?;

    // log Av(|G|^s) per x, plus ESS of the weights |G|^s
    let mut log_avg_per_x = Vec::with_capacity(x_max);
    let mut min_ess = f64::INFINITY;
    for x in 1..=x_max {
        // stabilize the exponential average around the max exponent
        let exps: Vec<f64> = chains.iter().map(|c| s * c[x]).collect();
        let m = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ws: Vec<f64> = exps.iter().map(|&e| (e - m).exp()).collect();
        let sum_w = pairwise_sum(&ws);
        let sq: Vec<f64> = ws.iter().map(|&w| w * w).collect();
        let ess = sum_w * sum_w / pairwise_sum(&sq);
        min_ess = min_ess.min(ess);
        log_avg_per_x.push((x as f64, m + (sum_w / n_paths as f64).ln()));
    }
    let xs: Vec<f64> = log_avg_per_x.iter().map(|&(x, _)| x).collect();
    let ys: Vec<f64> = log_avg_per_x.iter().map(|&(_, y)| y).collect();
    let phi = linear_fit(&xs, &ys)?.slope;

    // block std error of the slope (16 consecutive path blocks)
    let n_blocks = 16usize.min(n_paths / 50).max(2);
    let block_len = n_paths / n_blocks;
    let mut block_slopes = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let slice = &chains[b * block_len..(b + 1) * block_len];
        let mut ys_b = Vec::with_capacity(x_max);
        for x in 1..=x_max {
            let exps: Vec<f64> = slice.iter().map(|c| s * c[x]).collect();
            let m = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ws: Vec<f64> = exps.iter().map(|&e| (e - m).exp()).collect();
            ys_b.push(m + (pairwise_sum(&ws) / slice.len() as f64).ln());
        }
        block_slopes.push(linear_fit(&xs, &ys_b)?.slope);
    }
    let (_, std_error) = mean_and_std_error(&block_slopes);
    Ok(FreeEnergyEstimate {
        s,
        phi,
        std_error,
        log_avg_per_x,
        min_ess,
        tail_dominated: min_ess < 30.0,
    })
}

/// Extended-states criteria report for one energy.
#[derive(Debug, Clone, Serialize)]
pub struct CriteriaReport {
    pub branching: u32,
    pub lambda: f64,
    pub energy: f64,
    pub delta_k: f64,
    pub lyapunov: f64,
    pub log_k: f64,
    /// Growth criterion: `L(E) > log K`.
    pub criterion_growth: bool,
    pub phi_one: f64,
    pub phi_one_std_error: f64,
    /// Moment criterion: `phi(1; E) < -log K`.
    pub criterion_moment: bool,
    pub im_positive_fraction: f64,
}

/// Evaluate both sufficiency criteria and the measured Im-positivity
/// fraction at one energy.
pub fn extended_states_criteria(
    spec: &BetheModelSpec,
    energy: f64,
    eta_grid: &[f64],
    controls: &PopulationControls,
    master_seed: u64,
) -> Result<CriteriaReport> {
    let log_k = (spec.branching as f64).ln();
    let lyap = lyapunov_exponent(spec, energy, eta_grid, controls, master_seed)?;
    let eta_small = *eta_grid.last().unwrap();
    let phi = free_energy_fn(
        spec,
        Complex64::new(energy, eta_small),
        1.0,
        12,
        4000,
        controls,
        master_seed ^ 0x63726974,
    )?;
    let stats = root_green(
        spec,
        Complex64::new(energy, eta_small),
        controls,
        RootMode::FullDegree,
        master_seed ^ 0x696D,
    )?;
    Ok(CriteriaReport {
        branching: spec.branching,
        lambda: spec.lambda,
        energy,
        delta_k: spec.delta_k(),
        lyapunov: lyap.value,
        log_k,
        criterion_growth: lyap.value > log_k,
        phi_one: phi.phi,
        phi_one_std_error: phi.std_error,
        criterion_moment: phi.phi < -log_k,
        im_positive_fraction: stats.im_positive_fraction,
    })
}

/// Tree transport report: shell decay profile and ball-mass curve.
#[derive(Debug, Clone, Serialize)]
pub struct TreeTransportReport {
    pub eta: f64,
    pub energy: f64,
    /// `(x, Av|G(0,x;E+i eta)|^2 * K^x)`: flat in the free case, bounded in
    /// the a.c. regime.
    pub shell_profile: Vec<(f64, f64)>,
    /// `(b, mass inside |x| < b/eta)` for the resolvent-averaged transition
    /// probability started at the root.
    pub mass_curve: Vec<(f64, f64)>,
    /// Total shell mass up to the radius cap; close to 1 when the cap holds
    /// the transport front.
    pub total_mass: f64,
}

/// Shell-resolved transport diagnostics. The per-vertex transition weight is
/// `(eta/pi) \int Av|G(x, 0; E' + i eta)|^2 dE'` over the spectrum (widened
/// by the Lorentzian scale), multiplied by the shell count.
pub fn tree_transport(
    spec: &BetheModelSpec,
    eta: f64,
    radius_cap: usize,
    n_paths: usize,
    controls: &PopulationControls,
    master_seed: u64,
) -> Result<TreeTransportReport> {
    spec.validate()?;
    if !(eta > 0.0) {
        return Err(Error::Domain("eta must be > 0".into()));
    }
    if radius_cap < 4 {
        return Err(Error::Size("radius cap must be >= 4".into()));
    }
    let k = spec.branching as f64;
    let edge = spec.spectrum_edge();
    let energy = 0.0;

    // shell profile at the band center
    let shell_at = |e_prime: f64, seed_salt: u64| -> Result<Vec<f64>> {
        let zeta = Complex64::new(e_prime, eta);
        let (ens, _) = equilibrate(spec, zeta, controls, master_seed ^ seed_salt)?;
        let chains = sample_path_logs(
            spec,
            ens,
            controls.readout,
            radius_cap,
            n_paths,
            RootMode::FullDegree,
            master_seed ^ seed_salt,
        )?;
        let mut out = Vec::with_capacity(radius_cap + 1);
        for x in 0..=radius_cap {
            let sq: Vec<f64> = chains.iter().map(|c| (2.0 * c[x]).exp()).collect();
            out.push(pairwise_sum(&sq) / sq.len() as f64);
        }
        Ok(out)
    };
    let central = shell_at(energy, 0x73686C6C)?;
    let shell_profile: Vec<(f64, f64)> = central
        .iter()
        .enumerate()
        .map(|(x, &g2)| (x as f64, g2 * k.powi(x as i32)))
        .collect();

    // energy-integrated per-vertex weight: full-line Simpson under the
    // substitution E' = W tan(u), which integrates the Lorentzian tails
    // instead of truncating them
    let n_nodes = 129usize; // odd for Simpson
    let half_width = edge + 10.0 * eta;
    let u_hi = std::f64::consts::FRAC_PI_2 * (1.0 - 1e-9);
    let h = 2.0 * u_hi / (n_nodes - 1) as f64;
    let mut integrated = vec![0.0f64; radius_cap + 1];
    for node in 0..n_nodes {
        let u = -u_hi + h * node as f64;
        let e_prime = half_width * u.tan();
        let jac = half_width / (u.cos() * u.cos());
        let g2 = shell_at(e_prime, 0x65677269 ^ (node as u64) << 8)?;
        let w = if node == 0 || node == n_nodes - 1 {
            1.0
        } else if node % 2 == 1 {
            4.0
        } else {
            2.0
        };
        for x in 0..=radius_cap {
            integrated[x] += w * jac * g2[x];
        }
    }
    for x in integrated.iter_mut() {
        *x *= h / 3.0 * eta / std::f64::consts::PI;
    }
    // shell counts for the full-degree root: (K+1) K^{x-1} vertices at x >= 1
    let shell_count = |x: usize| -> f64 {
        if x == 0 {
            1.0
        } else {
            (k + 1.0) * k.powi(x as i32 - 1)
        }
    };
    let shell_mass: Vec<f64> = (0..=radius_cap)
        .map(|x| integrated[x] * shell_count(x))
        .collect();
    let total_mass = pairwise_sum(&shell_mass);
    let mut mass_curve = Vec::new();
    for ib in 1..=12 {
        let b = ib as f64 * 0.25;
        let cut = (b / eta).floor() as usize;
        let mass: f64 = shell_mass.iter().take(cut.min(radius_cap + 1)).sum();
        mass_curve.push((b, mass));
    }
    Ok(TreeTransportReport {
        eta,
        energy,
        shell_profile,
        mass_curve,
        total_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_controls() -> PopulationControls {
        PopulationControls::fast()
    }

    #[test]
    fn free_fixed_point_at_band_center() {
        let g = free_fixed_point(2, Complex64::new(0.0, 1e-12));
        assert!((g.re).abs() < 1e-9);
        assert!((g.im - 1.0 / 2f64.sqrt()).abs() < 1e-9);
        // outside the spectrum the Herglotz branch loses its imaginary part
        let g = free_fixed_point(2, Complex64::new(4.0, 1e-9));
        assert!(g.im < 1e-6, "Im g = {}", g.im);
        assert!((g.re - (-4.0 + 8f64.sqrt()) / 4.0).abs() < 1e-6);
    }

    #[test]
    fn recursion_requires_upper_half_plane() {
        assert!(TreeGreenEnsemble::init(Complex64::new(0.0, -0.1), 10).is_err());
        assert!(TreeGreenEnsemble::init(Complex64::new(0.0, 0.0), 10).is_err());
    }

    #[test]
    fn population_collapses_to_free_fixed_point() {
        // contraction rate is O(eta) per step, so use a comfortable eta
        let spec = BetheModelSpec::uniform(2, 0.0);
        let zeta = Complex64::new(0.3, 0.1);
        let mut ens = TreeGreenEnsemble::init(zeta, 500).unwrap();
        for _ in 0..400 {
            ens = green_recursion_step(&ens, &spec, 7).unwrap();
        }
        let want = free_fixed_point(2, zeta);
        assert!((ens.mean() - want).norm() < 1e-9);
        // every sample identical at lambda = 0
        for g in &ens.pool {
            assert!((g - want).norm() < 1e-9);
        }
    }

    #[test]
    fn adaptive_equilibration_reaches_the_slow_fixed_point() {
        // at eta = 1e-3 the orbit needs thousands of generations; the
        // geometric stopping rule must keep going until the bias is small
        let spec = BetheModelSpec::uniform(2, 0.0);
        let zeta = Complex64::new(0.0, 1e-3);
        let stats = pool_statistics(&spec, zeta, &fast_controls(), 7).unwrap();
        let want = free_fixed_point(2, zeta);
        assert!(
            (stats.mean_im - want.im).abs() < 3e-4,
            "mean_im {} vs {}",
            stats.mean_im,
            want.im
        );
        assert!((want.im - 1.0 / 2f64.sqrt()).abs() < 3e-4);
    }

    #[test]
    fn herglotz_is_preserved_under_disorder() {
        let spec = BetheModelSpec::uniform(2, 0.8);
        let zeta = Complex64::new(1.0, 1e-4);
        let mut ens = TreeGreenEnsemble::init(zeta, 1000).unwrap();
        for _ in 0..150 {
            ens = green_recursion_step(&ens, &spec, 11).unwrap();
            assert!(ens.pool.iter().all(|g| g.im > 0.0));
        }
    }

    #[test]
    fn root_green_matches_free_closed_form() {
        let spec = BetheModelSpec::uniform(2, 0.0);
        let zeta = Complex64::new(0.0, 1e-3);
        let stats = root_green(&spec, zeta, &fast_controls(), RootMode::FullDegree, 3).unwrap();
        // root with K+1 subtrees: G = 1/(-zeta - 3 g)
        let g = free_fixed_point(2, zeta);
        let want = Complex64::new(1.0, 0.0) / (-zeta - 3.0 * g);
        assert!((stats.mean_im - want.im).abs() < 1e-3);
        assert!((stats.mean_re - want.re).abs() < 1e-3);
        // the median still carries the residual orbit radius at readout
        assert!((stats.ac_density - want.im / std::f64::consts::PI).abs() < 1e-2);
        assert!(stats.im_positive_fraction > 0.999);
    }

    #[test]
    fn density_vanishes_outside_the_spectrum() {
        let spec = BetheModelSpec::uniform(2, 0.1);
        let edge = spec.spectrum_edge();
        let zeta = Complex64::new(edge + 0.5, 1e-3);
        let stats = root_green(&spec, zeta, &fast_controls(), RootMode::FullDegree, 5).unwrap();
        assert!(stats.ac_density < 1e-3, "density {}", stats.ac_density);
        assert!(stats.im_positive_fraction < 0.01);
    }

    #[test]
    fn lyapunov_free_case_is_half_log_two() {
        let spec = BetheModelSpec::uniform(2, 0.0);
        let lyap = lyapunov_exponent(&spec, 0.0, &[0.1, 0.01, 0.001], &fast_controls(), 13).unwrap();
        let want = 0.5 * 2f64.ln();
        assert!(
            (lyap.value - want).abs() < 0.02 * want,
            "L = {} vs {want}",
            lyap.value
        );
        // the growth criterion is sufficient, not necessary: it fails at the
        // free band center even though the spectrum there is a.c.
        assert!(lyap.value < 2f64.ln());
        // path decay cross-check within 5%
        assert!((lyap.path_slope - lyap.value).abs() < 0.05 * lyap.value);
    }

    #[test]
    fn lyapunov_cross_check_with_disorder() {
        let spec = BetheModelSpec::uniform(2, 0.2);
        let lyap = lyapunov_exponent(&spec, 0.0, &[0.1, 0.01, 0.001], &fast_controls(), 17).unwrap();
        assert!(
            (lyap.path_slope - lyap.value).abs() < 0.05 * lyap.value.abs(),
            "pool {} vs path {}",
            lyap.value,
            lyap.path_slope
        );
    }

    #[test]
    fn free_energy_is_deterministic_at_lambda_zero() {
        let spec = BetheModelSpec::uniform(2, 0.0);
        let zeta = Complex64::new(0.0, 0.1);
        let controls = PopulationControls {
            mean_tolerance: 1e-10,
            ..fast_controls()
        };
        let est = free_energy_fn(&spec, zeta, 1.0, 10, 500, &controls, 19).unwrap();
        let g = free_fixed_point(2, zeta);
        let want = g.norm().ln();
        assert!((est.phi - want).abs() < 1e-6, "phi {} vs {want}", est.phi);
        assert!(est.std_error < 1e-9);
        assert!(!est.tail_dominated);
    }

    #[test]
    fn free_energy_convexity_and_consistent_bound() {
        // phi(s) >= -s L, and the square-average route gives
        // phi(s) <= -(s/2) log K for s <= 2
        let spec = BetheModelSpec::uniform(2, 0.2);
        let controls = fast_controls();
        let zeta = Complex64::new(0.0, 0.1);
        let lyap = lyapunov_exponent(&spec, 0.0, &[0.1, 0.05], &controls, 23).unwrap();
        // at eta = 0.1 compare against the eta-level value, not the intercept
        let l_eta = lyap.per_eta[0].1;
        for s in [0.25, 0.5, 1.0] {
            let est = free_energy_fn(&spec, zeta, s, 10, 4000, &controls, 29).unwrap();
            assert!(
                est.phi >= -s * l_eta - 3.0 * est.std_error - 0.01,
                "s={s}: phi {} vs -sL {}",
                est.phi,
                -s * l_eta
            );
            assert!(
                est.phi <= -0.5 * s * (2f64).ln() + 3.0 * est.std_error + 0.01,
                "s={s}: phi {} vs -(s/2)logK {}",
                est.phi,
                -0.5 * s * (2f64).ln()
            );
        }
    }

    #[test]
    fn domain_checks() {
        let spec = BetheModelSpec::uniform(2, 0.1);
        let zeta = Complex64::new(0.0, 0.1);
        assert!(free_energy_fn(&spec, zeta, 2.5, 10, 500, &fast_controls(), 1).is_err());
        assert!(free_energy_fn(&spec, zeta, -0.9, 10, 500, &fast_controls(), 1).is_err());
        assert!(free_energy_fn(&spec, zeta, 1.0, 4, 500, &fast_controls(), 1).is_err());
        assert!(BetheModelSpec::uniform(1, 0.0).validate().is_err());
    }

    #[test]
    fn delta_k_value() {
        assert!((BetheModelSpec::uniform(4, 0.0).delta_k() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn criteria_free_case() {
        let spec = BetheModelSpec::uniform(2, 0.0);
        let rep =
            extended_states_criteria(&spec, 0.0, &[0.1, 0.01, 0.001], &fast_controls(), 31).unwrap();
        assert!(!rep.criterion_moment); // sufficiency only
        assert!(!rep.criterion_growth);
        assert!(rep.im_positive_fraction > 0.999);
        assert!((rep.delta_k - BetheModelSpec::uniform(2, 0.0).delta_k()).abs() < 1e-15);
    }

    #[test]
    fn negative_moment_probe_is_stable_under_pool_doubling() {
        // Av((Im G)^{-3.5}) finite and stable for E interior at small lambda
        let spec = BetheModelSpec::uniform(2, 0.1);
        let zeta = Complex64::new(0.0, 1e-3);
        let probe = |pool: usize, seed: u64| -> f64 {
            let controls = PopulationControls {
                pool_size: pool,
                ..PopulationControls::fast()
            };
            let stats = root_green(&spec, zeta, &controls, RootMode::FullDegree, seed).unwrap();
            let _ = stats;
            // recompute from a fresh equilibrated pool
            let (ens, _) = equilibrate(&spec, zeta, &controls, seed).unwrap();
            let vals: Vec<f64> = ens.pool.iter().map(|g| g.im.powf(-3.5)).collect();
            pairwise_sum(&vals) / vals.len() as f64
        };
        let a = probe(2000, 37);
        let b = probe(4000, 41);
        assert!(a.is_finite() && b.is_finite());
        assert!(
            (a - b).abs() < 0.5 * a.abs().max(b.abs()),
            "probe unstable: {a} vs {b}"
        );
    }

    #[test]
    fn tree_transport_free_profile_is_flat_and_normalized() {
        let spec = BetheModelSpec::uniform(2, 0.0);
        let controls = PopulationControls {
            pool_size: 500,
            readout: 10,
            ..PopulationControls::fast()
        };
        let rep = tree_transport(&spec, 0.2, 60, 200, &controls, 43).unwrap();
        // Av|G(0,x)|^2 K^x follows the closed form |G00|^2 (K|g|^2)^x: flat
        // at band center as eta -> 0, with the finite-eta tilt included
        let zeta = Complex64::new(0.0, 0.2);
        let g = free_fixed_point(2, zeta);
        let g00 = Complex64::new(1.0, 0.0) / (-zeta - 3.0 * g);
        for &(x, q) in rep.shell_profile.iter().take(30) {
            let want = g00.norm_sqr() * (2.0 * g.norm_sqr()).powf(x);
            assert!(
                (q - want).abs() < 0.02 * want,
                "x={x}: {q} vs {want}"
            );
        }
        // the eta -> 0 limit of the tilt factor is exactly critical
        let g0 = free_fixed_point(2, Complex64::new(0.0, 1e-9));
        assert!((2.0 * g0.norm_sqr() - 1.0).abs() < 1e-7);
        // normalization within 1e-3 held by the radius cap
        assert!(
            (rep.total_mass - 1.0).abs() < 1e-3,
            "total mass {}",
            rep.total_mass
        );
        // monotone mass curve through the origin with bounded slope
        let mut prev = 0.0;
        for &(_, m) in &rep.mass_curve {
            assert!(m >= prev - 1e-12);
            prev = m;
        }
    }
}
