//! Coupling/potential laws and the disorder-averaging engine.
//!
//! All laws are centered. Sampling is a pure function of
//! `(master_seed, realization_index)`: every realization owns an independent
//! ChaCha stream selected by the index, so averages are reproducible for any
//! worker count. Reductions go through the fixed-shape pairwise trees in
//! [`crate::numeric`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean_and_std_error, pairwise_sum};

/// Coupling law. The Gaussian carries the density
/// `(1/(scale*sqrt(pi))) * exp(-(x/scale)^2)`, i.e. variance `scale^2 / 2`;
/// at `scale = 1` this is the unit-amplitude form used throughout, and its
/// variance is 1/2 (the density, not the "unit variance" name, is what the
/// closed forms quote).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Law {
    /// Values `{-scale, +scale}` with probability 1/2 each.
    Bernoulli,
    /// Density `1/(2*scale)` on `[-scale, scale]`.
    Uniform,
    /// Density `(1/(scale*sqrt(pi))) exp(-(x/scale)^2)`.
    Gaussian,
    /// Finite value table sampled uniformly. Carries no analytic moment
    /// metadata.
    Tabulated(Vec<f64>),
}

impl Law {
    pub fn name(&self) -> &'static str {
        match self {
            Law::Bernoulli => "bernoulli",
            Law::Uniform => "uniform",
            Law::Gaussian => "gaussian",
            Law::Tabulated(_) => "tabulated",
        }
    }
}

/// A centered coupling law with an amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub law: Law,
    pub scale: f64,
    /// Optional moment constant `c` with `|m_n| <= n! c^n`; filled in by
    /// [`check_moment_bounds`] when known.
    pub moment_constant: Option<f64>,
}

impl DistributionSpec {
    pub fn bernoulli(scale: f64) -> Self {
        Self {
            law: Law::Bernoulli,
            scale,
            moment_constant: None,
        }
    }

    pub fn uniform(scale: f64) -> Self {
        Self {
            law: Law::Uniform,
            scale,
            moment_constant: None,
        }
    }

    pub fn gaussian(scale: f64) -> Self {
        Self {
            law: Law::Gaussian,
            scale,
            moment_constant: None,
        }
    }

    /// Tabulated law; rejects tables whose mean is not (numerically) zero.
    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("tabulated law needs at least one value".into()));
        }
        let span = values.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-30);
        let mean = pairwise_sum(&values) / values.len() as f64;
        if mean.abs() > 1e-9 * span {
            return Err(Error::Config(format!(
                "tabulated law must be centered, table mean = {mean:e}"
            )));
        }
        Ok(Self {
            law: Law::Tabulated(values),
            scale: 1.0,
            moment_constant: None,
        })
    }

    /// Tabulated law without the centering check, for degenerate reference
    /// systems (e.g. a ferromagnetic point mass at +1).
    pub fn tabulated_uncentered(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("tabulated law needs at least one value".into()));
        }
        Ok(Self {
            law: Law::Tabulated(values),
            scale: 1.0,
            moment_constant: None,
        })
    }

    /// Parse from the human-readable name used in configs.
    pub fn from_name(name: &str, scale: f64) -> Result<Self> {
        match name {
            "bernoulli" => Ok(Self::bernoulli(scale)),
            "uniform" => Ok(Self::uniform(scale)),
            "gaussian" => Ok(Self::gaussian(scale)),
            other => Err(Error::Config(format!("unknown distribution kind '{other}'"))),
        }
    }

    /// Draw one value.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match &self.law {
            Law::Bernoulli => {
                if rng.random::<bool>() {
                    self.scale
                } else {
                    -self.scale
                }
            }
            Law::Uniform => (2.0 * rng.random::<f64>() - 1.0) * self.scale,
            Law::Gaussian => {
                let g: f64 = StandardNormal.sample(rng);
                g * self.scale / std::f64::consts::SQRT_2
            }
            Law::Tabulated(values) => values[rng.random_range(0..values.len())],
        }
    }

    /// Analytic mean; zero for every supported law (tabulated tables are
    /// validated at construction).
    pub fn mean(&self) -> f64 {
        0.0
    }

    /// Analytic n-th moment. Tabulated laws carry no moment metadata.
    pub fn analytic_moment(&self, n: u32) -> Result<f64> {
        let s = self.scale;
        match &self.law {
            Law::Bernoulli => Ok(if n % 2 == 0 { s.powi(n as i32) } else { 0.0 }),
            Law::Uniform => Ok(if n % 2 == 0 {
                s.powi(n as i32) / (n as f64 + 1.0)
            } else {
                0.0
            }),
            Law::Gaussian => {
                if n % 2 == 1 {
                    Ok(0.0)
                } else {
                    // E[X^(2m)] = s^(2m) (2m-1)!! / 2^m
                    let m = n / 2;
                    let mut dfact = 1.0;
                    let mut k = 2 * m as i64 - 1;
                    while k > 1 {
                        dfact *= k as f64;
                        k -= 2;
                    }
                    Ok(s.powi(n as i32) * dfact / 2f64.powi(m as i32))
                }
            }
            Law::Tabulated(_) => Err(Error::Unsupported(
                "tabulated law carries no analytic moments".into(),
            )),
        }
    }

    /// Second moment (variance, since the law is centered).
    pub fn variance(&self) -> Result<f64> {
        self.analytic_moment(2)
    }

    /// Whether the law has bounded support (relevant for stability flags).
    pub fn bounded(&self) -> bool {
        !matches!(self.law, Law::Gaussian)
    }

    /// Serialize to a `key = value` block.
    pub fn to_config_block(&self) -> String {
        format!("kind = {}\nscale = {}\n", self.law.name(), self.scale)
    }

    /// Parse back from a `key = value` block (kind, scale; tabulated not
    /// representable).
    pub fn from_config_block(block: &str) -> Result<Self> {
        let mut kind = None;
        let mut scale = 1.0f64;
        for (lineno, raw) in block.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            match k.trim() {
                "kind" => kind = Some(v.trim().to_string()),
                "scale" => {
                    scale = v.trim().parse().map_err(|_| {
                        Error::Config(format!("line {}: bad scale '{}'", lineno + 1, v.trim()))
                    })?
                }
                "master_seed" => {} // seed lives with the experiment, accepted for round-trips
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        let kind = kind.ok_or_else(|| Error::Config("missing 'kind'".into()))?;
        Self::from_name(&kind, scale)
    }
}

/// Identifies one point of the probability space: a master seed plus a
/// realization counter. Distinct indices give independent ChaCha streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealizationSeed {
    pub master_seed: u64,
    pub realization_index: u64,
}

impl RealizationSeed {
    pub fn new(master_seed: u64, realization_index: u64) -> Self {
        Self {
            master_seed,
            realization_index,
        }
    }

    /// The RNG for this realization. Counter-based: the stream index selects
    /// one of ChaCha's 2^64 independent streams, so neighboring indices do
    /// not share state.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.realization_index);
        rng
    }

    pub fn with_index(&self, realization_index: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            realization_index,
        }
    }
}

/// Disorder-average result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: u64,
}

/// i.i.d. samples from `dist`, deterministic in the seed.
pub fn sample_couplings(
    dist: &DistributionSpec,
    count: usize,
    seed: RealizationSeed,
) -> Result<Vec<f64>> {
    if count < 1 {
        return Err(Error::Config("sample count must be >= 1".into()));
    }
    let mut rng = seed.rng();
    Ok((0..count).map(|_| dist.sample(&mut rng)).collect())
}

/// One row of a moment-bound report.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentEntry {
    pub n: u32,
    pub moment: f64,
    /// Least `c` admissible for this order alone: `(|m_n|/n!)^(1/n)`.
    pub min_c: f64,
}

/// Report for the factorial moment bound `|m_n| <= n! c^n`.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub entries: Vec<MomentEntry>,
    /// Least constant working for every order up to `n_max`.
    pub least_c: f64,
    /// False would mean no finite constant works; never happens for the
    /// built-in laws.
    pub satisfiable: bool,
}

/// Analytic moments of orders `2..=n_max` and the least admissible constant.
pub fn check_moment_bounds(dist: &DistributionSpec, n_max: u32) -> Result<MomentReport> {
    if n_max < 2 {
        return Err(Error::Config("n_max must be >= 2".into()));
    }
    let mut entries = Vec::new();
    let mut least_c = 0.0f64;
    for n in 2..=n_max {
        let moment = dist.analytic_moment(n)?;
        let mut fact = 1.0f64;
        for k in 2..=n {
            fact *= k as f64;
        }
        let min_c = (moment.abs() / fact).powf(1.0 / n as f64);
        least_c = least_c.max(min_c);
        entries.push(MomentEntry { n, moment, min_c });
    }
    Ok(MomentReport {
        entries,
        least_c,
        satisfiable: least_c.is_finite(),
    })
}

/// Disorder average of `estimator` over `n_samples` independent realizations.
///
/// Realization `i` sees the stream `(seed.master_seed, seed.realization_index + i)`.
/// Evaluation is parallel; the reduction is a fixed pairwise tree over the
/// index-ordered values, so the estimate is bit-identical for any worker
/// count. An estimator failure is reported with the realization index; the
/// lowest failing index wins so the error, too, is deterministic.
pub fn average<F>(estimator: F, n_samples: u64, seed: RealizationSeed) -> Result<MonteCarloEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    if n_samples < 2 {
        return Err(Error::Config("need at least 2 samples for a standard error".into()));
    }
    let results: Vec<Result<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.with_index(seed.realization_index + i).rng();
            estimator(&mut rng)
        })
        .collect();
    let mut values = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(v),
            Err(e) => {
                return Err(Error::Estimator {
                    index: seed.realization_index + i as u64,
                    source: Box::new(e),
                })
            }
        }
    }
    let (mean, std_error) = mean_and_std_error(&values);
    Ok(MonteCarloEstimate {
        mean,
        std_error,
        n_samples,
    })
}
