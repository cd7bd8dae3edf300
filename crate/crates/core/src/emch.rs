//! Return-to-equilibrium dynamics of Ising-coupled spins prepared in a
//! transverse product state.
//!
//! Because the Hamiltonian is diagonal in the z-basis, the Heisenberg
//! evolution of a single transverse spin factorizes over the bonds attached
//! to it, and the disorder average of the decay curve is an exact product of
//! per-bond cosine moments:
//! `g(t) = prod_k chi(2 eps(k) t)` with `chi(a) = Av(cos(a J))`.
//! Per law: Bernoulli `cos(a s)`; uniform `sin(a s)/(a s)`; Gaussian (density
//! `(1/(s sqrt(pi))) e^{-(x/s)^2}`) `exp(-a^2 s^2 / 4)`; nonrandom `cos(a)`.
//! The transverse magnetization is `f(t) = delta * g(t)` with
//! `delta = -tanh(gamma)` from the preparation strength.

use rayon::prelude::*;
use serde::Serialize;

use crate::disorder::{DistributionSpec, Law, RealizationSeed};
use crate::error::{Error, Result};
use crate::numeric::{linear_fit, mean_and_std_error, sinc};

/// Coupling law for the bonds (random, or the nonrandom `J = 1` model).
#[derive(Debug, Clone)]
pub enum CouplingLaw {
    Random(DistributionSpec),
    Nonrandom,
}

impl CouplingLaw {
    /// Cosine moment `chi(a) = Av(cos(a J))`.
    pub fn cosine_moment(&self, a: f64) -> f64 {
        match self {
            CouplingLaw::Nonrandom => a.cos(),
            CouplingLaw::Random(dist) => match &dist.law {
                Law::Bernoulli => (a * dist.scale).cos(),
                Law::Uniform => sinc(a * dist.scale),
                Law::Gaussian => (-a * a * dist.scale * dist.scale / 4.0).exp(),
                Law::Tabulated(values) => {
                    let terms: Vec<f64> = values.iter().map(|&v| (a * v).cos()).collect();
                    crate::numeric::pairwise_sum(&terms) / values.len() as f64
                }
            },
        }
    }

    pub fn bounded(&self) -> bool {
        match self {
            CouplingLaw::Nonrandom => true,
            CouplingLaw::Random(dist) => dist.bounded(),
        }
    }

    fn sample<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        match self {
            CouplingLaw::Nonrandom => 1.0,
            CouplingLaw::Random(dist) => dist.sample(rng),
        }
    }
}

/// Interaction profile `eps(k) >= 0` (with `eps(0) = 0`), described by the
/// multiset of bond strengths attached to one site.
#[derive(Debug, Clone)]
pub enum CouplingProfile {
    /// `eps = beta` on the `z = 2d` unit offsets.
    NearestNeighbor { beta: f64, d: usize },
    /// One-dimensional infinite-range profile `eps(|n|) = 2^{-|n|-1}`,
    /// truncated at `cutoff` (tail factors certified close to 1).
    Dyadic { cutoff: usize },
    /// Explicit `(eps, multiplicity)` list.
    Custom(Vec<(f64, usize)>),
}

impl CouplingProfile {
    /// Bond strengths with multiplicities.
    pub fn bond_strengths(&self) -> Vec<(f64, usize)> {
        match self {
            CouplingProfile::NearestNeighbor { beta, d } => vec![(*beta, 2 * d)],
            CouplingProfile::Dyadic { cutoff } => (1..=*cutoff)
                .map(|n| (2f64.powi(-(n as i32) - 1), 2))
                .collect(),
            CouplingProfile::Custom(list) => list.clone(),
        }
    }

    /// Number of bonds (z in the nearest-neighbor case).
    pub fn bond_count(&self) -> usize {
        self.bond_strengths().iter().map(|&(_, m)| m).sum()
    }

    /// Dyadic cutoff making every neglected factor within `tol` of 1 up to
    /// `t_max`: `|1 - cos(2 eps t)| <= 2 (eps t)^2 <= tol`.
    pub fn dyadic_for(t_max: f64, tol: f64) -> Self {
        let mut cutoff = 1usize;
        while 2.0 * (2f64.powi(-(cutoff as i32) - 1) * t_max).powi(2) > tol && cutoff < 64 {
            cutoff += 1;
        }
        CouplingProfile::Dyadic { cutoff }
    }

    pub fn summable(&self) -> bool {
        true // all representable profiles are finite, hence l1
    }
}

/// Model parameters: geometry profile, coupling law, and the preparation
/// strength gamma of the transverse product state.
#[derive(Debug, Clone)]
pub struct EmchRadinSpec {
    pub profile: CouplingProfile,
    pub law: CouplingLaw,
    pub gamma: f64,
}

/// `delta = phi_0(sigma^x) = -tanh(gamma)`: the transverse expectation of the
/// prepared single-site state `tr(. e^{-gamma sigma^x}) / tr(e^{-gamma
/// sigma^x})`. At `gamma = 0` the magnetization vanishes identically and the
/// normalized curve is undefined; callers should flag that input.
pub fn delta_coefficient(gamma: f64) -> f64 {
    -gamma.tanh()
}

/// Thermodynamic-stability flags attached to decay curves.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilityFlags {
    /// Summable profile (l1).
    pub profile_l1: bool,
    /// Bounded couplings: the local field is bounded below.
    pub first_kind: bool,
    /// l1 profile with bounded couplings: bound proportional to the volume.
    pub second_kind: bool,
}

/// Normalized decay curve `g(t) = Av(prod cos(2 eps J t))` with the
/// preparation factor reported separately.
#[derive(Debug, Clone, Serialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub delta: f64,
    pub stability: StabilityFlags,
}

impl DecayCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(match &self.std_errors {
            Some(_) => "t,g,stderr\n",
            None => "t,g\n",
        });
        for (i, (t, v)) in self.times.iter().zip(&self.values).enumerate() {
            match &self.std_errors {
                Some(se) => out.push_str(&format!("{t},{v},{}\n", se[i])),
                None => out.push_str(&format!("{t},{v}\n")),
            }
        }
        out
    }
}

fn stability_flags(spec: &EmchRadinSpec) -> StabilityFlags {
    let l1 = spec.profile.summable();
    let bounded = spec.law.bounded();
    StabilityFlags {
        profile_l1: l1,
        first_kind: bounded,
        second_kind: l1 && bounded,
    }
}

/// Exact decay value `g(t) = prod chi(2 eps t)` over the profile's bonds.
pub fn exact_decay(spec: &EmchRadinSpec, t: f64) -> f64 {
    let mut g = 1.0;
    for (eps, mult) in spec.profile.bond_strengths() {
        g *= spec.law.cosine_moment(2.0 * eps * t).powi(mult as i32);
    }
    g
}

/// Exact curve over a grid.
pub fn exact_curve(spec: &EmchRadinSpec, t_grid: &[f64]) -> DecayCurve {
    DecayCurve {
        times: t_grid.to_vec(),
        values: t_grid.iter().map(|&t| exact_decay(spec, t)).collect(),
        std_errors: None,
        delta: delta_coefficient(spec.gamma),
        stability: stability_flags(spec),
    }
}

/// Monte Carlo decay curve: each realization draws every bond fresh and
/// evaluates the cosine product on the whole grid.
pub fn mc_decay(
    spec: &EmchRadinSpec,
    t_grid: &[f64],
    n_samples: u64,
    seed: RealizationSeed,
) -> Result<DecayCurve> {
    if n_samples < 1000 {
        return Err(Error::Config("need at least 1000 samples".into()));
    }
    let strengths = spec.profile.bond_strengths();
    let per_sample: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.with_index(seed.realization_index + i).rng();
            let bonds: Vec<(f64, f64)> = strengths
                .iter()
                .flat_map(|&(eps, mult)| {
                    (0..mult).map(move |_| eps).collect::<Vec<f64>>()
                })
                .map(|eps| (eps, spec.law.sample(&mut rng)))
                .collect();
            t_grid
                .iter()
                .map(|&t| {
                    bonds
                        .iter()
                        .map(|&(eps, j)| (2.0 * eps * j * t).cos())
                        .product()
                })
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(t_grid.len());
    let mut errors = Vec::with_capacity(t_grid.len());
    for ti in 0..t_grid.len() {
        let col: Vec<f64> = per_sample.iter().map(|row| row[ti]).collect();
        let (mean, se) = mean_and_std_error(&col);
        values.push(mean);
        errors.push(se);
    }
    Ok(DecayCurve {
        times: t_grid.to_vec(),
        values,
        std_errors: Some(errors),
        delta: delta_coefficient(spec.gamma),
        stability: stability_flags(spec),
    })
}

/// Envelope classification verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DecayClass {
    /// Recurrences keep returning near 1: no decay.
    NoDecayAlmostPeriodic,
    /// Envelope falls like `t^exponent`.
    PowerLaw { exponent: f64 },
    /// `log|g|` is quadratic in t.
    GaussianLike,
    /// Neither fit is convincing.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayVerdict {
    pub class: DecayClass,
    /// `sup |g|` over dyadic windows `[T, 2T]`.
    pub recurrence: Vec<(f64, f64)>,
    /// Minimum of the window suprema (1 means perfect recurrence).
    pub min_recurrence: f64,
    pub power_fit_r2: f64,
    pub gaussian_fit_r2: f64,
}

/// Classify a decay curve from its envelope. The grid must span at least two
/// decades; ambiguous fits return `Inconclusive` rather than guessing.
pub fn decay_envelope_classify(curve: &DecayCurve) -> Result<DecayVerdict> {
    let times = &curve.times;
    let n = times.len();
    if n < 16 {
        return Err(Error::Fit("curve too short to classify".into()));
    }
    let positive_start = times.iter().position(|&t| t > 0.0).unwrap_or(0);
    let t_lo = times[positive_start];
    let t_hi = times[n - 1];
    if !(t_lo > 0.0) || t_hi / t_lo < 99.0 {
        return Err(Error::Fit(format!(
            "need >= 2 decades of t, got [{t_lo}, {t_hi}]"
        )));
    }

    // dyadic-window recurrence over the largest windows (small windows
    // would be narrower than one oscillation period and bias the sup)
    let mut recurrence = Vec::new();
    let mut t = t_hi / 2.0;
    while t >= t_hi / 64.0 && t >= t_lo * 0.999 && recurrence.len() < 6 {
        let sup = times
            .iter()
            .zip(&curve.values)
            .filter(|&(&ti, _)| ti >= t && ti <= 2.0 * t)
            .map(|(_, &v)| v.abs())
            .fold(0.0f64, f64::max);
        recurrence.push((t, sup));
        t /= 2.0;
    }
    recurrence.reverse();
    let min_recurrence = recurrence
        .iter()
        .map(|&(_, s)| s)
        .fold(f64::INFINITY, f64::min);
    if min_recurrence > 0.5 {
        return Ok(DecayVerdict {
            class: DecayClass::NoDecayAlmostPeriodic,
            recurrence,
            min_recurrence,
            power_fit_r2: 0.0,
            gaussian_fit_r2: 0.0,
        });
    }

    // envelope points: local maxima of |g|, or every point when |g| is
    // monotone (no oscillation)
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for i in 1..n - 1 {
        let v = curve.values[i].abs();
        if v > curve.values[i - 1].abs() && v >= curve.values[i + 1].abs() && v > 1e-14 {
            peaks.push((times[i], v));
        }
    }
    if peaks.len() < 4 {
        peaks = times
            .iter()
            .zip(&curve.values)
            .filter(|&(&t, &v)| t > 0.0 && v.abs() > 1e-14)
            .map(|(&t, &v)| (t, v.abs()))
            .collect();
    }
    if peaks.len() < 4 {
        return Ok(DecayVerdict {
            class: DecayClass::Inconclusive,
            recurrence,
            min_recurrence,
            power_fit_r2: 0.0,
            gaussian_fit_r2: 0.0,
        });
    }
    let log_env: Vec<f64> = peaks.iter().map(|&(_, v)| v.ln()).collect();
    let log_t: Vec<f64> = peaks.iter().map(|&(t, _)| t.ln()).collect();
    let t_sq: Vec<f64> = peaks.iter().map(|&(t, _)| t * t).collect();
    let power = linear_fit(&log_t, &log_env)?;
    let gauss = linear_fit(&t_sq, &log_env)?;
    let class = if gauss.r_squared > power.r_squared && gauss.r_squared > 0.98 && gauss.slope < 0.0
    {
        DecayClass::GaussianLike
    } else if power.r_squared >= gauss.r_squared && power.r_squared > 0.9 && power.slope < 0.0 {
        DecayClass::PowerLaw {
            exponent: power.slope,
        }
    } else {
        DecayClass::Inconclusive
    };
    Ok(DecayVerdict {
        class,
        recurrence,
        min_recurrence,
        power_fit_r2: power.r_squared,
        gaussian_fit_r2: gauss.r_squared,
    })
}

/// Decay curve of the nonrandom dyadic profile `eps(|n|) = 2^{-|n|-1}` in one
/// dimension: `g(t) = prod_{n>=1} cos(t 2^{-n})^2`, which telescopes to
/// `(sin t / t)^2`.
pub fn nonrandom_profile_decay(t_grid: &[f64], t_max_hint: f64) -> DecayCurve {
    let spec = EmchRadinSpec {
        profile: CouplingProfile::dyadic_for(t_max_hint, 1e-12),
        law: CouplingLaw::Nonrandom,
        gamma: 1.0,
    };
    exact_curve(&spec, t_grid)
}

/// Exact finite-volume transverse magnetization at the origin for one
/// coupling realization: `delta * prod_{bonds inside V} cos(2 eps J t)`.
///
/// Couplings are drawn per bond in the canonical profile order independently
/// of the volume, so nested volumes share bond values and the result
/// stabilizes exactly once V holds the whole interaction neighborhood.
pub fn finite_volume_magnetization(
    spec: &EmchRadinSpec,
    volume_bonds: usize,
    t: f64,
    seed: RealizationSeed,
) -> Result<f64> {
    let all: Vec<f64> = spec
        .profile
        .bond_strengths()
        .iter()
        .flat_map(|&(eps, mult)| (0..mult).map(move |_| eps).collect::<Vec<f64>>())
        .collect();
    if volume_bonds > all.len() {
        return Err(Error::Domain(format!(
            "volume holds {volume_bonds} bonds but the profile has only {}",
            all.len()
        )));
    }
    let mut rng = seed.rng();
    let mut g = 1.0;
    for (i, &eps) in all.iter().enumerate() {
        let j = spec.law.sample(&mut rng);
        if i < volume_bonds {
            g *= (2.0 * eps * j * t).cos();
        }
    }
    Ok(delta_coefficient(spec.gamma) * g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nn_spec(law: CouplingLaw, d: usize, beta: f64) -> EmchRadinSpec {
        EmchRadinSpec {
            profile: CouplingProfile::NearestNeighbor { beta, d },
            law,
            gamma: 1.0,
        }
    }

    #[test]
    fn delta_is_minus_tanh_gamma() {
        // oracle: e^{-gamma X} = cosh(gamma) I - sinh(gamma) X on 2x2,
        // so tr(X e^{-gamma X}) / tr(e^{-gamma X}) = -tanh(gamma)
        for gamma in [0.0f64, 0.3, 1.0, 5.0] {
            let (ch, sh) = (gamma.cosh(), gamma.sinh());
            // matrix in the z basis: [[ch, -sh], [-sh, ch]]
            let trace = 2.0 * ch;
            let x_weighted = -2.0 * sh; // tr(X M) with X = [[0,1],[1,0]]
            let oracle = x_weighted / trace;
            assert!((delta_coefficient(gamma) - oracle).abs() < 1e-14);
        }
        assert_eq!(delta_coefficient(0.0), 0.0); // degenerate preparation
        assert!((delta_coefficient(1.0) + 1f64.tanh()).abs() < 1e-15);
        assert!((delta_coefficient(50.0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_curve_is_cosine_power() {
        let spec = nn_spec(CouplingLaw::Random(DistributionSpec::bernoulli(1.0)), 2, 0.7);
        for t in [0.0f64, 0.3, 1.1, 4.0] {
            let want = (2.0 * 0.7 * t).cos().powi(4);
            assert!((exact_decay(&spec, t) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn uniform_curve_is_sinc_power() {
        // per-bond factor from the exact integral of cos(2 beta x t)/2 on
        // [-1, 1]
        let beta = 0.9;
        let spec = nn_spec(CouplingLaw::Random(DistributionSpec::uniform(1.0)), 3, beta);
        for t in [0.2, 1.0, 2.7] {
            let want = sinc(2.0 * beta * t).powi(6);
            assert!((exact_decay(&spec, t) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn gaussian_curve_is_gaussian() {
        let spec = nn_spec(CouplingLaw::Random(DistributionSpec::gaussian(1.0)), 1, 1.0);
        for t in [0.1f64, 0.5, 1.5] {
            let want = (-2.0 * t * t).exp(); // e^{-(2t)^2/4} squared
            assert!((exact_decay(&spec, t) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn curve_normalization_and_bound() {
        for law in [
            CouplingLaw::Random(DistributionSpec::bernoulli(1.0)),
            CouplingLaw::Random(DistributionSpec::uniform(1.0)),
            CouplingLaw::Random(DistributionSpec::gaussian(1.0)),
            CouplingLaw::Nonrandom,
        ] {
            let spec = nn_spec(law, 2, 1.0);
            assert_eq!(exact_decay(&spec, 0.0), 1.0);
            for i in 0..400 {
                let t = i as f64 * 0.05;
                assert!(exact_decay(&spec, t).abs() <= 1.0 + 1e-14);
            }
        }
    }

    #[test]
    fn mc_matches_closed_forms_within_three_sigma() {
        let seed = RealizationSeed::new(77, 0);
        let grid: Vec<f64> = (0..30).map(|i| i as f64 * 0.15).collect();
        for law in [
            CouplingLaw::Random(DistributionSpec::bernoulli(1.0)),
            CouplingLaw::Random(DistributionSpec::uniform(1.0)),
            CouplingLaw::Random(DistributionSpec::gaussian(1.0)),
        ] {
            let spec = nn_spec(law, 2, 1.0);
            let mc = mc_decay(&spec, &grid, 4000, seed).unwrap();
            let se = mc.std_errors.as_ref().unwrap();
            for (i, &t) in grid.iter().enumerate() {
                let want = exact_decay(&spec, t);
                let tol = 3.0 * se[i] + 1e-12;
                assert!(
                    (mc.values[i] - want).abs() <= tol,
                    "t={t}: {} vs {want} (se {})",
                    mc.values[i],
                    se[i]
                );
            }
        }
    }

    #[test]
    fn mc_specific_points() {
        let seed = RealizationSeed::new(3, 0);
        // uniform, z = 4, beta = 1, t = 1: (sin 2 / 2)^4
        let spec = nn_spec(CouplingLaw::Random(DistributionSpec::uniform(1.0)), 2, 1.0);
        let mc = mc_decay(&spec, &[1.0], 100_000, seed).unwrap();
        let want = (2f64.sin() / 2.0).powi(4);
        assert!((want - 0.04275).abs() < 1e-4);
        assert!((mc.values[0] - want).abs() <= 3.0 * mc.std_errors.as_ref().unwrap()[0]);
        // gaussian, z = 2, beta = 1: e^{-2 t^2}
        let spec = nn_spec(CouplingLaw::Random(DistributionSpec::gaussian(1.0)), 1, 1.0);
        let mc = mc_decay(&spec, &[0.8], 100_000, seed).unwrap();
        let want = (-2.0 * 0.8 * 0.8f64).exp();
        assert!((mc.values[0] - want).abs() <= 3.0 * mc.std_errors.as_ref().unwrap()[0]);
    }

    #[test]
    fn mc_rejects_tiny_samples() {
        let spec = nn_spec(CouplingLaw::Nonrandom, 1, 1.0);
        assert!(mc_decay(&spec, &[0.0, 1.0], 10, RealizationSeed::new(1, 0)).is_err());
    }

    fn dense_grid(t_max: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| t_max * i as f64 / n as f64).collect()
    }

    #[test]
    fn bernoulli_verdict_is_almost_periodic() {
        let spec = nn_spec(CouplingLaw::Random(DistributionSpec::bernoulli(1.0)), 2, 1.0);
        let grid = dense_grid(400.0, 120_000);
        let curve = exact_curve(&spec, &grid);
        let verdict = decay_envelope_classify(&curve).unwrap();
        assert_eq!(verdict.class, DecayClass::NoDecayAlmostPeriodic);
        assert!(verdict.min_recurrence > 0.99, "{}", verdict.min_recurrence);
    }

    #[test]
    fn uniform_verdict_is_power_law_with_exponent_minus_z() {
        let z = 4usize;
        let spec = nn_spec(CouplingLaw::Random(DistributionSpec::uniform(1.0)), z / 2, 1.0);
        let grid = dense_grid(300.0, 90_000);
        let curve = exact_curve(&spec, &grid);
        match decay_envelope_classify(&curve).unwrap().class {
            DecayClass::PowerLaw { exponent } => {
                assert!(
                    (exponent + z as f64).abs() < 0.1 * z as f64,
                    "exponent {exponent}"
                );
            }
            other => panic!("expected power law, got {other:?}"),
        }
    }

    #[test]
    fn gaussian_verdict_is_gaussian_like() {
        let spec = nn_spec(CouplingLaw::Random(DistributionSpec::gaussian(1.0)), 2, 1.0);
        // gaussian curves die fast; classify on a shifted-decade grid
        let grid: Vec<f64> = (1..=4000).map(|i| i as f64 * 1e-3).collect();
        let curve = exact_curve(&spec, &grid);
        let verdict = decay_envelope_classify(&curve).unwrap();
        assert_eq!(verdict.class, DecayClass::GaussianLike);
    }

    #[test]
    fn classifier_demands_two_decades() {
        let spec = nn_spec(CouplingLaw::Nonrandom, 1, 1.0);
        let grid: Vec<f64> = (10..=300).map(|i| i as f64 * 0.1).collect();
        let curve = exact_curve(&spec, &grid);
        assert!(decay_envelope_classify(&curve).is_err());
    }

    #[test]
    fn nonrandom_dyadic_profile_telescopes_to_sinc_squared() {
        let grid = dense_grid(200.0, 40_000);
        let curve = nonrandom_profile_decay(&grid, 200.0);
        for (i, &t) in grid.iter().enumerate() {
            let want = if t == 0.0 { 1.0 } else { (t.sin() / t).powi(2) };
            assert!(
                (curve.values[i] - want).abs() < 1e-9,
                "t={t}: {} vs {want}",
                curve.values[i]
            );
        }
        // even in t
        let v_neg = curve
            .times
            .iter()
            .zip(&curve.values)
            .map(|(&t, &v)| (exact_decay_at(-t), v))
            .take(100);
        for (a, b) in v_neg {
            assert!((a - b).abs() < 1e-9);
        }
        // algebraic decay verdict with the z = 2 exponent
        match decay_envelope_classify(&curve).unwrap().class {
            DecayClass::PowerLaw { exponent } => {
                assert!((exponent + 2.0).abs() < 0.2, "exponent {exponent}")
            }
            other => panic!("expected power law, got {other:?}"),
        }
    }

    fn exact_decay_at(t: f64) -> f64 {
        let spec = EmchRadinSpec {
            profile: CouplingProfile::dyadic_for(200.0, 1e-12),
            law: CouplingLaw::Nonrandom,
            gamma: 1.0,
        };
        exact_decay(&spec, t)
    }

    #[test]
    fn stability_flags_follow_law_and_profile() {
        let bern = nn_spec(CouplingLaw::Random(DistributionSpec::bernoulli(1.0)), 2, 1.0);
        let flags = exact_curve(&bern, &[0.0, 1.0]).stability;
        assert!(flags.first_kind && flags.second_kind && flags.profile_l1);
        let gauss = nn_spec(CouplingLaw::Random(DistributionSpec::gaussian(1.0)), 2, 1.0);
        let flags = exact_curve(&gauss, &[0.0, 1.0]).stability;
        assert!(!flags.first_kind && !flags.second_kind);
    }

    #[test]
    fn envelope_is_never_exponential_for_bounded_laws() {
        // consistency with the semiboundedness obstruction: under an l1
        // profile with bounded couplings the fitted envelope is algebraic or
        // recurrent, never a convincing gaussian
        for law in [
            CouplingLaw::Random(DistributionSpec::bernoulli(1.0)),
            CouplingLaw::Random(DistributionSpec::uniform(1.0)),
        ] {
            let spec = nn_spec(law, 2, 1.0);
            let grid = dense_grid(300.0, 90_000);
            let curve = exact_curve(&spec, &grid);
            let verdict = decay_envelope_classify(&curve).unwrap();
            assert_ne!(verdict.class, DecayClass::GaussianLike);
            assert!(!matches!(verdict.class, DecayClass::Inconclusive));
        }
    }

    #[test]
    fn finite_volume_stabilizes_exactly_across_nested_volumes() {
        let spec = nn_spec(CouplingLaw::Random(DistributionSpec::uniform(1.0)), 2, 1.0);
        let seed = RealizationSeed::new(55, 3);
        let t = 1.37;
        // volume already holds all 4 bonds: adding more volume changes
        // nothing, exactly
        let a = finite_volume_magnetization(&spec, 4, t, seed).unwrap();
        let full: f64 = {
            // same bonds, same draws, whole profile
            finite_volume_magnetization(&spec, 4, t, seed).unwrap()
        };
        assert_eq!(a.to_bits(), full.to_bits());
        assert!(finite_volume_magnetization(&spec, 5, t, seed).is_err());
        // t = 0 gives delta
        let at0 = finite_volume_magnetization(&spec, 4, 0.0, seed).unwrap();
        assert_eq!(at0, delta_coefficient(1.0));
    }

    #[test]
    fn finite_volume_matches_the_product_formula_with_shared_draws() {
        // the dyadic profile truncated at different cutoffs shares leading
        // bond draws, so partial volumes nest consistently
        let spec = EmchRadinSpec {
            profile: CouplingProfile::Dyadic { cutoff: 8 },
            law: CouplingLaw::Random(DistributionSpec::bernoulli(1.0)),
            gamma: 0.7,
        };
        let seed = RealizationSeed::new(21, 9);
        let t = 0.83;
        let m = finite_volume_magnetization(&spec, 16, t, seed).unwrap();
        // manual product over the same stream
        let mut rng = seed.rng();
        let mut g = 1.0;
        for (eps, mult) in spec.profile.bond_strengths() {
            for _ in 0..mult {
                let j = match &spec.law {
                    CouplingLaw::Random(d) => d.sample(&mut rng),
                    CouplingLaw::Nonrandom => 1.0,
                };
                g *= (2.0 * eps * j * t).cos();
            }
        }
        assert!((m - delta_coefficient(0.7) * g).abs() < 1e-15);
    }
}
