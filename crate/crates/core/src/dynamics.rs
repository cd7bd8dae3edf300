//! Time evolution on finite truncations and the transport diagnostics built
//! on it: sojourn integrals, position moments, diffusion exponents, and the
//! resolvent-averaged transition probability evaluated by two independent
//! quadratures.
//!
//! Evolution goes through the full spectral decomposition, which at desk
//! scale is exact up to rounding; time integrals of trigonometric
//! polynomials are done in closed form where possible and by adaptive
//! quadrature where the two-route identity demands an independent path.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::OperatorMatrix;
use crate::linalg::EigenSystem;
use crate::numeric::{adaptive_simpson, linear_fit, pairwise_sum, trapezoid};

/// Normalized complex state over sites.
#[derive(Debug, Clone)]
pub struct StateVector {
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Normalizes on construction; rejects the zero vector.
    pub fn new(mut amps: Vec<Complex64>) -> Result<Self> {
        let norm2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return Err(Error::Domain("state must have finite positive norm".into()));
        }
        let inv = 1.0 / norm2.sqrt();
        for a in amps.iter_mut() {
            *a *= inv;
        }
        Ok(Self { amps })
    }

    /// Kronecker delta at `site`.
    pub fn delta(dim: usize, site: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[site] = Complex64::new(1.0, 0.0);
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn overlap(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// Eigendecomposition of an operator together with the site radii needed for
/// `|X|^m` observables. Immutable; shared read-only by parallel callers.
pub struct Propagator {
    eigen: EigenSystem,
    radii: Vec<f64>,
}

impl Propagator {
    pub fn new(op: &OperatorMatrix) -> Result<Self> {
        let eigen = op.eigendecomposition()?;
        let radii = (0..op.dim()).map(|s| op.radius(s)).collect();
        Ok(Self { eigen, radii })
    }

    /// Recenter the coordinate map on a chosen origin site (useful for
    /// chains indexed from 0).
    pub fn with_origin(op: &OperatorMatrix, origin: usize) -> Result<Self> {
        let eigen = op.eigendecomposition()?;
        let oc = op.coord(origin).to_vec();
        let radii = (0..op.dim())
            .map(|s| {
                op.coord(s)
                    .iter()
                    .zip(&oc)
                    .map(|(&c, &o)| ((c - o) as f64) * ((c - o) as f64))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        Ok(Self { eigen, radii })
    }

    pub fn dim(&self) -> usize {
        self.eigen.dim
    }

    pub fn eigen(&self) -> &EigenSystem {
        &self.eigen
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Eigenbasis coefficients `c_k = <v_k, psi>`.
    pub fn coefficients(&self, psi: &StateVector) -> Vec<Complex64> {
        assert_eq!(psi.dim(), self.dim());
        (0..self.dim())
            .map(|k| {
                let v = self.eigen.vector(k);
                let mut acc = Complex64::new(0.0, 0.0);
                for (x, &vx) in v.iter().enumerate() {
                    acc += vx * psi.amps[x];
                }
                acc
            })
            .collect()
    }

    /// `e^{-itH} psi`, exact through the spectral decomposition.
    pub fn evolve(&self, psi: &StateVector, t: f64) -> StateVector {
        let coeffs = self.coefficients(psi);
        self.evolve_coeffs(&coeffs, t)
    }

    /// Evolution from precomputed coefficients (for time grids).
    pub fn evolve_coeffs(&self, coeffs: &[Complex64], t: f64) -> StateVector {
        let n = self.dim();
        let mut amps = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..n {
            let phase = Complex64::from_polar(1.0, -t * self.eigen.values[k]);
            let ck = coeffs[k] * phase;
            if ck.norm_sqr() < 1e-60 {
                continue;
            }
            let v = self.eigen.vector(k);
            for (x, &vx) in v.iter().enumerate() {
                amps[x] += ck * vx;
            }
        }
        StateVector { amps }
    }

    /// Transition probabilities `|psi_t(x)|^2` at one time.
    pub fn position_probabilities(&self, coeffs: &[Complex64], t: f64) -> Vec<f64> {
        self.evolve_coeffs(coeffs, t)
            .amps
            .iter()
            .map(|a| a.norm_sqr())
            .collect()
    }
}

/// Convenience one-shot evolution.
pub fn evolve(op: &OperatorMatrix, psi0: &StateVector, t: f64) -> Result<StateVector> {
    if psi0.dim() != op.dim() {
        return Err(Error::Domain(format!(
            "state dimension {} does not match operator dimension {}",
            psi0.dim(),
            op.dim()
        )));
    }
    Ok(Propagator::new(op)?.evolve(psi0, t))
}

/// A tracked observable over a time (or inverse-time) grid.
#[derive(Debug, Clone, Serialize)]
pub struct TransportSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub observable: String,
}

impl TransportSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, observable: impl Into<String>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::Domain("series needs matching nonempty grids".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("series values must be finite".into()));
        }
        Ok(Self {
            times,
            values,
            observable: observable.into(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("t,{}\n", self.observable);
        for (t, v) in self.times.iter().zip(&self.values) {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }
}

/// Sojourn integral over `[-T, T]` of the region occupation.
#[derive(Debug, Clone, Serialize)]
pub struct SojournReport {
    pub integral: f64,
    pub t_max: f64,
    /// Time-average limit of the occupation (the stationary part); a bound
    /// state keeps this away from zero and the integral grows linearly.
    pub stationary_mass: f64,
    pub linear_growth: bool,
}

/// `J(S; psi) = \int_{-T}^{T} ||P_S e^{-itH} psi||^2 dt`, in closed form: the
/// occupation is a trigonometric polynomial in t, so each pair `(k, l)` of
/// eigenmodes contributes `2 sin(T(E_k - E_l))/(E_k - E_l)`.
pub fn sojourn_time(
    prop: &Propagator,
    psi: &StateVector,
    region: &[usize],
    t_max: f64,
) -> Result<SojournReport> {
    if region.is_empty() {
        return Err(Error::Domain("region must be nonempty".into()));
    }
    if !(t_max > 0.0) {
        return Err(Error::Domain("t_max must be positive".into()));
    }
    let n = prop.dim();
    let coeffs = prop.coefficients(psi);
    let mut integral = 0.0;
    let mut stationary = 0.0;
    for &x in region {
        if x >= n {
            return Err(Error::Domain(format!("site {x} outside the box")));
        }
        let a: Vec<Complex64> = (0..n).map(|k| coeffs[k] * prop.eigen.vector(k)[x]).collect();
        let mut rows = Vec::with_capacity(n);
        for k in 0..n {
            if a[k].norm_sqr() < 1e-60 {
                rows.push(0.0);
                continue;
            }
            let mut row = a[k].norm_sqr() * 2.0 * t_max; // diagonal pair
            stationary += a[k].norm_sqr();
            for l in 0..n {
                if l == k || a[l].norm_sqr() < 1e-60 {
                    continue;
                }
                let delta = prop.eigen.values[k] - prop.eigen.values[l];
                let kernel = if (t_max * delta).abs() < 1e-7 {
                    2.0 * t_max * (1.0 - (t_max * delta) * (t_max * delta) / 6.0)
                } else {
                    2.0 * (t_max * delta).sin() / delta
                };
                row += (a[k] * a[l].conj()).re * kernel;
            }
            rows.push(row);
        }
        integral += pairwise_sum(&rows);
    }
    let linear_part = 2.0 * t_max * stationary;
    Ok(SojournReport {
        integral,
        t_max,
        stationary_mass: stationary,
        linear_growth: stationary > 1e-10 && linear_part > 0.5 * integral,
    })
}

/// `<|X|^m>(t)` over a time grid, exact per time point.
pub fn moments(
    prop: &Propagator,
    psi: &StateVector,
    m: f64,
    t_grid: &[f64],
) -> Result<TransportSeries> {
    if !(m > 0.0) {
        return Err(Error::Domain("moment order must be positive".into()));
    }
    let coeffs = prop.coefficients(psi);
    let weights: Vec<f64> = prop.radii.iter().map(|&r| r.powf(m)).collect();
    let values: Vec<f64> = t_grid
        .iter()
        .map(|&t| {
            let probs = prop.position_probabilities(&coeffs, t);
            let terms: Vec<f64> = probs.iter().zip(&weights).map(|(p, w)| p * w).collect();
            pairwise_sum(&terms)
        })
        .collect();
    TransportSeries::new(t_grid.to_vec(), values, format!("abs_x_pow_{m}"))
}

/// Running time averages `<g>_T = (1/T) \int_0^T g dt` by trapezoid on the
/// grid; the grid is assumed to start at (or near) zero.
pub fn time_average(series: &TransportSeries) -> Result<TransportSeries> {
    let n = series.times.len();
    if n < 2 {
        return Err(Error::Fit("need at least two points to average".into()));
    }
    let mut times = Vec::with_capacity(n - 1);
    let mut values = Vec::with_capacity(n - 1);
    for i in 1..n {
        let t = series.times[i];
        let integral = trapezoid(&series.times[..=i], &series.values[..=i]);
        times.push(t);
        values.push(integral / t);
    }
    TransportSeries::new(times, values, format!("avg_{}", series.observable))
}

/// Windowed liminf/limsup proxies for the diffusion exponents.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentPair {
    pub lower: f64,
    pub upper: f64,
    /// Raw window slopes before clipping to [0, 1].
    pub window_slopes: Vec<f64>,
    /// Set when a raw slope fell outside [0, 1] (finite-size artifact).
    pub clipped: bool,
}

/// Diffusion exponents from a time-averaged moment series:
/// `beta_m = d log <|X|^m>_T / d log T^m`, min/max over the last three dyadic
/// windows standing in for liminf/limsup.
pub fn diffusion_exponents(avg_series: &TransportSeries, m: f64) -> Result<ExponentPair> {
    let times = &avg_series.times;
    let n = times.len();
    if n < 8 {
        return Err(Error::Fit("series too short for windowed slopes".into()));
    }
    let t_max = times[n - 1];
    let t_min = times[0];
    if t_max / t_min < 99.0 {
        return Err(Error::Fit(format!(
            "need >= 2 decades of T, got [{t_min}, {t_max}]"
        )));
    }
    let mut window_slopes = Vec::new();
    for w in 1..=3i32 {
        let hi = t_max / 2f64.powi(w - 1);
        let lo = t_max / 2f64.powi(w);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, &t) in times.iter().enumerate() {
            if t >= lo * 0.999 && t <= hi * 1.001 && avg_series.values[i] > 0.0 {
                xs.push((t.powf(m)).ln());
                ys.push(avg_series.values[i].ln());
            }
        }
        if xs.len() < 2 {
            return Err(Error::Fit(format!(
                "dyadic window [{lo}, {hi}] holds fewer than 2 points"
            )));
        }
        window_slopes.push(linear_fit(&xs, &ys)?.slope);
    }
    let raw_lo = window_slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    let raw_hi = window_slopes
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let clipped = raw_lo < 0.0 || raw_hi > 1.0;
    Ok(ExponentPair {
        lower: raw_lo.clamp(0.0, 1.0),
        upper: raw_hi.clamp(0.0, 1.0),
        window_slopes,
        clipped,
    })
}

/// Both evaluations of the resolvent-averaged transition probability at one
/// site, plus their difference.
#[derive(Debug, Clone, Serialize)]
pub struct ResolventTransport {
    /// `2 eta \int_0^inf e^{-2 eta t} P_t(x) dt`, time quadrature truncated
    /// at `t = 20/eta` (the exponential weight bounds the remainder below
    /// 1e-8).
    pub time_side: f64,
    /// `(eta/pi) \int |((H - E - i eta)^{-1} psi)(x)|^2 dE` over the whole
    /// real line, mapped to a finite interval by `E = center + W tan(u)` so
    /// the Lorentzian tails (which carry eta-scale mass at any fixed cutoff)
    /// are integrated rather than truncated.
    pub energy_side: f64,
    pub difference: f64,
}

/// Evaluate the two sides by independent quadratures.
pub fn resolvent_transport(
    prop: &Propagator,
    psi: &StateVector,
    eta: f64,
    site: usize,
) -> Result<ResolventTransport> {
    if !(eta > 0.0) {
        return Err(Error::Domain("eta must be positive".into()));
    }
    if site >= prop.dim() {
        return Err(Error::Domain(format!("site {site} outside the box")));
    }
    let n = prop.dim();
    let coeffs = prop.coefficients(psi);
    let a: Vec<Complex64> = (0..n)
        .map(|k| coeffs[k] * prop.eigen.vector(k)[site])
        .collect();
    let evals = &prop.eigen.values;

    // time side
    let amp_at = |t: f64| -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            acc += a[k] * Complex64::from_polar(1.0, -t * evals[k]);
        }
        acc.norm_sqr()
    };
    let t_cut = 20.0 / eta;
    let time_side = adaptive_simpson(
        &|t: f64| 2.0 * eta * (-2.0 * eta * t).exp() * amp_at(t),
        0.0,
        t_cut,
        1e-9,
    );

    // energy side: substitute E = center + W tan(u); the integrand
    // |R(E)|^2 W / cos^2(u) is bounded on (-pi/2, pi/2) because |R| ~ 1/E
    let center = 0.5 * (evals[0] + evals[n - 1]);
    let half_width = 0.5 * (evals[n - 1] - evals[0]) + 10.0 * eta;
    let resolvent_at = |e: f64| -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            acc += a[k] / Complex64::new(evals[k] - e, -eta);
        }
        acc.norm_sqr()
    };
    let mapped = |u: f64| -> f64 {
        let c = u.cos();
        let e = center + half_width * u.tan();
        resolvent_at(e) * half_width / (c * c)
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let energy_side = eta / std::f64::consts::PI
        * adaptive_simpson(&mapped, -half_pi, half_pi, 1e-9 * std::f64::consts::PI / eta);

    Ok(ResolventTransport {
        time_side,
        energy_side,
        difference: time_side - energy_side,
    })
}

/// Resolvent-averaged moment profile `M_hat(beta, eta)` over an eta grid.
#[derive(Debug, Clone, Serialize)]
pub struct TransportProfile {
    pub beta_exp: f64,
    pub etas: Vec<f64>,
    pub values: Vec<f64>,
    /// Fitted `r` in `M_hat ~ eta^{-r beta}` (1 = ballistic, 1/2 = diffusive,
    /// 0 = localized).
    pub r_exponent: f64,
    /// `sup_eta M_hat(eta) * eta^beta`: the constant of the ballistic bound
    /// `M_hat <= C eta^{-beta}`.
    pub ballistic_constant: f64,
}

/// `M_hat(beta, eta) = sum_x |x|^beta P_hat(x)` evaluated in closed form: the
/// pair `(k, l)` of eigenmodes carries the Lorentzian factor
/// `2 eta / (2 eta + i(E_k - E_l))` against the `|X|^beta` matrix element in
/// the eigenbasis.
pub fn transport_profile(
    prop: &Propagator,
    psi: &StateVector,
    etas: &[f64],
    beta_exp: f64,
) -> Result<TransportProfile> {
    if etas.len() < 2 || etas.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Domain("need >= 2 positive eta values".into()));
    }
    let n = prop.dim();
    if n > 1600 {
        return Err(Error::Size(format!(
            "transport profile densifies |X|^beta in the eigenbasis; capped at 1600 sites, got {n}"
        )));
    }
    let coeffs = prop.coefficients(psi);
    let weights: Vec<f64> = prop.radii.iter().map(|&r| r.powf(beta_exp)).collect();
    // B = V^T diag(w) V, column-major like the eigenvector storage
    let mut scaled = vec![0.0f64; n * n];
    for k in 0..n {
        let v = prop.eigen.vector(k);
        for x in 0..n {
            scaled[k * n + x] = v[x] * weights[x];
        }
    }
    let mut b = vec![0.0f64; n * n];
    for k in 0..n {
        let vk = prop.eigen.vector(k);
        for l in k..n {
            let sl = &scaled[l * n..(l + 1) * n];
            let mut acc = 0.0;
            for x in 0..n {
                acc += vk[x] * sl[x];
            }
            b[k * n + l] = acc;
            b[l * n + k] = acc;
        }
    }
    let evals = &prop.eigen.values;
    let mut values = Vec::with_capacity(etas.len());
    for &eta in etas {
        let rows: Vec<f64> = (0..n)
            .map(|k| {
                let mut acc = 0.0;
                for l in 0..n {
                    let delta = evals[k] - evals[l];
                    let q = Complex64::new(2.0 * eta, 0.0) / Complex64::new(2.0 * eta, delta);
                    acc += (coeffs[k] * coeffs[l].conj() * q).re * b[k * n + l];
                }
                acc
            })
            .collect();
        values.push(pairwise_sum(&rows));
    }
    // fit M_hat ~ eta^{-r beta}
    let xs: Vec<f64> = etas.iter().map(|&e| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|&v| v.max(1e-300).ln()).collect();
    let r_exponent = linear_fit(&xs, &ys)?.slope / beta_exp;
    let ballistic_constant = etas
        .iter()
        .zip(&values)
        .map(|(&e, &v)| v * e.powf(beta_exp))
        .fold(0.0f64, f64::max);
    Ok(TransportProfile {
        beta_exp,
        etas: etas.to_vec(),
        values,
        r_exponent,
        ballistic_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{DistributionSpec, RealizationSeed};
    use crate::lattice::{build_almost_mathieu, build_anderson, AlmostMathieuSpec, AndersonSpec};

    fn free_chain(n: usize) -> OperatorMatrix {
        build_anderson(&AndersonSpec {
            dim: 1,
            box_side: n,
            disorder: DistributionSpec::uniform(1.0),
            v: 0.0,
            periodic: false,
            seed: RealizationSeed::new(0, 0),
        })
        .unwrap()
    }

    #[test]
    fn evolve_at_zero_is_identity() {
        let op = free_chain(40);
        let psi = StateVector::delta(40, 20);
        let out = evolve(&op, &psi, 0.0).unwrap();
        for (a, b) in out.amps().iter().zip(psi.amps()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn eigenvector_picks_up_only_a_phase() {
        let op = free_chain(30);
        let prop = Propagator::new(&op).unwrap();
        let k = 7;
        let v: Vec<Complex64> = prop
            .eigen()
            .vector(k)
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        let psi = StateVector::new(v).unwrap();
        let t = 2.3;
        let out = prop.evolve(&psi, t);
        let overlap = psi.overlap(&out);
        assert!((overlap.norm() - 1.0).abs() < 1e-10);
        let expected = Complex64::from_polar(1.0, -t * prop.eigenvalues()[k]);
        assert!((overlap - expected).norm() < 1e-10);
    }

    #[test]
    fn evolution_is_unitary_and_conserves_probability() {
        let op = build_anderson(&AndersonSpec {
            dim: 1,
            box_side: 120,
            disorder: DistributionSpec::uniform(1.0),
            v: 1.5,
            periodic: false,
            seed: RealizationSeed::new(5, 0),
        })
        .unwrap();
        let prop = Propagator::new(&op).unwrap();
        let psi = StateVector::delta(120, 60);
        let coeffs = prop.coefficients(&psi);
        for t in [0.5, 3.0, 17.0, 123.0] {
            let out = prop.evolve_coeffs(&coeffs, t);
            assert!((out.norm() - 1.0).abs() < 1e-10, "t={t}");
            let probs = prop.position_probabilities(&coeffs, t);
            assert!((pairwise_sum(&probs) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let op = free_chain(10);
        let psi = StateVector::delta(11, 0);
        assert!(evolve(&op, &psi, 1.0).is_err());
    }

    #[test]
    fn sojourn_of_eigenvector_grows_linearly() {
        let op = free_chain(40);
        let prop = Propagator::new(&op).unwrap();
        let k = 3;
        let v: Vec<Complex64> = prop
            .eigen()
            .vector(k)
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        let psi = StateVector::new(v).unwrap();
        let region = [0usize, 1, 2];
        let w: f64 = region
            .iter()
            .map(|&x| prop.eigen().vector(k)[x].powi(2))
            .sum();
        let t_max = 50.0;
        let rep = sojourn_time(&prop, &psi, &region, t_max).unwrap();
        assert!((rep.integral - 2.0 * t_max * w).abs() < 1e-8 * rep.integral.abs());
        assert!(rep.linear_growth);
    }

    #[test]
    fn sojourn_of_remote_state_over_short_horizon_is_tiny() {
        let n = 20;
        let op = build_almost_mathieu(&AlmostMathieuSpec {
            lambda: 0.0,
            omega: 0.0,
            theta: 0.0,
            n_max: n,
        })
        .unwrap();
        let prop = Propagator::new(&op).unwrap();
        let psi = StateVector::delta(n, n - 1);
        let rep = sojourn_time(&prop, &psi, &[0], 0.5).unwrap();
        assert!(rep.integral < 1e-6, "integral {}", rep.integral);
        assert!(sojourn_time(&prop, &psi, &[], 1.0).is_err());
    }

    #[test]
    fn moments_of_eigenvector_are_constant() {
        let op = free_chain(50);
        let prop = Propagator::new(&op).unwrap();
        let v: Vec<Complex64> = prop
            .eigen()
            .vector(10)
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        let psi = StateVector::new(v).unwrap();
        let grid: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let series = moments(&prop, &psi, 2.0, &grid).unwrap();
        let first = series.values[0];
        for v in &series.values {
            assert!((v - first).abs() < 1e-8);
        }
    }

    #[test]
    fn exponents_of_synthetic_series() {
        // ballistic: values ~ T^m with m = 2
        let times: Vec<f64> = (0..60).map(|i| 1.13f64.powi(i)).collect();
        let ballistic: Vec<f64> = times.iter().map(|&t| t * t).collect();
        let s = TransportSeries::new(times.clone(), ballistic, "x2").unwrap();
        let e = diffusion_exponents(&s, 2.0).unwrap();
        assert!((e.lower - 1.0).abs() < 1e-9 && (e.upper - 1.0).abs() < 1e-9);
        assert!(!e.clipped);
        // constant: exponents (0, 0)
        let flat: Vec<f64> = times.iter().map(|_| 3.7).collect();
        let s = TransportSeries::new(times.clone(), flat, "x2").unwrap();
        let e = diffusion_exponents(&s, 2.0).unwrap();
        assert!(e.lower.abs() < 1e-12 && e.upper.abs() < 1e-12);
        assert!(e.lower <= e.upper);
        // too-short series
        let s = TransportSeries::new(vec![1.0, 2.0, 4.0], vec![1.0, 2.0, 3.0], "x").unwrap();
        assert!(diffusion_exponents(&s, 1.0).is_err());
    }

    #[test]
    fn resolvent_sides_agree_and_conserve_probability_on_two_sites() {
        let op = build_almost_mathieu(&AlmostMathieuSpec {
            lambda: 1.0,
            omega: 0.0,
            theta: 0.25,
            n_max: 2,
        })
        .unwrap();
        let prop = Propagator::new(&op).unwrap();
        let psi = StateVector::delta(2, 0);
        let r0 = resolvent_transport(&prop, &psi, 0.3, 0).unwrap();
        let r1 = resolvent_transport(&prop, &psi, 0.3, 1).unwrap();
        assert!((r0.time_side + r1.time_side - 1.0).abs() < 1e-6);
        assert!(r0.difference.abs() < 1e-6);
        assert!(r1.difference.abs() < 1e-6);
        assert!(resolvent_transport(&prop, &psi, -0.1, 0).is_err());
    }

    #[test]
    fn transport_profile_of_eigenvector_is_flat() {
        let op = free_chain(30);
        let prop = Propagator::new(&op).unwrap();
        let v: Vec<Complex64> = prop
            .eigen()
            .vector(5)
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        let psi = StateVector::new(v).unwrap();
        let etas = [0.05, 0.1, 0.2, 0.4];
        let p = transport_profile(&prop, &psi, &etas, 1.0).unwrap();
        let spread = p.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - p.values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-8 * p.values[0].abs());
        assert!(p.r_exponent.abs() < 1e-6);
    }
}
