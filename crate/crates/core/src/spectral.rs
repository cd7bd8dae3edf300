//! Fourier–Stieltjes analysis of finite spectral-measure approximations.
//!
//! A measure is a weighted atom list. The transform `mu_hat(t) = sum_k w_k
//! e^{-i t x_k}` is exact; the Cesàro time average `<|mu_hat|^2>_T` is
//! evaluated in closed form per atom pair (the integral of `e^{-it(x_j-x_k)}`
//! is a sinc), never by time sampling, so the result is deterministic and
//! costs O(atoms^2).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{linear_fit, pairwise_sum, sinc, LineFit};

/// Weighted point masses `(position, weight)` approximating a spectral
/// measure; positions ascend, weights are nonnegative.
#[derive(Debug, Clone)]
pub struct SpectralMeasureApprox {
    atoms: Vec<(f64, f64)>,
    total_mass: f64,
}

impl SpectralMeasureApprox {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Domain("measure needs at least one atom".into()));
        }
        if atoms.iter().any(|&(x, w)| !x.is_finite() || w < 0.0 || !w.is_finite()) {
            return Err(Error::Domain("atom weights must be finite and >= 0".into()));
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let weights: Vec<f64> = atoms.iter().map(|&(_, w)| w).collect();
        let total_mass = pairwise_sum(&weights);
        Ok(Self { atoms, total_mass })
    }

    pub fn point_mass(x: f64) -> Self {
        Self {
            atoms: vec![(x, 1.0)],
            total_mass: 1.0,
        }
    }

    /// Midpoint discretization of the uniform density `1/(b-a)` on `[a, b]`.
    pub fn uniform_density(a: f64, b: f64, n_atoms: usize) -> Result<Self> {
        if !(b > a) || n_atoms == 0 {
            return Err(Error::Domain("need b > a and at least one atom".into()));
        }
        let w = 1.0 / n_atoms as f64;
        let atoms = (0..n_atoms)
            .map(|i| (a + (b - a) * (i as f64 + 0.5) / n_atoms as f64, w))
            .collect();
        Self::new(atoms)
    }

    /// Depth-`d` dyadic approximation of the Cantor middle-thirds measure on
    /// `[-pi, pi]`: atoms at `sum_{j<=d} 2 pi 3^{-j} s_j` over sign patterns
    /// `s_j = +-1`, each of weight `2^{-d}`. Factors beyond the depth differ
    /// from 1 by O(u^2 9^{-d}) in the transform.
    pub fn cantor(depth: u32) -> Result<Self> {
        if depth == 0 || depth > 24 {
            return Err(Error::Domain("cantor depth must be in 1..=24".into()));
        }
        let m = 1usize << depth;
        let w = 1.0 / m as f64;
        let coeffs: Vec<f64> = (1..=depth)
            .map(|j| 2.0 * std::f64::consts::PI / 3f64.powi(j as i32))
            .collect();
        let atoms = (0..m)
            .map(|bits| {
                let mut x = 0.0;
                for (j, c) in coeffs.iter().enumerate() {
                    x += if bits >> j & 1 == 1 { *c } else { -*c };
                }
                (x, w)
            })
            .collect();
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Exact transform `sum_k w_k e^{-i t x_k}`.
    pub fn fs_transform(&self, t: f64) -> Complex64 {
        let terms: Vec<Complex64> = self
            .atoms
            .iter()
            .map(|&(x, w)| {
                let (s, c) = (-t * x).sin_cos();
                Complex64::new(w * c, w * s)
            })
            .collect();
        crate::numeric::pairwise_sum_complex(&terms)
    }

    /// Product measure combination: atoms `x_i + theta * y_j` with weights
    /// `w_i * u_j`. This is the spectral measure of a Kronecker sum for
    /// product vector states, and its transform factorizes exactly as
    /// `f1(t) * f2(theta t)`.
    pub fn kronecker_combine(
        a: &SpectralMeasureApprox,
        b: &SpectralMeasureApprox,
        theta: f64,
        atom_cap: usize,
    ) -> Result<SpectralMeasureApprox> {
        let n = a.atoms.len().checked_mul(b.atoms.len());
        match n {
            Some(n) if n <= atom_cap => {}
            _ => {
                return Err(Error::Size(format!(
                    "product measure would hold {} x {} atoms (cap {atom_cap})",
                    a.atoms.len(),
                    b.atoms.len()
                )))
            }
        }
        let mut atoms = Vec::with_capacity(a.atoms.len() * b.atoms.len());
        for &(x, w) in &a.atoms {
            for &(y, u) in &b.atoms {
                atoms.push((x + theta * y, w * u));
            }
        }
        SpectralMeasureApprox::new(atoms)
    }

    /// Cesàro average `<|mu_hat|^2>_T = (1/T) \int_0^T |mu_hat(t)|^2 dt`,
    /// closed form per atom pair.
    pub fn cesaro_average(&self, t_avg: f64) -> f64 {
        let atoms = &self.atoms;
        let n = atoms.len();
        // diagonal + twice the upper triangle (the integrand is real-even in
        // the pair difference)
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (xi, wi) = atoms[i];
                let mut row = wi * wi;
                for &(xj, wj) in &atoms[i + 1..] {
                    row += 2.0 * wi * wj * sinc(t_avg * (xi - xj));
                }
                row
            })
            .collect();
        pairwise_sum(&rows)
    }

    /// Mass of the heaviest closed interval of length `scale` (sliding-window
    /// scan over the atoms).
    pub fn max_interval_mass(&self, scale: f64) -> f64 {
        let n = self.atoms.len();
        let mut best = 0.0f64;
        let mut lo = 0usize;
        let mut window = 0.0f64;
        for hi in 0..n {
            window += self.atoms[hi].1;
            while self.atoms[hi].0 - self.atoms[lo].0 > scale {
                window -= self.atoms[lo].1;
                lo += 1;
            }
            best = best.max(window);
        }
        best
    }

    /// CSV export: `position,weight` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,weight\n");
        for &(x, w) in &self.atoms {
            out.push_str(&format!("{x},{w}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("position")) {
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("csv line {}: expected two fields", i + 1)))?;
            let x: f64 = a
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("csv line {}: bad position", i + 1)))?;
            let w: f64 = b
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("csv line {}: bad weight", i + 1)))?;
            atoms.push((x, w));
        }
        Self::new(atoms)
    }
}

/// Truncated Fourier–Stieltjes transform of the Cantor measure:
/// `prod_{j=1..depth} cos(2/3 * u * pi * 3^{-j+1})`.
pub fn cantor_fs(u: f64, depth: u32) -> f64 {
    assert!(depth >= 1);
    let mut prod = 1.0;
    for j in 1..=depth {
        let arg = 2.0 / 3.0 * u * std::f64::consts::PI * 3f64.powi(-(j as i32) + 1);
        prod *= arg.cos();
    }
    prod
}

/// Cesàro-decay report: per-T averages and the fitted exponent of
/// `<|mu_hat|^2>_T ~ T^{-alpha}`.
#[derive(Debug, Clone, Serialize)]
pub struct CesaroReport {
    pub t_values: Vec<f64>,
    pub averages: Vec<f64>,
    pub alpha_hat: f64,
    pub fit_r_squared: f64,
}

/// Fit the Cesàro decay exponent over a T grid spanning at least two decades.
pub fn cesaro_decay(measure: &SpectralMeasureApprox, t_grid: &[f64]) -> Result<CesaroReport> {
    if t_grid.len() < 3 {
        return Err(Error::Fit("need at least 3 grid points".into()));
    }
    let (lo, hi) = (
        t_grid.iter().cloned().fold(f64::INFINITY, f64::min),
        t_grid.iter().cloned().fold(0.0f64, f64::max),
    );
    if !(lo > 0.0) || hi / lo < 100.0 {
        return Err(Error::Fit(format!(
            "T grid must span >= 2 decades, got [{lo}, {hi}]"
        )));
    }
    let averages: Vec<f64> = t_grid.iter().map(|&t| measure.cesaro_average(t)).collect();
    let log_t: Vec<f64> = t_grid.iter().map(|&t| t.ln()).collect();
    let log_a: Vec<f64> = averages
        .iter()
        .map(|&a| a.max(f64::MIN_POSITIVE).ln())
        .collect();
    let LineFit {
        slope, r_squared, ..
    } = linear_fit(&log_t, &log_a)?;
    Ok(CesaroReport {
        t_values: t_grid.to_vec(),
        averages,
        alpha_hat: -slope,
        fit_r_squared: r_squared,
    })
}

/// Hölder-continuity scan result.
#[derive(Debug, Clone, Serialize)]
pub struct HolderReport {
    pub alpha: f64,
    /// Max over scanned scales of `mass(I)/|I|^alpha`.
    pub constant: f64,
    /// Scale at which the max was attained.
    pub grid_scale: f64,
    pub per_scale: Vec<(f64, f64)>,
    /// Set when the constant keeps growing as the scale shrinks, i.e. the
    /// scan rejects uniform alpha-Hölder continuity at these scales.
    pub diverging: bool,
}

/// Scan sliding intervals at each scale and report the worst constant in
/// `mass(I) <= C |I|^alpha`.
pub fn holder_constant(
    measure: &SpectralMeasureApprox,
    alpha: f64,
    scales: &[f64],
) -> Result<HolderReport> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must be in [0,1], got {alpha}")));
    }
    if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Domain("scales must be positive".into()));
    }
    let mut per_scale: Vec<(f64, f64)> = scales
        .iter()
        .map(|&s| (s, measure.max_interval_mass(s) / s.powf(alpha)))
        .collect();
    per_scale.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap()); // large -> small scale
    let (grid_scale, constant) = per_scale
        .iter()
        .cloned()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    // growth exponent of the constant as the scale shrinks
    let diverging = if per_scale.len() >= 2 {
        let xs: Vec<f64> = per_scale.iter().map(|&(s, _)| (1.0 / s).ln()).collect();
        let ys: Vec<f64> = per_scale.iter().map(|&(_, c)| c.ln()).collect();
        match linear_fit(&xs, &ys) {
            Ok(fit) => fit.slope > 0.2,
            Err(_) => false,
        }
    } else {
        false
    };
    Ok(HolderReport {
        alpha,
        constant,
        grid_scale,
        per_scale,
        diverging,
    })
}

/// Tail-window suprema of `|mu_hat|`; a finite-scale stand-in for the decay
/// at infinity that defines Rajchman measures.
#[derive(Debug, Clone, Serialize)]
pub struct RajchmanReport {
    /// `(window_lo, window_hi, sup |mu_hat|)` over consecutive windows.
    pub window_sups: Vec<(f64, f64, f64)>,
    /// True when the last window's sup dropped below half the first's.
    /// Finite-scale heuristic only: says nothing about the true limit.
    pub decaying_at_tested_scale: bool,
}

pub fn rajchman_test(measure: &SpectralMeasureApprox, t_grid: &[f64]) -> RajchmanReport {
    let mut grid = t_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n_windows = 6usize.min(grid.len().max(1));
    let per = (grid.len() / n_windows).max(1);
    let mut window_sups = Vec::new();
    for chunk in grid.chunks(per) {
        if chunk.is_empty() {
            continue;
        }
        let sup = chunk
            .iter()
            .map(|&t| measure.fs_transform(t).norm())
            .fold(0.0f64, f64::max);
        window_sups.push((chunk[0], *chunk.last().unwrap(), sup));
    }
    let decaying = match (window_sups.first(), window_sups.last()) {
        (Some(&(_, _, first)), Some(&(_, _, last))) if window_sups.len() >= 2 => {
            last < 0.5 * first
        }
        _ => false,
    };
    RajchmanReport {
        window_sups,
        decaying_at_tested_scale: decaying,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_at_zero_is_total_mass() {
        let m = SpectralMeasureApprox::new(vec![(0.3, 0.25), (-1.0, 0.5), (2.0, 0.125)]).unwrap();
        let f0 = m.fs_transform(0.0);
        assert_eq!(f0.re, m.total_mass());
        assert_eq!(f0.im, 0.0);
    }

    #[test]
    fn point_mass_has_unit_modulus() {
        let m = SpectralMeasureApprox::point_mass(0.7);
        for t in [0.0, 1.0, 13.7, -250.0] {
            assert!((m.fs_transform(t).norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn two_symmetric_atoms_give_cosine() {
        let m = SpectralMeasureApprox::new(vec![(1.0, 0.5), (-1.0, 0.5)]).unwrap();
        for t in [0.1, 1.0, 2.5, 10.0] {
            let f = m.fs_transform(t);
            assert!((f.re - t.cos()).abs() < 1e-14);
            assert!(f.im.abs() < 1e-14);
        }
    }

    #[test]
    fn transform_bounded_by_mass_on_grid() {
        let m = SpectralMeasureApprox::cantor(8).unwrap();
        for i in 0..200 {
            let t = i as f64 * 1.37;
            assert!(m.fs_transform(t).norm() <= m.total_mass() + 1e-12);
        }
    }

    #[test]
    fn uniform_density_transform_is_sinc() {
        // 10^4-atom discretization of density 1/2 on [-1,1] vs sin(t)/t
        let m = SpectralMeasureApprox::uniform_density(-1.0, 1.0, 10_000).unwrap();
        for t in [0.5, 1.0, 3.0, 7.0, 10.0] {
            let f = m.fs_transform(t);
            assert!(
                (f.re - sinc(t)).abs() < 1e-3,
                "t={t}: {} vs {}",
                f.re,
                sinc(t)
            );
            assert!(f.im.abs() < 1e-3);
        }
    }

    #[test]
    fn cantor_atoms_match_product_transform() {
        // the finite atom sum and the truncated cosine product are the same
        // object written two ways
        let depth = 10;
        let m = SpectralMeasureApprox::cantor(depth).unwrap();
        for u in [1.0, 2.0, 5.5, 9.0] {
            let f = m.fs_transform(u);
            assert!((f.re - cantor_fs(u, depth)).abs() < 1e-11, "u={u}");
            assert!(f.im.abs() < 1e-11);
        }
    }

    #[test]
    fn cantor_scaling_identity() {
        // Gamma(3n) = Gamma(n) for integers, via depth reindexing
        for n in [1i64, 2, 5, 27, 100] {
            let lhs = cantor_fs(3.0 * n as f64, 20);
            let rhs = cantor_fs(n as f64, 20);
            assert!((lhs - rhs).abs() < 1e-12, "n={n}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn cantor_is_not_rajchman_along_powers_of_three() {
        let gamma1 = cantor_fs(1.0, 20).abs();
        assert!(gamma1 > 0.3);
        for m in 0..=20u32 {
            let v = cantor_fs(3f64.powi(m as i32), 25 + 0).abs();
            // Gamma(3^m) keeps the magnitude of Gamma(1) (truncation-depth
            // shifted), so the transform cannot vanish at infinity
            assert!(v > 0.3, "m={m}: {v}");
        }
    }

    #[test]
    fn cesaro_of_point_mass_is_flat() {
        let m = SpectralMeasureApprox::point_mass(0.25);
        let grid: Vec<f64> = (0..9).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
        let r = cesaro_decay(&m, &grid).unwrap();
        for a in &r.averages {
            assert!((a - 1.0).abs() < 1e-12);
        }
        assert!(r.alpha_hat.abs() < 1e-10);
    }

    #[test]
    fn cesaro_of_ac_density_has_unit_exponent() {
        let m = SpectralMeasureApprox::uniform_density(-1.0, 1.0, 4000).unwrap();
        let grid: Vec<f64> = (0..9).map(|k| 10.0 * 10f64.powf(k as f64 / 4.0)).collect();
        let r = cesaro_decay(&m, &grid).unwrap();
        assert!(
            (r.alpha_hat - 1.0).abs() < 0.1,
            "alpha_hat {}",
            r.alpha_hat
        );
    }

    #[test]
    fn cesaro_grid_must_span_two_decades() {
        let m = SpectralMeasureApprox::point_mass(0.0);
        assert!(cesaro_decay(&m, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn product_measure_transform_factorizes() {
        let a = SpectralMeasureApprox::new(vec![(0.2, 0.5), (-0.9, 0.5)]).unwrap();
        let b = SpectralMeasureApprox::uniform_density(-1.0, 1.0, 37).unwrap();
        let theta = 0.618;
        let prod = SpectralMeasureApprox::kronecker_combine(&a, &b, theta, 1 << 20).unwrap();
        for t in [0.3, 1.7, 9.2] {
            let lhs = prod.fs_transform(t);
            let rhs = a.fs_transform(t) * b.fs_transform(theta * t);
            assert!((lhs - rhs).norm() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn holder_scan_uniform_vs_point_mass() {
        let scales = [0.5, 0.25, 0.125, 0.0625];
        // Lebesgue-like measure at alpha = 1: constant ~ density
        let m = SpectralMeasureApprox::uniform_density(-1.0, 1.0, 4096).unwrap();
        let r = holder_constant(&m, 1.0, &scales).unwrap();
        assert!((r.constant - 0.5).abs() < 0.05, "constant {}", r.constant);
        assert!(!r.diverging);
        // point mass at alpha > 0: constant grows as the scale shrinks
        let p = SpectralMeasureApprox::point_mass(0.0);
        let r = holder_constant(&p, 0.5, &scales).unwrap();
        assert!(r.diverging);
        // parameter domain
        assert!(holder_constant(&p, 1.5, &scales).is_err());
    }

    #[test]
    fn holder_of_cantor_at_its_dimension_is_bounded() {
        // self-similar oracle: mass 2^-k sits on intervals of length ~ 2 pi 3^-k,
        // so C = sup mass/|I|^alpha stays bounded at alpha = log2/log3
        let alpha = 2f64.ln() / 3f64.ln();
        let m = SpectralMeasureApprox::cantor(14).unwrap();
        let scales: Vec<f64> = (2..=6)
            .map(|k| 2.0 * std::f64::consts::PI / 3f64.powi(k))
            .collect();
        let r = holder_constant(&m, alpha, &scales).unwrap();
        assert!(!r.diverging, "constants per scale: {:?}", r.per_scale);
        let max = r.per_scale.iter().map(|&(_, c)| c).fold(0.0f64, f64::max);
        let min = r
            .per_scale
            .iter()
            .map(|&(_, c)| c)
            .fold(f64::INFINITY, f64::min);
        assert!(max / min < 3.0, "spread {max}/{min}");
    }

    #[test]
    fn rajchman_heuristic_separates_references() {
        // a.c. sinc example decays like 1/t
        let m = SpectralMeasureApprox::uniform_density(-1.0, 1.0, 3000).unwrap();
        let grid: Vec<f64> = (1..=600).map(|i| i as f64 * 0.25).collect();
        assert!(rajchman_test(&m, &grid).decaying_at_tested_scale);
        // point mass never decays
        let p = SpectralMeasureApprox::point_mass(1.0);
        assert!(!rajchman_test(&p, &grid).decaying_at_tested_scale);
        // Cantor sampled along 3^m stays put
        let c = SpectralMeasureApprox::cantor(16).unwrap();
        let grid: Vec<f64> = (0..=12).map(|m| 3f64.powi(m)).collect();
        assert!(!rajchman_test(&c, &grid).decaying_at_tested_scale);
    }

    #[test]
    fn csv_round_trip() {
        let m = SpectralMeasureApprox::new(vec![(0.5, 0.25), (1.5, 0.75)]).unwrap();
        let back = SpectralMeasureApprox::from_csv(&m.to_csv()).unwrap();
        assert_eq!(m.atoms(), back.atoms());
    }
}
