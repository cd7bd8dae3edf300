//! Finite truncations of the lattice operators and the 1D transfer-matrix
//! machinery.
//!
//! Builders produce [`OperatorMatrix`] values: banded real-symmetric matrices
//! with a site-to-coordinate map. The sparse Jacobi chain places a barrier of
//! height `v` at randomized positions `a_j + omega_j` whose deterministic
//! gaps grow geometrically (`a_j - a_{j-1} = beta^j`, `a_1 + 1 = beta`), so
//! the barrier count up to `R` is O(log R). The boundary condition
//! `u_{-1} cos(phi) - u_0 sin(phi) = 0` is folded into the first diagonal
//! entry as `tan(phi)` (the recursion at site 0 reads
//! `u_1 + u_{-1} + v_0 u_0 = lambda u_0`, and the constraint substitutes
//! `u_{-1} = u_0 tan(phi)`), which makes finite spectra reproducible
//! bit-for-bit. `phi = pi/2` is the Dirichlet pole of that folding and is
//! rejected.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{DistributionSpec, RealizationSeed};
use crate::error::{Error, Result};
use crate::linalg::{EigenSystem, SymTridiag};
use crate::numeric::{linear_fit, mean_and_std_error};
use crate::spectral::SpectralMeasureApprox;

/// Sparse random Jacobi chain on `0..n_max`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseJacobiSpec {
    /// Sparseness base `beta >= 2`.
    pub beta: u32,
    /// Barrier height.
    pub v: f64,
    /// Truncation length (number of sites).
    pub n_max: usize,
    /// Boundary phase in `(0, pi)`, excluding the `pi/2` pole.
    pub phi: f64,
    pub seed: RealizationSeed,
}

impl SparseJacobiSpec {
    fn validate(&self) -> Result<()> {
        if self.beta < 2 {
            return Err(Error::Domain("beta must be >= 2".into()));
        }
        if !(self.v > 0.0) {
            return Err(Error::Domain("barrier height v must be > 0".into()));
        }
        if !(self.phi > 0.0 && self.phi < std::f64::consts::PI) {
            return Err(Error::Domain("phi must lie in (0, pi)".into()));
        }
        if (self.phi - std::f64::consts::FRAC_PI_2).abs() < 1e-9 {
            return Err(Error::Domain(
                "phi = pi/2 is the Dirichlet pole of the boundary folding".into(),
            ));
        }
        let a1 = self.beta as usize - 1;
        if self.n_max <= a1 {
            return Err(Error::Size(format!(
                "n_max = {} does not contain the first barrier a_1 = {a1}",
                self.n_max
            )));
        }
        Ok(())
    }
}

/// Deterministic barrier positions `a_j` with `a_1 = beta - 1` and
/// `a_j - a_{j-1} = beta^j`, up to `limit`.
pub fn deterministic_barriers(beta: u32, limit: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let beta = beta as u128;
    let mut a: u128 = beta - 1;
    let mut step: u128 = beta;
    while a < limit as u128 {
        out.push(a as usize);
        step *= beta;
        a += step;
    }
    out
}

/// Randomized barrier positions `a_j + omega_j`, `omega_j` uniform on
/// `{-j..j}`, clipped to the truncation. Geometric gaps dominate the linear
/// spread, so positions stay distinct and ordered.
pub fn barrier_positions(spec: &SparseJacobiSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let mut rng = spec.seed.rng();
    let mut out = Vec::new();
    let beta = spec.beta as i128;
    let mut a: i128 = beta - 1;
    let mut step: i128 = beta;
    let mut j: i128 = 1;
    // draw omega_j in j order even for barriers beyond the box, so the
    // stream assignment is independent of n_max
    while a - j < spec.n_max as i128 {
        let omega = rng.random_range(-j..=j);
        let pos = a + omega;
        if pos >= 0 && (pos as usize) < spec.n_max {
            out.push(pos as usize);
        }
        j += 1;
        step *= beta;
        a += step;
    }
    Ok(out)
}

/// Anderson box on `Z^d` truncated to side `L`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AndersonSpec {
    pub dim: usize,
    pub box_side: usize,
    pub disorder: DistributionSpec,
    /// Disorder strength multiplying every potential draw.
    pub v: f64,
    pub periodic: bool,
    pub seed: RealizationSeed,
}

/// Almost Mathieu chain: diagonal `lambda cos(2 pi (omega n + theta))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlmostMathieuSpec {
    pub lambda: f64,
    pub omega: f64,
    pub theta: f64,
    pub n_max: usize,
}

/// Kronecker sum `J ⊗ I + theta I ⊗ J` of two independent sparse chains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KroneckerSumSpec {
    pub spec_a: SparseJacobiSpec,
    pub spec_b: SparseJacobiSpec,
    pub theta: f64,
}

/// Banded real-symmetric operator with a site-coordinate map. Off-diagonal
/// entries are stored once (i < j), so the matrix is Hermitian by
/// construction.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    dim: usize,
    diag: Vec<f64>,
    off: Vec<(usize, usize, f64)>,
    coords: Vec<Vec<i64>>,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_diagonal(&self) -> &[(usize, usize, f64)] {
        &self.off
    }

    /// Lattice coordinate of a site (length = dimension of the model).
    pub fn coord(&self, site: usize) -> &[i64] {
        &self.coords[site]
    }

    /// Euclidean distance of a site from the coordinate origin.
    pub fn radius(&self, site: usize) -> f64 {
        self.coords[site]
            .iter()
            .map(|&c| (c as f64) * (c as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// Site with coordinates closest to the origin.
    pub fn origin_site(&self) -> usize {
        (0..self.dim)
            .min_by(|&a, &b| self.radius(a).partial_cmp(&self.radius(b)).unwrap())
            .unwrap()
    }

    pub fn is_tridiagonal(&self) -> bool {
        self.off.iter().all(|&(i, j, _)| j == i + 1)
    }

    pub fn as_tridiag(&self) -> Option<SymTridiag> {
        if !self.is_tridiagonal() {
            return None;
        }
        let mut off = vec![0.0; self.dim.saturating_sub(1)];
        for &(i, _, w) in &self.off {
            off[i] += w;
        }
        Some(SymTridiag::new(self.diag.clone(), off))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            m[(i, i)] = self.diag[i];
        }
        for &(i, j, w) in &self.off {
            m[(i, j)] += w;
            m[(j, i)] += w;
        }
        m
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut y: Vec<f64> = (0..self.dim).map(|i| self.diag[i] * x[i]).collect();
        for &(i, j, w) in &self.off {
            y[i] += w * x[j];
            y[j] += w * x[i];
        }
        y
    }

    /// Full eigendecomposition; tridiagonal operators take the O(n) storage
    /// path, everything else densifies (capped).
    pub fn eigendecomposition(&self) -> Result<EigenSystem> {
        if let Some(t) = self.as_tridiag() {
            return Ok(t.decompose());
        }
        if self.dim > 4096 {
            return Err(Error::Size(format!(
                "dense eigendecomposition capped at 4096, operator has {}",
                self.dim
            )));
        }
        Ok(crate::linalg::sym_eigen_dense(&self.to_dense()))
    }

    /// Sparse triplet export: `# key = value` header lines, then
    /// `row,col,value` for the lower triangle including the diagonal.
    pub fn export_triplets(&self, header: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in header {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "# dim = {}", self.dim);
        let _ = writeln!(out, "row,col,value");
        for i in 0..self.dim {
            if self.diag[i] != 0.0 {
                let _ = writeln!(out, "{i},{i},{}", self.diag[i]);
            }
        }
        for &(i, j, w) in &self.off {
            let _ = writeln!(out, "{j},{i},{w}");
        }
        out
    }

    /// Spectral measure of the vector state `delta_site`.
    pub fn spectral_measure(&self, site: usize) -> Result<SpectralMeasureApprox> {
        let es = self.eigendecomposition()?;
        let atoms = (0..es.dim)
            .map(|k| {
                let a = es.vector(k)[site];
                (es.values[k], a * a)
            })
            .collect();
        SpectralMeasureApprox::new(atoms)
    }
}

/// Tridiagonal sparse Jacobi operator: off-diagonal 1, diagonal `v` at the
/// randomized barrier sites, boundary phase folded into entry (0,0).
pub fn build_sparse_jacobi(spec: &SparseJacobiSpec) -> Result<OperatorMatrix> {
    let positions = barrier_positions(spec)?;
    let n = spec.n_max;
    let mut diag = vec![0.0f64; n];
    for &p in &positions {
        diag[p] = spec.v;
    }
    diag[0] += spec.phi.tan();
    let off = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
    let coords = (0..n).map(|i| vec![i as i64]).collect();
    Ok(OperatorMatrix {
        dim: n,
        diag,
        off,
        coords,
    })
}

/// Anderson operator: centered discrete Laplacian plus `v * (i.i.d. draw)` on
/// the diagonal.
pub fn build_anderson(spec: &AndersonSpec) -> Result<OperatorMatrix> {
    if spec.dim < 1 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    if spec.box_side < 2 {
        return Err(Error::Domain("box side must be >= 2".into()));
    }
    if spec.v < 0.0 {
        return Err(Error::Domain("disorder strength must be >= 0".into()));
    }
    let n = (spec.box_side as u64)
        .checked_pow(spec.dim as u32)
        .filter(|&n| n <= 10_000_000)
        .ok_or_else(|| {
            Error::Size(format!(
                "box {}^{} overflows the site cap",
                spec.box_side, spec.dim
            ))
        })? as usize;
    let el = spec.box_side;
    let d = spec.dim;
    let mut rng = spec.seed.rng();
    let diag: Vec<f64> = (0..n).map(|_| spec.v * spec.disorder.sample(&mut rng)).collect();

    // lexicographic decode, coordinates centered so the origin is a site
    let decode = |site: usize| -> Vec<usize> {
        let mut s = site;
        let mut idx = vec![0usize; d];
        for k in (0..d).rev() {
            idx[k] = s % el;
            s /= el;
        }
        idx
    };
    let encode = |idx: &[usize]| -> usize {
        let mut s = 0usize;
        for &i in idx {
            s = s * el + i;
        }
        s
    };

    let mut acc: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    for site in 0..n {
        let idx = decode(site);
        for axis in 0..d {
            let mut nb = idx.clone();
            if idx[axis] + 1 < el {
                nb[axis] = idx[axis] + 1;
            } else if spec.periodic {
                nb[axis] = 0;
            } else {
                continue;
            }
            let other = encode(&nb);
            if other == site {
                continue; // L = 1 wrap, excluded by validation anyway
            }
            let key = (site.min(other), site.max(other));
            *acc.entry(key).or_insert(0.0) += 1.0;
        }
    }
    let off: Vec<(usize, usize, f64)> = acc.into_iter().map(|((i, j), w)| (i, j, w)).collect();
    let half = (el / 2) as i64;
    let coords = (0..n)
        .map(|site| decode(site).iter().map(|&i| i as i64 - half).collect())
        .collect();
    Ok(OperatorMatrix {
        dim: n,
        diag,
        off,
        coords,
    })
}

/// Almost Mathieu operator on `0..n_max` with free boundary.
pub fn build_almost_mathieu(spec: &AlmostMathieuSpec) -> Result<OperatorMatrix> {
    if spec.n_max < 2 {
        return Err(Error::Size("n_max must be >= 2".into()));
    }
    if spec.lambda < 0.0 {
        return Err(Error::Domain("lambda must be >= 0".into()));
    }
    let n = spec.n_max;
    let diag = (0..n)
        .map(|i| {
            spec.lambda
                * (2.0 * std::f64::consts::PI * (spec.omega * i as f64 + spec.theta)).cos()
        })
        .collect();
    let off = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
    let coords = (0..n).map(|i| vec![i as i64]).collect();
    Ok(OperatorMatrix {
        dim: n,
        diag,
        off,
        coords,
    })
}

/// Mobility edges `lambda^{+-} = +-sqrt(4 - v^2/(beta-1))` of the sparse
/// chain; `None` when `v >= 2 sqrt(beta-1)` leaves no singular-continuous
/// zone.
pub fn mobility_edges(beta: u32, v: f64) -> Result<Option<(f64, f64)>> {
    if beta < 2 {
        return Err(Error::Domain("beta must be >= 2".into()));
    }
    if !(v > 0.0) {
        return Err(Error::Domain("v must be > 0".into()));
    }
    let disc = 4.0 - v * v / (beta as f64 - 1.0);
    if disc <= 0.0 {
        Ok(None)
    } else {
        let edge = disc.sqrt();
        Ok(Some((-edge, edge)))
    }
}

/// Spectral-type zones of the sparse chain inside the essential spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyClass {
    ScZone,
    PpZone,
    Edge,
}

/// Classify by the sign of `(beta-1)(4-lambda^2) - v^2`. Rational-cosine
/// exceptional energies are ignored: they form a measure-zero set invisible
/// on a float grid.
pub fn classify_energy(beta: u32, v: f64, lambda: f64) -> Result<EnergyClass> {
    if beta < 2 || !(v > 0.0) {
        return Err(Error::Domain("need beta >= 2 and v > 0".into()));
    }
    if lambda.abs() >= 2.0 {
        return Err(Error::Domain(format!(
            "lambda = {lambda} lies outside the essential spectrum [-2, 2]"
        )));
    }
    let crit = (beta as f64 - 1.0) * (4.0 - lambda * lambda) - v * v;
    let scale = (beta as f64 - 1.0) * 4.0 + v * v;
    if crit.abs() <= 1e-12 * scale {
        Ok(EnergyClass::Edge)
    } else if crit > 0.0 {
        Ok(EnergyClass::ScZone)
    } else {
        Ok(EnergyClass::PpZone)
    }
}

/// 2x2 transfer product with a running log scale to survive long windows.
#[derive(Debug, Clone, Copy)]
pub struct TransferProduct {
    pub matrix: [[f64; 2]; 2],
    pub log_scale: f64,
}

impl TransferProduct {
    pub fn identity() -> Self {
        Self {
            matrix: [[1.0, 0.0], [0.0, 1.0]],
            log_scale: 0.0,
        }
    }

    /// Left-multiply by the single-site matrix `[[lambda - v_n, -1], [1, 0]]`.
    pub fn push_site(&mut self, lambda: f64, v_n: f64) {
        let a = lambda - v_n;
        let m = self.matrix;
        self.matrix = [
            [a * m[0][0] - m[1][0], a * m[0][1] - m[1][1]],
            [m[0][0], m[0][1]],
        ];
        let frob = self.frobenius();
        if frob > 1e120 {
            for row in self.matrix.iter_mut() {
                for x in row.iter_mut() {
                    *x /= frob;
                }
            }
            self.log_scale += frob.ln();
        }
    }

    fn frobenius(&self) -> f64 {
        self.matrix
            .iter()
            .flatten()
            .map(|&x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// log of the spectral norm (largest singular value), including the
    /// running scale.
    pub fn log_norm(&self) -> f64 {
        let m = &self.matrix;
        let f2 = m.iter().flatten().map(|&x| x * x).sum::<f64>();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let disc = (f2 * f2 - 4.0 * det * det).max(0.0).sqrt();
        let sigma2 = 0.5 * (f2 + disc);
        self.log_scale + 0.5 * sigma2.ln()
    }

    /// Plain 2x2 product (both scales combine additively).
    pub fn compose(&self, rhs: &TransferProduct) -> TransferProduct {
        let a = &self.matrix;
        let b = &rhs.matrix;
        TransferProduct {
            matrix: [
                [
                    a[0][0] * b[0][0] + a[0][1] * b[1][0],
                    a[0][0] * b[0][1] + a[0][1] * b[1][1],
                ],
                [
                    a[1][0] * b[0][0] + a[1][1] * b[1][0],
                    a[1][0] * b[0][1] + a[1][1] * b[1][1],
                ],
            ],
            log_scale: self.log_scale + rhs.log_scale,
        }
    }
}

/// log-norm sample along the transfer recursion.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GrowthSample {
    pub site: usize,
    pub barrier_index: usize,
    pub log_norm: f64,
}

/// Ordered product of single-site transfer matrices over `sites`, continuing
/// from `init` when given. The norm-growth series is sampled right after each
/// barrier site (a finite stand-in for the Prüfer radius). Splitting a window
/// and feeding the first product back in as `init` reproduces the one-shot
/// result bit-for-bit: the operation sequence is identical.
pub fn transfer_product(
    spec: &SparseJacobiSpec,
    lambda: f64,
    sites: Range<usize>,
    init: Option<TransferProduct>,
) -> Result<(TransferProduct, Vec<GrowthSample>)> {
    if sites.end > spec.n_max {
        return Err(Error::Size(format!(
            "site range end {} beyond truncation {}",
            sites.end, spec.n_max
        )));
    }
    let positions = barrier_positions(spec)?;
    let barrier_set: std::collections::HashSet<usize> = positions.iter().copied().collect();
    let mut prod = init.unwrap_or_else(TransferProduct::identity);
    let mut growth = Vec::new();
    let mut barrier_index = positions.partition_point(|&p| p < sites.start);
    for site in sites {
        let v_n = if barrier_set.contains(&site) { spec.v } else { 0.0 };
        prod.push_site(lambda, v_n);
        if v_n != 0.0 {
            growth.push(GrowthSample {
                site,
                barrier_index,
                log_norm: prod.log_norm(),
            });
            barrier_index += 1;
        }
    }
    Ok((prod, growth))
}

/// Finite-volume decay classification of one energy.
#[derive(Debug, Clone, Serialize)]
pub struct DecayClassification {
    pub verdict: EnergyClass,
    /// Disorder-averaged growth of `2 ln R` per barrier (R = Prüfer radius of
    /// the left-boundary solution).
    pub growth_per_barrier: f64,
    pub std_error: f64,
    /// Decision threshold `ln(beta)`: the eigenfunction envelope decays fast
    /// enough for square-summability against the geometric gap growth exactly
    /// when `2 ln R` gains more than `ln(beta)` per barrier.
    pub threshold: f64,
    pub n_realizations: usize,
}

/// Per-realization slope of `ln R` against barrier index for the solution
/// satisfying the left boundary condition, using the energy-adapted radius
/// `R^2 = u_n^2 + ((u_{n+1} - u_n cos(alpha))/sin(alpha))^2`,
/// `lambda = 2 cos(alpha)`. The radius is constant across barrier-free
/// stretches, so barrier index is the right abscissa.
fn prufer_slope(spec: &SparseJacobiSpec, lambda: f64) -> Result<Option<f64>> {
    let alpha = (lambda / 2.0).acos();
    let (sin_a, cos_a) = (alpha.sin(), alpha.cos());
    let positions = barrier_positions(spec)?;
    if positions.len() < 4 {
        return Ok(None);
    }
    let barrier_set: std::collections::HashSet<usize> = positions.iter().copied().collect();
    // u_{-1} cos(phi) = u_0 sin(phi); start from u_0 = 1
    let mut u_prev = spec.phi.tan();
    let mut u = 1.0f64;
    let mut scale = 0.0f64;
    let mut samples = Vec::with_capacity(positions.len());
    for site in 0..spec.n_max {
        let v_n = if barrier_set.contains(&site) { spec.v } else { 0.0 };
        let u_next = (lambda - v_n) * u - u_prev;
        u_prev = u;
        u = u_next;
        if v_n != 0.0 {
            let du = (u - u_prev * cos_a) / sin_a;
            let r2 = u_prev * u_prev + du * du;
            samples.push(0.5 * r2.ln() + scale);
        }
        let mag = u.abs().max(u_prev.abs());
        if mag > 1e120 {
            u /= mag;
            u_prev /= mag;
            scale += mag.ln();
        }
    }
    let xs: Vec<f64> = (0..samples.len()).map(|i| i as f64).collect();
    Ok(Some(linear_fit(&xs, &samples)?.slope))
}

/// Classify one energy from the measured decay rate of generalized
/// eigenfunctions, averaged over `n_realizations` barrier configurations.
pub fn classify_energy_decay(
    beta: u32,
    v: f64,
    n_max: usize,
    lambda: f64,
    n_realizations: usize,
    master_seed: u64,
) -> Result<DecayClassification> {
    if lambda.abs() >= 2.0 {
        return Err(Error::Domain(format!(
            "lambda = {lambda} lies outside the essential spectrum [-2, 2]"
        )));
    }
    let slopes: Vec<Result<Option<f64>>> = (0..n_realizations)
        .into_par_iter()
        .map(|i| {
            let spec = SparseJacobiSpec {
                beta,
                v,
                n_max,
                phi: std::f64::consts::FRAC_PI_4,
                seed: RealizationSeed::new(master_seed, i as u64),
            };
            prufer_slope(&spec, lambda)
        })
        .collect();
    let mut values = Vec::with_capacity(n_realizations);
    for s in slopes {
        if let Some(slope) = s? {
            values.push(2.0 * slope);
        }
    }
    if values.len() < 2 {
        return Err(Error::Size(
            "truncation too short: fewer than 4 barriers per realization".into(),
        ));
    }
    let (growth, se) = mean_and_std_error(&values);
    let threshold = (beta as f64).ln();
    let verdict = if growth > threshold {
        EnergyClass::PpZone
    } else {
        EnergyClass::ScZone
    };
    Ok(DecayClassification {
        verdict,
        growth_per_barrier: growth,
        std_error: se,
        threshold,
        n_realizations: values.len(),
    })
}

/// Spectral data of the Kronecker sum, combined combinatorially (the sum is
/// never materialized): point masses at `lambda_i + theta mu_j` weighted by
/// the product of the component delta_0 weights.
pub fn kronecker_spectrum(spec: &KroneckerSumSpec, atom_cap: usize) -> Result<SpectralMeasureApprox> {
    let a = build_sparse_jacobi(&spec.spec_a)?.spectral_measure(0)?;
    let b = build_sparse_jacobi(&spec.spec_b)?.spectral_measure(0)?;
    SpectralMeasureApprox::kronecker_combine(&a, &b, spec.theta, atom_cap)
}
