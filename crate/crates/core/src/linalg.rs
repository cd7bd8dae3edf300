//! Eigenproblem kernels.
//!
//! The workhorse is a symmetric tridiagonal solver (implicit QL with shifts,
//! Sturm-sequence bisection, inverse iteration) because every 1D operator in
//! this crate is tridiagonal and chains up to 10^4 sites must be handled
//! without densifying. Dense symmetric problems (multidimensional boxes,
//! spin clusters, random matrices) go through nalgebra.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix: `diag` has length n, `off` length n-1.
#[derive(Debug, Clone)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

/// Full eigendecomposition. `vectors` is column-major: eigenvector k occupies
/// `vectors[k*dim..(k+1)*dim]` and corresponds to `values[k]`; values ascend.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub dim: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl EigenSystem {
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len());
        Self { diag, off }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.dim();
        let tiny = 1e-300;
        let mut count = 0usize;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            if q == 0.0 {
                q = tiny;
            }
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / q;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// k-th eigenvalue (ascending, 0-based) via bisection.
    pub fn eigenvalue_k(&self, k: usize) -> f64 {
        assert!(k < self.dim());
        let (mut lo, mut hi) = self.spectral_bounds();
        let scale = (hi - lo).abs().max(1.0);
        lo -= 1e-12 * scale;
        hi += 1e-12 * scale;
        for _ in 0..120 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-14 * scale {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Indices of the `count` eigenvalues nearest `target`, with their values.
    pub fn eigenvalues_near(&self, target: f64, count: usize) -> Vec<(usize, f64)> {
        let n = self.dim();
        let count = count.min(n);
        let below = self.count_below(target);
        // walk outward from the insertion point
        let mut lo = below as isize - 1;
        let mut hi = below as isize;
        let mut picked = Vec::with_capacity(count);
        let mut lo_val = if lo >= 0 {
            Some(self.eigenvalue_k(lo as usize))
        } else {
            None
        };
        let mut hi_val = if (hi as usize) < n {
            Some(self.eigenvalue_k(hi as usize))
        } else {
            None
        };
        while picked.len() < count {
            match (lo_val, hi_val) {
                (Some(lv), Some(hv)) => {
                    if (target - lv).abs() <= (hv - target).abs() {
                        picked.push((lo as usize, lv));
                        lo -= 1;
                        lo_val = if lo >= 0 {
                            Some(self.eigenvalue_k(lo as usize))
                        } else {
                            None
                        };
                    } else {
                        picked.push((hi as usize, hv));
                        hi += 1;
                        hi_val = if (hi as usize) < n {
                            Some(self.eigenvalue_k(hi as usize))
                        } else {
                            None
                        };
                    }
                }
                (Some(lv), None) => {
                    picked.push((lo as usize, lv));
                    lo -= 1;
                    lo_val = if lo >= 0 {
                        Some(self.eigenvalue_k(lo as usize))
                    } else {
                        None
                    };
                }
                (None, Some(hv)) => {
                    picked.push((hi as usize, hv));
                    hi += 1;
                    hi_val = if (hi as usize) < n {
                        Some(self.eigenvalue_k(hi as usize))
                    } else {
                        None
                    };
                }
                (None, None) => break,
            }
        }
        picked
    }

    /// Normalized eigenvector for an eigenvalue estimate, by inverse iteration.
    ///
    /// `lambda` should come from `eigenvalue_k`/`eigenvalues_near`; the solver
    /// factorizes `T - lambda I` with partial pivoting, so a shift that lands
    /// exactly on an eigenvalue is still fine.
    pub fn eigenvector(&self, lambda: f64, start_seed: u64) -> Vec<f64> {
        let n = self.dim();
        // deterministic pseudo-random start vector (splitmix64)
        let mut state = start_seed.wrapping_add(0x9E3779B97F4A7C15);
        let mut v: Vec<f64> = (0..n)
            .map(|_| {
                state = state.wrapping_add(0x9E3779B97F4A7C15);
                let mut z = state;
                z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
                z ^= z >> 31;
                (z as f64 / u64::MAX as f64) - 0.5
            })
            .collect();
        normalize(&mut v);
        let lu = TridiagLu::factor(self, lambda);
        for _ in 0..3 {
            lu.solve_in_place(&mut v);
            normalize(&mut v);
        }
        v
    }

    /// All eigenvalues, ascending, without eigenvectors. O(n^2).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut d = self.diag.clone();
        let mut e = self.off.clone();
        e.push(0.0);
        tqli(&mut d, &mut e, None).expect("QL iteration failed");
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        d
    }

    /// Full eigendecomposition with eigenvectors. O(n^3); fine up to a few
    /// thousand sites.
    pub fn decompose(&self) -> EigenSystem {
        let n = self.dim();
        let mut d = self.diag.clone();
        let mut e = self.off.clone();
        e.push(0.0);
        // identity, column-major
        let mut z = vec![0.0f64; n * n];
        for k in 0..n {
            z[k * n + k] = 1.0;
        }
        tqli(&mut d, &mut e, Some((&mut z, n))).expect("QL iteration failed");
        // sort ascending, permuting columns
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
        let mut values = Vec::with_capacity(n);
        let mut vectors = vec![0.0f64; n * n];
        for (new_k, &old_k) in order.iter().enumerate() {
            values.push(d[old_k]);
            vectors[new_k * n..(new_k + 1) * n].copy_from_slice(&z[old_k * n..(old_k + 1) * n]);
        }
        EigenSystem {
            dim: n,
            values,
            vectors,
        }
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Implicit QL with Wilkinson shifts. `e` must have length n with `e[n-1]`
/// unused; eigenvectors (if given) are column-major with stride `n`.
fn tqli(d: &mut [f64], e: &mut [f64], mut z: Option<(&mut [f64], usize)>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Convergence(format!(
                    "QL iteration exceeded 60 sweeps at row {l}"
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some((z, dim)) = z.as_mut() {
                    let dim = *dim;
                    let (col_i, col_ip1) = z.split_at_mut((i + 1) * dim);
                    let col_i = &mut col_i[i * dim..];
                    let col_ip1 = &mut col_ip1[..dim];
                    for k in 0..dim {
                        f = col_ip1[k];
                        col_ip1[k] = s * col_i[k] + c * f;
                        col_i[k] = c * col_i[k] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// LU factorization of `T - lambda I` with partial pivoting (tridiagonal plus
/// one fill-in band).
struct TridiagLu {
    n: usize,
    du: Vec<f64>,   // upper band after elimination
    du2: Vec<f64>,  // fill-in band
    dmain: Vec<f64>,
    mult: Vec<f64>,
    swap: Vec<bool>,
}

impl TridiagLu {
    fn factor(t: &SymTridiag, lambda: f64) -> Self {
        let n = t.dim();
        let mut dmain: Vec<f64> = t.diag.iter().map(|&d| d - lambda).collect();
        let dl: Vec<f64> = t.off.clone();
        let mut du: Vec<f64> = t.off.clone();
        let mut du2 = vec![0.0f64; n.saturating_sub(2)];
        let mut mult = vec![0.0f64; n.saturating_sub(1)];
        let mut swap = vec![false; n.saturating_sub(1)];
        let scale = t
            .diag
            .iter()
            .chain(t.off.iter())
            .fold(1.0f64, |a, &b| a.max(b.abs()));
        let tiny = 1e-305 * scale.max(1.0);
        for i in 0..n.saturating_sub(1) {
            if dmain[i].abs() >= dl[i].abs() {
                // no swap
                if dmain[i].abs() < tiny {
                    dmain[i] = tiny;
                }
                let m = dl[i] / dmain[i];
                mult[i] = m;
                dmain[i + 1] -= m * du[i];
                if i + 2 < n {
                    du2[i] = 0.0;
                }
            } else {
                swap[i] = true;
                let m = dmain[i] / dl[i];
                mult[i] = m;
                let tmp_d = dmain[i + 1];
                dmain[i] = dl[i];
                dmain[i + 1] = du[i] - m * tmp_d;
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -m * du[i + 1];
                }
                du[i] = tmp_d;
            }
        }
        if dmain[n - 1].abs() < tiny {
            dmain[n - 1] = tiny;
        }
        Self {
            n,
            du,
            du2,
            dmain,
            mult,
            swap,
        }
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n.saturating_sub(1) {
            if self.swap[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= self.mult[i] * b[i];
        }
        // back substitution
        b[n - 1] /= self.dmain[n - 1];
        if n >= 2 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.dmain[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.dmain[i];
        }
        // rescale to avoid overflow feeding the next iteration
        let max = b.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if max > 1e250 {
            for x in b.iter_mut() {
                *x /= max;
            }
        }
    }
}

/// Eigendecomposition of a dense symmetric matrix, values ascending.
pub fn sym_eigen_dense(m: &DMatrix<f64>) -> EigenSystem {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    let se = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let mut values = Vec::with_capacity(n);
    let mut vectors = vec![0.0f64; n * n];
    for (new_k, &old_k) in order.iter().enumerate() {
        values.push(se.eigenvalues[old_k]);
        for r in 0..n {
            vectors[new_k * n + r] = se.eigenvectors[(r, old_k)];
        }
    }
    EigenSystem {
        dim: n,
        values,
        vectors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_chain(n: usize) -> SymTridiag {
        SymTridiag::new(vec![0.0; n], vec![1.0; n - 1])
    }

    /// Free-chain eigenvalues are 2 cos(k pi / (n+1)).
    fn free_chain_eigs(n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (1..=n)
            .map(|k| 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos())
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn ql_matches_free_chain_spectrum() {
        let n = 64;
        let got = free_chain(n).eigenvalues();
        let want = free_chain_eigs(n);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10, "{g} vs {w}");
        }
    }

    #[test]
    fn decompose_reconstructs_matrix_action() {
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 5) as f64 * 0.3).collect();
        let t = SymTridiag::new(diag, vec![1.0; n - 1]);
        let es = t.decompose();
        // check T v = lambda v for every pair
        for k in 0..n {
            let v = es.vector(k);
            for i in 0..n {
                let mut tv = t.diag[i] * v[i];
                if i > 0 {
                    tv += t.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    tv += t.off[i] * v[i + 1];
                }
                assert!(
                    (tv - es.values[k] * v[i]).abs() < 1e-9,
                    "residual at k={k}, i={i}"
                );
            }
        }
    }

    #[test]
    fn sturm_count_consistent_with_ql() {
        let n = 50;
        let diag: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let t = SymTridiag::new(diag, vec![1.0; n - 1]);
        let eigs = t.eigenvalues();
        for x in [-2.5, -1.0, 0.0, 0.3, 1.9] {
            let want = eigs.iter().filter(|&&e| e < x).count();
            assert_eq!(t.count_below(x), want, "count at {x}");
        }
    }

    #[test]
    fn bisection_and_inverse_iteration_give_true_pairs() {
        let n = 200;
        let diag: Vec<f64> = (0..n).map(|i| ((i * 13 + 1) % 7) as f64 * 0.1).collect();
        let t = SymTridiag::new(diag, vec![1.0; n - 1]);
        for (idx, lam) in t.eigenvalues_near(0.5, 3) {
            let full = t.eigenvalues();
            assert!((full[idx] - lam).abs() < 1e-9);
            let v = t.eigenvector(lam, 42);
            let mut resid: f64 = 0.0;
            for i in 0..n {
                let mut tv = t.diag[i] * v[i];
                if i > 0 {
                    tv += t.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    tv += t.off[i] * v[i + 1];
                }
                resid = resid.max((tv - lam * v[i]).abs());
            }
            assert!(resid < 1e-8, "residual {resid} at eigenvalue {lam}");
        }
    }

    #[test]
    fn dense_eigen_matches_tridiagonal_path() {
        let n = 30;
        let t = free_chain(n);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            m[(i, i + 1)] = 1.0;
            m[(i + 1, i)] = 1.0;
        }
        let dense = sym_eigen_dense(&m);
        let tri = t.eigenvalues();
        for (a, b) in dense.values.iter().zip(&tri) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
