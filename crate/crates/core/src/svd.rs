//! Full singular value decomposition by one-sided Jacobi rotations.
//!
//! The rotations orthogonalize the columns of whichever of `A` / `Aᵀ` has
//! `min(m, n)` columns. The accumulated rotation becomes the orthogonal factor
//! on the short side; the long side is read off the normalized columns and
//! completed to a full orthogonal basis by Gram–Schmidt against the standard
//! basis.
//!
//! Output is canonicalized so identical inputs give identical bytes:
//! singular triplets are stably sorted on `(-σ, original index)` and each left
//! singular vector is flipped so that its first nonzero entry is positive.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

const MAX_SWEEPS: usize = 100;
const ROTATION_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `m × m`, orthogonal.
    pub u: DenseMatrix,
    /// `min(m, n)` values, nonincreasing and nonnegative.
    pub sigma: Vec<f64>,
    /// `n × n`, orthogonal.
    pub v: DenseMatrix,
}

impl SvdResult {
    /// `u · diag(sigma) · vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        DenseMatrix::from_fn(m, n, |i, j| {
            self.sigma
                .iter()
                .enumerate()
                .map(|(k, s)| self.u.get(i, k) * s * self.v.get(j, k))
                .sum()
        })
    }
}

pub fn svd_full(g: &DenseMatrix) -> Result<SvdResult> {
    g.ensure_finite().map_err(|_| Error::NonFinite)?;
    let (m, n) = g.shape();
    let wide = m <= n;
    // Columns of `work` are orthogonalized; it has k = min(m, n) columns.
    let work = if wide { g.transpose() } else { g.clone() };
    let (p, k) = work.shape();

    // Column-major copies make the rotations contiguous.
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| work.column(j)).collect();
    let mut rot: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..k {
            for j in (i + 1)..k {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma == 0.0 || gamma.abs() <= ROTATION_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, i, j, c, s);
                rotate_pair(&mut rot, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    // Stable: equal values keep ascending original index.
    order.sort_by(|a, b| norms[*b].total_cmp(&norms[*a]));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let short: Vec<Vec<f64>> = order.iter().map(|&j| rot[j].clone()).collect();
    let long_dirs: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&j| {
            if norms[j] > 0.0 {
                Some(cols[j].iter().map(|v| v / norms[j]).collect())
            } else {
                None
            }
        })
        .collect();
    let long = complete_basis(p, long_dirs);

    let (mut u_cols, mut v_cols) = if wide { (short, long) } else { (long, short) };

    for j in 0..u_cols.len() {
        let first = u_cols[j].iter().copied().find(|x| *x != 0.0).unwrap_or(0.0);
        if first < 0.0 {
            u_cols[j].iter_mut().for_each(|x| *x = -*x);
            if j < k {
                v_cols[j].iter_mut().for_each(|x| *x = -*x);
            }
        }
    }

    Ok(SvdResult {
        u: from_columns(m, &u_cols),
        sigma,
        v: from_columns(n, &v_cols),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate_pair(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(j);
    let (ci, cj) = (&mut left[i], &mut right[0]);
    for (a, b) in ci.iter_mut().zip(cj.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Orthonormalizes the given directions in order and fills missing slots, then
/// appends columns until there are `dim` of them. Each fill vector is the
/// standard basis vector with the largest component outside the current span
/// (smallest index on ties), orthonormalized.
fn complete_basis(dim: usize, dirs: Vec<Option<Vec<f64>>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut slots: Vec<Option<Vec<f64>>> = Vec::with_capacity(dim);
    for d in dirs {
        let accepted = d.and_then(|v| orthonormalize_against(&basis, v));
        if let Some(v) = &accepted {
            basis.push(v.clone());
        }
        slots.push(accepted);
    }
    slots.resize(dim, None);

    for slot in slots.iter_mut().filter(|s| s.is_none()) {
        let v = best_fill(&basis, dim);
        basis.push(v.clone());
        *slot = Some(v);
    }
    slots.into_iter().map(|s| s.expect("slot filled")).collect()
}

fn best_fill(basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let residual = |i: usize| {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let proj = dot(b, &e);
                for (x, y) in e.iter_mut().zip(b) {
                    *x -= proj * y;
                }
            }
        }
        e
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..dim {
        let r = residual(i);
        let n = dot(&r, &r);
        if best.as_ref().is_none_or(|(bn, _)| n > *bn) {
            best = Some((n, r));
        }
    }
    let (n, mut v) = best.expect("dim is positive");
    let n = n.sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Two passes of modified Gram–Schmidt. Rejects the vector if less than half
/// of its norm survives.
fn orthonormalize_against(basis: &[Vec<f64>], mut v: Vec<f64>) -> Option<Vec<f64>> {
    let initial = dot(&v, &v).sqrt();
    if initial == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for b in basis {
            let proj = dot(b, &v);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
    }
    let norm = dot(&v, &v).sqrt();
    if norm < 0.5 * initial {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

fn from_columns(rows: usize, cols: &[Vec<f64>]) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn check_contract(g: &DenseMatrix, svd: &SvdResult) {
        let (m, n) = g.shape();
        assert_eq!(svd.u.shape(), (m, m));
        assert_eq!(svd.v.shape(), (n, n));
        assert_eq!(svd.sigma.len(), m.min(n));
        assert!(svd.u.orthonormality_defect() <= 1e-10 * (m as f64).sqrt());
        assert!(svd.v.orthonormality_defect() <= 1e-10 * (n as f64).sqrt());
        assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(svd.sigma.iter().all(|s| *s >= 0.0));
        let err = svd.reconstruct().sub(g).unwrap().frobenius_norm();
        let scale = g.frobenius_norm().max(f64::MIN_POSITIVE);
        assert!(err <= 1e-8 * scale, "reconstruction error {err}");
    }

    #[test]
    fn diagonal_is_its_own_svd() {
        let svd = svd_full(&DenseMatrix::from_diag(&[2.0, 1.0])).unwrap();
        assert_eq!(svd.sigma, vec![2.0, 1.0]);
        assert!(svd.u.bit_eq(&DenseMatrix::identity(2)));
        assert!(svd.v.bit_eq(&DenseMatrix::identity(2)));
    }

    #[test]
    fn reversed_diagonal_swaps_vectors() {
        let svd = svd_full(&DenseMatrix::from_diag(&[1.0, 2.0])).unwrap();
        assert_eq!(svd.sigma, vec![2.0, 1.0]);
        assert_eq!(svd.u.column(0), vec![0.0, 1.0]);
        assert_eq!(svd.u.column(1), vec![1.0, 0.0]);
    }

    #[test]
    fn zero_matrix_gives_identity_bases() {
        let svd = svd_full(&DenseMatrix::zeros(3, 3)).unwrap();
        assert_eq!(svd.sigma, vec![0.0; 3]);
        assert!(svd.u.bit_eq(&DenseMatrix::identity(3)));
        assert!(svd.v.bit_eq(&DenseMatrix::identity(3)));
    }

    #[test]
    fn random_wide_reconstructs() {
        let g = random(8, 12, 7);
        let svd = svd_full(&g).unwrap();
        check_contract(&g, &svd);
    }

    #[test]
    fn random_tall_reconstructs() {
        let g = random(12, 5, 8);
        let svd = svd_full(&g).unwrap();
        check_contract(&g, &svd);
    }

    #[test]
    fn rank_deficient_completes_bases() {
        // rank 2 matrix in 6x9
        let a = random(6, 2, 1);
        let b = random(2, 9, 2);
        let g = a.matmul(&b).unwrap();
        let svd = svd_full(&g).unwrap();
        check_contract(&g, &svd);
        assert!(svd.sigma[2] <= 1e-12 * svd.sigma[0]);
    }

    #[test]
    fn left_vectors_have_nonnegative_lead() {
        let g = random(6, 10, 11);
        let svd = svd_full(&g).unwrap();
        for j in 0..6 {
            let lead = svd.u.column(j).into_iter().find(|x| *x != 0.0).unwrap();
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn deterministic_bytes() {
        let g = random(16, 24, 3);
        let a = svd_full(&g).unwrap();
        let b = svd_full(&g).unwrap();
        assert!(a.u.bit_eq(&b.u) && a.v.bit_eq(&b.v));
        assert_eq!(
            a.sigma.iter().map(|s| s.to_bits()).collect::<Vec<_>>(),
            b.sigma.iter().map(|s| s.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_non_finite() {
        let mut g = DenseMatrix::zeros(2, 2);
        g.set(0, 1, f64::INFINITY);
        assert_eq!(svd_full(&g), Err(Error::NonFinite));
    }
}
