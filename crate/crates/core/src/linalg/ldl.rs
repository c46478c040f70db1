//! Sparse LDL^T factorization without pivoting, following the QDLDL
//! up-looking algorithm, with a fill-reducing AMD ordering computed once per
//! sparsity pattern.
//!
//! Only quasi-definite matrices are guaranteed to factor; the caller is
//! expected to regularize and check the returned inertia.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LdlError {
    #[error("pattern is not upper triangular or misses a diagonal entry in column {0}")]
    BadPattern(usize),
    #[error("ordering failed")]
    Ordering,
    #[error("zero pivot at position {0}")]
    ZeroPivot(usize),
}

const NONE: usize = usize::MAX;

/// Ordering and elimination tree for a fixed upper-triangular pattern.
#[derive(Debug, Clone)]
pub struct LdlSymbolic {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// Permuted upper-triangular pattern.
    colptr: Vec<usize>,
    rowind: Vec<usize>,
    /// Position in the permuted value array of every input entry.
    map: Vec<usize>,
    etree: Vec<usize>,
    lnz: Vec<usize>,
}

impl LdlSymbolic {
    /// `colptr`/`rowind` describe the upper triangle (row <= column) in CSC
    /// form. Every column must contain its diagonal.
    pub fn new(n: usize, colptr: &[usize], rowind: &[usize]) -> Result<LdlSymbolic, LdlError> {
        for j in 0..n {
            let col = &rowind[colptr[j]..colptr[j + 1]];
            if col.iter().any(|&i| i > j) || !col.contains(&j) {
                return Err(LdlError::BadPattern(j));
            }
        }
        let perm = if n == 0 {
            Vec::new()
        } else {
            let (p, _, _) = amd::order(n, colptr, rowind, &amd::Control::default())
                .map_err(|_| LdlError::Ordering)?;
            p
        };
        let mut pinv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }

        // Count entries per permuted column, then scatter.
        let nnz = rowind.len();
        let mut counts = vec![0usize; n];
        let mut targets = Vec::with_capacity(nnz);
        for j in 0..n {
            for &i in &rowind[colptr[j]..colptr[j + 1]] {
                let (a, b) = (pinv[i], pinv[j]);
                let (r, c) = if a <= b { (a, b) } else { (b, a) };
                counts[c] += 1;
                targets.push((r, c));
            }
        }
        let mut pcol = vec![0usize; n + 1];
        for j in 0..n {
            pcol[j + 1] = pcol[j] + counts[j];
        }
        let mut next = pcol.clone();
        let mut prow = vec![0usize; nnz];
        let mut map = vec![0usize; nnz];
        for (k, &(r, c)) in targets.iter().enumerate() {
            let pos = next[c];
            next[c] += 1;
            prow[pos] = r;
            map[k] = pos;
        }

        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &r in &prow[pcol[j]..pcol[j + 1]] {
                let mut i = r;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        Ok(LdlSymbolic {
            n,
            perm,
            colptr: pcol,
            rowind: prow,
            map,
            etree,
            lnz,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.lnz.iter().sum()
    }

    /// Numeric factorization. `values` follow the input pattern order.
    pub fn factor(&self, values: &[f64]) -> Result<LdlFactor, LdlError> {
        let n = self.n;
        let mut ax = vec![0.0; values.len()];
        for (k, &v) in values.iter().enumerate() {
            ax[self.map[k]] += v;
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + self.lnz[i];
        }
        let mut li = vec![0usize; lp[n]];
        let mut lx = vec![0.0; lp[n]];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut next_space = lp[..n].to_vec();
        let mut marked = vec![false; n];
        let mut yvals = vec![0.0; n];
        let mut yidx = vec![0usize; n];
        let mut elim = vec![0usize; n];

        for k in 0..n {
            let mut nnz_y = 0;
            for p in self.colptr[k]..self.colptr[k + 1] {
                let b = self.rowind[p];
                if b == k {
                    d[k] += ax[p];
                    continue;
                }
                yvals[b] += ax[p];
                if !marked[b] {
                    marked[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut nx = self.etree[b];
                    while nx != NONE && nx < k {
                        if marked[nx] {
                            break;
                        }
                        marked[nx] = true;
                        elim[ne] = nx;
                        ne += 1;
                        nx = self.etree[nx];
                    }
                    while ne > 0 {
                        ne -= 1;
                        yidx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for t in (0..nnz_y).rev() {
                let c = yidx[t];
                let yc = yvals[c];
                let end = next_space[c];
                for j in lp[c]..end {
                    yvals[li[j]] -= lx[j] * yc;
                }
                li[end] = k;
                lx[end] = yc * dinv[c];
                d[k] -= yc * lx[end];
                next_space[c] += 1;
                yvals[c] = 0.0;
                marked[c] = false;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(LdlError::ZeroPivot(k));
            }
            dinv[k] = 1.0 / d[k];
        }
        Ok(LdlFactor {
            perm: self.perm.clone(),
            lp,
            li,
            lx,
            d,
            dinv,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl LdlFactor {
    /// Number of (positive, negative) pivots.
    pub fn inertia(&self) -> (usize, usize) {
        let pos = self.d.iter().filter(|&&v| v > 0.0).count();
        (pos, self.d.len() - pos)
    }

    pub fn min_abs_pivot(&self) -> f64 {
        self.d.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    /// Solves in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn upper_csc(m: &DMatrix<f64>) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let n = m.nrows();
        let mut cp = vec![0];
        let mut ri = Vec::new();
        let mut v = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                if m[(i, j)] != 0.0 || i == j {
                    ri.push(i);
                    v.push(m[(i, j)]);
                }
            }
            cp.push(ri.len());
        }
        (cp, ri, v)
    }

    #[test]
    fn quasi_definite_solve_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let (n1, n2) = (3 + trial % 5, 1 + trial % 3);
            let n = n1 + n2;
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n1 {
                m[(i, i)] = 2.0 + rng.random::<f64>();
            }
            for _ in 0..n {
                let (i, j) = (rng.random_range(0..n1), rng.random_range(0..n1));
                let v = 0.3 * rng.random::<f64>();
                if i != j {
                    m[(i, j)] += v;
                    m[(j, i)] += v;
                    m[(i, i)] += v;
                    m[(j, j)] += v;
                }
            }
            for r in n1..n {
                m[(r, r)] = -0.5 - rng.random::<f64>();
                let j = rng.random_range(0..n1);
                m[(r, j)] = 1.0;
                m[(j, r)] = 1.0;
            }
            let (cp, ri, v) = upper_csc(&m);
            let sym = LdlSymbolic::new(n, &cp, &ri).unwrap();
            let f = sym.factor(&v).unwrap();
            assert_eq!(f.inertia(), (n1, n2));
            let b = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
            let mut x = b.as_slice().to_vec();
            f.solve(&mut x);
            let r = &m * DVector::from_vec(x) - b;
            assert!(r.amax() < 1e-12, "residual {}", r.amax());
        }
    }

    #[test]
    fn rejects_lower_entries_and_missing_diagonal() {
        assert_eq!(
            LdlSymbolic::new(2, &[0, 2, 3], &[0, 1, 1]).unwrap_err(),
            LdlError::BadPattern(0)
        );
        assert_eq!(
            LdlSymbolic::new(2, &[0, 1, 2], &[0, 0]).unwrap_err(),
            LdlError::BadPattern(1)
        );
    }

    #[test]
    fn singular_matrix_reports_zero_pivot() {
        let sym = LdlSymbolic::new(2, &[0, 1, 3], &[0, 0, 1]).unwrap();
        assert!(matches!(sym.factor(&[1.0, 1.0, 1.0]), Err(LdlError::ZeroPivot(_))));
    }
}
