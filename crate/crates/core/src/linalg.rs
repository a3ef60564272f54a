//! Sparse storage and a profile (envelope) Cholesky factorization for the
//! banded SPD systems produced by structured cylinder meshes.

use crate::error::{Error, Result};

/// Compressed sparse rows with sorted column indices in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1.0)))
    }

    /// Lower bound on the smallest eigenvalue from Gershgorin discs.
    pub fn gershgorin_lower(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let off: f64 = self.row(i).filter(|&(j, _)| j != i).map(|(_, v)| v.abs()).sum();
                self.diag(i) - off
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// `L L^T` factor stored row-wise from each row's first nonzero column.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors the matrix in which the rows/columns flagged in `fixed` are
    /// replaced by identity rows (used to impose Dirichlet values).
    pub fn factor_with_fixed(a: &CsrMatrix, fixed: &[bool]) -> Result<Self> {
        let n = a.dim();
        debug_assert_eq!(fixed.len(), n);
        let mut first = vec![0usize; n];
        for i in 0..n {
            first[i] = if fixed[i] {
                i
            } else {
                a.row(i).map(|(j, _)| j).filter(|&j| !fixed[j]).min().unwrap_or(i).min(i)
            };
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            if fixed[i] {
                data[start[i + 1] - 1] = 1.0;
                continue;
            }
            for (j, v) in a.row(i) {
                if j <= i && !fixed[j] {
                    data[start[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let row_i = start[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = start[j];
                let mut s = data[row_i + j - fi];
                let li = &data[row_i + k0 - fi..row_i + j - fi];
                let lj = &data[row_j + k0 - fj..row_j + j - fj];
                s -= li.iter().zip(lj).map(|(x, y)| x * y).sum::<f64>();
                data[row_i + j - fi] = s / data[row_j + j - fj];
            }
            let li = &data[row_i..row_i + i - fi];
            let d = data[row_i + i - fi] - li.iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite(i));
            }
            data[row_i + i - fi] = d.sqrt();
        }
        Ok(Self { first, start, data })
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        Self::factor_with_fixed(a, &vec![false; a.dim()])
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&b[fi..i]).map(|(l, x)| l * x).sum();
            b[i] = (b[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            b[i] /= row[i - fi];
            let xi = b[i];
            for (l, x) in row[..i - fi].iter().zip(&mut b[fi..i]) {
                *x -= l * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solves `A x = b` with `x[i] = values[i]` wherever a value is prescribed.
pub fn solve_dirichlet(a: &CsrMatrix, b: &[f64], values: &[Option<f64>]) -> Result<Vec<f64>> {
    let fixed: Vec<bool> = values.iter().map(Option::is_some).collect();
    let chol = EnvelopeCholesky::factor_with_fixed(a, &fixed)?;
    Ok(solve_dirichlet_factored(&chol, a, b, values))
}

/// As [`solve_dirichlet`] with a factor built from the same `values` pattern.
pub fn solve_dirichlet_factored(
    chol: &EnvelopeCholesky,
    a: &CsrMatrix,
    b: &[f64],
    values: &[Option<f64>],
) -> Vec<f64> {
    let n = a.dim();
    let mut rhs = b.to_vec();
    for i in 0..n {
        if let Some(v) = values[i] {
            rhs[i] = v;
            continue;
        }
        for (j, aij) in a.row(i) {
            if let Some(vj) = values[j] {
                rhs[i] -= aij * vj;
            }
        }
    }
    chol.solve_in_place(&mut rhs);
    rhs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0), (0, 1, 1.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 3);
        assert!(a.is_symmetric(0.0));
    }

    #[test]
    fn cholesky_solves_against_dense() {
        let n = 40;
        // periodic coupling produces a wide first row envelope
        let mut t = vec![(0, n - 1, -0.5), (n - 1, 0, -0.5)];
        for i in 0..n {
            t.push((i, i, 3.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, t);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = chol.solve(&b);
        let r = a.mul_vec(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let xd = dense.cholesky().unwrap().solve(&nalgebra::DVector::from_column_slice(&b));
        for i in 0..n {
            assert!((xd[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_rows() {
        let a = laplacian_1d(5);
        let mut vals = vec![None; 5];
        vals[0] = Some(0.0);
        vals[4] = Some(4.0);
        let x = solve_dirichlet(&a, &[0.0; 5], &vals).unwrap();
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_rejected() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert_eq!(EnvelopeCholesky::factor(&a).unwrap_err(), Error::NotPositiveDefinite(1));
    }
}
