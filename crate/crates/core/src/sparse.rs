//! Compressed sparse row storage and an envelope (skyline) Cholesky
//! factorization for the symmetric positive definite systems produced by
//! [`crate::operator`].

use crate::error::{Error, Result};

/// Square sparse matrix in CSR form with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n x n` matrix, summing duplicate entries.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "entry ({i}, {j}) outside {n}x{n}");
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
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

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// `y = A x`.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }

    /// `max_ij |A_ij - A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `A + shift * diag(d)`.
    pub fn add_diagonal(&self, shift: f64, d: &[f64]) -> Self {
        let mut t: Vec<_> = self.triplets().collect();
        t.extend((0..self.n).map(|i| (i, i, shift * d[i])));
        Self::from_triplets(self.n, t)
    }
}

/// Relative pivot size below which a matrix is declared singular.
pub const PIVOT_TOL: f64 = 1e-12;

/// Lower Cholesky factor stored by rows over each row's envelope.
#[derive(Clone, Debug)]
pub struct SkylineCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    /// Factors a symmetric positive definite matrix. Only the lower
    /// triangle is read.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let first: Vec<usize> = (0..n)
            .map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j <= i).min().unwrap_or(i))
            .collect();
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    data[start[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let (fi, si) = (first[i], start[i]);
            let a_ii = data[si + i - fi];
            for j in fi..i {
                let (fj, sj) = (first[j], start[j]);
                let k0 = fi.max(fj);
                let mut s = data[si + j - fi];
                for k in k0..j {
                    s -= data[si + k - fi] * data[sj + k - fj];
                }
                data[si + j - fi] = s / data[sj + j - fj];
            }
            let mut d = a_ii;
            for k in fi..i {
                d -= data[si + k - fi].powi(2);
            }
            if !(d > PIVOT_TOL * a_ii.abs()) {
                return Err(Error::Singular { row: i, pivot: d });
            }
            data[si + i - fi] = d.sqrt();
        }
        Ok(Self { first, start, data })
    }

    pub fn n(&self) -> usize {
        self.first.len()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let (fi, si) = (self.first[i], self.start[i]);
            let mut s = b[i];
            for k in fi..i {
                s -= self.data[si + k - fi] * b[k];
            }
            b[i] = s / self.data[si + i - fi];
        }
        for i in (0..n).rev() {
            let (fi, si) = (self.first[i], self.start[i]);
            b[i] /= self.data[si + i - fi];
            let xi = b[i];
            for k in fi..i {
                b[k] -= self.data[si + k - fi] * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
