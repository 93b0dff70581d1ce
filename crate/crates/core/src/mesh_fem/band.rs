//! Symmetric banded storage and a banded Cholesky factorization.
//!
//! Structured-grid stiffness matrices have a bandwidth of roughly twice the
//! number of nodes per grid row, so a band factorization is a sparse direct
//! solve with no fill outside the band.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};

/// Upper band of a symmetric matrix: row `i` stores columns `i..=i+bw`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymBandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0);
        m.data.iter_mut().for_each(|x| *x = 1.0);
        m
    }

    /// Builds from a dense symmetric matrix, keeping the smallest band that
    /// holds every nonzero of the upper triangle.
    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let mut bw = 0;
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate().skip(i) {
                if v != 0.0 {
                    bw = bw.max(j - i);
                }
            }
        }
        let mut m = Self::zeros(n, bw);
        for i in 0..n {
            for j in i..(i + bw + 1).min(n) {
                m.set(i, j, a[i][j]);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        (j - i <= self.bw).then(|| i * (self.bw + 1) + (j - i))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Panics when `(i, j)` lies outside the band.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            y[i] += row[0] * x[i];
            for (k, &a) in row.iter().enumerate().skip(1) {
                let j = i + k;
                if j >= self.n {
                    break;
                }
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Symmetric elimination of dof `c`: row and column zeroed, unit diagonal.
    pub fn constrain(&mut self, c: usize) {
        let lo = c.saturating_sub(self.bw);
        let hi = (c + self.bw + 1).min(self.n);
        for j in lo..hi {
            if j != c {
                self.set(c, j, 0.0);
            }
        }
        self.set(c, c, 1.0);
    }

    /// Factors `A = U^T U` within the band.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let w = self.bw + 1;
        let mut u = self.data.clone();
        for i in 0..n {
            let row_i = i * w;
            let mut d = u[row_i];
            for k in i.saturating_sub(self.bw)..i {
                let uki = u[k * w + (i - k)];
                d -= uki * uki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: i, value: d });
            }
            let dii = d.sqrt();
            u[row_i] = dii;
            let jmax = (i + self.bw).min(n - 1);
            for j in (i + 1)..=jmax {
                let mut s = u[row_i + (j - i)];
                for k in j.saturating_sub(self.bw)..i {
                    s -= u[k * w + (i - k)] * u[k * w + (j - k)];
                }
                u[row_i + (j - i)] = s / dii;
            }
        }
        Ok(BandCholesky {
            n,
            bw: self.bw,
            u,
            solves: AtomicUsize::new(0),
        })
    }
}

/// Upper-triangular band factor; read-only after construction apart from a
/// solve counter.
#[derive(Debug)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    u: Vec<f64>,
    solves: AtomicUsize,
}

impl BandCholesky {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` with one forward and one backward substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "right-hand side",
                expected: self.n,
                got: b.len(),
            });
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        let w = self.bw + 1;
        let mut x = b.to_vec();
        // U^T z = b
        for i in 0..self.n {
            let mut s = x[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.u[k * w + (i - k)] * x[k];
            }
            x[i] = s / self.u[i * w];
        }
        // U x = z
        for i in (0..self.n).rev() {
            let mut s = x[i];
            let jmax = (i + self.bw).min(self.n - 1);
            for j in (i + 1)..=jmax {
                s -= self.u[i * w + (j - i)] * x[j];
            }
            x[i] = s / self.u[i * w];
        }
        Ok(x)
    }

    /// Number of solves performed with this factor so far.
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }
}
