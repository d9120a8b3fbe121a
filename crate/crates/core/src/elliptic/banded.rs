//! Square band matrix with an in-place LU factorization without pivoting.
//!
//! Suitable for matrices whose symmetric part is positive definite, where elimination without
//! row exchanges is stable.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw + 1).min(self.n);
            let row = &self.data[i * (2 * self.bw + 1)..];
            let mut acc = 0.0;
            for j in lo..hi {
                acc += row[j + self.bw - i] * x[j];
            }
            *yi = acc;
        }
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Doolittle factorization; unit lower factor stored below the diagonal.
    pub fn factorize(&self) -> Result<BandLu> {
        let mut lu = self.clone();
        let n = self.n;
        let bw = self.bw;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let pivot = lu.data[lu.idx(k, k)];
            if !(pivot.abs() > 1e-14 * scale) {
                return Err(Error::SingularSystem { row: k });
            }
            let hi = (k + bw + 1).min(n);
            for i in k + 1..hi {
                let ik = lu.idx(i, k);
                let l = lu.data[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                lu.data[ik] = l;
                for j in k + 1..hi {
                    let kj = lu.data[lu.idx(k, j)];
                    let ij = lu.idx(i, j);
                    lu.data[ij] -= l * kj;
                }
            }
        }
        Ok(BandLu { lu })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    lu: BandMatrix,
}

impl BandLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = &self.lu;
        let n = m.n;
        let bw = m.bw;
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut acc = x[i];
            for j in lo..i {
                acc -= m.data[m.idx(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut acc = x[i];
            for j in i + 1..hi {
                acc -= m.data[m.idx(i, j)] * x[j];
            }
            x[i] = acc / m.data[m.idx(i, i)];
        }
        x
    }
}
