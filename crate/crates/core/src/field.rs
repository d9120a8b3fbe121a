/// A fixed-width vector per grid cell, stored contiguously cell by cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellField {
    pub width: usize,
    pub data: Vec<f64>,
}

impl CellField {
    pub fn zeros(ncells: usize, width: usize) -> Self {
        CellField {
            width,
            data: vec![0.0; ncells * width],
        }
    }

    pub fn from_fn(ncells: usize, width: usize, mut f: impl FnMut(usize) -> Vec<f64>) -> Self {
        let mut data = Vec::with_capacity(ncells * width);
        for c in 0..ncells {
            let v = f(c);
            assert_eq!(v.len(), width, "cell {c}: wrong width");
            data.extend_from_slice(&v);
        }
        CellField { width, data }
    }

    pub fn ncells(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        &self.data[c * self.width..(c + 1) * self.width]
    }

    pub fn cell_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.width..(c + 1) * self.width]
    }

    pub fn cells(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.width)
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &CellField) -> CellField {
        assert_eq!(self.data.len(), other.data.len());
        CellField {
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        }
    }

    pub fn scale(&self, alpha: f64) -> CellField {
        CellField {
            width: self.width,
            data: self.data.iter().map(|a| alpha * a).collect(),
        }
    }

    /// Measure-weighted L2 inner product.
    pub fn dot(&self, other: &CellField, measures: &[f64]) -> f64 {
        self.cells()
            .zip(other.cells())
            .zip(measures)
            .map(|((a, b), m)| m * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    /// Measure-weighted L^p norm of the pointwise Euclidean norm.
    pub fn lp_norm(&self, p: f64, measures: &[f64]) -> f64 {
        if p.is_infinite() {
            return self.max_norm();
        }
        self.cells()
            .zip(measures)
            .map(|(a, m)| m * norm(a).powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }

    pub fn max_norm(&self) -> f64 {
        self.cells().map(norm).fold(0.0, f64::max)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
