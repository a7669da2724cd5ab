//! Row-major dense tensors.
//!
//! Deliberately small: flat `f64` storage, no views, no broadcasting
//! beyond per-row vector ops. Shape mismatches are programmer errors
//! and panic; constructors that accept external data return `Result`.

use crate::error::{Error, Result};

/// Dense tensor with row-major flat storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// All-zero tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Build from a flat row-major buffer, validating length and finiteness.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "tensor element {} is {}",
                bad, data[bad]
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// (rows, cols) of a 2-D tensor. Panics on other ranks.
    pub fn dims2(&self) -> (usize, usize) {
        assert!(
            self.shape.len() == 2,
            "expected rank-2 tensor, got shape {:?}",
            self.shape
        );
        (self.shape[0], self.shape[1])
    }

    pub fn rows(&self) -> usize {
        self.dims2().0
    }

    pub fn cols(&self) -> usize {
        self.dims2().1
    }

    /// Row `i` of a 2-D tensor as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        let (rows, cols) = self.dims2();
        assert!(i < rows, "row {} out of {}", i, rows);
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let (rows, cols) = self.dims2();
        assert!(i < rows, "row {} out of {}", i, rows);
        &mut self.data[i * cols..(i + 1) * cols]
    }

    /// Matrix product `self · rhs` for 2-D tensors.
    pub fn matmul(&self, rhs: &Tensor) -> Tensor {
        let (m, ka) = self.dims2();
        let (kb, n) = rhs.dims2();
        assert_eq!(ka, kb, "matmul inner dims: {} vs {}", ka, kb);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * ka..(i + 1) * ka];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (k, &a) in a_row.iter().enumerate() {
                // ReLU activations are mostly zeros; skipping them is
                // IEEE-identical for finite operands and saves real work.
                if a != 0.0 {
                    let b_row = &rhs.data[k * n..(k + 1) * n];
                    for (o, &b) in o_row.iter_mut().zip(b_row) {
                        *o += a * b;
                    }
                }
            }
        }
        Tensor {
            shape: vec![m, n],
            data: out,
        }
    }

    /// `self · rhsᵀ` where `rhs` is stored un-transposed.
    pub fn matmul_transpose_rhs(&self, rhs: &Tensor) -> Tensor {
        let (m, ka) = self.dims2();
        let (n, kb) = rhs.dims2();
        assert_eq!(ka, kb, "matmul inner dims: {} vs {}", ka, kb);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * ka..(i + 1) * ka];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (j, o) in o_row.iter_mut().enumerate() {
                let b_row = &rhs.data[j * kb..(j + 1) * kb];
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                *o = acc;
            }
        }
        Tensor {
            shape: vec![m, n],
            data: out,
        }
    }

    /// `selfᵀ · rhs` where `self` is stored un-transposed.
    pub fn transpose_matmul(&self, rhs: &Tensor) -> Tensor {
        let (ka, m) = self.dims2();
        let (kb, n) = rhs.dims2();
        assert_eq!(ka, kb, "matmul inner dims: {} vs {}", ka, kb);
        let mut out = vec![0.0; m * n];
        for k in 0..ka {
            let a_row = &self.data[k * m..(k + 1) * m];
            let b_row = &rhs.data[k * n..(k + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a != 0.0 {
                    let o_row = &mut out[i * n..(i + 1) * n];
                    for (o, &b) in o_row.iter_mut().zip(b_row) {
                        *o += a * b;
                    }
                }
            }
        }
        Tensor {
            shape: vec![m, n],
            data: out,
        }
    }

    /// Add a vector to every row of a 2-D tensor.
    pub fn add_row_vector(&mut self, v: &[f64]) {
        let (rows, cols) = self.dims2();
        assert_eq!(v.len(), cols, "row vector length {} vs {} cols", v.len(), cols);
        for i in 0..rows {
            for (x, &b) in self.data[i * cols..(i + 1) * cols].iter_mut().zip(v) {
                *x += b;
            }
        }
    }

    /// Elementwise map into a new tensor.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Sum over rows, producing one value per column.
    pub fn column_sums(&self) -> Vec<f64> {
        let (rows, cols) = self.dims2();
        let mut out = vec![0.0; cols];
        for i in 0..rows {
            for (o, &x) in out.iter_mut().zip(&self.data[i * cols..(i + 1) * cols]) {
                *o += x;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn validate_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("{what} contains NaN or Inf")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_shape_and_finiteness() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0; 4]).is_ok());
        assert!(matches!(
            Tensor::from_vec(&[2, 2], vec![1.0; 3]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            Tensor::from_vec(&[2], vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn matmul_matches_hand_computation() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(&[3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transpose_variants_agree_with_plain_matmul() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 5.0, -6.0]).unwrap();
        let b = Tensor::from_vec(&[4, 3], (0..12).map(|i| i as f64 * 0.25 - 1.0).collect()).unwrap();
        // a · bᵀ  vs  explicit transpose
        let bt = transpose(&b);
        assert_eq!(a.matmul_transpose_rhs(&b).data(), a.matmul(&bt).data());
        // aᵀ · a  vs  explicit transpose
        let at = transpose(&a);
        assert_eq!(a.transpose_matmul(&a).data(), at.matmul(&a).data());
    }

    #[test]
    fn add_row_vector_broadcasts_per_row() {
        let mut t = Tensor::zeros(&[2, 3]);
        t.add_row_vector(&[1.0, 2.0, 3.0]);
        assert_eq!(t.data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn column_sums_sum_over_rows() {
        let t = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.column_sums(), vec![4.0, 6.0]);
    }

    fn transpose(t: &Tensor) -> Tensor {
        let (r, c) = t.dims2();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = t.data()[i * c + j];
            }
        }
        Tensor::from_vec(&[c, r], data).unwrap()
    }
}
