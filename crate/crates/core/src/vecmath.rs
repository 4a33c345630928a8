//! Flat parameter vectors and the small amount of dense algebra the
//! combiner needs: dot products, squared norms, and axpy.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, CoreError};

/// Flat container for model parameters and gradients.
///
/// Every network's parameters are flattened into one of these in a fixed
/// layer-major order (see [`crate::net::NetworkSpec`]), so inner products
/// between gradients range over the full parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64, CoreError> {
        check_len(self.len(), other.len())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_sq())
    }

    /// Returns `self + alpha * x`.
    pub fn axpy(&self, alpha: f64, x: &ParamVector) -> Result<ParamVector, CoreError> {
        check_len(self.len(), x.len())?;
        Ok(ParamVector {
            values: self
                .values
                .iter()
                .zip(&x.values)
                .map(|(y, xi)| y + alpha * xi)
                .collect(),
        })
    }

    /// In-place `self += alpha * x`.
    pub fn axpy_mut(&mut self, alpha: f64, x: &ParamVector) -> Result<(), CoreError> {
        check_len(self.len(), x.len())?;
        for (y, xi) in self.values.iter_mut().zip(&x.values) {
            *y += alpha * xi;
        }
        Ok(())
    }

    pub fn scale_mut(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }
}

/// Dense row-major matrix of feature rows. Row = one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, CoreError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in &rows {
            check_len(ncols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self { rows: nrows, cols: ncols, data })
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, CoreError> {
        check_len(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_vec(v.to_vec())
    }

    #[test]
    fn dot_basics() {
        assert_eq!(pv(&[1.0, 2.0]).dot(&pv(&[3.0, 4.0])).unwrap(), 11.0);
    }

    #[test]
    fn norm_sq_basics() {
        assert_eq!(pv(&[3.0, 4.0]).norm_sq(), 25.0);
    }

    #[test]
    fn axpy_basics() {
        let y = pv(&[0.0, 1.0]);
        let x = pv(&[1.0, 0.0]);
        assert_eq!(y.axpy(2.0, &x).unwrap(), pv(&[2.0, 1.0]));
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let e = pv(&[1.0]).dot(&pv(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(e, CoreError::Shape { .. }));
    }

    #[test]
    fn matrix_rows() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!((m.nrows(), m.ncols()), (2, 2));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
