//! Dense row-major matrices and the inner-product kernel shared by
//! training and retrieval.
//!
//! Embeddings are stored in their declared precision (`f32` on disk) but
//! every dot product accumulates in `f64`, so rankings computed through
//! different algebraic routes agree to well below any score gap that
//! occurs in practice.

use num_traits::Float;

/// Scalar types embeddings can be stored in.
pub trait Scalar: Float + Send + Sync + 'static {
    fn as_f64(self) -> f64;
    fn from_f64(x: f64) -> Self;
}

impl Scalar for f32 {
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn from_f64(x: f64) -> Self {
        x
    }
}

/// Row-major dense matrix; one row per user or item.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix shape mismatch");
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Inner product accumulated in f64, in a fixed four-lane order.
///
/// The lane split lets LLVM vectorize the f64 accumulation while keeping
/// the summation order deterministic.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot product length mismatch");
    let n = a.len();
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i].as_f64() * b[i].as_f64();
        acc[1] += a[i + 1].as_f64() * b[i + 1].as_f64();
        acc[2] += a[i + 2].as_f64() * b[i + 2].as_f64();
        acc[3] += a[i + 3].as_f64() * b[i + 3].as_f64();
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i].as_f64() * b[i].as_f64();
    }
    s
}

/// Sum of two rows into a fresh f64 buffer, used by the gradient kernels.
#[inline]
pub(crate) fn add_rows_f64<T: Scalar>(a: &[T], b: &[T], out: &mut [f64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x.as_f64() + y.as_f64();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f32> = (0..13).map(|i| i as f32 * 0.5 - 3.0).collect();
        let b: Vec<f32> = (0..13).map(|i| (i as f32).sin()).collect();
        let naive: f64 = a
            .iter()
            .zip(&b)
            .map(|(&x, &y)| x as f64 * y as f64)
            .sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn dot_empty_is_zero() {
        let a: [f32; 0] = [];
        assert_eq!(dot(&a, &a), 0.0);
    }

    #[test]
    fn mat_row_access() {
        let m = Mat::from_vec(2, 3, vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(m.row(1), &[4.0, 5.0, 6.0]);
    }
}
