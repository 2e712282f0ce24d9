//! Dense row-major 2-D tensors and the matrix kernels used by the autodiff
//! tape.
//!
//! Every value in the numeric core is a matrix: scalars are `1x1`, row
//! vectors `1xn`, column vectors `nx1`. Keeping a single rank avoids a zoo of
//! broadcasting rules; the few broadcasts that exist (bias rows, scalar
//! scaling) are explicit tape operations.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix of scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Builds a tensor from row-major data. Errors when `data` does not hold
    /// exactly `rows * cols` entries.
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "tensor {}x{} needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn full(rows: usize, cols: usize, value: S) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// 1x1 tensor holding one value.
    pub fn scalar(value: S) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    /// Column vector from a slice.
    pub fn column(values: &[S]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    /// Row vector from a slice.
    pub fn row(values: &[S]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    /// Stacks equal-length rows into a matrix. Errors on ragged input or an
    /// empty row set.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::ShapeMismatch("from_rows on empty row set".into()));
        };
        let cols = first.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "ragged rows: expected width {}, got {}",
                    cols,
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    /// Extracts the single value of a 1x1 tensor.
    pub fn item(&self) -> Result<S> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::ShapeMismatch(format!(
                "item() on {}x{} tensor",
                self.rows, self.cols
            )))
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> S {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: S) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    #[inline]
    pub fn row_slice(&self, row: usize) -> &[S] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Concatenates two tensors with equal row counts along the column axis.
    pub fn hcat(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "hcat rows {} vs {}",
                self.rows, other.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row_slice(r));
            data.extend_from_slice(other.row_slice(r));
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Sum of all entries.
    pub fn sum(&self) -> S {
        let mut acc = S::zero();
        for &x in &self.data {
            acc += x;
        }
        acc
    }

    /// Squared Frobenius norm.
    pub fn sq_norm(&self) -> S {
        let mut acc = S::zero();
        for &x in &self.data {
            acc += x * x;
        }
        acc
    }

    /// Widens entries to `f64` (identity for `f64` tensors).
    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.as_f64()).collect()
    }
}

/// `out (+)= a * b` for row-major `a: n x k`, `b: k x m`.
///
/// With `accumulate` false the output is overwritten, otherwise added to.
pub fn matmul_nn<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, out: &mut Tensor<S>, accumulate: bool) {
    let (n, k) = a.shape();
    let (kb, m) = b.shape();
    assert_eq!(k, kb, "matmul_nn inner dims {k} vs {kb}");
    assert_eq!(out.shape(), (n, m), "matmul_nn output shape");
    if !accumulate {
        out.data_mut().fill(S::zero());
    }
    let bd = b.data();
    for i in 0..n {
        let arow = a.row_slice(i);
        let orow = &mut out.data_mut()[i * m..(i + 1) * m];
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &bd[kk * m..(kk + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// `out (+)= a * b^T` for `a: n x m`, `b: k x m`, producing `n x k`.
pub fn matmul_nt<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, out: &mut Tensor<S>, accumulate: bool) {
    let (n, m) = a.shape();
    let (k, mb) = b.shape();
    assert_eq!(m, mb, "matmul_nt inner dims {m} vs {mb}");
    assert_eq!(out.shape(), (n, k), "matmul_nt output shape");
    for i in 0..n {
        let arow = a.row_slice(i);
        for j in 0..k {
            let brow = b.row_slice(j);
            let mut acc = S::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            let slot = &mut out.data_mut()[i * k + j];
            if accumulate {
                *slot += acc;
            } else {
                *slot = acc;
            }
        }
    }
}

/// `out (+)= a^T * b` for `a: n x k`, `b: n x m`, producing `k x m`.
pub fn matmul_tn<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, out: &mut Tensor<S>, accumulate: bool) {
    let (n, k) = a.shape();
    let (nb, m) = b.shape();
    assert_eq!(n, nb, "matmul_tn outer dims {n} vs {nb}");
    assert_eq!(out.shape(), (k, m), "matmul_tn output shape");
    if !accumulate {
        out.data_mut().fill(S::zero());
    }
    for i in 0..n {
        let arow = a.row_slice(i);
        let brow = b.row_slice(i);
        for (l, &ail) in arow.iter().enumerate() {
            let orow = &mut out.data_mut()[l * m..(l + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += ail * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let (n, k) = a.shape();
        let (_, m) = b.shape();
        let mut out = Tensor::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += a.get(i, l) * b.get(l, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    fn arange(rows: usize, cols: usize, scale: f64) -> Tensor<f64> {
        Tensor::new(
            rows,
            cols,
            (0..rows * cols).map(|i| (i as f64 * 0.7 - 3.0) * scale).collect(),
        )
        .unwrap()
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(2, 3, vec![0.0; 5]).is_err());
        assert!(Tensor::new(2, 3, vec![0.0; 6]).is_ok());
    }

    #[test]
    fn item_requires_scalar_shape() {
        assert!(Tensor::scalar(4.0).item().is_ok());
        assert!(Tensor::<f64>::zeros(2, 1).item().is_err());
    }

    #[test]
    fn matmul_nn_matches_naive() {
        let a = arange(4, 3, 0.5);
        let b = arange(3, 5, 0.25);
        let mut out = Tensor::zeros(4, 5);
        matmul_nn(&a, &b, &mut out, false);
        let expect = naive_matmul(&a, &b);
        assert_eq!(out, expect);
    }

    #[test]
    fn matmul_nt_matches_transposed_naive() {
        let a = arange(4, 3, 0.5);
        let b = arange(6, 3, 0.2);
        let mut bt = Tensor::zeros(3, 6);
        for i in 0..6 {
            for j in 0..3 {
                bt.set(j, i, b.get(i, j));
            }
        }
        let mut out = Tensor::zeros(4, 6);
        matmul_nt(&a, &b, &mut out, false);
        let expect = naive_matmul(&a, &bt);
        for (x, y) in out.data().iter().zip(expect.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_tn_matches_transposed_naive() {
        let a = arange(5, 3, 0.3);
        let b = arange(5, 4, 0.6);
        let mut at = Tensor::zeros(3, 5);
        for i in 0..5 {
            for j in 0..3 {
                at.set(j, i, a.get(i, j));
            }
        }
        let mut out = Tensor::zeros(3, 4);
        matmul_tn(&a, &b, &mut out, false);
        let expect = naive_matmul(&at, &b);
        for (x, y) in out.data().iter().zip(expect.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn accumulate_adds_to_existing_output() {
        let a = arange(2, 2, 1.0);
        let b = arange(2, 2, 1.0);
        let mut out = Tensor::full(2, 2, 10.0);
        matmul_nn(&a, &b, &mut out, true);
        let mut plain = Tensor::zeros(2, 2);
        matmul_nn(&a, &b, &mut plain, false);
        for (x, y) in out.data().iter().zip(plain.data()) {
            assert!((x - (y + 10.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn hcat_interleaves_rows() {
        let a = Tensor::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(2, 1, vec![9.0, 8.0]).unwrap();
        let c = a.hcat(&b).unwrap();
        assert_eq!(c.shape(), (2, 3));
        assert_eq!(c.data(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
        assert!(a.hcat(&Tensor::zeros(3, 1)).is_err());
    }

    #[test]
    fn finite_check_detects_nan_and_inf() {
        let mut t = Tensor::<f64>::zeros(2, 2);
        assert!(t.all_finite());
        t.set(0, 1, f64::NAN);
        assert!(!t.all_finite());
        t.set(0, 1, f64::INFINITY);
        assert!(!t.all_finite());
    }
}
