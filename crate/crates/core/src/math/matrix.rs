use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps row-major `data`. Rejects a length that is not `rows * cols` and
    /// any non-finite entry.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(contract!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(alloc::format!(
                "matrix entry ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(contract!("ragged rows"));
        }
        Matrix::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Matrix> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(contract!("row index {i} out of range for {} rows", self.rows));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    /// `self · otherᵀ`: `(m×k)·(n×k)ᵀ → m×n`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = Matrix::zeros(m, n);
        if m > 0 && n > 0 && k > 0 {
            gemm(
                (m, k, n),
                &self.data,
                (k as isize, 1),
                &other.data,
                (1, k as isize),
                &mut out.data,
            );
        }
        Ok(out)
    }

    /// `selfᵀ · other`: `(k×m)ᵀ·(k×n) → m×n`.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul_tn",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.cols, self.rows, other.cols);
        let mut out = Matrix::zeros(m, n);
        if m > 0 && n > 0 && k > 0 {
            gemm(
                (m, k, n),
                &self.data,
                (1, m as isize),
                &other.data,
                (n as isize, 1),
                &mut out.data,
            );
        }
        Ok(out)
    }

    /// Adds `v` to every row.
    pub fn add_row_vector(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.cols {
            return Err(Error::ShapeMismatch {
                op: "add_row_vector",
                left: self.shape(),
                right: (1, v.len()),
            });
        }
        for i in 0..self.rows {
            for (x, b) in self.row_mut(i).iter_mut().zip(v) {
                *x += b;
            }
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Divides each row by `(‖row‖₂ + eps)`. Zero rows stay zero.
    pub fn row_l2_normalize(&self, eps: f64) -> Result<Matrix> {
        if eps.is_nan() || eps <= 0.0 {
            return Err(contract!("normalization eps must be positive, got {eps}"));
        }
        let mut out = self.clone();
        for i in 0..out.rows {
            let row = out.row_mut(i);
            let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
            let scale = 1.0 / (norm + eps);
            row.iter_mut().for_each(|v| *v *= scale);
        }
        Ok(out)
    }
}

#[allow(unsafe_code)]
fn gemm(
    (m, k, n): (usize, usize, usize),
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() == m * n);
    // SAFETY: callers pass strides describing row- or column-major views that
    // stay inside `a` (m×k), `b` (k×n) and the row-major m×n buffer `c`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;
    use proptest::prelude::*;

    fn random(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.uniform(-1.0, 1.0))
    }

    fn naive_nt(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.rows());
        for i in 0..a.rows() {
            for j in 0..b.rows() {
                let mut s = 0.0;
                for p in 0..a.cols() {
                    s += a.get(i, p) * b.get(j, p);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn assert_close(a: &Matrix, b: &Matrix, rel: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= rel * (1.0 + y.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn identity_product() {
        let i2 = Matrix::identity(2);
        assert_eq!(i2.matmul_nt(&i2).unwrap(), i2);
    }

    #[test]
    fn one_by_one_product() {
        let a = Matrix::from_rows(&[&[1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[&[3.0, 4.0]]).unwrap();
        assert_eq!(a.matmul_nt(&b).unwrap().as_slice(), &[11.0]);
    }

    #[test]
    fn random_product_matches_triple_loop() {
        let mut rng = Rng::new(5);
        let a = random(&mut rng, 5, 7);
        let b = random(&mut rng, 4, 7);
        assert_close(&a.matmul_nt(&b).unwrap(), &naive_nt(&a, &b), 1e-12);
    }

    #[test]
    fn transposed_left_product_matches_triple_loop() {
        let mut rng = Rng::new(6);
        let a = random(&mut rng, 9, 3);
        let b = random(&mut rng, 9, 4);
        let got = a.matmul_tn(&b).unwrap();
        let want = Matrix::from_fn(3, 4, |i, j| (0..9).map(|p| a.get(p, i) * b.get(p, j)).sum());
        assert_close(&got, &want, 1e-12);
    }

    #[test]
    fn mismatched_shapes_are_named() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 4);
        match a.matmul_nt(&b) {
            Err(Error::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, (2, 3));
                assert_eq!(right, (2, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(a.matmul_tn(&Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn from_vec_checks_length_and_finiteness() {
        assert!(Matrix::from_vec(2, 2, alloc::vec![1.0; 3]).is_err());
        assert!(matches!(
            Matrix::from_vec(1, 2, alloc::vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn normalize_three_four_five() {
        let m = Matrix::from_rows(&[&[3.0, 4.0], &[0.0, 0.0]]).unwrap();
        let n = m.row_l2_normalize(1e-8).unwrap();
        assert!((n.get(0, 0) - 0.6).abs() < 1e-8);
        assert!((n.get(0, 1) - 0.8).abs() < 1e-8);
        assert_eq!(n.row(1), &[0.0, 0.0]);
        assert!(m.row_l2_normalize(0.0).is_err());
    }

    proptest! {
        #[test]
        fn matmul_matches_reference(m in 1usize..32, k in 1usize..32, n in 1usize..32, seed: u64) {
            let mut rng = Rng::new(seed);
            let a = random(&mut rng, m, k);
            let b = random(&mut rng, n, k);
            let got = a.matmul_nt(&b).unwrap();
            let want = naive_nt(&a, &b);
            for (x, y) in got.as_slice().iter().zip(want.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
            }
        }

        #[test]
        fn normalize_is_idempotent_and_scale_free(
            row in proptest::collection::vec(-10.0f64..10.0, 1..40),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(row.iter().any(|v| v.abs() > 1e-3));
            let m = Matrix::from_vec(1, row.len(), row.clone()).unwrap();
            let once = m.row_l2_normalize(1e-12).unwrap();
            let twice = once.row_l2_normalize(1e-12).unwrap();
            let scaled = m.map(|v| v * c).row_l2_normalize(1e-12).unwrap();
            let norm: f64 = once.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-6);
            for ((a, b), s) in once.as_slice().iter().zip(twice.as_slice()).zip(scaled.as_slice()) {
                prop_assert!((a - b).abs() < 1e-9);
                prop_assert!((a - s).abs() < 1e-9);
            }
        }
    }
}
