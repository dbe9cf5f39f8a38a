//! Dense row-major `f64` matrices.
//!
//! Every product accumulates its inner dimension serially from `0.0` in
//! index order, so results are bit-identical to a naive triple loop and
//! reproducible across runs. The loops are arranged `i-k-j` so the innermost
//! loop streams over contiguous rows and vectorizes without reassociating
//! any sum.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn column(v: &[f64]) -> Self {
        Mat {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn diag(v: &[f64]) -> Self {
        let mut m = Mat::zeros(v.len(), v.len());
        for (i, &x) in v.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col_vec(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    fn check_same_shape(&self, other: &Mat, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "{op}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// `self * b`.
    pub fn matmul(&self, b: &Mat) -> Result<Mat> {
        if self.cols != b.rows {
            return Err(Error::shape(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, b.cols);
        let n = b.cols;
        let mut nz = Vec::with_capacity(self.cols);
        for i in 0..self.rows {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            gemm_row(&mut out.data[i * n..(i + 1) * n], |k| a_row[k], self.cols, &b.data, &mut nz);
        }
        Ok(out)
    }

    /// `selfᵀ * b` without materializing the transpose.
    pub fn t_matmul(&self, b: &Mat) -> Result<Mat> {
        if self.rows != b.rows {
            return Err(Error::shape(format!(
                "t_matmul: ({}x{})ᵀ times {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut out = Mat::zeros(self.cols, b.cols);
        let n = b.cols;
        let m = self.cols;
        let mut nz = Vec::with_capacity(self.rows);
        for i in 0..m {
            gemm_row(&mut out.data[i * n..(i + 1) * n], |k| self.data[k * m + i], self.rows, &b.data, &mut nz);
        }
        Ok(out)
    }

    /// `self * bᵀ`.
    pub fn matmul_t(&self, b: &Mat) -> Result<Mat> {
        if self.cols != b.cols {
            return Err(Error::shape(format!(
                "matmul_t: {}x{} times ({}x{})ᵀ",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        self.matmul(&b.transpose())
    }

    pub fn add(&self, other: &Mat) -> Result<Mat> {
        self.check_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        self.check_same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn add_assign(&mut self, other: &Mat) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Mat {
        self.map(|x| x * s)
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_map(&self, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn relu(&self) -> Mat {
        self.map(|x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::shape(format!(
                "matvec: {}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                let mut s = 0.0;
                for (a, b) in self.row(i).iter().zip(v) {
                    s += a * b;
                }
                s
            })
            .collect())
    }

    /// Horizontal concatenation `[m₀ | m₁ | …]`.
    pub fn hcat(parts: &[&Mat]) -> Result<Mat> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(Error::shape(format!(
                "hcat: row counts {rows} and {}",
                bad.rows
            )));
        }
        let cols: usize = parts.iter().map(|m| m.cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for m in parts {
                out.data[i * cols + off..i * cols + off + m.cols].copy_from_slice(m.row(i));
                off += m.cols;
            }
        }
        Ok(out)
    }

    /// Columns `start..start + width` as a new matrix.
    pub fn col_block(&self, start: usize, width: usize) -> Mat {
        let mut out = Mat::zeros(self.rows, width);
        for i in 0..self.rows {
            out.row_mut(i)
                .copy_from_slice(&self.row(i)[start..start + width]);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i + 1..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square() && self.max_asymmetry() <= tol
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Little-endian bytes of the data, for bit-exact comparisons and hashing.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|x| x.to_le_bytes()).collect()
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// `o[j] = Σ_k a(k) · b[k][j]` for one output row, `k` ascending from 0.0.
/// Terms with `a(k) == 0` add an exact zero and are skipped; the nonzero
/// coefficients are gathered first so the inner loop stays branch-free.
#[inline(always)]
fn gemm_row(o: &mut [f64], a: impl Fn(usize) -> f64, kdim: usize, b: &[f64], nz: &mut Vec<(usize, f64)>) {
    let n = o.len();
    nz.clear();
    nz.extend((0..kdim).map(|k| (k, a(k))).filter(|&(_, c)| c != 0.0));
    for &(k, c) in nz.iter() {
        for (x, y) in o.iter_mut().zip(&b[k * n..(k + 1) * n]) {
            *x += c * y;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn naive(a: &Mat, b: &Mat) -> Mat {
        let mut out = Mat::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    fn random(rng: &mut Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = Rng::new(3);
        let m = random(&mut rng, 3, 4);
        assert_eq!(Mat::identity(3).matmul(&m).unwrap(), m);
    }

    #[test]
    fn small_product_by_hand() {
        let a = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Mat::from_rows(&[[1.0], [1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn products_match_triple_loop_bitwise() {
        let mut rng = Rng::new(11);
        for _ in 0..10 {
            let a = random(&mut rng, 5, 5);
            let b = random(&mut rng, 5, 5);
            let expected = naive(&a, &b);
            assert_eq!(a.matmul(&b).unwrap().to_le_bytes(), expected.to_le_bytes());
            assert_eq!(
                a.transpose().t_matmul(&b).unwrap().to_le_bytes(),
                expected.to_le_bytes()
            );
            assert_eq!(
                a.matmul_t(&b.transpose()).unwrap().to_le_bytes(),
                expected.to_le_bytes()
            );
        }
    }

    #[test]
    fn shape_errors() {
        let a = Mat::zeros(2, 3);
        assert!(matches!(a.matmul(&Mat::zeros(2, 3)), Err(Error::Shape(_))));
        assert!(matches!(a.t_matmul(&Mat::zeros(3, 3)), Err(Error::Shape(_))));
        assert!(Mat::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Mat::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn outer_product_is_exactly_symmetric() {
        let mut rng = Rng::new(5);
        let x = random(&mut rng, 7, 3);
        let p = x.matmul_t(&x).unwrap();
        assert_eq!(p.max_asymmetry(), 0.0);
    }

    #[test]
    fn hcat_and_col_block_invert() {
        let mut rng = Rng::new(2);
        let a = random(&mut rng, 4, 2);
        let b = random(&mut rng, 4, 3);
        let c = Mat::hcat(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), (4, 5));
        assert_eq!(c.col_block(0, 2), a);
        assert_eq!(c.col_block(2, 3), b);
    }

    mod props {
        use super::*;
        use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn associativity(seed in any::<u64>(), n in 1usize..6, m in 1usize..6, p in 1usize..6, q in 1usize..6) {
                let mut rng = Rng::new(seed);
                let a = random(&mut rng, n, m);
                let b = random(&mut rng, m, p);
                let c = random(&mut rng, p, q);
                let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
                let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
                prop_assert!(left.max_abs_diff(&right) <= 1e-9);
            }
        }
    }
}
