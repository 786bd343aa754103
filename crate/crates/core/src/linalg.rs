//! Dense vector and matrix primitives shared by every other module.
//!
//! Vectors are plain `f64` slices. [`Mat`] is a row-major dense matrix;
//! matrix products go through `matrixmultiply`, which takes arbitrary
//! strides so transposed operands never need to be materialized.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Stacks equally sized rows into a matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
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

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Mat) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "cannot add {}x{} to {}x{}",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        axpy(alpha, &other.data, &mut self.data);
        Ok(())
    }
}

/// Whether an operand of [`gemm`] is used as stored or transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

fn op_shape(m: &Mat, op: Op) -> (usize, usize, isize, isize) {
    let (r, c) = (m.rows, m.cols);
    match op {
        Op::N => (r, c, c as isize, 1),
        Op::T => (c, r, 1, c as isize),
    }
}

/// `c = alpha * op(a) * op(b) + beta * c`
pub fn gemm(alpha: f64, a: &Mat, op_a: Op, b: &Mat, op_b: Op, beta: f64, c: &mut Mat) -> Result<()> {
    let (m, k, rsa, csa) = op_shape(a, op_a);
    let (kb, n, rsb, csb) = op_shape(b, op_b);
    if k != kb || c.rows != m || c.cols != n {
        return Err(Error::Shape(format!(
            "gemm: ({m}x{k}) * ({kb}x{n}) into {}x{}",
            c.rows, c.cols
        )));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    if k == 0 {
        c.data.iter_mut().for_each(|v| *v *= beta);
        return Ok(());
    }
    // SAFETY: shapes and strides were checked above, so every index
    // dgemm touches lies inside the three backing buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
    Ok(())
}

#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn check_pair(u: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::Domain(
            "cosine distance of a zero or non-finite vector".into(),
        ));
    }
    Ok((nu, nv))
}

/// Cosine similarity `u·v / (‖u‖‖v‖)`, clamped to [-1, 1].
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    let (nu, nv) = check_pair(u, v)?;
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine distance `1 - cos(u, v)`, in [0, 2].
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_similarity(u, v)?)
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Domain("cannot normalize a zero or non-finite vector".into()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Formats with 9 significant digits; the text form of every numeric file.
pub fn fmt_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_distance_examples() {
        assert_eq!(cosine_distance(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&[2.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn cosine_distance_errors() {
        assert!(matches!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(cosine_distance(&[1.0], &[1.0, 0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn normalize_examples() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert_eq!(l2_normalize(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let a = Mat::from_vec(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Mat::from_vec(2, 3, vec![0.5, -1., 2., 1., 0., -3.]).unwrap();
        // a * b^T
        let mut c = Mat::zeros(2, 2);
        gemm(1.0, &a, Op::N, &b, Op::T, 0.0, &mut c).unwrap();
        assert_eq!(c.as_slice(), &[4.5, -8.0, 9.0, -14.0]);
        // a^T * b
        let mut d = Mat::zeros(3, 3);
        gemm(1.0, &a, Op::T, &b, Op::N, 0.0, &mut d).unwrap();
        assert_eq!(d.row(0), &[4.5, -1.0, -10.0]);
        assert!(gemm(1.0, &a, Op::N, &b, Op::N, 0.0, &mut d).is_err());
    }

    fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, n).prop_filter("nonzero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn cosine_scale_invariant(u in vec_strategy(6), v in vec_strategy(6),
                                  a in 0.01f64..100.0, b in 0.01f64..100.0) {
            let d = cosine_distance(&u, &v).unwrap();
            let au: Vec<f64> = u.iter().map(|x| a * x).collect();
            let bv: Vec<f64> = v.iter().map(|x| b * x).collect();
            prop_assert!((cosine_distance(&au, &bv).unwrap() - d).abs() < 1e-12);
            prop_assert!((cosine_distance(&v, &u).unwrap() - d).abs() < 1e-15);
            prop_assert!((0.0..=2.0).contains(&d));
        }

        #[test]
        fn unit_sphere_bridge(u in vec_strategy(8), v in vec_strategy(8)) {
            let (u, v) = (l2_normalize(&u).unwrap(), l2_normalize(&v).unwrap());
            prop_assert!((norm(&u) - 1.0).abs() < 1e-12);
            let sq: f64 = u.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!((sq - 2.0 * cosine_distance(&u, &v).unwrap()).abs() < 1e-10);
        }
    }
}
