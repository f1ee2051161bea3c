//! Dense row-major matrices, activations and the softmax cross-entropy loss.
//!
//! Everything here is `f64`. Matrix products keep a fixed per-element
//! summation order that does not depend on the number of rows, so evaluating
//! a layer on a stacked batch gives the same bits as evaluating it row by row.

use std::fmt;
use std::ops::{Deref, DerefMut};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Work (multiply-adds) above which row blocks are spread over the rayon pool.
const PAR_THRESHOLD: usize = 1 << 16;
const WIDE_OUTPUT: usize = 32;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match {rows}x{cols}");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix { rows: rows.len(), cols, data }
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

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[f64]) {
        assert_eq!(bias.len(), self.cols, "bias width mismatch");
        for r in self.data.chunks_exact_mut(self.cols) {
            r.iter_mut().zip(bias).for_each(|(a, b)| *a += b);
        }
    }

    /// Accumulates column sums into `out`.
    pub fn col_sums_into(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.cols, "column-sum width mismatch");
        for r in self.data.chunks_exact(self.cols) {
            out.iter_mut().zip(r).for_each(|(o, x)| *o += x);
        }
    }

    /// Rows gathered by index, in the given order.
    pub fn gather_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (o, &i) in idx.iter().enumerate() {
            out.row_mut(o).copy_from_slice(self.row(i));
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// A dense vector; a thin wrapper used where a single hidden state or bias is meant.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector(pub Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Runs `f(row_index, out_row)` over the rows of `out`, in parallel when the
/// product is large. Each row is computed independently, so the result does
/// not depend on the thread count.
fn for_each_row(out: &mut Matrix, work: usize, f: impl Fn(usize, &mut [f64]) + Sync + Send) {
    let cols = out.cols;
    if cols == 0 {
        return;
    }
    if work >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
        out.data.par_chunks_mut(cols).enumerate().for_each(|(i, r)| f(i, r));
    } else {
        out.data.chunks_mut(cols).enumerate().for_each(|(i, r)| f(i, r));
    }
}

/// `A · B`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let mut c = Matrix::zeros(a.rows, b.cols);
    matmul_acc(a, b, &mut c);
    c
}

/// `C += A · B`.
pub fn matmul_acc(a: &Matrix, b: &Matrix, c: &mut Matrix) {
    assert_eq!(a.cols, b.rows, "matmul: {}x{} times {}x{}", a.rows, a.cols, b.rows, b.cols);
    assert_eq!(c.shape(), (a.rows, b.cols), "matmul: output shape mismatch");
    let work = a.rows * a.cols * b.cols;
    for_each_row(c, work, |i, crow| {
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik != 0.0 {
                axpy(aik, b.row(k), crow);
            }
        }
    });
}

/// `A · Bᵀ`, the affine-layer product for weights stored `out × in`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_nt: {}x{} times ({}x{})ᵀ", a.rows, a.cols, b.rows, b.cols);
    let mut c = Matrix::zeros(a.rows, b.rows);
    let work = a.rows * a.cols * b.rows;
    if b.rows >= WIDE_OUTPUT {
        // Wide outputs vectorise better as row updates against Bᵀ.
        let bt = b.transpose();
        for_each_row(&mut c, work, |i, crow| {
            for (k, &aik) in a.row(i).iter().enumerate() {
                if aik != 0.0 {
                    axpy(aik, bt.row(k), crow);
                }
            }
        });
        return c;
    }
    for_each_row(&mut c, work, |i, crow| {
        let arow = a.row(i);
        for (j, out) in crow.iter_mut().enumerate() {
            *out = dot(arow, b.row(j));
        }
    });
    c
}

/// `C += Aᵀ · B`, the weight-gradient product.
pub fn matmul_tn_acc(a: &Matrix, b: &Matrix, c: &mut Matrix) {
    assert_eq!(a.rows, b.rows, "matmul_tn: ({}x{})ᵀ times {}x{}", a.rows, a.cols, b.rows, b.cols);
    assert_eq!(c.shape(), (a.cols, b.cols), "matmul_tn: output shape mismatch");
    let cols = c.cols;
    if cols == 0 {
        return;
    }
    if cols < WIDE_OUTPUT && a.cols >= WIDE_OUTPUT {
        // Narrow right operand: accumulate Cᵀ along the rows of A.
        let mut ct = c.transpose();
        for k in 0..a.rows {
            let arow = a.row(k);
            for (j, &bkj) in b.row(k).iter().enumerate() {
                if bkj != 0.0 {
                    axpy(bkj, arow, ct.row_mut(j));
                }
            }
        }
        *c = ct.transpose();
        return;
    }
    // Output rows are processed in blocks so that `a` is read along its rows.
    // Every element still sums over k in ascending order.
    const BLOCK: usize = 32;
    let block = |(bi, out): (usize, &mut [f64])| {
        let i0 = bi * BLOCK;
        for k in 0..a.rows {
            let brow = b.row(k);
            let arow = &a.row(k)[i0..i0 + out.len() / cols];
            for (crow, &aki) in out.chunks_mut(cols).zip(arow) {
                if aki != 0.0 {
                    axpy(aki, brow, crow);
                }
            }
        }
    };
    if a.rows * a.cols * b.cols >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
        c.data.par_chunks_mut(cols * BLOCK).enumerate().for_each(block);
    } else {
        c.data.chunks_mut(cols * BLOCK).enumerate().for_each(block);
    }
}

/// Cyclic rotation: `out[i] = v[(i + k) mod n]`.
///
/// `k = 1` is one application of the shift permutation whose row `i` selects
/// element `i + 1`; negative `k` rotates the other way.
pub fn circular_shift(v: &[f64], k: isize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    circular_shift_into(v, k, &mut out);
    out
}

pub fn circular_shift_into(v: &[f64], k: isize, out: &mut [f64]) {
    let n = v.len();
    assert_eq!(out.len(), n, "circular_shift: output length mismatch");
    if n == 0 {
        return;
    }
    let s = k.rem_euclid(n as isize) as usize;
    out[..n - s].copy_from_slice(&v[s..]);
    out[n - s..].copy_from_slice(&v[..s]);
}

/// Applies [`circular_shift`] to every row.
pub fn circular_shift_rows(m: &Matrix, k: isize) -> Matrix {
    let mut out = Matrix::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        circular_shift_into(m.row(r), k, out.row_mut(r));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative at pre-activation `x`. The relu derivative at 0 is 0.
    #[inline]
    pub fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn apply_slice(self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.apply(v)).collect()
    }

    pub fn grad_slice(self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.grad(v)).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(format!("unknown activation '{other}'")),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean cross-entropy of `logits` (batch × classes) against integer targets,
/// with the gradient `(softmax − onehot) / batch`.
pub fn softmax_cross_entropy(logits: &Matrix, targets: &[usize]) -> Result<(f64, Matrix)> {
    let (batch, classes) = logits.shape();
    if targets.len() != batch {
        return Err(Error::Shape(format!(
            "softmax_cross_entropy: {} targets for a batch of {batch}",
            targets.len()
        )));
    }
    let mut grad = Matrix::zeros(batch, classes);
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t >= classes {
            return Err(Error::Target { target: t, classes });
        }
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[t];
        let g = grad.row_mut(r);
        for (gj, &x) in g.iter_mut().zip(row) {
            *gj = (x - lse).exp();
        }
        g[t] -= 1.0;
    }
    let inv = 1.0 / batch as f64;
    grad.scale(inv);
    Ok((loss * inv, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn assert_close_rel(a: &Matrix, b: &Matrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            let scale = x.abs().max(y.abs()).max(1.0);
            assert!((x - y).abs() <= tol * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn matmul_small_cases() {
        let id = Matrix::identity(2);
        let v = Matrix::from_rows(&[vec![3.0], vec![4.0]]);
        assert_eq!(matmul(&id, &v), v);
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Matrix::from_rows(&[vec![5.0], vec![6.0]]);
        assert_eq!(matmul(&a, &b).as_slice(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&mut rng, 7, 5);
        let b = random(&mut rng, 5, 3);
        assert_close_rel(&matmul(&a, &b), &naive(&a, &b), 1e-12);
    }

    #[test]
    fn transposed_products_agree_with_plain_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(&mut rng, 9, 13);
        let w = random(&mut rng, 6, 13);
        assert_close_rel(&matmul_nt(&a, &w), &naive(&a, &w.transpose()), 1e-12);
        let g = random(&mut rng, 9, 6);
        let mut acc = Matrix::zeros(6, 13);
        matmul_tn_acc(&g, &a, &mut acc);
        assert_close_rel(&acc, &naive(&g.transpose(), &a), 1e-12);
    }

    #[test]
    fn every_product_layout_accumulates_in_order() {
        // Narrow and wide operands take different loops; all must add onto C.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (rows, left, right) in [(50, 40, 3), (50, 3, 40), (50, 40, 40), (7, 2, 2)] {
            let g = random(&mut rng, rows, left);
            let x = random(&mut rng, rows, right);
            let start = random(&mut rng, left, right);
            let mut acc = start.clone();
            matmul_tn_acc(&g, &x, &mut acc);
            let mut want = naive(&g.transpose(), &x);
            want.add_assign(&start);
            assert_close_rel(&acc, &want, 1e-12);
            let w = random(&mut rng, right, left);
            assert_close_rel(&matmul_nt(&g, &w), &naive(&g, &w.transpose()), 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "matmul")]
    fn matmul_dimension_mismatch_panics() {
        matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3));
    }

    #[test]
    fn matmul_nt_rows_are_independent_of_batch() {
        // Stacked evaluation must equal row-by-row evaluation bit for bit.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, 40, 37);
        let w = random(&mut rng, 50, 37);
        let full = matmul_nt(&x, &w);
        for r in 0..x.rows() {
            let single = matmul_nt(&x.gather_rows(&[r]), &w);
            assert_eq!(single.row(0), full.row(r));
        }
    }

    #[test]
    fn circular_shift_examples() {
        let v = [1.0, 2.0, 3.0];
        assert_eq!(circular_shift(&v, 1), vec![2.0, 3.0, 1.0]);
        assert_eq!(circular_shift(&v, 0), v.to_vec());
        assert_eq!(circular_shift(&v, 3), v.to_vec());
        assert_eq!(circular_shift(&v, -1), vec![3.0, 1.0, 2.0]);
    }

    #[test]
    fn shift_matches_permutation_matrix() {
        // Row i of the shift matrix has its single 1 in column i+1 (mod n).
        let n = 5;
        let p = Matrix::from_fn(n, n, |i, j| if j == (i + 1) % n { 1.0 } else { 0.0 });
        let v = Matrix::from_vec(n, 1, vec![0.5, -1.0, 2.0, 3.5, 7.0]);
        assert_eq!(matmul(&p, &v).as_slice(), circular_shift(v.as_slice(), 1).as_slice());
    }

    #[test]
    fn activation_examples() {
        assert_eq!(Activation::Relu.apply_slice(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Relu.grad_slice(&[-1.0, 2.0]), vec![0.0, 1.0]);
        assert_eq!(Activation::Relu.grad(0.0), 0.0);
        assert_eq!(Activation::Sigmoid.grad(0.0), 0.25);
        assert_eq!(Activation::Identity.grad_slice(&[5.0, -5.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let (loss, _) = softmax_cross_entropy(&Matrix::zeros(1, 8), &[3]).unwrap();
        assert!((loss - 8f64.ln()).abs() < 1e-12);
        assert!((loss - 2.0794).abs() < 1e-4);
    }

    #[test]
    fn cross_entropy_is_stable_for_huge_logits() {
        let logits = Matrix::from_rows(&[vec![1000.0, 0.0]]);
        let (loss, grad) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-12);
        assert!(grad.is_finite());
    }

    #[test]
    fn cross_entropy_rejects_bad_target() {
        let err = softmax_cross_entropy(&Matrix::zeros(1, 3), &[3]).unwrap_err();
        assert!(matches!(err, Error::Target { target: 3, classes: 3 }));
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        // Oracle: -log(exp(x_t) / sum exp(x_j)) evaluated directly on moderate logits.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logits = random(&mut rng, 4, 5);
        let targets = [0, 4, 2, 2];
        let mut want = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = logits.row(r);
            let z: f64 = row.iter().map(|x| x.exp()).sum();
            want += -(row[t].exp() / z).ln();
        }
        want /= 4.0;
        let (loss, _) = softmax_cross_entropy(&logits, &targets).unwrap();
        assert!((loss - want).abs() < 1e-10);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits = random(&mut rng, 3, 6);
        let targets = [1, 5, 0];
        let (_, grad) = softmax_cross_entropy(&logits, &targets).unwrap();
        let eps = 1e-5;
        for i in 0..logits.len() {
            let mut p = logits.clone();
            p.as_mut_slice()[i] += eps;
            let mut m = logits.clone();
            m.as_mut_slice()[i] -= eps;
            let lp = softmax_cross_entropy(&p, &targets).unwrap().0;
            let lm = softmax_cross_entropy(&m, &targets).unwrap().0;
            let fd = (lp - lm) / (2.0 * eps);
            assert!((fd - grad.as_slice()[i]).abs() < 1e-7, "entry {i}");
        }
    }

    proptest! {
        #[test]
        fn shift_inverse_and_norm(v in prop::collection::vec(-1e3f64..1e3, 1..64), k in -200isize..200) {
            let s = circular_shift(&v, k);
            prop_assert_eq!(circular_shift(&s, -k), v.clone());
            // Summing sorted squares makes the norm independent of element order,
            // so a permutation must reproduce it exactly.
            let sorted_norm = |x: &[f64]| {
                let mut sq: Vec<f64> = x.iter().map(|e| e * e).collect();
                sq.sort_by(f64::total_cmp);
                sq.iter().sum::<f64>().sqrt()
            };
            prop_assert_eq!(sorted_norm(&s), sorted_norm(&v));
        }

        #[test]
        fn matmul_matches_naive_up_to_64(m in 1usize..64, k in 1usize..64, n in 1usize..64, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(&mut rng, m, k);
            let b = random(&mut rng, k, n);
            let got = matmul(&a, &b);
            let want = naive(&a, &b);
            for (x, y) in got.as_slice().iter().zip(want.as_slice()) {
                let scale = y.abs().max(1.0);
                prop_assert!((x - y).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn activation_grad_matches_central_difference(x in -6.0f64..6.0) {
            prop_assume!(x.abs() > 1e-3);
            let h = 1e-6;
            for act in [Activation::Relu, Activation::Sigmoid, Activation::Tanh, Activation::Identity] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                prop_assert!((fd - act.grad(x)).abs() < 1e-6, "{:?} at {}", act, x);
            }
        }
    }
}
