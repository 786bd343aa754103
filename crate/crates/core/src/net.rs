//! Two-layer embedding branches with exact gradients, and Adam.
//!
//! A branch maps an input vector to the shared embedding space:
//!
//! ```text
//! h = relu(W1ᵀ x + b1)      (hidden, 512 wide)
//! z = W2ᵀ h + b2            (256 wide)
//! e = z / ‖z‖
//! ```
//!
//! The output is L2-normalized, so cosine distances between branch outputs
//! equal half their squared Euclidean distances. Batches are evaluated as
//! row-stacked matrices; single-vector calls are batches of one.

use crate::error::{Error, Result};
use crate::linalg::{gemm, norm, Mat, Op};
use crate::rng::Rng;

pub const HIDDEN_WIDTH: usize = 512;
pub const OUTPUT_WIDTH: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpBranch {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

/// Gradients shaped like the parameters of the branch they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

/// Intermediate values of a batched forward pass, kept for backward.
#[derive(Debug, Clone)]
pub struct BatchForward {
    input: Mat,
    hidden: Mat,
    raw: Mat,
    norms: Vec<f64>,
    output: Mat,
}

impl BatchForward {
    /// Unit-norm embeddings, one row per input row.
    pub fn output(&self) -> &Mat {
        &self.output
    }

    pub fn into_output(self) -> Mat {
        self.output
    }
}

fn xavier(rows: usize, cols: usize, rng: &mut Rng) -> Mat {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform_in(-limit, limit)).collect();
    Mat::from_vec(rows, cols, data).expect("sized")
}

impl MlpBranch {
    /// Branch with the production widths (512 hidden, 256 output).
    pub fn new(d_in: usize, rng: &mut Rng) -> Self {
        Self::with_shape(d_in, HIDDEN_WIDTH, OUTPUT_WIDTH, rng)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn with_shape(d_in: usize, hidden: usize, out: usize, rng: &mut Rng) -> Self {
        let w1 = xavier(d_in, hidden, rng);
        let w2 = xavier(hidden, out, rng);
        MlpBranch {
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; out],
        }
    }

    pub fn from_parts(w1: Mat, b1: Vec<f64>, w2: Mat, b2: Vec<f64>) -> Result<Self> {
        if b1.len() != w1.cols() || w2.rows() != w1.cols() || b2.len() != w2.cols() {
            return Err(Error::Shape(format!(
                "inconsistent branch: W1 {}x{}, b1 {}, W2 {}x{}, b2 {}",
                w1.rows(),
                w1.cols(),
                b1.len(),
                w2.rows(),
                w2.cols(),
                b2.len()
            )));
        }
        Ok(MlpBranch { w1, b1, w2, b2 })
    }

    pub fn d_in(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn n_params(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len() + self.w2.as_slice().len() + self.b2.len()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().chain(&self.b2).all(|v| v.is_finite())
    }

    fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x = Mat::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&x)?.into_output().into_vec())
    }

    pub fn forward_batch(&self, x: &Mat) -> Result<BatchForward> {
        if x.cols() != self.d_in() {
            return Err(Error::Shape(format!(
                "branch expects inputs of dimension {}, got {}",
                self.d_in(),
                x.cols()
            )));
        }
        let m = x.rows();
        let mut hidden = Mat::zeros(m, self.hidden());
        for r in 0..m {
            hidden.row_mut(r).copy_from_slice(&self.b1);
        }
        gemm(1.0, x, Op::N, &self.w1, Op::N, 1.0, &mut hidden)?;
        hidden.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));

        let mut raw = Mat::zeros(m, self.out_dim());
        for r in 0..m {
            raw.row_mut(r).copy_from_slice(&self.b2);
        }
        gemm(1.0, &hidden, Op::N, &self.w2, Op::N, 1.0, &mut raw)?;

        let mut output = raw.clone();
        let mut norms = Vec::with_capacity(m);
        for r in 0..m {
            let n = norm(raw.row(r));
            if n == 0.0 || !n.is_finite() {
                return Err(Error::Domain(format!(
                    "branch output for row {r} has norm {n}, cannot normalize"
                )));
            }
            output.row_mut(r).iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        Ok(BatchForward {
            input: x.clone(),
            hidden,
            raw,
            norms,
            output,
        })
    }

    /// Embeds every row of `x`.
    pub fn embed_rows(&self, x: &Mat) -> Result<Mat> {
        Ok(self.forward_batch(x)?.into_output())
    }

    /// Gradient of `upstream · forward(x)` with respect to the parameters
    /// and to `x`.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(GradientSet, Vec<f64>)> {
        let xm = Mat::from_vec(1, x.len(), x.to_vec())?;
        let fwd = self.forward_batch(&xm)?;
        let up = Mat::from_vec(1, upstream.len(), upstream.to_vec())?;
        let mut grads = GradientSet::zeros_like(self);
        let input_grad = self
            .backward_batch(&fwd, &up, &mut grads, true)?
            .expect("input gradient requested");
        Ok((grads, input_grad.into_vec()))
    }

    /// Accumulates `Σ_rows upstream_r · output_r` gradients into `grads`.
    /// Returns the input gradient rows when `input_grad` is set.
    pub fn backward_batch(
        &self,
        fwd: &BatchForward,
        upstream: &Mat,
        grads: &mut GradientSet,
        input_grad: bool,
    ) -> Result<Option<Mat>> {
        let m = fwd.output.rows();
        if upstream.rows() != m || upstream.cols() != self.out_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                upstream.rows(),
                upstream.cols(),
                m,
                self.out_dim()
            )));
        }
        grads.check_shape(self)?;
        debug_assert_eq!(fwd.raw.rows(), m);

        // through the normalization: dz = (g - e (e·g)) / ‖z‖
        let mut dz = Mat::zeros(m, self.out_dim());
        for r in 0..m {
            let e = fwd.output.row(r);
            let g = upstream.row(r);
            let eg: f64 = e.iter().zip(g).map(|(a, b)| a * b).sum();
            let inv = 1.0 / fwd.norms[r];
            for ((d, &gi), &ei) in dz.row_mut(r).iter_mut().zip(g).zip(e) {
                *d = (gi - ei * eg) * inv;
            }
            for (acc, d) in grads.b2.iter_mut().zip(dz.row(r)) {
                *acc += d;
            }
        }
        gemm(1.0, &fwd.hidden, Op::T, &dz, Op::N, 1.0, &mut grads.w2)?;

        let mut dh = Mat::zeros(m, self.hidden());
        gemm(1.0, &dz, Op::N, &self.w2, Op::T, 0.0, &mut dh)?;
        for (d, &h) in dh.as_mut_slice().iter_mut().zip(fwd.hidden.as_slice()) {
            if h <= 0.0 {
                *d = 0.0;
            }
        }
        for r in 0..m {
            for (acc, d) in grads.b1.iter_mut().zip(dh.row(r)) {
                *acc += d;
            }
        }
        gemm(1.0, &fwd.input, Op::T, &dh, Op::N, 1.0, &mut grads.w1)?;

        if !input_grad {
            return Ok(None);
        }
        let mut dx = Mat::zeros(m, self.d_in());
        gemm(1.0, &dh, Op::N, &self.w1, Op::T, 0.0, &mut dx)?;
        Ok(Some(dx))
    }
}

impl GradientSet {
    pub fn zeros_like(branch: &MlpBranch) -> Self {
        GradientSet {
            w1: Mat::zeros(branch.d_in(), branch.hidden()),
            b1: vec![0.0; branch.hidden()],
            w2: Mat::zeros(branch.hidden(), branch.out_dim()),
            b2: vec![0.0; branch.out_dim()],
        }
    }

    fn check_shape(&self, branch: &MlpBranch) -> Result<()> {
        let ok = self.w1.rows() == branch.d_in()
            && self.w1.cols() == branch.hidden()
            && self.b1.len() == branch.hidden()
            && self.w2.rows() == branch.hidden()
            && self.w2.cols() == branch.out_dim()
            && self.b2.len() == branch.out_dim();
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("gradient set does not match branch".into()))
        }
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2]
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: GradientSet,
    pub v: GradientSet,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(branch: &MlpBranch) -> Self {
        AdamState {
            m: GradientSet::zeros_like(branch),
            v: GradientSet::zeros_like(branch),
            t: 0,
            hyper: AdamHyper::default(),
        }
    }
}

/// One Adam update over flat slices with L2 weight decay folded into the
/// gradient. `t` is the step number after incrementing (starts at 1).
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    hyper: &AdamHyper,
    lr: f64,
    weight_decay: f64,
) {
    let bc1 = 1.0 - hyper.beta1.powi(t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i] + weight_decay * params[i];
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
}

pub fn adam_step(
    branch: &mut MlpBranch,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    grads.check_shape(branch)?;
    state.m.check_shape(branch)?;
    state.v.check_shape(branch)?;
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    state.t += 1;
    let t = state.t;
    let hyper = state.hyper;
    let params = branch.params_mut();
    let g = grads.slices();
    let m = state.m.slices_mut();
    let v = state.v.slices_mut();
    for (((p, g), m), v) in params.into_iter().zip(g).zip(m).zip(v) {
        adam_update(p, g, m, v, t, &hyper, lr, weight_decay);
    }
    Ok(())
}
