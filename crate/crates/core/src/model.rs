//! Pieces shared by the shuffling cell and the vanilla baseline: sequence
//! inputs, named parameter views, and the forward/backward contract.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// A batch of input sequences, time-major.
#[derive(Clone, Debug, PartialEq)]
pub enum SeqInput {
    /// `T` matrices of shape `batch × d_in`.
    Dense(Vec<Matrix>),
    /// `T` rows of `batch` token ids, fed through an embedding table.
    Tokens(Vec<Vec<usize>>),
}

impl SeqInput {
    pub fn len(&self) -> usize {
        match self {
            SeqInput::Dense(x) => x.len(),
            SeqInput::Tokens(x) => x.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn batch(&self) -> usize {
        match self {
            SeqInput::Dense(x) => x.first().map_or(0, Matrix::rows),
            SeqInput::Tokens(x) => x.first().map_or(0, Vec::len),
        }
    }

    /// Keeps only sample `s` of every step.
    pub fn sample(&self, s: usize) -> SeqInput {
        match self {
            SeqInput::Dense(x) => SeqInput::Dense(x.iter().map(|m| m.gather_rows(&[s])).collect()),
            SeqInput::Tokens(x) => SeqInput::Tokens(x.iter().map(|r| vec![r[s]]).collect()),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::shape("empty input sequence"));
        }
        let batch = self.batch();
        if batch == 0 {
            return Err(Error::shape("empty batch"));
        }
        let ragged = match self {
            SeqInput::Dense(x) => x.iter().any(|m| m.rows() != batch || m.cols() != x[0].cols()),
            SeqInput::Tokens(x) => x.iter().any(|r| r.len() != batch),
        };
        if ragged {
            return Err(Error::shape("inconsistent batch or width across timesteps"));
        }
        Ok(())
    }
}

/// Borrowed view of one named parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// A fixed, ordered collection of parameter tensors. Gradients use the same
/// type as the parameters they belong to.
pub trait ParamSet: Clone {
    fn views(&self) -> Vec<ParamView<'_>>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.slices_mut() {
            s.fill(0.0);
        }
        z
    }

    fn param_count(&self) -> usize {
        self.views().iter().map(|v| v.data.len()).sum()
    }

    /// Visits parameter `i` of the flattened concatenation.
    fn flat_get(&self, mut i: usize) -> f64 {
        for v in self.views() {
            if i < v.data.len() {
                return v.data[i];
            }
            i -= v.data.len();
        }
        panic!("flat parameter index out of range");
    }

    fn flat_set(&mut self, mut i: usize, value: f64) {
        for s in self.slices_mut() {
            if i < s.len() {
                s[i] = value;
                return;
            }
            i -= s.len();
        }
        panic!("flat parameter index out of range");
    }
}

/// Gradients from one backward pass, optionally with the adjoint of every
/// hidden state (`hidden_grads[t - 1]` is `∂L/∂h_t`, batch × d_h).
#[derive(Clone, Debug)]
pub struct Backward<P> {
    pub grads: P,
    pub hidden_grads: Option<Vec<Matrix>>,
}

/// Forward/backward contract shared by both recurrent models.
pub trait SequenceModel: ParamSet + Send + Sync {
    type Trace: Send + Sync;

    fn hidden_size(&self) -> usize;
    fn output_size(&self) -> usize;

    /// Runs the sequence from `h_0 = 0`, returning one `batch × d_o` output per step.
    fn forward(&self, input: &SeqInput) -> Result<(Vec<Matrix>, Self::Trace)>;

    /// Reverse-mode pass. `output_grads[t]` is `∂L/∂o_{t+1}`; `None` means zero.
    fn backward_full(
        &self,
        trace: &Self::Trace,
        output_grads: &[Option<Matrix>],
        record_hidden: bool,
    ) -> Result<Backward<Self>>;

    fn backward(&self, trace: &Self::Trace, output_grads: &[Option<Matrix>]) -> Result<Self> {
        Ok(self.backward_full(trace, output_grads, false)?.grads)
    }

    /// `h_0 ..= h_T` as stored in the trace.
    fn hidden_states<'t>(&self, trace: &'t Self::Trace) -> &'t [Matrix];

    /// Every cached pre-activation that feeds a relu, for kink detection.
    fn relu_preactivations<'t>(&self, trace: &'t Self::Trace) -> Vec<&'t Matrix>;
}

pub(crate) fn check_output_grads(grads: &[Option<Matrix>], steps: usize, batch: usize, d_o: usize) -> Result<()> {
    if grads.len() != steps {
        return Err(Error::shape(format!("{} output gradients for {steps} timesteps", grads.len())));
    }
    for g in grads.iter().flatten() {
        if g.shape() != (batch, d_o) {
            return Err(Error::shape(format!(
                "output gradient {}x{} but outputs are {batch}x{d_o}",
                g.rows(),
                g.cols()
            )));
        }
    }
    Ok(())
}
