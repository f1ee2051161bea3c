//! Sequence tasks: the copy-memory and adding generators, pixel-sequence
//! classification built from IDX image files, and random-label subsets.
//!
//! Generators are pure functions of their arguments and the RNG state passed
//! in; callers own the seeding.

mod idx;
mod pixels;

pub use idx::{load_idx, save_idx, ImageDataset};
pub use pixels::{holdout_split, pixel_permutation, shuffle_labels_subset, PixelSequences, PIXEL_CLASSES};

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::SeqInput;
use crate::tensor::{softmax_cross_entropy, Matrix};

/// Number of data symbols in the copy task alphabet.
pub const MEMCOPY_SYMBOLS: usize = 8;
/// Input token id of the blank symbol.
pub const MEMCOPY_BLANK: usize = 8;
/// Input token id of the delimiter symbol.
pub const MEMCOPY_DELIM: usize = 9;
/// Input vocabulary: 8 data symbols, blank, delimiter.
pub const MEMCOPY_VOCAB: usize = 10;
/// Output classes: 8 data symbols plus blank. The delimiter is never a target.
pub const MEMCOPY_CLASSES: usize = 9;
/// Number of symbols to remember.
pub const MEMCOPY_LEN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    PerStepCe,
    FinalCe,
    FinalMse,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// `T` rows of `batch` class ids.
    PerStep(Vec<Vec<usize>>),
    FinalClass(Vec<usize>),
    FinalReal(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskBatch {
    pub inputs: SeqInput,
    pub targets: Targets,
    /// Steps whose output contributes to the loss.
    pub loss_mask: Vec<bool>,
}

impl TaskBatch {
    pub fn loss_kind(&self) -> LossKind {
        match self.targets {
            Targets::PerStep(_) => LossKind::PerStepCe,
            Targets::FinalClass(_) => LossKind::FinalCe,
            Targets::FinalReal(_) => LossKind::FinalMse,
        }
    }

    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn batch(&self) -> usize {
        self.inputs.batch()
    }

    /// Loss averaged over the batch (and over masked steps for per-step
    /// targets) together with `∂L/∂o_t` for every step.
    pub fn loss(&self, outputs: &[Matrix]) -> Result<(f64, Vec<Option<Matrix>>)> {
        let steps = self.steps();
        if outputs.len() != steps || self.loss_mask.len() != steps {
            return Err(Error::shape(format!("{} outputs / {} mask entries for {steps} steps", outputs.len(), self.loss_mask.len())));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; steps];
        let last = steps - 1;
        let loss = match &self.targets {
            Targets::PerStep(targets) => {
                let n = self.loss_mask.iter().filter(|&&m| m).count();
                if n == 0 {
                    return Err(Error::shape("loss mask has no active step"));
                }
                let mut total = 0.0;
                for t in (0..steps).filter(|&t| self.loss_mask[t]) {
                    let (l, mut g) = softmax_cross_entropy(&outputs[t], &targets[t])?;
                    g.scale(1.0 / n as f64);
                    total += l;
                    grads[t] = Some(g);
                }
                total / n as f64
            }
            Targets::FinalClass(targets) => {
                let (l, g) = softmax_cross_entropy(&outputs[last], targets)?;
                grads[last] = Some(g);
                l
            }
            Targets::FinalReal(targets) => {
                let o = &outputs[last];
                if o.cols() != 1 || o.rows() != targets.len() {
                    return Err(Error::shape("regression output must be batch × 1"));
                }
                let b = targets.len() as f64;
                let mut g = Matrix::zeros(o.rows(), 1);
                let mut total = 0.0;
                for (i, &y) in targets.iter().enumerate() {
                    let e = o.get(i, 0) - y;
                    total += e * e;
                    g.set(i, 0, 2.0 * e / b);
                }
                grads[last] = Some(g);
                total / b
            }
        };
        Ok((loss, grads))
    }

    /// Samples `start..end` of every step.
    pub fn slice(&self, start: usize, end: usize) -> TaskBatch {
        assert!(start < end && end <= self.batch(), "sample range {start}..{end} out of bounds");
        let rows: Vec<usize> = (start..end).collect();
        let inputs = match &self.inputs {
            SeqInput::Dense(x) => SeqInput::Dense(x.iter().map(|m| m.gather_rows(&rows)).collect()),
            SeqInput::Tokens(x) => SeqInput::Tokens(x.iter().map(|r| r[start..end].to_vec()).collect()),
        };
        let targets = match &self.targets {
            Targets::PerStep(y) => Targets::PerStep(y.iter().map(|r| r[start..end].to_vec()).collect()),
            Targets::FinalClass(y) => Targets::FinalClass(y[start..end].to_vec()),
            Targets::FinalReal(y) => Targets::FinalReal(y[start..end].to_vec()),
        };
        TaskBatch { inputs, targets, loss_mask: self.loss_mask.clone() }
    }

    /// Number of correct final-step predictions (classification only).
    pub fn correct(&self, outputs: &[Matrix]) -> Option<usize> {
        let Targets::FinalClass(targets) = &self.targets else { return None };
        let o = outputs.last()?;
        Some(targets.iter().enumerate().filter(|&(r, &y)| argmax(o.row(r)) == y).count())
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Copy-memory batch with lag `lag` (sequence length `lag + 20`).
///
/// Input: 10 data symbols, `lag - 1` blanks, the delimiter, 10 blanks.
/// Target: `lag + 10` blanks, then the 10 data symbols.
pub fn gen_memcopy(lag: usize, batch: usize, rng: &mut impl Rng) -> TaskBatch {
    assert!(lag >= 1, "copy task needs lag >= 1");
    let len = lag + 2 * MEMCOPY_LEN;
    let mut inputs = vec![vec![MEMCOPY_BLANK; batch]; len];
    let mut targets = vec![vec![MEMCOPY_BLANK; batch]; len];
    for s in 0..batch {
        for i in 0..MEMCOPY_LEN {
            let sym = rng.random_range(0..MEMCOPY_SYMBOLS);
            inputs[i][s] = sym;
            targets[lag + MEMCOPY_LEN + i][s] = sym;
        }
        inputs[lag + MEMCOPY_LEN - 1][s] = MEMCOPY_DELIM;
    }
    TaskBatch { inputs: SeqInput::Tokens(inputs), targets: Targets::PerStep(targets), loss_mask: vec![true; len] }
}

/// Cross-entropy of the best memoryless predictor: blanks everywhere, then a
/// uniform guess over the 8 symbols for the last 10 steps, averaged over steps.
pub fn memcopy_baseline_ce(lag: usize) -> f64 {
    MEMCOPY_LEN as f64 * (MEMCOPY_SYMBOLS as f64).ln() / (lag + 2 * MEMCOPY_LEN) as f64
}

/// Adding-problem batch of length `len`: channel 0 ~ U(0,1), channel 1 marks
/// one position in `[0, ⌈len/2⌉)` and one in `[⌈len/2⌉, len)`. Target is the
/// sum of the two marked values.
pub fn gen_adding(len: usize, batch: usize, rng: &mut impl Rng) -> TaskBatch {
    assert!(len >= 2, "adding task needs length >= 2");
    let half = len.div_ceil(2);
    let mut xs = vec![Matrix::zeros(batch, 2); len];
    let mut targets = Vec::with_capacity(batch);
    for s in 0..batch {
        for x in xs.iter_mut() {
            x.set(s, 0, rng.random::<f64>());
        }
        let first = rng.random_range(0..half);
        let second = rng.random_range(half..len);
        xs[first].set(s, 1, 1.0);
        xs[second].set(s, 1, 1.0);
        targets.push(xs[first].get(s, 0) + xs[second].get(s, 0));
    }
    let mut loss_mask = vec![false; len];
    loss_mask[len - 1] = true;
    TaskBatch { inputs: SeqInput::Dense(xs), targets: Targets::FinalReal(targets), loss_mask }
}

/// MSE of always predicting 1 on the adding problem (the variance of a sum of
/// two uniforms, 1/6, quoted to three decimals).
pub fn adding_baseline_mse() -> f64 {
    0.167
}
