//! Wall-clock cost of one training step as a function of hidden size.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{loss_and_grad, AnyModel, ExperimentConfig, ModelKind, TaskIo};
use crate::error::{Error, Result};
use crate::model::{SeqInput, SequenceModel};
use crate::optim::Optimizer;
use crate::tasks::{gen_memcopy, TaskBatch, Targets, MEMCOPY_CLASSES, MEMCOPY_LEN, MEMCOPY_VOCAB};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchInput {
    /// `d_in` uniform channels per step, one regression target at the end.
    Dense { d_in: usize },
    /// Copy-task tokens with per-step targets; `steps` must exceed 20.
    MemCopy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub model: ModelKind,
    pub d_h: Vec<usize>,
    pub steps: usize,
    pub batch: usize,
    pub input: BenchInput,
    pub f_r: Vec<usize>,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(model: ModelKind, d_h: Vec<usize>, steps: usize) -> Self {
        BenchConfig {
            model,
            d_h,
            steps,
            batch: 1,
            input: BenchInput::Dense { d_in: 2 },
            f_r: vec![8],
            repeats: 5,
            warmup: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats < 3 {
            return Err(Error::config(format!("benchmark needs at least 3 repeats, got {}", self.repeats)));
        }
        if self.d_h.is_empty() || self.d_h.contains(&0) {
            return Err(Error::config("hidden sizes must be positive"));
        }
        if self.steps == 0 || self.batch == 0 {
            return Err(Error::config("sequence length and batch must be positive"));
        }
        match self.input {
            BenchInput::Dense { d_in: 0 } => Err(Error::config("input width must be positive")),
            BenchInput::MemCopy if self.steps <= 2 * MEMCOPY_LEN => {
                Err(Error::config(format!("copy-shaped input needs T > {}", 2 * MEMCOPY_LEN)))
            }
            _ => Ok(()),
        }
    }

    fn batch_data(&self) -> TaskBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.input {
            BenchInput::MemCopy => gen_memcopy(self.steps - 2 * MEMCOPY_LEN, self.batch, &mut rng),
            BenchInput::Dense { d_in } => {
                let xs = (0..self.steps).map(|_| Matrix::from_fn(self.batch, d_in, |_, _| rng.random::<f64>())).collect();
                let mut loss_mask = vec![false; self.steps];
                loss_mask[self.steps - 1] = true;
                TaskBatch {
                    inputs: SeqInput::Dense(xs),
                    targets: Targets::FinalReal((0..self.batch).map(|_| rng.random::<f64>()).collect()),
                    loss_mask,
                }
            }
        }
    }

    fn io(&self) -> TaskIo {
        match self.input {
            BenchInput::Dense { d_in } => TaskIo { vocab: None, d_in, d_o: 1 },
            BenchInput::MemCopy => TaskIo { vocab: Some(MEMCOPY_VOCAB), d_in: 1, d_o: MEMCOPY_CLASSES },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub d_h: usize,
    pub params: usize,
    /// Median over repeats of one forward + backward + update step.
    pub seconds: f64,
    pub min_seconds: f64,
}

fn time_steps<M: SequenceModel>(mut model: M, batch: &TaskBatch, cfg: &BenchConfig) -> Result<(f64, f64)> {
    let mut opt = Optimizer::rmsprop(1e-3, 0.9);
    let mut once = |model: &mut M| -> Result<f64> {
        let t0 = Instant::now();
        let (_, g) = loss_and_grad(model, batch, 0)?;
        opt.step(model, &g)?;
        Ok(t0.elapsed().as_secs_f64())
    };
    for _ in 0..cfg.warmup {
        once(&mut model)?;
    }
    let mut times = (0..cfg.repeats).map(|_| once(&mut model)).collect::<Result<Vec<_>>>()?;
    times.sort_by(f64::total_cmp);
    Ok((median(&times), times[0]))
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn runtime_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let batch = cfg.batch_data();
    let mut rows = Vec::with_capacity(cfg.d_h.len());
    for &d_h in &cfg.d_h {
        let mut ec = ExperimentConfig::preset("memcopy")?;
        ec.model = cfg.model;
        ec.d_h = Some(d_h);
        ec.seed = cfg.seed;
        if cfg.model == ModelKind::Srnn {
            ec.f_r = Some(cfg.f_r.clone());
        }
        let model = AnyModel::build(&ec, cfg.io())?;
        let params = model.param_count();
        let (seconds, min_seconds) = match model {
            AnyModel::Srnn(m) => time_steps(m, &batch, cfg)?,
            AnyModel::Rnn(m) => time_steps(m, &batch, cfg)?,
        };
        rows.push(BenchRow { d_h, params, seconds, min_seconds });
    }
    Ok(rows)
}

pub fn write_csv(mut w: impl Write, model: ModelKind, rows: &[BenchRow]) -> std::io::Result<()> {
    writeln!(w, "model,d_h,params,seconds_per_step,min_seconds_per_step")?;
    for r in rows {
        writeln!(w, "{},{},{},{:?},{:?}", model.name(), r.d_h, r.params, r.seconds, r.min_seconds)?;
    }
    Ok(())
}

/// Least-squares slope of `ln seconds` against `ln d_h`.
pub fn loglog_slope(rows: &[BenchRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.d_h as f64).ln(), r.seconds.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
