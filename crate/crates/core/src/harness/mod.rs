//! Training loop, evaluation, metric logging and the capacity sweep.

pub mod bench;
mod config;

pub use config::{ExperimentConfig, ModelKind, OptimizerKind, TaskKind, Timing, KEYS, PRESETS};

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baseline::{self, VanillaConfig, VanillaParams};
use crate::checkpoint;
use crate::diagnostics::{derotate_states, write_states_csv};
use crate::error::{Error, Result};
use crate::model::{ParamSet, SequenceModel};
use crate::optim::{clip_to, global_grad_norm, Optimizer};
use crate::srnn::{self, SrnnConfig, SrnnParams};
use crate::tasks::{
    gen_adding, gen_memcopy, holdout_split, load_idx, shuffle_labels_subset, PixelSequences, TaskBatch,
    MEMCOPY_CLASSES, MEMCOPY_VOCAB, PIXEL_CLASSES,
};
use crate::tensor::Matrix;

/// Input/output signature a task imposes on a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskIo {
    /// `Some(vocab)` for token inputs.
    pub vocab: Option<usize>,
    pub d_in: usize,
    pub d_o: usize,
}

#[derive(Clone, Debug)]
pub enum AnyModel {
    Srnn(SrnnParams),
    Rnn(VanillaParams),
}

impl AnyModel {
    pub fn build(cfg: &ExperimentConfig, io: TaskIo) -> Result<Self> {
        let d_h = cfg.hidden_size();
        match cfg.model {
            ModelKind::Srnn => {
                let f_r = cfg.f_r_hidden();
                let mut c = match io.vocab {
                    Some(v) => SrnnConfig::tokens(v, cfg.d_e, d_h, io.d_o, &f_r),
                    None => SrnnConfig::dense(io.d_in, d_h, io.d_o, &f_r),
                };
                c.gating = cfg.gating;
                c.activation = cfg.activation();
                Ok(AnyModel::Srnn(SrnnParams::init(&c, cfg.seed)?))
            }
            ModelKind::Rnn => {
                let mut c = match io.vocab {
                    Some(v) => VanillaConfig::tokens(v, cfg.d_e, d_h, io.d_o),
                    None => VanillaConfig::dense(io.d_in, d_h, io.d_o),
                };
                c.activation = cfg.activation();
                Ok(AnyModel::Rnn(VanillaParams::init(&c, cfg.seed)?))
            }
        }
    }

    /// Loads either checkpoint kind, dispatching on the file magic.
    pub fn load(path: &Path) -> Result<Self> {
        let magic = checkpoint::peek_magic(path)?;
        if &magic == srnn::CHECKPOINT_MAGIC {
            Ok(AnyModel::Srnn(SrnnParams::load(path)?))
        } else if &magic == baseline::CHECKPOINT_MAGIC {
            Ok(AnyModel::Rnn(VanillaParams::load(path)?))
        } else {
            Err(Error::Format { path: path.to_path_buf(), msg: "not a model checkpoint".into() })
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            AnyModel::Srnn(m) => m.save(path),
            AnyModel::Rnn(m) => m.save(path),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Srnn(_) => ModelKind::Srnn,
            AnyModel::Rnn(_) => ModelKind::Rnn,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            AnyModel::Srnn(m) => m.param_count(),
            AnyModel::Rnn(m) => m.param_count(),
        }
    }

    pub fn io(&self) -> TaskIo {
        match self {
            AnyModel::Srnn(m) => {
                let c = m.config();
                TaskIo { vocab: c.vocab, d_in: c.d_in, d_o: c.d_o }
            }
            AnyModel::Rnn(m) => {
                let c = m.config();
                TaskIo { vocab: c.vocab, d_in: c.d_in, d_o: c.d_o }
            }
        }
    }

    /// Fails unless the model accepts the task's inputs and produces its outputs.
    pub fn check_io(&self, io: TaskIo) -> Result<()> {
        let own = self.io();
        let inputs_ok = match (own.vocab, io.vocab) {
            (Some(a), Some(b)) => a == b,
            (None, None) => own.d_in == io.d_in,
            _ => false,
        };
        if !inputs_ok || own.d_o != io.d_o {
            return Err(Error::config(format!(
                "checkpoint takes {} and emits {} outputs; task provides {} and needs {}",
                describe_inputs(own),
                own.d_o,
                describe_inputs(io),
                io.d_o
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, set: &[TaskBatch]) -> Result<EvalResult> {
        match self {
            AnyModel::Srnn(m) => evaluate(m, set),
            AnyModel::Rnn(m) => evaluate(m, set),
        }
    }
}

fn describe_inputs(io: TaskIo) -> String {
    match io.vocab {
        Some(v) => format!("tokens over {v} symbols"),
        None => format!("{}-wide dense inputs", io.d_in),
    }
}

/// Training and evaluation data for one configuration.
#[derive(Clone, Debug)]
pub enum TaskData {
    MemCopy { lag: usize },
    Adding { len: usize },
    Pixels {
        train: PixelSequences,
        /// `None` evaluates on the training samples themselves.
        validation: Option<PixelSequences>,
        test: Option<PixelSequences>,
    },
}

impl TaskData {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        match cfg.task {
            TaskKind::MemCopy => Ok(TaskData::MemCopy { lag: cfg.t }),
            TaskKind::Adding => Ok(TaskData::Adding { len: cfg.t }),
            TaskKind::Pmnist | TaskKind::Capacity => {
                let dir = resolve_data_dir(&cfg.data_dir);
                let ds = load_split(&dir, "train")?
                    .ok_or_else(|| Error::config(format!("no train-images-idx3-ubyte[.gz] in {}", dir.display())))?;
                let crop = (cfg.crop > 0).then_some(cfg.crop);
                if cfg.task == TaskKind::Capacity {
                    let subset = shuffle_labels_subset(&ds, cfg.n, cfg.data_seed)?;
                    let train = PixelSequences::new(&subset, crop, cfg.permute_seed)?;
                    return Ok(TaskData::Pixels { train, validation: None, test: None });
                }
                let (train, val) = holdout_split(&ds, cfg.holdout, cfg.data_seed)?;
                let test = load_split(&dir, "t10k")?;
                Ok(TaskData::Pixels {
                    train: PixelSequences::new(&train, crop, cfg.permute_seed)?,
                    validation: Some(PixelSequences::new(&val, crop, cfg.permute_seed)?),
                    test: test.map(|t| PixelSequences::new(&t, crop, cfg.permute_seed)).transpose()?,
                })
            }
        }
    }

    pub fn io(&self) -> TaskIo {
        match self {
            TaskData::MemCopy { .. } => TaskIo { vocab: Some(MEMCOPY_VOCAB), d_in: 1, d_o: MEMCOPY_CLASSES },
            TaskData::Adding { .. } => TaskIo { vocab: None, d_in: 2, d_o: 1 },
            TaskData::Pixels { .. } => TaskIo { vocab: None, d_in: 1, d_o: PIXEL_CLASSES },
        }
    }

    fn generate(&self, batch: usize, rng: &mut ChaCha8Rng) -> TaskBatch {
        match *self {
            TaskData::MemCopy { lag } => gen_memcopy(lag, batch, rng),
            TaskData::Adding { len } => gen_adding(len, batch, rng),
            TaskData::Pixels { .. } => unreachable!("pixel tasks are not generated"),
        }
    }

    /// The fixed evaluation split: a seeded generated set, the validation
    /// holdout, or the training samples themselves.
    pub fn eval_set(&self, cfg: &ExperimentConfig) -> Vec<TaskBatch> {
        match self {
            TaskData::Pixels { train, validation, .. } => chunks(validation.as_ref().unwrap_or(train), EVAL_CHUNK),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.data_seed ^ EVAL_SEED_SALT);
                let mut left = cfg.eval_samples;
                let mut out = Vec::new();
                while left > 0 {
                    let n = left.min(EVAL_CHUNK);
                    out.push(self.generate(n, &mut rng));
                    left -= n;
                }
                out
            }
        }
    }

    pub fn test_set(&self) -> Option<Vec<TaskBatch>> {
        match self {
            TaskData::Pixels { test: Some(t), .. } => Some(chunks(t, EVAL_CHUNK)),
            _ => None,
        }
    }

    /// One sample for inspection: the first generated sample under
    /// `data_seed`, or the first evaluation sample of a pixel task.
    pub fn single_sample(&self, cfg: &ExperimentConfig) -> TaskBatch {
        match self {
            TaskData::Pixels { train, validation, .. } => validation.as_ref().unwrap_or(train).batch(&[0]),
            _ => self.generate(1, &mut ChaCha8Rng::seed_from_u64(cfg.data_seed)),
        }
    }
}

const EVAL_CHUNK: usize = 250;
const EVAL_SEED_SALT: u64 = 0x5eed_e7a1;

fn chunks(p: &PixelSequences, size: usize) -> Vec<TaskBatch> {
    let idx: Vec<usize> = (0..p.len()).collect();
    idx.chunks(size).map(|c| p.batch(c)).collect()
}

/// Looks for `path` as given, then relative to the workspace root so the
/// bundled subset is found from any crate directory.
pub fn resolve_data_dir(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    let from_root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(path);
    if from_root.exists() {
        from_root
    } else {
        path.to_path_buf()
    }
}

fn load_split(dir: &Path, prefix: &str) -> Result<Option<crate::tasks::ImageDataset>> {
    let find = |stem: &str| {
        [format!("{prefix}-{stem}"), format!("{prefix}-{stem}.gz")].into_iter().map(|n| dir.join(n)).find(|p| p.exists())
    };
    match (find("images-idx3-ubyte"), find("labels-idx1-ubyte")) {
        (Some(i), Some(l)) => load_idx(&i, &l).map(Some),
        _ => Ok(None),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    /// Mean loss per sample (CE or MSE, as the task defines it).
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub samples: usize,
}

impl EvalResult {
    /// Accuracy for classification, otherwise the loss.
    pub fn metric(&self) -> f64 {
        self.accuracy.unwrap_or(self.loss)
    }
}

/// Deterministic metric over a fixed split.
pub fn evaluate<M: SequenceModel>(model: &M, set: &[TaskBatch]) -> Result<EvalResult> {
    let (mut loss, mut correct, mut samples, mut classify) = (0.0, 0usize, 0usize, true);
    for b in set {
        let (out, _) = model.forward(&b.inputs)?;
        let n = b.batch();
        loss += b.loss(&out)?.0 * n as f64;
        match b.correct(&out) {
            Some(c) => correct += c,
            None => classify = false,
        }
        samples += n;
    }
    if samples == 0 {
        return Err(Error::config("empty evaluation set"));
    }
    Ok(EvalResult {
        loss: loss / samples as f64,
        accuracy: classify.then(|| correct as f64 / samples as f64),
        samples,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRecord {
    pub step: u64,
    pub samples_seen: u64,
    pub train_loss: f64,
    pub eval_metric: f64,
    pub grad_norm: f64,
    pub wallclock_ms: u64,
}

impl MetricRecord {
    pub const CSV_HEADER: &'static str = "step,samples_seen,train_loss,eval_metric,grad_norm,wallclock_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:?},{:?},{:?},{}",
            self.step, self.samples_seen, self.train_loss, self.eval_metric, self.grad_norm, self.wallclock_ms
        )
    }
}

/// Epoch with the lowest validation loss, for dataset tasks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BestEval {
    pub step: u64,
    pub eval_loss: f64,
    pub eval_metric: f64,
    pub test_metric: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<MetricRecord>,
    pub best: Option<BestEval>,
    pub model: AnyModel,
    pub out_dir: PathBuf,
}

impl TrainOutcome {
    pub fn final_record(&self) -> &MetricRecord {
        self.records.last().expect("at least the initial record")
    }
}

/// Runs a configuration end to end, writing `metrics.csv`, `config.txt`,
/// `model.ckpt` and `summary.txt` into `cfg.out`.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let task = TaskData::prepare(cfg)?;
    let model = AnyModel::build(cfg, task.io())?;
    train_with(cfg, &task, model, &mut |_| {})
}

/// As [`train`], starting from a prepared task and model; `observe` sees
/// every record as it is logged.
pub fn train_with(
    cfg: &ExperimentConfig,
    task: &TaskData,
    model: AnyModel,
    observe: &mut (dyn FnMut(&MetricRecord) + Send),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.check_io(task.io())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::config(format!("cannot start {} worker threads: {e}", cfg.threads)))?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.txt"), cfg.snapshot())?;
    let (records, best, model) = pool.install(|| match model {
        AnyModel::Srnn(m) => run(m, cfg, task, observe).map(|(r, b, m)| (r, b, AnyModel::Srnn(m))),
        AnyModel::Rnn(m) => run(m, cfg, task, observe).map(|(r, b, m)| (r, b, AnyModel::Rnn(m))),
    })?;
    model.save(&cfg.out.join("model.ckpt"))?;
    let last = records.last().expect("initial record");
    let mut summary = format!(
        "model = {}\nparams = {}\nsteps = {}\nsamples_seen = {}\nfinal_train_loss = {:?}\nfinal_eval_metric = {:?}\n",
        model.kind().name(),
        model.param_count(),
        last.step,
        last.samples_seen,
        last.train_loss,
        last.eval_metric
    );
    if let Some(b) = best {
        summary += &format!("best_step = {}\nbest_eval_loss = {:?}\nbest_eval_metric = {:?}\n", b.step, b.eval_loss, b.eval_metric);
        if let Some(t) = b.test_metric {
            summary += &format!("test_metric_at_best = {t:?}\n");
        }
    }
    fs::write(cfg.out.join("summary.txt"), summary)?;
    Ok(TrainOutcome { records, best, model, out_dir: cfg.out.clone() })
}

/// Yields training batches: fresh draws for generated tasks, per-epoch
/// shuffles for datasets.
struct BatchStream<'a> {
    task: &'a TaskData,
    batch: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl<'a> BatchStream<'a> {
    fn new(task: &'a TaskData, batch: usize, seed: u64) -> Self {
        let order = match task {
            TaskData::Pixels { train, .. } => (0..train.len()).collect(),
            _ => Vec::new(),
        };
        let mut s = BatchStream { task, batch, rng: ChaCha8Rng::seed_from_u64(seed), order, pos: 0 };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    fn steps_per_epoch(&self) -> Option<usize> {
        (!self.order.is_empty()).then(|| self.order.len().div_ceil(self.batch))
    }

    /// The next batch and whether it closes an epoch.
    fn next(&mut self) -> (TaskBatch, bool) {
        match self.task {
            TaskData::Pixels { train, .. } => {
                if self.pos >= self.order.len() {
                    self.reshuffle();
                }
                let end = (self.pos + self.batch).min(self.order.len());
                let b = train.batch(&self.order[self.pos..end]);
                self.pos = end;
                (b, end == self.order.len())
            }
            t => (t.generate(self.batch, &mut self.rng), false),
        }
    }
}

/// Loss and gradient of one minibatch, accumulated over micro-batches.
pub(crate) fn loss_and_grad<M: SequenceModel>(model: &M, batch: &TaskBatch, micro: usize) -> Result<(f64, M)> {
    let n = batch.batch();
    let micro = if micro == 0 { n } else { micro };
    if micro >= n {
        let (out, trace) = model.forward(&batch.inputs)?;
        let (loss, dout) = batch.loss(&out)?;
        return Ok((loss, model.backward(&trace, &dout)?));
    }
    let mut total = 0.0;
    let mut grads = model.zeros_like();
    for start in (0..n).step_by(micro) {
        let end = (start + micro).min(n);
        let part = batch.slice(start, end);
        let w = (end - start) as f64 / n as f64;
        let (out, trace) = model.forward(&part.inputs)?;
        let (loss, dout) = part.loss(&out)?;
        let g = model.backward(&trace, &dout)?;
        total += w * loss;
        for (acc, src) in grads.slices_mut().into_iter().zip(g.views()) {
            acc.iter_mut().zip(src.data).for_each(|(a, s)| *a += w * s);
        }
    }
    Ok((total, grads))
}

struct Log<'a> {
    file: BufWriter<File>,
    records: Vec<MetricRecord>,
    observe: &'a mut (dyn FnMut(&MetricRecord) + Send),
}

impl Log<'_> {
    fn emit(&mut self, rec: MetricRecord) -> Result<()> {
        writeln!(self.file, "{}", rec.csv_row())?;
        self.file.flush()?;
        (self.observe)(&rec);
        self.records.push(rec);
        Ok(())
    }
}

type RunResult<M> = Result<(Vec<MetricRecord>, Option<BestEval>, M)>;

fn run<M: SequenceModel>(
    mut model: M,
    cfg: &ExperimentConfig,
    task: &TaskData,
    observe: &mut (dyn FnMut(&MetricRecord) + Send),
) -> RunResult<M> {
    let eval_set = task.eval_set(cfg);
    let test_set = task.test_set();
    let mut stream = BatchStream::new(task, cfg.batch, cfg.data_seed);
    let total_steps = match (cfg.steps, stream.steps_per_epoch()) {
        (s, _) if s > 0 => s,
        (_, Some(per_epoch)) => cfg.epochs * per_epoch,
        _ => 0,
    };
    let cadence = cfg.eval_cadence();
    let mut optimizer = match cfg.optimizer {
        OptimizerKind::RmsProp => Optimizer::rmsprop(cfg.lr, cfg.decay),
        OptimizerKind::Adam => Optimizer::adam(cfg.lr),
    };
    let clip = (cfg.model == ModelKind::Rnn && cfg.clip > 0.0).then_some(cfg.clip);
    let timing = cfg.timing_enabled();
    let started = Instant::now();
    let elapsed = || if timing { started.elapsed().as_millis() as u64 } else { 0 };

    let mut file = BufWriter::new(File::create(cfg.out.join("metrics.csv"))?);
    writeln!(file, "{}", MetricRecord::CSV_HEADER)?;
    let mut log = Log { file, records: Vec::new(), observe };
    let mut best: Option<BestEval> = None;
    let track_best = matches!(task, TaskData::Pixels { validation: Some(_), .. });

    // The first batch provides the step-0 training loss and gradient norm.
    let (mut batch, mut epoch_end) = stream.next();
    let (mut loss, mut grads) = loss_and_grad(&model, &batch, cfg.micro_batch)?;
    let mut gnorm = global_grad_norm(&grads);
    let initial = evaluate(&model, &eval_set)?;
    log.emit(
        MetricRecord { step: 0, samples_seen: 0, train_loss: loss, eval_metric: initial.metric(), grad_norm: gnorm, wallclock_ms: elapsed() },
    )?;
    if !loss.is_finite() || !gnorm.is_finite() {
        return Err(Error::NonFinite { what: "training loss", step: 0 });
    }

    let mut samples_seen = 0u64;
    let (mut window_loss, mut window_n) = (0.0, 0usize);
    for step in 1..=total_steps as u64 {
        if step > 1 {
            (batch, epoch_end) = stream.next();
            (loss, grads) = loss_and_grad(&model, &batch, cfg.micro_batch)?;
            gnorm = global_grad_norm(&grads);
        }
        samples_seen += batch.batch() as u64;
        if !loss.is_finite() || !gnorm.is_finite() {
            log.emit(
                MetricRecord { step, samples_seen, train_loss: loss, eval_metric: f64::NAN, grad_norm: gnorm, wallclock_ms: elapsed() },
            )?;
            return Err(Error::NonFinite { what: "training loss", step: step as usize });
        }
        if let Some(c) = clip {
            clip_to(&mut grads, c);
        }
        optimizer.step(&mut model, &grads)?;
        window_loss += loss;
        window_n += 1;

        let due = match cadence {
            Some(k) => step % k as u64 == 0,
            None => epoch_end,
        };
        if due || step == total_steps as u64 {
            let ev = evaluate(&model, &eval_set)?;
            if track_best && best.is_none_or(|b| ev.loss < b.eval_loss) {
                let test_metric = test_set.as_ref().map(|t| evaluate(&model, t).map(|r| r.metric())).transpose()?;
                best = Some(BestEval { step, eval_loss: ev.loss, eval_metric: ev.metric(), test_metric });
            }
            log.emit(
                MetricRecord {
                    step,
                    samples_seen,
                    train_loss: window_loss / window_n as f64,
                    eval_metric: ev.metric(),
                    grad_norm: gnorm,
                    wallclock_ms: elapsed(),
                },
            )?;
            (window_loss, window_n) = (0.0, 0);
        }
    }
    Ok((log.records, best, model))
}

/// Writes the de-rotated states of one sample (`d_h` rows, one column per
/// input step) and returns the matrix written.
pub fn dump_states(model: &SrnnParams, sample: &TaskBatch, out: &Path) -> Result<Matrix> {
    let (_, trace) = model.forward(&sample.inputs)?;
    let all = derotate_states(&trace, 0);
    let states = Matrix::from_fn(all.rows(), all.cols() - 1, |r, c| all.get(r, c + 1));
    let mut w = BufWriter::new(File::create(out)?);
    write_states_csv(&mut w, &states)?;
    w.flush()?;
    Ok(states)
}

/// Training-accuracy curve of one capacity configuration.
#[derive(Clone, Debug)]
pub struct CapacityCurve {
    pub model: ModelKind,
    pub n: usize,
    pub crop: usize,
    pub params: usize,
    /// `(epoch, accuracy on the training samples)`, epoch 0 before training.
    pub accuracy: Vec<(usize, f64)>,
}

impl CapacityCurve {
    pub fn best(&self) -> f64 {
        self.accuracy.iter().map(|&(_, a)| a).fold(0.0, f64::max)
    }
}

/// Fits shuffled-label subsets of each size with each model under the budget
/// in `base`, writing `capacity.csv` into `base.out`.
pub fn capacity_run(base: &ExperimentConfig, ns: &[usize], models: &[ModelKind]) -> Result<Vec<CapacityCurve>> {
    let mut curves = Vec::new();
    for &model in models {
        for &n in ns {
            let mut cfg = base.clone();
            cfg.task = TaskKind::Capacity;
            cfg.model = model;
            cfg.n = n;
            cfg.eval_every = 0;
            if model == ModelKind::Rnn {
                cfg.f_r = None;
                cfg.gating = true;
            }
            cfg.out = base.out.join(format!("{}-n{}-crop{}", model.name(), n, cfg.crop));
            let outcome = train(&cfg)?;
            let per_epoch = n.div_ceil(cfg.batch);
            let accuracy = outcome
                .records
                .iter()
                .map(|r| ((r.step as usize).div_ceil(per_epoch), r.eval_metric))
                .collect();
            curves.push(CapacityCurve { model, n, crop: cfg.crop, params: outcome.model.param_count(), accuracy });
        }
    }
    fs::create_dir_all(&base.out)?;
    let mut w = BufWriter::new(File::create(base.out.join("capacity.csv"))?);
    writeln!(w, "model,N,crop,params,epoch,train_accuracy")?;
    for c in &curves {
        for (e, a) in &c.accuracy {
            writeln!(w, "{},{},{},{},{},{:?}", c.model.name(), c.n, c.crop, c.params, e, a)?;
        }
    }
    w.flush()?;
    Ok(curves)
}
