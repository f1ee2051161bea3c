//! Experiment configuration: presets, `key = value` files and overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    MemCopy,
    Adding,
    /// Pixel-by-pixel MNIST under a fixed permutation, with a validation holdout.
    Pmnist,
    /// Random-label MNIST subset, evaluated on its own training samples.
    Capacity,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::MemCopy => "memcopy",
            TaskKind::Adding => "adding",
            TaskKind::Pmnist => "pmnist",
            TaskKind::Capacity => "capacity",
        }
    }

    pub fn is_generated(self) -> bool {
        matches!(self, TaskKind::MemCopy | TaskKind::Adding)
    }
}

impl FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "memcopy" => TaskKind::MemCopy,
            "adding" => TaskKind::Adding,
            "pmnist" => TaskKind::Pmnist,
            "capacity" => TaskKind::Capacity,
            _ => return Err("expected memcopy, adding, pmnist or capacity".into()),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Srnn,
    Rnn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Srnn => "srnn",
            ModelKind::Rnn => "rnn",
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "srnn" => Ok(ModelKind::Srnn),
            "rnn" | "vanilla" => Ok(ModelKind::Rnn),
            _ => Err("expected srnn or rnn".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    RmsProp,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err("expected rmsprop or adam".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Timing {
    /// Wall-clock is recorded unless `threads = 1`.
    Auto,
    On,
    Off,
}

pub const PRESETS: [&str; 6] = ["memcopy", "adding", "pmnist-crop8", "pmnist-crop16", "pmnist-full", "capacity"];

/// Every settable key with a one-line description, in snapshot order.
pub const KEYS: [(&str, &str); 29] = [
    ("task", "memcopy | adding | pmnist | capacity"),
    ("T", "copy lag (memcopy, length T+20) or sequence length (adding)"),
    ("crop", "center crop side for pixel tasks; 0 keeps 28x28"),
    ("N", "random-label subset size (capacity)"),
    ("model", "srnn | rnn"),
    ("d_h", "hidden size, or auto"),
    ("f_r", "f_r hidden layer sizes, comma separated, or auto"),
    ("d_e", "embedding width for token inputs"),
    ("gating", "on | off (srnn)"),
    ("activation", "relu | tanh | sigmoid | identity | auto"),
    ("optimizer", "rmsprop | adam"),
    ("lr", "learning rate"),
    ("decay", "RMSProp decay rate"),
    ("batch", "minibatch size"),
    ("micro_batch", "split each minibatch into chunks of this size; 0 = off"),
    ("steps", "update budget; for dataset tasks overrides epochs when > 0"),
    ("epochs", "epoch budget for dataset tasks"),
    ("eval_every", "steps between evaluations; 0 = 100 (generated) or one epoch (dataset)"),
    ("eval_samples", "fixed evaluation set size for generated tasks"),
    ("clip", "global gradient-norm clip for rnn; 0 = off"),
    ("seed", "parameter initialisation seed"),
    ("data_seed", "seed for batches, shuffles, subsets and holdouts"),
    ("permute_seed", "pixel permutation seed; 0 = raster order"),
    ("holdout", "validation samples held out of the pmnist training set"),
    ("data_dir", "directory with train-images-idx3-ubyte[.gz] and train-labels-idx1-ubyte[.gz]"),
    ("threads", "worker threads; 0 = all cores, 1 = bit-exact mode"),
    ("timing", "auto | on | off: record wall-clock in metrics (auto: off when threads = 1)"),
    ("out", "output directory"),
    ("preset", "name of the preset this configuration started from"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: String,
    pub task: TaskKind,
    pub t: usize,
    pub crop: usize,
    pub n: usize,
    pub model: ModelKind,
    pub d_h: Option<usize>,
    pub f_r: Option<Vec<usize>>,
    pub d_e: usize,
    pub gating: bool,
    pub activation: Option<Activation>,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub decay: f64,
    pub batch: usize,
    pub micro_batch: usize,
    pub steps: usize,
    pub epochs: usize,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub clip: f64,
    pub seed: u64,
    pub data_seed: u64,
    pub permute_seed: u64,
    pub holdout: usize,
    pub data_dir: PathBuf,
    pub threads: usize,
    pub timing: Timing,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = ExperimentConfig {
            preset: name.to_string(),
            task: TaskKind::MemCopy,
            t: 100,
            crop: 0,
            n: 100,
            model: ModelKind::Srnn,
            d_h: None,
            f_r: None,
            d_e: 32,
            gating: true,
            activation: None,
            optimizer: OptimizerKind::RmsProp,
            lr: 0.001,
            decay: 0.9,
            batch: 20,
            micro_batch: 0,
            steps: 10_000,
            epochs: 0,
            eval_every: 0,
            eval_samples: 500,
            clip: 0.0,
            seed: 1,
            data_seed: 2,
            permute_seed: 0,
            holdout: 0,
            data_dir: PathBuf::from("data/mnist10k"),
            threads: 0,
            timing: Timing::Auto,
            out: PathBuf::from("runs").join(name),
        };
        match name {
            "memcopy" => {}
            "adding" => {
                c.task = TaskKind::Adding;
                c.batch = 50;
                c.steps = 4_000;
            }
            "pmnist-crop8" | "pmnist-crop16" | "pmnist-full" => {
                c.task = TaskKind::Pmnist;
                c.crop = match name {
                    "pmnist-crop8" => 8,
                    "pmnist-crop16" => 16,
                    _ => 0,
                };
                c.batch = 100;
                c.steps = 0;
                c.epochs = 60;
                c.permute_seed = 1;
                c.holdout = 1_000;
                if name == "pmnist-full" {
                    c.micro_batch = 25;
                }
            }
            "capacity" => {
                c.task = TaskKind::Capacity;
                c.crop = 8;
                c.batch = 100;
                c.steps = 2_000;
            }
            other => {
                return Err(Error::config(format!("unknown preset '{other}' (known: {})", PRESETS.join(", "))));
            }
        }
        Ok(c)
    }

    /// Hidden size after resolving `auto`.
    pub fn hidden_size(&self) -> usize {
        self.d_h.unwrap_or(match (self.task, self.model) {
            // Both near 15k parameters on 1-d pixel input with 10 classes.
            (TaskKind::Capacity, ModelKind::Srnn) => 512,
            (TaskKind::Capacity, ModelKind::Rnn) => 116,
            (TaskKind::Pmnist, ModelKind::Srnn) => 1024,
            _ => 128,
        })
    }

    pub fn f_r_hidden(&self) -> Vec<usize> {
        self.f_r.clone().unwrap_or_else(|| match self.task {
            TaskKind::Pmnist => vec![32, 32, 32],
            TaskKind::Capacity => vec![16],
            _ => vec![8],
        })
    }

    pub fn activation(&self) -> Activation {
        self.activation.unwrap_or(match self.model {
            ModelKind::Srnn => Activation::Relu,
            ModelKind::Rnn => Activation::Tanh,
        })
    }

    pub fn timing_enabled(&self) -> bool {
        match self.timing {
            Timing::On => true,
            Timing::Off => false,
            Timing::Auto => self.threads != 1,
        }
    }

    /// Steps between evaluations, or `None` for once per epoch.
    pub fn eval_cadence(&self) -> Option<usize> {
        match (self.eval_every, self.task.is_generated()) {
            (0, true) => Some(100),
            (0, false) => None,
            (k, _) => Some(k),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::config(format!("unknown key '{key}'")));
        }
        let bad = |why: String| Error::config(format!("invalid value '{value}' for key '{key}': {why}"));
        fn num<T: FromStr>(v: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| e.to_string())
        }
        fn auto<T>(v: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Option<T>, String> {
            if v == "auto" {
                Ok(None)
            } else {
                f(v).map(Some)
            }
        }
        fn on_off(v: &str) -> std::result::Result<bool, String> {
            match v {
                "on" | "true" | "1" => Ok(true),
                "off" | "false" | "0" => Ok(false),
                _ => Err("expected on or off".into()),
            }
        }
        fn positive(v: &str) -> std::result::Result<usize, String> {
            match num::<usize>(v)? {
                0 => Err("must be positive".into()),
                n => Ok(n),
            }
        }
        fn real(v: &str) -> std::result::Result<f64, String> {
            let x = num::<f64>(v)?;
            if x.is_finite() && x >= 0.0 {
                Ok(x)
            } else {
                Err("must be a finite non-negative number".into())
            }
        }
        let r: std::result::Result<(), String> = (|| {
            match key {
                "preset" => self.preset = value.to_string(),
                "task" => self.task = value.parse()?,
                "T" => self.t = positive(value)?,
                "crop" => self.crop = num(value)?,
                "N" => self.n = positive(value)?,
                "model" => self.model = value.parse()?,
                "d_h" => self.d_h = auto(value, positive)?,
                "f_r" => {
                    self.f_r = auto(value, |v| {
                        let sizes = v.split(',').map(|p| positive(p.trim())).collect::<std::result::Result<Vec<_>, _>>()?;
                        Ok(sizes)
                    })?
                }
                "d_e" => self.d_e = positive(value)?,
                "gating" => self.gating = on_off(value)?,
                "activation" => self.activation = auto(value, |v| v.parse::<Activation>())?,
                "optimizer" => self.optimizer = value.parse()?,
                "lr" => {
                    self.lr = real(value)?;
                    if self.lr == 0.0 {
                        return Err("must be positive".into());
                    }
                }
                "decay" => {
                    self.decay = real(value)?;
                    if self.decay >= 1.0 {
                        return Err("must be below 1".into());
                    }
                }
                "batch" => self.batch = positive(value)?,
                "micro_batch" => self.micro_batch = num(value)?,
                "steps" => self.steps = num(value)?,
                "epochs" => self.epochs = num(value)?,
                "eval_every" => self.eval_every = num(value)?,
                "eval_samples" => self.eval_samples = positive(value)?,
                "clip" => self.clip = real(value)?,
                "seed" => self.seed = num(value)?,
                "data_seed" => self.data_seed = num(value)?,
                "permute_seed" => self.permute_seed = num(value)?,
                "holdout" => self.holdout = num(value)?,
                "data_dir" => self.data_dir = PathBuf::from(value),
                "threads" => self.threads = num(value)?,
                "timing" => {
                    self.timing = match value {
                        "auto" => Timing::Auto,
                        "on" => Timing::On,
                        "off" => Timing::Off,
                        _ => return Err("expected auto, on or off".into()),
                    }
                }
                "out" => self.out = PathBuf::from(value),
                _ => unreachable!("checked below"),
            }
            Ok(())
        })();
        r.map_err(bad)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override '{assignment}' is not of the form key=value")))?;
        self.set(k.trim(), v)
    }

    /// Applies every assignment of a flat `key = value` text with `#` comments.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("{origin}:{}: expected key = value", i + 1)))?;
            self.set(k.trim(), v).map_err(|e| Error::config(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config file {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Cross-field checks; run before any compute.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if matches!(self.task, TaskKind::Pmnist | TaskKind::Capacity) {
            if self.crop > 28 {
                return fail(format!("crop {} exceeds the 28x28 image", self.crop));
            }
            if self.task == TaskKind::Capacity && !matches!(self.crop, 8 | 16) {
                return fail(format!("capacity runs use crop 8 or 16, got {}", self.crop));
            }
        }
        if self.task == TaskKind::Adding && self.t < 2 {
            return fail("adding task needs T >= 2".into());
        }
        if self.micro_batch > self.batch {
            return fail(format!("micro_batch {} exceeds batch {}", self.micro_batch, self.batch));
        }
        if self.clip > 0.0 && self.model == ModelKind::Srnn {
            return fail("gradient clipping is only available for the rnn model".into());
        }
        if self.task.is_generated() && self.epochs > 0 {
            return fail(format!("{} generates data on the fly; set steps instead of epochs", self.task.name()));
        }
        if self.task == TaskKind::Pmnist && self.holdout == 0 {
            return fail("pmnist needs a validation holdout > 0".into());
        }
        if self.model == ModelKind::Rnn && (self.f_r.is_some() || !self.gating) {
            return fail("f_r and gating apply to the srnn model only".into());
        }
        Ok(())
    }

    /// Fully resolved `key = value` snapshot that reproduces this run via `--config`.
    pub fn snapshot(&self) -> String {
        let f_r = self.f_r_hidden().iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let timing = match self.timing {
            Timing::Auto => "auto",
            Timing::On => "on",
            Timing::Off => "off",
        };
        let optimizer = match self.optimizer {
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adam => "adam",
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            writeln!(s, "{k} = {v}").expect("string write");
        };
        kv("preset", self.preset.clone());
        kv("task", self.task.name().into());
        kv("T", self.t.to_string());
        kv("crop", self.crop.to_string());
        kv("N", self.n.to_string());
        kv("model", self.model.name().into());
        kv("d_h", self.hidden_size().to_string());
        if self.model == ModelKind::Srnn {
            kv("f_r", f_r);
            kv("gating", if self.gating { "on" } else { "off" }.into());
        }
        kv("d_e", self.d_e.to_string());
        kv("activation", self.activation().name().into());
        kv("optimizer", optimizer.into());
        kv("lr", format!("{:?}", self.lr));
        kv("decay", format!("{:?}", self.decay));
        kv("batch", self.batch.to_string());
        kv("micro_batch", self.micro_batch.to_string());
        kv("steps", self.steps.to_string());
        kv("epochs", self.epochs.to_string());
        kv("eval_every", self.eval_every.to_string());
        kv("eval_samples", self.eval_samples.to_string());
        kv("clip", format!("{:?}", self.clip));
        kv("seed", self.seed.to_string());
        kv("data_seed", self.data_seed.to_string());
        kv("permute_seed", self.permute_seed.to_string());
        kv("holdout", self.holdout.to_string());
        kv("data_dir", self.data_dir.display().to_string());
        kv("threads", self.threads.to_string());
        kv("timing", timing.into());
        kv("out", self.out.display().to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for p in PRESETS {
            let c = ExperimentConfig::preset(p).unwrap();
            c.validate().unwrap();
        }
        let m = ExperimentConfig::preset("memcopy").unwrap();
        assert_eq!((m.batch, m.hidden_size(), m.f_r_hidden()), (20, 128, vec![8]));
        assert_eq!(m.activation(), Activation::Relu);
        assert_eq!((m.lr, m.decay), (0.001, 0.9));
        let a = ExperimentConfig::preset("adding").unwrap();
        assert_eq!((a.batch, a.hidden_size(), a.f_r_hidden()), (50, 128, vec![8]));
        let p = ExperimentConfig::preset("pmnist-full").unwrap();
        assert_eq!((p.batch, p.hidden_size(), p.f_r_hidden(), p.epochs), (100, 1024, vec![32, 32, 32], 60));
        let mut c = ExperimentConfig::preset("capacity").unwrap();
        assert_eq!(c.hidden_size(), 512);
        c.set("model", "rnn").unwrap();
        assert_eq!((c.hidden_size(), c.activation()), (116, Activation::Tanh));
        assert!(ExperimentConfig::preset("timit").unwrap_err().to_string().contains("timit"));
    }

    #[test]
    fn overrides_and_errors_name_the_key() {
        let mut c = ExperimentConfig::preset("memcopy").unwrap();
        c.apply_override("T=300").unwrap();
        c.apply_override("f_r = 4, 4").unwrap();
        c.apply_override("gating=off").unwrap();
        assert_eq!((c.t, c.f_r_hidden(), c.gating), (300, vec![4, 4], false));
        let e = c.apply_override("T=-5").unwrap_err().to_string();
        assert!(e.contains("'T'") && e.contains("-5"), "{e}");
        let e = c.apply_override("widht=3").unwrap_err().to_string();
        assert!(e.contains("widht"), "{e}");
        assert!(c.apply_override("lr=0").is_err());
        assert!(c.apply_override("decay=1.0").is_err());
        assert!(c.apply_override("d_h=0").is_err());
        assert!(c.apply_override("novalue").is_err());
    }

    #[test]
    fn text_config_with_comments() {
        let mut c = ExperimentConfig::preset("adding").unwrap();
        c.apply_text("# adding ablation\nT = 200  # longer\n\nd_h=64\n", "inline").unwrap();
        assert_eq!((c.t, c.hidden_size()), (200, 64));
        let e = c.apply_text("T = 10\nbogus\n", "cfg.txt").unwrap_err().to_string();
        assert!(e.contains("cfg.txt:2"), "{e}");
    }

    #[test]
    fn snapshot_round_trips() {
        for p in PRESETS {
            let mut c = ExperimentConfig::preset(p).unwrap();
            c.apply_override("seed=7").unwrap();
            let mut back = ExperimentConfig::preset("memcopy").unwrap();
            back.apply_text(&c.snapshot(), "snapshot").unwrap();
            assert_eq!(back.snapshot(), c.snapshot());
            assert_eq!(back.hidden_size(), c.hidden_size());
            assert_eq!(back.task, c.task);
        }
    }

    #[test]
    fn every_key_is_settable() {
        let samples = [
            ("task", "adding"),
            ("T", "5"),
            ("crop", "8"),
            ("N", "10"),
            ("model", "srnn"),
            ("d_h", "auto"),
            ("f_r", "auto"),
            ("d_e", "4"),
            ("gating", "on"),
            ("activation", "tanh"),
            ("optimizer", "adam"),
            ("lr", "0.01"),
            ("decay", "0.5"),
            ("batch", "3"),
            ("micro_batch", "0"),
            ("steps", "1"),
            ("epochs", "0"),
            ("eval_every", "1"),
            ("eval_samples", "4"),
            ("clip", "0"),
            ("seed", "1"),
            ("data_seed", "1"),
            ("permute_seed", "1"),
            ("holdout", "1"),
            ("data_dir", "x"),
            ("threads", "1"),
            ("timing", "off"),
            ("out", "y"),
            ("preset", "adding"),
        ];
        assert_eq!(samples.len(), KEYS.len());
        let mut c = ExperimentConfig::preset("memcopy").unwrap();
        for (k, v) in samples {
            c.set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }

    #[test]
    fn cross_field_validation() {
        let mut c = ExperimentConfig::preset("memcopy").unwrap();
        c.set("clip", "1").unwrap();
        assert!(c.validate().is_err());
        c.set("model", "rnn").unwrap();
        c.validate().unwrap();
        c.set("epochs", "3").unwrap();
        assert!(c.validate().is_err());
        let mut p = ExperimentConfig::preset("capacity").unwrap();
        p.set("crop", "0").unwrap();
        assert!(p.validate().is_err());
    }
}
