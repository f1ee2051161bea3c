//! Command-line front end. Exit codes: 0 success, 2 usage or configuration
//! error, 3 numeric failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baseline::{VanillaConfig, VanillaParams};
use crate::diagnostics::{finite_diff_check, GradCheckReport};
use crate::error::Error;
use crate::harness::bench::{loglog_slope, runtime_benchmark, write_csv, BenchConfig, BenchInput};
use crate::harness::{self, AnyModel, ExperimentConfig, ModelKind, TaskData, KEYS, PRESETS};
use crate::srnn::{SrnnConfig, SrnnParams};
use crate::tasks::{gen_memcopy, MEMCOPY_CLASSES, MEMCOPY_VOCAB};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Tolerance for `gradcheck` to succeed.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Parser, Debug)]
#[command(name = "srnn", version, about = "Shuffling recurrent networks: training presets and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a preset, writing metrics.csv, model.ckpt, config.txt and summary.txt.
    Train {
        #[arg(long)]
        preset: String,
        /// Flat `key = value` file applied after the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one key; repeatable, applied last.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (same as --set out=DIR).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress per-evaluation progress lines.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Compare backpropagated gradients with central differences on a copy-task batch.
    Gradcheck {
        #[arg(long, value_enum)]
        model: CliModel,
        #[arg(long, default_value_t = 16)]
        dh: usize,
        /// Copy lag; the sequence has T + 20 steps.
        #[arg(long = "T", default_value_t = 20)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
    /// Median time of one training step for each hidden size, with the log-log slope.
    Benchmark {
        #[arg(long, value_enum)]
        model: CliModel,
        /// Comma-separated hidden sizes.
        #[arg(long = "dh-list", value_parser = parse_list, default_value = "256,512,1024,2048")]
        dh_list: std::vec::Vec<usize>,
        #[arg(long = "T", default_value_t = 300)]
        t: usize,
        #[arg(long, default_value_t = 1)]
        batch: usize,
        #[arg(long, value_enum, default_value_t = CliInput::Dense)]
        input: CliInput,
        /// Input channels for dense input.
        #[arg(long = "d-in", default_value_t = 2)]
        d_in: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the de-rotated hidden states of one task sample as CSV.
    DumpStates {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Preset that defines the task and data seed.
        #[arg(long)]
        task: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CliModel {
    Srnn,
    Rnn,
}

impl From<CliModel> for ModelKind {
    fn from(m: CliModel) -> Self {
        match m {
            CliModel::Srnn => ModelKind::Srnn,
            CliModel::Rnn => ModelKind::Rnn,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CliInput {
    Dense,
    Memcopy,
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    if v.is_empty() || v.contains(&0) {
        return Err("sizes must be positive".into());
    }
    Ok(v)
}

fn reference_text() -> String {
    let mut s = String::from("Presets:\n");
    for p in PRESETS {
        s += &format!("  {p}\n");
    }
    s += "\nConfiguration keys (config file `key = value` or --set key=value):\n";
    for (k, d) in KEYS {
        s += &format!("  {k:<13} {d}\n");
    }
    s += "\nExit codes: 0 success, 2 usage or configuration error, 3 numeric failure.";
    s
}

fn command() -> clap::Command {
    let text = reference_text();
    Cli::command().after_help(text.clone()).mut_subcommand("train", |c| c.after_help(text.clone()))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    let result = match cli.command {
        Command::Train { preset, config, set, out, quiet } => cmd_train(&preset, config, &set, out, quiet),
        Command::Gradcheck { model, dh, t, seed, batch, eps } => cmd_gradcheck(model.into(), dh, t, seed, batch, eps),
        Command::Benchmark { model, dh_list, t, batch, input, d_in, repeats, warmup, out } => {
            let mut c = BenchConfig::new(model.into(), dh_list, t);
            c.batch = batch;
            c.input = match input {
                CliInput::Dense => BenchInput::Dense { d_in },
                CliInput::Memcopy => BenchInput::MemCopy,
            };
            c.repeats = repeats;
            c.warmup = warmup;
            cmd_benchmark(&c, out)
        }
        Command::DumpStates { checkpoint, task, set, out } => cmd_dump_states(&checkpoint, &task, &set, &out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite { .. } => EXIT_NUMERIC,
        Error::Config(_) | Error::Format { .. } | Error::Io(_) | Error::Target { .. } => EXIT_USAGE,
        Error::Shape(_) => EXIT_FAILED,
    }
}

fn resolve_config(preset: &str, file: Option<PathBuf>, set: &[String]) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::preset(preset)?;
    if let Some(f) = file {
        cfg.apply_file(&f)?;
    }
    for s in set {
        cfg.apply_override(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(preset: &str, file: Option<PathBuf>, set: &[String], out: Option<PathBuf>, quiet: bool) -> Result<i32, Error> {
    let mut cfg = resolve_config(preset, file, set)?;
    if let Some(o) = out {
        cfg.out = o;
    }
    let task = TaskData::prepare(&cfg)?;
    let model = AnyModel::build(&cfg, task.io())?;
    if !quiet {
        eprintln!(
            "{} on {} ({} parameters) -> {}",
            cfg.model.name(),
            cfg.preset,
            model.param_count(),
            cfg.out.display()
        );
    }
    let mut progress = |r: &harness::MetricRecord| {
        if !quiet {
            eprintln!(
                "step {:>7}  samples {:>9}  train_loss {:.6}  eval {:.6}  grad_norm {:.4}",
                r.step, r.samples_seen, r.train_loss, r.eval_metric, r.grad_norm
            );
        }
    };
    let outcome = harness::train_with(&cfg, &task, model, &mut progress)?;
    let last = outcome.final_record();
    println!("steps {}  final train_loss {:?}  eval_metric {:?}", last.step, last.train_loss, last.eval_metric);
    if let Some(b) = outcome.best {
        match b.test_metric {
            Some(t) => println!("best step {}  validation {:?}  test {:?}", b.step, b.eval_metric, t),
            None => println!("best step {}  validation {:?}", b.step, b.eval_metric),
        }
    }
    Ok(EXIT_OK)
}

/// Gradient check on a copy-task batch of lag `t` with a small model
/// (embedding width 8, one f_r hidden layer of 8 units).
pub fn gradcheck(model: ModelKind, d_h: usize, t: usize, seed: u64, batch: usize, eps: f64) -> Result<GradCheckReport, Error> {
    if d_h == 0 || t == 0 || batch == 0 {
        return Err(Error::config("--dh, --T and --batch must be positive"));
    }
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::config(format!("--eps {eps} outside [1e-7, 1e-4]")));
    }
    let data = gen_memcopy(t, batch, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9));
    match model {
        ModelKind::Srnn => {
            let p = SrnnParams::init(&SrnnConfig::tokens(MEMCOPY_VOCAB, 8, d_h, MEMCOPY_CLASSES, &[8]), seed)?;
            finite_diff_check(&p, &data, eps)
        }
        ModelKind::Rnn => {
            let p = VanillaParams::init(&VanillaConfig::tokens(MEMCOPY_VOCAB, 8, d_h, MEMCOPY_CLASSES), seed)?;
            finite_diff_check(&p, &data, eps)
        }
    }
}

fn cmd_gradcheck(model: ModelKind, d_h: usize, t: usize, seed: u64, batch: usize, eps: f64) -> Result<i32, Error> {
    let r = gradcheck(model, d_h, t, seed, batch, eps)?;
    println!("max_rel_err {:e}", r.max_rel_err);
    println!("checked {}  skipped {}  ({:.2}% of {})", r.checked, r.skipped, 100.0 * r.skipped_fraction(), r.total());
    let ok = r.max_rel_err < GRADCHECK_TOLERANCE;
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(if ok { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_benchmark(cfg: &BenchConfig, out: Option<PathBuf>) -> Result<i32, Error> {
    cfg.validate()?;
    let rows = runtime_benchmark(cfg)?;
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(&path)?);
            write_csv(&mut w, cfg.model, &rows)?;
            w.flush()?;
        }
        None => write_csv(io::stdout().lock(), cfg.model, &rows)?,
    }
    if rows.len() >= 2 {
        println!("slope {:.3}", loglog_slope(&rows));
    }
    Ok(EXIT_OK)
}

fn cmd_dump_states(checkpoint: &std::path::Path, preset: &str, set: &[String], out: &std::path::Path) -> Result<i32, Error> {
    let cfg = resolve_config(preset, None, set)?;
    if !checkpoint.exists() {
        return Err(Error::config(format!("checkpoint {} does not exist", checkpoint.display())));
    }
    let model = AnyModel::load(checkpoint)?;
    let task = TaskData::prepare(&cfg)?;
    model.check_io(task.io())?;
    let AnyModel::Srnn(m) = model else {
        return Err(Error::config("dump-states needs an srnn checkpoint; the rnn state has no shift to undo"));
    };
    let states = harness::dump_states(&m, &task.single_sample(&cfg), out)?;
    println!("wrote {} units x {} steps to {}", states.rows(), states.cols(), out.display());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_lists_presets_and_keys() {
        let help = command().render_long_help().to_string();
        for p in PRESETS {
            assert!(help.contains(p), "{p}");
        }
        for (k, _) in KEYS {
            assert!(help.contains(&format!("  {k} ")), "{k}");
        }
        let mut cmd = command();
        let train = cmd.find_subcommand_mut("train").unwrap().render_long_help().to_string();
        assert!(train.contains("pmnist-full") && train.contains("micro_batch"));
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list("256,512, 1024").unwrap(), [256, 512, 1024]);
        assert!(parse_list("256,,512").is_err());
        assert!(parse_list("a").is_err());
        assert!(parse_list("0,4").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["srnn", "gradcheck", "--model", "srnn", "--dh", "0"]), EXIT_USAGE);
        assert_eq!(run(["srnn", "benchmark", "--model", "rnn", "--dh-list", "1,x"]), EXIT_USAGE);
        assert_eq!(run(["srnn", "train", "--preset", "nope"]), EXIT_USAGE);
        assert_eq!(run(["srnn", "train", "--preset", "memcopy", "--set", "T=-5"]), EXIT_USAGE);
        assert_eq!(run(["srnn", "bogus"]), EXIT_USAGE);
    }

    #[test]
    fn small_gradchecks_pass() {
        for m in [ModelKind::Srnn, ModelKind::Rnn] {
            let r = gradcheck(m, 8, 3, 1, 2, 1e-5).unwrap();
            assert!(r.max_rel_err < GRADCHECK_TOLERANCE, "{m:?} {r:?}");
        }
    }
}
