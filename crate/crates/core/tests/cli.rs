use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn srnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srnn")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn small_train(preset: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--preset", preset, "--out", out.to_str().unwrap(), "--quiet"];
    for s in ["d_h=12", "steps=6", "eval_every=3", "eval_samples=20", "threads=1"].iter().chain(extra) {
        args.extend(["--set", s]);
    }
    srnn(&args)
}

#[test]
fn train_writes_metrics_checkpoint_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run1");
    let o = small_train("memcopy", &run, &["T=100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("step,samples_seen,train_loss,eval_metric,grad_norm,wallclock_ms"));
    assert_eq!(csv.lines().count(), 4);
    assert!(run.join("model.ckpt").exists());
    let snapshot = fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(snapshot.lines().any(|l| l == "T = 100"), "{snapshot}");
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("steps 6"));
}

#[test]
fn repeated_runs_give_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(code(&small_train("adding", d, &["T=100"])), 0);
    }
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
}

#[test]
fn config_errors_exit_2_and_name_the_offender() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_train("memcopy", dir.path(), &["T=-5"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("T"));

    let o = small_train("memcopy", dir.path(), &["colour=red"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    let o = srnn(&["train", "--preset", "sorting", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sorting"));
}

#[test]
fn config_file_is_applied_before_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("exp.cfg");
    fs::write(&file, "# short run\nT = 7\nsteps = 2\nd_h = 6\n").unwrap();
    let out = dir.path().join("run");
    let o = srnn(&[
        "train", "--preset", "adding", "--config", file.to_str().unwrap(), "--set", "steps=3", "--set", "eval_samples=10",
        "--out", out.to_str().unwrap(), "--quiet",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let snapshot = fs::read_to_string(out.join("config.txt")).unwrap();
    for line in ["T = 7", "steps = 3", "d_h = 6"] {
        assert!(snapshot.lines().any(|l| l == line), "{line} missing from\n{snapshot}");
    }
}

#[test]
fn numeric_blowup_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_train("adding", dir.path(), &["T=10", "lr=1e300", "steps=40"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(csv.lines().count() >= 2);
}

#[test]
fn gradcheck_passes_for_both_models() {
    for model in ["srnn", "rnn"] {
        let o = srnn(&["gradcheck", "--model", model, "--dh", "16", "--T", "20"]);
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert_eq!(code(&o), 0, "{model}: {stdout}");
        assert!(stdout.contains("max_rel_err") && stdout.contains("skipped") && stdout.contains("PASS"));
    }
    assert_eq!(code(&srnn(&["gradcheck", "--model", "srnn", "--dh", "0"])), 2);
}

#[test]
fn benchmark_writes_csv_and_rejects_bad_lists() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let o = srnn(&[
        "benchmark", "--model", "srnn", "--dh-list", "8,16", "--T", "30", "--repeats", "3", "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("slope"));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 3);
    assert_eq!(code(&srnn(&["benchmark", "--model", "srnn", "--dh-list", "256,,x"])), 2);
    assert_eq!(code(&srnn(&["benchmark", "--model", "rnn", "--dh-list", "0,8"])), 2);
}

#[test]
fn dump_states_writes_one_row_per_unit() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&small_train("adding", &run, &["T=30"])), 0);
    let out = dir.path().join("states.csv");
    let ckpt = run.join("model.ckpt");
    let o = srnn(&[
        "dump-states", "--checkpoint", ckpt.to_str().unwrap(), "--task", "adding", "--set", "T=30", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 31);
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.split(',').count() == 31));

    let wrong_task = srnn(&[
        "dump-states", "--checkpoint", ckpt.to_str().unwrap(), "--task", "memcopy", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&wrong_task), 2);
}

#[test]
fn dump_states_without_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = srnn(&[
        "dump-states",
        "--checkpoint",
        dir.path().join("absent.ckpt").to_str().unwrap(),
        "--task",
        "adding",
        "--out",
        dir.path().join("s.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn help_lists_presets_and_keys() {
    let o = srnn(&["train", "--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for p in ["memcopy", "adding", "pmnist-crop8", "pmnist-crop16", "pmnist-full", "capacity"] {
        assert!(text.contains(p), "{p}");
    }
    for k in ["d_h", "f_r", "gating", "micro_batch", "threads", "permute_seed"] {
        assert!(text.contains(k), "{k}");
    }
}
