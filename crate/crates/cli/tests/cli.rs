use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use xvhash::codec::{load_codes, HashModel};
use xvhash::dataset::load_dataset;
use xvhash::eval::{run_protocol, Protocol, Task};
use xvhash::pipeline::TrainConfig;
use xvhash::solver::SolverConfig;

fn xvh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xvh"))
        .args(args)
        .output()
        .expect("spawn xvh")
}

fn ok(args: &[&str]) -> String {
    let out = xvh(args);
    assert!(
        out.status.success(),
        "xvh {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: u64) -> PathBuf {
    let d = dir.join(format!("data{seed}"));
    ok(&[
        "synth", "--n1", "220", "--n2", "220", "--n0", "120", "--c", "4", "--labeled", "0.5", "--seed",
        &seed.to_string(), "--out", s(&d),
    ]);
    d
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn map_column(path: &Path) -> Vec<(String, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let (ti, mi) = (
        header.iter().position(|&h| h == "task").unwrap(),
        header.iter().position(|&h| h == "map").unwrap(),
    );
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[ti].to_string(), f[mi].parse().unwrap())
        })
        .collect()
}

#[test]
fn synth_is_loadable_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), 7);
    let ds = load_dataset(&a).unwrap();
    assert_eq!((ds.n1(), ds.n2(), ds.n0(), ds.c()), (220, 220, 120, 4));
    let b = dir.path().join("again");
    ok(&[
        "synth", "--n1", "220", "--n2", "220", "--n0", "120", "--c", "4", "--labeled", "0.5", "--seed", "7",
        "--out", s(&b),
    ]);
    assert_eq!(files(&a), files(&b));
}

#[test]
fn synth_rejects_too_many_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = xvh(&["synth", "--n0", "500", "--n2", "100", "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("n0=500") && err.contains("n2=100"), "{err}");
}

#[test]
fn train_then_eval_matches_in_process_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 3);
    let run = dir.path().join("run");
    ok(&["train", "--data", s(&data), "--out", s(&run), "--seed", "11"]);
    for f in ["model.bin", "trace.csv", "itq.csv", "split.csv", "config.txt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    ok(&["eval", "--run", s(&run), "--data", s(&data)]);
    let got = map_column(&run.join("results.csv"));

    let ds = load_dataset(&data).unwrap();
    let protocol = Protocol {
        train: TrainConfig::default().with_seed(11),
        ..Protocol::default()
    };
    let (out, ev) = run_protocol(&ds, &protocol).unwrap();
    assert_eq!(fs::read(run.join("model.bin")).unwrap(), out.model.to_bytes());
    assert_eq!(got.len(), 2);
    for (task, map) in got {
        let t: Task = task.parse().unwrap();
        assert_eq!(Some(map), ev.map(t), "{task}");
    }
}

#[test]
fn eval_respects_task_and_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 4);
    let run = dir.path().join("run");
    ok(&["train", "--data", s(&data), "--out", s(&run), "--max-iter", "5"]);
    let out = dir.path().join("ev");
    let table = ok(&["eval", "--run", s(&run), "--data", s(&data), "--task", "i2t", "--R", "10", "--out", s(&out)]);
    assert!(table.contains("I→T") && !table.contains("T→I"), "{table}");
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("i2t,10,single,"), "{csv}");
}

#[test]
fn eval_without_model_fails() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 5);
    let out = xvh(&["eval", "--run", s(&dir.path().join("none")), "--data", s(&data)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train"));
}

#[test]
fn code_lengths_and_config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 6);
    for r in ["16", "32", "64"] {
        let run = dir.path().join(format!("r{r}"));
        ok(&["train", "--data", s(&data), "--out", s(&run), "--code-length", r, "--max-iter", "3"]);
        let model = HashModel::load(run.join("model.bin")).unwrap();
        assert_eq!(model.r().to_string(), r);
    }
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "code-length=16\nbeta=10\nmax-iter=3\n").unwrap();
    let run = dir.path().join("cfg");
    ok(&["train", "--data", s(&data), "--out", s(&run), "--config", s(&cfg), "--beta", "0.5"]);
    let echo = fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(echo.contains("code-length=16\n") && echo.contains("beta=0.5\n") && echo.contains("max-iter=3\n"));
    assert_eq!(HashModel::load(run.join("model.bin")).unwrap().r(), 16);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 8);
    let out_dir = dir.path().join("o");
    let cases: Vec<Vec<&str>> = vec![
        vec!["train", "--data", s(&data), "--out", s(&out_dir), "--beta", "x"],
        vec!["train", "--data", s(&data), "--out", s(&out_dir), "--sigma", "1"],
        vec!["train", "--data", "/nonexistent/dataset", "--out", s(&out_dir)],
        vec!["encode", "--model", "m", "--data", s(&data), "--view", "3", "--out", "c"],
        vec!["frobnicate"],
    ];
    for args in cases {
        assert_eq!(xvh(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn encode_round_trips_and_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 9);
    let run = dir.path().join("run");
    ok(&["train", "--data", s(&data), "--out", s(&run), "--max-iter", "5"]);
    let model_path = run.join("model.bin");
    let model = HashModel::load(&model_path).unwrap();
    let ds = load_dataset(&data).unwrap();
    for v in ["1", "2"] {
        let codes = dir.path().join(format!("c{v}.bin"));
        ok(&["encode", "--model", s(&model_path), "--data", s(&data), "--view", v, "--out", s(&codes)]);
        let view: usize = v.parse().unwrap();
        assert_eq!(load_codes(&codes).unwrap(), model.encode(ds.view(view).values(), view).unwrap());
    }

    // A dataset whose views are swapped no longer matches the model's dimensions.
    let other = dir.path().join("narrow");
    ok(&["synth", "--d1", "5", "--d2", "6", "--out", s(&other)]);
    let out = xvh(&["encode", "--model", s(&model_path), "--data", s(&other), "--view", "1", "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = xvh(&["encode", "--model", s(&model_path), "--data", s(&empty), "--view", "1", "--out", s(&dir.path().join("y"))]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn sweep_and_report_write_figure_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 10);
    let sw = dir.path().join("sweep");
    ok(&[
        "sweep", "--data", s(&data), "--out", s(&sw), "--beta", "0.1,1", "--gamma", "1,10", "--labeled", "0.5,1",
        "--paired", "0.5,1", "--max-iter", "5",
    ]);
    let grid = fs::read_to_string(sw.join("sweep.csv")).unwrap();
    assert_eq!(grid.lines().count(), 5);
    let report = dir.path().join("report");
    ok(&["report", "--sweep", s(&sw), "--out", s(&report)]);
    for (f, rows) in [
        ("fig2_labeled.csv", 2),
        ("fig3_paired.csv", 2),
        ("fig5_beta_gamma.csv", 4),
    ] {
        let text = fs::read_to_string(report.join(f)).unwrap();
        assert_eq!(text.lines().count(), rows + 1, "{f}");
    }
    let conv = fs::read_to_string(report.join("fig4_convergence.csv")).unwrap();
    assert!(conv.starts_with("iteration,objective,relative_change\n0,"));

    let missing = xvh(&["report", "--sweep", s(&dir.path().join("nothing"))]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 12);
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let run = dir.path().join(format!("t{threads}"));
        ok(&["--threads", threads, "train", "--data", s(&data), "--out", s(&run), "--seed", "5"]);
        ok(&["--threads", threads, "eval", "--run", s(&run), "--data", s(&data)]);
        let codes = run.join("codes.bin");
        ok(&[
            "--threads", threads, "encode", "--model", s(&run.join("model.bin")), "--data", s(&data), "--view", "2",
            "--out", s(&codes),
        ]);
        outputs.push(files(&run));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn solver_flags_reach_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 13);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["train", "--data", s(&data), "--out", s(&a), "--max-iter", "4", "--q-step", "gauss-seidel"]);
    ok(&["train", "--data", s(&data), "--out", s(&b), "--max-iter", "4"]);
    assert_ne!(fs::read(a.join("model.bin")).unwrap(), fs::read(b.join("model.bin")).unwrap());
    let cfg = SolverConfig::default();
    assert!(fs::read_to_string(b.join("config.txt")).unwrap().contains(&format!("q-step={}\n", cfg.q_step.as_str())));
}
