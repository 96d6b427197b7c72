use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const SMALL: &str = r#"
seed = 7

[scene]
n_objects = 4
episodes = 1

[model]
n_objects = 5
top_k = 2
d = 4
l_e = 1
l_i = 1
l_d = 1
hidden = 8

[train]
epochs = 2
window_step = 8
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_situate"));
    c.env_remove("SITUATE_CONFIG");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

fn gen(dir: &Path, out: &str, train: usize, test: usize) -> Output {
    let (tr, te) = (train.to_string(), test.to_string());
    run(&["--config", "small.toml", "gen", "--out", out, "--train", &tr, "--test", &te], dir)
}

fn sessions_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|e| e == "sits")).collect();
    v.sort();
    v
}

#[test]
fn gen_writes_full_corpus_reproducibly() {
    let ws = workspace();
    let a = gen(ws.path(), "a", 60, 10);
    assert!(a.status.success(), "{}", text(&a.stderr));
    assert_eq!(sessions_in(&ws.path().join("a")).len(), 70);
    let manifest = fs::read_to_string(ws.path().join("a/manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().filter(|l| !l.starts_with('#')).count(), 70);
    assert_eq!(manifest.lines().filter(|l| l.starts_with("test\t")).count(), 10);

    let b = gen(ws.path(), "b", 60, 10);
    assert!(b.status.success());
    for (x, y) in sessions_in(&ws.path().join("a")).iter().zip(sessions_in(&ws.path().join("b"))) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn unwritable_output_exits_2() {
    let ws = workspace();
    fs::write(ws.path().join("blocker"), b"file").unwrap();
    let out = gen(ws.path(), "blocker/corpus", 1, 1);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("blocker"), "{}", text(&out.stderr));
}

#[test]
fn config_errors_exit_2() {
    let ws = workspace();
    fs::write(ws.path().join("bad.toml"), "[train]\nepoch = 3\n").unwrap();
    let out = run(&["--config", "bad.toml", "config"], ws.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("epoch"));
    let missing = run(&["--config", "nope.toml", "config"], ws.path());
    assert_eq!(missing.status.code(), Some(2));
    assert!(text(&missing.stderr).contains("nope.toml"));
}

#[test]
fn env_var_and_overrides_feed_config() {
    let ws = workspace();
    let out =
        bin().args(["--set", "train.epochs=9", "config"]).env("SITUATE_CONFIG", ws.path().join("small.toml")).output().unwrap();
    assert!(out.status.success());
    let cfg = text(&out.stdout);
    assert!(cfg.contains("epochs = 9") && cfg.contains("seed = 7") && cfg.contains("top_k = 2"), "{cfg}");
}

#[test]
fn train_eval_predict_round() {
    let ws = workspace();
    let p = ws.path();
    assert!(gen(p, "data", 2, 1).status.success());

    let t = run(&["--config", "small.toml", "train", "--data", "data", "--run", "run"], p);
    assert!(t.status.success(), "{}", text(&t.stderr));
    for f in ["last.ckpt", "best.ckpt", "loss.csv"] {
        assert!(p.join("run").join(f).exists(), "{f}");
    }
    let loss = fs::read_to_string(p.join("run/loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 3);

    let e = run(
        &[
            "--config",
            "small.toml",
            "eval",
            "--data",
            "data",
            "--checkpoint",
            "run/last.ckpt",
            "--hard",
            "--baselines",
            "--per-window",
            "pw.csv",
        ],
        p,
    );
    assert!(e.status.success(), "{}", text(&e.stderr));
    let table = text(&e.stdout);
    let header = table.lines().nth(1).unwrap();
    let cols = ["Hand", "Head Dist", "Head Dir", "Gaze", "Object Center", "Object AP", "Hard Object Center", "Hard Object AP"];
    let pos: Vec<usize> = cols.iter().map(|c| header.find(c).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{header}");
    assert!(table.contains("const_velocity") && table.contains("gaze_ranking"));
    let kv = fs::read_to_string(p.join("run/metrics.kv")).unwrap();
    assert!(kv.lines().any(|l| l.starts_with("hard.object_ap=")));
    assert!(fs::read_to_string(p.join("pw.csv")).unwrap().starts_with("window,start,hand_mm"));

    let session = sessions_in(&p.join("data")).into_iter().find(|f| f.ends_with("test_000.sits")).unwrap();
    let session = session.to_str().unwrap();
    let pr = run(
        &[
            "--config",
            "small.toml",
            "predict",
            "--checkpoint",
            "run/last.ckpt",
            "--session",
            session,
            "--dump-adjacency",
            "adj.csv",
        ],
        p,
    );
    assert!(pr.status.success(), "{}", text(&pr.stderr));
    let w = run(&["--config", "small.toml", "windows", "--session", session], p);
    let n_windows = text(&w.stdout).lines().count();
    assert!(n_windows > 10);
    assert_eq!(text(&pr.stdout).lines().count(), n_windows);
    let adj = fs::read_to_string(p.join("adj.csv")).unwrap();
    assert_eq!(adj.lines().count(), 5 + 2);
    assert!(adj.lines().all(|l| l.split(',').count() == 7));

    let missing = run(&["--config", "small.toml", "eval", "--data", "data", "--checkpoint", "run/none.ckpt"], p);
    assert_eq!(missing.status.code(), Some(2));
    assert!(text(&missing.stderr).contains("none.ckpt"));
}

#[test]
fn stream_with_malformed_window_continues() {
    let ws = workspace();
    let p = ws.path();
    assert!(gen(p, "data", 1, 1).status.success());
    let t = run(&["--config", "small.toml", "--set", "train.epochs=1", "train", "--data", "data", "--run", "run"], p);
    assert!(t.status.success(), "{}", text(&t.stderr));
    let w = run(&["--config", "small.toml", "windows", "--session", "data/test_000.sits"], p);
    let mut lines: Vec<String> = text(&w.stdout).lines().take(10).map(String::from).collect();
    assert_eq!(lines.len(), 10);
    let half = lines[2].len() / 2;
    lines[2].truncate(half);

    let mut child = bin()
        .args(["--config", "small.toml", "predict", "--checkpoint", "run/last.ckpt", "--timing"])
        .current_dir(p)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(lines.join("\n").as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let records: Vec<Value> = text(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 10);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["window"].as_u64(), Some(i as u64));
        assert_eq!(r.get("error").is_some(), i == 2, "{r}");
    }
    let stderr = text(&out.stderr);
    assert_eq!(stderr.lines().filter(|l| l.starts_with("window ") && l.ends_with(" ms")).count(), 9);
}

#[test]
fn ablate_emits_three_rows_and_sweep() {
    let ws = workspace();
    let p = ws.path();
    assert!(gen(p, "data", 1, 1).status.success());
    let out = run(
        &[
            "--config",
            "small.toml",
            "--set",
            "train.epochs=1",
            "--set",
            "ablate.k_values=[1,2,3,4]",
            "ablate",
            "--data",
            "data",
            "--run",
            "run",
        ],
        p,
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    let table = text(&out.stdout);
    for name in ["full", "no_hierarchy", "vanilla_gcn"] {
        assert_eq!(table.lines().filter(|l| l.starts_with(name)).count(), 1, "{table}");
    }
    let csv = fs::read_to_string(p.join("run/ablation.csv")).unwrap();
    let blocks: Vec<&str> = csv.split("\n\n").collect();
    assert_eq!(blocks[0].lines().count(), 4);
    assert_eq!(blocks[1].lines().count(), 5);
}

#[test]
fn gradcheck_passes_and_names_injected_fault() {
    let ok = bin().args(["gradcheck", "--fresh"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", text(&ok.stdout));
    assert!(text(&ok.stdout).contains("full_model "));

    let bad = bin().args(["gradcheck", "--inject-fault", "loss_gaze"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(text(&bad.stderr).contains("loss_gaze"), "{}", text(&bad.stderr));
}
