//! Command-line interface.
//!
//! Exit codes: 0 success, 1 check failure (gradient check, divergence),
//! 2 usage, configuration or IO error.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use situate_core::datamodel::{make_hard_split, Window};
use situate_core::decoder::{forward, ModelParams};
use situate_core::dyngcn::window_dynamic_adjacency;
use situate_core::gradsuite::{run_gradient_suite, Fault, GRAD_TOL};
use situate_core::pipeline::{evaluate, evaluate_baselines, run_ablation_suite, train};
use situate_core::scenegen::generate_corpus;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{load_config, RunConfig};
use crate::corpus::{load_split, windows_of, write_corpus};
use crate::report;
use crate::session_io::read_session;
use crate::stream::{predict_stream, session_window_lines};
use crate::{Error, Result};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "situate", version, about = "Intention-aware prediction of gaze, motion and object interaction")]
pub struct Cli {
    /// TOML configuration file; defaults apply to missing keys.
    #[arg(long, global = true, env = "SITUATE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set train.epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Shorthand for `--set seed=N`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and its manifest.
    Gen {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        train: usize,
        #[arg(long, default_value_t = 10)]
        test: usize,
    },
    /// Train on the corpus train split; writes last.ckpt, best.ckpt, loss.csv.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also report the hard split.
        #[arg(long)]
        hard: bool,
        /// Add constant-velocity and gaze-ranking baseline rows.
        #[arg(long)]
        baselines: bool,
        /// Write per-window trajectory errors to this CSV.
        #[arg(long)]
        per_window: Option<PathBuf>,
        /// Directory for metrics.txt and metrics.kv (default: paths.run).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate the ablations and the K-sweep.
    Ablate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Predict windows from a session file or from window lines on stdin.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        session: Option<PathBuf>,
        /// Per-window latency on stderr.
        #[arg(long)]
        timing: bool,
        /// Write the dynamic adjacency of the first window as CSV.
        #[arg(long)]
        dump_adjacency: Option<PathBuf>,
    },
    /// Print the window lines of a session, for piping into `predict`.
    Windows {
        #[arg(long)]
        session: PathBuf,
    },
    /// Finite-difference check of every loss term, layer and the full model.
    Gradcheck {
        /// Use a time-derived seed instead of the configured one.
        #[arg(long)]
        fresh: bool,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

/// Failures that map to exit code 1.
#[derive(Debug)]
pub enum Outcome {
    Ok,
    CheckFailed(String),
}

pub fn main_with(cli: Cli) -> ExitCode {
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::from(EXIT_OK),
        Ok(Outcome::CheckFailed(msg)) => {
            eprintln!("situate: {msg}");
            ExitCode::from(EXIT_CHECK)
        }
        Err(Error::Core(e @ situate_core::Error::Diverged { .. })) => {
            eprintln!("situate: {e}");
            ExitCode::from(EXIT_CHECK)
        }
        Err(e) => {
            eprintln!("situate: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = load_config(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Gen { out, train, test } => cmd_gen(&cfg, out.as_deref().unwrap_or(&cfg.paths.data), train, test),
        Command::Train { data, run } => {
            cmd_train(&cfg, data.as_deref().unwrap_or(&cfg.paths.data), run.as_deref().unwrap_or(&cfg.paths.run))
        }
        Command::Eval { data, checkpoint, hard, baselines, per_window, out } => {
            let ckpt = checkpoint.unwrap_or_else(|| cfg.paths.run.join("best.ckpt"));
            cmd_eval(
                &cfg,
                data.as_deref().unwrap_or(&cfg.paths.data),
                &ckpt,
                EvalOptions { hard, baselines, per_window, out: out.unwrap_or_else(|| cfg.paths.run.clone()) },
            )
        }
        Command::Ablate { data, run } => {
            cmd_ablate(&cfg, data.as_deref().unwrap_or(&cfg.paths.data), run.as_deref().unwrap_or(&cfg.paths.run))
        }
        Command::Predict { checkpoint, session, timing, dump_adjacency } => {
            let ckpt = checkpoint.unwrap_or_else(|| cfg.paths.run.join("best.ckpt"));
            cmd_predict(&cfg, &ckpt, session.as_deref(), timing, dump_adjacency.as_deref())
        }
        Command::Windows { session } => cmd_windows(&cfg, &session),
        Command::Gradcheck { fresh, inject_fault } => cmd_gradcheck(&cfg, fresh, inject_fault.as_deref()),
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(Outcome::Ok)
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_gen(cfg: &RunConfig, out: &Path, n_train: usize, n_test: usize) -> Result<Outcome> {
    create_dir(out)?;
    let corpus = generate_corpus(&cfg.scene(), n_train, n_test)?;
    let entries = write_corpus(out, &corpus)?;
    let frames: usize = corpus.train.sessions.iter().chain(&corpus.test.sessions).map(|s| s.frames.len()).sum();
    println!(
        "wrote {} sessions ({n_train} train, {n_test} test, {frames} frames) and manifest to {}",
        entries.len(),
        out.display()
    );
    Ok(Outcome::Ok)
}

fn split_windows(cfg: &RunConfig, data: &Path, split: &str, step: usize) -> Result<Vec<Window>> {
    let sessions = load_split(data, split)?;
    windows_of(&sessions, &cfg.window(), cfg.model.n_objects, step)
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, run: &Path) -> Result<Outcome> {
    let windows = split_windows(cfg, data, "train", cfg.train.window_step)?;
    create_dir(run)?;
    let tc = cfg.train();
    eprintln!("training on {} windows for {} epochs", windows.len(), tc.epochs);
    let loss_path = run.join("loss.csv");
    let mut csv = report::loss_csv_header();
    csv.push('\n');
    write_file(&loss_path, &csv)?;
    let mut best = f64::INFINITY;
    let outcome = train(&windows, &tc, None, |r, params| {
        let line = report::loss_csv_row(r);
        csv.push_str(&line);
        csv.push('\n');
        let improved = r.total < best;
        if improved {
            best = r.total;
        }
        persist_epoch(run, &loss_path, &csv, params, improved).map_err(|e| situate_core::Error::Evaluation(e.to_string()))?;
        eprintln!("epoch {:>3}  lr {:.6}  loss {:.6}", r.epoch + 1, r.lr, r.total);
        Ok(())
    })?;
    if outcome.history.is_empty() {
        save_checkpoint(&run.join("last.ckpt"), &outcome.params)?;
    }
    println!("wrote {} and {}", run.join("last.ckpt").display(), loss_path.display());
    Ok(Outcome::Ok)
}

fn persist_epoch(run: &Path, loss_path: &Path, csv: &str, params: &ModelParams, improved: bool) -> Result<()> {
    write_file(loss_path, csv)?;
    save_checkpoint(&run.join("last.ckpt"), params)?;
    if improved {
        save_checkpoint(&run.join("best.ckpt"), params)?;
    }
    Ok(())
}

pub struct EvalOptions {
    pub hard: bool,
    pub baselines: bool,
    pub per_window: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn cmd_eval(cfg: &RunConfig, data: &Path, ckpt: &Path, opts: EvalOptions) -> Result<Outcome> {
    let params = load_checkpoint(ckpt, Some(&cfg.model()))?;
    let windows = split_windows(cfg, data, "test", 1)?;
    let all = evaluate(&params, &windows)?;
    let hard_windows = make_hard_split(&windows);
    let hard = if opts.hard && !hard_windows.is_empty() { Some(evaluate(&params, &hard_windows)?) } else { None };
    let mut kv = report::metrics_kv("", &all);
    if let Some(h) = &hard {
        kv.push_str(&report::metrics_kv("hard.", h));
    }
    let mut rows = vec![("model", &all, hard.as_ref())];
    let base;
    let base_hard;
    if opts.baselines {
        base = evaluate_baselines(&windows, cfg.model.t_f)?;
        base_hard =
            if opts.hard && !hard_windows.is_empty() { Some(evaluate_baselines(&hard_windows, cfg.model.t_f)?) } else { None };
        rows.push(("const_velocity", &base.0, base_hard.as_ref().map(|b| &b.0)));
        rows.push(("gaze_ranking", &base.1, base_hard.as_ref().map(|b| &b.1)));
        kv.push_str(&report::metrics_kv("const_velocity.", &base.0));
        kv.push_str(&report::metrics_kv("gaze_ranking.", &base.1));
    }
    let table = report::metrics_table(&rows);
    println!("{} test windows, {} in the hard split", windows.len(), hard_windows.len());
    print!("{table}");
    create_dir(&opts.out)?;
    write_file(&opts.out.join("metrics.txt"), &table)?;
    write_file(&opts.out.join("metrics.kv"), &kv)?;
    if let Some(path) = &opts.per_window {
        let mut csv = String::from(report::PER_WINDOW_HEADER);
        csv.push('\n');
        for (i, w) in windows.iter().enumerate() {
            let (_, pred) = forward(&w.obs, &params)?;
            csv.push_str(&report::per_window_row(i, &pred, w)?);
            csv.push('\n');
        }
        write_file(path, &csv)?;
    }
    Ok(Outcome::Ok)
}

pub fn cmd_ablate(cfg: &RunConfig, data: &Path, run: &Path) -> Result<Outcome> {
    let train_w = split_windows(cfg, data, "train", cfg.train.window_step)?;
    let test_w = split_windows(cfg, data, "test", 1)?;
    create_dir(run)?;
    let suite = run_ablation_suite(&train_w, &test_w, &cfg.train(), &cfg.suite(), |name, r| {
        eprintln!("{name:<12} epoch {:>3}  loss {:.6}", r.epoch + 1, r.total);
    })?;
    let text = report::ablation_tables(&suite);
    print!("{text}");
    write_file(&run.join("ablation.txt"), &text)?;
    write_file(&run.join("ablation.csv"), &report::ablation_csv(&suite))?;
    Ok(Outcome::Ok)
}

fn dump_adjacency(path: &Path, obs: &situate_core::datamodel::ObservationWindow, params: &ModelParams) -> Result<()> {
    let adj = window_dynamic_adjacency(obs, params)?;
    write_file(path, &adj.to_csv())
}

pub fn cmd_predict(cfg: &RunConfig, ckpt: &Path, session: Option<&Path>, timing: bool, dump: Option<&Path>) -> Result<Outcome> {
    let params = load_checkpoint(ckpt, Some(&cfg.model()))?;
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    let mut stderr = io::stderr();
    let timing_sink: Option<&mut dyn Write> = if timing { Some(&mut stderr) } else { None };
    let inspect = |i: usize, obs: &situate_core::datamodel::ObservationWindow| match dump {
        Some(path) if i == 0 => dump_adjacency(path, obs, &params),
        _ => Ok(()),
    };
    let summary = match session {
        Some(path) => {
            let lines = session_window_lines(&read_session(path)?, &cfg.window())?.join("\n");
            predict_stream(lines.as_bytes(), &mut out, &params, timing_sink, inspect)?
        }
        None => predict_stream(BufReader::new(io::stdin().lock()), &mut out, &params, timing_sink, inspect)?,
    };
    if timing && !summary.latencies_ms.is_empty() {
        let mean = summary.latencies_ms.iter().sum::<f64>() / summary.latencies_ms.len() as f64;
        eprintln!("mean latency {mean:.3} ms over {} windows", summary.latencies_ms.len());
    }
    if summary.failed > 0 {
        eprintln!("{} of {} windows failed", summary.failed, summary.failed + summary.predicted);
    }
    Ok(Outcome::Ok)
}

pub fn cmd_windows(cfg: &RunConfig, session: &Path) -> Result<Outcome> {
    let s = read_session(session)?;
    let mut out = io::BufWriter::new(io::stdout().lock());
    for line in session_window_lines(&s, &cfg.window())? {
        writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))?;
    }
    out.flush().map_err(|e| Error::io("<stdout>", e))?;
    Ok(Outcome::Ok)
}

pub fn cmd_gradcheck(cfg: &RunConfig, fresh: bool, fault: Option<&str>) -> Result<Outcome> {
    let fault = match fault {
        None => None,
        Some("loss_gaze") => Some(Fault::LossGazeSign),
        Some(other) => return Err(Error::Config(format!("unknown fault {other:?}"))),
    };
    let seed = if fresh { SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos() as u64) } else { cfg.seed };
    println!("gradient check, seed {seed}, tolerance {GRAD_TOL:e}");
    let results = run_gradient_suite(seed, fault)?;
    let mut failed = Vec::new();
    for r in &results {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!("{:<24} {:.3e}  {verdict}", r.name, r.max_rel_error);
        if !r.passed() {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::CheckFailed(format!("gradient check failed: {}", failed.join(", "))))
    }
}
