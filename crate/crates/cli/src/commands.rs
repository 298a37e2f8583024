use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use xvhash::codec::{save_codes, HashModel};
use xvhash::dataset::{generate_synthetic, load_dataset, save_dataset, SemiPairedDataset, SyntheticSpec};
use xvhash::eval::{
    aligned_table, fraction_csv, fraction_sweep, results_csv_row, run_cross_view_task, sweep, FractionAxis,
    RetrievalResult, DEFAULT_GRID, RESULTS_CSV_HEADER,
};
use xvhash::pipeline::train;
use xvhash::solver::ObjectiveTrace;

use crate::config::{RunArgs, RunConfig};
use crate::UsageError;

pub const MODEL_FILE: &str = "model.bin";
pub const SPLIT_FILE: &str = "split.csv";
pub const TRACE_FILE: &str = "trace.csv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load(dir: &Path) -> Result<SemiPairedDataset> {
    if !dir.is_dir() {
        return Err(UsageError(format!("dataset directory {} does not exist", dir.display())).into());
    }
    load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 220)]
    pub n1: usize,
    #[arg(long, default_value_t = 220)]
    pub n2: usize,
    #[arg(long, default_value_t = 120)]
    pub n0: usize,
    #[arg(long, default_value_t = 48)]
    pub d1: usize,
    #[arg(long, default_value_t = 40)]
    pub d2: usize,
    #[arg(long, default_value_t = 4)]
    pub c: usize,
    /// Share of objects that keep their label
    #[arg(long, default_value_t = 0.5)]
    pub labeled: f64,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.6)]
    pub spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n1: a.n1,
        n2: a.n2,
        n0: a.n0,
        d1: a.d1,
        d2: a.d2,
        c: a.c,
        labeled_fraction: a.labeled,
        noise_sigma: a.noise,
        cluster_spread: a.spread,
        seed: a.seed,
    };
    let ds = generate_synthetic(&spec)?;
    save_dataset(&ds, &a.out)?;
    println!(
        "wrote {}: n1={} n2={} n0={} c={} labeled={}",
        a.out.display(),
        ds.n1(),
        ds.n2(),
        ds.n0(),
        ds.c(),
        ds.labels().labeled_count()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the model, traces and split
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

fn write_split(path: &Path, train: &[usize], query: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["global", "side"])?;
    let mut rows: Vec<(usize, &str)> = train.iter().map(|&g| (g, "train")).collect();
    rows.extend(query.iter().map(|&g| (g, "query")));
    rows.sort_unstable();
    for (g, side) in rows {
        w.write_record([g.to_string().as_str(), side])?;
    }
    w.flush()?;
    Ok(())
}

fn read_split(path: &Path) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut train, mut query) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let g: usize = rec.get(0).unwrap_or("").parse().context("split: bad global index")?;
        match rec.get(1) {
            Some("train") => train.push(g),
            Some("query") => query.push(g),
            other => bail!("split: unknown side {other:?}"),
        }
    }
    Ok((train, query))
}

fn write_trace(path: &Path, trace: &ObjectiveTrace) -> Result<()> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf, false)?;
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn itq_csv(errors: &[Vec<f64>; 2]) -> String {
    let mut out = String::from("iteration,error_view1,error_view2\n");
    for (i, (a, b)) in errors[0].iter().zip(&errors[1]).enumerate() {
        out.push_str(&format!("{},{a},{b}\n", i + 1));
    }
    out
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let ds = load(&a.data)?;
    create_dir(&a.out)?;
    cfg.write_echo(&a.out)?;

    let p = &cfg.protocol;
    let (train_g, query_g) = p.split_globals(&ds);
    write_split(&a.out.join(SPLIT_FILE), &train_g, &query_g)?;
    let train_ds = ds.subset(&train_g)?;

    let t0 = Instant::now();
    let out = train(&train_ds, &p.train)?;
    out.model.save(a.out.join(MODEL_FILE))?;
    write_trace(&a.out.join(TRACE_FILE), &out.trace)?;
    write(&a.out.join("itq.csv"), &itq_csv(&out.itq_errors))?;

    let totals = out.trace.totals();
    println!(
        "trained r={} on {} objects ({} held out): {} iterations, {}, objective {:.6e}, m0={} k={}, {:.2}s",
        p.train.solver.r,
        train_g.len(),
        query_g.len(),
        totals.len() - 1,
        if out.trace.converged { "converged" } else { "not converged" },
        totals.last().copied().unwrap_or(f64::NAN),
        out.m0,
        out.k,
        t0.elapsed().as_secs_f64()
    );
    if !out.trace.converged {
        log::warn!("iteration limit reached before the relative change fell below {}", p.train.solver.rel_tol);
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// View to encode
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub view: u8,
    /// Code file to write
    #[arg(long)]
    pub out: PathBuf,
}

pub fn encode(a: &EncodeArgs) -> Result<()> {
    let model = HashModel::load(&a.model)?;
    let ds = load(&a.data)?;
    let v = a.view as usize;
    let codes = model
        .encode(ds.view(v).values(), v)
        .with_context(|| format!("encoding view {v} of {}", a.data.display()))?;
    save_codes(&codes, &a.out)?;
    println!("wrote {} codes of {} bits to {}", codes.n(), codes.r(), a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `train`
    #[arg(long)]
    pub run: PathBuf,
    /// Dataset the run was trained on
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory (default: the run directory)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: RunArgs,
}

pub fn results_table(results: &[RetrievalResult]) -> String {
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.task.to_string(),
                r.r_cut.to_string(),
                r.judge.as_str().to_string(),
                r.per_query_ap.len().to_string(),
                r.excluded.to_string(),
                format!("{:.4}", r.map),
            ]
        })
        .collect();
    aligned_table(&["task", "R", "judge", "queries", "excluded", "MAP"], &rows)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let mut args = a.cfg.clone();
    if args.config.is_none() {
        let echo = a.run.join("config.txt");
        if echo.exists() {
            args.config = Some(echo);
        }
    }
    let cfg: RunConfig = args.resolve()?;
    let model_path = a.run.join(MODEL_FILE);
    if !model_path.exists() {
        bail!("no model at {}; run `train` first", model_path.display());
    }
    let model = HashModel::load(&model_path)?;
    let ds = load(&a.data)?;
    let (train_g, query_g) = read_split(&a.run.join(SPLIT_FILE))?;
    let (train_ds, query_ds) = (ds.subset(&train_g)?, ds.subset(&query_g)?);
    let p = &cfg.protocol;
    let judge = p.judge_for(&train_ds);

    let results = cfg
        .task
        .tasks()
        .into_iter()
        .map(|t| run_cross_view_task(&model, &query_ds, &train_ds, t, p.r_cut, judge))
        .collect::<xvhash::Result<Vec<_>>>()?;

    let out = a.out.clone().unwrap_or_else(|| a.run.clone());
    create_dir(&out)?;
    let mut csv = format!("{RESULTS_CSV_HEADER}\n");
    for r in &results {
        csv.push_str(&results_csv_row(r));
        csv.push('\n');
    }
    write(&out.join("results.csv"), &csv)?;
    let table = results_table(&results);
    write(&out.join("results.txt"), &table)?;
    print!("{table}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Labeled fractions for the label curve
    #[arg(long, value_delimiter = ',', default_values_t = FRACTIONS)]
    pub labeled: Vec<f64>,
    /// Paired fractions for the pairing curve
    #[arg(long, value_delimiter = ',', default_values_t = FRACTIONS)]
    pub paired: Vec<f64>,
    /// Only run the beta/gamma grid
    #[arg(long)]
    pub grid_only: bool,
    /// Base settings; `--beta` and `--gamma` take comma-separated grids
    /// (default: 0.01,0.1,1,10,100,1000)
    #[command(flatten)]
    pub run: RunArgs,
}

const FRACTIONS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

pub fn sweep_cmd(a: &SweepArgs) -> Result<()> {
    let mut run = a.run.clone();
    let grid = |v: Vec<f64>| if v.is_empty() { DEFAULT_GRID.to_vec() } else { v };
    let betas = grid(std::mem::take(&mut run.beta));
    let gammas = grid(std::mem::take(&mut run.gamma));
    let cfg = run.resolve()?;
    let ds = load(&a.data)?;
    create_dir(&a.out)?;
    cfg.write_echo(&a.out)?;
    let p = &cfg.protocol;

    let t0 = Instant::now();
    let table = sweep(&ds, &betas, &gammas, p)?;
    write(&a.out.join("sweep.csv"), &table.to_csv())?;
    let text = table.to_text();
    write(&a.out.join("sweep.txt"), &text)?;
    print!("{text}");
    log::info!("grid of {} cells in {:.1}s", table.cells.len(), t0.elapsed().as_secs_f64());
    if table.failed() > 0 {
        log::warn!("{} of {} cells failed", table.failed(), table.cells.len());
    }

    let (train_ds, _) = p.split(&ds)?;
    let base = train(&train_ds, &p.train)?;
    write_trace(&a.out.join(TRACE_FILE), &base.trace)?;

    if !a.grid_only {
        for (axis, fractions, file) in [
            (FractionAxis::Labeled, &a.labeled, "labeled.csv"),
            (FractionAxis::Paired, &a.paired, "paired.csv"),
        ] {
            let points = fraction_sweep(&ds, axis, fractions, p)?;
            write(&a.out.join(file), &fraction_csv(axis, &points))?;
            for pt in &points {
                println!(
                    "{} {:.2}: I→T {:.4}  T→I {:.4}",
                    axis.as_str(),
                    pt.fraction,
                    pt.map[0],
                    pt.map[1]
                );
            }
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `sweep`
    #[arg(long)]
    pub sweep: PathBuf,
    /// Output directory (default: the sweep directory)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_table(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    if !path.exists() {
        bail!("missing {}; run `sweep` first", path.display());
    }
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    let rows = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

fn column(header: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow::anyhow!("{} has no column '{name}'", path.display()))
}

/// Copies the named columns of `src` into `dst` under new names.
fn project(src: &Path, dst: &Path, columns: &[(&str, &str)]) -> Result<usize> {
    let (header, rows) = read_table(src)?;
    let idx = columns
        .iter()
        .map(|(from, _)| column(&header, from, src))
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(dst).with_context(|| format!("writing {}", dst.display()))?;
    w.write_record(columns.iter().map(|(_, to)| *to))?;
    for row in &rows {
        w.write_record(idx.iter().map(|&i| row.get(i).unwrap_or("")))?;
    }
    w.flush()?;
    Ok(rows.len())
}

fn convergence(src: &Path, dst: &Path) -> Result<usize> {
    let (header, rows) = read_table(src)?;
    let (it, tot) = (column(&header, "iteration", src)?, column(&header, "total", src)?);
    let mut out = fs::File::create(dst).with_context(|| format!("writing {}", dst.display()))?;
    writeln!(out, "iteration,objective,relative_change")?;
    let mut prev: Option<f64> = None;
    for row in &rows {
        let v: f64 = row.get(tot).unwrap_or("").parse().context("trace: bad objective")?;
        let rel = prev.map_or(String::new(), |p| ((p - v).abs() / p.abs().max(f64::MIN_POSITIVE)).to_string());
        writeln!(out, "{},{v},{rel}", row.get(it).unwrap_or(""))?;
        prev = Some(v);
    }
    Ok(rows.len())
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let out = a.out.clone().unwrap_or_else(|| a.sweep.clone());
    create_dir(&out)?;
    let src = |f: &str| a.sweep.join(f);
    let fraction_cols = [("fraction", "fraction"), ("map_i2t", "map_i2t"), ("map_t2i", "map_t2i")];
    let grid_cols = [
        ("beta", "beta"),
        ("gamma", "gamma"),
        ("map_i2t", "map_i2t"),
        ("map_t2i", "map_t2i"),
        ("status", "status"),
    ];
    let made = [
        ("fig2_labeled.csv", project(&src("labeled.csv"), &out.join("fig2_labeled.csv"), &fraction_cols)?),
        ("fig3_paired.csv", project(&src("paired.csv"), &out.join("fig3_paired.csv"), &fraction_cols)?),
        ("fig4_convergence.csv", convergence(&src(TRACE_FILE), &out.join("fig4_convergence.csv"))?),
        ("fig5_beta_gamma.csv", project(&src("sweep.csv"), &out.join("fig5_beta_gamma.csv"), &grid_cols)?),
    ];
    for (name, rows) in made {
        println!("{}: {rows} rows", out.join(name).display());
    }
    Ok(())
}
