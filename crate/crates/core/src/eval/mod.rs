//! Cross-view retrieval evaluation by MAP over the top `R` Hamming neighbors.
//!
//! View 1 plays the text role and view 2 the image role: `I→T` queries with
//! view-2 codes against a view-1 database, `T→I` the other way round.

mod baseline;
mod sweep;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::codec::{rank_by_hamming, BinaryCodes, HashModel};
use crate::dataset::{LabelMatrix, LabelMode, SemiPairedDataset};
use crate::pipeline::{train, TrainConfig, TrainOutput};
use crate::seed::{SeedFan, Stream};
use crate::{Error, Result};

pub use baseline::{baseline_cca, baseline_random_projection, CcaFit};
pub use sweep::{
    fraction_csv, fraction_sweep, sweep, FractionAxis, FractionPoint, SweepCell, SweepTable,
    DEFAULT_GRID, FRACTION_CSV_HEADER,
};

/// Default ranking cutoff.
pub const DEFAULT_R: usize = 50;

/// `(1/l) Σ_{m: rel_m} (hits in top m) / m` with `l` the number of hits;
/// zero when nothing relevant was retrieved.
pub fn average_precision(relevant: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (m, &rel) in relevant.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (m + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelevanceJudge {
    /// Same class.
    SingleLabel,
    /// At least one shared label.
    MultiLabel,
}

impl RelevanceJudge {
    pub fn for_mode(mode: LabelMode) -> Self {
        match mode {
            LabelMode::Single => Self::SingleLabel,
            LabelMode::Multi => Self::MultiLabel,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SingleLabel => "single",
            Self::MultiLabel => "multi",
        }
    }

    pub fn relevant(&self, a: &LabelMatrix, i: usize, b: &LabelMatrix, j: usize) -> bool {
        let (ca, cb) = (a.classes_of(i), b.classes_of(j));
        match self {
            Self::SingleLabel => !ca.is_empty() && ca == cb,
            Self::MultiLabel => ca.iter().any(|k| cb.contains(k)),
        }
    }
}

impl FromStr for RelevanceJudge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::SingleLabel),
            "multi" => Ok(Self::MultiLabel),
            _ => Err(Error::InvalidConfig(format!("judge must be 'single' or 'multi', got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    ImageToText,
    TextToImage,
}

impl Task {
    pub const BOTH: [Task; 2] = [Task::ImageToText, Task::TextToImage];

    pub fn query_view(&self) -> usize {
        match self {
            Task::ImageToText => 2,
            Task::TextToImage => 1,
        }
    }

    pub fn database_view(&self) -> usize {
        3 - self.query_view()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::ImageToText => "i2t",
            Task::TextToImage => "t2i",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::ImageToText => "I→T",
            Task::TextToImage => "T→I",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i2t" => Ok(Task::ImageToText),
            "t2i" => Ok(Task::TextToImage),
            _ => Err(Error::InvalidConfig(format!("task must be 'i2t' or 't2i', got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub task: Task,
    pub r_cut: usize,
    pub judge: RelevanceJudge,
    /// One entry per judged query, in query order.
    pub per_query_ap: Vec<f64>,
    pub map: f64,
    /// Queries skipped because they carry no label.
    pub excluded: usize,
    /// Free-form `key=value` description of the run.
    pub config: Vec<(String, String)>,
}

/// Scores every labeled query against the database.
pub fn evaluate_codes(
    queries: &BinaryCodes,
    query_labels: &LabelMatrix,
    database: &BinaryCodes,
    database_labels: &LabelMatrix,
    r_cut: usize,
    judge: RelevanceJudge,
) -> Result<(Vec<f64>, usize)> {
    if r_cut == 0 {
        return Err(Error::InvalidConfig("cutoff R must be >= 1".into()));
    }
    if query_labels.n() != queries.n() || database_labels.n() != database.n() {
        return Err(Error::Dimension("codes and labels have different row counts".into()));
    }
    let judged: Vec<usize> = (0..queries.n()).filter(|&i| query_labels.is_labeled(i)).collect();
    let aps = judged
        .par_iter()
        .map(|&i| {
            let top = rank_by_hamming(queries.row(i), database, r_cut)?;
            let flags: Vec<bool> = top
                .iter()
                .map(|&j| judge.relevant(query_labels, i, database_labels, j))
                .collect();
            Ok(average_precision(&flags))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((aps, queries.n() - judged.len()))
}

fn view_labels(ds: &SemiPairedDataset, view: usize) -> LabelMatrix {
    let rows: Vec<usize> = ds.view_globals(view).collect();
    ds.eval_labels().select(&rows)
}

/// Encodes the query view of `query_ds` and the database view of
/// `database_ds`, then scores the ranking. Labels come from the ground truth
/// when available.
pub fn run_cross_view_task(
    model: &HashModel,
    query_ds: &SemiPairedDataset,
    database_ds: &SemiPairedDataset,
    task: Task,
    r_cut: usize,
    judge: RelevanceJudge,
) -> Result<RetrievalResult> {
    let (qv, dv) = (task.query_view(), task.database_view());
    let queries = model.encode(query_ds.view(qv).values(), qv)?;
    let database = model.encode(database_ds.view(dv).values(), dv)?;
    if r_cut > database.n() {
        return Err(Error::InvalidConfig(format!(
            "cutoff R={r_cut} exceeds database size {}",
            database.n()
        )));
    }
    let (per_query_ap, excluded) = evaluate_codes(
        &queries,
        &view_labels(query_ds, qv),
        &database,
        &view_labels(database_ds, dv),
        r_cut,
        judge,
    )?;
    if excluded > 0 {
        log::info!("{task}: {excluded} unlabeled queries excluded");
    }
    let map = if per_query_ap.is_empty() {
        0.0
    } else {
        per_query_ap.iter().sum::<f64>() / per_query_ap.len() as f64
    };
    Ok(RetrievalResult {
        task,
        r_cut,
        judge,
        per_query_ap,
        map,
        excluded,
        config: Vec::new(),
    })
}

/// Held-out evaluation protocol shared by the sweeps and the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub train: TrainConfig,
    /// Fraction of objects held out as queries.
    pub query_fraction: f64,
    pub r_cut: usize,
    pub judge: Option<RelevanceJudge>,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            query_fraction: 0.2,
            r_cut: DEFAULT_R,
            judge: None,
        }
    }
}

impl Protocol {
    pub fn seed(&self) -> u64 {
        self.train.seed()
    }

    pub fn judge_for(&self, ds: &SemiPairedDataset) -> RelevanceJudge {
        self.judge.unwrap_or_else(|| RelevanceJudge::for_mode(ds.eval_labels().mode()))
    }

    fn split_seed(&self) -> u64 {
        SeedFan::new(self.seed()).seed(Stream::Split, 0)
    }

    /// Train and query datasets of the seeded split.
    pub fn split(&self, ds: &SemiPairedDataset) -> Result<(SemiPairedDataset, SemiPairedDataset)> {
        ds.split_train_query(1.0 - self.query_fraction, self.split_seed())
    }

    /// Sorted train and query globals of the same split as [`Protocol::split`].
    pub fn split_globals(&self, ds: &SemiPairedDataset) -> (Vec<usize>, Vec<usize>) {
        ds.split_globals(1.0 - self.query_fraction, self.split_seed())
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub results: Vec<RetrievalResult>,
}

impl Evaluation {
    pub fn map(&self, task: Task) -> Option<f64> {
        self.results.iter().find(|r| r.task == task).map(|r| r.map)
    }
}

/// Scores a trained model on both tasks, with the training side as database.
pub fn evaluate_model(
    model: &HashModel,
    train_ds: &SemiPairedDataset,
    query_ds: &SemiPairedDataset,
    protocol: &Protocol,
) -> Result<Evaluation> {
    let judge = protocol.judge_for(train_ds);
    let results = Task::BOTH
        .iter()
        .map(|&t| run_cross_view_task(model, query_ds, train_ds, t, protocol.r_cut, judge))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation { results })
}

/// Trains on an already split training side and evaluates on the query side.
pub fn train_and_evaluate(
    train_ds: &SemiPairedDataset,
    query_ds: &SemiPairedDataset,
    protocol: &Protocol,
) -> Result<(TrainOutput, Evaluation)> {
    let out = train(train_ds, &protocol.train)?;
    let ev = evaluate_model(&out.model, train_ds, query_ds, protocol)?;
    Ok((out, ev))
}

/// Split, train and evaluate in one call.
pub fn run_protocol(ds: &SemiPairedDataset, protocol: &Protocol) -> Result<(TrainOutput, Evaluation)> {
    let (train_ds, query_ds) = protocol.split(ds)?;
    train_and_evaluate(&train_ds, &query_ds, protocol)
}

/// CSV header matching [`results_csv_row`].
pub const RESULTS_CSV_HEADER: &str = "task,r_cut,judge,queries,excluded,map";

pub fn results_csv_row(r: &RetrievalResult) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.task.as_str(),
        r.r_cut,
        r.judge.as_str(),
        r.per_query_ap.len(),
        r.excluded,
        r.map
    )
}

/// Renders rows as a left-aligned text table.
pub fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}
