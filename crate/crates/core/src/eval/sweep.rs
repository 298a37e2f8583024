use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use super::{aligned_table, train_and_evaluate, Protocol, Task};
use crate::dataset::SemiPairedDataset;
use crate::seed::{SeedFan, Stream};
use crate::{Error, Result};

/// β and γ values of the default grid.
pub const DEFAULT_GRID: [f64; 6] = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub beta: f64,
    pub gamma: f64,
    /// `(I→T, T→I)` MAP, or the failure message.
    pub outcome: std::result::Result<[f64; 2], String>,
}

impl SweepCell {
    pub fn map(&self, task: Task) -> Option<f64> {
        let i = Task::BOTH.iter().position(|&t| t == task).expect("known task");
        self.outcome.as_ref().ok().map(|m| m[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    /// Cells in row-major order over (β, γ).
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    /// Index of the highest-MAP cell for `task`; the first one wins ties.
    pub fn best(&self, task: Task) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.cells.iter().enumerate() {
            if let Some(m) = c.map(task) {
                if best.is_none_or(|(_, b)| m > b) {
                    best = Some((i, m));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }

    pub const CSV_HEADER: &'static str = "beta,gamma,map_i2t,map_t2i,status";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for c in &self.cells {
            let _ = match &c.outcome {
                Ok([a, b]) => writeln!(out, "{},{},{a},{b},ok", c.beta, c.gamma),
                Err(e) => writeln!(out, "{},{},,,\"failed: {}\"", c.beta, c.gamma, e.replace('"', "'")),
            };
        }
        out
    }

    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .map(|c| {
                let (a, b, s) = match &c.outcome {
                    Ok([a, b]) => (format!("{a:.4}"), format!("{b:.4}"), "ok".to_string()),
                    Err(e) => ("-".into(), "-".into(), format!("failed: {e}")),
                };
                vec![c.beta.to_string(), c.gamma.to_string(), a, b, s]
            })
            .collect();
        let mut out = aligned_table(&["beta", "gamma", "I→T", "T→I", "status"], &rows);
        for t in Task::BOTH {
            if let Some(i) = self.best(t) {
                let c = &self.cells[i];
                let _ = writeln!(
                    out,
                    "best {t}: beta={} gamma={} map={:.4}",
                    c.beta,
                    c.gamma,
                    c.map(t).expect("best cell succeeded")
                );
            }
        }
        out
    }
}

/// Trains and evaluates one model per (β, γ) cell on the same split.
/// A failing cell is recorded and the sweep continues.
pub fn sweep(
    ds: &SemiPairedDataset,
    betas: &[f64],
    gammas: &[f64],
    protocol: &Protocol,
) -> Result<SweepTable> {
    if betas.is_empty() || gammas.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    let (train_ds, query_ds) = protocol.split(ds)?;
    let grid: Vec<(f64, f64)> = betas
        .iter()
        .flat_map(|&b| gammas.iter().map(move |&g| (b, g)))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(beta, gamma)| {
            let mut p = protocol.clone();
            p.train.solver.beta = beta;
            p.train.solver.gamma = gamma;
            let outcome = train_and_evaluate(&train_ds, &query_ds, &p)
                .map(|(_, ev)| {
                    [
                        ev.map(Task::ImageToText).expect("both tasks run"),
                        ev.map(Task::TextToImage).expect("both tasks run"),
                    ]
                })
                .map_err(|e| {
                    log::warn!("sweep cell beta={beta} gamma={gamma} failed: {e}");
                    e.to_string()
                });
            SweepCell { beta, gamma, outcome }
        })
        .collect();
    Ok(SweepTable { cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FractionAxis {
    /// Share of training objects that keep their label.
    Labeled,
    /// Share of the training pairs that stay paired.
    Paired,
}

impl FractionAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Labeled => "labeled",
            Self::Paired => "paired",
        }
    }
}

impl FromStr for FractionAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labeled" => Ok(Self::Labeled),
            "paired" => Ok(Self::Paired),
            _ => Err(Error::InvalidConfig(format!("axis must be 'labeled' or 'paired', got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractionPoint {
    pub fraction: f64,
    pub map: [f64; 2],
}

/// Re-runs the protocol with the training side's labels (or pairs) reduced
/// to each fraction. The split is shared by all points.
pub fn fraction_sweep(
    ds: &SemiPairedDataset,
    axis: FractionAxis,
    fractions: &[f64],
    protocol: &Protocol,
) -> Result<Vec<FractionPoint>> {
    if let Some(f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::InvalidConfig(format!("fractions must lie in (0, 1], got {f}")));
    }
    let (train_ds, query_ds) = protocol.split(ds)?;
    let fan = SeedFan::new(protocol.seed());
    fractions
        .par_iter()
        .map(|&fraction| {
            let reduced = match axis {
                FractionAxis::Labeled => {
                    train_ds.resample_labels(fraction, fan.seed(Stream::LabelSubsample, 0))?
                }
                FractionAxis::Paired => train_ds.keep_pairs(fraction, fan.seed(Stream::PairSubsample, 0))?,
            };
            let (_, ev) = train_and_evaluate(&reduced, &query_ds, protocol)?;
            Ok(FractionPoint {
                fraction,
                map: [
                    ev.map(Task::ImageToText).expect("both tasks run"),
                    ev.map(Task::TextToImage).expect("both tasks run"),
                ],
            })
        })
        .collect()
}

pub const FRACTION_CSV_HEADER: &str = "axis,fraction,map_i2t,map_t2i";

pub fn fraction_csv(axis: FractionAxis, points: &[FractionPoint]) -> String {
    let mut out = format!("{FRACTION_CSV_HEADER}\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", axis.as_str(), p.fraction, p.map[0], p.map[1]);
    }
    out
}
