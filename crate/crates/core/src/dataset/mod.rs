//! Semi-paired two-view data with partial labels.
//!
//! Objects are indexed globally in the order (unpaired view-1, paired,
//! unpaired view-2). With `n1` view-1 rows, `n2` view-2 rows and `n0` pairs:
//!
//! ```text
//! globals  [0, n1 - n0)      view-1 only          view-1 rows [0, n1 - n0)
//!          [n1 - n0, n1)     both views           view-1 rows [n1 - n0, n1), view-2 rows [0, n0)
//!          [n1, n)           view-2 only          view-2 rows [n0, n2)
//! ```
//!
//! so view-2 row `j` is always global `n1 - n0 + j`. The per-view selection
//! operators of the relaxed objective are these contiguous ranges and are
//! never materialized.

mod io;
mod synth;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::seed::rng_from;
use crate::{Error, Result};

pub use io::{load_dataset, parse_key_values, save_dataset};
pub use synth::{generate_synthetic, SyntheticSpec};

/// Label semantics: one class per labeled sample, or any non-empty class set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    Single,
    Multi,
}

impl LabelMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabelMode::Single => "single",
            LabelMode::Multi => "multi",
        }
    }
}

impl std::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "single" => Ok(LabelMode::Single),
            "multi" => Ok(LabelMode::Multi),
            other => Err(Error::Format(format!("unknown label mode '{other}'"))),
        }
    }
}

/// Dense feature matrix of one view, rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMatrix(DMatrix<f64>);

impl ViewMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("view matrix"));
        }
        Ok(Self(values))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn column_means(&self) -> DVector<f64> {
        if self.rows() == 0 {
            return DVector::zeros(self.cols());
        }
        self.0.row_mean().transpose()
    }

    fn centered(&self, mean: &DVector<f64>) -> ViewMatrix {
        let mut out = self.0.clone();
        for mut row in out.row_iter_mut() {
            row -= mean.transpose();
        }
        ViewMatrix(out)
    }

    fn select_rows(&self, rows: &[usize]) -> ViewMatrix {
        ViewMatrix(self.0.select_rows(rows.iter()))
    }
}

/// Binary `n x c` label matrix; all-zero rows are unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    values: DMatrix<f64>,
    labeled: Vec<bool>,
    mode: LabelMode,
}

impl LabelMatrix {
    pub fn new(values: DMatrix<f64>, mode: LabelMode) -> Result<Self> {
        let mut labeled = Vec::with_capacity(values.nrows());
        for (i, row) in values.row_iter().enumerate() {
            let mut ones = 0;
            for &v in row.iter() {
                if v == 1.0 {
                    ones += 1;
                } else if v != 0.0 {
                    return Err(Error::Format(format!("non-binary label entry {v} in row {i}")));
                }
            }
            if mode == LabelMode::Single && ones > 1 {
                return Err(Error::Format(format!(
                    "row {i} has {ones} labels in single-label mode"
                )));
            }
            labeled.push(ones > 0);
        }
        Ok(Self {
            values,
            labeled,
            mode,
        })
    }

    /// One-hot matrix from class indices; `None` marks unlabeled samples.
    pub fn from_classes(classes: &[Option<usize>], c: usize) -> Result<Self> {
        let mut values = DMatrix::zeros(classes.len(), c);
        for (i, cls) in classes.iter().enumerate() {
            if let Some(k) = *cls {
                if k >= c {
                    return Err(Error::Format(format!("class {k} out of range for c={c}")));
                }
                values[(i, k)] = 1.0;
            }
        }
        Self::new(values, LabelMode::Single)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn c(&self) -> usize {
        self.values.ncols()
    }

    pub fn mode(&self) -> LabelMode {
        self.mode
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labeled_mask(&self) -> &[bool] {
        &self.labeled
    }

    pub fn is_labeled(&self, i: usize) -> bool {
        self.labeled[i]
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled.iter().filter(|&&b| b).count()
    }

    pub fn has_class(&self, i: usize, k: usize) -> bool {
        self.values[(i, k)] == 1.0
    }

    /// Classes of row `i` as a bitmask-free list.
    pub fn classes_of(&self, i: usize) -> Vec<usize> {
        (0..self.c()).filter(|&k| self.has_class(i, k)).collect()
    }

    /// Number of labeled samples carrying each class.
    pub fn class_counts(&self) -> Vec<usize> {
        (0..self.c())
            .map(|k| (0..self.n()).filter(|&i| self.has_class(i, k)).count())
            .collect()
    }

    /// Rows in the given order.
    pub fn select(&self, rows: &[usize]) -> LabelMatrix {
        LabelMatrix {
            values: self.values.select_rows(rows.iter()),
            labeled: rows.iter().map(|&i| self.labeled[i]).collect(),
            mode: self.mode,
        }
    }

    /// Copy with rows outside `keep` cleared to unlabeled.
    pub fn masked(&self, keep: &[bool]) -> LabelMatrix {
        let mut values = self.values.clone();
        for (i, &k) in keep.iter().enumerate() {
            if !k {
                values.row_mut(i).fill(0.0);
            }
        }
        let labeled = self.labeled.iter().zip(keep).map(|(&l, &k)| l && k).collect();
        LabelMatrix {
            values,
            labeled,
            mode: self.mode,
        }
    }
}

/// Column means subtracted from each view by [`SemiPairedDataset::center_views`].
#[derive(Debug, Clone, PartialEq)]
pub struct CenteringStats {
    pub mean1: DVector<f64>,
    pub mean2: DVector<f64>,
}

/// Two feature views with partial pairing and partial labels.
///
/// `labels` holds the supervision visible to training. `truth`, when present,
/// is the complete ground truth used for relevance judgments and for
/// re-sampling the labeled subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiPairedDataset {
    view1: ViewMatrix,
    view2: ViewMatrix,
    n0: usize,
    labels: LabelMatrix,
    truth: Option<LabelMatrix>,
    centering: Option<CenteringStats>,
}

/// One object in a re-assembled dataset: source rows in each view plus the
/// source global index its labels come from.
#[derive(Debug, Clone, Copy)]
struct Part {
    v1: Option<usize>,
    v2: Option<usize>,
    label_src: usize,
}

impl SemiPairedDataset {
    pub fn new(
        view1: ViewMatrix,
        view2: ViewMatrix,
        n0: usize,
        labels: LabelMatrix,
        truth: Option<LabelMatrix>,
    ) -> Result<Self> {
        let (n1, n2) = (view1.rows(), view2.rows());
        if n0 > n1.min(n2) {
            return Err(Error::InvalidConfig(format!(
                "pair count exceeds view size: n0={n0}, n1={n1}, n2={n2}"
            )));
        }
        let n = n1 + n2 - n0;
        if labels.n() != n {
            return Err(Error::Dimension(format!("labels have {} rows, expected n={n}", labels.n())));
        }
        if let Some(t) = &truth {
            if t.n() != n || t.c() != labels.c() {
                return Err(Error::Dimension(format!(
                    "truth is {}x{}, expected {n}x{}",
                    t.n(),
                    t.c(),
                    labels.c()
                )));
            }
        }
        Ok(Self {
            view1,
            view2,
            n0,
            labels,
            truth,
            centering: None,
        })
    }

    pub fn n1(&self) -> usize {
        self.view1.rows()
    }

    pub fn n2(&self) -> usize {
        self.view2.rows()
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn n(&self) -> usize {
        self.n1() + self.n2() - self.n0
    }

    pub fn d1(&self) -> usize {
        self.view1.cols()
    }

    pub fn d2(&self) -> usize {
        self.view2.cols()
    }

    pub fn c(&self) -> usize {
        self.labels.c()
    }

    pub fn view1(&self) -> &ViewMatrix {
        &self.view1
    }

    pub fn view2(&self) -> &ViewMatrix {
        &self.view2
    }

    pub fn view(&self, v: usize) -> &ViewMatrix {
        match v {
            1 => &self.view1,
            2 => &self.view2,
            _ => panic!("view index must be 1 or 2, got {v}"),
        }
    }

    pub fn labels(&self) -> &LabelMatrix {
        &self.labels
    }

    pub fn truth(&self) -> Option<&LabelMatrix> {
        self.truth.as_ref()
    }

    /// Ground truth if available, otherwise the training labels.
    pub fn eval_labels(&self) -> &LabelMatrix {
        self.truth.as_ref().unwrap_or(&self.labels)
    }

    pub fn centering(&self) -> Option<&CenteringStats> {
        self.centering.as_ref()
    }

    /// Globals observed in view 1 (the rows of `T1`).
    pub fn view1_globals(&self) -> Range<usize> {
        0..self.n1()
    }

    /// Globals observed in view 2 (the rows of `T2`).
    pub fn view2_globals(&self) -> Range<usize> {
        self.n1() - self.n0..self.n()
    }

    pub fn view_globals(&self, v: usize) -> Range<usize> {
        match v {
            1 => self.view1_globals(),
            2 => self.view2_globals(),
            _ => panic!("view index must be 1 or 2, got {v}"),
        }
    }

    /// Globals observed in both views.
    pub fn paired_globals(&self) -> Range<usize> {
        self.n1() - self.n0..self.n1()
    }

    /// View-1 rows of the paired objects (`M1`).
    pub fn view1_pair_rows(&self) -> Range<usize> {
        self.n1() - self.n0..self.n1()
    }

    /// View-2 rows of the paired objects (`M2`).
    pub fn view2_pair_rows(&self) -> Range<usize> {
        0..self.n0
    }

    pub fn view1_to_global(&self, row: usize) -> usize {
        row
    }

    pub fn view2_to_global(&self, row: usize) -> usize {
        self.n1() - self.n0 + row
    }

    pub fn global_to_view1(&self, g: usize) -> Option<usize> {
        (g < self.n1()).then_some(g)
    }

    pub fn global_to_view2(&self, g: usize) -> Option<usize> {
        let off = self.n1() - self.n0;
        (g >= off && g < self.n()).then(|| g - off)
    }

    pub fn is_paired(&self, g: usize) -> bool {
        self.paired_globals().contains(&g)
    }

    /// Subtracts each view's column means; the means accumulate in
    /// [`CenteringStats`] so query data can be centered with training statistics.
    pub fn center_views(&self) -> SemiPairedDataset {
        let m1 = self.view1.column_means();
        let m2 = self.view2.column_means();
        let stats = match &self.centering {
            Some(prev) => CenteringStats {
                mean1: &prev.mean1 + &m1,
                mean2: &prev.mean2 + &m2,
            },
            None => CenteringStats {
                mean1: m1.clone(),
                mean2: m2.clone(),
            },
        };
        SemiPairedDataset {
            view1: self.view1.centered(&m1),
            view2: self.view2.centered(&m2),
            n0: self.n0,
            labels: self.labels.clone(),
            truth: self.truth.clone(),
            centering: Some(stats),
        }
    }

    fn parts(&self) -> Vec<Part> {
        (0..self.n())
            .map(|g| Part {
                v1: self.global_to_view1(g),
                v2: self.global_to_view2(g),
                label_src: g,
            })
            .collect()
    }

    /// Builds a dataset in canonical layout from object parts. Parts keep
    /// their relative order within each of the three blocks.
    fn assemble(&self, parts: &[Part], labels: &LabelMatrix) -> Result<SemiPairedDataset> {
        let text_only = parts.iter().filter(|p| p.v1.is_some() && p.v2.is_none());
        let paired: Vec<&Part> = parts.iter().filter(|p| p.v1.is_some() && p.v2.is_some()).collect();
        let image_only = parts.iter().filter(|p| p.v1.is_none() && p.v2.is_some());

        let ordered: Vec<&Part> = text_only
            .clone()
            .chain(paired.iter().copied())
            .chain(image_only.clone())
            .collect();
        let rows1: Vec<usize> = text_only
            .chain(paired.iter().copied())
            .map(|p| p.v1.unwrap())
            .collect();
        let rows2: Vec<usize> = paired
            .iter()
            .copied()
            .chain(image_only)
            .map(|p| p.v2.unwrap())
            .collect();
        let label_rows: Vec<usize> = ordered.iter().map(|p| p.label_src).collect();

        let mut out = SemiPairedDataset::new(
            self.view1.select_rows(&rows1),
            self.view2.select_rows(&rows2),
            paired.len(),
            labels.select(&label_rows),
            self.truth.as_ref().map(|t| t.select(&label_rows)),
        )?;
        out.centering = self.centering.clone();
        Ok(out)
    }

    /// Dataset restricted to the given globals (objects), in canonical layout.
    pub fn subset(&self, globals: &[usize]) -> Result<SemiPairedDataset> {
        let all = self.parts();
        let mut parts = Vec::with_capacity(globals.len());
        for &g in globals {
            let p = *all
                .get(g)
                .ok_or_else(|| Error::Dimension(format!("global {g} out of range n={}", self.n())))?;
            parts.push(p);
        }
        self.assemble(&parts, &self.labels)
    }

    /// Disjoint random split at the object level. Paired objects go wholly to
    /// one side; the train side receives `round(fraction * n)` objects.
    pub fn split_train_query(
        &self,
        train_fraction: f64,
        seed: u64,
    ) -> Result<(SemiPairedDataset, SemiPairedDataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let (train, query) = self.split_globals(train_fraction, seed);
        Ok((self.subset(&train)?, self.subset(&query)?))
    }

    /// Sorted global indices of the train and query sides of a split.
    pub fn split_globals(&self, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let n = self.n();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from(seed));
        let n_train = ((train_fraction * n as f64).round() as usize).min(n);
        let mut train = order[..n_train].to_vec();
        let mut query = order[n_train..].to_vec();
        train.sort_unstable();
        query.sort_unstable();
        (train, query)
    }

    /// Replaces the training labels with a random subset of the ground truth
    /// covering every class, of size `round(fraction * n)`.
    pub fn resample_labels(&self, fraction: f64, seed: u64) -> Result<SemiPairedDataset> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "labeled fraction must lie in (0, 1], got {fraction}"
            )));
        }
        let pool = self.eval_labels();
        let candidates: Vec<usize> = (0..self.n()).filter(|&i| pool.is_labeled(i)).collect();
        let target = ((fraction * self.n() as f64).round() as usize).min(candidates.len());
        let keep = choose_covering(pool, &candidates, target, seed)?;
        let mut out = self.clone();
        out.labels = pool.masked(&keep);
        Ok(out)
    }

    /// Keeps `round(fraction * n0)` randomly chosen pairs; every other pair is
    /// split into an unpaired view-1 object and an unpaired view-2 object, both
    /// inheriting the pair's labels.
    pub fn keep_pairs(&self, fraction: f64, seed: u64) -> Result<SemiPairedDataset> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "paired fraction must lie in (0, 1], got {fraction}"
            )));
        }
        let n_keep = (fraction * self.n0 as f64).round() as usize;
        let mut pair_ids: Vec<usize> = (0..self.n0).collect();
        pair_ids.shuffle(&mut rng_from(seed));
        let mut kept = vec![false; self.n0];
        for &j in &pair_ids[..n_keep] {
            kept[j] = true;
        }
        let mut parts = Vec::with_capacity(self.n() + self.n0 - n_keep);
        for p in self.parts() {
            match (p.v1, p.v2) {
                (Some(r1), Some(r2)) if !kept[r2] => {
                    parts.push(Part {
                        v1: Some(r1),
                        v2: None,
                        label_src: p.label_src,
                    });
                    parts.push(Part {
                        v1: None,
                        v2: Some(r2),
                        label_src: p.label_src,
                    });
                }
                _ => parts.push(p),
            }
        }
        self.assemble(&parts, &self.labels)
    }
}

/// Picks `target` rows from `candidates` such that every class of `pool`
/// appears among them. Fails when a class has no candidate or when
/// `target` is too small to cover all classes.
fn choose_covering(
    pool: &LabelMatrix,
    candidates: &[usize],
    target: usize,
    seed: u64,
) -> Result<Vec<bool>> {
    let mut rng = rng_from(seed);
    let mut order = candidates.to_vec();
    order.shuffle(&mut rng);
    let mut keep = vec![false; pool.n()];
    let mut chosen = 0;
    for k in 0..pool.c() {
        if order.iter().any(|&i| keep[i] && pool.has_class(i, k)) {
            continue;
        }
        let pick = order
            .iter()
            .copied()
            .find(|&i| pool.has_class(i, k))
            .ok_or_else(|| Error::InvalidConfig(format!("class {k} has no labeled sample")))?;
        keep[pick] = true;
        chosen += 1;
    }
    if chosen > target {
        return Err(Error::InvalidConfig(format!(
            "{target} labeled samples cannot cover all {} classes",
            pool.c()
        )));
    }
    for &i in &order {
        if chosen == target {
            break;
        }
        if !keep[i] {
            keep[i] = true;
            chosen += 1;
        }
    }
    Ok(keep)
}

/// Copies rows `range` of `m`.
pub fn rows_of(m: &DMatrix<f64>, range: Range<usize>) -> DMatrix<f64> {
    m.rows(range.start, range.len()).into_owned()
}
