//! Anchor graph over semi-paired data.
//!
//! Anchors are paired training objects, so each anchor has a component in
//! both views and every sample can be compared with it regardless of which
//! view it was observed in. The sample-to-anchor affinity `Z` has at most `k`
//! nonzeros per row and rows summing to one; the induced similarity
//! `S = Z Λ⁻¹ Zᵀ` (with `Λ = diag(Zᵀ1)`) and Laplacian `L = I - S` are only
//! ever applied in factored form.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rayon::prelude::*;

use crate::dataset::SemiPairedDataset;
use crate::seed::rng_from;
use crate::{Error, Result};

/// Dense `S` / `L` are refused above this many samples.
pub const DENSE_LIMIT: usize = 2000;

/// Anchor count rule: 10% of the pairs when that exceeds fifty, fifty
/// otherwise, capped at the number of pairs.
pub fn default_m0(n0: usize) -> usize {
    let tenth = (n0 as f64 * 0.1).round() as usize;
    let m0 = if tenth > 50 { tenth } else { 50 };
    m0.min(n0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub anchors1: DMatrix<f64>,
    pub anchors2: DMatrix<f64>,
    /// Pair index `j` (view-2 row `j`) of each anchor, ascending.
    pub source_pairs: Vec<usize>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.source_pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_pairs.is_empty()
    }
}

/// Samples `m0` distinct paired objects uniformly without replacement.
pub fn select_anchors(ds: &SemiPairedDataset, m0: usize, seed: u64) -> Result<AnchorSet> {
    if ds.n0() == 0 {
        return Err(Error::InvalidConfig("anchor selection needs at least one pair".into()));
    }
    if m0 == 0 || m0 > ds.n0() {
        return Err(Error::InvalidConfig(format!(
            "anchor count must lie in [1, n0={}], got {m0}",
            ds.n0()
        )));
    }
    let mut picks = sample(&mut rng_from(seed), ds.n0(), m0).into_vec();
    picks.sort_unstable();
    let rows1: Vec<usize> = picks.iter().map(|&j| ds.view1_pair_rows().start + j).collect();
    Ok(AnchorSet {
        anchors1: ds.view1().values().select_rows(rows1.iter()),
        anchors2: ds.view2().values().select_rows(picks.iter()),
        source_pairs: picks,
    })
}

/// Kernel bandwidth choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaPolicy {
    /// Per view, `σ_v²` is the mean over that view's samples of the squared
    /// distance to their k-th nearest anchor.
    Auto,
    /// Fixed `(σ₁, σ₂)`.
    Fixed(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGraph {
    n: usize,
    m0: usize,
    k: usize,
    /// Row-major `n x k` anchor indices and weights.
    idx: Vec<usize>,
    val: Vec<f64>,
    lambda: Vec<f64>,
    sigma_sq: [f64; 2],
    kept: Vec<usize>,
}

fn sq_dist(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `rows x m0` squared distances between the rows of `x` and the anchors.
fn view_distances(x: &DMatrix<f64>, anchors: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            (0..anchors.nrows())
                .map(|j| sq_dist(x.row(i).iter().copied(), anchors.row(j).iter().copied()))
                .collect()
        })
        .collect()
}

fn kth_smallest(row: &[f64], k: usize) -> f64 {
    let mut v = row.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v[k - 1]
}

fn auto_sigma_sq(dist: &[Vec<f64>], k: usize, view: usize) -> Result<f64> {
    if dist.is_empty() {
        return Ok(1.0);
    }
    let s = dist.iter().map(|r| kth_smallest(r, k)).sum::<f64>() / dist.len() as f64;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::DegenerateSigma(format!(
            "view {view}: all sample-to-anchor distances are zero"
        )));
    }
    Ok(s)
}

/// Builds the affinity `Z` over every global sample of `ds`.
///
/// A sample observed in one view `v` is compared with anchor components of
/// that view only, `d² = ‖x − μ⁽ᵛ⁾‖² / σ_v²`; a paired sample averages the two
/// normalized distances. The `k` nearest anchors (ties to the lower index)
/// receive softmax weights `exp(−d²)`. Anchors that end up with zero total
/// weight are dropped with a warning so `Λ` stays invertible.
pub fn build_z(
    ds: &SemiPairedDataset,
    anchors: &AnchorSet,
    k: usize,
    sigma: SigmaPolicy,
) -> Result<AnchorGraph> {
    let m0 = anchors.len();
    if k == 0 || k > m0 {
        return Err(Error::InvalidConfig(format!("k must lie in [1, m0={m0}], got {k}")));
    }
    if anchors.anchors1.ncols() != ds.d1() || anchors.anchors2.ncols() != ds.d2() {
        return Err(Error::Dimension("anchor dimensions do not match the dataset".into()));
    }
    let dist1 = view_distances(ds.view1().values(), &anchors.anchors1);
    let dist2 = view_distances(ds.view2().values(), &anchors.anchors2);
    let sigma_sq = match sigma {
        SigmaPolicy::Auto => [auto_sigma_sq(&dist1, k, 1)?, auto_sigma_sq(&dist2, k, 2)?],
        SigmaPolicy::Fixed(s1, s2) => {
            if !(s1 > 0.0 && s2 > 0.0) || !s1.is_finite() || !s2.is_finite() {
                return Err(Error::DegenerateSigma(format!("fixed sigma must be > 0, got ({s1}, {s2})")));
            }
            [s1 * s1, s2 * s2]
        }
    };

    let n = ds.n();
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|g| {
            let r1 = ds.global_to_view1(g).map(|r| &dist1[r]);
            let r2 = ds.global_to_view2(g).map(|r| &dist2[r]);
            let d: Vec<f64> = (0..m0)
                .map(|j| match (r1, r2) {
                    (Some(a), Some(b)) => 0.5 * (a[j] / sigma_sq[0] + b[j] / sigma_sq[1]),
                    (Some(a), None) => a[j] / sigma_sq[0],
                    (None, Some(b)) => b[j] / sigma_sq[1],
                    (None, None) => unreachable!("every global is observed in some view"),
                })
                .collect();
            let mut order: Vec<usize> = (0..m0).collect();
            order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
            order.truncate(k);
            let dmin = d[order[0]];
            let w: Vec<f64> = order.iter().map(|&j| (-(d[j] - dmin)).exp()).collect();
            let total: f64 = w.iter().sum();
            (order, w.into_iter().map(|x| x / total).collect())
        })
        .collect();

    let mut idx = Vec::with_capacity(n * k);
    let mut val = Vec::with_capacity(n * k);
    let mut col_sum = vec![0.0; m0];
    for (o, w) in rows {
        for (&j, &x) in o.iter().zip(&w) {
            col_sum[j] += x;
        }
        idx.extend(o);
        val.extend(w);
    }

    let kept: Vec<usize> = (0..m0).filter(|&j| col_sum[j] > 0.0).collect();
    if kept.is_empty() {
        return Err(Error::Singular("no anchor received any affinity".into()));
    }
    if kept.len() < m0 {
        log::warn!(
            "dropping {} anchor(s) with zero affinity; m0 {} -> {}",
            m0 - kept.len(),
            m0,
            kept.len()
        );
        let mut remap = vec![usize::MAX; m0];
        for (new, &old) in kept.iter().enumerate() {
            remap[old] = new;
        }
        for (j, &x) in idx.iter_mut().zip(&val) {
            // Zero-weight entries of dropped anchors point at anchor 0 with weight 0.
            *j = if x > 0.0 { remap[*j] } else { remap[*j].min(kept.len() - 1) };
        }
    }
    let lambda = kept.iter().map(|&j| col_sum[j]).collect();
    Ok(AnchorGraph {
        n,
        m0: kept.len(),
        k,
        idx,
        val,
        lambda,
        sigma_sq,
        kept,
    })
}

impl AnchorGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `Λ = diag(Zᵀ1)`.
    pub fn lambda_diag(&self) -> &[f64] {
        &self.lambda
    }

    /// `(σ₁², σ₂²)` actually used.
    pub fn sigma_sq(&self) -> [f64; 2] {
        self.sigma_sq
    }

    /// Positions in the original anchor set of the anchors that survived.
    pub fn kept_anchors(&self) -> &[usize] {
        &self.kept
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let s = i * self.k;
        self.idx[s..s + self.k]
            .iter()
            .copied()
            .zip(self.val[s..s + self.k].iter().copied())
    }

    fn check_rows(&self, f: &DMatrix<f64>) -> Result<()> {
        if f.nrows() != self.n {
            return Err(Error::Dimension(format!(
                "operand has {} rows, graph has {} samples",
                f.nrows(),
                self.n
            )));
        }
        Ok(())
    }

    /// `Zᵀ F` (`m0 x c`).
    pub fn zt_mul(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(f)?;
        let mut out = DMatrix::zeros(self.m0, f.ncols());
        for i in 0..self.n {
            for (j, z) in self.row(i) {
                if z != 0.0 {
                    for c in 0..f.ncols() {
                        out[(j, c)] += z * f[(i, c)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// `Z H` (`n x c`) for `H` of shape `m0 x c`.
    pub fn z_mul(&self, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if h.nrows() != self.m0 {
            return Err(Error::Dimension(format!("operand has {} rows, expected m0={}", h.nrows(), self.m0)));
        }
        let mut out = DMatrix::zeros(self.n, h.ncols());
        for i in 0..self.n {
            for (j, z) in self.row(i) {
                for c in 0..h.ncols() {
                    out[(i, c)] += z * h[(j, c)];
                }
            }
        }
        Ok(out)
    }

    /// `Zᵀ diag(w) Z` (`m0 x m0`).
    pub fn zt_diag_z(&self, w: &[f64]) -> Result<DMatrix<f64>> {
        if w.len() != self.n {
            return Err(Error::Dimension("weight vector length must equal n".into()));
        }
        let mut out = DMatrix::zeros(self.m0, self.m0);
        for i in 0..self.n {
            let wi = w[i];
            for (a, za) in self.row(i) {
                for (b, zb) in self.row(i) {
                    out[(a, b)] += wi * za * zb;
                }
            }
        }
        Ok(out)
    }

    /// `S F = Z (Λ⁻¹ (Zᵀ F))` without forming `S`.
    pub fn similarity_apply(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut h = self.zt_mul(f)?;
        for (j, &l) in self.lambda.iter().enumerate() {
            h.row_mut(j).scale_mut(1.0 / l);
        }
        self.z_mul(&h)
    }

    /// `Tr(Fᵀ L F) = ‖F‖² − ‖Λ^{-1/2} Zᵀ F‖²`.
    pub fn laplacian_quadratic(&self, f: &DMatrix<f64>) -> Result<f64> {
        let h = self.zt_mul(f)?;
        let smooth: f64 = h
            .row_iter()
            .zip(&self.lambda)
            .map(|(row, &l)| row.norm_squared() / l)
            .sum();
        Ok(f.norm_squared() - smooth)
    }

    /// Dense `n x m0` affinity matrix.
    pub fn dense_z(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.n, self.m0);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                z[(i, j)] += v;
            }
        }
        z
    }

    /// Dense `S`; refused for `n > DENSE_LIMIT`.
    pub fn dense_similarity(&self) -> Result<DMatrix<f64>> {
        if self.n > DENSE_LIMIT {
            return Err(Error::InvalidConfig(format!(
                "refusing to materialize S for n={} > {DENSE_LIMIT}",
                self.n
            )));
        }
        let z = self.dense_z();
        let mut zl = z.clone();
        for (j, &l) in self.lambda.iter().enumerate() {
            zl.column_mut(j).scale_mut(1.0 / l);
        }
        Ok(zl * z.transpose())
    }
}
