//! Hash functions, packed binary codes and Hamming ranking.
//!
//! A code row of `r` bits occupies `ceil(r / 64)` little-endian `u64`
//! words; bit `j` lives in word `j / 64` at position `j % 64` and unused high
//! bits are zero.
//!
//! Code file: `b"XVH1"`, `n: u32 LE`, `r: u32 LE`, then the words of all
//! rows in row-major order. Model file: `b"XVHM"`, `version: u32 LE`,
//! `r`, `d1`, `d2` as `u32 LE`, then per view the mean (`d` values), `Q`
//! (`d x r`, row-major) and `R` (`r x r`, row-major) as `f64 LE`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::{Error, Result};

const CODE_MAGIC: &[u8; 4] = b"XVH1";
const MODEL_MAGIC: &[u8; 4] = b"XVHM";
pub const MODEL_VERSION: u32 = 1;

/// Tolerance on `‖RᵀR − I‖` accepted for stored rotations.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// Linear hash function of one view: `x ↦ sign((x − mean) Q R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewHash {
    pub mean: DVector<f64>,
    pub q: DMatrix<f64>,
    pub rotation: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashModel {
    views: [ViewHash; 2],
    r: usize,
}

impl HashModel {
    pub fn new(view1: ViewHash, view2: ViewHash) -> Result<Self> {
        let r = view1.q.ncols();
        if r == 0 {
            return Err(Error::Dimension("code length must be >= 1".into()));
        }
        for (i, v) in [&view1, &view2].into_iter().enumerate() {
            let name = i + 1;
            if v.q.ncols() != r || v.rotation.shape() != (r, r) {
                return Err(Error::Dimension(format!(
                    "view {name}: Q is {:?} and R is {:?}, code length {r}",
                    v.q.shape(),
                    v.rotation.shape()
                )));
            }
            if v.mean.len() != v.q.nrows() {
                return Err(Error::Dimension(format!(
                    "view {name}: mean has {} entries, Q has {} rows",
                    v.mean.len(),
                    v.q.nrows()
                )));
            }
            let finite = v.mean.iter().chain(v.q.iter()).chain(v.rotation.iter()).all(|x| x.is_finite());
            if !finite {
                return Err(Error::NonFinite("hash model"));
            }
            let dev = (v.rotation.transpose() * &v.rotation - DMatrix::identity(r, r)).norm();
            if dev >= ORTHOGONALITY_TOL {
                return Err(Error::Format(format!(
                    "view {name}: rotation deviates from orthogonal by {dev:e}"
                )));
            }
        }
        Ok(Self { views: [view1, view2], r })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn dim(&self, view: usize) -> Result<usize> {
        Ok(self.view(view)?.q.nrows())
    }

    pub fn view(&self, view: usize) -> Result<&ViewHash> {
        match view {
            1 | 2 => Ok(&self.views[view - 1]),
            _ => Err(Error::InvalidConfig(format!("view must be 1 or 2, got {view}"))),
        }
    }

    /// Real-valued embedding `(X − mean) Q R` of a batch (one sample per row).
    pub fn embed(&self, x: &DMatrix<f64>, view: usize) -> Result<DMatrix<f64>> {
        let h = self.view(view)?;
        if x.ncols() != h.mean.len() {
            return Err(Error::Dimension(format!(
                "view {view} expects {} features, got {}",
                h.mean.len(),
                x.ncols()
            )));
        }
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= h.mean.transpose();
        }
        Ok(centered * &h.q * &h.rotation)
    }

    /// Encodes a batch; row `i` of the output is the code of row `i` of `x`.
    pub fn encode(&self, x: &DMatrix<f64>, view: usize) -> Result<BinaryCodes> {
        if x.nrows() == 0 {
            return Err(Error::Dimension("cannot encode an empty batch".into()));
        }
        BinaryCodes::from_signs(&self.embed(x, view)?)
    }

    pub fn encode_one(&self, x: &[f64], view: usize) -> Result<BinaryCodes> {
        self.encode(&DMatrix::from_row_slice(1, x.len(), x), view)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        for v in [MODEL_VERSION, self.r as u32, self.views[0].q.nrows() as u32, self.views[1].q.nrows() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for h in &self.views {
            h.mean.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
            push_row_major(&mut out, &h.q);
            push_row_major(&mut out, &h.rotation);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(bytes);
        if rd.take(4)? != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = rd.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let r = rd.u32()? as usize;
        let dims = [rd.u32()? as usize, rd.u32()? as usize];
        let mut views = Vec::with_capacity(2);
        for d in dims {
            let mean = DVector::from_vec(rd.f64s(d)?);
            let q = DMatrix::from_row_slice(d, r, &rd.f64s(d * r)?);
            let rotation = DMatrix::from_row_slice(r, r, &rd.f64s(r * r)?);
            views.push(ViewHash { mean, q, rotation });
        }
        if !rd.is_empty() {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        let v2 = views.pop().expect("two views");
        let v1 = views.pop().expect("two views");
        Self::new(v1, v2)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn push_row_major(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes }
    }

    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < k {
            return Err(Error::Format("file is truncated".into()));
        }
        let (head, tail) = self.bytes.split_at(k);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        (0..k).map(|_| self.u64().map(f64::from_bits)).collect()
    }

    fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

/// `n` rows of `r`-bit codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCodes {
    n: usize,
    r: usize,
    words: Vec<u64>,
}

pub fn words_per_row(r: usize) -> usize {
    r.div_ceil(64)
}

fn pad_mask(r: usize) -> u64 {
    match r % 64 {
        0 => u64::MAX,
        k => (1u64 << k) - 1,
    }
}

impl BinaryCodes {
    pub fn from_words(n: usize, r: usize, words: Vec<u64>) -> Result<Self> {
        if n == 0 || r == 0 {
            return Err(Error::Dimension(format!("codes need n, r >= 1, got n={n}, r={r}")));
        }
        let w = words_per_row(r);
        if words.len() != n * w {
            return Err(Error::Dimension(format!(
                "{} words for {n} rows of {r} bits, expected {}",
                words.len(),
                n * w
            )));
        }
        let mask = pad_mask(r);
        if words.chunks(w).any(|row| row[w - 1] & !mask != 0) {
            return Err(Error::Format("nonzero padding bits in code words".into()));
        }
        Ok(Self { n, r, words })
    }

    /// Bit `j` of row `i` is set when `m[(i, j)] > 0`.
    pub fn from_signs(m: &DMatrix<f64>) -> Result<Self> {
        let (n, r) = m.shape();
        let w = words_per_row(r);
        let rows: Vec<Vec<u64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0u64; w];
                for j in 0..r {
                    if m[(i, j)] > 0.0 {
                        row[j / 64] |= 1 << (j % 64);
                    }
                }
                row
            })
            .collect();
        Self::from_words(n, r, rows.concat())
    }

    pub fn from_bits(rows: &[Vec<bool>]) -> Result<Self> {
        let r = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|b| b.len() != r) {
            return Err(Error::Dimension("code rows have different lengths".into()));
        }
        let m = DMatrix::from_fn(rows.len(), r, |i, j| if rows[i][j] { 1.0 } else { 0.0 });
        Self::from_signs(&m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn row(&self, i: usize) -> &[u64] {
        let w = words_per_row(self.r);
        &self.words[i * w..(i + 1) * w]
    }

    pub fn bit(&self, i: usize, j: usize) -> bool {
        self.row(i)[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let words = rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Self::from_words(rows.len(), self.r, words)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.words.len());
        out.extend_from_slice(CODE_MAGIC);
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.r as u32).to_le_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(bytes);
        if rd.take(4)? != CODE_MAGIC {
            return Err(Error::Format("not a code file (bad magic)".into()));
        }
        let n = rd.u32()? as usize;
        let r = rd.u32()? as usize;
        let words = (0..n * words_per_row(r)).map(|_| rd.u64()).collect::<Result<Vec<_>>>()?;
        if !rd.is_empty() {
            return Err(Error::Format("trailing bytes after codes".into()));
        }
        Self::from_words(n, r, words)
    }
}

pub fn save_codes(codes: &BinaryCodes, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, codes.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_codes(path: impl AsRef<Path>) -> Result<BinaryCodes> {
    let path = path.as_ref();
    BinaryCodes::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Number of differing bits between two code rows.
pub fn hamming_distance(a: &[u64], b: &[u64]) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "code rows have {} and {} words",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum())
}

/// The `top_r` database rows closest to `query`, ordered by distance and
/// then by index.
pub fn rank_by_hamming(query: &[u64], db: &BinaryCodes, top_r: usize) -> Result<Vec<usize>> {
    Ok(rank_with_distances(query, db, top_r)?.into_iter().map(|(i, _)| i).collect())
}

/// [`rank_by_hamming`] with the distance of each returned row.
pub fn rank_with_distances(query: &[u64], db: &BinaryCodes, top_r: usize) -> Result<Vec<(usize, u32)>> {
    if query.len() != words_per_row(db.r) {
        return Err(Error::Dimension(format!(
            "query has {} words, database rows have {}",
            query.len(),
            words_per_row(db.r)
        )));
    }
    if top_r > db.n {
        return Err(Error::InvalidConfig(format!(
            "cutoff {top_r} exceeds database size {}",
            db.n
        )));
    }
    // Counting sort: buckets are filled in index order, so ties stay ascending.
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); db.r + 1];
    for i in 0..db.n {
        let d = hamming_distance(query, db.row(i))?;
        buckets[d as usize].push(i);
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .flat_map(|(d, idx)| idx.into_iter().map(move |i| (i, d as u32)))
        .take(top_r)
        .collect())
}
