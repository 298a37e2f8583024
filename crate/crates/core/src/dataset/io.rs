//! Dataset directory format:
//!
//! - `view1.csv`, `view2.csv`: one sample per row, no header, decimal floats
//! - `labels.csv`: `n x c` binary entries in global order; zero rows are unlabeled
//! - `truth.csv` (optional): complete ground-truth labels, same shape as `labels.csv`
//! - `manifest`: `key=value` lines with `n1`, `n2`, `n0`, `c`, `d1`, `d2`, `mode`

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{LabelMatrix, LabelMode, SemiPairedDataset, ViewMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
struct Manifest {
    n1: usize,
    n2: usize,
    n0: usize,
    c: usize,
    d1: usize,
    d2: usize,
    mode: LabelMode,
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key=value", lineno + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl Manifest {
    fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let count = |key: &str| -> Result<usize> {
            let v = kv
                .get(key)
                .ok_or_else(|| Error::Format(format!("manifest is missing '{key}'")))?;
            v.parse()
                .map_err(|_| Error::Format(format!("manifest '{key}' is not a count: '{v}'")))
        };
        let mode = match kv.get("mode") {
            Some(m) => m.parse()?,
            None => LabelMode::Single,
        };
        Ok(Manifest {
            n1: count("n1")?,
            n2: count("n2")?,
            n0: count("n0")?,
            c: count("c")?,
            d1: count("d1")?,
            d2: count("d2")?,
            mode,
        })
    }

    fn render(&self) -> String {
        format!(
            "n1={}\nn2={}\nn0={}\nc={}\nd1={}\nd2={}\nmode={}\n",
            self.n1,
            self.n2,
            self.n0,
            self.c,
            self.d1,
            self.d2,
            self.mode.as_str()
        )
    }
}

fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "missing file"),
        ));
    }
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != cols {
            return Err(Error::Dimension(format!(
                "{}: row {} has {} columns, manifest says {cols}",
                path.display(),
                seen + 1,
                record.len()
            )));
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!("{}: '{field}' is not a number", path.display()))
            })?;
            data.push(v);
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Dimension(format!(
            "{}: {seen} rows, manifest says {rows}",
            path.display()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    for row in m.row_iter() {
        // `{}` on f64 prints the shortest representation that round-trips exactly.
        writer
            .write_record(row.iter().map(|v| format!("{v}")))
            .map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Loads a dataset directory and validates it against its manifest.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<SemiPairedDataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let m = Manifest::parse(&text)?;
    if m.n0 > m.n1.min(m.n2) {
        return Err(Error::InvalidConfig(format!(
            "pair count exceeds view size: n0={}, n1={}, n2={}",
            m.n0, m.n1, m.n2
        )));
    }
    let n = m.n1 + m.n2 - m.n0;
    let view1 = ViewMatrix::new(read_matrix(&dir.join("view1.csv"), m.n1, m.d1)?)?;
    let view2 = ViewMatrix::new(read_matrix(&dir.join("view2.csv"), m.n2, m.d2)?)?;
    let labels = LabelMatrix::new(read_matrix(&dir.join("labels.csv"), n, m.c)?, m.mode)?;
    let truth_path = dir.join("truth.csv");
    let truth = if truth_path.exists() {
        Some(LabelMatrix::new(read_matrix(&truth_path, n, m.c)?, m.mode)?)
    } else {
        None
    };
    SemiPairedDataset::new(view1, view2, m.n0, labels, truth)
}

/// Writes `ds` in the directory format read by [`load_dataset`].
pub fn save_dataset(ds: &SemiPairedDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        n1: ds.n1(),
        n2: ds.n2(),
        n0: ds.n0(),
        c: ds.c(),
        d1: ds.d1(),
        d2: ds.d2(),
        mode: ds.labels().mode(),
    };
    let mpath = dir.join("manifest");
    fs::write(&mpath, manifest.render()).map_err(|e| Error::io(&mpath, e))?;
    write_matrix(&dir.join("view1.csv"), ds.view1().values())?;
    write_matrix(&dir.join("view2.csv"), ds.view2().values())?;
    write_matrix(&dir.join("labels.csv"), ds.labels().values())?;
    if let Some(t) = ds.truth() {
        write_matrix(&dir.join("truth.csv"), t.values())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian;
    use crate::seed::rng_from;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn small_dir() -> tempfile::TempDir {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        write(d, "manifest", "n1=3\nn2=2\nn0=1\nc=2\nd1=2\nd2=1\nmode=single\n");
        write(d, "view1.csv", "1,2\n3,4\n5,6\n");
        write(d, "view2.csv", "7\n8\n");
        write(d, "labels.csv", "1,0\n0,0\n0,1\n1,0\n");
        tmp
    }

    #[test]
    fn loads_conforming_directory() {
        let tmp = small_dir();
        let ds = load_dataset(tmp.path()).unwrap();
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.labels().labeled_mask(), &[true, false, true, true]);
        assert!(ds.truth().is_none());
    }

    #[test]
    fn rejects_pair_count_over_view_size() {
        let tmp = small_dir();
        write(tmp.path(), "manifest", "n1=3\nn2=3\nn0=5\nc=2\nd1=2\nd2=1\n");
        let err = load_dataset(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("pair count exceeds view size"), "{err}");
    }

    #[test]
    fn rejects_missing_file_and_bad_shapes() {
        let tmp = small_dir();
        fs::remove_file(tmp.path().join("view2.csv")).unwrap();
        assert!(matches!(load_dataset(tmp.path()), Err(Error::Io { .. })));

        let tmp = small_dir();
        write(tmp.path(), "view1.csv", "1,2\n3,4\n");
        assert!(matches!(load_dataset(tmp.path()), Err(Error::Dimension(_))));

        let tmp = small_dir();
        write(tmp.path(), "view1.csv", "1,2,9\n3,4,9\n5,6,9\n");
        assert!(matches!(load_dataset(tmp.path()), Err(Error::Dimension(_))));
    }

    #[test]
    fn rejects_non_binary_labels() {
        let tmp = small_dir();
        write(tmp.path(), "labels.csv", "1,0\n0,0\n0,2\n1,0\n");
        assert!(matches!(load_dataset(tmp.path()), Err(Error::Format(_))));
    }

    #[test]
    fn save_then_load_round_trips_exactly() {
        let mut rng = rng_from(3);
        let classes: Vec<Option<usize>> = (0..9).map(|i| (i % 3 != 0).then_some(i % 2)).collect();
        let truth: Vec<Option<usize>> = (0..9).map(|i| Some(i % 2)).collect();
        let ds = SemiPairedDataset::new(
            ViewMatrix::new(gaussian(&mut rng, 6, 3) * 1e3).unwrap(),
            ViewMatrix::new(gaussian(&mut rng, 5, 4) * 1e-7).unwrap(),
            2,
            LabelMatrix::from_classes(&classes, 2).unwrap(),
            Some(LabelMatrix::from_classes(&truth, 2).unwrap()),
        )
        .unwrap()
        .center_views();
        let tmp = tempfile::tempdir().unwrap();
        save_dataset(&ds, tmp.path()).unwrap();
        let back = load_dataset(tmp.path()).unwrap();
        assert_eq!(back.view1().values(), ds.view1().values());
        assert_eq!(back.view2().values(), ds.view2().values());
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.truth(), ds.truth());
    }
}
