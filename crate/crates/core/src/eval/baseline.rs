use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::codec::{HashModel, ViewHash};
use crate::dataset::{rows_of, SemiPairedDataset};
use crate::linalg::{gaussian, RidgePolicy};
use crate::seed::{SeedFan, Stream};
use crate::{Error, Result};

/// Seeded Gaussian projections with identity rotations and the dataset's
/// column means.
pub fn baseline_random_projection(ds: &SemiPairedDataset, r: usize, seed: u64) -> Result<HashModel> {
    let mut rng = SeedFan::new(seed).rng(Stream::Baseline, 0);
    let q1 = gaussian(&mut rng, ds.d1(), r);
    let q2 = gaussian(&mut rng, ds.d2(), r);
    HashModel::new(
        ViewHash {
            mean: ds.view1().column_means(),
            q: q1,
            rotation: DMatrix::identity(r, r),
        },
        ViewHash {
            mean: ds.view2().column_means(),
            q: q2,
            rotation: DMatrix::identity(r, r),
        },
    )
}

#[derive(Debug, Clone)]
pub struct CcaFit {
    pub model: HashModel,
    /// Leading canonical correlations, descending.
    pub correlations: Vec<f64>,
}

fn centered_with_mean(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = x.row_mean().transpose();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    (c, mean)
}

/// `f(C)` for symmetric `C` through its eigendecomposition.
fn sym_fn(c: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(c.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Top-`r` canonical directions of the paired subset, from the generalized
/// eigenproblem `Cxx⁻¹ Cxy Cyy⁻¹ Cyx a = ρ² a` on ridged covariances.
pub fn baseline_cca(ds: &SemiPairedDataset, r: usize, ridge: RidgePolicy) -> Result<CcaFit> {
    let n0 = ds.n0();
    if r == 0 {
        return Err(Error::InvalidConfig("code length must be >= 1".into()));
    }
    if n0 < r {
        return Err(Error::InvalidConfig(format!("CCA needs n0 >= r, got n0={n0}, r={r}")));
    }
    if r > ds.d1().min(ds.d2()) {
        return Err(Error::InvalidConfig(format!(
            "CCA yields at most min(d1, d2) = {} directions, asked for {r}",
            ds.d1().min(ds.d2())
        )));
    }
    let (x, mean1) = centered_with_mean(&rows_of(ds.view1().values(), ds.view1_pair_rows()));
    let (y, mean2) = centered_with_mean(&rows_of(ds.view2().values(), ds.view2_pair_rows()));
    let scale = 1.0 / n0 as f64;
    let ridged = |m: DMatrix<f64>| {
        let d = m.nrows();
        m + DMatrix::identity(d, d) * ridge.epsilon
    };
    let cxx = ridged(x.transpose() * &x * scale);
    let cyy = ridged(y.transpose() * &y * scale);
    let cxy = x.transpose() * &y * scale;

    let floor = 1e-300;
    let cxx_isqrt = sym_fn(&cxx, |l| 1.0 / l.max(floor).sqrt());
    let cyy_inv = sym_fn(&cyy, |l| 1.0 / l.max(floor));
    let k = &cxx_isqrt * &cxy * &cyy_inv * cxy.transpose() * &cxx_isqrt;
    let k = (&k + k.transpose()) * 0.5;
    let eig = SymmetricEigen::new(k);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut q1 = DMatrix::zeros(ds.d1(), r);
    let mut q2 = DMatrix::zeros(ds.d2(), r);
    let mut correlations = Vec::with_capacity(r);
    for (col, &i) in order.iter().take(r).enumerate() {
        let rho = eig.eigenvalues[i].max(0.0).sqrt();
        let a = &cxx_isqrt * eig.eigenvectors.column(i);
        let b = &cyy_inv * cxy.transpose() * &a;
        let b = if rho > 0.0 { b / rho } else { b };
        q1.set_column(col, &a);
        q2.set_column(col, &b);
        correlations.push(rho);
    }
    let model = HashModel::new(
        ViewHash {
            mean: mean1,
            q: q1,
            rotation: DMatrix::identity(r, r),
        },
        ViewHash {
            mean: mean2,
            q: q2,
            rotation: DMatrix::identity(r, r),
        },
    )?;
    Ok(CcaFit { model, correlations })
}
