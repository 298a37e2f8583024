//! Iterative quantization: an orthogonal rotation `R` that brings the
//! projected data `V` close to the vertices of the hypercube,
//! `min ‖B − V R‖²` over `B ∈ {−1, +1}` and orthogonal `R`.

use nalgebra::DMatrix;

use crate::linalg::{orthogonal_procrustes, random_orthonormal};
use crate::seed::rng_from;
use crate::{Error, Result};

pub const DEFAULT_ITERS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ItqResult {
    pub rotation: DMatrix<f64>,
    /// `‖B − V R‖²` after each iteration.
    pub errors: Vec<f64>,
}

/// `sign(V R)` with `sign(0) = +1`.
pub fn itq_update_b(v: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    (v * r).map(|x| if x >= 0.0 { 1.0 } else { -1.0 })
}

/// Orthogonal `R` minimizing `‖B − V R‖²`.
pub fn itq_update_r(v: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if v.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "projected data is {:?} but codes are {:?}",
            v.shape(),
            b.shape()
        )));
    }
    orthogonal_procrustes(&(v.transpose() * b))
}

pub fn quantization_error(v: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    (b - v * r).norm_squared()
}

/// Runs `iters` alternations from a seeded random rotation.
pub fn itq_fit(v: &DMatrix<f64>, iters: usize, seed: u64) -> Result<ItqResult> {
    let r0 = random_orthonormal(&mut rng_from(seed), v.ncols(), v.ncols());
    itq_fit_from(v, iters, r0)
}

/// Runs `iters` alternations of the code and rotation steps from `r0`.
pub fn itq_fit_from(v: &DMatrix<f64>, iters: usize, r0: DMatrix<f64>) -> Result<ItqResult> {
    if iters == 0 {
        return Err(Error::InvalidConfig("ITQ needs at least one iteration".into()));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("ITQ input"));
    }
    if r0.shape() != (v.ncols(), v.ncols()) {
        return Err(Error::Dimension(format!(
            "initial rotation must be {0}x{0}, got {1:?}",
            v.ncols(),
            r0.shape()
        )));
    }
    let mut r = r0;
    let mut errors = Vec::with_capacity(iters);
    for _ in 0..iters {
        let b = itq_update_b(v, &r);
        r = itq_update_r(v, &b)?;
        errors.push(quantization_error(v, &b, &r));
    }
    Ok(ItqResult { rotation: r, errors })
}
