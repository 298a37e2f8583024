//! Dense kernels used by the solver: pseudoinverse, a Sylvester solver
//! for a symmetric right-hand coefficient, orthogonal Procrustes, ridged SPD
//! solves, and the two-weight simplex QP.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Floor on each view weight; keeps both weights strictly positive.
pub const THETA_MIN: f64 = 1e-4;

/// Relative pivot threshold below which a shifted Sylvester system counts as singular.
const SYLVESTER_PIVOT_TOL: f64 = 1e-12;

/// Relative singular-value cutoff used by the minimum-norm Sylvester fallback.
const MIN_NORM_RCOND: f64 = 1e-10;

/// Ridge added as `epsilon * I` to Gram matrices before inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgePolicy {
    pub epsilon: f64,
}

impl Default for RidgePolicy {
    fn default() -> Self {
        Self { epsilon: 1e-6 }
    }
}

impl RidgePolicy {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "ridge epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn svd(m: DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(m, true, true, 5.0 * f64::EPSILON, 0)
        .ok_or_else(|| Error::Singular("SVD failed to converge".into()))
}

fn pinv_with_cutoff(a: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>> {
    let (p, q) = a.shape();
    if p == 0 || q == 0 {
        return Ok(DMatrix::zeros(q, p));
    }
    if p == q && (a - a.transpose()).amax() <= 1e-13 * a.amax() {
        return Ok(symmetric_pinv(&((a + a.transpose()) * 0.5), rcond));
    }
    let dec = svd(a.clone())?;
    let u = dec.u.as_ref().expect("u requested");
    let v_t = dec.v_t.as_ref().expect("v_t requested");
    let s_max = dec.singular_values.max();
    let cutoff = rcond * s_max;
    let inv = dec.singular_values.map(|s| if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 });
    let mut vs = v_t.transpose();
    for (k, mut col) in vs.column_iter_mut().enumerate() {
        col *= inv[k];
    }
    let out = vs * u.transpose();
    Ok(out)
}

fn symmetric_pinv(a: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let s_max = eig.eigenvalues.amax();
    let cutoff = rcond * s_max;
    let mut scaled = eig.eigenvectors.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        let l = eig.eigenvalues[k];
        col *= if l.abs() > cutoff && l != 0.0 { 1.0 / l } else { 0.0 };
    }
    scaled * eig.eigenvectors.transpose()
}

/// Moore–Penrose pseudoinverse, dropping singular values below
/// `max(p, q) * eps * sigma_max`.
pub fn pinv(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_finite(a, "pinv input")?;
    let (p, q) = a.shape();
    pinv_with_cutoff(a, p.max(q) as f64 * f64::EPSILON)
}

/// Pseudoinverse dropping singular values below `rcond * sigma_max`.
pub fn pinv_rcond(a: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>> {
    check_finite(a, "pinv input")?;
    pinv_with_cutoff(a, rcond)
}

/// Solves `A X + X B = C` for symmetric positive semidefinite `B`.
///
/// `B = P D P^T` is diagonalized once; each column of `C P` is then solved
/// against the shifted matrix `A + d_j I` by LU, and the result rotated back.
/// A shift whose LU pivot falls below `1e-12` of the system scale is reported
/// as [`Error::IllPosedSylvester`].
pub fn sylvester_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (eig_vals, basis, c_rot) = sylvester_prepare(a, b, c)?;
    let p = a.nrows();
    let scale_a = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut x_rot = DMatrix::zeros(p, b.nrows());
    for (j, &shift) in eig_vals.iter().enumerate() {
        let mut shifted = a.clone();
        for i in 0..p {
            shifted[(i, i)] += shift;
        }
        let lu = shifted.lu();
        let u = lu.u();
        let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let scale = (scale_a + shift.abs()).max(f64::MIN_POSITIVE);
        if !(min_pivot > SYLVESTER_PIVOT_TOL * scale) {
            return Err(Error::IllPosedSylvester { shift });
        }
        let col = lu
            .solve(&c_rot.column(j).into_owned())
            .ok_or(Error::IllPosedSylvester { shift })?;
        x_rot.set_column(j, &col);
    }
    Ok(x_rot * basis.transpose())
}

/// Like [`sylvester_solve`], but each shifted system is solved in the
/// minimum-norm least-squares sense (SVD with relative cutoff `1e-10`).
/// Used when some `alpha + d_j` vanishes but the system is consistent.
pub fn sylvester_solve_min_norm(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (eig_vals, basis, c_rot) = sylvester_prepare(a, b, c)?;
    let p = a.nrows();
    let mut x_rot = DMatrix::zeros(p, b.nrows());
    for (j, &shift) in eig_vals.iter().enumerate() {
        let mut shifted = a.clone();
        for i in 0..p {
            shifted[(i, i)] += shift;
        }
        let inv = pinv_with_cutoff(&shifted, MIN_NORM_RCOND)?;
        x_rot.set_column(j, &(inv * c_rot.column(j)));
    }
    Ok(x_rot * basis.transpose())
}

fn sylvester_prepare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if !a.is_square() || !b.is_square() {
        return Err(Error::Dimension("Sylvester coefficients must be square".into()));
    }
    if c.nrows() != a.nrows() || c.ncols() != b.nrows() {
        return Err(Error::Dimension(format!(
            "Sylvester rhs is {}x{}, expected {}x{}",
            c.nrows(),
            c.ncols(),
            a.nrows(),
            b.nrows()
        )));
    }
    check_finite(a, "Sylvester A")?;
    check_finite(b, "Sylvester B")?;
    check_finite(c, "Sylvester C")?;
    let sym = (b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let c_rot = c * &eig.eigenvectors;
    Ok((eig.eigenvalues, eig.eigenvectors, c_rot))
}

/// Orthogonal `R` maximizing `Tr(R^T M)`: with `M = U S V^T`, `R = U V^T`.
pub fn orthogonal_procrustes(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension("Procrustes input must be square".into()));
    }
    check_finite(m, "Procrustes input")?;
    let dec = svd(m.clone())?;
    let u = dec.u.expect("u requested");
    let v_t = dec.v_t.expect("v_t requested");
    Ok(u * v_t)
}

/// Minimizes `t1*pi1 + t2*pi2 + lambda*(t1^2 + t2^2)` over `t1 + t2 = 1`,
/// `t_i >= THETA_MIN`.
pub fn simplex_qp(pi: [f64; 2], lambda: f64) -> Result<[f64; 2]> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!("lambda must be > 0, got {lambda}")));
    }
    if !pi[0].is_finite() || !pi[1].is_finite() {
        return Err(Error::NonFinite("view residuals"));
    }
    let t1 = (0.5 + (pi[1] - pi[0]) / (4.0 * lambda)).clamp(THETA_MIN, 1.0 - THETA_MIN);
    Ok([t1, 1.0 - t1])
}

/// Solves `(G + eps I) X = rhs` for symmetric PSD `G` by Cholesky, falling
/// back to the SVD pseudoinverse when the ridged matrix is not numerically
/// positive definite. The flag reports whether the fallback engaged.
pub fn ridged_spd_solve(
    gram: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    ridge: RidgePolicy,
) -> Result<(DMatrix<f64>, bool)> {
    let mut g = gram.clone();
    for i in 0..g.nrows() {
        g[(i, i)] += ridge.epsilon;
    }
    if let Some(ch) = g.clone().cholesky() {
        let x = ch.solve(rhs);
        if x.iter().all(|v| v.is_finite()) {
            return Ok((x, false));
        }
    }
    Ok((pinv(&g)? * rhs, true))
}

/// Inverse of `G + eps I` (same fallback rule as [`ridged_spd_solve`]).
pub fn ridged_spd_inverse(gram: &DMatrix<f64>, ridge: RidgePolicy) -> Result<(DMatrix<f64>, bool)> {
    ridged_spd_solve(gram, &DMatrix::identity(gram.nrows(), gram.nrows()), ridge)
}

/// `rows x cols` standard Gaussian matrix.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // Fill in row-major order so the draw sequence does not depend on storage layout.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Seeded Gaussian matrix with orthonormalized columns (or rows, when
/// `cols > rows`, since at most `rows` columns can be orthonormal).
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    if cols <= rows {
        let g = gaussian(rng, rows, cols);
        sign_fixed_q(g)
    } else {
        let g = gaussian(rng, cols, rows);
        sign_fixed_q(g).transpose()
    }
}

/// Thin QR Q-factor with the sign convention `diag(R) >= 0`, which makes the
/// result a deterministic function of its input.
fn sign_fixed_q(g: DMatrix<f64>) -> DMatrix<f64> {
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..q.ncols() {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}
