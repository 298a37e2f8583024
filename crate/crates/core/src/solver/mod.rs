//! Alternating minimization of the relaxed training objective
//!
//! ```text
//! Tr(FᵀLF) + Tr[(F−Y)ᵀU(F−Y)] + Σ_v θ_v‖T_v F − X_v Q_v W‖² + β‖W‖²
//!     + γ‖M₁X₁Q₁ − M₂X₂Q₂‖² + λ‖θ‖²
//! ```
//!
//! over the label predictions `F`, classifier `W`, projections `Q₁`, `Q₂` and
//! view weights `θ`. Every block has a closed-form minimizer, so each pass
//! F → W → (Q₁, Q₂) → θ cannot increase the objective.

mod trace;

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dataset::{rows_of, SemiPairedDataset};
use crate::graph::AnchorGraph;
use crate::linalg::{
    pinv, pinv_rcond, random_orthonormal, ridged_spd_inverse, ridged_spd_solve, simplex_qp, sylvester_solve,
    sylvester_solve_min_norm, RidgePolicy, THETA_MIN,
};
use crate::seed::rng_from;
use crate::{Error, Result};

pub use trace::{ObjectiveTerms, ObjectiveTrace, TraceEntry};

/// Relative objective increase between passes that aborts [`fit`].
pub const ABORT_INCREASE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Code length.
    pub r: usize,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Finite stand-in for the infinite label-fidelity weight on labeled rows.
    pub u_large: f64,
    pub ridge: RidgePolicy,
    pub q_step: QStep,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            r: 32,
            beta: 1.0,
            gamma: 1.0,
            lambda: 1.0,
            u_large: 1e8,
            ridge: RidgePolicy::default(),
            q_step: QStep::Joint,
            max_iter: 50,
            rel_tol: 1e-5,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.r == 0 {
            return bad("code length r must be >= 1".into());
        }
        if !(self.beta >= 0.0) || !(self.gamma >= 0.0) {
            return bad(format!("beta and gamma must be >= 0, got {} and {}", self.beta, self.gamma));
        }
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(self.u_large > 0.0) || !self.u_large.is_finite() {
            return bad(format!("u_large must be positive and finite, got {}", self.u_large));
        }
        if !(self.rel_tol > 0.0) {
            return bad(format!("rel_tol must be > 0, got {}", self.rel_tol));
        }
        RidgePolicy::new(self.ridge.epsilon)?;
        Ok(())
    }
}

/// How the projection block `(Q₁, Q₂)` is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QStep {
    /// Both stationarity equations solved together: the exact minimizer over
    /// `(Q₁, Q₂)` jointly.
    #[default]
    Joint,
    /// One Sylvester solve for `Q₁` with `Q₂` fixed, then one for `Q₂` with
    /// the new `Q₁`.
    GaussSeidel,
}

impl QStep {
    pub fn as_str(&self) -> &'static str {
        match self {
            QStep::Joint => "joint",
            QStep::GaussSeidel => "gauss-seidel",
        }
    }
}

impl std::str::FromStr for QStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(QStep::Joint),
            "gauss-seidel" => Ok(QStep::GaussSeidel),
            _ => Err(Error::InvalidConfig(format!(
                "q-step must be 'joint' or 'gauss-seidel', got '{s}'"
            ))),
        }
    }
}

/// Solver state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `n x c` label predictions.
    pub f: DMatrix<f64>,
    /// `r x c` classifier.
    pub w: DMatrix<f64>,
    /// `d1 x r` projection of view 1.
    pub q1: DMatrix<f64>,
    /// `d2 x r` projection of view 2.
    pub q2: DMatrix<f64>,
    pub theta: [f64; 2],
}

impl ModelParams {
    pub fn q(&self, view: usize) -> &DMatrix<f64> {
        match view {
            1 => &self.q1,
            2 => &self.q2,
            _ => panic!("view index must be 1 or 2, got {view}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !(finite(&self.f) && finite(&self.w) && finite(&self.q1) && finite(&self.q2)) {
            return Err(Error::NonFinite("model parameters"));
        }
        let [a, b] = self.theta;
        if a.min(b) < THETA_MIN * (1.0 - 1e-9) || (a + b - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("theta ({a}, {b}) is off the simplex")));
        }
        Ok(())
    }
}

/// Block-coordinate solver bound to one centered dataset and its graph.
///
/// Gram matrices that stay fixed across iterations are factored once here.
pub struct Solver<'a> {
    ds: &'a SemiPairedDataset,
    graph: &'a AnchorGraph,
    cfg: SolverConfig,
    /// `(X_vᵀX_v + εI)⁻¹`
    gram_inv: [DMatrix<f64>; 2],
    /// `X_vᵀX_v + εI`
    gram: [DMatrix<f64>; 2],
    /// `X_vᵀ M_vᵀ M_v X_v`
    pair_gram: [DMatrix<f64>; 2],
    /// `X₁ᵀ M₁ᵀ M₂ X₂`
    cross: DMatrix<f64>,
    /// Paired rows of each view.
    pair_rows: [DMatrix<f64>; 2],
}

impl<'a> Solver<'a> {
    pub fn new(ds: &'a SemiPairedDataset, graph: &'a AnchorGraph, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if graph.n() != ds.n() {
            return Err(Error::Dimension(format!(
                "graph covers {} samples, dataset has {}",
                graph.n(),
                ds.n()
            )));
        }
        if ds.labels().labeled_count() == 0 {
            return Err(Error::InvalidConfig("training requires at least one labeled sample".into()));
        }
        let x1 = ds.view1().values();
        let x2 = ds.view2().values();
        let ridged = |x: &DMatrix<f64>| {
            let mut g = x.transpose() * x;
            for i in 0..g.nrows() {
                g[(i, i)] += cfg.ridge.epsilon;
            }
            g
        };
        let gram = [ridged(x1), ridged(x2)];
        let (g1, fb1) = ridged_spd_inverse(&gram[0], RidgePolicy { epsilon: 0.0 })?;
        let (g2, fb2) = ridged_spd_inverse(&gram[1], RidgePolicy { epsilon: 0.0 })?;
        if fb1 || fb2 {
            log::warn!("view Gram matrix singular after ridge; using pseudoinverse");
        }
        let p1 = rows_of(x1, ds.view1_pair_rows());
        let p2 = rows_of(x2, ds.view2_pair_rows());
        Ok(Self {
            ds,
            graph,
            gram_inv: [g1, g2],
            gram,
            pair_gram: [p1.transpose() * &p1, p2.transpose() * &p2],
            cross: p1.transpose() * &p2,
            pair_rows: [p1, p2],
            cfg,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn x(&self, v: usize) -> &DMatrix<f64> {
        self.ds.view(v).values()
    }

    /// `T_v F`
    fn view_rows(&self, f: &DMatrix<f64>, v: usize) -> DMatrix<f64> {
        rows_of(f, self.ds.view_globals(v))
    }

    /// F = Y, W = 0, orthonormal Gaussian projections, θ = (½, ½).
    pub fn init_params(&self) -> ModelParams {
        let (d1, d2, r) = (self.ds.d1(), self.ds.d2(), self.cfg.r);
        if r > d1.min(d2) {
            log::warn!("code length {r} exceeds feature dimension min({d1}, {d2}); projections are rank deficient");
        }
        let mut rng = rng_from(self.cfg.seed);
        let q1 = random_orthonormal(&mut rng, d1, r);
        let q2 = random_orthonormal(&mut rng, d2, r);
        ModelParams {
            f: self.ds.labels().values().clone(),
            w: DMatrix::zeros(r, self.ds.c()),
            q1,
            q2,
            theta: [0.5, 0.5],
        }
    }

    /// Diagonal of `I + U + Σ θ_v T_vᵀ T_v`.
    fn f_system_diag(&self, theta: [f64; 2]) -> Vec<f64> {
        let mask = self.ds.labels().labeled_mask();
        let r1 = self.ds.view1_globals();
        let r2 = self.ds.view2_globals();
        (0..self.ds.n())
            .map(|g| {
                let mut k = 1.0;
                if mask[g] {
                    k += self.cfg.u_large;
                }
                if r1.contains(&g) {
                    k += theta[0];
                }
                if r2.contains(&g) {
                    k += theta[1];
                }
                k
            })
            .collect()
    }

    /// `(L + U + Σ θ_v T_vᵀT_v) F` with `L` in factored form.
    fn f_system_apply(&self, diag: &[f64], f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = self.graph.similarity_apply(f)?;
        out.neg_mut();
        for (i, &k) in diag.iter().enumerate() {
            for c in 0..f.ncols() {
                out[(i, c)] += k * f[(i, c)];
            }
        }
        Ok(out)
    }

    /// Minimizes over `F`: solves
    /// `(L + U + Σθ_v T_vᵀT_v) F = U Y + Σ θ_v T_vᵀ X_v Q_v W`.
    ///
    /// The system matrix is `K − Z Λ⁻¹ Zᵀ` with `K` diagonal, so the
    /// Woodbury identity reduces it to one `m0 x m0` Cholesky solve; one step
    /// of iterative refinement follows.
    pub fn update_f(&self, p: &ModelParams) -> Result<DMatrix<f64>> {
        let ds = self.ds;
        let c = ds.c();
        let n = ds.n();
        let mut rhs = ds.labels().values() * self.cfg.u_large;
        for v in 1..=2 {
            let fit = self.x(v) * p.q(v) * &p.w;
            let off = ds.view_globals(v).start;
            for i in 0..fit.nrows() {
                for k in 0..c {
                    rhs[(off + i, k)] += p.theta[v - 1] * fit[(i, k)];
                }
            }
        }

        let diag = self.f_system_diag(p.theta);
        let kinv: Vec<f64> = diag.iter().map(|k| 1.0 / k).collect();
        let mut cap = self.graph.zt_diag_z(&kinv)?;
        cap.neg_mut();
        for (j, &l) in self.graph.lambda_diag().iter().enumerate() {
            cap[(j, j)] += l;
        }
        let chol = cap.clone().cholesky();
        let cap_pinv = if chol.is_none() {
            log::warn!("label-propagation capacitance matrix not positive definite; using pseudoinverse");
            Some(pinv(&cap)?)
        } else {
            None
        };
        let solve = |b: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            let mut kb = b.clone();
            for i in 0..n {
                kb.row_mut(i).scale_mut(kinv[i]);
            }
            let h = self.graph.zt_mul(&kb)?;
            let h = match (&chol, &cap_pinv) {
                (Some(ch), _) => ch.solve(&h),
                (None, Some(pi)) => pi * h,
                (None, None) => unreachable!(),
            };
            let mut corr = self.graph.z_mul(&h)?;
            for i in 0..n {
                corr.row_mut(i).scale_mut(kinv[i]);
            }
            Ok(kb + corr)
        };
        let mut f = solve(&rhs)?;
        let resid = &rhs - self.f_system_apply(&diag, &f)?;
        f += solve(&resid)?;
        Ok(f)
    }

    /// Minimizes over `W`:
    /// `W = (Σθ_v Q_vᵀX_vᵀX_vQ_v + βI)⁻¹ Σθ_v Q_vᵀX_vᵀT_vF`.
    pub fn update_w(&self, p: &ModelParams) -> Result<DMatrix<f64>> {
        let r = self.cfg.r;
        let mut gram = DMatrix::zeros(r, r);
        let mut rhs = DMatrix::zeros(r, self.ds.c());
        for v in 1..=2 {
            let proj = self.x(v) * p.q(v);
            let t = p.theta[v - 1];
            gram += proj.transpose() * &proj * t;
            rhs += proj.transpose() * self.view_rows(&p.f, v) * t;
        }
        for i in 0..r {
            gram[(i, i)] += self.cfg.beta;
        }
        if let Some(ch) = gram.clone().cholesky() {
            return Ok(ch.solve(&rhs));
        }
        log::warn!("classifier Gram matrix singular (beta = {}); engaging ridge", self.cfg.beta);
        let (w, _) = ridged_spd_solve(&gram, &rhs, self.cfg.ridge)?;
        Ok(w)
    }

    /// Coefficients `(A, B, C)` of the Sylvester equation `A Q + Q B = C`
    /// whose solution minimizes over `Q_v` with the other view's projection
    /// `other` held fixed.
    pub fn q_system(
        &self,
        p: &ModelParams,
        v: usize,
        other: &DMatrix<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let t = p.theta[v - 1];
        let gamma = self.cfg.gamma;
        let ginv = &self.gram_inv[v - 1];
        let a = ginv * &self.pair_gram[v - 1] * gamma;
        let b = &p.w * p.w.transpose() * t;
        let fit_rhs = self.x(v).transpose() * self.view_rows(&p.f, v) * p.w.transpose() * t;
        let cross = if v == 1 {
            &self.cross * other
        } else {
            self.cross.transpose() * other
        };
        let c = ginv * (fit_rhs + cross * gamma);
        (a, b, c)
    }

    fn solve_q(&self, p: &ModelParams, v: usize, other: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (a, b, c) = self.q_system(p, v, other);
        match sylvester_solve(&a, &b, &c) {
            Ok(q) => Ok(q),
            Err(Error::IllPosedSylvester { shift }) => {
                log::debug!("view {v} projection system singular at shift {shift:e}; minimum-norm solve");
                sylvester_solve_min_norm(&a, &b, &c)
            }
            Err(e) => Err(e),
        }
    }

    /// Minimizes over the projections according to [`SolverConfig::q_step`].
    pub fn update_q(&self, p: &ModelParams) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        match self.cfg.q_step {
            QStep::Joint => self.update_q_joint(p),
            QStep::GaussSeidel => self.update_q_gauss_seidel(p),
        }
    }

    /// Minimizes over `Q₁` with `Q₂` fixed, then over `Q₂` with the new `Q₁`.
    pub fn update_q_gauss_seidel(&self, p: &ModelParams) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let q1 = self.solve_q(p, 1, &p.q2)?;
        let q2 = self.solve_q(p, 2, &q1)?;
        Ok((q1, q2))
    }

    /// Solves both views' Sylvester equations simultaneously.
    ///
    /// With `W Wᵀ = V diag(μ) Vᵀ`, the columns of `Q_v V` decouple; column `j`
    /// solves the `(d1 + d2)`-dimensional symmetric system
    ///
    /// ```text
    /// [θ₁μ_j G₁ + γK₁    −γC     ] [q₁]   [θ₁ X₁ᵀT₁F Wᵀ v_j]
    /// [   −γCᵀ     θ₂μ_j G₂ + γK₂] [q₂] = [θ₂ X₂ᵀT₂F Wᵀ v_j]
    /// ```
    ///
    /// with `G_v = X_vᵀX_v + εI`, `K_v` the paired Gram and `C = X₁ᵀM₁ᵀM₂X₂`.
    /// Singular columns take the minimum-norm solution.
    pub fn update_q_joint(&self, p: &ModelParams) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (d1, d2, r) = (self.ds.d1(), self.ds.d2(), self.cfg.r);
        let gamma = self.cfg.gamma;
        let eig = SymmetricEigen::new(&p.w * p.w.transpose());
        let mu_max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
        let mu: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&m| if m <= 1e-12 * mu_max { 0.0 } else { m })
            .collect();
        let v = &eig.eigenvectors;
        let rhs: Vec<DMatrix<f64>> = (1..=2)
            .map(|view| {
                self.x(view).transpose() * self.view_rows(&p.f, view) * p.w.transpose() * v * p.theta[view - 1]
            })
            .collect();

        let columns = (0..r)
            .map(|j| {
                let mut h = DMatrix::zeros(d1 + d2, d1 + d2);
                let b11 = &self.gram[0] * (p.theta[0] * mu[j]) + &self.pair_gram[0] * gamma;
                let b22 = &self.gram[1] * (p.theta[1] * mu[j]) + &self.pair_gram[1] * gamma;
                h.view_mut((0, 0), (d1, d1)).copy_from(&b11);
                h.view_mut((d1, d1), (d2, d2)).copy_from(&b22);
                h.view_mut((0, d1), (d1, d2)).copy_from(&(&self.cross * -gamma));
                h.view_mut((d1, 0), (d2, d1)).copy_from(&(self.cross.transpose() * -gamma));
                let mut b = DVector::zeros(d1 + d2);
                b.rows_mut(0, d1).copy_from(&rhs[0].column(j));
                b.rows_mut(d1, d2).copy_from(&rhs[1].column(j));
                if let Some(ch) = h.clone().cholesky() {
                    let x = ch.solve(&b);
                    if x.iter().all(|v| v.is_finite()) {
                        return Ok(x);
                    }
                }
                log::debug!("projection column {j} singular; minimum-norm solve");
                Ok(pinv_rcond(&h, 1e-10)? * b)
            })
            .collect::<Result<Vec<DVector<f64>>>>()?;

        let mut t1 = DMatrix::zeros(d1, r);
        let mut t2 = DMatrix::zeros(d2, r);
        for (j, x) in columns.iter().enumerate() {
            t1.set_column(j, &x.rows(0, d1));
            t2.set_column(j, &x.rows(d1, d2));
        }
        Ok((t1 * v.transpose(), t2 * v.transpose()))
    }

    /// `π_v = ‖T_v F − X_v Q_v W‖²` for both views.
    pub fn view_residuals(&self, p: &ModelParams) -> [f64; 2] {
        let res = |v: usize| (self.view_rows(&p.f, v) - self.x(v) * p.q(v) * &p.w).norm_squared();
        [res(1), res(2)]
    }

    /// Minimizes `Σ θ_v π_v + λ‖θ‖²` on the floored simplex.
    pub fn update_theta(&self, p: &ModelParams) -> Result<[f64; 2]> {
        simplex_qp(self.view_residuals(p), self.cfg.lambda)
    }

    pub fn objective(&self, p: &ModelParams) -> Result<ObjectiveTerms> {
        let ds = self.ds;
        let laplacian = self.graph.laplacian_quadratic(&p.f)?;
        let y = ds.labels().values();
        let mut label_fit = 0.0;
        for (i, &labeled) in ds.labels().labeled_mask().iter().enumerate() {
            if labeled {
                label_fit += (p.f.row(i) - y.row(i)).norm_squared();
            }
        }
        label_fit *= self.cfg.u_large;
        let pi = self.view_residuals(p);
        let view_fit = p.theta[0] * pi[0] + p.theta[1] * pi[1];
        let w_reg = self.cfg.beta * p.w.norm_squared();
        let pairing =
            self.cfg.gamma * (&self.pair_rows[0] * &p.q1 - &self.pair_rows[1] * &p.q2).norm_squared();
        let theta_reg = self.cfg.lambda * (p.theta[0].powi(2) + p.theta[1].powi(2));
        Ok(ObjectiveTerms {
            laplacian,
            label_fit,
            view_fit,
            w_reg,
            pairing,
            theta_reg,
        })
    }

    /// One full pass F → W → Q → θ.
    pub fn step(&self, p: &ModelParams) -> Result<ModelParams> {
        let mut next = p.clone();
        next.f = self.update_f(&next)?;
        next.w = self.update_w(&next)?;
        let (q1, q2) = self.update_q(&next)?;
        next.q1 = q1;
        next.q2 = q2;
        next.theta = self.update_theta(&next)?;
        Ok(next)
    }

    /// Runs passes until the relative objective change drops below
    /// `rel_tol` or `max_iter` passes have run.
    pub fn fit(&self) -> Result<(ModelParams, ObjectiveTrace)> {
        let mut params = self.init_params();
        let start = Instant::now();
        let mut trace = ObjectiveTrace::default();
        let mut prev = self.objective(&params)?;
        trace.entries.push(TraceEntry {
            iteration: 0,
            terms: prev,
            seconds: 0.0,
        });
        for iteration in 1..=self.cfg.max_iter {
            let t0 = Instant::now();
            params = self.step(&params)?;
            let terms = self.objective(&params)?;
            if !terms.is_finite() {
                return Err(Error::NonFinite("objective"));
            }
            let (before, after) = (prev.total(), terms.total());
            let scale = before.abs().max(f64::MIN_POSITIVE);
            if after - before > ABORT_INCREASE * scale {
                return Err(Error::ObjectiveIncrease {
                    iteration,
                    step: "full",
                    before,
                    after,
                    breakdown: format!("before:\n{}\nafter:\n{}", prev.describe(), terms.describe()),
                });
            }
            trace.entries.push(TraceEntry {
                iteration,
                terms,
                seconds: t0.elapsed().as_secs_f64(),
            });
            prev = terms;
            if (before - after).abs() / scale < self.cfg.rel_tol {
                trace.converged = true;
                break;
            }
        }
        log::debug!(
            "fit finished after {} pass(es) in {:.3}s (converged: {})",
            trace.len() - 1,
            start.elapsed().as_secs_f64(),
            trace.converged
        );
        params.validate()?;
        Ok((params, trace))
    }
}

/// Convenience wrapper: build a [`Solver`] and run it.
pub fn fit(
    ds: &SemiPairedDataset,
    graph: &AnchorGraph,
    cfg: &SolverConfig,
) -> Result<(ModelParams, ObjectiveTrace)> {
    Solver::new(ds, graph, cfg.clone())?.fit()
}
