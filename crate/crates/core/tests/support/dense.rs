//! Literal dense transcriptions of the training updates, used as oracles.
//!
//! Everything here materializes `T`, `M`, `S`, `L` and `U` explicitly and
//! solves with pseudoinverses or Kronecker-vectorized systems.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use xvhash::dataset::{LabelMatrix, SemiPairedDataset, ViewMatrix};
use xvhash::graph::{build_z, select_anchors, AnchorGraph, SigmaPolicy};
use xvhash::linalg::gaussian;
use xvhash::seed::rng_from;
use xvhash::solver::{ModelParams, SolverConfig};

pub struct Dense {
    pub t: [DMatrix<f64>; 2],
    pub m: [DMatrix<f64>; 2],
    pub x: [DMatrix<f64>; 2],
    pub l: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl Dense {
    pub fn new(ds: &SemiPairedDataset, graph: &AnchorGraph, u_large: f64) -> Self {
        let n = ds.n();
        let mut t1 = DMatrix::zeros(ds.n1(), n);
        for i in 0..ds.n1() {
            t1[(i, ds.view1_to_global(i))] = 1.0;
        }
        let mut t2 = DMatrix::zeros(ds.n2(), n);
        for i in 0..ds.n2() {
            t2[(i, ds.view2_to_global(i))] = 1.0;
        }
        let mut m1 = DMatrix::zeros(ds.n0(), ds.n1());
        let mut m2 = DMatrix::zeros(ds.n0(), ds.n2());
        for j in 0..ds.n0() {
            m1[(j, ds.view1_pair_rows().start + j)] = 1.0;
            m2[(j, ds.view2_pair_rows().start + j)] = 1.0;
        }
        let z = graph.dense_z();
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(graph.lambda_diag()));
        let s = &z * pinv(&lam).unwrap() * z.transpose();
        let l = DMatrix::identity(n, n) - s;
        let mut u = DMatrix::zeros(n, n);
        for i in 0..n {
            if ds.labels().is_labeled(i) {
                u[(i, i)] = u_large;
            }
        }
        Dense {
            t: [t1, t2],
            m: [m1, m2],
            x: [ds.view1().values().clone(), ds.view2().values().clone()],
            l,
            u,
            y: ds.labels().values().clone(),
        }
    }

    fn q<'a>(p: &'a ModelParams, v: usize) -> &'a DMatrix<f64> {
        if v == 0 {
            &p.q1
        } else {
            &p.q2
        }
    }

    pub fn view_residual(&self, p: &ModelParams, v: usize) -> f64 {
        (&self.t[v] * &p.f - &self.x[v] * Self::q(p, v) * &p.w).norm_squared()
    }

    /// Relaxed objective terms plus `λ‖θ‖²`, in the order
    /// laplacian, label, view, w, pairing, theta.
    pub fn objective(&self, p: &ModelParams, cfg: &SolverConfig) -> [f64; 6] {
        let e = &p.f - &self.y;
        [
            (p.f.transpose() * &self.l * &p.f).trace(),
            (e.transpose() * &self.u * &e).trace(),
            p.theta[0] * self.view_residual(p, 0) + p.theta[1] * self.view_residual(p, 1),
            cfg.beta * p.w.norm_squared(),
            cfg.gamma
                * (&self.m[0] * &self.x[0] * &p.q1 - &self.m[1] * &self.x[1] * &p.q2).norm_squared(),
            cfg.lambda * (p.theta[0].powi(2) + p.theta[1].powi(2)),
        ]
    }

    pub fn total(&self, p: &ModelParams, cfg: &SolverConfig) -> f64 {
        self.objective(p, cfg).iter().sum()
    }

    pub fn update_f(&self, p: &ModelParams) -> DMatrix<f64> {
        let mut a = &self.l + &self.u;
        let mut b = &self.u * &self.y;
        for v in 0..2 {
            a += self.t[v].transpose() * &self.t[v] * p.theta[v];
            b += self.t[v].transpose() * &self.x[v] * Self::q(p, v) * &p.w * p.theta[v];
        }
        pinv(&a).unwrap() * b
    }

    pub fn update_w(&self, p: &ModelParams, beta: f64) -> DMatrix<f64> {
        let r = p.w.nrows();
        let mut a = DMatrix::identity(r, r) * beta;
        let mut b = DMatrix::zeros(r, p.w.ncols());
        for v in 0..2 {
            let xq = &self.x[v] * Self::q(p, v);
            a += xq.transpose() * &xq * p.theta[v];
            b += xq.transpose() * &self.t[v] * &p.f * p.theta[v];
        }
        pinv(&a).unwrap() * b
    }

    /// The Sylvester system `A Q + Q B = C` for view `v` (0 or 1) with the
    /// other projection fixed, built from exact pseudoinverses.
    pub fn q_system(
        &self,
        p: &ModelParams,
        v: usize,
        other: &DMatrix<f64>,
        gamma: f64,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let o = 1 - v;
        let x = &self.x[v];
        let g = pinv(&(x.transpose() * x)).unwrap();
        let mx = &self.m[v] * x;
        let a = &g * mx.transpose() * &mx * gamma;
        let b = &p.w * p.w.transpose() * p.theta[v];
        let c = &g
            * (x.transpose() * &self.t[v] * &p.f * p.w.transpose() * p.theta[v]
                + mx.transpose() * &self.m[o] * &self.x[o] * other * gamma);
        (a, b, c)
    }

    pub fn update_q(&self, p: &ModelParams, gamma: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let (a, b, c) = self.q_system(p, 0, &p.q2, gamma);
        let q1 = kron_sylvester(&a, &b, &c);
        let (a, b, c) = self.q_system(p, 1, &q1, gamma);
        let q2 = kron_sylvester(&a, &b, &c);
        (q1, q2)
    }

    /// Minimizes over `Q1` and `Q2` together by stacking both vectorized
    /// normal equations into one system.
    pub fn update_q_joint(&self, p: &ModelParams, gamma: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let r = p.w.nrows();
        let ww = &p.w * p.w.transpose();
        let id = DMatrix::<f64>::identity(r, r);
        let (d1, d2) = (self.x[0].ncols(), self.x[1].ncols());
        let mx = [&self.m[0] * &self.x[0], &self.m[1] * &self.x[1]];
        let (n1, n2) = (d1 * r, d2 * r);
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        let mut b = DMatrix::zeros(n1 + n2, 1);
        for v in 0..2 {
            let (off, len) = if v == 0 { (0, n1) } else { (n1, n2) };
            let g = self.x[v].transpose() * &self.x[v] * p.theta[v];
            let k = mx[v].transpose() * &mx[v] * gamma;
            let block = ww.kronecker(&g) + id.kronecker(&k);
            a.view_mut((off, off), (len, len)).copy_from(&block);
            let rhs = self.x[v].transpose() * &self.t[v] * &p.f * p.w.transpose() * p.theta[v];
            b.view_mut((off, 0), (len, 1)).copy_from_slice(rhs.as_slice());
        }
        let cross = id.kronecker(&(mx[0].transpose() * &mx[1] * gamma));
        a.view_mut((0, n1), (n1, n2)).copy_from(&(-&cross));
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(-cross.transpose()));
        let x = pinv(&a).unwrap() * b;
        (
            DMatrix::from_column_slice(d1, r, &x.as_slice()[..n1]),
            DMatrix::from_column_slice(d2, r, &x.as_slice()[n1..]),
        )
    }

    pub fn update_theta(&self, p: &ModelParams, lambda: f64) -> [f64; 2] {
        let (p1, p2) = (self.view_residual(p, 0), self.view_residual(p, 1));
        let t1 = (0.5 + (p2 - p1) / (4.0 * lambda)).clamp(1e-4, 1.0 - 1e-4);
        [t1, 1.0 - t1]
    }
}

/// Solves `A X + X B = C` through `(I ⊗ A + Bᵀ ⊗ I) vec X = vec C`.
pub fn kron_sylvester(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = c.shape();
    let k = DMatrix::<f64>::identity(q, q).kronecker(a) + b.transpose().kronecker(&DMatrix::identity(p, p));
    let vec = DMatrix::from_column_slice(p * q, 1, c.as_slice());
    let x = pinv(&k).unwrap() * vec;
    DMatrix::from_column_slice(p, q, x.as_slice())
}

pub struct Tiny {
    pub ds: SemiPairedDataset,
    pub graph: AnchorGraph,
}

/// Random centered instance with `m0 = n0` anchors and `k = min(2, n0)`.
pub fn tiny(seed: u64, n1: usize, n2: usize, n0: usize, d1: usize, d2: usize, c: usize) -> Tiny {
    let mut rng = rng_from(seed);
    let n = n1 + n2 - n0;
    let x1 = gaussian(&mut rng, n1, d1);
    let x2 = gaussian(&mut rng, n2, d2);
    let classes: Vec<Option<usize>> = (0..n)
        .map(|i| if i < c || i % 2 == 0 { Some(i % c) } else { None })
        .collect();
    let ds = SemiPairedDataset::new(
        ViewMatrix::new(x1).unwrap(),
        ViewMatrix::new(x2).unwrap(),
        n0,
        LabelMatrix::from_classes(&classes, c).unwrap(),
        None,
    )
    .unwrap()
    .center_views();
    let anchors = select_anchors(&ds, n0, seed).unwrap();
    let graph = build_z(&ds, &anchors, n0.min(2), SigmaPolicy::Auto).unwrap();
    Tiny { ds, graph }
}

/// Params with random `F`, `W`, `Q` and the given `θ`.
pub fn random_params(seed: u64, ds: &SemiPairedDataset, r: usize, theta: [f64; 2]) -> ModelParams {
    let mut rng = rng_from(seed ^ 0xabcdef);
    ModelParams {
        f: gaussian(&mut rng, ds.n(), ds.c()),
        w: gaussian(&mut rng, r, ds.c()),
        q1: gaussian(&mut rng, ds.d1(), r),
        q2: gaussian(&mut rng, ds.d2(), r),
        theta,
    }
}

pub fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

/// Pseudoinverse: eigendecomposition for symmetric input, SVD otherwise.
pub fn pinv(a: &DMatrix<f64>) -> Result<DMatrix<f64>, &'static str> {
    let tol = a.nrows().max(a.ncols()) as f64 * f64::EPSILON;
    if a.is_square() && (a - a.transpose()).amax() <= 1e-13 * a.amax() {
        let e = SymmetricEigen::new((a + a.transpose()) * 0.5);
        let cut = tol * e.eigenvalues.amax();
        let inv = e.eigenvalues.map(|l| if l.abs() > cut { 1.0 / l } else { 0.0 });
        return Ok(&e.eigenvectors * DMatrix::from_diagonal(&inv) * e.eigenvectors.transpose());
    }
    a.clone().pseudo_inverse(tol * a.amax())
}
