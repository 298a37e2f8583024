mod support;

use support::dense::{max_rel_diff, random_params, tiny, Dense, Tiny};
use xvhash::linalg::RidgePolicy;
use xvhash::solver::{QStep, Solver, SolverConfig};

const TOL: f64 = 1e-7;

fn config(r: usize, q_step: QStep) -> SolverConfig {
    SolverConfig {
        r,
        beta: 0.7,
        gamma: 1.3,
        lambda: 2.0,
        u_large: 100.0,
        ridge: RidgePolicy::new(0.0).unwrap(),
        q_step,
        ..SolverConfig::default()
    }
}

/// `(seed, n1, n2, n0, d1, d2, c, r)`, every instance with `n <= 12`.
const SHAPES: [(u64, usize, usize, usize, usize, usize, usize, usize); 6] = [
    (1, 6, 6, 4, 3, 2, 2, 2),
    (2, 7, 6, 3, 4, 3, 3, 2),
    (3, 8, 7, 5, 3, 4, 3, 3),
    (4, 9, 5, 3, 4, 4, 2, 2),
    (5, 6, 8, 4, 2, 3, 3, 3),
    (6, 10, 6, 4, 5, 3, 3, 2),
];

fn instances() -> impl Iterator<Item = (u64, Tiny, usize)> {
    SHAPES.iter().map(|&(seed, n1, n2, n0, d1, d2, c, r)| {
        assert!(n1 + n2 - n0 <= 12);
        (seed, tiny(seed, n1, n2, n0, d1, d2, c), r)
    })
}

#[test]
fn objective_matches_dense() {
    for (seed, t, r) in instances() {
        let cfg = config(r, QStep::Joint);
        let s = Solver::new(&t.ds, &t.graph, cfg.clone()).unwrap();
        let d = Dense::new(&t.ds, &t.graph, cfg.u_large);
        let p = random_params(seed, &t.ds, r, [0.3, 0.7]);
        let terms = s.objective(&p).unwrap();
        let got = [
            terms.laplacian,
            terms.label_fit,
            terms.view_fit,
            terms.w_reg,
            terms.pairing,
            terms.theta_reg,
        ];
        for (g, e) in got.iter().zip(d.objective(&p, &cfg)) {
            assert!((g - e).abs() <= TOL * (1.0 + e.abs()), "seed {seed}: {g} vs {e}");
        }
    }
}

#[test]
fn f_update_matches_dense() {
    for (seed, t, r) in instances() {
        let cfg = config(r, QStep::Joint);
        let s = Solver::new(&t.ds, &t.graph, cfg.clone()).unwrap();
        let d = Dense::new(&t.ds, &t.graph, cfg.u_large);
        let p = random_params(seed, &t.ds, r, [0.4, 0.6]);
        let diff = max_rel_diff(&s.update_f(&p).unwrap(), &d.update_f(&p));
        assert!(diff < TOL, "seed {seed}: {diff:e}");
    }
}

#[test]
fn w_update_matches_dense() {
    for (seed, t, r) in instances() {
        let cfg = config(r, QStep::Joint);
        let s = Solver::new(&t.ds, &t.graph, cfg.clone()).unwrap();
        let d = Dense::new(&t.ds, &t.graph, cfg.u_large);
        let p = random_params(seed, &t.ds, r, [0.55, 0.45]);
        let diff = max_rel_diff(&s.update_w(&p).unwrap(), &d.update_w(&p, cfg.beta));
        assert!(diff < TOL, "seed {seed}: {diff:e}");
    }
}

#[test]
fn gauss_seidel_q_update_matches_dense() {
    for (seed, t, r) in instances() {
        let cfg = config(r, QStep::GaussSeidel);
        let s = Solver::new(&t.ds, &t.graph, cfg.clone()).unwrap();
        let d = Dense::new(&t.ds, &t.graph, cfg.u_large);
        let p = random_params(seed, &t.ds, r, [0.5, 0.5]);
        let (q1, q2) = s.update_q(&p).unwrap();
        let (e1, e2) = d.update_q(&p, cfg.gamma);
        assert!(max_rel_diff(&q1, &e1) < TOL, "seed {seed} view 1");
        assert!(max_rel_diff(&q2, &e2) < TOL, "seed {seed} view 2");
    }
}

#[test]
fn joint_q_update_matches_dense() {
    for (seed, t, r) in instances() {
        let cfg = config(r, QStep::Joint);
        let s = Solver::new(&t.ds, &t.graph, cfg.clone()).unwrap();
        let d = Dense::new(&t.ds, &t.graph, cfg.u_large);
        let p = random_params(seed, &t.ds, r, [0.35, 0.65]);
        let (q1, q2) = s.update_q(&p).unwrap();
        let (e1, e2) = d.update_q_joint(&p, cfg.gamma);
        assert!(max_rel_diff(&q1, &e1) < TOL, "seed {seed} view 1: {:e}", max_rel_diff(&q1, &e1));
        assert!(max_rel_diff(&q2, &e2) < TOL, "seed {seed} view 2: {:e}", max_rel_diff(&q2, &e2));
    }
}

#[test]
fn theta_update_matches_dense() {
    for (seed, t, r) in instances() {
        for lambda in [0.05, 2.0, 500.0] {
            let cfg = SolverConfig { lambda, ..config(r, QStep::Joint) };
            let s = Solver::new(&t.ds, &t.graph, cfg.clone()).unwrap();
            let d = Dense::new(&t.ds, &t.graph, cfg.u_large);
            let p = random_params(seed, &t.ds, r, [0.5, 0.5]);
            let got = s.update_theta(&p).unwrap();
            let want = d.update_theta(&p, lambda);
            assert!((got[0] - want[0]).abs() < TOL, "seed {seed} lambda {lambda}");
            assert!((got[1] - want[1]).abs() < TOL, "seed {seed} lambda {lambda}");
        }
    }
}

#[test]
fn full_pass_matches_dense() {
    for (seed, t, r) in instances() {
        let cfg = config(r, QStep::Joint);
        let s = Solver::new(&t.ds, &t.graph, cfg.clone()).unwrap();
        let d = Dense::new(&t.ds, &t.graph, cfg.u_large);
        let p = random_params(seed, &t.ds, r, [0.5, 0.5]);
        let got = s.step(&p).unwrap();

        let mut e = p.clone();
        e.f = d.update_f(&e);
        e.w = d.update_w(&e, cfg.beta);
        (e.q1, e.q2) = d.update_q_joint(&e, cfg.gamma);
        e.theta = d.update_theta(&e, cfg.lambda);
        assert!(max_rel_diff(&got.f, &e.f) < TOL, "seed {seed} F");
        assert!(max_rel_diff(&got.w, &e.w) < TOL, "seed {seed} W");
        assert!(max_rel_diff(&got.q1, &e.q1) < TOL, "seed {seed} Q1");
        assert!(max_rel_diff(&got.q2, &e.q2) < TOL, "seed {seed} Q2");
        assert!((got.theta[0] - e.theta[0]).abs() < TOL, "seed {seed} theta");
        let (a, b) = (s.objective(&got).unwrap().total(), d.total(&e, &cfg));
        assert!((a - b).abs() <= TOL * (1.0 + b.abs()), "seed {seed}: {a} vs {b}");
    }
}
