//! End-to-end training: center → anchors → graph → fit → ITQ per view.

use crate::codec::{HashModel, ViewHash};
use crate::dataset::SemiPairedDataset;
use crate::graph::{build_z, default_m0, select_anchors, SigmaPolicy};
use crate::linalg::random_orthonormal;
use crate::quantize::{itq_fit_from, DEFAULT_ITERS};
use crate::seed::{SeedFan, Stream};
use crate::solver::{fit, ModelParams, ObjectiveTrace, SolverConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// `solver.seed` is the base seed of the whole run; per-stage seeds are
    /// derived from it.
    pub solver: SolverConfig,
    /// Anchor count; defaults to [`default_m0`].
    pub m0: Option<usize>,
    /// Nearest anchors per sample; defaults to `m0`.
    pub k: Option<usize>,
    pub sigma: SigmaPolicy,
    pub itq_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            m0: None,
            k: None,
            sigma: SigmaPolicy::Auto,
            itq_iters: DEFAULT_ITERS,
        }
    }
}

impl TrainConfig {
    pub fn seed(&self) -> u64 {
        self.solver.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.solver.seed = seed;
        self
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: HashModel,
    pub params: ModelParams,
    pub trace: ObjectiveTrace,
    /// Quantization error per ITQ iteration, per view.
    pub itq_errors: [Vec<f64>; 2],
    pub m0: usize,
    pub k: usize,
    pub sigma_sq: [f64; 2],
}

/// Trains a hash model on an uncentered dataset.
pub fn train(ds: &SemiPairedDataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.solver.validate()?;
    if ds.n0() == 0 {
        return Err(Error::InvalidConfig("training needs at least one paired object".into()));
    }
    let fan = SeedFan::new(cfg.seed());
    let centered = ds.center_views();
    let stats = centered.centering().expect("centered dataset has statistics").clone();

    let m0 = cfg.m0.unwrap_or_else(|| default_m0(ds.n0()));
    let k = cfg.k.unwrap_or(m0);
    let anchors = select_anchors(&centered, m0, fan.seed(Stream::Anchors, 0))?;
    let graph = build_z(&centered, &anchors, k, cfg.sigma)?;

    let solver_cfg = SolverConfig {
        seed: fan.seed(Stream::Init, 0),
        ..cfg.solver.clone()
    };
    let (params, trace) = fit(&centered, &graph, &solver_cfg)?;

    let v1 = centered.view1().values() * &params.q1;
    let v2 = centered.view2().values() * &params.q2;
    // Both views start from one rotation so their bits stay aligned.
    let r0 = random_orthonormal(&mut fan.rng(Stream::Itq, 0), cfg.solver.r, cfg.solver.r);
    let itq1 = itq_fit_from(&v1, cfg.itq_iters, r0.clone())?;
    let itq2 = itq_fit_from(&v2, cfg.itq_iters, r0)?;

    let model = HashModel::new(
        ViewHash {
            mean: stats.mean1,
            q: params.q1.clone(),
            rotation: itq1.rotation,
        },
        ViewHash {
            mean: stats.mean2,
            q: params.q2.clone(),
            rotation: itq2.rotation,
        },
    )?;
    Ok(TrainOutput {
        model,
        params,
        trace,
        itq_errors: [itq1.errors, itq2.errors],
        m0,
        k,
        sigma_sq: graph.sigma_sq(),
    })
}
