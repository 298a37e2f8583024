use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{choose_covering, LabelMatrix, SemiPairedDataset, ViewMatrix};
use crate::linalg::gaussian;
use crate::seed::{SeedFan, Stream};
use crate::{Error, Result};

/// Parameters of the synthetic two-view generator.
///
/// Every object draws a latent vector `centroid[class] + cluster_spread * N(0, I)`
/// in a space of dimension `max(8, c)`. Each view observes it through its own
/// random linear map plus isotropic noise of scale `noise_sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n1: usize,
    pub n2: usize,
    pub n0: usize,
    pub d1: usize,
    pub d2: usize,
    pub c: usize,
    pub labeled_fraction: f64,
    pub noise_sigma: f64,
    pub cluster_spread: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// The reference configuration used throughout the test suites:
    /// 220 samples per view, 120 pairs, 4 classes, half the objects labeled.
    pub fn reference(seed: u64) -> Self {
        Self {
            n1: 220,
            n2: 220,
            n0: 120,
            d1: 48,
            d2: 40,
            c: 4,
            labeled_fraction: 0.5,
            noise_sigma: 0.5,
            cluster_spread: 0.6,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2 - self.n0
    }

    pub fn latent_dim(&self) -> usize {
        self.c.max(8)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 > self.n1.min(self.n2) {
            return Err(Error::InvalidConfig(format!(
                "pair count exceeds view size: n0={} > min(n1={}, n2={})",
                self.n0, self.n1, self.n2
            )));
        }
        if self.c == 0 || self.d1 == 0 || self.d2 == 0 {
            return Err(Error::InvalidConfig("c, d1 and d2 must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.labeled_fraction) {
            return Err(Error::InvalidConfig(format!(
                "labeled fraction must lie in [0, 1], got {}",
                self.labeled_fraction
            )));
        }
        if !(self.noise_sigma >= 0.0) || !(self.cluster_spread >= 0.0) {
            return Err(Error::InvalidConfig("noise scales must be >= 0".into()));
        }
        let m = (self.labeled_fraction * self.n() as f64).round() as usize;
        if m < self.c {
            return Err(Error::InvalidConfig(format!(
                "labeled fraction yields {m} labeled samples, fewer than c={} classes",
                self.c
            )));
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SemiPairedDataset> {
    spec.validate()?;
    let fan = SeedFan::new(spec.seed);
    let mut rng = fan.rng(Stream::Synthetic, 0);
    let n = spec.n();
    let latent = spec.latent_dim();

    let centroids = gaussian(&mut rng, spec.c, latent);
    let scale = 1.0 / (latent as f64).sqrt();
    let map1 = gaussian(&mut rng, latent, spec.d1) * scale;
    let map2 = gaussian(&mut rng, latent, spec.d2) * scale;

    let mut classes: Vec<usize> = (0..n).map(|i| i % spec.c).collect();
    classes.shuffle(&mut rng);

    let mut latents = DMatrix::zeros(n, latent);
    for (g, &k) in classes.iter().enumerate() {
        for j in 0..latent {
            let z: f64 = rng.sample(StandardNormal);
            latents[(g, j)] = centroids[(k, j)] + spec.cluster_spread * z;
        }
    }

    let off = spec.n1 - spec.n0;
    let x1 = latents.rows(0, spec.n1) * &map1
        + gaussian(&mut rng, spec.n1, spec.d1) * spec.noise_sigma;
    let x2 = latents.rows(off, spec.n2) * &map2
        + gaussian(&mut rng, spec.n2, spec.d2) * spec.noise_sigma;

    let truth_classes: Vec<Option<usize>> = classes.iter().map(|&k| Some(k)).collect();
    let truth = LabelMatrix::from_classes(&truth_classes, spec.c)?;
    let m = (spec.labeled_fraction * n as f64).round() as usize;
    let all: Vec<usize> = (0..n).collect();
    let keep = choose_covering(&truth, &all, m, fan.seed(Stream::LabelSubsample, 0))?;
    let labels = truth.masked(&keep);

    SemiPairedDataset::new(
        ViewMatrix::new(x1)?,
        ViewMatrix::new(x2)?,
        spec.n0,
        labels,
        Some(truth),
    )
}
