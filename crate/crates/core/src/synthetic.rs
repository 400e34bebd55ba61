//! Gaussian-grid benchmark with an exact posterior.
//!
//! Classes are equally likely; class `k` emits `N(mu_k, sigma^2 I)` in the
//! plane with the centers on a square lattice. Because the Bayes posterior
//! is available in closed form, a predictor's miscalibration can be dialed
//! in exactly with [`miscalibrate`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalBatch;
use crate::scalar::Scalar;
use crate::simplex::{check_temperature, softmax_slice, ProbVector};

pub const DEFAULT_SIGMA: f64 = 0.35;
pub const DEFAULT_SPACING: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMixture<F> {
    pub centers: Vec<[F; 2]>,
    pub sigma: F,
    pub seed: u64,
}

/// `ceil(sqrt(K))`-wide lattice filled row by row and cut at `K` centers.
pub fn make_grid<F: Scalar>(k: usize, spacing: F, sigma: F, seed: u64) -> Result<GridMixture<F>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need K >= 2, got {k}")));
    }
    if !(spacing > F::zero()) || !spacing.is_finite() {
        return Err(Error::InvalidParameter(format!("spacing must be > 0, got {spacing}")));
    }
    if !(sigma > F::zero()) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    let side = (1..).find(|s| s * s >= k).expect("unbounded range");
    let centers = (0..k)
        .map(|i| {
            [
                F::from_usize_lossy(i % side) * spacing,
                F::from_usize_lossy(i / side) * spacing,
            ]
        })
        .collect();
    Ok(GridMixture { centers, sigma, seed })
}

impl<F: Scalar> GridMixture<F> {
    pub fn k(&self) -> usize {
        self.centers.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBatch<F> {
    pub inputs: Vec<[F; 2]>,
    pub labels: Vec<usize>,
    pub truth: Vec<ProbVector<F>>,
}

impl<F: Scalar> SyntheticBatch<F> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The exact posteriors paired with the sampled labels.
    pub fn truth_batch(&self) -> Result<EvalBatch<F>> {
        EvalBatch::new(self.truth.clone(), self.labels.clone())
    }
}

/// `N` draws using the mixture's own seed.
pub fn sample<F: Scalar>(mix: &GridMixture<F>, n: usize) -> Result<SyntheticBatch<F>> {
    sample_with_seed(mix, n, mix.seed)
}

pub fn sample_with_seed<F: Scalar>(mix: &GridMixture<F>, n: usize, seed: u64) -> Result<SyntheticBatch<F>> {
    if n == 0 {
        return Err(Error::Empty("synthetic sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = mix.k();
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.random_range(0..k);
        let [cx, cy] = mix.centers[y];
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        let x = [cx + mix.sigma * F::lit(dx), cy + mix.sigma * F::lit(dy)];
        truth.push(true_posterior(mix, x)?);
        inputs.push(x);
        labels.push(y);
    }
    Ok(SyntheticBatch { inputs, labels, truth })
}

/// `p(y = k | x)`: softmax of `-|x - mu_k|^2 / (2 sigma^2)`.
pub fn true_posterior<F: Scalar>(mix: &GridMixture<F>, x: [F; 2]) -> Result<ProbVector<F>> {
    if !x[0].is_finite() || !x[1].is_finite() {
        return Err(Error::InvalidInput("input point must be finite".into()));
    }
    let scale = F::lit(2.0) * mix.sigma * mix.sigma;
    let logits: Vec<F> = mix
        .centers
        .iter()
        .map(|c| {
            let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
            -(dx * dx + dy * dy) / scale
        })
        .collect();
    Ok(ProbVector::from_raw(softmax_slice(&logits)))
}

/// `softmax(log truth / t0 + noise * eps)` with `eps` standard normal per
/// class: `t0 < 1` sharpens, `t0 > 1` flattens.
pub fn miscalibrate<F: Scalar>(truth: &ProbVector<F>, t0: F, noise: F, seed: u64) -> Result<ProbVector<F>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    miscalibrate_with_rng(truth, t0, noise, &mut rng)
}

pub fn miscalibrate_with_rng<F: Scalar, R: Rng + ?Sized>(
    truth: &ProbVector<F>,
    t0: F,
    noise: F,
    rng: &mut R,
) -> Result<ProbVector<F>> {
    check_temperature(t0)?;
    if !(noise >= F::zero()) || !noise.is_finite() {
        return Err(Error::InvalidParameter(format!("logit noise must be >= 0, got {noise}")));
    }
    let mut z: Vec<F> = truth.clamped_log().into_iter().map(|l| l / t0).collect();
    if noise > F::zero() {
        for v in &mut z {
            let e: f64 = rng.sample(StandardNormal);
            *v = *v + noise * F::lit(e);
        }
    }
    Ok(ProbVector::from_raw(softmax_slice(&z)))
}

/// Row-wise [`miscalibrate`] driven by one generator seeded with `seed`.
pub fn miscalibrate_all<F: Scalar>(
    truth: &[ProbVector<F>],
    t0: F,
    noise: F,
    seed: u64,
) -> Result<Vec<ProbVector<F>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    truth
        .iter()
        .map(|p| miscalibrate_with_rng(p, t0, noise, &mut rng))
        .collect()
}
