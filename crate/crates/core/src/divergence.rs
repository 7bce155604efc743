//! Kullback-Leibler divergence between response models.
//!
//! The closed form covers single 1D Gaussians; mixtures use a Monte Carlo
//! average of the log-density ratio over draws from `P`.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, invalid, Result};
use crate::gmm::{ClassModels, Gaussian, Gmm};
use crate::rng::{substream, Rng};
use crate::stats::{batches, Moments};

/// Log-ratio clamp; keeps far-tail samples from producing infinities.
pub const LOG_RATIO_CLAMP: f64 = 700.0;

/// Default sample budget for Monte Carlo KL estimates.
pub const DEFAULT_KL_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlEstimate {
    /// Divergence in nats.
    pub value: f64,
    #[serde(rename = "n")]
    pub n_samples: usize,
    pub std_error: f64,
}

/// Closed-form `D_KL(P‖Q)` for two univariate normals.
pub fn kl_gauss_1d(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    check_dim(1, p.dim())?;
    check_dim(1, q.dim())?;
    let (vp, vq) = (p.cov()[(0, 0)], q.cov()[(0, 0)]);
    if !(vp > 0.0 && vq > 0.0) {
        return Err(invalid("variances must be positive"));
    }
    let dm = p.mean()[0] - q.mean()[0];
    Ok(0.5 * ((vq / vp).ln() + (vp + dm * dm) / vq - 1.0))
}

/// Monte Carlo estimate of `D_KL(P‖Q)` from `n` draws of `P`.
///
/// A master seed is drawn from `rng`; each fixed-size batch then uses its own
/// substream, so the estimate does not depend on the rayon thread count.
pub fn kl_mc(p: &Gmm, q: &Gmm, n: usize, rng: &mut Rng) -> Result<KlEstimate> {
    check_dim(p.dim(), q.dim())?;
    if n == 0 {
        return Err(invalid("KL estimate needs at least one sample"));
    }
    let master: u64 = rng.random();
    let d = p.dim();
    let parts: Vec<Moments> = batches(n)
        .into_par_iter()
        .map(|(b, len)| {
            let mut r = substream(master, &[b]);
            let mut y = vec![0.0; d];
            let mut m = Moments::default();
            for _ in 0..len {
                p.sample_into(&mut r, &mut y);
                let ratio = p.ln_pdf_unchecked(&y) - q.ln_pdf_unchecked(&y);
                m.push(if ratio.is_nan() {
                    0.0
                } else {
                    ratio.clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP)
                });
            }
            m
        })
        .collect();
    let mut total = Moments::default();
    parts.iter().for_each(|m| total.merge(m));
    Ok(KlEstimate {
        value: total.mean(),
        n_samples: total.count(),
        std_error: total.std_error(),
    })
}

/// Separability score of a model pair: `D_KL(f1‖f0)`, target as `P`.
pub fn separability(models: &ClassModels, n: usize, rng: &mut Rng) -> Result<KlEstimate> {
    kl_mc(&models.f1, &models.f0, n, rng)
}
