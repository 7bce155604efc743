//! Stimulus-response likelihood and the Bayesian posterior over candidates.
//!
//! Candidates and stimuli are 0-based indices `0..C`. Showing stimulus `u`
//! while the attended candidate is `k` yields a response drawn from the
//! target model `f1` when `u == k` and from `f0` otherwise. Likelihoods are
//! handled in the log domain; each update performs one max-subtraction before
//! returning to probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::gmm::{argmax, log_sum_exp, ClassModels};

/// Tolerance on `|Σp − 1|` accepted by [`Belief::from_probs`].
const BELIEF_SUM_TOL: f64 = 1e-9;

/// Probability vector over the `C` candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief {
    p: Vec<f64>,
}

impl Belief {
    /// Equal prior `1/C` over `classes ≥ 2` candidates.
    pub fn uniform(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(invalid(format!("need at least 2 candidates, got {classes}")));
        }
        Ok(Belief {
            p: vec![1.0 / classes as f64; classes],
        })
    }

    /// Accepts a probability vector, renormalizing away rounding error.
    pub fn from_probs(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(invalid("need at least 2 candidates"));
        }
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("probabilities must be finite and non-negative"));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > BELIEF_SUM_TOL {
            return Err(invalid(format!("probabilities sum to {s}")));
        }
        Ok(Belief {
            p: p.into_iter().map(|v| v / s).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn classes(&self) -> usize {
        self.p.len()
    }

    /// Most probable candidate; ties go to the lowest index.
    pub fn map_estimate(&self) -> usize {
        argmax(&self.p)
    }

    pub fn max_prob(&self) -> f64 {
        self.p[self.map_estimate()]
    }

    pub fn update(&self, u: usize, y: &[f64], m: &ClassModels) -> Result<Update> {
        posterior_update(self, u, y, m)
    }

    /// Same belief with candidates reordered: entry `i` of the result is
    /// entry `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Belief {
        Belief {
            p: perm.iter().map(|&j| self.p[j]).collect(),
        }
    }
}

pub fn posterior_init(classes: usize) -> Result<Belief> {
    Belief::uniform(classes)
}

/// `ln f(y|u,k)`: the target log density when `u == k`, else non-target.
pub fn ln_likelihood(y: &[f64], u: usize, k: usize, m: &ClassModels) -> Result<f64> {
    m.class(u == k).ln_pdf(y)
}

pub fn likelihood(y: &[f64], u: usize, k: usize, m: &ClassModels) -> Result<f64> {
    ln_likelihood(y, u, k, m).map(f64::exp)
}

/// Result of one Bayesian update.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub belief: Belief,
    /// Every candidate's numerator underflowed; `belief` is the prior.
    pub degenerate: bool,
}

fn check_stimulus(u: usize, classes: usize) -> Result<()> {
    if u >= classes {
        return Err(invalid(format!("stimulus {u} out of range for {classes} candidates")));
    }
    Ok(())
}

/// Posterior from per-candidate log-likelihood offsets and a prior.
fn reweight(prior: &[f64], ln_lik: impl Fn(usize) -> f64) -> Option<Vec<f64>> {
    let lls: Vec<f64> = (0..prior.len()).map(&ln_lik).collect();
    let max = prior
        .iter()
        .zip(&lls)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, l)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let w: Vec<f64> = prior
        .iter()
        .zip(&lls)
        .map(|(p, l)| if *p > 0.0 { p * (l - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    Some(w.into_iter().map(|v| v / total).collect())
}

/// `p⁺ₖ ∝ f(y|u,k)·pₖ`, normalized.
pub fn posterior_update(b: &Belief, u: usize, y: &[f64], m: &ClassModels) -> Result<Update> {
    check_stimulus(u, b.classes())?;
    check_dim(m.dim(), y.len())?;
    let lf0 = m.f0.ln_pdf_unchecked(y);
    let lf1 = m.f1.ln_pdf_unchecked(y);
    match reweight(&b.p, |k| if k == u { lf1 } else { lf0 }) {
        Some(p) => Ok(Update {
            belief: Belief { p },
            degenerate: false,
        }),
        None => {
            log::warn!("degenerate posterior update (stimulus {u}); keeping prior");
            Ok(Update {
                belief: b.clone(),
                degenerate: true,
            })
        }
    }
}

/// Shown stimuli and the responses they evoked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StimulusLog {
    stimuli: Vec<usize>,
    responses: Vec<Vec<f64>>,
}

impl StimulusLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(stimuli: Vec<usize>, responses: Vec<Vec<f64>>) -> Result<Self> {
        if stimuli.len() != responses.len() {
            return Err(Error::InvalidData(format!(
                "{} stimuli but {} responses",
                stimuli.len(),
                responses.len()
            )));
        }
        Ok(StimulusLog { stimuli, responses })
    }

    pub fn push(&mut self, u: usize, y: Vec<f64>) {
        self.stimuli.push(u);
        self.responses.push(y);
    }

    pub fn len(&self) -> usize {
        self.stimuli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stimuli.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.stimuli
            .iter()
            .copied()
            .zip(self.responses.iter().map(Vec::as_slice))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchPosterior {
    pub belief: Belief,
    /// `ln Lₖ = Σₜ ln f(yₜ|uₜ,k)`.
    pub log_likelihoods: Vec<f64>,
}

/// Posterior after a whole log, starting from the uniform prior.
pub fn batch_posterior(log: &StimulusLog, m: &ClassModels, classes: usize) -> Result<BatchPosterior> {
    let prior = Belief::uniform(classes)?;
    let mut ll = vec![0.0; classes];
    for (u, y) in log.iter() {
        check_stimulus(u, classes)?;
        check_dim(m.dim(), y.len())?;
        let lf0 = m.f0.ln_pdf_unchecked(y);
        let lf1 = m.f1.ln_pdf_unchecked(y);
        for (k, l) in ll.iter_mut().enumerate() {
            *l += if k == u { lf1 } else { lf0 };
        }
    }
    let norm = log_sum_exp(&ll);
    let belief = if norm.is_finite() {
        Belief {
            p: ll.iter().map(|l| (l - norm).exp()).collect(),
        }
    } else {
        log::warn!("degenerate batch posterior; returning uniform prior");
        prior
    };
    Ok(BatchPosterior {
        belief,
        log_likelihoods: ll,
    })
}
