//! Stimulus-selection policies, including target expectation maximization.
//!
//! # TEM
//!
//! Showing stimulus `u` under belief `p` produces a response with predictive
//! density `g(y|u) = p_u·f1(y) + (1 − p_u)·f0(y)`. For each candidate `k`,
//! [`ExpectedPosteriors`] reports two expectations of the updated posterior
//! `p⁺ₖ(y|u)`:
//!
//! * `marginal[k] = ∫ p⁺ₖ(y|u) g(y|u) dy`, which by the tower rule equals
//!   `pₖ` for every `u`; it is kept as a normalization diagnostic.
//! * `target[k] = ∫ p⁺ₖ(y|u) f(y|u,k) dy`, the expected posterior of `k`
//!   given that `k` is the attended candidate.
//!
//! The selected stimulus maximizes `Σₖ pₖ·target[k]`, the expected posterior
//! of the true target under the current belief.
//!
//! Only `p_u` enters `p⁺_u(y) = p_u f1 / g`, and for `k ≠ u`
//! `p⁺ₖ = pₖ/(1 − p_u)·(1 − p⁺_u)`. Each stimulus therefore needs just
//! `E_f1[p⁺_u]` and `E_f0[1 − p⁺_u]`; both are bounded by a density, and all
//! stimuli share one adaptive mesh on which `f0` and `f1` are evaluated once
//! per node.

use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::error::{check_dim, invalid, Error, Result};
use crate::gmm::{ClassModels, Gmm};
use crate::quadrature::{
    component_breaks, expect_mc, floored_pdf, integrate_box, union_box, IntegrationMethod,
    IntegrationSpec,
};
use crate::rng::{seeded, substream, Rng};

/// Objectives closer than this are ties, resolved to the lowest index.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Oracle,
    Favorite,
    Thompson,
    RoundRobin,
    Random,
    Tem,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Oracle,
        PolicyKind::Favorite,
        PolicyKind::Thompson,
        PolicyKind::RoundRobin,
        PolicyKind::Random,
        PolicyKind::Tem,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Oracle => "oracle",
            PolicyKind::Favorite => "favorite",
            PolicyKind::Thompson => "thompson",
            PolicyKind::RoundRobin => "round_robin",
            PolicyKind::Random => "random",
            PolicyKind::Tem => "tem",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown policy '{s}'")))
    }
}

/// Per-session mutable selection state.
#[derive(Debug, Clone)]
pub struct PolicyState {
    kind: PolicyKind,
    classes: usize,
    last_u: Option<usize>,
    rng: Rng,
    integration: IntegrationSpec,
    oracle_target: Option<usize>,
}

impl PolicyState {
    /// `oracle_target` must be given exactly when `kind` is `Oracle`.
    pub fn new(
        kind: PolicyKind,
        classes: usize,
        rng: Rng,
        integration: IntegrationSpec,
        oracle_target: Option<usize>,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(invalid("need at least 2 candidates"));
        }
        match (kind, oracle_target) {
            (PolicyKind::Oracle, None) => return Err(invalid("oracle policy needs a target")),
            (PolicyKind::Oracle, Some(t)) if t >= classes => {
                return Err(invalid(format!("oracle target {t} out of range")))
            }
            (k, Some(_)) if k != PolicyKind::Oracle => {
                return Err(invalid(format!("{k} policy does not take a target")))
            }
            _ => {}
        }
        if kind == PolicyKind::Tem {
            integration.validate()?;
        }
        Ok(PolicyState {
            kind,
            classes,
            last_u: None,
            rng,
            integration,
            oracle_target,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn last_u(&self) -> Option<usize> {
        self.last_u
    }

    /// Picks the next stimulus in `0..C` and records it as the last one shown.
    pub fn select_next(&mut self, b: &Belief, m: &ClassModels) -> Result<usize> {
        if b.classes() != self.classes {
            return Err(invalid(format!(
                "belief has {} candidates, policy expects {}",
                b.classes(),
                self.classes
            )));
        }
        let c = self.classes;
        let u = match self.kind {
            PolicyKind::Oracle => self.oracle_target.expect("validated in new"),
            PolicyKind::Favorite => b.map_estimate(),
            PolicyKind::Thompson => sample_index(b.probs(), &mut self.rng),
            PolicyKind::RoundRobin => (self.last_u.unwrap_or(c - 1) + 1) % c,
            PolicyKind::Random => self.rng.random_range(0..c),
            PolicyKind::Tem => tem_select(b, m, &self.integration)?,
        };
        self.last_u = Some(u);
        Ok(u)
    }
}

/// Inverse-CDF draw of an index with probability `p[i]`.
fn sample_index(p: &[f64], rng: &mut Rng) -> usize {
    let r: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > 0.0 {
            last = i;
        }
        cum += v;
        if r < cum {
            return i;
        }
    }
    last
}

/// Predictive response density `g(y|u)` for stimulus `u`.
pub fn predictive(u: usize, b: &Belief, m: &ClassModels) -> Result<Gmm> {
    if u >= b.classes() {
        return Err(invalid(format!("stimulus {u} out of range")));
    }
    let pu = b.probs()[u];
    let rest: f64 = rest_mass(b, u);
    let parts: Vec<(f64, &Gmm)> = [(pu, &m.f1), (rest, &m.f0)]
        .into_iter()
        .filter(|(w, _)| *w > 0.0)
        .collect();
    Gmm::combine(&parts)
}

fn rest_mass(b: &Belief, u: usize) -> f64 {
    b.probs()
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != u)
        .map(|(_, v)| v)
        .sum()
}

/// Expected updated posteriors for one stimulus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedPosteriors {
    pub stimulus: usize,
    /// `∫ p⁺ₖ g dy` (equals the prior up to integration error).
    pub marginal: Vec<f64>,
    /// `E[p⁺ₖ | k is the target]`.
    pub target: Vec<f64>,
    /// `Σₖ pₖ·target[k]`.
    pub objective: f64,
    /// Largest error estimate among the underlying integrals.
    pub error: f64,
    pub converged: bool,
}

/// Integrals shared by every stimulus: `∫f0`, `∫f1`, and for each requested
/// `u` the pair `(E_f1[p⁺_u], E_f0[1 − p⁺_u])`.
struct TemIntegrals {
    mass0: f64,
    mass1: f64,
    pairs: Vec<(f64, f64)>,
    error: f64,
    converged: bool,
}

fn posterior_of_shown(pu: f64, rest: f64, f0: f64, f1: f64) -> Option<(f64, f64)> {
    let a = pu * f1;
    let c = rest * f0;
    let g = a + c;
    if g > 0.0 {
        Some((a / g, c / g))
    } else {
        None
    }
}

fn tem_integrals(us: &[usize], b: &Belief, m: &ClassModels, spec: &IntegrationSpec) -> Result<TemIntegrals> {
    spec.validate()?;
    let weights: Vec<(f64, f64)> = us.iter().map(|&u| (b.probs()[u], rest_mass(b, u))).collect();
    let adaptive = spec.method == IntegrationMethod::Adaptive && m.dim() <= 2;
    if spec.method == IntegrationMethod::Adaptive && !adaptive {
        return Err(invalid(format!(
            "adaptive integration supports d <= 2 (got {}); use the monte_carlo method",
            m.dim()
        )));
    }
    if adaptive {
        let gmms = [&m.f0, &m.f1];
        let bounds = union_box(&gmms, spec.truncation_sigmas);
        let breaks = component_breaks(&gmms);
        let n_out = 2 + 2 * us.len();
        let r = integrate_box(
            &bounds,
            &breaks,
            n_out,
            |y, out| {
                let f0 = floored_pdf(&m.f0, y);
                let f1 = floored_pdf(&m.f1, y);
                out[0] = f0;
                out[1] = f1;
                for (i, &(pu, rest)) in weights.iter().enumerate() {
                    let (shown, other) = posterior_of_shown(pu, rest, f0, f1).unwrap_or((0.0, 0.0));
                    out[2 + 2 * i] = shown * f1;
                    out[3 + 2 * i] = other * f0;
                }
            },
            spec.abs_tol,
            spec.rel_tol,
            spec.max_evals,
        )?;
        let v = &r.values;
        Ok(TemIntegrals {
            mass0: v[0],
            mass1: v[1],
            pairs: (0..us.len()).map(|i| (v[2 + 2 * i], v[3 + 2 * i])).collect(),
            error: r.errors.iter().fold(0.0, |a: f64, e| a.max(*e)),
            converged: r.converged,
        })
    } else {
        let n = spec.mc_samples;
        let mut error = 0.0f64;
        let mut pairs = Vec::with_capacity(us.len());
        // every stimulus reuses the same two sample sets
        for &(pu, rest) in &weights {
            let shown = expect_mc(
                &m.f1,
                |y| {
                    let (f0, f1) = (floored_pdf(&m.f0, y), floored_pdf(&m.f1, y));
                    posterior_of_shown(pu, rest, f0, f1).map_or(0.0, |p| p.0)
                },
                n,
                &mut substream(spec.seed, &[1]),
            )?;
            let other = expect_mc(
                &m.f0,
                |y| {
                    let (f0, f1) = (floored_pdf(&m.f0, y), floored_pdf(&m.f1, y));
                    posterior_of_shown(pu, rest, f0, f1).map_or(0.0, |p| p.1)
                },
                n,
                &mut substream(spec.seed, &[0]),
            )?;
            error = error.max(shown.std_error).max(other.std_error);
            pairs.push((shown.value, other.value));
        }
        Ok(TemIntegrals {
            mass0: 1.0,
            mass1: 1.0,
            pairs,
            error,
            converged: true,
        })
    }
}

fn assemble(u: usize, b: &Belief, t: &TemIntegrals, i: usize) -> ExpectedPosteriors {
    let p = b.probs();
    let (shown, other) = t.pairs[i];
    let rest = rest_mass(b, u);
    let target: Vec<f64> = (0..p.len())
        .map(|k| {
            if k == u {
                shown
            } else if rest > 0.0 {
                p[k] / rest * other
            } else {
                0.0
            }
        })
        .collect();
    let marginal = (0..p.len())
        .map(|k| p[k] * if k == u { t.mass1 } else { t.mass0 })
        .collect();
    let objective = p.iter().zip(&target).map(|(a, b)| a * b).sum();
    ExpectedPosteriors {
        stimulus: u,
        marginal,
        target,
        objective,
        error: t.error,
        converged: t.converged,
    }
}

fn check_inputs(b: &Belief, m: &ClassModels) -> Result<()> {
    check_dim(m.f0.dim(), m.f1.dim())
        .and_then(|_| if b.classes() >= 2 { Ok(()) } else { Err(invalid("need 2 candidates")) })
}

/// Expected posteriors after showing stimulus `u`.
pub fn tem_expected_posteriors(
    u: usize,
    b: &Belief,
    m: &ClassModels,
    spec: &IntegrationSpec,
) -> Result<ExpectedPosteriors> {
    check_inputs(b, m)?;
    if u >= b.classes() {
        return Err(invalid(format!("stimulus {u} out of range")));
    }
    let t = tem_integrals(&[u], b, m, spec)?;
    Ok(assemble(u, b, &t, 0))
}

/// Expected posteriors for every stimulus, from one shared integration.
pub fn tem_all(b: &Belief, m: &ClassModels, spec: &IntegrationSpec) -> Result<Vec<ExpectedPosteriors>> {
    check_inputs(b, m)?;
    let us: Vec<usize> = (0..b.classes()).collect();
    let t = tem_integrals(&us, b, m, spec)?;
    Ok(us.iter().map(|&u| assemble(u, b, &t, u)).collect())
}

/// Index of the largest objective; values within [`TIE_EPS`] of the best
/// resolve to the lowest index.
pub fn argmax_with_ties(objectives: &[f64]) -> usize {
    let best = objectives.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    objectives
        .iter()
        .position(|v| *v >= best - TIE_EPS)
        .unwrap_or(0)
}

/// The TEM stimulus choice.
pub fn tem_select(b: &Belief, m: &ClassModels, spec: &IntegrationSpec) -> Result<usize> {
    let all = tem_all(b, m, spec)?;
    if let Some(bad) = all.iter().find(|e| !e.converged) {
        return Err(Error::IntegrationBudget {
            max_evals: spec.max_evals,
            error: bad.error,
        });
    }
    let obj: Vec<f64> = all.iter().map(|e| e.objective).collect();
    Ok(argmax_with_ties(&obj))
}

/// Monte Carlo reference for `target[k]`: draws from `f(·|u,k)` and averages
/// the posterior computed by the belief update.
pub fn tem_target_mc(
    u: usize,
    k: usize,
    b: &Belief,
    m: &ClassModels,
    n: usize,
    seed: u64,
) -> Result<crate::stats::McEstimate> {
    expect_mc(
        m.class(u == k),
        |y| {
            crate::belief::posterior_update(b, u, y, m)
                .map(|up| up.belief.probs()[k])
                .unwrap_or(f64::NAN)
        },
        n,
        &mut seeded(seed),
    )
}
