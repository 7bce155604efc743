//! Seeded Monte Carlo evaluation of selection policies.
//!
//! Random streams are derived from the master seed by position, never by
//! schedule: each run has its own target stream, each `(run, t)` its own
//! response stream, and each `(run, policy)` its own policy stream. Policies
//! are therefore paired on targets and, whenever they show the same class at
//! the same step, on response noise; results do not depend on thread count.

use std::io::Write;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{posterior_update, Belief};
use crate::error::{invalid, Result};
use crate::gmm::ClassModels;
use crate::policy::{PolicyKind, PolicyState};
use crate::quadrature::IntegrationSpec;
use crate::rng::substream;
use crate::transfer::{TransferConfig, TransferState};

const STREAM_TARGET: u64 = 1;
const STREAM_RESPONSE: u64 = 2;
const STREAM_POLICY: u64 = 3;

pub const DEFAULT_MAX_STEPS: usize = 32;

/// Session parameters shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub classes: usize,
    pub threshold: f64,
    pub max_steps: usize,
    pub seed: u64,
    /// Adapt the belief models online from the session's own responses.
    pub transfer: Option<TransferConfig>,
    pub integration: IntegrationSpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            classes: 4,
            threshold: 0.95,
            max_steps: DEFAULT_MAX_STEPS,
            seed: 0,
            transfer: None,
            integration: IntegrationSpec::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(invalid("classes must be at least 2"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(invalid(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps must be at least 1"));
        }
        if let Some(t) = &self.transfer {
            t.validate()?;
        }
        self.integration.validate()
    }
}

/// Generative models and the models the decoder believes in.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub truth: ClassModels,
    pub assumed: ClassModels,
}

impl Scenario {
    pub fn matched(models: ClassModels) -> Self {
        Scenario {
            assumed: models.clone(),
            truth: models,
        }
    }

    pub fn new(truth: ClassModels, assumed: ClassModels) -> Result<Self> {
        crate::error::check_dim(truth.dim(), assumed.dim())?;
        Ok(Scenario { truth, assumed })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub t: usize,
    pub u: usize,
    pub y: Vec<f64>,
    pub belief: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub policy: PolicyKind,
    pub run: u64,
    pub target: usize,
    pub steps: Vec<Step>,
    /// Step at which the correct class crossed the threshold.
    pub success_step: Option<usize>,
    /// Class whose probability crossed the threshold, if any did.
    pub declared: Option<usize>,
}

impl SessionTrace {
    /// One JSON object per step, each carrying the session header fields.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            policy: PolicyKind,
            run: u64,
            target: usize,
            #[serde(flatten)]
            step: &'a Step,
        }
        for s in &self.steps {
            let line = Line {
                policy: self.policy,
                run: self.run,
                target: self.target,
                step: s,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Uniform target for run `run`, shared by all policies.
pub fn draw_target(cfg: &SimConfig, run: u64) -> usize {
    substream(cfg.seed, &[STREAM_TARGET, run]).random_range(0..cfg.classes)
}

fn policy_stream(kind: PolicyKind) -> u64 {
    PolicyKind::ALL.iter().position(|k| *k == kind).expect("listed") as u64
}

struct Outcome {
    success_step: Option<usize>,
    declared: Option<usize>,
}

fn simulate(
    cfg: &SimConfig,
    scenario: &Scenario,
    policy: PolicyKind,
    run: u64,
    mut record: Option<&mut Vec<Step>>,
) -> Result<(usize, Outcome)> {
    cfg.validate()?;
    let target = draw_target(cfg, run);
    let oracle_target = (policy == PolicyKind::Oracle).then_some(target);
    let mut state = PolicyState::new(
        policy,
        cfg.classes,
        substream(cfg.seed, &[STREAM_POLICY, run, policy_stream(policy)]),
        cfg.integration.clone(),
        oracle_target,
    )?;
    let mut transfer = match &cfg.transfer {
        Some(t) => Some(TransferState::new(scenario.assumed.clone(), t, cfg.classes)?),
        None => None,
    };
    let mut belief = Belief::uniform(cfg.classes)?;
    let d = scenario.truth.dim();
    let mut y_target = vec![0.0; d];
    let mut y_other = vec![0.0; d];
    for t in 1..=cfg.max_steps {
        let models = transfer.as_ref().map_or(&scenario.assumed, |s| s.current());
        let u = state.select_next(&belief, models)?;
        let mut rng = substream(cfg.seed, &[STREAM_RESPONSE, run, t as u64]);
        scenario.truth.f1.sample_into(&mut rng, &mut y_target);
        scenario.truth.f0.sample_into(&mut rng, &mut y_other);
        let y = if u == target { &y_target } else { &y_other };
        belief = posterior_update(&belief, u, y, models)?.belief;
        if let Some(s) = transfer.as_mut() {
            s.transfer_step(y.clone(), None)?;
        }
        if let Some(steps) = record.as_deref_mut() {
            steps.push(Step {
                t,
                u,
                y: y.clone(),
                belief: belief.probs().to_vec(),
            });
        }
        if belief.max_prob() >= cfg.threshold {
            let declared = belief.map_estimate();
            let success_step = (declared == target).then_some(t);
            return Ok((
                target,
                Outcome {
                    success_step,
                    declared: Some(declared),
                },
            ));
        }
    }
    Ok((
        target,
        Outcome {
            success_step: None,
            declared: None,
        },
    ))
}

/// One full session with its step-by-step record.
pub fn run_session(cfg: &SimConfig, scenario: &Scenario, policy: PolicyKind, run: u64) -> Result<SessionTrace> {
    let mut steps = Vec::new();
    let (target, out) = simulate(cfg, scenario, policy, run, Some(&mut steps))?;
    Ok(SessionTrace {
        policy,
        run,
        target,
        steps,
        success_step: out.success_step,
        declared: out.declared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyCurve {
    pub policy: PolicyKind,
    /// `curve[t-1]` is the fraction of runs with success at or before `t`.
    pub curve: Vec<f64>,
    pub successes: Vec<usize>,
    /// Sessions that crossed the threshold on any class.
    pub declared: usize,
    /// Sessions that crossed the threshold on the wrong class.
    pub wrong: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfResult {
    pub curves: Vec<PolicyCurve>,
    pub n_runs: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl CdfResult {
    pub fn curve(&self, policy: PolicyKind) -> Option<&PolicyCurve> {
        self.curves.iter().find(|c| c.policy == policy)
    }

    /// Rows `policy,t,fraction_success`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "policy,t,fraction_success")?;
        for c in &self.curves {
            for (i, v) in c.curve.iter().enumerate() {
                writeln!(w, "{},{},{}", c.policy, i + 1, v)?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Success CDFs for each policy over `n_runs` paired sessions. Parallelism
/// comes from the ambient rayon pool.
pub fn run_monte_carlo(
    cfg: &SimConfig,
    scenario: &Scenario,
    n_runs: usize,
    policies: &[PolicyKind],
) -> Result<CdfResult> {
    cfg.validate()?;
    if n_runs == 0 {
        return Err(invalid("n_runs must be at least 1"));
    }
    if policies.is_empty() {
        return Err(invalid("no policies selected"));
    }
    let jobs: Vec<(usize, u64)> = (0..policies.len())
        .flat_map(|p| (0..n_runs as u64).map(move |r| (p, r)))
        .collect();
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|&(p, r)| simulate(cfg, scenario, policies[p], r, None).map(|o| o.1))
        .collect::<Result<_>>()?;
    let curves = policies
        .iter()
        .enumerate()
        .map(|(p, &policy)| {
            let runs = &outcomes[p * n_runs..(p + 1) * n_runs];
            let mut successes = vec![0usize; cfg.max_steps];
            for o in runs {
                if let Some(t) = o.success_step {
                    successes[t - 1] += 1;
                }
            }
            let mut cum = 0;
            let curve = successes
                .iter()
                .map(|s| {
                    cum += s;
                    cum as f64 / n_runs as f64
                })
                .collect();
            PolicyCurve {
                policy,
                curve,
                successes,
                declared: runs.iter().filter(|o| o.declared.is_some()).count(),
                wrong: runs
                    .iter()
                    .filter(|o| o.declared.is_some() && o.success_step.is_none())
                    .count(),
            }
        })
        .collect();
    Ok(CdfResult {
        curves,
        n_runs,
        max_steps: cfg.max_steps,
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub policy: PolicyKind,
    /// First `t` at which half the runs have succeeded.
    pub median: Option<usize>,
    /// First `t` at which 90% of the runs have succeeded.
    pub t90: Option<usize>,
}

fn first_reaching(curve: &[f64], level: f64) -> Option<usize> {
    curve.iter().position(|v| *v >= level).map(|i| i + 1)
}

pub fn summarize(res: &CdfResult) -> Vec<SummaryRow> {
    res.curves
        .iter()
        .map(|c| SummaryRow {
            policy: c.policy,
            median: first_reaching(&c.curve, 0.5),
            t90: first_reaching(&c.curve, 0.9),
        })
        .collect()
}

/// Aligned text table; missing entries print as `none`.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let show = |v: Option<usize>| v.map_or_else(|| "none".to_string(), |t| t.to_string());
    let mut s = format!("{:<12} {:>8} {:>8}\n", "policy", "median", "t90");
    for r in rows {
        s.push_str(&format!("{:<12} {:>8} {:>8}\n", r.policy.name(), show(r.median), show(r.t90)));
    }
    s
}
