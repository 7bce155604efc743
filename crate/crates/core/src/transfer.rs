//! Online adaptation of source-session models to new-session data.
//!
//! Every adaptation blends the frozen source parameters toward estimates
//! from all buffered destination data, with a per-component rate
//! `α(n) = 1 − (1 + b·n)·e^{−b·n}` that grows with the number `n` of samples
//! assigned to that component.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::features::Label;
use crate::gmm::{ClassModels, Gaussian, Gmm};

pub const DEFAULT_B: f64 = 0.03;

const ALPHA_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Learning rate for `n` samples. Kept strictly below 1.
pub fn alpha(n: usize, b: f64) -> f64 {
    let x = b * n as f64;
    (-(-x).exp_m1() - x * (-x).exp()).clamp(0.0, ALPHA_MAX)
}

/// Transfer options as they appear in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub b_coeff: f64,
    /// Expected fraction of target samples; `None` means `1/C`.
    pub ratio: Option<f64>,
    /// Adapt after every this many new samples.
    pub batch_interval: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            b_coeff: DEFAULT_B,
            ratio: None,
            batch_interval: 1,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_coeff > 0.0 && self.b_coeff.is_finite()) {
            return Err(invalid(format!("b_coeff must be positive, got {}", self.b_coeff)));
        }
        if let Some(r) = self.ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(invalid(format!("ratio must lie in (0, 1), got {r}")));
            }
        }
        if self.batch_interval == 0 {
            return Err(invalid("batch_interval must be at least 1"));
        }
        Ok(())
    }

    pub fn resolved_ratio(&self, classes: usize) -> f64 {
        self.ratio.unwrap_or(1.0 / classes as f64)
    }
}

/// Per-component blending record for one class.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClassAdaptation {
    pub alpha_used: Vec<f64>,
    pub samples_per_component: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptationReport {
    pub nontarget: ClassAdaptation,
    pub target: ClassAdaptation,
    /// Unknown samples whose label was changed by the count constraint.
    pub labels_flipped: usize,
}

impl AdaptationReport {
    /// Mean α over the components of both classes.
    pub fn alpha_mean(&self) -> f64 {
        let all: Vec<f64> = self
            .nontarget
            .alpha_used
            .iter()
            .chain(&self.target.alpha_used)
            .copied()
            .collect();
        if all.is_empty() {
            0.0
        } else {
            all.iter().sum::<f64>() / all.len() as f64
        }
    }
}

/// Blends `source` toward statistics of `rows`, assigned to components by
/// their most responsible component under `current`.
pub fn adapt_class(source: &Gmm, current: &Gmm, rows: &[&[f64]], b: f64) -> Result<(Gmm, ClassAdaptation)> {
    check_dim(source.dim(), current.dim())?;
    if source.len() != current.len() {
        return Err(invalid(format!(
            "source has {} components, current has {}",
            source.len(),
            current.len()
        )));
    }
    let k = source.len();
    let d = source.dim();
    if rows.is_empty() {
        let report = ClassAdaptation {
            alpha_used: vec![0.0; k],
            samples_per_component: vec![0; k],
        };
        return Ok((source.clone(), report));
    }
    let mut groups: Vec<Vec<&[f64]>> = vec![Vec::new(); k];
    for r in rows {
        check_dim(d, r.len())?;
        groups[current.hard_assign(r)?].push(r);
    }
    let total = rows.len() as f64;
    let mut weights = Vec::with_capacity(k);
    let mut comps = Vec::with_capacity(k);
    let mut report = ClassAdaptation::default();
    for (j, g) in groups.iter().enumerate() {
        let nj = g.len();
        let a = alpha(nj, b);
        let src = &source.components()[j];
        report.alpha_used.push(a);
        report.samples_per_component.push(nj);
        weights.push((1.0 - a) * source.weights()[j] + a * nj as f64 / total);
        if nj == 0 {
            comps.push(src.clone());
            continue;
        }
        let mut mean = DVector::zeros(d);
        for r in g {
            mean += DVector::from_column_slice(r);
        }
        mean /= nj as f64;
        let cov_hat = if nj <= 1 {
            DMatrix::identity(d, d)
        } else {
            let mut c = DMatrix::zeros(d, d);
            for r in g {
                let dev = DVector::from_column_slice(r) - &mean;
                c += &dev * dev.transpose();
            }
            c / nj as f64
        };
        let mu = src.mean() * (1.0 - a) + mean * a;
        let cov = src.cov() * (1.0 - a) + cov_hat * a;
        let cov = (&cov + cov.transpose()) * 0.5;
        comps.push(Gaussian::new(mu, cov)?);
    }
    Ok((Gmm::from_unnormalized(weights, comps)?, report))
}

/// Log-odds `ln f1(y) − ln f0(y)`; 0 when both densities vanish.
fn log_odds(m: &ClassModels, y: &[f64]) -> Result<f64> {
    let l1 = m.f1.ln_pdf(y)?;
    let l0 = m.f0.ln_pdf(y)?;
    let r = l1 - l0;
    Ok(if r.is_nan() { 0.0 } else { r })
}

/// Labels for every buffered sample. Known labels are kept; unknown samples
/// are ranked by log-odds (ties by buffer position) and the top
/// `round(ratio·N_unknown)` become targets. Returns the labels and how many
/// differ from the unconstrained log-odds decision.
pub fn predict_labels(
    m: &ClassModels,
    buffer: &[(Vec<f64>, Option<Label>)],
    ratio: f64,
) -> Result<(Vec<Label>, usize)> {
    let mut labels: Vec<Label> = buffer.iter().map(|(_, l)| l.unwrap_or(Label::NonTarget)).collect();
    let mut unknown: Vec<(usize, f64)> = Vec::new();
    for (i, (y, l)) in buffer.iter().enumerate() {
        if l.is_none() {
            unknown.push((i, log_odds(m, y)?));
        }
    }
    if unknown.is_empty() {
        return Ok((labels, 0));
    }
    let wanted = (ratio * unknown.len() as f64 + 0.5).floor() as usize;
    unknown.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut flipped = 0;
    for (rank, (i, r)) in unknown.iter().enumerate() {
        let target = rank < wanted;
        if target != (*r > 0.0) {
            flipped += 1;
        }
        labels[*i] = if target { Label::Target } else { Label::NonTarget };
    }
    Ok((labels, flipped))
}

/// Streaming adaptation state.
#[derive(Debug, Clone)]
pub struct TransferState {
    source: ClassModels,
    current: ClassModels,
    buffer: Vec<(Vec<f64>, Option<Label>)>,
    b_coeff: f64,
    ratio: f64,
    batch_interval: usize,
    pending: usize,
}

impl TransferState {
    pub fn new(source: ClassModels, cfg: &TransferConfig, classes: usize) -> Result<Self> {
        cfg.validate()?;
        if classes < 2 {
            return Err(invalid("need at least 2 candidates"));
        }
        Ok(TransferState {
            current: source.clone(),
            source,
            buffer: Vec::new(),
            b_coeff: cfg.b_coeff,
            ratio: cfg.resolved_ratio(classes),
            batch_interval: cfg.batch_interval,
            pending: 0,
        })
    }

    pub fn source(&self) -> &ClassModels {
        &self.source
    }

    pub fn current(&self) -> &ClassModels {
        &self.current
    }

    pub fn buffer(&self) -> &[(Vec<f64>, Option<Label>)] {
        &self.buffer
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Buffers one sample and adapts once `batch_interval` samples are
    /// pending. Returns the report when an adaptation ran.
    pub fn transfer_step(&mut self, y: Vec<f64>, label: Option<Label>) -> Result<Option<AdaptationReport>> {
        check_dim(self.source.dim(), y.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(crate::error::Error::InvalidData("non-finite sample".into()));
        }
        self.buffer.push((y, label));
        self.pending += 1;
        if self.pending < self.batch_interval {
            return Ok(None);
        }
        self.adapt().map(Some)
    }

    /// Re-predicts labels and re-blends from the full buffer.
    pub fn adapt(&mut self) -> Result<AdaptationReport> {
        self.pending = 0;
        let (labels, flipped) = predict_labels(&self.current, &self.buffer, self.ratio)?;
        let mut rows0: Vec<&[f64]> = Vec::new();
        let mut rows1: Vec<&[f64]> = Vec::new();
        for ((y, _), l) in self.buffer.iter().zip(&labels) {
            match l {
                Label::Target => rows1.push(y),
                Label::NonTarget => rows0.push(y),
            }
        }
        let (f0, nontarget) = adapt_class(&self.source.f0, &self.current.f0, &rows0, self.b_coeff)?;
        let (f1, target) = adapt_class(&self.source.f1, &self.current.f1, &rows1, self.b_coeff)?;
        self.current = ClassModels::new(f0, f1)?;
        Ok(AdaptationReport {
            nontarget,
            target,
            labels_flipped: flipped,
        })
    }

    /// Adapts if samples are pending from an incomplete batch.
    pub fn flush(&mut self) -> Result<Option<AdaptationReport>> {
        if self.pending == 0 {
            return Ok(None);
        }
        self.adapt().map(Some)
    }
}
