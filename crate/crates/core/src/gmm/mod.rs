//! Multivariate Gaussian mixture models.
//!
//! [`Gaussian`] caches the Cholesky factor of its covariance so density
//! evaluation and sampling are a triangular solve / product away. [`Gmm`] is
//! immutable once built; all densities are available in the log domain.

mod em;
mod io;

pub use em::{em_fit, EmFit, EmOptions};
pub use io::{load_models, save_models, ModelFile};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{check_dim, invalid, Error, Result};
use crate::rng::Rng;

pub(crate) type Scratch = SmallVec<[f64; 8]>;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Tolerance on `|Σπ - 1|` accepted by [`Gmm::new`].
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Log-sum-exp of a slice; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// A multivariate normal distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr", into = "GaussianRepr")]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianRepr {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl TryFrom<GaussianRepr> for Gaussian {
    type Error = Error;

    fn try_from(r: GaussianRepr) -> Result<Self> {
        Gaussian::from_rows(r.mean, &r.cov)
    }
}

impl From<Gaussian> for GaussianRepr {
    fn from(g: Gaussian) -> Self {
        let d = g.dim();
        GaussianRepr {
            mean: g.mean.iter().copied().collect(),
            cov: (0..d)
                .map(|i| (0..d).map(|j| g.cov[(i, j)]).collect())
                .collect(),
        }
    }
}

impl PartialEq for Gaussian {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl Gaussian {
    /// Builds a Gaussian, rejecting asymmetric or non positive definite
    /// covariances.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(invalid("Gaussian dimension must be at least 1"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cov.nrows().max(cov.ncols()),
            });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite Gaussian parameter".into()));
        }
        let scale = cov.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-10 * scale.max(1.0) {
                    return Err(Error::InvalidData("covariance is not symmetric".into()));
                }
            }
        }
        let chol = nalgebra::Cholesky::new(cov.clone())
            .ok_or(Error::NotPositiveDefinite)?
            .unpack();
        let log_det: f64 = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let log_norm = -0.5 * (d as f64 * LN_2PI + log_det);
        Ok(Gaussian {
            mean,
            cov,
            chol,
            log_norm,
        })
    }

    pub fn from_rows(mean: Vec<f64>, cov: &[Vec<f64>]) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d || cov.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidData(format!(
                "covariance must be {d}x{d} to match the mean"
            )));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        Gaussian::new(DVector::from_vec(mean), cov)
    }

    /// One-dimensional normal with the given mean and variance.
    pub fn univariate(mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0) {
            return Err(invalid(format!("variance must be positive, got {var}")));
        }
        Gaussian::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    /// Isotropic Gaussian `N(mean, var·I)`.
    pub fn isotropic(mean: Vec<f64>, var: f64) -> Result<Self> {
        let d = mean.len();
        Gaussian::new(
            DVector::from_vec(mean),
            DMatrix::from_diagonal_element(d, d, var),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Whitened residual `L⁻¹(y − μ)` written into `z`.
    fn whiten(&self, y: &[f64], z: &mut Scratch) {
        let d = self.dim();
        z.clear();
        for i in 0..d {
            let mut acc = y[i] - self.mean[i];
            for j in 0..i {
                acc -= self.chol[(i, j)] * z[j];
            }
            z.push(acc / self.chol[(i, i)]);
        }
    }

    /// Log density; `y` must have length [`Gaussian::dim`].
    pub fn ln_pdf(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.dim());
        let mut z = Scratch::new();
        self.whiten(y, &mut z);
        let sq: f64 = z.iter().map(|v| v * v).sum();
        self.log_norm - 0.5 * sq
    }

    /// Mahalanobis distance, computed without overflowing for far points.
    pub fn mahalanobis(&self, y: &[f64]) -> f64 {
        let mut z = Scratch::new();
        self.whiten(y, &mut z);
        let m = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m == 0.0 || !m.is_finite() {
            return m;
        }
        m * z.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt()
    }

    /// Draws one sample into `out`.
    pub fn sample_into(&self, rng: &mut Rng, out: &mut [f64]) {
        let d = self.dim();
        let z: Scratch = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for i in 0..d {
            let mut acc = self.mean[i];
            for j in 0..=i {
                acc += self.chol[(i, j)] * z[j];
            }
            out[i] = acc;
        }
    }

    /// Per-axis standard deviations from the covariance diagonal.
    pub fn axis_std(&self) -> Vec<f64> {
        self.cov.diagonal().iter().map(|v| v.sqrt()).collect()
    }
}

/// A weighted mixture of Gaussians sharing one dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GmmRepr", into = "GmmRepr")]
pub struct Gmm {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
    ln_weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GmmRepr {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
}

impl TryFrom<GmmRepr> for Gmm {
    type Error = Error;

    fn try_from(r: GmmRepr) -> Result<Self> {
        Gmm::new(r.weights, r.components)
    }
}

impl From<Gmm> for GmmRepr {
    fn from(g: Gmm) -> Self {
        GmmRepr {
            weights: g.weights,
            components: g.components,
        }
    }
}

impl PartialEq for Gmm {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights && self.components == other.components
    }
}

impl Gmm {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("a mixture needs at least one component"));
        }
        if weights.len() != components.len() {
            return Err(invalid(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        let d = components[0].dim();
        for c in &components {
            check_dim(d, c.dim())?;
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("mixture weights must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(invalid(format!("mixture weights sum to {sum}, not 1")));
        }
        let ln_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Gmm {
            weights,
            components,
            ln_weights,
        })
    }

    /// Normalizes `weights` before building the mixture.
    pub fn from_unnormalized(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(invalid("mixture weights must have a positive finite sum"));
        }
        Gmm::new(weights.into_iter().map(|w| w / sum).collect(), components)
    }

    pub fn single(g: Gaussian) -> Self {
        Gmm::new(vec![1.0], vec![g]).expect("single component is valid")
    }

    /// Flattens a weighted combination of mixtures into one mixture.
    pub fn combine(parts: &[(f64, &Gmm)]) -> Result<Self> {
        let mut weights = Vec::new();
        let mut components = Vec::new();
        for (w, g) in parts {
            for (pi, c) in g.weights.iter().zip(&g.components) {
                weights.push(w * pi);
                components.push(c.clone());
            }
        }
        Gmm::from_unnormalized(weights, components)
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    /// `ln πₖ + ln 𝒩(y|μₖ,Σₖ)` for every component.
    pub(crate) fn weighted_ln_densities(&self, y: &[f64], out: &mut Scratch) {
        out.clear();
        out.extend(
            self.ln_weights
                .iter()
                .zip(&self.components)
                .map(|(lw, c)| if lw.is_finite() { lw + c.ln_pdf(y) } else { f64::NEG_INFINITY }),
        );
    }

    /// Log density without the dimension check.
    pub(crate) fn ln_pdf_unchecked(&self, y: &[f64]) -> f64 {
        let mut buf = Scratch::new();
        self.weighted_ln_densities(y, &mut buf);
        log_sum_exp(&buf)
    }

    /// Direct `Σ πₖ 𝒩(y|μₖ,Σₖ)` without the dimension check.
    pub(crate) fn pdf_unchecked(&self, y: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, c)| w * c.ln_pdf(y).exp())
            .sum()
    }

    pub fn ln_pdf(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), y.len())?;
        Ok(self.ln_pdf_unchecked(y))
    }

    pub fn pdf(&self, y: &[f64]) -> Result<f64> {
        self.ln_pdf(y).map(f64::exp)
    }

    /// Posterior component membership probabilities for `y`.
    ///
    /// When every component density underflows, the result is a one-hot
    /// vector on the component with the smallest Mahalanobis distance.
    pub fn responsibilities(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), y.len())?;
        let mut buf = Scratch::new();
        self.weighted_ln_densities(y, &mut buf);
        let total = log_sum_exp(&buf);
        if total.is_finite() {
            return Ok(buf.iter().map(|l| (l - total).exp()).collect());
        }
        let nearest = self.nearest_component(y);
        Ok((0..self.len()).map(|k| if k == nearest { 1.0 } else { 0.0 }).collect())
    }

    fn nearest_component(&self, y: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, c) in self.components.iter().enumerate() {
            if self.weights[k] == 0.0 {
                continue;
            }
            let d = c.mahalanobis(y);
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }

    /// Most responsible component; ties go to the lowest index.
    pub fn hard_assign(&self, y: &[f64]) -> Result<usize> {
        let r = self.responsibilities(y)?;
        Ok(argmax(&r))
    }

    fn pick_component(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut last_positive = 0;
        for (k, w) in self.weights.iter().enumerate() {
            if *w > 0.0 {
                last_positive = k;
            }
            cum += w;
            if u < cum {
                return k;
            }
        }
        last_positive
    }

    pub fn sample_into(&self, rng: &mut Rng, out: &mut [f64]) {
        let k = self.pick_component(rng);
        self.components[k].sample_into(rng, out);
    }

    /// `n` draws as an `n × d` matrix.
    pub fn sample(&self, rng: &mut Rng, n: usize) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(n, d);
        let mut row = vec![0.0; d];
        for i in 0..n {
            self.sample_into(rng, &mut row);
            for j in 0..d {
                out[(i, j)] = row[j];
            }
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for (w, c) in self.weights.iter().zip(&self.components) {
            for (mi, ci) in m.iter_mut().zip(c.mean.iter()) {
                *mi += w * ci;
            }
        }
        m
    }

    /// Per-axis union of `μₖ ± width·σₖ` over components with positive weight.
    pub fn bounding_box(&self, width: f64) -> Vec<(f64, f64)> {
        let d = self.dim();
        let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
        for (w, c) in self.weights.iter().zip(&self.components) {
            if *w == 0.0 {
                continue;
            }
            for (i, s) in c.axis_std().into_iter().enumerate() {
                b[i].0 = b[i].0.min(c.mean[i] - width * s);
                b[i].1 = b[i].1.max(c.mean[i] + width * s);
            }
        }
        b
    }
}

/// First index of the maximum; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// The paired non-target (`f0`) and target (`f1`) response models.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModels {
    pub f0: Gmm,
    pub f1: Gmm,
}

impl ClassModels {
    pub fn new(f0: Gmm, f1: Gmm) -> Result<Self> {
        check_dim(f0.dim(), f1.dim())?;
        Ok(ClassModels { f0, f1 })
    }

    pub fn dim(&self) -> usize {
        self.f0.dim()
    }

    /// Model for one class (`false` = non-target).
    pub fn class(&self, target: bool) -> &Gmm {
        if target {
            &self.f1
        } else {
            &self.f0
        }
    }
}
