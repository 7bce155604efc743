//! Expectation-maximization fitting with k-means++ seeding.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use super::{log_sum_exp, Gaussian, Gmm, Scratch};
use crate::error::{invalid, Error, Result};
use crate::rng::seeded;

/// Total responsibility below which a component counts as empty.
const EMPTY_COMPONENT: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop once the mean per-sample log-likelihood gains less than this.
    pub tol: f64,
    /// Added to every covariance diagonal after each M-step.
    pub reg_epsilon: f64,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iter: 300,
            tol: 1e-8,
            reg_epsilon: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub gmm: Gmm,
    /// Mean per-sample log-likelihood, one entry per E-step. The last entry
    /// belongs to the returned model.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    /// Trace indices at which an empty component was reseeded. The
    /// likelihood is only guaranteed non-decreasing between these points.
    pub reseeds: Vec<usize>,
}

struct Params {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
}

impl Params {
    fn to_gmm(&self) -> Result<Gmm> {
        let comps = self
            .means
            .iter()
            .zip(&self.covs)
            .map(|(m, c)| Gaussian::new(m.clone(), c.clone()))
            .collect::<Result<Vec<_>>>()?;
        Gmm::from_unnormalized(self.weights.clone(), comps)
    }
}

fn row(data: &DMatrix<f64>, i: usize) -> Vec<f64> {
    data.row(i).iter().copied().collect()
}

fn covariance(data: &DMatrix<f64>, weights: &[f64], mean: &DVector<f64>, reg: f64) -> DMatrix<f64> {
    let (n, d) = data.shape();
    let total: f64 = weights.iter().sum();
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        for a in 0..d {
            let da = data[(i, a)] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += w * da * (data[(i, b)] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = if total > 0.0 { cov[(a, b)] / total } else { 0.0 };
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
        cov[(a, a)] += reg;
    }
    cov
}

fn weighted_mean(data: &DMatrix<f64>, weights: &[f64]) -> DVector<f64> {
    let (n, d) = data.shape();
    let total: f64 = weights.iter().sum();
    let mut m = DVector::zeros(d);
    for i in 0..n {
        for j in 0..d {
            m[j] += weights[i] * data[(i, j)];
        }
    }
    m / total
}

fn kmeans_pp_centers(data: &DMatrix<f64>, k: usize, rng: &mut crate::rng::Rng) -> Vec<usize> {
    let n = data.nrows();
    let mut centers = vec![rng.random_range(0..n)];
    let sq = |i: usize, c: usize| -> f64 {
        data.row(i)
            .iter()
            .zip(data.row(c).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let mut d2: Vec<f64> = (0..n).map(|i| sq(i, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, v) in d2.iter().enumerate() {
                if u < *v {
                    pick = i;
                    break;
                }
                u -= v;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq(i, next));
        }
    }
    centers
}

fn initial_params(data: &DMatrix<f64>, k: usize, opts: &EmOptions) -> Params {
    let n = data.nrows();
    let mut rng = seeded(opts.seed);
    let centers = kmeans_pp_centers(data, k, &mut rng);
    let ones = vec![1.0; n];
    let global_mean = weighted_mean(data, &ones);
    let global_cov = covariance(data, &ones, &global_mean, opts.reg_epsilon);

    let mut assignment = vec![vec![0.0; n]; k];
    for i in 0..n {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, &ci) in centers.iter().enumerate() {
            let d: f64 = data
                .row(i)
                .iter()
                .zip(data.row(ci).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        assignment[best][i] = 1.0;
    }

    let mut params = Params {
        weights: Vec::with_capacity(k),
        means: Vec::with_capacity(k),
        covs: Vec::with_capacity(k),
    };
    for (c, members) in assignment.iter().enumerate() {
        let count: f64 = members.iter().sum();
        if count >= 2.0 {
            let m = weighted_mean(data, members);
            params.covs.push(covariance(data, members, &m, opts.reg_epsilon));
            params.means.push(m);
        } else {
            params.means.push(data.row(centers[c]).transpose());
            params.covs.push(global_cov.clone());
        }
        params.weights.push(count.max(1.0));
    }
    params
}

/// E-step: mean log-likelihood, responsibilities (k × n) and per-datum log density.
fn e_step(data: &DMatrix<f64>, gmm: &Gmm) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
    let n = data.nrows();
    let k = gmm.len();
    let mut resp = vec![vec![0.0; n]; k];
    let mut ln_p = vec![0.0; n];
    let mut buf = Scratch::new();
    for i in 0..n {
        let y = row(data, i);
        gmm.weighted_ln_densities(&y, &mut buf);
        let total = log_sum_exp(&buf);
        ln_p[i] = total;
        if total.is_finite() {
            for c in 0..k {
                resp[c][i] = (buf[c] - total).exp();
            }
        } else {
            resp[gmm.nearest_component(&y)][i] = 1.0;
        }
    }
    let ll = ln_p.iter().sum::<f64>() / n as f64;
    (ll, resp, ln_p)
}

fn m_step(data: &DMatrix<f64>, resp: &[Vec<f64>], ln_p: &[f64], reg: f64) -> (Params, bool) {
    let n = data.nrows();
    let mut params = Params {
        weights: Vec::new(),
        means: Vec::new(),
        covs: Vec::new(),
    };
    let mut reseeded = false;
    let mut taken = Vec::new();
    for r in resp {
        let nk: f64 = r.iter().sum();
        if nk < EMPTY_COMPONENT {
            // reseed at the worst-explained datum not already used
            let worst = (0..n)
                .filter(|i| !taken.contains(i))
                .min_by(|a, b| ln_p[*a].total_cmp(&ln_p[*b]))
                .unwrap_or(0);
            taken.push(worst);
            let ones = vec![1.0; n];
            let gm = weighted_mean(data, &ones);
            params.covs.push(covariance(data, &ones, &gm, reg));
            params.means.push(data.row(worst).transpose());
            params.weights.push(1.0 / n as f64);
            reseeded = true;
            continue;
        }
        let m = weighted_mean(data, r);
        params.covs.push(covariance(data, r, &m, reg));
        params.means.push(m);
        params.weights.push(nk / n as f64);
    }
    (params, reseeded)
}

/// Fits a `k`-component mixture to the rows of `data`.
pub fn em_fit(data: &DMatrix<f64>, k: usize, opts: &EmOptions) -> Result<EmFit> {
    let (n, d) = data.shape();
    if n == 0 || d == 0 {
        return Err(Error::InvalidData("cannot fit a mixture to empty data".into()));
    }
    if k == 0 {
        return Err(invalid("component count must be at least 1"));
    }
    if n < k {
        return Err(Error::InvalidData(format!(
            "need at least {k} samples to fit {k} components, got {n}"
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("data contains non-finite values".into()));
    }
    if !(opts.reg_epsilon > 0.0) {
        return Err(invalid("reg_epsilon must be positive"));
    }

    let mut gmm = initial_params(data, k, opts).to_gmm()?;
    let (mut ll, mut resp, mut ln_p) = e_step(data, &gmm);
    let mut trace = vec![ll];
    let mut reseeds = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let (params, reseeded) = m_step(data, &resp, &ln_p, opts.reg_epsilon);
        gmm = params.to_gmm()?;
        let (next_ll, next_resp, next_ln_p) = e_step(data, &gmm);
        trace.push(next_ll);
        if reseeded {
            reseeds.push(trace.len() - 1);
        } else if next_ll - ll < opts.tol {
            converged = true;
            break;
        }
        ll = next_ll;
        resp = next_resp;
        ln_p = next_ln_p;
    }
    Ok(EmFit {
        gmm,
        log_likelihood: trace,
        converged,
        reseeds,
    })
}
