//! Expectations under mixture densities in one and two dimensions.
//!
//! The adaptive integrator works on an axis-aligned box that truncates the
//! Gaussian tails (per-axis `μ ± 6σ` by default). The box is first cut at
//! every component's `μ ± 3σ` so no narrow peak can hide between nodes, then
//! panels are refined worst-first with a tensor Gauss-Kronrod 7/15 rule whose
//! `|K15 − G7|` difference is the error estimate. Integrands are
//! vector-valued so callers can share density evaluations across outputs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gmm::Gmm;
use crate::rng::{seeded, substream, Rng};
use crate::stats::{batches, McEstimate, Moments};

/// Densities below this are treated as zero to keep subnormals out of the
/// inner loops.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMethod {
    #[default]
    Adaptive,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationSpec {
    pub method: IntegrationMethod,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_evals: usize,
    pub mc_samples: usize,
    pub seed: u64,
    /// Half-width of the truncation box in per-axis standard deviations.
    pub truncation_sigmas: f64,
}

impl Default for IntegrationSpec {
    fn default() -> Self {
        IntegrationSpec {
            method: IntegrationMethod::Adaptive,
            abs_tol: 1e-4,
            rel_tol: 1e-6,
            max_evals: 4_000_000,
            mc_samples: 10_000,
            seed: 0,
            truncation_sigmas: 6.0,
        }
    }
}

impl IntegrationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(invalid("integration tolerances must be positive"));
        }
        if self.max_evals < 100 {
            return Err(invalid("max_evals must be at least 100"));
        }
        if self.method == IntegrationMethod::MonteCarlo && self.mc_samples < 2 {
            return Err(invalid("mc_samples must be at least 2"));
        }
        if !(self.truncation_sigmas > 0.0) {
            return Err(invalid("truncation_sigmas must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
    /// False when the evaluation budget ran out before the tolerance was met.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIntegral {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub evals: usize,
    pub converged: bool,
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const NODES: usize = 15;

/// Full 15-point node list with Kronrod and (zero-padded) Gauss weights.
fn rule() -> ([f64; NODES], [f64; NODES], [f64; NODES]) {
    let mut x = [0.0; NODES];
    let mut wk = [0.0; NODES];
    let mut wg = [0.0; NODES];
    for i in 0..8 {
        x[i] = -XGK[i];
        x[NODES - 1 - i] = XGK[i];
        wk[i] = WGK[i];
        wk[NODES - 1 - i] = WGK[i];
        if i % 2 == 1 {
            wg[i] = WG[i / 2];
            wg[NODES - 1 - i] = WG[i / 2];
        }
    }
    (x, wk, wg)
}

#[derive(Clone)]
struct Panel {
    lo: [f64; 2],
    hi: [f64; 2],
    est: Vec<f64>,
    err: Vec<f64>,
}

struct Key(f64, usize);

impl PartialEq for Key {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Key {
    fn cmp(&self, o: &Self) -> Ordering {
        // larger error first; older panel first on ties
        self.0.total_cmp(&o.0).then_with(|| o.1.cmp(&self.1))
    }
}

struct Integrator<F> {
    dim: usize,
    n_out: usize,
    f: F,
    x: [f64; NODES],
    wk: [f64; NODES],
    wg: [f64; NODES],
    point: [f64; 2],
    buf: Vec<f64>,
    evals: usize,
}

impl<F: FnMut(&[f64], &mut [f64])> Integrator<F> {
    fn eval_panel(&mut self, lo: [f64; 2], hi: [f64; 2]) -> Result<Panel> {
        let mut k = vec![0.0; self.n_out];
        let mut g = vec![0.0; self.n_out];
        let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let h = [0.5 * (hi[0] - lo[0]), 0.5 * (hi[1] - lo[1])];
        let ny = if self.dim == 2 { NODES } else { 1 };
        for i in 0..NODES {
            self.point[0] = c[0] + h[0] * self.x[i];
            for j in 0..ny {
                let (wk, wg) = if self.dim == 2 {
                    self.point[1] = c[1] + h[1] * self.x[j];
                    (self.wk[i] * self.wk[j], self.wg[i] * self.wg[j])
                } else {
                    (self.wk[i], self.wg[i])
                };
                (self.f)(&self.point[..self.dim], &mut self.buf);
                self.evals += 1;
                for o in 0..self.n_out {
                    let v = self.buf[o];
                    if !v.is_finite() {
                        return Err(Error::NonFiniteIntegrand(self.point[..self.dim].to_vec()));
                    }
                    k[o] += wk * v;
                    g[o] += wg * v;
                }
            }
        }
        let jac = if self.dim == 2 { h[0] * h[1] } else { h[0] };
        let est: Vec<f64> = k.iter().map(|v| v * jac).collect();
        let err = k.iter().zip(&g).map(|(a, b)| ((a - b) * jac).abs()).collect();
        Ok(Panel { lo, hi, est, err })
    }
}

fn converged(est: &[f64], err: &[f64], abs_tol: f64, rel_tol: f64) -> bool {
    est.iter()
        .zip(err)
        .all(|(v, e)| *e <= abs_tol.max(rel_tol * v.abs()))
}

/// Adaptive integral of a vector-valued `f` over a 1D or 2D box.
///
/// `breaks[axis]` lists interior cut points for the initial grid, which is
/// always evaluated in full; `max_evals` caps the refinement that follows.
/// Each call `f(y, out)` must fill `out[..n_out]`.
pub fn integrate_box<F>(
    bounds: &[(f64, f64)],
    breaks: &[Vec<f64>],
    n_out: usize,
    f: F,
    abs_tol: f64,
    rel_tol: f64,
    max_evals: usize,
) -> Result<VectorIntegral>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let dim = bounds.len();
    if !(1..=2).contains(&dim) {
        return Err(invalid(format!(
            "adaptive integration supports 1 or 2 dimensions, got {dim}; use the monte_carlo method"
        )));
    }
    if bounds.iter().any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
        return Err(invalid("integration bounds must be finite and increasing"));
    }
    let panel_cost = NODES.pow(dim as u32);
    let (x, wk, wg) = rule();
    let mut it = Integrator {
        dim,
        n_out,
        f,
        x,
        wk,
        wg,
        point: [0.0; 2],
        buf: vec![0.0; n_out],
        evals: 0,
    };

    let grid: Vec<Vec<f64>> = (0..dim)
        .map(|a| {
            let (lo, hi) = bounds[a];
            let tiny = 1e-9 * (hi - lo);
            let mut pts = vec![lo, hi];
            if let Some(b) = breaks.get(a) {
                pts.extend(b.iter().copied().filter(|v| *v > lo + tiny && *v < hi - tiny));
            }
            pts.sort_by(f64::total_cmp);
            pts.dedup_by(|a, b| (*a - *b).abs() <= tiny);
            pts
        })
        .collect();
    let ys: Vec<(f64, f64)> = if dim == 2 {
        grid[1].windows(2).map(|w| (w[0], w[1])).collect()
    } else {
        vec![(0.0, 0.0)]
    };

    let mut panels: Vec<Option<Panel>> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut total = vec![0.0; n_out];
    let mut total_err = vec![0.0; n_out];
    for xw in grid[0].windows(2) {
        for &(y0, y1) in &ys {
            let p = it.eval_panel([xw[0], y0], [xw[1], y1])?;
            for o in 0..n_out {
                total[o] += p.est[o];
                total_err[o] += p.err[o];
            }
            heap.push(Key(p.err.iter().fold(0.0, |a: f64, b| a.max(*b)), panels.len()));
            panels.push(Some(p));
        }
    }

    let children = 1usize << dim;
    let mut done = converged(&total, &total_err, abs_tol, rel_tol);
    while !done && it.evals + children * panel_cost <= max_evals {
        let Some(Key(_, idx)) = heap.pop() else { break };
        let p = panels[idx].take().expect("panel in heap is live");
        for o in 0..n_out {
            total[o] -= p.est[o];
            total_err[o] -= p.err[o];
        }
        let mid = [0.5 * (p.lo[0] + p.hi[0]), 0.5 * (p.lo[1] + p.hi[1])];
        let halves = |a: usize| [(p.lo[a], mid[a]), (mid[a], p.hi[a])];
        let ysplit: Vec<(f64, f64)> = if dim == 2 { halves(1).to_vec() } else { vec![(0.0, 0.0)] };
        for (x0, x1) in halves(0) {
            for &(y0, y1) in &ysplit {
                let c = it.eval_panel([x0, y0], [x1, y1])?;
                for o in 0..n_out {
                    total[o] += c.est[o];
                    total_err[o] += c.err[o];
                }
                heap.push(Key(c.err.iter().fold(0.0, |a: f64, b| a.max(*b)), panels.len()));
                panels.push(Some(c));
            }
        }
        done = converged(&total, &total_err, abs_tol, rel_tol);
    }

    // exact re-summation in panel order
    let mut values = vec![0.0; n_out];
    let mut errors = vec![0.0; n_out];
    for p in panels.iter().flatten() {
        for o in 0..n_out {
            values[o] += p.est[o];
            errors[o] += p.err[o];
        }
    }
    let ok = converged(&values, &errors, abs_tol, rel_tol);
    Ok(VectorIntegral {
        values,
        errors,
        evals: it.evals,
        converged: ok,
    })
}

/// Initial cut points at every positive-weight component's `μ ± 3σ`.
pub fn component_breaks(gmms: &[&Gmm]) -> Vec<Vec<f64>> {
    let d = gmms[0].dim();
    (0..d)
        .map(|a| {
            gmms.iter()
                .flat_map(|g| g.weights().iter().zip(g.components()))
                .filter(|(w, _)| **w > 0.0)
                .flat_map(|(_, c)| {
                    let s = c.axis_std()[a];
                    let m = c.mean()[a];
                    [m - 3.0 * s, m + 3.0 * s]
                })
                .collect()
        })
        .collect()
}

/// Union of the per-mixture truncation boxes.
pub fn union_box(gmms: &[&Gmm], sigmas: f64) -> Vec<(f64, f64)> {
    let mut b = gmms[0].bounding_box(sigmas);
    for g in &gmms[1..] {
        for (acc, (lo, hi)) in b.iter_mut().zip(g.bounding_box(sigmas)) {
            acc.0 = acc.0.min(lo);
            acc.1 = acc.1.max(hi);
        }
    }
    b
}

/// Mixture density with subnormal results flushed to zero.
pub(crate) fn floored_pdf(g: &Gmm, y: &[f64]) -> f64 {
    let v = g.pdf_unchecked(y);
    if v < DENSITY_FLOOR {
        0.0
    } else {
        v
    }
}

/// `∫ h(y)·g(y) dy` using the method selected in `spec`.
pub fn expect_under<H>(g: &Gmm, h: H, spec: &IntegrationSpec) -> Result<Integral>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    spec.validate()?;
    match spec.method {
        IntegrationMethod::MonteCarlo => {
            let e = expect_mc(g, &h, spec.mc_samples, &mut seeded(spec.seed))?;
            if !e.value.is_finite() {
                return Err(Error::NonFiniteIntegrand(vec![]));
            }
            Ok(Integral {
                value: e.value,
                error: e.std_error,
                evals: e.n,
                converged: true,
            })
        }
        IntegrationMethod::Adaptive => {
            if g.dim() > 2 {
                return Err(invalid(format!(
                    "adaptive integration supports d <= 2 (got {}); use the monte_carlo method",
                    g.dim()
                )));
            }
            let bounds = g.bounding_box(spec.truncation_sigmas);
            let breaks = component_breaks(&[g]);
            let r = integrate_box(
                &bounds,
                &breaks,
                1,
                |y, out| {
                    let d = floored_pdf(g, y);
                    out[0] = if d == 0.0 {
                        let v = h(y);
                        if v.is_finite() {
                            0.0
                        } else {
                            v
                        }
                    } else {
                        h(y) * d
                    };
                },
                spec.abs_tol,
                spec.rel_tol,
                spec.max_evals,
            )?;
            Ok(Integral {
                value: r.values[0],
                error: r.errors[0],
                evals: r.evals,
                converged: r.converged,
            })
        }
    }
}

/// Mean of `h` over `n` draws from `g`, with its standard error.
pub fn expect_mc<H>(g: &Gmm, h: H, n: usize, rng: &mut Rng) -> Result<McEstimate>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    if n < 2 {
        return Err(invalid("Monte Carlo expectation needs at least 2 samples"));
    }
    let master: u64 = rng.random();
    let d = g.dim();
    let parts: Vec<Moments> = batches(n)
        .into_par_iter()
        .map(|(b, len)| {
            let mut r = substream(master, &[b]);
            let mut y = vec![0.0; d];
            let mut m = Moments::default();
            for _ in 0..len {
                g.sample_into(&mut r, &mut y);
                m.push(h(&y));
            }
            m
        })
        .collect();
    let mut total = Moments::default();
    parts.iter().for_each(|m| total.merge(m));
    Ok(total.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::Gaussian;

    fn std_normal() -> Gmm {
        Gmm::single(Gaussian::univariate(0.0, 1.0).unwrap())
    }

    fn mix2d() -> Gmm {
        Gmm::new(
            vec![0.6, 0.4],
            vec![
                Gaussian::from_rows(vec![0.0, 0.0], &[vec![1.0, 0.3], vec![0.3, 0.5]]).unwrap(),
                Gaussian::from_rows(vec![2.5, -1.0], &[vec![0.2, 0.0], vec![0.0, 0.8]]).unwrap(),
            ],
        )
        .unwrap()
    }

    fn spec() -> IntegrationSpec {
        IntegrationSpec::default()
    }

    #[test]
    fn moments_of_standard_normal() {
        let s = spec();
        let g = std_normal();
        let one = expect_under(&g, |_| 1.0, &s).unwrap();
        assert!((one.value - 1.0).abs() < s.abs_tol && one.converged);
        assert!(expect_under(&g, |y| y[0], &s).unwrap().value.abs() < s.abs_tol);
        assert!((expect_under(&g, |y| y[0] * y[0], &s).unwrap().value - 1.0).abs() < 2.0 * s.abs_tol);
    }

    #[test]
    fn normalization_2d() {
        let s = spec();
        let r = expect_under(&mix2d(), |_| 1.0, &s).unwrap();
        assert!((r.value - 1.0).abs() < s.abs_tol, "{r:?}");
    }

    #[test]
    fn linearity_and_mixture_decomposition() {
        let s = spec();
        let g = mix2d();
        let h1 = |y: &[f64]| (y[0] - y[1]).sin();
        let h2 = |y: &[f64]| 1.0 / (1.0 + y[0] * y[0]);
        let e1 = expect_under(&g, h1, &s).unwrap().value;
        let e2 = expect_under(&g, h2, &s).unwrap().value;
        let both = expect_under(&g, |y| 2.0 * h1(y) - 0.5 * h2(y), &s).unwrap().value;
        assert!((both - (2.0 * e1 - 0.5 * e2)).abs() < 2.0 * s.abs_tol);

        let parts: f64 = g
            .weights()
            .iter()
            .zip(g.components())
            .map(|(w, c)| w * expect_under(&Gmm::single(c.clone()), h2, &s).unwrap().value)
            .sum();
        assert!((parts - e2).abs() < 2.0 * s.abs_tol);
    }

    #[test]
    fn bounded_integrand_stays_in_range_and_truncation_is_adequate() {
        let s = spec();
        let g = mix2d();
        let h = |y: &[f64]| 1.0 / (1.0 + (-3.0 * y[0] + y[1]).exp());
        let v6 = expect_under(&g, h, &s).unwrap().value;
        assert!(v6 >= -s.abs_tol && v6 <= 1.0 + s.abs_tol);
        let wide = IntegrationSpec {
            truncation_sigmas: 8.0,
            ..s.clone()
        };
        let v8 = expect_under(&g, h, &wide).unwrap().value;
        assert!((v6 - v8).abs() < s.abs_tol);
    }

    #[test]
    fn agrees_with_monte_carlo() {
        let s = spec();
        let g = mix2d();
        for (i, h) in [
            Box::new(|y: &[f64]| (0.7 * y[0]).cos() * y[1]) as Box<dyn Fn(&[f64]) -> f64 + Sync>,
            Box::new(|y: &[f64]| (-(y[0] - 1.0).powi(2)).exp()),
            Box::new(|y: &[f64]| y[0] * y[1] + 0.2),
        ]
        .into_iter()
        .enumerate()
        {
            let q = expect_under(&g, &h, &s).unwrap().value;
            let mc = expect_mc(&g, &h, 200_000, &mut seeded(i as u64)).unwrap();
            assert!((q - mc.value).abs() < 4.0 * mc.std_error + s.abs_tol, "{i}: {q} vs {mc:?}");
        }
    }

    #[test]
    fn mc_constant_is_exact_and_deterministic() {
        let g = mix2d();
        let e = expect_mc(&g, |_| 0.37, 10_000, &mut seeded(1)).unwrap();
        assert_eq!(e.value, 0.37);
        assert_eq!(e.std_error, 0.0);
        let a = expect_mc(&g, |y| y[0], 10_000, &mut seeded(2)).unwrap();
        let b = expect_mc(&g, |y| y[0], 10_000, &mut seeded(2)).unwrap();
        assert_eq!(a, b);
        assert!(expect_mc(&g, |_| 1.0, 1, &mut seeded(2)).is_err());
    }

    #[test]
    fn monte_carlo_method_via_spec() {
        let s = IntegrationSpec {
            method: IntegrationMethod::MonteCarlo,
            mc_samples: 20_000,
            ..spec()
        };
        let g3 = Gmm::single(Gaussian::isotropic(vec![0.0; 3], 1.0).unwrap());
        let r = expect_under(&g3, |y| y[0] * y[0], &s).unwrap();
        assert!((r.value - 1.0).abs() < 4.0 * r.error);
    }

    #[test]
    fn rejects_three_dimensional_adaptive_and_bad_integrands() {
        let g3 = Gmm::single(Gaussian::isotropic(vec![0.0; 3], 1.0).unwrap());
        assert!(expect_under(&g3, |_| 1.0, &spec()).is_err());
        assert!(matches!(
            expect_under(&std_normal(), |_| f64::NAN, &spec()),
            Err(Error::NonFiniteIntegrand(_))
        ));
        let bad = IntegrationSpec {
            max_evals: 10,
            ..spec()
        };
        assert!(expect_under(&std_normal(), |_| 1.0, &bad).is_err());
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let s = IntegrationSpec {
            abs_tol: 1e-300,
            rel_tol: 1e-300,
            max_evals: 2000,
            ..spec()
        };
        let r = expect_under(&mix2d(), |y| y[0].abs(), &s).unwrap();
        assert!(!r.converged);
    }
}
