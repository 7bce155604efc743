//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its verdict line; exits non-zero if any criterion fails.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use bci_gmm::belief::{batch_posterior, StimulusLog};
use bci_gmm::divergence::{kl_gauss_1d, kl_mc};
use bci_gmm::gmm::{Gaussian, Gmm};
use bci_gmm::policy::{tem_all, tem_expected_posteriors, tem_select, PolicyKind};
use bci_gmm::quadrature::{expect_mc, IntegrationSpec};
use bci_gmm::rng::{seeded, substream, Rng};
use bci_gmm::sim::{run_monte_carlo, CdfResult, Scenario, SimConfig};
use bci_gmm::transfer::{alpha, TransferConfig, TransferState, DEFAULT_B};
use bci_gmm::{Belief, ClassModels};
use rand::Rng as _;

const Z99: f64 = 2.575_829_303_548_901;
const RUNS: usize = 2048;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

/// Two-sided Wilson score interval.
fn wilson(p: f64, n: usize) -> (f64, f64) {
    let n = n as f64;
    let z2 = Z99 * Z99;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z99 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    (centre - half, centre + half)
}

/// True unless `a` is significantly above `b`.
fn not_above(a: f64, b: f64, n: usize) -> bool {
    wilson(a, n).0 <= wilson(b, n).1
}

fn gauss2(mean: [f64; 2], cov: [f64; 3]) -> Gaussian {
    Gaussian::from_rows(mean.to_vec(), &[vec![cov[0], cov[2]], vec![cov[2], cov[1]]]).unwrap()
}

// ---------------------------------------------------------------- oracles

/// Mixture density from the explicit 2×2 (or 1×1) normal formula.
fn pdf_direct(g: &Gmm, y: &[f64]) -> f64 {
    g.weights()
        .iter()
        .zip(g.components())
        .map(|(w, c)| {
            let m = c.mean();
            let s = c.cov();
            match y.len() {
                1 => {
                    let v = s[(0, 0)];
                    let d = y[0] - m[0];
                    w * (-0.5 * d * d / v).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
                }
                2 => {
                    let (a, b, d) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
                    let det = a * d - b * b;
                    let (x0, x1) = (y[0] - m[0], y[1] - m[1]);
                    let q = (d * x0 * x0 - 2.0 * b * x0 * x1 + a * x1 * x1) / det;
                    w * (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
                }
                _ => unreachable!(),
            }
        })
        .sum()
}

/// Updated posterior after showing `u` and observing `y`, by Bayes' rule.
fn posterior_direct(b: &[f64], u: usize, y: &[f64], m: &ClassModels) -> Vec<f64> {
    let (l0, l1) = (pdf_direct(&m.f0, y), pdf_direct(&m.f1, y));
    let num: Vec<f64> = (0..b.len()).map(|k| b[k] * if k == u { l1 } else { l0 }).collect();
    let z: f64 = num.iter().sum();
    num.iter().map(|v| v / z).collect()
}

/// Double-double arithmetic for the extended-precision posterior.
#[derive(Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn from(x: f64) -> Dd {
        Dd(x, 0.0)
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd(s, (a - (s - bb)) + (b - bb))
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.0, o.0);
        let t = Dd::two_sum(self.1, o.1);
        let hi = Dd::two_sum(s.0, s.1 + t.0);
        Dd::two_sum(hi.0, hi.1 + t.1)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p) + (self.0 * o.1 + self.1 * o.0);
        Dd::two_sum(p, e)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.add(o.mul(Dd::from(-q1)));
        let q2 = r.0 / o.0;
        let r = r.add(o.mul(Dd::from(-q2)));
        let q3 = r.0 / o.0;
        Dd::two_sum(q1, q2).add(Dd::from(q3))
    }

    fn value(self) -> f64 {
        self.0 + self.1
    }
}

// --------------------------------------------------------------- fixtures

fn random_spd(rng: &mut Rng, scale: f64) -> [f64; 3] {
    let (a, b, c): (f64, f64, f64) = (rng.random_range(0.3..1.2), rng.random_range(-0.6..0.6), rng.random_range(0.3..1.2));
    // L Lᵀ with L = [[a, 0], [b, c]]
    [scale * a * a, scale * (b * b + c * c), scale * a * b]
}

fn random_gmm(rng: &mut Rng, centre: [f64; 2], k: usize) -> Gmm {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.3..1.0)).collect();
    let comps = (0..k)
        .map(|_| {
            let m = [centre[0] + rng.random_range(-1.2..1.2), centre[1] + rng.random_range(-1.2..1.2)];
            let scale = rng.random_range(0.4..1.0);
            gauss2(m, random_spd(rng, scale))
        })
        .collect();
    Gmm::from_unnormalized(w, comps).unwrap()
}

fn random_models_2d(rng: &mut Rng) -> ClassModels {
    let f0 = random_gmm(rng, [0.0, 0.0], 3);
    let shift = [rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0)];
    let f1 = random_gmm(rng, shift, 3);
    ClassModels::new(f0, f1).unwrap()
}

fn random_belief(rng: &mut Rng, c: usize) -> Belief {
    let raw: Vec<f64> = (0..c).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let s: f64 = raw.iter().sum();
    Belief::from_probs(raw.iter().map(|v| v / s).collect()).unwrap()
}

/// 1D mixtures whose KL(f1‖f0) is about 0.9 nats.
fn moderate_1d() -> ClassModels {
    let shift = 1.205;
    let comps = |s: f64| {
        vec![
            Gaussian::univariate(s, 0.6).unwrap(),
            Gaussian::univariate(s - 0.8, 0.5).unwrap(),
            Gaussian::univariate(s + 0.9, 0.4).unwrap(),
        ]
    };
    ClassModels::new(
        Gmm::new(vec![0.5, 0.3, 0.2], comps(0.0)).unwrap(),
        Gmm::new(vec![0.5, 0.3, 0.2], comps(shift)).unwrap(),
    )
    .unwrap()
}

/// 2D mixtures with KL(f1‖f0) near 8: the target response is sharply
/// concentrated on the first axis, the second axis is uninformative.
fn separated_2d() -> ClassModels {
    let (s2, d) = (0.065f64 * 0.065, 3.4);
    let f0 = Gmm::new(
        vec![0.4, 0.35, 0.25],
        vec![
            gauss2([0.0, 0.0], [1.0, 0.8, 0.1]),
            gauss2([-0.6, 1.2], [0.8, 0.6, 0.0]),
            gauss2([0.5, -1.0], [0.9, 0.7, -0.1]),
        ],
    )
    .unwrap();
    let f1 = Gmm::new(
        vec![0.4, 0.35, 0.25],
        vec![
            gauss2([d, 0.0], [s2, 0.8, 0.0]),
            gauss2([d + 0.1, 1.2], [s2, 0.6, 0.0]),
            gauss2([d - 0.1, -1.0], [s2, 0.7, 0.0]),
        ],
    )
    .unwrap();
    ClassModels::new(f0, f1).unwrap()
}

/// Source models for transfer; `shift` moves each component along the first
/// axis by the given multiple of its standard deviation there.
fn transfer_models(shift0: [f64; 3], shift1: [f64; 3]) -> ClassModels {
    let comp = |m: [f64; 2], cov: [f64; 3], k: f64| gauss2([m[0] + k * cov[0].sqrt(), m[1]], cov);
    let f0 = Gmm::new(
        vec![0.5, 0.3, 0.2],
        vec![
            comp([0.0, 0.0], [0.64, 0.5, 0.1], shift0[0]),
            comp([-1.5, 1.5], [0.36, 0.4, 0.0], shift0[1]),
            comp([1.0, -1.5], [0.36, 0.5, -0.1], shift0[2]),
        ],
    )
    .unwrap();
    let f1 = Gmm::new(
        vec![0.7, 0.2, 0.1],
        vec![
            comp([4.0, 3.0], [0.49, 0.5, 0.1], shift1[0]),
            comp([5.5, 1.5], [0.36, 0.4, 0.0], shift1[1]),
            comp([3.0, 5.0], [0.36, 0.4, 0.0], shift1[2]),
        ],
    )
    .unwrap();
    ClassModels::new(f0, f1).unwrap()
}

// -------------------------------------------------------------- criteria

fn kl_1d_closed_form(mp: f64, vp: f64, mq: f64, vq: f64) -> f64 {
    ((vq / vp).sqrt()).ln() + (vp + (mp - mq).powi(2)) / (2.0 * vq) - 0.5
}

fn criterion_1() -> Verdict {
    let mut rng = seeded(101);
    let ((hits, formula_ok), t) = timed(|| {
        let mut hits = 0;
        let mut formula_ok = true;
        for i in 0..20 {
            let (mp, mq) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (vp, vq): (f64, f64) = (rng.random_range(0.25..4.0), rng.random_range(0.25..4.0));
            let (p, q) = (Gaussian::univariate(mp, vp).unwrap(), Gaussian::univariate(mq, vq).unwrap());
            let exact = kl_gauss_1d(&p, &q).unwrap();
            formula_ok &= (exact - kl_1d_closed_form(mp, vp, mq, vq)).abs() < 1e-12;
            let est = kl_mc(&Gmm::single(p), &Gmm::single(q), 10_000, &mut seeded(1000 + i)).unwrap();
            if (est.value - exact).abs() < 4.0 * est.std_error {
                hits += 1;
            }
        }
        (hits, formula_ok)
    });
    verdict(
        hits >= 19 && formula_ok && t < Duration::from_secs(5),
        format!("{hits}/20 within 4 SE, closed form ok={formula_ok}, {:.2?}", t),
    )
}

fn criterion_2() -> Verdict {
    let mut rng = seeded(202);
    let c = 4;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = random_models_2d(&mut rng);
        let target = rng.random_range(0..c);
        let mut log = StimulusLog::new();
        for _ in 0..20 {
            let u = rng.random_range(0..c);
            let mut y = vec![0.0; 2];
            m.class(u == target).sample_into(&mut rng, &mut y);
            log.push(u, y);
        }
        let got = batch_posterior(&log, &m, c).unwrap();
        // uniform prior; each step rescaled by its largest likelihood
        let mut prod = vec![Dd::from(1.0); c];
        for (u, y) in log.iter() {
            let (l0, l1) = (pdf_direct(&m.f0, y), pdf_direct(&m.f1, y));
            let top = Dd::from(l0.max(l1));
            for (k, p) in prod.iter_mut().enumerate() {
                let l = Dd::from(if k == u { l1 } else { l0 });
                *p = p.mul(l.div(top));
            }
        }
        let z = prod.iter().fold(Dd::from(0.0), |a, p| a.add(*p));
        for (k, p) in prod.iter().enumerate() {
            worst = worst.max((p.div(z).value() - got.belief.probs()[k]).abs());
        }
    }
    verdict(worst < 1e-10, format!("max |batch - extended| = {worst:.3e} over 100 logs"))
}

struct C3 {
    verdict: Verdict,
    csv: String,
    models: Vec<ClassModels>,
    beliefs: Vec<Belief>,
}

fn criterion_3() -> C3 {
    let spec = IntegrationSpec::default();
    let mut rng = seeded(303);
    let mut csv = String::from("fixture,u,k,quad_marginal,mc_marginal,mc_marginal_se,quad_target,mc_target,mc_target_se\n");
    let (mut entries, mut bad, mut same_u) = (0, 0, 0);
    let mut notes = Vec::new();
    let mut models = Vec::new();
    let mut beliefs = Vec::new();
    for fx in 0..10u64 {
        let m = random_models_2d(&mut rng);
        let b = random_belief(&mut rng, 4);
        let p = b.probs().to_vec();
        let mut mc_obj = vec![0.0; 4];
        let mut quad_obj = vec![0.0; 4];
        for u in 0..4 {
            let e = tem_expected_posteriors(u, &b, &m, &spec).unwrap();
            quad_obj[u] = e.objective;
            let g = Gmm::combine(&[(p[u], &m.f1), (1.0 - p[u], &m.f0)]).unwrap();
            for k in 0..4 {
                let h = |y: &[f64]| posterior_direct(&p, u, y, &m)[k];
                let mm = expect_mc(&g, h, 200_000, &mut substream(fx, &[u as u64, k as u64, 0])).unwrap();
                let mt = expect_mc(m.class(k == u), h, 200_000, &mut substream(fx, &[u as u64, k as u64, 1])).unwrap();
                mc_obj[u] += p[k] * mt.value;
                for (q, s) in [(e.marginal[k], mm), (e.target[k], mt)] {
                    entries += 1;
                    if (q - s.value).abs() > 4.0 * s.std_error {
                        bad += 1;
                        notes.push(format!("fixture {fx} u={u} k={k}: {q:.6} vs {:.6}±{:.1e}", s.value, s.std_error));
                    }
                }
                writeln!(
                    csv,
                    "{fx},{u},{k},{},{},{},{},{},{}",
                    e.marginal[k], mm.value, mm.std_error, e.target[k], mt.value, mt.std_error
                )
                .unwrap();
            }
        }
        let uq = tem_select(&b, &m, &spec).unwrap();
        let um = bci_gmm::policy::argmax_with_ties(&mc_obj);
        if uq == um {
            same_u += 1;
        } else {
            notes.push(format!(
                "fixture {fx}: quadrature u*={uq} MC u*={um}, objective gap {:.2e}",
                (quad_obj[uq] - quad_obj[um]).abs()
            ));
        }
        models.push(m);
        beliefs.push(b);
    }
    let mut detail = format!("{}/{entries} entries within 4 SE, u* agrees {same_u}/10", entries - bad);
    for n in notes {
        detail += &format!("\n      {n}");
    }
    C3 {
        verdict: verdict(bad == 0 && same_u >= 9, detail),
        csv,
        models,
        beliefs,
    }
}

fn sweep(models: &ClassModels, cfg: &SimConfig, policies: &[PolicyKind], threads: usize) -> (CdfResult, Duration) {
    let sc = Scenario::matched(models.clone());
    pool(threads).install(|| timed(|| run_monte_carlo(cfg, &sc, RUNS, policies).unwrap()))
}

fn curve(res: &CdfResult, p: PolicyKind) -> &[f64] {
    &res.curve(p).unwrap().curve
}

fn criterion_4(threads: usize) -> (Verdict, String) {
    let m = moderate_1d();
    let kl = kl_mc(&m.f1, &m.f0, 200_000, &mut seeded(404)).unwrap();
    let cfg = SimConfig {
        classes: 4,
        threshold: 0.95,
        max_steps: 64,
        seed: 404,
        ..Default::default()
    };
    let (res, t) = sweep(&m, &cfg, &PolicyKind::ALL, threads);
    let n = RUNS;
    let oracle = curve(&res, PolicyKind::Oracle);
    let mut failures = Vec::new();
    for p in PolicyKind::ALL.iter().filter(|p| **p != PolicyKind::Oracle) {
        for (t, (a, o)) in curve(&res, *p).iter().zip(oracle).enumerate() {
            if !not_above(*a, *o, n) {
                failures.push(format!("{p} above oracle at t={}", t + 1));
            }
        }
    }
    let random = curve(&res, PolicyKind::Random);
    for p in [PolicyKind::Tem, PolicyKind::Favorite, PolicyKind::RoundRobin] {
        for (t, (r, x)) in random.iter().zip(curve(&res, p)).enumerate().skip(4) {
            if !not_above(*r, *x, n) {
                failures.push(format!("random above {p} at t={}", t + 1));
            }
        }
    }
    let (tem, fav) = (curve(&res, PolicyKind::Tem), curve(&res, PolicyKind::Favorite));
    for (t, (a, b)) in tem.iter().zip(fav).enumerate() {
        if !(not_above(*a, *b, n) && not_above(*b, *a, n)) {
            failures.push(format!("tem and favorite separate at t={}", t + 1));
        }
    }
    let kl_ok = (0.85..=0.95).contains(&kl.value);
    let at = |p, t: usize| curve(&res, p)[t - 1];
    let detail = format!(
        "KL={:.3}±{:.3}; at t=8 oracle {:.3} tem {:.3} favorite {:.3} round_robin {:.3} random {:.3}; {} violations; {:.2?}{}",
        kl.value,
        kl.std_error,
        at(PolicyKind::Oracle, 8),
        at(PolicyKind::Tem, 8),
        at(PolicyKind::Favorite, 8),
        at(PolicyKind::RoundRobin, 8),
        at(PolicyKind::Random, 8),
        failures.len(),
        t,
        failures.iter().take(5).map(|f| format!("\n      {f}")).collect::<String>()
    );
    (
        verdict(failures.is_empty() && kl_ok && t < Duration::from_secs(600), detail),
        res.to_csv_string(),
    )
}

fn criterion_5(threads: usize) -> (Verdict, String) {
    let m = separated_2d();
    let kl = kl_mc(&m.f1, &m.f0, 200_000, &mut seeded(505)).unwrap();
    let cfg = SimConfig {
        seed: 505,
        ..Default::default()
    };
    let (res, t) = sweep(&m, &cfg, &PolicyKind::ALL, threads);
    let within5: Vec<(PolicyKind, f64)> = PolicyKind::ALL.iter().map(|p| (*p, curve(&res, *p)[4])).collect();
    let most = within5.iter().filter(|(_, v)| *v >= 0.8).count();
    let oracle1 = curve(&res, PolicyKind::Oracle)[0];
    let kl_ok = (7.5..=8.5).contains(&kl.value);
    let detail = format!(
        "KL={:.3}; success by t=5: {}; {most}/6 at >= 0.8; oracle at t=1 {:.4}; {:.2?}",
        kl.value,
        within5.iter().map(|(p, v)| format!("{p} {v:.3}")).collect::<Vec<_>>().join(", "),
        oracle1,
        t
    );
    (verdict(most >= 4 && oracle1 >= 0.99 && kl_ok, detail), res.to_csv_string())
}

fn stream(state: &mut TransferState, source: &ClassModels, n: usize, rng: &mut Rng, mut each: impl FnMut(usize, &TransferState)) {
    let mut y = vec![0.0; source.dim()];
    for i in 0..n {
        source.class(i % 5 == 0).sample_into(rng, &mut y);
        state.transfer_step(y.clone(), None).unwrap();
        each(i + 1, state);
    }
}

fn criterion_6() -> (Verdict, String) {
    let source = transfer_models([0.0; 3], [0.0; 3]);
    let dest = transfer_models([1.0, 0.5, 0.5], [1.0, 0.5, 0.5]);
    let cfg = TransferConfig {
        b_coeff: DEFAULT_B,
        ratio: Some(0.2),
        batch_interval: 1,
    };
    let kl = |a: &Gmm, b: &Gmm, s: u64| kl_mc(a, b, 10_000, &mut seeded(s)).unwrap().value;
    let mut csv = String::from("step,kl_f0,kl_f1,alpha_mean\n");
    let mut st = TransferState::new(source.clone(), &cfg, 5).unwrap();
    let mut last_alpha = 0.0;
    let mut y = vec![0.0; 2];
    let mut rng = seeded(606);
    for i in 0..600 {
        dest.class(i % 5 == 0).sample_into(&mut rng, &mut y);
        if let Some(r) = st.transfer_step(y.clone(), None).unwrap() {
            last_alpha = r.alpha_mean();
        }
        if (i + 1) % 50 == 0 {
            let m = st.current();
            writeln!(csv, "{},{},{},{}", i + 1, kl(&m.f0, &dest.f0, 1), kl(&m.f1, &dest.f1, 2), last_alpha).unwrap();
        }
    }
    let before = [kl(&source.f0, &dest.f0, 1), kl(&source.f1, &dest.f1, 2)];
    let after = [kl(&st.current().f0, &dest.f0, 1), kl(&st.current().f1, &dest.f1, 2)];
    let moved = (0..2).all(|c| after[c] < 0.5 * before[c]);

    let mut same = TransferState::new(source.clone(), &cfg, 5).unwrap();
    stream(&mut same, &source, 600, &mut seeded(607), |_, _| {});
    let drift = [kl(&same.current().f0, &source.f0, 3), kl(&same.current().f1, &source.f1, 4)];
    let stays = drift.iter().all(|d| *d < 0.1);
    let detail = format!(
        "nontarget {:.4} -> {:.4} (ratio {:.3}), target {:.4} -> {:.4} (ratio {:.3}); source stream drift {:.4}, {:.4}",
        before[0],
        after[0],
        after[0] / before[0],
        before[1],
        after[1],
        after[1] / before[1],
        drift[0],
        drift[1]
    );
    (verdict(moved && stays, detail), csv)
}

fn criterion_7() -> Verdict {
    let zero = alpha(0, 0.03) == 0.0;
    let increasing = (0..1000).all(|n| alpha(n + 1, 0.03) > alpha(n, 0.03));
    let top = alpha(1000, 0.03);
    verdict(
        zero && increasing && top > 1.0 - 1e-10,
        format!("alpha(0)=0: {zero}, strictly increasing: {increasing}, alpha(1000)=1-{:.2e}", 1.0 - top),
    )
}

fn criterion_8(c3: &C3) -> Verdict {
    let spec = IntegrationSpec::default();
    let mut cases: Vec<(ClassModels, Belief)> = c3.models.iter().cloned().zip(c3.beliefs.iter().cloned()).collect();
    let sep = separated_2d();
    for p in [[0.25; 4], [0.7, 0.1, 0.1, 0.1], [0.97, 0.01, 0.01, 0.01]] {
        cases.push((sep.clone(), Belief::from_probs(p.to_vec()).unwrap()));
    }
    let single = pool(1);
    let mut times: Vec<Duration> = single.install(|| {
        cases
            .iter()
            .map(|(m, b)| timed(|| tem_all(b, m, &spec).unwrap()).1)
            .collect()
    });
    times.sort();
    let worst = *times.last().unwrap();

    // a full sweep on a moderately separated 2D pair, where sessions run long
    let m = c3.models[0].clone();
    let kl = kl_mc(&m.f1, &m.f0, 100_000, &mut seeded(808)).unwrap();
    let cfg = SimConfig {
        seed: 808,
        ..Default::default()
    };
    let (res, t) = sweep(&m, &cfg, &[PolicyKind::Tem], 4);
    let last = *curve(&res, PolicyKind::Tem).last().unwrap();
    verdict(
        worst < Duration::from_millis(250) && t < Duration::from_secs(900),
        format!(
            "single decision median {:.2?}, max {:.2?} over {} cases; 2048-run TEM sweep (KL={:.2}, {} steps, success {:.3}) {:.2?} with 4 workers",
            times[times.len() / 2],
            worst,
            times.len(),
            kl.value,
            cfg.max_steps,
            last,
            t
        ),
    )
}

fn criterion_9(first: &[(&str, String)], second: &[(&str, String)]) -> Verdict {
    let mismatched: Vec<&str> = first
        .iter()
        .zip(second)
        .filter(|(a, b)| a.1 != b.1)
        .map(|(a, _)| a.0)
        .collect();
    verdict(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{} CSVs byte-identical between 4 and 1 workers", first.len())
        } else {
            format!("differing outputs: {}", mismatched.join(", "))
        },
    )
}

fn report(id: usize, name: &str, v: &Verdict) {
    println!("[{}] criterion {id}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
}

fn main() {
    // `cargo test -- --list` and filters from the harness are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut all = true;
    let mut check = |id, name, v: Verdict| {
        report(id, name, &v);
        all &= v.pass;
    };
    check(1, "KL Monte Carlo vs closed form", criterion_1());
    check(2, "batch posterior vs extended precision", criterion_2());
    let c3 = pool(4).install(criterion_3);
    let c3_csv = c3.csv.clone();
    let (v4, csv4) = criterion_4(4);
    let (v5, csv5) = criterion_5(4);
    let (v6, csv6) = pool(4).install(criterion_6);
    let v8 = criterion_8(&c3);
    check(3, "TEM quadrature vs Monte Carlo", c3.verdict);
    check(4, "moderate-separation convergence curves", v4);
    check(5, "well-separated regime", v5);
    check(6, "transfer learning", v6);
    check(7, "alpha schedule", criterion_7());
    check(8, "performance", v8);

    let second_c3 = pool(1).install(criterion_3).csv;
    let second = [
        ("criterion 3", second_c3),
        ("criterion 4", criterion_4(1).1),
        ("criterion 5", criterion_5(1).1),
        ("criterion 6", pool(1).install(criterion_6).1),
    ];
    let first = [("criterion 3", c3_csv), ("criterion 4", csv4), ("criterion 5", csv5), ("criterion 6", csv6)];
    check(9, "determinism across worker counts", criterion_9(&first, &second));

    if !all {
        eprintln!("acceptance: at least one criterion failed");
        std::process::exit(1);
    }
}
