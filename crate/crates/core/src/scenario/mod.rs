//! Scenario training of the last layer: `V` and `Φ` are linear in the output
//! weights for fixed hidden layers, so the sampled certificate conditions
//! form a linear program in `(θ_L, β)`.

pub mod lp;
pub mod pac;

use crate::autodiff::Plain;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::hardsat::soft::{self, WarmConfig, WarmReport};
use crate::hardsat::phi_scale;
use crate::net::{self, CertificateNet};
use crate::problem::{p_from_beta, ReachAvoidSpec};
use crate::sampling::{self, Distribution, Sample};
use crate::stats::{clopper_pearson, ProportionCi};
use lp::{LpOptions, Rows};
use pac::PacMethod;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `φ` and, on generator samples, `ψ`, each of length `d_v`: `V = φ·θ_L`
/// and `Φ = ψ·θ_L`.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub phi: Vec<f64>,
    pub psi: Option<Vec<f64>>,
}

/// Last-layer features at `x`. `φ_j = s_out h2_j(x)` (and 1 for the output
/// bias); `ψ_j` is the generator of `s_out h2_j`, the bias entry being 0.
pub fn features(gen: &Generator, net: &CertificateNet, x: &[f64], with_psi: bool) -> Result<Features> {
    let a = net.arch;
    let (n, m1, m2) = (a.n, a.m1, a.m2);
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let v = net.view(&net.params);
    let h = net::hidden(&mut Plain::<f64>::new(), &v, x, with_psi);
    let mut phi: Vec<f64> = h.h2.iter().map(|h| net.s_out * h).collect();
    if a.b3().is_some() {
        phi.push(1.0);
    }
    if !with_psi {
        return Ok(Features { phi, psi: None });
    }
    let (f, gg) = gen.closed_loop_f64(x)?;
    let pairs = gen.pairs();
    // t[i][k] = d1_k W1_ki / s_i, u[p][k] = q1_k W1_ki W1_kl / (s_i s_l)
    let t: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..m1).map(|k| h.d1[k] * v.w1(k, i) / net.s_in[i]).collect())
        .collect();
    let u: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(i, l)| {
            (0..m1)
                .map(|k| h.q1[k] * v.w1(k, i) * v.w1(k, l) / (net.s_in[i] * net.s_in[l]))
                .collect()
        })
        .collect();
    let mut psi = Vec::with_capacity(phi.len());
    let mut g = vec![0.0; n];
    for j in 0..m2 {
        let w2 = v.w2_row(j);
        for i in 0..n {
            g[i] = w2.iter().zip(&t[i]).map(|(a, b)| a * b).sum();
        }
        let mut s = 0.0;
        for i in 0..n {
            s += f[i] * h.d2[j] * g[i];
        }
        for (p, &(i, l)) in pairs.iter().enumerate() {
            let zz: f64 = w2.iter().zip(&u[p]).map(|(a, b)| a * b).sum();
            let hess = h.q2[j] * g[i] * g[l] + h.d2[j] * zz;
            let w = if i == l { 0.5 } else { 1.0 };
            s += w * gg[p] * hess;
        }
        psi.push(net.s_out * s);
    }
    if a.b3().is_some() {
        psi.push(0.0);
    }
    Ok(Features { phi, psi: Some(psi) })
}

/// Last-layer parameters `(W3, b3)` of a network, in feature order.
pub fn last_layer(net: &CertificateNet) -> Vec<f64> {
    net.params[net.arch.last_layer()].to_vec()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RowKind {
    NonNeg,
    Init,
    Unsafe,
    Gen,
}

/// The sampled constraints over `y = (θ_L, β)`:
/// `-φ·θ ≤ 0`, `φ·θ ≤ 1` on `X0`, `β - φ·θ ≤ 0` on `Xu`, `ψ·θ ≤ -ε` on `X̄`.
pub struct ScenarioRows {
    d_v: usize,
    eps_gen: f64,
    phi: Vec<f64>,
    psi: Vec<f64>,
    /// `(sample, kind, psi row)`.
    rows: Vec<(u32, RowKind, u32)>,
}

impl ScenarioRows {
    pub fn build(gen: &Generator, net: &CertificateNet, samples: &[Sample], eps_gen: f64) -> Result<Self> {
        let d_v = net.arch.d_v();
        let feats: Vec<Result<Features>> = samples
            .par_iter()
            .map(|s| features(gen, net, &s.x, s.gen))
            .collect();
        let mut phi = Vec::with_capacity(samples.len() * d_v);
        let mut psi = Vec::new();
        let mut rows = Vec::new();
        for (i, (s, f)) in samples.iter().zip(feats).enumerate() {
            let f = f?;
            if f.phi.iter().chain(f.psi.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("features of sample {i}")));
            }
            phi.extend_from_slice(&f.phi);
            let i = i as u32;
            rows.push((i, RowKind::NonNeg, 0));
            if s.init {
                rows.push((i, RowKind::Init, 0));
            }
            if s.unsafe_ {
                rows.push((i, RowKind::Unsafe, 0));
            }
            if let Some(p) = f.psi {
                rows.push((i, RowKind::Gen, (psi.len() / d_v) as u32));
                psi.extend_from_slice(&p);
            }
        }
        Ok(Self {
            d_v,
            eps_gen,
            phi,
            psi,
            rows,
        })
    }

    pub fn count(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for r in &self.rows {
            c[r.1 as usize] += 1;
        }
        c
    }

    /// Sample index of row `i`.
    pub fn sample(&self, i: usize) -> usize {
        self.rows[i].0 as usize
    }
}

impl Rows for ScenarioRows {
    fn dim(&self) -> usize {
        self.d_v + 1
    }
    fn len(&self) -> usize {
        self.rows.len()
    }
    fn row(&self, i: usize, a: &mut [f64]) -> f64 {
        let d = self.d_v;
        let (s, kind, p) = self.rows[i];
        let phi = &self.phi[s as usize * d..(s as usize + 1) * d];
        match kind {
            RowKind::NonNeg => {
                for j in 0..d {
                    a[j] = -phi[j];
                }
                a[d] = 0.0;
                0.0
            }
            RowKind::Init => {
                a[..d].copy_from_slice(phi);
                a[d] = 0.0;
                1.0
            }
            RowKind::Unsafe => {
                for j in 0..d {
                    a[j] = -phi[j];
                }
                a[d] = 1.0;
                0.0
            }
            RowKind::Gen => {
                a[..d].copy_from_slice(&self.psi[p as usize * d..(p as usize + 1) * d]);
                a[d] = 0.0;
                -self.eps_gen
            }
        }
    }
    fn group(&self, i: usize) -> usize {
        self.rows[i].1 as usize
    }
    fn groups(&self) -> usize {
        4
    }
    fn describe(&self, i: usize) -> String {
        let (s, kind, _) = self.rows[i];
        format!("{kind:?} at sample {s}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_samples: usize,
    pub delta: f64,
    /// Fixed `ε_gen`; when absent it is `eps_gen_rel` times the median `|Φ|`
    /// of the warm-started network.
    pub eps_gen: Option<f64>,
    pub eps_gen_rel: f64,
    pub distribution: Distribution,
    /// Box on the last-layer weights.
    pub theta_max: f64,
    pub beta_max: f64,
    pub lp: LpOptions,
    /// Fresh samples for the violation estimate; 0 skips it.
    pub holdout: usize,
    pub confidence: f64,
    /// Count `β` in the dimension of the bounds (`d_v + 1`); otherwise `d_v`.
    pub count_beta: bool,
    /// Soft pre-training of all layers before the last one is re-solved.
    pub warm: WarmConfig,
    pub weights: [f64; 4],
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            delta: 1e-9,
            eps_gen: None,
            eps_gen_rel: 1e-3,
            distribution: Distribution::default(),
            theta_max: 1e4,
            beta_max: 1e9,
            lp: LpOptions::default(),
            holdout: 1_000_000,
            confidence: 0.99,
            count_beta: true,
            warm: WarmConfig::default(),
            weights: [1.0; 4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Holdout {
    pub samples: usize,
    pub violations: usize,
    pub ci: ProportionCi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub n_samples: usize,
    pub rows: usize,
    pub rows_per_kind: [usize; 4],
    pub d_v: usize,
    pub pac_dim: usize,
    pub delta: f64,
    pub eps_closed_form: f64,
    pub eps_exact: f64,
    pub eps_gen: f64,
    pub beta: f64,
    pub p_certified: f64,
    pub theta: Vec<f64>,
    pub min_slack: f64,
    pub lp_rounds: usize,
    pub lp_iterations: usize,
    pub active_rows: usize,
    pub holdout: Option<Holdout>,
    /// Under uniform sampling, the closed-form `ε` as a volume: the measure
    /// of the region where the constraints may fail.
    pub violation_volume: Option<f64>,
    pub warm: Option<WarmReport>,
}

/// Pointwise violations of the certificate conditions at the current
/// parameters, without any optimisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedCheck {
    pub samples: usize,
    pub violations: usize,
    pub per_kind: [usize; 4],
    pub feasible: bool,
}

/// Checks the sampled constraints at the network's own last layer and `β`.
pub fn fixed_check(
    spec: &ReachAvoidSpec,
    gen: &Generator,
    net: &CertificateNet,
    dist: &Distribution,
    n: usize,
    beta: f64,
    eps_gen: f64,
    seed: u64,
) -> Result<FixedCheck> {
    let samples = sampling::sample_states(spec, dist, n, seed)?;
    let rows = ScenarioRows::build(gen, net, &samples, eps_gen)?;
    let mut y = last_layer(net);
    y.push(beta);
    let s = lp::slacks(&rows, &y);
    let mut per_kind = [0; 4];
    let mut bad = vec![false; samples.len()];
    for (i, v) in s.iter().enumerate() {
        if *v < -1e-9 {
            per_kind[rows.group(i)] += 1;
            bad[rows.sample(i)] = true;
        }
    }
    let violations = bad.iter().filter(|b| **b).count();
    Ok(FixedCheck {
        samples: n,
        violations,
        per_kind,
        feasible: violations == 0,
    })
}

/// Pointwise `h > tol` with the given last layer and `β`.
pub fn violated(gen: &Generator, net: &CertificateNet, s: &Sample, beta: f64, eps_gen: f64, tol: f64) -> Result<bool> {
    let v = net.view(&net.params);
    let mut p = Plain::<f64>::new();
    let (val, phi) = if s.gen {
        let (a, b) = gen.eval(&mut p, &v, None, &s.x)?;
        (a, Some(b))
    } else {
        (net::forward(&mut p, &v, &s.x), None)
    };
    Ok(-val > tol
        || (s.init && val - 1.0 > tol)
        || (s.unsafe_ && beta - val > tol)
        || phi.is_some_and(|phi| phi + eps_gen > tol))
}

/// Solves the scenario program on `N` samples drawn with `seed`, installs
/// the optimal last layer in `net`, and evaluates the violation rate on
/// fresh samples.
pub fn run(
    spec: &ReachAvoidSpec,
    gen: &Generator,
    net: &mut CertificateNet,
    cfg: &ScenarioConfig,
    eps_gen: f64,
    seed: u64,
) -> Result<ScenarioReport> {
    if cfg.n_samples == 0 {
        return Err(Error::Config("scenario needs at least one sample".into()));
    }
    let samples = sampling::sample_states(spec, &cfg.distribution, cfg.n_samples, seed)?;
    if !samples.iter().any(|s| s.unsafe_) {
        return Err(Error::Config("no unsafe sample was drawn; β is unbounded".into()));
    }
    let rows = ScenarioRows::build(gen, net, &samples, eps_gen)?;
    let d_v = net.arch.d_v();
    let mut c = vec![0.0; d_v + 1];
    c[d_v] = 1.0;
    let mut lower = vec![-cfg.theta_max; d_v + 1];
    let mut upper = vec![cfg.theta_max; d_v + 1];
    lower[d_v] = 1.0;
    upper[d_v] = cfg.beta_max;
    let sol = lp::solve(&c, &lower, &upper, &rows, &cfg.lp).map_err(|e| match e {
        Error::Infeasible(m) => Error::Infeasible(format!("scenario program: {m}")),
        e => e,
    })?;
    let theta = sol.y[..d_v].to_vec();
    let beta = sol.y[d_v];
    let r = net.arch.last_layer();
    net.params[r].copy_from_slice(&theta);

    let pac_dim = if cfg.count_beta { d_v + 1 } else { d_v };
    let (n, d) = (cfg.n_samples as u64, pac_dim as u64);
    let eps_closed_form = pac::pac_epsilon(n, d, cfg.delta, PacMethod::ClosedForm)?;
    let eps_exact = pac::pac_epsilon(n, d, cfg.delta, PacMethod::Exact)?;

    let holdout = if cfg.holdout > 0 {
        let fresh = sampling::sample_states(spec, &cfg.distribution, cfg.holdout, seed ^ 0x401d_0u64.rotate_left(17))?;
        let flags: Vec<Result<bool>> = fresh
            .par_iter()
            .map(|s| violated(gen, net, s, beta, eps_gen, 1e-9))
            .collect();
        let mut k = 0;
        for f in flags {
            k += f? as usize;
        }
        Some(Holdout {
            samples: cfg.holdout,
            violations: k,
            ci: clopper_pearson(k as u64, cfg.holdout as u64, cfg.confidence)?,
        })
    } else {
        None
    };
    Ok(ScenarioReport {
        n_samples: cfg.n_samples,
        rows: rows.len(),
        rows_per_kind: rows.count(),
        d_v,
        pac_dim,
        delta: cfg.delta,
        eps_closed_form,
        eps_exact,
        eps_gen,
        beta,
        p_certified: p_from_beta(beta),
        theta,
        min_slack: sol.min_slack,
        lp_rounds: sol.rounds,
        lp_iterations: sol.iterations,
        active_rows: sol.active_rows,
        holdout,
        violation_volume: match cfg.distribution {
            Distribution::Uniform => Some(eps_closed_form * spec.domain.volume()),
            Distribution::Mixture(_) => None,
        },
        warm: None,
    })
}

/// Warm start, `ε_gen` from the warmed network, then [`run`].
pub fn train(
    spec: &ReachAvoidSpec,
    gen: &Generator,
    net: &mut CertificateNet,
    cfg: &ScenarioConfig,
    seed: u64,
) -> Result<ScenarioReport> {
    if !(cfg.eps_gen_rel > 0.0) || cfg.eps_gen.is_some_and(|e| !(e > 0.0)) {
        return Err(Error::Config("eps_gen and eps_gen_rel must be positive".into()));
    }
    let warm = if cfg.warm.epochs > 0 {
        let eps_warm = match cfg.eps_gen {
            Some(e) => e,
            None => cfg.eps_gen_rel * phi_scale(spec, gen, net, None, 2_000, seed ^ 0x9e37)?.max(1e-12),
        };
        Some(soft::warm_start(spec, gen, net, None, eps_warm, &cfg.weights, &cfg.warm, seed)?)
    } else {
        None
    };
    let eps_gen = match cfg.eps_gen {
        Some(e) => e,
        None => {
            let sc = match &warm {
                Some(w) => w.phi_scale,
                None => phi_scale(spec, gen, net, None, 2_000, seed ^ 0x9e37)?,
            };
            (cfg.eps_gen_rel * sc).max(1e-12)
        }
    };
    let mut r = run(spec, gen, net, cfg, eps_gen, seed.wrapping_add(1))?;
    r.warm = warm;
    Ok(r)
}
