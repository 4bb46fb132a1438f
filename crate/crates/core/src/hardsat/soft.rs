//! Sampled (soft) constraint loss used for the warm start.

use crate::autodiff::{with_pooled_tape, Adam, Arith, Plain};
use crate::error::Result;
use crate::generator::{CtrlParams, Generator};
use crate::net::{CertView, CertificateNet};
use crate::problem::ReachAvoidSpec;
use crate::sampling::{self, Distribution, Mixture, Sample};
use crate::scalar::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Levels of the pointwise conditions: `V ≥ 0`, `V ≤ init_max` on `X0`,
/// `V ≥ unsafe_min` on `Xu`, `Φ ≤ -gen_eps` on `X̄`.
#[derive(Clone, Copy, Debug)]
pub struct SoftTargets {
    pub init_max: f64,
    pub unsafe_min: f64,
    pub gen_eps: f64,
}

impl SoftTargets {
    pub fn exact(beta: f64, eps_gen: f64) -> Self {
        Self {
            init_max: 1.0,
            unsafe_min: beta,
            gen_eps: eps_gen,
        }
    }
}

/// Per-sample violations `[ReLU(-V), ReLU(V - init_max), ReLU(unsafe_min - V),
/// ReLU(Φ + gen_eps)]` with inapplicable terms zero.
pub fn sample_terms<A: Arith>(
    a: &mut A,
    gen: &Generator,
    v: &CertView<A::V>,
    ctrl: CtrlParams<A::V>,
    s: &Sample,
    t: &SoftTargets,
) -> Result<[Option<A::V>; 4]> {
    let mut out = [None; 4];
    let (val, phi) = if s.gen {
        let (val, phi) = gen.eval(a, v, ctrl, &s.x)?;
        (val, Some(phi))
    } else {
        (crate::net::forward(a, v, &s.x), None)
    };
    let n = a.neg(val);
    out[0] = Some(a.relu(n));
    if s.init {
        let d = a.add_const(val, A::T::of(-t.init_max));
        out[1] = Some(a.relu(d));
    }
    if s.unsafe_ {
        let n = a.neg(val);
        let d = a.add_const(n, A::T::of(t.unsafe_min));
        out[2] = Some(a.relu(d));
    }
    if let Some(phi) = phi {
        let d = a.add_const(phi, A::T::of(t.gen_eps));
        out[3] = Some(a.relu(d));
    }
    Ok(out)
}

/// `Σ_i Σ_k w_k h_k(x_i)`.
pub fn soft_loss<A: Arith>(
    a: &mut A,
    gen: &Generator,
    v: &CertView<A::V>,
    ctrl: CtrlParams<A::V>,
    samples: &[Sample],
    t: &SoftTargets,
    weights: &[f64; 4],
) -> Result<A::V> {
    let mut terms = Vec::with_capacity(samples.len());
    for s in samples {
        let h = sample_terms(a, gen, v, ctrl, s, t)?;
        for k in 0..4 {
            if let Some(x) = h[k] {
                terms.push(a.scale(x, A::T::of(weights[k])));
            }
        }
    }
    Ok(if terms.is_empty() { a.zero() } else { a.sum(&terms) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmConfig {
    pub samples: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Targets are tightened to `init_max = 1 - init_margin`,
    /// `unsafe_min = β · unsafe_factor`, `gen_eps = ε · gen_factor`.
    pub init_margin: f64,
    pub unsafe_factor: f64,
    pub gen_factor: f64,
    pub mixture: Mixture,
    /// Samples per tape.
    pub chunk: usize,
    /// Fit the controller too in synthesis. When off the certificate is
    /// fitted to the initial closed loop, which avoids a certificate whose
    /// minimum sits in the initial set with the controller parking there.
    pub controller: bool,
}

impl Default for WarmConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            epochs: 2_000,
            batch: 256,
            lr: 5e-3,
            init_margin: 0.2,
            unsafe_factor: 1.25,
            gen_factor: 5.0,
            mixture: Mixture {
                unsafe_faces: 0.5,
                ..Mixture::default()
            },
            chunk: 64,
            controller: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmReport {
    pub epochs: usize,
    /// Soft loss with the tightened targets over all samples at the end.
    pub final_loss: f64,
    /// Samples violating the exact pointwise conditions at the end.
    pub violations: usize,
    /// Median `|Φ|` over the generator samples, the scale used for margins.
    pub phi_scale: f64,
}

pub fn full_loss(
    gen: &Generator,
    net: &CertificateNet,
    ctrl: Option<&[f64]>,
    samples: &[Sample],
    t: &SoftTargets,
    weights: &[f64; 4],
) -> Result<f64> {
    let v = net.view(&net.params);
    let parts: Vec<Result<f64>> = samples
        .par_chunks(256)
        .map(|c| {
            let mut p = Plain::<f64>::new();
            soft_loss(&mut p, gen, &v, ctrl, c, t, weights)
        })
        .collect();
    parts.into_iter().sum()
}

pub fn batch_gradient(
    gen: &Generator,
    net: &CertificateNet,
    ctrl: Option<&[f64]>,
    samples: &[Sample],
    t: &SoftTargets,
    weights: &[f64; 4],
    chunk: usize,
) -> Result<Vec<f64>> {
    let n_cert = net.params.len();
    let mut all = net.params.clone();
    if let Some(c) = ctrl {
        all.extend_from_slice(c);
    }
    let parts: Vec<Result<Vec<f64>>> = samples
        .par_chunks(chunk.max(1))
        .map(|c| {
            with_pooled_tape(&all, |tape| {
                let vars = tape.params();
                let v = net.view(&vars[..n_cert]);
                let cv = ctrl.map(|_| &vars[n_cert..]);
                let root = soft_loss(tape, gen, &v, cv, c, t, weights)?;
                tape.check_finite()?;
                Ok(tape.gradient(root))
            })
        })
        .collect();
    let mut grad = vec![0.0; all.len()];
    for p in parts {
        for (a, b) in grad.iter_mut().zip(p?) {
            *a += b;
        }
    }
    Ok(grad)
}

/// Minibatch Adam on the soft loss. Updates `net` (and `ctrl` when given).
#[allow(clippy::too_many_arguments)]
pub fn warm_start(
    spec: &ReachAvoidSpec,
    gen: &Generator,
    net: &mut CertificateNet,
    mut ctrl: Option<&mut Vec<f64>>,
    eps_gen: f64,
    weights: &[f64; 4],
    cfg: &WarmConfig,
    seed: u64,
) -> Result<WarmReport> {
    // a frozen controller is the one already inside `gen`
    let mut ctrl = if cfg.controller { ctrl.take() } else { None };
    let samples = sampling::sample_states(spec, &Distribution::Mixture(cfg.mixture), cfg.samples, seed)?;
    let t = SoftTargets {
        init_max: 1.0 - cfg.init_margin,
        unsafe_min: spec.beta * cfg.unsafe_factor,
        gen_eps: eps_gen * cfg.gen_factor,
    };
    let n_ctrl = ctrl.as_ref().map_or(0, |c| c.len());
    let mut adam = Adam::new(net.params.len() + n_ctrl, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epochs = 0;
    let mut pos = order.len();
    let mut batch = Vec::with_capacity(cfg.batch);
    while epochs < cfg.epochs {
        if epochs % 200 == 0 && epochs > 0 {
            let l = full_loss(gen, net, ctrl.as_deref().map(|c| c.as_slice()), &samples, &t, weights)?;
            if l == 0.0 {
                break;
            }
        }
        batch.clear();
        while batch.len() < cfg.batch.min(samples.len()) {
            if pos == order.len() {
                order.shuffle(&mut rng);
                pos = 0;
            }
            batch.push(samples[order[pos]].clone());
            pos += 1;
        }
        let g = batch_gradient(gen, net, ctrl.as_deref().map(|c| c.as_slice()), &batch, &t, weights, cfg.chunk)?;
        let mut all = net.params.clone();
        if let Some(c) = ctrl.as_deref() {
            all.extend_from_slice(c);
        }
        adam.step(&mut all, &g);
        let n_cert = net.params.len();
        net.params.copy_from_slice(&all[..n_cert]);
        if let Some(c) = ctrl.as_deref_mut() {
            c.copy_from_slice(&all[n_cert..]);
        }
        epochs += 1;
    }
    let cs = ctrl.as_deref().map(|c| c.as_slice());
    let final_loss = full_loss(gen, net, cs, &samples, &t, weights)?;
    let exact = SoftTargets::exact(spec.beta, eps_gen);
    let v = net.view(&net.params);
    let mut violations = 0;
    let mut phis = Vec::new();
    let mut p = Plain::<f64>::new();
    for s in &samples {
        let h = sample_terms(&mut p, gen, &v, cs, s, &exact)?;
        if h.iter().flatten().any(|x| *x > 0.0) {
            violations += 1;
        }
        if s.gen {
            phis.push(gen.eval(&mut p, &v, cs, &s.x)?.1.abs());
        }
    }
    phis.sort_by(f64::total_cmp);
    let phi_scale = if phis.is_empty() { 0.0 } else { phis[phis.len() / 2] };
    Ok(WarmReport {
        epochs,
        final_loss,
        violations,
        phi_scale,
    })
}
