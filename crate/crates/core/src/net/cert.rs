//! The certificate network
//! `V(x) = s_out · W3ᵀ σ(W2 σ(W1 (x ⊘ s_in) + b1) + b2) + b3`
//! and its closed-form spatial derivatives.

use crate::autodiff::{Arith, ParamStore, Plain};
use crate::error::{Error, Result};
use crate::scalar::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertArch {
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
    /// Output bias `b3`, added after the `s_out` scaling.
    pub out_bias: bool,
}

impl CertArch {
    pub fn new(n: usize, m1: usize, m2: usize, out_bias: bool) -> Result<Self> {
        if n == 0 || m1 == 0 || m2 == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        Ok(Self { n, m1, m2, out_bias })
    }

    pub fn w1(&self) -> Range<usize> {
        0..self.m1 * self.n
    }
    pub fn b1(&self) -> Range<usize> {
        let s = self.w1().end;
        s..s + self.m1
    }
    pub fn w2(&self) -> Range<usize> {
        let s = self.b1().end;
        s..s + self.m2 * self.m1
    }
    pub fn b2(&self) -> Range<usize> {
        let s = self.w2().end;
        s..s + self.m2
    }
    pub fn w3(&self) -> Range<usize> {
        let s = self.b2().end;
        s..s + self.m2
    }
    pub fn b3(&self) -> Option<usize> {
        self.out_bias.then(|| self.w3().end)
    }

    pub fn n_params(&self) -> usize {
        self.w3().end + self.out_bias as usize
    }

    /// Last-layer parameters `(W3, b3)`, the scenario decision variables.
    pub fn last_layer(&self) -> Range<usize> {
        self.w3().start..self.n_params()
    }

    pub fn d_v(&self) -> usize {
        self.m2 + self.out_bias as usize
    }

    pub fn param_store<T: Clone>(&self, params: &[T]) -> ParamStore<T> {
        let mut s = ParamStore::new();
        s.push_block("W1", &params[self.w1()]);
        s.push_block("b1", &params[self.b1()]);
        s.push_block("W2", &params[self.w2()]);
        s.push_block("b2", &params[self.b2()]);
        s.push_block("W3", &params[self.w3()]);
        if let Some(i) = self.b3() {
            s.push_block("b3", &params[i..i + 1]);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateNet {
    pub arch: CertArch,
    pub s_in: Vec<f64>,
    pub s_out: f64,
    pub params: Vec<f64>,
}

/// Initialisation ranges. Hidden weights are uniform in
/// `±gain·sqrt(3/fan_in)`, hidden biases uniform in `±bias`, `W3` uniform in
/// `[0, w3_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertInit {
    pub gain: f64,
    pub bias: f64,
    pub w3_max: f64,
}

impl Default for CertInit {
    fn default() -> Self {
        Self {
            gain: 2.0,
            bias: 1.0,
            w3_max: 0.1,
        }
    }
}

impl CertificateNet {
    pub fn zeros(arch: CertArch, s_in: Vec<f64>, s_out: f64) -> Result<Self> {
        if s_in.len() != arch.n {
            return Err(Error::DimensionMismatch {
                expected: arch.n,
                got: s_in.len(),
            });
        }
        if s_in.iter().any(|&s| !(s > 0.0)) || !(s_out > 0.0) {
            return Err(Error::Config("scaling constants must be positive".into()));
        }
        Ok(Self {
            arch,
            s_in,
            s_out,
            params: vec![0.0; arch.n_params()],
        })
    }

    pub fn init<R: Rng + ?Sized>(
        arch: CertArch,
        s_in: Vec<f64>,
        s_out: f64,
        init: CertInit,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(arch, s_in, s_out)?;
        let a1 = init.gain * (3.0 / arch.n as f64).sqrt();
        let a2 = init.gain * (3.0 / arch.m1 as f64).sqrt();
        let p = &mut net.params;
        for v in &mut p[arch.w1()] {
            *v = rng.random_range(-a1..=a1);
        }
        for v in &mut p[arch.b1()] {
            *v = rng.random_range(-init.bias..=init.bias);
        }
        for v in &mut p[arch.w2()] {
            *v = rng.random_range(-a2..=a2);
        }
        for v in &mut p[arch.b2()] {
            *v = rng.random_range(-init.bias..=init.bias);
        }
        for v in &mut p[arch.w3()] {
            *v = rng.random_range(0.0..=init.w3_max);
        }
        Ok(net)
    }

    pub fn view<'a, V: Copy>(&'a self, p: &'a [V]) -> CertView<'a, V> {
        assert_eq!(p.len(), self.arch.n_params());
        CertView {
            arch: self.arch,
            s_in: &self.s_in,
            s_out: self.s_out,
            p,
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.arch.n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.arch.n,
                got: x.len(),
            })
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let mut a = Plain::<f64>::new();
        Ok(forward(&mut a, &self.view(&self.params), x))
    }

    pub fn spatial_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut a = Plain::<f64>::new();
        let v = self.view(&self.params);
        let h = hidden(&mut a, &v, x, false);
        Ok(gradient_from(&mut a, &v, &h).1)
    }

    /// Full symmetric Hessian, row-major.
    pub fn spatial_hessian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check(x)?;
        let n = self.arch.n;
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |l| (i, l))).collect();
        let mut a = Plain::<f64>::new();
        let d = derivatives(&mut a, &self.view(&self.params), x, &pairs);
        let mut h = vec![vec![0.0; n]; n];
        for (&(i, l), v) in pairs.iter().zip(d.hess) {
            h[i][l] = v;
            h[l][i] = v;
        }
        Ok(h)
    }

    /// Second-layer activations scaled by `s_out`: `V = W3 · φ + b3`.
    pub fn last_hidden(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut a = Plain::<f64>::new();
        let h = hidden(&mut a, &self.view(&self.params), x, false);
        Ok(h.h2.iter().map(|v| v * self.s_out).collect())
    }

    pub fn max_s_in(&self) -> f64 {
        self.s_in.iter().cloned().fold(0.0, f64::max)
    }
}

/// Parameters of a certificate as back-end handles.
#[derive(Clone, Copy, Debug)]
pub struct CertView<'a, V> {
    pub arch: CertArch,
    pub s_in: &'a [f64],
    pub s_out: f64,
    pub p: &'a [V],
}

impl<'a, V: Copy> CertView<'a, V> {
    #[inline]
    pub fn w1_row(&self, k: usize) -> &'a [V] {
        let n = self.arch.n;
        &self.p[k * n..(k + 1) * n]
    }
    #[inline]
    pub fn w1(&self, k: usize, i: usize) -> V {
        self.p[k * self.arch.n + i]
    }
    #[inline]
    pub fn b1(&self) -> &'a [V] {
        &self.p[self.arch.b1()]
    }
    #[inline]
    pub fn w2_row(&self, j: usize) -> &'a [V] {
        let s = self.arch.w2().start + j * self.arch.m1;
        &self.p[s..s + self.arch.m1]
    }
    #[inline]
    pub fn b2(&self) -> &'a [V] {
        &self.p[self.arch.b2()]
    }
    #[inline]
    pub fn w3(&self) -> &'a [V] {
        &self.p[self.arch.w3()]
    }
    #[inline]
    pub fn b3(&self) -> Option<V> {
        self.arch.b3().map(|i| self.p[i])
    }
}

/// Hidden pre-activations and activation derivatives at a point.
#[derive(Clone, Debug)]
pub struct Hidden<V> {
    pub h1: Vec<V>,
    pub d1: Vec<V>,
    pub q1: Vec<V>,
    pub h2: Vec<V>,
    pub d2: Vec<V>,
    pub q2: Vec<V>,
}

pub fn hidden<A: Arith>(a: &mut A, v: &CertView<A::V>, x: &[f64], second: bool) -> Hidden<A::V> {
    let xn: Vec<A::T> = x.iter().zip(v.s_in).map(|(x, s)| A::T::of(x / s)).collect();
    let (m1, m2) = (v.arch.m1, v.arch.m2);
    let mut h = Hidden {
        h1: Vec::with_capacity(m1),
        d1: Vec::with_capacity(m1),
        q1: Vec::with_capacity(if second { m1 } else { 0 }),
        h2: Vec::with_capacity(m2),
        d2: Vec::with_capacity(m2),
        q2: Vec::with_capacity(if second { m2 } else { 0 }),
    };
    let b1 = v.b1();
    for k in 0..m1 {
        let s = a.lincomb(&xn, v.w1_row(k));
        let z = a.add(s, b1[k]);
        h.h1.push(a.sigmoid(z));
        h.d1.push(a.dsigmoid(z));
        if second {
            h.q1.push(a.d2sigmoid(z));
        }
    }
    let b2 = v.b2();
    for j in 0..m2 {
        let s = a.dot(v.w2_row(j), &h.h1);
        let z = a.add(s, b2[j]);
        h.h2.push(a.sigmoid(z));
        h.d2.push(a.dsigmoid(z));
        if second {
            h.q2.push(a.d2sigmoid(z));
        }
    }
    h
}

fn output<A: Arith>(a: &mut A, v: &CertView<A::V>, h2: &[A::V]) -> A::V {
    let s = a.dot(v.w3(), h2);
    let out = a.scale(s, A::T::of(v.s_out));
    match v.b3() {
        Some(b) => a.add(out, b),
        None => out,
    }
}

pub fn forward<A: Arith>(a: &mut A, v: &CertView<A::V>, x: &[f64]) -> A::V {
    let (m1, m2) = (v.arch.m1, v.arch.m2);
    let xn: Vec<A::T> = x.iter().zip(v.s_in).map(|(x, s)| A::T::of(x / s)).collect();
    let b1 = v.b1();
    let mut h1 = Vec::with_capacity(m1);
    for k in 0..m1 {
        let s = a.lincomb(&xn, v.w1_row(k));
        let z = a.add(s, b1[k]);
        h1.push(a.sigmoid(z));
    }
    let b2 = v.b2();
    let mut h2 = Vec::with_capacity(m2);
    for j in 0..m2 {
        let s = a.dot(v.w2_row(j), &h1);
        let z = a.add(s, b2[j]);
        h2.push(a.sigmoid(z));
    }
    output(a, v, &h2)
}

/// Value, gradient and selected Hessian entries at a point.
#[derive(Clone, Debug)]
pub struct Derivs<V> {
    pub value: V,
    pub grad: Vec<V>,
    /// Entries `H_il` in the order of the requested pairs.
    pub hess: Vec<V>,
}

/// `g[i][j] = Σ_k W2_jk d1_k W1_ki`, returns `(g, grad)`.
fn gradient_from<A: Arith>(a: &mut A, v: &CertView<A::V>, h: &Hidden<A::V>) -> (Vec<Vec<A::V>>, Vec<A::V>) {
    let (n, m1, m2) = (v.arch.n, v.arch.m1, v.arch.m2);
    let w3 = v.w3();
    let e: Vec<A::V> = (0..m2).map(|j| a.mul(w3[j], h.d2[j])).collect();
    let mut g = Vec::with_capacity(n);
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let t: Vec<A::V> = (0..m1).map(|k| a.mul(h.d1[k], v.w1(k, i))).collect();
        let gi: Vec<A::V> = (0..m2).map(|j| a.dot(v.w2_row(j), &t)).collect();
        let s = a.dot(&e, &gi);
        grad.push(a.scale(s, A::T::of(v.s_out / v.s_in[i])));
        g.push(gi);
    }
    (g, grad)
}

pub fn derivatives<A: Arith>(a: &mut A, v: &CertView<A::V>, x: &[f64], pairs: &[(usize, usize)]) -> Derivs<A::V> {
    let (m1, m2) = (v.arch.m1, v.arch.m2);
    let h = hidden(a, v, x, !pairs.is_empty());
    let value = output(a, v, &h.h2);
    let (g, grad) = gradient_from(a, v, &h);
    let w3 = v.w3();
    let mut hess = Vec::with_capacity(pairs.len());
    if !pairs.is_empty() {
        let e: Vec<A::V> = (0..m2).map(|j| a.mul(w3[j], h.d2[j])).collect();
        let f: Vec<A::V> = (0..m2).map(|j| a.mul(w3[j], h.q2[j])).collect();
        for &(i, l) in pairs {
            let gg: Vec<A::V> = (0..m2)
                .map(|j| if i == l { a.square(g[i][j]) } else { a.mul(g[i][j], g[l][j]) })
                .collect();
            let t1 = a.dot(&f, &gg);
            let s: Vec<A::V> = (0..m1)
                .map(|k| {
                    let w = if i == l { a.square(v.w1(k, i)) } else { a.mul(v.w1(k, i), v.w1(k, l)) };
                    a.mul(h.q1[k], w)
                })
                .collect();
            let t: Vec<A::V> = (0..m2).map(|j| a.dot(v.w2_row(j), &s)).collect();
            let t2 = a.dot(&e, &t);
            let sum = a.add(t1, t2);
            hess.push(a.scale(sum, A::T::of(v.s_out / (v.s_in[i] * v.s_in[l]))));
        }
    }
    Derivs { value, grad, hess }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{dsigmoid, sigmoid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(n: usize, seed: u64) -> CertificateNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = CertArch::new(n, 7, 5, true).unwrap();
        let s_in: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * i as f64).collect();
        let mut net = CertificateNet::init(arch, s_in, 0.8, CertInit::default(), &mut rng).unwrap();
        for v in &mut net.params {
            *v += rng.random_range(-0.5..0.5);
        }
        net
    }

    /// Straightforward loops, no shared helpers.
    fn literal_forward(net: &CertificateNet, x: &[f64]) -> f64 {
        let a = net.arch;
        let p = &net.params;
        let xn: Vec<f64> = x.iter().zip(&net.s_in).map(|(x, s)| x / s).collect();
        let mut h1 = vec![0.0; a.m1];
        for k in 0..a.m1 {
            let mut z = p[a.b1().start + k];
            for i in 0..a.n {
                z += p[k * a.n + i] * xn[i];
            }
            h1[k] = 1.0 / (1.0 + (-z).exp());
        }
        let mut out = 0.0;
        for j in 0..a.m2 {
            let mut z = p[a.b2().start + j];
            for k in 0..a.m1 {
                z += p[a.w2().start + j * a.m1 + k] * h1[k];
            }
            out += p[a.w3().start + j] / (1.0 + (-z).exp());
        }
        net.s_out * out + a.b3().map_or(0.0, |i| p[i])
    }

    #[test]
    fn matches_literal_forward() {
        for seed in 0..20 {
            let net = random_net(3, seed);
            let x = [0.3 * seed as f64 - 2.0, 1.1, -0.7];
            assert!((net.forward(&x).unwrap() - literal_forward(&net, &x)).abs() < 1e-12);
        }
    }

    #[test]
    fn trivial_networks() {
        let arch = CertArch::new(2, 3, 4, false).unwrap();
        let mut net = CertificateNet::zeros(arch, vec![1.0, 2.0], 0.7).unwrap();
        assert_eq!(net.forward(&[3.0, -1.0]).unwrap(), 0.0);
        net.params[arch.w3().start + 1] = 1.0;
        assert!((net.forward(&[3.0, -1.0]).unwrap() - 0.35).abs() < 1e-15);
        assert_eq!(net.spatial_gradient(&[3.0, -1.0]).unwrap(), vec![0.0, 0.0]);
        let h = net.spatial_hessian(&[3.0, -1.0]).unwrap();
        assert!(h.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn one_dimensional_chain() {
        let arch = CertArch::new(1, 1, 1, false).unwrap();
        let mut net = CertificateNet::zeros(arch, vec![1.0], 1.0).unwrap();
        net.params[arch.w1().start] = 1.0;
        net.params[arch.w2().start] = 1.0;
        net.params[arch.w3().start] = 1.0;
        let g = net.spatial_gradient(&[0.0]).unwrap()[0];
        let want = dsigmoid(sigmoid(0.0)) * 0.25;
        assert!((g - want).abs() < 1e-15);
        assert!((g - 0.0587509).abs() < 1e-6);
    }

    #[test]
    fn hessian_is_symmetric_and_matches_literal_diagonal() {
        let net = random_net(3, 5);
        let x = [0.4, -1.3, 2.2];
        let h = net.spatial_hessian(&x).unwrap();
        for i in 0..3 {
            for l in 0..3 {
                assert_eq!(h[i][l], h[l][i]);
            }
        }
        // diagonal written out term by term
        let a = net.arch;
        let p = &net.params;
        let xn: Vec<f64> = x.iter().zip(&net.s_in).map(|(x, s)| x / s).collect();
        let z1: Vec<f64> = (0..a.m1)
            .map(|k| p[a.b1().start + k] + (0..a.n).map(|i| p[k * a.n + i] * xn[i]).sum::<f64>())
            .collect();
        let h1: Vec<f64> = z1.iter().map(|&z| sigmoid(z)).collect();
        let z2: Vec<f64> = (0..a.m2)
            .map(|j| p[a.b2().start + j] + (0..a.m1).map(|k| p[a.w2().start + j * a.m1 + k] * h1[k]).sum::<f64>())
            .collect();
        for i in 0..3 {
            let mut t1 = 0.0;
            let mut t2 = 0.0;
            for j in 0..a.m2 {
                let w3 = p[a.w3().start + j];
                let s: f64 = (0..a.m1)
                    .map(|k| p[a.w2().start + j * a.m1 + k] * dsigmoid(z1[k]) * p[k * a.n + i])
                    .sum();
                t1 += w3 * crate::scalar::d2sigmoid(z2[j]) * s * s;
                let u: f64 = (0..a.m1)
                    .map(|k| {
                        p[a.w2().start + j * a.m1 + k] * crate::scalar::d2sigmoid(z1[k]) * p[k * a.n + i].powi(2)
                    })
                    .sum();
                t2 += w3 * dsigmoid(z2[j]) * u;
            }
            let lit = net.s_out / net.s_in[i].powi(2) * (t1 + t2);
            assert!((h[i][i] - lit).abs() < 1e-12 * lit.abs().max(1.0));
        }
    }

    #[test]
    fn input_rescaling_invariance() {
        let net = random_net(2, 9);
        let mut other = net.clone();
        let c = 3.5;
        for s in &mut other.s_in {
            *s *= c;
        }
        for w in &mut other.params[net.arch.w1()] {
            *w *= c;
        }
        let x = [1.7, -0.4];
        assert!((net.forward(&x).unwrap() - other.forward(&x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn param_views_cover_vector() {
        let arch = CertArch::new(2, 3, 4, true).unwrap();
        let p: Vec<f64> = (0..arch.n_params()).map(|i| i as f64).collect();
        let s = arch.param_store(&p);
        assert_eq!(s.values, p);
        assert_eq!(s.view("b3").unwrap(), &[p[p.len() - 1]]);
        assert_eq!(arch.d_v(), 5);
    }
}
