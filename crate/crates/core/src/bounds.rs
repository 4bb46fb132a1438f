//! Interval bound propagation through the certificate and its spatial
//! derivatives.
//!
//! Every enclosure is computed on an [`Arith`] back-end, so on a tape both
//! endpoints are differentiable in the parameters. Affine layers use the
//! center-radius rule, activations their exact ranges, and products of
//! intervals the four-corner rule.

use crate::autodiff::Arith;
use crate::ivl::{self, Iv};
use crate::net::CertView;
use crate::scalar::prelude::*;

/// Parameter-derived handles shared by all cells bounded on one tape.
#[derive(Clone, Debug)]
pub struct CertAux<V> {
    pub abs_w1: Vec<V>,
    pub abs_w2: Vec<V>,
    pub abs_w3: Vec<V>,
    /// `W1_ki · W1_kl` per requested pair, indexed by `k`.
    pub w1_pairs: Vec<Vec<V>>,
    pub abs_w1_pairs: Vec<Vec<V>>,
}

impl<V: Copy> CertAux<V> {
    pub fn new<A: Arith<V = V>>(a: &mut A, v: &CertView<V>, pairs: &[(usize, usize)]) -> Self {
        let ar = v.arch;
        let abs = |a: &mut A, r: std::ops::Range<usize>| r.map(|i| a.abs(v.p[i])).collect::<Vec<_>>();
        let abs_w1 = abs(a, ar.w1());
        let abs_w2 = abs(a, ar.w2());
        let abs_w3 = abs(a, ar.w3());
        let mut w1_pairs = Vec::with_capacity(pairs.len());
        let mut abs_w1_pairs = Vec::with_capacity(pairs.len());
        for &(i, l) in pairs {
            let w: Vec<V> = (0..ar.m1)
                .map(|k| if i == l { a.square(v.w1(k, i)) } else { a.mul(v.w1(k, i), v.w1(k, l)) })
                .collect();
            abs_w1_pairs.push(if i == l { w.clone() } else { w.iter().map(|&x| a.abs(x)).collect() });
            w1_pairs.push(w);
        }
        Self {
            abs_w1,
            abs_w2,
            abs_w3,
            w1_pairs,
            abs_w1_pairs,
        }
    }
}

/// `W·center(x) + b ± |W|·radius(x)` for one output row.
pub fn affine_row<A: Arith>(a: &mut A, w: &[A::V], abs_w: &[A::V], b: Option<A::V>, c: &[A::V], r: &[A::V]) -> Iv<A::V> {
    let mut mid = a.dot(w, c);
    if let Some(b) = b {
        mid = a.add(mid, b);
    }
    let rad = a.dot(abs_w, r);
    ivl::from_center_radius(a, mid, rad)
}

/// Affine map of an interval vector; `w` is row-major `out × in`.
pub fn bound_affine<A: Arith>(a: &mut A, w: &[A::V], b: &[A::V], x: &[Iv<A::V>]) -> Vec<Iv<A::V>> {
    let n = x.len();
    let (c, r): (Vec<_>, Vec<_>) = x.iter().map(|v| ivl::center_radius(a, *v)).unzip();
    let abs: Vec<A::V> = w.iter().map(|&v| a.abs(v)).collect();
    (0..b.len())
        .map(|o| affine_row(a, &w[o * n..(o + 1) * n], &abs[o * n..(o + 1) * n], Some(b[o]), &c, &r))
        .collect()
}

/// Interval images of the hidden layers over a box.
#[derive(Clone, Debug)]
pub struct HiddenIv<V> {
    pub h1: Vec<Iv<V>>,
    pub d1: Vec<Iv<V>>,
    pub q1: Vec<Iv<V>>,
    pub h2: Vec<Iv<V>>,
    pub d2: Vec<Iv<V>>,
    pub q2: Vec<Iv<V>>,
}

fn first_layer<A: Arith>(a: &mut A, v: &CertView<A::V>, aux: &CertAux<A::V>, lo: &[f64], hi: &[f64]) -> Vec<Iv<A::V>> {
    let n = v.arch.n;
    let c: Vec<A::T> = (0..n).map(|i| A::T::of(0.5 * (lo[i] + hi[i]) / v.s_in[i])).collect();
    let r: Vec<A::T> = (0..n).map(|i| A::T::of(0.5 * (hi[i] - lo[i]) / v.s_in[i])).collect();
    let b1 = v.b1();
    (0..v.arch.m1)
        .map(|k| {
            let m = a.lincomb(&c, v.w1_row(k));
            let m = a.add(m, b1[k]);
            let rad = a.lincomb(&r, &aux.abs_w1[k * n..(k + 1) * n]);
            ivl::from_center_radius(a, m, rad)
        })
        .collect()
}

pub fn hidden_iv<A: Arith>(
    a: &mut A,
    v: &CertView<A::V>,
    aux: &CertAux<A::V>,
    lo: &[f64],
    hi: &[f64],
    derivs: bool,
    second: bool,
) -> HiddenIv<A::V> {
    let (m1, m2) = (v.arch.m1, v.arch.m2);
    let z1 = first_layer(a, v, aux, lo, hi);
    let h1: Vec<_> = z1.iter().map(|&z| ivl::sigmoid(a, z)).collect();
    let d1 = if derivs { z1.iter().map(|&z| ivl::dsigmoid(a, z)).collect() } else { Vec::new() };
    let q1 = if second { z1.iter().map(|&z| ivl::d2sigmoid(a, z)).collect() } else { Vec::new() };
    let (c, r): (Vec<_>, Vec<_>) = h1.iter().map(|x| ivl::center_radius(a, *x)).unzip();
    let b2 = v.b2();
    let z2: Vec<_> = (0..m2)
        .map(|j| affine_row(a, v.w2_row(j), &aux.abs_w2[j * m1..(j + 1) * m1], Some(b2[j]), &c, &r))
        .collect();
    let h2 = z2.iter().map(|&z| ivl::sigmoid(a, z)).collect();
    let d2 = if derivs { z2.iter().map(|&z| ivl::dsigmoid(a, z)).collect() } else { Vec::new() };
    let q2 = if second { z2.iter().map(|&z| ivl::d2sigmoid(a, z)).collect() } else { Vec::new() };
    HiddenIv { h1, d1, q1, h2, d2, q2 }
}

fn output_iv<A: Arith>(a: &mut A, v: &CertView<A::V>, aux: &CertAux<A::V>, h2: &[Iv<A::V>]) -> Iv<A::V> {
    let (c, r): (Vec<_>, Vec<_>) = h2.iter().map(|x| ivl::center_radius(a, *x)).unzip();
    let out = affine_row(a, v.w3(), &aux.abs_w3, None, &c, &r);
    let out = ivl::scale(a, out, A::T::of(v.s_out));
    match v.b3() {
        Some(b) => Iv::new(a.add(out.lo, b), a.add(out.hi, b)),
        None => out,
    }
}

/// Enclosure of `V` over the box `[lo, hi]`.
pub fn bound_certificate<A: Arith>(a: &mut A, v: &CertView<A::V>, aux: &CertAux<A::V>, lo: &[f64], hi: &[f64]) -> Iv<A::V> {
    let (m1, m2) = (v.arch.m1, v.arch.m2);
    let z1 = first_layer(a, v, aux, lo, hi);
    let h1: Vec<_> = z1.iter().map(|&z| ivl::sigmoid(a, z)).collect();
    let (c, r): (Vec<_>, Vec<_>) = h1.iter().map(|x| ivl::center_radius(a, *x)).unzip();
    let b2 = v.b2();
    let h2: Vec<_> = (0..m2)
        .map(|j| {
            let z = affine_row(a, v.w2_row(j), &aux.abs_w2[j * m1..(j + 1) * m1], Some(b2[j]), &c, &r);
            ivl::sigmoid(a, z)
        })
        .collect();
    output_iv(a, v, aux, &h2)
}

/// Enclosures of `V`, `∇V` and the requested Hessian entries over a box.
#[derive(Clone, Debug)]
pub struct DerivIv<V> {
    pub value: Iv<V>,
    pub grad: Vec<Iv<V>>,
    pub hess: Vec<Iv<V>>,
}

/// Dots of center-radius row vectors: `Σ_k w_k [c_k ± r_k]`.
fn combine_cr<A: Arith>(a: &mut A, w: &[A::V], abs_w: &[A::V], c: &[A::V], r: &[A::V]) -> Iv<A::V> {
    affine_row(a, w, abs_w, None, c, r)
}

/// `Σ_j w_j (x_j · y_j)` with interval products.
fn weighted_products<A: Arith>(
    a: &mut A,
    w: &[A::V],
    abs_w: &[A::V],
    x: &[Iv<A::V>],
    y: &[Iv<A::V>],
) -> Iv<A::V> {
    let mut c = Vec::with_capacity(x.len());
    let mut r = Vec::with_capacity(x.len());
    for (xj, yj) in x.iter().zip(y) {
        let p = ivl::mul(a, *xj, *yj);
        let (pc, pr) = ivl::center_radius(a, p);
        c.push(pc);
        r.push(pr);
    }
    combine_cr(a, w, abs_w, &c, &r)
}

pub fn bound_derivatives<A: Arith>(
    a: &mut A,
    v: &CertView<A::V>,
    aux: &CertAux<A::V>,
    lo: &[f64],
    hi: &[f64],
    pairs: &[(usize, usize)],
) -> DerivIv<A::V> {
    let (n, m1, m2) = (v.arch.n, v.arch.m1, v.arch.m2);
    let h = hidden_iv(a, v, aux, lo, hi, true, !pairs.is_empty());
    let value = output_iv(a, v, aux, &h.h2);

    // g[i][j] = Σ_k W2_jk d1_k W1_ki
    let (d1c, d1r): (Vec<_>, Vec<_>) = h.d1.iter().map(|x| ivl::center_radius(a, *x)).unzip();
    let mut g: Vec<Vec<Iv<A::V>>> = Vec::with_capacity(n);
    for i in 0..n {
        let tc: Vec<A::V> = (0..m1).map(|k| a.mul(v.w1(k, i), d1c[k])).collect();
        let tr: Vec<A::V> = (0..m1).map(|k| a.mul(aux.abs_w1[k * n + i], d1r[k])).collect();
        g.push(
            (0..m2)
                .map(|j| {
                    let row = v.w2_row(j);
                    combine_cr(a, row, &aux.abs_w2[j * m1..(j + 1) * m1], &tc, &tr)
                })
                .collect(),
        );
    }
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let s = weighted_products(a, v.w3(), &aux.abs_w3, &h.d2, &g[i]);
        grad.push(ivl::scale(a, s, A::T::of(v.s_out / v.s_in[i])));
    }

    let mut hess = Vec::with_capacity(pairs.len());
    if !pairs.is_empty() {
        let (q1c, q1r): (Vec<_>, Vec<_>) = h.q1.iter().map(|x| ivl::center_radius(a, *x)).unzip();
        for (p, &(i, l)) in pairs.iter().enumerate() {
            let gg: Vec<Iv<A::V>> = (0..m2)
                .map(|j| if i == l { ivl::square(a, g[i][j]) } else { ivl::mul(a, g[i][j], g[l][j]) })
                .collect();
            let t1 = weighted_products(a, v.w3(), &aux.abs_w3, &h.q2, &gg);
            let sc: Vec<A::V> = (0..m1).map(|k| a.mul(aux.w1_pairs[p][k], q1c[k])).collect();
            let sr: Vec<A::V> = (0..m1).map(|k| a.mul(aux.abs_w1_pairs[p][k], q1r[k])).collect();
            let t: Vec<Iv<A::V>> = (0..m2)
                .map(|j| combine_cr(a, v.w2_row(j), &aux.abs_w2[j * m1..(j + 1) * m1], &sc, &sr))
                .collect();
            let t2 = weighted_products(a, v.w3(), &aux.abs_w3, &h.d2, &t);
            let s = ivl::add(a, t1, t2);
            hess.push(ivl::scale(a, s, A::T::of(v.s_out / (v.s_in[i] * v.s_in[l]))));
        }
    }
    DerivIv { value, grad, hess }
}

/// `Φ = Σ_i f_i ∂_i V + ½ Σ_{i,l} [ggᵀ]_il ∂_il V` over a box, where `gg`
/// holds the upper-triangular entries listed in `pairs`.
pub fn assemble_generator<A: Arith>(
    a: &mut A,
    d: &DerivIv<A::V>,
    f: &[Iv<A::V>],
    gg: &[Iv<A::V>],
    pairs: &[(usize, usize)],
) -> Iv<A::V> {
    let mut terms = Vec::with_capacity(f.len() + pairs.len());
    for (fi, gi) in f.iter().zip(&d.grad) {
        terms.push(ivl::mul(a, *fi, *gi));
    }
    for ((&(i, l), c), h) in pairs.iter().zip(gg).zip(&d.hess) {
        let w = if i == l { A::T::half() } else { A::T::one() };
        let p = ivl::mul(a, *c, *h);
        terms.push(ivl::scale(a, p, w));
    }
    ivl::sum(a, &terms)
}
