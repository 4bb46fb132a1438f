//! Per-cell bound terms and the bound-training loss.

use crate::autodiff::{with_pooled_tape, Arith, Plain};
use crate::bounds::{bound_certificate, CertAux};
use crate::error::Result;
use crate::generator::{CtrlParams, Generator};
use crate::net::{CertView, CertificateNet};
use crate::partition::{Cell, Kind, Partition};
use crate::scalar::prelude::*;
use rayon::prelude::*;

/// Constants entering the ReLU arguments.
#[derive(Clone, Copy, Debug)]
pub struct Thresholds {
    pub beta: f64,
    pub eps_gen: f64,
    /// Added to every argument so that a zero loss leaves room for rounding.
    pub slack: f64,
}

/// ReLU arguments per kind; `None` when the cell does not carry the kind
/// or it was not requested.
pub type Args<V> = [Option<V>; 4];

fn fold<A: Arith>(a: &mut A, xs: &[A::V], max: bool) -> A::V {
    let mut acc = xs[0];
    for &x in &xs[1..] {
        acc = if max { a.max(acc, x) } else { a.min(acc, x) };
    }
    acc
}

/// ReLU arguments of one cell:
/// `-V̲ + s`, `V̄ - 1 + s`, `β - V̲ + s`, `Φ̄ + ε + s`, each bound taken over
/// the cell's pieces for that kind.
#[allow(clippy::too_many_arguments)]
pub fn cell_args<A: Arith>(
    a: &mut A,
    gen: &Generator,
    th: &Thresholds,
    v: &CertView<A::V>,
    aux: &CertAux<A::V>,
    ctrl: CtrlParams<A::V>,
    cell: &Cell,
    mask: [bool; 4],
) -> Result<Args<A::V>> {
    let mut out: Args<A::V> = [None; 4];
    let (lo, hi) = (cell.bx.lo(), cell.bx.hi());
    let mut whole_value = None;

    if mask[Kind::Gen.index()] && cell.has(Kind::Gen) {
        let mut his = Vec::new();
        for p in cell.pieces(Kind::Gen) {
            let (d, phi) = gen.bound(a, v, aux, ctrl, &p.lo(), &p.hi())?;
            if *p == cell.bx {
                whole_value = Some(d.value);
            }
            his.push(phi.hi);
        }
        let m = fold(a, &his, true);
        out[Kind::Gen.index()] = Some(a.add_const(m, A::T::of(th.eps_gen + th.slack)));
    }
    if mask[Kind::NonNeg.index()] {
        let b = match whole_value {
            Some(b) => b,
            None => bound_certificate(a, v, aux, &lo, &hi),
        };
        let n = a.neg(b.lo);
        out[Kind::NonNeg.index()] = Some(a.add_const(n, A::T::of(th.slack)));
    }
    if mask[Kind::Init.index()] && cell.has(Kind::Init) {
        let his: Vec<A::V> = cell
            .pieces(Kind::Init)
            .iter()
            .map(|p| bound_certificate(a, v, aux, &p.lo(), &p.hi()).hi)
            .collect();
        let m = fold(a, &his, true);
        out[Kind::Init.index()] = Some(a.add_const(m, A::T::of(th.slack - 1.0)));
    }
    if mask[Kind::Unsafe.index()] && cell.has(Kind::Unsafe) {
        let los: Vec<A::V> = cell
            .pieces(Kind::Unsafe)
            .iter()
            .map(|p| bound_certificate(a, v, aux, &p.lo(), &p.hi()).lo)
            .collect();
        let m = fold(a, &los, false);
        let n = a.neg(m);
        out[Kind::Unsafe.index()] = Some(a.add_const(n, A::T::of(th.beta + th.slack)));
    }
    Ok(out)
}

/// Plain evaluation of every live cell, in id order.
pub fn evaluate(
    gen: &Generator,
    th: &Thresholds,
    net: &CertificateNet,
    ctrl: Option<&[f64]>,
    partition: &Partition,
) -> Result<Vec<(u64, Args<f64>)>> {
    let cells: Vec<&Cell> = partition.cells().collect();
    evaluate_cells(gen, th, net, ctrl, &cells)
}

pub fn evaluate_cells(
    gen: &Generator,
    th: &Thresholds,
    net: &CertificateNet,
    ctrl: Option<&[f64]>,
    cells: &[&Cell],
) -> Result<Vec<(u64, Args<f64>)>> {
    let mut p = Plain::<f64>::new();
    let v = net.view(&net.params);
    let aux = CertAux::new(&mut p, &v, gen.pairs());
    cells
        .par_iter()
        .map(|c| {
            let mut p = Plain::<f64>::new();
            Ok((c.id, cell_args(&mut p, gen, th, &v, &aux, ctrl, c, [true; 4])?))
        })
        .collect()
}

/// `Σ_k w_k Σ_q ReLU(arg_k(q))` and the per-kind sums.
pub fn loss_value(args: &[(u64, Args<f64>)], weights: &[f64; 4]) -> (f64, [f64; 4]) {
    let mut per = [0.0; 4];
    for (_, a) in args {
        for k in 0..4 {
            if let Some(x) = a[k] {
                if x > 0.0 {
                    per[k] += x;
                }
            }
        }
    }
    let total = (0..4).map(|k| weights[k] * per[k]).sum();
    (total, per)
}

/// Gradient of the bound loss restricted to the active terms `(cell, mask)`
/// with respect to the certificate parameters followed by the controller
/// parameters (when `ctrl` is given). Cells are processed in batches of
/// `batch` per tape; batch gradients are summed in order.
pub fn bound_gradient(
    gen: &Generator,
    th: &Thresholds,
    net: &CertificateNet,
    ctrl: Option<&[f64]>,
    active: &[(&Cell, [bool; 4])],
    weights: &[f64; 4],
    batch: usize,
) -> Result<(Vec<f64>, f64)> {
    let n_cert = net.params.len();
    let mut all = net.params.clone();
    if let Some(c) = ctrl {
        all.extend_from_slice(c);
    }
    let chunks: Vec<&[(&Cell, [bool; 4])]> = active.chunks(batch.max(1)).collect();
    let parts: Vec<Result<(Vec<f64>, f64)>> = chunks
        .par_iter()
        .map(|chunk| {
            with_pooled_tape(&all, |t| {
                let vars = t.params();
                let v = net.view(&vars[..n_cert]);
                let cv = ctrl.map(|_| &vars[n_cert..]);
                let aux = CertAux::new(t, &v, gen.pairs());
                let mut terms = Vec::new();
                for (cell, mask) in chunk.iter() {
                    let args = cell_args(t, gen, th, &v, &aux, cv, cell, *mask)?;
                    for k in 0..4 {
                        if let Some(x) = args[k] {
                            terms.push(t.scale(x, weights[k]));
                        }
                    }
                }
                let root = t.sum(&terms);
                t.check_finite()?;
                let value = t.value(root);
                Ok((t.gradient(root), value))
            })
        })
        .collect();
    let mut grad = vec![0.0; all.len()];
    let mut total = 0.0;
    for p in parts {
        let (g, v) = p?;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        total += v;
    }
    Ok((grad, total))
}
