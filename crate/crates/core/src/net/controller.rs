//! Feed-forward controllers with tanh hidden layers and bounded outputs.

use crate::autodiff::{Arith, Plain};
use crate::error::{Error, Result};
use crate::ivl::{self, Iv};
use crate::scalar::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutAct {
    Tanh,
    Sigmoid,
    Linear,
}

/// Output channel `u = offset + scale · act(z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutChannel {
    pub act: OutAct,
    pub scale: f64,
    pub offset: f64,
}

impl OutChannel {
    /// Saturating channel onto `[lo, hi]`.
    pub fn ranged(act: OutAct, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Config(format!("empty control range [{lo}, {hi}]")));
        }
        match act {
            OutAct::Tanh => Ok(Self {
                act,
                scale: 0.5 * (hi - lo),
                offset: 0.5 * (hi + lo),
            }),
            OutAct::Sigmoid => Ok(Self {
                act,
                scale: hi - lo,
                offset: lo,
            }),
            OutAct::Linear => Err(Error::Config("a linear channel has no range".into())),
        }
    }

    pub fn linear() -> Self {
        Self {
            act: OutAct::Linear,
            scale: 1.0,
            offset: 0.0,
        }
    }

    /// Output range, `None` for linear channels.
    pub fn range(&self) -> Option<(f64, f64)> {
        let (a, b) = match self.act {
            OutAct::Tanh => (-1.0, 1.0),
            OutAct::Sigmoid => (0.0, 1.0),
            OutAct::Linear => return None,
        };
        let (p, q) = (self.offset + self.scale * a, self.offset + self.scale * b);
        Some((p.min(q), p.max(q)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerArch {
    pub n: usize,
    pub hidden: Vec<usize>,
    pub outputs: Vec<OutChannel>,
}

impl ControllerArch {
    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.n];
        w.extend(&self.hidden);
        w.push(self.outputs.len());
        w
    }

    pub fn n_params(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn m(&self) -> usize {
        self.outputs.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerNet {
    pub arch: ControllerArch,
    pub s_in: Vec<f64>,
    pub params: Vec<f64>,
}

impl ControllerNet {
    pub fn zeros(arch: ControllerArch, s_in: Vec<f64>) -> Result<Self> {
        if s_in.len() != arch.n {
            return Err(Error::DimensionMismatch {
                expected: arch.n,
                got: s_in.len(),
            });
        }
        if arch.outputs.is_empty() {
            return Err(Error::Config("controller needs at least one output".into()));
        }
        let n = arch.n_params();
        Ok(Self {
            arch,
            s_in,
            params: vec![0.0; n],
        })
    }

    /// Uniform fan-in initialisation scaled by `gain`.
    pub fn init<R: Rng + ?Sized>(arch: ControllerArch, s_in: Vec<f64>, gain: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(arch, s_in)?;
        let widths = net.arch.widths();
        let mut off = 0;
        for w in widths.windows(2) {
            let a = gain * (3.0 / w[0] as f64).sqrt();
            for v in &mut net.params[off..off + w[0] * w[1]] {
                *v = rng.random_range(-a..=a);
            }
            off += w[0] * w[1] + w[1];
        }
        Ok(net)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.arch.n {
            return Err(Error::DimensionMismatch {
                expected: self.arch.n,
                got: x.len(),
            });
        }
        let mut a = Plain::<f64>::new();
        Ok(forward(&mut a, self, &self.params, x))
    }

    pub fn forward_box(&self, lo: &[f64], hi: &[f64]) -> Result<Vec<(f64, f64)>> {
        let mut a = Plain::<f64>::new();
        let out = forward_iv(&mut a, self, &self.params, lo, hi);
        Ok(out.iter().map(|v| (v.lo, v.hi)).collect())
    }
}

fn out_point<A: Arith>(a: &mut A, c: &OutChannel, z: A::V) -> A::V {
    let s = match c.act {
        OutAct::Tanh => a.tanh(z),
        OutAct::Sigmoid => a.sigmoid(z),
        OutAct::Linear => z,
    };
    let s = a.scale(s, A::T::of(c.scale));
    a.add_const(s, A::T::of(c.offset))
}

/// Controller output at a point; `p` holds the controller parameters.
pub fn forward<A: Arith>(a: &mut A, net: &ControllerNet, p: &[A::V], x: &[f64]) -> Vec<A::V> {
    let widths = net.arch.widths();
    let xn: Vec<A::T> = x.iter().zip(&net.s_in).map(|(x, s)| A::T::of(x / s)).collect();
    let mut off = 0;
    let layers = widths.len() - 1;
    let mut cur: Vec<A::V> = Vec::new();
    for (li, w) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let b = off + fan_in * fan_out;
        let mut next = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let row = &p[off + o * fan_in..off + (o + 1) * fan_in];
            let s = if li == 0 { a.lincomb(&xn, row) } else { a.dot(row, &cur) };
            let z = a.add(s, p[b + o]);
            next.push(if li + 1 < layers {
                a.tanh(z)
            } else {
                out_point(a, &net.arch.outputs[o], z)
            });
        }
        off = b + fan_out;
        cur = next;
    }
    cur
}

/// Output enclosure over the box `[lo, hi]` by center-radius propagation.
pub fn forward_iv<A: Arith>(a: &mut A, net: &ControllerNet, p: &[A::V], lo: &[f64], hi: &[f64]) -> Vec<Iv<A::V>> {
    let widths = net.arch.widths();
    let layers = widths.len() - 1;
    let c0: Vec<A::T> = (0..net.arch.n)
        .map(|i| A::T::of(0.5 * (lo[i] + hi[i]) / net.s_in[i]))
        .collect();
    let r0: Vec<A::T> = (0..net.arch.n)
        .map(|i| A::T::of(0.5 * (hi[i] - lo[i]) / net.s_in[i]))
        .collect();
    let mut off = 0;
    let mut cur: Vec<Iv<A::V>> = Vec::new();
    for (li, w) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let b = off + fan_in * fan_out;
        let (cs, rs): (Vec<A::V>, Vec<A::V>) = if li == 0 {
            (Vec::new(), Vec::new())
        } else {
            cur.iter().map(|v| ivl::center_radius(a, *v)).unzip()
        };
        let mut next = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let row = &p[off + o * fan_in..off + (o + 1) * fan_in];
            let abs: Vec<A::V> = row.iter().map(|&w| a.abs(w)).collect();
            let (c, r) = if li == 0 {
                (a.lincomb(&c0, row), a.lincomb(&r0, &abs))
            } else {
                (a.dot(row, &cs), a.dot(&abs, &rs))
            };
            let c = a.add(c, p[b + o]);
            let z = ivl::from_center_radius(a, c, r);
            next.push(if li + 1 < layers {
                ivl::tanh(a, z)
            } else {
                let ch = &net.arch.outputs[o];
                let s = match ch.act {
                    OutAct::Tanh => ivl::tanh(a, z),
                    OutAct::Sigmoid => ivl::sigmoid(a, z),
                    OutAct::Linear => z,
                };
                let s = ivl::scale(a, s, A::T::of(ch.scale));
                ivl::add_const(a, s, A::T::of(ch.offset))
            });
        }
        off = b + fan_out;
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn xv15_like() -> ControllerArch {
        ControllerArch {
            n: 3,
            hidden: vec![64],
            outputs: vec![
                OutChannel::ranged(OutAct::Sigmoid, 0.0, 5.0).unwrap(),
                OutChannel::ranged(OutAct::Tanh, -0.2, 0.2).unwrap(),
                OutChannel::ranged(OutAct::Tanh, -0.1, 0.1).unwrap(),
            ],
        }
    }

    #[test]
    fn outputs_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ControllerNet::init(xv15_like(), vec![100.0, 0.35, 1.57], 3.0, &mut rng).unwrap();
        for _ in 0..500 {
            let x = [rng.random_range(-500.0..500.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let u = net.forward(&x).unwrap();
            assert!(u[0] >= 0.0 && u[0] <= 5.0);
            assert!(u[1].abs() <= 0.2 && u[2].abs() <= 0.1);
        }
    }

    #[test]
    fn zero_weights_give_range_midpoint() {
        let arch = ControllerArch {
            n: 2,
            hidden: vec![8],
            outputs: vec![OutChannel::ranged(OutAct::Tanh, -1.0, 1.0).unwrap()],
        };
        let net = ControllerNet::zeros(arch, vec![1.0, 1.0]).unwrap();
        assert_eq!(net.forward(&[3.0, 4.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn box_enclosure_contains_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let arch = ControllerArch {
            n: 2,
            hidden: vec![16],
            outputs: vec![OutChannel::linear(), OutChannel::linear()],
        };
        let net = ControllerNet::init(arch, vec![100.0, 100.0], 1.0, &mut rng).unwrap();
        let (lo, hi) = ([10.0, -30.0], [25.0, -5.0]);
        let b = net.forward_box(&lo, &hi).unwrap();
        for _ in 0..1000 {
            let x = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
            let u = net.forward(&x).unwrap();
            for (v, (l, h)) in u.iter().zip(&b) {
                assert!(*v >= l - 1e-12 && *v <= h + 1e-12);
            }
        }
    }

    #[test]
    fn linear_feedback_has_no_hidden_layer() {
        let arch = ControllerArch {
            n: 3,
            hidden: vec![],
            outputs: vec![OutChannel::linear(); 3],
        };
        assert_eq!(arch.n_params(), 12);
        let mut net = ControllerNet::zeros(arch, vec![1.0; 3]).unwrap();
        net.params[0] = -2.0;
        net.params[9] = 0.5;
        assert_eq!(net.forward(&[1.0, 0.0, 0.0]).unwrap(), vec![-1.5, 0.0, 0.0]);
    }
}
