//! Labelled state samples for the soft warm start and the scenario program.

use crate::error::{Error, Result};
use crate::interval::Hyperbox;
use crate::problem::ReachAvoidSpec;
use crate::region::{sample_box, Region};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MAX_ATTEMPTS: usize = 1_000_000;

/// Region weights for the mixture distribution. Draws from `rest` are
/// uniform on `X \ (X0 ∪ Xg ∪ Xu)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mixture {
    pub init: f64,
    pub goal: f64,
    #[serde(rename = "unsafe")]
    pub unsafe_: f64,
    pub rest: f64,
    /// Fraction of unsafe draws placed on zero-volume parts of the unsafe
    /// set (the domain boundary), area-weighted.
    pub unsafe_faces: f64,
}

impl Default for Mixture {
    fn default() -> Self {
        Self {
            init: 0.1,
            goal: 0.1,
            unsafe_: 0.1,
            rest: 0.7,
            unsafe_faces: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Mixture(Mixture),
    Uniform,
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution::Mixture(Mixture::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Init,
    Goal,
    Unsafe,
    Rest,
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub source: Source,
    pub init: bool,
    pub unsafe_: bool,
    pub gen: bool,
}

impl Sample {
    pub fn labelled(spec: &ReachAvoidSpec, x: Vec<f64>, source: Source) -> Result<Self> {
        Ok(Self {
            init: spec.init.contains(&x)?,
            unsafe_: spec.unsafe_set.contains(&x)?,
            gen: spec.gen_region.contains(&x)?,
            x,
            source,
        })
    }
}

/// Stream `index` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

fn area(b: &Hyperbox) -> f64 {
    b.sides().iter().map(|s| s.width()).filter(|w| *w > 0.0).product()
}

fn sample_faces<R: Rng + ?Sized>(region: &Region, rng: &mut R) -> Option<Vec<f64>> {
    let faces: Vec<&Hyperbox> = region.boxes().into_iter().filter(|b| b.volume() == 0.0).collect();
    if faces.is_empty() {
        return None;
    }
    let areas: Vec<f64> = faces.iter().map(|b| area(b)).collect();
    let total: f64 = areas.iter().sum();
    let mut t = rng.random::<f64>() * total;
    for (f, a) in faces.iter().zip(&areas) {
        if t < *a {
            return Some(sample_box(f, rng));
        }
        t -= a;
    }
    Some(sample_box(faces[faces.len() - 1], rng))
}

fn in_any(spec: &ReachAvoidSpec, x: &[f64]) -> Result<bool> {
    Ok(spec.init.contains(x)? || spec.goal.contains(x)? || spec.unsafe_set.contains(x)?)
}

pub fn sample_one<R: Rng + ?Sized>(spec: &ReachAvoidSpec, dist: &Distribution, rng: &mut R) -> Result<Sample> {
    let fail = |what: &str| Error::InvalidRegion(format!("rejection sampling of the {what} set failed"));
    let (x, source) = match dist {
        Distribution::Uniform => (sample_box(&spec.domain, rng), Source::Uniform),
        Distribution::Mixture(m) => {
            let total = m.init + m.goal + m.unsafe_ + m.rest;
            let t = rng.random::<f64>() * total;
            if t < m.init {
                (spec.init.sample(rng, MAX_ATTEMPTS).ok_or_else(|| fail("initial"))?, Source::Init)
            } else if t < m.init + m.goal {
                (spec.goal.sample(rng, MAX_ATTEMPTS).ok_or_else(|| fail("goal"))?, Source::Goal)
            } else if t < m.init + m.goal + m.unsafe_ {
                let face = if m.unsafe_faces > 0.0 && rng.random::<f64>() < m.unsafe_faces {
                    sample_faces(&spec.unsafe_set, rng)
                } else {
                    None
                };
                let x = match face {
                    Some(x) => x,
                    None => spec.unsafe_set.sample(rng, MAX_ATTEMPTS).ok_or_else(|| fail("unsafe"))?,
                };
                (x, Source::Unsafe)
            } else {
                let mut found = None;
                for _ in 0..MAX_ATTEMPTS {
                    let x = sample_box(&spec.domain, rng);
                    if !in_any(spec, &x)? {
                        found = Some(x);
                        break;
                    }
                }
                (found.ok_or_else(|| fail("remaining"))?, Source::Rest)
            }
        }
    };
    Sample::labelled(spec, x, source)
}

/// `n` independent samples; sample `i` uses stream `i` of `seed`, so the
/// result does not depend on the number of workers.
pub fn sample_states(spec: &ReachAvoidSpec, dist: &Distribution, n: usize, seed: u64) -> Result<Vec<Sample>> {
    (0..n)
        .into_par_iter()
        .map(|i| sample_one(spec, dist, &mut stream_rng(seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(b: &[(f64, f64)]) -> Hyperbox {
        Hyperbox::from_bounds(b).unwrap()
    }

    fn gbm2d() -> ReachAvoidSpec {
        let d = bx(&[(-100.0, 100.0), (-100.0, 100.0)]);
        ReachAvoidSpec::new(
            d.clone(),
            Region::from_box(bx(&[(45.0, 55.0), (-55.0, -45.0)])),
            Region::from_box(bx(&[(-25.0, 25.0), (-25.0, 25.0)])),
            Region::difference(d, vec![bx(&[(-100.0, -80.0), (-100.0, 100.0)])]).unwrap(),
            0.95,
        )
        .unwrap()
    }

    #[test]
    fn mixture_fractions_and_labels() {
        let spec = gbm2d();
        let s = sample_states(&spec, &Distribution::default(), 10_000, 1).unwrap();
        let frac = |src: Source| s.iter().filter(|x| x.source == src).count() as f64 / 1e4;
        assert!((frac(Source::Init) - 0.1).abs() < 0.02);
        assert!((frac(Source::Goal) - 0.1).abs() < 0.02);
        assert!((frac(Source::Unsafe) - 0.1).abs() < 0.02);
        assert!((frac(Source::Rest) - 0.7).abs() < 0.02);
        for x in &s {
            match x.source {
                Source::Init => assert!(x.init),
                Source::Goal => assert!(spec.goal.contains(&x.x).unwrap()),
                Source::Unsafe => assert!(x.unsafe_),
                _ => assert!(!x.init && !x.unsafe_ && x.gen),
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = gbm2d();
        let a = sample_states(&spec, &Distribution::default(), 100, 3).unwrap();
        let b = sample_states(&spec, &Distribution::default(), 100, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_states(&spec, &Distribution::default(), 100, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn face_draws_land_on_the_boundary() {
        let spec = gbm2d();
        let m = Mixture {
            init: 0.0,
            goal: 0.0,
            unsafe_: 1.0,
            rest: 0.0,
            unsafe_faces: 1.0,
        };
        let s = sample_states(&spec, &Distribution::Mixture(m), 200, 5).unwrap();
        for x in &s {
            assert!(x.x.iter().any(|v| v.abs() == 100.0));
            assert!(x.unsafe_);
        }
    }
}
