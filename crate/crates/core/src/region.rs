//! Sets built from boxes: single boxes, unions of boxes, and a box minus a
//! union of boxes.
//!
//! All regions are closed. A difference region removes only the *open*
//! interiors of its holes, so the faces of a hole belong to the difference.

use crate::error::{Error, Result};
use crate::interval::Hyperbox;
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region<T = f64> {
    Box { part: Hyperbox<T> },
    Union { parts: Vec<Hyperbox<T>> },
    Difference { base: Hyperbox<T>, holes: Vec<Hyperbox<T>> },
}

impl<T: Scalar> Region<T> {
    pub fn from_box(b: Hyperbox<T>) -> Self {
        Region::Box { part: b }
    }

    pub fn union(parts: Vec<Hyperbox<T>>) -> Result<Self> {
        let r = match parts.len() {
            0 => return Err(Error::InvalidRegion("union needs at least one box".into())),
            1 => Region::Box {
                part: parts.into_iter().next().unwrap(),
            },
            _ => Region::Union { parts },
        };
        r.check_dims()?;
        Ok(r)
    }

    /// `base` minus the open interiors of `holes`. Holes that miss the base
    /// are dropped.
    pub fn difference(base: Hyperbox<T>, holes: Vec<Hyperbox<T>>) -> Result<Self> {
        let n = base.dim();
        for h in &holes {
            if h.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: h.dim(),
                });
            }
        }
        let holes: Vec<_> = holes
            .into_iter()
            .filter(|h| base.overlaps_interior(h).unwrap_or(false))
            .collect();
        if holes.is_empty() {
            return Ok(Region::Box { part: base });
        }
        Ok(Region::Difference { base, holes })
    }

    fn check_dims(&self) -> Result<()> {
        let n = self.dim();
        for b in self.boxes() {
            if b.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: b.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Box { part } => part.dim(),
            Region::Union { parts } => parts[0].dim(),
            Region::Difference { base, .. } => base.dim(),
        }
    }

    /// Every box mentioned by the region (members, or base then holes).
    pub fn boxes(&self) -> Vec<&Hyperbox<T>> {
        match self {
            Region::Box { part } => vec![part],
            Region::Union { parts } => parts.iter().collect(),
            Region::Difference { base, holes } => std::iter::once(base).chain(holes).collect(),
        }
    }

    /// Positive-volume boxes whose union is a subset of the region.
    pub fn solid_parts(&self) -> Vec<&Hyperbox<T>> {
        match self {
            Region::Box { part } => vec![part],
            Region::Union { parts } => parts.iter().collect(),
            Region::Difference { .. } => vec![],
        }
    }

    pub fn bounding_box(&self) -> Hyperbox<T> {
        match self {
            Region::Box { part } => part.clone(),
            Region::Union { parts } => parts[1..].iter().fold(parts[0].clone(), |acc, b| acc.hull(b)),
            Region::Difference { base, .. } => base.clone(),
        }
    }

    /// Membership of `x` in the closed region.
    pub fn contains(&self, x: &[T]) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(match self {
            Region::Box { part } => part.contains(x)?,
            Region::Union { parts } => {
                let mut hit = false;
                for p in parts {
                    if p.contains(x)? {
                        hit = true;
                        break;
                    }
                }
                hit
            }
            Region::Difference { base, holes } => {
                if !base.contains(x)? {
                    false
                } else {
                    let mut inside_hole = false;
                    for h in holes {
                        if h.contains_interior(x)? {
                            inside_hole = true;
                            break;
                        }
                    }
                    !inside_hole
                }
            }
        })
    }

    /// Whether the closed box `b` meets the region. Never false when a common
    /// point exists; for difference regions it may report true when `b` only
    /// touches the closure of the removed part.
    pub fn intersects(&self, b: &Hyperbox<T>) -> Result<bool> {
        if b.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: b.dim(),
            });
        }
        Ok(match self {
            Region::Box { part } => part.intersects(b)?,
            Region::Union { parts } => parts.iter().any(|p| p.intersects(b).unwrap_or(false)),
            Region::Difference { base, holes } => {
                if !base.intersects(b)? {
                    return Ok(false);
                }
                let clipped = clip(base, b);
                !holes
                    .iter()
                    .any(|h| h.contains_box_in_interior(&clipped).unwrap_or(false))
            }
        })
    }

    /// Closed boxes whose union contains `b ∩ self` and lies inside `b`.
    /// Exact for boxes and unions; for differences the holes' interiors are
    /// removed one at a time.
    pub fn pieces(&self, b: &Hyperbox<T>) -> Vec<Hyperbox<T>> {
        match self {
            Region::Box { part } => part.intersection(b).into_iter().collect(),
            Region::Union { parts } => parts.iter().filter_map(|p| p.intersection(b)).collect(),
            Region::Difference { base, holes } => {
                let mut cur: Vec<Hyperbox<T>> = base.intersection(b).into_iter().collect();
                for h in holes {
                    cur = cur.iter().flat_map(|c| c.minus_interior(h)).collect();
                }
                cur
            }
        }
    }

    /// Draws a uniform point of the region by rejection, giving up after
    /// `max_attempts` proposals.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, max_attempts: usize) -> Option<Vec<T>> {
        match self {
            Region::Box { part } => Some(sample_box(part, rng)),
            Region::Union { parts } => {
                // Box chosen proportionally to volume, then thinned by the
                // number of members covering the draw so overlaps stay uniform.
                let vols: Vec<f64> = parts.iter().map(|p| p.volume().to_f64_lossy()).collect();
                let total: f64 = vols.iter().sum();
                for _ in 0..max_attempts {
                    let k = if total > 0.0 {
                        let mut t = rng.random::<f64>() * total;
                        let mut k = parts.len() - 1;
                        for (i, v) in vols.iter().enumerate() {
                            if t < *v {
                                k = i;
                                break;
                            }
                            t -= v;
                        }
                        k
                    } else {
                        rng.random_range(0..parts.len())
                    };
                    let x = sample_box(&parts[k], rng);
                    let cover = parts.iter().filter(|p| p.contains(&x).unwrap_or(false)).count();
                    if cover <= 1 || rng.random::<f64>() * (cover as f64) < 1.0 {
                        return Some(x);
                    }
                }
                None
            }
            Region::Difference { base, .. } => {
                for _ in 0..max_attempts {
                    let x = sample_box(base, rng);
                    if self.contains(&x).unwrap_or(false) {
                        return Some(x);
                    }
                }
                None
            }
        }
    }
}

fn clip<T: Scalar>(a: &Hyperbox<T>, b: &Hyperbox<T>) -> Hyperbox<T> {
    let bounds: Vec<(T, T)> = a
        .sides()
        .iter()
        .zip(b.sides())
        .map(|(x, y)| (x.lo().max(y.lo()), x.hi().min(y.hi())))
        .collect();
    Hyperbox::from_bounds(&bounds).expect("clip of intersecting boxes")
}

pub(crate) fn sample_box<T: Scalar, R: Rng + ?Sized>(b: &Hyperbox<T>, rng: &mut R) -> Vec<T> {
    b.sides()
        .iter()
        .map(|s| s.lo() + s.width() * T::of(rng.random::<f64>()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bx(b: &[(f64, f64)]) -> Hyperbox {
        Hyperbox::from_bounds(b).unwrap()
    }

    #[test]
    fn pieces_cover_the_intersection() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = Region::difference(
            bx(&[(-2.0, 2.0), (-2.0, 2.0)]),
            vec![bx(&[(-1.0, 1.0), (-1.0, 1.0)]), bx(&[(0.5, 2.5), (-3.0, 0.0)])],
        )
        .unwrap();
        for _ in 0..200 {
            let lo = [rng.random_range(-3.0..2.0), rng.random_range(-3.0..2.0)];
            let b = bx(&[(lo[0], lo[0] + 1.5), (lo[1], lo[1] + 1.0)]);
            let ps = r.pieces(&b);
            for p in &ps {
                assert!(b.contains_box(p).unwrap());
            }
            for _ in 0..50 {
                let x = sample_box(&b, &mut rng);
                if r.contains(&x).unwrap() {
                    assert!(ps.iter().any(|p| p.contains(&x).unwrap()));
                }
            }
        }
    }

    #[test]
    fn pendulum_initial_set_contains_downward_equilibrium() {
        let pi = std::f64::consts::PI;
        let r = Region::from_box(bx(&[(0.75 * pi, 1.25 * pi), (-1.0, 1.0)]));
        assert!(r.contains(&[pi, 0.0]).unwrap());
    }

    #[test]
    fn center_of_member_box_is_contained() {
        let a = bx(&[(0.0, 1.0), (0.0, 1.0)]);
        let b = bx(&[(5.0, 6.0), (-2.0, -1.0)]);
        let u = Region::union(vec![a.clone(), b.clone()]).unwrap();
        assert!(u.contains(&a.center()).unwrap());
        assert!(u.contains(&b.center()).unwrap());
        let d = Region::difference(bx(&[(0.0, 10.0), (-5.0, 5.0)]), vec![a.clone()]).unwrap();
        assert!(d.contains(&[5.0, 0.0]).unwrap());
    }

    #[test]
    fn point_in_subtracted_box_is_excluded() {
        let d = Region::difference(bx(&[(0.0, 1.0), (0.0, 1.0)]), vec![bx(&[(0.4, 0.6), (0.4, 0.6)])]).unwrap();
        assert!(!d.contains(&[0.5, 0.5]).unwrap());
        // faces of the hole stay in the difference
        assert!(d.contains(&[0.4, 0.5]).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let r = Region::from_box(bx(&[(0.0, 1.0), (0.0, 1.0)]));
        assert!(r.contains(&[0.5]).is_err());
        assert!(r.intersects(&bx(&[(0.0, 1.0)])).is_err());
    }

    #[test]
    fn box_intersections() {
        let r = Region::from_box(bx(&[(0.0, 1.0), (0.0, 1.0)]));
        assert!(r.intersects(&bx(&[(0.9, 2.0), (0.0, 1.0)])).unwrap());
        assert!(!r.intersects(&bx(&[(2.0, 3.0), (2.0, 3.0)])).unwrap());
    }

    /// Exhaustive oracle for small instances: probe a fine lattice of the box
    /// (including its corners and edges) against `contains`.
    fn lattice_hits(r: &Region, b: &Hyperbox, steps: usize) -> bool {
        let (lo, hi) = (b.lo(), b.hi());
        for i in 0..=steps {
            for j in 0..=steps {
                let x = [
                    lo[0] + (hi[0] - lo[0]) * i as f64 / steps as f64,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / steps as f64,
                ];
                if r.contains(&x).unwrap() {
                    return true;
                }
            }
        }
        false
    }

    #[test]
    fn box_strictly_inside_hole_misses_difference() {
        let r = Region::difference(bx(&[(0.0, 4.0), (0.0, 4.0)]), vec![bx(&[(1.0, 2.0), (1.0, 2.0)])]).unwrap();
        let b = bx(&[(1.2, 1.8), (1.2, 1.8)]);
        assert!(!lattice_hits(&r, &b, 40));
        assert!(!r.intersects(&b).unwrap());
        // touching the hole face intersects
        let c = bx(&[(1.0, 1.8), (1.2, 1.8)]);
        assert!(lattice_hits(&r, &c, 40));
        assert!(r.intersects(&c).unwrap());
    }

    #[test]
    fn disjoint_holes_are_normalized_away() {
        let r = Region::difference(bx(&[(0.0, 1.0)]), vec![bx(&[(2.0, 3.0)])]).unwrap();
        assert!(matches!(r, Region::Box { .. }));
    }

    #[test]
    fn intersects_is_sound_under_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let regions = vec![
            Region::from_box(bx(&[(-1.0, 1.0), (0.0, 2.0)])),
            Region::union(vec![bx(&[(-1.0, 0.0), (-1.0, 0.0)]), bx(&[(0.5, 1.0), (0.5, 3.0)])]).unwrap(),
            Region::difference(
                bx(&[(-2.0, 2.0), (-2.0, 2.0)]),
                vec![bx(&[(-1.0, 1.0), (-1.0, 1.0)]), bx(&[(1.5, 2.5), (-3.0, 3.0)])],
            )
            .unwrap(),
        ];
        for _ in 0..300 {
            let c = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let w = [rng.random_range(0.0..1.5), rng.random_range(0.0..1.5)];
            let b = bx(&[(c[0], c[0] + w[0]), (c[1], c[1] + w[1])]);
            for r in &regions {
                let claimed = r.intersects(&b).unwrap();
                let any = (0..10_000 / 30).any(|_| {
                    let x = sample_box(&b, &mut rng);
                    r.contains(&x).unwrap()
                });
                assert!(claimed || !any, "unsound miss for {b} against {r:?}");
            }
        }
    }

    #[test]
    fn samples_land_in_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = Region::difference(bx(&[(0.0, 1.0), (0.0, 1.0)]), vec![bx(&[(0.0, 0.9), (0.0, 0.9)])]).unwrap();
        for _ in 0..200 {
            let x = r.sample(&mut rng, 10_000).unwrap();
            assert!(r.contains(&x).unwrap());
        }
        let u = Region::union(vec![bx(&[(0.0, 1.0), (0.0, 1.0)]), bx(&[(0.5, 1.5), (0.0, 1.0)])]).unwrap();
        let mut right = 0;
        for _ in 0..4000 {
            let x = u.sample(&mut rng, 1000).unwrap();
            assert!(u.contains(&x).unwrap());
            if x[0] > 1.0 {
                right += 1;
            }
        }
        // area of x>1 is 1/3 of the union
        assert!((right as f64 / 4000.0 - 1.0 / 3.0).abs() < 0.03);
    }
}
