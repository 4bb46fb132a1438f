//! Closed real intervals and axis-aligned boxes.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::fmt;

/// A closed interval `[lo, hi]` with `lo <= hi`. Degenerate intervals are points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval<T = f64> {
    lo: T,
    hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if lo <= hi {
            Ok(Self { lo, hi })
        } else {
            Err(Error::InvalidInterval {
                lo: lo.to_f64_lossy(),
                hi: hi.to_f64_lossy(),
            })
        }
    }

    pub fn point(x: T) -> Self {
        Self { lo: x, hi: x }
    }

    /// Builds `[min(a,b), max(a,b)]`.
    pub fn hull(a: T, b: T) -> Self {
        Self {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    #[inline]
    pub fn lo(&self) -> T {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> T {
        self.hi
    }

    #[inline]
    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    #[inline]
    pub fn mid(&self) -> T {
        self.lo + (self.hi - self.lo) * T::half()
    }

    #[inline]
    pub fn radius(&self) -> T {
        (self.hi - self.lo) * T::half()
    }

    #[inline]
    pub fn contains(&self, x: T) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Strict containment in the open interior.
    #[inline]
    pub fn contains_interior(&self, x: T) -> bool {
        self.lo < x && x < self.hi
    }

    #[inline]
    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains_interval(&self, other: &Self) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// Intersection of the open intervals is non-empty.
    pub fn overlaps_open(&self, other: &Self) -> bool {
        self.lo < other.hi && other.lo < self.hi && !self.is_degenerate() && !other.is_degenerate()
    }

    pub fn split(&self) -> (Self, Self) {
        let m = self.mid();
        (
            Self { lo: self.lo, hi: m },
            Self { lo: m, hi: self.hi },
        )
    }
}

impl<T: Scalar> fmt::Display for Interval<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// An axis-aligned hyperrectangle, the product of one interval per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperbox<T = f64> {
    sides: Vec<Interval<T>>,
}

impl<T: Scalar> Hyperbox<T> {
    pub fn new(sides: Vec<Interval<T>>) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::InvalidRegion("box must have dim >= 1".into()));
        }
        Ok(Self { sides })
    }

    pub fn from_bounds(bounds: &[(T, T)]) -> Result<Self> {
        let sides = bounds
            .iter()
            .map(|&(lo, hi)| Interval::new(lo, hi))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sides)
    }

    pub fn point(x: &[T]) -> Result<Self> {
        Self::new(x.iter().map(|&v| Interval::point(v)).collect())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    #[inline]
    pub fn sides(&self) -> &[Interval<T>] {
        &self.sides
    }

    #[inline]
    pub fn side(&self, i: usize) -> Interval<T> {
        self.sides[i]
    }

    pub fn lo(&self) -> Vec<T> {
        self.sides.iter().map(|s| s.lo()).collect()
    }

    pub fn hi(&self) -> Vec<T> {
        self.sides.iter().map(|s| s.hi()).collect()
    }

    pub fn center(&self) -> Vec<T> {
        self.sides.iter().map(|s| s.mid()).collect()
    }

    pub fn volume(&self) -> T {
        self.sides.iter().fold(T::one(), |v, s| v * s.width())
    }

    /// Euclidean length of the main diagonal.
    pub fn diameter(&self) -> T {
        self.sides
            .iter()
            .fold(T::zero(), |acc, s| acc + s.width() * s.width())
            .sqrt()
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: n,
            })
        }
    }

    pub fn contains(&self, x: &[T]) -> Result<bool> {
        self.check_dim(x.len())?;
        Ok(self.sides.iter().zip(x).all(|(s, &v)| s.contains(v)))
    }

    pub fn contains_interior(&self, x: &[T]) -> Result<bool> {
        self.check_dim(x.len())?;
        Ok(self.sides.iter().zip(x).all(|(s, &v)| s.contains_interior(v)))
    }

    pub fn contains_box(&self, other: &Self) -> Result<bool> {
        self.check_dim(other.dim())?;
        Ok(self
            .sides
            .iter()
            .zip(&other.sides)
            .all(|(a, b)| a.contains_interval(b)))
    }

    /// `other` lies in the open interior of `self`.
    pub fn contains_box_in_interior(&self, other: &Self) -> Result<bool> {
        self.check_dim(other.dim())?;
        Ok(self
            .sides
            .iter()
            .zip(&other.sides)
            .all(|(a, b)| a.lo() < b.lo() && b.hi() < a.hi()))
    }

    /// Closed boxes share at least one point.
    pub fn intersects(&self, other: &Self) -> Result<bool> {
        self.check_dim(other.dim())?;
        Ok(self
            .sides
            .iter()
            .zip(&other.sides)
            .all(|(a, b)| a.intersects(b)))
    }

    /// The open interiors intersect (positive-volume overlap).
    pub fn overlaps_interior(&self, other: &Self) -> Result<bool> {
        self.check_dim(other.dim())?;
        Ok(self
            .sides
            .iter()
            .zip(&other.sides)
            .all(|(a, b)| a.overlaps_open(b)))
    }

    /// Bisects along `axis`.
    pub fn bisect(&self, axis: usize) -> (Self, Self) {
        let (a, b) = self.sides[axis].split();
        let mut left = self.clone();
        let mut right = self.clone();
        left.sides[axis] = a;
        right.sides[axis] = b;
        (left, right)
    }

    /// The smallest box containing both.
    pub fn hull(&self, other: &Self) -> Self {
        Self {
            sides: self
                .sides
                .iter()
                .zip(&other.sides)
                .map(|(a, b)| Interval::hull(a.lo().min(b.lo()), a.hi().max(b.hi())))
                .collect(),
        }
    }

    /// Closed intersection, `None` if the boxes are disjoint.
    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let mut sides = Vec::with_capacity(self.dim());
        for (a, b) in self.sides.iter().zip(&other.sides) {
            let (lo, hi) = (a.lo().max(b.lo()), a.hi().min(b.hi()));
            if lo > hi {
                return None;
            }
            sides.push(Interval { lo, hi });
        }
        Some(Self { sides })
    }

    /// Closed boxes covering `self` minus the open interior of `hole`. The
    /// pieces are interior-disjoint; at most `2 * dim` of them.
    pub fn minus_interior(&self, hole: &Self) -> Vec<Self> {
        if !self.overlaps_interior(hole).unwrap_or(false) {
            return vec![self.clone()];
        }
        let mut out = Vec::new();
        let mut rest = self.clone();
        for d in 0..self.dim() {
            let (s, h) = (rest.sides[d], hole.sides[d]);
            if h.lo() > s.lo() {
                let mut p = rest.clone();
                p.sides[d] = Interval { lo: s.lo(), hi: h.lo() };
                out.push(p);
            }
            if h.hi() < s.hi() {
                let mut p = rest.clone();
                p.sides[d] = Interval { lo: h.hi(), hi: s.hi() };
                out.push(p);
            }
            rest.sides[d] = Interval {
                lo: s.lo().max(h.lo()),
                hi: s.hi().min(h.hi()),
            };
        }
        out
    }

    /// The `2 * dim` closed faces, each a box degenerate along one axis.
    pub fn faces(&self) -> Vec<Self> {
        let mut out = Vec::with_capacity(2 * self.dim());
        for axis in 0..self.dim() {
            for v in [self.sides[axis].lo(), self.sides[axis].hi()] {
                let mut f = self.clone();
                f.sides[axis] = Interval::point(v);
                out.push(f);
            }
        }
        out
    }
}

impl<T: Scalar> fmt::Display for Hyperbox<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.sides.iter().enumerate() {
            if i > 0 {
                write!(f, "×")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subtraction_pieces_tile_the_difference() {
        let a = Hyperbox::from_bounds(&[(0.0, 4.0), (0.0, 4.0)]).unwrap();
        let h = Hyperbox::from_bounds(&[(1.0, 2.0), (-1.0, 3.0)]).unwrap();
        let p = a.minus_interior(&h);
        let vol: f64 = p.iter().map(|b| b.volume()).sum();
        assert_eq!(vol, 16.0 - 3.0);
        assert_eq!(p.len(), 3);
        let far = Hyperbox::from_bounds(&[(4.0, 5.0), (0.0, 1.0)]).unwrap();
        assert_eq!(a.minus_interior(&far), vec![a.clone()]);
        assert!(a.minus_interior(&a).is_empty());
        assert_eq!(a.intersection(&far).unwrap().volume(), 0.0);
    }

    #[test]
    fn rejects_inverted_interval() {
        assert!(Interval::new(1.0, 0.0).is_err());
        assert!(Interval::new(1.0, 1.0).unwrap().is_degenerate());
    }

    #[test]
    fn volume_and_diameter() {
        let b = Hyperbox::from_bounds(&[(0.0, 3.0), (0.0, 4.0)]).unwrap();
        assert_eq!(b.volume(), 12.0);
        assert_eq!(b.diameter(), 5.0);
        assert_eq!(b.center(), vec![1.5, 2.0]);
    }

    #[test]
    fn bisect_preserves_volume() {
        let b = Hyperbox::from_bounds(&[(0.0, 1.0), (0.0, 4.0)]).unwrap();
        let (l, r) = b.bisect(1);
        assert_eq!(l, Hyperbox::from_bounds(&[(0.0, 1.0), (0.0, 2.0)]).unwrap());
        assert_eq!(r, Hyperbox::from_bounds(&[(0.0, 1.0), (2.0, 4.0)]).unwrap());
        assert_eq!(l.volume() + r.volume(), b.volume());
    }

    #[test]
    fn intersection_tests() {
        let a = Hyperbox::from_bounds(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let b = Hyperbox::from_bounds(&[(1.0, 2.0), (0.0, 1.0)]).unwrap();
        assert!(a.intersects(&b).unwrap());
        assert!(!a.overlaps_interior(&b).unwrap());
        let c = Hyperbox::from_bounds(&[(0.5, 2.0), (0.5, 1.0)]).unwrap();
        assert!(a.overlaps_interior(&c).unwrap());
        let d = Hyperbox::from_bounds(&[(0.5, 2.0)]).unwrap();
        assert!(a.intersects(&d).is_err());
    }

    #[test]
    fn faces_are_degenerate() {
        let a = Hyperbox::from_bounds(&[(0.0, 1.0), (2.0, 3.0)]).unwrap();
        let f = a.faces();
        assert_eq!(f.len(), 4);
        assert!(f.iter().all(|b| b.volume() == 0.0));
        assert!(f.iter().all(|b| a.contains_box(b).unwrap()));
    }
}
