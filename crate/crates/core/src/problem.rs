//! The reach-avoid problem: domain, initial, goal and safe sets, the derived
//! unsafe set and generator-constraint set, and the probability threshold.

use crate::error::{Error, Result};
use crate::interval::Hyperbox;
use crate::region::Region;
use serde::{Deserialize, Serialize};

/// `1 / (1 - p)`, the level the certificate must reach on the unsafe set so
/// that the reach-avoid probability is at least `p`.
pub fn beta_from_p(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(1.0 / (1.0 - p))
    } else {
        Err(Error::OutOfRange(format!("probability threshold {p} not in (0, 1)")))
    }
}

/// Inverse of [`beta_from_p`].
pub fn p_from_beta(beta: f64) -> f64 {
    1.0 - 1.0 / beta
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReachAvoidSpec {
    pub domain: Hyperbox,
    pub init: Region,
    pub goal: Region,
    pub safe: Region,
    /// `X \ int(safe)`, derived.
    pub unsafe_set: Region,
    /// Where the generator must be negative: `X \ int(goal ∪ unsafe)`, derived.
    pub gen_region: Region,
    pub p_ra: f64,
    pub beta: f64,
    /// Interiority conditions that failed numerically; reported, not fatal.
    pub warnings: Vec<String>,
}

impl ReachAvoidSpec {
    /// Builds the spec and derives the unsafe and generator sets.
    ///
    /// The safe set is either a box strictly inside the domain, or the domain
    /// minus a union of obstacle boxes. In the latter case the domain
    /// boundary is unsafe as well.
    pub fn new(domain: Hyperbox, init: Region, goal: Region, safe: Region, p_ra: f64) -> Result<Self> {
        let beta = beta_from_p(p_ra)?;
        let n = domain.dim();
        for (name, r) in [("init", &init), ("goal", &goal), ("safe", &safe)] {
            if r.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: r.dim(),
                });
            }
            if !domain.contains_box(&r.bounding_box())? {
                return Err(Error::InvalidRegion(format!("{name} set leaves the domain")));
            }
        }
        if matches!(init, Region::Difference { .. }) || matches!(goal, Region::Difference { .. }) {
            return Err(Error::InvalidRegion(
                "initial and goal sets must be boxes or unions of boxes".into(),
            ));
        }

        let goal_boxes: Vec<Hyperbox> = goal.boxes().into_iter().cloned().collect();
        let mut warnings = Vec::new();

        let (unsafe_set, gen_region) = match &safe {
            Region::Box { part } => {
                if !domain.contains_box_in_interior(part)? {
                    warnings.push("safe set is not inside the interior of the domain".into());
                }
                let unsafe_set = Region::difference(domain.clone(), vec![part.clone()])?;
                // The domain boundary is only reachable through int(unsafe),
                // where trajectories are already stopped.
                let gen = Region::difference(part.clone(), goal_boxes.clone())?;
                (unsafe_set, gen)
            }
            Region::Difference { base, holes } if *base == domain => {
                warnings.push("safe set touches the domain boundary; the boundary is treated as unsafe".into());
                let mut parts = domain.faces();
                parts.extend(holes.iter().cloned());
                let unsafe_set = Region::union(parts)?;
                let mut gen_holes = goal_boxes.clone();
                gen_holes.extend(holes.iter().cloned());
                let gen = Region::difference(domain.clone(), gen_holes)?;
                (unsafe_set, gen)
            }
            _ => {
                return Err(Error::InvalidRegion(
                    "safe set must be a box or the domain minus obstacle boxes".into(),
                ))
            }
        };

        for (name, r) in [("init", &init), ("goal", &goal)] {
            for b in r.boxes() {
                let inside = match &safe {
                    Region::Box { part } => part.contains_box_in_interior(b)?,
                    Region::Difference { base, holes } => {
                        base.contains_box_in_interior(b)?
                            && !holes.iter().any(|h| h.intersects(b).unwrap_or(true))
                    }
                    Region::Union { .. } => unreachable!(),
                };
                if !inside {
                    warnings.push(format!("{name} box {b} is not in the interior of the safe set"));
                }
            }
        }

        Ok(Self {
            domain,
            init,
            goal,
            safe,
            unsafe_set,
            gen_region,
            p_ra,
            beta,
            warnings,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Same sets with a different probability threshold.
    pub fn with_p_ra(&self, p_ra: f64) -> Result<Self> {
        let mut s = self.clone();
        s.beta = beta_from_p(p_ra)?;
        s.p_ra = p_ra;
        Ok(s)
    }
}
