//! Axis-aligned cell partition of the domain with a refinement tree.
//!
//! Each live cell carries, per constraint kind, the closed boxes covering its
//! intersection with the constrained region. A cell belongs to a kind iff
//! that list is non-empty.

use crate::error::{Error, Result};
use crate::interval::{Hyperbox, Interval};
use crate::problem::ReachAvoidSpec;
use crate::region::Region;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// `V ≥ 0` on the whole domain.
    NonNeg,
    /// `V ≤ 1` on the initial set.
    Init,
    /// `V ≥ β` on the unsafe set.
    Unsafe,
    /// `Φ ≤ -ε_gen` away from goal and unsafe sets.
    Gen,
}

impl Kind {
    pub const ALL: [Kind; 4] = [Kind::NonNeg, Kind::Init, Kind::Unsafe, Kind::Gen];

    pub fn name(self) -> &'static str {
        match self {
            Kind::NonNeg => "nonneg",
            Kind::Init => "init",
            Kind::Unsafe => "unsafe",
            Kind::Gen => "gen",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub id: u64,
    pub parent: Option<u64>,
    pub bx: Hyperbox,
    pub depth: u32,
    init: Vec<Hyperbox>,
    unsafe_: Vec<Hyperbox>,
    gen: Vec<Hyperbox>,
}

impl Cell {
    pub fn pieces(&self, kind: Kind) -> &[Hyperbox] {
        match kind {
            Kind::NonNeg => std::slice::from_ref(&self.bx),
            Kind::Init => &self.init,
            Kind::Unsafe => &self.unsafe_,
            Kind::Gen => &self.gen,
        }
    }

    pub fn has(&self, kind: Kind) -> bool {
        !self.pieces(kind).is_empty()
    }
}

#[derive(Clone, Debug)]
struct Node {
    bx: Hyperbox,
    parent: Option<u64>,
    depth: u32,
    children: [u64; 2],
}

#[derive(Clone, Debug)]
struct Regions {
    init: Region,
    unsafe_: Region,
    gen: Region,
}

#[derive(Clone, Debug)]
pub struct Partition {
    domain: Hyperbox,
    regions: Regions,
    /// Per-axis scale used to pick the split axis.
    scale: Vec<f64>,
    budget: usize,
    cells: BTreeMap<u64, Cell>,
    tree: HashMap<u64, Node>,
    next_id: u64,
}

impl Partition {
    /// Regular grid with `counts[d]` cells along axis `d`.
    pub fn grid(spec: &ReachAvoidSpec, counts: &[usize], scale: &[f64], budget: usize) -> Result<Self> {
        let n = spec.dim();
        if counts.len() != n || scale.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: counts.len().min(scale.len()),
            });
        }
        if counts.contains(&0) {
            return Err(Error::Config("grid counts must be positive".into()));
        }
        let total: usize = counts.iter().product();
        if total > budget {
            return Err(Error::OutOfMemory { budget });
        }
        let mut p = Self {
            domain: spec.domain.clone(),
            regions: Regions {
                init: spec.init.clone(),
                unsafe_: spec.unsafe_set.clone(),
                gen: spec.gen_region.clone(),
            },
            scale: scale.to_vec(),
            budget,
            cells: BTreeMap::new(),
            tree: HashMap::new(),
            next_id: 0,
        };
        let sides = spec.domain.sides();
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let bounds: Vec<Interval> = (0..n)
                .map(|d| {
                    let s = sides[d];
                    let w = s.width() / counts[d] as f64;
                    let lo = s.lo() + w * idx[d] as f64;
                    let hi = if idx[d] + 1 == counts[d] { s.hi() } else { s.lo() + w * (idx[d] + 1) as f64 };
                    Interval::new(lo, hi)
                })
                .collect::<Result<_>>()?;
            let id = p.fresh_id();
            let cell = p.make_cell(id, None, Hyperbox::new(bounds)?, 0);
            p.cells.insert(id, cell);
            // odometer increment, last axis fastest
            for d in (0..n).rev() {
                idx[d] += 1;
                if idx[d] < counts[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(p)
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn make_cell(&self, id: u64, parent: Option<u64>, bx: Hyperbox, depth: u32) -> Cell {
        Cell {
            id,
            parent,
            depth,
            init: self.regions.init.pieces(&bx),
            unsafe_: self.regions.unsafe_.pieces(&bx),
            gen: self.regions.gen.pieces(&bx),
            bx,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn set_budget(&mut self, budget: usize) {
        self.budget = budget;
    }

    pub fn domain(&self) -> &Hyperbox {
        &self.domain
    }

    /// Live cells in id order.
    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.values()
    }

    pub fn get(&self, id: u64) -> Option<&Cell> {
        self.cells.get(&id)
    }

    pub fn count(&self, kind: Kind) -> usize {
        self.cells.values().filter(|c| c.has(kind)).count()
    }

    /// Largest cell diagonal.
    pub fn diam(&self) -> f64 {
        self.cells.values().map(|c| c.bx.diameter()).fold(0.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        self.cells.values().map(|c| c.bx.volume()).sum()
    }

    pub fn split_axis(&self, bx: &Hyperbox) -> usize {
        let mut best = 0;
        let mut w = f64::NEG_INFINITY;
        for (d, s) in bx.sides().iter().enumerate() {
            let v = s.width() / self.scale[d];
            if v > w {
                w = v;
                best = d;
            }
        }
        best
    }

    /// Bisects each listed live cell along its widest scaled axis. Returns
    /// the ids of the new cells.
    pub fn refine(&mut self, ids: &[u64]) -> Result<Vec<u64>> {
        let mut ids: Vec<u64> = ids.iter().copied().filter(|i| self.cells.contains_key(i)).collect();
        ids.sort_unstable();
        ids.dedup();
        if self.cells.len() + ids.len() > self.budget {
            return Err(Error::OutOfMemory { budget: self.budget });
        }
        let mut out = Vec::with_capacity(2 * ids.len());
        for id in ids {
            let cell = self.cells.remove(&id).unwrap();
            let axis = self.split_axis(&cell.bx);
            let (l, r) = cell.bx.bisect(axis);
            let (a, b) = (self.fresh_id(), self.fresh_id());
            let ca = self.make_cell(a, Some(id), l, cell.depth + 1);
            let cb = self.make_cell(b, Some(id), r, cell.depth + 1);
            self.cells.insert(a, ca);
            self.cells.insert(b, cb);
            self.tree.insert(
                id,
                Node {
                    bx: cell.bx,
                    parent: cell.parent,
                    depth: cell.depth,
                    children: [a, b],
                },
            );
            out.push(a);
            out.push(b);
        }
        Ok(out)
    }

    /// Refines the `k` highest positive-score cells. Returns the number split.
    pub fn refine_topk(&mut self, scores: &[(u64, f64)], k: usize) -> Result<usize> {
        let ids = top_k(scores, k);
        let n = ids.len();
        self.refine(&ids)?;
        Ok(n)
    }

    /// `(parent, left, right)` for every internal node whose two children
    /// are both live cells.
    pub fn sibling_pairs(&self) -> Vec<(u64, u64, u64)> {
        let mut out: Vec<(u64, u64, u64)> = self
            .tree
            .iter()
            .filter(|(_, n)| n.children.iter().all(|c| self.cells.contains_key(c)))
            .map(|(&p, n)| (p, n.children[0], n.children[1]))
            .collect();
        out.sort_unstable();
        out
    }

    /// Box the parent of a live sibling pair would have.
    pub fn parent_box(&self, parent: u64) -> Option<&Hyperbox> {
        self.tree.get(&parent).map(|n| &n.bx)
    }

    /// A would-be merged cell, for evaluating bounds before committing.
    pub fn parent_cell(&self, parent: u64) -> Option<Cell> {
        let n = self.tree.get(&parent)?;
        Some(self.make_cell(parent, n.parent, n.bx.clone(), n.depth))
    }

    /// Replaces the two live children of `parent` by the parent cell.
    pub fn merge(&mut self, parent: u64) -> bool {
        let Some(node) = self.tree.get(&parent) else {
            return false;
        };
        if !node.children.iter().all(|c| self.cells.contains_key(c)) {
            return false;
        }
        let node = self.tree.remove(&parent).unwrap();
        for c in node.children {
            self.cells.remove(&c);
        }
        let cell = self.make_cell(parent, node.parent, node.bx, node.depth);
        self.cells.insert(parent, cell);
        true
    }

    /// Writes `id,depth,lo_1..lo_n,hi_1..hi_n,nonneg,init,unsafe,gen` plus
    /// any extra columns supplied per cell.
    pub fn write_csv<W: Write>(&self, w: &mut W, extra_header: &[&str], extra: &dyn Fn(&Cell) -> Vec<String>) -> Result<()> {
        let n = self.domain.dim();
        let mut head = vec!["id".to_string(), "depth".to_string()];
        head.extend((1..=n).map(|i| format!("lo{i}")));
        head.extend((1..=n).map(|i| format!("hi{i}")));
        head.extend(Kind::ALL.iter().map(|k| k.name().to_string()));
        head.extend(extra_header.iter().map(|s| s.to_string()));
        writeln!(w, "{}", head.join(","))?;
        for c in self.cells.values() {
            let mut row = vec![c.id.to_string(), c.depth.to_string()];
            row.extend(c.bx.lo().iter().map(|v| format!("{v:?}")));
            row.extend(c.bx.hi().iter().map(|v| format!("{v:?}")));
            row.extend(Kind::ALL.iter().map(|&k| (c.has(k) as u8).to_string()));
            row.extend(extra(c));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Ids of the `k` largest positive scores; ties broken by id.
pub fn top_k(scores: &[(u64, f64)], k: usize) -> Vec<u64> {
    let mut pos: Vec<(u64, f64)> = scores.iter().copied().filter(|(_, s)| *s > 0.0).collect();
    pos.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    pos.truncate(k);
    pos.into_iter().map(|(i, _)| i).collect()
}
