//! Linear programs with few variables and many constraints:
//!
//! ```text
//! max cᵀy  s.t.  a_iᵀ y ≤ b_i (i = 1..m),  lower ≤ y ≤ upper
//! ```
//!
//! The dual `min bᵀλ, Aᵀλ = c, λ ≥ 0` is solved by the revised primal simplex
//! with a dense `D × D` basis, refactored every iteration. A basis column's
//! simplex multipliers are the primal point, and a column's reduced cost is
//! the slack of its primal constraint, so pricing is a violation scan. Rows
//! enter the restricted problem in rounds (the most violated per group),
//! until the full scan finds no violation.

use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Row access for the solver.
pub trait Rows: Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    /// Writes `a_i` into `a` and returns `b_i`.
    fn row(&self, i: usize, a: &mut [f64]) -> f64;
    /// Group of row `i`; rows enter per group.
    fn group(&self, _i: usize) -> usize {
        0
    }
    fn groups(&self) -> usize {
        1
    }
    /// Names row `i` in error messages.
    fn describe(&self, i: usize) -> String {
        format!("row {i}")
    }
}

/// Dense rows.
#[derive(Clone, Debug, Default)]
pub struct DenseRows {
    pub dim: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseRows {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    pub fn push(&mut self, a: &[f64], b: f64) {
        assert_eq!(a.len(), self.dim);
        self.a.extend_from_slice(a);
        self.b.push(b);
    }
}

impl Rows for DenseRows {
    fn dim(&self) -> usize {
        self.dim
    }
    fn len(&self) -> usize {
        self.b.len()
    }
    fn row(&self, i: usize, a: &mut [f64]) -> f64 {
        a.copy_from_slice(&self.a[i * self.dim..(i + 1) * self.dim]);
        self.b[i]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpOptions {
    /// Rows with slack below `-tol` count as violated.
    pub tol: f64,
    /// Rows added per group and round.
    pub per_group: usize,
    pub max_rounds: usize,
    pub max_iterations: usize,
    /// Non-improving iterations before switching to Bland's rule.
    pub stall_limit: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            per_group: 25,
            max_rounds: 10_000,
            max_iterations: 1_000_000,
            stall_limit: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub y: Vec<f64>,
    pub objective: f64,
    pub rounds: usize,
    pub iterations: usize,
    /// Rows in the restricted problem at the end.
    pub active_rows: usize,
    /// Smallest slack over all rows (`≥ -tol` at optimum).
    pub min_slack: f64,
}

/// Column of the dual: a general row or a variable bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Col {
    Upper(usize),
    Lower(usize),
    Row(usize),
}

/// LU factorisation with partial pivoting of a dense square matrix.
struct Lu {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    fn new(n: usize, mut a: Vec<f64>) -> Option<Self> {
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for r in k + 1..n {
                let v = a[r * n + k].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best < 1e-300 {
                return None;
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                piv.swap(k, p);
            }
            let d = a[k * n + k];
            for r in k + 1..n {
                let f = a[r * n + k] / d;
                if f != 0.0 {
                    a[r * n + k] = f;
                    for c in k + 1..n {
                        a[r * n + c] -= f * a[k * n + c];
                    }
                } else {
                    a[r * n + k] = 0.0;
                }
            }
        }
        Some(Self { n, a, piv })
    }

    /// Solves `M x = b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s -= self.a[r * n + c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..n {
                s -= self.a[r * n + c] * x[c];
            }
            x[r] = s / self.a[r * n + r];
        }
        x
    }

    /// Solves `Mᵀ x = b`.
    fn solve_t(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        // Mᵀ = Uᵀ Lᵀ P
        let mut z = b.to_vec();
        for r in 0..n {
            let mut s = z[r];
            for c in 0..r {
                s -= self.a[c * n + r] * z[c];
            }
            z[r] = s / self.a[r * n + r];
        }
        for r in (0..n).rev() {
            let mut s = z[r];
            for c in r + 1..n {
                s -= self.a[c * n + r] * z[c];
            }
            z[r] = s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.piv.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }
}

struct Problem<'a> {
    lower: &'a [f64],
    upper: &'a [f64],
    rows: &'a dyn Rows,
}

impl Problem<'_> {
    fn col(&self, col: Col, a: &mut [f64]) -> f64 {
        match col {
            Col::Upper(j) => {
                a.fill(0.0);
                a[j] = 1.0;
                self.upper[j]
            }
            Col::Lower(j) => {
                a.fill(0.0);
                a[j] = -1.0;
                -self.lower[j]
            }
            Col::Row(i) => self.rows.row(i, a),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Simplex iterations over the candidate columns until no reduced cost is
/// negative.
fn simplex(
    pb: &Problem,
    basis: &mut [Col],
    lambda: &mut [f64],
    cands: &[Col],
    opts: &LpOptions,
    iterations: &mut usize,
) -> Result<Vec<f64>> {
    let d = basis.len();
    let mut a = vec![0.0; d];
    let mut stall = 0usize;
    loop {
        let mut m = vec![0.0; d * d];
        let mut b_b = vec![0.0; d];
        for (k, &col) in basis.iter().enumerate() {
            b_b[k] = pb.col(col, &mut a);
            for r in 0..d {
                m[r * d + k] = a[r];
            }
        }
        let lu = Lu::new(d, m).ok_or_else(|| Error::NonFinite("singular simplex basis".into()))?;
        let y = lu.solve_t(&b_b);
        let bland = stall >= opts.stall_limit;
        let mut enter: Option<(Col, f64)> = None;
        for &col in cands {
            if basis.contains(&col) {
                continue;
            }
            let b = pb.col(col, &mut a);
            let r = b - dot(&a, &y);
            if r < -opts.tol {
                let better = match enter {
                    None => true,
                    Some((c0, r0)) => {
                        if bland {
                            col < c0
                        } else {
                            r < r0 || (r == r0 && col < c0)
                        }
                    }
                };
                if better {
                    enter = Some((col, r));
                }
            }
        }
        let Some((q, _)) = enter else {
            return Ok(y);
        };
        *iterations += 1;
        if *iterations > opts.max_iterations {
            return Err(Error::Infeasible("simplex iteration limit reached".into()));
        }
        pb.col(q, &mut a);
        let dir = lu.solve(&a);
        let mut leave: Option<(usize, f64)> = None;
        for k in 0..d {
            if dir[k] > 1e-12 {
                let t = lambda[k].max(0.0) / dir[k];
                let better = match leave {
                    None => true,
                    Some((k0, t0)) => {
                        if t < t0 - 1e-15 {
                            true
                        } else if t <= t0 + 1e-15 {
                            if bland {
                                basis[k] < basis[k0]
                            } else {
                                dir[k] > dir[k0]
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((k, t));
                }
            }
        }
        let Some((l, t)) = leave else {
            let mut worst = (q, pb.col(q, &mut a) - dot(&a, &y));
            let s = slacks(pb.rows, &y);
            if let Some((i, v)) = s.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0))) {
                if *v < -opts.tol {
                    worst = (Col::Row(i), *v);
                }
            }
            let what = match worst.0 {
                Col::Row(i) => pb.rows.describe(i),
                Col::Upper(j) | Col::Lower(j) => format!("bound on variable {j}"),
            };
            let v = -worst.1;
            return Err(Error::Infeasible(format!("most violated constraint {what} (by {v:.3e}) cannot be satisfied")));
        };
        for k in 0..d {
            lambda[k] -= t * dir[k];
        }
        lambda[l] = t;
        basis[l] = q;
        stall = if t > 0.0 { 0 } else { stall + 1 };
    }
}

fn min_or_zero(s: &[f64]) -> f64 {
    if s.is_empty() {
        0.0
    } else {
        s.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Row slacks `b_i - a_iᵀ y`, computed in parallel, in row order.
pub fn slacks(rows: &dyn Rows, y: &[f64]) -> Vec<f64> {
    let d = rows.dim();
    (0..rows.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; d],
            |a, i| {
                let b = rows.row(i, a);
                b - dot(a, y)
            },
        )
        .collect()
}

/// Maximises `cᵀy` subject to the rows and the box `[lower, upper]`.
pub fn solve(c: &[f64], lower: &[f64], upper: &[f64], rows: &dyn Rows, opts: &LpOptions) -> Result<LpSolution> {
    let d = c.len();
    if lower.len() != d || upper.len() != d || rows.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: rows.dim(),
        });
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
        return Err(Error::Config("variable bounds must be finite with lower <= upper".into()));
    }
    let pb = Problem { lower, upper, rows };
    let mut basis: Vec<Col> = (0..d).map(|j| if c[j] >= 0.0 { Col::Upper(j) } else { Col::Lower(j) }).collect();
    let mut lambda: Vec<f64> = c.iter().map(|v| v.abs()).collect();
    let mut cands: Vec<Col> = (0..d).flat_map(|j| [Col::Upper(j), Col::Lower(j)]).collect();
    let mut in_active = vec![false; rows.len()];
    let mut iterations = 0;
    let mut rounds = 0;
    loop {
        let y = simplex(&pb, &mut basis, &mut lambda, &cands, opts, &mut iterations)?;
        let s = slacks(rows, &y);
        let min_slack = s.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut per: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows.groups()];
        for (i, &v) in s.iter().enumerate() {
            if v < -opts.tol && !in_active[i] {
                per[rows.group(i)].push((i, v));
            }
        }
        let bounds_ok = (0..d).all(|j| y[j] <= upper[j] + opts.tol && y[j] >= lower[j] - opts.tol);
        if per.iter().all(|g| g.is_empty()) {
            if !bounds_ok || min_slack < -opts.tol {
                return Err(Error::Infeasible("violation persists after the restricted optimum".into()));
            }
            return Ok(LpSolution {
                objective: dot(c, &y),
                y,
                rounds,
                iterations,
                active_rows: cands.len() - 2 * d,
                min_slack: min_or_zero(&s),
            });
        }
        rounds += 1;
        if rounds > opts.max_rounds {
            return Err(Error::Infeasible("constraint generation round limit reached".into()));
        }
        for g in per.iter_mut() {
            g.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            for &(i, _) in g.iter().take(opts.per_group) {
                in_active[i] = true;
                cands.push(Col::Row(i));
            }
        }
    }
}

/// Solves with every row present from the start, for comparison on small
/// problems.
pub fn solve_full(c: &[f64], lower: &[f64], upper: &[f64], rows: &dyn Rows, opts: &LpOptions) -> Result<LpSolution> {
    let o = LpOptions {
        per_group: usize::MAX,
        ..opts.clone()
    };
    let d = c.len();
    let pb = Problem { lower, upper, rows };
    let mut basis: Vec<Col> = (0..d).map(|j| if c[j] >= 0.0 { Col::Upper(j) } else { Col::Lower(j) }).collect();
    let mut lambda: Vec<f64> = c.iter().map(|v| v.abs()).collect();
    let mut cands: Vec<Col> = (0..d).flat_map(|j| [Col::Upper(j), Col::Lower(j)]).collect();
    cands.extend((0..rows.len()).map(Col::Row));
    let mut iterations = 0;
    let y = simplex(&pb, &mut basis, &mut lambda, &cands, &o, &mut iterations)?;
    let s = slacks(rows, &y);
    Ok(LpSolution {
        objective: dot(c, &y),
        rounds: 0,
        iterations,
        active_rows: rows.len(),
        min_slack: min_or_zero(&s),
        y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Best feasible vertex over all `D`-subsets of rows and bounds.
    fn vertices(c: &[f64], lower: &[f64], upper: &[f64], rows: &DenseRows) -> Option<f64> {
        let d = c.len();
        let mut all: Vec<(Vec<f64>, f64)> = Vec::new();
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            all.push((e.clone(), upper[j]));
            e[j] = -1.0;
            all.push((e, -lower[j]));
        }
        for i in 0..rows.len() {
            all.push((rows.a[i * d..(i + 1) * d].to_vec(), rows.b[i]));
        }
        let m = all.len();
        let mut best: Option<f64> = None;
        let mut idx: Vec<usize> = (0..d).collect();
        loop {
            let mut mat = vec![0.0; d * d];
            let mut rhs = vec![0.0; d];
            for (r, &i) in idx.iter().enumerate() {
                mat[r * d..(r + 1) * d].copy_from_slice(&all[i].0);
                rhs[r] = all[i].1;
            }
            if let Some(lu) = Lu::new(d, mat) {
                let y = lu.solve(&rhs);
                let ok = all.iter().all(|(a, b)| dot(a, &y) <= b + 1e-9 * (1.0 + b.abs()));
                if ok && y.iter().all(|v| v.is_finite()) {
                    let v = dot(c, &y);
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
            // next combination
            let mut k = d;
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                if idx[k] < m - d + k {
                    idx[k] += 1;
                    for t in k + 1..d {
                        idx[t] = idx[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn lu_solves_both_systems() {
        let m = vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        let lu = Lu::new(3, m.clone()).unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]);
        for r in 0..3 {
            let s: f64 = (0..3).map(|c| m[r * 3 + c] * x[c]).sum();
            assert!((s - [1.0, 2.0, 3.0][r]).abs() < 1e-12);
        }
        let z = lu.solve_t(&[1.0, 2.0, 3.0]);
        for c in 0..3 {
            let s: f64 = (0..3).map(|r| m[r * 3 + c] * z[r]).sum();
            assert!((s - [1.0, 2.0, 3.0][c]).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_example() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6, 0 <= x, y <= 10
        let mut rows = DenseRows::new(2);
        rows.push(&[1.0, 2.0], 4.0);
        rows.push(&[3.0, 1.0], 6.0);
        let s = solve(&[1.0, 1.0], &[0.0, 0.0], &[10.0, 10.0], &rows, &LpOptions::default()).unwrap();
        assert!((s.y[0] - 1.6).abs() < 1e-12 && (s.y[1] - 1.2).abs() < 1e-12);
        assert!((s.objective - 2.8).abs() < 1e-12);
    }

    #[test]
    fn duplicated_rows_leave_the_optimum_unchanged() {
        let mut rows = DenseRows::new(2);
        rows.push(&[1.0, 2.0], 4.0);
        rows.push(&[3.0, 1.0], 6.0);
        let mut dup = rows.clone();
        dup.push(&[1.0, 2.0], 4.0);
        dup.push(&[3.0, 1.0], 6.0);
        let o = LpOptions::default();
        let a = solve(&[1.0, 1.0], &[0.0; 2], &[10.0; 2], &rows, &o).unwrap();
        let b = solve(&[1.0, 1.0], &[0.0; 2], &[10.0; 2], &dup, &o).unwrap();
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut rows = DenseRows::new(1);
        rows.push(&[1.0], 1.0);
        rows.push(&[-1.0], -2.0);
        let r = solve(&[1.0], &[-10.0], &[10.0], &rows, &LpOptions::default());
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let d = rng.random_range(1..=3);
            let m = rng.random_range(1..=25);
            let mut rows = DenseRows::new(d);
            for _ in 0..m {
                let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                rows.push(&a, rng.random_range(-0.5..2.0));
            }
            let c: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lo = vec![-5.0; d];
            let hi = vec![5.0; d];
            let want = vertices(&c, &lo, &hi, &rows);
            let got = solve(&c, &lo, &hi, &rows, &LpOptions { per_group: 2, ..Default::default() });
            match (want, got) {
                (Some(w), Ok(s)) => {
                    assert!((w - s.objective).abs() < 1e-8, "{w} vs {}", s.objective);
                    assert!(s.min_slack >= -1e-9);
                    let full = solve_full(&c, &lo, &hi, &rows, &LpOptions::default()).unwrap();
                    assert!((full.objective - s.objective).abs() < 1e-8);
                }
                (None, Err(Error::Infeasible(_))) => {}
                (w, g) => panic!("oracle {w:?} vs solver {g:?}"),
            }
        }
    }
}
