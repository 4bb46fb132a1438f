//! Euler–Maruyama rollouts of the closed loop and Monte Carlo estimates of
//! the reach-avoid probability.

use crate::dynexpr::{Dynamics, Expr};
use crate::error::{Error, Result};
use crate::generator::Controller;
use crate::interval::Hyperbox;
use crate::problem::ReachAvoidSpec;
use crate::sampling::stream_rng;
use crate::stats::{clopper_pearson, ProportionCi};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Open-loop dynamics with a state feedback.
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    pub dynamics: Dynamics,
    pub controller: Controller,
}

impl ClosedLoop {
    pub fn new(dynamics: Dynamics, controller: Controller) -> Result<Self> {
        let m = match &controller {
            Controller::None => 0,
            Controller::Expressions(us) => {
                if us.iter().any(Expr::uses_input) {
                    return Err(Error::Config("controller expressions may depend on the state only".into()));
                }
                us.len()
            }
            Controller::Net(c) => {
                if c.arch.n != dynamics.n {
                    return Err(Error::DimensionMismatch {
                        expected: dynamics.n,
                        got: c.arch.n,
                    });
                }
                c.arch.m()
            }
        };
        if m != dynamics.m {
            return Err(Error::DimensionMismatch {
                expected: dynamics.m,
                got: m,
            });
        }
        Ok(Self { dynamics, controller })
    }

    pub fn n(&self) -> usize {
        self.dynamics.n
    }

    pub fn control(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.controller {
            Controller::None => Ok(Vec::new()),
            Controller::Expressions(us) => us.iter().map(|e| e.eval_f64(x, &[])).collect(),
            Controller::Net(c) => c.forward(x),
        }
    }

    /// One step `x + f(x, π(x)) dt + g(x) √dt ξ`; returns the input applied.
    pub fn step(&self, x: &mut [f64], dt: f64, xi: &[f64]) -> Result<Vec<f64>> {
        let u = self.control(x)?;
        let f = self.dynamics.drift_f64(x, &u)?;
        let g = self.dynamics.diffusion_f64(x)?;
        let sq = dt.sqrt();
        for i in 0..x.len() {
            let noise: f64 = g[i].iter().zip(xi).map(|(a, b)| a * b).sum();
            x[i] += f[i] * dt + noise * sq;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state diverged".into()));
        }
        Ok(u)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Upper limit on steps; must cover the horizon.
    pub max_steps: usize,
    /// Record every `stride`-th state; 0 records nothing.
    pub stride: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 50.0,
            max_steps: 100_000_000,
            stride: 0,
        }
    }
}

impl RolloutConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::Config("dt and horizon must be positive".into()));
        }
        if self.steps() > self.max_steps {
            return Err(Error::Config(format!(
                "{} steps of {} do not fit in max_steps = {}",
                self.steps(),
                self.dt,
                self.max_steps
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Reached,
    Violated,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajPoint {
    pub t: f64,
    pub x: Vec<f64>,
    /// Input applied from this state; empty at the final state.
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutOutcome {
    pub status: Status,
    /// Time of the first goal or unsafe hit.
    pub time: Option<f64>,
    pub steps: usize,
    /// Why a rollout was counted as violated without entering the unsafe set.
    pub reason: Option<String>,
    pub trajectory: Vec<TrajPoint>,
}

/// Goal first, then unsafe; leaving the domain counts as unsafe.
fn classify(spec: &ReachAvoidSpec, x: &[f64]) -> Result<Option<Status>> {
    if spec.goal.contains(x)? {
        return Ok(Some(Status::Reached));
    }
    if !spec.domain.contains(x)? || spec.unsafe_set.contains(x)? {
        return Ok(Some(Status::Violated));
    }
    Ok(None)
}

/// Rollout from `x0` with the standard normal increments supplied by `noise`.
pub fn rollout_with(
    sys: &ClosedLoop,
    spec: &ReachAvoidSpec,
    x0: &[f64],
    cfg: &RolloutConfig,
    noise: &mut dyn FnMut(&mut [f64]),
) -> Result<RolloutOutcome> {
    if x0.len() != sys.n() {
        return Err(Error::DimensionMismatch {
            expected: sys.n(),
            got: x0.len(),
        });
    }
    let mut x = x0.to_vec();
    let mut xi = vec![0.0; sys.dynamics.n_w];
    let mut out = RolloutOutcome {
        status: Status::Timeout,
        time: None,
        steps: 0,
        reason: None,
        trajectory: Vec::new(),
    };
    let record = |out: &mut RolloutOutcome, k: usize, x: &[f64], u: Vec<f64>| {
        if cfg.stride > 0 && k % cfg.stride == 0 {
            out.trajectory.push(TrajPoint {
                t: k as f64 * cfg.dt,
                x: x.to_vec(),
                u,
            });
        }
    };
    let finish = |out: &mut RolloutOutcome, k: usize, x: &[f64], s: Status| {
        out.status = s;
        out.time = Some(k as f64 * cfg.dt);
        out.steps = k;
        if cfg.stride > 0 && out.trajectory.last().is_none_or(|p| p.t != k as f64 * cfg.dt) {
            out.trajectory.push(TrajPoint {
                t: k as f64 * cfg.dt,
                x: x.to_vec(),
                u: Vec::new(),
            });
        }
    };
    if let Some(s) = classify(spec, &x)? {
        finish(&mut out, 0, &x, s);
        return Ok(out);
    }
    let steps = cfg.steps();
    for k in 0..steps {
        noise(&mut xi);
        let before = x.clone();
        match sys.step(&mut x, cfg.dt, &xi) {
            Ok(u) => record(&mut out, k, &before, u),
            Err(Error::Domain(m)) | Err(Error::NonFinite(m)) => {
                finish(&mut out, k + 1, &before, Status::Violated);
                out.reason = Some(m);
                return Ok(out);
            }
            Err(e) => return Err(e),
        }
        if let Some(s) = classify(spec, &x)? {
            finish(&mut out, k + 1, &x, s);
            return Ok(out);
        }
    }
    out.steps = steps;
    if cfg.stride > 0 {
        out.trajectory.push(TrajPoint {
            t: steps as f64 * cfg.dt,
            x,
            u: Vec::new(),
        });
    }
    Ok(out)
}

pub fn rollout<R: Rng + ?Sized>(
    sys: &ClosedLoop,
    spec: &ReachAvoidSpec,
    x0: &[f64],
    cfg: &RolloutConfig,
    rng: &mut R,
) -> Result<RolloutOutcome> {
    rollout_with(sys, spec, x0, cfg, &mut |xi| {
        for v in xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub rollouts: usize,
    pub confidence: f64,
    /// Sub-cells per axis of the initial set's bounding box for the
    /// worst-cell report; 0 disables it.
    pub cells_per_axis: usize,
    pub rollout: RolloutConfig,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            rollouts: 1_000,
            confidence: 0.99,
            cells_per_axis: 4,
            rollout: RolloutConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub rollouts: usize,
    pub reached: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub rollouts: usize,
    pub reached: usize,
    pub violated: usize,
    pub timeout: usize,
    /// Violations caused by evaluation errors rather than the unsafe set.
    pub errors: usize,
    pub p_hat: f64,
    pub ci: ProportionCi,
    pub mean_hit_time: Option<f64>,
    pub cells_used: usize,
    pub worst_cell: Option<WorstCell>,
    pub seed: u64,
}

fn cell_index(b: &Hyperbox, k: usize, x: &[f64]) -> usize {
    let (blo, bhi) = (b.lo(), b.hi());
    let mut idx = 0;
    for (i, v) in x.iter().enumerate() {
        let (lo, hi) = (blo[i], bhi[i]);
        let w = hi - lo;
        let j = if w > 0.0 { (((v - lo) / w) * k as f64).floor().clamp(0.0, (k - 1) as f64) as usize } else { 0 };
        idx = idx * k + j;
    }
    idx
}

fn cell_box(b: &Hyperbox, k: usize, mut idx: usize) -> (Vec<f64>, Vec<f64>) {
    let (blo, bhi) = (b.lo(), b.hi());
    let n = blo.len();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for i in (0..n).rev() {
        let j = idx % k;
        idx /= k;
        let w = (bhi[i] - blo[i]) / k as f64;
        lo[i] = blo[i] + j as f64 * w;
        hi[i] = if j + 1 == k { bhi[i] } else { blo[i] + (j + 1) as f64 * w };
    }
    (lo, hi)
}

/// Initial state of rollout `i`, uniform on the initial set.
pub fn initial_state(spec: &ReachAvoidSpec, seed: u64, i: u64) -> Result<(Vec<f64>, rand_chacha::ChaCha8Rng)> {
    let mut rng = stream_rng(seed, i);
    let x0 = spec
        .init
        .sample(&mut rng, 1_000_000)
        .ok_or_else(|| Error::Domain("initial set could not be sampled".into()))?;
    Ok((x0, rng))
}

/// Fraction of rollouts from uniform initial states that reach the goal
/// before the unsafe set, with a Clopper–Pearson interval.
pub fn estimate(sys: &ClosedLoop, spec: &ReachAvoidSpec, cfg: &EstimateConfig, seed: u64) -> Result<Estimate> {
    cfg.rollout.validate()?;
    if cfg.rollouts == 0 {
        return Err(Error::Config("at least one rollout is needed".into()));
    }
    let rc = RolloutConfig { stride: 0, ..cfg.rollout.clone() };
    let runs: Vec<Result<(Vec<f64>, RolloutOutcome)>> = (0..cfg.rollouts as u64)
        .into_par_iter()
        .map(|i| {
            let (x0, mut rng) = initial_state(spec, seed, i)?;
            let o = rollout(sys, spec, &x0, &rc, &mut rng)?;
            Ok((x0, o))
        })
        .collect();
    let bb = spec.init.bounding_box();
    let k = cfg.cells_per_axis;
    let mut cells: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
    let (mut reached, mut violated, mut timeout, mut errors) = (0, 0, 0, 0);
    let mut hit_sum = 0.0;
    for r in runs {
        let (x0, o) = r?;
        match o.status {
            Status::Reached => {
                reached += 1;
                hit_sum += o.time.unwrap_or(0.0);
            }
            Status::Violated => {
                violated += 1;
                errors += o.reason.is_some() as usize;
            }
            Status::Timeout => timeout += 1,
        }
        if k > 0 {
            let c = cells.entry(cell_index(&bb, k, &x0)).or_default();
            c.0 += 1;
            c.1 += (o.status == Status::Reached) as usize;
        }
    }
    let worst_cell = cells
        .iter()
        .min_by(|a, b| {
            let ra = a.1 .1 as f64 / a.1 .0 as f64;
            let rb = b.1 .1 as f64 / b.1 .0 as f64;
            ra.total_cmp(&rb).then(a.0.cmp(b.0))
        })
        .map(|(&idx, &(n, s))| {
            let (lo, hi) = cell_box(&bb, k, idx);
            WorstCell {
                lo,
                hi,
                rollouts: n,
                reached: s,
                rate: s as f64 / n as f64,
            }
        });
    Ok(Estimate {
        rollouts: cfg.rollouts,
        reached,
        violated,
        timeout,
        errors,
        p_hat: reached as f64 / cfg.rollouts as f64,
        ci: clopper_pearson(reached as u64, cfg.rollouts as u64, cfg.confidence)?,
        mean_hit_time: (reached > 0).then(|| hit_sum / reached as f64),
        cells_used: cells.len(),
        worst_cell,
        seed,
    })
}

/// Recorded rollouts `0..count` with the same initial states and noise as
/// [`estimate`].
pub fn trajectories(sys: &ClosedLoop, spec: &ReachAvoidSpec, cfg: &RolloutConfig, count: usize, seed: u64) -> Result<Vec<RolloutOutcome>> {
    cfg.validate()?;
    let stride = cfg.stride.max(1);
    let rc = RolloutConfig { stride, ..cfg.clone() };
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let (x0, mut rng) = initial_state(spec, seed, i)?;
            rollout(sys, spec, &x0, &rc, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynexpr::{parse_expr, Symbols};
    use crate::region::Region;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn bx(b: &[(f64, f64)]) -> Hyperbox {
        Hyperbox::from_bounds(b).unwrap()
    }

    fn plane(goal: Hyperbox, safe: Hyperbox, init: Hyperbox) -> ReachAvoidSpec {
        ReachAvoidSpec::new(bx(&[(-10.0, 10.0), (-10.0, 10.0)]), Region::from_box(init), Region::from_box(goal), Region::from_box(safe), 0.9).unwrap()
    }

    fn sys(drift: [&str; 2], diff: [&str; 2]) -> ClosedLoop {
        let d = Dynamics::parse(2, 0, 2, &drift, &[vec![diff[0], "0"], vec!["0", diff[1]]], BTreeMap::new(), BTreeMap::new()).unwrap();
        ClosedLoop::new(d, Controller::None).unwrap()
    }

    #[test]
    fn one_euler_step() {
        let s = sys(["1", "0"], ["0", "0"]);
        let mut x = [0.0, 0.0];
        s.step(&mut x, 0.1, &[0.3, -2.0]).unwrap();
        assert_eq!(x, [0.1, 0.0]);
    }

    #[test]
    fn noise_enters_with_root_dt() {
        let s = sys(["0", "0"], ["2", "0.5*x2"]);
        let mut x = [0.0, 4.0];
        s.step(&mut x, 0.25, &[1.0, -1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15);
        assert!((x[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_times_out() {
        let spec = plane(bx(&[(5.0, 6.0), (5.0, 6.0)]), bx(&[(-9.0, 9.0), (-9.0, 9.0)]), bx(&[(-1.0, 1.0), (-1.0, 1.0)]));
        let s = sys(["0", "0"], ["0", "0"]);
        let cfg = RolloutConfig {
            horizon: 1.0,
            dt: 0.01,
            stride: 10,
            ..RolloutConfig::default()
        };
        let o = rollout(&s, &spec, &[0.5, 0.5], &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(o.status, Status::Timeout);
        assert_eq!(o.steps, 100);
        assert_eq!(o.trajectory.len(), 11);
        assert!(o.trajectory.iter().all(|p| p.x == vec![0.5, 0.5]));
    }

    #[test]
    fn start_in_goal_is_immediate() {
        let spec = plane(bx(&[(-2.0, 2.0), (-2.0, 2.0)]), bx(&[(-9.0, 9.0), (-9.0, 9.0)]), bx(&[(-1.0, 1.0), (-1.0, 1.0)]));
        let s = sys(["1", "0"], ["1", "1"]);
        let o = rollout(&s, &spec, &[0.0, 0.0], &RolloutConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!((o.status, o.time, o.steps), (Status::Reached, Some(0.0), 0));
        let e = estimate(&s, &spec, &EstimateConfig { rollouts: 50, ..EstimateConfig::default() }, 3).unwrap();
        assert_eq!(e.p_hat, 1.0);
    }

    #[test]
    fn drift_into_the_obstacle_never_reaches() {
        let spec = plane(bx(&[(-1.0, 1.0), (5.0, 7.0)]), bx(&[(-8.0, 8.0), (-8.0, 8.0)]), bx(&[(-1.0, 1.0), (-1.0, 1.0)]));
        let s = sys(["-3", "0"], ["0", "0"]);
        let cfg = EstimateConfig {
            rollouts: 40,
            rollout: RolloutConfig {
                horizon: 10.0,
                dt: 0.01,
                ..RolloutConfig::default()
            },
            ..EstimateConfig::default()
        };
        let e = estimate(&s, &spec, &cfg, 1).unwrap();
        assert_eq!(e.p_hat, 0.0);
        assert_eq!(e.violated, 40);
        // reaching x1 = -8 from x1 in [-1, 1] at speed 3
        let t = e.mean_hit_time;
        assert!(t.is_none());
        let o = rollout(&s, &spec, &[0.0, 0.0], &cfg.rollout, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((o.time.unwrap() - 8.0 / 3.0).abs() < 0.011);
    }

    #[test]
    fn goal_wins_when_a_step_lands_in_both() {
        // goal and unsafe overlap on x1 >= 9
        let d = bx(&[(-10.0, 10.0), (-10.0, 10.0)]);
        let spec = ReachAvoidSpec::new(
            d.clone(),
            Region::from_box(bx(&[(-1.0, 1.0), (-1.0, 1.0)])),
            Region::from_box(bx(&[(8.5, 9.5), (-1.0, 1.0)])),
            Region::from_box(bx(&[(-9.0, 9.0), (-9.0, 9.0)])),
            0.9,
        )
        .unwrap();
        let s = sys(["20", "0"], ["0", "0"]);
        let cfg = RolloutConfig {
            dt: 0.46,
            horizon: 5.0,
            ..RolloutConfig::default()
        };
        // x1 = 0 -> 9.2, inside both the goal and the unsafe set
        let o = rollout(&s, &spec, &[0.0, 0.0], &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(o.status, Status::Reached);
    }

    #[test]
    fn domain_errors_count_as_violations() {
        let spec = plane(bx(&[(5.0, 6.0), (5.0, 6.0)]), bx(&[(-9.0, 9.0), (-9.0, 9.0)]), bx(&[(-1.0, 1.0), (-1.0, 1.0)]));
        let s = sys(["1", "0"], ["sqrt(x1)", "0"]);
        let o = rollout(&s, &spec, &[-0.5, 0.0], &RolloutConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(o.status, Status::Violated);
        assert!(o.reason.is_some());
    }

    #[test]
    fn deterministic_systems_ignore_the_seed() {
        let spec = plane(bx(&[(-0.5, 0.5), (-0.5, 0.5)]), bx(&[(-9.0, 9.0), (-9.0, 9.0)]), bx(&[(2.0, 3.0), (2.0, 3.0)]));
        let s = sys(["-x1 + x2", "-x1 - x2"], ["0", "0"]);
        let cfg = RolloutConfig {
            dt: 0.01,
            horizon: 20.0,
            ..RolloutConfig::default()
        };
        let a = rollout(&s, &spec, &[2.5, 2.5], &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = rollout(&s, &spec, &[2.5, 2.5], &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.status, Status::Reached);
    }

    #[test]
    fn estimates_are_reproducible_and_cells_cover_the_initial_set() {
        let spec = plane(bx(&[(-1.0, 1.0), (-1.0, 1.0)]), bx(&[(-6.0, 6.0), (-6.0, 6.0)]), bx(&[(3.0, 4.0), (3.0, 4.0)]));
        let s = sys(["-x1", "-x2"], ["0.8", "0.8"]);
        let cfg = EstimateConfig {
            rollouts: 400,
            rollout: RolloutConfig {
                dt: 0.01,
                horizon: 20.0,
                ..RolloutConfig::default()
            },
            ..EstimateConfig::default()
        };
        let a = estimate(&s, &spec, &cfg, 5).unwrap();
        let b = estimate(&s, &spec, &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reached + a.violated + a.timeout, 400);
        assert_eq!(a.cells_used, 16);
        let w = a.worst_cell.unwrap();
        assert!(w.rate <= a.p_hat);
        assert!(w.lo.iter().zip(&w.hi).all(|(l, h)| (h - l - 0.25).abs() < 1e-12));
        assert!(a.ci.lo <= a.p_hat && a.p_hat <= a.ci.hi);
        // rollout i of the estimate is trajectory i
        let t = trajectories(&s, &spec, &cfg.rollout, 3, 5).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t.iter().all(|o| !o.trajectory.is_empty()));
    }

    #[test]
    fn expression_controller_inputs_are_recorded() {
        let d = Dynamics::parse(1, 1, 1, &["u1"], &[vec!["0"]], BTreeMap::new(), BTreeMap::new()).unwrap();
        let sym = Symbols::new(1, 0);
        let s = ClosedLoop::new(d, Controller::Expressions(vec![parse_expr("-2*x1", &sym).unwrap()])).unwrap();
        let spec = ReachAvoidSpec::new(
            bx(&[(-5.0, 5.0)]),
            Region::from_box(bx(&[(2.0, 3.0)])),
            Region::from_box(bx(&[(-0.1, 0.1)])),
            Region::from_box(bx(&[(-4.0, 4.0)])),
            0.9,
        )
        .unwrap();
        let cfg = RolloutConfig {
            dt: 0.01,
            horizon: 10.0,
            stride: 1,
            ..RolloutConfig::default()
        };
        let o = rollout(&s, &spec, &[2.0], &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(o.status, Status::Reached);
        assert_eq!(o.trajectory[0].u, vec![-4.0]);
        // x_k = 2 (1 - 0.02)^k first drops below 0.1 at k = 149
        assert_eq!(o.steps, 149);
    }
}
