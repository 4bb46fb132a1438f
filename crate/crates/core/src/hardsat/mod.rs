//! Bound-based training over an adaptively refined partition, for
//! verification (certificate only) and synthesis (certificate and
//! controller jointly).

pub mod loss;
pub mod soft;

use crate::autodiff::{Adam, Plain};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::net::CertificateNet;
use crate::partition::{top_k, Cell, Kind, Partition};
use crate::problem::{beta_from_p, ReachAvoidSpec};
use crate::sampling::{self, Distribution, Mixture};
use loss::{Args, Thresholds};
use serde::{Deserialize, Serialize};
use soft::{WarmConfig, WarmReport};
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Verify,
    Synthesize,
}

/// Merge margins. A sibling pair is merged when both children satisfy each
/// of their constraints by at least the margin and the parent verifies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Margins {
    pub nonneg: f64,
    pub init: f64,
    /// Multiplied by `β`.
    pub unsafe_rel: f64,
    /// Multiplied by `ε_gen`.
    pub gen_eps: f64,
    /// Multiplied by the typical `|Φ|`.
    pub gen_phi: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self {
            nonneg: 0.1,
            init: 0.1,
            unsafe_rel: 0.1,
            gen_eps: 0.1,
            gen_phi: 0.01,
        }
    }
}

impl Margins {
    fn resolve(&self, beta: f64, eps_gen: f64, phi_scale: f64) -> [f64; 4] {
        [
            self.nonneg,
            self.init,
            self.unsafe_rel * beta,
            self.gen_eps * eps_gen + self.gen_phi * phi_scale,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardSatConfig {
    /// Weights of the non-negativity, initial, unsafe and generator terms.
    pub weights: [f64; 4],
    /// Fixed `ε_gen`; when absent it is `eps_gen_rel` times the median `|Φ|`
    /// after the warm start.
    pub eps_gen: Option<f64>,
    pub eps_gen_rel: f64,
    pub slack: f64,
    pub lr: f64,
    pub ctrl_lr: f64,
    /// Cells split per constraint kind at each refinement.
    pub top_k: usize,
    pub refine_every: usize,
    pub refine_every_late: usize,
    /// Epoch within a stage after which the late cadence applies.
    pub late_after: usize,
    pub merge_every: usize,
    pub margins: Margins,
    /// Epoch cap per stage.
    pub max_epochs: usize,
    pub budget: usize,
    /// Initial grid counts per axis; empty picks about 4096 cells.
    pub grid: Vec<usize>,
    /// Cells per gradient tape.
    pub batch: usize,
    /// First threshold of the incremental schedule; absent trains at the
    /// target directly.
    pub p_start: Option<f64>,
    pub p_step: f64,
    pub time_limit_s: Option<f64>,
    pub warm: WarmConfig,
}

impl Default for HardSatConfig {
    fn default() -> Self {
        Self {
            weights: [1.0; 4],
            eps_gen: None,
            eps_gen_rel: 1e-3,
            slack: 1e-9,
            lr: 1e-3,
            ctrl_lr: 1e-3,
            top_k: 64,
            refine_every: 50,
            refine_every_late: 10,
            late_after: 1000,
            merge_every: 200,
            margins: Margins::default(),
            max_epochs: 20_000,
            budget: 500_000,
            grid: Vec::new(),
            batch: 32,
            p_start: Some(0.5),
            p_step: 0.15,
            time_limit_s: None,
            warm: WarmConfig::default(),
        }
    }
}

impl HardSatConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return bad("loss weights must be positive");
        }
        if let Some(e) = self.eps_gen {
            if !(e > 0.0) {
                return bad("eps_gen must be positive");
            }
        }
        if !(self.eps_gen_rel > 0.0) || self.slack < 0.0 || !(self.lr > 0.0) || !(self.ctrl_lr > 0.0) {
            return bad("eps_gen_rel, lr and ctrl_lr must be positive and slack non-negative");
        }
        if self.top_k == 0 || self.refine_every == 0 || self.refine_every_late == 0 || self.merge_every == 0 {
            return bad("top_k and cadences must be at least 1");
        }
        if self.batch == 0 || self.budget == 0 {
            return bad("batch and budget must be at least 1");
        }
        if !(self.p_step > 0.0) {
            return bad("p_step must be positive");
        }
        Ok(())
    }
}

/// Thresholds of the incremental schedule: `p_start, p_start + Δp, …`, the
/// last one being `p_ra`.
pub fn schedule(p_start: Option<f64>, p_step: f64, p_ra: f64) -> Result<Vec<f64>> {
    let Some(p0) = p_start else {
        return Ok(vec![p_ra]);
    };
    if !(p0 > 0.0 && p0 <= p_ra) || !(p_step > 0.0) {
        return Err(Error::Config(format!("schedule start {p0} must lie in (0, {p_ra}] and the step be positive")));
    }
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let p = p0 + k as f64 * p_step;
        if p >= p_ra - 1e-12 {
            out.push(p_ra);
            return Ok(out);
        }
        out.push(p);
        k += 1;
    }
}

/// Default initial grid: the same count along each axis, about 4096 cells.
pub fn default_grid(n: usize) -> Vec<usize> {
    let k = (4096f64.powf(1.0 / n as f64) + 1e-9).floor().max(1.0) as usize;
    vec![k; n]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Sat,
    Unsat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub stage: usize,
    pub epoch: usize,
    pub p: f64,
    pub loss: f64,
    /// Unweighted sums per kind, in the order non-negativity, initial,
    /// unsafe, generator.
    pub per_kind: [f64; 4],
    pub cells: usize,
    pub cells_per_kind: [usize; 4],
    pub diam: f64,
    pub wall_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub p: f64,
    pub beta: f64,
    pub status: Status,
    pub epochs: usize,
    pub cells: usize,
    pub reason: Option<String>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub status: Status,
    pub reason: Option<String>,
    /// Highest threshold reached with a zero bound loss.
    pub p_certified: Option<f64>,
    pub stages: Vec<StageReport>,
    pub cert: CertificateNet,
    /// Trained controller parameters in synthesis mode.
    pub ctrl: Option<Vec<f64>>,
    pub partition: Partition,
    pub trace: Vec<TraceRow>,
    pub eps_gen: f64,
    pub phi_scale: f64,
    pub warm: Option<WarmReport>,
    pub epochs: usize,
    pub merges: usize,
}

impl TrainOutcome {
    /// Generator with the trained controller installed.
    pub fn generator(&self, gen: &Generator) -> Generator {
        let mut g = gen.clone();
        if let (Some(c), Some(p)) = (g.controller.as_mut(), &self.ctrl) {
            c.params.clone_from(p);
        }
        g
    }
}

fn is_sat(args: &[(u64, Args<f64>)]) -> bool {
    args.iter().all(|(_, a)| a.iter().flatten().all(|x| *x <= 0.0))
}

fn refine_step(partition: &mut Partition, args: &[(u64, Args<f64>)], k: usize) -> Result<usize> {
    let mut ids = Vec::new();
    for kind in Kind::ALL {
        let scores: Vec<(u64, f64)> = args
            .iter()
            .filter_map(|(id, a)| a[kind.index()].map(|x| (*id, x)))
            .collect();
        ids.extend(top_k(&scores, k));
    }
    ids.sort_unstable();
    ids.dedup();
    partition.refine(&ids)?;
    Ok(ids.len())
}

fn satisfies(a: &Args<f64>, margins: &[f64; 4]) -> bool {
    (0..4).all(|k| a[k].is_none_or(|x| x <= -margins[k]))
}

/// Merges sibling pairs whose children satisfy every constraint with
/// margin and whose parent verifies, bottom-up until nothing changes.
/// `args` is updated in place. Returns the number of merges.
fn merge_fixpoint(
    gen: &Generator,
    th: &Thresholds,
    net: &CertificateNet,
    ctrl: Option<&[f64]>,
    partition: &mut Partition,
    args: &mut BTreeMap<u64, Args<f64>>,
    margins: &[f64; 4],
) -> Result<usize> {
    let mut merged = 0;
    loop {
        let cands: Vec<Cell> = partition
            .sibling_pairs()
            .into_iter()
            .filter(|(_, a, b)| satisfies(&args[a], margins) && satisfies(&args[b], margins))
            .filter_map(|(p, _, _)| partition.parent_cell(p))
            .collect();
        if cands.is_empty() {
            return Ok(merged);
        }
        let refs: Vec<&Cell> = cands.iter().collect();
        let parent_args = loss::evaluate_cells(gen, th, net, ctrl, &refs)?;
        let mut any = false;
        for (id, pa) in parent_args {
            if pa.iter().flatten().all(|x| *x <= 0.0) {
                let children = partition.sibling_pairs().into_iter().find(|(p, _, _)| *p == id);
                if partition.merge(id) {
                    if let Some((_, a, b)) = children {
                        args.remove(&a);
                        args.remove(&b);
                    }
                    args.insert(id, pa);
                    merged += 1;
                    any = true;
                }
            }
        }
        if !any {
            return Ok(merged);
        }
    }
}

fn trace_row(stage: usize, epoch: usize, p: f64, args: &[(u64, Args<f64>)], w: &[f64; 4], part: &Partition, t0: &Instant) -> TraceRow {
    let (loss, per_kind) = loss::loss_value(args, w);
    let mut cells_per_kind = [0; 4];
    for (_, a) in args {
        for k in 0..4 {
            if a[k].is_some() {
                cells_per_kind[k] += 1;
            }
        }
    }
    TraceRow {
        stage,
        epoch,
        p,
        loss,
        per_kind,
        cells: part.len(),
        cells_per_kind,
        diam: part.diam(),
        wall_s: t0.elapsed().as_secs_f64(),
    }
}

/// Median `|Φ|` over generator-region samples.
pub fn phi_scale(spec: &ReachAvoidSpec, gen: &Generator, net: &CertificateNet, ctrl: Option<&[f64]>, n: usize, seed: u64) -> Result<f64> {
    let samples = sampling::sample_states(spec, &Distribution::Mixture(Mixture::default()), n, seed)?;
    let v = net.view(&net.params);
    let mut p = Plain::<f64>::new();
    let mut phis = Vec::new();
    for s in samples.iter().filter(|s| s.gen) {
        phis.push(gen.eval(&mut p, &v, ctrl, &s.x)?.1.abs());
    }
    phis.sort_by(f64::total_cmp);
    Ok(if phis.is_empty() { 0.0 } else { phis[phis.len() / 2] })
}

/// Warm start followed by bound training through the incremental schedule.
///
/// In synthesis mode the generator must carry a controller network, whose
/// parameters are trained jointly with the certificate.
pub fn train(
    spec: &ReachAvoidSpec,
    gen: &Generator,
    mut net: CertificateNet,
    mode: Mode,
    cfg: &HardSatConfig,
    seed: u64,
    observer: &mut dyn FnMut(&TraceRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let t0 = Instant::now();
    if net.arch.n != spec.dim() || gen.n() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: net.arch.n,
        });
    }
    let mut ctrl: Option<Vec<f64>> = match mode {
        Mode::Verify => None,
        Mode::Synthesize => Some(
            gen.controller
                .as_ref()
                .ok_or_else(|| Error::Config("synthesis needs a controller network".into()))?
                .params
                .clone(),
        ),
    };

    let eps_warm = match cfg.eps_gen {
        Some(e) => e,
        None => cfg.eps_gen_rel * phi_scale(spec, gen, &net, ctrl.as_deref(), 2_000, seed ^ 0x9e37)?.max(1e-12),
    };
    let warm = if cfg.warm.epochs > 0 {
        Some(soft::warm_start(spec, gen, &mut net, ctrl.as_mut(), eps_warm, &cfg.weights, &cfg.warm, seed)?)
    } else {
        None
    };
    let phi_sc = match &warm {
        Some(w) => w.phi_scale,
        None => phi_scale(spec, gen, &net, ctrl.as_deref(), 2_000, seed ^ 0x9e37)?,
    };
    let eps_gen = cfg.eps_gen.unwrap_or((cfg.eps_gen_rel * phi_sc).max(1e-12));

    let grid = if cfg.grid.is_empty() { default_grid(spec.dim()) } else { cfg.grid.clone() };
    let partition = Partition::grid(spec, &grid, &net.s_in, cfg.budget)?;
    let stages = schedule(cfg.p_start, cfg.p_step, spec.p_ra)?;

    let mut tr = Trainer {
        gen,
        cfg,
        net,
        ctrl: ctrl.take(),
        partition,
        adam: None,
        trace: Vec::new(),
        eps_gen,
        phi_scale: phi_sc,
        epochs: 0,
        merges: 0,
        t0,
    };
    let mut reports = Vec::new();
    let mut p_certified = None;
    let mut status = Status::Sat;
    let mut reason = None;
    for (i, &p) in stages.iter().enumerate() {
        let beta = beta_from_p(p)?;
        let (st, epochs, why) = tr.stage(i, p, beta, observer)?;
        reports.push(StageReport {
            p,
            beta,
            status: st,
            epochs,
            cells: tr.partition.len(),
            reason: why.clone(),
        });
        if st == Status::Unsat {
            status = Status::Unsat;
            reason = Some(format!("stage {i} (p = {p}): {}", why.unwrap_or_default()));
            break;
        }
        p_certified = Some(p);
    }
    Ok(TrainOutcome {
        status,
        reason,
        p_certified,
        stages: reports,
        cert: tr.net,
        ctrl: tr.ctrl,
        partition: tr.partition,
        trace: tr.trace,
        eps_gen,
        phi_scale: phi_sc,
        warm,
        epochs: tr.epochs,
        merges: tr.merges,
    })
}

struct Trainer<'a> {
    gen: &'a Generator,
    cfg: &'a HardSatConfig,
    net: CertificateNet,
    ctrl: Option<Vec<f64>>,
    partition: Partition,
    adam: Option<(Adam, Option<Adam>)>,
    trace: Vec<TraceRow>,
    eps_gen: f64,
    phi_scale: f64,
    epochs: usize,
    merges: usize,
    t0: Instant,
}

impl Trainer<'_> {
    fn thresholds(&self, beta: f64) -> Thresholds {
        Thresholds {
            beta,
            eps_gen: self.eps_gen,
            slack: self.cfg.slack,
        }
    }

    fn evaluate(&self, th: &Thresholds) -> Result<Vec<(u64, Args<f64>)>> {
        loss::evaluate(self.gen, th, &self.net, self.ctrl.as_deref(), &self.partition)
    }

    fn stage(&mut self, stage: usize, p: f64, beta: f64, observer: &mut dyn FnMut(&TraceRow)) -> Result<(Status, usize, Option<String>)> {
        let cfg = self.cfg;
        let th = self.thresholds(beta);
        let margins = cfg.margins.resolve(beta, self.eps_gen, self.phi_scale);
        if self.adam.is_none() {
            let ca = self.ctrl.as_ref().map(|c| Adam::new(c.len(), cfg.ctrl_lr));
            self.adam = Some((Adam::new(self.net.params.len(), cfg.lr), ca));
        }
        let mut since_refine = 0;
        for epoch in 0..=cfg.max_epochs {
            let mut args = self.evaluate(&th)?;
            let row = trace_row(stage, epoch, p, &args, &cfg.weights, &self.partition, &self.t0);
            if !row.loss.is_finite() {
                return Err(Error::NonFinite(format!("bound loss at stage {stage}, epoch {epoch}")));
            }
            observer(&row);
            self.trace.push(row);
            if is_sat(&args) {
                return Ok((Status::Sat, epoch, None));
            }
            if epoch == cfg.max_epochs {
                break;
            }
            if let Some(limit) = cfg.time_limit_s {
                if self.t0.elapsed().as_secs_f64() > limit {
                    return Ok((Status::Unsat, epoch, Some("time limit".into())));
                }
            }
            let mut changed = false;
            if epoch > 0 && epoch % cfg.merge_every == 0 {
                let mut map: BTreeMap<u64, Args<f64>> = args.iter().cloned().collect();
                let m = merge_fixpoint(self.gen, &th, &self.net, self.ctrl.as_deref(), &mut self.partition, &mut map, &margins)?;
                self.merges += m;
                if m > 0 {
                    args = map.into_iter().collect();
                }
            }
            let cadence = if epoch >= cfg.late_after { cfg.refine_every_late } else { cfg.refine_every };
            if since_refine == 0 || since_refine >= cadence {
                match refine_step(&mut self.partition, &args, cfg.top_k) {
                    Ok(n) => changed = n > 0,
                    Err(Error::OutOfMemory { budget }) => {
                        return Ok((Status::Unsat, epoch, Some(format!("cell budget of {budget} exceeded"))));
                    }
                    Err(e) => return Err(e),
                }
                since_refine = 0;
            }
            since_refine += 1;
            if changed {
                args = self.evaluate(&th)?;
                if is_sat(&args) {
                    continue;
                }
            }
            self.step(&th, &args)?;
            self.epochs += 1;
        }
        Ok((Status::Unsat, cfg.max_epochs, Some("epoch cap".into())))
    }

    fn step(&mut self, th: &Thresholds, args: &[(u64, Args<f64>)]) -> Result<()> {
        let active: Vec<(&Cell, [bool; 4])> = args
            .iter()
            .filter_map(|(id, a)| {
                let mask = [0, 1, 2, 3].map(|k| a[k].is_some_and(|x| x > 0.0));
                mask.iter().any(|m| *m).then(|| (self.partition.get(*id).expect("live cell"), mask))
            })
            .collect();
        let (grad, _) = loss::bound_gradient(
            self.gen,
            th,
            &self.net,
            self.ctrl.as_deref(),
            &active,
            &self.cfg.weights,
            self.cfg.batch,
        )?;
        let n = self.net.params.len();
        let (adam, cadam) = self.adam.as_mut().expect("optimiser");
        adam.step(&mut self.net.params, &grad[..n]);
        if let (Some(c), Some(ca)) = (self.ctrl.as_mut(), cadam.as_mut()) {
            ca.step(c, &grad[n..]);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineOnlyReport {
    pub rounds: usize,
    pub zero: bool,
    pub losses: Vec<f64>,
    pub cells: usize,
}

/// Refinement without parameter updates: split the `k` worst cells per
/// kind until the bound loss is zero or `max_rounds` refinements were made.
#[allow(clippy::too_many_arguments)]
pub fn refine_only(
    gen: &Generator,
    net: &CertificateNet,
    ctrl: Option<&[f64]>,
    partition: &mut Partition,
    beta: f64,
    eps_gen: f64,
    slack: f64,
    k: usize,
    max_rounds: usize,
) -> Result<RefineOnlyReport> {
    let th = Thresholds { beta, eps_gen, slack };
    let mut losses = Vec::new();
    let mut rounds = 0;
    loop {
        let args = loss::evaluate(gen, &th, net, ctrl, partition)?;
        losses.push(loss::loss_value(&args, &[1.0; 4]).0);
        if is_sat(&args) {
            return Ok(RefineOnlyReport {
                rounds,
                zero: true,
                losses,
                cells: partition.len(),
            });
        }
        if rounds == max_rounds {
            return Ok(RefineOnlyReport {
                rounds,
                zero: false,
                losses,
                cells: partition.len(),
            });
        }
        refine_step(partition, &args, k)?;
        rounds += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseReport {
    pub samples: usize,
    pub face_samples: usize,
    /// Violations per kind beyond the tolerance.
    pub violations: [usize; 4],
    /// Largest violation amount per kind (non-positive when none).
    pub worst: [f64; 4],
}

impl DenseReport {
    pub fn passed(&self) -> bool {
        self.violations.iter().all(|v| *v == 0)
    }
}

/// Pointwise check of the certificate conditions on `n` uniform samples of
/// the domain, plus `n_faces` samples on zero-volume parts of the unsafe set.
#[allow(clippy::too_many_arguments)]
pub fn dense_check(
    spec: &ReachAvoidSpec,
    gen: &Generator,
    net: &CertificateNet,
    ctrl: Option<&[f64]>,
    beta: f64,
    n: usize,
    n_faces: usize,
    tol: f64,
    seed: u64,
) -> Result<DenseReport> {
    use rayon::prelude::*;
    let mut samples = sampling::sample_states(spec, &Distribution::Uniform, n, seed)?;
    let has_faces = spec.unsafe_set.boxes().iter().any(|b| b.volume() == 0.0);
    let face_samples = if has_faces { n_faces } else { 0 };
    if face_samples > 0 {
        let m = Mixture {
            init: 0.0,
            goal: 0.0,
            unsafe_: 1.0,
            rest: 0.0,
            unsafe_faces: 1.0,
        };
        samples.extend(sampling::sample_states(spec, &Distribution::Mixture(m), face_samples, seed ^ 0xfa_ce5)?);
    }
    let v = net.view(&net.params);
    let per: Vec<Result<([f64; 4], [usize; 4])>> = samples
        .par_chunks(1024)
        .map(|chunk| {
            let mut p = Plain::<f64>::new();
            let mut worst = [f64::NEG_INFINITY; 4];
            let mut count = [0usize; 4];
            for s in chunk {
                let (val, phi) = if s.gen {
                    let (a, b) = gen.eval(&mut p, &v, ctrl, &s.x)?;
                    (a, Some(b))
                } else {
                    (crate::net::forward(&mut p, &v, &s.x), None)
                };
                let mut h = [Some(-val), None, None, phi];
                if s.init {
                    h[1] = Some(val - 1.0);
                }
                if s.unsafe_ {
                    h[2] = Some(beta - val);
                }
                for k in 0..4 {
                    if let Some(x) = h[k] {
                        worst[k] = worst[k].max(x);
                        count[k] += (x > tol) as usize;
                    }
                }
            }
            Ok((worst, count))
        })
        .collect();
    let mut worst = [f64::NEG_INFINITY; 4];
    let mut violations = [0; 4];
    for r in per {
        let (w, c) = r?;
        for k in 0..4 {
            worst[k] = worst[k].max(w[k]);
            violations[k] += c[k];
        }
    }
    Ok(DenseReport {
        samples: n,
        face_samples,
        violations,
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynexpr::Dynamics;
    use crate::generator::Controller;
    use crate::interval::Hyperbox;
    use crate::net::{CertArch, CertInit};
    use crate::region::Region;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(p: f64) -> (ReachAvoidSpec, Generator) {
        let d = Hyperbox::from_bounds(&[(-4.0, 4.0)]).unwrap();
        let spec = ReachAvoidSpec::new(
            d.clone(),
            Region::from_box(Hyperbox::from_bounds(&[(1.0, 2.0)]).unwrap()),
            Region::from_box(Hyperbox::from_bounds(&[(-0.5, 0.5)]).unwrap()),
            Region::from_box(Hyperbox::from_bounds(&[(-3.0, 3.0)]).unwrap()),
            p,
        )
        .unwrap();
        let dynm = Dynamics::parse(1, 0, 1, &["-x1"], &[vec!["0.1"]], BTreeMap::new(), BTreeMap::new()).unwrap();
        (spec, Generator::new(&dynm, Controller::None).unwrap())
    }

    fn net(m1: usize, m2: usize, seed: u64) -> CertificateNet {
        let arch = CertArch::new(1, m1, m2, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CertificateNet::init(arch, vec![4.0], 10.0, CertInit::default(), &mut rng).unwrap()
    }

    fn cfg() -> HardSatConfig {
        HardSatConfig {
            eps_gen: Some(1e-3),
            grid: vec![64],
            max_epochs: 3000,
            p_start: None,
            warm: WarmConfig {
                samples: 2_000,
                epochs: 2_000,
                batch: 128,
                ..WarmConfig::default()
            },
            ..HardSatConfig::default()
        }
    }

    fn zero(args: &[(u64, Args<f64>)]) -> bool {
        is_sat(args)
    }

    #[test]
    fn schedule_arithmetic() {
        assert_eq!(schedule(Some(0.95), 0.15, 0.95).unwrap(), vec![0.95]);
        assert_eq!(schedule(None, 0.15, 0.95).unwrap(), vec![0.95]);
        let s = schedule(Some(0.5), 0.15, 0.95).unwrap();
        let want = [0.5, 0.65, 0.8, 0.95];
        assert_eq!(s.len(), 4);
        for (a, b) in s.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(schedule(Some(0.99), 0.1, 0.95).is_err());
        assert!(schedule(Some(0.5), 0.0, 0.95).is_err());
    }

    #[test]
    fn toy_is_certified_reproducibly_and_then_immediately() {
        let (spec, gen) = toy(0.8);
        let c = cfg();
        let a = train(&spec, &gen, net(8, 8, 1), Mode::Verify, &c, 4, &mut |_| {}).unwrap();
        assert_eq!(a.status, Status::Sat, "{:?}", a.reason);
        assert_eq!(a.p_certified, Some(0.8));
        let th = Thresholds {
            beta: spec.beta,
            eps_gen: a.eps_gen,
            slack: c.slack,
        };
        assert!(zero(&loss::evaluate(&gen, &th, &a.cert, None, &a.partition).unwrap()));
        let dense = dense_check(&spec, &gen, &a.cert, None, spec.beta, 100_000, 100, 1e-9, 3).unwrap();
        assert!(dense.passed(), "{dense:?}");

        let b = train(&spec, &gen, net(8, 8, 1), Mode::Verify, &c, 4, &mut |_| {}).unwrap();
        assert_eq!(a.epochs, b.epochs);
        assert_eq!(a.cert.params, b.cert.params);

        // the certified network on a partition at least as fine needs no step
        let depth = a.partition.cells().map(|c| c.depth).max().unwrap();
        let fine = HardSatConfig {
            grid: vec![64 << depth.min(8)],
            budget: 1 << 20,
            warm: WarmConfig { epochs: 0, ..c.warm.clone() },
            ..c.clone()
        };
        let z = train(&spec, &gen, a.cert.clone(), Mode::Verify, &fine, 4, &mut |_| {}).unwrap();
        assert_eq!(z.status, Status::Sat);
        assert_eq!(z.epochs, 0);
        assert_eq!(z.stages[0].epochs, 0);
        assert_eq!(z.cert.params, a.cert.params);

        // merging on the zero-loss partition keeps the loss at zero
        let mut part = z.partition.clone();
        let all: Vec<u64> = part.cells().map(|c| c.id).collect();
        part.refine(&all).unwrap();
        let mut map: BTreeMap<u64, Args<f64>> = loss::evaluate(&gen, &th, &a.cert, None, &part).unwrap().into_iter().collect();
        assert!(map.values().all(|a| a.iter().flatten().all(|x| *x <= 0.0)));
        let before = part.len();
        let m = merge_fixpoint(&gen, &th, &a.cert, None, &mut part, &mut map, &[0.0; 4]).unwrap();
        assert!(m > 0);
        assert_eq!(part.len(), before - m);
        let again = loss::evaluate(&gen, &th, &a.cert, None, &part).unwrap();
        assert!(zero(&again));
        let stored: Vec<(u64, Args<f64>)> = map.into_iter().collect();
        assert_eq!(stored, again);
    }

    #[test]
    fn exhaustion_is_unsat() {
        let (spec, gen) = toy(0.999_999);
        let c = HardSatConfig {
            max_epochs: 20,
            warm: WarmConfig { epochs: 0, ..WarmConfig::default() },
            ..cfg()
        };
        let o = train(&spec, &gen, net(2, 2, 0), Mode::Verify, &c, 0, &mut |_| {}).unwrap();
        assert_eq!(o.status, Status::Unsat);
        assert_eq!(o.stages.len(), 1);
        assert_eq!(o.stages[0].epochs, 20);
        assert!(o.reason.unwrap().contains("epoch cap"));
        assert_eq!(o.p_certified, None);

        let tight = HardSatConfig { budget: 64, ..c.clone() };
        let o = train(&spec, &gen, net(2, 2, 0), Mode::Verify, &tight, 0, &mut |_| {}).unwrap();
        assert_eq!(o.status, Status::Unsat);
        assert!(o.reason.unwrap().contains("budget"));

        let staged = HardSatConfig { p_start: Some(0.5), p_step: 0.25, ..c };
        let o = train(&spec, &gen, net(2, 2, 0), Mode::Verify, &staged, 0, &mut |_| {}).unwrap();
        assert_eq!(o.status, Status::Unsat);
        let last = o.stages.len() - 1;
        assert!(o.reason.unwrap().starts_with(&format!("stage {last}")));
    }
}
