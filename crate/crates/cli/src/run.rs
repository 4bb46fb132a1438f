//! The subcommands. Each writes its artifacts into an output directory and
//! returns an exit status.

use crate::config::{self, ControllerConfig, Problem, Source};
use anyhow::{bail, Context, Result};
use racert::generator::{Controller, Generator};
use racert::hardsat::{self, DenseReport, Mode, StageReport, Status, TraceRow, TrainOutcome};
use racert::hardsat::soft::WarmReport;
use racert::mcsim::{self, ClosedLoop, Estimate, RolloutOutcome};
use racert::net::{CertificateNet, ControllerNet};
use racert::partition::Kind;
use racert::scenario::{self, ScenarioReport};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_UNSAT: u8 = 2;

pub const REPORT: &str = "report.json";
pub const TIMING: &str = "timing.json";
pub const TRACE: &str = "loss_trace.jsonl";
pub const PARTITION: &str = "partition.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const CERTIFICATE: &str = "certificate.ckpt";
pub const CONTROLLER: &str = "controller.ckpt";
pub const CONFIG: &str = "config.toml";

/// Options shared by the training and simulation commands.
#[derive(Clone, Debug, Default)]
pub struct Common {
    pub config: String,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub overrides: Vec<String>,
}

impl Common {
    pub fn load(&self) -> Result<Problem> {
        let mut ov = self.overrides.clone();
        if let Some(s) = self.seed {
            ov.push(format!("seed={s}"));
        }
        config::load(&self.config, &ov)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report<T> {
    pub command: &'static str,
    pub name: String,
    pub seed: u64,
    pub config_hash: String,
    pub version: &'static str,
    pub exit_code: u8,
    pub result: T,
}

#[derive(Clone, Debug, Serialize)]
pub struct HardSatSummary {
    pub status: Status,
    pub reason: Option<String>,
    pub p_ra: f64,
    pub p_certified: Option<f64>,
    pub stages: Vec<StageReport>,
    pub epochs: usize,
    pub merges: usize,
    pub cells: usize,
    pub cells_per_kind: [usize; 4],
    pub max_depth: u32,
    pub eps_gen: f64,
    pub phi_scale: f64,
    pub warm: Option<WarmReport>,
    pub final_loss: f64,
    pub dense: Option<DenseReport>,
}

impl HardSatSummary {
    fn new(p: &Problem, out: &TrainOutcome, dense: Option<DenseReport>) -> Self {
        let part = &out.partition;
        Self {
            status: out.status,
            reason: out.reason.clone(),
            p_ra: p.spec.p_ra,
            p_certified: out.p_certified,
            stages: out.stages.clone(),
            epochs: out.epochs,
            merges: out.merges,
            cells: part.len(),
            cells_per_kind: Kind::ALL.map(|k| part.count(k)),
            max_depth: part.cells().map(|c| c.depth).max().unwrap_or(0),
            eps_gen: out.eps_gen,
            phi_scale: out.phi_scale,
            warm: out.warm.clone(),
            final_loss: out.trace.last().map_or(f64::NAN, |r| r.loss),
            dense,
        }
    }

    /// SAT at the target threshold and, when run, a clean dense check.
    pub fn passed(&self) -> bool {
        self.status == Status::Sat && self.dense.as_ref().is_none_or(DenseReport::passed)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthesisSummary {
    #[serde(flatten)]
    pub training: HardSatSummary,
    pub simulation: Option<Estimate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationSummary {
    pub controller: String,
    pub p_ra: f64,
    pub estimate: Estimate,
    pub meets_p_ra: bool,
}

/// Wall-clock phases, kept out of the report so that reports are
/// reproducible.
#[derive(Default, Serialize)]
struct Timing {
    phases: Vec<(String, f64)>,
    total_s: f64,
}

struct Clock {
    t0: Instant,
    last: Instant,
    timing: Timing,
}

impl Clock {
    fn start() -> Self {
        let t = Instant::now();
        Self {
            t0: t,
            last: t,
            timing: Timing::default(),
        }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.timing.phases.push((name.into(), (now - self.last).as_secs_f64()));
        self.last = now;
    }

    fn write(mut self, dir: &Path) -> Result<()> {
        self.timing.total_s = self.t0.elapsed().as_secs_f64();
        write_json(&dir.join(TIMING), &self.timing)
    }
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, v)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn prepare(dir: &Path, p: &Problem) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    std::fs::write(dir.join(CONFIG), p.config.dump()?)?;
    Ok(())
}

fn report<T: Serialize>(dir: &Path, p: &Problem, command: &'static str, code: u8, result: T) -> Result<u8> {
    let r = Report {
        command,
        name: p.config.name.clone(),
        seed: p.config.seed,
        config_hash: p.hash.clone(),
        version: env!("CARGO_PKG_VERSION"),
        exit_code: code,
        result,
    };
    write_json(&dir.join(REPORT), &r)?;
    Ok(code)
}

/// Streams trace rows to `loss_trace.jsonl` and prints progress.
struct TraceSink {
    out: BufWriter<File>,
    every: usize,
    quiet: bool,
}

impl TraceSink {
    fn new(dir: &Path, quiet: bool) -> Result<Self> {
        Ok(Self {
            out: BufWriter::new(File::create(dir.join(TRACE))?),
            every: 100,
            quiet,
        })
    }

    fn push(&mut self, r: &TraceRow) {
        // a failed trace write must not abort training; it is reported at the end
        let _ = serde_json::to_writer(&mut self.out, r).map(|_| writeln!(self.out));
        if !self.quiet && r.epoch % self.every == 0 {
            eprintln!(
                "stage {} (p = {}) epoch {:>6}  loss {:.4e}  cells {:>7}  {:.1}s",
                r.stage, r.p, r.epoch, r.loss, r.cells, r.wall_s
            );
            let _ = self.out.flush();
        }
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().context("cannot write the loss trace")
    }
}

fn write_trajectories(path: &Path, n: usize, rolls: &[RolloutOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let m = rolls
        .iter()
        .flat_map(|r| r.trajectory.iter())
        .map(|p| p.u.len())
        .max()
        .unwrap_or(0);
    let mut head = vec!["rollout".to_string(), "status".into(), "t".into()];
    head.extend((1..=n).map(|i| format!("x{i}")));
    head.extend((1..=m).map(|j| format!("u{j}")));
    w.write_record(&head)?;
    for (i, r) in rolls.iter().enumerate() {
        let status = serde_json::to_value(r.status)?.as_str().unwrap_or_default().to_string();
        for p in &r.trajectory {
            let mut row = vec![i.to_string(), status.clone(), format!("{:?}", p.t)];
            row.extend(p.x.iter().map(|v| format!("{v:?}")));
            row.extend((0..m).map(|j| p.u.get(j).map(|v| format!("{v:?}")).unwrap_or_default()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_partition(path: &Path, out: &TrainOutcome) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    out.partition.write_csv(&mut f, &[], &|_| Vec::new())?;
    f.flush()?;
    Ok(())
}

fn dense(p: &Problem, gen: &Generator, out: &TrainOutcome) -> Result<Option<DenseReport>> {
    let c = &p.config.check;
    if out.status != Status::Sat || c.samples == 0 {
        return Ok(None);
    }
    let g = out.generator(gen);
    let seed = p.config.seed ^ 0xd3_5e;
    Ok(Some(hardsat::dense_check(&p.spec, &g, &out.cert, None, p.spec.beta, c.samples, c.face_samples, c.tol, seed)?))
}

fn train(p: &Problem, gen: &Generator, mode: Mode, dir: &Path, quiet: bool) -> Result<TrainOutcome> {
    let net = p.config.certificate()?;
    let mut sink = TraceSink::new(dir, quiet)?;
    let out = hardsat::train(&p.spec, gen, net, mode, &p.config.hardsat, p.config.seed, &mut |r| sink.push(r))?;
    sink.finish()?;
    write_partition(&dir.join(PARTITION), &out)?;
    out.cert.save(&dir.join(CERTIFICATE), &p.config.name, out.epochs as u64)?;
    Ok(out)
}

/// Bound training of a certificate for the configured closed loop, then
/// the dense pointwise check.
pub fn verify(c: &Common, quiet: bool) -> Result<u8> {
    let p = c.load()?;
    prepare(&c.out, &p)?;
    let mut clock = Clock::start();
    let gen = Generator::new(&p.dynamics, p.controller.clone())?;
    let out = train(&p, &gen, Mode::Verify, &c.out, quiet)?;
    clock.lap("train");
    let d = dense(&p, &gen, &out)?;
    clock.lap("dense_check");
    let s = HardSatSummary::new(&p, &out, d);
    let code = if s.passed() { EXIT_OK } else { EXIT_UNSAT };
    if !quiet {
        summarize_hardsat(&s);
    }
    clock.write(&c.out)?;
    report(&c.out, &p, "verify", code, s)
}

/// Joint training of controller and certificate, then the dense check and
/// a Monte Carlo estimate of the closed loop.
pub fn synthesize(c: &Common, quiet: bool) -> Result<u8> {
    let p = c.load()?;
    if !matches!(p.config.controller, ControllerConfig::Network { .. }) {
        bail!("synthesis needs a controller of kind 'network'");
    }
    prepare(&c.out, &p)?;
    let mut clock = Clock::start();
    let gen = Generator::new(&p.dynamics, p.controller.clone())?;
    let out = train(&p, &gen, Mode::Synthesize, &c.out, quiet)?;
    let trained = out.generator(&gen).controller.expect("controller network");
    trained.save(&c.out.join(CONTROLLER), &p.config.name, out.epochs as u64)?;
    clock.lap("train");
    let d = dense(&p, &gen, &out)?;
    clock.lap("dense_check");
    let training = HardSatSummary::new(&p, &out, d);
    let sys = ClosedLoop::new(p.dynamics.clone(), Controller::Net(trained))?;
    let simulation = if training.status == Status::Sat {
        let e = simulate_into(&p, &sys, &c.out)?;
        clock.lap("simulate");
        Some(e)
    } else {
        None
    };
    let code = if training.passed() { EXIT_OK } else { EXIT_UNSAT };
    if !quiet {
        summarize_hardsat(&training);
        if let Some(e) = &simulation {
            eprintln!("monte carlo: p_hat = {} over {} rollouts", e.p_hat, e.rollouts);
        }
    }
    clock.write(&c.out)?;
    report(&c.out, &p, "synthesize", code, SynthesisSummary { training, simulation })
}

fn simulate_into(p: &Problem, sys: &ClosedLoop, dir: &Path) -> Result<Estimate> {
    let s = &p.config.simulate;
    let seed = p.config.seed ^ 0x51_4d;
    let e = mcsim::estimate(sys, &p.spec, &s.estimate, seed)?;
    if s.trajectories > 0 {
        let cfg = mcsim::RolloutConfig {
            stride: s.stride,
            ..s.estimate.rollout.clone()
        };
        let rolls = mcsim::trajectories(sys, &p.spec, &cfg, s.trajectories, seed)?;
        write_trajectories(&dir.join(TRAJECTORIES), p.spec.dim(), &rolls)?;
    }
    Ok(e)
}

/// Warm start and last-layer scenario program.
pub fn scenario(c: &Common, quiet: bool) -> Result<u8> {
    let p = c.load()?;
    prepare(&c.out, &p)?;
    let mut clock = Clock::start();
    let gen = Generator::new(&p.dynamics, p.controller.clone())?;
    let mut net = p.config.certificate()?;
    let r = match scenario::train(&p.spec, &gen, &mut net, &p.config.scenario, p.config.seed) {
        Ok(r) => r,
        Err(racert::Error::Infeasible(m)) => {
            clock.lap("scenario");
            clock.write(&c.out)?;
            if !quiet {
                eprintln!("infeasible: {m}");
            }
            return report(&c.out, &p, "scenario", EXIT_UNSAT, Infeasible { infeasible: m });
        }
        Err(e) => return Err(e.into()),
    };
    clock.lap("scenario");
    net.save(&c.out.join(CERTIFICATE), &p.config.name, 0)?;
    if !quiet {
        eprintln!(
            "feasible: beta = {:.6e} (p = {:.6}), eps = {:.4e} (exact {:.4e}) at delta = {:e}",
            r.beta, r.p_certified, r.eps_closed_form, r.eps_exact, r.delta
        );
        if let Some(h) = &r.holdout {
            eprintln!("holdout: {} violations in {}", h.violations, h.samples);
        }
    }
    clock.write(&c.out)?;
    report::<ScenarioReport>(&c.out, &p, "scenario", EXIT_OK, r)
}

#[derive(Serialize)]
struct Infeasible {
    infeasible: String,
}

/// Monte Carlo estimate of the reach-avoid probability.
pub fn simulate(c: &Common, controller: Option<&Path>, quiet: bool) -> Result<u8> {
    let p = c.load()?;
    prepare(&c.out, &p)?;
    let mut clock = Clock::start();
    let (ctrl, label) = match controller {
        Some(path) => {
            let (net, _) = ControllerNet::load(path).with_context(|| format!("controller checkpoint {}", path.display()))?;
            (Controller::Net(net), path.display().to_string())
        }
        None => (p.controller.clone(), controller_label(&p.config.controller)),
    };
    let sys = ClosedLoop::new(p.dynamics.clone(), ctrl)?;
    let e = simulate_into(&p, &sys, &c.out)?;
    clock.lap("simulate");
    if !quiet {
        eprintln!(
            "p_hat = {} over {} rollouts, {:.0}% CI [{:.4}, {:.4}]",
            e.p_hat,
            e.rollouts,
            100.0 * e.ci.confidence,
            e.ci.lo,
            e.ci.hi
        );
    }
    clock.write(&c.out)?;
    let meets = e.p_hat >= p.spec.p_ra;
    report(
        &c.out,
        &p,
        "simulate",
        EXIT_OK,
        SimulationSummary {
            controller: label,
            p_ra: p.spec.p_ra,
            estimate: e,
            meets_p_ra: meets,
        },
    )
}

fn controller_label(c: &ControllerConfig) -> String {
    match c {
        ControllerConfig::None => "none".into(),
        ControllerConfig::Expression { u } => format!("u = [{}]", u.join(", ")),
        ControllerConfig::Checkpoint { path } => path.clone(),
        ControllerConfig::Network { checkpoint: Some(c), .. } => c.clone(),
        ControllerConfig::Network { .. } => "untrained network".into(),
    }
}

fn summarize_hardsat(s: &HardSatSummary) {
    eprintln!(
        "{:?} after {} epochs, {} cells, p certified {:?}{}",
        s.status,
        s.epochs,
        s.cells,
        s.p_certified,
        s.reason.as_ref().map(|r| format!(" ({r})")).unwrap_or_default()
    );
    if let Some(d) = &s.dense {
        eprintln!(
            "dense check: {} samples + {} face samples, violations {:?}",
            d.samples, d.face_samples, d.violations
        );
    }
}

/// Loads the problem stored next to a run's artifacts.
pub fn load_run(dir: &Path) -> Result<Problem> {
    let path = dir.join(CONFIG);
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    config::load_text(&text, &Source::File(path))
}

pub fn load_certificate(dir: &Path) -> Result<CertificateNet> {
    Ok(CertificateNet::load(&dir.join(CERTIFICATE))?.0)
}
