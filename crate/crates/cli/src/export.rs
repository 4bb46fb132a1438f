//! Flat CSV views of a run directory for plotting.

use crate::run::{self, CERTIFICATE, CONFIG, REPORT, TRACE, TRAJECTORIES};
use anyhow::{bail, Context, Result};
use racert::generator::Generator;
use racert::hardsat::TraceRow;
use std::io::BufRead;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug)]
pub struct ExportArgs {
    pub from: PathBuf,
    pub out: Option<PathBuf>,
    /// Points per axis of the certificate grid.
    pub resolution: usize,
    /// The two state axes (1-based) spanned by the grid; the rest sit at
    /// the domain centre.
    pub axes: (usize, usize),
}

/// Writes whichever views the run directory supports and returns their
/// file names.
pub fn export(a: &ExportArgs) -> Result<Vec<String>> {
    let dir = &a.from;
    if !dir.join(REPORT).exists() {
        bail!("{} holds no {REPORT}", dir.display());
    }
    let out = a.out.clone().unwrap_or_else(|| dir.join("export"));
    std::fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    if dir.join(TRACE).exists() {
        loss_trace(&dir.join(TRACE), &out.join("loss_trace.csv"))?;
        written.push("loss_trace.csv".to_string());
    }
    if dir.join(CERTIFICATE).exists() && dir.join(CONFIG).exists() {
        certificate_grid(dir, &out.join("certificate_grid.csv"), a.resolution, a.axes)?;
        written.push("certificate_grid.csv".into());
    }
    if dir.join(TRAJECTORIES).exists() && out != *dir {
        std::fs::copy(dir.join(TRAJECTORIES), out.join(TRAJECTORIES))?;
        written.push(TRAJECTORIES.into());
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join(REPORT))?)?;
    if report["command"] == "scenario" {
        scenario_summary(&report, &out.join("scenario_summary.csv"))?;
        written.push("scenario_summary.csv".into());
    }
    Ok(written)
}

fn loss_trace(src: &Path, dst: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(dst)?;
    w.write_record([
        "stage", "epoch", "p", "loss", "nonneg", "init", "unsafe", "gen", "cells", "diam", "wall_s",
    ])?;
    let f = std::io::BufReader::new(std::fs::File::open(src)?);
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: TraceRow = serde_json::from_str(&line).with_context(|| format!("{} line {}", src.display(), i + 1))?;
        let mut row = vec![r.stage.to_string(), r.epoch.to_string(), r.p.to_string(), r.loss.to_string()];
        row.extend(r.per_kind.iter().map(f64::to_string));
        row.extend([r.cells.to_string(), r.diam.to_string(), r.wall_s.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `V` and its generator on a grid over two axes of the domain.
fn certificate_grid(dir: &Path, dst: &Path, res: usize, (a, b): (usize, usize)) -> Result<()> {
    let p = run::load_run(dir)?;
    let net = run::load_certificate(dir)?;
    let mut ctrl = p.controller.clone();
    if dir.join(run::CONTROLLER).exists() {
        ctrl = racert::generator::Controller::Net(racert::net::ControllerNet::load(&dir.join(run::CONTROLLER))?.0);
    }
    let gen = Generator::new(&p.dynamics, ctrl)?;
    let n = p.spec.dim();
    if a == 0 || b == 0 || a > n || b > n || (a == b && n > 1) {
        bail!("grid axes ({a}, {b}) do not fit a {n}-dimensional state");
    }
    if res < 2 {
        bail!("grid resolution must be at least 2");
    }
    let d = &p.spec.domain;
    let (lo, hi) = (d.lo(), d.hi());
    let centre: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let mut w = csv::Writer::from_path(dst)?;
    let (ia, ib) = (a - 1, b - 1);
    w.write_record([format!("x{a}"), format!("x{b}"), "v".into(), "generator".into()])?;
    let at = |i: usize, k: usize| lo[i] + (hi[i] - lo[i]) * k as f64 / (res - 1) as f64;
    for ka in 0..res {
        for kb in 0..res {
            let mut x = centre.clone();
            x[ia] = at(ia, ka);
            x[ib] = at(ib, kb);
            let v = net.forward(&x)?;
            let phi = gen.eval_f64(&net, &x).unwrap_or(f64::NAN);
            w.write_record([x[ia].to_string(), x[ib].to_string(), v.to_string(), phi.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn scenario_summary(report: &serde_json::Value, dst: &Path) -> Result<()> {
    let r = &report["result"];
    let mut w = csv::Writer::from_path(dst)?;
    w.write_record(["key", "value"])?;
    if let Some(m) = r.get("infeasible") {
        w.write_record(["infeasible", m.as_str().unwrap_or_default()])?;
    }
    for k in [
        "n_samples",
        "rows",
        "d_v",
        "pac_dim",
        "delta",
        "eps_closed_form",
        "eps_exact",
        "eps_gen",
        "beta",
        "p_certified",
        "min_slack",
        "lp_rounds",
        "lp_iterations",
        "active_rows",
    ] {
        if let Some(v) = r.get(k) {
            w.write_record([k, &v.to_string()])?;
        }
    }
    if let Some(h) = r.get("holdout").filter(|h| !h.is_null()) {
        w.write_record(["holdout_samples", &h["samples"].to_string()])?;
        w.write_record(["holdout_violations", &h["violations"].to_string()])?;
        w.write_record(["holdout_rate_hi", &h["ci"]["hi"].to_string()])?;
    }
    w.flush()?;
    Ok(())
}
