//! Problem configuration files (TOML): parsing, overrides, validation and
//! the normalized dump.

use crate::registry;
use anyhow::{anyhow, bail, Context, Result};
use racert::dynexpr::{parse_expr, Dynamics, Symbols, Table2};
use racert::generator::Controller;
use racert::hardsat::HardSatConfig;
use racert::mcsim::EstimateConfig;
use racert::net::{CertArch, CertInit, CertificateNet, ControllerArch, ControllerNet, OutAct, OutChannel};
use racert::scenario::ScenarioConfig;
use racert::{Hyperbox, ReachAvoidSpec, Region};
use rand::SeedableRng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// A number written as a literal, a constant expression (`"3*pi/4"`), or
/// either followed by `deg`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Num(pub f64);

impl Num {
    pub fn parse(text: &str) -> Result<f64> {
        let t = text.trim();
        let (body, scale) = match t.strip_suffix("deg") {
            Some(b) => (b.trim(), std::f64::consts::PI / 180.0),
            None => (t, 1.0),
        };
        let e = parse_expr(body, &Symbols::new(0, 0)).map_err(|e| anyhow!("bad number '{text}': {e}"))?;
        let v = e.const_value().ok_or_else(|| anyhow!("'{text}' is not a constant"))? * scale;
        if !v.is_finite() {
            bail!("'{text}' is not finite");
        }
        Ok(v)
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            I(i64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(v) => Ok(Num(v)),
            Raw::I(v) => Ok(Num(v as f64)),
            Raw::S(s) => Num::parse(&s).map(Num).map_err(serde::de::Error::custom),
        }
    }
}

pub type BoxSpec = Vec<[Num; 2]>;

/// One box or a list of boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Boxes {
    One(BoxSpec),
    Many(Vec<BoxSpec>),
}

impl Boxes {
    fn list(&self) -> Vec<BoxSpec> {
        match self {
            Boxes::One(b) => vec![b.clone()],
            Boxes::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Registry system (`gbm`, `pendulum`, `lorenz`, `xv15`); otherwise the
    /// dynamics are given inline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default)]
    pub n: usize,
    /// Number of control inputs.
    #[serde(default)]
    pub m: usize,
    #[serde(default)]
    pub n_w: usize,
    #[serde(default)]
    pub drift: Vec<String>,
    #[serde(default)]
    pub diffusion: Vec<Vec<String>>,
    #[serde(default)]
    pub constants: BTreeMap<String, Num>,
    /// Table name to a CSV file of `x, y, value` rows.
    #[serde(default)]
    pub tables: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionsConfig {
    pub domain: BoxSpec,
    pub init: Boxes,
    pub goal: Boxes,
    /// Safe set as a union of boxes inside the domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safe: Option<Boxes>,
    /// Safe set as the domain interior minus these boxes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstacles: Option<Boxes>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertConfig {
    pub m1: usize,
    pub m2: usize,
    /// Input scaling; defaults to the largest absolute domain bound per axis.
    pub s_in: Option<Vec<f64>>,
    pub s_out: f64,
    pub bias: bool,
    pub init: CertInit,
    /// Start from these weights instead of a random draw.
    pub checkpoint: Option<String>,
}

impl Default for CertConfig {
    fn default() -> Self {
        Self {
            m1: 64,
            m2: 64,
            s_in: None,
            s_out: 10.0,
            bias: true,
            init: CertInit::default(),
            checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub act: OutAct,
    /// Saturation range for tanh and sigmoid outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[Num; 2]>,
    /// Gain of a linear output.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControllerConfig {
    #[default]
    None,
    /// `u_j = expr_j(x)`.
    Expression { u: Vec<String> },
    /// Frozen controller network from a checkpoint.
    Checkpoint { path: String },
    /// Trainable tanh network.
    Network {
        hidden: Vec<usize>,
        outputs: Vec<OutputConfig>,
        #[serde(default = "one")]
        gain: f64,
        #[serde(default)]
        s_in: Option<Vec<f64>>,
        #[serde(default)]
        checkpoint: Option<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    /// Uniform samples of the dense pointwise check after SAT; 0 skips it.
    pub samples: usize,
    /// Extra samples on zero-volume unsafe faces.
    pub face_samples: usize,
    pub tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            face_samples: 10_000,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    #[serde(flatten)]
    pub estimate: EstimateConfig,
    /// Rollouts written to the trajectory export.
    pub trajectories: usize,
    pub stride: usize,
    /// Keys nobody claimed; flattening defeats `deny_unknown_fields`.
    #[serde(flatten, skip_serializing)]
    pub unknown: BTreeMap<String, toml::Value>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            estimate: EstimateConfig::default(),
            trajectories: 5,
            stride: 10,
            unknown: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub p_ra: f64,
    pub system: SystemConfig,
    pub regions: RegionsConfig,
    #[serde(default)]
    pub certificate: CertConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub hardsat: HardSatConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

/// A loaded, validated problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub config: ProblemConfig,
    pub spec: ReachAvoidSpec,
    /// Open-loop dynamics.
    pub dynamics: Dynamics,
    pub controller: Controller,
    /// Hex SHA-256 of the normalized dump.
    pub hash: String,
}

/// Where a config came from, for resolving relative paths.
#[derive(Clone, Debug)]
pub enum Source {
    Bundled(&'static str),
    File(PathBuf),
}

/// Sets `a.b.c = value` in a TOML tree; the value is parsed as TOML and
/// falls back to a string.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override '{assignment}' is not KEY=VALUE"))?;
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key '{key}' has an empty segment");
    }
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        let t = cur
            .as_table_mut()
            .ok_or_else(|| anyhow!("override '{key}': '{p}' is not inside a table"))?;
        cur = t.entry(p.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
    }
    cur.as_table_mut()
        .ok_or_else(|| anyhow!("override '{key}' does not address a table entry"))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Reads a bundled config by name, or a file.
pub fn read_source(name_or_path: &str) -> Result<(String, Source)> {
    if let Some((name, text)) = registry::bundled(name_or_path) {
        return Ok((text.to_string(), Source::Bundled(name)));
    }
    let path = PathBuf::from(name_or_path);
    let text = std::fs::read_to_string(&path).with_context(|| {
        format!(
            "cannot read config '{name_or_path}' (bundled configs: {})",
            registry::bundled_names().join(", ")
        )
    })?;
    Ok((text, Source::File(path)))
}

pub fn parse(text: &str, overrides: &[String]) -> Result<ProblemConfig> {
    let mut tree: toml::Value = toml::from_str(text).context("config is not valid TOML")?;
    for o in overrides {
        apply_override(&mut tree, o)?;
    }
    let normal = toml::to_string(&tree)?;
    let cfg: ProblemConfig = toml::from_str(&normal).map_err(|e| anyhow!("invalid config: {e}"))?;
    Ok(cfg)
}

fn resolve(src: &Source, p: &str) -> String {
    match src {
        Source::File(f) => {
            let q = Path::new(p);
            if q.is_absolute() || p.starts_with("bundled:") {
                p.to_string()
            } else {
                let base = f.parent().unwrap_or(Path::new("."));
                base.join(q).to_string_lossy().into_owned()
            }
        }
        Source::Bundled(_) => {
            if Path::new(p).is_absolute() || p.starts_with("bundled:") {
                p.to_string()
            } else {
                format!("bundled:{p}")
            }
        }
    }
}

fn read_text(path: &str) -> Result<String> {
    if let Some(name) = path.strip_prefix("bundled:") {
        return registry::bundled_file(name)
            .map(str::to_string)
            .ok_or_else(|| anyhow!("no bundled file '{name}'"));
    }
    std::fs::read_to_string(path).with_context(|| format!("cannot read '{path}'"))
}

fn hyperbox(b: &BoxSpec, what: &str) -> Result<Hyperbox> {
    let pairs: Vec<(f64, f64)> = b.iter().map(|[l, h]| (l.0, h.0)).collect();
    Hyperbox::from_bounds(&pairs).map_err(|e| anyhow!("regions.{what}: {e}"))
}

fn region(b: &Boxes, what: &str) -> Result<Region> {
    let boxes = b
        .list()
        .iter()
        .map(|x| hyperbox(x, what))
        .collect::<Result<Vec<_>>>()?;
    if boxes.len() == 1 {
        Ok(Region::from_box(boxes.into_iter().next().unwrap()))
    } else {
        Region::union(boxes).map_err(|e| anyhow!("regions.{what}: {e}"))
    }
}

impl ProblemConfig {
    /// Resolves registry systems and relative paths, filling every default.
    pub fn normalize(mut self, src: &Source) -> Result<Self> {
        if let Some(id) = self.system.id.clone() {
            registry::fill_system(&id, &mut self.system)?;
        }
        for v in self.system.tables.values_mut() {
            *v = resolve(src, v);
        }
        if let Some(c) = &mut self.certificate.checkpoint {
            *c = resolve(src, c);
        }
        match &mut self.controller {
            ControllerConfig::Checkpoint { path } => *path = resolve(src, path),
            ControllerConfig::Network { checkpoint: Some(c), .. } => *c = resolve(src, c),
            _ => {}
        }
        if self.certificate.s_in.is_none() {
            self.certificate.s_in = Some(self.regions.domain.iter().map(|[l, h]| l.0.abs().max(h.0.abs())).collect());
        }
        if let ControllerConfig::Network { s_in: s @ None, .. } = &mut self.controller {
            *s = Some(self.regions.domain.iter().map(|[l, h]| l.0.abs().max(h.0.abs())).collect());
        }
        Ok(self)
    }

    pub fn dump(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn hash(&self) -> Result<String> {
        let d = Sha256::digest(self.dump()?.as_bytes());
        Ok(d.iter().map(|b| format!("{b:02x}")).collect())
    }

    fn dynamics(&self) -> Result<Dynamics> {
        let s = &self.system;
        let mut tables = BTreeMap::new();
        for (name, path) in &s.tables {
            let t = Table2::from_csv(&read_text(path)?).with_context(|| format!("table '{name}'"))?;
            tables.insert(name.clone(), Arc::new(t));
        }
        let drift: Vec<&str> = s.drift.iter().map(String::as_str).collect();
        let diffusion: Vec<Vec<&str>> = s.diffusion.iter().map(|r| r.iter().map(String::as_str).collect()).collect();
        let constants = s.constants.iter().map(|(k, v)| (k.clone(), v.0)).collect();
        Dynamics::parse(s.n, s.m, s.n_w, &drift, &diffusion, constants, tables).map_err(|e| anyhow!("system: {e}"))
    }

    fn build_controller(&self, dynamics: &Dynamics) -> Result<Controller> {
        Ok(match &self.controller {
            ControllerConfig::None => Controller::None,
            ControllerConfig::Expression { u } => {
                let sym = Symbols::new(self.system.n, 0).with_constants(self.system.constants.keys().cloned());
                let exprs = u
                    .iter()
                    .map(|e| {
                        let x = parse_expr(e, &sym).map_err(|err| anyhow!("controller expression '{e}': {err}"))?;
                        Ok(x.bind(&dynamics.constants, &BTreeMap::new())?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Controller::Expressions(exprs)
            }
            ControllerConfig::Checkpoint { path } => {
                let (net, _) = ControllerNet::load(Path::new(&read_path(path)?)).with_context(|| format!("controller checkpoint '{path}'"))?;
                Controller::Net(net)
            }
            ControllerConfig::Network {
                hidden,
                outputs,
                gain,
                s_in,
                checkpoint,
            } => {
                if let Some(c) = checkpoint {
                    let (net, _) = ControllerNet::load(Path::new(&read_path(c)?)).with_context(|| format!("controller checkpoint '{c}'"))?;
                    Controller::Net(net)
                } else {
                    let outs = outputs
                        .iter()
                        .map(|o| match (o.act, o.range) {
                            (OutAct::Linear, None) => Ok(OutChannel {
                                scale: o.scale,
                                ..OutChannel::linear()
                            }),
                            (OutAct::Linear, Some(_)) => bail!("controller: linear outputs take a scale, not a range"),
                            (a, Some([lo, hi])) => Ok(OutChannel::ranged(a, lo.0, hi.0)?),
                            (_, None) => bail!("controller: tanh and sigmoid outputs need a range"),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let arch = ControllerArch {
                        n: self.system.n,
                        hidden: hidden.clone(),
                        outputs: outs,
                    };
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed ^ 0xc0de);
                    let s = s_in.clone().expect("normalized");
                    Controller::Net(ControllerNet::init(arch, s, *gain, &mut rng)?)
                }
            }
        })
    }

    pub fn validate(self, src_hash: Option<String>) -> Result<Problem> {
        if !(self.p_ra > 0.0 && self.p_ra < 1.0) {
            bail!("p_ra must lie in (0, 1), got {}", self.p_ra);
        }
        let n = self.system.n;
        let r = &self.regions;
        if r.domain.len() != n {
            bail!("regions.domain has {} axes, the system {}", r.domain.len(), n);
        }
        let domain = hyperbox(&r.domain, "domain")?;
        let safe = match (&r.safe, &r.obstacles) {
            (Some(s), None) => region(s, "safe")?,
            (None, Some(o)) => {
                let holes = o.list().iter().map(|b| hyperbox(b, "obstacles")).collect::<Result<Vec<_>>>()?;
                Region::difference(domain.clone(), holes).map_err(|e| anyhow!("regions.obstacles: {e}"))?
            }
            _ => bail!("regions: give exactly one of 'safe' and 'obstacles'"),
        };
        let spec = ReachAvoidSpec::new(domain, region(&r.init, "init")?, region(&r.goal, "goal")?, safe, self.p_ra)
            .map_err(|e| anyhow!("regions: {e}"))?;
        let dynamics = self.dynamics()?;
        let controller = self.build_controller(&dynamics)?;
        let c = &self.certificate;
        if c.s_in.as_ref().is_some_and(|s| s.len() != n) {
            bail!("certificate.s_in needs {n} entries");
        }
        CertArch::new(n, c.m1, c.m2, c.bias).map_err(|e| anyhow!("certificate: {e}"))?;
        if let Some(p) = &c.checkpoint {
            std::fs::metadata(read_path(p)?).with_context(|| format!("certificate checkpoint '{p}'"))?;
        }
        self.hardsat.validate().map_err(|e| anyhow!("hardsat: {e}"))?;
        if let Some(k) = self.simulate.unknown.keys().next() {
            bail!("simulate: unknown field `{k}`");
        }
        self.simulate.estimate.rollout.validate().map_err(|e| anyhow!("simulate: {e}"))?;
        let hash = match src_hash {
            Some(h) => h,
            None => self.hash()?,
        };
        Ok(Problem {
            config: self,
            spec,
            dynamics,
            controller,
            hash,
        })
    }

    /// Initial certificate: the checkpoint, or a seeded random draw.
    pub fn certificate(&self) -> Result<CertificateNet> {
        let c = &self.certificate;
        if let Some(p) = &c.checkpoint {
            let (net, _) = CertificateNet::load(Path::new(&read_path(p)?))?;
            return Ok(net);
        }
        let arch = CertArch::new(self.system.n, c.m1, c.m2, c.bias)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        Ok(CertificateNet::init(arch, c.s_in.clone().expect("normalized"), c.s_out, c.init, &mut rng)?)
    }
}

fn read_path(p: &str) -> Result<String> {
    if p.starts_with("bundled:") {
        bail!("checkpoints cannot be bundled: '{p}'");
    }
    Ok(p.to_string())
}

/// Reads, overrides, normalizes and validates a config.
pub fn load(name_or_path: &str, overrides: &[String]) -> Result<Problem> {
    let (text, src) = read_source(name_or_path)?;
    let cfg = parse(&text, overrides)?.normalize(&src)?;
    cfg.validate(None)
}

/// Loads a normalized dump, as written next to every report.
pub fn load_text(text: &str, src: &Source) -> Result<Problem> {
    parse(text, &[])?.normalize(src)?.validate(None)
}
