//! Built-in benchmark systems and the configs shipped with the binary.

use crate::config::{Num, SystemConfig};
use anyhow::{anyhow, bail, Result};
use std::collections::BTreeMap;

const BUNDLED: &[(&str, &str)] = &[
    ("gbm2d-verify", include_str!("../configs/gbm2d-verify.toml")),
    ("gbm3d-verify", include_str!("../configs/gbm3d-verify.toml")),
    ("gbm4d-verify", include_str!("../configs/gbm4d-verify.toml")),
    ("gbm5d-verify", include_str!("../configs/gbm5d-verify.toml")),
    ("gbm10d-verify", include_str!("../configs/gbm10d-verify.toml")),
    ("gbm2d-scenario", include_str!("../configs/gbm2d-scenario.toml")),
    ("gbm10d-scenario", include_str!("../configs/gbm10d-scenario.toml")),
    ("gbm2d-noneq-synthesize", include_str!("../configs/gbm2d-noneq-synthesize.toml")),
    ("pendulum-synthesize", include_str!("../configs/pendulum-synthesize.toml")),
    ("lorenz-synthesize", include_str!("../configs/lorenz-synthesize.toml")),
    ("xv15-synthesize", include_str!("../configs/xv15-synthesize.toml")),
];

const FILES: &[(&str, &str)] = &[
    ("xv15_cl.csv", include_str!("../configs/tables/xv15_cl.csv")),
    ("xv15_cd.csv", include_str!("../configs/tables/xv15_cd.csv")),
];

pub fn bundled(name: &str) -> Option<(&'static str, &'static str)> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).copied()
}

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled_file(name: &str) -> Option<&'static str> {
    FILES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub const SYSTEMS: &[&str] = &["gbm", "pendulum", "lorenz", "xv15"];

struct Builtin {
    n: usize,
    m: usize,
    n_w: usize,
    drift: Vec<String>,
    diffusion: Vec<Vec<String>>,
    constants: Vec<(&'static str, &'static str)>,
    tables: Vec<(&'static str, &'static str)>,
}

/// `dx = (A x + u) dt + 0.2 diag(x) dw` with tridiagonal `A`.
fn gbm(n: usize) -> Builtin {
    let drift = (1..=n)
        .map(|i| {
            let mut s = format!("-0.5*x{i}");
            if i < n {
                s += &format!(" + x{}", i + 1);
            }
            if i > 1 {
                s += &format!(" - x{}", i - 1);
            }
            s + &format!(" + u{i}")
        })
        .collect();
    let diffusion = (1..=n)
        .map(|i| (1..=n).map(|j| if i == j { format!("0.2*x{i}") } else { "0".into() }).collect())
        .collect();
    Builtin {
        n,
        m: n,
        n_w: n,
        drift,
        diffusion,
        constants: vec![],
        tables: vec![],
    }
}

fn pendulum() -> Builtin {
    Builtin {
        n: 2,
        m: 1,
        n_w: 1,
        drift: vec!["x2".into(), "g/L*sin(x1) + (M*u1 - b*x2)/(mass*L^2)".into()],
        diffusion: vec![vec!["0".into()], vec!["sigma".into()]],
        constants: vec![("g", "9.81"), ("L", "0.5"), ("mass", "0.15"), ("b", "0.1"), ("M", "6"), ("sigma", "2")],
        tables: vec![],
    }
}

/// Lorenz flow with the control added to every component.
fn lorenz() -> Builtin {
    Builtin {
        n: 3,
        m: 3,
        n_w: 1,
        drift: vec![
            "-10*x1 + 10*x2 + u1".into(),
            "x1*(28 - x3) - x2 + u2".into(),
            "x1*x2 - 8/3*x3 + u3".into(),
        ],
        diffusion: vec![vec!["sigma".into()], vec!["sigma".into()], vec!["sigma".into()]],
        constants: vec![("sigma", "0.1")],
        tables: vec![],
    }
}

/// Longitudinal tilt-rotor model, state `(v, γ, β)`, input `(T, α, δ)`.
/// Lift and drag coefficients come from `(α, β)` tables.
fn xv15() -> Builtin {
    Builtin {
        n: 3,
        m: 3,
        n_w: 1,
        drift: vec![
            "-g*sin(x2) + (cos(u2 + x3)*u1 - 0.5*rho*S*x1^2*cd(u2, x3))/mass".into(),
            "-g*cos(x2)/x1 + (sin(u2 + x3)*u1/x1 + 0.5*rho*S*x1*cl(u2, x3))/mass".into(),
            "u3".into(),
        ],
        diffusion: vec![vec!["0.5".into()], vec!["0.1*pi/180".into()], vec!["0.1*pi/180".into()]],
        constants: vec![
            ("g", "9.81"),
            ("mass", "6000"),
            ("rho", "1.225"),
            ("S", "16.8"),
        ],
        tables: vec![("cl", "bundled:xv15_cl.csv"), ("cd", "bundled:xv15_cd.csv")],
    }
}

/// Replaces a registry reference by its inline definition. User constants
/// and tables override the defaults; the dimension is required for `gbm`
/// only.
pub fn fill_system(id: &str, sys: &mut SystemConfig) -> Result<()> {
    let b = match id {
        "gbm" => gbm(sys.dim.ok_or_else(|| anyhow!("system 'gbm' needs 'dim'"))?),
        "pendulum" => pendulum(),
        "lorenz" => lorenz(),
        "xv15" => xv15(),
        _ => bail!("unknown system '{id}' (known: {})", SYSTEMS.join(", ")),
    };
    if id != "gbm" && sys.dim.is_some_and(|d| d != b.n) {
        bail!("system '{id}' has dimension {}", b.n);
    }
    if !sys.drift.is_empty() || !sys.diffusion.is_empty() {
        bail!("system '{id}': give either an id or inline drift/diffusion, not both");
    }
    let mut constants: BTreeMap<String, Num> = b
        .constants
        .iter()
        .map(|(k, v)| Ok((k.to_string(), Num(Num::parse(v)?))))
        .collect::<Result<_>>()?;
    for (k, v) in std::mem::take(&mut sys.constants) {
        if !constants.contains_key(&k) {
            bail!("system '{id}' has no constant '{k}'");
        }
        constants.insert(k, v);
    }
    let mut tables: BTreeMap<String, String> = b.tables.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    for (k, v) in std::mem::take(&mut sys.tables) {
        if !tables.contains_key(&k) {
            bail!("system '{id}' has no table '{k}'");
        }
        tables.insert(k, v);
    }
    *sys = SystemConfig {
        id: None,
        dim: None,
        n: b.n,
        m: b.m,
        n_w: b.n_w,
        drift: b.drift,
        diffusion: b.diffusion,
        constants,
        tables,
    };
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gbm_drift_is_tridiagonal() {
        let b = gbm(3);
        assert_eq!(b.drift, ["-0.5*x1 + x2 + u1", "-0.5*x2 + x3 - x1 + u2", "-0.5*x3 - x2 + u3"]);
        assert_eq!(b.diffusion[1], ["0", "0.2*x2", "0"]);
    }

    #[test]
    fn overrides_must_name_known_constants() {
        let mut s = SystemConfig::default();
        s.constants.insert("sigma".into(), Num(1.0));
        fill_system("pendulum", &mut s).unwrap();
        assert_eq!(s.constants["sigma"], Num(1.0));
        assert_eq!(s.constants["g"], Num(9.81));
        let mut s = SystemConfig::default();
        s.constants.insert("nope".into(), Num(1.0));
        assert!(fill_system("lorenz", &mut s).is_err());
        assert!(fill_system("gbm", &mut SystemConfig::default()).is_err());
    }
}
