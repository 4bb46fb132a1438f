//! Parameter checkpoints.
//!
//! Byte layout:
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | ASCII magic `RACKPT01`                    |
//! | 8      | 4    | header length `h`, u32 little-endian      |
//! | 12     | h    | UTF-8 JSON header                         |
//! | 12 + h | 8·k  | `k = n_params` parameters, f64 little-endian |
//!
//! The header carries `kind` (`"certificate"` or `"controller"`), `arch`,
//! `s_in`, `s_out` (certificates only), `benchmark`, `epoch` and
//! `n_params`. Parameters follow the network's flat layout.

use super::cert::{CertArch, CertificateNet};
use super::controller::{ControllerArch, ControllerNet};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"RACKPT01";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub arch: serde_json::Value,
    pub s_in: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_out: Option<f64>,
    pub benchmark: String,
    pub epoch: u64,
    pub n_params: usize,
}

fn ck(e: impl std::fmt::Display) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn encode(header: &Header, params: &[f64]) -> Result<Vec<u8>> {
    if header.n_params != params.len() {
        return Err(ck("parameter count does not match header"));
    }
    let h = serde_json::to_vec(header).map_err(ck)?;
    let mut out = Vec::with_capacity(12 + h.len() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(h.len() as u32).to_le_bytes());
    out.extend_from_slice(&h);
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(Header, Vec<f64>)> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(ck("bad magic"));
    }
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + h).ok_or_else(|| ck("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(ck)?;
    let rest = &bytes[12 + h..];
    if rest.len() != 8 * header.n_params {
        return Err(ck(format!(
            "expected {} parameter bytes, found {}",
            8 * header.n_params,
            rest.len()
        )));
    }
    let params = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, params))
}

pub fn write_file(path: &Path, header: &Header, params: &[f64]) -> Result<()> {
    let bytes = encode(header, params)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<(Header, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| ck(format!("{}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    decode(&bytes)
}

impl CertificateNet {
    pub fn header(&self, benchmark: &str, epoch: u64) -> Header {
        Header {
            kind: "certificate".into(),
            arch: serde_json::to_value(self.arch).unwrap(),
            s_in: self.s_in.clone(),
            s_out: Some(self.s_out),
            benchmark: benchmark.into(),
            epoch,
            n_params: self.params.len(),
        }
    }

    pub fn save(&self, path: &Path, benchmark: &str, epoch: u64) -> Result<()> {
        write_file(path, &self.header(benchmark, epoch), &self.params)
    }

    pub fn from_checkpoint(header: &Header, params: Vec<f64>) -> Result<Self> {
        if header.kind != "certificate" {
            return Err(ck(format!("expected a certificate, found {}", header.kind)));
        }
        let arch: CertArch = serde_json::from_value(header.arch.clone()).map_err(ck)?;
        let s_out = header.s_out.ok_or_else(|| ck("missing s_out"))?;
        let mut net = CertificateNet::zeros(arch, header.s_in.clone(), s_out)?;
        if params.len() != arch.n_params() {
            return Err(ck("parameter count does not match architecture"));
        }
        net.params = params;
        Ok(net)
    }

    pub fn load(path: &Path) -> Result<(Self, Header)> {
        let (h, p) = read_file(path)?;
        Ok((Self::from_checkpoint(&h, p)?, h))
    }
}

impl ControllerNet {
    pub fn header(&self, benchmark: &str, epoch: u64) -> Header {
        Header {
            kind: "controller".into(),
            arch: serde_json::to_value(&self.arch).unwrap(),
            s_in: self.s_in.clone(),
            s_out: None,
            benchmark: benchmark.into(),
            epoch,
            n_params: self.params.len(),
        }
    }

    pub fn save(&self, path: &Path, benchmark: &str, epoch: u64) -> Result<()> {
        write_file(path, &self.header(benchmark, epoch), &self.params)
    }

    pub fn from_checkpoint(header: &Header, params: Vec<f64>) -> Result<Self> {
        if header.kind != "controller" {
            return Err(ck(format!("expected a controller, found {}", header.kind)));
        }
        let arch: ControllerArch = serde_json::from_value(header.arch.clone()).map_err(ck)?;
        let mut net = ControllerNet::zeros(arch, header.s_in.clone())?;
        if params.len() != net.params.len() {
            return Err(ck("parameter count does not match architecture"));
        }
        net.params = params;
        Ok(net)
    }

    pub fn load(path: &Path) -> Result<(Self, Header)> {
        let (h, p) = read_file(path)?;
        Ok((Self::from_checkpoint(&h, p)?, h))
    }
}
