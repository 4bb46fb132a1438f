//! Certificate and controller networks.

mod cert;
pub mod checkpoint;
mod controller;

pub use cert::{derivatives, forward, hidden, CertArch, CertInit, CertView, CertificateNet, Derivs, Hidden};
pub use controller::{ControllerArch, ControllerNet, OutAct, OutChannel};

pub mod control {
    pub use super::controller::{forward, forward_iv};
}
