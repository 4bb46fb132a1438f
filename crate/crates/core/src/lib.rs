//! Neural reach-avoid certificates for controlled stochastic differential
//! equations.
//!
//! A certificate is a small network `V` that is non-negative on the domain,
//! at most one on the initial set, at least `β = 1/(1-p)` on the unsafe set,
//! and whose generator is negative away from the goal and unsafe sets. Two
//! routes establish these conditions: interval bound propagation over an
//! adaptively refined partition ([`hardsat`]), and a scenario linear program
//! over the last-layer weights with a PAC guarantee ([`scenario`]).

pub mod autodiff;
pub mod bounds;
pub mod dynexpr;
pub mod error;
pub mod generator;
pub mod hardsat;
pub mod interval;
pub mod ivl;
pub mod mcsim;
pub mod net;
pub mod partition;
pub mod problem;
pub mod region;
pub mod sampling;
pub mod scalar;
pub mod scenario;
pub mod stats;

pub use error::{Error, Result};
pub use interval::{Hyperbox, Interval};
pub use problem::ReachAvoidSpec;
pub use region::Region;
pub use scalar::Scalar;

/// Working precision.
pub type Real = f64;
pub type Interval64 = Interval<f64>;
pub type Interval32 = Interval<f32>;
pub type Box64 = Hyperbox<f64>;
pub type Box32 = Hyperbox<f32>;
