//! Reverse-mode automatic differentiation and first-order optimisation.

mod arith;
mod optim;
mod params;
mod tape;

pub use arith::{Arith, Plain};
pub use optim::Adam;
pub use params::{ParamStore, ParamView};
pub use tape::{with_pooled_tape, Op, Tape, Var};
