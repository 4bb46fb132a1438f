//! Sample-complexity bounds of the scenario program.

use crate::error::{Error, Result};
use crate::stats::ln_binomial_cdf;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacMethod {
    /// `ε = 2 (ln(1/δ) + d) / N`.
    ClosedForm,
    /// Solution of `Σ_{i<d} C(N,i) ε^i (1-ε)^(N-i) = δ`.
    Exact,
}

fn check(n: u64, d: u64, delta: f64) -> Result<()> {
    if d == 0 || n <= d {
        return Err(Error::OutOfRange(format!("need N > d >= 1, got N = {n}, d = {d}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::OutOfRange(format!("confidence parameter {delta} not in (0, 1)")));
    }
    Ok(())
}

pub fn pac_epsilon(n: u64, d: u64, delta: f64, method: PacMethod) -> Result<f64> {
    check(n, d, delta)?;
    let closed = 2.0 * ((1.0 / delta).ln() + d as f64) / n as f64;
    match method {
        PacMethod::ClosedForm => Ok(closed),
        PacMethod::Exact => {
            let ln_delta = delta.ln();
            // the tail decreases in ε; it is above δ at 0
            let (mut lo, mut hi) = (0.0f64, closed.min(1.0));
            while ln_binomial_cdf(n, d - 1, hi) > ln_delta {
                lo = hi;
                hi = (2.0 * hi).min(1.0);
                if hi == 1.0 {
                    break;
                }
            }
            while hi - lo > 1e-12 * hi.max(1e-300) && hi - lo > 1e-300 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if ln_binomial_cdf(n, d - 1, mid) > ln_delta {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(hi)
        }
    }
}
