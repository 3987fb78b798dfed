//! Accelerated gossip averaging used between gradient steps.
//!
//! The two-term recursion `z^{t+1} = (1 + eta) W z^t - eta z^{t-1}` with
//! `z^0 = z^{-1}` damps every disagreement mode of a PSD mixing matrix at
//! modulus `sigma2 / (1 + sqrt(1 - sigma2^2))` per sweep; the mode sitting
//! exactly at `sigma2` is critically damped and additionally carries a
//! polynomial-in-t factor, which matters when bounding finite sweeps.

use crate::agents::AgentMatrix;
use crate::error::{Error, Result};
use crate::network::WeightMatrix;
use crate::trace::Counters;

/// Momentum weight for the accelerated averaging recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusParams {
    eta: f64,
    sigma2: f64,
}

impl ConsensusParams {
    /// `eta = (1 - sqrt(1 - sigma2^2)) / (1 + sqrt(1 - sigma2^2))`.
    pub fn new(w: &WeightMatrix) -> Self {
        Self::from_sigma2(w.sigma2())
    }

    pub fn from_sigma2(sigma2: f64) -> Self {
        debug_assert!((0.0..1.0).contains(&sigma2));
        let root = (1.0 - sigma2 * sigma2).sqrt();
        ConsensusParams {
            eta: (1.0 - root) / (1.0 + root),
            sigma2,
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Per-sweep damping modulus `sigma2 / (1 + sqrt(1 - sigma2^2))`.
    pub fn damping(&self) -> f64 {
        self.sigma2 / (1.0 + (1.0 - self.sigma2 * self.sigma2).sqrt())
    }
}

/// Runs `t` accelerated averaging sweeps from `z` and counts `t`
/// communications. `t = 0` returns `z` unchanged.
pub fn accelerated_consensus(
    w: &WeightMatrix,
    z: &AgentMatrix,
    t: usize,
    counters: &mut Counters,
) -> AgentMatrix {
    counters.communications += t as u64;
    if t == 0 {
        return z.clone();
    }
    let eta = ConsensusParams::new(w).eta();
    let mut prev = z.clone();
    let mut cur = z.clone();
    let mut next = AgentMatrix::zeros(z.nrows(), z.ncols());
    for _ in 0..t {
        // next = (1 + eta) W cur - eta prev
        next.copy_from(&prev);
        next.gemm(1.0 + eta, w.entries(), &cur, -eta);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Sweep count sufficient to push the penalty-weighted disagreement of `z`
/// below `eps`: `ceil(log(beta0 ||Pi z||^2 / (2 vartheta eps)) /
/// (-2 log(1 - sqrt(1 - sigma2))))`, clamped at zero. Callers that need
/// progress every iteration impose their own floor of one.
pub fn required_inner_iters(
    beta0: f64,
    vartheta: f64,
    eps: f64,
    pi_norm_sq: f64,
    sigma2: f64,
) -> Result<usize> {
    if !(0.0..1.0).contains(&sigma2) {
        return Err(Error::InvalidGap { sigma2 });
    }
    debug_assert!(beta0 > 0.0 && vartheta > 0.0 && eps > 0.0 && pi_norm_sq >= 0.0);
    let ratio = beta0 * pi_norm_sq / (2.0 * vartheta * eps);
    if ratio <= 1.0 {
        return Ok(0);
    }
    if sigma2 == 0.0 {
        // contraction factor is zero; a single exact average suffices, and
        // the log formula degenerates to 0 in the limit
        return Ok(0);
    }
    let denom = -2.0 * (1.0 - (1.0 - sigma2).sqrt()).ln();
    let t = (ratio.ln() / denom).ceil();
    Ok(t.max(0.0) as usize)
}
