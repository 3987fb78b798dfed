//! Accelerated penalty method for nonsmooth objectives.
//!
//! The outer loop extrapolates with `theta_k = 1 / (k + 1)` and forms the
//! penalized gradient `s^k = grad f(y^k) + (beta0 / vartheta_k)(I - W) y^k`,
//! the only step that touches the network. The penalized subproblem is then
//! solved approximately by a communication-free sliding loop of cheap
//! proximal point steps on the nonsmooth part, and the next iterate is the
//! plain average of the inner points. Problems whose nonsmooth part has a
//! closed-form proximal mapping skip the sliding loop entirely.

use serde::{Deserialize, Serialize};

use crate::agents::AgentMatrix;
use crate::error::{Error, Result};
use crate::network::WeightMatrix;
use crate::problems::{
    hinge_subgradient, measure_radii, smooth_gradient, ProblemInstance, ProblemKind,
    ProxCapability,
};
use crate::trace::{Counters, RunTrace, TraceMeta, TraceRecorder};

/// Inner-loop sizing: a horizon-wide constant or a count that grows with k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApmMode {
    /// `T_k = ceil(K gap)` and `eta_k = theta_k / (K M sqrt(gap))`; tuned
    /// for a horizon fixed in advance.
    #[serde(alias = "thm3")]
    FixedHorizon,
    /// `T_k = ceil(gap / theta_k)` and `eta_k = theta_k^2 / (M sqrt(gap))`;
    /// horizon-free at a logarithmic cost.
    #[serde(alias = "cor1")]
    Adaptive,
}

impl ApmMode {
    /// Short trace label matching the CLI spelling.
    pub fn label(self) -> &'static str {
        match self {
            ApmMode::FixedHorizon => "thm3",
            ApmMode::Adaptive => "cor1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApmConfig {
    pub mode: ApmMode,
    pub beta0: f64,
    /// Multiplier on the theoretical step size `eta_k`; 1 keeps the theory
    /// value, larger values trade guarantees for speed.
    pub eta_scale: f64,
    pub horizon: usize,
    pub record_every: usize,
}

impl ApmConfig {
    pub fn new(mode: ApmMode, beta0: f64, horizon: usize) -> Self {
        ApmConfig {
            mode,
            beta0,
            eta_scale: 1.0,
            horizon,
            record_every: 1,
        }
    }

    /// `max(M, L) / sqrt(gap)`: the penalty seed that balances the two
    /// objective scales against the network.
    pub fn default_beta0(problem: &ProblemInstance, w: &WeightMatrix) -> f64 {
        problem.m_lipschitz().max(problem.l_smooth()) / w.gap().sqrt()
    }
}

/// Averaging weight of outer iteration `k`: exactly `1 / (k + 1)`.
pub fn theta(k: usize) -> f64 {
    1.0 / (k as f64 + 1.0)
}

/// `theta_k (1 - theta_prev) / theta_prev`, which collapses to
/// `(k - 1) / (k + 1)` for `theta_k = 1 / (k + 1)`.
fn extrapolation(k: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        (k as f64 - 1.0) / (k as f64 + 1.0)
    }
}

/// Ceiling with a relative snap: products of rounded inputs that land
/// within 1e-9 of an integer collapse to it instead of overshooting by one.
fn ceil_snapped(v: f64) -> usize {
    let r = v.round();
    let snapped = if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        v.ceil()
    };
    snapped.max(0.0) as usize
}

/// Constant inner count of the fixed-horizon mode: `ceil(K gap)`, floor 1.
pub fn fixed_inner_count(horizon: usize, gap: f64) -> usize {
    ceil_snapped(horizon as f64 * gap).max(1)
}

/// Growing inner count of the adaptive mode: `ceil(gap / theta_k)`, floor 1.
pub fn adaptive_inner_count(k: usize, gap: f64) -> usize {
    ceil_snapped((k as f64 + 1.0) * gap).max(1)
}

/// Subgradient of the nonsmooth part at stacked `z`; the zero function for
/// purely smooth problems. Always counts one subgradient evaluation so
/// inner-step accounting stays uniform.
fn composite_subgradient(
    problem: &ProblemInstance,
    z: &AgentMatrix,
    counters: &mut Counters,
) -> AgentMatrix {
    match &problem.kind {
        ProblemKind::Hinge(spec) => hinge_subgradient(spec, z, counters),
        ProblemKind::Smooth(_) => {
            counters.subgrad_evals += 1;
            AgentMatrix::zeros(z.nrows(), z.ncols())
        }
    }
}

/// `s = grad f(y) + pen (I - W) y`: one neighbor exchange, plus one
/// gradient evaluation when the smooth part is nonzero.
pub fn penalized_gradient(
    y: &AgentMatrix,
    problem: &ProblemInstance,
    w: &WeightMatrix,
    pen: f64,
    counters: &mut Counters,
) -> AgentMatrix {
    counters.communications += 1;
    let mut s = w.laplacian_apply(y);
    s *= pen;
    if let ProblemKind::Smooth(spec) = &problem.kind {
        s += smooth_gradient(spec, y, counters);
    }
    s
}

/// Closed-form minimizer of the sliding model
/// `<ghat(z) + s, v> + ((L + pen) / 2) ||v - y||^2 + (1 / (2 eta)) ||v - z||^2`:
/// `z+ = ((L + pen) y + z / eta - ghat(z) - s) / (L + pen + 1 / eta)`.
pub fn sliding_inner_step(
    z: &AgentMatrix,
    y: &AgentMatrix,
    s: &AgentMatrix,
    problem: &ProblemInstance,
    l: f64,
    pen: f64,
    eta: f64,
    counters: &mut Counters,
) -> AgentMatrix {
    debug_assert!(eta > 0.0 && pen > 0.0);
    let ghat = composite_subgradient(problem, z, counters);
    let denom = l + pen + 1.0 / eta;
    (y * (l + pen) + z * (1.0 / eta) - ghat - s) * (1.0 / denom)
}

/// Entrywise proximal mapping for the declared nonsmooth part at the given
/// scale: identity, soft threshold, or unavailable.
pub fn prox_map(v: AgentMatrix, capability: ProxCapability, scale: f64) -> Result<AgentMatrix> {
    match capability {
        ProxCapability::Identity => Ok(v),
        ProxCapability::L1 { lambda } => {
            let tau = lambda * scale;
            Ok(v.map(|a| {
                if a > tau {
                    a - tau
                } else if a < -tau {
                    a + tau
                } else {
                    0.0
                }
            }))
        }
        ProxCapability::None => Err(Error::NoCheapProx),
    }
}

/// One-shot outer update for problems with a cheap proximal mapping:
/// `x+ = prox_h( y - s / (L + pen) )` at scale `1 / (L + pen)`.
pub fn direct_prox_step(
    y: &AgentMatrix,
    problem: &ProblemInstance,
    w: &WeightMatrix,
    l: f64,
    pen: f64,
    counters: &mut Counters,
) -> Result<AgentMatrix> {
    let capability = problem.prox_capability();
    if capability == ProxCapability::None {
        return Err(Error::NoCheapProx);
    }
    let s = penalized_gradient(y, problem, w, pen, counters);
    let v = y - s * (1.0 / (l + pen));
    prox_map(v, capability, 1.0 / (l + pen))
}

fn validate(problem: &ProblemInstance, w: &WeightMatrix, x0: &AgentMatrix, cfg: &ApmConfig) -> Result<()> {
    if problem.m() != w.m() {
        return Err(Error::InvalidConfig {
            field: "network",
            message: format!("{} agents in problem, {} in network", problem.m(), w.m()),
        });
    }
    if x0.nrows() != problem.m() || x0.ncols() != problem.dim() {
        return Err(Error::InvalidConfig {
            field: "x0",
            message: format!(
                "start is {}x{}, want {}x{}",
                x0.nrows(),
                x0.ncols(),
                problem.m(),
                problem.dim()
            ),
        });
    }
    if !(cfg.beta0 > 0.0) {
        return Err(Error::InvalidConfig {
            field: "beta0",
            message: format!("penalty seed must be positive, got {}", cfg.beta0),
        });
    }
    if !(cfg.eta_scale > 0.0) {
        return Err(Error::InvalidConfig {
            field: "eta_scale",
            message: format!("step scale must be positive, got {}", cfg.eta_scale),
        });
    }
    if cfg.horizon == 0 {
        return Err(Error::InvalidConfig {
            field: "horizon",
            message: "need at least one iteration".into(),
        });
    }
    if problem.prox_capability() == ProxCapability::None && !(problem.m_lipschitz() > 0.0) {
        return Err(Error::InvalidConfig {
            field: "problem",
            message: "sliding needs a positive subgradient bound".into(),
        });
    }
    Ok(())
}

/// Runs `cfg.horizon` outer iterations from `x0`. Per outer iteration: one
/// communication, one gradient evaluation when the smooth part is nonzero,
/// and `T_k` subgradient evaluations on the sliding path (none on the prox
/// path). The sliding warm start carries across outer iterations.
pub fn run_apm(
    problem: &ProblemInstance,
    w: &WeightMatrix,
    x0: &AgentMatrix,
    cfg: &ApmConfig,
) -> Result<(RunTrace, AgentMatrix)> {
    validate(problem, w, x0, cfg)?;
    let l = problem.l_smooth();
    let m_lip = problem.m_lipschitz();
    let gap = w.gap();
    let sqrt_gap = gap.sqrt();
    let use_prox = problem.prox_capability() != ProxCapability::None;

    let mut counters = Counters::default();
    let mut recorder = TraceRecorder::new(cfg.record_every, cfg.horizon);

    let mut x_prev = x0.clone();
    let mut x_cur = x0.clone();
    let mut z_carry = x0.clone();

    for k in 0..cfg.horizon {
        let theta = theta(k);
        let coeff = extrapolation(k);
        let y = &x_cur * (1.0 + coeff) - &x_prev * coeff;
        let pen = cfg.beta0 / theta;

        let x_next = if use_prox {
            direct_prox_step(&y, problem, w, l, pen, &mut counters)?
        } else {
            let s = penalized_gradient(&y, problem, w, pen, &mut counters);
            let (t_k, eta) = match cfg.mode {
                ApmMode::FixedHorizon => (
                    fixed_inner_count(cfg.horizon, gap),
                    cfg.eta_scale * theta / (cfg.horizon as f64 * m_lip * sqrt_gap),
                ),
                ApmMode::Adaptive => (
                    adaptive_inner_count(k, gap),
                    cfg.eta_scale * theta * theta / (m_lip * sqrt_gap),
                ),
            };
            let mut acc = AgentMatrix::zeros(x0.nrows(), x0.ncols());
            for _ in 0..t_k {
                z_carry = sliding_inner_step(&z_carry, &y, &s, problem, l, pen, eta, &mut counters);
                acc += &z_carry;
            }
            acc * (1.0 / t_k as f64)
        };

        x_prev = x_cur;
        x_cur = x_next;
        recorder.record(k + 1, &x_cur, problem, &counters);
    }

    let (r1, r2) = measure_radii(problem, x0);
    let meta = TraceMeta {
        algorithm: "apm".into(),
        schedule: cfg.mode.label().into(),
        gap,
        l_smooth: l,
        mu: problem.mu(),
        m_lipschitz: m_lip,
        r1,
        r2,
        config: serde_json::to_value(cfg).ok(),
    };
    Ok((recorder.finish(meta), x_cur))
}
