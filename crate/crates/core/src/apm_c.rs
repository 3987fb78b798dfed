//! Accelerated penalty descent with nested averaging sweeps.
//!
//! Each outer iteration extrapolates, takes one gradient step on the smooth
//! objective, runs a batch of accelerated averaging sweeps on the result,
//! and combines the pre- and post-averaging points with weights `L vartheta`
//! and `beta0`. Multiplying both weights by `1 / vartheta` shows the
//! combination is a proximal step toward consensus under an effective
//! penalty `beta0 / vartheta` that grows as `vartheta` shrinks, which is
//! what drives the consensus error down without ever materializing a
//! penalty matrix.

use serde::{Deserialize, Serialize};

use crate::agents::{disagreement_norm_sq, AgentMatrix};
use crate::consensus::{accelerated_consensus, required_inner_iters};
use crate::error::{Error, Result};
use crate::network::WeightMatrix;
use crate::problems::{measure_radii, smooth_gradient, ProblemInstance};
use crate::trace::{Counters, RunTrace, TraceMeta, TraceRecorder};

/// Momentum schedule family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApmcSchedule {
    /// Constant `theta = sqrt(mu / L)`; requires `mu > 0`.
    #[serde(alias = "sc")]
    StronglyConvex,
    /// `theta_0 = 1` with `(1 - theta_k) / theta_k^2 = 1 / theta_{k-1}^2`.
    #[serde(alias = "nsc")]
    Convex,
}

impl ApmcSchedule {
    /// Short trace label matching the CLI spelling.
    pub fn label(self) -> &'static str {
        match self {
            ApmcSchedule::StronglyConvex => "sc",
            ApmcSchedule::Convex => "nsc",
        }
    }
}

/// How many averaging sweeps each outer iteration runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerRule {
    /// Practical growth: `ceil(k theta / (divisor sqrt(gap)))` when strongly
    /// convex, `ceil(ln(k + 1) / (divisor sqrt(gap)))` otherwise, floor 1.
    Tuned { divisor: f64 },
    /// Error-budget driven: enough sweeps to push the penalty-weighted
    /// disagreement below a per-iteration tolerance that shrinks at the
    /// outer rate. No floor; zero sweeps are allowed.
    Theory { slack: f64 },
}

impl InnerRule {
    pub fn tuned_default(schedule: ApmcSchedule) -> Self {
        match schedule {
            ApmcSchedule::StronglyConvex => InnerRule::Tuned { divisor: 3.0 },
            ApmcSchedule::Convex => InnerRule::Tuned { divisor: 5.0 },
        }
    }

    pub fn theory_default() -> Self {
        InnerRule::Theory { slack: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApmcConfig {
    pub schedule: ApmcSchedule,
    pub inner: InnerRule,
    pub beta0: f64,
    pub horizon: usize,
    pub record_every: usize,
}

impl ApmcConfig {
    pub fn new(schedule: ApmcSchedule, beta0: f64, horizon: usize) -> Self {
        ApmcConfig {
            schedule,
            inner: InnerRule::tuned_default(schedule),
            beta0,
            horizon,
            record_every: 1,
        }
    }
}

/// Next momentum parameter for the non-strongly-convex schedule: the
/// positive root of `theta^2 = (1 - theta) prev^2`.
pub fn next_theta_nsc(prev: f64) -> f64 {
    0.5 * prev * ((prev * prev + 4.0).sqrt() - prev)
}

/// `((L theta_k - mu) / (L - mu)) ((1 - theta_prev) / theta_prev)`; zero
/// when `L = mu`, where extrapolation has nothing to add.
fn extrapolation_coeff(l: f64, mu: f64, theta_k: f64, theta_prev: f64) -> f64 {
    if l - mu <= f64::EPSILON * l {
        return 0.0;
    }
    ((l * theta_k - mu) / (l - mu)) * ((1.0 - theta_prev) / theta_prev)
}

fn validate(problem: &ProblemInstance, w: &WeightMatrix, x0: &AgentMatrix, cfg: &ApmcConfig) -> Result<()> {
    if !problem.is_smooth() {
        return Err(Error::InvalidConfig {
            field: "algorithm",
            message: "this method requires a smooth objective with gradients".into(),
        });
    }
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
    if cfg.horizon == 0 {
        return Err(Error::InvalidConfig {
            field: "horizon",
            message: "need at least one iteration".into(),
        });
    }
    match cfg.inner {
        InnerRule::Tuned { divisor } => {
            if !(divisor > 0.0) {
                return Err(Error::InvalidConfig {
                    field: "inner.divisor",
                    message: format!("divisor must be positive, got {divisor}"),
                });
            }
        }
        InnerRule::Theory { slack } => {
            if !(slack > 0.0) {
                return Err(Error::InvalidConfig {
                    field: "inner.slack",
                    message: format!("slack must be positive, got {slack}"),
                });
            }
        }
    }
    if cfg.schedule == ApmcSchedule::StronglyConvex && !(problem.mu() > 0.0) {
        return Err(Error::InvalidConfig {
            field: "schedule",
            message: "strongly convex schedule needs mu > 0".into(),
        });
    }
    Ok(())
}

/// Runs the method for `cfg.horizon` outer iterations from `x0` and returns
/// the trace plus the final stacked iterate. Each outer iteration costs one
/// gradient evaluation and `T_k` communications.
pub fn run_apm_c(
    problem: &ProblemInstance,
    w: &WeightMatrix,
    x0: &AgentMatrix,
    cfg: &ApmcConfig,
) -> Result<(RunTrace, AgentMatrix)> {
    validate(problem, w, x0, cfg)?;
    let spec = problem.smooth().expect("validated smooth");
    let l = spec.l_smooth;
    let mu = spec.mu;
    let gap = w.gap();
    let sigma2 = w.sigma2();
    let sqrt_gap = gap.sqrt();

    let theta_sc = (mu / l).sqrt();
    if let (ApmcSchedule::StronglyConvex, InnerRule::Theory { slack }) = (cfg.schedule, cfg.inner) {
        if (1.0 + slack) * theta_sc >= 1.0 {
            return Err(Error::InvalidConfig {
                field: "inner.slack",
                message: format!(
                    "(1 + {slack}) sqrt(mu / L) = {} leaves no shrinking tolerance",
                    (1.0 + slack) * theta_sc
                ),
            });
        }
    }

    if cfg.schedule == ApmcSchedule::Convex {
        // the convex-schedule guarantee wants beta0 >= L ||grad f(x*)||_F^2;
        // x* is unknown to the algorithm, so this is advisory only
        let grad_star_sq: f64 = spec
            .agents
            .iter()
            .map(|d| {
                let r = d.a.transpose() * &problem.reference.x_star - &d.b;
                (&d.a * r + mu * &problem.reference.x_star).norm_squared()
            })
            .sum();
        if cfg.beta0 < l * grad_star_sq {
            log::warn!(
                "beta0 = {} is below L ||grad f(x*)||_F^2 = {:.3e}; the convex-schedule rate guarantee may not apply",
                cfg.beta0,
                l * grad_star_sq
            );
        }
    }

    let mut counters = Counters::default();
    let mut recorder = TraceRecorder::new(cfg.record_every, cfg.horizon);

    let mut x_prev = x0.clone();
    let mut x_cur = x0.clone();
    // theta_prev seeds the k = 0 extrapolation; 1 makes it vanish alongside
    // x_cur - x_prev = 0
    let mut theta_prev = 1.0;
    let mut theta_cur = match cfg.schedule {
        ApmcSchedule::StronglyConvex => theta_sc,
        ApmcSchedule::Convex => 1.0,
    };
    // running products for (1 - theta)^{k+1} and the theory tolerance
    let mut vartheta_sc = 1.0;
    let mut eps_sc = 1.0;

    for k in 0..cfg.horizon {
        let coeff = extrapolation_coeff(l, mu, theta_cur, theta_prev);
        let y = &x_cur * (1.0 + coeff) - &x_prev * coeff;
        let g = smooth_gradient(spec, &y, &mut counters);
        let z = y - g * (1.0 / l);

        let vartheta = match cfg.schedule {
            ApmcSchedule::StronglyConvex => {
                vartheta_sc *= 1.0 - theta_sc;
                vartheta_sc
            }
            ApmcSchedule::Convex => theta_cur * theta_cur,
        };

        // a single agent has nothing to average with; consensus is forced off
        let t_k = if w.m() == 1 {
            0
        } else {
            match cfg.inner {
                InnerRule::Tuned { divisor } => {
                    let raw = match cfg.schedule {
                        ApmcSchedule::StronglyConvex => (k as f64) * theta_sc / (divisor * sqrt_gap),
                        ApmcSchedule::Convex => ((k + 1) as f64).ln() / (divisor * sqrt_gap),
                    };
                    (raw.ceil() as usize).max(1)
                }
                InnerRule::Theory { slack } => {
                    let eps = match cfg.schedule {
                        ApmcSchedule::StronglyConvex => {
                            eps_sc *= 1.0 - (1.0 + slack) * theta_sc;
                            eps_sc
                        }
                        ApmcSchedule::Convex => 1.0 / ((k + 1) as f64).powi(6),
                    };
                    required_inner_iters(cfg.beta0, vartheta, eps, disagreement_norm_sq(&z), sigma2)?
                }
            }
        };

        let z_t = accelerated_consensus(w, &z, t_k, &mut counters);

        // x_next = (L vartheta z + beta0 z_t) / (L vartheta + beta0)
        let denom = l * vartheta + cfg.beta0;
        let x_next = z * (l * vartheta / denom) + z_t * (cfg.beta0 / denom);

        theta_prev = theta_cur;
        if cfg.schedule == ApmcSchedule::Convex {
            theta_cur = next_theta_nsc(theta_cur);
        }
        x_prev = x_cur;
        x_cur = x_next;
        recorder.record(k + 1, &x_cur, problem, &counters);
    }

    let (r1, r2) = measure_radii(problem, x0);
    let meta = TraceMeta {
        algorithm: "apm-c".into(),
        schedule: cfg.schedule.label().into(),
        gap,
        l_smooth: l,
        mu,
        m_lipschitz: 0.0,
        r1,
        r2,
        config: serde_json::to_value(cfg).ok(),
    };
    Ok((recorder.finish(meta), x_cur))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;
    use crate::problems::{gen_hinge_svm, gen_least_squares};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn desk() -> (ProblemInstance, WeightMatrix) {
        let p = gen_least_squares(40, 6, 4, 1e-2, 7).unwrap();
        let net = Network::new(4, vec![(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let w = WeightMatrix::lazy_metropolis(&net).unwrap();
        (p, w)
    }

    #[test]
    fn nsc_theta_recurrence_and_bounds_hold() {
        let mut theta = 1.0f64;
        for k in 0..2000 {
            let lo = 1.0 / (k as f64 + 1.0);
            let hi = 2.0 / (k as f64 + 2.0);
            assert!(theta >= lo - 1e-12 && theta <= hi + 1e-12, "k = {k}: {theta}");
            let next = next_theta_nsc(theta);
            // defining identity: (1 - next) / next^2 = 1 / theta^2
            let residual = (1.0 - next) / (next * next) - 1.0 / (theta * theta);
            assert!(residual.abs() < 1e-9 * (1.0 / (theta * theta)), "k = {k}");
            theta = next;
        }
    }

    #[test]
    fn sc_extrapolation_matches_closed_form() {
        let (l, mu) = (7.5f64, 0.03f64);
        let theta = (mu / l).sqrt();
        let got = extrapolation_coeff(l, mu, theta, theta);
        let want = (l.sqrt() - mu.sqrt()) / (l.sqrt() + mu.sqrt());
        assert_abs_diff_eq!(got, want, epsilon = 1e-14);
        assert_eq!(extrapolation_coeff(3.0, 3.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn single_agent_reduces_to_accelerated_descent() {
        let p = gen_least_squares(10, 5, 1, 5e-2, 21).unwrap();
        let net = Network::new(1, vec![]).unwrap();
        let w = WeightMatrix::lazy_metropolis(&net).unwrap();
        let x0 = AgentMatrix::zeros(1, 5);
        let cfg = ApmcConfig::new(ApmcSchedule::StronglyConvex, 1.0, 60);
        let (trace, x_final) = run_apm_c(&p, &w, &x0, &cfg).unwrap();

        // hand-rolled single-agent accelerated gradient descent
        let s = p.smooth().unwrap();
        let l = s.l_smooth;
        let mu = s.mu;
        let coeff = (l.sqrt() - mu.sqrt()) / (l.sqrt() + mu.sqrt());
        let mut xp = DVector::<f64>::zeros(5);
        let mut xc = DVector::<f64>::zeros(5);
        for _ in 0..60 {
            let y = &xc + (&xc - &xp) * coeff;
            let r = s.agents[0].a.transpose() * &y - &s.agents[0].b;
            let g = &s.agents[0].a * r + mu * &y;
            let xn = y - g / l;
            xp = xc;
            xc = xn;
        }
        for j in 0..5 {
            assert_abs_diff_eq!(x_final[(0, j)], xc[j], epsilon = 1e-12);
        }
        assert_eq!(trace.rows.last().unwrap().grad_evals, 60);
        assert_eq!(trace.rows.last().unwrap().subgrad_evals, 0);
        // single agent: consensus is forced off entirely
        assert_eq!(trace.rows.last().unwrap().comms, 0);
    }

    #[test]
    fn best_so_far_gap_decays_from_consensus_start_at_reference() {
        // start every agent at x*: the first gradient step leaves consensus,
        // but the best-so-far objective envelope must still decay
        let (p, w) = desk();
        let x0 = crate::agents::consensus_rows(&p.reference.x_star, 4);
        let cfg = ApmcConfig::new(ApmcSchedule::StronglyConvex, 1.0, 80);
        let (trace, _) = run_apm_c(&p, &w, &x0, &cfg).unwrap();
        let mut best = f64::INFINITY;
        let mut bests = Vec::new();
        for row in &trace.rows {
            best = best.min(row.obj_gap);
            bests.push(best);
        }
        for pair in bests.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        assert!(bests.last().unwrap().abs() < 1e-8);
    }

    #[test]
    fn counters_match_inner_schedule() {
        let (p, w) = desk();
        let x0 = AgentMatrix::zeros(4, 6);
        let divisor = 3.0;
        let cfg = ApmcConfig {
            schedule: ApmcSchedule::StronglyConvex,
            inner: InnerRule::Tuned { divisor },
            beta0: 1.0,
            horizon: 25,
            record_every: 1,
        };
        let (trace, _) = run_apm_c(&p, &w, &x0, &cfg).unwrap();
        let theta = (p.mu() / p.l_smooth()).sqrt();
        let mut expect_comms = 0u64;
        for k in 0..25u64 {
            let raw = k as f64 * theta / (divisor * w.gap().sqrt());
            expect_comms += (raw.ceil() as u64).max(1);
        }
        let last = trace.rows.last().unwrap();
        assert_eq!(last.grad_evals, 25);
        assert_eq!(last.comms, expect_comms);
        assert_eq!(trace.rows.len(), 25);
        assert_eq!(trace.rows[0].k, 1);
    }

    #[test]
    fn desk_run_converges_in_both_metrics() {
        let (p, w) = desk();
        let x0 = AgentMatrix::from_fn(4, 6, |i, j| ((i * 7 + j) as f64).sin());
        let cfg = ApmcConfig::new(ApmcSchedule::StronglyConvex, 1.0, 300);
        let (trace, _) = run_apm_c(&p, &w, &x0, &cfg).unwrap();
        let first = &trace.rows[0];
        let last = trace.rows.last().unwrap();
        assert!(last.obj_gap.abs() < 1e-8, "obj gap {}", last.obj_gap);
        assert!(last.obj_gap.abs() < first.obj_gap.abs());
        assert!(last.consensus_violation < 1e-10, "violation {}", last.consensus_violation);
    }

    #[test]
    fn nsc_schedule_converges_on_desk_instance() {
        let (p, w) = desk();
        let x0 = AgentMatrix::zeros(4, 6);
        // divisor 1 spends more consensus sweeps per outer step than the
        // tuned default of 5, buying near-exact agreement at this small scale
        let cfg = ApmcConfig {
            schedule: ApmcSchedule::Convex,
            inner: InnerRule::Tuned { divisor: 1.0 },
            beta0: 100.0,
            horizon: 400,
            record_every: 1,
        };
        let (trace, _) = run_apm_c(&p, &w, &x0, &cfg).unwrap();
        let last = trace.rows.last().unwrap();
        assert!(last.obj_gap.abs() < 1e-12, "obj gap {}", last.obj_gap);
        assert!(last.consensus_violation < 1e-12, "violation {}", last.consensus_violation);
    }

    #[test]
    fn theory_inner_rule_converges_without_floor() {
        let (p, w) = desk();
        let x0 = AgentMatrix::zeros(4, 6);
        let cfg = ApmcConfig {
            schedule: ApmcSchedule::StronglyConvex,
            inner: InnerRule::theory_default(),
            beta0: 1.0,
            horizon: 100,
            record_every: 1,
        };
        let (trace, _) = run_apm_c(&p, &w, &x0, &cfg).unwrap();
        let last = trace.rows.last().unwrap();
        assert!(last.obj_gap.abs() < 1e-4, "obj gap {}", last.obj_gap);
        // consensus started exact (all-zero rows agree), so early sweeps may
        // legitimately be zero; the run must still communicate eventually
        assert!(last.comms > 0);
    }

    #[test]
    fn rejects_hinge_and_mu_zero_sc() {
        let hinge = gen_hinge_svm(40, 8, 4, 5).unwrap();
        let net = Network::new(4, vec![(0, 1), (1, 2), (2, 3)]).unwrap();
        let w = WeightMatrix::lazy_metropolis(&net).unwrap();
        let x0 = AgentMatrix::zeros(4, 8);
        let cfg = ApmcConfig::new(ApmcSchedule::StronglyConvex, 1.0, 5);
        assert!(matches!(
            run_apm_c(&hinge, &w, &x0, &cfg),
            Err(Error::InvalidConfig { field: "algorithm", .. })
        ));

        let ls = gen_least_squares(40, 6, 4, 0.0, 7).unwrap();
        let x0 = AgentMatrix::zeros(4, 6);
        assert!(matches!(
            run_apm_c(&ls, &w, &x0, &cfg),
            Err(Error::InvalidConfig { field: "schedule", .. })
        ));
    }

    #[test]
    fn first_tuned_sweep_count_is_floored_at_one() {
        let (p, w) = desk();
        let x0 = AgentMatrix::zeros(4, 6);
        let cfg = ApmcConfig {
            schedule: ApmcSchedule::StronglyConvex,
            inner: InnerRule::Tuned { divisor: 1e6 },
            beta0: 1.0,
            horizon: 1,
            record_every: 1,
        };
        let (trace, _) = run_apm_c(&p, &w, &x0, &cfg).unwrap();
        assert_eq!(trace.rows[0].comms, 1);
    }

    #[test]
    fn runs_are_deterministic() {
        let (p, w) = desk();
        let x0 = AgentMatrix::from_fn(4, 6, |i, j| ((i + 2 * j) as f64).cos());
        let cfg = ApmcConfig::new(ApmcSchedule::Convex, 2.0, 50);
        let (a, xa) = run_apm_c(&p, &w, &x0, &cfg).unwrap();
        let (b, xb) = run_apm_c(&p, &w, &x0, &cfg).unwrap();
        assert_eq!(xa, xb);
        for (ra, rb) in a.rows.iter().zip(b.rows.iter()) {
            assert_eq!(ra.k, rb.k);
            assert_eq!(ra.comms, rb.comms);
            assert_eq!(ra.obj_gap.to_bits(), rb.obj_gap.to_bits());
            assert_eq!(ra.consensus_violation.to_bits(), rb.consensus_violation.to_bits());
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ApmcConfig::new(ApmcSchedule::Convex, 2.5, 10);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ApmcConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
