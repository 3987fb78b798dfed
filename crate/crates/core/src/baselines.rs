//! Comparison methods: EXTRA and a two-sequence accelerated gossip scheme.
//!
//! Both run on smooth problems only and share the counter conventions of
//! the penalty methods so traces plot on the same axes: one neighbor
//! exchange round and one gradient evaluation per iteration (the
//! accelerated scheme also pays one gradient at initialization).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::agents::AgentMatrix;
use crate::error::{Error, Result};
use crate::network::WeightMatrix;
use crate::problems::{measure_radii, smooth_gradient, ProblemInstance};
use crate::trace::{Counters, RunTrace, TraceMeta, TraceRecorder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineAlg {
    Extra,
    Dngd,
}

impl BaselineAlg {
    pub fn label(self) -> &'static str {
        match self {
            BaselineAlg::Extra => "extra",
            BaselineAlg::Dngd => "dngd",
        }
    }
}

/// Plumbing config for baseline runs. A zero stepsize freezes the iterates
/// by convention; negative stepsizes are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub algorithm: BaselineAlg,
    pub stepsize: f64,
    pub horizon: usize,
    pub record_every: usize,
}

fn validate(problem: &ProblemInstance, w: &WeightMatrix, x0: &AgentMatrix, stepsize: f64, horizon: usize) -> Result<()> {
    if !problem.is_smooth() {
        return Err(Error::InvalidConfig {
            field: "algorithm",
            message: "baselines require a smooth objective".into(),
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
    if stepsize < 0.0 {
        return Err(Error::InvalidConfig {
            field: "stepsize",
            message: format!("stepsize must be nonnegative, got {stepsize}"),
        });
    }
    if horizon == 0 {
        return Err(Error::InvalidConfig {
            field: "horizon",
            message: "need at least one iteration".into(),
        });
    }
    Ok(())
}

fn baseline_meta(
    algorithm: &str,
    problem: &ProblemInstance,
    w: &WeightMatrix,
    x0: &AgentMatrix,
    stepsize: f64,
) -> TraceMeta {
    let (r1, r2) = measure_radii(problem, x0);
    TraceMeta {
        algorithm: algorithm.into(),
        schedule: "none".into(),
        gap: w.gap(),
        l_smooth: problem.l_smooth(),
        mu: problem.mu(),
        m_lipschitz: 0.0,
        r1,
        r2,
        config: serde_json::to_value(serde_json::json!({ "stepsize": stepsize })).ok(),
    }
}

/// EXTRA with `W~ = (I + W) / 2` unless a custom second matrix is given:
/// `x^1 = W x^0 - a grad f(x^0)`, then
/// `x^{k+1} = x^k + W x^k - W~ x^{k-1} - a (grad f(x^k) - grad f(x^{k-1}))`.
/// One communication round and one gradient per iteration.
pub fn run_extra(
    problem: &ProblemInstance,
    w: &WeightMatrix,
    w_tilde: Option<&DMatrix<f64>>,
    x0: &AgentMatrix,
    stepsize: f64,
    horizon: usize,
    record_every: usize,
) -> Result<(RunTrace, AgentMatrix)> {
    validate(problem, w, x0, stepsize, horizon)?;
    if let Some(wt) = w_tilde {
        if wt.nrows() != w.m() || wt.ncols() != w.m() {
            return Err(Error::InvalidConfig {
                field: "w_tilde",
                message: format!(
                    "second matrix is {}x{}, want {m}x{m}",
                    wt.nrows(),
                    wt.ncols(),
                    m = w.m()
                ),
            });
        }
    }
    let spec = problem.smooth().expect("validated smooth");
    let mut counters = Counters::default();
    let mut recorder = TraceRecorder::new(record_every, horizon);

    let mut g_prev = smooth_gradient(spec, x0, &mut counters);
    counters.communications += 1;
    let mut wx_prev = w.apply(x0);
    let mut x_prev = x0.clone();
    let mut x_cur = &wx_prev - &g_prev * stepsize;
    recorder.record(1, &x_cur, problem, &counters);

    for k in 2..=horizon {
        let g_cur = smooth_gradient(spec, &x_cur, &mut counters);
        counters.communications += 1;
        let wx_cur = w.apply(&x_cur);
        let tilde_prev = match w_tilde {
            Some(wt) => wt * &x_prev,
            None => (&x_prev + &wx_prev) * 0.5,
        };
        let x_next =
            &x_cur + &wx_cur - tilde_prev - (&g_cur - &g_prev) * stepsize;
        x_prev = x_cur;
        wx_prev = wx_cur;
        g_prev = g_cur;
        x_cur = x_next;
        recorder.record(k, &x_cur, problem, &counters);
    }
    let meta = baseline_meta("extra", problem, w, x0, stepsize);
    Ok((recorder.finish(meta), x_cur))
}

/// Two-sequence accelerated gossip descent for strongly convex smooth
/// objectives, momentum `alpha = sqrt(mu eta)`:
/// `x+ = W y - eta s`, `v+ = (1 - alpha) W v + alpha W y - (eta / alpha) s`,
/// `y+ = (x+ + alpha v+) / (1 + alpha)`, `s+ = W s + grad f(y+) - grad f(y)`
/// with `s0 = grad f(y0)`. The three blocks travel in one exchange round.
pub fn run_dngd(
    problem: &ProblemInstance,
    w: &WeightMatrix,
    x0: &AgentMatrix,
    stepsize: f64,
    horizon: usize,
    record_every: usize,
) -> Result<(RunTrace, AgentMatrix)> {
    validate(problem, w, x0, stepsize, horizon)?;
    if !(problem.mu() > 0.0) {
        return Err(Error::InvalidConfig {
            field: "mu",
            message: "accelerated baseline needs mu > 0".into(),
        });
    }
    let spec = problem.smooth().expect("validated smooth");
    let mut counters = Counters::default();
    let mut recorder = TraceRecorder::new(record_every, horizon);

    if stepsize == 0.0 {
        // degenerate by convention: frozen iterates, normal accounting
        counters.grad_evals += 1;
        for k in 1..=horizon {
            counters.communications += 1;
            counters.grad_evals += 1;
            recorder.record(k, x0, problem, &counters);
        }
        let meta = baseline_meta("dngd", problem, w, x0, stepsize);
        return Ok((recorder.finish(meta), x0.clone()));
    }

    let alpha = (problem.mu() * stepsize).sqrt();
    let mut y = x0.clone();
    let mut v = x0.clone();
    let mut x = x0.clone();
    let mut g_prev = smooth_gradient(spec, &y, &mut counters);
    let mut s = g_prev.clone();

    for k in 1..=horizon {
        counters.communications += 1;
        let wy = w.apply(&y);
        let wv = w.apply(&v);
        let ws = w.apply(&s);
        let x_next = &wy - &s * stepsize;
        let v_next = wv * (1.0 - alpha) + &wy * alpha - &s * (stepsize / alpha);
        let y_next = (&x_next + &v_next * alpha) * (1.0 / (1.0 + alpha));
        let g_cur = smooth_gradient(spec, &y_next, &mut counters);
        s = ws + &g_cur - &g_prev;
        g_prev = g_cur;
        x = x_next;
        v = v_next;
        y = y_next;
        recorder.record(k, &x, problem, &counters);
    }
    let meta = baseline_meta("dngd", problem, w, x0, stepsize);
    Ok((recorder.finish(meta), x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;
    use crate::problems::{gen_hinge_svm, gen_least_squares};
    use nalgebra::DVector;

    fn desk() -> (ProblemInstance, WeightMatrix) {
        let p = gen_least_squares(40, 6, 4, 1e-2, 7).unwrap();
        let net = Network::new(4, vec![(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let w = WeightMatrix::lazy_metropolis(&net).unwrap();
        (p, w)
    }

    #[test]
    fn extra_single_agent_is_plain_gradient_descent() {
        let p = gen_least_squares(10, 5, 1, 5e-2, 21).unwrap();
        let net = Network::new(1, vec![]).unwrap();
        let w = WeightMatrix::lazy_metropolis(&net).unwrap();
        let s = p.smooth().unwrap();
        let step = 1.0 / s.l_smooth;
        let x0 = AgentMatrix::zeros(1, 5);
        let (_, x_final) = run_extra(&p, &w, None, &x0, step, 100, 1).unwrap();

        let mut x = DVector::<f64>::zeros(5);
        for _ in 0..100 {
            let r = s.agents[0].a.transpose() * &x - &s.agents[0].b;
            let g = &s.agents[0].a * r + s.mu * &x;
            x -= g * step;
        }
        for j in 0..5 {
            assert!((x_final[(0, j)] - x[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn extra_converges_with_vanishing_disagreement() {
        let (p, w) = desk();
        let x0 = AgentMatrix::zeros(4, 6);
        let step = 1.0 / p.l_smooth();
        let (trace, _) = run_extra(&p, &w, None, &x0, step, 3000, 10).unwrap();
        let last = trace.rows.last().unwrap();
        assert!(last.obj_gap.abs() < 1e-6, "gap {}", last.obj_gap);
        assert!(last.consensus_violation < 1e-8, "violation {}", last.consensus_violation);
        assert_eq!(last.grad_evals, 3000);
        assert_eq!(last.comms, 3000);
    }

    #[test]
    fn extra_counters_tick_once_per_iteration() {
        let (p, w) = desk();
        let x0 = AgentMatrix::zeros(4, 6);
        let (trace, _) = run_extra(&p, &w, None, &x0, 0.05, 7, 1).unwrap();
        for (idx, row) in trace.rows.iter().enumerate() {
            let k = (idx + 1) as u64;
            assert_eq!(row.k as u64, k);
            assert_eq!(row.grad_evals, k);
            assert_eq!(row.comms, k);
            assert_eq!(row.subgrad_evals, 0);
        }
    }

    #[test]
    fn explicit_wtilde_matches_default_half_sum() {
        let (p, w) = desk();
        let x0 = AgentMatrix::from_fn(4, 6, |i, j| ((i + j) as f64).cos());
        let m = w.m();
        let wt = (DMatrix::<f64>::identity(m, m) + w.entries()) * 0.5;
        let step = 1.0 / p.l_smooth();
        let (ta, xa) = run_extra(&p, &w, None, &x0, step, 50, 1).unwrap();
        let (tb, xb) = run_extra(&p, &w, Some(&wt), &x0, step, 50, 1).unwrap();
        assert!((xa - xb).norm() < 1e-12);
        for (ra, rb) in ta.rows.iter().zip(tb.rows.iter()) {
            assert!((ra.obj_gap - rb.obj_gap).abs() < 1e-14);
        }
    }

    #[test]
    fn dngd_single_agent_matches_centralized_accelerated_recursion() {
        let p = gen_least_squares(10, 5, 1, 5e-2, 21).unwrap();
        let net = Network::new(1, vec![]).unwrap();
        let w = WeightMatrix::lazy_metropolis(&net).unwrap();
        let s = p.smooth().unwrap();
        let eta = 0.5 / s.l_smooth;
        let x0 = AgentMatrix::zeros(1, 5);
        let (_, x_final) = run_dngd(&p, &w, &x0, eta, 80, 1).unwrap();

        let grad = |v: &DVector<f64>| {
            let r = s.agents[0].a.transpose() * v - &s.agents[0].b;
            &s.agents[0].a * r + s.mu * v
        };
        let alpha = (s.mu * eta).sqrt();
        let mut y = DVector::<f64>::zeros(5);
        let mut v = DVector::<f64>::zeros(5);
        let mut x = DVector::<f64>::zeros(5);
        for _ in 0..80 {
            let g = grad(&y);
            let x_next = &y - &g * eta;
            let v_next = &v * (1.0 - alpha) + &y * alpha - &g * (eta / alpha);
            let y_next = (&x_next + &v_next * alpha) * (1.0 / (1.0 + alpha));
            x = x_next;
            v = v_next;
            y = y_next;
        }
        for j in 0..5 {
            assert!((x_final[(0, j)] - x[j]).abs() < 1e-12, "coord {j}");
        }
    }

    #[test]
    fn dngd_converges_from_zero_start() {
        let (p, w) = desk();
        let x0 = AgentMatrix::zeros(4, 6);
        let eta = 0.5 / p.l_smooth();
        let (trace, _) = run_dngd(&p, &w, &x0, eta, 2000, 10).unwrap();
        let last = trace.rows.last().unwrap();
        assert!(last.obj_gap.abs() < 1e-6, "gap {}", last.obj_gap);
        assert_eq!(last.comms, 2000);
        assert_eq!(last.grad_evals, 2001);
    }

    #[test]
    fn dngd_zero_stepsize_freezes_iterates() {
        let (p, w) = desk();
        let x0 = AgentMatrix::from_fn(4, 6, |i, j| (i * 6 + j) as f64);
        let (trace, x_final) = run_dngd(&p, &w, &x0, 0.0, 10, 1).unwrap();
        assert_eq!(x_final, x0);
        let first = &trace.rows[0];
        let last = trace.rows.last().unwrap();
        assert_eq!(first.obj_gap.to_bits(), last.obj_gap.to_bits());
        assert_eq!(
            first.consensus_violation.to_bits(),
            last.consensus_violation.to_bits()
        );
    }

    #[test]
    fn baselines_reject_hinge_and_dngd_rejects_mu_zero() {
        let hinge = gen_hinge_svm(40, 8, 4, 5).unwrap();
        let net = Network::new(4, vec![(0, 1), (1, 2), (2, 3)]).unwrap();
        let w = WeightMatrix::lazy_metropolis(&net).unwrap();
        let x0 = AgentMatrix::zeros(4, 8);
        assert!(matches!(
            run_extra(&hinge, &w, None, &x0, 0.1, 5, 1),
            Err(Error::InvalidConfig { field: "algorithm", .. })
        ));
        let ls0 = gen_least_squares(40, 6, 4, 0.0, 7).unwrap();
        let x0 = AgentMatrix::zeros(4, 6);
        assert!(matches!(
            run_dngd(&ls0, &w, &x0, 0.1, 5, 1),
            Err(Error::InvalidConfig { field: "mu", .. })
        ));
        let ls = gen_least_squares(40, 6, 4, 1e-2, 7).unwrap();
        assert!(matches!(
            run_extra(&ls, &w, None, &x0, -0.1, 5, 1),
            Err(Error::InvalidConfig { field: "stepsize", .. })
        ));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = BaselineConfig {
            algorithm: BaselineAlg::Dngd,
            stepsize: 0.05,
            horizon: 100,
            record_every: 5,
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: BaselineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
