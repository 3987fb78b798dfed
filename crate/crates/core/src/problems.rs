//! Problem instances: regularized least squares (smooth) and hinge-loss SVM
//! (nonsmooth), plus their centralized reference solutions.
//!
//! Data is synthetic: each agent holds an equal slice of `N` unit-norm
//! columns with uniform [0,1] entries. Least-squares targets are consistent
//! by construction (`b_i = A_i^T x_planted`), and SVM labels are the signs of
//! a planted linear score, which makes the instance separable; the planted
//! point is rescaled until every margin clears 1 with slack, so the hinge
//! optimum is exactly zero and certified by exhibiting that point.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::agents::AgentMatrix;
use crate::error::{Error, Result};
use crate::trace::Counters;

/// Scaled planted margins clear 1 by this factor, keeping the zero-loss
/// region full-dimensional around the certificate point.
const MARGIN_TARGET: f64 = 1.25;

/// One agent's slice of data: `dim x samples` columns and one target or
/// label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentData {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Sum-of-squares objective split across agents:
/// `f_i(x) = 0.5 ||A_i^T x - b_i||^2 + (mu/2) ||x||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothSpec {
    pub agents: Vec<AgentData>,
    pub mu: f64,
    /// `max_i lambda_max(A_i A_i^T) + mu`: per-agent smoothness constant.
    pub l_smooth: f64,
}

/// Hinge objective split across agents:
/// `h_i(x) = sum_j max(0, 1 - b_ij <a_ij, x>)` with labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct NonsmoothSpec {
    pub agents: Vec<AgentData>,
    /// `max_i sum_j ||a_ij||`: per-agent subgradient norm bound.
    pub m_lipschitz: f64,
}

/// Centralized solution used only for metrics, never by the algorithms.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub x_star: DVector<f64>,
    pub f_star: f64,
}

/// Generation parameters kept for provenance and regeneration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub kind: String,
    pub n_samples: usize,
    pub dim: usize,
    pub agents: usize,
    pub mu: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind {
    Smooth(SmoothSpec),
    Hinge(NonsmoothSpec),
}

/// Closed-form proximal step availability for the composite term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProxCapability {
    /// No nonsmooth composite term; prox is the identity.
    Identity,
    /// `h(x) = lambda ||x||_1`: entrywise soft threshold.
    L1 { lambda: f64 },
    /// No closed form (hinge); inner sliding is required.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub kind: ProblemKind,
    pub reference: Reference,
    pub provenance: GenParams,
}

impl ProblemInstance {
    pub fn m(&self) -> usize {
        match &self.kind {
            ProblemKind::Smooth(s) => s.agents.len(),
            ProblemKind::Hinge(s) => s.agents.len(),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ProblemKind::Smooth(s) => s.agents[0].a.nrows(),
            ProblemKind::Hinge(s) => s.agents[0].a.nrows(),
        }
    }

    pub fn is_smooth(&self) -> bool {
        matches!(self.kind, ProblemKind::Smooth(_))
    }

    pub fn smooth(&self) -> Option<&SmoothSpec> {
        match &self.kind {
            ProblemKind::Smooth(s) => Some(s),
            ProblemKind::Hinge(_) => None,
        }
    }

    pub fn hinge(&self) -> Option<&NonsmoothSpec> {
        match &self.kind {
            ProblemKind::Hinge(s) => Some(s),
            ProblemKind::Smooth(_) => None,
        }
    }

    /// Smoothness constant of the differentiable part (0 for pure hinge).
    pub fn l_smooth(&self) -> f64 {
        match &self.kind {
            ProblemKind::Smooth(s) => s.l_smooth,
            ProblemKind::Hinge(_) => 0.0,
        }
    }

    pub fn mu(&self) -> f64 {
        match &self.kind {
            ProblemKind::Smooth(s) => s.mu,
            ProblemKind::Hinge(_) => 0.0,
        }
    }

    pub fn m_lipschitz(&self) -> f64 {
        match &self.kind {
            ProblemKind::Smooth(_) => 0.0,
            ProblemKind::Hinge(s) => s.m_lipschitz,
        }
    }

    pub fn prox_capability(&self) -> ProxCapability {
        match &self.kind {
            ProblemKind::Smooth(_) => ProxCapability::Identity,
            ProblemKind::Hinge(_) => ProxCapability::None,
        }
    }

    /// `(1/m) sum_i F_i(v)` at a shared point; counter-free by design.
    pub fn average_objective(&self, v: &DVector<f64>) -> f64 {
        let m = self.m() as f64;
        match &self.kind {
            ProblemKind::Smooth(s) => {
                s.agents.iter().map(|d| smooth_local(d, s.mu, v)).sum::<f64>() / m
            }
            ProblemKind::Hinge(s) => {
                s.agents.iter().map(|d| hinge_local(d, v)).sum::<f64>() / m
            }
        }
    }
}

fn smooth_local(data: &AgentData, mu: f64, v: &DVector<f64>) -> f64 {
    let r = data.a.transpose() * v - &data.b;
    0.5 * r.norm_squared() + 0.5 * mu * v.norm_squared()
}

fn hinge_local(data: &AgentData, v: &DVector<f64>) -> f64 {
    let scores = data.a.transpose() * v;
    scores
        .iter()
        .zip(data.b.iter())
        .map(|(&s, &label)| (1.0 - label * s).max(0.0))
        .sum()
}

/// Stacked gradient of the smooth objective: row i is
/// `A_i (A_i^T x_i - b_i) + mu x_i`. Counts one gradient evaluation.
pub fn smooth_gradient(spec: &SmoothSpec, x: &AgentMatrix, counters: &mut Counters) -> AgentMatrix {
    counters.grad_evals += 1;
    let mut out = AgentMatrix::zeros(x.nrows(), x.ncols());
    for (i, data) in spec.agents.iter().enumerate() {
        let xi = x.row(i).transpose();
        let r = data.a.transpose() * &xi - &data.b;
        let g = &data.a * r + spec.mu * xi;
        out.row_mut(i).copy_from(&g.transpose());
    }
    out
}

/// Stacked hinge subgradient: row i sums `-b_ij a_ij` over samples with
/// margin strictly below 1; the kink at margin exactly 1 contributes zero.
/// Counts one subgradient evaluation.
pub fn hinge_subgradient(
    spec: &NonsmoothSpec,
    x: &AgentMatrix,
    counters: &mut Counters,
) -> AgentMatrix {
    counters.subgrad_evals += 1;
    let mut out = AgentMatrix::zeros(x.nrows(), x.ncols());
    for (i, data) in spec.agents.iter().enumerate() {
        let xi = x.row(i).transpose();
        let scores = data.a.transpose() * &xi;
        let mut g = DVector::zeros(x.ncols());
        for (j, (&s, &label)) in scores.iter().zip(data.b.iter()).enumerate() {
            if label * s < 1.0 {
                g.axpy(-label, &data.a.column(j).clone_owned(), 1.0);
            }
        }
        out.row_mut(i).copy_from(&g.transpose());
    }
    out
}

fn split_columns(n_samples: usize, agents: usize) -> Result<usize> {
    if agents == 0 {
        return Err(Error::InvalidConfig {
            field: "agents",
            message: "agent count must be positive".into(),
        });
    }
    if n_samples == 0 || n_samples % agents != 0 {
        return Err(Error::IndivisibleData {
            samples: n_samples,
            agents,
        });
    }
    Ok(n_samples / agents)
}

fn gen_columns(rng: &mut ChaCha20Rng, dim: usize, cols: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(dim, cols);
    for j in 0..cols {
        for i in 0..dim {
            a[(i, j)] = rng.gen::<f64>();
        }
        let norm = a.column(j).norm();
        assert!(norm > 1e-12, "degenerate all-zero column");
        for i in 0..dim {
            a[(i, j)] /= norm;
        }
    }
    a
}

fn planted_point(rng: &mut ChaCha20Rng, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Consistent regularized least squares: `b_i = A_i^T x_planted`, so the
/// residual vanishes at the planted point and `mu = 0` keeps `f_star = 0`.
pub fn gen_least_squares(
    n_samples: usize,
    dim: usize,
    agents: usize,
    mu: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    if mu < 0.0 {
        return Err(Error::InvalidConfig {
            field: "mu",
            message: format!("mu must be nonnegative, got {mu}"),
        });
    }
    let cols = split_columns(n_samples, agents)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mats: Vec<DMatrix<f64>> = (0..agents).map(|_| gen_columns(&mut rng, dim, cols)).collect();
    let planted = planted_point(&mut rng, dim);
    let data: Vec<AgentData> = mats
        .into_iter()
        .map(|a| {
            let b = a.transpose() * &planted;
            AgentData { a, b }
        })
        .collect();
    let l_smooth = data
        .iter()
        .map(|d| {
            // lambda_max(A A^T) via the small Gram A^T A
            let gram = d.a.transpose() * &d.a;
            gram.symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(0.0f64, f64::max)
        })
        .fold(0.0f64, f64::max)
        + mu;
    let spec = SmoothSpec {
        agents: data,
        mu,
        l_smooth,
    };
    let kind = ProblemKind::Smooth(spec);
    let reference = centralized_reference(&kind, None)?;
    Ok(ProblemInstance {
        kind,
        reference,
        provenance: GenParams {
            kind: "least-squares".into(),
            n_samples,
            dim,
            agents,
            mu,
            seed,
        },
    })
}

/// Separable hinge SVM: labels are signs of the planted score (`sign(0)` is
/// `+1`), and the planted point is rescaled so every margin reaches
/// `MARGIN_TARGET`, making zero loss attainable.
pub fn gen_hinge_svm(
    n_samples: usize,
    dim: usize,
    agents: usize,
    seed: u64,
) -> Result<ProblemInstance> {
    let cols = split_columns(n_samples, agents)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mats: Vec<DMatrix<f64>> = (0..agents).map(|_| gen_columns(&mut rng, dim, cols)).collect();
    let planted = planted_point(&mut rng, dim);
    let mut min_margin = f64::INFINITY;
    let data: Vec<AgentData> = mats
        .into_iter()
        .map(|a| {
            let scores = a.transpose() * &planted;
            let b = DVector::from_fn(cols, |j, _| if scores[j] >= 0.0 { 1.0 } else { -1.0 });
            for j in 0..cols {
                min_margin = min_margin.min(b[j] * scores[j]);
            }
            AgentData { a, b }
        })
        .collect();
    if min_margin <= 1e-12 {
        return Err(Error::InvalidConfig {
            field: "seed",
            message: format!("planted score grazes zero (margin {min_margin:.3e}); use another seed"),
        });
    }
    let m_lipschitz = data
        .iter()
        .map(|d| (0..cols).map(|j| d.a.column(j).norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let spec = NonsmoothSpec {
        agents: data,
        m_lipschitz,
    };
    let certificate = &planted * (MARGIN_TARGET / min_margin);
    let kind = ProblemKind::Hinge(spec);
    let reference = centralized_reference(&kind, Some(&certificate))?;
    Ok(ProblemInstance {
        kind,
        reference,
        provenance: GenParams {
            kind: "hinge-svm".into(),
            n_samples,
            dim,
            agents,
            mu: 0.0,
            seed,
        },
    })
}

/// Centralized solution: smooth instances solve the normal equations
/// `(sum_i A_i A_i^T + m mu I) x = sum_i A_i b_i` densely; hinge instances
/// run long subgradient descent with step `c/sqrt(t)` (bracket-tuned `c`),
/// warm-started from `hint` when given, and return the best iterate. A best
/// value of exactly zero certifies global optimality since hinge >= 0.
pub fn centralized_reference(kind: &ProblemKind, hint: Option<&DVector<f64>>) -> Result<Reference> {
    match kind {
        ProblemKind::Smooth(spec) => smooth_reference(spec),
        ProblemKind::Hinge(spec) => {
            let dim = spec.agents[0].a.nrows();
            let zero = DVector::zeros(dim);
            let start = hint.unwrap_or(&zero);
            let (f_star, x_star) = hinge_descent_tuned(spec, start, 1_000_000);
            Ok(Reference { x_star, f_star })
        }
    }
}

fn smooth_reference(spec: &SmoothSpec) -> Result<Reference> {
    let n = spec.agents[0].a.nrows();
    let m = spec.agents.len() as f64;
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for d in &spec.agents {
        h.gemm(1.0, &d.a, &d.a.transpose(), 1.0);
        rhs.gemv(1.0, &d.a, &d.b, 1.0);
    }
    for i in 0..n {
        h[(i, i)] += m * spec.mu;
    }
    let x_star = match h.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => {
            // PSD but singular: accept only a consistent system
            let eig = nalgebra::SymmetricEigen::new(h.clone());
            let lam_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
            let cut = lam_max * 1e-12;
            let coords = eig.eigenvectors.transpose() * &rhs;
            let mut sol = DVector::zeros(n);
            for i in 0..n {
                if eig.eigenvalues[i] > cut {
                    sol.axpy(coords[i] / eig.eigenvalues[i], &eig.eigenvectors.column(i).clone_owned(), 1.0);
                }
            }
            let residual = (&h * &sol - &rhs).norm();
            if residual > 1e-8 * (1.0 + rhs.norm()) {
                return Err(Error::SingularSystem { residual });
            }
            sol
        }
    };
    let spec_kind = ProblemKind::Smooth(spec.clone());
    let f_star = average_objective_of(&spec_kind, &x_star);
    Ok(Reference { x_star, f_star })
}

fn average_objective_of(kind: &ProblemKind, v: &DVector<f64>) -> f64 {
    match kind {
        ProblemKind::Smooth(s) => {
            s.agents.iter().map(|d| smooth_local(d, s.mu, v)).sum::<f64>() / s.agents.len() as f64
        }
        ProblemKind::Hinge(s) => {
            s.agents.iter().map(|d| hinge_local(d, v)).sum::<f64>() / s.agents.len() as f64
        }
    }
}

/// Centralized hinge value `(1/m) sum_i h_i(v)`.
pub fn hinge_average(spec: &NonsmoothSpec, v: &DVector<f64>) -> f64 {
    spec.agents.iter().map(|d| hinge_local(d, v)).sum::<f64>() / spec.agents.len() as f64
}

fn hinge_average_subgrad(spec: &NonsmoothSpec, v: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(v.len());
    for d in &spec.agents {
        let scores = d.a.transpose() * v;
        for (j, (&s, &label)) in scores.iter().zip(d.b.iter()).enumerate() {
            if label * s < 1.0 {
                g.axpy(-label, &d.a.column(j).clone_owned(), 1.0);
            }
        }
    }
    g / spec.agents.len() as f64
}

/// Subgradient descent with step `c/sqrt(t)` from `start`, optionally
/// projected onto a centered ball; returns the best value and iterate.
/// Stops early once the best value reaches exactly zero, which is a global
/// optimality certificate for a nonnegative objective.
pub fn hinge_subgradient_descent(
    spec: &NonsmoothSpec,
    start: &DVector<f64>,
    step_c: f64,
    iters: usize,
    ball_radius: Option<f64>,
) -> (f64, DVector<f64>) {
    let mut x = start.clone();
    let mut best_val = hinge_average(spec, &x);
    let mut best_x = x.clone();
    if best_val == 0.0 {
        return (best_val, best_x);
    }
    for t in 1..=iters {
        let g = hinge_average_subgrad(spec, &x);
        let gn = g.norm();
        if gn == 0.0 {
            break; // interior of the zero-loss region
        }
        x.axpy(-step_c / (t as f64).sqrt(), &g, 1.0);
        if let Some(r) = ball_radius {
            let xn = x.norm();
            if xn > r {
                x *= r / xn;
            }
        }
        let val = hinge_average(spec, &x);
        if val < best_val {
            best_val = val;
            best_x.copy_from(&x);
            if best_val == 0.0 {
                break;
            }
        }
    }
    (best_val, best_x)
}

fn hinge_descent_tuned(
    spec: &NonsmoothSpec,
    start: &DVector<f64>,
    iters: usize,
) -> (f64, DVector<f64>) {
    if hinge_average(spec, start) == 0.0 {
        return (0.0, start.clone());
    }
    // bracketed search for the step constant on a short budget
    let probes = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];
    let short = 2_000.min(iters);
    let mut best_c = probes[0];
    let mut best_probe = f64::INFINITY;
    for &c in &probes {
        let (v, _) = hinge_subgradient_descent(spec, start, c, short, None);
        if v < best_probe {
            best_probe = v;
            best_c = c;
        }
    }
    hinge_subgradient_descent(spec, start, best_c, iters, None)
}

/// `R1 = max_i ||x0_i - x*||` and `R2 = max_i ||grad f_i(x*)||`, measured
/// for trace metadata only.
pub fn measure_radii(problem: &ProblemInstance, x0: &AgentMatrix) -> (f64, f64) {
    let xs = &problem.reference.x_star;
    let mut r1 = 0.0f64;
    for i in 0..x0.nrows() {
        let d = x0.row(i).transpose() - xs;
        r1 = r1.max(d.norm());
    }
    let r2 = match &problem.kind {
        ProblemKind::Smooth(s) => s
            .agents
            .iter()
            .map(|d| {
                let r = d.a.transpose() * xs - &d.b;
                (&d.a * r + s.mu * xs).norm()
            })
            .fold(0.0f64, f64::max),
        ProblemKind::Hinge(_) => 0.0,
    };
    (r1, r2)
}
