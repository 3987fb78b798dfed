//! Undirected connected agent graphs and their gossip mixing matrices.
//!
//! The mixing matrix is built from lazy Metropolis weights: `W = (I + M)/2`
//! where `M` carries `1/(1 + max(deg_i, deg_j))` on every edge and fills the
//! diagonal so rows sum to one. Lazification shifts the spectrum into
//! `[0, 1]`, so `W` is doubly stochastic, symmetric, and positive
//! semidefinite with largest eigenvalue 1. The consensus machinery only ever
//! needs `W` itself; the square root of `I - W` is always handled through
//! the quadratic form `<x, (I - W) x>`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::agents::AgentMatrix;
use crate::error::{Error, Result};

/// Gap below which a mixing matrix is treated as numerically disconnected.
pub const DEGENERATE_GAP: f64 = 1e-12;

const VALIDATION_TOL: f64 = 1e-10;

/// Undirected simple graph over `m` agents, guaranteed connected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    m: usize,
    edges: Vec<(usize, usize)>,
    degrees: Vec<usize>,
}

impl Network {
    /// Builds a network from an explicit edge list. Edges are stored with
    /// `i < j`; duplicates and self-loops are rejected, and the edge set must
    /// connect all agents.
    pub fn new(m: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig {
                field: "m",
                message: "agent count must be positive".into(),
            });
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a == b {
                return Err(Error::InvalidConfig {
                    field: "edges",
                    message: format!("self-loop on agent {a}"),
                });
            }
            if a >= m || b >= m {
                return Err(Error::InvalidConfig {
                    field: "edges",
                    message: format!("edge ({a}, {b}) out of range for m={m}"),
                });
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        if normalized.len() != edges.len() {
            return Err(Error::InvalidConfig {
                field: "edges",
                message: "duplicate edges".into(),
            });
        }
        let mut degrees = vec![0usize; m];
        for &(a, b) in &normalized {
            degrees[a] += 1;
            degrees[b] += 1;
        }
        let net = Network {
            m,
            edges: normalized,
            degrees,
        };
        if !net.is_connected() {
            return Err(Error::Disconnected { m });
        }
        Ok(net)
    }

    /// Samples an Erdos-Renyi graph `G(m, p)` and resamples with an
    /// incremented seed until connected, at most `max_retries` extra times.
    pub fn erdos_renyi(m: usize, p: f64, seed: u64, max_retries: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidConfig {
                field: "p",
                message: format!("edge probability {p} outside [0, 1]"),
            });
        }
        if m == 0 {
            return Err(Error::InvalidConfig {
                field: "m",
                message: "agent count must be positive".into(),
            });
        }
        let attempts = max_retries + 1;
        for attempt in 0..attempts {
            let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
            let mut edges = Vec::new();
            for i in 0..m {
                for j in (i + 1)..m {
                    if rng.gen_bool(p) {
                        edges.push((i, j));
                    }
                }
            }
            let mut degrees = vec![0usize; m];
            for &(a, b) in &edges {
                degrees[a] += 1;
                degrees[b] += 1;
            }
            let net = Network { m, edges, degrees };
            if net.is_connected() {
                return Ok(net);
            }
        }
        Err(Error::NotConnected { m, p, attempts })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).is_ok()
    }

    fn is_connected(&self) -> bool {
        if self.m <= 1 {
            return true;
        }
        let mut adj = vec![Vec::new(); self.m];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.m];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.m
    }
}

/// Raw Metropolis weights `M`: exposed for tests; the algorithms always go
/// through the lazified matrix.
pub fn metropolis_weights(net: &Network) -> DMatrix<f64> {
    let m = net.m();
    let mut w = DMatrix::zeros(m, m);
    for &(a, b) in net.edges() {
        let v = 1.0 / (1.0 + net.degree(a).max(net.degree(b)) as f64);
        w[(a, b)] = v;
        w[(b, a)] = v;
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    w
}

/// Second-largest eigenvalue and spectral gap of a symmetric stochastic
/// matrix. A single agent has no disagreement direction, so `(0, 1)`.
pub fn spectral_gap(entries: &DMatrix<f64>) -> Result<(f64, f64)> {
    let m = entries.nrows();
    if m == 1 {
        return Ok((0.0, 1.0));
    }
    let mut eigs: Vec<f64> = entries.clone().symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma2 = eigs[1];
    let gap = 1.0 - sigma2;
    if gap <= DEGENERATE_GAP {
        return Err(Error::DegenerateGap { gap });
    }
    Ok((sigma2, gap))
}

/// Validated symmetric doubly stochastic PSD mixing matrix tied to a network
/// sparsity pattern, with its spectral quantities precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    net: Network,
    entries: DMatrix<f64>,
    sigma2: f64,
    gap: f64,
}

impl WeightMatrix {
    /// Lazy Metropolis mixing matrix `W = (I + M)/2` for a connected network.
    pub fn lazy_metropolis(net: &Network) -> Result<Self> {
        let m = net.m();
        let mut entries = metropolis_weights(net);
        for i in 0..m {
            for j in 0..m {
                entries[(i, j)] *= 0.5;
            }
            entries[(i, i)] += 0.5;
        }
        Self::from_entries(net.clone(), entries)
    }

    /// Wraps explicit entries after checking every structural invariant:
    /// symmetry, row sums, the exact sparsity pattern of the network, and a
    /// spectrum inside `[0, 1]` with top eigenvalue 1.
    pub fn from_entries(net: Network, entries: DMatrix<f64>) -> Result<Self> {
        let m = net.m();
        if entries.nrows() != m || entries.ncols() != m {
            return Err(Error::InvalidConfig {
                field: "weights",
                message: format!(
                    "expected {m}x{m} matrix, got {}x{}",
                    entries.nrows(),
                    entries.ncols()
                ),
            });
        }
        for i in 0..m {
            if entries[(i, i)] == 0.0 {
                return Err(Error::InvalidConfig {
                    field: "weights",
                    message: format!("zero diagonal entry at agent {i}"),
                });
            }
            let mut row_sum = 0.0;
            for j in 0..m {
                let v = entries[(i, j)];
                if !v.is_finite() {
                    return Err(Error::InvalidConfig {
                        field: "weights",
                        message: format!("non-finite entry at ({i}, {j})"),
                    });
                }
                if (v - entries[(j, i)]).abs() > VALIDATION_TOL {
                    return Err(Error::InvalidConfig {
                        field: "weights",
                        message: format!("asymmetry at ({i}, {j})"),
                    });
                }
                if i != j && (v != 0.0) != net.has_edge(i, j) {
                    return Err(Error::InvalidConfig {
                        field: "weights",
                        message: format!(
                            "sparsity pattern mismatch at ({i}, {j}): entry {v}, edge {}",
                            net.has_edge(i, j)
                        ),
                    });
                }
                row_sum += v;
            }
            if (row_sum - 1.0).abs() > VALIDATION_TOL {
                return Err(Error::InvalidConfig {
                    field: "weights",
                    message: format!("row {i} sums to {row_sum}, expected 1"),
                });
            }
        }
        let (sigma2, gap) = spectral_gap(&entries)?;
        if m > 1 {
            let eigs = entries.clone().symmetric_eigenvalues();
            let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if min < -VALIDATION_TOL || max > 1.0 + VALIDATION_TOL {
                return Err(Error::InvalidConfig {
                    field: "weights",
                    message: format!("spectrum [{min:.6}, {max:.6}] escapes [0, 1]"),
                });
            }
            if (max - 1.0).abs() > VALIDATION_TOL {
                return Err(Error::InvalidConfig {
                    field: "weights",
                    message: format!("largest eigenvalue {max} is not 1"),
                });
            }
        }
        Ok(WeightMatrix {
            net,
            entries,
            sigma2,
            gap,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn m(&self) -> usize {
        self.net.m()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Second-largest eigenvalue.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `1 - sigma2`.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// `W x`: one synchronous neighbor exchange applied to stacked iterates.
    pub fn apply(&self, x: &AgentMatrix) -> AgentMatrix {
        &self.entries * x
    }

    /// `(I - W) x`, the graph penalty operator `U^2 x`.
    pub fn laplacian_apply(&self, x: &AgentMatrix) -> AgentMatrix {
        let mut out = x.clone();
        out.gemm(-1.0, &self.entries, x, 1.0);
        out
    }

    /// `<x, (I - W) x>` = squared norm under the penalty square root, clamped
    /// at zero against cancellation on consensus inputs.
    pub fn u_quadratic_norm(&self, x: &AgentMatrix) -> f64 {
        let lx = self.laplacian_apply(x);
        let mut acc = 0.0;
        for (a, b) in x.iter().zip(lx.iter()) {
            acc += a * b;
        }
        acc.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::disagreement_norm_sq;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn path2() -> Network {
        Network::new(2, vec![(0, 1)]).unwrap()
    }

    #[test]
    fn two_node_lazy_metropolis_is_quarter_mix() {
        let w = WeightMatrix::lazy_metropolis(&path2()).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        assert_abs_diff_eq!(w.entries(), &expect, epsilon = 1e-15);
        assert_abs_diff_eq!(w.sigma2(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(w.gap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn three_node_star_weights_and_gap() {
        // center 0 with leaves 1, 2: M entries 1/3 on edges
        let net = Network::new(3, vec![(0, 1), (0, 2)]).unwrap();
        let m = metropolis_weights(&net);
        assert_abs_diff_eq!(m[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 0)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 1)], 2.0 / 3.0, epsilon = 1e-15);
        let w = WeightMatrix::lazy_metropolis(&net).unwrap();
        // spectrum of M is {1, 2/3, 0} so W has sigma2 = 5/6
        assert_abs_diff_eq!(w.sigma2(), 5.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn averaging_matrix_has_unit_gap() {
        let m = 5;
        let mut edges = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                edges.push((i, j));
            }
        }
        let net = Network::new(m, edges).unwrap();
        let avg = DMatrix::from_element(m, m, 1.0 / m as f64);
        let w = WeightMatrix::from_entries(net, avg).unwrap();
        assert_abs_diff_eq!(w.sigma2(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.gap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_weights_report_degenerate_gap() {
        let w = DMatrix::<f64>::identity(2, 2);
        match spectral_gap(&w) {
            Err(Error::DegenerateGap { gap }) => assert!(gap.abs() <= 1e-12),
            other => panic!("expected DegenerateGap, got {other:?}"),
        }
    }

    #[test]
    fn near_disconnected_coupling_is_rejected() {
        let eps = 1e-14;
        let entries = DMatrix::from_row_slice(2, 2, &[1.0 - eps, eps, eps, 1.0 - eps]);
        match WeightMatrix::from_entries(path2(), entries) {
            Err(Error::DegenerateGap { .. }) => {}
            other => panic!("expected DegenerateGap, got {other:?}"),
        }
    }

    #[test]
    fn pattern_mismatch_is_rejected() {
        // entry on a non-edge of a 3-path
        let net = Network::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let mut entries = metropolis_weights(&net);
        entries[(0, 2)] = 0.1;
        entries[(2, 0)] = 0.1;
        entries[(0, 0)] -= 0.1;
        entries[(2, 2)] -= 0.1;
        assert!(WeightMatrix::from_entries(net, entries).is_err());
    }

    #[test]
    fn erdos_renyi_is_deterministic_per_seed() {
        let a = Network::erdos_renyi(20, 0.3, 11, 50).unwrap();
        let b = Network::erdos_renyi(20, 0.3, 11, 50).unwrap();
        assert_eq!(a, b);
        let c = Network::erdos_renyi(20, 0.3, 12, 50).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn erdos_renyi_p_one_is_complete() {
        let net = Network::erdos_renyi(6, 1.0, 0, 0).unwrap();
        assert_eq!(net.edges().len(), 15);
    }

    #[test]
    fn erdos_renyi_p_zero_errors_not_connected() {
        match Network::erdos_renyi(4, 0.0, 3, 2) {
            Err(Error::NotConnected { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected NotConnected, got {other:?}"),
        }
    }

    #[test]
    fn single_agent_network_is_trivially_connected() {
        let net = Network::erdos_renyi(1, 0.0, 0, 0).unwrap();
        let w = WeightMatrix::lazy_metropolis(&net).unwrap();
        assert_eq!(w.sigma2(), 0.0);
        assert_eq!(w.gap(), 1.0);
    }

    #[test]
    fn u_norm_matches_explicit_square_root_factor() {
        // build U = V sqrt(Lambda) V^T of I - W and compare ||U x||_F^2
        let net = Network::erdos_renyi(7, 0.6, 5, 50).unwrap();
        let w = WeightMatrix::lazy_metropolis(&net).unwrap();
        let m = w.m();
        let imw = DMatrix::<f64>::identity(m, m) - w.entries();
        let eig = nalgebra::SymmetricEigen::new(imw);
        let mut sqrt_l = DMatrix::zeros(m, m);
        for i in 0..m {
            sqrt_l[(i, i)] = eig.eigenvalues[i].max(0.0).sqrt();
        }
        let u = &eig.eigenvectors * sqrt_l * eig.eigenvectors.transpose();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let x = AgentMatrix::from_fn(m, 3, |_, _| rng.gen::<f64>() - 0.5);
        let ux = &u * &x;
        let direct: f64 = ux.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(w.u_quadratic_norm(&x), direct, epsilon = 1e-10);
    }

    #[test]
    fn gap_scaled_disagreement_below_u_norm() {
        // (1 - sigma2) ||Pi x||_F^2 <= ||U x||_F^2
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for trial in 0..50 {
            let m = 3 + (trial % 8);
            let net = match Network::erdos_renyi(m, 0.5, 100 + trial as u64, 50) {
                Ok(n) => n,
                Err(_) => continue,
            };
            let w = WeightMatrix::lazy_metropolis(&net).unwrap();
            let x = AgentMatrix::from_fn(m, 2, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let lhs = w.gap() * disagreement_norm_sq(&x);
            let rhs = w.u_quadratic_norm(&x);
            assert!(
                lhs <= rhs + 1e-9,
                "gap * ||Pi x||^2 = {lhs} exceeds ||U x||^2 = {rhs}"
            );
        }
    }

    #[test]
    fn sigma2_invariant_under_relabeling() {
        let net = Network::erdos_renyi(12, 0.4, 21, 50).unwrap();
        let w = WeightMatrix::lazy_metropolis(&net).unwrap();
        // relabel agents by rotation i -> i+1 mod m
        let m = net.m();
        let edges: Vec<(usize, usize)> = net
            .edges()
            .iter()
            .map(|&(a, b)| ((a + 1) % m, (b + 1) % m))
            .collect();
        let net2 = Network::new(m, edges).unwrap();
        let w2 = WeightMatrix::lazy_metropolis(&net2).unwrap();
        assert_abs_diff_eq!(w.sigma2(), w2.sigma2(), epsilon = 1e-10);
    }
}
