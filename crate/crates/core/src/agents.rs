//! Aggregate iterate storage: one row per agent.
//!
//! All algorithms keep the stacked variable `x` as an `m x n` matrix whose
//! i-th row is agent i's local copy. The helpers here implement the row
//! average and the disagreement projector `x - 1 avg(x)^T` used by the
//! penalty formulations and the evaluation metrics.

use nalgebra::{DMatrix, DVector};

/// Stacked agent iterates, one row per agent (`m x n`).
pub type AgentMatrix = DMatrix<f64>;

/// Column vector holding the average of all agent rows.
pub fn row_average(x: &AgentMatrix) -> DVector<f64> {
    let m = x.nrows();
    assert!(m > 0, "agent matrix must have at least one row");
    let mut avg = DVector::zeros(x.ncols());
    for i in 0..m {
        for j in 0..x.ncols() {
            avg[j] += x[(i, j)];
        }
    }
    avg / (m as f64)
}

/// Stacks `m` copies of `v` as rows: the consensus matrix `1 v^T`.
pub fn consensus_rows(v: &DVector<f64>, m: usize) -> AgentMatrix {
    let mut out = AgentMatrix::zeros(m, v.len());
    for i in 0..m {
        for j in 0..v.len() {
            out[(i, j)] = v[j];
        }
    }
    out
}

/// Disagreement component `x - 1 avg(x)^T`; zero exactly when all rows agree.
pub fn disagreement(x: &AgentMatrix) -> AgentMatrix {
    let avg = row_average(x);
    let mut out = x.clone();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            out[(i, j)] -= avg[j];
        }
    }
    out
}

/// Squared Frobenius norm of the disagreement component.
pub fn disagreement_norm_sq(x: &AgentMatrix) -> f64 {
    let avg = row_average(x);
    let mut total = 0.0;
    for i in 0..x.nrows() {
        let mut row = 0.0;
        for j in 0..x.ncols() {
            let d = x[(i, j)] - avg[j];
            row += d * d;
        }
        total += row;
    }
    total
}
