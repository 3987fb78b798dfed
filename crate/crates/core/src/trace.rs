//! Work counters, run traces, evaluation metrics, and the trace CSV format.
//!
//! One "communication" means every agent exchanges with its neighbors once
//! (one application of W); one gradient or subgradient evaluation means every
//! agent evaluates its local oracle once. Metric evaluation never touches the
//! counters, so recorded trajectories don't distort the work accounting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::{disagreement_norm_sq, row_average, AgentMatrix};
use crate::error::{Error, Result};
use crate::problems::ProblemInstance;

/// Monotone work counters shared by one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub communications: u64,
    pub grad_evals: u64,
    pub subgrad_evals: u64,
}

/// One recorded trace point: counters and metrics after `k` outer iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub grad_evals: u64,
    pub subgrad_evals: u64,
    pub comms: u64,
    pub obj_gap: f64,
    pub consensus_violation: f64,
    pub wall_ms: f64,
}

/// Run provenance embedded as comment lines ahead of the CSV header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TraceMeta {
    pub algorithm: String,
    pub schedule: String,
    pub gap: f64,
    pub l_smooth: f64,
    pub mu: f64,
    pub m_lipschitz: f64,
    /// max_i ||x0_i - x*||, measured post hoc; never used by the algorithms.
    pub r1: f64,
    /// max_i ||grad f_i(x*)||, measured post hoc.
    pub r2: f64,
    /// Resolved run configuration, embedded for reproducibility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
}

/// Objective gap and consensus violation of stacked iterates:
/// `(1/m) sum_i F_i(avg(x)) - f_star` and `(1/m) sum_i ||x_i - avg(x)||^2`.
pub fn evaluate_metrics(x: &AgentMatrix, problem: &ProblemInstance) -> (f64, f64) {
    let avg = row_average(x);
    let obj_gap = problem.average_objective(&avg) - problem.reference.f_star;
    let violation = disagreement_norm_sq(x) / x.nrows() as f64;
    (obj_gap, violation)
}

/// Collects rows at a fixed cadence; the final iterate is always recorded.
pub(crate) struct TraceRecorder {
    start: Instant,
    every: usize,
    horizon: usize,
    rows: Vec<TraceRow>,
}

impl TraceRecorder {
    pub fn new(every: usize, horizon: usize) -> Self {
        TraceRecorder {
            start: Instant::now(),
            every: every.max(1),
            horizon,
            rows: Vec::new(),
        }
    }

    pub fn record(
        &mut self,
        k: usize,
        x: &AgentMatrix,
        problem: &ProblemInstance,
        counters: &Counters,
    ) {
        if k % self.every != 0 && k != self.horizon {
            return;
        }
        let (obj_gap, consensus_violation) = evaluate_metrics(x, problem);
        self.rows.push(TraceRow {
            k,
            grad_evals: counters.grad_evals,
            subgrad_evals: counters.subgrad_evals,
            comms: counters.communications,
            obj_gap,
            consensus_violation,
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
        });
    }

    pub fn finish(self, meta: TraceMeta) -> RunTrace {
        RunTrace {
            meta,
            rows: self.rows,
        }
    }
}

pub const TRACE_HEADER: &str = "k,grad_evals,subgrad_evals,comms,obj_gap,consensus_violation,wall_ms";
const TRACE_FORMAT_LINE: &str = "# decopt-trace v1";

/// Renders a trace in the CSV format: `#` metadata comments, the fixed
/// header, then one row per record with floats in shortest round-trip form.
pub fn render_trace_csv(trace: &RunTrace) -> String {
    let mut out = String::new();
    out.push_str(TRACE_FORMAT_LINE);
    out.push('\n');
    let meta = serde_json::to_string(&trace.meta).expect("meta serializes");
    let _ = writeln!(out, "# meta {meta}");
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.k, r.grad_evals, r.subgrad_evals, r.comms, r.obj_gap, r.consensus_violation, r.wall_ms
        );
    }
    out
}

pub fn write_trace_csv(trace: &RunTrace, path: &Path) -> Result<()> {
    fs::write(path, render_trace_csv(trace)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_trace_csv(path: &Path) -> Result<RunTrace> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trace_csv(&text).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

pub fn parse_trace_csv(text: &str) -> std::result::Result<RunTrace, String> {
    let mut meta = None;
    let mut saw_header = false;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let human = lineno + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim_start();
            if let Some(json) = rest.strip_prefix("meta ") {
                meta = Some(
                    serde_json::from_str::<TraceMeta>(json)
                        .map_err(|e| format!("line {human}: bad meta block: {e}"))?,
                );
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != TRACE_HEADER {
                return Err(format!("line {human}: unexpected header `{line}`"));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(format!("line {human}: expected 7 fields, got {}", fields.len()));
        }
        let parse_u = |s: &str, name: &str| {
            s.parse::<u64>()
                .map_err(|e| format!("line {human}: bad {name}: {e}"))
        };
        let parse_f = |s: &str, name: &str| {
            s.parse::<f64>()
                .map_err(|e| format!("line {human}: bad {name}: {e}"))
        };
        rows.push(TraceRow {
            k: parse_u(fields[0], "k")? as usize,
            grad_evals: parse_u(fields[1], "grad_evals")?,
            subgrad_evals: parse_u(fields[2], "subgrad_evals")?,
            comms: parse_u(fields[3], "comms")?,
            obj_gap: parse_f(fields[4], "obj_gap")?,
            consensus_violation: parse_f(fields[5], "consensus_violation")?,
            wall_ms: parse_f(fields[6], "wall_ms")?,
        });
    }
    if !saw_header {
        return Err("missing header line".into());
    }
    Ok(RunTrace {
        meta: meta.ok_or("missing `# meta` line")?,
        rows,
    })
}
