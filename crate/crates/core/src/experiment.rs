//! End-to-end experiment orchestration: a config names the problem, the
//! graph, and the algorithm; `run_experiment` generates everything
//! deterministically from the seeds, runs from the zero start, and returns
//! a trace whose metadata embeds the fully resolved config.

use serde::{Deserialize, Serialize};

use crate::agents::AgentMatrix;
use crate::apm::{run_apm, ApmConfig, ApmMode};
use crate::apm_c::{run_apm_c, ApmcConfig, ApmcSchedule, InnerRule};
use crate::baselines::{run_dngd, run_extra};
use crate::error::{Error, Result};
use crate::network::{Network, WeightMatrix};
use crate::problems::{gen_hinge_svm, gen_least_squares, GenParams, ProblemInstance};
use crate::trace::RunTrace;

pub const DEFAULT_MAX_RETRIES: usize = 10;
/// Penalty seed used by the multi-consensus method when none is given.
pub const DEFAULT_APMC_BETA0: f64 = 100.0;

fn default_record_every() -> usize {
    1
}

fn default_max_retries() -> usize {
    DEFAULT_MAX_RETRIES
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Edge probability of the random graph; 1 gives the complete graph.
    pub p: f64,
    pub seed: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: usize,
}

/// Algorithm choice plus its tunables; omitted tunables resolve to the
/// documented defaults at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "alg", rename_all = "kebab-case")]
pub enum AlgorithmConfig {
    ApmC {
        schedule: ApmcSchedule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inner_divisor: Option<f64>,
        #[serde(default)]
        theory_mode: bool,
    },
    Apm {
        schedule: ApmMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta_scale: Option<f64>,
    },
    Extra {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stepsize: Option<f64>,
    },
    Dngd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stepsize: Option<f64>,
    },
}

impl AlgorithmConfig {
    pub fn label(&self) -> &'static str {
        match self {
            AlgorithmConfig::ApmC { .. } => "apm-c",
            AlgorithmConfig::Apm { .. } => "apm",
            AlgorithmConfig::Extra { .. } => "extra",
            AlgorithmConfig::Dngd { .. } => "dngd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: GenParams,
    pub graph: GraphConfig,
    pub algorithm: AlgorithmConfig,
    pub horizon: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn check_positive(value: Option<f64>, field: &'static str) -> Result<()> {
    if let Some(v) = value {
        if !(v > 0.0) {
            return Err(Error::InvalidConfig {
                field,
                message: format!("must be positive, got {v}"),
            });
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match self.problem.kind.as_str() {
            "least-squares" | "hinge-svm" => {}
            other => {
                return Err(Error::InvalidConfig {
                    field: "problem.kind",
                    message: format!("unknown kind {other:?}"),
                });
            }
        }
        if self.problem.agents == 0 {
            return Err(Error::InvalidConfig {
                field: "problem.agents",
                message: "need at least one agent".into(),
            });
        }
        if self.problem.dim == 0 {
            return Err(Error::InvalidConfig {
                field: "problem.dim",
                message: "need at least one coordinate".into(),
            });
        }
        if self.problem.mu < 0.0 {
            return Err(Error::InvalidConfig {
                field: "problem.mu",
                message: format!("must be nonnegative, got {}", self.problem.mu),
            });
        }
        if !(0.0..=1.0).contains(&self.graph.p) {
            return Err(Error::InvalidConfig {
                field: "graph.p",
                message: format!("edge probability must lie in [0, 1], got {}", self.graph.p),
            });
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig {
                field: "horizon",
                message: "need at least one iteration".into(),
            });
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig {
                field: "record_every",
                message: "cadence must be at least 1".into(),
            });
        }
        match &self.algorithm {
            AlgorithmConfig::ApmC {
                beta0,
                inner_divisor,
                ..
            } => {
                check_positive(*beta0, "algorithm.beta0")?;
                check_positive(*inner_divisor, "algorithm.inner_divisor")?;
            }
            AlgorithmConfig::Apm {
                beta0, eta_scale, ..
            } => {
                check_positive(*beta0, "algorithm.beta0")?;
                check_positive(*eta_scale, "algorithm.eta_scale")?;
            }
            AlgorithmConfig::Extra { stepsize } | AlgorithmConfig::Dngd { stepsize } => {
                check_positive(*stepsize, "algorithm.stepsize")?;
            }
        }
        Ok(())
    }

    /// Generates problem and weight matrix from the seeds.
    pub fn materialize(&self) -> Result<(ProblemInstance, WeightMatrix)> {
        self.validate()?;
        let p = &self.problem;
        let problem = match p.kind.as_str() {
            "least-squares" => gen_least_squares(p.n_samples, p.dim, p.agents, p.mu, p.seed)?,
            "hinge-svm" => gen_hinge_svm(p.n_samples, p.dim, p.agents, p.seed)?,
            _ => unreachable!("validated kind"),
        };
        let net = Network::erdos_renyi(p.agents, self.graph.p, self.graph.seed, self.graph.max_retries)?;
        let w = WeightMatrix::lazy_metropolis(&net)?;
        Ok((problem, w))
    }

    /// The same config with every omitted tunable filled in, for embedding
    /// in trace metadata.
    fn resolved(&self, problem: &ProblemInstance, w: &WeightMatrix) -> ExperimentConfig {
        let mut out = self.clone();
        out.algorithm = match &self.algorithm {
            AlgorithmConfig::ApmC {
                schedule,
                beta0,
                inner_divisor,
                theory_mode,
            } => {
                let divisor = inner_divisor.unwrap_or(match schedule {
                    ApmcSchedule::StronglyConvex => 3.0,
                    ApmcSchedule::Convex => 5.0,
                });
                AlgorithmConfig::ApmC {
                    schedule: *schedule,
                    beta0: Some(beta0.unwrap_or(DEFAULT_APMC_BETA0)),
                    inner_divisor: Some(divisor),
                    theory_mode: *theory_mode,
                }
            }
            AlgorithmConfig::Apm {
                schedule,
                beta0,
                eta_scale,
            } => AlgorithmConfig::Apm {
                schedule: *schedule,
                beta0: Some(beta0.unwrap_or_else(|| ApmConfig::default_beta0(problem, w))),
                eta_scale: Some(eta_scale.unwrap_or(1.0)),
            },
            AlgorithmConfig::Extra { stepsize } => AlgorithmConfig::Extra {
                stepsize: Some(stepsize.unwrap_or(1.0 / problem.l_smooth())),
            },
            AlgorithmConfig::Dngd { stepsize } => AlgorithmConfig::Dngd {
                stepsize: Some(stepsize.unwrap_or(0.5 / problem.l_smooth())),
            },
        };
        out
    }
}

/// Deterministic end-to-end run from the zero start; the returned trace
/// embeds the resolved config in its metadata.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunTrace> {
    let (problem, w) = config.materialize()?;
    let x0 = AgentMatrix::zeros(problem.m(), problem.dim());
    let resolved = config.resolved(&problem, &w);
    let (mut trace, _) = match &resolved.algorithm {
        AlgorithmConfig::ApmC {
            schedule,
            beta0,
            inner_divisor,
            theory_mode,
        } => {
            let cfg = ApmcConfig {
                schedule: *schedule,
                inner: if *theory_mode {
                    InnerRule::theory_default()
                } else {
                    InnerRule::Tuned {
                        divisor: inner_divisor.expect("resolved"),
                    }
                },
                beta0: beta0.expect("resolved"),
                horizon: resolved.horizon,
                record_every: resolved.record_every,
            };
            run_apm_c(&problem, &w, &x0, &cfg)?
        }
        AlgorithmConfig::Apm {
            schedule,
            beta0,
            eta_scale,
        } => {
            let cfg = ApmConfig {
                mode: *schedule,
                beta0: beta0.expect("resolved"),
                eta_scale: eta_scale.expect("resolved"),
                horizon: resolved.horizon,
                record_every: resolved.record_every,
            };
            run_apm(&problem, &w, &x0, &cfg)?
        }
        AlgorithmConfig::Extra { stepsize } => run_extra(
            &problem,
            &w,
            None,
            &x0,
            stepsize.expect("resolved"),
            resolved.horizon,
            resolved.record_every,
        )?,
        AlgorithmConfig::Dngd { stepsize } => run_dngd(
            &problem,
            &w,
            &x0,
            stepsize.expect("resolved"),
            resolved.horizon,
            resolved.record_every,
        )?,
    };
    trace.meta.config = serde_json::to_value(&resolved).ok();
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::render_trace_csv;

    fn base_config() -> ExperimentConfig {
        ExperimentConfig {
            problem: GenParams {
                kind: "least-squares".into(),
                n_samples: 40,
                dim: 6,
                agents: 4,
                mu: 1e-2,
                seed: 7,
            },
            graph: GraphConfig {
                p: 0.8,
                seed: 3,
                max_retries: 10,
            },
            algorithm: AlgorithmConfig::ApmC {
                schedule: ApmcSchedule::StronglyConvex,
                beta0: None,
                inner_divisor: None,
                theory_mode: false,
            },
            horizon: 40,
            record_every: 1,
        }
    }

    #[test]
    fn same_config_gives_identical_traces_up_to_wall_time() {
        let cfg = base_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        let strip = |text: &str| {
            text.lines()
                .map(|l| {
                    if l.starts_with('#') {
                        l.to_string()
                    } else {
                        // drop the trailing wall_ms field; timing may differ
                        l.rsplit_once(',')
                            .map(|(head, _)| head.to_string())
                            .unwrap_or_else(|| l.to_string())
                    }
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&render_trace_csv(&a)), strip(&render_trace_csv(&b)));
    }

    #[test]
    fn metadata_embeds_resolved_defaults() {
        let trace = run_experiment(&base_config()).unwrap();
        let cfg = trace.meta.config.expect("embedded config");
        assert_eq!(cfg["algorithm"]["beta0"], serde_json::json!(DEFAULT_APMC_BETA0));
        assert_eq!(cfg["algorithm"]["inner_divisor"], serde_json::json!(3.0));
        assert_eq!(cfg["horizon"], serde_json::json!(40));
    }

    #[test]
    fn each_algorithm_dispatches() {
        for algorithm in [
            AlgorithmConfig::ApmC {
                schedule: ApmcSchedule::Convex,
                beta0: Some(1.0),
                inner_divisor: None,
                theory_mode: false,
            },
            AlgorithmConfig::Extra { stepsize: None },
            AlgorithmConfig::Dngd { stepsize: None },
        ] {
            let mut cfg = base_config();
            cfg.algorithm = algorithm;
            cfg.horizon = 10;
            let trace = run_experiment(&cfg).unwrap();
            assert_eq!(trace.rows.len(), 10);
        }
        let mut cfg = base_config();
        cfg.problem.kind = "hinge-svm".into();
        cfg.problem.dim = 8;
        cfg.problem.mu = 0.0;
        cfg.problem.seed = 5;
        cfg.algorithm = AlgorithmConfig::Apm {
            schedule: ApmMode::FixedHorizon,
            beta0: None,
            eta_scale: None,
        };
        cfg.horizon = 10;
        let trace = run_experiment(&cfg).unwrap();
        assert_eq!(trace.rows.len(), 10);
        assert_eq!(trace.meta.algorithm, "apm");
    }

    #[test]
    fn validation_errors_name_the_field() {
        let mut cfg = base_config();
        cfg.problem.kind = "logistic".into();
        match run_experiment(&cfg) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "problem.kind"),
            other => panic!("expected InvalidConfig, got {other:?}"),
        }
        let mut cfg = base_config();
        cfg.graph.p = 1.5;
        assert!(matches!(
            run_experiment(&cfg),
            Err(Error::InvalidConfig { field: "graph.p", .. })
        ));
        let mut cfg = base_config();
        cfg.algorithm = AlgorithmConfig::Extra { stepsize: Some(-1.0) };
        assert!(matches!(
            run_experiment(&cfg),
            Err(Error::InvalidConfig { field: "algorithm.stepsize", .. })
        ));
    }

    #[test]
    fn unknown_algorithm_tag_fails_to_parse() {
        let text = r#"{
            "problem": {"kind": "least-squares", "n_samples": 40, "dim": 6, "agents": 4, "mu": 0.01, "seed": 7},
            "graph": {"p": 0.8, "seed": 3},
            "algorithm": {"alg": "mystery"},
            "horizon": 10
        }"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
    }

    #[test]
    fn cli_schedule_aliases_parse() {
        let text = r#"{
            "problem": {"kind": "hinge-svm", "n_samples": 40, "dim": 8, "agents": 4, "mu": 0.0, "seed": 5},
            "graph": {"p": 0.8, "seed": 3},
            "algorithm": {"alg": "apm", "schedule": "thm3"},
            "horizon": 10
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert!(matches!(
            cfg.algorithm,
            AlgorithmConfig::Apm { schedule: ApmMode::FixedHorizon, .. }
        ));
        let text2 = text.replace("thm3", "cor1");
        let cfg2: ExperimentConfig = serde_json::from_str(&text2).unwrap();
        assert!(matches!(
            cfg2.algorithm,
            AlgorithmConfig::Apm { schedule: ApmMode::Adaptive, .. }
        ));
    }
}
