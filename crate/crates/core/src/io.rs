//! File persistence for networks, weight matrices, and problem instances.
//!
//! Everything is JSON with a leading `format` tag. Floats are written by
//! serde_json's shortest round-trip encoder, so save followed by load
//! reproduces every f64 bit-exactly. Loads revalidate structural invariants
//! (weight matrices go back through full construction checks); numeric
//! payloads are otherwise taken verbatim.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, WeightMatrix};
use crate::problems::{
    AgentData, GenParams, NonsmoothSpec, ProblemInstance, ProblemKind, Reference, SmoothSpec,
};

pub const NETWORK_FORMAT: &str = "decopt-network v1";
pub const PROBLEM_FORMAT: &str = "decopt-problem v1";

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    format: String,
    m: usize,
    edges: Vec<(usize, usize)>,
    /// Dense mixing matrix rows; present when a WeightMatrix was saved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<Vec<Vec<f64>>>,
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_string(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn to_json_pretty<T: Serialize>(value: &T, path: &Path) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| format_err(path, e.to_string()))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], path: &Path, what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(format_err(path, format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(format_err(path, format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    let file = NetworkFile {
        format: NETWORK_FORMAT.into(),
        m: net.m(),
        edges: net.edges().to_vec(),
        w: None,
    };
    write_string(path, &to_json_pretty(&file, path)?)
}

/// Saves the topology together with the dense mixing matrix block.
pub fn save_weight_matrix(w: &WeightMatrix, path: &Path) -> Result<()> {
    let file = NetworkFile {
        format: NETWORK_FORMAT.into(),
        m: w.m(),
        edges: w.network().edges().to_vec(),
        w: Some(matrix_rows(w.entries())),
    };
    write_string(path, &to_json_pretty(&file, path)?)
}

fn parse_network_file(path: &Path) -> Result<NetworkFile> {
    let text = read_to_string(path)?;
    let file: NetworkFile =
        serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))?;
    if file.format != NETWORK_FORMAT {
        return Err(format_err(
            path,
            format!("expected format {NETWORK_FORMAT:?}, found {:?}", file.format),
        ));
    }
    Ok(file)
}

pub fn load_network(path: &Path) -> Result<Network> {
    let file = parse_network_file(path)?;
    Network::new(file.m, file.edges)
}

/// Loads a file saved by [`save_weight_matrix`]; the dense block is
/// revalidated by full weight-matrix construction.
pub fn load_weight_matrix(path: &Path) -> Result<WeightMatrix> {
    let file = parse_network_file(path)?;
    let rows = file
        .w
        .as_ref()
        .ok_or_else(|| format_err(path, "file has no mixing-matrix block"))?;
    let entries = rows_to_matrix(rows, path, "w")?;
    let net = Network::new(file.m, file.edges)?;
    WeightMatrix::from_entries(net, entries)
}

#[derive(Serialize, Deserialize)]
struct AgentBlock {
    /// Row-major `dim x samples` block.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProblemFile {
    format: String,
    provenance: GenParams,
    mu: f64,
    l_smooth: f64,
    m_lipschitz: f64,
    agents: Vec<AgentBlock>,
    x_star: Vec<f64>,
    f_star: f64,
}

pub fn save_problem(problem: &ProblemInstance, path: &Path) -> Result<()> {
    let (agents, mu, l_smooth, m_lipschitz) = match &problem.kind {
        ProblemKind::Smooth(s) => (&s.agents, s.mu, s.l_smooth, 0.0),
        ProblemKind::Hinge(s) => (&s.agents, 0.0, 0.0, s.m_lipschitz),
    };
    let file = ProblemFile {
        format: PROBLEM_FORMAT.into(),
        provenance: problem.provenance.clone(),
        mu,
        l_smooth,
        m_lipschitz,
        agents: agents
            .iter()
            .map(|d| AgentBlock {
                a: matrix_rows(&d.a),
                b: d.b.iter().cloned().collect(),
            })
            .collect(),
        x_star: problem.reference.x_star.iter().cloned().collect(),
        f_star: problem.reference.f_star,
    };
    write_string(path, &to_json_pretty(&file, path)?)
}

pub fn load_problem(path: &Path) -> Result<ProblemInstance> {
    let text = read_to_string(path)?;
    let file: ProblemFile =
        serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))?;
    if file.format != PROBLEM_FORMAT {
        return Err(format_err(
            path,
            format!("expected format {PROBLEM_FORMAT:?}, found {:?}", file.format),
        ));
    }
    if file.agents.is_empty() {
        return Err(format_err(path, "no agent blocks"));
    }
    let mut data = Vec::with_capacity(file.agents.len());
    let mut dim = None;
    for (i, block) in file.agents.iter().enumerate() {
        let a = rows_to_matrix(&block.a, path, &format!("agents[{i}].a"))?;
        match dim {
            None => dim = Some((a.nrows(), a.ncols())),
            Some(d) if d != (a.nrows(), a.ncols()) => {
                return Err(format_err(path, format!("agents[{i}]: shape mismatch")));
            }
            _ => {}
        }
        if block.b.len() != a.ncols() {
            return Err(format_err(
                path,
                format!("agents[{i}]: {} targets for {} columns", block.b.len(), a.ncols()),
            ));
        }
        data.push(AgentData {
            a,
            b: DVector::from_vec(block.b.clone()),
        });
    }
    let (n, _) = dim.expect("nonempty agents");
    if file.x_star.len() != n {
        return Err(format_err(
            path,
            format!("x_star has {} coordinates for dimension {n}", file.x_star.len()),
        ));
    }
    let kind = match file.provenance.kind.as_str() {
        "least-squares" => ProblemKind::Smooth(SmoothSpec {
            agents: data,
            mu: file.mu,
            l_smooth: file.l_smooth,
        }),
        "hinge-svm" => ProblemKind::Hinge(NonsmoothSpec {
            agents: data,
            m_lipschitz: file.m_lipschitz,
        }),
        other => {
            return Err(format_err(path, format!("unknown problem kind {other:?}")));
        }
    };
    Ok(ProblemInstance {
        kind,
        reference: Reference {
            x_star: DVector::from_vec(file.x_star),
            f_star: file.f_star,
        },
        provenance: file.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{gen_hinge_svm, gen_least_squares};

    #[test]
    fn network_round_trip_is_lossless() {
        let net = Network::erdos_renyi(12, 0.4, 9, 10).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        save_network(&net, &path).unwrap();
        let back = load_network(&path).unwrap();
        assert_eq!(net.m(), back.m());
        assert_eq!(net.edges(), back.edges());
    }

    #[test]
    fn weight_matrix_round_trip_is_bit_exact() {
        let net = Network::erdos_renyi(9, 0.5, 4, 10).unwrap();
        let w = WeightMatrix::lazy_metropolis(&net).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        save_weight_matrix(&w, &path).unwrap();
        let back = load_weight_matrix(&path).unwrap();
        assert_eq!(w.entries(), back.entries());
        assert_eq!(w.sigma2().to_bits(), back.sigma2().to_bits());
        assert_eq!(w.gap().to_bits(), back.gap().to_bits());
    }

    #[test]
    fn network_only_file_has_no_matrix_block() {
        let net = Network::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        save_network(&net, &path).unwrap();
        assert!(matches!(
            load_weight_matrix(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn problem_round_trip_is_bit_exact_both_kinds() {
        let dir = tempfile::tempdir().unwrap();
        for problem in [
            gen_least_squares(40, 6, 4, 1e-2, 7).unwrap(),
            gen_hinge_svm(40, 8, 4, 5).unwrap(),
        ] {
            let path = dir.path().join("p.json");
            save_problem(&problem, &path).unwrap();
            let back = load_problem(&path).unwrap();
            assert_eq!(problem, back);
        }
    }

    #[test]
    fn wrong_format_tag_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"format":"something else","m":1,"edges":[]}"#).unwrap();
        assert!(matches!(load_network(&path), Err(Error::Format { .. })));
        let missing = dir.path().join("absent.json");
        assert!(matches!(load_network(&missing), Err(Error::Io { .. })));
    }

    #[test]
    fn corrupted_problem_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let problem = gen_least_squares(40, 6, 4, 1e-2, 7).unwrap();
        save_problem(&problem, &path).unwrap();
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        v["x_star"] = serde_json::json!([1.0]);
        std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
        assert!(matches!(load_problem(&path), Err(Error::Format { .. })));
    }
}
