//! File formats and report documents: graph/instance JSON, solution JSON,
//! trace CSV, and convergence report JSON.
//!
//! Rationals travel as `"p/q"` strings so every document round-trips
//! exactly; float renderings are advisory and carry a declared precision.

use crate::endowment::{EndowmentError, Endowments};
use crate::graph::{Graph, GraphError, NodeId};
use crate::num::{format_rat, parse_rat, rat_to_f64_rounded, Rat, RatParseError, FLOAT_SIG_DIGITS};
use crate::sim::{ConvergenceMetrics, DistKind, DistributionSpec, SimError, SimTrace, TraceRecord};
use crate::solver::{Allocation, BaseMethod, CertifyReport, LevelDecomposition, SolverError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{context}: {source}")]
    Rational {
        context: String,
        source: RatParseError,
    },
    #[error("{context}: {message}")]
    Field { context: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Endowment(#[from] EndowmentError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("trace line {line}: {message}")]
    Csv { line: usize, message: String },
}

fn parse_in(context: impl Fn() -> String, text: &str) -> Result<Rat, IoError> {
    parse_rat(text).map_err(|source| IoError::Rational {
        context: context(),
        source,
    })
}

/// Draw distribution as serialized; `constant` takes its value from the
/// node's `d_mean`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistDoc {
    Constant,
    Uniform { low: String, high: String },
    Bernoulli { p: String, hi: String },
    Discrete { values: Vec<String>, probs: Vec<String> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct NodeDoc {
    pub id: NodeId,
    pub d_mean: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<DistDoc>,
}

/// The graph instance document: nodes with endowments and optional draw
/// distributions, canonical undirected edges, and the echoed seed when a
/// generator produced the instance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct GraphDoc {
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<(NodeId, NodeId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GraphDoc {
    pub fn from_instance(
        g: &Graph,
        d: &Endowments,
        dists: &BTreeMap<NodeId, DistributionSpec>,
        seed: Option<u64>,
    ) -> Result<Self, IoError> {
        let nodes = g
            .nodes()
            .iter()
            .map(|&id| {
                let mean = d.mean(id)?;
                let dist = dists.get(&id).map(|spec| match spec.kind() {
                    DistKind::Constant => DistDoc::Constant,
                    DistKind::Uniform { low, high } => DistDoc::Uniform {
                        low: format_rat(low),
                        high: format_rat(high),
                    },
                    DistKind::ScaledBernoulli { p, hi } => DistDoc::Bernoulli {
                        p: format_rat(p),
                        hi: format_rat(hi),
                    },
                    DistKind::Discrete { values, probs } => DistDoc::Discrete {
                        values: values.iter().map(format_rat).collect(),
                        probs: probs.iter().map(format_rat).collect(),
                    },
                });
                Ok(NodeDoc {
                    id,
                    d_mean: format_rat(mean),
                    dist,
                })
            })
            .collect::<Result<_, IoError>>()?;
        Ok(GraphDoc {
            nodes,
            edges: g.edges().collect(),
            seed,
        })
    }

    /// Hash of the instance content (nodes and edges, seed excluded).
    pub fn sha256(&self) -> String {
        let canonical = GraphDoc {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            seed: None,
        };
        let bytes = serde_json::to_vec(&canonical).expect("document serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A fully parsed instance: validated connected graph, exact endowments,
/// and per-node draw distributions (constant at the mean when the document
/// does not say otherwise).
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: Graph,
    pub endowments: Endowments,
    pub dists: BTreeMap<NodeId, DistributionSpec>,
    pub seed: Option<u64>,
    pub sha256: String,
}

pub fn instance_from_doc(doc: &GraphDoc) -> Result<Instance, IoError> {
    let ids: Vec<NodeId> = doc.nodes.iter().map(|n| n.id).collect();
    let graph = Graph::new(ids, doc.edges.iter().copied())?;
    graph.ensure_connected()?;
    let mut means = BTreeMap::new();
    let mut dists = BTreeMap::new();
    for node in &doc.nodes {
        let ctx = |field: &str| format!("node {} field {field}", node.id);
        let mean = parse_in(|| ctx("d_mean"), &node.d_mean)?;
        let spec = match node.dist.as_ref().unwrap_or(&DistDoc::Constant) {
            DistDoc::Constant => DistributionSpec::constant(mean.clone())?,
            DistDoc::Uniform { low, high } => DistributionSpec::uniform(
                parse_in(|| ctx("dist.low"), low)?,
                parse_in(|| ctx("dist.high"), high)?,
            )?,
            DistDoc::Bernoulli { p, hi } => DistributionSpec::scaled_bernoulli(
                parse_in(|| ctx("dist.p"), p)?,
                parse_in(|| ctx("dist.hi"), hi)?,
            )?,
            DistDoc::Discrete { values, probs } => DistributionSpec::discrete(
                values
                    .iter()
                    .map(|v| parse_in(|| ctx("dist.values"), v))
                    .collect::<Result<_, _>>()?,
                probs
                    .iter()
                    .map(|p| parse_in(|| ctx("dist.probs"), p))
                    .collect::<Result<_, _>>()?,
            )?,
        };
        if spec.mean() != &mean {
            return Err(IoError::Field {
                context: ctx("d_mean"),
                message: format!(
                    "declared mean {} does not equal the distribution's analytic mean {}",
                    mean,
                    spec.mean()
                ),
            });
        }
        means.insert(node.id, mean);
        dists.insert(node.id, spec);
    }
    let bound = dists
        .values()
        .map(|s| s.bound().clone())
        .max()
        .expect("connected graph has nodes");
    let endowments = Endowments::with_bound(means, bound)?;
    Ok(Instance {
        sha256: doc.sha256(),
        seed: doc.seed,
        graph,
        endowments,
        dists,
    })
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance, IoError> {
    let text = std::fs::read_to_string(path)?;
    let doc: GraphDoc = serde_json::from_str(&text)?;
    instance_from_doc(&doc)
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TransferDoc {
    pub from: NodeId,
    pub to: NodeId,
    pub rate: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EqualityDoc {
    pub level: usize,
    pub lhs: String,
    pub rhs: String,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertificationDoc {
    pub passed: bool,
    pub in_base: bool,
    pub base_method: String,
    pub equalities: Vec<EqualityDoc>,
}

impl CertificationDoc {
    pub fn from_report(report: &CertifyReport) -> Self {
        CertificationDoc {
            passed: report.passed(),
            in_base: report.in_base,
            base_method: match report.base_method {
                BaseMethod::Exhaustive => "exhaustive".to_string(),
                BaseMethod::Separation => "separation".to_string(),
            },
            equalities: report
                .equalities
                .iter()
                .map(|e| EqualityDoc {
                    level: e.level,
                    lhs: format_rat(&e.lhs),
                    rhs: format_rat(&e.rhs),
                    holds: e.holds(),
                })
                .collect(),
        }
    }
}

/// Solution document: the instance it was computed from (inline plus
/// source reference and hash), the level decomposition in exact and float
/// form, the realizing allocation, and certification results when
/// requested.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolutionDoc {
    pub graph: GraphDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_source: Option<String>,
    pub graph_sha256: String,
    pub levels: Vec<String>,
    pub levels_float: Vec<f64>,
    pub float_sig_digits: usize,
    pub level_sets: Vec<Vec<NodeId>>,
    pub ratios: BTreeMap<NodeId, String>,
    pub received: BTreeMap<NodeId, String>,
    pub allocation: Vec<TransferDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certification: Option<CertificationDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SolutionDoc {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        g: &Graph,
        d: &Endowments,
        dists: &BTreeMap<NodeId, DistributionSpec>,
        dec: &LevelDecomposition,
        alloc: &Allocation,
        certification: Option<&CertifyReport>,
        graph_source: Option<String>,
        seed: Option<u64>,
    ) -> Result<Self, IoError> {
        let graph = GraphDoc::from_instance(g, d, dists, seed)?;
        let graph_sha256 = graph.sha256();
        let received = dec.received(d)?;
        Ok(SolutionDoc {
            graph_sha256,
            graph,
            graph_source,
            levels: dec.levels().iter().map(format_rat).collect(),
            levels_float: dec.levels().iter().map(rat_to_f64_rounded).collect(),
            float_sig_digits: FLOAT_SIG_DIGITS,
            level_sets: dec
                .level_sets()
                .iter()
                .map(|s| s.iter().copied().collect())
                .collect(),
            ratios: dec
                .ratios()
                .iter()
                .map(|(&id, r)| (id, format_rat(r)))
                .collect(),
            received: received
                .iter()
                .map(|(&id, r)| (id, format_rat(r)))
                .collect(),
            allocation: alloc
                .transfers()
                .map(|(from, to, rate)| TransferDoc {
                    from,
                    to,
                    rate: format_rat(rate),
                })
                .collect(),
            certification: certification.map(CertificationDoc::from_report),
            seed,
        })
    }

    /// Reconstructs the exact solver objects; the decomposition and
    /// allocation round-trip through their rational strings.
    pub fn restore(&self) -> Result<(Instance, LevelDecomposition, Allocation), IoError> {
        let instance = instance_from_doc(&self.graph)?;
        let levels = self
            .levels
            .iter()
            .enumerate()
            .map(|(k, text)| parse_in(|| format!("levels[{k}]"), text))
            .collect::<Result<Vec<_>, _>>()?;
        let level_sets = self
            .level_sets
            .iter()
            .map(|s| s.iter().copied().collect())
            .collect();
        let dec = LevelDecomposition::new(levels, level_sets)?;
        let mut transfers = BTreeMap::new();
        for t in &self.allocation {
            let rate = parse_in(|| format!("allocation {} -> {}", t.from, t.to), &t.rate)?;
            transfers.insert((t.from, t.to), rate);
        }
        Ok((instance, dec, Allocation::new(transfers)))
    }
}

pub fn load_solution(path: impl AsRef<Path>) -> Result<SolutionDoc, IoError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Fixed trace schema: `t,node,r_bar,rho,estimate,V`, one row per node per
/// recorded slot; `V` stays empty when no reference was supplied.
pub const TRACE_HEADER: &str = "t,node,r_bar,rho,estimate,V";

pub fn write_trace_csv(trace: &SimTrace, w: &mut impl Write) -> Result<(), IoError> {
    writeln!(w, "{TRACE_HEADER}")?;
    for rec in &trace.records {
        for (pos, &id) in trace.ids.iter().enumerate() {
            let v = rec
                .lyapunov
                .map(|v| v.to_string())
                .unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                rec.t, id, rec.r_bar[pos], rec.rho[pos], rec.estimate[pos], v
            )?;
        }
    }
    Ok(())
}

pub fn read_trace_csv(r: impl BufRead) -> Result<SimTrace, IoError> {
    let mut lines = r.lines().enumerate();
    let header = lines
        .next()
        .ok_or(IoError::Csv {
            line: 1,
            message: "empty trace".to_string(),
        })?
        .1?;
    if header.trim() != TRACE_HEADER {
        return Err(IoError::Csv {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut ids: Vec<NodeId> = Vec::new();
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut first_block = true;
    for (index, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = index + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(IoError::Csv {
                line: lineno,
                message: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let bad = |field: &str| IoError::Csv {
            line: lineno,
            message: format!("unparseable {field}"),
        };
        let t: u64 = fields[0].parse().map_err(|_| bad("t"))?;
        let node: NodeId = fields[1].parse().map_err(|_| bad("node"))?;
        let r_bar: f64 = fields[2].parse().map_err(|_| bad("r_bar"))?;
        let rho: f64 = fields[3].parse().map_err(|_| bad("rho"))?;
        let estimate: f64 = fields[4].parse().map_err(|_| bad("estimate"))?;
        let lyapunov = if fields[5].is_empty() {
            None
        } else {
            Some(fields[5].parse().map_err(|_| bad("V"))?)
        };
        if records.last().map(|r: &TraceRecord| r.t) != Some(t) {
            records.push(TraceRecord {
                t,
                r_bar: Vec::new(),
                rho: Vec::new(),
                estimate: Vec::new(),
                lyapunov,
            });
            first_block = records.len() == 1;
        }
        if first_block {
            ids.push(node);
        }
        let rec = records.last_mut().expect("pushed above");
        rec.r_bar.push(r_bar);
        rec.rho.push(rho);
        rec.estimate.push(estimate);
        if lyapunov.is_some() {
            rec.lyapunov = lyapunov;
        }
        if !first_block {
            let pos = rec.r_bar.len() - 1;
            if ids.get(pos) != Some(&node) {
                return Err(IoError::Csv {
                    line: lineno,
                    message: "node order differs between slots".to_string(),
                });
            }
        }
    }
    if records.is_empty() {
        return Err(IoError::Csv {
            line: 2,
            message: "trace carries no records".to_string(),
        });
    }
    Ok(SimTrace { ids, records })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointDoc {
    pub t: u64,
    pub max_abs_dev: f64,
    pub lyapunov: f64,
}

/// Convergence report document; `band_entries` maps tolerance bands to the
/// first recorded slot inside them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDoc {
    pub checkpoints: Vec<CheckpointDoc>,
    pub band_entries: BTreeMap<String, Option<u64>>,
    pub lyapunov_nonincreasing_fraction: f64,
    pub final_max_abs_dev: f64,
    pub final_lyapunov: f64,
}

impl ReportDoc {
    pub fn from_metrics(metrics: &ConvergenceMetrics) -> Self {
        ReportDoc {
            checkpoints: metrics
                .checkpoints
                .iter()
                .map(|c| CheckpointDoc {
                    t: c.t,
                    max_abs_dev: c.max_abs_dev,
                    lyapunov: c.lyapunov,
                })
                .collect(),
            band_entries: metrics
                .band_entries
                .iter()
                .map(|(band, entry)| (band.to_string(), *entry))
                .collect(),
            lyapunov_nonincreasing_fraction: metrics.lyapunov_nonincreasing_fraction,
            final_max_abs_dev: metrics.final_max_abs_dev,
            final_lyapunov: metrics.final_lyapunov,
        }
    }
}

/// Plain whitespace-separated columns (`t max_abs_dev lyapunov`) for
/// direct consumption by gnuplot.
pub fn write_report_columns(metrics: &ConvergenceMetrics, w: &mut impl Write) -> Result<(), IoError> {
    writeln!(w, "# t max_abs_dev lyapunov")?;
    for c in &metrics.checkpoints {
        writeln!(w, "{} {} {}", c.t, c.max_abs_dev, c.lyapunov)?;
    }
    Ok(())
}
