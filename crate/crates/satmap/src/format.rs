//! JSON documents for graphs, architectures and mappings, plus a Graphviz
//! export of graphs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use satmap_core::arch::{ArchError, CgraArchitecture, Topology, DEFAULT_REGISTERS_PER_PE};
use satmap_core::dfg::{DataFlowGraph, DfgBuilder, DfgError, OpKind};
use satmap_core::mapping::{Mapping, Placement};
use satmap_core::regalloc::PressureReport;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("node {id}: {message}")]
    Node { id: u64, message: String },
    #[error(transparent)]
    Dfg(#[from] DfgError),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("unknown topology {0:?}, expected mesh2d or torus2d")]
    Topology(String),
    #[error("mapping assigns node {0} twice")]
    DuplicateAssignment(usize),
}

impl From<serde_json::Error> for FormatError {
    fn from(e: serde_json::Error) -> Self {
        let message = e.to_string();
        // serde_json appends " at line L column C"; keep only the description.
        let message = match message.rfind(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        FormatError::Syntax { line: e.line(), column: e.column(), message }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DfgDoc {
    nodes: Vec<NodeDoc>,
    #[serde(default)]
    edges: Vec<EdgeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    init: Vec<InitDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: u64,
    op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    imm: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stream: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    src: u64,
    dst: u64,
    operand: u8,
    #[serde(default)]
    distance: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitDoc {
    edge: (u64, u64, u8),
    values: Vec<i32>,
}

fn node_op(n: &NodeDoc) -> Result<OpKind, FormatError> {
    let err = |message: &str| FormatError::Node { id: n.id, message: message.to_string() };
    let op = match n.op.as_str() {
        "const" => OpKind::Const(n.imm.ok_or_else(|| err("const needs \"imm\""))?),
        "input" => OpKind::Input(n.stream.unwrap_or(0)),
        "output" => OpKind::Output(n.stream.unwrap_or(0)),
        other => OpKind::binary_from_mnemonic(other).ok_or_else(|| err(&format!("unknown op {other:?}")))?,
    };
    let stray_imm = n.imm.is_some() && !matches!(op, OpKind::Const(_));
    let stray_stream = n.stream.is_some() && !matches!(op, OpKind::Input(_) | OpKind::Output(_));
    if stray_imm || stray_stream {
        return Err(err(&format!("{} takes no {}", n.op, if stray_imm { "imm" } else { "stream" })));
    }
    Ok(op)
}

/// Parses and validates a graph document. Ids may be any distinct
/// non-negative integers; they are renumbered densely in ascending order.
pub fn parse_dfg(text: &str) -> Result<DataFlowGraph, FormatError> {
    let doc: DfgDoc = serde_json::from_str(text)?;
    let mut b = DfgBuilder::new();
    for n in &doc.nodes {
        b.node(n.id, node_op(n)?);
    }
    for e in &doc.edges {
        b.edge(e.src, e.dst, e.operand, e.distance);
    }
    for i in doc.init {
        b.init(i.edge.0, i.edge.1, i.edge.2, i.values);
    }
    Ok(b.build()?)
}

pub fn dfg_to_json(g: &DataFlowGraph) -> String {
    let nodes = g
        .nodes()
        .iter()
        .map(|n| {
            let (imm, stream) = match n.op {
                OpKind::Const(v) => (Some(v), None),
                OpKind::Input(s) | OpKind::Output(s) => (None, Some(s)),
                _ => (None, None),
            };
            NodeDoc { id: n.id as u64, op: n.op.mnemonic().to_string(), imm, stream }
        })
        .collect();
    let edges = g
        .edges()
        .iter()
        .map(|e| EdgeDoc { src: e.src as u64, dst: e.dst as u64, operand: e.operand, distance: e.distance })
        .collect();
    let init = g
        .edges()
        .iter()
        .filter(|e| !e.init.is_empty())
        .map(|e| InitDoc { edge: (e.src as u64, e.dst as u64, e.operand), values: e.init.clone() })
        .collect();
    serde_json::to_string_pretty(&DfgDoc { nodes, edges, init }).expect("plain data serializes")
}

/// Graphviz description: one node per line, then one edge per line.
/// Loop-carried edges are drawn red and labelled with their distance.
pub fn dfg_to_dot(g: &DataFlowGraph) -> String {
    let mut s = String::from("digraph dfg {\n");
    for n in g.nodes() {
        let _ = writeln!(s, "  n{} [label=\"{}: {}\"];", n.id, n.id, n.op);
    }
    for e in g.edges() {
        let _ = if e.distance > 0 {
            writeln!(s, "  n{} -> n{} [label=\"op{} d{}\", color=red];", e.src, e.dst, e.operand, e.distance)
        } else {
            writeln!(s, "  n{} -> n{} [label=\"op{}\"];", e.src, e.dst, e.operand)
        };
    }
    s.push_str("}\n");
    s
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchDoc {
    rows: usize,
    cols: usize,
    #[serde(default = "default_topology")]
    topology: String,
    #[serde(default = "default_registers")]
    registers_per_pe: u32,
}

fn default_topology() -> String {
    Topology::Mesh2d.tag().to_string()
}

fn default_registers() -> u32 {
    DEFAULT_REGISTERS_PER_PE
}

pub fn parse_arch(text: &str) -> Result<CgraArchitecture, FormatError> {
    let doc: ArchDoc = serde_json::from_str(text)?;
    let topology = Topology::from_tag(&doc.topology).ok_or(FormatError::Topology(doc.topology))?;
    Ok(CgraArchitecture::new(doc.rows, doc.cols, topology, doc.registers_per_pe)?)
}

pub fn arch_to_json(a: &CgraArchitecture) -> String {
    let doc = ArchDoc {
        rows: a.rows(),
        cols: a.cols(),
        topology: a.topology().tag().to_string(),
        registers_per_pe: a.registers_per_pe(),
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes")
}

#[derive(Debug, Serialize, Deserialize)]
struct MappingDoc {
    ii: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fingerprint: Option<String>,
    assignment: Vec<AssignDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    register_report: Option<ReportDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignDoc {
    node: usize,
    pe: usize,
    slot: u32,
    label: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportDoc {
    ok: bool,
    ii: u32,
    capacity: u32,
    max_pressure: u32,
    /// Indexed `[pe][slot]`.
    pressure: Vec<Vec<u32>>,
    violations: Vec<ViolationDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ViolationDoc {
    pe: usize,
    slot: u32,
    pressure: u32,
    capacity: u32,
}

pub fn mapping_to_json(m: &Mapping, report: Option<&PressureReport>) -> String {
    let doc = MappingDoc {
        ii: m.ii(),
        fingerprint: Some(format!("{:016x}", m.fingerprint())),
        assignment: m.iter().map(|(node, p)| AssignDoc { node, pe: p.pe, slot: p.slot, label: p.label }).collect(),
        register_report: report.map(|r| ReportDoc {
            ok: r.ok,
            ii: r.ii,
            capacity: r.capacity,
            max_pressure: r.max_pressure(),
            pressure: r.pressure.clone(),
            violations: r
                .violations
                .iter()
                .map(|v| ViolationDoc { pe: v.pe, slot: v.slot, pressure: v.pressure, capacity: v.capacity })
                .collect(),
        }),
    };
    serde_json::to_string_pretty(&doc).expect("plain data serializes")
}

/// Parses a mapping document. A stored register report is ignored; an
/// unparsable or absent fingerprint reads as 0.
pub fn parse_mapping(text: &str) -> Result<Mapping, FormatError> {
    let doc: MappingDoc = serde_json::from_str(text)?;
    let fp = doc.fingerprint.and_then(|s| u64::from_str_radix(&s, 16).ok()).unwrap_or(0);
    let mut m = Mapping::new(doc.ii, fp);
    for a in doc.assignment {
        if m.assign(a.node, Placement::new(a.pe, a.slot, a.label)).is_some() {
            return Err(FormatError::DuplicateAssignment(a.node));
        }
    }
    Ok(m)
}
