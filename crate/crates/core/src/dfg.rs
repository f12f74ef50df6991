//! Data-flow graph of a loop body.
//!
//! Nodes are single-cycle operations over 32-bit wrapping integers. Edges
//! carry an iteration distance: `0` is an ordinary data dependency inside one
//! iteration, `d >= 1` feeds the consumer of iteration `i` with the value the
//! producer computed in iteration `i - d`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Const(i32),
    Input(u32),
    Output(u32),
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

impl OpKind {
    pub const BINARY: [OpKind; 8] =
        [OpKind::Add, OpKind::Sub, OpKind::Mul, OpKind::And, OpKind::Or, OpKind::Xor, OpKind::Shl, OpKind::Shr];

    /// Number of data operands the operation consumes.
    pub fn arity(self) -> usize {
        match self {
            OpKind::Const(_) | OpKind::Input(_) => 0,
            OpKind::Output(_) => 1,
            _ => 2,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            OpKind::Const(_) => "const",
            OpKind::Input(_) => "input",
            OpKind::Output(_) => "output",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::And => "and",
            OpKind::Or => "or",
            OpKind::Xor => "xor",
            OpKind::Shl => "shl",
            OpKind::Shr => "shr",
        }
    }

    /// Looks up a two-operand operation by mnemonic.
    pub fn binary_from_mnemonic(name: &str) -> Option<OpKind> {
        OpKind::BINARY.into_iter().find(|op| op.mnemonic() == name)
    }

    /// Evaluates a two-operand operation. Shift amounts are taken mod 32 and
    /// `shr` is a logical shift.
    pub fn apply(self, a: i32, b: i32) -> i32 {
        let sh = (b as u32) & 31;
        match self {
            OpKind::Add => a.wrapping_add(b),
            OpKind::Sub => a.wrapping_sub(b),
            OpKind::Mul => a.wrapping_mul(b),
            OpKind::And => a & b,
            OpKind::Or => a | b,
            OpKind::Xor => a ^ b,
            OpKind::Shl => ((a as u32) << sh) as i32,
            OpKind::Shr => ((a as u32) >> sh) as i32,
            OpKind::Const(_) | OpKind::Input(_) | OpKind::Output(_) => {
                panic!("{} is not a two-operand operation", self.mnemonic())
            }
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpKind::Const(v) => write!(f, "const({v})"),
            OpKind::Input(s) => write!(f, "input(s{s})"),
            OpKind::Output(s) => write!(f, "output(s{s})"),
            op => f.write_str(op.mnemonic()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DfgNode {
    pub id: NodeId,
    pub op: OpKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DfgEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub operand: u8,
    pub distance: u32,
    /// Values seen by the first `distance` consumer iterations; `init[i]` is
    /// read by iteration `i`. Empty when not declared.
    pub init: Vec<i32>,
}

impl DfgEdge {
    pub fn new(src: NodeId, dst: NodeId, operand: u8, distance: u32) -> Self {
        DfgEdge { src, dst, operand, distance, init: Vec::new() }
    }

    pub fn with_init(mut self, init: Vec<i32>) -> Self {
        self.init = init;
        self
    }

    pub fn is_loop_carried(&self) -> bool {
        self.distance > 0
    }
}

/// A structural rule broken by a graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NonDenseId { index: usize, id: NodeId },
    UnknownEndpoint { edge: usize },
    OperandOutOfRange { node: NodeId, slot: u8 },
    DuplicateOperand { node: NodeId, slot: u8 },
    MissingOperand { node: NodeId, slot: u8 },
    InitLength { edge: usize, expected: usize, found: usize },
    ZeroDistanceCycle(Vec<NodeId>),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonDenseId { index, id } => {
                write!(f, "non-dense-id(index={index}, id={id})")
            }
            Violation::UnknownEndpoint { edge } => write!(f, "unknown-endpoint(edge={edge})"),
            Violation::OperandOutOfRange { node, slot } => {
                write!(f, "operand-out-of-range(node={node}, slot={slot})")
            }
            Violation::DuplicateOperand { node, slot } => {
                write!(f, "duplicate-operand(node={node}, slot={slot})")
            }
            Violation::MissingOperand { node, slot } => {
                write!(f, "missing-operand(node={node}, slot={slot})")
            }
            Violation::InitLength { edge, expected, found } => {
                write!(f, "init-length(edge={edge}, expected={expected}, found={found})")
            }
            Violation::ZeroDistanceCycle(nodes) => write!(f, "zero-distance-cycle({nodes:?})"),
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum DfgError {
    #[error("duplicate node id {0}")]
    DuplicateNode(u64),
    #[error("edge {src}->{dst} references unknown node {missing}")]
    UnknownNode { src: u64, dst: u64, missing: u64 },
    #[error("initial values given for edge {src}->{dst} operand {operand}, which does not exist")]
    UnknownInitEdge { src: u64, dst: u64, operand: u8 },
    #[error("invalid graph: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> alloc::string::String {
    use core::fmt::Write;
    let mut s = alloc::string::String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{x}");
    }
    s
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataFlowGraph {
    nodes: Vec<DfgNode>,
    edges: Vec<DfgEdge>,
    fanin: Vec<Vec<usize>>,
    fanout: Vec<Vec<usize>>,
}

impl DataFlowGraph {
    /// Builds a graph and rejects it unless [`DataFlowGraph::validate`] is empty.
    pub fn new(nodes: Vec<DfgNode>, edges: Vec<DfgEdge>) -> Result<Self, DfgError> {
        let g = Self::new_unchecked(nodes, edges);
        let violations = g.validate();
        if violations.is_empty() {
            Ok(g)
        } else {
            Err(DfgError::Invalid(violations))
        }
    }

    /// Builds a graph without structural checks. Edges whose endpoints are out
    /// of range are kept but left out of the adjacency lists.
    pub fn new_unchecked(nodes: Vec<DfgNode>, edges: Vec<DfgEdge>) -> Self {
        let n = nodes.len();
        let mut fanin = alloc::vec![Vec::new(); n];
        let mut fanout = alloc::vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            if e.src < n && e.dst < n {
                fanout[e.src].push(i);
                fanin[e.dst].push(i);
            }
        }
        DataFlowGraph { nodes, edges, fanin, fanout }
    }

    pub fn nodes(&self) -> &[DfgNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[DfgEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn op(&self, n: NodeId) -> OpKind {
        self.nodes[n].op
    }

    /// Indices of edges entering `n`.
    pub fn fanin(&self, n: NodeId) -> &[usize] {
        &self.fanin[n]
    }

    /// Indices of edges leaving `n`.
    pub fn fanout(&self, n: NodeId) -> &[usize] {
        &self.fanout[n]
    }

    pub fn max_distance(&self) -> u32 {
        self.edges.iter().map(|e| e.distance).max().unwrap_or(0)
    }

    /// Topological order of the distance-0 subgraph (ties broken by id), or
    /// `None` if it has a cycle.
    pub fn topo_order(&self) -> Option<Vec<NodeId>> {
        let n = self.nodes.len();
        let mut indeg = alloc::vec![0usize; n];
        for e in self.intra_edges() {
            indeg[e.dst] += 1;
        }
        let mut ready: BTreeSet<NodeId> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = ready.pop_first() {
            order.push(u);
            for &ei in &self.fanout[u] {
                let e = &self.edges[ei];
                if e.distance == 0 {
                    indeg[e.dst] -= 1;
                    if indeg[e.dst] == 0 {
                        ready.insert(e.dst);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Distance-0 edges with in-range endpoints.
    pub fn intra_edges(&self) -> impl Iterator<Item = &DfgEdge> + '_ {
        let n = self.nodes.len();
        self.edges.iter().filter(move |e| e.distance == 0 && e.src < n && e.dst < n)
    }

    /// Every broken structural rule, ordered by kind and then by id.
    pub fn validate(&self) -> Vec<Violation> {
        let n = self.nodes.len();
        let mut out = Vec::new();
        for (index, node) in self.nodes.iter().enumerate() {
            if node.id != index {
                out.push(Violation::NonDenseId { index, id: node.id });
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                out.push(Violation::UnknownEndpoint { edge: i });
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            let expected = e.distance as usize;
            let declared_ok = e.init.is_empty() && e.distance > 0;
            if !declared_ok && e.init.len() != expected {
                out.push(Violation::InitLength { edge: i, expected, found: e.init.len() });
            }
        }
        for v in 0..n {
            let arity = self.nodes[v].op.arity();
            let mut fed = BTreeMap::<u8, usize>::new();
            for &ei in &self.fanin[v] {
                *fed.entry(self.edges[ei].operand).or_default() += 1;
            }
            for (&slot, &count) in &fed {
                if slot as usize >= arity {
                    out.push(Violation::OperandOutOfRange { node: v, slot });
                } else if count > 1 {
                    out.push(Violation::DuplicateOperand { node: v, slot });
                }
            }
            for slot in 0..arity as u8 {
                if !fed.contains_key(&slot) {
                    out.push(Violation::MissingOperand { node: v, slot });
                }
            }
        }
        out.extend(self.zero_distance_cycles().into_iter().map(Violation::ZeroDistanceCycle));
        out
    }

    /// Strongly connected groups of the distance-0 subgraph that contain a
    /// cycle, each sorted, ordered by smallest member.
    fn zero_distance_cycles(&self) -> Vec<Vec<NodeId>> {
        let n = self.nodes.len();
        // Peel off nodes that cannot be on a cycle (no remaining in- or out-edges).
        let mut alive = alloc::vec![true; n];
        loop {
            let mut changed = false;
            for v in 0..n {
                if !alive[v] {
                    continue;
                }
                let has_in = self.intra_edges().any(|e| e.dst == v && alive[e.src]);
                let has_out = self.intra_edges().any(|e| e.src == v && alive[e.dst]);
                if !has_in || !has_out {
                    alive[v] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let reach = |from: NodeId| -> Vec<bool> {
            let mut seen = alloc::vec![false; n];
            let mut stack = alloc::vec![from];
            while let Some(u) = stack.pop() {
                for &ei in &self.fanout[u] {
                    let e = &self.edges[ei];
                    if e.distance == 0 && alive[e.dst] && !seen[e.dst] {
                        seen[e.dst] = true;
                        stack.push(e.dst);
                    }
                }
            }
            seen
        };
        let reachable: Vec<Vec<bool>> = (0..n).map(|v| if alive[v] { reach(v) } else { Vec::new() }).collect();
        let mut assigned = alloc::vec![false; n];
        let mut groups = Vec::new();
        for v in 0..n {
            if !alive[v] || assigned[v] || !reachable[v][v] {
                continue;
            }
            let group: Vec<NodeId> = (v..n).filter(|&w| alive[w] && reachable[v][w] && reachable[w][v]).collect();
            for &w in &group {
                assigned[w] = true;
            }
            groups.push(group);
        }
        groups
    }
}

/// Collects nodes and edges under arbitrary unique ids and normalizes them to
/// dense ids `0..N` (ascending order of the original ids).
#[derive(Clone, Debug, Default)]
pub struct DfgBuilder {
    nodes: Vec<(u64, OpKind)>,
    edges: Vec<(u64, u64, u8, u32)>,
    inits: Vec<((u64, u64, u8), Vec<i32>)>,
}

impl DfgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, id: u64, op: OpKind) -> &mut Self {
        self.nodes.push((id, op));
        self
    }

    /// Adds a node with the next free id and returns that id.
    pub fn push(&mut self, op: OpKind) -> u64 {
        let id = self.nodes.iter().map(|&(id, _)| id + 1).max().unwrap_or(0);
        self.nodes.push((id, op));
        id
    }

    pub fn edge(&mut self, src: u64, dst: u64, operand: u8, distance: u32) -> &mut Self {
        self.edges.push((src, dst, operand, distance));
        self
    }

    pub fn init(&mut self, src: u64, dst: u64, operand: u8, values: Vec<i32>) -> &mut Self {
        self.inits.push(((src, dst, operand), values));
        self
    }

    pub fn build(&self) -> Result<DataFlowGraph, DfgError> {
        let mut ids: Vec<(u64, OpKind)> = self.nodes.clone();
        ids.sort_by_key(|&(id, _)| id);
        for w in ids.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(DfgError::DuplicateNode(w[0].0));
            }
        }
        let index: BTreeMap<u64, NodeId> = ids.iter().enumerate().map(|(i, &(id, _))| (id, i)).collect();
        let nodes = ids.iter().enumerate().map(|(id, &(_, op))| DfgNode { id, op }).collect();
        let mut edges = Vec::with_capacity(self.edges.len());
        for &(src, dst, operand, distance) in &self.edges {
            let lookup = |x: u64| index.get(&x).copied().ok_or(DfgError::UnknownNode { src, dst, missing: x });
            edges.push(DfgEdge::new(lookup(src)?, lookup(dst)?, operand, distance));
        }
        for ((src, dst, operand), values) in &self.inits {
            let target = self.edges.iter().position(|&(s, d, o, _)| (s, d, o) == (*src, *dst, *operand));
            match target {
                Some(i) => edges[i].init = values.clone(),
                None => return Err(DfgError::UnknownInitEdge { src: *src, dst: *dst, operand: *operand }),
            }
        }
        DataFlowGraph::new(nodes, edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn minimal() -> DfgBuilder {
        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(0)).node(1, OpKind::Const(1)).node(2, OpKind::Add).node(3, OpKind::Output(0));
        b.edge(1, 2, 1, 0).edge(2, 3, 0, 0);
        b
    }

    #[test]
    fn minimal_loop_builds() {
        let mut b = minimal();
        b.edge(0, 2, 0, 0);
        let g = b.build().unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edges().len(), 3);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn loop_carried_self_edge_is_legal() {
        let mut b = minimal();
        b.edge(2, 2, 0, 1).init(2, 2, 0, vec![0]);
        let g = b.build().unwrap();
        assert_eq!(g.max_distance(), 1);
    }

    #[test]
    fn zero_distance_cycle_rejected() {
        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(0)).node(2, OpKind::Add).node(3, OpKind::Add);
        b.edge(0, 2, 0, 0).edge(3, 2, 1, 0).edge(2, 3, 0, 0).edge(0, 3, 1, 0);
        match b.build() {
            Err(DfgError::Invalid(v)) => assert_eq!(v, vec![Violation::ZeroDistanceCycle(vec![1, 2])]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_operand_reported() {
        let g = DataFlowGraph::new_unchecked(
            vec![
                DfgNode { id: 0, op: OpKind::Input(0) },
                DfgNode { id: 1, op: OpKind::Const(1) },
                DfgNode { id: 2, op: OpKind::Add },
                DfgNode { id: 3, op: OpKind::Output(0) },
            ],
            vec![DfgEdge::new(0, 2, 0, 0), DfgEdge::new(2, 3, 0, 0)],
        );
        assert_eq!(g.validate(), vec![Violation::MissingOperand { node: 2, slot: 1 }]);
    }

    #[test]
    fn builder_errors() {
        let mut b = DfgBuilder::new();
        b.node(5, OpKind::Input(0)).node(5, OpKind::Const(0));
        assert_eq!(b.build(), Err(DfgError::DuplicateNode(5)));

        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(0)).node(1, OpKind::Output(0)).edge(0, 9, 0, 0);
        assert!(matches!(b.build(), Err(DfgError::UnknownNode { missing: 9, .. })));

        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(0)).node(1, OpKind::Output(0));
        b.edge(0, 1, 0, 0).edge(0, 1, 0, 0);
        assert_eq!(b.build(), Err(DfgError::Invalid(vec![Violation::DuplicateOperand { node: 1, slot: 0 }])));
    }

    #[test]
    fn ids_are_normalized() {
        let mut b = DfgBuilder::new();
        b.node(40, OpKind::Output(0)).node(7, OpKind::Input(0)).edge(7, 40, 0, 0);
        let g = b.build().unwrap();
        assert_eq!(g.op(0), OpKind::Input(0));
        assert_eq!(g.edges()[0].src, 0);
        assert_eq!(g.edges()[0].dst, 1);
    }

    #[test]
    fn init_length_checked() {
        let mut b = minimal();
        b.edge(2, 2, 0, 2).init(2, 2, 0, vec![1]);
        assert!(matches!(
            b.build(),
            Err(DfgError::Invalid(v)) if v == vec![Violation::InitLength { edge: 2, expected: 2, found: 1 }]
        ));
    }

    #[test]
    fn shifts_wrap() {
        assert_eq!(OpKind::Shl.apply(1, 33), 2);
        assert_eq!(OpKind::Shr.apply(-1, 28), 0xf);
        assert_eq!(OpKind::Add.apply(i32::MAX, 1), i32::MIN);
    }
}
