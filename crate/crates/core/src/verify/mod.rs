//! Checks that do not go through the CNF encoding: a direct rule checker for
//! mappings, a cycle-level simulator, a reference interpreter, and an
//! exhaustive minimal-interval search.

mod oracle;
mod sim;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

pub use crate::mapping::{fingerprint, Mapping, Placement};
pub use oracle::{brute_force_min_ii, find_mapping_at, OracleConfig, OracleError, DEFAULT_ORACLE_CAP};
pub use sim::{interpret, simulate, Phase, SimError, SimTrace, Streams};

use crate::arch::{CgraArchitecture, PeId};
use crate::dfg::{DataFlowGraph, NodeId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MappingViolation {
    Unassigned(NodeId),
    UnknownNode(NodeId),
    OutOfRange { node: NodeId },
    Occupancy { pe: PeId, slot: u32, nodes: Vec<NodeId> },
    Adjacency { src: NodeId, dst: NodeId },
    Timing { src: NodeId, dst: NodeId, distance: u32 },
}

impl fmt::Display for MappingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MappingViolation::Unassigned(n) => write!(f, "unassigned(node={n})"),
            MappingViolation::UnknownNode(n) => write!(f, "unknown-node({n})"),
            MappingViolation::OutOfRange { node } => write!(f, "out-of-range(node={node})"),
            MappingViolation::Occupancy { pe, slot, nodes } => {
                write!(f, "occupancy(pe={pe}, slot={slot}, nodes={nodes:?})")
            }
            MappingViolation::Adjacency { src, dst } => write!(f, "adjacency({src},{dst})"),
            MappingViolation::Timing { src, dst, distance } => {
                write!(f, "timing({src},{dst}, distance={distance})")
            }
        }
    }
}

/// Every placement, exclusivity, adjacency and timing rule `m` breaks.
pub fn check_mapping(g: &DataFlowGraph, arch: &CgraArchitecture, m: &Mapping) -> Vec<MappingViolation> {
    let ii = m.ii();
    let n = g.node_count();
    let mut out = Vec::new();
    for node in 0..n {
        if m.get(node).is_none() {
            out.push(MappingViolation::Unassigned(node));
        }
    }
    let mut occupancy: BTreeMap<(PeId, u32), Vec<NodeId>> = BTreeMap::new();
    for (node, p) in m.iter() {
        if node >= n {
            out.push(MappingViolation::UnknownNode(node));
        } else if ii == 0 || p.pe >= arch.pe_count() || p.slot >= ii {
            out.push(MappingViolation::OutOfRange { node });
        } else {
            occupancy.entry((p.pe, p.slot)).or_default().push(node);
        }
    }
    for ((pe, slot), nodes) in occupancy {
        if nodes.len() > 1 {
            out.push(MappingViolation::Occupancy { pe, slot, nodes });
        }
    }
    let placed = |x: NodeId| m.get(x).filter(|p| x < n && ii > 0 && p.pe < arch.pe_count() && p.slot < ii);
    for e in g.edges() {
        let (Some(pu), Some(pv)) = (placed(e.src), placed(e.dst)) else {
            continue;
        };
        if !arch.reaches(pu.pe, pv.pe) {
            out.push(MappingViolation::Adjacency { src: e.src, dst: e.dst });
        }
        if pv.time(ii) + e.distance * ii <= pu.time(ii) {
            out.push(MappingViolation::Timing { src: e.src, dst: e.dst, distance: e.distance });
        }
    }
    out
}
