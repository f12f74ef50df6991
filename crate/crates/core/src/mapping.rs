//! Space-time mappings: where and when each node of a loop body issues.

use alloc::collections::BTreeMap;
use core::fmt;

use crate::arch::{CgraArchitecture, PeId};
use crate::dfg::{DataFlowGraph, NodeId, OpKind};
use crate::schedule::SlotLabel;

/// A node's PE, kernel slot and iteration label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Placement {
    pub pe: PeId,
    pub slot: u32,
    pub label: u32,
}

impl Placement {
    pub fn new(pe: PeId, slot: u32, label: u32) -> Self {
        Placement { pe, slot, label }
    }

    pub fn at_time(pe: PeId, t: u32, ii: u32) -> Self {
        let SlotLabel { slot, label } = SlotLabel::from_time(t, ii);
        Placement { pe, slot, label }
    }

    /// Issue cycle of iteration 0.
    pub fn time(&self, ii: u32) -> u32 {
        self.label * ii + self.slot
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mapping {
    ii: u32,
    placements: BTreeMap<NodeId, Placement>,
    fingerprint: u64,
}

impl Mapping {
    pub fn new(ii: u32, fingerprint: u64) -> Self {
        Mapping { ii, placements: BTreeMap::new(), fingerprint }
    }

    pub fn ii(&self) -> u32 {
        self.ii
    }

    /// Hash of the graph and architecture this mapping was produced for.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Places `node`, returning its previous placement.
    pub fn assign(&mut self, node: NodeId, p: Placement) -> Option<Placement> {
        self.placements.insert(node, p)
    }

    pub fn unassign(&mut self, node: NodeId) -> Option<Placement> {
        self.placements.remove(&node)
    }

    pub fn get(&self, node: NodeId) -> Option<Placement> {
        self.placements.get(&node).copied()
    }

    pub fn time(&self, node: NodeId) -> Option<u32> {
        self.get(node).map(|p| p.time(self.ii))
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, Placement)> + '_ {
        self.placements.iter().map(|(&n, &p)| (n, p))
    }

    /// Highest iteration label in use.
    pub fn max_label(&self) -> u32 {
        self.placements.values().map(|p| p.label).max().unwrap_or(0)
    }
}

impl fmt::Display for Mapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ii={}", self.ii)?;
        for (n, p) in self.iter() {
            write!(f, " n{n}=p{}s{}l{}", p.pe, p.slot, p.label)?;
        }
        Ok(())
    }
}

/// 64-bit FNV-1a over a canonical description of the graph and device.
pub fn fingerprint(g: &DataFlowGraph, arch: &CgraArchitecture) -> u64 {
    struct Fnv(u64);
    impl Fnv {
        fn word(&mut self, x: u64) {
            for b in x.to_le_bytes() {
                self.0 ^= u64::from(b);
                self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    let mut h = Fnv(0xcbf2_9ce4_8422_2325);
    h.word(arch.rows() as u64);
    h.word(arch.cols() as u64);
    h.word(arch.topology() as u64);
    h.word(u64::from(arch.registers_per_pe()));
    h.word(g.node_count() as u64);
    for node in g.nodes() {
        let (tag, payload) = match node.op {
            OpKind::Const(v) => (0, v as u32 as u64),
            OpKind::Input(s) => (1, u64::from(s)),
            OpKind::Output(s) => (2, u64::from(s)),
            op => (3 + OpKind::BINARY.iter().position(|&b| b == op).unwrap() as u64, 0),
        };
        h.word(tag);
        h.word(payload);
    }
    for e in g.edges() {
        h.word(e.src as u64);
        h.word(e.dst as u64);
        h.word(u64::from(e.operand));
        h.word(u64::from(e.distance));
    }
    h.0
}
