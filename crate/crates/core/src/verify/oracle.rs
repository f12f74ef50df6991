use alloc::vec::Vec;

use thiserror::Error;

use crate::arch::{CgraArchitecture, PeId};
use crate::dfg::{DataFlowGraph, NodeId};
use crate::mapping::{fingerprint, Mapping, Placement};
use crate::schedule::{build_kms, compute_mii, KernelMobilitySchedule, ScheduleError, SlackPolicy};

pub const DEFAULT_ORACLE_CAP: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleConfig {
    /// Largest graph the search accepts.
    pub cap: usize,
    pub slack: SlackPolicy,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { cap: DEFAULT_ORACLE_CAP, slack: SlackPolicy::Auto }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("graph has {nodes} nodes, exhaustive search is capped at {cap}")]
    TooLarge { nodes: usize, cap: usize },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Exhaustively searches placements over the same candidate space and rules
/// as the CNF encoding, for `ii` from the lower bound up to `ii_max`.
/// Returns the first interval that admits a mapping, with a witness.
pub fn brute_force_min_ii(
    g: &DataFlowGraph,
    arch: &CgraArchitecture,
    ii_max: u32,
    cfg: &OracleConfig,
) -> Result<Option<(u32, Mapping)>, OracleError> {
    if g.node_count() > cfg.cap {
        return Err(OracleError::TooLarge { nodes: g.node_count(), cap: cfg.cap });
    }
    let bounds = compute_mii(g, arch)?;
    for ii in bounds.m_ii..=ii_max {
        let kms = build_kms(g, ii, cfg.slack)?;
        if let Some(m) = find_mapping_at(g, arch, &kms) {
            return Ok(Some((ii, m)));
        }
    }
    Ok(None)
}

/// Dependencies touching a node: (other node, node is producer, distance).
type Links = Vec<Vec<(NodeId, bool, u32)>>;

struct Search<'a> {
    arch: &'a CgraArchitecture,
    kms: &'a KernelMobilitySchedule,
    ii: u32,
    order: Vec<NodeId>,
    links: Links,
    placed: Vec<Option<(PeId, u32)>>,
    busy: Vec<bool>,
    first_pes: Vec<PeId>,
}

/// A witness mapping at exactly `kms.ii()`, if one exists. Applies no size
/// cap; the search is exponential in the node count.
pub fn find_mapping_at(g: &DataFlowGraph, arch: &CgraArchitecture, kms: &KernelMobilitySchedule) -> Option<Mapping> {
    let n = g.node_count();
    let mut links: Links = alloc::vec![Vec::new(); n];
    for e in g.edges() {
        links[e.src].push((e.dst, true, e.distance));
        if e.src != e.dst {
            links[e.dst].push((e.src, false, e.distance));
        }
    }
    let mut s = Search {
        arch,
        kms,
        ii: kms.ii(),
        order: search_order(n, &links),
        links,
        placed: alloc::vec![None; n],
        busy: alloc::vec![false; arch.pe_count() * kms.ii() as usize],
        first_pes: arch.orbit_representatives(),
    };
    if !s.extend(0) {
        return None;
    }
    let mut m = Mapping::new(s.ii, fingerprint(g, arch));
    for (node, p) in s.placed.iter().enumerate() {
        let (pe, t) = p.unwrap();
        m.assign(node, Placement::at_time(pe, t, s.ii));
    }
    Some(m)
}

/// Most-constrained-first: each next node has the most links to nodes
/// already ordered.
fn search_order(n: usize, links: &Links) -> Vec<NodeId> {
    let mut order = Vec::with_capacity(n);
    let mut taken = alloc::vec![false; n];
    for _ in 0..n {
        let next = (0..n)
            .filter(|&v| !taken[v])
            .max_by_key(|&v| {
                let anchored = links[v].iter().filter(|l| taken[l.0]).count();
                (anchored, links[v].len(), core::cmp::Reverse(v))
            })
            .unwrap();
        taken[next] = true;
        order.push(next);
    }
    order
}

impl Search<'_> {
    fn fits(&self, node: NodeId, pe: PeId, t: u32) -> bool {
        let ii = self.ii;
        self.links[node].iter().all(|&(other, is_src, d)| {
            let there = if other == node { Some((pe, t)) } else { self.placed[other] };
            let Some((q, s)) = there else {
                return true;
            };
            let ((pu, tu), (pv, tv)) = if is_src { ((pe, t), (q, s)) } else { ((q, s), (pe, t)) };
            self.arch.reaches(pu, pv) && tv + d * ii > tu
        })
    }

    fn extend(&mut self, depth: usize) -> bool {
        let Some(&node) = self.order.get(depth) else {
            return true;
        };
        let pes: Vec<PeId> = if depth == 0 { self.first_pes.clone() } else { (0..self.arch.pe_count()).collect() };
        for c in self.kms.candidates(node) {
            let t = c.time(self.ii);
            for &pe in &pes {
                let cell = pe * self.ii as usize + c.slot as usize;
                if self.busy[cell] || !self.fits(node, pe, t) {
                    continue;
                }
                self.busy[cell] = true;
                self.placed[node] = Some((pe, t));
                if self.extend(depth + 1) {
                    return true;
                }
                self.placed[node] = None;
                self.busy[cell] = false;
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfg::{DfgBuilder, OpKind};
    use crate::verify::check_mapping;

    #[test]
    fn single_node() {
        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(0));
        let g = b.build().unwrap();
        let a = CgraArchitecture::mesh(1, 1).unwrap();
        let (ii, m) = brute_force_min_ii(&g, &a, 4, &OracleConfig::default()).unwrap().unwrap();
        assert_eq!(ii, 1);
        assert_eq!(m.get(0), Some(Placement::new(0, 0, 0)));
    }

    #[test]
    fn independent_nodes_hit_resource_bound() {
        let mut b = DfgBuilder::new();
        for s in 0..5 {
            b.push(OpKind::Input(s));
        }
        let g = b.build().unwrap();
        let a = CgraArchitecture::mesh(2, 2).unwrap();
        let (ii, m) = brute_force_min_ii(&g, &a, 4, &OracleConfig::default()).unwrap().unwrap();
        assert_eq!(ii, 2);
        assert!(check_mapping(&g, &a, &m).is_empty());
    }

    #[test]
    fn chain_on_one_pe_needs_two_slots() {
        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(0)).node(1, OpKind::Output(0)).edge(0, 1, 0, 0);
        let g = b.build().unwrap();
        let a = CgraArchitecture::mesh(1, 1).unwrap();
        let kms = build_kms(&g, 1, SlackPolicy::Auto).unwrap();
        assert!(find_mapping_at(&g, &a, &kms).is_none());
        let (ii, _) = brute_force_min_ii(&g, &a, 4, &OracleConfig::default()).unwrap().unwrap();
        assert_eq!(ii, 2);
    }

    #[test]
    fn cap_enforced() {
        let mut b = DfgBuilder::new();
        for s in 0..9 {
            b.push(OpKind::Input(s));
        }
        let g = b.build().unwrap();
        let a = CgraArchitecture::mesh(2, 2).unwrap();
        assert_eq!(
            brute_force_min_ii(&g, &a, 4, &OracleConfig::default()),
            Err(OracleError::TooLarge { nodes: 9, cap: 8 })
        );
    }
}
