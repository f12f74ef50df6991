//! Mobility schedules and their modulo fold.
//!
//! The mobility schedule gives every node the window `[asap, alap]` of cycles
//! it may issue in, computed from distance-0 edges only. Folding it at an
//! initiation interval `ii` turns each cycle `t` into the pair
//! `(t mod ii, t / ii)`: the kernel slot and the iteration label.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::arch::CgraArchitecture;
use crate::dfg::{DataFlowGraph, NodeId};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("horizon {horizon} is shorter than the critical path ({critical_path} cycles)")]
    HorizonTooSmall { horizon: u32, critical_path: u32 },
    #[error("graph has a dependency cycle whose total distance is zero")]
    ZeroDistanceCycle,
    #[error("initiation interval must be positive")]
    ZeroIi,
}

/// Earliest issue cycle per node.
pub fn compute_asap(g: &DataFlowGraph) -> Result<Vec<u32>, ScheduleError> {
    let order = g.topo_order().ok_or(ScheduleError::ZeroDistanceCycle)?;
    let mut asap = alloc::vec![0u32; g.node_count()];
    for u in order {
        for &ei in g.fanout(u) {
            let e = &g.edges()[ei];
            if e.distance == 0 {
                asap[e.dst] = asap[e.dst].max(asap[u] + 1);
            }
        }
    }
    Ok(asap)
}

/// Number of cycles the longest distance-0 chain needs.
pub fn critical_path_length(g: &DataFlowGraph) -> Result<u32, ScheduleError> {
    Ok(compute_asap(g)?.into_iter().max().map_or(0, |m| m + 1))
}

/// Latest issue cycle per node when everything must finish within `horizon` cycles.
pub fn compute_alap(g: &DataFlowGraph, horizon: u32) -> Result<Vec<u32>, ScheduleError> {
    let order = g.topo_order().ok_or(ScheduleError::ZeroDistanceCycle)?;
    let critical_path = critical_path_length(g)?;
    if horizon < critical_path || horizon == 0 {
        return Err(ScheduleError::HorizonTooSmall { horizon, critical_path });
    }
    let mut alap = alloc::vec![horizon - 1; g.node_count()];
    for &v in order.iter().rev() {
        for &ei in g.fanin(v) {
            let e = &g.edges()[ei];
            if e.distance == 0 {
                alap[e.src] = alap[e.src].min(alap[v] - 1);
            }
        }
    }
    Ok(alap)
}

/// Resource bound: every node needs one issue slot on some PE.
pub fn compute_res_ii(node_count: usize, arch: &CgraArchitecture) -> u32 {
    (node_count.div_ceil(arch.pe_count()) as u32).max(1)
}

/// Recurrence bound: the smallest `ii` for which no dependency cycle needs
/// more than `ii * distance` cycles, i.e. the graph weighted by
/// `1 - ii * distance` per edge has no positive cycle.
pub fn compute_rec_ii(g: &DataFlowGraph) -> Result<u32, ScheduleError> {
    // An elementary cycle has at most N edges and distance >= 1, so N always suffices.
    let limit = g.node_count().max(1) as u32;
    (1..=limit).find(|&ii| !has_positive_cycle(g, ii)).ok_or(ScheduleError::ZeroDistanceCycle)
}

fn has_positive_cycle(g: &DataFlowGraph, ii: u32) -> bool {
    let n = g.node_count();
    let mut dist = alloc::vec![0i64; n];
    for _ in 0..=n {
        let mut changed = false;
        for e in g.edges() {
            let w = 1 - i64::from(ii) * i64::from(e.distance);
            if dist[e.src] + w > dist[e.dst] {
                dist[e.dst] = dist[e.src] + w;
                changed = true;
            }
        }
        if !changed {
            return false;
        }
    }
    true
}

/// The lower bounds on the initiation interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IiBounds {
    pub res_ii: u32,
    pub rec_ii: u32,
    pub m_ii: u32,
}

pub fn compute_mii(g: &DataFlowGraph, arch: &CgraArchitecture) -> Result<IiBounds, ScheduleError> {
    let res_ii = compute_res_ii(g.node_count(), arch);
    let rec_ii = compute_rec_ii(g)?;
    Ok(IiBounds { res_ii, rec_ii, m_ii: res_ii.max(rec_ii) })
}

impl fmt::Display for IiBounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "res_ii={} rec_ii={} m_ii={}", self.res_ii, self.rec_ii, self.m_ii)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MobilitySchedule {
    horizon: u32,
    windows: Vec<(u32, u32)>,
}

impl MobilitySchedule {
    /// Horizon is the critical path plus `extra_slack` cycles.
    pub fn build(g: &DataFlowGraph, extra_slack: u32) -> Result<Self, ScheduleError> {
        let horizon = critical_path_length(g)?.max(1) + extra_slack;
        let asap = compute_asap(g)?;
        let alap = compute_alap(g, horizon)?;
        Ok(MobilitySchedule { horizon, windows: asap.into_iter().zip(alap).collect() })
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    /// Inclusive `(asap, alap)` window of `n`.
    pub fn window(&self, n: NodeId) -> (u32, u32) {
        self.windows[n]
    }

    pub fn windows(&self) -> &[(u32, u32)] {
        &self.windows
    }

    pub fn fold(&self, ii: u32) -> Result<KernelMobilitySchedule, ScheduleError> {
        KernelMobilitySchedule::build(self, ii)
    }
}

/// Extra cycles added to the critical path when building the mobility
/// schedule for a candidate interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SlackPolicy {
    /// `ii - 1`: every node can reach each kernel slot at least once.
    #[default]
    Auto,
    Fixed(u32),
}

impl SlackPolicy {
    pub fn slack_for(self, ii: u32) -> u32 {
        match self {
            SlackPolicy::Auto => ii.saturating_sub(1),
            SlackPolicy::Fixed(n) => n,
        }
    }
}

/// Mobility schedule folded at `ii` with the slack `policy` picks for it.
pub fn build_kms(g: &DataFlowGraph, ii: u32, policy: SlackPolicy) -> Result<KernelMobilitySchedule, ScheduleError> {
    MobilitySchedule::build(g, policy.slack_for(ii))?.fold(ii)
}

/// A kernel slot and the iteration label a node instance carries there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotLabel {
    pub slot: u32,
    pub label: u32,
}

impl SlotLabel {
    pub fn time(self, ii: u32) -> u32 {
        self.label * ii + self.slot
    }

    pub fn from_time(t: u32, ii: u32) -> Self {
        SlotLabel { slot: t % ii, label: t / ii }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelMobilitySchedule {
    ii: u32,
    horizon: u32,
    candidates: Vec<Vec<SlotLabel>>,
    max_label: u32,
}

impl KernelMobilitySchedule {
    pub fn build(ms: &MobilitySchedule, ii: u32) -> Result<Self, ScheduleError> {
        if ii == 0 {
            return Err(ScheduleError::ZeroIi);
        }
        // Times ascend, so candidates come out ordered by label then slot.
        let candidates =
            ms.windows.iter().map(|&(lo, hi)| (lo..=hi).map(|t| SlotLabel::from_time(t, ii)).collect()).collect();
        Ok(KernelMobilitySchedule { ii, horizon: ms.horizon, candidates, max_label: ms.horizon.div_ceil(ii) - 1 })
    }

    /// A schedule with explicit candidate lists, each ordered by label then slot.
    pub fn from_candidates(ii: u32, horizon: u32, candidates: Vec<Vec<SlotLabel>>) -> Self {
        let max_label = candidates.iter().flatten().map(|c| c.label).max().unwrap_or(0);
        KernelMobilitySchedule { ii, horizon, candidates, max_label }
    }

    pub fn ii(&self) -> u32 {
        self.ii
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn max_label(&self) -> u32 {
        self.max_label
    }

    pub fn node_count(&self) -> usize {
        self.candidates.len()
    }

    /// Candidates of `n`, ordered by label then slot.
    pub fn candidates(&self, n: NodeId) -> &[SlotLabel] {
        &self.candidates[n]
    }
}

/// Table with one row per kernel slot and one column per iteration label,
/// listing the nodes that may issue there.
impl fmt::Display for KernelMobilitySchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# kms ii={} horizon={} max_label={}", self.ii, self.horizon, self.max_label)?;
        for slot in 0..self.ii {
            write!(f, "slot {slot}:")?;
            for label in 0..=self.max_label {
                let here = SlotLabel { slot, label };
                write!(f, " |")?;
                for (n, c) in self.candidates.iter().enumerate() {
                    if c.contains(&here) {
                        write!(f, " {n}@{label}")?;
                    }
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
