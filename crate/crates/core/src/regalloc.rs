//! Register pressure of a modulo schedule.
//!
//! A value stays in its producer PE's register file from the cycle it is
//! produced until its last read; consumers on neighbouring PEs read it there.
//! In steady state a new instance of every value is born each `ii` cycles, so
//! a value living longer than `ii` overlaps with its own later instances. The
//! check counts live instances per (PE, kernel slot) and compares them with
//! the register file size.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::arch::{CgraArchitecture, PeId};
use crate::dfg::{DataFlowGraph, NodeId};
use crate::mapping::Mapping;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValueLifetime {
    pub producer: NodeId,
    pub pe: PeId,
    /// Cycle the iteration-0 instance is produced.
    pub birth: u32,
    /// Cycle of its last read; equal to `birth` when nothing reads it.
    pub death: u32,
}

impl ValueLifetime {
    pub fn span(&self) -> u32 {
        self.death - self.birth
    }

    /// Instances of this value held in registers at kernel slot `slot`, i.e.
    /// the number of `k >= 0` with `birth + k*ii <= T < death + k*ii` for a
    /// steady-state cycle `T` congruent to `slot`.
    pub fn live_instances(&self, slot: u32, ii: u32) -> u32 {
        let offset = (slot + ii - self.birth % ii) % ii;
        let span = self.span();
        if span > offset {
            (span - 1 - offset) / ii + 1
        } else {
            0
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum RegallocError {
    #[error("mapping does not place node {0}")]
    Unplaced(NodeId),
}

/// One lifetime per node, in node order. Nodes without consumers get span 0.
pub fn compute_lifetimes(g: &DataFlowGraph, m: &Mapping) -> Result<Vec<ValueLifetime>, RegallocError> {
    let ii = m.ii();
    let time = |n: NodeId| m.time(n).ok_or(RegallocError::Unplaced(n));
    (0..g.node_count())
        .map(|u| {
            let birth = time(u)?;
            let mut death = birth;
            for &ei in g.fanout(u) {
                let e = &g.edges()[ei];
                death = death.max(time(e.dst)? + e.distance * ii);
            }
            Ok(ValueLifetime { producer: u, pe: m.get(u).unwrap().pe, birth, death })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PressureViolation {
    pub pe: PeId,
    pub slot: u32,
    pub pressure: u32,
    pub capacity: u32,
}

impl fmt::Display for PressureViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pe {} slot {}: {} live values, {} registers", self.pe, self.slot, self.pressure, self.capacity)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PressureReport {
    pub ok: bool,
    pub ii: u32,
    pub capacity: u32,
    /// `pressure[pe][slot]`.
    pub pressure: Vec<Vec<u32>>,
    pub violations: Vec<PressureViolation>,
}

impl PressureReport {
    pub fn max_pressure(&self) -> u32 {
        self.pressure.iter().flatten().copied().max().unwrap_or(0)
    }
}

pub fn check_register_pressure(lifetimes: &[ValueLifetime], arch: &CgraArchitecture, ii: u32) -> PressureReport {
    let capacity = arch.registers_per_pe();
    let mut pressure = alloc::vec![alloc::vec![0u32; ii as usize]; arch.pe_count()];
    for l in lifetimes {
        for slot in 0..ii {
            pressure[l.pe][slot as usize] += l.live_instances(slot, ii);
        }
    }
    let mut violations = Vec::new();
    for (pe, row) in pressure.iter().enumerate() {
        for (slot, &p) in row.iter().enumerate() {
            if p > capacity {
                violations.push(PressureViolation { pe, slot: slot as u32, pressure: p, capacity });
            }
        }
    }
    PressureReport { ok: violations.is_empty(), ii, capacity, pressure, violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfg::{DfgBuilder, OpKind};
    use crate::mapping::Placement;
    use alloc::vec;

    fn lt(pe: PeId, birth: u32, death: u32) -> ValueLifetime {
        ValueLifetime { producer: 0, pe, birth, death }
    }

    #[test]
    fn closed_form_examples() {
        let a = CgraArchitecture::mesh(1, 1).unwrap();
        let r = check_register_pressure(&[lt(0, 4, 5)], &a, 3);
        assert_eq!(r.pressure[0], vec![0, 1, 0]);
        assert!(r.ok);

        // Unrolling 6 instances born at 1, 3, 5, ... each live for 5 cycles:
        // at an odd cycle three are live, at an even cycle two.
        let l = lt(0, 1, 6);
        assert_eq!(l.live_instances(1, 2), 3);
        assert_eq!(l.live_instances(0, 2), 2);

        let a = CgraArchitecture::mesh(1, 1).unwrap().with_registers(1).unwrap();
        let r = check_register_pressure(&[lt(0, 0, 1), lt(0, 2, 3)], &a, 2);
        assert!(!r.ok);
        assert_eq!(r.violations, vec![PressureViolation { pe: 0, slot: 0, pressure: 2, capacity: 1 }]);
    }

    #[test]
    fn lifetimes_from_mapping() {
        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(0)).node(1, OpKind::Add).node(2, OpKind::Output(0));
        b.edge(0, 1, 0, 0).edge(1, 1, 1, 1).edge(1, 2, 0, 0).init(1, 1, 1, vec![0]);
        let g = b.build().unwrap();
        let mut m = Mapping::new(2, 0);
        m.assign(0, Placement::at_time(0, 0, 2));
        m.assign(1, Placement::at_time(0, 1, 2));
        m.assign(2, Placement::at_time(0, 2, 2));
        let l = compute_lifetimes(&g, &m).unwrap();
        assert_eq!((l[0].birth, l[0].death, l[0].span()), (0, 1, 1));
        // Self edge at distance 1: read again at 1 + 2.
        assert_eq!((l[1].birth, l[1].death, l[1].span()), (1, 3, 2));
        assert_eq!(l[2].span(), 0);

        m.unassign(2);
        assert_eq!(compute_lifetimes(&g, &m), Err(RegallocError::Unplaced(2)));
    }
}
