use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use super::{check_mapping, MappingViolation};
use crate::arch::{CgraArchitecture, PeId};
use crate::dfg::{DataFlowGraph, NodeId, OpKind};
use crate::mapping::Mapping;
use crate::regalloc::compute_lifetimes;

/// Values per stream id, one per iteration.
pub type Streams = BTreeMap<u32, Vec<i32>>;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("iteration count must be positive")]
    ZeroIterations,
    #[error("mapping breaks {} rule(s), first: {}", .0.len(), .0[0])]
    InvalidMapping(Vec<MappingViolation>),
    #[error("input stream {stream} has {found} values, {needed} needed")]
    InputTooShort { stream: u32, needed: usize, found: usize },
    #[error("edge {src}->{dst} (operand {operand}) has distance {distance} but {found} initial values")]
    MissingInit { src: NodeId, dst: NodeId, operand: u8, distance: u32, found: usize },
    #[error("output stream {0} is written by more than one node")]
    DuplicateOutputStream(u32),
    #[error("distance-0 dependencies form a cycle")]
    CyclicGraph,
    #[error("no free register on PE {pe} at cycle {cycle}")]
    RegisterOverflow { pe: PeId, cycle: u32 },
    #[error("value of node {node} iteration {iteration} was gone when read at cycle {cycle}")]
    ValueLost { node: NodeId, iteration: u32, cycle: u32 },
}

fn check_io(g: &DataFlowGraph, iterations: u32, inputs: &Streams) -> Result<(), SimError> {
    if iterations == 0 {
        return Err(SimError::ZeroIterations);
    }
    let mut outputs = alloc::collections::BTreeSet::new();
    for node in g.nodes() {
        match node.op {
            OpKind::Input(s) => {
                let found = inputs.get(&s).map_or(0, Vec::len);
                if found < iterations as usize {
                    return Err(SimError::InputTooShort { stream: s, needed: iterations as usize, found });
                }
            }
            OpKind::Output(s) if !outputs.insert(s) => {
                return Err(SimError::DuplicateOutputStream(s));
            }
            _ => {}
        }
    }
    for e in g.edges() {
        if e.init.len() != e.distance as usize {
            return Err(SimError::MissingInit {
                src: e.src,
                dst: e.dst,
                operand: e.operand,
                distance: e.distance,
                found: e.init.len(),
            });
        }
    }
    Ok(())
}

fn output_streams(g: &DataFlowGraph) -> Streams {
    g.nodes()
        .iter()
        .filter_map(|n| match n.op {
            OpKind::Output(s) => Some((s, Vec::new())),
            _ => None,
        })
        .collect()
}

fn fire(op: OpKind, operands: &[i32], iteration: u32, inputs: &Streams, outputs: &mut Streams) -> i32 {
    match op {
        OpKind::Const(v) => v,
        OpKind::Input(s) => inputs[&s][iteration as usize],
        OpKind::Output(s) => {
            outputs.get_mut(&s).unwrap().push(operands[0]);
            operands[0]
        }
        op => op.apply(operands[0], operands[1]),
    }
}

/// Runs the loop body iteration by iteration in dependency order, ignoring
/// any mapping. Reference semantics for [`simulate`].
pub fn interpret(g: &DataFlowGraph, iterations: u32, inputs: &Streams) -> Result<Streams, SimError> {
    check_io(g, iterations, inputs)?;
    let order = g.topo_order().ok_or(SimError::CyclicGraph)?;
    let window = g.max_distance() as usize + 1;
    let mut history = alloc::vec![alloc::vec![0i32; window]; g.node_count()];
    let mut outputs = output_streams(g);
    let mut operands = [0i32; 2];
    for i in 0..iterations {
        for &n in &order {
            for &ei in g.fanin(n) {
                let e = &g.edges()[ei];
                let d = e.distance;
                operands[e.operand as usize] =
                    if i < d { e.init[i as usize] } else { history[e.src][(i - d) as usize % window] };
            }
            history[n][i as usize % window] = fire(g.op(n), &operands, i, inputs, &mut outputs);
        }
    }
    Ok(outputs)
}

/// Where a cycle falls in the software-pipelined execution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Prologue,
    Kernel,
    Epilogue,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Prologue => "prologue",
            Phase::Kernel => "kernel",
            Phase::Epilogue => "epilogue",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimTrace {
    pub outputs: Streams,
    pub cycles: u32,
    pub ii: u32,
    pub iterations: u32,
    pub max_label: u32,
    pub rows: usize,
    pub cols: usize,
    /// `activity[cycle][pe]`: the (node, iteration) instance issued there.
    pub activity: Vec<Vec<Option<(NodeId, u32)>>>,
    /// Largest number of occupied registers seen on any PE.
    pub peak_registers: u32,
}

impl SimTrace {
    /// Kernel cycles are those where every iteration label has an active iteration.
    pub fn phase(&self, cycle: u32) -> Phase {
        let stage = cycle / self.ii;
        if stage < self.max_label && stage < self.iterations {
            Phase::Prologue
        } else if stage >= self.iterations {
            Phase::Epilogue
        } else {
            Phase::Kernel
        }
    }
}

impl fmt::Display for SimTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "# one block per cycle; rows x cols = {} x {} PEs in row-major order; cell = node id issued, '.' = idle",
            self.rows, self.cols
        )?;
        for (cycle, row) in self.activity.iter().enumerate() {
            writeln!(f, "cycle {cycle} [{}]", self.phase(cycle as u32).tag())?;
            for r in 0..self.rows {
                let cells: Vec<alloc::string::String> = (0..self.cols)
                    .map(|c| match row[r * self.cols + c] {
                        Some((n, _)) => alloc::format!("{n:>3}"),
                        None => alloc::format!("{:>3}", "."),
                    })
                    .collect();
                writeln!(f, "{}", cells.concat())?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Held {
    node: NodeId,
    iteration: u32,
    value: i32,
    death: u32,
}

/// Executes the mapped loop cycle by cycle. Instance `(n, i)` issues on its
/// PE at `t_n + i * ii` and reads its operands out of the producers' register
/// files; every produced value occupies a register on its own PE until its
/// last scheduled read.
pub fn simulate(
    g: &DataFlowGraph,
    arch: &CgraArchitecture,
    m: &Mapping,
    iterations: u32,
    inputs: &Streams,
) -> Result<SimTrace, SimError> {
    let violations = check_mapping(g, arch, m);
    if !violations.is_empty() {
        return Err(SimError::InvalidMapping(violations));
    }
    check_io(g, iterations, inputs)?;
    let ii = m.ii();
    let lifetimes = compute_lifetimes(g, m).expect("checked mapping is total");
    let last_start = (0..g.node_count()).map(|n| m.time(n).unwrap()).max().unwrap_or(0);
    let cycles = last_start + (iterations - 1) * ii + 1;

    let mut events: Vec<(u32, NodeId, u32)> = (0..g.node_count())
        .flat_map(|n| {
            let t = m.time(n).unwrap();
            (0..iterations).map(move |i| (t + i * ii, n, i))
        })
        .collect();
    events.sort_unstable();

    let capacity = arch.registers_per_pe() as usize;
    let mut regs: Vec<Vec<Option<Held>>> = alloc::vec![alloc::vec![None; capacity]; arch.pe_count()];
    let mut activity = alloc::vec![alloc::vec![None; arch.pe_count()]; cycles as usize];
    let mut outputs = output_streams(g);
    let mut peak_registers = 0u32;
    let mut operands = [0i32; 2];
    let mut results = Vec::new();

    for group in events.chunk_by(|a, b| a.0 == b.0) {
        let cycle = group[0].0;
        results.clear();
        for &(_, n, i) in group {
            let pe = m.get(n).unwrap().pe;
            activity[cycle as usize][pe] = Some((n, i));
            for &ei in g.fanin(n) {
                let e = &g.edges()[ei];
                operands[e.operand as usize] = if i < e.distance {
                    e.init[i as usize]
                } else {
                    let want = i - e.distance;
                    let src_pe = m.get(e.src).unwrap().pe;
                    debug_assert!(arch.reaches(src_pe, pe));
                    regs[src_pe]
                        .iter()
                        .flatten()
                        .find(|h| h.node == e.src && h.iteration == want)
                        .map(|h| h.value)
                        .ok_or(SimError::ValueLost { node: e.src, iteration: want, cycle })?
                };
            }
            let value = fire(g.op(n), &operands, i, inputs, &mut outputs);
            results.push((n, i, pe, value));
        }
        for file in &mut regs {
            for r in file.iter_mut() {
                if r.is_some_and(|h| h.death <= cycle) {
                    *r = None;
                }
            }
        }
        for &(n, i, pe, value) in &results {
            let life = &lifetimes[n];
            if life.span() == 0 {
                continue;
            }
            let free = regs[pe].iter_mut().find(|r| r.is_none()).ok_or(SimError::RegisterOverflow { pe, cycle })?;
            *free = Some(Held { node: n, iteration: i, value, death: life.death + i * ii });
        }
        for file in &regs {
            peak_registers = peak_registers.max(file.iter().flatten().count() as u32);
        }
    }

    Ok(SimTrace {
        outputs,
        cycles,
        ii,
        iterations,
        max_label: m.max_label(),
        rows: arch.rows(),
        cols: arch.cols(),
        activity,
        peak_registers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfg::DfgBuilder;
    use crate::mapping::Placement;
    use alloc::vec;

    fn accumulator() -> DataFlowGraph {
        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(0)).node(1, OpKind::Add).node(2, OpKind::Output(0));
        b.edge(0, 1, 0, 0).edge(1, 1, 1, 1).edge(1, 2, 0, 0).init(1, 1, 1, vec![0]);
        b.build().unwrap()
    }

    fn streams(s: u32, v: &[i32]) -> Streams {
        BTreeMap::from([(s, v.to_vec())])
    }

    #[test]
    fn running_sum() {
        let g = accumulator();
        assert_eq!(interpret(&g, 3, &streams(0, &[1, 2, 3])).unwrap()[&0], vec![1, 3, 6]);
        let a = CgraArchitecture::mesh(1, 3).unwrap();
        let mut m = Mapping::new(1, 0);
        m.assign(0, Placement::at_time(0, 0, 1));
        m.assign(1, Placement::at_time(1, 1, 1));
        m.assign(2, Placement::at_time(2, 2, 1));
        let t = simulate(&g, &a, &m, 3, &streams(0, &[1, 2, 3])).unwrap();
        assert_eq!(t.outputs[&0], vec![1, 3, 6]);
        assert_eq!(t.cycles, 5);
        assert_eq!(t.phase(0), Phase::Prologue);
        assert_eq!(t.phase(2), Phase::Kernel);
        assert_eq!(t.phase(4), Phase::Epilogue);
    }

    #[test]
    fn copy_stream() {
        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(3)).node(1, OpKind::Output(5)).edge(0, 1, 0, 0);
        let g = b.build().unwrap();
        let a = CgraArchitecture::mesh(1, 1).unwrap();
        let mut m = Mapping::new(2, 0);
        m.assign(0, Placement::at_time(0, 0, 2));
        m.assign(1, Placement::at_time(0, 1, 2));
        let t = simulate(&g, &a, &m, 2, &streams(3, &[7, 8])).unwrap();
        assert_eq!(t.outputs[&5], vec![7, 8]);
        assert_eq!(
            simulate(&g, &a, &m, 3, &streams(3, &[7, 8])),
            Err(SimError::InputTooShort { stream: 3, needed: 3, found: 2 })
        );
    }

    #[test]
    fn missing_init_rejected() {
        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(0)).node(1, OpKind::Add).node(2, OpKind::Output(0));
        b.edge(0, 1, 0, 0).edge(1, 1, 1, 1).edge(1, 2, 0, 0);
        let g = b.build().unwrap();
        assert!(matches!(
            interpret(&g, 1, &streams(0, &[1])),
            Err(SimError::MissingInit { distance: 1, found: 0, .. })
        ));
    }

    #[test]
    fn register_overflow_detected() {
        // A value read two iterations later stays live across two kernels.
        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(0)).node(1, OpKind::Add).node(2, OpKind::Output(0));
        b.edge(0, 1, 0, 0).edge(1, 1, 1, 2).edge(1, 2, 0, 0).init(1, 1, 1, vec![0, 0]);
        let g = b.build().unwrap();
        let a = CgraArchitecture::mesh(1, 3).unwrap().with_registers(1).unwrap();
        let mut m = Mapping::new(1, 0);
        m.assign(0, Placement::at_time(0, 0, 1));
        m.assign(1, Placement::at_time(1, 1, 1));
        m.assign(2, Placement::at_time(2, 2, 1));
        assert_eq!(
            simulate(&g, &a, &m, 4, &streams(0, &[1, 2, 3, 4])),
            Err(SimError::RegisterOverflow { pe: 1, cycle: 2 })
        );
        let a = a.with_registers(2).unwrap();
        let t = simulate(&g, &a, &m, 4, &streams(0, &[1, 2, 3, 4])).unwrap();
        assert_eq!(t.outputs[&0], interpret(&g, 4, &streams(0, &[1, 2, 3, 4])).unwrap()[&0]);
        assert_eq!(t.peak_registers, 2);
    }

    #[test]
    fn trace_grid_text() {
        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(0)).node(1, OpKind::Output(0)).edge(0, 1, 0, 0);
        let g = b.build().unwrap();
        let a = CgraArchitecture::mesh(1, 2).unwrap();
        let mut m = Mapping::new(1, 0);
        m.assign(0, Placement::at_time(0, 0, 1));
        m.assign(1, Placement::at_time(1, 1, 1));
        let t = simulate(&g, &a, &m, 1, &streams(0, &[4])).unwrap();
        let text = alloc::format!("{t}");
        let lines: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(lines, vec!["cycle 0 [prologue]", "  0  .", "cycle 1 [epilogue]", "  .  1"]);
    }
}
