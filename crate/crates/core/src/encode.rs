//! CNF encoding of the mapping problem.
//!
//! One variable per (node, PE, kernel slot, iteration label) with the
//! (slot, label) pair drawn from the node's kernel mobility candidates.
//! Three clause families constrain them:
//!
//! * placement: every node takes exactly one of its variables;
//! * exclusivity: a PE issues at most one node per kernel slot, whatever the
//!   labels (the kernel repeats every `ii` cycles, so all labels share it);
//! * routing: for every edge `u -> v` with distance `d`, a pair of
//!   placements conflicts when `v`'s PE is neither `u`'s PE nor a neighbour,
//!   or when `t_v + d * ii <= t_u` with `t = label * ii + slot`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use thiserror::Error;

use crate::arch::{CgraArchitecture, PeId};
use crate::budget::Budget;
use crate::dfg::{DataFlowGraph, NodeId};
use crate::mapping::{Mapping, Placement};
use crate::sat::{CnfFormula, Lit, Var};
use crate::schedule::KernelMobilitySchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarKey {
    pub node: NodeId,
    pub pe: PeId,
    pub slot: u32,
    pub label: u32,
}

impl VarKey {
    pub fn time(&self, ii: u32) -> u32 {
        self.label * ii + self.slot
    }

    pub fn placement(&self) -> Placement {
        Placement::new(self.pe, self.slot, self.label)
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{} p{} s{} l{}", self.node, self.pe, self.slot, self.label)
    }
}

/// How at-most-one constraints are written.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AmoEncoding {
    /// `!x | !y` for every pair.
    #[default]
    Pairwise,
    /// Sequential counter with auxiliary variables for sets larger than
    /// [`SEQUENTIAL_THRESHOLD`]; pairwise below it.
    Sequential,
}

pub const SEQUENTIAL_THRESHOLD: usize = 16;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("graph has {graph} nodes but the schedule covers {schedule}")]
    NodeCountMismatch { graph: usize, schedule: usize },
    #[error("node {0} has no placement candidates")]
    NoCandidates(NodeId),
    #[error("time budget ran out while encoding")]
    OutOfTime,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("model has no true placement variable for node {0}")]
    Unplaced(NodeId),
    #[error("model places node {node} {count} times")]
    MultiplyPlaced { node: NodeId, count: usize },
    #[error("model covers {found} variables, formula has {expected}")]
    ModelSize { expected: usize, found: usize },
}

/// Bijection between placement keys and variables `1..=mapping_var_count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarTable {
    ii: u32,
    keys: Vec<VarKey>,
    node_vars: Vec<Range<u32>>,
}

impl VarTable {
    pub fn ii(&self) -> u32 {
        self.ii
    }

    /// Number of placement variables; auxiliary variables, if any, follow them.
    pub fn mapping_var_count(&self) -> u32 {
        self.keys.len() as u32
    }

    pub fn key_of(&self, v: Var) -> Option<VarKey> {
        self.keys.get(v.index()).copied()
    }

    pub fn var_of(&self, key: &VarKey) -> Option<Var> {
        let range = self.node_vars.get(key.node)?;
        let keys = &self.keys[range.start as usize..range.end as usize];
        let probe = |k: &VarKey| (k.label, k.slot, k.pe).cmp(&(key.label, key.slot, key.pe));
        keys.binary_search_by(probe).ok().map(|i| Var(range.start + i as u32 + 1))
    }

    /// Variables of `n`, in index order.
    pub fn vars_of(&self, n: NodeId) -> impl Iterator<Item = Var> + '_ {
        let r = &self.node_vars[n];
        (r.start..r.end).map(|i| Var(i + 1))
    }

    pub fn keys(&self) -> impl Iterator<Item = (Var, VarKey)> + '_ {
        self.keys.iter().enumerate().map(|(i, &k)| (Var(i as u32 + 1), k))
    }

    pub fn node_count(&self) -> usize {
        self.node_vars.len()
    }
}

/// The CNF instance together with its variable table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MappingFormula {
    pub cnf: CnfFormula,
    pub vars: VarTable,
}

impl MappingFormula {
    /// Comment lines naming every placement variable, for DIMACS output.
    pub fn var_comments(&self) -> impl Iterator<Item = String> + '_ {
        self.vars.keys().map(|(v, k)| alloc::format!("var {} = {}", v.0, k))
    }

    /// Reads the placement of every node off a model. Each node must have
    /// exactly one true variable.
    pub fn decode(&self, model: &[bool], fingerprint: u64) -> Result<Mapping, DecodeError> {
        if model.len() < self.vars.mapping_var_count() as usize {
            return Err(DecodeError::ModelSize { expected: self.cnf.var_count() as usize, found: model.len() });
        }
        let mut m = Mapping::new(self.vars.ii, fingerprint);
        for n in 0..self.vars.node_count() {
            let mut chosen = self.vars.vars_of(n).filter(|v| model[v.index()]);
            let first = chosen.next().ok_or(DecodeError::Unplaced(n))?;
            let extra = chosen.count();
            if extra > 0 {
                return Err(DecodeError::MultiplyPlaced { node: n, count: extra + 1 });
            }
            m.assign(n, self.vars.key_of(first).unwrap().placement());
        }
        Ok(m)
    }

    /// The formula with every placement of `m` asserted as a unit clause.
    /// A placement outside the candidate space becomes an empty clause.
    pub fn with_forced(&self, m: &Mapping) -> CnfFormula {
        let mut f = self.cnf.clone();
        for (node, p) in m.iter() {
            let key = VarKey { node, pe: p.pe, slot: p.slot, label: p.label };
            match self.vars.var_of(&key).filter(|_| m.ii() == self.vars.ii) {
                Some(v) => f.add_clause([Lit::positive(v)]),
                None => f.add_clause([]),
            }
        }
        f
    }
}

/// Allocates one variable per (node, PE, candidate), ordered by node, then
/// label, then slot, then PE. The result has no clauses yet.
pub fn enumerate_variables(
    g: &DataFlowGraph,
    arch: &CgraArchitecture,
    kms: &KernelMobilitySchedule,
) -> Result<MappingFormula, EncodeError> {
    if g.node_count() != kms.node_count() {
        return Err(EncodeError::NodeCountMismatch { graph: g.node_count(), schedule: kms.node_count() });
    }
    let mut keys = Vec::new();
    let mut node_vars = Vec::with_capacity(g.node_count());
    for node in 0..g.node_count() {
        let cands = kms.candidates(node);
        if cands.is_empty() {
            return Err(EncodeError::NoCandidates(node));
        }
        let start = keys.len() as u32;
        for c in cands {
            for pe in 0..arch.pe_count() {
                keys.push(VarKey { node, pe, slot: c.slot, label: c.label });
            }
        }
        node_vars.push(start..keys.len() as u32);
    }
    let cnf = CnfFormula::new(keys.len() as u32);
    Ok(MappingFormula { cnf, vars: VarTable { ii: kms.ii(), keys, node_vars } })
}

fn at_most_one(cnf: &mut CnfFormula, lits: &[Lit], encoding: AmoEncoding) {
    if encoding == AmoEncoding::Sequential && lits.len() > SEQUENTIAL_THRESHOLD {
        // s_i is true once one of x_0..=x_i is.
        let k = lits.len();
        let s: Vec<Var> = (0..k - 1).map(|_| cnf.new_var()).collect();
        cnf.add_clause([-lits[0], Lit::positive(s[0])]);
        for i in 1..k - 1 {
            cnf.add_clause([-lits[i], Lit::positive(s[i])]);
            cnf.add_clause([Lit::negative(s[i - 1]), Lit::positive(s[i])]);
            cnf.add_clause([-lits[i], Lit::negative(s[i - 1])]);
        }
        cnf.add_clause([-lits[k - 1], Lit::negative(s[k - 2])]);
    } else {
        for (i, &x) in lits.iter().enumerate() {
            for &y in &lits[i + 1..] {
                cnf.add_clause([-x, -y]);
            }
        }
    }
}

/// Exactly one placement per node.
pub fn encode_c1(f: &mut MappingFormula, amo: AmoEncoding) {
    for n in 0..f.vars.node_count() {
        let lits: Vec<Lit> = f.vars.vars_of(n).map(Lit::positive).collect();
        f.cnf.add_clause(lits.iter().copied());
        at_most_one(&mut f.cnf, &lits, amo);
    }
}

/// At most one node per (PE, kernel slot).
pub fn encode_c2(f: &mut MappingFormula, arch: &CgraArchitecture, amo: AmoEncoding) {
    c2_within(f, arch, amo, &Budget::unlimited()).expect("unlimited budget");
}

fn c2_within(
    f: &mut MappingFormula,
    arch: &CgraArchitecture,
    amo: AmoEncoding,
    budget: &Budget<'_>,
) -> Result<(), EncodeError> {
    let ii = f.vars.ii as usize;
    let mut groups: Vec<Vec<(NodeId, Lit)>> = alloc::vec![Vec::new(); arch.pe_count() * ii];
    for (v, k) in f.vars.keys() {
        groups[k.pe * ii + k.slot as usize].push((k.node, Lit::positive(v)));
    }
    for group in &groups {
        if budget.expired() {
            return Err(EncodeError::OutOfTime);
        }
        if amo == AmoEncoding::Sequential && group.len() > SEQUENTIAL_THRESHOLD {
            // Same-node pairs are already excluded by placement uniqueness.
            let lits: Vec<Lit> = group.iter().map(|&(_, l)| l).collect();
            at_most_one(&mut f.cnf, &lits, amo);
            continue;
        }
        for (i, &(nx, x)) in group.iter().enumerate() {
            for &(ny, y) in &group[i + 1..] {
                if nx != ny {
                    f.cnf.add_clause([-x, -y]);
                }
            }
        }
    }
    Ok(())
}

/// Routing and timing conflicts along every dependency edge.
///
/// Parallel edges collapse to the smallest distance, which subsumes the
/// others. A self-edge relates a placement to itself only.
pub fn encode_c3(f: &mut MappingFormula, g: &DataFlowGraph, arch: &CgraArchitecture) {
    c3_within(f, g, arch, &Budget::unlimited()).expect("unlimited budget");
}

fn c3_within(
    f: &mut MappingFormula,
    g: &DataFlowGraph,
    arch: &CgraArchitecture,
    budget: &Budget<'_>,
) -> Result<(), EncodeError> {
    let ii = f.vars.ii;
    let mut deps: BTreeMap<(NodeId, NodeId), u32> = BTreeMap::new();
    for e in g.edges() {
        deps.entry((e.src, e.dst)).and_modify(|d| *d = (*d).min(e.distance)).or_insert(e.distance);
    }
    let conflicts =
        |ku: &VarKey, kv: &VarKey, d: u32| !arch.reaches(ku.pe, kv.pe) || kv.time(ii) + d * ii <= ku.time(ii);
    for (&(u, v), &d) in &deps {
        if budget.expired() {
            return Err(EncodeError::OutOfTime);
        }
        if u == v {
            for x in f.vars.vars_of(u).collect::<Vec<_>>() {
                let k = f.vars.key_of(x).unwrap();
                if conflicts(&k, &k, d) {
                    f.cnf.add_clause([Lit::negative(x)]);
                }
            }
            continue;
        }
        let us: Vec<(Var, VarKey)> = f.vars.vars_of(u).map(|x| (x, f.vars.key_of(x).unwrap())).collect();
        let vs: Vec<(Var, VarKey)> = f.vars.vars_of(v).map(|y| (y, f.vars.key_of(y).unwrap())).collect();
        for (x, ku) in &us {
            for (y, kv) in &vs {
                if conflicts(ku, kv, d) {
                    f.cnf.add_clause([Lit::negative(*x), Lit::negative(*y)]);
                }
            }
        }
    }
    Ok(())
}

/// Variables, then placement, exclusivity and routing clauses, in that order.
pub fn encode_all(
    g: &DataFlowGraph,
    arch: &CgraArchitecture,
    kms: &KernelMobilitySchedule,
    amo: AmoEncoding,
) -> Result<MappingFormula, EncodeError> {
    encode_all_within(g, arch, kms, amo, &Budget::unlimited())
}

/// [`encode_all`], giving up with [`EncodeError::OutOfTime`] once `budget`
/// expires. The budget is polled once per (PE, slot) group and once per
/// dependency.
pub fn encode_all_within(
    g: &DataFlowGraph,
    arch: &CgraArchitecture,
    kms: &KernelMobilitySchedule,
    amo: AmoEncoding,
    budget: &Budget<'_>,
) -> Result<MappingFormula, EncodeError> {
    let mut f = enumerate_variables(g, arch, kms)?;
    encode_c1(&mut f, amo);
    if budget.expired() {
        return Err(EncodeError::OutOfTime);
    }
    c2_within(&mut f, arch, amo, budget)?;
    c3_within(&mut f, g, arch, budget)?;
    Ok(f)
}
