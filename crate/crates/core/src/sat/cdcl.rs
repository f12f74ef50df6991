//! Conflict-driven clause learning solver.
//!
//! Two watched literals with blocker literals, first-UIP learning with local
//! minimization, VSIDS-style activity branching, phase saving, Luby restarts
//! and LBD-based learnt clause deletion.

use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CnfFormula, Lit, SatBackend, SatError, SolveOutcome, SolveStats, SolveStatus};
use crate::budget::Budget;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Perturbs initial variable activities; `None` keeps branching fully deterministic.
    pub seed: Option<u64>,
    /// Conflicts in the first restart interval; later intervals follow the Luby sequence.
    pub restart_base: u64,
    pub var_decay: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { seed: None, restart_base: 64, var_decay: 0.95 }
    }
}

/// The embedded solver. Each call to [`Cdcl::solve`] starts from scratch.
#[derive(Clone, Debug, Default)]
pub struct Cdcl {
    config: SolverConfig,
}

impl Cdcl {
    pub fn new(config: SolverConfig) -> Self {
        Cdcl { config }
    }

    pub fn solve(&mut self, f: &CnfFormula, budget: &Budget<'_>) -> Result<SolveOutcome, SatError> {
        f.check()?;
        let start = budget.elapsed();
        let mut s = Search::new(f, &self.config);
        let status = if s.load(f, budget) { s.run(budget) } else { SolveStatus::Timeout };
        let mut stats = s.stats;
        stats.wall_time = budget.elapsed().saturating_sub(start);
        match status {
            SolveStatus::Sat => {
                let model = s.assigns.iter().map(|&v| v == TRUE).collect();
                SolveOutcome::verified_sat(f, model, stats)
            }
            status => Ok(SolveOutcome { status, model: None, stats }),
        }
    }
}

impl SatBackend for Cdcl {
    fn solve(&mut self, f: &CnfFormula, budget: &Budget<'_>) -> Result<SolveOutcome, SatError> {
        Cdcl::solve(self, f, budget)
    }

    fn name(&self) -> &str {
        "embedded"
    }
}

const FALSE: u8 = 0;
const TRUE: u8 = 1;
const UNDEF: u8 = 2;
const NO_REASON: u32 = u32::MAX;
const BUDGET_CHECK_INTERVAL: u64 = 256;
const LOAD_CHECK_INTERVAL: usize = 1 << 16;

/// Literal code `2 * var + negated`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct L(u32);

impl L {
    fn from_lit(l: Lit) -> L {
        L(((l.var().index() as u32) << 1) | u32::from(!l.is_positive()))
    }

    fn var(self) -> usize {
        (self.0 >> 1) as usize
    }

    fn idx(self) -> usize {
        self.0 as usize
    }

    fn negated(self) -> L {
        L(self.0 ^ 1)
    }

    fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }
}

/// A clause's literals live in `Search::arena[start..start + len]`.
#[derive(Clone, Copy)]
struct Clause {
    start: usize,
    len: u32,
    lbd: u32,
    learnt: bool,
    deleted: bool,
}

#[derive(Clone, Copy)]
struct Watcher {
    cref: u32,
    blocker: L,
}

/// Max-heap of variables keyed by activity; ties go to the lower index.
struct VarHeap {
    heap: Vec<u32>,
    pos: Vec<u32>,
}

impl VarHeap {
    const ABSENT: u32 = u32::MAX;

    fn new(n: usize) -> Self {
        VarHeap { heap: Vec::with_capacity(n), pos: alloc::vec![Self::ABSENT; n] }
    }

    fn above(act: &[f64], a: u32, b: u32) -> bool {
        let (x, y) = (act[a as usize], act[b as usize]);
        x > y || (x == y && a < b)
    }

    fn contains(&self, v: usize) -> bool {
        self.pos[v] != Self::ABSENT
    }

    fn insert(&mut self, v: usize, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.pos[v] = self.heap.len() as u32;
        self.heap.push(v as u32);
        self.sift_up(self.heap.len() - 1, act);
    }

    fn pop(&mut self, act: &[f64]) -> Option<usize> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().unwrap();
        self.pos[top as usize] = Self::ABSENT;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.pos[last as usize] = 0;
            self.sift_down(0, act);
        }
        Some(top as usize)
    }

    fn increased(&mut self, v: usize, act: &[f64]) {
        if self.contains(v) {
            self.sift_up(self.pos[v] as usize, act);
        }
    }

    fn sift_up(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if !Self::above(act, v, self.heap[parent]) {
                break;
            }
            self.heap[i] = self.heap[parent];
            self.pos[self.heap[i] as usize] = i as u32;
            i = parent;
        }
        self.heap[i] = v;
        self.pos[v as usize] = i as u32;
    }

    fn sift_down(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        let n = self.heap.len();
        loop {
            let left = 2 * i + 1;
            if left >= n {
                break;
            }
            let right = left + 1;
            let child = if right < n && Self::above(act, self.heap[right], self.heap[left]) { right } else { left };
            if !Self::above(act, self.heap[child], v) {
                break;
            }
            self.heap[i] = self.heap[child];
            self.pos[self.heap[i] as usize] = i as u32;
            i = child;
        }
        self.heap[i] = v;
        self.pos[v as usize] = i as u32;
    }
}

/// Luby sequence 1, 1, 2, 1, 1, 2, 4, ... at zero-based index `x`.
fn luby(mut x: u64) -> u64 {
    let (mut size, mut seq) = (1u64, 0u32);
    while size < x + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != x {
        size = (size - 1) >> 1;
        seq -= 1;
        x %= size;
    }
    1 << seq
}

struct Search {
    clauses: Vec<Clause>,
    arena: Vec<L>,
    /// Arena slots still held by deleted clauses.
    wasted: usize,
    scratch: Vec<L>,
    watches: Vec<Vec<Watcher>>,
    assigns: Vec<u8>,
    level: Vec<u32>,
    reason: Vec<u32>,
    trail: Vec<L>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    var_decay: f64,
    order: VarHeap,
    polarity: Vec<bool>,
    seen: Vec<bool>,
    level_stamp: Vec<u64>,
    stamp: u64,
    learnt_count: usize,
    max_learnts: f64,
    restart_base: u64,
    trivially_unsat: bool,
    stats: SolveStats,
}

impl Search {
    fn new(f: &CnfFormula, config: &SolverConfig) -> Self {
        let n = f.var_count() as usize;
        let mut activity = alloc::vec![0.0; n];
        if let Some(seed) = config.seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for a in &mut activity {
                *a = (rng.next_u32() as f64) * 1e-14;
            }
        }
        let mut s = Search {
            clauses: Vec::with_capacity(f.clause_count()),
            arena: Vec::with_capacity(f.literal_count()),
            wasted: 0,
            scratch: Vec::new(),
            watches: (0..2 * n).map(|_| Vec::new()).collect(),
            assigns: alloc::vec![UNDEF; n],
            level: alloc::vec![0; n],
            reason: alloc::vec![NO_REASON; n],
            trail: Vec::with_capacity(n),
            trail_lim: Vec::new(),
            qhead: 0,
            activity,
            var_inc: 1.0,
            var_decay: config.var_decay,
            order: VarHeap::new(n),
            polarity: alloc::vec![false; n],
            seen: alloc::vec![false; n],
            level_stamp: alloc::vec![0; n + 1],
            stamp: 0,
            learnt_count: 0,
            max_learnts: (f.clause_count() as f64 / 3.0).max(2000.0),
            restart_base: config.restart_base.max(1),
            trivially_unsat: false,
            stats: SolveStats::default(),
        };
        for v in 0..n {
            s.order.insert(v, &s.activity);
        }
        s
    }

    /// Adds the input clauses. Returns false if the budget ran out first.
    fn load(&mut self, f: &CnfFormula, budget: &Budget<'_>) -> bool {
        for (i, c) in f.clauses().enumerate() {
            if i % LOAD_CHECK_INTERVAL == 0 && budget.expired() {
                return false;
            }
            if !self.add_input_clause(c) {
                self.trivially_unsat = true;
                break;
            }
        }
        true
    }

    fn lits(&self, cref: usize) -> &[L] {
        let c = self.clauses[cref];
        &self.arena[c.start..c.start + c.len as usize]
    }

    fn value(&self, l: L) -> u8 {
        let v = self.assigns[l.var()];
        if v == UNDEF {
            UNDEF
        } else {
            v ^ (l.0 & 1) as u8
        }
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    /// Returns false if the clause is falsified at level 0.
    fn add_input_clause(&mut self, clause: &[Lit]) -> bool {
        let mut lits = core::mem::take(&mut self.scratch);
        lits.clear();
        lits.extend(clause.iter().map(|&l| L::from_lit(l)));
        lits.sort_unstable();
        lits.dedup();
        let satisfied =
            lits.windows(2).any(|w| w[0].var() == w[1].var()) || lits.iter().any(|&l| self.value(l) == TRUE);
        lits.retain(|&l| self.value(l) != FALSE);
        let ok = match lits.len() {
            _ if satisfied => true,
            0 => false,
            1 => {
                self.enqueue(lits[0], NO_REASON);
                true
            }
            _ => {
                self.attach(&lits, false, 0);
                true
            }
        };
        self.scratch = lits;
        ok
    }

    fn attach(&mut self, lits: &[L], learnt: bool, lbd: u32) -> u32 {
        let cref = self.clauses.len() as u32;
        self.watches[lits[0].idx()].push(Watcher { cref, blocker: lits[1] });
        self.watches[lits[1].idx()].push(Watcher { cref, blocker: lits[0] });
        let start = self.arena.len();
        self.arena.extend_from_slice(lits);
        self.clauses.push(Clause { start, len: lits.len() as u32, lbd, learnt, deleted: false });
        if learnt {
            self.learnt_count += 1;
        }
        cref
    }

    fn enqueue(&mut self, l: L, reason: u32) {
        let v = l.var();
        self.assigns[v] = if l.is_neg() { FALSE } else { TRUE };
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    /// Unit propagation; returns a conflicting clause if one is found.
    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let false_lit = p.negated();
            let mut ws = core::mem::take(&mut self.watches[false_lit.idx()]);
            let (mut i, mut j) = (0, 0);
            let mut conflict = None;
            while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.value(w.blocker) == TRUE {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let c = self.clauses[w.cref as usize];
                if c.deleted {
                    continue;
                }
                let base = c.start;
                if self.arena[base] == false_lit {
                    self.arena.swap(base, base + 1);
                }
                let first = self.arena[base];
                if first != w.blocker && self.value(first) == TRUE {
                    ws[j] = Watcher { cref: w.cref, blocker: first };
                    j += 1;
                    continue;
                }
                let mut moved = false;
                for k in base + 2..base + c.len as usize {
                    let lk = self.arena[k];
                    if self.value(lk) != FALSE {
                        self.arena.swap(base + 1, k);
                        self.watches[lk.idx()].push(Watcher { cref: w.cref, blocker: first });
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = Watcher { cref: w.cref, blocker: first };
                j += 1;
                if self.value(first) == FALSE {
                    conflict = Some(w.cref);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        i += 1;
                        j += 1;
                    }
                } else {
                    self.enqueue(first, w.cref);
                }
            }
            ws.truncate(j);
            self.watches[false_lit.idx()] = ws;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    fn bump(&mut self, v: usize) {
        self.activity[v] += self.var_inc;
        if self.activity[v] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.order.increased(v, &self.activity);
    }

    /// First-UIP analysis. Returns the learnt clause (asserting literal first,
    /// highest remaining level second) and the backjump level.
    fn analyze(&mut self, mut confl: u32) -> (Vec<L>, u32) {
        let current = self.decision_level();
        let mut learnt = alloc::vec![L(0)];
        let mut pending = 0usize;
        let mut p: Option<L> = None;
        let mut idx = self.trail.len();
        loop {
            let skip = usize::from(p.is_some());
            let c = self.clauses[confl as usize];
            for k in c.start + skip..c.start + c.len as usize {
                let q = self.arena[k];
                let v = q.var();
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump(v);
                    if self.level[v] >= current {
                        pending += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var()] {
                    break;
                }
            }
            let lit = self.trail[idx];
            p = Some(lit);
            confl = self.reason[lit.var()];
            self.seen[lit.var()] = false;
            pending -= 1;
            if pending == 0 {
                break;
            }
        }
        learnt[0] = p.unwrap().negated();

        // Drop literals implied by the rest of the clause.
        let marked: Vec<L> = learnt[1..].to_vec();
        let mut keep = 1;
        for i in 1..learnt.len() {
            let q = learnt[i];
            let r = self.reason[q.var()];
            let redundant = r != NO_REASON
                && self.lits(r as usize)[1..].iter().all(|x| self.seen[x.var()] || self.level[x.var()] == 0);
            if !redundant {
                learnt[keep] = q;
                keep += 1;
            }
        }
        learnt.truncate(keep);
        for q in marked {
            self.seen[q.var()] = false;
        }

        let backjump = if learnt.len() == 1 {
            0
        } else {
            let (mut best, mut best_level) = (1, self.level[learnt[1].var()]);
            for (i, q) in learnt.iter().enumerate().skip(2) {
                if self.level[q.var()] > best_level {
                    best = i;
                    best_level = self.level[q.var()];
                }
            }
            learnt.swap(1, best);
            best_level
        };
        (learnt, backjump)
    }

    fn lbd(&mut self, lits: &[L]) -> u32 {
        self.stamp += 1;
        let mut count = 0;
        for l in lits {
            let lv = self.level[l.var()] as usize;
            if self.level_stamp[lv] != self.stamp {
                self.level_stamp[lv] = self.stamp;
                count += 1;
            }
        }
        count
    }

    fn cancel_until(&mut self, level: u32) {
        if self.decision_level() <= level {
            return;
        }
        let keep = self.trail_lim[level as usize];
        for i in (keep..self.trail.len()).rev() {
            let v = self.trail[i].var();
            self.polarity[v] = self.assigns[v] == TRUE;
            self.assigns[v] = UNDEF;
            self.reason[v] = NO_REASON;
            self.order.insert(v, &self.activity);
        }
        self.trail.truncate(keep);
        self.trail_lim.truncate(level as usize);
        self.qhead = keep;
    }

    fn locked(&self, cref: usize) -> bool {
        let l0 = self.arena[self.clauses[cref].start];
        self.value(l0) == TRUE && self.reason[l0.var()] == cref as u32
    }

    fn reduce_learnts(&mut self) {
        let mut candidates: Vec<usize> = (0..self.clauses.len())
            .filter(|&i| {
                let c = &self.clauses[i];
                c.learnt && !c.deleted && c.lbd > 2 && !self.locked(i)
            })
            .collect();
        candidates.sort_by(|&a, &b| self.clauses[b].lbd.cmp(&self.clauses[a].lbd).then(a.cmp(&b)));
        let remove = candidates.len() / 2;
        for &i in &candidates[..remove] {
            let c = &mut self.clauses[i];
            c.deleted = true;
            self.wasted += c.len as usize;
            self.learnt_count -= 1;
        }
        self.max_learnts *= 1.1;
        if 2 * self.wasted > self.arena.len() {
            self.compact();
        }
    }

    /// Drops deleted clauses' literals from the arena. Clause references stay valid.
    fn compact(&mut self) {
        let mut arena = Vec::with_capacity(self.arena.len() - self.wasted);
        for c in self.clauses.iter_mut() {
            if c.deleted {
                c.len = 0;
            } else {
                let start = arena.len();
                arena.extend_from_slice(&self.arena[c.start..c.start + c.len as usize]);
                c.start = start;
            }
        }
        self.arena = arena;
        self.wasted = 0;
    }

    fn pick_branch(&mut self) -> Option<L> {
        while let Some(v) = self.order.pop(&self.activity) {
            if self.assigns[v] == UNDEF {
                return Some(L(((v as u32) << 1) | u32::from(!self.polarity[v])));
            }
        }
        None
    }

    fn run(&mut self, budget: &Budget<'_>) -> SolveStatus {
        if self.trivially_unsat || self.propagate().is_some() {
            return SolveStatus::Unsat;
        }
        let mut restart_limit = self.restart_base * luby(0);
        let mut conflicts_since_restart = 0u64;
        let mut steps = 0u64;
        loop {
            steps += 1;
            if steps.is_multiple_of(BUDGET_CHECK_INTERVAL) && budget.expired() {
                self.cancel_until(0);
                return SolveStatus::Timeout;
            }
            if let Some(confl) = self.propagate() {
                self.stats.conflicts += 1;
                conflicts_since_restart += 1;
                if self.decision_level() == 0 {
                    return SolveStatus::Unsat;
                }
                let (learnt, backjump) = self.analyze(confl);
                self.cancel_until(backjump);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], NO_REASON);
                } else {
                    let lbd = self.lbd(&learnt);
                    let asserting = learnt[0];
                    let cref = self.attach(&learnt, true, lbd);
                    self.enqueue(asserting, cref);
                }
                self.var_inc /= self.var_decay;
            } else {
                if conflicts_since_restart >= restart_limit {
                    self.stats.restarts += 1;
                    conflicts_since_restart = 0;
                    restart_limit = self.restart_base * luby(self.stats.restarts);
                    self.cancel_until(0);
                    continue;
                }
                if self.learnt_count as f64 >= self.max_learnts {
                    self.reduce_learnts();
                }
                match self.pick_branch() {
                    None => return SolveStatus::Sat,
                    Some(l) => {
                        self.stats.decisions += 1;
                        self.trail_lim.push(self.trail.len());
                        self.enqueue(l, NO_REASON);
                    }
                }
            }
        }
    }
}
