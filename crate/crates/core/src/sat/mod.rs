//! CNF formulas and the embedded CDCL solver.

mod cdcl;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Neg;
use core::time::Duration;

use thiserror::Error;

pub use cdcl::{Cdcl, SolverConfig};

use crate::budget::Budget;

/// A propositional variable, numbered from 1 as in DIMACS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

/// A signed DIMACS literal; never zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit(i32);

impl Lit {
    pub fn positive(v: Var) -> Self {
        Lit(v.0 as i32)
    }

    pub fn negative(v: Var) -> Self {
        Lit(-(v.0 as i32))
    }

    pub fn from_dimacs(x: i32) -> Option<Self> {
        (x != 0 && x != i32::MIN).then_some(Lit(x))
    }

    pub fn to_dimacs(self) -> i32 {
        self.0
    }

    pub fn var(self) -> Var {
        Var(self.0.unsigned_abs())
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    /// Truth value of the literal under a model indexed by `Var::index`.
    pub fn eval(self, model: &[bool]) -> bool {
        model[self.var().index()] == self.is_positive()
    }
}

impl Neg for Lit {
    type Output = Lit;
    fn neg(self) -> Lit {
        Lit(-self.0)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Clauses are stored back to back in one literal array.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CnfFormula {
    var_count: u32,
    lits: Vec<Lit>,
    /// `ends[i]` is one past the last literal of clause `i`.
    ends: Vec<usize>,
}

impl CnfFormula {
    pub fn new(var_count: u32) -> Self {
        CnfFormula { var_count, lits: Vec::new(), ends: Vec::new() }
    }

    pub fn from_clauses(var_count: u32, clauses: Vec<Vec<Lit>>) -> Self {
        let mut f = CnfFormula::new(var_count);
        for c in clauses {
            f.add_clause(c);
        }
        f
    }

    /// Builds a formula from signed integers; zeros are rejected.
    pub fn from_dimacs(var_count: u32, clauses: &[&[i32]]) -> Result<Self, SatError> {
        let mut f = CnfFormula::new(var_count);
        for c in clauses {
            let lits = c.iter().map(|&x| Lit::from_dimacs(x).ok_or(SatError::ZeroLiteral));
            f.add_clause(lits.collect::<Result<Vec<_>, _>>()?);
        }
        Ok(f)
    }

    pub fn var_count(&self) -> u32 {
        self.var_count
    }

    pub fn clause(&self, i: usize) -> &[Lit] {
        let start = if i == 0 { 0 } else { self.ends[i - 1] };
        &self.lits[start..self.ends[i]]
    }

    pub fn clauses(&self) -> impl ExactSizeIterator<Item = &[Lit]> + '_ {
        (0..self.ends.len()).map(|i| self.clause(i))
    }

    pub fn clause_count(&self) -> usize {
        self.ends.len()
    }

    /// Total number of literal occurrences.
    pub fn literal_count(&self) -> usize {
        self.lits.len()
    }

    /// Allocates a fresh variable.
    pub fn new_var(&mut self) -> Var {
        self.var_count += 1;
        Var(self.var_count)
    }

    pub fn add_clause(&mut self, clause: impl IntoIterator<Item = Lit>) {
        self.lits.extend(clause);
        self.ends.push(self.lits.len());
    }

    /// Checks that every literal names a variable in `1..=var_count`.
    pub fn check(&self) -> Result<(), SatError> {
        for (i, c) in self.clauses().enumerate() {
            if let Some(l) = c.iter().find(|l| l.var().0 > self.var_count) {
                return Err(SatError::VarOutOfRange { clause: i, var: l.var().0, var_count: self.var_count });
            }
        }
        Ok(())
    }

    /// Index of the first clause `model` falsifies, if any.
    pub fn first_falsified(&self, model: &[bool]) -> Option<usize> {
        self.clauses().position(|c| !c.iter().any(|l| l.eval(model)))
    }

    pub fn is_satisfied_by(&self, model: &[bool]) -> bool {
        model.len() >= self.var_count as usize && self.first_falsified(model).is_none()
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SatError {
    #[error("literal 0 is not a valid literal")]
    ZeroLiteral,
    #[error("clause {clause} mentions variable {var} but the formula has {var_count}")]
    VarOutOfRange { clause: usize, var: u32, var_count: u32 },
    #[error("model falsifies clause {clause}")]
    ModelIntegrity { clause: usize },
    #[error("model has {found} values for {expected} variables")]
    ModelSize { expected: usize, found: usize },
    #[error("no projected variable is true in the model; nothing to block")]
    EmptyProjection,
    #[error("solver process: {0}")]
    Process(String),
    #[error("untrusted solver output: {0}")]
    Integrity(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Sat,
    Unsat,
    Timeout,
}

impl SolveStatus {
    pub fn tag(self) -> &'static str {
        match self {
            SolveStatus::Sat => "sat",
            SolveStatus::Unsat => "unsat",
            SolveStatus::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub decisions: u64,
    pub conflicts: u64,
    pub propagations: u64,
    pub restarts: u64,
    pub wall_time: Duration,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Present iff `status` is `Sat`; indexed by `Var::index`.
    pub model: Option<Vec<bool>>,
    pub stats: SolveStats,
}

impl SolveOutcome {
    pub fn is_sat(&self) -> bool {
        self.status == SolveStatus::Sat
    }

    /// Accepts a model only if it satisfies every clause of `f`.
    pub fn verified_sat(f: &CnfFormula, model: Vec<bool>, stats: SolveStats) -> Result<Self, SatError> {
        if model.len() != f.var_count() as usize {
            return Err(SatError::ModelSize { expected: f.var_count() as usize, found: model.len() });
        }
        if let Some(clause) = f.first_falsified(&model) {
            return Err(SatError::ModelIntegrity { clause });
        }
        Ok(SolveOutcome { status: SolveStatus::Sat, model: Some(model), stats })
    }
}

/// Anything that can decide a formula within a budget.
pub trait SatBackend {
    fn solve(&mut self, f: &CnfFormula, budget: &Budget<'_>) -> Result<SolveOutcome, SatError>;

    fn name(&self) -> &str;
}

/// Solves with the embedded solver and default settings.
pub fn solve(f: &CnfFormula, budget: &Budget<'_>) -> Result<SolveOutcome, SatError> {
    Cdcl::new(SolverConfig::default()).solve(f, budget)
}

/// Returns `f` plus a clause excluding the model's values on `projection`:
/// the disjunction of the negations of the projected variables that are true.
pub fn add_blocking_clause(
    f: &CnfFormula,
    model: &[bool],
    projection: impl IntoIterator<Item = Var>,
) -> Result<CnfFormula, SatError> {
    let mut out = f.clone();
    block_model(&mut out, model, projection)?;
    Ok(out)
}

/// In-place form of [`add_blocking_clause`].
pub fn block_model(
    f: &mut CnfFormula,
    model: &[bool],
    projection: impl IntoIterator<Item = Var>,
) -> Result<(), SatError> {
    let clause: Vec<Lit> = projection.into_iter().filter(|v| model[v.index()]).map(Lit::negative).collect();
    if clause.is_empty() {
        return Err(SatError::EmptyProjection);
    }
    f.add_clause(clause);
    Ok(())
}

/// Writes `f` in DIMACS CNF. `comments` are emitted as `c ` lines before the header.
pub fn write_dimacs<W: fmt::Write>(
    f: &CnfFormula,
    comments: impl IntoIterator<Item = impl fmt::Display>,
    out: &mut W,
) -> fmt::Result {
    for c in comments {
        writeln!(out, "c {c}")?;
    }
    writeln!(out, "p cnf {} {}", f.var_count(), f.clause_count())?;
    for clause in f.clauses() {
        for l in clause {
            write!(out, "{l} ")?;
        }
        out.write_str("0\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use alloc::vec;

    fn cnf(n: u32, clauses: &[&[i32]]) -> CnfFormula {
        CnfFormula::from_dimacs(n, clauses).unwrap()
    }

    #[test]
    fn dimacs_text() {
        let mut s = String::new();
        write_dimacs(&cnf(1, &[&[1]]), core::iter::empty::<&str>(), &mut s).unwrap();
        assert_eq!(s, "p cnf 1 1\n1 0\n");
        let mut s = String::new();
        write_dimacs(&cnf(2, &[&[1, -2], &[2]]), core::iter::empty::<&str>(), &mut s).unwrap();
        assert_eq!(s, "p cnf 2 2\n1 -2 0\n2 0\n");
        let mut s = String::new();
        write_dimacs(&CnfFormula::new(0), core::iter::empty::<&str>(), &mut s).unwrap();
        assert_eq!(s, "p cnf 0 0\n");
    }

    #[test]
    fn blocking_clause() {
        let f = cnf(1, &[&[1]]);
        let b = add_blocking_clause(&f, &[true], [Var(1)]).unwrap();
        assert_eq!(b.clause(1), vec![Lit::from_dimacs(-1).unwrap()]);
        assert_eq!(solve(&b, &Budget::unlimited()).unwrap().status, SolveStatus::Unsat);

        let f = cnf(2, &[&[1], &[2]]);
        let b = add_blocking_clause(&f, &[true, true], [Var(1), Var(2)]).unwrap();
        assert_eq!(b.clause(2), vec![Lit::from_dimacs(-1).unwrap(), Lit::from_dimacs(-2).unwrap()]);

        assert_eq!(add_blocking_clause(&f, &[false, false], [Var(1)]), Err(SatError::EmptyProjection));
    }

    #[test]
    fn malformed_formula_rejected() {
        let f = cnf(1, &[&[1, 2]]);
        assert_eq!(solve(&f, &Budget::unlimited()), Err(SatError::VarOutOfRange { clause: 0, var: 2, var_count: 1 }));
        assert_eq!(CnfFormula::from_dimacs(1, &[&[0]]), Err(SatError::ZeroLiteral));
    }

    #[test]
    fn verified_sat_rejects_bad_model() {
        let f = cnf(2, &[&[1], &[-1, 2]]);
        assert_eq!(
            SolveOutcome::verified_sat(&f, vec![true, false], SolveStats::default()),
            Err(SatError::ModelIntegrity { clause: 1 })
        );
    }
}
