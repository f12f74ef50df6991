//! DIMACS CNF files and the solver output dialect (`s` and `v` lines).

use std::io;

use thiserror::Error;

use satmap_core::sat::{write_dimacs, CnfFormula, Lit, SatError, SolveOutcome, SolveStatus};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DimacsError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing \"p cnf\" header")]
    NoHeader,
    #[error("header declares {declared} clauses, found {found}")]
    ClauseCount { declared: usize, found: usize },
    #[error(transparent)]
    Formula(#[from] SatError),
}

/// Writes `f` with one `c` line per comment ahead of the header.
pub fn write_cnf<W: io::Write>(
    f: &CnfFormula,
    comments: impl IntoIterator<Item = String>,
    mut out: W,
) -> io::Result<()> {
    let mut s = String::new();
    write_dimacs(f, comments, &mut s).expect("writing to a String cannot fail");
    out.write_all(s.as_bytes())
}

pub fn parse_cnf(text: &str) -> Result<CnfFormula, DimacsError> {
    let mut header: Option<(u32, usize)> = None;
    let mut clauses = Vec::new();
    let mut current = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |message: String| DimacsError::Parse { line: i + 1, message };
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('p') {
            if header.is_some() {
                return Err(err("second header".into()));
            }
            let fields: Vec<&str> = rest.split_whitespace().collect();
            let parsed = match fields.as_slice() {
                ["cnf", v, c] => v.parse().ok().zip(c.parse().ok()),
                _ => None,
            };
            header = Some(parsed.ok_or_else(|| err(format!("bad header {line:?}")))?);
            continue;
        }
        if header.is_none() {
            return Err(DimacsError::NoHeader);
        }
        for tok in line.split_whitespace() {
            let x: i32 = tok.parse().map_err(|_| err(format!("bad literal {tok:?}")))?;
            match Lit::from_dimacs(x) {
                Some(l) => current.push(l),
                None => clauses.push(std::mem::take(&mut current)),
            }
        }
    }
    let (vars, declared) = header.ok_or(DimacsError::NoHeader)?;
    if !current.is_empty() {
        clauses.push(current);
    }
    if clauses.len() != declared {
        return Err(DimacsError::ClauseCount { declared, found: clauses.len() });
    }
    let f = CnfFormula::from_clauses(vars, clauses);
    f.check()?;
    Ok(f)
}

/// Renders an outcome in the solver output dialect.
pub fn format_solution(outcome: &SolveOutcome) -> String {
    let mut s = String::new();
    match (outcome.status, &outcome.model) {
        (SolveStatus::Sat, Some(model)) => {
            s.push_str("s SATISFIABLE\nv");
            for (i, &b) in model.iter().enumerate() {
                let v = i as i64 + 1;
                s.push_str(&format!(" {}", if b { v } else { -v }));
                if (i + 1) % 20 == 0 && i + 1 < model.len() {
                    s.push_str("\nv");
                }
            }
            s.push_str(" 0\n");
        }
        (SolveStatus::Unsat, _) => s.push_str("s UNSATISFIABLE\n"),
        _ => s.push_str("s UNKNOWN\n"),
    }
    s
}

/// What a solver printed, before any check against the formula.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolverAnswer {
    Sat(Vec<bool>),
    Unsat,
    Unknown,
}

/// Reads `s`/`v` lines; everything else (comments, banners) is skipped.
/// Variables the `v` lines leave out read as false.
pub fn parse_solution(text: &str, var_count: u32) -> Result<SolverAnswer, SatError> {
    let bad = |m: String| SatError::Integrity(m);
    let mut status = None;
    let mut model = vec![false; var_count as usize];
    let mut terminated = false;
    let mut saw_values = false;
    for line in text.lines() {
        let line = line.trim_end();
        if let Some(s) = line.strip_prefix("s ") {
            if status.is_some() {
                return Err(bad("more than one status line".into()));
            }
            status = Some(match s.trim() {
                "SATISFIABLE" => SolveStatus::Sat,
                "UNSATISFIABLE" => SolveStatus::Unsat,
                "UNKNOWN" => SolveStatus::Timeout,
                other => return Err(bad(format!("unknown status {other:?}"))),
            });
        } else if let Some(vals) = line.strip_prefix("v ").or(if line == "v" { Some("") } else { None }) {
            saw_values = true;
            for tok in vals.split_whitespace() {
                if terminated {
                    return Err(bad("values after the terminating 0".into()));
                }
                let x: i64 = tok.parse().map_err(|_| bad(format!("bad value {tok:?}")))?;
                if x == 0 {
                    terminated = true;
                    continue;
                }
                let v = x.unsigned_abs();
                if v > var_count as u64 {
                    return Err(bad(format!("value for variable {v}, formula has {var_count}")));
                }
                model[v as usize - 1] = x > 0;
            }
        }
    }
    match status {
        None => Err(bad("no status line".into())),
        Some(SolveStatus::Sat) if !saw_values && var_count > 0 => Err(bad("satisfiable without values".into())),
        Some(SolveStatus::Sat) => Ok(SolverAnswer::Sat(model)),
        Some(SolveStatus::Unsat) => Ok(SolverAnswer::Unsat),
        Some(SolveStatus::Timeout) => Ok(SolverAnswer::Unknown),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use satmap_core::sat::SolveStats;

    fn dump(f: &CnfFormula) -> String {
        let mut v = Vec::new();
        write_cnf(f, Vec::new(), &mut v).unwrap();
        String::from_utf8(v).unwrap()
    }

    #[test]
    fn writer_examples() {
        assert_eq!(dump(&CnfFormula::from_dimacs(1, &[&[1]]).unwrap()), "p cnf 1 1\n1 0\n");
        assert_eq!(dump(&CnfFormula::from_dimacs(2, &[&[1, -2], &[2]]).unwrap()), "p cnf 2 2\n1 -2 0\n2 0\n");
        assert_eq!(dump(&CnfFormula::new(0)), "p cnf 0 0\n");
    }

    #[test]
    fn parse_round_trip() {
        let f = CnfFormula::from_dimacs(3, &[&[1, -2], &[2, 3, -1], &[]]).unwrap();
        assert_eq!(parse_cnf(&dump(&f)).unwrap(), f);
        let wrapped = "c hi\np cnf 3 2\n1 -2\n 0 2 3 0\n";
        assert_eq!(parse_cnf(wrapped).unwrap().clause_count(), 2);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse_cnf("1 0\n"), Err(DimacsError::NoHeader));
        assert_eq!(parse_cnf("p cnf 1 2\n1 0\n"), Err(DimacsError::ClauseCount { declared: 2, found: 1 }));
        assert!(matches!(parse_cnf("p cnf 1 1\nx 0\n"), Err(DimacsError::Parse { line: 2, .. })));
        assert!(matches!(parse_cnf("p cnf 1 1\n2 0\n"), Err(DimacsError::Formula(_))));
    }

    #[test]
    fn solution_round_trip() {
        let model: Vec<bool> = (0..45).map(|i| i % 3 == 0).collect();
        let out = SolveOutcome { status: SolveStatus::Sat, model: Some(model.clone()), stats: SolveStats::default() };
        let text = format_solution(&out);
        assert_eq!(text.lines().count(), 4);
        assert_eq!(parse_solution(&text, 45), Ok(SolverAnswer::Sat(model)));
        assert_eq!(parse_solution("c x\ns UNSATISFIABLE\n", 3), Ok(SolverAnswer::Unsat));
    }

    #[test]
    fn garbage_is_rejected() {
        for text in
            ["", "garbage\n", "s MAYBE\n", "s SATISFIABLE\n", "s SATISFIABLE\nv 1 x 0\n", "s SATISFIABLE\nv 9 0\n"]
        {
            assert!(matches!(parse_solution(text, 2), Err(SatError::Integrity(_))), "{text:?}");
        }
    }
}
