//! Running a third-party SAT solver on a DIMACS file.
//!
//! The command template is run through `sh -c` with `{cnf}` replaced by the
//! quoted file path. Whatever the solver claims, a satisfying model is only
//! accepted after checking it against the formula.

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use satmap_core::budget::Budget;
use satmap_core::sat::{CnfFormula, SatBackend, SatError, SolveOutcome, SolveStats, SolveStatus};

use crate::dimacs::{parse_cnf, parse_solution, write_cnf, DimacsError, SolverAnswer};

pub const PLACEHOLDER: &str = "{cnf}";

const POLL: Duration = Duration::from_millis(2);

#[derive(Clone, Debug)]
pub struct ExternalSolver {
    template: String,
}

impl ExternalSolver {
    pub fn new(template: impl Into<String>) -> Result<Self, SatError> {
        let template = template.into();
        if !template.contains(PLACEHOLDER) {
            return Err(SatError::Process(format!("command template has no {PLACEHOLDER} placeholder")));
        }
        Ok(ExternalSolver { template })
    }

    pub fn template(&self) -> &str {
        &self.template
    }
}

impl SatBackend for ExternalSolver {
    fn solve(&mut self, f: &CnfFormula, budget: &Budget<'_>) -> Result<SolveOutcome, SatError> {
        let io = |e: std::io::Error| SatError::Process(format!("temporary file: {e}"));
        let mut file = tempfile::Builder::new().prefix("satmap-").suffix(".cnf").tempfile().map_err(io)?;
        write_cnf(f, Vec::new(), &mut file).map_err(io)?;
        file.flush().map_err(io)?;
        run(&self.template, file.path(), f, budget)
    }

    fn name(&self) -> &str {
        "external"
    }
}

/// Solves the DIMACS file at `path` with the solver described by `template`.
pub fn solve_external(path: &Path, template: &str, budget: &Budget<'_>) -> Result<SolveOutcome, SatError> {
    ExternalSolver::new(template)?;
    let text = std::fs::read_to_string(path).map_err(|e| SatError::Process(format!("{}: {e}", path.display())))?;
    let f = parse_cnf(&text).map_err(|e| match e {
        DimacsError::Formula(e) => e,
        e => SatError::Process(format!("{}: {e}", path.display())),
    })?;
    run(template, path, &f, budget)
}

/// The shell may have forked the solver, so the whole process group goes.
fn kill_group(child: &mut Child) {
    // SAFETY: plain syscall; the group id is the child's pid, set at spawn.
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.wait();
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

fn run(template: &str, path: &Path, f: &CnfFormula, budget: &Budget<'_>) -> Result<SolveOutcome, SatError> {
    let start = Instant::now();
    let command = template.replace(PLACEHOLDER, &shell_quote(path));
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .process_group(0)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| SatError::Process(format!("spawning {command:?}: {e}")))?;
    let mut stdout = child.stdout.take().expect("stdout is piped");
    let reader = thread::spawn(move || {
        let mut s = String::new();
        stdout.read_to_string(&mut s).map(|_| s)
    });
    let exit = loop {
        if let Some(status) = child.try_wait().map_err(|e| SatError::Process(e.to_string()))? {
            break status;
        }
        if budget.expired() {
            kill_group(&mut child);
            let stats = SolveStats { wall_time: start.elapsed(), ..SolveStats::default() };
            return Ok(SolveOutcome { status: SolveStatus::Timeout, model: None, stats });
        }
        thread::sleep(POLL);
    };
    let text = reader
        .join()
        .expect("reader thread does not panic")
        .map_err(|e| SatError::Process(format!("reading solver output: {e}")))?;
    let stats = SolveStats { wall_time: start.elapsed(), ..SolveStats::default() };
    // Competition solvers exit with 10 (sat) or 20 (unsat).
    let normal = exit.success() || matches!(exit.code(), Some(10 | 20));
    let answer = match parse_solution(&text, f.var_count()) {
        Ok(a) => a,
        Err(_) if !normal => return Err(SatError::Process(format!("{command:?} failed: {exit}"))),
        Err(e) => return Err(e),
    };
    match answer {
        SolverAnswer::Sat(model) => SolveOutcome::verified_sat(f, model, stats),
        SolverAnswer::Unsat => Ok(SolveOutcome { status: SolveStatus::Unsat, model: None, stats }),
        SolverAnswer::Unknown => Ok(SolveOutcome { status: SolveStatus::Timeout, model: None, stats }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn printf(out: &str) -> ExternalSolver {
        ExternalSolver::new(format!("printf '{out}' # {PLACEHOLDER}")).unwrap()
    }

    #[test]
    fn template_needs_placeholder() {
        assert!(matches!(ExternalSolver::new("minisat"), Err(SatError::Process(_))));
    }

    #[test]
    fn scripted_answers() {
        let f = CnfFormula::from_dimacs(2, &[&[1], &[-1, 2]]).unwrap();
        let b = Budget::unlimited();
        let out = printf("s SATISFIABLE\\nv 1 2 0\\n").solve(&f, &b).unwrap();
        assert_eq!(out.model, Some(vec![true, true]));
        let out = printf("s UNSATISFIABLE\\n").solve(&f, &b).unwrap();
        assert_eq!(out.status, SolveStatus::Unsat);
        // A model that does not satisfy the formula is never accepted.
        let err = printf("s SATISFIABLE\\nv 1 -2 0\\n").solve(&f, &b).unwrap_err();
        assert_eq!(err, SatError::ModelIntegrity { clause: 1 });
        let err = ExternalSolver::new("echo garbage {cnf}").unwrap().solve(&f, &b).unwrap_err();
        assert!(matches!(err, SatError::Integrity(_)));
        let err = ExternalSolver::new("false {cnf}").unwrap().solve(&f, &b).unwrap_err();
        assert!(matches!(err, SatError::Process(_)));
    }

    #[test]
    fn sees_the_file() {
        let f = CnfFormula::from_dimacs(1, &[&[1]]).unwrap();
        let s = ExternalSolver::new("grep -q 'p cnf 1 1' {cnf} && echo 's SATISFIABLE' && echo 'v 1 0'");
        let out = s.unwrap().solve(&f, &Budget::unlimited()).unwrap();
        assert!(out.is_sat());
    }
}
