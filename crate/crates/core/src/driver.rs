//! The compile loop: for each candidate interval from the lower bound
//! upwards, fold the mobility schedule, encode, solve, decode, check the
//! decoded mapping independently and validate register pressure. The first
//! interval that survives every stage is the answer.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use thiserror::Error;

use crate::arch::CgraArchitecture;
use crate::budget::{Budget, Clock};
use crate::dfg::DataFlowGraph;
use crate::encode::{encode_all_within, AmoEncoding, DecodeError, EncodeError, MappingFormula};
use crate::mapping::{fingerprint, Mapping};
use crate::regalloc::{check_register_pressure, compute_lifetimes, PressureReport};
use crate::sat::{block_model, SatBackend, SatError, SolveStatus};
use crate::schedule::{build_kms, compute_mii, IiBounds, ScheduleError, SlackPolicy};
use crate::verify::{check_mapping, MappingViolation};

pub const DEFAULT_II_MAX: u32 = 50;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(4000);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DriverConfig {
    /// First interval tried; never below the lower bound.
    pub ii_start: Option<u32>,
    pub ii_max: u32,
    /// Shared by all attempts; `None` disables the limit.
    pub timeout: Option<Duration>,
    pub slack: SlackPolicy,
    /// Extra solves per interval, each excluding the previous model, when a
    /// mapping fails the register check. Zero moves straight to the next interval.
    pub regalloc_retries: u32,
    pub amo: AmoEncoding,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            ii_start: None,
            ii_max: DEFAULT_II_MAX,
            timeout: Some(DEFAULT_TIMEOUT),
            slack: SlackPolicy::Auto,
            regalloc_retries: 0,
            amo: AmoEncoding::Pairwise,
        }
    }
}

impl DriverConfig {
    pub fn validate(&self) -> Result<(), DriverError> {
        if self.ii_max == 0 {
            return Err(DriverError::Config("ii_max must be positive".into()));
        }
        match self.ii_start {
            Some(0) => Err(DriverError::Config("ii_start must be positive".into())),
            Some(s) if s > self.ii_max => {
                Err(DriverError::Config(alloc::format!("ii_start {s} exceeds ii_max {}", self.ii_max)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompileOutcome {
    Mapped,
    NoMappingUpToIiMax,
    TimedOut,
}

impl CompileOutcome {
    pub fn tag(self) -> &'static str {
        match self {
            CompileOutcome::Mapped => "mapped",
            CompileOutcome::NoMappingUpToIiMax => "no_mapping",
            CompileOutcome::TimedOut => "timeout",
        }
    }
}

/// One solve at one interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IiAttempt {
    pub ii: u32,
    /// 0 for the first solve at this interval, then one per blocking retry.
    pub retry: u32,
    pub status: SolveStatus,
    /// `None` unless the solve was satisfiable.
    pub regalloc_ok: Option<bool>,
    pub elapsed: Duration,
    pub vars: u32,
    pub clauses: usize,
    pub conflicts: u64,
}

impl fmt::Display for IiAttempt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let regalloc = match self.regalloc_ok {
            Some(true) => "ok",
            Some(false) => "fail",
            None => "-",
        };
        write!(
            f,
            "ii={} retry={} status={} regalloc={} vars={} clauses={} conflicts={} time_ms={}",
            self.ii,
            self.retry,
            self.status.tag(),
            regalloc,
            self.vars,
            self.clauses,
            self.conflicts,
            self.elapsed.as_millis()
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompileResult {
    pub outcome: CompileOutcome,
    pub bounds: IiBounds,
    pub mapping: Option<Mapping>,
    pub register_report: Option<PressureReport>,
    pub attempts: Vec<IiAttempt>,
}

impl CompileResult {
    /// Highest interval any attempt reached.
    pub fn last_ii(&self) -> Option<u32> {
        self.attempts.last().map(|a| a.ii)
    }
}

/// The solver returned a model the rest of the pipeline could not accept.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum IntegrityError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("decoded mapping fails the independent checker: {}", first(.0))]
    CheckerRejected(Vec<MappingViolation>),
}

fn first(v: &[MappingViolation]) -> String {
    v.first().map(|x| alloc::format!("{x}")).unwrap_or_default()
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum DriverError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Sat(#[from] SatError),
    #[error("integrity: {0}")]
    Integrity(#[from] IntegrityError),
}

/// Hooks into the loop for logging and artifact dumps.
pub trait DriverObserver {
    fn formula_built(&mut self, _ii: u32, _formula: &MappingFormula) {}
    fn attempt_done(&mut self, _attempt: &IiAttempt) {}
}

impl DriverObserver for () {}

pub fn run_toolchain(
    g: &DataFlowGraph,
    arch: &CgraArchitecture,
    cfg: &DriverConfig,
    backend: &mut dyn SatBackend,
    clock: &dyn Clock,
    observer: &mut dyn DriverObserver,
) -> Result<CompileResult, DriverError> {
    cfg.validate()?;
    let bounds = compute_mii(g, arch)?;
    let budget = match cfg.timeout {
        Some(limit) => Budget::until(clock, clock.elapsed() + limit),
        None => Budget::measured(clock),
    };
    let print = fingerprint(g, arch);
    let mut result = CompileResult {
        outcome: CompileOutcome::NoMappingUpToIiMax,
        bounds,
        mapping: None,
        register_report: None,
        attempts: Vec::new(),
    };
    let start = cfg.ii_start.unwrap_or(bounds.m_ii).max(bounds.m_ii);
    for ii in start..=cfg.ii_max {
        if budget.expired() {
            result.outcome = CompileOutcome::TimedOut;
            return Ok(result);
        }
        let kms = build_kms(g, ii, cfg.slack)?;
        let mut formula = match encode_all_within(g, arch, &kms, cfg.amo, &budget) {
            Err(EncodeError::OutOfTime) => {
                result.outcome = CompileOutcome::TimedOut;
                return Ok(result);
            }
            other => other?,
        };
        observer.formula_built(ii, &formula);
        for retry in 0..=cfg.regalloc_retries {
            let t0 = budget.elapsed();
            let outcome = backend.solve(&formula.cnf, &budget)?;
            let mut attempt = IiAttempt {
                ii,
                retry,
                status: outcome.status,
                regalloc_ok: None,
                elapsed: Duration::ZERO,
                vars: formula.cnf.var_count(),
                clauses: formula.cnf.clause_count(),
                conflicts: outcome.stats.conflicts,
            };
            let finish = |mut a: IiAttempt, obs: &mut dyn DriverObserver, res: &mut CompileResult| {
                a.elapsed = budget.elapsed().saturating_sub(t0);
                obs.attempt_done(&a);
                res.attempts.push(a);
            };
            match outcome.status {
                SolveStatus::Timeout => {
                    finish(attempt, observer, &mut result);
                    result.outcome = CompileOutcome::TimedOut;
                    return Ok(result);
                }
                SolveStatus::Unsat => {
                    finish(attempt, observer, &mut result);
                    break;
                }
                SolveStatus::Sat => {}
            }
            let model = outcome.model.expect("sat outcome carries a model");
            let mapping = formula.decode(&model, print).map_err(IntegrityError::from)?;
            let violations = check_mapping(g, arch, &mapping);
            if !violations.is_empty() {
                return Err(IntegrityError::CheckerRejected(violations).into());
            }
            let lifetimes = compute_lifetimes(g, &mapping).expect("decoded mapping is total");
            let report = check_register_pressure(&lifetimes, arch, ii);
            attempt.regalloc_ok = Some(report.ok);
            finish(attempt, observer, &mut result);
            if report.ok {
                result.outcome = CompileOutcome::Mapped;
                result.mapping = Some(mapping);
                result.register_report = Some(report);
                return Ok(result);
            }
            if retry < cfg.regalloc_retries {
                let projection = formula.vars.keys().map(|(v, _)| v);
                block_model(&mut formula.cnf, &model, projection)?;
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::FrozenClock;
    use crate::dfg::{DfgBuilder, OpKind};
    use crate::sat::Cdcl;
    use alloc::vec;

    fn run(g: &DataFlowGraph, a: &CgraArchitecture, cfg: &DriverConfig) -> CompileResult {
        run_toolchain(g, a, cfg, &mut Cdcl::default(), &FrozenClock, &mut ()).unwrap()
    }

    #[test]
    fn single_node_maps_at_one() {
        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Const(9));
        let g = b.build().unwrap();
        let a = CgraArchitecture::mesh(1, 1).unwrap();
        let r = run(&g, &a, &DriverConfig::default());
        assert_eq!(r.outcome, CompileOutcome::Mapped);
        assert_eq!(r.mapping.unwrap().ii(), 1);
    }

    #[test]
    fn chain_on_one_pe() {
        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(0)).node(1, OpKind::Output(0)).edge(0, 1, 0, 0);
        let g = b.build().unwrap();
        let a = CgraArchitecture::mesh(1, 1).unwrap();
        let cfg = DriverConfig { ii_start: Some(1), ..DriverConfig::default() };
        let r = run(&g, &a, &cfg);
        assert_eq!(r.mapping.unwrap().ii(), 2);
        assert_eq!(r.bounds.m_ii, 2);
    }

    /// A value read two iterations later needs two registers whatever the interval.
    fn register_hungry() -> (DataFlowGraph, CgraArchitecture) {
        let mut b = DfgBuilder::new();
        b.node(0, OpKind::Input(0)).node(1, OpKind::Add).node(2, OpKind::Output(0));
        b.edge(0, 1, 0, 0).edge(1, 1, 1, 2).edge(1, 2, 0, 0).init(1, 1, 1, vec![0, 0]);
        let a = CgraArchitecture::mesh(2, 2).unwrap().with_registers(1).unwrap();
        (b.build().unwrap(), a)
    }

    #[test]
    fn register_failure_climbs_to_ii_max() {
        let (g, a) = register_hungry();
        let cfg = DriverConfig { ii_max: 6, ..DriverConfig::default() };
        let r = run(&g, &a, &cfg);
        assert_eq!(r.outcome, CompileOutcome::NoMappingUpToIiMax);
        assert_eq!(r.last_ii(), Some(6));
        assert!(r.attempts.iter().all(|x| x.regalloc_ok == Some(false)));

        let cfg = DriverConfig { ii_max: 3, regalloc_retries: 2, ..DriverConfig::default() };
        let r = run(&g, &a, &cfg);
        assert_eq!(r.attempts.len(), 9);
        assert_eq!(r.attempts[2].retry, 2);
    }

    #[test]
    fn config_errors() {
        let (g, a) = register_hungry();
        for cfg in [
            DriverConfig { ii_start: Some(0), ..DriverConfig::default() },
            DriverConfig { ii_start: Some(9), ii_max: 8, ..DriverConfig::default() },
            DriverConfig { ii_max: 0, ..DriverConfig::default() },
        ] {
            assert!(matches!(
                run_toolchain(&g, &a, &cfg, &mut Cdcl::default(), &FrozenClock, &mut ()),
                Err(DriverError::Config(_))
            ));
        }
    }

    #[test]
    fn expired_clock_times_out() {
        struct Stepping(core::cell::Cell<u64>);
        impl Clock for Stepping {
            fn elapsed(&self) -> Duration {
                let t = self.0.get();
                self.0.set(t + 1);
                Duration::from_secs(t)
            }
        }
        let (g, a) = register_hungry();
        let cfg = DriverConfig { timeout: Some(Duration::from_secs(3)), ..DriverConfig::default() };
        let r = run_toolchain(&g, &a, &cfg, &mut Cdcl::default(), &Stepping(Default::default()), &mut ()).unwrap();
        assert_eq!(r.outcome, CompileOutcome::TimedOut);
        assert!(r.mapping.is_none());
    }
}
