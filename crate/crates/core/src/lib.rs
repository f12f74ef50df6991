//! Modulo-scheduled mapping of loop data-flow graphs onto coarse-grained
//! reconfigurable arrays (CGRAs) through a SAT formulation.
//!
//! The pipeline folds an ASAP/ALAP mobility schedule into a kernel mobility
//! schedule for a candidate initiation interval, encodes placement,
//! PE exclusivity and neighbour routing as CNF, solves it, and validates the
//! decoded mapping against register capacity. The interval is raised until a
//! mapping survives every stage.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, process
//! handling and the command line live in the `satmap` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod arch;
pub mod budget;
pub mod dfg;
pub mod driver;
pub mod encode;
pub mod mapping;
pub mod random;
pub mod regalloc;
pub mod sat;
pub mod schedule;
pub mod verify;
