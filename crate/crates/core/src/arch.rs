//! Target device: a rows x cols grid of processing elements.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// PE index in row-major order.
pub type PeId = usize;

pub const DEFAULT_REGISTERS_PER_PE: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Topology {
    #[default]
    Mesh2d,
    Torus2d,
}

impl Topology {
    pub fn tag(self) -> &'static str {
        match self {
            Topology::Mesh2d => "mesh2d",
            Topology::Torus2d => "torus2d",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "mesh2d" => Some(Topology::Mesh2d),
            "torus2d" => Some(Topology::Torus2d),
            _ => None,
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ArchError {
    #[error("grid dimensions must be positive (got {rows}x{cols})")]
    ZeroDimension { rows: usize, cols: usize },
    #[error("registers_per_pe must be positive")]
    NoRegisters,
    #[error("PE {pe} out of range for a {count}-PE array")]
    PeOutOfRange { pe: PeId, count: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CgraArchitecture {
    rows: usize,
    cols: usize,
    topology: Topology,
    registers_per_pe: u32,
    adjacency: Vec<Vec<PeId>>,
}

impl CgraArchitecture {
    pub fn new(rows: usize, cols: usize, topology: Topology, registers_per_pe: u32) -> Result<Self, ArchError> {
        if rows == 0 || cols == 0 {
            return Err(ArchError::ZeroDimension { rows, cols });
        }
        if registers_per_pe == 0 {
            return Err(ArchError::NoRegisters);
        }
        let mut arch = CgraArchitecture { rows, cols, topology, registers_per_pe, adjacency: Vec::new() };
        arch.adjacency = (0..rows * cols).map(|p| arch.compute_neighbors(p)).collect();
        Ok(arch)
    }

    /// A mesh with the default register file size.
    pub fn mesh(rows: usize, cols: usize) -> Result<Self, ArchError> {
        Self::new(rows, cols, Topology::Mesh2d, DEFAULT_REGISTERS_PER_PE)
    }

    pub fn torus(rows: usize, cols: usize) -> Result<Self, ArchError> {
        Self::new(rows, cols, Topology::Torus2d, DEFAULT_REGISTERS_PER_PE)
    }

    pub fn with_registers(mut self, registers_per_pe: u32) -> Result<Self, ArchError> {
        if registers_per_pe == 0 {
            return Err(ArchError::NoRegisters);
        }
        self.registers_per_pe = registers_per_pe;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn registers_per_pe(&self) -> u32 {
        self.registers_per_pe
    }

    pub fn pe_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn coords(&self, p: PeId) -> (usize, usize) {
        (p / self.cols, p % self.cols)
    }

    pub fn pe_at(&self, row: usize, col: usize) -> PeId {
        row * self.cols + col
    }

    fn check(&self, p: PeId) -> Result<(), ArchError> {
        if p < self.pe_count() {
            Ok(())
        } else {
            Err(ArchError::PeOutOfRange { pe: p, count: self.pe_count() })
        }
    }

    fn compute_neighbors(&self, p: PeId) -> Vec<PeId> {
        let (r, c) = self.coords(p);
        let (rows, cols) = (self.rows, self.cols);
        let mut out = BTreeSet::new();
        match self.topology {
            Topology::Mesh2d => {
                if r > 0 {
                    out.insert(self.pe_at(r - 1, c));
                }
                if r + 1 < rows {
                    out.insert(self.pe_at(r + 1, c));
                }
                if c > 0 {
                    out.insert(self.pe_at(r, c - 1));
                }
                if c + 1 < cols {
                    out.insert(self.pe_at(r, c + 1));
                }
            }
            Topology::Torus2d => {
                out.insert(self.pe_at((r + rows - 1) % rows, c));
                out.insert(self.pe_at((r + 1) % rows, c));
                out.insert(self.pe_at(r, (c + cols - 1) % cols));
                out.insert(self.pe_at(r, (c + 1) % cols));
            }
        }
        out.remove(&p);
        out.into_iter().collect()
    }

    /// PEs directly linked to `p`, ascending, excluding `p`.
    pub fn neighbors(&self, p: PeId) -> Result<&[PeId], ArchError> {
        self.check(p)?;
        Ok(&self.adjacency[p])
    }

    /// Whether a value produced on `from` can be read on `to` in one hop.
    /// A PE always reaches itself.
    pub fn reaches(&self, from: PeId, to: PeId) -> bool {
        from == to || self.adjacency[from].binary_search(&to).is_ok()
    }

    /// All PEs within `hops` links of `p`, including `p`.
    pub fn reachable_set(&self, p: PeId, hops: usize) -> Result<BTreeSet<PeId>, ArchError> {
        self.check(p)?;
        let mut seen = BTreeSet::from([p]);
        let mut frontier = alloc::vec![p];
        for _ in 0..hops {
            let mut next = Vec::new();
            for &q in &frontier {
                for &r in &self.adjacency[q] {
                    if seen.insert(r) {
                        next.push(r);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        Ok(seen)
    }

    /// Largest hop distance between two PEs.
    pub fn diameter(&self) -> usize {
        match self.topology {
            Topology::Mesh2d => (self.rows - 1) + (self.cols - 1),
            Topology::Torus2d => self.rows / 2 + self.cols / 2,
        }
    }

    /// PE permutations that preserve the link structure: mirror images, the
    /// transpose on square grids, and cyclic shifts on a torus. Includes the
    /// identity.
    pub fn symmetries(&self) -> Vec<Vec<PeId>> {
        let (rows, cols) = (self.rows, self.cols);
        let mut maps: BTreeSet<Vec<PeId>> = BTreeSet::new();
        let shifts: Vec<(usize, usize)> = match self.topology {
            Topology::Mesh2d => alloc::vec![(0, 0)],
            Topology::Torus2d => (0..rows).flat_map(|dr| (0..cols).map(move |dc| (dr, dc))).collect(),
        };
        let transposes: &[bool] = if rows == cols { &[false, true] } else { &[false] };
        for &(dr, dc) in &shifts {
            for flip_r in [false, true] {
                for flip_c in [false, true] {
                    for &transpose in transposes {
                        let map = (0..rows * cols)
                            .map(|p| {
                                let (mut r, mut c) = self.coords(p);
                                r = (r + dr) % rows;
                                c = (c + dc) % cols;
                                if flip_r {
                                    r = rows - 1 - r;
                                }
                                if flip_c {
                                    c = cols - 1 - c;
                                }
                                if transpose {
                                    core::mem::swap(&mut r, &mut c);
                                }
                                self.pe_at(r, c)
                            })
                            .collect();
                        maps.insert(map);
                    }
                }
            }
        }
        maps.into_iter().collect()
    }

    /// Smallest PE of each orbit under [`CgraArchitecture::symmetries`].
    pub fn orbit_representatives(&self) -> Vec<PeId> {
        let syms = self.symmetries();
        (0..self.pe_count()).filter(|&p| syms.iter().all(|s| s[p] >= p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn mesh_neighbors() {
        let a = CgraArchitecture::mesh(2, 2).unwrap();
        assert_eq!(a.neighbors(0).unwrap(), &[1, 2]);
        let a = CgraArchitecture::mesh(3, 3).unwrap();
        assert_eq!(a.neighbors(4).unwrap(), &[1, 3, 5, 7]);
        assert_eq!(a.neighbors(9), Err(ArchError::PeOutOfRange { pe: 9, count: 9 }));
    }

    #[test]
    fn torus_wrap_duplicates_collapse() {
        // E and W of PE 0 are both PE 1; N and S are both PE 2.
        let a = CgraArchitecture::torus(2, 2).unwrap();
        assert_eq!(a.neighbors(0).unwrap(), &[1, 2]);
        let a = CgraArchitecture::torus(3, 3).unwrap();
        assert_eq!(a.neighbors(0).unwrap(), &[1, 2, 3, 6]);
    }

    #[test]
    fn reachable() {
        let a = CgraArchitecture::mesh(2, 2).unwrap();
        assert_eq!(a.reachable_set(3, 0).unwrap(), BTreeSet::from([3]));
        assert_eq!(a.reachable_set(0, 1).unwrap(), BTreeSet::from([0, 1, 2]));
        let a = CgraArchitecture::mesh(3, 3).unwrap();
        assert_eq!(a.reachable_set(0, 2).unwrap(), BTreeSet::from([0, 1, 2, 3, 4, 6]));
    }

    #[test]
    fn bad_dimensions() {
        assert_eq!(CgraArchitecture::mesh(0, 2), Err(ArchError::ZeroDimension { rows: 0, cols: 2 }));
        assert_eq!(CgraArchitecture::new(1, 1, Topology::Mesh2d, 0), Err(ArchError::NoRegisters));
    }

    #[test]
    fn orbits() {
        assert_eq!(CgraArchitecture::mesh(2, 2).unwrap().orbit_representatives(), vec![0]);
        assert_eq!(CgraArchitecture::mesh(1, 3).unwrap().orbit_representatives(), vec![0, 1]);
        assert_eq!(CgraArchitecture::mesh(3, 3).unwrap().orbit_representatives(), vec![0, 1, 4]);
        assert_eq!(CgraArchitecture::torus(3, 3).unwrap().orbit_representatives(), vec![0]);
        assert_eq!(CgraArchitecture::mesh(2, 3).unwrap().orbit_representatives(), vec![0, 1]);
    }

    #[test]
    fn symmetries_preserve_links() {
        for a in [
            CgraArchitecture::mesh(2, 3).unwrap(),
            CgraArchitecture::mesh(3, 3).unwrap(),
            CgraArchitecture::torus(3, 4).unwrap(),
        ] {
            for s in a.symmetries() {
                for p in 0..a.pe_count() {
                    for q in 0..a.pe_count() {
                        assert_eq!(a.reaches(p, q), a.reaches(s[p], s[q]));
                    }
                }
            }
        }
    }
}
