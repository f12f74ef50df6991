//! Random well-formed loop graphs and input streams, for fuzzing and
//! differential testing.

use alloc::vec::Vec;

use rand::Rng;

use crate::dfg::{DataFlowGraph, DfgBuilder, OpKind};
use crate::verify::Streams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomDfgConfig {
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Largest distance on a loop-carried edge.
    pub max_distance: u32,
    /// Percent chance that an operand of a binary node is loop-carried.
    pub carried_percent: u32,
}

impl Default for RandomDfgConfig {
    fn default() -> Self {
        RandomDfgConfig { min_nodes: 3, max_nodes: 7, max_distance: 2, carried_percent: 25 }
    }
}

/// A valid graph whose node 0 is an input and whose last node is an output.
/// Distance-0 edges always point to a later node, so the intra-iteration
/// subgraph is acyclic; loop-carried edges may point anywhere and always
/// declare initial values.
pub fn random_dfg<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomDfgConfig) -> DataFlowGraph {
    let n = rng.random_range(cfg.min_nodes.max(2)..=cfg.max_nodes.max(cfg.min_nodes).max(2));
    let mut ops = Vec::with_capacity(n);
    ops.push(OpKind::Input(0));
    let (mut inputs, mut outputs) = (1u32, 0u32);
    for _ in 1..n - 1 {
        let op = match rng.random_range(0..10) {
            0 => {
                inputs += 1;
                OpKind::Input(inputs - 1)
            }
            1 => OpKind::Const(rng.random_range(-8..=8)),
            2 => {
                outputs += 1;
                OpKind::Output(outputs - 1)
            }
            _ => OpKind::BINARY[rng.random_range(0..OpKind::BINARY.len())],
        };
        ops.push(op);
    }
    ops.push(OpKind::Output(outputs));

    let mut b = DfgBuilder::new();
    for &op in &ops {
        b.push(op);
    }
    for (v, op) in ops.iter().enumerate() {
        for operand in 0..op.arity() as u8 {
            let carried = rng.random_range(0..100) < cfg.carried_percent;
            if carried && cfg.max_distance > 0 && op.arity() == 2 {
                let u = rng.random_range(0..n);
                let d = rng.random_range(1..=cfg.max_distance);
                let init = (0..d).map(|_| rng.random_range(-100..=100)).collect();
                b.edge(u as u64, v as u64, operand, d).init(u as u64, v as u64, operand, init);
            } else {
                let u = rng.random_range(0..v);
                b.edge(u as u64, v as u64, operand, 0);
            }
        }
    }
    b.build().expect("generator only emits valid graphs")
}

/// `iterations` random values for every input stream of `g`.
pub fn random_inputs<R: Rng + ?Sized>(rng: &mut R, g: &DataFlowGraph, iterations: u32) -> Streams {
    g.nodes()
        .iter()
        .filter_map(|n| match n.op {
            OpKind::Input(s) => Some(s),
            _ => None,
        })
        .map(|s| (s, (0..iterations).map(|_| rng.random()).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_graphs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = RandomDfgConfig::default();
        let mut carried = 0;
        for _ in 0..500 {
            let g = random_dfg(&mut rng, &cfg);
            assert!(g.validate().is_empty());
            assert!((3..=7).contains(&g.node_count()));
            carried += g.edges().iter().filter(|e| e.distance > 0).count();
        }
        assert!(carried > 100);
    }
}
