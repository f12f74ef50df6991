use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use satmap_core::arch::{CgraArchitecture, Topology};
use satmap_core::budget::Budget;
use satmap_core::dfg::{DataFlowGraph, DfgEdge, DfgNode, Violation};
use satmap_core::driver::{run_toolchain, CompileOutcome, DriverConfig};
use satmap_core::encode::{encode_all, AmoEncoding};
use satmap_core::mapping::{fingerprint, Mapping, Placement};
use satmap_core::random::{random_dfg, random_inputs, RandomDfgConfig};
use satmap_core::regalloc::{check_register_pressure, compute_lifetimes, ValueLifetime};
use satmap_core::sat::{self, write_dimacs, CnfFormula, Lit, SolveStatus, Var};
use satmap_core::schedule::{build_kms, compute_mii, compute_rec_ii, MobilitySchedule, SlackPolicy, SlotLabel};
use satmap_core::verify::{brute_force_min_ii, check_mapping, find_mapping_at, interpret, simulate, OracleConfig};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn graph(seed: u64, max_nodes: usize) -> DataFlowGraph {
    let cfg = RandomDfgConfig { max_nodes, ..RandomDfgConfig::default() };
    random_dfg(&mut rng(seed), &cfg)
}

fn small_arch(pick: bool) -> CgraArchitecture {
    if pick {
        CgraArchitecture::mesh(2, 2).unwrap()
    } else {
        CgraArchitecture::mesh(1, 3).unwrap()
    }
}

fn unsat(f: &CnfFormula) -> bool {
    sat::solve(f, &Budget::unlimited()).unwrap().status == SolveStatus::Unsat
}

/// Max over simple cycles of ceil(nodes / distance), found by walking edges.
fn rec_ii_by_cycles(g: &DataFlowGraph) -> u32 {
    fn walk(g: &DataFlowGraph, start: usize, at: usize, len: u32, dist: u32, seen: &mut Vec<bool>, best: &mut u32) {
        for &ei in g.fanout(at) {
            let e = &g.edges()[ei];
            if e.dst == start {
                let (l, d) = (len + 1, dist + e.distance);
                *best = (*best).max(l.div_ceil(d));
            } else if e.dst > start && !seen[e.dst] {
                seen[e.dst] = true;
                walk(g, start, e.dst, len + 1, dist + e.distance, seen, best);
                seen[e.dst] = false;
            }
        }
    }
    let mut best = 1;
    for s in 0..g.node_count() {
        let mut seen = vec![false; g.node_count()];
        walk(g, s, s, 0, 0, &mut seen, &mut best);
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn neighbours_are_symmetric(rows in 1usize..6, cols in 1usize..6, torus: bool) {
        let t = if torus { Topology::Torus2d } else { Topology::Mesh2d };
        let a = CgraArchitecture::new(rows, cols, t, 1).unwrap();
        for p in 0..a.pe_count() {
            let ns = a.neighbors(p).unwrap();
            prop_assert!(!ns.contains(&p));
            prop_assert!(ns.len() <= 4);
            for &q in ns {
                prop_assert!(a.neighbors(q).unwrap().contains(&p));
                let ((r1, c1), (r2, c2)) = (a.coords(p), a.coords(q));
                let dr = r1.abs_diff(r2).min(if torus { rows - r1.abs_diff(r2) } else { usize::MAX });
                let dc = c1.abs_diff(c2).min(if torus { cols - c1.abs_diff(c2) } else { usize::MAX });
                prop_assert_eq!(dr + dc, 1);
            }
        }
    }

    #[test]
    fn rec_ii_matches_cycle_enumeration(seed: u64) {
        let cfg = RandomDfgConfig { min_nodes: 2, max_nodes: 8, max_distance: 3, carried_percent: 40 };
        let g = random_dfg(&mut rng(seed), &cfg);
        prop_assert_eq!(compute_rec_ii(&g).unwrap(), rec_ii_by_cycles(&g));
    }

    #[test]
    fn fold_is_a_bijection_onto_windows(seed: u64, ii in 1u32..6, slack in 0u32..6) {
        let g = graph(seed, 7);
        let ms = MobilitySchedule::build(&g, slack).unwrap();
        let kms = ms.fold(ii).unwrap();
        for n in 0..g.node_count() {
            let (lo, hi) = ms.window(n);
            prop_assert!(lo <= hi && hi < ms.horizon());
            let times: Vec<u32> = kms.candidates(n).iter().map(|c| c.time(ii)).collect();
            prop_assert_eq!(times, (lo..=hi).collect::<Vec<_>>());
            for c in kms.candidates(n) {
                prop_assert!(c.slot < ii && c.label <= kms.max_label());
                prop_assert_eq!(SlotLabel::from_time(c.time(ii), ii), *c);
            }
            for w in kms.candidates(n).windows(2) {
                prop_assert!((w[0].label, w[0].slot) < (w[1].label, w[1].slot));
            }
        }
        prop_assert_eq!(kms.max_label(), ms.horizon().div_ceil(ii) - 1);
    }

    #[test]
    fn asap_alap_respect_edges(seed: u64, slack in 0u32..4) {
        let g = graph(seed, 7);
        let ms = MobilitySchedule::build(&g, slack).unwrap();
        for e in g.intra_edges() {
            prop_assert!(ms.window(e.src).0 < ms.window(e.dst).0);
            prop_assert!(ms.window(e.src).1 < ms.window(e.dst).1);
        }
    }

    #[test]
    fn closed_form_matches_unrolling(birth in 0u32..30, span in 0u32..20, ii in 1u32..7) {
        let l = ValueLifetime { producer: 0, pe: 0, birth, death: birth + span };
        for slot in 0..ii {
            // A steady-state cycle congruent to `slot`, past every prologue.
            let t = slot + ii * (birth + span + 10);
            let live = (0..t / ii + 1)
                .filter(|k| birth + k * ii <= t && t < birth + span + k * ii)
                .count() as u32;
            prop_assert_eq!(l.live_instances(slot, ii), live);
        }
    }

    #[test]
    fn deleting_an_edge_is_reported(seed: u64, pick: usize) {
        let g = graph(seed, 7);
        prop_assume!(!g.edges().is_empty());
        let mut edges: Vec<DfgEdge> = g.edges().to_vec();
        let gone = edges.remove(pick % edges.len());
        let nodes: Vec<DfgNode> = g.nodes().to_vec();
        let broken = DataFlowGraph::new_unchecked(nodes, edges);
        let missing = Violation::MissingOperand { node: gone.dst, slot: gone.operand };
        prop_assert!(broken.validate().contains(&missing));
    }

    #[test]
    fn dimacs_is_deterministic(seed: u64, ii in 1u32..4) {
        let g = graph(seed, 6);
        let a = CgraArchitecture::mesh(2, 2).unwrap();
        let dump = || {
            let kms = build_kms(&g, ii, SlackPolicy::Auto).unwrap();
            let f = encode_all(&g, &a, &kms, AmoEncoding::Pairwise).unwrap();
            let mut s = String::new();
            write_dimacs(&f.cnf, f.var_comments(), &mut s).unwrap();
            s
        };
        prop_assert_eq!(dump(), dump());
    }
}

fn random_cnf(r: &mut ChaCha8Rng) -> CnfFormula {
    let vars = r.random_range(1..=20u32);
    let clauses = r.random_range(0..=5 * vars as usize);
    let mut f = CnfFormula::new(vars);
    for _ in 0..clauses {
        let width = r.random_range(1..=3);
        let clause: Vec<Lit> = (0..width)
            .map(|_| {
                let v = Var(r.random_range(1..=vars));
                if r.random() {
                    Lit::positive(v)
                } else {
                    Lit::negative(v)
                }
            })
            .collect();
        f.add_clause(clause);
    }
    f
}

fn enumerate_sat(f: &CnfFormula) -> bool {
    let n = f.var_count();
    let mut model = vec![false; n as usize];
    (0u32..1 << n).any(|bits| {
        for (i, m) in model.iter_mut().enumerate() {
            *m = bits >> i & 1 == 1;
        }
        f.is_satisfied_by(&model)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn solver_agrees_with_enumeration(seed: u64) {
        let f = random_cnf(&mut rng(seed));
        let out = sat::solve(&f, &Budget::unlimited()).unwrap();
        prop_assert_eq!(out.is_sat(), enumerate_sat(&f));
        if let Some(m) = &out.model {
            prop_assert!(f.is_satisfied_by(m));
        }
    }

    #[test]
    fn sequential_amo_is_equisatisfiable(seed: u64, ii in 1u32..4) {
        let g = graph(seed, 6);
        let a = CgraArchitecture::mesh(2, 3).unwrap();
        let kms = build_kms(&g, ii, SlackPolicy::Fixed(ii + 3)).unwrap();
        let pair = encode_all(&g, &a, &kms, AmoEncoding::Pairwise).unwrap();
        let seq = encode_all(&g, &a, &kms, AmoEncoding::Sequential).unwrap();
        prop_assert_eq!(unsat(&pair.cnf), unsat(&seq.cnf));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn encoder_matches_oracle_per_interval(seed: u64, pick: bool) {
        let g = graph(seed, 6);
        let a = small_arch(pick);
        let m_ii = compute_mii(&g, &a).unwrap().m_ii;
        for ii in m_ii..m_ii + 3 {
            let kms = build_kms(&g, ii, SlackPolicy::Auto).unwrap();
            let f = encode_all(&g, &a, &kms, AmoEncoding::Pairwise).unwrap();
            let out = sat::solve(&f.cnf, &Budget::unlimited()).unwrap();
            let witness = find_mapping_at(&g, &a, &kms);
            prop_assert_eq!(out.is_sat(), witness.is_some(), "ii={}", ii);
            if let Some(model) = out.model {
                let m = f.decode(&model, 0).unwrap();
                prop_assert_eq!(check_mapping(&g, &a, &m), vec![]);
            }
            if let Some(w) = witness {
                prop_assert_eq!(check_mapping(&g, &a, &w), vec![]);
                prop_assert!(!unsat(&f.with_forced(&w)));
            }
        }
    }

    #[test]
    fn checker_rejections_are_unsat_when_forced(seed: u64, pick: bool) {
        let g = graph(seed, 6);
        let a = small_arch(pick);
        let (ii, m) = brute_force_min_ii(&g, &a, 12, &OracleConfig::default()).unwrap().unwrap();
        let kms = build_kms(&g, ii, SlackPolicy::Auto).unwrap();
        let f = encode_all(&g, &a, &kms, AmoEncoding::Pairwise).unwrap();
        let mut r = rng(seed ^ 0x5eed);
        for _ in 0..6 {
            let mut bad = m.clone();
            let node = r.random_range(0..g.node_count());
            let p = Placement::new(r.random_range(0..a.pe_count()), r.random_range(0..ii), r.random_range(0..=kms.max_label()));
            bad.assign(node, p);
            if !check_mapping(&g, &a, &bad).is_empty() {
                prop_assert!(unsat(&f.with_forced(&bad)));
            } else if kms.candidates(node).contains(&SlotLabel { slot: p.slot, label: p.label }) {
                prop_assert!(!unsat(&f.with_forced(&bad)));
            }
        }
    }

    #[test]
    fn simulation_matches_interpreter(seed: u64, pick: bool, iterations in 1u32..7) {
        let g = graph(seed, 7);
        let a = small_arch(pick).with_registers(16).unwrap();
        let (_, m) = brute_force_min_ii(&g, &a, 12, &OracleConfig::default()).unwrap().unwrap();
        let lifetimes = compute_lifetimes(&g, &m).unwrap();
        prop_assume!(check_register_pressure(&lifetimes, &a, m.ii()).ok);
        let inputs = random_inputs(&mut rng(!seed), &g, iterations);
        let trace = simulate(&g, &a, &m, iterations, &inputs).unwrap();
        prop_assert_eq!(trace.outputs, interpret(&g, iterations, &inputs).unwrap());
    }

    #[test]
    fn driver_is_minimal_and_reproducible(seed: u64, pick: bool) {
        let g = graph(seed, 6);
        let a = small_arch(pick).with_registers(16).unwrap();
        let cfg = DriverConfig { ii_max: 12, ..DriverConfig::default() };
        let mut backend = sat::Cdcl::default();
        let r = run_toolchain(&g, &a, &cfg, &mut backend, &satmap_core::budget::FrozenClock, &mut ()).unwrap();
        let (oracle_ii, _) = brute_force_min_ii(&g, &a, 12, &OracleConfig::default()).unwrap().unwrap();
        prop_assert_eq!(r.outcome, CompileOutcome::Mapped);
        let m: Mapping = r.mapping.unwrap();
        prop_assert!(m.ii() >= compute_mii(&g, &a).unwrap().m_ii);
        prop_assert_eq!(m.ii(), oracle_ii);
        prop_assert_eq!(m.fingerprint(), fingerprint(&g, &a));
        let again = DriverConfig { ii_start: Some(m.ii()), ..cfg };
        let r2 = run_toolchain(&g, &a, &again, &mut backend, &satmap_core::budget::FrozenClock, &mut ()).unwrap();
        prop_assert_eq!(r2.mapping.map(|x| x.ii()), Some(m.ii()));
    }
}
