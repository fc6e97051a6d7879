//! Property tests against brute-force oracles.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use refiner_core::depgraph::{slice_variable, DependencyGraph, DgEdge, EdgeShape, NodeKey};
use refiner_core::equivalence::{check_equivalence, EquivConfig, EquivalenceVerdict};
use refiner_core::flowgraphs::{build_cfg, build_dfg, ControlFlowGraph, InstrRef};
use refiner_core::frontend::{lower_ir, parse_unit, render_unit, IrInstr, IrOp};
use refiner_core::llm_bridge::EditSet;
use refiner_core::typecheck::{meet, Family, SolType, TypeClass};

// ---------------------------------------------------------------------------
// Random pseudocode

#[derive(Debug, Clone)]
enum S {
    Assign(usize, String),
    Store(String),
    StoreKeyed(usize, String),
    If(String, Vec<S>, Vec<S>),
    While(String, Vec<S>),
    Return(String),
}

const VARS: [&str; 3] = ["a", "b", "c"];

fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (0..3usize).prop_map(|i| VARS[i].to_string()),
        (0u8..9).prop_map(|n| n.to_string()),
        Just("stor_0".to_string()),
        (0..3usize).prop_map(|i| format!("stor_1[{}]", VARS[i])),
    ];
    leaf.prop_recursive(2, 6, 2, |inner| {
        (inner.clone(), prop_oneof![Just("+"), Just("-"), Just("&"), Just("^"), Just("<"), Just("==")], inner)
            .prop_map(|(l, op, r)| format!("({l} {op} {r})"))
    })
}

/// `loops` admits `while`; `depth` bounds nesting and `len` the top-level count.
fn stmts(loops: bool, depth: u32, len: usize) -> impl Strategy<Value = Vec<S>> {
    let leaf = prop_oneof![
        4 => (0..3usize, expr()).prop_map(|(v, e)| S::Assign(v, e)),
        1 => expr().prop_map(S::Store),
        1 => (0..3usize, expr()).prop_map(|(k, e)| S::StoreKeyed(k, e)),
        1 => expr().prop_map(S::Return),
    ];
    let stmt = leaf.prop_recursive(depth, 12, 3, move |inner| {
        let block = prop::collection::vec(inner, 1..3);
        if loops {
            prop_oneof![
                (expr(), block.clone(), block.clone()).prop_map(|(c, t, e)| S::If(c, t, e)),
                (expr(), block).prop_map(|(c, b)| S::While(c, b)),
            ]
            .boxed()
        } else {
            (expr(), block.clone(), block).prop_map(|(c, t, e)| S::If(c, t, e)).boxed()
        }
    });
    prop::collection::vec(stmt, 1..len)
}

fn render(body: &[S], indent: usize, out: &mut String) {
    let pad = "    ".repeat(indent);
    for s in body {
        match s {
            S::Assign(v, e) => out.push_str(&format!("{pad}{} = {e};\n", VARS[*v])),
            S::Store(e) => out.push_str(&format!("{pad}stor_0 = {e};\n")),
            S::StoreKeyed(k, e) => out.push_str(&format!("{pad}stor_1[{}] = {e};\n", VARS[*k])),
            S::Return(e) => out.push_str(&format!("{pad}return {e};\n")),
            S::If(c, t, e) => {
                out.push_str(&format!("{pad}if ({c}) {{\n"));
                render(t, indent + 1, out);
                out.push_str(&format!("{pad}}} else {{\n"));
                render(e, indent + 1, out);
                out.push_str(&format!("{pad}}}\n"));
            }
            S::While(c, b) => {
                out.push_str(&format!("{pad}while ({c}) {{\n"));
                render(b, indent + 1, out);
                out.push_str(&format!("{pad}}}\n"));
            }
        }
    }
}

fn program(body: &[S]) -> String {
    let mut out = String::from("function f(a, b) public {\n    c = 0;\n");
    render(body, 1, &mut out);
    out.push_str("}\n");
    out
}

// ---------------------------------------------------------------------------
// Reaching definitions by path search

fn defines(i: &IrInstr, var: &str) -> Option<bool> {
    match &i.op {
        IrOp::StoreStorage { slot, keys, .. } if format!("@{slot}") == var => Some(keys.is_empty()),
        IrOp::StoreIndex { .. } if i.def().as_deref() == Some(var) => Some(false),
        _ if i.def().as_deref() == Some(var) => Some(true),
        _ => None,
    }
}

fn reads(i: &IrInstr) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = i.uses().into_iter().collect();
    if let IrOp::LoadStorage { slot, .. } = &i.op {
        out.insert(format!("@{slot}"));
    }
    out
}

/// Def-use pairs: a use is reached by a def when some path from just after
/// the def arrives at the use without passing a killing definition.
fn oracle_edges(cfg: &ControlFlowGraph) -> BTreeSet<(InstrRef, InstrRef, String)> {
    let mut out = BTreeSet::new();
    for (b, block) in cfg.blocks.iter().enumerate() {
        for (i, instr) in block.instrs.iter().enumerate() {
            let mut vars: Vec<String> = instr.def().into_iter().collect();
            if let IrOp::StoreStorage { slot, .. } = &instr.op {
                vars = vec![format!("@{slot}")];
            }
            for var in vars {
                let def = InstrRef { block: b, index: i };
                // Program points: (block, k) is just before instruction k.
                let mut seen = BTreeSet::new();
                let mut stack = vec![(b, i + 1)];
                while let Some((pb, k)) = stack.pop() {
                    if !seen.insert((pb, k)) {
                        continue;
                    }
                    let instrs = &cfg.blocks[pb].instrs;
                    if k == instrs.len() {
                        for e in cfg.edges.iter().filter(|e| e.0 == pb) {
                            stack.push((e.1, 0));
                        }
                        continue;
                    }
                    let here = &instrs[k];
                    if reads(here).contains(&var) {
                        out.insert((def, InstrRef { block: pb, index: k }, var.clone()));
                    }
                    if defines(here, &var) != Some(true) {
                        stack.push((pb, k + 1));
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Random dependency graphs

fn random_dg(n: usize, edges: &[(usize, usize, u8)]) -> DependencyGraph {
    let mut dg = DependencyGraph::default();
    for i in 0..n {
        dg.intern(NodeKey::local("f", format!("n{i}")), format!("n{i}"), Default::default(), None, false);
    }
    for &(a, b, k) in edges {
        let shape = [EdgeShape::VarToVar, EdgeShape::StateToState, EdgeShape::DefUse][k as usize % 3];
        let edge = DgEdge { src: a % n, dst: b % n, label: shape.label(), shape, role: None, annotation: None, site: None };
        dg.add_edge(edge).unwrap();
    }
    dg
}

/// All-pairs shortest undirected distances by repeated relaxation.
fn oracle_distances(n: usize, dg: &DependencyGraph, from: usize) -> BTreeMap<usize, u32> {
    let mut dist = vec![u32::MAX; n];
    dist[from] = 0;
    for _ in 0..n {
        for e in &dg.edges {
            for (x, y) in [(e.src, e.dst), (e.dst, e.src)] {
                if dist[x] != u32::MAX && dist[x] + 1 < dist[y] {
                    dist[y] = dist[x] + 1;
                }
            }
        }
    }
    dist.into_iter().enumerate().filter(|(_, d)| *d != u32::MAX).collect()
}

// ---------------------------------------------------------------------------
// Lattice samples

fn sample_types() -> Vec<SolType> {
    let mut out = vec![
        SolType::Bool,
        SolType::Int { bits: 8, signed: false },
        SolType::Int { bits: 256, signed: true },
        SolType::Address { payable: false },
        SolType::Address { payable: true },
        SolType::FixedBytes(1),
        SolType::FixedBytes(32),
        SolType::DynBytes,
        SolType::String,
        SolType::Array(Box::new(SolType::Bool), None),
        SolType::Array(Box::new(SolType::Int { bits: 256, signed: false }), Some(3)),
        SolType::Mapping(Box::new(SolType::FixedBytes(32)), Box::new(SolType::Int { bits: 256, signed: false })),
        SolType::Tuple(vec![SolType::Bool, SolType::DynBytes]),
        SolType::Callable(vec![SolType::Bool], Box::new(SolType::Bool)),
        SolType::Unknown,
        SolType::Bottom,
    ];
    for f in all_families() {
        out.push(SolType::Constrained(f));
    }
    out
}

fn all_families() -> Vec<Family> {
    (0u32..1 << TypeClass::ALL.len())
        .map(|mask| {
            let classes: Vec<TypeClass> = TypeClass::ALL.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, c)| *c).collect();
            Family::of(&classes)
        })
        .collect()
}

const RULE_FAMILIES: [Family; 10] = [
    Family::BOOL,
    Family::BOOL_INT,
    Family::BOOL_INT_BYTE,
    Family::ORDERED,
    Family::STR_BYTES,
    Family::ITERABLE,
    Family::INDEXABLE,
    Family::INT,
    Family::CALLABLE,
    Family::ALL,
];

#[test]
fn meet_is_idempotent_and_commutative_over_rule_families() {
    for t in sample_types() {
        for f in RULE_FAMILIES {
            let once = meet(&t, f);
            assert_eq!(meet(&once, f), once, "meet({t}, {f:?}) is not idempotent");
            for g in RULE_FAMILIES {
                assert_eq!(meet(&meet(&t, f), g), meet(&meet(&t, g), f), "{t} with {f:?} and {g:?}");
            }
        }
    }
}

fn no_shortcut() -> EquivConfig {
    EquivConfig { identical_code_shortcut: false, ..EquivConfig::default() }
}

fn verdict_kind(v: &EquivalenceVerdict) -> &'static str {
    match v {
        EquivalenceVerdict::Equivalent => "equivalent",
        EquivalenceVerdict::NonEquivalent { .. } => "non_equivalent",
        EquivalenceVerdict::Inconclusive { .. } => "inconclusive",
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, .. ProptestConfig::default() })]

    #[test]
    fn dfg_matches_path_search(body in stmts(true, 2, 6)) {
        let src = program(&body);
        let unit = parse_unit("p", &src);
        prop_assert!(unit.skipped.is_empty(), "{src}");
        let ir = lower_ir(&unit).unwrap();
        let cfg = build_cfg(&ir.functions[0]);
        let dfg = build_dfg(&cfg);
        let got: BTreeSet<_> = dfg.edges.iter().map(|e| (e.def, e.use_site, e.var.clone())).collect();
        prop_assert_eq!(got, oracle_edges(&cfg), "{}", src);
    }

    #[test]
    fn render_parse_round_trip(body in stmts(true, 2, 6)) {
        let src = program(&body);
        let once = render_unit(&parse_unit("p", &src));
        let twice = render_unit(&parse_unit("p", &once));
        prop_assert_eq!(&once, &twice);
        let a = lower_ir(&parse_unit("p", &src)).unwrap();
        let b = lower_ir(&parse_unit("p", &once)).unwrap();
        prop_assert_eq!(a.functions[0].render(), b.functions[0].render());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, .. ProptestConfig::default() })]

    #[test]
    fn slice_matches_reachability(n in 1usize..50, edges in prop::collection::vec((0usize..50, 0usize..50, 0u8..3), 0..120), target in 0usize..50) {
        let dg = random_dg(n, &edges);
        let target = target % n;
        let slice = slice_variable(&dg, target).unwrap();
        prop_assert_eq!(slice.hops, oracle_distances(n, &dg, target));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, .. ProptestConfig::default() })]

    #[test]
    fn loop_free_functions_are_equivalent_to_themselves(body in stmts(false, 1, 4)) {
        let src = program(&body);
        let u = parse_unit("p", &src);
        let v = check_equivalence(&u, &u, "f", &EditSet::default(), &no_shortcut()).unwrap();
        prop_assert_eq!(v, EquivalenceVerdict::Equivalent, "{}", src);
    }

    #[test]
    fn verdicts_are_symmetric(a in stmts(false, 1, 4), b in stmts(false, 1, 4)) {
        let (pa, pb) = (program(&a), program(&b));
        let (ua, ub) = (parse_unit("p", &pa), parse_unit("p", &pb));
        let ab = check_equivalence(&ua, &ub, "f", &EditSet::default(), &no_shortcut()).unwrap();
        let ba = check_equivalence(&ub, &ua, "f", &EditSet::default(), &no_shortcut()).unwrap();
        prop_assert_eq!(verdict_kind(&ab), verdict_kind(&ba), "{}\n{}", pa, pb);
    }
}
