//! Acceptance gate. Each criterion is its own test and prints one
//! `criterion N: PASS|FAIL ...` line (run with `--nocapture` to see them).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use refiner_core::depgraph::{analyze, slice_variable, BuiltinTable, DependencyGraph, DgEdge, EdgeLabel, EdgeShape, NodeKey, Role};
use refiner_core::equivalence::{check_equivalence, run, EquivConfig, EquivalenceVerdict, Model};
use refiner_core::evalkit::{percent, Counts};
use refiner_core::frontend::{lower_ir, parse_unit, render_function, SourceUnit};
use refiner_core::llm_bridge::{EditSet, MockProvider};
use refiner_core::pipeline::{sha256_hex, Engine, OutcomeStatus, RunConfig};
use refiner_core::promptgen::{build_bundle, enumerate_targets, RowKind, TemplateSet, DEFAULT_TOKEN_BUDGET};
use refiner_core::typecheck::{self, meet, Family, Rule, SolType, TypeClass};

/// Percentage points allowed between a computed metric and the published one.
const METRIC_TOLERANCE_PP: f64 = 0.01;
const C1_LIMIT: Duration = Duration::from_secs(2);
const C2_LIMIT: Duration = Duration::from_secs(1);
const C3_LIMIT: Duration = Duration::from_secs(10);
const C4_LIMIT_PER_FUNCTION: Duration = Duration::from_secs(5);
const C6_LIMIT: Duration = Duration::from_secs(10);
const C6_GRAPHS: usize = 200;
const C6_MAX_NODES: usize = 50;
const C9_MIN_CASES: usize = 22;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

fn load(rel: &str) -> (String, SourceUnit) {
    let text = std::fs::read_to_string(fixture(rel)).unwrap();
    let name = Path::new(rel).file_stem().unwrap().to_string_lossy().into_owned();
    let unit = parse_unit(&name, &text);
    (text, unit)
}

/// Prints the criterion line, then fails the test if any check failed.
fn report(n: u32, failures: &[String], detail: &str) {
    if failures.is_empty() {
        println!("criterion {n}: PASS ({detail})");
    } else {
        println!("criterion {n}: FAIL ({detail}): {}", failures.join("; "));
        panic!("criterion {n} failed: {}", failures.join("; "));
    }
}

fn check(failures: &mut Vec<String>, ok: bool, what: impl Into<String>) {
    if !ok {
        failures.push(what.into());
    }
}

fn corpus() -> Vec<PathBuf> {
    ["corpus/token.dsol", "corpus/vault.dsol", "corpus/registry.dsol", "corpus/loops.dsol"].iter().map(|p| fixture(p)).collect()
}

#[test]
fn criterion_1_type_chain() {
    let started = Instant::now();
    let mut f = Vec::new();
    let (_, unit) = load("token_key.dsol");
    let dg = analyze(&unit, BuiltinTable::shipped()).unwrap().dg;
    let td = |src: &str, dst: &str, shape: EdgeShape, role: Option<Role>| {
        dg.edges.iter().any(|e| {
            e.label == EdgeLabel::TD && e.shape == shape && dg.nodes[e.src].label == src && dg.nodes[e.dst].label == dst && (role.is_none() || e.role == role)
        })
    };
    check(&mut f, td("return keccak256(abi.encodePacked(varg0))", "_getTokenKey::ret", EdgeShape::ExprToVar, None), "hash result to return");
    check(&mut f, td("_getTokenKey::ret", "v0", EdgeShape::VarToVar, None), "return to v0");
    check(&mut f, td("v0", "uintStorage", EdgeShape::VarToVar, Some(Role::Key)), "v0 as mapping key");

    let mock = MockProvider::from_file(&fixture("scenarios/token_key.json")).unwrap();
    let (r, last) = Engine::new(&mock, RunConfig::default()).unwrap().run_source(unit, Path::new("token_key.dsol"));
    let accepted = r.outcomes.iter().find(|o| o.target.ends_with("type:uintStorage")).map(|o| o.status);
    check(&mut f, accepted == Some(OutcomeStatus::Accepted), format!("uintStorage outcome {accepted:?}"));
    let last = last.unwrap();
    let ty = last.storage.iter().find(|s| s.name == "uintStorage").map(|s| refiner_core::frontend::render_type(&s.ty));
    check(&mut f, ty.as_deref() == Some("mapping(bytes32=>uint256)"), format!("final type {ty:?}"));
    let violations = typecheck::check(&last, BuiltinTable::shipped());
    check(&mut f, violations.is_empty(), format!("violations: {}", violations.feedback()));
    let elapsed = started.elapsed();
    check(&mut f, elapsed < C1_LIMIT, format!("took {elapsed:?}"));
    report(1, &f, &format!("3 TD edges, mapping(bytes32=>uint256) accepted, {elapsed:?}"));
}

#[test]
fn criterion_2_type_rule_rejection() {
    let started = Instant::now();
    let mut f = Vec::new();
    let (text, unit) = load("keccak_violation.dsol");
    let r = typecheck::check(&unit, BuiltinTable::shipped());
    check(&mut f, r.len() == 1, format!("{} violations", r.len()));
    if let Some(v) = r.violations.first() {
        check(&mut f, v.rule == Rule::Call, format!("rule {:?}", v.rule));
        check(&mut f, v.found == "bytes32" && v.expected.contains("uint256"), format!("{} vs {}", v.found, v.expected));
    }

    // The same declaration proposed by a reply is caught in the first iteration.
    let untyped = parse_unit("keccak", &text.replace("uint256 key =", "key ="));
    let reply = "```json\n[{\"op\": \"retype\", \"name\": \"register::key\", \"type\": \"uint256\"}]\n```";
    let mock = MockProvider::always(&[reply]);
    let engine = Engine::new(&mock, RunConfig::default()).unwrap();
    let (r, _) = engine.run_source(untyped, Path::new("keccak.dsol"));
    let outcome = r.outcomes.iter().find(|o| o.target.ends_with("type:register::key"));
    let first = outcome.and_then(|o| o.iterations.first());
    check(&mut f, first.map(|i| i.status) == Some(OutcomeStatus::RejectedViolations), format!("first iteration {:?}", first.map(|i| i.status)));
    let cited = first.is_some_and(|i| i.violations.iter().any(|v| v.rule == Rule::Call && v.found == "bytes32" && v.expected.contains("uint256")));
    check(&mut f, cited, "iteration 1 does not cite bytes32 -> uint256");
    let elapsed = started.elapsed();
    check(&mut f, elapsed < C2_LIMIT, format!("took {elapsed:?}"));
    report(2, &f, &format!("one Call violation, recorded in iteration 1, {elapsed:?}"));
}

#[test]
fn criterion_3_equivalence_rejection() {
    let started = Instant::now();
    let mut f = Vec::new();
    let (_, original) = load("ecrecover_original.dsol");
    let (_, optimized) = load("ecrecover_optimized.dsol");
    let config = EquivConfig { identical_code_shortcut: false, ..EquivConfig::default() };
    let verdict = check_equivalence(&original, &optimized, "execute", &EditSet::default(), &config).unwrap();
    match &verdict {
        EquivalenceVerdict::NonEquivalent { witness } => {
            // Replay independently through both interpreters.
            let model = Model { inputs: witness.inputs.clone(), applications: witness.applications.clone() };
            let ir1 = lower_ir(&original).unwrap();
            let ir2 = lower_ir(&optimized).unwrap();
            let f1 = ir1.function("execute").unwrap();
            let args: Vec<_> = f1.params.iter().map(|p| model.input(&format!("p:{p}"))).collect();
            let inputs = |n: &str| model.input(n);
            let mut t1 = model.table();
            let mut t2 = model.table();
            let a = run(&ir1, "execute", &args, &inputs, &|s| s.to_string(), &mut t1).unwrap();
            let b = run(&ir2, "execute", &args, &inputs, &|s| s.to_string(), &mut t2).unwrap();
            check(&mut f, !a.reverted && !b.reverted, "a replay reverted");
            check(&mut f, a.returns != b.returns, format!("returns agree: {:?}", a.returns));
        }
        other => f.push(format!("verdict {other:?}")),
    }
    let elapsed = started.elapsed();
    check(&mut f, elapsed < C3_LIMIT, format!("took {elapsed:?}"));
    report(3, &f, &format!("NonEquivalent with a replayed witness, {elapsed:?}"));
}

#[test]
fn criterion_4_reflexive_equivalence() {
    let mut f = Vec::new();
    let config = EquivConfig { identical_code_shortcut: false, ..EquivConfig::default() };
    let (mut loop_free, mut looping, mut slowest) = (0, 0, Duration::ZERO);
    for path in corpus() {
        let text = std::fs::read_to_string(&path).unwrap();
        let unit = parse_unit("corpus", &text);
        check(&mut f, unit.skipped.is_empty(), format!("{} skipped functions", path.display()));
        for func in &unit.functions {
            let body = render_function(func);
            let has_loop = body.contains("while (") || body.contains("for (");
            let started = Instant::now();
            let v = check_equivalence(&unit, &unit, &func.name, &EditSet::default(), &config);
            let elapsed = started.elapsed();
            slowest = slowest.max(elapsed);
            check(&mut f, elapsed < C4_LIMIT_PER_FUNCTION, format!("{} took {elapsed:?}", func.name));
            match (has_loop, v) {
                (false, Ok(EquivalenceVerdict::Equivalent)) => loop_free += 1,
                (true, Ok(EquivalenceVerdict::Equivalent | EquivalenceVerdict::Inconclusive { .. })) => looping += 1,
                (_, other) => f.push(format!("{}: {other:?}", func.name)),
            }
        }
    }
    check(&mut f, loop_free + looping >= 30, format!("only {} functions", loop_free + looping));
    report(4, &f, &format!("{loop_free} loop-free and {looping} looping functions, slowest {slowest:?}"));
}

#[test]
fn criterion_5_iteration_limit() {
    let mut f = Vec::new();
    for (scenario, iterations, status) in [("always_bad", 3, OutcomeStatus::RejectedViolations), ("fix_second", 2, OutcomeStatus::Accepted)] {
        let mock = MockProvider::from_file(&fixture(&format!("scenarios/{scenario}.json"))).unwrap();
        let (_, unit) = load("token_key.dsol");
        let (r, _) = Engine::new(&mock, RunConfig::default()).unwrap().run_source(unit, Path::new("token_key.dsol"));
        check(&mut f, !r.outcomes.is_empty(), format!("{scenario}: no outcomes"));
        for o in &r.outcomes {
            check(
                &mut f,
                o.iterations.len() == iterations && o.status == status,
                format!("{scenario} {}: {} iteration(s), {:?}", o.target, o.iterations.len(), o.status),
            );
        }
    }
    report(5, &f, "3 iterations when always rejected, 2 when fixed on retry");
}

/// Undirected BFS distances computed from an adjacency matrix.
fn bfs_oracle(n: usize, edges: &[(usize, usize)], from: usize) -> BTreeMap<usize, u32> {
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in edges {
        adj[a][b] = true;
        adj[b][a] = true;
    }
    let mut dist = BTreeMap::from([(from, 0u32)]);
    let mut queue = VecDeque::from([from]);
    while let Some(x) = queue.pop_front() {
        for y in 0..n {
            if adj[x][y] && !dist.contains_key(&y) {
                dist.insert(y, dist[&x] + 1);
                queue.push_back(y);
            }
        }
    }
    dist
}

#[test]
fn criterion_6_slicing_oracle() {
    let started = Instant::now();
    let mut f = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let shapes = [EdgeShape::VarToVar, EdgeShape::TypeToExpr, EdgeShape::StateToState, EdgeShape::ExprToState, EdgeShape::DefUse];
    let mut agree = 0;
    for g in 0..C6_GRAPHS {
        let n = rng.gen_range(1..=C6_MAX_NODES);
        let m = rng.gen_range(0..=2 * n);
        let mut dg = DependencyGraph::default();
        for i in 0..n {
            dg.intern(NodeKey::local("g", format!("n{i}")), format!("n{i}"), Default::default(), None, false);
        }
        let mut pairs = Vec::new();
        for _ in 0..m {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let shape = shapes[rng.gen_range(0..shapes.len())];
            dg.add_edge(DgEdge { src: a, dst: b, label: shape.label(), shape, role: None, annotation: None, site: None }).unwrap();
            pairs.push((a, b));
        }
        let target = rng.gen_range(0..n);
        let slice = slice_variable(&dg, target).unwrap();
        let expected = bfs_oracle(n, &pairs, target);
        let members: BTreeSet<usize> = expected.keys().copied().collect();
        let edges_ok = slice.edges.iter().all(|&e| members.contains(&dg.edges[e].src) && members.contains(&dg.edges[e].dst))
            && slice.edges.len() == dg.edges.iter().filter(|e| members.contains(&e.src)).count();
        if slice.hops == expected && edges_ok {
            agree += 1;
        } else {
            f.push(format!("graph {g} disagrees"));
        }
    }
    let elapsed = started.elapsed();
    check(&mut f, elapsed < C6_LIMIT, format!("took {elapsed:?}"));
    report(6, &f, &format!("{agree}/{C6_GRAPHS} graphs agree, {elapsed:?}"));
}

#[test]
fn criterion_7_metric_arithmetic() {
    let mut f = Vec::new();
    let published = [
        ("boundary", Counts::new(504, 67, 122), 88.26, 80.51),
        ("type", Counts::new(1349, 113, 252), 92.27, 84.26),
        ("attribute", Counts::new(752, 350, 75), 68.06, 90.93),
    ];
    let mut shown = Vec::new();
    for (name, counts, p, r) in published {
        let precision = counts.precision().unwrap() * 100.0;
        let recall = counts.recall().unwrap() * 100.0;
        shown.push(format!("{name} {}/{}", percent(counts.precision()), percent(counts.recall())));
        check(&mut f, (precision - p).abs() <= METRIC_TOLERANCE_PP, format!("{name} precision {precision:.4} vs {p}"));
        check(&mut f, (recall - r).abs() <= METRIC_TOLERANCE_PP, format!("{name} recall {recall:.4} vs {r}"));
    }
    report(7, &f, &shown.join(", "));
}

#[test]
fn criterion_8_prompt_snapshots() {
    let mut f = Vec::new();
    let render = || {
        let (_, unit) = load("golden.dsol");
        let analysis = analyze(&unit, BuiltinTable::shipped()).unwrap();
        let mut out = String::new();
        let mut rows = BTreeSet::new();
        for target in enumerate_targets(&unit) {
            if let Ok(bundle) = build_bundle(&target, &unit, &analysis, TemplateSet::shipped(), DEFAULT_TOKEN_BUDGET) {
                rows.extend(bundle.cot.iter().map(|s| s.row));
                out.push_str(&format!("======== {}\n{}", target.id(), bundle.to_text()));
            }
        }
        (out, rows)
    };
    let (first, rows) = render();
    let (second, _) = render();
    check(&mut f, first == second, "two renderings differ");
    let missing: Vec<RowKind> = RowKind::ALL.into_iter().filter(|r| !rows.contains(r)).collect();
    check(&mut f, missing.is_empty(), format!("rows never rendered: {missing:?}"));
    for token in ["[NAME]", "[STATEMENT]", "[TYPE]", "[USAGES]"] {
        check(&mut f, !first.contains(token), format!("placeholder {token} left"));
    }
    let snapshot = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/prompts.txt")).unwrap();
    check(&mut f, first == snapshot, "differs from the stored snapshot");
    report(8, &f, &format!("{} rows covered, snapshot sha256 {}", rows.len(), &sha256_hex(&first)[..12]));
}

const C9_CASES: &[(Rule, &str, bool)] = &[
    (Rule::Constant, "function f() { uint8 a = 255; }", true),
    (Rule::Constant, "function f() { uint8 a = 256; }", false),
    (Rule::Shift, "function f(uint256 a) { x = a << 2; }", true),
    (Rule::Shift, "function f(address a) { x = a << 2; }", false),
    (Rule::Numeric, "function f(uint256 a) { x = a + 1; }", true),
    (Rule::Numeric, "function f(string s) { x = s + 1; }", false),
    (Rule::Compare, "function f(uint256 a, uint256 b) { x = a < b; }", true),
    (Rule::Compare, "function f(string s, string t) { x = s < t; }", false),
    (Rule::TupleArray, "function f(uint256 a, uint256 b) { x = [a, b]; }", true),
    (Rule::TupleArray, "function f(bool b, address a) { x = [b, a]; }", false),
    (Rule::Comprehension, "function f(bytes b, uint256 i) { while (i < b.length) { i += 1; } }", true),
    (Rule::Comprehension, "function f(uint256 n, uint256 i) { while (i < n.length) { i += 1; } }", false),
    (Rule::Boolean, "function f(bool b) { x = b && true; }", true),
    (Rule::Boolean, "function f(uint256 a) { x = a && true; }", false),
    (Rule::Bitwise, "function f(uint256 a) { x = a & 1; }", true),
    (Rule::Bitwise, "function f(string s) { x = s & 1; }", false),
    (Rule::Equality, "function f(address a, address b) { x = a == b; }", true),
    (Rule::Equality, "function f(address a, bool b) { x = a == b; }", false),
    (Rule::Call, "function g(uint256 a) { return a; }\nfunction f(uint256 s) { g(s); }", true),
    (Rule::Call, "function g(uint256 a) { return a; }\nfunction f(string s) { g(s); }", false),
    (Rule::Call, "function f(bytes a) { bytes32 k = keccak256(a); }", true),
    (Rule::Call, "function f(bytes a) { uint256 k = keccak256(a); }", false),
    (Rule::Slice, "mapping(address=>uint256) m;\nfunction f(address k) { m[k] = 1; }", true),
    (Rule::Slice, "mapping(address=>uint256) m;\nfunction f(bytes32 k) { m[k] = 1; }", false),
];

#[test]
fn criterion_9_rule_coverage() {
    let mut f = Vec::new();
    let mut covered: BTreeMap<Rule, (bool, bool)> = BTreeMap::new();
    for (rule, src, accepts) in C9_CASES {
        let r = typecheck::check(&parse_unit("c9", src), BuiltinTable::shipped());
        let rules: Vec<Rule> = r.violations.iter().map(|v| v.rule).collect();
        let ok = if *accepts { rules.is_empty() } else { rules == vec![*rule] };
        check(&mut f, ok, format!("{rule:?} `{src}` gave {rules:?}"));
        let entry = covered.entry(*rule).or_default();
        if *accepts { entry.0 = true } else { entry.1 = true }
    }
    let all_rules = [
        Rule::Constant, Rule::Shift, Rule::Numeric, Rule::Compare, Rule::TupleArray, Rule::Comprehension,
        Rule::Boolean, Rule::Bitwise, Rule::Equality, Rule::Call, Rule::Slice,
    ];
    for rule in all_rules {
        check(&mut f, covered.get(&rule) == Some(&(true, true)), format!("{rule:?} lacks an accepting or rejecting case"));
    }
    check(&mut f, C9_CASES.len() >= C9_MIN_CASES, format!("{} cases", C9_CASES.len()));

    // Meet table: every family is a subset of the ten classes.
    let families: Vec<Family> = (0u32..1 << TypeClass::ALL.len())
        .map(|mask| Family::of(&TypeClass::ALL.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, c)| *c).collect::<Vec<_>>()))
        .collect();
    let rule_families = [
        Family::BOOL, Family::BOOL_INT, Family::BOOL_INT_BYTE, Family::ORDERED, Family::STR_BYTES,
        Family::ITERABLE, Family::INDEXABLE, Family::INT, Family::CALLABLE, Family::ALL,
    ];
    let mut types = vec![
        SolType::Bool,
        SolType::Int { bits: 256, signed: false },
        SolType::Int { bits: 8, signed: true },
        SolType::Address { payable: true },
        SolType::FixedBytes(32),
        SolType::DynBytes,
        SolType::String,
        SolType::Array(Box::new(SolType::Bool), None),
        SolType::Mapping(Box::new(SolType::Address { payable: false }), Box::new(SolType::Bool)),
        SolType::Tuple(vec![SolType::Bool]),
        SolType::Callable(vec![], Box::new(SolType::Bool)),
        SolType::Unknown,
        SolType::Bottom,
    ];
    types.extend(families.iter().map(|g| SolType::Constrained(*g)));
    let mut pairs = 0;
    for t in &types {
        for &a in &rule_families {
            let once = meet(t, a);
            check(&mut f, meet(&once, a) == once, format!("meet({t}, {a:?}) not idempotent"));
            for &b in &rule_families {
                pairs += 1;
                if meet(&meet(t, a), b) != meet(&meet(t, b), a) {
                    f.push(format!("meet order matters for {t}, {a:?}, {b:?}"));
                }
            }
        }
    }
    report(9, &f, &format!("{} rule cases, {pairs} meet pairs over {} types", C9_CASES.len(), types.len()));
}

#[test]
fn criterion_10_identity_pipeline() {
    let mut f = Vec::new();
    let mock = MockProvider::from_file(&fixture("scenarios/malformed.json")).unwrap();
    let engine = Engine::new(&mock, RunConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut paths = corpus();
    paths.extend(["token_key.dsol", "golden.dsol", "keccak_violation.dsol"].iter().map(|p| fixture(p)));
    let reports = engine.run_batch(&paths, Some(dir.path()));
    let mut targets = 0;
    for (path, r) in paths.iter().zip(&reports) {
        check(&mut f, r.error.is_none(), format!("{}: {:?}", path.display(), r.error));
        for o in &r.outcomes {
            targets += 1;
            check(&mut f, o.status == OutcomeStatus::MalformedReply, format!("{}: {:?}", o.target, o.status));
        }
        let before = sha256_hex(&std::fs::read_to_string(path).unwrap());
        let after = std::fs::read_to_string(dir.path().join(path.file_name().unwrap())).map(|t| sha256_hex(&t)).unwrap_or_default();
        check(&mut f, before == after, format!("{} changed", path.display()));
    }
    report(10, &f, &format!("{} units, {targets} targets, all hashes unchanged", paths.len()));
}
