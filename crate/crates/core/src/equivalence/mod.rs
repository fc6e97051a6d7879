//! Behavioural equivalence of a function before and after editing.
//!
//! Both versions are summarised by bounded symbolic execution. The
//! summaries are joined into one formula that is satisfiable exactly when
//! some input makes the two versions observably differ. A satisfying model
//! is replayed concretely before it is reported.
//!
//! The observables are the revert flag, return values, final storage and
//! the sequence of external calls with their arguments.

pub mod interp;
pub mod solver;
pub mod symex;
pub mod term;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use rayon::prelude::*;
use ruint::aliases::U256;
use serde::{Deserialize, Serialize};

pub use interp::{first_difference, run, Observation, ReplayError};
pub use solver::{smtlib_script, Answer, Model, SolverChoice, SolverError};
pub use symex::{symbolic_summary, Bounds, PathSummary, SymbolicSummary};
pub use term::Term;

use crate::frontend::{is_storage_name, lower_ir, FrontendError, FunctionDecl, IrModule, SourceUnit};
use crate::llm_bridge::{Edit, EditSet};
use symex::{param_input, sload_name, storage_read};
use term::{and, and_all, eq, not, or, or_all};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EquivError {
    #[error("solver unavailable: {0}")]
    SolverUnavailable(String),
    #[error("`{function}` takes {original} parameter(s) originally but {optimized} after editing")]
    ArityMismatch { function: String, original: usize, optimized: usize },
    #[error("function `{0}` is missing")]
    MissingFunction(String),
    #[error(transparent)]
    Lowering(#[from] FrontendError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EquivConfig {
    pub bounds: Bounds,
    pub timeout_secs: u64,
    pub solver: SolverChoice,
    /// Assignments tried by the builtin search.
    pub search_trials: usize,
    pub seed: u64,
    /// Skip symbolic execution when both versions lower to the same code.
    pub identical_code_shortcut: bool,
}

impl Default for EquivConfig {
    fn default() -> Self {
        EquivConfig {
            bounds: Bounds::default(),
            timeout_secs: 10,
            solver: SolverChoice::default(),
            search_trials: 2000,
            seed: 7,
            identical_code_shortcut: true,
        }
    }
}

/// Pairs of (original, optimized) names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub params: Vec<(String, String)>,
    pub storage: Vec<(String, String)>,
    pub returns: usize,
}

impl AlignmentMap {
    pub fn original_param(&self, optimized: &str) -> Option<&str> {
        self.params.iter().find(|(_, o)| o == optimized).map(|(a, _)| a.as_str())
    }

    pub fn original_slot(&self, optimized: &str) -> String {
        self.storage.iter().find(|(_, o)| o == optimized).map_or_else(|| optimized.to_string(), |(a, _)| a.clone())
    }
}

/// Aligns parameters by position and storage by slot, following renames.
pub fn align(m: &FunctionDecl, m2: &FunctionDecl, edits: &EditSet) -> Result<AlignmentMap, EquivError> {
    let split_host = edits.edits.iter().any(|e| matches!(e, Edit::Split { host, .. } if *host == m.name));
    if m.params.len() != m2.params.len() && !split_host {
        return Err(EquivError::ArityMismatch { function: m.name.clone(), original: m.params.len(), optimized: m2.params.len() });
    }
    let params = m.params.iter().zip(&m2.params).map(|(a, b)| (a.name.clone(), b.name.clone())).collect();
    let storage = edits
        .edits
        .iter()
        .filter_map(|e| match e {
            Edit::Rename { old, new } if !old.contains("::") && (is_storage_name(old) || !m.declares_local(old)) => {
                Some((old.clone(), new.clone()))
            }
            _ => None,
        })
        .collect();
    Ok(AlignmentMap { params, storage, returns: m.returns.len().max(m2.returns.len()) })
}

/// The negated equivalence of two summaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formula {
    pub term: Term,
    pub inputs: BTreeSet<String>,
    /// Either summary was truncated by a bound.
    pub bound_hit: bool,
}

impl Formula {
    pub fn to_smtlib(&self) -> String {
        smtlib_script(&self.term, &self.inputs)
    }
}

fn rename_summary(s: &SymbolicSummary, map: &AlignmentMap) -> SymbolicSummary {
    let input = |n: &str| -> String {
        match n.strip_prefix("p:").and_then(|p| map.original_param(p)) {
            Some(orig) => param_input(orig),
            None => n.to_string(),
        }
    };
    let ufn = |n: &str| -> String {
        match n.strip_prefix("sload:") {
            Some(slot) => sload_name(&map.original_slot(slot)),
            None => n.to_string(),
        }
    };
    let r = |t: &Term| t.rename(&input, &ufn);
    let paths = s
        .paths
        .iter()
        .map(|p| PathSummary {
            condition: r(&p.condition),
            reverted: r(&p.reverted),
            returns: p.returns.iter().map(r).collect(),
            writes: p
                .writes
                .iter()
                .map(|w| symex::StorageWrite { slot: map.original_slot(&w.slot), keys: w.keys.iter().map(r).collect(), value: r(&w.value) })
                .collect(),
            calls: p.calls.iter().map(|c| symex::ExternalCall { callee: c.callee.clone(), args: c.args.iter().map(r).collect() }).collect(),
        })
        .collect();
    SymbolicSummary { paths, ..s.clone() }
}

fn differ(p: &PathSummary, q: &PathSummary) -> Term {
    let mut parts = Vec::new();
    if p.returns.len() != q.returns.len() {
        parts.push(Term::Bool(true));
    } else {
        parts.extend(p.returns.iter().zip(&q.returns).map(|(a, b)| not(eq(a.clone(), b.clone()))));
    }
    let groups: BTreeSet<(&str, usize)> = p.writes.iter().chain(&q.writes).map(|w| (w.slot.as_str(), w.keys.len())).collect();
    for (slot, arity) in groups {
        let keys: Vec<Term> = (0..arity).map(|j| Term::Input(format!("key:{slot}:{arity}:{j}"))).collect();
        parts.push(not(eq(storage_read(&p.writes, slot, &keys), storage_read(&q.writes, slot, &keys))));
    }
    let same_shape = p.calls.len() == q.calls.len()
        && p.calls.iter().zip(&q.calls).all(|(a, b)| a.callee == b.callee && a.args.len() == b.args.len());
    if same_shape {
        for (a, b) in p.calls.iter().zip(&q.calls) {
            parts.extend(a.args.iter().zip(&b.args).map(|(x, y)| not(eq(x.clone(), y.clone()))));
        }
    } else {
        parts.push(Term::Bool(true));
    }
    let (rp, rq) = (p.reverted.clone(), q.reverted.clone());
    or(not(eq(rp.clone(), rq.clone())), and_all([not(rp), not(rq), or_all(parts)]))
}

/// Satisfiable iff some input drives the two summaries to different
/// observables. Optimized names are first mapped back through `map`.
pub fn equivalence_assertion(s: &SymbolicSummary, s2: &SymbolicSummary, map: &AlignmentMap) -> Formula {
    let s2 = rename_summary(s2, map);
    let mut disjuncts = Vec::new();
    for p in &s.paths {
        for q in &s2.paths {
            let both = and(p.condition.clone(), q.condition.clone());
            if both == Term::Bool(false) {
                continue;
            }
            disjuncts.push(and(both, differ(p, q)));
        }
    }
    let term = or_all(disjuncts);
    let mut inputs = BTreeSet::new();
    term.inputs(&mut inputs);
    Formula { term, inputs, bound_hit: s.bound_hit || s2.bound_hit }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InconclusiveReason {
    BoundHit,
    SolverTimeout,
    SolverUnknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    /// Inputs under the original function's names.
    pub inputs: BTreeMap<String, U256>,
    /// Values chosen for uninterpreted calls.
    pub applications: Vec<(String, Vec<U256>, U256)>,
    pub observable: String,
    pub original: String,
    pub optimized: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum EquivalenceVerdict {
    Equivalent,
    NonEquivalent { witness: Witness },
    Inconclusive { reason: InconclusiveReason },
}

impl EquivalenceVerdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, EquivalenceVerdict::Equivalent)
    }
}

/// The two programs a model is replayed against.
pub struct Replay<'a> {
    pub original: &'a IrModule,
    pub optimized: &'a IrModule,
    pub function: &'a str,
    pub map: &'a AlignmentMap,
}

/// Runs both functions on the model and reports the first divergence.
pub fn replay(model: &Model, r: &Replay<'_>) -> Result<Option<(String, String, String)>, ReplayError> {
    let f1 = r.original.function(r.function).ok_or_else(|| ReplayError::UnknownFunction(r.function.into()))?;
    let f2 = r.optimized.function(r.function).ok_or_else(|| ReplayError::UnknownFunction(r.function.into()))?;
    let args1: Vec<U256> = f1.params.iter().map(|p| model.input(&param_input(p))).collect();
    let args2: Vec<U256> = f2
        .params
        .iter()
        .map(|p| model.input(&param_input(r.map.original_param(p).unwrap_or(p))))
        .collect();
    let inputs = |n: &str| model.input(n);
    let mut table = model.table();
    let a = run(r.original, r.function, &args1, &inputs, &|s| s.to_string(), &mut table)?;
    let b = run(r.optimized, r.function, &args2, &inputs, &|s| r.map.original_slot(s), &mut table)?;
    Ok(first_difference(&a, &b, &mut table))
}

fn solve(phi: &Formula, config: &EquivConfig) -> Result<Answer, EquivError> {
    let timeout = Duration::from_secs(config.timeout_secs);
    let builtin = || solver::solve_builtin(&phi.term, &phi.inputs, config.search_trials, config.seed);
    let answer = match &config.solver {
        SolverChoice::Builtin => Ok(builtin()),
        SolverChoice::External { program, args } => solver::solve_external(program, args, &phi.term, &phi.inputs, timeout),
        SolverChoice::Auto { program, args } => match solver::solve_external(program, args, &phi.term, &phi.inputs, timeout) {
            Err(SolverError::Unavailable { reason, .. }) => {
                log::warn!("solver `{program}` unavailable ({reason}); using the builtin search");
                Ok(builtin())
            }
            other => other,
        },
    };
    match answer {
        Ok(a) => Ok(a),
        Err(SolverError::Unavailable { program, reason }) => Err(EquivError::SolverUnavailable(format!("{program}: {reason}"))),
        Err(SolverError::Protocol(msg)) => Ok(Answer::Unknown(msg)),
    }
}

/// Decides the formula. A satisfying model counts only after it replays
/// to a concrete divergence; truncated summaries never yield Equivalent.
pub fn decide(phi: &Formula, config: &EquivConfig, r: &Replay<'_>) -> Result<EquivalenceVerdict, EquivError> {
    let inconclusive = |reason| EquivalenceVerdict::Inconclusive { reason };
    let unproven = |fallback| if phi.bound_hit { inconclusive(InconclusiveReason::BoundHit) } else { inconclusive(fallback) };
    let answer = if phi.term == Term::Bool(false) { Answer::Unsat } else { solve(phi, config)? };
    Ok(match answer {
        Answer::Unsat if phi.bound_hit => inconclusive(InconclusiveReason::BoundHit),
        Answer::Unsat => EquivalenceVerdict::Equivalent,
        Answer::Timeout => unproven(InconclusiveReason::SolverTimeout),
        Answer::Unknown(why) => {
            log::debug!("{}: solver unknown: {why}", r.function);
            unproven(InconclusiveReason::SolverUnknown)
        }
        Answer::Sat(model) => match replay(&model, r) {
            Ok(Some((observable, original, optimized))) => EquivalenceVerdict::NonEquivalent {
                witness: Witness { inputs: model.inputs.clone(), applications: model.applications.clone(), observable, original, optimized },
            },
            Ok(None) => {
                log::debug!("{}: model does not replay to a divergence", r.function);
                unproven(InconclusiveReason::SolverUnknown)
            }
            Err(e) => {
                log::debug!("{}: replay failed: {e}", r.function);
                unproven(InconclusiveReason::SolverUnknown)
            }
        },
    })
}

fn check_lowered(
    original: &SourceUnit,
    optimized: &SourceUnit,
    ir1: &IrModule,
    ir2: &IrModule,
    function: &str,
    edits: &EditSet,
    config: &EquivConfig,
) -> Result<EquivalenceVerdict, EquivError> {
    let m = original.function(function).ok_or_else(|| EquivError::MissingFunction(function.into()))?;
    let m2 = optimized.function(function).ok_or_else(|| EquivError::MissingFunction(function.into()))?;
    let map = align(m, m2, edits)?;
    if config.identical_code_shortcut && same_code(ir1, ir2, function, &mut BTreeSet::new()) {
        return Ok(EquivalenceVerdict::Equivalent);
    }
    let s = symbolic_summary(ir1, function, config.bounds).ok_or_else(|| EquivError::MissingFunction(function.into()))?;
    let s2 = symbolic_summary(ir2, function, config.bounds).ok_or_else(|| EquivError::MissingFunction(function.into()))?;
    let phi = equivalence_assertion(&s, &s2, &map);
    decide(&phi, config, &Replay { original: ir1, optimized: ir2, function, map: &map })
}

/// True when the function and every internal function it reaches lower to
/// the same instructions in both modules. Source positions are ignored, so
/// declaration-only edits such as a retype compare equal even when the
/// function contains loops.
fn same_code(ir1: &IrModule, ir2: &IrModule, function: &str, seen: &mut BTreeSet<String>) -> bool {
    if !seen.insert(function.to_string()) {
        return true;
    }
    let (Some(a), Some(b)) = (ir1.function(function), ir2.function(function)) else {
        return ir1.function(function).is_none() && ir2.function(function).is_none();
    };
    if a.params != b.params || a.blocks.len() != b.blocks.len() {
        return false;
    }
    for (x, y) in a.blocks.iter().zip(&b.blocks) {
        if x.label != y.label || x.instrs.len() != y.instrs.len() {
            return false;
        }
        for (i, j) in x.instrs.iter().zip(&y.instrs) {
            if i.dest != j.dest || i.op != j.op {
                return false;
            }
        }
    }
    let callees: Vec<String> = a
        .instrs()
        .filter_map(|i| match &i.op {
            crate::frontend::IrOp::Call { callee, .. } => Some(callee.clone()),
            _ => None,
        })
        .collect();
    callees.iter().all(|c| same_code(ir1, ir2, c, seen))
}

/// Checks the named functions only, in parallel.
pub fn check_functions(
    original: &SourceUnit,
    optimized: &SourceUnit,
    functions: &[String],
    edits: &EditSet,
    config: &EquivConfig,
) -> Result<Vec<(String, EquivalenceVerdict)>, EquivError> {
    let ir1 = lower_ir(original)?;
    let ir2 = lower_ir(optimized)?;
    functions
        .par_iter()
        .map(|f| check_lowered(original, optimized, &ir1, &ir2, f, edits, config).map(|v| (f.clone(), v)))
        .collect()
}

/// Checks one function that exists in both units.
pub fn check_equivalence(
    original: &SourceUnit,
    optimized: &SourceUnit,
    function: &str,
    edits: &EditSet,
    config: &EquivConfig,
) -> Result<EquivalenceVerdict, EquivError> {
    let ir1 = lower_ir(original)?;
    let ir2 = lower_ir(optimized)?;
    check_lowered(original, optimized, &ir1, &ir2, function, edits, config)
}

/// Checks every original function against its edited counterpart, in parallel.
pub fn check_units(
    original: &SourceUnit,
    optimized: &SourceUnit,
    edits: &EditSet,
    config: &EquivConfig,
) -> Result<Vec<(String, EquivalenceVerdict)>, EquivError> {
    let ir1 = lower_ir(original)?;
    let ir2 = lower_ir(optimized)?;
    original
        .functions
        .par_iter()
        .map(|f| check_lowered(original, optimized, &ir1, &ir2, &f.name, edits, config).map(|v| (f.name.clone(), v)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_unit;
    use crate::llm_bridge::apply_edits;

    fn unit(src: &str) -> SourceUnit {
        let u = parse_unit("t", src);
        assert!(u.skipped.is_empty(), "{:?}", u.skipped);
        u
    }

    // The shortcut is off so identical inputs still go through the solver.
    fn cfg() -> EquivConfig {
        EquivConfig { identical_code_shortcut: false, ..EquivConfig::default() }
    }

    fn builtin() -> EquivConfig {
        EquivConfig { solver: SolverChoice::Builtin, ..cfg() }
    }

    fn verdict(a: &str, b: &str, f: &str, config: &EquivConfig) -> EquivalenceVerdict {
        check_equivalence(&unit(a), &unit(b), f, &EditSet::default(), config).unwrap()
    }

    fn assert_witness_sound(a: &str, b: &str, f: &str, v: &EquivalenceVerdict) {
        // Replays the witness independently of `decide`.
        let EquivalenceVerdict::NonEquivalent { witness } = v else { panic!("{v:?}") };
        let (ia, ib) = (lower_ir(&unit(a)).unwrap(), lower_ir(&unit(b)).unwrap());
        let model = Model { inputs: witness.inputs.clone(), applications: witness.applications.clone() };
        let m = AlignmentMap::default();
        let d = replay(&model, &Replay { original: &ia, optimized: &ib, function: f, map: &m }).unwrap();
        assert!(d.is_some());
    }

    #[test]
    fn identical_functions_are_equivalent() {
        let src = "function f(a, b) { if (a > b) { stor_0 = a - b; } else { stor_0 = b; } return keccak256(a); }";
        assert_eq!(verdict(src, src, "f", &cfg()), EquivalenceVerdict::Equivalent);
        assert_eq!(verdict(src, src, "f", &builtin()), EquivalenceVerdict::Equivalent);
    }

    #[test]
    fn temp_naming_does_not_matter() {
        let a = "function f(a) { x = a + 1; y = x * 2; return y; }";
        let b = "function f(a) { return (a + 1) * 2; }";
        assert_eq!(verdict(a, b, "f", &cfg()), EquivalenceVerdict::Equivalent);
    }

    #[test]
    fn linear_rewrites_need_the_solver() {
        let a = "function f(a, b) { return a + b + a; }";
        let b = "function f(a, b) { return 2 * a + b; }";
        assert_eq!(verdict(a, b, "f", &cfg()), EquivalenceVerdict::Equivalent);
        assert_eq!(
            verdict(a, b, "f", &builtin()),
            EquivalenceVerdict::Inconclusive { reason: InconclusiveReason::SolverUnknown }
        );
    }

    const FIG4_ORIGINAL: &str = "function execute(varg5, varg6, varg7, varg8) public {
    v0 = varg6;
    v3 = varg7;
    v9 = varg8;
    return ecrecover(varg5, v0, v3, v9);
}";

    const FIG4_OPTIMIZED: &str = "function execute(bytes32 hash, uint256 signaturesCount, uint256 r, uint256 s) public {
    uint8 sigV = signaturesCount;
    bytes32 sigR = signaturesCount;
    bytes32 sigS = signaturesCount;
    return ecrecover(hash, sigV, sigR, sigS);
}";

    #[test]
    fn shared_parameter_is_caught() {
        for config in [cfg(), builtin()] {
            let v = check_equivalence(&unit(FIG4_ORIGINAL), &unit(FIG4_OPTIMIZED), "execute", &EditSet::default(), &config).unwrap();
            let EquivalenceVerdict::NonEquivalent { witness } = &v else { panic!("{v:?}") };
            // signaturesCount sits where varg6 did, so v3 or v9 must read a different value.
            let v = |n: &str| witness.inputs.get(n).copied().unwrap_or_default();
            assert!(v("p:varg6") != v("p:varg7") || v("p:varg6") != v("p:varg8"));
            assert_eq!(witness.observable, "return[0]");
        }
    }

    #[test]
    fn witnesses_replay() {
        let a = "function f(a) { if (a == 7) { stor_1 = 1; } }";
        let b = "function f(a) { if (a == 8) { stor_1 = 1; } }";
        for config in [cfg(), builtin()] {
            let v = verdict(a, b, "f", &config);
            assert_witness_sound(a, b, "f", &v);
        }
    }

    #[test]
    fn revert_conditions_are_observed() {
        let a = "function f(a) { require(a > 0); stor_0 = a; }";
        let b = "function f(a) { stor_0 = a; }";
        let v = verdict(a, b, "f", &cfg());
        let EquivalenceVerdict::NonEquivalent { witness } = &v else { panic!("{v:?}") };
        assert_eq!(witness.observable, "reverted");
    }

    #[test]
    fn nonlinear_abstraction_is_inconclusive() {
        let a = "function f(a, b) { return a * b; }";
        let b = "function f(a, b) { return b * a; }";
        assert_eq!(verdict(a, b, "f", &cfg()), EquivalenceVerdict::Equivalent);
        let a = "function f(a, b) { return a * b * 2; }";
        let b = "function f(a, b) { return (a + a) * b; }";
        assert_eq!(verdict(a, b, "f", &cfg()), EquivalenceVerdict::Inconclusive { reason: InconclusiveReason::SolverUnknown });
    }

    #[test]
    fn bounded_loops_are_never_equivalent() {
        let a = "function f(n) { i = 0; while (i < n) { i += 1; } return i; }";
        let b = "function f(n) { i = 0; while (i < n) { i += 1; } return i + 0; }";
        assert_eq!(verdict(a, b, "f", &cfg()), EquivalenceVerdict::Inconclusive { reason: InconclusiveReason::BoundHit });
    }

    #[test]
    fn identical_lowered_code_is_equivalent_despite_loops() {
        let a = "function f(n) { i = 0; while (i < n) { i += 1; } return i; }";
        let b = "function f(uint256 n) { uint256 i = 0; while (i < n) { i += 1; } return i; }";
        assert_eq!(verdict(a, b, "f", &EquivConfig::default()), EquivalenceVerdict::Equivalent);
        assert_eq!(verdict(a, b, "f", &cfg()), EquivalenceVerdict::Inconclusive { reason: InconclusiveReason::BoundHit });
    }

    #[test]
    fn renamed_storage_aligns() {
        let a = "uint256 stor_0;\nfunction f(a) { stor_0 = a; }";
        let edits = EditSet { edits: vec![Edit::Rename { old: "stor_0".into(), new: "balance".into() }] };
        let b = apply_edits(&unit(a), &edits, None).unwrap();
        let v = check_equivalence(&unit(a), &b, "f", &edits, &cfg()).unwrap();
        assert_eq!(v, EquivalenceVerdict::Equivalent);
    }

    #[test]
    fn split_is_equivalent_through_inlining() {
        let a = "function _handle(uint256 a) public returns (uint256) {
    require(a > 0);
    require(msg.sender == stor_owner);
    stor_1 = a;
    uint256 x = a * 2;
    return x;
}";
        let edits = EditSet { edits: vec![Edit::Split { host: "_handle".into(), new_name: "validate".into(), start_line: 2, end_line: 3 }] };
        let b = apply_edits(&unit(a), &edits, None).unwrap();
        let verdicts = check_units(&unit(a), &b, &edits, &cfg()).unwrap();
        assert_eq!(verdicts, vec![("_handle".to_string(), EquivalenceVerdict::Equivalent)]);
    }

    #[test]
    fn alignment() {
        let a = unit("function f(varg6, x) { return varg6; }");
        let b = unit("function f(sigV, x) { return sigV; }");
        let edits = EditSet { edits: vec![Edit::Rename { old: "f::varg6".into(), new: "sigV".into() }] };
        let map = align(&a.functions[0], &b.functions[0], &edits).unwrap();
        assert_eq!(map.params[0], ("varg6".to_string(), "sigV".to_string()));
        let c = unit("function f(a) { return a; }");
        assert!(matches!(align(&a.functions[0], &c.functions[0], &EditSet::default()), Err(EquivError::ArityMismatch { .. })));
        assert_eq!(check_equivalence(&a, &b, "f", &edits, &cfg()).unwrap(), EquivalenceVerdict::Equivalent);
    }

    #[test]
    fn verdict_json() {
        let v = EquivalenceVerdict::Inconclusive { reason: InconclusiveReason::BoundHit };
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"outcome":"inconclusive","reason":"bound_hit"}"#);
    }

    #[test]
    fn missing_external_solver() {
        let config = EquivConfig { solver: SolverChoice::External { program: "/nonexistent/z3".into(), args: vec![] }, ..cfg() };
        let a = "function f(a, b) { return a + b; }";
        let b = "function f(a, b) { return b + a + 1; }";
        assert!(matches!(check_equivalence(&unit(a), &unit(b), "f", &EditSet::default(), &config), Err(EquivError::SolverUnavailable(_))));
    }
}
