//! Bounded depth-first symbolic execution over the IR.

use std::collections::{BTreeSet, HashMap};

use ruint::aliases::U256;
use serde::{Deserialize, Serialize};

use super::term::*;
use crate::frontend::{BinOp, IrFunction, IrModule, IrOp, IrValue, UnOp};

/// Calls with no observable effect beyond their result.
pub const PURE_BUILTINS: &[&str] = &[
    "keccak256",
    "sha3",
    "sha256",
    "ripemd160",
    "ecrecover",
    "addmod",
    "mulmod",
    "blockhash",
    "gasleft",
    "abi.encode",
    "abi.encodePacked",
    "abi.encodeWithSelector",
    "abi.encodeWithSignature",
    "abi.decode",
    "bytes.concat",
    "string.concat",
];

/// Maximum depth of inlined internal calls.
pub const MAX_CALL_DEPTH: usize = 8;
/// Instruction budget for one path.
pub const MAX_STEPS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conversion {
    Identity,
    Mask(usize),
    Truth,
}

/// Meaning of a type-name callee such as `uint8` or `address`.
pub fn conversion(callee: &str) -> Option<Conversion> {
    let bits = |digits: &str| -> Option<usize> {
        if digits.is_empty() {
            return Some(256);
        }
        let n: usize = digits.parse().ok()?;
        (n.is_multiple_of(8) && (8..=256).contains(&n)).then_some(n)
    };
    match callee {
        "address" => Some(Conversion::Mask(160)),
        "address payable" | "payable" => Some(Conversion::Identity),
        "bool" => Some(Conversion::Truth),
        _ => {
            if let Some(d) = callee.strip_prefix("uint").or_else(|| callee.strip_prefix("int")) {
                return bits(d).map(|b| if b == 256 { Conversion::Identity } else { Conversion::Mask(b) });
            }
            let d = callee.strip_prefix("bytes")?;
            let n: usize = d.parse().ok()?;
            (1..=32).contains(&n).then_some(Conversion::Identity)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallKind {
    Internal(usize),
    Conversion(Conversion),
    Pure,
    Revert,
    Assert,
    External,
}

pub fn classify(module: &IrModule, callee: &str) -> CallKind {
    if let Some(i) = module.functions.iter().position(|f| f.name == callee) {
        return CallKind::Internal(i);
    }
    if let Some(c) = conversion(callee) {
        return CallKind::Conversion(c);
    }
    match callee {
        "revert" => CallKind::Revert,
        "assert" => CallKind::Assert,
        _ if PURE_BUILTINS.contains(&callee) => CallKind::Pure,
        _ => CallKind::External,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bounds {
    pub loop_unroll: usize,
    pub max_paths: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { loop_unroll: 2, max_paths: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageWrite {
    pub slot: String,
    pub keys: Vec<Term>,
    pub value: Term,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalCall {
    pub callee: String,
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSummary {
    pub condition: Term,
    pub reverted: Term,
    pub returns: Vec<Term>,
    pub writes: Vec<StorageWrite>,
    pub calls: Vec<ExternalCall>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicSummary {
    pub function: String,
    pub params: Vec<String>,
    pub paths: Vec<PathSummary>,
    pub bound_hit: bool,
    pub inputs: BTreeSet<String>,
}

pub fn param_input(name: &str) -> String {
    format!("p:{name}")
}

pub fn env_input(name: &str) -> String {
    format!("env:{name}")
}

pub fn free_input(name: &str) -> String {
    format!("free:{name}")
}

pub fn sload_name(slot: &str) -> String {
    format!("sload:{slot}")
}

/// Value of `slot[keys]` after `writes`, starting from the initial state.
pub fn storage_read(writes: &[StorageWrite], slot: &str, keys: &[Term]) -> Term {
    let mut acc = uf(&sload_name(slot), keys.to_vec());
    for w in writes.iter().filter(|w| w.slot == slot && w.keys.len() == keys.len()) {
        let same = and_all(w.keys.iter().zip(keys).map(|(a, b)| eq(a.clone(), b.clone())));
        acc = ite(same, w.value.clone(), acc);
    }
    acc
}

pub fn binop(op: BinOp, a: Term, b: Term) -> Term {
    match op {
        BinOp::And => and(a, b),
        BinOp::Or => or(a, b),
        BinOp::Add => arith(Op2::Add, a, b),
        BinOp::Sub => arith(Op2::Sub, a, b),
        BinOp::Mul => arith(Op2::Mul, a, b),
        BinOp::Div => arith(Op2::Div, a, b),
        BinOp::Mod => arith(Op2::Mod, a, b),
        BinOp::Exp => pow(a, b),
        BinOp::Eq => eq(a, b),
        BinOp::Ne => not(eq(a, b)),
        BinOp::Lt => ult(a, b),
        BinOp::Le => ule(a, b),
        BinOp::Gt => ult(b, a),
        BinOp::Ge => ule(b, a),
        BinOp::BitAnd => arith(Op2::And, a, b),
        BinOp::BitOr => arith(Op2::Or, a, b),
        BinOp::BitXor => arith(Op2::Xor, a, b),
        BinOp::Shl => arith(Op2::Shl, a, b),
        BinOp::Shr => arith(Op2::Shr, a, b),
    }
}

pub fn unop(op: UnOp, a: Term) -> Term {
    match op {
        UnOp::Not => not(a),
        UnOp::Neg => arith(Op2::Sub, word(0), a),
        UnOp::BitNot => bvnot(a),
    }
}

fn index(base: Term, idx: Term) -> Term {
    if let Term::Uf(name, args) = &base {
        if name == "store" && args.len() == 3 {
            let same = eq(args[1].clone(), idx.clone());
            return ite(same, args[2].clone(), index(args[0].clone(), idx));
        }
    }
    uf("index", vec![base, idx])
}

fn extract(whole: Term, i: usize) -> Term {
    match &whole {
        Term::Uf(name, items) if name == "tuple" && i < items.len() => items[i].clone(),
        _ => uf(&format!("extract:{i}"), vec![whole]),
    }
}

fn tuple_of(mut vals: Vec<Term>) -> Term {
    match vals.len() {
        0 => word(0),
        1 => vals.pop().expect("one value"),
        _ => uf("tuple", vals),
    }
}

#[derive(Clone)]
struct Frame {
    func: usize,
    block: usize,
    instr: usize,
    vars: HashMap<String, Term>,
    /// Caller value receiving the return.
    dest: Option<IrValue>,
    /// Back-edge count per loop header block.
    back_edges: HashMap<usize, usize>,
}

#[derive(Clone)]
struct State {
    frames: Vec<Frame>,
    condition: Term,
    ok: Term,
    writes: Vec<StorageWrite>,
    calls: Vec<ExternalCall>,
    steps: usize,
}

enum Step {
    Continue,
    Fork(Box<State>),
    Done(PathSummary),
    /// Path abandoned at a bound.
    Cut,
}

struct Explorer<'m> {
    module: &'m IrModule,
    labels: Vec<HashMap<&'m str, usize>>,
    bounds: Bounds,
    bound_hit: bool,
}

impl<'m> Explorer<'m> {
    fn func(&self, i: usize) -> &'m IrFunction {
        &self.module.functions[i]
    }

    fn value(&self, frame: &Frame, v: &IrValue) -> Term {
        match v {
            IrValue::Var(n) => frame.vars.get(n).cloned().unwrap_or_else(|| Term::Input(free_input(n))),
            IrValue::Temp(t) => frame.vars.get(&format!("t{t}")).cloned().unwrap_or_else(|| word(0)),
            IrValue::Int(w) => Term::Word(*w),
            IrValue::Str(s) => Term::Word(str_word(s)),
            IrValue::Bool(b) => Term::Bool(*b),
            IrValue::Env(e) => Term::Input(env_input(e)),
        }
    }

    fn assign(frame: &mut Frame, dest: &Option<IrValue>, t: Term) {
        if let Some(key) = dest.as_ref().and_then(IrValue::var_key) {
            frame.vars.insert(key, t);
        }
    }

    fn enter(&self, frame: &mut Frame, target: usize) {
        if target <= frame.block {
            *frame.back_edges.entry(target).or_insert(0) += 1;
        } else {
            frame.back_edges.remove(&target);
        }
        frame.block = target;
        frame.instr = 0;
    }

    fn finish(&self, st: &mut State, returns: Vec<Term>) -> Step {
        if st.frames.len() > 1 {
            let done = st.frames.pop().expect("callee frame");
            let caller = st.frames.last_mut().expect("caller frame");
            Self::assign(caller, &done.dest, tuple_of(returns));
            return Step::Continue;
        }
        Step::Done(PathSummary {
            condition: st.condition.clone(),
            reverted: not(st.ok.clone()),
            returns,
            writes: st.writes.clone(),
            calls: st.calls.clone(),
        })
    }

    fn step(&mut self, st: &mut State) -> Step {
        st.steps += 1;
        if st.steps > MAX_STEPS {
            self.bound_hit = true;
            return Step::Cut;
        }
        let frame = st.frames.last().expect("active frame");
        let f = self.func(frame.func);
        let Some(block) = f.blocks.get(frame.block) else {
            return self.finish(st, Vec::new());
        };
        let Some(instr) = block.instrs.get(frame.instr) else {
            let next = frame.block + 1;
            let frame = st.frames.last_mut().expect("active frame");
            self.enter(frame, next);
            return Step::Continue;
        };
        let frame = st.frames.last().expect("active frame");
        let v = |x: &IrValue| self.value(frame, x);
        let result = match &instr.op {
            IrOp::Copy(a) => Some(v(a)),
            IrOp::Unop(op, a) => Some(unop(*op, v(a))),
            IrOp::Binop(op, a, b) => Some(binop(*op, v(a), v(b))),
            IrOp::Index(a, b) => Some(index(v(a), v(b))),
            IrOp::StoreIndex { base, index, value } => Some(uf("store", vec![v(base), v(index), v(value)])),
            IrOp::Slice(base, lo, hi) => {
                let name = format!("slice:{}{}", lo.is_some() as u8, hi.is_some() as u8);
                let args = std::iter::once(v(base)).chain(lo.iter().map(&v)).chain(hi.iter().map(&v)).collect();
                Some(uf(&name, args))
            }
            IrOp::Member(a, field) => Some(uf(&format!("member:{field}"), vec![v(a)])),
            IrOp::Tuple(items) => Some(uf("tuple", items.iter().map(&v).collect())),
            IrOp::ArrayLit(items) => Some(uf("array", items.iter().map(&v).collect())),
            IrOp::Extract(a, i) => Some(extract(v(a), *i)),
            IrOp::LoadStorage { slot, keys } => {
                let keys: Vec<Term> = keys.iter().map(&v).collect();
                Some(storage_read(&st.writes, slot, &keys))
            }
            IrOp::StoreStorage { slot, keys, value } => {
                let w = StorageWrite { slot: slot.clone(), keys: keys.iter().map(&v).map(to_word).collect(), value: to_word(v(value)) };
                st.writes.push(w);
                None
            }
            IrOp::Require(c) => {
                st.ok = and(st.ok.clone(), v(c));
                None
            }
            IrOp::Call { callee, args } => {
                let args: Vec<Term> = args.iter().map(&v).collect();
                match classify(self.module, callee) {
                    CallKind::Internal(fi) if st.frames.len() < MAX_CALL_DEPTH => {
                        let callee_fn = self.func(fi);
                        let mut vars = HashMap::new();
                        for (i, p) in callee_fn.params.iter().enumerate() {
                            vars.insert(p.clone(), args.get(i).cloned().unwrap_or_else(|| word(0)));
                        }
                        let dest = instr.dest.clone();
                        st.frames.last_mut().expect("active frame").instr += 1;
                        st.frames.push(Frame { func: fi, block: 0, instr: 0, vars, dest, back_edges: HashMap::new() });
                        return Step::Continue;
                    }
                    CallKind::Internal(_) => {
                        self.bound_hit = true;
                        return Step::Cut;
                    }
                    CallKind::Conversion(c) => Some(match (c, args.into_iter().next()) {
                        (_, None) => word(0),
                        (Conversion::Identity, Some(a)) => a,
                        (Conversion::Mask(bits), Some(a)) => mask(a, bits),
                        (Conversion::Truth, Some(a)) => to_bool(a),
                    }),
                    CallKind::Pure => Some(uf(callee, args)),
                    CallKind::Revert => {
                        st.ok = Term::Bool(false);
                        return self.finish_all(st);
                    }
                    CallKind::Assert => {
                        let c = args.into_iter().next().unwrap_or(Term::Bool(true));
                        st.ok = and(st.ok.clone(), c);
                        None
                    }
                    CallKind::External => {
                        let mut key = args.clone();
                        key.push(word(st.calls.len() as u64));
                        st.calls.push(ExternalCall { callee: callee.clone(), args: args.into_iter().map(to_word).collect() });
                        Some(uf(&format!("call:{callee}"), key))
                    }
                }
            }
            IrOp::Ret(vals) => {
                let vals: Vec<Term> = vals.iter().map(&v).collect();
                return self.finish(st, vals);
            }
            IrOp::Jump(label) => {
                let target = self.labels[frame.func][label.as_str()];
                let frame = st.frames.last_mut().expect("active frame");
                self.enter(frame, target);
                return Step::Continue;
            }
            IrOp::Branch { cond, then_label, else_label } => {
                let c = to_bool(v(cond));
                let then_b = self.labels[frame.func][then_label.as_str()];
                let else_b = self.labels[frame.func][else_label.as_str()];
                let iterations = frame.back_edges.get(&frame.block).copied().unwrap_or(0);
                let exhausted = iterations >= self.bounds.loop_unroll;
                match c {
                    Term::Bool(true) if exhausted => {
                        self.bound_hit = true;
                        return Step::Cut;
                    }
                    Term::Bool(taken) => {
                        let frame = st.frames.last_mut().expect("active frame");
                        self.enter(frame, if taken { then_b } else { else_b });
                        return Step::Continue;
                    }
                    c => {
                        let mut other = st.clone();
                        other.condition = and(st.condition.clone(), not(c.clone()));
                        let f2 = other.frames.last_mut().expect("active frame");
                        self.enter(f2, else_b);
                        if exhausted {
                            self.bound_hit = true;
                            *st = other;
                            return Step::Continue;
                        }
                        st.condition = and(st.condition.clone(), c);
                        let frame = st.frames.last_mut().expect("active frame");
                        self.enter(frame, then_b);
                        if st.condition == Term::Bool(false) {
                            *st = other;
                            return Step::Continue;
                        }
                        return Step::Fork(Box::new(other));
                    }
                }
            }
        };
        let frame = st.frames.last_mut().expect("active frame");
        if let Some(t) = result {
            Self::assign(frame, &instr.dest, t);
        }
        frame.instr += 1;
        Step::Continue
    }

    /// A revert ends the whole transaction, not only the current frame.
    fn finish_all(&self, st: &mut State) -> Step {
        st.frames.truncate(1);
        Step::Done(PathSummary {
            condition: st.condition.clone(),
            reverted: Term::Bool(true),
            returns: Vec::new(),
            writes: st.writes.clone(),
            calls: st.calls.clone(),
        })
    }
}

/// Explores `function` depth-first. Internal calls are inlined.
pub fn symbolic_summary(module: &IrModule, function: &str, bounds: Bounds) -> Option<SymbolicSummary> {
    let fi = module.functions.iter().position(|f| f.name == function)?;
    let labels = module
        .functions
        .iter()
        .map(|f| f.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect())
        .collect();
    let mut ex = Explorer { module, labels, bounds, bound_hit: false };
    let f = &module.functions[fi];
    let vars = f.params.iter().map(|p| (p.clone(), Term::Input(param_input(p)))).collect();
    let start = State {
        frames: vec![Frame { func: fi, block: 0, instr: 0, vars, dest: None, back_edges: HashMap::new() }],
        condition: Term::Bool(true),
        ok: Term::Bool(true),
        writes: Vec::new(),
        calls: Vec::new(),
        steps: 0,
    };
    let mut pending = vec![start];
    let mut paths = Vec::new();
    'outer: while let Some(mut st) = pending.pop() {
        loop {
            match ex.step(&mut st) {
                Step::Continue => {}
                Step::Fork(other) => pending.push(*other),
                Step::Done(p) => {
                    if p.condition != Term::Bool(false) {
                        paths.push(p);
                    }
                    break;
                }
                Step::Cut => break,
            }
        }
        if paths.len() >= bounds.max_paths && !pending.is_empty() {
            ex.bound_hit = true;
            break 'outer;
        }
    }
    let mut inputs = BTreeSet::new();
    for p in &paths {
        p.condition.inputs(&mut inputs);
        p.reverted.inputs(&mut inputs);
        p.returns.iter().for_each(|t| t.inputs(&mut inputs));
        for w in &p.writes {
            w.keys.iter().for_each(|t| t.inputs(&mut inputs));
            w.value.inputs(&mut inputs);
        }
        p.calls.iter().flat_map(|c| &c.args).for_each(|t| t.inputs(&mut inputs));
    }
    Some(SymbolicSummary { function: function.to_string(), params: f.params.clone(), paths, bound_hit: ex.bound_hit, inputs })
}

/// Word value of a string key, exposed for callers that build expectations.
pub fn key_word(s: &str) -> U256 {
    str_word(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{lower_ir, parse_unit};

    fn summary(src: &str, f: &str, bounds: Bounds) -> SymbolicSummary {
        let unit = parse_unit("t", src);
        assert!(unit.skipped.is_empty(), "{:?}", unit.skipped);
        symbolic_summary(&lower_ir(&unit).unwrap(), f, bounds).unwrap()
    }

    fn p(n: &str) -> Term {
        Term::Input(param_input(n))
    }

    #[test]
    fn straight_line_return() {
        let s = summary("function f(varg0) { return varg0 + 1; }", "f", Bounds::default());
        assert_eq!(s.paths.len(), 1);
        assert_eq!(s.paths[0].returns, vec![arith(Op2::Add, p("varg0"), word(1))]);
        assert!(!s.bound_hit);
    }

    #[test]
    fn single_if_gives_complementary_paths() {
        let s = summary("function f(a) { if (a > 3) { return 1; } return 2; }", "f", Bounds::default());
        assert_eq!(s.paths.len(), 2);
        let c = ult(word(3), p("a"));
        assert_eq!(s.paths[0].condition, c);
        assert_eq!(s.paths[1].condition, not(c));
        assert_eq!(and(s.paths[0].condition.clone(), s.paths[1].condition.clone()), Term::Bool(false));
    }

    #[test]
    fn loop_unrolled_twice() {
        // Manual expansion of two iterations of `while (i < n) i += 1`:
        //   exit now:         !(0 < n)              ret 0
        //   after one pass:   0 < n && !(1 < n)     ret 1
        //   after two passes: 0 < n && 1 < n && !(2 < n)  ret 2
        // and the third pass is cut because 2 < n is still satisfiable.
        let s = summary("function f(n) { i = 0; while (i < n) { i += 1; } return i; }", "f", Bounds::default());
        let n = p("n");
        let c = |k: u64| ult(word(k), n.clone());
        let expected = vec![
            (and_all([c(0), c(1), not(c(2))]), word(2)),
            (and_all([c(0), not(c(1))]), word(1)),
            (not(c(0)), word(0)),
        ];
        let got: Vec<(Term, Term)> = s.paths.iter().map(|p| (p.condition.clone(), p.returns[0].clone())).collect();
        assert_eq!(got.len(), 3);
        for e in &expected {
            assert!(got.contains(e), "missing {e:?}");
        }
        assert!(s.bound_hit);
    }

    #[test]
    fn constant_bound_loop_finishes_without_cut() {
        let s = summary("function f() { i = 0; while (i < 2) { i += 1; } return i; }", "f", Bounds::default());
        assert_eq!(s.paths.len(), 1);
        assert_eq!(s.paths[0].returns, vec![word(2)]);
        assert!(!s.bound_hit);
    }

    #[test]
    fn storage_reads_see_earlier_writes() {
        let s = summary("function f(k, v) { m[k] = v; return m[k]; }\nmapping(uint256=>uint256) m;", "f", Bounds::default());
        assert_eq!(s.paths[0].returns, vec![p("v")]);
        assert_eq!(s.paths[0].writes.len(), 1);
    }

    #[test]
    fn require_marks_revert_condition() {
        let s = summary("function f(a) { require(a == 1); stor_0 = a; }", "f", Bounds::default());
        assert_eq!(s.paths.len(), 1);
        assert_eq!(s.paths[0].reverted, not(eq(p("a"), word(1))));
    }

    #[test]
    fn internal_calls_are_inlined() {
        let s = summary("function g(x) internal { return x * 2; }\nfunction f(a) { return g(a) + 1; }", "f", Bounds::default());
        assert_eq!(s.paths[0].returns, vec![arith(Op2::Add, arith(Op2::Mul, p("a"), word(2)), word(1))]);
    }

    #[test]
    fn external_calls_are_recorded() {
        let s = summary("function f(a) { a.transfer(5); }", "f", Bounds::default());
        assert_eq!(s.paths[0].calls, vec![ExternalCall { callee: ".transfer".into(), args: vec![p("a"), word(5)] }]);
    }

    #[test]
    fn path_cap() {
        let src = "function f(a, b, c) { if (a) { x = 1; } if (b) { x = 2; } if (c) { x = 3; } return x; }";
        let s = summary(src, "f", Bounds { loop_unroll: 2, max_paths: 4 });
        assert_eq!(s.paths.len(), 4);
        assert!(s.bound_hit);
        assert!(!summary(src, "f", Bounds::default()).bound_hit);
    }

    #[test]
    fn conversions() {
        assert_eq!(conversion("uint8"), Some(Conversion::Mask(8)));
        assert_eq!(conversion("uint"), Some(Conversion::Identity));
        assert_eq!(conversion("address"), Some(Conversion::Mask(160)));
        assert_eq!(conversion("bytes32"), Some(Conversion::Identity));
        assert_eq!(conversion("bytes"), None);
        assert_eq!(conversion("uint7"), None);
    }
}
