//! Concrete evaluator over the IR, used to replay solver witnesses.

use std::collections::{BTreeMap, HashMap};

use ruint::aliases::U256;
use serde::{Deserialize, Serialize};

use super::symex::{classify, env_input, free_input, sload_name, CallKind, Conversion, MAX_CALL_DEPTH};
use super::term::{pow_word, str_word, word_op, Op2, TableModel, UfModel};
use crate::frontend::{BinOp, IrModule, IrOp, IrValue, UnOp};

const MAX_CONCRETE_STEPS: usize = 200_000;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub reverted: bool,
    pub returns: Vec<U256>,
    /// Final value of every written storage location.
    pub storage: BTreeMap<(String, Vec<U256>), U256>,
    pub calls: Vec<(String, Vec<U256>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("execution exceeded {0} steps")]
    StepLimit(usize),
    #[error("call depth exceeded")]
    CallDepth,
}

fn b(v: bool) -> U256 {
    U256::from(v as u8)
}

fn bin(op: BinOp, x: U256, y: U256) -> U256 {
    match op {
        BinOp::And => word_op(Op2::LAnd, x, y),
        BinOp::Or => word_op(Op2::LOr, x, y),
        BinOp::Add => word_op(Op2::Add, x, y),
        BinOp::Sub => word_op(Op2::Sub, x, y),
        BinOp::Mul => word_op(Op2::Mul, x, y),
        BinOp::Div => word_op(Op2::Div, x, y),
        BinOp::Mod => word_op(Op2::Mod, x, y),
        BinOp::Exp => pow_word(x, y),
        BinOp::Eq => b(x == y),
        BinOp::Ne => b(x != y),
        BinOp::Lt => b(x < y),
        BinOp::Le => b(x <= y),
        BinOp::Gt => b(x > y),
        BinOp::Ge => b(x >= y),
        BinOp::BitAnd => x & y,
        BinOp::BitOr => x | y,
        BinOp::BitXor => x ^ y,
        BinOp::Shl => word_op(Op2::Shl, x, y),
        BinOp::Shr => word_op(Op2::Shr, x, y),
    }
}

struct Machine<'a> {
    module: &'a IrModule,
    inputs: &'a dyn Fn(&str) -> U256,
    slot: &'a dyn Fn(&str) -> String,
    model: &'a mut TableModel,
    storage: BTreeMap<(String, Vec<U256>), U256>,
    calls: Vec<(String, Vec<U256>)>,
    stores: HashMap<U256, (U256, U256, U256)>,
    tuples: HashMap<U256, Vec<U256>>,
    steps: usize,
}

enum Exit {
    Return(Vec<U256>),
    Revert,
}

impl Machine<'_> {
    fn tuple(&mut self, vals: Vec<U256>) -> U256 {
        match vals.len() {
            0 => U256::ZERO,
            1 => vals[0],
            _ => {
                let w = self.model.apply("tuple", &vals);
                self.tuples.insert(w, vals);
                w
            }
        }
    }

    fn index(&mut self, base: U256, idx: U256) -> U256 {
        match self.stores.get(&base).copied() {
            Some((inner, i, v)) => {
                if i == idx {
                    v
                } else {
                    self.index(inner, idx)
                }
            }
            None => self.model.apply("index", &[base, idx]),
        }
    }

    fn call(&mut self, fi: usize, args: Vec<U256>, depth: usize) -> Result<Exit, ReplayError> {
        if depth > MAX_CALL_DEPTH {
            return Err(ReplayError::CallDepth);
        }
        let f = &self.module.functions[fi];
        let labels: HashMap<&str, usize> = f.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();
        let mut vars: HashMap<String, U256> = HashMap::new();
        for (i, p) in f.params.iter().enumerate() {
            vars.insert(p.clone(), args.get(i).copied().unwrap_or_default());
        }
        let (mut block, mut at) = (0usize, 0usize);
        loop {
            self.steps += 1;
            if self.steps > MAX_CONCRETE_STEPS {
                return Err(ReplayError::StepLimit(MAX_CONCRETE_STEPS));
            }
            let Some(bl) = f.blocks.get(block) else {
                return Ok(Exit::Return(Vec::new()));
            };
            let Some(instr) = bl.instrs.get(at) else {
                block += 1;
                at = 0;
                continue;
            };
            at += 1;
            let inputs = self.inputs;
            let val = |x: &IrValue| -> U256 {
                match x {
                    IrValue::Var(n) => vars.get(n).copied().unwrap_or_else(|| inputs(&free_input(n))),
                    IrValue::Temp(t) => vars.get(&format!("t{t}")).copied().unwrap_or_default(),
                    IrValue::Int(w) => *w,
                    IrValue::Str(s) => str_word(s),
                    IrValue::Bool(v) => b(*v),
                    IrValue::Env(e) => inputs(&env_input(e)),
                }
            };
            let result = match &instr.op {
                IrOp::Copy(a) => Some(val(a)),
                IrOp::Unop(op, a) => Some(match op {
                    UnOp::Not => b(val(a).is_zero()),
                    UnOp::Neg => U256::ZERO.wrapping_sub(val(a)),
                    UnOp::BitNot => !val(a),
                }),
                IrOp::Binop(op, x, y) => Some(bin(*op, val(x), val(y))),
                IrOp::Index(x, y) => {
                    let (x, y) = (val(x), val(y));
                    Some(self.index(x, y))
                }
                IrOp::StoreIndex { base, index, value } => {
                    let parts = (val(base), val(index), val(value));
                    let w = self.model.apply("store", &[parts.0, parts.1, parts.2]);
                    self.stores.insert(w, parts);
                    Some(w)
                }
                IrOp::Slice(base, lo, hi) => {
                    let name = format!("slice:{}{}", lo.is_some() as u8, hi.is_some() as u8);
                    let args: Vec<U256> = std::iter::once(val(base)).chain(lo.iter().map(&val)).chain(hi.iter().map(&val)).collect();
                    Some(self.model.apply(&name, &args))
                }
                IrOp::Member(a, field) => {
                    let a = val(a);
                    Some(self.model.apply(&format!("member:{field}"), &[a]))
                }
                IrOp::Tuple(items) => {
                    let vals: Vec<U256> = items.iter().map(&val).collect();
                    let w = self.model.apply("tuple", &vals);
                    self.tuples.insert(w, vals);
                    Some(w)
                }
                IrOp::ArrayLit(items) => {
                    let vals: Vec<U256> = items.iter().map(&val).collect();
                    Some(self.model.apply("array", &vals))
                }
                IrOp::Extract(a, i) => {
                    let w = val(a);
                    match self.tuples.get(&w).and_then(|t| t.get(*i)) {
                        Some(v) => Some(*v),
                        None => Some(self.model.apply(&format!("extract:{i}"), &[w])),
                    }
                }
                IrOp::LoadStorage { slot, keys } => {
                    let key = ((self.slot)(slot), keys.iter().map(&val).collect::<Vec<_>>());
                    Some(match self.storage.get(&key) {
                        Some(v) => *v,
                        None => self.model.apply(&sload_name(&key.0), &key.1),
                    })
                }
                IrOp::StoreStorage { slot, keys, value } => {
                    let key = ((self.slot)(slot), keys.iter().map(&val).collect::<Vec<_>>());
                    let v = val(value);
                    self.storage.insert(key, v);
                    None
                }
                IrOp::Require(c) => {
                    if val(c).is_zero() {
                        return Ok(Exit::Revert);
                    }
                    None
                }
                IrOp::Call { callee, args } => {
                    let args: Vec<U256> = args.iter().map(&val).collect();
                    match classify(self.module, callee) {
                        CallKind::Internal(g) => match self.call(g, args, depth + 1)? {
                            Exit::Revert => return Ok(Exit::Revert),
                            Exit::Return(vals) => Some(self.tuple(vals)),
                        },
                        CallKind::Conversion(c) => Some(match (c, args.first()) {
                            (_, None) => U256::ZERO,
                            (Conversion::Identity, Some(a)) => *a,
                            (Conversion::Mask(bits), Some(a)) => *a & ((U256::from(1u8) << bits).wrapping_sub(U256::from(1u8))),
                            (Conversion::Truth, Some(a)) => b(!a.is_zero()),
                        }),
                        CallKind::Pure => Some(self.model.apply(callee, &args)),
                        CallKind::Revert => return Ok(Exit::Revert),
                        CallKind::Assert => {
                            if args.first().is_some_and(|a| a.is_zero()) {
                                return Ok(Exit::Revert);
                            }
                            None
                        }
                        CallKind::External => {
                            let mut key = args.clone();
                            key.push(U256::from(self.calls.len()));
                            self.calls.push((callee.clone(), args));
                            Some(self.model.apply(&format!("call:{callee}"), &key))
                        }
                    }
                }
                IrOp::Ret(vals) => return Ok(Exit::Return(vals.iter().map(&val).collect())),
                IrOp::Jump(l) => {
                    block = labels[l.as_str()];
                    at = 0;
                    None
                }
                IrOp::Branch { cond, then_label, else_label } => {
                    block = labels[if val(cond).is_zero() { else_label.as_str() } else { then_label.as_str() }];
                    at = 0;
                    None
                }
            };
            if let (Some(v), Some(key)) = (result, instr.dest.as_ref().and_then(IrValue::var_key)) {
                vars.insert(key, v);
            }
        }
    }
}

/// Runs `function` on positional `args`. Other inputs (environment, free
/// names) come from `inputs`; storage slot names pass through `slot`.
pub fn run(
    module: &IrModule,
    function: &str,
    args: &[U256],
    inputs: &dyn Fn(&str) -> U256,
    slot: &dyn Fn(&str) -> String,
    model: &mut TableModel,
) -> Result<Observation, ReplayError> {
    let fi = module.functions.iter().position(|f| f.name == function).ok_or_else(|| ReplayError::UnknownFunction(function.into()))?;
    let mut m = Machine {
        module,
        inputs,
        slot,
        model,
        storage: BTreeMap::new(),
        calls: Vec::new(),
        stores: HashMap::new(),
        tuples: HashMap::new(),
        steps: 0,
    };
    Ok(match m.call(fi, args.to_vec(), 1)? {
        Exit::Revert => Observation { reverted: true, ..Default::default() },
        Exit::Return(returns) => Observation { reverted: false, returns, storage: m.storage, calls: m.calls },
    })
}

/// First observable on which two runs differ, as (name, left, right).
pub fn first_difference(a: &Observation, b: &Observation, model: &mut TableModel) -> Option<(String, String, String)> {
    if a.reverted != b.reverted {
        return Some(("reverted".into(), a.reverted.to_string(), b.reverted.to_string()));
    }
    if a.reverted {
        return None;
    }
    if a.returns.len() != b.returns.len() {
        return Some(("return arity".into(), a.returns.len().to_string(), b.returns.len().to_string()));
    }
    for (i, (x, y)) in a.returns.iter().zip(&b.returns).enumerate() {
        if x != y {
            return Some((format!("return[{i}]"), x.to_string(), y.to_string()));
        }
    }
    let keys: std::collections::BTreeSet<&(String, Vec<U256>)> = a.storage.keys().chain(b.storage.keys()).collect();
    for k in keys {
        let mut get = |o: &Observation| o.storage.get(k).copied().unwrap_or_else(|| model.apply(&sload_name(&k.0), &k.1));
        let (x, y) = (get(a), get(b));
        if x != y {
            let keys: Vec<String> = k.1.iter().map(|w| w.to_string()).collect();
            return Some((format!("storage {}[{}]", k.0, keys.join(", ")), x.to_string(), y.to_string()));
        }
    }
    if a.calls != b.calls {
        let show = |c: &[(String, Vec<U256>)]| format!("{c:?}");
        return Some(("external calls".into(), show(&a.calls), show(&b.calls)));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{lower_ir, parse_unit};

    fn exec(src: &str, f: &str, args: &[u64]) -> Observation {
        let module = lower_ir(&parse_unit("t", src)).unwrap();
        let args: Vec<U256> = args.iter().map(|a| U256::from(*a)).collect();
        run(&module, f, &args, &|_| U256::ZERO, &|s| s.to_string(), &mut TableModel::default()).unwrap()
    }

    #[test]
    fn arithmetic_and_loops() {
        let o = exec("function f(n) { i = 0; s = 0; while (i < n) { s += i; i += 1; } return s; }", "f", &[5]);
        assert_eq!(o.returns, vec![U256::from(10u8)]);
    }

    #[test]
    fn require_reverts_and_discards_effects() {
        let o = exec("function f(a) { stor_0 = 1; require(a == 2); }", "f", &[1]);
        assert!(o.reverted && o.storage.is_empty());
        let o = exec("function f(a) { stor_0 = 1; require(a == 2); }", "f", &[2]);
        assert_eq!(o.storage.get(&("stor_0".to_string(), vec![])), Some(&U256::from(1u8)));
    }

    #[test]
    fn internal_call_and_conversion() {
        let o = exec("function g(x) internal { return x + 300; }\nfunction f(a) { return uint8(g(a)); }", "f", &[1]);
        assert_eq!(o.returns, vec![U256::from(301u32 % 256)]);
    }

    #[test]
    fn wraparound() {
        let o = exec("function f(a) { return a - 1; }", "f", &[0]);
        assert_eq!(o.returns, vec![U256::MAX]);
    }

    #[test]
    fn differences_are_reported() {
        let a = exec("function f(a) { stor_0 = a; }", "f", &[1]);
        let b = exec("function f(a) { stor_0 = a + 1; }", "f", &[1]);
        let d = first_difference(&a, &b, &mut TableModel::default()).unwrap();
        assert_eq!(d, ("storage stor_0[]".to_string(), "1".to_string(), "2".to_string()));
    }
}
