//! Symbolic terms over 256-bit words and booleans.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use ruint::aliases::U256;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sort {
    Word,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Op1 {
    Not,
    BvNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Op2 {
    Add,
    Sub,
    /// Only with a constant operand; symbolic products are uninterpreted.
    Mul,
    /// Only with a non-zero constant divisor.
    Div,
    Mod,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Eq,
    Ult,
    Ule,
    LAnd,
    LOr,
}

impl Op2 {
    fn result_sort(self) -> Sort {
        match self {
            Op2::Eq | Op2::Ult | Op2::Ule | Op2::LAnd | Op2::LOr => Sort::Bool,
            _ => Sort::Word,
        }
    }

    fn smt(self) -> &'static str {
        match self {
            Op2::Add => "bvadd",
            Op2::Sub => "bvsub",
            Op2::Mul => "bvmul",
            Op2::Div => "bvudiv",
            Op2::Mod => "bvurem",
            Op2::And => "bvand",
            Op2::Or => "bvor",
            Op2::Xor => "bvxor",
            Op2::Shl => "bvshl",
            Op2::Shr => "bvlshr",
            Op2::Eq => "=",
            Op2::Ult => "bvult",
            Op2::Ule => "bvule",
            Op2::LAnd => "and",
            Op2::LOr => "or",
        }
    }
}

/// Uninterpreted function names that stand for non-linear arithmetic.
pub const NONLINEAR: &[&str] = &["nl.mul", "nl.div", "nl.mod", "nl.exp"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Word(U256),
    Bool(bool),
    /// A free 256-bit input.
    Input(String),
    Un(Op1, Box<Term>),
    Bin(Op2, Box<Term>, Box<Term>),
    Ite(Box<Term>, Box<Term>, Box<Term>),
    /// Word-valued uninterpreted function over word arguments.
    Uf(String, Vec<Term>),
}

pub fn word(v: u64) -> Term {
    Term::Word(U256::from(v))
}

/// Word encoding of a string constant.
pub fn str_word(s: &str) -> U256 {
    let digest = Sha256::digest(s.as_bytes());
    U256::from_be_slice(&digest)
}

impl Term {
    pub fn sort(&self) -> Sort {
        match self {
            Term::Bool(_) | Term::Un(Op1::Not, _) => Sort::Bool,
            Term::Bin(op, ..) => op.result_sort(),
            Term::Ite(_, a, _) => a.sort(),
            _ => Sort::Word,
        }
    }

    pub fn as_word(&self) -> Option<U256> {
        match self {
            Term::Word(w) => Some(*w),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Term::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Term::Word(_) | Term::Bool(_))
    }

    fn children(&self) -> Vec<&Term> {
        match self {
            Term::Word(_) | Term::Bool(_) | Term::Input(_) => vec![],
            Term::Un(_, a) => vec![a],
            Term::Bin(_, a, b) => vec![a, b],
            Term::Ite(c, a, b) => vec![c, a, b],
            Term::Uf(_, args) => args.iter().collect(),
        }
    }

    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Term)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    pub fn inputs(&self, out: &mut BTreeSet<String>) {
        self.visit(&mut |t| {
            if let Term::Input(n) = t {
                out.insert(n.clone());
            }
        });
    }

    /// Rebuilds the term with inputs and function names rewritten.
    pub fn rename(&self, input: &dyn Fn(&str) -> String, uf: &dyn Fn(&str) -> String) -> Term {
        match self {
            Term::Word(_) | Term::Bool(_) => self.clone(),
            Term::Input(n) => Term::Input(input(n)),
            Term::Un(op, a) => Term::Un(*op, Box::new(a.rename(input, uf))),
            Term::Bin(op, a, b) => Term::Bin(*op, Box::new(a.rename(input, uf)), Box::new(b.rename(input, uf))),
            Term::Ite(c, a, b) => Term::Ite(Box::new(c.rename(input, uf)), Box::new(a.rename(input, uf)), Box::new(b.rename(input, uf))),
            Term::Uf(n, args) => Term::Uf(uf(n), args.iter().map(|a| a.rename(input, uf)).collect()),
        }
    }
}

// ---- smart constructors ----

pub fn to_word(t: Term) -> Term {
    match t {
        Term::Bool(b) => word(b as u64),
        t if t.sort() == Sort::Bool => Term::Ite(Box::new(t), Box::new(word(1)), Box::new(word(0))),
        t => t,
    }
}

pub fn to_bool(t: Term) -> Term {
    match t {
        Term::Word(w) => Term::Bool(!w.is_zero()),
        t if t.sort() == Sort::Word => not(eq(t, word(0))),
        t => t,
    }
}

pub fn not(t: Term) -> Term {
    match to_bool(t) {
        Term::Bool(b) => Term::Bool(!b),
        Term::Un(Op1::Not, inner) => *inner,
        t => Term::Un(Op1::Not, Box::new(t)),
    }
}

fn conjuncts(t: Term, out: &mut Vec<Term>) {
    match t {
        Term::Bin(Op2::LAnd, a, b) => {
            conjuncts(*a, out);
            conjuncts(*b, out);
        }
        t => out.push(t),
    }
}

/// Conjunction that drops duplicates and folds complementary literals to false.
pub fn and_all(terms: impl IntoIterator<Item = Term>) -> Term {
    let mut flat = Vec::new();
    for t in terms {
        conjuncts(to_bool(t), &mut flat);
    }
    let mut kept: Vec<Term> = Vec::new();
    for t in flat {
        match t {
            Term::Bool(true) => {}
            Term::Bool(false) => return Term::Bool(false),
            t => {
                if kept.contains(&t) {
                    continue;
                }
                let negated = not(t.clone());
                if kept.contains(&negated) {
                    return Term::Bool(false);
                }
                kept.push(t);
            }
        }
    }
    kept.into_iter()
        .reduce(|a, b| Term::Bin(Op2::LAnd, Box::new(a), Box::new(b)))
        .unwrap_or(Term::Bool(true))
}

pub fn and(a: Term, b: Term) -> Term {
    and_all([a, b])
}

pub fn or_all(terms: impl IntoIterator<Item = Term>) -> Term {
    let mut kept: Vec<Term> = Vec::new();
    for t in terms {
        match to_bool(t) {
            Term::Bool(false) => {}
            Term::Bool(true) => return Term::Bool(true),
            t if kept.contains(&t) => {}
            t => kept.push(t),
        }
    }
    kept.into_iter()
        .reduce(|a, b| Term::Bin(Op2::LOr, Box::new(a), Box::new(b)))
        .unwrap_or(Term::Bool(false))
}

pub fn or(a: Term, b: Term) -> Term {
    or_all([a, b])
}

pub fn eq(a: Term, b: Term) -> Term {
    let (a, b) = if a.sort() == b.sort() { (a, b) } else { (to_word(a), to_word(b)) };
    if a == b {
        return Term::Bool(true);
    }
    match (&a, &b) {
        (Term::Word(x), Term::Word(y)) => Term::Bool(x == y),
        (Term::Bool(x), Term::Bool(y)) => Term::Bool(x == y),
        (Term::Bool(true), _) => b,
        (_, Term::Bool(true)) => a,
        (Term::Bool(false), _) => not(b),
        (_, Term::Bool(false)) => not(a),
        _ if a <= b => Term::Bin(Op2::Eq, Box::new(a), Box::new(b)),
        _ => Term::Bin(Op2::Eq, Box::new(b), Box::new(a)),
    }
}

pub fn ite(c: Term, a: Term, b: Term) -> Term {
    let (a, b) = if a.sort() == b.sort() { (a, b) } else { (to_word(a), to_word(b)) };
    match to_bool(c) {
        Term::Bool(true) => a,
        Term::Bool(false) => b,
        _ if a == b => a,
        c => Term::Ite(Box::new(c), Box::new(a), Box::new(b)),
    }
}

pub fn uf(name: &str, args: Vec<Term>) -> Term {
    Term::Uf(name.to_string(), args.into_iter().map(to_word).collect())
}

/// Word semantics shared by folding, evaluation and the concrete interpreter.
pub fn word_op(op: Op2, a: U256, b: U256) -> U256 {
    match op {
        Op2::Add => a.wrapping_add(b),
        Op2::Sub => a.wrapping_sub(b),
        Op2::Mul => a.wrapping_mul(b),
        Op2::Div => a.checked_div(b).unwrap_or(U256::ZERO),
        Op2::Mod => a.checked_rem(b).unwrap_or(U256::ZERO),
        Op2::And => a & b,
        Op2::Or => a | b,
        Op2::Xor => a ^ b,
        Op2::Shl => shift_amount(b).map_or(U256::ZERO, |s| a << s),
        Op2::Shr => shift_amount(b).map_or(U256::ZERO, |s| a >> s),
        Op2::Eq => U256::from((a == b) as u8),
        Op2::Ult => U256::from((a < b) as u8),
        Op2::Ule => U256::from((a <= b) as u8),
        Op2::LAnd => U256::from((!a.is_zero() && !b.is_zero()) as u8),
        Op2::LOr => U256::from((!a.is_zero() || !b.is_zero()) as u8),
    }
}

pub fn pow_word(a: U256, b: U256) -> U256 {
    a.wrapping_pow(b)
}

fn shift_amount(b: U256) -> Option<usize> {
    (b < U256::from(256u32)).then(|| b.to::<usize>())
}

/// Arithmetic and bitwise operations on words.
pub fn arith(op: Op2, a: Term, b: Term) -> Term {
    let (a, b) = (to_word(a), to_word(b));
    if let (Some(x), Some(y)) = (a.as_word(), b.as_word()) {
        return Term::Word(word_op(op, x, y));
    }
    let commutative = matches!(op, Op2::Add | Op2::Mul | Op2::And | Op2::Or | Op2::Xor);
    let (a, b) = if commutative && b < a { (b, a) } else { (a, b) };
    let zero = |t: &Term| t.as_word().is_some_and(|w| w.is_zero());
    let one = |t: &Term| t.as_word() == Some(U256::from(1u8));
    match op {
        Op2::Add if zero(&b) => return a,
        Op2::Add if zero(&a) => return b,
        Op2::Sub | Op2::Or | Op2::Xor | Op2::Shl | Op2::Shr if zero(&b) => return a,
        Op2::Or | Op2::Xor if zero(&a) => return b,
        Op2::Sub | Op2::Xor if a == b => return word(0),
        Op2::And if zero(&a) || zero(&b) => return word(0),
        Op2::Shl | Op2::Shr if zero(&a) => return word(0),
        Op2::Mul if zero(&a) || zero(&b) => return word(0),
        Op2::Mul if one(&b) => return a,
        Op2::Mul if one(&a) => return b,
        Op2::Div if one(&b) => return a,
        Op2::Div | Op2::Mod if zero(&b) => return word(0),
        Op2::Mul if !a.is_const() && !b.is_const() => return uf("nl.mul", vec![a, b]),
        Op2::Div if !b.is_const() => return uf("nl.div", vec![a, b]),
        Op2::Mod if !b.is_const() => return uf("nl.mod", vec![a, b]),
        _ => {}
    }
    Term::Bin(op, Box::new(a), Box::new(b))
}

pub fn pow(a: Term, b: Term) -> Term {
    let (a, b) = (to_word(a), to_word(b));
    match (a.as_word(), b.as_word()) {
        (Some(x), Some(y)) => Term::Word(pow_word(x, y)),
        (_, Some(y)) if y.is_zero() => word(1),
        (_, Some(y)) if y == U256::from(1u8) => a,
        _ => uf("nl.exp", vec![a, b]),
    }
}

pub fn ult(a: Term, b: Term) -> Term {
    let (a, b) = (to_word(a), to_word(b));
    match (a.as_word(), b.as_word()) {
        (Some(x), Some(y)) => Term::Bool(x < y),
        _ if a == b => Term::Bool(false),
        _ => Term::Bin(Op2::Ult, Box::new(a), Box::new(b)),
    }
}

pub fn ule(a: Term, b: Term) -> Term {
    let (a, b) = (to_word(a), to_word(b));
    match (a.as_word(), b.as_word()) {
        (Some(x), Some(y)) => Term::Bool(x <= y),
        _ if a == b => Term::Bool(true),
        _ => Term::Bin(Op2::Ule, Box::new(a), Box::new(b)),
    }
}

pub fn bvnot(a: Term) -> Term {
    match to_word(a) {
        Term::Word(w) => Term::Word(!w),
        Term::Un(Op1::BvNot, inner) => *inner,
        a => Term::Un(Op1::BvNot, Box::new(a)),
    }
}

pub fn mask(a: Term, bits: usize) -> Term {
    if bits >= 256 {
        return to_word(a);
    }
    let m = (U256::from(1u8) << bits).wrapping_sub(U256::from(1u8));
    arith(Op2::And, a, Term::Word(m))
}

// ---- evaluation ----

/// Interpretation of uninterpreted functions for concrete evaluation.
pub trait UfModel {
    fn apply(&mut self, name: &str, args: &[U256]) -> U256;
}

/// Non-linear helpers carry their arithmetic meaning in every model.
pub fn nonlinear_value(name: &str, args: &[U256]) -> Option<U256> {
    let (a, b) = (*args.first()?, *args.get(1)?);
    match name {
        "nl.mul" => Some(word_op(Op2::Mul, a, b)),
        "nl.div" => Some(word_op(Op2::Div, a, b)),
        "nl.mod" => Some(word_op(Op2::Mod, a, b)),
        "nl.exp" => Some(pow_word(a, b)),
        _ => None,
    }
}

/// Table-backed model; unseen applications get a hash-derived value.
#[derive(Debug, Clone, Default)]
pub struct TableModel {
    pub table: BTreeMap<(String, Vec<U256>), U256>,
}

impl TableModel {
    pub fn hash_value(name: &str, args: &[U256]) -> U256 {
        let mut h = Sha256::new();
        h.update(name.as_bytes());
        for a in args {
            h.update(a.to_be_bytes::<32>());
        }
        U256::from_be_slice(&h.finalize())
    }
}

impl UfModel for TableModel {
    fn apply(&mut self, name: &str, args: &[U256]) -> U256 {
        if let Some(v) = nonlinear_value(name, args) {
            return v;
        }
        *self
            .table
            .entry((name.to_string(), args.to_vec()))
            .or_insert_with(|| TableModel::hash_value(name, args))
    }
}

impl Term {
    /// Evaluates to a word; booleans become 0 or 1.
    pub fn eval(&self, inputs: &dyn Fn(&str) -> U256, model: &mut dyn UfModel) -> U256 {
        let b = |v: bool| U256::from(v as u8);
        match self {
            Term::Word(w) => *w,
            Term::Bool(v) => b(*v),
            Term::Input(n) => inputs(n),
            Term::Un(Op1::Not, a) => b(a.eval(inputs, model).is_zero()),
            Term::Un(Op1::BvNot, a) => !a.eval(inputs, model),
            Term::Bin(op, x, y) => {
                let x = x.eval(inputs, model);
                let y = y.eval(inputs, model);
                word_op(*op, x, y)
            }
            Term::Ite(c, x, y) => {
                if c.eval(inputs, model).is_zero() {
                    y.eval(inputs, model)
                } else {
                    x.eval(inputs, model)
                }
            }
            Term::Uf(n, args) => {
                let vals: Vec<U256> = args.iter().map(|a| a.eval(inputs, model)).collect();
                model.apply(n, &vals)
            }
        }
    }
}

// ---- SMT-LIB ----

pub fn smt_symbol(name: &str) -> String {
    let clean: String = name.chars().map(|c| if c == '|' || c == '\\' { '_' } else { c }).collect();
    format!("|{clean}|")
}

pub fn uf_symbol(name: &str, arity: usize) -> String {
    smt_symbol(&format!("{name}/{arity}"))
}

impl Term {
    pub fn to_smt(&self) -> String {
        let mut out = String::new();
        self.write_smt(&mut out);
        out
    }

    fn write_smt(&self, out: &mut String) {
        match self {
            Term::Word(w) => {
                let _ = write!(out, "#x{w:064x}");
            }
            Term::Bool(v) => out.push_str(if *v { "true" } else { "false" }),
            Term::Input(n) => out.push_str(&smt_symbol(n)),
            Term::Un(op, a) => {
                out.push_str(if *op == Op1::Not { "(not " } else { "(bvnot " });
                a.write_smt(out);
                out.push(')');
            }
            Term::Bin(op, a, b) => {
                let _ = write!(out, "({} ", op.smt());
                a.write_smt(out);
                out.push(' ');
                b.write_smt(out);
                out.push(')');
            }
            Term::Ite(c, a, b) => {
                out.push_str("(ite ");
                c.write_smt(out);
                out.push(' ');
                a.write_smt(out);
                out.push(' ');
                b.write_smt(out);
                out.push(')');
            }
            Term::Uf(n, args) if args.is_empty() => out.push_str(&uf_symbol(n, 0)),
            Term::Uf(n, args) => {
                let _ = write!(out, "({}", uf_symbol(n, args.len()));
                for a in args {
                    out.push(' ');
                    a.write_smt(out);
                }
                out.push(')');
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Term {
        Term::Input("x".into())
    }

    #[test]
    fn folding() {
        assert_eq!(arith(Op2::Add, word(2), word(3)), word(5));
        assert_eq!(arith(Op2::Sub, word(0), word(1)), Term::Word(U256::MAX));
        assert_eq!(arith(Op2::Div, x(), word(0)), word(0));
        assert_eq!(arith(Op2::Add, x(), word(0)), x());
        assert_eq!(eq(x(), x()), Term::Bool(true));
        assert_eq!(and(x(), not(x())), Term::Bool(false));
        assert_eq!(ite(Term::Bool(true), word(1), word(2)), word(1));
    }

    #[test]
    fn nonlinear_products_are_uninterpreted() {
        let y = Term::Input("y".into());
        assert!(matches!(arith(Op2::Mul, x(), y.clone()), Term::Uf(ref n, _) if n == "nl.mul"));
        assert!(matches!(arith(Op2::Mul, x(), word(3)), Term::Bin(Op2::Mul, ..)));
        assert!(matches!(arith(Op2::Div, word(8), y), Term::Uf(ref n, _) if n == "nl.div"));
    }

    #[test]
    fn evm_word_semantics() {
        // Hand-computed EVM results.
        assert_eq!(word_op(Op2::Div, U256::from(7u8), U256::ZERO), U256::ZERO);
        assert_eq!(word_op(Op2::Shl, U256::from(1u8), U256::from(256u32)), U256::ZERO);
        assert_eq!(word_op(Op2::Shl, U256::from(1u8), U256::from(255u32)), U256::from(1u8) << 255);
        assert_eq!(word_op(Op2::Add, U256::MAX, U256::from(2u8)), U256::from(1u8));
    }

    #[test]
    fn eval_matches_folding() {
        let t = arith(Op2::Add, arith(Op2::Mul, x(), word(3)), word(4));
        let v = t.eval(&|_| U256::from(5u8), &mut TableModel::default());
        assert_eq!(v, U256::from(19u8));
    }

    #[test]
    fn smt_text() {
        let t = ult(x(), uf("keccak256", vec![x()]));
        assert_eq!(t.to_smt(), "(bvult |x| (|keccak256/1| |x|))");
        assert!(word(1).to_smt().starts_with("#x00"));
        assert_eq!(word(1).to_smt().len(), 66);
    }
}
