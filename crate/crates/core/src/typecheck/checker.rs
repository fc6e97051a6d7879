use std::collections::{BTreeMap, HashMap};

use ruint::aliases::U256;
use serde::{Deserialize, Serialize};

use super::types::*;
use crate::depgraph::builtins::{callee_name, env_name, BuiltinTable, Signature};
use crate::frontend::ir::parse_int_literal;
use crate::frontend::lexer::is_elementary_type;
use crate::frontend::{
    render_stmt_brief, BinOp, Expr, ExprKind, FunctionDecl, Literal, OpClass, Pos, SourceUnit, Stmt, StmtKind, UnOp,
};

/// The static typing rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    Constant,
    Shift,
    Numeric,
    Compare,
    TupleArray,
    Comprehension,
    Boolean,
    Bitwise,
    Equality,
    Call,
    Slice,
}

impl Rule {
    pub const ALL: [Rule; 11] = [
        Rule::Constant,
        Rule::Shift,
        Rule::Numeric,
        Rule::Compare,
        Rule::TupleArray,
        Rule::Comprehension,
        Rule::Boolean,
        Rule::Bitwise,
        Rule::Equality,
        Rule::Call,
        Rule::Slice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Constant => "Constant",
            Rule::Shift => "LShift/RShift",
            Rule::Numeric => "Numeric Operations",
            Rule::Compare => "Lt/LtE/Gt/GtE",
            Rule::TupleArray => "Tuple/Array",
            Rule::Comprehension => "Comprehension",
            Rule::Boolean => "Boolean Operation",
            Rule::Bitwise => "Bitor/BitAnd/BitXor",
            Rule::Equality => "Eq/NotEq/Is/IsNot",
            Rule::Call => "Call",
            Rule::Slice => "Slice",
        }
    }

    fn suggestion(self) -> &'static str {
        match self {
            Rule::Constant => "Use a literal that fits in 256 bits.",
            Rule::Shift => "Shift operands must be integers.",
            Rule::Numeric => "Arithmetic operands must be integers of the same signedness.",
            Rule::Compare => "Ordering comparisons need two compatible integer, fixed-bytes or address operands.",
            Rule::TupleArray => "Array literal elements must share a common type.",
            Rule::Comprehension => "Only strings, bytes and arrays can be iterated element by element.",
            Rule::Boolean => "Logical operators and conditions require bool operands.",
            Rule::Bitwise => "Bitwise operands must be compatible bool, integer or fixed-bytes values.",
            Rule::Equality => "Equality operands must have a common type.",
            Rule::Call => "Check the callee signature; add an explicit conversion or change the declared type.",
            Rule::Slice => "Index with a key convertible to the mapping key type, or an integer for arrays and bytes.",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub function: String,
    pub pos: Pos,
    /// Rendered statement the violation occurs in.
    pub statement: String,
    pub expected: String,
    pub found: String,
    pub suggestion: String,
}

impl Violation {
    /// Identity used to compare violations across revisions.
    pub fn key(&self) -> (Rule, String, String, String) {
        (self.rule, self.function.clone(), self.statement.clone(), self.found.clone())
    }

    pub fn feedback(&self) -> String {
        format!(
            "Type violation ({}) in function {} at {}: statement `{}` expects {} but found {}. {}",
            self.rule.name(),
            self.function,
            self.pos,
            self.statement,
            self.expected,
            self.found,
            self.suggestion
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    /// Text fed back to the model on the next iteration.
    pub fn feedback(&self) -> String {
        self.violations.iter().map(Violation::feedback).collect::<Vec<_>>().join("\n")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Violations of `self` not present in `baseline`, counting duplicates.
    pub fn new_relative_to(&self, baseline: &ViolationReport) -> ViolationReport {
        let mut budget: HashMap<_, usize> = HashMap::new();
        for v in &baseline.violations {
            *budget.entry(v.key()).or_default() += 1;
        }
        let mut out = Vec::new();
        for v in &self.violations {
            match budget.get_mut(&v.key()) {
                Some(n) if *n > 0 => *n -= 1,
                _ => out.push(v.clone()),
            }
        }
        ViolationReport { violations: out }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnSig {
    pub params: Vec<SolType>,
    pub ret: SolType,
}

/// Typing environment: storage declarations, function signatures, builtins.
#[derive(Debug, Clone)]
pub struct TypeEnv<'b> {
    pub storage: BTreeMap<String, SolType>,
    pub functions: BTreeMap<String, FnSig>,
    pub builtins: &'b BuiltinTable,
}

impl<'b> TypeEnv<'b> {
    /// Seeds the environment from declarations; undeclared return types are
    /// inferred from return statements until a fixpoint is reached.
    pub fn seed(unit: &SourceUnit, builtins: &'b BuiltinTable) -> Self {
        let mut env = TypeEnv { storage: BTreeMap::new(), functions: BTreeMap::new(), builtins };
        for d in &unit.storage {
            env.storage.insert(d.name.clone(), SolType::from_type_expr(&d.ty));
        }
        for f in &unit.functions {
            let params = f.params.iter().map(|p| p.ty.as_ref().map_or(SolType::Unknown, SolType::from_type_expr)).collect();
            let ret = declared_return(f).unwrap_or(SolType::Unknown);
            env.functions.insert(f.name.clone(), FnSig { params, ret });
        }
        let inferred: Vec<&FunctionDecl> = unit.functions.iter().filter(|f| declared_return(f).is_none()).collect();
        for _ in 0..=inferred.len() {
            let mut changed = false;
            for f in &inferred {
                let mut cx = FnChecker::new(unit, &env, f);
                cx.quiet = true;
                cx.run();
                let ret = cx.inferred_return.unwrap_or(SolType::Unknown);
                let sig = env.functions.get_mut(&f.name).expect("seeded");
                if sig.ret != ret {
                    sig.ret = ret;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        env
    }
}

fn declared_return(f: &FunctionDecl) -> Option<SolType> {
    match f.returns.as_slice() {
        [] => None,
        [one] => Some(SolType::from_type_expr(one)),
        many => Some(SolType::Tuple(many.iter().map(SolType::from_type_expr).collect())),
    }
}

/// Whole-unit check; functions are independent given the environment.
pub fn check_unit(unit: &SourceUnit, env: &TypeEnv) -> ViolationReport {
    let mut violations = Vec::new();
    for f in &unit.functions {
        let mut cx = FnChecker::new(unit, env, f);
        cx.run();
        violations.extend(cx.violations);
    }
    ViolationReport { violations }
}

/// Literal facts that allow lenient conversion of constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Lit {
    Int { value: Option<U256>, hex_digits: Option<usize> },
    Str { len: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Typed {
    ty: SolType,
    lit: Option<Lit>,
}

impl Typed {
    fn plain(ty: SolType) -> Self {
        Typed { ty, lit: None }
    }
}

fn bits_needed(v: U256) -> u16 {
    let bits = v.bit_len().max(1) as u16;
    bits.div_ceil(8) * 8
}

/// Whether a typed value may be assigned to `to`, honoring literal leniency.
fn assignable(from: &Typed, to: &SolType) -> bool {
    match (from.lit, to) {
        (Some(Lit::Int { value, .. }), SolType::Int { bits, signed }) => match value {
            Some(v) => {
                let limit = if *signed { bits - 1 } else { *bits };
                v.bit_len() <= limit as usize
            }
            None => true,
        },
        (Some(Lit::Int { value, hex_digits }), SolType::FixedBytes(n)) => {
            hex_digits == Some(2 * *n as usize) || value == Some(U256::ZERO)
        }
        (Some(Lit::Int { hex_digits, .. }), SolType::Address { .. }) => hex_digits == Some(40),
        (Some(Lit::Str { .. }), SolType::String | SolType::DynBytes) => true,
        (Some(Lit::Str { len }), SolType::FixedBytes(n)) => len <= *n as usize,
        _ => convertible(&from.ty, to),
    }
}

/// Common type of two operands where either may be a literal.
fn unify(a: &Typed, b: &Typed) -> SolType {
    match (a.lit.is_some(), b.lit.is_some()) {
        (true, false) if assignable(a, &b.ty) => b.ty.clone(),
        (false, true) if assignable(b, &a.ty) => a.ty.clone(),
        _ => common_type(&a.ty, &b.ty),
    }
}

/// Rule under which a conversion of `e`'s value is reported.
fn rule_for_root(e: &Expr) -> Rule {
    match &e.kind {
        ExprKind::Const(_) => Rule::Constant,
        ExprKind::Binary(op, ..) => match op {
            BinOp::Shl | BinOp::Shr => Rule::Shift,
            BinOp::BitAnd | BinOp::BitOr | BinOp::BitXor => Rule::Bitwise,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => Rule::Compare,
            BinOp::Eq | BinOp::Ne => Rule::Equality,
            BinOp::And | BinOp::Or => Rule::Boolean,
            _ => Rule::Numeric,
        },
        ExprKind::Unary(UnOp::Not, _) => Rule::Boolean,
        ExprKind::Unary(UnOp::Neg, _) => Rule::Numeric,
        ExprKind::Unary(UnOp::BitNot, _) => Rule::Bitwise,
        ExprKind::Tuple(_) | ExprKind::ArrayLit(_) => Rule::TupleArray,
        ExprKind::Index(..) | ExprKind::SliceRange(..) => Rule::Slice,
        ExprKind::Call(..) | ExprKind::Var(_) | ExprKind::Member(..) | ExprKind::TypeName(_) => Rule::Call,
    }
}

struct FnChecker<'a, 'b> {
    unit: &'a SourceUnit,
    env: &'a TypeEnv<'b>,
    f: &'a FunctionDecl,
    locals: HashMap<String, SolType>,
    /// Locals whose type came from a declaration rather than inference.
    declared: HashMap<String, bool>,
    violations: Vec<Violation>,
    inferred_return: Option<SolType>,
    quiet: bool,
    stmt_text: String,
    pos: Pos,
}

impl<'a, 'b> FnChecker<'a, 'b> {
    fn new(unit: &'a SourceUnit, env: &'a TypeEnv<'b>, f: &'a FunctionDecl) -> Self {
        let mut locals = HashMap::new();
        let mut declared = HashMap::new();
        for p in &f.params {
            let ty = p.ty.as_ref().map_or(SolType::Unknown, SolType::from_type_expr);
            declared.insert(p.name.clone(), p.ty.is_some());
            locals.insert(p.name.clone(), ty);
        }
        FnChecker {
            unit,
            env,
            f,
            locals,
            declared,
            violations: Vec::new(),
            inferred_return: None,
            quiet: false,
            stmt_text: String::new(),
            pos: f.pos,
        }
    }

    fn run(&mut self) {
        for s in &self.f.body {
            self.stmt(s);
        }
    }

    fn report(&mut self, rule: Rule, pos: Pos, expected: impl Into<String>, found: &SolType) {
        if self.quiet {
            return;
        }
        self.violations.push(Violation {
            rule,
            function: self.f.name.clone(),
            pos,
            statement: self.stmt_text.clone(),
            expected: expected.into(),
            found: found.to_string(),
            suggestion: rule.suggestion().to_string(),
        });
    }

    fn lookup(&self, name: &str) -> SolType {
        if let Some(t) = self.locals.get(name) {
            return t.clone();
        }
        if self.unit.is_storage(name) {
            return self.env.storage.get(name).cloned().unwrap_or(SolType::Unknown);
        }
        if let Some(sig) = self.env.functions.get(name) {
            return SolType::Callable(sig.params.clone(), Box::new(sig.ret.clone()));
        }
        SolType::Unknown
    }

    fn is_storage_var(&self, name: &str) -> bool {
        self.unit.is_storage(name) && !self.locals.contains_key(name)
    }

    fn check_assign(&mut self, value: &Expr, typed: &Typed, to: &SolType) {
        if typed.ty.is_bottom() || to.is_bottom() {
            return;
        }
        if !assignable(typed, to) {
            self.report(rule_for_root(value), value.pos, format!("{to}-compatible value"), &typed.ty);
        }
    }

    fn concrete(t: Typed) -> SolType {
        match (t.lit, t.ty) {
            (Some(Lit::Int { value: Some(v), .. }), _) => SolType::uint(bits_needed(v).max(256)),
            (Some(Lit::Int { .. }), _) => SolType::UINT256,
            (Some(Lit::Str { .. }), _) => SolType::String,
            (None, ty) => ty,
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        self.stmt_text = render_stmt_brief(s);
        self.pos = s.pos;
        match &s.kind {
            StmtKind::VarDecl { ty, name, init, .. } => {
                let t = SolType::from_type_expr(ty);
                if let Some(init) = init {
                    let v = self.expr(init);
                    self.check_assign(init, &v, &t);
                }
                self.locals.insert(name.clone(), t);
                self.declared.insert(name.clone(), true);
            }
            StmtKind::Assign { target, op, value } | StmtKind::StorageWrite { target, op, value } => {
                let v = match op.binop() {
                    None => self.expr(value),
                    Some(bop) => {
                        let synthetic = Expr::new(ExprKind::Binary(bop, Box::new(target.clone()), Box::new(value.clone())), value.pos);
                        self.expr(&synthetic)
                    }
                };
                self.assign_to(target, value, v);
            }
            StmtKind::ExprStmt(e) => {
                self.expr(e);
            }
            StmtKind::Require(c, msg) => {
                self.condition(c);
                if let Some(m) = msg {
                    self.expr(m);
                }
            }
            StmtKind::If { cond, then_body, else_body } => {
                self.condition(cond);
                for st in then_body {
                    self.stmt(st);
                }
                for st in else_body.iter().flatten() {
                    self.stmt(st);
                }
            }
            StmtKind::While { cond, body } => {
                self.condition(cond);
                self.comprehension(cond, body);
                for st in body {
                    self.stmt(st);
                }
            }
            StmtKind::Return(value) => {
                let Some(e) = value else { return };
                let v = self.expr(e);
                match declared_return(self.f) {
                    Some(ret) => self.check_assign(e, &v, &ret),
                    None => {
                        let t = Self::concrete(v);
                        if !t.is_bottom() && self.inferred_return.as_ref().is_none_or(SolType::is_open) {
                            self.inferred_return = Some(t);
                        }
                    }
                }
            }
        }
    }

    fn condition(&mut self, c: &Expr) {
        let t = self.expr(c);
        if !t.ty.is_bottom() && meet(&t.ty, Family::BOOL).is_bottom() {
            self.report(Rule::Boolean, c.pos, "bool", &t.ty);
        }
    }

    /// `while (i < e.length)` iterates over the elements of `e`.
    fn comprehension(&mut self, cond: &Expr, body: &[Stmt]) {
        let ExprKind::Binary(BinOp::Lt | BinOp::Le, _, bound) = &cond.kind else { return };
        let ExprKind::Member(seq, m) = &bound.kind else { return };
        if m != "length" {
            return;
        }
        let t = self.expr(seq);
        if t.ty.is_bottom() {
            return;
        }
        if meet(&t.ty, Family::ITERABLE).is_bottom() {
            self.report(Rule::Comprehension, seq.pos, Family::ITERABLE.to_string(), &t.ty);
        } else if !body.is_empty() {
            let _ = element_type(&t.ty);
        }
    }

    fn assign_to(&mut self, target: &Expr, value: &Expr, v: Typed) {
        match &target.kind {
            ExprKind::Var(name) => {
                let known = self.declared.get(name).copied().unwrap_or(false) || self.is_storage_var(name);
                if known {
                    let t = self.lookup(name);
                    self.check_assign(value, &v, &t);
                } else {
                    let current = self.locals.get(name).cloned().unwrap_or(SolType::Unknown);
                    if current.is_open() {
                        self.locals.insert(name.clone(), Self::concrete(v));
                    } else {
                        self.check_assign(value, &v, &current);
                    }
                }
            }
            ExprKind::Tuple(items) => {
                let parts: Vec<Typed> = match &v.ty {
                    SolType::Tuple(ts) if ts.len() == items.len() => ts.iter().cloned().map(Typed::plain).collect(),
                    _ => items.iter().map(|_| Typed::plain(SolType::Unknown)).collect(),
                };
                for (item, part) in items.iter().zip(parts) {
                    self.assign_to(item, value, part);
                }
            }
            _ => {
                let t = self.expr(target);
                self.check_assign(value, &v, &t.ty);
            }
        }
    }

    fn expr(&mut self, e: &Expr) -> Typed {
        if let Some(ty) = self.env.builtins.value(e) {
            if !self.locals.contains_key(&env_name(e).unwrap_or_default()) {
                return Typed::plain(SolType::parse(ty).unwrap_or(SolType::Unknown));
            }
        }
        match &e.kind {
            ExprKind::Var(v) => Typed::plain(self.lookup(v)),
            ExprKind::Const(Literal::Number(raw)) => match parse_int_literal(raw) {
                Some(v) => {
                    let hex = raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X")).map(|h| h.chars().filter(|c| *c != '_').count());
                    Typed { ty: SolType::uint(bits_needed(v)), lit: Some(Lit::Int { value: Some(v), hex_digits: hex }) }
                }
                None => {
                    self.report(Rule::Constant, e.pos, "integer literal within 256 bits", &SolType::Bottom);
                    Typed::plain(SolType::Bottom)
                }
            },
            ExprKind::Const(Literal::Str(s)) => Typed { ty: SolType::String, lit: Some(Lit::Str { len: s.len() }) },
            ExprKind::Const(Literal::Bool(_)) => Typed::plain(SolType::Bool),
            ExprKind::TypeName(_) => Typed::plain(SolType::Unknown),
            ExprKind::Binary(op, a, b) => {
                let ta = self.expr(a);
                let tb = self.expr(b);
                if ta.ty.is_bottom() || tb.ty.is_bottom() {
                    return Typed::plain(SolType::Bottom);
                }
                self.binary(e, *op, ta, tb)
            }
            ExprKind::Unary(op, a) => {
                let t = self.expr(a);
                if t.ty.is_bottom() {
                    return t;
                }
                let (rule, fam) = match op {
                    UnOp::Not => (Rule::Boolean, Family::BOOL),
                    UnOp::Neg => (Rule::Numeric, Family::INT),
                    UnOp::BitNot => (Rule::Bitwise, Family::BOOL_INT_BYTE),
                };
                let m = meet(&t.ty, fam);
                if m.is_bottom() {
                    self.report(rule, a.pos, fam.to_string(), &t.ty);
                    return Typed::plain(SolType::Bottom);
                }
                if *op == UnOp::Not {
                    return Typed::plain(SolType::Bool);
                }
                Typed { ty: m, lit: t.lit }
            }
            ExprKind::Tuple(items) => {
                let mut ts = Vec::new();
                for i in items {
                    let t = self.expr(i);
                    if t.ty.is_bottom() {
                        return Typed::plain(SolType::Bottom);
                    }
                    ts.push(Self::concrete(t));
                }
                Typed::plain(SolType::Tuple(ts))
            }
            ExprKind::ArrayLit(items) => {
                let typed: Vec<Typed> = items.iter().map(|i| self.expr(i)).collect();
                if typed.iter().any(|t| t.ty.is_bottom()) {
                    return Typed::plain(SolType::Bottom);
                }
                let mut acc: Option<Typed> = None;
                for t in &typed {
                    acc = Some(match acc {
                        None => t.clone(),
                        Some(prev) => {
                            let u = unify(&prev, t);
                            if u.is_bottom() {
                                self.report(Rule::TupleArray, e.pos, format!("elements compatible with {}", prev.ty), &t.ty);
                                return Typed::plain(SolType::Bottom);
                            }
                            let both_lit = prev.lit.is_some() && t.lit.is_some();
                            Typed { ty: u, lit: if both_lit { prev.lit } else { None } }
                        }
                    });
                }
                let elem = acc.map(Self::concrete).unwrap_or(SolType::Unknown);
                Typed::plain(SolType::Array(Box::new(elem), Some(items.len() as u64)))
            }
            ExprKind::Call(callee, args) => self.call(e, callee, args),
            ExprKind::Index(base, key) => {
                let tb = self.expr(base);
                let tk = self.expr(key);
                if tb.ty.is_bottom() || tk.ty.is_bottom() {
                    return Typed::plain(SolType::Bottom);
                }
                match &tb.ty {
                    SolType::Mapping(k, _) => {
                        if !assignable(&tk, k) {
                            self.report(Rule::Slice, key.pos, format!("key convertible to {k}"), &tk.ty);
                            return Typed::plain(SolType::Bottom);
                        }
                    }
                    other if other.is_open() => {}
                    other => {
                        if meet(other, Family::INDEXABLE).is_bottom() {
                            self.report(Rule::Slice, base.pos, Family::INDEXABLE.to_string(), other);
                            return Typed::plain(SolType::Bottom);
                        }
                        if meet(&tk.ty, Family::INT).is_bottom() {
                            self.report(Rule::Slice, key.pos, "int index", &tk.ty);
                            return Typed::plain(SolType::Bottom);
                        }
                    }
                }
                Typed::plain(element_type(&tb.ty).unwrap_or(SolType::Unknown))
            }
            ExprKind::SliceRange(base, lo, hi) => {
                let tb = self.expr(base);
                for bound in lo.iter().chain(hi.iter()) {
                    let t = self.expr(bound);
                    if !t.ty.is_bottom() && meet(&t.ty, Family::INT).is_bottom() {
                        self.report(Rule::Slice, bound.pos, "int bound", &t.ty);
                        return Typed::plain(SolType::Bottom);
                    }
                }
                if tb.ty.is_bottom() {
                    return tb;
                }
                let fam = Family::of(&[TypeClass::Str, TypeClass::Bytes, TypeClass::Array]);
                if meet(&tb.ty, fam).is_bottom() {
                    self.report(Rule::Slice, base.pos, fam.to_string(), &tb.ty);
                    return Typed::plain(SolType::Bottom);
                }
                tb
            }
            ExprKind::Member(base, m) => {
                let tb = self.expr(base);
                if tb.ty.is_bottom() {
                    return tb;
                }
                match self.env.builtins.member(m) {
                    Some(ty) => Typed::plain(SolType::parse(ty).unwrap_or(SolType::Unknown)),
                    None => Typed::plain(SolType::Unknown),
                }
            }
        }
    }

    fn binary(&mut self, e: &Expr, op: BinOp, ta: Typed, tb: Typed) -> Typed {
        let both_lit = ta.lit.is_some() && tb.lit.is_some();
        match op {
            BinOp::Shl | BinOp::Shr => {
                for (t, side) in [(&ta, "left"), (&tb, "right")] {
                    if meet(&t.ty, Family::BOOL_INT).is_bottom() {
                        let _ = side;
                        self.report(Rule::Shift, e.pos, Family::BOOL_INT.to_string(), &t.ty);
                        return Typed::plain(SolType::Bottom);
                    }
                }
                Typed { ty: meet(&ta.ty, Family::BOOL_INT), lit: if both_lit { ta.lit } else { None } }
            }
            _ if op.class() == OpClass::Numop => {
                for t in [&ta, &tb] {
                    if meet(&t.ty, Family::BOOL_INT).is_bottom() {
                        self.report(Rule::Numeric, e.pos, Family::BOOL_INT.to_string(), &t.ty);
                        return Typed::plain(SolType::Bottom);
                    }
                }
                if both_lit {
                    return Typed { ty: SolType::UINT256, lit: Some(Lit::Int { value: None, hex_digits: None }) };
                }
                if op == BinOp::Exp {
                    return Typed::plain(if ta.lit.is_some() { tb.ty } else { ta.ty });
                }
                let (a, b) = match (ta.lit.is_some(), tb.lit.is_some()) {
                    (true, false) if assignable(&ta, &tb.ty) => (tb.ty.clone(), tb.ty.clone()),
                    (false, true) if assignable(&tb, &ta.ty) => (ta.ty.clone(), ta.ty.clone()),
                    _ => (ta.ty.clone(), tb.ty.clone()),
                };
                let r = more_precise(&meet(&a, Family::BOOL_INT), &meet(&b, Family::BOOL_INT));
                if r.is_bottom() {
                    self.report(Rule::Numeric, e.pos, format!("operand compatible with {a}"), &b);
                }
                Typed::plain(r)
            }
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                for t in [&ta, &tb] {
                    if meet(&t.ty, Family::ORDERED).is_bottom() {
                        self.report(Rule::Compare, e.pos, Family::ORDERED.to_string(), &t.ty);
                        return Typed::plain(SolType::Bottom);
                    }
                }
                if unify(&ta, &tb).is_bottom() {
                    self.report(Rule::Compare, e.pos, format!("operand compatible with {}", ta.ty), &tb.ty);
                    return Typed::plain(SolType::Bottom);
                }
                Typed::plain(SolType::Bool)
            }
            BinOp::Eq | BinOp::Ne => {
                if unify(&ta, &tb).is_bottom() {
                    self.report(Rule::Equality, e.pos, format!("operand compatible with {}", ta.ty), &tb.ty);
                    return Typed::plain(SolType::Bottom);
                }
                Typed::plain(SolType::Bool)
            }
            BinOp::And | BinOp::Or => {
                for t in [&ta, &tb] {
                    if meet(&t.ty, Family::BOOL).is_bottom() {
                        self.report(Rule::Boolean, e.pos, "bool", &t.ty);
                        return Typed::plain(SolType::Bottom);
                    }
                }
                Typed::plain(SolType::Bool)
            }
            _ => {
                for t in [&ta, &tb] {
                    if meet(&t.ty, Family::BOOL_INT_BYTE).is_bottom() {
                        self.report(Rule::Bitwise, e.pos, Family::BOOL_INT_BYTE.to_string(), &t.ty);
                        return Typed::plain(SolType::Bottom);
                    }
                }
                let u = unify(&ta, &tb);
                if u.is_bottom() {
                    self.report(Rule::Bitwise, e.pos, format!("operand compatible with {}", ta.ty), &tb.ty);
                    return Typed::plain(SolType::Bottom);
                }
                Typed { ty: u, lit: if both_lit { ta.lit } else { None } }
            }
        }
    }

    fn check_args(&mut self, args: &[Expr], typed: &[Typed], params: &[SolType], callee: &str, call_pos: Pos) -> bool {
        if args.len() != params.len() {
            self.report(
                Rule::Call,
                call_pos,
                format!("{} argument(s) for {callee}", params.len()),
                &SolType::Tuple(typed.iter().map(|t| t.ty.clone()).collect()),
            );
            return false;
        }
        for ((a, t), p) in args.iter().zip(typed).zip(params) {
            if !t.ty.is_bottom() && !assignable(t, p) {
                self.report(Rule::Call, a.pos, format!("argument convertible to {p}"), &t.ty);
                return false;
            }
        }
        true
    }

    fn signature_types(sig: &Signature) -> (Vec<SolType>, SolType) {
        let params = sig.params.iter().map(|p| SolType::parse(p).unwrap_or(SolType::Unknown)).collect();
        let ret = SolType::parse(&sig.returns).unwrap_or(SolType::Unknown);
        (params, ret)
    }

    fn call(&mut self, e: &Expr, callee: &Expr, args: &[Expr]) -> Typed {
        let recv = match &callee.kind {
            ExprKind::Member(recv, _) => match callee_name(callee) {
                Some(n) if n.starts_with('.') => Some(recv.as_ref()),
                _ => None,
            },
            _ => None,
        };
        let recv_t = recv.map(|r| self.expr(r));
        let typed: Vec<Typed> = args.iter().map(|a| self.expr(a)).collect();
        if typed.iter().any(|t| t.ty.is_bottom()) || recv_t.as_ref().is_some_and(|t| t.ty.is_bottom()) {
            return Typed::plain(SolType::Bottom);
        }
        let name = callee_name(callee).unwrap_or_default();

        if let ExprKind::TypeName(ty) = &callee.kind {
            return Typed::plain(SolType::from_type_expr(ty));
        }
        if is_elementary_type(&name) && !self.locals.contains_key(&name) {
            return Typed::plain(SolType::parse(&name).unwrap_or(SolType::Unknown));
        }
        if let ExprKind::Var(v) = &callee.kind {
            if let Some(t) = self.locals.get(v).cloned() {
                return match return_type(&t) {
                    Ok(r) => Typed::plain(r),
                    Err(_) => {
                        self.report(Rule::Call, callee.pos, "callable", &t);
                        Typed::plain(SolType::Bottom)
                    }
                };
            }
            if let Some(sig) = self.env.functions.get(v).cloned() {
                let params: Vec<SolType> = sig.params.clone();
                if !self.check_args(args, &typed, &params, v, e.pos) {
                    return Typed::plain(SolType::Bottom);
                }
                let callable = SolType::Callable(params, Box::new(sig.ret));
                return Typed::plain(return_type(&meet(&callable, Family::CALLABLE)).unwrap_or(SolType::Unknown));
            }
        }
        if let (Some(r), Some(rt)) = (recv, &recv_t) {
            if let Some(sig) = self.env.builtins.call(&name) {
                let (params, ret) = Self::signature_types(sig);
                if matches!(name.as_str(), ".transfer" | ".send") {
                    if meet(&rt.ty, Family::of(&[TypeClass::Address])).is_bottom() {
                        self.report(Rule::Call, r.pos, "address receiver", &rt.ty);
                        return Typed::plain(SolType::Bottom);
                    }
                    if !sig.variadic && params.len() == args.len() + 1 && !self.check_args(args, &typed, &params[1..], &name, e.pos) {
                        return Typed::plain(SolType::Bottom);
                    }
                }
                return Typed::plain(ret);
            }
            return Typed::plain(SolType::Unknown);
        }
        if let Some(sig) = self.env.builtins.call(&name) {
            let (params, ret) = Self::signature_types(sig);
            if !sig.variadic && !self.check_args(args, &typed, &params, &name, e.pos) {
                return Typed::plain(SolType::Bottom);
            }
            return Typed::plain(ret);
        }
        Typed::plain(SolType::Unknown)
    }
}
