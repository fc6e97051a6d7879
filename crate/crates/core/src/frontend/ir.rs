//! Three-address IR and lowering from the syntax tree.

use std::collections::HashSet;
use std::fmt;

use ruint::aliases::U256;
use serde::{Deserialize, Serialize};

use super::ast::*;
use super::lexer::Pos;
use super::render::render_type;
use super::FrontendError;

/// Roots whose members are transaction/block environment values.
pub const ENV_ROOTS: &[&str] = &["msg", "block", "tx"];
/// Bare identifiers that denote environment values.
pub const ENV_NAMES: &[&str] = &["this", "now"];
/// Roots whose members are library functions (`abi.encodePacked`).
pub const LIBRARY_ROOTS: &[&str] = &["abi", "string", "bytes"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IrValue {
    Var(String),
    Temp(u32),
    Int(U256),
    Str(String),
    Bool(bool),
    /// Environment value such as `msg.sender`.
    Env(String),
}

impl IrValue {
    /// Name under which the value participates in data flow, if it is a variable.
    pub fn var_key(&self) -> Option<String> {
        match self {
            IrValue::Var(v) => Some(v.clone()),
            IrValue::Temp(t) => Some(format!("t{t}")),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, IrValue::Int(_) | IrValue::Str(_) | IrValue::Bool(_))
    }
}

impl fmt::Display for IrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IrValue::Var(v) | IrValue::Env(v) => f.write_str(v),
            IrValue::Temp(t) => write!(f, "t{t}"),
            IrValue::Int(v) => write!(f, "{v}"),
            IrValue::Str(s) => write!(f, "{s:?}"),
            IrValue::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IrOp {
    Copy(IrValue),
    Unop(UnOp, IrValue),
    Binop(BinOp, IrValue, IrValue),
    /// `callee` is a function name, builtin, conversion type, `lib.fn`, or
    /// `.method` (receiver passed as the first argument).
    Call { callee: String, args: Vec<IrValue> },
    LoadStorage { slot: String, keys: Vec<IrValue> },
    StoreStorage { slot: String, keys: Vec<IrValue>, value: IrValue },
    Index(IrValue, IrValue),
    /// Element write into a local aggregate; defines the aggregate.
    StoreIndex { base: IrValue, index: IrValue, value: IrValue },
    Slice(IrValue, Option<IrValue>, Option<IrValue>),
    Member(IrValue, String),
    Tuple(Vec<IrValue>),
    ArrayLit(Vec<IrValue>),
    /// Component `n` of a tuple value.
    Extract(IrValue, usize),
    Require(IrValue),
    Ret(Vec<IrValue>),
    Branch { cond: IrValue, then_label: String, else_label: String },
    Jump(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IrInstr {
    pub dest: Option<IrValue>,
    pub op: IrOp,
    pub pos: Pos,
    /// Id of the source statement the instruction came from.
    pub stmt: u32,
}

impl IrInstr {
    pub fn is_terminator(&self) -> bool {
        matches!(self.op, IrOp::Ret(_) | IrOp::Branch { .. } | IrOp::Jump(_))
    }

    /// Operands read by the instruction.
    pub fn operands(&self) -> Vec<&IrValue> {
        match &self.op {
            IrOp::Copy(v) | IrOp::Unop(_, v) | IrOp::Member(v, _) | IrOp::Extract(v, _) | IrOp::Require(v) => vec![v],
            IrOp::Binop(_, a, b) | IrOp::Index(a, b) => vec![a, b],
            IrOp::Call { args, .. } | IrOp::Tuple(args) | IrOp::ArrayLit(args) | IrOp::Ret(args) => args.iter().collect(),
            IrOp::LoadStorage { keys, .. } => keys.iter().collect(),
            IrOp::StoreStorage { keys, value, .. } => keys.iter().chain(std::iter::once(value)).collect(),
            IrOp::StoreIndex { base, index, value } => vec![base, index, value],
            IrOp::Slice(base, lo, hi) => std::iter::once(base).chain(lo.iter()).chain(hi.iter()).collect(),
            IrOp::Branch { cond, .. } => vec![cond],
            IrOp::Jump(_) => vec![],
        }
    }

    /// Variable keys read (constants and environment values excluded).
    pub fn uses(&self) -> Vec<String> {
        let mut out = Vec::new();
        for v in self.operands() {
            if let Some(k) = v.var_key() {
                if !out.contains(&k) {
                    out.push(k);
                }
            }
        }
        out
    }

    pub fn def(&self) -> Option<String> {
        self.dest.as_ref().and_then(IrValue::var_key)
    }

    pub fn opcode(&self) -> &'static str {
        match self.op {
            IrOp::Copy(_) => "copy",
            IrOp::Unop(..) => "unop",
            IrOp::Binop(..) => "binop",
            IrOp::Call { .. } => "call",
            IrOp::LoadStorage { .. } => "load_storage",
            IrOp::StoreStorage { .. } => "store_storage",
            IrOp::Index(..) => "index",
            IrOp::StoreIndex { .. } => "store_index",
            IrOp::Slice(..) => "slice",
            IrOp::Member(..) => "member",
            IrOp::Tuple(_) => "tuple",
            IrOp::ArrayLit(_) => "array",
            IrOp::Extract(..) => "extract",
            IrOp::Require(_) => "require",
            IrOp::Ret(_) => "ret",
            IrOp::Branch { .. } => "branch",
            IrOp::Jump(_) => "jump",
        }
    }
}

fn join(vals: &[IrValue]) -> String {
    vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for IrInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(d) = &self.dest {
            write!(f, "{d} = ")?;
        }
        match &self.op {
            IrOp::Copy(v) => write!(f, "{v}"),
            IrOp::Unop(op, v) => write!(f, "{}{v}", op.symbol()),
            IrOp::Binop(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
            IrOp::Call { callee, args } => write!(f, "call {callee}({})", join(args)),
            IrOp::LoadStorage { slot, keys } if keys.is_empty() => write!(f, "load_storage({slot})"),
            IrOp::LoadStorage { slot, keys } => write!(f, "load_storage({slot}; {})", join(keys)),
            IrOp::StoreStorage { slot, keys, value } if keys.is_empty() => write!(f, "store_storage({slot}, {value})"),
            IrOp::StoreStorage { slot, keys, value } => write!(f, "store_storage({slot}; {}, {value})", join(keys)),
            IrOp::Index(a, b) => write!(f, "{a}[{b}]"),
            IrOp::StoreIndex { base, index, value } => write!(f, "store_index({base}[{index}], {value})"),
            IrOp::Slice(a, lo, hi) => write!(
                f,
                "{a}[{}:{}]",
                lo.as_ref().map(|v| v.to_string()).unwrap_or_default(),
                hi.as_ref().map(|v| v.to_string()).unwrap_or_default()
            ),
            IrOp::Member(a, m) => write!(f, "{a}.{m}"),
            IrOp::Tuple(items) => write!(f, "({})", join(items)),
            IrOp::ArrayLit(items) => write!(f, "[{}]", join(items)),
            IrOp::Extract(v, i) => write!(f, "extract({v}, {i})"),
            IrOp::Require(v) => write!(f, "require {v}"),
            IrOp::Ret(vals) if vals.is_empty() => write!(f, "ret"),
            IrOp::Ret(vals) => write!(f, "ret {}", join(vals)),
            IrOp::Branch { cond, then_label, else_label } => write!(f, "branch {cond} {then_label} {else_label}"),
            IrOp::Jump(l) => write!(f, "jump {l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrBlock {
    pub label: String,
    pub instrs: Vec<IrInstr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrFunction {
    pub name: String,
    pub params: Vec<String>,
    /// Blocks in layout order; the first is the entry block.
    pub blocks: Vec<IrBlock>,
    pub temp_count: u32,
}

impl IrFunction {
    pub fn instrs(&self) -> impl Iterator<Item = &IrInstr> {
        self.blocks.iter().flat_map(|b| b.instrs.iter())
    }

    pub fn instr_count(&self) -> usize {
        self.blocks.iter().map(|b| b.instrs.len()).sum()
    }

    pub fn render(&self) -> String {
        let mut out = format!("function {}({}):\n", self.name, self.params.join(", "));
        for b in &self.blocks {
            out.push_str(&format!("{}:\n", b.label));
            for i in &b.instrs {
                out.push_str(&format!("    {i}\n"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrModule {
    pub functions: Vec<IrFunction>,
    /// Every storage variable of the unit, declared or referenced.
    pub storage: Vec<String>,
}

impl IrModule {
    pub fn function(&self, name: &str) -> Option<&IrFunction> {
        self.functions.iter().find(|f| f.name == name)
    }
}

pub fn parse_int_literal(raw: &str) -> Option<U256> {
    let clean: String = raw.chars().filter(|c| *c != '_').collect();
    if let Some(hex) = clean.strip_prefix("0x").or_else(|| clean.strip_prefix("0X")) {
        if hex.is_empty() {
            return None;
        }
        U256::from_str_radix(hex, 16).ok()
    } else {
        U256::from_str_radix(&clean, 10).ok()
    }
}

/// Lowers every function of the unit.
pub fn lower_ir(unit: &SourceUnit) -> Result<IrModule, FrontendError> {
    let storage = unit.storage_vars();
    let functions = unit
        .functions
        .iter()
        .map(|f| lower_function(unit, f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IrModule { functions, storage })
}

pub fn lower_function(unit: &SourceUnit, f: &FunctionDecl) -> Result<IrFunction, FrontendError> {
    let mut locals: HashSet<String> = f.params.iter().map(|p| p.name.clone()).collect();
    for s in &f.body {
        s.walk(&mut |st| {
            if let StmtKind::VarDecl { name, .. } = &st.kind {
                locals.insert(name.clone());
            }
        });
    }
    let storage: HashSet<String> = unit.storage_vars().into_iter().filter(|s| !locals.contains(s)).collect();
    let mut lw = Lowerer {
        fname: &f.name,
        storage,
        blocks: vec![IrBlock { label: "entry".into(), instrs: Vec::new() }],
        temps: 0,
        labels: 0,
        pos: f.pos,
        stmt: 0,
    };
    lw.body(&f.body)?;
    Ok(IrFunction {
        name: f.name.clone(),
        params: f.params.iter().map(|p| p.name.clone()).collect(),
        blocks: lw.blocks,
        temp_count: lw.temps,
    })
}

struct Lowerer<'a> {
    fname: &'a str,
    storage: HashSet<String>,
    blocks: Vec<IrBlock>,
    temps: u32,
    labels: u32,
    pos: Pos,
    stmt: u32,
}

impl Lowerer<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FrontendError> {
        Err(FrontendError::Lowering { function: self.fname.to_string(), pos: self.pos, message: msg.into() })
    }

    fn fresh_temp(&mut self) -> IrValue {
        let t = IrValue::Temp(self.temps);
        self.temps += 1;
        t
    }

    fn fresh_label(&mut self) -> String {
        let l = format!("L{}", self.labels);
        self.labels += 1;
        l
    }

    fn emit(&mut self, dest: Option<IrValue>, op: IrOp) {
        let instr = IrInstr { dest, op, pos: self.pos, stmt: self.stmt };
        let terminated = self.blocks.last().and_then(|b| b.instrs.last()).is_some_and(IrInstr::is_terminator);
        if terminated {
            let label = self.fresh_label();
            self.blocks.push(IrBlock { label, instrs: Vec::new() });
        }
        self.blocks.last_mut().expect("entry block").instrs.push(instr);
    }

    fn start_block(&mut self, label: String) {
        self.blocks.push(IrBlock { label, instrs: Vec::new() });
    }

    fn current_terminated(&self) -> bool {
        self.blocks.last().and_then(|b| b.instrs.last()).is_some_and(IrInstr::is_terminator)
    }

    fn body(&mut self, stmts: &[Stmt]) -> Result<(), FrontendError> {
        for s in stmts {
            self.stmt(s)?;
        }
        Ok(())
    }

    fn is_storage(&self, name: &str) -> bool {
        self.storage.contains(name)
    }

    /// `(slot, keys)` when `e` is an access path rooted at a storage variable.
    fn storage_path<'e>(&self, e: &'e Expr) -> Option<(String, Vec<PathKey<'e>>)> {
        match &e.kind {
            ExprKind::Var(v) if self.is_storage(v) => Some((v.clone(), Vec::new())),
            ExprKind::Index(base, idx) => {
                let (slot, mut keys) = self.storage_path(base)?;
                keys.push(PathKey::Expr(idx));
                Some((slot, keys))
            }
            ExprKind::Member(base, name) => {
                let (slot, mut keys) = self.storage_path(base)?;
                keys.push(PathKey::Field(name));
                Some((slot, keys))
            }
            _ => None,
        }
    }

    fn lower_keys(&mut self, keys: &[PathKey<'_>]) -> Result<Vec<IrValue>, FrontendError> {
        keys.iter()
            .map(|k| match k {
                PathKey::Expr(e) => self.value(e),
                PathKey::Field(name) => Ok(IrValue::Str((*name).to_string())),
            })
            .collect()
    }

    fn value(&mut self, e: &Expr) -> Result<IrValue, FrontendError> {
        self.expr(e, None)
    }

    /// Lowers `e`; when `dest` is given the root result is written there.
    fn expr(&mut self, e: &Expr, dest: Option<IrValue>) -> Result<IrValue, FrontendError> {
        let leaf = match &e.kind {
            ExprKind::Var(v) if ENV_NAMES.contains(&v.as_str()) => Some(IrValue::Env(v.clone())),
            ExprKind::Var(v) if !self.is_storage(v) => Some(IrValue::Var(v.clone())),
            ExprKind::Const(Literal::Number(raw)) => match parse_int_literal(raw) {
                Some(v) => Some(IrValue::Int(v)),
                None => return self.err(format!("integer literal `{raw}` out of range")),
            },
            ExprKind::Const(Literal::Str(s)) => Some(IrValue::Str(s.clone())),
            ExprKind::Const(Literal::Bool(b)) => Some(IrValue::Bool(*b)),
            ExprKind::Member(base, field) => match &base.kind {
                ExprKind::Var(root) if ENV_ROOTS.contains(&root.as_str()) => Some(IrValue::Env(format!("{root}.{field}"))),
                _ => None,
            },
            _ => None,
        };
        if let Some(v) = leaf {
            return Ok(match dest {
                Some(d) => {
                    self.emit(Some(d.clone()), IrOp::Copy(v));
                    d
                }
                None => v,
            });
        }

        if let Some((slot, keys)) = self.storage_path(e) {
            let keys = self.lower_keys(&keys)?;
            let d = dest.unwrap_or_else(|| self.fresh_temp());
            self.emit(Some(d.clone()), IrOp::LoadStorage { slot, keys });
            return Ok(d);
        }

        let op = match &e.kind {
            ExprKind::Binary(op, a, b) => {
                let a = self.value(a)?;
                let b = self.value(b)?;
                IrOp::Binop(*op, a, b)
            }
            ExprKind::Unary(op, a) => IrOp::Unop(*op, self.value(a)?),
            ExprKind::Tuple(items) => IrOp::Tuple(items.iter().map(|i| self.value(i)).collect::<Result<_, _>>()?),
            ExprKind::ArrayLit(items) => IrOp::ArrayLit(items.iter().map(|i| self.value(i)).collect::<Result<_, _>>()?),
            ExprKind::Call(callee, args) => self.call_op(callee, args)?,
            ExprKind::Index(base, idx) => {
                let b = self.value(base)?;
                let i = self.value(idx)?;
                IrOp::Index(b, i)
            }
            ExprKind::SliceRange(base, lo, hi) => {
                let b = self.value(base)?;
                let lo = lo.as_deref().map(|x| self.value(x)).transpose()?;
                let hi = hi.as_deref().map(|x| self.value(x)).transpose()?;
                IrOp::Slice(b, lo, hi)
            }
            ExprKind::Member(base, field) => IrOp::Member(self.value(base)?, field.clone()),
            ExprKind::TypeName(ty) => return self.err(format!("type `{}` used as a value", render_type(ty))),
            ExprKind::Var(_) | ExprKind::Const(_) => unreachable!("leaves handled above"),
        };
        let d = dest.unwrap_or_else(|| self.fresh_temp());
        self.emit(Some(d.clone()), op);
        Ok(d)
    }

    fn call_op(&mut self, callee: &Expr, args: &[Expr]) -> Result<IrOp, FrontendError> {
        let (name, mut lowered) = match &callee.kind {
            ExprKind::Var(n) => (n.clone(), Vec::new()),
            ExprKind::TypeName(ty) => (render_type(ty), Vec::new()),
            ExprKind::Member(recv, m) => match &recv.kind {
                ExprKind::Var(root) if LIBRARY_ROOTS.contains(&root.as_str()) && !self.is_storage(root) => {
                    (format!("{root}.{m}"), Vec::new())
                }
                _ => {
                    let r = self.value(recv)?;
                    (format!(".{m}"), vec![r])
                }
            },
            _ => return self.err("unsupported callee expression"),
        };
        for a in args {
            lowered.push(self.value(a)?);
        }
        Ok(IrOp::Call { callee: name, args: lowered })
    }

    fn assign(&mut self, target: &Expr, op: AssignOp, value: &Expr) -> Result<(), FrontendError> {
        if let Some((slot, keys)) = self.storage_path(target) {
            let keys = self.lower_keys(&keys)?;
            let v = match op.binop() {
                None => self.value(value)?,
                Some(bop) => {
                    let cur = self.fresh_temp();
                    self.emit(Some(cur.clone()), IrOp::LoadStorage { slot: slot.clone(), keys: keys.clone() });
                    let rhs = self.value(value)?;
                    let t = self.fresh_temp();
                    self.emit(Some(t.clone()), IrOp::Binop(bop, cur, rhs));
                    t
                }
            };
            self.emit(None, IrOp::StoreStorage { slot, keys, value: v });
            return Ok(());
        }
        match &target.kind {
            ExprKind::Var(name) => {
                let dest = IrValue::Var(name.clone());
                match op.binop() {
                    None => {
                        self.expr(value, Some(dest))?;
                    }
                    Some(bop) => {
                        let rhs = self.value(value)?;
                        self.emit(Some(dest.clone()), IrOp::Binop(bop, dest, rhs));
                    }
                }
                Ok(())
            }
            ExprKind::Index(base, idx) => {
                let Some(name) = base.base_var() else {
                    return self.err("indexed assignment to a non-variable");
                };
                if !matches!(base.kind, ExprKind::Var(_)) {
                    return self.err("nested indexed assignment to a local aggregate");
                }
                let base = IrValue::Var(name.to_string());
                let index = self.value(idx)?;
                let v = match op.binop() {
                    None => self.value(value)?,
                    Some(bop) => {
                        let cur = self.fresh_temp();
                        self.emit(Some(cur.clone()), IrOp::Index(base.clone(), index.clone()));
                        let rhs = self.value(value)?;
                        let t = self.fresh_temp();
                        self.emit(Some(t.clone()), IrOp::Binop(bop, cur, rhs));
                        t
                    }
                };
                self.emit(Some(base.clone()), IrOp::StoreIndex { base, index, value: v });
                Ok(())
            }
            ExprKind::Tuple(items) if op == AssignOp::Set => {
                let whole = self.value(value)?;
                for (i, item) in items.iter().enumerate() {
                    let part = self.fresh_temp();
                    self.emit(Some(part.clone()), IrOp::Extract(whole.clone(), i));
                    self.assign_value(item, part)?;
                }
                Ok(())
            }
            _ => self.err("unsupported assignment target"),
        }
    }

    /// Assigns an already-lowered value to a simple target.
    fn assign_value(&mut self, target: &Expr, v: IrValue) -> Result<(), FrontendError> {
        if let Some((slot, keys)) = self.storage_path(target) {
            let keys = self.lower_keys(&keys)?;
            self.emit(None, IrOp::StoreStorage { slot, keys, value: v });
            return Ok(());
        }
        match &target.kind {
            ExprKind::Var(name) => {
                self.emit(Some(IrValue::Var(name.clone())), IrOp::Copy(v));
                Ok(())
            }
            _ => self.err("unsupported tuple assignment component"),
        }
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), FrontendError> {
        self.pos = s.pos;
        self.stmt = s.id;
        match &s.kind {
            StmtKind::VarDecl { name, init, .. } => {
                let dest = IrValue::Var(name.clone());
                match init {
                    Some(e) => {
                        self.expr(e, Some(dest))?;
                    }
                    None => self.emit(Some(dest), IrOp::Copy(IrValue::Int(U256::ZERO))),
                }
            }
            StmtKind::Assign { target, op, value } | StmtKind::StorageWrite { target, op, value } => {
                self.assign(target, *op, value)?;
            }
            StmtKind::ExprStmt(e) => match &e.kind {
                ExprKind::Call(callee, args) => {
                    let op = self.call_op(callee, args)?;
                    self.emit(None, op);
                }
                _ => {
                    let t = self.fresh_temp();
                    self.expr(e, Some(t))?;
                }
            },
            StmtKind::Require(cond, _) => {
                let v = self.value(cond)?;
                self.emit(None, IrOp::Require(v));
            }
            StmtKind::Return(value) => {
                let vals = match value {
                    None => Vec::new(),
                    Some(Expr { kind: ExprKind::Tuple(items), .. }) => {
                        items.iter().map(|i| self.value(i)).collect::<Result<_, _>>()?
                    }
                    Some(e) => vec![self.value(e)?],
                };
                self.emit(None, IrOp::Ret(vals));
            }
            StmtKind::If { cond, then_body, else_body } => {
                let c = self.value(cond)?;
                let then_label = self.fresh_label();
                let else_label = else_body.as_ref().map(|_| self.fresh_label());
                let join_label = self.fresh_label();
                self.emit(
                    None,
                    IrOp::Branch {
                        cond: c,
                        then_label: then_label.clone(),
                        else_label: else_label.clone().unwrap_or_else(|| join_label.clone()),
                    },
                );
                self.start_block(then_label);
                self.body(then_body)?;
                if let (Some(else_body), Some(else_label)) = (else_body, else_label) {
                    if !self.current_terminated() {
                        self.pos = s.pos;
                        self.stmt = s.id;
                        self.emit(None, IrOp::Jump(join_label.clone()));
                    }
                    self.start_block(else_label);
                    self.body(else_body)?;
                }
                self.start_block(join_label);
            }
            StmtKind::While { cond, body } => {
                let cond_label = self.fresh_label();
                let body_label = self.fresh_label();
                let after_label = self.fresh_label();
                self.start_block(cond_label.clone());
                self.pos = s.pos;
                self.stmt = s.id;
                let c = self.value(cond)?;
                self.emit(None, IrOp::Branch { cond: c, then_label: body_label.clone(), else_label: after_label.clone() });
                self.start_block(body_label);
                self.body(body)?;
                if !self.current_terminated() {
                    self.pos = s.pos;
                    self.stmt = s.id;
                    self.emit(None, IrOp::Jump(cond_label));
                }
                self.start_block(after_label);
            }
        }
        Ok(())
    }
}

enum PathKey<'e> {
    Expr(&'e Expr),
    Field(&'e str),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_unit;

    fn lower_one(src: &str) -> IrFunction {
        let unit = parse_unit("t", src);
        assert!(unit.skipped.is_empty(), "{:?}", unit.skipped);
        lower_ir(&unit).unwrap().functions.remove(0)
    }

    fn lines(f: &IrFunction) -> Vec<String> {
        f.instrs().map(|i| i.to_string()).collect()
    }

    #[test]
    fn three_address_split() {
        let f = lower_one("function f() { x = a + b * c; }");
        assert_eq!(lines(&f), ["t0 = b * c", "x = a + t0"]);
    }

    #[test]
    fn require_with_storage_owner() {
        // Hand-lowered: load the slot, compare, then require.
        let f = lower_one("function f() { require(msg.sender == stor_owner); }");
        assert_eq!(lines(&f), ["t0 = load_storage(stor_owner)", "t1 = msg.sender == t0", "require t1"]);
    }

    #[test]
    fn return_terminates_block() {
        let f = lower_one("function f() { return v9; }");
        assert_eq!(lines(&f), ["ret v9"]);
        assert!(f.blocks[0].instrs.last().unwrap().is_terminator());
    }

    #[test]
    fn compound_storage_assignment() {
        let f = lower_one("function f(varg1) { stor_0 -= varg1; }");
        assert_eq!(lines(&f), ["t0 = load_storage(stor_0)", "t1 = t0 - varg1", "store_storage(stor_0, t1)"]);
    }

    #[test]
    fn mapping_write_and_read() {
        let f = lower_one("mapping(bytes32=>uint256) m;\nfunction f(k, v) { m[k] = v; x = m[k] + 1; }");
        assert_eq!(lines(&f), ["store_storage(m; k, v)", "t0 = load_storage(m; k)", "x = t0 + 1"]);
    }

    #[test]
    fn if_else_blocks() {
        let f = lower_one("function f(c) { if (c) { x = 1; } else { x = 2; } return x; }");
        let labels: Vec<_> = f.blocks.iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, ["entry", "L0", "L1", "L2"]);
        assert_eq!(lines(&f), ["branch c L0 L1", "x = 1", "jump L2", "x = 2", "ret x"]);
    }

    #[test]
    fn temps_have_single_definition() {
        let f = lower_one("function f(a, b) { x = (a + b) * (a - b) / 2; require(x > a && b < 3); stor_1 += x; }");
        let mut seen = HashSet::new();
        for i in f.instrs() {
            if let Some(IrValue::Temp(t)) = &i.dest {
                assert!(seen.insert(*t), "t{t} defined twice");
            }
        }
        assert_eq!(seen.len() as u32, f.temp_count);
    }

    #[test]
    fn member_call_and_library_call() {
        let f = lower_one("function f(a) { a.transfer(1); h = keccak256(abi.encodePacked(a)); }");
        assert_eq!(lines(&f), ["call .transfer(a, 1)", "t0 = call abi.encodePacked(a)", "h = call keccak256(t0)"]);
    }
}
