//! Syntax tree for decompiled pseudocode.

use serde::{Deserialize, Serialize};

use super::lexer::Pos;

/// Type as written in the source. Names that are not elementary types are
/// kept verbatim and later resolve to an unknown type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TypeExpr {
    Named(String),
    AddressPayable,
    Mapping(Box<TypeExpr>, Box<TypeExpr>),
    Array(Box<TypeExpr>, Option<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    And,
    Or,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Exp,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    BitAnd,
    BitOr,
    BitXor,
    Shl,
    Shr,
}

/// The four operator classes of the typing syntax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpClass {
    Blop,
    Numop,
    Cmpop,
    Bitop,
}

impl BinOp {
    pub fn class(self) -> OpClass {
        use BinOp::*;
        match self {
            And | Or => OpClass::Blop,
            Add | Sub | Mul | Div | Mod | Exp => OpClass::Numop,
            Eq | Ne | Lt | Le | Gt | Ge => OpClass::Cmpop,
            BitAnd | BitOr | BitXor | Shl | Shr => OpClass::Bitop,
        }
    }

    pub fn symbol(self) -> &'static str {
        use BinOp::*;
        match self {
            And => "&&",
            Or => "||",
            Add => "+",
            Sub => "-",
            Mul => "*",
            Div => "/",
            Mod => "%",
            Exp => "**",
            Eq => "==",
            Ne => "!=",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            BitAnd => "&",
            BitOr => "|",
            BitXor => "^",
            Shl => "<<",
            Shr => ">>",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        use BinOp::*;
        match self {
            Or => 1,
            And => 2,
            Eq | Ne => 3,
            Lt | Le | Gt | Ge => 4,
            BitOr => 5,
            BitXor => 6,
            BitAnd => 7,
            Shl | Shr => 8,
            Add | Sub => 9,
            Mul | Div | Mod => 10,
            Exp => 11,
        }
    }

    pub fn right_assoc(self) -> bool {
        matches!(self, BinOp::Exp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnOp {
    Not,
    Neg,
    BitNot,
}

impl UnOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Not => "!",
            UnOp::Neg => "-",
            UnOp::BitNot => "~",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Literal {
    /// Decimal or hex digits exactly as written.
    Number(String),
    Str(String),
    Bool(bool),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExprKind {
    Var(String),
    Const(Literal),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Tuple(Vec<Expr>),
    ArrayLit(Vec<Expr>),
    Call(Box<Expr>, Vec<Expr>),
    Index(Box<Expr>, Box<Expr>),
    SliceRange(Box<Expr>, Option<Box<Expr>>, Option<Box<Expr>>),
    Member(Box<Expr>, String),
    /// A type used in callee position, i.e. a conversion such as `uint256(x)`.
    TypeName(TypeExpr),
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Expr { kind, pos }
    }

    pub fn var(name: &str, pos: Pos) -> Self {
        Expr::new(ExprKind::Var(name.to_string()), pos)
    }

    /// Root variable of an lvalue / access path (`m` in `m[k].f`).
    pub fn base_var(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Var(name) => Some(name),
            ExprKind::Index(base, _) | ExprKind::Member(base, _) | ExprKind::SliceRange(base, _, _) => base.base_var(),
            _ => None,
        }
    }

    /// Pre-order visit of this expression and all sub-expressions.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Var(_) | ExprKind::Const(_) | ExprKind::TypeName(_) => {}
            ExprKind::Binary(_, a, b) | ExprKind::Index(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::Unary(_, a) | ExprKind::Member(a, _) => a.walk(f),
            ExprKind::Tuple(items) | ExprKind::ArrayLit(items) => items.iter().for_each(|e| e.walk(f)),
            ExprKind::Call(callee, args) => {
                callee.walk(f);
                args.iter().for_each(|e| e.walk(f));
            }
            ExprKind::SliceRange(base, lo, hi) => {
                base.walk(f);
                if let Some(lo) = lo {
                    lo.walk(f);
                }
                if let Some(hi) = hi {
                    hi.walk(f);
                }
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        f(self);
        match &mut self.kind {
            ExprKind::Var(_) | ExprKind::Const(_) | ExprKind::TypeName(_) => {}
            ExprKind::Binary(_, a, b) | ExprKind::Index(a, b) => {
                a.walk_mut(f);
                b.walk_mut(f);
            }
            ExprKind::Unary(_, a) | ExprKind::Member(a, _) => a.walk_mut(f),
            ExprKind::Tuple(items) | ExprKind::ArrayLit(items) => items.iter_mut().for_each(|e| e.walk_mut(f)),
            ExprKind::Call(callee, args) => {
                callee.walk_mut(f);
                args.iter_mut().for_each(|e| e.walk_mut(f));
            }
            ExprKind::SliceRange(base, lo, hi) => {
                base.walk_mut(f);
                if let Some(lo) = lo {
                    lo.walk_mut(f);
                }
                if let Some(hi) = hi {
                    hi.walk_mut(f);
                }
            }
        }
    }

    /// Names of all variables read by the expression (including lvalue bases).
    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let ExprKind::Var(v) = &e.kind {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        });
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    BitAnd,
    BitOr,
    BitXor,
    Shl,
    Shr,
}

impl AssignOp {
    pub fn symbol(self) -> &'static str {
        match self {
            AssignOp::Set => "=",
            AssignOp::Add => "+=",
            AssignOp::Sub => "-=",
            AssignOp::Mul => "*=",
            AssignOp::Div => "/=",
            AssignOp::Mod => "%=",
            AssignOp::BitAnd => "&=",
            AssignOp::BitOr => "|=",
            AssignOp::BitXor => "^=",
            AssignOp::Shl => "<<=",
            AssignOp::Shr => ">>=",
        }
    }

    /// Binary operator implied by a compound assignment.
    pub fn binop(self) -> Option<BinOp> {
        Some(match self {
            AssignOp::Set => return None,
            AssignOp::Add => BinOp::Add,
            AssignOp::Sub => BinOp::Sub,
            AssignOp::Mul => BinOp::Mul,
            AssignOp::Div => BinOp::Div,
            AssignOp::Mod => BinOp::Mod,
            AssignOp::BitAnd => BinOp::BitAnd,
            AssignOp::BitOr => BinOp::BitOr,
            AssignOp::BitXor => BinOp::BitXor,
            AssignOp::Shl => BinOp::Shl,
            AssignOp::Shr => BinOp::Shr,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
    /// Preorder index of the statement within its function.
    pub id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StmtKind {
    VarDecl { ty: TypeExpr, location: Option<String>, name: String, init: Option<Expr> },
    Assign { target: Expr, op: AssignOp, value: Expr },
    /// Assignment whose target is rooted at a storage variable.
    StorageWrite { target: Expr, op: AssignOp, value: Expr },
    ExprStmt(Expr),
    Require(Expr, Option<Expr>),
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Option<Vec<Stmt>> },
    While { cond: Expr, body: Vec<Stmt> },
    Return(Option<Expr>),
}

impl Stmt {
    /// Pre-order visit of this statement and nested statements.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        match &self.kind {
            StmtKind::If { then_body, else_body, .. } => {
                then_body.iter().for_each(|s| s.walk(f));
                if let Some(else_body) = else_body {
                    else_body.iter().for_each(|s| s.walk(f));
                }
            }
            StmtKind::While { body, .. } => body.iter().for_each(|s| s.walk(f)),
            _ => {}
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Stmt)) {
        f(self);
        match &mut self.kind {
            StmtKind::If { then_body, else_body, .. } => {
                then_body.iter_mut().for_each(|s| s.walk_mut(f));
                if let Some(else_body) = else_body {
                    else_body.iter_mut().for_each(|s| s.walk_mut(f));
                }
            }
            StmtKind::While { body, .. } => body.iter_mut().for_each(|s| s.walk_mut(f)),
            _ => {}
        }
    }

    /// Expressions owned directly by this statement (not by nested statements).
    pub fn exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::VarDecl { init, .. } => init.iter().collect(),
            StmtKind::Assign { target, value, .. } | StmtKind::StorageWrite { target, value, .. } => vec![target, value],
            StmtKind::ExprStmt(e) => vec![e],
            StmtKind::Require(c, msg) => std::iter::once(c).chain(msg.iter()).collect(),
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => vec![cond],
            StmtKind::Return(e) => e.iter().collect(),
        }
    }

    pub fn exprs_mut(&mut self) -> Vec<&mut Expr> {
        match &mut self.kind {
            StmtKind::VarDecl { init, .. } => init.iter_mut().collect(),
            StmtKind::Assign { target, value, .. } | StmtKind::StorageWrite { target, value, .. } => vec![target, value],
            StmtKind::ExprStmt(e) => vec![e],
            StmtKind::Require(c, msg) => std::iter::once(c).chain(msg.iter_mut()).collect(),
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => vec![cond],
            StmtKind::Return(e) => e.iter_mut().collect(),
        }
    }

    pub fn is_compound(&self) -> bool {
        matches!(self.kind, StmtKind::If { .. } | StmtKind::While { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Param {
    pub ty: Option<TypeExpr>,
    pub location: Option<String>,
    pub name: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<Param>,
    /// Visibility / mutability words between the parameter list and body.
    pub modifiers: Vec<String>,
    pub returns: Vec<TypeExpr>,
    pub body: Vec<Stmt>,
    pub span: Span,
    pub pos: Pos,
}

impl FunctionDecl {
    pub fn stmt_count(&self) -> usize {
        let mut n = 0;
        for s in &self.body {
            s.walk(&mut |_| n += 1);
        }
        n
    }

    pub fn find_stmt(&self, id: u32) -> Option<&Stmt> {
        let mut found = None;
        for s in &self.body {
            s.walk(&mut |st| {
                if st.id == id {
                    found = Some(st);
                }
            });
        }
        found
    }

    /// Reassigns statement ids in preorder.
    pub fn renumber(&mut self) {
        let mut next = 0;
        for s in &mut self.body {
            s.walk_mut(&mut |st| {
                st.id = next;
                next += 1;
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StorageDecl {
    pub ty: TypeExpr,
    pub name: String,
    /// Contract attribute label attached by an accepted edit.
    pub attribute: Option<String>,
    pub pos: Pos,
}

/// A function that could not be parsed and was dropped from the unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub function: Option<String>,
    pub pos: Pos,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceUnit {
    pub file_id: String,
    pub text: String,
    pub storage: Vec<StorageDecl>,
    pub functions: Vec<FunctionDecl>,
    pub skipped: Vec<SkipReport>,
}

impl SourceUnit {
    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut FunctionDecl> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    pub fn storage_decl(&self, name: &str) -> Option<&StorageDecl> {
        self.storage.iter().find(|s| s.name == name)
    }

    /// Whether `name` denotes a storage variable: declared at top level or
    /// following the decompiler's `stor_N` / `store_N` naming.
    pub fn is_storage(&self, name: &str) -> bool {
        self.storage_decl(name).is_some() || is_storage_name(name)
    }

    /// Every storage variable, declared or referenced, in first-seen order.
    pub fn storage_vars(&self) -> Vec<String> {
        let mut out: Vec<String> = self.storage.iter().map(|s| s.name.clone()).collect();
        for f in &self.functions {
            for s in &f.body {
                s.walk(&mut |st| {
                    for e in st.exprs() {
                        for v in e.vars() {
                            if is_storage_name(&v) && !out.contains(&v) && !f.declares_local(&v) {
                                out.push(v);
                            }
                        }
                    }
                });
            }
        }
        out
    }
}

impl FunctionDecl {
    /// Whether the function introduces `name` as a parameter or declared local.
    pub fn declares_local(&self, name: &str) -> bool {
        if self.params.iter().any(|p| p.name == name) {
            return true;
        }
        let mut found = false;
        for s in &self.body {
            s.walk(&mut |st| {
                if let StmtKind::VarDecl { name: n, .. } = &st.kind {
                    found |= n == name;
                }
            });
        }
        found
    }
}

pub fn is_storage_name(name: &str) -> bool {
    ["stor_", "store_"].iter().any(|p| name.strip_prefix(p).is_some_and(|rest| !rest.is_empty()))
}
