//! Type, state and def-use dependency extraction.

use std::collections::BTreeSet;

use super::builtins::{callee_name, env_name, BuiltinTable};
use super::graph::*;
use crate::flowgraphs::{ControlFlowGraph, DataFlowGraph};
use crate::frontend::ir::{ENV_NAMES, ENV_ROOTS, LIBRARY_ROOTS};
use crate::frontend::{render_expr, render_stmt_brief, render_type, Expr, ExprKind, FunctionDecl, SourceUnit, Stmt, StmtKind};
use crate::frontend::lexer::is_elementary_type;

pub(crate) fn var_spec(unit: &SourceUnit, f: &FunctionDecl, name: &str, pos: crate::frontend::Pos) -> NodeSpec {
    let key = if unit.is_storage(name) && !f.declares_local(name) {
        NodeKey::global(name)
    } else {
        NodeKey::local(&f.name, name)
    };
    NodeSpec { key, label: name.to_string(), pos }
}

pub(crate) fn ret_spec(unit: &SourceUnit, function: &str) -> NodeSpec {
    let pos = unit.function(function).map(|f| f.pos).unwrap_or_default();
    NodeSpec { key: NodeKey::ret(function), label: format!("{function}::{RET}"), pos }
}

pub(crate) fn stmt_spec(function: &str, s: &Stmt) -> NodeSpec {
    NodeSpec { key: NodeKey::stmt(function, s.id), label: render_stmt_brief(s), pos: s.pos }
}

struct TypeExtractor<'a> {
    unit: &'a SourceUnit,
    f: &'a FunctionDecl,
    builtins: &'a BuiltinTable,
    edges: Vec<RawEdge>,
}

impl<'a> TypeExtractor<'a> {
    fn push(&mut self, s: &Stmt, src: NodeSpec, dst: NodeSpec, shape: EdgeShape, role: Option<Role>, annotation: Option<String>) {
        self.edges.push(RawEdge { src, dst, shape, role, annotation, site: Some((self.f.name.clone(), s.id)) });
    }

    fn is_variable(&self, name: &str) -> bool {
        !ENV_NAMES.contains(&name)
            && !ENV_ROOTS.contains(&name)
            && !(LIBRARY_ROOTS.contains(&name) && !self.unit.is_storage(name))
            && self.unit.function(name).is_none()
    }

    fn var(&self, name: &str, e: &Expr) -> NodeSpec {
        var_spec(self.unit, self.f, name, e.pos)
    }

    fn sub(&self, s: &Stmt, e: &Expr, label: String) -> NodeSpec {
        NodeSpec { key: NodeKey::SubExpr { function: self.f.name.clone(), stmt: s.id, pos: e.pos }, label, pos: e.pos }
    }

    /// Return type of a predefined call or conversion, with the name used in prompts.
    fn predefined_call(&self, callee: &Expr) -> Option<(String, String)> {
        let name = callee_name(callee)?;
        if let ExprKind::TypeName(ty) = &callee.kind {
            return Some((name, render_type(ty)));
        }
        if is_elementary_type(&name) {
            return Some((name.clone(), name));
        }
        if self.unit.function(&name).is_some() {
            return None;
        }
        let sig = self.builtins.call(&name)?;
        Some((name.trim_start_matches('.').to_string(), sig.returns.clone()))
    }

    fn internal_callee(&self, callee: &Expr) -> Option<&'a FunctionDecl> {
        match &callee.kind {
            ExprKind::Var(n) => self.unit.function(n),
            _ => None,
        }
    }

    /// Argument-to-parameter edges of an internal call.
    fn call_edges(&mut self, s: &Stmt, callee: &FunctionDecl, args: &[Expr]) {
        for (arg, param) in args.iter().zip(&callee.params) {
            if let ExprKind::Var(v) = &arg.kind {
                if self.is_variable(v) {
                    let src = self.var(v, arg);
                    let dst = var_spec(self.unit, callee, &param.name, callee.pos);
                    self.push(s, src, dst, EdgeShape::VarToVar, None, None);
                }
            }
        }
    }

    /// Edges for a value flowing into the variable `dst`.
    fn flow_into(&mut self, s: &Stmt, dst: NodeSpec, e: &Expr, role: Option<Role>) {
        match &e.kind {
            ExprKind::Var(v) if self.is_variable(v) => {
                let src = self.var(v, e);
                self.push(s, src, dst, EdgeShape::VarToVar, role, None);
                return;
            }
            ExprKind::Const(_) => return,
            ExprKind::Call(callee, args) => {
                if let Some(target) = self.internal_callee(callee) {
                    let src = ret_spec(self.unit, &target.name);
                    self.push(s, src, dst, EdgeShape::VarToVar, role, None);
                    self.call_edges(s, target, args);
                    for a in args {
                        self.visit(s, a, Role::Value);
                    }
                    return;
                }
                if let Some((name, ty)) = self.predefined_call(callee) {
                    let src = self.sub(s, e, name);
                    self.push(s, src, dst, EdgeShape::TypeToVar, role, Some(ty));
                    if let ExprKind::Member(recv, _) = &callee.kind {
                        self.visit(s, recv, Role::Target);
                    }
                    for a in args {
                        self.visit(s, a, Role::Value);
                    }
                    return;
                }
            }
            _ => {}
        }
        if let Some(ty) = self.builtins.value(e) {
            let src = self.sub(s, e, env_name(e).unwrap_or_default());
            self.push(s, src, dst, EdgeShape::TypeToVar, role, Some(ty.to_string()));
            return;
        }
        if let ExprKind::Member(base, m) = &e.kind {
            if let Some(ty) = self.builtins.member(m) {
                let src = self.sub(s, e, render_expr(e));
                self.push(s, src, dst, EdgeShape::TypeToVar, role, Some(ty.to_string()));
                self.visit(s, base, Role::Target);
                return;
            }
        }
        let src = stmt_spec(&self.f.name, s);
        self.push(s, src, dst, EdgeShape::ExprToVar, role, None);
        self.visit(s, e, Role::Operand);
    }

    /// Operand edges of an expression into its statement node.
    fn visit(&mut self, s: &Stmt, e: &Expr, role: Role) {
        let dst = stmt_spec(&self.f.name, s);
        if let Some(ty) = self.builtins.value(e) {
            let src = self.sub(s, e, env_name(e).unwrap_or_default());
            self.push(s, src, dst, EdgeShape::TypeToExpr, None, Some(ty.to_string()));
            return;
        }
        match &e.kind {
            ExprKind::Var(v) => {
                if self.is_variable(v) {
                    let src = self.var(v, e);
                    self.push(s, src, dst, EdgeShape::VarToExpr, Some(role), None);
                }
            }
            ExprKind::Const(_) | ExprKind::TypeName(_) => {}
            ExprKind::Binary(_, a, b) => {
                self.visit(s, a, Role::Operand);
                self.visit(s, b, Role::Operand);
            }
            ExprKind::Unary(_, a) => self.visit(s, a, Role::Operand),
            ExprKind::Tuple(items) | ExprKind::ArrayLit(items) => {
                for i in items {
                    self.visit(s, i, Role::Value);
                }
            }
            ExprKind::Call(callee, args) => {
                if let Some(target) = self.internal_callee(callee) {
                    let src = ret_spec(self.unit, &target.name);
                    self.push(s, src, dst, EdgeShape::VarToExpr, Some(Role::Operand), None);
                    self.call_edges(s, target, args);
                } else if let Some((name, ty)) = self.predefined_call(callee) {
                    let src = self.sub(s, e, name);
                    self.push(s, src, dst, EdgeShape::TypeToExpr, None, Some(ty));
                }
                if let ExprKind::Member(recv, _) = &callee.kind {
                    self.visit(s, recv, Role::Target);
                }
                for a in args {
                    self.visit(s, a, Role::Value);
                }
            }
            ExprKind::Index(base, key) => {
                self.visit(s, base, Role::Target);
                self.visit(s, key, Role::Key);
            }
            ExprKind::SliceRange(base, lo, hi) => {
                self.visit(s, base, Role::Target);
                for k in lo.iter().chain(hi.iter()) {
                    self.visit(s, k, Role::Key);
                }
            }
            ExprKind::Member(base, m) => {
                if let Some(ty) = self.builtins.member(m) {
                    let src = self.sub(s, e, render_expr(e));
                    self.push(s, src, dst, EdgeShape::TypeToExpr, None, Some(ty.to_string()));
                }
                self.visit(s, base, Role::Target);
            }
        }
    }

    /// Key edges of an access path `slot[k1][k2]` into its root variable.
    fn key_edges(&mut self, s: &Stmt, root: &NodeSpec, target: &Expr) {
        let mut keys = Vec::new();
        let mut cur = target;
        loop {
            match &cur.kind {
                ExprKind::Index(base, key) => {
                    keys.push(key.as_ref());
                    cur = base;
                }
                ExprKind::Member(base, _) => cur = base,
                _ => break,
            }
        }
        for key in keys.into_iter().rev() {
            self.flow_into(s, root.clone(), key, Some(Role::Key));
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::VarDecl { name, init: Some(e), .. } => {
                let dst = NodeSpec { key: NodeKey::local(&self.f.name, name), label: name.clone(), pos: s.pos };
                self.flow_into(s, dst, e, None);
            }
            StmtKind::VarDecl { init: None, .. } => {}
            StmtKind::Assign { target, value, .. } | StmtKind::StorageWrite { target, value, .. } => {
                self.assignment(s, target, value);
            }
            StmtKind::Return(Some(e)) => {
                let dst = ret_spec(self.unit, &self.f.name);
                match &e.kind {
                    ExprKind::Var(_) => self.flow_into(s, dst, e, None),
                    ExprKind::Call(callee, _) if self.internal_callee(callee).is_some() => self.flow_into(s, dst, e, None),
                    ExprKind::Const(_) => {}
                    _ => {
                        let src = stmt_spec(&self.f.name, s);
                        self.push(s, src, dst, EdgeShape::ExprToVar, None, None);
                        self.visit(s, e, Role::Operand);
                    }
                }
            }
            _ => {
                for e in s.exprs() {
                    self.visit(s, e, Role::Operand);
                }
            }
        }
    }

    fn assignment(&mut self, s: &Stmt, target: &Expr, value: &Expr) {
        match &target.kind {
            ExprKind::Tuple(items) => {
                for item in items {
                    if let Some(root) = item.base_var() {
                        let dst = self.var(root, item);
                        self.key_edges(s, &dst, item);
                        let role = (!matches!(item.kind, ExprKind::Var(_))).then_some(Role::Value);
                        match &value.kind {
                            ExprKind::Call(..) | ExprKind::Var(_) => self.flow_into(s, dst, value, role),
                            _ => {
                                let src = stmt_spec(&self.f.name, s);
                                self.push(s, src, dst, EdgeShape::ExprToVar, role, None);
                            }
                        }
                    }
                }
                if !matches!(value.kind, ExprKind::Call(..) | ExprKind::Var(_)) {
                    self.visit(s, value, Role::Operand);
                }
            }
            _ => {
                let Some(root) = target.base_var() else {
                    self.visit(s, target, Role::Target);
                    self.visit(s, value, Role::Operand);
                    return;
                };
                let dst = self.var(root, target);
                self.key_edges(s, &dst, target);
                let role = (!matches!(target.kind, ExprKind::Var(_))).then_some(Role::Value);
                self.flow_into(s, dst, value, role);
            }
        }
    }
}

/// Type dependency edges of one function.
pub fn extract_type_edges(unit: &SourceUnit, f: &FunctionDecl, builtins: &BuiltinTable) -> Vec<RawEdge> {
    let mut x = TypeExtractor { unit, f, builtins, edges: Vec::new() };
    for s in &f.body {
        s.walk(&mut |st| x.stmt(st));
    }
    x.edges
}

fn storage_reads(unit: &SourceUnit, f: &FunctionDecl, e: &Expr, out: &mut BTreeSet<String>) {
    for v in e.vars() {
        if unit.is_storage(&v) && !f.declares_local(&v) {
            out.insert(v);
        }
    }
}

/// Index keys of an access path, excluding the root.
fn path_keys(e: &Expr) -> Vec<&Expr> {
    match &e.kind {
        ExprKind::Index(base, key) => {
            let mut v = path_keys(base);
            v.push(key);
            v
        }
        ExprKind::Member(base, _) => path_keys(base),
        _ => Vec::new(),
    }
}

/// State dependency edges of the whole unit.
pub fn extract_state_edges(unit: &SourceUnit) -> Vec<RawEdge> {
    let mut edges = Vec::new();
    for f in &unit.functions {
        for s in &f.body {
            s.walk(&mut |st| {
                let node = stmt_spec(&f.name, st);
                let site = Some((f.name.clone(), st.id));
                let mut reads = BTreeSet::new();
                let mut value_reads = BTreeSet::new();
                let mut written = None;
                match &st.kind {
                    StmtKind::StorageWrite { target, op, value } => {
                        let slot = target.base_var().unwrap_or_default().to_string();
                        for k in path_keys(target) {
                            storage_reads(unit, f, k, &mut reads);
                        }
                        storage_reads(unit, f, value, &mut value_reads);
                        if op.binop().is_some() {
                            reads.insert(slot.clone());
                        }
                        written = Some(slot);
                    }
                    _ => {
                        for e in st.exprs() {
                            storage_reads(unit, f, e, &mut reads);
                        }
                    }
                }
                reads.extend(value_reads.iter().cloned());
                if let Some(slot) = &written {
                    let sv = var_spec(unit, f, slot, st.pos);
                    edges.push(RawEdge {
                        src: sv.clone(),
                        dst: node.clone(),
                        shape: EdgeShape::StateToExpr,
                        role: None,
                        annotation: None,
                        site: site.clone(),
                    });
                    for r in value_reads.iter().filter(|r| *r != slot) {
                        edges.push(RawEdge {
                            src: var_spec(unit, f, r, st.pos),
                            dst: sv.clone(),
                            shape: EdgeShape::StateToState,
                            role: None,
                            annotation: None,
                            site: site.clone(),
                        });
                    }
                }
                for r in &reads {
                    edges.push(RawEdge {
                        src: node.clone(),
                        dst: var_spec(unit, f, r, st.pos),
                        shape: EdgeShape::ExprToState,
                        role: None,
                        annotation: None,
                        site: site.clone(),
                    });
                }
            });
        }
    }
    edges
}

/// Def-use edges between distinct statements of one function.
pub fn extract_dfd_edges(f: &FunctionDecl, cfg: &ControlFlowGraph, dfg: &DataFlowGraph) -> Vec<RawEdge> {
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for e in &dfg.edges {
        let (d, u) = (cfg.instr(e.def).stmt, cfg.instr(e.use_site).stmt);
        if d == u || !seen.insert((d, u, e.var.clone())) {
            continue;
        }
        let (Some(ds), Some(us)) = (f.find_stmt(d), f.find_stmt(u)) else { continue };
        edges.push(RawEdge {
            src: stmt_spec(&f.name, ds),
            dst: stmt_spec(&f.name, us),
            shape: EdgeShape::DefUse,
            role: None,
            annotation: Some(e.var.clone()),
            site: None,
        });
    }
    edges
}
