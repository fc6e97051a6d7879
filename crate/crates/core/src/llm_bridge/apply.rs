use std::collections::BTreeSet;

use super::edits::{Edit, EditSet};
use crate::frontend::{
    parse_type_text, parse_unit, render_unit, render_with_layout, AssignOp, Expr, ExprKind, FunctionDecl, Param, SourceUnit, Stmt,
    StmtKind, StorageDecl, TypeExpr,
};
use crate::promptgen::ATTRIBUTE_LABELS;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EditConflict {
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("`{0}` matches more than one function; qualify it as fn::name")]
    Ambiguous(String),
    #[error("`{0}` is not a type")]
    InvalidType(String),
    #[error("`{0}` is not an attribute label")]
    InvalidLabel(String),
    #[error("`{0}` is already taken")]
    NameClash(String),
    #[error("split range {start}..{end} of `{host}`: {reason}")]
    BadRange { host: String, start: u32, end: u32, reason: String },
    #[error("splits of `{0}` overlap")]
    OverlappingSplits(String),
    #[error("edited unit does not re-parse: {0}")]
    Reparse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Entity {
    Storage(String),
    Param(usize, usize),
    Local(usize, String),
    Ret(usize),
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Local names of a function: parameters, declarations, assigned names.
fn locals_of(unit: &SourceUnit, f: &FunctionDecl) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = f.params.iter().map(|p| p.name.clone()).collect();
    for s in &f.body {
        s.walk(&mut |st| match &st.kind {
            StmtKind::VarDecl { name, .. } => {
                out.insert(name.clone());
            }
            StmtKind::Assign { target, .. } => {
                if let Some(v) = target.base_var() {
                    if !unit.is_storage(v) || f.declares_local(v) {
                        out.insert(v.to_string());
                    }
                }
            }
            _ => {}
        });
    }
    out
}

fn entity_in(unit: &SourceUnit, fi: usize, name: &str) -> Option<Entity> {
    let f = &unit.functions[fi];
    if name == "ret" {
        return Some(Entity::Ret(fi));
    }
    if let Some(pi) = f.params.iter().position(|p| p.name == name) {
        return Some(Entity::Param(fi, pi));
    }
    locals_of(unit, f).contains(name).then(|| Entity::Local(fi, name.to_string()))
}

fn resolve(unit: &SourceUnit, name: &str, scope: Option<&str>) -> Result<Entity, EditConflict> {
    if let Some((fname, var)) = name.split_once("::") {
        let fi = unit.functions.iter().position(|f| f.name == fname).ok_or_else(|| EditConflict::UnknownName(name.into()))?;
        return entity_in(unit, fi, var).ok_or_else(|| EditConflict::UnknownName(name.into()));
    }
    if let Some(fi) = scope.and_then(|s| unit.functions.iter().position(|f| f.name == s)) {
        if let Some(e) = entity_in(unit, fi, name).filter(|e| !matches!(e, Entity::Ret(_))) {
            return Ok(e);
        }
    }
    if unit.is_storage(name) {
        return Ok(Entity::Storage(name.into()));
    }
    let hits: Vec<Entity> = (0..unit.functions.len())
        .filter_map(|fi| entity_in(unit, fi, name).filter(|e| !matches!(e, Entity::Ret(_))))
        .collect();
    match hits.len() {
        0 => Err(EditConflict::UnknownName(name.into())),
        1 => Ok(hits.into_iter().next().expect("one hit")),
        _ => Err(EditConflict::Ambiguous(name.into())),
    }
}

fn parse_ty(text: &str) -> Result<TypeExpr, EditConflict> {
    parse_type_text(text).ok_or_else(|| EditConflict::InvalidType(text.into()))
}

fn storage_decl_mut<'a>(unit: &'a mut SourceUnit, name: &str) -> &'a mut StorageDecl {
    if let Some(i) = unit.storage.iter().position(|d| d.name == name) {
        return &mut unit.storage[i];
    }
    // Slots seen only through their accesses get a word-sized declaration.
    unit.storage.push(StorageDecl {
        ty: TypeExpr::Named("uint256".into()),
        name: name.into(),
        attribute: None,
        pos: Default::default(),
    });
    unit.storage.last_mut().expect("just pushed")
}

fn retype(unit: &mut SourceUnit, entity: Entity, ty: TypeExpr) {
    match entity {
        Entity::Storage(name) => storage_decl_mut(unit, &name).ty = ty,
        Entity::Param(fi, pi) => unit.functions[fi].params[pi].ty = Some(ty),
        Entity::Ret(fi) => unit.functions[fi].returns = vec![ty],
        Entity::Local(fi, name) => {
            let f = &mut unit.functions[fi];
            let mut done = false;
            for s in &mut f.body {
                s.walk_mut(&mut |st| {
                    if done {
                        return;
                    }
                    if let StmtKind::VarDecl { ty: t, name: n, .. } = &mut st.kind {
                        if *n == name {
                            *t = ty.clone();
                            done = true;
                        }
                    }
                });
            }
            if done {
                return;
            }
            // An undeclared local gets declared at its first plain assignment.
            for s in &mut f.body {
                s.walk_mut(&mut |st| {
                    if done {
                        return;
                    }
                    if let StmtKind::Assign { target, op: AssignOp::Set, value } = &st.kind {
                        if matches!(&target.kind, ExprKind::Var(v) if *v == name) {
                            st.kind = StmtKind::VarDecl { ty: ty.clone(), location: None, name: name.clone(), init: Some(value.clone()) };
                            done = true;
                        }
                    }
                });
            }
        }
    }
}

fn rename_in(f: &mut FunctionDecl, old: &str, new: &str) {
    for p in &mut f.params {
        if p.name == old {
            p.name = new.to_string();
        }
    }
    for s in &mut f.body {
        s.walk_mut(&mut |st| {
            if let StmtKind::VarDecl { name, .. } = &mut st.kind {
                if name == old {
                    *name = new.to_string();
                }
            }
            for e in st.exprs_mut() {
                e.walk_mut(&mut |x| {
                    if let ExprKind::Var(v) = &mut x.kind {
                        if v == old {
                            *v = new.to_string();
                        }
                    }
                });
            }
        });
    }
}

fn rename(unit: &mut SourceUnit, entity: Entity, old: &str, new: &str) -> Result<(), EditConflict> {
    if !is_ident(new) {
        return Err(EditConflict::NameClash(new.into()));
    }
    match entity {
        Entity::Storage(name) => {
            if unit.is_storage(new) || unit.function(new).is_some() || unit.functions.iter().any(|f| locals_of(unit, f).contains(new)) {
                return Err(EditConflict::NameClash(new.into()));
            }
            if let Some(d) = unit.storage.iter_mut().find(|d| d.name == name) {
                d.name = new.into();
            }
            for f in &mut unit.functions {
                if !f.declares_local(&name) {
                    rename_in(f, &name, new);
                }
            }
        }
        Entity::Param(fi, _) | Entity::Local(fi, _) => {
            let taken = locals_of(unit, &unit.functions[fi]).contains(new) || unit.is_storage(new) || unit.function(new).is_some();
            if taken {
                return Err(EditConflict::NameClash(new.into()));
            }
            let bare = old.rsplit("::").next().unwrap_or(old).to_string();
            rename_in(&mut unit.functions[fi], &bare, new);
        }
        Entity::Ret(_) => return Err(EditConflict::UnknownName(old.into())),
    }
    Ok(())
}

struct SplitPlan {
    host: String,
    new_name: String,
    ids: Vec<u32>,
    range: (u32, u32),
}

fn plan_split(unit: &SourceUnit, host: &str, new_name: &str, start: u32, end: u32) -> Result<SplitPlan, EditConflict> {
    let bad = |reason: &str| EditConflict::BadRange { host: host.into(), start, end, reason: reason.into() };
    let f = unit.function(host).ok_or_else(|| EditConflict::UnknownName(host.into()))?;
    if !is_ident(new_name) || unit.function(new_name).is_some() || unit.is_storage(new_name) {
        return Err(EditConflict::NameClash(new_name.into()));
    }
    if start > end {
        return Err(bad("start after end"));
    }
    let (_, layout) = render_with_layout(unit);
    let span = layout.functions[host];
    if start <= span.start_line || end >= span.end_line {
        return Err(bad("outside the function body"));
    }
    let picked: Vec<&Stmt> = f
        .body
        .iter()
        .filter(|s| {
            let sp = layout.stmts[&(host.to_string(), s.id)];
            sp.start_line >= start && sp.end_line <= end
        })
        .collect();
    let (Some(first), Some(last)) = (picked.first(), picked.last()) else {
        return Err(bad("covers no whole statement"));
    };
    let sp_first = layout.stmts[&(host.to_string(), first.id)];
    let sp_last = layout.stmts[&(host.to_string(), last.id)];
    if sp_first.start_line != start || sp_last.end_line != end {
        return Err(bad("does not align with statement boundaries"));
    }
    Ok(SplitPlan { host: host.into(), new_name: new_name.into(), ids: picked.iter().map(|s| s.id).collect(), range: (start, end) })
}

/// Variables read by a statement and its nested statements.
fn reads(stmts: &[Stmt]) -> Vec<String> {
    let mut out = Vec::new();
    let mut add = |e: &Expr| {
        for v in e.vars() {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    };
    for s in stmts {
        s.walk(&mut |st| match &st.kind {
            StmtKind::Assign { target, op, value } | StmtKind::StorageWrite { target, op, value } => {
                if !(matches!(target.kind, ExprKind::Var(_)) && *op == AssignOp::Set) {
                    add(target);
                }
                add(value);
            }
            _ => st.exprs().into_iter().for_each(&mut add),
        });
    }
    out
}

fn assigned(stmts: &[Stmt]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for s in stmts {
        s.walk(&mut |st| match &st.kind {
            StmtKind::VarDecl { name, .. } => {
                out.insert(name.clone());
            }
            StmtKind::Assign { target, .. } => {
                if let Some(v) = target.base_var() {
                    out.insert(v.to_string());
                }
            }
            _ => {}
        });
    }
    out
}

fn has_return(stmts: &[Stmt]) -> bool {
    let mut hit = false;
    for s in stmts {
        s.walk(&mut |st| hit |= matches!(st.kind, StmtKind::Return(_)));
    }
    hit
}

fn declared_type(f: &FunctionDecl, name: &str) -> Option<TypeExpr> {
    if let Some(p) = f.params.iter().find(|p| p.name == name) {
        return p.ty.clone();
    }
    let mut found = None;
    for s in &f.body {
        s.walk(&mut |st| {
            if let StmtKind::VarDecl { ty, name: n, .. } = &st.kind {
                if n == name && found.is_none() {
                    found = Some(ty.clone());
                }
            }
        });
    }
    found
}

fn hoist(unit: &mut SourceUnit, plan: &SplitPlan) -> Result<(), EditConflict> {
    let bad = |reason: String| EditConflict::BadRange { host: plan.host.clone(), start: plan.range.0, end: plan.range.1, reason };
    let fi = unit.functions.iter().position(|f| f.name == plan.host).expect("planned host exists");
    let host_locals = locals_of(unit, &unit.functions[fi]);
    let f = &unit.functions[fi];
    let i = f.body.iter().position(|s| s.id == plan.ids[0]).ok_or_else(|| bad("statements moved".into()))?;
    let j = i + plan.ids.len();
    let (before, moved, after) = (&f.body[..i], &f.body[i..j], &f.body[j..]);

    if has_return(moved) && !after.is_empty() {
        return Err(bad("a return inside the range would no longer leave the host".into()));
    }
    let written = assigned(moved);
    let later = reads(after);
    if let Some(v) = later.iter().find(|v| written.contains(*v) && host_locals.contains(*v)) {
        return Err(bad(format!("local `{v}` is set in the range and used after it")));
    }
    let defined_before = assigned(before);
    let params: Vec<Param> = reads(moved)
        .into_iter()
        .filter(|v| f.params.iter().any(|p| p.name == *v) || (host_locals.contains(v) && defined_before.contains(v)))
        .map(|v| Param { ty: declared_type(f, &v), location: None, name: v })
        .collect();
    let pos = moved[0].pos;
    let args: Vec<Expr> = params.iter().map(|p| Expr::var(&p.name, pos)).collect();
    let call = Expr::new(ExprKind::Call(Box::new(Expr::var(&plan.new_name, pos)), args), pos);
    let returns_value = after.is_empty() && !f.returns.is_empty();
    let site = Stmt { kind: if returns_value { StmtKind::Return(Some(call)) } else { StmtKind::ExprStmt(call) }, pos, id: 0 };
    let mut new_fn = FunctionDecl {
        name: plan.new_name.clone(),
        params,
        modifiers: vec!["internal".into()],
        returns: if returns_value { f.returns.clone() } else { Vec::new() },
        body: moved.to_vec(),
        span: Default::default(),
        pos,
    };
    new_fn.renumber();
    let host = &mut unit.functions[fi];
    host.body.splice(i..j, [site]);
    host.renumber();
    unit.functions.insert(fi + 1, new_fn);
    Ok(())
}

/// Applies an edit set atomically: any invalid edit rejects the whole set.
/// Bare local names are resolved in `scope` first.
pub fn apply_edits(unit: &SourceUnit, edits: &EditSet, scope: Option<&str>) -> Result<SourceUnit, EditConflict> {
    if edits.is_empty() {
        return Ok(unit.clone());
    }
    // Split ranges refer to the incoming rendering, so resolve them first.
    let mut plans: Vec<SplitPlan> = Vec::new();
    for e in &edits.edits {
        if let Edit::Split { host, new_name, start_line, end_line } = e {
            let plan = plan_split(unit, host, new_name, *start_line, *end_line)?;
            let clash = plans.iter().any(|p| {
                p.new_name == plan.new_name || (p.host == plan.host && p.range.0 <= plan.range.1 && plan.range.0 <= p.range.1)
            });
            if clash {
                return Err(EditConflict::OverlappingSplits(plan.host));
            }
            plans.push(plan);
        }
    }
    let mut out = unit.clone();
    for e in &edits.edits {
        match e {
            Edit::Retype { name, ty } => {
                let ty = parse_ty(ty)?;
                let entity = resolve(&out, name, scope)?;
                retype(&mut out, entity, ty);
            }
            Edit::Attribute { name, label } => {
                if !ATTRIBUTE_LABELS.contains(&label.as_str()) {
                    return Err(EditConflict::InvalidLabel(label.clone()));
                }
                if !out.is_storage(name) {
                    return Err(EditConflict::UnknownName(name.clone()));
                }
                storage_decl_mut(&mut out, name).attribute = Some(label.clone());
            }
            Edit::Rename { old, new } => {
                let entity = resolve(&out, old, scope)?;
                rename(&mut out, entity, old, new)?;
            }
            Edit::Split { .. } => {}
        }
    }
    // Later ranges first so earlier statement positions stay valid.
    plans.sort_by_key(|p| std::cmp::Reverse(p.range.0));
    for plan in &plans {
        hoist(&mut out, plan)?;
    }
    let text = render_unit(&out);
    let reparsed = parse_unit(&unit.file_id, &text);
    if let Some(skip) = reparsed.skipped.first() {
        return Err(EditConflict::Reparse(skip.reason.clone()));
    }
    Ok(reparsed)
}
