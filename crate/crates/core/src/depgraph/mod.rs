//! Dependency graph: variable and expression nodes joined by data-flow (DFD),
//! state (SD) and type (TD) dependency edges, plus slicing.

pub mod builtins;
pub mod extract;
pub mod graph;
pub mod slice;

pub use builtins::BuiltinTable;
pub use extract::{extract_dfd_edges, extract_state_edges, extract_type_edges};
pub use graph::*;
pub use slice::{slice_filtered, slice_function, slice_function_bounded, slice_variable, SliceGraph};

use crate::flowgraphs::{build_all, call_graph, CallGraph, ControlFlowGraph, DataFlowGraph};
use crate::frontend::{lower_ir, render_type, FrontendError, IrModule, SourceUnit, StmtKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DgError {
    #[error("inconsistent dependency graph: {0}")]
    Consistency(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
}

fn intern_spec(dg: &mut DependencyGraph, unit: &SourceUnit, spec: &NodeSpec) -> Result<usize, DgError> {
    if let Some(id) = dg.node(&spec.key) {
        return Ok(id);
    }
    match &spec.key {
        NodeKey::Stmt { function, stmt } => Err(DgError::Consistency(format!("statement {stmt} of `{function}` does not exist"))),
        NodeKey::Var { scope, name } => {
            let is_storage = *scope == Scope::Global;
            let ty = if is_storage { unit.storage_decl(name).map(|d| render_type(&d.ty)) } else { None };
            Ok(dg.intern(spec.key.clone(), spec.label.clone(), spec.pos, ty, is_storage))
        }
        NodeKey::SubExpr { .. } => Ok(dg.intern(spec.key.clone(), spec.label.clone(), spec.pos, None, false)),
    }
}

/// Nodes for every declared variable and every statement, in source order.
fn seed_nodes(dg: &mut DependencyGraph, unit: &SourceUnit) {
    for name in unit.storage_vars() {
        let decl = unit.storage_decl(&name);
        dg.intern(
            NodeKey::global(&name),
            name.clone(),
            decl.map(|d| d.pos).unwrap_or_default(),
            decl.map(|d| render_type(&d.ty)),
            true,
        );
    }
    for f in &unit.functions {
        for p in &f.params {
            dg.intern(NodeKey::local(&f.name, &p.name), p.name.clone(), f.pos, p.ty.as_ref().map(render_type), false);
        }
        let mut has_value_return = !f.returns.is_empty();
        for s in &f.body {
            s.walk(&mut |st| {
                match &st.kind {
                    StmtKind::VarDecl { ty, name, .. } => {
                        dg.intern(NodeKey::local(&f.name, name), name.clone(), st.pos, Some(render_type(ty)), false);
                    }
                    StmtKind::Assign { target, .. } => {
                        if let Some(name) = target.base_var() {
                            if !unit.is_storage(name) || f.declares_local(name) {
                                dg.intern(NodeKey::local(&f.name, name), name.to_string(), st.pos, None, false);
                            }
                        }
                    }
                    StmtKind::Return(Some(_)) => has_value_return = true,
                    _ => {}
                }
                let spec = extract::stmt_spec(&f.name, st);
                dg.intern(spec.key, spec.label, spec.pos, None, false);
            });
        }
        if has_value_return {
            let spec = extract::ret_spec(unit, &f.name);
            let ty = match f.returns.as_slice() {
                [one] => Some(render_type(one)),
                [] => None,
                many => Some(format!("({})", many.iter().map(render_type).collect::<Vec<_>>().join(", "))),
            };
            dg.intern(spec.key, spec.label, spec.pos, ty, false);
        }
    }
}

/// Assembles the DG from per-function flow graphs and extracted TD/SD edges.
pub fn assemble_dg(
    unit: &SourceUnit,
    graphs: &[(ControlFlowGraph, DataFlowGraph)],
    td: &[RawEdge],
    sd: &[RawEdge],
) -> Result<DependencyGraph, DgError> {
    let mut dg = DependencyGraph::default();
    seed_nodes(&mut dg, unit);
    let mut dfd = Vec::new();
    for (cfg, dfg) in graphs {
        let f = unit
            .function(&cfg.function)
            .ok_or_else(|| DgError::Consistency(format!("flow graph for unknown function `{}`", cfg.function)))?;
        dfd.extend(extract_dfd_edges(f, cfg, dfg));
    }
    for raw in dfd.iter().chain(td).chain(sd) {
        let src = intern_spec(&mut dg, unit, &raw.src)?;
        let dst = intern_spec(&mut dg, unit, &raw.dst)?;
        dg.add_edge(DgEdge {
            src,
            dst,
            label: raw.shape.label(),
            shape: raw.shape,
            role: raw.role,
            annotation: raw.annotation.clone(),
            site: raw.site.clone(),
        })?;
    }
    Ok(dg)
}

/// Every static artifact derived from one unit.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub ir: IrModule,
    pub graphs: Vec<(ControlFlowGraph, DataFlowGraph)>,
    pub call_graph: CallGraph,
    pub dg: DependencyGraph,
}

pub fn analyze(unit: &SourceUnit, builtins: &BuiltinTable) -> Result<Analysis, DgError> {
    let ir = lower_ir(unit)?;
    let graphs = build_all(&ir);
    let cg = call_graph(&ir);
    let td: Vec<RawEdge> = unit.functions.iter().flat_map(|f| extract_type_edges(unit, f, builtins)).collect();
    let sd = extract_state_edges(unit);
    let dg = assemble_dg(unit, &graphs, &td, &sd)?;
    Ok(Analysis { ir, graphs, call_graph: cg, dg })
}
