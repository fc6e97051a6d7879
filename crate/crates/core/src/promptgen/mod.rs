//! Prompt construction: code context, inference candidates and
//! chain-of-thought sentences for one optimization target.

pub mod templates;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use templates::{Category, CotTemplate, Placeholder, RowKind, TemplateSet};

use crate::depgraph::{slice_filtered, slice_function, Analysis, DgError, EdgeLabel, EdgeShape, NodeKey, Role, SliceGraph, RET};
use crate::flowgraphs::CallGraph;
use crate::frontend::{render_function, render_stmt_brief, ExprKind, FunctionDecl, Pos, SourceUnit, Stmt, StmtKind};

pub const DEFAULT_TOKEN_BUDGET: usize = 6000;

pub const ATTRIBUTE_LABELS: [&str; 7] = ["Limit", "Fee", "Flag", "Address", "Asset", "Router", "Others"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("slice of {0} has no expression node")]
    EmptySlice(String),
    #[error("{0:?} targets take no candidates")]
    UnsupportedKind(TargetKind),
    #[error("no template row for {label} edge of shape {shape:?}")]
    MissingTemplate { label: EdgeLabel, shape: EdgeShape },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("template data: {0}")]
    Template(String),
    #[error(transparent)]
    Graph(#[from] DgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TargetKind {
    VariableType,
    ContractAttribute,
    FunctionBoundary,
}

impl TargetKind {
    pub fn tag(self) -> &'static str {
        match self {
            TargetKind::VariableType => "type",
            TargetKind::ContractAttribute => "attribute",
            TargetKind::FunctionBoundary => "boundary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    /// A variable; `function` is `None` for storage.
    Variable { function: Option<String>, name: String },
    Function(String),
}

impl Subject {
    pub fn display(&self) -> String {
        match self {
            Subject::Variable { function: Some(f), name } => format!("{f}::{name}"),
            Subject::Variable { function: None, name } | Subject::Function(name) => name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OptimizationTarget {
    pub kind: TargetKind,
    pub subject: Subject,
    pub unit: String,
}

impl OptimizationTarget {
    pub fn variable(unit: &str, function: Option<&str>, name: &str) -> Self {
        OptimizationTarget {
            kind: TargetKind::VariableType,
            subject: Subject::Variable { function: function.map(str::to_string), name: name.to_string() },
            unit: unit.to_string(),
        }
    }

    pub fn attribute(unit: &str, name: &str) -> Self {
        OptimizationTarget {
            kind: TargetKind::ContractAttribute,
            subject: Subject::Variable { function: None, name: name.to_string() },
            unit: unit.to_string(),
        }
    }

    pub fn boundary(unit: &str, function: &str) -> Self {
        OptimizationTarget {
            kind: TargetKind::FunctionBoundary,
            subject: Subject::Function(function.to_string()),
            unit: unit.to_string(),
        }
    }

    /// Target id without the unit prefix, e.g. `type:setStorage::v0`.
    pub fn local_id(&self) -> String {
        format!("{}:{}", self.kind.tag(), self.subject.display())
    }

    /// Stable id, e.g. `token_key/type:uintStorage`.
    pub fn id(&self) -> String {
        format!("{}/{}", self.unit, self.local_id())
    }

    /// DG key of a variable subject.
    pub fn node_key(&self) -> Option<NodeKey> {
        match &self.subject {
            Subject::Variable { function: Some(f), name } => Some(NodeKey::local(f, name)),
            Subject::Variable { function: None, name } => Some(NodeKey::global(name)),
            Subject::Function(_) => None,
        }
    }

    /// Checks the kind/subject pairing against the unit.
    pub fn validate(&self, unit: &SourceUnit) -> Result<(), PromptError> {
        match (&self.kind, &self.subject) {
            (TargetKind::FunctionBoundary, Subject::Function(f)) if unit.function(f).is_some() => Ok(()),
            (TargetKind::ContractAttribute, Subject::Variable { function: None, name }) if unit.is_storage(name) => Ok(()),
            (TargetKind::VariableType, Subject::Variable { function: None, name }) if unit.is_storage(name) => Ok(()),
            (TargetKind::VariableType, Subject::Variable { function: Some(f), .. }) if unit.function(f).is_some() => Ok(()),
            _ => Err(PromptError::InvalidTarget(self.id())),
        }
    }
}

/// Every target of a unit: types of storage variables, parameters and
/// locals; attributes of storage variables; boundaries of functions.
pub fn enumerate_targets(unit: &SourceUnit) -> Vec<OptimizationTarget> {
    let id = &unit.file_id;
    let mut out = Vec::new();
    for name in unit.storage_vars() {
        out.push(OptimizationTarget::variable(id, None, &name));
    }
    for f in &unit.functions {
        let mut seen = BTreeSet::new();
        for p in &f.params {
            if seen.insert(p.name.clone()) {
                out.push(OptimizationTarget::variable(id, Some(&f.name), &p.name));
            }
        }
        for s in &f.body {
            s.walk(&mut |st| {
                let name = match &st.kind {
                    StmtKind::VarDecl { name, .. } => Some(name.as_str()),
                    StmtKind::Assign { target: t, .. } => match &t.kind {
                        ExprKind::Var(v) if !unit.is_storage(v) || f.declares_local(v) => Some(v.as_str()),
                        _ => None,
                    },
                    _ => None,
                };
                if let Some(n) = name {
                    if seen.insert(n.to_string()) {
                        out.push(OptimizationTarget::variable(id, Some(&f.name), n));
                    }
                }
            });
        }
    }
    for name in unit.storage_vars() {
        out.push(OptimizationTarget::attribute(id, &name));
    }
    for f in &unit.functions {
        out.push(OptimizationTarget::boundary(id, &f.name));
    }
    out
}

/// Candidate answers offered for a target kind.
pub fn candidates_for(kind: TargetKind) -> Result<Vec<String>, PromptError> {
    match kind {
        TargetKind::VariableType => {
            let mut c = vec!["bool".to_string()];
            c.extend((8..=256).step_by(8).map(|b| format!("uint{b}")));
            c.extend((8..=256).step_by(8).map(|b| format!("int{b}")));
            c.push("address".into());
            c.push("address payable".into());
            c.extend((1..=32).map(|n| format!("bytes{n}")));
            c.push("bytes".into());
            c.push("string".into());
            c.extend(["mapping(K=>V)", "T[]", "T[k]", "tuple"].map(String::from));
            Ok(c)
        }
        TargetKind::ContractAttribute => Ok(ATTRIBUTE_LABELS.iter().map(|s| s.to_string()).collect()),
        TargetKind::FunctionBoundary => Err(PromptError::UnsupportedKind(kind)),
    }
}

/// What the context is built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SliceInput<'a> {
    Variable(&'a SliceGraph),
    Chain(&'a [String]),
}

/// Statements of a variable slice: owners of expression nodes plus the
/// sites of slice edges, as `(function, stmt id)`.
fn slice_statements(analysis: &Analysis, slice: &SliceGraph) -> BTreeSet<(String, u32)> {
    let dg = &analysis.dg;
    let mut out = BTreeSet::new();
    for &n in slice.hops.keys() {
        if let Some((f, s)) = dg.nodes[n].key.owner() {
            out.insert((f.to_string(), s));
        }
    }
    for &e in &slice.edges {
        if let Some(site) = &dg.edges[e].site {
            out.insert(site.clone());
        }
    }
    out
}

/// Renders the code context. Variable slices yield the owning statements of
/// every slice expression node; chains yield whole functions.
pub fn render_context(
    target: &OptimizationTarget,
    unit: &SourceUnit,
    analysis: &Analysis,
    input: SliceInput<'_>,
) -> Result<String, PromptError> {
    match input {
        SliceInput::Chain(fns) => {
            let mut out = String::new();
            for f in unit.functions.iter().filter(|f| fns.contains(&f.name)) {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&render_function(f));
            }
            if out.is_empty() {
                return Err(PromptError::EmptySlice(target.id()));
            }
            Ok(out)
        }
        SliceInput::Variable(slice) => {
            let stmts = slice_statements(analysis, slice);
            if stmts.is_empty() {
                return Err(PromptError::EmptySlice(target.id()));
            }
            let mut out = String::new();
            for f in &unit.functions {
                let mut lines = Vec::new();
                for s in &f.body {
                    s.walk(&mut |st| {
                        if stmts.contains(&(f.name.clone(), st.id)) {
                            lines.push(statement_line(st));
                        }
                    });
                }
                if lines.is_empty() {
                    continue;
                }
                let _ = writeln!(out, "{}", crate::frontend::render::render_function_header(f));
                for l in lines {
                    let _ = writeln!(out, "    {l}");
                }
                out.push_str("}\n");
            }
            Ok(out)
        }
    }
}

fn statement_line(s: &Stmt) -> String {
    let brief = render_stmt_brief(s);
    if s.is_compound() {
        format!("{brief} {{ ... }}")
    } else {
        format!("{brief};")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CotSentence {
    pub category: Category,
    pub row: RowKind,
    /// Hop of the endpoint nearer to the target.
    pub hop: u32,
    pub pos: Pos,
    pub text: String,
}

fn role_word(role: Option<Role>) -> &'static str {
    match role {
        Some(Role::Target) => "target(s)",
        Some(Role::Key) => "key(s)",
        Some(Role::Value) => "value(s)",
        Some(Role::Operand) | None => "operand(s)",
    }
}

const ROLE_ALTERNATIVES: &str = "operand(s)/target(s)/key(s)/value(s)";

/// One sentence per TD/SD slice edge, farthest hop first, so the chain reads
/// in the direction dependencies flow toward the target. Ties go by source
/// position, then edge id.
pub fn render_cot(analysis: &Analysis, slice: &SliceGraph, templates: &TemplateSet) -> Result<Vec<CotSentence>, PromptError> {
    let dg = &analysis.dg;
    let mut keyed = Vec::new();
    for &eid in &slice.edges {
        let e = &dg.edges[eid];
        let Some(kind) = RowKind::for_shape(e.shape) else { continue };
        let row = templates.row(kind).ok_or(PromptError::MissingTemplate { label: e.label, shape: e.shape })?;
        let (src, dst) = (&dg.nodes[e.src], &dg.nodes[e.dst]);
        let ann = e.annotation.as_deref().unwrap_or("unknown");
        let text = match kind {
            RowKind::VarToVar => row.fill(&[(Placeholder::Name, &dst.label), (Placeholder::Name, &src.label)])?,
            RowKind::TypeToExpr => row.fill(&[
                (Placeholder::Name, &src.label),
                (Placeholder::Statement, &dst.label),
                (Placeholder::Type, ann),
            ])?,
            RowKind::TypeToVar => row.fill(&[(Placeholder::Name, &dst.label), (Placeholder::Type, ann)])?,
            RowKind::ExprToVar => row.fill(&[(Placeholder::Name, &dst.label), (Placeholder::Statement, &src.label)])?,
            RowKind::VarToExpr => {
                let described = match &src.ty {
                    Some(ty) => format!("variable {} of type {ty}", src.label),
                    None => format!("variable {}", src.label),
                };
                let filled = row.fill(&[(Placeholder::Statement, &dst.label), (Placeholder::Type, &described)])?;
                filled.replacen(ROLE_ALTERNATIVES, role_word(e.role), 1)
            }
            RowKind::StateToState => row.fill(&[(Placeholder::Name, &src.label), (Placeholder::Name, &dst.label)])?,
            RowKind::StateToExpr => row.fill(&[(Placeholder::Name, &src.label), (Placeholder::Statement, &dst.label)])?,
            RowKind::ExprToState => row.fill(&[(Placeholder::Name, &dst.label), (Placeholder::Statement, &src.label)])?,
            _ => unreachable!("control-flow rows are not edge rows"),
        };
        let hs = slice.hop(e.src).unwrap_or(u32::MAX);
        let hd = slice.hop(e.dst).unwrap_or(u32::MAX);
        let (near, far) = if hs <= hd { (src, dst) } else { (dst, src) };
        keyed.push(((Reverse(hs.min(hd)), near.pos, far.pos, eid), CotSentence {
            category: row.category,
            row: kind,
            hop: hs.min(hd),
            pos: near.pos,
            text,
        }));
    }
    keyed.sort_by_key(|a| a.0);
    Ok(keyed.into_iter().map(|(_, s)| s).collect())
}

/// Longest run of leading `require` statements shared with another function.
fn shared_require_prefix<'a>(unit: &SourceUnit, f: &'a FunctionDecl) -> Option<&'a [Stmt]> {
    let lead = |g: &'a FunctionDecl| g.body.iter().take_while(|s| matches!(s.kind, StmtKind::Require(..))).count();
    let mine = lead(f);
    let mut best = 0;
    for g in unit.functions.iter().filter(|g| g.name != f.name) {
        let common = f
            .body
            .iter()
            .zip(&g.body)
            .take(mine)
            .take_while(|(a, b)| matches!(b.kind, StmtKind::Require(..)) && render_stmt_brief(a) == render_stmt_brief(b))
            .count();
        best = best.max(common);
    }
    (best > 0).then(|| &f.body[..best])
}

fn calls_internal(unit: &SourceUnit, s: &Stmt) -> bool {
    s.exprs().iter().any(|e| {
        let mut hit = false;
        e.walk(&mut |x| {
            if let ExprKind::Call(callee, _) = &x.kind {
                if let ExprKind::Var(name) = &callee.kind {
                    hit |= unit.function(name).is_some();
                }
            }
        });
        hit
    })
}

/// Control-flow sentences over the given statements: call sites, value
/// returns, declarations, and shared require prefixes.
fn control_flow_sentences(
    unit: &SourceUnit,
    stmts: &BTreeMap<(String, u32), u32>,
    templates: &TemplateSet,
) -> Result<Vec<CotSentence>, PromptError> {
    let mut keyed = Vec::new();
    let mut push = |kind: RowKind, hop: u32, pos: Pos, values: &[(Placeholder, &str)]| -> Result<(), PromptError> {
        let row = templates
            .row(kind)
            .ok_or(PromptError::MissingTemplate { label: EdgeLabel::DFD, shape: EdgeShape::DefUse })?;
        let text = row.fill(values)?;
        keyed.push(((Reverse(hop), pos, kind), CotSentence { category: row.category, row: kind, hop, pos, text }));
        Ok(())
    };
    for f in &unit.functions {
        let mut fn_hop: Option<u32> = None;
        let mut selected = Vec::new();
        for s in &f.body {
            s.walk(&mut |st| {
                if let Some(&h) = stmts.get(&(f.name.clone(), st.id)) {
                    fn_hop = Some(fn_hop.map_or(h, |x| x.min(h)));
                    selected.push((st, h));
                }
            });
        }
        for (st, h) in selected {
            let text = render_stmt_brief(st);
            let v = [(Placeholder::Statement, text.as_str())];
            if calls_internal(unit, st) {
                push(RowKind::CallSite, h, st.pos, &v)?;
            }
            match &st.kind {
                StmtKind::Return(Some(_)) => push(RowKind::ReturnValue, h, st.pos, &v)?,
                StmtKind::VarDecl { .. } => push(RowKind::VariableDeclaration, h, st.pos, &v)?,
                _ => {}
            }
        }
        if let (Some(h), Some(prefix)) = (fn_hop, shared_require_prefix(unit, f)) {
            let first = render_stmt_brief(&prefix[0]);
            let last = render_stmt_brief(prefix.last().expect("non-empty prefix"));
            push(RowKind::Modifier, h, prefix[0].pos, &[(Placeholder::Statement, &first), (Placeholder::Statement, &last)])?;
        }
    }
    keyed.sort_by_key(|a| a.0);
    Ok(keyed.into_iter().map(|(_, s)| s).collect())
}

/// Undirected call-graph distance from `start`.
fn call_distance(cg: &CallGraph, start: &str) -> BTreeMap<String, u32> {
    let mut dist = BTreeMap::from([(start.to_string(), 0)]);
    let mut queue = VecDeque::from([start.to_string()]);
    while let Some(n) = queue.pop_front() {
        let d = dist[&n];
        for m in cg.callees(&n).into_iter().chain(cg.callers(&n)) {
            if !dist.contains_key(m) {
                dist.insert(m.to_string(), d + 1);
                queue.push_back(m.to_string());
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub target: OptimizationTarget,
    pub instruction: String,
    pub context: String,
    pub candidates: Vec<String>,
    pub cot: Vec<CotSentence>,
    pub output_format: String,
    /// Number of sentences dropped to fit the token budget.
    pub truncated: usize,
}

/// Four characters per token, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

impl PromptBundle {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "### Instruction\n{}\n", self.instruction);
        let _ = writeln!(out, "### Code\n```solidity\n{}\n```\n", self.context.trim_end());
        if !self.candidates.is_empty() {
            let _ = writeln!(out, "### Candidates\n[{}]\n", self.candidates.join(", "));
        }
        if !self.cot.is_empty() {
            out.push_str("### Dependencies\n");
            for (i, s) in self.cot.iter().enumerate() {
                let _ = writeln!(out, "{}. {}", i + 1, s.text);
            }
            out.push('\n');
        }
        let _ = writeln!(out, "### Answer format\n{}", self.output_format);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn estimated_tokens(&self) -> usize {
        estimate_tokens(&self.to_text())
    }
}

/// Puts the parts together and enforces the token budget by dropping the
/// highest-hop sentences first. Context is never dropped.
pub fn assemble_prompt(
    target: &OptimizationTarget,
    context: String,
    candidates: Vec<String>,
    cot: Vec<CotSentence>,
    templates: &TemplateSet,
    token_budget: usize,
) -> PromptBundle {
    let mut bundle = PromptBundle {
        target: target.clone(),
        instruction: templates.instruction(target.kind).replace("[NAME]", &target.subject.display()),
        context,
        candidates,
        cot,
        output_format: templates.output_format(target.kind).to_string(),
        truncated: 0,
    };
    while bundle.estimated_tokens() > token_budget && !bundle.cot.is_empty() {
        let worst = (0..bundle.cot.len())
            .max_by_key(|&i| (bundle.cot[i].hop, bundle.cot[i].pos, i))
            .expect("non-empty");
        bundle.cot.remove(worst);
        bundle.truncated += 1;
    }
    bundle
}

/// Builds the full bundle for one target.
pub fn build_bundle(
    target: &OptimizationTarget,
    unit: &SourceUnit,
    analysis: &Analysis,
    templates: &TemplateSet,
    token_budget: usize,
) -> Result<PromptBundle, PromptError> {
    target.validate(unit)?;
    match target.kind {
        TargetKind::FunctionBoundary => {
            let Subject::Function(name) = &target.subject else { unreachable!("validated") };
            let chain = slice_function(&analysis.call_graph, name)?;
            let context = render_context(target, unit, analysis, SliceInput::Chain(&chain))?;
            let dist = call_distance(&analysis.call_graph, name);
            let mut stmts = BTreeMap::new();
            for f in unit.functions.iter().filter(|f| chain.contains(&f.name)) {
                let h = dist.get(&f.name).copied().unwrap_or(0);
                for s in &f.body {
                    s.walk(&mut |st| {
                        stmts.insert((f.name.clone(), st.id), h);
                    });
                }
            }
            let cot = control_flow_sentences(unit, &stmts, templates)?;
            Ok(assemble_prompt(target, context, Vec::new(), cot, templates, token_budget))
        }
        kind => {
            let key = target.node_key().expect("variable subject");
            let node = analysis.dg.require_node(&key)?;
            let labels: &[EdgeLabel] = if kind == TargetKind::VariableType { &[EdgeLabel::TD] } else { &[EdgeLabel::SD] };
            let slice = slice_filtered(&analysis.dg, node, labels)?;
            let context = render_context(target, unit, analysis, SliceInput::Variable(&slice))?;
            let mut cot = render_cot(analysis, &slice, templates)?;
            cot.extend(control_flow_sentences(unit, &statement_hops(analysis, &slice), templates)?);
            Ok(assemble_prompt(target, context, candidates_for(kind)?, cot, templates, token_budget))
        }
    }
}

/// Hop of each context statement: the nearest slice node it owns or the
/// nearer endpoint of an edge it induced.
fn statement_hops(analysis: &Analysis, slice: &SliceGraph) -> BTreeMap<(String, u32), u32> {
    let dg = &analysis.dg;
    let mut out: BTreeMap<(String, u32), u32> = BTreeMap::new();
    let mut note = |k: (String, u32), h: u32| {
        let e = out.entry(k).or_insert(h);
        *e = (*e).min(h);
    };
    for (&n, &h) in &slice.hops {
        if let Some((f, s)) = dg.nodes[n].key.owner() {
            note((f.to_string(), s), h);
        }
    }
    for &e in &slice.edges {
        let edge = &dg.edges[e];
        if let Some(site) = &edge.site {
            let h = slice.hop(edge.src).unwrap_or(0).min(slice.hop(edge.dst).unwrap_or(0));
            note(site.clone(), h);
        }
    }
    out
}

/// Whether a target names a function return value.
pub fn is_return_target(target: &OptimizationTarget) -> bool {
    matches!(&target.subject, Subject::Variable { name, .. } if name == RET)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::{analyze, BuiltinTable};
    use crate::frontend::parse_unit;

    pub(crate) const FIG_TYPE_CHAIN: &str = "mapping(uint256=>uint256) uintStorage;

function _getTokenKey(bytes varg0) private returns (bytes32) {
    return keccak256(abi.encodePacked(varg0));
}

function setStorage(uint256 varg1, bytes varg2) public {
    v0 = _getTokenKey(varg2);
    uintStorage[v0] = varg1;
}
";

    fn bundle(src: &str, target: OptimizationTarget) -> PromptBundle {
        let unit = parse_unit("t", src);
        let a = analyze(&unit, BuiltinTable::shipped()).unwrap();
        build_bundle(&target, &unit, &a, TemplateSet::shipped(), DEFAULT_TOKEN_BUDGET).unwrap()
    }

    #[test]
    fn type_chain_reads_from_source_to_target() {
        let b = bundle(FIG_TYPE_CHAIN, OptimizationTarget::variable("t", None, "uintStorage"));
        let td: Vec<&str> = b.cot.iter().filter(|s| s.category == Category::TypeDependency).map(|s| s.text.as_str()).collect();
        let pos = |needle: &str| td.iter().position(|s| s.contains(needle)).unwrap_or_else(|| panic!("{needle}: {td:#?}"));
        let d1 = pos("The type of variable _getTokenKey::ret depends on expression return keccak256");
        let d2 = pos("The type of variable v0 is consistent with the type of variable _getTokenKey::ret");
        let d3 = pos("The type of variable uintStorage is consistent with the type of variable v0");
        assert!(d1 < d2 && d2 < d3, "{td:#?}");
    }

    #[test]
    fn context_holds_exactly_the_slice_statements() {
        let b = bundle("function f(a) { x = a; y = 2; }", OptimizationTarget::variable("t", Some("f"), "x"));
        assert_eq!(b.context, "function f(a) {\n    x = a;\n}\n");
    }

    #[test]
    fn isolated_variable_has_empty_slice() {
        let unit = parse_unit("t", "uint256 stor_1;\nfunction f() { return; }");
        let a = analyze(&unit, BuiltinTable::shipped()).unwrap();
        let t = OptimizationTarget::variable("t", None, "stor_1");
        let err = build_bundle(&t, &unit, &a, TemplateSet::shipped(), DEFAULT_TOKEN_BUDGET).unwrap_err();
        assert!(matches!(err, PromptError::EmptySlice(_)));
        let node = a.dg.node(&NodeKey::global("stor_1")).unwrap();
        let slice = slice_filtered(&a.dg, node, &[EdgeLabel::TD]).unwrap();
        assert!(render_cot(&a, &slice, TemplateSet::shipped()).unwrap().is_empty());
    }

    #[test]
    fn candidates() {
        assert_eq!(candidates_for(TargetKind::ContractAttribute).unwrap().len(), 7);
        let types = candidates_for(TargetKind::VariableType).unwrap();
        assert!(types.contains(&"address payable".to_string()));
        assert_eq!(types.iter().filter(|t| t.starts_with("uint")).count(), 32);
        assert_eq!(candidates_for(TargetKind::FunctionBoundary), Err(PromptError::UnsupportedKind(TargetKind::FunctionBoundary)));
    }

    #[test]
    fn boundary_bundle_marks_start_and_end_points() {
        let src = "function _handle(uint256 a) public returns (uint256) {
    uint256 x = a + 1;
    require(x > 1);
    return x;
}";
        let b = bundle(src, OptimizationTarget::boundary("t", "_handle"));
        assert!(b.candidates.is_empty());
        let rows: Vec<RowKind> = b.cot.iter().map(|s| s.row).collect();
        assert!(rows.contains(&RowKind::ReturnValue) && rows.contains(&RowKind::VariableDeclaration));
        assert!(!b.to_text().contains("### Candidates"));
    }

    #[test]
    fn modifier_needs_a_shared_require_prefix() {
        let src = "function a(x) { require(msg.sender == stor_owner); stor_1 = x; }
function b(y) { require(msg.sender == stor_owner); stor_2 = y; }
function c(z) { require(z > 0); stor_3 = z; }";
        let rows = |f: &str| bundle(src, OptimizationTarget::boundary("t", f)).cot.iter().map(|s| s.row).collect::<Vec<_>>();
        assert!(rows("a").contains(&RowKind::Modifier));
        assert!(!rows("c").contains(&RowKind::Modifier));
    }

    #[test]
    fn role_alternative_is_selected() {
        let b = bundle(FIG_TYPE_CHAIN, OptimizationTarget::variable("t", Some("setStorage"), "varg2"));
        let s = b.cot.iter().find(|s| s.row == RowKind::VarToExpr);
        if let Some(s) = s {
            assert!(!s.text.contains(ROLE_ALTERNATIVES), "{}", s.text);
        }
        for s in &b.cot {
            for p in ["[NAME]", "[STATEMENT]", "[TYPE]", "[USAGES]"] {
                assert!(!s.text.contains(p), "{}", s.text);
            }
        }
    }

    #[test]
    fn budget_drops_farthest_sentences_first() {
        let unit = parse_unit("t", FIG_TYPE_CHAIN);
        let a = analyze(&unit, BuiltinTable::shipped()).unwrap();
        let t = OptimizationTarget::variable("t", None, "uintStorage");
        let full = build_bundle(&t, &unit, &a, TemplateSet::shipped(), DEFAULT_TOKEN_BUDGET).unwrap();
        assert_eq!(full.truncated, 0);
        let budget = full.estimated_tokens() - 20;
        let cut = build_bundle(&t, &unit, &a, TemplateSet::shipped(), budget).unwrap();
        assert!(cut.truncated > 0 && cut.estimated_tokens() <= budget);
        assert_eq!(cut.context, full.context);
        let max_kept = cut.cot.iter().map(|s| s.hop).max().unwrap_or(0);
        let max_full = full.cot.iter().map(|s| s.hop).max().unwrap();
        assert!(max_kept <= max_full);
        // A tiny budget empties the sentences but keeps the code.
        let tiny = build_bundle(&t, &unit, &a, TemplateSet::shipped(), 1).unwrap();
        assert!(tiny.cot.is_empty() && tiny.context == full.context);
    }

    #[test]
    fn bundle_is_deterministic() {
        let t = OptimizationTarget::attribute("t", "uintStorage");
        assert_eq!(bundle(FIG_TYPE_CHAIN, t.clone()).to_text(), bundle(FIG_TYPE_CHAIN, t.clone()).to_text());
        assert_eq!(bundle(FIG_TYPE_CHAIN, t.clone()).to_json(), bundle(FIG_TYPE_CHAIN, t).to_json());
    }

    #[test]
    fn targets_are_enumerated() {
        let unit = parse_unit("fig", FIG_TYPE_CHAIN);
        let ids: Vec<String> = enumerate_targets(&unit).iter().map(|t| t.id()).collect();
        assert!(ids.contains(&"fig/type:uintStorage".to_string()));
        assert!(ids.contains(&"fig/type:setStorage::v0".to_string()));
        assert!(ids.contains(&"fig/attribute:uintStorage".to_string()));
        assert!(ids.contains(&"fig/boundary:_getTokenKey".to_string()));
        assert!(!ids.iter().any(|i| i.ends_with("::ret")));
    }
}
