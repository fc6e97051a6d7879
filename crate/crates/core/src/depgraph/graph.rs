use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::DgError;
use crate::frontend::Pos;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Function(String),
    Global,
}

/// Identity of a DG node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKey {
    /// A variable; function return values use the name `ret`.
    Var { scope: Scope, name: String },
    /// A whole statement.
    Stmt { function: String, stmt: u32 },
    /// A predefined value or call inside a statement.
    SubExpr { function: String, stmt: u32, pos: Pos },
}

impl NodeKey {
    pub fn var(scope: Scope, name: impl Into<String>) -> Self {
        NodeKey::Var { scope, name: name.into() }
    }

    pub fn local(function: &str, name: impl Into<String>) -> Self {
        NodeKey::var(Scope::Function(function.to_string()), name)
    }

    pub fn global(name: impl Into<String>) -> Self {
        NodeKey::var(Scope::Global, name)
    }

    pub fn ret(function: &str) -> Self {
        NodeKey::local(function, RET)
    }

    pub fn stmt(function: &str, stmt: u32) -> Self {
        NodeKey::Stmt { function: function.to_string(), stmt }
    }

    /// Statement that owns an expression node.
    pub fn owner(&self) -> Option<(&str, u32)> {
        match self {
            NodeKey::Stmt { function, stmt } | NodeKey::SubExpr { function, stmt, .. } => Some((function, *stmt)),
            NodeKey::Var { .. } => None,
        }
    }
}

pub const RET: &str = "ret";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum NodeKind {
    VariableNode,
    ExpressionNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DgNode {
    pub id: usize,
    pub key: NodeKey,
    pub kind: NodeKind,
    /// Display name: the variable name, `fn::ret`, or the expression text.
    pub label: String,
    pub pos: Pos,
    /// Declared type text of a variable node, when known.
    pub ty: Option<String>,
    pub is_storage: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EdgeLabel {
    DFD,
    SD,
    TD,
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeLabel::DFD => "DFD",
            EdgeLabel::SD => "SD",
            EdgeLabel::TD => "TD",
        })
    }
}

/// Structural shape of an edge; each maps onto one dependency template row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EdgeShape {
    VarToVar,
    TypeToExpr,
    TypeToVar,
    ExprToVar,
    VarToExpr,
    StateToState,
    StateToExpr,
    ExprToState,
    DefUse,
}

impl EdgeShape {
    pub fn label(self) -> EdgeLabel {
        match self {
            EdgeShape::VarToVar | EdgeShape::TypeToExpr | EdgeShape::TypeToVar | EdgeShape::ExprToVar | EdgeShape::VarToExpr => {
                EdgeLabel::TD
            }
            EdgeShape::StateToState | EdgeShape::StateToExpr | EdgeShape::ExprToState => EdgeLabel::SD,
            EdgeShape::DefUse => EdgeLabel::DFD,
        }
    }
}

/// Position a variable occupies in the expression it flows into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Operand,
    Target,
    Key,
    Value,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Operand => "operand",
            Role::Target => "target",
            Role::Key => "key",
            Role::Value => "value",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DgEdge {
    pub src: usize,
    pub dst: usize,
    pub label: EdgeLabel,
    pub shape: EdgeShape,
    pub role: Option<Role>,
    /// Type carried by Type→* edges, or the variable of a def-use edge.
    pub annotation: Option<String>,
    /// Statement whose syntax induced the edge.
    pub site: Option<(String, u32)>,
}

/// Endpoint description used before nodes are interned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub key: NodeKey,
    pub label: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEdge {
    pub src: NodeSpec,
    pub dst: NodeSpec,
    pub shape: EdgeShape,
    pub role: Option<Role>,
    pub annotation: Option<String>,
    pub site: Option<(String, u32)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DependencyGraph {
    pub nodes: Vec<DgNode>,
    pub edges: Vec<DgEdge>,
    #[serde(skip)]
    index: HashMap<NodeKey, usize>,
    #[serde(skip)]
    out_adj: Vec<Vec<usize>>,
    #[serde(skip)]
    in_adj: Vec<Vec<usize>>,
}

impl DependencyGraph {
    pub fn node(&self, key: &NodeKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn require_node(&self, key: &NodeKey) -> Result<usize, DgError> {
        self.node(key).ok_or_else(|| DgError::UnknownNode(format!("{key:?}")))
    }

    /// Adds a node if absent and returns its id.
    pub fn intern(&mut self, key: NodeKey, label: String, pos: Pos, ty: Option<String>, is_storage: bool) -> usize {
        if let Some(&id) = self.index.get(&key) {
            if self.nodes[id].ty.is_none() {
                self.nodes[id].ty = ty;
            }
            return id;
        }
        let id = self.nodes.len();
        let kind = match key {
            NodeKey::Var { .. } => NodeKind::VariableNode,
            _ => NodeKind::ExpressionNode,
        };
        self.nodes.push(DgNode { id, key: key.clone(), kind, label, pos, ty, is_storage });
        self.index.insert(key, id);
        self.out_adj.push(Vec::new());
        self.in_adj.push(Vec::new());
        id
    }

    /// Adds an edge unless an identical one exists. Returns the edge id.
    pub fn add_edge(&mut self, edge: DgEdge) -> Result<usize, DgError> {
        if edge.src >= self.nodes.len() || edge.dst >= self.nodes.len() {
            return Err(DgError::Consistency(format!("edge {} -> {} references a missing node", edge.src, edge.dst)));
        }
        if let Some(&id) = self.out_adj[edge.src].iter().find(|&&e| self.edges[e] == edge) {
            return Ok(id);
        }
        let id = self.edges.len();
        self.out_adj[edge.src].push(id);
        self.in_adj[edge.dst].push(id);
        self.edges.push(edge);
        Ok(id)
    }

    pub fn out_edges(&self, n: usize) -> &[usize] {
        &self.out_adj[n]
    }

    pub fn in_edges(&self, n: usize) -> &[usize] {
        &self.in_adj[n]
    }

    /// Edge ids incident to `n` in either direction.
    pub fn incident(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        self.out_adj[n].iter().chain(self.in_adj[n].iter()).copied()
    }

    pub fn count(&self, label: EdgeLabel) -> usize {
        self.edges.iter().filter(|e| e.label == label).count()
    }

    /// Checks that the adjacency index matches the edge list.
    pub fn check_index(&self) -> bool {
        let mut outs = 0;
        let mut ins = 0;
        for (n, adj) in self.out_adj.iter().enumerate() {
            outs += adj.len();
            if adj.iter().any(|&e| self.edges[e].src != n) {
                return false;
            }
        }
        for (n, adj) in self.in_adj.iter().enumerate() {
            ins += adj.len();
            if adj.iter().any(|&e| self.edges[e].dst != n) {
                return false;
            }
        }
        outs == self.edges.len() && ins == self.edges.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    /// `src -> dst [LABEL shape]` lines.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&format!(
                "{} -> {} [{} {:?}]\n",
                self.nodes[e.src].label, self.nodes[e.dst].label, e.label, e.shape
            ));
        }
        out
    }

    /// Builds a graph from bare node and edge lists; used for synthetic graphs.
    pub fn from_parts(node_count: usize, edges: &[(usize, usize, EdgeLabel)]) -> Self {
        let mut g = DependencyGraph::default();
        for i in 0..node_count {
            g.intern(NodeKey::global(format!("n{i}")), format!("n{i}"), Pos::default(), None, false);
        }
        for &(src, dst, label) in edges {
            let shape = match label {
                EdgeLabel::TD => EdgeShape::VarToVar,
                EdgeLabel::SD => EdgeShape::StateToState,
                EdgeLabel::DFD => EdgeShape::DefUse,
            };
            g.add_edge(DgEdge { src, dst, label, shape, role: None, annotation: None, site: None })
                .expect("endpoints exist");
        }
        g
    }
}
