use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::frontend::{IrModule, IrOp, Pos};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CallSite {
    pub caller: String,
    pub callee: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CallGraph {
    /// Function names in module order.
    pub nodes: Vec<String>,
    pub edges: Vec<CallSite>,
    /// Callees that are not functions of the module (builtins, methods, casts).
    pub externals: BTreeSet<String>,
    pub external_sites: Vec<CallSite>,
}

impl CallGraph {
    pub fn contains(&self, f: &str) -> bool {
        self.nodes.iter().any(|n| n == f)
    }

    /// Distinct callees of `f` in first-call order.
    pub fn callees(&self, f: &str) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in self.edges.iter().filter(|e| e.caller == f) {
            if !out.contains(&e.callee.as_str()) {
                out.push(&e.callee);
            }
        }
        out
    }

    /// Distinct callers of `f` in module order.
    pub fn callers(&self, f: &str) -> Vec<&str> {
        let set: BTreeSet<&str> = self.edges.iter().filter(|e| e.callee == f).map(|e| e.caller.as_str()).collect();
        self.nodes.iter().map(String::as_str).filter(|n| set.contains(n)).collect()
    }

    /// Call count per callee, used for ordering and diagnostics.
    pub fn fan_in(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for e in &self.edges {
            *m.entry(e.callee.as_str()).or_default() += 1;
        }
        m
    }
}

pub fn call_graph(module: &IrModule) -> CallGraph {
    let nodes: Vec<String> = module.functions.iter().map(|f| f.name.clone()).collect();
    let mut g = CallGraph { nodes, ..Default::default() };
    for f in &module.functions {
        for i in f.instrs() {
            if let IrOp::Call { callee, .. } = &i.op {
                let site = CallSite { caller: f.name.clone(), callee: callee.clone(), pos: i.pos };
                if g.contains(callee) {
                    g.edges.push(site);
                } else {
                    g.externals.insert(callee.clone());
                    g.external_sites.push(site);
                }
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{lower_ir, parse_unit};

    fn cg(src: &str) -> CallGraph {
        call_graph(&lower_ir(&parse_unit("t", src)).unwrap())
    }

    #[test]
    fn chain() {
        let g = cg("function f() { g(); }\nfunction g() { h(); }\nfunction h() {}");
        assert_eq!(g.callees("f"), ["g"]);
        assert_eq!(g.callees("g"), ["h"]);
        assert!(g.externals.is_empty());
    }

    #[test]
    fn builtin_goes_to_externals() {
        let g = cg("function f(a) { v0 = keccak256(a); }");
        assert!(g.edges.is_empty());
        assert!(g.externals.contains("keccak256"));
    }

    #[test]
    fn recursion_keeps_self_loop() {
        let g = cg("function f(n) { f(n - 1); }");
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].caller, g.edges[0].callee);
    }
}
