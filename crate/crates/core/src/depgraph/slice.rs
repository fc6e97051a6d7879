use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use super::graph::{DependencyGraph, EdgeLabel};
use super::DgError;
use crate::flowgraphs::CallGraph;

/// Default cap on call edges followed on each side of a boundary target.
pub const CHAIN_HOPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SliceGraph {
    pub target: usize,
    /// Node id → undirected BFS distance from the target.
    pub hops: BTreeMap<usize, u32>,
    /// Edge ids with both endpoints in the slice.
    pub edges: Vec<usize>,
}

impl SliceGraph {
    pub fn hop(&self, n: usize) -> Option<u32> {
        self.hops.get(&n).copied()
    }

    pub fn contains(&self, n: usize) -> bool {
        self.hops.contains_key(&n)
    }
}

/// Undirected reachability slice over all edges.
pub fn slice_variable(dg: &DependencyGraph, target: usize) -> Result<SliceGraph, DgError> {
    slice_filtered(dg, target, &[EdgeLabel::DFD, EdgeLabel::SD, EdgeLabel::TD])
}

/// Undirected reachability slice restricted to edges carrying one of `labels`.
pub fn slice_filtered(dg: &DependencyGraph, target: usize, labels: &[EdgeLabel]) -> Result<SliceGraph, DgError> {
    if target >= dg.nodes.len() {
        return Err(DgError::UnknownNode(format!("node #{target}")));
    }
    let mut hops = BTreeMap::from([(target, 0u32)]);
    let mut queue = VecDeque::from([target]);
    while let Some(n) = queue.pop_front() {
        let h = hops[&n];
        for e in dg.incident(n) {
            let edge = &dg.edges[e];
            if !labels.contains(&edge.label) {
                continue;
            }
            let other = if edge.src == n { edge.dst } else { edge.src };
            if let std::collections::btree_map::Entry::Vacant(e) = hops.entry(other) {
                e.insert(h + 1);
                queue.push_back(other);
            }
        }
    }
    let edges = dg
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| labels.contains(&e.label) && hops.contains_key(&e.src) && hops.contains_key(&e.dst))
        .map(|(i, _)| i)
        .collect();
    Ok(SliceGraph { target, hops, edges })
}

fn walk<'a>(
    next: &dyn Fn(&str) -> Vec<&'a str>,
    path: &mut Vec<&'a str>,
    depth_left: usize,
    out: &mut Vec<Vec<&'a str>>,
) {
    let last = *path.last().expect("non-empty path");
    let ext: Vec<&str> = next(last).into_iter().filter(|n| !path.contains(n)).collect();
    if ext.is_empty() || depth_left == 0 {
        out.push(path.clone());
        return;
    }
    for n in ext {
        path.push(n);
        walk(next, path, depth_left - 1, out);
        path.pop();
    }
}

/// Functions on the maximal simple call chains through `function`, with at
/// most `max_hops` call edges on either side, deduplicated in first-seen order.
pub fn slice_function_bounded(cg: &CallGraph, function: &str, max_hops: usize) -> Result<Vec<String>, DgError> {
    let Some(start) = cg.nodes.iter().find(|n| *n == function) else {
        return Err(DgError::UnknownFunction(function.to_string()));
    };
    let mut prefixes = Vec::new();
    walk(&|n| cg.callers(n), &mut vec![start.as_str()], max_hops, &mut prefixes);
    let mut suffixes = Vec::new();
    walk(&|n| cg.callees(n), &mut vec![start.as_str()], max_hops, &mut suffixes);

    let mut out: Vec<String> = Vec::new();
    for p in &prefixes {
        for s in &suffixes {
            let chain = p.iter().rev().chain(s.iter().skip(1));
            for f in chain {
                if !out.iter().any(|o| o == f) {
                    out.push(f.to_string());
                }
            }
        }
    }
    Ok(out)
}

pub fn slice_function(cg: &CallGraph, function: &str) -> Result<Vec<String>, DgError> {
    slice_function_bounded(cg, function, CHAIN_HOPS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowgraphs::CallSite;
    use crate::frontend::Pos;

    fn cg(nodes: &[&str], edges: &[(&str, &str)]) -> CallGraph {
        CallGraph {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: edges
                .iter()
                .map(|(a, b)| CallSite { caller: a.to_string(), callee: b.to_string(), pos: Pos::default() })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn isolated_node_slice() {
        let g = DependencyGraph::from_parts(3, &[(1, 2, EdgeLabel::TD)]);
        let s = slice_variable(&g, 0).unwrap();
        assert_eq!(s.hops, BTreeMap::from([(0, 0)]));
        assert!(s.edges.is_empty());
    }

    #[test]
    fn chain_hops() {
        // a=0 -> b=1 -> target=2 -> c=3
        let g = DependencyGraph::from_parts(4, &[(0, 1, EdgeLabel::TD), (1, 2, EdgeLabel::DFD), (2, 3, EdgeLabel::SD)]);
        let s = slice_variable(&g, 2).unwrap();
        assert_eq!(s.hops, BTreeMap::from([(0, 2), (1, 1), (2, 0), (3, 1)]));
    }

    #[test]
    fn label_filter_cuts_slice() {
        let g = DependencyGraph::from_parts(3, &[(0, 1, EdgeLabel::TD), (1, 2, EdgeLabel::SD)]);
        let s = slice_filtered(&g, 0, &[EdgeLabel::TD]).unwrap();
        assert_eq!(s.hops.len(), 2);
    }

    #[test]
    fn unknown_node() {
        let g = DependencyGraph::from_parts(1, &[]);
        assert!(matches!(slice_variable(&g, 5), Err(DgError::UnknownNode(_))));
    }

    #[test]
    fn function_chains() {
        assert_eq!(slice_function(&cg(&["f"], &[]), "f").unwrap(), ["f"]);
        let g = cg(&["f", "g", "h"], &[("f", "g"), ("g", "h")]);
        assert_eq!(slice_function(&g, "g").unwrap(), ["f", "g", "h"]);
        let d = cg(&["f", "g", "h", "k"], &[("f", "g"), ("f", "h"), ("g", "k"), ("h", "k")]);
        assert_eq!(slice_function(&d, "k").unwrap(), ["f", "g", "k", "h"]);
        assert!(matches!(slice_function(&d, "zz"), Err(DgError::UnknownFunction(_))));
    }

    #[test]
    fn recursion_terminates() {
        let g = cg(&["f", "g"], &[("f", "f"), ("f", "g"), ("g", "f")]);
        assert_eq!(slice_function(&g, "f").unwrap(), ["g", "f"]);
    }

    #[test]
    fn chain_cap() {
        let g = cg(&["a", "b", "c", "d", "e"], &[("a", "b"), ("b", "c"), ("c", "d"), ("d", "e")]);
        assert_eq!(slice_function_bounded(&g, "a", 2).unwrap(), ["a", "b", "c"]);
    }
}
