use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write;

use serde::Serialize;

use crate::frontend::{IrFunction, IrInstr, IrOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Fallthrough,
    BranchTrue,
    BranchFalse,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Fallthrough => "fallthrough",
            EdgeKind::BranchTrue => "branch-true",
            EdgeKind::BranchFalse => "branch-false",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct InstrRef {
    pub block: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasicBlock {
    pub id: usize,
    pub label: String,
    pub instrs: Vec<IrInstr>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlFlowGraph {
    pub function: String,
    pub params: Vec<String>,
    pub blocks: Vec<BasicBlock>,
    pub edges: Vec<(usize, usize, EdgeKind)>,
    pub entry: usize,
    pub exit: usize,
    /// Blocks not reachable from the entry.
    pub dead: BTreeSet<usize>,
}

impl ControlFlowGraph {
    pub fn successors(&self, b: usize) -> impl Iterator<Item = (usize, EdgeKind)> + '_ {
        self.edges.iter().filter(move |e| e.0 == b).map(|e| (e.1, e.2))
    }

    pub fn predecessors(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.1 == b).map(|e| e.0)
    }

    pub fn instr(&self, r: InstrRef) -> &IrInstr {
        &self.blocks[r.block].instrs[r.index]
    }

    pub fn instr_refs(&self) -> impl Iterator<Item = InstrRef> + '_ {
        self.blocks
            .iter()
            .flat_map(|b| (0..b.instrs.len()).map(move |index| InstrRef { block: b.id, index }))
    }

    /// Edge list in the `a -> b [kind]` debug format.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for (a, b, k) in &self.edges {
            let _ = writeln!(out, "{} -> {} [{}]", self.blocks[*a].label, self.blocks[*b].label, k.as_str());
        }
        out
    }
}

/// Builds the CFG of a lowered function. Empty non-entry blocks are folded
/// into their fallthrough successor, and a synthetic exit block is appended.
pub fn build_cfg(f: &IrFunction) -> ControlFlowGraph {
    let n = f.blocks.len();
    let index: HashMap<&str, usize> = f.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();

    let kept: Vec<usize> = (0..n).filter(|&i| i == 0 || !f.blocks[i].instrs.is_empty()).collect();
    let mut new_id = vec![usize::MAX; n];
    for (k, &i) in kept.iter().enumerate() {
        new_id[i] = k;
    }
    let exit = kept.len();
    // Resolves a layout position to the first kept block at or after it.
    let resolve = |mut i: usize| -> usize {
        while i < n && new_id[i] == usize::MAX {
            i += 1;
        }
        if i < n {
            new_id[i]
        } else {
            exit
        }
    };
    let by_label = |l: &str| resolve(index[l]);

    let mut blocks: Vec<BasicBlock> = kept
        .iter()
        .enumerate()
        .map(|(k, &i)| BasicBlock { id: k, label: f.blocks[i].label.clone(), instrs: f.blocks[i].instrs.clone() })
        .collect();
    blocks.push(BasicBlock { id: exit, label: "exit".into(), instrs: Vec::new() });

    let mut edges = Vec::new();
    for (k, &i) in kept.iter().enumerate() {
        match f.blocks[i].instrs.last().map(|x| &x.op) {
            Some(IrOp::Branch { then_label, else_label, .. }) => {
                edges.push((k, by_label(then_label), EdgeKind::BranchTrue));
                edges.push((k, by_label(else_label), EdgeKind::BranchFalse));
            }
            Some(IrOp::Jump(l)) => edges.push((k, by_label(l), EdgeKind::Fallthrough)),
            Some(IrOp::Ret(_)) => edges.push((k, exit, EdgeKind::Fallthrough)),
            _ => edges.push((k, resolve(i + 1), EdgeKind::Fallthrough)),
        }
    }

    let mut seen = vec![false; blocks.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(b) = queue.pop_front() {
        for &(a, c, _) in &edges {
            if a == b && !seen[c] {
                seen[c] = true;
                queue.push_back(c);
            }
        }
    }
    let dead = (0..blocks.len()).filter(|&b| !seen[b] && b != exit).collect();

    ControlFlowGraph { function: f.name.clone(), params: f.params.clone(), blocks, edges, entry: 0, exit, dead }
}
