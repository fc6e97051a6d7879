use std::collections::BTreeSet;
use std::fmt::Write;

use serde::Serialize;

use super::cfg::{ControlFlowGraph, InstrRef};
use crate::frontend::{IrInstr, IrOp};

/// Data-flow name of a storage slot's pseudo-variable.
pub fn storage_key(slot: &str) -> String {
    format!("@{slot}")
}

pub fn is_storage_key(var: &str) -> bool {
    var.starts_with('@')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Def {
    pub var: String,
    /// Strong definitions kill earlier definitions of the same variable.
    pub strong: bool,
}

pub fn defs(i: &IrInstr) -> Vec<Def> {
    match &i.op {
        IrOp::StoreStorage { slot, keys, .. } => vec![Def { var: storage_key(slot), strong: keys.is_empty() }],
        IrOp::StoreIndex { .. } => i.def().map(|var| Def { var, strong: false }).into_iter().collect(),
        _ => i.def().map(|var| Def { var, strong: true }).into_iter().collect(),
    }
}

pub fn uses(i: &IrInstr) -> Vec<String> {
    let mut out = i.uses();
    if let IrOp::LoadStorage { slot, .. } = &i.op {
        out.push(storage_key(slot));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct DfgEdge {
    pub def: InstrRef,
    #[serde(rename = "use")]
    pub use_site: InstrRef,
    pub var: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DataFlowGraph {
    pub edges: Vec<DfgEdge>,
}

impl DataFlowGraph {
    pub fn export(&self, cfg: &ControlFlowGraph) -> String {
        let name = |r: InstrRef| format!("{}:{}", cfg.blocks[r.block].label, r.index);
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{} -> {} [{}]", name(e.def), name(e.use_site), e.var);
        }
        out
    }
}

type Facts = BTreeSet<(String, InstrRef)>;

fn transfer(set: &mut Facts, r: InstrRef, instr: &IrInstr) {
    for d in defs(instr) {
        if d.strong {
            set.retain(|(v, _)| *v != d.var);
        }
        set.insert((d.var, r));
    }
}

/// Def-use edges from an iterative reaching-definitions fixpoint.
pub fn build_dfg(cfg: &ControlFlowGraph) -> DataFlowGraph {
    let nb = cfg.blocks.len();
    let mut outs: Vec<Facts> = vec![Facts::new(); nb];
    let preds: Vec<Vec<usize>> = (0..nb).map(|b| cfg.predecessors(b).collect()).collect();
    let block_in = |outs: &[Facts], b: usize| -> Facts {
        let mut set = Facts::new();
        for &p in &preds[b] {
            set.extend(outs[p].iter().cloned());
        }
        set
    };

    let mut changed = true;
    while changed {
        changed = false;
        for b in 0..nb {
            let mut set = block_in(&outs, b);
            for (index, instr) in cfg.blocks[b].instrs.iter().enumerate() {
                transfer(&mut set, InstrRef { block: b, index }, instr);
            }
            if set != outs[b] {
                outs[b] = set;
                changed = true;
            }
        }
    }

    let mut edges = BTreeSet::new();
    for b in 0..nb {
        let mut set = block_in(&outs, b);
        for (index, instr) in cfg.blocks[b].instrs.iter().enumerate() {
            let here = InstrRef { block: b, index };
            for var in uses(instr) {
                for (v, d) in &set {
                    if *v == var {
                        edges.insert(DfgEdge { def: *d, use_site: here, var: var.clone() });
                    }
                }
            }
            transfer(&mut set, here, instr);
        }
    }
    DataFlowGraph { edges: edges.into_iter().collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowgraphs::build_cfg;
    use crate::frontend::{lower_ir, parse_unit};

    fn dfg_of(src: &str) -> (ControlFlowGraph, DataFlowGraph) {
        let unit = parse_unit("t", src);
        let cfg = build_cfg(&lower_ir(&unit).unwrap().functions[0]);
        let dfg = build_dfg(&cfg);
        (cfg, dfg)
    }

    fn edges_for<'a>(dfg: &'a DataFlowGraph, var: &str) -> Vec<&'a DfgEdge> {
        dfg.edges.iter().filter(|e| e.var == var).collect()
    }

    #[test]
    fn one_def_two_uses() {
        let (_, dfg) = dfg_of("function f() { v0 = 1; a = v0; b = v0; }");
        assert_eq!(edges_for(&dfg, "v0").len(), 2);
    }

    #[test]
    fn both_branch_defs_reach_join() {
        // Paths entry->L0->L2 and entry->L1->L2 each carry one definition of x.
        let (cfg, dfg) = dfg_of("function f(c) { if (c) { x = 1; } else { x = 2; } return x; }");
        let into_ret: Vec<_> = edges_for(&dfg, "x").into_iter().filter(|e| cfg.instr(e.use_site).opcode() == "ret").collect();
        assert_eq!(into_ret.len(), 2);
        assert_ne!(into_ret[0].def.block, into_ret[1].def.block);
    }

    #[test]
    fn storage_write_then_read() {
        let (_, dfg) = dfg_of("function f(a) { stor_0 = a; b = stor_0; }");
        assert_eq!(edges_for(&dfg, "@stor_0").len(), 1);
    }

    #[test]
    fn strong_write_kills_weak_write_does_not() {
        let (_, dfg) = dfg_of("function f(a) { stor_0 = a; stor_0 = 2; b = stor_0; }");
        assert_eq!(edges_for(&dfg, "@stor_0").len(), 1);
        let (_, dfg) = dfg_of("mapping(uint256=>uint256) m;\nfunction f(a) { m[a] = 1; m[2] = 3; b = m[a]; }");
        assert_eq!(edges_for(&dfg, "@m").len(), 2);
    }

    #[test]
    fn loop_carried_definition() {
        let (_, dfg) = dfg_of("function f(n) { i = 0; while (i < n) { i = i + 1; } return i; }");
        let defs: BTreeSet<_> = edges_for(&dfg, "i").iter().map(|e| e.def).collect();
        assert_eq!(defs.len(), 2);
    }
}
