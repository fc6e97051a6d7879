//! Control-flow graphs, reaching-definition data flow and the call graph.

pub mod callgraph;
pub mod cfg;
pub mod dfg;

pub use callgraph::{call_graph, CallGraph, CallSite};
pub use cfg::{build_cfg, BasicBlock, ControlFlowGraph, EdgeKind, InstrRef};
pub use dfg::{build_dfg, storage_key, DataFlowGraph, DfgEdge};

use rayon::prelude::*;

use crate::frontend::IrModule;

/// CFG and DFG of every function, computed in parallel, in module order.
pub fn build_all(module: &IrModule) -> Vec<(ControlFlowGraph, DataFlowGraph)> {
    module
        .functions
        .par_iter()
        .map(|f| {
            let cfg = build_cfg(f);
            let dfg = build_dfg(&cfg);
            (cfg, dfg)
        })
        .collect()
}
