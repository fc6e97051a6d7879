pub mod depgraph;
pub mod equivalence;
pub mod evalkit;
pub mod flowgraphs;
pub mod frontend;
pub mod llm_bridge;
pub mod pipeline;
pub mod promptgen;
pub mod typecheck;
