//! Parsing, canonical rendering and lowering of decompiler pseudocode.

pub mod ast;
pub mod ir;
pub mod lexer;
pub mod parser;
pub mod render;

pub use ast::*;
pub use ir::{lower_function, lower_ir, IrBlock, IrFunction, IrInstr, IrModule, IrOp, IrValue};
pub use lexer::{tokenize, Pos, Token, TokenKind};
pub use parser::{parse_type_text, parse_unit, parse_unit_strict, SyntaxError};
pub use render::{render_expr, render_function, render_stmt_brief, render_stmt_head, render_type, render_unit, render_with_layout, Layout};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrontendError {
    #[error("skipped at {}: {}", .0.pos, .0.reason)]
    Skipped(SkipReport),
    #[error("cannot lower `{function}` at {pos}: {message}")]
    Lowering { function: String, pos: Pos, message: String },
}
