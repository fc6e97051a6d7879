//! Canonical pretty-printer: one statement per line, four-space indents.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::ast::*;
use super::lexer::escape_str;

pub fn render_type(ty: &TypeExpr) -> String {
    match ty {
        TypeExpr::Named(n) => n.clone(),
        TypeExpr::AddressPayable => "address payable".into(),
        TypeExpr::Mapping(k, v) => format!("mapping({}=>{})", render_type(k), render_type(v)),
        TypeExpr::Array(elem, Some(len)) => format!("{}[{}]", render_type(elem), len),
        TypeExpr::Array(elem, None) => format!("{}[]", render_type(elem)),
    }
}

const UNARY_PREC: u8 = 12;
const POSTFIX_PREC: u8 = 13;

fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary(op, _, _) => op.precedence(),
        ExprKind::Unary(..) => UNARY_PREC,
        _ => POSTFIX_PREC,
    }
}

fn wrap(e: &Expr, parens: bool) -> String {
    if parens {
        format!("({})", render_expr(e))
    } else {
        render_expr(e)
    }
}

fn list(items: &[Expr]) -> String {
    items.iter().map(render_expr).collect::<Vec<_>>().join(", ")
}

pub fn render_expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Var(v) => v.clone(),
        ExprKind::Const(Literal::Number(raw)) => raw.clone(),
        ExprKind::Const(Literal::Str(s)) => format!("\"{}\"", escape_str(s)),
        ExprKind::Const(Literal::Bool(b)) => b.to_string(),
        ExprKind::Binary(op, a, b) => {
            let p = op.precedence();
            let left_parens = prec(a) < p || (prec(a) == p && op.right_assoc());
            let right_parens = prec(b) < p || (prec(b) == p && !op.right_assoc());
            format!("{} {} {}", wrap(a, left_parens), op.symbol(), wrap(b, right_parens))
        }
        ExprKind::Unary(op, a) => format!("{}{}", op.symbol(), wrap(a, prec(a) < UNARY_PREC)),
        ExprKind::Tuple(items) => format!("({})", list(items)),
        ExprKind::ArrayLit(items) => format!("[{}]", list(items)),
        ExprKind::Call(callee, args) => format!("{}({})", wrap(callee, prec(callee) < POSTFIX_PREC), list(args)),
        ExprKind::Index(base, idx) => format!("{}[{}]", wrap(base, prec(base) < POSTFIX_PREC), render_expr(idx)),
        ExprKind::SliceRange(base, lo, hi) => format!(
            "{}[{}:{}]",
            wrap(base, prec(base) < POSTFIX_PREC),
            lo.as_deref().map(render_expr).unwrap_or_default(),
            hi.as_deref().map(render_expr).unwrap_or_default()
        ),
        ExprKind::Member(base, name) => format!("{}.{}", wrap(base, prec(base) < POSTFIX_PREC), name),
        ExprKind::TypeName(ty) => render_type(ty),
    }
}

/// Single-line rendering of a simple statement, or the header line of a
/// compound one, without the trailing newline.
pub fn render_stmt_head(s: &Stmt) -> String {
    match &s.kind {
        StmtKind::VarDecl { ty, location, name, init } => {
            let mut out = render_type(ty);
            if let Some(loc) = location {
                out.push(' ');
                out.push_str(loc);
            }
            out.push(' ');
            out.push_str(name);
            if let Some(init) = init {
                out.push_str(" = ");
                out.push_str(&render_expr(init));
            }
            out.push(';');
            out
        }
        StmtKind::Assign { target, op, value } | StmtKind::StorageWrite { target, op, value } => {
            format!("{} {} {};", render_expr(target), op.symbol(), render_expr(value))
        }
        StmtKind::ExprStmt(e) => format!("{};", render_expr(e)),
        StmtKind::Require(c, None) => format!("require({});", render_expr(c)),
        StmtKind::Require(c, Some(msg)) => format!("require({}, {});", render_expr(c), render_expr(msg)),
        StmtKind::If { cond, .. } => format!("if ({}) {{", render_expr(cond)),
        StmtKind::While { cond, .. } => format!("while ({}) {{", render_expr(cond)),
        StmtKind::Return(None) => "return;".into(),
        StmtKind::Return(Some(e)) => format!("return {};", render_expr(e)),
    }
}

/// Statement text without nested bodies, used as `[STATEMENT]` in prompts.
pub fn render_stmt_brief(s: &Stmt) -> String {
    let head = render_stmt_head(s);
    match &s.kind {
        StmtKind::If { .. } | StmtKind::While { .. } => head.trim_end_matches(" {").to_string(),
        _ => head.trim_end_matches(';').to_string(),
    }
}

pub fn render_function_header(f: &FunctionDecl) -> String {
    let params = f
        .params
        .iter()
        .map(|p| {
            let mut parts = Vec::new();
            if let Some(ty) = &p.ty {
                parts.push(render_type(ty));
            }
            if let Some(loc) = &p.location {
                parts.push(loc.clone());
            }
            parts.push(p.name.clone());
            parts.join(" ")
        })
        .collect::<Vec<_>>()
        .join(", ");
    let mut out = format!("function {}({})", f.name, params);
    for m in &f.modifiers {
        out.push(' ');
        out.push_str(m);
    }
    if !f.returns.is_empty() {
        let rets = f.returns.iter().map(render_type).collect::<Vec<_>>().join(", ");
        let _ = write!(out, " returns ({rets})");
    }
    out.push_str(" {");
    out
}

pub fn render_storage_decl(d: &StorageDecl) -> String {
    match &d.attribute {
        Some(label) => format!("{} {}; // attribute: {}", render_type(&d.ty), d.name, label),
        None => format!("{} {};", render_type(&d.ty), d.name),
    }
}

/// Line spans of the canonical rendering, 1-based and inclusive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Layout {
    pub functions: BTreeMap<String, Span>,
    /// (function, statement id) → lines occupied by the statement.
    pub stmts: BTreeMap<(String, u32), Span>,
    pub storage: BTreeMap<String, u32>,
}

struct Printer {
    out: String,
    line: u32,
}

impl Printer {
    fn line(&mut self, indent: usize, text: &str) {
        for _ in 0..indent {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
        self.line += 1;
    }

    fn stmts(&mut self, fname: &str, body: &[Stmt], indent: usize, layout: &mut Layout) {
        for s in body {
            self.stmt(fname, s, indent, layout);
        }
    }

    fn stmt(&mut self, fname: &str, s: &Stmt, indent: usize, layout: &mut Layout) {
        let start = self.line + 1;
        // `else if` chains stay flat; each nested `if` spans from its own
        // header line to the end of the outermost statement.
        let mut chained: Vec<(u32, u32)> = Vec::new();
        self.line(indent, &render_stmt_head(s));
        match &s.kind {
            StmtKind::If { then_body, else_body, .. } => {
                self.stmts(fname, then_body, indent + 1, layout);
                let mut else_body = else_body.as_ref();
                while let Some(body) = else_body {
                    if let [nested @ Stmt { kind: StmtKind::If { cond, then_body, else_body: inner }, .. }] = body.as_slice() {
                        chained.push((nested.id, self.line + 1));
                        self.line(indent, &format!("}} else if ({}) {{", render_expr(cond)));
                        self.stmts(fname, then_body, indent + 1, layout);
                        else_body = inner.as_ref();
                        continue;
                    }
                    self.line(indent, "} else {");
                    self.stmts(fname, body, indent + 1, layout);
                    break;
                }
                self.line(indent, "}");
            }
            StmtKind::While { body, .. } => {
                self.stmts(fname, body, indent + 1, layout);
                self.line(indent, "}");
            }
            _ => {}
        }
        let end = self.line;
        layout.stmts.insert((fname.to_string(), s.id), Span { start_line: start, end_line: end });
        for (id, line) in chained {
            layout.stmts.insert((fname.to_string(), id), Span { start_line: line, end_line: end });
        }
    }
}

/// Canonical text of a unit plus its line layout.
pub fn render_with_layout(unit: &SourceUnit) -> (String, Layout) {
    let mut p = Printer { out: String::new(), line: 0 };
    let mut layout = Layout::default();
    for d in &unit.storage {
        p.line(0, &render_storage_decl(d));
        layout.storage.insert(d.name.clone(), p.line);
    }
    for (i, f) in unit.functions.iter().enumerate() {
        if i > 0 || !unit.storage.is_empty() {
            p.line(0, "");
        }
        let start = p.line + 1;
        p.line(0, &render_function_header(f));
        p.stmts(&f.name, &f.body, 1, &mut layout);
        p.line(0, "}");
        layout.functions.insert(f.name.clone(), Span { start_line: start, end_line: p.line });
    }
    (p.out, layout)
}

pub fn render_unit(unit: &SourceUnit) -> String {
    render_with_layout(unit).0
}

/// Canonical text of a single function.
pub fn render_function(f: &FunctionDecl) -> String {
    let mut p = Printer { out: String::new(), line: 0 };
    let mut layout = Layout::default();
    p.line(0, &render_function_header(f));
    p.stmts(&f.name, &f.body, 1, &mut layout);
    p.line(0, "}");
    p.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_unit;

    #[test]
    fn canonical_normalizes_whitespace() {
        let unit = parse_unit("t", "function   f( uint256 a ,b )public{x=a+(b*c);if(x>1){return x;}else{x=2;}}");
        assert_eq!(
            render_unit(&unit),
            "function f(uint256 a, b) public {\n    x = a + b * c;\n    if (x > 1) {\n        return x;\n    } else {\n        x = 2;\n    }\n}\n"
        );
    }

    #[test]
    fn parens_kept_where_needed() {
        let unit = parse_unit("t", "function f() { x = (a + b) * c; y = a - (b - c); z = -(a + b); w = (a ** b) ** c; }");
        let text = render_unit(&unit);
        assert!(text.contains("x = (a + b) * c;"));
        assert!(text.contains("y = a - (b - c);"));
        assert!(text.contains("z = -(a + b);"));
        assert!(text.contains("w = (a ** b) ** c;"));
    }

    #[test]
    fn layout_tracks_statement_lines() {
        let unit = parse_unit("t", "uint256 stor_0;\nfunction f() { v0 = 1; if (v0) { v1 = 2; } return v1; }");
        let (text, layout) = render_with_layout(&unit);
        assert_eq!(text.lines().nth(2), Some("function f() {"));
        assert_eq!(layout.functions["f"], Span { start_line: 3, end_line: 9 });
        assert_eq!(layout.stmts[&("f".to_string(), 1)], Span { start_line: 5, end_line: 7 });
        assert_eq!(layout.stmts[&("f".to_string(), 3)], Span { start_line: 8, end_line: 8 });
    }

    #[test]
    fn else_if_chain_round_trips() {
        let src = "function f() {\n    if (a) {\n        x = 1;\n    } else if (b) {\n        x = 2;\n    } else {\n        x = 3;\n    }\n}\n";
        let unit = parse_unit("t", src);
        assert_eq!(render_unit(&unit), src);
    }

    #[test]
    fn mapping_type_rendering() {
        let unit = parse_unit("t", "mapping (bytes32 => uint256) m; // attribute: Asset\n");
        assert_eq!(render_unit(&unit), "mapping(bytes32=>uint256) m; // attribute: Asset\n");
    }
}
