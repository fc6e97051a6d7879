//! Recursive-descent parser for decompiler pseudocode.
//!
//! Functions whose bodies fail to parse are dropped and recorded as
//! [`SkipReport`]s; everything else in the unit survives.

use std::collections::HashSet;
use std::fmt;

use super::ast::*;
use super::lexer::{tokenize, Keyword, Pos, Punct, Token, TokenKind};
use super::FrontendError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub pos: Pos,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at {}: expected {}, found {}", self.pos, self.expected.join(" | "), self.found)
    }
}

impl std::error::Error for SyntaxError {}

type PResult<T> = Result<T, SyntaxError>;

/// Tokenizes and parses `text` into a unit, recovering from bad functions.
pub fn parse_unit(file_id: &str, text: &str) -> SourceUnit {
    parse_tokens(file_id, text, &tokenize(text))
}

/// Like [`parse_unit`] but any skipped function is a hard error.
pub fn parse_unit_strict(file_id: &str, text: &str) -> Result<SourceUnit, FrontendError> {
    let unit = parse_unit(file_id, text);
    match unit.skipped.first() {
        Some(skip) => Err(FrontendError::Skipped(skip.clone())),
        None => Ok(unit),
    }
}

/// Parses a standalone type such as `mapping(bytes32=>uint256)`.
pub fn parse_type_text(text: &str) -> Option<TypeExpr> {
    let toks = tokenize(text);
    let mut parser = Parser { toks: &toks, idx: 0 };
    let ty = parser.type_expr().ok()?;
    parser.at_end().then_some(ty)
}

pub fn parse_tokens(file_id: &str, text: &str, tokens: &[Token]) -> SourceUnit {
    let mut parser = Parser { toks: tokens, idx: 0 };
    let mut unit = SourceUnit {
        file_id: file_id.to_string(),
        text: text.to_string(),
        storage: Vec::new(),
        functions: Vec::new(),
        skipped: Vec::new(),
    };
    let mut seen: HashSet<String> = HashSet::new();

    while !parser.at_end() {
        let start = parser.idx;
        let start_pos = parser.pos();
        if parser.at_keyword(Keyword::Function) {
            match parser.function() {
                Ok(f) => {
                    if seen.insert(f.name.clone()) {
                        unit.functions.push(f);
                    } else {
                        unit.skipped.push(SkipReport {
                            function: Some(f.name.clone()),
                            pos: f.pos,
                            reason: format!("duplicate function name `{}`", f.name),
                        });
                    }
                }
                Err(err) => {
                    let name = match tokens.get(start + 1).map(|t| &t.kind) {
                        Some(TokenKind::Ident(n)) => Some(n.clone()),
                        _ => None,
                    };
                    parser.idx = skip_function(tokens, start);
                    unit.skipped.push(SkipReport { function: name, pos: err.pos, reason: err.to_string() });
                }
            }
            continue;
        }
        match parser.storage_decl() {
            Ok(decl) => {
                if unit.storage.iter().any(|s| s.name == decl.name) {
                    unit.skipped.push(SkipReport {
                        function: None,
                        pos: decl.pos,
                        reason: format!("duplicate storage declaration `{}`", decl.name),
                    });
                } else {
                    unit.storage.push(decl);
                }
            }
            Err(err) => {
                parser.idx = start + 1;
                while !parser.at_end() && !parser.at_keyword(Keyword::Function) {
                    parser.idx += 1;
                }
                unit.skipped.push(SkipReport { function: None, pos: start_pos, reason: err.to_string() });
            }
        }
    }
    classify_storage_writes(&mut unit);
    unit
}

/// Marks assignments rooted at storage variables as storage writes.
pub(crate) fn classify_storage_writes(unit: &mut SourceUnit) {
    let declared: HashSet<String> = unit.storage.iter().map(|s| s.name.clone()).collect();
    for f in &mut unit.functions {
        let locals: HashSet<String> = {
            let mut set: HashSet<String> = f.params.iter().map(|p| p.name.clone()).collect();
            for s in &f.body {
                s.walk(&mut |st| {
                    if let StmtKind::VarDecl { name, .. } = &st.kind {
                        set.insert(name.clone());
                    }
                });
            }
            set
        };
        let is_storage = |name: &str| !locals.contains(name) && (declared.contains(name) || is_storage_name(name));
        for s in &mut f.body {
            s.walk_mut(&mut |st| {
                let kind = std::mem::replace(&mut st.kind, StmtKind::Return(None));
                st.kind = match kind {
                    StmtKind::Assign { target, op, value } | StmtKind::StorageWrite { target, op, value } => {
                        if target.base_var().is_some_and(&is_storage) {
                            StmtKind::StorageWrite { target, op, value }
                        } else {
                            StmtKind::Assign { target, op, value }
                        }
                    }
                    other => other,
                };
            });
        }
    }
}

/// Index just past the body of the function starting at `start`.
fn skip_function(tokens: &[Token], start: usize) -> usize {
    let mut i = start + 1;
    while i < tokens.len() && tokens[i].kind != TokenKind::Punct(Punct::LBrace) {
        if tokens[i].kind == TokenKind::Keyword(Keyword::Function) {
            return i;
        }
        i += 1;
    }
    let mut depth = 0usize;
    while i < tokens.len() {
        match tokens[i].kind {
            TokenKind::Punct(Punct::LBrace) => depth += 1,
            TokenKind::Punct(Punct::RBrace) => {
                depth -= 1;
                if depth == 0 {
                    return i + 1;
                }
            }
            _ => {}
        }
        i += 1;
    }
    tokens.len()
}

struct Parser<'a> {
    toks: &'a [Token],
    idx: usize,
}

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.idx >= self.toks.len()
    }

    fn peek(&self) -> Option<&'a TokenKind> {
        self.toks.get(self.idx).map(|t| &t.kind)
    }

    fn peek_at(&self, n: usize) -> Option<&'a TokenKind> {
        self.toks.get(self.idx + n).map(|t| &t.kind)
    }

    fn pos(&self) -> Pos {
        self.toks
            .get(self.idx)
            .or_else(|| self.toks.last())
            .map(|t| t.pos)
            .unwrap_or_default()
    }

    fn prev_line(&self) -> u32 {
        self.idx.checked_sub(1).and_then(|i| self.toks.get(i)).map(|t| t.pos.line).unwrap_or(1)
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(SyntaxError {
            pos: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().map(|k| format!("`{k}`")).unwrap_or_else(|| "end of input".into()),
        })
    }

    fn at_punct(&self, p: Punct) -> bool {
        self.peek() == Some(&TokenKind::Punct(p))
    }

    fn at_keyword(&self, k: Keyword) -> bool {
        self.peek() == Some(&TokenKind::Keyword(k))
    }

    fn eat_punct(&mut self, p: Punct) -> bool {
        if self.at_punct(p) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: Punct) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(&[p.as_str()])
        }
    }

    fn expect_keyword(&mut self, k: Keyword) -> PResult<()> {
        if self.at_keyword(k) {
            self.idx += 1;
            Ok(())
        } else {
            self.error(&[k.as_str()])
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(TokenKind::Ident(name)) => {
                self.idx += 1;
                Ok(name.clone())
            }
            _ => self.error(&["identifier"]),
        }
    }

    /// Identifier-like word after `.`; keywords and type names are allowed.
    fn member_name(&mut self) -> PResult<String> {
        let name = match self.peek() {
            Some(TokenKind::Ident(s)) | Some(TokenKind::Type(s)) => s.clone(),
            Some(TokenKind::Keyword(k)) => k.as_str().to_string(),
            _ => return self.error(&["member name"]),
        };
        self.idx += 1;
        Ok(name)
    }

    fn storage_decl(&mut self) -> PResult<StorageDecl> {
        let pos = self.pos();
        let ty = self.type_expr()?;
        let _ = self.location();
        // Visibility words such as `public` are accepted and dropped.
        while matches!((self.peek(), self.peek_at(1)), (Some(TokenKind::Ident(_)), Some(TokenKind::Ident(_)))) {
            self.idx += 1;
        }
        let name = self.ident()?;
        self.expect_punct(Punct::Semi)?;
        let attribute = match self.peek() {
            Some(TokenKind::Annotation(label)) => {
                self.idx += 1;
                Some(label.clone())
            }
            _ => None,
        };
        Ok(StorageDecl { ty, name, attribute, pos })
    }

    fn location(&mut self) -> Option<String> {
        for kw in [Keyword::Memory, Keyword::Storage, Keyword::Calldata] {
            if self.at_keyword(kw) {
                self.idx += 1;
                return Some(kw.as_str().to_string());
            }
        }
        None
    }

    fn type_expr(&mut self) -> PResult<TypeExpr> {
        let mut ty = match self.peek() {
            Some(TokenKind::Type(name)) => {
                self.idx += 1;
                if name == "address" && self.at_keyword(Keyword::Payable) {
                    self.idx += 1;
                    TypeExpr::AddressPayable
                } else {
                    TypeExpr::Named(name.clone())
                }
            }
            Some(TokenKind::Ident(name)) => {
                self.idx += 1;
                TypeExpr::Named(name.clone())
            }
            Some(TokenKind::Keyword(Keyword::Mapping)) => {
                self.idx += 1;
                self.expect_punct(Punct::LParen)?;
                let key = self.type_expr()?;
                self.expect_punct(Punct::Arrow)?;
                let value = self.type_expr()?;
                self.expect_punct(Punct::RParen)?;
                TypeExpr::Mapping(Box::new(key), Box::new(value))
            }
            _ => return self.error(&["type"]),
        };
        while self.at_punct(Punct::LBracket) {
            self.idx += 1;
            let len = match self.peek() {
                Some(TokenKind::Int(n)) => {
                    self.idx += 1;
                    Some(n.clone())
                }
                _ => None,
            };
            self.expect_punct(Punct::RBracket)?;
            ty = TypeExpr::Array(Box::new(ty), len);
        }
        Ok(ty)
    }

    fn function(&mut self) -> PResult<FunctionDecl> {
        let pos = self.pos();
        self.expect_keyword(Keyword::Function)?;
        let name = self.ident()?;
        self.expect_punct(Punct::LParen)?;
        let mut params = Vec::new();
        if !self.at_punct(Punct::RParen) {
            loop {
                params.push(self.param()?);
                if !self.eat_punct(Punct::Comma) {
                    break;
                }
            }
        }
        self.expect_punct(Punct::RParen)?;
        let mut modifiers = Vec::new();
        let mut returns = Vec::new();
        loop {
            match self.peek() {
                Some(TokenKind::Ident(word)) => {
                    modifiers.push(word.clone());
                    self.idx += 1;
                }
                Some(TokenKind::Keyword(Keyword::Payable)) => {
                    modifiers.push("payable".into());
                    self.idx += 1;
                }
                Some(TokenKind::Keyword(Keyword::Returns)) => {
                    self.idx += 1;
                    self.expect_punct(Punct::LParen)?;
                    loop {
                        returns.push(self.type_expr()?);
                        let _ = self.location();
                        // Named return values are accepted and dropped.
                        if let Some(TokenKind::Ident(_)) = self.peek() {
                            self.idx += 1;
                        }
                        if !self.eat_punct(Punct::Comma) {
                            break;
                        }
                    }
                    self.expect_punct(Punct::RParen)?;
                }
                _ => break,
            }
        }
        let body = self.block()?;
        let end_line = self.prev_line();
        let mut f = FunctionDecl {
            name,
            params,
            modifiers,
            returns,
            body,
            span: Span { start_line: pos.line, end_line },
            pos,
        };
        f.renumber();
        Ok(f)
    }

    fn param(&mut self) -> PResult<Param> {
        if let Some(TokenKind::Ident(name)) = self.peek() {
            if matches!(self.peek_at(1), Some(TokenKind::Punct(Punct::Comma)) | Some(TokenKind::Punct(Punct::RParen))) {
                self.idx += 1;
                return Ok(Param { ty: None, location: None, name: name.clone() });
            }
        }
        let ty = self.type_expr()?;
        let location = self.location();
        let name = self.ident()?;
        Ok(Param { ty: Some(ty), location, name })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct(Punct::LBrace)?;
        let mut stmts = Vec::new();
        while !self.at_punct(Punct::RBrace) {
            if self.at_end() {
                return self.error(&["}"]);
            }
            stmts.push(self.stmt()?);
        }
        self.idx += 1;
        Ok(stmts)
    }

    /// Block body or a single statement (for brace-less `if`/`while`).
    fn body(&mut self) -> PResult<Vec<Stmt>> {
        if self.at_punct(Punct::LBrace) {
            self.block()
        } else {
            Ok(vec![self.stmt()?])
        }
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        let kind = match self.peek() {
            Some(TokenKind::Keyword(Keyword::If)) => {
                self.idx += 1;
                self.expect_punct(Punct::LParen)?;
                let cond = self.expr()?;
                self.expect_punct(Punct::RParen)?;
                let then_body = self.body()?;
                let else_body = if self.at_keyword(Keyword::Else) {
                    self.idx += 1;
                    if self.at_keyword(Keyword::If) {
                        Some(vec![self.stmt()?])
                    } else {
                        Some(self.body()?)
                    }
                } else {
                    None
                };
                StmtKind::If { cond, then_body, else_body }
            }
            Some(TokenKind::Keyword(Keyword::While)) => {
                self.idx += 1;
                self.expect_punct(Punct::LParen)?;
                let cond = self.expr()?;
                self.expect_punct(Punct::RParen)?;
                let body = self.body()?;
                StmtKind::While { cond, body }
            }
            Some(TokenKind::Keyword(Keyword::Require)) => {
                self.idx += 1;
                self.expect_punct(Punct::LParen)?;
                let cond = self.expr()?;
                let msg = if self.eat_punct(Punct::Comma) { Some(self.expr()?) } else { None };
                self.expect_punct(Punct::RParen)?;
                self.expect_punct(Punct::Semi)?;
                StmtKind::Require(cond, msg)
            }
            Some(TokenKind::Keyword(Keyword::Return)) => {
                self.idx += 1;
                let value = if self.at_punct(Punct::Semi) { None } else { Some(self.expr()?) };
                self.expect_punct(Punct::Semi)?;
                StmtKind::Return(value)
            }
            Some(TokenKind::Keyword(Keyword::Assembly)) => {
                return Err(SyntaxError {
                    pos,
                    expected: vec!["statement".into()],
                    found: "inline assembly block".into(),
                });
            }
            _ => {
                if let Some(decl) = self.try_var_decl()? {
                    decl
                } else {
                    let target = self.expr()?;
                    let op = self.assign_op();
                    let kind = match op {
                        Some(op) => {
                            let value = self.expr()?;
                            StmtKind::Assign { target, op, value }
                        }
                        None => StmtKind::ExprStmt(target),
                    };
                    self.expect_punct(Punct::Semi)?;
                    kind
                }
            }
        };
        Ok(Stmt { kind, pos, id: 0 })
    }

    fn try_var_decl(&mut self) -> PResult<Option<StmtKind>> {
        let save = self.idx;
        let attempt = (|| -> PResult<Option<(TypeExpr, Option<String>, String)>> {
            let ty = self.type_expr()?;
            let location = self.location();
            let name = match self.peek() {
                Some(TokenKind::Ident(n)) => n.clone(),
                _ => return Ok(None),
            };
            self.idx += 1;
            if !(self.at_punct(Punct::Eq) || self.at_punct(Punct::Semi)) {
                return Ok(None);
            }
            Ok(Some((ty, location, name)))
        })();
        match attempt {
            Ok(Some((ty, location, name))) => {
                let init = if self.eat_punct(Punct::Eq) { Some(self.expr()?) } else { None };
                self.expect_punct(Punct::Semi)?;
                Ok(Some(StmtKind::VarDecl { ty, location, name, init }))
            }
            _ => {
                self.idx = save;
                Ok(None)
            }
        }
    }

    fn assign_op(&mut self) -> Option<AssignOp> {
        let op = match self.peek()? {
            TokenKind::Punct(Punct::Eq) => AssignOp::Set,
            TokenKind::Punct(Punct::PlusEq) => AssignOp::Add,
            TokenKind::Punct(Punct::MinusEq) => AssignOp::Sub,
            TokenKind::Punct(Punct::StarEq) => AssignOp::Mul,
            TokenKind::Punct(Punct::SlashEq) => AssignOp::Div,
            TokenKind::Punct(Punct::PercentEq) => AssignOp::Mod,
            TokenKind::Punct(Punct::AmpEq) => AssignOp::BitAnd,
            TokenKind::Punct(Punct::PipeEq) => AssignOp::BitOr,
            TokenKind::Punct(Punct::CaretEq) => AssignOp::BitXor,
            TokenKind::Punct(Punct::ShlEq) => AssignOp::Shl,
            TokenKind::Punct(Punct::ShrEq) => AssignOp::Shr,
            _ => return None,
        };
        self.idx += 1;
        Some(op)
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn peek_binop(&self) -> Option<BinOp> {
        Some(match self.peek()? {
            TokenKind::Punct(p) => match p {
                Punct::OrOr => BinOp::Or,
                Punct::AndAnd => BinOp::And,
                Punct::EqEq => BinOp::Eq,
                Punct::NotEq => BinOp::Ne,
                Punct::Lt => BinOp::Lt,
                Punct::Le => BinOp::Le,
                Punct::Gt => BinOp::Gt,
                Punct::Ge => BinOp::Ge,
                Punct::Pipe => BinOp::BitOr,
                Punct::Caret => BinOp::BitXor,
                Punct::Amp => BinOp::BitAnd,
                Punct::Shl => BinOp::Shl,
                Punct::Shr => BinOp::Shr,
                Punct::Plus => BinOp::Add,
                Punct::Minus => BinOp::Sub,
                Punct::Star => BinOp::Mul,
                Punct::Slash => BinOp::Div,
                Punct::Percent => BinOp::Mod,
                Punct::StarStar => BinOp::Exp,
                _ => return None,
            },
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.idx += 1;
            let next = if op.right_assoc() { prec } else { prec + 1 };
            let rhs = self.binary(next)?;
            let pos = lhs.pos;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let op = match self.peek() {
            Some(TokenKind::Punct(Punct::Bang)) => Some(UnOp::Not),
            Some(TokenKind::Punct(Punct::Minus)) => Some(UnOp::Neg),
            Some(TokenKind::Punct(Punct::Tilde)) => Some(UnOp::BitNot),
            _ => None,
        };
        if let Some(op) = op {
            self.idx += 1;
            let inner = self.unary()?;
            return Ok(Expr::new(ExprKind::Unary(op, Box::new(inner)), pos));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            let pos = e.pos;
            if self.eat_punct(Punct::LParen) {
                let args = self.expr_list(Punct::RParen)?;
                e = Expr::new(ExprKind::Call(Box::new(e), args), pos);
            } else if self.eat_punct(Punct::LBracket) {
                let lo = if self.at_punct(Punct::Colon) { None } else { Some(Box::new(self.expr()?)) };
                if self.eat_punct(Punct::Colon) {
                    let hi = if self.at_punct(Punct::RBracket) { None } else { Some(Box::new(self.expr()?)) };
                    self.expect_punct(Punct::RBracket)?;
                    e = Expr::new(ExprKind::SliceRange(Box::new(e), lo, hi), pos);
                } else {
                    self.expect_punct(Punct::RBracket)?;
                    match lo {
                        Some(idx) => e = Expr::new(ExprKind::Index(Box::new(e), idx), pos),
                        None => return self.error(&["index expression"]),
                    }
                }
            } else if self.eat_punct(Punct::Dot) {
                let name = self.member_name()?;
                e = Expr::new(ExprKind::Member(Box::new(e), name), pos);
            } else {
                return Ok(e);
            }
        }
    }

    fn expr_list(&mut self, close: Punct) -> PResult<Vec<Expr>> {
        let mut items = Vec::new();
        if self.eat_punct(close) {
            return Ok(items);
        }
        loop {
            items.push(self.expr()?);
            if self.eat_punct(close) {
                return Ok(items);
            }
            if !self.eat_punct(Punct::Comma) {
                return self.error(&[",", close.as_str()]);
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let kind = match self.peek() {
            Some(TokenKind::Ident(name)) => {
                self.idx += 1;
                ExprKind::Var(name.clone())
            }
            Some(TokenKind::Int(raw)) => {
                self.idx += 1;
                ExprKind::Const(Literal::Number(raw.clone()))
            }
            Some(TokenKind::Str(s)) => {
                self.idx += 1;
                ExprKind::Const(Literal::Str(s.clone()))
            }
            Some(TokenKind::Bool(b)) => {
                self.idx += 1;
                ExprKind::Const(Literal::Bool(*b))
            }
            Some(TokenKind::Type(_)) => {
                let ty = self.type_expr()?;
                if !self.at_punct(Punct::LParen) {
                    return self.error(&["("]);
                }
                ExprKind::TypeName(ty)
            }
            Some(TokenKind::Keyword(Keyword::Payable)) => {
                self.idx += 1;
                if !self.at_punct(Punct::LParen) {
                    return self.error(&["("]);
                }
                ExprKind::TypeName(TypeExpr::AddressPayable)
            }
            Some(TokenKind::Punct(Punct::LParen)) => {
                self.idx += 1;
                let mut items = self.expr_list(Punct::RParen)?;
                if items.len() == 1 {
                    let mut inner = items.pop().unwrap();
                    inner.pos = pos;
                    return Ok(inner);
                }
                ExprKind::Tuple(items)
            }
            Some(TokenKind::Punct(Punct::LBracket)) => {
                self.idx += 1;
                ExprKind::ArrayLit(self.expr_list(Punct::RBracket)?)
            }
            _ => return self.error(&["expression"]),
        };
        Ok(Expr::new(kind, pos))
    }
}
