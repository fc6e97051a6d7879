use serde::{Deserialize, Serialize};

use crate::frontend::{parse_unit, render_stmt_head, render_type, render_with_layout, FunctionDecl, SourceUnit, Stmt, StmtKind, ExprKind};

/// One structured change proposed by the model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Edit {
    /// `name` is a storage variable, or `fn::var` for a local, parameter or
    /// `fn::ret`. A bare local name is resolved against the target scope.
    Retype {
        name: String,
        #[serde(rename = "type")]
        ty: String,
    },
    Attribute { name: String, label: String },
    /// Lines refer to the canonical rendering of the unit.
    Split { host: String, new_name: String, start_line: u32, end_line: u32 },
    Rename { old: String, new: String },
}

impl Edit {
    /// Whether the edit changes executable code.
    pub fn is_executable(&self) -> bool {
        !matches!(self, Edit::Attribute { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EditSet {
    pub edits: Vec<Edit>,
}

impl EditSet {
    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Only a fenced JSON edit list is accepted.
    Strict,
    /// Falls back to diffing a fenced code block against the original.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseNote {
    MalformedReply(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplySource {
    Json,
    CodeDiff,
    Nothing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedReply {
    pub edits: EditSet,
    pub source: ReplySource,
    pub note: Option<ParseNote>,
}

impl ParsedReply {
    fn malformed(reason: impl Into<String>) -> Self {
        ParsedReply { edits: EditSet::default(), source: ReplySource::Nothing, note: Some(ParseNote::MalformedReply(reason.into())) }
    }

    pub fn is_malformed(&self) -> bool {
        self.note.is_some()
    }
}

struct Fence<'a> {
    lang: &'a str,
    body: String,
}

fn fences(text: &str) -> Vec<Fence<'_>> {
    let mut out = Vec::new();
    let mut open: Option<(&str, Vec<&str>)> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        match (&mut open, trimmed.strip_prefix("```")) {
            (None, Some(lang)) => open = Some((lang.trim(), Vec::new())),
            (Some(_), Some(_)) => {
                let (lang, lines) = open.take().expect("open fence");
                out.push(Fence { lang, body: lines.join("\n") });
            }
            (Some((_, lines)), None) => lines.push(line),
            (None, None) => {}
        }
    }
    out
}

fn json_edits(body: &str) -> Result<Vec<Edit>, String> {
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let list = match value {
        serde_json::Value::Array(_) => value,
        obj @ serde_json::Value::Object(_) => serde_json::Value::Array(vec![obj]),
        _ => return Err("expected a list of edits".into()),
    };
    serde_json::from_value(list).map_err(|e| e.to_string())
}

/// Turns a reply into edits. JSON fences win over code fences; replies with
/// neither yield a malformed-reply note and no edits.
pub fn parse_edits(text: &str, original: &SourceUnit, mode: ParseMode) -> ParsedReply {
    let blocks = fences(text);
    for b in &blocks {
        let looks_json = b.lang.eq_ignore_ascii_case("json") || b.body.trim_start().starts_with('[');
        if looks_json {
            return match json_edits(&b.body) {
                Ok(edits) => ParsedReply { edits: EditSet { edits }, source: ReplySource::Json, note: None },
                Err(e) => ParsedReply::malformed(format!("invalid edit list: {e}")),
            };
        }
    }
    if mode == ParseMode::Strict {
        return ParsedReply::malformed("no fenced JSON edit list");
    }
    let Some(code) = blocks.iter().find(|b| b.body.contains("function") || b.body.contains(';')) else {
        return ParsedReply::malformed("no fenced JSON edit list or code block");
    };
    let rewritten = parse_unit(&original.file_id, &code.body);
    if !rewritten.skipped.is_empty() || (rewritten.functions.is_empty() && rewritten.storage.is_empty()) {
        return ParsedReply::malformed("code block does not parse");
    }
    ParsedReply { edits: EditSet { edits: diff_units(original, &rewritten) }, source: ReplySource::CodeDiff, note: None }
}

fn decls(f: &FunctionDecl) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for s in &f.body {
        s.walk(&mut |st| {
            if let StmtKind::VarDecl { ty, name, .. } = &st.kind {
                out.push((name.clone(), render_type(ty)));
            }
        });
    }
    out
}

fn assigned_locals(f: &FunctionDecl) -> Vec<String> {
    let mut out = Vec::new();
    for s in &f.body {
        s.walk(&mut |st| {
            if let StmtKind::Assign { target, .. } = &st.kind {
                if let ExprKind::Var(v) = &target.kind {
                    if !out.contains(v) {
                        out.push(v.clone());
                    }
                }
            }
        });
    }
    out
}

fn calls(f: &FunctionDecl, callee: &str) -> bool {
    let mut hit = false;
    for s in &f.body {
        s.walk(&mut |st| {
            for e in st.exprs() {
                e.walk(&mut |x| {
                    if let ExprKind::Call(c, _) = &x.kind {
                        hit |= matches!(&c.kind, ExprKind::Var(n) if n == callee);
                    }
                });
            }
        });
    }
    hit
}

fn stmt_text(s: &Stmt) -> String {
    render_stmt_head(s)
}

/// Edits that turn `original` into `rewritten`, as far as they can be named.
fn diff_units(original: &SourceUnit, rewritten: &SourceUnit) -> Vec<Edit> {
    let mut edits = Vec::new();
    for d in &original.storage {
        if let Some(r) = rewritten.storage_decl(&d.name) {
            if r.ty != d.ty {
                edits.push(Edit::Retype { name: d.name.clone(), ty: render_type(&r.ty) });
            }
            if let (Some(label), true) = (&r.attribute, r.attribute != d.attribute) {
                edits.push(Edit::Attribute { name: d.name.clone(), label: label.clone() });
            }
        }
    }
    for f in &original.functions {
        let Some(g) = rewritten.function(&f.name) else { continue };
        for (p, q) in f.params.iter().zip(&g.params) {
            if p.name != q.name {
                edits.push(Edit::Rename { old: format!("{}::{}", f.name, p.name), new: q.name.clone() });
            }
            if let Some(t) = &q.ty {
                if p.ty.as_ref() != Some(t) {
                    edits.push(Edit::Retype { name: format!("{}::{}", f.name, q.name), ty: render_type(t) });
                }
            }
        }
        if let [one] = g.returns.as_slice() {
            if f.returns.first() != Some(one) {
                edits.push(Edit::Retype { name: format!("{}::ret", f.name), ty: render_type(one) });
            }
        }
        let before = decls(f);
        let undeclared = assigned_locals(f);
        for (name, ty) in decls(g) {
            let changed = match before.iter().find(|(n, _)| *n == name) {
                Some((_, old)) => *old != ty,
                None => undeclared.contains(&name),
            };
            if changed {
                edits.push(Edit::Retype { name: format!("{}::{name}", f.name), ty });
            }
        }
    }
    let (_, layout) = render_with_layout(original);
    for g in rewritten.functions.iter().filter(|g| original.function(&g.name).is_none()) {
        let Some(host) = original.functions.iter().find(|f| rewritten.function(&f.name).is_some_and(|h| calls(h, &g.name))) else {
            continue;
        };
        let want: Vec<String> = g.body.iter().map(stmt_text).collect();
        if want.is_empty() {
            continue;
        }
        let have: Vec<String> = host.body.iter().map(stmt_text).collect();
        if let Some(i) = (0..have.len()).find(|&i| have[i..].starts_with(&want)) {
            let first = &host.body[i];
            let last = &host.body[i + want.len() - 1];
            let (Some(a), Some(b)) = (layout.stmts.get(&(host.name.clone(), first.id)), layout.stmts.get(&(host.name.clone(), last.id)))
            else {
                continue;
            };
            edits.push(Edit::Split { host: host.name.clone(), new_name: g.name.clone(), start_line: a.start_line, end_line: b.end_line });
        }
    }
    edits
}
