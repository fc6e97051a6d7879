//! Signatures of predefined functions, environment values and members.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Deserialize;

use crate::frontend::ir::{ENV_NAMES, ENV_ROOTS, LIBRARY_ROOTS};
use crate::frontend::{render_type, Expr, ExprKind};

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Signature {
    #[serde(default)]
    pub params: Vec<String>,
    #[serde(default)]
    pub variadic: bool,
    pub returns: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct BuiltinTable {
    pub version: u32,
    pub functions: BTreeMap<String, Signature>,
    pub methods: BTreeMap<String, Signature>,
    pub values: BTreeMap<String, String>,
    pub members: BTreeMap<String, String>,
}

const DEFAULT_TABLE: &str = include_str!("../../data/builtins.json");

impl BuiltinTable {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// The table shipped with the crate.
    pub fn shipped() -> &'static BuiltinTable {
        static TABLE: OnceLock<BuiltinTable> = OnceLock::new();
        TABLE.get_or_init(|| BuiltinTable::from_json(DEFAULT_TABLE).expect("shipped builtin table is valid"))
    }

    /// Signature for a callee name as produced by [`callee_name`].
    pub fn call(&self, callee: &str) -> Option<&Signature> {
        match callee.strip_prefix('.') {
            Some(method) => self.methods.get(method),
            None => self.functions.get(callee),
        }
    }

    /// Type of an environment value expression such as `msg.sender`.
    pub fn value(&self, e: &Expr) -> Option<&str> {
        env_name(e).and_then(|n| self.values.get(&n)).map(String::as_str)
    }

    pub fn member(&self, name: &str) -> Option<&str> {
        self.members.get(name).map(String::as_str)
    }
}

/// Dotted name of an environment value (`msg.sender`, `now`).
pub fn env_name(e: &Expr) -> Option<String> {
    match &e.kind {
        ExprKind::Var(v) if ENV_NAMES.contains(&v.as_str()) => Some(v.clone()),
        ExprKind::Member(base, field) => match &base.kind {
            ExprKind::Var(root) if ENV_ROOTS.contains(&root.as_str()) => Some(format!("{root}.{field}")),
            _ => None,
        },
        _ => None,
    }
}

/// Callee naming shared with the IR: plain names, `lib.fn`, `.method`, or a
/// conversion type.
pub fn callee_name(callee: &Expr) -> Option<String> {
    match &callee.kind {
        ExprKind::Var(n) => Some(n.clone()),
        ExprKind::TypeName(ty) => Some(render_type(ty)),
        ExprKind::Member(recv, m) => match &recv.kind {
            ExprKind::Var(root) if LIBRARY_ROOTS.contains(&root.as_str()) => Some(format!("{root}.{m}")),
            _ => Some(format!(".{m}")),
        },
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::Pos;

    #[test]
    fn shipped_table_loads() {
        let t = BuiltinTable::shipped();
        assert_eq!(t.call("keccak256").unwrap().returns, "bytes32");
        assert_eq!(t.call(".send").unwrap().returns, "bool");
        assert!(t.call("abi.encodePacked").unwrap().variadic);
        assert_eq!(t.member("balance"), Some("uint256"));
    }

    #[test]
    fn env_values() {
        let p = Pos { line: 1, col: 1 };
        let e = Expr::new(ExprKind::Member(Box::new(Expr::var("msg", p)), "sender".into()), p);
        assert_eq!(BuiltinTable::shipped().value(&e), Some("address"));
        assert_eq!(BuiltinTable::shipped().value(&Expr::var("now", p)), Some("uint256"));
        assert_eq!(BuiltinTable::shipped().value(&Expr::var("x", p)), None);
    }
}
