use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{PromptError, TargetKind};
use crate::depgraph::EdgeShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    TypeDependency,
    StateDependency,
    ControlFlowDependency,
}

/// Which template row a sentence is produced from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RowKind {
    VarToVar,
    TypeToExpr,
    TypeToVar,
    ExprToVar,
    VarToExpr,
    StateToState,
    StateToExpr,
    ExprToState,
    CallSite,
    Modifier,
    ReturnValue,
    VariableDeclaration,
}

impl RowKind {
    pub const ALL: [RowKind; 12] = [
        RowKind::VarToVar,
        RowKind::TypeToExpr,
        RowKind::TypeToVar,
        RowKind::ExprToVar,
        RowKind::VarToExpr,
        RowKind::StateToState,
        RowKind::StateToExpr,
        RowKind::ExprToState,
        RowKind::CallSite,
        RowKind::Modifier,
        RowKind::ReturnValue,
        RowKind::VariableDeclaration,
    ];

    /// Row for a DG edge shape. Def-use edges have no row of their own.
    pub fn for_shape(shape: EdgeShape) -> Option<RowKind> {
        Some(match shape {
            EdgeShape::VarToVar => RowKind::VarToVar,
            EdgeShape::TypeToExpr => RowKind::TypeToExpr,
            EdgeShape::TypeToVar => RowKind::TypeToVar,
            EdgeShape::ExprToVar => RowKind::ExprToVar,
            EdgeShape::VarToExpr => RowKind::VarToExpr,
            EdgeShape::StateToState => RowKind::StateToState,
            EdgeShape::StateToExpr => RowKind::StateToExpr,
            EdgeShape::ExprToState => RowKind::ExprToState,
            EdgeShape::DefUse => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Placeholder {
    Name,
    Statement,
    Type,
    Usages,
}

impl Placeholder {
    const ALL: [(Placeholder, &'static str); 4] = [
        (Placeholder::Name, "[NAME]"),
        (Placeholder::Statement, "[STATEMENT]"),
        (Placeholder::Type, "[TYPE]"),
        (Placeholder::Usages, "[USAGES]"),
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotTemplate {
    pub category: Category,
    /// Human-readable row name, e.g. `Call Site`.
    pub row: String,
    pub shape: RowKind,
    pub pattern: String,
}

impl CotTemplate {
    /// Placeholders of the pattern in order of appearance.
    pub fn placeholders(&self) -> Vec<Placeholder> {
        scan(&self.pattern).into_iter().filter_map(|p| p.right()).collect()
    }

    /// Fills placeholders in a single left-to-right pass. Each placeholder
    /// kind consumes its values in order.
    pub fn fill(&self, values: &[(Placeholder, &str)]) -> Result<String, PromptError> {
        let mut cursors: BTreeMap<Placeholder, usize> = BTreeMap::new();
        let mut out = String::with_capacity(self.pattern.len() + 32);
        for piece in scan(&self.pattern) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(p) => {
                    let n = cursors.entry(p).or_default();
                    let v = values
                        .iter()
                        .filter(|(q, _)| *q == p)
                        .nth(*n)
                        .ok_or_else(|| PromptError::Template(format!("row `{}` is missing a value for {p:?}", self.row)))?;
                    *n += 1;
                    out.push_str(v.1);
                }
            }
        }
        Ok(out)
    }
}

enum Piece<'a> {
    Text(&'a str),
    Slot(Placeholder),
}

impl Piece<'_> {
    fn right(self) -> Option<Placeholder> {
        match self {
            Piece::Slot(p) => Some(p),
            Piece::Text(_) => None,
        }
    }
}

fn scan(pattern: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = pattern;
    'outer: while !rest.is_empty() {
        if let Some(i) = rest.find('[') {
            for (p, tok) in Placeholder::ALL {
                if rest[i..].starts_with(tok) {
                    if i > 0 {
                        out.push(Piece::Text(&rest[..i]));
                    }
                    out.push(Piece::Slot(p));
                    rest = &rest[i + tok.len()..];
                    continue 'outer;
                }
            }
            out.push(Piece::Text(&rest[..=i]));
            rest = &rest[i + 1..];
        } else {
            out.push(Piece::Text(rest));
            break;
        }
    }
    out
}

/// Template rows plus the fixed per-kind instruction and reply-format texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub version: u32,
    pub rows: Vec<CotTemplate>,
    pub instructions: BTreeMap<TargetKind, String>,
    pub output_format: BTreeMap<TargetKind, String>,
}

const SHIPPED: &str = include_str!("../../data/prompts.json");

impl TemplateSet {
    pub fn from_json(text: &str) -> Result<Self, PromptError> {
        let set: TemplateSet = serde_json::from_str(text).map_err(|e| PromptError::Template(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn shipped() -> &'static TemplateSet {
        static SET: OnceLock<TemplateSet> = OnceLock::new();
        SET.get_or_init(|| TemplateSet::from_json(SHIPPED).expect("shipped templates are valid"))
    }

    fn validate(&self) -> Result<(), PromptError> {
        for kind in RowKind::ALL {
            let n = self.rows.iter().filter(|r| r.shape == kind).count();
            if n > 1 {
                return Err(PromptError::Template(format!("row {kind:?} appears {n} times")));
            }
        }
        for kind in [TargetKind::VariableType, TargetKind::ContractAttribute, TargetKind::FunctionBoundary] {
            if !self.instructions.contains_key(&kind) || !self.output_format.contains_key(&kind) {
                return Err(PromptError::Template(format!("no instruction for {kind:?}")));
            }
        }
        Ok(())
    }

    pub fn row(&self, kind: RowKind) -> Option<&CotTemplate> {
        self.rows.iter().find(|r| r.shape == kind)
    }

    pub fn instruction(&self, kind: TargetKind) -> &str {
        &self.instructions[&kind]
    }

    pub fn output_format(&self, kind: TargetKind) -> &str {
        &self.output_format[&kind]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_set_has_every_row_once() {
        let set = TemplateSet::shipped();
        assert_eq!(set.rows.len(), 12);
        for kind in RowKind::ALL {
            assert!(set.row(kind).is_some(), "{kind:?}");
        }
    }

    #[test]
    fn placeholders_are_from_the_allowed_set() {
        for row in &TemplateSet::shipped().rows {
            let stripped = ["[NAME]", "[STATEMENT]", "[TYPE]", "[USAGES]"]
                .iter()
                .fold(row.pattern.clone(), |acc, p| acc.replace(p, ""));
            assert!(!stripped.contains("[N") && !stripped.contains("[S") && !stripped.contains("[T"), "{}", row.pattern);
        }
    }

    #[test]
    fn fill_is_single_pass() {
        let row = TemplateSet::shipped().row(RowKind::ExprToVar).unwrap();
        // A value that itself looks like a placeholder is not re-expanded.
        let s = row.fill(&[(Placeholder::Name, "m"), (Placeholder::Statement, "m[NAME] = 1")]).unwrap();
        assert_eq!(s, "The type of variable m depends on expression m[NAME] = 1");
    }

    #[test]
    fn missing_value_is_an_error() {
        let row = TemplateSet::shipped().row(RowKind::VarToVar).unwrap();
        assert!(row.fill(&[(Placeholder::Name, "a")]).is_err());
        assert_eq!(row.placeholders(), vec![Placeholder::Name, Placeholder::Name]);
    }

    #[test]
    fn duplicate_rows_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(SHIPPED).unwrap();
        let first = v["rows"][0].clone();
        v["rows"].as_array_mut().unwrap().push(first);
        assert!(TemplateSet::from_json(&v.to_string()).is_err());
    }
}
