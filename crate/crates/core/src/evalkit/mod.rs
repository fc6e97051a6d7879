//! Scoring of refined units against hand-labelled ground truth.
//!
//! Three categories are scored: function boundaries (exact line span of the
//! canonical rendering), variable types (structural equality after alias
//! canonicalisation) and contract attributes (exact label).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::frontend::{parse_type_text, render_type, render_with_layout, SourceUnit, StmtKind, TypeExpr};
use crate::pipeline::RunReport;
use crate::promptgen::ATTRIBUTE_LABELS;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("schema error at `{path}`: {message}")]
    SchemaError { path: String, message: String },
    #[error("report is for unit `{report}` but the ground truth is for `{truth}`")]
    SchemaMismatch { report: String, truth: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> EvalError {
    EvalError::SchemaError { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionSpan {
    pub name: String,
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VariableType {
    /// Enclosing function; absent for storage variables.
    #[serde(rename = "fn", default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeLabel {
    pub slot: String,
    pub label: String,
}

/// Predicted facts about one unit, in the ground-truth shape.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    pub functions: Vec<FunctionSpan>,
    pub variables: Vec<VariableType>,
    pub attributes: Vec<AttributeLabel>,
}

impl Labels {
    /// Reads every boundary, declared type and attribute off a unit.
    pub fn from_unit(unit: &SourceUnit) -> Self {
        let (_, layout) = render_with_layout(unit);
        let functions = unit
            .functions
            .iter()
            .filter_map(|f| layout.functions.get(&f.name).map(|s| FunctionSpan { name: f.name.clone(), start: s.start_line, end: s.end_line }))
            .collect();
        let mut variables: Vec<VariableType> = unit
            .storage
            .iter()
            .map(|d| VariableType { function: None, name: d.name.clone(), ty: render_type(&d.ty) })
            .collect();
        for f in &unit.functions {
            for p in &f.params {
                if let Some(ty) = &p.ty {
                    variables.push(VariableType { function: Some(f.name.clone()), name: p.name.clone(), ty: render_type(ty) });
                }
            }
            for s in &f.body {
                s.walk(&mut |st| {
                    if let StmtKind::VarDecl { ty, name, .. } = &st.kind {
                        variables.push(VariableType { function: Some(f.name.clone()), name: name.clone(), ty: render_type(ty) });
                    }
                });
            }
        }
        let attributes = unit
            .storage
            .iter()
            .filter_map(|d| d.attribute.as_ref().map(|l| AttributeLabel { slot: d.name.clone(), label: l.clone() }))
            .collect();
        Labels { functions, variables, attributes }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub unit: String,
    #[serde(default)]
    pub functions: Vec<FunctionSpan>,
    #[serde(default)]
    pub variables: Vec<VariableType>,
    #[serde(default)]
    pub attributes: Vec<AttributeLabel>,
    /// Whether the refined unit is expected to compile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recompiles: Option<bool>,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.unit.trim().is_empty() {
            return Err(schema("unit", "must not be empty"));
        }
        for (i, f) in self.functions.iter().enumerate() {
            if f.start > f.end {
                return Err(schema(format!("functions[{i}]"), format!("start {} is after end {}", f.start, f.end)));
            }
        }
        for (i, v) in self.variables.iter().enumerate() {
            if parse_type_text(&v.ty).is_none() {
                return Err(schema(format!("variables[{i}].type"), format!("`{}` is not a type", v.ty)));
            }
        }
        for (i, a) in self.attributes.iter().enumerate() {
            if !ATTRIBUTE_LABELS.contains(&a.label.as_str()) {
                return Err(schema(
                    format!("attributes[{i}].label"),
                    format!("`{}` is not one of {}", a.label, ATTRIBUTE_LABELS.join(", ")),
                ));
            }
        }
        Ok(())
    }
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth, EvalError> {
    let truth: GroundTruth = serde_json::from_str(text).map_err(|e| schema(format!("line {}", e.line()), e.to_string()))?;
    truth.validate()?;
    Ok(truth)
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_ground_truth(&text)
}

fn canonical_type_expr(ty: &TypeExpr) -> TypeExpr {
    match ty {
        TypeExpr::Named(n) => TypeExpr::Named(
            match n.as_str() {
                "uint" => "uint256",
                "int" => "int256",
                "byte" => "bytes1",
                other => other,
            }
            .to_string(),
        ),
        TypeExpr::AddressPayable => TypeExpr::AddressPayable,
        TypeExpr::Mapping(k, v) => TypeExpr::Mapping(Box::new(canonical_type_expr(k)), Box::new(canonical_type_expr(v))),
        TypeExpr::Array(e, n) => TypeExpr::Array(Box::new(canonical_type_expr(e)), n.clone()),
    }
}

/// Canonical spelling of a type: aliases expanded, spacing normalised.
pub fn canonical_type(text: &str) -> String {
    match parse_type_text(text) {
        Some(ty) => render_type(&canonical_type_expr(&ty)),
        None => text.split_whitespace().collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Counts { tp, fp, fn_ }
    }

    /// `None` when nothing was predicted.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `None` when the truth is empty.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// A ratio as a percentage with two decimals, or `undefined`.
pub fn percent(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.2}%", v * 100.0),
        None => "undefined".into(),
    }
}

/// Multiset comparison: shared items are true positives.
fn compare<K: Ord + Clone>(predicted: impl IntoIterator<Item = K>, truth: impl IntoIterator<Item = K>) -> Counts {
    let mut bag: BTreeMap<K, i64> = BTreeMap::new();
    let mut n_truth = 0;
    for k in truth {
        *bag.entry(k).or_default() += 1;
        n_truth += 1;
    }
    let (mut tp, mut fp) = (0, 0);
    for k in predicted {
        match bag.get_mut(&k) {
            Some(n) if *n > 0 => {
                *n -= 1;
                tp += 1;
            }
            _ => fp += 1,
        }
    }
    Counts { tp, fp, fn_: n_truth - tp }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecompileSummary {
    pub checked: u64,
    pub failed: u64,
}

impl RecompileSummary {
    pub fn failure_rate(&self) -> Option<f64> {
        ratio(self.failed, self.checked)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub boundary: Counts,
    #[serde(rename = "type")]
    pub types: Counts,
    pub attribute: Counts,
    pub recompile: RecompileSummary,
}

impl MetricsTable {
    pub fn merge(&mut self, other: &MetricsTable) {
        self.boundary.add(other.boundary);
        self.types.add(other.types);
        self.attribute.add(other.attribute);
        self.recompile.checked += other.recompile.checked;
        self.recompile.failed += other.recompile.failed;
    }

    pub fn to_json(&self) -> serde_json::Value {
        let row = |c: &Counts| {
            serde_json::json!({
                "tp": c.tp, "fp": c.fp, "fn": c.fn_,
                "precision": c.precision(), "recall": c.recall(),
            })
        };
        serde_json::json!({
            "boundary": row(&self.boundary),
            "type": row(&self.types),
            "attribute": row(&self.attribute),
            "recompile": {
                "checked": self.recompile.checked,
                "failed": self.recompile.failed,
                "failure_rate": self.recompile.failure_rate(),
            },
        })
    }

    /// Plain-text table with aligned columns.
    pub fn to_text(&self) -> String {
        let header = ["category", "TP", "FP", "FN", "precision", "recall"];
        let mut rows = vec![header.map(String::from).to_vec()];
        for (name, c) in [("boundary", &self.boundary), ("type", &self.types), ("attribute", &self.attribute)] {
            rows.push(vec![
                name.to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                percent(c.precision()),
                percent(c.recall()),
            ]);
        }
        let widths: Vec<usize> = (0..header.len()).map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for r in &rows {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        let _ = writeln!(
            out,
            "recompilation failures: {}/{} ({})",
            self.recompile.failed,
            self.recompile.checked,
            percent(self.recompile.failure_rate())
        );
        out
    }
}

/// Scores predicted labels against the truth for one unit.
pub fn score_labels(predicted: &Labels, truth: &GroundTruth) -> MetricsTable {
    let boundary = compare(predicted.functions.iter().map(|f| (f.start, f.end)), truth.functions.iter().map(|f| (f.start, f.end)));
    let var_key = |v: &VariableType| (v.function.clone(), v.name.clone(), canonical_type(&v.ty));
    let types = compare(predicted.variables.iter().map(var_key), truth.variables.iter().map(var_key));
    let attr_key = |a: &AttributeLabel| (a.slot.clone(), a.label.clone());
    let attribute = compare(predicted.attributes.iter().map(attr_key), truth.attributes.iter().map(attr_key));
    MetricsTable { boundary, types, attribute, recompile: RecompileSummary::default() }
}

/// Scores a run report; the report and truth must name the same unit.
pub fn score(report: &RunReport, truth: &GroundTruth) -> Result<MetricsTable, EvalError> {
    if report.unit != truth.unit {
        return Err(EvalError::SchemaMismatch { report: report.unit.clone(), truth: truth.unit.clone() });
    }
    let mut table = score_labels(&report.predictions, truth);
    if let Some(status) = &report.recompile {
        match status {
            RecompileStatus::Pass => table.recompile.checked = 1,
            RecompileStatus::Fail { .. } => {
                table.recompile.checked = 1;
                table.recompile.failed = 1;
            }
            RecompileStatus::Skipped { .. } => {}
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RecompileStatus {
    Pass,
    Fail { reason: String },
    Skipped { reason: String },
}

static SCRATCH: AtomicU64 = AtomicU64::new(0);

/// Runs a compiler command on the rendered unit.
///
/// `{file}` in the template is replaced by the path of the rendered unit;
/// without the placeholder the path is appended. The command runs under
/// `sh -c`.
pub fn recompile_check(unit: &SourceUnit, command: Option<&str>) -> RecompileStatus {
    let Some(template) = command.filter(|c| !c.trim().is_empty()) else {
        return RecompileStatus::Skipped { reason: "no compiler command configured".into() };
    };
    let n = SCRATCH.fetch_add(1, Ordering::Relaxed);
    let path = std::env::temp_dir().join(format!("refiner-{}-{n}.sol", std::process::id()));
    if let Err(e) = std::fs::write(&path, render_with_layout(unit).0) {
        return RecompileStatus::Fail { reason: format!("cannot write {}: {e}", path.display()) };
    }
    let file = path.display().to_string();
    let line = if template.contains("{file}") { template.replace("{file}", &file) } else { format!("{template} {file}") };
    let result = Command::new("sh").arg("-c").arg(&line).output();
    let _ = std::fs::remove_file(&path);
    match result {
        Ok(out) if out.status.success() => RecompileStatus::Pass,
        Ok(out) => {
            let stderr = String::from_utf8_lossy(&out.stderr).trim().to_string();
            let code = out.status.code().map_or("signal".to_string(), |c| c.to_string());
            RecompileStatus::Fail { reason: if stderr.is_empty() { format!("exit status {code}") } else { format!("exit status {code}: {stderr}") } }
        }
        Err(e) => RecompileStatus::Fail { reason: format!("cannot run `{line}`: {e}") },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_unit;

    fn close(a: Option<f64>, pct: f64) -> bool {
        (a.unwrap() * 100.0 - pct).abs() <= 0.01
    }

    #[test]
    fn published_boundary_counts() {
        let c = Counts::new(504, 67, 122);
        assert!(close(c.precision(), 88.26));
        assert!(close(c.recall(), 80.51));
    }

    #[test]
    fn published_type_counts() {
        let c = Counts::new(1349, 113, 252);
        assert!(close(c.precision(), 92.27));
        assert!(close(c.recall(), 84.26));
        assert_eq!(percent(c.recall()), "84.26%");
    }

    #[test]
    fn empty_prediction_has_undefined_precision() {
        let truth = parse_ground_truth(r#"{"unit":"u","variables":[{"fn":"f","name":"x","type":"uint"}]}"#).unwrap();
        let t = score_labels(&Labels::default(), &truth);
        assert_eq!(t.types.precision(), None);
        assert_eq!(t.types.recall(), Some(0.0));
        assert!(t.to_text().contains("undefined"));
    }

    #[test]
    fn minimal_truth_file() {
        let truth = parse_ground_truth(r#"{"unit":"u","variables":[{"fn":"f","name":"x","type":"uint256"}]}"#).unwrap();
        assert_eq!(truth.variables.len(), 1);
        assert!(truth.functions.is_empty() && truth.attributes.is_empty());
    }

    #[test]
    fn unknown_label_is_rejected() {
        let err = parse_ground_truth(r#"{"unit":"u","attributes":[{"slot":"stor_1","label":"Treasury"}]}"#).unwrap_err();
        match err {
            EvalError::SchemaError { path, .. } => assert_eq!(path, "attributes[0].label"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inverted_span_is_rejected() {
        let err = parse_ground_truth(r#"{"unit":"u","functions":[{"name":"f","start":9,"end":3}]}"#).unwrap_err();
        assert!(matches!(err, EvalError::SchemaError { ref path, .. } if path == "functions[0]"));
    }

    #[test]
    fn aliases_are_canonicalised() {
        assert_eq!(canonical_type("uint"), "uint256");
        assert_eq!(canonical_type("mapping(uint => byte[])"), "mapping(uint256=>bytes1[])");
        assert_eq!(canonical_type("int"), canonical_type("int256"));
    }

    #[test]
    fn types_match_structurally() {
        let truth = parse_ground_truth(
            r#"{"unit":"u","variables":[
                {"name":"stor_1","type":"mapping(bytes32=>uint)"},
                {"fn":"f","name":"a","type":"address"}]}"#,
        )
        .unwrap();
        let pred = Labels {
            variables: vec![
                VariableType { function: None, name: "stor_1".into(), ty: "mapping(bytes32=>uint256)".into() },
                VariableType { function: Some("f".into()), name: "a".into(), ty: "uint160".into() },
                VariableType { function: Some("f".into()), name: "b".into(), ty: "bool".into() },
            ],
            ..Labels::default()
        };
        let t = score_labels(&pred, &truth);
        assert_eq!(t.types, Counts::new(1, 2, 1));
    }

    #[test]
    fn labels_from_unit() {
        let u = parse_unit("u", "uint256 stor_1;\nfunction f(uint256 a) public {\n    bool b = a > 1;\n    stor_1 = a;\n}\n");
        let l = Labels::from_unit(&u);
        assert_eq!(l.functions, vec![FunctionSpan { name: "f".into(), start: 3, end: 6 }]);
        assert_eq!(l.variables.len(), 3);
        assert!(l.attributes.is_empty());
    }

    #[test]
    fn recompile_contract() {
        let u = parse_unit("u", "function f() public {\n}\n");
        assert!(matches!(recompile_check(&u, None), RecompileStatus::Skipped { .. }));
        assert_eq!(recompile_check(&u, Some("test -s {file} && exit 0")), RecompileStatus::Pass);
        match recompile_check(&u, Some("echo broken >&2; exit 1")) {
            RecompileStatus::Fail { reason } => assert!(reason.contains("broken")),
            other => panic!("{other:?}"),
        }
    }
}
