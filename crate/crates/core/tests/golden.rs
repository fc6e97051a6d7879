//! Prompt snapshots. Set `UPDATE_GOLDEN=1` to rewrite the snapshot file.

use std::collections::BTreeSet;
use std::path::PathBuf;

use refiner_core::depgraph::{analyze, BuiltinTable};
use refiner_core::frontend::parse_unit;
use refiner_core::promptgen::{build_bundle, enumerate_targets, RowKind, TemplateSet, DEFAULT_TOKEN_BUDGET};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

/// Every buildable prompt of the golden unit, plus the rows they use.
fn render_all() -> (String, BTreeSet<RowKind>) {
    let text = std::fs::read_to_string(fixture("fixtures/golden.dsol")).unwrap();
    let unit = parse_unit("golden", &text);
    let analysis = analyze(&unit, BuiltinTable::shipped()).unwrap();
    let mut out = String::new();
    let mut rows = BTreeSet::new();
    for target in enumerate_targets(&unit) {
        let Ok(bundle) = build_bundle(&target, &unit, &analysis, TemplateSet::shipped(), DEFAULT_TOKEN_BUDGET) else {
            continue;
        };
        rows.extend(bundle.cot.iter().map(|s| s.row));
        out.push_str(&format!("======== {}\n", target.id()));
        out.push_str(&bundle.to_text());
    }
    (out, rows)
}

#[test]
fn snapshot_is_stable_and_covers_every_row() {
    let (first, rows) = render_all();
    let (second, _) = render_all();
    assert_eq!(first, second, "two renderings differ");
    let missing: Vec<RowKind> = RowKind::ALL.into_iter().filter(|r| !rows.contains(r)).collect();
    assert!(missing.is_empty(), "rows never rendered: {missing:?}");
    for token in ["[NAME]", "[STATEMENT]", "[TYPE]", "[USAGES]"] {
        assert!(!first.contains(token), "placeholder {token} left in the prompts");
    }
    let path = fixture("golden/prompts.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &first).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("snapshot exists; run with UPDATE_GOLDEN=1 to create it");
    assert_eq!(first, expected, "prompt text drifted from the snapshot");
}
