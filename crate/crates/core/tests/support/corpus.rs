//! Runner for the grammar golden corpus in `fixtures/grammar`.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use udi_core::data::SchemaDef;
use udi_core::grammar::{inject_interactivity, parse_spec, validate_against_schema};

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/grammar")
}

pub fn corpus_files() -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
}

/// Checks one corpus case; `Err` carries a readable mismatch.
pub fn check_case(path: &Path, schema: &SchemaDef) -> Result<(), String> {
    let case: Value = serde_json::from_str(&fs::read_to_string(path).map_err(|e| e.to_string())?)
        .map_err(|e| format!("case file: {e}"))?;
    let document = match (&case["raw"], &case["document"]) {
        (Value::String(raw), _) => raw.clone(),
        (_, doc) => doc.to_string(),
    };
    let parsed = parse_spec(&document);
    let errors = match &parsed {
        Ok(spec) => validate_against_schema(spec, schema),
        Err(errors) => errors.clone(),
    };
    let expect = &case["expect"];

    if let Some(want) = expect.get("errors") {
        let mut want: Vec<String> = serde_json::from_value(want.clone()).map_err(|e| e.to_string())?;
        let mut got: Vec<String> = errors.iter().map(|e| e.path.clone()).collect();
        want.sort();
        want.dedup();
        got.sort();
        got.dedup();
        return if got == want {
            Ok(())
        } else {
            Err(format!("error paths {got:?}, expected {want:?} ({errors:?})"))
        };
    }

    if !errors.is_empty() {
        return Err(format!("expected valid, got {errors:?}"));
    }
    let spec = parsed.expect("no parse errors");
    let (injected, decl) = inject_interactivity(&spec, schema, "v1").map_err(|e| format!("inject: {e:?}"))?;
    let want = &expect["selection"];
    let got = serde_json::json!({"kind": decl.kind.as_str(), "entity": decl.entity, "fields": decl.fields});
    if &got != want {
        return Err(format!("selection {got}, expected {want}"));
    }

    let original: Value = serde_json::from_str(&document).unwrap();
    let mut out = injected.to_document();
    let block = out
        .as_object_mut()
        .and_then(|o| o.remove("interactivity"))
        .ok_or("injected document lacks interactivity")?;
    if out != original {
        return Err(format!("injection changed existing keys: {out} vs {original}"));
    }
    if block["selection"]["view"] != "v1" || block["global_filters"] != true {
        return Err(format!("unexpected interactivity block {block}"));
    }
    Ok(())
}
