//! Browser bindings. Each export takes and returns plain strings so the page
//! needs no glue beyond the generated module; the `*_json` functions hold the
//! logic and are tested natively.

use lcc_core::gts::GtsSpec;
use lcc_core::logic::{eval_lasso, parse_ltl, LassoWord};
use lcc_core::pipeline::{self, Scenario};
use lcc_core::relations::{self, TransducerSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct RelationReport {
    holds: bool,
    relation: Vec<(String, String)>,
}

fn parse<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| format!("{what}: {e}"))
}

/// `kind` is `fsim` or `alt-fsim`. Returns `{holds, relation}`.
pub fn check_relation_json(fine: &str, coarse: &str, transducer: &str, kind: &str) -> Result<String, String> {
    let sa = parse::<GtsSpec>("fine system", fine)?.build().map_err(|e| format!("fine system: {e}"))?;
    let sb = parse::<GtsSpec>("coarse system", coarse)?.build().map_err(|e| format!("coarse system: {e}"))?;
    let f = parse::<TransducerSpec>("transducer", transducer)?.build().map_err(|e| format!("transducer: {e}"))?;
    let (holds, rel) = match kind {
        "fsim" => (relations::holds_fsim(&sa, &sb, &f), relations::largest_fsim(&sa, &sb, &f)),
        "alt-fsim" => (relations::holds_alt_fsim(&sa, &sb, &f), relations::largest_alt_fsim(&sa, &sb, &f)),
        other => return Err(format!("unknown relation kind {other:?}")),
    };
    let report = RelationReport { holds, relation: rel.named(&sa, &sb) };
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

/// `word` is `{"prefix": [[atoms..]..], "cycle": [[atoms..]..]}`.
pub fn eval_ltl_json(formula: &str, word: &str) -> Result<bool, String> {
    let phi = parse_ltl(formula).map_err(|e| format!("formula: {e}"))?;
    let w: LassoWord = parse("word", word)?;
    let w = LassoWord::new(w.prefix, w.cycle).map_err(|e| format!("word: {e}"))?;
    Ok(eval_lasso(&phi, &w))
}

/// Synthesizes the built-in scenario with one `key=value` override per line.
/// Returns the sets document, including the plan when `with_plan` is set.
pub fn synthesize_json(overrides: &str, with_plan: bool) -> Result<String, String> {
    let overrides = overrides
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| pipeline::parse_override(l).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let sc = Scenario::default_with(&overrides).map_err(|e| e.to_string())?;
    let doc = if with_plan {
        let syn = pipeline::synthesize(&sc).map_err(|e| e.to_string())?;
        pipeline::sets_doc(&sc, &syn)
    } else {
        let sets = pipeline::synthesize_sets(&sc).map_err(|e| e.to_string())?;
        pipeline::geometry_doc(&sc, &sets)
    }
    .map_err(|e| e.to_string())?;
    serde_json::to_string(&doc).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = checkRelation)]
pub fn check_relation(fine: &str, coarse: &str, transducer: &str, kind: &str) -> Result<String, JsError> {
    check_relation_json(fine, coarse, transducer, kind).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = evalLtl)]
pub fn eval_ltl(formula: &str, word: &str) -> Result<bool, JsError> {
    eval_ltl_json(formula, word).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn synthesize(overrides: &str, with_plan: bool) -> Result<String, JsError> {
    synthesize_json(overrides, with_plan).map_err(|e| JsError::new(&e))
}

/// Built-in scenario, so the page can show what overrides apply to.
#[wasm_bindgen(js_name = defaultScenario)]
pub fn default_scenario() -> String {
    pipeline::DEFAULT_SCENARIO.to_string()
}

/// Example inputs for the relation checker, keyed by file stem.
#[wasm_bindgen(js_name = relationExamples)]
pub fn relation_examples() -> String {
    let examples = [
        ("corridor", include_str!("../../../scenarios/relations/corridor.json")),
        ("zones", include_str!("../../../scenarios/relations/zones.json")),
        ("zones-one-way", include_str!("../../../scenarios/relations/zones-one-way.json")),
        ("corridor-to-zones", include_str!("../../../scenarios/relations/corridor-to-zones.json")),
    ];
    let map: serde_json::Map<String, serde_json::Value> =
        examples.iter().map(|(k, v)| (k.to_string(), serde_json::Value::String(v.to_string()))).collect();
    serde_json::Value::Object(map).to_string()
}
