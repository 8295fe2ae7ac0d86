use std::fmt::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{summarize_fields, Cell, DatasetStore, FieldStats, FieldSummary};
use crate::filter::{Filter, FilterState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Agent,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub role: Role,
    pub text: String,
}

/// What the agents see: offered fields with their ranges, the active
/// filters and recent chat.
#[derive(Debug, Clone)]
pub struct AgentContext {
    pub store: Arc<DatasetStore>,
    pub summaries: Vec<FieldSummary>,
    pub filters: FilterState,
    pub history: Vec<HistoryLine>,
    pub rendered: String,
}

impl AgentContext {
    pub fn summary(&self, entity: &str, field: &str) -> Option<&FieldSummary> {
        self.summaries.iter().find(|s| s.entity == entity && s.field == field)
    }
}

fn num(v: f64) -> String {
    Cell::Number(v).to_string()
}

pub(crate) fn describe_filter(f: &Filter) -> String {
    match f {
        Filter::Interval(i) => format!("{}.{} in {}…{}", i.entity, i.field, num(i.min), num(i.max)),
        Filter::Point(p) => format!(
            "{}.{} in {{{}}}",
            p.entity,
            p.field,
            p.values.iter().cloned().collect::<Vec<_>>().join(", ")
        ),
    }
}

/// Renders the agent context. `history` should already be trimmed to the
/// window the caller wants.
pub fn build_context(
    store: Arc<DatasetStore>,
    state: &FilterState,
    history: &[HistoryLine],
    cardinality_cap: usize,
) -> AgentContext {
    let summaries = summarize_fields(&store, cardinality_cap);
    let mut out = String::from("Entities and fields:\n");
    for entity in &store.schema().entities {
        let marker = if entity.is_dataset_entity { ", dataset entity" } else { "" };
        let _ = writeln!(out, "- {} (key {}{marker})", entity.name, entity.key);
        for s in summaries.iter().filter(|s| s.entity == entity.name) {
            let unit = s.unit.as_deref().map(|u| format!(" [{u}]")).unwrap_or_default();
            let _ = match &s.stats {
                FieldStats::Quantitative { min: Some(lo), max: Some(hi) } => {
                    writeln!(out, "  - {}: quantitative{unit}, {}…{}", s.field, num(*lo), num(*hi))
                }
                FieldStats::Quantitative { .. } => writeln!(out, "  - {}: quantitative{unit}, no values", s.field),
                FieldStats::Categorical { values, .. } => {
                    writeln!(out, "  - {}: categorical, {{{}}}", s.field, values.join(", "))
                }
            };
        }
    }
    for rel in &store.schema().relations {
        let _ = writeln!(out, "Relation: {} -> {} via {}.{}", rel.parent, rel.child, rel.child, rel.foreign_key);
    }
    out.push_str("Active filters:\n");
    if state.is_empty() {
        out.push_str("- none\n");
    }
    for f in &state.filters {
        let _ = writeln!(out, "- {}: {}", f.id(), describe_filter(f));
    }
    if !history.is_empty() {
        out.push_str("Recent conversation:\n");
        for line in history {
            let role = match line.role {
                Role::User => "user",
                Role::Agent => "assistant",
                Role::System => "system",
            };
            let _ = writeln!(out, "- {role}: {}", line.text);
        }
    }
    AgentContext {
        store,
        summaries,
        filters: state.clone(),
        history: history.to_vec(),
        rendered: out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    #[test]
    fn fixture_context() {
        let ctx = build_context(Arc::new(fixture::store()), &FilterState::new(), &[], 50);
        let r = &ctx.rendered;
        assert!(r.contains("- age: quantitative [years], 17…67"), "{r}");
        assert!(r.contains("- sex: categorical, {F, M}"));
        assert!(r.contains("- organ: categorical, {heart, kidney, lung}"));
        assert!(r.contains("- assay: categorical, {ATAC-seq, CODEX, RNA-seq}"));
        assert!(!r.contains("- id:") && !r.contains("donor_id:") && !r.contains("sample_id:"));
        assert!(r.contains("Active filters:\n- none\n"));
        assert!(!r.contains("Recent conversation"));
    }

    #[test]
    fn cap_hides_organ() {
        let ctx = build_context(Arc::new(fixture::store()), &FilterState::new(), &[], 2);
        assert!(!ctx.rendered.contains("organ"));
        assert!(ctx.summary("samples", "organ").is_none());
        assert!(ctx.rendered.contains("- sex: categorical"));
    }

    #[test]
    fn deterministic_rendering() {
        let store = Arc::new(fixture::store());
        let h = [HistoryLine { role: Role::User, text: "hi".into() }];
        let a = build_context(store.clone(), &FilterState::new(), &h, 50).rendered;
        let b = build_context(store, &FilterState::new(), &h, 50).rendered;
        assert_eq!(a, b);
        assert!(a.ends_with("Recent conversation:\n- user: hi\n"));
    }
}
