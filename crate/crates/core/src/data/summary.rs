use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::schema::FieldKind;
use super::store::{Cell, DatasetStore};

pub const DEFAULT_CARDINALITY_CAP: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldStats {
    /// `min`/`max` are `None` when the column has no non-missing values.
    Quantitative { min: Option<f64>, max: Option<f64> },
    Categorical { values: Vec<String>, cardinality: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub entity: String,
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(flatten)]
    pub stats: FieldStats,
}

impl FieldSummary {
    pub fn extent(&self) -> Option<(f64, f64)> {
        match self.stats {
            FieldStats::Quantitative {
                min: Some(lo),
                max: Some(hi),
            } => Some((lo, hi)),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        match &self.stats {
            FieldStats::Quantitative { min, .. } => min.is_none(),
            FieldStats::Categorical { values, .. } => values.is_empty(),
        }
    }
}

/// Summarizes one column over all rows, ignoring missing cells.
pub fn summarize_field(store: &DatasetStore, entity: &str, field: &str) -> Option<FieldSummary> {
    let def = store.schema().field(entity, field)?;
    let column = store.column(entity, field)?;
    let stats = match def.kind {
        FieldKind::Identifier => return None,
        FieldKind::Quantitative => {
            let mut range: Option<(f64, f64)> = None;
            for v in column.iter().filter_map(Cell::as_number) {
                range = Some(match range {
                    None => (v, v),
                    Some((lo, hi)) => (lo.min(v), hi.max(v)),
                });
            }
            FieldStats::Quantitative {
                min: range.map(|r| r.0),
                max: range.map(|r| r.1),
            }
        }
        FieldKind::Categorical => {
            let values: BTreeSet<&str> = column.iter().filter_map(Cell::as_text).collect();
            FieldStats::Categorical {
                cardinality: values.len(),
                values: values.into_iter().map(str::to_owned).collect(),
            }
        }
    };
    Some(FieldSummary {
        entity: entity.to_owned(),
        field: field.to_owned(),
        unit: def.unit.clone(),
        stats,
    })
}

/// One summary per non-identifier field, in schema order. Categorical fields
/// with more than `cardinality_cap` distinct values are left out.
pub fn summarize_fields(store: &DatasetStore, cardinality_cap: usize) -> Vec<FieldSummary> {
    let schema = store.schema();
    schema
        .entities
        .iter()
        .flat_map(|e| e.fields.iter().map(move |f| (e.name.as_str(), f.name.as_str())))
        .filter_map(|(e, f)| summarize_field(store, e, f))
        .filter(|s| match &s.stats {
            FieldStats::Categorical { cardinality, .. } => *cardinality <= cardinality_cap,
            FieldStats::Quantitative { .. } => true,
        })
        .collect()
}
