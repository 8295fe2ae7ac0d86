//! Runs compiled plans over the store, restricted to visible rows.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{summarize_field, Cell, DatasetStore, FieldKind, FieldSummary};
use crate::filter::VisibilityMap;
use crate::grammar::{AggregateExpr, AggregateOp, Plan, Step, ValueKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultColumn {
    pub name: String,
    pub kind: ValueKind,
}

/// Render-ready output of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<ResultColumn>,
    pub rows: Vec<Vec<Cell>>,
    /// Rows before any limit was applied.
    pub total_row_count: usize,
    pub filter_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_id: Option<String>,
}

impl ResultTable {
    pub fn with_provenance(mut self, view_id: Option<&str>, filter_version: u64) -> Self {
        self.view_id = view_id.map(str::to_owned);
        self.filter_version = filter_version;
        self
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// Equal-width bins over a field's observed extent. Bins are half-open
/// `[lo, hi)` except the last, which is closed. A zero-width extent yields
/// the single bin `[min, min]`; an empty column yields no bins.
pub fn bin_bounds(summary: &FieldSummary, bin_count: usize) -> Vec<(f64, f64)> {
    let Some((min, max)) = summary.extent() else {
        return Vec::new();
    };
    if min == max || bin_count <= 1 {
        return vec![(min, max)];
    }
    let width = (max - min) / bin_count as f64;
    (0..bin_count)
        .map(|i| {
            let lo = min + width * i as f64;
            let hi = if i + 1 == bin_count { max } else { min + width * (i + 1) as f64 };
            (lo, hi)
        })
        .collect()
}

/// Index of the bin containing `v`, if any.
pub fn bin_index(bounds: &[(f64, f64)], v: f64) -> Option<usize> {
    let last = bounds.len().checked_sub(1)?;
    bounds.iter().enumerate().position(|(i, &(lo, hi))| {
        lo <= v && (v < hi || (i == last && v <= hi))
    })
}

pub fn bin_label(bounds: &[(f64, f64)], i: usize) -> String {
    let (lo, hi) = bounds[i];
    let close = if i + 1 == bounds.len() { ']' } else { ')' };
    format!("[{},{}{close}", Cell::Number(lo), Cell::Number(hi))
}

struct Frame {
    width: usize,
    rows: Vec<Vec<Cell>>,
}

pub fn execute(plan: &Plan, store: &DatasetStore, visibility: &VisibilityMap) -> ResultTable {
    let base = store
        .table(&plan.base_entity)
        .expect("plan compiled against the store's schema");
    let base_width = store.schema().entity(&plan.base_entity).unwrap().fields.len();
    let mut frame = Frame {
        width: base_width,
        rows: visibility
            .rows(&plan.base_entity)
            .iter()
            .map(|&r| (0..base_width).map(|f| base.cell(r, f).clone()).collect())
            .collect(),
    };
    let mut total_before_limit = None;

    for step in &plan.steps {
        match step {
            Step::Filter { column, predicate } => {
                frame.rows.retain(|row| predicate.matches(&row[*column]));
            }
            Step::Aggregate { keys, outputs } => frame = aggregate(frame, keys, outputs),
            Step::Bin {
                column,
                entity,
                field,
                bin_count,
            } => {
                let bounds = summarize_field(store, entity, field)
                    .map(|s| bin_bounds(&s, *bin_count))
                    .unwrap_or_default();
                for row in &mut frame.rows {
                    let label = row[*column]
                        .as_number()
                        .and_then(|v| bin_index(&bounds, v))
                        .map(|i| Cell::Text(bin_label(&bounds, i)))
                        .unwrap_or(Cell::Missing);
                    row.push(label);
                }
                frame.width += 1;
            }
            Step::Join {
                left_column,
                right_entity,
                right_field,
            } => {
                let right = store.table(right_entity).expect("compiled join target exists");
                let right_width = store.schema().entity(right_entity).unwrap().fields.len();
                let mut by_value: HashMap<String, Vec<usize>> = HashMap::new();
                for &r in visibility.rows(right_entity) {
                    if let Cell::Text(v) = right.cell(r, *right_field) {
                        by_value.entry(v.clone()).or_default().push(r);
                    }
                }
                let mut joined = Vec::new();
                for row in frame.rows {
                    let Cell::Text(v) = &row[*left_column] else {
                        continue;
                    };
                    for &r in by_value.get(v).map(Vec::as_slice).unwrap_or_default() {
                        let mut out = row.clone();
                        out.extend((0..right_width).map(|f| right.cell(r, f).clone()));
                        joined.push(out);
                    }
                }
                frame.rows = joined;
                frame.width += right_width;
            }
            Step::OrderBy { column, descending } => {
                let c = *column;
                frame.rows.sort_by(|a, b| match (a[c].is_missing(), b[c].is_missing()) {
                    (true, true) => std::cmp::Ordering::Equal,
                    (true, false) => std::cmp::Ordering::Greater,
                    (false, true) => std::cmp::Ordering::Less,
                    _ if *descending => b[c].total_cmp(&a[c]),
                    _ => a[c].total_cmp(&b[c]),
                });
            }
            Step::Limit { n } => {
                total_before_limit.get_or_insert(frame.rows.len());
                frame.rows.truncate(*n);
            }
        }
    }

    let total_row_count = total_before_limit.unwrap_or(frame.rows.len());
    debug_assert!(plan.projection.iter().all(|&p| p < frame.width));
    ResultTable {
        columns: plan
            .output
            .iter()
            .map(|c| ResultColumn {
                name: c.name.clone(),
                kind: c.kind,
            })
            .collect(),
        rows: frame
            .rows
            .into_iter()
            .map(|row| plan.projection.iter().map(|&p| row[p].clone()).collect())
            .collect(),
        total_row_count,
        filter_version: 0,
        view_id: None,
    }
}

fn aggregate(frame: Frame, keys: &[usize], outputs: &[AggregateExpr]) -> Frame {
    let mut groups: Vec<(Vec<Cell>, Vec<Vec<Cell>>)> = Vec::new();
    if keys.is_empty() {
        groups.push((Vec::new(), frame.rows));
    } else {
        let mut rows = frame.rows;
        let key_of = |row: &Vec<Cell>| -> Vec<Cell> { keys.iter().map(|&k| row[k].clone()).collect() };
        rows.sort_by(|a, b| {
            keys.iter()
                .map(|&k| a[k].total_cmp(&b[k]))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for row in rows {
            let key = key_of(&row);
            match groups.last_mut() {
                Some((k, members)) if k.iter().zip(&key).all(|(a, b)| a.total_cmp(b).is_eq()) => {
                    members.push(row)
                }
                _ => groups.push((key, vec![row])),
            }
        }
    }

    let rows = groups
        .into_iter()
        .map(|(mut key, members)| {
            key.extend(outputs.iter().map(|o| reduce(o, &members)));
            key
        })
        .collect();
    Frame {
        width: keys.len() + outputs.len(),
        rows,
    }
}

fn reduce(expr: &AggregateExpr, rows: &[Vec<Cell>]) -> Cell {
    if expr.op == AggregateOp::Count {
        return Cell::Number(rows.len() as f64);
    }
    let column = expr.column.expect("non-count aggregates carry a column");
    let values: Vec<f64> = rows.iter().filter_map(|r| r[column].as_number()).collect();
    if values.is_empty() {
        return Cell::Missing;
    }
    let v = match expr.op {
        AggregateOp::Sum => values.iter().sum(),
        AggregateOp::Mean => values.iter().sum::<f64>() / values.len() as f64,
        AggregateOp::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        AggregateOp::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggregateOp::Count => unreachable!(),
    };
    Cell::Number(v)
}

/// A page of visible rows of one entity with every field as a column.
pub fn visible_rows(
    store: &DatasetStore,
    visibility: &VisibilityMap,
    entity: &str,
    offset: usize,
    limit: Option<usize>,
) -> Option<ResultTable> {
    let def = store.schema().entity(entity)?;
    let table = store.table(entity)?;
    let rows = visibility.rows(entity);
    Some(ResultTable {
        columns: def
            .fields
            .iter()
            .map(|f| ResultColumn {
                name: f.name.clone(),
                kind: if f.kind == FieldKind::Quantitative {
                    ValueKind::Quantitative
                } else {
                    ValueKind::Nominal
                },
            })
            .collect(),
        rows: rows
            .iter()
            .skip(offset)
            .take(limit.unwrap_or(usize::MAX))
            .map(|&r| (0..def.fields.len()).map(|f| table.cell(r, f).clone()).collect())
            .collect(),
        total_row_count: rows.len(),
        filter_version: 0,
        view_id: None,
    })
}
