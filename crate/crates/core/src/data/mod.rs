//! Multi-entity metadata: schema config, CSV-backed tables and field summaries.

mod schema;
mod store;
mod summary;

pub use schema::{load_schema, EntityDef, FieldDef, FieldKind, RelationDef, SchemaDef};
pub use store::{load_tables, Cell, DatasetStore, EntityTable, RelationLinks};
pub use summary::{
    summarize_field, summarize_fields, FieldStats, FieldSummary, DEFAULT_CARDINALITY_CAP,
};
