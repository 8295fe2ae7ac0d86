//! The bundled "desk-bio" fixture: five donors, six samples, seven datasets.

use std::collections::BTreeMap;

use crate::data::{load_schema, load_tables, DatasetStore, SchemaDef};

pub const SCHEMA: &str = include_str!("../../../fixtures/desk-bio/schema.json");
pub const DONORS: &str = include_str!("../../../fixtures/desk-bio/donors.csv");
pub const SAMPLES: &str = include_str!("../../../fixtures/desk-bio/samples.csv");
pub const DATASETS: &str = include_str!("../../../fixtures/desk-bio/datasets.csv");
pub const SCRIPT: &str = include_str!("../../../fixtures/desk-bio/script.json");

pub fn schema() -> SchemaDef {
    load_schema(SCHEMA).expect("bundled fixture schema is valid")
}

pub fn store() -> DatasetStore {
    let sources: BTreeMap<String, String> = [("donors", DONORS), ("samples", SAMPLES), ("datasets", DATASETS)]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
    load_tables(&schema(), &sources).expect("bundled fixture tables are valid")
}
