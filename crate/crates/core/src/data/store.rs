use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::schema::{EntityDef, FieldKind, SchemaDef};
use crate::error::TableError;

/// One cell value. `Missing` never equals anything, including another
/// `Missing`, under filter semantics; the derived `PartialEq` is structural
/// and only used for bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Number(f64),
    Text(String),
}

impl Cell {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    /// Total order used for grouping and sorting: missing, then numbers, then
    /// text.
    pub fn total_cmp(&self, other: &Cell) -> Ordering {
        match (self, other) {
            (Cell::Missing, Cell::Missing) => Ordering::Equal,
            (Cell::Missing, _) => Ordering::Less,
            (_, Cell::Missing) => Ordering::Greater,
            (Cell::Number(a), Cell::Number(b)) => a.total_cmp(b),
            (Cell::Number(_), Cell::Text(_)) => Ordering::Less,
            (Cell::Text(_), Cell::Number(_)) => Ordering::Greater,
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Missing => Ok(()),
            Cell::Number(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Missing => serializer.serialize_none(),
            Cell::Number(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => {
                serializer.serialize_i64(*v as i64)
            }
            Cell::Number(v) => serializer.serialize_f64(*v),
            Cell::Text(s) => serializer.serialize_str(s),
        }
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
            Null(()),
        }
        Ok(match Option::<Raw>::deserialize(deserializer)? {
            None | Some(Raw::Null(())) => Cell::Missing,
            Some(Raw::Number(v)) => Cell::Number(v),
            Some(Raw::Text(s)) => Cell::Text(s),
        })
    }
}

/// Column-oriented rows of one entity.
#[derive(Debug, Clone)]
pub struct EntityTable {
    name: String,
    columns: Vec<Vec<Cell>>,
    keys: Vec<String>,
    index: HashMap<String, usize>,
}

impl EntityTable {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, row: usize) -> &str {
        &self.keys[row]
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn row_of(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn column(&self, field: usize) -> &[Cell] {
        &self.columns[field]
    }

    pub fn cell(&self, row: usize, field: usize) -> &Cell {
        &self.columns[field][row]
    }
}

/// Row links for one relation: the parent row of each child row and the
/// child rows of each parent row.
#[derive(Debug, Clone)]
pub struct RelationLinks {
    pub parent_of: Vec<Option<usize>>,
    pub children_of: Vec<Vec<usize>>,
}

/// Immutable, loaded metadata tables plus resolved relation links.
#[derive(Debug, Clone)]
pub struct DatasetStore {
    schema: SchemaDef,
    tables: Vec<EntityTable>,
    links: Vec<RelationLinks>,
}

impl DatasetStore {
    pub fn schema(&self) -> &SchemaDef {
        &self.schema
    }

    pub fn tables(&self) -> &[EntityTable] {
        &self.tables
    }

    pub fn table(&self, entity: &str) -> Option<&EntityTable> {
        self.schema.entity_index(entity).map(|i| &self.tables[i])
    }

    pub fn table_at(&self, entity: usize) -> &EntityTable {
        &self.tables[entity]
    }

    pub fn links(&self, relation: usize) -> &RelationLinks {
        &self.links[relation]
    }

    /// Cell lookup by names; `None` when the entity or field does not exist.
    pub fn cell(&self, entity: &str, row: usize, field: &str) -> Option<&Cell> {
        let e = self.schema.entity_index(entity)?;
        let f = self.schema.entities[e].field_index(field)?;
        self.tables[e].columns[f].get(row)
    }

    pub fn column(&self, entity: &str, field: &str) -> Option<&[Cell]> {
        let e = self.schema.entity_index(entity)?;
        let f = self.schema.entities[e].field_index(field)?;
        Some(&self.tables[e].columns[f])
    }
}

/// Loads one CSV source per entity, coercing cells to their declared kinds
/// and resolving foreign keys.
///
/// Row numbers in errors count data rows from 1 (the header is not counted).
pub fn load_tables(
    schema: &SchemaDef,
    table_sources: &BTreeMap<String, String>,
) -> Result<DatasetStore, TableError> {
    if let Some(unknown) = table_sources.keys().find(|k| schema.entity(k).is_none()) {
        return Err(TableError::UnknownEntity(unknown.clone()));
    }
    let mut tables = Vec::with_capacity(schema.entities.len());
    for entity in &schema.entities {
        let text = table_sources
            .get(&entity.name)
            .ok_or_else(|| TableError::MissingSource(entity.name.clone()))?;
        tables.push(parse_table(entity, text)?);
    }

    let mut links = Vec::with_capacity(schema.relations.len());
    for rel in &schema.relations {
        let p = schema.entity_index(&rel.parent).unwrap();
        let c = schema.entity_index(&rel.child).unwrap();
        let fk = schema.entities[c].field_index(&rel.foreign_key).unwrap();
        let parent = &tables[p];
        let child = &tables[c];
        let mut parent_of = Vec::with_capacity(child.len());
        let mut children_of = vec![Vec::new(); parent.len()];
        for (row, cell) in child.columns[fk].iter().enumerate() {
            let target = match cell {
                Cell::Missing => None,
                other => {
                    let value = other.to_string();
                    let Some(prow) = parent.row_of(&value) else {
                        return Err(TableError::DanglingForeignKey {
                            entity: rel.child.clone(),
                            row: row + 1,
                            field: rel.foreign_key.clone(),
                            value,
                            parent: rel.parent.clone(),
                        });
                    };
                    children_of[prow].push(row);
                    Some(prow)
                }
            };
            parent_of.push(target);
        }
        links.push(RelationLinks {
            parent_of,
            children_of,
        });
    }

    Ok(DatasetStore {
        schema: schema.clone(),
        tables,
        links,
    })
}

fn parse_table(entity: &EntityDef, text: &str) -> Result<EntityTable, TableError> {
    let csv_err = |e: csv::Error| TableError::Csv {
        entity: entity.name.clone(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_err)?.clone();

    let mut positions = Vec::with_capacity(entity.fields.len());
    for field in &entity.fields {
        let pos = headers.iter().position(|h| h == field.name).ok_or_else(|| {
            TableError::MissingColumn {
                entity: entity.name.clone(),
                column: field.name.clone(),
            }
        })?;
        positions.push(pos);
    }
    if let Some(extra) = headers.iter().find(|h| entity.field(h).is_none()) {
        return Err(TableError::UnexpectedColumn {
            entity: entity.name.clone(),
            column: extra.to_string(),
        });
    }

    let key_field = entity.key_index();
    let mut columns: Vec<Vec<Cell>> = vec![Vec::new(); entity.fields.len()];
    let mut keys = Vec::new();
    let mut index = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        for (f, field) in entity.fields.iter().enumerate() {
            let raw = record.get(positions[f]).unwrap_or("");
            let cell = if raw.is_empty() {
                Cell::Missing
            } else if field.kind == FieldKind::Quantitative {
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Cell::Number(v),
                    _ => {
                        return Err(TableError::NotNumeric {
                            entity: entity.name.clone(),
                            row,
                            column: field.name.clone(),
                            value: raw.to_string(),
                        })
                    }
                }
            } else {
                Cell::Text(raw.to_string())
            };
            columns[f].push(cell);
        }
        let key = match &columns[key_field][i] {
            Cell::Text(k) => k.clone(),
            _ => {
                return Err(TableError::MissingKey {
                    entity: entity.name.clone(),
                    row,
                    column: entity.key.clone(),
                })
            }
        };
        if index.insert(key.clone(), i).is_some() {
            return Err(TableError::DuplicateKey {
                entity: entity.name.clone(),
                row,
                key,
            });
        }
        keys.push(key);
    }

    Ok(EntityTable {
        name: entity.name.clone(),
        columns,
        keys,
        index,
    })
}
