use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::SchemaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Quantitative,
    Categorical,
    Identifier,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Quantitative => "quantitative",
            FieldKind::Categorical => "categorical",
            FieldKind::Identifier => "identifier",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDef {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityDef {
    pub name: String,
    pub key: String,
    #[serde(rename = "dataset_entity", default)]
    pub is_dataset_entity: bool,
    pub fields: Vec<FieldDef>,
}

impl EntityDef {
    pub fn field(&self, name: &str) -> Option<&FieldDef> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn key_index(&self) -> usize {
        self.field_index(&self.key)
            .expect("validated schema: key names an existing field")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationDef {
    pub parent: String,
    pub child: String,
    pub foreign_key: String,
}

/// Entity tables and the parent/child relations between them.
///
/// A validated schema always has exactly one dataset entity and its relation
/// graph, taken as undirected, is a forest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaDef {
    pub entities: Vec<EntityDef>,
    #[serde(default)]
    pub relations: Vec<RelationDef>,
}

impl SchemaDef {
    pub fn entity(&self, name: &str) -> Option<&EntityDef> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn entity_index(&self, name: &str) -> Option<usize> {
        self.entities.iter().position(|e| e.name == name)
    }

    pub fn dataset_entity(&self) -> &EntityDef {
        self.entities
            .iter()
            .find(|e| e.is_dataset_entity)
            .expect("validated schema has a dataset entity")
    }

    pub fn field(&self, entity: &str, field: &str) -> Option<&FieldDef> {
        self.entity(entity).and_then(|e| e.field(field))
    }

    /// Finds the declared relation between two entities, in either direction.
    pub fn relation_between(&self, a: &str, b: &str) -> Option<&RelationDef> {
        self.relations
            .iter()
            .find(|r| (r.parent == a && r.child == b) || (r.parent == b && r.child == a))
    }

    pub fn to_config(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// Checks every structural invariant, reporting the first violation with
    /// a JSON pointer into the config document.
    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut names = HashSet::new();
        for (i, entity) in self.entities.iter().enumerate() {
            let path = format!("/entities/{i}");
            if !names.insert(entity.name.as_str()) {
                return Err(SchemaError::at(
                    format!("{path}/name"),
                    format!("duplicate entity name '{}'", entity.name),
                ));
            }
            let mut fields = HashSet::new();
            for (j, field) in entity.fields.iter().enumerate() {
                if !fields.insert(field.name.as_str()) {
                    return Err(SchemaError::at(
                        format!("{path}/fields/{j}/name"),
                        format!("duplicate field name '{}' in '{}'", field.name, entity.name),
                    ));
                }
            }
            match entity.field(&entity.key) {
                Some(f) if f.kind == FieldKind::Identifier => {}
                Some(_) => {
                    return Err(SchemaError::at(
                        format!("{path}/key"),
                        format!("key '{}' must be an identifier field", entity.key),
                    ))
                }
                None => {
                    return Err(SchemaError::at(
                        format!("{path}/key"),
                        format!("key '{}' is not a field of '{}'", entity.key, entity.name),
                    ))
                }
            }
        }

        let dataset_entities = self.entities.iter().filter(|e| e.is_dataset_entity).count();
        if dataset_entities != 1 {
            return Err(SchemaError::at(
                "/entities",
                format!("expected exactly one dataset entity, found {dataset_entities}"),
            ));
        }

        for (i, rel) in self.relations.iter().enumerate() {
            let path = format!("/relations/{i}");
            if rel.parent == rel.child {
                return Err(SchemaError::at(
                    path,
                    format!("self-relation on '{}'", rel.parent),
                ));
            }
            if self.entity(&rel.parent).is_none() {
                return Err(SchemaError::at(
                    format!("{path}/parent"),
                    format!("unknown entity '{}'", rel.parent),
                ));
            }
            let Some(child) = self.entity(&rel.child) else {
                return Err(SchemaError::at(
                    format!("{path}/child"),
                    format!("unknown entity '{}'", rel.child),
                ));
            };
            if child.field(&rel.foreign_key).is_none() {
                return Err(SchemaError::at(
                    format!("{path}/foreign_key"),
                    format!("'{}' is not a field of '{}'", rel.foreign_key, rel.child),
                ));
            }
        }

        // Union-find over entities; an edge joining an already-connected pair
        // closes a cycle (this also catches duplicate edges).
        let mut parent: Vec<usize> = (0..self.entities.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (i, rel) in self.relations.iter().enumerate() {
            let a = find(&mut parent, self.entity_index(&rel.parent).unwrap());
            let b = find(&mut parent, self.entity_index(&rel.child).unwrap());
            if a == b {
                return Err(SchemaError::at(
                    format!("/relations/{i}"),
                    format!(
                        "cycle in relation graph through '{}' and '{}'",
                        rel.parent, rel.child
                    ),
                ));
            }
            parent[a] = b;
        }
        Ok(())
    }

    /// Adjacency list over entity indices: (neighbor, relation index).
    pub(crate) fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.entities.len()];
        for (r, rel) in self.relations.iter().enumerate() {
            let p = self.entity_index(&rel.parent).unwrap();
            let c = self.entity_index(&rel.child).unwrap();
            adj[p].push((c, r));
            adj[c].push((p, r));
        }
        adj
    }

    pub fn field_kinds(&self) -> BTreeMap<(&str, &str), FieldKind> {
        self.entities
            .iter()
            .flat_map(|e| e.fields.iter().map(move |f| ((e.name.as_str(), f.name.as_str()), f.kind)))
            .collect()
    }
}

/// Parses and validates a schema config document.
pub fn load_schema(config_document: &str) -> Result<SchemaDef, SchemaError> {
    let schema: SchemaDef = serde_json::from_str(config_document).map_err(|e| SchemaError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    schema.validate()?;
    Ok(schema)
}
