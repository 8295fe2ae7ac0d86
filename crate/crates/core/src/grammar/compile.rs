//! Semantic checking against a schema and lowering to an executable plan.
//!
//! Both run in a single pass that tracks the columns available after each
//! transform, so a spec that validates always compiles.

use serde::Serialize;

use super::spec::*;
use super::GrammarError;
use crate::data::{Cell, FieldKind, SchemaDef};

/// The source field a column's values come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lineage {
    pub entity: String,
    pub field: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanColumn {
    /// Reference name as written in the spec.
    pub name: String,
    pub kind: ValueKind,
    /// Set for columns holding raw values of a source field.
    pub lineage: Option<Lineage>,
    /// Set for bin labels, pointing at the binned field.
    pub binned: Option<Lineage>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Eq(Cell),
    In(Vec<Cell>),
    Range(f64, f64),
}

impl Predicate {
    pub fn matches(&self, cell: &Cell) -> bool {
        match (self, cell) {
            (_, Cell::Missing) => false,
            (Predicate::Eq(v), c) => v == c,
            (Predicate::In(vs), c) => vs.contains(c),
            (Predicate::Range(lo, hi), Cell::Number(v)) => lo <= v && v <= hi,
            (Predicate::Range(..), _) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateExpr {
    pub name: String,
    pub op: AggregateOp,
    pub column: Option<usize>,
}

impl Serialize for AggregateOp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// One executable step. Column indices refer to the working table as it
/// stands before the step runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    Filter { column: usize, predicate: Predicate },
    /// Replaces the table with one row per distinct key tuple (or a single
    /// row when `keys` is empty): key columns, then aggregate outputs.
    Aggregate { keys: Vec<usize>, outputs: Vec<AggregateExpr> },
    /// Appends a bin label column computed over the unfiltered extent of
    /// `entity.field`.
    Bin { column: usize, entity: String, field: String, bin_count: usize },
    /// Inner join appending every field of `right_entity`, matching
    /// `left_column` against `right_entity`'s field `right_field`.
    Join { left_column: usize, right_entity: String, right_field: usize },
    OrderBy { column: usize, descending: bool },
    Limit { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    pub base_entity: String,
    pub base_alias: String,
    pub steps: Vec<Step>,
    /// Working-table columns emitted, in output order.
    pub projection: Vec<usize>,
    pub output: Vec<PlanColumn>,
}

#[derive(Debug, Clone)]
struct EnvColumn {
    alias: Option<String>,
    column: PlanColumn,
}

/// Checks a parsed spec against the schema; an empty list means it compiles.
pub fn validate_against_schema(spec: &ViewSpec, schema: &SchemaDef) -> Vec<GrammarError> {
    match check(spec, schema) {
        Ok(_) => Vec::new(),
        Err(errors) => errors,
    }
}

/// Lowers a validated spec to a plan. groupby + rollup pairs fuse into a
/// single aggregate step.
pub fn compile(spec: &ViewSpec, schema: &SchemaDef) -> Result<Plan, Vec<GrammarError>> {
    check(spec, schema)
}

fn source_columns(schema: &SchemaDef, alias: &str, entity: &str) -> Vec<EnvColumn> {
    schema
        .entity(entity)
        .map(|e| {
            e.fields
                .iter()
                .map(|f| EnvColumn {
                    alias: Some(alias.to_owned()),
                    column: PlanColumn {
                        name: f.name.clone(),
                        kind: if f.kind == FieldKind::Quantitative {
                            ValueKind::Quantitative
                        } else {
                            ValueKind::Nominal
                        },
                        lineage: Some(Lineage {
                            entity: entity.to_owned(),
                            field: f.name.clone(),
                        }),
                        binned: None,
                    },
                })
                .collect()
        })
        .unwrap_or_default()
}

fn resolve(env: &[EnvColumn], reference: &str) -> Result<usize, String> {
    if let Some((alias, name)) = reference.split_once('.') {
        if let Some(i) = env
            .iter()
            .position(|c| c.alias.as_deref() == Some(alias) && c.column.name == name)
        {
            return Ok(i);
        }
    }
    let hits: Vec<usize> = env
        .iter()
        .enumerate()
        .filter(|(_, c)| c.column.name == reference)
        .map(|(i, _)| i)
        .collect();
    match hits.as_slice() {
        [i] => Ok(*i),
        [] => Err(format!("unknown field '{reference}'")),
        _ => Err(format!("ambiguous field '{reference}'; qualify it as alias.{reference}")),
    }
}

fn field_kind(schema: &SchemaDef, col: &PlanColumn) -> Option<FieldKind> {
    let l = col.lineage.as_ref()?;
    schema.field(&l.entity, &l.field).map(|f| f.kind)
}

fn describe(col: &PlanColumn) -> String {
    match &col.lineage {
        Some(l) => format!("{}.{}", l.entity, l.field),
        None => format!("'{}'", col.name),
    }
}

fn check(spec: &ViewSpec, schema: &SchemaDef) -> Result<Plan, Vec<GrammarError>> {
    let mut errors = Vec::new();
    let sources = spec.sources();
    let many = matches!(spec.source, Sources::Many(_));
    for (i, s) in sources.iter().enumerate() {
        if schema.entity(&s.entity).is_none() {
            let path = if many { format!("/source/{i}/entity") } else { "/source/entity".into() };
            errors.push(GrammarError::new(path, format!("unknown entity '{}'", s.entity)));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let base = &sources[0];
    let mut env = source_columns(schema, &base.name, &base.entity);
    let mut joined = vec![false; sources.len()];
    joined[0] = true;
    let mut steps = Vec::new();
    let transforms = spec.transforms();

    let mut i = 0;
    while i < transforms.len() {
        let path = format!("/transformation/{i}/{}", transforms[i].name());
        let err = |sub: &str, msg: String| {
            let p = if sub.is_empty() { path.clone() } else { format!("{path}/{sub}") };
            GrammarError::new(p, msg)
        };
        let mut step_errors = Vec::new();
        match &transforms[i] {
            Transform::Filter(f) => match resolve(&env, &f.field) {
                Err(m) => step_errors.push(err("field", m)),
                Ok(col) => {
                    let kind = env[col].column.kind;
                    let to_cell = |s: &Scalar| match s {
                        Scalar::Number(v) => Cell::Number(*v),
                        Scalar::Text(t) => Cell::Text(t.clone()),
                    };
                    let scalars: Vec<&Scalar> = match &f.operand {
                        Operand::Scalar(s) => vec![s],
                        Operand::List(v) => v.iter().collect(),
                    };
                    let numeric = kind == ValueKind::Quantitative;
                    if scalars.iter().any(|s| matches!(s, Scalar::Number(_)) != numeric) {
                        step_errors.push(err(
                            "operand",
                            format!(
                                "operand type does not match {} field {}",
                                kind.as_str(),
                                describe(&env[col].column)
                            ),
                        ));
                    } else {
                        let predicate = match (f.op, &f.operand) {
                            (FilterOp::Eq, Operand::Scalar(s)) => Predicate::Eq(to_cell(s)),
                            (FilterOp::In, Operand::List(v)) => Predicate::In(v.iter().map(to_cell).collect()),
                            (FilterOp::Range, Operand::List(v)) => match v.as_slice() {
                                [Scalar::Number(lo), Scalar::Number(hi)] => Predicate::Range(*lo, *hi),
                                _ => unreachable!("parser checks range operands"),
                            },
                            _ => unreachable!("parser checks operand shape"),
                        };
                        steps.push(Step::Filter { column: col, predicate });
                    }
                }
            },
            Transform::Groupby { fields } => {
                let mut keys = Vec::new();
                for (k, f) in fields.iter().enumerate() {
                    match resolve(&env, f) {
                        Ok(c) => keys.push(c),
                        Err(m) => step_errors.push(err(&format!("fields/{k}"), m)),
                    }
                }
                match transforms.get(i + 1) {
                    Some(Transform::Rollup { outputs }) if step_errors.is_empty() => {
                        let rollup_path = format!("/transformation/{}/rollup", i + 1);
                        match aggregate(&env, keys, outputs, &rollup_path) {
                            Ok((step, next)) => {
                                steps.push(step);
                                env = next;
                            }
                            Err(mut es) => step_errors.append(&mut es),
                        }
                        i += 1;
                    }
                    Some(Transform::Rollup { .. }) => {}
                    _ => step_errors.push(err("", "groupby must be followed by rollup".into())),
                }
            }
            Transform::Rollup { outputs } => match aggregate(&env, Vec::new(), outputs, &path) {
                Ok((step, next)) => {
                    steps.push(step);
                    env = next;
                }
                Err(mut es) => step_errors.append(&mut es),
            },
            Transform::Binby { field, bin_count, output } => match resolve(&env, field) {
                Err(m) => step_errors.push(err("field", m)),
                Ok(col) => {
                    let c = &env[col].column;
                    if field_kind(schema, c) != Some(FieldKind::Quantitative) {
                        let actual = field_kind(schema, c).map(FieldKind::as_str).unwrap_or("derived");
                        step_errors.push(err(
                            "field",
                            format!("binby requires quantitative field; {} is {actual}", describe(c)),
                        ));
                    } else if env.iter().any(|e| &e.column.name == output) {
                        step_errors.push(err("output", format!("output '{output}' collides with an existing field")));
                    } else {
                        let lineage = c.lineage.clone().unwrap();
                        steps.push(Step::Bin {
                            column: col,
                            entity: lineage.entity.clone(),
                            field: lineage.field.clone(),
                            bin_count: *bin_count,
                        });
                        env.push(EnvColumn {
                            alias: None,
                            column: PlanColumn {
                                name: output.clone(),
                                kind: ValueKind::Nominal,
                                lineage: None,
                                binned: Some(lineage),
                            },
                        });
                    }
                }
            },
            Transform::Join { left, right, parent, child } => {
                let find = |alias: &str| sources.iter().position(|s| s.name == alias);
                match (find(left), find(right)) {
                    (None, _) => step_errors.push(err("left", format!("unknown source '{left}'"))),
                    (_, None) => step_errors.push(err("right", format!("unknown source '{right}'"))),
                    (Some(l), Some(r)) => {
                        let le = &sources[l].entity;
                        let re = &sources[r].entity;
                        let declared = schema
                            .relations
                            .iter()
                            .find(|rel| &rel.parent == parent && &rel.child == child);
                        if !joined[l] {
                            step_errors.push(err("left", format!("source '{left}' is not in the working table")));
                        } else if joined[r] {
                            step_errors.push(err("right", format!("source '{right}' is already joined")));
                        } else if let Some(rel) = declared.filter(|_| {
                            (le == parent && re == child) || (le == child && re == parent)
                        }) {
                            let right_def = schema.entity(re).unwrap();
                            let (left_ref, right_field) = if le == parent {
                                (
                                    format!("{left}.{}", schema.entity(le).unwrap().key),
                                    right_def.field_index(&rel.foreign_key).unwrap(),
                                )
                            } else {
                                (format!("{left}.{}", rel.foreign_key), right_def.key_index())
                            };
                            match resolve(&env, &left_ref) {
                                Ok(left_column) => {
                                    steps.push(Step::Join {
                                        left_column,
                                        right_entity: re.clone(),
                                        right_field,
                                    });
                                    env.extend(source_columns(schema, right, re));
                                    joined[r] = true;
                                }
                                Err(_) => step_errors.push(err(
                                    "left",
                                    format!("join key '{left_ref}' is no longer available"),
                                )),
                            }
                        } else {
                            step_errors.push(err(
                                "relation",
                                format!("no declared relation {parent} -> {child} joining {le} and {re}"),
                            ));
                        }
                    }
                }
            }
            Transform::Orderby { field, direction } => match resolve(&env, field) {
                Ok(column) => steps.push(Step::OrderBy {
                    column,
                    descending: *direction == Some(Direction::Desc),
                }),
                Err(m) => step_errors.push(err("field", m)),
            },
            Transform::Limit { n } => steps.push(Step::Limit { n: *n }),
        }
        if !step_errors.is_empty() {
            // Later steps would be checked against an unknown table shape.
            errors.append(&mut step_errors);
            return Err(errors);
        }
        i += 1;
    }

    for (k, s) in sources.iter().enumerate() {
        if !joined[k] {
            errors.push(GrammarError::new(
                format!("/source/{k}"),
                format!("source '{}' is never joined", s.name),
            ));
        }
    }

    let mut projection = Vec::new();
    let mut output = Vec::new();
    match &spec.representation {
        Representation::Table { columns } => {
            for (k, c) in columns.iter().enumerate() {
                match resolve(&env, &c.field) {
                    Ok(idx) => {
                        projection.push(idx);
                        output.push(PlanColumn {
                            name: c.field.clone(),
                            ..env[idx].column.clone()
                        });
                    }
                    Err(m) => errors.push(GrammarError::new(format!("/representation/columns/{k}/field"), m)),
                }
            }
        }
        Representation::Mark(m) => {
            for (k, map) in m.mapping.iter().enumerate() {
                match resolve(&env, &map.field) {
                    Ok(idx) => {
                        let col = &env[idx].column;
                        if map.value_kind == ValueKind::Quantitative && col.kind != ValueKind::Quantitative {
                            errors.push(GrammarError::new(
                                format!("/representation/mapping/{k}/value_kind"),
                                format!("{} is not quantitative", describe(col)),
                            ));
                        } else if !output.iter().any(|o: &PlanColumn| o.name == map.field) {
                            projection.push(idx);
                            output.push(PlanColumn {
                                name: map.field.clone(),
                                ..col.clone()
                            });
                        }
                    }
                    Err(msg) => errors.push(GrammarError::new(format!("/representation/mapping/{k}/field"), msg)),
                }
            }
        }
    }

    if let Some(inter) = &spec.interactivity {
        let sel = &inter.selection;
        let ok = schema
            .entity(&sel.entity)
            .is_some_and(|e| sel.fields.iter().all(|f| e.field(f).is_some()));
        if !ok {
            errors.push(GrammarError::new(
                "/interactivity/selection",
                "selection targets unknown entity or field",
            ));
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(Plan {
        base_entity: base.entity.clone(),
        base_alias: base.name.clone(),
        steps,
        projection,
        output,
    })
}

fn aggregate(
    env: &[EnvColumn],
    keys: Vec<usize>,
    outputs: &std::collections::BTreeMap<String, RollupOutput>,
    path: &str,
) -> Result<(Step, Vec<EnvColumn>), Vec<GrammarError>> {
    let mut errors = Vec::new();
    let mut exprs = Vec::new();
    let mut next: Vec<EnvColumn> = keys.iter().map(|&k| env[k].clone()).collect();
    for (name, out) in outputs {
        let opath = format!("{path}/outputs/{name}");
        if next.iter().any(|c| &c.column.name == name) {
            errors.push(GrammarError::new(&opath, format!("output '{name}' collides with a group key")));
            continue;
        }
        let column = match &out.field {
            None => None,
            Some(f) => match resolve(env, f) {
                Ok(c) => Some(c),
                Err(m) => {
                    errors.push(GrammarError::new(format!("{opath}/field"), m));
                    continue;
                }
            },
        };
        if let Some(c) = column {
            let col = &env[c].column;
            if out.op != AggregateOp::Count && col.kind != ValueKind::Quantitative {
                errors.push(GrammarError::new(
                    format!("{opath}/field"),
                    format!("'{}' requires a quantitative field; {} is not", out.op.as_str(), describe(col)),
                ));
                continue;
            }
        }
        exprs.push(AggregateExpr {
            name: name.clone(),
            op: out.op,
            column,
        });
        next.push(EnvColumn {
            alias: None,
            column: PlanColumn {
                name: name.clone(),
                kind: ValueKind::Quantitative,
                lineage: None,
                binned: None,
            },
        });
    }
    if errors.is_empty() {
        Ok((Step::Aggregate { keys, outputs: exprs }, next))
    } else {
        Err(errors)
    }
}
