//! Closed-schema parser for view spec documents.
//!
//! Every problem is reported with a JSON pointer into the document. Keys
//! outside the grammar are rejected rather than ignored.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};

use super::spec::*;
use super::GrammarError;

pub fn parse_spec(document: &str) -> Result<ViewSpec, Vec<GrammarError>> {
    let value: Value = serde_json::from_str(document).map_err(|e| {
        vec![GrammarError::new(
            "",
            format!("syntax error at line {}, column {}: {e}", e.line(), e.column()),
        )]
    })?;
    parse_spec_value(&value)
}

pub fn parse_spec_value(value: &Value) -> Result<ViewSpec, Vec<GrammarError>> {
    let mut p = Parser { errors: Vec::new() };
    let spec = p.spec(value);
    match spec {
        Some(spec) if p.errors.is_empty() => Ok(spec),
        _ => Err(p.errors),
    }
}

struct Parser {
    errors: Vec<GrammarError>,
}

impl Parser {
    fn error(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(GrammarError::new(path, message));
    }

    /// Checks that `value` is an object with only `allowed` keys and all of
    /// `required` present.
    fn object<'v>(
        &mut self,
        value: &'v Value,
        path: &str,
        allowed: &[&str],
        required: &[&str],
    ) -> Option<&'v Map<String, Value>> {
        let Some(obj) = value.as_object() else {
            self.error(path, format!("expected object, found {}", type_name(value)));
            return None;
        };
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                self.error(&format!("{path}/{}", escape(key)), format!("unknown key '{key}'"));
            }
        }
        for key in required {
            if !obj.contains_key(*key) {
                self.error(&format!("{path}/{key}"), format!("missing required key '{key}'"));
            }
        }
        Some(obj)
    }

    fn string(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<String> {
        let v = obj.get(key)?;
        match v.as_str() {
            Some(s) if !s.is_empty() => Some(s.to_owned()),
            Some(_) => {
                self.error(&format!("{path}/{key}"), "expected non-empty string");
                None
            }
            None => {
                self.error(
                    &format!("{path}/{key}"),
                    format!("expected string, found {}", type_name(v)),
                );
                None
            }
        }
    }

    fn count(&mut self, obj: &Map<String, Value>, key: &str, path: &str, min: u64) -> Option<usize> {
        let v = obj.get(key)?;
        match v.as_u64() {
            Some(n) if n >= min => Some(n as usize),
            _ => {
                self.error(
                    &format!("{path}/{key}"),
                    format!("expected integer >= {min}, found {v}"),
                );
                None
            }
        }
    }

    fn enumerated<T>(
        &mut self,
        obj: &Map<String, Value>,
        key: &str,
        path: &str,
        choices: &[&str],
        parse: impl Fn(&str) -> Option<T>,
    ) -> Option<T> {
        let s = self.string(obj, key, path)?;
        let parsed = parse(&s);
        if parsed.is_none() {
            self.error(
                &format!("{path}/{key}"),
                format!("'{s}' is not one of {}", choices.join(", ")),
            );
        }
        parsed
    }

    fn spec(&mut self, value: &Value) -> Option<ViewSpec> {
        let root = self.object(
            value,
            "",
            &["source", "transformation", "representation", "interactivity"],
            &["source", "representation"],
        )?;
        let source = root.get("source").and_then(|v| self.sources(v));
        let transformation = match root.get("transformation") {
            None => Some(None),
            Some(v) => self.transforms(v).map(Some),
        };
        let representation = root.get("representation").and_then(|v| self.representation(v));
        let interactivity = match root.get("interactivity") {
            None => Some(None),
            Some(v) => self.interactivity(v).map(Some),
        };
        Some(ViewSpec {
            source: source?,
            transformation: transformation?,
            representation: representation?,
            interactivity: interactivity?,
        })
    }

    fn source_ref(&mut self, value: &Value, path: &str) -> Option<SourceRef> {
        let obj = self.object(value, path, &["name", "entity"], &["name", "entity"])?;
        let name = self.string(obj, "name", path);
        let entity = self.string(obj, "entity", path);
        Some(SourceRef {
            name: name?,
            entity: entity?,
        })
    }

    fn sources(&mut self, value: &Value) -> Option<Sources> {
        match value {
            Value::Array(items) => {
                if items.is_empty() {
                    self.error("/source", "expected at least one source");
                    return None;
                }
                let parsed: Vec<_> = items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| self.source_ref(v, &format!("/source/{i}")))
                    .collect();
                let parsed: Option<Vec<_>> = parsed.into_iter().collect();
                let parsed = parsed?;
                let mut seen = BTreeSet::new();
                for (i, s) in parsed.iter().enumerate() {
                    if !seen.insert(s.name.as_str()) {
                        self.error(&format!("/source/{i}/name"), format!("duplicate source name '{}'", s.name));
                    }
                }
                Some(Sources::Many(parsed))
            }
            _ => self.source_ref(value, "/source").map(Sources::Single),
        }
    }

    fn transforms(&mut self, value: &Value) -> Option<Vec<Transform>> {
        let Some(items) = value.as_array() else {
            self.error(
                "/transformation",
                format!("expected array, found {}", type_name(value)),
            );
            return None;
        };
        let parsed: Vec<_> = items
            .iter()
            .enumerate()
            .map(|(i, v)| self.transform(v, &format!("/transformation/{i}")))
            .collect();
        parsed.into_iter().collect()
    }

    fn transform(&mut self, value: &Value, path: &str) -> Option<Transform> {
        const KINDS: [&str; 7] = ["filter", "groupby", "rollup", "binby", "join", "orderby", "limit"];
        let obj = self.object(value, path, &KINDS, &[])?;
        if obj.keys().any(|k| !KINDS.contains(&k.as_str())) {
            return None;
        }
        if obj.len() != 1 {
            self.error(path, "expected exactly one transform key");
            return None;
        }
        let (kind, body) = obj.iter().next().unwrap();
        let path = format!("{path}/{kind}");
        let path = path.as_str();
        match kind.as_str() {
            "filter" => {
                let o = self.object(body, path, &["field", "op", "operand"], &["field", "op", "operand"])?;
                let field = self.string(o, "field", path);
                let op = self.enumerated(o, "op", path, &["eq", "in", "range"], |s| match s {
                    "eq" => Some(FilterOp::Eq),
                    "in" => Some(FilterOp::In),
                    "range" => Some(FilterOp::Range),
                    _ => None,
                });
                let operand = match (op, o.get("operand")) {
                    (Some(op), Some(v)) => self.operand(op, v, &format!("{path}/operand")),
                    _ => None,
                };
                Some(Transform::Filter(FilterTransform {
                    field: field?,
                    op: op?,
                    operand: operand?,
                }))
            }
            "groupby" => {
                let o = self.object(body, path, &["fields"], &["fields"])?;
                let fields = self.string_list(o.get("fields")?, &format!("{path}/fields"))?;
                Some(Transform::Groupby { fields })
            }
            "rollup" => {
                let o = self.object(body, path, &["outputs"], &["outputs"])?;
                let outputs_path = format!("{path}/outputs");
                let outputs = o.get("outputs")?;
                let Some(map) = outputs.as_object() else {
                    self.error(&outputs_path, format!("expected object, found {}", type_name(outputs)));
                    return None;
                };
                if map.is_empty() {
                    self.error(&outputs_path, "expected at least one output");
                    return None;
                }
                let mut parsed = BTreeMap::new();
                let mut ok = true;
                for (name, spec) in map {
                    let p = format!("{outputs_path}/{}", escape(name));
                    match self.rollup_output(spec, &p) {
                        Some(out) => {
                            parsed.insert(name.clone(), out);
                        }
                        None => ok = false,
                    }
                }
                ok.then_some(Transform::Rollup { outputs: parsed })
            }
            "binby" => {
                let o = self.object(body, path, &["field", "bin_count", "output"], &["field", "bin_count", "output"])?;
                let field = self.string(o, "field", path);
                let bin_count = self.count(o, "bin_count", path, 1);
                let output = self.string(o, "output", path);
                Some(Transform::Binby {
                    field: field?,
                    bin_count: bin_count?,
                    output: output?,
                })
            }
            "join" => {
                let o = self.object(body, path, &["left", "right", "relation"], &["left", "right", "relation"])?;
                let left = self.string(o, "left", path);
                let right = self.string(o, "right", path);
                let rel_path = format!("{path}/relation");
                let relation = o.get("relation").and_then(|v| {
                    let r = self.object(v, &rel_path, &["parent", "child"], &["parent", "child"])?;
                    let parent = self.string(r, "parent", &rel_path);
                    let child = self.string(r, "child", &rel_path);
                    Some((parent?, child?))
                });
                let (parent, child) = relation?;
                Some(Transform::Join {
                    left: left?,
                    right: right?,
                    parent,
                    child,
                })
            }
            "orderby" => {
                let o = self.object(body, path, &["field", "direction"], &["field"])?;
                let field = self.string(o, "field", path);
                let direction = if o.contains_key("direction") {
                    self.enumerated(o, "direction", path, &["asc", "desc"], |s| match s {
                        "asc" => Some(Direction::Asc),
                        "desc" => Some(Direction::Desc),
                        _ => None,
                    })
                    .map(Some)
                } else {
                    Some(None)
                };
                Some(Transform::Orderby {
                    field: field?,
                    direction: direction?,
                })
            }
            "limit" => {
                let o = self.object(body, path, &["n"], &["n"])?;
                let n = self.count(o, "n", path, 0)?;
                Some(Transform::Limit { n })
            }
            _ => unreachable!("checked against KINDS"),
        }
    }

    fn rollup_output(&mut self, value: &Value, path: &str) -> Option<RollupOutput> {
        let o = self.object(value, path, &["op", "field"], &["op"])?;
        let op = self.enumerated(o, "op", path, &["count", "sum", "mean", "min", "max"], AggregateOp::parse)?;
        let field = if o.contains_key("field") {
            Some(self.string(o, "field", path)?)
        } else {
            None
        };
        if op != AggregateOp::Count && field.is_none() {
            self.error(&format!("{path}/field"), format!("'{}' needs a field", op.as_str()));
            return None;
        }
        Some(RollupOutput { op, field })
    }

    fn scalar(&mut self, value: &Value, path: &str) -> Option<Scalar> {
        match value {
            Value::Number(n) => Some(Scalar::Number(n.as_f64()?)),
            Value::String(s) => Some(Scalar::Text(s.clone())),
            other => {
                self.error(path, format!("expected string or number, found {}", type_name(other)));
                None
            }
        }
    }

    fn operand(&mut self, op: FilterOp, value: &Value, path: &str) -> Option<Operand> {
        match op {
            FilterOp::Eq => self.scalar(value, path).map(Operand::Scalar),
            FilterOp::In => {
                let Some(items) = value.as_array().filter(|a| !a.is_empty()) else {
                    self.error(path, "'in' needs a non-empty array");
                    return None;
                };
                let parsed: Vec<_> = items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| self.scalar(v, &format!("{path}/{i}")))
                    .collect();
                parsed.into_iter().collect::<Option<Vec<_>>>().map(Operand::List)
            }
            FilterOp::Range => match value.as_array().map(|a| a.as_slice()) {
                Some([lo, hi]) => match (lo.as_f64(), hi.as_f64()) {
                    (Some(a), Some(b)) if a <= b => {
                        Some(Operand::List(vec![Scalar::Number(a), Scalar::Number(b)]))
                    }
                    (Some(_), Some(_)) => {
                        self.error(path, "range lower bound exceeds upper bound");
                        None
                    }
                    _ => {
                        self.error(path, "range bounds must be numbers");
                        None
                    }
                },
                _ => {
                    self.error(path, "'range' needs [min, max]");
                    None
                }
            },
        }
    }

    fn string_list(&mut self, value: &Value, path: &str) -> Option<Vec<String>> {
        let Some(items) = value.as_array().filter(|a| !a.is_empty()) else {
            self.error(path, "expected non-empty array of strings");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, v) in items.iter().enumerate() {
            match v.as_str() {
                Some(s) if !s.is_empty() => out.push(s.to_owned()),
                _ => {
                    self.error(&format!("{path}/{i}"), "expected non-empty string");
                    ok = false;
                }
            }
        }
        ok.then_some(out)
    }

    fn representation(&mut self, value: &Value) -> Option<Representation> {
        let path = "/representation";
        let is_table = value.get("type").is_some();
        if is_table {
            let o = self.object(value, path, &["type", "columns"], &["type", "columns"])?;
            if o.get("type").and_then(Value::as_str) != Some("table") {
                self.error("/representation/type", "only 'table' is a valid representation type");
                return None;
            }
            let cols = o.get("columns")?;
            let Some(items) = cols.as_array().filter(|a| !a.is_empty()) else {
                self.error("/representation/columns", "expected non-empty array");
                return None;
            };
            let mut columns = Vec::new();
            let mut ok = true;
            for (i, c) in items.iter().enumerate() {
                let p = format!("{path}/columns/{i}");
                let parsed = self.object(c, &p, &["field", "label"], &["field"]).and_then(|o| {
                    let field = self.string(o, "field", &p)?;
                    let label = if o.contains_key("label") {
                        Some(self.string(o, "label", &p)?)
                    } else {
                        None
                    };
                    Some(TableColumn { field, label })
                });
                match parsed {
                    Some(c) => columns.push(c),
                    None => ok = false,
                }
            }
            return ok.then_some(Representation::Table { columns });
        }

        let o = self.object(value, path, &["mark", "mapping"], &["mark", "mapping"])?;
        let mark = self.enumerated(o, "mark", path, &Mark::ALL, Mark::parse);
        let mapping_value = o.get("mapping")?;
        let Some(items) = mapping_value.as_array() else {
            self.error(
                "/representation/mapping",
                format!("expected array, found {}", type_name(mapping_value)),
            );
            return None;
        };
        let mut mapping = Vec::new();
        let mut ok = true;
        let mut seen = BTreeSet::new();
        for (i, m) in items.iter().enumerate() {
            let p = format!("{path}/mapping/{i}");
            let parsed = self
                .object(m, &p, &["encoding", "field", "value_kind"], &["encoding", "field", "value_kind"])
                .and_then(|o| {
                    let encoding = self.enumerated(o, "encoding", &p, &Encoding::ALL, Encoding::parse);
                    let field = self.string(o, "field", &p);
                    let value_kind = self.enumerated(o, "value_kind", &p, &["quantitative", "nominal"], |s| match s {
                        "quantitative" => Some(ValueKind::Quantitative),
                        "nominal" => Some(ValueKind::Nominal),
                        _ => None,
                    });
                    Some(Mapping {
                        encoding: encoding?,
                        field: field?,
                        value_kind: value_kind?,
                    })
                });
            match parsed {
                Some(m) => {
                    if !seen.insert(m.encoding) {
                        self.error(
                            &format!("{p}/encoding"),
                            format!("duplicate '{}' encoding", m.encoding.as_str()),
                        );
                        ok = false;
                    }
                    mapping.push(m);
                }
                None => ok = false,
            }
        }
        let mark = mark?;
        if ok && mark.needs_xy() {
            for enc in [Encoding::X, Encoding::Y] {
                if !seen.contains(&enc) {
                    self.error(
                        "/representation/mapping",
                        format!("'{}' mark needs an '{}' mapping", mark.as_str(), enc.as_str()),
                    );
                    ok = false;
                }
            }
        }
        ok.then_some(Representation::Mark(MarkRepr { mark, mapping }))
    }

    fn interactivity(&mut self, value: &Value) -> Option<Interactivity> {
        let path = "/interactivity";
        let o = self.object(value, path, &["selection", "global_filters"], &["selection", "global_filters"])?;
        let global_filters = match o.get("global_filters")? {
            Value::Bool(b) => *b,
            other => {
                self.error("/interactivity/global_filters", format!("expected boolean, found {}", type_name(other)));
                return None;
            }
        };
        let sp = "/interactivity/selection";
        let s = self.object(o.get("selection")?, sp, &["view", "kind", "entity", "fields"], &["view", "kind", "entity", "fields"])?;
        let view = self.string(s, "view", sp);
        let kind = self.enumerated(s, "kind", sp, &["interval_1d", "interval_2d", "point"], SelectionKind::parse);
        let entity = self.string(s, "entity", sp);
        let fields = s.get("fields").and_then(|v| self.string_list(v, &format!("{sp}/fields")));
        Some(Interactivity {
            selection: SelectionDecl {
                view: view?,
                kind: kind?,
                entity: entity?,
                fields: fields?,
            },
            global_filters,
        })
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// JSON pointer escaping for a single reference token.
fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}
