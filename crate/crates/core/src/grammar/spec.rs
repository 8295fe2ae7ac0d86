use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};
use serde_json::{json, Map, Value};

/// One named source table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRef {
    pub name: String,
    pub entity: String,
}

/// `source` is either a single object or a list; the written form is kept so
/// documents serialize back the way they were written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sources {
    Single(SourceRef),
    Many(Vec<SourceRef>),
}

impl Sources {
    pub fn as_slice(&self) -> &[SourceRef] {
        match self {
            Sources::Single(s) => std::slice::from_ref(s),
            Sources::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

impl Scalar {
    fn to_value(&self) -> Value {
        match self {
            Scalar::Number(v) => number(*v),
            Scalar::Text(s) => Value::String(s.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOp {
    Eq,
    In,
    Range,
}

/// Operand of a filter transform; its shape is checked against the op at
/// parse time (`eq` scalar, `in` list, `range` two numbers).
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Scalar(Scalar),
    List(Vec<Scalar>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterTransform {
    pub field: String,
    pub op: FilterOp,
    pub operand: Operand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateOp {
    Count,
    Sum,
    Mean,
    Min,
    Max,
}

impl AggregateOp {
    pub fn as_str(self) -> &'static str {
        match self {
            AggregateOp::Count => "count",
            AggregateOp::Sum => "sum",
            AggregateOp::Mean => "mean",
            AggregateOp::Min => "min",
            AggregateOp::Max => "max",
        }
    }

    pub(crate) fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "count" => AggregateOp::Count,
            "sum" => AggregateOp::Sum,
            "mean" => AggregateOp::Mean,
            "min" => AggregateOp::Min,
            "max" => AggregateOp::Max,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RollupOutput {
    pub op: AggregateOp,
    pub field: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Filter(FilterTransform),
    Groupby { fields: Vec<String> },
    Rollup { outputs: BTreeMap<String, RollupOutput> },
    Binby { field: String, bin_count: usize, output: String },
    Join { left: String, right: String, parent: String, child: String },
    /// `None` when the document omitted the direction; sorts ascending.
    Orderby { field: String, direction: Option<Direction> },
    Limit { n: usize },
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::Filter(_) => "filter",
            Transform::Groupby { .. } => "groupby",
            Transform::Rollup { .. } => "rollup",
            Transform::Binby { .. } => "binby",
            Transform::Join { .. } => "join",
            Transform::Orderby { .. } => "orderby",
            Transform::Limit { .. } => "limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    Point,
    Bar,
    Line,
    Rect,
    Text,
}

impl Mark {
    pub const ALL: [&'static str; 5] = ["point", "bar", "line", "rect", "text"];

    pub fn as_str(self) -> &'static str {
        Self::ALL[self as usize]
    }

    pub(crate) fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "point" => Mark::Point,
            "bar" => Mark::Bar,
            "line" => Mark::Line,
            "rect" => Mark::Rect,
            "text" => Mark::Text,
            _ => return None,
        })
    }

    /// Marks that need both an x and a y mapping.
    pub fn needs_xy(self) -> bool {
        !matches!(self, Mark::Text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    X,
    Y,
    Color,
    Size,
    Text,
}

impl Encoding {
    pub const ALL: [&'static str; 5] = ["x", "y", "color", "size", "text"];

    pub fn as_str(self) -> &'static str {
        Self::ALL[self as usize]
    }

    pub(crate) fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "x" => Encoding::X,
            "y" => Encoding::Y,
            "color" => Encoding::Color,
            "size" => Encoding::Size,
            "text" => Encoding::Text,
            _ => return None,
        })
    }
}

/// How a column's values are treated by charts and selections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Quantitative,
    Nominal,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Quantitative => "quantitative",
            ValueKind::Nominal => "nominal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    pub encoding: Encoding,
    pub field: String,
    pub value_kind: ValueKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkRepr {
    pub mark: Mark,
    pub mapping: Vec<Mapping>,
}

impl MarkRepr {
    pub fn channel(&self, encoding: Encoding) -> Option<&Mapping> {
        self.mapping.iter().find(|m| m.encoding == encoding)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableColumn {
    pub field: String,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Representation {
    Mark(MarkRepr),
    Table { columns: Vec<TableColumn> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKind {
    #[serde(rename = "interval_1d")]
    Interval1d,
    #[serde(rename = "interval_2d")]
    Interval2d,
    Point,
}

impl SelectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionKind::Interval1d => "interval_1d",
            SelectionKind::Interval2d => "interval_2d",
            SelectionKind::Point => "point",
        }
    }

    pub(crate) fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "interval_1d" => SelectionKind::Interval1d,
            "interval_2d" => SelectionKind::Interval2d,
            "point" => SelectionKind::Point,
            _ => return None,
        })
    }
}

/// The selection gesture a view supports and the source fields it filters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct SelectionDecl {
    pub view: String,
    pub kind: SelectionKind,
    pub entity: String,
    pub fields: Vec<String>,
}

/// System-owned block added by interactivity injection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interactivity {
    pub selection: SelectionDecl,
    /// The view renders rows visible under the session's global filters.
    pub global_filters: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSpec {
    pub source: Sources,
    /// `None` when the document omitted the key.
    pub transformation: Option<Vec<Transform>>,
    pub representation: Representation,
    pub interactivity: Option<Interactivity>,
}

impl ViewSpec {
    pub fn sources(&self) -> &[SourceRef] {
        self.source.as_slice()
    }

    pub fn transforms(&self) -> &[Transform] {
        self.transformation.as_deref().unwrap_or(&[])
    }

    /// Renders the spec back to its document form.
    pub fn to_document(&self) -> Value {
        let source_obj = |s: &SourceRef| json!({"name": s.name, "entity": s.entity});
        let mut doc = Map::new();
        doc.insert(
            "source".into(),
            match &self.source {
                Sources::Single(s) => source_obj(s),
                Sources::Many(v) => Value::Array(v.iter().map(source_obj).collect()),
            },
        );
        if let Some(ts) = &self.transformation {
            doc.insert(
                "transformation".into(),
                Value::Array(ts.iter().map(transform_to_value).collect()),
            );
        }
        doc.insert("representation".into(), representation_to_value(&self.representation));
        if let Some(i) = &self.interactivity {
            doc.insert(
                "interactivity".into(),
                json!({
                    "selection": {
                        "view": i.selection.view,
                        "kind": i.selection.kind.as_str(),
                        "entity": i.selection.entity,
                        "fields": i.selection.fields,
                    },
                    "global_filters": i.global_filters,
                }),
            );
        }
        Value::Object(doc)
    }
}

impl Serialize for ViewSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_document().serialize(serializer)
    }
}

impl fmt::Display for ViewSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_document())
    }
}

pub(crate) fn number(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Value::from(v as i64)
    } else {
        Value::from(v)
    }
}

fn transform_to_value(t: &Transform) -> Value {
    let body = match t {
        Transform::Filter(f) => json!({
            "field": f.field,
            "op": match f.op { FilterOp::Eq => "eq", FilterOp::In => "in", FilterOp::Range => "range" },
            "operand": match &f.operand {
                Operand::Scalar(s) => s.to_value(),
                Operand::List(v) => Value::Array(v.iter().map(Scalar::to_value).collect()),
            },
        }),
        Transform::Groupby { fields } => json!({ "fields": fields }),
        Transform::Rollup { outputs } => {
            let outputs: Map<String, Value> = outputs
                .iter()
                .map(|(name, o)| {
                    let mut body = Map::new();
                    body.insert("op".into(), o.op.as_str().into());
                    if let Some(f) = &o.field {
                        body.insert("field".into(), f.clone().into());
                    }
                    (name.clone(), Value::Object(body))
                })
                .collect();
            json!({ "outputs": outputs })
        }
        Transform::Binby { field, bin_count, output } => {
            json!({ "field": field, "bin_count": bin_count, "output": output })
        }
        Transform::Join { left, right, parent, child } => json!({
            "left": left, "right": right, "relation": {"parent": parent, "child": child},
        }),
        Transform::Orderby { field, direction } => match direction {
            None => json!({ "field": field }),
            Some(d) => json!({
                "field": field,
                "direction": match d { Direction::Asc => "asc", Direction::Desc => "desc" },
            }),
        },
        Transform::Limit { n } => json!({ "n": n }),
    };
    let mut wrapper = Map::new();
    wrapper.insert(t.name().into(), body);
    Value::Object(wrapper)
}

fn representation_to_value(r: &Representation) -> Value {
    match r {
        Representation::Mark(m) => json!({
            "mark": m.mark.as_str(),
            "mapping": m.mapping.iter().map(|c| json!({
                "encoding": c.encoding.as_str(),
                "field": c.field,
                "value_kind": c.value_kind.as_str(),
            })).collect::<Vec<_>>(),
        }),
        Representation::Table { columns } => json!({
            "type": "table",
            "columns": columns.iter().map(|c| {
                let mut col = Map::new();
                col.insert("field".into(), c.field.clone().into());
                if let Some(l) = &c.label {
                    col.insert("label".into(), l.clone().into());
                }
                Value::Object(col)
            }).collect::<Vec<_>>(),
        }),
    }
}
