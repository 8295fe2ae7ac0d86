//! Routing, filter and visualization agents over a structured-output backend.
//!
//! Backend output is never trusted. Each document is checked against the
//! schema and the context the model was shown; on failure the request is
//! re-sent with the errors appended, up to `retries` more times.

mod backend;
mod context;
mod remote;
mod scripted;

use std::collections::BTreeSet;
use std::fmt::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::data::{DatasetStore, FieldStats};
use crate::filter::{Filter, FilterSource, FilterState, FilterUpdate, IntervalFilter, PointFilter};
use crate::grammar::{parse_spec_value, GrammarError, validate_against_schema, ViewSpec, VIEW_SPEC_SCHEMA};

pub use backend::{AgentTask, Backend, BackendError, CompletionRequest};
pub(crate) use context::describe_filter;
pub use context::{build_context, AgentContext, HistoryLine, Role};
pub use remote::{RemoteBackend, RemoteConfig};
pub use scripted::{ScriptEntry, ScriptedBackend};

pub const DEFAULT_RETRIES: usize = 2;
pub const DEFAULT_HISTORY_WINDOW: usize = 10;

pub const CAPABILITIES_MESSAGE: &str = "I can filter the metadata (for example \"filter to adults\") \
or build a chart or table (for example \"how many donors are there for each sex\"). \
Filters show up as widgets you can adjust.";

const ROUTE_INSTRUCTIONS: &str = "You are the orchestrator of a data discovery assistant. Decide whether \
the user's message asks to filter the data, to create a visualization, both, or neither. Reply with a \
JSON document matching the output schema. When neither applies, set both flags to false and give a short \
rationale.";

const FILTER_INSTRUCTIONS: &str = "You create filters over the metadata described below. Use interval \
filters for quantitative fields and point filters for categorical fields. Only use entities, fields and \
categories listed in the context; ground open-ended ranges in the listed min…max. To change an existing \
filter instead of adding one, set `update` to its id.";

const VIZ_INSTRUCTIONS: &str = "You write view specifications for the grammar in the output schema, using \
only entities and fields from the context. Do not add an interactivity section; the system adds it.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentRoute {
    pub needs_filter: bool,
    pub needs_visualization: bool,
    #[serde(default)]
    pub rationale: String,
}

impl AgentRoute {
    pub fn is_conversational(&self) -> bool {
        !self.needs_filter && !self.needs_visualization
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterPayload {
    Interval {
        entity: String,
        field: String,
        min: f64,
        max: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        update: Option<String>,
    },
    Point {
        entity: String,
        field: String,
        values: BTreeSet<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        update: Option<String>,
    },
}

impl FilterPayload {
    pub fn entity(&self) -> &str {
        match self {
            FilterPayload::Interval { entity, .. } | FilterPayload::Point { entity, .. } => entity,
        }
    }

    pub fn field(&self) -> &str {
        match self {
            FilterPayload::Interval { field, .. } | FilterPayload::Point { field, .. } => field,
        }
    }

    pub fn update_target(&self) -> Option<&str> {
        match self {
            FilterPayload::Interval { update, .. } | FilterPayload::Point { update, .. } => update.as_deref(),
        }
    }

    pub fn as_update(&self) -> FilterUpdate {
        match self {
            FilterPayload::Interval { min, max, .. } => FilterUpdate::Bounds { min: *min, max: *max },
            FilterPayload::Point { values, .. } => FilterUpdate::Values { values: values.clone() },
        }
    }

    /// The filter this payload adds, with the given id and source.
    pub fn to_filter(&self, id: String, source: FilterSource) -> Filter {
        match self.clone() {
            FilterPayload::Interval { entity, field, min, max, .. } => Filter::Interval(IntervalFilter {
                id,
                entity,
                field,
                min,
                max,
                source,
                user_adjusted: false,
            }),
            FilterPayload::Point { entity, field, values, .. } => Filter::Point(PointFilter {
                id,
                entity,
                field,
                values,
                source,
                user_adjusted: false,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterAction {
    pub filters: Vec<FilterPayload>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VizAction {
    pub spec: ViewSpec,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{task:?} agent output rejected after {attempts} attempts: {}", errors.join("; "))]
    Exhausted {
        task: AgentTask,
        attempts: usize,
        errors: Vec<String>,
    },
}

pub fn route_schema() -> Value {
    json!({
        "type": "object",
        "additionalProperties": false,
        "required": ["needs_filter", "needs_visualization", "rationale"],
        "properties": {
            "needs_filter": {"type": "boolean"},
            "needs_visualization": {"type": "boolean"},
            "rationale": {"type": "string", "maxLength": 280}
        }
    })
}

pub fn filter_schema() -> Value {
    let common = |extra: Value| {
        let mut props = json!({
            "entity": {"type": "string"},
            "field": {"type": "string"},
            "update": {"type": "string"}
        });
        for (k, v) in extra.as_object().unwrap() {
            props[k] = v.clone();
        }
        props
    };
    json!({
        "type": "object",
        "additionalProperties": false,
        "required": ["filters"],
        "properties": {
            "filters": {
                "type": "array",
                "items": {"oneOf": [
                    {
                        "type": "object",
                        "additionalProperties": false,
                        "required": ["kind", "entity", "field", "min", "max"],
                        "properties": common(json!({"kind": {"const": "interval"}, "min": {"type": "number"}, "max": {"type": "number"}}))
                    },
                    {
                        "type": "object",
                        "additionalProperties": false,
                        "required": ["kind", "entity", "field", "values"],
                        "properties": common(json!({"kind": {"const": "point"}, "values": {"type": "array", "minItems": 1, "items": {"type": "string"}}}))
                    }
                ]}
            }
        }
    })
}

/// The view spec schema wrapped as `{spec, caption}`, without the
/// system-owned interactivity section.
pub fn viz_schema() -> Value {
    let mut spec: Value = serde_json::from_str(VIEW_SPEC_SCHEMA).expect("bundled view spec schema is valid JSON");
    let obj = spec.as_object_mut().unwrap();
    let defs = obj.remove("$defs").unwrap_or_else(|| json!({}));
    obj.remove("$schema");
    obj.remove("$id");
    if let Some(props) = obj.get_mut("properties").and_then(Value::as_object_mut) {
        props.remove("interactivity");
    }
    json!({
        "type": "object",
        "additionalProperties": false,
        "required": ["spec"],
        "properties": {
            "spec": spec,
            "caption": {"type": "string"}
        },
        "$defs": defs
    })
}

pub fn parse_route(value: &Value) -> Result<AgentRoute, Vec<String>> {
    let route: AgentRoute = serde_json::from_value(value.clone()).map_err(|e| vec![format!("route: {e}")])?;
    if route.is_conversational() && route.rationale.trim().is_empty() {
        return Err(vec!["route: rationale is required when both flags are false".into()]);
    }
    Ok(route)
}

/// Checks a filter agent document against what the model was shown.
pub fn parse_filter_action(value: &Value, ctx: &AgentContext) -> Result<FilterAction, Vec<String>> {
    let action: FilterAction = serde_json::from_value(value.clone()).map_err(|e| vec![format!("filters: {e}")])?;
    let schema = ctx.store.schema();
    let mut errors = Vec::new();
    for (i, payload) in action.filters.iter().enumerate() {
        let at = format!("/filters/{i}");
        let candidate = payload.to_filter(String::from("_"), FilterSource::Widget);
        if let Err(e) = candidate.validate(schema) {
            errors.push(format!("{at}: {e}"));
            continue;
        }
        let Some(summary) = ctx.summary(payload.entity(), payload.field()) else {
            errors.push(format!("{at}/field: {}.{} is not offered in the context", payload.entity(), payload.field()));
            continue;
        };
        if let (FilterPayload::Point { values, .. }, FieldStats::Categorical { values: known, .. }) =
            (payload, &summary.stats)
        {
            for v in values.iter().filter(|v| !known.contains(v)) {
                errors.push(format!("{at}/values: unknown category {v:?} for {}.{}", payload.entity(), payload.field()));
            }
        }
        if let Some(target) = payload.update_target() {
            match ctx.filters.get(target) {
                None => errors.push(format!("{at}/update: unknown filter id '{target}'")),
                Some(existing) => {
                    let same_kind = matches!(
                        (existing, payload),
                        (Filter::Interval(_), FilterPayload::Interval { .. }) | (Filter::Point(_), FilterPayload::Point { .. })
                    );
                    if !same_kind || existing.entity() != payload.entity() || existing.field() != payload.field() {
                        errors.push(format!("{at}/update: filter '{target}' is on a different field or kind"));
                    }
                }
            }
        }
    }
    if errors.is_empty() {
        Ok(action)
    } else {
        Err(errors)
    }
}

pub fn parse_viz_action(value: &Value, message: &str, ctx: &AgentContext) -> Result<VizAction, Vec<String>> {
    let Some(obj) = value.as_object() else {
        return Err(vec!["expected an object with a spec".into()]);
    };
    let mut errors: Vec<String> = obj
        .keys()
        .filter(|k| *k != "spec" && *k != "caption")
        .map(|k| format!("unknown key {k:?}"))
        .collect();
    let caption = match obj.get("caption") {
        None | Some(Value::Null) => message.to_owned(),
        Some(Value::String(s)) if s.trim().is_empty() => message.to_owned(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            errors.push("/caption: expected string".into());
            String::new()
        }
    };
    let Some(doc) = obj.get("spec") else {
        errors.push("/spec: missing".into());
        return Err(errors);
    };
    if doc.get("interactivity").is_some() {
        errors.push("/spec/interactivity: interactivity is added by the system, leave it out".into());
    }
    match parse_spec_value(doc) {
        Ok(spec) => {
            let semantic = validate_against_schema(&spec, ctx.store.schema());
            errors.extend(semantic.iter().map(spec_error));
            if errors.is_empty() {
                return Ok(VizAction { spec, caption });
            }
        }
        Err(parse_errors) => errors.extend(parse_errors.iter().map(spec_error)),
    }
    Err(errors)
}

fn spec_error(e: &GrammarError) -> String {
    format!("/spec{}: {}", e.path, e.message)
}

fn render_prompt(ctx: &AgentContext, message: &str, rejected: &[String]) -> String {
    let mut out = ctx.rendered.clone();
    let _ = write!(out, "\nUser message: {message}\n");
    if !rejected.is_empty() {
        out.push_str("\nYour previous output was rejected:\n");
        for e in rejected {
            let _ = writeln!(out, "- {e}");
        }
        out.push_str("Return a corrected document.\n");
    }
    out
}

struct Call<'a> {
    backend: &'a dyn Backend,
    task: AgentTask,
    instructions: &'static str,
    schema: Value,
    retries: usize,
}

impl Call<'_> {
    fn run<T>(
        self,
        message: &str,
        ctx: &AgentContext,
        check: impl Fn(&Value) -> Result<T, Vec<String>>,
    ) -> Result<T, AgentError> {
        let mut rejected = Vec::new();
        for attempt in 0..=self.retries {
            let request = CompletionRequest {
                task: self.task,
                instructions: self.instructions.to_owned(),
                user_message: render_prompt(ctx, message, &rejected),
                query: message.to_owned(),
                output_schema: self.schema.clone(),
                attempt,
            };
            rejected = match self.backend.complete(&request) {
                Ok(doc) => match check(&doc) {
                    Ok(v) => return Ok(v),
                    Err(errors) => errors,
                },
                Err(BackendError::Malformed(m)) => vec![format!("output was not a JSON document: {m}")],
                Err(e) => return Err(e.into()),
            };
        }
        Err(AgentError::Exhausted {
            task: self.task,
            attempts: self.retries + 1,
            errors: rejected,
        })
    }
}

pub fn route(message: &str, ctx: &AgentContext, backend: &dyn Backend, retries: usize) -> Result<AgentRoute, AgentError> {
    Call {
        backend,
        task: AgentTask::Route,
        instructions: ROUTE_INSTRUCTIONS,
        schema: route_schema(),
        retries,
    }
    .run(message, ctx, parse_route)
}

pub fn run_filter_agent(
    message: &str,
    ctx: &AgentContext,
    backend: &dyn Backend,
    retries: usize,
) -> Result<FilterAction, AgentError> {
    Call {
        backend,
        task: AgentTask::Filter,
        instructions: FILTER_INSTRUCTIONS,
        schema: filter_schema(),
        retries,
    }
    .run(message, ctx, |v| parse_filter_action(v, ctx))
}

pub fn run_viz_agent(
    message: &str,
    ctx: &AgentContext,
    backend: &dyn Backend,
    retries: usize,
) -> Result<VizAction, AgentError> {
    Call {
        backend,
        task: AgentTask::Visualize,
        instructions: VIZ_INSTRUCTIONS,
        schema: viz_schema(),
        retries,
    }
    .run(message, ctx, |v| parse_viz_action(v, message, ctx))
}

/// Result of one message through the pipeline. Agents that were not
/// needed are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub route: Result<AgentRoute, AgentError>,
    pub filter: Option<Result<FilterAction, AgentError>>,
    pub viz: Option<Result<VizAction, AgentError>>,
}

/// Router/filter and visualization backends plus pipeline settings.
#[derive(Clone)]
pub struct Agents {
    pub router: Arc<dyn Backend>,
    pub viz: Arc<dyn Backend>,
    pub retries: usize,
    pub history_window: usize,
    pub cardinality_cap: usize,
}

impl Agents {
    pub fn new(router: Arc<dyn Backend>, viz: Arc<dyn Backend>) -> Self {
        Agents {
            router,
            viz,
            retries: DEFAULT_RETRIES,
            history_window: DEFAULT_HISTORY_WINDOW,
            cardinality_cap: crate::data::DEFAULT_CARDINALITY_CAP,
        }
    }

    /// One backend for every role.
    pub fn single(backend: Arc<dyn Backend>) -> Self {
        Agents::new(backend.clone(), backend)
    }

    pub fn context(&self, store: Arc<DatasetStore>, state: &FilterState, history: &[HistoryLine]) -> AgentContext {
        let start = history.len().saturating_sub(self.history_window);
        build_context(store, state, &history[start..], self.cardinality_cap)
    }

    pub fn run(&self, message: &str, ctx: &AgentContext) -> AgentOutcome {
        let route = route(message, ctx, self.router.as_ref(), self.retries);
        let (filter, viz) = match &route {
            Ok(r) => (
                r.needs_filter
                    .then(|| run_filter_agent(message, ctx, self.router.as_ref(), self.retries)),
                r.needs_visualization
                    .then(|| run_viz_agent(message, ctx, self.viz.as_ref(), self.retries)),
            ),
            Err(_) => (None, None),
        };
        AgentOutcome { route, filter, viz }
    }
}
