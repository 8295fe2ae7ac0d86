//! Transcript replay through a fresh session.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Map, Value};

use udi_core::agents::Agents;
use udi_core::data::DatasetStore;
use udi_core::executor::ResultTable;
use udi_core::filter::FilterUpdate;
use udi_core::session::{SelectionPayload, Session, SessionDelta, SessionError, SessionSnapshot};

use crate::CliError;

pub const SESSION_ID: &str = "replay";

/// One recorded user action.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Text(String),
    WidgetUpdate { filter: String, update: FilterUpdate },
    Selection { view: String, payload: SelectionPayload },
    ClearSelection(String),
    RemoveFilter(String),
    /// Identifier export; `None` means the dataset entity.
    Export(Option<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub backend_script: Option<PathBuf>,
    pub messages: Vec<Step>,
}

fn step_from_value(i: usize, value: &Value) -> Result<Step, String> {
    let at = format!("/messages/{i}");
    let obj = value.as_object().ok_or_else(|| format!("{at}: expected object"))?;
    if obj.len() != 1 {
        return Err(format!("{at}: expected exactly one of text, widget_update, selection, clear_selection, remove_filter, export"));
    }
    let (key, body) = obj.iter().next().unwrap();
    let string = |v: &Value, what: &str| {
        v.as_str()
            .map(str::to_owned)
            .ok_or_else(|| format!("{at}/{key}: {what} must be a string"))
    };
    let take_id = |field: &str| -> Result<(String, Value), String> {
        let mut rest = body.as_object().cloned().ok_or_else(|| format!("{at}/{key}: expected object"))?;
        let id = rest
            .remove(field)
            .ok_or_else(|| format!("{at}/{key}: missing {field}"))
            .and_then(|v| string(&v, field))?;
        Ok((id, Value::Object(rest)))
    };
    Ok(match key.as_str() {
        "text" => Step::Text(string(body, "text")?),
        "widget_update" => {
            let (filter, rest) = take_id("filter")?;
            let update = serde_json::from_value(rest).map_err(|e| format!("{at}/{key}: {e}"))?;
            Step::WidgetUpdate { filter, update }
        }
        "selection" => {
            let (view, rest) = take_id("view")?;
            let payload = serde_json::from_value(rest).map_err(|e| format!("{at}/{key}: {e}"))?;
            Step::Selection { view, payload }
        }
        "clear_selection" => Step::ClearSelection(string(body, "view")?),
        "remove_filter" => Step::RemoveFilter(string(body, "filter")?),
        "export" => Step::Export(match body {
            Value::Null => None,
            v => Some(string(v, "entity")?),
        }),
        other => return Err(format!("{at}: unknown step '{other}'")),
    })
}

impl Transcript {
    pub fn parse(document: &str) -> Result<Transcript, String> {
        let root: Value = serde_json::from_str(document).map_err(|e| format!("invalid JSON: {e}"))?;
        let obj = root.as_object().ok_or("transcript must be an object")?;
        if let Some(k) = obj.keys().find(|k| *k != "messages" && *k != "backend_script") {
            return Err(format!("/{k}: unknown key"));
        }
        let backend_script = match obj.get("backend_script") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => return Err("/backend_script: expected string".into()),
        };
        let messages = obj
            .get("messages")
            .and_then(Value::as_array)
            .ok_or("/messages: expected array")?
            .iter()
            .enumerate()
            .map(|(i, v)| step_from_value(i, v))
            .collect::<Result<_, _>>()?;
        Ok(Transcript { backend_script, messages })
    }

    /// Reads a transcript; `backend_script` is resolved against the
    /// transcript's directory.
    pub fn load(path: &Path) -> Result<Transcript, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut t = Transcript::parse(&text).map_err(|e| CliError::Transcript(format!("{}: {e}", path.display())))?;
        if let Some(script) = &t.backend_script {
            if script.is_relative() {
                t.backend_script = Some(path.parent().unwrap_or(Path::new(".")).join(script));
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepError {
    pub step: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportRecord {
    pub step: usize,
    pub entity: String,
    pub ids: Vec<String>,
}

/// Everything a replay produced.
#[derive(Debug, Clone)]
pub struct ReplayRun {
    pub snapshot: SessionSnapshot,
    pub deltas: Vec<SessionDelta>,
    pub views: Vec<(String, ResultTable)>,
    /// Final visible identifiers for every entity, in schema order.
    pub exports: Vec<(String, Vec<String>)>,
    pub requested_exports: Vec<ExportRecord>,
    pub errors: Vec<StepError>,
}

impl ReplayRun {
    pub fn export(&self, entity: &str) -> Option<&[String]> {
        self.exports.iter().find(|(e, _)| e == entity).map(|(_, ids)| ids.as_slice())
    }

    pub fn view(&self, id: &str) -> Option<&ResultTable> {
        self.views.iter().find(|(v, _)| v == id).map(|(_, t)| t)
    }
}

pub fn run_transcript(steps: &[Step], store: Arc<DatasetStore>, agents: &Agents) -> ReplayRun {
    let mut session = Session::new(SESSION_ID, store.clone());
    let mut deltas = Vec::new();
    let mut errors = Vec::new();
    let mut requested = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        let result: Result<Option<SessionDelta>, SessionError> = match step {
            Step::Text(text) => Ok(Some(session.handle_message(agents, text))),
            Step::WidgetUpdate { filter, update } => session.update_filter_widget(filter, update).map(Some),
            Step::Selection { view, payload } => session.apply_selection(view, payload).map(Some),
            Step::ClearSelection(view) => session.clear_selection(view).map(Some),
            Step::RemoveFilter(id) => session.remove_filter(id).map(Some),
            Step::Export(entity) => session.export_visible(entity.as_deref()).map(|ids| {
                let entity = entity
                    .clone()
                    .unwrap_or_else(|| store.schema().dataset_entity().name.clone());
                requested.push(ExportRecord { step: i, entity, ids });
                None
            }),
        };
        match result {
            Ok(Some(d)) => deltas.push(d),
            Ok(None) => {}
            Err(e) => errors.push(StepError { step: i, error: e.to_string() }),
        }
    }
    let snapshot = session.snapshot();
    let views = snapshot
        .views
        .iter()
        .map(|v| (v.id.clone(), session.get_view_data(&v.id).expect("view from snapshot exists")))
        .collect();
    let exports = store
        .schema()
        .entities
        .iter()
        .map(|e| (e.name.clone(), session.export_visible(Some(&e.name)).expect("schema entity")))
        .collect();
    ReplayRun {
        snapshot,
        deltas,
        views,
        exports,
        requested_exports: requested,
        errors,
    }
}

fn pretty(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Output files as `(relative path, contents)`, in write order.
pub fn render_outputs(run: &ReplayRun) -> Vec<(PathBuf, String)> {
    let mut files = vec![(PathBuf::from("state.json"), pretty(&run.snapshot))];
    let log: String = run.deltas.iter().map(|d| format!("{}\n", d.log_record())).collect();
    files.push((PathBuf::from("deltas.jsonl"), log));
    for (id, table) in &run.views {
        files.push((Path::new("views").join(format!("{id}.json")), pretty(table)));
    }
    let mut exports = Map::new();
    for (entity, ids) in &run.exports {
        exports.insert(entity.clone(), json!(ids));
    }
    files.push((PathBuf::from("exports.json"), pretty(&exports)));
    let report = json!({
        "steps": run.deltas.len() + run.requested_exports.len() + run.errors.len(),
        "exports": run.requested_exports,
        "errors": run.errors,
    });
    files.push((PathBuf::from("report.json"), pretty(&report)));
    files
}

pub fn write_outputs(run: &ReplayRun, out_dir: &Path) -> Result<(), CliError> {
    let views = out_dir.join("views");
    if views.exists() {
        fs::remove_dir_all(&views).map_err(|e| CliError::io(&views, e))?;
    }
    fs::create_dir_all(&views).map_err(|e| CliError::io(&views, e))?;
    for (rel, contents) in render_outputs(run) {
        let path = out_dir.join(rel);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

/// Entity name to identifier list, for quick assertions.
pub fn exports_map(run: &ReplayRun) -> BTreeMap<String, Vec<String>> {
    run.exports.iter().cloned().collect()
}
