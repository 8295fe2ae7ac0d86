//! Per-conversation state: chat, filters with provenance, dashboard views
//! and selections. Every mutation yields a [`SessionDelta`]; applying the
//! deltas in order to an empty [`SessionSnapshot`] rebuilds the state.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agents::{
    describe_filter, AgentContext, AgentOutcome, Agents, FilterAction, HistoryLine, Role, VizAction,
    CAPABILITIES_MESSAGE,
};
use crate::data::DatasetStore;
use crate::executor::{execute, visible_rows, ResultTable};
use crate::filter::{
    resolve_visibility, Filter, FilterError, FilterSource, FilterState, FilterUpdate, IntervalFilter, PointFilter,
    VisibilityMap,
};
use crate::grammar::{compile, inject_interactivity, Plan, SelectionDecl, SelectionKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub id: u64,
    pub role: Role,
    pub text: String,
    /// The user message this turn responds to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refers_to: Option<u64>,
    /// Filter widgets shown inline with this turn.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filters: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub views: Vec<String>,
}

/// A brush or click in a view. Interval bounds follow the order of the
/// view's declared selection fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum SelectionPayload {
    #[serde(rename = "interval_1d")]
    Interval1d { min: f64, max: f64 },
    #[serde(rename = "interval_2d")]
    Interval2d { x: [f64; 2], y: [f64; 2] },
    #[serde(rename = "point")]
    Point { values: BTreeSet<String> },
}

impl SelectionPayload {
    pub fn kind(&self) -> SelectionKind {
        match self {
            SelectionPayload::Interval1d { .. } => SelectionKind::Interval1d,
            SelectionPayload::Interval2d { .. } => SelectionKind::Interval2d,
            SelectionPayload::Point { .. } => SelectionKind::Point,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewState {
    pub id: String,
    pub caption: String,
    /// User message that created the view.
    pub message: u64,
    /// Spec as produced by the agent.
    pub original_spec: Value,
    /// Spec with the interactivity block added.
    pub spec: Value,
    pub selection: SelectionDecl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_selection: Option<SelectionPayload>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKind {
    Message,
    FilterUpdate,
    FilterRemove,
    Selection,
    SelectionClear,
}

impl DeltaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DeltaKind::Message => "message",
            DeltaKind::FilterUpdate => "filter_update",
            DeltaKind::FilterRemove => "filter_remove",
            DeltaKind::Selection => "selection",
            DeltaKind::SelectionClear => "selection_clear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDelta {
    pub seq: u64,
    pub kind: DeltaKind,
    #[serde(default)]
    pub chat: Vec<ChatTurn>,
    #[serde(default)]
    pub filters_added: Vec<Filter>,
    #[serde(default)]
    pub filters_updated: Vec<Filter>,
    #[serde(default)]
    pub filters_removed: Vec<String>,
    #[serde(default)]
    pub views_added: Vec<ViewState>,
    #[serde(default)]
    pub views_updated: Vec<ViewState>,
    /// Views whose data should be re-fetched.
    #[serde(default)]
    pub refresh: Vec<String>,
    pub filter_version: u64,
}

impl SessionDelta {
    fn new(seq: u64, kind: DeltaKind) -> Self {
        SessionDelta {
            seq,
            kind,
            chat: Vec::new(),
            filters_added: Vec::new(),
            filters_updated: Vec::new(),
            filters_removed: Vec::new(),
            views_added: Vec::new(),
            views_updated: Vec::new(),
            refresh: Vec::new(),
            filter_version: 0,
        }
    }

    pub fn changes_filters(&self) -> bool {
        !(self.filters_added.is_empty() && self.filters_updated.is_empty() && self.filters_removed.is_empty())
    }

    /// One delta log line: `{seq, kind, payload}`.
    pub fn log_record(&self) -> Value {
        json!({"seq": self.seq, "kind": self.kind.as_str(), "payload": self})
    }
}

/// Full session state as seen by clients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub seq: u64,
    pub chat: Vec<ChatTurn>,
    pub filters: FilterState,
    pub views: Vec<ViewState>,
}

impl SessionSnapshot {
    pub fn empty(session_id: &str) -> Self {
        SessionSnapshot {
            session_id: session_id.to_owned(),
            ..Default::default()
        }
    }

    /// Applies one delta. Removals go first, then in-place updates, then
    /// additions in order.
    pub fn apply(&mut self, delta: &SessionDelta) {
        self.seq = delta.seq;
        self.chat.extend(delta.chat.iter().cloned());
        self.filters.filters.retain(|f| !delta.filters_removed.iter().any(|id| id == f.id()));
        for updated in &delta.filters_updated {
            if let Some(slot) = self.filters.filters.iter_mut().find(|f| f.id() == updated.id()) {
                *slot = updated.clone();
            }
        }
        self.filters.filters.extend(delta.filters_added.iter().cloned());
        self.filters.version = delta.filter_version;
        for updated in &delta.views_updated {
            if let Some(slot) = self.views.iter_mut().find(|v| v.id == updated.id) {
                *slot = updated.clone();
            }
        }
        self.views.extend(delta.views_added.iter().cloned());
    }

    pub fn replay<'a>(session_id: &str, deltas: impl IntoIterator<Item = &'a SessionDelta>) -> Self {
        let mut snap = Self::empty(session_id);
        for d in deltas {
            snap.apply(d);
        }
        snap
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("another message is still being processed")]
    Busy,
    #[error("unknown filter id '{0}'")]
    UnknownFilter(String),
    #[error("unknown view id '{0}'")]
    UnknownView(String),
    #[error("unknown entity '{0}'")]
    UnknownEntity(String),
    #[error("view {view} takes {expected} selections, got {found}")]
    SelectionKindMismatch {
        view: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error(transparent)]
    Filter(#[from] FilterError),
}

#[derive(Debug, Clone)]
struct View {
    state: ViewState,
    plan: Plan,
}

/// Context captured for one message before the agents run.
#[derive(Debug, Clone)]
pub struct PreparedMessage {
    pub text: String,
    pub context: AgentContext,
}

/// Single-writer session state machine.
#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    store: Arc<DatasetStore>,
    seq: u64,
    chat: Vec<ChatTurn>,
    state: FilterState,
    views: Vec<View>,
    next_filter: u64,
    next_view: u64,
    next_group: u64,
}

impl Session {
    pub fn new(id: impl Into<String>, store: Arc<DatasetStore>) -> Self {
        Session {
            id: id.into(),
            store,
            seq: 0,
            chat: Vec::new(),
            state: FilterState::new(),
            views: Vec::new(),
            next_filter: 1,
            next_view: 1,
            next_group: 1,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn store(&self) -> &Arc<DatasetStore> {
        &self.store
    }

    pub fn filters(&self) -> &FilterState {
        &self.state
    }

    pub fn chat(&self) -> &[ChatTurn] {
        &self.chat
    }

    pub fn view(&self, id: &str) -> Option<&ViewState> {
        self.views.iter().find(|v| v.state.id == id).map(|v| &v.state)
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            session_id: self.id.clone(),
            seq: self.seq,
            chat: self.chat.clone(),
            filters: self.state.clone(),
            views: self.views.iter().map(|v| v.state.clone()).collect(),
        }
    }

    pub fn history(&self) -> Vec<HistoryLine> {
        self.chat
            .iter()
            .map(|t| HistoryLine {
                role: t.role,
                text: t.text.clone(),
            })
            .collect()
    }

    /// Runs the whole pipeline in one go. [`SharedSession`] splits it so
    /// agent calls happen outside the lock.
    pub fn handle_message(&mut self, agents: &Agents, text: &str) -> SessionDelta {
        let prepared = self.prepare_message(agents, text);
        let outcome = agents.run(&prepared.text, &prepared.context);
        self.commit_message(&prepared.text, outcome)
    }

    pub fn prepare_message(&self, agents: &Agents, text: &str) -> PreparedMessage {
        PreparedMessage {
            text: text.to_owned(),
            context: agents.context(self.store.clone(), &self.state, &self.history()),
        }
    }

    /// Records the user turn and applies whatever the agents produced that
    /// is still valid against the current state.
    pub fn commit_message(&mut self, text: &str, outcome: AgentOutcome) -> SessionDelta {
        let mut delta = self.begin(DeltaKind::Message);
        let message = self.push_turn(&mut delta, Role::User, text.to_owned(), None);

        match outcome.route {
            Err(e) => {
                self.push_turn(&mut delta, Role::System, format!("Could not handle message #{message}: {e}"), Some(message));
            }
            Ok(route) if route.is_conversational() => {
                self.push_turn(&mut delta, Role::Agent, CAPABILITIES_MESSAGE.to_owned(), Some(message));
            }
            Ok(_) => {
                match outcome.filter {
                    Some(Ok(action)) => self.apply_filter_action(&mut delta, message, &action),
                    Some(Err(e)) => {
                        self.push_turn(&mut delta, Role::System, format!("Filter agent failed for message #{message}: {e}"), Some(message));
                    }
                    None => {}
                }
                match outcome.viz {
                    Some(Ok(action)) => self.apply_viz_action(&mut delta, message, action),
                    Some(Err(e)) => {
                        self.push_turn(
                            &mut delta,
                            Role::System,
                            format!("Visualization agent failed for message #{message}: {e}"),
                            Some(message),
                        );
                    }
                    None => {}
                }
            }
        }
        if delta.changes_filters() {
            delta.refresh = self.views.iter().map(|v| v.state.id.clone()).collect();
        } else {
            delta.refresh = delta.views_added.iter().map(|v| v.id.clone()).collect();
        }
        self.finish(delta)
    }

    fn apply_filter_action(&mut self, delta: &mut SessionDelta, message: u64, action: &FilterAction) {
        let schema = self.store.schema();
        let mut next = self.state.clone();
        let mut added = Vec::new();
        let mut updated = Vec::new();
        let mut lines = Vec::new();
        let mut next_filter = self.next_filter;
        let mut failure = None;
        for payload in &action.filters {
            let result = match payload.update_target() {
                Some(target) => next.revise(target, &payload.as_update(), false).map(|s| {
                    let f = s.get(target).cloned().expect("revised filter exists");
                    lines.push(format!("updated {}: {}", f.id(), describe_filter(&f)));
                    if !added.contains(&f.id().to_owned()) && !updated.contains(&f.id().to_owned()) {
                        updated.push(f.id().to_owned());
                    }
                    s
                }),
                None => {
                    let id = format!("f{next_filter}");
                    let f = payload.to_filter(id.clone(), FilterSource::Agent { message });
                    next.add_filter(f.clone(), schema).map(|s| {
                        next_filter += 1;
                        lines.push(format!("added {id}: {}", describe_filter(&f)));
                        added.push(id);
                        s
                    })
                }
            };
            match result {
                Ok(s) => next = s,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = failure {
            self.push_turn(
                delta,
                Role::System,
                format!("Filter agent output for message #{message} was not applied: {e}"),
                Some(message),
            );
            return;
        }
        if added.is_empty() && updated.is_empty() {
            self.push_turn(delta, Role::System, format!("Filter agent made no changes for message #{message}"), Some(message));
            return;
        }
        self.state = next;
        self.next_filter = next_filter;
        delta.filters_added = added.iter().filter_map(|id| self.state.get(id).cloned()).collect();
        delta.filters_updated = updated.iter().filter_map(|id| self.state.get(id).cloned()).collect();
        let mut widgets = added.clone();
        widgets.extend(updated);
        self.push_turn(
            delta,
            Role::System,
            format!("Filter agent (message #{message}) {}", lines.join("; ")),
            Some(message),
        );
        if let Some(last) = delta.chat.last_mut() {
            last.filters = widgets.clone();
        }
        if let Some(last) = self.chat.last_mut() {
            last.filters = widgets;
        }
    }

    fn apply_viz_action(&mut self, delta: &mut SessionDelta, message: u64, action: VizAction) {
        let id = format!("v{}", self.next_view);
        let schema = self.store.schema();
        let built = inject_interactivity(&action.spec, schema, &id)
            .and_then(|(injected, decl)| compile(&injected, schema).map(|plan| (injected, decl, plan)));
        let (injected, decl, plan) = match built {
            Ok(parts) => parts,
            Err(errors) => {
                let detail: Vec<String> = errors.iter().map(ToString::to_string).collect();
                self.push_turn(
                    delta,
                    Role::System,
                    format!("Visualization for message #{message} was not added: {}", detail.join("; ")),
                    Some(message),
                );
                return;
            }
        };
        self.next_view += 1;
        let state = ViewState {
            id: id.clone(),
            caption: action.caption.clone(),
            message,
            original_spec: action.spec.to_document(),
            spec: injected.to_document(),
            selection: decl,
            active_selection: None,
        };
        self.views.push(View {
            state: state.clone(),
            plan,
        });
        delta.views_added.push(state);
        self.push_turn(
            delta,
            Role::System,
            format!("Visualization agent (message #{message}) added view {id}: {}", action.caption),
            Some(message),
        );
        if let Some(last) = delta.chat.last_mut() {
            last.views = vec![id.clone()];
        }
        if let Some(last) = self.chat.last_mut() {
            last.views = vec![id];
        }
    }

    /// User edit through a filter widget.
    pub fn update_filter_widget(&mut self, filter_id: &str, update: &FilterUpdate) -> Result<SessionDelta, SessionError> {
        if self.state.get(filter_id).is_none() {
            return Err(SessionError::UnknownFilter(filter_id.to_owned()));
        }
        let next = self.state.update_filter(filter_id, update)?;
        self.state = next;
        let mut delta = self.begin(DeltaKind::FilterUpdate);
        delta.filters_updated.push(self.state.get(filter_id).cloned().expect("updated filter exists"));
        delta.refresh = self.all_view_ids();
        Ok(self.finish(delta))
    }

    /// Removes a filter. Removing one filter of a selection removes the
    /// whole selection and clears it on its view.
    pub fn remove_filter(&mut self, filter_id: &str) -> Result<SessionDelta, SessionError> {
        let target = self
            .state
            .get(filter_id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownFilter(filter_id.to_owned()))?;
        let mut delta = self.begin(DeltaKind::FilterRemove);
        match target.source().clone() {
            FilterSource::Selection { view, group } => {
                delta.filters_removed = self
                    .state
                    .filters
                    .iter()
                    .filter(|f| matches!(f.source(), FilterSource::Selection { group: g, .. } if *g == group))
                    .map(|f| f.id().to_owned())
                    .collect();
                self.state = self.state.retain(|f| !delta.filters_removed.iter().any(|id| id == f.id()));
                if let Some(v) = self.views.iter_mut().find(|v| v.state.id == view) {
                    v.state.active_selection = None;
                    delta.views_updated.push(v.state.clone());
                }
            }
            _ => {
                self.state = self.state.remove_filter(filter_id)?;
                delta.filters_removed.push(filter_id.to_owned());
            }
        }
        delta.refresh = self.all_view_ids();
        Ok(self.finish(delta))
    }

    /// Materializes a brush or click as filters owned by the view,
    /// replacing the view's previous selection.
    pub fn apply_selection(&mut self, view_id: &str, payload: &SelectionPayload) -> Result<SessionDelta, SessionError> {
        let view = self.view(view_id).ok_or_else(|| SessionError::UnknownView(view_id.to_owned()))?;
        let decl = view.selection.clone();
        if decl.kind != payload.kind() {
            return Err(SessionError::SelectionKindMismatch {
                view: view_id.to_owned(),
                expected: decl.kind.as_str(),
                found: payload.kind().as_str(),
            });
        }
        let group = format!("g{}", self.next_group);
        let source = FilterSource::Selection {
            view: view_id.to_owned(),
            group: group.clone(),
        };
        let mut next_filter = self.next_filter;
        let mut fresh = |field: &str, bounds: Option<[f64; 2]>, values: Option<&BTreeSet<String>>| {
            let id = format!("f{next_filter}");
            next_filter += 1;
            match (bounds, values) {
                (Some([min, max]), _) => Filter::Interval(IntervalFilter {
                    id,
                    entity: decl.entity.clone(),
                    field: field.to_owned(),
                    min,
                    max,
                    source: source.clone(),
                    user_adjusted: false,
                }),
                (None, Some(values)) => Filter::Point(PointFilter {
                    id,
                    entity: decl.entity.clone(),
                    field: field.to_owned(),
                    values: values.clone(),
                    source: source.clone(),
                    user_adjusted: false,
                }),
                (None, None) => unreachable!("selection filter needs bounds or values"),
            }
        };
        let new_filters = match payload {
            SelectionPayload::Interval1d { min, max } => vec![fresh(&decl.fields[0], Some([*min, *max]), None)],
            SelectionPayload::Interval2d { x, y } => {
                vec![fresh(&decl.fields[0], Some(*x), None), fresh(&decl.fields[1], Some(*y), None)]
            }
            SelectionPayload::Point { values } => vec![fresh(&decl.fields[0], None, Some(values))],
        };

        let removed: Vec<String> = self
            .state
            .filters
            .iter()
            .filter(|f| f.selection_view() == Some(view_id))
            .map(|f| f.id().to_owned())
            .collect();
        let mut next = self.state.retain(|f| f.selection_view() != Some(view_id));
        for f in &new_filters {
            next = next.add_filter(f.clone(), self.store.schema())?;
        }
        self.state = next;
        self.next_filter = next_filter;
        self.next_group += 1;

        let mut delta = self.begin(DeltaKind::Selection);
        delta.filters_removed = removed;
        delta.filters_added = new_filters;
        let v = self.views.iter_mut().find(|v| v.state.id == view_id).expect("view checked above");
        v.state.active_selection = Some(payload.clone());
        delta.views_updated.push(v.state.clone());
        delta.refresh = self.all_view_ids().into_iter().filter(|id| id != view_id).collect();
        Ok(self.finish(delta))
    }

    pub fn clear_selection(&mut self, view_id: &str) -> Result<SessionDelta, SessionError> {
        if self.view(view_id).is_none() {
            return Err(SessionError::UnknownView(view_id.to_owned()));
        }
        let mut delta = self.begin(DeltaKind::SelectionClear);
        delta.filters_removed = self
            .state
            .filters
            .iter()
            .filter(|f| f.selection_view() == Some(view_id))
            .map(|f| f.id().to_owned())
            .collect();
        if !delta.filters_removed.is_empty() {
            self.state = self.state.retain(|f| f.selection_view() != Some(view_id));
        }
        let v = self.views.iter_mut().find(|v| v.state.id == view_id).expect("view checked above");
        v.state.active_selection = None;
        delta.views_updated.push(v.state.clone());
        delta.refresh = self.all_view_ids().into_iter().filter(|id| id != view_id).collect();
        Ok(self.finish(delta))
    }

    pub fn visibility(&self) -> VisibilityMap {
        resolve_visibility(self.store.schema(), &self.store, &self.state)
    }

    /// A view's data under every filter except its own selection.
    pub fn get_view_data(&self, view_id: &str) -> Result<ResultTable, SessionError> {
        let view = self
            .views
            .iter()
            .find(|v| v.state.id == view_id)
            .ok_or_else(|| SessionError::UnknownView(view_id.to_owned()))?;
        let own_excluded = self.state.excluding_view(view_id);
        let vis = resolve_visibility(self.store.schema(), &self.store, &own_excluded);
        Ok(execute(&view.plan, &self.store, &vis).with_provenance(Some(view_id), self.state.version))
    }

    pub fn entity_rows(&self, entity: &str, offset: usize, limit: Option<usize>) -> Result<ResultTable, SessionError> {
        visible_rows(&self.store, &self.visibility(), entity, offset, limit)
            .map(|t| t.with_provenance(None, self.state.version))
            .ok_or_else(|| SessionError::UnknownEntity(entity.to_owned()))
    }

    /// Sorted primary keys of visible rows; defaults to the dataset entity.
    pub fn export_visible(&self, entity: Option<&str>) -> Result<Vec<String>, SessionError> {
        let schema = self.store.schema();
        let entity = entity.unwrap_or(&schema.dataset_entity().name);
        if schema.entity(entity).is_none() {
            return Err(SessionError::UnknownEntity(entity.to_owned()));
        }
        Ok(self.visibility().keys(entity, &self.store))
    }

    fn all_view_ids(&self) -> Vec<String> {
        self.views.iter().map(|v| v.state.id.clone()).collect()
    }

    fn begin(&self, kind: DeltaKind) -> SessionDelta {
        SessionDelta::new(self.seq + 1, kind)
    }

    fn finish(&mut self, mut delta: SessionDelta) -> SessionDelta {
        self.seq = delta.seq;
        delta.filter_version = self.state.version;
        delta
    }

    fn push_turn(&mut self, delta: &mut SessionDelta, role: Role, text: String, refers_to: Option<u64>) -> u64 {
        let id = self.chat.len() as u64 + 1;
        let turn = ChatTurn {
            id,
            role,
            text,
            refers_to,
            filters: Vec::new(),
            views: Vec::new(),
        };
        self.chat.push(turn.clone());
        delta.chat.push(turn);
        id
    }
}

pub type DeltaHook = Arc<dyn Fn(&SessionDelta) + Send + Sync>;

/// A session shared between threads. Messages are single-flight: agents
/// run without holding the lock, and a second message arriving meanwhile
/// is rejected with [`SessionError::Busy`]. Widget and selection edits
/// still go through while agents work.
pub struct SharedSession {
    inner: Mutex<Session>,
    busy: AtomicBool,
    agents: Agents,
    hook: Option<DeltaHook>,
}

struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

impl SharedSession {
    pub fn new(session: Session, agents: Agents) -> Self {
        SharedSession {
            inner: Mutex::new(session),
            busy: AtomicBool::new(false),
            agents,
            hook: None,
        }
    }

    /// Called with every delta while the session lock is held, so hooks
    /// observe deltas in sequence order.
    pub fn with_hook(mut self, hook: DeltaHook) -> Self {
        self.hook = Some(hook);
        self
    }

    pub fn lock(&self) -> MutexGuard<'_, Session> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn is_busy(&self) -> bool {
        self.busy.load(Ordering::Acquire)
    }

    pub fn handle_message(&self, text: &str) -> Result<SessionDelta, SessionError> {
        if self.busy.swap(true, Ordering::AcqRel) {
            return Err(SessionError::Busy);
        }
        let _guard = BusyGuard(&self.busy);
        let prepared = self.lock().prepare_message(&self.agents, text);
        let outcome = self.agents.run(&prepared.text, &prepared.context);
        let mut session = self.lock();
        let delta = session.commit_message(&prepared.text, outcome);
        self.emit(&delta);
        Ok(delta)
    }

    pub fn update_filter_widget(&self, filter_id: &str, update: &FilterUpdate) -> Result<SessionDelta, SessionError> {
        self.mutate(|s| s.update_filter_widget(filter_id, update))
    }

    pub fn remove_filter(&self, filter_id: &str) -> Result<SessionDelta, SessionError> {
        self.mutate(|s| s.remove_filter(filter_id))
    }

    pub fn apply_selection(&self, view_id: &str, payload: &SelectionPayload) -> Result<SessionDelta, SessionError> {
        self.mutate(|s| s.apply_selection(view_id, payload))
    }

    pub fn clear_selection(&self, view_id: &str) -> Result<SessionDelta, SessionError> {
        self.mutate(|s| s.clear_selection(view_id))
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        self.lock().snapshot()
    }

    fn mutate(&self, op: impl FnOnce(&mut Session) -> Result<SessionDelta, SessionError>) -> Result<SessionDelta, SessionError> {
        let mut session = self.lock();
        let delta = op(&mut session)?;
        self.emit(&delta);
        Ok(delta)
    }

    fn emit(&self, delta: &SessionDelta) {
        if let Some(hook) = &self.hook {
            hook(delta);
        }
    }
}
