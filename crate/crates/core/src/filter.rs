//! Active filter state and cross-entity visibility.
//!
//! Filters are conjunctive: every filter on an entity must hold for a row to
//! stay a candidate, and candidates are then pruned across relation edges
//! until a fixpoint is reached. Pruning across an edge is only enabled toward
//! the side opposite a restricted entity, so an unfiltered component of the
//! schema keeps every row (a donor with no samples stays visible until
//! something downstream of it is filtered).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Cell, DatasetStore, FieldKind, SchemaDef};

/// Set of row indices within one entity table.
pub type RowSet = BTreeSet<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FilterSource {
    /// Created by an agent in response to the chat message with this id.
    Agent { message: u64 },
    /// Created directly through a filter widget.
    Widget,
    /// Materialized from a brush or click in a view. Filters from one
    /// gesture share a group id.
    Selection { view: String, group: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalFilter {
    pub id: String,
    pub entity: String,
    pub field: String,
    pub min: f64,
    pub max: f64,
    pub source: FilterSource,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub user_adjusted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFilter {
    pub id: String,
    pub entity: String,
    pub field: String,
    pub values: BTreeSet<String>,
    pub source: FilterSource,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub user_adjusted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Filter {
    Interval(IntervalFilter),
    Point(PointFilter),
}

/// New bounds or values for an existing filter (`{min,max}` or `{values}` on
/// the wire).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum FilterUpdate {
    Bounds { min: f64, max: f64 },
    Values { values: BTreeSet<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("unknown filter id '{0}'")]
    UnknownId(String),
    #[error("duplicate filter id '{0}'")]
    DuplicateId(String),
    #[error("unknown entity '{0}'")]
    UnknownEntity(String),
    #[error("unknown field {field} in entity '{entity}'")]
    UnknownField { entity: String, field: String },
    #[error("{entity}.{field} is {actual}; {expected}")]
    WrongKind {
        entity: String,
        field: String,
        actual: &'static str,
        expected: &'static str,
    },
    #[error("invalid bounds: min {min} > max {max}")]
    InvalidBounds { min: String, max: String },
    #[error("bounds must be finite numbers")]
    NonFiniteBounds,
    #[error("point filter needs at least one value")]
    EmptyValues,
    #[error("update does not match the kind of filter '{0}'")]
    UpdateKindMismatch(String),
}

impl Filter {
    pub fn id(&self) -> &str {
        match self {
            Filter::Interval(f) => &f.id,
            Filter::Point(f) => &f.id,
        }
    }

    pub fn entity(&self) -> &str {
        match self {
            Filter::Interval(f) => &f.entity,
            Filter::Point(f) => &f.entity,
        }
    }

    pub fn field(&self) -> &str {
        match self {
            Filter::Interval(f) => &f.field,
            Filter::Point(f) => &f.field,
        }
    }

    pub fn source(&self) -> &FilterSource {
        match self {
            Filter::Interval(f) => &f.source,
            Filter::Point(f) => &f.source,
        }
    }

    pub fn user_adjusted(&self) -> bool {
        match self {
            Filter::Interval(f) => f.user_adjusted,
            Filter::Point(f) => f.user_adjusted,
        }
    }

    /// The view whose selection produced this filter, if any.
    pub fn selection_view(&self) -> Option<&str> {
        match self.source() {
            FilterSource::Selection { view, .. } => Some(view),
            _ => None,
        }
    }

    /// Checks the filter against the schema: the entity and field exist,
    /// intervals target quantitative fields, point filters target categorical
    /// (or, for row selections, identifier) fields, and bounds are sane.
    pub fn validate(&self, schema: &SchemaDef) -> Result<(), FilterError> {
        let entity = schema
            .entity(self.entity())
            .ok_or_else(|| FilterError::UnknownEntity(self.entity().to_owned()))?;
        let field = entity
            .field(self.field())
            .ok_or_else(|| FilterError::UnknownField {
                entity: self.entity().to_owned(),
                field: self.field().to_owned(),
            })?;
        let wrong_kind = |expected| FilterError::WrongKind {
            entity: self.entity().to_owned(),
            field: self.field().to_owned(),
            actual: field.kind.as_str(),
            expected,
        };
        match self {
            Filter::Interval(f) => {
                if field.kind != FieldKind::Quantitative {
                    return Err(wrong_kind("interval filters need a quantitative field"));
                }
                check_bounds(f.min, f.max)
            }
            Filter::Point(f) => {
                if field.kind == FieldKind::Quantitative {
                    return Err(wrong_kind("point filters need a categorical field"));
                }
                if f.values.is_empty() {
                    return Err(FilterError::EmptyValues);
                }
                Ok(())
            }
        }
    }

    /// Whether a single cell passes this filter. Missing never passes.
    pub fn accepts(&self, cell: &Cell) -> bool {
        match (self, cell) {
            (Filter::Interval(f), Cell::Number(v)) => f.min <= *v && *v <= f.max,
            (Filter::Point(f), Cell::Text(s)) => f.values.contains(s),
            (Filter::Point(f), Cell::Number(v)) => f.values.contains(&Cell::Number(*v).to_string()),
            _ => false,
        }
    }

    fn with_update(&self, update: &FilterUpdate) -> Result<Filter, FilterError> {
        match (self, update) {
            (Filter::Interval(f), FilterUpdate::Bounds { min, max }) => {
                check_bounds(*min, *max)?;
                Ok(Filter::Interval(IntervalFilter {
                    min: *min,
                    max: *max,
                    ..f.clone()
                }))
            }
            (Filter::Point(f), FilterUpdate::Values { values }) => {
                if values.is_empty() {
                    return Err(FilterError::EmptyValues);
                }
                Ok(Filter::Point(PointFilter {
                    values: values.clone(),
                    ..f.clone()
                }))
            }
            _ => Err(FilterError::UpdateKindMismatch(self.id().to_owned())),
        }
    }

    fn mark_adjusted(&mut self) {
        match self {
            Filter::Interval(f) => f.user_adjusted = true,
            Filter::Point(f) => f.user_adjusted = true,
        }
    }
}

fn check_bounds(min: f64, max: f64) -> Result<(), FilterError> {
    if !min.is_finite() || !max.is_finite() {
        return Err(FilterError::NonFiniteBounds);
    }
    if min > max {
        return Err(FilterError::InvalidBounds {
            min: min.to_string(),
            max: max.to_string(),
        });
    }
    Ok(())
}

/// Ordered list of active filters. Every mutation returns a new state with
/// the version bumped; the receiver is left untouched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub filters: Vec<Filter>,
    pub version: u64,
}

impl FilterState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &str) -> Option<&Filter> {
        self.filters.iter().find(|f| f.id() == id)
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn add_filter(&self, filter: Filter, schema: &SchemaDef) -> Result<FilterState, FilterError> {
        filter.validate(schema)?;
        if self.get(filter.id()).is_some() {
            return Err(FilterError::DuplicateId(filter.id().to_owned()));
        }
        let mut next = self.clone();
        next.filters.push(filter);
        next.version += 1;
        Ok(next)
    }

    /// User edit through a widget: replaces bounds or values and marks the
    /// filter as user-adjusted, keeping its original source.
    pub fn update_filter(&self, id: &str, update: &FilterUpdate) -> Result<FilterState, FilterError> {
        self.revise(id, update, true)
    }

    /// Replaces bounds or values; `adjusted` records that a user made the edit.
    pub fn revise(&self, id: &str, update: &FilterUpdate, adjusted: bool) -> Result<FilterState, FilterError> {
        let pos = self
            .filters
            .iter()
            .position(|f| f.id() == id)
            .ok_or_else(|| FilterError::UnknownId(id.to_owned()))?;
        let mut updated = self.filters[pos].with_update(update)?;
        if adjusted {
            updated.mark_adjusted();
        }
        let mut next = self.clone();
        next.filters[pos] = updated;
        next.version += 1;
        Ok(next)
    }

    pub fn remove_filter(&self, id: &str) -> Result<FilterState, FilterError> {
        if self.get(id).is_none() {
            return Err(FilterError::UnknownId(id.to_owned()));
        }
        Ok(self.retain(|f| f.id() != id))
    }

    /// Keeps only the filters matching `keep`, bumping the version.
    pub fn retain(&self, keep: impl Fn(&Filter) -> bool) -> FilterState {
        FilterState {
            filters: self.filters.iter().filter(|f| keep(f)).cloned().collect(),
            version: self.version + 1,
        }
    }

    /// The same filters minus those produced by `view`'s selection. The
    /// version is kept so results can be traced back to this state.
    pub fn excluding_view(&self, view: &str) -> FilterState {
        FilterState {
            filters: self
                .filters
                .iter()
                .filter(|f| f.selection_view() != Some(view))
                .cloned()
                .collect(),
            version: self.version,
        }
    }
}

/// Visible row indices per entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityMap {
    rows: BTreeMap<String, RowSet>,
}

impl VisibilityMap {
    /// Every row of every entity.
    pub fn all(store: &DatasetStore) -> Self {
        VisibilityMap {
            rows: store
                .tables()
                .iter()
                .map(|t| (t.name().to_owned(), (0..t.len()).collect()))
                .collect(),
        }
    }

    pub fn from_rows(rows: BTreeMap<String, RowSet>) -> Self {
        VisibilityMap { rows }
    }

    pub fn rows(&self, entity: &str) -> &RowSet {
        static EMPTY: RowSet = RowSet::new();
        self.rows.get(entity).unwrap_or(&EMPTY)
    }

    pub fn entities(&self) -> impl Iterator<Item = (&str, &RowSet)> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Primary keys of visible rows, sorted lexicographically.
    pub fn keys(&self, entity: &str, store: &DatasetStore) -> Vec<String> {
        let Some(table) = store.table(entity) else {
            return Vec::new();
        };
        let mut keys: Vec<String> = self.rows(entity).iter().map(|&r| table.key(r).to_owned()).collect();
        keys.sort();
        keys
    }

    /// `self ⊆ other` for every entity.
    pub fn is_subset_of(&self, other: &VisibilityMap) -> bool {
        self.rows
            .iter()
            .all(|(e, rows)| rows.is_subset(other.rows(e)))
    }
}

/// Rows of one entity satisfying every filter in `filters` (all of which
/// must target `entity`).
pub fn apply_local<'a>(
    entity: &str,
    filters: impl IntoIterator<Item = &'a Filter>,
    store: &DatasetStore,
) -> RowSet {
    let Some(table) = store.table(entity) else {
        return RowSet::new();
    };
    let entity_def = store.schema().entity(entity).unwrap();
    let bound: Vec<(&Filter, usize)> = filters
        .into_iter()
        .map(|f| {
            debug_assert_eq!(f.entity(), entity);
            let idx = entity_def
                .field_index(f.field())
                .expect("filter validated against the store's schema");
            (f, idx)
        })
        .collect();
    (0..table.len())
        .filter(|&row| bound.iter().all(|(f, idx)| f.accepts(table.cell(row, *idx))))
        .collect()
}

/// Computes visible rows for every entity: local filters first, then
/// semi-join pruning across relations to the gated fixpoint.
///
/// Each relation edge carries up to two pruning directions. The direction
/// that prunes `v` by `u` is enabled when `u`'s side of the edge contains a
/// restricted entity. Because the relation graph is a forest, the fixpoint
/// is reached by one round of message passing: the message from `u` to `v`
/// is computed from `u`'s local candidates reduced by every enabled message
/// into `u` except the one coming back from `v`.
pub fn resolve_visibility(schema: &SchemaDef, store: &DatasetStore, state: &FilterState) -> VisibilityMap {
    let n = schema.entities.len();
    let mut by_entity: Vec<Vec<&Filter>> = vec![Vec::new(); n];
    for f in &state.filters {
        if let Some(e) = schema.entity_index(f.entity()) {
            by_entity[e].push(f);
        }
    }
    let restricted: Vec<bool> = by_entity.iter().map(|fs| !fs.is_empty()).collect();
    let local: Vec<RowSet> = schema
        .entities
        .iter()
        .enumerate()
        .map(|(e, def)| apply_local(&def.name, by_entity[e].iter().copied(), store))
        .collect();

    let mut reducer = Reducer {
        schema,
        store,
        adjacency: schema.adjacency(),
        restricted,
        local,
        messages: HashMap::new(),
        side_cache: HashMap::new(),
    };

    let mut rows = BTreeMap::new();
    for v in 0..n {
        let visible = reducer.reduced(v, None);
        rows.insert(schema.entities[v].name.clone(), visible);
    }
    VisibilityMap { rows }
}

struct Reducer<'a> {
    schema: &'a SchemaDef,
    store: &'a DatasetStore,
    adjacency: Vec<Vec<(usize, usize)>>,
    restricted: Vec<bool>,
    local: Vec<RowSet>,
    /// (from, relation) -> rows of the entity across `relation` with a partner
    /// in `from`'s reduced candidates.
    messages: HashMap<(usize, usize), RowSet>,
    side_cache: HashMap<(usize, usize), bool>,
}

impl Reducer<'_> {
    /// Local candidates of `u` intersected with every enabled incoming
    /// message, skipping the one across `skip` (a relation index).
    fn reduced(&mut self, u: usize, skip: Option<usize>) -> RowSet {
        let mut rows = self.local[u].clone();
        let neighbors = self.adjacency[u].clone();
        for (w, rel) in neighbors {
            if Some(rel) == skip || !self.side_restricted(w, rel) {
                continue;
            }
            let msg = self.message(w, rel);
            rows.retain(|r| msg.contains(r));
            if rows.is_empty() {
                break;
            }
        }
        rows
    }

    fn message(&mut self, from: usize, rel: usize) -> RowSet {
        if let Some(m) = self.messages.get(&(from, rel)) {
            return m.clone();
        }
        let source = self.reduced(from, Some(rel));
        let relation = &self.schema.relations[rel];
        let links = self.store.links(rel);
        let from_is_parent = self.schema.entities[from].name == relation.parent;
        let msg: RowSet = if from_is_parent {
            links
                .parent_of
                .iter()
                .enumerate()
                .filter(|(_, p)| p.is_some_and(|p| source.contains(&p)))
                .map(|(c, _)| c)
                .collect()
        } else {
            source.iter().filter_map(|&c| links.parent_of[c]).collect()
        };
        self.messages.insert((from, rel), msg.clone());
        msg
    }

    /// Whether the component containing `u`, after removing edge `rel`,
    /// holds a restricted entity.
    fn side_restricted(&mut self, u: usize, rel: usize) -> bool {
        if let Some(&hit) = self.side_cache.get(&(u, rel)) {
            return hit;
        }
        let mut stack = vec![(u, rel)];
        let mut hit = false;
        while let Some((node, came_by)) = stack.pop() {
            if self.restricted[node] {
                hit = true;
                break;
            }
            for &(next, r) in &self.adjacency[node] {
                if r != came_by {
                    stack.push((next, r));
                }
            }
        }
        self.side_cache.insert((u, rel), hit);
        hit
    }
}
