// Naive reference implementation of filter propagation, plus a generator of
// random tree-shaped instances. Shared by the core property tests and the
// acceptance suite; it only reads keys and raw cells from the store and
// resolves foreign keys itself.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use udi_core::data::{load_schema, load_tables, Cell, DatasetStore, SchemaDef};
use udi_core::filter::{Filter, FilterSource, FilterState, IntervalFilter, PointFilter};

pub type KeyMap = BTreeMap<String, BTreeSet<String>>;

fn passes(filter: &Filter, cell: &Cell) -> bool {
    match (filter, cell) {
        (Filter::Interval(f), Cell::Number(v)) => f.min <= *v && *v <= f.max,
        (Filter::Point(f), Cell::Text(s)) => f.values.contains(s),
        _ => false,
    }
}

fn cell_text(cell: &Cell) -> Option<String> {
    match cell {
        Cell::Missing => None,
        Cell::Number(v) => Some(v.to_string()),
        Cell::Text(s) => Some(s.clone()),
    }
}

/// Whether the component containing `start` after deleting edge `skip`
/// contains an entity in `restricted`.
fn side_has_restricted(schema: &SchemaDef, start: &str, skip: usize, restricted: &BTreeSet<String>) -> bool {
    let mut seen = BTreeSet::new();
    let mut stack = vec![start.to_string()];
    while let Some(e) = stack.pop() {
        if !seen.insert(e.clone()) {
            continue;
        }
        if restricted.contains(&e) {
            return true;
        }
        for (i, r) in schema.relations.iter().enumerate() {
            if i == skip {
                continue;
            }
            if r.parent == e {
                stack.push(r.child.clone());
            } else if r.child == e {
                stack.push(r.parent.clone());
            }
        }
    }
    false
}

/// Steps 1-4 of the propagation procedure, rescanning every edge until
/// nothing changes.
pub fn naive_visibility(schema: &SchemaDef, store: &DatasetStore, state: &FilterState) -> KeyMap {
    let mut candidate: KeyMap = BTreeMap::new();
    for entity in &schema.entities {
        let table = store.table(&entity.name).unwrap();
        let mut rows = BTreeSet::new();
        for row in 0..table.len() {
            let ok = state
                .filters
                .iter()
                .filter(|f| f.entity() == entity.name)
                .all(|f| passes(f, store.cell(&entity.name, row, f.field()).unwrap()));
            if ok {
                rows.insert(table.key(row).to_string());
            }
        }
        candidate.insert(entity.name.clone(), rows);
    }

    let restricted: BTreeSet<String> = state.filters.iter().map(|f| f.entity().to_string()).collect();
    let gates: Vec<(bool, bool)> = schema
        .relations
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let upward = side_has_restricted(schema, &r.child, i, &restricted);
            let downward = side_has_restricted(schema, &r.parent, i, &restricted);
            (upward, downward)
        })
        .collect();

    loop {
        let mut changed = false;
        for (i, r) in schema.relations.iter().enumerate() {
            let (upward, downward) = gates[i];
            let child = store.table(&r.child).unwrap();
            let fk_of = |key: &str| {
                let row = child.row_of(key).unwrap();
                cell_text(store.cell(&r.child, row, &r.foreign_key).unwrap())
            };
            if downward {
                let parents = candidate[&r.parent].clone();
                let before = candidate[&r.child].len();
                candidate
                    .get_mut(&r.child)
                    .unwrap()
                    .retain(|c| fk_of(c).is_some_and(|p| parents.contains(&p)));
                changed |= candidate[&r.child].len() != before;
            }
            if upward {
                let referenced: BTreeSet<String> = candidate[&r.child].iter().filter_map(|c| fk_of(c)).collect();
                let before = candidate[&r.parent].len();
                candidate.get_mut(&r.parent).unwrap().retain(|p| referenced.contains(p));
                changed |= candidate[&r.parent].len() != before;
            }
        }
        if !changed {
            return candidate;
        }
    }
}

pub struct Instance {
    pub schema: SchemaDef,
    pub store: DatasetStore,
    pub filters: Vec<Filter>,
}

const CATEGORIES: [&str; 4] = ["a", "b", "c", "d"];

/// Random forest schema with up to `max_entities` entities, up to `max_rows`
/// rows each and up to `max_filters` filters. Entity `e0` is the dataset
/// entity.
pub fn random_instance(seed: u64, max_entities: usize, max_rows: usize, max_filters: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_entities);
    let names: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();

    // (parent, child) pairs forming a forest.
    let mut edges = Vec::new();
    for i in 1..n {
        if rng.gen_bool(0.85) {
            let j = rng.gen_range(0..i);
            if rng.gen_bool(0.5) {
                edges.push((j, i));
            } else {
                edges.push((i, j));
            }
        }
    }

    let entities: Vec<serde_json::Value> = (0..n)
        .map(|i| {
            let mut fields = vec![serde_json::json!({"name": "id", "kind": "identifier"})];
            for &(p, c) in &edges {
                if c == i {
                    fields.push(serde_json::json!({"name": format!("fk_{}", names[p]), "kind": "identifier"}));
                }
            }
            fields.push(serde_json::json!({"name": "q0", "kind": "quantitative"}));
            fields.push(serde_json::json!({"name": "q1", "kind": "quantitative"}));
            fields.push(serde_json::json!({"name": "c0", "kind": "categorical"}));
            serde_json::json!({"name": names[i], "key": "id", "dataset_entity": i == 0, "fields": fields})
        })
        .collect();
    let relations: Vec<serde_json::Value> = edges
        .iter()
        .map(|&(p, c)| serde_json::json!({"parent": names[p], "child": names[c], "foreign_key": format!("fk_{}", names[p])}))
        .collect();
    let schema = load_schema(&serde_json::json!({"entities": entities, "relations": relations}).to_string()).unwrap();

    let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..=max_rows)).collect();
    let mut sources = BTreeMap::new();
    for (i, entity) in schema.entities.iter().enumerate() {
        let header: Vec<&str> = entity.fields.iter().map(|f| f.name.as_str()).collect();
        let mut text = header.join(",") + "\n";
        for r in 0..rows[i] {
            let cells: Vec<String> = entity
                .fields
                .iter()
                .map(|f| match f.name.as_str() {
                    "id" => format!("{}_{r}", names[i]),
                    "q0" | "q1" => {
                        if rng.gen_bool(0.1) {
                            String::new()
                        } else {
                            rng.gen_range(0..10).to_string()
                        }
                    }
                    "c0" => {
                        if rng.gen_bool(0.1) {
                            String::new()
                        } else {
                            CATEGORIES.choose(&mut rng).unwrap().to_string()
                        }
                    }
                    fk => {
                        let parent = fk.trim_start_matches("fk_");
                        let p = names.iter().position(|x| x == parent).unwrap();
                        if rows[p] == 0 || rng.gen_bool(0.1) {
                            String::new()
                        } else {
                            format!("{parent}_{}", rng.gen_range(0..rows[p]))
                        }
                    }
                })
                .collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        sources.insert(entity.name.clone(), text);
    }
    let store = load_tables(&schema, &sources).unwrap();

    let filter_count = rng.gen_range(0..=max_filters);
    let filters = (0..filter_count)
        .map(|k| random_filter(&mut rng, &names, format!("f{}", k + 1)))
        .collect();
    Instance { schema, store, filters }
}

fn random_filter(rng: &mut ChaCha8Rng, entities: &[String], id: String) -> Filter {
    let entity = entities.choose(rng).unwrap().clone();
    let source = FilterSource::Widget;
    if rng.gen_bool(0.5) {
        let a = rng.gen_range(0..10) as f64;
        let b = rng.gen_range(0..10) as f64;
        Filter::Interval(IntervalFilter {
            id,
            entity,
            field: if rng.gen_bool(0.5) { "q0" } else { "q1" }.to_string(),
            min: a.min(b),
            max: a.max(b),
            source,
            user_adjusted: false,
        })
    } else {
        let count = rng.gen_range(1..=3);
        let values = CATEGORIES.choose_multiple(rng, count).map(|s| s.to_string()).collect();
        Filter::Point(PointFilter {
            id,
            entity,
            field: "c0".to_string(),
            values,
            source,
            user_adjusted: false,
        })
    }
}

/// Random filters over the bundled fixture's filterable fields.
pub fn random_fixture_filters(seed: u64, max_filters: usize) -> Vec<Filter> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(0..=max_filters);
    (0..count)
        .map(|k| {
            let id = format!("f{}", k + 1);
            let source = FilterSource::Widget;
            match rng.gen_range(0..5) {
                0..=1 => {
                    let field = ["age", "height", "weight"].choose(&mut rng).unwrap();
                    let (lo, hi) = match *field {
                        "age" => (10.0, 75.0),
                        "height" => (155.0, 185.0),
                        _ => (50.0, 95.0),
                    };
                    let a: f64 = rng.gen_range(lo..hi);
                    let b: f64 = rng.gen_range(lo..hi);
                    Filter::Interval(IntervalFilter {
                        id,
                        entity: "donors".into(),
                        field: field.to_string(),
                        min: a.min(b).round(),
                        max: a.max(b).round(),
                        source,
                        user_adjusted: false,
                    })
                }
                2 => point(id, "donors", "sex", &["F", "M"], &mut rng),
                3 => point(id, "donors", "death_event", &["accident", "homicide", "natural causes", "suicide"], &mut rng),
                _ => {
                    if rng.gen_bool(0.5) {
                        point(id, "samples", "organ", &["heart", "kidney", "lung"], &mut rng)
                    } else {
                        point(id, "datasets", "assay", &["ATAC-seq", "CODEX", "RNA-seq"], &mut rng)
                    }
                }
            }
        })
        .collect()
}

fn point(id: String, entity: &str, field: &str, domain: &[&str], rng: &mut ChaCha8Rng) -> Filter {
    let count = rng.gen_range(1..=domain.len());
    Filter::Point(PointFilter {
        id,
        entity: entity.into(),
        field: field.into(),
        values: domain.choose_multiple(rng, count).map(|s| s.to_string()).collect(),
        source: FilterSource::Widget,
        user_adjusted: false,
    })
}

pub fn state_of(filters: &[Filter], schema: &SchemaDef) -> FilterState {
    filters
        .iter()
        .cloned()
        .fold(FilterState::new(), |s, f| s.add_filter(f, schema).unwrap())
}
