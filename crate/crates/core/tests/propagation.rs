mod support;

use proptest::prelude::*;
use support::oracle::{naive_visibility, random_fixture_filters, random_instance, state_of, KeyMap};
use udi_core::data::DatasetStore;
use udi_core::filter::{resolve_visibility, FilterState, VisibilityMap};
use udi_core::fixture;

fn as_keys(vis: &VisibilityMap, store: &DatasetStore) -> KeyMap {
    store
        .schema()
        .entities
        .iter()
        .map(|e| (e.name.clone(), vis.keys(&e.name, store).into_iter().collect()))
        .collect()
}

#[test]
fn oracle_agrees_on_fixture_examples() {
    let store = fixture::store();
    let schema = store.schema();
    for seed in 0..50 {
        let filters = random_fixture_filters(seed, 4);
        let state = state_of(&filters, schema);
        let fast = resolve_visibility(schema, &store, &state);
        assert_eq!(as_keys(&fast, &store), naive_visibility(schema, &store, &state), "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_naive_fixpoint(seed in any::<u64>()) {
        let inst = random_instance(seed, 5, 50, 4);
        let state = state_of(&inst.filters, &inst.schema);
        let fast = resolve_visibility(&inst.schema, &inst.store, &state);
        prop_assert_eq!(as_keys(&fast, &inst.store), naive_visibility(&inst.schema, &inst.store, &state));
    }

    #[test]
    fn order_independent_and_monotone(seed in any::<u64>(), rotate in 0usize..4) {
        let inst = random_instance(seed, 5, 30, 4);
        let state = state_of(&inst.filters, &inst.schema);
        let base = resolve_visibility(&inst.schema, &inst.store, &state);

        let mut permuted = inst.filters.clone();
        permuted.reverse();
        if !permuted.is_empty() {
            let k = rotate % permuted.len();
            permuted.rotate_left(k);
        }
        let other = resolve_visibility(&inst.schema, &inst.store, &state_of(&permuted, &inst.schema));
        prop_assert_eq!(&base, &other);

        // Each prefix of the filter list sees a superset of the next.
        let mut prev = VisibilityMap::all(&inst.store);
        for k in 0..=inst.filters.len() {
            let vis = resolve_visibility(&inst.schema, &inst.store, &state_of(&inst.filters[..k], &inst.schema));
            prop_assert!(vis.is_subset_of(&prev));
            prev = vis;
        }
    }

    #[test]
    fn empty_state_is_identity(seed in any::<u64>()) {
        let inst = random_instance(seed, 5, 50, 0);
        let vis = resolve_visibility(&inst.schema, &inst.store, &FilterState::new());
        prop_assert_eq!(vis, VisibilityMap::all(&inst.store));
    }
}

#[test]
fn single_donor_interval_matches_downstream_rule() {
    // With one donor filter, visible samples are exactly the samples of
    // visible donors and visible datasets those of visible samples.
    let store = fixture::store();
    let schema = store.schema();
    for seed in 0..40 {
        let filters: Vec<_> = random_fixture_filters(seed, 4)
            .into_iter()
            .filter(|f| f.entity() == "donors" && matches!(f, udi_core::filter::Filter::Interval(_)))
            .take(1)
            .collect();
        let vis = resolve_visibility(schema, &store, &state_of(&filters, schema));
        let donors = vis.rows("donors");
        let samples: std::collections::BTreeSet<usize> = (0..6)
            .filter(|&s| store.links(0).parent_of[s].is_some_and(|d| donors.contains(&d)))
            .collect();
        assert_eq!(vis.rows("samples"), &samples);
        let datasets: std::collections::BTreeSet<usize> = (0..7)
            .filter(|&x| store.links(1).parent_of[x].is_some_and(|s| samples.contains(&s)))
            .collect();
        assert_eq!(vis.rows("datasets"), &datasets);
    }
}
