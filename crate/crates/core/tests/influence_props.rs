use popsim::influence::{backward_sets, build_graph_h, InfluencerTable, InteractionLog, Node};
use popsim::Interaction;
use proptest::prelude::*;

/// Schedules over `n` agents of length up to `max_t`, drawn as (u, k) with the
/// responder being k skipped past u.
fn schedule(max_n: usize, max_t: usize) -> impl Strategy<Value = InteractionLog> {
    (2..=max_n).prop_flat_map(move |n| {
        prop::collection::vec((0..n, 0..n - 1), 0..=max_t).prop_map(move |pairs| {
            let entries = pairs
                .into_iter()
                .map(|(u, k)| Interaction::new(u, if k < u { k } else { k + 1 }).unwrap())
                .collect();
            InteractionLog::from_entries(n, entries).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn forward_set_equals_layer_zero_backward_set(log in schedule(16, 100)) {
        let t = log.len();
        let table = log.replay(t).unwrap();
        for v in 0..log.n() {
            let sets = backward_sets(&log, v, t).unwrap();
            prop_assert_eq!(sets.len(), t + 1);
            prop_assert_eq!(sets[t].to_vec(), table.set(v).to_vec());
        }
    }

    #[test]
    fn backward_sets_grow_by_at_most_one_per_layer(log in schedule(16, 100), v in 0usize..16) {
        let v = v % log.n();
        let sets = backward_sets(&log, v, log.len()).unwrap();
        prop_assert_eq!(sets[0].to_vec(), vec![v]);
        for w in sets.windows(2) {
            prop_assert!(w[0].is_subset(&w[1]));
            let d = w[1].len() - w[0].len();
            prop_assert!(d <= 1);
        }
    }

    #[test]
    fn graph_reachability_matches_backward_sets(log in schedule(6, 20), v in 0usize..6) {
        let v = v % log.n();
        let t = log.len();
        let g = build_graph_h(&log, t).unwrap();
        prop_assert_eq!(g.node_count(), log.n() * (t + 1));
        let reach = g.reaching(Node { agent: v, layer: t });
        let sets = backward_sets(&log, v, t).unwrap();
        for layer in 0..=t {
            let from_graph: Vec<usize> = (0..log.n()).filter(|&u| reach[layer][u]).collect();
            prop_assert_eq!(from_graph, sets[t - layer].to_vec());
        }
    }

    #[test]
    fn forward_sets_only_grow_and_only_for_participants(log in schedule(16, 100)) {
        let n = log.n();
        let mut table = InfluencerTable::new(n);
        for &e in log.entries() {
            let before: Vec<_> = (0..n).map(|v| table.set(v)).collect();
            table.forward_update(e).unwrap();
            let (a, b) = (e.initiator, e.responder);
            for (v, old) in before.iter().enumerate() {
                let now = table.set(v);
                prop_assert!(old.is_subset(&now));
                if v != a && v != b {
                    prop_assert_eq!(now.to_vec(), old.to_vec());
                }
            }
            let mut union = before[a].to_vec();
            union.extend(before[b].to_vec());
            union.sort_unstable();
            union.dedup();
            prop_assert_eq!(table.set(a).to_vec(), union.clone());
            prop_assert_eq!(table.set(b).to_vec(), union);
        }
    }

    #[test]
    fn log_text_form_reparses(log in schedule(16, 50)) {
        let back = InteractionLog::from_text(&log.to_text()).unwrap();
        prop_assert_eq!(back.entries(), log.entries());
        prop_assert_eq!(back.n(), log.n());
    }
}
