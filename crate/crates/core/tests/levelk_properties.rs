use respgraph::budget::Budget;
use respgraph::combinatorics::clique_number;
use respgraph::graph::build_graph;
use respgraph::levelk::{first_odd_hole, plausibly_nonredundant_sets, LevelKOptions, Leveler};
use respgraph::model::{Family, ModelSpec};
use respgraph::regularity::check_clique_correspondence;
use respgraph::VertexSet;
use serde_json::json;

fn exclusion(y: usize, d: usize, z: usize) -> ModelSpec {
    let fam = Family::from_id("iv-exclusion", json!({"y": y, "d": d, "z": z}).as_object().unwrap()).unwrap();
    ModelSpec::from_family(format!("iv-exclusion-y{y}-d{d}-z{z}"), fam)
}

#[test]
fn returned_sets_are_non_trivial_and_contain_a_hole() {
    for spec in [exclusion(2, 2, 3), exclusion(2, 2, 4), exclusion(2, 3, 3)] {
        let (g, m) = build_graph(&spec).unwrap();
        assert!(check_clique_correspondence(&g, &m).unwrap().0);
        let out = plausibly_nonredundant_sets(&g, &m, &LevelKOptions::default()).unwrap();
        assert!(!out.sets.is_empty());
        let lv = Leveler::new(&m, &g);
        for s in &out.sets {
            let set = VertexSet::from_indices(g.n(), s.vertices.iter().copied());
            let l = lv.level(&set);
            assert_eq!(l, s.level);
            assert_eq!(l, clique_number(&g, &set));
            assert!(l >= 2 && l < g.k(), "{}: level {l}", spec.name);
            let sub = g.induced_subgraph(&set).unwrap();
            let hole = first_odd_hole(&sub, &Budget::unlimited()).unwrap();
            let antihole = first_odd_hole(&sub.complement(), &Budget::unlimited()).unwrap();
            assert!(hole.is_some() || antihole.is_some());
            assert!(s.seed.iter().all(|v| s.vertices.contains(v)));
        }
    }
}

#[test]
fn early_and_late_filtering_agree_on_exclusion_rows() {
    for spec in [exclusion(2, 2, 3), exclusion(2, 2, 4), exclusion(3, 2, 3)] {
        let (g, m) = build_graph(&spec).unwrap();
        let late = plausibly_nonredundant_sets(&g, &m, &LevelKOptions::default()).unwrap();
        let early = plausibly_nonredundant_sets(
            &g,
            &m,
            &LevelKOptions {
                early_filter: true,
                ..LevelKOptions::default()
            },
        )
        .unwrap();
        assert_eq!(late.sets, early.sets, "{}", spec.name);
    }
}

#[test]
fn output_ignores_thread_count() {
    let (g, m) = build_graph(&exclusion(2, 2, 4)).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| plausibly_nonredundant_sets(&g, &m, &LevelKOptions::default()).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.sets, b.sets);
    assert_eq!(a.hole_outputs_by_level, b.hole_outputs_by_level);
}

#[test]
fn perfect_graphs_give_no_sets() {
    let (g, m) = build_graph(&exclusion(2, 2, 2)).unwrap();
    let out = plausibly_nonredundant_sets(&g, &m, &LevelKOptions::default()).unwrap();
    assert!(out.sets.is_empty() && out.holes == 0 && out.antiholes == 0);
}

#[test]
fn budget_and_cap_are_enforced() {
    let (g, m) = build_graph(&exclusion(2, 2, 4)).unwrap();
    let capped = LevelKOptions {
        max_sets: 3,
        ..LevelKOptions::default()
    };
    let err = plausibly_nonredundant_sets(&g, &m, &capped).unwrap_err();
    assert!(err.is_budget());
    let timed = LevelKOptions {
        budget: Budget::millis(0),
        ..LevelKOptions::default()
    };
    assert!(plausibly_nonredundant_sets(&g, &m, &timed).unwrap_err().is_budget());
}
