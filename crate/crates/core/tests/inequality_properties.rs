use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use respgraph::combinatorics::maximal_independent_sets;
use respgraph::graph::{build_graph, build_graph_from_support};
use respgraph::inequalities::{
    compare_models, deserialize, expand_with_covariates, filter_redundant, levelk_inequalities, mis_inequalities,
    serialize, IneqKind, Inequality, DEFAULT_MAX_COMBINATION,
};
use respgraph::levelk::{plausibly_nonredundant_sets, LevelKOptions};
use respgraph::model::{enumerate_latent_types, load_spec, ModelSpec, SupportMatrix};
use respgraph::polytope::{sample_product_simplex, satisfies_all, vertex_mixture};
use respgraph::Error;
use std::path::PathBuf;

fn model(name: &str) -> ModelSpec {
    load_spec(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../models/{name}.json"))).unwrap()
}

const MODELS: &[&str] = &[
    "partial-monotonicity",
    "ia-monotonicity-two-instruments",
    "iv-exclusion-y2-d2-z3",
    "iv-exclusion-y2-d2-z4",
    "iv-exclusion-monotonicity-y2-d2-z3",
    "exposure-map",
    "exposure-semimonotone",
    "mediation-first-mediator",
    "spillover-nonpositive",
];

#[test]
fn mis_inequalities_come_from_maximal_independent_sets() {
    for name in MODELS.iter().chain(&["cessation-length-equal"]) {
        let spec = model(name);
        let (g, _) = build_graph(&spec).unwrap();
        let ineqs = mis_inequalities(&g, &maximal_independent_sets(&g).unwrap());
        for i in &ineqs {
            let s = i.vertex_set(g.n());
            assert_eq!(i.rhs, 1);
            assert!(g.is_independent(&s));
            assert!(s.complement().iter().all(|v| g.adj(v).intersects(&s)), "{name}: not maximal");
            let is_part = g.parts().contains(&s);
            assert_eq!(i.kind == IneqKind::Part, is_part);
            assert!(i.terms.windows(2).all(|w| (w[0].part, w[0].resp) < (w[1].part, w[1].resp)));
        }
        assert!(ineqs.windows(2).all(|w| w[0] <= w[1]) || ineqs.len() < 2);
    }
}

/// Points near the polytope: uniform draws, vertex mixtures and blends.
fn probe<R: Rng>(m: &SupportMatrix, rng: &mut R) -> Vec<f64> {
    let u = sample_product_simplex(m.offsets(), rng).values;
    let v = vertex_mixture(m, rng).values;
    let lam: f64 = match rng.random_range(0..3) {
        0 => 1.0,
        1 => 0.0,
        _ => rng.random_range(0.0..0.3),
    };
    u.iter().zip(&v).map(|(a, b)| lam * a + (1.0 - lam) * b).collect()
}

#[test]
fn redundancy_filter_preserves_the_feasible_region() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for name in MODELS {
        let spec = model(name);
        let (g, m) = build_graph(&spec).unwrap();
        let all = mis_inequalities(&g, &maximal_independent_sets(&g).unwrap());
        let out = filter_redundant(&all, &g, DEFAULT_MAX_COMBINATION);
        assert_eq!(out.kept.len() + out.dropped.len(), all.len());
        let (mut inside, mut outside) = (0, 0);
        for _ in 0..500 {
            let b = probe(&m, &mut rng);
            let kept = satisfies_all(&out.kept, &b, 1e-12);
            assert_eq!(kept, kept && satisfies_all(&out.dropped, &b, 1e-12), "{name}");
            if kept {
                inside += 1;
            } else {
                outside += 1;
            }
        }
        assert!(inside > 0 && outside > 0, "{name}: probes did not straddle the boundary");
    }
}

#[test]
fn comparison_covers_every_inequality_once() {
    for (strong, weak) in [
        ("ia-monotonicity-two-instruments", "partial-monotonicity"),
        ("iv-exclusion-monotonicity-y2-d2-z3", "iv-exclusion-y2-d2-z3"),
        ("exposure-semimonotone", "exposure-map"),
        ("spillover-none", "spillover-nonpositive"),
    ] {
        let (s1, s2) = (model(strong), model(weak));
        let rep = compare_models(&s1, &s2).unwrap();
        let m1 = SupportMatrix::new(&enumerate_latent_types(&s1).unwrap(), &s1).unwrap();
        let g1 = build_graph_from_support(&m1);
        let mut expected = mis_inequalities(&g1, &maximal_independent_sets(&g1).unwrap());
        let mut got: Vec<Inequality> = rep.new.clone();
        got.extend(rep.tightened.iter().map(|t| t.0.clone()));
        expected.sort();
        got.sort();
        assert_eq!(got, expected, "{strong} vs {weak}");
        for (i1, i2, added) in &rep.tightened {
            let n = g1.n();
            assert!(i2.vertex_set(n).is_subset(&i1.vertex_set(n)));
            assert_eq!(added.len(), i1.terms.len() - i2.terms.len());
        }
        assert!(matches!(compare_models(&s2, &s1), Err(Error::NotNested(_))) || strong == weak);
    }
}

#[test]
fn serialization_round_trips() {
    for name in ["partial-monotonicity", "iv-exclusion-y2-d2-z3", "cessation-length-monotone"] {
        let spec = model(name);
        let (g, m) = build_graph(&spec).unwrap();
        let mut ineqs = mis_inequalities(&g, &maximal_independent_sets(&g).unwrap());
        let sets = plausibly_nonredundant_sets(&g, &m, &LevelKOptions::default()).unwrap();
        ineqs.extend(levelk_inequalities(&g, &sets.sets));
        ineqs.sort();
        for list in [ineqs.clone(), expand_with_covariates(&ineqs, 3)] {
            let text = serialize(&list, &spec);
            assert_eq!(deserialize(&text, &spec).unwrap(), list, "{name}");
            assert_eq!(serialize(&deserialize(&text, &spec).unwrap(), &spec), text);
        }
    }
    let spec = model("partial-monotonicity");
    let bad = r#"{"schema_version": 2, "model": "x", "inequalities": []}"#;
    assert!(matches!(deserialize(bad, &spec), Err(Error::SchemaMismatch(_))));
}

#[test]
fn pretty_printing_uses_conditional_probability_notation() {
    let spec = model("partial-monotonicity");
    let (g, _) = build_graph(&spec).unwrap();
    let ineqs = mis_inequalities(&g, &maximal_independent_sets(&g).unwrap());
    let first = ineqs.iter().find(|i| i.kind == IneqKind::Mis).unwrap();
    assert_eq!(first.pretty(&spec), "P(R=1|Z=(0,0)) + P(R=0|Z=(0,1)) <= 1");
    let w = expand_with_covariates(std::slice::from_ref(first), 2);
    assert_eq!(w.len(), 2);
    assert_eq!(w[1].pretty(&spec), "P(R=1|Z=(0,0),W=#1) + P(R=0|Z=(0,1),W=#1) <= 1");
    let with_w = respgraph::inference::pm_design_spec();
    assert_eq!(w[1].pretty(&with_w), "P(R=1|Z=(0,0),W=1) + P(R=0|Z=(0,1),W=1) <= 1");
    let text = serialize(&w, &with_w);
    assert_eq!(deserialize(&text, &with_w).unwrap(), w);
}
