//! Regularity: perfectness of G plus a one-to-one match between maximal
//! cliques and latent types.

use crate::bitset::VertexSet;
use crate::budget::Budget;
use crate::combinatorics::{maximal_cliques_capped, DEFAULT_MAX_SETS};
use crate::error::{Error, Result};
use crate::graph::{build_graph_from_support, build_graph_pairwise, label_pair, Provenance, ResponseGraph};
use crate::levelk::{cycle_order, first_odd_hole};
use crate::model::{enumerate_latent_types, ModelSpec, Restriction, SupportMatrix};
use serde::Serialize;
use std::collections::HashSet;

/// An induced odd cycle, listed in cycle order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HoleWitness {
    pub cycle: Vec<usize>,
    /// True when the cycle lives in the complement (an antihole of G).
    pub in_complement: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub is_perfect: bool,
    pub perfectness_witness: Option<HoleWitness>,
    pub cliques_match: bool,
    pub clique_witnesses: Vec<Vec<usize>>,
    pub regular: bool,
    pub graph_method: Provenance,
}

/// Odd-hole search on G and then on its complement.
pub fn check_perfect(g: &ResponseGraph, budget: &Budget) -> Result<(bool, Option<HoleWitness>)> {
    if let Some(h) = first_odd_hole(g, budget)? {
        let cycle = cycle_order(g, &h).ok_or_else(|| Error::NumericalFailure("hole witness is not a cycle".into()))?;
        return Ok((
            false,
            Some(HoleWitness {
                cycle,
                in_complement: false,
            }),
        ));
    }
    let gc = g.complement();
    if let Some(h) = first_odd_hole(&gc, budget)? {
        let cycle = cycle_order(&gc, &h).ok_or_else(|| Error::NumericalFailure("antihole witness is not a cycle".into()))?;
        return Ok((
            false,
            Some(HoleWitness {
                cycle,
                in_complement: true,
            }),
        ));
    }
    Ok((true, None))
}

/// Every maximal clique must have K vertices and coincide with a support column.
pub fn check_clique_correspondence(g: &ResponseGraph, matrix: &SupportMatrix) -> Result<(bool, Vec<Vec<usize>>)> {
    check_clique_correspondence_capped(g, matrix, DEFAULT_MAX_SETS)
}

pub fn check_clique_correspondence_capped(
    g: &ResponseGraph,
    matrix: &SupportMatrix,
    cap: usize,
) -> Result<(bool, Vec<Vec<usize>>)> {
    let columns: HashSet<&VertexSet> = matrix.columns().iter().collect();
    let cliques = maximal_cliques_capped(g, cap)?;
    let witnesses: Vec<Vec<usize>> = cliques
        .as_vertex_sets(g.n())
        .into_iter()
        .filter(|c| c.len() != g.k() || !columns.contains(c))
        .map(|c| c.to_vec())
        .collect();
    Ok((witnesses.is_empty(), witnesses))
}

#[derive(Clone, Copy, Debug)]
pub struct RegularityOptions {
    pub budget: Budget,
    pub max_sets: usize,
}

impl Default for RegularityOptions {
    fn default() -> Self {
        RegularityOptions {
            budget: Budget::unlimited(),
            max_sets: DEFAULT_MAX_SETS,
        }
    }
}

/// Builds the graph (Method 1 when a family predicate exists, Method 2
/// otherwise) and runs both checks. For Method-1 graphs of built-in families
/// the clique check is skipped, since their predicates satisfy the pairwise
/// incompatibility criterion.
pub fn check_regularity(spec: &ModelSpec, opts: &RegularityOptions) -> Result<RegularityReport> {
    let (g, shortcut) = match &spec.restriction {
        Restriction::Family(_) | Restriction::Predicate(_) => (build_graph_pairwise(spec)?, true),
        Restriction::Explicit(_) => {
            let m = SupportMatrix::new(&enumerate_latent_types(spec)?, spec)?;
            (build_graph_from_support(&m), false)
        }
    };
    let (is_perfect, perfectness_witness) = check_perfect(&g, &opts.budget)?;
    let (cliques_match, clique_witnesses) = if shortcut {
        (true, Vec::new())
    } else {
        let m = SupportMatrix::new(&enumerate_latent_types(spec)?, spec)?;
        check_clique_correspondence_capped(&g, &m, opts.max_sets)?
    };
    Ok(RegularityReport {
        is_perfect,
        perfectness_witness,
        cliques_match,
        clique_witnesses,
        regular: is_perfect && cliques_match,
        graph_method: g.provenance(),
    })
}

impl RegularityReport {
    pub fn to_json(&self, g: &ResponseGraph, spec: Option<&ModelSpec>) -> serde_json::Value {
        let lab = |vs: &[usize]| -> Vec<serde_json::Value> {
            vs.iter()
                .map(|&v| {
                    let (z, r) = label_pair(spec, g.cell(v));
                    serde_json::json!({"vertex": v, "z": z, "r": r})
                })
                .collect()
        };
        serde_json::json!({
            "regular": self.regular,
            "is_perfect": self.is_perfect,
            "perfectness_witness": self.perfectness_witness.as_ref().map(|w| serde_json::json!({
                "cycle": lab(&w.cycle),
                "in_complement": w.in_complement,
            })),
            "cliques_match": self.cliques_match,
            "clique_witnesses": self.clique_witnesses.iter().map(|c| lab(c)).collect::<Vec<_>>(),
            "graph_method": self.graph_method,
        })
    }
}

/// Exhaustive oracle: does any vertex subset of odd size 5..=max_size induce
/// a cycle in G or in its complement?
pub fn brute_force_perfect(g: &ResponseGraph, max_size: usize) -> Result<bool> {
    const LIMIT: usize = 20;
    if g.n() > LIMIT {
        return Err(Error::TooLarge { n: g.n(), limit: LIMIT });
    }
    let n = g.n();
    let adj: Vec<u32> = (0..n)
        .map(|v| g.adj(v).iter().fold(0u32, |m, u| m | (1 << u)))
        .collect();
    let full = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let cadj: Vec<u32> = (0..n).map(|v| !adj[v] & full & !(1 << v)).collect();
    let is_cycle = |m: u32, a: &[u32]| -> bool {
        let mut v = m.trailing_zeros() as usize;
        if (0..n).any(|u| m >> u & 1 == 1 && (a[u] & m).count_ones() != 2) {
            return false;
        }
        // walk the cycle and check it covers m
        let start = v;
        let mut prev = usize::MAX;
        let mut seen = 0u32;
        loop {
            seen |= 1 << v;
            let nb = a[v] & m;
            let next = (0..n).find(|&u| nb >> u & 1 == 1 && u != prev).unwrap();
            prev = v;
            v = next;
            if v == start {
                break;
            }
        }
        seen == m
    };
    for m in 1u32..=full {
        let c = m.count_ones() as usize;
        if c < 5 || c % 2 == 0 || c > max_size {
            continue;
        }
        if is_cycle(m, &adj) || is_cycle(m, &cadj) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, LatentType};
    use serde_json::json;

    #[test]
    fn exclusion_k3_is_imperfect_with_a_five_hole() {
        let fam = Family::from_id("iv-exclusion", json!({"z": 3}).as_object().unwrap()).unwrap();
        let spec = ModelSpec::from_family("x", fam);
        let r = check_regularity(&spec, &RegularityOptions::default()).unwrap();
        assert!(!r.regular && !r.is_perfect);
        let w = r.perfectness_witness.unwrap();
        assert_eq!(w.cycle.len(), 5);
        assert!(!w.in_complement);
    }

    #[test]
    fn deleted_column_is_reported() {
        let t = [[0, 0], [1, 1]].map(|a| LatentType { assignment: a.to_vec() });
        let m = SupportMatrix::from_parts(&t, vec![0, 2, 4]).unwrap();
        let g = build_graph_from_support(&m);
        assert!(check_clique_correspondence(&g, &m).unwrap().0);
        let m1 = m.without_column(1).unwrap();
        let (ok, w) = check_clique_correspondence(&g, &m1).unwrap();
        assert!(!ok);
        assert_eq!(w, vec![vec![1, 3]]);
    }

    #[test]
    fn brute_force_sees_c5_and_its_complement() {
        let c5 = ResponseGraph::from_edges(&[1; 5], &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]);
        assert!(!brute_force_perfect(&c5, 12).unwrap());
        assert!(!brute_force_perfect(&c5.complement(), 12).unwrap());
        let p4 = ResponseGraph::from_edges(&[1; 4], &[(0, 1), (1, 2), (2, 3)]);
        assert!(brute_force_perfect(&p4, 12).unwrap());
    }
}
