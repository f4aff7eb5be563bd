//! Odd holes and level-k vertex sets for non-regular restrictions.
//!
//! Holes are grown symmetrically from wedges (induced paths on three
//! vertices). Each hole then seeds a search for maximal sets whose level
//! exceeds one: candidates are bucketed by the level they would contribute,
//! absorbed bucket by bucket, and vertices displaced from bucket k move up to
//! bucket k+1.

use crate::bitset::VertexSet;
use crate::budget::Budget;
use crate::combinatorics::{clique_number, level, DEFAULT_LEVEL_THRESHOLD, DEFAULT_MAX_SETS};
use crate::error::{Error, Result};
use crate::graph::ResponseGraph;
use crate::model::SupportMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashSet};

/// Three vertices with edges a–center–b and no edge a–b; stored with a < b.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Wedge {
    pub a: usize,
    pub center: usize,
    pub b: usize,
}

/// All wedges, ordered by center then endpoints.
pub fn wedges(g: &ResponseGraph) -> Vec<Wedge> {
    let mut out = Vec::new();
    for center in 0..g.n() {
        let nb = g.adj(center).to_vec();
        for (i, &a) in nb.iter().enumerate() {
            for &b in &nb[i + 1..] {
                if !g.has_edge(a, b) {
                    out.push(Wedge { a, center, b });
                }
            }
        }
    }
    out
}

/// Induced odd cycles of length at least five through `w`, centered at its
/// middle vertex. Paths are extended one step at each end; an extension
/// vertex must avoid the interior's neighborhood and the opposite end.
pub fn odd_holes_from_wedge(g: &ResponseGraph, w: Wedge, budget: &Budget) -> Result<Vec<VertexSet>> {
    let mut out = Vec::new();
    scan_wedge(g, w, budget, &mut |h| {
        out.push(h);
        true
    })?;
    Ok(out)
}

/// Visit holes from one wedge; `visit` returns false to stop early.
/// Returns false if stopped.
fn scan_wedge(
    g: &ResponseGraph,
    w: Wedge,
    budget: &Budget,
    visit: &mut dyn FnMut(VertexSet) -> bool,
) -> Result<bool> {
    let n = g.n();
    let interior = VertexSet::singleton(n, w.center);
    let nbhd = g.adj(w.center).clone();
    let mut stack = vec![(w.a, w.b, interior, nbhd)];
    let mut steps = 0u64;
    while let Some((a, b, inner, n_inner)) = stack.pop() {
        steps += 1;
        if steps % 1024 == 0 {
            budget.check()?;
        }
        let mut path = inner.clone();
        path.insert(a);
        path.insert(b);
        let mut ca = g.adj(a).difference(g.adj(b));
        ca.difference_with(&n_inner);
        ca.difference_with(&path);
        if ca.is_empty() {
            continue;
        }
        let mut cb = g.adj(b).difference(g.adj(a));
        cb.difference_with(&n_inner);
        cb.difference_with(&path);
        if cb.is_empty() {
            continue;
        }
        let mut n_path = n_inner.union(g.adj(a));
        n_path.union_with(g.adj(b));
        for ta in ca.iter() {
            for tb in cb.iter() {
                if g.has_edge(ta, tb) {
                    let mut h = path.clone();
                    h.insert(ta);
                    h.insert(tb);
                    if !visit(h) {
                        return Ok(false);
                    }
                } else {
                    stack.push((ta, tb, path.clone(), n_path.clone()));
                }
            }
        }
    }
    Ok(true)
}

/// Unique odd holes of a graph, plus the raw number of discoveries.
#[derive(Clone, Debug)]
pub struct HoleScan {
    pub holes: Vec<VertexSet>,
    pub raw_count: usize,
}

/// Runs the wedge search from every wedge and deduplicates. A hole of length
/// 2l+1 is discovered once from each of its 2l+1 centers.
pub fn all_odd_holes(g: &ResponseGraph, budget: &Budget) -> Result<HoleScan> {
    let found: Vec<Vec<VertexSet>> = wedges(g)
        .into_par_iter()
        .map(|w| odd_holes_from_wedge(g, w, budget))
        .collect::<Result<_>>()?;
    let raw_count = found.iter().map(Vec::len).sum();
    let holes: BTreeSet<VertexSet> = found.into_iter().flatten().collect();
    Ok(HoleScan {
        holes: holes.into_iter().collect(),
        raw_count,
    })
}

/// First odd hole found in canonical wedge order, if any.
pub fn first_odd_hole(g: &ResponseGraph, budget: &Budget) -> Result<Option<VertexSet>> {
    for w in wedges(g) {
        let mut hit = None;
        scan_wedge(g, w, budget, &mut |h| {
            hit = Some(h);
            false
        })?;
        if hit.is_some() {
            return Ok(hit);
        }
    }
    Ok(None)
}

/// Orders the vertices of an induced cycle along the cycle, starting at its
/// smallest vertex. Returns None when `set` does not induce a cycle.
pub fn cycle_order(g: &ResponseGraph, set: &VertexSet) -> Option<Vec<usize>> {
    let first = set.first()?;
    if set.iter().any(|v| g.adj(v).intersection_len(set) != 2) {
        return None;
    }
    let mut order = vec![first];
    let mut prev = usize::MAX;
    let mut cur = first;
    loop {
        let next = g.adj(cur).intersection(set).iter().find(|&u| u != prev)?;
        if next == first {
            break;
        }
        order.push(next);
        prev = cur;
        cur = next;
    }
    (order.len() == set.len()).then_some(order)
}

/// Level oracle used by the search: support-matrix formula, or the clique
/// number when the matrix is very wide.
pub struct Leveler<'a> {
    matrix: &'a SupportMatrix,
    graph: &'a ResponseGraph,
    use_omega: bool,
}

impl<'a> Leveler<'a> {
    pub fn new(matrix: &'a SupportMatrix, graph: &'a ResponseGraph) -> Self {
        Self::with_threshold(matrix, graph, DEFAULT_LEVEL_THRESHOLD)
    }

    pub fn with_threshold(matrix: &'a SupportMatrix, graph: &'a ResponseGraph, threshold: usize) -> Self {
        Leveler {
            matrix,
            graph,
            use_omega: matrix.n_cols() > threshold,
        }
    }

    #[inline]
    pub fn level(&self, set: &VertexSet) -> usize {
        if self.use_omega {
            clique_number(self.graph, set)
        } else {
            level(self.matrix, set)
        }
    }

    /// ℓ(S) = ℓ(S \ V_k) for every part k.
    pub fn is_stable(&self, set: &VertexSet) -> bool {
        let l = self.level(set);
        (0..self.graph.k()).all(|k| {
            let part = self.graph.part(k);
            !set.intersects(&part) || self.level(&set.difference(&part)) == l
        })
    }
}

/// A maximal level-k set with the hole or antihole it grew from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LevelKSet {
    pub vertices: Vec<usize>,
    pub level: usize,
    pub seed: Vec<usize>,
    pub seed_in_complement: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct LevelKOptions {
    /// Apply the stability filter to Algorithm-4 outputs as well (faster, unproven).
    pub early_filter: bool,
    pub max_sets: usize,
    pub budget: Budget,
}

impl Default for LevelKOptions {
    fn default() -> Self {
        LevelKOptions {
            early_filter: false,
            max_sets: DEFAULT_MAX_SETS,
            budget: Budget::unlimited(),
        }
    }
}

/// Vertices of `c` adjacent to `v` that share at least k-1 neighbors in `s` with it.
fn movers(g: &ResponseGraph, c: &VertexSet, s: &VertexSet, v: usize, k: usize) -> VertexSet {
    let nsv = g.adj(v).intersection(s);
    let mut m = VertexSet::empty(g.n());
    for t in c.intersection(g.adj(v)).iter() {
        if g.adj(t).intersection_len(&nsv) + 1 >= k {
            m.insert(t);
        }
    }
    m
}

/// Maximal extensions of `s` by vertices of the bucket `ck`: each branch adds
/// one vertex, evicts its movers from the bucket, and excludes the vertices
/// tried before it (the history) so that each extension is built once.
pub fn maximal_levelk_extensions(
    g: &ResponseGraph,
    s: &VertexSet,
    ck: &VertexSet,
    k: usize,
) -> Result<Vec<(VertexSet, VertexSet)>> {
    extensions(g, s, ck, k, None, &LevelKOptions::default())
}

fn extensions(
    g: &ResponseGraph,
    s: &VertexSet,
    ck: &VertexSet,
    k: usize,
    early: Option<&Leveler>,
    opts: &LevelKOptions,
) -> Result<Vec<(VertexSet, VertexSet)>> {
    let n = g.n();
    let mut out = Vec::new();
    let mut stack = vec![(s.clone(), ck.clone(), VertexSet::empty(n))];
    let mut steps = 0u64;
    while let Some((s1, c1, m1)) = stack.pop() {
        steps += 1;
        if steps % 4096 == 0 {
            opts.budget.check()?;
        }
        if c1.is_empty() {
            if early.is_some_and(|lv| !lv.is_stable(&s1)) {
                continue;
            }
            if out.len() >= opts.max_sets {
                return Err(Error::OutputLimitExceeded(opts.max_sets));
            }
            out.push((s1, m1));
            continue;
        }
        let mut history = VertexSet::empty(n);
        for v in c1.iter() {
            let mv = movers(g, &c1, &s1, v, k);
            let mut s2 = s1.clone();
            s2.insert(v);
            let mut c2 = c1.difference(&mv);
            c2.remove(v);
            c2.difference_with(&history);
            stack.push((s2, c2, m1.union(&mv)));
            history.insert(v);
        }
    }
    Ok(out)
}

/// Maximal stable level-k supersets of a hole or antihole `seed`.
pub fn levelk_sets_from_hole(g: &ResponseGraph, matrix: &SupportMatrix, seed: &VertexSet) -> Result<Vec<VertexSet>> {
    let lv = Leveler::new(matrix, g);
    sets_from_seed(g, &lv, seed, &LevelKOptions::default())
}

fn sets_from_seed(g: &ResponseGraph, lv: &Leveler, seed: &VertexSet, opts: &LevelKOptions) -> Result<Vec<VertexSet>> {
    let n = g.n();
    let kk = g.k();
    // buckets[l] for l in 1..kk; index 0 unused.
    let mut buckets = vec![VertexSet::empty(n); kk];
    for v in 0..n {
        if seed.contains(v) {
            continue;
        }
        let mut closed = g.adj(v).intersection(seed);
        closed.insert(v);
        let l = lv.level(&closed);
        if (1..kk).contains(&l) {
            buckets[l].insert(v);
        }
    }
    let early = opts.early_filter.then_some(lv);
    let mut found: BTreeSet<VertexSet> = BTreeSet::new();
    let mut seen: HashSet<(VertexSet, Vec<VertexSet>)> = HashSet::new();
    let mut stack = vec![(seed.clone(), buckets)];
    while let Some((s, c)) = stack.pop() {
        opts.budget.check()?;
        if !seen.insert((s.clone(), c.clone())) {
            continue;
        }
        let l = lv.level(&s);
        if (1..=l.min(kk - 1)).all(|j| c[j].is_empty()) {
            found.insert(s.clone());
            if found.len() > opts.max_sets {
                return Err(Error::OutputLimitExceeded(opts.max_sets));
            }
        }
        for k in 1..kk {
            if c[k].is_empty() {
                continue;
            }
            for (v, mk) in extensions(g, &s, &c[k], k, early, opts)? {
                let mut c2 = c.clone();
                for bucket in c2.iter_mut().take(k + 1).skip(1) {
                    *bucket = VertexSet::empty(n);
                }
                if k + 1 < kk {
                    c2[k + 1].union_with(&mk);
                }
                stack.push((v, c2));
            }
        }
    }
    Ok(found.into_iter().filter(|s| lv.is_stable(s)).collect())
}

/// Output of the hole-seeded search over a whole graph.
#[derive(Clone, Debug, Serialize)]
pub struct PlausibleSets {
    /// Distinct sets in canonical order; each keeps the first seed that produced it.
    pub sets: Vec<LevelKSet>,
    pub holes: usize,
    pub antiholes: usize,
    /// Per-level totals of per-seed outputs summed over the holes of G (no cross-seed dedup).
    pub hole_outputs_by_level: BTreeMap<usize, usize>,
    /// Same, over antiholes that are not also holes.
    pub antihole_outputs_by_level: BTreeMap<usize, usize>,
}

impl PlausibleSets {
    /// Sum of per-hole output counts at levels up to `max_level`.
    pub fn hole_output_total(&self, max_level: usize) -> usize {
        self.hole_outputs_by_level
            .range(..=max_level)
            .map(|(_, c)| c)
            .sum()
    }
}

/// Level-k sets seeded by every odd hole of G and every odd hole of its
/// complement, deduplicated. Empty when G is perfect.
pub fn plausibly_nonredundant_sets(
    g: &ResponseGraph,
    matrix: &SupportMatrix,
    opts: &LevelKOptions,
) -> Result<PlausibleSets> {
    let holes = all_odd_holes(g, &opts.budget)?.holes;
    let anti = all_odd_holes(&g.complement(), &opts.budget)?.holes;
    let hole_set: BTreeSet<&VertexSet> = holes.iter().collect();
    let mut seeds: Vec<(VertexSet, bool)> = holes.iter().map(|h| (h.clone(), false)).collect();
    seeds.extend(anti.iter().filter(|h| !hole_set.contains(h)).map(|h| (h.clone(), true)));

    let lv = Leveler::new(matrix, g);
    let per_seed: Vec<Vec<VertexSet>> = seeds
        .par_iter()
        .map(|(s, _)| sets_from_seed(g, &lv, s, opts))
        .collect::<Result<_>>()?;

    let mut hole_outputs_by_level = BTreeMap::new();
    let mut antihole_outputs_by_level = BTreeMap::new();
    let mut merged: BTreeMap<VertexSet, LevelKSet> = BTreeMap::new();
    for ((seed, in_complement), outs) in seeds.iter().zip(per_seed) {
        for s in outs {
            let l = lv.level(&s);
            let tally = if *in_complement {
                &mut antihole_outputs_by_level
            } else {
                &mut hole_outputs_by_level
            };
            *tally.entry(l).or_insert(0) += 1;
            merged.entry(s.clone()).or_insert_with(|| LevelKSet {
                vertices: s.to_vec(),
                level: l,
                seed: seed.to_vec(),
                seed_in_complement: *in_complement,
            });
        }
    }
    if merged.len() > opts.max_sets {
        return Err(Error::OutputLimitExceeded(opts.max_sets));
    }
    Ok(PlausibleSets {
        sets: merged.into_values().collect(),
        holes: holes.len(),
        antiholes: anti.len(),
        hole_outputs_by_level,
        antihole_outputs_by_level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> ResponseGraph {
        ResponseGraph::from_edges(&vec![1; n], edges)
    }

    fn cycle_edges(off: usize, n: usize) -> Vec<(usize, usize)> {
        (0..n).map(|i| (off + i, off + (i + 1) % n)).collect()
    }

    #[test]
    fn wedge_counts() {
        assert!(wedges(&graph(3, &[(0, 1), (1, 2), (0, 2)])).is_empty());
        assert_eq!(
            wedges(&graph(3, &[(0, 1), (1, 2)])),
            vec![Wedge { a: 0, center: 1, b: 2 }]
        );
    }

    #[test]
    fn raw_discoveries_equal_total_hole_length() {
        let mut e = cycle_edges(0, 5);
        e.extend(cycle_edges(5, 7));
        let g = graph(12, &e);
        let scan = all_odd_holes(&g, &Budget::unlimited()).unwrap();
        assert_eq!(scan.holes.len(), 2);
        assert_eq!(scan.raw_count, 12);
        let c7 = VertexSet::from_indices(12, 5..12);
        assert_eq!(cycle_order(&g, &c7).unwrap(), vec![5, 6, 7, 8, 9, 10, 11]);
    }

    #[test]
    fn even_cycles_have_no_odd_holes() {
        let g = graph(6, &cycle_edges(0, 6));
        assert!(all_odd_holes(&g, &Budget::unlimited()).unwrap().holes.is_empty());
        assert!(first_odd_hole(&g, &Budget::unlimited()).unwrap().is_none());
    }

    #[test]
    fn empty_bucket_extension_is_the_seed() {
        let g = graph(5, &cycle_edges(0, 5));
        let s = VertexSet::full(5);
        let out = maximal_levelk_extensions(&g, &s, &VertexSet::empty(5), 2).unwrap();
        assert_eq!(out, vec![(s, VertexSet::empty(5))]);
    }
}
