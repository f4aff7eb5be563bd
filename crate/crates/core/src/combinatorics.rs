//! Maximal independent sets, maximal cliques, levels, and brute-force oracles.

use crate::bitset::VertexSet;
use crate::error::{Error, Result};
use crate::graph::ResponseGraph;
use crate::model::{ModelSpec, SupportMatrix};
use serde::Serialize;

/// Default cap on enumerated sets.
pub const DEFAULT_MAX_SETS: usize = 1_000_000;

/// Column count above which `level_auto` switches to the clique-number route.
pub const DEFAULT_LEVEL_THRESHOLD: usize = 100_000;

/// Largest graph the subset-scan oracles accept.
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SetKind {
    #[serde(rename = "mis")]
    Mis,
    #[serde(rename = "max-clique")]
    MaxClique,
    #[serde(rename = "level-k")]
    LevelKSet,
}

/// Sorted, deduplicated collection of sorted vertex lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VertexSetCollection {
    pub kind: SetKind,
    pub sets: Vec<Vec<usize>>,
}

impl VertexSetCollection {
    pub fn new(kind: SetKind, sets: impl IntoIterator<Item = VertexSet>) -> Self {
        let mut sets: Vec<Vec<usize>> = sets.into_iter().map(|s| s.to_vec()).collect();
        sets.sort();
        sets.dedup();
        VertexSetCollection { kind, sets }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn as_vertex_sets(&self, n: usize) -> Vec<VertexSet> {
        self.sets
            .iter()
            .map(|s| VertexSet::from_indices(n, s.iter().copied()))
            .collect()
    }

    /// Sets written with (z, r) labels.
    pub fn labelled(&self, g: &ResponseGraph, spec: Option<&ModelSpec>) -> Vec<Vec<(String, String)>> {
        self.sets
            .iter()
            .map(|s| s.iter().map(|&v| crate::graph::label_pair(spec, g.cell(v))).collect())
            .collect()
    }
}

pub fn maximal_independent_sets(g: &ResponseGraph) -> Result<VertexSetCollection> {
    maximal_independent_sets_capped(g, DEFAULT_MAX_SETS)
}

/// Reverse-search enumeration in the style of Tsukiyama et al.: the maximal
/// independent sets of G[0..i+1] are children of those of G[0..i], and each
/// set has a unique parent, so every output costs polynomial work.
pub fn maximal_independent_sets_capped(g: &ResponseGraph, cap: usize) -> Result<VertexSetCollection> {
    let n = g.n();
    let mut out = Vec::new();
    if n == 0 {
        out.push(VertexSet::empty(0));
    } else {
        let root = VertexSet::singleton(n, 0);
        mis_descend(g, root, 1, cap, &mut out)?;
    }
    Ok(VertexSetCollection::new(SetKind::Mis, out))
}

fn mis_descend(g: &ResponseGraph, s: VertexSet, i: usize, cap: usize, out: &mut Vec<VertexSet>) -> Result<()> {
    let n = g.n();
    if i == n {
        if out.len() >= cap {
            return Err(Error::OutputLimitExceeded(cap));
        }
        out.push(s);
        return Ok(());
    }
    let ni = g.adj(i);
    if !s.intersects(ni) {
        let mut t = s;
        t.insert(i);
        return mis_descend(g, t, i + 1, cap, out);
    }
    // Candidate that swaps the neighbors of i for i itself.
    let mut t = s.difference(ni);
    t.insert(i);
    let accept = is_maximal_prefix(g, &t, i + 1) && greedy_completion(g, &s.difference(ni), i) == s;
    mis_descend(g, s, i + 1, cap, out)?;
    if accept {
        mis_descend(g, t, i + 1, cap, out)?;
    }
    Ok(())
}

/// Every vertex below `bound` outside `t` has a neighbor in `t`.
fn is_maximal_prefix(g: &ResponseGraph, t: &VertexSet, bound: usize) -> bool {
    (0..bound).all(|j| t.contains(j) || g.adj(j).intersects(t))
}

/// Extend an independent set greedily by vertices 0..bound in order.
fn greedy_completion(g: &ResponseGraph, base: &VertexSet, bound: usize) -> VertexSet {
    let mut s = base.clone();
    for j in 0..bound {
        if !s.contains(j) && !g.adj(j).intersects(&s) {
            s.insert(j);
        }
    }
    s
}

pub fn maximal_cliques(g: &ResponseGraph) -> Result<VertexSetCollection> {
    maximal_cliques_capped(g, DEFAULT_MAX_SETS)
}

/// Bron–Kerbosch with Tomita pivoting over bitsets.
pub fn maximal_cliques_capped(g: &ResponseGraph, cap: usize) -> Result<VertexSetCollection> {
    let n = g.n();
    let mut out = Vec::new();
    if n == 0 {
        return Ok(VertexSetCollection::new(SetKind::MaxClique, out));
    }
    bron_kerbosch(
        g,
        VertexSet::empty(n),
        VertexSet::full(n),
        VertexSet::empty(n),
        cap,
        &mut out,
    )?;
    Ok(VertexSetCollection::new(SetKind::MaxClique, out))
}

fn bron_kerbosch(
    g: &ResponseGraph,
    r: VertexSet,
    mut p: VertexSet,
    mut x: VertexSet,
    cap: usize,
    out: &mut Vec<VertexSet>,
) -> Result<()> {
    if p.is_empty() {
        if x.is_empty() {
            if out.len() >= cap {
                return Err(Error::OutputLimitExceeded(cap));
            }
            out.push(r);
        }
        return Ok(());
    }
    let pivot = p
        .union(&x)
        .iter()
        .max_by_key(|&u| (p.intersection_len(g.adj(u)), std::cmp::Reverse(u)))
        .unwrap();
    for v in p.difference(g.adj(pivot)).to_vec() {
        let mut r2 = r.clone();
        r2.insert(v);
        bron_kerbosch(g, r2, p.intersection(g.adj(v)), x.intersection(g.adj(v)), cap, out)?;
        p.remove(v);
        x.insert(v);
    }
    Ok(())
}

/// ℓ(V): the largest number of rows of `set` covered by one support column.
pub fn level(matrix: &SupportMatrix, set: &VertexSet) -> usize {
    matrix
        .columns()
        .iter()
        .map(|c| c.intersection_len(set))
        .max()
        .unwrap_or(0)
}

/// Level through the support matrix, or through ω(G[V]) once the matrix has
/// more than `threshold` columns. The second route is exact only when every
/// maximal clique of `g` is a support column.
pub fn level_auto(matrix: &SupportMatrix, g: &ResponseGraph, set: &VertexSet, threshold: usize) -> usize {
    if matrix.n_cols() > threshold {
        clique_number(g, set)
    } else {
        level(matrix, set)
    }
}

/// ω(G[V]) by branch and bound.
pub fn clique_number(g: &ResponseGraph, set: &VertexSet) -> usize {
    let mut best = 0;
    max_clique_bb(g, 0, set.clone(), &mut best);
    best
}

fn max_clique_bb(g: &ResponseGraph, size: usize, mut p: VertexSet, best: &mut usize) {
    if p.is_empty() {
        *best = (*best).max(size);
        return;
    }
    while let Some(v) = p.first() {
        if size + p.len() <= *best {
            return;
        }
        max_clique_bb(g, size + 1, p.intersection(g.adj(v)), best);
        p.remove(v);
    }
}

fn small_adjacency(g: &ResponseGraph) -> Result<Vec<u32>> {
    if g.n() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            n: g.n(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    Ok((0..g.n())
        .map(|v| g.adj(v).iter().fold(0u32, |m, u| m | (1 << u)))
        .collect())
}

fn masks_to_sets(n: usize, masks: Vec<u32>, kind: SetKind) -> VertexSetCollection {
    VertexSetCollection::new(
        kind,
        masks
            .into_iter()
            .map(|m| VertexSet::from_indices(n, (0..n).filter(|&i| m >> i & 1 == 1))),
    )
}

/// Subset-scan oracle for maximal independent sets.
pub fn brute_force_mis(g: &ResponseGraph) -> Result<VertexSetCollection> {
    let adj = small_adjacency(g)?;
    let n = g.n();
    let found: Vec<u32> = (0u32..1 << n)
        .filter(|&m| {
            (0..n).all(|v| {
                if m >> v & 1 == 1 {
                    adj[v] & m == 0
                } else {
                    adj[v] & m != 0
                }
            })
        })
        .collect();
    Ok(masks_to_sets(n, found, SetKind::Mis))
}

/// Subset-scan oracle for maximal cliques.
pub fn brute_force_cliques(g: &ResponseGraph) -> Result<VertexSetCollection> {
    let adj = small_adjacency(g)?;
    let n = g.n();
    let found: Vec<u32> = (1u32..1 << n)
        .filter(|&m| {
            (0..n).all(|v| {
                let others = m & !(1 << v);
                if m >> v & 1 == 1 {
                    adj[v] & others == others
                } else {
                    adj[v] & m != m
                }
            })
        })
        .collect();
    Ok(masks_to_sets(n, found, SetKind::MaxClique))
}

/// Subset-scan oracle for ω(G[V]).
pub fn brute_force_clique_number(g: &ResponseGraph, set: &VertexSet) -> Result<usize> {
    let adj = small_adjacency(g)?;
    let within = set.iter().fold(0u32, |m, v| m | (1 << v));
    let mut best = 0;
    let mut m = within;
    // Iterate over all submasks of `within`.
    loop {
        let size = m.count_ones() as usize;
        if size > best && (0..g.n()).filter(|&v| m >> v & 1 == 1).all(|v| adj[v] & m == m & !(1 << v)) {
            best = size;
        }
        if m == 0 {
            break;
        }
        m = (m - 1) & within;
    }
    Ok(best)
}
