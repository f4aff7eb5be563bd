//! Moment inequalities: generation, redundancy filtering, nested-model
//! comparison and serialization.

use crate::bitset::VertexSet;
use crate::combinatorics::{maximal_independent_sets, VertexSetCollection};
use crate::error::{Error, Result};
use crate::graph::{build_graph_from_support, ResponseGraph};
use crate::levelk::LevelKSet;
use crate::model::{enumerate_latent_types, ModelSpec, SupportMatrix};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeSet;
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IneqKind {
    Mis,
    LevelK,
    /// A full conditional distribution; holds identically.
    Part,
}

/// One probability P(R = r | Z = z [, W = w]) with coefficient one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    pub part: usize,
    pub resp: usize,
    /// Covariate cell, when inequalities are conditioned on covariates.
    pub w: Option<usize>,
    /// Graph vertex of (part, resp).
    pub vertex: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Inequality {
    pub kind: IneqKind,
    pub rhs: usize,
    pub terms: Vec<Term>,
    /// Vertex set the inequality came from.
    pub source: Vec<usize>,
}

impl Ord for Inequality {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.kind, self.rhs, &self.terms, &self.source).cmp(&(other.kind, other.rhs, &other.terms, &other.source))
    }
}

impl PartialOrd for Inequality {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Inequality {
    fn from_vertices(g: &ResponseGraph, kind: IneqKind, rhs: usize, set: &[usize]) -> Inequality {
        let terms = set
            .iter()
            .map(|&v| {
                let c = g.cell(v);
                Term {
                    part: c.part,
                    resp: c.resp,
                    w: None,
                    vertex: v,
                }
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Inequality {
            kind,
            rhs,
            terms,
            source: set.to_vec(),
        }
    }

    pub fn vertex_set(&self, n: usize) -> VertexSet {
        VertexSet::from_indices(n, self.terms.iter().map(|t| t.vertex))
    }

    /// Covariate cell shared by the terms (None for unconditioned inequalities).
    pub fn cell(&self) -> Option<usize> {
        self.terms.first().and_then(|t| t.w)
    }

    /// Left side minus right side; `beta(term)` supplies P(R=r|Z=z[,W=w]).
    pub fn excess(&self, beta: impl Fn(&Term) -> f64) -> f64 {
        self.terms.iter().map(beta).sum::<f64>() - self.rhs as f64
    }

    /// Excess for a probability vector indexed by vertex, or by `w * n + vertex`.
    pub fn excess_at(&self, beta: &[f64], n: usize) -> f64 {
        self.excess(|t| beta[t.w.unwrap_or(0) * n + t.vertex])
    }

    /// Plain-text rendering, e.g. `P(R=1|Z=(0,0)) + P(R=0|Z=(0,1)) <= 1`.
    pub fn pretty(&self, spec: &ModelSpec) -> String {
        let cells = spec.covariate_cells();
        let mut s = String::new();
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                s.push_str(" + ");
            }
            let _ = write!(s, "P(R={}|Z={}", spec.responses[t.part][t.resp], spec.inputs[t.part]);
            if let Some(w) = t.w {
                let _ = write!(s, ",W={}", cell_label(&cells, w));
            }
            s.push(')');
        }
        let _ = write!(s, " <= {}", self.rhs);
        s
    }
}

fn canonical(mut v: Vec<Inequality>) -> Vec<Inequality> {
    v.sort();
    v.dedup();
    v
}

/// One inequality with right-hand side one per maximal independent set; the
/// parts of G are tagged as trivial.
pub fn mis_inequalities(g: &ResponseGraph, collection: &VertexSetCollection) -> Vec<Inequality> {
    let parts: BTreeSet<Vec<usize>> = g.parts().iter().map(VertexSet::to_vec).collect();
    canonical(
        collection
            .sets
            .iter()
            .map(|s| {
                let kind = if parts.contains(s) { IneqKind::Part } else { IneqKind::Mis };
                Inequality::from_vertices(g, kind, 1, s)
            })
            .collect(),
    )
}

/// One inequality per level-k set with right-hand side equal to its level.
pub fn levelk_inequalities(g: &ResponseGraph, sets: &[LevelKSet]) -> Vec<Inequality> {
    canonical(
        sets.iter()
            .map(|s| Inequality::from_vertices(g, IneqKind::LevelK, s.level, &s.vertices))
            .collect(),
    )
}

/// Nontrivial inequalities only.
pub fn testable(ineqs: &[Inequality]) -> Vec<Inequality> {
    ineqs.iter().filter(|i| i.kind != IneqKind::Part).cloned().collect()
}

/// Copies each inequality into every covariate cell `0..cells`.
pub fn expand_with_covariates(ineqs: &[Inequality], cells: usize) -> Vec<Inequality> {
    if cells == 0 {
        return ineqs.to_vec();
    }
    let per_cell: Vec<Vec<Inequality>> = vec![ineqs.to_vec(); cells];
    expand_per_cell(&per_cell)
}

/// Cell-specific inequality lists, for restrictions that vary with w.
pub fn expand_per_cell(per_cell: &[Vec<Inequality>]) -> Vec<Inequality> {
    let mut out = Vec::new();
    for (w, ineqs) in per_cell.iter().enumerate() {
        for i in ineqs {
            let mut j = i.clone();
            for t in &mut j.terms {
                t.w = Some(w);
            }
            out.push(j);
        }
    }
    canonical(out)
}

#[derive(Clone, Debug)]
pub struct RedundancyOutcome {
    pub kept: Vec<Inequality>,
    pub dropped: Vec<Inequality>,
}

/// Default bound on the number of inequalities combined in one certificate.
pub const DEFAULT_MAX_COMBINATION: usize = 4;

/// Search-node budget per candidate, keeping the filter bounded on large lists.
const NODE_BUDGET: usize = 2_000_000;

/// Drops MIS inequalities I* with Σ_s 1{I_s} = Σ_k m_k 1{V_k} + 1{I*} for
/// distinct kept MIS inequalities I_1..I_S (S ≤ `max_s`) and part
/// multiplicities m_k ≥ 0 summing to S−1. Adding the S inequalities then
/// gives I* exactly, so I* is implied. Candidates are visited in canonical
/// order and a dropped inequality never certifies another.
pub fn filter_redundant(ineqs: &[Inequality], g: &ResponseGraph, max_s: usize) -> RedundancyOutcome {
    let n = g.n();
    let part_of: Vec<usize> = (0..n).map(|v| g.part_of(v)).collect();
    let mut alive = vec![true; ineqs.len()];
    let sets: Vec<VertexSet> = ineqs.iter().map(|i| i.vertex_set(n)).collect();
    for i in 0..ineqs.len() {
        if ineqs[i].kind != IneqKind::Mis {
            continue;
        }
        let pool: Vec<usize> = (0..ineqs.len())
            .filter(|&j| j != i && alive[j] && ineqs[j].kind == IneqKind::Mis && ineqs[j].cell() == ineqs[i].cell())
            .collect();
        let search = RedundancySearch {
            target: &sets[i],
            sets: &sets,
            pool: &pool,
            offsets: g.offsets(),
            part_of: &part_of,
        };
        if (2..=max_s).any(|s| search.certify(s)) {
            alive[i] = false;
        }
    }
    let (kept, dropped) = ineqs
        .iter()
        .zip(alive)
        .partition::<Vec<_>, _>(|(_, a)| *a);
    RedundancyOutcome {
        kept: kept.into_iter().map(|(i, _)| i.clone()).collect(),
        dropped: dropped.into_iter().map(|(i, _)| i.clone()).collect(),
    }
}

struct RedundancySearch<'a> {
    target: &'a VertexSet,
    sets: &'a [VertexSet],
    pool: &'a [usize],
    offsets: &'a [usize],
    part_of: &'a [usize],
}

impl RedundancySearch<'_> {
    fn certify(&self, s: usize) -> bool {
        let n = self.part_of.len();
        let Some(u0) = self.target.first() else {
            return false;
        };
        let mut counts = vec![0i32; n];
        let mut nodes = 0usize;
        // Some I_s must cover the first vertex of I*; make it the first pick.
        for &first in self.pool.iter().filter(|&&j| self.sets[j].contains(u0)) {
            for v in self.sets[first].iter() {
                counts[v] += 1;
            }
            let found = self.extend(&mut counts, s, 1, 0, first, &mut nodes);
            for v in self.sets[first].iter() {
                counts[v] -= 1;
            }
            if found {
                return true;
            }
            if nodes > NODE_BUDGET {
                return false;
            }
        }
        false
    }

    /// Per-part bounds on m_k given the picks so far and `rem` picks left;
    /// None if infeasible.
    fn bounds_ok(&self, counts: &[i32], s: usize, rem: i32, exact: bool) -> bool {
        let mut lo_sum = 0i32;
        for k in 0..self.offsets.len() - 1 {
            let mut lo = i32::MIN;
            let mut hi = i32::MAX;
            for v in self.offsets[k]..self.offsets[k + 1] {
                let d = counts[v] - self.target.contains(v) as i32;
                lo = lo.max(d);
                hi = hi.min(d + rem);
            }
            let lo = lo.max(0);
            if lo > hi {
                return false;
            }
            if exact && lo != hi {
                return false;
            }
            lo_sum += lo;
        }
        if exact {
            lo_sum == s as i32 - 1
        } else {
            lo_sum <= s as i32 - 1
        }
    }

    fn extend(&self, counts: &mut [i32], s: usize, picked: usize, from: usize, first: usize, nodes: &mut usize) -> bool {
        *nodes += 1;
        if *nodes > NODE_BUDGET {
            return false;
        }
        let rem = (s - picked) as i32;
        if !self.bounds_ok(counts, s, rem, rem == 0) {
            return false;
        }
        if rem == 0 {
            return true;
        }
        for idx in from..self.pool.len() {
            let j = self.pool[idx];
            if j == first {
                continue;
            }
            for v in self.sets[j].iter() {
                counts[v] += 1;
            }
            let ok = self.extend(counts, s, picked + 1, idx + 1, first, nodes);
            for v in self.sets[j].iter() {
                counts[v] -= 1;
            }
            if ok {
                return true;
            }
        }
        let _ = self.part_of;
        false
    }
}

/// Classification of model-1 inequalities against a weaker model 2.
#[derive(Clone, Debug)]
pub struct ComparisonReport {
    /// (model-1 inequality, matched model-2 inequality, extra terms).
    pub tightened: Vec<(Inequality, Inequality, Vec<Term>)>,
    pub new: Vec<Inequality>,
}

/// Compares the MIS inequalities of a model against those of a weaker model
/// on the same layout. An inequality is Tightened when its vertex set
/// contains a model-2 MIS (the largest such match is reported) and New
/// otherwise.
pub fn compare_models(spec1: &ModelSpec, spec2: &ModelSpec) -> Result<ComparisonReport> {
    if spec1.inputs != spec2.inputs || spec1.responses != spec2.responses {
        return Err(Error::NotNested("models have different inputs or responses".into()));
    }
    let t1 = enumerate_latent_types(spec1)?;
    let t2 = enumerate_latent_types(spec2)?;
    let t2set: BTreeSet<_> = t2.iter().collect();
    if let Some(t) = t1.iter().find(|t| !t2set.contains(t)) {
        return Err(Error::NotNested(format!(
            "type {:?} of `{}` is not a type of `{}`",
            t.labels(spec1),
            spec1.name,
            spec2.name
        )));
    }
    let g1 = build_graph_from_support(&SupportMatrix::new(&t1, spec1)?);
    let g2 = build_graph_from_support(&SupportMatrix::new(&t2, spec2)?);
    let i1 = mis_inequalities(&g1, &maximal_independent_sets(&g1)?);
    let i2 = mis_inequalities(&g2, &maximal_independent_sets(&g2)?);
    let n = g1.n();
    let s2: Vec<VertexSet> = i2.iter().map(|i| i.vertex_set(n)).collect();
    let mut report = ComparisonReport {
        tightened: Vec::new(),
        new: Vec::new(),
    };
    for ineq in i1 {
        let v1 = ineq.vertex_set(n);
        let best = s2
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_subset(&v1))
            .max_by_key(|(j, s)| (s.len(), std::cmp::Reverse(*j)));
        match best {
            Some((j, s)) => {
                let added = ineq.terms.iter().filter(|t| !s.contains(t.vertex)).copied().collect();
                report.tightened.push((ineq, i2[j].clone(), added));
            }
            None => report.new.push(ineq),
        }
    }
    Ok(report)
}

pub const INEQUALITY_SCHEMA_VERSION: u64 = 1;

/// Covariate values of a cell, or its index when the spec declares no such cell.
fn cell_label(cells: &[Vec<String>], w: usize) -> String {
    match cells.get(w) {
        Some(c) if !c.is_empty() => c.join(","),
        _ => format!("#{w}"),
    }
}

fn ineq_json(i: &Inequality, spec: &ModelSpec, cells: &[Vec<String>]) -> Value {
    let terms: Vec<Value> = i
        .terms
        .iter()
        .map(|t| {
            let mut o = json!({"z": spec.inputs[t.part], "r": spec.responses[t.part][t.resp]});
            if let Some(w) = t.w {
                o["w"] = json!(cell_label(cells, w));
            }
            o
        })
        .collect();
    json!({"kind": i.kind, "rhs": i.rhs, "terms": terms, "source": i.source})
}

impl ComparisonReport {
    pub fn to_json(&self, spec: &ModelSpec) -> Value {
        let cells = spec.covariate_cells();
        json!({
            "tightened": self.tightened.iter().map(|(a, b, add)| json!({
                "inequality": ineq_json(a, spec, &cells),
                "matched": ineq_json(b, spec, &cells),
                "added_terms": add.iter().map(|t| json!({"z": spec.inputs[t.part], "r": spec.responses[t.part][t.resp]})).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "new": self.new.iter().map(|i| ineq_json(i, spec, &cells)).collect::<Vec<_>>(),
        })
    }
}

/// Versioned JSON document; inequalities are written in canonical order.
pub fn serialize(ineqs: &[Inequality], spec: &ModelSpec) -> String {
    let cells = spec.covariate_cells();
    let list: Vec<Value> = canonical(ineqs.to_vec())
        .iter()
        .map(|i| ineq_json(i, spec, &cells))
        .collect();
    let doc = json!({
        "schema_version": INEQUALITY_SCHEMA_VERSION,
        "model": spec.name,
        "inequalities": list,
    });
    serde_json::to_string_pretty(&doc).expect("inequality JSON is always serializable")
}

pub fn deserialize(text: &str, spec: &ModelSpec) -> Result<Vec<Inequality>> {
    let schema = |m: &str| Error::SchemaMismatch(m.to_owned());
    let doc: Value = serde_json::from_str(text)?;
    match doc.get("schema_version").and_then(Value::as_u64) {
        Some(INEQUALITY_SCHEMA_VERSION) => {}
        _ => return Err(schema("unsupported or missing schema_version")),
    }
    let offsets = spec.offsets();
    let cells = spec.covariate_cells();
    let list = doc
        .get("inequalities")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("missing inequalities"))?;
    let mut out = Vec::with_capacity(list.len());
    for item in list {
        let kind: IneqKind = serde_json::from_value(item.get("kind").cloned().unwrap_or(Value::Null))
            .map_err(|_| schema("bad kind"))?;
        let rhs = item.get("rhs").and_then(Value::as_u64).ok_or_else(|| schema("bad rhs"))? as usize;
        let source: Vec<usize> = serde_json::from_value(item.get("source").cloned().unwrap_or(json!([])))
            .map_err(|_| schema("bad source"))?;
        let mut terms = Vec::new();
        for t in item
            .get("terms")
            .and_then(Value::as_array)
            .ok_or_else(|| schema("missing terms"))?
        {
            let z = t.get("z").and_then(Value::as_str).ok_or_else(|| schema("term without z"))?;
            let r = t.get("r").and_then(Value::as_str).ok_or_else(|| schema("term without r"))?;
            let part = spec
                .input_index(z)
                .ok_or_else(|| Error::InvalidSpec(format!("unknown input `{z}`")))?;
            let resp = spec
                .response_index(part, r)
                .ok_or_else(|| Error::InvalidSpec(format!("unknown response `{r}` at `{z}`")))?;
            let w = match t.get("w").and_then(Value::as_str) {
                None => None,
                Some(w) => Some(
                    (0..cells.len())
                        .find(|&i| cell_label(&cells, i) == w)
                        .or_else(|| w.strip_prefix('#').and_then(|i| i.parse().ok()))
                        .ok_or_else(|| Error::InvalidSpec(format!("unknown covariate cell `{w}`")))?,
                ),
            };
            terms.push(Term {
                part,
                resp,
                w,
                vertex: offsets[part] + resp,
            });
        }
        terms.sort();
        out.push(Inequality {
            kind,
            rhs,
            terms,
            source,
        });
    }
    Ok(canonical(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;

    fn pm() -> (ModelSpec, ResponseGraph) {
        let spec = ModelSpec::from_family("pm", Family::from_id("partial-monotonicity", &Default::default()).unwrap());
        let m = SupportMatrix::new(&enumerate_latent_types(&spec).unwrap(), &spec).unwrap();
        (spec, build_graph_from_support(&m))
    }

    #[test]
    fn pm_inequalities_round_trip() {
        let (spec, g) = pm();
        let ineqs = mis_inequalities(&g, &maximal_independent_sets(&g).unwrap());
        assert_eq!(ineqs.len(), 9);
        assert_eq!(testable(&ineqs).len(), 5);
        let text = serialize(&ineqs, &spec);
        assert_eq!(deserialize(&text, &spec).unwrap(), ineqs);
        assert_eq!(serialize(&deserialize(&text, &spec).unwrap(), &spec), text);
        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(matches!(deserialize(&bumped, &spec), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn single_inequality_is_never_dropped() {
        let (_, g) = pm();
        let ineqs = testable(&mis_inequalities(&g, &maximal_independent_sets(&g).unwrap()));
        let out = filter_redundant(&ineqs[..1], &g, 4);
        assert_eq!(out.kept.len(), 1);
        assert!(out.dropped.is_empty());
    }

    #[test]
    fn covariate_expansion_counts() {
        let (_, g) = pm();
        let ineqs = testable(&mis_inequalities(&g, &maximal_independent_sets(&g).unwrap()));
        assert_eq!(expand_with_covariates(&ineqs, 2).len(), 10);
        assert_eq!(expand_with_covariates(&ineqs, 0), ineqs);
    }
}
