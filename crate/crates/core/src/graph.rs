//! The K-partite potential response graph.

use crate::bitset::VertexSet;
use crate::error::{Error, Result};
use crate::model::{pairwise_compatible, Cell, ModelSpec, SupportMatrix};
use serde::Serialize;
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Pairwise,
    FromSupport,
    Complement,
    Induced,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResponseGraph {
    cells: Vec<Cell>,
    offsets: Vec<usize>,
    adj: Vec<VertexSet>,
    provenance: Provenance,
    unsupported: Vec<usize>,
}

impl ResponseGraph {
    /// Raw constructor; `adj` must be symmetric without self-loops.
    pub fn from_adjacency(offsets: Vec<usize>, adj: Vec<VertexSet>, provenance: Provenance) -> Self {
        let k = offsets.len() - 1;
        let cells = (0..k)
            .flat_map(|part| (0..offsets[part + 1] - offsets[part]).map(move |resp| Cell { part, resp }))
            .collect();
        ResponseGraph {
            cells,
            offsets,
            adj,
            provenance,
            unsupported: Vec::new(),
        }
    }

    /// Graph from explicit edges on parts of the given sizes.
    pub fn from_edges(part_sizes: &[usize], edges: &[(usize, usize)]) -> Self {
        let mut offsets = vec![0];
        for s in part_sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        let n = *offsets.last().unwrap();
        let mut adj = vec![VertexSet::empty(n); n];
        for &(a, b) in edges {
            if a != b {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        Self::from_adjacency(offsets, adj, Provenance::FromSupport)
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn k(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn cell(&self, v: usize) -> Cell {
        self.cells[v]
    }

    pub fn part_of(&self, v: usize) -> usize {
        self.cells[v].part
    }

    pub fn part(&self, k: usize) -> VertexSet {
        VertexSet::from_indices(self.n(), self.offsets[k]..self.offsets[k + 1])
    }

    pub fn parts(&self) -> Vec<VertexSet> {
        (0..self.k()).map(|k| self.part(k)).collect()
    }

    #[inline]
    pub fn adj(&self, v: usize) -> &VertexSet {
        &self.adj[v]
    }

    pub fn adjacency(&self) -> &[VertexSet] {
        &self.adj
    }

    #[inline]
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(b)
    }

    pub fn neighbors(&self, v: usize) -> Result<VertexSet> {
        self.adj
            .get(v)
            .cloned()
            .ok_or(Error::IndexOutOfRange { index: v, n: self.n() })
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(VertexSet::len).sum::<usize>() / 2
    }

    /// Edges (i, j) with i < j in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n())
            .flat_map(|i| self.adj[i].iter().filter(move |&j| j > i).map(move |j| (i, j)))
            .collect()
    }

    /// Vertices that no support column touches (only known for support-built graphs).
    pub fn unsupported(&self) -> &[usize] {
        &self.unsupported
    }

    /// Union of neighborhoods of the members of `set`.
    pub fn neighborhood(&self, set: &VertexSet) -> VertexSet {
        let mut out = VertexSet::empty(self.n());
        for v in set.iter() {
            out.union_with(&self.adj[v]);
        }
        out
    }

    pub fn is_independent(&self, set: &VertexSet) -> bool {
        set.iter().all(|v| !self.adj[v].intersects(set))
    }

    pub fn is_clique(&self, set: &VertexSet) -> bool {
        set.iter().all(|v| {
            let mut others = set.clone();
            others.remove(v);
            others.is_subset(&self.adj[v])
        })
    }

    /// Complement over all vertex pairs; the K-partite structure is not kept.
    pub fn complement(&self) -> ResponseGraph {
        let n = self.n();
        let adj = (0..n)
            .map(|v| {
                let mut row = self.adj[v].complement();
                row.remove(v);
                row
            })
            .collect();
        ResponseGraph {
            cells: self.cells.clone(),
            offsets: self.offsets.clone(),
            adj,
            provenance: Provenance::Complement,
            unsupported: Vec::new(),
        }
    }

    /// Adjacency restricted to `set`; vertex indices are kept, others become isolated.
    pub fn induced_subgraph(&self, set: &VertexSet) -> Result<ResponseGraph> {
        if set.universe() != self.n() {
            return Err(Error::IndexOutOfRange {
                index: set.universe(),
                n: self.n(),
            });
        }
        let adj = (0..self.n())
            .map(|v| {
                if set.contains(v) {
                    self.adj[v].intersection(set)
                } else {
                    VertexSet::empty(self.n())
                }
            })
            .collect();
        Ok(ResponseGraph {
            cells: self.cells.clone(),
            offsets: self.offsets.clone(),
            adj,
            provenance: if set.len() == self.n() { self.provenance } else { Provenance::Induced },
            unsupported: Vec::new(),
        })
    }

    pub fn is_k_partite(&self) -> bool {
        (0..self.k()).all(|k| {
            let p = self.part(k);
            p.iter().all(|v| !self.adj[v].intersects(&p))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n()).all(|v| !self.adj[v].contains(v) && self.adj[v].iter().all(|u| self.adj[u].contains(v)))
    }

    /// Graph export with (z, r) labels.
    pub fn to_json(&self, spec: Option<&ModelSpec>) -> serde_json::Value {
        let vertices: Vec<serde_json::Value> = self
            .cells
            .iter()
            .map(|c| {
                let (z, r) = label_pair(spec, *c);
                serde_json::json!({"z": z, "r": r, "part": c.part})
            })
            .collect();
        serde_json::json!({
            "vertices": vertices,
            "edges": self.edges(),
            "provenance": self.provenance,
            "unsupported": self.unsupported,
        })
    }

    /// One line per vertex, `i: j1 j2 ...`.
    pub fn to_adjacency_text(&self) -> String {
        let mut s = String::new();
        for v in 0..self.n() {
            let _ = write!(s, "{v}:");
            for u in self.adj[v].iter() {
                let _ = write!(s, " {u}");
            }
            s.push('\n');
        }
        s
    }
}

pub(crate) fn label_pair(spec: Option<&ModelSpec>, c: Cell) -> (String, String) {
    match spec {
        Some(s) => (s.inputs[c.part].clone(), s.responses[c.part][c.resp].clone()),
        None => (c.part.to_string(), c.resp.to_string()),
    }
}

/// Method 1: edges from the pairwise predicate.
pub fn build_graph_pairwise(spec: &ModelSpec) -> Result<ResponseGraph> {
    spec.validate()?;
    let offsets = spec.offsets();
    let cells = spec.cells();
    let n = cells.len();
    let mut adj = vec![VertexSet::empty(n); n];
    for a in 0..n {
        for b in a + 1..n {
            if cells[a].part != cells[b].part && pairwise_compatible(spec, cells[a], cells[b])? {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
    }
    Ok(ResponseGraph::from_adjacency(offsets, adj, Provenance::Pairwise))
}

/// Method 2: an edge wherever some support column covers both rows.
pub fn build_graph_from_support(matrix: &SupportMatrix) -> ResponseGraph {
    let n = matrix.n_rows();
    let mut adj = vec![VertexSet::empty(n); n];
    for col in matrix.columns() {
        for v in col.iter() {
            adj[v].union_with(col);
        }
    }
    let mut unsupported = Vec::new();
    for (v, row) in adj.iter_mut().enumerate() {
        if matrix.row(v).is_empty() {
            unsupported.push(v);
        }
        row.remove(v);
    }
    let mut g = ResponseGraph::from_adjacency(matrix.offsets().to_vec(), adj, Provenance::FromSupport);
    g.unsupported = unsupported;
    g
}

/// Graph and support matrix for a spec: Method 1 when a pairwise predicate
/// is available, Method 2 for explicit type lists.
pub fn build_graph(spec: &ModelSpec) -> Result<(ResponseGraph, SupportMatrix)> {
    let matrix = SupportMatrix::new(&crate::model::enumerate_latent_types(spec)?, spec)?;
    let g = match spec.restriction {
        crate::model::Restriction::Explicit(_) => build_graph_from_support(&matrix),
        _ => build_graph_pairwise(spec)?,
    };
    Ok((g, matrix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{enumerate_latent_types, Family, LatentType};
    use serde_json::json;

    fn fig1() -> SupportMatrix {
        // D(0), D(1): nt = (0,0), co = (0,1), at = (1,1); rows v00 v10 | v01 v11
        let t = [[0, 0], [0, 1], [1, 1]].map(|a| LatentType { assignment: a.to_vec() });
        SupportMatrix::from_parts(&t, vec![0, 2, 4]).unwrap()
    }

    #[test]
    fn figure_one_graph_and_complement() {
        let g = build_graph_from_support(&fig1());
        assert_eq!(g.edges(), vec![(0, 2), (0, 3), (1, 3)]);
        assert_eq!(g.complement().edges(), vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(g.complement().complement().adjacency(), g.adjacency());
    }

    #[test]
    fn exclusion_graph_sizes() {
        for (y, z, n, e) in [(2, 3, 12, 36), (3, 3, 18, 72), (2, 2, 8, 12)] {
            let fam = Family::from_id("iv-exclusion", json!({"y": y, "z": z}).as_object().unwrap()).unwrap();
            let spec = ModelSpec::from_family("x", fam);
            let g = build_graph_pairwise(&spec).unwrap();
            assert_eq!((g.n(), g.edge_count()), (n, e));
            assert!(g.is_k_partite() && g.is_symmetric());
        }
    }

    #[test]
    fn partial_monotonicity_neighbors_of_always_taker_cell() {
        let fam = Family::from_id("partial-monotonicity", &serde_json::Map::new()).unwrap();
        let spec = ModelSpec::from_family("pm", fam);
        let m = SupportMatrix::new(&enumerate_latent_types(&spec).unwrap(), &spec).unwrap();
        let g = build_graph_from_support(&m);
        assert_eq!(g.edge_count(), 19);
        // v_{1,(0,0)} is row 1; D=1 rows at the other inputs are 3, 5, 7.
        assert_eq!(g.neighbors(1).unwrap().to_vec(), vec![3, 5, 7]);
        assert!(g.neighbors(8).is_err());
    }

    #[test]
    fn induced_subgraph_extremes() {
        let g = build_graph_from_support(&fig1());
        let all = VertexSet::full(4);
        assert_eq!(g.induced_subgraph(&all).unwrap().adjacency(), g.adjacency());
        assert_eq!(g.induced_subgraph(&VertexSet::empty(4)).unwrap().edge_count(), 0);
    }

    #[test]
    fn single_column_is_a_clique() {
        let t = [LatentType { assignment: vec![0, 1, 0] }];
        let m = SupportMatrix::from_parts(&t, vec![0, 1, 3, 4]).unwrap();
        let g = build_graph_from_support(&m);
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.unsupported(), &[1]);
        assert!(g.complement().edges().contains(&(1, 2)));
    }
}
