//! Models, latent types and the support matrix.

mod family;
mod json;

pub use family::{Arm, Family, Mediators, SpilloverSign, FAMILY_IDS};
pub use json::{load_spec, parse_spec, spec_to_json, SCHEMA_VERSION};

use crate::bitset::VertexSet;
use crate::error::{Error, Result};
use std::collections::BTreeSet;

/// Default cap on the number of latent types.
pub const DEFAULT_TYPE_LIMIT: usize = 10_000_000;

/// How the support R* is described.
#[derive(Clone, Debug, PartialEq)]
pub enum Restriction {
    /// Latent types listed as response indices, one per input.
    Explicit(Vec<Vec<usize>>),
    /// Types are the response maps all of whose cell pairs pass the family's predicate.
    Predicate(Family),
    /// Types are generated by the family itself.
    Family(Family),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Covariate {
    pub name: String,
    pub levels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub inputs: Vec<String>,
    pub responses: Vec<Vec<String>>,
    pub restriction: Restriction,
    pub covariates: Vec<Covariate>,
}

/// An observable cell: response `resp` at input `part`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub part: usize,
    pub resp: usize,
}

/// A complete map from inputs to responses, stored as response indices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LatentType {
    pub assignment: Vec<usize>,
}

impl LatentType {
    pub fn labels<'a>(&self, spec: &'a ModelSpec) -> Vec<(&'a str, &'a str)> {
        self.assignment
            .iter()
            .enumerate()
            .map(|(k, &r)| (spec.inputs[k].as_str(), spec.responses[k][r].as_str()))
            .collect()
    }
}

impl ModelSpec {
    /// A model generated entirely by a built-in family.
    pub fn from_family(name: impl Into<String>, family: Family) -> ModelSpec {
        let (inputs, responses) = family.layout();
        ModelSpec {
            name: name.into(),
            inputs,
            responses,
            restriction: Restriction::Family(family),
            covariates: Vec::new(),
        }
    }

    /// Same layout, but types come from pairwise checks of the family predicate.
    pub fn from_predicate(name: impl Into<String>, family: Family) -> ModelSpec {
        let mut s = Self::from_family(name, family);
        if let Restriction::Family(f) = s.restriction {
            s.restriction = Restriction::Predicate(f);
        }
        s
    }

    pub fn with_covariates(mut self, covariates: Vec<Covariate>) -> Self {
        self.covariates = covariates;
        self
    }

    pub fn k(&self) -> usize {
        self.inputs.len()
    }

    /// Number of cells N.
    pub fn cell_count(&self) -> usize {
        self.responses.iter().map(Vec::len).sum()
    }

    /// Row offset of each part.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.k() + 1);
        let mut acc = 0;
        for r in &self.responses {
            off.push(acc);
            acc += r.len();
        }
        off.push(acc);
        off
    }

    pub fn cells(&self) -> Vec<Cell> {
        self.responses
            .iter()
            .enumerate()
            .flat_map(|(part, rs)| (0..rs.len()).map(move |resp| Cell { part, resp }))
            .collect()
    }

    pub fn family(&self) -> Option<&Family> {
        match &self.restriction {
            Restriction::Family(f) | Restriction::Predicate(f) => Some(f),
            Restriction::Explicit(_) => None,
        }
    }

    pub fn input_index(&self, label: &str) -> Option<usize> {
        self.inputs.iter().position(|z| z == label)
    }

    pub fn response_index(&self, part: usize, label: &str) -> Option<usize> {
        self.responses.get(part)?.iter().position(|r| r == label)
    }

    /// Labels of the cartesian product of covariate levels, in odometer order.
    pub fn covariate_cells(&self) -> Vec<Vec<String>> {
        let mut cells: Vec<Vec<String>> = vec![Vec::new()];
        for c in &self.covariates {
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    c.levels.iter().map(move |l| {
                        let mut p = prefix.clone();
                        p.push(l.clone());
                        p
                    })
                })
                .collect();
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.k() < 2 {
            return bad(format!("need at least two inputs, found {}", self.k()));
        }
        if self.responses.len() != self.k() {
            return bad("one response list per input required".into());
        }
        if BTreeSet::from_iter(&self.inputs).len() != self.k() {
            return bad("duplicate input labels".into());
        }
        for (z, rs) in self.inputs.iter().zip(&self.responses) {
            if rs.is_empty() {
                return bad(format!("input `{z}` has no responses"));
            }
            if BTreeSet::from_iter(rs).len() != rs.len() {
                return bad(format!("duplicate response labels at input `{z}`"));
            }
        }
        for c in &self.covariates {
            if c.levels.is_empty() || BTreeSet::from_iter(&c.levels).len() != c.levels.len() {
                return bad(format!("covariate `{}` needs distinct, nonempty levels", c.name));
            }
        }
        match &self.restriction {
            Restriction::Explicit(types) => {
                let mut seen = BTreeSet::new();
                for t in types {
                    if t.len() != self.k() || t.iter().zip(&self.responses).any(|(&r, rs)| r >= rs.len()) {
                        return bad("explicit type does not map every input to a valid response".into());
                    }
                    if !seen.insert(t) {
                        return bad("duplicate explicit type".into());
                    }
                }
            }
            Restriction::Family(f) | Restriction::Predicate(f) => {
                let (inputs, responses) = f.layout();
                if inputs != self.inputs || responses != self.responses {
                    return bad(format!("layout does not match family `{}`", f.id()));
                }
            }
        }
        Ok(())
    }
}

/// Whether `cell_a` and `cell_b` can be produced by a common latent type,
/// judged by the family's pairwise predicate.
pub fn pairwise_compatible(spec: &ModelSpec, a: Cell, b: Cell) -> Result<bool> {
    let fam = spec
        .family()
        .filter(|f| f.has_predicate())
        .ok_or_else(|| Error::NoPredicateAvailable(spec.name.clone()))?;
    if a.part == b.part {
        return Ok(a.resp == b.resp);
    }
    Ok(fam.compatible(a.part, a.resp, b.part, b.resp))
}

/// Enumerate R*, deduplicated and sorted lexicographically.
pub fn enumerate_latent_types(spec: &ModelSpec) -> Result<Vec<LatentType>> {
    enumerate_latent_types_with_limit(spec, DEFAULT_TYPE_LIMIT)
}

pub fn enumerate_latent_types_with_limit(spec: &ModelSpec, limit: usize) -> Result<Vec<LatentType>> {
    spec.validate()?;
    let mut set: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut overflow = false;
    match &spec.restriction {
        Restriction::Explicit(types) => {
            if types.len() > limit {
                overflow = true;
            }
            set.extend(types.iter().cloned());
        }
        Restriction::Family(f) => {
            f.generate(&mut |t| {
                set.insert(t.to_vec());
                overflow = set.len() > limit;
                !overflow
            });
        }
        Restriction::Predicate(f) => {
            let sizes: Vec<usize> = spec.responses.iter().map(Vec::len).collect();
            let mut prefix = Vec::with_capacity(sizes.len());
            predicate_dfs(f, &sizes, &mut prefix, &mut set, limit, &mut overflow);
        }
    }
    if overflow {
        return Err(Error::CapacityExceeded {
            what: "latent types",
            limit,
        });
    }
    if set.is_empty() {
        return Err(Error::EmptySupport);
    }
    Ok(set.into_iter().map(|assignment| LatentType { assignment }).collect())
}

/// Depth-first extension of a partial response map; a prefix survives only if
/// every pair of its cells passes the predicate. Each leaf assigns exactly one
/// response per input, so leaves are well-formed maps.
fn predicate_dfs(
    f: &Family,
    sizes: &[usize],
    prefix: &mut Vec<usize>,
    out: &mut BTreeSet<Vec<usize>>,
    limit: usize,
    overflow: &mut bool,
) {
    if *overflow {
        return;
    }
    let k = prefix.len();
    if k == sizes.len() {
        out.insert(prefix.clone());
        *overflow = out.len() > limit;
        return;
    }
    for r in 0..sizes[k] {
        if prefix.iter().enumerate().all(|(j, &rj)| f.compatible(j, rj, k, r)) {
            prefix.push(r);
            predicate_dfs(f, sizes, prefix, out, limit, overflow);
            prefix.pop();
        }
    }
}

/// The N×M vertex–clique incidence matrix A*.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportMatrix {
    offsets: Vec<usize>,
    types: Vec<LatentType>,
    columns: Vec<VertexSet>,
    rows: Vec<VertexSet>,
}

impl SupportMatrix {
    pub fn new(types: &[LatentType], spec: &ModelSpec) -> Result<SupportMatrix> {
        Self::from_parts(types, spec.offsets())
    }

    /// Build from part offsets `[0, |R_1|, |R_1|+|R_2|, .., N]`.
    pub fn from_parts(types: &[LatentType], offsets: Vec<usize>) -> Result<SupportMatrix> {
        if types.is_empty() {
            return Err(Error::EmptyTypeList);
        }
        let k = offsets.len() - 1;
        let n = offsets[k];
        let mut uniq: Vec<LatentType> = types.to_vec();
        uniq.sort();
        uniq.dedup();
        let mut columns = Vec::with_capacity(uniq.len());
        let mut rows = vec![VertexSet::empty(uniq.len()); n];
        for (j, t) in uniq.iter().enumerate() {
            if t.assignment.len() != k {
                return Err(Error::InvalidSpec("type arity differs from the number of inputs".into()));
            }
            let mut col = VertexSet::empty(n);
            for (part, &r) in t.assignment.iter().enumerate() {
                let row = offsets[part] + r;
                if row >= offsets[part + 1] {
                    return Err(Error::InvalidSpec(format!("response index {r} out of range at part {part}")));
                }
                col.insert(row);
                rows[row].insert(j);
            }
            columns.push(col);
        }
        Ok(SupportMatrix {
            offsets,
            types: uniq,
            columns,
            rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn k(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn types(&self) -> &[LatentType] {
        &self.types
    }

    /// Rows with a one in column `j`.
    pub fn column(&self, j: usize) -> &VertexSet {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[VertexSet] {
        &self.columns
    }

    /// Columns with a one in row `i`.
    pub fn row(&self, i: usize) -> &VertexSet {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> bool {
        self.columns[j].contains(i)
    }

    /// The same matrix without column `j`.
    pub fn without_column(&self, j: usize) -> Result<SupportMatrix> {
        let mut t = self.types.clone();
        t.remove(j);
        Self::from_parts(&t, self.offsets.clone())
    }
}

pub fn build_support_matrix(types: &[LatentType], spec: &ModelSpec) -> Result<SupportMatrix> {
    SupportMatrix::new(types, spec)
}
