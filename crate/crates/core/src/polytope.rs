//! Membership in the convex hull of the support columns, decided by linear
//! programming, and a randomized cross-check of the inequality description
//! against it.

use crate::combinatorics::maximal_independent_sets;
use crate::error::{Error, Result};
use crate::graph::build_graph_from_support;
use crate::inequalities::{levelk_inequalities, mis_inequalities, Inequality};
use crate::levelk::{plausibly_nonredundant_sets, LevelKOptions};
use crate::model::{enumerate_latent_types, ModelSpec, SupportMatrix};
use crate::regularity::{check_clique_correspondence, check_perfect};
use crate::budget::Budget;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

/// Default LP tolerance.
pub const TAU_LP: f64 = 1e-8;
/// Tolerance on part sums of a probability vector.
pub const TAU_PROB: f64 = 1e-9;

/// Conditional response probabilities, stacked part by part.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbabilityVector {
    pub offsets: Vec<usize>,
    pub values: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(offsets: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n = *offsets.last().unwrap_or(&0);
        if values.len() != n {
            return Err(Error::InvalidData(format!("expected {n} probabilities, got {}", values.len())));
        }
        for k in 0..offsets.len() - 1 {
            let part = &values[offsets[k]..offsets[k + 1]];
            if part.iter().any(|&b| !(-TAU_PROB..=1.0 + TAU_PROB).contains(&b)) {
                return Err(Error::InvalidData(format!("part {k} has an entry outside [0, 1]")));
            }
            let s: f64 = part.iter().sum();
            if (s - 1.0).abs() > TAU_PROB {
                return Err(Error::InvalidData(format!("part {k} sums to {s}")));
            }
        }
        Ok(ProbabilityVector { offsets, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Feasible,
    Infeasible,
    /// Too close to the boundary to call at the working tolerance.
    Indeterminate,
}

#[derive(Clone, Debug, Serialize)]
pub struct MembershipResult {
    pub verdict: Verdict,
    /// Mixing weights over columns when feasible.
    pub weights: Option<Vec<f64>>,
    /// Separating functional over cells when infeasible.
    pub certificate: Option<Vec<f64>>,
    /// c·β minus the largest c·column, for the certificate.
    pub margin: Option<f64>,
    /// Optimal phase-one infeasibility.
    pub infeasibility: f64,
}

impl MembershipResult {
    pub fn is_feasible(&self) -> bool {
        self.verdict == Verdict::Feasible
    }
}

struct PhaseOne {
    value: f64,
    /// Values of structural variables.
    x: Vec<f64>,
    /// Row duals.
    y: Vec<f64>,
}

/// Minimizes the sum of artificials for `A x = b, x ≥ 0` with Bland's rule.
/// `a` is column-major (`cols[j][i]`); `b` must be nonnegative.
fn phase_one(cols: &[Vec<f64>], b: &[f64]) -> Result<PhaseOne> {
    const PIVOT_EPS: f64 = 1e-11;
    let m = b.len();
    let n = cols.len();
    let width = n + m;
    let mut t = vec![0.0; m * width];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..m {
            t[i * width + j] = col[i];
        }
    }
    for i in 0..m {
        t[i * width + n + i] = 1.0;
    }
    let mut rhs = b.to_vec();
    let mut basis: Vec<usize> = (n..n + m).collect();
    let cost = |j: usize| if j >= n { 1.0 } else { 0.0 };
    let mut d: Vec<f64> = (0..width)
        .map(|j| cost(j) - (0..m).map(|i| t[i * width + j]).sum::<f64>())
        .collect();
    let max_iter = 50 * (width + m) + 1000;
    for _ in 0..max_iter {
        let Some(enter) = (0..width).find(|&j| d[j] < -1e-12) else {
            let value = basis
                .iter()
                .zip(&rhs)
                .filter(|(&bj, _)| bj >= n)
                .map(|(_, r)| *r)
                .sum::<f64>();
            let mut x = vec![0.0; n];
            for (i, &bj) in basis.iter().enumerate() {
                if bj < n {
                    x[bj] = rhs[i];
                }
            }
            // Reduced cost of artificial i is 1 - y_i.
            let y = (0..m).map(|i| 1.0 - d[n + i]).collect();
            return Ok(PhaseOne { value, x, y });
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let a = t[i * width + enter];
            if a > PIVOT_EPS {
                let r = rhs[i] / a;
                let better = match leave {
                    None => true,
                    Some(l) => r < best - 1e-15 || (r <= best + 1e-15 && basis[i] < basis[l]),
                };
                if better {
                    best = r;
                    leave = Some(i);
                }
            }
        }
        // Phase one is bounded below by zero, so a leaving row always exists
        // up to round-off.
        let Some(p) = leave else {
            return Err(Error::NumericalFailure(format!("unbounded ray in phase one at column {enter}")));
        };
        let pv = t[p * width + enter];
        for j in 0..width {
            t[p * width + j] /= pv;
        }
        rhs[p] /= pv;
        let prow: Vec<f64> = t[p * width..(p + 1) * width].to_vec();
        for i in 0..m {
            if i == p {
                continue;
            }
            let f = t[i * width + enter];
            if f != 0.0 {
                for j in 0..width {
                    t[i * width + j] -= f * prow[j];
                }
                rhs[i] -= f * rhs[p];
                if rhs[i] < 0.0 && rhs[i] > -1e-13 {
                    rhs[i] = 0.0;
                }
            }
        }
        let f = d[enter];
        for j in 0..width {
            d[j] -= f * prow[j];
        }
        basis[p] = enter;
    }
    Err(Error::NumericalFailure(format!("simplex did not converge in {max_iter} pivots")))
}

fn solve_once(matrix: &SupportMatrix, beta: &[f64], order: &[usize], tau: f64) -> Result<MembershipResult> {
    let n = matrix.n_rows();
    // Rows: one per cell, then 1'Q = 1.
    let mut b: Vec<f64> = beta.to_vec();
    b.push(1.0);
    let sign: Vec<f64> = b.iter().map(|&x| if x < 0.0 { -1.0 } else { 1.0 }).collect();
    for (x, s) in b.iter_mut().zip(&sign) {
        *x *= s;
    }
    let cols: Vec<Vec<f64>> = order
        .iter()
        .map(|&j| {
            let c = matrix.column(j);
            (0..=n)
                .map(|i| sign[i] * if i == n || c.contains(i) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let sol = phase_one(&cols, &b)?;
    let value = sol.value.max(0.0);
    if value <= tau {
        let mut weights = vec![0.0; matrix.n_cols()];
        for (k, &j) in order.iter().enumerate() {
            weights[j] = sol.x[k];
        }
        let mut resid = 0.0f64;
        for i in 0..n {
            let ai: f64 = matrix.row(i).iter().map(|j| weights[j]).sum();
            resid = resid.max((ai - beta[i]).abs());
        }
        let total: f64 = weights.iter().sum();
        let ok = resid <= tau && (total - 1.0).abs() <= tau && weights.iter().all(|&w| w >= -tau);
        return Ok(MembershipResult {
            verdict: if ok { Verdict::Feasible } else { Verdict::Indeterminate },
            weights: Some(weights),
            certificate: None,
            margin: None,
            infeasibility: value,
        });
    }
    let c: Vec<f64> = (0..n).map(|i| sol.y[i] * sign[i]).collect();
    let cb: f64 = c.iter().zip(beta).map(|(a, b)| a * b).sum();
    let best_col = matrix
        .columns()
        .iter()
        .map(|col| col.iter().map(|i| c[i]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let margin = cb - best_col;
    let verdict = if margin > tau { Verdict::Infeasible } else { Verdict::Indeterminate };
    Ok(MembershipResult {
        verdict,
        weights: None,
        certificate: Some(c),
        margin: Some(margin),
        infeasibility: value,
    })
}

/// Decides whether β lies in the convex hull of the columns of A*.
pub fn membership(matrix: &SupportMatrix, beta: &ProbabilityVector) -> Result<MembershipResult> {
    membership_with_tolerance(matrix, &beta.values, TAU_LP)
}

/// Verdicts whose infeasibility lies in (τ, 10τ] are re-solved once with the
/// columns in reverse order; if the band persists the answer is Indeterminate.
pub fn membership_with_tolerance(matrix: &SupportMatrix, beta: &[f64], tau: f64) -> Result<MembershipResult> {
    if beta.len() != matrix.n_rows() {
        return Err(Error::InvalidData(format!(
            "probability vector has {} entries, model has {} cells",
            beta.len(),
            matrix.n_rows()
        )));
    }
    if matrix.n_cols() == 0 {
        return Err(Error::EmptySupport);
    }
    let forward: Vec<usize> = (0..matrix.n_cols()).collect();
    let near = |r: &MembershipResult| r.infeasibility > tau && r.infeasibility <= 10.0 * tau;
    let first = solve_once(matrix, beta, &forward, tau)?;
    if !near(&first) && first.verdict != Verdict::Indeterminate {
        return Ok(first);
    }
    let reverse: Vec<usize> = forward.into_iter().rev().collect();
    let mut second = solve_once(matrix, beta, &reverse, tau)?;
    if near(&second) {
        second.verdict = Verdict::Indeterminate;
    }
    Ok(second)
}

pub(crate) fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// β = A*Q for random weights Q on a random subset of columns.
pub fn sample_vertex_mixture(matrix: &SupportMatrix, seed: u64) -> ProbabilityVector {
    vertex_mixture(matrix, &mut trial_rng(seed, 0))
}

pub fn vertex_mixture<R: Rng>(matrix: &SupportMatrix, rng: &mut R) -> ProbabilityVector {
    let m = matrix.n_cols();
    let k = rng.random_range(1..=m.min(matrix.n_rows() + 1));
    let mut q = vec![0.0; m];
    let mut total = 0.0;
    for _ in 0..k {
        let j = rng.random_range(0..m);
        let w: f64 = Exp1.sample(rng);
        q[j] += w;
        total += w;
    }
    let values = (0..matrix.n_rows())
        .map(|i| matrix.row(i).iter().map(|j| q[j]).sum::<f64>() / total)
        .collect();
    ProbabilityVector {
        offsets: matrix.offsets().to_vec(),
        values,
    }
}

/// Uniform draw on the product of simplices, via normalized exponentials.
pub fn sample_product_simplex<R: Rng>(offsets: &[usize], rng: &mut R) -> ProbabilityVector {
    let mut values = vec![0.0; *offsets.last().unwrap_or(&0)];
    for k in 0..offsets.len() - 1 {
        let part = &mut values[offsets[k]..offsets[k + 1]];
        let mut s = 0.0;
        for x in part.iter_mut() {
            *x = Exp1.sample(rng);
            s += *x;
        }
        for x in part.iter_mut() {
            *x /= s;
        }
    }
    ProbabilityVector {
        offsets: offsets.to_vec(),
        values,
    }
}

pub fn satisfies_all(ineqs: &[Inequality], beta: &[f64], tol: f64) -> bool {
    ineqs.iter().all(|i| i.excess_at(beta, beta.len()) <= tol)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Battery {
    pub trials: usize,
    pub failures: usize,
    pub indeterminate: usize,
    pub counterexamples: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CrosscheckReport {
    pub regular: bool,
    pub mis_inequalities: usize,
    pub levelk_inequalities: usize,
    /// Vertex mixtures that violate a generated inequality.
    pub soundness: Battery,
    /// Regular specs: MIS-satisfying draws that the LP rejects.
    pub sharpness_regular: Option<Battery>,
    /// Non-regular specs: LP-infeasible MIS-satisfying draws that satisfy
    /// every level-k inequality (escapees).
    pub sharpness_nonregular: Option<Battery>,
    /// LP-infeasible draws seen in the non-regular battery.
    pub infeasible_seen: usize,
    /// Proposals drawn to collect the requested number of MIS-satisfying points.
    pub proposals: usize,
}

const MAX_COUNTEREXAMPLES: usize = 5;
const SATISFY_TOL: f64 = 1e-12;

/// Proposal for the sharpness batteries, one of three kinds with equal odds:
/// uniform on the product simplex; pulled toward a random vertex mixture so
/// that points near the faces are visited; or pushed past a vertex mixture
/// v1 away from another one v2, which stays in the affine hull of the
/// polytope (the only way to reach models whose polytope is flat).
fn proposal(matrix: &SupportMatrix, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match rng.random_range(0..3) {
        0 => sample_product_simplex(matrix.offsets(), rng).values,
        1 => {
            let u = sample_product_simplex(matrix.offsets(), rng).values;
            let v = vertex_mixture(matrix, rng).values;
            let lam: f64 = rng.random();
            u.iter().zip(&v).map(|(a, b)| lam * a + (1.0 - lam) * b).collect()
        }
        _ => {
            let v1 = vertex_mixture(matrix, rng).values;
            let v2 = vertex_mixture(matrix, rng).values;
            // Largest step that keeps every coordinate nonnegative.
            let s_max = v1
                .iter()
                .zip(&v2)
                .filter(|(a, b)| b > a)
                .map(|(a, b)| a / (b - a))
                .fold(1.0, f64::min);
            let s = s_max * rng.random::<f64>();
            v1.iter().zip(&v2).map(|(a, b)| (a + s * (a - b)).max(0.0)).collect()
        }
    }
}

/// Runs the soundness battery and the sharpness battery that applies to the
/// spec. Sharpness batteries keep drawing until `n_trials` proposals satisfy
/// every MIS inequality (or 200·n_trials proposals were drawn).
pub fn sharpness_crosscheck(spec: &ModelSpec, n_trials: usize, seed: u64) -> Result<CrosscheckReport> {
    let types = enumerate_latent_types(spec)?;
    let matrix = SupportMatrix::new(&types, spec)?;
    let g = build_graph_from_support(&matrix);
    let mis = mis_inequalities(&g, &maximal_independent_sets(&g)?);
    let (perfect, _) = check_perfect(&g, &Budget::unlimited())?;
    let regular = perfect && check_clique_correspondence(&g, &matrix)?.0;
    let levelk = if regular {
        Vec::new()
    } else {
        let sets = plausibly_nonredundant_sets(&g, &matrix, &LevelKOptions::default())?;
        levelk_inequalities(&g, &sets.sets)
    };

    let mut soundness = Battery {
        trials: n_trials,
        ..Battery::default()
    };
    let bad: Vec<Vec<f64>> = (0..n_trials as u64)
        .into_par_iter()
        .filter_map(|i| {
            let b = vertex_mixture(&matrix, &mut trial_rng(seed, i)).values;
            let ok = satisfies_all(&mis, &b, 1e-9) && satisfies_all(&levelk, &b, 1e-9);
            (!ok).then_some(b)
        })
        .collect();
    soundness.failures = bad.len();
    soundness.counterexamples = bad.into_iter().take(MAX_COUNTEREXAMPLES).collect();

    // Sharpness: collect MIS-satisfying proposals in index order.
    let stream_base = 1u64 << 32;
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(n_trials);
    let mut drawn = 0u64;
    let cap = 200 * n_trials.max(1) as u64;
    while accepted.len() < n_trials && drawn < cap {
        let batch = 1024.min(cap - drawn);
        let got: Vec<Option<Vec<f64>>> = (drawn..drawn + batch)
            .into_par_iter()
            .map(|i| {
                let b = proposal(&matrix, &mut trial_rng(seed, stream_base + i));
                satisfies_all(&mis, &b, SATISFY_TOL).then_some(b)
            })
            .collect();
        let start = drawn;
        drawn += batch;
        for (off, b) in got.into_iter().enumerate() {
            if let Some(b) = b {
                accepted.push(b);
                if accepted.len() == n_trials {
                    drawn = start + off as u64 + 1;
                    break;
                }
            }
        }
    }
    let verdicts: Vec<Result<MembershipResult>> = accepted
        .par_iter()
        .map(|b| membership_with_tolerance(&matrix, b, TAU_LP))
        .collect();
    let mut battery = Battery {
        trials: accepted.len(),
        ..Battery::default()
    };
    let mut infeasible_seen = 0;
    for (b, v) in accepted.iter().zip(verdicts) {
        let v = v?;
        match v.verdict {
            Verdict::Indeterminate => battery.indeterminate += 1,
            Verdict::Feasible => {}
            Verdict::Infeasible => {
                infeasible_seen += 1;
                let escapee = regular || satisfies_all(&levelk, b, 0.0);
                if escapee {
                    battery.failures += 1;
                    if battery.counterexamples.len() < MAX_COUNTEREXAMPLES {
                        battery.counterexamples.push(b.clone());
                    }
                }
            }
        }
    }
    let (sharpness_regular, sharpness_nonregular) = if regular { (Some(battery), None) } else { (None, Some(battery)) };
    Ok(CrosscheckReport {
        regular,
        mis_inequalities: mis.len(),
        levelk_inequalities: levelk.len(),
        soundness,
        sharpness_regular,
        sharpness_nonregular,
        infeasible_seen,
        proposals: drawn as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, LatentType};

    fn pm() -> (ModelSpec, SupportMatrix) {
        let spec = ModelSpec::from_family("pm", Family::from_id("partial-monotonicity", &Default::default()).unwrap());
        let m = SupportMatrix::new(&enumerate_latent_types(&spec).unwrap(), &spec).unwrap();
        (spec, m)
    }

    #[test]
    fn single_column_is_feasible_with_unit_mass() {
        let (_, m) = pm();
        for j in 0..m.n_cols() {
            let beta: Vec<f64> = (0..m.n_rows()).map(|i| m.entry(i, j) as u8 as f64).collect();
            let r = membership_with_tolerance(&m, &beta, TAU_LP).unwrap();
            assert!(r.is_feasible());
            let w = r.weights.unwrap();
            assert!((w[j] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pm_violation_has_a_certificate() {
        let (spec, m) = pm();
        // P(D=1|Z=(0,0)) = 1, P(D=0|Z=(1,0)) = 1, the rest one half.
        let mut beta = vec![0.5; 8];
        let at = |z: &str, r: &str| spec.offsets()[spec.input_index(z).unwrap()] + spec.response_index(spec.input_index(z).unwrap(), r).unwrap();
        beta[at("(0,0)", "1")] = 1.0;
        beta[at("(0,0)", "0")] = 0.0;
        beta[at("(1,0)", "0")] = 1.0;
        beta[at("(1,0)", "1")] = 0.0;
        let r = membership(&m, &ProbabilityVector::new(spec.offsets(), beta.clone()).unwrap()).unwrap();
        assert_eq!(r.verdict, Verdict::Infeasible);
        let c = r.certificate.unwrap();
        let cb: f64 = c.iter().zip(&beta).map(|(a, b)| a * b).sum();
        for col in m.columns() {
            assert!(cb > col.iter().map(|i| c[i]).sum::<f64>() + TAU_LP);
        }
    }

    #[test]
    fn vertex_mixtures_are_reproducible_and_feasible() {
        let (_, m) = pm();
        assert_eq!(sample_vertex_mixture(&m, 7), sample_vertex_mixture(&m, 7));
        let b = sample_vertex_mixture(&m, 11);
        assert!(membership(&m, &b).unwrap().is_feasible());
        let one = SupportMatrix::from_parts(&[LatentType { assignment: vec![1, 0] }], vec![0, 2, 4]).unwrap();
        assert_eq!(sample_vertex_mixture(&one, 3).values, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn pm_crosscheck_is_clean() {
        let (spec, _) = pm();
        let r = sharpness_crosscheck(&spec, 200, 1).unwrap();
        assert!(r.regular);
        assert_eq!(r.soundness.failures, 0);
        let b = r.sharpness_regular.unwrap();
        assert_eq!(b.trials, 200);
        assert_eq!(b.failures, 0);
    }
}
