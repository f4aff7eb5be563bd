//! Plug-in estimation of conditional response probabilities and a
//! max-studentized moment inequality test with bootstrap critical values.

mod data;
mod simulate;

pub use data::{Dataset, Obs};
pub use simulate::{
    monotonicity_design_spec, pm_design_spec, power_curve, power_csv, simulate_monotonicity, simulate_pm, B0Law, Design,
    PowerOptions, PowerPoint,
};

use crate::combinatorics::maximal_independent_sets;
use crate::error::{Error, Result};
use crate::graph::{build_graph, ResponseGraph};
use crate::inequalities::{expand_with_covariates, levelk_inequalities, mis_inequalities, testable, Inequality};
use crate::levelk::{plausibly_nonredundant_sets, LevelKOptions};
use crate::model::ModelSpec;
use crate::polytope::trial_rng;
use crate::regularity::{check_clique_correspondence, check_perfect};
use crate::budget::Budget;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Floor on σ̂ used in studentization.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Estimates for every (covariate cell, vertex) pair, indexed `w * N + v`.
#[derive(Clone, Debug, Serialize)]
pub struct MomentEstimates {
    pub n: usize,
    pub n_vertices: usize,
    pub n_cells: usize,
    pub offsets: Vec<usize>,
    /// Joint counts of (w, z, r).
    pub counts: Vec<usize>,
    /// Counts of (w, z), indexed `w * K + part`.
    pub z_counts: Vec<usize>,
    /// p̂(w, z) = P̂(W = w, Z = z).
    pub pi_hat: Vec<f64>,
    pub beta_hat: Vec<f64>,
    /// Asymptotic covariance of √n(β̂ − β): block diagonal over (w, z).
    pub v_hat: Vec<Vec<f64>>,
}

impl MomentEstimates {
    fn k(&self) -> usize {
        self.offsets.len() - 1
    }
}

fn required_cells(ineqs: &[Inequality], k: usize) -> Vec<usize> {
    let mut cells: Vec<usize> = ineqs
        .iter()
        .flat_map(|i| i.terms.iter().map(move |t| t.w.unwrap_or(0) * k + t.part))
        .collect();
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// Plug-in estimates; every (w, z) cell that carries a term of `ineqs` must
/// be observed.
pub fn estimate(data: &Dataset, ineqs: &[Inequality]) -> Result<MomentEstimates> {
    let n = data.n();
    let nv = data.n_vertices();
    let k = data.k();
    let mut counts = vec![0usize; nv * data.n_cells()];
    let mut z_counts = vec![0usize; k * data.n_cells()];
    for o in data.obs() {
        counts[data.category(o)] += 1;
        z_counts[data.z_cell(o)] += 1;
    }
    let missing: Vec<String> = required_cells(ineqs, k)
        .into_iter()
        .filter(|&c| z_counts[c] == 0)
        .map(|c| data.z_cell_label(c))
        .collect();
    if !missing.is_empty() {
        return Err(Error::EmptyConditioningCell(missing));
    }
    let offsets = data.offsets().to_vec();
    let dim = nv * data.n_cells();
    let zc_of = |c: usize| (c / nv) * k + part_of(&offsets, c % nv);
    let pi_hat: Vec<f64> = z_counts.iter().map(|&c| c as f64 / n as f64).collect();
    let beta_hat: Vec<f64> = (0..dim)
        .map(|c| {
            let zc = z_counts[zc_of(c)];
            if zc == 0 {
                0.0
            } else {
                counts[c] as f64 / zc as f64
            }
        })
        .collect();
    // Average of b̂ b̂' with b̂(v) = (1{R=r,Z=z} − β̂ 1{Z=z}) / p̂(z), which
    // reduces to (δ β̂_r − β̂_r β̂_r') / p̂(z) within a (w, z) block.
    let mut v_hat = vec![vec![0.0; dim]; dim];
    for a in 0..dim {
        let za = zc_of(a);
        if pi_hat[za] == 0.0 {
            continue;
        }
        for b in 0..dim {
            if zc_of(b) == za {
                let d = if a == b { beta_hat[a] } else { 0.0 };
                v_hat[a][b] = (d - beta_hat[a] * beta_hat[b]) / pi_hat[za];
            }
        }
    }
    Ok(MomentEstimates {
        n,
        n_vertices: nv,
        n_cells: data.n_cells(),
        offsets,
        counts,
        z_counts,
        pi_hat,
        beta_hat,
        v_hat,
    })
}

fn part_of(offsets: &[usize], v: usize) -> usize {
    offsets.partition_point(|&o| o <= v) - 1
}

/// An inequality compiled against a dataset layout.
struct Compiled {
    rhs: f64,
    /// (w, z) cell and the categories of the terms in it.
    groups: Vec<(usize, Vec<usize>)>,
}

fn compile(ineqs: &[Inequality], nv: usize, k: usize) -> Vec<Compiled> {
    ineqs
        .iter()
        .map(|i| {
            let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
            for t in &i.terms {
                let w = t.w.unwrap_or(0);
                let zc = w * k + t.part;
                let cat = w * nv + t.vertex;
                match groups.iter_mut().find(|(c, _)| *c == zc) {
                    Some((_, v)) => v.push(cat),
                    None => groups.push((zc, vec![cat])),
                }
            }
            Compiled {
                rhs: i.rhs as f64,
                groups,
            }
        })
        .collect()
}

/// μ and σ from raw counts; None when a needed cell is empty.
fn moments(c: &Compiled, counts: &[usize], z_counts: &[usize], n: usize) -> Option<(f64, f64)> {
    let mut mu = -c.rhs;
    let mut var = 0.0;
    for (zc, cats) in &c.groups {
        let m = z_counts[*zc];
        if m == 0 {
            return None;
        }
        let s: f64 = cats.iter().map(|&a| counts[a] as f64).sum::<f64>() / m as f64;
        mu += s;
        var += (s - s * s) / (m as f64 / n as f64);
    }
    Some((mu, var.max(0.0).sqrt()))
}

#[derive(Clone, Debug, Serialize)]
pub struct Statistic {
    pub value: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// T_n = max(max_I √n μ_I / max(σ_I, ε), 0).
pub fn max_statistic(mu: &[f64], sigma: &[f64], n: usize) -> f64 {
    let rn = (n as f64).sqrt();
    mu.iter()
        .zip(sigma)
        .map(|(m, s)| rn * m / s.max(SIGMA_FLOOR))
        .fold(0.0, f64::max)
}

pub fn test_statistic(est: &MomentEstimates, ineqs: &[Inequality]) -> Statistic {
    let compiled = compile(ineqs, est.n_vertices, est.k());
    let (mu, sigma): (Vec<f64>, Vec<f64>) = compiled
        .iter()
        .map(|c| moments(c, &est.counts, &est.z_counts, est.n).expect("estimate checked required cells"))
        .unzip();
    Statistic {
        value: max_statistic(&mu, &sigma, est.n),
        mu,
        sigma,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LeastFavorable,
    Gms,
}

/// Scale used for the bootstrapped recentered moments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Studentization {
    /// σ̂* recomputed in each draw.
    #[default]
    Bootstrap,
    /// σ̂ from the original sample.
    Sample,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalValue {
    pub value: f64,
    /// (draw, inequality) pairs dropped because a conditioning cell was empty.
    pub dropped_terms: usize,
    /// Inequalities removed by moment selection.
    pub deselected: usize,
}

/// κ_n = √(ln n).
pub fn gms_kappa(n: usize) -> f64 {
    (n as f64).ln().max(0.0).sqrt()
}

/// (1−α) empirical quantile of the bootstrapped recentered statistic.
pub fn critical_value(
    data: &Dataset,
    ineqs: &[Inequality],
    alpha: f64,
    b: usize,
    method: Method,
    studentization: Studentization,
    seed: u64,
) -> Result<CriticalValue> {
    if b == 0 {
        return Err(Error::InvalidData("the number of bootstrap draws must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidData(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let est = estimate(data, ineqs)?;
    let stat = test_statistic(&est, ineqs);
    Ok(bootstrap(data, ineqs, &stat, alpha, b, method, studentization, seed))
}

fn bootstrap(
    data: &Dataset,
    ineqs: &[Inequality],
    stat: &Statistic,
    alpha: f64,
    b: usize,
    method: Method,
    studentization: Studentization,
    seed: u64,
) -> CriticalValue {
    let n = data.n();
    let rn = (n as f64).sqrt();
    let compiled = compile(ineqs, data.n_vertices(), data.k());
    let kappa = gms_kappa(n);
    let active: Vec<usize> = (0..compiled.len())
        .filter(|&i| match method {
            Method::LeastFavorable => true,
            Method::Gms => rn * stat.mu[i] / stat.sigma[i].max(SIGMA_FLOOR) >= -kappa,
        })
        .collect();
    let cats: Vec<usize> = data.obs().iter().map(|o| data.category(o)).collect();
    let zcs: Vec<usize> = data.obs().iter().map(|o| data.z_cell(o)).collect();
    let n_cats = data.n_vertices() * data.n_cells();
    let n_zc = data.k() * data.n_cells();
    let draws: Vec<(f64, usize)> = (0..b as u64)
        .into_par_iter()
        .map(|d| {
            let mut rng = trial_rng(seed, d);
            let mut counts = vec![0usize; n_cats];
            let mut zc = vec![0usize; n_zc];
            for _ in 0..n {
                let i = rng.random_range(0..n);
                counts[cats[i]] += 1;
                zc[zcs[i]] += 1;
            }
            let mut best = 0.0f64;
            let mut dropped = 0;
            for &i in &active {
                match moments(&compiled[i], &counts, &zc, n) {
                    Some((mu, sigma)) => {
                        let scale = match studentization {
                            Studentization::Bootstrap => sigma,
                            Studentization::Sample => stat.sigma[i],
                        };
                        best = best.max(rn * (mu - stat.mu[i]) / scale.max(SIGMA_FLOOR));
                    }
                    None => dropped += 1,
                }
            }
            (best, dropped)
        })
        .collect();
    let mut values: Vec<f64> = draws.iter().map(|d| d.0).collect();
    values.sort_by(f64::total_cmp);
    let idx = (((1.0 - alpha) * b as f64).ceil() as usize).clamp(1, b) - 1;
    CriticalValue {
        value: values[idx],
        dropped_terms: draws.iter().map(|d| d.1).sum(),
        deselected: compiled.len() - active.len(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub method: Method,
    pub studentization: Studentization,
    pub bootstrap_draws: usize,
    pub seed: u64,
    pub n: usize,
    pub inequalities: usize,
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub dropped_terms: usize,
    pub deselected: usize,
}

#[derive(Clone, Debug)]
pub struct TestOptions {
    pub b: usize,
    pub method: Method,
    pub studentization: Studentization,
    pub seed: u64,
    /// Condition on covariate cells when the data carry them.
    pub conditional: bool,
    /// Add level-k inequalities for non-regular models.
    pub sharp: bool,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            b: 1000,
            method: Method::Gms,
            studentization: Studentization::Bootstrap,
            seed: 0,
            conditional: true,
            sharp: false,
        }
    }
}

/// Testable inequalities of a spec (MIS, plus level-k on request when the
/// model is not regular).
pub fn model_inequalities(spec: &ModelSpec, sharp: bool) -> Result<(ResponseGraph, Vec<Inequality>)> {
    let (g, matrix) = build_graph(spec)?;
    let mut ineqs = testable(&mis_inequalities(&g, &maximal_independent_sets(&g)?));
    if sharp {
        let regular = check_perfect(&g, &Budget::unlimited())?.0 && check_clique_correspondence(&g, &matrix)?.0;
        if !regular {
            let sets = plausibly_nonredundant_sets(&g, &matrix, &LevelKOptions::default())?;
            ineqs.extend(levelk_inequalities(&g, &sets.sets));
        }
    }
    Ok((g, ineqs))
}

/// Generates the model's inequalities, stacks them over covariate cells when
/// conditioning, and runs the test.
pub fn run_test(data: &Dataset, spec: &ModelSpec, alpha: f64, opts: &TestOptions) -> Result<TestResult> {
    let (_, ineqs) = model_inequalities(spec, opts.sharp)?;
    if opts.conditional && data.n_cells() > 1 {
        run_test_with(data, &expand_with_covariates(&ineqs, data.n_cells()), alpha, opts)
    } else {
        run_test_with(&data.pooled(), &ineqs, alpha, opts)
    }
}

/// Runs the test on a given list; Part inequalities are ignored.
pub fn run_test_with(data: &Dataset, ineqs: &[Inequality], alpha: f64, opts: &TestOptions) -> Result<TestResult> {
    let ineqs = testable(ineqs);
    if ineqs.is_empty() {
        return Err(Error::NoTestableInequalities);
    }
    let pooled;
    let data = if ineqs.iter().all(|i| i.cell().is_none()) && data.n_cells() > 1 {
        pooled = data.pooled();
        &pooled
    } else {
        data
    };
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidData(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if opts.b == 0 {
        return Err(Error::InvalidData("the number of bootstrap draws must be positive".into()));
    }
    let est = estimate(data, &ineqs)?;
    let stat = test_statistic(&est, &ineqs);
    let cv = bootstrap(data, &ineqs, &stat, alpha, opts.b, opts.method, opts.studentization, opts.seed);
    Ok(TestResult {
        statistic: stat.value,
        critical_value: cv.value,
        reject: stat.value > cv.value,
        alpha,
        method: opts.method,
        studentization: opts.studentization,
        bootstrap_draws: opts.b,
        seed: opts.seed,
        n: data.n(),
        inequalities: ineqs.len(),
        mu_hat: stat.mu,
        sigma_hat: stat.sigma,
        dropped_terms: cv.dropped_terms,
        deselected: cv.deselected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistic_arithmetic() {
        assert_eq!(max_statistic(&[-0.1, -0.3], &[0.5, 2.0], 400), 0.0);
        assert!((max_statistic(&[0.1], &[1.0], 100) - 1.0).abs() < 1e-12);
        assert!((max_statistic(&[0.1, 0.0], &[1.0, 0.0], 100) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_index() {
        // With a constant sample every bootstrap draw reproduces the sample.
        let spec = pm_design_spec();
        let obs: Vec<Obs> = (0..4)
            .flat_map(|part| (0..10).map(move |_| Obs { part, resp: 1, cell: 0 }))
            .collect();
        let data = Dataset::new(&spec, obs).unwrap().pooled();
        let (_, ineqs) = model_inequalities(&spec, false).unwrap();
        let cv = critical_value(&data, &ineqs, 0.05, 1, Method::LeastFavorable, Studentization::Bootstrap, 3).unwrap();
        assert_eq!(cv.value, 0.0);
    }
}
