//! Data-generating processes for the Monte Carlo designs and a power-curve
//! harness.

use super::{model_inequalities, run_test_with, Dataset, Method, Obs, Studentization, TestOptions};
use crate::error::{Error, Result};
use crate::inequalities::{expand_with_covariates, Inequality};
use crate::model::{Covariate, Family, ModelSpec};
use crate::polytope::trial_rng;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use std::fmt::Write as _;

/// Partial monotonicity in two binary instruments with a binary covariate W.
pub fn pm_design_spec() -> ModelSpec {
    let fam = Family::from_id("partial-monotonicity", &Default::default()).expect("built-in family");
    ModelSpec::from_family("partial-monotonicity", fam).with_covariates(vec![Covariate {
        name: "W".into(),
        levels: vec!["0".into(), "1".into()],
    }])
}

/// D ∈ {1..J} nondecreasing in Z ∈ {1..K}.
pub fn monotonicity_design_spec(j: usize, k: usize) -> Result<ModelSpec> {
    if j < 2 || k < 2 {
        return Err(Error::InvalidSpec(format!("monotonicity design needs J, K >= 2, got J={j}, K={k}")));
    }
    let labels = |m: usize| (1..=m).map(|i| i.to_string()).collect::<Vec<_>>();
    let params = json!({"d": labels(j), "z": labels(k)});
    let fam = Family::from_id("ia-monotonicity", params.as_object().unwrap())?;
    Ok(ModelSpec::from_family(format!("monotonicity-j{j}-k{k}"), fam))
}

fn pm_obs<R: Rng>(rng: &mut R, delta: f64, gamma: f64, h: f64) -> Obs {
    // Every draw is made regardless of the branch taken, so runs that share
    // a seed share their random numbers across (δ, γ, h).
    let z1 = rng.random_bool(0.5) as usize;
    let z2 = rng.random_bool(0.5) as usize;
    let w = rng.random_bool(0.5) as usize;
    let b0 = 1.0 + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let pick: f64 = rng.random();
    let b1 = 0.5 * w as f64 + u1;
    let b2 = 0.5 * w as f64 + u2;
    let cuts = [h, h + gamma * (1.0 - h), h + (gamma + delta) * (1.0 - h)];
    let (s1, s2) = if pick < cuts[0] {
        (1.0, 1.0)
    } else if pick < cuts[1] {
        (1.0, -1.0)
    } else if pick < cuts[2] {
        (-1.0, 1.0)
    } else {
        (-1.0, -1.0)
    };
    let d = (b0 + s1 * b1 * z1 as f64 + s2 * b2 * z2 as f64 >= 0.0) as usize;
    Obs {
        part: 2 * z1 + z2,
        resp: d,
        cell: w,
    }
}

fn check_pm(delta: f64, gamma: f64, h: f64, n: usize) -> Result<()> {
    if !(delta >= 0.0 && gamma >= 0.0 && delta + gamma <= 1.0 + 1e-12 && (0.0..=1.0).contains(&h)) {
        return Err(Error::InvalidShares(format!("delta={delta}, gamma={gamma}, h={h}")));
    }
    if n == 0 {
        return Err(Error::InvalidData("sample size must be positive".into()));
    }
    Ok(())
}

/// Binary threshold model D = 1(B0 + B1 z1 + B2 z2 ≥ 0) with B_j = W/2 + U_j,
/// negated for the violating shares.
pub fn simulate_pm(delta: f64, gamma: f64, h: f64, n: usize, seed: u64) -> Result<Dataset> {
    check_pm(delta, gamma, h, n)?;
    let mut rng = trial_rng(seed, 0);
    let obs = (0..n).map(|_| pm_obs(&mut rng, delta, gamma, h)).collect();
    Dataset::new(&pm_design_spec(), obs)
}

/// Law of the intercept B0 in the multiple thresholds model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum B0Law {
    Constant(f64),
    Normal { mean: f64, sd: f64 },
}

impl Default for B0Law {
    fn default() -> Self {
        B0Law::Constant(0.0)
    }
}

fn mono_obs<R: Rng>(rng: &mut R, j: usize, k: usize, h: f64, b0: B0Law) -> Obs {
    let z = rng.random_range(0..k);
    let mut u: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    u.sort_by(f64::total_cmp);
    let u0: f64 = rng.random();
    let eps: f64 = StandardNormal.sample(rng);
    let bz = if u0 <= h { u[z] } else { u[k - 1 - z] };
    let b0 = match b0 {
        B0Law::Constant(c) => c,
        B0Law::Normal { mean, sd } => mean + sd * eps,
    };
    let x = b0 + bz;
    // Thresholds t_i = −1 + 2i/J; values beyond the grid go to the end bins.
    let d = (1..=j).find(|&i| x <= -1.0 + 2.0 * i as f64 / j as f64).unwrap_or(j);
    Obs {
        part: z,
        resp: d - 1,
        cell: 0,
    }
}

/// Multiple thresholds model with ordered (share h) or reversed exponential
/// order statistics as the instrument effects.
pub fn simulate_monotonicity(j: usize, k: usize, h: f64, n: usize, seed: u64, b0: B0Law) -> Result<Dataset> {
    let spec = monotonicity_design_spec(j, k)?;
    if !(0.0..=1.0).contains(&h) {
        return Err(Error::InvalidShares(format!("h={h} is outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::InvalidData("sample size must be positive".into()));
    }
    let mut rng = trial_rng(seed, 0);
    let obs = (0..n).map(|_| mono_obs(&mut rng, j, k, h, b0)).collect();
    Dataset::new(&spec, obs)
}

#[derive(Clone, Debug, Serialize)]
pub enum Design {
    Pm {
        delta: f64,
        gamma: f64,
        n: usize,
        conditional: bool,
    },
    Monotonicity {
        j: usize,
        k: usize,
        n: usize,
        b0: B0Law,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct PowerOptions {
    pub sims: usize,
    pub alpha: f64,
    pub b: usize,
    pub method: Method,
    pub studentization: Studentization,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PowerPoint {
    pub h: f64,
    pub sims: usize,
    pub rejections: usize,
    /// Simulations where some conditioning cell was empty (counted as acceptances).
    pub empty_cell_sims: usize,
    pub rate: f64,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE5_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Rejection frequency at each h. Simulation s uses the same data stream and
/// bootstrap seed at every grid point.
pub fn power_curve(design: &Design, grid: &[f64], opts: &PowerOptions) -> Result<Vec<PowerPoint>> {
    let (spec, ineqs): (ModelSpec, Vec<Inequality>) = match design {
        Design::Pm { delta, gamma, n, conditional } => {
            check_pm(*delta, *gamma, 0.0, *n)?;
            let spec = pm_design_spec();
            let (_, ineqs) = model_inequalities(&spec, false)?;
            let ineqs = if *conditional { expand_with_covariates(&ineqs, 2) } else { ineqs };
            (spec, ineqs)
        }
        Design::Monotonicity { j, k, .. } => {
            let spec = monotonicity_design_spec(*j, *k)?;
            let (_, ineqs) = model_inequalities(&spec, false)?;
            (spec, ineqs)
        }
    };
    grid.iter()
        .map(|&h| {
            if !(0.0..=1.0).contains(&h) {
                return Err(Error::InvalidShares(format!("h={h} is outside [0, 1]")));
            }
            let outcomes: Vec<Result<Option<bool>>> = (0..opts.sims as u64)
                .into_par_iter()
                .map(|s| {
                    let mut rng = trial_rng(opts.seed, s);
                    let obs: Vec<Obs> = match design {
                        Design::Pm { delta, gamma, n, .. } => {
                            (0..*n).map(|_| pm_obs(&mut rng, *delta, *gamma, h)).collect()
                        }
                        Design::Monotonicity { j, k, n, b0 } => (0..*n).map(|_| mono_obs(&mut rng, *j, *k, h, *b0)).collect(),
                    };
                    let data = Dataset::new(&spec, obs)?;
                    let topts = TestOptions {
                        b: opts.b,
                        method: opts.method,
                        studentization: opts.studentization,
                        seed: splitmix(opts.seed ^ splitmix(s)),
                        conditional: true,
                        sharp: false,
                    };
                    match run_test_with(&data, &ineqs, opts.alpha, &topts) {
                        Ok(r) => Ok(Some(r.reject)),
                        Err(Error::EmptyConditioningCell(_)) => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect();
            let mut rejections = 0;
            let mut empty = 0;
            for o in outcomes {
                match o? {
                    Some(true) => rejections += 1,
                    Some(false) => {}
                    None => empty += 1,
                }
            }
            Ok(PowerPoint {
                h,
                sims: opts.sims,
                rejections,
                empty_cell_sims: empty,
                rate: rejections as f64 / opts.sims.max(1) as f64,
            })
        })
        .collect()
}

pub fn power_csv(points: &[PowerPoint]) -> String {
    let mut s = String::from("h,sims,rejections,empty_cell_sims,rate\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{},{}", p.h, p.sims, p.rejections, p.empty_cell_sims, p.rate);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shares_are_validated() {
        assert!(matches!(simulate_pm(0.7, 0.7, 0.5, 10, 1), Err(Error::InvalidShares(_))));
        assert!(matches!(simulate_pm(0.0, 0.0, 1.5, 10, 1), Err(Error::InvalidShares(_))));
        assert!(simulate_pm(0.0, 0.0, 1.0, 0, 1).is_err());
    }

    #[test]
    fn simulation_is_reproducible() {
        assert_eq!(simulate_pm(0.2, 0.3, 0.4, 50, 9).unwrap(), simulate_pm(0.2, 0.3, 0.4, 50, 9).unwrap());
        let a = simulate_monotonicity(3, 5, 0.5, 50, 9, B0Law::default()).unwrap();
        assert_eq!(a, simulate_monotonicity(3, 5, 0.5, 50, 9, B0Law::default()).unwrap());
    }

    #[test]
    fn full_reversal_flips_instrument_order() {
        // With B0 = 0 and h = 1, D is nondecreasing in z for every unit; with
        // h = 0 the instrument effects appear in reverse order.
        let up = simulate_monotonicity(3, 2, 1.0, 4000, 5, B0Law::default()).unwrap();
        let down = simulate_monotonicity(3, 2, 0.0, 4000, 5, B0Law::default()).unwrap();
        let mean_d = |d: &Dataset, z: usize| {
            let v: Vec<f64> = d.obs().iter().filter(|o| o.part == z).map(|o| o.resp as f64).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean_d(&up, 1) > mean_d(&up, 0));
        assert!(mean_d(&down, 1) < mean_d(&down, 0));
    }
}
