//! Browser bindings. Each exported function returns a flat `Float64Array`
//! whose layout is given in its doc comment; the `*_rows` functions hold the
//! logic and are usable natively.

use bpve::asymptotics::predictors;
use bpve::cfrac::{approximant, tail_bracket, CFCoeffs};
use bpve::dist::{eta_direct, DistRow, Initial};
use bpve::env::{EnvParams, EnvSequence, Sign};
use bpve::sim::{compare, run_sim, SimConfig};
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Rows `(n, p_n, c * predictor_n)` on a log-spaced grid of at most `points`
/// indices, where `c` is the ratio of exact to predicted mass at `n_max`.
pub fn extinction_curve_rows(k: u32, b: f64, plus: bool, n_max: usize, points: usize) -> Result<Vec<f64>, String> {
    if !(2..=1_000_000).contains(&n_max) || points < 2 {
        return Err("need 2 <= n_max <= 1e6 and points >= 2".into());
    }
    let sign = if plus { Sign::Plus } else { Sign::Minus };
    let env = EnvSequence::mxt(k, b, sign).map_err(err)?;
    let rows = predictors(&env, n_max).map_err(err)?;
    let c = rows[n_max - 1].ratio_mass;
    let mut out = Vec::with_capacity(3 * points);
    let mut last = 0;
    for i in 0..points {
        let n = ((n_max as f64).powf(i as f64 / (points - 1) as f64).round() as usize).clamp(1, n_max);
        if n == last {
            continue;
        }
        last = n;
        let r = &rows[n - 1];
        out.extend([n as f64, r.mass, c * r.pred_mass.to_f64()]);
    }
    Ok(out)
}

/// Rows `(n, xi_{1,n})` for `n = 1..=depth`, followed by the bracket
/// `(lo, hi)` of the limit. Coefficients are `alpha_k = alpha + wobble / k`,
/// `beta_k = beta`.
pub fn approximant_rows(alpha: f64, beta: f64, wobble: f64, depth: usize) -> Result<Vec<f64>, String> {
    if !(1..=10_000).contains(&depth) {
        return Err("depth must be in 1..=10000".into());
    }
    let terms: Vec<(f64, f64)> = (1..=depth + 1).map(|k| (alpha + wobble / k as f64, beta)).collect();
    let c = CFCoeffs::explicit(terms, (alpha, beta)).map_err(err)?;
    let mut out = Vec::with_capacity(2 * depth + 2);
    for n in 1..=depth {
        out.extend([n as f64, approximant(&c, 1, n).map_err(err)?]);
    }
    let br = tail_bracket(&c, 1, 1e-14).map_err(err)?;
    out.extend([br.lo, br.hi]);
    Ok(out)
}

/// Rows `(n, exact p_n, empirical frequency, z)` for `n = 1..=horizon` from
/// the homogeneous offspring law `(q1, q2, p)`.
pub fn sim_rows(q1: f64, q2: f64, p: f64, runs: u32, horizon: usize, seed: u32) -> Result<Vec<f64>, String> {
    if !(1..=200).contains(&horizon) || runs == 0 {
        return Err("need 1 <= horizon <= 200 and runs > 0".into());
    }
    let env = EnvSequence::homogeneous(EnvParams::from_offspring(q1, q2, p).map_err(err)?).map_err(err)?;
    let exact: Vec<DistRow> = eta_direct(&env, horizon, Initial::E1).collect();
    let cfg = SimConfig { runs: u64::from(runs), horizon, seed: u64::from(seed), initial: Initial::E1 };
    let sim = run_sim(&env, &cfg).map_err(err)?;
    Ok(compare(&exact, &sim).iter().flat_map(|r| [r.n as f64, r.exact, r.empirical, r.z]).collect())
}

#[wasm_bindgen]
pub fn extinction_curve(k: u32, b: f64, plus: bool, n_max: usize, points: usize) -> Result<Vec<f64>, JsError> {
    extinction_curve_rows(k, b, plus, n_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn approximants(alpha: f64, beta: f64, wobble: f64, depth: usize) -> Result<Vec<f64>, JsError> {
    approximant_rows(alpha, beta, wobble, depth).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(q1: f64, q2: f64, p: f64, runs: u32, horizon: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    sim_rows(q1, q2, p, runs, horizon, seed).map_err(|e| JsError::new(&e))
}
