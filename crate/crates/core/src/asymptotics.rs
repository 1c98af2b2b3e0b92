//! Tail and point-mass predictors from Perron roots, power-law and
//! iterated-log rate fits, and regularity checks on an environment.

use serde::{Serialize, Serializer};

use crate::dist::{DistRow, Initial};
use crate::env::{excluded_roots, iter_log, EnvSequence};
use crate::error::{Error, Result};
use crate::linalg2::{spectrum, ScaledNonneg};

/// Running `R_n = prod_{i<=n} 1/rho_i` and `W_n = sum_{k=1}^{n+1} R_{k-1}`.
#[derive(Debug, Clone, Copy)]
pub struct InverseRadiusSums {
    pub n: usize,
    pub r: ScaledNonneg,
    pub w: ScaledNonneg,
}

impl Default for InverseRadiusSums {
    fn default() -> Self {
        InverseRadiusSums { n: 0, r: ScaledNonneg::ONE, w: ScaledNonneg::ONE }
    }
}

impl InverseRadiusSums {
    pub fn push(&mut self, rho: f64) {
        self.n += 1;
        self.r = self.r.mul_f64(1.0 / rho);
        self.w = self.w.add(self.r);
    }

    /// `1 / W_n`.
    pub fn tail(&self) -> ScaledNonneg {
        self.w.recip()
    }

    /// `R_n / W_n^2`.
    pub fn mass(&self) -> ScaledNonneg {
        self.r.div(self.w.mul(self.w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymRow {
    pub n: usize,
    pub eta: f64,
    pub mass: f64,
    pub pred_tail: ScaledNonneg,
    pub pred_mass: ScaledNonneg,
    pub ratio_tail: f64,
    pub ratio_mass: f64,
    /// Set when the limit has `theta = b + 1`; the mass predictor is then an
    /// upper bound only.
    pub mass_upper_only: bool,
}

/// Exact `eta_n`, `p_n` beside the radius predictors. The continued-fraction
/// route is used when the transformed sequence exists, the direct route
/// otherwise.
pub fn predictors(env: &EnvSequence, n_max: usize) -> Result<Vec<AsymRow>> {
    let rows: Vec<DistRow> = match crate::transform::build_a(env) {
        Ok(tenv) => crate::dist::eta_cf(&tenv, n_max).map(|r| r.map(DistRow::from)).collect::<Result<_>>()?,
        Err(_) => crate::dist::eta_direct(env, n_max, Initial::E1).collect(),
    };
    let lim = env.limit();
    let upper_only = (lim.theta - lim.b - 1.0).abs() <= 1e-12 * lim.theta.max(1.0);
    let mut sums = InverseRadiusSums::default();
    let mut out = Vec::with_capacity(n_max);
    for row in rows {
        sums.push(spectrum(&env.mean_matrix(row.n)).rho);
        let pred_tail = sums.tail();
        let pred_mass = sums.mass();
        out.push(AsymRow {
            n: row.n,
            eta: row.eta,
            mass: row.mass,
            pred_tail,
            pred_mass,
            ratio_tail: ScaledNonneg::from_f64(row.eta).ratio(pred_tail),
            ratio_mass: ScaledNonneg::from_f64(row.mass.max(0.0)).ratio(pred_mass),
            mass_upper_only: upper_only,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateModel {
    /// `c / n^e`.
    Power,
    /// `c / (n (log n)^beta)`.
    PowerLog2,
    /// `c / (n^lead log n ... log_{k-2} n (log_{k-1} n)^B)`, `k >= 2`.
    IteratedLog { k: u32, lead: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub model: RateModel,
    /// `e`, `beta` or `B` depending on the model.
    pub exponent: f64,
    pub c: f64,
    /// Largest relative residual over the fitted points.
    pub resid: f64,
    pub window: (usize, usize),
    pub points: usize,
}

fn design(model: &RateModel, n: usize, v: f64) -> Option<(f64, f64)> {
    let x = n as f64;
    let lv = v.ln();
    match *model {
        RateModel::Power => Some((-x.ln(), lv)),
        RateModel::PowerLog2 => {
            let ll = x.ln().ln();
            (ll > 0.0).then(|| (-ll, lv + x.ln()))
        }
        RateModel::IteratedLog { k, lead } => {
            let top = iter_log(k - 1, x);
            if !(top > 0.0) {
                return None;
            }
            let mut y = lv + lead * x.ln();
            for j in 1..k - 1 {
                y += iter_log(j, x).ln();
            }
            Some((-top.ln(), y))
        }
    }
}

/// Least squares of `log v` against the model over `window` (default
/// `[n_max/100, n_max]`), on log-spaced sample points.
pub fn fit_rate(series: &[(usize, f64)], model: RateModel, window: Option<(usize, usize)>) -> Result<RateFit> {
    if let RateModel::IteratedLog { k, .. } = model {
        if k < 2 {
            return Err(Error::InvalidParams("iterated-log model needs k >= 2".into()));
        }
    }
    let n_max = series.iter().map(|p| p.0).max().unwrap_or(0);
    let (lo, hi) = window.unwrap_or((n_max / 100, n_max));
    if lo == 0 || hi < 100 * lo {
        return Err(Error::InsufficientRange { lo, hi });
    }
    let mut pts = Vec::new();
    let mut last_bin = i64::MIN;
    for &(n, v) in series {
        if n < lo || n > hi || !(v > 0.0) || !v.is_finite() {
            continue;
        }
        let bin = ((n as f64).log10() * 64.0).floor() as i64;
        if bin == last_bin && n != hi {
            continue;
        }
        last_bin = bin;
        if let Some(p) = design(&model, n, v) {
            pts.push(p);
        }
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientRange { lo, hi });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let resid = pts
        .iter()
        .map(|p| ((p.1 - icpt - slope * p.0).exp() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(RateFit {
        model,
        exponent: slope,
        c: icpt.exp(),
        resid,
        window: (lo, hi),
        points: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum B2Case {
    /// `a~_k/b~_k` constant, `d~_k/b~_k` moving.
    A,
    /// `a~_k/b~_k` moving, `d~_k/b~_k` constant.
    B,
    /// Both moving.
    C,
    /// Both constant.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Inconclusive,
}

/// Real number that may be infinite; serialized as a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extended(pub f64);

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 > 0.0 {
            s.serialize_str("inf")
        } else if self.0 < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    /// `(N, sum_{k=2}^N |Delta a| + |Delta b| + |Delta d| + |Delta theta|)`.
    pub b1_partial_sums: Vec<(usize, f64)>,
    /// Partial sum at the largest probe.
    pub b1_abs_sum: f64,
    pub b1_verdict: Verdict,
    pub b2_case: B2Case,
    /// First index from which the zero pattern of the differences is fixed.
    pub b2_k0: usize,
    /// Estimated limit of the consecutive-difference ratio at the largest probe.
    pub b2_limit_est: Extended,
    pub tau_est: Extended,
    pub excluded_roots: [f64; 2],
    pub tau_separated: bool,
    /// Second eigenvalue of the limit mean matrix.
    pub rho1_limit: f64,
    /// Minimum `d~_k` on the probe window, or the failing value.
    pub dtilde_min: f64,
}

const DIFF_TOL: f64 = 1e-14;

/// Evaluates the summability and difference-pattern conditions on `probe`
/// (default `{10, 100, 1e3, 1e4, 1e5}`).
pub fn check_conditions(env: &EnvSequence, probe: Option<&[usize]>) -> Result<ConditionReport> {
    let default = [10usize, 100, 1_000, 10_000, 100_000];
    let mut probe: Vec<usize> = probe.unwrap_or(&default).to_vec();
    probe.sort_unstable();
    probe.dedup();
    let top = *probe.last().ok_or_else(|| Error::InvalidParams("empty probe".into()))?;
    if probe[0] < 2 {
        return Err(Error::InvalidParams("probe indices must be at least 2".into()));
    }

    let mut sums = Vec::with_capacity(probe.len());
    let mut acc = 0.0;
    let mut prev = env.at(1);
    let mut xs = Vec::with_capacity(top + 2);
    let mut ys = Vec::with_capacity(top + 2);
    let mut next_probe = probe.iter().peekable();
    let mut params = Vec::with_capacity(top + 3);
    params.push(prev);
    for k in 2..=top + 3 {
        let cur = env.at(k);
        if k <= top {
            acc += (cur.a - prev.a).abs() + (cur.b - prev.b).abs() + (cur.d - prev.d).abs() + (cur.theta - prev.theta).abs();
            if next_probe.peek() == Some(&&k) {
                sums.push((k, acc));
                next_probe.next();
            }
        }
        params.push(cur);
        prev = cur;
    }
    let mut dtilde_min = f64::INFINITY;
    for k in 1..=top + 2 {
        let (p, q) = (params[k - 1], params[k]);
        let ta = p.a + p.b * q.theta / q.b;
        let td = p.d - p.a * p.theta / p.b;
        dtilde_min = dtilde_min.min(td);
        xs.push(ta / p.b);
        ys.push(td / p.b);
    }
    let n_last = sums.len();
    let b1_pass = if n_last < 2 {
        true
    } else {
        let (s1, s0) = (sums[n_last - 1].1, sums[n_last - 2].1);
        s1 == 0.0 || (s1 - s0) <= 1e-2 * s1
    };

    // dx[k-1] = x_{k+1} - x_k for k = 1..=top+1.
    let dx: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let dy: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    let is_zero = |d: f64, base: f64| d.abs() <= DIFF_TOL * base.abs().max(1.0);
    let pattern = |i: usize| (is_zero(dx[i], xs[i]), is_zero(dy[i], ys[i]));
    let tail = pattern(top - 1);
    let mut k0 = 1;
    for i in (0..top).rev() {
        if pattern(i) != tail {
            k0 = i + 2;
            break;
        }
    }
    let b2_case = match tail {
        (true, false) => B2Case::A,
        (false, true) => B2Case::B,
        (false, false) => B2Case::C,
        (true, true) => B2Case::None,
    };
    let i = top - 1;
    let tau_est = match b2_case {
        B2Case::A => f64::INFINITY,
        B2Case::B => 0.0,
        B2Case::C => dy[i] / dx[i],
        B2Case::None => f64::NAN,
    };
    let b2_ratio_limit = match b2_case {
        B2Case::A => dy[i + 1] / dy[i],
        B2Case::B => dx[i + 1] / dx[i],
        B2Case::C if tau_est.is_finite() => dx[i + 1] / dx[i],
        B2Case::C => dy[i + 1] / dy[i],
        B2Case::None => f64::NAN,
    };
    let lim = env.limit();
    let roots = excluded_roots(&lim);
    let tau_separated = b2_case != B2Case::C || roots.iter().all(|r| (tau_est - r).abs() > 1e-6);
    Ok(ConditionReport {
        b1_abs_sum: sums.last().map(|p| p.1).unwrap_or(0.0),
        b1_partial_sums: sums,
        b1_verdict: if b1_pass { Verdict::Pass } else { Verdict::Inconclusive },
        b2_case,
        b2_k0: k0,
        b2_limit_est: Extended(b2_ratio_limit),
        tau_est: Extended(tau_est),
        excluded_roots: roots,
        tau_separated,
        rho1_limit: spectrum(&lim.mean_matrix()).rho1,
        dtilde_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_fit_recovers_exponent() {
        let s: Vec<(usize, f64)> = (1..=100_000).map(|n| (n, 3.0 / (n as f64).powf(2.5))).collect();
        let f = fit_rate(&s, RateModel::Power, None).unwrap();
        assert!((f.exponent - 2.5).abs() < 1e-10 && (f.c - 3.0).abs() < 1e-8 && f.resid < 1e-10);
    }

    #[test]
    fn power_log2_fit() {
        let s: Vec<(usize, f64)> = (3..=100_000).map(|n| (n, 1.0 / (n as f64 * (n as f64).ln().powi(2)))).collect();
        let f = fit_rate(&s, RateModel::PowerLog2, None).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-9);
    }

    #[test]
    fn iterated_log_fit() {
        let s: Vec<(usize, f64)> = (3..=100_000)
            .map(|n| {
                let x = n as f64;
                (n, 0.7 / (x.powi(3) * x.ln().powf(-1.5)))
            })
            .collect();
        let f = fit_rate(&s, RateModel::IteratedLog { k: 2, lead: 3.0 }, None).unwrap();
        assert!((f.exponent + 1.5).abs() < 1e-9 && (f.c - 0.7).abs() < 1e-8);
    }

    #[test]
    fn short_window_rejected() {
        let s: Vec<(usize, f64)> = (1..=50).map(|n| (n, 1.0 / n as f64)).collect();
        assert!(matches!(fit_rate(&s, RateModel::Power, None), Err(Error::InsufficientRange { .. })));
    }

    #[test]
    fn radius_sums_constant() {
        let mut s = InverseRadiusSums::default();
        for _ in 0..10 {
            s.push(2.0);
        }
        assert!((s.w.to_f64() - (2.0 - 0.5f64.powi(10))).abs() < 1e-15);
    }
}
