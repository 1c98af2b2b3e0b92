//! Environments: sequences of linear-fractional offspring laws.

use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg2::Mat2;

/// Mean-matrix entries `[[a, b], [d, theta]]` of one generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub theta: f64,
}

impl EnvParams {
    pub fn new(a: f64, b: f64, d: f64, theta: f64) -> Result<Self> {
        let p = EnvParams { a, b, d, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn from_array(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn validate(&self) -> Result<()> {
        let EnvParams { a, b, d, theta } = *self;
        if ![a, b, d, theta].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite entry in {self}")));
        }
        if b <= 0.0 || d <= 0.0 {
            return Err(Error::InvalidParams(format!("need b > 0 and d > 0, got {self}")));
        }
        if a < 0.0 || theta < 0.0 {
            return Err(Error::InvalidParams(format!("need a >= 0 and theta >= 0, got {self}")));
        }
        if a + theta <= 0.0 {
            return Err(Error::InvalidParams(format!("need a + theta > 0, got {self}")));
        }
        Ok(())
    }

    /// Offspring law with type-1 weight `q1`, type-2 weight `q2` and stopping
    /// probability `p`; the mean matrix is `[[q1/p, q2/p], [1 + q1/p, q2/p]]`.
    pub fn from_offspring(q1: f64, q2: f64, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) || q1 < 0.0 || q2 <= 0.0 || ((q1 + q2 + p) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "offspring law needs p in (0,1), q1 >= 0, q2 > 0, q1 + q2 + p = 1; got ({q1}, {q2}, {p})"
            )));
        }
        Self::new(q1 / p, q2 / p, 1.0 + q1 / p, q2 / p)
    }

    pub fn mean_matrix(&self) -> Mat2 {
        Mat2::new(self.a, self.b, self.d, self.theta)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.b, self.d, self.theta]
    }

    /// Evaluates the generating function at `s = (s1, s2)` for a parent of
    /// type `parent` (0 or 1).
    pub fn pgf(&self, parent: usize, s: [f64; 2]) -> f64 {
        let u = [1.0 - s[0], 1.0 - s[1]];
        let den = 1.0 + self.a * u[0] + self.b * u[1];
        let num = if parent == 0 {
            self.a * u[0] + self.b * u[1]
        } else {
            self.d * u[0] + self.theta * u[1]
        };
        1.0 - num / den
    }
}

impl fmt::Display for EnvParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(a={}, b={}, d={}, theta={})", self.a, self.b, self.d, self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Iterated logarithm `log_m x` (natural log, `log_0 x = x`).
pub fn iter_log(m: u32, x: f64) -> f64 {
    (0..m).fold(x, |acc, _| acc.ln())
}

/// `sum_{j<K-1} 1/prod_{m<=j} log_m i + B/prod_{m<=K-1} log_m i`.
pub fn lambda_pert(k: u32, i: usize, b: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("K must be at least 1".into()));
    }
    let mut lg = i as f64;
    let mut prod = 1.0;
    let mut sum = 0.0;
    for j in 0..k {
        if j > 0 {
            lg = lg.ln();
        }
        if !(lg > 0.0) {
            return Err(Error::Domain(format!("log_{j}({i}) is not positive")));
        }
        prod *= lg;
        sum += if j + 1 < k { 1.0 / prod } else { b / prod };
    }
    Ok(sum)
}

const I0_CAP: usize = 1_000_000_000;

/// First index at which the perturbation is defined and of modulus below one.
pub fn lambda_start(k: u32, b: f64) -> Result<usize> {
    if !b.is_finite() {
        return Err(Error::Domain(format!("B must be finite, got {b}")));
    }
    let mut i = 1usize;
    if k >= 2 {
        let mut t = 0.0f64;
        for _ in 0..k - 1 {
            t = t.exp();
            if t > I0_CAP as f64 {
                return Err(Error::Domain(format!("no admissible start index below {I0_CAP} for K={k}")));
            }
        }
        i = (t.floor() as usize).max(1);
    }
    while i <= I0_CAP {
        if let Ok(v) = lambda_pert(k, i, b) {
            if v.abs() < 1.0 {
                return Ok(i);
            }
        }
        i += 1;
    }
    Err(Error::Domain(format!("no admissible start index below {I0_CAP} for K={k}, B={b}")))
}

type PertFn = dyn Fn(usize) -> f64 + Send + Sync;

#[derive(Clone)]
enum PertKind {
    Lambda { k: u32, b: f64, i0: usize },
    Custom(Arc<PertFn>),
}

/// A positive-index perturbation sequence `r_i`.
#[derive(Clone)]
pub struct PerturbationSeq {
    kind: PertKind,
    label: String,
}

impl PerturbationSeq {
    /// `r_i = lambda_pert(K, i, B) / 3` for `i >= i0`, frozen at `r_{i0}` below.
    pub fn lambda(k: u32, b: f64) -> Result<Self> {
        let i0 = lambda_start(k, b)?;
        Ok(PerturbationSeq {
            kind: PertKind::Lambda { k, b, i0 },
            label: format!("lambda(K={k}, B={b})/3"),
        })
    }

    pub fn custom<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(usize) -> f64 + Send + Sync + 'static,
    {
        PerturbationSeq {
            kind: PertKind::Custom(Arc::new(f)),
            label: label.into(),
        }
    }

    pub fn inv3k() -> Self {
        Self::custom("1/(3k)", |k| 1.0 / (3.0 * k as f64))
    }

    pub fn inv_k_squared() -> Self {
        Self::custom("1/k^2", |k| {
            let x = k as f64;
            1.0 / (x * x)
        })
    }

    pub fn at(&self, i: usize) -> f64 {
        match &self.kind {
            PertKind::Lambda { k, b, i0 } => {
                lambda_pert(*k, i.max(*i0), *b).expect("index at or past i0 is admissible") / 3.0
            }
            PertKind::Custom(f) => f(i),
        }
    }

    pub fn start_index(&self) -> usize {
        match &self.kind {
            PertKind::Lambda { i0, .. } => *i0,
            PertKind::Custom(_) => 1,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for PerturbationSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbationSeq").field("label", &self.label).finish()
    }
}

#[derive(Debug, Clone)]
enum Generator {
    Explicit { params: Vec<EnvParams>, tail: EnvParams },
    Homogeneous(EnvParams),
    Egc { limit: EnvParams, r: PerturbationSeq },
    Mxt { k: u32, b: f64, sign: Sign, r: PerturbationSeq },
}

#[derive(Debug)]
struct Inner {
    generator: Generator,
    memo: RwLock<Vec<EnvParams>>,
}

/// Indexed family of `EnvParams`, `k >= 1`; cheap to clone.
#[derive(Debug, Clone)]
pub struct EnvSequence {
    inner: Arc<Inner>,
}

const MEMO_JUMP: usize = 1 << 16;

/// Probe indices used by precondition checks on generated sequences.
pub(crate) fn probe_indices(dense: usize, max_exp: u32) -> Vec<usize> {
    let mut v: Vec<usize> = (1..=dense).collect();
    let mut p = 10usize.pow((dense as f64).log10().floor() as u32 + 1);
    while p <= 10usize.pow(max_exp) {
        for m in [1, 2, 5] {
            if m * p > dense && m * p <= 10usize.pow(max_exp) {
                v.push(m * p);
            }
        }
        p *= 10;
    }
    v
}

impl EnvSequence {
    fn from_generator(generator: Generator) -> Self {
        EnvSequence {
            inner: Arc::new(Inner {
                generator,
                memo: RwLock::new(Vec::new()),
            }),
        }
    }

    pub fn explicit(params: Vec<EnvParams>, tail: EnvParams) -> Result<Self> {
        for p in params.iter().chain(std::iter::once(&tail)) {
            p.validate()?;
        }
        Ok(Self::from_generator(Generator::Explicit { params, tail }))
    }

    pub fn homogeneous(p: EnvParams) -> Result<Self> {
        p.validate()?;
        Ok(Self::from_generator(Generator::Homogeneous(p)))
    }

    /// Perturbs all four coordinates of `limit` by `r_k`, after checking the
    /// regularity preconditions on `limit` and `r`.
    pub fn egc(limit: EnvParams, r: PerturbationSeq) -> Result<Self> {
        check_egc_limit(&limit)?;
        check_egc_perturbation(&r)?;
        let env = Self::egc_unchecked(limit, r);
        env.check_probe_valid()?;
        Ok(env)
    }

    /// As [`EnvSequence::egc`] without the precondition checks. Each
    /// generated term is still validated on access.
    pub fn egc_unchecked(limit: EnvParams, r: PerturbationSeq) -> Self {
        Self::from_generator(Generator::Egc { limit, r })
    }

    /// Offspring law `p = 2/3 +- r_i`, `q1 = 0`, `q2 = 1 - p`, with
    /// `r_i = lambda_pert(K, i, B) / 3`.
    pub fn mxt(k: u32, b: f64, sign: Sign) -> Result<Self> {
        let r = PerturbationSeq::lambda(k, b)?;
        let env = Self::from_generator(Generator::Mxt { k, b, sign, r });
        for i in probe_indices(10_000, 9) {
            let r = env.mxt_r(i);
            let p = 2.0 / 3.0 + sign.as_f64() * r;
            let q = 1.0 / 3.0 - sign.as_f64() * r;
            if !(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0) {
                return Err(Error::Domain(format!("offspring probabilities leave (0,1) at i={i}: p={p}, q={q}")));
            }
        }
        Ok(env)
    }

    fn mxt_r(&self, i: usize) -> f64 {
        match &self.inner.generator {
            Generator::Mxt { r, .. } => r.at(i),
            _ => unreachable!(),
        }
    }

    fn check_probe_valid(&self) -> Result<()> {
        for k in probe_indices(1000, 6) {
            self.compute(k).validate().map_err(|e| match e {
                Error::InvalidParams(m) => Error::InvalidParams(format!("term {k}: {m}")),
                other => other,
            })?;
        }
        Ok(())
    }

    fn compute(&self, k: usize) -> EnvParams {
        match &self.inner.generator {
            Generator::Explicit { params, tail } => *params.get(k - 1).unwrap_or(tail),
            Generator::Homogeneous(p) => *p,
            Generator::Egc { limit, r } => {
                let s = r.at(k);
                EnvParams {
                    a: limit.a + s,
                    b: limit.b + s,
                    d: limit.d + s,
                    theta: limit.theta + s,
                }
            }
            Generator::Mxt { sign, r, .. } => {
                let s = sign.as_f64() * r.at(k);
                let p = 2.0 / 3.0 + s;
                let q = 1.0 / 3.0 - s;
                let b = q / p;
                EnvParams { a: 0.0, b, d: 1.0, theta: b }
            }
        }
    }

    /// Parameters of generation `k` (1-based).
    pub fn at(&self, k: usize) -> EnvParams {
        assert!(k >= 1, "environment indices start at 1");
        match &self.inner.generator {
            Generator::Explicit { .. } | Generator::Homogeneous(_) => return self.compute(k),
            _ => {}
        }
        {
            let memo = self.inner.memo.read().expect("memo lock");
            if k <= memo.len() {
                return memo[k - 1];
            }
            if k > memo.len() + MEMO_JUMP {
                return self.compute(k);
            }
        }
        let mut memo = self.inner.memo.write().expect("memo lock");
        while memo.len() < k {
            let next = self.compute(memo.len() + 1);
            memo.push(next);
        }
        memo[k - 1]
    }

    pub fn mean_matrix(&self, k: usize) -> Mat2 {
        self.at(k).mean_matrix()
    }

    /// Limit of the sequence as `k` grows.
    pub fn limit(&self) -> EnvParams {
        match &self.inner.generator {
            Generator::Explicit { tail, .. } => *tail,
            Generator::Homogeneous(p) => *p,
            Generator::Egc { limit, .. } => *limit,
            Generator::Mxt { .. } => EnvParams { a: 0.0, b: 0.5, d: 1.0, theta: 0.5 },
        }
    }

    /// True if every generation has the form `d = 1 + a`, `theta = b`.
    pub fn is_offspring_family(&self) -> bool {
        match &self.inner.generator {
            Generator::Explicit { params, tail } => {
                params.iter().chain(std::iter::once(tail)).all(is_offspring_shape)
            }
            Generator::Homogeneous(p) | Generator::Egc { limit: p, .. } => is_offspring_shape(p),
            Generator::Mxt { .. } => true,
        }
    }

    pub fn describe(&self) -> String {
        match &self.inner.generator {
            Generator::Explicit { params, tail } => format!("explicit({} terms, tail {tail})", params.len()),
            Generator::Homogeneous(p) => format!("homogeneous{p}"),
            Generator::Egc { limit, r } => format!("egc(limit {limit}, r = {})", r.label()),
            Generator::Mxt { k, b, sign, .. } => format!("mxt(K={k}, B={b}, {sign:?})"),
        }
    }
}

pub(crate) fn is_offspring_shape(p: &EnvParams) -> bool {
    let tol = 1e-12;
    (p.d - 1.0 - p.a).abs() <= tol * p.d.max(1.0) && (p.theta - p.b).abs() <= tol * p.b.max(1.0)
}

/// Checks on the limit parameters of a perturbed environment.
pub fn check_egc_limit(limit: &EnvParams) -> Result<()> {
    limit.validate()?;
    let EnvParams { a, b, d, theta } = *limit;
    if a == b && b == d && d == theta {
        return Err(Error::Precondition {
            check: "not_all_equal",
            detail: format!("limit {limit} has all coordinates equal"),
        });
    }
    if (b - a) * (b - theta) < 0.0 {
        return Err(Error::Precondition {
            check: "ordering",
            detail: format!("(b - a)(b - theta) < 0 for {limit}"),
        });
    }
    let det = b * d - a * theta;
    if det.abs() <= 1e-14 * (b * d).max(a * theta) {
        return Err(Error::Precondition {
            check: "rank_one_limit",
            detail: format!("limit {limit} has bd = a*theta"),
        });
    }
    let den = b * (2.0 * b - a - theta);
    if den != 0.0 {
        let tau = (b * (b + d - a - theta) + 2.0 * (a * theta - det)) / den;
        for root in excluded_roots(limit) {
            if (tau - root).abs() <= 1e-10 * root.abs().max(1.0) {
                return Err(Error::Precondition {
                    check: "tau_exclusion",
                    detail: format!("slope {tau} coincides with excluded root {root}"),
                });
            }
        }
    }
    Ok(())
}

/// Roots of `b t^2 + (a + theta) t - (bd - a*theta) = 0`.
pub fn excluded_roots(limit: &EnvParams) -> [f64; 2] {
    let EnvParams { a, b, d, theta } = *limit;
    let s = a + theta;
    let disc = (s * s + 4.0 * (b * d - a * theta)).max(0.0).sqrt();
    [(-s + disc) / (2.0 * b), (-s - disc) / (2.0 * b)]
}

/// Checks that `r` is positive, vanishes, and has `(r_n - r_{n+1}) / r_n^2`
/// settling to a finite positive limit.
pub fn check_egc_perturbation(r: &PerturbationSeq) -> Result<()> {
    for k in probe_indices(1000, 6) {
        let v = r.at(k);
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Precondition {
                check: "r_positive",
                detail: format!("r_{k} = {v}"),
            });
        }
    }
    let tail = r.at(1_000_000);
    if tail >= 1e-3 || tail >= r.at(1000) {
        return Err(Error::Precondition {
            check: "r_vanishes",
            detail: format!("r_1e6 = {tail}"),
        });
    }
    let ratio = |n: usize| {
        let rn = r.at(n);
        (rn - r.at(n + 1)) / (rn * rn)
    };
    let probes: Vec<f64> = (2..=6).map(|e| ratio(10usize.pow(e))).collect();
    let last = probes[probes.len() - 1];
    let ok = last.is_finite()
        && last > 0.0
        && probes[probes.len() - 3..]
            .iter()
            .all(|v| ((v - last) / last).abs() <= 1e-2);
    if !ok {
        return Err(Error::Precondition {
            check: "r_ratio_limit",
            detail: format!("(r_n - r_(n+1))/r_n^2 at n = 1e2..1e6: {probes:?}"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_pert_k1_is_b_over_i() {
        assert!((lambda_pert(1, 10, 2.0).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn lambda_pert_k2() {
        let i = 100usize;
        let want = 1.0 / 100.0 + 2.0 / (100.0 * (100f64).ln());
        assert!((lambda_pert(2, i, 2.0).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn lambda_pert_domain() {
        assert!(matches!(lambda_pert(2, 1, 1.0), Err(Error::Domain(_))));
        assert!(matches!(lambda_pert(3, 2, 1.0), Err(Error::Domain(_))));
        assert!(lambda_pert(3, 3, 1.0).is_ok());
    }

    #[test]
    fn start_index_examples() {
        assert_eq!(lambda_start(1, 2.0).unwrap(), 3);
        assert_eq!(lambda_start(1, -1.0).unwrap(), 2);
        assert_eq!(lambda_start(1, 0.5).unwrap(), 1);
        assert!(lambda_start(2, 1.0).unwrap() >= 2);
    }

    #[test]
    fn mxt_terms() {
        let env = EnvSequence::mxt(1, 1.0, Sign::Plus).unwrap();
        let p = env.at(10);
        let r = 0.1 / 3.0;
        let want_b = (1.0 / 3.0 - r) / (2.0 / 3.0 + r);
        assert!((p.b - want_b).abs() < 1e-15 && p.b == p.theta && p.a == 0.0 && p.d == 1.0);
        let m = EnvSequence::mxt(1, 1.0, Sign::Minus).unwrap();
        assert!(m.at(1000).b > 0.5);
        assert!(env.at(1000).b < 0.5);
    }

    #[test]
    fn params_validation() {
        assert!(EnvParams::new(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(EnvParams::new(0.5, 0.0, 1.0, 0.5).is_err());
        assert!(EnvParams::new(0.0, 0.5, 1.0, 0.5).is_ok());
    }

    #[test]
    fn offspring_round_trip() {
        let p = EnvParams::from_offspring(0.0, 1.0 / 3.0, 2.0 / 3.0).unwrap();
        assert!((p.b - 0.5).abs() < 1e-15 && (p.d - 1.0).abs() < 1e-15);
        assert!(is_offspring_shape(&p));
    }

    #[test]
    fn pgf_fixes_one() {
        let p = EnvParams::new(1.0, 2.0, 2.0, 1.0).unwrap();
        assert_eq!(p.pgf(0, [1.0, 1.0]), 1.0);
        assert_eq!(p.pgf(1, [1.0, 1.0]), 1.0);
    }

    #[test]
    fn memo_matches_direct() {
        let env = EnvSequence::egc(EnvParams::new(1.0, 2.0, 2.0, 1.0).unwrap(), PerturbationSeq::inv3k()).unwrap();
        let far = env.at(5_000_000);
        assert!((far.a - (1.0 + 1.0 / 15_000_000.0)).abs() < 1e-15);
        for k in [1, 7, 300] {
            assert_eq!(env.at(k), env.compute(k));
        }
    }
}
