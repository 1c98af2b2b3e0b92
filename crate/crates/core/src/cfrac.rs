//! Continued fractions built from an environment, the `f`/`H`/`G`
//! recursions, and the limit diagnostics that depend on them.

use std::sync::Arc;

use serde::Serialize;

use crate::env::{EnvParams, EnvSequence};
use crate::error::{Error, Result};
use crate::linalg2::{spectrum, Mat2, ProductAccumulator, ScaledNonneg};
use crate::transform::{ACoeffs, TransformedEnv};

#[derive(Debug, Clone)]
enum BSource {
    Raw(EnvSequence),
    Transformed(TransformedEnv),
    Explicit { terms: Arc<Vec<(f64, f64, f64)>>, tail: (f64, f64, f64) },
}

/// Sequence of matrices `B_k = [[a_k, b_k], [d_k, 0]]`.
#[derive(Debug, Clone)]
pub struct BSeq {
    source: BSource,
}

impl BSeq {
    /// Takes `a_k, b_k, d_k` straight from the mean matrices; every `a_k`
    /// must be positive.
    pub fn from_env(env: &EnvSequence) -> Self {
        BSeq { source: BSource::Raw(env.clone()) }
    }

    /// Takes `a~_k, b~_k, d~_k` from the transformed sequence.
    pub fn from_transform(t: &TransformedEnv) -> Self {
        BSeq { source: BSource::Transformed(t.clone()) }
    }

    pub fn explicit(terms: Vec<(f64, f64, f64)>, tail: (f64, f64, f64)) -> Result<Self> {
        for (i, &(a, b, d)) in terms.iter().chain(std::iter::once(&tail)).enumerate() {
            if !(a > 0.0 && b > 0.0 && d > 0.0) {
                return Err(Error::InvalidParams(format!("B term {} = ({a}, {b}, {d}) not positive", i + 1)));
            }
        }
        Ok(BSeq { source: BSource::Explicit { terms: Arc::new(terms), tail } })
    }

    pub fn at(&self, k: usize) -> Result<(f64, f64, f64)> {
        match &self.source {
            BSource::Raw(env) => {
                let p = env.at(k);
                if !(p.a > 0.0) {
                    return Err(Error::Precondition {
                        check: "a_positive",
                        detail: format!("a_{k} = {}", p.a),
                    });
                }
                Ok((p.a, p.b, p.d))
            }
            BSource::Transformed(t) => {
                let c = t.at(k)?;
                Ok((c.ta, c.tb, c.td))
            }
            BSource::Explicit { terms, tail } => Ok(*terms.get(k - 1).unwrap_or(tail)),
        }
    }

    pub fn matrix(&self, k: usize) -> Result<Mat2> {
        let (a, b, d) = self.at(k)?;
        Ok(Mat2::new(a, b, d, 0.0))
    }

    pub fn limit(&self) -> (f64, f64, f64) {
        match &self.source {
            BSource::Raw(env) => {
                let p = env.limit();
                (p.a, p.b, p.d)
            }
            BSource::Transformed(t) => {
                let m = t.limit();
                (m.m11, m.m12, m.m21)
            }
            BSource::Explicit { tail, .. } => *tail,
        }
    }

    /// `(1, lambda_k)` when built from a transformed environment.
    pub fn boundary(&self, k: usize) -> Option<[f64; 2]> {
        match &self.source {
            BSource::Transformed(t) => Some(t.boundary(k)),
            _ => None,
        }
    }

    pub fn radius(&self, k: usize) -> Result<f64> {
        Ok(spectrum(&self.matrix(k)?).rho)
    }
}

#[derive(Debug, Clone)]
enum CfSource {
    FromB(BSeq),
    Explicit { terms: Arc<Vec<(f64, f64)>>, tail: (f64, f64) },
}

/// Partial numerators `beta_k` and denominators `alpha_k` of
/// `xi_k = beta_k / (alpha_k + beta_{k+1} / (alpha_{k+1} + ...))`.
#[derive(Debug, Clone)]
pub struct CFCoeffs {
    source: CfSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoeffBounds {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl CFCoeffs {
    /// `alpha_k = a_k / (b_k d_{k+1})`, `beta_k = 1 / (b_k d_{k+1})`.
    pub fn from_bseq(b: &BSeq) -> Self {
        CFCoeffs { source: CfSource::FromB(b.clone()) }
    }

    /// Explicit `(alpha_k, beta_k)` for `k = 1..`, then a constant tail.
    pub fn explicit(terms: Vec<(f64, f64)>, tail: (f64, f64)) -> Result<Self> {
        for &(al, be) in terms.iter().chain(std::iter::once(&tail)) {
            if !(al >= 0.0 && be > 0.0 && al.is_finite() && be.is_finite()) {
                return Err(Error::InvalidParams(format!("coefficients ({al}, {be}) need alpha >= 0, beta > 0")));
            }
        }
        Ok(CFCoeffs { source: CfSource::Explicit { terms: Arc::new(terms), tail } })
    }

    pub fn at(&self, k: usize) -> Result<(f64, f64)> {
        match &self.source {
            CfSource::FromB(b) => {
                let (a, bk, _) = b.at(k)?;
                let (_, _, dn) = b.at(k + 1)?;
                let beta = 1.0 / (bk * dn);
                Ok((a * beta, beta))
            }
            CfSource::Explicit { terms, tail } => Ok(*terms.get(k - 1).unwrap_or(tail)),
        }
    }

    pub fn limit(&self) -> (f64, f64) {
        match &self.source {
            CfSource::FromB(b) => {
                let (a, bb, d) = b.limit();
                (a / (bb * d), 1.0 / (bb * d))
            }
            CfSource::Explicit { tail, .. } => *tail,
        }
    }

    /// Extremes of `alpha_k` and `beta_k` over `k` in `window`.
    pub fn bounds(&self, window: std::ops::RangeInclusive<usize>) -> Result<CoeffBounds> {
        let mut out = CoeffBounds {
            alpha_min: f64::INFINITY,
            alpha_max: 0.0,
            beta_min: f64::INFINITY,
            beta_max: 0.0,
        };
        for k in window {
            let (al, be) = self.at(k)?;
            out.alpha_min = out.alpha_min.min(al);
            out.alpha_max = out.alpha_max.max(al);
            out.beta_min = out.beta_min.min(be);
            out.beta_max = out.beta_max.max(be);
        }
        Ok(out)
    }
}

/// Approximant `xi_{k,n}`: the fraction truncated after level `n`.
pub fn approximant(c: &CFCoeffs, k: usize, n: usize) -> Result<f64> {
    if k > n || k == 0 {
        return Err(Error::IndexOrder { k, n });
    }
    let (al, be) = c.at(n)?;
    let mut t = be / al;
    for j in (k..n).rev() {
        let (al, be) = c.at(j)?;
        t = be / (al + t);
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    /// Truncation depth `m` of the lower-depth approximant `xi_{k,k+m}`.
    pub depth: usize,
}

impl Bracket {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

const MAX_TAIL_LEVEL: usize = 10_000_000;

/// Brackets `xi_k` between approximants of consecutive depth, doubling the
/// depth until the gap is within `tol` relative to the value.
pub fn tail_bracket(c: &CFCoeffs, k: usize, tol: f64) -> Result<Bracket> {
    let mut m = 8usize;
    loop {
        if k + m + 1 > MAX_TAIL_LEVEL {
            return Err(Error::NoConvergence { k, depth: m });
        }
        let x0 = approximant(c, k, k + m)?;
        let x1 = approximant(c, k, k + m + 1)?;
        let (lo, hi) = if x0 <= x1 { (x0, x1) } else { (x1, x0) };
        if hi - lo <= tol * hi.abs().max(f64::MIN_POSITIVE) {
            return Ok(Bracket { lo, hi, depth: m });
        }
        m *= 2;
    }
}

/// Fixed point of `x = beta / (alpha + x)`.
pub fn limit_tail(alpha: f64, beta: f64) -> f64 {
    2.0 * beta / (alpha + (alpha * alpha + 4.0 * beta).sqrt())
}

/// `(f_n, H_n)` of the forward recursion
/// `f_n = b~_n / (a~_n + d~_n f_{n-1})`, `H_n = -d~_n f_n (f_{n-1} + H_{n-1})`,
/// started from `f_0 = H_0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FhState {
    pub n: usize,
    pub f: f64,
    pub h: f64,
}

impl FhState {
    pub fn start() -> Self {
        FhState { n: 0, f: 0.0, h: 0.0 }
    }

    pub fn step(&self, c: &ACoeffs) -> Result<Self> {
        let n = self.n + 1;
        let den = c.ta + c.td * self.f;
        if !(den > 0.0) {
            return Err(Error::DivisionGuard { n });
        }
        let f = c.tb / den;
        let h = -c.td * f * (self.f + self.h);
        Ok(FhState { n, f, h })
    }

    /// `G_n` from `(f_n, H_n)` and the coefficients of generation `n + 1`.
    pub fn g(&self, next: &ACoeffs, lam_next: f64, lam_next2: f64) -> f64 {
        let c = next.tb * lam_next * lam_next2 + next.ta * lam_next - next.td;
        1.0 + c * self.h + (c + lam_next) * self.f
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CFState {
    pub n: usize,
    pub f: f64,
    pub h: f64,
    pub g: f64,
    /// `-ln(e1 A_1 ... A_n e1^T)`.
    pub log_xi_prod: f64,
    /// `S_n = 1 + rho(A_n) S_{n-1}`.
    pub s: ScaledNonneg,
    /// `e1 (sum_{k=1}^{n+1} A_k ... A_n) e1^T / S_n`.
    pub y: f64,
}

pub struct FhgStream {
    tenv: TransformedEnv,
    n_max: usize,
    state: FhState,
    log_xi_prod: f64,
    s: ScaledNonneg,
    acc: ProductAccumulator,
    failed: bool,
}

impl Iterator for FhgStream {
    type Item = Result<CFState>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.state.n >= self.n_max {
            return None;
        }
        let out = self.advance();
        if out.is_err() {
            self.failed = true;
        }
        Some(out)
    }
}

impl FhgStream {
    fn advance(&mut self) -> Result<CFState> {
        let n = self.state.n + 1;
        let c = self.tenv.at(n)?;
        self.state = self.state.step(&c)?;
        self.log_xi_prod += (self.state.f / c.tb).ln();
        let m = c.matrix();
        self.acc.push(&m);
        self.s = ScaledNonneg::ONE.add(self.s.mul_f64(spectrum(&m).rho));
        let next = self.tenv.at(n + 1)?;
        let g = self.state.g(&next, self.tenv.lambda(n + 1), self.tenv.lambda(n + 2));
        let y = self.acc.suffix_sum().contract([1.0, 0.0], [1.0, 0.0]).ratio(self.s);
        Ok(CFState {
            n,
            f: self.state.f,
            h: self.state.h,
            g,
            log_xi_prod: self.log_xi_prod,
            s: self.s,
            y,
        })
    }
}

pub fn fhg_stream(tenv: &TransformedEnv, n_max: usize) -> FhgStream {
    FhgStream {
        tenv: tenv.clone(),
        n_max,
        state: FhState::start(),
        log_xi_prod: 0.0,
        s: ScaledNonneg::ONE,
        acc: ProductAccumulator::new(),
        failed: false,
    }
}

/// Limit of `G_n` for a constant environment with `bd > a theta` and
/// `|rho_1| < 1`; zero when `theta = b + 1`.
pub fn g_limit(p: &EnvParams) -> Result<f64> {
    p.validate()?;
    let EnvParams { a, b, d, theta } = *p;
    let det = b * d - a * theta;
    if !(det > 0.0) {
        return Err(Error::Precondition {
            check: "bd_gt_a_theta",
            detail: format!("bd - a*theta = {det}"),
        });
    }
    let r1 = spectrum(&p.mean_matrix()).rho1;
    if !(r1.abs() < 1.0) {
        return Err(Error::Precondition {
            check: "rho1_inside_unit_disc",
            detail: format!("second eigenvalue {r1}"),
        });
    }
    if (theta - b - 1.0).abs() <= 1e-14 * theta.max(1.0) {
        return Ok(0.0);
    }
    let bt = b - theta;
    Ok((bt * r1 * r1 - bt * (a + b + 1.0) * r1 + det) / (det * (1.0 - r1)))
}

/// Indices `1, 2, 5, 10, 20, 50, ...` up to `n_max`, with `n_max` appended.
pub fn decade_grid(n_max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 1usize;
    'outer: loop {
        for m in [1, 2, 5] {
            let v = m * p;
            if v >= n_max {
                break 'outer;
            }
            out.push(v);
        }
        p *= 10;
    }
    if n_max > 0 {
        out.push(n_max);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigRatio {
    pub grid: Vec<(usize, f64)>,
    pub empirical: f64,
    pub predicted: f64,
}

/// Tracks `R_n = 1 / Q_n` with `Q_0 = 1/sigma_1` and
/// `Q_n = (1 + Q_{n-1}) / sigma_{n+1}`.
pub fn sig_ratio_limit(sigma: &dyn Fn(usize) -> f64, sigma_limit: f64, n_max: usize) -> SigRatio {
    let mut q = ScaledNonneg::from_f64(1.0 / sigma(1));
    let marks = decade_grid(n_max);
    let mut grid = Vec::with_capacity(marks.len());
    let mut next = marks.iter().peekable();
    let mut r = 1.0 / q.to_f64();
    for n in 1..=n_max {
        q = ScaledNonneg::ONE.add(q).mul_f64(1.0 / sigma(n + 1));
        r = ScaledNonneg::ONE.ratio(q);
        if next.peek() == Some(&&n) {
            grid.push((n, r));
            next.next();
        }
    }
    let predicted = if sigma_limit <= 1.0 { 0.0 } else { sigma_limit - 1.0 };
    SigRatio { grid, empirical: r, predicted }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyRow {
    pub n: usize,
    /// `S_n = 1 + rho(B_n) S_{n-1}`, `S_0 = 1`.
    pub s: ScaledNonneg,
    /// `e1 T_n e1^T / S_n`.
    pub y: f64,
    /// `e1 T_n (1, lambda_{n+1})^T / S_n` for transformed sequences.
    pub y_boundary: Option<f64>,
    /// `e1 B_1 ... B_n e1^T / (rho(B_1) ... rho(B_n))`.
    pub prod_ratio: f64,
}

pub struct SyStream {
    bseq: BSeq,
    n: usize,
    n_max: usize,
    s: ScaledNonneg,
    rho_prod: ScaledNonneg,
    acc: ProductAccumulator,
    failed: bool,
}

impl Iterator for SyStream {
    type Item = Result<SyRow>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.n >= self.n_max {
            return None;
        }
        let out = self.advance();
        if out.is_err() {
            self.failed = true;
        }
        Some(out)
    }
}

impl SyStream {
    fn advance(&mut self) -> Result<SyRow> {
        self.n += 1;
        let n = self.n;
        let m = self.bseq.matrix(n)?;
        let rho = spectrum(&m).rho;
        self.acc.push(&m);
        self.s = ScaledNonneg::ONE.add(self.s.mul_f64(rho));
        self.rho_prod = self.rho_prod.mul_f64(rho);
        let t = self.acc.suffix_sum();
        let y = t.contract([1.0, 0.0], [1.0, 0.0]).ratio(self.s);
        let y_boundary = match self.bseq.boundary(n + 1) {
            Some(w) => Some(t.contract([1.0, 0.0], w).ratio(self.s)),
            None => None,
        };
        let prod_ratio = self.acc.prod().contract([1.0, 0.0], [1.0, 0.0]).ratio(self.rho_prod);
        Ok(SyRow { n, s: self.s, y, y_boundary, prod_ratio })
    }
}

pub fn sy_stream(bseq: &BSeq, n_max: usize) -> SyStream {
    SyStream {
        bseq: bseq.clone(),
        n: 0,
        n_max,
        s: ScaledNonneg::ONE,
        rho_prod: ScaledNonneg::ONE,
        acc: ProductAccumulator::new(),
        failed: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DxfReport {
    pub window: (usize, usize),
    /// Consecutive ratios `delta_{k+1} / delta_k` of the `f`-difference sequence.
    pub delta_f_ratio: Vec<(usize, f64)>,
    pub delta_xi_ratio: Vec<(usize, f64)>,
    pub eps_f_ratio: Vec<(usize, f64)>,
    pub eps_xi_ratio: Vec<(usize, f64)>,
    pub q_f: f64,
    pub q_xi: f64,
    pub q_est: f64,
}

fn checked_delta(k: usize, terms: [f64; 3]) -> Result<f64> {
    let v = terms[0] - terms[1] - terms[2];
    let scale = terms.iter().map(|t| t.abs()).sum::<f64>();
    if v.abs() <= 64.0 * f64::EPSILON * scale {
        return Err(Error::ZeroDelta { k });
    }
    Ok(v)
}

fn ratios(v: &[(usize, f64)]) -> Vec<(usize, f64)> {
    v.windows(2).map(|w| (w[0].0, w[1].1 / w[0].1)).collect()
}

/// Compares the decay of `f_k - b_{k+1}/rho(B_{k+1})` and
/// `xi_k - 1/rho(B_k)` with that of their driving differences over `window`.
pub fn dxf_diagnostic(bseq: &BSeq, window: std::ops::RangeInclusive<usize>) -> Result<DxfReport> {
    let (lo, hi) = (*window.start(), *window.end());
    if lo < 2 || hi <= lo {
        return Err(Error::InvalidParams(format!("window [{lo}, {hi}] must satisfy 2 <= lo < hi")));
    }
    let coeffs = CFCoeffs::from_bseq(bseq);
    let mut rho = vec![0.0; hi + 3];
    let mut terms = vec![(0.0, 0.0, 0.0); hi + 3];
    for k in 1..=hi + 2 {
        terms[k] = bseq.at(k)?;
        rho[k] = bseq.radius(k)?;
    }
    let mut f = 0.0;
    let mut delta_f = Vec::new();
    let mut delta_xi = Vec::new();
    let mut eps_f = Vec::new();
    let mut eps_xi = Vec::new();
    for k in 1..=hi + 1 {
        let (a, b, d) = terms[k];
        f = if k == 1 { b / a } else { b / (a + d * f) };
        if k < lo {
            continue;
        }
        let (_, bn, dn) = terms[k + 1];
        delta_f.push((k, checked_delta(k, [b / d, bn / rho[k + 1] * a / d, bn / rho[k + 1] * b / rho[k]])?));
        let beta = 1.0 / (b * dn);
        delta_xi.push((k, checked_delta(k, [beta, a * beta / rho[k], 1.0 / (rho[k] * rho[k + 1])])?));
        eps_f.push((k, f - bn / rho[k + 1]));
        let xi = tail_bracket(&coeffs, k, 1e-15)?.mid();
        eps_xi.push((k, xi - 1.0 / rho[k]));
    }
    let delta_f_ratio = ratios(&delta_f);
    let delta_xi_ratio = ratios(&delta_xi);
    let eps_f_ratio = ratios(&eps_f);
    let eps_xi_ratio = ratios(&eps_xi);
    let q_f = eps_f_ratio.last().map(|x| x.1).unwrap_or(f64::NAN);
    let q_xi = eps_xi_ratio.last().map(|x| x.1).unwrap_or(f64::NAN);
    Ok(DxfReport {
        window: (lo, hi),
        delta_f_ratio,
        delta_xi_ratio,
        eps_f_ratio,
        eps_xi_ratio,
        q_f,
        q_xi,
        q_est: 0.5 * (q_f + q_xi),
    })
}
