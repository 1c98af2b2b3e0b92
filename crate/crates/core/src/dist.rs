//! Law of the extinction time: `eta_n = P(Z_n != 0)` and the point masses
//! `p_n = P(extinction at generation n)`.

use serde::{Deserialize, Serialize};

use crate::cfrac::FhState;
use crate::env::EnvSequence;
use crate::error::{Error, Result};
use crate::linalg2::{Mat2, ProductAccumulator, ScaledMat2, ScaledNonneg};
use crate::transform::TransformedEnv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Initial {
    E1,
    E2,
}

impl Initial {
    pub fn row(self) -> [f64; 2] {
        match self {
            Initial::E1 => [1.0, 0.0],
            Initial::E2 => [0.0, 1.0],
        }
    }

    pub fn index(self) -> usize {
        match self {
            Initial::E1 => 0,
            Initial::E2 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistRow {
    pub n: usize,
    pub eta: f64,
    pub mass: f64,
}

/// Streams rows from `e_i P_n 1 / e1 T_n 1`.
pub struct DirectStream {
    env: EnvSequence,
    initial: Initial,
    acc: ProductAccumulator,
    n_max: usize,
    prev_eta: f64,
}

impl Iterator for DirectStream {
    type Item = DistRow;

    fn next(&mut self) -> Option<DistRow> {
        let n = self.acc.n() + 1;
        if n > self.n_max {
            return None;
        }
        self.acc.push(&self.env.mean_matrix(n));
        let ones = [1.0, 1.0];
        let num = self.acc.prod().contract(self.initial.row(), ones);
        let den = self.acc.suffix_sum().contract([1.0, 0.0], ones);
        let eta = num.ratio(den);
        let mass = self.prev_eta - eta;
        self.prev_eta = eta;
        Some(DistRow { n, eta, mass })
    }
}

pub fn eta_direct(env: &EnvSequence, n_max: usize, initial: Initial) -> DirectStream {
    DirectStream {
        env: env.clone(),
        initial,
        acc: ProductAccumulator::new(),
        n_max,
        prev_eta: 1.0,
    }
}

/// Row of the continued-fraction route. `mass` comes from the closed form
/// through `G_{n-1}`; `mass_diff` is `eta_{n-1} - eta_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CfRow {
    pub n: usize,
    pub eta: f64,
    pub mass: f64,
    pub mass_diff: f64,
    pub g_prev: f64,
}

impl From<CfRow> for DistRow {
    fn from(r: CfRow) -> DistRow {
        DistRow { n: r.n, eta: r.eta, mass: r.mass }
    }
}

pub struct CfStream {
    tenv: TransformedEnv,
    n_max: usize,
    n: usize,
    /// `U_n = A_1 ... A_n` and `V_n = I + V_{n-1} A_n`.
    acc: ProductAccumulator,
    fh: FhState,
    prev_eta: f64,
    failed: bool,
}

impl CfStream {
    fn advance(&mut self) -> Result<CfRow> {
        let n = self.n + 1;
        let c = self.tenv.at(n)?;
        let w_n = self.tenv.boundary(n);
        let w_next = self.tenv.boundary(n + 1);
        let u_prev = self.acc.prod().contract([1.0, 0.0], [1.0, 0.0]);
        let den_prev = self.acc.suffix_sum().contract([1.0, 0.0], w_n);
        let g_prev = self.fh.g(&c, w_n[1], w_next[1]);

        self.acc.push(&c.matrix());
        self.fh = self.fh.step(&c)?;
        self.n = n;

        let num = self.acc.prod().contract([1.0, 0.0], w_next);
        let den = self.acc.suffix_sum().contract([1.0, 0.0], w_next);
        if den.is_zero() || den_prev.is_zero() {
            return Err(Error::DivisionGuard { n });
        }
        let eta = num.ratio(den);
        let mass = g_prev.signum() * u_prev.div(den.mul(den_prev)).mul_f64(g_prev.abs()).to_f64();
        let mass_diff = self.prev_eta - eta;
        self.prev_eta = eta;
        Ok(CfRow { n, eta, mass, mass_diff, g_prev })
    }
}

impl Iterator for CfStream {
    type Item = Result<CfRow>;

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

/// Continued-fraction route, started from a type-1 ancestor.
pub fn eta_cf(tenv: &TransformedEnv, n_max: usize) -> CfStream {
    CfStream {
        tenv: tenv.clone(),
        n_max,
        n: 0,
        acc: ProductAccumulator::new(),
        fh: FhState::start(),
        prev_eta: 1.0,
        failed: false,
    }
}

/// `eta_n` for a constant mean matrix by repeated squaring.
pub fn homogeneous_eta(m: &Mat2, n: usize, initial: Initial) -> f64 {
    let (p, t) = power_and_sum(m, n);
    let ones = [1.0, 1.0];
    p.contract(initial.row(), ones).ratio(t.contract([1.0, 0.0], ones))
}

/// `(M^n, I + M + ... + M^n)`.
fn power_and_sum(m: &Mat2, n: usize) -> (ScaledMat2, ScaledMat2) {
    if n == 0 {
        return (ScaledMat2::identity(), ScaledMat2::identity());
    }
    if n % 2 == 1 {
        let (p, s) = power_and_sum(m, n / 2);
        let up = p.mul_mat(m);
        (up.mul(&p), s.add(&up.mul(&s)))
    } else {
        let (p, s) = power_and_sum(m, n - 1);
        let pn = p.mul_mat(m);
        let sn = s.add(&pn);
        (pn, sn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Sub,
    Crit,
    Super,
}

/// Classifies by the Perron root, with `|rho - 1| <= 1e-12` counted as critical.
pub fn regime(m: &Mat2) -> Regime {
    let rho = crate::linalg2::spectrum(m).rho;
    if (rho - 1.0).abs() <= 1e-12 {
        Regime::Crit
    } else if rho < 1.0 {
        Regime::Sub
    } else {
        Regime::Super
    }
}

/// `eta_{n-1} - eta_n` for a constant mean matrix.
pub fn homogeneous_mass(m: &Mat2, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    homogeneous_eta(m, n - 1, Initial::E1) - homogeneous_eta(m, n, Initial::E1)
}

/// Extinction probability by generation `n` from iterating the generating
/// functions: `P(Z_n = 0) = f_1(f_2(...f_n(0)))`.
pub fn extinction_by_pgf(env: &EnvSequence, n: usize, initial: Initial) -> f64 {
    let mut s = [0.0, 0.0];
    for k in (1..=n).rev() {
        let p = env.at(k);
        s = [p.pgf(0, s), p.pgf(1, s)];
    }
    if n == 0 {
        0.0
    } else {
        s[initial.index()]
    }
}

/// Sum of the point masses over `rows` in scaled form.
pub fn total_mass(rows: &[DistRow]) -> ScaledNonneg {
    rows.iter().fold(ScaledNonneg::ZERO, |acc, r| acc.add(ScaledNonneg::from_f64(r.mass.max(0.0))))
}
