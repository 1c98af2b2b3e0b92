//! Similarity transform that zeroes the lower-right entry of each mean matrix.
//!
//! With `lambda_k = 1 - theta_k / b_k` and `L_k = [[1, 0], [theta_k / b_k, 1]]`,
//! `A_k = L_k^{-1} M_k L_{k+1} = [[a~_k, b~_k], [d~_k, 0]]` where
//! `a~_k = a_k + b_k theta_{k+1} / b_{k+1}`, `b~_k = b_k` and
//! `d~_k = d_k - a_k theta_k / b_k`. Products telescope, so
//! `e1 M_1..M_n 1 = e1 A_1..A_n (1, lambda_{n+1})^T`.

use crate::env::{probe_indices, EnvParams, EnvSequence};
use crate::error::{Error, Result};
use crate::linalg2::Mat2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ACoeffs {
    pub ta: f64,
    pub tb: f64,
    pub td: f64,
}

impl ACoeffs {
    pub fn matrix(&self) -> Mat2 {
        Mat2::new(self.ta, self.tb, self.td, 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct TransformedEnv {
    env: EnvSequence,
    eps: f64,
}

fn coeffs(cur: &EnvParams, next: &EnvParams) -> ACoeffs {
    ACoeffs {
        ta: cur.a + cur.b * next.theta / next.b,
        tb: cur.b,
        td: cur.d - cur.a * cur.theta / cur.b,
    }
}

/// Builds the transformed sequence and records `min d~_k` over a probe
/// window as the positivity witness. Fails if that minimum is not positive.
pub fn build_a(env: &EnvSequence) -> Result<TransformedEnv> {
    let mut eps = f64::INFINITY;
    for k in probe_indices(1000, 6) {
        let p = env.at(k);
        let td = p.d - p.a * p.theta / p.b;
        if !(td > 0.0) {
            return Err(Error::NonPositiveDtilde { k, value: td });
        }
        eps = eps.min(td);
    }
    let lim = limit_a(&env.limit());
    if !(lim.m21 > 0.0) {
        return Err(Error::NonPositiveDtilde { k: usize::MAX, value: lim.m21 });
    }
    eps = eps.min(lim.m21);
    Ok(TransformedEnv { env: env.clone(), eps })
}

/// `[[a + theta, b], [d - a theta / b, 0]]` for a constant environment.
pub fn limit_a(p: &EnvParams) -> Mat2 {
    Mat2::new(p.a + p.theta, p.b, p.d - p.a * p.theta / p.b, 0.0)
}

impl TransformedEnv {
    pub fn env(&self) -> &EnvSequence {
        &self.env
    }

    /// Lower bound of `d~_k` observed on the probe window.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn at(&self, k: usize) -> Result<ACoeffs> {
        let c = coeffs(&self.env.at(k), &self.env.at(k + 1));
        if !(c.td > 0.0) {
            return Err(Error::NonPositiveDtilde { k, value: c.td });
        }
        Ok(c)
    }

    pub fn a_matrix(&self, k: usize) -> Result<Mat2> {
        Ok(self.at(k)?.matrix())
    }

    pub fn lambda(&self, k: usize) -> f64 {
        let p = self.env.at(k);
        1.0 - p.theta / p.b
    }

    /// `(1, lambda_k)`.
    pub fn boundary(&self, k: usize) -> [f64; 2] {
        [1.0, self.lambda(k)]
    }

    /// `L_k = [[1, 0], [theta_k / b_k, 1]]`.
    pub fn conj(&self, k: usize) -> Mat2 {
        let p = self.env.at(k);
        Mat2::new(1.0, 0.0, p.theta / p.b, 1.0)
    }

    pub fn limit(&self) -> Mat2 {
        limit_a(&self.env.limit())
    }
}
