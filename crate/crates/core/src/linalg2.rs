//! 2x2 matrices, spectra, and products kept with a separate binary exponent.

use std::ops::{Add, Mul};

use crate::env::EnvSequence;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { m11: 1.0, m12: 0.0, m21: 0.0, m22: 1.0 };
    pub const ZERO: Mat2 = Mat2 { m11: 0.0, m12: 0.0, m21: 0.0, m22: 0.0 };

    pub const fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Mat2 { m11, m12, m21, m22 }
    }

    pub fn trace(&self) -> f64 {
        self.m11 + self.m22
    }

    pub fn det(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.m11 * s, self.m12 * s, self.m21 * s, self.m22 * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.m11.abs().max(self.m12.abs()).max(self.m21.abs()).max(self.m22.abs())
    }

    /// `left * self * right^T` for row vectors `left`, `right`.
    pub fn contract(&self, left: [f64; 2], right: [f64; 2]) -> f64 {
        left[0] * (self.m11 * right[0] + self.m12 * right[1])
            + left[1] * (self.m21 * right[0] + self.m22 * right[1])
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let det = self.det();
        if det == 0.0 {
            return None;
        }
        Some(Mat2::new(self.m22 / det, -self.m12 / det, -self.m21 / det, self.m11 / det))
    }

    pub fn is_finite(&self) -> bool {
        self.m11.is_finite() && self.m12.is_finite() && self.m21.is_finite() && self.m22.is_finite()
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.m11 * o.m11 + self.m12 * o.m21,
            self.m11 * o.m12 + self.m12 * o.m22,
            self.m21 * o.m11 + self.m22 * o.m21,
            self.m21 * o.m12 + self.m22 * o.m22,
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;

    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.m11 + o.m11, self.m12 + o.m12, self.m21 + o.m21, self.m22 + o.m22)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    /// Perron root.
    pub rho: f64,
    /// Second eigenvalue.
    pub rho1: f64,
}

/// Eigenvalues of a matrix with nonnegative off-diagonal product.
pub fn spectrum(m: &Mat2) -> Spectrum {
    let diff = m.m11 - m.m22;
    let disc = (diff * diff + 4.0 * m.m12 * m.m21).max(0.0);
    let tr = m.trace();
    let rho = 0.5 * (tr + disc.sqrt());
    let rho1 = if rho != 0.0 { m.det() / rho } else { 0.5 * (tr - disc.sqrt()) };
    Spectrum { rho, rho1 }
}

/// Splits finite `x` into `(mant, e)` with `x = mant * 2^e`, `|mant|` in `[1/2, 1)`.
pub fn frexp(x: f64) -> (f64, i64) {
    if x == 0.0 || !x.is_finite() {
        return (x, 0);
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    if exp == 0 {
        let (m, e) = frexp(x * f64::from_bits(0x43f0_0000_0000_0000));
        return (m, e - 64);
    }
    let mant = f64::from_bits((bits & !(0x7ff << 52)) | (1022 << 52));
    (mant, exp - 1022)
}

/// `x * 2^e` without overflowing the intermediate power.
pub fn ldexp(mut x: f64, mut e: i64) -> f64 {
    let step = 1000;
    let up = f64::from_bits(((1023 + step) as u64) << 52);
    let down = f64::from_bits(((1023 - step) as u64) << 52);
    while e > step {
        x *= up;
        e -= step;
        if x.is_infinite() {
            return x;
        }
    }
    while e < -step {
        x *= down;
        e += step;
        if x == 0.0 {
            return x;
        }
    }
    x * f64::from_bits(((1023 + e) as u64) << 52)
}

/// Nonnegative real stored as `mant * 2^exp2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledNonneg {
    mant: f64,
    exp2: i64,
}

impl ScaledNonneg {
    pub const ZERO: ScaledNonneg = ScaledNonneg { mant: 0.0, exp2: 0 };
    pub const ONE: ScaledNonneg = ScaledNonneg { mant: 0.5, exp2: 1 };

    pub fn from_f64(x: f64) -> Self {
        debug_assert!(x >= 0.0 && x.is_finite(), "ScaledNonneg from {x}");
        Self::from_parts(x.max(0.0), 0)
    }

    pub fn from_parts(mant: f64, exp2: i64) -> Self {
        if mant <= 0.0 {
            return Self::ZERO;
        }
        let (m, e) = frexp(mant);
        ScaledNonneg { mant: m, exp2: exp2 + e }
    }

    /// `e^x`.
    pub fn exp(x: f64) -> Self {
        if x == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        let k = (x / std::f64::consts::LN_2).floor();
        Self::from_parts((x - k * std::f64::consts::LN_2).exp(), k as i64)
    }

    pub fn is_zero(&self) -> bool {
        self.mant == 0.0
    }

    pub fn mantissa(&self) -> f64 {
        self.mant
    }

    pub fn exponent(&self) -> i64 {
        self.exp2
    }

    pub fn ln(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.mant.ln() + self.exp2 as f64 * std::f64::consts::LN_2
        }
    }

    pub fn to_f64(&self) -> f64 {
        ldexp(self.mant, self.exp2)
    }

    pub fn mul(self, o: Self) -> Self {
        Self::from_parts(self.mant * o.mant, self.exp2 + o.exp2)
    }

    pub fn mul_f64(self, x: f64) -> Self {
        debug_assert!(x >= 0.0);
        Self::from_parts(self.mant * x, self.exp2)
    }

    pub fn div(self, o: Self) -> Self {
        assert!(!o.is_zero(), "division by zero ScaledNonneg");
        Self::from_parts(self.mant / o.mant, self.exp2 - o.exp2)
    }

    pub fn recip(self) -> Self {
        Self::ONE.div(self)
    }

    pub fn add(self, o: Self) -> Self {
        if self.is_zero() {
            return o;
        }
        if o.is_zero() {
            return self;
        }
        let (hi, lo) = if self.exp2 >= o.exp2 { (self, o) } else { (o, self) };
        let shift = lo.exp2 - hi.exp2;
        if shift < -1100 {
            return hi;
        }
        Self::from_parts(hi.mant + ldexp(lo.mant, shift), hi.exp2)
    }

    /// `self / o` as a plain float.
    pub fn ratio(self, o: Self) -> f64 {
        ldexp(self.mant / o.mant, self.exp2 - o.exp2)
    }
}

/// Matrix stored as `core * 2^exp2` with the largest `|core|` entry in `[1/2, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledMat2 {
    core: Mat2,
    exp2: i64,
}

impl ScaledMat2 {
    pub fn identity() -> Self {
        Self::from_mat(Mat2::IDENTITY)
    }

    pub fn from_mat(m: Mat2) -> Self {
        Self::normalized(m, 0)
    }

    fn normalized(m: Mat2, exp2: i64) -> Self {
        let mx = m.max_abs();
        if mx == 0.0 {
            return ScaledMat2 { core: Mat2::ZERO, exp2: 0 };
        }
        let (_, e) = frexp(mx);
        let s = ldexp(1.0, -e);
        ScaledMat2 { core: m.scale(s), exp2: exp2 + e }
    }

    pub fn core(&self) -> &Mat2 {
        &self.core
    }

    pub fn exp2(&self) -> i64 {
        self.exp2
    }

    /// Natural log of the scale factor, `-inf` for the zero matrix.
    pub fn log_scale(&self) -> f64 {
        if self.core.max_abs() == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.exp2 as f64 * std::f64::consts::LN_2
        }
    }

    pub fn mul_mat(&self, m: &Mat2) -> Self {
        Self::normalized(self.core * *m, self.exp2)
    }

    pub fn left_mul_mat(&self, m: &Mat2) -> Self {
        Self::normalized(*m * self.core, self.exp2)
    }

    pub fn mul(&self, o: &ScaledMat2) -> Self {
        Self::normalized(self.core * o.core, self.exp2 + o.exp2)
    }

    pub fn add(&self, o: &ScaledMat2) -> Self {
        if o.core.max_abs() == 0.0 {
            return *self;
        }
        if self.core.max_abs() == 0.0 {
            return *o;
        }
        let (hi, lo) = if self.exp2 >= o.exp2 { (self, o) } else { (o, self) };
        let shift = lo.exp2 - hi.exp2;
        if shift < -1100 {
            return *hi;
        }
        Self::normalized(hi.core + lo.core.scale(ldexp(1.0, shift)), hi.exp2)
    }

    pub fn add_identity(&self) -> Self {
        self.add(&Self::identity())
    }

    /// `left * self * right^T`, clamped at zero.
    pub fn contract(&self, left: [f64; 2], right: [f64; 2]) -> ScaledNonneg {
        let v = self.core.contract(left, right);
        ScaledNonneg::from_parts(v.max(0.0), self.exp2)
    }

    /// Signed contraction as `(value of core part, exponent)`.
    pub fn contract_signed(&self, left: [f64; 2], right: [f64; 2]) -> (f64, i64) {
        (self.core.contract(left, right), self.exp2)
    }

    /// Unscaled matrix; may overflow or underflow.
    pub fn to_mat(&self) -> Mat2 {
        self.core.scale(ldexp(1.0, self.exp2))
    }
}

/// `P * M` with rescaling.
pub fn scaled_mul(p: &ScaledMat2, m: &Mat2) -> ScaledMat2 {
    p.mul_mat(m)
}

/// Running product `P_n = M_1 ... M_n` and suffix sum
/// `T_n = I + T_{n-1} M_n = sum_{k=1}^{n+1} M_k ... M_n`.
#[derive(Debug, Clone)]
pub struct ProductAccumulator {
    n: usize,
    prod: ScaledMat2,
    suffix: ScaledMat2,
}

impl Default for ProductAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl ProductAccumulator {
    pub fn new() -> Self {
        ProductAccumulator {
            n: 0,
            prod: ScaledMat2::identity(),
            suffix: ScaledMat2::identity(),
        }
    }

    pub fn push(&mut self, m: &Mat2) {
        self.n += 1;
        self.prod = self.prod.mul_mat(m);
        self.suffix = self.suffix.mul_mat(m).add_identity();
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn prod(&self) -> &ScaledMat2 {
        &self.prod
    }

    pub fn suffix_sum(&self) -> &ScaledMat2 {
        &self.suffix
    }
}

#[derive(Debug, Clone)]
pub struct ForwardItem {
    pub n: usize,
    pub prod: ScaledMat2,
    pub suffix_sum: ScaledMat2,
}

/// Streams `(P_n, T_n)` for `n = 1..=n_max` over the mean matrices of `env`.
pub fn forward_pair(env: &EnvSequence, n_max: usize) -> impl Iterator<Item = ForwardItem> + '_ {
    let mut acc = ProductAccumulator::new();
    (1..=n_max).map(move |n| {
        acc.push(&env.mean_matrix(n));
        ForwardItem {
            n,
            prod: *acc.prod(),
            suffix_sum: *acc.suffix_sum(),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn spectrum_examples() {
        let s = spectrum(&Mat2::new(0.0, 0.5, 1.0, 0.5));
        assert!(close(s.rho, 1.0, 1e-15) && close(s.rho1, -0.5, 1e-15));
        let s = spectrum(&Mat2::new(1.0, 1.0, 1.0, 1.0));
        assert!(close(s.rho, 2.0, 1e-15) && s.rho1.abs() < 1e-15);
        let s = spectrum(&Mat2::new(0.0, 2.0, 2.0, 0.0));
        assert!(close(s.rho, 2.0, 1e-15) && close(s.rho1, -2.0, 1e-15));
    }

    #[test]
    fn frexp_ldexp_round_trip() {
        for x in [1.0, 0.75, 3.0e300, 1e-310, 5e-324, 123.456] {
            let (m, e) = frexp(x);
            assert!((0.5..1.0).contains(&m), "{x}: {m}");
            assert_eq!(ldexp(m, e), x);
        }
        assert_eq!(ldexp(1.0, 2000), f64::INFINITY);
        assert_eq!(ldexp(1.0, -2000), 0.0);
    }

    #[test]
    fn scaled_power_of_two_matrix() {
        let m = Mat2::new(1.0, 1.0, 1.0, 1.0);
        let mut p = ScaledMat2::identity();
        for _ in 0..3000 {
            p = p.mul_mat(&m);
        }
        let want = 2999.0 * std::f64::consts::LN_2;
        let got = p.log_scale() + p.core().m11.ln();
        assert!(close(got, want, 1e-14));
    }

    #[test]
    fn zero_matrix_scale() {
        let z = ScaledMat2::from_mat(Mat2::ZERO);
        assert_eq!(z.log_scale(), f64::NEG_INFINITY);
    }

    #[test]
    fn scaled_nonneg_arith() {
        let a = ScaledNonneg::exp(1000.0);
        let b = ScaledNonneg::exp(999.0);
        assert!(close(a.ratio(b), std::f64::consts::E, 1e-13));
        assert!(close(a.add(b).ln(), 1000.0 + (1.0 + (-1.0f64).exp()).ln(), 1e-14));
        assert!(close(ScaledNonneg::ONE.to_f64(), 1.0, 0.0));
    }

    #[test]
    fn accumulator_matches_plain() {
        let ms = [Mat2::new(0.3, 1.2, 0.7, 0.1), Mat2::new(1.5, 0.2, 2.0, 0.4), Mat2::new(0.0, 0.5, 1.0, 0.5)];
        let mut acc = ProductAccumulator::new();
        let mut p = Mat2::IDENTITY;
        let mut t = Mat2::IDENTITY;
        for m in ms {
            acc.push(&m);
            p = p * m;
            t = t * m + Mat2::IDENTITY;
        }
        let (gp, gt) = (acc.prod().to_mat(), acc.suffix_sum().to_mat());
        for (x, y) in [(gp.m11, p.m11), (gp.m22, p.m22), (gt.m12, t.m12), (gt.m21, t.m21)] {
            assert!(close(x, y, 1e-14));
        }
    }
}
