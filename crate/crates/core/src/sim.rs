//! Seeded Monte Carlo simulation of the extinction time.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::dist::{DistRow, Initial};
use crate::env::{is_offspring_shape, EnvParams, EnvSequence};
use crate::error::{Error, Result};

/// Offspring law `P(i, j) = p C(i+j, i) q1^i q2^j` for a type-1 parent; a
/// type-2 parent has one extra type-1 child.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffspringLaw {
    pub q1: f64,
    pub q2: f64,
    pub p: f64,
}

impl OffspringLaw {
    pub fn new(q1: f64, q2: f64, p: f64) -> Result<Self> {
        EnvParams::from_offspring(q1, q2, p)?;
        Ok(OffspringLaw { q1, q2, p })
    }

    /// Recovers the law from mean-matrix entries with `d = 1 + a`, `theta = b`.
    pub fn from_params(m: &EnvParams) -> Result<Self> {
        if !is_offspring_shape(m) {
            return Err(Error::InvalidParams(format!("{m} is not of the form d = 1 + a, theta = b")));
        }
        let p = 1.0 / (1.0 + m.a + m.b);
        Ok(OffspringLaw { q1: m.a * p, q2: 1.0 - p - m.a * p, p })
    }

    /// Exact probability of `(i, j)` children for a parent of type `parent`.
    pub fn pmf(&self, i: u64, j: u64, parent: Initial) -> f64 {
        let i = match parent {
            Initial::E1 => i,
            Initial::E2 if i >= 1 => i - 1,
            Initial::E2 => return 0.0,
        };
        let t = i + j;
        let ln_binom = ln_factorial(t) - ln_factorial(i) - ln_factorial(j);
        let mut lp = self.p.ln() + ln_binom;
        if i > 0 {
            lp += i as f64 * self.q1.ln();
        }
        if j > 0 {
            lp += j as f64 * self.q2.ln();
        }
        lp.exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, parent: Initial, rng: &mut R) -> (u64, u64) {
        let geo = Geometric::new(self.p).expect("p in (0,1)");
        self.sample_with(&geo, parent, rng)
    }

    fn sample_with<R: Rng + ?Sized>(&self, geo: &Geometric, parent: Initial, rng: &mut R) -> (u64, u64) {
        let t = geo.sample(rng);
        let i = if t == 0 || self.q1 == 0.0 {
            0
        } else {
            Binomial::new(t, self.q1 / (self.q1 + self.q2)).expect("valid split").sample(rng)
        };
        let extra = u64::from(parent == Initial::E2);
        (i + extra, t - i)
    }
}

fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub runs: u64,
    pub horizon: usize,
    pub seed: u64,
    pub initial: Initial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub seed: u64,
    pub runs: u64,
    pub horizon: usize,
    /// `(n, number of runs extinct at generation n)`, increasing in `n`.
    pub hist: Vec<(usize, u64)>,
    /// Runs still alive at the horizon.
    pub censored: u64,
}

pub const POPULATION_CAP: u64 = 100_000_000;

/// Generator for run `run`: stream `run` of the ChaCha8 key derived from `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

fn simulate_run(laws: &[(OffspringLaw, Geometric)], initial: Initial, seed: u64, run: u64) -> Result<Option<usize>> {
    let mut rng = run_rng(seed, run);
    let (mut z1, mut z2) = match initial {
        Initial::E1 => (1u64, 0u64),
        Initial::E2 => (0, 1),
    };
    for (k, (law, geo)) in laws.iter().enumerate() {
        let (mut n1, mut n2) = (0u64, 0u64);
        for parent in [Initial::E1, Initial::E2] {
            let count = if parent == Initial::E1 { z1 } else { z2 };
            for _ in 0..count {
                let (i, j) = law.sample_with(geo, parent, &mut rng);
                n1 += i;
                n2 += j;
            }
        }
        if n1 + n2 > POPULATION_CAP {
            return Err(Error::PopulationOverflow { run, generation: k + 1 });
        }
        (z1, z2) = (n1, n2);
        if z1 + z2 == 0 {
            return Ok(Some(k + 1));
        }
    }
    Ok(None)
}

#[derive(Default)]
struct Tally {
    hist: BTreeMap<usize, u64>,
    censored: u64,
    err: Option<(u64, Error)>,
}

impl Tally {
    fn record(mut self, run: u64, out: Result<Option<usize>>) -> Self {
        match out {
            Ok(Some(n)) => *self.hist.entry(n).or_insert(0) += 1,
            Ok(None) => self.censored += 1,
            Err(e) => {
                if self.err.as_ref().is_none_or(|(r, _)| run < *r) {
                    self.err = Some((run, e));
                }
            }
        }
        self
    }

    #[cfg(feature = "parallel")]
    fn merge(mut self, o: Tally) -> Self {
        for (n, c) in o.hist {
            *self.hist.entry(n).or_insert(0) += c;
        }
        self.censored += o.censored;
        self.err = match (self.err, o.err) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
            (a, b) => a.or(b),
        };
        self
    }
}

/// Simulates `cfg.runs` independent processes up to `cfg.horizon`
/// generations. Results depend only on the seed, not on thread scheduling.
pub fn run_sim(env: &EnvSequence, cfg: &SimConfig) -> Result<SimResult> {
    if cfg.runs == 0 || cfg.horizon == 0 {
        return Err(Error::InvalidParams("runs and horizon must be positive".into()));
    }
    let laws = (1..=cfg.horizon)
        .map(|k| {
            let law = OffspringLaw::from_params(&env.at(k))
                .map_err(|e| Error::InvalidParams(format!("generation {k}: {e}")))?;
            let geo = Geometric::new(law.p).map_err(|e| Error::InvalidParams(e.to_string()))?;
            Ok((law, geo))
        })
        .collect::<Result<Vec<_>>>()?;

    #[cfg(feature = "parallel")]
    let tally = {
        use rayon::prelude::*;
        (0..cfg.runs)
            .into_par_iter()
            .fold(Tally::default, |t, r| t.record(r, simulate_run(&laws, cfg.initial, cfg.seed, r)))
            .reduce(Tally::default, Tally::merge)
    };
    #[cfg(not(feature = "parallel"))]
    let tally = (0..cfg.runs).fold(Tally::default(), |t, r| t.record(r, simulate_run(&laws, cfg.initial, cfg.seed, r)));

    if let Some((_, e)) = tally.err {
        return Err(e);
    }
    Ok(SimResult {
        seed: cfg.seed,
        runs: cfg.runs,
        horizon: cfg.horizon,
        hist: tally.hist.into_iter().collect(),
        censored: tally.censored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareRow {
    pub n: usize,
    pub exact: f64,
    pub empirical: f64,
    pub count: u64,
    /// Binomial standard error of the empirical frequency under `exact`.
    pub sigma: f64,
    pub z: f64,
}

/// Lines up simulated extinction frequencies with exact point masses.
pub fn compare(rows: &[DistRow], sim: &SimResult) -> Vec<CompareRow> {
    let counts: BTreeMap<usize, u64> = sim.hist.iter().copied().collect();
    let runs = sim.runs as f64;
    rows.iter()
        .filter(|r| r.n <= sim.horizon)
        .map(|r| {
            let count = counts.get(&r.n).copied().unwrap_or(0);
            let empirical = count as f64 / runs;
            let exact = r.mass.clamp(0.0, 1.0);
            let sigma = (exact * (1.0 - exact) / runs).sqrt();
            let z = if sigma > 0.0 {
                (empirical - exact) / sigma
            } else if empirical == exact {
                0.0
            } else {
                f64::INFINITY
            };
            CompareRow { n: r.n, exact, empirical, count, sigma, z }
        })
        .collect()
}

/// Pearson statistic over cells with expected count at least `min_expected`;
/// the remaining cells are pooled into one. Returns `(statistic, dof)`.
pub fn chi_square(observed: &[u64], expected: &[f64], min_expected: f64) -> (f64, usize) {
    let (mut stat, mut cells) = (0.0, 0usize);
    let (mut po, mut pe) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e >= min_expected {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        } else {
            po += o as f64;
            pe += e;
        }
    }
    if pe > 0.0 {
        stat += (po - pe).powi(2) / pe;
        cells += 1;
    }
    (stat, cells.saturating_sub(1))
}

/// Wilson-Hilferty approximation to the upper quantile of a chi-square law
/// with `dof` degrees of freedom at standard-normal quantile `z`.
pub fn chi_square_quantile(dof: usize, z: f64) -> f64 {
    let k = dof as f64;
    let c = 2.0 / (9.0 * k);
    k * (1.0 - c + z * c.sqrt()).powi(3)
}
