use bpve::asymptotics::{check_conditions, fit_rate, predictors, B2Case, RateModel, Verdict};
use bpve::cfrac::{
    approximant, dxf_diagnostic, fhg_stream, g_limit, limit_tail, sig_ratio_limit, sy_stream, tail_bracket, BSeq,
    CFCoeffs,
};
use bpve::dist::{
    eta_cf, eta_direct, extinction_by_pgf, homogeneous_eta, homogeneous_mass, regime, DistRow, Initial, Regime,
};
use bpve::env::{lambda_pert, EnvParams, EnvSequence, PerturbationSeq, Sign};
use bpve::linalg2::{forward_pair, spectrum, Mat2, ScaledMat2};
use bpve::sim::{chi_square, chi_square_quantile, run_sim, OffspringLaw, SimConfig};
use bpve::transform::{build_a, limit_a};
use bpve::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn half() -> EnvParams {
    EnvParams::new(0.0, 0.5, 1.0, 0.5).unwrap()
}

fn half_env() -> EnvSequence {
    EnvSequence::homogeneous(half()).unwrap()
}

fn egc_1221() -> EnvSequence {
    EnvSequence::egc(EnvParams::new(1.0, 2.0, 2.0, 1.0).unwrap(), PerturbationSeq::inv3k()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn random_env(rng: &mut ChaCha8Rng, len: usize) -> EnvSequence {
    let draw = |rng: &mut ChaCha8Rng| {
        let a: f64 = rng.random_range(0.0..2.0);
        let b: f64 = rng.random_range(0.1..2.0);
        let theta: f64 = rng.random_range(0.05..2.0);
        let d = a * theta / b + rng.random_range(0.05..2.0);
        EnvParams::new(a, b, d, theta).unwrap()
    };
    let params = (0..len).map(|_| draw(rng)).collect();
    let tail = draw(rng);
    EnvSequence::explicit(params, tail).unwrap()
}

fn cf_rows(env: &EnvSequence, n: usize) -> Vec<bpve::dist::CfRow> {
    eta_cf(&build_a(env).unwrap(), n).collect::<Result<Vec<_>, _>>().unwrap()
}

#[test]
fn perturbation_values() {
    assert!((lambda_pert(1, 10, 2.0).unwrap() - 0.2).abs() < 1e-15);
    let e2 = std::f64::consts::E.powi(2);
    assert!((lambda_pert(2, e2 as usize + 1, 0.0).unwrap() - 1.0 / (e2 as usize + 1) as f64).abs() < 1e-15);
    assert!((lambda_pert(2, 100, 1.0).unwrap() - 0.012_171).abs() < 1e-6);
}

#[test]
fn mxt_family_shape() {
    let flat = EnvSequence::mxt(1, 0.0, Sign::Plus).unwrap();
    for k in [1, 7, 1000] {
        assert_eq!(flat.at(k), half());
    }
    let m = EnvSequence::mxt(1, 1.0, Sign::Minus).unwrap();
    let p = m.at(10_000);
    assert!(p.b > 0.5 && p.b - 0.5 < 1e-3 && p.a == 0.0 && p.d == 1.0 && p.theta == p.b);
    for (k, b) in [(1, -1.0), (2, 2.0)] {
        for sign in [Sign::Plus, Sign::Minus] {
            assert_eq!(EnvSequence::mxt(k, b, sign).unwrap().limit(), half());
        }
    }
}

#[test]
fn egc_constructor() {
    let r = PerturbationSeq::inv3k;
    assert!(EnvSequence::egc(EnvParams::new(1.0, 1.0, 1.0, 1.0).unwrap(), r()).is_err());
    assert!(EnvSequence::egc(EnvParams::new(1.0, 2.0, 2.0, 1.0).unwrap(), PerturbationSeq::inv_k_squared()).is_err());
    // tau = -2 coincides with an excluded root for this limit.
    assert!(matches!(
        EnvSequence::egc(half(), r()),
        Err(Error::Precondition { check: "tau_exclusion", .. })
    ));
    let env = EnvSequence::egc_unchecked(half(), r());
    for k in [1usize, 4, 300] {
        let x = 1.0 / (3.0 * k as f64);
        let p = env.at(k);
        assert!((p.a - x).abs() < 1e-15 && (p.b - 0.5 - x).abs() < 1e-15);
        assert!((p.d - 1.0 - x).abs() < 1e-15 && (p.theta - 0.5 - x).abs() < 1e-15);
    }
}

#[test]
fn spectra_and_products() {
    for (m, rho, rho1) in [
        (Mat2::new(0.0, 0.5, 1.0, 0.5), 1.0, -0.5),
        (Mat2::new(1.0, 1.0, 1.0, 1.0), 2.0, 0.0),
        (Mat2::new(0.0, 2.0, 2.0, 0.0), 2.0, -2.0),
    ] {
        let s = spectrum(&m);
        assert!((s.rho - rho).abs() < 1e-15 && (s.rho1 - rho1).abs() < 1e-15);
    }
    let ones = Mat2::new(1.0, 1.0, 1.0, 1.0);
    let mut p = ScaledMat2::identity();
    for _ in 0..10_000 {
        p = p.mul_mat(&ones);
    }
    let got = p.log_scale() + p.core().m11.ln();
    assert!(rel(got, 9_999.0 * 2f64.ln()) < 1e-6);
    let m = Mat2::new(0.0, 0.5, 1.0, 0.5);
    let sq = ScaledMat2::from_mat(m).mul_mat(&m);
    assert!((sq.contract([1.0, 0.0], [1.0, 1.0]).to_f64() - 0.75).abs() < 1e-15);
    let items: Vec<_> = forward_pair(&half_env(), 2).collect();
    assert_eq!(items[0].prod.to_mat(), m);
    assert!((items[1].suffix_sum.contract([1.0, 0.0], [1.0, 1.0]).to_f64() - 2.25).abs() < 1e-15);
}

#[test]
fn transform_examples() {
    let t = build_a(&EnvSequence::mxt(1, 2.0, Sign::Minus).unwrap()).unwrap();
    for k in [1, 10, 500] {
        let b = t.env().at(k).b;
        let c = t.at(k).unwrap();
        assert!(rel(c.ta, b) < 1e-14 && c.tb == b && (c.td - 1.0).abs() < 1e-15);
    }
    let id = build_a(&EnvSequence::homogeneous(EnvParams::new(0.3, 1.0, 1.0, 0.0).unwrap()).unwrap()).unwrap();
    assert_eq!(id.a_matrix(3).unwrap(), Mat2::new(0.3, 1.0, 1.0, 0.0));
    assert_eq!(id.lambda(3), 1.0);
    let bad = EnvSequence::homogeneous(EnvParams::new(1.0, 1.0, 1.0, 2.0).unwrap()).unwrap();
    assert!(matches!(build_a(&bad), Err(Error::NonPositiveDtilde { .. })));
    assert_eq!(limit_a(&half()), Mat2::new(0.5, 0.5, 1.0, 0.0));
    let rho_a = spectrum(&t.a_matrix(100_000).unwrap()).rho;
    assert!((rho_a - spectrum(&limit_a(&half())).rho).abs() < 1e-3);
}

#[test]
fn direct_route_both_initial_types() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let env = random_env(&mut rng, 25);
        for initial in [Initial::E1, Initial::E2] {
            for row in eta_direct(&env, 20, initial) {
                let oracle = 1.0 - extinction_by_pgf(&env, row.n, initial);
                assert!(rel(row.eta, oracle) < 1e-10, "{initial:?} n={} {} {oracle}", row.n, row.eta);
            }
        }
    }
}

#[test]
fn cf_route_examples() {
    let env = EnvSequence::mxt(1, 1.0, Sign::Plus).unwrap();
    let direct: Vec<DistRow> = eta_direct(&env, 1000, Initial::E1).collect();
    for (d, c) in direct.iter().zip(cf_rows(&env, 1000)) {
        assert!(rel(c.eta, d.eta) < 1e-9);
    }
    assert!(cf_rows(&half_env(), 2)[1].mass.abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let env = random_env(&mut rng, 60);
        for c in cf_rows(&env, 50) {
            let slack = 1e-8 * c.mass_diff.abs() + 1e-14 * (c.eta + c.mass_diff.abs());
            assert!((c.mass - c.mass_diff).abs() <= slack, "n={} {} {}", c.n, c.mass, c.mass_diff);
        }
    }
}

#[test]
fn masses_sum_to_one() {
    for env in [half_env(), egc_1221(), EnvSequence::mxt(2, -1.0, Sign::Minus).unwrap()] {
        let mut acc = 0.0;
        for r in eta_direct(&env, 5_000, Initial::E1) {
            assert!(r.mass >= -1e-14);
            acc += r.mass;
            assert!((acc + r.eta - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn homogeneous_regimes() {
    let crit = half().mean_matrix();
    assert_eq!(regime(&crit), Regime::Crit);
    let c1 = 1e8 * homogeneous_mass(&crit, 10_000);
    let c2 = 4e8 * homogeneous_mass(&crit, 20_000);
    assert!(c1 > 0.0 && rel(c1, c2) < 1e-2);

    let sub = EnvParams::from_offspring(0.0, 0.2, 0.8).unwrap().mean_matrix();
    assert_eq!(regime(&sub), Regime::Sub);
    let rho = spectrum(&sub).rho;
    let scaled = |n: i32| homogeneous_mass(&sub, n as usize) / rho.powi(n);
    assert!(rel(scaled(60), scaled(120)) < 1e-6);
    assert_eq!(regime(&Mat2::new(1.0, 1.0, 1.0, 1.0)), Regime::Super);

    let row = eta_direct(&half_env(), 1, Initial::E1).next().unwrap();
    assert_eq!(homogeneous_eta(&crit, 1, Initial::E1), row.eta);
}

#[test]
fn approximant_examples() {
    let b = BSeq::explicit(vec![(2.0, 1.0, 1.0)], (3.0, 1.0, 1.0)).unwrap();
    let c = CFCoeffs::from_bseq(&b);
    assert!((approximant(&c, 1, 1).unwrap() - 0.5).abs() < 1e-15);
    let c = CFCoeffs::explicit(vec![], (2.0, 2.0)).unwrap();
    assert!((approximant(&c, 3, 4).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!(matches!(approximant(&c, 0, 4), Err(Error::IndexOrder { .. })));
}

#[test]
fn tail_bracket_examples() {
    for (al, be, want) in [(2.0, 2.0, 3f64.sqrt() - 1.0), (1.0, 1.0, (5f64.sqrt() - 1.0) / 2.0)] {
        let c = CFCoeffs::explicit(vec![], (al, be)).unwrap();
        let br = tail_bracket(&c, 1, 1e-14).unwrap();
        assert!(br.lo <= want * (1.0 + 1e-15) && want * (1.0 - 1e-15) <= br.hi);
        assert!((limit_tail(al, be) - want).abs() < 1e-15);
    }
    let t = build_a(&EnvSequence::mxt(1, 2.0, Sign::Plus).unwrap()).unwrap();
    let c = CFCoeffs::from_bseq(&BSeq::from_transform(&t));
    assert!((tail_bracket(&c, 10_000, 1e-12).unwrap().mid() - 1.0).abs() < 1e-2);
}

#[test]
fn f_matches_matrix_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let env = random_env(&mut rng, 20);
        let t = build_a(&env).unwrap();
        let mut prod = Mat2::IDENTITY;
        for s in fhg_stream(&t, 15) {
            let s = s.unwrap();
            prod = prod * t.a_matrix(s.n).unwrap();
            assert!(rel(s.f, prod.m12 / prod.m11) < 1e-9);
        }
    }
}

#[test]
fn g_limit_values() {
    assert_eq!(g_limit(&EnvParams::new(0.0, 1.0, 1.0, 2.0).unwrap()).unwrap(), 0.0);
    assert!((g_limit(&half()).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut seen = 0;
    while seen < 100 {
        let p = EnvParams::new(
            rng.random_range(0.0..2.0),
            rng.random_range(0.1..2.0),
            rng.random_range(0.1..2.0),
            rng.random_range(0.0..2.0),
        )
        .unwrap();
        if let Ok(g) = g_limit(&p) {
            let probabilistic = p.d + p.theta <= 1.0 + p.a + p.b;
            if probabilistic && (p.theta - p.b - 1.0).abs() > 1e-6 {
                assert!(g > 0.0 && g.is_finite(), "{p} {g}");
                seen += 1;
            }
        }
    }
    // Outside the probabilistic range the limit can be negative.
    let p = EnvParams::new(0.194_445, 0.766_450, 1.572_955, 1.960_431).unwrap();
    assert!(g_limit(&p).unwrap() < 0.0);
    assert!(matches!(
        g_limit(&EnvParams::new(1.0, 1.0, 1.0, 2.0).unwrap()),
        Err(Error::Precondition { check: "bd_gt_a_theta", .. })
    ));
}

#[test]
fn sig_ratio_examples() {
    assert!((sig_ratio_limit(&|_| 2.0, 2.0, 200).empirical - 1.0).abs() < 1e-12);
    assert!(sig_ratio_limit(&|_| 1.0, 1.0, 100_000).empirical < 1e-4);
    let s = sig_ratio_limit(&|n| 2.0 + 1.0 / n as f64, 2.0, 100_000);
    assert!((s.empirical - 1.0).abs() < 1e-2 && s.predicted == 1.0);
}

#[test]
fn sy_examples() {
    let crit = BSeq::explicit(vec![], (0.5, 0.5, 1.0)).unwrap();
    for row in sy_stream(&crit, 200) {
        let row = row.unwrap();
        assert!(rel(row.s.to_f64(), (row.n + 1) as f64) < 1e-13);
    }
    // rho = 2: S_n * 2^-n is the inverse-radius sum, which tends to 2.
    let sup = BSeq::explicit(vec![], (1.0, 1.0, 2.0)).unwrap();
    let last = sy_stream(&sup, 100).last().unwrap().unwrap();
    assert!((last.s.mul_f64(0.5f64.powi(100)).to_f64() - 2.0).abs() < 1e-6);

    let t = build_a(&EnvSequence::mxt(1, 1.0, Sign::Plus).unwrap()).unwrap();
    let rows: Vec<_> = sy_stream(&BSeq::from_transform(&t), 40_000).collect::<Result<Vec<_>, _>>().unwrap();
    let gaps: Vec<f64> = [2_500, 5_000, 10_000, 20_000].iter().map(|&n| (rows[2 * n - 1].y - rows[n - 1].y).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]) && gaps[3] < 1e-3, "{gaps:?}");
    let yb: Vec<f64> = [20_000, 40_000].iter().map(|&n| rows[n - 1].y_boundary.unwrap()).collect();
    assert!(rel(yb[0], yb[1]) < 1e-3);
}

#[test]
fn dxf_examples() {
    assert!(matches!(dxf_diagnostic(&BSeq::from_env(&EnvSequence::homogeneous(EnvParams::new(1.0, 2.0, 2.0, 1.0).unwrap()).unwrap()), 2..=50), Err(Error::ZeroDelta { .. })));
    assert!(matches!(
        dxf_diagnostic(&BSeq::from_env(&EnvSequence::mxt(1, 1.0, Sign::Plus).unwrap()), 2..=50),
        Err(Error::Precondition { check: "a_positive", .. })
    ));
    let r = dxf_diagnostic(&BSeq::from_env(&egc_1221()), 100..=10_000).unwrap();
    assert!((r.q_f - r.q_xi).abs() < 5e-2 && r.q_est.abs() <= 1.0 + 1e-6, "{} {}", r.q_f, r.q_xi);
}

#[test]
fn condition_examples() {
    let r = check_conditions(&EnvSequence::mxt(1, 2.0, Sign::Minus).unwrap(), None).unwrap();
    assert_eq!(r.b2_case, B2Case::A);
    assert!((r.b2_limit_est.0 - 1.0).abs() < 1e-3);
    let r = check_conditions(&half_env(), None).unwrap();
    assert_eq!((r.b1_verdict, r.b2_case, r.b1_abs_sum), (Verdict::Pass, B2Case::None, 0.0));
    let r = check_conditions(&egc_1221(), None).unwrap();
    assert!(matches!(r.b2_case, B2Case::B | B2Case::C) && r.tau_separated);
}

#[test]
fn predictor_examples() {
    for row in predictors(&half_env(), 500).unwrap() {
        let n1 = (row.n + 1) as f64;
        assert!(rel(row.pred_tail.to_f64(), 1.0 / n1) < 1e-13);
        assert!(rel(row.pred_mass.to_f64(), 1.0 / (n1 * n1)) < 1e-13);
    }
    let rows = predictors(&EnvSequence::homogeneous(EnvParams::new(1.0, 1.0, 1.0, 1.0).unwrap()).unwrap(), 300).unwrap();
    let last = &rows[299];
    assert!((last.pred_tail.to_f64() - 0.5).abs() < 1e-12);
    assert!(rel(last.pred_mass.mul_f64(2f64.powi(300)).to_f64(), 0.25) < 1e-12);
}

#[test]
fn fit_examples() {
    let s: Vec<(usize, f64)> = (1..=100_000).map(|n| (n, (n as f64).powi(-3))).collect();
    assert!((fit_rate(&s, RateModel::Power, None).unwrap().exponent - 3.0).abs() < 1e-6);
    let s: Vec<(usize, f64)> = (3..=100_000).map(|n| (n, 0.4 / (n as f64 * (n as f64).ln().powi(2)))).collect();
    assert!((fit_rate(&s, RateModel::PowerLog2, None).unwrap().c - 0.4).abs() < 1e-6);
    assert!(matches!(fit_rate(&s[..50], RateModel::Power, None), Err(Error::InsufficientRange { .. })));
}

fn mass_series(env: &EnvSequence) -> Vec<(usize, f64)> {
    cf_rows(env, 100_000).into_iter().map(|r| (r.n, r.mass)).collect()
}

// Observed decay of the point masses for the perturbed offspring family: a
// positive perturbation of the numerator probability lowers the radius below
// one and gives the faster rate.
#[test]
fn mxt_observed_rates() {
    let w = Some((1_000, 100_000));
    let plus2 = fit_rate(&mass_series(&EnvSequence::mxt(1, 2.0, Sign::Plus).unwrap()), RateModel::Power, w).unwrap();
    assert!((plus2.exponent - 4.0).abs() < 0.1);
    let minus2 = fit_rate(&mass_series(&EnvSequence::mxt(1, 2.0, Sign::Minus).unwrap()), RateModel::Power, w).unwrap();
    assert!((minus2.exponent - 2.0).abs() < 0.1);
    let minus1 = fit_rate(&mass_series(&EnvSequence::mxt(1, -1.0, Sign::Minus).unwrap()), RateModel::Power, w).unwrap();
    assert!((minus1.exponent - 3.0).abs() < 0.1);
    let s = mass_series(&EnvSequence::mxt(1, -1.0, Sign::Plus).unwrap());
    let pl = fit_rate(&s, RateModel::PowerLog2, w).unwrap();
    let pw = fit_rate(&s, RateModel::Power, w).unwrap();
    assert!(pl.resid < pw.resid, "{pl:?} {pw:?}");
}

#[test]
fn offspring_sampler_matches_pmf() {
    let law = OffspringLaw::new(0.15, 0.35, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for parent in [Initial::E1, Initial::E2] {
        let side = 40usize;
        let mut obs = vec![0u64; side * side + 1];
        let total = 1_000_000u64;
        for _ in 0..total {
            let (i, j) = law.sample(parent, &mut rng);
            let (i, j) = (i as usize, j as usize);
            if i < side && j < side {
                obs[i * side + j] += 1;
            } else {
                obs[side * side] += 1;
            }
        }
        let mut exp: Vec<f64> = (0..side * side).map(|c| total as f64 * law.pmf((c / side) as u64, (c % side) as u64, parent)).collect();
        exp.push(total as f64 - exp.iter().sum::<f64>());
        let (stat, dof) = chi_square(&obs, &exp, 5.0);
        assert!(stat < chi_square_quantile(dof, 3.090_232), "{parent:?}: {stat} on {dof}");
    }
}

#[test]
fn simulation_reproducible() {
    let env = half_env();
    let cfg = SimConfig { runs: 20_000, horizon: 15, seed: 3, initial: Initial::E1 };
    let a = run_sim(&env, &cfg).unwrap();
    assert_eq!(a, run_sim(&env, &cfg).unwrap());
    assert_ne!(a.hist, run_sim(&env, &SimConfig { seed: 4, ..cfg }).unwrap().hist);
    assert!(a.hist.iter().all(|&(n, _)| n != 2));
    let e2 = run_sim(&env, &SimConfig { initial: Initial::E2, ..cfg }).unwrap();
    assert!(e2.hist.iter().all(|&(n, _)| n != 1));
    assert!(run_sim(&egc_1221(), &cfg).is_err());
}
