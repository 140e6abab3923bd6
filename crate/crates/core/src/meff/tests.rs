use super::*;
use crate::numerics::bivariate_normal_cdf;
use crate::pair_copulas::{Family, PairCopula, Rotation};
use crate::vine_model::VineStructure;
use proptest::prelude::*;

fn gauss(rho: f64) -> PairCopula {
    if rho == 0.0 {
        return PairCopula::independence();
    }
    PairCopula::new(Family::Gaussian, Rotation::R0, rho).unwrap()
}

/// Equicorrelated Gaussian copula as a C-vine: the partial correlation given
/// k other members is ρ / (1 + kρ).
fn equicorrelated(dim: usize, rho: f64) -> VineModel {
    let copulas: Vec<Vec<PairCopula>> = (0..dim - 1)
        .map(|k| vec![gauss(rho / (1.0 + k as f64 * rho)); dim - 1 - k])
        .collect();
    VineModel::new(VineStructure::cvine(&(0..dim).collect::<Vec<_>>(), &copulas, dim - 1)).unwrap()
}

/// Independent equicorrelated blocks laid out contiguously.
fn block_model(blocks: usize, size: usize, rho: f64) -> VineModel {
    let dim = blocks * size;
    // D-vine within blocks, independent bridges; higher trees from a D-vine
    // on equicorrelated blocks would need many edges, so use tree 1 only when
    // size == 2 and full C-vines otherwise.
    if size == 2 {
        let mut t1 = Vec::new();
        for b in 0..blocks {
            t1.push(gauss(rho));
            if b + 1 < blocks {
                t1.push(PairCopula::independence());
            }
        }
        return VineModel::new(VineStructure::dvine(&(0..dim).collect::<Vec<_>>(), &[t1], 1)).unwrap();
    }
    assert_eq!(blocks, 1);
    equicorrelated(size, rho)
}

fn gaussian_gamma(rho: f64, alpha_loc: f64) -> f64 {
    let z = qnorm(1.0 - alpha_loc);
    bivariate_normal_cdf(z, z, rho).unwrap() / (1.0 - alpha_loc)
}

#[test]
fn marginal_nulls_invert() {
    for m in [MarginalNull::StdNormal, MarginalNull::HalfNormal] {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert!((m.cdf(m.quantile(p)) - p).abs() < 1e-9, "{m} at {p}");
        }
        for a in [1e-6, 0.0034, 0.05] {
            assert!((m.critical_value(a) - m.quantile(1.0 - a)).abs() < 1e-6);
            assert!((1.0 - m.cdf(m.critical_value(a)) - a).abs() < 1e-12);
        }
        assert_eq!(m.name().parse::<MarginalNull>().unwrap(), m);
    }
    assert_eq!(MarginalNull::HalfNormal.cdf(-1.0), 0.0);
    assert!("normal".parse::<MarginalNull>().is_err());
    assert_eq!(serde_json::to_string(&MarginalNull::HalfNormal).unwrap(), "\"half_normal\"");
}

#[test]
fn gamma_mc_examples() {
    let a = 0.05;
    let n = 100_000;
    let ind = sample(&equicorrelated(2, 0.0), n, RngStream::new(1, 0)).unwrap();
    let g = gamma_mc(&ind, &[1.0 - a; 2], 1, 2).unwrap();
    assert!((g - (1.0 - a)).abs() < 0.01, "{g}");

    let col: Vec<f64> = ind.column(0);
    let comonotone = Matrix::from_columns(&[col.clone(), col]).unwrap();
    assert_eq!(gamma_mc(&comonotone, &[1.0 - a; 2], 1, 2).unwrap(), 1.0);

    // on the statistic scale with standard normal marginals
    let z = sample_with(&equicorrelated(2, 0.9), n, 2);
    let c = MarginalNull::StdNormal.critical_value(a);
    let g = gamma_mc(&z, &[c, c], 1, 2).unwrap();
    let oracle = gaussian_gamma(0.9, a);
    let se = (oracle * (1.0 - oracle) / (n as f64 * (1.0 - a))).sqrt();
    assert!((g - oracle).abs() < 3.0 * se, "{g} vs {oracle} ± {se}");

    assert!(matches!(gamma_mc(&z, &[-10.0, -10.0], 1, 2), Err(Error::Degenerate(_))));
    assert!(gamma_mc(&z, &[c, c], 0, 2).is_err());
    // order 1 is the marginal probability
    let g1 = gamma_mc(&z, &[c, c], 0, 1).unwrap();
    assert!((g1 - (1.0 - a)).abs() < 0.01);
}

fn sample_with(model: &VineModel, n: usize, stream: u64) -> Matrix {
    let normal = vec![MarginalNull::StdNormal; model.dim()];
    crate::sampler::sample_with_marginals(model, &normal, n, RngStream::new(7, stream)).unwrap()
}

#[test]
fn gamma_copula_examples() {
    let a = 0.05;
    let product = |u: &[f64]| u.iter().product::<f64>();
    for order in 2..5 {
        assert!((gamma_copula(product, a, order).unwrap() - (1.0 - a)).abs() < 1e-15);
    }
    let comonotone = |u: &[f64]| u.iter().copied().fold(1.0, f64::min);
    assert_eq!(gamma_copula(comonotone, a, 2).unwrap(), 1.0);
    let gaussian = |u: &[f64]| bivariate_normal_cdf(qnorm(u[0]), if u[1] >= 1.0 { 40.0 } else { qnorm(u[1]) }, 0.9).unwrap();
    let g = gamma_copula(gaussian, a, 2).unwrap();
    assert!((g - gaussian_gamma(0.9, a)).abs() < 1e-12);
    assert!(gamma_copula(product, a, 1).is_err());
    assert!(matches!(gamma_copula(|_: &[f64]| 0.0, a, 2), Err(Error::Degenerate(_))));
}

#[test]
fn gamma_mc_agrees_with_the_copula_identity() {
    let n = 200_000;
    for rho in [0.0, 0.5, 0.9] {
        let u = sample(&equicorrelated(2, rho), n, RngStream::new(5, (rho * 10.0) as u64)).unwrap();
        for a in [0.001, 0.01, 0.05] {
            let mc = gamma_mc(&u, &[1.0 - a; 2], 1, 2).unwrap();
            let oracle = gaussian_gamma(rho, a);
            let se = (oracle * (1.0 - oracle) / (n as f64 * (1.0 - a))).sqrt();
            assert!((mc - oracle).abs() < 3.0 * se, "rho {rho}, a {a}: {mc} vs {oracle} ± {se}");
        }
    }
}

#[test]
fn block_meff_extremes() {
    let a = 0.01;
    let u = sample(&equicorrelated(4, 0.0), 100_000, RngStream::new(3, 0)).unwrap();
    for optimized in [false, true] {
        let m = meff_block(&u, &[0, 1, 2, 3], 2, a, optimized).unwrap();
        assert!((m - 4.0).abs() < 0.1, "{m}");
    }
    assert_eq!(meff_block(&u, &[2], 2, a, true).unwrap(), 1.0);

    let col = u.column(0);
    let comonotone = Matrix::from_columns(&[col.clone(), col.clone(), col]).unwrap();
    assert_eq!(meff_block(&comonotone, &[0, 1, 2], 2, a, false).unwrap(), 1.0);
    assert_eq!(meff_block(&comonotone, &[0, 1, 2], 3, a, false).unwrap(), 1.0);

    assert!(meff_block(&u, &[], 2, a, false).is_err());
    assert!(meff_block(&u, &[0, 1], 3, a, true).is_err());
    assert!(meff_block(&u, &[0, 1], 1, a, false).is_err());
    assert!(meff_block(&u, &[0, 1], 2, 0.0, false).is_err());
}

#[test]
fn gaussian_block_matches_the_pairwise_oracle() {
    // Equicorrelated ρ = 0.9 block of five: every κ_j is the pairwise one.
    let a = 0.0034;
    let u = sample(&equicorrelated(5, 0.9), 200_000, RngStream::new(11, 0)).unwrap();
    let oracle_block = |a: f64| 1.0 + 4.0 * gaussian_gamma(0.9, a).ln() / (-a).ln_1p();
    let plain = meff_block(&u, &[0, 1, 2, 3, 4], 2, a, false).unwrap();
    assert!((plain - oracle_block(a)).abs() < 0.1, "{plain} vs {}", oracle_block(a));
    let optimized = meff_block(&u, &[0, 1, 2, 3, 4], 2, a, true).unwrap();
    assert!(optimized <= plain);

    // three such blocks at their own calibrated level
    let mut level = 0.05;
    for _ in 0..50 {
        level = -((0.95f64).ln() / (3.0 * oracle_block(level))).exp_m1();
    }
    let total = 3.0 * oracle_block(level);
    assert!((8.6..=8.9).contains(&total), "{total}");
}

#[test]
fn meff_decreases_with_dependence() {
    let a = 0.01;
    let mut last = f64::INFINITY;
    for rho in [0.0, 0.3, 0.6, 0.9] {
        // common random numbers: same stream for every ρ
        let u = sample(&block_model(2, 2, rho), 100_000, RngStream::new(13, 0)).unwrap();
        let m = meff_block(&u, &[0, 1], 2, a, true).unwrap() + meff_block(&u, &[2, 3], 2, a, true).unwrap();
        assert!(m < last, "rho {rho}: {m} !< {last}");
        last = m;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn meff_bounds_and_optimized_dominance(
        rhos in proptest::collection::vec(-0.5f64..0.95, 3..6),
        a in 0.001f64..0.1,
        seed in 0u64..1000,
    ) {
        let dim = rhos.len() + 1;
        let model = VineModel::new(VineStructure::dvine(
            &(0..dim).collect::<Vec<_>>(),
            &[rhos.iter().map(|&r| gauss(r)).collect()],
            1,
        )).unwrap();
        let u = sample(&model, 20_000, RngStream::new(seed, 0)).unwrap();
        let block: Vec<usize> = (0..dim).rev().collect();
        let plain = meff_block(&u, &block, 2, a, false).unwrap();
        let optimized = meff_block(&u, &block, 2, a, true).unwrap();
        for m in [plain, optimized] {
            prop_assert!((1.0..=dim as f64).contains(&m));
        }
        prop_assert!(optimized <= plain + 1e-12);
        let third = meff_block(&u, &block, 3, a, false).unwrap();
        prop_assert!((1.0..=dim as f64).contains(&third));
    }
}

fn singletons(dim: usize) -> Grouping {
    Grouping {
        blocks: (0..dim).map(|j| vec![j]).collect(),
        target_size: 1,
        leftovers_assigned: false,
    }
}

#[test]
fn sidak_baselines() {
    let settings = CalibrationSettings::default();
    let ind15 = VineModel::new(VineStructure::dvine(&(0..15).collect::<Vec<_>>(), &[], 1)).unwrap();
    let cal = calibrate(&singletons(15), &[MarginalNull::HalfNormal; 15], &ind15, &settings, RngStream::new(1, 0)).unwrap();
    assert!((cal.alpha_loc - (1.0 - 0.95f64.powf(1.0 / 15.0))).abs() < 1e-12);
    assert!(cal.critical_values.iter().all(|&c| (c - 2.928).abs() < 0.002), "{:?}", cal.critical_values);
    assert_eq!(cal.total_meff, 15.0);
    assert_eq!(cal.mc_size, 0);

    let ind9 = VineModel::new(VineStructure::dvine(&(0..9).collect::<Vec<_>>(), &[], 1)).unwrap();
    let cal = calibrate(&singletons(9), &[MarginalNull::StdNormal; 9], &ind9, &settings, RngStream::new(1, 0)).unwrap();
    assert!((cal.critical_values[0] - 2.531).abs() < 0.002, "{}", cal.critical_values[0]);
}

#[test]
fn single_statistic_uses_alpha() {
    let one = Grouping {
        blocks: vec![vec![0], vec![1]],
        target_size: 1,
        leftovers_assigned: false,
    };
    let model = equicorrelated(2, 0.5);
    let settings = CalibrationSettings { alpha: 0.05, ..Default::default() };
    let cal = calibrate(&one, &[MarginalNull::StdNormal; 2], &model, &settings, RngStream::new(1, 0)).unwrap();
    // two singleton blocks are the two-test Šidák correction
    assert!((cal.alpha_loc - (1.0 - 0.95f64.sqrt())).abs() < 1e-12);

    let ind1 = Grouping {
        blocks: vec![vec![0, 1]],
        target_size: 2,
        leftovers_assigned: false,
    };
    let comonotone = VineModel::new(VineStructure::dvine(&[0, 1], &[vec![gauss(0.999999)]], 1)).unwrap();
    let cal = calibrate(&ind1, &[MarginalNull::StdNormal; 2], &comonotone, &CalibrationSettings { mc_size: 50_000, ..settings }, RngStream::new(2, 0)).unwrap();
    assert!((cal.alpha_loc - 0.05).abs() < 2e-3, "{}", cal.alpha_loc);
    assert!((cal.critical_values[0] - MarginalNull::StdNormal.quantile(1.0 - cal.alpha_loc)).abs() < 1e-9);
}

#[test]
fn calibration_reaches_the_fixed_point() {
    let model = equicorrelated(5, 0.9);
    let grouping = Grouping {
        blocks: vec![vec![0, 1, 2, 3, 4]],
        target_size: 5,
        leftovers_assigned: false,
    };
    for (optimized, order) in [(true, 2), (false, 2), (false, 3)] {
        let settings = CalibrationSettings {
            alpha: 0.05,
            order,
            optimized,
            mc_size: 50_000,
        };
        let cal = calibrate(&grouping, &[MarginalNull::HalfNormal; 5], &model, &settings, RngStream::new(4, 0)).unwrap();
        assert!((cal.bound - 0.05).abs() <= CALIBRATION_TOLERANCE, "{cal:?}");
        assert!((1.0 - (1.0 - cal.alpha_loc).powf(cal.total_meff) - 0.05).abs() <= CALIBRATION_TOLERANCE);
        assert!(cal.alpha_loc >= 1.0 - 0.95f64.powf(0.2));
        assert!(cal.total_meff >= 1.0 && cal.total_meff <= 5.0);
        // recomputing on the same sample reproduces the block value
        let u = sample(&model, cal.mc_size, cal.rng.child(0)).unwrap();
        let again = meff_block(&u, &grouping.blocks[0], order, cal.alpha_loc, optimized).unwrap();
        assert_eq!(again, cal.block_meffs[0]);
        let back = Calibration::from_json(&cal.to_json().unwrap()).unwrap();
        assert_eq!(back, cal);
    }
}

#[test]
fn calibration_rejects_bad_settings() {
    let model = equicorrelated(2, 0.5);
    let g = singletons(2);
    let m = [MarginalNull::StdNormal; 2];
    let bad = |s: CalibrationSettings| calibrate(&g, &m, &model, &s, RngStream::new(1, 0));
    assert!(matches!(bad(CalibrationSettings { alpha: 1.0, ..Default::default() }), Err(Error::Config(_))));
    assert!(matches!(bad(CalibrationSettings { order: 3, ..Default::default() }), Err(Error::Config(_))));
    assert!(calibrate(&g, &m[..1], &model, &CalibrationSettings::default(), RngStream::new(1, 0)).is_err());
    let partial = Grouping {
        blocks: vec![vec![0]],
        target_size: 1,
        leftovers_assigned: false,
    };
    assert!(calibrate(&partial, &m, &model, &CalibrationSettings::default(), RngStream::new(1, 0)).is_err());
}

#[test]
fn decisions() {
    let ind = VineModel::new(VineStructure::dvine(&[0, 1, 2], &[], 1)).unwrap();
    let cal = calibrate(&singletons(3), &[MarginalNull::StdNormal; 3], &ind, &CalibrationSettings::default(), RngStream::new(1, 0)).unwrap();
    let c = cal.critical_values.clone();
    let d = decide(&[-1e300, -1e300, -1e300], &cal).unwrap();
    assert_eq!(d, Decision { reject: vec![false; 3], global: false });
    let d = decide(&[c[0] + 1.0, 0.0, 0.0], &cal).unwrap();
    assert_eq!(d, Decision { reject: vec![true, false, false], global: true });
    let d = decide(&c, &cal).unwrap();
    assert!(!d.global);
    assert!(matches!(decide(&[0.0], &cal), Err(Error::Config(_))));
}
