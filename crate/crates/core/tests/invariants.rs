use mapsurrogate::bspline::{BsplineBasis, GramMatrix, HatBasis};
use mapsurrogate::design::{is_latin, lhs_maximin, maximin_criterion, random_lhs, CellSampling, SaConfig};
use mapsurrogate::fpca::fit_fpca;
use mapsurrogate::gp::{GpConfig, GpModel};
use mapsurrogate::select::{energy_select, SelectionTarget};
use mapsurrogate::sensitivity::{gsi_from_components, saltelli_sobol, SobolConfig};
use mapsurrogate::wavelet::{filter_bank, forward, inverse, WaveletSpec};
use mapsurrogate::{Domain, GridSpec, WaveletFamily};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn family() -> impl Strategy<Value = WaveletFamily> {
    prop_oneof![Just(WaveletFamily::Haar), Just(WaveletFamily::D4)]
}

fn sorted_knots() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.05f64..2.0, 2..9).prop_map(|gaps| {
        let mut k = vec![-1.0];
        for g in gaps {
            k.push(k.last().unwrap() + g);
        }
        k
    })
}

#[test]
fn filter_banks_are_orthonormal() {
    for f in [WaveletFamily::Haar, WaveletFamily::D4] {
        assert!(filter_bank(f).constraint_residual() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dwt_is_orthonormal(
        (r_exp, c_exp) in (1u32..6, 1u32..6),
        fam in family(),
        seed in 0u64..1000,
    ) {
        let (r, c) = (1usize << r_exp, 1usize << c_exp);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..r * c).map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0)).collect();
        let levels = WaveletSpec::max_levels(r, c);
        let coeffs = forward(&values, r, c, WaveletSpec::new(fam, levels)).unwrap();
        prop_assert_eq!(coeffs.len(), r * c);
        let e: f64 = values.iter().map(|v| v * v).sum();
        prop_assert!((coeffs.sum_squares() - e).abs() <= 1e-10 * e);
        let back = inverse(&coeffs, fam).unwrap();
        for (a, b) in values.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn hats_partition_unity(knots in sorted_knots(), u in 0.0f64..1.0) {
        let hat = HatBasis::new(knots.clone()).unwrap();
        let z = knots[0] + u * (knots[knots.len() - 1] - knots[0]);
        let e = hat.eval(z).unwrap();
        prop_assert!(e.iter().all(|(_, v)| *v >= 0.0));
        prop_assert!((e[0].1 + e[1].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gram_is_spd_tridiagonal(knots in sorted_knots()) {
        let g = HatBasis::new(knots).unwrap().gram();
        let k = g.nrows();
        for i in 0..k {
            for j in 0..k {
                prop_assert_eq!(g[(i, j)], g[(j, i)]);
                if i.abs_diff(j) > 1 {
                    prop_assert_eq!(g[(i, j)], 0.0);
                }
            }
        }
        prop_assert!(g.cholesky().is_some());
    }

    #[test]
    fn tensor_gram_matches_kronecker(k1 in 2usize..6, k2 in 2usize..6) {
        let dom = Domain { z1: (0.0, 2.0), z2: (-1.0, 3.0) };
        let b = BsplineBasis::uniform(&dom, k1, k2).unwrap();
        let dense = b.gram().unwrap().to_dense();
        let kron = GramMatrix::tensor(b.axis1.gram(), b.axis2.gram()).unwrap().to_dense();
        prop_assert!((dense.clone() - kron).abs().max() < 1e-14);
        let grid = GridSpec::new(7, 9, dom).unwrap();
        let phi = b.eval_basis(&grid).unwrap();
        for row in phi.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_selection_invariants(seed in 0u64..500, p in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = DMatrix::from_fn(6, 12, |_, j| rand::Rng::random_range(&mut rng, -1.0..1.0) / (1.0 + j as f64));
        let s = energy_select(&coeffs, SelectionTarget::Proportion(p)).unwrap();
        prop_assert!((s.lambda.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let order: Vec<usize> = s.kept.iter().chain(&s.discarded).copied().collect();
        for w in order.windows(2) {
            let (a, b) = (s.lambda[w[0]], s.lambda[w[1]]);
            prop_assert!(a > b || (a == b && w[0] < w[1]));
        }
        let kept = s.retained_score();
        prop_assert!(kept <= p + 1e-12 || s.n_kept() == 1);
        if let Some(&next) = s.discarded.first() {
            prop_assert!(kept + s.lambda[next] > p);
        }
    }

    #[test]
    fn pca_scores_are_decorrelated(seed in 0u64..300, n_pc in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 12;
        let k = 5;
        let coeffs = DMatrix::from_fn(n, k, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let hat = HatBasis::uniform(0.0, 1.0, k).unwrap();
        let m = fit_fpca(&coeffs, GramMatrix::dense(hat.gram()).unwrap(), n_pc).unwrap();
        let s = m.scores();
        let cov = s.transpose() * s / (n - 1) as f64;
        for l in 0..n_pc {
            prop_assert!(s.column(l).sum().abs() < 1e-10);
            prop_assert!((cov[(l, l)] - m.eigenvalues()[l]).abs() <= 1e-8 * m.eigenvalues()[0]);
            for q in 0..l {
                prop_assert!(cov[(l, q)].abs() <= 1e-8 * m.eigenvalues()[0]);
            }
        }
        let frac: f64 = m.retained_eigenvalues().iter().sum::<f64>() / m.eigenvalues().iter().sum::<f64>();
        prop_assert!((frac - m.explained_inertia()).abs() < 1e-12);
    }

    #[test]
    fn lhs_columns_are_permutations(n in 2usize..40, d in 1usize..6, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for cells in [CellSampling::Midpoint, CellSampling::Random] {
            let x = random_lhs(n, d, cells, &mut rng);
            prop_assert!(is_latin(&x));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn annealing_never_worsens_the_start(n in 4usize..20, d in 2usize..5, seed in 0u64..1000) {
        let cfg = SaConfig { stall_factor: 5, max_proposals: 5000, ..SaConfig::default() };
        let des = lhs_maximin(n, d, seed, &cfg).unwrap();
        prop_assert!(is_latin(&des.points));
        let c = maximin_criterion(&des.points);
        if let Some(start) = des.start_criterion {
            prop_assert!(c >= start - 1e-12);
        }
    }

    #[test]
    fn gp_interpolates(seed in 0u64..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: DMatrix<f64> = DMatrix::from_fn(15, 2, |_, _| rand::Rng::random_range(&mut rng, 0.0..1.0));
        let y: Vec<f64> = (0..15).map(|i| (4.0 * x[(i, 0)]).cos() + x[(i, 1)]).collect();
        let gp = GpModel::fit(&x, &y, &[(0.0, 1.0); 2], &GpConfig { multistarts: 2, ..GpConfig::default() }).unwrap();
        let (mean, var) = gp.predict(&x).unwrap();
        let shift = gp.nugget_shifts();
        for i in 0..15 {
            // interpolating up to the nugget term
            prop_assert!((mean[i] - (y[i] - shift[i])).abs() < 1e-6);
            prop_assert!(shift[i].abs() < 1e-3);
            prop_assert!(var[i] >= 0.0);
        }
    }

    #[test]
    fn additive_models_have_no_interactions(a in 0.2f64..3.0, b in 0.2f64..3.0, seed in 0u64..100) {
        let cfg = SobolConfig { n0: 4000, bootstrap: 0, seed, ..SobolConfig::default() };
        let est = saltelli_sobol(
            |x| Ok((0..x.nrows()).map(|r| a * x[(r, 0)] + b * x[(r, 1)].powi(2) + x[(r, 2)].sin()).collect()),
            &[(-1.0, 1.0); 3],
            &cfg,
        )
        .unwrap();
        prop_assert!((est.first_order.iter().sum::<f64>() - 1.0).abs() < 0.06);
        for i in 0..3 {
            prop_assert!((est.total[i] - est.first_order[i]).abs() < 0.04);
        }
        let gsi = gsi_from_components(vec![est.clone(), est], &[2.0, 1.0], None, 0.95).unwrap();
        prop_assert!(gsi.first_order.iter().chain(&gsi.total).all(|v| *v > -0.05 && *v < 1.05));
    }
}
