use catenc::data::Dataset;
use catenc::encoders::{contrast_encode, ContrastScheme, EncoderSpec, Method};
use catenc::eval::{knn_regress, paired_t_test, stratified_kfold};
use catenc::numlin::mnl;
use catenc::numlin::svd::{pseudo_inverse, svd, PINV_RTOL};
use catenc::oracle::{build_world, check_world, mu_direct, TOL_LOWRANK, TOL_MEANS, TOL_PSI};
use catenc::par::Execution;
use catenc::rng;
use catenc::sim::{draw_params, simulate, Setup, SimConfig, Slopes};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::stream(seed, 0);
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

/// Small dataset in which every one of `m` levels appears.
fn dataset(n: usize, m: usize, p: usize, seed: u64) -> Dataset {
    let mut r = rng::stream(seed, 1);
    let g: Vec<usize> = (0..n)
        .map(|i| if i < m { i } else { r.random_range(0..m) })
        .collect();
    let x = DMatrix::from_fn(n, p, |i, j| {
        g[i] as f64 * 0.3 * (j as f64 + 1.0) + r.random_range(-1.0..1.0)
    });
    let y = (0..n)
        .map(|i| x[(i, 0)] + g[i] as f64 + r.random_range(-0.5..0.5))
        .collect();
    Dataset::new(x, g, Some(y), (0..m).map(|c| format!("c{c}")).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn folds_never_test_unseen_categories(n in 10usize..300, levels in 1usize..40, seed in any::<u64>()) {
        let mut r = rng::stream(seed, 0);
        let g: Vec<usize> = (0..n).map(|_| r.random_range(0..levels)).collect();
        let plan = stratified_kfold(&g, 4, &mut rng::stream(seed, 1)).unwrap();
        let mut sizes = [0usize; 4];
        for f in 0..4 {
            let mut seen = vec![false; levels];
            plan.train_rows(f).iter().for_each(|&i| seen[g[i]] = true);
            for i in plan.test_rows(f) {
                prop_assert!(seen[g[i]]);
                sizes[f] += 1;
            }
        }
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn contrast_columns_sum_to_zero(m in 2usize..30) {
        for scheme in [ContrastScheme::Deviation, ContrastScheme::Difference, ContrastScheme::Helmert, ContrastScheme::Repeated] {
            let c = contrast_encode(scheme, m).unwrap();
            for j in 0..c.ncols() {
                prop_assert!(c.column(j).sum().abs() <= 1e-12);
            }
        }
        let h = contrast_encode(ContrastScheme::Helmert, m).unwrap();
        let gram = h.transpose() * &h;
        for a in 0..m - 1 {
            for b in 0..a {
                prop_assert!(gram[(a, b)].abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn encodings_depend_only_on_the_category(n in 20usize..80, m in 2usize..6, seed in any::<u64>()) {
        let d = dataset(n, m, 3, seed);
        for method in Method::ALL {
            let enc = EncoderSpec::new(method).fit(&d).unwrap();
            let s = enc.transform(&d).unwrap().s;
            let mut first = vec![None; m];
            for i in 0..n {
                match first[d.g()[i]] {
                    None => first[d.g()[i]] = Some(i),
                    Some(r) => prop_assert!(s.row(i) == s.row(r), "{method} row {i}"),
                }
            }
        }
    }

    #[test]
    fn lowrank_full_rank_keeps_column_space(m in 2usize..8, p in 2usize..6, seed in any::<u64>()) {
        let d = dataset(60, m, p, seed);
        let k = m.min(p);
        let enc = EncoderSpec::new(Method::Lowrank).with_k(k).fit(&d).unwrap();
        let means = EncoderSpec::new(Method::Means).fit(&d).unwrap();
        // the rows of Ωᵀ must lie in the span of the encoding columns
        let u = enc.table().clone();
        let omega_t = means.table().clone();
        let proj = &u * pseudo_inverse(&u, PINV_RTOL).unwrap();
        let resid = (&proj * &omega_t - &omega_t).amax();
        prop_assert!(resid <= 1e-8, "{resid}");
    }

    #[test]
    fn knn_ignores_affine_rescaling(seed in any::<u64>(), scale in 0.01f64..100.0, shift in -50.0f64..50.0, k in 1usize..10) {
        let train = matrix(40, 3, seed);
        let test = matrix(10, 3, seed ^ 1);
        let y: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let base = knn_regress(&train, &y, &test, k, Execution::Sequential).unwrap();
        let (mut t2, mut s2) = (train.clone(), test.clone());
        t2.column_mut(1).iter_mut().for_each(|v| *v = *v * scale + shift);
        s2.column_mut(1).iter_mut().for_each(|v| *v = *v * scale + shift);
        let moved = knn_regress(&t2, &y, &s2, k, Execution::Sequential).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn t_test_is_antisymmetric(a in prop::collection::vec(-10.0f64..10.0, 2..30), seed in any::<u64>()) {
        let mut r = rng::stream(seed, 0);
        let b: Vec<f64> = a.iter().map(|v| v + r.random_range(-3.0..3.0)).collect();
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert_eq!(ab.p, ba.p);
        prop_assert!((0.0..=1.0).contains(&ab.p));
    }

    #[test]
    fn pseudo_inverse_penrose(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
        let m = matrix(rows, cols, seed);
        let pi = pseudo_inverse(&m, PINV_RTOL).unwrap();
        prop_assert!((&m * &pi * &m - &m).amax() <= 1e-8);
        prop_assert!((&pi * &m * &pi - &pi).amax() <= 1e-8);
        let mp = &m * &pi;
        let pm = &pi * &m;
        prop_assert!((&mp - mp.transpose()).amax() <= 1e-8);
        prop_assert!((&pm - pm.transpose()).amax() <= 1e-8);
    }

    #[test]
    fn svd_reconstructs_and_is_deterministic(rows in 1usize..10, cols in 1usize..10, seed in any::<u64>()) {
        let m = matrix(rows, cols, seed);
        let a = svd(&m).unwrap();
        prop_assert!((a.reconstruct() - &m).amax() <= 1e-10 * m.amax().max(1.0));
        prop_assert!(a == svd(&m.clone()).unwrap());
    }

    #[test]
    fn mnl_improves_on_zero(n in 20usize..120, m in 2usize..5, seed in any::<u64>()) {
        let d = dataset(n, m, 2, seed);
        let model = mnl::fit_mnl(d.x(), d.g(), m, 1e-8).unwrap();
        let zero = DMatrix::zeros(m, 3);
        let at_zero = mnl::objective(d.x(), d.g(), &zero, 1e-8);
        let at_fit = mnl::objective(d.x(), d.g(), &model.theta, 1e-8);
        prop_assert!(at_fit <= at_zero + 1e-9);
    }

    #[test]
    fn oracle_identities_hold(k in 1usize..5, extra in 0usize..6, support_extra in 0usize..4, seed in any::<u64>()) {
        let m = k + extra;
        let w = build_world(k, m, k + 1, k + support_extra, &mut rng::stream(seed, 0)).unwrap();
        let c = check_world(&w, Execution::Sequential).unwrap();
        prop_assert!(c.decomposition <= 1e-12);
        prop_assert!(c.psi <= TOL_PSI && c.means <= TOL_MEANS && c.lowrank <= TOL_LOWRANK);
        // categories with equal Ψ columns have equal regression functions
        for g in 0..m {
            for h in 0..g {
                if (w.psi.column(g) - w.psi.column(h)).amax() == 0.0 {
                    for xi in 0..w.support_size() {
                        let a = mu_direct(&w, xi, g).unwrap();
                        let b = mu_direct(&w, xi, h).unwrap();
                        prop_assert!((a - b).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn slopes_have_unit_norm(seed in any::<u64>(), latent in 1usize..5, p in 3usize..12) {
        for setup in [Setup::GlobalLinear, Setup::LatentLinear, Setup::LatentPiecewise] {
            let cfg = SimConfig::new(setup, 100, latent, latent * 2, p).with_seed(seed);
            let params = draw_params(&cfg, &mut rng::stream(seed, 0)).unwrap();
            let rows: Vec<DMatrix<f64>> = match params.slopes {
                Slopes::Global { beta } => vec![DMatrix::from_row_slice(1, p, beta.as_slice())],
                Slopes::Latent { beta } => vec![beta],
                Slopes::Piecewise { plus, minus, .. } => vec![plus, minus],
            };
            for mat in rows {
                for r in 0..mat.nrows() {
                    prop_assert!((mat.row(r).norm() - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn simulated_group_shares_match_p_assign() {
    let cfg = SimConfig::new(Setup::GlobalLinear, 100_000, 4, 20, 3).with_seed(8);
    let out = simulate(&cfg).unwrap();
    let in_block = out
        .dataset
        .g()
        .iter()
        .zip(&out.latent)
        .filter(|(&g, &l)| g / 5 == l)
        .count();
    let share = in_block as f64 / 100_000.0;
    let se = (0.9f64 * 0.1 / 100_000.0).sqrt();
    assert!((share - 0.9).abs() <= 4.0 * se, "{share}");
}
