use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use lamn_core::exact_oracle::GaussianObsModel;
use lamn_core::harness::KRule;
use lamn_core::model::by_name;
use lamn_core::quasi_score::{xi, xi_obs, BlockForms, TriKMatrix};
use lamn_core::simulate::{augment, observe, simulate_path};
use lamn_core::{estimate_augmented, estimate_means_only, WeightMeasure};

fn measure_strategy() -> impl Strategy<Value = WeightMeasure> {
    (
        prop_oneof![Just(0.0), Just(1.0), 0.05f64..0.95],
        prop::collection::vec((0.0f64..=1.0, 0.05f64..1.0), 0..5),
    )
        .prop_filter_map("needs a valid measure", |(lam, raw)| {
            let mut atoms = raw;
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            atoms.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-3);
            if atoms.is_empty() {
                return (lam == 1.0).then(WeightMeasure::lebesgue);
            }
            if lam == 1.0 {
                return None;
            }
            let total: f64 = atoms.iter().map(|a| a.1).sum();
            let scaled: Vec<(f64, f64)> =
                atoms.iter().map(|&(p, w)| (p, (1.0 - lam) * w / total)).collect();
            if lam == 0.0 {
                WeightMeasure::atomic(scaled).ok()
            } else {
                WeightMeasure::mixture(lam, scaled).ok()
            }
        })
}

fn dense(m: &TriKMatrix) -> DMatrix<f64> {
    let n = m.size();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            m.diag()[i]
        } else if i.abs_diff(j) == 1 {
            m.off()
        } else {
            0.0
        }
    })
}

/// `Σ₀[i, j]` by brute-force double sums over a midpoint discretization of μ.
fn brute_force_cov(measure: &WeightMeasure, n: usize, i: usize, j: usize, grid: usize) -> f64 {
    let mut points: Vec<(f64, f64)> = measure.atoms().iter().map(|a| (a.position, a.weight)).collect();
    let lam = measure.lebesgue_weight();
    if lam > 0.0 {
        points.extend((0..grid).map(|g| ((g as f64 + 0.5) / grid as f64, lam / grid as f64)));
    }
    let mut acc = 0.0;
    for &(s, ws) in &points {
        for &(t, wt) in &points {
            acc += ws * wt * (s + i as f64).min(t + j as f64);
        }
    }
    acc / n as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficients_are_consistent(mu in measure_strategy()) {
        let v = mu.v_coefficients();
        prop_assert!((v.v1 + v.v2 + 2.0 * v.c - 1.0).abs() < 1e-12);
        prop_assert!(v.v1 > 0.0 && v.v2 > 0.0 && v.c >= 0.0);
        prop_assert!(v.determinant() > 0.0);
        let q = mu.v_coefficients_quadrature(10_000);
        prop_assert!((q.v1 - v.v1).abs() < 1e-8, "{:?} vs {:?}", q, v);
        prop_assert!((q.v2 - v.v2).abs() < 1e-8);
        prop_assert!((q.c - v.c).abs() < 1e-8);
    }

    #[test]
    fn measure_roundtrips_through_json(mu in measure_strategy()) {
        let back: WeightMeasure = mu.to_string().parse().unwrap();
        prop_assert_eq!(back, mu);
    }

    #[test]
    fn local_mean_is_affine_equivariant(
        mu in measure_strategy(),
        seg in prop::collection::vec(-5.0f64..5.0, 2..40),
        scale in -3.0f64..3.0,
        shift in -10.0f64..10.0,
    ) {
        let base = mu.local_mean(&seg).unwrap();
        let moved: Vec<f64> = seg.iter().map(|x| scale * x + shift).collect();
        let got = mu.local_mean(&moved).unwrap();
        prop_assert!((got - (scale * base + shift)).abs() < 1e-9);
        let lo = seg.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(base >= lo - 1e-12 && base <= hi + 1e-12);
    }

    #[test]
    fn k_matrices_are_positive_definite(mu in measure_strategy(), k in 1usize..40) {
        let v = mu.v_coefficients();
        let f = TriKMatrix::k_tilde(k, &v).unwrap().factor().unwrap();
        let eig = dense(&TriKMatrix::k_tilde(k, &v).unwrap()).symmetric_eigen();
        prop_assert!(eig.eigenvalues.min() > 0.0);
        prop_assert!((f.log_det() - eig.eigenvalues.iter().map(|e| e.ln()).sum::<f64>()).abs() < 1e-8);
        if k >= 2 {
            TriKMatrix::k_hat(k, &v).unwrap().factor().unwrap();
        }
    }

    #[test]
    fn tridiagonal_solve_matches_dense(
        diag in prop::collection::vec(1.0f64..4.0, 2..=64),
        off_frac in -0.49f64..0.49,
        rhs_seed in prop::collection::vec(-10.0f64..10.0, 64),
    ) {
        let off = off_frac * diag.iter().copied().fold(f64::INFINITY, f64::min);
        let m = TriKMatrix::new(diag.clone(), off);
        let rhs = &rhs_seed[..diag.len()];
        let x = m.solve(rhs).unwrap();
        let reference = dense(&m).lu().solve(&DVector::from_column_slice(rhs)).unwrap();
        let err = (DVector::from_column_slice(&x) - &reference).norm() / reference.norm().max(1e-300);
        prop_assert!(err < 1e-10);
        let q = m.quadratic_form(rhs).unwrap();
        let direct: f64 = rhs.iter().zip(&x).map(|(a, b)| a * b).sum();
        prop_assert!((q - direct).abs() <= 1e-10 * direct.abs().max(1.0));
        prop_assert!(m.solve(&rhs[1..]).is_err());
    }

    #[test]
    fn score_is_even_in_increments(
        u in prop::collection::vec(-3.0f64..3.0, 2..12),
        anchor in -2.0f64..2.0,
        theta in 0.6f64..2.5,
    ) {
        let v = WeightMeasure::lebesgue().v_coefficients();
        for name in ["multiplicative_bm", "sine_scale", "cauchy_scale"] {
            let model = by_name(name).unwrap();
            let neg: Vec<f64> = u.iter().map(|x| -x).collect();
            let a = xi(&u, anchor, theta, 1.0, model, &v).unwrap();
            let b = xi(&neg, anchor, theta, 1.0, model, &v).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            let c = xi_obs(&u, anchor, theta, 1.0, model, &v).unwrap();
            let d = xi_obs(&neg, anchor, theta, 1.0, model, &v).unwrap();
            prop_assert!((c - d).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }

    #[test]
    fn score_is_derivative_of_loglik(seed in 0u64..1000, theta in 0.7f64..2.5) {
        let model = by_name("sine_scale").unwrap();
        let mu = WeightMeasure::lebesgue();
        let path = simulate_path(model, 1.2, 0.3, 64, 8, seed).unwrap();
        let obs = observe(&path, &mu);
        let forms = BlockForms::augmented(&augment(&path, &obs, 5).unwrap(), &mu.v_coefficients()).unwrap();
        let h = 1e-5;
        let fd = (forms.loglik(model, theta + h) - forms.loglik(model, theta - h)) / (2.0 * h);
        let s = forms.score(model, theta);
        prop_assert!((fd - s).abs() <= 1e-5 * s.abs().max(1.0), "{} vs {}", fd, s);
    }

    #[test]
    fn innovations_oracle_matches_dense(mu in measure_strategy(), n in 1usize..30, seed in prop::collection::vec(-2.0f64..2.0, 30)) {
        let gm = GaussianObsModel::build(n, &mu).unwrap();
        let sigma = gm.dense_base_cov();
        let chol = sigma.clone().cholesky().unwrap();
        let x = DVector::from_column_slice(&seed[..n]);
        let y = chol.l().solve_lower_triangular(&x).unwrap();
        let q_dense = y.norm_squared();
        let q = gm.quadratic(&seed[..n]).unwrap();
        prop_assert!((q - q_dense).abs() <= 1e-8 * q_dense.max(1.0), "{} vs {}", q, q_dense);
        let ld_dense: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        prop_assert!((gm.log_det() - ld_dense).abs() < 1e-8);
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) >= 2 {
                    prop_assert!(gm.innovation_cov(i, j).abs() < 1e-12);
                }
                prop_assert_eq!(gm.base_cov_entry(i, j), gm.base_cov_entry(j, i));
            }
        }
    }

    #[test]
    fn exact_llr_chains(x in prop::collection::vec(-2.0f64..2.0, 8), t in (0.5f64..3.0, 0.5f64..3.0, 0.5f64..3.0)) {
        let gm = GaussianObsModel::build(8, &WeightMeasure::lebesgue()).unwrap();
        let ab = gm.exact_llr(&x, t.0, t.1).unwrap();
        let bc = gm.exact_llr(&x, t.1, t.2).unwrap();
        let ac = gm.exact_llr(&x, t.0, t.2).unwrap();
        prop_assert!((ab + bc - ac).abs() < 1e-9 * ac.abs().max(1.0));
        let mle = gm.exact_mle(&x).unwrap();
        prop_assert!(gm.log_density(mle, &x).unwrap() >= gm.log_density(t.0, &x).unwrap() - 1e-12);
    }

    #[test]
    fn multiplicative_estimates_are_scale_equivariant(seed in 0u64..500, scale in 0.8f64..1.25) {
        let model = by_name("multiplicative_bm").unwrap();
        let mu = WeightMeasure::lebesgue();
        let v = mu.v_coefficients();
        let path = simulate_path(model, 1.4, 0.0, 128, 4, seed).unwrap();
        let obs = observe(&path, &mu);
        let base = estimate_means_only(&obs, 0.0, model, &v, 8, None).unwrap();
        let scaled: Vec<f64> = obs.iter().map(|x| scale * x).collect();
        let moved = estimate_means_only(&scaled, 0.0, model, &v, 8, None).unwrap();
        prop_assert!(!base.boundary_hit && !moved.boundary_hit);
        prop_assert!((moved.theta_hat - scale * base.theta_hat).abs() < 1e-7);

        let blocks = augment(&path, &obs, 8).unwrap();
        let est = estimate_augmented(&blocks, model, &v, Some(2.9)).unwrap();
        let from_mid = estimate_augmented(&blocks, model, &v, None).unwrap();
        prop_assert!((est.theta_hat - from_mid.theta_hat).abs() < 1e-7);
    }

    #[test]
    fn k_rule_roundtrips(k in 1usize..10_000, n in 2usize..1_000_000) {
        let rule = KRule::Fixed(k);
        prop_assert_eq!(rule.to_string().parse::<KRule>().unwrap(), rule);
        let l = KRule::Log2.block_len(n);
        prop_assert!(l >= 2);
        prop_assert!((1usize << l) >= n);
        prop_assert!(l == 2 || (1usize << (l - 1)) < n);
    }
}

#[test]
fn base_covariance_matches_brute_force() {
    let measures = [
        WeightMeasure::lebesgue(),
        WeightMeasure::dirac(0.3).unwrap(),
        WeightMeasure::mixture(0.4, vec![(0.0, 0.1), (0.6, 0.3), (1.0, 0.2)]).unwrap(),
    ];
    for mu in &measures {
        let gm = GaussianObsModel::build(5, mu).unwrap();
        for (i, j) in [(0, 0), (0, 1), (2, 2), (3, 1), (4, 4)] {
            let brute = brute_force_cov(mu, 5, i, j, 2000);
            assert!(
                (gm.base_cov_entry(i, j) - brute).abs() < 1e-6,
                "{mu} ({i},{j}): {} vs {brute}",
                gm.base_cov_entry(i, j)
            );
        }
    }
}
