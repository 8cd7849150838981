use fwl_core::fock::*;
use fwl_core::numerics::{build_grid, norm_sq, GridSpec, QuadratureGrid};
use fwl_core::weights::{ExponentPair, Weight};
use fwl_core::Error;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

fn params() -> FockParams {
    FockParams::new(1.0, 1).unwrap()
}

fn fine() -> Arc<QuadratureGrid> {
    static G: OnceLock<Arc<QuadratureGrid>> = OnceLock::new();
    G.get_or_init(|| Arc::new(build_grid(GridSpec::new(1, 8.0, 0.05)).unwrap()))
        .clone()
}

fn kernel_fn(z: [f64; 2]) -> GridFunction {
    let p = params();
    GridFunction::from_fn(fine(), move |u| normalized_kernel_eval(&p, &z, u))
}

#[test]
fn lambda_is_a_probability_measure() {
    let one = GridFunction::from_fn(fine(), |_| Complex64::new(1.0, 0.0));
    let v = pairing(&params(), &one, &one).unwrap();
    assert!((v.re - 1.0).abs() < 1e-6 && v.im.abs() < 1e-12);
}

#[test]
fn normalized_kernels_have_unit_norm() {
    for z in [[0.0, 0.0], [1.0, -2.0], [3.0, 0.0], [-1.5, 2.5]] {
        let k = kernel_fn(z);
        let v = pairing(&params(), &k, &k).unwrap();
        assert!((v.re - 1.0).abs() < 1e-6, "z={z:?}: {v}");
    }
}

#[test]
fn kernel_pairing_is_reproducing() {
    let p = params();
    let z = [0.7, -0.4];
    let u = [-1.1, 0.9];
    let kz = GridFunction::from_fn(fine(), |x| kernel_eval(&p, &z, x));
    let ku = GridFunction::from_fn(fine(), |x| kernel_eval(&p, &u, x));
    let v = pairing(&p, &kz, &ku).unwrap();
    let expect = kernel_eval(&p, &z, &u);
    assert!((v - expect).norm() / expect.norm() < 1e-5);
}

#[test]
fn overlap_of_normalized_kernels() {
    let v = pairing(&params(), &kernel_fn([0.0, 0.0]), &kernel_fn([1.0, 0.0])).unwrap();
    assert!((v.norm() - (-0.5f64).exp()).abs() < 1e-6);
}

#[test]
fn kernel_norm_closed_forms() {
    let p = params();
    let g = fine();
    let p2 = ExponentPair::new(2.0).unwrap();
    let v = kernel_norm(&p, &[0.0, 0.0], p2, &Weight::constant(1.0), &g).unwrap();
    assert!((v - PI.sqrt()).abs() < 1e-7);
    // w = (p alpha / 2 pi)^n gives ||K_z|| = e^{alpha|z|^2/2}
    let w = Weight::constant(1.0 / PI);
    for z in [[0.0, 0.0], [1.0, 1.0], [0.0, -3.0]] {
        let v = ln_kernel_norm(&p, &z, p2, &w, &g).unwrap();
        assert!((v - norm_sq(&z) / 2.0).abs() < 1e-7, "{z:?}");
    }
}

#[test]
fn kernel_norm_ratio_is_comparable() {
    let p = params();
    let g = Arc::new(build_grid(GridSpec::new(1, 9.0, 0.05)).unwrap());
    let w = Weight::power(2.0);
    for pp in [1.5, 2.0, 3.0] {
        let e = ExponentPair::new(pp).unwrap();
        for k in 0..8 {
            let t = k as f64 * 0.7;
            let z = [0.5 * k as f64 * t.cos(), 0.5 * k as f64 * t.sin()];
            let r = kernel_norm_ratio(&p, &z, e, &w, &g).unwrap();
            assert!(r > 0.1 && r < 10.0, "p={pp} z={z:?}: {r}");
        }
    }
}

#[test]
fn projection_reproduces_constants_and_kernels() {
    let p = params();
    let one = GridFunction::from_fn(fine(), |_| Complex64::new(1.0, 0.0));
    let u = [0.5, 0.0];
    let ku = GridFunction::from_fn(fine(), |x| kernel_eval(&p, &u, x));
    for z in [[0.0, 0.0], [2.0, 1.0], [-3.0, 0.0], [1.0, -2.5]] {
        let v = projection_apply(&p, &one, &z).unwrap();
        assert!((v - 1.0).norm() < 1e-5, "{z:?}: {v}");
        let v = projection_apply(&p, &ku, &z).unwrap();
        let e = kernel_eval(&p, &u, &z);
        assert!((v - e).norm() / e.norm() < 1e-5, "{z:?}");
    }
}

#[test]
fn toeplitz_of_ball_on_constant() {
    let p = params();
    let one = GridFunction::from_fn(fine(), |_| Complex64::new(1.0, 0.0));
    let v = toeplitz_apply(&p, &SymbolFn::indicator_ball(1.0), &one, &[0.0, 0.0]).unwrap();
    // jump cells enter with their covered fraction at the cell center: O(h) error
    assert!((v.re - (1.0 - (-1f64).exp())).abs() < 2e-4, "{v}");
}

#[test]
fn berezin_examples() {
    let p = params();
    let g = fine();
    let chi = SymbolFn::indicator_ball(1.0);
    let v = berezin_symbol(&p, &chi, &[0.0, 0.0], &g).unwrap();
    assert!((v.re - 0.632_120_558_8).abs() < 1e-9);
    let far = berezin_symbol(&p, &chi, &[4.0, 0.0], &g).unwrap();
    assert!(far.re >= 0.0 && far.re <= 5e-4, "{far}");
    for z in [[0.0, 0.0], [2.0, 2.0], [-3.0, 1.0]] {
        let v = berezin_symbol(&p, &SymbolFn::constant(1.0), &z, &g).unwrap();
        assert!((v.re - 1.0).abs() < 1e-6);
    }
    // plane wave: Gaussian Fourier transform, |T~| = e^{-|k|^2/(4 alpha)}
    let pw = SymbolFn::plane_wave(vec![1.0, 0.0]);
    for z in [[0.0, 0.0], [1.3, -0.2], [2.5, 2.0]] {
        let v = berezin_symbol(&p, &pw, &z, &g).unwrap();
        assert!((v.norm() - (-0.25f64).exp()).abs() < 1e-6);
    }
}

#[test]
fn test_function_for_projection_with_unit_source_weight() {
    let p = params();
    let e = ExponentPair::new(2.0).unwrap();
    let one = Weight::constant(1.0);
    let u = [0.5, -0.25];
    let t = test_function_build(&p, TestVariant::Projection { sigma: &one }, e, &u, 1.0, None, fine()).unwrap();
    for (i, v) in t.function.values.iter().enumerate() {
        let x = t.function.grid.node(i).coords;
        let inside = x.iter().zip(&u).all(|(a, b)| (a - b).abs() < 0.5);
        let expect = if inside { normalized_kernel_eval(&p, &u, &x) } else { Complex64::new(0.0, 0.0) };
        assert!((v - expect).norm() < 1e-14);
    }
    assert_eq!(t.support_nodes, 400);
    assert!((t.norm_bound - 1.0).abs() < 1e-9);
}

#[test]
fn test_function_truncation_set() {
    let p = params();
    let e = ExponentPair::new(2.0).unwrap();
    let sigma = Weight::gaussian(-1.0);
    let t = test_function_build(&p, TestVariant::Projection { sigma: &sigma }, e, &[0.0, 0.0], 1.0, Some(10.0), fine()).unwrap();
    assert_eq!(t.support_nodes, 400);
    // the ball of radius sqrt(ln 10) does not cover Q_4(0)
    let t = test_function_build(&p, TestVariant::Projection { sigma: &sigma }, e, &[0.0, 0.0], 4.0, Some(10.0), fine()).unwrap();
    let inside_ball = (0..fine().len())
        .filter(|&i| {
            let x = fine().node(i).coords;
            x[0].abs() < 2.0 && x[1].abs() < 2.0 && norm_sq(&x) <= 10f64.ln()
        })
        .count();
    assert_eq!(t.support_nodes, inside_ball);
}

#[test]
fn vanishing_symbol_is_degenerate() {
    let p = params();
    let e = ExponentPair::new(3.0).unwrap();
    let w = Weight::constant(1.0);
    let chi = SymbolFn::indicator_ball(1.0);
    let err = test_function_build(&p, TestVariant::Toeplitz { w: &w, phi: &chi }, e, &[4.0, 0.0], 1.0, None, fine()).unwrap_err();
    assert!(matches!(err, Error::DegenerateTest(_)));
}

#[test]
fn localized_operator_examples() {
    let p = params();
    let u = [0.3, 0.2];
    let f = kernel_fn([1.0, -0.5]);
    let zero = SymbolFn::constant(0.0);
    let out = localized_operator_apply(&p, LocalizedKind::Toeplitz(&zero), &u, 1.0, &f).unwrap();
    assert!(out.values.iter().all(|v| v.norm() == 0.0));

    // remove the k_u component on Q_1(u)
    let ku = kernel_fn(u);
    let c1 = localized_coefficient(&p, &LocalizedKind::Projection, &u, 1.0, &f).unwrap();
    let c0 = localized_coefficient(&p, &LocalizedKind::Projection, &u, 1.0, &ku).unwrap();
    let g = f.sub(&ku.scale(c1 / c0)).unwrap();
    let out = localized_operator_apply(&p, LocalizedKind::Projection, &u, 1.0, &g).unwrap();
    let m = out.values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    assert!(m < 1e-8, "{m}");
}

#[test]
fn localized_toeplitz_norm_domination() {
    let p = params();
    let grid = Arc::new(build_grid(GridSpec::new(1, 6.0, 0.1)).unwrap());
    let w = Weight::constant(1.0);
    let chi = SymbolFn::indicator_ball(1.0);
    let u = [0.4, 0.0];
    let r = 1.0;
    let bound = (r * r / 2.0f64).exp() * chi.sup_norm_hint();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..50 {
        let coeffs: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let f = GridFunction::from_fn(grid.clone(), |x| {
            coeffs
                .iter()
                .map(|&(a, b, c, d)| normalized_kernel_eval(&p, &[a, b], x) * Complex64::new(c, d))
                .sum()
        });
        let out = localized_operator_apply(&p, LocalizedKind::Toeplitz(&chi), &u, r, &f).unwrap();
        let ratio = out.lp_norm(&p, 2.0, &w).unwrap() / f.lp_norm(&p, 2.0, &w).unwrap();
        assert!(ratio <= bound * 1.1, "{ratio} > {bound}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gaussian_overlap_identity(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0) {
        let v = pairing(&params(), &kernel_fn([a, b]), &kernel_fn([c, d])).unwrap();
        let e = (-((a - c).powi(2) + (b - d).powi(2)) / 2.0).exp();
        prop_assert!((v.norm() - e).abs() < 1e-6);
    }

    #[test]
    fn berezin_positive_and_contractive(r0 in 0.2f64..3.0, x in -4.0f64..4.0, y in -4.0f64..4.0, s in 0.1f64..2.0) {
        let g = build_grid(GridSpec::new(1, 8.0, 0.1)).unwrap();
        let phi = SymbolFn::RadialStep { radii: vec![r0], values: vec![s, 0.5 * s] };
        let v = berezin_symbol(&params(), &phi, &[x, y], &g).unwrap();
        prop_assert!(v.re >= 0.0);
        prop_assert!(v.norm() <= phi.sup_norm_hint() * (1.0 + 1e-9));
    }
}

#[test]
fn kernel_norm_product_bracket() {
    let p = params();
    let g = Arc::new(build_grid(GridSpec::new(1, 9.0, 0.05)).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for w in [Weight::power(2.0), Weight::power(-0.5), Weight::constant(3.0)] {
        for pp in [1.5, 2.0, 3.0] {
            let e = ExponentPair::new(pp).unwrap();
            let wd = fwl_core::weights::dual_weight(&w, e).unwrap();
            let q = e.conjugate().unwrap();
            for _ in 0..6 {
                let r: f64 = rng.gen_range(0.0..4.0);
                let t: f64 = rng.gen_range(0.0..2.0 * PI);
                let z = [r * t.cos(), r * t.sin()];
                let a = ln_kernel_norm(&p, &z, e, &w, &g).unwrap();
                let b = ln_kernel_norm(&p, &z, q, &wd, &g).unwrap();
                let ratio = (a + b - norm_sq(&z)).exp();
                assert!(ratio > 1.0 / 20.0 && ratio < 20.0, "{ratio}");
            }
        }
    }
}
