use fwl_core::numerics::{build_grid, ComplexPoint, GridSpec, QuadratureGrid};
use fwl_core::weights::*;
use proptest::prelude::*;
use std::sync::OnceLock;

fn grid() -> &'static QuadratureGrid {
    static G: OnceLock<QuadratureGrid> = OnceLock::new();
    G.get_or_init(|| build_grid(GridSpec::new(1, 8.0, 0.05)).unwrap())
}

fn coarse() -> &'static QuadratureGrid {
    static G: OnceLock<QuadratureGrid> = OnceLock::new();
    G.get_or_init(|| build_grid(GridSpec::new(1, 8.0, 0.1)).unwrap())
}

#[test]
fn hat_of_power_weight_at_origin() {
    // int_{[-1/2,1/2]^2} (1 + |z|)^2: 1 + 2 * mean distance + 1/6, where the
    // mean distance from the center of a unit square is (sqrt2 + asinh 1)/6.
    let s2 = 2f64.sqrt();
    let exact = 1.0 + (s2 + 1f64.asinh()) / 3.0 + 1.0 / 6.0;
    let h = hat_weight(&Weight::power(2.0), 1e-3);
    let v = h.eval(&[0.0, 0.0]);
    assert!((v - exact).abs() < 1e-6, "{v} vs {exact}");
}

#[test]
fn hat_of_radial_weight_is_nearly_rotation_invariant() {
    let h = hat_weight(&Weight::power(2.0), 0.01);
    for r in [0.5, 1.5, 3.0] {
        let base = h.eval(&[r, 0.0]);
        for k in 1..8 {
            let t = k as f64 * std::f64::consts::PI / 8.0;
            let v = h.eval(&[r * t.cos(), r * t.sin()]);
            assert!((v / base - 1.0).abs() < 5e-2, "r={r} t={t}: {v} vs {base}");
        }
    }
}

#[test]
fn doubling_of_power_weight_is_bounded_and_stable() {
    let w = Weight::power(2.0);
    let d = doubling_constant(&w, 1.0, ScanSpec::new(6.0, 0.25), coarse()).unwrap();
    assert!(d.report.value <= 16.0, "{:?}", d.report);
    assert!(d.report.refinement_gap < 5e-2);
    assert!(!d.suspect, "{d:?}");
}

#[test]
fn gaussian_weight_is_doubling_suspect() {
    let w = Weight::gaussian(-1.0);
    let d = doubling_constant(&w, 1.0, ScanSpec::new(6.0, 0.25), coarse()).unwrap();
    let vals: Vec<f64> = d.by_radius.iter().map(|x| x.1).collect();
    assert!(vals[0] < vals[1] && vals[1] < vals[2], "{vals:?}");
    assert!(d.suspect);
    assert!(d.report.note.is_some());
}

#[test]
fn counterexample_pair_characteristic_is_finite_and_stable() {
    let w = Weight::gaussian(-4.0);
    let s = Weight::gaussian(-1.0);
    let p = ExponentPair::new(2.0).unwrap();
    let a = joint_characteristic(&w, &s, p, 1.0, None, ScanSpec::new(4.0, 0.25), grid()).unwrap();
    let b = joint_characteristic(&w, &s, p, 1.0, None, ScanSpec::new(6.0, 0.25), grid()).unwrap();
    assert!(a.value.is_finite() && b.value.is_finite());
    assert!((b.value / a.value - 1.0).abs() < 0.05);
    assert!(b.refinement_gap < 0.05);
    // separable oracle: product of 1-D averages, maximal at the origin
    let gl = fwl_core::numerics::gauss_legendre(40, -0.5, 0.5).unwrap();
    let avg = |f: &dyn Fn(f64) -> f64| gl.iter().map(|(x, w)| w * f(*x)).sum::<f64>();
    let one_d = avg(&|x| (-4.0 * x * x).exp()) * avg(&|x| (x * x).exp());
    assert!((b.value / (one_d * one_d) - 1.0).abs() < 1e-3, "{} {}", b.value, one_d * one_d);
}

#[test]
fn adapted_characteristic_for_ball_indicator() {
    let w = Weight::constant(1.0);
    let p = ExponentPair::new(2.0).unwrap();
    let phi = |x: &[f64]| if x[0] * x[0] + x[1] * x[1] < 1.0 { 1.0 } else { 0.0 };
    let rep = joint_characteristic(&w, &w, p, 1.0, Some(&phi), ScanSpec::new(3.0, 0.25), grid()).unwrap();
    assert!(rep.value <= 1.0 + 1e-12 && rep.value > 0.95, "{rep:?}");
    assert!(rep.argmax_center.norm() < 0.3);
}

#[test]
fn a_p_implies_doubling_for_power_family() {
    for beta in [-0.5, 1.0, 2.0] {
        let w = Weight::power(beta);
        let p = ExponentPair::new(2.0).unwrap();
        let c = ap_characteristic(&w, p, 1.0, ScanSpec::new(6.0, 0.5), coarse()).unwrap();
        assert!(c.value.is_finite());
        let d = doubling_constant(&w, 1.0, ScanSpec::new(6.0, 0.5), coarse()).unwrap();
        assert!(d.report.value.is_finite() && !d.suspect, "beta={beta}: {d:?}");
    }
}

#[test]
fn lattice_slope_finite_for_power_weight() {
    let fit = lattice_constant(&Weight::power(2.0), 1.0, 6.0, coarse()).unwrap();
    assert!(fit.slope.is_finite() && fit.slope > 0.0 && fit.slope < 2.0, "{fit:?}");
    assert!(fit.sites > 100);
}

#[test]
fn report_csv_layout() {
    let w = Weight::constant(1.0);
    let rep = ap_characteristic(&w, ExponentPair::new(2.0).unwrap(), 1.0, ScanSpec::new(1.0, 0.5), coarse()).unwrap();
    let f = rep.csv_fields();
    assert_eq!(f.len(), CharacteristicReport::CSV_HEADER.len());
    assert!(f[0].starts_with("1.0000000000000") && f[0].ends_with("e0"), "{}", f[0]);
    let _ = ComplexPoint::origin(1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scale_invariance(c in 0.01f64..100.0, beta in -1.0f64..2.0, p in 1.2f64..4.0) {
        let w = Weight::power(beta);
        let s = Weight::power(beta / 2.0);
        let p = ExponentPair::new(p).unwrap();
        let scan = ScanSpec::new(2.0, 0.5);
        let a = joint_characteristic(&w, &s, p, 1.0, None, scan, coarse()).unwrap();
        let b = joint_characteristic(&w.clone().scaled(c), &s.clone().scaled(c), p, 1.0, None, scan, coarse()).unwrap();
        prop_assert!((a.value / b.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_scan(beta in -1.0f64..2.5, r1 in 0.5f64..2.0, extra in 0.0f64..2.0) {
        let w = Weight::power(beta);
        let p = ExponentPair::new(2.0).unwrap();
        let a = ap_characteristic(&w, p, 1.0, ScanSpec::new(r1, 0.5), coarse()).unwrap();
        let b = ap_characteristic(&w, p, 1.0, ScanSpec::new(r1 + extra, 0.5), coarse()).unwrap();
        let c = ap_characteristic(&w, p, 1.0, ScanSpec::new(r1, 0.25), coarse()).unwrap();
        prop_assert!(b.value >= a.value);
        prop_assert!(c.value >= a.value);
    }

    #[test]
    fn duality_of_characteristic(beta in -1.5f64..2.5, p in 1.3f64..4.0) {
        let w = Weight::power(beta);
        let p = ExponentPair::new(p).unwrap();
        let q = p.conjugate().unwrap();
        let wd = dual_weight(&w, p).unwrap();
        let scan = ScanSpec::new(2.0, 0.5);
        let a = ap_characteristic(&w, p, 1.0, scan, coarse()).unwrap();
        let b = ap_characteristic(&wd, q, 1.0, scan, coarse()).unwrap();
        prop_assert!((a.value / b.value.powf(p.p / q.p) - 1.0).abs() < 1e-9);
    }
}
