use fwl_core::fock::{kernel_norm, FockParams, SymbolFn};
use fwl_core::localization::*;
use fwl_core::matrix::{algebra_compose, toeplitz_matrix, upper_gamma_tail, OperatorMatrix};
use fwl_core::numerics::{build_grid, GridSpec, QuadratureGrid};
use fwl_core::weights::{ExponentPair, Weight};
use std::sync::OnceLock;

fn p1() -> FockParams {
    FockParams::new(1.0, 1).unwrap()
}

fn two() -> ExponentPair {
    ExponentPair::new(2.0).unwrap()
}

fn wl_grid() -> &'static QuadratureGrid {
    static G: OnceLock<QuadratureGrid> = OnceLock::new();
    G.get_or_init(|| build_grid(DEFAULT_WL_GRID).unwrap())
}

fn chi(r: f64, n: usize) -> OperatorMatrix {
    toeplitz_matrix(&p1(), &SymbolFn::indicator_ball(r), n).unwrap()
}

#[test]
fn zero_operator_has_zero_profile() {
    let t = OperatorMatrix::zeros(p1(), 20);
    let v = wl_integral(&t, two(), &Weight::constant(1.0), &[0.5, 0.0], 1.0, Orientation::OverU, wl_grid()).unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn identity_integral_matches_gaussian_tail() {
    // (1/pi) int_{|u - z| > r} e^{-|z-u|^2/2} du = 2 e^{-r^2/2}
    let t = OperatorMatrix::identity(p1(), 60);
    let w = Weight::constant(1.0);
    let ctx = WlContext::new(&t, two(), &w, wl_grid()).unwrap();
    let radii = [0.0, 1.0, 2.0, 3.0];
    for z in [[0.0, 0.0], [1.5, -1.0]] {
        for o in [Orientation::OverU, Orientation::OverZ] {
            let v = ctx.integrals(&z, &radii, o).unwrap();
            for (r, got) in radii.iter().zip(v) {
                let want = 2.0 * (-r * r / 2.0f64).exp();
                assert!((got / want - 1.0).abs() < 2e-2, "z={z:?} r={r}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn kernel_scale_matches_kernel_norm() {
    let t = OperatorMatrix::identity(p1(), 10);
    let w = Weight::power(2.0);
    let ctx = WlContext::new(&t, two(), &w, wl_grid()).unwrap();
    let g = build_grid(GridSpec::new(1, 8.0, 0.05)).unwrap();
    for z in [[0.0, 0.0], [1.0, 0.5], [-2.0, 2.0]] {
        let a = ctx.kernel_scale(&z) * (0.5 * (z[0] * z[0] + z[1] * z[1])).exp();
        let b = kernel_norm(&p1(), &z, two(), &w, &g).unwrap();
        assert!((a / b - 1.0).abs() < 1e-4, "{z:?}: {a} vs {b}");
    }
}

#[test]
fn truncation_is_reported() {
    let t = OperatorMatrix::identity(p1(), 10);
    let e = wl_integral(&t, two(), &Weight::constant(1.0), &[3.0, 0.0], 7.0, Orientation::OverU, wl_grid());
    assert!(matches!(e, Err(fwl_core::Error::Truncation { .. })));
}

#[test]
fn identity_profile_strictly_decreases() {
    let t = OperatorMatrix::identity(p1(), 60);
    let radii = [0.0, 1.0, 2.0, 3.0, 4.0];
    let prof = wl_profile(&t, two(), &Weight::constant(1.0), &radii, &default_samples(), Orientation::OverU, wl_grid()).unwrap();
    assert!(prof.values.windows(2).all(|w| w[1] < w[0]), "{prof:?}");
}

#[test]
fn indicator_toeplitz_is_weakly_localized() {
    let t = chi(1.0, 60);
    let radii = [0.0, 1.0, 2.0, 3.0, 4.0];
    let w = Weight::constant(1.0);
    for o in [Orientation::OverU, Orientation::OverZ] {
        let prof = wl_profile(&t, two(), &w, &radii, &default_samples(), o, wl_grid()).unwrap();
        assert!(prof.is_non_increasing(1e-10), "{prof:?}");
        let (p0, p2, p4) = (prof.values[0], prof.values[2], prof.values[4]);
        assert!(p4 / p2 <= 0.2, "{p2} {p4}");
        assert!(p4 <= (-1f64).exp() * p0);
    }
}

#[test]
fn weighted_profile_decays() {
    let t = chi(1.0, 40);
    let radii = [0.0, 1.0, 2.0, 3.0, 4.0];
    let prof = wl_profile(&t, two(), &Weight::power(2.0), &radii, &default_samples(), Orientation::OverU, wl_grid()).unwrap();
    assert!(prof.is_non_increasing(1e-10));
    assert!(prof.values[4] / prof.values[2] <= 0.2, "{prof:?}");
}

#[test]
fn products_stay_localized() {
    let a = chi(1.0, 60);
    let b = chi(2.0, 60);
    let ab = algebra_compose(&[vec![a.clone(), b.clone()]]).unwrap();
    let radii = [0.0, 1.0, 2.0, 3.0, 4.0];
    let w = Weight::constant(1.0);
    let s = default_samples();
    let pa = wl_profile(&a, two(), &w, &radii, &s, Orientation::OverU, wl_grid()).unwrap();
    let pb = wl_profile(&b, two(), &w, &radii, &s, Orientation::OverU, wl_grid()).unwrap();
    let pab = wl_profile(&ab, two(), &w, &radii, &s, Orientation::OverU, wl_grid()).unwrap();
    assert!(pab.is_non_increasing(1e-10), "{pab:?}");
    let c = algebra_closure_constant(&pa, &pb, &pab, 2.0).unwrap();
    assert!(c.is_finite() && c < 1.0, "{c}");
}

#[test]
fn tail_of_zero_is_zero() {
    let t = OperatorMatrix::zeros(p1(), 20);
    let e = tail_norm(&t, two(), &Weight::constant(1.0), 1.0, &TailConfig::default()).unwrap();
    assert_eq!(e.value, 0.0);
    assert!(!e.lower_estimate);
}

#[test]
fn identity_tail_matches_basis_tail_sums() {
    // the truncated identity keeps e_N, whose mass sits near |z| = sqrt(N):
    // the tail is max_m Gamma(m+1, r^2)/m! over m <= N
    let t = OperatorMatrix::identity(p1(), 60);
    let w = Weight::constant(1.0);
    let mut prev = f64::INFINITY;
    for r in [0.5, 1.0, 2.0, 3.0, 5.0, 8.0] {
        let v = tail_norm(&t, two(), &w, r, &TailConfig::default()).unwrap().value;
        let m = 60;
        // independent oracle: e^{-x} sum_{k<=m} x^k/k! via logs
        let x: f64 = r * r;
        let lnf: Vec<f64> = (0..=m).scan(0.0, |s, k| { if k > 0 { *s += (k as f64).ln(); } Some(*s) }).collect();
        let q: f64 = (0..=m).map(|k| (k as f64 * x.ln() - x - lnf[k]).exp()).sum();
        assert!((v - q.min(1.0).sqrt()).abs() < 1e-10, "r={r}: {v} vs {}", q.sqrt());
        assert!(v <= prev + 1e-10);
        prev = v;
    }
}

#[test]
fn grid_tail_path_agrees_with_exact_path() {
    // power(0) is the unit weight but is not recognised as constant
    let t = chi(1.0, 20);
    let exact = tail_norm(&t, two(), &Weight::constant(1.0), 1.0, &TailConfig::default()).unwrap().value;
    let cfg = TailConfig { grid: Some(GridSpec::new(1, 8.5, 0.05)), ..TailConfig::default() };
    let grid = tail_norm(&t, two(), &Weight::power(0.0), 1.0, &cfg).unwrap().value;
    assert!((exact - grid).abs() < 1e-3, "{exact} {grid}");
    let want = (1.0 - (-1f64).exp()) * upper_gamma_tail(0, 1.0).sqrt();
    assert!((exact - want).abs() < 1e-12);
}

#[test]
fn indicator_tail_decays() {
    let t = chi(1.0, 60);
    let w = Weight::constant(1.0);
    let t1 = tail_norm(&t, two(), &w, 1.0, &TailConfig::default()).unwrap().value;
    let t3 = tail_norm(&t, two(), &w, 3.0, &TailConfig::default()).unwrap().value;
    assert!(t3 < t1 / 4.0, "{t1} {t3}");
}

#[test]
fn weighted_tail_is_monotone() {
    let t = chi(1.0, 20);
    let w = Weight::power(2.0);
    let v: Vec<f64> = [1.0, 2.0, 3.0]
        .iter()
        .map(|&r| tail_norm(&t, two(), &w, r, &TailConfig::default()).unwrap().value)
        .collect();
    assert!(v.windows(2).all(|x| x[1] <= x[0] + 1e-10), "{v:?}");
    assert!(v[2] < v[0] / 4.0);
}

#[test]
fn non_hilbert_tail_is_lower_estimate() {
    let t = chi(1.0, 15);
    let p = ExponentPair::new(3.0).unwrap();
    let e1 = tail_norm(&t, p, &Weight::constant(1.0), 1.0, &TailConfig::default()).unwrap();
    let e3 = tail_norm(&t, p, &Weight::constant(1.0), 3.0, &TailConfig::default()).unwrap();
    assert!(e1.lower_estimate && e3.lower_estimate);
    assert!(e1.value > 0.0 && e3.value < e1.value);
}

#[test]
fn verdicts_for_reference_operators() {
    let cfg = VerdictConfig::default();
    let w = Weight::constant(1.0);
    let v = compactness_verdict(&chi(1.0, 60), two(), &w, &cfg).unwrap();
    assert_eq!(v.verdict, Verdict::CompactConsistent, "{v:?}");
    assert!(*v.berezin_sup_at_radius.last().unwrap() < 5e-4);
    assert!(v.tail_norm_at_radius[2] < v.tail_norm_at_radius[0] / 4.0);

    let one = toeplitz_matrix(&p1(), &SymbolFn::constant(1.0), 60).unwrap();
    let v = compactness_verdict(&one, two(), &w, &cfg).unwrap();
    assert_eq!(v.verdict, Verdict::NonCompactConsistent);
    assert!(v.berezin_sup_at_radius.iter().all(|b| (b - 1.0).abs() < 1e-6));

    let wave = toeplitz_matrix(&p1(), &SymbolFn::plane_wave(vec![1.0, 0.0]), 60).unwrap();
    let v = compactness_verdict(&wave, two(), &w, &cfg).unwrap();
    assert_eq!(v.verdict, Verdict::NonCompactConsistent, "{v:?}");
    let g = (-0.25f64).exp();
    assert!(v.berezin_sup_at_radius.iter().all(|b| (b - g).abs() < 1e-6), "{v:?}");
}

#[test]
fn verdict_agrees_with_singular_value_decay() {
    let smallest_tenth = |t: &OperatorMatrix| {
        let s = t.singular_values();
        let k = (s.len() / 10).max(1);
        s[s.len() - k..].iter().copied().fold(0.0, f64::max)
    };
    let (a40, a80) = (chi(1.0, 40), chi(1.0, 80));
    assert!(smallest_tenth(&a80) < smallest_tenth(&a40));
    let one = |n| toeplitz_matrix(&p1(), &SymbolFn::constant(1.0), n).unwrap();
    for n in [40, 80] {
        let s = one(n).singular_values();
        assert!(*s.last().unwrap() > 1.0 - 1e-9);
    }
}
