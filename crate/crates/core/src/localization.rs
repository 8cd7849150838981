//! Weak-localization profiles, tail norms and compactness verdicts for
//! truncated operators on `F^p_{alpha,w}` (n = 1).

use crate::error::{Error, Result};
use crate::fock::SymbolFn;
use crate::matrix::{
    berezin_of_matrix, kernel_coefficients, required_radius, scaled_basis, upper_gamma_tail,
    weighted_gram, OperatorMatrix,
};
use crate::numerics::{build_grid, dist_sq, norm_sq, ComplexPoint, CubeRule, GridSpec, NeumaierSum, QuadratureGrid};
use crate::weights::{dual_weight, hat_weight, ExponentPair, Weight};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which variable is integrated in the excluded-ball integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `z` fixed, integrate over `u` outside `B_r(z)`.
    OverU,
    /// `u` fixed, integrate over `z` outside `B_r(u)`.
    OverZ,
}

/// Default integration grid for profiles.
pub const DEFAULT_WL_GRID: GridSpec = GridSpec {
    n: 1,
    radius: 10.0,
    spacing: 0.1,
};

/// `ln rho(x)` with `rho(x)^p = int e^{-p alpha |x-u|^2/2} w(u) dv(u)`, so that
/// `||K_x||_{F^p_{alpha,w}} = e^{alpha|x|^2/2} rho(x)`.
#[derive(Debug, Clone)]
enum KernelScale {
    Radial { step: f64, values: Vec<f64> },
    Direct { w: Weight, p: f64, alpha: f64 },
}

const SCALE_STEP: f64 = 0.1;

fn local_ln_rho(w: &Weight, p: f64, alpha: f64, x: &[f64]) -> f64 {
    // the Gaussian factor is below e^{-40} outside the cube
    let half = (80.0 / (p * alpha)).sqrt();
    let rule = CubeRule::new(x, 2.0 * half, SCALE_STEP);
    let i = rule.integrate_real(|u| {
        let e = -p * alpha * dist_sq(u, x) / 2.0;
        (e + w.ln_eval(u)).exp()
    });
    i.ln() / p
}

impl KernelScale {
    fn new(w: &Weight, p: f64, alpha: f64, reach: f64) -> Self {
        if w.is_radial() {
            let step = 0.02;
            let count = (reach / step).ceil() as usize + 2;
            let values = (0..count)
                .into_par_iter()
                .map(|k| local_ln_rho(w, p, alpha, &[k as f64 * step, 0.0]))
                .collect();
            KernelScale::Radial { step, values }
        } else {
            KernelScale::Direct {
                w: w.clone(),
                p,
                alpha,
            }
        }
    }

    fn ln_rho(&self, x: &[f64]) -> f64 {
        match self {
            KernelScale::Radial { step, values } => {
                let t = norm_sq(x).sqrt() / step;
                let k = (t.floor() as usize).min(values.len() - 2);
                let f = t - k as f64;
                values[k] * (1.0 - f) + values[k + 1] * f
            }
            KernelScale::Direct { w, p, alpha } => local_ln_rho(w, *p, *alpha, x),
        }
    }
}

/// Cached data for excluded-ball integrals of one operator.
pub struct WlContext<'a> {
    t: &'a OperatorMatrix,
    grid: &'a QuadratureGrid,
    nodes: Vec<[f64; 2]>,
    /// `c(node)` rows, `(N+1)` per node.
    coeffs: Vec<Complex64>,
    scale_w: KernelScale,
    scale_dual: KernelScale,
    ln_rho_w: Vec<f64>,
    ln_rho_dual: Vec<f64>,
}

impl<'a> WlContext<'a> {
    pub fn new(t: &'a OperatorMatrix, p: ExponentPair, w: &Weight, grid: &'a QuadratureGrid) -> Result<Self> {
        if p.is_one() {
            return Err(Error::UnsupportedExponent(1.0));
        }
        if grid.n() != 1 {
            return Err(Error::DimensionMismatch("weak localization is implemented for n = 1".into()));
        }
        w.validate(1)?;
        let params = t.params;
        let wd = dual_weight(w, p)?;
        let reach = grid.radius() * 2f64.sqrt() + 1.0;
        let scale_w = KernelScale::new(w, p.p, params.alpha, reach);
        let scale_dual = KernelScale::new(&wd, p.p_conj, params.alpha, reach);
        let nodes: Vec<[f64; 2]> = (0..grid.len())
            .map(|i| {
                let mut x = [0.0; 2];
                grid.node_into(i, &mut x);
                x
            })
            .collect();
        let d = t.dim();
        let coeffs: Vec<Complex64> = nodes
            .par_iter()
            .flat_map_iter(|x| kernel_coefficients(&params, Complex64::new(x[0], x[1]), t.degree).into_iter())
            .collect();
        debug_assert_eq!(coeffs.len(), d * nodes.len());
        let ln_rho_w = nodes.par_iter().map(|x| scale_w.ln_rho(x)).collect();
        let ln_rho_dual = nodes.par_iter().map(|x| scale_dual.ln_rho(x)).collect();
        Ok(Self {
            t,
            grid,
            nodes,
            coeffs,
            scale_w,
            scale_dual,
            ln_rho_w,
            ln_rho_dual,
        })
    }

    /// `||K_x||_{F^p_{alpha,w}} e^{-alpha|x|^2/2}`.
    pub fn kernel_scale(&self, x: &[f64]) -> f64 {
        self.scale_w.ln_rho(x).exp()
    }

    /// Excluded-ball integrals at the given radii for one anchor point.
    pub fn integrals(&self, anchor: &[f64], radii: &[f64], orientation: Orientation) -> Result<Vec<f64>> {
        let rmax = radii.iter().copied().fold(0.0, f64::max);
        let reach = norm_sq(anchor).sqrt() + rmax + 1.0;
        if reach > self.grid.radius() {
            return Err(Error::Truncation {
                required_radius: reach,
                grid_radius: self.grid.radius(),
            });
        }
        let params = self.t.params;
        let d = self.t.dim();
        let ca = DVector::from_vec(kernel_coefficients(&params, Complex64::new(anchor[0], anchor[1]), self.t.degree));
        // OverU: |c(u)^H (T c(z))|; OverZ: |(T^H c(u))^H c(z)|
        let (v, ln_anchor) = match orientation {
            OverU => (&self.t.entries * &ca, self.scale_w.ln_rho(anchor)),
            OverZ => (self.t.entries.ad_mul(&ca), self.scale_dual.ln_rho(anchor)),
        };
        let r2: Vec<f64> = radii.iter().map(|r| r * r).collect();
        let mut sums = vec![NeumaierSum::default(); radii.len()];
        for (i, x) in self.nodes.iter().enumerate() {
            let dd = dist_sq(x, anchor);
            if dd < r2.iter().copied().fold(f64::INFINITY, f64::min) {
                continue;
            }
            let row = &self.coeffs[i * d..(i + 1) * d];
            let mut acc = Complex64::new(0.0, 0.0);
            match orientation {
                OverU => {
                    for (c, vm) in row.iter().zip(v.iter()) {
                        acc += c.conj() * vm;
                    }
                }
                OverZ => {
                    for (c, vm) in row.iter().zip(v.iter()) {
                        acc += vm.conj() * c;
                    }
                }
            }
            let ln_node = match orientation {
                OverU => self.ln_rho_dual[i],
                OverZ => self.ln_rho_w[i],
            };
            let val = acc.norm() * (-(ln_anchor + ln_node)).exp();
            for (s, r) in sums.iter_mut().zip(&r2) {
                if dd >= *r {
                    s.add(val);
                }
            }
        }
        let h = self.grid.node_weight();
        Ok(sums.iter().map(|s| s.value() * h).collect())
    }
}

use Orientation::{OverU, OverZ};

/// Excluded-ball integral of `|<T k_z^{(p,w)}, k_u^{(p',w')}>_alpha|`.
pub fn wl_integral(
    t: &OperatorMatrix,
    p: ExponentPair,
    w: &Weight,
    anchor: &[f64],
    r: f64,
    orientation: Orientation,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let ctx = WlContext::new(t, p, w, grid)?;
    Ok(ctx.integrals(anchor, &[r], orientation)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlProfile {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub orientation: Orientation,
    /// Anchor attaining the sup at each radius.
    pub argmax: Vec<ComplexPoint>,
    pub samples: usize,
}

impl WlProfile {
    pub fn value_at(&self, r: f64) -> Option<f64> {
        self.radii
            .iter()
            .position(|x| (x - r).abs() < 1e-12)
            .map(|i| self.values[i])
    }

    pub fn is_non_increasing(&self, slack: f64) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

/// Origin plus `per_circle` points on each circle of the given radii.
pub fn circle_samples(radii: &[f64], per_circle: usize) -> Vec<ComplexPoint> {
    let mut out = Vec::new();
    for &r in radii {
        if r == 0.0 {
            out.push(ComplexPoint::origin(1));
            continue;
        }
        for k in 0..per_circle {
            let t = 2.0 * PI * k as f64 / per_circle as f64;
            out.push(ComplexPoint {
                coords: vec![r * t.cos(), r * t.sin()],
            });
        }
    }
    out
}

/// Sample anchors used by default: the origin and 64 points on `|z| = 1, 2, 3`.
pub fn default_samples() -> Vec<ComplexPoint> {
    circle_samples(&[0.0, 1.0, 2.0, 3.0], 64)
}

pub fn wl_profile(
    t: &OperatorMatrix,
    p: ExponentPair,
    w: &Weight,
    radii: &[f64],
    samples: &[ComplexPoint],
    orientation: Orientation,
    grid: &QuadratureGrid,
) -> Result<WlProfile> {
    if radii.windows(2).any(|x| x[1] <= x[0]) || radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(crate::error::invalid("profile radii must be nonnegative and strictly increasing"));
    }
    if samples.is_empty() {
        return Err(crate::error::invalid("no sample points"));
    }
    let ctx = WlContext::new(t, p, w, grid)?;
    let rows: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| ctx.integrals(s.as_slice(), radii, orientation))
        .collect::<Result<_>>()?;
    let mut values = vec![f64::NEG_INFINITY; radii.len()];
    let mut argmax = vec![samples[0].clone(); radii.len()];
    for (s, row) in samples.iter().zip(&rows) {
        for (k, v) in row.iter().enumerate() {
            if *v > values[k] {
                values[k] = *v;
                argmax[k] = s.clone();
            }
        }
    }
    Ok(WlProfile {
        radii: radii.to_vec(),
        values,
        orientation,
        argmax,
        samples: samples.len(),
    })
}

/// `profile_ts(2 r0) / max(profile_t(r0), profile_s(r0))`.
pub fn algebra_closure_constant(t: &WlProfile, s: &WlProfile, ts: &WlProfile, r0: f64) -> Option<f64> {
    let eps = t.value_at(r0)?.max(s.value_at(r0)?);
    Some(ts.value_at(2.0 * r0)? / eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    /// Grid for Gram matrices; sized from the degree when absent.
    pub grid: Option<GridSpec>,
    pub hat_spacing: f64,
    /// Random candidates for the p != 2 search.
    pub candidates: usize,
    pub seed: u64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            grid: None,
            hat_spacing: 0.1,
            candidates: 24,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub value: f64,
    /// Only a lower estimate (p != 2 search).
    pub lower_estimate: bool,
}

fn tail_grid(t: &OperatorMatrix, cfg: &TailConfig) -> Result<QuadratureGrid> {
    let spec = cfg.grid.unwrap_or_else(|| {
        let r = (required_radius(t.params.alpha, t.degree) * 2.0).ceil() / 2.0;
        GridSpec::new(1, r, 0.1)
    });
    let g = build_grid(spec)?;
    let need = required_radius(t.params.alpha, t.degree);
    if g.radius() < need {
        return Err(Error::Configuration(format!(
            "tail grid radius {} cannot resolve degree {}: need R >= {need:.3}",
            g.radius(),
            t.degree
        )));
    }
    Ok(g)
}

/// Norm of `f -> chi_{|z|>r} T f` from `F^p_{alpha,w}` into `L^p` with weight
/// `e^{-p alpha |z|^2/2} w_hat`, `w_hat(z) = w(Q_1(z))`.
pub fn tail_norm(t: &OperatorMatrix, p: ExponentPair, w: &Weight, r: f64, cfg: &TailConfig) -> Result<TailEstimate> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(crate::error::invalid("tail radius must be nonnegative"));
    }
    w.validate(1)?;
    if p.p == 2.0 {
        tail_norm_two(t, w, r, cfg).map(|value| TailEstimate {
            value,
            lower_estimate: false,
        })
    } else {
        tail_norm_search(t, p, w, r, cfg).map(|value| TailEstimate {
            value,
            lower_estimate: true,
        })
    }
}

fn top_singular(m: &DMatrix<Complex64>) -> f64 {
    m.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

fn tail_norm_two(t: &OperatorMatrix, w: &Weight, r: f64, cfg: &TailConfig) -> Result<f64> {
    let a = t.params.alpha;
    if let Weight::Constant { .. } = w {
        // orthogonal basis; w_hat = w and the tail Gram is diag Q(m+1, alpha r^2)
        let d = DMatrix::from_fn(t.dim(), t.dim(), |i, j| {
            if i == j {
                Complex64::new(upper_gamma_tail(i, a * r * r).sqrt(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        return Ok(top_singular(&(d * &t.entries)));
    }
    let grid = tail_grid(t, cfg)?;
    let what = hat_weight(w, cfg.hat_spacing);
    let inside = SymbolFn::indicator_ball(r).cell_values(&grid);
    let gw: Vec<Complex64> = grid.map(|x| Complex64::new(w.eval(x), 0.0));
    let gh: Vec<Complex64> = grid
        .map(|x| what.eval(x))
        .into_iter()
        .zip(&inside)
        .map(|(v, c)| Complex64::new(v * (1.0 - c.re), 0.0))
        .collect();
    let g = weighted_gram(&t.params, t.degree, &grid, &gw);
    let h = weighted_gram(&t.params, t.degree, &grid, &gh);
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::Domain("weighted Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    // M = L^{-1} T^H H T L^{-H}
    let tht = t.entries.adjoint() * h * &t.entries;
    let x = l
        .solve_lower_triangular(&tht)
        .ok_or_else(|| Error::Domain("singular Cholesky factor".into()))?;
    let m = l
        .solve_lower_triangular(&x.adjoint())
        .ok_or_else(|| Error::Domain("singular Cholesky factor".into()))?;
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let top = m.symmetric_eigenvalues().iter().copied().fold(0.0, f64::max);
    Ok(top.max(0.0).sqrt())
}

fn tail_norm_search(t: &OperatorMatrix, p: ExponentPair, w: &Weight, r: f64, cfg: &TailConfig) -> Result<f64> {
    let grid = tail_grid(t, cfg)?;
    let params = t.params;
    let d = t.dim();
    let mut cands: Vec<DVector<Complex64>> = Vec::new();
    for m in 0..d {
        cands.push(DVector::from_fn(d, |i, _| Complex64::new(if i == m { 1.0 } else { 0.0 }, 0.0)));
    }
    for s in circle_samples(&[0.0, r, r + 1.0, r + 2.0], 8) {
        cands.push(DVector::from_vec(kernel_coefficients(&params, s.component(0), t.degree)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.candidates {
        cands.push(DVector::from_fn(d, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        }));
    }
    let images: Vec<DVector<Complex64>> = cands.iter().map(|c| &t.entries * c).collect();
    let what = hat_weight(w, cfg.hat_spacing);
    let inside = SymbolFn::indicator_ball(r).cell_values(&grid);
    let a = params.alpha;
    let pp = p.p;
    let k = cands.len();
    let mut num = vec![NeumaierSum::default(); k];
    let mut den = vec![NeumaierSum::default(); k];
    let mut x = [0.0; 2];
    for i in 0..grid.len() {
        grid.node_into(i, &mut x);
        // e_m(z) e^{-alpha|z|^2/2}
        let row = scaled_basis(a, Complex64::new(x[0], x[1]), t.degree, Complex64::new((-a * norm_sq(&x) / 2.0).exp(), 0.0));
        let wi = w.eval(&x);
        let out = 1.0 - inside[i].re;
        let wh = if out > 0.0 { what.eval(&x) * out } else { 0.0 };
        for j in 0..k {
            let f: Complex64 = row.iter().zip(cands[j].iter()).map(|(e, c)| e * c).sum();
            den[j].add(f.norm().powf(pp) * wi);
            if wh > 0.0 {
                let g: Complex64 = row.iter().zip(images[j].iter()).map(|(e, c)| e * c).sum();
                num[j].add(g.norm().powf(pp) * wh);
            }
        }
    }
    let mut best = 0.0f64;
    for j in 0..k {
        let dv = den[j].value();
        if dv > 0.0 {
            best = best.max((num[j].value() / dv).powf(1.0 / pp));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    CompactConsistent,
    NonCompactConsistent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictConfig {
    pub berezin_radii: Vec<f64>,
    pub angles: usize,
    pub tail_radii: Vec<f64>,
    /// Compact-consistent needs the Berezin sup at the largest radius below this.
    pub berezin_threshold: f64,
    /// ... and the tail norm at the largest radius below this, non-increasing.
    pub tail_threshold: f64,
    /// Non-compact-consistent needs the Berezin sup above this on the outer half of the radii.
    pub noncompact_threshold: f64,
    pub tail: TailConfig,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        Self {
            berezin_radii: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            angles: 64,
            tail_radii: vec![1.0, 2.0, 3.0],
            berezin_threshold: 1e-2,
            tail_threshold: 1e-1,
            noncompact_threshold: 0.1,
            tail: TailConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactnessVerdict {
    pub berezin_radii: Vec<f64>,
    pub berezin_sup_at_radius: Vec<f64>,
    pub tail_radii: Vec<f64>,
    pub tail_norm_at_radius: Vec<f64>,
    pub tail_lower_estimate: bool,
    pub verdict: Verdict,
    pub berezin_threshold: f64,
    pub tail_threshold: f64,
    pub noncompact_threshold: f64,
}

/// Sup of `|T~|` over `angles` points of the circle `|z| = rho`.
pub fn berezin_circle_sup(t: &OperatorMatrix, rho: f64, angles: usize) -> f64 {
    circle_samples(&[rho], angles.max(1))
        .iter()
        .map(|z| berezin_of_matrix(t, z.component(0)).norm())
        .fold(0.0, f64::max)
}

pub fn compactness_verdict(
    t: &OperatorMatrix,
    p: ExponentPair,
    w: &Weight,
    cfg: &VerdictConfig,
) -> Result<CompactnessVerdict> {
    let berezin: Vec<f64> = cfg
        .berezin_radii
        .par_iter()
        .map(|&rho| berezin_circle_sup(t, rho, cfg.angles))
        .collect();
    let tails: Vec<TailEstimate> = cfg
        .tail_radii
        .iter()
        .map(|&r| tail_norm(t, p, w, r, &cfg.tail))
        .collect::<Result<_>>()?;
    let tail_vals: Vec<f64> = tails.iter().map(|e| e.value).collect();
    let verdict = decide(&cfg.berezin_radii, &berezin, &tail_vals, cfg);
    Ok(CompactnessVerdict {
        berezin_radii: cfg.berezin_radii.clone(),
        berezin_sup_at_radius: berezin,
        tail_radii: cfg.tail_radii.clone(),
        tail_norm_at_radius: tail_vals,
        tail_lower_estimate: tails.iter().any(|e| e.lower_estimate),
        verdict,
        berezin_threshold: cfg.berezin_threshold,
        tail_threshold: cfg.tail_threshold,
        noncompact_threshold: cfg.noncompact_threshold,
    })
}

fn decide(radii: &[f64], berezin: &[f64], tails: &[f64], cfg: &VerdictConfig) -> Verdict {
    let last_b = berezin.last().copied().unwrap_or(f64::NAN);
    let last_t = tails.last().copied().unwrap_or(f64::NAN);
    let monotone = tails.windows(2).all(|w| w[1] <= w[0] + 1e-10);
    if last_b < cfg.berezin_threshold && last_t < cfg.tail_threshold && monotone {
        return Verdict::CompactConsistent;
    }
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    let outer: Vec<f64> = radii
        .iter()
        .zip(berezin)
        .filter(|(r, _)| **r >= rmax / 2.0)
        .map(|(_, b)| *b)
        .collect();
    if !outer.is_empty() && outer.iter().all(|b| *b > cfg.noncompact_threshold) {
        return Verdict::NonCompactConsistent;
    }
    Verdict::Inconclusive
}
