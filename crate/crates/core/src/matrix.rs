//! Truncated operator calculus on `F^2_alpha` (n = 1) and grid discretizations
//! of weighted Fock projections.

use crate::error::{invalid, Error, Result};
use crate::fock::{FockParams, SymbolFn};
use crate::numerics::{
    build_grid, composite_gauss_legendre, inner, norm_sq, ComplexPoint, CubeRule, GridSpec,
    QuadratureGrid, CHUNK,
};
use crate::weights::{
    doubling_constant, joint_characteristic, lattice_constant, sentinel, CharacteristicReport,
    ExponentPair, ScanSpec, Weight,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const MAX_DEGREE: usize = 200;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Operator on span{e_0, ..., e_N} in the orthonormal basis
/// `e_m(z) = sqrt(alpha^m / m!) z^m` of `F^2_alpha`, n = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub entries: DMatrix<Complex64>,
    pub degree: usize,
    pub params: FockParams,
}

#[derive(Serialize, Deserialize)]
struct FlatMatrix {
    degree: usize,
    alpha: f64,
    /// Row-major `[re, im, re, im, ...]`.
    entries: Vec<f64>,
}

impl Serialize for OperatorMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.degree + 1;
        let mut entries = Vec::with_capacity(2 * d * d);
        for i in 0..d {
            for j in 0..d {
                let v = self.entries[(i, j)];
                entries.push(v.re);
                entries.push(v.im);
            }
        }
        FlatMatrix {
            degree: self.degree,
            alpha: self.params.alpha,
            entries,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for OperatorMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = FlatMatrix::deserialize(d)?;
        let n = f.degree + 1;
        if f.entries.len() != 2 * n * n {
            return Err(serde::de::Error::custom("entry count does not match degree"));
        }
        let params = FockParams::new(f.alpha, 1).map_err(serde::de::Error::custom)?;
        let entries =
            DMatrix::from_fn(n, n, |i, j| Complex64::new(f.entries[2 * (i * n + j)], f.entries[2 * (i * n + j) + 1]));
        Ok(Self {
            entries,
            degree: f.degree,
            params,
        })
    }
}

impl OperatorMatrix {
    pub fn new(entries: DMatrix<Complex64>, params: FockParams) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::DimensionMismatch("operator matrix must be square".into()));
        }
        if params.n != 1 {
            return Err(Error::DimensionMismatch("monomial matrices are implemented for n = 1".into()));
        }
        if entries.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(invalid("operator matrix entries must be finite"));
        }
        let degree = entries.nrows() - 1;
        Ok(Self {
            entries,
            degree,
            params,
        })
    }

    pub fn identity(params: FockParams, degree: usize) -> Self {
        Self {
            entries: DMatrix::identity(degree + 1, degree + 1),
            degree,
            params,
        }
    }

    pub fn zeros(params: FockParams, degree: usize) -> Self {
        Self {
            entries: DMatrix::zeros(degree + 1, degree + 1),
            degree,
            params,
        }
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    /// Rank-one `c(u) c(u)^H`, the projection onto the truncated `k_u`.
    pub fn kernel_projector(params: FockParams, degree: usize, u: Complex64) -> Self {
        let c = DVector::from_vec(kernel_coefficients(&params, u, degree));
        Self {
            entries: &c * c.adjoint(),
            degree,
            params,
        }
    }

    pub fn mul(&self, other: &OperatorMatrix) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            entries: &self.entries * &other.entries,
            degree: self.degree,
            params: self.params,
        })
    }

    pub fn add(&self, other: &OperatorMatrix) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            entries: &self.entries + &other.entries,
            degree: self.degree,
            params: self.params,
        })
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            entries: self.entries.map(|v| v * c),
            degree: self.degree,
            params: self.params,
        }
    }

    fn check_compatible(&self, other: &OperatorMatrix) -> Result<()> {
        if self.degree != other.degree {
            return Err(Error::DimensionMismatch(format!(
                "degree {} vs {}",
                self.degree, other.degree
            )));
        }
        if self.params != other.params {
            return Err(Error::DimensionMismatch("operators use different alpha".into()));
        }
        Ok(())
    }

    /// Singular values, largest first.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.entries.clone().singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s
    }
}

/// `ln m!` for `m = 0..=n`.
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `e_0(z), ..., e_N(z)`.
pub fn basis_eval(params: &FockParams, z: Complex64, degree: usize) -> Vec<Complex64> {
    scaled_basis(params.alpha, z, degree, ONE)
}

pub(crate) fn scaled_basis(alpha: f64, z: Complex64, degree: usize, start: Complex64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(degree + 1);
    let mut cur = start;
    out.push(cur);
    for m in 1..=degree {
        cur *= z * (alpha / m as f64).sqrt();
        out.push(cur);
    }
    out
}

/// Coordinates of `k_z` in the basis: `c_m(z) = conj(e_m(z)) e^{-alpha|z|^2/2}`.
pub fn kernel_coefficients(params: &FockParams, z: Complex64, degree: usize) -> Vec<Complex64> {
    let start = Complex64::new((-params.alpha * z.norm_sqr() / 2.0).exp(), 0.0);
    scaled_basis(params.alpha, z.conj(), degree, start)
}

/// `<T k_z, k_u>_alpha` for the truncated operator.
pub fn matrix_pairing(t: &OperatorMatrix, z: Complex64, u: Complex64) -> Complex64 {
    let cz = DVector::from_vec(kernel_coefficients(&t.params, z, t.degree));
    let cu = DVector::from_vec(kernel_coefficients(&t.params, u, t.degree));
    cu.dotc(&(&t.entries * cz))
}

/// Berezin transform `<T k_z, k_z>_alpha` of a truncated operator.
pub fn berezin_of_matrix(t: &OperatorMatrix, z: Complex64) -> Complex64 {
    matrix_pairing(t, z, z)
}

/// Smallest box half-width for which the grid path resolves degree `N`.
pub fn required_radius(alpha: f64, degree: usize) -> f64 {
    let n = degree as f64;
    ((n + 10.0 + 8.0 * (n + 1.0).sqrt()) / alpha).sqrt()
}

/// Matrix of `T_phi` with entries `<phi e_m, e_k>_alpha`.
///
/// Radial symbols use an exact one-dimensional rule in `t = alpha |u|^2`;
/// other symbols are integrated on a grid sized for the degree.
pub fn toeplitz_matrix(params: &FockParams, phi: &SymbolFn, degree: usize) -> Result<OperatorMatrix> {
    check_degree(params, degree)?;
    phi.validate(1)?;
    if phi.is_radial() {
        return radial_toeplitz(params, phi, degree);
    }
    let r = (required_radius(params.alpha, degree) * 2.0).ceil() / 2.0;
    let h = if phi.radial_breaks().is_empty() { 0.1 } else { 0.05 };
    let grid = build_grid(GridSpec::new(1, r, h))?;
    toeplitz_matrix_on_grid(params, phi, degree, &grid)
}

fn check_degree(params: &FockParams, degree: usize) -> Result<()> {
    params.validate()?;
    if params.n != 1 {
        return Err(Error::DimensionMismatch("monomial matrices are implemented for n = 1".into()));
    }
    if degree > MAX_DEGREE {
        return Err(Error::Configuration(format!(
            "basis degree {degree} exceeds the supported maximum {MAX_DEGREE}"
        )));
    }
    Ok(())
}

fn radial_toeplitz(params: &FockParams, phi: &SymbolFn, degree: usize) -> Result<OperatorMatrix> {
    let lnf = ln_factorials(degree);
    let a = params.alpha;
    let breaks_t: Vec<f64> = phi.radial_breaks().iter().map(|b| a * b * b).collect();
    let diag: Vec<Complex64> = (0..=degree)
        .into_par_iter()
        .map(|m| {
            let mf = m as f64;
            let top = mf + 10.0 + 8.0 * (mf + 1.0).sqrt();
            let width = (0.5 * (mf + 1.0).sqrt()).max(0.5);
            let panels = (top / width).ceil() as usize;
            let mut cuts: Vec<f64> = (0..=panels).map(|k| top * k as f64 / panels as f64).collect();
            cuts.extend(breaks_t.iter().copied().filter(|t| *t > 0.0 && *t < top));
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            cuts.dedup();
            let rule = composite_gauss_legendre(&cuts, 20)?;
            let mut acc = crate::numerics::ComplexSum::default();
            for (t, w) in rule {
                let dens = (mf * t.ln() - t - lnf[m]).exp();
                let v = phi.radial_profile((t / a).sqrt()).unwrap();
                acc.add(v * (w * dens));
            }
            // mass beyond `top` carries the outermost value
            let outer = phi.radial_profile(f64::MAX.sqrt()).unwrap();
            Ok(acc.value() + outer * upper_gamma_tail(m, top))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut entries = DMatrix::zeros(degree + 1, degree + 1);
    for (m, v) in diag.into_iter().enumerate() {
        entries[(m, m)] = v;
    }
    Ok(OperatorMatrix {
        entries,
        degree,
        params: *params,
    })
}

/// Regularized upper incomplete gamma `Q(m+1, x) = e^{-x} sum_{k<=m} x^k/k!`.
pub fn upper_gamma_tail(m: usize, x: f64) -> f64 {
    let mut term = (-x).exp();
    let mut sum = term;
    for k in 1..=m {
        term *= x / k as f64;
        sum += term;
    }
    sum.min(1.0)
}

/// Regularized lower incomplete gamma `P(m+1, x)`, summed from the side that
/// avoids cancellation.
pub fn lower_gamma_regularized(m: usize, x: f64) -> f64 {
    if x < m as f64 + 1.0 {
        // P(m+1, x) = e^{-x} sum_{k>m} x^k/k!
        let lnf = ln_factorials(m + 1);
        let mut term = ((m + 1) as f64 * x.ln() - x - lnf[m + 1]).exp();
        let mut sum = 0.0;
        let mut k = m + 1;
        while term > 1e-300 && (sum == 0.0 || term > sum * 1e-17) {
            sum += term;
            k += 1;
            term *= x / k as f64;
        }
        sum
    } else {
        1.0 - upper_gamma_tail(m, x)
    }
}

/// Grid path for `toeplitz_matrix`.
pub fn toeplitz_matrix_on_grid(
    params: &FockParams,
    phi: &SymbolFn,
    degree: usize,
    grid: &QuadratureGrid,
) -> Result<OperatorMatrix> {
    check_degree(params, degree)?;
    params.check_grid(grid)?;
    let need = required_radius(params.alpha, degree);
    if grid.radius() < need {
        return Err(Error::Configuration(format!(
            "grid radius {} cannot resolve degree {degree} at alpha = {}: need R >= {need:.3}",
            grid.radius(),
            params.alpha
        )));
    }
    let vals = phi.cell_values(grid);
    Ok(OperatorMatrix {
        entries: weighted_gram(params, degree, grid, &vals),
        degree,
        params: *params,
    })
}

/// `G[k, m] = sum_i conj(e_k(u_i)) e_m(u_i) v_i (alpha/pi) e^{-alpha|u_i|^2} h^2`.
pub fn weighted_gram(
    params: &FockParams,
    degree: usize,
    grid: &QuadratureGrid,
    vals: &[Complex64],
) -> DMatrix<Complex64> {
    let d = degree + 1;
    let a = params.alpha;
    let scale = params.gauss_const() * grid.node_weight();
    let chunks = grid.len().div_ceil(CHUNK);
    let partials: Vec<DMatrix<Complex64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(grid.len());
            let mut e = DMatrix::<Complex64>::zeros(hi - lo, d);
            let mut f = DMatrix::<Complex64>::zeros(hi - lo, d);
            let mut x = [0.0; 2];
            for i in lo..hi {
                grid.node_into(i, &mut x);
                let u = Complex64::new(x[0], x[1]);
                let s = (scale * (-a * norm_sq(&x)).exp()).sqrt();
                let row = scaled_basis(a, u, degree, Complex64::new(s, 0.0));
                for (m, v) in row.into_iter().enumerate() {
                    e[(i - lo, m)] = v;
                    f[(i - lo, m)] = v * vals[i];
                }
            }
            e.ad_mul(&f)
        })
        .collect();
    let mut entries = DMatrix::<Complex64>::zeros(d, d);
    for p in &partials {
        entries += p;
    }
    entries
}

/// `sum_k prod_j terms[k][j]`.
pub fn algebra_compose(terms: &[Vec<OperatorMatrix>]) -> Result<OperatorMatrix> {
    let first = terms
        .iter()
        .find_map(|t| t.first())
        .ok_or_else(|| invalid("empty operator expression"))?;
    let mut total = OperatorMatrix::zeros(first.params, first.degree);
    for product in terms {
        let mut it = product.iter();
        let Some(head) = it.next() else {
            return Err(invalid("empty product in operator expression"));
        };
        let mut acc = head.clone();
        for m in it {
            acc = acc.mul(m)?;
        }
        total = total.add(&acc)?;
    }
    Ok(total)
}

/// Linear map between finite-dimensional Euclidean spaces.
pub trait LinearOperator: Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64>;
    fn apply_adjoint(&self, y: &[Complex64]) -> Vec<Complex64>;
}

impl LinearOperator for OperatorMatrix {
    fn dim_in(&self) -> usize {
        self.dim()
    }

    fn dim_out(&self) -> usize {
        self.dim()
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let v = DVector::from_column_slice(x);
        (&self.entries * v).iter().copied().collect()
    }

    fn apply_adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        let v = DVector::from_column_slice(y);
        self.entries.ad_mul(&v).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerIterationConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for PowerIterationConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 10_000,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub value: f64,
    pub iterations: usize,
    pub relative_gap: f64,
}

fn vnorm(x: &[Complex64]) -> f64 {
    crate::numerics::compensated_sum(x.iter().map(|v| v.norm_sqr())).sqrt()
}

/// Largest singular value by power iteration on `A^* A` from a seeded start.
pub fn norm2_power_iteration<A: LinearOperator + ?Sized>(
    a: &A,
    cfg: PowerIterationConfig,
) -> Result<PowerResult> {
    let n = a.dim_in();
    if n == 0 {
        return Ok(PowerResult {
            value: 0.0,
            iterations: 0,
            relative_gap: 0.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let mut prev = f64::NAN;
    let mut gap = f64::INFINITY;
    for it in 1..=cfg.max_iterations {
        let nx = vnorm(&x);
        if nx == 0.0 {
            return Ok(PowerResult {
                value: 0.0,
                iterations: it,
                relative_gap: 0.0,
            });
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let y = a.apply(&x);
        let est = vnorm(&y);
        if est == 0.0 {
            return Ok(PowerResult {
                value: 0.0,
                iterations: it,
                relative_gap: 0.0,
            });
        }
        if prev.is_finite() {
            gap = (est - prev).abs() / est;
            if gap < cfg.tolerance {
                return Ok(PowerResult {
                    value: est,
                    iterations: it,
                    relative_gap: gap,
                });
            }
        }
        prev = est;
        x = a.apply_adjoint(&y);
    }
    Err(Error::NonConvergence {
        estimate: prev,
        gap,
        iterations: cfg.max_iterations,
    })
}

fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // sum conj(a_i) b_i
    let mut acc = crate::numerics::ComplexSum::default();
    for (x, y) in a.iter().zip(b) {
        acc.add(x.conj() * y);
    }
    acc.value()
}

/// Largest eigenvalue of the symmetric tridiagonal matrix `(diag, off)` by
/// Sturm-sequence bisection.
fn tridiagonal_top(diag: &[f64], off: &[f64]) -> f64 {
    let k = diag.len();
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for i in 0..k {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < k { off[i].abs() } else { 0.0 };
        hi = hi.max(diag[i] + r);
        lo = lo.min(diag[i] - r);
    }
    // eigenvalues below x
    let count = |x: f64| {
        let mut c = 0;
        let mut d = 1.0;
        for i in 0..k {
            let b2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
            d = diag[i] - x - if i > 0 { b2 / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * (x.abs() + 1.0);
            }
            if d < 0.0 {
                c += 1;
            }
        }
        c
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count(mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest singular value from Lanczos on `A^* A` with full reorthogonalization.
///
/// Same start vector and stopping rule as `norm2_power_iteration`; much faster
/// when the top singular values cluster. `max_iterations` caps the Krylov dimension.
pub fn norm2_lanczos<A: LinearOperator + ?Sized>(a: &A, cfg: PowerIterationConfig) -> Result<PowerResult> {
    let n = a.dim_in();
    if n == 0 {
        return Ok(PowerResult {
            value: 0.0,
            iterations: 0,
            relative_gap: 0.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let nv = vnorm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let kmax = cfg.max_iterations.min(n);
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut diag = Vec::new();
    let mut off: Vec<f64> = Vec::new();
    let mut prev = f64::NAN;
    let mut gap = f64::INFINITY;
    let mut below = 0;
    for it in 1..=kmax {
        let mut w = a.apply_adjoint(&a.apply(&v));
        let al = cdot(&v, &w).re;
        basis.push(v);
        // two passes of Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for q in &basis {
                let c = cdot(q, &w);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        diag.push(al);
        let theta = tridiagonal_top(&diag, &off).max(0.0);
        let est = theta.sqrt();
        let beta = vnorm(&w);
        if prev.is_finite() && est > 0.0 {
            gap = (est - prev).abs() / est;
            below = if gap < cfg.tolerance { below + 1 } else { 0 };
        }
        if below >= 2 || beta <= 1e-14 * theta.max(f64::MIN_POSITIVE) || it == n || est == 0.0 {
            return Ok(PowerResult {
                value: est,
                iterations: it,
                relative_gap: if it == n || beta <= 1e-14 * theta { 0.0 } else { gap },
            });
        }
        prev = est;
        off.push(beta);
        v = w.into_iter().map(|x| x / beta).collect();
    }
    Err(Error::NonConvergence {
        estimate: prev,
        gap,
        iterations: kmax,
    })
}

/// Discretized `P_alpha` (optionally `T_phi`) between `L^2_{alpha,sigma}` and
/// `L^2_{alpha,w}` on a grid, conjugated into Euclidean coordinates.
///
/// With `s_j^2 = e^{-alpha|u_j|^2} sigma(u_j) h^{2n}` and `t_i^2` likewise for `w`,
/// the stored map is `B_ij = t_i kappa(z_i, u_j) phi(u_j) h^{2n} / s_j`, whose
/// spectral norm is the weighted operator norm.
#[derive(Debug, Clone)]
pub struct WeightedGridOperator {
    pub params: FockParams,
    pub p: f64,
    nodes: Vec<f64>,
    ln_t: Vec<f64>,
    ln_s: Vec<f64>,
    phi: Option<Vec<Complex64>>,
    dense: Option<Vec<Complex64>>,
    len: usize,
    ln_const: f64,
}

/// Dense storage up to this many nodes; matrix-free above.
pub const DENSE_LIMIT: usize = 2500;

/// Operator grid used by default for point estimates.
pub const DEFAULT_OPERATOR_SPACING: f64 = 0.2;

pub fn grid_operator_build(
    params: &FockParams,
    sigma: &Weight,
    w: &Weight,
    p: ExponentPair,
    grid: &QuadratureGrid,
) -> Result<WeightedGridOperator> {
    build_operator(params, sigma, w, p, None, grid)
}

/// `T_phi` on `L^2_{alpha,w}`, discretized like `grid_operator_build`.
pub fn toeplitz_grid_operator(
    params: &FockParams,
    phi: &SymbolFn,
    w: &Weight,
    grid: &QuadratureGrid,
) -> Result<WeightedGridOperator> {
    let vals = phi.cell_values(grid);
    build_operator(params, w, w, ExponentPair::new(2.0)?, Some(vals), grid)
}

fn build_operator(
    params: &FockParams,
    sigma: &Weight,
    w: &Weight,
    p: ExponentPair,
    phi: Option<Vec<Complex64>>,
    grid: &QuadratureGrid,
) -> Result<WeightedGridOperator> {
    params.validate()?;
    params.check_grid(grid)?;
    if !sigma.strictly_positive() {
        return Err(Error::Domain(format!("source weight {} has zeros", sigma.name())));
    }
    let d = grid.real_dim();
    let a = params.alpha;
    let ln_h = grid.node_weight().ln();
    let mut nodes = vec![0.0; grid.len() * d];
    nodes
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, out)| grid.node_into(i, out));
    let pp = p.p;
    let ln_t: Vec<f64> = nodes
        .par_chunks(d)
        .map(|x| (-pp * a * norm_sq(x) / 2.0 + w.ln_eval(x) + ln_h) / pp)
        .collect();
    let ln_s: Vec<f64> = nodes
        .par_chunks(d)
        .map(|x| (-pp * a * norm_sq(x) / 2.0 + sigma.ln_eval(x) + ln_h) / pp)
        .collect();
    if ln_s.iter().chain(&ln_t).any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Domain("weights are not finite on the grid".into()));
    }
    let len = grid.len();
    let mut op = WeightedGridOperator {
        params: *params,
        p: pp,
        nodes,
        ln_t,
        ln_s,
        phi,
        dense: None,
        len,
        ln_const: params.gauss_const().ln() + ln_h,
    };
    if len <= DENSE_LIMIT {
        let mut m = vec![ZERO; len * len];
        m.par_chunks_mut(len).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = op.entry(i, j);
            }
        });
        op.dense = Some(m);
    }
    Ok(op)
}

impl WeightedGridOperator {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = 2 * self.params.n;
        &self.nodes[i * d..(i + 1) * d]
    }

    /// `B_ij` in Euclidean coordinates.
    #[inline]
    fn entry(&self, i: usize, j: usize) -> Complex64 {
        let z = self.node(i);
        let u = self.node(j);
        let a = self.params.alpha;
        // kappa(z,u) = (alpha/pi)^n e^{alpha <z,u> - alpha |u|^2}
        let e = inner(z, u) * a - a * norm_sq(u) + (self.ln_const + self.ln_t[i] - self.ln_s[j]);
        let v = e.exp();
        match &self.phi {
            Some(ph) => v * ph[j],
            None => v,
        }
    }

    /// Unweighted action on node values: `(P f)(z_i) = sum_j kappa(z_i,u_j) [phi_j] f_j h^{2n}`.
    pub fn apply_raw(&self, f: &[Complex64]) -> Vec<Complex64> {
        let a = self.params.alpha;
        let c = self.ln_const;
        (0..self.len)
            .into_par_iter()
            .map(|i| {
                let z = self.node(i);
                let mut acc = crate::numerics::ComplexSum::default();
                for (j, fj) in f.iter().enumerate() {
                    let u = self.node(j);
                    let mut v = (inner(z, u) * a - a * norm_sq(u) + c).exp() * fj;
                    if let Some(ph) = &self.phi {
                        v *= ph[j];
                    }
                    acc.add(v);
                }
                acc.value()
            })
            .collect()
    }

    /// Node coordinates as points.
    pub fn points(&self) -> Vec<ComplexPoint> {
        (0..self.len)
            .map(|i| ComplexPoint {
                coords: self.node(i).to_vec(),
            })
            .collect()
    }
}

impl LinearOperator for WeightedGridOperator {
    fn dim_in(&self) -> usize {
        self.len
    }

    fn dim_out(&self) -> usize {
        self.len
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.len;
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = crate::numerics::ComplexSum::default();
                match &self.dense {
                    Some(m) => {
                        let row = &m[i * n..(i + 1) * n];
                        for (b, v) in row.iter().zip(x) {
                            acc.add(b * v);
                        }
                    }
                    None => {
                        for (j, v) in x.iter().enumerate() {
                            acc.add(self.entry(i, j) * v);
                        }
                    }
                }
                acc.value()
            })
            .collect()
    }

    fn apply_adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        let n = self.len;
        (0..n)
            .into_par_iter()
            .map(|j| {
                let mut acc = crate::numerics::ComplexSum::default();
                match &self.dense {
                    Some(m) => {
                        for (i, v) in y.iter().enumerate() {
                            acc.add(m[i * n + j].conj() * v);
                        }
                    }
                    None => {
                        for (i, v) in y.iter().enumerate() {
                            acc.add(self.entry(i, j).conj() * v);
                        }
                    }
                }
                acc.value()
            })
            .collect()
    }
}

/// Operator whose norm is bracketed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BracketProblem {
    /// `T_phi` on `L^p_{alpha,w}`.
    Toeplitz { phi: SymbolFn, w: Weight, p: f64 },
    /// `P_alpha : L^p_{alpha,sigma} -> L^p_{alpha,w}`.
    Projection { sigma: Weight, w: Weight, p: f64 },
}

impl BracketProblem {
    fn parts(&self) -> (&Weight, &Weight, Option<&SymbolFn>, f64) {
        match self {
            BracketProblem::Toeplitz { phi, w, p } => (w, w, Some(phi), *p),
            BracketProblem::Projection { sigma, w, p } => (w, sigma, None, *p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketConfig {
    /// Cube side.
    pub r: f64,
    /// Scan for the characteristic, the doubling test and the lattice constant.
    pub scan: ScanSpec,
    /// Grid for cube integrals.
    pub cube_grid: GridSpec,
    /// Grid for the point estimate (p = 2); lower-bound cubes stay inside it.
    pub operator_grid: Option<GridSpec>,
    pub power: PowerIterationConfig,
}

impl Default for BracketConfig {
    fn default() -> Self {
        Self {
            r: 1.0,
            scan: ScanSpec::default(),
            cube_grid: GridSpec::new(1, 8.0, 0.05),
            operator_grid: Some(GridSpec::new(1, 4.0, DEFAULT_OPERATOR_SPACING)),
            power: PowerIterationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketWitnesses {
    pub lower_center: ComplexPoint,
    /// `(alpha/pi)^n e^{-5 n alpha r^2/4}` (p > 1) or `(alpha r^2/pi)^n e^{-n alpha r^2}` (p = 1).
    pub lower_prefactor: f64,
    pub lower_cubes: usize,
    pub characteristic: CharacteristicReport,
    /// Same characteristic from block sums of grid nodes.
    pub characteristic_blocks: f64,
    pub doubling_constant: f64,
    pub doubling_suspect: bool,
    pub lattice_constant: f64,
    /// `sum_mu e^{-p' alpha |mu|^2/8}` over `r Z^{2n}` (p > 1).
    pub dual_sum: f64,
    /// `sum_mu C^{|mu|} e^{-p alpha |mu|^2/8}` (or `e^{-alpha|mu|^2/4}` at p = 1), truncated part.
    pub schur_sum: f64,
    /// Rigorous bound for the discarded lattice tail.
    pub schur_remainder: f64,
    /// `(alpha/pi)^n e^{n alpha r^2} r^{2n}`.
    pub upper_prefactor: f64,
    pub power_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormBracket {
    pub lower: f64,
    pub upper: f64,
    pub point_estimate: Option<f64>,
    pub method: String,
    pub witnesses: BracketWitnesses,
}

impl NormBracket {
    pub const CSV_HEADER: [&'static str; 5] = ["lower", "point", "upper", "method", "witnesses"];

    pub fn csv_fields(&self) -> Vec<String> {
        use crate::weights::fmt_num;
        let w = &self.witnesses;
        let wit = format!(
            "lower_at={:?};C={};doubling={};char={};char_blocks={};dual_sum={};schur={}+{}",
            w.lower_center.coords,
            fmt_num(w.lattice_constant),
            fmt_num(w.doubling_constant),
            fmt_num(w.characteristic.value),
            fmt_num(w.characteristic_blocks),
            fmt_num(w.dual_sum),
            fmt_num(w.schur_sum),
            fmt_num(w.schur_remainder)
        );
        vec![
            fmt_num(self.lower),
            self.point_estimate.map_or_else(|| "nan".to_string(), fmt_num),
            fmt_num(self.upper),
            self.method.clone(),
            wit,
        ]
    }
}

/// `sum_{k in Z} e^{-c k^2}`.
fn theta(c: f64) -> f64 {
    let mut s = 1.0;
    let mut k = 1.0f64;
    loop {
        let t = (-c * k * k).exp();
        s += 2.0 * t;
        if t < 1e-20 * s {
            return s;
        }
        k += 1.0;
    }
}

/// `sum_{mu in r Z^{2n}, |mu| <= m} e^{|mu| ln C - b |mu|^2}` and a rigorous
/// bound for the terms with `|mu| > m`.
pub fn schur_sum(n: usize, r: f64, ln_c: f64, b: f64, m: f64) -> (f64, f64) {
    let d = 2 * n;
    let k = (m / r).floor() as i64;
    let side = (2 * k + 1) as usize;
    let f = |t: f64| (t * ln_c - b * t * t).exp();
    let mut acc = crate::numerics::NeumaierSum::default();
    let mut idx = vec![0i64; d];
    for mut t in 0..side.pow(d as u32) {
        for q in (0..d).rev() {
            idx[q] = (t % side) as i64 - k;
            t /= side;
        }
        let len = r * (idx.iter().map(|i| (i * i) as f64).sum::<f64>()).sqrt();
        if len <= m {
            acc.add(f(len));
        }
    }
    // shells (m + j, m + j + 1]: the cubes of side r around those lattice points
    // lie in the annulus widened by half a cube diagonal
    let peak = if b > 0.0 { ln_c / (2.0 * b) } else { f64::INFINITY };
    let ln_nfact: f64 = (1..=n).map(|i| (i as f64).ln()).sum();
    let half_diag = r * (d as f64).sqrt() / 2.0;
    let ball = |rho: f64| (n as f64 * PI.ln() + d as f64 * rho.max(0.0).ln() - ln_nfact).exp();
    let mut rem = 0.0;
    let mut j = 0.0;
    loop {
        let lo = m + j;
        let hi = lo + 1.0;
        let fmax = f(peak.clamp(lo, hi));
        let count = (ball(hi + half_diag) - ball(lo - half_diag)) / r.powi(d as i32);
        let term = count * fmax;
        rem += term;
        if lo > peak && term < 1e-18 * (acc.value() + rem) {
            break;
        }
        if !rem.is_finite() || j > 1e4 {
            rem = f64::INFINITY;
            break;
        }
        j += 1.0;
    }
    (acc.value(), rem)
}

/// Characteristic from sums over blocks of side `r/4` of grid nodes.
///
/// Requires the grid to be aligned: `r/4` a multiple of `h` and `R` a multiple of `r/4`.
pub fn characteristic_by_blocks(
    w: &Weight,
    sigma: &Weight,
    p: ExponentPair,
    phi: Option<&SymbolFn>,
    r: f64,
    scan: ScanSpec,
    grid: &QuadratureGrid,
) -> Result<f64> {
    if grid.n() != 1 {
        return Err(Error::DimensionMismatch("block characteristic is implemented for n = 1".into()));
    }
    let s = r / 4.0;
    let h = grid.h();
    let per = s / h;
    let nb = grid.radius() / s;
    let aligned = |v: f64| (v - v.round()).abs() < 1e-9 && v.round() >= 1.0;
    if !(aligned(per) && aligned(nb)) || (scan.step / s - (scan.step / s).round()).abs() > 1e-9 {
        return Err(Error::Configuration(format!(
            "block characteristic needs r/4 = {s} to be a multiple of h = {h}, R and the scan step multiples of r/4"
        )));
    }
    let per = per.round() as usize;
    let blocks = 2 * nb.round() as usize;
    let cells = grid.cells_per_axis();
    let one = p.is_one();
    let e = if one { 0.0 } else { p.dual_power() };
    let dens = |x: &[f64]| -> f64 {
        let a = phi.map_or(1.0, |f| f.abs(x));
        if a == 0.0 {
            0.0
        } else if one {
            a * (-sigma.ln_eval(x)).exp()
        } else {
            (p.p_conj * a.ln() - e * sigma.ln_eval(x)).exp()
        }
    };
    // block sums of w and of the dual density (or its maximum when p = 1)
    let sums: Vec<(f64, f64)> = (0..blocks * blocks)
        .into_par_iter()
        .map(|b| {
            let (bi, bj) = (b / blocks, b % blocks);
            let mut sw = crate::numerics::NeumaierSum::default();
            let mut sd = crate::numerics::NeumaierSum::default();
            let mut md = 0.0f64;
            let mut x = [0.0; 2];
            for ii in 0..per {
                for jj in 0..per {
                    let idx = (bi * per + ii) * cells + bj * per + jj;
                    grid.node_into(idx, &mut x);
                    sw.add(w.eval(&x));
                    let v = dens(&x);
                    sd.add(v);
                    md = md.max(v);
                }
            }
            (sw.value(), if one { md } else { sd.value() })
        })
        .collect();
    let vol = r * r;
    let hw = grid.node_weight();
    let centers = scan.centers(1);
    let mut best = f64::NEG_INFINITY;
    for c in &centers {
        // lower-left block index of the cube
        let b0 = ((c[0] - r / 2.0 + grid.radius()) / s).round() as i64;
        let b1 = ((c[1] - r / 2.0 + grid.radius()) / s).round() as i64;
        if b0 < 0 || b1 < 0 || b0 + 4 > blocks as i64 || b1 + 4 > blocks as i64 {
            return Err(Error::Truncation {
                required_radius: c[0].abs().max(c[1].abs()) + r / 2.0,
                grid_radius: grid.radius(),
            });
        }
        let mut sw = crate::numerics::NeumaierSum::default();
        let mut sd = crate::numerics::NeumaierSum::default();
        let mut md = 0.0f64;
        for di in 0..4 {
            for dj in 0..4 {
                let (a, d) = sums[(b0 as usize + di) * blocks + b1 as usize + dj];
                sw.add(a);
                sd.add(d);
                md = md.max(d);
            }
        }
        let avg_w = sw.value() * hw / vol;
        let v = if one {
            avg_w * md
        } else {
            avg_w * (sd.value() * hw / vol).powf(p.p / p.p_conj)
        };
        let v = sentinel(v);
        if v > best {
            best = v;
        }
    }
    Ok(best)
}

/// Certified lower bound, lattice Schur upper bound and (p = 2) a grid point estimate.
pub fn norm_bracket(
    params: &FockParams,
    problem: &BracketProblem,
    cfg: &BracketConfig,
) -> Result<NormBracket> {
    params.validate()?;
    let (w, sigma, phi, p) = problem.parts();
    let pe = ExponentPair::new(p)?;
    let r = cfg.r;
    let n = params.n;
    let a = params.alpha;
    let nf = n as f64;
    let cube_grid = build_grid(cfg.cube_grid)?;
    params.check_grid(&cube_grid)?;
    let mag = phi.map(|f| f.magnitude());
    let mag_ref: Option<crate::weights::Magnitude<'_>> = mag.as_ref().map(|m| m as _);

    let characteristic = joint_characteristic(w, sigma, pe, r, mag_ref, cfg.scan, &cube_grid)?;
    let characteristic_blocks = if n == 1 {
        characteristic_by_blocks(w, sigma, pe, phi, r, cfg.scan, &cube_grid).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };

    // lower bound over cubes inside the operator box (or the scan)
    let limit = cfg
        .operator_grid
        .map_or(f64::INFINITY, |g| g.radius);
    let lower_centers: Vec<Vec<f64>> = cfg
        .scan
        .centers(n)
        .into_iter()
        .filter(|c| c.iter().all(|v| v.abs() + r / 2.0 <= limit + 1e-12))
        .collect();
    let h = cube_grid.h();
    let (lower_prefactor, certificate): (f64, Box<dyn Fn(&[f64]) -> f64 + Sync>) = if pe.is_one() {
        let pref = (a * r * r / PI).powi(n as i32) * (-nf * a * r * r).exp();
        let f = move |c: &[f64]| {
            crate::weights::joint_cube_product(w, sigma, pe, mag_ref, c, r, h)
        };
        (pref, Box::new(f))
    } else {
        let pref = params.gauss_const() * (-5.0 * nf * a * r * r / 4.0).exp();
        let e = pe.dual_power();
        let f = move |c: &[f64]| {
            let rule = CubeRule::new(c, r, h);
            let mw = rule.integrate_real(|x| w.eval(x));
            let md = rule.integrate_real(|x| {
                let m = mag_ref.map_or(1.0, |f| f(x));
                if m == 0.0 {
                    0.0
                } else {
                    (pe.p_conj * m.ln() - e * sigma.ln_eval(x)).exp()
                }
            });
            mw.powf(1.0 / pe.p) * md.powf(1.0 / pe.p_conj)
        };
        (pref, Box::new(f))
    };
    let (lower, lower_center) = if lower_centers.is_empty() {
        (0.0, ComplexPoint::origin(n))
    } else {
        let (v, i) = crate::weights::scan_max(&lower_centers, |c| Ok(certificate(c)))?;
        (
            v * lower_prefactor,
            ComplexPoint {
                coords: lower_centers[i].clone(),
            },
        )
    };

    // upper bound
    let dscan = ScanSpec::new(cfg.scan.radius.max(2.0 * r), cfg.scan.step.max(r / 2.0));
    let doubling = doubling_constant(w, r, dscan, &cube_grid)?;
    let lattice = lattice_constant(w, r, cfg.scan.radius, &cube_grid)?;
    let upper_prefactor =
        params.gauss_const() * (nf * a * r * r).exp() * r.powi(2 * n as i32);
    let ln_c = lattice.slope.max(0.0);
    let (dual_sum, schur, rem, upper_raw) = if pe.is_one() {
        let (s, rem) = schur_sum(n, r, ln_c, a / 4.0, cfg.scan.radius);
        let u = upper_prefactor * (s + rem) * characteristic.value;
        (f64::NAN, s, rem, u)
    } else {
        let dual = theta(pe.p_conj * a * r * r / 8.0).powi(2 * n as i32);
        let (s, rem) = schur_sum(n, r, ln_c, pe.p * a / 8.0, cfg.scan.radius);
        let u = upper_prefactor
            * dual.powf(1.0 / pe.p_conj)
            * (s + rem).powf(1.0 / pe.p)
            * characteristic.value.powf(1.0 / pe.p);
        (dual, s, rem, u)
    };
    let (upper, upper_reason) = if doubling.suspect {
        (
            f64::INFINITY,
            Some("target weight is not doubling on the scan (doubling ratio grows with radius)".into()),
        )
    } else if !characteristic.value.is_finite() {
        (f64::INFINITY, Some("characteristic is infinite".into()))
    } else {
        (sentinel(upper_raw), None)
    };

    // point estimate
    let (point_estimate, power_iterations) = match (cfg.operator_grid, p == 2.0) {
        (Some(spec), true) => {
            let og = build_grid(spec)?;
            let op = match problem {
                BracketProblem::Toeplitz { phi, w, .. } => toeplitz_grid_operator(params, phi, w, &og)?,
                BracketProblem::Projection { sigma, w, .. } => {
                    grid_operator_build(params, sigma, w, pe, &og)?
                }
            };
            let res = norm2_lanczos(&op, cfg.power)?;
            (Some(res.value), Some(res.iterations))
        }
        _ => (None, None),
    };

    let method = match problem {
        BracketProblem::Toeplitz { .. } => "toeplitz test-function/lattice-schur",
        BracketProblem::Projection { .. } => "projection test-function/lattice-schur",
    };
    Ok(NormBracket {
        lower,
        upper,
        point_estimate,
        method: method.to_string(),
        witnesses: BracketWitnesses {
            lower_center,
            lower_prefactor,
            lower_cubes: lower_centers.len(),
            characteristic,
            characteristic_blocks,
            doubling_constant: doubling.report.value,
            doubling_suspect: doubling.suspect,
            lattice_constant: lattice.constant,
            dual_sum,
            schur_sum: schur,
            schur_remainder: rem,
            upper_prefactor,
            power_iterations,
            upper_reason,
        },
    })
}
