//! Tensor midpoint quadrature on boxes `[-R, R]^{2n}` and compensated,
//! thread-count invariant reductions.

use crate::error::{invalid, Error, Result};
use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Nodes per reduction chunk. Fixed so that results do not depend on the
/// number of worker threads.
pub const CHUNK: usize = 4096;

pub const DEFAULT_NODE_CAP: u128 = 100_000_000;

/// Node cap, overridable through `FWL_NODE_CAP`.
pub fn node_cap() -> u128 {
    std::env::var("FWL_NODE_CAP")
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|v| v.is_finite() && *v >= 1.0)
        .map(|v| v as u128)
        .unwrap_or(DEFAULT_NODE_CAP)
}

/// A point of C^n stored as interleaved (re, im) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplexPoint {
    pub coords: Vec<f64>,
}

impl ComplexPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(invalid(format!(
                "a point of C^n needs an even, positive number of real coordinates (got {})",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        Ok(Self { coords })
    }

    pub fn origin(n: usize) -> Self {
        Self {
            coords: vec![0.0; 2 * n],
        }
    }

    pub fn from_complex(zs: &[Complex64]) -> Self {
        let mut coords = Vec::with_capacity(2 * zs.len());
        for z in zs {
            coords.push(z.re);
            coords.push(z.im);
        }
        Self { coords }
    }

    /// Point `(z, 0, ..., 0)` in C^n.
    pub fn on_first_axis(z: Complex64, n: usize) -> Self {
        let mut p = Self::origin(n);
        p.coords[0] = z.re;
        p.coords[1] = z.im;
        p
    }

    pub fn dim(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn component(&self, j: usize) -> Complex64 {
        Complex64::new(self.coords[2 * j], self.coords[2 * j + 1])
    }

    pub fn components(&self) -> Vec<Complex64> {
        self.coords
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect()
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.coords)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }
}

/// `|x|^2` for a real coordinate vector.
#[inline]
pub fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `|x - y|^2`.
#[inline]
pub fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Hermitian product `<u, z> = sum u_j conj(z_j)` on interleaved coordinates.
#[inline]
pub fn inner(u: &[f64], z: &[f64]) -> Complex64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (a, b) in u.chunks_exact(2).zip(z.chunks_exact(2)) {
        // (a0 + i a1)(b0 - i b1)
        re += a[0] * b[0] + a[1] * b[1];
        im += a[1] * b[0] - a[0] * b[1];
    }
    Complex64::new(re, im)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "h")]
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(n: usize, radius: f64, spacing: f64) -> Self {
        Self {
            n,
            radius,
            spacing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("grid dimension n must be positive"));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(invalid("grid radius R must be finite and positive"));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(invalid("grid spacing h must be finite and positive"));
        }
        if self.spacing > self.radius {
            return Err(invalid("grid spacing h must not exceed R"));
        }
        Ok(())
    }

    /// Number of cells on each half-axis.
    pub fn half_cells(&self) -> usize {
        let q = self.radius / self.spacing;
        let c = q.round();
        if (q - c).abs() <= 1e-9 * q.max(1.0) {
            c as usize
        } else {
            q.ceil() as usize
        }
    }

    pub fn cells_per_axis(&self) -> usize {
        2 * self.half_cells()
    }

    pub fn node_count(&self) -> u128 {
        (self.cells_per_axis() as u128).saturating_pow(2 * self.n as u32)
    }

    /// Index of the node nearest to `x` on the grid described by these parameters.
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let half = self.half_cells();
        let cells = 2 * half;
        let h = self.radius / half as f64;
        let mut idx = 0usize;
        for &v in x {
            let k = ((v + self.radius) / h).floor();
            let k = k.clamp(0.0, (cells - 1) as f64) as usize;
            idx = idx * cells + k;
        }
        idx
    }

    /// Same box, spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            spacing: self.spacing / 2.0,
            ..*self
        }
    }
}

/// Midpoint tensor grid on `[-R, R]^{2n}`.
///
/// The spacing actually used is `R / ceil(R/h)` so the cells tile the box
/// exactly. Nodes are indexed lexicographically with axis 0 varying slowest
/// and are generated from the index on demand.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    spec: GridSpec,
    cells: usize,
    h: f64,
    axis: Vec<f64>,
    count: usize,
    node_weight: f64,
}

impl PartialEq for QuadratureGrid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

pub fn build_grid(spec: GridSpec) -> Result<QuadratureGrid> {
    build_grid_with_cap(spec, node_cap())
}

pub fn build_grid_with_cap(spec: GridSpec, cap: u128) -> Result<QuadratureGrid> {
    spec.validate()?;
    let requested = spec.node_count();
    if requested > cap || requested > usize::MAX as u128 {
        return Err(Error::Capacity { requested, cap });
    }
    let half = spec.half_cells();
    let cells = 2 * half;
    let h = spec.radius / half as f64;
    let axis = (0..cells)
        .map(|k| -spec.radius + (k as f64 + 0.5) * h)
        .collect();
    Ok(QuadratureGrid {
        spec,
        cells,
        h,
        axis,
        count: requested as usize,
        node_weight: h.powi(2 * spec.n as i32),
    })
}

impl QuadratureGrid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn real_dim(&self) -> usize {
        2 * self.spec.n
    }

    pub fn radius(&self) -> f64 {
        self.spec.radius
    }

    /// Effective spacing.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn node_weight(&self) -> f64 {
        self.node_weight
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn axis_coords(&self) -> &[f64] {
        &self.axis
    }

    /// Writes the coordinates of node `i` into `out` (length 2n).
    #[inline]
    pub fn node_into(&self, i: usize, out: &mut [f64]) {
        let mut rest = i;
        for k in (0..out.len()).rev() {
            out[k] = self.axis[rest % self.cells];
            rest /= self.cells;
        }
    }

    pub fn node(&self, i: usize) -> ComplexPoint {
        let mut c = vec![0.0; self.real_dim()];
        self.node_into(i, &mut c);
        ComplexPoint { coords: c }
    }

    /// Index of the cell containing `x`, if inside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for &v in x {
            let k = ((v + self.spec.radius) / self.h).floor();
            if !(k >= 0.0 && (k as usize) < self.cells) {
                return None;
            }
            idx = idx * self.cells + k as usize;
        }
        Some(idx)
    }

    /// Index of the nearest node, clamping to the box.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut idx = 0usize;
        for &v in x {
            let k = ((v + self.spec.radius) / self.h).floor();
            let k = k.clamp(0.0, (self.cells - 1) as f64) as usize;
            idx = idx * self.cells + k;
        }
        idx
    }

    /// Whether the closed axis-aligned box `center ± half` lies in the grid box.
    pub fn contains_box(&self, center: &[f64], half: f64) -> bool {
        let tol = 1e-12 * self.spec.radius;
        center
            .iter()
            .all(|c| c.abs() + half <= self.spec.radius + tol)
    }

    /// Evaluates `f` on every node in parallel, preserving node order.
    pub fn map<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        let d = self.real_dim();
        (0..self.count)
            .into_par_iter()
            .with_min_len(CHUNK)
            .map_init(
                || vec![0.0; d],
                |buf, i| {
                    self.node_into(i, buf);
                    f(buf)
                },
            )
            .collect()
    }

    /// `node_weight * sum f(node)` with compensated, thread-count invariant summation.
    pub fn integrate<F>(&self, f: F) -> Result<Complex64>
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        let s = self.reduce_complex(|i, x| {
            let v = f(x);
            if v.re.is_finite() && v.im.is_finite() {
                Ok(v)
            } else {
                Err(non_finite(x, i, format!("{v}")))
            }
        })?;
        Ok(s * self.node_weight)
    }

    pub fn integrate_real<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let s = self.reduce_real(|i, x| {
            let v = f(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(non_finite(x, i, format!("{v}")))
            }
        })?;
        Ok(s * self.node_weight)
    }

    /// Compensated sum of `f(i, node)` over all nodes.
    pub fn reduce_real<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(usize, &[f64]) -> Result<f64> + Sync,
    {
        let d = self.real_dim();
        let chunks = self.count.div_ceil(CHUNK);
        let partials: Result<Vec<NeumaierSum>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut buf = vec![0.0; d];
                let mut acc = NeumaierSum::default();
                for i in c * CHUNK..((c + 1) * CHUNK).min(self.count) {
                    self.node_into(i, &mut buf);
                    acc.add(f(i, &buf)?);
                }
                Ok(acc)
            })
            .collect();
        let mut total = NeumaierSum::default();
        for p in partials? {
            total.merge(&p);
        }
        Ok(total.value())
    }

    pub fn reduce_complex<F>(&self, f: F) -> Result<Complex64>
    where
        F: Fn(usize, &[f64]) -> Result<Complex64> + Sync,
    {
        let d = self.real_dim();
        let chunks = self.count.div_ceil(CHUNK);
        let partials: Result<Vec<ComplexSum>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut buf = vec![0.0; d];
                let mut acc = ComplexSum::default();
                for i in c * CHUNK..((c + 1) * CHUNK).min(self.count) {
                    self.node_into(i, &mut buf);
                    acc.add(f(i, &buf)?);
                }
                Ok(acc)
            })
            .collect();
        let mut total = ComplexSum::default();
        for p in partials? {
            total.merge(&p);
        }
        Ok(total.value())
    }
}

fn non_finite(x: &[f64], _i: usize, value: String) -> Error {
    Error::NonFinite {
        node: x.to_vec(),
        value,
    }
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComplexSum {
    re: NeumaierSum,
    im: NeumaierSum,
}

impl ComplexSum {
    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn merge(&mut self, other: &ComplexSum) {
        self.re.merge(&other.re);
        self.im.merge(&other.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Compensated sum of a sequence.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = NeumaierSum::default();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Deterministic parallel compensated sum over `0..len`.
pub fn par_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = len.div_ceil(CHUNK);
    let partials: Vec<NeumaierSum> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = NeumaierSum::default();
            for i in c * CHUNK..((c + 1) * CHUNK).min(len) {
                acc.add(f(i));
            }
            acc
        })
        .collect();
    let mut total = NeumaierSum::default();
    for p in &partials {
        total.merge(p);
    }
    total.value()
}

/// Midpoint rule on the axis-aligned cube `center + [-side/2, side/2]^{2n}`
/// with per-axis step at most `max_step`.
#[derive(Debug, Clone)]
pub struct CubeRule {
    axis: Vec<Vec<f64>>,
    k: usize,
    weight: f64,
    count: usize,
}

impl CubeRule {
    pub fn new(center: &[f64], side: f64, max_step: f64) -> Self {
        let q = side / max_step;
        let k = if (q - q.round()).abs() <= 1e-9 * q.max(1.0) {
            q.round().max(1.0) as usize
        } else {
            q.ceil().max(1.0) as usize
        };
        let step = side / k as f64;
        let axis = center
            .iter()
            .map(|c| {
                (0..k)
                    .map(|j| c - 0.5 * side + (j as f64 + 0.5) * step)
                    .collect()
            })
            .collect();
        Self {
            axis,
            k,
            weight: step.powi(center.len() as i32),
            count: k.pow(center.len() as u32),
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn node_weight(&self) -> f64 {
        self.weight
    }

    #[inline]
    pub fn node_into(&self, i: usize, out: &mut [f64]) {
        let mut rest = i;
        for d in (0..out.len()).rev() {
            out[d] = self.axis[d][rest % self.k];
            rest /= self.k;
        }
    }

    /// Serial compensated `node_weight * sum f`.
    pub fn integrate_real<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let mut buf = vec![0.0; self.axis.len()];
        let mut acc = NeumaierSum::default();
        for i in 0..self.count {
            self.node_into(i, &mut buf);
            acc.add(f(&buf));
        }
        acc.value() * self.weight
    }

    pub fn integrate_complex<F: FnMut(&[f64]) -> Complex64>(&self, mut f: F) -> Complex64 {
        let mut buf = vec![0.0; self.axis.len()];
        let mut acc = ComplexSum::default();
        for i in 0..self.count {
            self.node_into(i, &mut buf);
            acc.add(f(&buf));
        }
        acc.value() * self.weight
    }

    pub fn max_real<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let mut buf = vec![0.0; self.axis.len()];
        let mut m = f64::NEG_INFINITY;
        for i in 0..self.count {
            self.node_into(i, &mut buf);
            let v = f(&buf);
            if v > m || v.is_nan() {
                m = v;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub value_h: Complex64,
    pub value_half: Complex64,
    pub relative_gap: f64,
}

/// Integrates `f` at spacing `h` and `h/2` and reports the relative change.
pub fn convergence_check<F>(spec: GridSpec, f: F) -> Result<ConvergenceReport>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let coarse = build_grid(spec)?;
    let fine = build_grid(spec.refined())?;
    let v1 = coarse.integrate(&f)?;
    let v2 = fine.integrate(&f)?;
    Ok(ConvergenceReport {
        value_h: v1,
        value_half: v2,
        relative_gap: (v1 - v2).norm() / v2.norm().max(1e-300),
    })
}

/// Gauss-Legendre rule of the given degree mapped to `[a, b]`.
pub fn gauss_legendre(degree: usize, a: f64, b: f64) -> Result<Vec<(f64, f64)>> {
    let rule = GaussLegendre::new(degree)
        .map_err(|e| invalid(format!("Gauss-Legendre rule of degree {degree}: {e}")))?;
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    Ok(rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect())
}

/// Composite Gauss-Legendre rule over consecutive breakpoints.
pub fn composite_gauss_legendre(breaks: &[f64], degree: usize) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            out.extend(gauss_legendre(degree, w[0], w[1])?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn tiny_grids() {
        let g = build_grid(GridSpec::new(1, 1.0, 1.0)).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.node_weight(), 1.0);
        let pts: Vec<_> = (0..4).map(|i| g.node(i).coords).collect();
        assert_eq!(
            pts,
            vec![
                vec![-0.5, -0.5],
                vec![-0.5, 0.5],
                vec![0.5, -0.5],
                vec![0.5, 0.5]
            ]
        );
        assert_eq!(build_grid(GridSpec::new(1, 2.0, 0.5)).unwrap().len(), 64);
        assert_eq!(build_grid(GridSpec::new(2, 1.0, 1.0)).unwrap().len(), 16);
        assert_eq!(GridSpec::new(1, 8.0, 0.05).node_count(), 102_400);
    }

    #[test]
    fn capacity_error_names_count() {
        let err = build_grid_with_cap(GridSpec::new(2, 8.0, 0.01), 1000).unwrap_err();
        match err {
            Error::Capacity { requested, cap } => {
                assert_eq!(requested, 1600u128.pow(4));
                assert_eq!(cap, 1000);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(build_grid(GridSpec::new(0, 1.0, 0.1)).is_err());
        assert!(build_grid(GridSpec::new(1, 1.0, 2.0)).is_err());
        assert!(build_grid(GridSpec::new(1, -1.0, 0.1)).is_err());
        assert!(ComplexPoint::new(vec![1.0]).is_err());
        assert!(ComplexPoint::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn box_area_and_odd_symmetry() {
        let g = build_grid(GridSpec::new(1, 1.0, 0.5)).unwrap();
        assert_relative_eq!(g.integrate_real(|_| 1.0).unwrap(), 4.0, epsilon = 1e-14);
        let g = build_grid(GridSpec::new(1, 3.0, 0.1)).unwrap();
        assert!(g.integrate_real(|x| x[0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gaussian_integral() {
        let g = build_grid(GridSpec::new(1, 8.0, 0.05)).unwrap();
        let v = g.integrate_real(|x| (-norm_sq(x)).exp()).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI, max_relative = 1e-6);
    }

    #[test]
    fn non_finite_reports_node() {
        let g = build_grid(GridSpec::new(1, 1.0, 1.0)).unwrap();
        let err = g
            .integrate_real(|x| if x[0] > 0.0 && x[1] > 0.0 { f64::NAN } else { 1.0 })
            .unwrap_err();
        match err {
            Error::NonFinite { node, .. } => assert_eq!(node, vec![0.5, 0.5]),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn convergence_examples() {
        let gauss = |x: &[f64]| Complex64::new((-norm_sq(x)).exp(), 0.0);
        let r = convergence_check(GridSpec::new(1, 8.0, 0.1), gauss).unwrap();
        assert!(r.relative_gap < 1e-4);
        let r = convergence_check(GridSpec::new(1, 2.0, 0.1), |_| Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(r.relative_gap, 0.0);
        let disc = |x: &[f64]| Complex64::new(if norm_sq(x) < 1.0 { 1.0 } else { 0.0 }, 0.0);
        let r1 = convergence_check(GridSpec::new(1, 2.0, 0.15), disc).unwrap();
        assert!(r1.relative_gap > 0.0 && r1.relative_gap < 0.1, "{r1:?}");
    }

    #[test]
    fn refinement_monotone_for_smooth_integrand() {
        let f = |x: &[f64]| Complex64::new((-0.7 * norm_sq(x)).exp() * (1.0 + x[0] * x[0]), 0.0);
        let gaps: Vec<f64> = [0.4, 0.2, 0.1]
            .iter()
            .map(|&h| convergence_check(GridSpec::new(1, 8.0, h), f).unwrap().relative_gap)
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }

    #[test]
    fn thread_count_invariance() {
        let g = build_grid(GridSpec::new(1, 6.0, 0.02)).unwrap();
        let f = |x: &[f64]| (-(norm_sq(x))).exp() * (3.0 * x[0]).cos() + 1e-3 * x[1];
        let run = |t: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| g.integrate_real(f).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.to_bits(), b.to_bits());
        let serial = compensated_sum((0..g.len()).map(|i| f(&g.node(i).coords))) * g.node_weight();
        assert_relative_eq!(a, serial, max_relative = 1e-12);
    }

    #[test]
    fn locate_and_nearest() {
        let g = build_grid(GridSpec::new(1, 2.0, 0.5)).unwrap();
        for i in [0, 5, 17, 63] {
            let p = g.node(i);
            assert_eq!(g.locate(&p.coords), Some(i));
            assert_eq!(g.nearest(&p.coords), i);
        }
        assert_eq!(g.locate(&[2.5, 0.0]), None);
        assert_eq!(g.nearest(&[2.5, 0.1]), g.locate(&[1.9, 0.1]).unwrap());
    }

    #[test]
    fn hermitian_product() {
        let u = [1.0, 2.0];
        let z = [3.0, -1.0];
        let expect = Complex64::new(1.0, 2.0) * Complex64::new(3.0, -1.0).conj();
        assert_eq!(inner(&u, &z), expect);
    }

    #[test]
    fn gauss_legendre_polynomial_exactness() {
        let rule = gauss_legendre(8, 0.0, 2.0).unwrap();
        let v: f64 = rule.iter().map(|(x, w)| w * x.powi(7)).sum();
        assert_relative_eq!(v, 2f64.powi(8) / 8.0, max_relative = 1e-13);
        let rule = composite_gauss_legendre(&[0.0, 1.0, 3.0], 6).unwrap();
        let v: f64 = rule.iter().map(|(x, w)| w * x * x).sum();
        assert_relative_eq!(v, 9.0, max_relative = 1e-13);
    }

    proptest! {
        #[test]
        fn linearity(a in -3.0f64..3.0, b in -3.0f64..3.0, c in 0.2f64..2.0) {
            let g = build_grid(GridSpec::new(1, 4.0, 0.1)).unwrap();
            let f = |x: &[f64]| (-c * norm_sq(x)).exp();
            let k = |x: &[f64]| x[0] * x[0] * (-norm_sq(x)).exp();
            let lhs = g.integrate_real(|x| a * f(x) + b * k(x)).unwrap();
            let rhs = a * g.integrate_real(f).unwrap() + b * g.integrate_real(k).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs() + 1.0));
        }

        #[test]
        fn radial_axis_permutation(c in 0.1f64..3.0, n in 1usize..3) {
            let h = if n == 1 { 0.1 } else { 0.5 };
            let g = build_grid(GridSpec::new(n, 3.0, h)).unwrap();
            let f = |x: &[f64]| (-c * norm_sq(x)).exp() * (1.0 + norm_sq(x)).sqrt();
            let a = g.integrate_real(f).unwrap();
            let b = g.integrate_real(|x| {
                let mut y = x.to_vec();
                y.reverse();
                f(&y)
            }).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        }
    }
}
