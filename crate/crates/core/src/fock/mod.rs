//! Reproducing kernels, the Fock projection, Toeplitz operators and the
//! Berezin transform on a quadrature grid.

mod symbol;

pub use symbol::{disc_integral, SymbolFn};

use crate::error::{invalid, Error, Result};
use crate::numerics::{inner, norm_sq, QuadratureGrid};
use crate::weights::{cube_mass, CubeSpec, ExponentPair, Weight};
use crate::numerics::ComplexPoint;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockParams {
    pub alpha: f64,
    pub n: usize,
}

impl Default for FockParams {
    fn default() -> Self {
        Self { alpha: 1.0, n: 1 }
    }
}

impl FockParams {
    pub fn new(alpha: f64, n: usize) -> Result<Self> {
        let p = Self { alpha, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(invalid("alpha must be finite and positive"));
        }
        if self.n == 0 {
            return Err(invalid("dimension n must be positive"));
        }
        Ok(())
    }

    /// `(alpha/pi)^n`.
    pub fn gauss_const(&self) -> f64 {
        (self.alpha / PI).powi(self.n as i32)
    }

    /// Density of `d lambda_alpha` with respect to `dv`.
    #[inline]
    pub fn gaussian_density(&self, u: &[f64]) -> f64 {
        self.gauss_const() * (-self.alpha * norm_sq(u)).exp()
    }

    pub fn check_grid(&self, grid: &QuadratureGrid) -> Result<()> {
        if grid.n() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "parameters have n = {}, grid has n = {}",
                self.n,
                grid.n()
            )));
        }
        Ok(())
    }
}

pub(crate) fn edge_warning(grid: &QuadratureGrid, z: &[f64], what: &str) {
    let r = norm_sq(z).sqrt();
    if r > grid.radius() - 3.0 {
        log::warn!(
            "{what}: |z| = {r:.3} is within 3 of the grid edge R = {}; truncation error may dominate",
            grid.radius()
        );
    }
}

/// `alpha <u, z>`, the logarithm of `K_z(u)`.
#[inline]
pub fn ln_kernel(params: &FockParams, z: &[f64], u: &[f64]) -> Complex64 {
    inner(u, z) * params.alpha
}

/// `K_z(u) = exp(alpha <u, z>)`.
pub fn kernel_eval(params: &FockParams, z: &[f64], u: &[f64]) -> Complex64 {
    ln_kernel(params, z, u).exp()
}

/// `k_z(u) = exp(alpha <u, z> - alpha |z|^2 / 2)`.
pub fn normalized_kernel_eval(params: &FockParams, z: &[f64], u: &[f64]) -> Complex64 {
    (ln_kernel(params, z, u) - params.alpha * norm_sq(z) / 2.0).exp()
}

/// Complex samples on the nodes of a shared grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: Arc<QuadratureGrid>,
    pub values: Vec<Complex64>,
}

impl GridFunction {
    pub fn from_fn<F>(grid: Arc<QuadratureGrid>, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        let values = grid.map(f);
        Self { grid, values }
    }

    pub fn new(grid: Arc<QuadratureGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(invalid("grid function values must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<QuadratureGrid>) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self { grid, values }
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// `(int |f|^p e^{-p alpha |u|^2/2} w dv)^{1/p}`.
    pub fn lp_norm(&self, params: &FockParams, p: f64, w: &Weight) -> Result<f64> {
        let a = params.alpha;
        let s = self.grid.reduce_real(|i, x| {
            let v = self.values[i].norm();
            Ok(if v == 0.0 {
                0.0
            } else {
                (p * v.ln() - p * a * norm_sq(x) / 2.0 + w.ln_eval(x)).exp()
            })
        })?;
        Ok((s * self.grid.node_weight()).powf(1.0 / p))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }
}

/// `<f, g>_alpha`.
pub fn pairing(params: &FockParams, f: &GridFunction, g: &GridFunction) -> Result<Complex64> {
    if !f.same_grid(g) {
        return Err(Error::GridMismatch);
    }
    params.check_grid(&f.grid)?;
    let s = f
        .grid
        .reduce_complex(|i, x| Ok(f.values[i] * g.values[i].conj() * params.gaussian_density(x)))?;
    Ok(s * f.grid.node_weight())
}

/// `ln ||K_z||_{F^p_{alpha,w}}`.
pub fn ln_kernel_norm(
    params: &FockParams,
    z: &[f64],
    p: ExponentPair,
    w: &Weight,
    grid: &QuadratureGrid,
) -> Result<f64> {
    params.check_grid(grid)?;
    edge_warning(grid, z, "kernel_norm");
    let a = params.alpha;
    let pp = p.p;
    // |K_z(u)|^p e^{-p a |u|^2/2} = e^{p a |z|^2/2} e^{-p a |u - z|^2/2}
    let i = grid.integrate_real(|u| {
        let e = -pp * a * crate::numerics::dist_sq(u, z) / 2.0;
        if e < -745.0 {
            0.0
        } else {
            (e + w.ln_eval(u)).exp()
        }
    })?;
    if i <= 0.0 {
        return Err(Error::Domain("weight has no mass near z".into()));
    }
    Ok(a * norm_sq(z) / 2.0 + i.ln() / pp)
}

/// `||K_z||_{F^p_{alpha,w}}`.
pub fn kernel_norm(
    params: &FockParams,
    z: &[f64],
    p: ExponentPair,
    w: &Weight,
    grid: &QuadratureGrid,
) -> Result<f64> {
    Ok(ln_kernel_norm(params, z, p, w, grid)?.exp())
}

/// `||K_z|| / (e^{alpha|z|^2/2} w(Q_1(z))^{1/p})`.
pub fn kernel_norm_ratio(
    params: &FockParams,
    z: &[f64],
    p: ExponentPair,
    w: &Weight,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let ln = ln_kernel_norm(params, z, p, w, grid)?;
    let q = CubeSpec::new(ComplexPoint { coords: z.to_vec() }, 1.0)?;
    let m = cube_mass(w, &q, grid)?;
    Ok((ln - params.alpha * norm_sq(z) / 2.0 - m.ln() / p.p).exp())
}

/// `P_alpha f(z)`.
pub fn projection_apply(params: &FockParams, f: &GridFunction, z: &[f64]) -> Result<Complex64> {
    weighted_projection(params, f, None, z)
}

/// `T_phi f(z) = P_alpha(phi f)(z)`, with jump cells of `phi` area-averaged.
pub fn toeplitz_apply(
    params: &FockParams,
    phi: &SymbolFn,
    f: &GridFunction,
    z: &[f64],
) -> Result<Complex64> {
    let vals = phi.cell_values(&f.grid);
    weighted_projection(params, f, Some(&vals), z)
}

fn weighted_projection(
    params: &FockParams,
    f: &GridFunction,
    mult: Option<&[Complex64]>,
    z: &[f64],
) -> Result<Complex64> {
    params.check_grid(&f.grid)?;
    edge_warning(&f.grid, z, "projection");
    let a = params.alpha;
    let c = params.gauss_const();
    let s = f.grid.reduce_complex(|i, u| {
        let v = match mult {
            Some(m) => f.values[i] * m[i],
            None => f.values[i],
        };
        if v == Complex64::new(0.0, 0.0) {
            return Ok(v);
        }
        // conj(K_z(u)) = e^{alpha <z, u>}
        let e = inner(z, u) * a - a * norm_sq(u);
        Ok(v * e.exp())
    })?;
    Ok(s * (c * f.grid.node_weight()))
}

/// `(alpha/pi)^n int phi(u) e^{-alpha|z - u|^2} dv(u)`.
pub fn berezin_symbol(
    params: &FockParams,
    phi: &SymbolFn,
    z: &[f64],
    grid: &QuadratureGrid,
) -> Result<Complex64> {
    params.check_grid(grid)?;
    edge_warning(grid, z, "berezin_symbol");
    let a = params.alpha;
    let v = phi.integrate_with(grid, |u| {
        Complex64::new((-a * crate::numerics::dist_sq(z, u)).exp(), 0.0)
    })?;
    Ok(v * params.gauss_const())
}

/// Nodes of the grid lying in the open cube `Q_r(u)`.
pub(crate) fn in_cube(x: &[f64], u: &[f64], r: f64) -> bool {
    x.iter().zip(u).all(|(a, b)| (a - b).abs() < r / 2.0)
}

fn check_cube_in_grid(grid: &QuadratureGrid, u: &[f64], r: f64) -> Result<()> {
    if u.len() != grid.real_dim() {
        return Err(Error::DimensionMismatch("cube center dimension".into()));
    }
    if !grid.contains_box(u, r / 2.0) {
        let far = u.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        return Err(Error::Truncation {
            required_radius: far + r / 2.0,
            grid_radius: grid.radius(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub enum TestVariant<'a> {
    /// `conj(phi)|phi|^{-delta} w' k_u` on `Q_r(u) cap {|phi|^{p'} w' <= m}`, `delta = (p-2)/(p-1)`.
    Toeplitz { w: &'a Weight, phi: &'a SymbolFn },
    /// `k_u sigma^{-p'/p}` on `Q_r(u) cap {sigma^{-p'/p} <= m}`.
    Projection { sigma: &'a Weight },
}

#[derive(Debug, Clone)]
pub struct TestFunction {
    pub function: GridFunction,
    /// Upper bound for the source-space norm: `(int_{Q cap E_m} D)^{1/p}` where `D`
    /// is the truncated density.
    pub norm_bound: f64,
    /// `int_{Q cap E_m} D dv`.
    pub dual_mass: f64,
    pub support_nodes: usize,
}

/// Extremal test function for a lower bound on `||T_phi||` or `||P_alpha||`.
/// `m = None` skips the truncation.
#[allow(clippy::too_many_arguments)]
pub fn test_function_build(
    params: &FockParams,
    variant: TestVariant<'_>,
    p: ExponentPair,
    u: &[f64],
    r: f64,
    m: Option<f64>,
    grid: Arc<QuadratureGrid>,
) -> Result<TestFunction> {
    if p.is_one() {
        return Err(Error::UnsupportedExponent(1.0));
    }
    params.check_grid(&grid)?;
    check_cube_in_grid(&grid, u, r)?;
    let e = p.dual_power();
    let bound = m.unwrap_or(f64::INFINITY);
    let cell: Vec<(Complex64, f64)> = grid.map(|x| {
        if !in_cube(x, u, r) {
            return (Complex64::new(0.0, 0.0), 0.0);
        }
        match &variant {
            TestVariant::Toeplitz { w, phi } => {
                let ph = phi.eval(x);
                let a = ph.norm();
                if a == 0.0 {
                    return (Complex64::new(0.0, 0.0), 0.0);
                }
                let lnwd = -e * w.ln_eval(x);
                let dens = (p.p_conj * a.ln() + lnwd).exp();
                if dens > bound {
                    return (Complex64::new(0.0, 0.0), 0.0);
                }
                let delta = (p.p - 2.0) / (p.p - 1.0);
                let amp = (lnwd - delta * a.ln()).exp();
                (ph.conj() * amp * normalized_kernel_eval(params, u, x), dens)
            }
            TestVariant::Projection { sigma } => {
                let dens = (-e * sigma.ln_eval(x)).exp();
                if dens > bound {
                    return (Complex64::new(0.0, 0.0), 0.0);
                }
                (normalized_kernel_eval(params, u, x) * dens, dens)
            }
        }
    });
    let support_nodes = cell.iter().filter(|c| c.1 > 0.0).count();
    let dual_mass =
        crate::numerics::compensated_sum(cell.iter().map(|c| c.1)) * grid.node_weight();
    if support_nodes == 0 || dual_mass <= 0.0 {
        return Err(Error::DegenerateTest(format!(
            "empty support on Q_{r}({u:?}) (raise m or move the cube)"
        )));
    }
    let values = cell.into_iter().map(|c| c.0).collect();
    Ok(TestFunction {
        function: GridFunction { grid, values },
        norm_bound: dual_mass.powf(1.0 / p.p),
        dual_mass,
        support_nodes,
    })
}

#[derive(Debug, Clone)]
pub enum LocalizedKind<'a> {
    Toeplitz(&'a SymbolFn),
    Projection,
}

/// Rank-one operator `f -> chi_Q k_u int_Q [phi] f conj(k_u) d lambda_alpha`.
pub fn localized_operator_apply(
    params: &FockParams,
    kind: LocalizedKind<'_>,
    u: &[f64],
    r: f64,
    f: &GridFunction,
) -> Result<GridFunction> {
    params.check_grid(&f.grid)?;
    check_cube_in_grid(&f.grid, u, r)?;
    let coeff = localized_coefficient(params, &kind, u, r, f)?;
    Ok(GridFunction::from_fn(f.grid.clone(), |x| {
        if in_cube(x, u, r) {
            normalized_kernel_eval(params, u, x) * coeff
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// The scalar `int_Q [phi] f conj(k_u) d lambda_alpha`.
pub fn localized_coefficient(
    params: &FockParams,
    kind: &LocalizedKind<'_>,
    u: &[f64],
    r: f64,
    f: &GridFunction,
) -> Result<Complex64> {
    let s = f.grid.reduce_complex(|i, x| {
        if !in_cube(x, u, r) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let ph = match kind {
            LocalizedKind::Toeplitz(phi) => phi.eval(x),
            LocalizedKind::Projection => Complex64::new(1.0, 0.0),
        };
        Ok(ph * f.values[i] * normalized_kernel_eval(params, u, x).conj() * params.gaussian_density(x))
    })?;
    Ok(s * f.grid.node_weight())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{build_grid, GridSpec};
    use approx::assert_relative_eq;

    fn p1() -> FockParams {
        FockParams::new(1.0, 1).unwrap()
    }

    #[test]
    fn kernel_values() {
        let p = p1();
        let z = [1.0, 0.0];
        assert_eq!(kernel_eval(&p, &[0.0, 0.0], &[0.3, 0.4]), Complex64::new(1.0, 0.0));
        assert_relative_eq!(kernel_eval(&p, &z, &z).re, std::f64::consts::E, max_relative = 1e-15);
        assert_relative_eq!(
            normalized_kernel_eval(&p, &z, &z).re,
            0.5f64.exp(),
            max_relative = 1e-15
        );
        // conjugate-linear in z
        let k = kernel_eval(&p, &[0.0, 1.0], &[1.0, 0.0]);
        assert_relative_eq!(k.im, -1f64.sin(), max_relative = 1e-15);
    }

    #[test]
    fn berezin_of_ball_at_origin() {
        let g = build_grid(GridSpec::new(1, 8.0, 0.1)).unwrap();
        let v = berezin_symbol(&p1(), &SymbolFn::indicator_ball(1.0), &[0.0, 0.0], &g).unwrap();
        assert_relative_eq!(v.re, 1.0 - (-1f64).exp(), max_relative = 1e-10);
        let v = berezin_symbol(&p1(), &SymbolFn::constant(1.0), &[1.0, 2.0], &g).unwrap();
        assert_relative_eq!(v.re, 1.0, max_relative = 1e-8);
    }

    #[test]
    fn grid_mismatch() {
        let g1 = Arc::new(build_grid(GridSpec::new(1, 2.0, 0.5)).unwrap());
        let g2 = Arc::new(build_grid(GridSpec::new(1, 2.0, 0.25)).unwrap());
        let a = GridFunction::from_fn(g1, |_| Complex64::new(1.0, 0.0));
        let b = GridFunction::from_fn(g2, |_| Complex64::new(1.0, 0.0));
        assert_eq!(pairing(&p1(), &a, &b).unwrap_err(), Error::GridMismatch);
    }

    #[test]
    fn symbol_json() {
        let s: SymbolFn = serde_json::from_str(r#"{"symbol":"indicator_ball","radius":1.0}"#).unwrap();
        assert_eq!(s, SymbolFn::indicator_ball(1.0));
        let s: SymbolFn = serde_json::from_str(r#"{"symbol":"constant","value":1.0}"#).unwrap();
        assert_eq!(s, SymbolFn::constant(1.0));
        let s: SymbolFn = serde_json::from_str(r#"{"symbol":"plane_wave","k":[1.0,0.0]}"#).unwrap();
        assert_eq!(s.eval(&[PI, 5.0]).re, -1.0);
        assert!(serde_json::from_str::<SymbolFn>(r#"{"symbol":"constant","value":1.0,"z":0}"#).is_err());
    }

    #[test]
    fn cell_values_average_jumps() {
        let g = build_grid(GridSpec::new(1, 2.0, 0.1)).unwrap();
        let vals = SymbolFn::indicator_ball(1.0).cell_values(&g);
        let area: f64 = vals.iter().map(|v| v.re).sum::<f64>() * g.node_weight();
        assert!((area - PI).abs() < 1e-7, "{area}");
    }
}
