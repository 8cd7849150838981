use crate::error::{invalid, Error, Result};
use crate::numerics::{composite_gauss_legendre, norm_sq, GridSpec, QuadratureGrid};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Bounded symbol on C^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "symbol", rename_all = "snake_case", deny_unknown_fields)]
pub enum SymbolFn {
    Constant {
        value: f64,
        #[serde(default)]
        imag: f64,
    },
    /// Indicator of the open Euclidean ball; center defaults to the origin.
    IndicatorBall {
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    /// `exp(i k . x)` over the 2n real coordinates.
    PlaneWave { k: Vec<f64> },
    /// `values[j]` on `radii[j-1] <= |z| < radii[j]`.
    RadialStep { radii: Vec<f64>, values: Vec<f64> },
    Tabulated {
        grid: GridSpec,
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
    },
}

const POLAR_PANEL: f64 = 0.25;
const POLAR_DEGREE: usize = 12;
const POLAR_ANGLES: usize = 256;

impl SymbolFn {
    pub fn constant(value: f64) -> Self {
        SymbolFn::Constant { value, imag: 0.0 }
    }

    pub fn indicator_ball(radius: f64) -> Self {
        SymbolFn::IndicatorBall {
            radius,
            center: None,
        }
    }

    pub fn plane_wave(k: Vec<f64>) -> Self {
        SymbolFn::PlaneWave { k }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SymbolFn::Constant { .. } => "constant",
            SymbolFn::IndicatorBall { .. } => "indicator_ball",
            SymbolFn::PlaneWave { .. } => "plane_wave",
            SymbolFn::RadialStep { .. } => "radial_step",
            SymbolFn::Tabulated { .. } => "tabulated",
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            SymbolFn::Constant { value, imag } => {
                if !(value.is_finite() && imag.is_finite()) {
                    return Err(invalid("constant symbol must be finite"));
                }
            }
            SymbolFn::IndicatorBall { radius, center } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(invalid("indicator radius must be positive"));
                }
                if let Some(c) = center {
                    if c.len() != 2 * n {
                        return Err(Error::DimensionMismatch("indicator center".into()));
                    }
                }
            }
            SymbolFn::PlaneWave { k } => {
                if k.len() != 2 * n || k.iter().any(|v| !v.is_finite()) {
                    return Err(Error::DimensionMismatch(format!(
                        "plane wave needs {} finite frequencies",
                        2 * n
                    )));
                }
            }
            SymbolFn::RadialStep { radii, values } => {
                if values.len() != radii.len() + 1 {
                    return Err(invalid("radial_step needs one more value than radii"));
                }
                if radii.windows(2).any(|w| w[1] <= w[0]) || radii.iter().any(|r| *r <= 0.0) {
                    return Err(invalid("radial_step radii must be positive and increasing"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("radial_step values must be finite"));
                }
            }
            SymbolFn::Tabulated { grid, re, im } => {
                grid.validate()?;
                if grid.n != n {
                    return Err(Error::DimensionMismatch("tabulated symbol grid".into()));
                }
                let len = grid.node_count();
                if re.len() as u128 != len || !(im.is_empty() || im.len() as u128 == len) {
                    return Err(invalid("tabulated symbol length does not match its grid"));
                }
                if re.iter().chain(im).any(|v| !v.is_finite()) {
                    return Err(invalid("tabulated symbol values must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        match self {
            SymbolFn::Constant { value, imag } => Complex64::new(*value, *imag),
            SymbolFn::IndicatorBall { radius, center } => {
                let d2 = match center {
                    Some(c) => crate::numerics::dist_sq(x, c),
                    None => norm_sq(x),
                };
                Complex64::new(if d2 < radius * radius { 1.0 } else { 0.0 }, 0.0)
            }
            SymbolFn::PlaneWave { k } => {
                let t: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum();
                Complex64::new(t.cos(), t.sin())
            }
            SymbolFn::RadialStep { radii, values } => {
                let r = norm_sq(x).sqrt();
                let j = radii.iter().take_while(|&&b| r >= b).count();
                Complex64::new(values[j], 0.0)
            }
            SymbolFn::Tabulated { grid, re, im } => {
                let i = grid.nearest_index(x);
                Complex64::new(re[i], im.get(i).copied().unwrap_or(0.0))
            }
        }
    }

    pub fn abs(&self, x: &[f64]) -> f64 {
        self.eval(x).norm()
    }

    /// Upper bound for `|phi|`.
    pub fn sup_norm_hint(&self) -> f64 {
        match self {
            SymbolFn::Constant { value, imag } => value.hypot(*imag),
            SymbolFn::IndicatorBall { .. } | SymbolFn::PlaneWave { .. } => 1.0,
            SymbolFn::RadialStep { values, .. } => {
                values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            }
            SymbolFn::Tabulated { re, im, .. } => re
                .iter()
                .enumerate()
                .map(|(i, r)| r.hypot(im.get(i).copied().unwrap_or(0.0)))
                .fold(0.0f64, f64::max),
        }
    }

    /// Whether the symbol depends only on `|z|`.
    pub fn is_radial(&self) -> bool {
        match self {
            SymbolFn::Constant { .. } | SymbolFn::RadialStep { .. } => true,
            SymbolFn::IndicatorBall { center, .. } => {
                center.as_ref().is_none_or(|c| c.iter().all(|v| *v == 0.0))
            }
            SymbolFn::PlaneWave { k } => k.iter().all(|v| *v == 0.0),
            SymbolFn::Tabulated { .. } => false,
        }
    }

    /// Radii where a radial symbol jumps.
    pub fn radial_breaks(&self) -> Vec<f64> {
        match self {
            SymbolFn::IndicatorBall { radius, .. } => vec![*radius],
            SymbolFn::RadialStep { radii, .. } => radii.clone(),
            _ => Vec::new(),
        }
    }

    /// `t -> phi(t e_1)` for radial symbols.
    pub fn radial_profile(&self, t: f64) -> Option<Complex64> {
        if !self.is_radial() {
            return None;
        }
        Some(match self {
            SymbolFn::Constant { value, imag } => Complex64::new(*value, *imag),
            SymbolFn::IndicatorBall { radius, .. } => {
                Complex64::new(if t < *radius { 1.0 } else { 0.0 }, 0.0)
            }
            SymbolFn::RadialStep { radii, values } => {
                let j = radii.iter().take_while(|&&b| t >= b).count();
                Complex64::new(values[j], 0.0)
            }
            SymbolFn::PlaneWave { .. } => Complex64::new(1.0, 0.0),
            SymbolFn::Tabulated { .. } => unreachable!(),
        })
    }

    /// Closure giving `|phi(x)|`.
    pub fn magnitude(&self) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
        move |x: &[f64]| self.abs(x)
    }

    /// Symbol value per grid node; cells cut by a jump get their area-averaged value.
    pub fn cell_values(&self, grid: &QuadratureGrid) -> Vec<Complex64> {
        let spheres = self.jump_spheres();
        if spheres.is_empty() {
            return grid.map(|x| self.eval(x));
        }
        let h = grid.h();
        let d = grid.real_dim();
        let half_diag = 0.5 * h * (d as f64).sqrt();
        grid.map(|x| {
            let cut = spheres.iter().any(|(c, r)| {
                let dist = match c {
                    Some(c) => crate::numerics::dist_sq(x, c).sqrt(),
                    None => norm_sq(x).sqrt(),
                };
                (dist - r).abs() <= half_diag
            });
            if !cut {
                self.eval(x)
            } else if d == 2 {
                self.planar_cell_average(x, h)
            } else {
                let rule = crate::numerics::CubeRule::new(x, h, h / 4.0);
                rule.integrate_complex(|y| self.eval(y)) / h.powi(d as i32)
            }
        })
    }

    fn planar_cell_average(&self, x: &[f64], h: f64) -> Complex64 {
        let frac = |c: &[f64], r: f64| disc_cell_fraction(c, r, x, h);
        match self {
            SymbolFn::IndicatorBall { radius, center } => {
                let c = center.clone().unwrap_or_else(|| vec![0.0, 0.0]);
                Complex64::new(frac(&c, *radius), 0.0)
            }
            SymbolFn::RadialStep { radii, values } => {
                let last = *values.last().unwrap();
                let mut v = last;
                let mut prev = 0.0;
                for (j, r) in radii.iter().enumerate() {
                    let f = frac(&[0.0, 0.0], *r);
                    v += (values[j] - last) * (f - prev);
                    prev = f;
                }
                Complex64::new(v, 0.0)
            }
            _ => self.eval(x),
        }
    }

    fn jump_spheres(&self) -> Vec<(Option<Vec<f64>>, f64)> {
        match self {
            SymbolFn::IndicatorBall { radius, center } => vec![(center.clone(), *radius)],
            SymbolFn::RadialStep { radii, .. } => radii.iter().map(|r| (None, *r)).collect(),
            _ => Vec::new(),
        }
    }

    /// `int phi f dv` over the grid box, resolving jumps of the symbol with a
    /// polar rule when n = 1.
    pub fn integrate_with<F>(&self, grid: &QuadratureGrid, f: F) -> Result<Complex64>
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        match self {
            SymbolFn::Constant { value, imag } => {
                Ok(Complex64::new(*value, *imag) * grid.integrate(f)?)
            }
            SymbolFn::IndicatorBall { radius, center } if grid.n() == 1 => {
                let c = center.clone().unwrap_or_else(|| vec![0.0, 0.0]);
                disc_integral(&c, 0.0, *radius, &f)
            }
            SymbolFn::RadialStep { radii, values } if grid.n() == 1 => {
                let last = *values.last().unwrap();
                let mut total = if last != 0.0 {
                    grid.integrate(&f)? * last
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let mut inner = 0.0;
                for (j, &outer) in radii.iter().enumerate() {
                    let dv = values[j] - last;
                    if dv != 0.0 {
                        total += disc_integral(&[0.0, 0.0], inner, outer, &f)? * dv;
                    }
                    inner = outer;
                }
                Ok(total)
            }
            _ => {
                let vals = self.cell_values(grid);
                let s = grid.reduce_complex(|i, x| Ok(vals[i] * f(x)))?;
                Ok(s * grid.node_weight())
            }
        }
    }
}

/// Polar rule over the annulus `inner <= |x - c| < outer` in R^2.
pub fn disc_integral<F>(c: &[f64], inner: f64, outer: f64, f: &F) -> Result<Complex64>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let panels = ((outer - inner) / POLAR_PANEL).ceil().max(1.0) as usize;
    let breaks: Vec<f64> = (0..=panels)
        .map(|k| inner + (outer - inner) * k as f64 / panels as f64)
        .collect();
    let radial = composite_gauss_legendre(&breaks, POLAR_DEGREE)?;
    let m = POLAR_ANGLES;
    let dtheta = 2.0 * PI / m as f64;
    let mut acc = crate::numerics::ComplexSum::default();
    let mut x = [0.0; 2];
    for &(t, wt) in &radial {
        let mut ring = crate::numerics::ComplexSum::default();
        for j in 0..m {
            let th = (j as f64 + 0.5) * dtheta;
            x[0] = c[0] + t * th.cos();
            x[1] = c[1] + t * th.sin();
            ring.add(f(&x));
        }
        acc.add(ring.value() * (wt * t * dtheta));
    }
    let v = acc.value();
    if !(v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::NonFinite {
            node: c.to_vec(),
            value: format!("{v}"),
        });
    }
    Ok(v)
}

/// Fraction of the square `x + [-h/2, h/2]^2` covered by the disc `|y - c| < r`.
pub fn disc_cell_fraction(c: &[f64], r: f64, x: &[f64], h: f64) -> f64 {
    let (x0, x1) = (x[0] - h / 2.0, x[0] + h / 2.0);
    let (y0, y1) = (x[1] - h / 2.0 - c[1], x[1] + h / 2.0 - c[1]);
    let lo = x0.max(c[0] - r);
    let hi = x1.min(c[0] + r);
    if hi <= lo {
        return 0.0;
    }
    let chord = |t: f64| {
        let s = (r * r - (t - c[0]) * (t - c[0])).max(0.0).sqrt();
        (s.min(y1) - (-s).max(y0)).max(0.0)
    };
    let mut cuts = vec![lo, hi];
    for yb in [y0, y1] {
        let q = r * r - yb * yb;
        if q > 0.0 {
            for t in [c[0] - q.sqrt(), c[0] + q.sqrt()] {
                if t > lo && t < hi {
                    cuts.push(t);
                }
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rule = composite_gauss_legendre(&cuts, 24).expect("static degree");
    let area: f64 = rule.iter().map(|(t, w)| w * chord(*t)).sum();
    (area / (h * h)).clamp(0.0, 1.0)
}
