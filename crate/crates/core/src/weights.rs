//! Weight families on C^n and cube characteristics.

use crate::error::{invalid, Error, Result};
use crate::numerics::{norm_sq, ComplexPoint, CubeRule, GridSpec, QuadratureGrid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Values above this are reported as `+inf`.
pub const INFINITY_THRESHOLD: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    pub p: f64,
    pub p_conj: f64,
}

impl ExponentPair {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(invalid(format!("exponent p must be finite and >= 1 (got {p})")));
        }
        let p_conj = if p == 1.0 { f64::INFINITY } else { p / (p - 1.0) };
        Ok(Self { p, p_conj })
    }

    pub fn is_one(&self) -> bool {
        self.p == 1.0
    }

    /// `p'/p = 1/(p-1)`.
    pub fn dual_power(&self) -> f64 {
        1.0 / (self.p - 1.0)
    }

    pub fn conjugate(&self) -> Result<Self> {
        if self.is_one() {
            return Err(Error::UnsupportedExponent(1.0));
        }
        Self::new(self.p_conj)
    }
}

/// Nonnegative weight on C^n, given as one of the registered families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Weight {
    Constant {
        value: f64,
    },
    /// `exp(beta |z|^2)`
    Gaussian {
        beta: f64,
    },
    /// `(1 + |z|)^beta`
    Power {
        beta: f64,
    },
    /// `values[k]` on `radii[k-1] <= |z| < radii[k]`; `values` has one more entry than `radii`.
    RadialStep {
        radii: Vec<f64>,
        values: Vec<f64>,
    },
    /// `prod_k (1 + |x_k|)^{betas[k]}` over the 2n real coordinates.
    AnisotropicPower {
        betas: Vec<f64>,
    },
    Product {
        factors: Vec<Weight>,
    },
    Scaled {
        factor: f64,
        base: Box<Weight>,
    },
    /// `base^exponent`
    Powered {
        base: Box<Weight>,
        exponent: f64,
    },
    /// `z -> base(Q_1(z))`, integrated with the given step.
    Hat {
        base: Box<Weight>,
        spacing: f64,
    },
    /// Nearest-node lookup on a grid, clamped outside the box.
    Tabulated {
        grid: GridSpec,
        values: Vec<f64>,
    },
}

impl Weight {
    pub fn constant(value: f64) -> Self {
        Weight::Constant { value }
    }

    pub fn gaussian(beta: f64) -> Self {
        Weight::Gaussian { beta }
    }

    pub fn power(beta: f64) -> Self {
        Weight::Power { beta }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Weight::Scaled {
            factor,
            base: Box::new(self),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Weight::Constant { .. } => "constant",
            Weight::Gaussian { .. } => "gaussian",
            Weight::Power { .. } => "power",
            Weight::RadialStep { .. } => "radial_step",
            Weight::AnisotropicPower { .. } => "anisotropic_power",
            Weight::Product { .. } => "product",
            Weight::Scaled { .. } => "scaled",
            Weight::Powered { .. } => "powered",
            Weight::Hat { .. } => "hat",
            Weight::Tabulated { .. } => "tabulated",
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Weight::Constant { value } => *value,
            Weight::Gaussian { beta } => (beta * norm_sq(x)).exp(),
            Weight::Power { beta } => (1.0 + norm_sq(x).sqrt()).powf(*beta),
            Weight::RadialStep { radii, values } => {
                let r = norm_sq(x).sqrt();
                let k = radii.iter().take_while(|&&b| r >= b).count();
                values[k]
            }
            Weight::AnisotropicPower { betas } => x
                .iter()
                .zip(betas)
                .map(|(v, b)| (1.0 + v.abs()).powf(*b))
                .product(),
            Weight::Product { factors } => factors.iter().map(|f| f.eval(x)).product(),
            Weight::Scaled { factor, base } => factor * base.eval(x),
            Weight::Powered { base, exponent } => {
                if *exponent == 0.0 {
                    1.0
                } else {
                    (exponent * base.ln_eval(x)).exp()
                }
            }
            Weight::Hat { base, spacing } => {
                CubeRule::new(x, 1.0, *spacing).integrate_real(|y| base.eval(y))
            }
            Weight::Tabulated { grid, values } => values[grid.nearest_index(x)],
        }
    }

    /// `ln w(x)`, computed without forming `w` where the family allows it.
    pub fn ln_eval(&self, x: &[f64]) -> f64 {
        match self {
            Weight::Gaussian { beta } => beta * norm_sq(x),
            Weight::Power { beta } => beta * (1.0 + norm_sq(x).sqrt()).ln(),
            Weight::AnisotropicPower { betas } => x
                .iter()
                .zip(betas)
                .map(|(v, b)| b * (1.0 + v.abs()).ln())
                .sum(),
            Weight::Product { factors } => factors.iter().map(|f| f.ln_eval(x)).sum(),
            Weight::Scaled { factor, base } => factor.ln() + base.ln_eval(x),
            Weight::Powered { base, exponent } => {
                if *exponent == 0.0 {
                    0.0
                } else {
                    exponent * base.ln_eval(x)
                }
            }
            _ => self.eval(x).ln(),
        }
    }

    /// `w(x)^e` evaluated in log space.
    pub fn pow_eval(&self, x: &[f64], e: f64) -> f64 {
        if e == 0.0 {
            1.0
        } else if e == 1.0 {
            self.eval(x)
        } else {
            (e * self.ln_eval(x)).exp()
        }
    }

    pub fn is_radial(&self) -> bool {
        match self {
            Weight::Constant { .. }
            | Weight::Gaussian { .. }
            | Weight::Power { .. }
            | Weight::RadialStep { .. } => true,
            Weight::AnisotropicPower { betas } => betas.iter().all(|b| *b == 0.0),
            Weight::Product { factors } => factors.iter().all(|f| f.is_radial()),
            Weight::Scaled { base, .. } | Weight::Powered { base, .. } => base.is_radial(),
            Weight::Hat { .. } | Weight::Tabulated { .. } => false,
        }
    }

    pub fn strictly_positive(&self) -> bool {
        match self {
            Weight::Constant { value } => *value > 0.0,
            Weight::Gaussian { .. } | Weight::Power { .. } | Weight::AnisotropicPower { .. } => true,
            Weight::RadialStep { values, .. } => values.iter().all(|v| *v > 0.0),
            Weight::Product { factors } => factors.iter().all(|f| f.strictly_positive()),
            Weight::Scaled { factor, base } => *factor > 0.0 && base.strictly_positive(),
            Weight::Powered { base, exponent } => *exponent == 0.0 || base.strictly_positive(),
            Weight::Hat { base, .. } => base.strictly_positive(),
            Weight::Tabulated { values, .. } => values.iter().all(|v| *v > 0.0),
        }
    }

    /// Radial profile `t -> w(t e_1)` when the weight is radial.
    pub fn radial_profile(&self, t: f64, n: usize) -> Option<f64> {
        if !self.is_radial() {
            return None;
        }
        let mut x = vec![0.0; 2 * n];
        x[0] = t;
        Some(self.eval(&x))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{what} must be finite")))
            }
        };
        match self {
            Weight::Constant { value } => {
                finite(*value, "constant weight value")?;
                if *value < 0.0 {
                    return Err(invalid("constant weight must be nonnegative"));
                }
            }
            Weight::Gaussian { beta } | Weight::Power { beta } => finite(*beta, "beta")?,
            Weight::RadialStep { radii, values } => {
                if values.len() != radii.len() + 1 {
                    return Err(invalid("radial_step needs one more value than radii"));
                }
                if radii.windows(2).any(|w| w[1] <= w[0]) || radii.iter().any(|r| *r <= 0.0) {
                    return Err(invalid("radial_step radii must be positive and increasing"));
                }
                for v in values {
                    finite(*v, "radial_step value")?;
                    if *v < 0.0 {
                        return Err(invalid("radial_step values must be nonnegative"));
                    }
                }
            }
            Weight::AnisotropicPower { betas } => {
                if betas.len() != 2 * n {
                    return Err(Error::DimensionMismatch(format!(
                        "anisotropic_power needs {} exponents, got {}",
                        2 * n,
                        betas.len()
                    )));
                }
                for b in betas {
                    finite(*b, "anisotropic exponent")?;
                }
            }
            Weight::Product { factors } => {
                if factors.is_empty() {
                    return Err(invalid("product weight needs at least one factor"));
                }
                for f in factors {
                    f.validate(n)?;
                }
            }
            Weight::Scaled { factor, base } => {
                finite(*factor, "scale factor")?;
                if *factor < 0.0 {
                    return Err(invalid("scale factor must be nonnegative"));
                }
                base.validate(n)?;
            }
            Weight::Powered { base, exponent } => {
                finite(*exponent, "exponent")?;
                if *exponent < 0.0 && !base.strictly_positive() {
                    return Err(Error::Domain("negative power of a weight with zeros".into()));
                }
                base.validate(n)?;
            }
            Weight::Hat { base, spacing } => {
                if !(spacing.is_finite() && *spacing > 0.0) {
                    return Err(invalid("hat spacing must be positive"));
                }
                base.validate(n)?;
            }
            Weight::Tabulated { grid, values } => {
                grid.validate()?;
                if grid.n != n {
                    return Err(Error::DimensionMismatch("tabulated grid dimension".into()));
                }
                if grid.node_count() != values.len() as u128 {
                    return Err(invalid(format!(
                        "tabulated weight has {} values, grid has {} nodes",
                        values.len(),
                        grid.node_count()
                    )));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(invalid("tabulated values must be finite and nonnegative"));
                }
            }
        }
        Ok(())
    }

    /// Samples the weight on every node of `grid`.
    pub fn tabulate(&self, grid: &QuadratureGrid) -> Weight {
        Weight::Tabulated {
            grid: *grid.spec(),
            values: grid.map(|x| self.eval(x)),
        }
    }
}

/// `w' = w^{-p'/p}`.
pub fn dual_weight(w: &Weight, p: ExponentPair) -> Result<Weight> {
    if p.is_one() {
        return Err(Error::UnsupportedExponent(p.p));
    }
    if !w.strictly_positive() {
        return Err(Error::Domain(format!(
            "dual of the {} weight: it vanishes somewhere",
            w.name()
        )));
    }
    Ok(power_of(w, -p.dual_power()))
}

fn power_of(w: &Weight, e: f64) -> Weight {
    match w {
        Weight::Constant { value } => Weight::Constant {
            value: value.powf(e),
        },
        Weight::Gaussian { beta } => Weight::Gaussian { beta: beta * e },
        Weight::Power { beta } => Weight::Power { beta: beta * e },
        Weight::AnisotropicPower { betas } => Weight::AnisotropicPower {
            betas: betas.iter().map(|b| b * e).collect(),
        },
        Weight::RadialStep { radii, values } => Weight::RadialStep {
            radii: radii.clone(),
            values: values.iter().map(|v| v.powf(e)).collect(),
        },
        Weight::Product { factors } => Weight::Product {
            factors: factors.iter().map(|f| power_of(f, e)).collect(),
        },
        Weight::Scaled { factor, base } => Weight::Scaled {
            factor: factor.powf(e),
            base: Box::new(power_of(base, e)),
        },
        Weight::Powered { base, exponent } => power_of(base, exponent * e),
        Weight::Tabulated { grid, values } => Weight::Tabulated {
            grid: *grid,
            values: values.iter().map(|v| v.powf(e)).collect(),
        },
        Weight::Hat { .. } => Weight::Powered {
            base: Box::new(w.clone()),
            exponent: e,
        },
    }
}

/// `z -> w(Q_1(z))`, integrated lazily with step at most `spacing`.
pub fn hat_weight(w: &Weight, spacing: f64) -> Weight {
    Weight::Hat {
        base: Box::new(w.clone()),
        spacing,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeSpec {
    pub center: ComplexPoint,
    pub side: f64,
}

impl CubeSpec {
    pub fn new(center: ComplexPoint, side: f64) -> Result<Self> {
        if !(side.is_finite() && side > 0.0) {
            return Err(invalid("cube side must be positive"));
        }
        Ok(Self { center, side })
    }
}

fn check_inside(grid: &QuadratureGrid, center: &[f64], side: f64) -> Result<()> {
    if center.len() != grid.real_dim() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} real coordinates, grid has {}",
            center.len(),
            grid.real_dim()
        )));
    }
    if grid.contains_box(center, side / 2.0) {
        Ok(())
    } else {
        let far = center.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        Err(Error::Truncation {
            required_radius: far + side / 2.0,
            grid_radius: grid.radius(),
        })
    }
}

/// `w(Q)`, by a midpoint rule aligned with the cube and no coarser than the grid.
pub fn cube_mass(w: &Weight, q: &CubeSpec, grid: &QuadratureGrid) -> Result<f64> {
    check_inside(grid, &q.center.coords, q.side)?;
    Ok(CubeRule::new(&q.center.coords, q.side, grid.h()).integrate_real(|x| w.eval(x)))
}

/// Centers of a sup scan: the lattice `step Z^{2n}` inside a Euclidean ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub radius: f64,
    pub step: f64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            radius: 6.0,
            step: 0.25,
        }
    }
}

impl ScanSpec {
    pub fn new(radius: f64, step: f64) -> Self {
        Self { radius, step }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius >= 0.0) {
            return Err(invalid("scan radius must be nonnegative"));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(invalid("scan step must be positive"));
        }
        Ok(())
    }

    pub fn refined(&self) -> Self {
        Self {
            step: self.step / 2.0,
            ..*self
        }
    }

    /// Lattice points with `|c| <= radius`, lexicographic order.
    pub fn centers(&self, n: usize) -> Vec<Vec<f64>> {
        let d = 2 * n;
        let m = (self.radius / self.step + 1e-9).floor() as i64;
        let side = (2 * m + 1) as usize;
        let total = side.pow(d as u32);
        let r2 = self.radius * self.radius * (1.0 + 1e-12) + 1e-300;
        let mut out = Vec::new();
        let mut idx = vec![0i64; d];
        for mut t in 0..total {
            for k in (0..d).rev() {
                idx[k] = (t % side) as i64 - m;
                t /= side;
            }
            let c: Vec<f64> = idx.iter().map(|&i| i as f64 * self.step).collect();
            if norm_sq(&c) <= r2 {
                out.push(c);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicReport {
    pub value: f64,
    pub argmax_center: ComplexPoint,
    pub scan_radius: f64,
    pub scan_step: f64,
    pub refinement_gap: f64,
    pub centers_scanned: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CharacteristicReport {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    pub const CSV_HEADER: [&'static str; 6] = [
        "value",
        "argmax_re",
        "argmax_im",
        "scan_radius",
        "scan_step",
        "refinement_gap",
    ];

    pub fn csv_fields(&self) -> Vec<String> {
        let c = &self.argmax_center.coords;
        vec![
            fmt_num(self.value),
            fmt_num(c.first().copied().unwrap_or(0.0)),
            fmt_num(c.get(1).copied().unwrap_or(0.0)),
            fmt_num(self.scan_radius),
            fmt_num(self.scan_step),
            fmt_num(self.refinement_gap),
        ]
    }
}

/// Fixed 17-significant-digit formatting used in every table.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn sentinel(v: f64) -> f64 {
    if v.is_nan() || v > INFINITY_THRESHOLD {
        f64::INFINITY
    } else {
        v
    }
}

/// Maximum of `f` over scan centers; ties resolve to the first center.
pub fn scan_max<F>(centers: &[Vec<f64>], f: F) -> Result<(f64, usize)>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if centers.is_empty() {
        return Err(invalid("scan has no centers"));
    }
    let vals: Vec<f64> = centers
        .par_iter()
        .map(|c| f(c))
        .collect::<Result<Vec<_>>>()?;
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, v) in vals.into_iter().enumerate() {
        let v = sentinel(v);
        if v > best.0 {
            best = (v, i);
        }
    }
    Ok(best)
}

pub(crate) fn rel_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if a.is_infinite() || b.is_infinite() {
        f64::INFINITY
    } else {
        (a - b).abs() / b.abs().max(1e-300)
    }
}

fn scan_report<F>(scan: ScanSpec, n: usize, f: F) -> Result<CharacteristicReport>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    scan.validate()?;
    let centers = scan.centers(n);
    let (value, at) = scan_max(&centers, &f)?;
    let fine = scan.refined().centers(n);
    let (fine_value, _) = scan_max(&fine, &f)?;
    Ok(CharacteristicReport {
        value,
        argmax_center: ComplexPoint {
            coords: centers[at].clone(),
        },
        scan_radius: scan.radius,
        scan_step: scan.step,
        refinement_gap: rel_gap(value, fine_value),
        centers_scanned: centers.len(),
        note: None,
    })
}

fn check_scan_fits(grid: &QuadratureGrid, scan: ScanSpec, side: f64) -> Result<()> {
    if scan.radius + side / 2.0 > grid.radius() + 1e-12 {
        return Err(Error::Truncation {
            required_radius: scan.radius + side / 2.0,
            grid_radius: grid.radius(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub report: CharacteristicReport,
    /// `(scan radius, value)` at 0.5, 0.75 and 1 times the scan radius.
    pub by_radius: Vec<(f64, f64)>,
    pub suspect: bool,
}

/// `sup_z w(Q_{2r}(z)) / w(Q_r(z))` over the scan.
pub fn doubling_constant(
    w: &Weight,
    r: f64,
    scan: ScanSpec,
    grid: &QuadratureGrid,
) -> Result<DoublingReport> {
    if !(r.is_finite() && r > 0.0) {
        return Err(invalid("doubling side r must be positive"));
    }
    if scan.radius < 2.0 * r {
        return Err(invalid("doubling scan radius must be at least 2r"));
    }
    check_scan_fits(grid, scan, 2.0 * r)?;
    let h = grid.h();
    let ratio = |c: &[f64]| -> Result<f64> {
        let big = CubeRule::new(c, 2.0 * r, h).integrate_real(|x| w.eval(x));
        let small = CubeRule::new(c, r, h).integrate_real(|x| w.eval(x));
        Ok(if small > 0.0 {
            big / small
        } else if big > 0.0 {
            f64::INFINITY
        } else {
            1.0
        })
    };
    let mut report = scan_report(scan, grid.n(), ratio)?;
    let mut by_radius = Vec::new();
    for s in [0.5, 0.75] {
        let sub = ScanSpec::new(scan.radius * s, scan.step);
        let (v, _) = scan_max(&sub.centers(grid.n()), ratio)?;
        by_radius.push((sub.radius, v));
    }
    by_radius.push((scan.radius, report.value));
    let growing = by_radius.windows(2).all(|p| p[1].1 > p[0].1 * (1.0 + 1e-9));
    let suspect = !report.value.is_finite()
        || (growing && by_radius[2].1 > by_radius[0].1 * 1.05);
    if !report.value.is_finite() {
        report.note = Some(format!(
            "zero cube mass at {:?}: not doubling",
            report.argmax_center.coords
        ));
    } else if suspect {
        report.note = Some("doubling ratio grows with the scan radius: doubling-suspect".into());
    }
    Ok(DoublingReport {
        report,
        by_radius,
        suspect,
    })
}

/// Magnitude of an optional symbol, `|phi(x)|`.
pub type Magnitude<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Cube product for one center: p > 1 uses averages, p = 1 the node maximum.
pub fn joint_cube_product(
    w: &Weight,
    sigma: &Weight,
    p: ExponentPair,
    phi: Option<Magnitude<'_>>,
    center: &[f64],
    r: f64,
    h: f64,
) -> f64 {
    let rule = CubeRule::new(center, r, h);
    let vol = r.powi(center.len() as i32);
    let avg_w = rule.integrate_real(|x| w.eval(x)) / vol;
    if p.is_one() {
        let m = rule.max_real(|x| {
            let a = phi.map_or(1.0, |f| f(x));
            if a == 0.0 {
                0.0
            } else {
                a * (-sigma.ln_eval(x)).exp()
            }
        });
        sentinel(avg_w * m)
    } else {
        let e = p.dual_power();
        let avg_d = rule.integrate_real(|x| {
            let a = phi.map_or(1.0, |f| f(x));
            if a == 0.0 {
                0.0
            } else {
                (p.p_conj * a.ln() - e * sigma.ln_eval(x)).exp()
            }
        }) / vol;
        sentinel(avg_w * avg_d.powf(p.p / p.p_conj))
    }
}

/// `[w, sigma]_{A_{p,r}}`, optionally with `|phi|^{p'}` inside the dual average.
pub fn joint_characteristic(
    w: &Weight,
    sigma: &Weight,
    p: ExponentPair,
    r: f64,
    phi: Option<Magnitude<'_>>,
    scan: ScanSpec,
    grid: &QuadratureGrid,
) -> Result<CharacteristicReport> {
    if !(r.is_finite() && r > 0.0) {
        return Err(invalid("cube side r must be positive"));
    }
    if !p.is_one() && !sigma.strictly_positive() {
        return Err(Error::Domain(format!(
            "source weight {} must be strictly positive",
            sigma.name()
        )));
    }
    check_scan_fits(grid, scan, r)?;
    let h = grid.h();
    scan_report(scan, grid.n(), |c| {
        Ok(joint_cube_product(w, sigma, p, phi, c, r, h))
    })
}

/// `[w]_{A_{p,r}}`.
pub fn ap_characteristic(
    w: &Weight,
    p: ExponentPair,
    r: f64,
    scan: ScanSpec,
    grid: &QuadratureGrid,
) -> Result<CharacteristicReport> {
    joint_characteristic(w, w, p, r, None, scan, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeFit {
    /// Smallest `C` with `w(Q_r(v)) <= C^{|v - v'|} w(Q_r(v'))` on the scanned sites.
    pub constant: f64,
    /// `ln C`.
    pub slope: f64,
    pub sites: usize,
}

/// Cube masses on `r Z^{2n}` within the scan radius, with the comparability constant.
pub fn lattice_constant(
    w: &Weight,
    r: f64,
    scan_radius: f64,
    grid: &QuadratureGrid,
) -> Result<LatticeFit> {
    check_scan_fits(grid, ScanSpec::new(scan_radius, r), r)?;
    let sites = ScanSpec::new(scan_radius, r).centers(grid.n());
    let h = grid.h();
    let logs: Vec<f64> = sites
        .par_iter()
        .map(|c| CubeRule::new(c, r, h).integrate_real(|x| w.eval(x)).ln())
        .collect();
    let mut slope = 0.0f64;
    for i in 0..sites.len() {
        for j in 0..sites.len() {
            if i != j {
                let d = crate::numerics::dist_sq(&sites[i], &sites[j]).sqrt();
                let s = (logs[i] - logs[j]) / d;
                if s.is_nan() {
                    slope = f64::INFINITY;
                } else {
                    slope = slope.max(s);
                }
            }
        }
    }
    Ok(LatticeFit {
        constant: slope.exp().max(1.0),
        slope,
        sites: sites.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{build_grid, GridSpec};
    use approx::assert_relative_eq;

    fn grid(r: f64, h: f64) -> QuadratureGrid {
        build_grid(GridSpec::new(1, r, h)).unwrap()
    }

    #[test]
    fn exponent_pair() {
        let p = ExponentPair::new(3.0).unwrap();
        assert_relative_eq!(1.0 / p.p + 1.0 / p.p_conj, 1.0);
        assert!(ExponentPair::new(1.0).unwrap().p_conj.is_infinite());
        assert!(ExponentPair::new(0.5).is_err());
    }

    #[test]
    fn cube_mass_examples() {
        let g = grid(8.0, 0.05);
        let one = Weight::constant(1.0);
        let q = CubeSpec::new(ComplexPoint::origin(1), 2.0).unwrap();
        assert_relative_eq!(cube_mass(&one, &q, &g).unwrap(), 4.0, max_relative = 1e-14);
        let q = CubeSpec::new(ComplexPoint::new(vec![1.3, -2.7]).unwrap(), 1.0).unwrap();
        assert_relative_eq!(cube_mass(&one, &q, &g).unwrap(), 1.0, max_relative = 1e-14);
        let q = CubeSpec::new(ComplexPoint::origin(1), 16.0).unwrap();
        let m = cube_mass(&Weight::gaussian(-1.0), &q, &g).unwrap();
        assert_relative_eq!(m, std::f64::consts::PI, max_relative = 1e-4);
    }

    #[test]
    fn cube_escaping_box_is_truncation() {
        let g = grid(2.0, 0.1);
        let q = CubeSpec::new(ComplexPoint::new(vec![1.8, 0.0]).unwrap(), 1.0).unwrap();
        match cube_mass(&Weight::constant(1.0), &q, &g).unwrap_err() {
            Error::Truncation {
                required_radius, ..
            } => assert_relative_eq!(required_radius, 2.3),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn dual_weights() {
        let p2 = ExponentPair::new(2.0).unwrap();
        let p3 = ExponentPair::new(3.0).unwrap();
        assert_eq!(dual_weight(&Weight::constant(1.0), p2).unwrap(), Weight::constant(1.0));
        let w = Weight::power(2.0);
        let d = dual_weight(&w, p2).unwrap();
        for x in [[0.3, 0.1], [2.0, -1.0]] {
            assert_relative_eq!(d.eval(&x), 1.0 / w.eval(&x), max_relative = 1e-14);
        }
        assert_eq!(dual_weight(&Weight::gaussian(-1.0), p3).unwrap(), Weight::gaussian(0.5));
        assert!(matches!(
            dual_weight(&w, ExponentPair::new(1.0).unwrap()),
            Err(Error::UnsupportedExponent(_))
        ));
        assert!(matches!(
            dual_weight(&Weight::constant(0.0), p2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn serde_round_trip() {
        let w: Weight = serde_json::from_str(r#"{"family":"gaussian","beta":-1.0}"#).unwrap();
        assert_eq!(w, Weight::gaussian(-1.0));
        let w: Weight = serde_json::from_str(
            r#"{"family":"product","factors":[{"family":"power","beta":2.0},{"family":"constant","value":3.0}]}"#,
        )
        .unwrap();
        assert_relative_eq!(w.eval(&[1.0, 0.0]), 12.0);
        assert!(serde_json::from_str::<Weight>(r#"{"family":"power","beta":2.0,"x":1}"#).is_err());
        let s: ScanSpec = serde_json::from_str(r#"{"radius":6.0,"step":0.25}"#).unwrap();
        assert_eq!(s, ScanSpec::default());
    }

    #[test]
    fn scan_centers() {
        let c = ScanSpec::new(1.0, 0.5).centers(1);
        assert_eq!(c.len(), 13);
        assert!(c.iter().all(|x| norm_sq(x) <= 1.0 + 1e-12));
    }

    #[test]
    fn constant_weight_characteristics() {
        let g = grid(8.0, 0.05);
        for p in [1.0, 1.5, 2.0, 3.0] {
            let p = ExponentPair::new(p).unwrap();
            let w = Weight::constant(2.5);
            let rep = joint_characteristic(&w, &w, p, 1.0, None, ScanSpec::new(3.0, 0.5), &g).unwrap();
            assert!((rep.value - 1.0).abs() < 1e-8, "{rep:?}");
        }
        let d = doubling_constant(&Weight::constant(1.0), 1.0, ScanSpec::new(3.0, 0.5), &g).unwrap();
        assert!((d.report.value - 4.0).abs() < 1e-8);
        assert!(!d.suspect);
    }

    #[test]
    fn tabulated_lookup() {
        let g = grid(2.0, 0.5);
        let w = Weight::power(1.0);
        let t = w.tabulate(&g);
        t.validate(1).unwrap();
        let x = g.node(10).coords;
        assert_eq!(t.eval(&x), w.eval(&x));
        assert_eq!(t.eval(&[9.0, 9.0]), w.eval(&g.node(g.len() - 1).coords));
    }

    #[test]
    fn hat_of_constant_is_constant() {
        let h = hat_weight(&Weight::constant(1.0), 0.05);
        assert_relative_eq!(h.eval(&[3.1, -0.4]), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn radial_step_and_validate() {
        let w = Weight::RadialStep {
            radii: vec![1.0, 2.0],
            values: vec![3.0, 2.0, 1.0],
        };
        w.validate(1).unwrap();
        assert_eq!(w.eval(&[0.5, 0.0]), 3.0);
        assert_eq!(w.eval(&[1.5, 0.0]), 2.0);
        assert_eq!(w.eval(&[0.0, 2.5]), 1.0);
        assert!(Weight::RadialStep {
            radii: vec![1.0],
            values: vec![1.0]
        }
        .validate(1)
        .is_err());
        assert!(Weight::AnisotropicPower { betas: vec![1.0] }.validate(1).is_err());
    }
}
