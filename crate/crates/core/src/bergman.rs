//! Unit disk geometry: Carleson tents, the Bergman metric, `B_p` and `C_p`
//! characteristics, averaged weights and Bergman-Toeplitz Berezin transforms.
//!
//! Predicates work on the unit ball of C^n; quadrature is on the disk (n = 1).

use crate::error::{invalid, Error, Result};
use crate::numerics::{composite_gauss_legendre, inner, norm_sq, ComplexPoint, NeumaierSum};
use crate::weights::{fmt_num, sentinel, CharacteristicReport, ExponentPair};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `tanh 1`: Bergman-metric balls of radius 1 are pseudo-hyperbolic balls of this radius.
pub const TANH_ONE: f64 = 0.761_594_155_955_764_9;

/// Default distance kept from the unit circle by disk quadrature.
pub const DEFAULT_DELTA: f64 = 1e-3;

/// Point of the open unit ball in C^n, as `2n` real coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BallPoint {
    pub coords: Vec<f64>,
}

impl BallPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 2 != 0 || coords.iter().any(|x| !x.is_finite()) {
            return Err(invalid("ball point needs 2n finite coordinates"));
        }
        if norm_sq(&coords).sqrt() >= 1.0 - 1e-12 {
            return Err(Error::Domain("point is not inside the unit ball".into()));
        }
        Ok(Self { coords })
    }

    pub fn disk(z: Complex64) -> Result<Self> {
        Self::new(vec![z.re, z.im])
    }

    pub fn norm(&self) -> f64 {
        norm_sq(&self.coords).sqrt()
    }
}

/// `1 - |z|^2` without cancellation near the boundary.
fn one_minus_sq(z: &[f64]) -> f64 {
    let r = norm_sq(z).sqrt();
    (1.0 - r) * (1.0 + r)
}

/// Membership in `T_a = {z : |1 - <z, a/|a|>| < 1 - |a|}`; `T_0` is the whole ball.
pub fn tent_membership(a: &[f64], z: &[f64]) -> bool {
    let na = norm_sq(a).sqrt();
    if na == 0.0 {
        return true;
    }
    let zeta: Vec<f64> = a.iter().map(|x| x / na).collect();
    (Complex64::new(1.0, 0.0) - inner(z, &zeta)).norm() < 1.0 - na
}

/// `1 - |phi_z(u)|^2 = (1-|z|^2)(1-|u|^2) / |1 - <u,z>|^2`.
pub fn pseudo_hyperbolic_complement(z: &[f64], u: &[f64]) -> f64 {
    let d = (Complex64::new(1.0, 0.0) - inner(u, z)).norm_sqr();
    one_minus_sq(z) * one_minus_sq(u) / d
}

/// `beta(z,u) = (1/2) log((1+|phi_z(u)|)/(1-|phi_z(u)|))`.
pub fn bergman_metric(z: &[f64], u: &[f64]) -> Result<f64> {
    if z.len() != u.len() {
        return Err(Error::DimensionMismatch("points live in different dimensions".into()));
    }
    if norm_sq(z) >= 1.0 || norm_sq(u) >= 1.0 {
        return Err(Error::Domain("points must lie in the open unit ball".into()));
    }
    let q = pseudo_hyperbolic_complement(z, u).min(1.0);
    if q <= 0.0 || !q.is_finite() {
        return Err(Error::Domain("points too close to the boundary for the metric".into()));
    }
    let s = (1.0 - q).sqrt();
    // (1+s)/(1-s) = (1+s)^2 / q
    Ok((s.ln_1p() - 0.5 * q.ln()).max(0.0))
}

/// Apex of a tent with `tilde a = (1 - 20(1-|a|)) a/|a|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TentSpec {
    pub apex: Vec<f64>,
    pub tilde_apex: Option<Vec<f64>>,
}

impl TentSpec {
    pub fn new(apex: Vec<f64>) -> Result<Self> {
        let na = norm_sq(&apex).sqrt();
        if na > 0.0 {
            BallPoint::new(apex.clone())?;
        }
        let tilde_apex = (na > 19.0 / 20.0).then(|| {
            let f = (1.0 - 20.0 * (1.0 - na)) / na;
            apex.iter().map(|x| x * f).collect()
        });
        Ok(Self { apex, tilde_apex })
    }
}

/// `(sqrt 10 + 1)^2`, the pivot of the containment constant chain.
pub fn chain_pivot() -> f64 {
    let s = 10f64.sqrt() + 1.0;
    s * s
}

/// Radial weight on the disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiskWeight {
    Constant { value: f64 },
    /// `(1 - |z|^2)^gamma`
    StdRadial { gamma: f64 },
    /// `z -> base(D(z,1)) / v(D(z,1))`
    Hat { base: Box<DiskWeight> },
}

impl DiskWeight {
    pub fn std_radial(gamma: f64) -> Self {
        DiskWeight::StdRadial { gamma }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DiskWeight::Constant { value } if !(value.is_finite() && *value > 0.0) => {
                Err(invalid("constant disk weight must be positive"))
            }
            DiskWeight::StdRadial { gamma } if !gamma.is_finite() => Err(invalid("gamma must be finite")),
            DiskWeight::Hat { base } => base.validate(),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DiskWeight::Constant { .. } => "constant",
            DiskWeight::StdRadial { .. } => "std_radial",
            DiskWeight::Hat { .. } => "hat",
        }
    }

    /// Evaluator with averaged weights tabulated.
    pub fn prepare(&self) -> Result<PreparedWeight> {
        self.validate()?;
        Ok(match self {
            DiskWeight::Constant { value } => PreparedWeight::Constant(*value),
            DiskWeight::StdRadial { gamma } => PreparedWeight::Std(*gamma),
            DiskWeight::Hat { base } => {
                let b = base.prepare()?;
                PreparedWeight::table(&b)
            }
        })
    }

    /// `w(z)` for a disk point.
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        match self {
            DiskWeight::Hat { base } => hat_value(&base.prepare()?, z),
            _ => {
                let p = self.prepare()?;
                Ok(p.eval(norm_sq(z).sqrt(), one_minus_sq(z)))
            }
        }
    }
}

/// `sigma -> sigma_hat`.
pub fn hat_sigma(sigma: &DiskWeight) -> DiskWeight {
    DiskWeight::Hat {
        base: Box::new(sigma.clone()),
    }
}

const TABLE_MIN_LN: f64 = -16.0;
const TABLE_POINTS: usize = 801;

/// Radial weight evaluated from `(r, 1 - r^2)`.
#[derive(Debug, Clone)]
pub enum PreparedWeight {
    Constant(f64),
    Std(f64),
    /// `ln w` tabulated on `x = ln(1 - r)`, uniform in `x` from 0 down to `TABLE_MIN_LN`.
    Table(Vec<f64>),
}

impl PreparedWeight {
    fn table(base: &PreparedWeight) -> Self {
        let vals = (0..TABLE_POINTS)
            .into_par_iter()
            .map(|k| {
                let x = TABLE_MIN_LN * k as f64 / (TABLE_POINTS - 1) as f64;
                let r = -x.exp_m1();
                hat_value(base, &[r, 0.0]).map(|v| v.ln())
            })
            .collect::<Result<Vec<_>>>()
            .expect("hat of a valid weight");
        PreparedWeight::Table(vals)
    }

    pub fn ln_eval(&self, r: f64, s: f64) -> f64 {
        match self {
            PreparedWeight::Constant(c) => c.ln(),
            PreparedWeight::Std(g) => {
                if *g == 0.0 {
                    0.0
                } else {
                    g * s.ln()
                }
            }
            PreparedWeight::Table(v) => {
                // 1 - r = s / (1 + r)
                let x = (s / (1.0 + r)).ln();
                let step = TABLE_MIN_LN / (TABLE_POINTS - 1) as f64;
                let t = (x / step).max(0.0);
                let k = (t.floor() as usize).min(TABLE_POINTS - 2);
                let f = t - k as f64;
                v[k] * (1.0 - f) + v[k + 1] * f
            }
        }
    }

    pub fn eval(&self, r: f64, s: f64) -> f64 {
        self.ln_eval(r, s).exp()
    }
}

/// Center and radius of the Euclidean disc `D(z,1)`.
pub fn metric_disc(z: Complex64) -> (Complex64, f64) {
    let s2 = TANH_ONE * TANH_ONE;
    let r2 = z.norm_sqr();
    let den = 1.0 - s2 * r2;
    (z * ((1.0 - s2) / den), TANH_ONE * (1.0 - r2) / den)
}

/// Nodes `(u, 1 - |u|^2, weight)` of a polar rule on `D(z,1)`.
fn metric_disc_rule(z: Complex64) -> Vec<(Complex64, f64, f64)> {
    let (c, re) = metric_disc(z);
    let radial = composite_gauss_legendre(&[0.0, 0.5 * re, re], 16).expect("valid breaks");
    let m = 64;
    let mut out = Vec::with_capacity(radial.len() * m);
    for (t, wt) in radial {
        for k in 0..m {
            let th = 2.0 * PI * (k as f64 + 0.5) / m as f64;
            let u = c + Complex64::from_polar(t, th);
            let r = u.norm();
            out.push((u, (1.0 - r) * (1.0 + r), wt * t * 2.0 * PI / m as f64));
        }
    }
    out
}

fn hat_value(base: &PreparedWeight, z: &[f64]) -> Result<f64> {
    if norm_sq(z) >= 1.0 {
        return Err(Error::Domain("point outside the disk".into()));
    }
    if let PreparedWeight::Constant(c) = base {
        return Ok(*c);
    }
    let mut num = NeumaierSum::default();
    let mut den = NeumaierSum::default();
    for (u, s, w) in metric_disc_rule(Complex64::new(z[0], z[1])) {
        num.add(w * base.eval(u.norm(), s));
        den.add(w);
    }
    Ok(num.value() / den.value())
}

/// Breakpoints on `[lo, hi]` refined geometrically toward singular points at
/// `lo - left` and `hi + right`, with panel width at most `max_width`.
fn graded_breaks(lo: f64, hi: f64, left: Option<f64>, right: Option<f64>, max_width: f64) -> Vec<f64> {
    let mut b = vec![lo, hi];
    if let Some(d) = left.filter(|d| *d > 0.0) {
        let x0 = lo - d;
        let mut k = d;
        while x0 + 2.0 * k < hi {
            k *= 2.0;
            b.push(x0 + k);
        }
    }
    if let Some(d) = right.filter(|d| *d > 0.0) {
        let x0 = hi + d;
        let mut k = d;
        while x0 - 2.0 * k > lo {
            k *= 2.0;
            b.push(x0 - k);
        }
    }
    let n = ((hi - lo) / max_width).ceil().max(1.0) as usize;
    b.extend((1..n).map(|i| lo + (hi - lo) * i as f64 / n as f64));
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
    b
}

/// Breakpoints on `[lo, end]` clustering geometrically at `end`.
fn clustered_toward(lo: f64, end: f64, levels: usize) -> Vec<f64> {
    let mut b = vec![lo];
    let span = end - lo;
    for k in 1..=levels {
        b.push(end - span * 0.5f64.powi(k as i32));
    }
    b.push(end);
    b
}

/// Quadrature on disk regions, kept inside `|z| <= 1 - delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskRule {
    pub delta: f64,
    /// Gauss-Legendre degree per panel.
    pub degree: usize,
}

impl Default for DiskRule {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            degree: 12,
        }
    }
}

/// Node of a disk rule: position, `1 - |z|^2`, weight (area element).
#[derive(Debug, Clone, Copy)]
pub struct DiskNode {
    pub z: Complex64,
    pub s: f64,
    pub w: f64,
}

impl DiskRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.5) || self.degree < 2 {
            return Err(invalid("disk rule needs 0 < delta < 1/2 and degree >= 2"));
        }
        Ok(())
    }

    /// `|z| <= 1 - delta`.
    pub fn whole_disk(&self) -> Vec<DiskNode> {
        let top = 1.0 - self.delta;
        let breaks = graded_breaks(0.0, top, None, Some(self.delta), 0.1);
        let radial = composite_gauss_legendre(&breaks, self.degree).expect("valid breaks");
        let m = 64;
        let mut out = Vec::with_capacity(radial.len() * m);
        for (r, wr) in radial {
            let s = (1.0 - r) * (1.0 + r);
            for k in 0..m {
                let th = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                out.push(DiskNode {
                    z: Complex64::from_polar(r, th),
                    s,
                    w: wr * r * 2.0 * PI / m as f64,
                });
            }
        }
        out
    }

    /// Tent `T_a` intersected with `|z| <= 1 - delta`; empty when the tent lies beyond.
    pub fn tent(&self, a: Complex64) -> Vec<DiskNode> {
        let na = a.norm();
        if na == 0.0 {
            return self.whole_disk();
        }
        let zeta = a / na;
        let rho = 1.0 - na;
        let e = self.delta * (2.0 - self.delta);
        // z = zeta (1 - t e^{i psi}); 1 - |z|^2 = t (2 cos psi - t), confined when
        // t^2 - 2 t cos psi + e <= 0
        let se = e.sqrt();
        if se >= 1.0 {
            return Vec::new();
        }
        let psi_max = se.acos();
        let cb = (rho * rho + e) / (2.0 * rho);
        let mut psi_breaks = Vec::new();
        if cb < 1.0 && cb > se {
            let pb = cb.acos();
            let mut left: Vec<f64> = clustered_toward(pb, psi_max, 30).into_iter().map(|x| -x).collect();
            left.reverse();
            psi_breaks.extend(left);
            psi_breaks.extend(graded_breaks(-pb, pb, None, None, 0.1).into_iter().skip(1));
            psi_breaks.extend(clustered_toward(pb, psi_max, 30).into_iter().skip(1));
        } else if cb <= se {
            // the whole confined lens lies inside the tent
            let mut left: Vec<f64> = clustered_toward(0.0, psi_max, 30).into_iter().map(|x| -x).collect();
            left.reverse();
            psi_breaks.extend(left);
            psi_breaks.extend(clustered_toward(0.0, psi_max, 30).into_iter().skip(1));
        } else {
            return Vec::new();
        }
        psi_breaks.dedup();
        let psi_rule = composite_gauss_legendre(&psi_breaks, self.degree).expect("valid breaks");
        let mut out = Vec::new();
        for (psi, wp) in psi_rule {
            let c = psi.cos();
            let disc = c * c - e;
            if disc <= 0.0 {
                continue;
            }
            let root = disc.sqrt();
            let t_plus = c + root;
            let t_minus = e / t_plus;
            let hi = t_plus.min(rho);
            if hi <= t_minus {
                continue;
            }
            let breaks = graded_breaks(t_minus, hi, Some(t_minus), Some(2.0 * c - hi), 0.1);
            for (t, wt) in composite_gauss_legendre(&breaks, self.degree).expect("valid breaks") {
                let z = zeta * (Complex64::new(1.0, 0.0) - Complex64::from_polar(t, psi));
                out.push(DiskNode {
                    z,
                    s: t * (2.0 * c - t),
                    w: wp * wt * t,
                });
            }
        }
        out
    }

    /// `D(a,1)` with the same node format.
    pub fn metric_ball(&self, a: Complex64) -> Vec<DiskNode> {
        metric_disc_rule(a)
            .into_iter()
            .map(|(z, s, w)| DiskNode { z, s, w })
            .collect()
    }
}

/// Normalized area `v(T_a)` of the confined tent.
pub fn tent_volume(a: Complex64, rule: &DiskRule) -> f64 {
    NeumaierSum::sum(rule.tent(a).iter().map(|n| n.w)) / PI
}

trait SumExt {
    fn sum<I: IntoIterator<Item = f64>>(it: I) -> f64;
}

impl SumExt for NeumaierSum {
    fn sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
        let mut s = NeumaierSum::default();
        for x in it {
            s.add(x);
        }
        s.value()
    }
}

/// Apexes scanned for tent and metric-ball suprema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApexScan {
    pub moduli: Vec<f64>,
    pub angles: usize,
}

impl Default for ApexScan {
    fn default() -> Self {
        Self {
            moduli: vec![0.0, 0.5, 0.9, 0.96, 0.99],
            angles: 16,
        }
    }
}

impl ApexScan {
    pub fn validate(&self) -> Result<()> {
        if self.moduli.is_empty()
            || self.angles == 0
            || self.moduli.iter().any(|m| !(m.is_finite() && *m >= 0.0 && *m < 1.0))
            || self.moduli.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(invalid("apex moduli must be increasing in [0, 1) with at least one angle"));
        }
        Ok(())
    }

    /// Midpoints added between moduli and twice the angles.
    pub fn refined(&self) -> Self {
        let mut m = Vec::with_capacity(2 * self.moduli.len());
        for w in self.moduli.windows(2) {
            m.push(w[0]);
            m.push(0.5 * (w[0] + w[1]));
        }
        m.push(*self.moduli.last().unwrap());
        Self {
            moduli: m,
            angles: 2 * self.angles,
        }
    }

    pub fn apexes(&self) -> Vec<Complex64> {
        let mut out = Vec::new();
        for &m in &self.moduli {
            if m == 0.0 {
                out.push(Complex64::new(0.0, 0.0));
                continue;
            }
            for k in 0..self.angles {
                out.push(Complex64::from_polar(m, 2.0 * PI * k as f64 / self.angles as f64));
            }
        }
        out
    }
}

/// `avg sigma * (avg sigma^{-p'/p})^{p/p'}` (or `avg sigma * max sigma^{-1}` at p = 1).
fn region_product(nodes: &[DiskNode], sigma: &PreparedWeight, p: ExponentPair) -> Option<f64> {
    if nodes.is_empty() {
        return None;
    }
    let mut vol = NeumaierSum::default();
    let mut a = NeumaierSum::default();
    let mut b = NeumaierSum::default();
    let mut mx = 0.0f64;
    let e = if p.is_one() { 1.0 } else { p.dual_power() };
    for n in nodes {
        let r = n.z.norm();
        let l = sigma.ln_eval(r, n.s);
        vol.add(n.w);
        a.add(n.w * l.exp());
        let d = (-e * l).exp();
        b.add(n.w * d);
        mx = mx.max(d);
    }
    let v = vol.value();
    if v <= 0.0 {
        return None;
    }
    let avg = a.value() / v;
    Some(if p.is_one() {
        avg * mx
    } else {
        avg * (b.value() / v).powf(p.p / p.p_conj)
    })
}

/// Tent product at a single apex; `None` when the confined tent is empty.
pub fn tent_product(sigma: &DiskWeight, p: ExponentPair, a: Complex64, rule: &DiskRule) -> Result<Option<f64>> {
    rule.validate()?;
    Ok(region_product(&rule.tent(a), &sigma.prepare()?, p))
}

fn scan_regions<F>(scan: &ApexScan, sigma: &PreparedWeight, p: ExponentPair, region: F) -> Result<(f64, Complex64, usize)>
where
    F: Fn(Complex64) -> Vec<DiskNode> + Sync,
{
    scan.validate()?;
    let apexes = scan.apexes();
    let vals: Vec<Option<f64>> = apexes.par_iter().map(|a| region_product(&region(*a), sigma, p)).collect();
    let mut best = f64::NEG_INFINITY;
    let mut arg = Complex64::new(0.0, 0.0);
    let mut used = 0;
    for (a, v) in apexes.iter().zip(vals) {
        match v {
            Some(v) => {
                used += 1;
                let v = sentinel(v);
                if v > best {
                    best = v;
                    arg = *a;
                }
            }
            None => log::info!("skipping empty region at apex {a}"),
        }
    }
    if used == 0 {
        return Err(Error::Domain("every scanned region is empty".into()));
    }
    Ok((best, arg, used))
}

fn disk_report<F>(sigma: &DiskWeight, p: ExponentPair, scan: &ApexScan, region: F) -> Result<CharacteristicReport>
where
    F: Fn(Complex64) -> Vec<DiskNode> + Sync,
{
    let prep = sigma.prepare()?;
    let (v, arg, used) = scan_regions(scan, &prep, p, &region)?;
    let (vr, _, _) = scan_regions(&scan.refined(), &prep, p, &region)?;
    let gap = if v.is_finite() && vr.is_finite() && vr > 0.0 {
        (vr - v).abs() / vr
    } else {
        f64::INFINITY
    };
    let skipped = scan.apexes().len() - used;
    Ok(CharacteristicReport {
        value: v,
        argmax_center: ComplexPoint::from_complex(&[arg]),
        scan_radius: *scan.moduli.last().unwrap(),
        scan_step: 2.0 * PI / scan.angles as f64,
        refinement_gap: gap,
        centers_scanned: used,
        note: (skipped > 0).then(|| format!("{skipped} empty regions skipped")),
    })
}

/// `[sigma]_{B_p}`: supremum over tents.
pub fn bp_characteristic(sigma: &DiskWeight, p: ExponentPair, scan: &ApexScan, rule: &DiskRule) -> Result<CharacteristicReport> {
    rule.validate()?;
    disk_report(sigma, p, scan, |a| rule.tent(a))
}

/// `[sigma]_{C_p}`: supremum over Bergman-metric balls `D(a,1)`.
pub fn cp_characteristic(sigma: &DiskWeight, p: ExponentPair, scan: &ApexScan, rule: &DiskRule) -> Result<CharacteristicReport> {
    rule.validate()?;
    disk_report(sigma, p, scan, |a| rule.metric_ball(a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub apex: Vec<f64>,
    pub tilde_apex: Vec<f64>,
    pub samples: usize,
    pub violations: usize,
    /// `max |1 - <u, a/|a|>| / (1 - |a|)` over the samples.
    pub max_constant: f64,
}

/// Whether `u` lies in `T_{tilde a}`.
pub fn containment_holds(a: &[f64], u: &[f64]) -> Result<bool> {
    let spec = TentSpec::new(a.to_vec())?;
    let ta = spec
        .tilde_apex
        .ok_or_else(|| Error::Domain("containment needs |a| > 19/20".into()))?;
    Ok(tent_membership(&ta, u))
}

/// Samples `z in T_a`, `u in D(z,1)` and checks `u in T_{tilde a}`.
pub fn containment_check(a: Complex64, samples: usize, seed: u64) -> Result<ContainmentReport> {
    let na = a.norm();
    if !(na > 19.0 / 20.0 && na < 1.0) {
        return Err(Error::Domain(format!("containment needs 19/20 < |a| < 1 (got {na})")));
    }
    let spec = TentSpec::new(vec![a.re, a.im])?;
    let ta = spec.tilde_apex.clone().unwrap();
    let zeta = a / na;
    let rho = 1.0 - na;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut max_c = 0.0f64;
    let mut done = 0;
    while done < samples {
        // uniform in the disc of radius rho about zeta, kept if inside the tent
        let t = rho * rng.gen::<f64>().sqrt();
        let th = 2.0 * PI * rng.gen::<f64>();
        let z = zeta + Complex64::from_polar(t, th);
        if z.norm() >= 1.0 || !tent_membership(&[a.re, a.im], &[z.re, z.im]) {
            continue;
        }
        let (c, re) = metric_disc(z);
        let u = c + Complex64::from_polar(re * rng.gen::<f64>().sqrt(), 2.0 * PI * rng.gen::<f64>());
        done += 1;
        let k = (Complex64::new(1.0, 0.0) - u * zeta.conj()).norm() / rho;
        max_c = max_c.max(k);
        if !tent_membership(&ta, &[u.re, u.im]) {
            violations += 1;
        }
    }
    Ok(ContainmentReport {
        apex: vec![a.re, a.im],
        tilde_apex: ta,
        samples,
        violations,
        max_constant: max_c,
    })
}

/// Radial symbol on the disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "symbol", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiskSymbol {
    Constant { value: f64 },
    /// `chi_{|w| < radius}`
    IndicatorDisc { radius: f64 },
    /// `|w|^power`
    Modulus { power: f64 },
}

impl DiskSymbol {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            DiskSymbol::Constant { value } => *value,
            DiskSymbol::IndicatorDisc { radius } => {
                if r < *radius {
                    1.0
                } else {
                    0.0
                }
            }
            DiskSymbol::Modulus { power } => r.powf(*power),
        }
    }

    fn breaks(&self) -> Vec<f64> {
        match self {
            DiskSymbol::IndicatorDisc { radius } if *radius > 0.0 && *radius < 1.0 => vec![*radius],
            _ => Vec::new(),
        }
    }
}

/// `<T_phi k_z, k_z>` on the Bergman space of the disk:
/// `int phi(w) (1-|z|^2)^2 / |1 - w conj(z)|^4 dA(w)/pi` in polar coordinates.
pub fn bergman_berezin(phi: &DiskSymbol, z: Complex64, rule: &DiskRule) -> Result<f64> {
    if z.norm() > 1.0 - rule.delta {
        return Err(Error::Domain(format!(
            "|z| = {} is beyond the quadrature radius 1 - {}",
            z.norm(),
            rule.delta
        )));
    }
    let rz = z.norm();
    let s = (1.0 - rz) * (1.0 + rz);
    let mut breaks = graded_breaks(0.0, 1.0, None, Some(1.0 - rz), 0.05);
    breaks.extend(phi.breaks());
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    let radial = composite_gauss_legendre(&breaks, 16)?;
    let mut acc = NeumaierSum::default();
    for (r, wr) in radial {
        let v = phi.eval(r);
        if v == 0.0 {
            continue;
        }
        // trapezoid in the angle; error ~ (r|z|)^m
        let q = (1.0 - r * rz).max(1e-16);
        let m = ((40.0 / q).ceil() as usize).clamp(64, 1 << 16);
        let mut ang = NeumaierSum::default();
        for k in 0..m {
            let th = 2.0 * PI * k as f64 / m as f64;
            let d = (Complex64::new(1.0, 0.0) - Complex64::from_polar(r, th) * z.conj()).norm_sqr();
            ang.add(1.0 / (d * d));
        }
        acc.add(wr * r * v * ang.value() * 2.0 / m as f64);
    }
    Ok(acc.value() * s * s)
}

/// Same transform through the change of variables `w = phi_z(zeta)`:
/// `int phi(phi_z(zeta)) dA(zeta)/pi`.
pub fn bergman_berezin_pullback<F: Fn(Complex64) -> f64>(phi: F, z: Complex64, radial_nodes: usize, angles: usize) -> Result<f64> {
    if z.norm() >= 1.0 {
        return Err(Error::Domain("point outside the disk".into()));
    }
    let panels = radial_nodes.div_ceil(16).max(1);
    let breaks: Vec<f64> = (0..=panels).map(|i| i as f64 / panels as f64).collect();
    let radial = composite_gauss_legendre(&breaks, 16)?;
    let mut acc = NeumaierSum::default();
    for (r, wr) in radial {
        for k in 0..angles {
            let th = 2.0 * PI * (k as f64 + 0.5) / angles as f64;
            let zeta = Complex64::from_polar(r, th);
            let w = (z - zeta) / (Complex64::new(1.0, 0.0) - z.conj() * zeta);
            acc.add(wr * r * phi(w));
        }
    }
    Ok(acc.value() * 2.0 / angles as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HatLemmaRow {
    pub gamma: f64,
    pub sigma: CharacteristicReport,
    pub hat: CharacteristicReport,
    pub ratio: f64,
}

impl HatLemmaRow {
    pub const CSV_HEADER: [&'static str; 7] =
        ["gamma", "bp_sigma", "bp_sigma_gap", "bp_hat", "bp_hat_gap", "ratio", "argmax_hat"];

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            fmt_num(self.gamma),
            fmt_num(self.sigma.value),
            fmt_num(self.sigma.refinement_gap),
            fmt_num(self.hat.value),
            fmt_num(self.hat.refinement_gap),
            fmt_num(self.ratio),
            format!("{:?}", self.hat.argmax_center.coords),
        ]
    }
}

/// `[sigma_hat]_{B_p} / [sigma]_{B_p}` for `sigma = (1-|z|^2)^gamma`.
pub fn hat_lemma_check(gammas: &[f64], p: ExponentPair, scan: &ApexScan, rule: &DiskRule) -> Result<Vec<HatLemmaRow>> {
    gammas
        .iter()
        .map(|&g| {
            let s = DiskWeight::std_radial(g);
            let sigma = bp_characteristic(&s, p, scan, rule)?;
            let hat = bp_characteristic(&hat_sigma(&s), p, scan, rule)?;
            let ratio = hat.value / sigma.value;
            Ok(HatLemmaRow {
                gamma: g,
                sigma,
                hat,
                ratio,
            })
        })
        .collect()
}

/// `int_{|z| <= 1-delta} |f|^p w dA/pi`.
pub fn disk_lp_mass<F: Fn(Complex64) -> Complex64>(f: F, w: &PreparedWeight, p: f64, rule: &DiskRule) -> f64 {
    let mut acc = NeumaierSum::default();
    for n in rule.whole_disk() {
        acc.add(n.w * f(n.z).norm().powf(p) * w.eval(n.z.norm(), n.s));
    }
    acc.value() / PI
}
