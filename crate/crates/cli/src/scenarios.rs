use crate::config::{ExperimentConfig, Scenario};
use crate::{CliError, Recorder, Table};
use fwl_core::bergman::{
    bp_characteristic, chain_pivot, containment_check, cp_characteristic, hat_lemma_check, ApexScan, DiskRule,
    HatLemmaRow,
};
use fwl_core::fock::berezin_symbol;
use fwl_core::localization::{
    circle_samples, compactness_verdict, default_samples, wl_profile, Orientation, Verdict, VerdictConfig,
    DEFAULT_WL_GRID,
};
use fwl_core::matrix::{
    grid_operator_build, norm2_lanczos, norm_bracket, toeplitz_matrix, BracketConfig, BracketProblem, NormBracket,
    PowerIterationConfig, DEFAULT_OPERATOR_SPACING,
};
use fwl_core::numerics::{build_grid, GridSpec};
use fwl_core::weights::{
    ap_characteristic, doubling_constant, fmt_num, joint_characteristic, CharacteristicReport, ExponentPair, ScanSpec,
    Weight,
};
use num_complex::Complex64;
use std::f64::consts::PI;

const CUBE_GRID: GridSpec = GridSpec {
    n: 1,
    radius: 8.0,
    spacing: 0.05,
};

pub(crate) fn dispatch(cfg: &mut ExperimentConfig, rec: &mut Recorder) -> Result<(), CliError> {
    match cfg.scenario {
        Scenario::WeightCheck => weight_check(cfg, rec),
        Scenario::ProjectionNorm => projection_norm(cfg, rec),
        Scenario::ToeplitzNorm => toeplitz_norm(cfg, rec),
        Scenario::BerezinScan => berezin_scan(cfg, rec),
        Scenario::Compactness => compactness(cfg, rec),
        Scenario::Counterexample => counterexample(cfg, rec),
        Scenario::WlProfile => profile(cfg, rec),
        Scenario::BergmanBp => bergman_bp(cfg, rec),
        Scenario::BergmanContainment => bergman_containment(cfg, rec),
        Scenario::BergmanHatlemma => bergman_hatlemma(cfg, rec),
    }
}

fn exponent(cfg: &ExperimentConfig) -> Result<ExponentPair, CliError> {
    Ok(ExponentPair::new(cfg.p)?)
}

fn need<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| CliError::Schema {
        pointer: format!("/{key}"),
        message: format!("missing `{key}`"),
    })
}

fn power_cfg(cfg: &ExperimentConfig) -> PowerIterationConfig {
    PowerIterationConfig {
        seed: cfg.seed,
        ..PowerIterationConfig::default()
    }
}

fn characteristic_table(name: &str, reports: &[(&str, &CharacteristicReport)]) -> Table {
    let mut header = vec!["quantity"];
    header.extend(CharacteristicReport::CSV_HEADER);
    let mut t = Table::new(name, &header);
    for (q, r) in reports {
        let mut row = vec![q.to_string()];
        row.extend(r.csv_fields());
        t.push(row);
    }
    t
}

fn weight_check(cfg: &mut ExperimentConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let w = need(&cfg.weight, "weight")?.clone();
    let p = exponent(cfg)?;
    let scan = *cfg.scan.get_or_insert(ScanSpec::default());
    let grid = build_grid(*cfg.grid.get_or_insert(CUBE_GRID))?;
    let ch = ap_characteristic(&w, p, cfg.r, scan, &grid)?;
    let d = doubling_constant(&w, cfg.r, scan, &grid)?;
    rec.table(characteristic_table("characteristic", &[("a_p", &ch)]));
    rec.table(characteristic_table("doubling", &[("doubling", &d.report)]));
    rec.metric("characteristic", ch.value);
    rec.metric("characteristic_refinement_gap", ch.refinement_gap);
    rec.metric("doubling_constant", d.report.value);
    rec.label("doubling_suspect", d.suspect.to_string());
    rec.check("characteristic_finite", ch.is_finite(), fmt_num(ch.value));
    rec.check(
        "characteristic_scan_stable",
        ch.refinement_gap < 0.05,
        format!("refinement gap {} < 0.05", fmt_num(ch.refinement_gap)),
    );
    Ok(())
}

fn bracket_config(cfg: &mut ExperimentConfig) -> BracketConfig {
    let base = BracketConfig::default();
    BracketConfig {
        r: cfg.r,
        scan: *cfg.scan.get_or_insert(base.scan),
        cube_grid: *cfg.grid.get_or_insert(base.cube_grid),
        operator_grid: Some(*cfg.operator_grid.get_or_insert(base.operator_grid.unwrap())),
        power: power_cfg(cfg),
    }
}

fn bracket_table(b: &NormBracket) -> Table {
    let mut t = Table::new("bracket", &NormBracket::CSV_HEADER);
    t.push(b.csv_fields());
    t
}

/// `lower <= 1.1 point <= 1.21 upper`, all finite, `upper/lower <= 1e3`.
fn bracket_checks(b: &NormBracket, rec: &mut Recorder) {
    rec.metric("lower", b.lower);
    rec.metric("upper", b.upper);
    rec.metric("upper_over_lower", b.upper / b.lower);
    if let Some(pt) = b.point_estimate {
        rec.metric("point_estimate", pt);
    }
    rec.check(
        "bracket_finite",
        b.lower.is_finite() && b.lower > 0.0 && b.upper.is_finite(),
        format!(
            "lower {} upper {}{}",
            fmt_num(b.lower),
            fmt_num(b.upper),
            b.witnesses
                .upper_reason
                .as_ref()
                .map(|r| format!(" ({r})"))
                .unwrap_or_default()
        ),
    );
    if let Some(pt) = b.point_estimate {
        rec.check(
            "bracket_sound",
            b.lower <= 1.1 * pt && 1.1 * pt <= 1.21 * b.upper,
            format!("{} <= 1.1*{} <= 1.21*{}", fmt_num(b.lower), fmt_num(pt), fmt_num(b.upper)),
        );
    }
    rec.check(
        "bracket_width",
        b.upper / b.lower <= 1e3,
        format!("upper/lower = {}", fmt_num(b.upper / b.lower)),
    );
}

fn projection_norm(cfg: &mut ExperimentConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let problem = BracketProblem::Projection {
        sigma: need(&cfg.sigma, "sigma")?.clone(),
        w: need(&cfg.weight, "weight")?.clone(),
        p: cfg.p,
    };
    let bc = bracket_config(cfg);
    let b = norm_bracket(&cfg.params, &problem, &bc)?;
    rec.table(bracket_table(&b));
    rec.table(characteristic_table("characteristic", &[("joint", &b.witnesses.characteristic)]));
    rec.metric("characteristic", b.witnesses.characteristic.value);
    bracket_checks(&b, rec);
    Ok(())
}

fn toeplitz_norm(cfg: &mut ExperimentConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let phi = need(&cfg.symbol, "symbol")?.clone();
    let w = cfg.weight.get_or_insert(Weight::constant(1.0)).clone();
    let problem = BracketProblem::Toeplitz {
        phi: phi.clone(),
        w,
        p: cfg.p,
    };
    let bc = bracket_config(cfg);
    let b = norm_bracket(&cfg.params, &problem, &bc)?;
    rec.table(bracket_table(&b));
    let c = &b.witnesses;
    rec.table(characteristic_table("characteristic", &[("adapted", &c.characteristic)]));
    rec.metric("characteristic", c.characteristic.value);
    rec.metric("characteristic_blocks", c.characteristic_blocks);
    let agree = (c.characteristic_blocks / c.characteristic.value - 1.0).abs();
    rec.check(
        "characteristic_paths_agree",
        agree <= 1e-3,
        format!("relative difference {}", fmt_num(agree)),
    );
    rec.check(
        "finite_iff_bounded",
        c.characteristic.value.is_finite() == b.upper.is_finite(),
        format!("characteristic {} upper {}", fmt_num(c.characteristic.value), fmt_num(b.upper)),
    );
    bracket_checks(&b, rec);
    if let Some(n) = cfg.degree {
        let t = toeplitz_matrix(&cfg.params, &phi, n)?;
        let mut diag = Table::new("toeplitz_diagonal", &["m", "re", "im"]);
        for m in 0..t.dim() {
            let v = t.entries[(m, m)];
            diag.push(vec![m.to_string(), fmt_num(v.re), fmt_num(v.im)]);
        }
        rec.table(diag);
        let nm = norm2_lanczos(&t, power_cfg(cfg))?;
        rec.metric("matrix_norm", nm.value);
    }
    Ok(())
}

fn verdict_from_sups(radii: &[f64], sups: &[f64], v: &VerdictConfig) -> Verdict {
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    if sups.last().is_some_and(|s| *s < v.berezin_threshold) {
        Verdict::CompactConsistent
    } else if radii
        .iter()
        .zip(sups)
        .filter(|(r, _)| **r >= rmax / 2.0)
        .all(|(_, s)| *s > v.noncompact_threshold)
    {
        Verdict::NonCompactConsistent
    } else {
        Verdict::Inconclusive
    }
}

fn verdict_name(v: Verdict) -> String {
    serde_json::to_value(v).unwrap().as_str().unwrap().to_string()
}

fn berezin_scan(cfg: &mut ExperimentConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let phi = need(&cfg.symbol, "symbol")?.clone();
    let radii = cfg.radii.get_or_insert(vec![0.0, 1.0, 2.0, 3.0, 4.0]).clone();
    let angles = *cfg.angles.get_or_insert(16);
    let grid = build_grid(*cfg.grid.get_or_insert(CUBE_GRID))?;
    let mut t = Table::new("berezin", &["radius", "angle", "re", "im", "abs"]);
    let mut sups = Vec::with_capacity(radii.len());
    let mut finite = true;
    for &rho in &radii {
        let k = if rho == 0.0 { 1 } else { angles };
        let mut sup = 0.0f64;
        for j in 0..k {
            let th = 2.0 * PI * j as f64 / k as f64;
            let z = [rho * th.cos(), rho * th.sin()];
            let v = berezin_symbol(&cfg.params, &phi, &z, &grid)?;
            finite &= v.re.is_finite() && v.im.is_finite();
            sup = sup.max(v.norm());
            t.push(vec![fmt_num(rho), fmt_num(th), fmt_num(v.re), fmt_num(v.im), fmt_num(v.norm())]);
        }
        sups.push(sup);
    }
    rec.table(t);
    let vc = VerdictConfig::default();
    let verdict = verdict_from_sups(&radii, &sups, &vc);
    for (r, s) in radii.iter().zip(&sups) {
        rec.metric(&format!("sup_at_{r}"), *s);
    }
    rec.label("verdict", verdict_name(verdict));
    rec.check("finite", finite, "all transform values finite");
    rec.check(
        "decisive",
        verdict != Verdict::Inconclusive,
        format!("verdict {}", verdict_name(verdict)),
    );
    Ok(())
}

fn compactness(cfg: &mut ExperimentConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let phi = need(&cfg.symbol, "symbol")?.clone();
    let w = cfg.weight.get_or_insert(Weight::constant(1.0)).clone();
    let degree = *cfg.degree.get_or_insert(60);
    let p = exponent(cfg)?;
    let mut vc = cfg.verdict.get_or_insert_with(VerdictConfig::default).clone();
    vc.tail.seed = cfg.seed;
    cfg.verdict = Some(vc.clone());
    let t = toeplitz_matrix(&cfg.params, &phi, degree)?;
    let v = compactness_verdict(&t, p, &w, &vc)?;
    let mut bt = Table::new("berezin_sup", &["radius", "sup"]);
    for (r, s) in v.berezin_radii.iter().zip(&v.berezin_sup_at_radius) {
        bt.push(vec![fmt_num(*r), fmt_num(*s)]);
        rec.metric(&format!("berezin_sup_at_{r}"), *s);
    }
    let mut tt = Table::new("tail", &["radius", "tail_norm", "lower_estimate"]);
    for (r, s) in v.tail_radii.iter().zip(&v.tail_norm_at_radius) {
        tt.push(vec![fmt_num(*r), fmt_num(*s), v.tail_lower_estimate.to_string()]);
        rec.metric(&format!("tail_norm_at_{r}"), *s);
    }
    rec.table(bt);
    rec.table(tt);
    rec.label("verdict", verdict_name(v.verdict));
    rec.check(
        "decisive",
        v.verdict != Verdict::Inconclusive,
        format!("verdict {}", verdict_name(v.verdict)),
    );
    Ok(())
}

fn grid_norm(cfg: &ExperimentConfig, sigma: &Weight, w: &Weight, radius: f64, h: f64) -> Result<(f64, usize), CliError> {
    let grid = build_grid(GridSpec::new(cfg.params.n, radius, h))?;
    let op = grid_operator_build(&cfg.params, sigma, w, ExponentPair::new(2.0)?, &grid)?;
    let r = norm2_lanczos(&op, power_cfg(cfg))?;
    Ok((r.value, r.iterations))
}

fn counterexample(cfg: &mut ExperimentConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let w = cfg.weight.get_or_insert(Weight::gaussian(-4.0)).clone();
    let sigma = cfg.sigma.get_or_insert(Weight::gaussian(-1.0)).clone();
    let boxes = cfg.boxes.get_or_insert(vec![2.0, 3.0, 4.0]).clone();
    let h = *cfg.spacing.get_or_insert(DEFAULT_OPERATOR_SPACING);
    let scan = *cfg.scan.get_or_insert(ScanSpec::new(4.0, 0.25));
    let grid = build_grid(*cfg.grid.get_or_insert(CUBE_GRID))?;
    cfg.p = 2.0;
    let p = ExponentPair::new(2.0)?;
    let ch = joint_characteristic(&w, &sigma, p, cfg.r, None, scan, &grid)?;
    rec.table(characteristic_table("characteristic", &[("joint", &ch)]));
    rec.metric("characteristic", ch.value);
    rec.metric("characteristic_refinement_gap", ch.refinement_gap);
    rec.check(
        "characteristic_finite_and_stable",
        ch.is_finite() && ch.refinement_gap < 0.05,
        format!("{} (gap {})", fmt_num(ch.value), fmt_num(ch.refinement_gap)),
    );

    let control = Weight::constant(1.0 / PI);
    let mut t = Table::new("norms", &["R", "norm", "iterations", "control_norm", "control_iterations"]);
    let mut norms = Vec::new();
    let mut controls = Vec::new();
    for &r in &boxes {
        let (n, it) = grid_norm(cfg, &sigma, &w, r, h)?;
        let (c, cit) = grid_norm(cfg, &control, &control, r, h)?;
        t.push(vec![fmt_num(r), fmt_num(n), it.to_string(), fmt_num(c), cit.to_string()]);
        rec.metric(&format!("norm_at_{r}"), n);
        rec.metric(&format!("control_norm_at_{r}"), c);
        norms.push(n);
        controls.push(c);
    }
    rec.table(t);
    let growth = norms.last().unwrap() / norms[0];
    rec.metric("growth_ratio", growth);
    rec.check(
        "norms_increasing",
        norms.windows(2).all(|x| x[1] > x[0]),
        format!("{norms:?}"),
    );
    rec.check("growth_ratio", growth >= 2.0, format!("{} >= 2", fmt_num(growth)));
    let last = *controls.last().unwrap();
    rec.check(
        "control_near_one",
        (last - 1.0).abs() < 0.02,
        format!("control norm {}", fmt_num(last)),
    );
    if controls.len() >= 2 {
        let prev = controls[controls.len() - 2];
        let change = (last / prev - 1.0).abs();
        rec.check("control_stable", change < 0.05, format!("relative change {}", fmt_num(change)));
    }
    Ok(())
}

fn profile(cfg: &mut ExperimentConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let phi = need(&cfg.symbol, "symbol")?.clone();
    let w = cfg.weight.get_or_insert(Weight::constant(1.0)).clone();
    let degree = *cfg.degree.get_or_insert(60);
    let radii = cfg.radii.get_or_insert(vec![0.0, 1.0, 2.0, 3.0, 4.0]).clone();
    let orientation = *cfg.orientation.get_or_insert(Orientation::OverU);
    let grid = build_grid(*cfg.grid.get_or_insert(DEFAULT_WL_GRID))?;
    let samples = match cfg.angles {
        Some(k) => circle_samples(&[1.0, 2.0, 3.0], k),
        None => default_samples(),
    };
    let p = exponent(cfg)?;
    let t = toeplitz_matrix(&cfg.params, &phi, degree)?;
    let prof = wl_profile(&t, p, &w, &radii, &samples, orientation, &grid)?;
    let mut tab = Table::new("profile", &["radius", "value", "argmax_re", "argmax_im"]);
    for ((r, v), a) in prof.radii.iter().zip(&prof.values).zip(&prof.argmax) {
        tab.push(vec![
            fmt_num(*r),
            fmt_num(*v),
            fmt_num(a.coords.first().copied().unwrap_or(0.0)),
            fmt_num(a.coords.get(1).copied().unwrap_or(0.0)),
        ]);
        rec.metric(&format!("profile_at_{r}"), *v);
    }
    rec.table(tab);
    rec.check("non_increasing", prof.is_non_increasing(1e-12), format!("{:?}", prof.values));
    if let (Some(a), Some(b)) = (prof.value_at(2.0), prof.value_at(4.0)) {
        rec.metric("decay_4_over_2", b / a);
        rec.check("decay", b / a <= 0.2, format!("profile(4)/profile(2) = {}", fmt_num(b / a)));
    }
    Ok(())
}

fn disk_setup(cfg: &mut ExperimentConfig) -> (ApexScan, DiskRule) {
    let scan = cfg.apex_scan.get_or_insert_with(ApexScan::default).clone();
    let rule = *cfg.disk_rule.get_or_insert_with(DiskRule::default);
    (scan, rule)
}

fn bergman_bp(cfg: &mut ExperimentConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let sigma = need(&cfg.disk_weight, "disk_weight")?.clone();
    let p = exponent(cfg)?;
    let (scan, rule) = disk_setup(cfg);
    let bp = bp_characteristic(&sigma, p, &scan, &rule)?;
    let cp = cp_characteristic(&sigma, p, &scan, &rule)?;
    rec.table(characteristic_table("characteristic", &[("b_p", &bp), ("c_p", &cp)]));
    rec.metric("b_p", bp.value);
    rec.metric("c_p", cp.value);
    rec.metric("b_p_refinement_gap", bp.refinement_gap);
    rec.check(
        "b_p_finite_and_stable",
        bp.is_finite() && bp.refinement_gap < 0.05,
        format!("{} (gap {})", fmt_num(bp.value), fmt_num(bp.refinement_gap)),
    );
    Ok(())
}

fn bergman_containment(cfg: &mut ExperimentConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let apexes = cfg.apexes.get_or_insert(vec![0.955, 0.97, 0.99]).clone();
    let samples = *cfg.samples.get_or_insert(10_000);
    let mut t = Table::new(
        "containment",
        &["apex_modulus", "tilde_apex_modulus", "samples", "violations", "max_constant"],
    );
    let mut ok = true;
    let mut worst = 0.0f64;
    for &m in &apexes {
        let r = containment_check(Complex64::new(m, 0.0), samples, cfg.seed)?;
        t.push(vec![
            fmt_num(m),
            fmt_num(r.tilde_apex[0]),
            r.samples.to_string(),
            r.violations.to_string(),
            fmt_num(r.max_constant),
        ]);
        ok &= r.violations == 0 && r.max_constant < 20.0;
        worst = worst.max(r.max_constant);
    }
    rec.table(t);
    rec.metric("max_constant", worst);
    rec.metric("chain_pivot", chain_pivot());
    rec.check("contained", ok, format!("largest constant {}", fmt_num(worst)));
    rec.check("chain_pivot", chain_pivot() < 20.0, fmt_num(chain_pivot()));
    Ok(())
}

fn bergman_hatlemma(cfg: &mut ExperimentConfig, rec: &mut Recorder) -> Result<(), CliError> {
    let gammas = cfg.gammas.get_or_insert(vec![-0.3, 0.0, 0.5, 1.0]).clone();
    let p = exponent(cfg)?;
    let (scan, rule) = disk_setup(cfg);
    let rows = hat_lemma_check(&gammas, p, &scan, &rule)?;
    let mut t = Table::new("hat_lemma", &HatLemmaRow::CSV_HEADER);
    let mut worst = 0.0f64;
    let mut stable = true;
    for r in &rows {
        t.push(r.csv_fields());
        worst = worst.max(r.ratio);
        stable &= r.sigma.is_finite()
            && r.hat.is_finite()
            && r.sigma.refinement_gap < 0.05
            && r.hat.refinement_gap < 0.05;
        rec.metric(&format!("ratio_at_{}", r.gamma), r.ratio);
    }
    rec.table(t);
    rec.metric("max_ratio", worst);
    rec.check("ratio_bounded", worst <= 50.0, format!("max ratio {}", fmt_num(worst)));
    rec.check("finite_and_stable", stable, "both characteristics finite with gap < 0.05");
    Ok(())
}
