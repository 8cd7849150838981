use crate::CliError;
use fwl_core::bergman::{ApexScan, DiskRule, DiskWeight};
use fwl_core::fock::{FockParams, SymbolFn};
use fwl_core::localization::{Orientation, VerdictConfig};
use fwl_core::numerics::GridSpec;
use fwl_core::weights::{ScanSpec, Weight};
use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    WeightCheck,
    ProjectionNorm,
    ToeplitzNorm,
    BerezinScan,
    Compactness,
    Counterexample,
    WlProfile,
    BergmanBp,
    BergmanContainment,
    BergmanHatlemma,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::WeightCheck,
        Scenario::ProjectionNorm,
        Scenario::ToeplitzNorm,
        Scenario::BerezinScan,
        Scenario::Compactness,
        Scenario::Counterexample,
        Scenario::WlProfile,
        Scenario::BergmanBp,
        Scenario::BergmanContainment,
        Scenario::BergmanHatlemma,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::WeightCheck => "weight-check",
            Scenario::ProjectionNorm => "projection-norm",
            Scenario::ToeplitzNorm => "toeplitz-norm",
            Scenario::BerezinScan => "berezin-scan",
            Scenario::Compactness => "compactness",
            Scenario::Counterexample => "counterexample",
            Scenario::WlProfile => "wl-profile",
            Scenario::BergmanBp => "bergman-bp",
            Scenario::BergmanContainment => "bergman-containment",
            Scenario::BergmanHatlemma => "bergman-hatlemma",
        }
    }

    pub fn required_keys(&self) -> &'static [&'static str] {
        match self {
            Scenario::WeightCheck => &["weight"],
            Scenario::ProjectionNorm => &["weight", "sigma"],
            Scenario::ToeplitzNorm | Scenario::BerezinScan | Scenario::Compactness | Scenario::WlProfile => &["symbol"],
            Scenario::BergmanBp => &["disk_weight"],
            Scenario::Counterexample | Scenario::BergmanContainment | Scenario::BergmanHatlemma => &[],
        }
    }

    /// Result the scenario probes.
    pub fn statement(&self) -> &'static str {
        match self {
            Scenario::WeightCheck => "restricted A_p characteristic and r-doubling constant of one weight",
            Scenario::ProjectionNorm => "two-weight bound for P_alpha: A_{p,r} characteristic vs certified norm bracket",
            Scenario::ToeplitzNorm => "T_phi bounded on L^p_{alpha,w} iff the phi-adapted A_{p,r} characteristic is finite",
            Scenario::BerezinScan => "Berezin transform of T_phi on circles |z| = rho",
            Scenario::Compactness => "T compact iff its Berezin transform vanishes at infinity",
            Scenario::Counterexample => "Gaussian pair with finite joint characteristic but unbounded P_alpha",
            Scenario::WlProfile => "weak localization profile of a Toeplitz truncation",
            Scenario::BergmanBp => "Bekolle-Bonami B_p and C_p characteristics on the disk",
            Scenario::BergmanContainment => "D(z,1) inside the enlarged tent T_{tilde a} for z in T_a",
            Scenario::BergmanHatlemma => "averaged weight sigma_hat stays in B_p with comparable characteristic",
        }
    }
}

fn two() -> f64 {
    2.0
}

fn one() -> f64 {
    1.0
}

fn seed() -> u64 {
    42
}

/// One experiment. Scenario-specific keys are optional; absent keys take
/// the scenario defaults, which are written back into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub params: FockParams,
    /// Quadrature grid (cube integrals, Berezin and profile integrals).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Grid carrying the discretized operator for norm point estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<Weight>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Weight>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<SymbolFn>,
    #[serde(default = "two")]
    pub p: f64,
    /// Cube side.
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<usize>,
    /// Truncation degree of monomial-basis matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    /// Box radii for growth experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<Orientation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<VerdictConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disk_weight: Option<DiskWeight>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apex_scan: Option<ApexScan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disk_rule: Option<DiskRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    /// Apex moduli on the positive real axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apexes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Output directory; the `--out` flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "seed")]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario) -> Self {
        serde_json::from_value(serde_json::json!({ "scenario": scenario })).expect("minimal config")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| CliError::Schema {
            pointer: json_pointer(e.path()),
            message: e.inner().to_string(),
        })?;
        cfg.check_required()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn check_required(&self) -> Result<(), CliError> {
        let v = serde_json::to_value(self).expect("config serializes");
        for key in self.scenario.required_keys() {
            if v.get(key).is_none() {
                return Err(CliError::Schema {
                    pointer: format!("/{key}"),
                    message: format!("scenario {} requires `{key}`", self.scenario.name()),
                });
            }
        }
        if !(self.p.is_finite() && self.p >= 1.0) {
            return Err(CliError::Schema {
                pointer: "/p".into(),
                message: format!("p must be a finite number >= 1 (got {})", self.p),
            });
        }
        Ok(())
    }
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}
