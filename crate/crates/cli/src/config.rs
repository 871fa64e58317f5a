//! Experiment configuration files.
//!
//! A config is one flat JSON object whose `command` field selects the
//! experiment. Unknown keys are rejected. Every run writes a manifest that
//! wraps the fully resolved config, so a manifest can be replayed as is.

use std::path::{Path, PathBuf};

use osclab_core::phase::{catalog, Amplitude, AmplitudeKind, Domain, PhaseSpec, PolynomialPhase};
use osclab_core::quadrature::QuadratureOptions;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const TOOL: &str = "osclab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A phase by catalog name or inline terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseRef {
    Name(String),
    Inline(PhaseSpec),
}

impl PhaseRef {
    pub fn build(&self) -> Result<PolynomialPhase, CliError> {
        match self {
            PhaseRef::Name(name) => Ok(catalog(name)?),
            PhaseRef::Inline(spec) => Ok(spec.build()?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeConfig {
    #[serde(default = "default_kind")]
    pub kind: AmplitudeKind,
    /// Defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    pub radius: f64,
}

fn default_kind() -> AmplitudeKind {
    AmplitudeKind::SmoothBump
}

impl Default for AmplitudeConfig {
    /// Smooth bump of radius 0.5 at the origin.
    fn default() -> Self {
        Self {
            kind: default_kind(),
            center: None,
            radius: 0.5,
        }
    }
}

impl AmplitudeConfig {
    pub fn build(&self, n: usize) -> Result<Amplitude, CliError> {
        let center = self.center.clone().unwrap_or_else(|| vec![0.0; n]);
        if center.len() != n {
            return Err(CliError::Config(format!(
                "amplitude center has {} coordinates, phase has {n}",
                center.len()
            )));
        }
        Ok(Amplitude::new(self.kind, center, vec![self.radius; n])?)
    }
}

/// A cube `[-h, h]^n` or an explicit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DomainConfig {
    Cube(CubeDomain),
    Box(Domain),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeDomain {
    pub half_width: f64,
}

impl DomainConfig {
    pub fn build(&self, n: usize) -> Result<Domain, CliError> {
        let d = match self {
            DomainConfig::Cube(c) => Domain::cube(n, c.half_width)?,
            DomainConfig::Box(d) => Domain::new(d.lo.clone(), d.hi.clone())?,
        };
        if d.dimension() != n {
            return Err(CliError::Config(format!(
                "domain has dimension {}, phase has {n}",
                d.dimension()
            )));
        }
        Ok(d)
    }
}

/// Geometric grid `min..max` with `points` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl std::str::FromStr for LambdaGrid {
    type Err = String;

    /// `min:max:points`, e.g. `1e2:1e6:25`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected min:max:points, got `{s}`"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}"));
        Ok(Self {
            min: num(parts[0])?,
            max: num(parts[1])?,
            points: parts[2].trim().parse().map_err(|e| format!("`{}`: {e}", parts[2]))?,
        })
    }
}

impl LambdaGrid {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        Ok(osclab_core::numerics::geometric_grid(self.min, self.max, self.points)?)
    }
}

/// `points_per_axis` equally spaced values on `[-box, box]` per axis, or
/// explicit per-axis lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XiConfig {
    #[serde(rename = "box", default)]
    pub half_width: f64,
    #[serde(default = "one")]
    pub points_per_axis: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<Vec<f64>>>,
}

fn one() -> usize {
    1
}

impl Default for XiConfig {
    fn default() -> Self {
        Self {
            half_width: 0.0,
            points_per_axis: 1,
            axes: None,
        }
    }
}

impl XiConfig {
    pub fn build(&self, n: usize) -> Result<osclab_core::quadrature::XiGrid, CliError> {
        if let Some(axes) = &self.axes {
            if axes.len() != n {
                return Err(CliError::Config(format!("xi.axes has {} lists, need {n}", axes.len())));
            }
            return Ok(osclab_core::quadrature::XiGrid { axes: axes.clone() });
        }
        if self.points_per_axis == 0 || !(self.half_width >= 0.0) {
            return Err(CliError::Config("xi needs box >= 0 and points_per_axis >= 1".into()));
        }
        if self.points_per_axis == 1 {
            return Ok(osclab_core::quadrature::XiGrid::zero(n));
        }
        Ok(osclab_core::quadrature::XiGrid::cube(
            n,
            self.half_width,
            self.points_per_axis,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Factored when the phase separates, direct otherwise.
    Auto,
    Direct,
    Factored,
    /// Radial reduction of the four-dimensional counterexample; the single
    /// ξ axis lists `ε`.
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeExpectation {
    pub target: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub phase: PhaseRef,
    #[serde(default)]
    pub amplitude: AmplitudeConfig,
    pub lambda: LambdaGrid,
    #[serde(default)]
    pub xi: XiConfig,
    #[serde(default = "auto")]
    pub method: Method,
    #[serde(default)]
    pub quadrature: QuadratureOptions,
    /// Half-open λ index range of the fit; default upper half.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_slope: Option<SlopeExpectation>,
    /// Re-run the top three λ with `2p − 1` ξ points per axis and report
    /// the change of the sup.
    #[serde(default)]
    pub xi_refinement_check: bool,
    #[serde(default)]
    pub svg: bool,
    /// Output directory; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn auto() -> Method {
    Method::Auto
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeomCheckConfig {
    pub phase: PhaseRef,
    #[serde(default = "unit_cube")]
    pub domain: DomainConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_log_r")]
    pub log_r_range: (f64, f64),
    #[serde(default = "default_perturbation")]
    pub perturbation_radius: f64,
    /// Gap persistence draws; 0 skips the check.
    #[serde(default = "default_gap_trials")]
    pub gap_trials: usize,
    #[serde(default = "default_gap_samples")]
    pub gap_samples: usize,
    /// Output directory; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn unit_cube() -> DomainConfig {
    DomainConfig::Cube(CubeDomain { half_width: 1.0 })
}
fn small_cube() -> DomainConfig {
    DomainConfig::Cube(CubeDomain { half_width: 0.1 })
}
fn unit() -> f64 {
    1.0
}
fn default_trials() -> usize {
    10_000
}
fn default_seed() -> u64 {
    1
}
fn default_log_r() -> (f64, f64) {
    (-6.0, 2.0)
}
fn default_perturbation() -> f64 {
    0.1
}
fn default_gap_trials() -> usize {
    100
}
fn default_gap_samples() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NondegenConfig {
    pub phase: PhaseRef,
    #[serde(default = "small_cube")]
    pub domain: DomainConfig,
    #[serde(default = "unit")]
    pub m: f64,
    #[serde(default = "unit")]
    pub r: f64,
    #[serde(default = "five")]
    pub points_per_axis: usize,
    #[serde(default = "five")]
    pub y_points_per_axis: usize,
    #[serde(default = "default_nondegen_seed")]
    pub seed: u64,
    /// Expected verdict; the run fails when the checker disagrees.
    #[serde(default = "yes")]
    pub expect_holds: bool,
    /// Output directory; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn five() -> usize {
    5
}
fn default_nondegen_seed() -> u64 {
    7
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankScanConfig {
    pub n: usize,
    #[serde(default = "fifty")]
    pub cubics: usize,
    #[serde(default = "two_hundred")]
    pub points: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output directory; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn fifty() -> usize {
    50
}
fn two_hundred() -> usize {
    200
}
fn default_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCheckConfig {
    pub phase: PhaseRef,
    #[serde(default)]
    pub amplitude: AmplitudeConfig,
    pub lambda: LambdaGrid,
    #[serde(default)]
    pub xi: XiConfig,
    /// Defaults to the minimum of `dim V_{M,x}` over a lattice of the
    /// amplitude support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Hessian threshold used when `k` is inferred.
    #[serde(default = "unit")]
    pub m: f64,
    /// Defaults to `⌈(n − k)/2 + k/3⌉ + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_exponent: Option<u32>,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_grid")]
    pub grid_points_per_axis: usize,
    /// The λ grid is extended geometrically up to `extension × max`.
    #[serde(default = "default_extension")]
    pub extension: f64,
    /// Largest relative change of the constant under extension.
    #[serde(default = "default_stability")]
    pub stability_tol: f64,
    #[serde(default)]
    pub quadrature: QuadratureOptions,
    /// Output directory; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_r_max() -> f64 {
    1.0
}
fn default_grid() -> usize {
    400
}
fn default_extension() -> f64 {
    4.0
}
fn default_stability() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Experiment {
    Sweep(SweepConfig),
    GeomCheck(GeomCheckConfig),
    Nondegen(NondegenConfig),
    RankScan(RankScanConfig),
    BoundCheck(BoundCheckConfig),
}

impl Experiment {
    pub fn out(&self) -> Option<&Path> {
        match self {
            Experiment::Sweep(c) => c.out.as_deref(),
            Experiment::GeomCheck(c) => c.out.as_deref(),
            Experiment::Nondegen(c) => c.out.as_deref(),
            Experiment::RankScan(c) => c.out.as_deref(),
            Experiment::BoundCheck(c) => c.out.as_deref(),
        }
    }

    pub fn set_out(&mut self, out: Option<PathBuf>) {
        match self {
            Experiment::Sweep(c) => c.out = out,
            Experiment::GeomCheck(c) => c.out = out,
            Experiment::Nondegen(c) => c.out = out,
            Experiment::RankScan(c) => c.out = out,
            Experiment::BoundCheck(c) => c.out = out,
        }
    }

    pub fn command(&self) -> &'static str {
        match self {
            Experiment::Sweep(_) => "sweep",
            Experiment::GeomCheck(_) => "geom-check",
            Experiment::Nondegen(_) => "nondegen",
            Experiment::RankScan(_) => "rank-scan",
            Experiment::BoundCheck(_) => "bound-check",
        }
    }
}

/// Written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: Experiment,
}

impl Manifest {
    pub fn new(config: Experiment) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            config,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn load_config(path: &Path) -> Result<Experiment, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    let m: Manifest =
        serde_json::from_str(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if m.tool != TOOL {
        return Err(CliError::Config(format!("manifest was written by `{}`", m.tool)));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_grid_parses() {
        let g: LambdaGrid = "1e2:1e6:25".parse().unwrap();
        assert_eq!((g.min, g.max, g.points), (100.0, 1e6, 25));
        assert!("1e2:1e6".parse::<LambdaGrid>().is_err());
        assert!("a:1:2".parse::<LambdaGrid>().is_err());
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let text = r#"{"command": "sweep", "phase": "cubic1d", "amplitude": {"radius": 0.5},
                       "lambda": {"min": 100, "max": 1e4, "points": 8}}"#;
        let cfg: Experiment = serde_json::from_str(text).unwrap();
        let again: Experiment = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        let bad = text.replace("\"points\": 8", "\"points\": 8, \"pionts\": 3");
        assert!(serde_json::from_str::<Experiment>(&bad).is_err());
        let bad = text.replace("\"phase\"", "\"colour\": 1, \"phase\"");
        assert!(serde_json::from_str::<Experiment>(&bad).is_err());
    }

    #[test]
    fn inline_phase_and_box_domain() {
        let text = r#"{"command": "nondegen", "phase": {"name": "p", "n": 2, "terms": [[[3, 0], 1.0], [[0, 2], 1.0]]},
                       "domain": {"lo": [-0.1, -0.1], "hi": [0.1, 0.1]}, "m": 1, "r": 1}"#;
        let cfg: Experiment = serde_json::from_str(text).unwrap();
        let Experiment::Nondegen(n) = cfg else { panic!() };
        assert_eq!(n.phase.build().unwrap(), catalog("mixed2d").unwrap());
        assert_eq!(n.domain.build(2).unwrap(), Domain::cube(2, 0.1).unwrap());
    }
}
