//! JSON experiment configuration.
//!
//! Paths inside a config (mesh file, output directory) are resolved against
//! the directory holding the config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use emac_core::forms::FormKind;
use emac_core::mesh::Point;
use emac_core::problems::InflowSchedule;
use emac_core::solvers::{InitialData, LinearSettings, Method, NewtonSettings, SchemeConfig, TimeScheme};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    Convergence,
    LatticeVortex,
    Cylinder,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Convergence => "convergence",
            ExperimentId::LatticeVortex => "lattice-vortex",
            ExperimentId::Cylinder => "cylinder",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        [ExperimentId::Convergence, ExperimentId::LatticeVortex, ExperimentId::Cylinder]
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown experiment '{s}'")))
    }
}

/// Time step: a number, or `"h^q"` / `"H^q"` for a power of the fine or
/// coarse mesh size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeStep {
    Fixed(f64),
    Rule(String),
}

impl TimeStep {
    pub fn resolve(&self, h: f64, coarse_h: f64) -> Result<f64> {
        let dt = match self {
            TimeStep::Fixed(dt) => *dt,
            TimeStep::Rule(rule) => {
                let bad = || BenchError::Config(format!("time step rule '{rule}' is not of the form h^q or H^q"));
                let (base, power) = rule.split_once('^').ok_or_else(bad)?;
                let q: f64 = power.trim().parse().map_err(|_| bad())?;
                match base.trim() {
                    "h" => h.powf(q),
                    "H" => coarse_h.powf(q),
                    _ => return Err(bad()),
                }
            }
        };
        if dt > 0.0 && dt.is_finite() {
            Ok(dt)
        } else {
            Err(BenchError::Config(format!("time step {dt} is not positive")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub nu: f64,
    pub t_final: f64,
    pub dt: TimeStep,
    #[serde(default = "default_time_scheme")]
    pub time_scheme: String,
    #[serde(default = "default_initial")]
    pub initial: String,
    #[serde(default = "default_newton_tolerance")]
    pub newton_tolerance: f64,
    #[serde(default = "default_newton_iterations")]
    pub newton_max_iterations: usize,
    #[serde(default = "default_linear_tolerance")]
    pub linear_tolerance: f64,
}

fn default_time_scheme() -> String {
    "bdf2".into()
}
fn default_initial() -> String {
    "l2-projection".into()
}
fn default_newton_tolerance() -> f64 {
    NewtonSettings::default().tolerance
}
fn default_newton_iterations() -> usize {
    NewtonSettings::default().max_iterations
}
fn default_linear_tolerance() -> f64 {
    LinearSettings::default().tolerance
}

impl SchemeSpec {
    /// Core scheme settings for one run.
    pub fn scheme(&self, dt: f64, method: Method, form: FormKind) -> Result<SchemeConfig> {
        let mut cfg = SchemeConfig::new(self.nu, dt, self.t_final);
        cfg.time_scheme = match self.time_scheme.as_str() {
            "bdf1" => TimeScheme::Bdf1,
            "bdf2" => TimeScheme::Bdf2,
            other => return Err(BenchError::Config(format!("unknown time scheme '{other}'"))),
        };
        cfg.method = method;
        cfg.form = form;
        cfg.newton = NewtonSettings {
            tolerance: self.newton_tolerance,
            max_iterations: self.newton_max_iterations,
        };
        cfg.linear = LinearSettings {
            tolerance: self.linear_tolerance,
            ..LinearSettings::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn initial_data(&self) -> Result<InitialData> {
        match self.initial.as_str() {
            "l2-projection" => Ok(InitialData::L2Projection),
            "interpolation" => Ok(InitialData::Interpolation),
            other => Err(BenchError::Config(format!("unknown initial data '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    /// `(1/h, 1/H)` pairs of structured unit-square meshes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<[usize; 2]>,
    /// Coarse mesh file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Refinement factor from the coarse to the fine mesh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ScheduleSpec {
    Ramp { ramp: f64 },
    HalfSine { period: f64 },
}

impl From<&ScheduleSpec> for InflowSchedule {
    fn from(s: &ScheduleSpec) -> Self {
        match *s {
            ScheduleSpec::Ramp { ramp } => InflowSchedule::Ramp { ramp },
            ScheduleSpec::HalfSine { period } => InflowSchedule::HalfSine { period },
        }
    }
}

/// Peak values of the cylinder benchmark to compare against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderReference {
    pub drag_max: f64,
    pub lift_max: f64,
    pub pressure_difference_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderSpec {
    pub height: f64,
    pub peak_velocity: f64,
    pub schedule: ScheduleSpec,
    pub diameter: f64,
    pub mean_velocity: f64,
    pub front: Point,
    pub back: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<CylinderReference>,
}

/// Acceptance thresholds. Absent entries are not checked.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Observed-rate bands `[min, max]` per error column; `null` leaves a
    /// side open.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rates: BTreeMap<String, [Option<f64>; 2]>,
    /// Errors of one table row that must lie within `factor` of the values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_errors: Option<ReferenceErrors>,
    /// Bound on `|m(t) - m(0)|` for both momentum components and the
    /// angular momentum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conservation: Option<f64>,
    /// Bound on the magnitude of the initial momentum and angular momentum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_invariants: Option<f64>,
    /// Energy band the EMAC runs must stay in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emac_energy: Option<[f64; 2]>,
    /// Minimum number of non-EMAC forms that blow up, or end with an L2
    /// error `error_factor` times the EMAC error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unstable_forms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_factor: Option<f64>,
    /// Minimum ratio of the maximum energy drift on consecutive mesh pairs,
    /// per method.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub drift_ratio: BTreeMap<String, f64>,
    /// Relative tolerance on the cylinder peak values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_tolerance: Option<f64>,
    /// Minimum ratio of the lift standard deviation over the last 20% of the
    /// run to that over the first 10%.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oscillation_ratio: Option<f64>,
    /// Bound on the relative linear residual of every accepted step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceErrors {
    pub pair: [usize; 2],
    pub factor: f64,
    pub values: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub mesh: MeshSpec,
    pub scheme: SchemeSpec,
    #[serde(default = "default_forms")]
    pub forms: Vec<String>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    /// Energy growth factor at which a lattice-vortex run is stopped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blow_up_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cylinder: Option<CylinderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Directory the config was read from.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_forms() -> Vec<String> {
    vec!["emac".into()]
}
fn default_methods() -> Vec<String> {
    vec!["two-level-newton".into()]
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(path.to_path_buf(), e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn form_kinds(&self) -> Result<Vec<FormKind>> {
        self.forms.iter().map(|f| f.parse().map_err(BenchError::from)).collect()
    }

    pub fn method_list(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| m.parse().map_err(BenchError::from)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.form_kinds()?.is_empty() || self.method_list()?.is_empty() {
            return bad("at least one form and one method are required".into());
        }
        self.scheme.initial_data()?;
        self.scheme.scheme(1.0f64.min(self.scheme.t_final), Method::OneLevel, FormKind::Emac)?;
        for [fine, coarse] in &self.mesh.pairs {
            if *coarse == 0 || fine < coarse || fine % coarse != 0 {
                return bad(format!("mesh pair ({fine}, {coarse}) must have 1/h a multiple of 1/H"));
            }
        }
        match self.experiment {
            ExperimentId::Convergence | ExperimentId::LatticeVortex => {
                if self.mesh.pairs.is_empty() {
                    return bad(format!("{} needs mesh pairs", self.experiment));
                }
            }
            ExperimentId::Cylinder => {
                if self.mesh.file.is_none() {
                    return bad("cylinder needs a mesh file".into());
                }
                if self.mesh.refine == Some(0) {
                    return bad("refinement factor must be positive".into());
                }
                if self.cylinder.is_none() {
                    return bad("cylinder needs a cylinder section".into());
                }
            }
        }
        if let Some(f) = self.blow_up_factor {
            if !(f > 1.0) {
                return bad(format!("blow-up factor {f} must exceed 1"));
            }
        }
        Ok(())
    }
}
