//! Persisted run configurations. A config holds every resolved parameter of
//! a run, including embedded geometry, so rerunning it needs no other input.

use logcap::geometry::{GeometryFile, LogPolarPoint};
use logcap::hdp::BoundaryData;
use logcap::mc::McOptions;
use logcap::operator::FieldSpec;
use logcap::wiener::FamilyParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(flatten)]
    pub command: CommandConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum CommandConfig {
    Capacity(CapacityConfig),
    Wiener(WienerConfig),
    Solve(SolveConfig),
    Simulate(SimulateConfig),
    Family(FamilyConfig),
}

impl CommandConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CommandConfig::Capacity(_) => "capacity",
            CommandConfig::Wiener(_) => "wiener",
            CommandConfig::Solve(_) => "solve",
            CommandConfig::Simulate(_) => "simulate",
            CommandConfig::Family(_) => "family",
        }
    }
}

/// A geometry given inline or by a built-in family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Geometry(GeometryFile),
    Family { name: String, params: FamilyParams },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    /// The exact Green function of the Laplacian.
    Laplace,
    /// The finite-element Green function of `field`.
    Operator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityConfig {
    pub source: Source,
    /// Route names; two or more also report the relative spread.
    pub routes: Vec<String>,
    pub kernel: KernelChoice,
    pub field: FieldSpec,
    pub panels_per_unit: f64,
    pub n_theta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerConfig {
    pub source: Source,
    pub a: f64,
    pub n_min: i32,
    pub n_max: i32,
    pub route: String,
    pub kernel: KernelChoice,
    pub field: FieldSpec,
    pub n_theta: usize,
    pub classical: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub source: Source,
    /// `None` means `f = 0` on the set and `f_bar = 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<BoundaryData>,
    pub truncations: Vec<f64>,
    pub probes: Vec<LogPolarPoint>,
    pub field: FieldSpec,
    pub n_theta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub source: Source,
    pub start: LogPolarPoint,
    pub n_paths: u64,
    pub mc: McOptions,
    /// Shell range for the comparison with potential theory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<(i32, i32)>,
    /// Number of sample paths to dump.
    #[serde(default)]
    pub dump_paths: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub name: String,
    pub params: FamilyParams,
}
