//! Run configuration in TOML.
//!
//! ```toml
//! seed = 7
//!
//! [grid]
//! nx = 64
//! ny = 64
//! topology_x = "periodic"
//! topology_y = "periodic"
//!
//! [gas]
//! gamma = 1.4
//! ```
//!
//! `grid.nx`, `grid.ny` and `gas.gamma` are mandatory; everything else has a
//! default. Unknown keys are rejected. [`RunConfig::to_toml`] writes every
//! field explicitly and re-parses to an identical config.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrices::FreeParams;
use crate::mms::ManufacturedSolution;
use crate::sbp::Order;
use crate::solver::SchemeConfig;
use crate::state::{to_skew, Field, GasModel, Grid2D, PhysicalState, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub x_min: f64,
    #[serde(default = "one")]
    pub x_max: f64,
    #[serde(default)]
    pub y_min: f64,
    #[serde(default = "one")]
    pub y_max: f64,
    #[serde(default = "bounded")]
    pub topology_x: Topology,
    #[serde(default = "bounded")]
    pub topology_y: Topology,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSection {
    pub gamma: f64,
    #[serde(default = "one")]
    pub alpha2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default = "four")]
    pub order: usize,
    /// Wall penalty strength on bounded edges.
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "half")]
    pub cfl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "one")]
    pub t_end: f64,
    #[serde(default = "one_usize")]
    pub sample_stride: usize,
    #[serde(default)]
    pub free_params: FreeParams,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            order: 4,
            sigma: 1.0,
            cfl: 0.5,
            dt: None,
            t_end: 1.0,
            sample_stride: 1,
            free_params: FreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    Constant {
        #[serde(default = "one")]
        rho: f64,
        #[serde(default)]
        u: f64,
        #[serde(default)]
        v: f64,
        #[serde(default = "one")]
        p: f64,
    },
    /// Gaussian density bump `rho = 1 + amplitude exp(-r^2 / width^2)` on a
    /// uniform flow. With `isentropic` the pressure follows `p rho^gamma`.
    DensityBump {
        #[serde(default = "half")]
        amplitude: f64,
        #[serde(default = "tenth")]
        width: f64,
        #[serde(default = "half")]
        x0: f64,
        #[serde(default = "half")]
        y0: f64,
        #[serde(default)]
        u: f64,
        #[serde(default)]
        v: f64,
        #[serde(default = "one")]
        p: f64,
        #[serde(default = "yes")]
        isentropic: bool,
    },
    /// The standard manufactured solution; also switches on its source term
    /// and boundary data.
    Manufactured {},
    /// Snapshot CSV; relative paths resolve against the config file.
    File { path: PathBuf },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Constant {
            rho: 1.0,
            u: 0.0,
            v: 0.0,
            p: 1.0,
        }
    }
}

impl InitialCondition {
    pub fn build(&self, grid: &Grid2D, gas: &GasModel, base_dir: &Path) -> Result<Field> {
        match self {
            InitialCondition::Constant { rho, u, v, p } => {
                Ok(Field::constant(grid, to_skew(&PhysicalState::new(*rho, *u, *v, *p))?))
            }
            InitialCondition::DensityBump {
                amplitude,
                width,
                x0,
                y0,
                u,
                v,
                p,
                isentropic,
            } => {
                let mut out = Field::zeros(grid.nx, grid.ny);
                for i in 0..grid.nx {
                    for j in 0..grid.ny {
                        let r2 = (grid.x(i) - x0).powi(2) + (grid.y(j) - y0).powi(2);
                        let rho = 1.0 + amplitude * (-r2 / (width * width)).exp();
                        let pr = if *isentropic { p * rho.powf(gas.gamma) } else { *p };
                        out.set(i, j, to_skew(&PhysicalState::new(rho, *u, *v, pr))?);
                    }
                }
                Ok(out)
            }
            InitialCondition::Manufactured {} => Ok(ManufacturedSolution::standard(*gas).exact_field(grid, 0.0)),
            InitialCondition::File { path } => {
                let path = if path.is_relative() { base_dir.join(path) } else { path.clone() };
                let file = fs::File::open(&path)?;
                Field::read_csv(grid, BufReader::new(file))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for any randomised suite driven by this config.
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSection,
    pub gas: GasSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub output: OutputSection,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn tenth() -> f64 {
    0.1
}
fn four() -> usize {
    4
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn bounded() -> Topology {
    Topology::Bounded
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Parses and validates. Errors carry the 1-based line of the offending
    /// key where it can be located.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            Error::config(line, e.message().trim().to_string())
        })?;
        cfg.validate().map_err(|(section, key, msg)| Error::config(locate(text, section, key), msg))?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Every field written out, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    fn validate(&self) -> std::result::Result<(), (&'static str, &'static str, String)> {
        let g = &self.grid;
        Grid2D::new((g.nx, g.ny), (g.x_min, g.x_max), (g.y_min, g.y_max), (g.topology_x, g.topology_y))
            .map_err(|e| ("grid", "nx", e.to_string()))?;
        GasModel::new(self.gas.gamma, 1.0).map_err(|e| ("gas", "gamma", e.to_string()))?;
        GasModel::new(self.gas.gamma, self.gas.alpha2).map_err(|e| ("gas", "alpha2", e.to_string()))?;
        let order = Order::try_from(self.scheme.order).map_err(|e| ("scheme", "order", e.to_string()))?;
        let min = order.min_nodes();
        if g.nx < min || g.ny < min {
            return Err(("grid", "nx", format!("order {} needs at least {min} nodes per direction", self.scheme.order)));
        }
        self.scheme_config()
            .map_err(|e| ("scheme", "", e.to_string()))?
            .validate()
            .map_err(|e| ("scheme", "", e.to_string()))?;
        if let Some(t) = self.output.snapshot_times.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(("output", "snapshot_times", format!("snapshot time {t} must be nonnegative")));
        }
        if let InitialCondition::DensityBump { width, amplitude, .. } = self.initial {
            if !(width > 0.0) {
                return Err(("initial", "width", format!("width must be positive, got {width}")));
            }
            if !(amplitude > -1.0) {
                return Err(("initial", "amplitude", format!("amplitude must exceed -1, got {amplitude}")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid2D> {
        let g = &self.grid;
        Grid2D::new((g.nx, g.ny), (g.x_min, g.x_max), (g.y_min, g.y_max), (g.topology_x, g.topology_y))
    }

    pub fn gas(&self) -> Result<GasModel> {
        GasModel::new(self.gas.gamma, self.gas.alpha2)
    }

    pub fn order(&self) -> Result<Order> {
        Order::try_from(self.scheme.order)
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig> {
        let mut cfg = SchemeConfig::new(self.grid()?, self.gas()?);
        cfg.order = self.order()?;
        cfg.wall_sigma = self.scheme.sigma;
        cfg.free_params = self.scheme.free_params;
        cfg.dt = self.scheme.dt;
        cfg.cfl = self.scheme.cfl;
        cfg.t_end = self.scheme.t_end;
        cfg.sample_stride = self.scheme.sample_stride;
        cfg.snapshot_times = self.output.snapshot_times.clone();
        Ok(cfg)
    }

    /// Whether the manufactured source term and boundary data are active.
    pub fn uses_source(&self) -> bool {
        matches!(self.initial, InitialCondition::Manufactured {})
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]`, or of the section header when
/// `key` is empty or absent.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = "";
    let mut header = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
            if current == section {
                header = Some(n + 1);
            }
            continue;
        }
        if current == section && !key.is_empty() {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(n + 1);
                }
            }
        }
    }
    header
}
