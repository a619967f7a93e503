//! Primitive and square-root variables, gas model, grid and field storage.
//!
//! The solver evolves `Phi = (sqrt(rho), sqrt(rho) u, sqrt(rho) v, sqrt(p))`
//! directly. Density and pressure are recovered by squaring, so positivity is
//! never enforced; only `phi1 -> 0` (vacuum) is an error because the matrix
//! entries contain `phi4 / phi1`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|phi1|` below this is treated as vacuum.
pub const VACUUM_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalState {
    pub rho: f64,
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

impl PhysicalState {
    pub fn new(rho: f64, u: f64, v: f64, p: f64) -> Self {
        Self { rho, u, v, p }
    }
}

/// The four square-root variables at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SkewState {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub phi4: f64,
}

impl SkewState {
    pub const fn new(phi1: f64, phi2: f64, phi3: f64, phi4: f64) -> Self {
        Self {
            phi1,
            phi2,
            phi3,
            phi4,
        }
    }

    pub const fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub const fn to_array(self) -> [f64; 4] {
        [self.phi1, self.phi2, self.phi3, self.phi4]
    }

    pub fn check_nonvacuum(&self) -> Result<()> {
        if self.phi1.abs() < VACUUM_TOL || !self.phi1.is_finite() {
            return Err(Error::Vacuum {
                phi1: self.phi1,
                node: None,
            });
        }
        Ok(())
    }

    /// x-velocity `phi2 / phi1`.
    #[inline]
    pub fn u(&self) -> f64 {
        self.phi2 / self.phi1
    }

    /// y-velocity `phi3 / phi1`.
    #[inline]
    pub fn v(&self) -> f64 {
        self.phi3 / self.phi1
    }

    /// `phi4 / phi1`, i.e. `sqrt(p / rho)` up to sign.
    #[inline]
    pub fn ratio(&self) -> f64 {
        self.phi4 / self.phi1
    }

    pub fn norm_sq(&self) -> f64 {
        self.to_array().iter().map(|x| x * x).sum()
    }
}

/// Maps primitive variables onto the square-root variables.
pub fn to_skew(s: &PhysicalState) -> Result<SkewState> {
    if !(s.rho > 0.0) {
        return Err(Error::Domain {
            quantity: "density",
            value: s.rho,
        });
    }
    if !(s.p > 0.0) {
        return Err(Error::Domain {
            quantity: "pressure",
            value: s.p,
        });
    }
    let r = s.rho.sqrt();
    Ok(SkewState::new(r, r * s.u, r * s.v, s.p.sqrt()))
}

pub fn from_skew(phi: &SkewState) -> Result<PhysicalState> {
    phi.check_nonvacuum()?;
    Ok(PhysicalState {
        rho: phi.phi1 * phi.phi1,
        u: phi.u(),
        v: phi.v(),
        p: phi.phi4 * phi.phi4,
    })
}

/// `c = sqrt(gamma p / rho) = sqrt(gamma) |phi4 / phi1|`.
pub fn sound_speed(phi: &SkewState, gas: &GasModel) -> Result<f64> {
    phi.check_nonvacuum()?;
    Ok(gas.gamma.sqrt() * phi.ratio().abs())
}

/// Ratio of specific heats and the free norm weight `alpha^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasModel {
    pub gamma: f64,
    pub alpha2: f64,
}

impl GasModel {
    /// `gamma` must lie in (1, 2); outside that interval either the norm
    /// degenerates or the boundary eigenvalue constants lose their meaning.
    pub fn new(gamma: f64, alpha2: f64) -> Result<Self> {
        if !(gamma > 1.0 && gamma < 2.0) {
            return Err(Error::Model(format!(
                "gamma must satisfy 1 < gamma < 2, got {gamma}"
            )));
        }
        if !(alpha2 > 0.0) || !alpha2.is_finite() {
            return Err(Error::Model(format!("alpha2 must be positive, got {alpha2}")));
        }
        Ok(Self { gamma, alpha2 })
    }

    /// Air with `alpha^2 = 1`.
    pub fn air() -> Self {
        Self {
            gamma: 1.4,
            alpha2: 1.0,
        }
    }

    /// `beta^2 = theta^2 = (gamma - 1) / 2`.
    #[inline]
    pub fn beta2(&self) -> f64 {
        0.5 * (self.gamma - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Bounded,
    Periodic,
}

/// Uniform tensor-product grid on a rectangle.
///
/// Bounded directions include both end points (`h = L / (n - 1)`); periodic
/// directions omit the duplicated end point (`h = L / n`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub topology_x: Topology,
    pub topology_y: Topology,
}

impl Grid2D {
    pub fn new(
        (nx, ny): (usize, usize),
        (x_min, x_max): (f64, f64),
        (y_min, y_max): (f64, f64),
        (topology_x, topology_y): (Topology, Topology),
    ) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::config(
                None,
                format!("grid needs at least 3 nodes per direction, got {nx}x{ny}"),
            ));
        }
        if !(x_max > x_min) || !(y_max > y_min) {
            return Err(Error::config(None, "grid extents must be increasing"));
        }
        Ok(Self {
            nx,
            ny,
            x_min,
            x_max,
            y_min,
            y_max,
            topology_x,
            topology_y,
        })
    }

    /// Unit square with the same topology in both directions.
    pub fn unit_square(nx: usize, ny: usize, topology: Topology) -> Result<Self> {
        Self::new((nx, ny), (0.0, 1.0), (0.0, 1.0), (topology, topology))
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hx(&self) -> f64 {
        spacing(self.x_max - self.x_min, self.nx, self.topology_x)
    }

    pub fn hy(&self) -> f64 {
        spacing(self.y_max - self.y_min, self.ny, self.topology_y)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.hy()
    }

    /// x-major storage: node `(i, j)` lives at `i * ny + j`.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }
}

fn spacing(length: f64, n: usize, topology: Topology) -> f64 {
    match topology {
        Topology::Bounded => length / (n - 1) as f64,
        Topology::Periodic => length / n as f64,
    }
}

/// One `SkewState` per node, stored as four component arrays in x-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    nx: usize,
    ny: usize,
    comps: [Vec<f64>; 4],
}

impl Field {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        let n = nx * ny;
        Self {
            nx,
            ny,
            comps: std::array::from_fn(|_| vec![0.0; n]),
        }
    }

    pub fn from_components(nx: usize, ny: usize, comps: [Vec<f64>; 4]) -> Result<Self> {
        for c in &comps {
            if c.len() != nx * ny {
                return Err(Error::Shape {
                    expected: (nx, ny),
                    found: (c.len(), 1),
                });
            }
        }
        Ok(Self { nx, ny, comps })
    }

    pub fn constant(grid: &Grid2D, s: SkewState) -> Self {
        Self::from_fn(grid, |_, _| s)
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> SkewState) -> Self {
        let mut field = Self::zeros(grid.nx, grid.ny);
        for i in 0..grid.nx {
            let x = grid.x(i);
            for j in 0..grid.ny {
                field.set(i, j, f(x, grid.y(j)));
            }
        }
        field
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::Shape {
                expected: shape,
                found: self.shape(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> SkewState {
        self.node(i * self.ny + j)
    }

    #[inline]
    pub fn node(&self, k: usize) -> SkewState {
        SkewState::new(
            self.comps[0][k],
            self.comps[1][k],
            self.comps[2][k],
            self.comps[3][k],
        )
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, s: SkewState) {
        self.set_node(i * self.ny + j, s);
    }

    #[inline]
    pub fn set_node(&mut self, k: usize, s: SkewState) {
        for (c, v) in s.to_array().into_iter().enumerate() {
            self.comps[c][k] = v;
        }
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    pub fn comps(&self) -> &[Vec<f64>; 4] {
        &self.comps
    }

    pub fn comps_mut(&mut self) -> &mut [Vec<f64>; 4] {
        &mut self.comps
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }

    /// Smallest `|phi_c|` over the grid together with its node index.
    pub fn min_abs(&self, c: usize) -> (f64, usize) {
        self.comps[c]
            .iter()
            .enumerate()
            .fold((f64::INFINITY, 0), |(m, k), (idx, v)| {
                if v.abs() < m {
                    (v.abs(), idx)
                } else {
                    (m, k)
                }
            })
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.comps.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Field) {
        for (dst, src) in self.comps.iter_mut().zip(&other.comps) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += a * s);
        }
    }

    /// `base + a * dir` as a new field.
    pub fn offset(base: &Field, a: f64, dir: &Field) -> Field {
        let mut out = base.clone();
        out.axpy(a, dir);
        out
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Snapshot CSV: header `x,y,phi1,phi2,phi3,phi4`, one row per node in
    /// storage order. Values use Rust's shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, grid: &Grid2D, mut w: W) -> Result<()> {
        self.check_shape((grid.nx, grid.ny))?;
        writeln!(w, "x,y,phi1,phi2,phi3,phi4")?;
        let mut line = String::new();
        for i in 0..self.nx {
            for j in 0..self.ny {
                let s = self.get(i, j);
                line.clear();
                let _ = write!(
                    line,
                    "{:?},{:?},{:?},{:?},{:?},{:?}",
                    grid.x(i),
                    grid.y(j),
                    s.phi1,
                    s.phi2,
                    s.phi3,
                    s.phi4
                );
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }

    /// Reads a snapshot written by [`Field::write_csv`] onto `grid`.
    pub fn read_csv<R: BufRead>(grid: &Grid2D, r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty snapshot file".into()))??;
        if header.trim() != "x,y,phi1,phi2,phi3,phi4" {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let mut field = Field::zeros(grid.nx, grid.ny);
        let mut k = 0;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if k >= field.len() {
                return Err(Error::Parse(format!(
                    "more than {} data rows",
                    field.len()
                )));
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 2)))?;
            if vals.len() != 6 {
                return Err(Error::Parse(format!(
                    "row {}: expected 6 columns, got {}",
                    lineno + 2,
                    vals.len()
                )));
            }
            field.set_node(k, SkewState::new(vals[2], vals[3], vals[4], vals[5]));
            k += 1;
        }
        if k != field.len() {
            return Err(Error::Parse(format!(
                "expected {} data rows, got {k}",
                field.len()
            )));
        }
        Ok(field)
    }
}
