//! Semi-discrete split-form scheme, RK4 time stepping and energy diagnostics.
//!
//! `Phi_t = -[D_x(A1 Phi) + A2 D_x Phi + D_y(B1 Phi) + B2 D_y Phi] + SAT + S`
//!
//! Multiplying by `2 Phi^T P Ptilde` and applying summation by parts leaves
//! only the boundary quadrature of `Phi^T (n_x Atilde + n_y Btilde) Phi`, for
//! any field. [`Scheme::energy_rate_residual`] measures exactly that.

use std::io::Write;

use crate::boundary::{normal_velocity, wall_sat_penalty, UnitNormal};
use crate::error::{Error, Result};
use crate::matrices::{
    atilde_unchecked, btilde_unchecked, norm_matrix, split_unchecked, split_with_unchecked, FreeParams,
    SplitMatrices,
};
use crate::par::{self, Execution};
use crate::sbp::{Order, SbpOperator1D, TensorApplicator};
use crate::state::{Field, GasModel, Grid2D, SkewState, Topology, VACUUM_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub grid: Grid2D,
    pub gas: GasModel,
    pub order: Order,
    /// Wall penalty strength on bounded edges; 0 disables it.
    pub wall_sigma: f64,
    pub free_params: FreeParams,
    /// Fixed step; `None` picks the CFL-limited step every step.
    pub dt: Option<f64>,
    pub cfl: f64,
    pub t_end: f64,
    /// Record an energy sample every this many steps (the final state is
    /// always sampled).
    pub sample_stride: usize,
    pub snapshot_times: Vec<f64>,
}

impl SchemeConfig {
    pub fn new(grid: Grid2D, gas: GasModel) -> Self {
        Self {
            grid,
            gas,
            order: Order::Fourth,
            wall_sigma: 1.0,
            free_params: FreeParams::default(),
            dt: None,
            cfl: 0.5,
            t_end: 1.0,
            sample_stride: 1,
            snapshot_times: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::config(None, format!("dt must be positive, got {dt}")));
            }
        }
        if !(self.cfl > 0.0) || !self.cfl.is_finite() {
            return Err(Error::config(None, format!("cfl must be positive, got {}", self.cfl)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::config(None, format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        if !(self.wall_sigma >= 0.0) {
            return Err(Error::config(None, format!("sigma must be nonnegative, got {}", self.wall_sigma)));
        }
        if self.sample_stride == 0 {
            return Err(Error::config(None, "sample_stride must be at least 1"));
        }
        Ok(())
    }
}

/// Additive source term and, optionally, boundary data for manufactured
/// solutions.
pub trait Forcing: Sync {
    fn source(&self, x: f64, y: f64, t: f64) -> [f64; 4];

    /// Exact state on the boundary. When present, bounded edges are
    /// penalised towards it instead of using the wall penalty.
    fn boundary_state(&self, _x: f64, _y: f64, _t: f64) -> Option<SkewState> {
        None
    }
}

/// One row of the energy history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    pub t: f64,
    /// `||Phi||^2_{P Ptilde}`.
    pub energy: f64,
    /// Boundary quadrature of `Phi^T (n_x Atilde + n_y Btilde) Phi`.
    pub boundary_flux: f64,
    /// `|dE/dt + boundary_flux|` for the unpenalised semi-discrete operator.
    pub rate_residual: f64,
    /// Boundary quadrature of `(gamma - 1) u_n p`.
    pub pressure_work: f64,
    pub min_phi1: f64,
    pub min_phi4: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunRecord {
    pub samples: Vec<EnergySample>,
    pub snapshots: Vec<(f64, Field)>,
    pub steps: usize,
    pub final_field: Option<Field>,
}

impl RunRecord {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,energy,boundary_flux,rate_residual,pressure_work,min_phi1,min_phi4")?;
        for s in &self.samples {
            writeln!(
                w,
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                s.t, s.energy, s.boundary_flux, s.rate_residual, s.pressure_work, s.min_phi1, s.min_phi4
            )?;
        }
        Ok(())
    }
}

/// The four edges of the rectangle with their outward normals.
#[derive(Debug, Clone, Copy)]
enum Edge {
    West,
    East,
    South,
    North,
}

impl Edge {
    fn normal(self) -> UnitNormal {
        match self {
            Edge::West => UnitNormal::WEST,
            Edge::East => UnitNormal::EAST,
            Edge::South => UnitNormal::SOUTH,
            Edge::North => UnitNormal::NORTH,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scheme {
    cfg: SchemeConfig,
    ox: SbpOperator1D,
    oy: SbpOperator1D,
    exec: Execution,
}

impl Scheme {
    pub fn new(cfg: SchemeConfig) -> Result<Self> {
        cfg.validate()?;
        let ox = SbpOperator1D::for_grid_x(&cfg.grid, cfg.order)?;
        let oy = SbpOperator1D::for_grid_y(&cfg.grid, cfg.order)?;
        Ok(Self {
            cfg,
            ox,
            oy,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Grid2D {
        &self.cfg.grid
    }

    pub fn applicator(&self) -> TensorApplicator<'_> {
        TensorApplicator::new(&self.ox, &self.oy).with_execution(self.exec)
    }

    fn shape(&self) -> (usize, usize) {
        (self.cfg.grid.nx, self.cfg.grid.ny)
    }

    fn check(&self, f: &Field) -> Result<()> {
        f.check_shape(self.shape())?;
        let (m, k) = f.min_abs(0);
        if !(m >= VACUUM_TOL) {
            return Err(Error::Vacuum {
                phi1: f.comp(0)[k],
                node: Some(k),
            });
        }
        Ok(())
    }

    #[inline]
    fn split_at(&self, s: &SkewState) -> SplitMatrices {
        if self.cfg.free_params.is_zero() {
            split_unchecked(s, &self.cfg.gas)
        } else {
            split_with_unchecked(s, &self.cfg.gas, &self.cfg.free_params)
        }
    }

    /// Spatial operator without boundary penalties or sources.
    pub fn rhs_interior(&self, f: &Field) -> Result<Field> {
        self.check(f)?;
        Ok(self.spatial(f))
    }

    fn spatial(&self, f: &Field) -> Field {
        let (nx, ny) = self.shape();
        let t = self.applicator();

        let mut a1phi = Field::zeros(nx, ny);
        let mut b1phi = Field::zeros(nx, ny);
        par::for_each_row4(self.exec, a1phi.comps_mut(), ny, |i, [r0, r1, r2, r3]| {
            for j in 0..ny {
                let s = f.node(i * ny + j);
                let v = self.split_at(&s).a1.mul_vec(&s.to_array());
                r0[j] = v[0];
                r1[j] = v[1];
                r2[j] = v[2];
                r3[j] = v[3];
            }
        });
        par::for_each_row4(self.exec, b1phi.comps_mut(), ny, |i, [r0, r1, r2, r3]| {
            for j in 0..ny {
                let s = f.node(i * ny + j);
                let v = self.split_at(&s).b1.mul_vec(&s.to_array());
                r0[j] = v[0];
                r1[j] = v[1];
                r2[j] = v[2];
                r3[j] = v[3];
            }
        });

        let mut dxa = Field::zeros(nx, ny);
        let mut dxf = Field::zeros(nx, ny);
        let mut dyb = Field::zeros(nx, ny);
        let mut dyf = Field::zeros(nx, ny);
        for c in 0..4 {
            t.dx_scalar(a1phi.comp(c), dxa.comp_mut(c));
            t.dx_scalar(f.comp(c), dxf.comp_mut(c));
            t.dy_scalar(b1phi.comp(c), dyb.comp_mut(c));
            t.dy_scalar(f.comp(c), dyf.comp_mut(c));
        }

        let mut out = Field::zeros(nx, ny);
        par::for_each_row4(self.exec, out.comps_mut(), ny, |i, [r0, r1, r2, r3]| {
            for j in 0..ny {
                let k = i * ny + j;
                let s = f.node(k);
                let m = self.split_at(&s);
                let a2d = m.a2.mul_vec(&dxf.node(k).to_array());
                let b2d = m.b2.mul_vec(&dyf.node(k).to_array());
                let da = dxa.node(k).to_array();
                let db = dyb.node(k).to_array();
                r0[j] = -(da[0] + a2d[0] + db[0] + b2d[0]);
                r1[j] = -(da[1] + a2d[1] + db[1] + b2d[1]);
                r2[j] = -(da[2] + a2d[2] + db[2] + b2d[2]);
                r3[j] = -(da[3] + a2d[3] + db[3] + b2d[3]);
            }
        });
        out
    }

    /// Full right-hand side at time `t`: split-form operator, boundary
    /// penalties on bounded edges, and the optional forcing.
    pub fn rhs(&self, f: &Field, t: f64, forcing: Option<&dyn Forcing>) -> Result<Field> {
        self.check(f)?;
        let mut out = self.spatial(f);
        self.add_penalties(f, t, forcing, &mut out);
        if let Some(src) = forcing {
            let grid = self.cfg.grid;
            let ny = grid.ny;
            par::for_each_row4(self.exec, out.comps_mut(), ny, |i, [r0, r1, r2, r3]| {
                let x = grid.x(i);
                for j in 0..ny {
                    let s = src.source(x, grid.y(j), t);
                    r0[j] += s[0];
                    r1[j] += s[1];
                    r2[j] += s[2];
                    r3[j] += s[3];
                }
            });
        }
        Ok(out)
    }

    /// Nodes of an edge as `(node index, 1D boundary weight, edge weight)`.
    fn edge_nodes(&self, edge: Edge) -> Vec<(usize, f64, f64)> {
        let (nx, ny) = self.shape();
        let (wx, wy) = (self.ox.weights(), self.oy.weights());
        match edge {
            Edge::West => (0..ny).map(|j| (j, wx[0], wy[j])).collect(),
            Edge::East => (0..ny).map(|j| ((nx - 1) * ny + j, wx[nx - 1], wy[j])).collect(),
            Edge::South => (0..nx).map(|i| (i * ny, wy[0], wx[i])).collect(),
            Edge::North => (0..nx).map(|i| (i * ny + ny - 1, wy[ny - 1], wx[i])).collect(),
        }
    }

    fn bounded_edges(&self) -> Vec<Edge> {
        let mut edges = Vec::new();
        if self.cfg.grid.topology_x == Topology::Bounded {
            edges.extend([Edge::West, Edge::East]);
        }
        if self.cfg.grid.topology_y == Topology::Bounded {
            edges.extend([Edge::South, Edge::North]);
        }
        edges
    }

    fn add_penalties(&self, f: &Field, t: f64, forcing: Option<&dyn Forcing>, out: &mut Field) {
        let gas = &self.cfg.gas;
        let grid = &self.cfg.grid;
        let ny = grid.ny;
        for edge in self.bounded_edges() {
            let n = edge.normal();
            for (k, w1d, _) in self.edge_nodes(edge) {
                let s = f.node(k);
                let (x, y) = (grid.x(k / ny), grid.y(k % ny));
                let pen = match forcing.and_then(|fc| fc.boundary_state(x, y, t)) {
                    Some(g) => data_penalty(&s, &g, gas),
                    None if self.cfg.wall_sigma > 0.0 => wall_sat_penalty(&s, &n, gas, self.cfg.wall_sigma),
                    None => continue,
                };
                for (c, p) in pen.iter().enumerate() {
                    out.comp_mut(c)[k] += p / w1d;
                }
            }
        }
    }

    /// `||Phi||^2_{P Ptilde}`.
    pub fn discrete_energy(&self, f: &Field) -> Result<f64> {
        self.applicator()
            .weighted_inner_product(f, f, norm_matrix(&self.cfg.gas).diag())
    }

    /// Boundary quadrature of `Phi^T (n_x Atilde + n_y Btilde) Phi`, free
    /// parameters included; zero on periodic grids.
    pub fn discrete_boundary_flux(&self, f: &Field) -> Result<f64> {
        self.check(f)?;
        let (gas, fp) = (&self.cfg.gas, &self.cfg.free_params);
        let mut total = 0.0;
        for edge in self.bounded_edges() {
            let n = edge.normal();
            for (k, _, w) in self.edge_nodes(edge) {
                let s = f.node(k);
                let m = atilde_unchecked(&s, gas, fp).scale(n.nx()) + btilde_unchecked(&s, gas, fp).scale(n.ny());
                total += w * m.quad_form(&s.to_array());
            }
        }
        Ok(total)
    }

    /// Boundary quadrature of `(gamma - 1) u_n phi4^2`.
    pub fn pressure_work(&self, f: &Field) -> Result<f64> {
        self.check(f)?;
        let g = self.cfg.gas.gamma;
        let mut total = 0.0;
        for edge in self.bounded_edges() {
            let n = edge.normal();
            for (k, _, w) in self.edge_nodes(edge) {
                let s = f.node(k);
                total += w * (g - 1.0) * normal_velocity(&s, &n) * s.phi4 * s.phi4;
            }
        }
        Ok(total)
    }

    /// `|2 (Phi, P rhs_interior(Phi)) + boundary flux|`, valid for any field.
    pub fn energy_rate_residual(&self, f: &Field) -> Result<f64> {
        let rhs = self.rhs_interior(f)?;
        let p = norm_matrix(&self.cfg.gas).diag();
        let rate = 2.0 * self.applicator().weighted_inner_product(f, &rhs, p)?;
        Ok((rate + self.discrete_boundary_flux(f)?).abs())
    }

    pub fn sample(&self, f: &Field, t: f64) -> Result<EnergySample> {
        Ok(EnergySample {
            t,
            energy: self.discrete_energy(f)?,
            boundary_flux: self.discrete_boundary_flux(f)?,
            rate_residual: self.energy_rate_residual(f)?,
            pressure_work: self.pressure_work(f)?,
            min_phi1: f.min_abs(0).0,
            min_phi4: f.min_abs(3).0,
        })
    }

    /// Largest `|u| + |v| + c` over the grid.
    pub fn max_wave_speed(&self, f: &Field) -> Result<f64> {
        self.check(f)?;
        let sg = self.cfg.gas.gamma.sqrt();
        Ok((0..f.len())
            .map(|k| {
                let s = f.node(k);
                s.u().abs() + s.v().abs() + sg * s.ratio().abs()
            })
            .fold(0.0, f64::max))
    }

    /// `cfl * min(hx, hy) / max(|u| + |v| + c)`.
    pub fn stable_dt(&self, f: &Field) -> Result<f64> {
        let h = self.cfg.grid.hx().min(self.cfg.grid.hy());
        let speed = self.max_wave_speed(f)?;
        Ok(if speed > 0.0 { self.cfg.cfl * h / speed } else { f64::INFINITY })
    }

    /// Classical four-stage Runge-Kutta step.
    pub fn rk4_step(&self, f: &Field, t: f64, dt: f64, forcing: Option<&dyn Forcing>) -> Result<Field> {
        let stage = |g: &Field, ts: f64| -> Result<Field> {
            if !g.is_finite() {
                return Err(Error::Divergence { t: ts });
            }
            self.rhs(g, ts, forcing)
        };
        let k1 = stage(f, t)?;
        let k2 = stage(&Field::offset(f, 0.5 * dt, &k1), t + 0.5 * dt)?;
        let k3 = stage(&Field::offset(f, 0.5 * dt, &k2), t + 0.5 * dt)?;
        let k4 = stage(&Field::offset(f, dt, &k3), t + dt)?;
        let mut next = f.clone();
        next.axpy(dt / 6.0, &k1);
        next.axpy(dt / 3.0, &k2);
        next.axpy(dt / 3.0, &k3);
        next.axpy(dt / 6.0, &k4);
        if !next.is_finite() {
            return Err(Error::Divergence { t: t + dt });
        }
        Ok(next)
    }

    /// Integrates from `t = 0` to `t_end`, landing exactly on snapshot times.
    pub fn run(&self, initial: &Field, forcing: Option<&dyn Forcing>) -> Result<RunRecord> {
        self.check(initial)?;
        let cfg = &self.cfg;
        let mut events: Vec<f64> = cfg
            .snapshot_times
            .iter()
            .copied()
            .filter(|&s| (0.0..=cfg.t_end).contains(&s))
            .collect();
        events.sort_by(f64::total_cmp);
        events.dedup();

        let mut rec = RunRecord::default();
        let mut f = initial.clone();
        let mut t = 0.0;
        rec.samples.push(self.sample(&f, t)?);
        let mut next_event = 0;
        while next_event < events.len() && events[next_event] <= 0.0 {
            rec.snapshots.push((0.0, f.clone()));
            next_event += 1;
        }

        let end_tol = 1e-12 * cfg.t_end.max(1.0);
        while cfg.t_end - t > end_tol {
            let limit = self.stable_dt(&f)?;
            let mut dt = match cfg.dt {
                Some(dt) if dt > limit * (1.0 + 1e-12) => return Err(Error::Cfl { dt, limit, t }),
                Some(dt) => dt,
                None => limit,
            };
            let target = events.get(next_event).copied().unwrap_or(cfg.t_end).min(cfg.t_end);
            let mut landed = false;
            if t + dt >= target - end_tol {
                dt = target - t;
                landed = true;
            }
            f = self.rk4_step(&f, t, dt, forcing)?;
            t = if landed { target } else { t + dt };
            rec.steps += 1;

            let done = cfg.t_end - t <= end_tol;
            if rec.steps % cfg.sample_stride == 0 || done {
                rec.samples.push(self.sample(&f, t)?);
            }
            while next_event < events.len() && events[next_event] <= t + end_tol {
                rec.snapshots.push((t, f.clone()));
                next_event += 1;
            }
        }
        rec.final_field = Some(f);
        Ok(rec)
    }
}

/// Penalty towards prescribed boundary data, `-tau (Phi - g)` with
/// `tau = |u| + |v| + c` of the data. Dissipative for the error energy.
fn data_penalty(s: &SkewState, g: &SkewState, gas: &GasModel) -> [f64; 4] {
    let tau = g.u().abs() + g.v().abs() + gas.gamma.sqrt() * g.ratio().abs();
    let (a, b) = (s.to_array(), g.to_array());
    std::array::from_fn(|c| -tau * (a[c] - b[c]))
}
