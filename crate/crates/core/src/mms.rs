//! Manufactured solutions and grid-convergence studies.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::matrices::{coeff_a_unchecked, coeff_b_unchecked};
use crate::solver::{Forcing, Scheme, SchemeConfig};
use crate::state::{Field, GasModel, Grid2D, SkewState};

/// One component `a + b sin(kx x + ky y - w t + s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigMode {
    pub mean: f64,
    pub amplitude: f64,
    pub kx: f64,
    pub ky: f64,
    pub omega: f64,
    pub shift: f64,
}

impl TrigMode {
    fn phase(&self, x: f64, y: f64, t: f64) -> f64 {
        self.kx * x + self.ky * y - self.omega * t + self.shift
    }

    fn value(&self, x: f64, y: f64, t: f64) -> f64 {
        self.mean + self.amplitude * self.phase(x, y, t).sin()
    }

    /// `(d/dt, d/dx, d/dy)`.
    fn grad(&self, x: f64, y: f64, t: f64) -> (f64, f64, f64) {
        let c = self.amplitude * self.phase(x, y, t).cos();
        (-self.omega * c, self.kx * c, self.ky * c)
    }
}

/// Smooth trigonometric field in square-root variables with the source
/// `S = Phi_t + A Phi_x + B Phi_y` that makes it an exact solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedSolution {
    pub gas: GasModel,
    pub modes: [TrigMode; 4],
}

impl ManufacturedSolution {
    /// Default field: density and pressure bounded away from zero, subsonic.
    pub fn standard(gas: GasModel) -> Self {
        let m = |mean, amplitude, kx, ky, omega, shift| TrigMode {
            mean,
            amplitude,
            kx,
            ky,
            omega,
            shift,
        };
        Self {
            gas,
            modes: [
                m(1.0, 0.2, PI, PI, 1.0, 0.0),
                m(0.3, 0.2, PI, 2.0 * PI, 0.5, 1.0),
                m(-0.2, 0.15, 2.0 * PI, PI, -0.7, 2.0),
                m(1.1, 0.2, PI, -PI, 1.3, 0.5),
            ],
        }
    }

    pub fn exact(&self, x: f64, y: f64, t: f64) -> SkewState {
        SkewState::from_array(std::array::from_fn(|c| self.modes[c].value(x, y, t)))
    }

    pub fn exact_field(&self, grid: &Grid2D, t: f64) -> Field {
        Field::from_fn(grid, |x, y| self.exact(x, y, t))
    }
}

impl Forcing for ManufacturedSolution {
    fn source(&self, x: f64, y: f64, t: f64) -> [f64; 4] {
        let s = self.exact(x, y, t);
        let g: [(f64, f64, f64); 4] = std::array::from_fn(|c| self.modes[c].grad(x, y, t));
        let ax = coeff_a_unchecked(&s, &self.gas).mul_vec(&g.map(|d| d.1));
        let by = coeff_b_unchecked(&s, &self.gas).mul_vec(&g.map(|d| d.2));
        std::array::from_fn(|c| g[c].0 + ax[c] + by[c])
    }

    fn boundary_state(&self, x: f64, y: f64, t: f64) -> Option<SkewState> {
        Some(self.exact(x, y, t))
    }
}

/// Discrete `L2` norm of `f - g` in the operator quadrature, all components.
pub fn l2_error(scheme: &Scheme, f: &Field, g: &Field) -> Result<f64> {
    let mut d = f.clone();
    d.axpy(-1.0, g);
    Ok(scheme.applicator().inner_product(&d, &d)?.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceLevel {
    pub n: usize,
    pub h: f64,
    pub l2_error: f64,
    /// Observed order against the previous, coarser level.
    pub order: Option<f64>,
}

/// Runs the manufactured solution on `n x n` versions of `base.grid` for
/// each entry of `levels` and reports errors at `base.t_end`.
pub fn convergence_study(base: &SchemeConfig, mms: &ManufacturedSolution, levels: &[usize]) -> Result<Vec<ConvergenceLevel>> {
    if levels.len() < 2 {
        return Err(Error::config(None, "convergence study needs at least two levels"));
    }
    let mut out: Vec<ConvergenceLevel> = Vec::with_capacity(levels.len());
    for &n in levels {
        let g = base.grid;
        let grid = Grid2D::new((n, n), (g.x_min, g.x_max), (g.y_min, g.y_max), (g.topology_x, g.topology_y))?;
        let mut cfg = base.clone();
        cfg.grid = grid;
        cfg.gas = mms.gas;
        cfg.snapshot_times.clear();
        cfg.sample_stride = usize::MAX;
        let scheme = Scheme::new(cfg)?;
        let rec = scheme.run(&mms.exact_field(&grid, 0.0), Some(mms))?;
        let f = rec.final_field.expect("run returns final field");
        let err = l2_error(&scheme, &f, &mms.exact_field(&grid, base.t_end))?;
        let h = grid.hx().max(grid.hy());
        let order = out.last().map(|p| (p.l2_error / err).ln() / (p.h / h).ln());
        out.push(ConvergenceLevel { n, h, l2_error: err, order });
    }
    Ok(out)
}

pub fn write_convergence_csv<W: Write>(levels: &[ConvergenceLevel], mut w: W) -> Result<()> {
    writeln!(w, "n,h,l2_error,order")?;
    for l in levels {
        match l.order {
            Some(p) => writeln!(w, "{},{:?},{:?},{:?}", l.n, l.h, l.l2_error, p)?,
            None => writeln!(w, "{},{:?},{:?},", l.n, l.h, l.l2_error)?,
        }
    }
    Ok(())
}
