//! Diagonal-norm summation-by-parts first-derivative operators and their
//! tensor-product application on 2D fields.
//!
//! An operator is `D = H^-1 Q` with a positive diagonal quadrature `H` and
//! `Q + Q^T = diag(-1, 0, ..., 0, 1)` (bounded) or `Q + Q^T = 0` (periodic).
//! `Q` is stored as a dense left closure block plus a banded interior stencil;
//! the right closure is the point reflection of the left one,
//! `Q[n-1-i][n-1-j] = -Q[i][j]`, so the SBP property holds bit-exactly.

use std::io::Write;

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::state::{Field, Grid2D, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    Second,
    Fourth,
}

impl Order {
    /// Formal interior accuracy.
    pub fn interior(self) -> usize {
        match self {
            Order::Second => 2,
            Order::Fourth => 4,
        }
    }

    /// Formal accuracy of the boundary closure rows.
    pub fn boundary(self) -> usize {
        self.interior() / 2
    }

    pub fn min_nodes(self) -> usize {
        match self {
            Order::Second => 3,
            Order::Fourth => 12,
        }
    }
}

impl TryFrom<usize> for Order {
    type Error = Error;
    fn try_from(v: usize) -> Result<Self> {
        match v {
            2 => Ok(Order::Second),
            4 => Ok(Order::Fourth),
            _ => Err(Error::config(None, format!("operator order must be 2 or 4, got {v}"))),
        }
    }
}

impl From<Order> for usize {
    fn from(o: Order) -> usize {
        o.interior()
    }
}

// Second order: H = h diag(1/2, 1, ..., 1, 1/2).
const WEIGHTS_2: [f64; 1] = [0.5];
const STENCIL_2: [f64; 3] = [-0.5, 0.0, 0.5];

// Fourth-order interior, second-order closure (Strand's diagonal-norm
// operator without free parameters), written as Q = H D.
const WEIGHTS_4: [f64; 4] = [17.0 / 48.0, 59.0 / 48.0, 43.0 / 48.0, 49.0 / 48.0];
const STENCIL_4: [f64; 5] = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];

fn closure_2() -> Vec<Vec<f64>> {
    vec![vec![-0.5, 0.5]]
}

#[rustfmt::skip]
fn closure_4() -> Vec<Vec<f64>> {
    vec![
        vec![-1.0 / 2.0,   59.0 / 96.0, -1.0 / 12.0,  -1.0 / 32.0, 0.0,         0.0],
        vec![-59.0 / 96.0, 0.0,          59.0 / 96.0,  0.0,        0.0,         0.0],
        vec![1.0 / 12.0,   -59.0 / 96.0, 0.0,          59.0 / 96.0, -1.0 / 12.0, 0.0],
        vec![1.0 / 32.0,   0.0,          -59.0 / 96.0, 0.0,         2.0 / 3.0,   -1.0 / 12.0],
    ]
}

/// Nonzero entries of one row of `Q`.
#[derive(Debug, Clone, Copy)]
struct RowEntries {
    cols: [usize; 8],
    vals: [f64; 8],
    len: usize,
}

impl RowEntries {
    fn push(&mut self, col: usize, val: f64) {
        if val != 0.0 {
            self.cols[self.len] = col;
            self.vals[self.len] = val;
            self.len += 1;
        }
    }

    fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.cols[..self.len]
            .iter()
            .copied()
            .zip(self.vals[..self.len].iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbpOperator1D {
    n: usize,
    h: f64,
    order: Order,
    topology: Topology,
    weights: Vec<f64>,
    closure: Vec<Vec<f64>>,
    stencil: Vec<f64>,
}

impl SbpOperator1D {
    pub fn build(order: Order, n: usize, h: f64, topology: Topology) -> Result<Self> {
        if n < order.min_nodes() {
            return Err(Error::Size {
                order: order.interior(),
                n,
                min: order.min_nodes(),
            });
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::config(None, format!("grid spacing must be positive, got {h}")));
        }
        let (block, stencil, closure): (&[f64], &[f64], Vec<Vec<f64>>) = match order {
            Order::Second => (&WEIGHTS_2, &STENCIL_2, closure_2()),
            Order::Fourth => (&WEIGHTS_4, &STENCIL_4, closure_4()),
        };
        let mut weights = vec![h; n];
        let closure = match topology {
            Topology::Bounded => {
                for (k, w) in block.iter().enumerate() {
                    weights[k] = w * h;
                    weights[n - 1 - k] = w * h;
                }
                closure
            }
            Topology::Periodic => Vec::new(),
        };
        Ok(Self {
            n,
            h,
            order,
            topology,
            weights,
            closure,
            stencil: stencil.to_vec(),
        })
    }

    /// Operator matching the x or y direction of `grid`.
    pub fn for_grid_x(grid: &Grid2D, order: Order) -> Result<Self> {
        Self::build(order, grid.nx, grid.hx(), grid.topology_x)
    }

    pub fn for_grid_y(grid: &Grid2D, order: Order) -> Result<Self> {
        Self::build(order, grid.ny, grid.hy(), grid.topology_y)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Diagonal of the quadrature matrix, spacing included.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn half_width(&self) -> usize {
        self.stencil.len() / 2
    }

    fn closure_rows(&self) -> usize {
        self.closure.len()
    }

    fn row_entries(&self, i: usize) -> RowEntries {
        let mut e = RowEntries {
            cols: [0; 8],
            vals: [0.0; 8],
            len: 0,
        };
        let (n, m, r) = (self.n, self.half_width(), self.closure_rows());
        match self.topology {
            Topology::Periodic => {
                for (k, &q) in self.stencil.iter().enumerate() {
                    e.push((i + n + k - m) % n, q);
                }
            }
            Topology::Bounded if i < r => {
                for (j, &q) in self.closure[i].iter().enumerate() {
                    e.push(j, q);
                }
            }
            Topology::Bounded if i >= n - r => {
                let ii = n - 1 - i;
                for (jj, &q) in self.closure[ii].iter().enumerate() {
                    e.push(n - 1 - jj, -q);
                }
            }
            Topology::Bounded => {
                for (k, &q) in self.stencil.iter().enumerate() {
                    e.push(i + k - m, q);
                }
            }
        }
        e
    }

    /// Entry `Q[i][j]`.
    pub fn q_entry(&self, i: usize, j: usize) -> f64 {
        self.row_entries(i)
            .iter()
            .find(|&(c, _)| c == j)
            .map_or(0.0, |(_, q)| q)
    }

    pub fn dense_q(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.q_entry(i, j)).collect())
            .collect()
    }

    /// Dense `D = H^-1 Q`, for small-size audits.
    pub fn dense_d(&self) -> Vec<Vec<f64>> {
        let mut d = self.dense_q();
        for (row, w) in d.iter_mut().zip(&self.weights) {
            row.iter_mut().for_each(|v| *v /= w);
        }
        d
    }

    /// Differentiates one contiguous line.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        let (n, m) = (self.n, self.half_width());
        match self.topology {
            Topology::Periodic => {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (k, &q) in self.stencil.iter().enumerate() {
                        acc += q * f[(i + n + k - m) % n];
                    }
                    *o = acc / self.weights[i];
                }
            }
            Topology::Bounded => {
                let r = self.closure_rows();
                for (i, row) in self.closure.iter().enumerate() {
                    let mut left = 0.0;
                    let mut right = 0.0;
                    for (j, &q) in row.iter().enumerate() {
                        left += q * f[j];
                        right -= q * f[n - 1 - j];
                    }
                    out[i] = left / self.weights[i];
                    out[n - 1 - i] = right / self.weights[n - 1 - i];
                }
                for i in r..n - r {
                    let mut acc = 0.0;
                    for (k, &q) in self.stencil.iter().enumerate() {
                        acc += q * f[i + k - m];
                    }
                    out[i] = acc / self.weights[i];
                }
            }
        }
    }

    /// Writes `row,weight,col,q` for every nonzero entry of `Q`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,weight,col,q")?;
        for i in 0..self.n {
            for (j, q) in self.row_entries(i).iter() {
                writeln!(w, "{i},{:?},{j},{q:?}", self.weights[i])?;
            }
        }
        Ok(())
    }
}

/// `||Q + Q^T - B||_inf` for a dense `Q`, with `B = diag(-1, 0, ..., 0, 1)`
/// for bounded operators and zero for periodic ones.
pub fn sbp_constraint_violation(q: &[Vec<f64>], topology: Topology) -> f64 {
    let n = q.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut target = 0.0;
            if topology == Topology::Bounded && i == j {
                if i == 0 {
                    target = -1.0;
                } else if i == n - 1 {
                    target = 1.0;
                }
            }
            worst = worst.max((q[i][j] + q[j][i] - target).abs());
        }
    }
    worst
}

pub fn verify_sbp_constraint(op: &SbpOperator1D) -> f64 {
    sbp_constraint_violation(&op.dense_q(), op.topology)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeResidual {
    pub degree: usize,
    /// Max error over rows using the interior stencil only.
    pub interior: f64,
    /// Max error over closure rows; `None` for periodic operators.
    pub boundary: Option<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub interior_degree: usize,
    pub boundary_degree: usize,
    pub residuals: Vec<DegreeResidual>,
    pub passed: bool,
}

impl AccuracyReport {
    pub fn degree(&self, k: usize) -> Option<&DegreeResidual> {
        self.residuals.iter().find(|r| r.degree == k)
    }
}

/// Applies `D` to `x^k` on `x_i = i h` and compares with `k x^(k-1)`, for
/// `k = 0 ..= interior + 1`. Passes when every degree within the formal
/// accuracy is exact to roundoff. On periodic operators only rows whose
/// stencil does not wrap are checked.
pub fn verify_accuracy(op: &SbpOperator1D) -> AccuracyReport {
    let n = op.n;
    let xs: Vec<f64> = (0..n).map(|i| i as f64 * op.h).collect();
    let (interior_rows, boundary_rows): (Vec<usize>, Vec<usize>) = match op.topology {
        Topology::Bounded => {
            let r = op.closure_rows();
            ((r..n - r).collect(), (0..r).chain(n - r..n).collect())
        }
        Topology::Periodic => {
            let m = op.half_width();
            ((m..n - m).collect(), Vec::new())
        }
    };
    let (ideg, bdeg) = (op.order.interior(), op.order.boundary());
    let mut out = vec![0.0; n];
    let mut residuals = Vec::new();
    let mut passed = true;
    for k in 0..=ideg + 1 {
        let f: Vec<f64> = xs.iter().map(|x| x.powi(k as i32)).collect();
        op.apply(&f, &mut out);
        let exact = |x: f64| if k == 0 { 0.0 } else { k as f64 * x.powi(k as i32 - 1) };
        let err = |rows: &[usize]| {
            rows.iter()
                .map(|&i| (out[i] - exact(xs[i])).abs())
                .fold(0.0, f64::max)
        };
        let fmax = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let dmax = xs.iter().fold(0.0_f64, |m, &x| m.max(exact(x).abs()));
        let tolerance = 1e-12 * (1.0 + fmax / op.h + dmax);
        let interior = err(&interior_rows);
        let boundary = (!boundary_rows.is_empty()).then(|| err(&boundary_rows));
        if k <= ideg && interior > tolerance {
            passed = false;
        }
        if k <= bdeg && boundary.is_some_and(|b| b > tolerance) {
            passed = false;
        }
        residuals.push(DegreeResidual {
            degree: k,
            interior,
            boundary,
            tolerance,
        });
    }
    AccuracyReport {
        interior_degree: ideg,
        boundary_degree: bdeg,
        residuals,
        passed,
    }
}

/// Applies `I_4 (x) D_x (x) I_y` and `I_4 (x) I_x (x) D_y` to fields without
/// forming the Kronecker products.
#[derive(Debug, Clone, Copy)]
pub struct TensorApplicator<'a> {
    pub x: &'a SbpOperator1D,
    pub y: &'a SbpOperator1D,
    pub exec: Execution,
}

impl<'a> TensorApplicator<'a> {
    pub fn new(x: &'a SbpOperator1D, y: &'a SbpOperator1D) -> Self {
        Self {
            x,
            y,
            exec: Execution::default(),
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.x.n, self.y.n)
    }

    /// x-derivative of one scalar array: each output row `i` is a linear
    /// combination of input rows.
    pub fn dx_scalar(&self, f: &[f64], out: &mut [f64]) {
        let ny = self.y.n;
        par::for_each_row(self.exec, out, ny, |i, row| {
            let inv = 1.0 / self.x.weights[i];
            row.fill(0.0);
            for (j, q) in self.x.row_entries(i).iter() {
                let src = &f[j * ny..(j + 1) * ny];
                row.iter_mut().zip(src).for_each(|(o, s)| *o += q * s);
            }
            row.iter_mut().for_each(|o| *o *= inv);
        });
    }

    /// y-derivative of one scalar array: contiguous lines.
    pub fn dy_scalar(&self, f: &[f64], out: &mut [f64]) {
        let ny = self.y.n;
        par::for_each_row(self.exec, out, ny, |i, row| {
            self.y.apply(&f[i * ny..(i + 1) * ny], row);
        });
    }

    pub fn apply_dx(&self, f: &Field) -> Result<Field> {
        f.check_shape(self.shape())?;
        let mut out = Field::zeros(self.x.n, self.y.n);
        for c in 0..4 {
            self.dx_scalar(f.comp(c), out.comp_mut(c));
        }
        Ok(out)
    }

    pub fn apply_dy(&self, f: &Field) -> Result<Field> {
        f.check_shape(self.shape())?;
        let mut out = Field::zeros(self.x.n, self.y.n);
        for c in 0..4 {
            self.dy_scalar(f.comp(c), out.comp_mut(c));
        }
        Ok(out)
    }

    /// Quadrature weight of node `k` (`Px[i] * Py[j]`).
    #[inline]
    pub fn node_weight(&self, k: usize) -> f64 {
        let ny = self.y.n;
        self.x.weights[k / ny] * self.y.weights[k % ny]
    }

    /// `sum_c sum_nodes Px Py w_c f_c g_c`.
    pub fn weighted_inner_product(&self, f: &Field, g: &Field, comp_weights: [f64; 4]) -> Result<f64> {
        f.check_shape(self.shape())?;
        g.check_shape(self.shape())?;
        let ny = self.y.n;
        let mut total = 0.0;
        for (c, wc) in comp_weights.iter().enumerate() {
            let (fc, gc) = (f.comp(c), g.comp(c));
            let mut sum_c = 0.0;
            for (i, wx) in self.x.weights.iter().enumerate() {
                let mut row = 0.0;
                for (j, wy) in self.y.weights.iter().enumerate() {
                    let k = i * ny + j;
                    row += wy * fc[k] * gc[k];
                }
                sum_c += wx * row;
            }
            total += wc * sum_c;
        }
        Ok(total)
    }

    pub fn inner_product(&self, f: &Field, g: &Field) -> Result<f64> {
        self.weighted_inner_product(f, g, [1.0; 4])
    }

    /// `U^T (I (x) B_x (x) P_y) V`: quadrature along the two x-boundaries.
    /// Zero when x is periodic.
    pub fn boundary_form_x(&self, u: &Field, v: &Field) -> Result<f64> {
        u.check_shape(self.shape())?;
        v.check_shape(self.shape())?;
        if self.x.topology == Topology::Periodic {
            return Ok(0.0);
        }
        let (nx, ny) = self.shape();
        let mut total = 0.0;
        for c in 0..4 {
            let (uc, vc) = (u.comp(c), v.comp(c));
            for (j, wy) in self.y.weights.iter().enumerate() {
                let (lo, hi) = (j, (nx - 1) * ny + j);
                total += wy * (uc[hi] * vc[hi] - uc[lo] * vc[lo]);
            }
        }
        Ok(total)
    }

    /// `U^T (I (x) P_x (x) B_y) V`.
    pub fn boundary_form_y(&self, u: &Field, v: &Field) -> Result<f64> {
        u.check_shape(self.shape())?;
        v.check_shape(self.shape())?;
        if self.y.topology == Topology::Periodic {
            return Ok(0.0);
        }
        let ny = self.y.n;
        let mut total = 0.0;
        for c in 0..4 {
            let (uc, vc) = (u.comp(c), v.comp(c));
            for (i, wx) in self.x.weights.iter().enumerate() {
                let (lo, hi) = (i * ny, i * ny + ny - 1);
                total += wx * (uc[hi] * vc[hi] - uc[lo] * vc[lo]);
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_ops(n: usize) -> Vec<SbpOperator1D> {
        let mut v = Vec::new();
        for order in [Order::Second, Order::Fourth] {
            for topo in [Topology::Bounded, Topology::Periodic] {
                v.push(SbpOperator1D::build(order, n, 1.0 / n as f64, topo).unwrap());
            }
        }
        v
    }

    #[test]
    fn second_order_bounded_coefficients() {
        let h = 0.1;
        let op = SbpOperator1D::build(Order::Second, 6, h, Topology::Bounded).unwrap();
        assert_eq!(op.weights(), &[0.05, 0.1, 0.1, 0.1, 0.1, 0.05]);
        let q = op.dense_q();
        assert_eq!(&q[0][..3], &[-0.5, 0.5, 0.0]);
        assert_eq!(&q[5][3..], &[0.0, -0.5, 0.5]);
    }

    #[test]
    fn second_order_periodic_is_circulant() {
        let op = SbpOperator1D::build(Order::Second, 4, 0.25, Topology::Periodic).unwrap();
        let d = op.dense_d();
        assert_eq!(d[0], vec![0.0, 2.0, 0.0, -2.0]);
        assert_eq!(d[1], vec![-2.0, 0.0, 2.0, 0.0]);
        assert_eq!(verify_sbp_constraint(&op), 0.0);
    }

    #[test]
    fn size_limits() {
        assert!(matches!(
            SbpOperator1D::build(Order::Fourth, 11, 0.1, Topology::Bounded),
            Err(Error::Size { order: 4, n: 11, min: 12 })
        ));
        assert!(SbpOperator1D::build(Order::Second, 2, 0.1, Topology::Bounded).is_err());
        assert!(SbpOperator1D::build(Order::Second, 3, 0.0, Topology::Bounded).is_err());
        assert!(SbpOperator1D::build(Order::Fourth, 12, 0.1, Topology::Bounded).is_ok());
    }

    #[test]
    fn sbp_constraint_exact_for_all_operators() {
        for n in [12, 13, 20, 37] {
            for op in all_ops(n) {
                assert_eq!(verify_sbp_constraint(&op), 0.0, "{:?} {:?} n={n}", op.order, op.topology);
            }
        }
    }

    #[test]
    fn sbp_constraint_detects_perturbation() {
        let op = SbpOperator1D::build(Order::Fourth, 16, 0.1, Topology::Bounded).unwrap();
        let mut q = op.dense_q();
        q[2][5] += 1e-6;
        let v = sbp_constraint_violation(&q, Topology::Bounded);
        assert!((v - 1e-6).abs() < 1e-12, "{v}");
    }

    #[test]
    fn weights_positive_and_sum_to_length() {
        for op in all_ops(24) {
            assert!(op.weights().iter().all(|&w| w > 0.0));
            let len = match op.topology {
                Topology::Bounded => (op.n - 1) as f64 * op.h,
                Topology::Periodic => op.n as f64 * op.h,
            };
            let sum: f64 = op.weights().iter().sum();
            assert!((sum - len).abs() < 1e-14, "{sum} vs {len}");
        }
    }

    #[test]
    fn accuracy_within_formal_degrees() {
        for n in [12, 21, 40] {
            for op in all_ops(n) {
                let rep = verify_accuracy(&op);
                assert!(rep.passed, "{:?} {:?} {rep:?}", op.order, op.topology);
                assert!(rep.degree(0).unwrap().interior < 1e-13);
                assert!(rep.degree(0).unwrap().boundary.unwrap_or(0.0) < 1e-13);
            }
        }
    }

    #[test]
    fn accuracy_linear_exact_second_order() {
        let op = SbpOperator1D::build(Order::Second, 9, 0.125, Topology::Bounded).unwrap();
        let rep = verify_accuracy(&op);
        let d1 = rep.degree(1).unwrap();
        assert!(d1.interior < 1e-13 && d1.boundary.unwrap() < 1e-13);
    }

    #[test]
    fn degree_above_interior_order_converges_at_fourth_order() {
        // Taylor remainder for x^5 with the 4th-order stencil is -h^4 * 5!/30 * x^0 ... = -4 h^4
        let err = |n: usize| {
            let op = SbpOperator1D::build(Order::Fourth, n, 1.0 / (n - 1) as f64, Topology::Bounded).unwrap();
            verify_accuracy(&op).degree(5).unwrap().interior
        };
        let (e1, e2) = (err(21), err(41));
        assert!(e1 > 1e-8);
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    fn random_field(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> Field {
        let mut f = Field::zeros(nx, ny);
        for c in 0..4 {
            f.comp_mut(c).iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        f
    }

    fn dense_kron_dx(op: &SbpOperator1D, ny: usize, f: &[f64]) -> Vec<f64> {
        let d = op.dense_d();
        let nx = op.n;
        // (D_x (x) I_y)_{(i,j),(k,l)} = D[i][k] delta_{jl}
        let n = nx * ny;
        let mut big = vec![vec![0.0; n]; n];
        for i in 0..nx {
            for k in 0..nx {
                for j in 0..ny {
                    big[i * ny + j][k * ny + j] = d[i][k];
                }
            }
        }
        big.iter().map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum()).collect()
    }

    fn dense_kron_dy(op: &SbpOperator1D, nx: usize, f: &[f64]) -> Vec<f64> {
        let d = op.dense_d();
        let ny = op.n;
        let n = nx * ny;
        let mut big = vec![vec![0.0; n]; n];
        for i in 0..nx {
            for j in 0..ny {
                for l in 0..ny {
                    big[i * ny + j][i * ny + l] = d[j][l];
                }
            }
        }
        big.iter().map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum()).collect()
    }

    #[test]
    fn tensor_application_matches_dense_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (order, nx, ny) in [(Order::Second, 6, 7), (Order::Second, 8, 5), (Order::Fourth, 12, 13)] {
            for topo in [Topology::Bounded, Topology::Periodic] {
                let ox = SbpOperator1D::build(order, nx, 0.3, topo).unwrap();
                let oy = SbpOperator1D::build(order, ny, 0.7, topo).unwrap();
                let t = TensorApplicator::new(&ox, &oy);
                let f = random_field(&mut rng, nx, ny);
                let dx = t.apply_dx(&f).unwrap();
                let dy = t.apply_dy(&f).unwrap();
                for c in 0..4 {
                    let ex = dense_kron_dx(&ox, ny, f.comp(c));
                    let ey = dense_kron_dy(&oy, nx, f.comp(c));
                    for k in 0..nx * ny {
                        let sx = ex[k].abs().max(1.0 / ox.h);
                        let sy = ey[k].abs().max(1.0 / oy.h);
                        assert!((dx.comp(c)[k] - ex[k]).abs() <= 4.0 * f64::EPSILON * sx);
                        assert!((dy.comp(c)[k] - ey[k]).abs() <= 4.0 * f64::EPSILON * sy);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_and_linear_fields() {
        let grid = Grid2D::unit_square(14, 17, Topology::Bounded).unwrap();
        for order in [Order::Second, Order::Fourth] {
            let ox = SbpOperator1D::for_grid_x(&grid, order).unwrap();
            let oy = SbpOperator1D::for_grid_y(&grid, order).unwrap();
            let t = TensorApplicator::new(&ox, &oy);
            let c = Field::constant(&grid, crate::state::SkewState::new(1.0, 2.0, -3.0, 0.5));
            assert!(t.apply_dx(&c).unwrap().max_abs() < 1e-12);
            assert!(t.apply_dy(&c).unwrap().max_abs() < 1e-12);
            let lin = Field::from_fn(&grid, |x, y| crate::state::SkewState::new(x, x, 2.0 * x + y, y));
            let dx = t.apply_dx(&lin).unwrap();
            for k in 0..grid.len() {
                assert!((dx.comp(0)[k] - 1.0).abs() < 1e-12);
                assert!((dx.comp(2)[k] - 2.0).abs() < 1e-12);
                assert!(dx.comp(3)[k].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn periodic_sine_converges_fourth_order() {
        let err = |n: usize| {
            let grid = Grid2D::unit_square(n, 12, Topology::Periodic).unwrap();
            let ox = SbpOperator1D::for_grid_x(&grid, Order::Fourth).unwrap();
            let oy = SbpOperator1D::for_grid_y(&grid, Order::Fourth).unwrap();
            let t = TensorApplicator::new(&ox, &oy);
            let tau = 2.0 * std::f64::consts::PI;
            let f = Field::from_fn(&grid, |x, _| crate::state::SkewState::new((tau * x).sin(), 0.0, 0.0, 0.0));
            let d = t.apply_dx(&f).unwrap();
            (0..grid.nx)
                .map(|i| (d.get(i, 3).phi1 - tau * (tau * grid.x(i)).cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!((ratio - 16.0).abs() < 1.5, "{ratio}");
    }

    #[test]
    fn inner_product_area_and_bilinearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for topo in [Topology::Bounded, Topology::Periodic] {
            let grid = Grid2D::unit_square(13, 16, topo).unwrap();
            for order in [Order::Second, Order::Fourth] {
                let ox = SbpOperator1D::for_grid_x(&grid, order).unwrap();
                let oy = SbpOperator1D::for_grid_y(&grid, order).unwrap();
                let t = TensorApplicator::new(&ox, &oy);
                let one = Field::constant(&grid, crate::state::SkewState::new(1.0, 0.0, 0.0, 0.0));
                assert!((t.inner_product(&one, &one).unwrap() - 1.0).abs() < 1e-14);
                let (f, g, h) = (
                    random_field(&mut rng, 13, 16),
                    random_field(&mut rng, 13, 16),
                    random_field(&mut rng, 13, 16),
                );
                let (a, b) = (0.7, -1.3);
                let mut comb = f.scaled(a);
                comb.axpy(b, &h);
                let lhs = t.inner_product(&comb, &g).unwrap();
                let rhs = a * t.inner_product(&f, &g).unwrap() + b * t.inner_product(&h, &g).unwrap();
                assert!((lhs - rhs).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn discrete_integration_by_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for topo in [Topology::Bounded, Topology::Periodic] {
            for order in [Order::Second, Order::Fourth] {
                let grid = Grid2D::new((20, 15), (0.0, 2.0), (-1.0, 0.5), (topo, topo)).unwrap();
                let ox = SbpOperator1D::for_grid_x(&grid, order).unwrap();
                let oy = SbpOperator1D::for_grid_y(&grid, order).unwrap();
                let t = TensorApplicator::new(&ox, &oy);
                let u = random_field(&mut rng, 20, 15);
                let v = random_field(&mut rng, 20, 15);
                for (du, dv, bnd) in [
                    (t.apply_dx(&u).unwrap(), t.apply_dx(&v).unwrap(), t.boundary_form_x(&u, &v).unwrap()),
                    (t.apply_dy(&u).unwrap(), t.apply_dy(&v).unwrap(), t.boundary_form_y(&u, &v).unwrap()),
                ] {
                    let lhs = t.inner_product(&u, &dv).unwrap() + t.inner_product(&du, &v).unwrap();
                    let scale = t.inner_product(&u, &u).unwrap().sqrt() * t.inner_product(&dv, &dv).unwrap().sqrt();
                    assert!((lhs - bnd).abs() <= 1e-13 * scale, "{lhs} vs {bnd}");
                    if topo == Topology::Periodic {
                        assert_eq!(bnd, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let ox = SbpOperator1D::build(Order::Second, 5, 0.1, Topology::Bounded).unwrap();
        let t = TensorApplicator::new(&ox, &ox);
        assert!(matches!(t.apply_dx(&Field::zeros(5, 6)), Err(Error::Shape { .. })));
        assert!(t.inner_product(&Field::zeros(5, 5), &Field::zeros(4, 5)).is_err());
    }

    #[test]
    fn execution_modes_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ox = SbpOperator1D::build(Order::Fourth, 40, 0.1, Topology::Bounded).unwrap();
        let oy = SbpOperator1D::build(Order::Fourth, 33, 0.1, Topology::Periodic).unwrap();
        let f = random_field(&mut rng, 40, 33);
        let seq = TensorApplicator::new(&ox, &oy).with_execution(Execution::Sequential);
        let par = TensorApplicator::new(&ox, &oy).with_execution(Execution::Parallel);
        assert_eq!(seq.apply_dx(&f).unwrap(), par.apply_dx(&f).unwrap());
        assert_eq!(seq.apply_dy(&f).unwrap(), par.apply_dy(&f).unwrap());
    }

    #[test]
    fn operator_dump_lists_nonzeros() {
        let op = SbpOperator1D::build(Order::Second, 4, 1.0, Topology::Bounded).unwrap();
        let mut buf = Vec::new();
        op.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("row,weight,col,q"));
        assert_eq!(lines.next(), Some("0,0.5,0,-0.5"));
        assert_eq!(text.lines().count(), 1 + 2 + 2 + 2 + 2);
    }
}
