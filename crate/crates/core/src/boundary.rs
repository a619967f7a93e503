//! Boundary contraction of the energy rate, its rotated form and spectrum,
//! boundary-condition counts, and the weak wall penalty used by the solver.

use std::io::Write;

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrices::{atilde_unchecked, btilde_unchecked, norm_matrix, FreeParams, Mat4};
use crate::state::{sound_speed, GasModel, SkewState};

/// Outward unit normal of a boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitNormal {
    nx: f64,
    ny: f64,
}

impl UnitNormal {
    pub const EAST: UnitNormal = UnitNormal { nx: 1.0, ny: 0.0 };
    pub const WEST: UnitNormal = UnitNormal { nx: -1.0, ny: 0.0 };
    pub const NORTH: UnitNormal = UnitNormal { nx: 0.0, ny: 1.0 };
    pub const SOUTH: UnitNormal = UnitNormal { nx: 0.0, ny: -1.0 };

    pub fn new(nx: f64, ny: f64) -> Result<Self> {
        if !((nx * nx + ny * ny - 1.0).abs() <= 1e-14) {
            return Err(Error::NonUnitNormal { nx, ny });
        }
        Ok(Self { nx, ny })
    }

    pub fn from_angle(theta: f64) -> Self {
        Self {
            nx: theta.cos(),
            ny: theta.sin(),
        }
    }

    pub fn nx(&self) -> f64 {
        self.nx
    }

    pub fn ny(&self) -> f64 {
        self.ny
    }
}

/// `(phi1, phi1 u_n, phi1 u_tau, phi4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedState {
    pub phi1: f64,
    pub phi1_un: f64,
    pub phi1_ut: f64,
    pub phi4: f64,
}

impl RotatedState {
    pub fn to_array(self) -> [f64; 4] {
        [self.phi1, self.phi1_un, self.phi1_ut, self.phi4]
    }

    pub fn un(&self) -> f64 {
        self.phi1_un / self.phi1
    }

    pub fn ut(&self) -> f64 {
        self.phi1_ut / self.phi1
    }
}

/// Normal velocity `u_n = n_x u + n_y v`.
#[inline]
pub fn normal_velocity(phi: &SkewState, n: &UnitNormal) -> f64 {
    (n.nx * phi.phi2 + n.ny * phi.phi3) / phi.phi1
}

pub fn rotate(phi: &SkewState, n: &UnitNormal) -> Result<RotatedState> {
    phi.check_nonvacuum()?;
    let (u, v) = (phi.u(), phi.v());
    let un = n.nx * u + n.ny * v;
    let ut = -n.ny * u + n.nx * v;
    Ok(RotatedState {
        phi1: phi.phi1,
        phi1_un: phi.phi1 * un,
        phi1_ut: phi.phi1 * ut,
        phi4: phi.phi4,
    })
}

/// Symmetric boundary contraction matrix
/// `sym(n_x Atilde + n_y Btilde)` at zero free parameters:
///
/// ```text
/// [ a2 un   0          0          0           ]
/// [ 0       b un       0          nx (g-1) r  ]
/// [ 0       0          b un       ny (g-1) r  ]
/// [ 0       nx (g-1) r ny (g-1) r (2-g) un    ]
/// ```
/// with `b = (g-1)/2`, `r = phi4/phi1`.
pub fn boundary_matrix(phi: &SkewState, n: &UnitNormal, gas: &GasModel) -> Result<Mat4> {
    phi.check_nonvacuum()?;
    let un = normal_velocity(phi, n);
    let (g, b, r) = (gas.gamma, gas.beta2(), phi.ratio());
    let k = (g - 1.0) * r;
    Ok(Mat4([
        [gas.alpha2 * un, 0.0, 0.0, 0.0],
        [0.0, b * un, 0.0, n.nx * k],
        [0.0, 0.0, b * un, n.ny * k],
        [0.0, n.nx * k, n.ny * k, (2.0 - g) * un],
    ]))
}

/// `n_x Atilde + n_y Btilde` as assembled (not symmetrised).
pub fn boundary_matrix_unsymmetrized(
    phi: &SkewState,
    n: &UnitNormal,
    gas: &GasModel,
    fp: &FreeParams,
) -> Result<Mat4> {
    phi.check_nonvacuum()?;
    Ok(atilde_unchecked(phi, gas, fp).scale(n.nx) + btilde_unchecked(phi, gas, fp).scale(n.ny))
}

/// Contraction matrix in the rotated frame; acts on [`RotatedState`].
pub fn rotated_boundary_matrix(phi: &SkewState, n: &UnitNormal, gas: &GasModel) -> Result<Mat4> {
    phi.check_nonvacuum()?;
    let un = normal_velocity(phi, n);
    let (g, b) = (gas.gamma, gas.beta2());
    let k = (g - 1.0) * phi.ratio();
    Ok(Mat4([
        [gas.alpha2 * un, 0.0, 0.0, 0.0],
        [0.0, b * un, 0.0, k],
        [0.0, 0.0, b * un, 0.0],
        [0.0, k, 0.0, (2.0 - g) * un],
    ]))
}

/// Quadratic form of the free-parameter part of `n_x Atilde + n_y Btilde`.
/// Identically zero in exact arithmetic.
pub fn free_param_contraction(phi: &SkewState, n: &UnitNormal, fp: &FreeParams) -> f64 {
    free_param_matrix(phi, n, fp).quad_form(&phi.to_array())
}

pub(crate) fn free_param_matrix(phi: &SkewState, n: &UnitNormal, fp: &FreeParams) -> Mat4 {
    let [p1, p2, p3, p4] = phi.to_array();
    let a = n.nx * fp.a12;
    let b = n.ny * fp.b13;
    let c = n.nx * fp.a14 + n.ny * fp.b14;
    Mat4([
        [0.0, a * p2, b * p3, c * p4],
        [-2.0 * a * p2, a * p1, 0.0, 0.0],
        [-2.0 * b * p3, 0.0, b * p1, 0.0],
        [-2.0 * c * p4, 0.0, 0.0, c * p1],
    ])
}

/// `u_n (a2 phi1^2 + (g-1)/2 (phi2^2 + phi3^2) + g phi4^2)`.
///
/// Non-finite when `phi1 = 0`.
pub fn expanded_contraction(phi: &SkewState, n: &UnitNormal, gas: &GasModel) -> f64 {
    let un = normal_velocity(phi, n);
    un * (gas.alpha2 * phi.phi1 * phi.phi1
        + gas.beta2() * (phi.phi2 * phi.phi2 + phi.phi3 * phi.phi3)
        + gas.gamma * phi.phi4 * phi.phi4)
}

/// Regime threshold `b = sqrt(2 (g-1) / (g (2-g)))` on the normal Mach number.
pub fn threshold_b(gas: &GasModel) -> f64 {
    threshold_b2(gas).sqrt()
}

fn threshold_b2(gas: &GasModel) -> f64 {
    let g = gas.gamma;
    2.0 * (g - 1.0) / (g * (2.0 - g))
}

fn a2_coeff(gas: &GasModel) -> f64 {
    let g = gas.gamma;
    (g - 1.0) * (2.0 - g) / 2.0
}

/// Closed-form spectrum of the rotated contraction matrix:
/// `a2 un`, `(g-1)/2 un`, and
/// `(3-g)/4 un +- sqrt(((3-g)/4 un)^2 - a^2 c^2 (Mn^2 - b^2))`.
///
/// The last pair is returned as complex numbers; the discriminant is
/// nonnegative whenever `c` is the actual sound speed, but the formula is
/// evaluated as given for arbitrary `(un, c)`.
pub fn closed_form_eigenvalues(un: f64, c: f64, gas: &GasModel) -> Result<[Complex64; 4]> {
    if !(c > 0.0) {
        return Err(Error::Domain {
            quantity: "sound speed",
            value: c,
        });
    }
    let a2 = a2_coeff(gas);
    if !(a2 > 0.0) {
        return Err(Error::Model(format!("a^2 = {a2} is not positive")));
    }
    let mn = un / c;
    let half_trace = (3.0 - gas.gamma) / 4.0 * un;
    let disc = half_trace * half_trace - a2 * c * c * (mn * mn - threshold_b2(gas));
    let root = Complex64::new(disc, 0.0).sqrt();
    Ok([
        Complex64::new(gas.alpha2 * un, 0.0),
        Complex64::new(gas.beta2() * un, 0.0),
        half_trace + root,
        half_trace - root,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcRegimeReport {
    pub un: f64,
    pub mn: f64,
    pub b: f64,
    pub eigenvalues: [Complex64; 4],
    /// Sign of the real part of each eigenvalue (-1, 0, 1).
    pub eigenvalue_signs: [i8; 4],
    /// Conditions suggested by counting negative eigenvalues.
    pub eig_count_negative: usize,
    /// Conditions needed according to the expanded contraction: none when
    /// `u_n >= 0`; for inflow the eigenvalue count is reported.
    pub nonlinear_bc_needed: usize,
    /// Set when `lambda_3,4` came out complex.
    pub complex_pair: bool,
}

pub fn required_bc_count(un: f64, c: f64, gas: &GasModel) -> Result<BcRegimeReport> {
    let eigenvalues = closed_form_eigenvalues(un, c, gas)?;
    let eigenvalue_signs = eigenvalues.map(|l| {
        if l.re > 0.0 {
            1
        } else if l.re < 0.0 {
            -1
        } else {
            0
        }
    });
    let eig_count_negative = eigenvalue_signs.iter().filter(|&&s| s < 0).count();
    Ok(BcRegimeReport {
        un,
        mn: un / c,
        b: threshold_b(gas),
        eigenvalues,
        eigenvalue_signs,
        eig_count_negative,
        nonlinear_bc_needed: if un >= 0.0 { 0 } else { eig_count_negative },
        complex_pair: eigenvalues[2].im != 0.0,
    })
}

/// Multiset distance between the numerical spectrum of the rotated
/// contraction matrix and the closed forms, relative to the spectral radius.
pub fn eigenvalue_crosscheck(phi: &SkewState, n: &UnitNormal, gas: &GasModel) -> Result<f64> {
    let m = rotated_boundary_matrix(phi, n, gas)?;
    let numeric = SymmetricEigen::new(Matrix4::from_fn(|r, c| m[(r, c)])).eigenvalues;
    let mut numeric: Vec<f64> = numeric.iter().copied().collect();
    let c = sound_speed(phi, gas)?;
    let un = normal_velocity(phi, n);
    let mut closed = closed_form_eigenvalues(un, c, gas)?.to_vec();
    numeric.sort_by(f64::total_cmp);
    closed.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let scale = numeric
        .iter()
        .fold(0.0_f64, |s, l| s.max(l.abs()))
        .max(f64::MIN_POSITIVE);
    let dist = numeric
        .iter()
        .zip(&closed)
        .map(|(x, z)| (Complex64::new(*x, 0.0) - z).norm())
        .fold(0.0, f64::max);
    Ok(dist / scale)
}

/// Weak wall penalty on the normal momentum.
///
/// Returns `-sigma s (0, n_x, n_y, 0) (n_x phi2 + n_y phi3)` with the local
/// scale `s = (g-1) |phi4/phi1|`; the solver divides it by the 1D boundary
/// quadrature weight. Its contribution to the energy rate,
/// `2 Phi^T P penalty = -2 sigma s (g-1)/2 (phi1 u_n)^2`, is never positive
/// for `sigma >= 0`.
pub fn wall_sat_penalty(phi: &SkewState, n: &UnitNormal, gas: &GasModel, sigma: f64) -> [f64; 4] {
    let s = (gas.gamma - 1.0) * (phi.phi4 / phi.phi1).abs();
    let mom = n.nx * phi.phi2 + n.ny * phi.phi3;
    let k = -sigma * s * mom;
    [0.0, k * n.nx, k * n.ny, 0.0]
}

/// `2 Phi^T P penalty` at one node.
pub fn penalty_energy_rate(phi: &SkewState, penalty: &[f64; 4], gas: &GasModel) -> f64 {
    let p = norm_matrix(gas);
    2.0 * crate::matrices::dot(&p.apply(&phi.to_array()), penalty)
}

/// One row of a normal-Mach sweep at unit sound speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub mn: f64,
    pub report: BcRegimeReport,
}

/// `steps + 1` evenly spaced normal Mach numbers from `mn_min` to `mn_max`.
pub fn regime_sweep(gas: &GasModel, mn_min: f64, mn_max: f64, steps: usize) -> Result<Vec<SweepRow>> {
    if steps == 0 {
        return Err(Error::config(None, "sweep needs at least one step"));
    }
    if !(mn_min.is_finite() && mn_max.is_finite() && mn_max >= mn_min) {
        return Err(Error::config(None, format!("invalid Mach range [{mn_min}, {mn_max}]")));
    }
    (0..=steps)
        .map(|k| {
            let mn = mn_min + (mn_max - mn_min) * k as f64 / steps as f64;
            Ok(SweepRow {
                mn,
                report: required_bc_count(mn, 1.0, gas)?,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "Mn,lambda1,lambda2,re_lambda3,im_lambda3,re_lambda4,im_lambda4,neg_count")?;
    for r in rows {
        let l = &r.report.eigenvalues;
        writeln!(
            w,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            r.mn, l[0].re, l[1].re, l[2].re, l[2].im, l[3].re, l[3].im, r.report.eig_count_negative
        )?;
    }
    Ok(())
}
