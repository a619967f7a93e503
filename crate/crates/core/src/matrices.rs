//! Point-wise 4x4 coefficient matrices of the square-root-variable Euler
//! system and numerical checks of the algebraic identities behind the
//! energy estimate.
//!
//! Conventions: `Phi_t + A Phi_x + B Phi_y = 0` is the quasi-linear form;
//! `Atilde`, `Btilde` satisfy `(Atilde Phi)_x + Atilde^T Phi_x = 2 P A Phi_x`
//! (and the analogous y relation) with `P = diag(alpha^2, (g-1)/2, (g-1)/2, 1)`;
//! the split form used by the scheme is
//! `Phi_t + (A1 Phi)_x + A2 Phi_x + (B1 Phi)_y + B2 Phi_y = 0`.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::error::{Error, Result};
use crate::state::{GasModel, SkewState};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat4(pub [[f64; 4]; 4]);

impl Mat4 {
    pub const ZERO: Mat4 = Mat4([[0.0; 4]; 4]);

    pub fn identity() -> Self {
        Self::diag([1.0; 4])
    }

    pub fn diag(d: [f64; 4]) -> Self {
        let mut m = Self::ZERO;
        for (k, v) in d.into_iter().enumerate() {
            m.0[k][k] = v;
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::ZERO;
        for r in 0..4 {
            for c in 0..4 {
                t.0[c][r] = self.0[r][c];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|v| *v *= s);
        m
    }

    /// Scales row `r` by `d[r]`, i.e. `diag(d) * self`.
    pub fn scale_rows(&self, d: [f64; 4]) -> Self {
        let mut m = *self;
        for (row, s) in m.0.iter_mut().zip(d) {
            row.iter_mut().for_each(|v| *v *= s);
        }
        m
    }

    #[inline]
    pub fn mul_vec(&self, x: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|r| {
            let row = &self.0[r];
            row[0] * x[0] + row[1] * x[1] + row[2] * x[2] + row[3] * x[3]
        })
    }

    /// `x^T M x`.
    pub fn quad_form(&self, x: &[f64; 4]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(M + M^T) / 2`.
    pub fn symmetric_part(&self) -> Self {
        (*self + self.transpose()).scale(0.5)
    }

    pub fn matmul(&self, rhs: &Mat4) -> Mat4 {
        let mut m = Self::ZERO;
        for r in 0..4 {
            for c in 0..4 {
                m.0[r][c] = (0..4).map(|k| self.0[r][k] * rhs.0[k][c]).sum();
            }
        }
        m
    }
}

impl Index<(usize, usize)> for Mat4 {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.0[r][c]
    }
}

impl IndexMut<(usize, usize)> for Mat4 {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.0[r][c]
    }
}

impl Add for Mat4 {
    type Output = Mat4;
    fn add(mut self, rhs: Mat4) -> Mat4 {
        self.0
            .iter_mut()
            .flatten()
            .zip(rhs.0.iter().flatten())
            .for_each(|(a, b)| *a += b);
        self
    }
}

impl Sub for Mat4 {
    type Output = Mat4;
    fn sub(self, rhs: Mat4) -> Mat4 {
        self + rhs.scale(-1.0)
    }
}

impl Mul<f64> for Mat4 {
    type Output = Mat4;
    fn mul(self, s: f64) -> Mat4 {
        self.scale(s)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

pub(crate) fn inf_norm(v: &[f64; 4]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Diagonal energy weight `diag(alpha^2, (gamma-1)/2, (gamma-1)/2, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormMatrix(pub [f64; 4]);

impl NormMatrix {
    pub fn diag(&self) -> [f64; 4] {
        self.0
    }

    pub fn inverse_diag(&self) -> [f64; 4] {
        self.0.map(|d| 1.0 / d)
    }

    pub fn as_mat(&self) -> Mat4 {
        Mat4::diag(self.0)
    }

    pub fn apply(&self, x: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|k| self.0[k] * x[k])
    }

    /// `x^T P x`.
    pub fn quad_form(&self, x: &[f64; 4]) -> f64 {
        self.0.iter().zip(x).map(|(d, v)| d * v * v).sum()
    }
}

pub fn norm_matrix(gas: &GasModel) -> NormMatrix {
    let b = gas.beta2();
    NormMatrix([gas.alpha2, b, b, 1.0])
}

/// The four coefficients that drop out of the energy rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreeParams {
    pub a12: f64,
    pub a14: f64,
    pub b13: f64,
    pub b14: f64,
}

impl FreeParams {
    pub fn new(a12: f64, a14: f64, b13: f64, b14: f64) -> Self {
        Self { a12, a14, b13, b14 }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }

    pub fn max_abs(&self) -> f64 {
        [self.a12, self.a14, self.b13, self.b14]
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    X,
    Y,
}

/// Quasi-linear x matrix read off the scalar transformed equations.
pub fn coeff_a(phi: &SkewState, gas: &GasModel) -> Result<Mat4> {
    phi.check_nonvacuum()?;
    Ok(coeff_a_unchecked(phi, gas))
}

/// Quasi-linear y matrix. Row 3 is `[-v^2, 0, 3v, 4 phi4/phi1] / 2`, which is
/// what the scalar equation for `phi3` requires.
pub fn coeff_b(phi: &SkewState, gas: &GasModel) -> Result<Mat4> {
    phi.check_nonvacuum()?;
    Ok(coeff_b_unchecked(phi, gas))
}

pub(crate) fn coeff_a_unchecked(phi: &SkewState, gas: &GasModel) -> Mat4 {
    let (u, v, r, g) = (phi.u(), phi.v(), phi.ratio(), gas.gamma);
    Mat4([
        [u, 1.0, 0.0, 0.0],
        [-u * u, 3.0 * u, 0.0, 4.0 * r],
        [-u * v, v, 2.0 * u, 0.0],
        [-g * u * r, g * r, 0.0, 2.0 * u],
    ])
    .scale(0.5)
}

pub(crate) fn coeff_b_unchecked(phi: &SkewState, gas: &GasModel) -> Mat4 {
    let (u, v, r, g) = (phi.u(), phi.v(), phi.ratio(), gas.gamma);
    Mat4([
        [v, 0.0, 1.0, 0.0],
        [-u * v, 2.0 * v, u, 0.0],
        [-v * v, 0.0, 3.0 * v, 4.0 * r],
        [-g * v * r, 0.0, g * r, 2.0 * v],
    ])
    .scale(0.5)
}

pub fn coeff_atilde(phi: &SkewState, gas: &GasModel, fp: &FreeParams) -> Result<Mat4> {
    phi.check_nonvacuum()?;
    Ok(atilde_unchecked(phi, gas, fp))
}

pub fn coeff_btilde(phi: &SkewState, gas: &GasModel, fp: &FreeParams) -> Result<Mat4> {
    phi.check_nonvacuum()?;
    Ok(btilde_unchecked(phi, gas, fp))
}

pub(crate) fn atilde_unchecked(phi: &SkewState, gas: &GasModel, fp: &FreeParams) -> Mat4 {
    let [p1, p2, _, p4] = phi.to_array();
    let (u, r, g, b) = (phi.u(), phi.ratio(), gas.gamma, gas.beta2());
    let (a12, a14) = (fp.a12, fp.a14);
    Mat4([
        [gas.alpha2 * u, a12 * p2, 0.0, a14 * p4],
        [-2.0 * a12 * p2, a12 * p1 + b * u, 0.0, 0.0],
        [0.0, 0.0, b * u, 0.0],
        [-2.0 * a14 * p4, 2.0 * (g - 1.0) * r, 0.0, a14 * p1 + (2.0 - g) * u],
    ])
}

pub(crate) fn btilde_unchecked(phi: &SkewState, gas: &GasModel, fp: &FreeParams) -> Mat4 {
    let [p1, _, p3, p4] = phi.to_array();
    let (v, r, g, b) = (phi.v(), phi.ratio(), gas.gamma, gas.beta2());
    let (b13, b14) = (fp.b13, fp.b14);
    Mat4([
        [gas.alpha2 * v, 0.0, b13 * p3, b14 * p4],
        [0.0, b * v, 0.0, 0.0],
        [-2.0 * b13 * p3, 0.0, b13 * p1 + b * v, 0.0],
        [-2.0 * b14 * p4, 0.0, 2.0 * (g - 1.0) * r, b14 * p1 + (2.0 - g) * v],
    ])
}

/// `d Atilde / d phi_k` (k = 0..4), entries differentiated analytically.
pub fn atilde_partial(phi: &SkewState, gas: &GasModel, fp: &FreeParams, k: usize) -> Mat4 {
    let [p1, p2, _, p4] = phi.to_array();
    let (g, b, a2) = (gas.gamma, gas.beta2(), gas.alpha2);
    let inv = 1.0 / p1;
    let inv2 = inv * inv;
    let mut m = Mat4::ZERO;
    match k {
        0 => {
            m[(0, 0)] = -a2 * p2 * inv2;
            m[(1, 1)] = fp.a12 - b * p2 * inv2;
            m[(2, 2)] = -b * p2 * inv2;
            m[(3, 1)] = -2.0 * (g - 1.0) * p4 * inv2;
            m[(3, 3)] = fp.a14 - (2.0 - g) * p2 * inv2;
        }
        1 => {
            m[(0, 0)] = a2 * inv;
            m[(0, 1)] = fp.a12;
            m[(1, 0)] = -2.0 * fp.a12;
            m[(1, 1)] = b * inv;
            m[(2, 2)] = b * inv;
            m[(3, 3)] = (2.0 - g) * inv;
        }
        2 => {}
        3 => {
            m[(0, 3)] = fp.a14;
            m[(3, 0)] = -2.0 * fp.a14;
            m[(3, 1)] = 2.0 * (g - 1.0) * inv;
        }
        _ => panic!("component index {k} out of range"),
    }
    m
}

/// `d Btilde / d phi_k` (k = 0..4).
pub fn btilde_partial(phi: &SkewState, gas: &GasModel, fp: &FreeParams, k: usize) -> Mat4 {
    let [p1, _, p3, p4] = phi.to_array();
    let (g, b, a2) = (gas.gamma, gas.beta2(), gas.alpha2);
    let inv = 1.0 / p1;
    let inv2 = inv * inv;
    let mut m = Mat4::ZERO;
    match k {
        0 => {
            m[(0, 0)] = -a2 * p3 * inv2;
            m[(1, 1)] = -b * p3 * inv2;
            m[(2, 2)] = fp.b13 - b * p3 * inv2;
            m[(3, 2)] = -2.0 * (g - 1.0) * p4 * inv2;
            m[(3, 3)] = fp.b14 - (2.0 - g) * p3 * inv2;
        }
        1 => {}
        2 => {
            m[(0, 0)] = a2 * inv;
            m[(0, 2)] = fp.b13;
            m[(2, 0)] = -2.0 * fp.b13;
            m[(1, 1)] = b * inv;
            m[(2, 2)] = b * inv;
            m[(3, 3)] = (2.0 - g) * inv;
        }
        3 => {
            m[(0, 3)] = fp.b14;
            m[(3, 0)] = -2.0 * fp.b14;
            m[(3, 2)] = 2.0 * (g - 1.0) * inv;
        }
        _ => panic!("component index {k} out of range"),
    }
    m
}

fn directional(partial: impl Fn(usize) -> Mat4, dphi: &[f64; 4]) -> Mat4 {
    (0..4).fold(Mat4::ZERO, |acc, k| acc + partial(k).scale(dphi[k]))
}

/// `sum_k dAtilde/dphi_k * dphi_k`.
pub fn atilde_directional(phi: &SkewState, dphi: &[f64; 4], gas: &GasModel, fp: &FreeParams) -> Mat4 {
    directional(|k| atilde_partial(phi, gas, fp, k), dphi)
}

pub fn btilde_directional(phi: &SkewState, dphi: &[f64; 4], gas: &GasModel, fp: &FreeParams) -> Mat4 {
    directional(|k| btilde_partial(phi, gas, fp, k), dphi)
}

/// The four matrices of the split form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitMatrices {
    pub a1: Mat4,
    pub a2: Mat4,
    pub b1: Mat4,
    pub b2: Mat4,
}

/// Split matrices with the free parameters set to zero, written out entry by
/// entry. They no longer depend on `alpha^2`.
pub fn split_matrices(phi: &SkewState, gas: &GasModel) -> Result<SplitMatrices> {
    phi.check_nonvacuum()?;
    Ok(split_unchecked(phi, gas))
}

pub(crate) fn split_unchecked(phi: &SkewState, gas: &GasModel) -> SplitMatrices {
    let (u, v, r, g) = (phi.u(), phi.v(), phi.ratio(), gas.gamma);
    let k = 2.0 * (g - 1.0) * r;
    let a1 = Mat4([
        [u, 0.0, 0.0, 0.0],
        [0.0, u, 0.0, 0.0],
        [0.0, 0.0, u, 0.0],
        [0.0, k, 0.0, (2.0 - g) * u],
    ])
    .scale(0.5);
    let a2 = Mat4([
        [u, 0.0, 0.0, 0.0],
        [0.0, u, 0.0, 4.0 * r],
        [0.0, 0.0, u, 0.0],
        [0.0, 0.0, 0.0, (2.0 - g) * u],
    ])
    .scale(0.5);
    let b1 = Mat4([
        [v, 0.0, 0.0, 0.0],
        [0.0, v, 0.0, 0.0],
        [0.0, 0.0, v, 0.0],
        [0.0, 0.0, k, (2.0 - g) * v],
    ])
    .scale(0.5);
    let b2 = Mat4([
        [v, 0.0, 0.0, 0.0],
        [0.0, v, 0.0, 0.0],
        [0.0, 0.0, v, 4.0 * r],
        [0.0, 0.0, 0.0, (2.0 - g) * v],
    ])
    .scale(0.5);
    SplitMatrices { a1, a2, b1, b2 }
}

/// Split matrices built from the definitions `A1 = P^-1 Atilde / 2`,
/// `A2 = P^-1 Atilde^T / 2`, `B1 = P^-1 Btilde / 2`, `B2 = P^-1 Btilde^T / 2`
/// for arbitrary free parameters.
pub fn split_matrices_with(phi: &SkewState, gas: &GasModel, fp: &FreeParams) -> Result<SplitMatrices> {
    phi.check_nonvacuum()?;
    Ok(split_with_unchecked(phi, gas, fp))
}

pub(crate) fn split_with_unchecked(phi: &SkewState, gas: &GasModel, fp: &FreeParams) -> SplitMatrices {
    let pinv = norm_matrix(gas).inverse_diag().map(|d| 0.5 * d);
    let at = atilde_unchecked(phi, gas, fp);
    let bt = btilde_unchecked(phi, gas, fp);
    SplitMatrices {
        a1: at.scale_rows(pinv),
        a2: at.transpose().scale_rows(pinv),
        b1: bt.scale_rows(pinv),
        b2: bt.transpose().scale_rows(pinv),
    }
}

/// Point-wise residual of the skew identity together with the magnitude of
/// its largest term, for relative comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResidual {
    pub residual: [f64; 4],
    pub scale: f64,
}

impl IdentityResidual {
    pub fn max_abs(&self) -> f64 {
        inf_norm(&self.residual)
    }

    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.max_abs()
        } else {
            self.max_abs() / self.scale
        }
    }
}

/// `r = (dM . dPhi) Phi + M dPhi + M^T dPhi - 2 P K dPhi`, where `M` is
/// `Atilde` and `K` is `A` for [`Direction::X`] (`Btilde`, `B` for y). Vanishes
/// for every `(Phi, dPhi)` when the skew matrices are correct.
pub fn skew_identity_residual(
    phi: &SkewState,
    dphi: &[f64; 4],
    gas: &GasModel,
    fp: &FreeParams,
    dir: Direction,
) -> Result<IdentityResidual> {
    phi.check_nonvacuum()?;
    let (m, dm, k) = match dir {
        Direction::X => (
            atilde_unchecked(phi, gas, fp),
            atilde_directional(phi, dphi, gas, fp),
            coeff_a_unchecked(phi, gas),
        ),
        Direction::Y => (
            btilde_unchecked(phi, gas, fp),
            btilde_directional(phi, dphi, gas, fp),
            coeff_b_unchecked(phi, gas),
        ),
    };
    Ok(identity_residual_from(phi, dphi, gas, &m, &dm, &k))
}

pub(crate) fn identity_residual_from(
    phi: &SkewState,
    dphi: &[f64; 4],
    gas: &GasModel,
    m: &Mat4,
    dm: &Mat4,
    k: &Mat4,
) -> IdentityResidual {
    let p = norm_matrix(gas);
    let terms = [
        dm.mul_vec(&phi.to_array()),
        m.mul_vec(dphi),
        m.transpose().mul_vec(dphi),
        p.apply(&k.mul_vec(dphi)).map(|x| -2.0 * x),
    ];
    let residual = std::array::from_fn(|r| terms.iter().map(|t| t[r]).sum());
    let scale = terms.iter().map(inf_norm).fold(0.0, f64::max);
    IdentityResidual { residual, scale }
}

/// Outcome of checking `B_i = A_i^T` and `C + C^T = 0` over sample states.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewConditionReport {
    /// `max_i max_samples ||B_i - A_i^T||_inf`.
    pub max_transpose_violation: f64,
    /// `max_samples ||C + C^T||_inf`.
    pub max_c_violation: f64,
    /// Largest entry of any checked matrix; tolerances are relative to it.
    pub scale: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub type MatrixFn<'a> = &'a dyn Fn(&SkewState) -> Mat4;

/// Checks the sufficient conditions for energy conservation of
/// `P U_t + (A_i U)_{x_i} + B_i U_{x_i} + C U = 0` at each sample state.
pub fn check_general_skew_conditions(
    a: &[MatrixFn<'_>],
    b: &[MatrixFn<'_>],
    c: MatrixFn<'_>,
    samples: &[SkewState],
) -> Result<SkewConditionReport> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: (a.len(), 1),
            found: (b.len(), 1),
        });
    }
    if samples.is_empty() {
        return Err(Error::Parse("empty sample set".into()));
    }
    let mut worst_t: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for s in samples {
        for (af, bf) in a.iter().zip(b) {
            let (am, bm) = (af(s), bf(s));
            scale = scale.max(am.max_abs()).max(bm.max_abs());
            worst_t = worst_t.max((bm - am.transpose()).max_abs());
        }
        let cm = c(s);
        scale = scale.max(cm.max_abs());
        worst_c = worst_c.max((cm + cm.transpose()).max_abs());
    }
    let tolerance = 1e-13 * scale.max(1.0);
    Ok(SkewConditionReport {
        max_transpose_violation: worst_t,
        max_c_violation: worst_c,
        scale,
        tolerance,
        passed: worst_t <= tolerance && worst_c <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng) -> SkewState {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        SkewState::new(
            sign * rng.random_range(0.2..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        )
    }

    fn random_vec(rng: &mut ChaCha8Rng) -> [f64; 4] {
        std::array::from_fn(|_| rng.random_range(-2.0..2.0))
    }

    fn random_fp(rng: &mut ChaCha8Rng) -> FreeParams {
        FreeParams::new(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
        )
    }

    /// x-derivative terms of the four scalar transformed equations, typed in
    /// directly from the equations rather than from the matrix.
    fn scalar_x_terms(phi: &SkewState, d: &[f64; 4], gamma: f64) -> [f64; 4] {
        let (u, v, r) = (phi.u(), phi.v(), phi.ratio());
        [
            0.5 * u * d[0] + 0.5 * d[1],
            -0.5 * u * u * d[0] + 1.5 * u * d[1] + 2.0 * r * d[3],
            -0.5 * v * u * d[0] + 0.5 * v * d[1] + u * d[2],
            -0.5 * gamma * u * r * d[0] + 0.5 * gamma * r * d[1] + u * d[3],
        ]
    }

    fn scalar_y_terms(phi: &SkewState, d: &[f64; 4], gamma: f64) -> [f64; 4] {
        let (u, v, r) = (phi.u(), phi.v(), phi.ratio());
        [
            0.5 * v * d[0] + 0.5 * d[2],
            -0.5 * u * v * d[0] + v * d[1] + 0.5 * u * d[2],
            -0.5 * v * v * d[0] + 1.5 * v * d[2] + 2.0 * r * d[3],
            -0.5 * gamma * v * r * d[0] + 0.5 * gamma * r * d[2] + v * d[3],
        ]
    }

    fn assert_close4(a: &[f64; 4], b: &[f64; 4], tol: f64) {
        let scale = inf_norm(a).max(inf_norm(b)).max(1.0);
        for k in 0..4 {
            assert!((a[k] - b[k]).abs() <= tol * scale, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn coeff_a_at_rest() {
        let a = coeff_a(&SkewState::new(1.0, 0.0, 0.0, 1.0), &GasModel::air()).unwrap();
        let expect = Mat4([
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 4.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 1.4, 0.0, 0.0],
        ])
        .scale(0.5);
        assert_eq!(a, expect);
    }

    #[test]
    fn coeff_a_ratio_entry() {
        let a = coeff_a(&SkewState::new(2.0, 2.0, 4.0, 3.0), &GasModel::air()).unwrap();
        assert_eq!(a[(1, 3)], 3.0);
    }

    #[test]
    fn quasi_linear_matrices_match_scalar_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let phi = random_state(&mut rng);
            let d = random_vec(&mut rng);
            let gas = GasModel::new(rng.random_range(1.05..1.95), 1.0).unwrap();
            assert_close4(
                &coeff_a(&phi, &gas).unwrap().mul_vec(&d),
                &scalar_x_terms(&phi, &d, gas.gamma),
                1e-14,
            );
            assert_close4(
                &coeff_b(&phi, &gas).unwrap().mul_vec(&d),
                &scalar_y_terms(&phi, &d, gas.gamma),
                1e-14,
            );
        }
    }

    #[test]
    fn b_is_a_with_velocities_swapped() {
        // S swaps components 2 and 3; B(Phi) = S A(S Phi) S.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let swap = |m: Mat4| {
            let mut out = Mat4::ZERO;
            let perm = [0, 2, 1, 3];
            for r in 0..4 {
                for c in 0..4 {
                    out[(r, c)] = m[(perm[r], perm[c])];
                }
            }
            out
        };
        for _ in 0..50 {
            let phi = random_state(&mut rng);
            let fp = random_fp(&mut rng);
            let sphi = SkewState::new(phi.phi1, phi.phi3, phi.phi2, phi.phi4);
            let gas = GasModel::air();
            let b = coeff_b(&phi, &gas).unwrap();
            assert!((b - swap(coeff_a(&sphi, &gas).unwrap())).max_abs() < 1e-15);
            let fpx = FreeParams::new(fp.b13, fp.b14, 0.0, 0.0);
            let bt = coeff_btilde(&phi, &gas, &fp).unwrap();
            assert!((bt - swap(coeff_atilde(&sphi, &gas, &fpx).unwrap())).max_abs() < 1e-15);
        }
    }

    #[test]
    fn atilde_at_rest() {
        let at = coeff_atilde(
            &SkewState::new(1.0, 0.0, 0.0, 1.0),
            &GasModel::air(),
            &FreeParams::default(),
        )
        .unwrap();
        let mut expect = Mat4::ZERO;
        expect[(3, 1)] = 2.0 * (1.4 - 1.0);
        assert_eq!(at, expect);
        assert!((at[(3, 1)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn atilde_first_row_symmetric_part_vanishes_without_free_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let phi = random_state(&mut rng);
            let s = coeff_atilde(&phi, &GasModel::air(), &FreeParams::default())
                .unwrap()
                .symmetric_part();
            assert_eq!((s[(0, 1)], s[(0, 2)], s[(0, 3)]), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn atilde_free_param_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let phi = random_state(&mut rng);
            let fp = random_fp(&mut rng);
            let at = coeff_atilde(&phi, &GasModel::air(), &fp).unwrap();
            assert_eq!(at[(1, 0)], -2.0 * fp.a12 * phi.phi2);
            assert_eq!(at[(0, 1)], fp.a12 * phi.phi2);
        }
    }

    #[test]
    fn norm_matrix_values() {
        let p = norm_matrix(&GasModel::air());
        assert_eq!(p.0[0], 1.0);
        assert!((p.0[1] - 0.2).abs() < 1e-16 && (p.0[2] - 0.2).abs() < 1e-16);
        assert_eq!(p.0[3], 1.0);
        let p = norm_matrix(&GasModel::new(5.0 / 3.0, 2.0).unwrap());
        assert_eq!(p.0[0], 2.0);
        assert!((p.0[1] - 1.0 / 3.0).abs() < 1e-15);
        let near = norm_matrix(&GasModel::new(1.0 + 1e-12, 1.0).unwrap());
        assert!(near.0[1] < 1e-12 && near.0[1] > 0.0);
    }

    #[test]
    fn split_matrices_at_rest() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let phi = SkewState::new(rng.random_range(0.5..2.0), 0.0, 0.0, rng.random_range(0.1..2.0));
            let s = split_matrices(&phi, &GasModel::air()).unwrap();
            for m in [s.a1, s.a2, s.b1, s.b2] {
                assert!((0..4).all(|k| m[(k, k)] == 0.0));
            }
            assert!((s.a2[(1, 3)] - 2.0 * phi.phi4 / phi.phi1).abs() < 1e-15);
        }
    }

    #[test]
    fn split_matrices_match_definitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let phi = random_state(&mut rng);
            let gas = GasModel::new(rng.random_range(1.05..1.95), rng.random_range(0.1..5.0)).unwrap();
            let zero = FreeParams::default();
            let explicit = split_matrices(&phi, &gas).unwrap();
            let defined = split_matrices_with(&phi, &gas, &zero).unwrap();
            let scale = explicit.a1.max_abs().max(explicit.a2.max_abs()).max(1.0);
            for (e, d) in [
                (explicit.a1, defined.a1),
                (explicit.a2, defined.a2),
                (explicit.b1, defined.b1),
                (explicit.b2, defined.b2),
            ] {
                assert!((e - d).max_abs() <= 1e-15 * scale, "{e:?}\n{d:?}");
            }
            let p = norm_matrix(&gas).diag();
            let at = coeff_atilde(&phi, &gas, &zero).unwrap();
            assert!((explicit.a1.scale_rows(p) - at.scale(0.5)).max_abs() <= 1e-15 * scale);
            assert!((explicit.a2.scale_rows(p) - at.transpose().scale(0.5)).max_abs() <= 1e-15 * scale);
            let pa1 = explicit.a1.scale_rows(p);
            let pa2 = explicit.a2.scale_rows(p);
            assert!((pa2 - pa1.transpose()).max_abs() <= 1e-15 * scale);
            // sum against the explicit matrices
            let (u, r, g) = (phi.u(), phi.ratio(), gas.gamma);
            let sum = Mat4([
                [u, 0.0, 0.0, 0.0],
                [0.0, u, 0.0, 2.0 * r],
                [0.0, 0.0, u, 0.0],
                [0.0, (g - 1.0) * r, 0.0, (2.0 - g) * u],
            ]);
            assert!(((explicit.a1 + explicit.a2) - sum).max_abs() <= 1e-15 * scale);
        }
    }

    #[test]
    fn skew_identity_zero_gradient() {
        let r = skew_identity_residual(
            &SkewState::new(1.3, 0.2, -0.7, 0.9),
            &[0.0; 4],
            &GasModel::air(),
            &FreeParams::new(1.0, 2.0, 3.0, 4.0),
            Direction::X,
        )
        .unwrap();
        assert_eq!(r.residual, [0.0; 4]);
    }

    #[test]
    fn skew_identity_holds_for_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let gammas = [1.4, std::f64::consts::SQRT_2, 5.0 / 3.0];
        for it in 0..1000 {
            let gas = GasModel::new(gammas[it % 3], rng.random_range(0.1..4.0)).unwrap();
            let phi = random_state(&mut rng);
            let d = random_vec(&mut rng);
            let fp = random_fp(&mut rng);
            for dir in [Direction::X, Direction::Y] {
                let r = skew_identity_residual(&phi, &d, &gas, &fp, dir).unwrap();
                assert!(r.relative() <= 1e-12, "{dir:?} {r:?}");
            }
        }
    }

    #[test]
    fn misprinted_b_row_breaks_y_identity() {
        // Row 3 of B as typeset puts 3v in column 2.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let phi = random_state(&mut rng);
            let d = random_vec(&mut rng);
            let gas = GasModel::air();
            let fp = FreeParams::default();
            let mut b = coeff_b(&phi, &gas).unwrap();
            let v = phi.v();
            b[(2, 1)] = 1.5 * v;
            b[(2, 2)] = 0.0;
            let r = identity_residual_from(
                &phi,
                &d,
                &gas,
                &coeff_btilde(&phi, &gas, &fp).unwrap(),
                &btilde_directional(&phi, &d, &gas, &fp),
                &b,
            );
            worst = worst.max(r.relative());
        }
        assert!(worst > 1e-3, "{worst}");
    }

    #[test]
    fn analytic_partials_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let step = 1e-6;
        for _ in 0..100 {
            let phi = random_state(&mut rng);
            let gas = GasModel::new(rng.random_range(1.1..1.9), rng.random_range(0.5..2.0)).unwrap();
            let fp = random_fp(&mut rng);
            for k in 0..4 {
                let mut plus = phi.to_array();
                let mut minus = phi.to_array();
                plus[k] += step;
                minus[k] -= step;
                let (sp, sm) = (SkewState::from_array(plus), SkewState::from_array(minus));
                for (analytic, fd) in [
                    (
                        atilde_partial(&phi, &gas, &fp, k),
                        (coeff_atilde(&sp, &gas, &fp).unwrap() - coeff_atilde(&sm, &gas, &fp).unwrap())
                            .scale(0.5 / step),
                    ),
                    (
                        btilde_partial(&phi, &gas, &fp, k),
                        (coeff_btilde(&sp, &gas, &fp).unwrap() - coeff_btilde(&sm, &gas, &fp).unwrap())
                            .scale(0.5 / step),
                    ),
                ] {
                    let scale = analytic.max_abs().max(1.0);
                    assert!((analytic - fd).max_abs() <= 1e-7 * scale, "k={k}\n{analytic:?}\n{fd:?}");
                }
            }
        }
    }

    #[test]
    fn split_form_reproduces_quasi_linear_form() {
        // A1 dPhi + (dA1) Phi + A2 dPhi = A dPhi, including free parameters.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..300 {
            let phi = random_state(&mut rng);
            let d = random_vec(&mut rng);
            let gas = GasModel::new(rng.random_range(1.1..1.9), rng.random_range(0.5..2.0)).unwrap();
            let fp = random_fp(&mut rng);
            let s = split_matrices_with(&phi, &gas, &fp).unwrap();
            let pinv = norm_matrix(&gas).inverse_diag().map(|x| 0.5 * x);
            let da1 = atilde_directional(&phi, &d, &gas, &fp).scale_rows(pinv);
            let lhs: [f64; 4] = {
                let t1 = s.a1.mul_vec(&d);
                let t2 = da1.mul_vec(&phi.to_array());
                let t3 = s.a2.mul_vec(&d);
                std::array::from_fn(|k| t1[k] + t2[k] + t3[k])
            };
            let rhs = coeff_a(&phi, &gas).unwrap().mul_vec(&d);
            let scale = inf_norm(&lhs).max(inf_norm(&rhs)).max(1.0) * (1.0 + fp.max_abs() * phi.norm_sq());
            for k in 0..4 {
                assert!((lhs[k] - rhs[k]).abs() <= 1e-12 * scale, "{lhs:?} vs {rhs:?}");
            }
        }
    }

    #[test]
    fn general_conditions_accept_split_form() {
        let gas = GasModel::air();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let samples: Vec<_> = (0..100).map(|_| random_state(&mut rng)).collect();
        let p = norm_matrix(&gas).diag();
        let pa1 = |s: &SkewState| split_matrices(s, &gas).unwrap().a1.scale_rows(p);
        let pa2 = |s: &SkewState| split_matrices(s, &gas).unwrap().a2.scale_rows(p);
        let pb1 = |s: &SkewState| split_matrices(s, &gas).unwrap().b1.scale_rows(p);
        let pb2 = |s: &SkewState| split_matrices(s, &gas).unwrap().b2.scale_rows(p);
        let zero = |_: &SkewState| Mat4::ZERO;
        let report = check_general_skew_conditions(&[&pa1, &pb1], &[&pa2, &pb2], &zero, &samples).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn general_conditions_identity_and_injected_asymmetry() {
        let samples = [SkewState::new(1.0, 0.5, 0.2, 1.0)];
        let id = |_: &SkewState| Mat4::identity();
        let zero = |_: &SkewState| Mat4::ZERO;
        assert!(check_general_skew_conditions(&[&id], &[&id], &zero, &samples).unwrap().passed);

        let gas = GasModel::air();
        let fp = FreeParams::default();
        let bt = |s: &SkewState| coeff_btilde(s, &gas, &fp).unwrap();
        let bt_t = |s: &SkewState| {
            let mut m = coeff_btilde(s, &gas, &fp).unwrap().transpose();
            m[(1, 2)] += 1e-3;
            m
        };
        let r = check_general_skew_conditions(&[&bt], &[&bt_t], &zero, &samples).unwrap();
        assert!(!r.passed);
        assert!((r.max_transpose_violation - 1e-3).abs() < 1e-12);

        let skew_c = |_: &SkewState| Mat4([[0.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0], [0.0; 4], [0.0; 4]]);
        assert!(check_general_skew_conditions(&[&id], &[&id], &skew_c, &samples).unwrap().passed);
        assert!(check_general_skew_conditions(&[&id], &[], &zero, &samples).is_err());
        assert!(check_general_skew_conditions(&[&id], &[&id], &zero, &[]).is_err());
    }

    #[test]
    fn vacuum_rejected() {
        let phi = SkewState::new(0.0, 1.0, 1.0, 1.0);
        let g = GasModel::air();
        assert!(coeff_a(&phi, &g).is_err());
        assert!(coeff_atilde(&phi, &g, &FreeParams::default()).is_err());
        assert!(split_matrices(&phi, &g).is_err());
    }
}
