//! Seeded identity suites behind `skew-euler verify`.
//!
//! Every suite draws its samples from its own ChaCha stream derived from the
//! run seed, so reports are byte-identical for a given seed.

use std::f64::consts::SQRT_2;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boundary::{
    boundary_matrix, eigenvalue_crosscheck, expanded_contraction, free_param_contraction, free_param_matrix,
    normal_velocity, required_bc_count, rotate, rotated_boundary_matrix, threshold_b, UnitNormal,
};
use crate::error::Result;
use crate::matrices::{
    atilde_directional, btilde_directional, btilde_unchecked, check_general_skew_conditions, coeff_a_unchecked,
    coeff_b_unchecked, identity_residual_from, inf_norm, norm_matrix, skew_identity_residual, split_matrices,
    split_matrices_with, Direction, FreeParams, Mat4,
};
use crate::sbp::{verify_sbp_constraint, Order, SbpOperator1D, TensorApplicator};
use crate::solver::{Scheme, SchemeConfig};
use crate::state::{Field, GasModel, Grid2D, SkewState, Topology};

/// Suite names in execution order. A report that does not list exactly these
/// is rejected by [`VerifyReport::check_manifest`].
pub const MANIFEST: [&str; 12] = [
    "skew_identity_x",
    "skew_identity_y",
    "general_skew_conditions",
    "split_consistency",
    "free_param_contraction",
    "boundary_contraction",
    "rotated_contraction",
    "eigenvalues",
    "bc_threshold",
    "sbp_constraint",
    "sbp_integration_by_parts",
    "semi_discrete_energy",
];

/// Gas constants every algebraic suite is run at.
pub const GAMMAS: [f64; 3] = [1.4, SQRT_2, 5.0 / 3.0];

/// Which y-direction quasi-linear matrix the identity suites compare against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Standard,
    /// Row 3 of `B` with `3v/2` moved from column 3 to column 2. Used to show
    /// the y suite catches it.
    MisplacedBRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub samples: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteResult {
    fn new(name: &'static str, samples: usize, max_residual: f64, tolerance: f64) -> Self {
        Self {
            name,
            samples,
            max_residual,
            tolerance,
            passed: max_residual <= tolerance,
        }
    }

    fn require(mut self, cond: bool) -> Self {
        self.passed &= cond;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.suites.iter().filter(|s| !s.passed).map(|s| s.name).collect()
    }

    pub fn check_manifest(&self) -> std::result::Result<(), String> {
        let names: Vec<&str> = self.suites.iter().map(|s| s.name).collect();
        if names == MANIFEST {
            Ok(())
        } else {
            Err(format!("suite list {names:?} does not match manifest {MANIFEST:?}"))
        }
    }

    /// Fixed-width table, then a `failures:` line with a comma-separated
    /// list (or `none`).
    pub fn write_report<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "seed {}", self.seed)?;
        writeln!(w, "{:<26} {:>8} {:>12} {:>12}  status", "suite", "samples", "max_resid", "tolerance")?;
        for s in &self.suites {
            writeln!(
                w,
                "{:<26} {:>8} {:>12.3e} {:>12.3e}  {}",
                s.name,
                s.samples,
                s.max_residual,
                s.tolerance,
                if s.passed { "ok" } else { "FAIL" }
            )?;
        }
        let failures = self.failures();
        if failures.is_empty() {
            writeln!(w, "failures: none")?;
        } else {
            writeln!(w, "failures: {}", failures.join(","))?;
        }
        Ok(())
    }
}

pub fn run_all(seed: u64) -> Result<VerifyReport> {
    run_variant(seed, Variant::Standard)
}

pub fn run_variant(seed: u64, variant: Variant) -> Result<VerifyReport> {
    let rng = |k: u64| ChaCha8Rng::seed_from_u64(seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let suites = vec![
        skew_identity(&mut rng(1), Direction::X, variant)?,
        skew_identity(&mut rng(2), Direction::Y, variant)?,
        general_skew_conditions(&mut rng(3))?,
        split_consistency(&mut rng(4))?,
        free_params_null(&mut rng(5)),
        boundary_contraction(&mut rng(6))?,
        rotated_contraction(&mut rng(7))?,
        eigenvalues(&mut rng(8))?,
        bc_threshold()?,
        sbp_constraint()?,
        sbp_integration_by_parts(&mut rng(10))?,
        semi_discrete_energy(&mut rng(11), 100)?,
    ];
    Ok(VerifyReport { seed, suites })
}

pub fn random_state(rng: &mut impl Rng) -> SkewState {
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    SkewState::new(
        sign * rng.random_range(0.2..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
    )
}

pub fn random_vec(rng: &mut impl Rng) -> [f64; 4] {
    std::array::from_fn(|_| rng.random_range(-1.0..1.0))
}

pub fn random_free_params(rng: &mut impl Rng, bound: f64) -> FreeParams {
    let mut r = || rng.random_range(-bound..bound);
    FreeParams::new(r(), r(), r(), r())
}

pub fn random_normal(rng: &mut impl Rng) -> UnitNormal {
    UnitNormal::from_angle(rng.random_range(0.0..std::f64::consts::TAU))
}

/// Random field with `phi1` in `[0.5, 1.5]` and the other components free.
pub fn random_field(rng: &mut impl Rng, nx: usize, ny: usize) -> Field {
    let mut f = Field::zeros(nx, ny);
    for k in 0..nx * ny {
        f.set_node(
            k,
            SkewState::new(
                rng.random_range(0.5..1.5),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.5..1.5),
            ),
        );
    }
    f
}

fn misplaced_b(phi: &SkewState, gas: &GasModel) -> Mat4 {
    let mut b = coeff_b_unchecked(phi, gas);
    b[(2, 1)] = 1.5 * phi.v();
    b[(2, 2)] = 0.0;
    b
}

fn skew_identity(rng: &mut ChaCha8Rng, dir: Direction, variant: Variant) -> Result<SuiteResult> {
    let name = match dir {
        Direction::X => "skew_identity_x",
        Direction::Y => "skew_identity_y",
    };
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for g in GAMMAS {
        let gas = GasModel::new(g, 1.0)?;
        for _ in 0..1000 {
            let phi = random_state(rng);
            let d = random_vec(rng);
            let fp = random_free_params(rng, 10.0);
            let r = match (dir, variant) {
                (Direction::Y, Variant::MisplacedBRow) => identity_residual_from(
                    &phi,
                    &d,
                    &gas,
                    &btilde_unchecked(&phi, &gas, &fp),
                    &btilde_directional(&phi, &d, &gas, &fp),
                    &misplaced_b(&phi, &gas),
                ),
                _ => skew_identity_residual(&phi, &d, &gas, &fp, dir)?,
            };
            worst = worst.max(r.relative());
            n += 1;
        }
    }
    Ok(SuiteResult::new(name, n, worst, 1e-12))
}

fn general_skew_conditions(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut worst: f64 = 0.0;
    let mut passed = true;
    let mut n = 0;
    for g in GAMMAS {
        let gas = GasModel::new(g, rng.random_range(0.5..2.0))?;
        let samples: Vec<SkewState> = (0..200).map(|_| random_state(rng)).collect();
        let p = norm_matrix(&gas).diag();
        let pa1 = |s: &SkewState| split_matrices(s, &gas).map(|m| m.a1.scale_rows(p)).unwrap_or(Mat4::ZERO);
        let pa2 = |s: &SkewState| split_matrices(s, &gas).map(|m| m.a2.scale_rows(p)).unwrap_or(Mat4::ZERO);
        let pb1 = |s: &SkewState| split_matrices(s, &gas).map(|m| m.b1.scale_rows(p)).unwrap_or(Mat4::ZERO);
        let pb2 = |s: &SkewState| split_matrices(s, &gas).map(|m| m.b2.scale_rows(p)).unwrap_or(Mat4::ZERO);
        let zero = |_: &SkewState| Mat4::ZERO;
        let rep = check_general_skew_conditions(&[&pa1, &pb1], &[&pa2, &pb2], &zero, &samples)?;
        worst = worst.max(rep.max_transpose_violation.max(rep.max_c_violation) / rep.scale.max(1.0));
        passed &= rep.passed;
        n += samples.len();
    }
    Ok(SuiteResult::new("general_skew_conditions", n, worst, 1e-13).require(passed))
}

/// `D(A1 Phi) dPhi + A2 dPhi = A dPhi` (and the y analogue) with free
/// parameters, plus agreement of the explicit split with the `P^-1` route.
fn split_consistency(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for g in GAMMAS {
        let gas = GasModel::new(g, rng.random_range(0.5..2.0))?;
        let half_pinv = norm_matrix(&gas).inverse_diag().map(|x| 0.5 * x);
        for _ in 0..500 {
            let phi = random_state(rng);
            let d = random_vec(rng);
            let fp = random_free_params(rng, 10.0);
            let s = split_matrices_with(&phi, &gas, &fp)?;
            let x = phi.to_array();
            for (m1, m2, dm, k) in [
                (s.a1, s.a2, atilde_directional(&phi, &d, &gas, &fp), coeff_a_unchecked(&phi, &gas)),
                (s.b1, s.b2, btilde_directional(&phi, &d, &gas, &fp), coeff_b_unchecked(&phi, &gas)),
            ] {
                let terms = [
                    m1.mul_vec(&d),
                    dm.scale_rows(half_pinv).mul_vec(&x),
                    m2.mul_vec(&d),
                    k.mul_vec(&d).map(|v| -v),
                ];
                let r: [f64; 4] = std::array::from_fn(|c| terms.iter().map(|t| t[c]).sum());
                let scale = terms.iter().map(inf_norm).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
                worst = worst.max(inf_norm(&r) / scale);
            }
            let explicit = split_matrices(&phi, &gas)?;
            let via_norm = split_matrices_with(&phi, &gas, &FreeParams::default())?;
            for (a, b) in [
                (explicit.a1, via_norm.a1),
                (explicit.a2, via_norm.a2),
                (explicit.b1, via_norm.b1),
                (explicit.b2, via_norm.b2),
            ] {
                worst = worst.max((a - b).max_abs() / a.max_abs().max(1.0));
            }
            n += 1;
        }
    }
    Ok(SuiteResult::new("split_consistency", n, worst, 1e-12))
}

fn free_params_null(rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut worst: f64 = 0.0;
    let n = 10_000;
    for _ in 0..n {
        let phi = random_state(rng);
        let nrm = random_normal(rng);
        let fp = random_free_params(rng, 10.0);
        let m = free_param_matrix(&phi, &nrm, &fp);
        let x = phi.to_array();
        let scale: f64 = (0..4)
            .flat_map(|r| (0..4).map(move |c| (r, c)))
            .map(|(r, c)| (m[(r, c)] * x[r] * x[c]).abs())
            .sum();
        let v = free_param_contraction(&phi, &nrm, &fp);
        worst = worst.max(v.abs() / scale.max(f64::MIN_POSITIVE));
    }
    SuiteResult::new("free_param_contraction", n, worst, 1e-11)
}

/// Absolute scale of a quadratic form's terms.
fn form_scale(m: &Mat4, x: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for r in 0..4 {
        for c in 0..4 {
            s += (m[(r, c)] * x[r] * x[c]).abs();
        }
    }
    s.max(f64::MIN_POSITIVE)
}

/// Size of the contraction with `|u| + |v|` in place of `u_n`. Rounding in
/// `u_n` scales with the full speed, so this is the natural reference when
/// `u_n` is small.
fn contraction_scale(phi: &SkewState, gas: &GasModel) -> f64 {
    let x = phi.to_array();
    let mom = phi.phi2.abs() + phi.phi3.abs();
    mom / phi.phi1.abs() * norm_matrix(gas).quad_form(&x).abs()
        + (gas.gamma - 1.0) * (phi.phi4 / phi.phi1).abs() * phi.phi4.abs() * mom
}

/// `Phi^T M(n) Phi` against the expanded form, plus wall states.
fn boundary_contraction(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for g in GAMMAS {
        let gas = GasModel::new(g, rng.random_range(0.5..2.0))?;
        for k in 0..400 {
            let nrm = random_normal(rng);
            let mut phi = random_state(rng);
            if k % 4 == 0 {
                // tangential momentum only
                let t = phi.phi2;
                phi.phi2 = -nrm.ny() * t;
                phi.phi3 = nrm.nx() * t;
            }
            let bm = boundary_matrix(&phi, &nrm, &gas)?;
            let x = phi.to_array();
            let scale = form_scale(&bm, &x).max(contraction_scale(&phi, &gas));
            let q = bm.quad_form(&x);
            worst = worst.max((q - expanded_contraction(&phi, &nrm, &gas)).abs() / scale);
            if k % 4 == 0 {
                worst = worst.max(q.abs() / scale);
            }
            n += 1;
        }
    }
    Ok(SuiteResult::new("boundary_contraction", n, worst, 1e-13))
}

fn rotated_contraction(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for g in GAMMAS {
        let gas = GasModel::new(g, rng.random_range(0.5..2.0))?;
        for _ in 0..400 {
            let nrm = random_normal(rng);
            let phi = random_state(rng);
            let rm = rotated_boundary_matrix(&phi, &nrm, &gas)?;
            let rs = rotate(&phi, &nrm)?.to_array();
            let full = boundary_matrix(&phi, &nrm, &gas)?;
            let x = phi.to_array();
            let scale = form_scale(&rm, &rs).max(form_scale(&full, &x)).max(contraction_scale(&phi, &gas));
            let e = expanded_contraction(&phi, &nrm, &gas);
            worst = worst
                .max((rm.quad_form(&rs) - e).abs() / scale)
                .max((rm.quad_form(&rs) - full.quad_form(&x)).abs() / scale);
            n += 1;
        }
    }
    Ok(SuiteResult::new("rotated_contraction", n, worst, 1e-13))
}

fn eigenvalues(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for g in GAMMAS {
        let gas = GasModel::new(g, rng.random_range(0.5..2.0))?;
        for _ in 0..400 {
            let phi = random_state(rng);
            let nrm = random_normal(rng);
            if normal_velocity(&phi, &nrm).abs() < 1e-12 {
                continue;
            }
            worst = worst.max(eigenvalue_crosscheck(&phi, &nrm, &gas)?);
            n += 1;
        }
    }
    Ok(SuiteResult::new("eigenvalues", n, worst, 1e-10))
}

/// Locates the Mach number where the outflow negative-eigenvalue count drops
/// from one to zero by bisection and compares it with `b`.
pub fn locate_transition(gas: &GasModel) -> Result<f64> {
    let count = |mn: f64| required_bc_count(mn, 1.0, gas).map(|r| r.eig_count_negative);
    let (mut lo, mut hi) = (1e-6, 2.0);
    if count(lo)? != 1 || count(hi)? != 0 {
        return Ok(f64::NAN);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count(mid)? == 1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn bc_threshold() -> Result<SuiteResult> {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for g in GAMMAS {
        let gas = GasModel::new(g, 1.0)?;
        let b = threshold_b(&gas);
        worst = worst.max((locate_transition(&gas)? - b).abs());
        ok &= required_bc_count(b - 1e-6, 1.0, &gas)?.eig_count_negative == 1;
        ok &= required_bc_count(b + 1e-6, 1.0, &gas)?.eig_count_negative == 0;
    }
    ok &= (threshold_b(&GasModel::air()) - 0.97590).abs() <= 1e-4;
    ok &= (threshold_b(&GasModel::new(SQRT_2, 1.0)?) - 1.0).abs() <= 1e-9;
    Ok(SuiteResult::new("bc_threshold", GAMMAS.len(), worst, 1e-12).require(ok))
}

/// Operators the solver can build, over a spread of sizes.
pub fn shipped_operators() -> Result<Vec<SbpOperator1D>> {
    let mut ops = Vec::new();
    for order in [Order::Second, Order::Fourth] {
        for topo in [Topology::Bounded, Topology::Periodic] {
            for n in [order.min_nodes(), 13, 16, 31, 64, 101, 256] {
                let h = match topo {
                    Topology::Bounded => 1.0 / (n - 1) as f64,
                    Topology::Periodic => 1.0 / n as f64,
                };
                ops.push(SbpOperator1D::build(order, n, h, topo)?);
            }
        }
    }
    Ok(ops)
}

fn sbp_constraint() -> Result<SuiteResult> {
    let ops = shipped_operators()?;
    let worst = ops.iter().map(verify_sbp_constraint).fold(0.0, f64::max);
    Ok(SuiteResult::new("sbp_constraint", ops.len(), worst, 1e-15))
}

fn abs(f: &Field) -> Field {
    let comps = f.comps().clone().map(|c| c.into_iter().map(f64::abs).collect());
    Field::from_components(f.nx(), f.ny(), comps).expect("same shape")
}

/// `(U, D V) + (D U, V) - U^T B V` in both directions on random fields.
pub fn integration_by_parts_residual(t: &TensorApplicator<'_>, u: &Field, v: &Field) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for dir in [Direction::X, Direction::Y] {
        let (du, dv, bf) = match dir {
            Direction::X => (t.apply_dx(u)?, t.apply_dx(v)?, t.boundary_form_x(u, v)?),
            Direction::Y => (t.apply_dy(u)?, t.apply_dy(v)?, t.boundary_form_y(u, v)?),
        };
        let (a, b) = (t.inner_product(u, &dv)?, t.inner_product(&du, v)?);
        // sum of the absolute values of every term
        let bf_abs = match dir {
            Direction::X => t.boundary_form_x(&abs(u), &abs(v))?,
            Direction::Y => t.boundary_form_y(&abs(u), &abs(v))?,
        };
        let scale = (t.inner_product(&abs(u), &abs(&dv))? + t.inner_product(&abs(&du), &abs(v))? + bf_abs.abs())
            .max(f64::MIN_POSITIVE);
        worst = worst.max((a + b - bf).abs() / scale);
    }
    Ok(worst)
}

fn sbp_integration_by_parts(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for order in [Order::Second, Order::Fourth] {
        for (tx, ty, nx, ny) in [
            (Topology::Bounded, Topology::Bounded, 17, 23),
            (Topology::Periodic, Topology::Bounded, 24, 13),
            (Topology::Periodic, Topology::Periodic, 32, 32),
        ] {
            let grid = Grid2D::new((nx, ny), (0.0, 1.0), (-0.5, 1.5), (tx, ty))?;
            let ox = SbpOperator1D::for_grid_x(&grid, order)?;
            let oy = SbpOperator1D::for_grid_y(&grid, order)?;
            let t = TensorApplicator::new(&ox, &oy);
            for _ in 0..10 {
                let u = random_field(rng, nx, ny);
                let v = random_field(rng, nx, ny);
                worst = worst.max(integration_by_parts_residual(&t, &u, &v)?);
                n += 1;
            }
        }
    }
    Ok(SuiteResult::new("sbp_integration_by_parts", n, worst, 1e-13))
}

/// Largest `energy_rate_residual / energy` over `fields` random fields per
/// grid and operator order, on a bounded 32x48 and a periodic 64x64 grid.
pub fn semi_discrete_energy(rng: &mut ChaCha8Rng, fields: usize) -> Result<SuiteResult> {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for (topo, nx, ny) in [(Topology::Bounded, 32, 48), (Topology::Periodic, 64, 64)] {
        for order in [Order::Second, Order::Fourth] {
            let grid = Grid2D::unit_square(nx, ny, topo)?;
            let mut cfg = SchemeConfig::new(grid, GasModel::air());
            cfg.order = order;
            let scheme = Scheme::new(cfg)?;
            for _ in 0..fields {
                let f = random_field(rng, nx, ny);
                worst = worst.max(scheme.energy_rate_residual(&f)? / scheme.discrete_energy(&f)?);
                n += 1;
            }
        }
    }
    Ok(SuiteResult::new("semi_discrete_energy", n, worst, 1e-11))
}
