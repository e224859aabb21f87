//! Empirical checks of the energy bounds, the derivative law for `E`,
//! non-degeneracy at the free boundary and the `eps -> 0` convergence.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyTrace, SpatialOperator};
use crate::error::{Error, Result};
use crate::grid::{ball_indices, cylinder_indices, NodeIndex, Point, ScalarField, SpaceTimeGrid};
use crate::model::{Nonlinearity, ProblemSpec};
use crate::reference::solve_parabolic;
use crate::solver::{minimize, SolverConfig};

pub const DEFAULT_MARGIN: f64 = 10.0;
pub const DEFAULT_TOL_ND: f64 = 0.2;

/// Positivity threshold `max(10 tol, 1e-8 max u0)`.
pub fn default_theta(solver_tol: f64, u0_max: f64) -> f64 {
    (10.0 * solver_tol).max(1e-8 * u0_max)
}

/// `||u0||_{H^1,h}^2 + 2 ||u0||_{gamma,h}^gamma`.
pub fn level_constant(spec: &ProblemSpec, grid: &SpaceTimeGrid) -> Result<f64> {
    let u0 = spec.sample_initial(grid)?;
    let op = SpatialOperator::new(grid);
    let mut c = op.dirichlet(&u0);
    for (s, v) in u0.iter().enumerate() {
        c += op.mass[s] * (v * v + 2.0 * v.abs().powf(spec.gamma));
    }
    Ok(c)
}

/// Per-slice `int (|grad u|^2 + 2 u_+^gamma) dx`.
fn slice_dissipation(field: &ScalarField, spec: &ProblemSpec) -> Vec<f64> {
    let grid = field.grid();
    let op = SpatialOperator::new(grid);
    let nl = Nonlinearity::new(spec.gamma, 0.0);
    (0..=grid.nt())
        .map(|k| {
            let u = field.slice(k);
            op.dirichlet(u) + 2.0 * op.potential(u, &nl)
        })
        .collect()
}

/// Integral over `[a, b]` of the piecewise linear interpolant of samples `f`
/// at spacing `h` starting at 0.
fn integrate_pl(f: &[f64], h: f64, a: f64, b: f64) -> f64 {
    let n = f.len() - 1;
    let mut total = 0.0;
    for k in 0..n {
        let (t0, t1) = (k as f64 * h, (k + 1) as f64 * h);
        let lo = a.max(t0);
        let hi = b.min(t1);
        if hi <= lo {
            continue;
        }
        let at = |t: f64| f[k] + (f[k + 1] - f[k]) * (t - t0) / h;
        total += 0.5 * (at(lo) + at(hi)) * (hi - lo);
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabRow {
    pub r: f64,
    pub integral: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimateReport {
    pub epsilon: f64,
    pub kinetic_total: f64,
    pub slab_table: Vec<SlabRow>,
    /// `(r, int_r^{r+1} int (|grad v|^2 + 2 v_+^gamma))` in stretched time.
    pub scaled_slab_table: Vec<(f64, f64)>,
    pub rejected_radii: Vec<f64>,
    pub c_est: f64,
    pub margin: f64,
    pub kinetic_ok: bool,
    pub slabs_ok: bool,
}

impl EnergyEstimateReport {
    pub fn slab_csv(&self) -> String {
        let mut s = String::from("r,integral,ratio\n");
        for row in &self.slab_table {
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", row.r, row.integral, row.ratio);
        }
        s
    }
}

pub fn check_energy_bounds(
    field_u: &ScalarField,
    spec: &ProblemSpec,
    radii: &[f64],
    margin: f64,
) -> Result<EnergyEstimateReport> {
    let grid = field_u.grid();
    let ns = grid.space_nodes();
    let dt = grid.dt();
    let eps = spec.epsilon;
    let op = SpatialOperator::new(grid);
    let u = field_u.values();
    let mut kinetic_total = 0.0;
    for k in 0..grid.nt() {
        for s in 0..ns {
            let d = (u[(k + 1) * ns + s] - u[k * ns + s]) / dt;
            kinetic_total += dt * op.mass[s] * d * d;
        }
    }
    let diss = slice_dissipation(field_u, spec);
    let c_est = level_constant(spec, grid)?;
    let mut slab_table = Vec::new();
    let mut rejected = Vec::new();
    for &r in radii {
        if r < eps * (1.0 - 1e-12) || r > grid.t_end() * (1.0 + 1e-12) {
            rejected.push(r);
            continue;
        }
        let integral = integrate_pl(&diss, dt, 0.0, r);
        slab_table.push(SlabRow {
            r,
            integral,
            ratio: integral / r,
        });
    }
    let mut scaled_slab_table = Vec::new();
    let mut r = 0.0;
    while eps * (r + 1.0) <= grid.t_end() * (1.0 + 1e-12) {
        scaled_slab_table.push((r, integrate_pl(&diss, dt, eps * r, eps * (r + 1.0)) / eps));
        r += 1.0;
    }
    Ok(EnergyEstimateReport {
        epsilon: eps,
        kinetic_total,
        slabs_ok: slab_table.iter().all(|row| row.ratio <= c_est * margin),
        kinetic_ok: kinetic_total <= c_est,
        slab_table,
        scaled_slab_table,
        rejected_radii: rejected,
        c_est,
        margin,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivativeLaw {
    /// `sum ds |(E_{k+1} - E_k)/ds + 2 I_{k+1/2}|`.
    pub residual_l1: f64,
    pub monotone: bool,
    /// `max_k (E_{k+1} - E_k)`, negative when strictly decreasing.
    pub max_increase: f64,
    /// `max_k |(E_{k+1} - E_k)/ds - (E - I - R)_{k+1/2}|`.
    pub identity_defect: f64,
}

pub fn check_derivative_law(trace: &EnergyTrace) -> DerivativeLaw {
    let n = trace.i_cell.len();
    let ds = trace.ds();
    let e0 = trace.e.first().copied().unwrap_or(0.0);
    let mut out = DerivativeLaw {
        max_increase: f64::NEG_INFINITY,
        ..Default::default()
    };
    for k in 0..n {
        let de = (trace.e[k + 1] - trace.e[k]) / ds;
        out.residual_l1 += ds * (de + 2.0 * trace.i_cell[k]).abs();
        out.max_increase = out.max_increase.max(trace.e[k + 1] - trace.e[k]);
        let mid = 0.5 * (trace.e[k] + trace.e[k + 1]) - trace.i_cell[k] - 0.5 * (trace.r[k] + trace.r[k + 1]);
        out.identity_defect = out.identity_defect.max((de - mid).abs());
    }
    if n == 0 {
        out.max_increase = 0.0;
    }
    out.monotone = out.max_increase <= 1e-10 * e0;
    out
}

/// Nodes with `u <= theta` next (in the space-time stencil) to a node with
/// `u > theta`, excluding `t = 0`.
pub fn extract_free_boundary(field: &ScalarField, theta: f64) -> Vec<usize> {
    let grid = field.grid();
    let ns = grid.space_nodes();
    let nt = grid.nt();
    let op = SpatialOperator::new(grid);
    let u = field.values();
    let mut out = Vec::new();
    for k in 1..=nt {
        for s in 0..ns {
            let i = k * ns + s;
            if u[i] > theta {
                continue;
            }
            let mut hit = u[i - ns] > theta || (k < nt && u[i + ns] > theta);
            hit |= op.neighbors(s).iter().any(|&(j, _)| u[k * ns + j] > theta);
            if hit {
                out.push(i);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbPoint {
    pub node: usize,
    pub x: Vec<f64>,
    pub t: f64,
    /// `sup_{B_r} u / r^2` per tested radius; `None` where the ball is clipped.
    pub ratios: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NondegReport {
    pub fb_points: Vec<FbPoint>,
    pub radii: Vec<f64>,
    pub min_ratio: Option<f64>,
    pub c_theory: f64,
    pub tol_nd: f64,
    pub tested_balls: usize,
    pub skipped_balls: usize,
    pub empty: bool,
    pub pass: bool,
}

pub fn c_theory(dim: usize) -> f64 {
    1.0 / (2.0 * (dim as f64 + 2.0))
}

pub fn nondegeneracy(field: &ScalarField, spec: &ProblemSpec, radii: &[f64], theta: f64) -> Result<NondegReport> {
    nondegeneracy_with_tol(field, spec, radii, theta, DEFAULT_TOL_ND)
}

pub fn nondegeneracy_with_tol(
    field: &ScalarField,
    spec: &ProblemSpec,
    radii: &[f64],
    theta: f64,
    tol_nd: f64,
) -> Result<NondegReport> {
    let grid = field.grid();
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Parameter("nondegeneracy radii must be positive".into()));
    }
    let c = c_theory(spec.dim);
    let u = field.values();
    let mut fb_points = Vec::new();
    let (mut tested, mut skipped) = (0, 0);
    let mut min_ratio: Option<f64> = None;
    for node in extract_free_boundary(field, theta) {
        let NodeIndex { k, i } = grid.node(node);
        let p: Point = grid.space_point(grid.space_index(i));
        let x = p[..grid.dim()].to_vec();
        let t = grid.time(k);
        let mut ratios = Vec::with_capacity(radii.len());
        for &r in radii {
            let ball = ball_indices(grid, &x, t, r)?;
            if ball.clipped {
                skipped += 1;
                ratios.push(None);
                continue;
            }
            tested += 1;
            let sup = ball.indices.iter().map(|&j| u[j]).fold(0.0, f64::max);
            let ratio = sup / (r * r);
            min_ratio = Some(min_ratio.map_or(ratio, |m| m.min(ratio)));
            ratios.push(Some(ratio));
        }
        fb_points.push(FbPoint { node, x, t, ratios });
    }
    let empty = min_ratio.is_none();
    Ok(NondegReport {
        empty,
        pass: min_ratio.map_or(true, |m| m >= c * (1.0 - tol_nd)),
        fb_points,
        radii: radii.to_vec(),
        min_ratio,
        c_theory: c,
        tol_nd,
        tested_balls: tested,
        skipped_balls: skipped,
    })
}

fn check_same_grid(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if !a.grid().same_nodes(b.grid()) {
        return Err(Error::Domain("fields live on different grids".into()));
    }
    Ok(())
}

/// Fraction of interior nodes (`t > 0`, off the lateral boundary) where
/// `a > theta` and `b > theta` disagree.
pub fn chi_mismatch(a: &ScalarField, b: &ScalarField, theta: f64) -> Result<f64> {
    check_same_grid(a, b)?;
    let grid = a.grid();
    let ns = grid.space_nodes();
    let (mut bad, mut total) = (0usize, 0usize);
    for k in 1..=grid.nt() {
        for s in 0..ns {
            if grid.is_space_boundary(s) {
                continue;
            }
            let i = k * ns + s;
            total += 1;
            if (a.values()[i] > theta) != (b.values()[i] > theta) {
                bad += 1;
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { bad as f64 / total as f64 })
}

/// `L^2(Q_r^+)` distance with trapezoid space weights and `dt` in time.
pub fn l2_cylinder_error(a: &ScalarField, b: &ScalarField, r: f64) -> Result<f64> {
    check_same_grid(a, b)?;
    let grid = a.grid();
    let ns = grid.space_nodes();
    let w = grid.space_weights();
    let dt = grid.dt();
    let mut acc = 0.0;
    for i in cylinder_indices(grid, r).indices {
        let d = a.values()[i] - b.values()[i];
        acc += w[i % ns] * dt * d * d;
    }
    Ok(acc.sqrt())
}

/// Discretization floor of the reference: distance on `Q_r^+` between the
/// reference on `grid` and on the grid refined twice in space and time.
pub fn oracle_floor(spec: &ProblemSpec, grid: &SpaceTimeGrid, config: &SolverConfig, r: f64) -> Result<f64> {
    let (coarse, _) = solve_parabolic(spec, grid, config, true)?;
    let nx: Vec<usize> = grid.nx().iter().map(|n| 2 * n).collect();
    let fine_grid = SpaceTimeGrid::new(grid.dim(), grid.extents(), &nx, grid.t_end(), 2 * grid.nt())?
        .with_origin(grid.origin())?;
    let (fine, _) = solve_parabolic(spec, &fine_grid, config, true)?;
    l2_cylinder_error(&coarse, &fine.restrict(grid)?, r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub l2_error: f64,
    pub chi_mismatch: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub entries: Vec<SweepEntry>,
    pub qr_radius: f64,
    pub theta: f64,
    pub oracle_floor: f64,
    /// Each halving drops the error by at least 5% until it is within twice the floor.
    pub error_decreasing: bool,
    /// Mismatch never grows by more than 5%.
    pub chi_non_increasing: bool,
    pub final_within_floor: bool,
}

impl ConvergenceReport {
    pub fn from_entries(entries: Vec<SweepEntry>, qr_radius: f64, theta: f64, oracle_floor: f64) -> Self {
        let mut error_decreasing = true;
        let mut chi_non_increasing = true;
        for w in entries.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.l2_error > 2.0 * oracle_floor && b.l2_error > 0.95 * a.l2_error {
                error_decreasing = false;
            }
            if b.chi_mismatch > 1.05 * a.chi_mismatch {
                chi_non_increasing = false;
            }
        }
        let final_within_floor = entries.last().map_or(true, |e| e.l2_error <= 2.0 * oracle_floor);
        Self {
            entries,
            qr_radius,
            theta,
            oracle_floor,
            error_decreasing,
            chi_non_increasing,
            final_within_floor,
        }
    }

    pub fn all_converged(&self) -> bool {
        self.entries.iter().all(|e| e.converged)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,l2_error,chi_mismatch\n");
        for e in &self.entries {
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", e.epsilon, e.l2_error, e.chi_mismatch);
        }
        s
    }
}

pub fn check_eps_list(eps_list: &[f64]) -> Result<()> {
    if eps_list.is_empty() {
        return Err(Error::Parameter("eps_list is empty".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Parameter("eps_list must be strictly decreasing".into()));
    }
    Ok(())
}

/// One column of the sweep: solve at `eps` and compare with the reference.
pub fn sweep_entry(
    spec_base: &ProblemSpec,
    eps: f64,
    grid: &SpaceTimeGrid,
    config: &SolverConfig,
    reference: &ScalarField,
    qr_radius: f64,
    theta: f64,
) -> Result<(SweepEntry, Option<ScalarField>)> {
    let spec = spec_base.with_epsilon(eps)?;
    match minimize(&spec, grid, config) {
        Ok((u, _)) => Ok((
            SweepEntry {
                epsilon: eps,
                l2_error: l2_cylinder_error(&u, reference, qr_radius)?,
                chi_mismatch: chi_mismatch(&u, reference, theta)?,
                converged: true,
                error: None,
            },
            Some(u),
        )),
        Err(e @ (Error::NonConvergence { .. } | Error::NonFinite(_))) => Ok((
            SweepEntry {
                epsilon: eps,
                l2_error: f64::NAN,
                chi_mismatch: f64::NAN,
                converged: false,
                error: Some(e.to_string()),
            },
            None,
        )),
        Err(e) => Err(e),
    }
}

/// Sequential sweep against a precomputed reference on the same grid.
#[allow(clippy::too_many_arguments)]
pub fn eps_sweep(
    spec_base: &ProblemSpec,
    eps_list: &[f64],
    grid: &SpaceTimeGrid,
    config: &SolverConfig,
    reference: &ScalarField,
    qr_radius: f64,
    theta: f64,
    oracle_floor: f64,
) -> Result<ConvergenceReport> {
    check_eps_list(eps_list)?;
    let mut entries = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        entries.push(sweep_entry(spec_base, eps, grid, config, reference, qr_radius, theta)?.0);
    }
    Ok(ConvergenceReport::from_entries(entries, qr_radius, theta, oracle_floor))
}
