//! Minimization of the discrete weighted energies over the admissible set.

mod newton;

pub(crate) use newton::{natural_residual, projected_newton, BoundSystem, NewtonOptions};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::energy::{Discretization, EnergyBreakdown, Functional};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, SpaceTimeGrid};
use crate::linalg::CsrMatrix;
use crate::model::{Nonlinearity, ProblemSpec, SIGMA_MIN};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Final residual tolerance relative to the residual of the initial guess.
    pub tol_grad: f64,
    /// Newton iteration cap per continuation stage.
    pub max_newton: usize,
    /// Smoothing levels for the reaction term, strictly decreasing, ending at 0.
    pub sigma_schedule: Vec<f64>,
    /// Relative tolerance of the intermediate (smoothed) stages.
    pub stage_tol: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub max_backtracks: usize,
    /// Floor of the relative tolerance of the inner Krylov solves.
    pub linear_tol: f64,
    pub linear_maxit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_grad: 1e-9,
            max_newton: 100,
            sigma_schedule: vec![1e-2, 1e-3, 1e-4, 0.0],
            stage_tol: 1e-4,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            max_backtracks: 30,
            linear_tol: 1e-10,
            linear_maxit: 2000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("solver.{name} must be positive, got {v}")))
            }
        };
        positive("tol_grad", self.tol_grad)?;
        positive("stage_tol", self.stage_tol)?;
        positive("linear_tol", self.linear_tol)?;
        positive("armijo_c", self.armijo_c)?;
        if !(self.armijo_c < 1.0) {
            return Err(Error::Parameter("solver.armijo_c must be below 1".into()));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(Error::Parameter("solver.armijo_shrink must lie in (0,1)".into()));
        }
        if self.max_newton == 0 || self.linear_maxit == 0 {
            return Err(Error::Parameter("solver iteration caps must be positive".into()));
        }
        let s = &self.sigma_schedule;
        if s.is_empty() || *s.last().unwrap() != 0.0 {
            return Err(Error::Parameter("solver.sigma_schedule must end at 0".into()));
        }
        if s.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Parameter(
                "solver.sigma_schedule must be strictly decreasing and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            max_iter: self.max_newton,
            linear_tol: self.linear_tol,
            linear_maxit: self.linear_maxit,
            armijo_c: self.armijo_c,
            armijo_shrink: self.armijo_shrink,
            max_backtracks: self.max_backtracks,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub sigma: f64,
    pub iterations: usize,
    pub residual: f64,
    pub target: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the complementarity residual in row-scaled units.
    pub residual: f64,
    pub target: f64,
    /// Residual of the initial guess that `tol_grad` is measured against.
    pub initial_residual: f64,
    pub energy: EnergyBreakdown,
    pub wall_time: f64,
    pub linear_iterations: usize,
    pub stages: Vec<StageReport>,
}

/// A discretization viewed as a bound-constrained system.
pub(crate) struct EnergySystem<'a> {
    disc: &'a Discretization,
    row_weights: Vec<f64>,
    scale: Vec<f64>,
    no_clamp: Vec<bool>,
}

impl<'a> EnergySystem<'a> {
    pub(crate) fn new(disc: &'a Discretization) -> Self {
        Self {
            disc,
            row_weights: disc.row_weights(),
            scale: disc.linear_diagonal(),
            no_clamp: vec![false; disc.grid().node_count()],
        }
    }
}

impl BoundSystem for EnergySystem<'_> {
    fn fixed(&self) -> &[bool] {
        self.disc.fixed()
    }
    fn energy(&self, u: &[f64]) -> f64 {
        self.disc.energy(u).total
    }
    fn residual_into(&self, u: &[f64], out: &mut [f64]) {
        self.disc.residual_into(u, out)
    }
    fn row_weights(&self) -> &[f64] {
        &self.row_weights
    }
    fn scale(&self) -> &[f64] {
        &self.scale
    }
    fn jacobian(&self, u: &[f64]) -> CsrMatrix {
        self.disc.jacobian(u, &self.no_clamp)
    }
    fn bounded(&self) -> bool {
        true
    }
}

/// Minimizes `E_eps` on `grid`, starting from the time-constant extension of `u0`.
pub fn minimize(spec: &ProblemSpec, grid: &SpaceTimeGrid, config: &SolverConfig) -> Result<(ScalarField, SolveReport)> {
    run(spec, grid, config, Functional::Weighted, None)
}

/// Same as [`minimize`] from a caller-supplied initial guess; its trace and
/// Dirichlet values are overwritten by the data.
pub fn minimize_from(
    spec: &ProblemSpec,
    init: &ScalarField,
    config: &SolverConfig,
) -> Result<(ScalarField, SolveReport)> {
    run(spec, init.grid(), config, Functional::Weighted, Some(init.values()))
}

/// Minimizes `J_eps` directly on a grid in stretched time.
pub fn solve_scaled(spec: &ProblemSpec, grid_v: &SpaceTimeGrid, config: &SolverConfig) -> Result<(ScalarField, SolveReport)> {
    run(spec, grid_v, config, Functional::Scaled, None)
}

fn run(
    spec: &ProblemSpec,
    grid: &SpaceTimeGrid,
    config: &SolverConfig,
    functional: Functional,
    init: Option<&[f64]>,
) -> Result<(ScalarField, SolveReport)> {
    let start = Instant::now();
    config.validate()?;
    let mut disc = Discretization::new(spec, grid, functional)?;
    disc.set_one_sided(true);
    let u0 = spec.sample_initial(grid)?;
    let mut u = match init {
        Some(v) => {
            if v.len() != grid.node_count() {
                return Err(Error::Format("initial guess does not match the grid".into()));
            }
            v.to_vec()
        }
        None => ScalarField::time_constant(grid.clone(), &u0)?.into_values(),
    };
    disc.impose_fixed(&mut u, &u0);

    // for gamma > 1 the last stage keeps the reaction smoothed at SIGMA_MIN: its
    // tangent at 0 is then exact and Newton cannot overshoot the tiny roots near
    // the free boundary
    let final_sigma = if spec.gamma > 1.0 {
        spec.smoothing_sigma.max(SIGMA_MIN)
    } else {
        spec.smoothing_sigma
    };
    let (res0, done) = {
        disc.set_nonlinearity(Nonlinearity::new(spec.gamma, final_sigma));
        let sys = EnergySystem::new(&disc);
        let mut r = vec![0.0; u.len()];
        sys.residual_into(&u, &mut r);
        let res = newton::natural_residual(&sys, &u, &r);
        (res, res <= newton::rounding_floor(&sys, &u))
    };
    let target = config.tol_grad * res0;

    let mut sigmas: Vec<f64> = config
        .sigma_schedule
        .iter()
        .copied()
        .filter(|s| *s > final_sigma && !done)
        .collect();
    sigmas.push(final_sigma);

    let opts = config.newton_options();
    let mut report = SolveReport {
        initial_residual: res0,
        ..Default::default()
    };
    let last = sigmas.len() - 1;
    for (i, sigma) in sigmas.into_iter().enumerate() {
        disc.set_nonlinearity(Nonlinearity::new(spec.gamma, sigma));
        let sys = EnergySystem::new(&disc);
        let stage_target = if i == last { target } else { target.max(config.stage_tol * res0) };
        let out = projected_newton(&sys, &mut u, stage_target, &opts)?;
        report.iterations += out.iterations;
        report.linear_iterations += out.linear_iterations;
        report.residual = out.residual;
        report.target = out.target;
        report.converged = out.converged;
        report.stages.push(StageReport {
            sigma,
            iterations: out.iterations,
            residual: out.residual,
            target: out.target,
            converged: out.converged,
        });
    }
    disc.set_nonlinearity(spec.nonlinearity());
    report.energy = disc.energy(&u);
    report.wall_time = start.elapsed().as_secs_f64();
    if !report.converged {
        return Err(Error::NonConvergence {
            iterations: report.iterations,
            residual: report.residual,
            target: report.target,
        });
    }
    Ok((ScalarField::new(grid.clone(), u)?, report))
}

/// Row-scaled Euler-Lagrange residual `-eps u_tt + u_t - Lap u + f(u)` of the
/// weighted energy. Fixed rows are 0; the last slice carries the defect of
/// the natural condition at `t = T`.
pub fn el_residual(field: &ScalarField, spec: &ProblemSpec) -> Result<ScalarField> {
    let disc = Discretization::weighted(spec, field.grid())?;
    if field.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite nodal value".into()));
    }
    ScalarField::new(field.grid().clone(), disc.residual(field.values()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InequalityDefects {
    /// `max (chi_{u > theta} - L u)_+` over interior nodes.
    pub lower: f64,
    /// `max (L u - 1)_+` over interior nodes.
    pub upper: f64,
    pub min_l_positive: f64,
    pub max_l: f64,
    pub positive_nodes: usize,
}

impl InequalityDefects {
    pub fn max_defect(&self) -> f64 {
        self.lower.max(self.upper)
    }
}

/// Checks `chi_{u > theta} <= eps u_tt + Lap u - u_t <= 1` with plain central
/// differences at interior nodes (`0 < t < T`, off the lateral boundary).
pub fn double_inequality_check(field: &ScalarField, spec: &ProblemSpec, theta: f64) -> Result<InequalityDefects> {
    if spec.gamma != 1.0 {
        return Err(Error::Usage(format!(
            "double inequality check needs gamma = 1, got {}",
            spec.gamma
        )));
    }
    let grid = field.grid();
    let disc = Discretization::weighted(spec, grid)?;
    let op = &disc.op;
    let ns = grid.space_nodes();
    let dt = grid.dt();
    let eps = spec.epsilon;
    let u = field.values();
    let mut out = InequalityDefects {
        min_l_positive: f64::INFINITY,
        max_l: f64::NEG_INFINITY,
        ..Default::default()
    };
    for k in 1..grid.nt() {
        let cur = &u[k * ns..(k + 1) * ns];
        for s in 0..ns {
            if grid.is_space_boundary(s) {
                continue;
            }
            let i = k * ns + s;
            let (um, uc, up) = (u[i - ns], u[i], u[i + ns]);
            let l = eps * (up - 2.0 * uc + um) / (dt * dt) - op.neg_laplacian_at(cur, s) - (up - um) / (2.0 * dt);
            let chi = if uc > theta { 1.0 } else { 0.0 };
            out.lower = out.lower.max(chi - l);
            out.upper = out.upper.max(l - 1.0);
            out.max_l = out.max_l.max(l);
            if uc > theta {
                out.positive_nodes += 1;
                out.min_l_positive = out.min_l_positive.min(l);
            }
        }
    }
    Ok(out)
}
