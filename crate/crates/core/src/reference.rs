//! Implicit Euler time stepping for `u_t - Lap u = -f(u)`, the oracle the
//! elliptic regularization is compared against.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::energy::SpatialOperator;
use crate::error::{Error, Result};
use crate::grid::{Point, ScalarField, SpaceTimeGrid};
use crate::linalg::CsrMatrix;
use crate::model::{BoundaryCondition, Nonlinearity, ProblemSpec, SIGMA_MIN};
use crate::solver::{natural_residual, projected_newton, BoundSystem, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub newton_iters: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLog {
    pub steps: Vec<StepLog>,
    pub wall_time: f64,
}

impl ReferenceLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,newton_iters,residual\n");
        for l in &self.steps {
            let _ = writeln!(s, "{},{},{:.16e}", l.step, l.newton_iters, l.residual);
        }
        s
    }
}

/// One implicit Euler step as a convex minimization in the new slice.
struct StepSystem<'a> {
    op: &'a SpatialOperator,
    prev: &'a [f64],
    inv_dt: f64,
    nl: Nonlinearity,
    fixed: Vec<bool>,
    mass: Vec<f64>,
    scale: Vec<f64>,
}

impl BoundSystem for StepSystem<'_> {
    fn fixed(&self) -> &[bool] {
        &self.fixed
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let mut e = 0.5 * self.op.dirichlet(u);
        for s in 0..u.len() {
            let d = u[s] - self.prev[s];
            e += self.mass[s] * (0.5 * self.inv_dt * d * d + self.nl.potential(u[s]));
        }
        e
    }

    fn residual_into(&self, u: &[f64], out: &mut [f64]) {
        for s in 0..u.len() {
            out[s] = if self.fixed[s] {
                0.0
            } else {
                self.inv_dt * (u[s] - self.prev[s]) + self.op.neg_laplacian_at(u, s) + self.nl.value_right(u[s])
            };
        }
    }

    fn row_weights(&self) -> &[f64] {
        &self.mass
    }

    fn scale(&self) -> &[f64] {
        &self.scale
    }

    fn jacobian(&self, u: &[f64]) -> CsrMatrix {
        let n = u.len();
        let mut m = CsrMatrix::with_capacity(n, 5 * n);
        for s in 0..n {
            if self.fixed[s] {
                m.push(s, 1.0);
                m.finish_row();
                continue;
            }
            let nb = self.op.neighbors(s);
            for &(j, w) in nb.iter().filter(|e| e.0 < s) {
                if !self.fixed[j] {
                    m.push(j, -w);
                }
            }
            m.push(s, self.scale[s] + self.nl.derivative(u[s]));
            for &(j, w) in nb.iter().filter(|e| e.0 > s) {
                if !self.fixed[j] {
                    m.push(j, -w);
                }
            }
            m.finish_row();
        }
        m
    }

    fn bounded(&self) -> bool {
        true
    }
}

/// Solves the parabolic problem on `grid` by implicit Euler; `epsilon` is ignored.
/// With `reaction = false` the reaction term is switched off (pure heat flow).
pub fn solve_parabolic(
    spec: &ProblemSpec,
    grid: &SpaceTimeGrid,
    config: &SolverConfig,
    reaction: bool,
) -> Result<(ScalarField, ReferenceLog)> {
    let start = std::time::Instant::now();
    spec.validate()?;
    config.validate()?;
    if grid.dim() != spec.dim {
        return Err(Error::Parameter("problem dimension does not match the grid".into()));
    }
    let ns = grid.space_nodes();
    let nt = grid.nt();
    let op = SpatialOperator::new(grid);
    let u0 = spec.sample_initial(grid)?;
    let fixed: Vec<bool> = (0..ns)
        .map(|s| spec.bc == BoundaryCondition::Dirichlet && grid.is_space_boundary(s))
        .collect();
    let inv_dt = 1.0 / grid.dt();
    let scale: Vec<f64> = (0..ns)
        .map(|s| {
            if fixed[s] {
                1.0
            } else {
                inv_dt + op.neighbors(s).iter().map(|e| e.1).sum::<f64>()
            }
        })
        .collect();
    let nl = if reaction {
        let sigma = if spec.gamma > 1.0 {
            spec.smoothing_sigma.max(SIGMA_MIN)
        } else {
            spec.smoothing_sigma
        };
        Nonlinearity::new(spec.gamma, sigma)
    } else {
        Nonlinearity::disabled()
    };
    let opts = config.newton_options();

    let mut values = Vec::with_capacity(grid.node_count());
    values.extend_from_slice(&u0);
    let mut log = ReferenceLog::default();
    let mut r = vec![0.0; ns];
    // residual scale of the first step, so late near-stationary steps are not
    // asked for a residual far below rounding
    let mut scale0 = None;
    for m in 0..nt {
        let prev = values[m * ns..(m + 1) * ns].to_vec();
        let sys = StepSystem {
            op: &op,
            prev: &prev,
            inv_dt,
            nl,
            fixed: fixed.clone(),
            mass: op.mass.clone(),
            scale: scale.clone(),
        };
        let mut u = prev.clone();
        sys.residual_into(&u, &mut r);
        let res0 = natural_residual(&sys, &u, &r);
        let res_scale = *scale0.get_or_insert(res0);
        let step_err = |e: Error| Error::Step {
            step: m + 1,
            source: Box::new(e),
        };
        let out = projected_newton(&sys, &mut u, config.tol_grad * res0.max(res_scale), &opts).map_err(step_err)?;
        if !out.converged {
            return Err(step_err(Error::NonConvergence {
                iterations: out.iterations,
                residual: out.residual,
                target: out.target,
            }));
        }
        log.steps.push(StepLog {
            step: m + 1,
            newton_iters: out.iterations,
            residual: out.residual,
        });
        values.extend_from_slice(&u);
    }
    log.wall_time = start.elapsed().as_secs_f64();
    Ok((ScalarField::new(grid.clone(), values)?, log))
}

/// Smooth space-time bump `(1 - |x-c|^2/R^2)_+^2 (1 - (t-tau)^2/D^2)_+^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestBump {
    pub center: Vec<f64>,
    pub time: f64,
    pub radius: f64,
    pub duration: f64,
}

impl TestBump {
    pub fn eval(&self, x: Point, t: f64) -> f64 {
        let mut q = 0.0;
        for (a, c) in self.center.iter().enumerate() {
            q += (x[a] - c).powi(2);
        }
        let a = (1.0 - q / (self.radius * self.radius)).max(0.0);
        let b = (1.0 - ((t - self.time) / self.duration).powi(2)).max(0.0);
        a * a * b * b
    }

    fn inside(&self, grid: &SpaceTimeGrid) -> bool {
        self.center
            .iter()
            .zip(grid.extents())
            .all(|(c, e)| c - self.radius > e[0] && c + self.radius < e[1])
            && self.time - self.duration > 0.0
            && self.time + self.duration < grid.t_end()
    }
}

/// Deterministic bank of `count` bumps at three scales, all compactly
/// supported in the interior of the space-time box.
pub fn bump_bank(grid: &SpaceTimeGrid, count: usize) -> Vec<TestBump> {
    let dim = grid.dim();
    let width: Vec<f64> = grid.extents().iter().map(|e| e[1] - e[0]).collect();
    let wmin = width.iter().copied().fold(f64::INFINITY, f64::min);
    let t_end = grid.t_end();
    let mut bank = Vec::with_capacity(count);
    let scales = [0.25, 0.15, 0.08];
    // low-discrepancy placement
    let golden = [0.618_033_988_749_895, 0.754_877_666_246_693, 0.569_840_290_998_053];
    for i in 0..count {
        let sc = scales[i % 3];
        let radius = sc * wmin;
        let duration = sc * t_end;
        let frac = |j: usize| ((i as f64 + 1.0) * golden[j]).fract();
        let center: Vec<f64> = (0..dim)
            .map(|a| {
                let e = grid.extents()[a];
                let lo = e[0] + radius * 1.05;
                let hi = e[1] - radius * 1.05;
                lo + (hi - lo) * frac(a)
            })
            .collect();
        let lo = duration * 1.05;
        let hi = t_end - duration * 1.05;
        let time = lo + (hi - lo) * frac(2);
        let b = TestBump {
            center,
            time,
            radius,
            duration,
        };
        debug_assert!(b.inside(grid));
        bank.push(b);
    }
    bank
}

/// Max over the bank of `|int int (u_t eta + grad u . grad eta + f(u) eta)|`,
/// with the time derivative on cells and the other terms averaged over the
/// two cell endpoints.
pub fn strong_residual(field: &ScalarField, spec: &ProblemSpec, bank: &[TestBump]) -> Result<f64> {
    let grid = field.grid();
    if grid.dim() != spec.dim {
        return Err(Error::Parameter("problem dimension does not match the grid".into()));
    }
    for b in bank {
        if b.center.len() != grid.dim() || !b.inside(grid) {
            return Err(Error::Domain("test function not compactly supported in the interior".into()));
        }
    }
    let op = SpatialOperator::new(grid);
    let ns = grid.space_nodes();
    let nt = grid.nt();
    let dt = grid.dt();
    let nl = Nonlinearity::new(spec.gamma, 0.0);
    let u = field.values();
    let points: Vec<Point> = (0..ns).map(|s| grid.space_point(s)).collect();
    let mut worst: f64 = 0.0;
    for b in bank {
        let eta: Vec<Vec<f64>> = (0..=nt)
            .map(|k| points.iter().map(|p| b.eval(*p, grid.time(k))).collect())
            .collect();
        // per-slice spatial part: grad u . grad eta + f(u) eta
        let spatial: Vec<f64> = (0..=nt)
            .map(|k| {
                let uk = &u[k * ns..(k + 1) * ns];
                let ek = &eta[k];
                let mut acc = 0.0;
                for &(a, c, w) in &op.edges {
                    acc += w * (uk[a] - uk[c]) * (ek[a] - ek[c]);
                }
                for s in 0..ns {
                    acc += op.mass[s] * nl.value(uk[s]) * ek[s];
                }
                acc
            })
            .collect();
        let mut total = 0.0;
        for k in 0..nt {
            let mut kin = 0.0;
            for s in 0..ns {
                let ut = (u[(k + 1) * ns + s] - u[k * ns + s]) / dt;
                kin += op.mass[s] * ut * 0.5 * (eta[k][s] + eta[k + 1][s]);
            }
            total += dt * (kin + 0.5 * (spatial[k] + spatial[k + 1]));
        }
        worst = worst.max(total.abs());
    }
    Ok(worst)
}
