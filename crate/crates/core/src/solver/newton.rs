//! Projected semismooth Newton for convex energies under the bound `u >= 0`.
//!
//! Each iteration guesses the contact set with the primal-dual active-set rule
//! `u_i - r_i / D_i <= 0` (clamped nodes are sent to 0), solves the
//! row-scaled Newton system on the remaining free nodes with ILU-BiCGSTAB and
//! backtracks along the projection arc until the energy shows an Armijo
//! decrease. A diagonally scaled projected-gradient step is the fallback when
//! the Newton direction fails to decrease the energy.

use crate::error::{Error, Result};
use crate::linalg::{bicgstab, CsrMatrix};

/// A discrete convex minimization problem with pinned nodes and an optional
/// lower bound `u >= 0` on the free ones.
pub(crate) trait BoundSystem {
    fn fixed(&self) -> &[bool];
    fn energy(&self, u: &[f64]) -> f64;
    /// Stationarity residual divided by the row weights; zero on fixed rows.
    fn residual_into(&self, u: &[f64], out: &mut [f64]);
    /// `gradient = row_weights * residual`.
    fn row_weights(&self) -> &[f64];
    /// Diagonal of the linear part of the row-scaled Jacobian.
    fn scale(&self) -> &[f64];
    /// Row-scaled Jacobian at `u`, no rows pinned.
    fn jacobian(&self, u: &[f64]) -> CsrMatrix;
    fn bounded(&self) -> bool;
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct NewtonOptions {
    pub max_iter: usize,
    pub linear_tol: f64,
    pub linear_maxit: usize,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub max_backtracks: usize,
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct NewtonOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub target: f64,
    pub linear_iterations: usize,
    pub converged: bool,
}

/// Max-norm of the natural residual `min(u D, r)` on free nodes (plain `|r|`
/// without the bound).
pub(crate) fn natural_residual<S: BoundSystem + ?Sized>(sys: &S, u: &[f64], r: &[f64]) -> f64 {
    let fixed = sys.fixed();
    let scale = sys.scale();
    let mut worst: f64 = 0.0;
    for i in 0..u.len() {
        if fixed[i] {
            continue;
        }
        let v = if sys.bounded() { (u[i] * scale[i]).min(r[i]) } else { r[i] };
        worst = worst.max(v.abs());
    }
    worst
}

/// Residual level below which rounding dominates.
pub(crate) fn rounding_floor<S: BoundSystem + ?Sized>(sys: &S, u: &[f64]) -> f64 {
    let smax = sys.scale().iter().copied().fold(0.0, f64::max);
    let umax = u.iter().map(|v| v.abs()).fold(0.0, f64::max);
    256.0 * f64::EPSILON * smax * umax
}

fn project(sys: &(impl BoundSystem + ?Sized), u: &mut [f64]) {
    if sys.bounded() {
        let fixed = sys.fixed();
        for (i, v) in u.iter_mut().enumerate() {
            if !fixed[i] && *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Minimizes in place until the natural residual drops to `target` (or the
/// rounding floor, whichever is larger).
pub(crate) fn projected_newton<S: BoundSystem + ?Sized>(
    sys: &S,
    u: &mut [f64],
    target: f64,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    let n = u.len();
    project(sys, u);
    let fixed = sys.fixed().to_vec();
    let scale = sys.scale().to_vec();
    let rw = sys.row_weights().to_vec();
    let bounded = sys.bounded();

    let mut r = vec![0.0; n];
    let mut out = NewtonOutcome::default();
    let mut energy = sys.energy(u);
    let mut trial = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut pinned = vec![false; n];
    let mut shift = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    loop {
        sys.residual_into(u, &mut r);
        let nres = natural_residual(sys, u, &r);
        out.residual = nres;
        out.target = target.max(rounding_floor(sys, u));
        if !nres.is_finite() || !energy.is_finite() {
            return Err(Error::NonFinite("Newton iteration".into()));
        }
        if nres <= out.target {
            out.converged = true;
            return Ok(out);
        }
        if out.iterations >= opts.max_iter {
            return Ok(out);
        }
        out.iterations += 1;

        // contact set guess
        let mut any_clamped = false;
        for i in 0..n {
            let clamp = bounded && !fixed[i] && r[i] > 0.0 && u[i] * scale[i] <= r[i];
            pinned[i] = fixed[i] || clamp;
            shift[i] = if clamp { -u[i] } else { 0.0 };
            any_clamped |= clamp && u[i] != 0.0;
        }
        let jac = sys.jacobian(u);
        if any_clamped {
            jac.mul_vec_into(&shift, &mut rhs);
        } else {
            rhs.iter_mut().for_each(|v| *v = 0.0);
        }
        for i in 0..n {
            rhs[i] = if pinned[i] { shift[i] } else { -r[i] - rhs[i] };
        }
        let reduced = jac.reduce(&pinned);
        let eta = (0.1 * out.target / nres).clamp(opts.linear_tol, 1e-2);
        delta.iter_mut().for_each(|v| *v = 0.0);
        let lin = bicgstab(&reduced, &rhs, &mut delta, eta, opts.linear_maxit);
        out.linear_iterations += lin.iterations;
        if !delta.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Newton linear solve".into()));
        }

        let accepted = line_search(sys, u, &delta, &r, &rw, energy, nres, opts, &mut trial, &mut scratch);
        let accepted = match accepted {
            Some(e) => Some(e),
            None => {
                // projected gradient fallback, diagonally scaled
                for i in 0..n {
                    delta[i] = if fixed[i] { 0.0 } else { -r[i] / scale[i].max(f64::MIN_POSITIVE) };
                }
                line_search(sys, u, &delta, &r, &rw, energy, nres, opts, &mut trial, &mut scratch)
            }
        };
        match accepted {
            Some(e) => {
                u.copy_from_slice(&trial);
                energy = e;
            }
            None => {
                // nothing verifiable: take the full scaled gradient step and let
                // the residual decide
                for i in 0..n {
                    trial[i] = u[i] + delta[i];
                }
                project(sys, &mut trial);
                u.copy_from_slice(&trial);
                energy = sys.energy(u);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn line_search<S: BoundSystem + ?Sized>(
    sys: &S,
    u: &[f64],
    delta: &[f64],
    r: &[f64],
    rw: &[f64],
    energy: f64,
    nres: f64,
    opts: &NewtonOptions,
    trial: &mut [f64],
    scratch: &mut [f64],
) -> Option<f64> {
    let mut alpha = 1.0;
    // below this the energy cannot resolve the step; the residual decides
    let slack = 1e-13 * energy.abs();
    for _ in 0..=opts.max_backtracks {
        for i in 0..u.len() {
            trial[i] = u[i] + alpha * delta[i];
        }
        project(sys, trial);
        let pred: f64 = (0..u.len()).map(|i| rw[i] * r[i] * (trial[i] - u[i])).sum();
        let e = sys.energy(trial);
        if pred <= 0.0 {
            if -opts.armijo_c * pred > slack {
                if e <= energy + opts.armijo_c * pred {
                    return Some(e);
                }
            } else if e <= energy + slack {
                sys.residual_into(trial, scratch);
                if natural_residual(sys, trial, scratch) <= (1.0 - 1e-4 * alpha) * nres {
                    return Some(e);
                }
            }
        }
        alpha *= opts.armijo_shrink;
    }
    None
}
