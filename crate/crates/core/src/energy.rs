//! Discrete space-time energies.
//!
//! Both functionals share one quadrature. On time cell `k` the weight is the
//! exact integral of the exponential kernel,
//! `w_k = e^{-rate t_k} (1 - e^{-rate dt})`, the kinetic term uses the
//! difference quotient of the cell and the slice terms (Dirichlet energy plus
//! potential, trapezoid in space) are averaged over the two end slices:
//!
//! ```text
//! F(w) = sum_k w_k [ kin * |w^{k+1} - w^k|_M^2 / dt^2
//!                    + spat * (S(w^k) + S(w^{k+1})) / 2 ],
//! S(w) = w' K w + 2 sum_s m_s Phi(w_s).
//! ```
//!
//! `E_eps` has `rate = 1/eps, kin = eps, spat = 1`; `J_eps` has
//! `rate = 1, kin = 1, spat = eps`. With these choices `J_eps(v) = eps E_eps(u)`
//! holds exactly when `v` is `u` reindexed on the stretched time axis.
//!
//! The Euler-Lagrange rows are divided by their slice weight
//! `2 m_s (w_{k-1} + w_k) / 2`. The ratios `w_{k-1} / W_k`, `w_k / W_k` are
//! evaluated from logarithms, so rows stay well defined even where the weights
//! themselves underflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, SpaceTimeGrid};
use crate::linalg::CsrMatrix;
use crate::model::{BoundaryCondition, Nonlinearity, ProblemSpec};

/// Exact per-cell integrals of `rate * e^{-rate t}`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureWeights {
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
    /// Cells whose weight underflowed to zero.
    pub underflow: Vec<bool>,
}

impl QuadratureWeights {
    pub fn new(grid: &SpaceTimeGrid, rate: f64) -> Self {
        let nt = grid.nt();
        let mut weights = Vec::with_capacity(nt);
        let mut log_weights = Vec::with_capacity(nt);
        let mut underflow = Vec::with_capacity(nt);
        for k in 0..nt {
            let t0 = grid.time(k);
            let h = grid.time(k + 1) - t0;
            let lw = -rate * t0 + (-(-rate * h).exp_m1()).ln();
            let w = (-rate * t0).exp() * (-(-rate * h).exp_m1());
            log_weights.push(lw);
            weights.push(w);
            underflow.push(w == 0.0);
        }
        Self {
            weights,
            log_weights,
            underflow,
        }
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub kinetic: f64,
    pub dirichlet: f64,
    pub potential: f64,
}

/// Stiffness edges and lumped mass of the spatial trapezoid discretization.
#[derive(Clone, Debug)]
pub(crate) struct SpatialOperator {
    pub mass: Vec<f64>,
    /// `(a, b, c)`: contributes `c (u_a - u_b)^2` to `u' K u`.
    pub edges: Vec<(usize, usize, f64)>,
    nbr_start: Vec<usize>,
    /// `(j, c / m_s)` so that `(-Lap_h u)_s = sum c/m_s (u_s - u_j)`.
    nbr: Vec<(usize, f64)>,
}

impl SpatialOperator {
    pub fn new(grid: &SpaceTimeGrid) -> Self {
        let ns = grid.space_nodes();
        let mass = grid.space_weights();
        let mut edges = Vec::new();
        let dim = grid.dim();
        for s in 0..ns {
            let i = grid.space_multi_index(s);
            for a in 0..dim {
                if i[a] < grid.nx()[a] {
                    let mut j = i;
                    j[a] += 1;
                    let other = if dim == 2 {
                        let b = 1 - a;
                        let h = grid.dx(b);
                        if i[b] == 0 || i[b] == grid.nx()[b] {
                            0.5 * h
                        } else {
                            h
                        }
                    } else {
                        1.0
                    };
                    edges.push((s, grid.space_index(j), other / grid.dx(a)));
                }
            }
        }
        let mut lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ns];
        for &(a, b, c) in &edges {
            lists[a].push((b, c / mass[a]));
            lists[b].push((a, c / mass[b]));
        }
        let mut nbr_start = Vec::with_capacity(ns + 1);
        let mut nbr = Vec::new();
        for mut l in lists {
            l.sort_by_key(|e| e.0);
            nbr_start.push(nbr.len());
            nbr.extend(l);
        }
        nbr_start.push(nbr.len());
        Self {
            mass,
            edges,
            nbr_start,
            nbr,
        }
    }

    pub fn neighbors(&self, s: usize) -> &[(usize, f64)] {
        &self.nbr[self.nbr_start[s]..self.nbr_start[s + 1]]
    }

    /// `(-Lap_h u)_s` with natural (Neumann) boundary rows.
    pub fn neg_laplacian_at(&self, u: &[f64], s: usize) -> f64 {
        self.neighbors(s).iter().map(|&(j, c)| c * (u[s] - u[j])).sum()
    }

    /// `u' K u`.
    pub fn dirichlet(&self, u: &[f64]) -> f64 {
        self.edges.iter().map(|&(a, b, c)| c * (u[a] - u[b]).powi(2)).sum()
    }

    pub fn potential(&self, u: &[f64], nl: &Nonlinearity) -> f64 {
        u.iter().zip(&self.mass).map(|(&v, &m)| m * nl.potential(v)).sum()
    }
}

/// Which of the two weighted functionals a [`Discretization`] represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Functional {
    /// `E_eps`, physical time.
    Weighted,
    /// `J_eps`, time stretched by `1/eps`.
    Scaled,
}

/// A discrete weighted space-time energy together with its Euler-Lagrange
/// operator on a fixed grid.
#[derive(Clone, Debug)]
pub struct Discretization {
    grid: SpaceTimeGrid,
    functional: Functional,
    kinetic: f64,
    spatial: f64,
    weights: QuadratureWeights,
    a_minus: Vec<f64>,
    a_plus: Vec<f64>,
    log_slice_weight: Vec<f64>,
    pub(crate) op: SpatialOperator,
    nonlin: Nonlinearity,
    one_sided: bool,
    fixed: Vec<bool>,
}

impl Discretization {
    pub fn new(spec: &ProblemSpec, grid: &SpaceTimeGrid, functional: Functional) -> Result<Self> {
        spec.validate()?;
        if grid.dim() != spec.dim {
            return Err(Error::Parameter(format!(
                "problem dimension {} does not match grid dimension {}",
                spec.dim,
                grid.dim()
            )));
        }
        let eps = spec.epsilon;
        let (rate, kinetic, spatial) = match functional {
            Functional::Weighted => (1.0 / eps, eps, 1.0),
            Functional::Scaled => (1.0, 1.0, eps),
        };
        let weights = QuadratureWeights::new(grid, rate);
        let nt = grid.nt();
        let mut a_minus = vec![0.0; nt + 1];
        let mut a_plus = vec![0.0; nt + 1];
        let mut log_slice_weight = vec![f64::NEG_INFINITY; nt + 1];
        for k in 0..=nt {
            let lm = if k > 0 { weights.log_weights[k - 1] } else { f64::NEG_INFINITY };
            let lp = if k < nt { weights.log_weights[k] } else { f64::NEG_INFINITY };
            let lw = log_add(lm, lp) + 0.5f64.ln();
            log_slice_weight[k] = lw;
            a_minus[k] = (lm - lw).exp();
            a_plus[k] = (lp - lw).exp();
        }
        let ns = grid.space_nodes();
        let mut fixed = vec![false; grid.node_count()];
        fixed[..ns].iter_mut().for_each(|f| *f = true);
        if spec.bc == BoundaryCondition::Dirichlet {
            for k in 1..=nt {
                for s in 0..ns {
                    if grid.is_space_boundary(s) {
                        fixed[k * ns + s] = true;
                    }
                }
            }
        }
        Ok(Self {
            grid: grid.clone(),
            functional,
            kinetic,
            spatial,
            weights,
            a_minus,
            a_plus,
            log_slice_weight,
            op: SpatialOperator::new(grid),
            nonlin: spec.nonlinearity(),
            one_sided: false,
            fixed,
        })
    }

    pub fn weighted(spec: &ProblemSpec, grid: &SpaceTimeGrid) -> Result<Self> {
        Self::new(spec, grid, Functional::Weighted)
    }

    pub fn scaled(spec: &ProblemSpec, grid: &SpaceTimeGrid) -> Result<Self> {
        Self::new(spec, grid, Functional::Scaled)
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn functional(&self) -> Functional {
        self.functional
    }

    pub fn weights(&self) -> &QuadratureWeights {
        &self.weights
    }

    /// Nodes pinned by the trace at `t = 0` or by Dirichlet data.
    pub fn fixed(&self) -> &[bool] {
        &self.fixed
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlin
    }

    pub fn set_nonlinearity(&mut self, nl: Nonlinearity) {
        self.nonlin = nl;
    }

    /// Evaluate the reaction term from the right at `u = 0`, which is the
    /// gradient of the energy restricted to `u >= 0`.
    pub(crate) fn set_one_sided(&mut self, on: bool) {
        self.one_sided = on;
    }

    /// Coefficient of `|grad w|^2 + 2 Phi(w)` (1 for `E_eps`, `eps` for `J_eps`).
    pub fn spatial_coefficient(&self) -> f64 {
        self.spatial
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.grid.node_count() {
            return Err(Error::Format(format!(
                "vector of length {} on a grid with {} nodes",
                u.len(),
                self.grid.node_count()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite nodal value".into()));
        }
        Ok(())
    }

    pub fn energy(&self, u: &[f64]) -> EnergyBreakdown {
        let ns = self.grid.space_nodes();
        let nt = self.grid.nt();
        let dt = self.grid.dt();
        let slice = |k: usize| &u[k * ns..(k + 1) * ns];
        let mut grad_prev = self.op.dirichlet(slice(0));
        let mut pot_prev = 2.0 * self.op.potential(slice(0), &self.nonlin);
        let mut e = EnergyBreakdown::default();
        for k in 0..nt {
            let w = self.weights.weights[k];
            let (a, b) = (slice(k), slice(k + 1));
            let grad_next = self.op.dirichlet(b);
            let pot_next = 2.0 * self.op.potential(b, &self.nonlin);
            if w > 0.0 {
                let kin: f64 = a
                    .iter()
                    .zip(b)
                    .zip(&self.op.mass)
                    .map(|((x, y), m)| m * (y - x) * (y - x))
                    .sum::<f64>()
                    / (dt * dt);
                e.kinetic += w * self.kinetic * kin;
                e.dirichlet += w * self.spatial * 0.5 * (grad_prev + grad_next);
                e.potential += w * self.spatial * 0.5 * (pot_prev + pot_next);
            }
            grad_prev = grad_next;
            pot_prev = pot_next;
        }
        e.total = e.kinetic + e.dirichlet + e.potential;
        e
    }

    /// Euler-Lagrange residual divided by the row weight; zero on fixed nodes.
    pub fn residual_into(&self, u: &[f64], out: &mut [f64]) {
        let ns = self.grid.space_nodes();
        let nt = self.grid.nt();
        let c = self.kinetic / (self.grid.dt() * self.grid.dt());
        out[..ns].iter_mut().for_each(|r| *r = 0.0);
        for k in 1..=nt {
            let (am, ap) = (self.a_minus[k], self.a_plus[k]);
            let cur = &u[k * ns..(k + 1) * ns];
            for s in 0..ns {
                let idx = k * ns + s;
                if self.fixed[idx] {
                    out[idx] = 0.0;
                    continue;
                }
                let mut r = c * am * (u[idx] - u[idx - ns]);
                if k < nt {
                    r -= c * ap * (u[idx + ns] - u[idx]);
                }
                let f = if self.one_sided {
                    self.nonlin.value_right(u[idx])
                } else {
                    self.nonlin.value(u[idx])
                };
                r += self.spatial * (self.op.neg_laplacian_at(cur, s) + f);
                out[idx] = r;
            }
        }
    }

    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.residual_into(u, &mut out);
        out
    }

    /// Factor turning row-scaled residual entries into energy-gradient entries.
    pub fn row_weights(&self) -> Vec<f64> {
        let ns = self.grid.space_nodes();
        let mut w = Vec::with_capacity(self.grid.node_count());
        for k in 0..=self.grid.nt() {
            let sw = self.log_slice_weight[k].exp();
            w.extend(self.op.mass.iter().map(|m| 2.0 * m * sw));
        }
        debug_assert_eq!(w.len(), ns * (self.grid.nt() + 1));
        w
    }

    /// Diagonal of the row-scaled Jacobian without the reaction term.
    pub(crate) fn linear_diagonal(&self) -> Vec<f64> {
        let ns = self.grid.space_nodes();
        let c = self.kinetic / (self.grid.dt() * self.grid.dt());
        let mut d = Vec::with_capacity(self.grid.node_count());
        for k in 0..=self.grid.nt() {
            let time = c * (self.a_minus[k] + self.a_plus[k]);
            for s in 0..ns {
                let lap: f64 = self.op.neighbors(s).iter().map(|e| e.1).sum();
                d.push(if self.fixed[k * ns + s] { 1.0 } else { time + self.spatial * lap });
            }
        }
        d
    }

    /// Row-scaled Jacobian of [`Self::residual_into`]. Rows of nodes that are
    /// fixed or flagged in `clamp` become identity rows, and columns pointing at
    /// such nodes are dropped.
    pub fn jacobian(&self, u: &[f64], clamp: &[bool]) -> CsrMatrix {
        let ns = self.grid.space_nodes();
        let nt = self.grid.nt();
        let n = self.grid.node_count();
        let c = self.kinetic / (self.grid.dt() * self.grid.dt());
        let pinned = |i: usize| self.fixed[i] || clamp[i];
        let mut m = CsrMatrix::with_capacity(n, n * (3 + 2 * self.grid.dim()));
        for k in 0..=nt {
            for s in 0..ns {
                let idx = k * ns + s;
                if pinned(idx) {
                    m.push(idx, 1.0);
                    m.finish_row();
                    continue;
                }
                let (am, ap) = (self.a_minus[k], self.a_plus[k]);
                if !pinned(idx - ns) {
                    m.push(idx - ns, -c * am);
                }
                let nb = self.op.neighbors(s);
                let mut diag = c * (am + ap) + self.spatial * self.nonlin.derivative(u[idx]);
                for &(_, w) in nb {
                    diag += self.spatial * w;
                }
                for &(j, w) in nb.iter().filter(|e| e.0 < s) {
                    if !pinned(k * ns + j) {
                        m.push(k * ns + j, -self.spatial * w);
                    }
                }
                m.push(idx, diag);
                for &(j, w) in nb.iter().filter(|e| e.0 > s) {
                    if !pinned(k * ns + j) {
                        m.push(k * ns + j, -self.spatial * w);
                    }
                }
                if k < nt && !pinned(idx + ns) {
                    m.push(idx + ns, -c * ap);
                }
                m.finish_row();
            }
        }
        m
    }

    /// Hessian action of the (unscaled) energy on the free subspace.
    pub fn hessian_apply(&self, u: &[f64], d: &[f64]) -> Vec<f64> {
        let clamp = vec![false; u.len()];
        let jac = self.jacobian(u, &clamp);
        let mut dd: Vec<f64> = d.to_vec();
        for (i, f) in self.fixed.iter().enumerate() {
            if *f {
                dd[i] = 0.0;
            }
        }
        let mut out = jac.mul_vec(&dd);
        let rw = self.row_weights();
        for i in 0..out.len() {
            out[i] = if self.fixed[i] { 0.0 } else { out[i] * rw[i] };
        }
        out
    }

    /// Nodal values with the fixed nodes reset to `u0` (trace and Dirichlet data).
    pub fn impose_fixed(&self, u: &mut [f64], u0: &[f64]) {
        let ns = self.grid.space_nodes();
        for (i, v) in u.iter_mut().enumerate() {
            if self.fixed[i] {
                *v = u0[i % ns];
            }
        }
    }
}

fn field_check(field: &ScalarField, spec: &ProblemSpec) -> Result<()> {
    if field.grid().dim() != spec.dim {
        return Err(Error::Parameter("field dimension does not match the problem".into()));
    }
    if field.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite nodal value".into()));
    }
    Ok(())
}

/// `E_eps` of `field` (physical time).
pub fn weighted_energy(field: &ScalarField, spec: &ProblemSpec) -> Result<EnergyBreakdown> {
    field_check(field, spec)?;
    let d = Discretization::weighted(spec, field.grid())?;
    Ok(d.energy(field.values()))
}

/// `J_eps` of a field living on the stretched time axis.
pub fn scaled_energy(field_v: &ScalarField, spec: &ProblemSpec) -> Result<EnergyBreakdown> {
    field_check(field_v, spec)?;
    let d = Discretization::scaled(spec, field_v.grid())?;
    Ok(d.energy(field_v.values()))
}

/// Gradient of `E_eps` with respect to the nodal values; rows of the `t = 0`
/// slice and of Dirichlet nodes are zero.
pub fn energy_gradient(field: &ScalarField, spec: &ProblemSpec) -> Result<ScalarField> {
    field_check(field, spec)?;
    let d = Discretization::weighted(spec, field.grid())?;
    d.check(field.values())?;
    let mut r = d.residual(field.values());
    for (ri, w) in r.iter_mut().zip(d.row_weights()) {
        *ri *= w;
    }
    ScalarField::new(field.grid().clone(), r)
}

/// Action of the second variation of `E_eps` at `field` on `direction`
/// (the Newton matrix of the weighted Euler-Lagrange system).
pub fn apply_linearized(field: &ScalarField, spec: &ProblemSpec, direction: &ScalarField) -> Result<ScalarField> {
    field_check(field, spec)?;
    if !field.grid().same_nodes(direction.grid()) {
        return Err(Error::Domain("direction lives on a different grid".into()));
    }
    let d = Discretization::weighted(spec, field.grid())?;
    let out = d.hessian_apply(field.values(), direction.values());
    ScalarField::new(field.grid().clone(), out)
}

/// `I`, `R`, `E` sampled in scaled time `s = t / eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    /// Scaled-time nodes `s_k`.
    pub t: Vec<f64>,
    /// `int |d_s v|^2` on each cell `[s_k, s_{k+1}]`.
    pub i_cell: Vec<f64>,
    /// `I` at the nodes (average of the adjacent cells).
    pub i_node: Vec<f64>,
    /// `eps int |grad v|^2 + 2 v_+^gamma` at the nodes.
    pub r: Vec<f64>,
    /// Discrete tail `e^{s_k} sum_{j >= k} w_j (I + R)_j`.
    pub e: Vec<f64>,
    /// Weight beyond the horizon, `e^{-T/eps}`, dropped from every `E_k`.
    pub tail_mass: f64,
    pub underflow_cells: usize,
}

impl EnergyTrace {
    pub fn ds(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,I,R,E\n");
        for k in 0..self.t.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.t[k], self.i_node[k], self.r[k], self.e[k]
            ));
        }
        out
    }
}

pub fn energy_trace(field_u: &ScalarField, spec: &ProblemSpec) -> Result<EnergyTrace> {
    field_check(field_u, spec)?;
    let grid_v = field_u.grid().rescale_time(1.0 / spec.epsilon)?;
    let d = Discretization::scaled(spec, &grid_v)?;
    let ns = grid_v.space_nodes();
    let nt = grid_v.nt();
    let ds = grid_v.dt();
    let u = field_u.values();
    let eps = spec.epsilon;
    let slice = |k: usize| &u[k * ns..(k + 1) * ns];

    let t: Vec<f64> = (0..=nt).map(|k| grid_v.time(k)).collect();
    let r: Vec<f64> = (0..=nt)
        .map(|k| eps * (d.op.dirichlet(slice(k)) + 2.0 * d.op.potential(slice(k), &d.nonlin)))
        .collect();
    let i_cell: Vec<f64> = (0..nt)
        .map(|k| {
            slice(k)
                .iter()
                .zip(slice(k + 1))
                .zip(&d.op.mass)
                .map(|((a, b), m)| m * (b - a) * (b - a))
                .sum::<f64>()
                / (ds * ds)
        })
        .collect();
    let i_node: Vec<f64> = (0..=nt)
        .map(|k| match k {
            0 => i_cell[0],
            k if k == nt => i_cell[nt - 1],
            k => 0.5 * (i_cell[k - 1] + i_cell[k]),
        })
        .collect();
    let mut e = vec![0.0; nt + 1];
    for k in (0..nt).rev() {
        let h = t[k + 1] - t[k];
        let decay = (-h).exp();
        let cell = i_cell[k] + 0.5 * (r[k] + r[k + 1]);
        e[k] = -(-h).exp_m1() * cell + decay * e[k + 1];
    }
    Ok(EnergyTrace {
        t,
        i_cell,
        i_node,
        r,
        e,
        tail_mass: (-grid_v.t_end()).exp(),
        underflow_cells: d.weights.underflow.iter().filter(|&&f| f).count(),
    })
}
