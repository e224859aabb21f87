//! Space-time tensor grids over a bounded box, nodal fields on them, and the
//! geometric queries (space-time balls, parabolic cylinders) the diagnostics
//! are built on.
//!
//! Nodes are stored time-slowest: flat index = `k * space_nodes + s`, where the
//! spatial index `s` runs over `x1` and then `x2` (`x2` fastest).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial coordinates of a node. The second entry is 0 in one dimension.
pub type Point = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    dim: usize,
    extents: Vec<[f64; 2]>,
    nx: Vec<usize>,
    t_end: f64,
    nt: usize,
    origin: Vec<f64>,
}

/// Index triple of a node: time slice and per-axis spatial indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeIndex {
    pub k: usize,
    pub i: [usize; 2],
}

impl SpaceTimeGrid {
    pub fn new(dim: usize, extents: &[[f64; 2]], nx: &[usize], t_end: f64, nt: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Parameter(format!("dimension must be 1 or 2, got {dim}")));
        }
        if extents.len() != dim || nx.len() != dim {
            return Err(Error::Parameter(format!(
                "expected {dim} extents and cell counts, got {} and {}",
                extents.len(),
                nx.len()
            )));
        }
        for (axis, (ext, &n)) in extents.iter().zip(nx).enumerate() {
            let len = ext[1] - ext[0];
            if !(ext[0].is_finite() && ext[1].is_finite()) || !(len > 0.0) {
                return Err(Error::Parameter(format!(
                    "axis {axis}: extent [{}, {}] must be a finite interval with a < b",
                    ext[0], ext[1]
                )));
            }
            if n < 2 {
                return Err(Error::Parameter(format!("axis {axis}: cell count {n} must be >= 2")));
            }
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Parameter(format!("time horizon {t_end} must be finite and positive")));
        }
        if nt < 2 {
            return Err(Error::Parameter(format!("time cell count {nt} must be >= 2")));
        }
        let origin = extents.iter().map(|e| 0.5 * (e[0] + e[1])).collect();
        Ok(Self {
            dim,
            extents: extents.to_vec(),
            nx: nx.to_vec(),
            t_end,
            nt,
            origin,
        })
    }

    /// Overrides the spatial origin used by [`cylinder_indices`]. Defaults to the box center.
    pub fn with_origin(mut self, origin: &[f64]) -> Result<Self> {
        if origin.len() != self.dim {
            return Err(Error::Parameter(format!("origin must have {} coordinates", self.dim)));
        }
        self.origin = origin.to_vec();
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[[f64; 2]] {
        &self.extents
    }

    pub fn nx(&self) -> &[usize] {
        &self.nx
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn dx(&self, axis: usize) -> f64 {
        (self.extents[axis][1] - self.extents[axis][0]) / self.nx[axis] as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.nt as f64
    }

    /// Number of nodes along `axis` (cells + 1).
    pub fn axis_nodes(&self, axis: usize) -> usize {
        if axis < self.dim {
            self.nx[axis] + 1
        } else {
            1
        }
    }

    pub fn space_nodes(&self) -> usize {
        self.nx.iter().map(|n| n + 1).product()
    }

    pub fn time_nodes(&self) -> usize {
        self.nt + 1
    }

    pub fn node_count(&self) -> usize {
        self.time_nodes() * self.space_nodes()
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.nt {
            self.t_end
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        if i == self.nx[axis] {
            self.extents[axis][1]
        } else {
            self.extents[axis][0] + i as f64 * self.dx(axis)
        }
    }

    pub fn space_index(&self, i: [usize; 2]) -> usize {
        if self.dim == 1 {
            i[0]
        } else {
            i[0] * (self.nx[1] + 1) + i[1]
        }
    }

    pub fn space_multi_index(&self, s: usize) -> [usize; 2] {
        if self.dim == 1 {
            [s, 0]
        } else {
            let n2 = self.nx[1] + 1;
            [s / n2, s % n2]
        }
    }

    pub fn flat_index(&self, node: NodeIndex) -> usize {
        node.k * self.space_nodes() + self.space_index(node.i)
    }

    pub fn node(&self, flat: usize) -> NodeIndex {
        let ns = self.space_nodes();
        NodeIndex {
            k: flat / ns,
            i: self.space_multi_index(flat % ns),
        }
    }

    pub fn space_point(&self, s: usize) -> Point {
        let i = self.space_multi_index(s);
        let mut p = [0.0; 2];
        for (axis, pa) in p.iter_mut().enumerate().take(self.dim) {
            *pa = self.axis_coord(axis, i[axis]);
        }
        p
    }

    /// Whether spatial node `s` lies on the boundary of the box.
    pub fn is_space_boundary(&self, s: usize) -> bool {
        let i = self.space_multi_index(s);
        (0..self.dim).any(|a| i[a] == 0 || i[a] == self.nx[a])
    }

    /// Trapezoid quadrature weight of spatial node `s`.
    pub fn space_weight(&self, s: usize) -> f64 {
        let i = self.space_multi_index(s);
        (0..self.dim)
            .map(|a| {
                let h = self.dx(a);
                if i[a] == 0 || i[a] == self.nx[a] {
                    0.5 * h
                } else {
                    h
                }
            })
            .product()
    }

    pub fn space_weights(&self) -> Vec<f64> {
        (0..self.space_nodes()).map(|s| self.space_weight(s)).collect()
    }

    /// Largest distance between two points of the space-time box.
    pub fn diameter(&self) -> f64 {
        let s: f64 = self.extents.iter().map(|e| (e[1] - e[0]).powi(2)).sum();
        (s + self.t_end * self.t_end).sqrt()
    }

    /// Same grid with the time axis stretched by `factor` (used to map `u(x,t)`
    /// onto `v(x,s) = u(x, eps s)` with `factor = 1/eps`).
    pub fn rescale_time(&self, factor: f64) -> Result<Self> {
        let t_end = self.t_end * factor;
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Parameter(format!("invalid time scale factor {factor}")));
        }
        let mut g = self.clone();
        g.t_end = t_end;
        Ok(g)
    }

    fn same_box(&self, other: &Self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.dim == other.dim
            && self
                .extents
                .iter()
                .zip(&other.extents)
                .all(|(a, b)| close(a[0], b[0]) && close(a[1], b[1]))
            && close(self.t_end, other.t_end)
    }

    pub fn same_nodes(&self, other: &Self) -> bool {
        self.same_box(other) && self.nx == other.nx && self.nt == other.nt
    }

    fn contains(&self, p: &[f64], t: f64) -> bool {
        (0..self.dim).all(|a| p[a] >= self.extents[a][0] && p[a] <= self.extents[a][1]) && t >= 0.0 && t <= self.t_end
    }
}

/// Shape of a node set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// Euclidean space-time ball.
    Ball { center: Vec<f64>, time: f64, radius: f64 },
    /// Parabolic cylinder `B_r(origin) x (0, r^2)`.
    Cylinder { origin: Vec<f64>, radius: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionIndexSet {
    pub indices: Vec<usize>,
    pub region: Region,
    /// The continuous region sticks out of the box or out of `[0, T]`.
    pub clipped: bool,
}

impl RegionIndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn axis_range(lo: f64, hi: f64, a: f64, h: f64, n: usize) -> std::ops::RangeInclusive<usize> {
    let first = ((lo - a) / h).floor().max(0.0) as usize;
    let last = (((hi - a) / h).ceil().max(0.0) as usize).min(n);
    first.min(n)..=last
}

/// All nodes within Euclidean space-time distance `r` of `(center, time)`.
pub fn ball_indices(grid: &SpaceTimeGrid, center: &[f64], time: f64, r: f64) -> Result<RegionIndexSet> {
    if center.len() != grid.dim() {
        return Err(Error::Domain(format!("ball center needs {} spatial coordinates", grid.dim())));
    }
    if !grid.contains(center, time) {
        return Err(Error::Domain(format!("ball center ({center:?}, {time}) lies outside the grid")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Parameter(format!("ball radius {r} must be positive")));
    }
    let mut clipped = time - r < 0.0 || time + r > grid.t_end();
    for a in 0..grid.dim() {
        let e = grid.extents()[a];
        clipped |= center[a] - r < e[0] || center[a] + r > e[1];
    }

    let kr = axis_range(time - r, time + r, 0.0, grid.dt(), grid.nt());
    let mut ranges = [0..=0, 0..=0];
    for a in 0..grid.dim() {
        ranges[a] = axis_range(center[a] - r, center[a] + r, grid.extents()[a][0], grid.dx(a), grid.nx()[a]);
    }
    let r2 = r * r;
    let mut indices = Vec::new();
    for k in kr {
        let dt = grid.time(k) - time;
        for i0 in ranges[0].clone() {
            let d0 = grid.axis_coord(0, i0) - center[0];
            for i1 in ranges[1].clone() {
                let d1 = if grid.dim() == 2 { grid.axis_coord(1, i1) - center[1] } else { 0.0 };
                if dt * dt + d0 * d0 + d1 * d1 <= r2 {
                    indices.push(grid.flat_index(NodeIndex { k, i: [i0, i1] }));
                }
            }
        }
    }
    Ok(RegionIndexSet {
        indices,
        region: Region::Ball {
            center: center.to_vec(),
            time,
            radius: r,
        },
        clipped,
    })
}

/// Nodes of the parabolic cylinder `{|x - origin| < r, 0 < t < r^2}`.
pub fn cylinder_indices(grid: &SpaceTimeGrid, r: f64) -> RegionIndexSet {
    let origin = grid.origin().to_vec();
    let mut indices = Vec::new();
    let r2 = r * r;
    let mut clipped = r2 > grid.t_end();
    for a in 0..grid.dim() {
        let e = grid.extents()[a];
        clipped |= origin[a] - r < e[0] || origin[a] + r > e[1];
    }
    if r > 0.0 {
        for k in 1..grid.time_nodes() {
            if grid.time(k) >= r2 {
                break;
            }
            for s in 0..grid.space_nodes() {
                let p = grid.space_point(s);
                let d2: f64 = (0..grid.dim()).map(|a| (p[a] - origin[a]).powi(2)).sum();
                if d2 < r2 {
                    indices.push(k * grid.space_nodes() + s);
                }
            }
        }
    }
    RegionIndexSet {
        indices,
        region: Region::Cylinder { origin, radius: r },
        clipped,
    }
}

/// Nodal values on a [`SpaceTimeGrid`], all finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: SpaceTimeGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: SpaceTimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Format(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value {} at node {p}", values[p])));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: SpaceTimeGrid) -> Self {
        let n = grid.node_count();
        Self { grid, values: vec![0.0; n] }
    }

    /// Field whose every time slice equals `slice`.
    pub fn time_constant(grid: SpaceTimeGrid, slice: &[f64]) -> Result<Self> {
        if slice.len() != grid.space_nodes() {
            return Err(Error::Format(format!(
                "slice has {} values, grid has {} spatial nodes",
                slice.len(),
                grid.space_nodes()
            )));
        }
        let values = slice.iter().copied().cycle().take(grid.node_count()).collect();
        Self::new(grid, values)
    }

    pub fn from_fn(grid: SpaceTimeGrid, f: impl Fn(Point, f64) -> f64) -> Result<Self> {
        let ns = grid.space_nodes();
        let mut values = Vec::with_capacity(grid.node_count());
        for k in 0..grid.time_nodes() {
            let t = grid.time(k);
            values.extend((0..ns).map(|s| f(grid.space_point(s), t)));
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let ns = self.grid.space_nodes();
        &self.values[k * ns..(k + 1) * ns]
    }

    pub fn at(&self, node: NodeIndex) -> f64 {
        self.values[self.grid.flat_index(node)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        if !self.grid.same_nodes(&other.grid) {
            return Err(Error::Domain("fields live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Reinterprets the nodal values on the time-stretched grid (no resampling).
    pub fn rescale_time(&self, factor: f64) -> Result<Self> {
        Ok(Self {
            grid: self.grid.rescale_time(factor)?,
            values: self.values.clone(),
        })
    }

    /// Multilinear interpolation onto another grid over the same box and horizon.
    pub fn restrict(&self, target: &SpaceTimeGrid) -> Result<Self> {
        if !self.grid.same_box(target) {
            return Err(Error::Domain("target grid covers a different box or horizon".into()));
        }
        if self.grid.same_nodes(target) {
            return Ok(self.clone());
        }
        let src = &self.grid;
        let locate = |x: f64, a: f64, h: f64, n: usize| -> (usize, f64) {
            let pos = ((x - a) / h).clamp(0.0, n as f64);
            let c = (pos.floor() as usize).min(n - 1);
            (c, pos - c as f64)
        };
        let ns_src = src.space_nodes();
        let mut values = Vec::with_capacity(target.node_count());
        for k in 0..target.time_nodes() {
            let (kc, kw) = locate(target.time(k), 0.0, src.dt(), src.nt());
            for s in 0..target.space_nodes() {
                let p = target.space_point(s);
                let mut axes = [(0usize, 0.0f64); 2];
                for (a, ax) in axes.iter_mut().enumerate().take(src.dim()) {
                    *ax = locate(p[a], src.extents()[a][0], src.dx(a), src.nx()[a]);
                }
                let mut acc = 0.0;
                for dk in 0..2 {
                    let wk = if dk == 0 { 1.0 - kw } else { kw };
                    if wk == 0.0 {
                        continue;
                    }
                    for d0 in 0..2 {
                        let w0 = if d0 == 0 { 1.0 - axes[0].1 } else { axes[0].1 };
                        if w0 == 0.0 {
                            continue;
                        }
                        for d1 in 0..if src.dim() == 2 { 2 } else { 1 } {
                            let w1 = if src.dim() == 1 {
                                1.0
                            } else if d1 == 0 {
                                1.0 - axes[1].1
                            } else {
                                axes[1].1
                            };
                            if w1 == 0.0 {
                                continue;
                            }
                            let si = src.space_index([axes[0].0 + d0, axes[1].0 + d1]);
                            acc += wk * w0 * w1 * self.values[(kc + dk) * ns_src + si];
                        }
                    }
                }
                values.push(acc);
            }
        }
        Self::new(target.clone(), values)
    }
}
