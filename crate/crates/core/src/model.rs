//! The reaction term `f_gamma(u) = gamma * chi_{u>0} * u^(gamma-1)`, its
//! potential `u_+^gamma`, smoothed variants used for continuation, and the
//! catalog of initial data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;

/// Lower clamp for `u` in `f'_gamma(u) = gamma (gamma - 1) u^(gamma - 2)` when `gamma > 1`.
pub const SIGMA_MIN: f64 = 1e-10;

pub fn f_gamma(u: f64, gamma: f64) -> f64 {
    if u > 0.0 {
        if gamma == 1.0 {
            1.0
        } else {
            gamma * u.powf(gamma - 1.0)
        }
    } else {
        0.0
    }
}

/// `max(u, 0)^gamma`.
pub fn potential(u: f64, gamma: f64) -> f64 {
    if u > 0.0 {
        if gamma == 1.0 {
            u
        } else {
            u.powf(gamma)
        }
    } else {
        0.0
    }
}

/// Nondecreasing regularization of [`f_gamma`]; `sigma = 0` gives `f_gamma` back.
pub fn f_gamma_smoothed(u: f64, gamma: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return f_gamma(u, gamma);
    }
    if u <= 0.0 {
        return 0.0;
    }
    if gamma == 1.0 {
        (u / sigma).min(1.0)
    } else {
        // (u+s)^(g-1) - s^(g-1) without cancellation for u << s
        gamma * sigma.powf(gamma - 1.0) * ((gamma - 1.0) * (u / sigma).ln_1p()).exp_m1()
    }
}

/// Antiderivative of [`f_gamma_smoothed`] vanishing for `u <= 0`.
pub fn potential_smoothed(u: f64, gamma: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return potential(u, gamma);
    }
    if u <= 0.0 {
        return 0.0;
    }
    if gamma == 1.0 {
        if u < sigma {
            0.5 * u * u / sigma
        } else {
            u - 0.5 * sigma
        }
    } else {
        (u + sigma).powf(gamma) - sigma.powf(gamma) - gamma * sigma.powf(gamma - 1.0) * u
    }
}

/// The reaction term as seen by the discrete energies and the Newton solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nonlinearity {
    pub gamma: f64,
    pub sigma: f64,
    /// When false the reaction is switched off entirely (pure heat flow).
    pub enabled: bool,
}

impl Nonlinearity {
    pub fn new(gamma: f64, sigma: f64) -> Self {
        Self {
            gamma,
            sigma,
            enabled: true,
        }
    }

    pub fn disabled() -> Self {
        Self {
            gamma: 1.0,
            sigma: 0.0,
            enabled: false,
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        if self.enabled {
            f_gamma_smoothed(u, self.gamma, self.sigma)
        } else {
            0.0
        }
    }

    /// Limit of [`Self::value`] from above; differs from it only at `u = 0`
    /// for the unsmoothed `gamma = 1` indicator.
    pub fn value_right(&self, u: f64) -> f64 {
        if self.enabled && self.gamma == 1.0 && self.sigma <= 0.0 && u == 0.0 {
            1.0
        } else {
            self.value(u)
        }
    }

    pub fn potential(&self, u: f64) -> f64 {
        if self.enabled {
            potential_smoothed(u, self.gamma, self.sigma)
        } else {
            0.0
        }
    }

    /// Right derivative of [`Self::value`] on `u >= 0`, clamped away from the
    /// singularity at `0+` for `gamma > 1`.
    pub fn derivative(&self, u: f64) -> f64 {
        if !self.enabled {
            return 0.0;
        }
        let g = self.gamma;
        if g == 1.0 {
            if self.sigma > 0.0 && u < self.sigma {
                1.0 / self.sigma
            } else {
                0.0
            }
        } else if self.sigma > 0.0 {
            g * (g - 1.0) * (u.max(0.0) + self.sigma).powf(g - 2.0)
        } else {
            g * (g - 1.0) * u.max(SIGMA_MIN).powf(g - 2.0)
        }
    }
}

/// Exponent and amplitude of the stationary one-dimensional profile
/// `u(x) = A x_+^beta` solving `u'' = f_gamma(u)`.
pub fn alt_phillips_profile(gamma: f64) -> (f64, f64) {
    let beta = 2.0 / (2.0 - gamma);
    let amp = (gamma / (beta * (beta - 1.0))).powf(1.0 / (2.0 - gamma));
    (beta, amp)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Neumann,
    /// Lateral values held at the trace of `u0` on the boundary (homogeneous
    /// whenever `u0` vanishes there).
    Dirichlet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDatum {
    Zero,
    /// `height * (1 - (|x - c| / R)^2)^2` inside `B_R(c)`, zero outside.
    Bump {
        center: Vec<f64>,
        radius: f64,
        height: f64,
        /// Allow the support to stick out of the box.
        #[serde(default)]
        clip: bool,
    },
    /// `A (x1 - offset)_+^beta` with the stationary constants for the problem's gamma.
    AltPhillips {
        #[serde(default)]
        offset: f64,
    },
    /// Explicit nodal values of the `t = 0` slice.
    Tabulated { values: Vec<f64> },
}

impl InitialDatum {
    /// Nodal values on the spatial nodes of `grid`.
    pub fn sample(&self, gamma: f64, grid: &SpaceTimeGrid) -> Result<Vec<f64>> {
        let ns = grid.space_nodes();
        let values = match self {
            InitialDatum::Zero => vec![0.0; ns],
            InitialDatum::Bump {
                center,
                radius,
                height,
                clip,
            } => {
                if center.len() != grid.dim() {
                    return Err(Error::Parameter(format!(
                        "bump center has {} coordinates, problem is {}-dimensional",
                        center.len(),
                        grid.dim()
                    )));
                }
                if !(*radius > 0.0) || !(*height >= 0.0) {
                    return Err(Error::Parameter("bump radius must be positive and height nonnegative".into()));
                }
                let fits = (0..grid.dim()).all(|a| {
                    let e = grid.extents()[a];
                    center[a] - radius >= e[0] && center[a] + radius <= e[1]
                });
                if !fits && !clip {
                    return Err(Error::Domain(format!(
                        "bump of radius {radius} around {center:?} leaves the box; set clip = true to truncate it"
                    )));
                }
                (0..ns)
                    .map(|s| {
                        let p = grid.space_point(s);
                        let d2: f64 = (0..grid.dim()).map(|a| (p[a] - center[a]).powi(2)).sum();
                        let q = 1.0 - d2 / (radius * radius);
                        if q > 0.0 {
                            height * q * q
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            InitialDatum::AltPhillips { offset } => {
                let (beta, amp) = alt_phillips_profile(gamma);
                (0..ns)
                    .map(|s| {
                        let x = grid.space_point(s)[0] - offset;
                        if x > 0.0 {
                            amp * x.powf(beta)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            InitialDatum::Tabulated { values } => {
                if values.len() != ns {
                    return Err(Error::Format(format!(
                        "tabulated initial datum has {} values, grid has {ns} spatial nodes",
                        values.len()
                    )));
                }
                values.clone()
            }
        };
        if let Some(p) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data(format!("initial datum value {} at node {p} is not finite and nonnegative", values[p])));
        }
        Ok(values)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub gamma: f64,
    pub epsilon: f64,
    pub dim: usize,
    pub bc: BoundaryCondition,
    pub initial: InitialDatum,
    /// Continuation parameter for the reaction term; 0 is the actual model.
    pub smoothing_sigma: f64,
}

impl ProblemSpec {
    pub fn new(gamma: f64, epsilon: f64, dim: usize, bc: BoundaryCondition, initial: InitialDatum) -> Result<Self> {
        let spec = Self {
            gamma,
            epsilon,
            dim,
            bc,
            initial,
            smoothing_sigma: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 1.0 && self.gamma < 2.0) {
            return Err(Error::Parameter(format!(
                "gamma = {} is outside the admissible range [1,2)",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Parameter(format!(
                "epsilon = {} is outside the admissible range (0,1]",
                self.epsilon
            )));
        }
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::Parameter(format!("dimension {} is not supported (1 or 2)", self.dim)));
        }
        if !(self.smoothing_sigma >= 0.0 && self.smoothing_sigma.is_finite()) {
            return Err(Error::Parameter(format!("smoothing_sigma = {} must be >= 0", self.smoothing_sigma)));
        }
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut s = self.clone();
        s.epsilon = epsilon;
        s.validate()?;
        Ok(s)
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        Nonlinearity::new(self.gamma, self.smoothing_sigma)
    }

    /// `u0` sampled on the spatial nodes of `grid`.
    pub fn sample_initial(&self, grid: &SpaceTimeGrid) -> Result<Vec<f64>> {
        self.validate()?;
        if grid.dim() != self.dim {
            return Err(Error::Parameter(format!(
                "problem dimension {} does not match grid dimension {}",
                self.dim,
                grid.dim()
            )));
        }
        self.initial.sample(self.gamma, grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f_gamma_examples() {
        assert_eq!(f_gamma(0.7, 1.0), 1.0);
        assert_eq!(f_gamma(-0.2, 1.5), 0.0);
        assert_eq!(f_gamma(4.0, 1.5), 3.0);
        assert_eq!(f_gamma(0.0, 1.0), 0.0);
    }

    #[test]
    fn potential_examples() {
        assert_eq!(potential(0.0, 1.3), 0.0);
        assert_eq!(potential(2.0, 1.0), 2.0);
        assert!((potential(2.0, 1.5) - 2.0f64.powf(1.5)).abs() < 1e-15);
        assert!((potential(2.0, 1.5) - 2.828427124746190).abs() < 1e-14);
    }

    #[test]
    fn smoothed_examples() {
        for &(u, g) in &[(0.3, 1.0), (2.0, 1.5), (0.01, 1.2)] {
            assert_eq!(f_gamma_smoothed(u, g, 0.0), f_gamma(u, g));
        }
        let s = 0.04;
        assert!((f_gamma_smoothed(s / 2.0, 1.0, s) - 0.5).abs() < 1e-15);
        assert_eq!(f_gamma_smoothed(-1.0, 1.5, 0.1), 0.0);
        // converges to f_gamma away from 0
        for &g in &[1.0, 1.25, 1.5, 1.9] {
            let d = (f_gamma_smoothed(0.5, g, 1e-40) - f_gamma(0.5, g)).abs();
            assert!(d < 1e-6, "gamma {g}: {d}");
        }
    }

    #[test]
    fn smoothed_potential_derivative() {
        for &g in &[1.0, 1.5] {
            for &s in &[0.1, 0.01] {
                for &u in &[0.003, 0.05, 0.4, 1.3] {
                    let h = 1e-7;
                    let fd = (potential_smoothed(u + h, g, s) - potential_smoothed(u - h, g, s)) / (2.0 * h);
                    assert!((fd - f_gamma_smoothed(u, g, s)).abs() < 1e-6, "g={g} s={s} u={u}");
                }
            }
        }
    }

    #[test]
    fn alt_phillips_examples() {
        let (b, a) = alt_phillips_profile(1.0);
        assert_eq!((b, a), (2.0, 0.5));
        let (b, a) = alt_phillips_profile(1.5);
        assert!((b - 4.0).abs() < 1e-14 && (a - 1.0 / 64.0).abs() < 1e-16);
        let (b, a) = alt_phillips_profile(4.0 / 3.0);
        assert!((b - 3.0).abs() < 1e-12);
        assert!((a - (2.0f64 / 9.0).powf(1.5)).abs() < 1e-14);
        assert!((a - 0.104757).abs() < 1e-6);
    }

    #[test]
    fn alt_phillips_residual_vanishes() {
        for &g in &[1.0, 1.2, 4.0 / 3.0, 1.5, 1.8] {
            let (b, a) = alt_phillips_profile(g);
            for j in 1..=10 {
                let x = j as f64 / 10.0;
                let lhs = a * b * (b - 1.0) * x.powf(b - 2.0);
                let rhs = g * (a * x.powf(b)).powf(g - 1.0);
                assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + rhs.abs()), "g={g} x={x}");
            }
        }
    }

    #[test]
    fn sample_initial_examples() {
        let g = SpaceTimeGrid::new(1, &[[-1.0, 1.0]], &[8], 1.0, 2).unwrap();
        let z = ProblemSpec::new(1.0, 0.1, 1, BoundaryCondition::Neumann, InitialDatum::Zero).unwrap();
        assert!(z.sample_initial(&g).unwrap().iter().all(|&v| v == 0.0));

        let ap = ProblemSpec::new(1.0, 0.1, 1, BoundaryCondition::Dirichlet, InitialDatum::AltPhillips { offset: 0.0 })
            .unwrap();
        let vals = ap.sample_initial(&g).unwrap();
        for (s, v) in vals.iter().enumerate() {
            let x = g.space_point(s)[0];
            assert_eq!(*v, if x > 0.0 { 0.5 * x * x } else { 0.0 });
        }

        let big = InitialDatum::Bump {
            center: vec![0.0],
            radius: 2.0,
            height: 1.0,
            clip: false,
        };
        assert!(matches!(big.sample(1.0, &g), Err(Error::Domain(_))));
        let clipped = InitialDatum::Bump {
            center: vec![0.0],
            radius: 2.0,
            height: 1.0,
            clip: true,
        };
        let v = clipped.sample(1.0, &g).unwrap();
        assert_eq!(v[4], 1.0);
        assert!(v[0] > 0.0);

        let tab = InitialDatum::Tabulated { values: vec![0.0; 3] };
        assert!(matches!(tab.sample(1.0, &g), Err(Error::Format(_))));
        let neg = InitialDatum::Tabulated { values: vec![-1.0; 9] };
        assert!(matches!(neg.sample(1.0, &g), Err(Error::Data(_))));
    }

    #[test]
    fn spec_rejects_out_of_range() {
        for g in [0.5, 2.0, 0.0, f64::NAN] {
            let e = ProblemSpec::new(g, 0.1, 1, BoundaryCondition::Neumann, InitialDatum::Zero).unwrap_err();
            assert!(e.to_string().contains("[1,2)"));
        }
        assert!(ProblemSpec::new(1.0, 0.0, 1, BoundaryCondition::Neumann, InitialDatum::Zero).is_err());
        assert!(ProblemSpec::new(1.0, 1.5, 1, BoundaryCondition::Neumann, InitialDatum::Zero).is_err());
        assert!(ProblemSpec::new(1.0, 1.0, 1, BoundaryCondition::Neumann, InitialDatum::Zero).is_ok());
    }

    proptest! {
        #[test]
        fn potential_is_convex(u1 in -3.0f64..3.0, u2 in -3.0f64..3.0, lam in 0.0f64..1.0, g in 1.0f64..1.99) {
            let mid = potential(lam * u1 + (1.0 - lam) * u2, g);
            let chord = lam * potential(u1, g) + (1.0 - lam) * potential(u2, g);
            prop_assert!(mid <= chord + 1e-12);
        }

        #[test]
        fn potential_derivative_matches_f(u in 0.1f64..3.0, neg in any::<bool>(), g in 1.01f64..1.99) {
            let u = if neg { -u } else { u };
            let h = 1e-4;
            let fd = (potential(u + h, g) - potential(u - h, g)) / (2.0 * h);
            let f = f_gamma(u, g);
            prop_assert!((fd - f).abs() <= 1e-5 * f.abs().max(1e-12) || (f == 0.0 && fd == 0.0));
        }

        #[test]
        fn smoothed_is_monotone(u in -2.0f64..2.0, du in 0.0f64..1.0, g in 1.0f64..1.99, s in 0.0f64..0.5) {
            prop_assert!(f_gamma_smoothed(u + du, g, s) >= f_gamma_smoothed(u, g, s));
        }
    }
}
