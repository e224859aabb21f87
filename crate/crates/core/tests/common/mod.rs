#![allow(dead_code)]

use wied_core::{BoundaryCondition, InitialDatum, ProblemSpec, SpaceTimeGrid};

pub fn line(nx: usize, t_end: f64, nt: usize) -> SpaceTimeGrid {
    SpaceTimeGrid::new(1, &[[-1.0, 1.0]], &[nx], t_end, nt).unwrap()
}

pub fn square(n: usize, t_end: f64, nt: usize) -> SpaceTimeGrid {
    SpaceTimeGrid::new(2, &[[-1.0, 1.0], [-1.0, 1.0]], &[n, n], t_end, nt).unwrap()
}

pub fn bump(dim: usize) -> InitialDatum {
    InitialDatum::Bump {
        center: vec![0.0; dim],
        radius: 0.5,
        height: 0.25,
        clip: false,
    }
}

pub fn bump_spec(gamma: f64, eps: f64, dim: usize) -> ProblemSpec {
    ProblemSpec::new(gamma, eps, dim, BoundaryCondition::Dirichlet, bump(dim)).unwrap()
}

pub fn profile_spec(gamma: f64, eps: f64) -> ProblemSpec {
    ProblemSpec::new(gamma, eps, 1, BoundaryCondition::Dirichlet, InitialDatum::AltPhillips { offset: 0.0 }).unwrap()
}

pub fn zero_spec(eps: f64, bc: BoundaryCondition) -> ProblemSpec {
    ProblemSpec::new(1.0, eps, 1, bc, InitialDatum::Zero).unwrap()
}

/// `A x_+^beta`, the stationary profile.
pub fn profile(gamma: f64, x: f64) -> f64 {
    let (beta, a) = wied_core::model::alt_phillips_profile(gamma);
    a * x.max(0.0).powf(beta)
}
