mod common;

use common::*;
use wied_core::reference::{bump_bank, solve_parabolic, strong_residual};
use wied_core::*;

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn integral(grid: &SpaceTimeGrid, slice: &[f64]) -> f64 {
    grid.space_weights().iter().zip(slice).map(|(w, v)| w * v).sum()
}

#[test]
fn zero_datum_stays_zero() {
    let spec = zero_spec(0.1, BoundaryCondition::Neumann);
    let (u, log) = solve_parabolic(&spec, &line(16, 1.0, 10), &cfg(), true).unwrap();
    assert!(u.values().iter().all(|&v| v == 0.0));
    assert_eq!(log.steps.len(), 10);
    assert!(log.to_csv().starts_with("step,newton_iters,residual\n"));
}

#[test]
fn stationary_profile_is_kept() {
    for &gamma in &[1.0, 1.5] {
        let spec = profile_spec(gamma, 0.1);
        let grid = line(32, 0.5, 20);
        let (u, _) = solve_parabolic(&spec, &grid, &cfg(), true).unwrap();
        let exact = ScalarField::from_fn(grid.clone(), |p, _| profile(gamma, p[0])).unwrap();
        let h = grid.dx(0);
        let d = u.sup_distance(&exact).unwrap();
        assert!(d <= 0.1 * h * h, "gamma {gamma}: {d}");
    }
}

#[test]
fn heat_flow_obeys_maximum_principle_and_conserves_mass() {
    let spec = ProblemSpec::new(1.0, 0.1, 1, BoundaryCondition::Neumann, bump(1)).unwrap();
    let grid = line(64, 1.0, 128);
    let (u, _) = solve_parabolic(&spec, &grid, &cfg(), false).unwrap();
    let m0 = integral(&grid, u.slice(0));
    for k in 1..=grid.nt() {
        let prev = u.slice(k - 1).iter().copied().fold(f64::MIN, f64::max);
        let cur = u.slice(k).iter().copied().fold(f64::MIN, f64::max);
        assert!(cur <= prev, "step {k}");
        let m = integral(&grid, u.slice(k));
        assert!((m - m0).abs() <= 1e-10 * m0, "step {k}: {m} vs {m0}");
    }
}

#[test]
fn positivity_is_preserved() {
    for &gamma in &[1.0, 1.5] {
        let spec = bump_spec(gamma, 0.1, 1);
        let (u, _) = solve_parabolic(&spec, &line(64, 1.0, 64), &cfg(), true).unwrap();
        assert!(u.min() >= -1e-10);
        if gamma == 1.0 {
            // the reaction extinguishes the bump before T
            assert!(u.slice(64).iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn step_failures_name_the_step() {
    let spec = bump_spec(1.5, 0.1, 1);
    let mut c = cfg();
    c.max_newton = 1;
    match solve_parabolic(&spec, &line(32, 1.0, 8), &c, true) {
        Err(Error::Step { step, source }) => {
            assert_eq!(step, 1);
            assert!(matches!(*source, Error::NonConvergence { .. }));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn bank_is_interior() {
    let grid = square(16, 1.0, 16);
    let bank = bump_bank(&grid, 12);
    assert_eq!(bank.len(), 12);
    for b in &bank {
        assert!(b.time - b.duration > 0.0 && b.time + b.duration < 1.0);
        for c in &b.center {
            assert!(c - b.radius > -1.0 && c + b.radius < 1.0);
        }
    }
}

#[test]
fn strong_residual_examples() {
    let spec = zero_spec(0.1, BoundaryCondition::Neumann);
    let grid = line(16, 1.0, 16);
    let bank = bump_bank(&grid, 10);
    assert_eq!(strong_residual(&ScalarField::zeros(grid), &spec, &bank).unwrap(), 0.0);

    let spec = bump_spec(1.0, 0.1, 1);
    let mut res = Vec::new();
    let mut mismatch = Vec::new();
    for &(nx, nt) in &[(32usize, 64usize), (64, 256)] {
        let grid = line(nx, 1.0, nt);
        let bank = bump_bank(&grid, 10);
        let (u, _) = solve_parabolic(&spec, &grid, &cfg(), true).unwrap();
        res.push(strong_residual(&u, &spec, &bank).unwrap());
        let (heat, _) = solve_parabolic(&spec, &grid, &cfg(), false).unwrap();
        mismatch.push(strong_residual(&heat, &spec, &bank).unwrap());
    }
    assert!(res[1] < res[0], "{res:?}");
    // a heat flow is not a solution: the reaction term leaves a fixed defect
    assert!(mismatch[1] > 10.0 * res[1], "{mismatch:?} vs {res:?}");
    assert!(mismatch[1] > 0.5 * mismatch[0]);
}
