mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wied_core::diagnostics::level_constant;
use wied_core::model::f_gamma;
use wied_core::*;

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

#[test]
fn zero_datum_gives_zero_minimizer() {
    let spec = zero_spec(0.1, BoundaryCondition::Neumann);
    let grid = line(16, 1.0, 16);
    let (u, rep) = minimize(&spec, &grid, &cfg()).unwrap();
    assert!(rep.converged);
    assert!(u.values().iter().all(|&v| v == 0.0));
    assert_eq!(rep.energy.total, 0.0);
    let (v, _) = solve_scaled(&spec, &grid.rescale_time(10.0).unwrap(), &cfg()).unwrap();
    assert!(v.values().iter().all(|&x| x == 0.0));
}

#[test]
fn config_validation() {
    let mut c = cfg();
    c.sigma_schedule = vec![1e-2, 1e-2, 0.0];
    assert!(c.validate().is_err());
    c.sigma_schedule = vec![1e-2, 1e-3];
    assert!(c.validate().is_err());
    c = cfg();
    c.tol_grad = 0.0;
    assert!(c.validate().is_err());
    assert!(cfg().validate().is_ok());
}

fn perturbed_start(spec: &ProblemSpec, grid: &SpaceTimeGrid, seed: u64, amp: f64) -> ScalarField {
    let u0 = spec.sample_initial(grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = grid.space_nodes();
    let vals: Vec<f64> = (0..grid.node_count()).map(|i| u0[i % ns] + amp * rng.gen::<f64>()).collect();
    ScalarField::new(grid.clone(), vals).unwrap()
}

fn stationary_case(gamma: f64, nx: usize, nt: usize) -> f64 {
    let spec = profile_spec(gamma, 0.1);
    let grid = line(nx, 1.0, nt);
    let init = perturbed_start(&spec, &grid, 7, 0.05);
    let (u, rep) = minimize_from(&spec, &init, &cfg()).unwrap();
    assert!(rep.converged);
    let exact = ScalarField::from_fn(grid, |p, _| profile(gamma, p[0])).unwrap();
    u.sup_distance(&exact).unwrap()
}

#[test]
fn stationary_profile_gamma_one() {
    let d = stationary_case(1.0, 32, 32);
    // the sampled profile solves the discrete problem exactly
    assert!(d < 1e-8, "{d}");
}

#[test]
fn stationary_profile_gamma_three_halves() {
    let d1 = stationary_case(1.5, 16, 16);
    let d2 = stationary_case(1.5, 32, 32);
    let h2 = (2.0f64 / 16.0).powi(2);
    assert!(d1 < 0.1 * h2, "{d1}");
    assert!(d2 < d1, "{d2} vs {d1}");
}

/// Direct stencil evaluation, independent of the assembly in the library.
fn stencil_residual(u: &[f64], grid: &SpaceTimeGrid, eps: f64, gamma: f64, dirichlet: bool) -> Vec<f64> {
    let nx = grid.nx()[0];
    let ns = nx + 1;
    let nt = grid.nt();
    let (dx, dt) = (grid.dx(0), grid.dt());
    let w: Vec<f64> = (0..nt)
        .map(|k| (-(k as f64) * dt / eps).exp() * (1.0 - (-dt / eps).exp()))
        .collect();
    let mut out = vec![0.0; u.len()];
    for k in 1..=nt {
        for i in 0..ns {
            if dirichlet && (i == 0 || i == nx) {
                continue;
            }
            let at = |kk: usize, ii: usize| u[kk * ns + ii];
            let (wm, wp) = (w[k - 1], if k < nt { w[k] } else { 0.0 });
            let big_w = 0.5 * (wm + wp);
            let mut r = eps / (dt * dt) * (wm / big_w) * (at(k, i) - at(k - 1, i));
            if k < nt {
                r -= eps / (dt * dt) * (wp / big_w) * (at(k + 1, i) - at(k, i));
            }
            let lap = if i == 0 {
                2.0 * (at(k, 1) - at(k, 0)) / (dx * dx)
            } else if i == nx {
                2.0 * (at(k, nx - 1) - at(k, nx)) / (dx * dx)
            } else {
                (at(k, i + 1) - 2.0 * at(k, i) + at(k, i - 1)) / (dx * dx)
            };
            out[k * ns + i] = r - lap + f_gamma(at(k, i), gamma);
        }
    }
    out
}

#[test]
fn el_residual_matches_direct_stencil() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for &(gamma, bc) in &[
        (1.5, BoundaryCondition::Neumann),
        (1.0, BoundaryCondition::Dirichlet),
        (1.25, BoundaryCondition::Dirichlet),
    ] {
        let grid = line(4, 0.8, 4);
        let spec = ProblemSpec::new(gamma, 0.3, 1, bc, InitialDatum::Zero).unwrap();
        let vals: Vec<f64> = (0..grid.node_count()).map(|_| rng.gen_range(-0.2..1.0)).collect();
        let field = ScalarField::new(grid.clone(), vals.clone()).unwrap();
        let got = el_residual(&field, &spec).unwrap();
        let want = stencil_residual(&vals, &grid, 0.3, gamma, bc == BoundaryCondition::Dirichlet);
        for (a, b) in got.values().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn el_residual_of_zero_and_profile() {
    let spec = zero_spec(0.2, BoundaryCondition::Neumann);
    let grid = line(8, 1.0, 8);
    let r = el_residual(&ScalarField::zeros(grid), &spec).unwrap();
    assert!(r.values().iter().all(|&v| v == 0.0));

    // quartic profile: interior residual is the O(h^2) stencil error
    let mut prev = f64::INFINITY;
    for &nx in &[16usize, 32, 64] {
        let spec = profile_spec(1.5, 0.1);
        let grid = line(nx, 1.0, 8);
        let u = ScalarField::from_fn(grid.clone(), |p, _| profile(1.5, p[0])).unwrap();
        let r = el_residual(&u, &spec).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..r.values().len() {
            let node = grid.node(i);
            let x = grid.axis_coord(0, node.i[0]);
            if node.k >= 1 && x > 0.2 && x < 0.9 {
                worst = worst.max(r.values()[i].abs());
            }
        }
        let h = grid.dx(0);
        assert!(worst <= h * h / 16.0, "nx {nx}: {worst}");
        assert!(worst < prev);
        prev = worst;
    }
}

#[test]
fn double_inequality_examples() {
    let spec = profile_spec(1.0, 0.1);
    let grid = line(32, 1.0, 32);
    let u = ScalarField::from_fn(grid.clone(), |p, _| profile(1.0, p[0])).unwrap();
    let d = double_inequality_check(&u, &spec, 1e-8).unwrap();
    assert!(d.max_defect() < 1e-12, "{d:?}");

    let z = ScalarField::zeros(grid.clone());
    let d = double_inequality_check(&z, &zero_spec(0.1, BoundaryCondition::Neumann), 1e-8).unwrap();
    assert_eq!(d.positive_nodes, 0);
    assert_eq!(d.max_l, 0.0);
    assert_eq!(d.upper, 0.0);

    let spec15 = profile_spec(1.5, 0.1);
    assert!(matches!(double_inequality_check(&u, &spec15, 1e-8), Err(Error::Usage(_))));
}

#[test]
fn double_inequality_shrinks_under_refinement() {
    let spec = bump_spec(1.0, 0.1, 1);
    let mut defects = Vec::new();
    for &(nx, nt) in &[(32usize, 64usize), (64, 128)] {
        let (u, rep) = minimize(&spec, &line(nx, 1.0, nt), &cfg()).unwrap();
        let theta = diagnostics::default_theta(rep.target, 0.25);
        defects.push(double_inequality_check(&u, &spec, theta).unwrap().max_defect());
    }
    assert!(defects[0] >= 2.0 * defects[1], "{defects:?}");
}

#[test]
fn scaled_solve_matches_weighted_solve() {
    let spec = bump_spec(1.0, 0.1, 1);
    let grid = line(32, 1.0, 64);
    let (u, ru) = minimize(&spec, &grid, &cfg()).unwrap();
    let grid_v = grid.rescale_time(1.0 / spec.epsilon).unwrap();
    let (v, rv) = solve_scaled(&spec, &grid_v, &cfg()).unwrap();
    let d = u.rescale_time(1.0 / spec.epsilon).unwrap().sup_distance(&v).unwrap();
    assert!(d <= 1e-7, "{d}");
    let j = rv.energy.total;
    assert!((spec.epsilon * ru.energy.total - j).abs() <= 1e-8 * (1.0 + j));
}

#[test]
fn minimizer_properties() {
    let spec = bump_spec(1.5, 0.1, 1);
    let grid = line(32, 1.0, 64);
    let (u, rep) = minimize(&spec, &grid, &cfg()).unwrap();
    let u0 = spec.sample_initial(&grid).unwrap();
    let u0max = u0.iter().copied().fold(0.0, f64::max);

    // trace and positivity / maximum bound
    assert_eq!(u.slice(0), &u0[..]);
    assert!(u.min() >= -1e-8 * (1.0 + u0max));
    assert!(u.max() <= u0max + 1e-8);

    // uniqueness from two random starts
    for seed in [11u64, 12] {
        let init = perturbed_start(&spec, &grid, seed, 0.3);
        let (w, r) = minimize_from(&spec, &init, &cfg()).unwrap();
        let d = w.sup_distance(&u).unwrap();
        assert!(d <= 10.0 * rep.target.max(r.target), "seed {seed}: {d}");
    }

    // minimality against competitors
    let e = weighted_energy(&u, &spec).unwrap().total;
    let ns = grid.space_nodes();
    let mut competitors = vec![ScalarField::time_constant(grid.clone(), &u0).unwrap()];
    competitors.push(ScalarField::from_fn(grid.clone(), |_, _| 0.0).unwrap());
    competitors.push(
        ScalarField::from_fn(grid.clone(), |p, t| {
            let x: f64 = p[0];
            (0.25 * (1.0 - 4.0 * x * x).max(0.0).powi(2) - t).max(0.0)
        })
        .unwrap(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    competitors.push(
        ScalarField::new(
            grid.clone(),
            u.values().iter().map(|v| (v + 1e-3 * rng.gen_range(-1.0..1.0)).max(0.0)).collect(),
        )
        .unwrap(),
    );
    let (heat, _) = solve_parabolic(&spec, &grid, &cfg(), true).unwrap();
    competitors.push(heat);
    for (i, c) in competitors.iter_mut().enumerate() {
        let mut vals = c.values().to_vec();
        vals[..ns].copy_from_slice(&u0);
        let c = ScalarField::new(grid.clone(), vals).unwrap();
        let ec = weighted_energy(&c, &spec).unwrap().total;
        assert!(e <= ec, "competitor {i}: {e} > {ec}");
    }

    // energy level
    let j = spec.epsilon * rep.energy.total;
    assert!(j <= spec.epsilon * level_constant(&spec, &grid).unwrap());
}

#[test]
fn non_convergence_is_reported() {
    let spec = bump_spec(1.0, 0.1, 1);
    let mut c = cfg();
    c.max_newton = 1;
    c.sigma_schedule = vec![0.0];
    match minimize(&spec, &line(32, 1.0, 32), &c) {
        Err(Error::NonConvergence { iterations, .. }) => assert_eq!(iterations, 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn report_serializes() {
    let spec = bump_spec(1.0, 0.2, 1);
    let (_, rep) = minimize(&spec, &line(16, 1.0, 16), &cfg()).unwrap();
    let text = serde_json::to_string(&rep).unwrap();
    let back: SolveReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, rep);
    assert!(rep.converged && rep.residual <= rep.target);
}
