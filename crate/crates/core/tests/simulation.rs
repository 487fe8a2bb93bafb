use diffctl_core::builtin::{advertising, constant_unit_cost};
use diffctl_core::problem::{GrowthBound, ProblemMetadata, SeparableCoeff};
use diffctl_core::sde::{dynkin_residual, exit_time, mean_and_se, states_at_steps};
use diffctl_core::{
    estimate_cost, simulate_path, solve_hjb, CoefficientExpr, ControlGrid, ControlLaw, ControlProblem, ControlSet,
    SimConfig, SolveOptions, SpatialGrid, ValueField,
};

/// Standard Brownian motion with running cost `l`.
fn brownian(rho: f64, cost: CoefficientExpr, growth: GrowthBound) -> ControlProblem {
    ControlProblem::new(
        rho,
        ControlSet::interval(0.0, 1.0),
        SeparableCoeff::constant(0.0),
        SeparableCoeff::constant(1.0),
        SeparableCoeff::state_only(cost),
        ProblemMetadata {
            state_dim: 1,
            ellipticity: 1.0,
            allow_degenerate: false,
            drift_bound: Some(0.0),
            diffusion_bound: Some(1.0),
            cost_bound: None,
            growth,
        },
    )
    .unwrap()
}

fn cfg(horizon: f64, dt: f64, paths: usize, radius: f64, seed: u64) -> SimConfig {
    SimConfig { horizon, dt, paths, radius, seed, tail_tol: 1e3 }
}

const ZERO: ControlLaw = ControlLaw::Constant { u: 0.0 };

#[test]
fn brownian_variance_grows_linearly() {
    let p = brownian(1.0, CoefficientExpr::constant(0.0), GrowthBound { c: 1.0, m: 0.0 });
    let c = cfg(2.0, 1e-2, 20_000, 1e6, 11);
    let states = states_at_steps(&p, &ZERO, 0.0, &c, &[50, 100, 200]).unwrap();
    for (col, t) in states.iter().zip([0.5, 1.0, 2.0]) {
        let (m, se) = mean_and_se(col);
        assert!(m.abs() <= 4.0 * se, "mean {m} at t={t}");
        let sq: Vec<f64> = col.iter().map(|y| y * y).collect();
        let (v, se) = mean_and_se(&sq);
        assert!((v - t).abs() <= 4.0 * se, "E y^2 = {v} at t={t}");
    }
}

#[test]
fn brownian_exit_time_from_unit_interval() {
    // E tau = R^2 - x0^2 for |x0| < R
    let c = cfg(20.0, 1e-3, 20_000, 1.0, 5);
    let p = brownian(1.0, CoefficientExpr::constant(0.0), GrowthBound { c: 1.0, m: 0.0 });
    for x0 in [0.0, 0.5] {
        let times: Vec<f64> = (0..c.paths as u64)
            .map(|i| exit_time(&simulate_path(&p, &ZERO, x0, &c, i).unwrap(), 1.0))
            .collect();
        let (m, se) = mean_and_se(&times);
        // discrete monitoring overshoots by about 0.5826 sqrt(dt) per side
        let bias = 2.0 * 0.5826 * c.dt.sqrt() * (1.0 - x0 * x0).sqrt();
        assert!((m - (1.0 - x0 * x0)).abs() <= 3.0 * se + bias, "x0={x0}: {m} +- {se}");
    }
}

#[test]
fn discounted_quadratic_cost_closed_form() {
    // E int e^{-rho t} (x0^2 + t) dt = x0^2 / rho + 1 / rho^2
    let p = brownian(1.0, CoefficientExpr::polynomial(vec![0.0, 0.0, 1.0]), GrowthBound { c: 1.0, m: 2.0 });
    let c = cfg(14.0, 1e-2, 20_000, 1e6, 3);
    let est = estimate_cost(&p, &ZERO, 0.5, &c).unwrap();
    let exact = 0.25 + 1.0;
    let tail = (-14.0f64).exp() * (0.25 + 14.0 + 1.0 + 1.0);
    assert!((est.mean - exact).abs() <= 3.0 * est.se + tail + 0.01, "{} +- {}", est.mean, est.se);
}

#[test]
fn dynkin_identity_for_square() {
    // v = x^2, b = 0, sigma = 1: generator term is 1 - rho x^2
    let p = brownian(1.0, CoefficientExpr::constant(0.0), GrowthBound { c: 1.0, m: 0.0 });
    let g = SpatialGrid::new(-6.0, 6.0, 1201).unwrap();
    let v = ValueField::from_fn(g, |x| x * x).unwrap();
    let c = cfg(1.0, 1e-3, 20_000, 5.0, 21);
    let d = dynkin_residual(&p, &v, &ZERO, 0.3, &c, 1.0, 5.0).unwrap();
    assert!(d.residual.abs() <= 3.0 * d.se + 1e-3, "{} +- {}", d.residual, d.se);
}

#[test]
fn standard_error_scales_with_inverse_root_paths() {
    let b = advertising();
    let law = ControlLaw::Constant { u: 0.5 };
    let se = |m: usize| estimate_cost(&b.problem, &law, 0.0, &cfg(4.0, 1e-2, m, 50.0, 9)).unwrap().se;
    let ratio = se(1_000) / se(16_000);
    assert!((ratio - 4.0).abs() <= 0.6, "ratio {ratio}");
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let b = advertising();
    let g = SpatialGrid::new(-4.0, 6.0, 401).unwrap();
    let cg = ControlGrid::uniform(&b.problem.control_set, 41).unwrap();
    let sol = solve_hjb(&b.problem, &g, &cg, &SolveOptions::default()).unwrap();
    let law = ControlLaw::feedback(sol.policy);
    let c = cfg(3.0, 1e-2, 3_000, 50.0, 77);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_cost(&b.problem, &law, 0.25, &c).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.mean.to_bits(), four.mean.to_bits());
    assert_eq!(one.se.to_bits(), four.se.to_bits());
}

#[test]
fn seed_changes_draws_but_not_the_estimate() {
    let b = constant_unit_cost();
    let p = brownian(0.5, CoefficientExpr::polynomial(vec![0.0, 0.0, 1.0]), GrowthBound { c: 1.0, m: 2.0 });
    let a = simulate_path(&b.problem, &ZERO, 0.0, &cfg(1.0, 1e-2, 1, 10.0, 1), 0).unwrap();
    let z = simulate_path(&b.problem, &ZERO, 0.0, &cfg(1.0, 1e-2, 1, 10.0, 2), 0).unwrap();
    assert_ne!(a.increments, z.increments);
    let e1 = estimate_cost(&p, &ZERO, 0.0, &cfg(6.0, 1e-2, 5_000, 1e6, 1)).unwrap();
    let e2 = estimate_cost(&p, &ZERO, 0.0, &cfg(6.0, 1e-2, 5_000, 1e6, 2)).unwrap();
    assert!((e1.mean - e2.mean).abs() <= 3.0 * (e1.se.powi(2) + e2.se.powi(2)).sqrt());
}
