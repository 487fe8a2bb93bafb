use diffctl_core::builtin::{advertising, constant_unit_cost, GridSpec};
use diffctl_core::sde::SimConfig;
use diffctl_core::verify::check_necessary;
use diffctl_core::{
    run_pipeline, simulate_path, solve_hjb, ControlGrid, ControlLaw, FeedbackPolicy, PipelineConfig, SolveOptions,
    SpatialGrid, Tolerances, Verifier,
};

fn small_pipeline(grid: GridSpec, controls: usize, x0s: Vec<f64>, tol: Tolerances) -> PipelineConfig {
    PipelineConfig {
        grid,
        controls,
        solve: SolveOptions::default(),
        sim: SimConfig { horizon: 12.0, dt: 1e-2, paths: 2_000, radius: 50.0, seed: 2024, tail_tol: 1e-2 },
        x0s,
        tolerances: tol,
        challenger_constants: 3,
        challenger_random: 2,
        corrupt_shift: 0.0,
        dynkin: None,
        moment_m: Some(2.0),
        necessary_paths: 2,
        simulate_transversality: false,
        negative_control: Some(0.2),
    }
}

#[test]
fn constant_problem_pipeline_passes_and_shift_fails() {
    let b = constant_unit_cost();
    let mut tol = Tolerances::for_problem(&b.problem);
    tol.lower_bound = 0.0;
    let cfg = small_pipeline(b.grid, b.controls, vec![0.0, 1.0], tol);
    let out = run_pipeline(&b.problem, &cfg).unwrap();
    assert!(out.report.verdict, "{}", out.report.render_text());
    for row in &out.summary {
        // the running cost is deterministic, so every estimate is exact up to quadrature
        assert!(row.se == 0.0);
        assert!((row.j_psi - 2.0).abs() < 0.02);
    }
    assert_eq!(out.negative_control.len(), 2);
    assert!(out.negative_control.iter().all(|c| !c.entry.passed));

    let corrupted = run_pipeline(&b.problem, &PipelineConfig { corrupt_shift: 0.2, ..cfg }).unwrap();
    assert!(!corrupted.report.verdict);
    assert!(corrupted.report.entries.iter().filter(|e| e.id == "optimality").all(|e| !e.passed));
}

#[test]
fn lower_bound_flags_value_above_a_challenger() {
    let b = advertising();
    let g = SpatialGrid::new(-4.0, 6.0, 401).unwrap();
    let cg = ControlGrid::uniform(&b.problem.control_set, 41).unwrap();
    let sol = solve_hjb(&b.problem, &g, &cg, &SolveOptions::default()).unwrap();
    let sim = SimConfig { horizon: 12.0, dt: 1e-2, paths: 2_000, radius: 50.0, seed: 5, tail_tol: 1e-2 };
    let mut tol = Tolerances::for_problem(&b.problem);
    tol.lower_bound = 0.0;
    let ver = Verifier::new(&b.problem, sim, tol);
    let challengers = [ControlLaw::Constant { u: 0.0 }, ControlLaw::Constant { u: 1.0 }];
    let honest = ver.check_lower_bound(&sol.value, &challengers, 0.5).unwrap();
    assert!(honest.iter().all(|e| e.passed));
    let inflated = ver.check_lower_bound(&sol.value.shifted(1.5), &challengers, 0.5).unwrap();
    assert!(inflated.iter().any(|e| !e.passed && e.detail.contains("offending control")));
}

#[test]
fn necessary_check_rejects_a_non_argmin_policy() {
    let b = advertising();
    let g = SpatialGrid::new(-4.0, 6.0, 401).unwrap();
    let cg = ControlGrid::uniform(&b.problem.control_set, 41).unwrap();
    let sol = solve_hjb(&b.problem, &g, &cg, &SolveOptions::default()).unwrap();
    let sim = SimConfig { horizon: 5.0, dt: 1e-2, paths: 4, radius: 50.0, seed: 8, tail_tol: 1.0 };
    let paths = |law: &ControlLaw| -> Vec<_> {
        (0..4).map(|i| simulate_path(&b.problem, law, 0.25, &sim, i).unwrap()).collect()
    };
    let good = check_necessary(&b.problem, &sol.value, &cg, &paths(&ControlLaw::feedback(sol.policy.clone())), 0.01)
        .unwrap();
    assert!(good.passed, "{}", good.detail);
    assert_eq!(good.measured, 0.0);
    let flipped: Vec<usize> = sol.policy.indices().iter().map(|&j| cg.len() - 1 - j).collect();
    let bad_policy = FeedbackPolicy::new(g, cg.clone(), flipped).unwrap();
    let bad = check_necessary(&b.problem, &sol.value, &cg, &paths(&ControlLaw::feedback(bad_policy)), 0.01).unwrap();
    assert!(!bad.passed);
    assert!(bad.detail.contains("not argmin"));
}

#[test]
fn refinement_entry_reports_control_grid_sizes() {
    let b = advertising();
    let g = SpatialGrid::new(-4.0, 6.0, 401).unwrap();
    let cg = ControlGrid::uniform(&b.problem.control_set, 41).unwrap();
    let (_, entries) = diffctl_core::verify::uniqueness_cross_check(
        &b.problem,
        &g,
        &cg,
        &SolveOptions::default(),
        &Tolerances::for_problem(&b.problem),
    )
    .unwrap();
    assert_eq!(entries.len(), 2);
    assert!(entries.iter().all(|e| e.passed));
    assert!(entries[1].detail.contains("K=41 -> 81"));
}
