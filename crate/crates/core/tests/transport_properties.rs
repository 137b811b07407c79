use proptest::prelude::*;

use elapsed_core::steady::steady_profile;
use elapsed_core::transport::{init_density, run_pde_from_field, step_pde, PdeOptions};
use elapsed_core::{builtin_model, evolve_activity, run_pde, steady_states, AgeGrid, BranchPolicy, InitialDensity};

#[test]
fn steady_profiles_are_fixed_points() {
    let m = builtin_model("double_gaussian", &[8.0, 0.1, 8.0, 3.0], 0.2).unwrap();
    let grid = AgeGrid::for_model(&m, m.sigma() / 200.0).unwrap();
    for n_star in steady_states(&m).roots {
        let field = steady_profile(&m, n_star, &grid).unwrap();
        let (next, n) = step_pde(&field, &m, n_star, &BranchPolicy::value(n_star)).unwrap();
        assert!((n - n_star).abs() <= 1e-12);
        assert!(next.max_abs_diff(&field) <= 1e-12, "{n_star}: {}", next.max_abs_diff(&field));
    }
}

#[test]
fn first_step_matches_the_delay_route() {
    let m = builtin_model("sigmoid", &[9.0, 3.5], 0.5).unwrap();
    let dt = m.sigma() / 200.0;
    let n0 = InitialDensity::builtin("plateau_exponential", &[1.0]).unwrap();
    let grid = AgeGrid::for_model(&m, dt).unwrap();
    let pde = run_pde(&m, &n0, &grid, dt, &BranchPolicy::branch(1), 0).unwrap();
    let delay = evolve_activity(&m, &n0, dt, dt, &BranchPolicy::branch(1)).unwrap();
    assert!((pde.trace.values[1] - delay.values[1]).abs() <= 2.0 * dt);
}

#[test]
fn empty_tail_gives_silence() {
    let m = builtin_model("sigmoid", &[9.0, 3.5], 0.5).unwrap();
    let grid = AgeGrid::for_model(&m, m.sigma() / 100.0).unwrap();
    let k = grid.refractory_cells;
    let (field, _) = init_density(|s| if s < 0.25 { 4.0 } else { 0.0 }, &grid).unwrap();
    let run = run_pde_from_field(&m, field.clone(), 10.0 * grid.ds, &BranchPolicy::branch(1), PdeOptions { snapshot_every: 10, ..Default::default() }).unwrap();
    assert!(run.trace.values.iter().all(|n| *n == 0.0));
    let last = run.snapshots.last().unwrap();
    assert_eq!(&last.values[10..k], &field.values[..k - 10]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fields_stay_nonnegative_and_mass_drift_is_first_order(
        slope in -0.5f64..0.5,
        onset in 0.0f64..1.0,
        steps in prop::sample::select(vec![50usize, 100]),
    ) {
        let m = builtin_model("affine", &[1.0, slope], 1.0).unwrap();
        let dt = m.sigma() / steps as f64;
        prop_assume!(dt * m.p_hi() < 1.0);
        let grid = AgeGrid::for_model(&m, dt).unwrap();
        let n0 = InitialDensity::builtin("exponential", &[onset]).unwrap();
        let run = run_pde(&m, &n0, &grid, 10.0 * m.sigma(), &BranchPolicy::branch(1), steps).unwrap();
        for snap in &run.snapshots {
            prop_assert!(snap.values.iter().all(|v| *v >= 0.0));
        }
        prop_assert!(run.max_mass_drift() <= 10.0 * dt);
    }
}
