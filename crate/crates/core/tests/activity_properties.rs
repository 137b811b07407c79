use proptest::prelude::*;

use elapsed_core::{builtin_model, classify_regime, evolve_activity, steady_states, ActivityTrace, BranchPolicy, FiringModel, InitialDensity, RegimeTag};

fn sigmoid() -> FiringModel {
    builtin_model("sigmoid", &[9.0, 3.5], 0.5).unwrap()
}

fn density(kind: usize, p: f64) -> InitialDensity {
    match kind {
        0 => InitialDensity::builtin("exponential", &[p]).unwrap(),
        1 => InitialDensity::builtin("plateau_exponential", &[p]).unwrap(),
        _ => InitialDensity::builtin("cosine_exponential", &[]).unwrap(),
    }
}

/// Longest run of strictly monotone steps whose values span more than `flat`.
fn longest_monotone_run(trace: &ActivityTrace, flat: f64) -> f64 {
    let v = &trace.values;
    let mut best = 0usize;
    let mut start = 0usize;
    let mut sign = 0i8;
    for i in 1..v.len() {
        let s = match v[i].partial_cmp(&v[i - 1]) {
            Some(std::cmp::Ordering::Greater) => 1,
            Some(std::cmp::Ordering::Less) => -1,
            _ => 0,
        };
        if s == 0 || s != sign {
            start = i - 1;
            sign = s;
        }
        if s != 0 && (v[i] - v[start]).abs() > flat {
            best = best.max(i - start);
        }
    }
    best as f64 * trace.dt
}

#[test]
fn non_excitatory_runs_converge_and_do_not_creep() {
    for (name, params) in [("constant", vec![1.0]), ("affine", vec![1.0, 0.1]), ("affine", vec![1.0, -0.3])] {
        let m = builtin_model(name, &params, 1.0).unwrap();
        assert_ne!(classify_regime(&m, 1024).unwrap().tag, RegimeTag::StronglyExcitatory);
        let star = steady_states(&m).roots[0];
        let dt = m.sigma() / 200.0;
        for (kind, p) in [(0, 0.0), (0, 0.7), (1, 1.0), (2, 0.0)] {
            let trace = evolve_activity(&m, &density(kind, p), 50.0 * m.sigma(), dt, &BranchPolicy::branch(1)).unwrap();
            let err = (trace.last() - star).abs();
            assert!(err <= 1e-3, "{name} {params:?} density {kind}: |N(T) - N*| = {err:e}");
            let run = longest_monotone_run(&trace, 1e-6);
            assert!(run <= m.sigma() + 2.0 * dt + 1e-12, "{name} {params:?} density {kind}: monotone run {run}");
        }
    }
}

#[test]
fn integral_residual_is_first_order() {
    let m = sigmoid();
    let n0 = density(1, 1.0);
    let worst = |dt: f64| {
        evolve_activity(&m, &n0, 20.0 * m.sigma(), dt, &BranchPolicy::branch(2)).unwrap().max_integral_residual()
    };
    let coarse = worst(m.sigma() / 100.0);
    let fine = worst(m.sigma() / 200.0);
    assert!(coarse <= 5.0 * m.sigma() / 100.0);
    let ratio = fine / coarse;
    assert!((0.45..=0.55).contains(&ratio), "ratio {ratio}");
}

#[test]
fn example2_branch3_jump_preserves_psi() {
    let m = sigmoid();
    let trace = evolve_activity(&m, &density(0, 0.5), 5.0 * m.sigma(), m.sigma() / 200.0, &BranchPolicy::branch(3)).unwrap();
    assert_eq!(trace.jumps.len(), 1);
    let j = trace.jumps[0];
    assert!(j.time > 0.0 && j.time < m.sigma());
    assert!(j.n_after < j.n_before);
    assert!(trace.max_jump_psi_gap(&m) <= 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn traces_satisfy_the_integral_relation(kind in 0usize..3, p in 0.0f64..1.5, branch in 1usize..4, steps in prop::sample::select(vec![50usize, 100, 200])) {
        let m = sigmoid();
        let n0 = density(kind, p);
        let dt = m.sigma() / steps as f64;
        let n_roots = elapsed_core::initial_activities(&m, &n0).unwrap().roots.len();
        prop_assume!(branch <= n_roots);
        let trace = evolve_activity(&m, &n0, 10.0 * m.sigma(), dt, &BranchPolicy::branch(branch)).unwrap();
        prop_assert!(trace.max_integral_residual() <= 5.0 * dt);
        prop_assert!(trace.max_jump_psi_gap(&m) <= 1e-6);
        prop_assert!(trace.values.iter().all(|n| *n >= 0.0 && *n <= m.p_hi()));
    }
}
