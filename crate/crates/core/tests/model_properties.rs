use approx::assert_relative_eq;
use proptest::prelude::*;

use elapsed_core::model::Trend;
use elapsed_core::steady::{initial_activities_field, steady_profile};
use elapsed_core::{builtin_model, classify_regime, evolve_activity, steady_states, AgeGrid, BranchPolicy, FiringModel, InitialDensity, RegimeTag};

fn catalog() -> Vec<FiringModel> {
    vec![
        builtin_model("constant", &[1.0], 1.0).unwrap(),
        builtin_model("sigmoid", &[9.0, 3.5], 0.5).unwrap(),
        builtin_model("clamped_linear", &[1.6, 1.0, 0.25], 1.0).unwrap(),
        builtin_model("rational_shift", &[10.0, 0.5], 1.0).unwrap(),
        builtin_model("double_gaussian", &[8.0, 0.1, 8.0, 3.0], 0.2).unwrap(),
        builtin_model("affine", &[1.0, 0.1], 1.0).unwrap(),
    ]
}

#[test]
fn rate_stays_within_bounds() {
    for m in catalog() {
        for i in 0..1024 {
            let u = m.p_hi() * i as f64 / 1023.0;
            let p = m.phi(u).unwrap();
            assert!(p >= m.p_lo() - 1e-12 && p <= m.p_hi() + 1e-12, "{} at {u}: {p}", m.name());
        }
    }
}

#[test]
fn regimes_of_reference_models() {
    let c = builtin_model("constant", &[1.0], 1.0).unwrap();
    assert_eq!(classify_regime(&c, 1024).unwrap().tag, RegimeTag::Inhibitory);
    let s = builtin_model("sigmoid", &[9.0, 3.5], 0.5).unwrap();
    assert_eq!(classify_regime(&s, 1024).unwrap().tag, RegimeTag::StronglyExcitatory);
    let a = builtin_model("affine", &[1.0, 0.1], 1.0).unwrap();
    assert_eq!(classify_regime(&a, 1024).unwrap().tag, RegimeTag::WeaklyExcitatory);
}

#[test]
fn steady_histories_stay_put() {
    for m in catalog() {
        for n_star in steady_states(&m).roots {
            let dt = m.sigma() / 200.0;
            let grid = AgeGrid::for_model(&m, dt).unwrap();
            let n0 = InitialDensity::steady(&m, n_star).unwrap();
            let branches = elapsed_core::initial_activities(&m, &n0).unwrap();
            // On a flat piece of psi every point of the band is a root.
            let on_band = m.pieces().iter().any(|p| p.trend == Trend::Flat && p.lo <= n_star && n_star <= p.hi);
            let listed = branches.roots.iter().any(|r| (r - n_star).abs() < 1e-8);
            assert!(listed || on_band, "{}: {n_star} not among {:?}", m.name(), branches.roots);
            // Round-off near a root with psi' < 0 grows like exp(t / |psi'|), so follow it for 10 such time scales.
            let slope = m.psi_prime(n_star).unwrap().value;
            let horizon = if slope < 0.0 { (10.0 * slope.abs()).clamp(dt, 10.0 * m.sigma()) } else { 10.0 * m.sigma() };
            let trace = evolve_activity(&m, &n0, horizon, dt, &BranchPolicy::value(n_star)).unwrap();
            let dev = trace.values.iter().map(|n| (n - n_star).abs()).fold(0.0, f64::max);
            assert!(dev <= 1e-6, "{}: N* = {n_star} drifts by {dev:e}", m.name());

            let field = steady_profile(&m, n_star, &grid).unwrap();
            let set = initial_activities_field(&m, &field).unwrap();
            assert!(on_band || set.roots.iter().any(|r| (r - n_star).abs() <= 1e-8));
        }
    }
}

#[test]
fn strongly_excitatory_root_count_is_odd() {
    for m in catalog() {
        let regime = classify_regime(&m, 1024).unwrap();
        let g = m.sigma() * m.p_hi() + m.psi(m.p_hi()).unwrap() - 1.0;
        if regime.tag == RegimeTag::StronglyExcitatory && g > 0.0 {
            let s = steady_states(&m);
            // Count crossings of sigma*N + psi(N) - 1, skipping tangencies.
            let crossings = s
                .roots
                .iter()
                .filter(|r| (m.sigma() + m.psi_prime(**r).unwrap().value).abs() > 1e-8)
                .count();
            assert_eq!(crossings % 2, 1, "{}: {:?}", m.name(), s.roots);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn psi_times_phi_is_identity(idx in 0usize..6, x in 0.0f64..1.0) {
        let m = &catalog()[idx];
        let u = x * m.p_hi();
        let prod = m.psi(u).unwrap() * m.phi(u).unwrap();
        prop_assert!((prod - u).abs() <= 1e-12 * u.max(1e-300));
    }

    #[test]
    fn analytic_slope_matches_differences(idx in 0usize..6, x in 0.001f64..0.999) {
        let m = &catalog()[idx];
        let u = x * m.p_hi();
        let s = m.psi_prime(u).unwrap();
        prop_assume!(!s.kink && !s.finite_difference);
        let fd = m.psi_prime_fd(u);
        // Near the tails of a bump rate psi' reaches 1e9, where only relative agreement is meaningful.
        prop_assert!((s.value - fd).abs() <= 1e-5 * s.value.abs().max(1.0), "{} at {}: {} vs {}", m.name(), u, s.value, fd);
    }

    #[test]
    fn sigmoid_steady_states_are_roots(gain in 2.0f64..15.0, threshold in 0.0f64..5.0, sigma in 0.1f64..2.0) {
        let m = builtin_model("sigmoid", &[gain, threshold], sigma).unwrap();
        let s = steady_states(&m);
        for r in &s.roots {
            let g = sigma * r + m.psi(*r).unwrap() - 1.0;
            prop_assert!(g.abs() <= 1e-9, "residual {} at {}", g, r);
        }
        prop_assert!(s.roots.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn pieces_tile_the_domain(gain in 2.0f64..15.0, threshold in 0.0f64..5.0) {
        let m = builtin_model("sigmoid", &[gain, threshold], 0.5).unwrap();
        let p = m.pieces();
        prop_assert_eq!(p[0].lo, 0.0);
        assert_relative_eq!(p[p.len() - 1].hi, m.p_hi());
        prop_assert!(p.windows(2).all(|w| w[0].hi == w[1].lo && w[0].trend != w[1].trend));
        prop_assert!(p.iter().all(|q| q.trend != Trend::Flat));
    }
}
