//! Steady states `sigma N + psi(N) = 1`, their density profiles, and the
//! admissible initial activities `N(0) = phi(N(0)) int_sigma^inf n0`.

use serde::{Deserialize, Serialize};

use crate::density::InitialDensity;
use crate::error::{Error, Result};
use crate::model::FiringModel;
use crate::roots::scan_roots;
use crate::transport::{AgeGrid, DensityField};

/// Grid resolution of the root scans.
pub const SCAN_POINTS: usize = 4096;
const BISECT_WIDTH: f64 = 1e-12;
const TANGENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateSet {
    pub roots: Vec<f64>,
    pub psi_prime_signs: Vec<i8>,
    pub residuals: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialBranchSet {
    pub roots: Vec<f64>,
    pub tail_mass: f64,
}

fn slope_sign(model: &FiringModel, u: f64, tangent: bool) -> i8 {
    if tangent {
        return 0;
    }
    match model.psi_prime(u) {
        Ok(s) if s.value > 1e-10 => 1,
        Ok(s) if s.value < -1e-10 => -1,
        _ => 0,
    }
}

/// Every root of `sigma N + psi(N) - 1` on `(0, p_hi]`.
pub fn steady_states(model: &FiringModel) -> SteadyStateSet {
    steady_states_with(model, SCAN_POINTS)
}

pub fn steady_states_with(model: &FiringModel, scan_points: usize) -> SteadyStateSet {
    let sigma = model.sigma();
    let g = |n: f64| sigma * n + model.psi_unchecked(n) - 1.0;
    let found: Vec<_> = scan_roots(g, 0.0, model.p_hi(), scan_points, BISECT_WIDTH, TANGENT_TOL)
        .into_iter()
        .filter(|r| r.x > 0.0)
        .collect();
    let warning = found.is_empty().then(|| "no steady state found on (0, p_hi]".to_string());
    SteadyStateSet {
        roots: found.iter().map(|r| r.x).collect(),
        psi_prime_signs: found.iter().map(|r| slope_sign(model, r.x, r.tangent)).collect(),
        residuals: found.iter().map(|r| g(r.x).abs()).collect(),
        warning,
    }
}

/// Discrete steady density on `grid`: plateau `N*` below `sigma`, then the
/// geometric tail `N* (1 - ds phi(N*))^m`, with the remainder of the series
/// lumped in the last cell so the tail mass is exactly `psi(N*)`.
pub fn steady_profile(model: &FiringModel, n_star: f64, grid: &AgeGrid) -> Result<DensityField> {
    let residual = (model.sigma() * n_star + model.psi(n_star)? - 1.0).abs();
    if residual > 1e-8 {
        return Err(Error::Precondition(format!("{n_star} is not a steady state (residual {residual:e})")));
    }
    if (grid.sigma - model.sigma()).abs() > 1e-12 {
        return Err(Error::Precondition("grid and model disagree on sigma".into()));
    }
    let r = 1.0 - grid.ds * model.phi(n_star)?;
    let k = grid.refractory_cells;
    let n = grid.n_cells;
    let mut values = vec![n_star; n];
    let mut v = n_star;
    for cell in values.iter_mut().take(n - 1).skip(k) {
        *cell = v;
        v *= r;
    }
    values[n - 1] = v / (1.0 - r);
    Ok(DensityField::new(grid.clone(), values, 0.0, n_star))
}

/// Roots of `N - phi(N) * tail_mass` on `[0, p_hi]`.
pub fn initial_activities_from_tail(model: &FiringModel, tail_mass: f64) -> Result<InitialBranchSet> {
    if !(tail_mass >= 0.0) {
        return Err(Error::Precondition(format!("negative tail mass {tail_mass}")));
    }
    let g = |n: f64| n - model.phi_unchecked(n) * tail_mass;
    let roots: Vec<f64> = scan_roots(g, 0.0, model.p_hi(), SCAN_POINTS, BISECT_WIDTH, TANGENT_TOL)
        .into_iter()
        .map(|r| r.x)
        .collect();
    Ok(InitialBranchSet { roots, tail_mass })
}

/// Admissible `N(0)` values for the initial density `n0`.
pub fn initial_activities(model: &FiringModel, n0: &InitialDensity) -> Result<InitialBranchSet> {
    n0.validate()?;
    initial_activities_from_tail(model, n0.tail_mass(model.sigma()))
}

/// Admissible `N(0)` values for a discretized density.
pub fn initial_activities_field(model: &FiringModel, field: &DensityField) -> Result<InitialBranchSet> {
    let mass = field.mass();
    if (mass - 1.0).abs() > crate::density::MASS_TOL {
        return Err(Error::Precondition(format!("field has mass {mass}, expected 1")));
    }
    initial_activities_from_tail(model, field.tail_mass())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;

    #[test]
    fn constant_rate_root() {
        let m = builtin_model("constant", &[1.0], 1.0).unwrap();
        let s = steady_states(&m);
        assert_eq!(s.roots.len(), 1);
        assert!((s.roots[0] - 0.5).abs() < 1e-12);
        assert_eq!(s.psi_prime_signs, vec![1]);
    }

    #[test]
    fn clamped_band_root_is_flat() {
        let m = builtin_model("clamped_linear", &[1.6, 1.0, 0.25], 1.0).unwrap();
        let s = steady_states(&m);
        assert_eq!(s.roots.len(), 1);
        assert!((s.roots[0] - 0.375).abs() < 1e-9);
        assert_eq!(s.psi_prime_signs, vec![0]);
    }

    #[test]
    fn profile_mass_and_tail() {
        let m = builtin_model("clamped_linear", &[1.6, 1.0, 0.25], 1.0).unwrap();
        let grid = AgeGrid::new(1.0, 0.01, 30.0).unwrap();
        let f = steady_profile(&m, 0.375, &grid).unwrap();
        assert!((f.mass() - 1.0).abs() < 1e-12);
        assert!((f.tail_mass() - 0.625).abs() < 1e-12);
        assert!((f.values[grid.refractory_cells + 1] / f.values[grid.refractory_cells] - (1.0 - 0.006)).abs() < 1e-14);
        assert!(steady_profile(&m, 0.4, &grid).is_err());
    }

    #[test]
    fn no_tail_gives_zero_activity() {
        let m = builtin_model("sigmoid", &[9.0, 3.5], 0.5).unwrap();
        let n0 = InitialDensity::sampled(0.1, vec![2.5, 2.5, 2.5, 2.5]).unwrap();
        let b = initial_activities(&m, &n0).unwrap();
        assert_eq!(b.roots, vec![0.0]);
    }
}
