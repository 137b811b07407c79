//! Densities compatible with a prescribed activity: initial data built from
//! `N` on `[0, sigma]`, densities along a periodic activity, and a joint
//! check of `psi(N) = int_sigma^inf n` and unit mass.

use serde::{Deserialize, Serialize};

use crate::activity::{steps_per_sigma, ActivityTrace};
use crate::error::{Error, Result};
use crate::model::FiringModel;
use crate::periodic::PeriodicProfile;
use crate::transport::{AgeGrid, DensityField};

/// Negative reconstructed densities above this are clipped to zero.
pub const CLIP_TOL: f64 = 1e-8;

/// Writes the geometric tail `n0 (1 - ds phi(n0))^m` into cells `K..`,
/// lumping the remainder of the series in the last cell; its mass is
/// exactly `psi(n0)`.
fn geometric_tail(values: &mut [f64], grid: &AgeGrid, model: &FiringModel, n0: f64) -> Result<()> {
    let r = 1.0 - grid.ds * model.phi(n0)?;
    let last = values.len() - 1;
    let mut v = n0;
    for cell in values[grid.refractory_cells..last].iter_mut() {
        *cell = v;
        v *= r;
    }
    values[last] = v / (1.0 - r);
    Ok(())
}

/// Initial density whose solution reproduces `history` (samples of `N` at
/// spacing `grid.ds` on `[0, sigma]`). Below `sigma` the density is
/// `N(sigma - s) + d/dt psi(N)(sigma - s)`, evaluated at cell midpoints
/// with centered differences; above `sigma` it decays at rate `phi(N(0))`.
pub fn initial_from_activity(model: &FiringModel, history: &[f64], grid: &AgeGrid) -> Result<DensityField> {
    let k = steps_per_sigma(model.sigma(), grid.ds)?;
    if k != grid.refractory_cells || history.len() != k + 1 {
        return Err(Error::Precondition(format!(
            "history needs {} samples at spacing ds on [0, sigma], got {}",
            k + 1,
            history.len()
        )));
    }
    let ds = grid.ds;
    let psi: Vec<f64> = history.iter().map(|u| model.psi(*u)).collect::<Result<_>>()?;
    let inner: f64 = history[1..k].iter().sum();
    let mass = ds * (inner + 0.5 * (history[0] + history[k])) + psi[k];
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::Precondition(format!("int_0^sigma N + psi(N(sigma)) = {mass}, expected 1")));
    }
    let mut values = vec![0.0; grid.n_cells];
    let mut clipped = 0.0;
    for j in 0..k {
        let i = k - j - 1;
        let n = 0.5 * (history[i] + history[i + 1]) + (psi[i + 1] - psi[i]) / ds;
        if n < -CLIP_TOL {
            return Err(Error::Precondition(format!(
                "reconstructed density {n} < 0 at age {}",
                grid.center(j)
            )));
        }
        if n < 0.0 {
            clipped -= n * ds;
        }
        values[j] = n.max(0.0);
    }
    let n0 = history[0];
    geometric_tail(&mut values, grid, model, n0)?;
    if clipped > 0.0 && psi[0] > 0.0 {
        let scale = (psi[0] - clipped) / psi[0];
        values[k..].iter_mut().for_each(|v| *v *= scale);
    }
    Ok(DensityField::new(grid.clone(), values, 0.0, n0))
}

/// Density at `t = 0` carried by the characteristics of a periodic
/// activity: `n(0, s) = N(-s) exp(-int_{sigma-s}^0 phi(N))` for `s > sigma`
/// and `N(-s)` below, sampled at ages `j ds`. The last cell holds the
/// geometric remainder of all older ages.
pub fn density_from_periodic_activity(model: &FiringModel, profile: &PeriodicProfile, grid: &AgeGrid) -> Result<DensityField> {
    if (grid.sigma - model.sigma()).abs() > 1e-12 || (profile.sigma - model.sigma()).abs() > 1e-12 {
        return Err(Error::Precondition("grid, profile and model disagree on sigma".into()));
    }
    let ds = grid.ds;
    let period_cells = (profile.period / ds).round() as usize;
    if ((period_cells as f64) * ds - profile.period).abs() > 1e-9 * profile.period {
        return Err(Error::Precondition("period is not a multiple of ds".into()));
    }
    // Phi(tau) = int_0^tau phi(N) on one period, trapezoid at ds / 4.
    let sub = 4;
    let h = ds / sub as f64;
    let fine = period_cells * sub;
    let mut table = vec![0.0; fine + 1];
    let rate = |t: f64| model.phi_unchecked(profile.value_at(t));
    let mut prev = rate(0.0);
    for i in 1..=fine {
        let cur = rate(i as f64 * h);
        table[i] = table[i - 1] + 0.5 * h * (prev + cur);
        prev = cur;
    }
    let per_period = table[fine];
    let big_phi = |cells: i64| -> f64 {
        // Phi at tau = cells * ds, any integer cells.
        let p = period_cells as i64;
        let cycles = cells.div_euclid(p);
        let rem = cells.rem_euclid(p) as usize;
        cycles as f64 * per_period + table[rem * sub]
    };
    let k = grid.refractory_cells as i64;
    let density = |j: usize| -> f64 {
        let s_cells = j as i64;
        let n = profile.value_at(-(j as f64) * ds);
        if s_cells <= k {
            n
        } else {
            n * (-(big_phi(0) - big_phi(k - s_cells))).exp()
        }
    };
    let last = grid.n_cells - 1;
    let mut values: Vec<f64> = (0..last).map(density).collect();
    let ring: f64 = (last..last + period_cells).map(density).sum();
    values.push(ring / (1.0 - (-per_period).exp()));
    Ok(DensityField::new(grid.clone(), values, 0.0, profile.value_at(0.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub max_psi_residual: f64,
    pub max_mass_residual: f64,
    pub pass: bool,
    pub snapshots: usize,
    pub tolerance: f64,
}

/// Checks `psi(N(t)) = int_sigma^inf n(t, s) ds` and unit mass at every
/// snapshot time.
pub fn verify_solution(snapshots: &[DensityField], trace: &ActivityTrace, model: &FiringModel, tol: f64) -> Result<VerificationReport> {
    let mut max_psi: f64 = 0.0;
    let mut max_mass: f64 = 0.0;
    for snap in snapshots {
        if (snap.grid.ds - trace.dt).abs() > 1e-12 * trace.dt {
            return Err(Error::Precondition("snapshot grid step differs from the trace step".into()));
        }
        let idx = (snap.time / trace.dt).round();
        if (idx * trace.dt - snap.time).abs() > 1e-9 * trace.dt.max(snap.time) || idx as usize >= trace.len() {
            return Err(Error::Precondition(format!("snapshot at t = {} not on the trace grid", snap.time)));
        }
        let n = trace.values[idx as usize];
        max_psi = max_psi.max((model.psi(n)? - snap.tail_mass()).abs());
        max_mass = max_mass.max((snap.mass() - 1.0).abs());
    }
    Ok(VerificationReport {
        max_psi_residual: max_psi,
        max_mass_residual: max_mass,
        pass: max_psi <= tol && max_mass <= tol,
        snapshots: snapshots.len(),
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::BranchPolicy;
    use crate::model::builtin_model;
    use crate::steady::{steady_profile, steady_states};

    #[test]
    fn steady_history_gives_steady_profile() {
        let m = builtin_model("sigmoid", &[9.0, 3.5], 0.5).unwrap();
        let grid = AgeGrid::for_model(&m, 0.0025).unwrap();
        let n_star = steady_states(&m).roots[1];
        let hist = vec![n_star; grid.refractory_cells + 1];
        let f = initial_from_activity(&m, &hist, &grid).unwrap();
        let s = steady_profile(&m, n_star, &grid).unwrap();
        assert!(f.max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn violated_mass_condition_rejected() {
        let m = builtin_model("constant", &[1.0], 1.0).unwrap();
        let grid = AgeGrid::new(1.0, 0.01, 20.0).unwrap();
        let hist = vec![0.6; 101];
        assert!(initial_from_activity(&m, &hist, &grid).is_err());
    }

    #[test]
    fn unnormalized_field_fails_verification() {
        let m = builtin_model("constant", &[1.0], 1.0).unwrap();
        let grid = AgeGrid::new(1.0, 0.01, 20.0).unwrap();
        let mut f = steady_profile(&m, 0.5, &grid).unwrap();
        let trace = crate::transport::run_pde_from_field(&m, f.clone(), 0.0, &BranchPolicy::value(0.5), Default::default())
            .unwrap()
            .trace;
        let ok = verify_solution(&[f.clone()], &trace, &m, 1e-10).unwrap();
        assert!(ok.pass, "{ok:?}");
        f.values.iter_mut().for_each(|v| *v *= 1.1);
        let bad = verify_solution(&[f], &trace, &m, 1e-10).unwrap();
        assert!(!bad.pass);
        assert!((bad.max_mass_residual - 0.1).abs() < 1e-9);
    }
}
