//! Upwind transport scheme for the age-structured equation with unit CFL
//! (`dt = ds`), so advection is an exact shift by one cell.
//!
//! Cell `j` covers ages `[j ds, (j + 1) ds)`; cells `j >= K = sigma / ds`
//! form the firing tail. One step from the state at `t_k`, which carries
//! `N_k` in cell 0 and satisfies `psi(N_k) = tail`:
//! 1. the tail decays by `1 - dt phi(N_k)`;
//! 2. every cell moves up one age, the last cell absorbing its neighbour;
//! 3. `N_{k+1}` solves `psi(N) = tail` on the shifted field;
//! 4. cell 0 receives `N_{k+1}`.
//!
//! Stored snapshots are the states at the time levels, where the boundary
//! relation holds exactly.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::activity::{step_count, steps_per_sigma, ActivityTrace, BranchPolicy, BranchSeed, JumpRecord, LevelSolver};
use crate::density::InitialDensity;
use crate::error::{Error, Result};
use crate::format::fmt_g;
use crate::model::FiringModel;
use crate::steady::initial_activities_from_tail;

/// Cap on the default truncation length beyond `sigma`.
pub const DEFAULT_TAIL_SPAN: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeGrid {
    pub sigma: f64,
    pub ds: f64,
    pub s_max: f64,
    pub n_cells: usize,
    /// `K = sigma / ds`; cells `0..K` are refractory.
    pub refractory_cells: usize,
}

impl AgeGrid {
    pub fn new(sigma: f64, ds: f64, s_max: f64) -> Result<Self> {
        let k = steps_per_sigma(sigma, ds).map_err(|_| {
            Error::config("run.ds", format!("sigma / ds = {} is not a positive integer", sigma / ds))
        })?;
        let n_cells = (s_max / ds - 1e-9).ceil().max(0.0) as usize;
        if n_cells < k + 2 {
            return Err(Error::config("run.s_max", format!("s_max = {s_max} must exceed sigma + ds")));
        }
        Ok(AgeGrid { sigma, ds, s_max: n_cells as f64 * ds, n_cells, refractory_cells: k })
    }

    /// Grid with `s_max = sigma + min(20 / p_lo, DEFAULT_TAIL_SPAN)`.
    pub fn for_model(model: &FiringModel, ds: f64) -> Result<Self> {
        let span = (20.0 / model.p_lo()).min(DEFAULT_TAIL_SPAN);
        AgeGrid::new(model.sigma(), ds, model.sigma() + span)
    }

    pub fn dt(&self) -> f64 {
        self.ds
    }

    pub fn center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.ds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub grid: AgeGrid,
    pub values: Vec<f64>,
    pub time: f64,
    /// Activity `N` at `time`.
    pub activity: f64,
}

impl DensityField {
    pub fn new(grid: AgeGrid, values: Vec<f64>, time: f64, activity: f64) -> Self {
        debug_assert_eq!(values.len(), grid.n_cells);
        DensityField { grid, values, time, activity }
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.ds
    }

    /// Mass of the firing cells (ages above `sigma`).
    pub fn tail_mass(&self) -> f64 {
        self.values[self.grid.refractory_cells..].iter().sum::<f64>() * self.grid.ds
    }

    /// Cell densities as a sampled initial density.
    pub fn to_density(&self) -> InitialDensity {
        InitialDensity::Sampled(crate::density::SampledDensity {
            ds: self.grid.ds,
            values: self.values.clone(),
            tail_rate: None,
        })
    }

    /// CSV with columns `s,n` at cell centers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,n\n");
        for (j, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", fmt_g(self.grid.center(j), 12), fmt_g(*v, 12));
        }
        out
    }

    pub fn max_abs_diff(&self, other: &DensityField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Samples `n0` at cell centers and rescales to unit discrete mass.
/// Returns the field and the applied factor.
pub fn init_density<F: Fn(f64) -> f64>(n0: F, grid: &AgeGrid) -> Result<(DensityField, f64)> {
    let mut values: Vec<f64> = (0..grid.n_cells).map(|j| n0(grid.center(j))).collect();
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Precondition(format!("negative initial density sample {v}")));
    }
    let mass = values.iter().sum::<f64>() * grid.ds;
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::Precondition("initial density has zero mass on the grid".into()));
    }
    let factor = 1.0 / mass;
    values.iter_mut().for_each(|v| *v *= factor);
    Ok((DensityField::new(grid.clone(), values, 0.0, f64::NAN), factor))
}

/// Reaction factor applied to the tail over one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    /// `1 - dt phi(N)`.
    #[default]
    Explicit,
    /// `exp(-dt phi(N))`.
    Exponential,
}

impl Decay {
    fn factor(self, dt: f64, rate: f64) -> f64 {
        match self {
            Decay::Explicit => 1.0 - dt * rate,
            Decay::Exponential => (-dt * rate).exp(),
        }
    }
}

/// Solves `N = phi(N) * tail(field)` from `seed`.
pub fn boundary_activity(field: &DensityField, model: &FiringModel, seed: f64, policy: &BranchPolicy) -> Result<(f64, bool)> {
    let tail = field.tail_mass();
    let mut solver = LevelSolver::new(model, policy.mode);
    solver.dt = field.grid.ds;
    let branch = solver.locate(seed.clamp(0.0, model.p_hi()), tail);
    let step = solver.step(branch, seed, tail, None)?;
    Ok((step.n, step.jump.is_some()))
}

fn advance(values: &mut [f64], k: usize, factor: f64) {
    let n = values.len();
    values[k..].iter_mut().for_each(|v| *v *= factor);
    let last = values[n - 1] + values[n - 2];
    values.copy_within(0..n - 2, 1);
    values[n - 1] = last;
}

/// One scheme step from `field` (at activity `n_prev`).
pub fn step_pde(field: &DensityField, model: &FiringModel, n_prev: f64, policy: &BranchPolicy) -> Result<(DensityField, f64)> {
    check_positivity(model, field.grid.ds)?;
    let mut next = field.clone();
    let factor = Decay::Explicit.factor(field.grid.ds, model.phi(n_prev)?);
    advance(&mut next.values, field.grid.refractory_cells, factor);
    let (n, _) = boundary_activity(&next, model, n_prev, policy)?;
    next.values[0] = n;
    next.time = field.time + field.grid.ds;
    next.activity = n;
    Ok((next, n))
}

fn check_positivity(model: &FiringModel, dt: f64) -> Result<()> {
    if dt * model.p_hi() >= 1.0 {
        return Err(Error::config(
            "run.dt",
            format!("dt * p_hi = {} must be below 1 for a positive scheme", dt * model.p_hi()),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdeRun {
    pub trace: ActivityTrace,
    pub snapshots: Vec<DensityField>,
    /// Discrete mass at every time level.
    pub mass: Vec<f64>,
    pub renormalization: f64,
}

impl PdeRun {
    pub fn max_mass_drift(&self) -> f64 {
        self.mass.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Manifest JSON for the snapshot CSV files.
    pub fn manifest(&self, files: &[String]) -> serde_json::Value {
        serde_json::json!({
            "times": self.snapshots.iter().map(|s| s.time).collect::<Vec<_>>(),
            "files": files,
            "mass_drift": self.snapshots.iter().map(|s| s.mass() - 1.0).collect::<Vec<_>>(),
            "max_mass_drift": self.max_mass_drift(),
            "jumps": self.trace.jumps,
            "renormalization": self.renormalization,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeOptions {
    pub snapshot_every: usize,
    pub decay: Decay,
}

impl Default for PdeOptions {
    fn default() -> Self {
        PdeOptions { snapshot_every: 0, decay: Decay::Explicit }
    }
}

/// Runs the scheme from the cell-centered sampling of `n0`.
pub fn run_pde(
    model: &FiringModel,
    n0: &InitialDensity,
    grid: &AgeGrid,
    horizon: f64,
    policy: &BranchPolicy,
    snapshot_every: usize,
) -> Result<PdeRun> {
    n0.validate()?;
    let (field, factor) = init_density(|s| n0.value(s), grid)?;
    let mut run = run_pde_from_field(model, field, horizon, policy, PdeOptions { snapshot_every, ..Default::default() })?;
    run.renormalization = factor;
    Ok(run)
}

/// Runs the scheme from an already discretized field. A `BranchSeed::Index`
/// selects among the roots of `N = phi(N) * tail` for the field's own tail
/// mass; a `BranchSeed::Value` seeds the continuation directly.
pub fn run_pde_from_field(
    model: &FiringModel,
    mut field: DensityField,
    horizon: f64,
    policy: &BranchPolicy,
    options: PdeOptions,
) -> Result<PdeRun> {
    let grid = field.grid.clone();
    if (grid.sigma - model.sigma()).abs() > 1e-12 * model.sigma() {
        return Err(Error::config("run.ds", "grid sigma differs from the model's"));
    }
    let dt = grid.ds;
    check_positivity(model, dt)?;
    let steps = step_count(horizon, dt)?;
    let k = grid.refractory_cells;

    let mut solver = LevelSolver::new(model, policy.mode);
    solver.dt = dt;
    let tail0 = field.tail_mass();
    let seed = match policy.seed {
        BranchSeed::Index(_) => {
            let set = initial_activities_from_tail(model, tail0)?;
            policy.initial_value(model, &set.roots, tail0)?
        }
        BranchSeed::Value(v) => v,
    };
    let start_branch = solver.locate(seed.clamp(0.0, model.p_hi()), tail0);
    let first = solver.step(start_branch, seed, tail0, None).map_err(|e| e.at(0.0))?;
    let mut trace = ActivityTrace {
        dt,
        sigma: model.sigma(),
        times: Vec::with_capacity(steps + 1),
        values: Vec::with_capacity(steps + 1),
        psi_values: Vec::with_capacity(steps + 1),
        branch_ids: Vec::with_capacity(steps + 1),
        jumps: Vec::new(),
        tangent_steps: Vec::new(),
    };
    trace.record(model, 0, &crate::activity::LevelStep { jump: None, ..first });
    field.activity = first.n;
    field.time = 0.0;

    let mut snapshots = Vec::new();
    let mut mass = Vec::with_capacity(steps + 1);
    mass.push(field.mass());
    if options.snapshot_every > 0 {
        snapshots.push(field.clone());
    }

    let mut n = first.n;
    let mut branch = first.branch;
    let mut prev_level = tail0;
    let mut values = field.values;
    for step in 1..=steps {
        let t = step as f64 * dt;
        advance(&mut values, k, options.decay.factor(dt, model.phi_unchecked(n)));
        let tail = values[k..].iter().sum::<f64>() * dt;
        let next = solver.step(branch, n, tail, Some(2.0 * tail - prev_level)).map_err(|e| e.at(t))?;
        prev_level = tail;
        n = next.n;
        branch = next.branch;
        values[0] = n;
        trace.record(model, step, &next);
        mass.push(values.iter().sum::<f64>() * dt);
        if options.snapshot_every > 0 && step % options.snapshot_every == 0 {
            snapshots.push(DensityField::new(grid.clone(), values.clone(), t, n));
        }
    }
    Ok(PdeRun { trace, snapshots, mass, renormalization: 1.0 })
}

/// Jump records of a run, for manifests.
pub fn jump_log(run: &PdeRun) -> &[JumpRecord] {
    &run.trace.jumps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;
    use crate::steady::{steady_profile, steady_states};

    #[test]
    fn grid_validation() {
        assert!(AgeGrid::new(1.0, 0.3, 10.0).is_err());
        assert!(AgeGrid::new(1.0, 0.25, 1.1).is_err());
        let g = AgeGrid::new(0.5, 0.0025, 40.5).unwrap();
        assert_eq!(g.refractory_cells, 200);
        assert_eq!(g.n_cells, 16200);
    }

    #[test]
    fn steady_profile_is_fixed_point() {
        let m = builtin_model("sigmoid", &[9.0, 3.5], 0.5).unwrap();
        let grid = AgeGrid::for_model(&m, 0.0025).unwrap();
        for n_star in steady_states(&m).roots {
            let f = steady_profile(&m, n_star, &grid).unwrap();
            let (n, jumped) = boundary_activity(&f, &m, n_star, &BranchPolicy::value(n_star)).unwrap();
            assert!((n - n_star).abs() < 1e-12 && !jumped);
            let (g, n1) = step_pde(&f, &m, n_star, &BranchPolicy::value(n_star)).unwrap();
            assert!((n1 - n_star).abs() < 1e-12);
            assert!(g.max_abs_diff(&f) < 1e-12);
        }
    }

    #[test]
    fn refractory_only_field_is_a_pure_shift() {
        let m = builtin_model("constant", &[1.0], 1.0).unwrap();
        let grid = AgeGrid::new(1.0, 0.1, 3.0).unwrap();
        let mut values = vec![0.0; grid.n_cells];
        values[2] = 5.0;
        values[5] = 5.0;
        let f = DensityField::new(grid.clone(), values, 0.0, 0.0);
        let (n, _) = boundary_activity(&f, &m, 0.0, &BranchPolicy::value(0.0)).unwrap();
        assert_eq!(n, 0.0);
        let (g, n1) = step_pde(&f, &m, 0.0, &BranchPolicy::value(0.0)).unwrap();
        assert_eq!(n1, 0.0);
        assert_eq!(g.values[3], 5.0);
        assert_eq!(g.values[6], 5.0);
        assert_eq!(g.values[2], 0.0);
    }

    #[test]
    fn init_density_renormalizes() {
        let grid = AgeGrid::new(1.0, 0.01, 30.0).unwrap();
        let (f, factor) = init_density(|s| (-s).exp(), &grid).unwrap();
        assert!((f.mass() - 1.0).abs() < 1e-14);
        assert!((factor - 1.0).abs() < 1e-4);
        assert!(init_density(|_| 0.0, &grid).is_err());
        assert!(init_density(|s| -s, &grid).is_err());
    }

    #[test]
    fn rejects_nonpositive_scheme() {
        let m = builtin_model("rational_shift", &[10.0, 0.5], 1.0).unwrap();
        let grid = AgeGrid::new(1.0, 0.1, 10.0).unwrap();
        let n0 = InitialDensity::Exponential { onset: 1.0 };
        assert!(matches!(run_pde(&m, &n0, &grid, 1.0, &BranchPolicy::branch(1), 0), Err(Error::Config { .. })));
    }
}
