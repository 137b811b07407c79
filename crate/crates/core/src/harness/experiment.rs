//! Running configured experiments and persisting their results.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, InitialData, Route};
use crate::activity::{evolve_activity, evolve_monotone, ActivityTrace, BranchPolicy, BranchSeed};
use crate::density::InitialDensity;
use crate::error::{Error, Result};
use crate::model::FiringModel;
use crate::reconstruct::{initial_from_activity, verify_solution, VerificationReport};
use crate::steady::{initial_activities, initial_activities_field, initial_activities_from_tail, steady_profile, steady_states, InitialBranchSet, SteadyStateSet};
use crate::transport::{init_density, run_pde_from_field, DensityField, PdeOptions, PdeRun};

/// Verification tolerance in units of `dt`.
pub const VERIFY_DT_FACTOR: f64 = 10.0;

/// Route-equivalence constant: divergence beyond `ROUTE_CONSTANT * (dt + ds)`
/// counts as a disagreement.
pub const ROUTE_CONSTANT: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub config: ExperimentConfig,
    pub model: FiringModel,
    pub steady: SteadyStateSet,
    pub branches: InitialBranchSet,
    pub trace: ActivityTrace,
    /// Present for the transport route.
    pub pde: Option<PdeRun>,
    pub verification: VerificationReport,
}

impl ResultBundle {
    /// Writes the bundle into `dir` and returns the files written.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: &str, body: String| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, body)?;
            written.push(path);
            Ok(())
        };
        put("config.toml", self.config.to_toml())?;
        put("trace.csv", self.trace.to_csv())?;
        put("steady_states.json", json(&self.steady))?;
        put("initial_activities.json", json(&self.branches))?;
        put("verification.json", json(&self.verification))?;
        if let Some(run) = &self.pde {
            let mut names = Vec::new();
            for (i, snap) in run.snapshots.iter().enumerate() {
                let name = format!("snapshot_{i:04}.csv");
                put(&name, snap.to_csv())?;
                names.push(name);
            }
            put("manifest.json", json(&run.manifest(&names)))?;
        }
        Ok(written)
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn policy(config: &ExperimentConfig) -> BranchPolicy {
    BranchPolicy { mode: config.run.policy, seed: config.run.branch }
}

/// Initial field for the transport route. The `steady` density uses the
/// exact discrete steady profile; a history is turned into the density
/// at `t = sigma` and the run continues from its last sample.
fn initial_field(config: &ExperimentConfig, model: &FiringModel, data: &InitialData) -> Result<(DensityField, f64, BranchPolicy)> {
    let grid = config.grid(model)?;
    let mut pol = policy(config);
    match data {
        InitialData::Density(d) => {
            if config.initial.density.as_deref() == Some("steady") {
                let n_star = steady_states(model).roots[config.initial.params[0] as usize - 1];
                Ok((steady_profile(model, n_star, &grid)?, 1.0, pol))
            } else {
                d.validate()?;
                let (field, factor) = init_density(|s| d.value(s), &grid)?;
                Ok((field, factor, pol))
            }
        }
        InitialData::History(h) => {
            let field = initial_from_activity(model, h, &grid)?;
            if let BranchSeed::Index(_) = pol.seed {
                pol.seed = BranchSeed::Value(*h.last().expect("nonempty history"));
            }
            Ok((field, 1.0, pol))
        }
    }
}

fn run_transport(config: &ExperimentConfig, model: &FiringModel, data: &InitialData) -> Result<(PdeRun, InitialBranchSet)> {
    let (field, factor, pol) = initial_field(config, model, data)?;
    let branches = initial_activities_field(model, &field)?;
    let horizon = match data {
        InitialData::History(_) => (config.run.horizon - model.sigma()).max(0.0),
        InitialData::Density(_) => config.run.horizon,
    };
    let options = PdeOptions { snapshot_every: config.output.snapshot_every, decay: config.run.decay };
    let mut run = run_pde_from_field(model, field, horizon, &pol, options)?;
    run.renormalization = factor;
    Ok((run, branches))
}

fn integral_report(trace: &ActivityTrace) -> VerificationReport {
    let tol = VERIFY_DT_FACTOR * trace.dt;
    let r = trace.max_integral_residual();
    VerificationReport { max_psi_residual: r, max_mass_residual: 0.0, pass: r <= tol, snapshots: 0, tolerance: tol }
}

/// Executes the configured route. Steady states and admissible initial
/// activities are always included.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultBundle> {
    config.validate()?;
    let model = config.model()?;
    let steady = steady_states(&model);
    let data = config.initial_data(&model)?;
    let (trace, pde, branches, verification) = match (config.run.route, &data) {
        (Route::Pde, _) => {
            let (run, branches) = run_transport(config, &model, &data)?;
            let tol = VERIFY_DT_FACTOR * config.run.dt;
            let report = verify_solution(&run.snapshots, &run.trace, &model, tol)?;
            (run.trace.clone(), Some(run), branches, report)
        }
        (Route::Delay, InitialData::Density(d)) => {
            let branches = initial_activities(&model, d)?;
            let trace = evolve_activity(&model, d, config.run.horizon, config.run.dt, &policy(config))?;
            let report = integral_report(&trace);
            (trace, None, branches, report)
        }
        (Route::Monotone, InitialData::History(h)) => {
            // The history need not come from a nonnegative density, so the
            // branches are those of psi(N(0)) itself.
            let branches = initial_activities_from_tail(&model, model.psi(h[0])?)?;
            let [a, b] = config.run.psi_region.expect("validated");
            let trace = evolve_monotone(&model, h, (a, b), config.run.horizon, config.run.dt)?;
            let report = integral_report(&trace);
            (trace, None, branches, report)
        }
        _ => return Err(Error::config("initial", "initial data does not fit the route")),
    };
    Ok(ResultBundle { config: config.clone(), model, steady, branches, trace, pde, verification })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteComparison {
    pub max_divergence: f64,
    /// Largest divergence more than two steps away from any jump of
    /// either route.
    pub max_divergence_off_jumps: f64,
    pub bound: f64,
    pub first_divergence_time: Option<f64>,
    pub pde_jump_times: Vec<f64>,
    pub delay_jump_times: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
}

/// Runs the transport and delay routes on the same initial density and
/// branch policy and compares their activities sample by sample.
pub fn compare_routes(config: &ExperimentConfig) -> Result<RouteComparison> {
    let mut pde_cfg = config.clone();
    pde_cfg.run.route = Route::Pde;
    pde_cfg.output.snapshot_every = 0;
    pde_cfg.validate()?;
    let model = config.model()?;
    let data = config.initial_data(&model)?;
    let density: InitialDensity = match &data {
        InitialData::Density(d) => d.clone(),
        InitialData::History(_) => {
            return Err(Error::config("initial.density", "route comparison needs an initial density"))
        }
    };
    let (run, _) = run_transport(&pde_cfg, &model, &data)?;
    let delay = evolve_activity(&model, &density, config.run.horizon, config.run.dt, &policy(config))?;
    let (a, b) = (&run.trace, &delay);
    let bound = ROUTE_CONSTANT * (config.run.dt + config.ds());
    let jumps: Vec<f64> = a.jump_times().into_iter().chain(b.jump_times()).collect();
    let near_jump = |t: f64| jumps.iter().any(|j| (t - j).abs() <= 2.0 * config.run.dt * (1.0 + 1e-9));
    let mut max = 0.0f64;
    let mut max_off = 0.0f64;
    let mut first = None;
    for i in 0..a.len().min(b.len()) {
        let d = (a.values[i] - b.values[i]).abs();
        max = max.max(d);
        if !near_jump(a.times[i]) {
            max_off = max_off.max(d);
        }
        if first.is_none() && d > bound {
            first = Some(a.times[i]);
        }
    }
    Ok(RouteComparison {
        max_divergence: max,
        max_divergence_off_jumps: max_off,
        bound,
        first_divergence_time: first,
        pde_jump_times: a.jump_times(),
        delay_jump_times: b.jump_times(),
        dt: config.run.dt,
        horizon: config.run.horizon,
    })
}
