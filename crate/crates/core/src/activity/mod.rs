//! Activity `N(t)` from the integral form of the model:
//! `int_{t-sigma}^t N + psi(N(t)) = 1` for `t >= sigma`, and
//! `int_0^t N + int_0^{sigma-t} n0 + psi(N(t)) = 1` before.

mod level;

pub use level::{
    solve_psi_level, BranchMode, BranchPolicy, BranchSeed, JumpRecord, LevelSolution, LevelSolver, LevelStep,
    LEVEL_SNAP,
};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::density::InitialDensity;
use crate::error::{Error, Result};
use crate::format::fmt_g;
use crate::model::{FiringModel, Trend};
use crate::roots::bisect;
use crate::steady::{initial_activities, steady_states};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityTrace {
    pub dt: f64,
    pub sigma: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub psi_values: Vec<f64>,
    pub branch_ids: Vec<usize>,
    pub jumps: Vec<JumpRecord>,
    /// Sample indices where the root was tangent (`psi' ~ 0`).
    pub tangent_steps: Vec<usize>,
}

impl ActivityTrace {
    fn with_capacity(dt: f64, sigma: f64, n: usize) -> Self {
        ActivityTrace {
            dt,
            sigma,
            times: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            psi_values: Vec::with_capacity(n),
            branch_ids: Vec::with_capacity(n),
            jumps: Vec::new(),
            tangent_steps: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, model: &FiringModel, k: usize, n: f64, branch: usize) {
        self.times.push(k as f64 * self.dt);
        self.values.push(n);
        self.psi_values.push(model.psi_unchecked(n));
        self.branch_ids.push(branch);
    }

    pub(crate) fn record(&mut self, model: &FiringModel, k: usize, step: &LevelStep) {
        self.push(model, k, step.n, step.branch);
        if let Some((before, after)) = step.jump {
            self.jumps.push(JumpRecord { time: k as f64 * self.dt, n_before: before, n_after: after });
        }
        if step.tangent {
            self.tangent_steps.push(k);
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("empty trace")
    }

    /// Samples per refractory period.
    pub fn steps_per_sigma(&self) -> usize {
        (self.sigma / self.dt).round() as usize
    }

    pub fn jump_times(&self) -> Vec<f64> {
        self.jumps.iter().map(|j| j.time).collect()
    }

    /// `|int_{t_k - sigma}^{t_k} N + psi(N(t_k)) - 1|` for every `t_k >= sigma`,
    /// with the composite trapezoid rule.
    pub fn integral_residuals(&self) -> Vec<f64> {
        let k = self.steps_per_sigma();
        (k..self.len())
            .map(|i| {
                let w = &self.values[i - k..=i];
                let inner: f64 = w[1..k].iter().sum();
                let integral = self.dt * (inner + 0.5 * (w[0] + w[k]));
                (integral + self.psi_values[i] - 1.0).abs()
            })
            .collect()
    }

    pub fn max_integral_residual(&self) -> f64 {
        self.integral_residuals().into_iter().fold(0.0, f64::max)
    }

    /// Largest `|psi(N_before) - psi(N_after)|` over recorded jumps.
    pub fn max_jump_psi_gap(&self, model: &FiringModel) -> f64 {
        self.jumps
            .iter()
            .map(|j| (model.psi_unchecked(j.n_before) - model.psi_unchecked(j.n_after)).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,N,psiN,branch,jump`, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,N,psiN,branch,jump\n");
        let mut jumps = self.jumps.iter().map(|j| (j.time / self.dt).round() as usize).peekable();
        for i in 0..self.len() {
            let jumped = jumps.peek() == Some(&i);
            if jumped {
                jumps.next();
            }
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_g(self.times[i], 12),
                fmt_g(self.values[i], 12),
                fmt_g(self.psi_values[i], 12),
                self.branch_ids[i],
                u8::from(jumped)
            );
        }
        out
    }
}

/// Number of steps per `sigma`, requiring `sigma / dt` to be an integer.
pub fn steps_per_sigma(sigma: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config("run.dt", format!("dt must be positive, got {dt}")));
    }
    let ratio = sigma / dt;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::config("run.dt", format!("sigma / dt = {ratio} is not a positive integer")));
    }
    Ok(k as usize)
}

pub(crate) fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::config("run.horizon", format!("horizon must be nonnegative, got {horizon}")));
    }
    Ok((horizon / dt).round() as usize)
}

/// Marches the integral equation with `N` piecewise constant per step
/// (left-endpoint sums over the delay window) and the exact cumulative
/// mass of `n0`.
pub fn evolve_activity(
    model: &FiringModel,
    n0: &InitialDensity,
    horizon: f64,
    dt: f64,
    policy: &BranchPolicy,
) -> Result<ActivityTrace> {
    let sigma = model.sigma();
    let k_sigma = steps_per_sigma(sigma, dt)?;
    let steps = step_count(horizon, dt)?;
    let branches = initial_activities(model, n0)?;
    let n_start = policy.initial_value(model, &branches.roots, branches.tail_mass)?;

    let mut solver = LevelSolver::new(model, policy.mode);
    solver.dt = dt;
    let mut trace = ActivityTrace::with_capacity(dt, sigma, steps + 1);
    let mut branch = solver.locate(n_start, model.psi_unchecked(n_start));
    trace.push(model, 0, n_start, branch);

    let level_at = |k: usize, values: &[f64]| -> f64 {
        if k < k_sigma {
            let t = k as f64 * dt;
            1.0 - dt * values[..k].iter().sum::<f64>() - n0.cdf(sigma - t)
        } else {
            1.0 - dt * values[k - k_sigma..k].iter().sum::<f64>()
        }
    };

    let mut prev_level = model.psi_unchecked(n_start);
    for k in 1..=steps {
        let level = level_at(k, &trace.values);
        let next = 2.0 * level - prev_level;
        let seed = trace.values[k - 1];
        let step = solver.step(branch, seed, level, Some(next)).map_err(|e| e.at(k as f64 * dt))?;
        branch = step.branch;
        trace.record(model, k, &step);
        prev_level = level;
    }
    Ok(trace)
}

/// Integrates `d/dt psi(N) = N(t - sigma) - N(t)` for `t > sigma` by the
/// explicit midpoint rule in `v = psi(N)`, inverting `psi` on `psi_region`
/// where it must be strictly decreasing. `history` holds `N` at
/// `0, dt, ..., sigma`.
pub fn evolve_monotone(
    model: &FiringModel,
    history: &[f64],
    psi_region: (f64, f64),
    horizon: f64,
    dt: f64,
) -> Result<ActivityTrace> {
    let sigma = model.sigma();
    let k_sigma = steps_per_sigma(sigma, dt)?;
    let steps = step_count(horizon, dt)?;
    if history.len() != k_sigma + 1 {
        return Err(Error::Precondition(format!(
            "history needs {} samples on [0, sigma], got {}",
            k_sigma + 1,
            history.len()
        )));
    }
    let (a, b) = psi_region;
    if !(0.0 < a && a < b && b <= model.p_hi()) {
        return Err(Error::Precondition(format!("invalid psi region [{a}, {b}]")));
    }
    for i in 0..=256 {
        let u = a + (b - a) * i as f64 / 256.0;
        let s = model.psi_prime(u)?.value;
        if !(s < 0.0) && !(i == 0 || i == 256) {
            return Err(Error::Precondition(format!("psi' = {s} >= 0 at {u} inside the declared region")));
        }
    }
    if let Some(u) = history.iter().find(|u| !(**u >= a && **u <= b)) {
        return Err(Error::Precondition(format!("history value {u} outside the region [{a}, {b}]")));
    }
    let n_sigma = history[k_sigma];
    let inner: f64 = history[1..k_sigma].iter().sum();
    let mass = dt * (inner + 0.5 * (history[0] + n_sigma)) + model.psi(n_sigma)?;
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::Precondition(format!("int_0^sigma N + psi(N(sigma)) = {mass}, expected 1")));
    }
    let increasing = history.iter().all(|u| *u <= n_sigma + 1e-12);
    let decreasing = history.iter().all(|u| *u >= n_sigma - 1e-12);
    if !(increasing || decreasing) {
        return Err(Error::Precondition("history must stay on one side of N(sigma)".into()));
    }
    let steady = steady_states(model);
    let bracketing = steady.roots.iter().copied().filter(|r| *r >= a && *r <= b).find(|r| {
        if increasing {
            n_sigma <= r + 1e-12
        } else {
            n_sigma >= r - 1e-12
        }
    });
    if bracketing.is_none() {
        return Err(Error::Precondition("no steady state inside the region beyond N(sigma)".into()));
    }

    let (v_lo, v_hi) = (model.psi_unchecked(b), model.psi_unchecked(a));
    let invert = |v: f64, t: f64| -> Result<f64> {
        let slack = 1e-14 * v.abs().max(1.0);
        if v < v_lo - slack || v > v_hi + slack {
            return Err(Error::Solver(format!("trajectory left the region [{a}, {b}] (psi = {v})")).at(t));
        }
        Ok(bisect(|u| model.psi_unchecked(u) - v, a, b, 0.0))
    };

    let branch = model.piece_index(0.5 * (a + b));
    debug_assert_eq!(model.pieces()[branch].trend, Trend::Decreasing);
    let mut trace = ActivityTrace::with_capacity(dt, sigma, k_sigma + steps + 1);
    for (k, u) in history.iter().enumerate() {
        trace.push(model, k, *u, branch);
    }
    let total = steps.max(k_sigma);
    let mut v = model.psi_unchecked(n_sigma);
    for k in k_sigma..total {
        let n = trace.values[k];
        let (d0, d1) = (trace.values[k - k_sigma], trace.values[k + 1 - k_sigma]);
        let t = k as f64 * dt;
        let v_half = v + 0.5 * dt * (d0 - n);
        let n_half = invert(v_half, t + 0.5 * dt)?;
        v += dt * (0.5 * (d0 + d1) - n_half);
        let next = invert(v, t + dt)?;
        trace.push(model, k + 1, next, branch);
        trace.psi_values[k + 1] = v;
    }
    Ok(trace)
}

/// Per-window maxima and minima of `N` over `I_k = [k sigma, (k + 1) sigma]`
/// for every complete window.
pub fn window_extrema(trace: &ActivityTrace, sigma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = steps_per_sigma(sigma, trace.dt)?;
    if trace.len() < 2 * k + 1 {
        return Err(Error::Precondition("trace must cover at least two refractory periods".into()));
    }
    let windows = (trace.len() - 1) / k;
    let mut maxima = Vec::with_capacity(windows);
    let mut minima = Vec::with_capacity(windows);
    for w in 0..windows {
        let slice = &trace.values[w * k..=(w + 1) * k];
        maxima.push(slice.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        minima.push(slice.iter().copied().fold(f64::INFINITY, f64::min));
    }
    Ok((maxima, minima))
}
