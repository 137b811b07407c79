//! Periodic activities: piecewise-constant `sigma`-periodic profiles,
//! continuous profiles on a linear band of `phi`, and piecewise-monotone
//! `2 sigma`-periodic profiles built as the fixed point of an operator `T`
//! on `[0, sigma]`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::activity::{steps_per_sigma, BranchMode, LevelSolver, LEVEL_SNAP};
use crate::error::{Error, Result};
use crate::format::fmt_g;
use crate::model::{FiringModel, Piece, Trend};
use crate::roots::bisect;

/// Sample spacing of the analytic profiles, per `sigma`.
pub const SAMPLES_PER_SIGMA: usize = 400;
/// Number of evaluation times for profile residuals.
pub const RESIDUAL_TIMES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    PiecewiseConstant,
    LinearBand,
    TwoSigma,
}

/// Zero-mean `sigma`-periodic shapes for the linear band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    Zero,
    /// `+1` on the first half period, `-1` on the second.
    Square,
    /// `sin(2 pi t / sigma)`.
    Sine,
}

impl Waveform {
    fn value(self, tau: f64, sigma: f64) -> f64 {
        match self {
            Waveform::Zero => 0.0,
            Waveform::Square => {
                if tau < 0.5 * sigma {
                    1.0
                } else {
                    -1.0
                }
            }
            Waveform::Sine => (2.0 * std::f64::consts::PI * tau / sigma).sin(),
        }
    }

    /// `int_0^tau w` for `tau` in `[0, sigma]`.
    fn integral(self, tau: f64, sigma: f64) -> f64 {
        match self {
            Waveform::Zero => 0.0,
            Waveform::Square => {
                if tau < 0.5 * sigma {
                    tau
                } else {
                    sigma - tau
                }
            }
            Waveform::Sine => {
                let w = 2.0 * std::f64::consts::PI / sigma;
                (1.0 - (w * tau).cos()) / w
            }
        }
    }

    fn sup(self) -> f64 {
        match self {
            Waveform::Zero => 0.0,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ProfileShape {
    PiecewiseConstant { n1: f64, n2: f64, alpha: f64 },
    LinearBand { mean: f64, amplitude: f64, waveform: Waveform },
    /// Nodes at spacing `h` on `[0, sigma]` (left limit at `sigma` last)
    /// and on `[sigma, 2 sigma]` (left limit at `2 sigma` last).
    TwoSigma { first: Vec<f64>, second: Vec<f64>, h: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicProfile {
    pub kind: ProfileKind,
    pub sigma: f64,
    pub period: f64,
    pub shape: ProfileShape,
    /// Sample spacing of `samples`.
    pub h: f64,
    /// One period of `N` at `0, h, 2h, ...` (right limits at jumps).
    pub samples: Vec<f64>,
    pub jump_points: Vec<f64>,
    /// Largest `|psi(N(t-)) - psi(N(t+))|` over the jump points.
    pub jump_psi_gap: f64,
    /// Value of `int_{t-sigma}^t N + psi(N(t))` the profile conserves.
    pub mass_level: f64,
    /// Max over sampled times of `|int_{t-sigma}^t N + psi(N(t)) - mass_level|`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassFunctional {
    pub n_plus: f64,
    pub n_minus: f64,
    pub q_value: f64,
}

/// Diagnostics of the fixed-point iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contraction {
    pub iterations: usize,
    /// Successive sup-distances between iterates.
    pub distances: Vec<f64>,
    /// Largest ratio `d_{k+1} / d_k` while above the round-off floor.
    pub ratio: f64,
}

impl PeriodicProfile {
    fn finish(kind: ProfileKind, sigma: f64, period: f64, shape: ProfileShape, h: f64, model: &FiringModel, mass_level: f64) -> Self {
        let mut p = PeriodicProfile {
            kind,
            sigma,
            period,
            shape,
            h,
            samples: Vec::new(),
            jump_points: Vec::new(),
            jump_psi_gap: 0.0,
            mass_level,
            residual: 0.0,
        };
        let n = (period / h).round() as usize;
        p.samples = (0..n).map(|i| p.value_at(i as f64 * h)).collect();
        let (points, gap) = match &p.shape {
            ProfileShape::PiecewiseConstant { n1, n2, alpha } => {
                (vec![0.0, *alpha], (model.psi_unchecked(*n1) - model.psi_unchecked(*n2)).abs())
            }
            ProfileShape::LinearBand { waveform: Waveform::Square, .. } => {
                let gap = (0..2)
                    .map(|i| {
                        let t = 0.5 * sigma * i as f64;
                        (model.psi_unchecked(p.value_at(t)) - model.psi_unchecked(p.left_limit(t))).abs()
                    })
                    .fold(0.0, f64::max);
                (vec![0.0, 0.5 * sigma], gap)
            }
            ProfileShape::LinearBand { .. } => (Vec::new(), 0.0),
            ProfileShape::TwoSigma { first, second, .. } => {
                let g1 = (model.psi_unchecked(first[first.len() - 1]) - model.psi_unchecked(second[0])).abs();
                let g2 = (model.psi_unchecked(second[second.len() - 1]) - model.psi_unchecked(first[0])).abs();
                (vec![0.0, sigma], g1.max(g2))
            }
        };
        p.jump_points = points;
        p.jump_psi_gap = gap;
        p.residual = p.residual_against(model, mass_level);
        p
    }

    /// `N(t)`, extended periodically, right-continuous.
    pub fn value_at(&self, t: f64) -> f64 {
        let tau = t.rem_euclid(self.period);
        match &self.shape {
            ProfileShape::PiecewiseConstant { n1, n2, alpha } => {
                if tau < *alpha {
                    *n1
                } else {
                    *n2
                }
            }
            ProfileShape::LinearBand { mean, amplitude, waveform } => mean + amplitude * waveform.value(tau, self.sigma),
            ProfileShape::TwoSigma { first, second, h } => {
                if tau < self.sigma {
                    interp(first, tau / h)
                } else {
                    interp(second, (tau - self.sigma) / h)
                }
            }
        }
    }

    fn left_limit(&self, t: f64) -> f64 {
        self.value_at(t - 1e-9 * self.period)
    }

    /// `int_0^t N` for any real `t` (periodic extension).
    pub fn cumulative(&self, t: f64) -> f64 {
        let cycles = (t / self.period).floor();
        let tau = t - cycles * self.period;
        cycles * self.one_period_integral(self.period) + self.one_period_integral(tau)
    }

    fn one_period_integral(&self, tau: f64) -> f64 {
        match &self.shape {
            ProfileShape::PiecewiseConstant { n1, n2, alpha } => n1 * tau.min(*alpha) + n2 * (tau - alpha).max(0.0),
            ProfileShape::LinearBand { mean, amplitude, waveform } => {
                mean * tau + amplitude * waveform.integral(tau.min(self.sigma), self.sigma)
            }
            ProfileShape::TwoSigma { first, second, h } => {
                if tau <= self.sigma {
                    linear_integral(first, tau / h) * h
                } else {
                    (linear_integral(first, (first.len() - 1) as f64) + linear_integral(second, (tau - self.sigma) / h)) * h
                }
            }
        }
    }

    /// Max over `RESIDUAL_TIMES` times of one period of
    /// `|int_{t-sigma}^t N + psi(N(t)) - level|`.
    pub fn residual_against(&self, model: &FiringModel, level: f64) -> f64 {
        (0..RESIDUAL_TIMES)
            .map(|i| {
                let t = self.period * i as f64 / RESIDUAL_TIMES as f64;
                let window = self.cumulative(t) - self.cumulative(t - self.sigma);
                (window + model.psi_unchecked(self.value_at(t)) - level).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Residual of the unit-mass equation.
    pub fn mass_residual(&self, model: &FiringModel) -> f64 {
        self.residual_against(model, 1.0)
    }

    /// CSV in the trace format `t,N,psiN,branch,jump`.
    pub fn to_csv(&self, model: &FiringModel) -> String {
        let mut out = String::from("t,N,psiN,branch,jump\n");
        for (i, n) in self.samples.iter().enumerate() {
            let t = i as f64 * self.h;
            let jump = self.jump_points.iter().any(|p| (p - t).abs() < 0.5 * self.h) && i > 0
                || (i == 0 && self.jump_points.contains(&0.0));
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_g(t, 12),
                fmt_g(*n, 12),
                fmt_g(model.psi_unchecked(*n), 12),
                model.piece_index(*n),
                u8::from(jump)
            );
        }
        out
    }

    /// JSON sidecar: kind, period, anchors, alpha, Q, residuals.
    pub fn sidecar(&self, model: &FiringModel, extra: serde_json::Value) -> serde_json::Value {
        let (anchors, alpha) = match &self.shape {
            ProfileShape::PiecewiseConstant { n1, n2, alpha } => (Some([*n1, *n2]), Some(*alpha)),
            ProfileShape::TwoSigma { first, second, .. } => (Some([second[second.len() - 1], first[0]]), None),
            ProfileShape::LinearBand { .. } => (None, None),
        };
        serde_json::json!({
            "kind": self.kind,
            "period": self.period,
            "sigma": self.sigma,
            "anchors": anchors,
            "alpha": alpha,
            "q": self.mass_level,
            "residual": self.residual,
            "mass_residual": self.mass_residual(model),
            "jump_points": self.jump_points,
            "jump_psi_gap": self.jump_psi_gap,
            "extra": extra,
        })
    }
}

fn interp(nodes: &[f64], x: f64) -> f64 {
    let last = nodes.len() - 1;
    let i = (x.floor().max(0.0) as usize).min(last - 1);
    let f = (x - i as f64).clamp(0.0, 1.0);
    nodes[i] + f * (nodes[i + 1] - nodes[i])
}

/// Integral in node units of the piecewise-linear interpolant from 0 to `x`.
fn linear_integral(nodes: &[f64], x: f64) -> f64 {
    let last = nodes.len() - 1;
    let x = x.clamp(0.0, last as f64);
    let i = (x.floor() as usize).min(last - 1);
    let full: f64 = nodes.windows(2).take(i).map(|w| 0.5 * (w[0] + w[1])).sum();
    let f = x - i as f64;
    let end = nodes[i] + f * (nodes[i + 1] - nodes[i]);
    full + 0.5 * f * (nodes[i] + end)
}

/// Solutions of `psi(N) = level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LevelSet {
    /// All ordered pairs `(N1, N2)`, `N1 < N2`, of isolated roots.
    Pairs(Vec<(f64, f64)>),
    /// `psi` equals the level on a whole band.
    Interval(f64, f64),
}

pub fn psi_level_pairs(model: &FiringModel, level: f64) -> Result<LevelSet> {
    let solver = LevelSolver::new(model, BranchMode::ContinuationThenJump);
    let snap = LEVEL_SNAP * level.abs().max(1.0);
    for (i, p) in model.pieces().iter().enumerate() {
        if p.trend == Trend::Flat {
            let (lo, hi) = solver.range(i);
            if (lo - level).abs() <= snap && (hi - level).abs() <= snap {
                return Ok(LevelSet::Interval(p.lo, p.hi));
            }
        }
    }
    let mut roots: Vec<f64> = Vec::new();
    for i in 0..model.pieces().len() {
        if let Some(r) = solver.root_on_piece(i, level) {
            if r > 0.0 && roots.iter().all(|x| (x - r).abs() > 1e-12) {
                roots.push(r);
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    if roots.len() < 2 {
        return Err(Error::Precondition(format!(
            "psi(N) = {level} has {} root(s); at least two are needed",
            roots.len()
        )));
    }
    let mut pairs = Vec::new();
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            pairs.push((roots[i], roots[j]));
        }
    }
    Ok(LevelSet::Pairs(pairs))
}

/// `N = N1` on `[0, alpha)`, `N2` on `[alpha, sigma)`, with
/// `alpha N1 + (sigma - alpha) N2 + psi(N1) = 1`.
pub fn construct_piecewise_constant(model: &FiringModel, n1: f64, n2: f64) -> Result<PeriodicProfile> {
    let (p1, p2) = (model.psi(n1)?, model.psi(n2)?);
    if (p1 - p2).abs() > 1e-10 {
        return Err(Error::Precondition(format!("psi(N1) = {p1} differs from psi(N2) = {p2}")));
    }
    if (n1 - n2).abs() <= 1e-12 {
        return Err(Error::Precondition("N1 and N2 must differ".into()));
    }
    let sigma = model.sigma();
    let alpha = (1.0 - p1 - sigma * n2) / (n1 - n2);
    if !(alpha > 0.0 && alpha < sigma) {
        return Err(Error::Precondition(format!("alpha = {alpha} outside (0, sigma): no periodic solution for this pair")));
    }
    let shape = ProfileShape::PiecewiseConstant { n1, n2, alpha };
    Ok(PeriodicProfile::finish(
        ProfileKind::PiecewiseConstant,
        sigma,
        sigma,
        shape,
        sigma / SAMPLES_PER_SIGMA as f64,
        model,
        1.0,
    ))
}

/// `N = m + amplitude * w(t)` with `m = (1 - 1/C) / sigma`, on a band
/// `[a, b]` where `phi(u) = C u`.
pub fn construct_linear_band(
    model: &FiringModel,
    a: f64,
    b: f64,
    c: f64,
    waveform: Waveform,
    amplitude: Option<f64>,
) -> Result<PeriodicProfile> {
    if !(0.0 < a && a < b) {
        return Err(Error::Precondition(format!("invalid band [{a}, {b}]")));
    }
    for i in 0..=256 {
        let u = a + (b - a) * i as f64 / 256.0;
        let r = (model.phi(u)? - c * u).abs();
        if r > 1e-10 {
            return Err(Error::Precondition(format!("phi({u}) differs from {c} u by {r:e}")));
        }
    }
    let sigma = model.sigma();
    let target = 1.0 - 1.0 / c;
    if !(c > 1.0 && a * sigma < target && target < b * sigma) {
        return Err(Error::Precondition(format!(
            "need C > 1 and a sigma < 1 - 1/C < b sigma (a sigma = {}, 1 - 1/C = {target}, b sigma = {})",
            a * sigma,
            b * sigma
        )));
    }
    if waveform.integral(sigma, sigma).abs() > 1e-10 {
        return Err(Error::Precondition("waveform must have zero mean".into()));
    }
    let mean = target / sigma;
    let amplitude = match amplitude {
        Some(x) => x,
        None if waveform.sup() > 0.0 => 0.9 * (b - mean).min(mean - a) / waveform.sup(),
        None => 0.0,
    };
    let reach = amplitude.abs() * waveform.sup();
    if mean - reach < a - 1e-12 || mean + reach > b + 1e-12 {
        return Err(Error::Precondition(format!(
            "range [{}, {}] escapes the band [{a}, {b}]",
            mean - reach,
            mean + reach
        )));
    }
    let shape = ProfileShape::LinearBand { mean, amplitude, waveform };
    Ok(PeriodicProfile::finish(
        ProfileKind::LinearBand,
        sigma,
        sigma,
        shape,
        sigma / SAMPLES_PER_SIGMA as f64,
        model,
        1.0,
    ))
}

/// The decreasing piece holding `N-` and the increasing piece holding `N+`
/// around a local minimum of `psi`.
#[derive(Debug, Clone, Copy)]
struct Valley {
    down: Piece,
    up: Piece,
}

impl Valley {
    fn around(model: &FiringModel, n_minus: f64, n_plus: f64) -> Result<Self> {
        let pieces = model.pieces();
        let i = pieces
            .iter()
            .position(|p| p.trend == Trend::Decreasing && p.contains(n_minus))
            .ok_or_else(|| Error::Precondition(format!("psi is not decreasing around N- = {n_minus}")))?;
        match pieces.get(i + 1) {
            Some(up) if up.trend == Trend::Increasing && up.contains(n_plus) => Ok(Valley { down: pieces[i], up: *up }),
            _ => Err(Error::Precondition(format!(
                "N+ = {n_plus} is not on the increasing piece following the local minimum at {}",
                pieces[i].hi
            ))),
        }
    }

    fn minimum(&self) -> f64 {
        self.down.hi
    }
}

/// The operator `T` on `[0, sigma]` for fixed anchors.
#[derive(Debug, Clone)]
pub struct TwoSigmaOperator<'a> {
    model: &'a FiringModel,
    valley: Valley,
    pub n_plus: f64,
    pub n_minus: f64,
    pub h: f64,
    pub nodes: usize,
}

impl<'a> TwoSigmaOperator<'a> {
    pub fn new(model: &'a FiringModel, n_plus: f64, n_minus: f64, dt: f64) -> Result<Self> {
        let (pp, pm) = (model.psi(n_plus)?, model.psi(n_minus)?);
        if (pp - pm).abs() > 1e-10 {
            return Err(Error::Precondition(format!("psi(N+) = {pp} differs from psi(N-) = {pm}")));
        }
        if !(n_minus < n_plus) {
            return Err(Error::Precondition("need N- < N+".into()));
        }
        let valley = Valley::around(model, n_minus, n_plus)?;
        if !(n_minus < valley.minimum() && valley.minimum() < n_plus) {
            return Err(Error::Precondition("anchors must enclose the local minimum of psi".into()));
        }
        let m = steps_per_sigma(model.sigma(), dt)?;
        Ok(TwoSigmaOperator { model, valley, n_plus, n_minus, h: dt, nodes: m + 1 })
    }

    fn invert(&self, piece: Piece, v: f64, what: &str) -> Result<f64> {
        let (a, b) = (self.model.psi_unchecked(piece.lo), self.model.psi_unchecked(piece.hi));
        let (lo, hi) = (a.min(b), a.max(b));
        let slack = 1e-13 * v.abs().max(1.0);
        if v < lo - slack || v > hi + slack {
            return Err(Error::Solver(format!("{what} left its monotone piece [{}, {}] (psi = {v})", piece.lo, piece.hi)));
        }
        Ok(bisect(|u| self.model.psi_unchecked(u) - v, piece.lo, piece.hi, 0.0))
    }

    /// Initial iterate: linear decrease from `N+` halfway to the minimum.
    pub fn initial_guess(&self) -> Vec<f64> {
        let end = 0.5 * (self.n_plus + self.valley.minimum());
        let m = (self.nodes - 1) as f64;
        (0..self.nodes).map(|i| self.n_plus + (end - self.n_plus) * i as f64 / m).collect()
    }

    /// Returns `(T[N], M)` where `M` is the solution on `[sigma, 2 sigma]`
    /// of `d psi(M)/dt = N(t - sigma) - M` with `M(2 sigma) = N-`.
    pub fn apply(&self, n: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.nodes - 1;
        let h = self.h;
        let mut big_m = vec![0.0; m + 1];
        big_m[m] = self.n_minus;
        let mut v = self.model.psi_unchecked(self.n_minus);
        for i in (0..m).rev() {
            let f1 = n[i + 1] - big_m[i + 1];
            let predictor = self.invert(self.valley.down, v - h * f1, "M")?;
            v -= 0.5 * h * (f1 + n[i] - predictor);
            big_m[i] = self.invert(self.valley.down, v, "M")?;
        }
        let mut l = vec![0.0; m + 1];
        l[0] = self.n_plus;
        let mut v = self.model.psi_unchecked(self.n_plus);
        for i in 0..m {
            let f0 = big_m[i] - l[i];
            let predictor = self.invert(self.valley.up, v + h * f0, "L")?;
            v += 0.5 * h * (f0 + big_m[i + 1] - predictor);
            l[i + 1] = self.invert(self.valley.up, v, "L")?;
        }
        Ok((l, big_m))
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Iterates `T` to its fixed point and assembles the `2 sigma`-periodic
/// profile: decreasing from `N+` on `(0, sigma)`, jump at `sigma`,
/// decreasing to `N-` on `(sigma, 2 sigma)`.
pub fn construct_two_sigma(
    model: &FiringModel,
    n_plus: f64,
    n_minus: f64,
    dt: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(PeriodicProfile, MassFunctional, Contraction)> {
    let op = TwoSigmaOperator::new(model, n_plus, n_minus, dt)?;
    let mut n = op.initial_guess();
    let mut distances = Vec::new();
    let mut growing = 0;
    let mut converged = false;
    for _ in 0..max_iter {
        let (next, _) = op.apply(&n)?;
        let d = sup_distance(&next, &n);
        if let Some(prev) = distances.last() {
            growing = if d >= *prev { growing + 1 } else { 0 };
        }
        distances.push(d);
        n = next;
        if d <= tol {
            converged = true;
            break;
        }
        if growing >= 3 {
            return Err(Error::Solver(format!("iteration of T diverges (distance {d:e}); sigma too large")));
        }
    }
    if !converged {
        return Err(Error::Solver(format!(
            "T did not converge within {max_iter} iterations (last distance {:e})",
            distances.last().copied().unwrap_or(f64::NAN)
        )));
    }
    let (_, second) = op.apply(&n)?;
    let floor = 1e3 * tol.max(1e-15);
    let ratio = distances
        .windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    let contraction = Contraction { iterations: distances.len(), distances, ratio };

    let sigma = model.sigma();
    let gap = (model.psi_unchecked(n[n.len() - 1]) - model.psi_unchecked(second[0])).abs();
    if gap > 10.0 * dt {
        return Err(Error::Verification(format!("psi jumps by {gap:e} at sigma")));
    }
    if !n.windows(2).all(|w| w[1] < w[0]) || !second.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::Verification("profile is not strictly decreasing on each half period".into()));
    }
    let q_value = model.psi_unchecked(n_plus) + dt * (second.iter().sum::<f64>() - 0.5 * (second[0] + second[second.len() - 1]));
    let shape = ProfileShape::TwoSigma { first: n, second, h: dt };
    let profile = PeriodicProfile::finish(ProfileKind::TwoSigma, sigma, 2.0 * sigma, shape, dt, model, q_value);
    Ok((profile, MassFunctional { n_plus, n_minus, q_value }, contraction))
}

/// Anchors `(N-, N+)` at `psi` level `level` around the valley of `pair`.
fn anchors_at(model: &FiringModel, valley: &Valley, level: f64) -> Result<(f64, f64)> {
    let solver = LevelSolver::new(model, BranchMode::ContinuationThenJump);
    let idx = |p: &Piece| model.pieces().iter().position(|q| q == p).unwrap();
    let down = solver.root_on_piece(idx(&valley.down), level);
    let up = solver.root_on_piece(idx(&valley.up), level);
    match (down, up) {
        (Some(d), Some(u)) if d < u => Ok((d, u)),
        _ => Err(Error::Precondition(format!("level {level} has no anchor pair around the minimum"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub profile: PeriodicProfile,
    pub mass: MassFunctional,
    pub contraction: Contraction,
    pub iterations: usize,
    pub level: f64,
}

/// Bisects the `psi` level of the anchor pair until `|Q - 1| <= tol`.
/// `bracket` holds two pairs `(N-, N+)` whose `Q` values straddle 1.
pub fn calibrate_mass(
    model: &FiringModel,
    bracket: ((f64, f64), (f64, f64)),
    dt: f64,
    tol: f64,
) -> Result<Calibration> {
    let ((m_lo, p_lo), (m_hi, p_hi)) = bracket;
    let valley = Valley::around(model, m_lo, p_lo)?;
    Valley::around(model, m_hi, p_hi)?;
    let eval = |level: f64| -> Result<(PeriodicProfile, MassFunctional, Contraction)> {
        let (nm, np) = anchors_at(model, &valley, level)?;
        construct_two_sigma(model, np, nm, dt, 1e-12, 200)
    };
    let (mut a, mut b) = (model.psi(p_lo)?, model.psi(p_hi)?);
    let fa = eval(a)?;
    if (fa.1.q_value - 1.0).abs() <= tol {
        return Ok(Calibration { level: a, profile: fa.0, mass: fa.1, contraction: fa.2, iterations: 0 });
    }
    let fb = eval(b)?;
    if (fb.1.q_value - 1.0).abs() <= tol {
        return Ok(Calibration { level: b, profile: fb.0, mass: fb.1, contraction: fb.2, iterations: 0 });
    }
    let (qa, qb) = (fa.1.q_value - 1.0, fb.1.q_value - 1.0);
    if (qa < 0.0) == (qb < 0.0) {
        return Err(Error::Precondition(format!("bracket does not straddle Q = 1 (Q = {}, {})", qa + 1.0, qb + 1.0)));
    }
    let mut sa = qa < 0.0;
    for iterations in 1..=200 {
        let mid = 0.5 * (a + b);
        let (profile, mass, contraction) = eval(mid)?;
        let q = mass.q_value - 1.0;
        if q.abs() <= tol {
            return Ok(Calibration { profile, mass, contraction, iterations, level: mid });
        }
        if (q < 0.0) == sa {
            a = mid;
            sa = q < 0.0;
        } else {
            b = mid;
        }
    }
    Err(Error::Solver("mass calibration did not reach the tolerance".into()))
}

/// Scans anchor levels above the local minimum that ends at `minimum` and
/// returns the first adjacent pair of anchor pairs whose `Q` straddles 1.
pub fn mass_bracket(model: &FiringModel, minimum: f64, dt: f64, scan: usize) -> Result<((f64, f64), (f64, f64))> {
    let pieces = model.pieces();
    let i = pieces
        .iter()
        .position(|p| p.trend == Trend::Decreasing && (p.hi - minimum).abs() < 1e-9)
        .ok_or_else(|| Error::Precondition(format!("no local minimum of psi at {minimum}")))?;
    let up = *pieces.get(i + 1).ok_or_else(|| Error::Precondition("minimum at the domain end".into()))?;
    let valley = Valley { down: pieces[i], up };
    let bottom = model.psi_unchecked(minimum);
    let top = model.psi_unchecked(valley.down.lo).min(model.psi_unchecked(valley.up.hi));
    let mut prev: Option<((f64, f64), f64)> = None;
    for j in 1..scan {
        let level = bottom + (top - bottom) * j as f64 / scan as f64;
        let (nm, np) = anchors_at(model, &valley, level)?;
        let q = match construct_two_sigma(model, np, nm, dt, 1e-12, 200) {
            Ok((_, mf, _)) => mf.q_value,
            Err(_) => continue,
        };
        if let Some((pair, q_prev)) = prev {
            if (q_prev - 1.0) * (q - 1.0) <= 0.0 {
                return Ok((pair, (nm, np)));
            }
        }
        prev = Some(((nm, np), q));
    }
    Err(Error::Precondition("no anchor levels with Q straddling 1".into()))
}
