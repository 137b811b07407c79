//! Experiment configuration documents (TOML).

use serde::{Deserialize, Serialize};

use crate::activity::{steps_per_sigma, BranchMode, BranchSeed};
use crate::density::InitialDensity;
use crate::error::{Error, Result};
use crate::model::{builtin_model, FiringModel};
use crate::steady::steady_states;
use crate::transport::{AgeGrid, Decay};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Pde,
    Delay,
    Monotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    pub params: Vec<f64>,
    pub sigma: f64,
}

/// Exactly one of `density`, `history`, `history_file`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// Catalog density, or `steady` with the 1-based steady-state index.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<String>,
    /// `linear` history on `[0, sigma]` from `params[0]` to `params[1]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<String>,
    /// CSV with a header and `t,N` columns sampled at `run.dt`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history_file: Option<String>,
    #[serde(default)]
    pub params: Vec<f64>,
}

fn default_branch() -> BranchSeed {
    BranchSeed::Index(1)
}

fn default_mode() -> BranchMode {
    BranchMode::ContinuationThenJump
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub route: Route,
    pub horizon: f64,
    pub dt: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
    #[serde(default = "default_branch")]
    pub branch: BranchSeed,
    #[serde(default = "default_mode")]
    pub policy: BranchMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_region: Option<[f64; 2]>,
    #[serde(default)]
    pub decay: Decay,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default)]
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub initial: InitialSection,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Initial data resolved against the model.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Density(InitialDensity),
    /// Samples of `N` on `[0, sigma]` at spacing `dt`.
    History(Vec<f64>),
}

fn unknown_key(message: &str) -> String {
    message
        .split("unknown field `")
        .nth(1)
        .and_then(|rest| rest.split('`').next())
        .map(str::to_string)
        .unwrap_or_else(|| "document".to_string())
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn parse(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            Error::config(unknown_key(&message), message)
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model(&self) -> Result<FiringModel> {
        builtin_model(&self.model.name, &self.model.params, self.model.sigma).map_err(|e| Error::config("model", e.to_string()))
    }

    pub fn ds(&self) -> f64 {
        self.run.ds.unwrap_or(self.run.dt)
    }

    pub fn grid(&self, model: &FiringModel) -> Result<AgeGrid> {
        match self.run.s_max {
            Some(s_max) => AgeGrid::new(model.sigma(), self.ds(), s_max),
            None => AgeGrid::for_model(model, self.ds()),
        }
    }

    /// Overrides the time (and age) step.
    pub fn set_dt(&mut self, dt: f64) {
        self.run.dt = dt;
        if self.run.ds.is_some() {
            self.run.ds = Some(dt);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        let sigma = model.sigma();
        steps_per_sigma(sigma, self.run.dt)?;
        if !(self.run.horizon >= 0.0 && self.run.horizon.is_finite()) {
            return Err(Error::config("run.horizon", "horizon must be a nonnegative number"));
        }
        if let BranchSeed::Index(0) = self.run.branch {
            return Err(Error::config("run.branch", "branch indices start at 1"));
        }
        let given = [&self.initial.density, &self.initial.history, &self.initial.history_file]
            .iter()
            .filter(|x| x.is_some())
            .count();
        if given != 1 {
            return Err(Error::config("initial", "set exactly one of density, history, history_file"));
        }
        match self.run.route {
            Route::Pde => {
                if (self.ds() - self.run.dt).abs() > 1e-15 * self.run.dt {
                    return Err(Error::config("run.ds", "the transport route needs ds = dt"));
                }
                if self.run.dt * model.p_hi() >= 1.0 {
                    return Err(Error::config(
                        "run.dt",
                        format!("dt * p_hi = {} must be below 1", self.run.dt * model.p_hi()),
                    ));
                }
                self.grid(&model)?;
            }
            Route::Delay => {
                if self.initial.density.is_none() {
                    return Err(Error::config("initial.density", "the delay route needs an initial density"));
                }
            }
            Route::Monotone => {
                if self.initial.density.is_some() {
                    return Err(Error::config("initial.history", "the monotone route needs an activity history"));
                }
                if self.run.psi_region.is_none() {
                    return Err(Error::config("run.psi_region", "the monotone route needs psi_region"));
                }
            }
        }
        if self.initial.history_file.is_none() {
            self.initial_data(&model)?;
        }
        Ok(())
    }

    /// Resolves the initial section.
    pub fn initial_data(&self, model: &FiringModel) -> Result<InitialData> {
        let p = &self.initial.params;
        if let Some(name) = &self.initial.density {
            if name == "steady" {
                let roots = steady_states(model).roots;
                let i = match p.as_slice() {
                    [i] if *i >= 1.0 && i.fract() == 0.0 && (*i as usize) <= roots.len() => *i as usize,
                    _ => {
                        return Err(Error::config(
                            "initial.params",
                            format!("steady needs one index in 1..={}", roots.len()),
                        ))
                    }
                };
                return Ok(InitialData::Density(InitialDensity::steady(model, roots[i - 1])?));
            }
            return InitialDensity::builtin(name, p)
                .map(InitialData::Density)
                .map_err(|e| Error::config("initial.density", e.to_string()));
        }
        let k = steps_per_sigma(model.sigma(), self.run.dt)?;
        if let Some(kind) = &self.initial.history {
            return match (kind.as_str(), p.as_slice()) {
                ("linear", [a, b]) => {
                    Ok(InitialData::History((0..=k).map(|i| a + (b - a) * i as f64 / k as f64).collect()))
                }
                ("linear", _) => Err(Error::config("initial.params", "linear history takes [start, end]")),
                (other, _) => Err(Error::config("initial.history", format!("unknown history kind `{other}`"))),
            };
        }
        let path = self.initial.history_file.as_ref().expect("validated");
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("initial.history_file", e.to_string()))?;
        let values: Vec<f64> = text
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .nth(1)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::config("initial.history_file", format!("bad line `{l}`")))
            })
            .collect::<Result<_>>()?;
        if values.len() != k + 1 {
            return Err(Error::config(
                "initial.history_file",
                format!("expected {} samples, found {}", k + 1, values.len()),
            ));
        }
        Ok(InitialData::History(values))
    }
}
