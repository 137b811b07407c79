//! Named experiment configurations.

use super::config::{ExperimentConfig, InitialSection, ModelSection, OutputSection, Route, RunSection};
use crate::activity::{BranchMode, BranchSeed};
use crate::error::{Error, Result};
use crate::model::{builtin_model, Trend};
use crate::steady::steady_states;
use crate::transport::Decay;

/// Steps per refractory period in every preset.
pub const PRESET_STEPS_PER_SIGMA: usize = 200;
/// Horizon of every preset, in refractory periods.
pub const PRESET_PERIODS: f64 = 50.0;

pub const PRESETS: &[&str] = &[
    "example1",
    "example1_branch2",
    "example1_branch3",
    "example1_steady2",
    "example1_monotone",
    "example2",
    "example2_branch2",
    "example2_branch3",
    "example3_1",
    "example3_2",
    "example4",
    "example4_branch2",
    "example4_branch3",
    "example4_monotone",
    "constant_rate",
    "weak_excitation",
];

fn base(model: &str, params: &[f64], sigma: f64, density: &str, density_params: &[f64], branch: usize) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSection { name: model.into(), params: params.to_vec(), sigma },
        initial: InitialSection {
            density: Some(density.into()),
            history: None,
            history_file: None,
            params: density_params.to_vec(),
        },
        run: RunSection {
            route: Route::Pde,
            horizon: PRESET_PERIODS * sigma,
            dt: sigma / PRESET_STEPS_PER_SIGMA as f64,
            ds: None,
            s_max: None,
            branch: BranchSeed::Index(branch),
            policy: BranchMode::ContinuationThenJump,
            psi_region: None,
            decay: Decay::Explicit,
        },
        output: OutputSection { dir: None, snapshot_every: 10 * PRESET_STEPS_PER_SIGMA },
    }
}

/// Monotone-route config: a linear history ending at `end` on the
/// decreasing piece of `psi` containing `end`, with the start chosen so
/// that `int_0^sigma N + psi(N(sigma)) = 1` holds for the trapezoid rule.
fn monotone(model: &str, params: &[f64], sigma: f64, end: f64) -> Result<ExperimentConfig> {
    let m = builtin_model(model, params, sigma)?;
    let piece = m.pieces()[m.piece_index(end)];
    if piece.trend != Trend::Decreasing {
        return Err(Error::Precondition(format!("psi is not decreasing at {end}")));
    }
    let start = 2.0 * (1.0 - m.psi(end)?) / sigma - end;
    let mut c = base(model, params, sigma, "exponential", &[0.0], 1);
    c.initial = InitialSection {
        density: None,
        history: Some("linear".into()),
        history_file: None,
        params: vec![start, end],
    };
    c.run.route = Route::Monotone;
    c.run.psi_region = Some([piece.lo, piece.hi]);
    c.output.snapshot_every = 0;
    Ok(c)
}

const EX1: (&str, [f64; 2], f64) = ("sigmoid", [9.0, 3.5], 0.5);
const EX4: (&str, [f64; 4], f64) = ("double_gaussian", [8.0, 0.1, 8.0, 3.0], 0.2);

/// Returns the named preset.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let mut c = match name {
        "example1" | "example1_branch2" | "example1_branch3" => {
            let b = name.strip_prefix("example1_branch").map_or(1, |d| d.parse().unwrap());
            base(EX1.0, &EX1.1, EX1.2, "plateau_exponential", &[1.0], b)
        }
        "example1_steady2" => base(EX1.0, &EX1.1, EX1.2, "steady", &[2.0], 2),
        "example1_monotone" => monotone(EX1.0, &EX1.1, EX1.2, 0.34)?,
        "example2" | "example2_branch2" | "example2_branch3" => {
            let b = name.strip_prefix("example2_branch").map_or(1, |d| d.parse().unwrap());
            base(EX1.0, &EX1.1, EX1.2, "exponential", &[0.5], b)
        }
        "example3_1" => base("clamped_linear", &[1.6, 1.0, 0.25], 1.0, "exponential", &[0.0], 1),
        "example3_2" => base("rational_shift", &[10.0, 0.5], 1.0, "exponential", &[1.0], 1),
        "example4" | "example4_branch2" | "example4_branch3" => {
            let b = name.strip_prefix("example4_branch").map_or(1, |d| d.parse().unwrap());
            base(EX4.0, &EX4.1, EX4.2, "cosine_exponential", &[], b)
        }
        "example4_monotone" => {
            // Ends just below the middle steady state.
            let m = builtin_model(EX4.0, &EX4.1, EX4.2)?;
            let mid = steady_states(&m).roots[1];
            monotone(EX4.0, &EX4.1, EX4.2, mid - 0.07)?
        }
        "constant_rate" => base("constant", &[1.0], 1.0, "cosine_exponential", &[], 1),
        "weak_excitation" => base("affine", &[1.0, 0.1], 1.0, "plateau_exponential", &[1.0], 1),
        other => {
            return Err(Error::config(
                "preset",
                format!("unknown preset `{other}`; known: {}", PRESETS.join(", ")),
            ))
        }
    };
    c.output.dir = Some(format!("out/{name}"));
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn example1_document() {
        let c = preset("example1").unwrap();
        assert_eq!(c.model.name, "sigmoid");
        assert_eq!(c.model.params, vec![9.0, 3.5]);
        assert_eq!(c.model.sigma, 0.5);
        assert_eq!(c.initial.density.as_deref(), Some("plateau_exponential"));
        assert_eq!(c.run.dt, 0.0025);
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(preset("example9"), Err(Error::Config { .. })));
    }
}
