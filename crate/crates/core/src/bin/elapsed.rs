use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use elapsed_core::harness::{compare_routes, preset, run_experiment, ExperimentConfig, InitialData, PRESETS};
use elapsed_core::periodic::{
    calibrate_mass, construct_linear_band, construct_piecewise_constant, mass_bracket, psi_level_pairs, LevelSet,
    PeriodicProfile, Waveform,
};
use elapsed_core::reconstruct::{initial_from_activity, verify_solution};
use elapsed_core::steady::initial_activities_field;
use elapsed_core::transport::{run_pde_from_field, PdeOptions};
use elapsed_core::{model::Trend, steady_states, BranchPolicy, BranchSeed, Error, FiringModel, Result};

#[derive(Parser)]
#[command(name = "elapsed", version, about = "Elapsed-time neural network model experiments")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset, used when --config is absent.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Time step (overrides run.dt and run.ds).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Branch: a 1-based index or an initial activity value.
    #[arg(long, global = true)]
    branch: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    PiecewiseConstant,
    LinearBand,
    TwoSigma,
}

#[derive(Clone, Copy, ValueEnum)]
enum Wave {
    Square,
    Sine,
    Zero,
}

#[derive(Subcommand)]
enum Command {
    /// Steady states of the configured model.
    Steady,
    /// Admissible initial activities for the configured initial data.
    Branches,
    /// Runs the configured route and writes the result bundle.
    Run,
    /// Builds a periodic activity profile.
    Periodic {
        #[arg(long, value_enum, default_value = "piecewise-constant")]
        kind: Kind,
        /// Level of psi for the piecewise-constant profile.
        #[arg(long)]
        level: Option<f64>,
        #[arg(long, value_enum, default_value = "square")]
        waveform: Wave,
        #[arg(long)]
        amplitude: Option<f64>,
    },
    /// Rebuilds the density from an activity history and verifies it.
    Reconstruct,
    /// Compares the transport and delay routes.
    Compare,
    /// Lists presets, or prints one as TOML.
    Preset { name: Option<String> },
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match (&cli.config, &cli.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(Error::config("--config", "pass --config PATH or --preset NAME")),
    };
    if let Some(dt) = cli.dt {
        config.set_dt(dt);
    }
    if let Some(b) = &cli.branch {
        config.run.branch = match b.parse::<usize>() {
            Ok(i) => BranchSeed::Index(i),
            Err(_) => BranchSeed::Value(b.parse().map_err(|_| Error::config("--branch", format!("`{b}` is not a number")))?),
        };
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(cli: &Cli, config: &ExperimentConfig) -> Option<PathBuf> {
    cli.out.clone().or_else(|| config.output.dir.as_ref().map(PathBuf::from))
}

fn emit(dir: Option<&Path>, name: &str, body: &str) -> Result<()> {
    match dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), body)?;
            println!("wrote {}", dir.join(name).display());
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn periodic(model: &FiringModel, kind: Kind, level: Option<f64>, wave: Wave, amplitude: Option<f64>, dt: f64) -> Result<(PeriodicProfile, serde_json::Value)> {
    match kind {
        Kind::PiecewiseConstant => {
            let level = level.ok_or_else(|| Error::config("--level", "piecewise-constant profiles need --level"))?;
            let pairs = match psi_level_pairs(model, level)? {
                LevelSet::Interval(a, b) => vec![(a, b)],
                LevelSet::Pairs(p) => p,
            };
            let mut last = None;
            for (a, b) in pairs {
                match construct_piecewise_constant(model, a, b) {
                    Ok(p) => return Ok((p, serde_json::json!({ "level": level }))),
                    Err(e) => last = Some(e),
                }
            }
            Err(last.expect("at least one pair"))
        }
        Kind::LinearBand => {
            let band = model
                .pieces()
                .iter()
                .find(|p| p.trend == Trend::Flat)
                .ok_or_else(|| Error::Precondition("psi has no flat band".into()))?;
            let c = model.phi(band.hi)? / band.hi;
            let waveform = match wave {
                Wave::Square => Waveform::Square,
                Wave::Sine => Waveform::Sine,
                Wave::Zero => Waveform::Zero,
            };
            let p = construct_linear_band(model, band.lo, band.hi, c, waveform, amplitude)?;
            Ok((p, serde_json::json!({ "band": [band.lo, band.hi], "slope": c })))
        }
        Kind::TwoSigma => {
            let pieces = model.pieces();
            let minimum = pieces
                .windows(2)
                .find(|w| w[0].trend == Trend::Decreasing && w[1].trend == Trend::Increasing)
                .map(|w| w[0].hi)
                .ok_or_else(|| Error::Precondition("psi has no local minimum".into()))?;
            let bracket = mass_bracket(model, minimum, dt, 64)?;
            let cal = calibrate_mass(model, bracket, dt, 1e-8)?;
            let extra = serde_json::json!({
                "mass": cal.mass,
                "contraction_ratio": cal.contraction.ratio,
                "iterations": cal.contraction.iterations,
                "level": cal.level,
            });
            Ok((cal.profile, extra))
        }
    }
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    if let Command::Preset { name } = &cli.command {
        match name {
            Some(n) => print!("{}", preset(n)?.to_toml()),
            None => PRESETS.iter().for_each(|p| println!("{p}")),
        }
        return Ok(ExitCode::SUCCESS);
    }
    let config = load(cli)?;
    let model = config.model()?;
    let dir = out_dir(cli, &config);
    match &cli.command {
        Command::Steady => emit(dir.as_deref(), "steady_states.json", &pretty(&steady_states(&model)))?,
        Command::Branches => {
            let grid = config.grid(&model)?;
            let branches = match config.initial_data(&model)? {
                InitialData::Density(d) => elapsed_core::initial_activities(&model, &d)?,
                InitialData::History(h) => initial_activities_field(&model, &initial_from_activity(&model, &h, &grid)?)?,
            };
            emit(dir.as_deref(), "initial_activities.json", &pretty(&branches))?;
        }
        Command::Run => {
            let bundle = run_experiment(&config)?;
            let dir = dir.unwrap_or_else(|| PathBuf::from("out"));
            let files = bundle.write_to(&dir)?;
            println!("wrote {} files to {}", files.len(), dir.display());
            println!("N(T) = {}, jumps = {}", bundle.trace.last(), bundle.trace.jumps.len());
            if !bundle.verification.pass {
                eprintln!("verification failed: {:?}", bundle.verification);
                return Ok(ExitCode::from(4));
            }
        }
        Command::Periodic { kind, level, waveform, amplitude } => {
            let dt = cli.dt.unwrap_or(model.sigma() / 400.0);
            let (profile, extra) = periodic(&model, *kind, *level, *waveform, *amplitude, dt)?;
            emit(dir.as_deref(), "periodic.csv", &profile.to_csv(&model))?;
            emit(dir.as_deref(), "periodic.json", &pretty(&profile.sidecar(&model, extra)))?;
        }
        Command::Reconstruct => {
            let history = match config.initial_data(&model)? {
                InitialData::History(h) => h,
                InitialData::Density(_) => {
                    return Err(Error::config("initial.history", "reconstruct needs an activity history"))
                }
            };
            let grid = config.grid(&model)?;
            let field = initial_from_activity(&model, &history, &grid)?;
            let every = config.output.snapshot_every.max(1);
            let horizon = (config.run.horizon - model.sigma()).max(0.0);
            let policy = BranchPolicy { mode: config.run.policy, seed: BranchSeed::Value(*history.last().unwrap()) };
            let run = run_pde_from_field(&model, field.clone(), horizon, &policy, PdeOptions { snapshot_every: every, decay: config.run.decay })?;
            let report = verify_solution(&run.snapshots, &run.trace, &model, 10.0 * config.run.dt)?;
            emit(dir.as_deref(), "density.csv", &field.to_csv())?;
            emit(dir.as_deref(), "verification.json", &pretty(&report))?;
            if !report.pass {
                return Ok(ExitCode::from(4));
            }
        }
        Command::Compare => emit(dir.as_deref(), "comparison.json", &pretty(&compare_routes(&config)?))?,
        Command::Preset { .. } => unreachable!(),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
