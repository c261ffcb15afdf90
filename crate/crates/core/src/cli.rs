//! Command-line front end. Every subcommand builds an [`ExperimentConfig`]
//! and hands it to [`run_pipeline`]; `--config` loads the same structure
//! from JSON instead.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::fock_basis::{ResourceProfile, TruncationScheme};
use crate::gmon::{FitParameter, GridSpec};
use crate::pipeline::{
    run_pipeline, CalConfig, DiagnoseConfig, DimsConfig, ExperimentConfig, GmonConfig, OracleCheckConfig,
    OutputFormat, ParamSource, ResourcesConfig, RunConfig, SampleConfig, SweepConfig,
};

#[derive(Debug, Parser)]
#[command(name = "gmon-lab", version, about = "Driven Bose-Hubbard chains, chaos diagnostics and gmon calibration")]
pub struct Cli {
    /// Experiment config (JSON); its `mode` must match the subcommand if one is given.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for stochastic modes; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for instance ensembles.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Directory for artifact files.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact and estimated basis dimensions.
    Dims {
        /// Chain lengths, `a..b` (inclusive) or a single value.
        #[arg(long, default_value = "3..9", value_parser = parse_usize_range)]
        n: (usize, usize),
        #[arg(long)]
        n_exc: Option<usize>,
        /// Truncation scheme (`m1`, `m2`, `[1,0]`, ...), repeatable; Table 1 columns by default.
        #[arg(long, value_parser = parse_scheme)]
        scheme: Vec<TruncationScheme>,
    },
    /// Memory and communication estimate for a distributed run.
    Resources {
        #[arg(long, default_value_t = 42)]
        n: usize,
        #[arg(long)]
        n_exc: Option<usize>,
        #[arg(long, default_value = "m1", value_parser = parse_scheme)]
        scheme: TruncationScheme,
        /// Hardware profile JSON.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Evolve one instance file.
    Run {
        instance: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Emit only the most probable states.
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Evolve, then sample bitstrings through the readout error model.
    Sample {
        instance: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[arg(long, default_value_t = 0.0)]
        readout_error: f64,
        #[arg(long, default_value_t = 0.0)]
        loss_per_cycle: f64,
    },
    /// Disorder scan of two-body correlations over random instances.
    Sweep {
        #[arg(long, default_value_t = 9)]
        n: usize,
        #[arg(long)]
        n_exc: Option<usize>,
        #[arg(long, default_value = "m2", value_parser = parse_scheme)]
        scheme: TruncationScheme,
        /// Detuning half-widths: `a..bMHz` (with `--points`) or a list `5,30`.
        #[arg(long, default_value = "5,30")]
        disorder: String,
        #[arg(long, default_value_t = 7)]
        points: usize,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 5)]
        cycles: usize,
        #[arg(long, default_value_t = 20.0)]
        steps_per_ns: f64,
    },
    /// Porter-Thomas, cross-entropy, entanglement and correlation reports.
    Diagnose {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 2)]
        t0_cycle: usize,
    },
    /// Compare the simulator with the free-fermion and path-sum oracles.
    OracleCheck {
        #[arg(long, value_delimiter = ',', default_value = "6,8")]
        fermion_sites: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        instances: usize,
        #[arg(long, default_value_t = 3)]
        cycles: usize,
        #[arg(long, default_value_t = 4000)]
        rk4_steps: usize,
        #[arg(long, default_value_t = 4)]
        path_sum_steps: usize,
    },
    /// Gmon circuit model.
    #[command(subcommand)]
    Gmon(GmonCommand),
    /// Control-line calibration.
    #[command(subcommand)]
    Cal(CalCommand),
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// RK4 steps; estimated when absent.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    step_tolerance: f64,
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    /// Circuit parameter JSON.
    #[arg(long, conflicts_with = "device")]
    params: Option<PathBuf>,
    /// Row of the built-in device table (1..=9).
    #[arg(long)]
    device: Option<usize>,
}

impl ParamArgs {
    fn source(&self) -> ParamSource {
        match (&self.params, self.device) {
            (Some(p), _) => ParamSource::File(p.clone()),
            (None, d) => ParamSource::Device(d.unwrap_or(1)),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum GmonCommand {
    /// Transition frequencies over a flux grid.
    Spectrum {
        #[command(flatten)]
        params: ParamArgs,
        /// Qubit fluxes in flux quanta.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        flux_q: Vec<f64>,
        /// Coupler fluxes in flux quanta.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        flux_c: Vec<f64>,
        #[arg(long, default_value_t = crate::gmon::DEFAULT_LEVELS)]
        levels: usize,
    },
    /// Fit circuit parameters to measured transitions.
    Fit {
        /// Samples as JSON or CSV `flux_q,flux_c,f10,f21` (Hz).
        #[arg(long)]
        samples: PathBuf,
        #[command(flatten)]
        guess: ParamArgs,
        #[arg(long, value_delimiter = ',', value_parser = parse_fit_parameter)]
        free: Vec<FitParameter>,
    },
    /// Refit the perturbative expansion on a grid of exact spectra.
    FitPoly {
        /// Grid points per axis.
        #[arg(long, default_value_t = 100)]
        grid: usize,
        #[arg(long, default_value_t = crate::gmon::DEFAULT_LEVELS)]
        levels: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum CalCommand {
    /// Fit distortion terms to a measured phase response.
    TfFit {
        #[arg(long)]
        phase: PathBuf,
        #[arg(long)]
        pulse: PathBuf,
        /// Detuning polynomial coefficients in Hz per flux power, from x^1.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        curve_hz: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        terms: usize,
    },
    /// Invert (or with `--forward`, apply) a transfer function.
    Predistort {
        #[arg(long)]
        tf: PathBuf,
        #[arg(long)]
        waveform: PathBuf,
        #[arg(long)]
        forward: bool,
    },
    /// Solve for control currents under crosstalk.
    Xtalk {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        desired: PathBuf,
    },
    /// Locate the dip of a timing scan.
    Timing {
        #[arg(long)]
        curve: PathBuf,
    },
}

fn parse_scheme(s: &str) -> std::result::Result<TruncationScheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_fit_parameter(s: &str) -> std::result::Result<FitParameter, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown parameter {s:?}"))
}

/// `a..b` (inclusive) or `a`.
pub fn parse_usize_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad range {s:?}"));
    match s.split_once("..") {
        Some((a, b)) => Ok((num(a)?, num(b.trim_start_matches('='))?)),
        None => num(s).map(|n| (n, n)),
    }
}

/// Disorder values in MHz from `a..b[MHz]` with `points` samples, or a
/// comma-separated list.
pub fn parse_disorder(s: &str, points: usize) -> std::result::Result<Vec<f64>, String> {
    let t = s.trim();
    let t = t.strip_suffix("MHz").or_else(|| t.strip_suffix("mhz")).unwrap_or(t);
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("bad disorder spec {s:?}"));
    match t.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b)?);
            if points < 2 {
                return Err("a disorder range needs --points >= 2".into());
            }
            Ok((0..points).map(|k| a + (b - a) * k as f64 / (points - 1) as f64).collect())
        }
        None => t.split(',').map(num).collect(),
    }
}

fn config_from_command(cmd: Command) -> Result<ExperimentConfig> {
    let bad = |e: String| Error::InvalidArgument(e);
    Ok(match cmd {
        Command::Dims { n, n_exc, scheme } => {
            let mut c = DimsConfig { n_min: n.0, n_max: n.1, n_exc, ..DimsConfig::default() };
            if !scheme.is_empty() {
                c.schemes = scheme;
            }
            ExperimentConfig::Dims(c)
        }
        Command::Resources { n, n_exc, scheme, profile } => {
            let profile: ResourceProfile = match profile {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => ResourceProfile::default(),
            };
            ExperimentConfig::Resources(ResourcesConfig { n_sites: n, n_exc, scheme, profile })
        }
        Command::Run { instance, sim, top_k } => ExperimentConfig::Run(RunConfig {
            instance: serde_json::from_str(&std::fs::read_to_string(instance)?)?,
            steps: sim.steps,
            step_tolerance: sim.step_tolerance,
            top_k,
        }),
        Command::Sample { instance, sim, samples, readout_error, loss_per_cycle } => {
            ExperimentConfig::Sample(SampleConfig {
                instance: serde_json::from_str(&std::fs::read_to_string(instance)?)?,
                steps: sim.steps,
                step_tolerance: sim.step_tolerance,
                samples,
                readout_error,
                loss_per_cycle,
                seed: None,
            })
        }
        Command::Sweep { n, n_exc, scheme, disorder, points, instances, cycles, steps_per_ns } => {
            ExperimentConfig::Sweep(SweepConfig {
                n_sites: n,
                n_exc,
                scheme,
                cycles,
                instances,
                disorder_mhz: parse_disorder(&disorder, points).map_err(bad)?,
                steps_per_ns,
                seed: None,
            })
        }
        Command::Diagnose { inputs, t0_cycle } => {
            ExperimentConfig::Diagnose(DiagnoseConfig { inputs, t0_cycle, histogram: Default::default() })
        }
        Command::OracleCheck { fermion_sites, instances, cycles, rk4_steps, path_sum_steps } => {
            ExperimentConfig::OracleCheck(OracleCheckConfig {
                fermion_sites,
                instances,
                cycles,
                rk4_steps,
                path_sum_steps,
                ..OracleCheckConfig::default()
            })
        }
        Command::Gmon(g) => ExperimentConfig::Gmon(match g {
            GmonCommand::Spectrum { params, flux_q, flux_c, levels } => {
                GmonConfig::Spectrum { params: params.source(), flux_q, flux_c, levels }
            }
            GmonCommand::Fit { samples, guess, free } => GmonConfig::Fit {
                samples,
                guess: guess.source(),
                free: if free.is_empty() { FitParameter::DEFAULT_SET.to_vec() } else { free },
            },
            GmonCommand::FitPoly { grid, levels } => {
                GmonConfig::FitPoly { grid: GridSpec { n_beta: grid, n_lambda: grid, levels, ..GridSpec::default() } }
            }
        }),
        Command::Cal(c) => ExperimentConfig::Cal(match c {
            CalCommand::TfFit { phase, pulse, curve_hz, terms } => {
                CalConfig::TfFit { phase, pulse, curve_hz, n_terms: terms }
            }
            CalCommand::Predistort { tf, waveform, forward } => CalConfig::Predistort { tf, waveform, forward },
            CalCommand::Xtalk { matrix, desired } => CalConfig::Xtalk { matrix, desired },
            CalCommand::Timing { curve } => CalConfig::Timing { curve },
        }),
    })
}

fn command_mode(cmd: &Command) -> &'static str {
    match cmd {
        Command::Dims { .. } => "dims",
        Command::Resources { .. } => "resources",
        Command::Run { .. } => "run",
        Command::Sample { .. } => "sample",
        Command::Sweep { .. } => "sweep",
        Command::Diagnose { .. } => "diagnose",
        Command::OracleCheck { .. } => "oracle-check",
        Command::Gmon(_) => "gmon",
        Command::Cal(_) => "cal",
    }
}

/// Resolves the config from flags and `--config`, then executes it.
pub fn execute(cli: Cli) -> Result<String> {
    let mut config = match (&cli.config, cli.command) {
        (Some(path), cmd) => {
            let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            if let Some(cmd) = cmd {
                if command_mode(&cmd) != cfg.mode() {
                    return Err(Error::InvalidArgument(format!(
                        "config mode {} does not match subcommand {}",
                        cfg.mode(),
                        command_mode(&cmd)
                    )));
                }
            }
            cfg
        }
        (None, Some(cmd)) => config_from_command(cmd)?,
        (None, None) => return Err(Error::InvalidArgument("a subcommand or --config is required".into())),
    };
    if let (Some(seed), Some(slot)) = (cli.seed, config.seed_mut()) {
        *slot = Some(seed);
    }
    let format = cli.format.into();
    let report = match cli.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(|| run_pipeline(&config, &cli.out, format))?,
        None => run_pipeline(&config, &cli.out, format)?,
    };
    Ok(report.stdout)
}

/// Parses `args`, runs, prints, and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_parse() {
        assert_eq!(parse_usize_range("3..9").unwrap(), (3, 9));
        assert_eq!(parse_usize_range("3..=9").unwrap(), (3, 9));
        assert_eq!(parse_usize_range("7").unwrap(), (7, 7));
        assert!(parse_usize_range("a..9").is_err());
    }

    #[test]
    fn disorder_specs_parse() {
        assert_eq!(parse_disorder("0..30MHz", 4).unwrap(), vec![0.0, 10.0, 20.0, 30.0]);
        assert_eq!(parse_disorder("5,30", 7).unwrap(), vec![5.0, 30.0]);
        assert!(parse_disorder("0..30", 1).is_err());
    }

    #[test]
    fn fit_parameters_parse() {
        assert_eq!(parse_fit_parameter("coupler-beta").unwrap(), FitParameter::CouplerBeta);
        assert!(parse_fit_parameter("nonsense").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
