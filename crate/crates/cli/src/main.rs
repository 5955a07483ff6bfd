use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rakeuq::efficiency::{correlation_sweep, taylor_variance, StationState};
use rakeuq::io::{
    prediction_grid, rake_mc_rows, run_fit, scan_rows, write_csv, CampaignFile, FitOptions, DEFAULT_N_R,
    DEFAULT_N_THETA,
};
use rakeuq::legacy::{fig1_demo, HarmonicField, UncertaintyBudget};
use rakeuq::montecarlo::{
    frequency_scan, isotropic_angle_covariance, mc_efficiency, rake_position_mc, SamplerConfig,
    DEFAULT_EFFICIENCY_SAMPLES, DEFAULT_PROPAGATION_SAMPLES, DEFAULT_RAKE_DRAWS,
};
use rakeuq::{Error, FieldDistribution, FitSettings};

#[derive(Parser, Debug)]
#[command(name = "rakeuq", version, about = "Uncertainty quantification for rake-sampled annular fields")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Seed for every Monte Carlo draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo sample count (command-specific default).
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Ridge parameters tried in order when the plain fit is rejected.
    #[arg(long, global = true, value_delimiter = ',')]
    lambda_ladder: Option<Vec<f64>>,
    /// Upper bound on the spectral norm of the coefficient matrix.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Harmonic frequencies, e.g. `1,4` (overrides the campaign file).
    #[arg(long, global = true, value_delimiter = ',')]
    omega: Option<Vec<u32>>,
    /// Output file; standard output when omitted.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a campaign and write the JSON uncertainty report.
    Fit {
        campaign: PathBuf,
        /// Also write the coefficient matrix as CSV.
        #[arg(long)]
        coefficients: Option<PathBuf>,
    },
    /// Predictive mean and variance on a polar grid (CSV).
    Grid {
        campaign: PathBuf,
        #[arg(long, default_value_t = DEFAULT_N_THETA)]
        n_theta: usize,
        #[arg(long, default_value_t = DEFAULT_N_R)]
        n_r: usize,
    },
    /// Rank all harmonic pairs up to 10 by expected residual error (CSV).
    Scan { campaign: PathBuf },
    /// Propagate rake-angle uncertainty by Monte Carlo (CSV).
    RakeMc {
        campaign: PathBuf,
        /// Standard deviation of every rake angle, degrees.
        #[arg(long)]
        sigma_theta: f64,
        /// Circumferential prediction points.
        #[arg(long, default_value_t = 360)]
        grid_points: usize,
    },
    /// Efficiency uncertainty for a station state (JSON, or CSV with --sweep).
    Efficiency {
        /// Station state JSON; the built-in synthetic state when omitted.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Emit σ(η) against the pair correlation instead of the report.
        #[arg(long)]
        sweep: bool,
        #[arg(long, default_value_t = 11)]
        rho_steps: usize,
        #[arg(long, default_value_t = 0.999)]
        rho_max: f64,
        /// Add a Monte Carlo estimate to the report.
        #[arg(long)]
        mc: bool,
    },
    /// Root-sum-square total of an uncertainty budget (JSON).
    Legacy { budget: PathBuf },
    /// Legacy metric against model residual for a single-harmonic field (CSV).
    Fig1Demo {
        #[arg(long, default_value_t = 500.0)]
        mean: f64,
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        #[arg(long, default_value_t = 2)]
        frequency: u32,
        /// Field phase, degrees.
        #[arg(long, default_value_t = 0.0)]
        phase: f64,
        #[arg(long, value_delimiter = ',', default_value = "3,8,300")]
        rakes: Vec<usize>,
        /// Angle of the first rake, degrees.
        #[arg(long, default_value_t = 0.0)]
        offset: f64,
    },
}

#[derive(Debug)]
enum CliError {
    Lib(Error),
    Io(io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(Error::Schema(_)) | CliError::Lib(Error::Io(_)) | CliError::Io(_) => 2,
            CliError::Lib(Error::RegularizationExhausted { .. }) => 4,
            CliError::Lib(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn configure_threads() {
    let Ok(raw) = std::env::var("RAKEUQ_THREADS") else { return };
    match raw.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring RAKEUQ_THREADS={raw:?}; expected a positive integer"),
    }
}

fn settings(common: &Common) -> FitSettings<f64> {
    let mut s = FitSettings::default();
    if let Some(b) = common.beta {
        s.beta = b;
    }
    if let Some(l) = &common.lambda_ladder {
        s.lambda_ladder = l.clone();
    }
    s
}

fn sampler(common: &Common, default_samples: usize) -> SamplerConfig {
    SamplerConfig::new(common.seed, common.samples.unwrap_or(default_samples))
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<S: Serialize>(path: Option<&Path>, value: &S) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    let mut w = open_output(path)?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

fn emit_csv<S: Serialize>(path: Option<&Path>, rows: &[S]) -> CliResult<()> {
    let mut w = open_output(path)?;
    write_csv(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CoefficientRow {
    coefficient: String,
    station: usize,
    value: f64,
}

#[derive(Serialize)]
struct EfficiencyOutput {
    state: StationState<f64>,
    report: rakeuq::EfficiencyReport<f64>,
    eta_two_sigma: f64,
    ranking: Vec<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<rakeuq::montecarlo::ScalarStats<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

fn coefficient_names(omega: &[u32]) -> Vec<String> {
    let mut names = vec!["a0".to_string()];
    for w in omega {
        names.push(format!("cos{w}"));
        names.push(format!("sin{w}"));
    }
    names
}

fn run(cli: Cli) -> CliResult<()> {
    let common = &cli.common;
    let out = common.output.as_deref();
    match &cli.command {
        Command::Fit { campaign, coefficients } => {
            let c = CampaignFile::load(campaign)?;
            let opts = FitOptions {
                omega: common.omega.clone(),
                settings: settings(common),
                sampler: sampler(common, DEFAULT_PROPAGATION_SAMPLES),
            };
            let outcome = run_fit(&c, &opts)?;
            if let Some(path) = coefficients {
                let names = coefficient_names(outcome.model.harmonics().omega());
                let x = &outcome.fit.x;
                let rows: Vec<CoefficientRow> = (0..x.ncols())
                    .flat_map(|m| {
                        names.iter().enumerate().map(move |(i, n)| CoefficientRow {
                            coefficient: n.clone(),
                            station: m,
                            value: x[(i, m)],
                        })
                    })
                    .collect();
                emit_csv(Some(path), &rows)?;
            }
            let text = outcome.report.to_json()?;
            let mut w = open_output(out)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        Command::Grid { campaign, n_theta, n_r } => {
            let c = CampaignFile::load(campaign)?;
            let model = c.build_model(common.omega.as_deref(), settings(common))?;
            let field = FieldDistribution::from_fit(&model, &c.distribution()?)?;
            emit_csv(out, &prediction_grid(&model, &field, *n_r, *n_theta)?)?;
        }
        Command::Scan { campaign } => {
            let c = CampaignFile::load(campaign)?;
            let scan = frequency_scan(&c.geometry()?, &c.distribution()?, c.radial, &settings(common))?;
            emit_csv(out, &scan_rows(&scan))?;
        }
        Command::RakeMc { campaign, sigma_theta, grid_points } => {
            let c = CampaignFile::load(campaign)?;
            let model = c.build_model(common.omega.as_deref(), settings(common))?;
            let n = model.geometry().n_rakes();
            let result = rake_position_mc(
                &model,
                &c.measurement_matrix(),
                model.geometry().theta_deg(),
                &isotropic_angle_covariance(n, *sigma_theta),
                *grid_points,
                &sampler(common, DEFAULT_RAKE_DRAWS),
            )?;
            emit_csv(out, &rake_mc_rows(&result, model.geometry().r_stations()))?;
        }
        Command::Efficiency { state, sweep, rho_steps, rho_max, mc } => {
            let state = match state {
                Some(p) => {
                    let text = std::fs::read_to_string(p)
                        .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", p.display())))?
                }
                None => StationState::synthetic(),
            };
            if *sweep {
                if *rho_steps < 2 {
                    return Err(Error::InvalidParams("--rho-steps must be at least 2".into()).into());
                }
                let rhos: Vec<f64> = (0..*rho_steps)
                    .map(|i| rho_max * i as f64 / (*rho_steps - 1) as f64)
                    .collect();
                emit_csv(out, &correlation_sweep(&state, &rhos)?)?;
            } else {
                let report = taylor_variance(&state)?;
                let cfg = sampler(common, DEFAULT_EFFICIENCY_SAMPLES);
                let monte_carlo = if *mc { Some(mc_efficiency(&state, &cfg)?) } else { None };
                let output = EfficiencyOutput {
                    eta_two_sigma: 2.0 * report.eta_sigma(),
                    ranking: report.ranking(),
                    samples: mc.then_some(cfg.n_samples),
                    seed: mc.then_some(cfg.seed),
                    state,
                    report,
                    monte_carlo,
                };
                emit_json(out, &output)?;
            }
        }
        Command::Legacy { budget } => {
            let text = std::fs::read_to_string(budget)
                .map_err(|e| Error::Io(format!("{}: {e}", budget.display())))?;
            let b: UncertaintyBudget =
                serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", budget.display())))?;
            emit_json(out, &b.with_total()?)?;
        }
        Command::Fig1Demo { mean, amplitude, frequency, phase, rakes, offset } => {
            let field = HarmonicField {
                mean: *mean,
                amplitude: *amplitude,
                frequency: *frequency,
                phase_deg: *phase,
            };
            emit_csv(out, &fig1_demo(&field, rakes, *offset)?)?;
        }
    }
    Ok(())
}
