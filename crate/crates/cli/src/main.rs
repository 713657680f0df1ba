use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lgcp_cli::commands::{cmd_basis, cmd_evaluate, cmd_fit, cmd_simulate, cmd_summarize};
use lgcp_cli::{CliError, Estimator, EvaluateRequest, Protocol, SummaryRequest};
use lgcp_core::data::Outcome;
use lgcp_core::summaries::MapKind;

#[derive(Parser)]
#[command(name = "lgcp", version, about = "Hierarchical log-Gaussian Cox process models for shot charts")]
struct Cli {
    /// Worker threads for chains and evaluation repetitions.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic dataset and its ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the sampler on a shot CSV.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Samples CSV; metadata goes next to it with a `.json` extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn posterior samples into a surface map.
    Summarize(SummarizeArgs),
    /// Score an estimator with the RMSE or NPLL protocol.
    Evaluate(EvaluateArgs),
    /// Print the basis implied by a config.
    Basis {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    samples: PathBuf,
    /// Basis JSON overriding the one recorded with the samples.
    #[arg(long)]
    basis: Option<PathBuf>,
    /// intensity, sqrt-intensity, density or relrisk.
    #[arg(long)]
    kind: String,
    /// Covariate vector, comma separated (empty for the baseline encoding).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    z: Vec<f64>,
    /// Reference covariates of a relative-risk map.
    #[arg(long = "z-b", value_delimiter = ',', allow_hyphen_values = true)]
    z_b: Option<Vec<f64>>,
    /// made or missed.
    #[arg(long, default_value = "made")]
    outcome: String,
    /// Credible level of the relative-risk flags.
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    /// Output resolution as NXxNY; defaults to the fit's grid.
    #[arg(long)]
    resolution: Option<String>,
    /// Output prefix; writes PREFIX.csv, PREFIX.json and for relrisk PREFIX.contour.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// rmse or npll.
    #[arg(long)]
    protocol: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Truth JSON; required by rmse.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Score a fit written by `lgcp fit` instead of refitting.
    #[arg(long, conflicts_with_all = ["grid", "plug_in"])]
    samples: Option<PathBuf>,
    /// Score an external grid-exchange CSV.
    #[arg(long, conflicts_with = "plug_in")]
    grid: Option<PathBuf>,
    /// Score the coefficients of a truth JSON.
    #[arg(long = "plug-in")]
    plug_in: Option<PathBuf>,
    /// Also score the constant empirical-rate intensity.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_outcome(s: &str) -> Result<Outcome, CliError> {
    match s {
        "made" | "1" => Ok(Outcome::Made),
        "missed" | "0" => Ok(Outcome::Missed),
        other => Err(CliError::usage(format!("unknown outcome '{other}'"))),
    }
}

fn parse_resolution(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::usage(format!("resolution '{s}' is not NXxNY"));
    let (a, b) = s.split_once('x').ok_or_else(bad)?;
    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config } => {
            let r = cmd_simulate(&config)?;
            println!(
                "simulated {} games: {} missed, {} made -> {}, {}",
                r.games,
                r.shots[0],
                r.shots[1],
                r.data_path.display(),
                r.truth_path.display()
            );
        }
        Command::Fit { data, config, out } => {
            let r = cmd_fit(&data, &config, &out, cli.threads)?;
            for rej in &r.rejected {
                eprintln!("skipped line {}: {}", rej.line, rej.reason);
            }
            println!("fitted {} games, {} shots", r.games, r.shots);
            for c in &r.chains {
                println!(
                    "chain {}: {} draws, acceptance theta0 {:.3} beta0 {:.3} beta1 {:.3}",
                    c.chain, c.draws, c.acceptance[0], c.acceptance[1], c.acceptance[2]
                );
            }
            println!("wrote {} and {}", r.samples_path.display(), r.metadata_path.display());
        }
        Command::Summarize(a) => {
            let request = SummaryRequest {
                kind: MapKind::parse(&a.kind)?,
                z: a.z,
                z_b: a.z_b,
                outcome: parse_outcome(&a.outcome)?,
                level: a.level,
                resolution: a.resolution.as_deref().map(parse_resolution).transpose()?,
            };
            let r = cmd_summarize(&a.samples, a.basis.as_deref(), &request, &a.out)?;
            println!("wrote {} and {}", r.csv_path.display(), r.json_path.display());
            if let Some(c) = r.contour_path {
                println!("wrote {}", c.display());
            }
        }
        Command::Evaluate(a) => {
            let estimator = match (a.samples, a.grid, a.plug_in) {
                (Some(p), _, _) => Some(Estimator::Samples(p)),
                (_, Some(p), _) => Some(Estimator::Grid(p)),
                (_, _, Some(p)) => Some(Estimator::Truth(p)),
                _ => None,
            };
            let req = EvaluateRequest {
                protocol: Protocol::parse(&a.protocol)?,
                config: a.config,
                data: a.data,
                truth: a.truth,
                estimator,
                baseline: a.baseline,
                out: a.out,
                threads: cli.threads,
                repetitions: a.repetitions,
                p: a.p,
                seed: a.seed,
            };
            let r = cmd_evaluate(&req)?;
            let name = if req.protocol == Protocol::Rmse { "rmse" } else { "npll" };
            for (method, mean, sd) in &r.aggregates {
                let n = r.rows.iter().filter(|row| &row.method == method).count();
                println!("{method}: {name} {mean:.6} ± {sd:.6} over {n} rows");
            }
        }
        Command::Basis { config, out } => {
            let doc = cmd_basis(&config)?;
            let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::data(e.to_string()))?;
            match out {
                Some(p) => std::fs::write(&p, text + "\n")
                    .map_err(|e| CliError::data(format!("cannot write {}: {e}", p.display())))?,
                None => {
                    // a closed pipe (e.g. `| head`) is not an error
                    let _ = writeln!(std::io::stdout(), "{text}");
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lgcp: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
