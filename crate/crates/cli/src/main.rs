use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use logbsde::estimates::Verdict;
use logbsde_cli::output::overall;
use logbsde_cli::scenarios::{self, SCENARIOS};
use logbsde_cli::{exit_code, output_root, parse_config, run_many, CliError, ExperimentConfig, ResultRecord};

#[derive(Parser)]
#[command(name = "logbsde", version, about = "BSDEs with logarithmic drivers and their PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; falls back to $LOGBSDE_OUT, then the config, then ./out.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WithConfig {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in scenarios.
    List,
    /// Print a scenario's default config as TOML.
    Config { id: String },
    /// Run scenarios by id, or `all`.
    Run {
        #[arg(required = true)]
        ids: Vec<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: Common,
    },
    SimulateForward(WithConfig),
    CheckAssumptions(WithConfig),
    MollifyDemo(WithConfig),
    SolveBsde(WithConfig),
    AprioriCheck(WithConfig),
    StabilitySweep(WithConfig),
    PdeCompare(WithConfig),
}

fn load(path: &PathBuf, expected: &str) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg = parse_config(&text)?;
    if cfg.pipeline.name() != expected {
        return Err(CliError::config(
            "pipeline.kind",
            format!("this subcommand runs `{expected}`, the config describes `{}`", cfg.pipeline.name()),
        ));
    }
    Ok(cfg)
}

fn report(records: &[Result<ResultRecord, CliError>]) -> Result<Verdict, CliError> {
    let mut verdicts = Vec::new();
    let mut errors = 0;
    for r in records {
        match r {
            Ok(rec) => {
                let dir = rec.artifacts[0].parent().map_or(String::new(), |p| p.display().to_string());
                println!("{:<24} {:<13} {:>8.2}s  {dir}", rec.scenario, rec.overall.as_str(), rec.wall_time_s);
                for w in &rec.warnings {
                    println!("    warning: {w}");
                }
                verdicts.push(rec.overall);
            }
            Err(e) => {
                eprintln!("error: {e}");
                errors += 1;
            }
        }
    }
    if errors > 0 {
        return Err(CliError::Aborted(errors));
    }
    Ok(overall(&verdicts))
}

fn run(cli: Cli) -> Result<Verdict, CliError> {
    let (configs, common, jobs) = match cli.command {
        Command::List => {
            for s in SCENARIOS {
                println!("{:<24} {}", s.id, s.summary);
            }
            return Ok(Verdict::Pass);
        }
        Command::Config { id } => {
            let s = scenarios::find(&id).ok_or(CliError::UnknownScenario(id))?;
            print!("{}", s.config().to_toml()?);
            return Ok(Verdict::Pass);
        }
        Command::Run { ids, jobs, common } => {
            let configs = if ids.iter().any(|i| i == "all") {
                SCENARIOS.iter().map(|s| s.config()).collect()
            } else {
                ids.iter()
                    .map(|id| scenarios::find(id).map(|s| s.config()).ok_or_else(|| CliError::UnknownScenario(id.clone())))
                    .collect::<Result<Vec<_>, _>>()?
            };
            (configs, common, jobs)
        }
        Command::SimulateForward(w) => (vec![load(&w.config, "simulate-forward")?], w.common, 1),
        Command::CheckAssumptions(w) => (vec![load(&w.config, "check-assumptions")?], w.common, 1),
        Command::MollifyDemo(w) => (vec![load(&w.config, "mollify-demo")?], w.common, 1),
        Command::SolveBsde(w) => (vec![load(&w.config, "solve-bsde")?], w.common, 1),
        Command::AprioriCheck(w) => (vec![load(&w.config, "apriori-check")?], w.common, 1),
        Command::StabilitySweep(w) => (vec![load(&w.config, "stability-sweep")?], w.common, 1),
        Command::PdeCompare(w) => (vec![load(&w.config, "pde-compare")?], w.common, 1),
    };
    let mut configs = configs;
    if let Some(seed) = common.seed {
        for c in &mut configs {
            c.seed = seed;
            c.validate()?;
        }
    }
    let root = output_root(common.out.as_deref(), configs.first());
    report(&run_many(&configs, &root, jobs))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(v) => ExitCode::from(exit_code(v) as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
