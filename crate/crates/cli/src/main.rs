use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rescov::scenario::{
    experiment_added_robots, experiment_coverage_vs_l, experiment_robots_vs_l, generate_pool,
    run_scenario, ExperimentTable, ScenarioConfig,
};
use rescov::selection::{build_initial_ilp, InitialSelectionParams};
use rescov::{
    distributed_clique_cover, solve_min_cardinality, CliqueCoverOptions, CommGraph, Point, RobotId,
    RobotSpec, SelectionError, SolverOptions,
};

#[derive(Parser)]
#[command(
    name = "rescov",
    version,
    about = "Resilient multi-robot blanket coverage"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Robot pool utilities.
    Pool {
        #[command(subcommand)]
        action: PoolAction,
    },
    /// Minimum-cardinality team selection over a pool file.
    Select(SelectArgs),
    /// Run a scripted mission and write its event log.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Start the HTTP session service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Batch studies over random failures, written as CSV.
    Experiment(ExperimentArgs),
    /// Distributed clique cover of a communication graph.
    CliqueCover {
        /// CSV with columns `x,y` and an optional `id`.
        #[arg(long)]
        positions: PathBuf,
        #[arg(long)]
        range: f64,
        #[arg(long, default_value_t = 20)]
        max_degree: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PoolAction {
    Gen {
        #[arg(long, default_value_t = 50)]
        size: usize,
        #[arg(long, default_value_t = 420.0)]
        lifespan_mean: f64,
        #[arg(long, default_value_t = 0.1)]
        lifespan_std_frac: f64,
        #[arg(long, default_value_t = 50.0)]
        max_cost: f64,
        #[arg(long, default_value_t = 200.0)]
        max_area: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct SelectArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, default_value_t = 500.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 900.0)]
    area_q: f64,
    #[arg(long, default_value_t = 500.0)]
    horizon: f64,
    #[arg(long, default_value_t = 5.0)]
    time_budget: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    #[value(name = "coverage-vs-L")]
    CoverageVsL,
    #[value(name = "robots-vs-L")]
    RobotsVsL,
    #[value(name = "added-robots")]
    AddedRobots,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    study: Study,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "Ls", value_delimiter = ',', default_value = "10,15,20")]
    ls: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Added-robot counts for `added-robots`.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40")]
    counts: Vec<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct SelectOutput<'a> {
    ids: &'a [RobotId],
    cardinality: usize,
    certified: bool,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    notes: &'a [String],
}

#[derive(Serialize)]
struct Diagnostic {
    error: &'static str,
    message: String,
    constraints: Vec<String>,
}

#[derive(Deserialize)]
struct PositionRow {
    id: Option<u32>,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct CoverOutput {
    range: f64,
    blocks: Vec<Vec<RobotId>>,
    messages: rescov::clique::MessageCounts,
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut config: ScenarioConfig = match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(w.flush()?)
}

fn select(args: &SelectArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.pool)
        .with_context(|| format!("reading {}", args.pool.display()))?;
    let pool: Vec<RobotSpec> = serde_json::from_str(&text).context("parsing pool")?;
    let params = InitialSelectionParams {
        budget: args.beta,
        alpha: args.alpha,
        redundancy: args.delta,
        domain_area: args.area_q,
        horizon: args.horizon,
    };
    let problem = build_initial_ilp(&pool, &params)?;
    let options = SolverOptions {
        time_budget: std::time::Duration::from_secs_f64(args.time_budget),
    };
    match solve_min_cardinality(&problem, &options) {
        Ok(sel) => {
            let out = SelectOutput {
                ids: &sel.ids,
                cardinality: sel.cardinality(),
                certified: sel.certified,
                notes: &problem.notes,
            };
            match &args.out {
                Some(p) => write_json(p, &out)?,
                None => println!("{}", serde_json::to_string_pretty(&out)?),
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ (SelectionError::Infeasible | SelectionError::Timeout)) => {
            let diag = Diagnostic {
                error: if matches!(e, SelectionError::Infeasible) {
                    "Infeasible"
                } else {
                    "Timeout"
                },
                message: e.to_string(),
                constraints: problem
                    .constraints
                    .iter()
                    .map(|c| {
                        format!(
                            "{} {} {}",
                            c.name,
                            serde_json::to_value(c.sense)
                                .unwrap()
                                .as_str()
                                .unwrap_or("?"),
                            c.rhs
                        )
                    })
                    .collect(),
            };
            eprintln!("{}", serde_json::to_string(&diag)?);
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn experiment(args: &ExperimentArgs) -> Result<()> {
    let config = load_config(args.config.as_deref(), args.seed)?;
    let run = || -> Result<ExperimentTable> {
        Ok(match args.study {
            Study::CoverageVsL => experiment_coverage_vs_l(&config, &args.ls, args.trials)?,
            Study::RobotsVsL => experiment_robots_vs_l(&config, &args.ls, args.trials)?,
            Study::AddedRobots => {
                experiment_added_robots(&config, &args.ls, &args.counts, args.trials)?
            }
        })
    };
    let table = match args.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(run)?,
        None => run()?,
    };
    let mut w = create(&args.out)?;
    table.write_csv(&mut w)?;
    Ok(w.flush()?)
}

fn clique_cover(positions: &Path, range: f64, max_degree: usize, out: &Path) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(positions)?;
    let rows: Vec<PositionRow> = reader.deserialize().collect::<Result<_, _>>()?;
    let ids: Vec<RobotId> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| RobotId(r.id.unwrap_or(i as u32 + 1)))
        .collect();
    let points = rows.iter().map(|r| Point::new(r.x, r.y)).collect();
    let graph = CommGraph::new(ids, points, range)?;
    let report = distributed_clique_cover(&graph, &CliqueCoverOptions { max_degree })?;
    write_json(
        out,
        &CoverOutput {
            range,
            blocks: report.cover,
            messages: report.messages,
        },
    )
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Pool {
            action:
                PoolAction::Gen {
                    size,
                    lifespan_mean,
                    lifespan_std_frac,
                    max_cost,
                    max_area,
                    seed,
                    out,
                },
        } => {
            let config = ScenarioConfig {
                pool_size: size,
                lifespan_mean,
                lifespan_std_fraction: lifespan_std_frac,
                max_cost,
                max_area,
                seed,
                ..ScenarioConfig::default()
            };
            config.validate()?;
            let pool = generate_pool(&config, &mut ChaCha8Rng::seed_from_u64(seed));
            write_json(&out, &pool)?;
        }
        Command::Select(args) => return select(&args),
        Command::Simulate { config, seed, out } => {
            let log = run_scenario(&load_config(config.as_deref(), seed)?)?;
            let mut w = create(&out)?;
            log.write_ndjson(&mut w)?;
            w.flush()?;
        }
        Command::Serve {
            config,
            seed,
            port,
            host,
        } => {
            let config = load_config(config.as_deref(), seed)?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .context("bad host or port")?;
            tokio::runtime::Runtime::new()?.block_on(rescov_service::serve(config, addr))?;
        }
        Command::Experiment(args) => {
            if args.trials == 0 {
                bail!("--trials must be at least 1");
            }
            experiment(&args)?;
        }
        Command::CliqueCover {
            positions,
            range,
            max_degree,
            out,
        } => clique_cover(&positions, range, max_degree, &out)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
