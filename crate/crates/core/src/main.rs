use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use dvats::bench::{run_scenario, write_report, DatasetSource, Scenario, REPORT_FILE};
use dvats::cache::{ReactiveCache, DEFAULT_BUDGET_BYTES};
use dvats::clustering::ClusterParams;
use dvats::encoder::{EncoderConfig, EncoderVariant};
use dvats::pipeline::Pipeline;
use dvats::projection::{Algorithm, DrParams};
use dvats::series::DISPLAY_CAP;
use dvats::service::{serve, ServiceConfig};
use dvats::store::ArtifactStore;

#[derive(Parser)]
#[command(name = "dvats", version, about = "Time-series projection and clustering engine")]
struct Cli {
    /// Artifact store root.
    #[arg(long, env = "DVATS_STORE", default_value = "dvats-store", global = true)]
    store: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "DVATS_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, env = "DVATS_CACHE_BYTES", default_value_t = DEFAULT_BUDGET_BYTES)]
        cache_bytes: usize,
        #[arg(long, env = "DVATS_DISPLAY_CAP", default_value_t = DISPLAY_CAP)]
        display_cap: usize,
    },
    /// Scalability benchmark.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    Run(BenchArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// `name`, `name@version`, or `synthetic:N`.
    #[arg(long)]
    dataset: String,
    #[arg(long, value_delimiter = ',', default_value = "1,5,15,75,150")]
    factors: Vec<usize>,
    #[arg(long, default_value_t = 48)]
    window: usize,
    /// Mean-pool size for the encoder; 1 keeps raw windows.
    #[arg(long, default_value_t = 4)]
    pool: usize,
    #[arg(long, value_delimiter = ',', default_value = "umap")]
    dr: Vec<Algorithm>,
    #[arg(long, default_value_t = 10)]
    min_cluster_size: usize,
    /// Skip the clustering stage.
    #[arg(long)]
    no_cluster: bool,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    /// Largest number of windows projected per factor.
    #[arg(long, default_value_t = 10_000)]
    max_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn bench(store_root: PathBuf, args: BenchArgs) -> anyhow::Result<bool> {
    let store = Arc::new(ArtifactStore::open(&store_root)?);
    let dataset = args.dataset.parse::<DatasetSource>()?.materialize(&store)?;
    let pipeline = Pipeline::new(store, Arc::new(ReactiveCache::default()));
    let encoder = if args.pool <= 1 {
        EncoderConfig::new(EncoderVariant::Identity)
    } else {
        EncoderConfig::new(EncoderVariant::Meanpool { pool: args.pool })
    };
    let scenario = Scenario {
        factors: args.factors,
        window: args.window,
        encoder,
        dr: args
            .dr
            .into_iter()
            .map(|a| DrParams {
                random_state: args.seed,
                ..DrParams::with_algorithm(a)
            })
            .collect(),
        clustering: (!args.no_cluster).then(|| ClusterParams::new(args.min_cluster_size)),
        repetitions: args.repetitions,
        max_points: args.max_points,
        ..Scenario::new(dataset)
    };
    let rows = run_scenario(&pipeline, &scenario)?;
    write_report(&args.out, &rows)?;
    print!("{}", std::fs::read_to_string(args.out.join(REPORT_FILE))?);
    Ok(rows.iter().all(|r| r.error.is_none()))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve {
            listen,
            cache_bytes,
            display_cap,
        } => tokio::runtime::Runtime::new()
            .map_err(anyhow::Error::from)
            .and_then(|rt| {
                rt.block_on(serve(ServiceConfig {
                    listen,
                    store_root: cli.store,
                    cache_budget_bytes: cache_bytes,
                    display_cap,
                }))
            })
            .map(|_| true),
        Command::Bench {
            command: BenchCommand::Run(args),
        } => bench(cli.store, args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more stages failed; see the report");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
