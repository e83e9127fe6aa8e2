use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use celltrace::project::Project;
use celltrace::render::bench::BenchShape;
use celltrace::volume::RandomSceneConfig;
use celltrace_service::commands::{self, GenerateOptions};

#[derive(Parser)]
#[command(name = "celltrace", version, about = "Cell-lineage tracking engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic project with ground truth.
    Generate(GenerateArgs),
    /// Extract a track from a ray recording.
    Extract(ExtractArgs),
    /// Detect spots with difference of Gaussians.
    Detect {
        #[arg(long)]
        project: PathBuf,
        /// Single timepoint; all when omitted.
        #[arg(long)]
        timepoint: Option<i32>,
    },
    /// Link spots of consecutive timepoints.
    Link {
        #[arg(long)]
        project: PathBuf,
        /// Single source timepoint; all when omitted.
        #[arg(long)]
        from: Option<i32>,
    },
    /// Write spots.csv and links.csv.
    Export {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Benchmarks.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
    /// Serve a project over HTTP and the session socket.
    Serve {
        #[arg(long)]
        project: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "synthetic")]
    name: String,
    /// Volume size in voxels, `X,Y,Z`.
    #[arg(long, default_value = "64,64,24", value_parser = triple::<usize>)]
    dims: [usize; 3],
    /// Voxel edge lengths, `X,Y,Z`.
    #[arg(long, default_value = "1,1,1", value_parser = triple::<f64>)]
    voxel_size: [f64; 3],
    #[arg(long, default_value_t = 10)]
    timepoints: usize,
    #[arg(long, default_value_t = 8)]
    cells: usize,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1000.0)]
    peak: f64,
    #[arg(long, default_value_t = 1.5)]
    max_step: f64,
    #[arg(long, default_value_t = 8.0)]
    min_separation: f64,
    /// Uniform noise amplitude.
    #[arg(long, default_value_t = 50.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also record rays following cell 0.
    #[arg(long)]
    rays: bool,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    project: PathBuf,
    #[arg(long)]
    rays: PathBuf,
    /// Overrides the project's smoothing iterations.
    #[arg(long)]
    iterations: Option<u32>,
    /// Write the track into the project graph.
    #[arg(long)]
    commit: bool,
    /// Where to write the extracted track (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Time instance-pool population on a synthetic graph.
    Populate {
        #[arg(long)]
        links: usize,
        /// `M` or `LO-HI`.
        #[arg(long = "spots-per-tp", default_value = "90-110")]
        spots_per_tp: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn triple<T: std::str::FromStr + Copy>(s: &str) -> std::result::Result<[T; 3], String> {
    let parts = s
        .split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| format!("invalid value `{p}`")))
        .collect::<std::result::Result<Vec<T>, _>>()?;
    match parts[..] {
        [x, y, z] => Ok([x, y, z]),
        _ => Err(format!("expected X,Y,Z, got `{s}`")),
    }
}

fn print<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let opts = GenerateOptions {
                out: a.out,
                name: a.name,
                dims: a.dims,
                voxel_size: a.voxel_size,
                timepoints: a.timepoints,
                scene: RandomSceneConfig {
                    cells: a.cells,
                    sigma: a.sigma,
                    peak: a.peak,
                    max_step: a.max_step,
                    min_separation: a.min_separation,
                },
                noise: a.noise,
                seed: a.seed,
                rays: a.rays,
            };
            print(&commands::generate(&opts)?)
        }
        Command::Extract(a) => {
            let summary = commands::extract(&a.project, &a.rays, a.iterations, a.commit)?;
            if let Some(out) = &a.out {
                std::fs::write(out, serde_json::to_vec_pretty(&summary.track)?)?;
            }
            print(&summary)
        }
        Command::Detect { project, timepoint } => print(&commands::detect(&project, timepoint)?),
        Command::Link { project, from } => print(&commands::link(&project, from)?),
        Command::Export { project, out } => print(&commands::export(&project, &out)?),
        Command::Bench { which: BenchCommand::Populate { links, spots_per_tp, seed, repeats, report } } => {
            let range = commands::parse_spot_range(&spots_per_tp)?;
            let shape = BenchShape { links, spots_per_timepoint: range, seed };
            print(&commands::bench(&shape, repeats, report.as_deref())?)
        }
        Command::Serve { project, bind } => {
            let project = Project::open(&project)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&bind).await?;
                celltrace_service::server::serve(project, listener).await
            })
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
