use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Repository graph indexer and graph-augmented code search.
///
/// `index` builds a typed dependency graph of the repository, partitions its
/// files into communities and writes one JSON sidecar per file under
/// `.repograph/` (or `$REPOGRAPH_DIR`). `search` runs a regex over the
/// indexed files and appends the graph neighborhood of every match.
#[derive(Parser)]
#[command(name = "repograph", version)]
struct Cli {
    /// Repository root
    #[arg(long, global = true, default_value = ".")]
    repo: PathBuf,

    /// Config file (default: <index dir>/config.toml)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Machine-readable output
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the graph, communities and sidecars from scratch
    Index {
        /// Leave test files out of the graph
        #[arg(long)]
        drop_tests: bool,
        /// Rebuild even when nothing changed
        #[arg(long)]
        force: bool,
    },
    /// Bring the index up to date with the worktree
    Align,
    /// Regex search with graph evidence
    Search(SearchArgs),
    /// Print one file's sidecar, or regenerate all of them
    Sidecar {
        /// File to print, relative to the repository root
        path: Option<String>,
        /// Rewrite every sidecar
        #[arg(long)]
        rebuild: bool,
        /// Keep 10 neighbors per list instead of the configured cap
        #[arg(long)]
        compact: bool,
    },
    /// Time alignment against full rebuilds on synthetic repositories
    BenchAlign {
        #[arg(long, value_delimiter = ',', default_value = "200,500,1000,2000")]
        sizes: Vec<usize>,
        /// Fraction of files modified per repetition
        #[arg(long, default_value_t = 0.01)]
        diff: f64,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run lexical-only and graph-augmented search loops on synthetic repositories
    Simulate {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// JSON repository spec; seeds count up from its `seed`
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Context budget in rendered characters (default: non-binding)
        #[arg(long)]
        budget: Option<usize>,
    },
}

#[derive(Args)]
struct SearchArgs {
    pattern: String,
    /// Neighbors per anchor
    #[arg(long)]
    k: Option<usize>,
    /// Minimum edge confidence
    #[arg(long)]
    theta: Option<f64>,
    /// Hop radius
    #[arg(long)]
    hops: Option<u32>,
    /// Anchor cap
    #[arg(long)]
    anchors: Option<usize>,
    /// Context budget in rendered characters
    #[arg(long)]
    budget: Option<usize>,
    /// Match lines only
    #[arg(long)]
    no_graph: bool,
    /// Search the index as it is, without aligning first
    #[arg(long)]
    no_align: bool,
    /// 10 neighbors per evidence list
    #[arg(long)]
    compact: bool,
}

/// A failed command: message for stderr and the exit status.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<repograph::Error> for Failure {
    fn from(e: repograph::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<repograph_sim::Error> for Failure {
    fn from(e: repograph_sim::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

pub struct Env {
    pub root: PathBuf,
    pub config: Option<PathBuf>,
    pub json: bool,
}

impl Env {
    pub fn index_dir(&self) -> PathBuf {
        repograph::index::index_dir(&self.root)
    }

    pub fn config_path(&self) -> PathBuf {
        self.config
            .clone()
            .unwrap_or_else(|| self.index_dir().join(repograph::index::CONFIG_FILE))
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let cli = Cli::parse();
    let env = Env {
        root: cli.repo,
        config: cli.config,
        json: cli.json,
    };
    let outcome = match cli.command {
        Command::Index { drop_tests, force } => commands::index(&env, drop_tests, force),
        Command::Align => commands::align(&env),
        Command::Search(a) => commands::search(
            &env,
            &commands::SearchOptions {
                pattern: a.pattern,
                k: a.k,
                theta: a.theta,
                hops: a.hops,
                anchors: a.anchors,
                budget: a.budget,
                no_graph: a.no_graph,
                no_align: a.no_align,
                compact: a.compact,
            },
        ),
        Command::Sidecar { path, rebuild, compact } => commands::sidecar(&env, path.as_deref(), rebuild, compact),
        Command::BenchAlign { sizes, diff, reps, seed } => commands::bench(&env, &sizes, diff, reps, seed),
        Command::Simulate { seeds, spec, budget } => commands::simulate(&env, seeds, spec.as_deref(), budget),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("repograph: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn display(p: &Path) -> String {
    p.display().to_string()
}
