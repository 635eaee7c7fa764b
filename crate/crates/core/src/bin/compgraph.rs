// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use compgraph::checkpoint::load_checkpoint;
use compgraph::graph::{active_nodes, build_graph, edges_file_name, write_edges_csv};
use compgraph::influence::{
    influence_matrix, read_influence_csv, write_influence_csv, AnalysisInput, InfluenceOptions, Scope, TokensFile,
};
use compgraph::metrics::density;
use compgraph::report::{sweep, write_figures, SweepConfig, DEFAULT_TAUS};
use compgraph::train::{train_with_progress, TrainConfig};
use compgraph::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "compgraph", version, about = "Component influence graphs across training checkpoints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the induction-task model and write a checkpoint series.
    Train(TrainArgs),
    /// Influence matrix for one checkpoint.
    Influence(InfluenceArgs),
    /// Thresholded graph from an influence CSV.
    Graph(GraphArgs),
    /// Full pipeline over a manifest and a tau list.
    Sweep(SweepArgs),
    /// SVG figures from a sweep's CSVs.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    All,
    Last,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Scope {
        match s {
            ScopeArg::All => Scope::AllPositions,
            ScopeArg::Last => Scope::LastPosition,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    out: PathBuf,
    /// JSON TrainConfig; its out_dir is replaced by --out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct InfluenceArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    tokens: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    scope: ScopeArg,
    #[arg(long)]
    strict_layer_order: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    /// An influence CSV with its JSON sidecar.
    #[arg(long)]
    influence: PathBuf,
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    tokens: PathBuf,
    /// Comma-separated, strictly increasing, each in (0, 1].
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "all")]
    scope: ScopeArg,
    #[arg(long)]
    strict_layer_order: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    reproducible: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// A sweep output directory.
    #[arg(long)]
    out: PathBuf,
    /// Tau for the heatmaps.
    #[arg(long, default_value_t = 0.7)]
    tau: f64,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::TauOutOfRange(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => run_train(a),
        Command::Influence(a) => run_influence(a),
        Command::Graph(a) => run_graph(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Report(a) => run_report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run_train(a: TrainArgs) -> compgraph::Result<u8> {
    let mut config = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            let mut c: TrainConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
                path: p.clone(),
                source: e,
            })?;
            c.out_dir = a.out.clone();
            c
        }
        None => TrainConfig::desk_default(&a.out),
    };
    if let Some(steps) = a.steps {
        config.steps = steps;
        config.checkpoint_schedule = compgraph::train::default_schedule(steps);
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let every = (config.steps / 20).max(1);
    let report = train_with_progress(&config, |step, s| {
        if !a.quiet && step % every == 0 {
            eprintln!(
                "step {step:>6}  loss {:.4}  repeat acc {:.3}",
                s.loss, s.repeat_accuracy
            );
        }
    })?;
    println!(
        "final loss {:.4}, repeated-half accuracy {:.3}, {:.1}s",
        report.final_loss, report.final_repeat_accuracy, report.seconds
    );
    println!("manifest: {}", report.manifest_path.display());
    println!("tokens:   {}", report.tokens_path.display());
    Ok(0)
}

fn run_influence(a: InfluenceArgs) -> compgraph::Result<u8> {
    let loaded = load_checkpoint(&a.checkpoint)?;
    for name in &loaded.non_finite {
        eprintln!("warning: non-finite values in {name}");
    }
    let input = AnalysisInput::new(TokensFile::read(&a.tokens)?, a.scope.into());
    let options = InfluenceOptions {
        strict_layer_order: a.strict_layer_order,
        parallel: a.threads != Some(1),
    };
    let mut m = with_threads(a.threads, || influence_matrix(&loaded.weights, &loaded.config, &input, options))??;
    m.step = loaded.step;
    create_dir(&a.out)?;
    let path = a.out.join(format!("influence_{}.csv", m.step));
    write_influence_csv(&m, &path)?;
    println!(
        "{}: {} components, {} pairs, correct-token logit {:.4}",
        path.display(),
        m.len(),
        m.num_defined(),
        m.correct_token_logit
    );
    Ok(0)
}

fn run_graph(a: GraphArgs) -> compgraph::Result<u8> {
    let m = read_influence_csv(&a.influence)?;
    let g = build_graph(&m, a.tau)?;
    create_dir(&a.out)?;
    let path = a.out.join(edges_file_name(g.step, a.tau));
    write_edges_csv(&g, &path)?;
    println!(
        "{}: {} active nodes, {} edges, density {:.4}",
        path.display(),
        active_nodes(&g).0,
        g.num_edges(),
        density(&g)
    );
    Ok(0)
}

fn run_sweep(a: SweepArgs) -> compgraph::Result<u8> {
    let config = SweepConfig {
        manifest: a.manifest,
        tokens: a.tokens,
        taus: a.taus.unwrap_or_else(|| DEFAULT_TAUS.to_vec()),
        scope: a.scope.into(),
        strict_layer_order: a.strict_layer_order,
        out_dir: a.out,
        threads: a.threads,
        reproducible: a.reproducible,
    };
    let summary = sweep(&config)?;
    for f in &summary.totals.failures {
        eprintln!("checkpoint {} failed: {}", f.step, f.error);
    }
    println!(
        "{}/{} checkpoints, {} edge files, {:.1}s -> {}",
        summary.totals.succeeded,
        summary.totals.checkpoints,
        summary.totals.edge_files,
        summary.totals.seconds,
        config.out_dir.display()
    );
    Ok(if summary.is_complete() { 0 } else { EXIT_PARTIAL })
}

fn run_report(a: ReportArgs) -> compgraph::Result<u8> {
    for path in write_figures(&a.out, a.tau)? {
        println!("{}", path.display());
    }
    Ok(0)
}

fn create_dir(dir: &Path) -> compgraph::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> compgraph::Result<R> {
    match threads {
        Some(0) => Err(Error::Config("threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Config(format!("thread pool: {e}"))),
        None => Ok(f()),
    }
}
