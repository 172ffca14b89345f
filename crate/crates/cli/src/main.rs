//! `olx`: batch evaluation of open-vocabulary 3D scene representations.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use olx_core::Error;

#[derive(Parser)]
#[command(name = "olx", version, about = "Tiered open-set segmentation and object retrieval evaluation")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "OLX_THREADS")]
    threads: Option<usize>,

    /// Log verbosity (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Dense,
    Object,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    #[value(name = "S")]
    S,
    #[value(name = "S+D")]
    SD,
}

#[derive(Args)]
pub struct FilterArgs {
    /// Skip instances flagged ambiguous.
    #[arg(long)]
    pub exclude_ambiguous: bool,

    /// Instances with any of these synonyms are skipped.
    #[arg(long, value_delimiter = ',', default_value = "floor,wall,ceiling")]
    pub exclude_labels: Vec<String>,
}

#[derive(Args)]
pub struct OutputArgs {
    /// Output directory; the report goes to stdout as JSON when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Args)]
pub struct SegArgs {
    /// Dataset root: prompt list, label embeddings and one directory per scene.
    #[arg(long)]
    pub data: PathBuf,

    /// Prediction root with one directory per scene.
    #[arg(long)]
    pub pred: PathBuf,

    #[arg(long, value_enum, default_value = "dense")]
    pub mode: Mode,

    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub top_n: Vec<usize>,

    /// Voxel size in metres.
    #[arg(long, default_value_t = 0.05)]
    pub resolution: f64,

    /// Nearest-neighbour matching radius; defaults to the resolution.
    #[arg(long)]
    pub match_distance: Option<f64>,

    /// Closed class list (one label per line) enabling mIoU.
    #[arg(long)]
    pub class_list: Option<PathBuf>,

    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Tiered open-set segmentation metrics.
    EvalSeg {
        #[command(flatten)]
        seg: SegArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Also write category-coloured clouds at the smallest N under OUT/viz.
        #[arg(long, requires = "out")]
        viz: bool,
    },
    /// Object retrieval metrics.
    EvalRetrieval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Non-maximum suppression IoU threshold.
        #[arg(long)]
        nms: Option<f64>,
        /// Pool all queries of a scene into one precision-recall curve.
        #[arg(long)]
        pooled: bool,
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        /// Drop predictions below this cosine similarity.
        #[arg(long)]
        min_similarity: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        resolution: f64,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Curate raw annotations into a scene's labels.json; unlabeled
    /// instances go to excluded.json.
    Curate {
        #[arg(long)]
        annotations: PathBuf,
        /// Scene directory to write into.
        #[arg(long)]
        out: PathBuf,
        /// Responses needed before a label counts as agreed.
        #[arg(long, default_value_t = olx_core::labels::DEFAULT_AGREEMENT)]
        agreement: usize,
    },
    /// Generate retrieval queries for each scene.
    Queries {
        /// Dataset root or a single scene directory.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        /// Write queries.json into each scene directory instead of printing
        /// a summary.
        #[arg(long)]
        write: bool,
    },
    /// Label statistics per scene.
    Stats {
        /// Dataset root or a single scene directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Clutter neighbours from overlapping object boxes.
    Clutter {
        /// Dataset root or a single scene directory.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        /// Rewrite each scene's labels.json with the computed clutter sets.
        #[arg(long)]
        write: bool,
    },
    /// Synthetic datasets with planted metrics.
    Fixtures {
        #[command(subcommand)]
        action: FixturesAction,
    },
    /// Category-coloured point cloud of one scene.
    ExportViz {
        #[command(flatten)]
        seg: SegArgs,
        /// Scene name (directory under the dataset root).
        #[arg(long)]
        scene: String,
        /// Which top-N assignment to colour.
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Output PLY path.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum FixturesAction {
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        scenes: usize,
        #[arg(long, default_value_t = 4)]
        objects: usize,
        #[arg(long, default_value_t = 24)]
        points_per_object: usize,
        /// Noisy instead of perfect retrieval predictions.
        #[arg(long)]
        noisy: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let diag = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "path": e.path().map(|p| p.display().to_string()),
                "exit_code": e.exit_code(),
            });
            eprintln!("olx: {e}");
            eprintln!("{diag}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::EvalSeg { seg, output, viz } => commands::eval_seg(&seg, &output, viz),
        Command::EvalRetrieval {
            data,
            pred,
            nms,
            pooled,
            kind,
            min_similarity,
            resolution,
            filter,
            output,
        } => {
            let options = commands::RetrievalArgs {
                nms,
                pooled,
                kind,
                min_similarity,
                resolution,
            };
            commands::eval_retrieval(&data, &pred, &options, &filter, &output)
        }
        Command::Curate {
            annotations,
            out,
            agreement,
        } => commands::curate(&annotations, &out, agreement),
        Command::Queries { data, filter, write } => commands::queries(&data, &filter, write),
        Command::Stats { data, out } => commands::stats(&data, out.as_deref()),
        Command::Clutter { data, filter, write } => commands::clutter(&data, &filter, write),
        Command::Fixtures {
            action:
                FixturesAction::Generate {
                    seed,
                    out,
                    scenes,
                    objects,
                    points_per_object,
                    noisy,
                },
        } => commands::generate_fixture(seed, &out, scenes, objects, points_per_object, noisy),
        Command::ExportViz { seg, scene, n, out } => commands::export_viz(&seg, &scene, n, &out),
    }
}
