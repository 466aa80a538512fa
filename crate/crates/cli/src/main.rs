//! `score`: command-line front end for the continuity pipeline.

mod commands;
mod error;
mod project;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use score_core::gateway::{BackendKind, CacheMode};
use score_core::index::EntryKind;
use score_core::pipeline::ScoreConfig;
use score_core::retrieval::Granularity;

use crate::error::{CliError, Result};
use crate::project::Project;

#[derive(Parser, Debug)]
#[command(
    name = "score",
    version,
    about = "Track key items, flag continuity errors, evaluate and query episodic stories"
)]
struct Cli {
    /// Project root.
    #[arg(long, short = 'C', global = true, default_value = ".")]
    project: PathBuf,
    /// Log more (repeat for trace output).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags that override `config.json` for this invocation only.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, global = true)]
    base_url: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true, value_enum)]
    cache_mode: Option<CacheArg>,
    #[arg(long, global = true)]
    max_parallel: Option<usize>,
    #[arg(long, global = true)]
    top_n: Option<usize>,
    /// Sentiment tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true)]
    no_sentiment_filter: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Mock,
    Remote,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CacheArg {
    Off,
    Record,
    Replay,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GranularityArg {
    Summary,
    Chunk,
}

impl GranularityArg {
    fn kind(self) -> EntryKind {
        match self {
            GranularityArg::Summary => EntryKind::Summary,
            GranularityArg::Chunk => EntryKind::Chunk,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate story files (or directories) and copy them into stories/.
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Summarize every episode into summaries/.
    Summarize {
        #[arg(long)]
        force: bool,
    },
    /// Extract item states, detect and correct continuity errors into states/.
    Track {
        #[arg(long)]
        force: bool,
    },
    /// Embed retrieval documents and freeze the vector index.
    Index {
        /// Build only one index; both are built by default.
        #[arg(long, value_enum)]
        granularity: Option<GranularityArg>,
        #[arg(long)]
        force: bool,
    },
    /// Score episodes and questions; writes reports/<run-id>.json.
    Evaluate {
        /// Only this episode, as STORY#EPISODE.
        #[arg(long)]
        episode: Option<String>,
        /// Modules to disable: tracking, summary, retrieval, sentiment.
        #[arg(long, value_delimiter = ',')]
        ablate: Vec<String>,
        /// Question set; defaults to questions.json in the project.
        #[arg(long)]
        questions: Option<PathBuf>,
    },
    /// Answer a question from retrieved context; prints JSON.
    Ask {
        question: String,
        #[arg(long)]
        story: Option<String>,
        #[arg(long, value_enum)]
        granularity: Option<GranularityArg>,
    },
    /// Generate a synthetic corpus with planted continuity errors.
    Fuzz {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        stories: usize,
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 0.2)]
        explained_rate: f64,
    },
    /// Paired evaluation against the baseline or an ablation.
    Compare {
        #[arg(long)]
        baseline: bool,
        #[arg(long, value_delimiter = ',')]
        ablate: Vec<String>,
        #[arg(long)]
        questions: Option<PathBuf>,
    },
    /// Print a stored report.
    Report {
        run_id: String,
        #[arg(long)]
        markdown: bool,
    },
}

impl Overrides {
    fn apply(&self, config: &mut ScoreConfig) {
        let g = &mut config.gateway;
        if let Some(b) = self.backend {
            g.backend = match b {
                BackendArg::Mock => BackendKind::Mock,
                BackendArg::Remote => BackendKind::Remote,
            };
        }
        if let Some(u) = &self.base_url {
            g.base_url = u.clone();
        }
        if let Some(m) = &self.model {
            g.model_name = m.clone();
        }
        if let Some(c) = self.cache_mode {
            g.cache_mode = match c {
                CacheArg::Off => CacheMode::Off,
                CacheArg::Record => CacheMode::Record,
                CacheArg::Replay => CacheMode::Replay,
            };
        }
        if let Some(p) = self.max_parallel {
            g.max_parallel = p;
        }
        let r = &mut config.retrieval;
        if let Some(n) = self.top_n {
            r.top_n = n;
        }
        if let Some(t) = self.tolerance {
            r.sentiment_tolerance = t;
        }
        if self.no_sentiment_filter {
            r.sentiment_filter = false;
        }
    }
}

fn effective_config(mut config: ScoreConfig, overrides: &Overrides) -> Result<ScoreConfig> {
    overrides.apply(&mut config);
    config
        .validate()
        .map_err(|e| CliError::validation(format!("invalid configuration: {e}")))?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let project = Project::open(&cli.project)?;
    let _lock = project.lock()?;
    let file_config = project.config()?;
    match cli.command {
        Command::Ingest { files } => commands::ingest(&project, &files),
        Command::Fuzz {
            seed,
            stories,
            rate,
            explained_rate,
        } => {
            commands::fuzz(
                &project,
                &commands::FuzzArgs {
                    seed,
                    stories,
                    rate,
                    explained_rate,
                },
            )?;
            Ok(())
        }
        Command::Report { run_id, markdown } => {
            println!("{}", commands::report(&project, &run_id, markdown)?);
            Ok(())
        }
        command => {
            let config = effective_config(file_config, &cli.overrides)?;
            match command {
                Command::Summarize { force } => commands::summarize(&project, &config, force),
                Command::Track { force } => commands::track(&project, &config, force),
                Command::Index { granularity, force } => {
                    commands::index(&project, &config, granularity.map(GranularityArg::kind), force)
                }
                Command::Evaluate {
                    episode,
                    ablate,
                    questions,
                } => commands::evaluate(
                    &project,
                    &config,
                    commands::EvaluateArgs {
                        episode: episode.as_deref(),
                        ablate: &ablate,
                        questions: questions.as_deref(),
                    },
                ),
                Command::Ask {
                    question,
                    story,
                    granularity,
                } => {
                    let mut config = config;
                    if let Some(g) = granularity {
                        config.retrieval.granularity = match g {
                            GranularityArg::Summary => Granularity::Summary,
                            GranularityArg::Chunk => Granularity::Chunk,
                        };
                    }
                    let result = commands::ask(&project, &config, &question, story.as_deref())?;
                    let json = score_core::canonical::to_vec(&result);
                    println!("{}", String::from_utf8_lossy(&json));
                    Ok(())
                }
                Command::Compare {
                    baseline,
                    ablate,
                    questions,
                } => commands::compare(&project, &config, baseline, &ablate, questions.as_deref()),
                Command::Ingest { .. } | Command::Fuzz { .. } | Command::Report { .. } => unreachable!(),
            }
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code())
        }
    }
}
