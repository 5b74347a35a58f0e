use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use argpat::corpus::CorpusStore;
use argpat::pipeline::{run_pipeline, PipelineConfig};
use argpat::synth::{planted_fragment_corpus, throughput_corpus, MiniCorpus};

#[derive(Parser)]
#[command(name = "argpat", version, about = "Argument pattern analysis for threaded discussions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a JSONL corpus into a store
    Ingest {
        /// Input JSONL file
        input: PathBuf,
        /// Store directory
        #[arg(long)]
        store: PathBuf,
        /// Corpus name inside the store
        #[arg(long)]
        name: String,
    },
    /// Print stats for an ingested corpus
    Stats {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        name: String,
    },
    /// Check a pipeline configuration without running it
    Validate {
        /// TOML configuration file
        config: PathBuf,
    },
    /// Run the full pipeline described by a configuration file
    Run {
        config: PathBuf,
        /// Recompute every stage even if artifacts are fresh
        #[arg(long)]
        force: bool,
    },
    /// Generate synthetic corpora
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Small end-to-end corpus with seeds, candidates, and markers
    Mini {
        /// Directory receiving the corpus bundle
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Corpus with planted fragment groups, written as JSONL
    Planted {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 600)]
        docs: usize,
        #[arg(long, default_value_t = 6)]
        groups: usize,
        #[arg(long, default_value_t = 8)]
        frags_per_group: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Large flat corpus for throughput testing, written as JSONL
    Throughput {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        docs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn write_jsonl(path: &PathBuf, docs: &[argpat::corpus::Document]) -> anyhow::Result<()> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Ingest { input, store, name } => {
            let store = CorpusStore::open(store);
            let report = store.ingest(&input, &name)?;
            println!("accepted:   {}", report.n_accepted);
            println!("malformed:  {}", report.n_malformed);
            println!("duplicates: {}", report.n_duplicates);
            for e in &report.sample_errors {
                eprintln!("  {e}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats { store, name } => {
            let store = CorpusStore::open(store);
            let m = store.manifest(&name)?;
            println!("corpus:     {}", m.name);
            println!("posts:      {}", m.stats.n_posts);
            println!("replies:    {}", m.stats.n_replies);
            println!("authors:    {}", m.stats.n_authors);
            println!("delta rate: {:.4}", m.stats.delta_rate);
            println!("hash:       {}", m.content_hash);
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let base = config
                .parent()
                .map(|p| p.to_path_buf())
                .unwrap_or_else(|| PathBuf::from("."));
            let parsed = PipelineConfig::load(&config)?;
            let errs = parsed.validate(&base);
            if errs.is_empty() {
                println!("configuration ok");
                Ok(ExitCode::SUCCESS)
            } else {
                for e in &errs {
                    eprintln!("{e}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Run { config, force } => {
            let base = config
                .parent()
                .map(|p| p.to_path_buf())
                .unwrap_or_else(|| PathBuf::from("."));
            let parsed = PipelineConfig::load(&config)?;
            let errs = parsed.validate(&base);
            if !errs.is_empty() {
                for e in &errs {
                    eprintln!("{e}");
                }
                return Ok(ExitCode::FAILURE);
            }
            let manifest = run_pipeline(&parsed, &base, force)?;
            println!("{} stages complete", manifest.stages.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth(cmd) => {
            match cmd {
                SynthCommand::Mini { dir, seed } => {
                    let mini = MiniCorpus::generate(seed);
                    let paths = mini.write_to(&dir)?;
                    println!("{}", paths.corpus.display());
                    println!("{}", paths.seeds.display());
                    println!("{}", paths.cogproc.display());
                    println!("{}", paths.markers.display());
                }
                SynthCommand::Planted {
                    out,
                    docs,
                    groups,
                    frags_per_group,
                    seed,
                } => {
                    let (d, _frags, _labels) =
                        planted_fragment_corpus(docs, groups, frags_per_group, seed);
                    write_jsonl(&out, &d)?;
                    println!("{} documents written to {}", d.len(), out.display());
                }
                SynthCommand::Throughput { out, docs, seed } => {
                    let d = throughput_corpus(docs, seed);
                    write_jsonl(&out, &d)?;
                    println!("{} documents written to {}", d.len(), out.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
