use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use topicmine::corpus_io::{self, CorpusFormat};
use topicmine::lda::Hyperparams;
use topicmine::model_select::{parse_grid, FoldIn, SplitSpec};
use topicmine::pipeline::{self, PipelineConfig, StageError};
use topicmine::service::{self, AppState};
use topicmine::synthetic::{planted_corpus, PlantedSpec};
use topicmine::Error;

#[derive(Parser)]
#[command(name = "topicmine", version, about = "Corpus-to-codebook topic mining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, filter and store the corpus as corpus.jsonl.
    Ingest(Common),
    /// Tokenize, build the vocabulary and encode the corpus.
    Prep(Common),
    /// Fit the topic model.
    Train(Common),
    /// Choose the topic count by held-out log-likelihood.
    Sweep(Common),
    /// Rank topics and write the ranked topic table and story lists.
    Report(Common),
    /// Manage the coding codebook.
    Codebook {
        #[command(subcommand)]
        action: CodebookAction,
    },
    /// Serve reports and codebook mutations over HTTP.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Require `Authorization: Bearer <token>` on every request.
        #[arg(long)]
        token: Option<String>,
        /// Coder ids to register (comma-separated).
        #[arg(long, value_delimiter = ',')]
        coders: Vec<String>,
    },
    /// Run ingest, prep, sweep (with --grid or without --k), train and report.
    Pipeline(Common),
    /// Write a planted-topic fixture corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        topics: usize,
        #[arg(long, default_value_t = 500)]
        docs: usize,
        #[arg(long, default_value_t = 50)]
        doc_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum CodebookAction {
    /// Create codebook.json for the current report.
    Init {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        coders: Vec<String>,
        #[arg(long)]
        force: bool,
    },
    /// Export the theme table (markdown, CSV and JSON).
    Export(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// csv, jsonl or txt-dir (inferred from the path when omitted).
    #[arg(long)]
    format: Option<CorpusFormat>,
    #[arg(long)]
    tag: Option<String>,
    #[arg(long)]
    allow_empty: bool,
    #[arg(long)]
    stoplist: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    min_token_len: usize,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 5.0)]
    alpha_sum: f64,
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// start:stop:step (inclusive) or a comma-separated list.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, default_value_t = 0.75)]
    train_fraction: f64,
    #[arg(long, default_value_t = 200)]
    foldin_sweeps: usize,
    #[arg(long, default_value_t = 100)]
    foldin_burn: usize,
    #[arg(long, default_value_t = 10)]
    top_words: usize,
    #[arg(long, default_value_t = 20)]
    top_docs: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig, StageError> {
        let grid = self
            .grid
            .as_deref()
            .map(parse_grid)
            .transpose()
            .map_err(|source| StageError { stage: "config", source })?;
        Ok(PipelineConfig {
            corpus: self.corpus.clone(),
            format: self.format,
            tag: self.tag.clone(),
            allow_empty: self.allow_empty,
            stoplist: self.stoplist.clone(),
            min_token_len: self.min_token_len,
            hyper: Hyperparams {
                k: self.k.unwrap_or(Hyperparams::default().k),
                alpha_sum: self.alpha_sum,
                beta: self.beta,
                iterations: self.iters,
                seed: self.seed,
            },
            k: self.k,
            grid,
            split: SplitSpec {
                train_fraction: self.train_fraction,
                seed: self.seed,
            },
            foldin: FoldIn {
                sweeps: self.foldin_sweeps,
                burn: self.foldin_burn,
                seed: self.seed,
            },
            top_words: self.top_words,
            top_docs: self.top_docs,
            out: self.out.clone(),
        })
    }
}

fn run(cli: Cli) -> Result<(), StageError> {
    match cli.command {
        Command::Ingest(c) => {
            let ds = pipeline::ingest(&c.config()?)?;
            println!("{} documents", ds.len());
        }
        Command::Prep(c) => {
            let (vocab, ec) = pipeline::prep(&c.config()?)?;
            println!("{} words, {} tokens, {} documents", vocab.len(), ec.total_tokens, ec.num_docs());
        }
        Command::Train(c) => {
            let model = pipeline::train(&c.config()?)?;
            println!("model {} ({} topics)", model.fingerprint(), model.num_topics());
        }
        Command::Sweep(c) => {
            let r = pipeline::sweep(&c.config()?)?;
            print!("{}", r.to_csv());
        }
        Command::Report(c) => {
            let cfg = c.config()?;
            pipeline::report(&cfg)?;
            print!("{}", std::fs::read_to_string(cfg.out.join(pipeline::TABLE1_MD)).unwrap_or_default());
        }
        Command::Codebook { action } => match action {
            CodebookAction::Init { common, coders, force } => {
                let cb = pipeline::codebook_init(&common.config()?, &coders, force)?;
                println!("codebook for {} topics, coders {:?}", cb.num_topics, cb.coders);
            }
            CodebookAction::Export(c) => {
                let themes = pipeline::codebook_export(&c.config()?)?;
                print!("{}", themes.to_markdown());
            }
        },
        Command::Serve {
            common,
            addr,
            token,
            coders,
        } => {
            let cfg = common.config()?;
            let state = AppState::from_artifacts(&cfg, &coders, token)
                .map_err(|source| StageError { stage: "serve", source })?;
            let rt = tokio::runtime::Runtime::new()
                .map_err(|e| StageError { stage: "serve", source: Error::Io { path: "tokio runtime".into(), source: e } })?;
            rt.block_on(service::serve(Arc::new(state), addr))
                .map_err(|source| StageError { stage: "serve", source })?;
        }
        Command::Pipeline(c) => {
            let outcome = pipeline::run_pipeline(&c.config()?)?;
            if let Some(s) = &outcome.sweep {
                println!("sweep chose k = {}", s.chosen_k);
            }
            println!(
                "{} documents, {} topics, report in {}",
                outcome.documents,
                outcome.model.num_topics(),
                c.out.display()
            );
        }
        Command::Synth {
            out,
            topics,
            docs,
            doc_len,
            seed,
        } => {
            let planted = planted_corpus(PlantedSpec {
                topics,
                docs,
                doc_len,
                seed,
                ..PlantedSpec::default()
            });
            let format = CorpusFormat::infer(&out);
            corpus_io::persist_corpus(&planted.to_documents(), &out, format)
                .map_err(|source| StageError { stage: "synth", source })?;
            println!("{docs} documents written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
