use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use triple_score::pipeline::{self, render_summary, PipelineConfig};
use triple_score::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INSUFFICIENT: u8 = 3;

/// Score profession and nationality triples from per-person text.
#[derive(Parser)]
#[command(name = "triple-score", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Every option except `--config` and `--threads` overrides the config key
/// of the same name.
#[derive(Args)]
struct Global {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true)]
    workdir: Option<String>,
    #[arg(long, global = true)]
    sentences: Option<String>,
    #[arg(long, global = true)]
    persons: Option<String>,
    #[arg(long, global = true)]
    profession_lexicon: Option<String>,
    #[arg(long, global = true)]
    nationality_lexicon: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// distinct-entities or raw-mentions.
    #[arg(long, global = true)]
    occurrence: Option<String>,
    #[arg(long, global = true)]
    dimension: Option<String>,
    #[arg(long, global = true)]
    window: Option<String>,
    #[arg(long, global = true)]
    negative_samples: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    #[arg(long, global = true)]
    min_count: Option<String>,
    #[arg(long, global = true)]
    learning_rate: Option<String>,
    #[arg(long, global = true)]
    max_pos: Option<String>,
    #[arg(long, global = true)]
    max_neg: Option<String>,
    #[arg(long, global = true)]
    negatives_per_person: Option<String>,
}

impl Global {
    fn overrides(&self) -> [(&'static str, &Option<String>); 16] {
        [
            ("workdir", &self.workdir),
            ("sentences", &self.sentences),
            ("persons", &self.persons),
            ("profession_lexicon", &self.profession_lexicon),
            ("nationality_lexicon", &self.nationality_lexicon),
            ("seed", &self.seed),
            ("occurrence", &self.occurrence),
            ("dimension", &self.dimension),
            ("window", &self.window),
            ("negative_samples", &self.negative_samples),
            ("epochs", &self.epochs),
            ("min_count", &self.min_count),
            ("learning_rate", &self.learning_rate),
            ("max_pos", &self.max_pos),
            ("max_neg", &self.max_neg),
            ("negatives_per_person", &self.negatives_per_person),
        ]
    }

    fn pipeline_config(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the corpus index in the working directory.
    Ingest,
    /// Write distant-supervision triples to train.tsv.
    GenTrain,
    /// Train every configured relation and write the model bundle.
    Train,
    /// Append a score to every `person TAB relation TAB entity` line.
    Score {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Skip unscorable lines with a warning instead of failing.
        #[arg(long)]
        skip_bad: bool,
    },
    /// Compare a scored file with a ground-truth file.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summarise the corpus, training data and model in the working directory.
    Report,
}

fn write_output(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = cli.global.pipeline_config()?;
    match &cli.command {
        Command::Ingest => {
            let index = pipeline::run_ingest(&cfg)?;
            println!(
                "coverage: {} of {} persons ({:.2}%), {} orphan sentence(s)",
                index.persons_found(),
                index.persons_requested(),
                index.coverage_fraction()? * 100.0,
                index.orphan_sentences()
            );
        }
        Command::GenTrain => {
            let triples = pipeline::run_gen_train(&cfg)?;
            for rel in cfg.lexicons.keys() {
                let of_rel = triples.iter().filter(|t| t.relation == *rel);
                let pos = of_rel.clone().filter(|t| t.score > 0).count();
                let neg = of_rel.filter(|t| t.score == 0).count();
                println!("{rel}: {pos} positive, {neg} negative");
            }
            println!("wrote {}", cfg.train_path().display());
        }
        Command::Train => {
            let (_, summaries) = pipeline::run_train(&cfg)?;
            print!("{}", render_summary(&summaries));
            println!("wrote {}", cfg.model_dir().display());
        }
        Command::Score {
            input,
            output,
            skip_bad,
        } => {
            let scored = pipeline::run_score(&cfg, input, output, *skip_bad)?;
            for bad in &scored.bad {
                eprintln!("warning: {}:{}: skipped: {}", input.display(), bad.line, bad.message);
            }
            println!("scored {} triple(s), skipped {}", scored.scored, scored.bad.len());
        }
        Command::Eval {
            predictions,
            truth,
            output,
        } => {
            let report = pipeline::run_eval(predictions, truth)?;
            let text = format!("{report}\n{}", report.to_key_values());
            print!("{text}");
            if let Some(path) = output {
                write_output(path, &text)?;
            }
        }
        Command::Report => print!("{}", pipeline::run_report(&cfg)?),
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::InsufficientData(_) => EXIT_INSUFFICIENT,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.global.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(EXIT_USAGE);
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
