use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crcnn::config::{read_settings, RunConfig};
use crcnn::{Error, Result};
use crcnn_cli::{cmd_attribute, cmd_evaluate, cmd_gradcheck, cmd_predict, cmd_train, exit_code, load_model};

#[derive(Parser)]
#[command(name = "crcnn", version, about = "Relation classification by ranking with a convolutional network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it to --model (or <output-dir>/model.bin).
    Train(Settings),
    /// Write `ID<TAB>label` predictions for --input.
    Predict {
        #[command(flatten)]
        settings: Settings,
        /// Labeled or unlabeled corpus file to classify.
        #[arg(long)]
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Score a predictions file against gold labels.
    Evaluate {
        /// Gold labels, as `ID<TAB>label` lines or a labeled corpus file.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Report the most representative n-grams per class.
    Attribute {
        #[command(flatten)]
        settings: Settings,
        /// Labeled corpus file.
        #[arg(long)]
        input: PathBuf,
    },
    /// Check analytic gradients against finite differences on tiny models.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Flags mirroring the run configuration. `--config` is read first; flags
/// given on the command line override it.
#[derive(Args)]
struct Settings {
    /// Flat `key=value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train_file: Option<String>,
    #[arg(long)]
    test_file: Option<String>,
    #[arg(long)]
    embeddings: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    /// full | between
    #[arg(long)]
    span_mode: Option<String>,
    /// on | off
    #[arg(long)]
    positions: Option<String>,
    /// ranking | softmax
    #[arg(long)]
    head: Option<String>,
    /// on | off
    #[arg(long)]
    omit_other: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    dw: Option<String>,
    #[arg(long)]
    dwpe: Option<String>,
    #[arg(long)]
    dc: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    max_distance: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    m_plus: Option<String>,
    #[arg(long)]
    m_minus: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    /// on | off
    #[arg(long)]
    l2_embeddings: Option<String>,
    #[arg(long)]
    top_n: Option<String>,
}

impl Settings {
    fn resolve(&self) -> Result<RunConfig> {
        let mut kv = match &self.config {
            Some(p) => read_settings(p)?,
            None => Vec::new(),
        };
        let flags = [
            ("train-file", &self.train_file),
            ("test-file", &self.test_file),
            ("embeddings", &self.embeddings),
            ("model", &self.model),
            ("output-dir", &self.output_dir),
            ("span-mode", &self.span_mode),
            ("positions", &self.positions),
            ("head", &self.head),
            ("omit-other", &self.omit_other),
            ("epochs", &self.epochs),
            ("seed", &self.seed),
            ("dw", &self.dw),
            ("dwpe", &self.dwpe),
            ("dc", &self.dc),
            ("k", &self.k),
            ("max-distance", &self.max_distance),
            ("lr", &self.lr),
            ("gamma", &self.gamma),
            ("m-plus", &self.m_plus),
            ("m-minus", &self.m_minus),
            ("beta", &self.beta),
            ("l2-embeddings", &self.l2_embeddings),
            ("top-n", &self.top_n),
        ];
        kv.extend(flags.iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))));
        RunConfig::resolve(&kv)
    }
}

fn run(command: Command) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Train(s) => {
            cmd_train(&s.resolve()?, &mut out)?;
        }
        Command::Predict { settings, input, predictions } => {
            let cfg = settings.resolve()?;
            eprint!("{}", cfg.render());
            let model = load_model(&cfg)?;
            match predictions {
                Some(p) => {
                    let f = File::create(&p).map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
                    let mut w = BufWriter::new(f);
                    cmd_predict(&model, &input, &mut w)?;
                    w.flush().map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
                }
                None => {
                    cmd_predict(&model, &input, &mut out)?;
                }
            }
        }
        Command::Evaluate { gold, predictions } => {
            cmd_evaluate(&gold, &predictions, &mut out)?;
        }
        Command::Attribute { settings, input } => {
            let cfg = settings.resolve()?;
            eprint!("{}", cfg.render());
            let model = load_model(&cfg)?;
            cmd_attribute(&model, &input, cfg.top_n, &mut out)?;
        }
        Command::Gradcheck { seed } => {
            cmd_gradcheck(seed, &mut out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
