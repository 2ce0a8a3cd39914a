//! `affect`: batch front end for the affect-recognition pipeline.
//!
//! Exit status is 0 when every item succeeded, 1 when some input files or
//! sessions failed (the rest are still processed) and 2 on configuration or
//! fatal errors.

mod commands;
mod run_config;

use std::path::PathBuf;
use std::process::ExitCode;

use affect_core::classifier::Hyperparams;
use affect_core::snapshot::TemplateParams;
use affect_core::Modality;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "affect", version, about = "Offline multimodal affect recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

fn parse_modality(s: &str) -> Result<Modality, String> {
    Modality::from_token(s).map_err(|e| e.to_string())
}

#[derive(Args, Clone, Copy)]
pub struct SvmArgs {
    /// L2 regularization strength.
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    /// Passes over the training frames.
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
}

impl SvmArgs {
    pub fn hyperparams(self) -> Hyperparams {
        Hyperparams {
            lambda: self.lambda,
            epochs: self.epochs,
        }
    }
}

#[derive(Args, Clone, Copy)]
pub struct TemplateArgs {
    #[arg(long, default_value_t = 50.0)]
    pub canny_low: f64,
    #[arg(long, default_value_t = 150.0)]
    pub canny_high: f64,
    /// Adaptive-threshold window (odd).
    #[arg(long, default_value_t = 11)]
    pub at_window: u32,
    /// Adaptive-threshold offset below the window mean.
    #[arg(long, default_value_t = 2.0)]
    pub at_offset: f64,
}

impl TemplateArgs {
    pub fn params(self) -> TemplateParams {
        TemplateParams {
            canny_low: self.canny_low,
            canny_high: self.canny_high,
            window: self.at_window,
            offset: self.at_offset,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Turn raw point CSVs into per-frame feature files.
    Extract {
        /// Directory of `{code}_{modality}_{subject}_{session}.csv` files.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one modality's classifier from feature files.
    Train {
        /// Directory of feature files.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_modality)]
        modality: Modality,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        svm: SvmArgs,
    },
    /// Classify and fuse sessions into per-session verdicts.
    Detect {
        /// Directory of raw point CSVs.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Model file; repeat once per modality.
        #[arg(long = "model")]
        models: Vec<PathBuf>,
        /// Modalities to use (defaults to those of the models).
        #[arg(long, value_parser = parse_modality, value_delimiter = ',')]
        modality: Vec<Modality>,
        /// Directory of `{subject}_{session}.csv` transcripts.
        #[arg(long)]
        transcripts: Option<PathBuf>,
        /// Directory of `{subject}_{session}_{n}.png` snapshots with `.roi` sidecars.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        /// Vocabulary XML (defaults to the built-in disgust list).
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[command(flatten)]
        template: TemplateArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Also write the report and run metadata here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Session-level k-fold cross-validation on a raw corpus.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        /// Modalities to evaluate (defaults to all present).
        #[arg(long, value_parser = parse_modality, value_delimiter = ',')]
        modality: Vec<Modality>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        svm: SvmArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time per-frame classification and fusion.
    Bench {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic labeled corpus of raw point CSVs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_modality, value_delimiter = ',')]
        modality: Vec<Modality>,
        #[arg(long, default_value_t = 10)]
        sessions: usize,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        /// Pixel distance between neighbouring emotions' offsets.
        #[arg(long, default_value_t = 20.0)]
        separation: f64,
        /// Per-coordinate noise standard deviation in pixels.
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 5)]
        subjects: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run the smile template on one snapshot.
    Smile {
        image: PathBuf,
        /// ROI file (defaults to the image's `.roi` sidecar).
        #[arg(long)]
        roi: Option<PathBuf>,
        #[command(flatten)]
        template: TemplateArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run keyword lookup on one transcript.
    Speech {
        transcript: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Extract { input, out } => commands::extract(&input, &out),
        Command::Train {
            input,
            modality,
            out,
            seed,
            svm,
        } => commands::train(&input, modality, &out, seed, svm.hyperparams()),
        Command::Detect {
            input,
            models,
            modality,
            transcripts,
            snapshots,
            vocab,
            template,
            format,
            out,
        } => commands::detect(commands::DetectConfig {
            input,
            models,
            modalities: modality,
            transcripts,
            snapshots,
            vocab,
            template: template.params(),
            format,
            out,
        }),
        Command::Evaluate {
            input,
            modality,
            k,
            seed,
            svm,
            format,
            out,
        } => commands::evaluate(&input, modality, k, seed, svm.hyperparams(), format, out.as_deref()),
        Command::Bench {
            input,
            models,
            repetitions,
            format,
            out,
        } => commands::bench(&input, &models, repetitions, format, out.as_deref()),
        Command::Synth {
            out,
            modality,
            sessions,
            frames,
            separation,
            noise,
            subjects,
            seed,
        } => commands::synth(
            &out,
            affect_core::synth::CorpusConfig {
                modalities: if modality.is_empty() {
                    Modality::GEOMETRIC.to_vec()
                } else {
                    modality
                },
                sessions_per_emotion: sessions,
                frames,
                separation,
                noise,
                subjects,
                seed,
            },
        ),
        Command::Smile {
            image,
            roi,
            template,
            format,
        } => commands::smile(&image, roi.as_deref(), template.params(), format),
        Command::Speech {
            transcript,
            vocab,
            format,
        } => commands::speech(&transcript, vocab.as_deref(), format),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
