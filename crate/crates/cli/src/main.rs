use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chanspec::features::FEATURE_NAMES;
use chanspec::manifest::Label;
use chanspec::svm::Gamma;

mod commands;

/// Real-vs-GAN image classification from color-channel spectral asynchrony.
#[derive(Parser, Debug)]
#[command(name = "chanspec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic corpus of real-like and fake-like PNGs.
    Synth(SynthArgs),
    /// Compute the six spectral features for every manifest entry.
    Extract(ExtractArgs),
    /// Fit a classifier on a feature CSV.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Score a saved model on a labeled feature CSV.
    Eval(EvalArgs),
    /// Train on a labeled source domain and predict an unlabeled target domain.
    Adapt(AdaptArgs),
    /// Write the three magnitude spectra of one image as CSV.
    SpectrumDump(SpectrumDumpArgs),
    /// Bin one feature column into an equal-width histogram CSV.
    Histogram(HistogramArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of real-like images.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Side length in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Fraction of the corpus that is fake-like.
    #[arg(long, default_value_t = 0.5)]
    fake_fraction: f64,
    #[arg(long, env = "FORENSICS_SEED", default_value_t = 0)]
    seed: u64,
    /// Amplitude of the per-channel checkerboard perturbation.
    #[arg(long, default_value_t = 8.0)]
    noise_amplitude: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Feature CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Skip unreadable entries with a warning instead of failing.
    #[arg(long)]
    permissive: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum TrainCommand {
    /// Unsupervised two-component mixture; labels are ignored.
    Gmm(TrainGmmArgs),
    /// RBF support vector machine; needs both classes labeled.
    Svm(TrainSvmArgs),
}

#[derive(Args, Debug)]
struct TrainGmmArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "FORENSICS_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Additional randomly initialized fits; the best likelihood is kept.
    #[arg(long, default_value_t = 0)]
    restarts: usize,
}

#[derive(Args, Debug, Clone)]
struct SvmFlags {
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// "scale" or a positive number.
    #[arg(long, default_value = "scale")]
    gamma: Gamma,
    /// Stopping tolerance on the maximal violating pair.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

#[derive(Args, Debug)]
struct TrainSvmArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "FORENSICS_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    svm: SvmFlags,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Metrics JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-row predictions CSV.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AdaptArgs {
    /// Labeled source feature CSV.
    #[arg(long)]
    source: PathBuf,
    /// Target feature CSV; labels, if any, only feed the metrics.
    #[arg(long)]
    target: PathBuf,
    /// Expectation table used verbatim for the target domain.
    #[arg(long)]
    expectations: Option<PathBuf>,
    /// Expectation table used verbatim for the source domain.
    #[arg(long)]
    source_expectations: Option<PathBuf>,
    /// Predictions CSV.
    #[arg(long)]
    out: PathBuf,
    /// Metrics JSON, written only when every target row is labeled.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Directory for the source and target expectation tables actually used.
    #[arg(long)]
    expectations_out: Option<PathBuf>,
    #[arg(long, env = "FORENSICS_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    svm: SvmFlags,
}

#[derive(Args, Debug)]
struct SpectrumDumpArgs {
    #[arg(long)]
    image: PathBuf,
    /// Directory receiving spectrum_r.csv, spectrum_g.csv, spectrum_b.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct HistogramArgs {
    #[arg(long)]
    features: PathBuf,
    /// Column name.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(FEATURE_NAMES))]
    feature: String,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Only rows with this label.
    #[arg(long, value_parser = parse_label)]
    label: Option<Label>,
    /// Fixed range instead of the data's min and max.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    range: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_label(s: &str) -> Result<Label, String> {
    match s {
        "real" | "0" => Ok(Label::Real),
        "fake" | "1" => Ok(Label::Fake),
        _ => Err(format!("expected real, fake, 0 or 1, got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(e.inner()));
            ExitCode::from(e.code())
        }
    }
}

/// Joins the error chain, dropping causes already quoted by their parent.
fn render(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if prev.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
        prev = msg;
    }
    out
}
