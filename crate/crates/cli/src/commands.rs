use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use sha2::{Digest, Sha256};

use chanspec::adapt::{self, AdaptOptions, ExpectationTable};
use chanspec::evalkit::{self, ConfusionCounts};
use chanspec::features::{self, BatchOptions, FeatureTable, FEATURE_DIM, FEATURE_NAMES};
use chanspec::gmm::{self, EmConfig};
use chanspec::imageio;
use chanspec::manifest::{DatasetManifest, Label};
use chanspec::persist::{self, ModelFile, Provenance};
use chanspec::spectral;
use chanspec::svm::{self, SvmConfig};
use chanspec::synthgen::{self, SynthConfig, SynthError};

use crate::{
    AdaptArgs, Command, EvalArgs, ExtractArgs, HistogramArgs, SpectrumDumpArgs, SvmFlags,
    SynthArgs, TrainCommand, TrainGmmArgs, TrainSvmArgs,
};

/// Exit 1 for bad flag values, 2 for anything the data or files caused.
pub enum CliError {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn inner(&self) -> &anyhow::Error {
        match self {
            CliError::Usage(e) | CliError::Data(e) => e,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(anyhow!("{msg}"))
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Extract(a) => extract(a),
        Command::Train(TrainCommand::Gmm(a)) => train_gmm(a),
        Command::Train(TrainCommand::Svm(a)) => train_svm(a),
        Command::Eval(a) => eval(a),
        Command::Adapt(a) => adapt_cmd(a),
        Command::SpectrumDump(a) => spectrum_dump(a),
        Command::Histogram(a) => histogram(a),
    }
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_table(path: &Path) -> anyhow::Result<(FeatureTable, String)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let text =
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let table = FeatureTable::from_csv_str(&text, &path.display().to_string())?;
    if table.is_empty() {
        bail!("{}: feature table has no rows", path.display());
    }
    Ok((table, digest))
}

fn svm_config(f: &SvmFlags) -> Result<SvmConfig> {
    if !(f.c.is_finite() && f.c > 0.0) {
        return Err(usage(format!("--c must be positive, got {}", f.c)));
    }
    if !(f.tol.is_finite() && f.tol > 0.0) {
        return Err(usage(format!("--tol must be positive, got {}", f.tol)));
    }
    Ok(SvmConfig {
        c: f.c,
        gamma: f.gamma,
        tol: f.tol,
        ..SvmConfig::default()
    })
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        count: a.count,
        size: a.size,
        fake_fraction: a.fake_fraction,
        seed: a.seed,
        noise_amplitude: a.noise_amplitude,
        ..SynthConfig::default()
    };
    cfg.validate().map_err(usage)?;
    let manifest = synthgen::gen_corpus(&cfg, &a.out).map_err(|e| match e {
        SynthError::InvalidConfig(_) => usage(e),
        other => CliError::Data(other.into()),
    })?;
    let (real, fake) = cfg.class_counts();
    eprintln!(
        "wrote {real} real and {fake} fake images, manifest {}",
        manifest.display()
    );
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let manifest = DatasetManifest::read(&a.manifest).map_err(anyhow::Error::from)?;
    let out = features::extract_batch(
        &manifest,
        BatchOptions {
            permissive: a.permissive,
            jobs: a.jobs,
        },
    )
    .map_err(anyhow::Error::from)?;
    for (path, err) in &out.skipped {
        eprintln!("warning: skipped {path}: {err}");
    }
    write(&a.out, &out.table.to_csv_string())?;
    eprintln!(
        "extracted {} rows, skipped {}",
        out.table.len(),
        out.skipped.len()
    );
    Ok(())
}

fn train_gmm(a: TrainGmmArgs) -> Result<()> {
    if a.max_iters == 0 {
        return Err(usage("--max-iters must be at least 1"));
    }
    if !(a.tol.is_finite() && a.tol >= 0.0) {
        return Err(usage(format!("--tol must be non-negative, got {}", a.tol)));
    }
    let (table, digest) = read_table(&a.features)?;
    let cfg = EmConfig {
        max_iters: a.max_iters,
        tol: a.tol,
        seed: a.seed,
        n_restarts: a.restarts,
    };
    let fit = gmm::em_fit(&table.matrix(), &cfg).map_err(anyhow::Error::from)?;
    if !fit.converged {
        eprintln!("warning: EM hit --max-iters before converging");
    }
    let prov = Provenance {
        config: serde_json::to_value(cfg).expect("config serializes"),
        seed: a.seed,
        input_digest: digest,
    };
    write(&a.out, &persist::gmm_to_json(&fit.model, Some(prov)))?;
    Ok(())
}

fn train_svm(a: TrainSvmArgs) -> Result<()> {
    let cfg = svm_config(&a.svm)?;
    let (table, digest) = read_table(&a.features)?;
    let labels = table.complete_labels().ok_or_else(|| {
        anyhow!(
            "{}: every row needs a label to train an SVM",
            a.features.display()
        )
    })?;
    let (model, report) =
        svm::smo_train(&table.matrix(), &labels, &cfg).map_err(anyhow::Error::from)?;
    if !report.converged {
        eprintln!(
            "warning: SMO stopped at the iteration cap with gap {}",
            report.gap
        );
    }
    let prov = Provenance {
        config: serde_json::to_value(cfg).expect("config serializes"),
        seed: a.seed,
        input_digest: digest,
    };
    write(&a.out, &persist::svm_to_json(&model, Some(prov)))?;
    Ok(())
}

struct Scored {
    path: String,
    label: Label,
    decision: f64,
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = persist::read_model(&a.model).map_err(anyhow::Error::from)?;
    let (table, _) = read_table(&a.features)?;
    let truth = table.complete_labels().ok_or_else(|| {
        anyhow!(
            "{}: evaluation needs every row labeled",
            a.features.display()
        )
    })?;
    let model_dim = match &model {
        ModelFile::Gmm { model, .. } => model.dim,
        ModelFile::Svm { model, .. } => model.dim(),
    };
    if model_dim != FEATURE_DIM {
        return Err(
            anyhow!("model expects {model_dim} features, the table has {FEATURE_DIM}").into(),
        );
    }
    let scored = table
        .rows
        .iter()
        .map(|r| {
            let x = r.features.to_array();
            let (label, decision) = match &model {
                ModelFile::Gmm { model, .. } => {
                    let p = model.classify(&x)?;
                    (p.label, p.fake_posterior)
                }
                ModelFile::Svm { model, .. } => {
                    let d = model.decision(&x)?;
                    (Label::from_sign(d), d)
                }
            };
            Ok(Scored {
                path: r.path.clone(),
                label,
                decision,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let predicted: Vec<Label> = scored.iter().map(|s| s.label).collect();
    let metrics = evalkit::metrics(
        ConfusionCounts::from_labels(&truth, &predicted).map_err(anyhow::Error::from)?,
    )
    .map_err(anyhow::Error::from)?;
    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n";
    match &a.out {
        Some(p) => write(p, &json)?,
        None => print!("{json}"),
    }
    eprintln!("{}", metrics.to_human());
    if let Some(p) = &a.predictions {
        let preds: Vec<adapt::Prediction> = scored
            .into_iter()
            .map(|s| adapt::Prediction {
                path: s.path,
                label: s.label,
                decision: s.decision,
            })
            .collect();
        write(p, &adapt::predictions_csv(&preds))?;
    }
    Ok(())
}

fn adapt_cmd(a: AdaptArgs) -> Result<()> {
    let svm = svm_config(&a.svm)?;
    let (source, _) = read_table(&a.source)?;
    let (target, _) = read_table(&a.target)?;
    let load = |p: &Option<std::path::PathBuf>| -> anyhow::Result<Option<ExpectationTable>> {
        p.as_ref()
            .map(|p| {
                persist::read_expectations(p).with_context(|| format!("loading {}", p.display()))
            })
            .transpose()
    };
    let opts = AdaptOptions {
        svm,
        seed: a.seed,
        source_expectations: load(&a.source_expectations)?,
        target_expectations: load(&a.expectations)?,
    };
    let out = adapt::adapt_and_predict(&source, &target, &opts).map_err(anyhow::Error::from)?;
    write(&a.out, &adapt::predictions_csv(&out.predictions))?;
    if let Some(dir) = &a.expectations_out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write(
            &dir.join("source_expectations.json"),
            &persist::expectations_to_json(&out.source_expectations),
        )?;
        write(
            &dir.join("target_expectations.json"),
            &persist::expectations_to_json(&out.target_expectations),
        )?;
    }
    match (&out.metrics, &a.metrics) {
        (Some(m), Some(p)) => {
            write(
                p,
                &(serde_json::to_string_pretty(m).expect("metrics serialize") + "\n"),
            )?;
            eprintln!("{}", m.to_human());
        }
        (Some(m), None) => eprintln!("{}", m.to_human()),
        (None, Some(_)) => eprintln!("warning: target has unlabeled rows, no metrics written"),
        (None, None) => {}
    }
    Ok(())
}

fn spectrum_dump(a: SpectrumDumpArgs) -> Result<()> {
    let img = imageio::load_image(&a.image).map_err(anyhow::Error::from)?;
    let spectra = spectral::spectrum(&img).map_err(anyhow::Error::from)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    spectra.write_csv_dir(&a.out).map_err(anyhow::Error::from)?;
    Ok(())
}

fn histogram(a: HistogramArgs) -> Result<()> {
    if a.bins == 0 {
        return Err(usage("--bins must be at least 1"));
    }
    let range = match a.range.as_deref() {
        Some(&[lo, hi]) if lo.is_finite() && hi.is_finite() && lo <= hi => Some((lo, hi)),
        Some(r) => return Err(usage(format!("--range needs LO <= HI, got {r:?}"))),
        None => None,
    };
    let col = FEATURE_NAMES
        .iter()
        .position(|n| *n == a.feature)
        .expect("clap restricts the name");
    let (table, _) = read_table(&a.features)?;
    let values: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| a.label.is_none() || r.label == a.label)
        .map(|r| r.features.to_array()[col])
        .collect();
    let h = match range {
        Some((lo, hi)) => evalkit::histogram_in_range(&values, a.bins, lo, hi),
        None => evalkit::histogram(&values, a.bins),
    }
    .map_err(|e| anyhow!("{}: {e}", a.feature))?;
    write(&a.out, &h.to_csv())?;
    Ok(())
}
