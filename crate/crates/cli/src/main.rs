use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssvep_core::augment::expand_dataset;
use ssvep_core::config::{Classifier, NetworkPreset, RunConfig};
use ssvep_core::convnet::{load_params, save_params};
use ssvep_core::data::{load_store, save_store, TrialStore};
use ssvep_core::dataset::{load_imageset, save_imageset};
use ssvep_core::harness::{report_from_runs, run_subjects, test_subjects};
use ssvep_core::preprocess::{resize_nearest, write_pgm, Preprocessor, WindowConfig};
use ssvep_core::synth::{generate_store, SynthConfig};
use ssvep_core::{AugmentMode, Error, ErrorKind, Result};

#[derive(Debug, Parser)]
#[command(name = "ssvep", version, about = "SSVEP classification experiments")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Global seed (falls back to the config, then SSVEP_BENCH_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print the fully resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic trial store.
    Synth(SynthArgs),
    /// Turn a trial store into labeled spectrogram images.
    Preprocess(PreprocessArgs),
    /// Expand an image set with enumerated masks.
    Augment(AugmentArgs),
    /// Train one classifier with one subject held out.
    Train(TrainArgs),
    /// Leave-one-subject-out evaluation over every subject.
    EvalLoso(EvalArgs),
    /// Training-free FBCCA evaluation on raw windows.
    Fbcca(FbccaArgs),
    /// Export one image of a set as PGM.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Subjects, numbered from 1.
    #[arg(long, default_value_t = 35)]
    subjects: u16,
    /// Trials per subject and frequency.
    #[arg(long, default_value_t = 6)]
    trials: u16,
    /// Signal-to-noise ratio; `-inf` gives pure noise.
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    snr_db: f64,
    #[arg(long, value_delimiter = ',', default_value = "12,15")]
    freqs: Vec<f64>,
    /// Harmonics of the stimulus in the synthetic response.
    #[arg(long, default_value_t = 2)]
    harmonics: usize,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Window displacement, e.g. `0.5s` or `0.1s`.
    #[arg(long)]
    displacement: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// none, time_only, freq_only or full.
    #[arg(long)]
    mode: AugmentMode,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Trial store; overrides `store` in the config.
    #[arg(long)]
    store: Option<PathBuf>,
    /// cnn, cnn_no_transfer, svm, fbcca or majority.
    #[arg(long)]
    classifier: Option<Classifier>,
    /// Training-set augmentation: none, time_only, freq_only or full.
    #[arg(long)]
    augment: Option<AugmentMode>,
    /// Window displacement, e.g. `0.5s` or `0.1s`.
    #[arg(long)]
    displacement: Option<String>,
    /// default, scaled_down or tiny.
    #[arg(long)]
    network: Option<NetworkPreset>,
    /// Parameter file with the convolutional prefix (classifier `cnn`).
    #[arg(long)]
    pretrained: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Held-out subject; defaults to the first selected subject.
    #[arg(long)]
    test_subject: Option<u16>,
    /// Directory for params.ssvw and train_log.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// CSV report path; the summary always goes to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Worker threads for per-subject runs (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct FbccaArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Comma-separated channel names (default Oz).
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<String>>,
    /// CSV report path; the summary always goes to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    image: usize,
    #[arg(long)]
    pgm: PathBuf,
    /// Resize before export, `ROWSxCOLS` (e.g. `96x64`).
    #[arg(long)]
    resize: Option<String>,
}

fn parse_seconds(text: &str) -> Result<f64> {
    let t = text.trim();
    let t = t.strip_suffix('s').unwrap_or(t);
    t.parse::<f64>().map_err(|_| {
        Error::Config(format!(
            "cannot parse duration {text:?} (expected e.g. 0.5s)"
        ))
    })
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.resolve_seed(cli.seed)?;
    Ok(cfg)
}

/// Window displacement in samples, assuming the configured window length.
fn apply_displacement(cfg: &mut RunConfig, text: &str, sample_rate_hz: f64) -> Result<()> {
    let window_s = cfg.pipeline.window.window_len_samples as f64 / sample_rate_hz;
    cfg.pipeline.window =
        WindowConfig::from_seconds(window_s, parse_seconds(text)?, sample_rate_hz)?;
    Ok(())
}

fn store_path(flag: Option<&PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.or(cfg.store.as_ref()).cloned().ok_or_else(|| {
        Error::Config("no trial store given (--in/--store or `store` in the config)".into())
    })
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn print_config(cfg: &RunConfig) {
    emit(&format!("{}\n", cfg.to_json()));
}

/// Store-dependent flag overrides, resolved after the store is known.
struct Resolved {
    cfg: RunConfig,
    store: TrialStore,
}

fn resolve_experiment(
    mut cfg: RunConfig,
    exp: &ExperimentArgs,
    print: bool,
) -> Result<Option<Resolved>> {
    if let Some(c) = exp.classifier {
        cfg.classifier = c;
    }
    if let Some(a) = exp.augment {
        cfg.augment = a;
    }
    if let Some(n) = exp.network {
        cfg.network = n;
    }
    if let Some(p) = &exp.pretrained {
        cfg.pretrained = Some(p.clone());
    }
    if let Some(s) = &exp.store {
        cfg.store = Some(s.clone());
    }
    if print && exp.displacement.is_none() {
        print_config(&cfg);
        return Ok(None);
    }
    let store = load_store(store_path(exp.store.as_ref(), &cfg)?)?;
    if let Some(d) = &exp.displacement {
        apply_displacement(&mut cfg, d, store.sample_rate_hz as f64)?;
    }
    if print {
        print_config(&cfg);
        return Ok(None);
    }
    cfg.validate()?;
    Ok(Some(Resolved { cfg, store }))
}

fn load_pretrained(cfg: &RunConfig) -> Result<Option<ssvep_core::convnet::ModelParams>> {
    match (&cfg.pretrained, cfg.classifier) {
        (Some(path), Classifier::Cnn) => Ok(Some(load_params(path)?)),
        _ => Ok(None),
    }
}

fn cmd_synth(cfg: &RunConfig, args: &SynthArgs) -> Result<()> {
    let base = SynthConfig {
        snr_db: args.snr_db,
        n_harmonics: args.harmonics,
        seed: cfg.seed.unwrap_or(0),
        ..Default::default()
    };
    let store = generate_store(&base, args.subjects, &args.freqs, args.trials)?;
    save_store(&store, &args.out)?;
    println!("{} trials", store.trials.len());
    Ok(())
}

fn cmd_preprocess(mut cfg: RunConfig, args: &PreprocessArgs, print: bool) -> Result<()> {
    let path = store_path(args.input.as_ref(), &cfg)?;
    let store = load_store(&path)?;
    if let Some(d) = &args.displacement {
        apply_displacement(&mut cfg, d, store.sample_rate_hz as f64)?;
    }
    if print {
        print_config(&cfg);
        return Ok(());
    }
    let images = Preprocessor::new(cfg.pipeline.clone())?.process_store(&store)?;
    if let Some(out) = &args.out {
        save_imageset(&images, out)?;
    }
    println!("{} images", images.len());
    Ok(())
}

fn cmd_augment(args: &AugmentArgs) -> Result<()> {
    let images = load_imageset(&args.input)?;
    let expanded = expand_dataset(&images, args.mode)?;
    if let Some(out) = &args.out {
        save_imageset(&expanded, out)?;
    }
    println!("{}", expanded.len());
    Ok(())
}

fn cmd_train(cfg: RunConfig, args: &TrainArgs, print: bool) -> Result<()> {
    let Some(Resolved { mut cfg, store }) = resolve_experiment(cfg, &args.exp, print)? else {
        return Ok(());
    };
    if cfg.classifier == Classifier::Fbcca {
        return Err(Error::Config(
            "fbcca has nothing to train; use the fbcca subcommand".into(),
        ));
    }
    let subject = match args.test_subject {
        Some(s) => s,
        None => *test_subjects(&cfg, &store)?
            .first()
            .ok_or_else(|| Error::Data("store has no subjects".into()))?,
    };
    cfg.test_subjects = Some(vec![subject]);
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Error::Config("no output directory (--out-dir or `out_dir`)".into()))?;
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| Error::Data(format!("{}: {e}", out_dir.display())))?;
    let pretrained = load_pretrained(&cfg)?;
    let runs = run_subjects(&cfg, &store, pretrained.as_ref(), 0)?;
    let run = &runs[0];
    if let Some(params) = run.model.params() {
        save_params(&params, out_dir.join("params.ssvw"))?;
    }
    if let Some(log) = &run.log {
        log.write_csv(out_dir.join("train_log.csv"))?;
    }
    println!(
        "subject {}: test accuracy {:.1}% ({}/{})",
        subject,
        100.0 * run.metrics.accuracy,
        run.metrics.confusion.correct(),
        run.metrics.confusion.total()
    );
    Ok(())
}

fn write_report(report: &ssvep_core::harness::EvalReport, path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        report.write_csv(p)?;
    }
    emit(&report.summary_text());
    Ok(())
}

fn cmd_eval(cfg: RunConfig, args: &EvalArgs, print: bool) -> Result<()> {
    let Some(Resolved { cfg, store }) = resolve_experiment(cfg, &args.exp, print)? else {
        return Ok(());
    };
    let pretrained = load_pretrained(&cfg)?;
    let runs = run_subjects(&cfg, &store, pretrained.as_ref(), args.jobs)?;
    write_report(
        &report_from_runs(cfg.classifier, &runs),
        args.report.as_deref(),
    )
}

fn cmd_fbcca(mut cfg: RunConfig, args: &FbccaArgs, print: bool) -> Result<()> {
    cfg.classifier = Classifier::Fbcca;
    if let Some(ch) = &args.channels {
        cfg.fbcca_channels = ch.clone();
    }
    if let Some(p) = &args.input {
        cfg.store = Some(p.clone());
    }
    if print {
        print_config(&cfg);
        return Ok(());
    }
    let store = load_store(store_path(args.input.as_ref(), &cfg)?)?;
    let runs = run_subjects(&cfg, &store, None, args.jobs)?;
    write_report(
        &report_from_runs(cfg.classifier, &runs),
        args.report.as_deref(),
    )
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let images = load_imageset(&args.input)?;
    let im = images.get(args.image).ok_or_else(|| {
        Error::Data(format!(
            "image index {} out of range ({} images)",
            args.image,
            images.len()
        ))
    })?;
    let spec = match &args.resize {
        None => im.image.clone(),
        Some(text) => {
            let (r, c) = text
                .split_once('x')
                .and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)))
                .ok_or_else(|| {
                    Error::Config(format!("bad --resize {text:?} (expected ROWSxCOLS)"))
                })?;
            resize_nearest(&im.image, r, c)?
        }
    };
    write_pgm(&spec, &args.pgm)?;
    let (rows, cols) = spec.shape();
    println!(
        "image {} subject {} class {} {}x{} -> {}",
        args.image,
        im.id.subject_id,
        im.class_index,
        rows,
        cols,
        args.pgm.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let print = cli.print_config;
    match &cli.command {
        Command::Synth(_) | Command::Augment(_) | Command::Inspect(_) if print => {
            print_config(&cfg);
            Ok(())
        }
        Command::Synth(a) => cmd_synth(&cfg, a),
        Command::Preprocess(a) => cmd_preprocess(cfg, a, print),
        Command::Augment(a) => cmd_augment(a),
        Command::Train(a) => cmd_train(cfg, a, print),
        Command::EvalLoso(a) => cmd_eval(cfg, a, print),
        Command::Fbcca(a) => cmd_fbcca(cfg, a, print),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
