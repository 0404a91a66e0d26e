//! `scu`: train, unlearn and evaluate semantic-communication codecs.

mod bundle;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scu_core::config::parse_pairs;
use scu_core::diagnostics::{gradcheck_suite, GRADCHECK_EPS, GRADCHECK_TOLERANCE};
use scu_core::eval::{fit_classifier, run_experiment, worker_count, CellData};
use scu_core::report::{emit_report, ReportFormat};
use scu_core::unlearn::{hbu_unlearn, retrain_oracle, scu_unlearn, train_original, vbu_unlearn};
use scu_core::{ChannelConfig, DownstreamClassifier, Error, ExperimentConfig, Method, PreparedCell, UnlearnConfig};
use serde::Serialize;

use bundle::{ModelBundle, Provenance};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "scu", version, about = "Backdoor unlearning for semantic-communication codecs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a codec on a backdoored dataset and fit the downstream classifier.
    Train(TrainArgs),
    /// Remove the erased samples' influence from a trained codec.
    Unlearn(UnlearnArgs),
    /// Report backdoor accuracy, clean accuracy and both MSEs.
    Eval(EvalArgs),
    /// Run a full method × EDR × channel × seed matrix.
    Experiment(ExperimentArgs),
    /// Check every loss gradient against central finite differences.
    Gradcheck(GradcheckArgs),
}

/// Data and channel selection shared by several subcommands.
#[derive(Debug, Args)]
struct DataArgs {
    /// Base configuration file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `synthetic`, or `idx:TRAIN_IMAGES,TRAIN_LABELS,TEST_IMAGES,TEST_LABELS`.
    #[arg(long)]
    data: Option<String>,
    /// awgn, rayleigh or rician.
    #[arg(long)]
    channel: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    #[arg(long)]
    rician_k: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Fraction of the training set to backdoor (the later erased set).
    #[arg(long)]
    edr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Classifier file; defaults to the model path with `.classifier.json`.
    #[arg(long)]
    classifier_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct UnlearnArgs {
    /// scu, scu-nocc, vbu, hbu or retrain.
    #[arg(long)]
    method: String,
    #[arg(long)]
    model: PathBuf,
    /// Must match the fraction the model was trained with.
    #[arg(long)]
    edr: Option<f64>,
    /// Unlearning epochs; for `retrain`, training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    /// Seed for the unlearning run; defaults to the model's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    classifier: PathBuf,
    /// Overrides the dataset recorded in the model file.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    channel: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    /// Metrics file; defaults to the model path with `.eval.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory for results.csv, results.json and results.svg.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Number of random seeds, starting at 0.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = GRADCHECK_EPS)]
    eps: f64,
}

/// A failure with its exit status.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numeric { .. } => EXIT_NUMERIC,
            Error::Io(_) | Error::Config(_) | Error::Contract(_) | Error::Format { .. } | Error::Json(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn with_path(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    }
}

fn data_pairs(spec: &str, pairs: &mut BTreeMap<String, String>) -> CliResult<()> {
    pairs.retain(|k, _| !k.starts_with("dataset."));
    if spec == "synthetic" {
        pairs.insert("dataset.kind".into(), "synthetic".into());
        return Ok(());
    }
    let paths: Vec<&str> = spec
        .strip_prefix("idx:")
        .map(|rest| rest.split(',').collect())
        .unwrap_or_default();
    let [train_images, train_labels, test_images, test_labels] = paths[..] else {
        return Err(Failure::usage(format!(
            "--data must be `synthetic` or `idx:TRAIN_IMAGES,TRAIN_LABELS,TEST_IMAGES,TEST_LABELS`, got {spec:?}"
        )));
    };
    for p in [train_images, train_labels, test_images, test_labels] {
        if !Path::new(p).is_file() {
            return Err(Failure::usage(format!("data file {p} does not exist")));
        }
    }
    pairs.insert("dataset.kind".into(), "idx".into());
    pairs.insert("dataset.train_images".into(), train_images.into());
    pairs.insert("dataset.train_labels".into(), train_labels.into());
    pairs.insert("dataset.test_images".into(), test_images.into());
    pairs.insert("dataset.test_labels".into(), test_labels.into());
    Ok(())
}

fn set<T: ToString>(pairs: &mut BTreeMap<String, String>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        pairs.insert(key.into(), v.to_string());
    }
}

fn read_config_pairs(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| with_path(path)(e.into()))?;
    parse_pairs(&text).map_err(with_path(path))
}

fn single<T: Copy>(items: &[T], what: &str) -> CliResult<T> {
    match items {
        [one] => Ok(*one),
        _ => Err(Failure::usage(format!("expected exactly one {what}, the configuration lists {}", items.len()))),
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn train(args: TrainArgs) -> CliResult<()> {
    let mut pairs = match &args.data.config {
        Some(p) => read_config_pairs(p)?,
        None => BTreeMap::new(),
    };
    if let Some(d) = &args.data.data {
        data_pairs(d, &mut pairs)?;
    }
    set(&mut pairs, "channel.kind", args.data.channel);
    set(&mut pairs, "channel.snr_db", args.data.snr_db);
    set(&mut pairs, "channel.rician_k", args.data.rician_k);
    set(&mut pairs, "train.epochs", args.epochs);
    set(&mut pairs, "train.lr", args.lr);
    set(&mut pairs, "codec.beta", args.beta);
    set(&mut pairs, "edr", args.edr);
    pairs.insert("seeds".into(), args.seed.to_string());
    let cfg = ExperimentConfig::from_pairs(&pairs)?;
    let edr = single(&cfg.edr, "edr")?;
    let channel = single(&cfg.channel.configs(), "channel")?;

    let data = CellData::build(&cfg, edr, args.seed)?;
    let codec_cfg = cfg.codec.for_input(data.poisoned.pixels());
    let all = data.poisoned.all_indices();
    let (codec, report) = train_original(&data.poisoned, &all, &codec_cfg, &channel, &cfg.train, args.seed)?;
    let (classifier, acc) = fit_classifier(&codec, &data.poisoned, &channel, &cfg.classifier, args.seed)?;

    let bundle = ModelBundle {
        provenance: Provenance {
            config: cfg.to_pairs(),
            edr,
            seed: args.seed,
            channel,
        },
        history: vec!["train".into()],
        codec,
    };
    bundle.save(&args.out).map_err(with_path(&args.out))?;
    let classifier_path = args.classifier_out.unwrap_or_else(|| sidecar(&args.out, "classifier.json"));
    fs::write(&classifier_path, classifier.to_json()?).map_err(|e| with_path(&classifier_path)(e.into()))?;
    println!(
        "trained: epochs={} final_loss={:.6} classifier_train_acc={acc:.4} erased={} checksum={}",
        cfg.train.epochs,
        report.losses.last().copied().unwrap_or(f64::NAN),
        data.split.erased_indices.len(),
        report.checksum
    );
    Ok(())
}

fn unlearn(args: UnlearnArgs) -> CliResult<()> {
    let method: Method = args.method.parse()?;
    if method == Method::None {
        return Err(Failure::usage("--method none does not unlearn; use eval on the trained model"));
    }
    let model = ModelBundle::load(&args.model).map_err(with_path(&args.model))?;
    let prov = &model.provenance;
    if let Some(edr) = args.edr {
        if edr != prov.edr {
            return Err(Failure::usage(format!(
                "--edr {edr} does not match the model's backdoored fraction {}",
                prov.edr
            )));
        }
    }
    let mut pairs = prov.config.clone();
    if method == Method::Retrain {
        set(&mut pairs, "train.epochs", args.epochs);
        set(&mut pairs, "train.lr", args.lr);
    } else {
        set(&mut pairs, "unlearn.epochs", args.epochs);
        set(&mut pairs, "unlearn.lr", args.lr);
    }
    set(&mut pairs, "unlearn.alpha1", args.alpha1);
    set(&mut pairs, "unlearn.alpha2", args.alpha2);
    set(&mut pairs, "unlearn.tau", args.tau);
    set(&mut pairs, "unlearn.clip_norm", args.clip_norm);
    set(&mut pairs, "unlearn.damping", args.damping);
    let cfg = ExperimentConfig::from_pairs(&pairs)?;
    let seed = args.seed.unwrap_or(prov.seed);
    let data = CellData::build(&cfg, prov.edr, prov.seed)?;
    let (erased, remaining) = (&data.split.erased_indices, &data.split.remaining_indices);
    let (codec, ch) = (&model.codec, &prov.channel);
    let set_alpha2 = |alpha2: f64| UnlearnConfig {
        alpha2,
        ..cfg.unlearn.clone()
    };
    let (out, report) = match method {
        Method::Scu => scu_unlearn(codec, &data.poisoned, erased, remaining, ch, &cfg.unlearn, seed)?,
        Method::ScuNoCc => scu_unlearn(codec, &data.poisoned, erased, remaining, ch, &set_alpha2(0.0), seed)?,
        Method::Vbu => vbu_unlearn(codec, &data.poisoned, erased, ch, &cfg.unlearn, seed)?,
        Method::Hbu => hbu_unlearn(codec, &data.poisoned, erased, remaining, ch, &cfg.unlearn, seed)?,
        Method::Retrain => retrain_oracle(&data.poisoned, remaining, &codec.config(), ch, &cfg.train, seed)?,
        Method::None => unreachable!("rejected above"),
    };
    let mut history = model.history.clone();
    history.push(method.to_string());
    let bundle = ModelBundle {
        provenance: Provenance {
            config: cfg.to_pairs(),
            ..model.provenance.clone()
        },
        history,
        codec: out,
    };
    bundle.save(&args.out).map_err(with_path(&args.out))?;
    println!(
        "unlearned: method={method} steps={} seconds={:.6} input_checksum={} checksum={}",
        report.losses.len(),
        report.seconds,
        model.codec.checksum(),
        report.checksum
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    model: PathBuf,
    classifier: PathBuf,
    history: Vec<String>,
    edr: f64,
    seed: u64,
    channel: ChannelConfig,
    clean_acc: f64,
    backdoor_acc: f64,
    mse_clean: f64,
    mse_erased: f64,
    checksum: String,
}

fn eval(args: EvalArgs) -> CliResult<()> {
    let model = ModelBundle::load(&args.model).map_err(with_path(&args.model))?;
    let text = fs::read_to_string(&args.classifier).map_err(|e| with_path(&args.classifier)(e.into()))?;
    let classifier = DownstreamClassifier::from_json(&text).map_err(with_path(&args.classifier))?;
    let prov = &model.provenance;
    let mut pairs = prov.config.clone();
    if let Some(d) = &args.data {
        data_pairs(d, &mut pairs)?;
    }
    let cfg = ExperimentConfig::from_pairs(&pairs)?;
    let mut channel = prov.channel;
    if let Some(kind) = &args.channel {
        channel.kind = kind.parse()?;
    }
    if let Some(snr) = args.snr_db {
        channel.snr_db = snr;
    }
    channel.validate()?;
    let data = CellData::build(&cfg, prov.edr, prov.seed)?;
    let checksum = model.codec.checksum();
    let cell = PreparedCell::assemble(data, channel, model.codec, classifier, f64::NAN, prov.seed)?;
    let h = cell.pre;
    println!("clean_acc={:.6}", h.clean_acc);
    println!("backdoor_acc={:.6}", h.backdoor_acc);
    println!("mse_clean={:.6}", h.mse_clean);
    println!("mse_erased={:.6}", h.mse_erased);
    let out = args.out.clone().unwrap_or_else(|| sidecar(&args.model, "eval.json"));
    let doc = EvalOutput {
        model: args.model,
        classifier: args.classifier,
        history: model.history,
        edr: prov.edr,
        seed: prov.seed,
        channel,
        clean_acc: h.clean_acc,
        backdoor_acc: h.backdoor_acc,
        mse_clean: h.mse_clean,
        mse_erased: h.mse_erased,
        checksum,
    };
    let json = serde_json::to_string_pretty(&doc).map_err(Error::from)?;
    fs::write(&out, json).map_err(|e| with_path(&out)(e.into()))?;
    Ok(())
}

fn experiment(args: ExperimentArgs) -> CliResult<()> {
    let pairs = read_config_pairs(&args.config)?;
    let cfg = ExperimentConfig::from_pairs(&pairs).map_err(with_path(&args.config))?;
    let dir = args
        .out_dir
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&dir).map_err(|e| with_path(&dir)(e.into()))?;
    let outcome = run_experiment(&cfg, worker_count())?;
    for (format, name) in [
        (ReportFormat::Csv, "results.csv"),
        (ReportFormat::Json, "results.json"),
        (ReportFormat::Svg, "results.svg"),
    ] {
        let path = dir.join(name);
        emit_report(&outcome.reports, format, &path).map_err(with_path(&path))?;
    }
    println!("experiment: {} rows written to {}", outcome.reports.len(), dir.display());
    if outcome.failures.is_empty() {
        return Ok(());
    }
    let path = dir.join("failures.json");
    let json = serde_json::to_string_pretty(&outcome.failures).map_err(Error::from)?;
    fs::write(&path, json).map_err(|e| with_path(&path)(e.into()))?;
    let first = &outcome.failures[0];
    Err(Failure {
        code: if outcome.failures.iter().any(|f| f.numeric) {
            EXIT_NUMERIC
        } else {
            EXIT_FAILURE
        },
        message: format!(
            "{} cell(s) failed (see {}); first: edr={} {} snr_db={} seed={}: {}",
            outcome.failures.len(),
            path.display(),
            first.edr,
            first.channel,
            first.snr_db,
            first.seed,
            first.message
        ),
    })
}

fn gradcheck(args: GradcheckArgs) -> CliResult<()> {
    if args.seeds == 0 {
        return Err(Failure::usage("--seeds must be positive"));
    }
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let checks = gradcheck_suite(&seeds, args.eps)?;
    for c in &checks {
        println!("{} max_rel_error={:.3e}", c.loss, c.max_rel_error);
    }
    let failing: Vec<&str> = checks
        .iter()
        .filter(|c| !(c.max_rel_error < GRADCHECK_TOLERANCE))
        .map(|c| c.loss.as_str())
        .collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_FAILURE,
            message: format!("gradient check above {GRADCHECK_TOLERANCE:e} for {}", failing.join(", ")),
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let line = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", line.trim());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Unlearn(a) => unlearn(a),
        Command::Eval(a) => eval(a),
        Command::Experiment(a) => experiment(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
