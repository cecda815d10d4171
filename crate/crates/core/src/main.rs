//! Command-line interface: simulate, train, crossval, predict, export-map
//! and relevance subcommands over the library pipeline.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
//! failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use tempomap::classify::{classify_ml, fit_svm, likelihood_features};
use tempomap::data::{
    impute, informative_feature_names, load_csv, save_csv, simulate, DatasetMeta, GeneratorMeta,
    SimulateConfig,
};
use tempomap::error::Error;
use tempomap::eval::{relevance_profile, stratified_cv, CvReport, RelevanceProfile};
use tempomap::metric::MetricKind;
use tempomap::sgtm::{train, SgtmModel, TimeDistanceKind, TrainConfig};
use tempomap::Result;

#[derive(Parser)]
#[command(
    name = "tempomap",
    version,
    about = "Supervised topographic sequence models with relevance learning"
)]
struct Cli {
    /// Worker thread cap (falls back to TEMPOMAP_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-class dataset (CSV plus JSON sidecar).
    Simulate(SimulateArgs),
    /// Train a model on a labeled dataset and write the model bundle.
    Train(TrainArgs),
    /// Repeated stratified cross-validation with report and summary files.
    Crossval(CrossvalArgs),
    /// Classify sequences with a trained model bundle.
    Predict(PredictArgs),
    /// Export per-sample latent state trajectories for plotting.
    ExportMap(ExportMapArgs),
    /// Export the relevance profile of a model or report.
    Relevance(RelevanceArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Metadata sidecar path (default: <out>.meta.json).
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    n_per_class: usize,
    #[arg(long, default_value_t = 8)]
    timepoints: usize,
    #[arg(long, default_value_t = 100)]
    features: usize,
    #[arg(long, default_value_t = 10)]
    d_informative: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0.8)]
    amp_min: f64,
    #[arg(long, default_value_t = 1.2)]
    amp_max: f64,
    #[arg(long, default_value_t = 3)]
    breakpoints: usize,
    #[arg(long, default_value_t = 1.0)]
    min_gap: f64,
}

/// Training configuration overrides shared by `train` and `crossval`:
/// values start from `--config` (or the defaults) and explicit flags win.
#[derive(Args)]
struct TrainOverrides {
    /// JSON file with a training configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    grid_rows: Option<usize>,
    #[arg(long)]
    grid_cols: Option<usize>,
    #[arg(long)]
    basis_rows: Option<usize>,
    #[arg(long)]
    basis_cols: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Disable metric relevance learning.
    #[arg(long)]
    no_relevance: bool,
    /// Metric family: diagonal | full.
    #[arg(long)]
    metric_kind: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    relevance_start_epoch: Option<usize>,
    #[arg(long)]
    func_p: Option<u32>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    svm_c: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon_decay: Option<f64>,
    /// Time-domain distance: func | euclidean.
    #[arg(long)]
    time_distance: Option<String>,
}

impl TrainOverrides {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                TrainConfig::from_json(&text)?
            }
            None => TrainConfig::default(),
        };
        if let Some(v) = self.grid_rows {
            config.grid_rows = v;
        }
        if let Some(v) = self.grid_cols {
            config.grid_cols = v;
        }
        if let Some(v) = self.basis_rows {
            config.basis_rows = v;
        }
        if let Some(v) = self.basis_cols {
            config.basis_cols = v;
        }
        if let Some(v) = self.max_epochs {
            config.max_epochs = v;
        }
        if let Some(v) = self.tol {
            config.tol = v;
        }
        if self.no_relevance {
            config.relevance = false;
        }
        if let Some(kind) = &self.metric_kind {
            config.metric_kind = match kind.as_str() {
                "diagonal" => MetricKind::Diagonal,
                "full" => MetricKind::Full,
                other => {
                    return Err(Error::Config(format!(
                        "unknown metric kind '{other}' (expected diagonal or full)"
                    )))
                }
            };
        }
        if let Some(v) = self.epsilon {
            config.epsilon = v;
        }
        if let Some(v) = self.relevance_start_epoch {
            config.relevance_start_epoch = v;
        }
        if let Some(v) = self.func_p {
            config.func_p = v;
        }
        if let Some(v) = self.tau {
            config.tau = v;
        }
        if let Some(v) = self.svm_c {
            config.svm_c = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.epsilon_decay {
            config.epsilon_decay = v;
        }
        if let Some(kind) = &self.time_distance {
            config.time_distance = match kind.as_str() {
                "func" => TimeDistanceKind::Func,
                "euclidean" => TimeDistanceKind::Euclidean,
                other => {
                    return Err(Error::Config(format!(
                        "unknown time distance '{other}' (expected func or euclidean)"
                    )))
                }
            };
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Output model bundle (JSON).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Args)]
struct CrossvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 4)]
    folds: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Report JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Summary CSV path (default: <out>.summary.csv).
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Predictions CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportMapArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Trajectory CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RelevanceArgs {
    /// Model bundle to read the final relevance profile from.
    #[arg(long, conflicts_with = "report")]
    model: Option<PathBuf>,
    /// Cross-validation report to read the aggregated profile from.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Relevance CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let threads = cli.threads.or_else(|| {
        std::env::var("TEMPOMAP_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if n > 0 {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not configure the thread pool: {e}");
            }
        }
    }

    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        let code = match e {
            Error::Config(_) => 2,
            Error::Numerical(_) => 4,
            _ => 3,
        };
        std::process::exit(code);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Train(args) => cmd_train(args),
        Command::Crossval(args) => cmd_crossval(args),
        Command::Predict(args) => cmd_predict(args),
        Command::ExportMap(args) => cmd_export_map(args),
        Command::Relevance(args) => cmd_relevance(args),
    }
}

fn meta_path_for(out: &Path, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".meta.json");
        out.with_file_name(name)
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    if args.d_informative == 0 {
        log::warn!("simulating with 0 informative features: the classes are indistinguishable");
    }
    let config = SimulateConfig {
        n_per_class: args.n_per_class,
        t: args.timepoints,
        d: args.features,
        d_informative: args.d_informative,
        seed: args.seed,
        breakpoints: args.breakpoints,
        noise_sigma: args.noise_sigma,
        amp_min: args.amp_min,
        amp_max: args.amp_max,
        min_gap: args.min_gap,
    };
    let data = simulate(&config)?;
    save_csv(&data, &args.out)?;
    let meta = DatasetMeta::for_dataset(
        &data,
        Some(GeneratorMeta {
            informative_features: informative_feature_names(&config),
            config,
        }),
    );
    let meta_path = meta_path_for(&args.out, args.meta);
    meta.save(&meta_path)?;
    println!(
        "wrote {} ({} samples, {} time points, {} features) and {}",
        args.out.display(),
        data.n(),
        data.t(),
        data.d(),
        meta_path.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = args.overrides.resolve()?;
    let data = impute(&load_csv(&args.data)?)?;
    let mut model = train(&data, &config)?;
    if model.n_labels() >= 2 {
        model.svm = Some(fit_svm(&model, &data)?);
    }
    model.save(&args.out)?;
    let epochs = model.training_log.epochs.len();
    match model.training_log.converged_epoch {
        Some(e) => println!("trained {} classes, converged at epoch {e}", model.n_labels()),
        None => println!(
            "trained {} classes, stopped at max epochs ({epochs})",
            model.n_labels()
        ),
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_crossval(args: CrossvalArgs) -> Result<()> {
    let config = args.overrides.resolve()?;
    let data = load_csv(&args.data)?;
    let report = stratified_cv(&data, &config, args.folds, args.reps, config.seed)?;
    report.save(&args.out)?;
    let summary_path = args.summary.unwrap_or_else(|| {
        let mut name = args.out.file_stem().unwrap_or_default().to_os_string();
        name.push(".summary.csv");
        args.out.with_file_name(name)
    });
    std::fs::write(&summary_path, report.summary_csv())?;
    println!(
        "svm accuracy {:.4} +/- {:.4}; ml accuracy {:.4} +/- {:.4}; {} features selected",
        report.svm.mean_accuracy,
        report.svm.std_accuracy,
        report.ml.mean_accuracy,
        report.ml.std_accuracy,
        report.relevance.selected.len()
    );
    println!("wrote {} and {}", args.out.display(), summary_path.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = SgtmModel::load(&args.model)?;
    let data = impute(&load_csv(&args.data)?)?;
    let mut writer = csv::Writer::from_path(&args.out)?;
    let mut header = vec![
        "sample_id".to_string(),
        "predicted_label".to_string(),
        "decision_value".to_string(),
        "predicted_label_ml".to_string(),
    ];
    for label in &model.label_set {
        header.push(format!("loglik_{label}"));
    }
    writer.write_record(&header)?;
    for (seq, sample_id) in data.sequences.iter().zip(data.sample_ids.iter()) {
        let features = likelihood_features(&model, seq)?;
        let ml_label = classify_ml(&model, seq)?;
        let (label, decision) = match &model.svm {
            Some(svm) => {
                let (l, d) = svm.predict(&features)?;
                (l, format!("{d}"))
            }
            None => (ml_label.clone(), String::new()),
        };
        let mut record = vec![sample_id.clone(), label, decision, ml_label.clone()];
        for ll in &features.loglik_raw {
            record.push(format!("{ll}"));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    println!("wrote {} ({} samples)", args.out.display(), data.n());
    Ok(())
}

fn cmd_export_map(args: ExportMapArgs) -> Result<()> {
    let model = SgtmModel::load(&args.model)?;
    let data = impute(&load_csv(&args.data)?)?;
    let mut writer = csv::Writer::from_path(&args.out)?;
    writer.write_record([
        "sample_id",
        "map_label",
        "time_index",
        "state",
        "grid_x",
        "grid_y",
        "is_start",
        "is_end",
    ])?;
    for (i, seq) in data.sequences.iter().enumerate() {
        // trajectory on the sample's own class map when the label is known
        // to the model, otherwise on the best-likelihood map
        let map_label = if model.label_set.contains(&data.labels[i]) {
            data.labels[i].clone()
        } else {
            classify_ml(&model, seq)?
        };
        let submodel = model
            .submodel(&map_label)
            .ok_or_else(|| Error::Data(format!("no submodel for label '{map_label}'")))?;
        let normed = model.normalize_sequence(seq)?;
        let path = submodel.viterbi(&normed, &model.metric)?;
        let t_len = path.len();
        for (ti, &state) in path.iter().enumerate() {
            let point = submodel.grid.points[state];
            writer.write_record(&[
                data.sample_ids[i].clone(),
                map_label.clone(),
                format!("{}", data.time_stamps[ti]),
                format!("{}", state + 1),
                format!("{}", point[0]),
                format!("{}", point[1]),
                format!("{}", u8::from(ti == 0)),
                format!("{}", u8::from(ti + 1 == t_len)),
            ])?;
        }
    }
    writer.flush()?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn write_relevance_csv(
    path: &Path,
    feature_names: &[String],
    profile: &RelevanceProfile,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "feature_name",
        "relevance_mean",
        "relevance_min",
        "relevance_std",
        "selected",
    ])?;
    for (di, name) in feature_names.iter().enumerate() {
        writer.write_record(&[
            name.clone(),
            format!("{}", profile.mean[di]),
            format!("{}", profile.min[di]),
            format!("{}", profile.std[di]),
            format!("{}", u8::from(profile.selected.contains(&di))),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn cmd_relevance(args: RelevanceArgs) -> Result<()> {
    let (feature_names, profile) = match (&args.model, &args.report) {
        (Some(model_path), None) => {
            let model = SgtmModel::load(model_path)?;
            let profile = relevance_profile(&[model.metric.relevance_vector()])?;
            (model.feature_names.clone(), profile)
        }
        (None, Some(report_path)) => {
            let report = CvReport::load(report_path)?;
            (report.feature_names.clone(), report.relevance.clone())
        }
        _ => {
            return Err(Error::Config(
                "pass exactly one of --model or --report".into(),
            ))
        }
    };
    write_relevance_csv(&args.out, &feature_names, &profile)?;
    println!(
        "wrote {} ({} features, {} selected, zeta = {:.4})",
        args.out.display(),
        feature_names.len(),
        profile.selected.len(),
        profile.zeta
    );
    Ok(())
}
