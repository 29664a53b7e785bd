mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cellflow_core::data::{format_timestamp, load_dir, AlignedDataset, CounterSchema};
use cellflow_core::eval::{
    evaluate, plot, run_experiment, temporal_split, write_predictions, EvalReport, ExperimentConfig, ExperimentKind,
    ExperimentOutput, FeatureSet, TrainedModel,
};
use cellflow_core::features::{build_features, TaBinEdges};
use cellflow_core::metrics::Metric;
use cellflow_core::regress::{GridSpec, ModelKind};
use cellflow_core::synth::{write_scenario, ScenarioConfig};
use cellflow_core::transfer::AdaptMode;
use cellflow_core::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "cellflow", version, about = "Road traffic flow from LTE path-loss and timing-advance counters")]
struct Cli {
    /// Seed for all randomness; overrides the seed of any config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario (counters, sensors, roads).
    Synth(SynthArgs),
    /// Build the feature matrix of a dataset.
    Features(FeaturesArgs),
    /// Fit a model and save it.
    Train(TrainArgs),
    /// Score a saved model, or train and score in one go.
    Eval(EvalArgs),
    /// Spatial experiment with kernel mean matching weights.
    TransferKmm(TrainArgs),
    /// Spatial experiment with MMD fine-tuning of a pretrained LSTM.
    TransferDa(TrainArgs),
    /// Print or summarize evaluation reports.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    DomainShift,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario TOML; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    #[arg(long)]
    weeks: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "ta")]
    features: FeatureSet,
    #[arg(long)]
    time: bool,
    #[arg(long)]
    road: bool,
    #[arg(long)]
    standardize: bool,
    /// Leading share of timestamps the standardization statistics are fitted on.
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DaMode {
    Append,
    Unfreeze,
}

#[derive(Args)]
struct ExpArgs {
    /// Directory with counters.csv, sensors.csv, roads.csv and optionally scenario.toml.
    #[arg(long)]
    data: PathBuf,
    /// Experiment TOML; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    kind: Option<ExperimentKind>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    features: Option<FeatureSet>,
    /// Add cyclic time-of-day, day-of-week and week-of-month features.
    #[arg(long)]
    time: bool,
    /// Add road attribute features.
    #[arg(long)]
    road: bool,
    /// Hyperparameter grid TOML (`key = [v, ...]`).
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Hyperparameter override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    train_frac: Option<f64>,
    /// Select hyperparameters on the test rows.
    #[arg(long)]
    paper_protocol: bool,
    /// Source road ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    source: Vec<String>,
    /// Target road ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    target: Vec<String>,
    #[arg(long)]
    lstm_stride: Option<usize>,
    #[arg(long)]
    kmm_max_rows: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    da_mode: Option<DaMode>,
    #[arg(long)]
    da_epochs: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    exp: ExpArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    exp: ExpArgs,
    /// Output directory of `train`; its experiment.toml is the base configuration.
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct ReportArgs {
    /// One or more report.json files.
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Run<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("cellflow: usage error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            let (class, code) = if e.is_numerical() {
                ("numerical", 3)
            } else if e.is_config() {
                ("config", 1)
            } else {
                ("data", 2)
            };
            eprintln!("cellflow: {class} error: {e}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Run {
    if cli.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    match cli.command {
        Command::Synth(a) => synth(a, cli.seed),
        Command::Features(a) => features(a),
        Command::Train(a) => train(a, cli.seed, None),
        Command::Eval(a) => eval(a, cli.seed),
        Command::TransferKmm(a) => train(a, cli.seed, Some(ExperimentKind::SpatialKmm)),
        Command::TransferDa(a) => train(a, cli.seed, Some(ExperimentKind::SpatialDa)),
        Command::Report(a) => report(a),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.into(),
        source: e,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(io_err(path))
}

fn synth(a: SynthArgs, seed: Option<u64>) -> Run {
    let mut cfg = match &a.config {
        Some(p) => ScenarioConfig::from_toml(&read(p)?).map_err(|e| e.at("scenario config"))?,
        None => match a.preset {
            Preset::Default => ScenarioConfig::default(),
            Preset::DomainShift => ScenarioConfig::domain_shift(),
        },
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(w) = a.weeks {
        cfg.weeks = w;
    }
    let mut man = Manifest::new("synth", cfg.seed, serde_json::to_value(&cfg).map_err(Error::from)?);
    if let Some(p) = &a.config {
        man.input(p)?;
    }
    write_scenario(&cfg, &a.out).map_err(|e| e.at("synth"))?;
    man.write(&a.out)?;
    Ok(())
}

/// Loads a data directory; `scenario.toml` in it supplies the counter schema and TA edges.
fn load_data(dir: &Path, man: &mut Manifest) -> Result<(AlignedDataset, TaBinEdges)> {
    let scen = dir.join("scenario.toml");
    let (schema, edges) = if scen.is_file() {
        let cfg = ScenarioConfig::from_toml(&read(&scen)?).map_err(|e| e.at("scenario.toml"))?;
        let edges = cfg.edges()?;
        man.input(&scen)?;
        (cfg.schema, edges)
    } else {
        (CounterSchema::default(), TaBinEdges::default())
    };
    for f in ["counters.csv", "sensors.csv", "roads.csv"] {
        man.input(&dir.join(f))?;
    }
    let al = load_dir(dir, &schema)?;
    if al.dropped > 0 {
        eprintln!("cellflow: dropped {} rows without a matching sensor or counter interval", al.dropped);
    }
    Ok((al.dataset, edges))
}

fn features(a: FeaturesArgs) -> Run {
    let spec = a.features.spec(a.time, a.road, a.standardize);
    let config = serde_json::json!({
        "features": a.features,
        "use_time": a.time,
        "use_road": a.road,
        "standardize": a.standardize,
        "train_frac": a.train_frac,
    });
    let mut man = Manifest::new("features", 0, config);
    let (ds, edges) = load_data(&a.data, &mut man).map_err(|e| e.at("load"))?;
    let (fit, _) = temporal_split(&ds, a.train_frac).map_err(|e| e.at("split"))?;
    let fm = build_features(&ds, &spec, &edges, &fit).map_err(|e| e.at("features"))?;
    create_dir(&a.out)?;
    fm.write_csv(&a.out.join("features.csv"), &ds.targets())?;
    fm.write_scaler(&a.out.join("scaler.toml"))?;
    man.write(&a.out)?;
    Ok(())
}

fn parse_set(items: &[String]) -> Run<Vec<(String, f64)>> {
    items
        .iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("--set expects key=value, got {s:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("--set {k}: {v:?} is not a number")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

/// Applies the experiment flags on top of `base`.
fn resolve(e: &ExpArgs, mut cfg: ExperimentConfig, seed: Option<u64>, man: &mut Manifest) -> Run<ExperimentConfig> {
    if let Some(v) = &e.name {
        cfg.name = v.clone();
    }
    if let Some(v) = e.kind {
        cfg.kind = v;
    }
    if let Some(v) = e.model {
        cfg.model = v;
    }
    if let Some(v) = e.features {
        cfg.features = v;
    }
    cfg.use_time |= e.time;
    cfg.use_road |= e.road;
    cfg.paper_protocol |= e.paper_protocol;
    if let Some(p) = &e.grid {
        cfg.grid = Some(GridSpec::from_toml(&read(p)?).map_err(|e| e.at("grid"))?);
        man.input(p)?;
    }
    let sets = parse_set(&e.set)?;
    if cfg.model == ModelKind::Lstm {
        let h = sets.into_iter().collect();
        cfg.lstm = cfg.lstm.with_overrides(&h).map_err(|e| e.at("--set"))?;
    } else {
        cfg.hyperparameters.extend(sets);
    }
    if let Some(v) = e.metric {
        cfg.metric = v;
    }
    if let Some(v) = e.train_frac {
        cfg.train_frac = v;
    }
    if !e.source.is_empty() {
        cfg.source = e.source.clone();
    }
    if !e.target.is_empty() {
        cfg.target = e.target.clone();
    }
    if let Some(v) = e.lstm_stride {
        cfg.lstm_stride = v;
    }
    if let Some(v) = e.kmm_max_rows {
        cfg.kmm_max_rows = v;
    }
    if let Some(v) = e.lambda {
        cfg.da.lambda = v;
    }
    if let Some(m) = e.da_mode {
        cfg.da.mode = match m {
            DaMode::Append => AdaptMode::Append,
            DaMode::Unfreeze => AdaptMode::Unfreeze,
        };
    }
    if let Some(v) = e.da_epochs {
        cfg.da.epochs = v;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn base_config(path: Option<&Path>, man: &mut Manifest) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let cfg = ExperimentConfig::from_toml(&read(p)?).map_err(|e| e.at("experiment config"))?;
            man.input(p)?;
            Ok(cfg)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn finish_config(man: &mut Manifest, cfg: &ExperimentConfig) -> Result<()> {
    man.seed = cfg.seed;
    man.config = serde_json::to_value(cfg)?;
    Ok(())
}

fn experiment_toml(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Serde(e.to_string()))
}

fn train(a: TrainArgs, seed: Option<u64>, force: Option<ExperimentKind>) -> Run {
    let command = match force {
        None => "train",
        Some(ExperimentKind::SpatialKmm) => "transfer-kmm",
        Some(_) => "transfer-da",
    };
    let mut man = Manifest::new(command, 0, serde_json::Value::Null);
    let mut base = base_config(a.exp.config.as_deref(), &mut man)?;
    if let Some(k) = force {
        if a.exp.kind.is_some_and(|given| given != k) {
            return Err(Failure::Usage(format!("{command} runs a {k} experiment")));
        }
        base.kind = k;
        if k == ExperimentKind::SpatialDa {
            base.model = ModelKind::Lstm;
        }
    }
    let cfg = resolve(&a.exp, base, seed, &mut man)?;
    finish_config(&mut man, &cfg)?;
    let (ds, edges) = load_data(&a.exp.data, &mut man).map_err(|e| e.at("load"))?;
    let out = run_experiment(&ds, &edges, &cfg)?;
    create_dir(&a.out)?;
    write_model(&a.out, &out.model)?;
    write(&a.out.join("experiment.toml"), &experiment_toml(&cfg)?)?;
    if force.is_some() {
        write_outputs(&a.out, &out)?;
    } else if let Some(g) = &out.report.grid {
        write(&a.out.join("selection.json"), &(serde_json::to_string_pretty(g).map_err(Error::from)? + "\n"))?;
    }
    man.write(&a.out)?;
    Ok(())
}

fn write_model(dir: &Path, model: &TrainedModel) -> Result<()> {
    write(&dir.join("model.json"), &model.to_json()?)?;
    if let TrainedModel::Lstm(l) = model {
        l.write_log(&dir.join("training_log.csv"))?;
    }
    Ok(())
}

/// Report, predictions, plot and (for instance weighting) the source weights.
fn write_outputs(dir: &Path, out: &ExperimentOutput) -> Result<()> {
    write(&dir.join("report.json"), &(out.report.to_json()? + "\n"))?;
    write(&dir.join("report.txt"), &out.report.to_text())?;
    write_predictions(&dir.join("predictions.csv"), &out.predictions)?;
    write(&dir.join("predictions.svg"), &plot::svg(&out.predictions, 96 * 7))?;
    if let Some(w) = &out.weights {
        let mut body = String::from("road_id,timestamp,weight\n");
        for r in w {
            body.push_str(&format!("{},{},{}\n", r.road_id, format_timestamp(&r.timestamp), r.weight));
        }
        write(&dir.join("weights.csv"), &body)?;
    }
    Ok(())
}

fn eval(a: EvalArgs, seed: Option<u64>) -> Run {
    let mut man = Manifest::new("eval", 0, serde_json::Value::Null);
    let out = match &a.model_dir {
        Some(dir) => {
            if a.exp.config.is_some() {
                return Err(Failure::Usage("--config and --model-dir are mutually exclusive".into()));
            }
            let base = base_config(Some(&dir.join("experiment.toml")), &mut man)?;
            let cfg = resolve(&a.exp, base, seed, &mut man)?;
            finish_config(&mut man, &cfg)?;
            let model_path = dir.join("model.json");
            man.input(&model_path)?;
            let model = TrainedModel::from_json(cfg.model, &read(&model_path)?).map_err(|e| e.at("model.json"))?;
            let (ds, edges) = load_data(&a.exp.data, &mut man).map_err(|e| e.at("load"))?;
            evaluate(&ds, &edges, &cfg, &model)?
        }
        None => {
            let base = base_config(a.exp.config.as_deref(), &mut man)?;
            let cfg = resolve(&a.exp, base, seed, &mut man)?;
            finish_config(&mut man, &cfg)?;
            let (ds, edges) = load_data(&a.exp.data, &mut man).map_err(|e| e.at("load"))?;
            let out = run_experiment(&ds, &edges, &cfg)?;
            create_dir(&a.out)?;
            write_model(&a.out, &out.model)?;
            out
        }
    };
    create_dir(&a.out)?;
    write_outputs(&a.out, &out)?;
    print!("{}", out.report.to_text());
    man.write(&a.out)?;
    Ok(())
}

fn summary(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).chain([4]).max().unwrap_or(4);
    let mut s = format!(
        "{:<width$}  {:<11}  {:<5}  {:<5}  {:>8}  {:>8}\n",
        "name", "kind", "feat", "model", "mean R2", "no TL"
    );
    for r in reports {
        let base = r.baseline.as_ref().map_or("-".to_string(), |b| format!("{:.3}", b.mean_r2));
        s.push_str(&format!(
            "{:<width$}  {:<11}  {:<5}  {:<5}  {:>8.3}  {:>8}\n",
            r.name,
            r.kind.to_string(),
            r.features.to_string(),
            r.model,
            r.scores.mean_r2,
            base
        ));
    }
    s
}

fn report(a: ReportArgs) -> Run {
    let reports = a
        .input
        .iter()
        .map(|p| EvalReport::from_json(&read(p)?).map_err(|e| e.at(&p.display().to_string())))
        .collect::<Result<Vec<_>>>()?;
    let body = match a.format {
        Format::Json => serde_json::to_string_pretty(&reports).map_err(Error::from)? + "\n",
        Format::Text if reports.len() == 1 => reports[0].to_text(),
        Format::Text => summary(&reports),
    };
    match &a.out {
        Some(p) => write(p, &body)?,
        None => print!("{body}"),
    }
    Ok(())
}
