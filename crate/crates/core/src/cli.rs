//! Run configuration files and the `cap-lab` command surface.
//!
//! Exit codes: 0 success, 2 user or config error, 3 numeric failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::attacks::{clean_accuracy, evaluate, AttackConfig, EvalResult};
use crate::data::{gen_blobs, gen_moons, load_csv, split, CsvSchema, Dataset, FeatureScaling, LabelColumn};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};
use crate::plot::corners_svg;
use crate::polytope::{find_corners, CornerSearch, ParticleSet, PerturbationBudget, PolytopeEstimate};
use crate::train::{mean_diameter, train, PolytopeConfig, TrainConfig, TrainReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const THREADS_ENV: &str = "CAP_LAB_THREADS";

/// Where the samples come from. Synthetic sets are generated from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSpec {
    Blobs {
        n_per_class: usize,
        centers: Vec<Vec<f64>>,
        sigma: f64,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
    Moons {
        n_per_class: usize,
        noise: f64,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
    Csv {
        /// Relative paths resolve against the config file's directory.
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: LabelColumn,
        #[serde(default = "default_true")]
        header: bool,
        #[serde(default)]
        feature_scaling: FeatureScaling,
        #[serde(default)]
        classes: Option<usize>,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
}

fn default_train_fraction() -> f64 {
    0.5
}

fn default_label_column() -> LabelColumn {
    LabelColumn::Name("label".into())
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Relu
}

/// Declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// The only source of randomness for the run.
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub data: DataSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    /// Attack suite used by `eval` and `compare`.
    #[serde(default)]
    pub attacks: Vec<AttackConfig>,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into());
            config_err(&field, e.message().to_string())
        })?;
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field: format!("{}: {field}", path.display()),
                message,
            },
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Propagates the run seed into every component that consumes randomness.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        if let Some(a) = &mut self.train.attack {
            a.seed = seed;
        }
        for a in &mut self.attacks {
            a.seed = seed;
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.train.trainer.to_string())
    }

    pub fn validate(&self) -> Result<()> {
        match &self.data {
            DataSpec::Blobs { n_per_class, centers, sigma, train_fraction } => {
                if *n_per_class == 0 {
                    return Err(config_err("data.n_per_class", "must be positive"));
                }
                if centers.len() < 2 {
                    return Err(config_err("data.centers", "need at least two centers"));
                }
                if !(*sigma > 0.0) {
                    return Err(config_err("data.sigma", format!("must be > 0, got {sigma}")));
                }
                check_fraction(*train_fraction)?;
            }
            DataSpec::Moons { n_per_class, noise, train_fraction } => {
                if *n_per_class == 0 {
                    return Err(config_err("data.n_per_class", "must be positive"));
                }
                if !(*noise >= 0.0) {
                    return Err(config_err("data.noise", format!("must be >= 0, got {noise}")));
                }
                check_fraction(*train_fraction)?;
            }
            DataSpec::Csv { train_fraction, .. } => check_fraction(*train_fraction)?,
        }
        if self.model.hidden.contains(&0) {
            return Err(config_err("model.hidden", "layer widths must be positive"));
        }
        self.train.validate().map_err(|e| match e {
            Error::Config { field, message } => config_err(&format!("train.{field}"), message),
            other => other,
        })?;
        for (i, a) in self.attacks.iter().enumerate() {
            a.validate()
                .map_err(|e| config_err(&format!("attacks[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    /// Builds the train/test split described by `[data]`.
    pub fn datasets(&self) -> Result<(Dataset, Dataset)> {
        let (all, fraction) = match &self.data {
            DataSpec::Blobs { n_per_class, centers, sigma, train_fraction } => {
                (gen_blobs(self.seed, *n_per_class, centers, *sigma)?, *train_fraction)
            }
            DataSpec::Moons { n_per_class, noise, train_fraction } => {
                (gen_moons(self.seed, *n_per_class, *noise)?, *train_fraction)
            }
            DataSpec::Csv { path, label_column, header, feature_scaling, classes, train_fraction } => {
                let schema = CsvSchema {
                    label_column: label_column.clone(),
                    header: *header,
                    feature_scaling: *feature_scaling,
                    classes: *classes,
                };
                (load_csv(self.base_dir.join(path), &schema)?, *train_fraction)
            }
        };
        split(&all, fraction, self.seed)
    }

    pub fn build_model(&self, data: &Dataset) -> Result<Mlp> {
        let mut dims = vec![data.dim()];
        dims.extend(&self.model.hidden);
        dims.push(data.classes());
        Mlp::init(self.seed, &dims, self.model.activation)
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(config_err("data.train_fraction", format!("must be in (0, 1), got {f}")))
    }
}

#[derive(Debug, Parser)]
#[command(name = "cap-lab", version, about = "Adversarial polytope lab: corner search, confinement training, attack evaluation")]
pub struct Cli {
    /// Worker threads; 0 picks automatically. Results do not depend on it.
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration and write checkpoint, report and history.
    Train(TrainArgs),
    /// Measure clean and attacked accuracy of a checkpoint.
    Eval(EvalArgs),
    /// Run the corner search on one sample and write the estimate.
    Corners(CornersArgs),
    /// Train two configurations with a shared seed and tabulate them.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Dataset selection shared by `eval` and `corners`.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Run config whose `[data]` section (and attack suite) is used.
    #[arg(long, conflicts_with = "data")]
    pub config: Option<PathBuf>,
    /// CSV file with a label column.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// The CSV has no header row; `--label-column` must then be an index.
    #[arg(long)]
    pub no_header: bool,
    /// Which part of a config's split to use.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitPart,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitPart {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Evaluate this attack instead of the config's suite.
    #[arg(long, value_enum)]
    pub attack: Option<AttackKindArg>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 2.0 / 255.0)]
    pub step_size: f64,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long)]
    pub random_start: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AttackKindArg {
    Fgsm,
    Pgd,
}

#[derive(Debug, Args)]
pub struct CornersArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Sample index within the selected dataset.
    #[arg(long, conflicts_with = "sample")]
    pub index: Option<usize>,
    /// File holding one comma-separated feature row.
    #[arg(long)]
    pub sample: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub config_a: PathBuf,
    pub config_b: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USER } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_USER;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Train(a) => cmd_train(a).map(|_| ()),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
        Command::Corners(a) => cmd_corners(a).map(|_| ()),
        Command::Compare(a) => cmd_compare(a).map(|_| ()),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_USER
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn unix_time() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Paths written by a training run.
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub report: PathBuf,
    pub history: PathBuf,
    pub log: PathBuf,
}

impl TrainOutputs {
    fn in_dir(dir: &Path) -> Self {
        Self {
            checkpoint: dir.join("model.json"),
            report: dir.join("report.json"),
            history: dir.join("history.csv"),
            log: dir.join("run.log"),
        }
    }
}

/// Trains `cfg` and writes `model.json`, `report.json`, `history.csv` and the
/// `run.log` sidecar (the only file with timestamps) into `dir`.
pub fn train_run(cfg: &RunConfig, dir: &Path) -> Result<(Mlp, TrainReport, TrainOutputs)> {
    ensure_dir(dir)?;
    let outputs = TrainOutputs::in_dir(dir);
    let started = unix_time();
    let (train_set, _) = cfg.datasets()?;
    let model = cfg.build_model(&train_set)?;
    let (model, mut report) = train(model, &train_set, &cfg.train)?;
    model.save(&outputs.checkpoint)?;
    report.checkpoint = Some("model.json".into());
    write_file(&outputs.report, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write_file(&outputs.history, &report.history_csv())?;
    let mut log = format!("started_unix {started:.3}\n");
    for r in &report.history {
        let _ = writeln!(log, "epoch {} wall_clock_secs {:.3}", r.epoch, r.wall_clock_secs);
    }
    let _ = writeln!(log, "finished_unix {:.3}", unix_time());
    write_file(&outputs.log, &log)?;
    Ok((model, report, outputs))
}

fn out_dir(flag: &Option<PathBuf>, cfg: Option<&RunConfig>, fallback: &str) -> PathBuf {
    flag.clone()
        .or_else(|| cfg.and_then(|c| c.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(fallback))
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutputs> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    let dir = out_dir(&args.out, Some(&cfg), "runs/train");
    let (_, report, outputs) = train_run(&cfg, &dir)?;
    if let Some(last) = report.history.last() {
        println!(
            "{}: {} epochs, train acc {:.4}, mean diameter {:.4}",
            cfg.label(),
            last.epoch,
            last.clean_acc,
            last.mean_diameter
        );
    }
    println!("wrote {}", dir.display());
    Ok(outputs)
}

fn load_checkpoint(path: &Path) -> Result<Mlp> {
    Mlp::load(path).map_err(|e| config_err("checkpoint", format!("{}: {e}", path.display())))
}

/// Resolves the dataset (and the config, if any) selected by `DataArgs`.
fn select_data(args: &DataArgs) -> Result<(Dataset, Option<RunConfig>)> {
    if let Some(path) = &args.config {
        let mut cfg = RunConfig::load(path)?;
        if let Some(seed) = args.seed {
            cfg.set_seed(seed);
        }
        let (train_set, test_set) = cfg.datasets()?;
        let ds = match args.split {
            SplitPart::Train => train_set,
            SplitPart::Test => test_set,
        };
        return Ok((ds, Some(cfg)));
    }
    let Some(path) = &args.data else {
        return Err(config_err("--config/--data", "one of them is required"));
    };
    let label_column = match args.label_column.parse::<usize>() {
        Ok(i) if args.no_header => LabelColumn::Index(i),
        _ => LabelColumn::Name(args.label_column.clone()),
    };
    let schema = CsvSchema {
        label_column,
        header: !args.no_header,
        ..CsvSchema::default()
    };
    Ok((load_csv(path, &schema)?, None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub clean_accuracy: f64,
    pub n_samples: usize,
    pub results: Vec<EvalResult>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let model = load_checkpoint(&args.checkpoint)?;
    let (data, cfg) = select_data(&args.data)?;
    if data.dim() != model.input_dim() || data.classes() > model.output_dim() {
        return Err(config_err("checkpoint", "model does not match the dataset dimensions"));
    }
    let seed = args.data.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let attacks: Vec<AttackConfig> = match args.attack {
        Some(kind) => {
            let epsilon = args
                .epsilon
                .ok_or_else(|| config_err("--epsilon", "required with --attack"))?;
            let mut a = match kind {
                AttackKindArg::Fgsm => AttackConfig::fgsm(epsilon),
                AttackKindArg::Pgd => AttackConfig::pgd(epsilon, args.step_size, args.steps, args.random_start),
            };
            a.seed = seed;
            a.validate().map_err(|e| config_err("--attack", e.to_string()))?;
            vec![a]
        }
        None => cfg.as_ref().map(|c| c.attacks.clone()).unwrap_or_default(),
    };
    if attacks.is_empty() {
        return Err(config_err("--attack", "no attacks given and the config has none"));
    }
    let report = EvalReport {
        checkpoint: args.checkpoint.display().to_string(),
        clean_accuracy: clean_accuracy(&model, &data)?,
        n_samples: data.len(),
        results: attacks
            .iter()
            .map(|a| evaluate(&model, &data, a))
            .collect::<Result<Vec<_>>>()?,
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    print!("{text}");
    let dir = out_dir(&args.out, cfg.as_ref(), ".");
    ensure_dir(&dir)?;
    write_file(&dir.join("eval.json"), &text)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornersReport {
    pub sample: Vec<f64>,
    pub search: CornerSearch,
    pub particles: ParticleSet,
    pub estimate: PolytopeEstimate,
}

fn read_sample(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| config_err("--sample", "file is empty"))?;
    line.split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("non-numeric cell `{c}`"),
                })
        })
        .collect()
}

pub fn cmd_corners(args: &CornersArgs) -> Result<CornersReport> {
    let model = load_checkpoint(&args.checkpoint)?;
    let (x, cfg) = match (&args.sample, args.index) {
        (Some(path), _) => {
            let cfg = match &args.data.config {
                Some(p) => Some(RunConfig::load(p)?),
                None => None,
            };
            (read_sample(path)?, cfg)
        }
        (None, Some(i)) => {
            let (data, cfg) = select_data(&args.data)?;
            if i >= data.len() {
                return Err(config_err(
                    "--index",
                    format!("sample {i} out of range for {} samples", data.len()),
                ));
            }
            (data.features().row(i).to_vec(), cfg)
        }
        (None, None) => return Err(config_err("--index/--sample", "one of them is required")),
    };
    if x.len() != model.input_dim() {
        return Err(config_err(
            "--sample",
            format!("sample has {} features, model expects {}", x.len(), model.input_dim()),
        ));
    }
    let base = cfg.as_ref().map(|c| c.train.polytope);
    let epsilon = args
        .epsilon
        .or(base.map(|p| p.epsilon))
        .ok_or_else(|| config_err("--epsilon", "required without --config"))?;
    let seed = args.data.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let budget = PerturbationBudget::new(epsilon, base.and_then(|p| p.input_clip))
        .map_err(|e| config_err("--epsilon", e.to_string()))?;
    let mut search = CornerSearch::new(budget, seed);
    if let Some(p) = base {
        search.particles = p.particles;
        search.steps = p.steps;
        search.eta = p.eta;
    }
    search.particles = args.particles.unwrap_or(search.particles);
    search.steps = args.steps.unwrap_or(search.steps);
    search.eta = args.eta.unwrap_or(search.eta);
    search
        .validate()
        .map_err(|e| config_err("corner search", e.to_string()))?;

    let (particles, estimate) = find_corners(&model, &x, &search)?;
    let dir = out_dir(&args.out, cfg.as_ref(), ".");
    ensure_dir(&dir)?;
    let report = CornersReport {
        sample: x,
        search,
        particles,
        estimate,
    };
    write_file(&dir.join("estimate.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    let title = format!("{} corners, diameter {:.4}", report.estimate.corners.len(), report.estimate.diameter);
    match corners_svg(&report.estimate, &title) {
        Some(svg) => write_file(&dir.join("corners.svg"), &svg)?,
        None => eprintln!(
            "warning: model emits {} logits; scatter plots need 2 or 3, wrote JSON only",
            model.output_dim()
        ),
    }
    println!("diameter {:.6}", report.estimate.diameter);
    Ok(report)
}

/// One column group of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub config: String,
    pub trainer: String,
    pub status: String,
    pub clean: Option<f64>,
    pub attacks: Vec<EvalResult>,
    pub mean_diameter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub seed: u64,
    pub complete: bool,
    pub attack_suite: Vec<String>,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Trainer comparison (seed {})\n", self.seed);
        if !self.complete {
            let _ = writeln!(s, "**INCOMPLETE**: at least one run failed.\n");
        }
        let mut header = vec!["run".to_string(), "trainer".into(), "clean".into()];
        header.extend(self.attack_suite.iter().cloned());
        header.push("mean diameter".into());
        let _ = writeln!(s, "| {} |", header.join(" | "));
        let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
        for r in &self.rows {
            let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.2}%", 100.0 * v));
            let mut cells = vec![r.label.clone(), r.trainer.clone(), pct(r.clean)];
            for i in 0..self.attack_suite.len() {
                cells.push(pct(r.attacks.get(i).map(|a| a.accuracy)));
            }
            cells.push(r.mean_diameter.map_or("n/a".into(), |d| format!("{d:.4}")));
            if r.status != "ok" {
                cells[0] = format!("{} ({})", r.label, r.status);
            }
            let _ = writeln!(s, "| {} |", cells.join(" | "));
        }
        s
    }
}

fn compare_one(
    cfg: &RunConfig,
    dir: &Path,
    suite: &[AttackConfig],
    polytope: &PolytopeConfig,
) -> Result<(f64, Vec<EvalResult>, f64)> {
    let (model, _, _) = train_run(cfg, dir)?;
    let (_, test_set) = cfg.datasets()?;
    let clean = clean_accuracy(&model, &test_set)?;
    let attacks = suite
        .iter()
        .map(|a| evaluate(&model, &test_set, a))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<usize> = (0..test_set.len()).collect();
    let diameter = mean_diameter(&model, &test_set, &all, polytope, cfg.seed)?;
    Ok((clean, attacks, diameter))
}

/// Trains both configs with one seed and evaluates them on the first
/// config's attack suite and polytope settings. Writes `compare.json`,
/// `compare.md` and per-run subdirectories `a/` and `b/`.
pub fn cmd_compare(args: &CompareArgs) -> Result<CompareReport> {
    let mut cfg_a = RunConfig::load(&args.config_a)?;
    let mut cfg_b = RunConfig::load(&args.config_b)?;
    let seed = args.seed.unwrap_or(cfg_a.seed);
    cfg_a.set_seed(seed);
    cfg_b.set_seed(seed);
    let suite = cfg_a.attacks.clone();
    let polytope = cfg_a.train.polytope;
    let dir = out_dir(&args.out, None, "runs/compare");
    ensure_dir(&dir)?;

    let mut rows = Vec::new();
    let mut first_err = None;
    for (cfg, path, sub) in [(&cfg_a, &args.config_a, "a"), (&cfg_b, &args.config_b, "b")] {
        let mut row = CompareRow {
            label: cfg.label(),
            config: path.display().to_string(),
            trainer: cfg.train.trainer.to_string(),
            status: "ok".into(),
            clean: None,
            attacks: Vec::new(),
            mean_diameter: None,
        };
        match compare_one(cfg, &dir.join(sub), &suite, &polytope) {
            Ok((clean, attacks, diameter)) => {
                row.clean = Some(clean);
                row.attacks = attacks;
                row.mean_diameter = Some(diameter);
            }
            Err(e) => {
                row.status = format!("failed: {e}");
                first_err.get_or_insert(e);
            }
        }
        rows.push(row);
    }
    let report = CompareReport {
        seed,
        complete: first_err.is_none(),
        attack_suite: suite.iter().map(AttackConfig::label).collect(),
        rows,
    };
    write_file(&dir.join("compare.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    let md = report.markdown();
    write_file(&dir.join("compare.md"), &md)?;
    print!("{md}");
    match first_err {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
