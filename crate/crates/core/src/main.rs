use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use shapedict::classifier::{build_meta, classify, ClassificationVector};
use shapedict::dataset::{generate_dataset, load_clouds, save_clouds, split};
use shapedict::experiment::{
    describe_all, describe_strict, evaluate, group_by_class, train_dictionaries, ExperimentConfig,
    Manifest,
};
use shapedict::{
    ClassRegistry, Coder, Dictionary, Error, ErrorKind, PointCloud, Result, ShapeClass,
};

#[derive(Parser)]
#[command(
    name = "shapedict",
    version,
    about = "Shape recognition with per-class sparse dictionaries"
)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic point-cloud dataset.
    Generate(Opts),
    /// Split a dataset and learn one dictionary per class.
    Train(InputOpts),
    /// Classify the test split and report the hit-rate matrix.
    Evaluate(InputOpts),
    /// Classify every cloud of a file and report per-sample class weights.
    Classify(InputOpts),
    /// Compute descriptors for every cloud of a file.
    Describe(InputOpts),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Opts {
    /// JSON experiment configuration; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Descriptor length N.
    #[arg(long)]
    n_descriptor: Option<usize>,
    /// Atoms per class K.
    #[arg(long)]
    atoms: Option<usize>,
    /// Sparsity budget T.
    #[arg(long)]
    nonzeros: Option<usize>,
    #[arg(long)]
    coder: Option<Coder>,
    /// Training fraction of the stratified split.
    #[arg(long)]
    split: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    per_class: Option<usize>,
    /// Radial noise as a fraction of the circumradius.
    #[arg(long)]
    jitter: Option<f64>,
    /// Divide each descriptor by its largest entry.
    #[arg(long)]
    normalize_scale: bool,
}

#[derive(Args)]
struct InputOpts {
    /// Point-cloud CSV.
    #[arg(long)]
    input: PathBuf,
    /// Directory holding dictionaries from `train` (defaults to --out-dir).
    #[arg(long)]
    dict_dir: Option<PathBuf>,
    #[command(flatten)]
    opts: Opts,
}

const EXPERIMENT_FILE: &str = "experiment.json";
const SPLIT_FILE: &str = "split.json";

#[derive(Serialize, Deserialize)]
struct SplitRecord {
    train: Vec<String>,
    test: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Generate(o) => cmd_generate(&o),
        Command::Train(o) => cmd_train(&o),
        Command::Evaluate(o) => cmd_evaluate(&o),
        Command::Classify(o) => cmd_classify(&o),
        Command::Describe(o) => cmd_describe(&o),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_file(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Layers a config file and explicit flags over `base`.
fn resolve(base: ExperimentConfig, o: &Opts) -> Result<ExperimentConfig> {
    let mut cfg = match &o.config {
        Some(path) => read_json(path)?,
        None => base,
    };
    if let Some(v) = o.n_descriptor {
        cfg.descriptor_len = v;
    }
    if let Some(v) = o.atoms {
        cfg.atoms = v;
    }
    if let Some(v) = o.nonzeros {
        cfg.nonzeros = v;
        cfg.classify_nonzeros = None;
    }
    if let Some(v) = o.coder {
        cfg.coder = v;
    }
    if let Some(v) = o.split {
        cfg.train_fraction = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
        cfg.generator.seed = v;
    }
    if let Some(v) = o.per_class {
        cfg.generator.per_class_count = v;
    }
    if let Some(v) = o.jitter {
        cfg.generator.jitter_std = v;
    }
    if o.normalize_scale {
        cfg.normalize_scale = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish_manifest(
    mut m: Manifest,
    dir: &Path,
    inputs: &[&Path],
    outputs: &[PathBuf],
) -> Result<()> {
    m.inputs = inputs.iter().map(|p| p.display().to_string()).collect();
    m.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    write_json(&dir.join(format!("{}.manifest.json", m.command)), &m)
}

fn cmd_generate(o: &Opts) -> Result<()> {
    let cfg = resolve(ExperimentConfig::default(), o)?;
    prepare_dir(&o.out_dir)?;
    let clouds = generate_dataset(&cfg.generator)?;
    let path = o.out_dir.join("clouds.csv");
    save_clouds(&clouds, &path)?;
    log::info!("wrote {} clouds to {}", clouds.len(), path.display());
    println!("generated {} clouds -> {}", clouds.len(), path.display());
    finish_manifest(
        Manifest::new("generate", &cfg.generator)?,
        &o.out_dir,
        &[],
        &[path],
    )
}

fn class_file(dir: &Path, class: ShapeClass) -> PathBuf {
    dir.join(format!("dict_{class}.json"))
}

fn cmd_train(io: &InputOpts) -> Result<()> {
    let o = &io.opts;
    let cfg = resolve(ExperimentConfig::default(), o)?;
    let clouds = load_clouds(&io.input)?;
    if clouds.is_empty() {
        return Err(Error::EmptyInput("input file holds no clouds"));
    }
    let (train, test) = split(&clouds, &cfg.split_config())?;
    let descriptors = describe_strict(&train, cfg.descriptor_len, cfg.normalize_scale)?;
    log::info!(
        "training {} coder on {} clouds ({} held out)",
        cfg.coder,
        train.len(),
        test.len()
    );
    let dicts = train_dictionaries(&group_by_class(descriptors), &cfg.learn_config())?;

    prepare_dir(&o.out_dir)?;
    let mut outputs = Vec::new();
    for (&class, d) in &dicts {
        let path = class_file(&o.out_dir, class);
        d.save(&path)?;
        outputs.push(path);
    }

    let mut log_rows = Vec::new();
    for (&class, d) in &dicts {
        if let Some(meta) = d.training_meta.as_ref() {
            for r in &meta.objective_log {
                log_rows.push((class, meta.solver_used, r));
            }
        }
    }
    let log_path = match o.format {
        Format::Csv => {
            let mut text = String::from(
                "class,coder,iteration,objective_coded,objective_updated,best_objective,replaced_atoms\n",
            );
            for (class, coder, r) in &log_rows {
                writeln!(
                    text,
                    "{class},{coder},{},{:e},{:e},{:e},{}",
                    r.iteration,
                    r.objective_coded,
                    r.objective_updated,
                    r.best_objective,
                    r.replaced_atoms.len()
                )
                .unwrap();
            }
            let p = o.out_dir.join("training_log.csv");
            write_file(&p, &text)?;
            p
        }
        Format::Json => {
            let logs: BTreeMap<String, _> = dicts
                .iter()
                .map(|(c, d)| (c.to_string(), d.training_meta.as_ref()))
                .collect();
            let p = o.out_dir.join("training_log.json");
            write_json(&p, &logs)?;
            p
        }
    };
    outputs.push(log_path);

    let split_path = o.out_dir.join(SPLIT_FILE);
    write_json(
        &split_path,
        &SplitRecord {
            train: train.iter().map(|c| c.source_id().to_string()).collect(),
            test: test.iter().map(|c| c.source_id().to_string()).collect(),
        },
    )?;
    let cfg_path = o.out_dir.join(EXPERIMENT_FILE);
    write_json(&cfg_path, &cfg)?;
    outputs.extend([split_path, cfg_path]);

    println!(
        "trained {} dictionaries ({}x{}, coder {}) -> {}",
        dicts.len(),
        cfg.descriptor_len,
        cfg.atoms,
        cfg.coder,
        o.out_dir.display()
    );
    finish_manifest(
        Manifest::new("train", &cfg)?,
        &o.out_dir,
        &[&io.input],
        &outputs,
    )
}

/// Base configuration for commands that consume trained dictionaries: the
/// one recorded by `train`, else the defaults.
fn trained_config(dict_dir: &Path) -> Result<ExperimentConfig> {
    let path = dict_dir.join(EXPERIMENT_FILE);
    if path.exists() {
        read_json(&path)
    } else {
        Ok(ExperimentConfig::default())
    }
}

fn load_dictionaries(dir: &Path) -> Result<BTreeMap<ShapeClass, Dictionary>> {
    let mut out = BTreeMap::new();
    for class in ShapeClass::ALL {
        let path = class_file(dir, class);
        if path.exists() {
            out.insert(class, Dictionary::load(&path)?);
        }
    }
    if out.is_empty() {
        return Err(Error::io(
            dir,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no dict_<class>.json files; run `train` first",
            ),
        ));
    }
    Ok(out)
}

fn cmd_evaluate(io: &InputOpts) -> Result<()> {
    let o = &io.opts;
    let dict_dir = io.dict_dir.clone().unwrap_or_else(|| o.out_dir.clone());
    let cfg = resolve(trained_config(&dict_dir)?, o)?;
    let dicts = load_dictionaries(&dict_dir)?;
    let clouds = load_clouds(&io.input)?;
    let split_path = dict_dir.join(SPLIT_FILE);
    let test: Vec<PointCloud> = if split_path.exists() {
        let record: SplitRecord = read_json(&split_path)?;
        let ids: std::collections::HashSet<&str> = record.test.iter().map(String::as_str).collect();
        clouds
            .into_iter()
            .filter(|c| ids.contains(c.source_id()))
            .collect()
    } else {
        log::warn!(
            "no {SPLIT_FILE} in {}; evaluating every cloud",
            dict_dir.display()
        );
        clouds
    };
    if test.is_empty() {
        return Err(Error::EmptyInput("no test clouds to evaluate"));
    }
    let test_d = group_by_class(describe_strict(
        &test,
        cfg.descriptor_len,
        cfg.normalize_scale,
    )?);
    let hrm =
        evaluate(&dicts, &test_d, cfg.classification_nonzeros(), cfg.coder).map_err(
            |e| match e {
                Error::MissingClass(c) => Error::InvalidConfig(format!(
                    "no dictionary for class {c}: expected {}",
                    class_file(&dict_dir, c).display()
                )),
                other => other,
            },
        )?;

    prepare_dir(&o.out_dir)?;
    let path = match o.format {
        Format::Csv => {
            let p = o.out_dir.join("hrm.csv");
            write_file(&p, &hrm.to_csv())?;
            p
        }
        Format::Json => {
            let p = o.out_dir.join("hrm.json");
            write_file(&p, &(hrm.to_json()? + "\n"))?;
            p
        }
    };
    print!("{}", hrm.to_ascii_heatmap());
    let rates: Vec<String> = hrm
        .classes
        .iter()
        .zip(&hrm.unclassified_rate)
        .map(|(c, r)| format!("{c}:{r:.3}"))
        .collect();
    println!(
        "coder {} T={} mean diagonal {:.4}; unclassified {}",
        cfg.coder,
        cfg.classification_nonzeros(),
        hrm.mean_diagonal(),
        rates.join(" ")
    );
    finish_manifest(
        Manifest::new("evaluate", &cfg)?,
        &o.out_dir,
        &[&io.input, &dict_dir],
        &[path],
    )
}

#[derive(Serialize)]
struct SampleReport {
    source_id: String,
    class: ShapeClass,
    weights: Vec<f64>,
    support_count: usize,
    label: Option<ShapeClass>,
    error: Option<String>,
}

fn cmd_classify(io: &InputOpts) -> Result<()> {
    let o = &io.opts;
    let dict_dir = io.dict_dir.clone().unwrap_or_else(|| o.out_dir.clone());
    let cfg = resolve(trained_config(&dict_dir)?, o)?;
    let dicts = load_dictionaries(&dict_dir)?;
    let registry = ClassRegistry::new(dicts.keys().copied());
    let meta = build_meta(&dicts, &registry)?;
    let clouds = load_clouds(&io.input)?;
    let t = cfg.classification_nonzeros();

    let descriptors = describe_all(&clouds, cfg.descriptor_len, cfg.normalize_scale);
    let reports: Vec<SampleReport> = clouds
        .iter()
        .zip(descriptors)
        .map(|(c, d)| {
            let r: Result<ClassificationVector> = d.and_then(|d| classify(&d, &meta, t, cfg.coder));
            match r {
                Ok(v) => SampleReport {
                    source_id: c.source_id().to_string(),
                    class: c.class_label(),
                    label: v.argmax().and_then(|i| registry.class_at(i)),
                    support_count: v.support_count,
                    weights: v.weights,
                    error: None,
                },
                Err(e) => {
                    log::warn!("cloud {:?}: {e}", c.source_id());
                    SampleReport {
                        source_id: c.source_id().to_string(),
                        class: c.class_label(),
                        weights: vec![0.0; registry.len()],
                        support_count: 0,
                        label: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();

    prepare_dir(&o.out_dir)?;
    let path = match o.format {
        Format::Csv => {
            let p = o.out_dir.join("classification.csv");
            let mut w = csv::Writer::from_path(&p)?;
            let mut header = vec!["source_id".to_string(), "class".to_string()];
            header.extend(registry.classes().iter().map(|c| format!("w_{c}")));
            header.extend(["support_count", "label", "error"].map(String::from));
            w.write_record(&header)?;
            for r in &reports {
                let mut row = vec![r.source_id.clone(), r.class.to_string()];
                row.extend(r.weights.iter().map(|v| format!("{v:.6}")));
                row.push(r.support_count.to_string());
                row.push(r.label.map_or(String::new(), |l| l.to_string()));
                row.push(r.error.clone().unwrap_or_default());
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| Error::io(&p, e))?;
            p
        }
        Format::Json => {
            let p = o.out_dir.join("classification.json");
            write_json(&p, &reports)?;
            p
        }
    };
    let failed = reports.iter().filter(|r| r.error.is_some()).count();
    println!(
        "classified {} clouds ({failed} failed) -> {}",
        reports.len(),
        path.display()
    );
    finish_manifest(
        Manifest::new("classify", &cfg)?,
        &o.out_dir,
        &[&io.input, &dict_dir],
        &[path],
    )
}

fn cmd_describe(io: &InputOpts) -> Result<()> {
    let o = &io.opts;
    let cfg = resolve(ExperimentConfig::default(), o)?;
    let clouds = load_clouds(&io.input)?;
    let descriptors = describe_all(&clouds, cfg.descriptor_len, cfg.normalize_scale);
    prepare_dir(&o.out_dir)?;
    let path = match o.format {
        Format::Csv => {
            let p = o.out_dir.join("descriptors.csv");
            let mut w = csv::Writer::from_path(&p)?;
            let mut header = vec!["source_id".to_string(), "class".to_string()];
            header.extend((0..cfg.descriptor_len).map(|i| format!("d{i}")));
            header.push("error".into());
            w.write_record(&header)?;
            for (c, d) in clouds.iter().zip(&descriptors) {
                let mut row = vec![c.source_id().to_string(), c.class_label().to_string()];
                match d {
                    Ok(d) => {
                        row.extend(d.values.iter().map(|v| v.to_string()));
                        row.push(String::new());
                    }
                    Err(e) => {
                        row.extend(std::iter::repeat_n(String::new(), cfg.descriptor_len));
                        row.push(e.to_string());
                    }
                }
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| Error::io(&p, e))?;
            p
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Row<'a> {
                source_id: &'a str,
                class: ShapeClass,
                values: Option<&'a [f64]>,
                error: Option<String>,
            }
            let rows: Vec<Row> = clouds
                .iter()
                .zip(&descriptors)
                .map(|(c, d)| Row {
                    source_id: c.source_id(),
                    class: c.class_label(),
                    values: d.as_ref().ok().map(|d| d.values.as_slice()),
                    error: d.as_ref().err().map(|e| e.to_string()),
                })
                .collect();
            let p = o.out_dir.join("descriptors.json");
            write_json(&p, &rows)?;
            p
        }
    };
    println!("described {} clouds -> {}", clouds.len(), path.display());
    finish_manifest(
        Manifest::new("describe", &cfg)?,
        &o.out_dir,
        &[&io.input],
        &[path],
    )
}
