mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vesselreg::components::count_components;
use vesselreg::data::{load_grayscale, synth_dataset, Dataset, DatasetLayout};
use vesselreg::grid_graph::{Connectivity, GridShape};
use vesselreg::metrics::MetricsReport;
use vesselreg::regularizers::{euler_characteristic_hard, EcDirection};
use vesselreg::segnet::{load_checkpoint, save_checkpoint, NetworkSpec, ParamSet};
use vesselreg::trainer::{evaluate, train, Validation};
use vesselreg::{Error, Result};

use config::{parse_shape, CliConfig};

/// Segmentation training with pixel-relationship regularizers.
#[derive(Parser)]
#[command(name = "vesselreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write checkpoint, log and resolved config.
    Train(RunArgs),
    /// Evaluate a checkpoint: prints `name,sn,sp,acc,auc` and writes roc.csv.
    Eval(EvalArgs),
    /// Euler characteristics of a thresholded image.
    Ec(EcArgs),
    /// Write a synthetic vessel dataset.
    Synth(SynthArgs),
}

/// Flags mirror the config-file keys and override them.
#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_name = "baseline|o1|o2|o3")]
    objective: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Generate N synthetic images instead of reading --data.
    #[arg(long, value_name = "N")]
    synthetic: Option<String>,
    #[arg(long, value_name = "DIR")]
    data: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long, value_name = "BOOL")]
    fov_only: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    patches_per_image: Option<String>,
    #[arg(long)]
    patch_size: Option<String>,
    #[arg(long, value_name = "none|per_edge|per_pixel")]
    normalize: Option<String>,
    #[arg(long, value_name = "4|8")]
    connectivity: Option<String>,
    #[arg(long)]
    depth: Option<String>,
    #[arg(long)]
    base_channels: Option<String>,
    #[arg(long)]
    synth_seed: Option<String>,
    #[arg(long, value_name = "HxW")]
    synth_shape: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 20] {
        [
            ("objective", &self.objective),
            ("lambda", &self.lambda),
            ("epochs", &self.epochs),
            ("seed", &self.seed),
            ("synthetic", &self.synthetic),
            ("data", &self.data),
            ("out", &self.out),
            ("threads", &self.threads),
            ("fov-only", &self.fov_only),
            ("threshold", &self.threshold),
            ("lr", &self.lr),
            ("batch-size", &self.batch_size),
            ("patches-per-image", &self.patches_per_image),
            ("patch-size", &self.patch_size),
            ("normalize", &self.normalize),
            ("connectivity", &self.connectivity),
            ("depth", &self.depth),
            ("base-channels", &self.base_channels),
            ("synth-seed", &self.synth_seed),
            ("synth-shape", &self.synth_shape),
        ]
    }

    fn resolve(&self) -> Result<CliConfig> {
        let mut cfg = CliConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Row label; defaults to the checkpoint file stem.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value = "test", value_name = "train|test|all")]
    split: String,
}

#[derive(Args)]
struct EcArgs {
    image: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct SynthArgs {
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "64x64", value_name = "HxW")]
    shape: String,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        Error::NonFinite(_) => 4,
        _ => 3,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn load_data(cfg: &CliConfig) -> Result<Dataset> {
    match (&cfg.data, cfg.synthetic) {
        (Some(_), Some(_)) => Err(Error::Config("--data and --synthetic are mutually exclusive".into())),
        (Some(dir), None) => DatasetLayout::new(dir).load(),
        (None, Some(n)) => {
            let (h, w) = cfg.synth_shape;
            synth_dataset(n, cfg.synth_seed, GridShape::new(h, w)?)
        }
        (None, None) => Err(Error::Config("no dataset: pass --data DIR or --synthetic N".into())),
    }
}

fn write_roc(dir: &Path, report: &MetricsReport) -> Result<()> {
    let path = dir.join("roc.csv");
    let mut buf = Vec::new();
    report.roc.write_csv(&mut buf).map_err(io_err(&path))?;
    write_file(&path, &buf)
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let data = load_data(&cfg)?;
    if data.train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    write_file(&cfg.out.join("config.txt"), cfg.render().as_bytes())?;

    let validation = (!data.test.is_empty()).then_some(Validation {
        samples: &data.test,
        threshold: cfg.threshold,
        fov_only: cfg.fov_only,
    });
    let (params, log) = train(&data.train, &cfg.network, &cfg.train, validation)?;
    for r in &log.epochs {
        eprintln!(
            "epoch {}/{} lr {:e} loss {:.6} bce {:.6} reg {:.6}",
            r.epoch + 1,
            cfg.train.epochs,
            r.lr,
            r.loss,
            r.bce,
            r.reg_value
        );
    }
    save_checkpoint(&cfg.out.join("model.ckpt"), &cfg.network, &params)?;
    let log_path = cfg.out.join("train_log.csv");
    let mut buf = Vec::new();
    log.write_csv(&mut buf).map_err(io_err(&log_path))?;
    write_file(&log_path, &buf)?;

    if !data.test.is_empty() {
        let report = evaluate(&params, &cfg.network, &data.test, cfg.threshold, cfg.fov_only)?;
        write_roc(&cfg.out, &report)?;
        println!("{}", report.table_row(cfg.train.objective.name()));
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let (spec, params): (NetworkSpec, ParamSet<f32>) = load_checkpoint(&args.checkpoint)?;
    let data = load_data(&cfg)?;
    let samples = match args.split.as_str() {
        "train" => data.train,
        "test" => data.test,
        "all" => data.train.into_iter().chain(data.test).collect(),
        other => return Err(Error::Config(format!("unknown split '{other}'"))),
    };
    let report = evaluate(&params, &spec, &samples, cfg.threshold, cfg.fov_only)?;
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    write_file(&cfg.out.join("config.txt"), cfg.render().as_bytes())?;
    write_roc(&cfg.out, &report)?;
    let name = args.name.clone().unwrap_or_else(|| {
        args.checkpoint
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into())
    });
    println!("{}", report.table_row(&name));
    Ok(())
}

fn cmd_ec(args: &EcArgs) -> Result<()> {
    let image = load_grayscale(&args.image)?;
    let binary: Vec<f64> = image
        .pixels
        .iter()
        .map(|&v| if v >= args.threshold { 1.0 } else { 0.0 })
        .collect();
    let ec1 = euler_characteristic_hard(image.shape, &binary, EcDirection::Dir1)?;
    let ec2 = euler_characteristic_hard(image.shape, &binary, EcDirection::Dir2)?;
    let mask: Vec<bool> = binary.iter().map(|&v| v == 1.0).collect();
    let components = count_components(&mask, image.shape, Connectivity::N8)?;
    println!("{ec1} {ec2} {:.1} {components}", (ec1 + ec2) as f64 / 2.0);
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let (h, w) = parse_shape(&args.shape)?;
    let data = synth_dataset(args.count, args.seed, GridShape::new(h, w)?)?;
    DatasetLayout::new(&args.out).write(&data)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ec(a) => cmd_ec(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
