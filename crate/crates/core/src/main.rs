use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lanetraj::harness::{
    eval_split, evaluate, prepare_scenes, render_svg, run_ablation, train_split, Config, HarnessError, TrainCheckpoint,
    Trainer,
};
use lanetraj::metrics::maneuver_stats;
use lanetraj::scenario::{read_dataset, write_dataset, ManeuverMix, Scene};

#[derive(Parser)]
#[command(name = "lanetraj", version, about = "Lane-guided multimodal trajectory prediction on synthetic scenes")]
struct Cli {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config file and LANETRAJ_OUT_DIR).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Sets both the scenario seed and the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write train.jsonl and eval.jsonl.
    Generate(GenerateArgs),
    /// Train a model, writing checkpoint.json and train_log.jsonl.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the evaluation split.
    Eval(EvalArgs),
    /// Train and evaluate the four TPA / lane-loss variants.
    Ablate(AblateArgs),
    /// Draw scenes with predictions as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Size of the training split.
    #[arg(long)]
    train_scenes: Option<usize>,
    /// Size of the evaluation split.
    #[arg(long)]
    eval_scenes: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Sample maneuvers uniformly instead of the configured mix.
    #[arg(long)]
    uniform: bool,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// First (0-based) epoch that runs at the decayed learning rate.
    #[arg(long)]
    lr_decay_epoch: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training scenes; defaults to <out>/train.jsonl, generated if absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Disable the proposal stage.
    #[arg(long)]
    no_tpa: bool,
    /// Drop the lane loss from the objective.
    #[arg(long)]
    no_lane_loss: bool,
    /// Continue from a training checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Defaults to <out>/checkpoint.json.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Defaults to <out>/eval.jsonl, generated if absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Values of k, e.g. `--k 6 --k 1`.
    #[arg(long = "k")]
    ks: Vec<usize>,
}

#[derive(Args)]
struct AblateArgs {
    /// Number of seeds per variant.
    #[arg(long)]
    seeds: Option<usize>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

#[derive(Args)]
struct PlotArgs {
    /// Defaults to <out>/checkpoint.json.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Defaults to <out>/eval.jsonl, generated if absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Scene positions in the dataset, e.g. `--scenes 0,4,7`.
    #[arg(long, value_delimiter = ',')]
    scenes: Vec<usize>,
}

fn apply_data(cfg: &mut Config, a: &DataArgs) {
    if let Some(n) = a.train_scenes {
        cfg.data.train_scenes = n;
    }
    if let Some(n) = a.eval_scenes {
        cfg.data.eval_scenes = n;
    }
}

fn apply_schedule(cfg: &mut Config, a: &ScheduleArgs) {
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = a.lr_decay_epoch {
        cfg.train.lr_decay_epoch = v;
    }
}

fn resolve(cli: &Cli) -> Result<Config, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.apply_env();
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.scenario.seed = seed;
        cfg.train.seed = seed;
    }
    match &cli.command {
        Command::Generate(a) => {
            apply_data(&mut cfg, &a.data);
            if a.uniform {
                cfg.scenario.maneuver_mix = ManeuverMix::uniform();
            }
        }
        Command::Train(a) => {
            apply_schedule(&mut cfg, &a.schedule);
            if a.no_tpa {
                cfg.model.use_tpa = false;
            }
            if a.no_lane_loss {
                cfg.train.objective.lane_loss = false;
            }
        }
        Command::Eval(a) => {
            if !a.ks.is_empty() {
                cfg.eval.ks = a.ks.clone();
            }
        }
        Command::Ablate(a) => {
            apply_data(&mut cfg, &a.data);
            apply_schedule(&mut cfg, &a.schedule);
            if let Some(n) = a.seeds {
                cfg.ablate.seeds = n;
            }
        }
        Command::Plot(a) => {
            if !a.scenes.is_empty() {
                cfg.plot.scenes = a.scenes.clone();
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_or_generate(
    path: &Path,
    explicit: bool,
    generate: impl FnOnce() -> Result<Vec<Scene>, HarnessError>,
) -> Result<Vec<Scene>, HarnessError> {
    if explicit || path.exists() {
        eprintln!("reading {}", path.display());
        Ok(read_dataset(path)?)
    } else {
        eprintln!("{} not found, generating", path.display());
        let scenes = generate()?;
        write_dataset(path, &scenes)?;
        Ok(scenes)
    }
}

fn cmd_generate(cfg: &Config) -> Result<(), HarnessError> {
    let out = &cfg.out_dir;
    let train = train_split(&cfg.scenario, &cfg.data)?;
    let eval = eval_split(&cfg.scenario, &cfg.data)?;
    write_dataset(out.join("train.jsonl"), &train)?;
    write_dataset(out.join("eval.jsonl"), &eval)?;
    let stats = maneuver_stats(train.iter().chain(&eval).map(|s| s.maneuver));
    write(&out.join("dataset_stats.json"), &serde_json::to_string_pretty(&stats)?)?;
    println!("wrote {} training and {} evaluation scenes to {}", train.len(), eval.len(), out.display());
    for (m, f) in &stats.fractions {
        println!("  {m:<18} {f:.4}");
    }
    Ok(())
}

fn cmd_train(cfg: &Config, args: &TrainArgs) -> Result<(), HarnessError> {
    let out = &cfg.out_dir;
    let path = args.dataset.clone().unwrap_or_else(|| out.join("train.jsonl"));
    let scenes = load_or_generate(&path, args.dataset.is_some(), || train_split(&cfg.scenario, &cfg.data))?;
    let mut trainer = match &args.resume {
        Some(p) => {
            let ckpt = TrainCheckpoint::load(p)?;
            eprintln!("resuming after epoch {}", ckpt.epochs_completed);
            Trainer::resume(&ckpt, cfg.train.clone())?
        }
        None => Trainer::new(cfg.model.clone(), cfg.train.clone())?,
    };
    let data = prepare_scenes(trainer.model().config(), &cfg.targets, &scenes)?;
    let ckpt_path = out.join("checkpoint.json");
    let log_path = out.join("train_log.jsonl");
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(args.resume.is_some())
        .truncate(args.resume.is_none())
        .open(&log_path)
        .map_err(|source| HarnessError::Io {
            path: log_path.clone(),
            source,
        })?;
    trainer.checkpoint().save(&ckpt_path)?;
    let start = std::time::Instant::now();
    trainer.train(&data, |entry, t| {
        let line = serde_json::to_string(entry)?;
        writeln!(log, "{line}").map_err(|source| HarnessError::Io {
            path: log_path.clone(),
            source,
        })?;
        eprintln!("{line}  [{:.1}s]", start.elapsed().as_secs_f64());
        t.checkpoint().save(&ckpt_path)
    })?;
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}

fn load_model(cfg: &Config, checkpoint: &Option<PathBuf>) -> Result<lanetraj::model::Model, HarnessError> {
    let path = checkpoint.clone().unwrap_or_else(|| cfg.out_dir.join("checkpoint.json"));
    TrainCheckpoint::load(&path)?.to_model()
}

fn eval_scenes(cfg: &Config, dataset: &Option<PathBuf>) -> Result<Vec<Scene>, HarnessError> {
    let path = dataset.clone().unwrap_or_else(|| cfg.out_dir.join("eval.jsonl"));
    load_or_generate(&path, dataset.is_some(), || eval_split(&cfg.scenario, &cfg.data))
}

fn cmd_eval(cfg: &Config, args: &EvalArgs) -> Result<(), HarnessError> {
    let model = load_model(cfg, &args.checkpoint)?;
    let scenes = eval_scenes(cfg, &args.dataset)?;
    let data = prepare_scenes(model.config(), &cfg.targets, &scenes)?;
    let report = evaluate(&model, &data, &cfg.eval.ks)?;
    write(&cfg.out_dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    let table = report.to_markdown();
    write(&cfg.out_dir.join("report.md"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_ablate(cfg: &Config) -> Result<(), HarnessError> {
    let start = std::time::Instant::now();
    let report = run_ablation(cfg, |variant, seed, log| {
        eprintln!(
            "[seed {seed}] {variant:<18} epoch {:>2} lr {:.0e} total {:.4}  [{:.0}s]",
            log.epoch,
            log.lr,
            log.total,
            start.elapsed().as_secs_f64()
        );
    })?;
    write(&cfg.out_dir.join("ablation.json"), &serde_json::to_string_pretty(&report)?)?;
    let table = report.to_markdown();
    write(&cfg.out_dir.join("ablation.md"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_plot(cfg: &Config, args: &PlotArgs) -> Result<(), HarnessError> {
    let model = load_model(cfg, &args.checkpoint)?;
    let scenes = eval_scenes(cfg, &args.dataset)?;
    let dir = cfg.out_dir.join("plots");
    std::fs::create_dir_all(&dir).map_err(|source| HarnessError::Io {
        path: dir.clone(),
        source,
    })?;
    for &i in &cfg.plot.scenes {
        let scene = scenes
            .get(i)
            .ok_or_else(|| HarnessError::Config(format!("scene {i} out of range (dataset has {})", scenes.len())))?;
        let prepared = lanetraj::harness::prepare_scene(model.config(), &cfg.targets, scene)?;
        let forecast = model.predict(&prepared.input)?.swap_remove(scene.target);
        let path = dir.join(format!("scene_{i:04}.svg"));
        write(&path, &render_svg(scene, Some(&forecast), cfg.plot.scale))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = resolve(cli)?;
    let name = match &cli.command {
        Command::Generate(_) => "generate",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Ablate(_) => "ablate",
        Command::Plot(_) => "plot",
    };
    cfg.write_resolved(name)?;
    match &cli.command {
        Command::Generate(_) => cmd_generate(&cfg),
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::Ablate(_) => cmd_ablate(&cfg),
        Command::Plot(a) => cmd_plot(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
