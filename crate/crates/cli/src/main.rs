use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use ucrs_core::control::{train_category_predictor, CommandJson, PredictorConfig};
use ucrs_core::data::movielens;
use ucrs_core::data::synthetic::{generate, SyntheticConfig};
use ucrs_core::data::{
    load_dataset, load_interactions, load_item_categories, load_user_features, prepare, save_dataset, Dataset,
    DatasetManifest, ItemRow, PrepareConfig, RawInteraction, UserRow,
};
use ucrs_core::detect::{cohort_report, read_slates, write_slates, Grouping, Provenance, RecommendationSlate};
use ucrs_core::eval::{run_experiment, write_outputs, ExperimentConfig};
use ucrs_core::model::{train, FeatureLayout, ModelKind, Role, TrainConfig};
use ucrs_service::{control_response, ServingSnapshot, SnapshotSource, MODEL_FILE, PREDICTOR_FILE};

#[derive(Parser)]
#[command(name = "ucrs", version, about = "User-controllable recommendation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset preparation.
    #[command(subcommand)]
    Data(DataCommand),
    /// Train an FM or NFM scorer.
    Train(TrainArgs),
    /// Train the category predictor used by coarse item controls.
    TrainPredictor(PredictorArgs),
    /// Write baseline top-k slates for every user.
    Recommend(RecommendArgs),
    /// Accuracy and filter-bubble report over a slates file.
    Report(ReportArgs),
    /// Apply one control command and print the adjusted slate with its delta.
    Control(ControlArgs),
    /// Run an experiment described by a YAML config.
    Eval(EvalArgs),
    /// Serve a snapshot over HTTP.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum DataCommand {
    /// Filter, binarize, split and index tab-separated inputs.
    Prepare(PrepareArgs),
    /// Convert an ML-1M or ML-100K directory and prepare it.
    ImportMovielens(ImportArgs),
    /// Generate and prepare a seeded synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PrepareOpts {
    #[arg(long, default_value_t = 10)]
    kcore: usize,
    /// Ratings at or above this value are positives.
    #[arg(long, default_value_t = 4)]
    threshold: u8,
    /// Recorded in the manifest; preparation itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

impl PrepareOpts {
    fn config(&self) -> PrepareConfig {
        PrepareConfig {
            kcore: self.kcore,
            positive_threshold: self.threshold,
            ..PrepareConfig::default()
        }
    }
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    interactions: PathBuf,
    #[arg(long)]
    user_features: PathBuf,
    #[arg(long)]
    item_categories: PathBuf,
    /// Keep only the first listed category of each item.
    #[arg(long)]
    first_category_only: bool,
    #[command(flatten)]
    opts: PrepareOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ImportArgs {
    /// Directory holding `ratings.dat`/`users.dat`/`movies.dat` or `u.data`/`u.user`/`u.item`.
    #[arg(long)]
    src: PathBuf,
    #[command(flatten)]
    opts: PrepareOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 300)]
    items: usize,
    #[arg(long, default_value_t = 6)]
    categories: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "fm")]
    model: ModelKind,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train without a feature role: `user-attr` or `item-cat`.
    #[arg(long)]
    without: Vec<String>,
    /// Defaults to `<data>/model.bin`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictorArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Defaults to `<data>/predictor.bin`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    data: PathBuf,
    /// Defaults to `<data>/model.bin`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// One line per user: `user_id \t item1,item2,...`.
    #[arg(long)]
    slates: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// An attribute name, `majority-category` or `all`.
    #[arg(long, default_value = "all")]
    groupby: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Prints to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ControlArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    predictor: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    user: String,
    /// Command JSON file, or `-` for stdin.
    #[arg(long)]
    command: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Prepared dataset directory holding `model.bin` and optionally `predictor.bin`.
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Allowed browser origin; repeatable, `*` for any.
    #[arg(long)]
    cors_origin: Vec<String>,
    /// Attribute group bubble reports compare users by (defaults to the first).
    #[arg(long)]
    grouping: Option<String>,
}

/// Writes a line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    emit(&serde_json::to_string_pretty(value)?)
}

fn write_prepared(
    log: Vec<RawInteraction>,
    users: &[UserRow],
    items: &[ItemRow],
    cfg: PrepareConfig,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let (d, stats) = prepare(log, users, items, &cfg)?;
    let mut manifest = DatasetManifest::describe(&d);
    manifest.prepare = Some(cfg);
    manifest.stats = Some(stats);
    manifest.seed = seed;
    save_dataset(&d, out, &manifest).with_context(|| format!("writing {}", out.display()))?;
    print_json(&manifest)
}

fn data(cmd: DataCommand) -> Result<()> {
    match cmd {
        DataCommand::Prepare(a) => {
            let log = load_interactions(&a.interactions)?;
            let users = load_user_features(&a.user_features)?;
            let items = load_item_categories(&a.item_categories, a.first_category_only)?;
            write_prepared(log, &users, &items, a.opts.config(), a.opts.seed, &a.out)
        }
        DataCommand::ImportMovielens(a) => {
            let raw = a.out.join("raw");
            let (variant, files) = movielens::convert(&a.src, &raw)?;
            log::info!("converted {variant:?} into {}", raw.display());
            let log = load_interactions(&files.interactions)?;
            let users = load_user_features(&files.user_features)?;
            let items = load_item_categories(&files.item_categories, false)?;
            write_prepared(log, &users, &items, a.opts.config(), a.opts.seed, &a.out)
        }
        DataCommand::Synth(a) => {
            let cfg = SyntheticConfig {
                n_users: a.users,
                n_items: a.items,
                n_categories: a.categories,
                seed: a.seed,
                ..SyntheticConfig::default()
            };
            let (log, users, items) = generate(&cfg);
            write_prepared(log, &users, &items, PrepareConfig::default(), Some(a.seed), &a.out)
        }
    }
}

fn role(name: &str) -> Result<Role> {
    Ok(match name {
        "user-attr" => Role::UserAttr,
        "item-cat" => Role::ItemCat,
        other => bail!("cannot train without '{other}' (expected user-attr or item-cat)"),
    })
}

fn train_model(a: TrainArgs) -> Result<()> {
    let (d, _) = load_dataset(&a.data)?;
    let def = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: a.lr.unwrap_or(def.learning_rate),
        l2: a.l2.unwrap_or(def.l2),
        hidden: a.hidden.unwrap_or(def.hidden),
        dim: a.dim.unwrap_or(def.dim),
        epochs: a.epochs.unwrap_or(def.epochs),
        batch_size: a.batch_size.unwrap_or(def.batch_size),
        patience: a.patience.unwrap_or(def.patience),
        seed: a.seed.unwrap_or(def.seed),
        ..def
    };
    let mut layout = FeatureLayout::for_dataset(&d);
    for w in &a.without {
        layout = layout.without(role(w)?);
    }
    let (model, log) = train(&d, &cfg, a.model, layout)?;
    let out = a.out.unwrap_or_else(|| a.data.join(MODEL_FILE));
    model.save(&out, Some(cfg.seed))?;
    log::info!("saved {} to {}", a.model, out.display());
    print_json(&log)
}

fn train_predictor(a: PredictorArgs) -> Result<()> {
    let (d, _) = load_dataset(&a.data)?;
    let def = PredictorConfig::default();
    let cfg = PredictorConfig {
        hidden: a.hidden.unwrap_or(def.hidden),
        learning_rate: a.lr.unwrap_or(def.learning_rate),
        epochs: a.epochs.unwrap_or(def.epochs),
        seed: a.seed.unwrap_or(def.seed),
        ..def
    };
    let (pred, log) = train_category_predictor(&d, &cfg)?;
    let out = a.out.unwrap_or_else(|| a.data.join(PREDICTOR_FILE));
    pred.save(&out, Some(cfg.seed))?;
    log::info!("saved predictor to {}", out.display());
    print_json(&serde_json::json!({
        "n_users": log.n_users,
        "final_loss": log.epoch_loss.last(),
    }))
}

fn recommend(a: RecommendArgs) -> Result<()> {
    let model = a.model.unwrap_or_else(|| a.data.join(MODEL_FILE));
    let snap = ServingSnapshot::load(
        SnapshotSource {
            data: a.data.clone(),
            model,
            predictor: None,
        },
        None,
    )?;
    let slates: Vec<RecommendationSlate> = (0..snap.dataset.n_users() as u32)
        .map(|u| {
            let (ranked, short) = snap.rank_baseline(u, a.k);
            RecommendationSlate {
                user: u,
                items: ranked.iter().map(|r| r.item).collect(),
                scores: ranked.iter().map(|r| r.adjusted).collect(),
                provenance: Provenance::baseline(),
                short,
            }
        })
        .collect();
    write_slates(&a.out, &slates, &snap.dataset)?;
    log::info!("wrote {} slates to {}", slates.len(), a.out.display());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let (d, _): (Dataset, _) = load_dataset(&a.data)?;
    let slates = read_slates(&a.slates, &d)?;
    let grouping: Grouping = a.groupby.parse()?;
    let r = cohort_report(&d, &slates, &grouping, a.k)?;
    match a.out {
        Some(path) => {
            fs::write(&path, serde_json::to_vec_pretty(&r)?).with_context(|| format!("writing {}", path.display()))?;
            Ok(())
        }
        None => print_json(&r),
    }
}

fn control(a: ControlArgs) -> Result<()> {
    let text = if a.command.as_os_str() == "-" {
        std::io::read_to_string(std::io::stdin())?
    } else {
        fs::read_to_string(&a.command).with_context(|| format!("reading {}", a.command.display()))?
    };
    let command: CommandJson = serde_json::from_str(&text).context("parsing command JSON")?;
    let snap = ServingSnapshot::load(
        SnapshotSource {
            data: a.data,
            model: a.model,
            predictor: a.predictor,
        },
        None,
    )?;
    let resp = control_response(&snap, &a.user, &command, a.k)?;
    emit(&serde_json::to_string(&resp)?)?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let (d, out) = run_experiment(&cfg, None)?;
    write_outputs(&out, &d, &a.out)?;
    emit(&out.table.render_text())?;
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .with_context(|| format!("bad listen address {}:{}", a.host, a.port))?;
    let snap = ServingSnapshot::load(SnapshotSource::dir(&a.snapshot), a.grouping)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(ucrs_service::serve(addr, snap, &a.cors_origin))?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Data(c) => data(c),
        Command::Train(a) => train_model(a),
        Command::TrainPredictor(a) => train_predictor(a),
        Command::Recommend(a) => recommend(a),
        Command::Report(a) => report(a),
        Command::Control(a) => control(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a),
    }
}
