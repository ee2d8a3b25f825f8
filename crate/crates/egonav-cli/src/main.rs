//! `egonav` — run navigation suites, score record files, sweep
//! ablations, and generate world files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use egonav::config::EvalConfig;
use egonav::harness::{
    ablation_plot_points, generate_world_suite, metrics_from_lines, parse_record_lines,
    record_lines, render_record_lines, run_ablation, run_suite, scripted_components,
    standard_suite, train_planning_sampler, write_plot_data, AblationParam, AblationSpec,
    GeneratorConfig, MetricsSummary, PlanningSampler, SamplerTrainingSpec, WorldFamily,
};
use egonav::manager::{PipelineConfig, RunLimits};
use egonav::worldsim::{load_episode, serialize_episode, Episode};

#[derive(Parser)]
#[command(name = "egonav", version, about = "Navigation pipeline evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonRunArgs {
    /// Config file (`key = value`); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Suite seed for run randomness.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Worker threads; defaults to the logical core count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every episode and print record lines plus a summary block.
    Run {
        /// Episode file or directory of episode files.
        #[arg(long)]
        episodes: PathBuf,
        #[command(flatten)]
        common: CommonRunArgs,
        /// Also write the record lines to this file.
        #[arg(long)]
        records_out: Option<PathBuf>,
    },
    /// Recompute metrics from a record-line file.
    Eval {
        #[arg(long)]
        records: PathBuf,
    },
    /// Sweep one parameter over a value list, one suite per value x seed.
    Ablate {
        /// Parameter to sweep: ctn, irl, or egoview.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `1,2,4` or `none,full`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Comma-separated run seeds.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        /// Episode file or directory; a generated standard suite when
        /// omitted.
        #[arg(long)]
        episodes: Option<PathBuf>,
        #[command(flatten)]
        common: CommonRunArgs,
        /// Write mean-SR-per-value plot data (two-column text) here.
        #[arg(long)]
        plot_out: Option<PathBuf>,
    },
    /// Generate a world suite as one episode file per episode.
    Gen {
        /// World family: corridor, rooms, or maze.
        #[arg(long)]
        family: String,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { episodes, common, records_out } => run_command(&episodes, &common, records_out.as_deref()),
        Command::Eval { records } => eval_command(&records),
        Command::Ablate { param, values, seeds, episodes, common, plot_out } => {
            ablate_command(&param, values, seeds, episodes.as_deref(), &common, plot_out.as_deref())
        }
        Command::Gen { family, count, seed, out } => gen_command(&family, count, seed, &out),
    }
}

fn load_config(path: Option<&Path>) -> Result<EvalConfig> {
    match path {
        Some(p) => EvalConfig::from_file(p).with_context(|| format!("config {}", p.display())),
        None => Ok(EvalConfig::default()),
    }
}

/// Loads one episode file or every episode file in a directory
/// (lexicographic order).
fn load_episodes(path: &Path) -> Result<Vec<Episode>> {
    let mut episodes = Vec::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .map(|entry| Ok(entry?.path()))
            .collect::<Result<_>>()?;
        files.retain(|p| p.is_file());
        files.sort();
        for file in files {
            episodes.push(load_one_episode(&file)?);
        }
        if episodes.is_empty() {
            bail!("no episode files in {}", path.display());
        }
    } else {
        episodes.push(load_one_episode(path)?);
    }
    Ok(episodes)
}

fn load_one_episode(path: &Path) -> Result<Episode> {
    let text = fs::read_to_string(path)?;
    let episode =
        load_episode(&text).with_context(|| format!("episode {}", path.display()))?;
    episode.validate().with_context(|| format!("episode {}", path.display()))?;
    Ok(episode)
}

/// Restores the sampler from the configured checkpoint, or trains the
/// default one from scratch.
fn build_sampler(cfg: &EvalConfig) -> Result<PlanningSampler> {
    let spec = SamplerTrainingSpec::default();
    if let Some(path) = &cfg.denoiser_checkpoint {
        let sampler = PlanningSampler::from_checkpoint(
            path,
            cfg.noise_schedule(),
            spec.xy_scale,
            spec.yaw_scale,
        )
        .with_context(|| format!("checkpoint {}", path.display()))?;
        log::info!("loaded denoiser checkpoint {}", path.display());
        return Ok(sampler);
    }
    log::info!("no denoiser checkpoint configured; training the default sampler");
    let (sampler, loss) = train_planning_sampler(&spec)?;
    log::info!("trained default sampler, final loss {loss:.5}");
    Ok(sampler)
}

/// Installs a sized rayon pool when requested and runs `body` inside it.
fn with_workers<T: Send>(workers: Option<usize>, body: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(body()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(body))
        }
    }
}

fn print_summary(summary: &MetricsSummary) {
    println!("# summary");
    println!("episodes = {}", summary.n_episodes);
    println!("tl = {:.3}", summary.tl);
    println!("ne = {:.3}", summary.ne);
    println!("osr = {:.1}", summary.osr);
    println!("sr = {:.1}", summary.sr);
    println!("spl = {:.1}", summary.spl);
}

fn run_command(episodes: &Path, common: &CommonRunArgs, records_out: Option<&Path>) -> Result<()> {
    let cfg = load_config(common.config.as_deref())?;
    let episodes = load_episodes(episodes)?;
    let sampler = build_sampler(&cfg)?;
    let bundle = scripted_components(Box::new(sampler), cfg.pipeline_config());
    let limits = cfg.run_limits();
    let seed = common.seed;
    let result =
        with_workers(common.workers, || run_suite(&episodes, &bundle, &limits, seed))??;
    let lines = record_lines(&result.records, &episodes)?;
    let rendered = render_record_lines(&lines);
    print!("{rendered}");
    if let Some(path) = records_out {
        fs::write(path, &rendered)?;
    }
    print_summary(&result.summary);
    Ok(())
}

fn eval_command(records: &Path) -> Result<()> {
    let text = fs::read_to_string(records)?;
    let lines = parse_record_lines(&text)?;
    print_summary(&metrics_from_lines(&lines)?);
    Ok(())
}

fn ablate_command(
    param: &str,
    values: Vec<String>,
    seeds: Vec<u64>,
    episodes: Option<&Path>,
    common: &CommonRunArgs,
    plot_out: Option<&Path>,
) -> Result<()> {
    let parameter: AblationParam = param.parse().map_err(anyhow::Error::msg)?;
    let cfg = load_config(common.config.as_deref())?;
    let episodes = match episodes {
        Some(path) => load_episodes(path)?,
        None => standard_suite(common.seed)?,
    };
    let sampler = build_sampler(&cfg)?;
    let base: PipelineConfig = cfg.pipeline_config();
    let limits: RunLimits = cfg.run_limits();
    let spec = AblationSpec { parameter, values, seeds };
    let rows = with_workers(common.workers, move || {
        run_ablation(&spec, &episodes, &base, &limits, &|cfg| {
            scripted_components(Box::new(sampler.clone()), cfg)
        })
    })??;
    for row in &rows {
        println!("{}", serde_json::to_string(row)?);
    }
    if let Some(path) = plot_out {
        write_plot_data(path, &ablation_plot_points(&rows))?;
        log::info!("wrote plot data to {}", path.display());
    }
    Ok(())
}

fn gen_command(family: &str, count: usize, seed: u64, out: &Path) -> Result<()> {
    let family: WorldFamily = family.parse().map_err(anyhow::Error::msg)?;
    let episodes = generate_world_suite(&GeneratorConfig::new(family, count), seed)?;
    fs::create_dir_all(out)?;
    for episode in &episodes {
        fs::write(out.join(format!("{}.ep", episode.id)), serialize_episode(episode))?;
    }
    println!("wrote {} episodes to {}", episodes.len(), out.display());
    Ok(())
}
