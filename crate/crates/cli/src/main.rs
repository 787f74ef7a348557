use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use scanlab_collect::CollectConfig;
use scanlab_core::dataset::{click_count_histogram, load_observations, summarize};
use scanlab_core::experiment::{self, ExperimentConfig, OverlayStyle};

#[derive(Parser)]
#[command(
    name = "scanlab",
    version,
    about = "Scanpath simulation and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and score scanpaths for every model in a config (TOML, or a
    /// run's manifest.json to repeat it).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to a timestamped directory under the
        /// config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the SPP reports of a run from its scanpath files.
    Evaluate {
        #[arg(long)]
        runs: PathBuf,
    },
    /// Print dataset statistics for an observation file as JSON.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Draw the scanpaths of one image from a run.
    Render {
        #[arg(long)]
        image: String,
        #[arg(long)]
        runs: PathBuf,
        /// Comma-separated model names; all models when omitted.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
    },
    /// Serve the click-contingent caption collection API.
    Serve {
        #[arg(long, env = "SCANLAB_IMAGES")]
        images: PathBuf,
        #[arg(long, env = "SCANLAB_OUTPUT")]
        output: PathBuf,
        #[arg(long, env = "SCANLAB_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "SCANLAB_PPD", default_value_t = scanlab_core::model::DEFAULT_PIXELS_PER_DEGREE)]
        pixels_per_degree: f64,
        #[arg(long, env = "SCANLAB_BLUR_SIGMA", default_value_t = 16.0)]
        blur_sigma: f64,
        #[arg(long, default_value_t = 24.0)]
        expiry_hours: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let dir = experiment::run(&cfg, out.as_deref())?;
            println!("{}", dir.display());
        }
        Command::Evaluate { runs } => {
            experiment::evaluate(&runs)?;
            println!("{}", runs.join("table.csv").display());
        }
        Command::Stats { dataset } => {
            let (obs, errors) = load_observations(&dataset)?;
            for e in &errors {
                eprintln!("{}: line {}: {}", dataset.display(), e.line, e.message);
            }
            let summary = summarize(&obs)?;
            let (kept, _) = scanlab_core::dataset::apply_exclusions(&obs);
            let report = serde_json::json!({
                "summary": summary,
                "click_count_histogram": click_count_histogram(&kept),
                "malformed_lines": errors.len(),
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Render {
            image,
            runs,
            models,
        } => {
            let out =
                experiment::render_run(&runs, &image, models.as_deref(), &OverlayStyle::default())?;
            println!("{}", out.display());
        }
        Command::Serve {
            images,
            output,
            port,
            pixels_per_degree,
            blur_sigma,
            expiry_hours,
            seed,
        } => {
            if !(expiry_hours > 0.0) {
                bail!("expiry must be positive");
            }
            let mut config = CollectConfig::new(images, output);
            config.pixels_per_degree = pixels_per_degree;
            config.blur_sigma = blur_sigma;
            config.session_expiry = Duration::from_secs_f64(expiry_hours * 3600.0);
            config.seed = seed;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(scanlab_collect::serve(&config, &format!("0.0.0.0:{port}")))?;
        }
    }
    Ok(())
}
