use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use kae_core::data::{write_dataset_file, Split};
use kae_core::experiment::{
    estimate_theta_file, init_spectrum_report, run_experiment, ExperimentConfig, InitScheme,
};
use kae_core::model::{evaluate_horizons, KaeModel};
use kae_core::spectral::SpikeSlab;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Koopman autoencoder experiments with eigenvalue initialisation and penalty.
#[derive(Parser)]
#[command(name = "kae", version)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seeds with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured dataset and write it as a KDS1 file.
    GenData,
    /// Train every configured seed and write metrics.
    Train,
    /// Per-horizon test error of a saved model on the configured dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Longest horizon; defaults to the configured eval_horizon.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// DMD estimate of the eigeninit slab probability for a dataset.
    EstimateTheta {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        latent_dim: usize,
    },
    /// Eigenvalue-modulus histograms of initialisation schemes.
    InitSpectrum {
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Slab probability of the eigeninit scheme.
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
    },
    /// Compare finished experiment directories.
    Report { dirs: Vec<PathBuf> },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().context("this subcommand needs --config")?;
    let mut config = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    Ok(config)
}

fn single_seed(cli: &Cli, config: &ExperimentConfig) -> u64 {
    cli.seed.unwrap_or(config.seeds[0])
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn gen_data(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let seed = single_seed(cli, &config);
    let data = config.build_dataset(seed)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("data_{seed}.kds")));
    write_dataset_file(&out, &data)?;
    println!("wrote {} trajectories of dimension {} to {}", data.len(), data.dim(), out.display());
    Ok(())
}

fn train(cli: &Cli) -> Result<()> {
    let mut config = load_config(cli)?;
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    let outcome = run_experiment(&config)?;
    for (seed, r) in &outcome.seeds {
        match r {
            Ok(m) => println!(
                "seed {seed}: cumulative test error {:.6e}, convergence epoch {}",
                m.horizons.cumulative,
                m.convergence.map_or("none".to_string(), |e| e.to_string())
            ),
            Err(e) => println!("seed {seed}: failed: {e}"),
        }
    }
    println!("artifacts in {}", config.output_dir.display());
    Ok(())
}

fn eval(cli: &Cli, checkpoint: &Path, horizon: Option<usize>) -> Result<()> {
    let config = load_config(cli)?;
    let data = config.build_dataset(single_seed(cli, &config))?;
    let model = KaeModel::load(File::open(checkpoint).with_context(|| format!("opening {}", checkpoint.display()))?)?;
    let report = evaluate_horizons(&model, &data, Split::Test, horizon.unwrap_or(config.eval_horizon))?;
    let mut out = output(cli.out.as_deref())?;
    writeln!(out, "horizon,test_mse")?;
    for (l, e) in report.errors.iter().enumerate() {
        writeln!(out, "{},{e}", l + 1)?;
    }
    writeln!(out, "cumulative,{}", report.cumulative)?;
    out.flush()?;
    Ok(())
}

fn estimate_theta(data: &Path, latent_dim: usize) -> Result<()> {
    let est = estimate_theta_file(data, latent_dim)?;
    println!("theta_hat {}", est.theta);
    let moduli: Vec<String> = est.moduli.iter().map(|m| format!("{m:.6}")).collect();
    println!("moduli {}", moduli.join(" "));
    Ok(())
}

fn init_spectrum(cli: &Cli, n: usize, depth: usize, samples: usize, theta: f64) -> Result<()> {
    let schemes = [InitScheme::Eigeninit(SpikeSlab::new(theta)), InitScheme::Gaussian, InitScheme::Xavier];
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
    let report = init_spectrum_report(n, depth, &schemes, samples, &mut rng)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let mut hist = BufWriter::new(File::create(dir.join("init_spectrum.csv"))?);
    report.write_histogram(&mut hist)?;
    hist.flush()?;
    let mut summary = BufWriter::new(File::create(dir.join("init_spectrum_summary.csv"))?);
    report.write_summary(&mut summary)?;
    summary.flush()?;
    report.write_summary(io::stdout().lock())?;
    Ok(())
}

/// Named columns of the `mean` row of an `aggregate.csv`.
fn aggregate_means(dir: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(dir.join("aggregate.csv"))
        .with_context(|| format!("reading {}", dir.join("aggregate.csv").display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().context("empty aggregate.csv")?.split(',').collect();
    let mean = lines.find(|l| l.starts_with("mean,")).context("aggregate.csv has no mean row")?;
    Ok(header.iter().zip(mean.split(',')).map(|(h, v)| (h.to_string(), v.to_string())).collect())
}

fn report(dirs: &[PathBuf]) -> Result<()> {
    if dirs.is_empty() {
        bail!("report needs at least one experiment directory");
    }
    println!("{:<28} {:<10} {:>6} {:>12} {:>16} {:>16}", "run", "scheme", "ok", "convergence", "cumulative_err", "spectral_pen");
    for dir in dirs {
        let manifest: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.join("manifest.json")).with_context(|| format!("reading manifest in {}", dir.display()))?,
        )?;
        let scheme = manifest["scheme"].as_str().unwrap_or("?").to_string();
        let seeds = manifest["seeds"].as_array().map_or(0, Vec::len);
        let ok = manifest["seeds"].as_array().map_or(0, |s| s.iter().filter(|x| x["status"] == "ok").count());
        let means = aggregate_means(dir)?;
        let get = |name: &str| {
            means.iter().find(|(h, _)| h == name).map_or("-".to_string(), |(_, v)| {
                v.parse::<f64>().map_or("-".to_string(), |x| format!("{x:.4}"))
            })
        };
        println!(
            "{:<28} {:<10} {:>6} {:>12} {:>16} {:>16}",
            dir.display().to_string(),
            scheme,
            format!("{ok}/{seeds}"),
            get("convergence_epoch"),
            get("cumulative_error"),
            get("spectral_penalty")
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData => gen_data(cli),
        Command::Train => train(cli),
        Command::Eval { checkpoint, horizon } => eval(cli, checkpoint, *horizon),
        Command::EstimateTheta { data, latent_dim } => estimate_theta(data, *latent_dim),
        Command::InitSpectrum { n, depth, samples, theta } => init_spectrum(cli, *n, *depth, *samples, *theta),
        Command::Report { dirs } => report(dirs),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
