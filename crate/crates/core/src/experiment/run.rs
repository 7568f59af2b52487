use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{error, info};
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::metrics::{convergence_epoch, mean_std};
use super::{stream, ExperimentConfig, MODEL_STREAM};
use crate::data::Split;
use crate::error::{KaeError, Result};
use crate::linalg::{eigenvalues, Matrix};
use crate::model::{evaluate_horizons, train, HorizonReport, KaeModel, TrainLog};
use crate::spectral::eigenloss_value;

/// Everything measured in one seed's run.
#[derive(Clone, Debug)]
pub struct SeedMetrics {
    pub seed: u64,
    pub initial_koopman: Matrix,
    pub initial_moduli: Vec<f64>,
    pub log: TrainLog,
    pub horizons: HorizonReport,
    pub convergence: Option<usize>,
    /// Unweighted `Σ_j (|λ_j| − 1)²` of the trained `U`.
    pub spectral_penalty: f64,
    pub model: KaeModel,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SeedStatus {
    pub seed: u64,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    /// One entry per configured seed, in configuration order.
    pub seeds: Vec<(u64, std::result::Result<SeedMetrics, String>)>,
}

impl ExperimentOutcome {
    pub fn succeeded(&self) -> impl Iterator<Item = &SeedMetrics> {
        self.seeds.iter().filter_map(|(_, r)| r.as_ref().ok())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_sha256: String,
    version: &'static str,
    scheme: &'static str,
    config: &'a ExperimentConfig,
    seeds: Vec<SeedStatus>,
}

fn moduli(u: &Matrix) -> Result<Vec<f64>> {
    Ok(eigenvalues(u)?.iter().map(|l| l.norm()).collect())
}

/// Builds the dataset, initialises the model per scheme, trains and
/// evaluates one seed. Writes nothing.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedMetrics> {
    let data = config.build_dataset(seed)?;
    let arch = config.architecture(data.dim());
    let mut rng = stream(seed, MODEL_STREAM);
    let mut model = KaeModel::build(&arch, &config.koopman_init(), &mut rng)?;
    let initial_koopman = model.koopman_matrix().clone();
    let initial_moduli = moduli(&initial_koopman)?;
    let log = train(&mut model, &data, &config.train_config(seed))?;
    let horizons = evaluate_horizons(&model, &data, Split::Test, config.eval_horizon)?;
    let val = log.val_losses();
    let c = config.convergence;
    let convergence = if val.len() >= c.warmup + 2 { convergence_epoch(&val, c.tau, c.warmup)? } else { None };
    let spectral_penalty = eigenloss_value(model.koopman_matrix())?;
    Ok(SeedMetrics { seed, initial_koopman, initial_moduli, log, horizons, convergence, spectral_penalty, model })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_seed_files(dir: &Path, m: &SeedMetrics) -> Result<()> {
    let seed = m.seed;
    let mut out = create(dir, &format!("losses_{seed}.csv"))?;
    writeln!(out, "epoch,train_loss,val_loss,eigenloss_term")?;
    for e in &m.log.epochs {
        writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.eigenloss_term)?;
    }
    out.flush()?;

    let mut out = create(dir, &format!("eig_heatmap_{seed}.csv"))?;
    write!(out, "epoch")?;
    for j in 0..m.initial_moduli.len() {
        write!(out, ",lambda_{j}")?;
    }
    writeln!(out)?;
    let rows = std::iter::once((0, &m.initial_moduli)).chain(m.log.epochs.iter().map(|e| (e.epoch, &e.moduli)));
    for (epoch, moduli) in rows {
        write!(out, "{epoch}")?;
        for r in moduli {
            write!(out, ",{r}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;

    let mut out = create(dir, &format!("horizons_{seed}.csv"))?;
    writeln!(out, "horizon,test_mse")?;
    for (l, e) in m.horizons.errors.iter().enumerate() {
        writeln!(out, "{},{e}", l + 1)?;
    }
    out.flush()?;

    let mut out = create(dir, &format!("timing_{seed}.csv"))?;
    writeln!(out, "epoch,wall_ms")?;
    for e in &m.log.epochs {
        writeln!(out, "{},{}", e.epoch, e.wall_ms)?;
    }
    out.flush()?;

    m.model.save(create(dir, &format!("model_{seed}.kae"))?)
}

fn write_aggregate(dir: &Path, runs: &[&SeedMetrics], horizons: usize) -> Result<()> {
    let mut out = create(dir, "aggregate.csv")?;
    write!(out, "seed,final_train_loss,final_val_loss,convergence_epoch,spectral_penalty,cumulative_error")?;
    for l in 1..=horizons {
        write!(out, ",h_{l}")?;
    }
    writeln!(out)?;

    let last = |m: &SeedMetrics, f: fn(&crate::model::EpochRecord) -> f64| m.log.epochs.last().map_or(f64::NAN, f);
    let columns: Vec<Vec<f64>> = runs
        .iter()
        .map(|m| {
            let mut row = vec![
                last(m, |e| e.train_loss),
                last(m, |e| e.val_loss),
                m.convergence.map_or(f64::NAN, |e| e as f64),
                m.spectral_penalty,
                m.horizons.cumulative,
            ];
            row.extend(&m.horizons.errors);
            row
        })
        .collect();
    for (m, row) in runs.iter().zip(&columns) {
        write!(out, "{}", m.seed)?;
        for v in row {
            if v.is_nan() {
                write!(out, ",")?;
            } else {
                write!(out, ",{v}")?;
            }
        }
        writeln!(out)?;
    }
    let width = 5 + horizons;
    let stats: Vec<(f64, f64)> = (0..width)
        .map(|k| {
            let values: Vec<f64> = columns.iter().map(|row| row[k]).filter(|v| !v.is_nan()).collect();
            mean_std(&values)
        })
        .collect();
    for (label, pick) in [("mean", 0usize), ("std", 1)] {
        write!(out, "{label}")?;
        for s in &stats {
            let v = if pick == 0 { s.0 } else { s.1 };
            if v.is_nan() {
                write!(out, ",")?;
            } else {
                write!(out, ",{v}")?;
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(config)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Runs every seed, concurrently up to `threads`, then writes per-seed
/// artifacts, `aggregate.csv` and `manifest.json`.
///
/// A failing seed is recorded in the manifest; the call fails only when
/// every seed fails.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    let threads = config
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .min(config.seeds.len());

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<std::result::Result<SeedMetrics, String>>>> =
        Mutex::new((0..config.seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = config.seeds.get(i) else { break };
                let result = run_seed(config, seed).and_then(|m| {
                    write_seed_files(dir, &m)?;
                    Ok(m)
                });
                match &result {
                    Ok(m) => info!("seed {seed}: cumulative test error {:.6e}", m.horizons.cumulative),
                    Err(e) => error!("seed {seed} failed: {e}"),
                }
                slots.lock().expect("no poisoned workers")[i] = Some(result.map_err(|e| e.to_string()));
            });
        }
    });
    let seeds: Vec<(u64, std::result::Result<SeedMetrics, String>)> = config
        .seeds
        .iter()
        .zip(slots.into_inner().expect("no poisoned workers"))
        .map(|(&s, r)| (s, r.expect("every seed ran")))
        .collect();
    let outcome = ExperimentOutcome { seeds };

    let ok: Vec<&SeedMetrics> = outcome.succeeded().collect();
    if !ok.is_empty() {
        write_aggregate(dir, &ok, config.eval_horizon)?;
    }
    let manifest = Manifest {
        config_sha256: config_hash(config)?,
        version: env!("CARGO_PKG_VERSION"),
        scheme: config.scheme.as_str(),
        config,
        seeds: outcome
            .seeds
            .iter()
            .map(|(seed, r)| SeedStatus {
                seed: *seed,
                status: if r.is_ok() { "ok" } else { "failed" },
                error: r.as_ref().err().cloned(),
            })
            .collect(),
    };
    let mut out = create(dir, "manifest.json")?;
    serde_json::to_writer_pretty(&mut out, &manifest)?;
    writeln!(out)?;
    out.flush()?;

    if ok.is_empty() {
        return Err(KaeError::State(format!("all {} seeds failed", config.seeds.len())));
    }
    Ok(outcome)
}
