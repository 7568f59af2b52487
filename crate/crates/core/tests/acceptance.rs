//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use kae_core::data::{gen_linear_dataset, random_orthogonal, Split};
use kae_core::dmd::{dmd_dataset, estimate_theta, UNIT_MODULUS_TOL};
use kae_core::experiment::{init_spectrum_report, run_experiment, ExperimentConfig, InitScheme, SeedMetrics};
use kae_core::linalg::{eig_decompose, eigenvalues, spectral_radius, Matrix};
use kae_core::model::{train, KaeModel, KoopmanInit, TrainConfig};
use kae_core::nn::AdamConfig;
use kae_core::spectral::{eigeninit_detailed, eigenloss_grad, eigenloss_value, SpikeSlab};
use kae_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn gaussian(n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = 1.0 / (n as f64).sqrt();
    Matrix::from_vec(n, n, (0..n * n).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64, detail: String) -> Outcome {
    let secs = elapsed.as_secs_f64();
    if secs < limit_s {
        Ok(format!("{detail}, {secs:.1} s"))
    } else {
        Err(format!("{detail}, {secs:.1} s exceeds {limit_s} s"))
    }
}

fn spectral_roundtrip() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for n in [2, 4, 8, 16] {
        for seed in 0..50 {
            let u = gaussian(n, seed);
            let dec = eig_decompose(&u).map_err(|e| format!("n={n} seed={seed}: {e}"))?;
            let rec = dec.reconstruct().map_err(|e| format!("n={n} seed={seed}: {e}"))?;
            worst = worst.max(rec.matrix.sub(&u).unwrap().frobenius_norm() / u.frobenius_norm());
        }
    }
    check(worst <= 1e-9, format!("max relative error {worst:.1e}"))
        .and_then(|d| within(start.elapsed(), 5.0, d))
}

fn eigenloss_gradient() -> Outcome {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let u = gaussian(8, 500 + seed);
        let g = eigenloss_grad(&u).map_err(|e| e.to_string())?;
        let mut fd = Matrix::zeros(8, 8);
        for i in 0..8 {
            for j in 0..8 {
                let (mut p, mut m) = (u.clone(), u.clone());
                p.as_mut_slice()[i * 8 + j] += h;
                m.as_mut_slice()[i * 8 + j] -= h;
                fd.as_mut_slice()[i * 8 + j] =
                    (eigenloss_value(&p).unwrap() - eigenloss_value(&m).unwrap()) / (2.0 * h);
            }
        }
        worst = worst.max(g.sub(&fd).unwrap().frobenius_norm() / fd.frobenius_norm());
    }
    let diag = eigenloss_grad(&Matrix::from_diag(&[2.0, 0.5])).map_err(|e| e.to_string())?;
    let diag_err = diag.sub(&Matrix::from_diag(&[2.0, -1.0])).unwrap().max_abs();
    check(
        worst <= 1e-5 && diag_err <= 1e-12,
        format!("max relative FD error {worst:.1e}, diag(2, 0.5) error {diag_err:.1e}"),
    )
}

fn eigeninit_contract() -> Outcome {
    let mut worst_imag = 0.0f64;
    let mut worst_phase = 0.0f64;
    let mut worst_modulus = 0.0f64;
    let mut worst_radius = 0.0f64;
    for n in [4usize, 8, 16] {
        for seed in 0..50u64 {
            let u0 = gaussian(n, 7000 + seed * 17 + n as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (u, drawn) =
                eigeninit_detailed(&u0, &SpikeSlab::new(0.5), &mut rng).map_err(|e| format!("n={n} seed={seed}: {e}"))?;
            let dec0 = eig_decompose(&u0).unwrap();
            let targets: Vec<Complex64> =
                dec0.eigenvalues().iter().zip(&drawn).map(|(l, &r)| Complex64::from_polar(r, l.arg())).collect();
            worst_imag = worst_imag.max(dec0.reconstruct_real(&targets).unwrap().relative_imag());
            worst_radius = worst_radius.max(spectral_radius(&u).unwrap() - 1.0);
            let after = eigenvalues(&u).unwrap();
            for (l0, t) in dec0.eigenvalues().iter().zip(&targets) {
                let best = after.iter().min_by(|a, b| (*a - t).norm().total_cmp(&(*b - t).norm())).unwrap();
                worst_modulus = worst_modulus.max((best.norm() - t.norm()).abs());
                if t.norm() > 1e-6 {
                    let d = (best.arg() - l0.arg()).abs();
                    worst_phase = worst_phase.max(d.min((d - 2.0 * std::f64::consts::PI).abs()));
                }
            }
        }
    }
    check(
        worst_imag <= 1e-8 && worst_phase <= 1e-8 && worst_modulus <= 1e-8 && worst_radius <= 1e-9,
        format!(
            "imag {worst_imag:.1e}, phase {worst_phase:.1e}, modulus {worst_modulus:.1e}, rho-1 {worst_radius:.1e}"
        ),
    )
}

fn init_spectrum() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let schemes = [InitScheme::Eigeninit(SpikeSlab::new(0.0)), InitScheme::Gaussian, InitScheme::Xavier];
    let report = init_spectrum_report(4, 6, &schemes, 10_000, &mut rng).map_err(|e| e.to_string())?;
    let (e, g, x) = (report.schemes[0].mean, report.schemes[1].mean, report.schemes[2].mean);
    let ok = (e - 1.0).abs() <= 1e-9 && e > g && g > x && x < 0.25 && (0.2..=0.6).contains(&g);
    check(ok, format!("mean modulus eigeninit {e:.10}, gaussian {g:.3}, xavier {x:.4}"))
        .and_then(|d| within(start.elapsed(), 30.0, d))
}

fn theta_recovery() -> Outcome {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let cases: [(&str, Vec<Complex64>, f64); 3] = [
        ("{1, 1, 0.5, 0.2}", vec![c(1.0, 0.0), c(1.0, 0.0), c(0.5, 0.0), c(0.2, 0.0)], 0.5),
        (
            "orthogonal",
            vec![Complex64::from_polar(1.0, 0.4), Complex64::from_polar(1.0, -0.4), c(1.0, 0.0), c(-1.0, 0.0)],
            0.0,
        ),
        ("0.5 I", vec![c(0.5, 0.0); 4], 1.0),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, spectrum, expect) in cases {
        // 4 trajectories x 50 states = 200 snapshots.
        let sys = gen_linear_dataset(&spectrum, 4, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let dmd = dmd_dataset(&sys.dataset, None, 4).map_err(|e| format!("{name}: {e}"))?;
        let theta = estimate_theta(&dmd.eigenvalues, UNIT_MODULUS_TOL).unwrap();
        ok &= theta == expect;
        parts.push(format!("{name} -> {theta}"));
    }
    // A random orthogonal generator, not built from a chosen spectrum.
    let q = random_orthogonal(4, &mut ChaCha8Rng::seed_from_u64(9));
    let mut x = vec![1.0, 0.5, -0.25, 2.0];
    let mut snaps = x.clone();
    for _ in 1..200 {
        x = q.mat_vec(&x).unwrap();
        snaps.extend_from_slice(&x);
    }
    let dmd = kae_core::dmd::exact_dmd(&Matrix::from_vec(200, 4, snaps).unwrap(), 4).map_err(|e| e.to_string())?;
    let theta = estimate_theta(&dmd.eigenvalues, UNIT_MODULUS_TOL).unwrap();
    ok &= theta == 0.0;
    parts.push(format!("random orthogonal -> {theta}"));
    check(ok, parts.join(", "))
}

fn linear_identification() -> Outcome {
    let start = Instant::now();
    let spectrum = [Complex64::from_polar(0.9, 0.5), Complex64::from_polar(0.9, -0.5)];
    let sys = gen_linear_dataset(&spectrum, 20, 30, &mut ChaCha8Rng::seed_from_u64(31)).unwrap();
    let data = sys.dataset.assign_splits((0.6, 0.2, 0.2)).unwrap();
    let u0 = KoopmanInit::Gaussian { sigma: None }.sample(2, &mut ChaCha8Rng::seed_from_u64(32)).unwrap();
    let mut model = KaeModel::identity(2, u0).unwrap();
    let config = TrainConfig {
        horizon: 1,
        epochs: 500,
        batch_size: 1024,
        adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
        train_autoencoder: false,
        ..TrainConfig::default()
    };
    train(&mut model, &data, &config).map_err(|e| e.to_string())?;
    let err = model.koopman_matrix().sub(&sys.generator).unwrap().frobenius_norm();
    check(err <= 1e-3, format!("Frobenius error {err:.1e} after 500 epochs"))
        .and_then(|d| within(start.elapsed(), 60.0, d))
}

const PENDULUM_SEEDS: [u64; 8] = [0, 1, 2, 3, 4, 5, 6, 7];
const PENDULUM_EPOCHS: usize = 40;

fn pendulum_config(scheme: &str, out: &Path) -> ExperimentConfig {
    let mut v = serde_json::json!({
        "dataset": {"generator": "pendulum", "trajectories": 40, "params": {"steps": 200}},
        "model": {"latent_dim": 8, "hidden": [64, 32]},
        "training": {"horizon": 8, "epochs": PENDULUM_EPOCHS, "batch_size": 64},
        "scheme": scheme,
        "seeds": PENDULUM_SEEDS,
        "eval_horizon": 20,
        "output_dir": out.join(scheme)
    });
    if scheme == "both" || scheme == "eigeninit" {
        v["theta"] = serde_json::json!(0.0);
    }
    if scheme == "both" || scheme == "eigenloss" {
        v["eigenloss_weight"] = serde_json::json!(1000.0);
    }
    ExperimentConfig::from_json(&v.to_string()).unwrap()
}

struct PendulumRuns {
    by_scheme: BTreeMap<&'static str, Vec<SeedMetrics>>,
    elapsed: Duration,
}

fn pendulum_runs(out: &Path) -> Result<PendulumRuns, String> {
    let start = Instant::now();
    let mut by_scheme = BTreeMap::new();
    for scheme in ["none", "both", "eigenloss"] {
        let outcome = run_experiment(&pendulum_config(scheme, out)).map_err(|e| format!("{scheme}: {e}"))?;
        let mut runs = Vec::new();
        for (seed, r) in outcome.seeds {
            runs.push(r.map_err(|e| format!("{scheme} seed {seed}: {e}"))?);
        }
        by_scheme.insert(scheme, runs);
    }
    Ok(PendulumRuns { by_scheme, elapsed: start.elapsed() })
}

/// Mean convergence epoch; a run that never converges counts as the
/// full epoch budget.
fn mean_convergence(runs: &[SeedMetrics]) -> (f64, Vec<String>) {
    let epochs: Vec<usize> = runs.iter().map(|m| m.convergence.unwrap_or(PENDULUM_EPOCHS)).collect();
    let labels = runs.iter().map(|m| m.convergence.map_or("none".into(), |e| e.to_string())).collect();
    (epochs.iter().sum::<usize>() as f64 / epochs.len() as f64, labels)
}

fn convergence_ordering(runs: &PendulumRuns) -> Outcome {
    let (none, none_l) = mean_convergence(&runs.by_scheme["none"]);
    let (both, both_l) = mean_convergence(&runs.by_scheme["both"]);
    check(
        both <= none,
        format!(
            "mean convergence epoch both {both:.2} [{}] vs none {none:.2} [{}] over {} seeds",
            both_l.join(" "),
            none_l.join(" "),
            PENDULUM_SEEDS.len()
        ),
    )
    .and_then(|d| within(runs.elapsed, 900.0, format!("{d}; all pendulum runs")))
}

fn eigenloss_effect(runs: &PendulumRuns) -> Outcome {
    let with: Vec<f64> = runs.by_scheme["eigenloss"].iter().map(|m| m.spectral_penalty).collect();
    let without: Vec<f64> = runs.by_scheme["none"].iter().map(|m| m.spectral_penalty).collect();
    let ok = with.iter().zip(&without).all(|(a, b)| a < b);
    let worst_ratio = with.iter().zip(&without).map(|(a, b)| a / b).fold(0.0f64, f64::max);
    check(
        ok,
        format!("sum (|l|-1)^2 lower with eigenloss on {}/{} seeds, worst ratio {worst_ratio:.1e}",
            with.iter().zip(&without).filter(|(a, b)| a < b).count(), with.len()),
    )
}

fn read_artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.file_name().unwrap().to_str().unwrap().starts_with("timing_"))
        .map(|p| (p.file_name().unwrap().to_str().unwrap().to_string(), fs::read(&p).unwrap()))
        .collect()
}

fn determinism(out: &Path) -> Outcome {
    let config = ExperimentConfig::from_json(
        &serde_json::json!({
            "dataset": {"generator": "pendulum", "trajectories": 10, "params": {"steps": 60}},
            "model": {"latent_dim": 4, "hidden": [16]},
            "training": {"horizon": 4, "epochs": 8, "batch_size": 32},
            "scheme": "both", "theta": 0.3, "eigenloss_weight": 10.0,
            "seeds": [11, 12, 13],
            "eval_horizon": 8,
            "output_dir": out.join("determinism"),
            "threads": 3
        })
        .to_string(),
    )
    .unwrap();
    run_experiment(&config).map_err(|e| e.to_string())?;
    let first = read_artifacts(&config.output_dir);
    run_experiment(&config).map_err(|e| e.to_string())?;
    let second = read_artifacts(&config.output_dir);
    let differing: Vec<&String> = first.keys().filter(|k| first.get(*k) != second.get(*k)).collect();
    check(
        differing.is_empty() && first.len() == second.len() && first.len() >= 14,
        format!("{} artifact files compared, {} differ {:?}", first.len(), differing.len(), differing),
    )
}

/// `real(V Λ^ℓ V⁻¹)`.
fn spectral_power(u: &Matrix, l: i32) -> Matrix {
    let dec = eig_decompose(u).unwrap();
    let powers: Vec<Complex64> = dec.eigenvalues().iter().map(|z| z.powi(l)).collect();
    let m = dec.right_vectors().scale_columns(&powers).matmul(dec.right_inverse()).unwrap();
    m.real_part()
}

fn eq4_equivalence(runs: &PendulumRuns) -> Outcome {
    let mut checked = 0;
    let mut worst = 0.0f64;
    for metrics in runs.by_scheme.values().flatten() {
        let u = metrics.model.koopman_matrix();
        if spectral_radius(u).unwrap() > 1.1 {
            continue;
        }
        let config = pendulum_config("none", Path::new("."));
        let data = config.build_dataset(metrics.seed).unwrap();
        let test = data.stacked(Split::Test);
        let x = Matrix::from_vec(64, 2, test.as_slice()[..128].to_vec()).unwrap();
        let out = metrics.model.forward(&x, 32).unwrap();
        let y0 = &out.latents[0];
        for l in 1..=32 {
            let spectral = y0.matmul_transposed(&spectral_power(u, l as i32)).unwrap();
            let err = out.latents[l].sub(&spectral).unwrap().max_abs() / y0.max_abs().max(1.0);
            worst = worst.max(err);
        }
        checked += 1;
    }
    check(
        checked > 0 && worst <= 1e-7,
        format!("{checked} trained models with rho <= 1.1, max relative deviation {worst:.1e} for l <= 32"),
    )
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "spectral roundtrip", spectral_roundtrip()),
        (2, "eigenloss gradient", eigenloss_gradient()),
        (3, "eigeninit contract", eigeninit_contract()),
        (4, "init spectrum ordering", init_spectrum()),
        (5, "DMD theta recovery", theta_recovery()),
        (6, "linear system identification", linear_identification()),
    ];
    match pendulum_runs(tmp.path()) {
        Ok(runs) => {
            results.push((7, "pendulum convergence ordering", convergence_ordering(&runs)));
            results.push((8, "eigenloss spectral effect", eigenloss_effect(&runs)));
            results.push((9, "determinism", determinism(tmp.path())));
            results.push((10, "repeated multiplication vs spectral evolution", eq4_equivalence(&runs)));
        }
        Err(e) => {
            for (k, name) in [(7, "pendulum convergence ordering"), (8, "eigenloss spectral effect")] {
                results.push((k, name, Err(format!("pendulum runs failed: {e}"))));
            }
            results.push((9, "determinism", determinism(tmp.path())));
            results.push((10, "repeated multiplication vs spectral evolution", Err(format!("pendulum runs failed: {e}"))));
        }
    }
    let mut failed = 0;
    for (k, name, outcome) in &results {
        match outcome {
            Ok(d) => println!("criterion {k:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {k:>2} FAIL  {name}: {d}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
