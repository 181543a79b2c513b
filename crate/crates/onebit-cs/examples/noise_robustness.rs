//! Measures how recovery degrades under the two measurement corruptions:
//! additive noise before the sign, and random sign flips afterward. Also
//! shows the flip-aware loss variant, which rescales the correlation term
//! by 1/(2*alpha - 1) when the keep probability alpha is known.
//!
//! The flip-aware and plain variants run as separate single-algorithm
//! sweeps so both see identical signals, matrices, and restart draws; the
//! comparison then isolates the loss change itself.
//!
//! Run with: cargo run --example noise_robustness

use onebit_cs::data::{sample_sparse, SparseSpec, ValueDist};
use onebit_cs::experiment::{run_sweep, AlgorithmSpec, GenParams, ResultRow, SignalSpec, SweepConfig};
use onebit_cs::model::save_model;
use onebit_cs::train::{export_decoder, train_vae, TrainConfig, VaeArch};
use onebit_cs::{Activation, Result, RngStream};

fn mean_nmse(rows: &[ResultRow], v_n: f64, alpha: f64) -> f64 {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.v_n == v_n && r.alpha == alpha)
        .map(|r| r.nmse.expect("successful cells report nmse"))
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn main() -> Result<()> {
    let (n, k) = (64, 4);
    let spec = SparseSpec::new(n, k, ValueDist::UniformHalfOne, false)?;
    let mut data_stream = RngStream::new(43).derive(0);
    let data: Result<Vec<Vec<f64>>> =
        (0..8000).map(|_| sample_sparse(&spec, &mut data_stream)).collect();
    let arch = VaeArch {
        latent_dim: 8,
        encoder_hidden: vec![32, 32],
        decoder_hidden: vec![32, 32],
        hidden_activation: Activation::Relu,
        output_activation: Activation::Sigmoid,
    };
    let config = TrainConfig {
        epochs: 40,
        seed: 43,
        ..TrainConfig::default()
    };
    let (vae, _) = train_vae(&data?, &arch, &config)?;
    let dir = tempfile::tempdir().map_err(|e| onebit_cs::Error::io("creating temp dir", e))?;
    let decoder_path = dir.path().join("decoder.json");
    save_model(&export_decoder(&vae), &decoder_path)?;

    let noise_variances = vec![0.0, 0.1];
    let alphas = vec![1.0, 0.95, 0.85];
    let params = GenParams {
        restarts: 15,
        steps_per_restart: 100,
        step_size: 0.05,
        ..GenParams::default()
    };
    let base = SweepConfig {
        format_version: 1,
        master_seed: 43,
        trials: 10,
        m_values: vec![100],
        noise_variances: noise_variances.clone(),
        alphas: alphas.clone(),
        perturb_variances: vec![0.0],
        ensemble: "unit_sphere_columns".into(),
        signal: SignalSpec::InRange {
            normalize_to: Some(1.0),
        },
        model_path: Some(decoder_path.display().to_string()),
        algorithms: vec![],
        threads: 4,
    };
    let mut plain = base.clone();
    plain.algorithms = vec![AlgorithmSpec::Gen(params.clone())];
    let mut aware = base;
    aware.algorithms = vec![AlgorithmSpec::GenNoiseAware(params)];

    let plain_rows = run_sweep(&plain)?;
    let aware_rows = run_sweep(&aware)?;
    assert!(plain_rows.iter().chain(&aware_rows).all(|r| r.status == "ok"));

    println!("mean normalized mse at m = 100, 10 trials per cell:\n");
    println!(
        "{:>10} {:>10} {:>12} {:>12}",
        "v_noise", "flip rate", "gen", "flip-aware"
    );
    for &v_n in &noise_variances {
        for &alpha in &alphas {
            println!(
                "{v_n:>10.2} {:>9.0}% {:>12.5} {:>12.5}",
                (1.0 - alpha) * 100.0,
                mean_nmse(&plain_rows, v_n, alpha),
                mean_nmse(&aware_rows, v_n, alpha)
            );
        }
    }
    println!("\nrecovery degrades gracefully under both corruptions; the flip-aware");
    println!("rescale keeps the effective gradient scale flat as flips increase, which");
    println!("matters most when the iteration budget is tight");
    Ok(())
}
