//! End-to-end single-signal recovery: train a decoder, take one-bit
//! measurements of a signal from its range, and recover it by multi-restart
//! gradient descent in latent space.
//!
//! Sign measurements carry no amplitude information, so the target is the
//! unit-norm direction of the signal.
//!
//! Run with: cargo run --example reconstruct_signal

use onebit_cs::data::{normalize_unit, sample_sparse, SparseSpec, ValueDist};
use onebit_cs::recon::{reconstruct_gen, GenOpts};
use onebit_cs::sensing::{make_ensemble, quantize, EnsembleKind, NoiseConfig};
use onebit_cs::train::{export_decoder, train_vae, TrainConfig, VaeArch};
use onebit_cs::{analysis, Activation, Result, RngStream};

fn main() -> Result<()> {
    let master = RngStream::new(11);

    // A quick decoder for 64-dimensional signals with 4 nonzeros.
    let spec = SparseSpec::new(64, 4, ValueDist::UniformHalfOne, false)?;
    let mut data_stream = master.derive(0);
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
        seed: 11,
        ..TrainConfig::default()
    };
    let (vae, stats) = train_vae(&data?, &arch, &config)?;
    let decoder = export_decoder(&vae);
    println!(
        "decoder trained, loss {:.4} -> {:.4}",
        stats.first().unwrap().mean_loss,
        stats.last().unwrap().mean_loss
    );

    // The signal to recover lies exactly in the decoder's range.
    let z_star = master.derive(1).sample_gaussian(decoder.latent_dim(), 0.0, 1.0)?;
    let x_star = normalize_unit(&decoder.forward(&z_star)?)?;

    // 150 one-bit measurements with unit-norm columns, no noise.
    let m = 150;
    let ensemble = make_ensemble(EnsembleKind::UnitSphereColumns, m, x_star.len(), &mut master.derive(2))?;
    let obs = quantize(&ensemble, &x_star, &NoiseConfig::noiseless(), &mut master.derive(3))?;
    println!("took {m} sign measurements of a {}-dimensional signal", x_star.len());

    let opts = GenOpts {
        restarts: 15,
        steps_per_restart: 150,
        step_size: 0.05,
        ..GenOpts::default()
    };
    let result = reconstruct_gen(&decoder, &ensemble.matrix, &obs.y, &opts, &master.derive(4))?;

    let nmse = analysis::nmse(&x_star, &result.x_hat)?;
    println!(
        "best surrogate loss {:.6} over {} restarts ({} total gradient steps)",
        result.best_loss,
        result.per_restart_losses.len(),
        result.iterations_used
    );
    println!("direction error (normalized mse): {nmse:.6}");

    // Compare directions entry by entry; the estimate is rescaled to unit
    // norm because one-bit measurements only determine the direction.
    let x_hat = normalize_unit(&result.x_hat)?;
    let mut idx: Vec<usize> = (0..x_star.len()).collect();
    idx.sort_by(|&i, &j| x_star[j].abs().partial_cmp(&x_star[i].abs()).unwrap());
    println!("largest true entries (both vectors unit-normalized):");
    for &i in idx.iter().take(6) {
        println!("  x[{i:>2}]  true {:>8.4}  estimate {:>8.4}", x_star[i], x_hat[i]);
    }
    Ok(())
}
