//! Trains a small variational autoencoder on synthetic sparse signals and
//! saves both the full model and its exported decoder, ready for use as a
//! reconstruction prior.
//!
//! Run with: cargo run --example train_decoder

use std::path::PathBuf;

use onebit_cs::data::{sample_sparse, SparseSpec, ValueDist};
use onebit_cs::model::{load_model, save_model};
use onebit_cs::train::{export_decoder, save_vae, train_vae, TrainConfig, VaeArch};
use onebit_cs::{Activation, Result, RngStream};

fn main() -> Result<()> {
    let mut stream = RngStream::new(7);

    // Training set: 4000 signals of dimension 64 with 4 nonzeros each, the
    // nonzero magnitudes drawn from [0.5, 1].
    let spec = SparseSpec::new(64, 4, ValueDist::UniformHalfOne, false)?;
    let data: Result<Vec<Vec<f64>>> = (0..4000).map(|_| sample_sparse(&spec, &mut stream)).collect();
    let data = data?;
    println!("sampled {} signals of dimension {}", data.len(), data[0].len());

    // Sigmoid output because the signal entries live in [0, 1]; pick
    // Identity instead for unconstrained data.
    let arch = VaeArch {
        latent_dim: 8,
        encoder_hidden: vec![32, 32],
        decoder_hidden: vec![32, 32],
        hidden_activation: Activation::Relu,
        output_activation: Activation::Sigmoid,
    };
    let config = TrainConfig {
        epochs: 30,
        seed: 7,
        ..TrainConfig::default()
    };

    let (vae, stats) = train_vae(&data, &arch, &config)?;
    for s in stats.iter().filter(|s| s.epoch == 1 || s.epoch % 5 == 0) {
        println!(
            "epoch {:>3}  loss {:>9.4}  (reconstruction {:>9.4}, kl {:>7.4})",
            s.epoch, s.mean_loss, s.recon_term, s.kl_term
        );
    }
    let first = stats.first().unwrap().mean_loss;
    let last = stats.last().unwrap().mean_loss;
    println!("loss dropped {first:.4} -> {last:.4}");

    // Persist the trained model and the decoder half used by the
    // reconstruction algorithms, then check the decoder round-trips.
    let dir = PathBuf::from("target/example-artifacts");
    std::fs::create_dir_all(&dir)
        .map_err(|e| onebit_cs::Error::io(format!("creating {}", dir.display()), e))?;
    let vae_path = dir.join("sparse_vae.json");
    let decoder_path = dir.join("sparse_decoder.json");
    save_vae(&vae, &vae_path)?;
    let decoder = export_decoder(&vae);
    save_model(&decoder, &decoder_path)?;

    let reloaded = load_model(&decoder_path)?;
    let z = vec![0.3; decoder.latent_dim()];
    assert_eq!(decoder.forward(&z)?, reloaded.forward(&z)?);
    println!(
        "decoder ({} -> {}) saved to {} and round-trips exactly",
        decoder.latent_dim(),
        decoder.output_dim(),
        decoder_path.display()
    );
    Ok(())
}
