//! Runs the pipeline on image data stored in the IDX byte format: writes a
//! small synthetic image set as an IDX file, loads it back, trains a
//! decoder on the images, and recovers an unseen image from a few hundred
//! sign measurements.
//!
//! The images are 8x8 grayscale frames of a soft vertical bar at a random
//! horizontal position.
//!
//! A trained decoder can only ever return points of its own range, so the
//! recovery is compared both to the original image and to the decoder's
//! rendition of it (encode to the posterior mean, decode back) — the
//! rendition shows what the decoder can draw at all, and the gap between
//! the two errors shows how little the one-bit quantization costs on top.
//!
//! Run with: cargo run --example idx_images

use onebit_cs::data::{normalize_unit, read_idx};
use onebit_cs::recon::{reconstruct_gen, GenOpts};
use onebit_cs::sensing::{make_ensemble, quantize, EnsembleKind, NoiseConfig};
use onebit_cs::train::{export_decoder, train_vae, TrainConfig, VaeArch};
use onebit_cs::{analysis, Activation, Error, Result, RngStream};

const SIDE: usize = 8;

/// One frame: a vertical bar with gaussian cross-profile centered at
/// `center` (in pixel units).
fn bar_image(center: f64) -> Vec<f64> {
    let mut img = vec![0.0; SIDE * SIDE];
    for row in 0..SIDE {
        for col in 0..SIDE {
            let d = col as f64 - center;
            img[row * SIDE + col] = (-d * d / 1.5).exp();
        }
    }
    img
}

/// Encodes images as an IDX unsigned-byte tensor: big-endian magic
/// 0x00000803, then count/height/width, then raw pixels scaled to 0..=255.
fn write_idx(images: &[Vec<f64>], path: &std::path::Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + images.len() * SIDE * SIDE);
    bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&(SIDE as u32).to_be_bytes());
    bytes.extend_from_slice(&(SIDE as u32).to_be_bytes());
    for img in images {
        bytes.extend(img.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Renders an image as rows of shade characters, brightest pixel at full
/// shade (each pixel printed twice to keep the aspect ratio square-ish).
fn ascii_art(pixels: &[f64]) -> Vec<String> {
    const SHADES: [char; 10] = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    let peak = pixels.iter().cloned().fold(0.0, f64::max).max(1e-12);
    (0..SIDE)
        .map(|row| {
            let mut line = String::new();
            for col in 0..SIDE {
                let level = (pixels[row * SIDE + col].max(0.0) / peak * 9.0).round() as usize;
                line.push(SHADES[level.min(9)]);
                line.push(SHADES[level.min(9)]);
            }
            line
        })
        .collect()
}

fn main() -> Result<()> {
    let master = RngStream::new(67);

    // Build the IDX file, then load it through the same reader the
    // command-line tools use.
    let mut centers = master.derive(0);
    let images: Vec<Vec<f64>> = (0..2000)
        .map(|_| bar_image(0.5 + 6.0 * centers.uniform()))
        .collect();
    let dir = tempfile::tempdir().map_err(|e| Error::io("creating temp dir", e))?;
    let idx_path = dir.path().join("bars.idx");
    write_idx(&images, &idx_path)?;
    let dataset = read_idx(&idx_path)?;
    println!(
        "loaded {} images of {}x{} pixels from {}",
        dataset.count,
        dataset.height,
        dataset.width,
        idx_path.display()
    );

    let arch = VaeArch {
        latent_dim: 4,
        encoder_hidden: vec![64, 64],
        decoder_hidden: vec![64, 64],
        hidden_activation: Activation::Relu,
        output_activation: Activation::Sigmoid,
    };
    let config = TrainConfig {
        epochs: 80,
        seed: 67,
        ..TrainConfig::default()
    };
    let (vae, stats) = train_vae(&dataset.items(), &arch, &config)?;
    let decoder = export_decoder(&vae);
    println!(
        "decoder trained on the images, loss {:.4} -> {:.4}\n",
        stats.first().unwrap().mean_loss,
        stats.last().unwrap().mean_loss
    );

    // A bar position the training set never used, and the decoder's own
    // rendition of it: encode to the posterior mean, decode back.
    let original = bar_image(3.3);
    let latent_stats = vae.encoder.forward(&original)?;
    let mu = &latent_stats[..vae.latent_dim()];
    let rendition = decoder.forward(mu)?;

    // Sign measurements carry no amplitude, so recovery targets directions.
    let m = 200;
    let target = normalize_unit(&original)?;
    let ensemble = make_ensemble(EnsembleKind::UnitSphereColumns, m, target.len(), &mut master.derive(1))?;
    let obs = quantize(&ensemble, &target, &NoiseConfig::noiseless(), &mut master.derive(2))?;

    // The loss balances a norm penalty against sign correlation, which
    // pins the amplitude the search prefers. Scaling the matrix used for
    // reconstruction (the signs are scale-invariant) moves that preferred
    // amplitude onto the decoder's native output scale.
    let mut probe = master.derive(3);
    let mut range_scale = 0.0;
    for _ in 0..64 {
        let z = probe.sample_gaussian(decoder.latent_dim(), 0.0, 1.0)?;
        range_scale += onebit_cs::linalg::norm(&decoder.forward(&z)?) / 64.0;
    }
    let a = &ensemble.matrix;
    let a_search = onebit_cs::DenseMatrix::new(
        a.rows(),
        a.cols(),
        a.data().iter().map(|v| v * range_scale).collect(),
    )?;

    let opts = GenOpts {
        restarts: 20,
        steps_per_restart: 300,
        step_size: 0.05,
        ..GenOpts::default()
    };
    let result = reconstruct_gen(&decoder, &a_search, &obs.y, &opts, &master.derive(4))?;

    let vs_rendition = analysis::nmse(&rendition, &result.x_hat)?;
    let vs_original = analysis::nmse(&original, &result.x_hat)?;
    println!("direction error vs the original image:      {vs_original:.4}");
    println!("direction error vs the decoder's rendition: {vs_rendition:.4}\n");

    println!("original              decoder rendition     recovered from {m} bits\n");
    let panels: Vec<Vec<String>> = [&original, &rendition, &result.x_hat]
        .into_iter()
        .map(|img| ascii_art(img))
        .collect();
    for row in 0..SIDE {
        println!("{}      {}      {}", panels[0][row], panels[1][row], panels[2][row]);
    }
    println!("\n200 sign bits localize the bar about as well as the decoder can draw it");
    Ok(())
}
