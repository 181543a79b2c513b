//! Recovers two kinds of signal with every implemented algorithm: one
//! drawn from the trained decoder's range and one fresh sparse draw. Each
//! prior wins when the signal matches its model — the decoder-based
//! algorithms dominate on in-range signals, while the sparsity-based
//! baselines need genuine sparsity and nothing else.
//!
//! Run with: cargo run --example baseline_comparison

use onebit_cs::data::{normalize_unit, sample_sparse, SparseSpec, ValueDist};
use onebit_cs::linalg::DenseMatrix;
use onebit_cs::recon::{biht, gen_pgd, reconstruct_gen, yp_convex, GenOpts, PgdOpts};
use onebit_cs::sensing::{make_ensemble, quantize, sign_vec, EnsembleKind, NoiseConfig};
use onebit_cs::train::{export_decoder, train_vae, TrainConfig, VaeArch};
use onebit_cs::{analysis, Activation, MlpGenerator, Result, RngStream};

fn compare(
    label: &str,
    decoder: &MlpGenerator,
    a: &DenseMatrix,
    y: &[f64],
    x_star: &[f64],
    k: usize,
    stream: &RngStream,
) -> Result<()> {
    let gen_opts = GenOpts {
        restarts: 15,
        steps_per_restart: 150,
        step_size: 0.05,
        ..GenOpts::default()
    };
    let estimates: Vec<(&str, Vec<f64>)> = vec![
        (
            "gen (latent descent)",
            reconstruct_gen(decoder, a, y, &gen_opts, &stream.derive(0))?.x_hat,
        ),
        (
            "gen_pgd (projected)",
            gen_pgd(decoder, a, y, &PgdOpts::default(), &stream.derive(1))?.x_hat,
        ),
        ("biht (hard threshold)", biht(a, y, k, 100, 1.0)?),
        ("yp (convex program)", yp_convex(a, y, 2.0)?),
    ];
    println!("{label}:");
    println!("{:<24} {:>10} {:>16}", "algorithm", "nmse", "sign agreement");
    for (name, x_hat) in &estimates {
        let nmse = analysis::nmse(x_star, x_hat)?;
        // Fraction of measurements whose sign the estimate reproduces.
        let y_hat = sign_vec(&a.matvec(x_hat)?);
        let agree = 1.0 - analysis::hamming_dist(y, &y_hat)?;
        println!("{name:<24} {nmse:>10.5} {agree:>15.1}%", agree = agree * 100.0);
    }
    println!();
    Ok(())
}

fn main() -> Result<()> {
    let master = RngStream::new(23);
    let (n, k, m) = (64, 4, 200);

    // Decoder prior trained on unnormalized sparse signals.
    let spec = SparseSpec::new(n, k, ValueDist::UniformHalfOne, false)?;
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
        seed: 23,
        ..TrainConfig::default()
    };
    let (vae, _) = train_vae(&data?, &arch, &config)?;
    let decoder = export_decoder(&vae);

    let ensemble = make_ensemble(EnsembleKind::UnitSphereColumns, m, n, &mut master.derive(1))?;
    let a = &ensemble.matrix;
    println!("{m} noiseless sign measurements, unit-norm targets in dimension {n}\n");

    // Home turf for the decoder: a signal from its own range (dense, so the
    // sparse baselines have nothing to grab onto).
    let z = master.derive(2).sample_gaussian(decoder.latent_dim(), 0.0, 1.0)?;
    let in_range = normalize_unit(&decoder.forward(&z)?)?;
    let obs = quantize(&ensemble, &in_range, &NoiseConfig::noiseless(), &mut master.derive(3))?;
    compare(
        "signal from the decoder's range",
        &decoder,
        a,
        &obs.y,
        &in_range,
        k,
        &master.derive(4),
    )?;

    // Home turf for the baselines: a fresh k-sparse draw. Its support is one
    // of billions, far more variety than the small decoder has capacity to
    // model, so the prior that served so well above now misleads.
    let sparse = normalize_unit(&sample_sparse(&spec, &mut master.derive(5))?)?;
    let obs = quantize(&ensemble, &sparse, &NoiseConfig::noiseless(), &mut master.derive(6))?;
    compare(
        &format!("fresh {k}-sparse signal"),
        &decoder,
        a,
        &obs.y,
        &sparse,
        k,
        &master.derive(7),
    )?;

    println!("each prior wins exactly when the signal matches its model");
    Ok(())
}
