//! Command-line front end. All logic lives in the library; this binary only
//! parses arguments, wires files together, and maps errors to exit codes:
//! 2 for configuration and input problems, 3 for numeric failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use onebit_cs::data::{sample_sparse, save_dataset, save_signal, SparseSpec, ValueDist};
use onebit_cs::experiment::{cmd_sweep, cmd_theory_check, cmd_train};
use onebit_cs::model::{load_model, save_model};
use onebit_cs::recon::{
    biht, gen_pgd, reconstruct_gen, reconstruct_gen_noise_aware, yp_convex, GenOpts, PgdOpts,
    ReconResult,
};
use onebit_cs::sensing::{
    load_observation, make_ensemble, quantize, save_ensemble, save_observation, EnsembleKind,
    NoiseConfig,
};
use onebit_cs::train::{export_decoder, load_vae};
use onebit_cs::{analysis, data, Error, Result, RngStream};

#[derive(Parser)]
#[command(
    name = "onebit-cs",
    version,
    about = "One-bit compressed sensing: sign-quantized measurements, decoder priors, and sparse baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw sparse signals and store them as a dataset file.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Signal dimension.
        #[arg(long)]
        n: usize,
        /// Nonzeros per signal.
        #[arg(long)]
        k: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// uniform_01 or uniform_half_one.
        #[arg(long, default_value = "uniform_01")]
        value_dist: String,
        /// Rescale each signal to unit norm.
        #[arg(long)]
        normalize: bool,
    },
    /// Train an autoencoder per a JSON config and write the artifacts it
    /// names.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Extract the decoder half of a stored autoencoder.
    ExportDecoder {
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a measurement matrix, quantize a stored signal, and store the
    /// observation.
    Measure {
        /// Signal file to measure.
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        m: usize,
        /// gaussian_iid or unit_sphere_columns.
        #[arg(long, default_value = "gaussian_iid")]
        ensemble: String,
        /// Additive noise variance before the sign.
        #[arg(long, default_value_t = 0.0)]
        v_n: f64,
        /// Probability each sign is kept (in (0.5, 1]).
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        obs_out: PathBuf,
        /// Also store the bare ensemble.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Reconstruct a signal from a stored observation.
    Reconstruct {
        #[arg(long)]
        obs: PathBuf,
        /// gen, gen_noise_aware, biht, yp, or gen_pgd.
        #[arg(long)]
        algorithm: String,
        /// Decoder file; required by gen, gen_noise_aware, and gen_pgd.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Known signal for error reporting.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
        #[arg(long)]
        latent_radius: Option<f64>,
        /// Keep probability for gen_noise_aware; defaults to the value
        /// stored with the observation.
        #[arg(long)]
        alpha: Option<f64>,
        /// Sparsity level for biht.
        #[arg(long)]
        sparsity: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        /// l1 budget for yp.
        #[arg(long)]
        l1_budget: Option<f64>,
        #[arg(long)]
        outer_steps: Option<usize>,
        #[arg(long)]
        inner_steps: Option<usize>,
        #[arg(long)]
        inner_step_size: Option<f64>,
    },
    /// Run a sweep config and write the results CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's thread count.
        #[arg(long)]
        threads: Option<usize>,
        /// Keep only these algorithms from the config (comma-separated
        /// labels, e.g. gen,biht). Stream assignment follows the filtered
        /// list, so this matches a config written with only those entries.
        #[arg(long, value_delimiter = ',')]
        algorithms: Option<Vec<String>>,
    },
    /// Re-estimate the calibrated statistics and bounds; exits nonzero if
    /// any check misses its target.
    TheoryCheck {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Training { .. } | Error::Numeric(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData {
            out,
            n,
            k,
            count,
            seed,
            value_dist,
            normalize,
        } => {
            let dist = ValueDist::parse(&value_dist).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown value_dist \"{value_dist}\" (expected uniform_01 or uniform_half_one)"
                ))
            })?;
            if count == 0 {
                return Err(Error::InvalidArgument("count must be at least 1".into()));
            }
            let spec = SparseSpec::new(n, k, dist, normalize)?;
            let mut stream = RngStream::new(seed);
            let signals: Result<Vec<Vec<f64>>> =
                (0..count).map(|_| sample_sparse(&spec, &mut stream)).collect();
            save_dataset(&signals?, &out)?;
            println!("wrote {count} signals of dimension {n} to {}", out.display());
            Ok(())
        }
        Command::Train { config } => {
            let stats = cmd_train(&config)?;
            let last = stats.last().expect("training always runs at least one epoch");
            println!(
                "trained {} epochs; final mean loss {:.6} (recon {:.6}, kl {:.6})",
                stats.len(),
                last.mean_loss,
                last.recon_term,
                last.kl_term
            );
            Ok(())
        }
        Command::ExportDecoder { vae, out } => {
            let model = load_vae(&vae)?;
            save_model(&export_decoder(&model), &out)?;
            println!("wrote decoder to {}", out.display());
            Ok(())
        }
        Command::Measure {
            signal,
            m,
            ensemble,
            v_n,
            alpha,
            seed,
            obs_out,
            matrix_out,
        } => {
            let kind = EnsembleKind::parse(&ensemble).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown ensemble \"{ensemble}\" (expected gaussian_iid or unit_sphere_columns)"
                ))
            })?;
            let x = data::load_signal(&signal)?;
            let noise = NoiseConfig::new(v_n, alpha)?;
            let master = RngStream::new(seed);
            let e = make_ensemble(kind, m, x.len(), &mut master.derive(0))?;
            let obs = quantize(&e, &x, &noise, &mut master.derive(1))?;
            if let Some(path) = matrix_out {
                save_ensemble(&e, &path)?;
            }
            save_observation(&obs, &obs_out)?;
            println!(
                "wrote {m} one-bit measurements of {} to {}",
                signal.display(),
                obs_out.display()
            );
            Ok(())
        }
        Command::Reconstruct {
            obs,
            algorithm,
            model,
            out,
            truth,
            seed,
            restarts,
            steps,
            step_size,
            latent_radius,
            alpha,
            sparsity,
            iters,
            tau,
            l1_budget,
            outer_steps,
            inner_steps,
            inner_step_size,
        } => {
            let observation = load_observation(&obs)?;
            let a = &observation.ensemble.matrix;
            let y = &observation.y;
            let stream = RngStream::new(seed);
            let load_decoder = || -> Result<onebit_cs::MlpGenerator> {
                let path = model.as_ref().ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "algorithm {algorithm} requires --model"
                    ))
                })?;
                load_model(path)
            };
            let gen_opts = || {
                let d = GenOpts::default();
                GenOpts {
                    restarts: restarts.unwrap_or(d.restarts),
                    steps_per_restart: steps.unwrap_or(d.steps_per_restart),
                    step_size: step_size.unwrap_or(d.step_size),
                    latent_radius,
                    ..d
                }
            };
            let (x_hat, summary): (Vec<f64>, String) = match algorithm.as_str() {
                "gen" => {
                    let r = reconstruct_gen(&load_decoder()?, a, y, &gen_opts(), &stream)?;
                    let s = describe_gen(&r);
                    (r.x_hat, s)
                }
                "gen_noise_aware" => {
                    let keep = alpha.unwrap_or(observation.noise.alpha);
                    let r = reconstruct_gen_noise_aware(
                        &load_decoder()?,
                        a,
                        y,
                        keep,
                        &gen_opts(),
                        &stream,
                    )?;
                    let s = format!("alpha {keep}; {}", describe_gen(&r));
                    (r.x_hat, s)
                }
                "biht" => {
                    let k = sparsity.ok_or_else(|| {
                        Error::InvalidArgument("biht requires --sparsity".into())
                    })?;
                    let x = biht(a, y, k, iters.unwrap_or(100), tau.unwrap_or(1.0))?;
                    (x, format!("sparsity {k}"))
                }
                "yp" => {
                    let budget = l1_budget.ok_or_else(|| {
                        Error::InvalidArgument("yp requires --l1-budget".into())
                    })?;
                    let x = yp_convex(a, y, budget)?;
                    (x, format!("l1 budget {budget}"))
                }
                "gen_pgd" => {
                    let d = PgdOpts::default();
                    let opts = PgdOpts {
                        restarts: restarts.unwrap_or(d.restarts),
                        outer_steps: outer_steps.unwrap_or(d.outer_steps),
                        tau: tau.unwrap_or(d.tau),
                        inner_steps: inner_steps.unwrap_or(d.inner_steps),
                        inner_step_size: inner_step_size.unwrap_or(d.inner_step_size),
                    };
                    let r = gen_pgd(&load_decoder()?, a, y, &opts, &stream)?;
                    let s = format!(
                        "sign disagreement {:.4} over {} outer steps",
                        r.best_loss, r.iterations_used
                    );
                    (r.x_hat, s)
                }
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown algorithm \"{other}\" (expected gen, gen_noise_aware, biht, yp, or gen_pgd)"
                    )))
                }
            };
            save_signal(&x_hat, &out)?;
            println!("{algorithm}: {summary}; estimate written to {}", out.display());
            if let Some(truth_path) = truth {
                let x_star = data::load_signal(&truth_path)?;
                let mse = analysis::mse(&x_star, &x_hat)?;
                match analysis::nmse(&x_star, &x_hat) {
                    Ok(nmse) => println!("mse {mse:.6}  nmse {nmse:.6}"),
                    Err(_) => println!("mse {mse:.6}  nmse undefined (zero vector)"),
                }
            }
            Ok(())
        }
        Command::Sweep {
            config,
            out,
            seed,
            threads,
            algorithms,
        } => {
            let rows = cmd_sweep(&config, &out, seed, threads, algorithms.as_deref())?;
            println!("wrote {rows} result rows to {}", out.display());
            Ok(())
        }
        Command::TheoryCheck { out, seed } => {
            let (csv, all_pass) = cmd_theory_check(out.as_deref(), seed)?;
            print!("{csv}");
            if !all_pass {
                return Err(Error::Numeric(
                    "one or more theory checks missed their target".into(),
                ));
            }
            Ok(())
        }
    }
}

fn describe_gen(r: &ReconResult) -> String {
    let abandoned = r
        .per_restart_losses
        .iter()
        .filter(|l| !l.is_finite())
        .count();
    let mut s = format!(
        "best loss {:.6} over {} restarts ({} gradient steps)",
        r.best_loss,
        r.per_restart_losses.len(),
        r.iterations_used
    );
    if abandoned > 0 {
        s.push_str(&format!("; {abandoned} restarts abandoned"));
    }
    s
}
