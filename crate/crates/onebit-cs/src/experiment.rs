//! Batch experiments: measurement sweeps over (algorithm, m, channel
//! parameters, trial) grids, and self-contained checks of the calibrated
//! statistics and bounds.
//!
//! Determinism: every random object derives from the master seed through
//! fixed stream indices, never from consumed RNG state.
//!
//! * trial signal: `master.derive(1_000_000 + trial)` — shared across all
//!   m values, so rows with the same trial index reconstruct the same signal;
//! * cell base: `master.derive(m_index * trials + trial)` (the row's
//!   `stream_index` column), with children 0 = ensemble, 1 = quantization
//!   noise, 2 = matrix perturbation, 3 + algorithm_index = restarts;
//! * the quantization and perturbation children are re-derived fresh for
//!   every channel grid point, so varying a channel parameter keeps the
//!   underlying noise draws common — paired comparisons across the grid.
//!
//! Cells are independent, so runs with `threads > 1` produce byte-identical
//! CSV output (the wall-clock column aside).

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    covering_number_bound, f_statistic, hamming_dist, mean_width_mc, measurement_bound, mse, nmse,
};
use crate::data::{load_signals, sample_sparse, SparseSpec, ValueDist};
use crate::error::{Error, Result};
use crate::io::write_text_file;
use crate::linalg::norm;
use crate::model::{load_model, random_mlp, Activation, MlpGenerator};
use crate::recon::{
    biht, gen_pgd, reconstruct_gen, reconstruct_gen_noise_aware, yp_convex, GenOpts, PgdOpts,
};
use crate::rng::RngStream;
use crate::sensing::{
    make_ensemble, perturb_matrix, quantize, sign_vec, EnsembleKind, MeasurementEnsemble,
    NoiseConfig,
};
use crate::train::{export_decoder, save_vae, train_vae, write_training_curve, EpochStats,
    TrainConfig, VaeArch};

fn default_format_version() -> u32 {
    1
}

fn default_threads() -> usize {
    1
}

fn default_noise_grid() -> Vec<f64> {
    vec![0.0]
}

fn default_alpha_grid() -> Vec<f64> {
    vec![1.0]
}

fn default_perturb_grid() -> Vec<f64> {
    vec![0.0]
}

fn default_ensemble() -> String {
    EnsembleKind::GaussianIid.name().to_string()
}

fn default_value_dist() -> String {
    ValueDist::Uniform01.name().to_string()
}

fn default_true() -> bool {
    true
}

fn default_biht_iters() -> usize {
    100
}

fn default_tau() -> f64 {
    1.0
}

/// Where trial signals come from.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SignalSpec {
    /// Fresh k-sparse draws.
    Sparse {
        n: usize,
        k: usize,
        #[serde(default = "default_value_dist")]
        value_dist: String,
        #[serde(default = "default_true")]
        normalize: bool,
    },
    /// x* = decoder(z0) with z0 standard normal; requires `model_path`.
    InRange {
        #[serde(default)]
        normalize_to: Option<f64>,
    },
    /// Items of a stored dataset (JSON or IDX images), cycled by trial index.
    #[serde(alias = "idx")]
    Dataset {
        path: String,
        #[serde(default)]
        normalize_to: Option<f64>,
    },
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GenParams {
    pub restarts: usize,
    pub steps_per_restart: usize,
    pub step_size: f64,
    pub latent_radius: Option<f64>,
    pub project_output_unit_ball: bool,
}

impl Default for GenParams {
    fn default() -> Self {
        let o = GenOpts::default();
        GenParams {
            restarts: o.restarts,
            steps_per_restart: o.steps_per_restart,
            step_size: o.step_size,
            latent_radius: o.latent_radius,
            project_output_unit_ball: o.project_output_unit_ball,
        }
    }
}

impl GenParams {
    fn to_opts(&self) -> GenOpts {
        GenOpts {
            restarts: self.restarts,
            steps_per_restart: self.steps_per_restart,
            step_size: self.step_size,
            latent_radius: self.latent_radius,
            project_output_unit_ball: self.project_output_unit_ball,
            alpha_known: None,
            parallel_restarts: false,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BihtParams {
    pub sparsity: usize,
    #[serde(default = "default_biht_iters")]
    pub iters: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct YpParams {
    pub l1_budget: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PgdParams {
    pub restarts: usize,
    pub outer_steps: usize,
    pub tau: f64,
    pub inner_steps: usize,
    pub inner_step_size: f64,
}

impl Default for PgdParams {
    fn default() -> Self {
        let o = PgdOpts::default();
        PgdParams {
            restarts: o.restarts,
            outer_steps: o.outer_steps,
            tau: o.tau,
            inner_steps: o.inner_steps,
            inner_step_size: o.inner_step_size,
        }
    }
}

impl PgdParams {
    fn to_opts(&self) -> PgdOpts {
        PgdOpts {
            restarts: self.restarts,
            outer_steps: self.outer_steps,
            tau: self.tau,
            inner_steps: self.inner_steps,
            inner_step_size: self.inner_step_size,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Gen(GenParams),
    /// Same optimizer with the correlation term rescaled by the cell's true
    /// keep probability.
    GenNoiseAware(GenParams),
    Biht(BihtParams),
    Yp(YpParams),
    GenPgd(PgdParams),
}

impl AlgorithmSpec {
    pub fn label(&self) -> &'static str {
        match self {
            AlgorithmSpec::Gen(_) => "gen",
            AlgorithmSpec::GenNoiseAware(_) => "gen_noise_aware",
            AlgorithmSpec::Biht(_) => "biht",
            AlgorithmSpec::Yp(_) => "yp",
            AlgorithmSpec::GenPgd(_) => "gen_pgd",
        }
    }

    fn needs_decoder(&self) -> bool {
        matches!(
            self,
            AlgorithmSpec::Gen(_) | AlgorithmSpec::GenNoiseAware(_) | AlgorithmSpec::GenPgd(_)
        )
    }

    fn validate(&self) -> Result<()> {
        match self {
            AlgorithmSpec::Gen(p) | AlgorithmSpec::GenNoiseAware(p) => p.to_opts().validate(),
            AlgorithmSpec::Biht(p) => {
                if p.sparsity == 0 {
                    return Err(Error::InvalidArgument(
                        "biht sparsity must be at least 1".into(),
                    ));
                }
                if !(p.tau > 0.0 && p.tau.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "biht tau must be positive and finite, got {}",
                        p.tau
                    )));
                }
                Ok(())
            }
            AlgorithmSpec::Yp(p) => {
                if !(p.l1_budget > 0.0 && p.l1_budget.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "yp l1 budget must be positive and finite, got {}",
                        p.l1_budget
                    )));
                }
                Ok(())
            }
            AlgorithmSpec::GenPgd(p) => p.to_opts().validate(),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    #[serde(default)]
    pub master_seed: u64,
    pub trials: usize,
    pub m_values: Vec<usize>,
    #[serde(default = "default_noise_grid")]
    pub noise_variances: Vec<f64>,
    #[serde(default = "default_alpha_grid")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_perturb_grid")]
    pub perturb_variances: Vec<f64>,
    #[serde(default = "default_ensemble")]
    pub ensemble: String,
    pub signal: SignalSpec,
    /// Decoder file for the generative algorithms and `in_range` signals.
    #[serde(default)]
    pub model_path: Option<String>,
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

/// One sweep cell outcome. Empty metric fields mean the quantity was
/// undefined for the produced estimate; a non-`ok` status explains why
/// fields are missing.
#[derive(Clone, Debug)]
pub struct ResultRow {
    pub algorithm: &'static str,
    pub m: usize,
    pub v_n: f64,
    pub alpha: f64,
    pub v_delta: f64,
    pub trial: usize,
    pub mse: Option<f64>,
    pub nmse: Option<f64>,
    pub hamming: Option<f64>,
    pub best_loss: Option<f64>,
    pub seconds: f64,
    pub status: String,
    pub master_seed: u64,
    pub stream_index: u64,
    pub config_hash: String,
}

pub const RESULTS_FORMAT_COMMENT: &str = "# results_format=1";
pub const RESULTS_HEADER: &str =
    "algorithm,m,v_n,alpha,v_delta,trial,mse,nmse,hamming,best_loss,seconds,status,master_seed,stream_index,config_hash";

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.algorithm,
            self.m,
            self.v_n,
            self.alpha,
            self.v_delta,
            self.trial,
            opt_cell(self.mse),
            opt_cell(self.nmse),
            opt_cell(self.hamming),
            opt_cell(self.best_loss),
            self.seconds,
            self.status,
            self.master_seed,
            self.stream_index,
            self.config_hash
        )
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    out.push_str(RESULTS_FORMAT_COMMENT);
    out.push('\n');
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

/// FNV-1a over the canonical JSON serialization, as a 16-digit hex string.
pub fn config_hash_hex(canonical: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

fn sanitize_status(s: &str) -> String {
    s.replace(',', ";").replace('\n', " ")
}

enum SignalSource {
    Sparse(SparseSpec),
    InRange { normalize_to: Option<f64> },
    Dataset { items: Vec<Vec<f64>>, normalize_to: Option<f64> },
}

impl SignalSource {
    fn draw(
        &self,
        trial: usize,
        decoder: Option<&MlpGenerator>,
        stream: &mut RngStream,
    ) -> Result<Vec<f64>> {
        let (raw, normalize_to) = match self {
            SignalSource::Sparse(spec) => return sample_sparse(spec, stream),
            SignalSource::InRange { normalize_to } => {
                let g = decoder.expect("in_range requires a decoder");
                let z0 = stream.sample_gaussian(g.latent_dim(), 0.0, 1.0)?;
                (g.forward(&z0)?, *normalize_to)
            }
            SignalSource::Dataset { items, normalize_to } => {
                (items[trial % items.len()].clone(), *normalize_to)
            }
        };
        match normalize_to {
            None => Ok(raw),
            Some(target) => {
                let len = norm(&raw);
                if len == 0.0 {
                    return Err(Error::DegenerateInput(
                        "cannot rescale a zero trial signal".into(),
                    ));
                }
                Ok(raw.iter().map(|v| v * target / len).collect())
            }
        }
    }
}

struct ResolvedSweep {
    ensemble_kind: EnsembleKind,
    signal: SignalSource,
    decoder: Option<MlpGenerator>,
    n: usize,
}

fn resolve_sweep(config: &SweepConfig) -> Result<ResolvedSweep> {
    if config.format_version != 1 {
        return Err(Error::InvalidArgument(format!(
            "unsupported sweep format_version {}",
            config.format_version
        )));
    }
    if config.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if config.m_values.is_empty() || config.m_values.iter().any(|&m| m == 0) {
        return Err(Error::InvalidArgument(
            "m_values must be nonempty and positive".into(),
        ));
    }
    if config.m_values.len() * config.trials > 1_000_000 {
        return Err(Error::InvalidArgument(
            "at most 1000000 cells per sweep are supported".into(),
        ));
    }
    if config.threads == 0 {
        return Err(Error::InvalidArgument("threads must be at least 1".into()));
    }
    if config.algorithms.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one algorithm is required".into(),
        ));
    }
    for spec in &config.algorithms {
        spec.validate()?;
    }
    for &v in &config.noise_variances {
        NoiseConfig::new(v, 1.0)?;
    }
    for &a in &config.alphas {
        NoiseConfig::new(0.0, a)?;
    }
    if config.noise_variances.is_empty()
        || config.alphas.is_empty()
        || config.perturb_variances.is_empty()
    {
        return Err(Error::InvalidArgument(
            "channel parameter grids must be nonempty".into(),
        ));
    }
    for &v in &config.perturb_variances {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "perturbation variance must be nonnegative and finite, got {v}"
            )));
        }
    }
    let ensemble_kind = EnsembleKind::parse(&config.ensemble).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "unknown ensemble \"{}\" (expected gaussian_iid or unit_sphere_columns)",
            config.ensemble
        ))
    })?;

    let needs_decoder = config.algorithms.iter().any(|a| a.needs_decoder())
        || matches!(config.signal, SignalSpec::InRange { .. });
    let decoder = if needs_decoder {
        let path = config.model_path.as_ref().ok_or_else(|| {
            Error::InvalidArgument(
                "model_path is required by the configured algorithms or signal source".into(),
            )
        })?;
        Some(load_model(Path::new(path))?)
    } else {
        None
    };

    let signal = match &config.signal {
        SignalSpec::Sparse {
            n,
            k,
            value_dist,
            normalize,
        } => {
            let dist = ValueDist::parse(value_dist).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown value_dist \"{value_dist}\" (expected uniform_01 or uniform_half_one)"
                ))
            })?;
            SignalSource::Sparse(SparseSpec::new(*n, *k, dist, *normalize)?)
        }
        SignalSpec::InRange { normalize_to } => SignalSource::InRange {
            normalize_to: *normalize_to,
        },
        SignalSpec::Dataset { path, normalize_to } => {
            let items = load_signals(Path::new(path))?;
            if items.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "dataset {path} holds no signals"
                )));
            }
            SignalSource::Dataset {
                items,
                normalize_to: *normalize_to,
            }
        }
    };

    let n = match &signal {
        SignalSource::Sparse(spec) => spec.n,
        SignalSource::InRange { .. } => decoder.as_ref().unwrap().output_dim(),
        SignalSource::Dataset { items, .. } => items[0].len(),
    };
    if let Some(d) = &decoder {
        if d.output_dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "decoder emits dimension {} but trial signals have dimension {n}",
                d.output_dim()
            )));
        }
    }
    Ok(ResolvedSweep {
        ensemble_kind,
        signal,
        decoder,
        n,
    })
}

struct CellOutcome {
    mse: Option<f64>,
    nmse: Option<f64>,
    hamming: Option<f64>,
    best_loss: Option<f64>,
    seconds: f64,
    status: String,
}

fn run_algorithm(
    spec: &AlgorithmSpec,
    decoder: Option<&MlpGenerator>,
    ensemble: &MeasurementEnsemble,
    y: &[f64],
    alpha: f64,
    stream: &RngStream,
) -> Result<(Vec<f64>, Option<f64>)> {
    match spec {
        AlgorithmSpec::Gen(p) => {
            let r = reconstruct_gen(decoder.unwrap(), &ensemble.matrix, y, &p.to_opts(), stream)?;
            Ok((r.x_hat, Some(r.best_loss)))
        }
        AlgorithmSpec::GenNoiseAware(p) => {
            let r = reconstruct_gen_noise_aware(
                decoder.unwrap(),
                &ensemble.matrix,
                y,
                alpha,
                &p.to_opts(),
                stream,
            )?;
            Ok((r.x_hat, Some(r.best_loss)))
        }
        AlgorithmSpec::Biht(p) => Ok((
            biht(&ensemble.matrix, y, p.sparsity, p.iters, p.tau)?,
            None,
        )),
        AlgorithmSpec::Yp(p) => Ok((yp_convex(&ensemble.matrix, y, p.l1_budget)?, None)),
        AlgorithmSpec::GenPgd(p) => {
            let r = gen_pgd(decoder.unwrap(), &ensemble.matrix, y, &p.to_opts(), stream)?;
            Ok((r.x_hat, Some(r.best_loss)))
        }
    }
}

fn evaluate_cell_point(
    spec: &AlgorithmSpec,
    decoder: Option<&MlpGenerator>,
    run_ensemble: &MeasurementEnsemble,
    y: &[f64],
    x_star: &[f64],
    alpha: f64,
    stream: &RngStream,
) -> CellOutcome {
    let start = Instant::now();
    let attempt = run_algorithm(spec, decoder, run_ensemble, y, alpha, stream);
    let seconds = start.elapsed().as_secs_f64();
    match attempt {
        Err(e) => CellOutcome {
            mse: None,
            nmse: None,
            hamming: None,
            best_loss: None,
            seconds,
            status: sanitize_status(&e.to_string()),
        },
        Ok((x_hat, best_loss)) => {
            let mut status = String::from("ok");
            let note = |e: &Error, status: &mut String| {
                if status == "ok" {
                    *status = sanitize_status(&format!("metric: {e}"));
                }
            };
            let mse_v = match mse(x_star, &x_hat) {
                Ok(v) => Some(v),
                Err(e) => {
                    note(&e, &mut status);
                    None
                }
            };
            let nmse_v = match nmse(x_star, &x_hat) {
                Ok(v) => Some(v),
                Err(e) => {
                    note(&e, &mut status);
                    None
                }
            };
            let hamming_v = match run_ensemble
                .matrix
                .matvec(&x_hat)
                .and_then(|ax| hamming_dist(&sign_vec(&ax), y))
            {
                Ok(v) => Some(v),
                Err(e) => {
                    note(&e, &mut status);
                    None
                }
            };
            CellOutcome {
                mse: mse_v,
                nmse: nmse_v,
                hamming: hamming_v,
                best_loss,
                seconds,
                status,
            }
        }
    }
}

/// Runs the full grid and returns rows ordered by
/// algorithm, m, v_n, alpha, v_delta, trial.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<ResultRow>> {
    let resolved = resolve_sweep(config)?;
    // The hash identifies the experiment, not the execution: thread count
    // never changes the rows, so it is pinned before serializing.
    let mut canonical_config = config.clone();
    canonical_config.threads = 1;
    let canonical = serde_json::to_string(&canonical_config)
        .map_err(|e| Error::InvalidArgument(format!("config not serializable: {e}")))?;
    let hash = config_hash_hex(&canonical);
    let master = RngStream::new(config.master_seed);

    let vn_count = config.noise_variances.len();
    let alpha_count = config.alphas.len();
    let vd_count = config.perturb_variances.len();
    let alg_count = config.algorithms.len();
    let points_per_cell = alg_count * vn_count * alpha_count * vd_count;
    let key = |alg_idx: usize, vn_idx: usize, a_idx: usize, vd_idx: usize| {
        ((alg_idx * vn_count + vn_idx) * alpha_count + a_idx) * vd_count + vd_idx
    };

    let run_cell = |cell_index: usize| -> Result<Vec<CellOutcome>> {
        let m_idx = cell_index / config.trials;
        let trial = cell_index % config.trials;
        let m = config.m_values[m_idx];
        let base = master.derive(cell_index as u64);
        let mut signal_stream = master.derive(1_000_000 + trial as u64);
        let x_star = resolved
            .signal
            .draw(trial, resolved.decoder.as_ref(), &mut signal_stream)?;
        let ensemble = make_ensemble(resolved.ensemble_kind, m, resolved.n, &mut base.derive(0))?;

        let mut outcomes: Vec<Option<CellOutcome>> = Vec::new();
        outcomes.resize_with(points_per_cell, || None);
        for (vn_idx, &v_n) in config.noise_variances.iter().enumerate() {
            for (a_idx, &alpha) in config.alphas.iter().enumerate() {
                let noise = NoiseConfig::new(v_n, alpha)?;
                let mut q_stream = base.derive(1);
                let obs = quantize(&ensemble, &x_star, &noise, &mut q_stream)?;
                for (vd_idx, &v_delta) in config.perturb_variances.iter().enumerate() {
                    let mut p_stream = base.derive(2);
                    let run_ensemble = perturb_matrix(&ensemble, v_delta, &mut p_stream)?;
                    for (alg_idx, spec) in config.algorithms.iter().enumerate() {
                        let alg_stream = base.derive(3 + alg_idx as u64);
                        let outcome = evaluate_cell_point(
                            spec,
                            resolved.decoder.as_ref(),
                            &run_ensemble,
                            &obs.y,
                            &x_star,
                            alpha,
                            &alg_stream,
                        );
                        outcomes[key(alg_idx, vn_idx, a_idx, vd_idx)] = Some(outcome);
                    }
                }
            }
        }
        Ok(outcomes.into_iter().map(|o| o.unwrap()).collect())
    };

    let cell_count = config.m_values.len() * config.trials;
    let cells: Vec<Vec<CellOutcome>> = if config.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
        pool.install(|| {
            (0..cell_count)
                .into_par_iter()
                .map(run_cell)
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        (0..cell_count).map(run_cell).collect::<Result<Vec<_>>>()?
    };

    let mut rows = Vec::with_capacity(cell_count * points_per_cell);
    for (alg_idx, spec) in config.algorithms.iter().enumerate() {
        for (m_idx, &m) in config.m_values.iter().enumerate() {
            for (vn_idx, &v_n) in config.noise_variances.iter().enumerate() {
                for (a_idx, &alpha) in config.alphas.iter().enumerate() {
                    for (vd_idx, &v_delta) in config.perturb_variances.iter().enumerate() {
                        for trial in 0..config.trials {
                            let cell_index = m_idx * config.trials + trial;
                            let o = &cells[cell_index][key(alg_idx, vn_idx, a_idx, vd_idx)];
                            rows.push(ResultRow {
                                algorithm: spec.label(),
                                m,
                                v_n,
                                alpha,
                                v_delta,
                                trial,
                                mse: o.mse,
                                nmse: o.nmse,
                                hamming: o.hamming,
                                best_loss: o.best_loss,
                                seconds: o.seconds,
                                status: o.status.clone(),
                                master_seed: config.master_seed,
                                stream_index: cell_index as u64,
                                config_hash: hash.clone(),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}

pub fn load_sweep_config(path: &Path) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

/// Loads a sweep config, applies overrides, runs it, and writes the CSV.
pub fn cmd_sweep(
    config_path: &Path,
    out: &Path,
    seed_override: Option<u64>,
    threads_override: Option<usize>,
    algorithms_filter: Option<&[String]>,
) -> Result<usize> {
    let mut config = load_sweep_config(config_path)?;
    if let Some(seed) = seed_override {
        config.master_seed = seed;
    }
    if let Some(threads) = threads_override {
        config.threads = threads;
    }
    if let Some(labels) = algorithms_filter {
        for label in labels {
            if !config.algorithms.iter().any(|a| a.label() == label) {
                return Err(Error::InvalidArgument(format!(
                    "algorithm \"{label}\" is not in the config (available: {})",
                    config
                        .algorithms
                        .iter()
                        .map(|a| a.label())
                        .collect::<Vec<_>>()
                        .join(", ")
                )));
            }
        }
        config
            .algorithms
            .retain(|a| labels.iter().any(|l| l == a.label()));
    }
    let rows = run_sweep(&config)?;
    write_text_file(out, &rows_to_csv(&rows))?;
    Ok(rows.len())
}

/// One self-check of a calibrated statistic or bound.
#[derive(Clone, Debug)]
pub struct TheoryCheckRow {
    pub quantity: &'static str,
    pub samples: u64,
    pub estimate: f64,
    pub target: f64,
    pub abs_error: f64,
    pub pass: bool,
}

pub const THEORY_HEADER: &str = "quantity,samples,estimate,target,abs_error,pass";

pub fn theory_rows_to_csv(rows: &[TheoryCheckRow]) -> String {
    let mut out = String::from(THEORY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.quantity, r.samples, r.estimate, r.target, r.abs_error, r.pass
        ));
    }
    out
}

fn check_row(
    quantity: &'static str,
    samples: u64,
    estimate: f64,
    target: f64,
    tolerance: f64,
) -> TheoryCheckRow {
    let abs_error = (estimate - target).abs();
    TheoryCheckRow {
        quantity,
        samples,
        estimate,
        target,
        abs_error,
        pass: abs_error <= tolerance,
    }
}

/// Monte Carlo verification of every calibrated constant: the correlation
/// statistic clean and under flips, the width estimator on sets with known
/// width, sampled distortion against the product Lipschitz bound, and the
/// two closed-form bounds on reference inputs.
pub fn run_theory_checks(master_seed: u64) -> Result<Vec<TheoryCheckRow>> {
    let master = RngStream::new(master_seed);
    let mut rows = Vec::new();
    let sqrt_2_over_pi = (2.0 / std::f64::consts::PI).sqrt();

    {
        let m = 200_000;
        let mut stream = master.derive(0);
        let e = make_ensemble(EnsembleKind::GaussianIid, m, 4, &mut stream)?;
        let raw = stream.sample_gaussian(4, 0.0, 1.0)?;
        let len = norm(&raw);
        let x: Vec<f64> = raw.iter().map(|v| v / len).collect();
        let clean = quantize(&e, &x, &NoiseConfig::noiseless(), &mut stream.derive(0))?;
        let f_clean = f_statistic(&e.matrix, &clean.y, &x)?;
        rows.push(check_row("f_sign", m as u64, f_clean, sqrt_2_over_pi, 0.01));

        let alpha = 0.85;
        let flipped = quantize(&e, &x, &NoiseConfig::new(0.0, alpha)?, &mut stream.derive(1))?;
        let f_flipped = f_statistic(&e.matrix, &flipped.y, &x)?;
        rows.push(check_row(
            "f_flip_085",
            m as u64,
            f_flipped,
            sqrt_2_over_pi * (2.0 * alpha - 1.0),
            0.01,
        ));
    }

    {
        let trials = 200_000;
        let mut stream = master.derive(1);
        let two_point = vec![vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]];
        let w = mean_width_mc(&two_point, trials, &mut stream)?;
        rows.push(check_row(
            "mean_width_two_point",
            trials as u64,
            w,
            2.0 * sqrt_2_over_pi,
            0.02,
        ));
        let singleton = vec![vec![0.4, -0.2, 0.9]];
        let w1 = mean_width_mc(&singleton, 1000, &mut stream)?;
        rows.push(check_row("mean_width_singleton", 1000, w1, 0.0, 1e-12));
    }

    {
        let nets = 20;
        let pairs = 1000;
        let mut stream = master.derive(2);
        let mut worst = 0.0f64;
        for net_idx in 0..nets {
            let acts = [Activation::Relu, Activation::Sigmoid, Activation::Tanh];
            let dims: &[usize] = match net_idx % 3 {
                0 => &[3, 10, 6],
                1 => &[4, 8, 8, 5],
                _ => &[2, 12],
            };
            let scale = 0.3 + 0.05 * net_idx as f64;
            let g = random_mlp(
                dims,
                acts[net_idx % 3],
                Activation::Identity,
                scale,
                &mut stream,
            )?;
            let bound = g.lipschitz_bound();
            for _ in 0..pairs {
                let za = stream.sample_gaussian(g.latent_dim(), 0.0, 4.0)?;
                let zb = stream.sample_gaussian(g.latent_dim(), 0.0, 4.0)?;
                let dz = norm(&crate::linalg::sub_vec(&za, &zb));
                if dz == 0.0 {
                    continue;
                }
                let dx = norm(&crate::linalg::sub_vec(
                    &g.forward(&za)?,
                    &g.forward(&zb)?,
                ));
                worst = worst.max(dx / (dz * bound));
            }
        }
        let row = TheoryCheckRow {
            quantity: "lipschitz_ratio_max",
            samples: (nets * pairs) as u64,
            estimate: worst,
            target: 1.0,
            abs_error: (worst - 1.0).max(0.0),
            pass: worst <= 1.0 + 1e-9,
        };
        rows.push(row);
    }

    {
        let b = measurement_bound(8, 3.0, 3, 1.0, 64, 0.5, 0.5, 1.0)?;
        rows.push(check_row("measurement_bound_reference", 1, b.m as f64, 621.0, 0.0));
        let c = covering_number_bound(6, 1.0, 2.0)?;
        rows.push(check_row("covering_bound_reference", 1, c, 64.0, 0.0));
    }

    Ok(rows)
}

pub fn cmd_theory_check(out: Option<&Path>, master_seed: u64) -> Result<(String, bool)> {
    let rows = run_theory_checks(master_seed)?;
    let csv = theory_rows_to_csv(&rows);
    if let Some(path) = out {
        write_text_file(path, &csv)?;
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok((csv, all_pass))
}

/// End-to-end training driver configuration: dataset in, trained artifacts
/// out. Paths are taken as given (relative paths resolve against the
/// working directory).
#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct TrainDriverConfig {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub data_path: String,
    pub arch: VaeArch,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub out_vae: Option<String>,
    #[serde(default)]
    pub out_decoder: Option<String>,
    #[serde(default)]
    pub out_curve: Option<String>,
}

pub fn load_train_config(path: &Path) -> Result<TrainDriverConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let config: TrainDriverConfig =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    if config.format_version != 1 {
        return Err(Error::parse(
            path,
            format!("unsupported train format_version {}", config.format_version),
        ));
    }
    if config.out_vae.is_none() && config.out_decoder.is_none() && config.out_curve.is_none() {
        return Err(Error::InvalidArgument(
            "train config requests no output files".into(),
        ));
    }
    Ok(config)
}

/// Trains per the config file and writes the requested artifacts; returns
/// the per-epoch statistics.
pub fn cmd_train(config_path: &Path) -> Result<Vec<EpochStats>> {
    let config = load_train_config(config_path)?;
    let data = load_signals(Path::new(&config.data_path))?;
    let (vae, stats) = train_vae(&data, &config.arch, &config.train)?;
    if let Some(path) = &config.out_vae {
        save_vae(&vae, Path::new(path))?;
    }
    if let Some(path) = &config.out_decoder {
        crate::model::save_model(&export_decoder(&vae), Path::new(path))?;
    }
    if let Some(path) = &config.out_curve {
        write_training_curve(&stats, Path::new(path))?;
    }
    Ok(stats)
}
