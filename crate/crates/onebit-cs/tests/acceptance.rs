//! Acceptance suite: one test per release criterion, each printing a single
//! `[criterion N] PASS/FAIL` line (visible with `--nocapture`).
//!
//! Criteria that need a trained decoder share one training run (reference
//! seed 20240601) through a `OnceLock`. Tests serialize on a global mutex so
//! the per-criterion wall-clock limits are measured without contention.

use std::path::PathBuf;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use onebit_cs::analysis::{f_statistic, mean_width_mc};
use onebit_cs::data::{normalize_unit, sample_sparse, SparseSpec, ValueDist};
use onebit_cs::experiment::{
    cmd_sweep, run_sweep, AlgorithmSpec, BihtParams, GenParams, PgdParams, ResultRow, SignalSpec,
    SweepConfig, YpParams,
};
use onebit_cs::linalg::{dot, l1_norm, norm, scale, sub_vec};
use onebit_cs::model::{random_mlp, save_model};
use onebit_cs::recon::{
    correlation_scale, loss_gen, project_l1_ball, reconstruct_gen, yp_convex, GenOpts,
};
use onebit_cs::sensing::{make_ensemble, quantize, EnsembleKind, NoiseConfig};
use onebit_cs::train::{export_decoder, train_vae, TrainConfig, VaeArch};
use onebit_cs::{Activation, DenseMatrix, MlpGenerator, MlpLayer, RngStream};

const REFERENCE_SEED: u64 = 20240601;

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the criterion verdict line and fails the test on FAIL.
fn report(criterion: u32, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("[criterion {criterion}] {verdict}: {detail}");
    assert!(ok, "[criterion {criterion}] {verdict}: {detail}");
}

fn within_limit(elapsed: Duration, limit: Duration) -> bool {
    elapsed <= limit
}

// ---------------------------------------------------------------------------
// Shared artifacts
// ---------------------------------------------------------------------------

struct DecoderArtifacts {
    _dir: tempfile::TempDir,
    decoder_path: PathBuf,
    decoder: MlpGenerator,
    train_seconds: f64,
}

static DECODER: OnceLock<DecoderArtifacts> = OnceLock::new();

/// Trains the shared reference decoder: 10^4 sparse samples (n=64, k=4),
/// latent dimension 8, hidden layers 32-32, 50 epochs.
fn decoder_artifacts() -> &'static DecoderArtifacts {
    DECODER.get_or_init(|| {
        let start = Instant::now();
        let spec = SparseSpec::new(64, 4, ValueDist::UniformHalfOne, false).unwrap();
        let mut data_stream = RngStream::new(REFERENCE_SEED).derive(600);
        let data: Vec<Vec<f64>> = (0..10_000)
            .map(|_| sample_sparse(&spec, &mut data_stream).unwrap())
            .collect();
        let arch = VaeArch {
            latent_dim: 8,
            encoder_hidden: vec![32, 32],
            decoder_hidden: vec![32, 32],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Sigmoid,
        };
        let config = TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: REFERENCE_SEED,
            ..TrainConfig::default()
        };
        let (vae, stats) = train_vae(&data, &arch, &config).unwrap();
        let first = stats.first().unwrap().mean_loss;
        let last = stats.last().unwrap().mean_loss;
        assert!(
            last < 0.5 * first,
            "reference training failed to converge: first epoch {first}, last epoch {last}"
        );
        let decoder = export_decoder(&vae);
        let dir = tempfile::tempdir().unwrap();
        let decoder_path = dir.path().join("decoder.json");
        save_model(&decoder, &decoder_path).unwrap();
        DecoderArtifacts {
            _dir: dir,
            decoder_path,
            decoder,
            train_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

/// Latent-descent settings used by every trend criterion.
fn trend_gen_params() -> GenParams {
    GenParams {
        restarts: 20,
        steps_per_restart: 100,
        step_size: 0.05,
        ..GenParams::default()
    }
}

fn trend_config_base() -> SweepConfig {
    let artifacts = decoder_artifacts();
    SweepConfig {
        format_version: 1,
        master_seed: REFERENCE_SEED,
        trials: 20,
        m_values: vec![],
        noise_variances: vec![0.0],
        alphas: vec![1.0],
        perturb_variances: vec![0.0],
        ensemble: "unit_sphere_columns".into(),
        signal: SignalSpec::InRange {
            normalize_to: Some(1.0),
        },
        model_path: Some(artifacts.decoder_path.display().to_string()),
        algorithms: vec![],
        threads: 4,
    }
}

/// The reference trend configuration: unit-normalized in-range signals,
/// m grid {25,...,400}, latent descent vs both sparse baselines.
fn reference_trend_config() -> SweepConfig {
    let mut config = trend_config_base();
    config.m_values = vec![25, 50, 100, 200, 400];
    config.algorithms = vec![
        AlgorithmSpec::Gen(trend_gen_params()),
        AlgorithmSpec::Biht(BihtParams {
            sparsity: 4,
            iters: 100,
            tau: 1.0,
        }),
        AlgorithmSpec::Yp(YpParams { l1_budget: 2.0 }),
    ];
    config
}

struct SweepArtifacts {
    rows: Vec<ResultRow>,
}

static REFERENCE_SWEEP: OnceLock<SweepArtifacts> = OnceLock::new();

fn reference_sweep() -> &'static SweepArtifacts {
    REFERENCE_SWEEP.get_or_init(|| SweepArtifacts {
        rows: run_sweep(&reference_trend_config()).unwrap(),
    })
}

fn assert_all_ok(rows: &[ResultRow]) {
    for r in rows {
        assert_eq!(
            r.status, "ok",
            "sweep cell failed: algorithm={} m={} alpha={} v_delta={} trial={} status={}",
            r.algorithm, r.m, r.alpha, r.v_delta, r.trial, r.status
        );
    }
}

fn mean_where(
    rows: &[ResultRow],
    keep: impl Fn(&ResultRow) -> bool,
    metric: impl Fn(&ResultRow) -> Option<f64>,
) -> f64 {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| keep(r))
        .map(|r| metric(r).expect("metric missing on an ok row"))
        .collect();
    assert!(!vals.is_empty(), "no rows matched the filter");
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn mean_nmse(rows: &[ResultRow], algorithm: &str, m: usize) -> f64 {
    mean_where(
        rows,
        |r| r.algorithm == algorithm && r.m == m,
        |r| r.nmse,
    )
}

// ---------------------------------------------------------------------------
// Criterion 1: reverse-mode input gradients match finite differences
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_vjp_matches_finite_differences() {
    let _g = gate();
    let start = Instant::now();
    let kinds = [
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Identity,
    ];
    let mut stream = RngStream::new(REFERENCE_SEED).derive(1);
    let mut components = 0usize;
    let mut worst_rel = 0.0f64;
    for i in 0..100 {
        let depth = 1 + i % 4;
        let mut dims = Vec::with_capacity(depth + 1);
        for _ in 0..=depth {
            dims.push(1 + stream.index(32));
        }
        let hidden = kinds[i % 4];
        let output = kinds[(i / 4) % 4];
        let max_width = *dims.iter().max().unwrap() as f64;
        let g = random_mlp(&dims, hidden, output, 0.8 / max_width.sqrt(), &mut stream).unwrap();
        let z = stream.sample_gaussian(dims[0], 0.0, 1.0).unwrap();
        let cot = stream.sample_gaussian(*dims.last().unwrap(), 0.0, 1.0).unwrap();
        let analytic = g.vjp(&z, &cot).unwrap();
        let h = 1e-5;
        for j in 0..z.len() {
            let mut zp = z.clone();
            zp[j] += h;
            let mut zm = z.clone();
            zm[j] -= h;
            let fp = dot(&g.forward(&zp).unwrap(), &cot);
            let fm = dot(&g.forward(&zm).unwrap(), &cot);
            let fd = (fp - fm) / (2.0 * h);
            let denom = analytic[j].abs().max(fd.abs());
            let diff = (analytic[j] - fd).abs();
            components += 1;
            if denom < 1e-6 {
                assert!(
                    diff <= 1e-2,
                    "net {i} coord {j}: tiny-denominator disagreement {diff}"
                );
            } else {
                let rel = diff / denom;
                worst_rel = worst_rel.max(rel);
                assert!(
                    rel <= 1e-4,
                    "net {i} coord {j}: relative error {rel} (analytic {}, fd {fd})",
                    analytic[j]
                );
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        within_limit(elapsed, Duration::from_secs(10)),
        &format!(
            "100 nets, {components} gradient components, worst relative error {worst_rel:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: correlation statistic concentrates at sqrt(2/pi), attenuated
// by 2*alpha - 1 under the flip channel
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_correlation_statistic_concentration() {
    let _g = gate();
    let start = Instant::now();
    let mut stream = RngStream::new(REFERENCE_SEED).derive(2);
    let (m, n) = (200_000, 32);
    let e = make_ensemble(EnsembleKind::GaussianIid, m, n, &mut stream).unwrap();
    let x = normalize_unit(&stream.sample_gaussian(n, 0.0, 1.0).unwrap()).unwrap();
    let target = (2.0 / std::f64::consts::PI).sqrt();

    let clean = quantize(&e, &x, &NoiseConfig::noiseless(), &mut stream).unwrap();
    let f_clean = f_statistic(&e.matrix, &clean.y, &x).unwrap();
    let clean_err = (f_clean - target).abs();

    let flipped = quantize(&e, &x, &NoiseConfig::new(0.0, 0.85).unwrap(), &mut stream).unwrap();
    let f_flip = f_statistic(&e.matrix, &flipped.y, &x).unwrap();
    let flip_err = (f_flip - 0.7 * target).abs();

    let elapsed = start.elapsed();
    let ok = clean_err <= 0.01 && flip_err <= 0.01 && within_limit(elapsed, Duration::from_secs(5));
    report(
        2,
        ok,
        &format!(
            "clean {f_clean:.6} vs {target:.6} (err {clean_err:.4}), flipped {f_flip:.6} vs {:.6} (err {flip_err:.4}), {:.2}s",
            0.7 * target,
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: the 1-D restriction of the surrogate loss has minimizer c/2
// and the latent optimizer finds it
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_one_dimensional_loss_minimizer() {
    let _g = gate();
    let start = Instant::now();
    let mut stream = RngStream::new(REFERENCE_SEED).derive(3);
    let (m, n) = (200, 8);
    let e = make_ensemble(EnsembleKind::GaussianIid, m, n, &mut stream).unwrap();
    let x_star = normalize_unit(&stream.sample_gaussian(n, 0.0, 1.0).unwrap()).unwrap();
    let obs = quantize(&e, &x_star, &NoiseConfig::noiseless(), &mut stream).unwrap();
    let u = normalize_unit(&stream.sample_gaussian(n, 0.0, 1.0).unwrap()).unwrap();

    // Fold the direction into a single-column matrix: the loss restricted to
    // t*u becomes t^2 - c*t with c = correlation_scale(m) * y^T A u.
    let au = e.matrix.matvec(&u).unwrap();
    let c = correlation_scale(m) * dot(&obs.y, &au);
    let t_star = c / 2.0;
    let b = DenseMatrix::new(m, 1, au).unwrap();
    let one_param = MlpGenerator::new(vec![MlpLayer::new(
        DenseMatrix::identity(1),
        vec![0.0],
        Activation::Identity,
    )
    .unwrap()])
    .unwrap();

    let mut grid_best = f64::NAN;
    let mut grid_val = f64::INFINITY;
    for i in -2000..=2000i64 {
        let t = i as f64 * 1e-3;
        let val = loss_gen(&one_param, &[t], &b, &obs.y).unwrap();
        if val < grid_val {
            grid_val = val;
            grid_best = t;
        }
    }
    let grid_err = (grid_best - t_star).abs();

    let opts = GenOpts {
        restarts: 5,
        steps_per_restart: 2000,
        step_size: 0.05,
        ..GenOpts::default()
    };
    let result =
        reconstruct_gen(&one_param, &b, &obs.y, &opts, &RngStream::new(REFERENCE_SEED).derive(33))
            .unwrap();
    let opt_err = (result.x_hat[0] - t_star).abs();

    let elapsed = start.elapsed();
    let ok = grid_err <= 1e-3 + 1e-12
        && opt_err <= 1e-3
        && within_limit(elapsed, Duration::from_secs(1));
    report(
        3,
        ok,
        &format!(
            "t* = {t_star:.6}, grid argmin {grid_best:.6} (err {grid_err:.2e}), optimizer {:.6} (err {opt_err:.2e}), {:.2}s",
            result.x_hat[0],
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: sort-and-threshold l1 projection matches a grid oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_l1_projection_oracle_equivalence() {
    let _g = gate();
    let start = Instant::now();
    let mut stream = RngStream::new(REFERENCE_SEED).derive(4);
    let step = 1e-3;
    let mut worst_gap = f64::NEG_INFINITY;
    for case in 0..50usize {
        let n = 1 + case % 4;
        let v = stream.sample_gaussian(n, 0.0, 2.0).unwrap();
        let radius = 0.1 + 2.4 * stream.uniform();
        let ours = project_l1_ball(&v, radius).unwrap();
        assert!(
            l1_norm(&ours) <= radius + 1e-9,
            "case {case}: projection infeasible by {}",
            l1_norm(&ours) - radius
        );
        let our_dist = norm(&sub_vec(&v, &ours));

        let mut oracle = f64::INFINITY;
        // Dense grid box around the returned point (certifies local, hence
        // convex-global, optimality to grid resolution).
        let span = 13usize;
        let total = span.pow(n as u32);
        for code in 0..total {
            let mut rem = code;
            let mut cand = Vec::with_capacity(n);
            for item in ours.iter().take(n) {
                let digit = (rem % span) as i64 - 6;
                rem /= span;
                let base = (item / step).round() as i64;
                cand.push((base + digit) as f64 * step);
            }
            if l1_norm(&cand) <= radius + 1e-12 {
                oracle = oracle.min(norm(&sub_vec(&v, &cand)));
            }
        }
        // Random feasible grid points guard against a wrong basin.
        for _ in 0..20_000 {
            let gdir = stream.sample_gaussian(n, 0.0, 1.0).unwrap();
            let l1 = l1_norm(&gdir);
            if l1 == 0.0 {
                continue;
            }
            let pt = scale(&gdir, radius * stream.uniform() / l1);
            let snapped: Vec<f64> = pt.iter().map(|x| (x / step).trunc() * step).collect();
            if l1_norm(&snapped) <= radius + 1e-12 {
                oracle = oracle.min(norm(&sub_vec(&v, &snapped)));
            }
        }
        let gap = our_dist - oracle;
        worst_gap = worst_gap.max(gap);
        assert!(
            gap <= 1e-6,
            "case {case}: projection distance {our_dist} exceeds grid oracle {oracle}"
        );
    }
    let elapsed = start.elapsed();
    report(
        4,
        within_limit(elapsed, Duration::from_secs(30)),
        &format!(
            "50 cases feasible and within 1e-6 of the grid oracle (worst slack {worst_gap:.2e}), {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: the correlation-maximizing baseline beats random search
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_convex_baseline_optimality() {
    let _g = gate();
    let start = Instant::now();
    let mut stream = RngStream::new(REFERENCE_SEED).derive(5);
    let mut tightest = f64::INFINITY;
    for case in 0..20usize {
        let n = 2 + case % 5;
        let m = 4 * n;
        let e = make_ensemble(EnsembleKind::GaussianIid, m, n, &mut stream).unwrap();
        let x_star = normalize_unit(&stream.sample_gaussian(n, 0.0, 1.0).unwrap()).unwrap();
        let obs = quantize(&e, &x_star, &NoiseConfig::noiseless(), &mut stream).unwrap();
        let budget = 1.0 + 1.5 * stream.uniform();
        let x_hat = yp_convex(&e.matrix, &obs.y, budget).unwrap();
        let c = e.matrix.matvec_t(&obs.y).unwrap();
        let obj_hat = dot(&c, &x_hat);

        let mut best_random = f64::NEG_INFINITY;
        for _ in 0..10_000 {
            let gdir = stream.sample_gaussian(n, 0.0, 1.0).unwrap();
            let gl2 = norm(&gdir);
            if gl2 == 0.0 {
                continue;
            }
            let r = stream.uniform().powf(1.0 / n as f64);
            let mut u = scale(&gdir, r / gl2);
            let l1 = l1_norm(&u);
            if l1 > budget {
                u = scale(&u, budget / l1);
            }
            best_random = best_random.max(dot(&c, &u));
        }
        tightest = tightest.min(obj_hat - best_random);
        assert!(
            obj_hat + 1e-9 >= best_random,
            "case {case}: returned objective {obj_hat} below random-search {best_random}"
        );
    }
    let elapsed = start.elapsed();
    report(
        5,
        within_limit(elapsed, Duration::from_secs(10)),
        &format!(
            "20 instances beat 10^4-point random search (tightest margin {tightest:.2e}), {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: measurement-count trend with the trained decoder
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_measurement_count_trend() {
    let _g = gate();
    let start = Instant::now();
    let artifacts = decoder_artifacts();
    let rows = &reference_sweep().rows;
    assert_all_ok(rows);
    let grid = [25usize, 50, 100, 200, 400];
    let gen_means: Vec<f64> = grid.iter().map(|&m| mean_nmse(rows, "gen", m)).collect();

    let mut monotone = true;
    for w in gen_means.windows(2) {
        if w[1] > w[0] + 0.01 {
            monotone = false;
        }
    }
    let biht_50 = mean_nmse(rows, "biht", 50);
    let yp_50 = mean_nmse(rows, "yp", 50);
    let gen_50 = gen_means[1];
    let gen_400 = gen_means[4];

    // Amplitude check: signals rescaled to norm 0.7, mean squared error of
    // the latent-descent estimate vs the unit-normalized sparse baseline.
    let mut amp_config = trend_config_base();
    amp_config.m_values = vec![400];
    amp_config.signal = SignalSpec::InRange {
        normalize_to: Some(0.7),
    };
    amp_config.algorithms = vec![
        AlgorithmSpec::Gen(trend_gen_params()),
        AlgorithmSpec::Biht(BihtParams {
            sparsity: 4,
            iters: 100,
            tau: 1.0,
        }),
    ];
    let amp_rows = run_sweep(&amp_config).unwrap();
    assert_all_ok(&amp_rows);
    let gen_mse = mean_where(&amp_rows, |r| r.algorithm == "gen", |r| r.mse);
    let biht_mse = mean_where(&amp_rows, |r| r.algorithm == "biht", |r| r.mse);

    let elapsed = start.elapsed();
    let ok = monotone
        && gen_50 < biht_50
        && gen_50 < yp_50
        && gen_400 <= 0.05
        && gen_mse < biht_mse
        && within_limit(elapsed, Duration::from_secs(480));
    report(
        6,
        ok,
        &format!(
            "gen NMSE {:?} (monotone {monotone}), m=50 gen {gen_50:.4} vs biht {biht_50:.4} / yp {yp_50:.4}, m=400 gen {gen_400:.4} <= 0.05, amplitude MSE gen {gen_mse:.4} < biht {biht_mse:.4}, {:.1}s ({:.1}s training)",
            gen_means
                .iter()
                .map(|v| (v * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            elapsed.as_secs_f64(),
            artifacts.train_seconds
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: degradation under sign flips, mitigated by the flip-aware loss
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_flip_noise_trend() {
    let _g = gate();
    let start = Instant::now();
    // The two variants run as separate single-algorithm sweeps so both draw
    // identical signal, measurement, and restart streams: the comparison then
    // isolates the effect of the flip-compensated loss itself.
    let mut base = trend_config_base();
    base.m_values = vec![100];
    base.noise_variances = vec![0.1];
    base.alphas = vec![1.0, 0.95, 0.9, 0.85];
    let mut plain_config = base.clone();
    plain_config.algorithms = vec![AlgorithmSpec::Gen(trend_gen_params())];
    let mut aware_config = base.clone();
    aware_config.algorithms = vec![AlgorithmSpec::GenNoiseAware(trend_gen_params())];
    let plain_rows = run_sweep(&plain_config).unwrap();
    let aware_rows = run_sweep(&aware_config).unwrap();
    assert_all_ok(&plain_rows);
    assert_all_ok(&aware_rows);

    let gen_by_alpha: Vec<f64> = base
        .alphas
        .iter()
        .map(|&a| {
            mean_where(
                &plain_rows,
                |r| r.algorithm == "gen" && r.alpha == a,
                |r| r.nmse,
            )
        })
        .collect();
    let mut degrades = true;
    for w in gen_by_alpha.windows(2) {
        // alpha decreases along the grid, so the flip rate increases.
        if w[1] < w[0] - 0.01 {
            degrades = false;
        }
    }
    let aware_085 = mean_where(
        &aware_rows,
        |r| r.algorithm == "gen_noise_aware" && r.alpha == 0.85,
        |r| r.nmse,
    );
    let gen_085 = gen_by_alpha[3];

    let elapsed = start.elapsed();
    let ok = degrades && aware_085 <= gen_085 && within_limit(elapsed, Duration::from_secs(180));
    report(
        7,
        ok,
        &format!(
            "gen NMSE by flip rate {:?} (non-decreasing {degrades}), at 15% flips aware {aware_085:.4} <= plain {gen_085:.4}, {:.1}s",
            gen_by_alpha
                .iter()
                .map(|v| (v * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: robustness to measurement-matrix perturbation
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_matrix_perturbation_trend() {
    let _g = gate();
    let start = Instant::now();
    let mut config = trend_config_base();
    config.m_values = vec![200];
    config.perturb_variances = vec![0.0, 0.05, 0.1];
    config.algorithms = vec![
        AlgorithmSpec::Gen(trend_gen_params()),
        AlgorithmSpec::Biht(BihtParams {
            sparsity: 4,
            iters: 100,
            tau: 1.0,
        }),
        AlgorithmSpec::Yp(YpParams { l1_budget: 2.0 }),
    ];
    let rows = run_sweep(&config).unwrap();
    assert_all_ok(&rows);

    let mut ok = true;
    let mut parts = Vec::new();
    for &vd in &config.perturb_variances {
        let gen = mean_where(
            &rows,
            |r| r.algorithm == "gen" && r.v_delta == vd,
            |r| r.nmse,
        );
        let biht = mean_where(
            &rows,
            |r| r.algorithm == "biht" && r.v_delta == vd,
            |r| r.nmse,
        );
        let yp = mean_where(
            &rows,
            |r| r.algorithm == "yp" && r.v_delta == vd,
            |r| r.nmse,
        );
        ok &= gen <= biht && gen <= yp;
        parts.push(format!("v_delta={vd}: gen {gen:.4} vs biht {biht:.4} / yp {yp:.4}"));
    }
    let elapsed = start.elapsed();
    ok &= within_limit(elapsed, Duration::from_secs(120));
    report(
        8,
        ok,
        &format!("{}, {:.1}s", parts.join("; "), elapsed.as_secs_f64()),
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: representation-error plateau on out-of-distribution signals
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_out_of_distribution_plateau() {
    let _g = gate();
    let start = Instant::now();
    let mut config = trend_config_base();
    config.m_values = vec![200, 400];
    config.signal = SignalSpec::Sparse {
        n: 64,
        k: 16,
        value_dist: "uniform_half_one".into(),
        normalize: true,
    };
    config.algorithms = vec![
        AlgorithmSpec::Gen(trend_gen_params()),
        AlgorithmSpec::Biht(BihtParams {
            sparsity: 16,
            iters: 100,
            tau: 1.0,
        }),
    ];
    let rows = run_sweep(&config).unwrap();
    assert_all_ok(&rows);

    let gen_200 = mean_nmse(&rows, "gen", 200);
    let gen_400 = mean_nmse(&rows, "gen", 400);
    let biht_200 = mean_nmse(&rows, "biht", 200);
    let biht_400 = mean_nmse(&rows, "biht", 400);
    let plateau = gen_400 - gen_200 <= 0.02;
    let improving = biht_200 - biht_400 >= 0.02;

    let elapsed = start.elapsed();
    let ok = plateau && improving && within_limit(elapsed, Duration::from_secs(120));
    report(
        9,
        ok,
        &format!(
            "gen {gen_200:.4} -> {gen_400:.4} (plateau {plateau}), biht {biht_200:.4} -> {biht_400:.4} (improving {improving}), {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: Monte Carlo mean width matches the two-point closed form
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_mean_width_two_point() {
    let _g = gate();
    let start = Instant::now();
    let mut stream = RngStream::new(REFERENCE_SEED).derive(10);
    let points = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
    let est = mean_width_mc(&points, 100_000, &mut stream).unwrap();
    let target = 1.595769;
    let rel = (est - target).abs() / target;

    let singleton = mean_width_mc(&[vec![0.3, -0.7, 2.0]], 1_000, &mut stream).unwrap();

    let elapsed = start.elapsed();
    let ok = rel <= 0.02 && singleton == 0.0 && within_limit(elapsed, Duration::from_secs(5));
    report(
        10,
        ok,
        &format!(
            "two-point estimate {est:.6} vs {target} (rel {rel:.4}), singleton {singleton}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 11: the Lipschitz bound is never violated and matches hand values
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_lipschitz_bound() {
    let _g = gate();
    let start = Instant::now();
    let kinds = [
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Identity,
    ];
    let mut stream = RngStream::new(REFERENCE_SEED).derive(11);
    let mut worst_ratio = 0.0f64;
    for net_idx in 0..20usize {
        let depth = 1 + net_idx % 3;
        let mut dims = Vec::with_capacity(depth + 1);
        for _ in 0..=depth {
            dims.push(1 + stream.index(16));
        }
        let hidden = kinds[net_idx % 4];
        let output = kinds[(net_idx / 4) % 4];
        let g = random_mlp(&dims, hidden, output, 0.6, &mut stream).unwrap();
        let bound = g.lipschitz_bound();
        for pair in 0..1000usize {
            let z1 = stream.sample_gaussian(dims[0], 0.0, 4.0).unwrap();
            let z2 = stream.sample_gaussian(dims[0], 0.0, 4.0).unwrap();
            let dz = norm(&sub_vec(&z1, &z2));
            if dz == 0.0 {
                continue;
            }
            let dx = norm(&sub_vec(
                &g.forward(&z1).unwrap(),
                &g.forward(&z2).unwrap(),
            ));
            let ratio = dx / (dz * bound);
            worst_ratio = worst_ratio.max(ratio);
            assert!(
                dx <= bound * dz * (1.0 + 1e-12),
                "net {net_idx} pair {pair}: ratio {} violates the bound",
                dx / dz
            );
        }
    }

    let single = MlpGenerator::new(vec![MlpLayer::new(
        DenseMatrix::new(4, 4, vec![0.5; 16]).unwrap(),
        vec![0.0; 4],
        Activation::Relu,
    )
    .unwrap()])
    .unwrap();
    let double = MlpGenerator::new(vec![
        MlpLayer::new(
            DenseMatrix::new(4, 4, vec![0.5; 16]).unwrap(),
            vec![0.0; 4],
            Activation::Relu,
        )
        .unwrap(),
        MlpLayer::new(
            DenseMatrix::new(4, 4, vec![0.5; 16]).unwrap(),
            vec![0.0; 4],
            Activation::Relu,
        )
        .unwrap(),
    ])
    .unwrap();
    let hand_ok = single.lipschitz_bound() == 2.0 && double.lipschitz_bound() == 4.0;

    let elapsed = start.elapsed();
    let ok = hand_ok && within_limit(elapsed, Duration::from_secs(10));
    report(
        11,
        ok,
        &format!(
            "20 nets x 1000 pairs respect the bound (worst usage {worst_ratio:.3}), hand values 2.0/4.0 exact: {hand_ok}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 12: sweeps are byte-deterministic; parallel restarts match serial
// ---------------------------------------------------------------------------

/// Drops the timing column (index 10), the only field allowed to differ.
fn strip_seconds(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            if line.starts_with('#') || line.starts_with("algorithm,") {
                line.to_string()
            } else {
                let mut cols: Vec<&str> = line.split(',').collect();
                cols.remove(10);
                cols.join(",")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn criterion_12_determinism() {
    let _g = gate();
    let artifacts = decoder_artifacts();
    let config = reference_trend_config();
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("reference_sweep.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let out1 = dir.path().join("run1.csv");
    let out2 = dir.path().join("run2.csv");
    let count1 = cmd_sweep(&config_path, &out1, None, None, None).unwrap();
    let count2 = cmd_sweep(&config_path, &out2, None, None, None).unwrap();
    let csv1 = std::fs::read_to_string(&out1).unwrap();
    let csv2 = std::fs::read_to_string(&out2).unwrap();
    let identical = strip_seconds(&csv1) == strip_seconds(&csv2);

    // Restart-parallel and serial latent descent agree bit-for-bit.
    let mut stream = RngStream::new(REFERENCE_SEED).derive(12);
    let e = make_ensemble(EnsembleKind::UnitSphereColumns, 200, 64, &mut stream).unwrap();
    let z0 = stream.sample_gaussian(artifacts.decoder.latent_dim(), 0.0, 1.0).unwrap();
    let x_star = normalize_unit(&artifacts.decoder.forward(&z0).unwrap()).unwrap();
    let obs = quantize(&e, &x_star, &NoiseConfig::noiseless(), &mut stream).unwrap();
    let serial_opts = GenOpts {
        restarts: 10,
        steps_per_restart: 300,
        step_size: 0.05,
        parallel_restarts: false,
        ..GenOpts::default()
    };
    let parallel_opts = GenOpts {
        parallel_restarts: true,
        ..serial_opts
    };
    let reconstruction_stream = RngStream::new(REFERENCE_SEED).derive(13);
    let serial =
        reconstruct_gen(&artifacts.decoder, &e.matrix, &obs.y, &serial_opts, &reconstruction_stream)
            .unwrap();
    let parallel = reconstruct_gen(
        &artifacts.decoder,
        &e.matrix,
        &obs.y,
        &parallel_opts,
        &reconstruction_stream,
    )
    .unwrap();
    let restarts_match = serial.x_hat == parallel.x_hat
        && serial.best_loss == parallel.best_loss
        && serial
            .per_restart_losses
            .iter()
            .zip(&parallel.per_restart_losses)
            .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()));

    let ok = count1 == count2 && identical && restarts_match;
    report(
        12,
        ok,
        &format!(
            "two runs of {count1} rows byte-identical outside the timing column: {identical}; parallel restarts match serial exactly: {restarts_match}"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 13: plain latent descent beats the projected-gradient comparator
// ---------------------------------------------------------------------------

#[test]
fn criterion_13_projected_gradient_comparator() {
    let _g = gate();
    let start = Instant::now();
    let mut config = trend_config_base();
    config.m_values = vec![200];
    config.algorithms = vec![
        AlgorithmSpec::Gen(trend_gen_params()),
        AlgorithmSpec::GenPgd(PgdParams::default()),
    ];
    let rows = run_sweep(&config).unwrap();
    assert_all_ok(&rows);
    let gen_mse = mean_where(&rows, |r| r.algorithm == "gen", |r| r.mse);
    let pgd_mse = mean_where(&rows, |r| r.algorithm == "gen_pgd", |r| r.mse);

    let elapsed = start.elapsed();
    let ok = pgd_mse >= gen_mse && within_limit(elapsed, Duration::from_secs(180));
    report(
        13,
        ok,
        &format!(
            "mean MSE: projected-gradient {pgd_mse:.4} >= latent descent {gen_mse:.4} over 20 trials, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}
