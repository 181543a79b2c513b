//! Reconstruction from one-bit measurements.
//!
//! The decoder-prior route minimizes, over the latent space of a generator G,
//!
//! ```text
//! loss(z) = ||G(z)||^2 - c_m * y^T A G(z),      c_m = sqrt(2*pi / m),
//! ```
//!
//! by fixed-step gradient descent with random restarts. The weight `c_m` is
//! calibrated for measurement rows whose inner products with unit vectors
//! have variance 1/m (true of both supported ensembles): in expectation the
//! correlation term is then 2 x^T x*, so the population loss is
//! ||x - x*||^2 + const and the minimizer recovers direction and magnitude.
//! When a fraction of signs is flipped (keep probability alpha), the
//! correlation term attenuates by 2*alpha - 1; the noise-aware variant
//! divides it back out.
//!
//! Baselines: binary iterative hard thresholding, a soft-threshold solver for
//! the convex program max y^T A x over {||x||_2 <= 1, ||x||_1 <= budget}, and
//! a projected-gradient comparator that alternates a sign-consistency signal
//! step with projection onto the generator range.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, l1_norm, norm, norm_sq, sub_vec, DenseMatrix};
use crate::model::MlpGenerator;
use crate::rng::RngStream;
use crate::sensing::sign_vec;

/// Weight of the correlation term in the latent loss.
pub fn correlation_scale(m: usize) -> f64 {
    (2.0 * std::f64::consts::PI / m as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenOpts {
    pub restarts: usize,
    pub steps_per_restart: usize,
    pub step_size: f64,
    /// Optional radius bound on the latent iterate; `None` leaves it free.
    pub latent_radius: Option<f64>,
    /// When set, scale the returned estimate down onto the unit ball.
    pub project_output_unit_ball: bool,
    /// When set, rescales the correlation term by 1/(2*alpha - 1) as in the
    /// noise-aware variant.
    pub alpha_known: Option<f64>,
    /// Run restarts through the thread pool; the result is bit-identical to
    /// the serial order because each restart derives its own stream.
    pub parallel_restarts: bool,
}

impl Default for GenOpts {
    fn default() -> Self {
        GenOpts {
            restarts: 10,
            steps_per_restart: 100,
            step_size: 0.01,
            latent_radius: None,
            project_output_unit_ball: false,
            alpha_known: None,
            parallel_restarts: false,
        }
    }
}

impl GenOpts {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive and finite, got {}",
                self.step_size
            )));
        }
        if let Some(r) = self.latent_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "latent radius must be positive and finite, got {r}"
                )));
            }
        }
        if let Some(a) = self.alpha_known {
            flip_attenuation(a)?;
        }
        Ok(())
    }
}

/// 2*alpha - 1, the factor by which random flips attenuate the correlation
/// term; rejects alpha outside (0.5, 1] where the correction diverges or
/// flips information away entirely.
fn flip_attenuation(alpha: f64) -> Result<f64> {
    if !(alpha > 0.5 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0.5, 1], got {alpha}"
        )));
    }
    Ok(2.0 * alpha - 1.0)
}

#[derive(Clone, Debug)]
pub struct ReconResult {
    pub x_hat: Vec<f64>,
    /// Latent minimizer for decoder-based algorithms.
    pub z_hat: Option<Vec<f64>>,
    /// Smallest finite per-restart loss.
    pub best_loss: f64,
    /// Final loss per restart, in restart order; NaN marks a restart that
    /// was abandoned after its iterates turned non-finite.
    pub per_restart_losses: Vec<f64>,
    /// Gradient (or outer) steps completed, summed over restarts.
    pub iterations_used: usize,
}

fn check_problem_dims(g: &MlpGenerator, a: &DenseMatrix, y: &[f64]) -> Result<()> {
    if a.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows but y has length {}",
            a.rows(),
            y.len()
        )));
    }
    if a.cols() != g.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns but the generator outputs dimension {}",
            a.cols(),
            g.output_dim()
        )));
    }
    Ok(())
}

/// ||G(z)||^2 - c_m * y^T A G(z).
pub fn loss_gen(g: &MlpGenerator, z: &[f64], a: &DenseMatrix, y: &[f64]) -> Result<f64> {
    check_problem_dims(g, a, y)?;
    let x = g.forward(z)?;
    let ax = a.matvec(&x)?;
    Ok(norm_sq(&x) - correlation_scale(y.len()) * dot(y, &ax))
}

/// Gradient of `loss_gen` with respect to z:
/// J_G(z)^T (2 G(z) - c_m A^T y).
pub fn grad_loss_gen(g: &MlpGenerator, z: &[f64], a: &DenseMatrix, y: &[f64]) -> Result<Vec<f64>> {
    check_problem_dims(g, a, y)?;
    let aty = a.matvec_t(y)?;
    let coef = correlation_scale(y.len());
    let trace = g.forward_cached(z)?;
    let cot: Vec<f64> = trace
        .output
        .iter()
        .zip(&aty)
        .map(|(&x, &c)| 2.0 * x - coef * c)
        .collect();
    g.vjp_from_trace(&trace, &cot)
}

fn project_into_ball(z: &mut [f64], radius: f64) {
    let len = norm(z);
    if len > radius {
        let s = radius / len;
        for v in z.iter_mut() {
            *v *= s;
        }
    }
}

struct RestartOutcome {
    z: Vec<f64>,
    loss: f64,
    steps_done: usize,
}

/// One gradient-descent run from a fresh latent draw. `coef` multiplies the
/// correlation term. A non-finite iterate or loss abandons the run (loss NaN).
fn run_single_restart(
    g: &MlpGenerator,
    aty: &[f64],
    coef: f64,
    opts: &GenOpts,
    mut stream: RngStream,
) -> RestartOutcome {
    let s = g.latent_dim();
    let mut z = stream
        .sample_gaussian(s, 0.0, 1.0)
        .expect("unit variance is valid");
    if let Some(r) = opts.latent_radius {
        project_into_ball(&mut z, r);
    }
    let mut steps_done = 0;
    let abandoned = |z: Vec<f64>, steps_done| RestartOutcome {
        z,
        loss: f64::NAN,
        steps_done,
    };
    for _ in 0..opts.steps_per_restart {
        let trace = match g.forward_cached(&z) {
            Ok(t) => t,
            Err(_) => return abandoned(z, steps_done),
        };
        let cot: Vec<f64> = trace
            .output
            .iter()
            .zip(aty)
            .map(|(&x, &c)| 2.0 * x - coef * c)
            .collect();
        let grad = match g.vjp_from_trace(&trace, &cot) {
            Ok(gr) => gr,
            Err(_) => return abandoned(z, steps_done),
        };
        axpy(&mut z, -opts.step_size, &grad);
        if let Some(r) = opts.latent_radius {
            project_into_ball(&mut z, r);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return abandoned(z, steps_done);
        }
        steps_done += 1;
    }
    let loss = match g.forward(&z) {
        Ok(x) => {
            let value = norm_sq(&x) - coef * dot(aty, &x);
            if value.is_finite() {
                value
            } else {
                f64::NAN
            }
        }
        Err(_) => f64::NAN,
    };
    RestartOutcome {
        z,
        loss,
        steps_done,
    }
}

fn run_restarts(
    g: &MlpGenerator,
    a: &DenseMatrix,
    y: &[f64],
    correlation_rescale: f64,
    opts: &GenOpts,
    stream: &RngStream,
) -> Result<ReconResult> {
    opts.validate()?;
    check_problem_dims(g, a, y)?;
    let aty = a.matvec_t(y)?;
    let coef = correlation_rescale * correlation_scale(y.len());

    let indices: Vec<u64> = (0..opts.restarts as u64).collect();
    let outcomes: Vec<RestartOutcome> = if opts.parallel_restarts {
        indices
            .par_iter()
            .map(|&r| run_single_restart(g, &aty, coef, opts, stream.derive(r)))
            .collect()
    } else {
        indices
            .iter()
            .map(|&r| run_single_restart(g, &aty, coef, opts, stream.derive(r)))
            .collect()
    };

    let mut best: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if o.loss.is_finite() && best.is_none_or(|b| o.loss < outcomes[b].loss) {
            best = Some(i);
        }
    }
    let best = best.ok_or_else(|| {
        Error::Numeric(format!(
            "all {} restarts produced non-finite losses",
            opts.restarts
        ))
    })?;

    let z_hat = outcomes[best].z.clone();
    let mut x_hat = g.forward(&z_hat)?;
    if opts.project_output_unit_ball {
        let len = norm(&x_hat);
        if len > 1.0 {
            for v in &mut x_hat {
                *v /= len;
            }
        }
    }
    Ok(ReconResult {
        x_hat,
        z_hat: Some(z_hat),
        best_loss: outcomes[best].loss,
        per_restart_losses: outcomes.iter().map(|o| o.loss).collect(),
        iterations_used: outcomes.iter().map(|o| o.steps_done).sum(),
    })
}

/// Latent gradient descent with random restarts; returns the estimate of the
/// restart with the smallest final loss (ties: lowest restart index).
/// Restart r draws its start from `stream.derive(r)`, so the result depends
/// only on the stream's identity.
pub fn reconstruct_gen(
    g: &MlpGenerator,
    a: &DenseMatrix,
    y: &[f64],
    opts: &GenOpts,
    stream: &RngStream,
) -> Result<ReconResult> {
    let rescale = match opts.alpha_known {
        Some(alpha) => 1.0 / flip_attenuation(alpha)?,
        None => 1.0,
    };
    run_restarts(g, a, y, rescale, opts, stream)
}

/// Flip-aware variant: rescales the correlation term by 1/(2*alpha - 1) for
/// the given keep probability. With alpha = 1 the trajectory is identical to
/// `reconstruct_gen` on the same stream. The explicit `alpha` argument takes
/// precedence over `opts.alpha_known`.
pub fn reconstruct_gen_noise_aware(
    g: &MlpGenerator,
    a: &DenseMatrix,
    y: &[f64],
    alpha: f64,
    opts: &GenOpts,
    stream: &RngStream,
) -> Result<ReconResult> {
    let rescale = 1.0 / flip_attenuation(alpha)?;
    run_restarts(g, a, y, rescale, opts, stream)
}

/// Keeps the k largest-magnitude entries (ties: lowest index), zeroing the
/// rest.
fn top_k(v: &[f64], k: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| {
        v[j].abs()
            .partial_cmp(&v[i].abs())
            .unwrap()
            .then(i.cmp(&j))
    });
    let mut out = vec![0.0; v.len()];
    for &i in order.iter().take(k) {
        out[i] = v[i];
    }
    out
}

/// x + (tau/m) A^T (y - sign(A x)), the sign-consistency gradient step shared
/// by the hard-thresholding baseline and the projected-gradient comparator.
/// If x is already consistent with y the step is the identity.
pub fn signal_step(a: &DenseMatrix, y: &[f64], x: &[f64], tau: f64) -> Result<Vec<f64>> {
    let residual = sub_vec(y, &sign_vec(&a.matvec(x)?));
    let mut out = x.to_vec();
    axpy(&mut out, tau / y.len() as f64, &a.matvec_t(&residual)?);
    Ok(out)
}

fn check_pm_one(y: &[f64]) -> Result<()> {
    if let Some(bad) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidArgument(format!(
            "y[{bad}] must be +1 or -1, got {}",
            y[bad]
        )));
    }
    Ok(())
}

/// Binary iterative hard thresholding: start from top_k(A^T y), repeat
/// x <- top_k(signal_step(x)), and return the final iterate scaled to unit
/// norm.
pub fn biht(
    a: &DenseMatrix,
    y: &[f64],
    sparsity: usize,
    iters: usize,
    tau: f64,
) -> Result<Vec<f64>> {
    if a.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows but y has length {}",
            a.rows(),
            y.len()
        )));
    }
    if sparsity == 0 || sparsity > a.cols() {
        return Err(Error::InvalidArgument(format!(
            "sparsity must lie in [1, {}], got {sparsity}",
            a.cols()
        )));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "tau must be positive and finite, got {tau}"
        )));
    }
    check_pm_one(y)?;
    let mut x = top_k(&a.matvec_t(y)?, sparsity);
    for _ in 0..iters {
        let stepped = signal_step(a, y, &x, tau)?;
        let next = top_k(&stepped, sparsity);
        if next == x {
            break;
        }
        x = next;
    }
    let len = norm(&x);
    if len > 0.0 {
        for v in &mut x {
            *v /= len;
        }
    }
    Ok(x)
}

fn soft_threshold(c: &[f64], lambda: f64) -> Vec<f64> {
    c.iter()
        .map(|&v| {
            let mag = v.abs() - lambda;
            if mag > 0.0 {
                v.signum() * mag
            } else {
                0.0
            }
        })
        .collect()
}

/// Maximizes y^T A x over {||x||_2 <= 1, ||x||_1 <= l1_budget}. The solution
/// is a normalized soft thresholding of c = A^T y, with the threshold found
/// by bisection on the l1/l2 ratio. Budgets at or above sqrt(n) leave the l1
/// constraint inactive; budgets below 1 collapse to the best single
/// coordinate (no unit-norm point satisfies them, so the returned direction
/// is feasible only after scaling).
pub fn yp_convex(a: &DenseMatrix, y: &[f64], l1_budget: f64) -> Result<Vec<f64>> {
    if a.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows but y has length {}",
            a.rows(),
            y.len()
        )));
    }
    if !(l1_budget > 0.0 && l1_budget.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "l1 budget must be positive and finite, got {l1_budget}"
        )));
    }
    check_pm_one(y)?;
    let c = a.matvec_t(y)?;
    let c_norm = norm(&c);
    if c_norm == 0.0 {
        return Err(Error::DegenerateInput(
            "A^T y is zero; the objective carries no direction information".into(),
        ));
    }
    let target = l1_budget.max(1.0);
    if l1_norm(&c) / c_norm <= target {
        return Ok(c.iter().map(|v| v / c_norm).collect());
    }

    let ratio = |lambda: f64| -> f64 {
        let s = soft_threshold(&c, lambda);
        let l2 = norm(&s);
        if l2 == 0.0 {
            // Limit as lambda approaches max|c| from below.
            1.0
        } else {
            l1_norm(&s) / l2
        }
    };
    let mut lo = 0.0;
    let mut hi = c.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = soft_threshold(&c, hi);
    let l2 = norm(&s);
    if l2 == 0.0 {
        // Threshold collapsed everything: fall back to the single best
        // coordinate, which is the limit solution.
        let (j, _) = c
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| {
                a.abs().partial_cmp(&b.abs()).unwrap().then(j.cmp(i))
            })
            .unwrap();
        let mut out = vec![0.0; c.len()];
        out[j] = c[j].signum();
        return Ok(out);
    }
    Ok(s.iter().map(|v| v / l2).collect())
}

/// Euclidean projection onto {x : ||x||_1 <= radius} by sorting magnitudes
/// and clipping at the resulting threshold.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "radius must be nonnegative and finite, got {radius}"
        )));
    }
    if l1_norm(v) <= radius {
        return Ok(v.to_vec());
    }
    if radius == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in mags.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - radius) / (j + 1) as f64;
        if u > candidate {
            theta = candidate;
        }
    }
    Ok(v
        .iter()
        .map(|&x| {
            let mag = x.abs() - theta;
            if mag > 0.0 {
                x.signum() * mag
            } else {
                0.0
            }
        })
        .collect())
}

/// Approximates argmin_z ||G(z) - target||^2 by gradient descent from
/// `z_init`. A point already in range is a stationary start and is returned
/// unchanged.
pub fn project_to_range(
    g: &MlpGenerator,
    target: &[f64],
    z_init: &[f64],
    steps: usize,
    step_size: f64,
) -> Result<Vec<f64>> {
    if target.len() != g.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "target has length {} but the generator outputs dimension {}",
            target.len(),
            g.output_dim()
        )));
    }
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive and finite, got {step_size}"
        )));
    }
    let mut z = z_init.to_vec();
    for _ in 0..steps {
        let trace = g.forward_cached(&z)?;
        let cot: Vec<f64> = trace
            .output
            .iter()
            .zip(target)
            .map(|(&x, &t)| 2.0 * (x - t))
            .collect();
        let grad = g.vjp_from_trace(&trace, &cot)?;
        axpy(&mut z, -step_size, &grad);
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(
                "range projection produced a non-finite iterate".into(),
            ));
        }
    }
    Ok(z)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PgdOpts {
    pub restarts: usize,
    pub outer_steps: usize,
    /// Step weight of the sign-consistency signal step.
    pub tau: f64,
    pub inner_steps: usize,
    pub inner_step_size: f64,
}

impl Default for PgdOpts {
    fn default() -> Self {
        PgdOpts {
            restarts: 10,
            outer_steps: 100,
            tau: 1.0,
            inner_steps: 20,
            inner_step_size: 0.05,
        }
    }
}

impl PgdOpts {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau must be positive and finite, got {}",
                self.tau
            )));
        }
        if !(self.inner_step_size > 0.0 && self.inner_step_size.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "inner step size must be positive and finite, got {}",
                self.inner_step_size
            )));
        }
        Ok(())
    }
}

/// Projected-gradient comparator: alternates the sign-consistency signal
/// step with projection onto the generator range (warm-started latent
/// descent). Restarts are ranked by the fraction of measurement signs the
/// estimate gets wrong, so `best_loss` lies in [0, 1].
pub fn gen_pgd(
    g: &MlpGenerator,
    a: &DenseMatrix,
    y: &[f64],
    opts: &PgdOpts,
    stream: &RngStream,
) -> Result<ReconResult> {
    opts.validate()?;
    check_problem_dims(g, a, y)?;
    check_pm_one(y)?;
    let m = y.len() as f64;

    let mut per_restart_losses = Vec::with_capacity(opts.restarts);
    let mut outcomes: Vec<Option<(Vec<f64>, f64)>> = Vec::with_capacity(opts.restarts);
    let mut iterations_used = 0;
    for r in 0..opts.restarts as u64 {
        let mut rs = stream.derive(r);
        let mut z = rs
            .sample_gaussian(g.latent_dim(), 0.0, 1.0)
            .expect("unit variance is valid");
        let mut failed = false;
        for _ in 0..opts.outer_steps {
            let x = match g.forward(&z) {
                Ok(x) => x,
                Err(_) => {
                    failed = true;
                    break;
                }
            };
            let stepped = match signal_step(a, y, &x, opts.tau) {
                Ok(s) => s,
                Err(_) => {
                    failed = true;
                    break;
                }
            };
            z = match project_to_range(g, &stepped, &z, opts.inner_steps, opts.inner_step_size) {
                Ok(z) => z,
                Err(_) => {
                    failed = true;
                    break;
                }
            };
            iterations_used += 1;
        }
        if failed {
            per_restart_losses.push(f64::NAN);
            outcomes.push(None);
            continue;
        }
        match g.forward(&z) {
            Ok(x) => {
                let wrong = sign_vec(&a.matvec(&x)?)
                    .iter()
                    .zip(y)
                    .filter(|(s, t)| s != t)
                    .count() as f64;
                let loss = wrong / m;
                per_restart_losses.push(loss);
                outcomes.push(Some((z, loss)));
            }
            Err(_) => {
                per_restart_losses.push(f64::NAN);
                outcomes.push(None);
            }
        }
    }

    let mut best: Option<(usize, f64)> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if let Some((_, loss)) = o {
            if best.is_none_or(|(_, b)| *loss < b) {
                best = Some((i, *loss));
            }
        }
    }
    let (best_idx, best_loss) = best.ok_or_else(|| {
        Error::Numeric(format!(
            "all {} restarts produced non-finite iterates",
            opts.restarts
        ))
    })?;
    let z_hat = outcomes[best_idx].as_ref().unwrap().0.clone();
    let x_hat = g.forward(&z_hat)?;
    Ok(ReconResult {
        x_hat,
        z_hat: Some(z_hat),
        best_loss,
        per_restart_losses,
        iterations_used,
    })
}
