//! Recovery metrics and sample-complexity / geometry estimates.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, DenseMatrix};
use crate::rng::RngStream;

/// Squared Euclidean error ||x_true - x_hat||^2.
pub fn mse(x_true: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_same_len(x_true, x_hat)?;
    Ok(x_true
        .iter()
        .zip(x_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Squared error between the unit-normalized vectors; ranges over [0, 4]
/// and ignores magnitude. Errors if either vector is zero.
pub fn nmse(x_true: &[f64], x_hat: &[f64]) -> Result<f64> {
    check_same_len(x_true, x_hat)?;
    let nt = norm(x_true);
    let nh = norm(x_hat);
    if nt == 0.0 || nh == 0.0 {
        return Err(Error::DegenerateInput(
            "normalized error is undefined for a zero vector".into(),
        ));
    }
    Ok(x_true
        .iter()
        .zip(x_hat)
        .map(|(a, b)| {
            let d = a / nt - b / nh;
            d * d
        })
        .sum())
}

/// Fraction of positions where two sign patterns disagree. Both inputs must
/// consist of exactly +1/-1 entries.
pub fn hamming_dist(y_a: &[f64], y_b: &[f64]) -> Result<f64> {
    check_same_len(y_a, y_b)?;
    if y_a.is_empty() {
        return Err(Error::InvalidArgument(
            "hamming distance needs at least one entry".into(),
        ));
    }
    for (name, v) in [("first", y_a), ("second", y_b)] {
        if let Some(bad) = v.iter().position(|&x| x != 1.0 && x != -1.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} argument entry {bad} must be +1 or -1, got {}",
                v[bad]
            )));
        }
    }
    let wrong = y_a.iter().zip(y_b).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / y_a.len() as f64)
}

/// Angle between the two directions, normalized by pi to lie in [0, 1].
pub fn geodesic_dist(x_a: &[f64], x_b: &[f64]) -> Result<f64> {
    check_same_len(x_a, x_b)?;
    let na = norm(x_a);
    let nb = norm(x_b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput(
            "geodesic distance is undefined for a zero vector".into(),
        ));
    }
    let cos = (dot(x_a, x_b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(cos.acos() / std::f64::consts::PI)
}

/// y^T A x / sqrt(m). For rows whose inner products with unit vectors have
/// variance 1/m and y = sign(A x*), the expected value is
/// sqrt(2/pi) * x^T x* on unit vectors, which makes this an estimator of the
/// correlation with the unknown signal.
pub fn f_statistic(a: &DenseMatrix, y: &[f64], x: &[f64]) -> Result<f64> {
    if a.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows but y has length {}",
            a.rows(),
            y.len()
        )));
    }
    let ax = a.matvec(x)?;
    Ok(dot(y, &ax) / (y.len() as f64).sqrt())
}

/// Monte Carlo estimate of the Gaussian mean width
/// E_g[max_{p in points} g.p - min_{p in points} g.p].
pub fn mean_width_mc(points: &[Vec<f64>], trials: usize, stream: &mut RngStream) -> Result<f64> {
    let first = points
        .first()
        .ok_or_else(|| Error::InvalidArgument("mean width needs at least one point".into()))?;
    let dim = first.len();
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "mean width needs nonempty points".into(),
        ));
    }
    if let Some(bad) = points.iter().position(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "point {bad} has length {} but point 0 has length {dim}",
            points[bad].len()
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("mean width needs at least one trial".into()));
    }
    let mut total = 0.0;
    for _ in 0..trials {
        let g = stream.sample_gaussian(dim, 0.0, 1.0)?;
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for p in points {
            let d = dot(&g, p);
            hi = hi.max(d);
            lo = lo.min(d);
        }
        total += hi - lo;
    }
    Ok(total / trials as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeasurementBound {
    pub m: u64,
    /// Set when the log term was dropped because L * N * w_max <= 1 would
    /// have made it negative; the bound then ignores the depth factor.
    pub log_term_dropped: bool,
}

/// Sufficient measurement count
/// ceil(C * eps^-2 * s * (r^2 + d * ln(L * N * w_max)))
/// for recovering signals in the image of an r-ball under a depth-d network
/// with per-layer Lipschitz constant L, max width N, and max |weight| w_max.
pub fn measurement_bound(
    latent_dim: usize,
    latent_radius: f64,
    depth: usize,
    lipschitz: f64,
    max_width: usize,
    max_weight_abs: f64,
    epsilon: f64,
    constant: f64,
) -> Result<MeasurementBound> {
    for (name, v) in [
        ("latent radius", latent_radius),
        ("lipschitz", lipschitz),
        ("max weight magnitude", max_weight_abs),
        ("epsilon", epsilon),
        ("constant", constant),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    if latent_dim == 0 || depth == 0 || max_width == 0 {
        return Err(Error::InvalidArgument(
            "latent dim, depth, and max width must be at least 1".into(),
        ));
    }
    let growth = lipschitz * max_width as f64 * max_weight_abs;
    let log_term = growth.ln();
    let log_term_dropped = log_term <= 0.0;
    let effective_log = if log_term_dropped { 0.0 } else { log_term };
    let raw = constant
        * epsilon.powi(-2)
        * latent_dim as f64
        * (latent_radius * latent_radius + depth as f64 * effective_log);
    if !raw.is_finite() {
        return Err(Error::Numeric(format!(
            "measurement bound overflowed: {raw}"
        )));
    }
    Ok(MeasurementBound {
        m: raw.ceil() as u64,
        log_term_dropped,
    })
}

/// (4 r / t)^s, the covering-number growth rate of an r-ball in s dimensions
/// at scale t.
pub fn covering_number_bound(latent_dim: usize, latent_radius: f64, scale: f64) -> Result<f64> {
    if !(latent_radius > 0.0 && latent_radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "latent radius must be positive and finite, got {latent_radius}"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "scale must be positive and finite, got {scale}"
        )));
    }
    Ok((4.0 * latent_radius / scale).powi(latent_dim as i32))
}

fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}
