//! Measurement ensembles, one-bit quantization with additive noise and
//! random sign flips, and matrix perturbation for sensing-uncertainty
//! studies.
//!
//! Conventions: sign(p) = +1 for p > 0 and -1 for p <= 0, so an exact zero
//! quantizes to -1. A flip keeps a sign with probability `alpha` and negates
//! it otherwise.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{norm, DenseMatrix};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Entries i.i.d. N(0, 1/m).
    GaussianIid,
    /// Columns drawn uniformly from the unit sphere in R^m.
    UnitSphereColumns,
}

impl EnsembleKind {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::GaussianIid => "gaussian_iid",
            EnsembleKind::UnitSphereColumns => "unit_sphere_columns",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gaussian_iid" => Some(EnsembleKind::GaussianIid),
            "unit_sphere_columns" => Some(EnsembleKind::UnitSphereColumns),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeasurementEnsemble {
    pub kind: EnsembleKind,
    pub matrix: DenseMatrix,
}

impl MeasurementEnsemble {
    pub fn m(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n(&self) -> usize {
        self.matrix.cols()
    }
}

/// Additive noise variance and sign-keep probability of the measurement
/// channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub noise_variance: f64,
    pub alpha: f64,
}

impl NoiseConfig {
    pub fn new(noise_variance: f64, alpha: f64) -> Result<Self> {
        if !noise_variance.is_finite() || noise_variance < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be finite and nonnegative, got {noise_variance}"
            )));
        }
        if !(alpha > 0.5 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0.5, 1], got {alpha}"
            )));
        }
        Ok(NoiseConfig {
            noise_variance,
            alpha,
        })
    }

    pub fn noiseless() -> Self {
        NoiseConfig {
            noise_variance: 0.0,
            alpha: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OneBitObservation {
    /// Exactly +1.0 or -1.0 per measurement.
    pub y: Vec<f64>,
    pub noise: NoiseConfig,
    pub ensemble: MeasurementEnsemble,
    /// (master_seed, stream_id) of the stream that drew the noise and flips.
    pub seed: (u64, u64),
}

impl OneBitObservation {
    pub fn m(&self) -> usize {
        self.y.len()
    }
}

/// sign with the zero-maps-to-minus-one convention.
pub fn sign(p: f64) -> f64 {
    if p > 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn sign_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&p| sign(p)).collect()
}

pub fn make_ensemble(
    kind: EnsembleKind,
    m: usize,
    n: usize,
    stream: &mut RngStream,
) -> Result<MeasurementEnsemble> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "ensemble dimensions must be positive, got m = {m}, n = {n}"
        )));
    }
    let matrix = match kind {
        EnsembleKind::GaussianIid => {
            let entries = stream.sample_gaussian(m * n, 0.0, 1.0 / m as f64)?;
            DenseMatrix::new(m, n, entries)?
        }
        EnsembleKind::UnitSphereColumns => {
            let mut data = vec![0.0; m * n];
            for j in 0..n {
                let col = loop {
                    let g = stream.sample_gaussian(m, 0.0, 1.0)?;
                    let len = norm(&g);
                    if len > 0.0 {
                        break g.iter().map(|x| x / len).collect::<Vec<f64>>();
                    }
                };
                for i in 0..m {
                    data[i * n + j] = col[i];
                }
            }
            DenseMatrix::new(m, n, data)?
        }
    };
    Ok(MeasurementEnsemble { kind, matrix })
}

/// y_i = eta_i * sign((A x)_i + n_i) with n_i ~ N(0, noise_variance) and
/// eta_i = +1 with probability alpha, -1 otherwise. The additive noise vector
/// is drawn first, then the flips, so runs with the same stream but different
/// channel parameters share the underlying randomness.
pub fn quantize(
    ensemble: &MeasurementEnsemble,
    x: &[f64],
    noise: &NoiseConfig,
    stream: &mut RngStream,
) -> Result<OneBitObservation> {
    let seed = (stream.master_seed(), stream.stream_id());
    let ax = ensemble.matrix.matvec(x)?;
    let m = ensemble.m();
    let additive = stream.sample_gaussian(m, 0.0, noise.noise_variance)?;
    let flips: Vec<f64> = (0..m)
        .map(|_| if stream.uniform() < noise.alpha { 1.0 } else { -1.0 })
        .collect();
    let y = ax
        .iter()
        .zip(additive.iter().zip(&flips))
        .map(|(&a, (&n, &eta))| eta * sign(a + n))
        .collect();
    Ok(OneBitObservation {
        y,
        noise: *noise,
        ensemble: ensemble.clone(),
        seed,
    })
}

/// A + Delta with Delta entries i.i.d. N(0, delta_variance). The kind tag is
/// kept from the base ensemble; it describes the law of the unperturbed
/// matrix.
pub fn perturb_matrix(
    ensemble: &MeasurementEnsemble,
    delta_variance: f64,
    stream: &mut RngStream,
) -> Result<MeasurementEnsemble> {
    if !delta_variance.is_finite() || delta_variance < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "perturbation variance must be finite and nonnegative, got {delta_variance}"
        )));
    }
    if delta_variance == 0.0 {
        return Ok(ensemble.clone());
    }
    let m = ensemble.m();
    let n = ensemble.n();
    let delta = DenseMatrix::new(m, n, stream.sample_gaussian(m * n, 0.0, delta_variance)?)?;
    Ok(MeasurementEnsemble {
        kind: ensemble.kind,
        matrix: ensemble.matrix.add(&delta)?,
    })
}

pub fn save_ensemble(ensemble: &MeasurementEnsemble, path: &Path) -> Result<()> {
    io::write_text_file(path, &(ensemble_json(ensemble) + "\n"))
}

pub(crate) fn ensemble_json(ensemble: &MeasurementEnsemble) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str("  \"format_version\": 1,\n");
    out.push_str(&format!("  \"kind\": \"{}\",\n", ensemble.kind.name()));
    out.push_str(&format!("  \"m\": {},\n", ensemble.m()));
    out.push_str(&format!("  \"n\": {},\n", ensemble.n()));
    out.push_str("  \"entries\": ");
    io::push_float_array(&mut out, ensemble.matrix.data());
    out.push_str("\n}");
    out
}

pub fn load_ensemble(path: &Path) -> Result<MeasurementEnsemble> {
    let value = io::read_json_file(path)?;
    ensemble_from_value(&value, path)
}

pub(crate) fn ensemble_from_value(
    value: &serde_json::Value,
    path: &Path,
) -> Result<MeasurementEnsemble> {
    io::check_format_version(value, path)?;
    let kind_name = io::get_str(value, path, "kind")?;
    let kind = EnsembleKind::parse(kind_name)
        .ok_or_else(|| Error::parse(path, format!("unknown ensemble kind \"{kind_name}\"")))?;
    let m = io::get_usize(value, path, "m")?;
    let n = io::get_usize(value, path, "n")?;
    let entries = io::get_f64_array(value, path, "entries")?;
    if entries.len() != m * n {
        return Err(Error::parse(
            path,
            format!("`entries` has {} values but m*n = {}", entries.len(), m * n),
        ));
    }
    let matrix =
        DenseMatrix::new(m, n, entries).map_err(|e| Error::parse(path, e.to_string()))?;
    Ok(MeasurementEnsemble { kind, matrix })
}

pub fn save_observation(obs: &OneBitObservation, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str("  \"format_version\": 1,\n");
    out.push_str("  \"kind\": \"observation\",\n");
    out.push_str("  \"y\": ");
    io::push_float_array(&mut out, &obs.y);
    out.push_str(",\n");
    out.push_str(&format!(
        "  \"v_n\": {},\n",
        io::format_float(obs.noise.noise_variance)
    ));
    out.push_str(&format!("  \"alpha\": {},\n", io::format_float(obs.noise.alpha)));
    out.push_str(&format!(
        "  \"seed\": {{\"master_seed\": {}, \"stream_id\": {}}},\n",
        obs.seed.0, obs.seed.1
    ));
    out.push_str("  \"ensemble\": ");
    out.push_str(&ensemble_json(&obs.ensemble));
    out.push_str("\n}\n");
    io::write_text_file(path, &out)
}

pub fn load_observation(path: &Path) -> Result<OneBitObservation> {
    let value = io::read_json_file(path)?;
    io::check_format_version(&value, path)?;
    let kind = io::get_str(&value, path, "kind")?;
    if kind != "observation" {
        return Err(Error::parse(
            path,
            format!("expected kind \"observation\", got \"{kind}\""),
        ));
    }
    let y = io::get_f64_array(&value, path, "y")?;
    if let Some(bad) = y.iter().position(|v| *v != 1.0 && *v != -1.0) {
        return Err(Error::parse(
            path,
            format!("`y[{bad}]` must be +1 or -1, got {}", y[bad]),
        ));
    }
    let v_n = io::get_f64(&value, path, "v_n")?;
    let alpha = io::get_f64(&value, path, "alpha")?;
    let noise = NoiseConfig::new(v_n, alpha).map_err(|e| Error::parse(path, e.to_string()))?;
    let seed_value = io::get_field(&value, path, "seed")?;
    let seed = (
        io::get_u64(seed_value, path, "master_seed")?,
        io::get_u64(seed_value, path, "stream_id")?,
    );
    let ensemble_value = io::get_field(&value, path, "ensemble")?;
    let ensemble = ensemble_from_value(ensemble_value, path)?;
    if y.len() != ensemble.m() {
        return Err(Error::parse(
            path,
            format!("`y` has {} entries but the ensemble has m = {}", y.len(), ensemble.m()),
        ));
    }
    Ok(OneBitObservation {
        y,
        noise,
        ensemble,
        seed,
    })
}
