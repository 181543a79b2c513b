//! Variational autoencoder training for decoder priors.
//!
//! The encoder maps an input x to (mu, logvar); a latent draw
//! z = mu + exp(logvar/2) * eps with eps ~ N(0, I) feeds the decoder. The
//! per-item objective is
//!
//! ```text
//! 0.5 * ||x - decode(z)||^2
//!   + 0.5 * sum_i(mu_i^2 + exp(logvar_i) - 1 - logvar_i)
//! ```
//!
//! minimized by Adam over shuffled mini-batches. Parameter tensors are kept
//! in a fixed canonical order: encoder layers first, then decoder layers,
//! each layer contributing its weight matrix (row-major) and then its bias.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{
    check_format_version, get_field, get_str, read_json_file, write_text_file,
};
use crate::linalg::DenseMatrix;
use crate::model::{model_from_value, model_json, Activation, MlpGenerator, MlpLayer};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeArch {
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    /// Activation of the decoder's final layer; pick `Sigmoid` for data in
    /// [0, 1], `Identity` for unconstrained data.
    pub output_activation: Activation,
}

impl VaeArch {
    fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::InvalidArgument(
                "latent dimension must be at least 1".into(),
            ));
        }
        for (name, dims) in [
            ("encoder", &self.encoder_hidden),
            ("decoder", &self.decoder_hidden),
        ] {
            if dims.iter().any(|&d| d == 0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} hidden widths must be at least 1, got {dims:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "batch size must be at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be nonnegative and finite, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in (0, 1), got {b}"
                )));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct VaeModel {
    pub encoder: MlpGenerator,
    pub decoder: MlpGenerator,
}

impl VaeModel {
    /// Checks that the encoder emits 2 * latent_dim values (mu then logvar)
    /// and that both nets agree on the data dimension.
    pub fn new(encoder: MlpGenerator, decoder: MlpGenerator) -> Result<Self> {
        let s = decoder.latent_dim();
        if encoder.output_dim() != 2 * s {
            return Err(Error::DimensionMismatch(format!(
                "encoder outputs {} values but the decoder needs 2 * {s} (mu and logvar)",
                encoder.output_dim()
            )));
        }
        if encoder.latent_dim() != decoder.output_dim() {
            return Err(Error::DimensionMismatch(format!(
                "encoder reads dimension {} but the decoder emits {}",
                encoder.latent_dim(),
                decoder.output_dim()
            )));
        }
        Ok(VaeModel { encoder, decoder })
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.latent_dim()
    }

    pub fn data_dim(&self) -> usize {
        self.decoder.output_dim()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub mean_loss: f64,
    pub recon_term: f64,
    pub kl_term: f64,
}

/// First and second moment accumulators, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(tensor_sizes: &[usize]) -> Self {
        AdamState {
            step: 0,
            m: tensor_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: tensor_sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

fn layer_dims(input: usize, hidden: &[usize], output: usize) -> Vec<(usize, usize)> {
    let mut dims = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input;
    for &h in hidden {
        dims.push((prev, h));
        prev = h;
    }
    dims.push((prev, output));
    dims
}

/// Draws one layer with weight variance 2/fan_in for rectified units and
/// 1/fan_in otherwise; biases start at zero.
fn init_layer(
    fan_in: usize,
    fan_out: usize,
    activation: Activation,
    stream: &mut RngStream,
) -> Result<MlpLayer> {
    let variance = match activation {
        Activation::Relu => 2.0 / fan_in as f64,
        _ => 1.0 / fan_in as f64,
    };
    let weights = stream.sample_gaussian(fan_in * fan_out, 0.0, variance)?;
    MlpLayer::new(
        DenseMatrix::new(fan_out, fan_in, weights)?,
        vec![0.0; fan_out],
        activation,
    )
}

fn init_net(
    input: usize,
    hidden: &[usize],
    output: usize,
    hidden_activation: Activation,
    final_activation: Activation,
    stream: &mut RngStream,
) -> Result<MlpGenerator> {
    let dims = layer_dims(input, hidden, output);
    let last = dims.len() - 1;
    let mut layers = Vec::with_capacity(dims.len());
    for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let act = if i == last {
            final_activation
        } else {
            hidden_activation
        };
        layers.push(init_layer(fan_in, fan_out, act, stream)?);
    }
    MlpGenerator::new(layers)
}

/// Fresh model for `input_dim`-dimensional data. The encoder ends in an
/// identity layer emitting mu and logvar side by side.
pub fn init_vae(input_dim: usize, arch: &VaeArch, stream: &mut RngStream) -> Result<VaeModel> {
    arch.validate()?;
    if input_dim == 0 {
        return Err(Error::InvalidArgument(
            "input dimension must be at least 1".into(),
        ));
    }
    let encoder = init_net(
        input_dim,
        &arch.encoder_hidden,
        2 * arch.latent_dim,
        arch.hidden_activation,
        Activation::Identity,
        stream,
    )?;
    let decoder = init_net(
        arch.latent_dim,
        &arch.decoder_hidden,
        input_dim,
        arch.hidden_activation,
        arch.output_activation,
        stream,
    )?;
    VaeModel::new(encoder, decoder)
}

fn net_tensor_sizes(g: &MlpGenerator, out: &mut Vec<usize>) {
    for layer in g.layers() {
        out.push(layer.weights.rows() * layer.weights.cols());
        out.push(layer.bias.len());
    }
}

/// Sizes of the canonical parameter tensors.
pub fn vae_tensor_sizes(vae: &VaeModel) -> Vec<usize> {
    let mut sizes = Vec::new();
    net_tensor_sizes(&vae.encoder, &mut sizes);
    net_tensor_sizes(&vae.decoder, &mut sizes);
    sizes
}

/// Copies of the parameter tensors in canonical order.
pub fn vae_params(vae: &VaeModel) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for net in [&vae.encoder, &vae.decoder] {
        for layer in net.layers() {
            out.push(layer.weights.data().to_vec());
            out.push(layer.bias.clone());
        }
    }
    out
}

fn net_tensors_mut<'a>(g: &'a mut MlpGenerator, out: &mut Vec<&'a mut [f64]>) {
    for layer in g.layers_mut() {
        let MlpLayer { weights, bias, .. } = layer;
        out.push(weights.data_mut());
        out.push(bias.as_mut_slice());
    }
}

fn vae_tensors_mut(vae: &mut VaeModel) -> Vec<&mut [f64]> {
    let mut out = Vec::new();
    net_tensors_mut(&mut vae.encoder, &mut out);
    net_tensors_mut(&mut vae.decoder, &mut out);
    out
}

/// Overwrites the model parameters with tensors in canonical order.
pub fn set_vae_params(vae: &mut VaeModel, params: &[Vec<f64>]) -> Result<()> {
    let mut slots = vae_tensors_mut(vae);
    if slots.len() != params.len() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} parameter tensors but {} were supplied",
            slots.len(),
            params.len()
        )));
    }
    for (i, (slot, tensor)) in slots.iter_mut().zip(params).enumerate() {
        if slot.len() != tensor.len() {
            return Err(Error::DimensionMismatch(format!(
                "parameter tensor {i} has {} entries but the model slot holds {}",
                tensor.len(),
                slot.len()
            )));
        }
        slot.copy_from_slice(tensor);
    }
    Ok(())
}

/// Mean loss terms and mean parameter gradients (canonical tensor order)
/// over a batch. Each item consumes `latent_dim` Gaussian draws from the
/// stream for its reparameterization noise, in batch order.
pub fn elbo_loss_and_grads(
    vae: &VaeModel,
    batch: &[&[f64]],
    stream: &mut RngStream,
) -> Result<(ElboTerms, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("batch must be nonempty".into()));
    }
    let n = vae.data_dim();
    let s = vae.latent_dim();
    if let Some(bad) = batch.iter().position(|x| x.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "batch item {bad} has length {} but the model expects {n}",
            batch[bad].len()
        )));
    }
    let sizes = vae_tensor_sizes(vae);
    let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&sz| vec![0.0; sz]).collect();
    let enc_tensors = vae.encoder.layers().len() * 2;
    let mut total = ElboTerms {
        loss: 0.0,
        recon: 0.0,
        kl: 0.0,
    };

    for &x in batch {
        let enc_trace = vae.encoder.forward_cached(x)?;
        let (mu, logvar) = enc_trace.output.split_at(s);
        let eps = stream.sample_gaussian(s, 0.0, 1.0)?;
        let sigma: Vec<f64> = logvar.iter().map(|lv| (0.5 * lv).exp()).collect();
        let z: Vec<f64> = mu
            .iter()
            .zip(&sigma)
            .zip(&eps)
            .map(|((m, sd), e)| m + sd * e)
            .collect();
        let dec_trace = vae.decoder.forward_cached(&z)?;

        let recon: f64 = x
            .iter()
            .zip(&dec_trace.output)
            .map(|(xi, ri)| 0.5 * (xi - ri) * (xi - ri))
            .sum();
        let kl: f64 = mu
            .iter()
            .zip(logvar)
            .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
            .sum();
        total.recon += recon;
        total.kl += kl;
        total.loss += recon + kl;

        let d_xr: Vec<f64> = dec_trace
            .output
            .iter()
            .zip(x)
            .map(|(ri, xi)| ri - xi)
            .collect();
        let (dec_grads, dz) = vae.decoder.backward_params(&dec_trace, &d_xr)?;
        let mut d_head = Vec::with_capacity(2 * s);
        for i in 0..s {
            d_head.push(dz[i] + mu[i]);
        }
        for i in 0..s {
            d_head.push(dz[i] * eps[i] * 0.5 * sigma[i] + 0.5 * (logvar[i].exp() - 1.0));
        }
        let (enc_grads, _) = vae.encoder.backward_params(&enc_trace, &d_head)?;

        for (t, lg) in enc_grads.iter().enumerate() {
            accumulate(&mut grads[2 * t], &lg.weights);
            accumulate(&mut grads[2 * t + 1], &lg.bias);
        }
        for (t, lg) in dec_grads.iter().enumerate() {
            accumulate(&mut grads[enc_tensors + 2 * t], &lg.weights);
            accumulate(&mut grads[enc_tensors + 2 * t + 1], &lg.bias);
        }
    }

    let scale = 1.0 / batch.len() as f64;
    for g in &mut grads {
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    total.loss *= scale;
    total.recon *= scale;
    total.kl *= scale;
    Ok((total, grads))
}

fn accumulate(acc: &mut [f64], add: &[f64]) {
    for (a, b) in acc.iter_mut().zip(add) {
        *a += b;
    }
}

fn adam_update(
    params: &mut [&mut [f64]],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} parameter tensors, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let m_corr = 1.0 - cfg.beta1.powi(t);
    let v_corr = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(&mut state.v))
    {
        if p.len() != g.len() {
            return Err(Error::DimensionMismatch(format!(
                "parameter tensor of {} entries paired with gradient of {}",
                p.len(),
                g.len()
            )));
        }
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / m_corr;
            let v_hat = v[i] / v_corr;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// One bias-corrected Adam update of every tensor; the very first step moves
/// each coordinate by about `learning_rate` regardless of gradient scale.
pub fn adam_step(
    params: &mut [Vec<f64>],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut slices: Vec<&mut [f64]> = params.iter_mut().map(|p| p.as_mut_slice()).collect();
    adam_update(&mut slices, grads, state, cfg)
}

/// Trains a fresh model on the dataset and reports per-epoch mean loss
/// terms. Initialization, epoch shuffles, and reparameterization noise all
/// derive from `config.seed`, so identical inputs reproduce the model
/// bit for bit. A non-finite batch loss aborts with the 1-based epoch in
/// the error.
pub fn train_vae(
    data: &[Vec<f64>],
    arch: &VaeArch,
    config: &TrainConfig,
) -> Result<(VaeModel, Vec<EpochStats>)> {
    config.validate()?;
    arch.validate()?;
    let first = data
        .first()
        .ok_or_else(|| Error::InvalidArgument("training data must be nonempty".into()))?;
    let n = first.len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "training items must be nonempty".into(),
        ));
    }
    for (i, item) in data.iter().enumerate() {
        if item.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "training item {i} has length {} but item 0 has {n}",
                item.len()
            )));
        }
        if let Some(j) = item.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "training item {i} entry {j} is not finite"
            )));
        }
    }

    let master = RngStream::new(config.seed);
    let mut vae = init_vae(n, arch, &mut master.derive(0))?;
    let mut state = AdamState::new(&vae_tensor_sizes(&vae));
    let mut stats = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let mut epoch_stream = master.derive(epoch as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        epoch_stream.shuffle(&mut order);

        let mut sums = ElboTerms {
            loss: 0.0,
            recon: 0.0,
            kl: 0.0,
        };
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| data[i].as_slice()).collect();
            let (terms, grads) = elbo_loss_and_grads(&vae, &batch, &mut epoch_stream)
                .map_err(|e| Error::Training {
                    epoch,
                    detail: e.to_string(),
                })?;
            if !terms.loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    detail: format!("mean batch loss is {}", terms.loss),
                });
            }
            let weight = batch.len() as f64;
            sums.loss += terms.loss * weight;
            sums.recon += terms.recon * weight;
            sums.kl += terms.kl * weight;
            let mut tensors = vae_tensors_mut(&mut vae);
            adam_update(&mut tensors, &grads, &mut state, config)?;
        }
        let count = data.len() as f64;
        stats.push(EpochStats {
            epoch,
            mean_loss: sums.loss / count,
            recon_term: sums.recon / count,
            kl_term: sums.kl / count,
        });
    }
    Ok((vae, stats))
}

/// The decoder half, usable directly as a reconstruction prior.
pub fn export_decoder(vae: &VaeModel) -> MlpGenerator {
    vae.decoder.clone()
}

pub fn save_vae(vae: &VaeModel, path: &Path) -> Result<()> {
    let mut out = String::from("{\n  \"format_version\": 1,\n  \"kind\": \"vae\",\n  \"encoder\": ");
    out.push_str(&model_json(&vae.encoder));
    out.push_str(",\n  \"decoder\": ");
    out.push_str(&model_json(&vae.decoder));
    out.push_str("\n}\n");
    write_text_file(path, &out)
}

pub fn load_vae(path: &Path) -> Result<VaeModel> {
    let value = read_json_file(path)?;
    check_format_version(&value, path)?;
    let kind = get_str(&value, path, "kind")?;
    if kind != "vae" {
        return Err(Error::parse(
            path,
            format!("expected kind \"vae\", got \"{kind}\""),
        ));
    }
    let encoder = model_from_value(get_field(&value, path, "encoder")?, path)?;
    let decoder = model_from_value(get_field(&value, path, "decoder")?, path)?;
    VaeModel::new(encoder, decoder)
}

/// CSV of per-epoch loss terms: `epoch,mean_loss,recon_term,kl_term`.
pub fn write_training_curve(stats: &[EpochStats], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,mean_loss,recon_term,kl_term\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.epoch, s.mean_loss, s.recon_term, s.kl_term
        ));
    }
    write_text_file(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_sparse, SparseSpec, ValueDist};

    fn small_arch() -> VaeArch {
        VaeArch {
            latent_dim: 2,
            encoder_hidden: vec![5],
            decoder_hidden: vec![5],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Sigmoid,
        }
    }

    /// Encoder pinned to mu = (1, 0), logvar = 0; decoder constant 0.5 on
    /// matching data: the loss is pure divergence, 0.5 * (1 + 0 + 0 + 0).
    #[test]
    fn kl_hand_value() {
        let s = 2;
        let n = 3;
        let encoder = MlpGenerator::new(vec![MlpLayer::new(
            DenseMatrix::zeros(2 * s, n),
            vec![1.0, 0.0, 0.0, 0.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let decoder = MlpGenerator::new(vec![MlpLayer::new(
            DenseMatrix::zeros(n, s),
            vec![0.0; n],
            Activation::Sigmoid,
        )
        .unwrap()])
        .unwrap();
        let vae = VaeModel::new(encoder, decoder).unwrap();
        let x = vec![0.5; n];
        let batch: Vec<&[f64]> = vec![&x];
        let mut stream = RngStream::new(120);
        let (terms, _) = elbo_loss_and_grads(&vae, &batch, &mut stream).unwrap();
        assert!((terms.kl - 0.5).abs() <= 1e-15);
        assert!(terms.recon.abs() <= 1e-15);
        assert!((terms.loss - 0.5).abs() <= 1e-15);
    }

    /// All-zero parameters on all-zero data: reconstruction and divergence
    /// both vanish (identity output activation keeps the decoder at zero).
    #[test]
    fn zero_model_on_zero_data_has_zero_loss() {
        let s = 2;
        let n = 4;
        let encoder = MlpGenerator::new(vec![MlpLayer::new(
            DenseMatrix::zeros(2 * s, n),
            vec![0.0; 2 * s],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let decoder = MlpGenerator::new(vec![MlpLayer::new(
            DenseMatrix::zeros(n, s),
            vec![0.0; n],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let vae = VaeModel::new(encoder, decoder).unwrap();
        let x = vec![0.0; n];
        let batch: Vec<&[f64]> = vec![&x];
        let (terms, grads) = elbo_loss_and_grads(&vae, &batch, &mut RngStream::new(121)).unwrap();
        assert_eq!(terms.loss, 0.0);
        for g in &grads {
            assert!(g.iter().all(|v| *v == 0.0));
        }
    }

    /// Analytic parameter gradients against central differences with the
    /// reparameterization noise frozen (same stream clone per evaluation).
    #[test]
    fn elbo_gradients_match_finite_differences() {
        let mut stream = RngStream::new(122);
        let vae = init_vae(4, &small_arch(), &mut stream).unwrap();
        let items: Vec<Vec<f64>> = (0..2)
            .map(|_| stream.sample_gaussian(4, 0.0, 1.0).unwrap().iter().map(|v| 0.5 + 0.25 * v).collect())
            .collect();
        let batch: Vec<&[f64]> = items.iter().map(|v| v.as_slice()).collect();
        let noise = RngStream::new(123);

        let (_, grads) = elbo_loss_and_grads(&vae, &batch, &mut noise.clone()).unwrap();
        let params = vae_params(&vae);
        let h = 1e-5;
        for (t, tensor) in params.iter().enumerate() {
            for i in 0..tensor.len() {
                let mut plus = params.clone();
                plus[t][i] += h;
                let mut minus = params.clone();
                minus[t][i] -= h;
                let mut vp = vae.clone();
                set_vae_params(&mut vp, &plus).unwrap();
                let mut vm = vae.clone();
                set_vae_params(&mut vm, &minus).unwrap();
                let (lp, _) = elbo_loss_and_grads(&vp, &batch, &mut noise.clone()).unwrap();
                let (lm, _) = elbo_loss_and_grads(&vm, &batch, &mut noise.clone()).unwrap();
                let fd = (lp.loss - lm.loss) / (2.0 * h);
                let denom = grads[t][i].abs().max(fd.abs());
                if denom < 1e-6 {
                    assert!((grads[t][i] - fd).abs() <= 1e-2);
                } else {
                    assert!(
                        (grads[t][i] - fd).abs() / denom <= 1e-4,
                        "tensor {t} entry {i}: analytic {} vs fd {fd}",
                        grads[t][i]
                    );
                }
            }
        }
    }

    #[test]
    fn adam_zero_gradient_and_zero_rate_leave_parameters_unchanged() {
        let mut params = vec![vec![1.0, -2.0], vec![0.5]];
        let zero_grads = vec![vec![0.0, 0.0], vec![0.0]];
        let mut state = AdamState::new(&[2, 1]);
        let cfg = TrainConfig::default();
        adam_step(&mut params, &zero_grads, &mut state, &cfg).unwrap();
        assert_eq!(params, vec![vec![1.0, -2.0], vec![0.5]]);

        let grads = vec![vec![1.0, -3.0], vec![2.0]];
        let mut state = AdamState::new(&[2, 1]);
        let frozen = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        adam_step(&mut params, &grads, &mut state, &frozen).unwrap();
        assert_eq!(params, vec![vec![1.0, -2.0], vec![0.5]]);
        assert_eq!(state.steps_taken(), 1);
    }

    /// After bias correction the first step has magnitude close to the
    /// learning rate in every coordinate.
    #[test]
    fn adam_first_step_magnitude_is_the_learning_rate() {
        let mut params = vec![vec![0.0, 0.0, 0.0]];
        let grads = vec![vec![3.0, -0.01, 100.0]];
        let mut state = AdamState::new(&[3]);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        for (p, g) in params[0].iter().zip(&grads[0]) {
            let moved = p.abs();
            assert!((moved - cfg.learning_rate).abs() <= 0.01 * cfg.learning_rate);
            assert!(p.signum() == -g.signum());
        }
    }

    #[test]
    fn adam_descends_a_fixed_quadratic() {
        let mut params = vec![vec![3.0, -2.0, 1.5]];
        let mut state = AdamState::new(&[3]);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let value = |p: &[f64]| p.iter().map(|v| v * v).sum::<f64>();
        let start = value(&params[0]);
        for _ in 0..200 {
            let grads = vec![params[0].iter().map(|v| 2.0 * v).collect::<Vec<f64>>()];
            adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        }
        let end = value(&params[0]);
        assert!(end < 0.05 * start, "quadratic went from {start} to {end}");
    }

    #[test]
    fn init_respects_fan_in_scaling_and_zero_biases() {
        let mut stream = RngStream::new(124);
        let arch = VaeArch {
            latent_dim: 8,
            encoder_hidden: vec![64],
            decoder_hidden: vec![64],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Sigmoid,
        };
        let vae = init_vae(100, &arch, &mut stream).unwrap();
        let first = &vae.encoder.layers()[0];
        let var = first.weights.data().iter().map(|w| w * w).sum::<f64>()
            / first.weights.data().len() as f64;
        let expected = 2.0 / 100.0;
        assert!(
            (var - expected).abs() <= 0.2 * expected,
            "sample variance {var} vs {expected}"
        );
        for net in [&vae.encoder, &vae.decoder] {
            for layer in net.layers() {
                assert!(layer.bias.iter().all(|b| *b == 0.0));
            }
        }
        assert_eq!(
            vae.encoder.layers().last().unwrap().activation,
            Activation::Identity
        );
        assert_eq!(
            vae.decoder.layers().last().unwrap().activation,
            Activation::Sigmoid
        );
    }

    fn sparse_training_data(n: usize, k: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let spec = SparseSpec {
            n,
            k,
            value_dist: ValueDist::Uniform01,
            normalize: false,
        };
        let mut stream = RngStream::new(seed);
        (0..count)
            .map(|_| sample_sparse(&spec, &mut stream).unwrap())
            .collect()
    }

    #[test]
    fn training_is_reproducible_per_seed() {
        let data = sparse_training_data(8, 2, 120, 125);
        let arch = VaeArch {
            latent_dim: 3,
            encoder_hidden: vec![10],
            decoder_hidden: vec![10],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Sigmoid,
        };
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            seed: 33,
            ..TrainConfig::default()
        };
        let (vae_a, stats_a) = train_vae(&data, &arch, &cfg).unwrap();
        let (vae_b, stats_b) = train_vae(&data, &arch, &cfg).unwrap();
        for (pa, pb) in vae_params(&vae_a).iter().zip(&vae_params(&vae_b)) {
            for (a, b) in pa.iter().zip(pb) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        assert_eq!(stats_a, stats_b);

        let other = TrainConfig { seed: 34, ..cfg };
        let (vae_c, _) = train_vae(&data, &arch, &other).unwrap();
        let same = vae_params(&vae_a)
            .iter()
            .zip(&vae_params(&vae_c))
            .all(|(pa, pc)| pa == pc);
        assert!(!same);
    }

    #[test]
    fn training_loss_drops_substantially() {
        let data = sparse_training_data(16, 2, 500, 126);
        let arch = VaeArch {
            latent_dim: 4,
            encoder_hidden: vec![16],
            decoder_hidden: vec![16],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Sigmoid,
        };
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 32,
            seed: 7,
            ..TrainConfig::default()
        };
        let (_, stats) = train_vae(&data, &arch, &cfg).unwrap();
        assert_eq!(stats.len(), 30);
        assert_eq!(stats.first().unwrap().epoch, 1);
        let first = stats.first().unwrap().mean_loss;
        let last = stats.last().unwrap().mean_loss;
        assert!(
            last < 0.5 * first,
            "epoch losses did not halve: {first} -> {last}"
        );
        for s in &stats {
            assert!((s.mean_loss - (s.recon_term + s.kl_term)).abs() <= 1e-9);
        }
    }

    #[test]
    fn divergent_training_reports_the_epoch() {
        let data: Vec<Vec<f64>> = sparse_training_data(6, 2, 64, 127)
            .into_iter()
            .map(|item| item.iter().map(|v| v * 50.0).collect())
            .collect();
        let arch = VaeArch {
            latent_dim: 2,
            encoder_hidden: vec![8],
            decoder_hidden: vec![8],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        };
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            learning_rate: 1e6,
            seed: 4,
            ..TrainConfig::default()
        };
        match train_vae(&data, &arch, &cfg) {
            Err(Error::Training { epoch, .. }) => assert!(epoch >= 1 && epoch <= 5),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn vae_save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut stream = RngStream::new(128);
        let vae = init_vae(6, &small_arch(), &mut stream).unwrap();
        let path = dir.path().join("model.vae.json");
        save_vae(&vae, &path).unwrap();
        let loaded = load_vae(&path).unwrap();
        for (pa, pb) in vae_params(&vae).iter().zip(&vae_params(&loaded)) {
            for (a, b) in pa.iter().zip(pb) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        let dec = export_decoder(&vae);
        assert_eq!(dec.latent_dim(), 2);
        assert_eq!(dec.output_dim(), 6);
        let z = vec![0.3, -0.8];
        assert_eq!(dec.forward(&z).unwrap(), vae.decoder.forward(&z).unwrap());
    }

    #[test]
    fn training_curve_file_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let stats = vec![
            EpochStats {
                epoch: 1,
                mean_loss: 2.5,
                recon_term: 2.0,
                kl_term: 0.5,
            },
            EpochStats {
                epoch: 2,
                mean_loss: 1.25,
                recon_term: 1.0,
                kl_term: 0.25,
            },
        ];
        let path = dir.path().join("curve.csv");
        write_training_curve(&stats, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "epoch,mean_loss,recon_term,kl_term");
        assert_eq!(lines.next().unwrap(), "1,2.5,2,0.5");
        assert_eq!(lines.next().unwrap(), "2,1.25,1,0.25");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let data = sparse_training_data(4, 1, 8, 129);
        let arch = small_arch();
        let bad_epochs = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_vae(&data, &arch, &bad_epochs),
            Err(Error::InvalidArgument(_))
        ));
        let bad_beta = TrainConfig {
            beta1: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_vae(&data, &arch, &bad_beta),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            train_vae(&[], &arch, &TrainConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }
}
