//! Multilayer-perceptron generators: forward evaluation, reverse-mode
//! derivatives, a product-form Lipschitz bound, and file round-trip.
//!
//! A generator is a chain of affine layers with entrywise activations,
//! z^(i) = phi_i(W^(i) z^(i-1) + b^(i)). The reverse pass is implemented in
//! closed form per layer from cached pre-activations; there is no tape.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::linalg::DenseMatrix;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Relu => {
                if u > 0.0 {
                    u
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-u).exp()),
            Activation::Tanh => u.tanh(),
            Activation::Identity => u,
        }
    }

    /// Entrywise derivative at pre-activation `u`. The relu derivative at 0
    /// is taken to be 0.
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = self.apply(u);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = u.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    /// Lipschitz constant used by the product bound; 1 for every supported
    /// activation.
    pub fn lipschitz(self) -> f64 {
        1.0
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MlpLayer {
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl MlpLayer {
    pub fn new(weights: DenseMatrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::DimensionMismatch(format!(
                "layer bias length {} does not match {} output rows",
                bias.len(),
                weights.rows()
            )));
        }
        if let Some(bad) = bias.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "layer bias entry {bad} is not finite"
            )));
        }
        Ok(MlpLayer {
            weights,
            bias,
            activation,
        })
    }
}

/// Feed-forward generator G: R^s -> R^n. The same struct also serves as a
/// plain MLP (e.g. the recognition net of an autoencoder), so no
/// expansiveness restriction is placed on s versus n.
#[derive(Clone, Debug)]
pub struct MlpGenerator {
    layers: Vec<MlpLayer>,
}

/// Cached forward pass: per-layer inputs and pre-activations, plus the output.
pub(crate) struct ForwardTrace {
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Per-layer parameter gradients produced by the full reverse pass.
pub(crate) struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl MlpGenerator {
    pub fn new(layers: Vec<MlpLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "a generator needs at least one layer".into(),
            ));
        }
        for i in 1..layers.len() {
            let expected = layers[i - 1].weights.rows();
            let got = layers[i].weights.cols();
            if got != expected {
                return Err(Error::DimensionMismatch(format!(
                    "layer {i} expects input of length {got} but layer {} outputs {expected}",
                    i - 1
                )));
            }
        }
        Ok(MlpGenerator { layers })
    }

    pub fn layers(&self) -> &[MlpLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [MlpLayer] {
        &mut self.layers
    }

    /// Latent (input) dimension s.
    pub fn latent_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    /// Output dimension n.
    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.rows()
    }

    /// Number of layers d.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(z)?.output)
    }

    pub(crate) fn forward_cached(&self, z: &[f64]) -> Result<ForwardTrace> {
        if z.len() != self.latent_dim() {
            return Err(Error::DimensionMismatch(format!(
                "generator expects latent of length {}, got {}",
                self.latent_dim(),
                z.len()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = z.to_vec();
        for layer in &self.layers {
            let mut u = layer.weights.matvec(&current)?;
            for (ui, bi) in u.iter_mut().zip(&layer.bias) {
                *ui += bi;
            }
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(
                    "non-finite value in generator forward pass".into(),
                ));
            }
            let post: Vec<f64> = u.iter().map(|&ui| layer.activation.apply(ui)).collect();
            inputs.push(current);
            pre.push(u);
            current = post;
        }
        Ok(ForwardTrace {
            inputs,
            pre,
            output: current,
        })
    }

    /// J_G(z)^T c for a cotangent c on the output.
    pub fn vjp(&self, z: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_cached(z)?;
        self.vjp_from_trace(&trace, cotangent)
    }

    pub(crate) fn vjp_from_trace(
        &self,
        trace: &ForwardTrace,
        cotangent: &[f64],
    ) -> Result<Vec<f64>> {
        if cotangent.len() != self.output_dim() {
            return Err(Error::DimensionMismatch(format!(
                "cotangent length {} does not match output dimension {}",
                cotangent.len(),
                self.output_dim()
            )));
        }
        let mut delta = cotangent.to_vec();
        for (layer, pre) in self.layers.iter().zip(&trace.pre).rev() {
            for (d, &u) in delta.iter_mut().zip(pre) {
                *d *= layer.activation.derivative(u);
            }
            delta = layer.weights.matvec_t(&delta)?;
        }
        Ok(delta)
    }

    /// Full reverse pass: parameter gradients for every layer plus the
    /// gradient with respect to the input.
    pub(crate) fn backward_params(
        &self,
        trace: &ForwardTrace,
        cotangent: &[f64],
    ) -> Result<(Vec<LayerGrads>, Vec<f64>)> {
        let mut delta = cotangent.to_vec();
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        for (layer, (pre, input)) in self
            .layers
            .iter()
            .zip(trace.pre.iter().zip(&trace.inputs))
            .rev()
        {
            for (d, &u) in delta.iter_mut().zip(pre) {
                *d *= layer.activation.derivative(u);
            }
            let rows = layer.weights.rows();
            let cols = layer.weights.cols();
            let mut w_grad = vec![0.0; rows * cols];
            for r in 0..rows {
                let dr = delta[r];
                if dr != 0.0 {
                    for c in 0..cols {
                        w_grad[r * cols + c] = dr * input[c];
                    }
                }
            }
            grads.push(LayerGrads {
                weights: w_grad,
                bias: delta.clone(),
            });
            delta = layer.weights.matvec_t(&delta)?;
        }
        grads.reverse();
        Ok((grads, delta))
    }

    /// Largest weight magnitude across all layers.
    pub fn max_weight_abs(&self) -> f64 {
        self.layers
            .iter()
            .fold(0.0f64, |acc, l| acc.max(l.weights.max_abs()))
    }

    /// Widest layer, counting the input as layer 0.
    pub fn max_width(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.rows())
            .chain(std::iter::once(self.latent_dim()))
            .max()
            .unwrap()
    }

    /// Product-form Lipschitz bound (L * N * w_max)^d, with L the largest
    /// activation constant, N the widest layer, and w_max the largest weight
    /// magnitude.
    pub fn lipschitz_bound(&self) -> f64 {
        let l = self
            .layers
            .iter()
            .fold(0.0f64, |acc, layer| acc.max(layer.activation.lipschitz()));
        let n = self.max_width() as f64;
        let w = self.max_weight_abs();
        (l * n * w).powi(self.depth() as i32)
    }
}

/// Draws an MLP with the given layer widths; weights are N(0, weight_scale^2),
/// biases are N(0, weight_scale^2) as well. Hidden layers use `hidden`, the
/// final layer uses `output`.
pub fn random_mlp(
    dims: &[usize],
    hidden: Activation,
    output: Activation,
    weight_scale: f64,
    stream: &mut RngStream,
) -> Result<MlpGenerator> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(
            "random_mlp needs at least input and output dimensions".into(),
        ));
    }
    let variance = weight_scale * weight_scale;
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for i in 1..dims.len() {
        let rows = dims[i];
        let cols = dims[i - 1];
        let weights = DenseMatrix::new(rows, cols, stream.sample_gaussian(rows * cols, 0.0, variance)?)?;
        let bias = stream.sample_gaussian(rows, 0.0, variance)?;
        let act = if i == dims.len() - 1 { output } else { hidden };
        layers.push(MlpLayer::new(weights, bias, act)?);
    }
    MlpGenerator::new(layers)
}

/// Serializes a generator into the container document body (without writing
/// a file); used both for standalone model files and for embedding.
pub(crate) fn model_json(g: &MlpGenerator) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str("  \"format_version\": 1,\n");
    out.push_str(&format!("  \"s\": {},\n", g.latent_dim()));
    out.push_str(&format!("  \"n\": {},\n", g.output_dim()));
    out.push_str("  \"layers\": [\n");
    for (i, layer) in g.layers().iter().enumerate() {
        out.push_str("    {");
        out.push_str(&format!(
            "\"rows\": {}, \"cols\": {}, \"activation\": \"{}\", ",
            layer.weights.rows(),
            layer.weights.cols(),
            layer.activation.name()
        ));
        out.push_str("\"W\": ");
        io::push_float_array(&mut out, layer.weights.data());
        out.push_str(", \"b\": ");
        io::push_float_array(&mut out, &layer.bias);
        out.push('}');
        if i + 1 < g.layers().len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("  ]\n}");
    out
}

pub fn save_model(g: &MlpGenerator, path: &Path) -> Result<()> {
    io::write_text_file(path, &(model_json(g) + "\n"))
}

pub(crate) fn model_from_value(value: &serde_json::Value, path: &Path) -> Result<MlpGenerator> {
    io::check_format_version(value, path)?;
    let s = io::get_usize(value, path, "s")?;
    let n = io::get_usize(value, path, "n")?;
    let layer_values = io::get_array(value, path, "layers")?;
    if layer_values.is_empty() {
        return Err(Error::parse(path, "field `layers` must not be empty"));
    }
    let mut layers = Vec::with_capacity(layer_values.len());
    for (i, lv) in layer_values.iter().enumerate() {
        let ctx = |field: &str| format!("layers[{i}].{field}");
        let rows = io::get_usize(lv, path, "rows")
            .map_err(|_| Error::parse(path, format!("field `{}` must be a nonnegative integer", ctx("rows"))))?;
        let cols = io::get_usize(lv, path, "cols")
            .map_err(|_| Error::parse(path, format!("field `{}` must be a nonnegative integer", ctx("cols"))))?;
        let act_name = io::get_str(lv, path, "activation")
            .map_err(|_| Error::parse(path, format!("field `{}` must be a string", ctx("activation"))))?;
        let activation = Activation::parse(act_name).ok_or_else(|| {
            Error::parse(
                path,
                format!("unknown activation \"{act_name}\" in `{}`", ctx("activation")),
            )
        })?;
        let w = io::get_f64_array(lv, path, "W")
            .map_err(|e| rewrap_layer_err(e, path, i, "W"))?;
        let b = io::get_f64_array(lv, path, "b")
            .map_err(|e| rewrap_layer_err(e, path, i, "b"))?;
        if w.len() != rows * cols {
            return Err(Error::parse(
                path,
                format!(
                    "`{}` has {} entries but rows*cols = {}",
                    ctx("W"),
                    w.len(),
                    rows * cols
                ),
            ));
        }
        if b.len() != rows {
            return Err(Error::parse(
                path,
                format!("`{}` has {} entries but rows = {rows}", ctx("b"), b.len()),
            ));
        }
        let weights = DenseMatrix::new(rows, cols, w)
            .map_err(|e| Error::parse(path, format!("`{}`: {e}", ctx("W"))))?;
        let layer = MlpLayer::new(weights, b, activation)
            .map_err(|e| Error::parse(path, format!("layers[{i}]: {e}")))?;
        layers.push(layer);
    }
    let g = MlpGenerator::new(layers).map_err(|e| Error::parse(path, e.to_string()))?;
    if g.latent_dim() != s {
        return Err(Error::parse(
            path,
            format!("field `s` is {s} but layers[0].cols is {}", g.latent_dim()),
        ));
    }
    if g.output_dim() != n {
        return Err(Error::parse(
            path,
            format!(
                "field `n` is {n} but the last layer outputs {}",
                g.output_dim()
            ),
        ));
    }
    Ok(g)
}

fn rewrap_layer_err(e: Error, path: &Path, layer: usize, field: &str) -> Error {
    match e {
        Error::Parse { detail, .. } => Error::parse(
            path,
            format!("layers[{layer}]: {}", detail.replace(&format!("`{field}`"), &format!("`layers[{layer}].{field}`"))),
        ),
        other => other,
    }
}

pub fn load_model(path: &Path) -> Result<MlpGenerator> {
    let value = io::read_json_file(path)?;
    model_from_value(&value, path)
}
