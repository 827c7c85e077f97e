//! Dense feed-forward network with hand-written reverse-mode gradients.
//!
//! Weights are stored `(in_dim, out_dim)` so a batch forward is `X · W + b`
//! with rows as samples.

mod adam;
mod schedule;

pub use adam::AdamState;
pub use schedule::{EarlyStopState, PlateauSchedulerState};

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn fresh_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
    hidden_activation: Activation,
    output_activation: Activation,
    // Changes whenever parameters change; ties caches to the model state they came from.
    generation: u64,
}

impl Clone for MlpModel {
    fn clone(&self) -> Self {
        MlpModel {
            layer_dims: self.layer_dims.clone(),
            layers: self.layers.clone(),
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
            generation: fresh_generation(),
        }
    }
}

impl PartialEq for MlpModel {
    fn eq(&self, other: &Self) -> bool {
        self.layer_dims == other.layer_dims
            && self.layers == other.layers
            && self.hidden_activation == other.hidden_activation
            && self.output_activation == other.output_activation
    }
}

/// Per-layer inputs and post-activations recorded by [`MlpModel::forward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    generation: u64,
    // activations[0] is the batch; activations[l + 1] is the output of layer l.
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

/// Gradients shaped like the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    /// Flattened in the same order as [`MlpModel::flat_parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

fn flatten_layers(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weights.iter().copied());
        out.extend(l.bias.iter().copied());
    }
    out
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::Config(format!(
            "a network needs at least an input and an output layer, got dims {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Config(format!(
            "layer dimensions must be at least 1, got {layer_dims:?}"
        )));
    }
    Ok(())
}

impl MlpModel {
    /// Symmetric uniform initialization with limit `sqrt(1 / fan_in)`, zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_dims
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (1.0 / fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    rng.random_range(-limit..=limit)
                });
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(MlpModel {
            layer_dims: layer_dims.to_vec(),
            layers,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
            generation: fresh_generation(),
        })
    }

    /// Builds a model from explicit layers (weights `(in, out)`).
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        let mut dims = vec![layers[0].weights.nrows()];
        for (i, l) in layers.iter().enumerate() {
            if l.weights.nrows() != *dims.last().unwrap() {
                return Err(Error::dimension(
                    format!("layer {i} input width"),
                    dims.last().unwrap(),
                    l.weights.nrows(),
                ));
            }
            if l.bias.len() != l.weights.ncols() {
                return Err(Error::dimension(
                    format!("layer {i} bias length"),
                    l.weights.ncols(),
                    l.bias.len(),
                ));
            }
            dims.push(l.weights.ncols());
        }
        check_dims(&dims)?;
        Ok(MlpModel {
            layer_dims: dims,
            layers,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
            generation: fresh_generation(),
        })
    }

    pub fn with_activations(mut self, hidden: Activation, output: Activation) -> Self {
        self.hidden_activation = hidden;
        self.output_activation = output;
        self.touch();
        self
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activations(&self) -> (Activation, Activation) {
        (self.hidden_activation, self.output_activation)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_flat_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::dimension(
                "flat parameter vector",
                self.parameter_count(),
                values.len(),
            ));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = it.next().unwrap();
            }
            for b in l.bias.iter_mut() {
                *b = it.next().unwrap();
            }
        }
        self.touch();
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        self.touch();
        &mut self.layers
    }

    fn touch(&mut self) {
        self.generation = fresh_generation();
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn check_batch(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::dimension(
                "forward batch width",
                self.input_dim(),
                batch.ncols(),
            ));
        }
        Ok(())
    }

    /// Predictions only, no cache.
    pub fn predict(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(&batch)?;
        let mut x = batch.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = x.dot(&l.weights);
            z += &l.bias;
            self.activation_for(i).apply(&mut z);
            x = z;
        }
        Ok(x)
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_batch(&batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.to_owned());
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&l.weights);
            z += &l.bias;
            self.activation_for(i).apply(&mut z);
            activations.push(z);
        }
        let predictions = activations.last().unwrap().clone();
        Ok((
            predictions,
            ForwardCache {
                generation: self.generation,
                activations,
            },
        ))
    }

    /// Gradient of `sum_rows <output_gradient, predictions>` with respect to
    /// every parameter.
    pub fn backward(&self, cache: &ForwardCache, output_gradient: ArrayView2<f64>) -> Result<Gradients> {
        if cache.generation != self.generation || cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::Usage(
                "forward cache does not belong to the current model parameters".into(),
            ));
        }
        let expected = (cache.batch_size(), self.output_dim());
        if output_gradient.dim() != expected {
            return Err(Error::dimension(
                "output gradient shape",
                format!("{expected:?}"),
                format!("{:?}", output_gradient.dim()),
            ));
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = output_gradient.to_owned();
        for i in (0..self.layers.len()).rev() {
            if self.activation_for(i) == Activation::Relu {
                let out = &cache.activations[i + 1];
                ndarray::Zip::from(&mut delta).and(out).for_each(|d, &o| {
                    if o <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let input = &cache.activations[i];
            let weights_grad = input.t().dot(&delta);
            let bias_grad = delta.sum_axis(Axis(0));
            if i > 0 {
                delta = delta.dot(&self.layers[i].weights.t());
            }
            grads.push(Layer {
                weights: weights_grad,
                bias: bias_grad,
            });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    pub fn to_params(&self) -> ModelParams {
        ModelParams {
            format_version: PARAMS_FORMAT_VERSION,
            layer_dims: self.layer_dims.clone(),
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
            parameters: self.flat_parameters(),
        }
    }

    pub fn from_params(params: &ModelParams) -> Result<Self> {
        if params.format_version != PARAMS_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported parameter format version {} (expected {PARAMS_FORMAT_VERSION})",
                params.format_version
            )));
        }
        let mut model = MlpModel::init(&params.layer_dims, 0)?
            .with_activations(params.hidden_activation, params.output_activation);
        model.set_flat_parameters(&params.parameters)?;
        Ok(model)
    }

    /// Versioned binary form: magic, version, dims, then parameters, all
    /// little-endian (`u32` counts, `f64` values).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&PARAMS_FORMAT_VERSION.to_le_bytes());
        out.push(activation_code(self.hidden_activation));
        out.push(activation_code(self.output_activation));
        out.extend_from_slice(&(self.layer_dims.len() as u32).to_le_bytes());
        for &d in &self.layer_dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.flat_parameters() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = ByteReader { bytes, pos: 0 };
        if reader.take(BINARY_MAGIC.len())? != BINARY_MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = reader.u32()?;
        if version != PARAMS_FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported parameter format version {version}"
            )));
        }
        let hidden = activation_from_code(reader.take(1)?[0])?;
        let output = activation_from_code(reader.take(1)?[0])?;
        let n_dims = reader.u32()? as usize;
        let dims = (0..n_dims)
            .map(|_| reader.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut model = MlpModel::init(&dims, 0)?.with_activations(hidden, output);
        let values = (0..model.parameter_count())
            .map(|_| reader.f64())
            .collect::<Result<Vec<_>>>()?;
        if reader.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after parameters".into()));
        }
        model.set_flat_parameters(&values)?;
        Ok(model)
    }
}

pub const PARAMS_FORMAT_VERSION: u32 = 1;
const BINARY_MAGIC: &[u8; 4] = b"EPCM";

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Identity => 1,
    }
}

fn activation_from_code(code: u8) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Identity),
        other => Err(Error::Checkpoint(format!("unknown activation code {other}"))),
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Checkpoint("truncated parameter blob".into()));
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// JSON-friendly parameter snapshot: layer dims plus a flat parameter array
/// (per layer: weights row-major `(in, out)`, then biases).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub parameters: Vec<f64>,
}
