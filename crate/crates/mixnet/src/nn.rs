//! Minimal fully-connected network: ReLU hidden layers, sigmoid (or linear)
//! output, manual reverse-mode gradients, plain SGD with an externally
//! supplied effective learning rate.
//!
//! Conventions:
//! - all arithmetic is `f64`;
//! - weights are row-major `(out_dim, in_dim)` matrices;
//! - batch gradients are *summed* over the batch, not averaged — learning
//!   rates are calibrated against this;
//! - the ReLU subgradient at exactly 0 is 0.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::{self, StreamId};

/// Activation applied to the final layer. Hidden layers are always ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Sigmoid,
    Linear,
}

/// Layer structure of one network: input size, hidden sizes, output size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    output_activation: OutputActivation,
}

impl MlpSpec {
    /// Sigmoid-output spec, the shape used by all generator networks.
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        Self::with_output(layer_sizes, OutputActivation::Sigmoid)
    }

    pub fn with_output(layer_sizes: Vec<usize>, output_activation: OutputActivation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "network needs at least input and output layers, got {:?}",
                layer_sizes
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must be >= 1, got {:?}",
                layer_sizes
            )));
        }
        Ok(MlpSpec {
            layer_sizes,
            output_activation,
        })
    }

    /// Spec for a generator mapping `latent_dim` inputs through `hidden`
    /// ReLU layers to a sigmoid output of `out_dim`.
    pub fn generator(latent_dim: usize, hidden: &[usize], out_dim: usize) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(latent_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(out_dim);
        Self::new(sizes)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    /// Number of weight layers (= number of bias vectors).
    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

/// Weights and biases of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    spec: MlpSpec,
    /// Per layer, `(out_dim, in_dim)` row-major.
    weights: Vec<Mat>,
    biases: Vec<Vec<f64>>,
}

/// Accumulated cost gradients, shape-matched to an [`MlpNetwork`].
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub d_weights: Vec<Mat>,
    pub d_biases: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn all_finite(&self) -> bool {
        self.d_weights.iter().all(Mat::all_finite)
            && self
                .d_biases
                .iter()
                .all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Post-activation values of every layer (input first), kept so a backward
/// pass does not have to recompute the forward pass.
pub struct ForwardCache {
    activations: Vec<Mat>,
}

impl ForwardCache {
    pub fn output(&self) -> &Mat {
        self.activations.last().unwrap()
    }
}

impl MlpNetwork {
    pub fn spec(&self) -> &MlpSpec {
        self.spec_ref()
    }

    fn spec_ref(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[Mat] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    /// Rebuilds a network from raw parameters (checkpoint loading).
    pub fn from_parts(spec: MlpSpec, weights: Vec<Mat>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() != spec.n_layers() || biases.len() != spec.n_layers() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} layers, got {} weight and {} bias sets",
                spec.n_layers(),
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..spec.n_layers() {
            let (in_dim, out_dim) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
            if weights[l].rows() != out_dim || weights[l].cols() != in_dim || biases[l].len() != out_dim
            {
                return Err(Error::ShapeMismatch(format!(
                    "layer {}: expected weights {}x{}, biases {}",
                    l, out_dim, in_dim, out_dim
                )));
            }
        }
        Ok(MlpNetwork {
            spec,
            weights,
            biases,
        })
    }

    #[cfg(test)]
    pub(crate) fn weights_mut(&mut self) -> &mut [Mat] {
        &mut self.weights
    }

    #[cfg(test)]
    pub(crate) fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Initializes weights uniformly in `[-a, a]` with `a = sqrt(6/(fan_in+fan_out))`
/// per layer; biases start at zero. Pure function of `(spec, seed)`.
pub fn init_network(spec: &MlpSpec, seed: u64) -> MlpNetwork {
    let mut r = rng::derive(seed, StreamId::WeightInit, 0);
    init_network_with_rng(spec, &mut r)
}

pub fn init_network_with_rng(spec: &MlpSpec, rng: &mut ChaCha8Rng) -> MlpNetwork {
    let mut weights = Vec::with_capacity(spec.n_layers());
    let mut biases = Vec::with_capacity(spec.n_layers());
    for l in 0..spec.n_layers() {
        let (in_dim, out_dim) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut w = Mat::zeros(out_dim, in_dim);
        for v in w.data_mut() {
            *v = rng.random_range(-limit..limit);
        }
        weights.push(w);
        biases.push(vec![0.0; out_dim]);
    }
    MlpNetwork {
        spec: spec.clone(),
        weights,
        biases,
    }
}

/// Runs the network on a `B x input_dim` batch; returns `B x output_dim`.
pub fn forward(net: &MlpNetwork, z_batch: &Mat) -> Result<Mat> {
    Ok(forward_cached(net, z_batch)?
        .activations
        .pop()
        .unwrap())
}

/// Forward pass keeping every layer's post-activation values.
pub fn forward_cached(net: &MlpNetwork, z_batch: &Mat) -> Result<ForwardCache> {
    if z_batch.cols() != net.spec.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input batch has {} columns, network expects {}",
            z_batch.cols(),
            net.spec.input_dim()
        )));
    }
    let batch = z_batch.rows();
    let n_layers = net.spec.n_layers();
    let mut activations = Vec::with_capacity(n_layers + 1);
    activations.push(z_batch.clone());
    for l in 0..n_layers {
        let w = &net.weights[l];
        let b = &net.biases[l];
        let prev = &activations[l];
        let out_dim = w.rows();
        let is_output = l == n_layers - 1;
        let mut h = Mat::zeros(batch, out_dim);
        for r in 0..batch {
            let x = prev.row(r);
            let out = h.row_mut(r);
            for (o, out_v) in out.iter_mut().enumerate() {
                let wrow = w.row(o);
                let mut z = b[o];
                for (wi, xi) in wrow.iter().zip(x) {
                    z += wi * xi;
                }
                *out_v = if is_output {
                    match net.spec.output_activation {
                        OutputActivation::Sigmoid => sigmoid(z),
                        OutputActivation::Linear => z,
                    }
                } else {
                    z.max(0.0)
                };
            }
        }
        activations.push(h);
    }
    Ok(ForwardCache { activations })
}

/// Exact gradient of the cost w.r.t. all weights and biases, summed over the
/// batch. `grad_output` holds the per-row cost gradient at the network output.
/// Forward activations are recomputed internally; use [`backward_cached`] to
/// reuse a cache from [`forward_cached`].
pub fn backward(net: &MlpNetwork, z_batch: &Mat, grad_output: &Mat) -> Result<GradientSet> {
    let cache = forward_cached(net, z_batch)?;
    Ok(backward_cached(net, &cache, grad_output)?.0)
}

/// Backward pass against a cached forward; also returns the gradient with
/// respect to the network input (needed when networks are chained, as in the
/// autoencoder).
pub fn backward_cached(
    net: &MlpNetwork,
    cache: &ForwardCache,
    grad_output: &Mat,
) -> Result<(GradientSet, Mat)> {
    let n_layers = net.spec.n_layers();
    let out = cache.output();
    if grad_output.rows() != out.rows() || grad_output.cols() != out.cols() {
        return Err(Error::ShapeMismatch(format!(
            "grad_output is {}x{}, expected {}x{}",
            grad_output.rows(),
            grad_output.cols(),
            out.rows(),
            out.cols()
        )));
    }
    if !grad_output.all_finite() {
        return Err(Error::Numeric("non-finite grad_output".into()));
    }
    let batch = grad_output.rows();

    let mut d_weights: Vec<Mat> = net
        .weights
        .iter()
        .map(|w| Mat::zeros(w.rows(), w.cols()))
        .collect();
    let mut d_biases: Vec<Vec<f64>> = net.biases.iter().map(|b| vec![0.0; b.len()]).collect();

    // delta = dC/d(pre-activation) of the current layer, row per batch item.
    let mut delta = Mat::zeros(batch, out.cols());
    for r in 0..batch {
        let y = out.row(r);
        let g = grad_output.row(r);
        let d = delta.row_mut(r);
        for o in 0..y.len() {
            d[o] = match net.spec.output_activation {
                OutputActivation::Sigmoid => g[o] * y[o] * (1.0 - y[o]),
                OutputActivation::Linear => g[o],
            };
        }
    }

    for l in (0..n_layers).rev() {
        let prev = &cache.activations[l];
        let w = &net.weights[l];
        let (out_dim, in_dim) = (w.rows(), w.cols());

        {
            let dw = &mut d_weights[l];
            let db = &mut d_biases[l];
            for r in 0..batch {
                let d = delta.row(r);
                let x = prev.row(r);
                for o in 0..out_dim {
                    let dz = d[o];
                    if dz == 0.0 {
                        continue;
                    }
                    db[o] += dz;
                    let dwrow = dw.row_mut(o);
                    for (dwi, xi) in dwrow.iter_mut().zip(x) {
                        *dwi += dz * xi;
                    }
                }
            }
        }

        // Propagate to the previous layer's post-activation, then through
        // its ReLU (post-activation > 0 iff pre-activation > 0).
        let mut d_prev = Mat::zeros(batch, in_dim);
        for r in 0..batch {
            let d = delta.row(r);
            let dp = d_prev.row_mut(r);
            for o in 0..out_dim {
                let dz = d[o];
                if dz == 0.0 {
                    continue;
                }
                let wrow = w.row(o);
                for (dpi, wi) in dp.iter_mut().zip(wrow) {
                    *dpi += dz * wi;
                }
            }
            if l > 0 {
                let h = prev.row(r);
                for (dpi, hi) in dp.iter_mut().zip(h) {
                    if *hi <= 0.0 {
                        *dpi = 0.0;
                    }
                }
            }
        }
        delta = d_prev;
    }

    Ok((
        GradientSet {
            d_weights,
            d_biases,
        },
        delta,
    ))
}

/// One SGD step: `w <- (1 - lr*decay) * w - lr * g`; biases are exempt from
/// decay. The caller supplies the effective learning rate (plain `alpha`, or
/// the membership-scaled rate in soft training).
pub fn sgd_step(
    net: &mut MlpNetwork,
    grads: &GradientSet,
    effective_lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if !effective_lr.is_finite() || effective_lr < 0.0 || !weight_decay.is_finite() {
        return Err(Error::Numeric(format!(
            "bad sgd step: lr={effective_lr}, decay={weight_decay}"
        )));
    }
    if !grads.all_finite() {
        return Err(Error::Numeric("non-finite gradient in sgd_step".into()));
    }
    let shrink = 1.0 - effective_lr * weight_decay;
    for (w, dw) in net.weights.iter_mut().zip(&grads.d_weights) {
        for (wv, gv) in w.data_mut().iter_mut().zip(dw.data()) {
            *wv = shrink * *wv - effective_lr * gv;
        }
    }
    for (b, db) in net.biases.iter_mut().zip(&grads.d_biases) {
        for (bv, gv) in b.iter_mut().zip(db) {
            *bv -= effective_lr * gv;
        }
    }
    Ok(())
}

/// `count x p` matrix of i.i.d. uniform draws in `[-1, 1]`.
pub fn sample_latent(p: usize, count: usize, rng: &mut ChaCha8Rng) -> Mat {
    let mut z = Mat::zeros(count, p);
    for v in z.data_mut() {
        *v = rng.random_range(-1.0..=1.0);
    }
    z
}
