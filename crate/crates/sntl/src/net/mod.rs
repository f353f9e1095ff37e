//! The second-stage feed-forward network and its training machinery.
//!
//! The study architecture is 139 -> 100 x 7 (ReLU) -> 1 (linear). Everything
//! here works for any layer-compatible dimension list so gradient checks can
//! run on shrunken networks. Gradients are exact backpropagation under
//! squared-error loss; [`train`] runs mini-batch Adam. Trained weights move
//! between runs through the binary format in [`save_weights`] /
//! [`load_weights`] -- loading pretrained weights as the initialization and
//! updating all layers is the transfer mechanism.

mod train;
mod weights_io;

pub use train::{adam_step, train, AdamState, TrainConfig, TrainTrace};
pub use weights_io::{
    load_weights, load_weights_expecting, save_weights, WeightsError, WEIGHT_FORMAT_VERSION,
    WEIGHT_MAGIC,
};

use crate::numerics::RandomState;
use ndarray::{Array1, Array2};

/// Width and depth of the study architecture.
pub const HIDDEN_WIDTH: usize = 100;
pub const HIDDEN_LAYERS: usize = 7;

/// `[input, 100 x 7, 1]` for a given embedding dimension.
pub fn default_architecture(input_dim: usize) -> Vec<usize> {
    let mut dims = vec![input_dim];
    dims.resize(HIDDEN_LAYERS + 1, HIDDEN_WIDTH);
    dims.push(1);
    dims
}

/// Errors from network construction and training.
#[derive(Debug)]
pub enum NetError {
    DimensionMismatch { expected: usize, got: usize },
    EmptyDataset,
    BadConfig(String),
}

impl std::fmt::Display for NetError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Self::EmptyDataset => write!(f, "training data is empty"),
            Self::BadConfig(msg) => write!(f, "bad training configuration: {msg}"),
        }
    }
}

impl std::error::Error for NetError {}

/// One dense layer: `out_dim x in_dim` weights plus a bias per output unit.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerParams {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// All layer parameters; the unit of transfer between source and target.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    layers: Vec<LayerParams>,
}

impl NetworkParams {
    /// Wraps a layer list, checking the dimension chain.
    pub fn from_layers(layers: Vec<LayerParams>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::BadConfig("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(NetError::DimensionMismatch {
                    expected: pair[0].out_dim(),
                    got: pair[1].in_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// He initialization: weights `Normal(0, 2/in_dim)`, biases zero, applied
    /// to every layer. Weight draws go row-major, layer by layer, so the
    /// state fully determines the parameters.
    pub fn he_init(dims: &[usize], state: &mut RandomState) -> Self {
        assert!(dims.len() >= 2, "architecture needs input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (in_dim, out_dim) = (pair[0], pair[1]);
            let sd = (2.0 / in_dim as f64).sqrt();
            let weight =
                Array2::from_shape_fn((out_dim, in_dim), |_| sd * state.next_standard_normal());
            layers.push(LayerParams {
                weight,
                bias: Array1::zeros(out_dim),
            });
        }
        Self { layers }
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim()
    }

    /// `[input, hidden..., output]` dimension list.
    pub fn architecture(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        dims.push(self.input_dim());
        dims.extend(self.layers.iter().map(LayerParams::out_dim));
        dims
    }

    /// Zero-filled parameters of the same shape (gradient/moment buffers).
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.out_dim(), l.in_dim()))
                .collect(),
        }
    }
}

/// Post-activation values from one forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    input: Vec<f64>,
    /// Hidden activations `h_1 .. h_{L-1}` (post-ReLU).
    hidden: Vec<Vec<f64>>,
    output: f64,
}

impl ForwardCache {
    pub fn output(&self) -> f64 {
        self.output
    }
}

/// Forward pass on one input: `h_k = relu(W_k h_{k-1} + b_k)` through the
/// hidden layers, then a linear output unit.
pub fn forward(params: &NetworkParams, x: &[f64]) -> Result<(f64, ForwardCache), NetError> {
    if x.len() != params.input_dim() {
        return Err(NetError::DimensionMismatch {
            expected: params.input_dim(),
            got: x.len(),
        });
    }
    let n_layers = params.layers.len();
    let mut hidden = Vec::with_capacity(n_layers - 1);
    let mut cur: Vec<f64> = x.to_vec();
    for (k, layer) in params.layers.iter().enumerate() {
        let mut next = vec![0.0; layer.out_dim()];
        for (o, out) in next.iter_mut().enumerate() {
            let row = layer.weight.row(o);
            let row = row.as_slice().expect("weights are row-major");
            let dot: f64 = row.iter().zip(cur.iter()).map(|(w, v)| w * v).sum();
            *out = dot + layer.bias[o];
        }
        if k + 1 < n_layers {
            for v in &mut next {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            hidden.push(next.clone());
        }
        cur = next;
    }
    debug_assert_eq!(cur.len(), 1, "study networks have a scalar output");
    let output = cur[0];
    Ok((
        output,
        ForwardCache {
            input: x.to_vec(),
            hidden,
            output,
        },
    ))
}

/// Exact gradient of `0.5 (y - target)^2` for every weight and bias, where
/// `residual = y - target`. The ReLU subgradient at zero is taken as zero
/// (an activation of exactly zero passes no gradient).
pub fn backward(params: &NetworkParams, cache: &ForwardCache, residual: f64) -> NetworkParams {
    let n_layers = params.layers.len();
    let mut grads = params.zeros_like();

    // delta starts at the scalar output and walks backwards
    let mut delta: Vec<f64> = vec![residual];
    for k in (0..n_layers).rev() {
        let inputs: &[f64] = if k == 0 { &cache.input } else { &cache.hidden[k - 1] };
        {
            let g = &mut grads.layers[k];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] = d;
                if d != 0.0 {
                    let mut row = g.weight.row_mut(o);
                    let row = row.as_slice_mut().expect("row-major");
                    for (w, &v) in row.iter_mut().zip(inputs.iter()) {
                        *w = d * v;
                    }
                }
            }
        }
        if k > 0 {
            let layer = &params.layers[k];
            let mut prev = vec![0.0; layer.in_dim()];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = layer.weight.row(o);
                    let row = row.as_slice().expect("row-major");
                    for (p, &w) in prev.iter_mut().zip(row.iter()) {
                        *p += d * w;
                    }
                }
            }
            // gate by the ReLU: h > 0 exactly when the pre-activation was > 0
            for (p, &h) in prev.iter_mut().zip(cache.hidden[k - 1].iter()) {
                if h <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    grads
}

/// Predictions for every row of a design matrix (no caches kept).
pub fn forward_batch(params: &NetworkParams, design: &Array2<f64>) -> Result<Vec<f64>, NetError> {
    if design.ncols() != params.input_dim() {
        return Err(NetError::DimensionMismatch {
            expected: params.input_dim(),
            got: design.ncols(),
        });
    }
    Ok(train::predict_all(params, &design.view()))
}
