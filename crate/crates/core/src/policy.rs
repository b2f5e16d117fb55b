//! Gaussian decoding controller.
//!
//! Architecture: a trainable input projection with layer normalization,
//! a two-layer GELU trunk, and two heads (2-D action mean and scalar value)
//! plus two state-independent log standard deviations. Gradients are
//! computed by hand-written reverse accumulation over this fixed stack.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, StateVector};
use crate::sampling::{TEMPERATURE_RANGE, TOP_P_RANGE};

pub const ACTION_DIM: usize = 2;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

const CHECKPOINT_FORMAT: &str = "rldecode-policy";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub state_len: usize,
    pub input_dim: usize,
    pub hidden: usize,
}

impl PolicyDims {
    pub fn for_state_len(state_len: usize) -> Self {
        PolicyDims { state_len, input_dim: 64, hidden: 256 }
    }
}

/// All trainable tensors. The same shape doubles as a gradient buffer and
/// as Adam moment storage.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
    pub ln_gain: Array1<f64>,
    pub ln_bias: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub mean_w: Array2<f64>,
    pub mean_b: Array1<f64>,
    pub log_std: Array1<f64>,
    pub value_w: Array2<f64>,
    pub value_b: Array1<f64>,
}

/// Tensor names in declared (checkpoint) order.
pub const TENSOR_NAMES: [&str; 13] = [
    "proj_w", "proj_b", "ln_gain", "ln_bias", "w1", "b1", "w2", "b2", "mean_w", "mean_b", "log_std",
    "value_w", "value_b",
];

/// Output of the network for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    pub mean: [f64; ACTION_DIM],
    pub log_std: [f64; ACTION_DIM],
    pub value: f64,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    h0: Array2<f64>,
    z1: Array2<f64>,
    h1: Array2<f64>,
    z2: Array2<f64>,
    h2: Array2<f64>,
    pub means: Array2<f64>,
    pub values: Array1<f64>,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn uniform_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..bound))
}

fn xavier(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl PolicyParams {
    /// Xavier-uniform weights, zero biases, unit layer-norm gain. The mean
    /// head starts near zero so initial actions sit at the range midpoints.
    pub fn init<R: Rng + ?Sized>(dims: PolicyDims, init_log_std: f64, rng: &mut R) -> Self {
        let PolicyDims { state_len, input_dim, hidden } = dims;
        PolicyParams {
            proj_w: uniform_matrix(input_dim, state_len, xavier(state_len, input_dim), rng),
            proj_b: Array1::zeros(input_dim),
            ln_gain: Array1::ones(input_dim),
            ln_bias: Array1::zeros(input_dim),
            w1: uniform_matrix(hidden, input_dim, xavier(input_dim, hidden), rng),
            b1: Array1::zeros(hidden),
            w2: uniform_matrix(hidden, hidden, xavier(hidden, hidden), rng),
            b2: Array1::zeros(hidden),
            mean_w: uniform_matrix(ACTION_DIM, hidden, 0.01 * xavier(hidden, ACTION_DIM), rng),
            mean_b: Array1::zeros(ACTION_DIM),
            log_std: Array1::from_elem(ACTION_DIM, init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)),
            value_w: uniform_matrix(1, hidden, xavier(hidden, 1), rng),
            value_b: Array1::zeros(1),
        }
    }

    pub fn zeros(dims: PolicyDims) -> Self {
        let PolicyDims { state_len, input_dim, hidden } = dims;
        PolicyParams {
            proj_w: Array2::zeros((input_dim, state_len)),
            proj_b: Array1::zeros(input_dim),
            ln_gain: Array1::zeros(input_dim),
            ln_bias: Array1::zeros(input_dim),
            w1: Array2::zeros((hidden, input_dim)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, hidden)),
            b2: Array1::zeros(hidden),
            mean_w: Array2::zeros((ACTION_DIM, hidden)),
            mean_b: Array1::zeros(ACTION_DIM),
            log_std: Array1::zeros(ACTION_DIM),
            value_w: Array2::zeros((1, hidden)),
            value_b: Array1::zeros(1),
        }
    }

    pub fn dims(&self) -> PolicyDims {
        PolicyDims { state_len: self.proj_w.ncols(), input_dim: self.proj_w.nrows(), hidden: self.w1.nrows() }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims())
    }

    pub fn tensors(&self) -> [&[f64]; 13] {
        [
            self.proj_w.as_slice().unwrap(),
            self.proj_b.as_slice().unwrap(),
            self.ln_gain.as_slice().unwrap(),
            self.ln_bias.as_slice().unwrap(),
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
            self.mean_w.as_slice().unwrap(),
            self.mean_b.as_slice().unwrap(),
            self.log_std.as_slice().unwrap(),
            self.value_w.as_slice().unwrap(),
            self.value_b.as_slice().unwrap(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 13] {
        [
            self.proj_w.as_slice_mut().unwrap(),
            self.proj_b.as_slice_mut().unwrap(),
            self.ln_gain.as_slice_mut().unwrap(),
            self.ln_bias.as_slice_mut().unwrap(),
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
            self.mean_w.as_slice_mut().unwrap(),
            self.mean_b.as_slice_mut().unwrap(),
            self.log_std.as_slice_mut().unwrap(),
            self.value_w.as_slice_mut().unwrap(),
            self.value_b.as_slice_mut().unwrap(),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Copies all parameters into one vector in declared order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn clamp_log_std(&mut self) {
        self.log_std.mapv_inplace(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }

    pub fn log_std_pair(&self) -> [f64; ACTION_DIM] {
        [self.log_std[0], self.log_std[1]]
    }

    /// Batched forward pass over the rows of `states`.
    pub fn forward_batch(&self, states: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        if states.ncols() != self.proj_w.ncols() {
            return Err(Error::Config(format!(
                "state length {} does not match policy input {}",
                states.ncols(),
                self.proj_w.ncols()
            )));
        }
        let input = states.to_owned();
        let a0 = input.dot(&self.proj_w.t()) + &self.proj_b;

        let d = a0.ncols() as f64;
        let mu = a0.sum_axis(Axis(1)) / d;
        let centered = &a0 - &mu.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
        let inv_std = var.mapv(|v| 1.0 / (v + LAYER_NORM_EPS).sqrt());
        let xhat = centered * &inv_std.view().insert_axis(Axis(1));
        let h0 = &xhat * &self.ln_gain + &self.ln_bias;

        let z1 = h0.dot(&self.w1.t()) + &self.b1;
        let h1 = z1.mapv(gelu);
        let z2 = h1.dot(&self.w2.t()) + &self.b2;
        let h2 = z2.mapv(gelu);

        let means = h2.dot(&self.mean_w.t()) + &self.mean_b;
        let values = (h2.dot(&self.value_w.t()) + &self.value_b).column(0).to_owned();
        Ok(ForwardCache { input, xhat, inv_std, h0, z1, h1, z2, h2, means, values })
    }

    /// Reverse pass. `d_means` (B x 2) and `d_values` (B) are loss gradients
    /// w.r.t. the head outputs; `d_log_std` is the direct gradient on the
    /// free log-std parameters.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_means: &Array2<f64>,
        d_values: &Array1<f64>,
        d_log_std: [f64; ACTION_DIM],
    ) -> PolicyParams {
        let d_values_col = d_values.view().insert_axis(Axis(1));

        let mean_w = d_means.t().dot(&cache.h2);
        let mean_b = d_means.sum_axis(Axis(0));
        let value_w = d_values_col.t().dot(&cache.h2);
        let value_b = d_values_col.sum_axis(Axis(0));

        let dh2 = d_means.dot(&self.mean_w) + d_values_col.dot(&self.value_w);
        let dz2 = dh2 * &cache.z2.mapv(gelu_grad);
        let w2 = dz2.t().dot(&cache.h1);
        let b2 = dz2.sum_axis(Axis(0));

        let dh1 = dz2.dot(&self.w2);
        let dz1 = dh1 * &cache.z1.mapv(gelu_grad);
        let w1 = dz1.t().dot(&cache.h0);
        let b1 = dz1.sum_axis(Axis(0));

        let dh0 = dz1.dot(&self.w1);
        let ln_gain = (&dh0 * &cache.xhat).sum_axis(Axis(0));
        let ln_bias = dh0.sum_axis(Axis(0));

        let dxhat = dh0 * &self.ln_gain;
        let d = dxhat.ncols() as f64;
        let mean_dx = dxhat.sum_axis(Axis(1)) / d;
        let mean_dx_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
        let da0 = (dxhat - &mean_dx.view().insert_axis(Axis(1))
            - &cache.xhat * &mean_dx_xhat.view().insert_axis(Axis(1)))
            * &cache.inv_std.view().insert_axis(Axis(1));
        let proj_w = da0.t().dot(&cache.input);
        let proj_b = da0.sum_axis(Axis(0));

        PolicyParams {
            proj_w,
            proj_b,
            ln_gain,
            ln_bias,
            w1,
            b1,
            w2,
            b2,
            mean_w,
            mean_b,
            log_std: Array1::from_vec(d_log_std.to_vec()),
            value_w,
            value_b,
        }
    }

    pub fn forward(&self, state: &StateVector) -> Result<PolicyOutput> {
        let row = ArrayView2::from_shape((1, state.len()), state.as_slice())
            .map_err(|e| Error::Input(e.to_string()))?;
        let cache = self.forward_batch(row)?;
        Ok(PolicyOutput {
            mean: [cache.means[[0, 0]], cache.means[[0, 1]]],
            log_std: self.log_std_pair(),
            value: cache.values[0],
        })
    }

    /// Gaussian log-density of a pre-squash action under this policy.
    pub fn log_prob_of(&self, state: &StateVector, raw: [f64; ACTION_DIM]) -> Result<f64> {
        let out = self.forward(state)?;
        Ok(gaussian_log_prob(out.mean, out.log_std, raw))
    }
}

/// Diagonal Gaussian log-density.
pub fn gaussian_log_prob(mean: [f64; ACTION_DIM], log_std: [f64; ACTION_DIM], raw: [f64; ACTION_DIM]) -> f64 {
    (0..ACTION_DIM)
        .map(|i| {
            let z = (raw[i] - mean[i]) / log_std[i].exp();
            -0.5 * (2.0 * PI).ln() - log_std[i] - 0.5 * z * z
        })
        .sum()
}

/// Entropy of a diagonal Gaussian with the given log standard deviations.
pub fn gaussian_entropy(log_std: [f64; ACTION_DIM]) -> f64 {
    log_std.iter().map(|ls| 0.5 + 0.5 * (2.0 * PI).ln() + ls).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Decoding knobs derived from a Gaussian sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionParams {
    /// Pre-squash sample; the PPO ratio is evaluated on this.
    pub raw: [f64; ACTION_DIM],
    pub temperature: f64,
    pub top_p: f64,
    pub log_prob: f64,
}

impl ActionParams {
    /// Squashes `raw` through a sigmoid into the temperature and top-p ranges.
    pub fn from_raw(raw: [f64; ACTION_DIM], log_prob: f64) -> Self {
        let (tlo, thi) = TEMPERATURE_RANGE;
        let (plo, phi) = TOP_P_RANGE;
        ActionParams {
            raw,
            temperature: tlo + sigmoid(raw[0]) * (thi - tlo),
            top_p: plo + sigmoid(raw[1]) * (phi - plo),
            log_prob,
        }
    }
}

/// Two standard normals from two uniforms (Box–Muller, cosine then sine).
pub fn box_muller<R: Rng + ?Sized>(rng: &mut R) -> [f64; 2] {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * PI * u2;
    [r * theta.cos(), r * theta.sin()]
}

pub fn sample_action<R: Rng + ?Sized>(
    mean: [f64; ACTION_DIM],
    log_std: [f64; ACTION_DIM],
    rng: &mut R,
) -> ActionParams {
    let z = box_muller(rng);
    let raw = [mean[0] + log_std[0].exp() * z[0], mean[1] + log_std[1].exp() * z[1]];
    let log_prob = (0..ACTION_DIM).map(|i| -0.5 * (2.0 * PI).ln() - log_std[i] - 0.5 * z[i] * z[i]).sum();
    ActionParams::from_raw(raw, log_prob)
}

/// Noise-free action at the Gaussian mode.
pub fn mean_action(mean: [f64; ACTION_DIM], log_std: [f64; ACTION_DIM]) -> ActionParams {
    ActionParams::from_raw(mean, gaussian_log_prob(mean, log_std, mean))
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    dims: PolicyDims,
    features: FeatureConfig,
    tensors: Vec<TensorRecord>,
}

/// A policy together with the featurization it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub features: FeatureConfig,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let p = &self.params;
        let shapes: [Vec<usize>; 13] = [
            p.proj_w.shape().to_vec(),
            p.proj_b.shape().to_vec(),
            p.ln_gain.shape().to_vec(),
            p.ln_bias.shape().to_vec(),
            p.w1.shape().to_vec(),
            p.b1.shape().to_vec(),
            p.w2.shape().to_vec(),
            p.b2.shape().to_vec(),
            p.mean_w.shape().to_vec(),
            p.mean_b.shape().to_vec(),
            p.log_std.shape().to_vec(),
            p.value_w.shape().to_vec(),
            p.value_b.shape().to_vec(),
        ];
        let tensors = TENSOR_NAMES
            .iter()
            .zip(shapes)
            .zip(p.tensors())
            .map(|((name, shape), data)| TensorRecord { name: name.to_string(), shape, data: data.to_vec() })
            .collect();
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: p.dims(),
            features: self.features,
            tensors,
        };
        serde_json::to_string_pretty(&file).expect("checkpoint serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(json).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint {} v{}", file.format, file.version)));
        }
        if file.features.state_len() != file.dims.state_len {
            return Err(Error::Checkpoint("feature config does not match policy input width".into()));
        }
        let mut params = PolicyParams::zeros(file.dims);
        if file.tensors.len() != TENSOR_NAMES.len() {
            return Err(Error::Checkpoint("wrong number of tensors".into()));
        }
        for ((slot, record), name) in params.tensors_mut().into_iter().zip(&file.tensors).zip(TENSOR_NAMES) {
            if record.name != name {
                return Err(Error::Checkpoint(format!("expected tensor {name}, found {}", record.name)));
            }
            let declared: usize = record.shape.iter().product();
            if record.data.len() != slot.len() || declared != slot.len() {
                return Err(Error::Checkpoint(format!("tensor {name} has wrong size")));
            }
            slot.copy_from_slice(&record.data);
        }
        Ok(Checkpoint { params, features: file.features })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
