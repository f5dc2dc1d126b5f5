//! Fully connected leaky-rectifier network with hand-written backprop.
//!
//! Parameter layout: for each layer `l`, `weights[l]` is an
//! `sizes[l+1] × sizes[l]` matrix stored row-major and `biases[l]` has
//! length `sizes[l+1]`. The flat parameter vector concatenates, layer by
//! layer, the weight matrix followed by its bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::Label;
use crate::error::{check_dim, Error, Result};

pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpModel {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
}

fn default_slope() -> f64 {
    LEAKY_SLOPE
}

/// Loss applied to the logit pair `(z_neg, z_pos)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Softmax cross-entropy.
    CrossEntropy,
    /// `z_y - z_{-y}`: positive iff correctly classified.
    Margin,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, the last entry the raw output.
    pub activations: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("non-empty cache")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    /// Flat, same layout as [`MlpModel::flat_params`].
    pub params: Vec<f64>,
    pub input: Vec<f64>,
    pub loss: f64,
}

fn leaky(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        slope * z
    }
}

fn leaky_grad(z: f64, slope: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        slope
    }
}

impl MlpModel {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::validate_sizes(sizes)?;
        let weights = sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = sizes.windows(2).map(|w| vec![0.0; w[1]]).collect();
        Ok(MlpModel { sizes: sizes.to_vec(), weights, biases, leaky_slope: LEAKY_SLOPE })
    }

    /// Uniform(-1/√fan_in, 1/√fan_in) initialization.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (l, &fan_in) in sizes[..model.weights.len()].iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for w in model.weights[l].iter_mut() {
                *w = rng.random_range(-bound..bound);
            }
            for b in model.biases[l].iter_mut() {
                *b = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    /// Single affine layer `w·x + b` with scalar output.
    pub fn linear(w: &[f64], b: f64) -> Self {
        MlpModel {
            sizes: vec![w.len(), 1],
            weights: vec![w.to_vec()],
            biases: vec![vec![b]],
            leaky_slope: LEAKY_SLOPE,
        }
    }

    fn validate_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidInput(format!("invalid layer sizes {sizes:?}")));
        }
        let out = *sizes.last().unwrap();
        if out != 1 && out != 2 {
            return Err(Error::InvalidInput(format!("output dimension must be 1 or 2, got {out}")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        Self::validate_sizes(&self.sizes)?;
        if self.weights.len() != self.sizes.len() - 1 || self.biases.len() != self.sizes.len() - 1 {
            return Err(Error::InvalidInput("layer count does not match sizes".into()));
        }
        for (l, w) in self.sizes.windows(2).enumerate() {
            check_dim(w[0] * w[1], self.weights[l].len())?;
            check_dim(w[1], self.biases[l].len())?;
        }
        if self.flat_params().iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        check_dim(self.num_params(), flat.len())?;
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&flat[k..k + nw]);
            k += nw;
            b.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        check_dim(self.input_dim(), x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> ForwardCache {
        let n_layers = self.weights.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        let mut pre_activations = Vec::with_capacity(n_layers);
        activations.push(x.to_vec());
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let a = &activations[l];
            let w = &self.weights[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>() + self.biases[l][o]
                })
                .collect();
            let out = if l + 1 == n_layers {
                z.clone()
            } else {
                z.iter().map(|&v| leaky(v, self.leaky_slope)).collect()
            };
            pre_activations.push(z);
            activations.push(out);
        }
        ForwardCache { activations, pre_activations }
    }

    /// Logit pair `(z_neg, z_pos)`. Scalar-output networks map `g` to `(-g, g)`.
    pub fn logits_from_output(out: &[f64]) -> [f64; 2] {
        if out.len() == 1 {
            [-out[0], out[0]]
        } else {
            [out[0], out[1]]
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<[f64; 2]> {
        Ok(Self::logits_from_output(self.forward(x)?.output()))
    }

    /// Scalar decision value: the output itself, or `z_pos - z_neg`.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        let c = self.forward(x)?;
        let out = c.output();
        Ok(if out.len() == 1 { out[0] } else { out[1] - out[0] })
    }

    /// Back-propagate `d loss / d logits` through the cached pass.
    pub fn backward(&self, cache: &ForwardCache, dlogits: [f64; 2]) -> (Vec<f64>, Vec<f64>) {
        let n_layers = self.weights.len();
        let mut delta: Vec<f64> = if self.output_dim() == 1 {
            vec![dlogits[1] - dlogits[0]]
        } else {
            dlogits.to_vec()
        };
        let mut layer_grads: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n_layers];
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let a_prev = &cache.activations[l];
            let mut gw = vec![0.0; n_in * n_out];
            for o in 0..n_out {
                for i in 0..n_in {
                    gw[o * n_in + i] = delta[o] * a_prev[i];
                }
            }
            let gb = delta.clone();
            let w = &self.weights[l];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    prev[i] += row[i] * delta[o];
                }
            }
            if l > 0 {
                for (p, z) in prev.iter_mut().zip(&cache.pre_activations[l - 1]) {
                    *p *= leaky_grad(*z, self.leaky_slope);
                }
            }
            layer_grads[l] = (gw, gb);
            delta = prev;
        }
        let mut flat = Vec::with_capacity(self.num_params());
        for (gw, gb) in layer_grads {
            flat.extend(gw);
            flat.extend(gb);
        }
        (flat, delta)
    }
}

/// Loss value and its gradient with respect to the logit pair.
pub fn loss_and_grad(logits: [f64; 2], y: Label, kind: LossKind) -> (f64, [f64; 2]) {
    let (iy, io) = match y {
        Label::Pos => (1, 0),
        Label::Neg => (0, 1),
    };
    match kind {
        LossKind::CrossEntropy => {
            // -log softmax_y, computed from the margin for stability
            let m = logits[io] - logits[iy];
            let loss = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
            let p_other = if m >= 0.0 { 1.0 / (1.0 + (-m).exp()) } else { m.exp() / (1.0 + m.exp()) };
            let mut g = [0.0; 2];
            g[io] = p_other;
            g[iy] = -p_other;
            (loss, g)
        }
        LossKind::Margin => {
            let mut g = [0.0; 2];
            g[iy] = 1.0;
            g[io] = -1.0;
            (logits[iy] - logits[io], g)
        }
    }
}

/// Loss plus exact gradients with respect to parameters and input.
pub fn mlp_backward(model: &MlpModel, x: &[f64], y: Label, kind: LossKind) -> Result<MlpGradients> {
    let cache = model.forward(x)?;
    let logits = MlpModel::logits_from_output(cache.output());
    let (loss, dlogits) = loss_and_grad(logits, y, kind);
    let (params, input) = model.backward(&cache, dlogits);
    Ok(MlpGradients { params, input, loss })
}

/// Convenience wrapper around [`MlpModel::forward`].
pub fn mlp_forward(model: &MlpModel, x: &[f64]) -> Result<ForwardCache> {
    model.forward(x)
}
