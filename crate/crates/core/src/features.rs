//! Frozen random feature maps: stacks of randomly sampled affine layers with
//! a fixed nonlinearity, evaluated exactly and never trained.
//!
//! The map `R(x) = σ(W_L(…σ(W_1 x + b_1)…) + b_L)` serves as a randomized
//! basis. Weights are drawn once from a seeded per-layer RNG stream, so the
//! same `(seed, shape, distribution)` always reproduces the identical map.
//! For single-layer maps with a twice-differentiable activation the module
//! also applies a Hamiltonian `-(ħ²/2m)Δ + V` analytically, which only needs
//! `Δ R_i(x) = σ″(wᵢ·x + bᵢ) ‖wᵢ‖²`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};

/// Pointwise nonlinearity with analytic first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    /// Smooth bump `exp(-z²)`.
    Gaussian,
}

impl Activation {
    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Gaussian => (-z * z).exp(),
        }
    }

    pub fn first_derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gaussian => -2.0 * z * (-z * z).exp(),
        }
    }

    /// Second derivative. Meaningless for `Relu`, which the Schrödinger
    /// branch rejects before ever calling this (the returned 0 is the a.e.
    /// value).
    pub fn second_derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Relu => 0.0,
            Activation::Gaussian => (4.0 * z * z - 2.0) * (-z * z).exp(),
        }
    }

    pub fn is_twice_differentiable(self) -> bool {
        !matches!(self, Activation::Relu)
    }

    pub fn id(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Gaussian => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Gaussian),
            other => Err(CoreError::Format(format!("unknown activation id {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "gaussian" => Ok(Activation::Gaussian),
            other => Err(CoreError::Format(format!("unknown activation '{other}'"))),
        }
    }
}

/// Family of the weight distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistFamily {
    Normal,
    Uniform,
}

impl DistFamily {
    pub fn id(self) -> u8 {
        match self {
            DistFamily::Normal => 0,
            DistFamily::Uniform => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(DistFamily::Normal),
            1 => Ok(DistFamily::Uniform),
            other => Err(CoreError::Format(format!("unknown distribution id {other}"))),
        }
    }
}

impl std::str::FromStr for DistFamily {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(DistFamily::Normal),
            "uniform" => Ok(DistFamily::Uniform),
            other => Err(CoreError::Format(format!("unknown distribution '{other}'"))),
        }
    }
}

/// How hidden weights and biases are drawn.
///
/// Weights use spread `weight_scale / √fan_in` (standard deviation for
/// `Normal`, half-width for `Uniform`); biases are uniform on
/// `[-bias_scale, bias_scale]`. The fan-in scaling keeps pre-activations
/// O(1) so saturating activations stay responsive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSpec {
    pub family: DistFamily,
    pub weight_scale: f64,
    pub bias_scale: f64,
}

impl Default for DistributionSpec {
    fn default() -> Self {
        Self {
            family: DistFamily::Normal,
            weight_scale: 1.0,
            bias_scale: 1.0,
        }
    }
}

/// One frozen affine layer.
#[derive(Debug, Clone)]
pub struct RandomLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Base seed of the map this layer belongs to; the layer index selects
    /// the RNG stream.
    pub seed: u64,
    pub distribution: DistributionSpec,
}

impl RandomLayer {
    fn sample(
        n_out: usize,
        n_in: usize,
        dist: DistributionSpec,
        seed: u64,
        stream: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let spread = if n_in > 0 {
            dist.weight_scale / (n_in as f64).sqrt()
        } else {
            0.0
        };
        let weights = Array2::from_shape_fn((n_out, n_in), |_| match dist.family {
            DistFamily::Normal => {
                let z: f64 = rng.sample(StandardNormal);
                z * spread
            }
            DistFamily::Uniform => {
                if spread > 0.0 {
                    rng.random_range(-spread..spread)
                } else {
                    0.0
                }
            }
        });
        let bias = Array1::from_shape_fn(n_out, |_| {
            if dist.bias_scale > 0.0 {
                rng.random_range(-dist.bias_scale..dist.bias_scale)
            } else {
                0.0
            }
        });
        Self {
            weights,
            bias,
            seed,
            distribution: dist,
        }
    }

    /// `σ(W a + b)` column-wise.
    fn forward(&self, activation: Activation, input: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = self.weights.dot(input);
        for (mut col, _) in z.columns_mut().into_iter().zip(0..) {
            col += &self.bias;
        }
        z.mapv_inplace(|v| activation.value(v));
        z
    }
}

/// A frozen multi-layer random feature map.
#[derive(Debug, Clone)]
pub struct RandomFeatureMap {
    layers: Vec<RandomLayer>,
    activation: Activation,
    input_dim: usize,
    output_dim: usize,
    seed: u64,
}

/// Samples a random feature map with the given layer widths.
///
/// Each layer draws from its own RNG stream of the base seed, so maps with a
/// common prefix of widths share those layers' weights.
pub fn sample_rfm(
    input_dim: usize,
    layer_widths: &[usize],
    activation: Activation,
    distribution: DistributionSpec,
    seed: u64,
) -> Result<RandomFeatureMap> {
    if input_dim == 0 {
        return Err(CoreError::InvalidShape("input dimension must be >= 1".into()));
    }
    if layer_widths.is_empty() {
        return Err(CoreError::InvalidShape("at least one layer is required".into()));
    }
    if let Some(w) = layer_widths.iter().find(|w| **w == 0) {
        return Err(CoreError::InvalidShape(format!("layer width must be >= 1, got {w}")));
    }
    let mut layers = Vec::with_capacity(layer_widths.len());
    let mut fan_in = input_dim;
    for (idx, &width) in layer_widths.iter().enumerate() {
        layers.push(RandomLayer::sample(width, fan_in, distribution, seed, idx as u64));
        fan_in = width;
    }
    Ok(RandomFeatureMap {
        output_dim: *layer_widths.last().unwrap(),
        layers,
        activation,
        input_dim,
        seed,
    })
}

impl RandomFeatureMap {
    /// Builds a map from explicit layers; used by deserialization and tests
    /// that need hand-set weights.
    pub fn from_layers(
        layers: Vec<RandomLayer>,
        activation: Activation,
        input_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(CoreError::InvalidShape("at least one layer is required".into()));
        }
        let mut fan_in = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            let (n_out, n_in) = layer.weights.dim();
            if n_in != fan_in || layer.bias.len() != n_out {
                return Err(CoreError::InvalidShape(format!(
                    "layer {i} shape {n_out}x{n_in} does not chain with fan-in {fan_in}"
                )));
            }
            fan_in = n_out;
        }
        Ok(Self {
            output_dim: fan_in,
            layers,
            activation,
            input_dim,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Number of features produced by the last layer.
    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[RandomLayer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.weights.nrows()).collect()
    }

    pub fn distribution(&self) -> DistributionSpec {
        self.layers[0].distribution
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.nrows() != self.input_dim {
            return Err(CoreError::InvalidShape(format!(
                "expected {} input rows, got {}",
                self.input_dim,
                x.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidShape("input contains non-finite values".into()));
        }
        Ok(())
    }

    /// Evaluates the map on `m` points given as columns of a `d×m` matrix,
    /// returning the `N×m` feature matrix. The activation is applied after
    /// every layer, including the last.
    pub fn evaluate(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut current = self.layers[0].forward(self.activation, x);
        for layer in &self.layers[1..] {
            current = layer.forward(self.activation, &current.view());
        }
        Ok(current)
    }

    /// Applies the Hamiltonian `H = -(ħ²/2m)Δ + V` to every feature.
    ///
    /// Restricted to single-layer maps with a twice-differentiable
    /// activation; then `(HR)ᵢ(x) = -(ħ²/2m) σ″(wᵢ·x+bᵢ)‖wᵢ‖² + V(x) Rᵢ(x)`.
    pub fn evaluate_hamiltonian(
        &self,
        x: &ArrayView2<f64>,
        potential: &dyn Fn(ArrayView1<f64>) -> f64,
        hbar: f64,
        mass: f64,
    ) -> Result<Array2<f64>> {
        if !self.activation.is_twice_differentiable() {
            return Err(CoreError::UnsupportedActivation(format!(
                "{} has no second derivative; the Hamiltonian needs one",
                self.activation.name()
            )));
        }
        if self.layers.len() != 1 {
            return Err(CoreError::UnsupportedDepth(format!(
                "Hamiltonian evaluation supports single-layer maps, got {} layers",
                self.layers.len()
            )));
        }
        self.check_input(x)?;
        let layer = &self.layers[0];
        let m = x.ncols();
        let n = self.output_dim;
        let coeff = -hbar * hbar / (2.0 * mass);

        let row_norms2: Vec<f64> = (0..n)
            .map(|i| layer.weights.row(i).iter().map(|w| w * w).sum())
            .collect();
        let v_vals: Vec<f64> = (0..m).map(|j| potential(x.column(j))).collect();

        let mut z = layer.weights.dot(x);
        for (mut col, _) in z.columns_mut().into_iter().zip(0..) {
            col += &layer.bias;
        }
        let mut out = Array2::zeros((n, m));
        for i in 0..n {
            for j in 0..m {
                let zij = z[[i, j]];
                out[[i, j]] = coeff * self.activation.second_derivative(zij) * row_norms2[i]
                    + v_vals[j] * self.activation.value(zij);
            }
        }
        Ok(out)
    }
}
