//! The embedded deep linear network `f(x) = M^O W_D ⋯ W_1 M^I x`.
//!
//! Layers are indexed from 1 in the public API (`W_1` is the first trainable layer) and stored
//! 0-based internally. A network value is immutable; training produces new weight sets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EdlnError, Result};
use crate::linalg::{self, gaussian_matrix, Mat, Vector};

/// Which matrices make up the representation at layer `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenConvention {
    /// `W_i ⋯ W_1 M^I x`, the form the balance equations are stated in.
    #[default]
    WithoutOutputEmbedding,
    /// `M^O W_i ⋯ W_1 M^I x`; only defined when `rows(W_i) = columns(M^O)`.
    WithOutputEmbedding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdlnNetwork {
    m_in: Mat,
    m_out: Mat,
    weights: Vec<Mat>,
}

/// Rescaling-type symmetry `W_i → exp(λT) W_i`, `W_{i+1} → W_{i+1} exp(−λT)`.
#[derive(Clone, Debug)]
pub struct SymmetryGenerator {
    /// 1-based interface index, `1 ≤ i ≤ D − 1`.
    pub layer_index: usize,
    pub generator: Mat,
    pub scale: f64,
}

impl SymmetryGenerator {
    pub fn new(layer_index: usize, generator: Mat, scale: f64) -> Self {
        Self { layer_index, generator, scale }
    }

    /// Diagonal generator with a single unit entry `T_jj = 1`.
    pub fn rescaling(layer_index: usize, side: usize, j: usize, scale: f64) -> Self {
        let mut t = Mat::zeros(side, side);
        t[(j, j)] = 1.0;
        Self::new(layer_index, t, scale)
    }

    /// Symmetric off-diagonal generator `T_jk = T_kj = 1`.
    pub fn off_diagonal(layer_index: usize, side: usize, j: usize, k: usize, scale: f64) -> Self {
        let mut t = Mat::zeros(side, side);
        t[(j, k)] = 1.0;
        t[(k, j)] = 1.0;
        Self::new(layer_index, t, scale)
    }
}

impl EdlnNetwork {
    pub fn new(m_in: Mat, m_out: Mat, weights: Vec<Mat>) -> Result<Self> {
        if weights.is_empty() {
            return Err(EdlnError::InvalidConfig("network needs at least one trainable layer".into()));
        }
        if !linalg::is_invertible(&m_in) {
            return Err(EdlnError::NotInvertible("input embedding M^I".into()));
        }
        if !linalg::is_invertible(&m_out) {
            return Err(EdlnError::NotInvertible("output embedding M^O".into()));
        }
        if weights[0].ncols() != m_in.nrows() {
            return Err(EdlnError::shape("W_1 columns", m_in.nrows(), weights[0].ncols()));
        }
        for k in 1..weights.len() {
            if weights[k].ncols() != weights[k - 1].nrows() {
                return Err(EdlnError::shape(
                    format!("W_{} columns", k + 1),
                    weights[k - 1].nrows(),
                    weights[k].ncols(),
                ));
            }
        }
        let last = weights.last().unwrap();
        if m_out.ncols() != last.nrows() {
            return Err(EdlnError::shape("M^O columns", last.nrows(), m_out.ncols()));
        }
        Ok(Self { m_in, m_out, weights })
    }

    /// Gaussian initialization with entry scale `init_scale / √fan_in`.
    ///
    /// `layer_dims` is `d_0, …, d_D`; `d_0` must equal the side of `m_in` and `d_D` the side of `m_out`.
    pub fn random_init(
        layer_dims: &[usize],
        m_in: Mat,
        m_out: Mat,
        init_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(EdlnError::InvalidConfig("layer_dims needs d_0 and d_D".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = layer_dims
            .windows(2)
            .map(|w| gaussian_matrix(w[1], w[0], &mut rng) * (init_scale / (w[0] as f64).sqrt()))
            .collect();
        Self::new(m_in, m_out, weights)
    }

    pub fn with_weights(&self, weights: Vec<Mat>) -> Result<Self> {
        Self::new(self.m_in.clone(), self.m_out.clone(), weights)
    }

    /// Replace weights without re-running the invertibility checks on the embeddings.
    pub(crate) fn replace_weights(&self, weights: Vec<Mat>) -> Self {
        debug_assert_eq!(weights.len(), self.weights.len());
        Self { m_in: self.m_in.clone(), m_out: self.m_out.clone(), weights }
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn m_in(&self) -> &Mat {
        &self.m_in
    }

    pub fn m_out(&self) -> &Mat {
        &self.m_out
    }

    pub fn weights(&self) -> &[Mat] {
        &self.weights
    }

    /// `W_i` with 1-based `i`.
    pub fn layer(&self, i: usize) -> &Mat {
        &self.weights[i - 1]
    }

    /// `d_0, …, d_D`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.weights[0].ncols()];
        dims.extend(self.weights.iter().map(|w| w.nrows()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.m_in.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.m_out.nrows()
    }

    /// Smallest row dimension over all trainable layers.
    pub fn width(&self) -> usize {
        self.weights.iter().map(|w| w.nrows()).min().unwrap()
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    /// `W_D ⋯ W_1`.
    pub fn product(&self) -> Mat {
        let mut p = self.weights[0].clone();
        for w in &self.weights[1..] {
            p = w * p;
        }
        p
    }

    /// The end-to-end linear map `M^O W_D ⋯ W_1 M^I`.
    pub fn end_to_end(&self) -> Mat {
        &self.m_out * self.product() * &self.m_in
    }

    /// `pre[k] = W_k ⋯ W_1 M^I` (1-based product, `pre[0] = M^I`), for `k = 0..=D`.
    pub fn prefixes(&self) -> Vec<Mat> {
        let mut out = Vec::with_capacity(self.depth() + 1);
        out.push(self.m_in.clone());
        for w in &self.weights {
            let next = w * out.last().unwrap();
            out.push(next);
        }
        out
    }

    /// `suf[k] = M^O W_D ⋯ W_{k+1}` for `k = 0..=D` (`suf[D] = M^O`).
    pub fn suffixes(&self) -> Vec<Mat> {
        let d = self.depth();
        let mut out = vec![Mat::zeros(0, 0); d + 1];
        out[d] = self.m_out.clone();
        for k in (0..d).rev() {
            out[k] = &out[k + 1] * &self.weights[k];
        }
        out
    }

    fn check_input(&self, x: &Vector) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(EdlnError::shape("input vector (M^I columns)", self.input_dim(), x.len()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Vector) -> Result<Vector> {
        self.check_input(x)?;
        let mut h = &self.m_in * x;
        for w in &self.weights {
            h = w * h;
        }
        Ok(&self.m_out * h)
    }

    /// Representation after layer `i` (`0 ≤ i ≤ D`), excluding `M^O`.
    pub fn hidden(&self, x: &Vector, i: usize) -> Result<Vector> {
        self.hidden_with(x, i, HiddenConvention::WithoutOutputEmbedding)
    }

    pub fn hidden_with(&self, x: &Vector, i: usize, convention: HiddenConvention) -> Result<Vector> {
        self.check_input(x)?;
        if i > self.depth() {
            return Err(EdlnError::LayerOutOfRange { index: i, depth: self.depth() });
        }
        let mut h = &self.m_in * x;
        for w in &self.weights[..i] {
            h = w * h;
        }
        match convention {
            HiddenConvention::WithoutOutputEmbedding => Ok(h),
            HiddenConvention::WithOutputEmbedding => {
                if h.len() != self.m_out.ncols() {
                    return Err(EdlnError::shape(
                        format!("M^O applied after layer {i}"),
                        self.m_out.ncols(),
                        h.len(),
                    ));
                }
                Ok(&self.m_out * h)
            }
        }
    }

    /// Linear map from the network input to the representation after layer `i`.
    pub fn hidden_map(&self, i: usize, convention: HiddenConvention) -> Result<Mat> {
        if i > self.depth() {
            return Err(EdlnError::LayerOutOfRange { index: i, depth: self.depth() });
        }
        let mut h = self.m_in.clone();
        for w in &self.weights[..i] {
            h = w * h;
        }
        match convention {
            HiddenConvention::WithoutOutputEmbedding => Ok(h),
            HiddenConvention::WithOutputEmbedding => {
                if h.nrows() != self.m_out.ncols() {
                    return Err(EdlnError::shape(
                        format!("M^O applied after layer {i}"),
                        self.m_out.ncols(),
                        h.nrows(),
                    ));
                }
                Ok(&self.m_out * h)
            }
        }
    }

    pub fn per_sample_loss(&self, x: &Vector, y: &Vector) -> Result<f64> {
        let f = self.forward(x)?;
        if y.len() != f.len() {
            return Err(EdlnError::shape("label vector", f.len(), y.len()));
        }
        Ok((f - y).norm_squared())
    }

    /// Per-sample gradients `∇_{W_i} ℓ = 2 (suffix_i)ᵀ r (prefix_i x)ᵀ`, one matrix per layer.
    pub fn gradients(&self, x: &Vector, y: &Vector) -> Result<Vec<Mat>> {
        self.check_input(x)?;
        if y.len() != self.output_dim() {
            return Err(EdlnError::shape("label vector", self.output_dim(), y.len()));
        }
        let d = self.depth();
        // forward activations a[k] = pre[k] x
        let mut acts = Vec::with_capacity(d + 1);
        acts.push(&self.m_in * x);
        for w in &self.weights {
            let next = w * acts.last().unwrap();
            acts.push(next);
        }
        let r = &self.m_out * &acts[d] - y;
        let mut back = self.m_out.transpose() * r * 2.0;
        let mut grads = vec![Mat::zeros(0, 0); d];
        for k in (0..d).rev() {
            grads[k] = &back * acts[k].transpose();
            if k > 0 {
                back = self.weights[k].transpose() * back;
            }
        }
        Ok(grads)
    }

    pub fn apply_symmetry(&self, g: &SymmetryGenerator) -> Result<Self> {
        let i = g.layer_index;
        if i == 0 || i >= self.depth() {
            return Err(EdlnError::LayerOutOfRange { index: i, depth: self.depth() });
        }
        let side = self.weights[i - 1].nrows();
        if g.generator.nrows() != side || g.generator.ncols() != side {
            return Err(EdlnError::shape(
                format!("generator for interface {i}"),
                format!("{side}x{side}"),
                format!("{}x{}", g.generator.nrows(), g.generator.ncols()),
            ));
        }
        let fwd = linalg::matrix_exponential(&g.generator, g.scale);
        let bwd = linalg::matrix_exponential(&g.generator, -g.scale);
        let mut weights = self.weights.clone();
        weights[i - 1] = &fwd * &self.weights[i - 1];
        weights[i] = &self.weights[i] * &bwd;
        Ok(self.replace_weights(weights))
    }

    /// Replace `W_{i+1} ← W_{i+1} T`, `W_i ← T⁻¹ W_i` at 1-based interface `i`.
    pub fn apply_gauge(&self, i: usize, t: &Mat) -> Result<Self> {
        if i == 0 || i >= self.depth() {
            return Err(EdlnError::LayerOutOfRange { index: i, depth: self.depth() });
        }
        let side = self.weights[i - 1].nrows();
        if t.nrows() != side || t.ncols() != side {
            return Err(EdlnError::shape(format!("gauge at interface {i}"), side, t.nrows()));
        }
        let t_inv = linalg::inverse(t, "gauge transform T")?;
        let mut weights = self.weights.clone();
        weights[i - 1] = t_inv * &self.weights[i - 1];
        weights[i] = &self.weights[i] * t;
        Ok(self.replace_weights(weights))
    }

    /// Parameters flattened layer by layer (column-major within a layer).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for w in &self.weights {
            out.extend_from_slice(w.as_slice());
        }
        out
    }

    pub fn unflatten(&self, theta: &[f64]) -> Self {
        assert_eq!(theta.len(), self.num_parameters());
        let mut offset = 0;
        let weights = self
            .weights
            .iter()
            .map(|w| {
                let n = w.len();
                let m = Mat::from_column_slice(w.nrows(), w.ncols(), &theta[offset..offset + n]);
                offset += n;
                m
            })
            .collect();
        self.replace_weights(weights)
    }
}

/// Flatten a per-layer gradient list in the same order as [`EdlnNetwork::flatten`].
pub fn flatten_layers(layers: &[Mat]) -> Vec<f64> {
    let mut out = Vec::new();
    for w in layers {
        out.extend_from_slice(w.as_slice());
    }
    out
}
