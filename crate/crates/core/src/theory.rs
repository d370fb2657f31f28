//! Closed-form constructions for EDLN minimizers and the diagnostics that certify them.
//!
//! Whitened coordinates for a network trained on one view with population moments
//! `(Σ_u, V, Σ_e)`: for hidden layer `k` let `P_k = W_k ⋯ W_1 M^I Σ_u^{1/2}` and
//! `Q_{k+1} = Σ_e^{1/2} M^O W_D ⋯ W_{k+1}`. On the loss constraint `Q_{k+1} P_k = V̄` where
//! `V̄ = Σ_e^{1/2} V Σ_u^{1/2}`, and the entropy there is
//!
//! ```text
//! S = 4 Σ_{k=1}^{D} ‖Q_{k+1}‖² ‖P_{k−1}‖²,   ‖P_0‖² = Tr(M^I Σ_u M^Iᵀ),  ‖Q_{D+1}‖² = Tr(M^Oᵀ Σ_e M^O).
//! ```
//!
//! The minimizer has `P_k = α_k U_k √σ E_rᵀ` for every hidden layer, where `V̄ = E_l diag(σ) E_rᵀ`
//! and `U_k` is an orthonormal frame. With `s = Σσ`, `x_k = α_k²` and `x_0`/`x_D` standing for the
//! two boundary traces, the `D` terms of `S` must all be equal, which fixes
//!
//! ```text
//! t = (‖P_0‖² ‖Q_{D+1}‖²)^{1/D} s^{2(D−1)/D},  x_1 = ‖P_0‖² s / t,  x_k = x_{k−1} s² / t.
//! ```
//!
//! Interior layers are then scaled partial isometries `(α_k/α_{k−1}) U_k U_{k−1}ᵀ`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataModel, ViewMoments};
use crate::error::{EdlnError, Result};
use crate::io::{fmt_f64, rows, rows_vec};
use crate::linalg::{self, Mat};
use crate::network::{EdlnNetwork, SymmetryGenerator};
use crate::objective::Objective;

/// Frozen parts of a network: layer dimensions and the two embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub layer_dims: Vec<usize>,
    pub m_in: Mat,
    pub m_out: Mat,
}

impl Architecture {
    pub fn new(layer_dims: Vec<usize>, m_in: Mat, m_out: Mat) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(EdlnError::InvalidConfig("layer_dims needs at least d_0 and d_D".into()));
        }
        if m_in.nrows() != layer_dims[0] || !linalg::is_invertible(&m_in) {
            return Err(EdlnError::NotInvertible("input embedding M^I".into()));
        }
        if m_out.ncols() != *layer_dims.last().unwrap() || !linalg::is_invertible(&m_out) {
            return Err(EdlnError::NotInvertible("output embedding M^O".into()));
        }
        Ok(Self { layer_dims, m_in, m_out })
    }

    /// Identity embeddings; `d_0 = input_dim`, `d_D = output_dim`, hidden widths as given.
    pub fn identity(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        Self { layer_dims: dims, m_in: Mat::identity(input_dim, input_dim), m_out: Mat::identity(output_dim, output_dim) }
    }

    /// Random embeddings with the given condition number.
    pub fn random(input_dim: usize, hidden: &[usize], output_dim: usize, cond: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut arch = Self::identity(input_dim, hidden, output_dim);
        arch.m_in = linalg::random_invertible(input_dim, cond, &mut rng);
        arch.m_out = linalg::random_invertible(output_dim, cond, &mut rng);
        arch
    }

    pub fn of(net: &EdlnNetwork) -> Self {
        Self { layer_dims: net.layer_dims(), m_in: net.m_in().clone(), m_out: net.m_out().clone() }
    }

    pub fn depth(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// Smallest row dimension over all trainable layers.
    pub fn width(&self) -> usize {
        self.layer_dims[1..].iter().cloned().min().unwrap()
    }

    pub fn init(&self, init_scale: f64, seed: u64) -> Result<EdlnNetwork> {
        EdlnNetwork::random_init(&self.layer_dims, self.m_in.clone(), self.m_out.clone(), init_scale, seed)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SvdFactors {
    /// `E_l`, output_dim × r.
    #[serde(with = "rows")]
    pub left: Mat,
    pub singular_values: Vec<f64>,
    /// `E_r`, input_dim × r (so `V̄ = E_l diag(σ) E_rᵀ`).
    #[serde(with = "rows")]
    pub right: Mat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClosedFormSolution {
    pub tag: String,
    /// `V̄ = Σ_e^{1/2} V Σ_u^{1/2}` in the view's coordinates.
    #[serde(with = "rows")]
    pub v_bar: Mat,
    pub svd: SvdFactors,
    /// Number of singular directions kept (the rank of `V̄`, or the truncation rank).
    pub rank: usize,
    /// One orthogonal gauge per hidden layer `k = 1..D−1`.
    #[serde(with = "rows_vec")]
    pub rotations: Vec<Mat>,
    /// `α_k` per hidden layer.
    pub scales: Vec<f64>,
    /// Whitened pair `(W̄_1, W̄_2) = (P_1, Q_2)` at the first interface.
    #[serde(with = "rows_vec")]
    pub w_bar: Vec<Mat>,
    /// `a_h = 1/E‖h_{i−1}‖²` and `a_g = 1/E‖∇_{h_{i+1}} ℓ‖²` (noise-gradient form) per interface.
    pub a_h: Vec<f64>,
    pub a_g: Vec<f64>,
    pub network: EdlnNetwork,
    /// Entropy predicted by the construction, `4 D t`.
    pub predicted_entropy: f64,
}

impl ClosedFormSolution {
    pub fn weights(&self) -> &[Mat] {
        self.network.weights()
    }
}

/// `(M^O)⁻¹ Φ V* (M^I)⁻¹ Z⁻¹` (the view's effective target pulled back through the embeddings).
pub fn global_min_target(dm: &DataModel, tag: &str, arch: &Architecture) -> Result<Mat> {
    let m = dm.population_moments(tag)?;
    target_product(&m, arch)
}

fn target_product(m: &ViewMoments, arch: &Architecture) -> Result<Mat> {
    let mo_inv = linalg::inverse(&arch.m_out, "output embedding M^O")?;
    let mi_inv = linalg::inverse(&arch.m_in, "input embedding M^I")?;
    Ok(mo_inv * &m.target * mi_inv)
}

/// Closed-form entropic minimizer on the loss constraint (Platonic solution).
///
/// `rotation_seed = None` uses identity gauges; otherwise each hidden layer gets a Haar-random one.
pub fn closed_form_platonic(
    dm: &DataModel,
    tag: &str,
    arch: &Architecture,
    rotation_seed: Option<u64>,
) -> Result<ClosedFormSolution> {
    let m = dm.population_moments(tag)?;
    let rank = linalg::numerical_rank(&m.target, 1e-10);
    if arch.width() < rank {
        return Err(EdlnError::InsufficientWidth { width: arch.width(), rank });
    }
    construct(dm, tag, &m, arch, rotation_seed, None)
}

/// Closed-form construction on the rank-`r` truncation of `V̄` (a saddle of the loss for `r < rank`).
pub fn low_rank_saddle(
    dm: &DataModel,
    tag: &str,
    arch: &Architecture,
    r: usize,
    rotation_seed: Option<u64>,
) -> Result<ClosedFormSolution> {
    let m = dm.population_moments(tag)?;
    let rank = linalg::numerical_rank(&m.target, 1e-10);
    if r > rank {
        return Err(EdlnError::InvalidConfig(format!("truncation rank {r} exceeds rank(V*) = {rank}")));
    }
    construct(dm, tag, &m, arch, rotation_seed, Some(r))
}

fn construct(
    dm: &DataModel,
    tag: &str,
    m: &ViewMoments,
    arch: &Architecture,
    rotation_seed: Option<u64>,
    truncate: Option<usize>,
) -> Result<ClosedFormSolution> {
    let depth = arch.depth();
    if depth < 2 {
        return Err(EdlnError::InvalidConfig("closed-form construction needs depth >= 2".into()));
    }
    if arch.m_in.ncols() != m.input_dim() || arch.m_out.nrows() != m.output_dim() {
        return Err(EdlnError::shape("architecture vs data view", format!("{}→{}", m.input_dim(), m.output_dim()), format!("{}→{}", arch.m_in.ncols(), arch.m_out.nrows())));
    }
    let sqrt_u = linalg::sym_sqrt(&m.sigma_u);
    let inv_sqrt_u = linalg::sym_inv_sqrt(&m.sigma_u)?;
    let sqrt_e = linalg::sym_sqrt(&m.sigma_e);
    let inv_sqrt_e = linalg::sym_inv_sqrt(&m.sigma_e)?;
    let v_bar = &sqrt_e * &m.target * &sqrt_u;

    let full = linalg::sorted_svd(&v_bar);
    let natural_rank = full.s.iter().filter(|&&s| s > 1e-10 * full.s[0].max(1e-300)).count();
    let r = truncate.unwrap_or(natural_rank).min(natural_rank);
    let mut left = full.u.columns(0, r).into_owned();
    let mut right = full.v.columns(0, r).into_owned();
    let sv: Vec<f64> = full.s[..r].to_vec();

    // Fix the sign of each singular pair by the right vector expressed in base-input coordinates,
    // so constructions from different views agree exactly rather than up to sign flips.
    let view = dm.view(tag)?;
    let sqrt_x = linalg::sym_sqrt(&dm.sigma_x);
    let to_base = &sqrt_x * view.z.transpose() * &inv_sqrt_u;
    for j in 0..r {
        let b = &to_base * right.column(j);
        let lead = b.iter().cloned().fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if lead < 0.0 {
            left.column_mut(j).neg_mut();
            right.column_mut(j).neg_mut();
        }
    }

    let hidden_dims = &arch.layer_dims[1..depth];
    let mut rng = rotation_seed.map(ChaCha8Rng::seed_from_u64);
    let rotations: Vec<Mat> = hidden_dims
        .iter()
        .map(|&d| match rng.as_mut() {
            Some(r) => linalg::random_orthogonal(d, r),
            None => Mat::identity(d, d),
        })
        .collect();
    let frames: Vec<Mat> = rotations.iter().map(|q| linalg::leading_columns(q, r)).collect();

    let h0 = (&arch.m_in * &m.sigma_u * arch.m_in.transpose()).trace();
    let g0 = (arch.m_out.transpose() * &m.sigma_e * &arch.m_out).trace();
    let s: f64 = sv.iter().sum();
    let d = depth as f64;
    let (scales, t) = if s > 0.0 {
        let t = (h0 * g0).powf(1.0 / d) * s.powf(2.0 * (d - 1.0) / d);
        let mut x = Vec::with_capacity(depth - 1);
        x.push(h0 * s / t);
        for k in 1..depth - 1 {
            x.push(x[k - 1] * s * s / t);
        }
        (x.iter().map(|v| v.sqrt()).collect::<Vec<f64>>(), t)
    } else {
        (vec![0.0; depth - 1], 0.0)
    };

    let sqrt_sv = Mat::from_diagonal(&linalg::Vector::from_vec(sv.iter().map(|v| v.sqrt()).collect()));
    let mi_inv = linalg::inverse(&arch.m_in, "input embedding M^I")?;
    let mo_inv = linalg::inverse(&arch.m_out, "output embedding M^O")?;
    let spectrum_right = &sqrt_sv * right.transpose();
    let spectrum_left = &left * &sqrt_sv;

    let mut weights = Vec::with_capacity(depth);
    let p1 = &frames[0] * &spectrum_right * scales[0];
    weights.push(&p1 * &inv_sqrt_u * &mi_inv);
    for k in 1..depth - 1 {
        let ratio = if scales[k - 1] > 0.0 { scales[k] / scales[k - 1] } else { 0.0 };
        weights.push(&frames[k] * frames[k - 1].transpose() * ratio);
    }
    let last_scale = scales[depth - 2];
    let inv_last = if last_scale > 0.0 { 1.0 / last_scale } else { 0.0 };
    weights.push(&mo_inv * &inv_sqrt_e * &spectrum_left * frames[depth - 2].transpose() * inv_last);

    let network = EdlnNetwork::new(arch.m_in.clone(), arch.m_out.clone(), weights)?;

    // boundary traces on the whitened chain, used for the a_h/a_g normalizers
    let mut p_norm = vec![h0];
    p_norm.extend(scales.iter().map(|a| a * a * s));
    let mut q_norm: Vec<f64> = scales.iter().map(|a| if *a > 0.0 { s / (a * a) } else { 0.0 }).collect();
    q_norm.push(g0);
    let a_h: Vec<f64> = (0..depth - 1).map(|k| 1.0 / p_norm[k]).collect();
    let a_g: Vec<f64> = (0..depth - 1).map(|k| 1.0 / q_norm[k + 1]).collect();

    let suf = network.suffixes();
    let w_bar = vec![p1, &sqrt_e * &suf[1]];

    Ok(ClosedFormSolution {
        tag: tag.to_string(),
        v_bar,
        svd: SvdFactors { left, singular_values: sv, right },
        rank: r,
        rotations,
        scales,
        w_bar,
        a_h,
        a_g,
        network,
        predicted_entropy: 4.0 * d * t,
    })
}

/// Map from base inputs `x` to the hidden representation `h_k(Z x)`, computed in whitened form as
/// `W̄_k (√Σ_x)^+ x` with `W̄_k = W_k ⋯ W_1 M^I Z √Σ_x`.
pub fn whitened_representation_map(net: &EdlnNetwork, dm: &DataModel, tag: &str, layer: usize) -> Result<Mat> {
    let view = dm.view(tag)?;
    let sqrt_x = linalg::sym_sqrt(&dm.sigma_x);
    let w_bar = net.hidden_map(layer, Default::default())? * &view.z * &sqrt_x;
    Ok(w_bar * linalg::pinv(&sqrt_x, linalg::PINV_CUTOFF))
}

/// Residuals of the balance conditions at one interface `i` (between `W_i` and `W_{i+1}`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterfaceBalance {
    pub interface: usize,
    /// `E[∇_{W_i}∇_{W_i}ᵀ]` vs `E[∇_{W_{i+1}}ᵀ∇_{W_{i+1}}]`.
    pub gradient_balance: f64,
    /// `a_h W_i M̄^I Σ M̄^Iᵀ W_iᵀ` vs `a_g W_{i+1}ᵀ M̄^Oᵀ Σ_ε M̄^O W_{i+1}`.
    pub layer_condition: f64,
    /// Row-norm vs column-norm gradient energies (diagonals of the gradient-balance matrices).
    pub rowcol: f64,
}

impl InterfaceBalance {
    pub fn max(&self) -> f64 {
        self.gradient_balance.max(self.layer_condition).max(self.rowcol)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BalanceReport {
    pub interfaces: Vec<InterfaceBalance>,
    /// `L − Tr Σ_ε^view`, relative to the noise floor.
    pub relative_loss_gap: f64,
    /// The layer condition assumes `f − y = ε`; this flags whether that holds (gap < 1e-6).
    pub at_constraint: bool,
}

impl BalanceReport {
    pub fn max_residual(&self) -> f64 {
        self.interfaces.iter().map(|b| b.max()).fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["interface", "gradient_balance", "layer_condition", "rowcol", "at_constraint"])?;
        for b in &self.interfaces {
            w.write_record([
                b.interface.to_string(),
                fmt_f64(b.gradient_balance),
                fmt_f64(b.layer_condition),
                fmt_f64(b.rowcol),
                self.at_constraint.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Balance diagnostics for every interface `i = 1..D−1`.
pub fn balance_report(net: &EdlnNetwork, obj: &Objective) -> Result<BalanceReport> {
    let moments = obj.gradient_moments(net)?;
    let pre = net.prefixes();
    let suf = net.suffixes();
    let (sigma_in, sigma_res, floor) = match obj {
        Objective::Analytic(m) => (m.sigma_u.clone(), m.sigma_e.clone(), m.sigma_e.trace()),
        Objective::Empirical { inputs, labels } => {
            let n = inputs.ncols() as f64;
            let r = net.end_to_end() * inputs - labels;
            let res = &r * r.transpose() / n;
            let tr = res.trace();
            (inputs * inputs.transpose() / n, res, tr)
        }
    };
    let loss = obj.loss(net)?;
    let gap = (loss - floor) / floor.abs().max(1e-300);
    let mut interfaces = Vec::new();
    for k in 0..net.depth().saturating_sub(1) {
        let lhs = &moments[k].row;
        let rhs = &moments[k + 1].col;
        let gradient_balance = linalg::normalized_residual(lhs, rhs);
        let rowcol = linalg::normalized_residual(
            &Mat::from_diagonal(&lhs.diagonal()),
            &Mat::from_diagonal(&rhs.diagonal()),
        );
        let a_h = 1.0 / (&pre[k] * &sigma_in * pre[k].transpose()).trace();
        let a_g = 1.0 / (suf[k + 2].transpose() * &sigma_res * &suf[k + 2]).trace();
        let h_side = (&pre[k + 1] * &sigma_in * pre[k + 1].transpose()) * a_h;
        let g_side = (suf[k + 1].transpose() * &sigma_res * &suf[k + 1]) * a_g;
        interfaces.push(InterfaceBalance {
            interface: k + 1,
            gradient_balance,
            layer_condition: linalg::normalized_residual(&h_side, &g_side),
            rowcol,
        });
    }
    Ok(BalanceReport { interfaces, relative_loss_gap: gap, at_constraint: gap.abs() < 1e-6 })
}

/// `Q_i = W_{i+1}ᵀ W_{i+1} − W_i W_iᵀ` for every interface.
pub fn conserved_quantities(net: &EdlnNetwork) -> Vec<Mat> {
    let w = net.weights();
    (0..w.len().saturating_sub(1))
        .map(|k| w[k + 1].transpose() * &w[k + 1] - &w[k] * w[k].transpose())
        .collect()
}

/// Draw a generic invertible `T` with `‖T − I‖_F = magnitude`.
pub fn random_gauge(side: usize, magnitude: f64, seed: u64) -> Result<Mat> {
    if !(magnitude > 0.0) {
        return Err(EdlnError::InvalidConfig("gauge magnitude must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const ATTEMPTS: usize = 10;
    for _ in 0..ATTEMPTS {
        let e = linalg::gaussian_matrix(side, side, &mut rng);
        let t = Mat::identity(side, side) + &e * (magnitude / e.norm());
        if linalg::is_invertible(&t) && linalg::condition_number(&t) < 1e6 {
            return Ok(t);
        }
    }
    Err(EdlnError::Resample(ATTEMPTS))
}

/// Move along the `GL` symmetry: `W_{i+1} ← W_{i+1} T`, `W_i ← T⁻¹ W_i` with a random generic `T`.
pub fn non_platonic_transform(net: &EdlnNetwork, i: usize, seed: u64, magnitude: f64) -> Result<EdlnNetwork> {
    if i == 0 || i >= net.depth() {
        return Err(EdlnError::LayerOutOfRange { index: i, depth: net.depth() });
    }
    let t = random_gauge(net.layer(i).nrows(), magnitude, seed)?;
    net.apply_gauge(i, &t)
}

fn commuting_psd_inputs(dm: &DataModel, tag: &str) -> Result<(Mat, Mat)> {
    let view = dm.view(tag)?;
    let id_out = Mat::identity(dm.output_dim, dm.output_dim);
    if dm.input_dim != dm.output_dim {
        return Err(EdlnError::Unsupported("weight-decay closed form needs a square V*".into()));
    }
    if view.heterogeneity.is_some() || linalg::rel_err(&view.phi, &id_out) > 1e-12 {
        return Err(EdlnError::Unsupported("weight-decay closed form needs Φ = I and no feature noise".into()));
    }
    let (v, z) = (&dm.v_star, &view.z);
    let scale = v.norm() * z.norm();
    if (v * z - z * v).norm() > 1e-9 * scale {
        return Err(EdlnError::Unsupported("V* and Z do not commute".into()));
    }
    for (name, m) in [("V*", v), ("Z", z)] {
        if linalg::rel_err(m, &m.transpose()) > 1e-10 {
            return Err(EdlnError::Unsupported(format!("{name} is not symmetric")));
        }
        if linalg::min_sym_eigenvalue(m) < -1e-10 * m.norm() {
            return Err(EdlnError::Unsupported(format!("{name} is not positive semidefinite")));
        }
    }
    if linalg::min_sym_eigenvalue(z) <= 0.0 {
        return Err(EdlnError::Unsupported("Z must be positive definite".into()));
    }
    Ok((v.clone(), z.clone()))
}

/// Minimum-norm solution on the loss constraint with identity embeddings: `D` copies of
/// `(V* Z⁻¹)^{1/D}`. Requires `V*` and `Z` symmetric PSD and commuting.
pub fn weight_decay_closed_form(dm: &DataModel, tag: &str, depth: usize) -> Result<Vec<Mat>> {
    if depth == 0 {
        return Err(EdlnError::InvalidConfig("depth must be >= 1".into()));
    }
    let (v, z) = commuting_psd_inputs(dm, tag)?;
    let target = linalg::symmetrize(&(&v * linalg::inverse(&z, "view transform")?));
    let root = linalg::sym_pow(&target, 1.0 / depth as f64);
    Ok(vec![root; depth])
}

/// `(V*)^{i/D} Z^{(D−i)/D}`: the hidden map of the weight-decay solution from base inputs.
pub fn weight_decay_hidden_map(dm: &DataModel, tag: &str, depth: usize, layer: usize) -> Result<Mat> {
    if layer > depth {
        return Err(EdlnError::LayerOutOfRange { index: layer, depth });
    }
    let (v, z) = commuting_psd_inputs(dm, tag)?;
    let d = depth as f64;
    Ok(linalg::sym_pow(&v, layer as f64 / d) * linalg::sym_pow(&z, (depth - layer) as f64 / d))
}

/// Entropy along the symmetry orbit `λ ↦ apply_symmetry(net, (i, T, λ))`.
pub fn orbit_entropy(net: &EdlnNetwork, obj: &Objective, interface: usize, generator: &Mat, lambdas: &[f64]) -> Result<Vec<f64>> {
    lambdas
        .iter()
        .map(|&l| {
            let moved = net.apply_symmetry(&SymmetryGenerator::new(interface, generator.clone(), l))?;
            obj.entropy(&moved)
        })
        .collect()
}

/// `λ*` minimizing the entropy along the single-unit rescaling `T_jj = 1` at interface `i`:
/// `e^{4λ*} = E‖∇_{W_i^{j:}} ℓ‖² / E‖∇_{W_{i+1}^{:j}} ℓ‖²`.
pub fn rescaling_optimum(net: &EdlnNetwork, obj: &Objective, interface: usize, j: usize) -> Result<f64> {
    if interface == 0 || interface >= net.depth() {
        return Err(EdlnError::LayerOutOfRange { index: interface, depth: net.depth() });
    }
    let moments = obj.gradient_moments(net)?;
    let row = moments[interface - 1].row[(j, j)];
    let col = moments[interface].col[(j, j)];
    Ok(0.25 * (row / col).ln())
}
