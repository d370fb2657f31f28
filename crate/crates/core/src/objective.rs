//! Expected loss `L = E ℓ`, entropy `S = E ‖∇_θ ℓ‖²`, and their gradients.
//!
//! Two expectation modes share one interface:
//!
//! * [`Objective::Analytic`] takes expectations in closed form over Gaussian inputs `u ~ N(0, Σ_u)`
//!   and independent Gaussian residual noise `e ~ N(0, Σ_e)`, with labels `y = V u + e`.
//! * [`Objective::Empirical`] averages over a fixed batch of (input, label) columns.
//!
//! ## Analytic entropy
//!
//! With `Δ = F − V`, residual `r = Δu − e`, and for layer `k` the suffix `S_k = M^O W_D ⋯ W_{k+1}`
//! and prefix `P_k = W_{k−1} ⋯ W_1 M^I`, the per-sample gradient is `2 S_kᵀ r (P_k u)ᵀ`, so
//!
//! ```text
//! E‖∇_{W_k} ℓ‖² = 4 E[(rᵀ A r)(uᵀ B u)],   A = S_k S_kᵀ,  B = P_kᵀ P_k.
//! ```
//!
//! Isserlis' rule `E[uᵀMu · uᵀNu] = Tr(MΣ)Tr(NΣ) + 2Tr(MΣNΣ)` and independence of `e` give
//!
//! ```text
//! E‖∇_{W_k} ℓ‖² = 4 [ Tr(ΔᵀAΔΣ)Tr(BΣ) + 2 Tr(ΔᵀAΔ Σ B Σ) + Tr(AΣ_e)Tr(BΣ) ].
//! ```
//!
//! The same rule gives the second-moment matrices `E[∇∇ᵀ]` and `E[∇ᵀ∇]` used by the balance
//! diagnostics, and differentiating the trace expression gives the analytic entropy gradient.

use serde::{Deserialize, Serialize};

use crate::data::{DataModel, PairedBatch, ViewMoments};
use crate::error::{EdlnError, Result};
use crate::linalg::Mat;
use crate::network::EdlnNetwork;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationMode {
    MonteCarlo,
    #[default]
    Analytic,
}

#[derive(Clone, Debug)]
pub enum Objective {
    Analytic(ViewMoments),
    Empirical { inputs: Mat, labels: Mat },
}

/// `E[∇_{W_k}ℓ ∇_{W_k}ℓᵀ]` (rows × rows) and `E[∇_{W_k}ℓᵀ ∇_{W_k}ℓ]` (cols × cols) for one layer.
#[derive(Clone, Debug)]
pub struct GradientMoments {
    pub row: Mat,
    pub col: Mat,
}

impl Objective {
    pub fn analytic(dm: &DataModel, tag: &str) -> Result<Self> {
        Ok(Objective::Analytic(dm.population_moments(tag)?))
    }

    pub fn from_batch(batch: &PairedBatch, tag: &str) -> Result<Self> {
        Ok(Objective::Empirical { inputs: batch.view(tag)?.clone(), labels: batch.label(tag)?.clone() })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Objective::Analytic(m) => m.input_dim(),
            Objective::Empirical { inputs, .. } => inputs.nrows(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Objective::Analytic(m) => m.output_dim(),
            Objective::Empirical { labels, .. } => labels.nrows(),
        }
    }

    fn check(&self, net: &EdlnNetwork) -> Result<()> {
        if net.input_dim() != self.input_dim() {
            return Err(EdlnError::shape("network input vs data view", self.input_dim(), net.input_dim()));
        }
        if net.output_dim() != self.output_dim() {
            return Err(EdlnError::shape("network output vs labels", self.output_dim(), net.output_dim()));
        }
        Ok(())
    }

    pub fn loss(&self, net: &EdlnNetwork) -> Result<f64> {
        self.check(net)?;
        Ok(match self {
            Objective::Analytic(m) => {
                let delta = net.end_to_end() - &m.target;
                (&delta * &m.sigma_u * delta.transpose()).trace() + m.sigma_e.trace()
            }
            Objective::Empirical { inputs, labels } => {
                let r = net.end_to_end() * inputs - labels;
                r.norm_squared() / inputs.ncols() as f64
            }
        })
    }

    pub fn loss_gradient(&self, net: &EdlnNetwork) -> Result<Vec<Mat>> {
        self.check(net)?;
        let pre = net.prefixes();
        let suf = net.suffixes();
        let core = match self {
            Objective::Analytic(m) => (net.end_to_end() - &m.target) * &m.sigma_u * 2.0,
            Objective::Empirical { inputs, labels } => {
                let r = net.end_to_end() * inputs - labels;
                r * inputs.transpose() * (2.0 / inputs.ncols() as f64)
            }
        };
        Ok((0..net.depth())
            .map(|k| suf[k + 1].transpose() * &core * pre[k].transpose())
            .collect())
    }

    /// Per-layer contributions `E‖∇_{W_k} ℓ‖²`.
    pub fn entropy_per_layer(&self, net: &EdlnNetwork) -> Result<Vec<f64>> {
        self.check(net)?;
        let pre = net.prefixes();
        let suf = net.suffixes();
        let d = net.depth();
        Ok(match self {
            Objective::Analytic(m) => {
                let delta = net.end_to_end() - &m.target;
                (0..d)
                    .map(|k| {
                        let c = AnalyticLayer::new(&delta, &suf[k + 1], &pre[k], m);
                        4.0 * (c.c1 * c.c2 + 2.0 * c.c4 + c.c3 * c.c2)
                    })
                    .collect()
            }
            Objective::Empirical { inputs, labels } => {
                let r = net.end_to_end() * inputs - labels;
                let n = inputs.ncols() as f64;
                (0..d)
                    .map(|k| {
                        let a = suf[k + 1].transpose() * &r;
                        let b = &pre[k] * inputs;
                        let total: f64 = (0..inputs.ncols())
                            .map(|s| a.column(s).norm_squared() * b.column(s).norm_squared())
                            .sum();
                        4.0 * total / n
                    })
                    .collect()
            }
        })
    }

    pub fn entropy(&self, net: &EdlnNetwork) -> Result<f64> {
        Ok(self.entropy_per_layer(net)?.iter().sum())
    }

    /// `L + η_S · S`.
    pub fn modified_loss(&self, net: &EdlnNetwork, entropic_coeff: f64) -> Result<f64> {
        if entropic_coeff < 0.0 {
            return Err(EdlnError::InvalidConfig("entropic coefficient must be >= 0".into()));
        }
        let l = self.loss(net)?;
        if entropic_coeff == 0.0 {
            return Ok(l);
        }
        Ok(l + entropic_coeff * self.entropy(net)?)
    }

    /// Second-moment matrices of the per-sample gradient of every layer.
    pub fn gradient_moments(&self, net: &EdlnNetwork) -> Result<Vec<GradientMoments>> {
        self.check(net)?;
        let pre = net.prefixes();
        let suf = net.suffixes();
        let d = net.depth();
        Ok(match self {
            Objective::Analytic(m) => {
                let delta = net.end_to_end() - &m.target;
                (0..d)
                    .map(|k| {
                        let (s, p) = (&suf[k + 1], &pre[k]);
                        let c = AnalyticLayer::new(&delta, s, p, m);
                        let x = s.transpose() * &delta;
                        let xsp = &x * &m.sigma_u * p.transpose();
                        let row = (&x * &m.sigma_u * x.transpose()) * c.c2
                            + &xsp * xsp.transpose() * 2.0
                            + s.transpose() * &m.sigma_e * s * c.c2;
                        let col = (p * &m.sigma_u * p.transpose()) * (c.c1 + c.c3)
                            + xsp.transpose() * &xsp * 2.0;
                        GradientMoments { row: row * 4.0, col: col * 4.0 }
                    })
                    .collect()
            }
            Objective::Empirical { inputs, labels } => {
                let r = net.end_to_end() * inputs - labels;
                let n = inputs.ncols();
                (0..d)
                    .map(|k| {
                        let mut a = suf[k + 1].transpose() * &r;
                        let mut b = &pre[k] * inputs;
                        let an: Vec<f64> = (0..n).map(|s| a.column(s).norm_squared()).collect();
                        let bn: Vec<f64> = (0..n).map(|s| b.column(s).norm_squared()).collect();
                        let row_src = a.clone();
                        for s in 0..n {
                            a.column_mut(s).scale_mut(bn[s]);
                            b.column_mut(s).scale_mut(an[s]);
                        }
                        let col_src = &pre[k] * inputs;
                        let scale = 4.0 / n as f64;
                        GradientMoments {
                            row: a * row_src.transpose() * scale,
                            col: b * col_src.transpose() * scale,
                        }
                    })
                    .collect()
            }
        })
    }

    /// Gradient of the entropy: closed form in analytic mode, central differences otherwise.
    pub fn entropy_gradient(&self, net: &EdlnNetwork) -> Result<Vec<Mat>> {
        match self {
            Objective::Analytic(m) => {
                self.check(net)?;
                Ok(analytic_entropy_gradient(net, m))
            }
            Objective::Empirical { .. } => self.entropy_gradient_fd(net, 1e-5),
        }
    }

    /// Central finite differences of the entropy, one coordinate at a time.
    pub fn entropy_gradient_fd(&self, net: &EdlnNetwork, step: f64) -> Result<Vec<Mat>> {
        self.check(net)?;
        let theta = net.flatten();
        let mut grad = vec![0.0; theta.len()];
        let mut probe = theta.clone();
        for (j, g) in grad.iter_mut().enumerate() {
            probe[j] = theta[j] + step;
            let up = self.entropy(&net.unflatten(&probe))?;
            probe[j] = theta[j] - step;
            let down = self.entropy(&net.unflatten(&probe))?;
            probe[j] = theta[j];
            *g = (up - down) / (2.0 * step);
        }
        Ok(split_like(net, &grad))
    }
}

/// Reshape a flat parameter-space vector into per-layer matrices matching `net`.
pub fn split_like(net: &EdlnNetwork, flat: &[f64]) -> Vec<Mat> {
    net.unflatten(flat).weights().to_vec()
}

struct AnalyticLayer {
    c1: f64,
    c2: f64,
    c3: f64,
    c4: f64,
}

impl AnalyticLayer {
    fn new(delta: &Mat, suf: &Mat, pre: &Mat, m: &ViewMoments) -> Self {
        let x = suf.transpose() * delta;
        let c1 = (&x * &m.sigma_u * x.transpose()).trace();
        let c2 = (pre * &m.sigma_u * pre.transpose()).trace();
        let c3 = (suf.transpose() * &m.sigma_e * suf).trace();
        let c4 = (&x * &m.sigma_u * pre.transpose()).norm_squared();
        Self { c1, c2, c3, c4 }
    }
}

fn analytic_entropy_gradient(net: &EdlnNetwork, m: &ViewMoments) -> Vec<Mat> {
    let pre = net.prefixes();
    let suf = net.suffixes();
    let w = net.weights();
    let d = net.depth();
    let sigma = &m.sigma_u;
    let delta = net.end_to_end() - &m.target;
    let mut grads: Vec<Mat> = w.iter().map(|x| Mat::zeros(x.nrows(), x.ncols())).collect();
    let mut g_delta = Mat::zeros(delta.nrows(), delta.ncols());

    for l in 0..d {
        let (s, p) = (&suf[l + 1], &pre[l]);
        let c = AnalyticLayer::new(&delta, s, p, m);
        let x = s.transpose() * &delta;
        let x_sigma = &x * sigma;
        let y = &delta * sigma * p.transpose();
        let p_sigma = p * sigma;

        // d/dS_l
        let g_a = (&delta * sigma * delta.transpose()) * c.c2 + &m.sigma_e * c.c2 + &y * y.transpose() * 2.0;
        let g_suf = &g_a * s * 8.0;
        // d/dP_l
        let g_b = sigma * (c.c1 + c.c3) + x_sigma.transpose() * &x_sigma * 2.0;
        let g_pre = p * g_b * 8.0;
        // d/dΔ
        g_delta += s * (&x_sigma * (2.0 * c.c2) + (&x_sigma * p.transpose()) * &p_sigma * 4.0) * 4.0;

        // suf[l+1] = suf[k+1] W_k (W_{k-1} ⋯ W_{l+1})
        let mut right = Mat::identity(w[l].nrows(), w[l].nrows());
        for k in (l + 1)..d {
            grads[k] += suf[k + 1].transpose() * &g_suf * right.transpose();
            right = &w[k] * right;
        }
        // pre[l] = (W_{l-1} ⋯ W_{k+1}) W_k pre[k]
        let mut left = Mat::identity(p.nrows(), p.nrows());
        for k in (0..l).rev() {
            grads[k] += left.transpose() * &g_pre * pre[k].transpose();
            left = &left * &w[k];
        }
    }
    for k in 0..d {
        grads[k] += suf[k + 1].transpose() * &g_delta * pre[k].transpose();
    }
    grads
}
