//! Representation alignment (Gram cosine and CKA) and loss-landscape sharpness.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PairedBatch;
use crate::error::{EdlnError, Result};
use crate::io::write_matrix_csv;
use crate::linalg::{self, Mat};
use crate::network::{EdlnNetwork, HiddenConvention};
use crate::objective::Objective;

/// Grams with Frobenius norm below this are treated as a collapsed representation.
const DEGENERATE_GRAM: f64 = 1e-300;

#[derive(Clone, Debug)]
pub struct AlignmentReport {
    pub gram_a: Mat,
    pub gram_b: Mat,
    /// Least-squares scale with `c0 · G_A ≈ G_B`.
    pub c0: f64,
    /// `|⟨G_A, G_B⟩| / (‖G_A‖ ‖G_B‖)`; `None` if either Gram vanishes.
    pub score: Option<f64>,
    /// Same cosine on doubly-centered Grams; `None` if either centered Gram vanishes.
    pub cka: Option<f64>,
}

impl AlignmentReport {
    pub fn is_degenerate(&self) -> bool {
        self.score.is_none()
    }

    /// Score with a degenerate report counted as zero alignment.
    pub fn score_or_zero(&self) -> f64 {
        self.score.unwrap_or(0.0)
    }
}

fn cosine(a: &Mat, b: &Mat) -> Option<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na < DEGENERATE_GRAM || nb < DEGENERATE_GRAM {
        return None;
    }
    Some((linalg::inner(a, b).abs() / (na * nb)).min(1.0))
}

fn center(g: &Mat) -> Mat {
    let n = g.nrows();
    let h = Mat::identity(n, n) - Mat::from_element(n, n, 1.0 / n as f64);
    &h * g * &h
}

/// Compare two representations given as `d × n` matrices whose columns share probe order.
pub fn alignment_from_representations(h_a: &Mat, h_b: &Mat) -> Result<AlignmentReport> {
    if h_a.ncols() != h_b.ncols() {
        return Err(EdlnError::shape("alignment probes", h_a.ncols().to_string(), h_b.ncols().to_string()));
    }
    let gram_a = h_a.transpose() * h_a;
    let gram_b = h_b.transpose() * h_b;
    Ok(alignment_from_grams(gram_a, gram_b))
}

pub fn alignment_from_grams(gram_a: Mat, gram_b: Mat) -> AlignmentReport {
    let aa = linalg::inner(&gram_a, &gram_a);
    let c0 = if aa > 0.0 { linalg::inner(&gram_a, &gram_b) / aa } else { 0.0 };
    let score = cosine(&gram_a, &gram_b);
    let cka = cosine(&center(&gram_a), &center(&gram_b));
    AlignmentReport { gram_a, gram_b, c0, score, cka }
}

/// One side of an alignment comparison: a network and the view it reads.
#[derive(Clone, Copy)]
pub struct Probe<'a> {
    pub net: &'a EdlnNetwork,
    pub tag: &'a str,
}

impl<'a> Probe<'a> {
    pub fn new(net: &'a EdlnNetwork, tag: &'a str) -> Self {
        Self { net, tag }
    }

    fn representation(&self, layer: usize, convention: HiddenConvention, probes: &PairedBatch) -> Result<Mat> {
        Ok(self.net.hidden_map(layer, convention)? * probes.view(self.tag)?)
    }
}

const MIN_PROBES: usize = 10;

/// Alignment between layer `i` of `a` and layer `j` of `b` over the shared probe batch.
pub fn alignment(a: Probe, i: usize, b: Probe, j: usize, probes: &PairedBatch) -> Result<AlignmentReport> {
    alignment_with(a, i, b, j, probes, HiddenConvention::default())
}

pub fn alignment_with(
    a: Probe,
    i: usize,
    b: Probe,
    j: usize,
    probes: &PairedBatch,
    convention: HiddenConvention,
) -> Result<AlignmentReport> {
    if probes.len() < MIN_PROBES {
        return Err(EdlnError::InvalidConfig(format!("need at least {MIN_PROBES} probes, got {}", probes.len())));
    }
    alignment_from_representations(
        &a.representation(i, convention, probes)?,
        &b.representation(j, convention, probes)?,
    )
}

/// Which layers enter a pairwise comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSet {
    /// Latent layers `1..D−1`.
    #[default]
    Hidden,
    /// Latent layers plus the network output `f(x)` as layer `D`.
    HiddenAndOutput,
}

impl LayerSet {
    fn layers(self, net: &EdlnNetwork) -> Vec<(usize, HiddenConvention)> {
        let d = net.depth();
        let mut out: Vec<_> = (1..d).map(|i| (i, HiddenConvention::WithoutOutputEmbedding)).collect();
        if self == LayerSet::HiddenAndOutput || d == 1 {
            out.push((d, HiddenConvention::WithOutputEmbedding));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlignmentMatrix {
    pub layers_a: Vec<usize>,
    pub layers_b: Vec<usize>,
    /// Row per layer of `a`, column per layer of `b`; degenerate pairs score 0.
    #[serde(with = "crate::io::rows")]
    pub scores: Mat,
    #[serde(with = "crate::io::rows")]
    pub cka: Mat,
}

impl AlignmentMatrix {
    pub fn min_score(&self) -> f64 {
        self.scores.min()
    }

    pub fn max_score(&self) -> f64 {
        self.scores.max()
    }

    pub fn min_cka(&self) -> f64 {
        self.cka.min()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<String> = self.layers_a.iter().map(|i| format!("a{i}")).collect();
        let cols: Vec<String> = self.layers_b.iter().map(|j| format!("b{j}")).collect();
        write_matrix_csv(path, "layer", &rows, &cols, &self.scores)
    }
}

pub fn pairwise_alignment(a: Probe, b: Probe, probes: &PairedBatch) -> Result<AlignmentMatrix> {
    pairwise_alignment_with(a, b, probes, LayerSet::default())
}

pub fn pairwise_alignment_with(a: Probe, b: Probe, probes: &PairedBatch, layers: LayerSet) -> Result<AlignmentMatrix> {
    let la = layers.layers(a.net);
    let lb = layers.layers(b.net);
    let reps_a = la.iter().map(|&(i, c)| a.representation(i, c, probes)).collect::<Result<Vec<_>>>()?;
    let reps_b = lb.iter().map(|&(j, c)| b.representation(j, c, probes)).collect::<Result<Vec<_>>>()?;
    if probes.len() < MIN_PROBES {
        return Err(EdlnError::InvalidConfig(format!("need at least {MIN_PROBES} probes, got {}", probes.len())));
    }
    let mut scores = Mat::zeros(la.len(), lb.len());
    let mut cka = Mat::zeros(la.len(), lb.len());
    for (r, ha) in reps_a.iter().enumerate() {
        for (c, hb) in reps_b.iter().enumerate() {
            let rep = alignment_from_representations(ha, hb)?;
            scores[(r, c)] = rep.score_or_zero();
            cka[(r, c)] = rep.cka.unwrap_or(0.0);
        }
    }
    Ok(AlignmentMatrix {
        layers_a: la.iter().map(|p| p.0).collect(),
        layers_b: lb.iter().map(|p| p.0).collect(),
        scores,
        cka,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SharpnessEstimate {
    pub top_eigenvalue: f64,
    pub iterations: usize,
    /// Relative change of the Rayleigh quotient at the last iteration.
    pub residual: f64,
    pub converged: bool,
}

fn flat_gradient(obj: &Objective, net: &EdlnNetwork, theta: &[f64]) -> Result<Vec<f64>> {
    let g = obj.loss_gradient(&net.unflatten(theta))?;
    Ok(crate::network::flatten_layers(&g))
}

fn hvp(obj: &Objective, net: &EdlnNetwork, theta: &[f64], v: &[f64], h: f64) -> Result<Vec<f64>> {
    let plus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t + h * d).collect();
    let minus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t - h * d).collect();
    let gp = flat_gradient(obj, net, &plus)?;
    let gm = flat_gradient(obj, net, &minus)?;
    Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Finite-difference step for Hessian-vector products at `θ`.
pub fn hvp_step(theta: &[f64]) -> f64 {
    1e-5 * (1.0 + theta.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

fn power_iteration(
    obj: &Objective,
    net: &EdlnNetwork,
    shift: f64,
    tol: f64,
    max_iters: usize,
) -> Result<SharpnessEstimate> {
    let theta = net.flatten();
    let h = hvp_step(&theta);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ba7);
    let mut v: Vec<f64> = linalg::gaussian_vector(theta.len(), &mut rng).iter().cloned().collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut q_prev = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        let mut hv = hvp(obj, net, &theta, &v, h)?;
        if shift != 0.0 {
            hv.iter_mut().zip(&v).for_each(|(a, b)| *a += shift * b);
        }
        let q = dot(&v, &hv);
        let nh = norm(&hv);
        if nh == 0.0 {
            return Ok(SharpnessEstimate { top_eigenvalue: -shift, iterations: it, residual: 0.0, converged: true });
        }
        if q_prev.is_finite() {
            residual = (q - q_prev).abs() / q.abs().max(f64::MIN_POSITIVE);
            if residual < tol {
                return Ok(SharpnessEstimate { top_eigenvalue: q - shift, iterations: it, residual, converged: true });
            }
        }
        q_prev = q;
        v = hv.iter().map(|x| x / nh).collect();
    }
    Ok(SharpnessEstimate { top_eigenvalue: q_prev - shift, iterations: max_iters, residual, converged: false })
}

/// Largest Hessian eigenvalue of the loss by power iteration on finite-difference HVPs.
///
/// Power iteration finds the eigenvalue of largest magnitude; when that one is negative the
/// iteration is rerun on `H + |λ|I` so the result is the algebraically largest eigenvalue.
pub fn sharpness(net: &EdlnNetwork, obj: &Objective, tol: f64, max_iters: usize) -> Result<SharpnessEstimate> {
    let first = power_iteration(obj, net, 0.0, tol, max_iters)?;
    if first.top_eigenvalue >= 0.0 {
        return Ok(first);
    }
    let mut shifted = power_iteration(obj, net, first.top_eigenvalue.abs(), tol, max_iters)?;
    shifted.iterations += first.iterations;
    Ok(shifted)
}

/// Dense Hessian of the loss by central differences of the analytic gradient.
pub fn dense_hessian(net: &EdlnNetwork, obj: &Objective) -> Result<Mat> {
    let theta = net.flatten();
    let h = hvp_step(&theta);
    let p = theta.len();
    let mut hess = Mat::zeros(p, p);
    let mut e = vec![0.0; p];
    for k in 0..p {
        e[k] = 1.0;
        let col = hvp(obj, net, &theta, &e, h)?;
        for (r, v) in col.iter().enumerate() {
            hess[(r, k)] = *v;
        }
        e[k] = 0.0;
    }
    Ok(linalg::symmetrize(&hess))
}
