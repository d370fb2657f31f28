//! Training loops: minibatch SGD, full-batch GD, RK4 gradient flow, explicit entropic
//! regularization, and a constrained entropic descent that stays on the loss minimum.

use std::path::{Path, PathBuf};

use nalgebra::Cholesky;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataModel, ViewMoments};
use crate::error::{EdlnError, Result};
use crate::io::{fmt_f64, save_network};
use crate::linalg::{self, Mat, Vector};
use crate::metrics;
use crate::network::{flatten_layers, EdlnNetwork};
use crate::objective::{ExpectationMode, Objective};
use crate::theory::conserved_quantities;

/// Loss above this (or non-finite) aborts training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Sgd,
    FullBatchGd,
    GradientFlow,
    EntropicExplicit,
    /// Descend the entropy along the manifold of loss minimizers (analytic mode only).
    EntropicConstrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    /// Step size; for `gradient_flow` the integration step, for `entropic_constrained` the initial step.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub weight_decay: f64,
    pub entropic_coeff: f64,
    pub expectation_mode: ExpectationMode,
    /// Samples in the fixed batch used when `expectation_mode = monte_carlo`.
    pub mc_samples: usize,
    pub record_every: usize,
    /// Sharpness is estimated at every `sharpness_every`-th record (0 disables it).
    pub sharpness_every: usize,
    /// A checkpoint is kept at every `checkpoint_every`-th record (0 disables them).
    pub checkpoint_every: usize,
    /// Constrained mode: loss gap above the noise floor treated as "on the constraint" (relative).
    pub constraint_tol: f64,
    /// Constrained mode: stop once the tangent entropy gradient falls below this fraction of `S`.
    pub stationarity_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Sgd,
            learning_rate: 1e-2,
            batch_size: 32,
            steps: 1000,
            weight_decay: 0.0,
            entropic_coeff: 0.0,
            expectation_mode: ExpectationMode::Analytic,
            mc_samples: 10_000,
            record_every: 100,
            sharpness_every: 0,
            checkpoint_every: 0,
            constraint_tol: 1e-22,
            stationarity_tol: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EdlnError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.record_every == 0 {
            return bad("record_every must be >= 1");
        }
        if !(self.weight_decay >= 0.0) || !(self.entropic_coeff >= 0.0) {
            return bad("weight_decay and entropic_coeff must be >= 0");
        }
        if self.expectation_mode == ExpectationMode::MonteCarlo && self.mc_samples == 0 {
            return bad("mc_samples must be >= 1");
        }
        if self.algorithm == Algorithm::EntropicConstrained {
            if self.expectation_mode != ExpectationMode::Analytic {
                return Err(EdlnError::Unsupported("entropic_constrained needs analytic expectations".into()));
            }
            if self.weight_decay != 0.0 {
                return bad("entropic_constrained does not combine with weight decay");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub entropy: f64,
    pub sharpness: Option<f64>,
    /// `‖Q_i(t) − Q_i(0)‖_F` per interface.
    pub drift: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub checkpoints: Vec<(usize, EdlnNetwork)>,
    /// `‖Q_i(0)‖_F` per interface, for relative drift.
    pub initial_q_norms: Vec<f64>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Largest drift over the run divided by `‖Q_i(0)‖_F + floor`, maximized over interfaces.
    pub fn max_relative_drift(&self, floor: f64) -> f64 {
        let mut worst = 0.0_f64;
        for row in &self.rows {
            for (d, q0) in row.drift.iter().zip(&self.initial_q_norms) {
                worst = worst.max(d / (q0 + floor));
            }
        }
        worst
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["step".to_string(), "loss".into(), "entropy_S".into(), "sharpness".into()];
        header.extend((1..=self.initial_q_norms.len()).map(|i| format!("drift_q_{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.step.to_string(), fmt_f64(r.loss), fmt_f64(r.entropy)];
            rec.push(r.sharpness.map(fmt_f64).unwrap_or_default());
            rec.extend(r.drift.iter().map(|d| fmt_f64(*d)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_checkpoints(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        self.checkpoints
            .iter()
            .map(|(step, net)| {
                let p = dir.join(format!("ckpt_{step}.net"));
                save_network(&p, net)?;
                Ok(p)
            })
            .collect()
    }
}

/// Exact Gaussian sampler for a view: `u ~ N(0, Σ_u)`, `y = V u + e`, `e ~ N(0, Σ_e)`.
pub struct ViewSampler {
    chol_u: Mat,
    chol_e: Mat,
    target: Mat,
}

impl ViewSampler {
    pub fn new(m: &ViewMoments) -> Result<Self> {
        let chol = |s: &Mat, what: &str| {
            Cholesky::new(s.clone()).map(|c| c.l()).ok_or_else(|| EdlnError::NotInvertible(what.into()))
        };
        Ok(Self { chol_u: chol(&m.sigma_u, "view input moment")?, chol_e: chol(&m.sigma_e, "view noise")?, target: m.target.clone() })
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> (Mat, Mat) {
        let u = &self.chol_u * linalg::gaussian_matrix(self.chol_u.nrows(), n, rng);
        let e = &self.chol_e * linalg::gaussian_matrix(self.chol_e.nrows(), n, rng);
        let y = &self.target * &u + e;
        (u, y)
    }

    pub fn objective(&self, n: usize, seed: u64) -> Objective {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inputs, labels) = self.sample(n, &mut rng);
        Objective::Empirical { inputs, labels }
    }
}

/// The objective a config evaluates against (population, or a fixed seeded sample).
pub fn evaluation_objective(dm: &DataModel, tag: &str, cfg: &TrainConfig) -> Result<Objective> {
    let m = dm.population_moments(tag)?;
    Ok(match cfg.expectation_mode {
        ExpectationMode::Analytic => Objective::Analytic(m),
        ExpectationMode::MonteCarlo => ViewSampler::new(&m)?.objective(cfg.mc_samples, cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
    })
}

struct Recorder {
    q0: Vec<Mat>,
    trace: TrainTrace,
    records: usize,
    last_finite: EdlnNetwork,
}

impl Recorder {
    fn new(net: &EdlnNetwork) -> Self {
        let q0 = conserved_quantities(net);
        let initial_q_norms = q0.iter().map(|q| q.norm()).collect();
        Self { q0, trace: TrainTrace { initial_q_norms, ..Default::default() }, records: 0, last_finite: net.clone() }
    }

    fn record(&mut self, step: usize, net: &EdlnNetwork, obj: &Objective, cfg: &TrainConfig) -> Result<()> {
        let loss = obj.loss(net)?;
        if !loss.is_finite() || loss > DIVERGENCE_THRESHOLD {
            return Err(EdlnError::Diverged { step, loss, last_finite: Box::new(self.last_finite.clone()) });
        }
        self.last_finite = net.clone();
        let entropy = obj.entropy(net)?;
        let sharpness = if cfg.sharpness_every > 0 && self.records % cfg.sharpness_every == 0 {
            Some(metrics::sharpness(net, obj, 1e-6, 500)?.top_eigenvalue)
        } else {
            None
        };
        let drift = conserved_quantities(net).iter().zip(&self.q0).map(|(q, q0)| (q - q0).norm()).collect();
        if cfg.checkpoint_every > 0 && self.records % cfg.checkpoint_every == 0 {
            self.trace.checkpoints.push((step, net.clone()));
        }
        self.trace.rows.push(TraceRow { step, loss, entropy, sharpness, drift });
        self.records += 1;
        Ok(())
    }

    /// Cheap per-step guard between records.
    fn guard(&self, step: usize, net: &EdlnNetwork) -> Result<()> {
        let ok = net.weights().iter().all(|w| w.iter().all(|v| v.is_finite() && v.abs() < 1e150));
        if ok {
            Ok(())
        } else {
            Err(EdlnError::Diverged { step, loss: f64::NAN, last_finite: Box::new(self.last_finite.clone()) })
        }
    }
}

fn axpy(net: &EdlnNetwork, grads: &[Mat], scale: f64) -> EdlnNetwork {
    let w = net.weights().iter().zip(grads).map(|(w, g)| w + g * scale).collect();
    net.with_weights(w).expect("shapes preserved by update")
}

fn add_decay(net: &EdlnNetwork, mut grads: Vec<Mat>, wd: f64) -> Vec<Mat> {
    if wd != 0.0 {
        for (g, w) in grads.iter_mut().zip(net.weights()) {
            *g += w * wd;
        }
    }
    grads
}

/// Train `net` on view `tag` of `dm`. Returns the final network and the recorded trace.
pub fn train(net: &EdlnNetwork, dm: &DataModel, tag: &str, cfg: &TrainConfig) -> Result<(EdlnNetwork, TrainTrace)> {
    cfg.validate()?;
    let obj = evaluation_objective(dm, tag, cfg)?;
    let rank = dm.population_moments(tag).map(|m| linalg::numerical_rank(&m.target, 1e-10))?;
    if net.width() < rank {
        return Err(EdlnError::InsufficientWidth { width: net.width(), rank });
    }
    match cfg.algorithm {
        Algorithm::EntropicConstrained => train_constrained(net, &obj, cfg),
        _ => train_descent(net, dm, tag, &obj, cfg),
    }
}

fn train_descent(
    net: &EdlnNetwork,
    dm: &DataModel,
    tag: &str,
    obj: &Objective,
    cfg: &TrainConfig,
) -> Result<(EdlnNetwork, TrainTrace)> {
    let mut rec = Recorder::new(net);
    let mut cur = net.clone();
    rec.record(0, &cur, obj, cfg)?;
    let sampler = ViewSampler::new(&dm.population_moments(tag)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eta = cfg.learning_rate;
    let wd = cfg.weight_decay;
    let full_gradient = |n: &EdlnNetwork| -> Result<Vec<Mat>> {
        let mut g = obj.loss_gradient(n)?;
        if cfg.algorithm == Algorithm::EntropicExplicit && cfg.entropic_coeff > 0.0 {
            for (a, b) in g.iter_mut().zip(obj.entropy_gradient(n)?) {
                *a += b * cfg.entropic_coeff;
            }
        }
        Ok(add_decay(n, g, wd))
    };
    for step in 1..=cfg.steps {
        cur = match cfg.algorithm {
            Algorithm::Sgd => {
                let (u, y) = sampler.sample(cfg.batch_size, &mut rng);
                let batch = Objective::Empirical { inputs: u, labels: y };
                let g = add_decay(&cur, batch.loss_gradient(&cur)?, wd);
                axpy(&cur, &g, -eta)
            }
            Algorithm::FullBatchGd | Algorithm::EntropicExplicit => axpy(&cur, &full_gradient(&cur)?, -eta),
            Algorithm::GradientFlow => {
                let k1 = full_gradient(&cur)?;
                let k2 = full_gradient(&axpy(&cur, &k1, -eta / 2.0))?;
                let k3 = full_gradient(&axpy(&cur, &k2, -eta / 2.0))?;
                let k4 = full_gradient(&axpy(&cur, &k3, -eta))?;
                let combined: Vec<Mat> = (0..k1.len())
                    .map(|i| (&k1[i] + &k2[i] * 2.0 + &k3[i] * 2.0 + &k4[i]) / 6.0)
                    .collect();
                axpy(&cur, &combined, -eta)
            }
            Algorithm::EntropicConstrained => unreachable!("dispatched separately"),
        };
        rec.guard(step, &cur)?;
        if step % cfg.record_every == 0 || step == cfg.steps {
            rec.record(step, &cur, obj, cfg)?;
        }
    }
    Ok((cur, rec.trace))
}

/// Jacobian of `vec((F − V) Σ_u^{1/2})` with respect to the flattened weights.
fn whitened_jacobian(net: &EdlnNetwork, sqrt_u: &Mat) -> Mat {
    let pre = net.prefixes();
    let suf = net.suffixes();
    let blocks: Vec<Mat> = (0..net.depth())
        .map(|k| (&pre[k] * sqrt_u).transpose().kronecker(&suf[k + 1]))
        .collect();
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut j = Mat::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        j.view_mut((0, offset), (rows, b.ncols())).copy_from(&b);
        offset += b.ncols();
    }
    j
}

/// Relative singular-value cutoff for the constraint Jacobian. Collapsed layers leave directions
/// whose singular values sit near rounding level; inverting them turns corrections into jumps.
const JACOBIAN_CUTOFF: f64 = 1e-9;

struct Constraint<'a> {
    m: &'a ViewMoments,
    sqrt_u: Mat,
    tol: f64,
}

impl Constraint<'_> {
    fn residual(&self, net: &EdlnNetwork) -> Vector {
        let r = (net.end_to_end() - &self.m.target) * &self.sqrt_u;
        Vector::from_column_slice(r.as_slice())
    }

    fn gap(&self, net: &EdlnNetwork) -> f64 {
        self.residual(net).norm_squared()
    }

    fn satisfied(&self, net: &EdlnNetwork) -> bool {
        self.gap(net) <= self.tol * self.m.noise_floor().max(1.0)
    }

    /// Gauss–Newton minimum-norm corrections back onto `F = V`.
    fn project(&self, net: &EdlnNetwork) -> Option<EdlnNetwork> {
        let mut cur = net.clone();
        for _ in 0..50 {
            if self.satisfied(&cur) {
                return Some(cur);
            }
            let j = whitened_jacobian(&cur, &self.sqrt_u);
            let delta = linalg::pinv(&j, JACOBIAN_CUTOFF) * self.residual(&cur);
            let theta = Vector::from_vec(cur.flatten()) - delta;
            let next = cur.unflatten(theta.as_slice());
            if !next.weights().iter().all(|w| w.iter().all(|v| v.is_finite())) {
                return None;
            }
            cur = next;
        }
        self.satisfied(&cur).then_some(cur)
    }

    /// Entropy gradient with its component normal to the constraint removed.
    fn tangent(&self, net: &EdlnNetwork, grad: &Vector) -> Vector {
        let j = whitened_jacobian(net, &self.sqrt_u);
        let jp = linalg::pinv(&j, JACOBIAN_CUTOFF);
        grad - jp * (&j * grad)
    }
}

/// The constrained descent stops after this many consecutive steps that lower `S` by less than
/// `STALL_DECREASE` relative (rounding level of the entropy evaluation).
const STALL_STEPS: usize = 25;
const STALL_DECREASE: f64 = 1e-14;

fn train_constrained(net: &EdlnNetwork, obj: &Objective, cfg: &TrainConfig) -> Result<(EdlnNetwork, TrainTrace)> {
    let Objective::Analytic(m) = obj else {
        return Err(EdlnError::Unsupported("entropic_constrained needs analytic expectations".into()));
    };
    let con = Constraint { m, sqrt_u: linalg::sym_sqrt(&m.sigma_u), tol: cfg.constraint_tol };
    let mut rec = Recorder::new(net);
    let mut cur = con.project(net).ok_or_else(|| EdlnError::Degenerate("initial projection onto the loss minimum failed".into()))?;
    rec.record(0, &cur, obj, cfg)?;
    let tangent_grad = |n: &EdlnNetwork| -> Result<Vector> {
        let g = Vector::from_vec(flatten_layers(&obj.entropy_gradient(n)?));
        Ok(con.tangent(n, &g))
    };
    let mut s_cur = obj.entropy(&cur)?;
    let mut g_cur = tangent_grad(&cur)?;
    let mut memory = Lbfgs::new(LBFGS_MEMORY);
    let mut stalled = 0;
    for step in 1..=cfg.steps {
        let g_norm = g_cur.norm();
        if g_norm <= cfg.stationarity_tol * s_cur || g_norm == 0.0 {
            rec.record(step, &cur, obj, cfg)?;
            break;
        }
        let theta = Vector::from_vec(cur.flatten());
        let mut accepted = None;
        for quasi_newton in [true, false] {
            if !quasi_newton {
                memory.clear();
            }
            let (dir, mut t) = match memory.direction(&g_cur) {
                Some(d) => (con.tangent(&cur, &d), 1.0),
                None => (-&g_cur, cfg.learning_rate),
            };
            let slope = dir.dot(&g_cur);
            if !(slope < 0.0) {
                continue;
            }
            for _ in 0..50 {
                let cand = cur.unflatten((&theta + &dir * t).as_slice());
                if let Some(p) = con.project(&cand) {
                    let s_new = obj.entropy(&p)?;
                    if s_new <= s_cur + ARMIJO * t * slope {
                        accepted = Some((p, s_new));
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((next, s_next)) = accepted else {
            rec.record(step, &cur, obj, cfg)?;
            break;
        };
        let g_next = tangent_grad(&next)?;
        memory.push(Vector::from_vec(next.flatten()) - theta, &g_next - &g_cur);
        stalled = if s_cur - s_next <= STALL_DECREASE * s_cur { stalled + 1 } else { 0 };
        cur = next;
        s_cur = s_next;
        g_cur = g_next;
        if step % cfg.record_every == 0 || step == cfg.steps || stalled >= STALL_STEPS {
            rec.record(step, &cur, obj, cfg)?;
        }
        if stalled >= STALL_STEPS {
            break;
        }
    }
    Ok((cur, rec.trace))
}

const LBFGS_MEMORY: usize = 20;
const ARMIJO: f64 = 1e-4;

/// Limited-memory BFGS curvature pairs; directions are re-projected onto the tangent space by the caller.
struct Lbfgs {
    pairs: std::collections::VecDeque<(Vector, Vector, f64)>,
    capacity: usize,
}

impl Lbfgs {
    fn new(capacity: usize) -> Self {
        Self { pairs: Default::default(), capacity }
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }

    fn push(&mut self, s: Vector, y: Vector) {
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if self.pairs.len() == self.capacity {
                self.pairs.pop_front();
            }
            self.pairs.push_back((s, y, 1.0 / sy));
        }
    }

    fn direction(&self, g: &Vector) -> Option<Vector> {
        let (s_last, y_last, _) = self.pairs.back()?;
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * s.dot(&q);
            q -= y * a;
            alphas.push(a);
        }
        q *= s_last.dot(y_last) / y_last.norm_squared();
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&q);
            q += s * (a - b);
        }
        Some(-q)
    }
}
