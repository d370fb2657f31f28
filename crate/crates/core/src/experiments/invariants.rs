use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ScenarioConfig;
use crate::data::make_data_model;
use crate::error::Result;
use crate::io;
use crate::linalg::{self, rel_err, Mat};
use crate::metrics::{self, pairwise_alignment, Probe};
use crate::network::{flatten_layers, EdlnNetwork, SymmetryGenerator};
use crate::objective::Objective;
use crate::theory::{self, closed_form_platonic, Architecture};

/// One numerical identity: the measured error and the bound it must stay under.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn check(name: &str, value: f64, threshold: f64) -> InvariantCheck {
    InvariantCheck { name: name.into(), value, threshold, pass: value <= threshold }
}

fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

fn central_difference(net: &EdlnNetwork, f: impl Fn(&EdlnNetwork) -> Result<f64>, h: f64) -> Result<Vec<f64>> {
    let theta = net.flatten();
    let mut probe = theta.clone();
    let mut out = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        probe[j] = theta[j] + h;
        let up = f(&net.unflatten(&probe))?;
        probe[j] = theta[j] - h;
        let down = f(&net.unflatten(&probe))?;
        probe[j] = theta[j];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// Run every identity on small seeded instances.
pub fn invariant_checks(cfg: &ScenarioConfig) -> Result<Vec<InvariantCheck>> {
    let th = &cfg.thresholds;
    let seed = |k: u64| cfg.derived_seed(1000 + k);
    let mut out = Vec::new();

    // analytic gradients of L and S against central differences
    let mut grad = 0.0_f64;
    for k in 0..10 {
        let dm = make_data_model(5, 4, 3, 5.0, 5.0, seed(k))?;
        let hidden: Vec<usize> = if k % 2 == 0 { vec![4] } else { vec![5, 3] };
        let net = Architecture::random(5, &hidden, 4, 3.0, seed(20 + k)).init(1.0, seed(40 + k))?;
        let obj = Objective::analytic(&dm, "A")?;
        let fd = central_difference(&net, |n| obj.loss(n), 1e-5)?;
        grad = grad.max(rel_vec(&flatten_layers(&obj.loss_gradient(&net)?), &fd));
        let fd = central_difference(&net, |n| obj.entropy(n), 1e-5)?;
        grad = grad.max(rel_vec(&flatten_layers(&obj.entropy_gradient(&net)?), &fd));
    }
    out.push(check("gradient_vs_finite_difference", grad, th.gradient_check_max));

    // Monte-Carlo estimates against population moments
    let dm = make_data_model(8, 6, 4, 10.0, 10.0, seed(60))?;
    let net = Architecture::random(8, &[6], 6, 3.0, seed(61)).init(1.0, seed(62))?;
    let exact = Objective::analytic(&dm, "A")?;
    let mc = Objective::from_batch(&dm.sample_batch(100_000, &["A"], seed(63))?, "A")?;
    let mc_err = ((exact.loss(&net)? - mc.loss(&net)?).abs() / exact.loss(&net)?)
        .max((exact.entropy(&net)? - mc.entropy(&net)?).abs() / exact.entropy(&net)?);
    out.push(check("monte_carlo_vs_analytic", mc_err, th.monte_carlo_max));

    // power-iteration sharpness against the dense Hessian
    let mut sharp = 0.0_f64;
    for k in 0..5 {
        let dm = make_data_model(4, 3, 2, 5.0, 5.0, seed(70 + k))?;
        let net = Architecture::random(4, &[4], 3, 3.0, seed(80 + k)).init(1.0, seed(90 + k))?;
        let obj = Objective::analytic(&dm, "A")?;
        let oracle = SymmetricEigen::new(metrics::dense_hessian(&net, &obj)?).eigenvalues.max();
        let est = metrics::sharpness(&net, &obj, 1e-12, 20_000)?.top_eigenvalue;
        sharp = sharp.max((est - oracle).abs() / oracle.abs());
    }
    out.push(check("sharpness_vs_dense_hessian", sharp, th.sharpness_oracle_max));

    // loss invariance and gradient covariance under W_i ← T W_i, W_{i+1} ← W_{i+1} T⁻¹
    let (mut invariance, mut covariance) = (0.0_f64, 0.0_f64);
    for k in 0..10 {
        let dm = make_data_model(8, 6, 4, 10.0, 10.0, seed(100 + k))?;
        let net = Architecture::random(8, &[6, 7], 6, 3.0, seed(110 + k)).init(1.0, seed(120 + k))?;
        let obj = Objective::analytic(&dm, "A")?;
        let i = 1 + k as usize % 2;
        let side = net.layer(i).nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed(130 + k));
        let gen = linalg::gaussian_matrix(side, side, &mut rng);
        let moved = net.apply_symmetry(&SymmetryGenerator::new(i, gen.clone(), 0.3))?;
        let base = obj.loss(&net)?;
        invariance = invariance.max((obj.loss(&moved)? - base).abs() / base);
        let t = linalg::matrix_exponential(&gen, 0.3);
        let (before, after) = (obj.loss_gradient(&net)?, obj.loss_gradient(&moved)?);
        let t_inv_t = linalg::inverse(&t, "symmetry")?.transpose();
        covariance = covariance.max(rel_err(&after[i - 1], &(t_inv_t * &before[i - 1])));
        covariance = covariance.max(rel_err(&after[i], &(&before[i] * t.transpose())));
    }
    out.push(check("symmetry_loss_invariance", invariance, th.identity_max));
    out.push(check("symmetry_gradient_covariance", covariance, th.identity_max));

    // closed-form solutions: global minimum, balance, alignment, entropy minimal along orbits
    let (mut gap, mut balance, mut misalign, mut orbit_violations) = (0.0_f64, 0.0_f64, 0.0_f64, 0usize);
    let lambdas: Vec<f64> = (0..21).map(|k| -1.0 + 0.1 * k as f64).collect();
    for k in 0..5 {
        let dm = make_data_model(8, 6, 4, 10.0, 10.0, seed(200 + k))?;
        let arch_a = Architecture::random(8, &[6], 6, 5.0, seed(210 + k));
        let arch_b = Architecture::random(8, &[7, 6], 6, 5.0, seed(220 + k));
        let a = closed_form_platonic(&dm, "A", &arch_a, Some(seed(230 + k)))?.network;
        let b = closed_form_platonic(&dm, "B", &arch_b, Some(seed(240 + k)))?.network;
        let obj_b = Objective::analytic(&dm, "B")?;
        let floor = dm.population_moments("B")?.noise_floor();
        gap = gap.max((obj_b.loss(&b)? - floor).abs() / floor);
        balance = balance.max(theory::balance_report(&b, &obj_b)?.max_residual());
        let probes = dm.sample_batch(64, &["A", "B"], seed(250 + k))?;
        misalign = misalign.max(1.0 - pairwise_alignment(Probe::new(&a, "A"), Probe::new(&b, "B"), &probes)?.min_score());
        let i = 1 + k as usize % 2;
        let side = b.layer(i).nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed(260 + k));
        let gen = linalg::gaussian_matrix(side, side, &mut rng);
        let scan = theory::orbit_entropy(&b, &obj_b, i, &gen, &lambdas)?;
        let s0 = scan[10];
        orbit_violations += scan.iter().enumerate().filter(|(j, s)| *j != 10 && !(**s > s0 * (1.0 + 1e-10))).count();
    }
    out.push(check("closed_form_loss_gap", gap, th.loss_gap_max));
    out.push(check("closed_form_balance_residual", balance, th.identity_max));
    out.push(check("closed_form_misalignment", misalign, 1.0 - th.closed_form_alignment_min));
    out.push(check("orbit_entropy_violations", orbit_violations as f64, 0.0));

    // alignment ignores orthogonal changes of hidden coordinates
    let dm = make_data_model(8, 6, 4, 10.0, 10.0, seed(300))?;
    let net = Architecture::random(8, &[6], 6, 5.0, seed(301)).init(1.0, seed(302))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed(303));
    let q = linalg::random_orthogonal(6, &mut rng);
    let rotated = net.apply_gauge(1, &q)?;
    let probes = dm.sample_batch(64, &["A"], seed(304))?;
    let score = pairwise_alignment(Probe::new(&net, "A"), Probe::new(&rotated, "A"), &probes)?.min_score();
    out.push(check("alignment_rotation_invariance", (1.0 - score).abs(), th.identity_max));

    // serialization and the matrix exponential
    let back: EdlnNetwork = serde_json::from_str(&io::to_json_string(&net)?)?;
    let roundtrip = net.flatten().iter().zip(back.flatten()).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
    out.push(check("network_roundtrip_mismatches", roundtrip as f64, 0.0));
    let gen = linalg::gaussian_matrix(5, 5, &mut rng);
    let prod = linalg::matrix_exponential(&gen, 0.7) * linalg::matrix_exponential(&gen, -0.7);
    out.push(check("matrix_exponential_inverse", rel_err(&prod, &Mat::identity(5, 5)), th.identity_max));
    Ok(out)
}
