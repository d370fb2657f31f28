use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{invariants, Report, ScenarioConfig, ScenarioKind};
use crate::data::{DataModel, PairedBatch};
use crate::error::{EdlnError, Result};
use crate::linalg::{self, rel_err, Mat, Vector};
use crate::metrics::{self, pairwise_alignment, AlignmentMatrix, Probe};
use crate::network::EdlnNetwork;
use crate::objective::Objective;
use crate::theory::{self, closed_form_platonic, Architecture};
use crate::trainer::{train, Algorithm, TrainConfig, TrainTrace};

// seed roles within one run
const ARCH_A: u64 = 10;
const ARCH_B: u64 = 11;
const INIT_A: u64 = 12;
const INIT_B: u64 = 13;
const PROBES: u64 = 14;
const ROTATION: u64 = 15;
const EXTRA: u64 = 100;

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    dm: DataModel,
    tag_a: String,
    tag_b: String,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        let dm = DataModel::generate(&cfg.data)?;
        let tags = dm.tags();
        let (tag_a, tag_b) = match cfg.data.tags.as_slice() {
            [a, b, ..] => (a.clone(), b.clone()),
            _ => (tags[0].clone(), tags[0].clone()),
        };
        Ok(Self { cfg, dm, tag_a, tag_b })
    }

    fn seed(&self, role: u64) -> u64 {
        self.cfg.derived_seed(role)
    }

    fn arch_a(&self) -> Architecture {
        self.cfg.net_a.architecture(self.dm.input_dim, self.dm.output_dim, self.seed(ARCH_A))
    }

    fn arch_b(&self) -> Architecture {
        self.cfg.net_b.architecture(self.dm.input_dim, self.dm.output_dim, self.seed(ARCH_B))
    }

    fn init_a(&self) -> Result<EdlnNetwork> {
        self.arch_a().init(self.cfg.net_a.init_scale, self.seed(INIT_A))
    }

    fn init_b(&self) -> Result<EdlnNetwork> {
        self.arch_b().init(self.cfg.net_b.init_scale, self.seed(INIT_B))
    }

    fn probes(&self, dm: &DataModel) -> Result<PairedBatch> {
        dm.sample_batch(self.cfg.probes, &[&self.tag_a, &self.tag_b], self.seed(PROBES))
    }

    fn loss_gap(&self, dm: &DataModel, net: &EdlnNetwork, tag: &str) -> Result<f64> {
        let floor = dm.population_moments(tag)?.noise_floor();
        Ok((Objective::analytic(dm, tag)?.loss(net)? - floor) / floor)
    }

    /// Train with a training config whose seed is offset by `offset`.
    fn train(&self, dm: &DataModel, net: &EdlnNetwork, tag: &str, cfg: &TrainConfig, offset: u64) -> Result<(EdlnNetwork, TrainTrace)> {
        let cfg = TrainConfig { seed: cfg.seed.wrapping_add(offset), ..cfg.clone() };
        train(net, dm, tag, &cfg)
    }
}

fn alignment(a: &EdlnNetwork, tag_a: &str, b: &EdlnNetwork, tag_b: &str, probes: &PairedBatch) -> Result<AlignmentMatrix> {
    pairwise_alignment(Probe::new(a, tag_a), Probe::new(b, tag_b), probes)
}

fn alignment_metrics(report: &mut Report, prefix: &str, m: &AlignmentMatrix) {
    report.metric(&format!("{prefix}min_alignment"), m.min_score());
    report.metric(&format!("{prefix}max_alignment"), m.max_score());
    report.metric(&format!("{prefix}min_cka"), m.min_cka());
}

pub(super) fn run(cfg: &ScenarioConfig) -> Result<Report> {
    if cfg.scenario == ScenarioKind::InvariantSuite {
        return invariant_suite(cfg);
    }
    let ctx = Ctx::new(cfg)?;
    match cfg.scenario {
        ScenarioKind::PlatonicClosedForm => platonic_closed_form(&ctx),
        ScenarioKind::PlatonicSgd => platonic_sgd(&ctx),
        ScenarioKind::NonPlatonicMinima => non_platonic_minima(&ctx),
        ScenarioKind::WeightDecayBreak => weight_decay_break(&ctx),
        ScenarioKind::GradientFlowBreak => gradient_flow_break(&ctx),
        ScenarioKind::LabelTransformBreak => label_transform_break(&ctx),
        ScenarioKind::SaddleBreak => saddle_break(&ctx),
        ScenarioKind::HeterogeneityBreak => heterogeneity_break(&ctx),
        ScenarioKind::ProgressiveSharpening => progressive_sharpening(&ctx),
        ScenarioKind::InvariantSuite => unreachable!(),
    }
}

fn platonic_closed_form(ctx: &Ctx) -> Result<Report> {
    let th = &ctx.cfg.thresholds;
    let (arch_a, arch_b) = (ctx.arch_a(), ctx.arch_b());
    let a = closed_form_platonic(&ctx.dm, &ctx.tag_a, &arch_a, Some(ctx.seed(ROTATION)))?.network;
    let b = closed_form_platonic(&ctx.dm, &ctx.tag_b, &arch_b, Some(ctx.seed(ROTATION + 1)))?.network;
    let mut r = Report::default();
    let gap_a = ctx.loss_gap(&ctx.dm, &a, &ctx.tag_a)?;
    let gap_b = ctx.loss_gap(&ctx.dm, &b, &ctx.tag_b)?;
    let prod = rel_err(&a.product(), &theory::global_min_target(&ctx.dm, &ctx.tag_a, &arch_a)?)
        .max(rel_err(&b.product(), &theory::global_min_target(&ctx.dm, &ctx.tag_b, &arch_b)?));
    let m = alignment(&a, &ctx.tag_a, &b, &ctx.tag_b, &ctx.probes(&ctx.dm)?)?;
    r.metric("loss_gap_a", gap_a);
    r.metric("loss_gap_b", gap_b);
    r.metric("product_error", prod);
    alignment_metrics(&mut r, "", &m);
    r.verdict = gap_a.abs() <= th.loss_gap_max && gap_b.abs() <= th.loss_gap_max && m.min_score() >= th.closed_form_alignment_min;
    r.alignment = Some(m);
    r.networks = vec![("net_a".into(), a), ("net_b".into(), b)];
    Ok(r)
}

fn platonic_sgd(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.cfg;
    let th = &cfg.thresholds;
    let (a, trace_a) = ctx.train(&ctx.dm, &ctx.init_a()?, &ctx.tag_a, &cfg.train, 0)?;
    let (b, trace_b) = ctx.train(&ctx.dm, &ctx.init_b()?, &ctx.tag_b, &cfg.train, 1)?;
    let mut r = Report::default();
    let mut balance = 0.0_f64;
    for (net, tag, suffix) in [(&a, &ctx.tag_a, "a"), (&b, &ctx.tag_b, "b")] {
        let obj = Objective::analytic(&ctx.dm, tag)?;
        r.metric(&format!("loss_gap_{suffix}"), ctx.loss_gap(&ctx.dm, net, tag)?);
        let s = obj.entropy(net)?;
        r.metric(&format!("entropy_{suffix}"), s);
        let closed = closed_form_platonic(&ctx.dm, tag, &Architecture::of(net), None)?;
        r.metric(&format!("entropy_excess_{suffix}"), (s - obj.entropy(&closed.network)?) / s);
        balance = balance.max(theory::balance_report(net, &obj)?.max_residual());
    }
    r.metric("balance_residual", balance);
    let m = alignment(&a, &ctx.tag_a, &b, &ctx.tag_b, &ctx.probes(&ctx.dm)?)?;
    alignment_metrics(&mut r, "", &m);
    r.verdict = m.min_score() >= th.trained_alignment_min && balance <= th.balance_max;
    r.alignment = Some(m);
    r.traces = vec![("trace".into(), trace_a), ("trace_b".into(), trace_b)];
    r.networks = vec![("net_a".into(), a), ("net_b".into(), b)];
    Ok(r)
}

fn non_platonic_minima(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.cfg;
    let th = &cfg.thresholds;
    let sol = closed_form_platonic(&ctx.dm, &ctx.tag_a, &ctx.arch_a(), Some(ctx.seed(ROTATION)))?.network;
    let obj = Objective::analytic(&ctx.dm, &ctx.tag_a)?;
    let base = obj.loss(&sol)?;
    let probes = ctx.probes(&ctx.dm)?;
    let (mut hits, mut worst_delta, mut hi, mut lo) = (0usize, 0.0_f64, 0.0_f64, 1.0_f64);
    let mut first = None;
    for draw in 0..cfg.params.draws {
        let interface = 1 + draw % (sol.depth() - 1);
        let moved = theory::non_platonic_transform(&sol, interface, ctx.seed(EXTRA + draw as u64), cfg.params.gauge_magnitude)?;
        let delta = (obj.loss(&moved)? - base).abs() / base;
        let score = alignment(&moved, &ctx.tag_a, &sol, &ctx.tag_a, &probes)?.min_score();
        worst_delta = worst_delta.max(delta);
        hi = hi.max(score);
        lo = lo.min(score);
        if delta <= th.non_platonic_loss_delta_max && score < th.non_platonic_alignment_max {
            hits += 1;
        }
        first.get_or_insert(moved);
    }
    let mut r = Report::default();
    let fraction = hits as f64 / cfg.params.draws as f64;
    r.metric("draws", cfg.params.draws as f64);
    r.metric("hits", hits as f64);
    r.metric("hit_fraction", fraction);
    r.metric("max_loss_delta", worst_delta);
    r.metric("max_min_alignment", hi);
    r.metric("min_min_alignment", lo);
    r.verdict = fraction >= th.non_platonic_hit_fraction;
    if let Some(moved) = first {
        r.alignment = Some(alignment(&moved, &ctx.tag_a, &sol, &ctx.tag_a, &probes)?);
        r.networks.push(("transformed".into(), moved));
    }
    r.networks.push(("platonic".into(), sol));
    Ok(r)
}

/// `V* = Q diag Qᵀ`, `Σ_x = I`, `Σ_ε = 0.25 I`, `Z = Q diag Qᵀ` with log-spaced spectrum: every
/// input the weight-decay closed form needs commutes.
fn commuting_psd_model(n: usize, seed: u64) -> Result<DataModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = linalg::random_orthogonal(n, &mut rng);
    let v_spec: Vec<f64> = linalg::log_spaced_spectrum(n, 4.0).into_iter().map(|s| 2.0 * s).collect();
    let z_spec: Vec<f64> = linalg::log_spaced_spectrum(n, 10.0).into_iter().map(|s| s * 10f64.sqrt()).collect();
    let v = &q * Mat::from_diagonal(&Vector::from_vec(v_spec)) * q.transpose();
    let z = &q * Mat::from_diagonal(&Vector::from_vec(z_spec)) * q.transpose();
    let mut dm = DataModel::from_parts(linalg::symmetrize(&v), Mat::identity(n, n), Mat::identity(n, n) * 0.25, &["A"], seed)?;
    dm.set_view_transform("A", linalg::symmetrize(&z))?;
    Ok(dm)
}

/// Rotate layers onto `reference` by sequential orthogonal Procrustes (the gauge left free by
/// weight decay).
fn fix_gauge(weights: &[Mat], reference: &[Mat]) -> Vec<Mat> {
    let mut out = Vec::with_capacity(weights.len());
    let mut carry: Option<Mat> = None;
    for (k, (w, r)) in weights.iter().zip(reference).enumerate() {
        let w = match &carry {
            Some(o) => w * o.transpose(),
            None => w.clone(),
        };
        if k + 1 == weights.len() {
            out.push(w);
            break;
        }
        let o = linalg::procrustes_left(r, &w);
        out.push(&o * &w);
        carry = Some(o);
    }
    out
}

fn weight_decay_break(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.cfg;
    let th = &cfg.thresholds;
    let p = &cfg.params;
    let (a0, b0) = (ctx.init_a()?, ctx.init_b()?);
    let probes = ctx.probes(&ctx.dm)?;
    let (wa, trace) = ctx.train(&ctx.dm, &a0, &ctx.tag_a, &cfg.train, 0)?;
    let (wb, _) = ctx.train(&ctx.dm, &b0, &ctx.tag_b, &cfg.train, 1)?;
    let (ea, _) = ctx.train(&ctx.dm, &a0, &ctx.tag_a, &cfg.reference, 0)?;
    let (eb, _) = ctx.train(&ctx.dm, &b0, &ctx.tag_b, &cfg.reference, 1)?;
    let wd = alignment(&wa, &ctx.tag_a, &wb, &ctx.tag_b, &probes)?;
    let ent = alignment(&ea, &ctx.tag_a, &eb, &ctx.tag_b, &probes)?;
    let mut r = Report::default();
    r.metric("weight_decay", cfg.train.weight_decay);
    r.metric("loss_gap_a", ctx.loss_gap(&ctx.dm, &wa, &ctx.tag_a)?);
    alignment_metrics(&mut r, "", &wd);
    alignment_metrics(&mut r, "entropic_", &ent);
    let mut verdict = wd.min_score() <= ent.min_score() - th.weight_decay_margin;

    let (mut layer_err, mut map_err) = (0.0_f64, 0.0_f64);
    for &depth in &p.commuting_depths {
        let n = cfg.data.input_dim;
        let dm = commuting_psd_model(n, ctx.seed(EXTRA + depth as u64))?;
        let init = Architecture::identity(n, &vec![n; depth - 1], n).init(0.5, ctx.seed(EXTRA + 50 + depth as u64))?;
        let gd = TrainConfig {
            algorithm: Algorithm::FullBatchGd,
            learning_rate: p.commuting_learning_rate,
            steps: p.commuting_steps,
            weight_decay: p.commuting_weight_decay,
            record_every: p.commuting_steps.max(1),
            ..Default::default()
        };
        let (net, _) = train(&init, &dm, "A", &gd)?;
        let closed = theory::weight_decay_closed_form(&dm, "A", depth)?;
        let fixed = fix_gauge(net.weights(), &closed);
        for (w, c) in fixed.iter().zip(&closed) {
            layer_err = layer_err.max(rel_err(w, c));
        }
        let gauged = net.with_weights(fixed)?;
        let z = &dm.view("A")?.z;
        for layer in 1..depth {
            let map = gauged.hidden_map(layer, Default::default())? * z;
            map_err = map_err.max(rel_err(&map, &theory::weight_decay_hidden_map(&dm, "A", depth, layer)?));
        }
    }
    if !p.commuting_depths.is_empty() {
        r.metric("commuting_layer_error", layer_err);
        r.metric("commuting_hidden_map_error", map_err);
        verdict &= layer_err <= th.commuting_error_max && map_err <= th.commuting_error_max;
    }
    r.verdict = verdict;
    r.alignment = Some(wd);
    r.traces = vec![("trace".into(), trace)];
    r.networks = vec![("weight_decay_a".into(), wa), ("weight_decay_b".into(), wb), ("entropic_a".into(), ea), ("entropic_b".into(), eb)];
    Ok(r)
}

fn gradient_flow_break(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.cfg;
    let th = &cfg.thresholds;
    let arch = ctx.arch_a();
    let mut r = Report::default();
    let (mut nets, mut q0, mut drift, mut gap) = (Vec::new(), Vec::new(), 0.0_f64, 0.0_f64);
    for (k, &scale) in cfg.params.init_scales.iter().enumerate() {
        let init = arch.init(scale, ctx.seed(INIT_A + EXTRA * k as u64))?;
        q0.push(theory::conserved_quantities(&init).first().map_or(0.0, |q| q.norm()));
        let (net, trace) = ctx.train(&ctx.dm, &init, &ctx.tag_a, &cfg.train, k as u64)?;
        drift = drift.max(trace.max_relative_drift(1e-300));
        gap = gap.max(ctx.loss_gap(&ctx.dm, &net, &ctx.tag_a)?);
        r.traces.push((if k == 0 { "trace".into() } else { format!("trace_{k}") }, trace));
        nets.push(net);
    }
    let init_gap = q0.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - q0.iter().cloned().fold(f64::INFINITY, f64::min);
    let m = alignment(&nets[0], &ctx.tag_a, &nets[1], &ctx.tag_a, &ctx.probes(&ctx.dm)?)?;
    r.metric("max_relative_drift", drift);
    r.metric("initial_q_gap", init_gap);
    r.metric("loss_gap", gap);
    alignment_metrics(&mut r, "", &m);
    r.verdict = drift <= th.drift_max && init_gap >= th.init_gap_min && m.min_score() < th.gradient_flow_alignment_max;
    r.alignment = Some(m);
    r.networks = nets.into_iter().enumerate().map(|(k, n)| (format!("net_{k}"), n)).collect();
    Ok(r)
}

fn label_transform_break(ctx: &Ctx) -> Result<Report> {
    let th = &ctx.cfg.thresholds;
    let (arch_a, arch_b) = (ctx.arch_a(), ctx.arch_b());
    let probes = ctx.probes(&ctx.dm)?;
    let clean_a = closed_form_platonic(&ctx.dm, &ctx.tag_a, &arch_a, None)?.network;
    let clean_b = closed_form_platonic(&ctx.dm, &ctx.tag_b, &arch_b, None)?.network;
    let view_only = alignment(&clean_a, &ctx.tag_a, &clean_b, &ctx.tag_b, &probes)?;
    let mut dm = ctx.dm.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed(EXTRA));
    let m = dm.output_dim;
    dm.set_label_transform(&ctx.tag_a, linalg::random_spd(m, ctx.cfg.params.label_cond, 1.0, &mut rng))?;
    dm.set_label_transform(&ctx.tag_b, linalg::random_spd(m, ctx.cfg.params.label_cond, 1.0, &mut rng))?;
    let a = closed_form_platonic(&dm, &ctx.tag_a, &arch_a, None)?.network;
    let b = closed_form_platonic(&dm, &ctx.tag_b, &arch_b, None)?.network;
    let labelled = alignment(&a, &ctx.tag_a, &b, &ctx.tag_b, &probes)?;
    let mut r = Report::default();
    alignment_metrics(&mut r, "view_only_", &view_only);
    alignment_metrics(&mut r, "", &labelled);
    r.verdict = view_only.min_score() >= th.closed_form_alignment_min && labelled.min_score() < th.label_alignment_max;
    r.alignment = Some(labelled);
    r.networks = vec![("net_a".into(), a), ("net_b".into(), b)];
    Ok(r)
}

fn saddle_break(ctx: &Ctx) -> Result<Report> {
    let th = &ctx.cfg.thresholds;
    let rank = ctx.cfg.params.saddle_rank;
    let saddle = theory::low_rank_saddle(&ctx.dm, &ctx.tag_a, &ctx.arch_a(), rank, Some(ctx.seed(ROTATION)))?.network;
    let full = closed_form_platonic(&ctx.dm, &ctx.tag_b, &ctx.arch_b(), Some(ctx.seed(ROTATION + 1)))?.network;
    let m = alignment(&saddle, &ctx.tag_a, &full, &ctx.tag_b, &ctx.probes(&ctx.dm)?)?;
    let mut r = Report::default();
    r.metric("saddle_rank", rank as f64);
    r.metric("saddle_loss_gap", ctx.loss_gap(&ctx.dm, &saddle, &ctx.tag_a)?);
    alignment_metrics(&mut r, "", &m);
    r.verdict = m.min_score() > 0.0 && m.max_score() < th.saddle_alignment_max;
    r.alignment = Some(m);
    r.networks = vec![("saddle".into(), saddle), ("full".into(), full)];
    Ok(r)
}

fn heterogeneity_break(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.cfg;
    let mut dm = ctx.dm.clone();
    let n = dm.input_dim;
    for tag in [&ctx.tag_a, &ctx.tag_b] {
        dm.set_heterogeneity(tag, Some(Mat::identity(n, n) * cfg.params.heterogeneity_scale))?;
    }
    let (a, trace_a) = ctx.train(&dm, &ctx.init_a()?, &ctx.tag_a, &cfg.train, 0)?;
    let (b, trace_b) = ctx.train(&dm, &ctx.init_b()?, &ctx.tag_b, &cfg.train, 1)?;
    // probe on the clean views so the comparison measures the learned maps themselves
    let m = alignment(&a, &ctx.tag_a, &b, &ctx.tag_b, &ctx.probes(&ctx.dm)?)?;
    let mut r = Report::default();
    r.metric("loss_gap_a", ctx.loss_gap(&dm, &a, &ctx.tag_a)?);
    r.metric("loss_gap_b", ctx.loss_gap(&dm, &b, &ctx.tag_b)?);
    alignment_metrics(&mut r, "", &m);
    r.verdict = m.min_score() < cfg.thresholds.heterogeneity_alignment_max;
    r.alignment = Some(m);
    r.traces = vec![("trace".into(), trace_a), ("trace_b".into(), trace_b)];
    r.networks = vec![("net_a".into(), a), ("net_b".into(), b)];
    Ok(r)
}

fn progressive_sharpening(ctx: &Ctx) -> Result<Report> {
    let cfg = ctx.cfg;
    let obj = Objective::analytic(&ctx.dm, &ctx.tag_a)?;
    let sharp = |net: &EdlnNetwork| -> Result<f64> { Ok(metrics::sharpness(net, &obj, 1e-8, 5000)?.top_eigenvalue) };
    let (fitted, warmup) = ctx.train(&ctx.dm, &ctx.init_a()?, &ctx.tag_a, &cfg.reference, 0)?;
    let (end, trace) = ctx.train(&ctx.dm, &fitted, &ctx.tag_a, &cfg.train, 0)?;
    let last_step = trace.last().map_or(0, |row| row.step);
    let target = (cfg.params.early_fraction * last_step as f64).round() as usize;
    let early = trace
        .checkpoints
        .iter()
        .min_by_key(|(step, _)| step.abs_diff(target))
        .map(|(_, net)| net.clone())
        .ok_or_else(|| EdlnError::InvalidConfig("progressive_sharpening needs train.checkpoint_every > 0".into()))?;
    let platonic = closed_form_platonic(&ctx.dm, &ctx.tag_a, &ctx.arch_a(), None)?.network;
    let (s_fit, s_early, s_end, s_plat) = (sharp(&fitted)?, sharp(&early)?, sharp(&end)?, sharp(&platonic)?);
    let mut r = Report::default();
    r.metric("sharpness_fitted", s_fit);
    r.metric("sharpness_early", s_early);
    r.metric("sharpness_end", s_end);
    r.metric("sharpness_platonic", s_plat);
    r.metric("sharpening_ratio", s_end / s_early);
    r.metric("loss_gap", ctx.loss_gap(&ctx.dm, &end, &ctx.tag_a)?);
    r.verdict = s_end / s_early > cfg.thresholds.sharpening_ratio_min;
    r.traces = vec![("trace".into(), trace), ("trace_fit".into(), warmup)];
    r.networks = vec![("fitted".into(), fitted), ("end".into(), end), ("platonic".into(), platonic)];
    Ok(r)
}

fn invariant_suite(cfg: &ScenarioConfig) -> Result<Report> {
    let checks = invariants::invariant_checks(cfg)?;
    let mut r = Report { verdict: true, ..Default::default() };
    for c in checks {
        r.metric(&c.name, c.value);
        r.metric(&format!("{}_pass", c.name), f64::from(u8::from(c.pass)));
        r.verdict &= c.pass;
    }
    Ok(r)
}
