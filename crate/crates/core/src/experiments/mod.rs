//! Seeded, scripted scenarios with machine-readable artifacts.
//!
//! A run writes `<outdir>/<scenario>/<config_hash>/` containing `config.snapshot` (the effective
//! TOML config), `summary.csv`, and whichever of `trace*.csv`, `alignment.csv`, `networks/` and
//! `checkpoints/` the scenario produces.

mod invariants;
mod scenarios;
mod sweep;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DataSpec;
use crate::error::{EdlnError, Result};
use crate::io::{fmt_f64, save_network};
use crate::metrics::AlignmentMatrix;
use crate::network::EdlnNetwork;
use crate::theory::Architecture;
use crate::trainer::{Algorithm, TrainConfig, TrainTrace};

pub use invariants::{invariant_checks, InvariantCheck};
pub use sweep::{parse_axis, sweep, Axis, SweepReport, SweepRun};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    PlatonicClosedForm,
    PlatonicSgd,
    NonPlatonicMinima,
    WeightDecayBreak,
    GradientFlowBreak,
    LabelTransformBreak,
    SaddleBreak,
    HeterogeneityBreak,
    ProgressiveSharpening,
    InvariantSuite,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 10] = [
        ScenarioKind::PlatonicClosedForm,
        ScenarioKind::PlatonicSgd,
        ScenarioKind::NonPlatonicMinima,
        ScenarioKind::WeightDecayBreak,
        ScenarioKind::GradientFlowBreak,
        ScenarioKind::LabelTransformBreak,
        ScenarioKind::SaddleBreak,
        ScenarioKind::HeterogeneityBreak,
        ScenarioKind::ProgressiveSharpening,
        ScenarioKind::InvariantSuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::PlatonicClosedForm => "platonic_closed_form",
            ScenarioKind::PlatonicSgd => "platonic_sgd",
            ScenarioKind::NonPlatonicMinima => "non_platonic_minima",
            ScenarioKind::WeightDecayBreak => "weight_decay_break",
            ScenarioKind::GradientFlowBreak => "gradient_flow_break",
            ScenarioKind::LabelTransformBreak => "label_transform_break",
            ScenarioKind::SaddleBreak => "saddle_break",
            ScenarioKind::HeterogeneityBreak => "heterogeneity_break",
            ScenarioKind::ProgressiveSharpening => "progressive_sharpening",
            ScenarioKind::InvariantSuite => "invariant_suite",
        }
    }

    /// One-line statement of what the scenario checks, written into the summary header.
    pub fn claim(self) -> &'static str {
        match self {
            ScenarioKind::PlatonicClosedForm => "closed-form entropic minima of two different networks align at every layer pair",
            ScenarioKind::PlatonicSgd => "entropic training of two different networks on different views reaches aligned representations",
            ScenarioKind::NonPlatonicMinima => "gauge-transformed global minima keep the loss but lose alignment",
            ScenarioKind::WeightDecayBreak => "weight decay selects data-dependent, non-aligned minima",
            ScenarioKind::GradientFlowBreak => "gradient flow conserves W_{i+1}ᵀW_{i+1} − W_iW_iᵀ and keeps its initialization dependence",
            ScenarioKind::LabelTransformBreak => "different label transforms per view break alignment",
            ScenarioKind::SaddleBreak => "low-rank saddles do not align with the full-rank minimum",
            ScenarioKind::HeterogeneityBreak => "independent per-view feature noise breaks alignment",
            ScenarioKind::ProgressiveSharpening => "sharpness along the entropic path towards the aligned solution",
            ScenarioKind::InvariantSuite => "numerical identities of the model, objective, symmetries and metrics",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = EdlnError;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| EdlnError::InvalidConfig(format!("unknown scenario `{s}`")))
    }
}

/// One network of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSpec {
    /// Hidden widths; depth is `hidden.len() + 1`.
    pub hidden: Vec<usize>,
    /// Use identity embeddings instead of random invertible ones.
    pub identity_embeddings: bool,
    /// Condition number of the random embeddings.
    pub embedding_cond: f64,
    pub init_scale: f64,
}

impl Default for NetSpec {
    fn default() -> Self {
        Self { hidden: vec![6], identity_embeddings: false, embedding_cond: 10.0, init_scale: 1.0 }
    }
}

impl NetSpec {
    pub fn architecture(&self, input_dim: usize, output_dim: usize, seed: u64) -> Architecture {
        if self.identity_embeddings {
            Architecture::identity(input_dim, &self.hidden, output_dim)
        } else {
            Architecture::random(input_dim, &self.hidden, output_dim, self.embedding_cond, seed)
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(EdlnError::InvalidConfig(format!("{what}.hidden widths must be positive")));
        }
        if !(self.embedding_cond >= 1.0) || !(self.init_scale >= 0.0) {
            return Err(EdlnError::InvalidConfig(format!("{what}: embedding_cond must be >= 1 and init_scale >= 0")));
        }
        Ok(())
    }
}

/// Scenario-specific knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    /// Gauge draws for `non_platonic_minima`.
    pub draws: usize,
    /// Magnitude of the random GL gauge for `non_platonic_minima`.
    pub gauge_magnitude: f64,
    /// Initialization scales compared by `gradient_flow_break`.
    pub init_scales: Vec<f64>,
    /// Condition number of the random SPD label transforms.
    pub label_cond: f64,
    pub saddle_rank: usize,
    /// Per-view feature-noise covariance is `heterogeneity_scale · I`.
    pub heterogeneity_scale: f64,
    /// Depths of the commuting-case weight-decay check (empty skips it).
    pub commuting_depths: Vec<usize>,
    pub commuting_learning_rate: f64,
    pub commuting_steps: usize,
    pub commuting_weight_decay: f64,
    /// Where in the entropic phase the early sharpness is read (fraction of its length).
    pub early_fraction: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            draws: 20,
            gauge_magnitude: 3.0,
            init_scales: vec![0.1, 1.5],
            label_cond: 5.0,
            saddle_rank: 2,
            heterogeneity_scale: 0.5,
            commuting_depths: vec![2],
            commuting_learning_rate: 0.02,
            commuting_steps: 500_000,
            commuting_weight_decay: 1e-3,
            early_fraction: 0.1,
        }
    }
}

/// Verdict thresholds. Defaults follow the acceptance criteria.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Relative loss gap above the noise floor counted as a global minimum.
    pub loss_gap_max: f64,
    pub closed_form_alignment_min: f64,
    pub trained_alignment_min: f64,
    pub balance_max: f64,
    pub non_platonic_loss_delta_max: f64,
    pub non_platonic_alignment_max: f64,
    pub non_platonic_hit_fraction: f64,
    /// Relative drift of the conserved quantities under gradient flow.
    pub drift_max: f64,
    /// Minimum difference of ‖Q(0)‖ between the compared initializations.
    pub init_gap_min: f64,
    pub gradient_flow_alignment_max: f64,
    /// Weight-decay alignment must sit this far below the entropic one.
    pub weight_decay_margin: f64,
    pub commuting_error_max: f64,
    pub label_alignment_max: f64,
    pub saddle_alignment_max: f64,
    pub heterogeneity_alignment_max: f64,
    /// `sharpness_end / sharpness_early` must exceed this.
    pub sharpening_ratio_min: f64,
    pub gradient_check_max: f64,
    pub monte_carlo_max: f64,
    pub sharpness_oracle_max: f64,
    pub identity_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            loss_gap_max: 1e-10,
            closed_form_alignment_min: 1.0 - 1e-8,
            trained_alignment_min: 0.99,
            balance_max: 1e-3,
            non_platonic_loss_delta_max: 1e-10,
            non_platonic_alignment_max: 0.95,
            non_platonic_hit_fraction: 0.9,
            drift_max: 1e-6,
            init_gap_min: 1.0,
            gradient_flow_alignment_max: 0.99,
            weight_decay_margin: 0.05,
            commuting_error_max: 0.05,
            label_alignment_max: 1.0 - 1e-3,
            saddle_alignment_max: 1.0 - 1e-6,
            heterogeneity_alignment_max: 0.95,
            sharpening_ratio_min: 1.0,
            gradient_check_max: 1e-6,
            monte_carlo_max: 0.03,
            sharpness_oracle_max: 1e-3,
            identity_max: 1e-8,
        }
    }
}

/// Full description of one scenario run. Every key is optional in the TOML file; missing keys
/// take the scenario's defaults (see [`ScenarioConfig::defaults`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    /// Base seed; the data, embedding, initialization, training and probe seeds derive from it.
    pub seed: u64,
    pub outdir: PathBuf,
    /// Probe inputs for alignment.
    pub probes: usize,
    /// Concurrent runs in a sweep (0 = one per core).
    pub parallelism: usize,
    pub data: DataSpec,
    pub net_a: NetSpec,
    pub net_b: NetSpec,
    /// Main training procedure.
    pub train: TrainConfig,
    /// Secondary procedure: the entropic reference for `weight_decay_break`, the fitting phase
    /// for `progressive_sharpening`.
    pub reference: TrainConfig,
    pub params: ScenarioParams,
    pub thresholds: Thresholds,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::defaults(ScenarioKind::PlatonicClosedForm)
    }
}

fn constrained(steps: usize, record_every: usize) -> TrainConfig {
    TrainConfig {
        algorithm: Algorithm::EntropicConstrained,
        learning_rate: 1e-2,
        steps,
        record_every,
        stationarity_tol: 1e-9,
        ..Default::default()
    }
}

impl ScenarioConfig {
    /// Defaults for `kind`.
    pub fn defaults(kind: ScenarioKind) -> Self {
        let mut cfg = Self {
            scenario: kind,
            seed: 0,
            outdir: PathBuf::from("runs"),
            probes: 64,
            parallelism: 0,
            data: DataSpec::default(),
            net_a: NetSpec::default(),
            net_b: NetSpec { hidden: vec![10, 10], ..NetSpec::default() },
            train: constrained(5000, 100),
            reference: constrained(5000, 100),
            params: ScenarioParams::default(),
            thresholds: Thresholds::default(),
        };
        match kind {
            ScenarioKind::PlatonicSgd | ScenarioKind::HeterogeneityBreak => {
                cfg.net_b.hidden = vec![8, 7];
            }
            ScenarioKind::NonPlatonicMinima => {
                cfg.net_a.hidden = vec![8, 8];
            }
            ScenarioKind::WeightDecayBreak => {
                cfg.net_b.hidden = vec![6];
                cfg.train = TrainConfig {
                    algorithm: Algorithm::Sgd,
                    learning_rate: 2e-3,
                    batch_size: 32,
                    steps: 100_000,
                    weight_decay: 1e-2,
                    record_every: 10_000,
                    ..Default::default()
                };
            }
            ScenarioKind::GradientFlowBreak => {
                cfg.net_a.embedding_cond = 3.0;
                cfg.train = TrainConfig {
                    algorithm: Algorithm::GradientFlow,
                    learning_rate: 5e-4,
                    steps: 400_000,
                    record_every: 4000,
                    ..Default::default()
                };
            }
            ScenarioKind::SaddleBreak => {
                cfg.net_b.hidden = vec![8, 6];
            }
            ScenarioKind::ProgressiveSharpening => {
                cfg.data.cond_z = 100.0;
                cfg.net_a.init_scale = 0.05;
                cfg.train = TrainConfig { checkpoint_every: 1, ..constrained(5000, 50) };
                cfg.reference = TrainConfig {
                    algorithm: Algorithm::FullBatchGd,
                    learning_rate: 1e-3,
                    steps: 20_000,
                    record_every: 1000,
                    ..Default::default()
                };
            }
            ScenarioKind::PlatonicClosedForm | ScenarioKind::LabelTransformBreak | ScenarioKind::InvariantSuite => {}
        }
        cfg.derive_seeds();
        cfg
    }

    /// Parse a TOML config. `scenario` overrides the file's `scenario` key; with neither, the
    /// scenario is `platonic_closed_form`. Per-section `seed` keys are accepted only when they
    /// equal the values derived from the top-level `seed`.
    pub fn from_toml_str(text: &str, scenario: Option<ScenarioKind>) -> Result<Self> {
        let user: toml::Table = toml::from_str(text)?;
        let section_seeds: Vec<(&str, toml::Value)> = ["data", "train", "reference"]
            .into_iter()
            .filter_map(|s| user.get(s).and_then(|v| v.get("seed")).map(|v| (s, v.clone())))
            .collect();
        let kind = match (scenario, user.get("scenario")) {
            (Some(k), _) => k,
            (None, Some(v)) => v
                .as_str()
                .ok_or_else(|| EdlnError::InvalidConfig("`scenario` must be a string".into()))?
                .parse()?,
            (None, None) => ScenarioKind::PlatonicClosedForm,
        };
        let mut table = Self::defaults(kind).to_table()?;
        merge(&mut table, user);
        table.insert("scenario".into(), toml::Value::String(kind.name().into()));
        let cfg = Self::from_table(table)?;
        // snapshots spell out the derived seeds; anything else would be silently replaced
        let derived = cfg.to_table()?;
        for (section, value) in section_seeds {
            if derived[section].get("seed") != Some(&value) {
                return Err(EdlnError::InvalidConfig(format!(
                    "`{section}.seed` is derived from the top-level `seed`; set that instead"
                )));
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path, scenario: Option<ScenarioKind>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text, scenario)
    }

    pub(crate) fn from_table(table: toml::Table) -> Result<Self> {
        let mut cfg: Self = table.try_into()?;
        cfg.derive_seeds();
        Ok(cfg)
    }

    pub(crate) fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| EdlnError::InvalidConfig(format!("config serialization: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| EdlnError::InvalidConfig(format!("config serialization: {e}")))
    }

    /// Replace the base seed and everything derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.derive_seeds();
        self
    }

    fn derive_seeds(&mut self) {
        self.data.seed = self.derived_seed(0);
        self.train.seed = self.derived_seed(1);
        self.reference.seed = self.derived_seed(2);
    }

    /// Seed for a named role within this run.
    pub(crate) fn derived_seed(&self, role: u64) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(role)
    }

    /// First 16 hex digits of the SHA-256 of the config, excluding where and how it is run.
    pub fn hash(&self) -> Result<String> {
        let mut table = self.to_table()?;
        table.remove("outdir");
        table.remove("parallelism");
        let text = toml::to_string(&table).map_err(|e| EdlnError::InvalidConfig(format!("config serialization: {e}")))?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(hex::encode(digest)[..16].to_string())
    }

    pub fn run_dir(&self) -> Result<PathBuf> {
        Ok(self.outdir.join(self.scenario.name()).join(self.hash()?))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.input_dim == 0 || d.output_dim == 0 || d.rank > d.input_dim.min(d.output_dim) {
            return Err(EdlnError::InvalidConfig(format!(
                "data: rank {} must not exceed min(input_dim, output_dim) = {}",
                d.rank,
                d.input_dim.min(d.output_dim)
            )));
        }
        self.net_a.validate("net_a")?;
        self.net_b.validate("net_b")?;
        self.train.validate()?;
        self.reference.validate()?;
        if self.scenario != ScenarioKind::InvariantSuite {
            if d.tags.len() < 2 {
                return Err(EdlnError::InvalidConfig("data.tags needs two view tags".into()));
            }
            if self.probes < 10 {
                return Err(EdlnError::InvalidConfig("probes must be at least 10".into()));
            }
        }
        let p = &self.params;
        match self.scenario {
            ScenarioKind::NonPlatonicMinima if self.net_a.hidden.is_empty() || p.draws == 0 => {
                Err(EdlnError::InvalidConfig("non_platonic_minima needs a hidden layer in net_a and draws > 0".into()))
            }
            ScenarioKind::GradientFlowBreak if p.init_scales.len() < 2 => {
                Err(EdlnError::InvalidConfig("gradient_flow_break needs at least two init_scales".into()))
            }
            ScenarioKind::SaddleBreak if p.saddle_rank == 0 || p.saddle_rank > d.rank => Err(EdlnError::InvalidConfig(format!(
                "saddle_rank must be in 1..={}",
                d.rank
            ))),
            ScenarioKind::WeightDecayBreak if p.commuting_depths.contains(&0) => {
                Err(EdlnError::InvalidConfig("commuting_depths must be positive".into()))
            }
            ScenarioKind::ProgressiveSharpening if !(p.early_fraction > 0.0 && p.early_fraction < 1.0) => {
                Err(EdlnError::InvalidConfig("early_fraction must be in (0, 1)".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Recursive table merge: values in `over` replace those in `base`, sub-tables merge.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub scenario: ScenarioKind,
    pub config_hash: String,
    pub dir: PathBuf,
    pub summary: Vec<Metric>,
    pub artifacts: Vec<PathBuf>,
    pub verdict: bool,
}

impl ScenarioResult {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.summary.iter().find(|m| m.name == name).map(|m| m.value)
    }
}

/// What a scenario body hands back for export.
#[derive(Default)]
pub(crate) struct Report {
    summary: Vec<Metric>,
    verdict: bool,
    traces: Vec<(String, TrainTrace)>,
    alignment: Option<AlignmentMatrix>,
    networks: Vec<(String, EdlnNetwork)>,
}

impl Report {
    pub(crate) fn metric(&mut self, name: &str, value: f64) {
        self.summary.push(Metric { name: name.into(), value });
    }
}

/// Run one scenario end to end and write its artifacts.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let wrap = |e: EdlnError| EdlnError::Scenario { scenario: cfg.scenario.name().into(), source: Box::new(e) };
    cfg.validate().map_err(wrap)?;
    let hash = cfg.hash()?;
    let dir = cfg.run_dir()?;
    fs::create_dir_all(&dir).map_err(|e| wrap(e.into()))?;
    let snapshot = dir.join("config.snapshot");
    fs::write(&snapshot, cfg.to_toml()?).map_err(|e| wrap(e.into()))?;
    let report = scenarios::run(cfg).map_err(wrap)?;
    let mut artifacts = vec![snapshot];
    export(cfg, &hash, &dir, &report, &mut artifacts).map_err(wrap)?;
    Ok(ScenarioResult {
        scenario: cfg.scenario,
        config_hash: hash,
        dir,
        summary: report.summary,
        artifacts,
        verdict: report.verdict,
    })
}

fn export(cfg: &ScenarioConfig, hash: &str, dir: &Path, report: &Report, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    for (stem, trace) in &report.traces {
        let path = dir.join(format!("{stem}.csv"));
        trace.write_csv(&path)?;
        artifacts.push(path);
        if !trace.checkpoints.is_empty() {
            artifacts.extend(trace.write_checkpoints(&dir.join("checkpoints").join(stem))?);
        }
    }
    if let Some(m) = &report.alignment {
        let path = dir.join("alignment.csv");
        m.write_csv(&path)?;
        artifacts.push(path);
    }
    for (name, net) in &report.networks {
        let path = dir.join("networks").join(format!("{name}.net"));
        save_network(&path, net)?;
        artifacts.push(path);
    }
    let path = dir.join("summary.csv");
    write_summary(&path, cfg, hash, &report.summary, report.verdict)?;
    artifacts.push(path);
    Ok(())
}

/// `summary.csv`: `#` header lines (scenario, claim, config hash, version), then `metric,value`
/// rows ending with `verdict` (1 pass, 0 fail).
fn write_summary(path: &Path, cfg: &ScenarioConfig, hash: &str, summary: &[Metric], verdict: bool) -> Result<()> {
    let mut text = format!(
        "# scenario: {}\n# claim: {}\n# config_hash: {hash}\n# edln_core_version: {VERSION}\nmetric,value\n",
        cfg.scenario,
        cfg.scenario.claim()
    );
    for m in summary {
        text.push_str(&format!("{},{}\n", m.name, fmt_f64(m.value)));
    }
    text.push_str(&format!("verdict,{}\n", u8::from(verdict)));
    fs::write(path, text)?;
    Ok(())
}

/// Parse a `summary.csv` back into metrics and verdict.
pub fn read_summary(path: &Path) -> Result<(Vec<Metric>, bool)> {
    let text = fs::read_to_string(path)?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let mut metrics = Vec::new();
    let mut verdict = None;
    for rec in reader.records() {
        let rec = rec?;
        let (name, value) = (&rec[0], &rec[1]);
        let parsed: f64 = value.parse().map_err(|_| EdlnError::InvalidConfig(format!("bad summary value `{value}`")))?;
        if name == "verdict" {
            verdict = Some(parsed == 1.0);
        } else {
            metrics.push(Metric { name: name.into(), value: parsed });
        }
    }
    let verdict = verdict.ok_or_else(|| EdlnError::InvalidConfig("summary has no verdict row".into()))?;
    Ok((metrics, verdict))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_scenario_defaults() {
        let cfg = ScenarioConfig::from_toml_str("", Some(ScenarioKind::GradientFlowBreak)).unwrap();
        assert_eq!(cfg, ScenarioConfig::defaults(ScenarioKind::GradientFlowBreak));
        assert_eq!(cfg.train.algorithm, Algorithm::GradientFlow);
    }

    #[test]
    fn partial_sections_merge_over_defaults() {
        let cfg = ScenarioConfig::from_toml_str(
            "scenario = \"weight_decay_break\"\nseed = 4\n[train]\nweight_decay = 0.001\n[net_a]\nhidden = [7, 7]\n",
            None,
        )
        .unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::WeightDecayBreak);
        assert_eq!(cfg.train.weight_decay, 1e-3);
        assert_eq!(cfg.train.steps, 100_000);
        assert_eq!(cfg.net_a.hidden, vec![7, 7]);
        assert_eq!(cfg.data.seed, cfg.derived_seed(0));
    }

    #[test]
    fn unknown_keys_and_section_seeds_are_rejected() {
        assert!(ScenarioConfig::from_toml_str("[train]\nlearning_rat = 1.0\n", None).is_err());
        assert!(ScenarioConfig::from_toml_str("[data]\nseed = 3\n", None).is_err());
        assert!(ScenarioConfig::from_toml_str("scenario = \"nope\"\n", None).is_err());
    }

    #[test]
    fn snapshot_round_trips_and_hash_ignores_location() {
        let cfg = ScenarioConfig::defaults(ScenarioKind::SaddleBreak).with_seed(9);
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml().unwrap(), None).unwrap();
        assert_eq!(back, cfg);
        let moved = ScenarioConfig { outdir: "elsewhere".into(), parallelism: 3, ..cfg.clone() };
        assert_eq!(moved.hash().unwrap(), cfg.hash().unwrap());
        assert_ne!(cfg.clone().with_seed(10).hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn scenario_names_parse() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
        }
    }

    #[test]
    fn validation_catches_inconsistent_settings() {
        let mut cfg = ScenarioConfig::defaults(ScenarioKind::SaddleBreak);
        cfg.params.saddle_rank = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::defaults(ScenarioKind::GradientFlowBreak);
        cfg.params.init_scales = vec![1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::defaults(ScenarioKind::PlatonicClosedForm);
        cfg.data.rank = 9;
        assert!(cfg.validate().is_err());
    }
}
