//! Synthetic ground truth `y = V* x + ε` and paired multi-view datasets.
//!
//! Each network is identified by a view tag. A tag carries an input view transform `Z`, a
//! symmetric label transform `Φ` (identity by default) and optionally an independent feature-noise
//! covariance added to its view.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Cholesky;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EdlnError, Result};
use crate::io::{fmt_f64, rows, rows_opt};
use crate::linalg::{self, gaussian_matrix, Mat};

pub const DEFAULT_TAGS: [&str; 2] = ["A", "B"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    /// Input view transform `Z` (input_dim × input_dim).
    #[serde(with = "rows")]
    pub z: Mat,
    /// Symmetric invertible label transform `Φ` (output_dim × output_dim).
    #[serde(with = "rows")]
    pub phi: Mat,
    /// Covariance of independent per-view feature noise, if any.
    #[serde(with = "rows_opt", default)]
    pub heterogeneity: Option<Mat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataModel {
    pub input_dim: usize,
    pub output_dim: usize,
    #[serde(with = "rows")]
    pub v_star: Mat,
    #[serde(with = "rows")]
    pub sigma_x: Mat,
    #[serde(with = "rows")]
    pub sigma_eps: Mat,
    pub views: BTreeMap<String, ViewSpec>,
    pub seed: u64,
}

/// Generation parameters for [`DataModel::generate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub rank: usize,
    pub cond_x: f64,
    pub cond_z: f64,
    pub cond_eps: f64,
    /// Largest eigenvalue of Σ_ε.
    pub noise_scale: f64,
    /// Largest eigenvalue of Σ_x.
    pub input_scale: f64,
    pub tags: Vec<String>,
    pub seed: u64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            input_dim: 8,
            output_dim: 6,
            rank: 4,
            cond_x: 10.0,
            cond_z: 10.0,
            cond_eps: 10.0,
            noise_scale: 0.5,
            input_scale: 1.0,
            tags: DEFAULT_TAGS.iter().map(|s| s.to_string()).collect(),
            seed: 0,
        }
    }
}

/// Population second moments seen by one view: input moment, effective target, residual covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewMoments {
    pub sigma_u: Mat,
    pub target: Mat,
    pub sigma_e: Mat,
}

impl ViewMoments {
    pub fn new(sigma_u: Mat, target: Mat, sigma_e: Mat) -> Self {
        Self { sigma_u, target, sigma_e }
    }

    pub fn input_dim(&self) -> usize {
        self.sigma_u.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.sigma_e.nrows()
    }

    /// Minimum achievable expected loss, `Tr Σ_ε^view`.
    pub fn noise_floor(&self) -> f64 {
        self.sigma_e.trace()
    }
}

/// `n` paired samples: columns of every matrix are samples.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedBatch {
    pub x_base: Mat,
    pub eps: Mat,
    pub views: BTreeMap<String, Mat>,
    pub labels: BTreeMap<String, Mat>,
}

impl PairedBatch {
    pub fn len(&self) -> usize {
        self.x_base.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn view(&self, tag: &str) -> Result<&Mat> {
        self.views.get(tag).ok_or_else(|| EdlnError::UnknownTag(tag.into()))
    }

    pub fn label(&self, tag: &str) -> Result<&Mat> {
        self.labels.get(tag).ok_or_else(|| EdlnError::UnknownTag(tag.into()))
    }

    /// One row per sample: base features, then each tag's view, then each tag's label.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.x_base.nrows()).map(|k| format!("x_{k}")).collect();
        for (tag, v) in &self.views {
            header.extend((0..v.nrows()).map(|k| format!("view_{tag}_{k}")));
        }
        for (tag, l) in &self.labels {
            header.extend((0..l.nrows()).map(|k| format!("label_{tag}_{k}")));
        }
        w.write_record(&header)?;
        for s in 0..self.len() {
            let mut rec: Vec<String> = self.x_base.column(s).iter().map(|&v| fmt_f64(v)).collect();
            for v in self.views.values() {
                rec.extend(v.column(s).iter().map(|&x| fmt_f64(x)));
            }
            for l in self.labels.values() {
                rec.extend(l.column(s).iter().map(|&x| fmt_f64(x)));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shorthand for [`DataModel::generate`] with default noise settings and tags `A`, `B`.
pub fn make_data_model(
    input_dim: usize,
    output_dim: usize,
    rank_v: usize,
    cond_x: f64,
    cond_z: f64,
    seed: u64,
) -> Result<DataModel> {
    DataModel::generate(&DataSpec {
        input_dim,
        output_dim,
        rank: rank_v,
        cond_x,
        cond_z,
        seed,
        ..DataSpec::default()
    })
}

fn check_spd(m: &Mat, what: &str) -> Result<()> {
    if !m.is_square() || linalg::rel_err(m, &m.transpose()) > 1e-12 {
        return Err(EdlnError::InvalidConfig(format!("{what} must be symmetric")));
    }
    let hi = linalg::max_sym_eigenvalue(m);
    if hi <= 0.0 || linalg::min_sym_eigenvalue(m) <= linalg::INVERTIBILITY_TOL * hi {
        return Err(EdlnError::InvalidConfig(format!("{what} must be positive definite")));
    }
    Ok(())
}

impl DataModel {
    pub fn generate(spec: &DataSpec) -> Result<Self> {
        let (n, m) = (spec.input_dim, spec.output_dim);
        if n == 0 || m == 0 {
            return Err(EdlnError::InvalidConfig("dimensions must be positive".into()));
        }
        if spec.rank > n.min(m) {
            return Err(EdlnError::InvalidConfig(format!(
                "rank {} exceeds min(input_dim, output_dim) = {}",
                spec.rank,
                n.min(m)
            )));
        }
        for (name, c) in [("cond_x", spec.cond_x), ("cond_z", spec.cond_z), ("cond_eps", spec.cond_eps)] {
            if !(c >= 1.0) {
                return Err(EdlnError::InvalidConfig(format!("{name} must be >= 1, got {c}")));
            }
        }
        if spec.tags.is_empty() {
            return Err(EdlnError::InvalidConfig("at least one view tag is required".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let g = gaussian_matrix(m, n, &mut rng) / (n as f64).sqrt();
        let svd = linalg::sorted_svd(&g);
        let mut v_star = Mat::zeros(m, n);
        for k in 0..spec.rank {
            v_star += svd.u.column(k) * svd.v.column(k).transpose() * svd.s[k];
        }
        let sigma_x = linalg::random_spd(n, spec.cond_x, spec.input_scale, &mut rng);
        let sigma_eps = linalg::random_spd(m, spec.cond_eps, spec.noise_scale, &mut rng);
        let mut views = BTreeMap::new();
        for tag in &spec.tags {
            let z = linalg::random_invertible(n, spec.cond_z, &mut rng);
            views.insert(tag.clone(), ViewSpec { z, phi: Mat::identity(m, m), heterogeneity: None });
        }
        Ok(Self { input_dim: n, output_dim: m, v_star, sigma_x, sigma_eps, views, seed: spec.seed })
    }

    /// Construct from explicit matrices, all views identity.
    pub fn from_parts(v_star: Mat, sigma_x: Mat, sigma_eps: Mat, tags: &[&str], seed: u64) -> Result<Self> {
        let (m, n) = (v_star.nrows(), v_star.ncols());
        if sigma_x.nrows() != n || sigma_eps.nrows() != m {
            return Err(EdlnError::shape("data model moments", format!("{n} / {m}"), format!("{} / {}", sigma_x.nrows(), sigma_eps.nrows())));
        }
        check_spd(&sigma_x, "Σ_x")?;
        check_spd(&sigma_eps, "Σ_ε")?;
        let views = tags
            .iter()
            .map(|t| (t.to_string(), ViewSpec { z: Mat::identity(n, n), phi: Mat::identity(m, m), heterogeneity: None }))
            .collect();
        Ok(Self { input_dim: n, output_dim: m, v_star, sigma_x, sigma_eps, views, seed })
    }

    pub fn tags(&self) -> Vec<String> {
        self.views.keys().cloned().collect()
    }

    pub fn view(&self, tag: &str) -> Result<&ViewSpec> {
        self.views.get(tag).ok_or_else(|| EdlnError::UnknownTag(tag.into()))
    }

    fn view_mut(&mut self, tag: &str) -> Result<&mut ViewSpec> {
        self.views.get_mut(tag).ok_or_else(|| EdlnError::UnknownTag(tag.into()))
    }

    pub fn rank_v(&self) -> usize {
        linalg::numerical_rank(&self.v_star, 1e-10)
    }

    /// Add a view (or replace its input transform). New views start with `Φ = I`.
    pub fn set_view_transform(&mut self, tag: &str, z: Mat) -> Result<()> {
        if z.nrows() != self.input_dim || !linalg::is_invertible(&z) {
            return Err(EdlnError::NotInvertible(format!("view transform for `{tag}`")));
        }
        let m = self.output_dim;
        self.views
            .entry(tag.to_string())
            .and_modify(|v| v.z = z.clone())
            .or_insert(ViewSpec { z, phi: Mat::identity(m, m), heterogeneity: None });
        Ok(())
    }

    pub fn set_label_transform(&mut self, tag: &str, phi: Mat) -> Result<()> {
        if phi.nrows() != self.output_dim || !linalg::is_invertible(&phi) {
            return Err(EdlnError::NotInvertible(format!("label transform for `{tag}`")));
        }
        if linalg::rel_err(&phi, &phi.transpose()) > 1e-12 {
            return Err(EdlnError::InvalidConfig(format!("label transform for `{tag}` must be symmetric")));
        }
        self.view_mut(tag)?.phi = phi;
        Ok(())
    }

    pub fn set_heterogeneity(&mut self, tag: &str, cov: Option<Mat>) -> Result<()> {
        if let Some(c) = &cov {
            if c.nrows() != self.input_dim {
                return Err(EdlnError::shape("heterogeneity covariance", self.input_dim, c.nrows()));
            }
            check_spd(c, "heterogeneity covariance")?;
        }
        self.view_mut(tag)?.heterogeneity = cov;
        Ok(())
    }

    /// Validate the invariants of every stored matrix.
    pub fn validate(&self) -> Result<()> {
        check_spd(&self.sigma_x, "Σ_x")?;
        check_spd(&self.sigma_eps, "Σ_ε")?;
        for (tag, v) in &self.views {
            if !linalg::is_invertible(&v.z) {
                return Err(EdlnError::NotInvertible(format!("view transform for `{tag}`")));
            }
            if !linalg::is_invertible(&v.phi) || linalg::rel_err(&v.phi, &v.phi.transpose()) > 1e-12 {
                return Err(EdlnError::InvalidConfig(format!("label transform for `{tag}` must be symmetric invertible")));
            }
            if let Some(h) = &v.heterogeneity {
                check_spd(h, "heterogeneity covariance")?;
            }
        }
        Ok(())
    }

    /// Exact population quantities seen by the network trained on view `tag`.
    ///
    /// Without feature noise this is `(Z Σ_x Zᵀ, Φ V* Z⁻¹, Φ Σ_ε Φ)`. With feature noise `H` the
    /// input moment becomes `Z Σ_x Zᵀ + H`, the target the best linear predictor of `Φ y` from the
    /// view, and the noise covariance that predictor's residual covariance.
    pub fn population_moments(&self, tag: &str) -> Result<ViewMoments> {
        let v = self.view(tag)?;
        let z_sx_zt = linalg::symmetrize(&(&v.z * &self.sigma_x * v.z.transpose()));
        match &v.heterogeneity {
            None => {
                let z_inv = linalg::inverse(&v.z, "view transform")?;
                Ok(ViewMoments {
                    sigma_u: z_sx_zt,
                    target: &v.phi * &self.v_star * z_inv,
                    sigma_e: linalg::symmetrize(&(&v.phi * &self.sigma_eps * &v.phi)),
                })
            }
            Some(h) => {
                let sigma_u = linalg::symmetrize(&(z_sx_zt + h));
                let cross = &v.phi * &self.v_star * &self.sigma_x * v.z.transpose();
                let sigma_u_inv = linalg::inverse(&sigma_u, "view input moment")?;
                let target = cross * sigma_u_inv;
                let y_cov = &v.phi
                    * (&self.v_star * &self.sigma_x * self.v_star.transpose() + &self.sigma_eps)
                    * &v.phi;
                let sigma_e = linalg::symmetrize(&(y_cov - &target * &sigma_u * target.transpose()));
                Ok(ViewMoments { sigma_u, target, sigma_e })
            }
        }
    }

    /// Draw `n` base samples and their views/labels for every requested tag.
    pub fn sample_batch(&self, n: usize, tags: &[&str], seed: u64) -> Result<PairedBatch> {
        if n == 0 {
            return Err(EdlnError::InvalidConfig("batch size must be >= 1".into()));
        }
        for t in tags {
            self.view(t)?;
        }
        let lx = Cholesky::new(self.sigma_x.clone())
            .ok_or_else(|| EdlnError::NotInvertible("Σ_x".into()))?
            .l();
        let le = Cholesky::new(self.sigma_eps.clone())
            .ok_or_else(|| EdlnError::NotInvertible("Σ_ε".into()))?
            .l();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x_base = lx * gaussian_matrix(self.input_dim, n, &mut rng);
        let eps = le * gaussian_matrix(self.output_dim, n, &mut rng);
        let y = &self.v_star * &x_base + &eps;
        let mut views = BTreeMap::new();
        let mut labels = BTreeMap::new();
        let mut sorted: Vec<&str> = tags.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for t in sorted {
            let spec = &self.views[t];
            let mut view = &spec.z * &x_base;
            if let Some(h) = &spec.heterogeneity {
                let lh = Cholesky::new(h.clone())
                    .ok_or_else(|| EdlnError::NotInvertible("heterogeneity covariance".into()))?
                    .l();
                view += lh * gaussian_matrix(self.input_dim, n, &mut rng);
            }
            views.insert(t.to_string(), view);
            labels.insert(t.to_string(), &spec.phi * &y);
        }
        Ok(PairedBatch { x_base, eps, views, labels })
    }
}
