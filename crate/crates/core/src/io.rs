//! Structured-text (JSON) documents for networks and data models, plus CSV helpers.
//!
//! Matrices are stored row-major as nested arrays. Floats are written with the shortest
//! representation that round-trips exactly, so a reloaded document is bit-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{EdlnError, Result};
use crate::linalg::Mat;
use crate::network::EdlnNetwork;

/// Row-major nested-array representation of a matrix.
pub mod rows {
    use super::*;

    pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|r| m.row(r).iter().cloned().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> std::result::Result<Mat, String> {
        let nrows = rows.len();
        let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(Mat::from_fn(nrows, ncols, |r, c| rows[r][c]))
    }

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub mod rows_vec {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> std::result::Result<S::Ok, S::Error> {
        ms.iter().map(rows::to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Mat>, D::Error> {
        let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        all.iter()
            .map(|r| rows::from_rows(r).map_err(serde::de::Error::custom))
            .collect()
    }
}

pub mod rows_opt {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(rows::to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Mat>, D::Error> {
        let opt = Option::<Vec<Vec<f64>>>::deserialize(d)?;
        opt.map(|r| rows::from_rows(&r).map_err(serde::de::Error::custom)).transpose()
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkDocument {
    kind: String,
    depth: usize,
    layer_dims: Vec<usize>,
    #[serde(with = "rows")]
    m_in: Mat,
    #[serde(with = "rows")]
    m_out: Mat,
    #[serde(with = "rows_vec")]
    weights: Vec<Mat>,
}

const NETWORK_KIND: &str = "edln_network";

impl Serialize for EdlnNetwork {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkDocument {
            kind: NETWORK_KIND.into(),
            depth: self.depth(),
            layer_dims: self.layer_dims(),
            m_in: self.m_in().clone(),
            m_out: self.m_out().clone(),
            weights: self.weights().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EdlnNetwork {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = NetworkDocument::deserialize(d)?;
        if doc.kind != NETWORK_KIND {
            return Err(serde::de::Error::custom(format!("expected kind `{NETWORK_KIND}`, found `{}`", doc.kind)));
        }
        let net = EdlnNetwork::new(doc.m_in, doc.m_out, doc.weights).map_err(serde::de::Error::custom)?;
        if net.depth() != doc.depth || net.layer_dims() != doc.layer_dims {
            return Err(serde::de::Error::custom("depth/layer_dims disagree with stored weights"));
        }
        Ok(net)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_network(path: &Path, net: &EdlnNetwork) -> Result<()> {
    write_json(path, net)
}

pub fn load_network(path: &Path) -> Result<EdlnNetwork> {
    read_json(path)
}

/// Write a matrix as a CSV table with the given row labels and column labels.
pub fn write_matrix_csv(
    path: &Path,
    corner: &str,
    row_labels: &[String],
    col_labels: &[String],
    m: &Mat,
) -> Result<()> {
    if row_labels.len() != m.nrows() || col_labels.len() != m.ncols() {
        return Err(EdlnError::shape("matrix csv labels", format!("{}x{}", m.nrows(), m.ncols()), format!("{}x{}", row_labels.len(), col_labels.len())));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![corner.to_string()];
    header.extend(col_labels.iter().cloned());
    w.write_record(&header)?;
    for (r, label) in row_labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend((0..m.ncols()).map(|c| fmt_f64(m[(r, c)])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Full-precision float formatting for CSV cells.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:e}")
    }
}
