use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use super::{run_scenario, ScenarioConfig, ScenarioResult, VERSION};
use crate::error::{EdlnError, Result};
use crate::io::fmt_f64;

/// One swept parameter: a dotted config path and its values.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub path: String,
    pub values: Vec<toml::Value>,
}

/// Parse `name=v1,v2,...`. Values are TOML literals (numbers, booleans, arrays such as `[6,6]`);
/// anything else is taken as a string. Commas inside brackets do not split.
pub fn parse_axis(spec: &str) -> Result<Axis> {
    let (path, list) = spec
        .split_once('=')
        .ok_or_else(|| EdlnError::InvalidConfig(format!("axis `{spec}` must look like name=v1,v2,...")))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(EdlnError::InvalidConfig(format!("axis `{spec}` has no name")));
    }
    if path.ends_with(".seed") {
        return Err(EdlnError::InvalidConfig(format!("`{path}` is derived from `seed`; sweep `seed` instead")));
    }
    let mut items = Vec::new();
    let (mut depth, mut start) = (0i32, 0usize);
    for (k, c) in list.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                items.push(&list[start..k]);
                start = k + 1;
            }
            _ => {}
        }
    }
    items.push(&list[start..]);
    let values = items
        .into_iter()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            toml::from_str::<toml::Table>(&format!("v = {s}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(s.to_string()))
        })
        .collect::<Vec<_>>();
    if values.is_empty() {
        return Err(EdlnError::InvalidConfig(format!("axis `{path}` has no values")));
    }
    Ok(Axis { path: path.to_string(), values })
}

fn lookup<'a>(table: &'a mut toml::Table, path: &str) -> Option<&'a mut toml::Value> {
    let mut parts = path.split('.');
    let mut cur = table.get_mut(parts.next()?)?;
    for p in parts {
        cur = cur.as_table_mut()?.get_mut(p)?;
    }
    Some(cur)
}

fn show(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub struct SweepRun {
    /// `(axis path, value)` for this run.
    pub assignment: Vec<(String, String)>,
    pub outcome: Result<ScenarioResult>,
}

pub struct SweepReport {
    pub runs: Vec<SweepRun>,
    /// Aggregated CSV, one row per run.
    pub table: PathBuf,
}

impl SweepReport {
    pub fn all_pass(&self) -> bool {
        self.runs.iter().all(|r| matches!(&r.outcome, Ok(res) if res.verdict))
    }

    pub fn any_error(&self) -> bool {
        self.runs.iter().any(|r| r.outcome.is_err())
    }
}

/// Run the Cartesian product of the axes over `template`, up to `template.parallelism` runs at a
/// time. Failed runs are recorded and the sweep continues. An empty axis list is a single run.
pub fn sweep(template: &ScenarioConfig, axes: &[Axis]) -> Result<SweepReport> {
    let mut base = template.to_table()?;
    for axis in axes {
        if lookup(&mut base, &axis.path).is_none() {
            return Err(EdlnError::InvalidConfig(format!("sweep axis `{}` is not a config key", axis.path)));
        }
    }
    let mut combos: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
    for axis in axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                axis.values.iter().map(move |v| {
                    let mut next = c.clone();
                    next.push((axis.path.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    let run_one = |combo: &Vec<(String, toml::Value)>| -> SweepRun {
        let assignment = combo.iter().map(|(p, v)| (p.clone(), show(v))).collect();
        let outcome = (|| {
            let mut table = base.clone();
            for (path, value) in combo {
                *lookup(&mut table, path).expect("checked above") = value.clone();
            }
            run_scenario(&ScenarioConfig::from_table(table)?)
        })();
        SweepRun { assignment, outcome }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(template.parallelism)
        .build()
        .map_err(|e| EdlnError::InvalidConfig(format!("thread pool: {e}")))?;
    let runs: Vec<SweepRun> = pool.install(|| combos.par_iter().map(run_one).collect());
    let table = template
        .outdir
        .join(template.scenario.name())
        .join(format!("sweep_{}.csv", template.hash()?));
    write_table(&table, axes, &runs, template)?;
    Ok(SweepReport { runs, table })
}

/// Columns: axis paths, `config_hash`, `verdict` (1/0, empty on error), `error`, then every
/// summary metric seen in any run (empty where a run lacks it).
fn write_table(path: &PathBuf, axes: &[Axis], runs: &[SweepRun], template: &ScenarioConfig) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut metric_names: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    for run in runs {
        if let Ok(res) = &run.outcome {
            for m in &res.summary {
                if seen.insert(m.name.clone()) {
                    metric_names.push(m.name.clone());
                }
            }
        }
    }
    let mut text = format!(
        "# scenario: {}\n# template_hash: {}\n# edln_core_version: {VERSION}\n",
        template.scenario,
        template.hash()?
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = axes.iter().map(|a| a.path.clone()).collect();
    header.extend(["config_hash".into(), "verdict".into(), "error".into()]);
    header.extend(metric_names.iter().cloned());
    w.write_record(&header)?;
    for run in runs {
        let mut rec: Vec<String> = run.assignment.iter().map(|(_, v)| v.clone()).collect();
        match &run.outcome {
            Ok(res) => {
                rec.extend([res.config_hash.clone(), u8::from(res.verdict).to_string(), String::new()]);
                rec.extend(metric_names.iter().map(|n| res.metric(n).map(fmt_f64).unwrap_or_default()));
            }
            Err(e) => {
                rec.extend([String::new(), String::new(), e.to_string()]);
                rec.extend(metric_names.iter().map(|_| String::new()));
            }
        }
        w.write_record(&rec)?;
    }
    let body = w.into_inner().map_err(|e| EdlnError::Io(e.into_error()))?;
    text.push_str(&String::from_utf8_lossy(&body));
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_values_parse_as_toml_literals() {
        let a = parse_axis("train.weight_decay=0,1e-3, 0.01").unwrap();
        assert_eq!(a.path, "train.weight_decay");
        assert_eq!(a.values, vec![toml::Value::Integer(0), toml::Value::Float(1e-3), toml::Value::Float(0.01)]);
        let h = parse_axis("net_a.hidden=[6],[6,6]").unwrap();
        assert_eq!(h.values.len(), 2);
        assert_eq!(h.values[1].as_array().unwrap().len(), 2);
        let s = parse_axis("train.algorithm=sgd,full_batch_gd").unwrap();
        assert_eq!(s.values[1], toml::Value::String("full_batch_gd".into()));
    }

    #[test]
    fn malformed_axes_are_rejected() {
        assert!(parse_axis("weight_decay").is_err());
        assert!(parse_axis("=1,2").is_err());
        assert!(parse_axis("data.seed=1,2").is_err());
        assert!(parse_axis("seed=").is_err());
    }
}
