//! Cartesian parameter sweeps over a manifest template.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifest::{max_grid, Manifest};
use crate::record::{summary_table, ResultRecord};
use crate::run::run;

pub const SWEEP_SCHEMA: &str = "nnrl.sweep/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub schema: String,
    pub template: Manifest,
    /// Dotted manifest paths (`seed`, `params.d`, `budget.n`, …) to value lists.
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<toml::Value>>,
}

pub struct SweepOutcome {
    pub records: Vec<ResultRecord>,
    pub summary: String,
}

impl SweepSpec {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let s: SweepSpec = toml::from_str(text)?;
        if s.schema != SWEEP_SCHEMA {
            bail!("schema: expected {SWEEP_SCHEMA}, found {}", s.schema);
        }
        Ok(s)
    }

    /// Grid size; zero when there are no axes or some axis is empty.
    pub fn size(&self) -> usize {
        if self.grid.is_empty() {
            return 0;
        }
        self.grid.values().map(Vec::len).product()
    }

    /// Points in row-major order over the axes sorted by name; each is validated.
    pub fn points(&self) -> anyhow::Result<Vec<(BTreeMap<String, toml::Value>, Manifest)>> {
        let size = self.size();
        let cap = max_grid();
        if size > cap {
            bail!("grid: {size} points exceed the cap of {cap}");
        }
        let base = toml::Value::try_from(&self.template)?;
        let axes: Vec<(&String, &Vec<toml::Value>)> = self.grid.iter().collect();
        let mut out = Vec::with_capacity(size);
        for flat in 0..size {
            let mut rem = flat;
            let mut coords = BTreeMap::new();
            for (name, values) in axes.iter().rev() {
                coords.insert((*name).clone(), values[rem % values.len()].clone());
                rem /= values.len();
            }
            let mut value = base.clone();
            for (path, v) in &coords {
                set_path(&mut value, path, v.clone()).with_context(|| format!("grid.{path}"))?;
            }
            let manifest: Manifest = value.try_into().with_context(|| format!("grid point {flat}"))?;
            manifest.resolve().with_context(|| format!("grid point {flat}"))?;
            out.push((coords, manifest));
        }
        Ok(out)
    }
}

fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> anyhow::Result<()> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().context("path crosses a non-table value")?;
        if i + 1 == parts.len() {
            table.insert((*part).to_string(), value);
            return Ok(());
        }
        node = table.entry((*part).to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
    }
    bail!("empty path")
}

fn group_label(coords: &BTreeMap<String, toml::Value>) -> String {
    let parts: Vec<String> =
        coords.iter().filter(|(k, _)| k.as_str() != "seed").map(|(k, v)| format!("{k}={v}")).collect();
    if parts.is_empty() {
        "all".into()
    } else {
        parts.join(",")
    }
}

/// Writes `contents` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Runs every grid point on at most `workers` threads, writing `points/NNNN.json`
/// per point, then `records.jsonl` and `summary.tsv` once all points finish.
pub fn sweep(spec: &SweepSpec, out: &Path, workers: usize) -> anyhow::Result<SweepOutcome> {
    let points = spec.points()?;
    let point_dir = out.join("points");
    fs::create_dir_all(&point_dir).with_context(|| format!("creating {}", point_dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let records: Vec<ResultRecord> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, (_, manifest))| {
                let resolved = manifest.resolve().map_err(anyhow::Error::from)?;
                let record = run(manifest, &resolved);
                write_atomic(&point_dir.join(format!("{i:04}.json")), &(record.to_line() + "\n"))?;
                Ok(record)
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    let mut lines = String::new();
    for r in &records {
        lines.push_str(&r.to_line());
        lines.push('\n');
    }
    write_atomic(&out.join("records.jsonl"), &lines)?;
    let mut groups: Vec<(String, Vec<&ResultRecord>)> = Vec::new();
    for ((coords, _), record) in points.iter().zip(&records) {
        let label = group_label(coords);
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, g)) => g.push(record),
            None => groups.push((label, vec![record])),
        }
    }
    let summary = summary_table(&groups);
    write_atomic(&out.join("summary.tsv"), &summary)?;
    Ok(SweepOutcome { records, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
schema = "nnrl.sweep/1"

[template]
schema = "nnrl.manifest/1"
kind = "moment-check"
seed = 0

[grid]
"budget.n" = [10, 20]
seed = [1, 2, 3]
"#;

    #[test]
    fn points_follow_sorted_axes() {
        let spec = SweepSpec::parse(SPEC).unwrap();
        let pts = spec.points().unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0].1.budget.n, Some(10));
        assert_eq!(pts[0].1.seed, 1);
        assert_eq!(pts[1].1.seed, 2);
        assert_eq!(pts[3].1.budget.n, Some(20));
        assert_eq!(group_label(&pts[4].0), "budget.n=20");
    }

    #[test]
    fn empty_axis_gives_no_points() {
        let mut spec = SweepSpec::parse(SPEC).unwrap();
        spec.grid.insert("params.d".into(), Vec::new());
        assert_eq!(spec.points().unwrap().len(), 0);
        spec.grid.clear();
        assert_eq!(spec.size(), 0);
    }

    #[test]
    fn invalid_point_names_the_axis_value() {
        let mut spec = SweepSpec::parse(SPEC).unwrap();
        spec.grid.insert("params.d".into(), vec![toml::Value::Integer(500)]);
        let err = format!("{:#}", spec.points().unwrap_err());
        assert!(err.contains("params.d"), "{err}");
    }
}
