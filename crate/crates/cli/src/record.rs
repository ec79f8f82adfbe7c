//! Line-delimited result records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::manifest::{Cmp, Manifest};

pub const RECORD_SCHEMA: &str = "nnrl.record/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    /// `None` when the pipeline failed before producing the metric.
    pub value: Option<f64>,
    pub threshold: f64,
    pub cmp: Cmp,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub build: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").into(),
            build: option_env!("NNRL_BUILD_HASH").unwrap_or("unknown").into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Passed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema: String,
    pub manifest: Manifest,
    pub status: Status,
    pub metrics: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<StageError>,
    pub runtime_ms: u64,
    pub environment: Environment,
}

impl ResultRecord {
    /// Verdicts for every threshold; a missing metric fails its verdict.
    pub fn assemble(
        manifest: Manifest,
        metrics: BTreeMap<String, f64>,
        thresholds: &[(String, Cmp, f64)],
        error: Option<StageError>,
        runtime_ms: u64,
    ) -> Self {
        let verdicts: Vec<Verdict> = thresholds
            .iter()
            .map(|(name, cmp, threshold)| {
                let value = metrics.get(name).copied().filter(|v| v.is_finite());
                let pass = error.is_none() && value.is_some_and(|v| cmp.holds(v, *threshold));
                Verdict { name: name.clone(), value, threshold: *threshold, cmp: *cmp, pass }
            })
            .collect();
        let status = if error.is_none() && verdicts.iter().all(|v| v.pass) { Status::Passed } else { Status::Failed };
        Self {
            schema: RECORD_SCHEMA.into(),
            manifest,
            status,
            metrics,
            verdicts,
            error,
            runtime_ms,
            environment: Environment::current(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Passed
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Per-group pass counts and metric means/medians, as a tab-separated table.
pub fn summary_table(groups: &[(String, Vec<&ResultRecord>)]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for (_, records) in groups {
        for r in records {
            for k in r.metrics.keys() {
                if !names.contains(&k.as_str()) {
                    names.push(k);
                }
            }
        }
    }
    names.sort_unstable();
    let mut out = String::from("group\truns\tpassed\tpass_rate");
    for n in &names {
        out.push_str(&format!("\tmean_{n}\tmedian_{n}"));
    }
    out.push('\n');
    for (label, records) in groups {
        let passed = records.iter().filter(|r| r.passed()).count();
        let rate = if records.is_empty() { 0.0 } else { passed as f64 / records.len() as f64 };
        out.push_str(&format!("{label}\t{}\t{passed}\t{rate:.3}", records.len()));
        for n in &names {
            let mut vals: Vec<f64> =
                records.iter().filter_map(|r| r.metrics.get(*n).copied()).filter(|v| v.is_finite()).collect();
            if vals.is_empty() {
                out.push_str("\tNA\tNA");
                continue;
            }
            vals.sort_by(f64::total_cmp);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let mid = vals.len() / 2;
            let median = if vals.len() % 2 == 1 { vals[mid] } else { 0.5 * (vals[mid - 1] + vals[mid]) };
            out.push_str(&format!("\t{mean:.6e}\t{median:.6e}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Kind;

    #[test]
    fn every_threshold_gets_a_verdict() {
        let m = Manifest::new(Kind::RecoverNoisy, 1);
        let t = m.resolve().unwrap().thresholds;
        let mut metrics = BTreeMap::new();
        metrics.insert("max_row_error".to_string(), 0.05);
        let r = ResultRecord::assemble(m, metrics, &t, None, 0);
        assert_eq!(r.verdicts.len(), 2);
        assert!(r.verdicts[0].pass);
        assert!(!r.verdicts[1].pass);
        assert_eq!(r.status, Status::Failed);
    }

    #[test]
    fn record_line_round_trips() {
        let m = Manifest::new(Kind::MomentCheck, 3);
        let t = m.resolve().unwrap().thresholds;
        let mut metrics = BTreeMap::new();
        metrics.insert("max_abs_diff".to_string(), 1e-15);
        let r = ResultRecord::assemble(m, metrics, &t, None, 5);
        let back: ResultRecord = serde_json::from_str(&r.to_line()).unwrap();
        assert_eq!(back, r);
        assert!(back.passed());
    }
}
