//! Versioned experiment manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub const MANIFEST_SCHEMA: &str = "nnrl.manifest/1";

pub const DEFAULT_MAX_N: usize = 2_000_000;
pub const DEFAULT_MAX_GRID: usize = 512;
const MAX_DIM: usize = 32;
const MAX_HORIZON: usize = 6;
const MAX_STATES: usize = 16;
const MAX_CANDIDATES: usize = 256;
const MAX_BATCHES: usize = 200;
const MAX_POLY_DIM: usize = 6;
const MAX_POLY_DEGREE: usize = 3;

fn env_cap(var: &str, default: usize) -> usize {
    std::env::var(var).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

/// Sample budget cap, overridable through `NNRL_MAX_N`.
pub fn max_n() -> usize {
    env_cap("NNRL_MAX_N", DEFAULT_MAX_N)
}

/// Sweep grid cap, overridable through `NNRL_MAX_GRID`.
pub fn max_grid() -> usize {
    env_cap("NNRL_MAX_GRID", DEFAULT_MAX_GRID)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    MomentCheck,
    RecoverNoisy,
    RecoverExact,
    RlDet,
    RlPolicy,
    RlBellman,
    RlGap,
    PolyGenerative,
    PolyOnline,
    HardSeparation,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::MomentCheck => "moment-check",
            Kind::RecoverNoisy => "recover-noisy",
            Kind::RecoverExact => "recover-exact",
            Kind::RlDet => "rl-det",
            Kind::RlPolicy => "rl-policy",
            Kind::RlBellman => "rl-bellman",
            Kind::RlGap => "rl-gap",
            Kind::PolyGenerative => "poly-generative",
            Kind::PolyOnline => "poly-online",
            Kind::HardSeparation => "hard-separation",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationName {
    Relu,
    SquaredRelu,
    Cubic,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Label noise standard deviation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activation: Option<ActivationName>,
    /// Plant a net with repeated rows at the last level.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_deficient: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batches: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub kind: Kind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub budget: Budget,
    /// Overrides of the kind's default thresholds.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub thresholds: BTreeMap<String, f64>,
}

/// Validation failure naming the offending field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for FieldError {}

fn fail<T>(field: &str, message: impl Into<String>) -> Result<T, FieldError> {
    Err(FieldError { field: field.into(), message: message.into() })
}

fn in_range(field: &str, value: usize, lo: usize, hi: usize) -> Result<usize, FieldError> {
    if value < lo || value > hi {
        return fail(field, format!("{value} outside [{lo}, {hi}]"));
    }
    Ok(value)
}

fn positive(field: &str, value: f64) -> Result<f64, FieldError> {
    if !(value.is_finite() && value > 0.0) {
        return fail(field, format!("{value} must be positive and finite"));
    }
    Ok(value)
}

/// Comparison applied by a verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

impl Cmp {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Cmp::Le => value <= threshold,
            Cmp::Ge => value >= threshold,
            Cmp::Eq => value == threshold,
        }
    }
}

/// Fully defaulted parameters of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub d: usize,
    pub k: usize,
    pub p: usize,
    pub horizon: usize,
    pub noise: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub states: usize,
    pub candidates: usize,
    pub activation: ActivationName,
    pub rank_deficient: bool,
    pub n: usize,
    pub batches: usize,
    /// Threshold name, comparison and value, in a fixed order.
    pub thresholds: Vec<(String, Cmp, f64)>,
}

impl Manifest {
    #[cfg(test)]
    pub fn new(kind: Kind, seed: u64) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.into(),
            kind,
            seed,
            output: None,
            params: Params::default(),
            budget: Budget::default(),
            thresholds: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let m: Manifest = toml::from_str(text)?;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Applies defaults for the kind and checks every field against its cap.
    pub fn resolve(&self) -> Result<Resolved, FieldError> {
        if self.schema != MANIFEST_SCHEMA {
            return fail("schema", format!("expected {MANIFEST_SCHEMA}, found {}", self.schema));
        }
        let p = &self.params;
        let b = &self.budget;
        let kind = self.kind;
        let poly = matches!(kind, Kind::PolyGenerative | Kind::PolyOnline | Kind::HardSeparation);
        let (d0, k0, h0, states0, cand0, n0) = match kind {
            Kind::MomentCheck => (4, 1, 1, 1, 1, 1_000),
            Kind::RecoverNoisy => (10, 2, 1, 1, 1, 400_000),
            Kind::RecoverExact => (10, 2, 1, 1, 1, 200_000),
            Kind::RlDet => (10, 2, 2, 3, 16, 200_000),
            Kind::RlPolicy | Kind::RlBellman | Kind::RlGap => (10, 2, 2, 3, 16, 400_000),
            Kind::PolyGenerative | Kind::PolyOnline => (3, 1, 2, 2, 8, 0),
            Kind::HardSeparation => (4, 1, 3, 2, 16, 0),
        };
        let d = in_range("params.d", p.d.unwrap_or(d0), 1, if poly { MAX_POLY_DIM } else { MAX_DIM })?;
        let k = in_range("params.k", p.k.unwrap_or(k0), 1, d)?;
        let deg = in_range("params.p", p.p.unwrap_or(2), 1, MAX_POLY_DEGREE)?;
        if kind == Kind::HardSeparation && deg > d {
            return fail("params.p", format!("{deg} exceeds params.d = {d}"));
        }
        let horizon = in_range("params.horizon", p.horizon.unwrap_or(h0), 1, MAX_HORIZON)?;
        let noise_default = if kind == Kind::RecoverNoisy { 0.1 } else { 0.0 };
        let noise = p.noise.unwrap_or(noise_default);
        if !(noise.is_finite() && noise >= 0.0) {
            return fail("params.noise", format!("{noise} must be nonnegative and finite"));
        }
        if kind == Kind::RecoverExact && noise != 0.0 {
            return fail("params.noise", "exact recovery needs noiseless labels");
        }
        let rho = positive("params.rho", p.rho.unwrap_or(0.5))?;
        let eps_default = if kind == Kind::RlBellman { 0.5 } else { 0.2 };
        let epsilon = positive("params.epsilon", p.epsilon.unwrap_or(eps_default))?;
        let states = in_range("params.states", p.states.unwrap_or(states0), 1, MAX_STATES)?;
        let candidates = in_range("params.candidates", p.candidates.unwrap_or(cand0), 1, MAX_CANDIDATES)?;
        let activation = p.activation.unwrap_or(ActivationName::Relu);
        let rank_deficient = p.rank_deficient.unwrap_or(false);
        if rank_deficient && kind != Kind::RlDet {
            return fail("params.rank_deficient", "only supported for rl-det");
        }
        if rank_deficient && k < 2 {
            return fail("params.rank_deficient", "needs params.k >= 2");
        }
        let n = b.n.unwrap_or(n0);
        if !poly {
            in_range("budget.n", n, 1, max_n())?;
        } else if b.n.is_some() {
            return fail("budget.n", "polynomial kinds derive their budget from the family dimension");
        }
        if b.batches.is_some() && kind != Kind::MomentCheck {
            return fail("budget.batches", "only moment-check draws several batches");
        }
        let batches = in_range("budget.batches", b.batches.unwrap_or(1), 1, MAX_BATCHES)?;
        if kind == Kind::MomentCheck && (d.pow(4) > nnrl_core::moments::REFERENCE_CAP) {
            return fail("params.d", "dense reference tensor too large");
        }

        let mut thresholds = default_thresholds(kind, epsilon);
        for (name, value) in &self.thresholds {
            let Some(slot) = thresholds.iter_mut().find(|t| &t.0 == name) else {
                return fail(&format!("thresholds.{name}"), format!("not a threshold of {}", kind.name()));
            };
            if !value.is_finite() {
                return fail(&format!("thresholds.{name}"), "must be finite");
            }
            slot.2 = *value;
        }
        Ok(Resolved {
            d,
            k,
            p: deg,
            horizon,
            noise,
            rho,
            epsilon,
            states,
            candidates,
            activation,
            rank_deficient,
            n,
            batches,
            thresholds,
        })
    }
}

/// Default thresholds per kind; the budget-valued ones are filled in by the run.
fn default_thresholds(kind: Kind, epsilon: f64) -> Vec<(String, Cmp, f64)> {
    let t = |name: &str, cmp, v| (name.to_string(), cmp, v);
    match kind {
        Kind::MomentCheck => vec![t("max_abs_diff", Cmp::Le, 1e-10)],
        Kind::RecoverNoisy => vec![t("max_row_error", Cmp::Le, 0.1), t("signs_exact", Cmp::Ge, 1.0)],
        Kind::RecoverExact => vec![t("frobenius_error", Cmp::Le, 1e-6), t("loss_monotone", Cmp::Ge, 1.0)],
        Kind::RlDet => vec![t("value_gap", Cmp::Le, 1e-9)],
        Kind::RlGap => vec![t("suboptimality", Cmp::Le, 1e-9)],
        Kind::RlPolicy => vec![t("suboptimality", Cmp::Le, epsilon), t("telescoping", Cmp::Ge, 1.0)],
        Kind::RlBellman => vec![t("level1_error", Cmp::Le, epsilon)],
        Kind::PolyGenerative => vec![t("suboptimality", Cmp::Le, 1e-9), t("query_excess", Cmp::Eq, 0.0)],
        Kind::PolyOnline => vec![t("suboptimality", Cmp::Le, 1e-9), t("episode_excess", Cmp::Eq, 0.0)],
        Kind::HardSeparation => vec![
            t("online_worst_excess", Cmp::Eq, 0.0),
            t("generative_excess", Cmp::Le, 0.0),
            t("identified", Cmp::Ge, 1.0),
            t("delta_sum_error", Cmp::Le, 0.0),
            t("value_error", Cmp::Le, 0.0),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_identical() {
        let mut m = Manifest::new(Kind::RlPolicy, 7);
        m.params.d = Some(6);
        m.params.epsilon = Some(0.25);
        m.budget.n = Some(1234);
        m.thresholds.insert("suboptimality".into(), 0.3);
        let once = m.to_toml();
        let again = Manifest::parse(&once).unwrap().to_toml();
        assert_eq!(once, again);
        assert_eq!(Manifest::parse(&once).unwrap(), m);
    }

    #[test]
    fn seed_is_mandatory() {
        let err = Manifest::parse("schema = \"nnrl.manifest/1\"\nkind = \"rl-det\"\n").unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn errors_name_the_field() {
        let mut m = Manifest::new(Kind::RecoverNoisy, 0);
        m.params.d = Some(1000);
        assert_eq!(m.resolve().unwrap_err().field, "params.d");
        let mut m = Manifest::new(Kind::RecoverNoisy, 0);
        m.thresholds.insert("nonsense".into(), 1.0);
        assert_eq!(m.resolve().unwrap_err().field, "thresholds.nonsense");
        let mut m = Manifest::new(Kind::PolyOnline, 0);
        m.budget.n = Some(10);
        assert_eq!(m.resolve().unwrap_err().field, "budget.n");
    }

    #[test]
    fn overrides_replace_defaults() {
        let mut m = Manifest::new(Kind::RlPolicy, 0);
        m.thresholds.insert("suboptimality".into(), 0.5);
        let r = m.resolve().unwrap();
        assert_eq!(r.thresholds[0], ("suboptimality".into(), Cmp::Le, 0.5));
    }
}
