//! Scenario files: parsing, dotted overrides and resolution into core types.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use confor_core::conditioning::DEFAULT_BINS;
use confor_core::spec::{JointSpec, LossSpec, MarginalSpec};
use confor_core::{
    ConstraintSpec, DispersionConvention, JointForecast, LossFamily, LossKind, MarginalDistribution, SolverOptions,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SEED_VAR: &str = "CONFOR_SEED";
const DEFAULT_SEED: u64 = 1;

fn default_samples() -> usize {
    100_000
}

fn default_true() -> bool {
    true
}

/// Exactly one of these per scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Constraint {
    Total(f64),
    /// `A` is n x k, given as n rows.
    Linear {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        totals: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossDistConfig {
    pub per_dimension: bool,
    /// Also simulate the same margins without dependence.
    pub contrast: bool,
    /// Points per axis of the density lattice (bivariate joints only).
    pub density_grid: usize,
}

impl Default for LossDistConfig {
    fn default() -> Self {
        Self { per_dimension: true, contrast: false, density_grid: 81 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub epsilon: Vec<f64>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self { epsilon: (-10..=10).map(|i| i as f64 / 100.0).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbcConfig {
    pub tau_pct: f64,
    pub bins: usize,
    /// Candidate draws; falls back to the scenario's `samples`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

impl Default for AbcConfig {
    fn default() -> Self {
        Self { tau_pct: 0.5, bins: DEFAULT_BINS, samples: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionFamily {
    #[default]
    Normal,
    T,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionConfig {
    pub family: ConditionFamily,
    /// Degrees of freedom for the T family.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    pub convention: DispersionConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub rho: Vec<f64>,
    pub totals: Vec<f64>,
    #[serde(default = "default_true")]
    pub abc: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { rho: vec![-0.7, 0.0, 0.7], totals: vec![14.7, 21.4, 24.15], abc: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margins: Option<Vec<MarginalSpec>>,
    pub loss: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_weights: Option<Vec<f64>>,
    pub constraint: Constraint,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub loss_dist: LossDistConfig,
    #[serde(default)]
    pub sensitivity: SensitivityConfig,
    #[serde(default)]
    pub abc: AbcConfig,
    #[serde(default)]
    pub condition: ConditionConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

/// A scenario with its inputs built.
pub struct Resolved {
    pub scenario: Scenario,
    pub joint: Option<JointForecast>,
    pub margins: Vec<MarginalDistribution>,
    pub loss: LossFamily,
    pub constraint: ConstraintSpec,
    pub seed: u64,
}

impl Resolved {
    pub fn dim(&self) -> usize {
        self.margins.len()
    }

    pub fn total(&self) -> Result<f64> {
        match self.constraint {
            ConstraintSpec::Total(t) => Ok(t),
            ConstraintSpec::Linear { .. } => bail!("this command needs a total constraint, not a linear one"),
        }
    }

    pub fn joint(&self) -> Result<&JointForecast> {
        self.joint.as_ref().ok_or_else(|| anyhow!("this command needs a joint distribution, not margins alone"))
    }
}

/// Load a scenario file and apply `key=value` overrides.
pub fn load(path: &Path, overrides: &[String]) -> Result<(Scenario, PathBuf)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let scenario = if overrides.is_empty() {
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| schema_error(path, e))?
    } else {
        let mut value: Value =
            serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_path_to_error::deserialize(value).map_err(|e| schema_error(path, e))?
    };
    Ok((scenario, base))
}

fn schema_error(path: &Path, e: serde_path_to_error::Error<serde_json::Error>) -> anyhow::Error {
    let field = e.path().to_string();
    anyhow!("{}: field `{field}`: {}", path.display(), e.into_inner())
}

/// `a.b.0.c=value`; the value is read as JSON, or as a plain string when it
/// does not parse.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| anyhow!("override `{assignment}` is not key=value"))?;
    if key.is_empty() {
        bail!("override `{assignment}` has an empty key");
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            Value::Array(items) => {
                let i: usize = part.parse().with_context(|| format!("`{part}` in `{key}` is not an array index"))?;
                let len = items.len();
                items.get_mut(i).ok_or_else(|| anyhow!("index {i} in `{key}` is past the end ({len} items)"))?
            }
            Value::Object(map) => map.entry(part.to_string()).or_insert(Value::Null),
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().unwrap().entry(part.to_string()).or_insert(Value::Null)
            }
            _ => bail!("cannot descend into `{part}` of `{key}`: parent is a scalar"),
        };
    }
    *node = value;
    Ok(())
}

impl Scenario {
    /// Build distributions, loss and constraint, checking dimensions.
    /// Relative data paths are taken from `base`.
    pub fn resolve(mut self, base: &Path) -> Result<Resolved> {
        let (joint, margins) = match (&self.joint, &self.margins) {
            (Some(j), None) => {
                let joint = j.resolve(base).context("building the joint distribution")?;
                let margins = joint.marginals()?;
                (Some(joint), margins)
            }
            (None, Some(ms)) => {
                let margins = ms
                    .iter()
                    .enumerate()
                    .map(|(i, m)| m.resolve(base).with_context(|| format!("building margin {i}")))
                    .collect::<Result<Vec<_>>>()?;
                (None, margins)
            }
            _ => bail!("give exactly one of `joint` and `margins`"),
        };
        let n = margins.len();
        if n == 0 {
            bail!("the scenario has no dimensions");
        }
        let loss = LossSpec { loss: self.loss, weights: self.loss_weights.clone() }.resolve(n)?;
        let constraint = match &self.constraint {
            Constraint::Total(t) => ConstraintSpec::Total(*t),
            Constraint::Linear { a, totals } => {
                if a.len() != n {
                    bail!("constraint matrix A has {} rows for {n} dimensions", a.len());
                }
                let k = totals.len();
                if let Some(r) = a.iter().position(|row| row.len() != k) {
                    bail!("row {r} of A has {} entries for {k} totals", a[r].len());
                }
                ConstraintSpec::linear(DMatrix::from_fn(n, k, |i, j| a[i][j]), totals.clone())?
            }
        };
        let seed = match self.seed {
            Some(s) => s,
            None => match std::env::var(SEED_VAR) {
                Ok(s) => s.trim().parse().with_context(|| format!("{SEED_VAR}={s} is not an unsigned integer"))?,
                Err(_) => DEFAULT_SEED,
            },
        };
        self.seed = Some(seed);
        Ok(Resolved { scenario: self, joint, margins, loss, constraint, seed })
    }
}
