//! Experiment configuration: JSON schema, validation and density
//! construction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use epilab_core::density::catalog;
use epilab_core::density::{BlockStructure, Density, GaussianDensity, GridAxis};
use epilab_core::flow::FlowParams;
use epilab_core::harness::HarnessConfig;
use epilab_core::supermodular::LsmParams;

/// Known verification identifiers, in canonical order.
pub const VERIFICATION_IDS: &[&str] = &[
    "classical_epi",
    "lambda_fisher",
    "optimized_stam",
    "weighted_fisher",
    "dependent_linearized",
    "dependent_epi",
    "conditional_linearized",
    "conditional_epi",
    "conditional_epi_clean",
    "supermodular_epi",
    "rioul_condition",
    "hao_jog",
    "lsm_certificate",
    "class_c",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DensitySpec {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
        n: usize,
        d: usize,
    },
    Grid {
        expr: String,
        axes: AxisSpec,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    #[serde(rename = "T", default = "default_t")]
    pub t_max: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_s0")]
    pub s0: f64,
}

fn default_t() -> f64 {
    8.0
}
fn default_nodes() -> usize {
    64
}
fn default_s0() -> f64 {
    1e-3
}

impl Default for FlowSpec {
    fn default() -> Self {
        FlowSpec {
            t_max: default_t(),
            nodes: default_nodes(),
            s0: default_s0(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsmSpec {
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    /// Defaults to the experiment seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_lsm_tol")]
    pub tol: f64,
    #[serde(default = "default_s_values")]
    pub s_values: Vec<f64>,
}

fn default_pairs() -> usize {
    100_000
}
fn default_lsm_tol() -> f64 {
    1e-6
}
fn default_s_values() -> Vec<f64> {
    vec![0.1, 0.5, 1.0]
}

impl Default for LsmSpec {
    fn default() -> Self {
        LsmSpec {
            pairs: default_pairs(),
            seed: None,
            tol: default_lsm_tol(),
            s_values: default_s_values(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        let k = self.steps;
        (0..k)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (k - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub density: DensitySpec,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub lsm: LsmSpec,
    pub verifications: Vec<String>,
    #[serde(default)]
    pub lambda: Option<Vec<f64>>,
    #[serde(default)]
    pub t_list: Option<Vec<f64>>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub symmetric: bool,
}

fn default_seed() -> u64 {
    7
}

/// Sweepable parameter names with the density kinds / context they apply to.
const SWEEP_PARAMETERS: &[(&str, &str)] = &[
    ("r", "gaussian covariance or correlated_gaussian expression"),
    ("c", "quartic_coupling expression"),
    ("half", "uniform_box expression"),
    ("theta", "lambda direction (cos, sin); needs lambda_fisher"),
];

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| format!("config does not parse: {e}"))?;
        let issues = cfg.validate();
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(issues.join("\n"))
        }
    }

    /// Per-field validation issues; empty means the config is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        for id in &self.verifications {
            if !VERIFICATION_IDS.contains(&id.as_str()) {
                issues.push(format!("verifications: unknown id '{id}'"));
            }
        }
        if self.verifications.is_empty() {
            issues.push("verifications: at least one id is required".into());
        }
        match &self.density {
            DensitySpec::Gaussian { mean, cov, n, d } => {
                let total = n * d;
                if *n == 0 || *d == 0 {
                    issues.push("density: n and d must be positive".into());
                } else {
                    if mean.len() != total {
                        issues.push(format!(
                            "density.mean: expected {total} entries, got {}",
                            mean.len()
                        ));
                    }
                    if cov.len() != total || cov.iter().any(|row| row.len() != total) {
                        issues.push(format!("density.cov: expected a {total}x{total} matrix"));
                    }
                }
            }
            DensitySpec::Grid { expr, axes, .. } => {
                if !catalog::CATALOG.iter().any(|e| e.id == expr.as_str()) {
                    issues.push(format!("density.expr: unknown catalog density '{expr}'"));
                }
                if axes.m < 8 {
                    issues.push("density.axes: m must be at least 8".into());
                }
                if !(axes.lo < axes.hi) {
                    issues.push("density.axes: lo must be below hi".into());
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.steps < 2 {
                issues.push("sweep.steps: need at least 2 values".into());
            }
            if !(sweep.lo < sweep.hi) {
                issues.push("sweep: lo must be below hi".into());
            }
            if !SWEEP_PARAMETERS.iter().any(|(p, _)| *p == sweep.parameter) {
                issues.push(format!(
                    "sweep.parameter: unknown parameter '{}'",
                    sweep.parameter
                ));
            } else if !self.sweep_parameter_applies(&sweep.parameter) {
                issues.push(format!(
                    "sweep.parameter: '{}' does not apply to this density/verification set",
                    sweep.parameter
                ));
            }
        }
        if let Some(flow) = Some(&self.flow) {
            if !(flow.t_max > 0.0) || flow.nodes < 4 {
                issues.push("flow: need T > 0 and at least 4 nodes".into());
            }
        }
        issues
    }

    fn sweep_parameter_applies(&self, parameter: &str) -> bool {
        match parameter {
            "r" => match &self.density {
                DensitySpec::Gaussian { d, .. } => *d == 1,
                DensitySpec::Grid { expr, .. } => expr == "correlated_gaussian",
            },
            "c" => matches!(&self.density, DensitySpec::Grid { expr, .. } if expr == "quartic_coupling"),
            "half" => matches!(&self.density, DensitySpec::Grid { expr, .. } if expr == "uniform_box"),
            "theta" => self.verifications.iter().any(|v| v == "lambda_fisher"),
            _ => false,
        }
    }

    pub fn harness_config(&self) -> HarnessConfig {
        let mut cfg = HarnessConfig::default();
        cfg.flow = FlowParams {
            t_max: self.flow.t_max,
            nodes: self.flow.nodes,
            s0: self.flow.s0,
        };
        cfg.lsm = LsmParams {
            pairs: self.lsm.pairs,
            seed: self.lsm.seed.unwrap_or(self.seed),
            tol: self.lsm.tol,
            s_values: self.lsm.s_values.clone(),
        };
        cfg
    }

    /// List of sweepable parameters, for `epilab catalog`.
    pub fn sweep_parameters() -> &'static [(&'static str, &'static str)] {
        SWEEP_PARAMETERS
    }
}

/// Builds the density, optionally overriding one sweep parameter.
pub fn build_density(
    spec: &DensitySpec,
    param: Option<(&str, f64)>,
) -> Result<Density, String> {
    match spec {
        DensitySpec::Gaussian { mean, cov, n, d } => {
            let mut rows = cov.clone();
            if let Some(("r", v)) = param {
                for (i, row) in rows.iter_mut().enumerate() {
                    for (j, entry) in row.iter_mut().enumerate() {
                        if i != j {
                            *entry = v;
                        }
                    }
                }
            }
            let blocks = BlockStructure::new(*n, *d).map_err(|e| format!("density: {e}"))?;
            let g = GaussianDensity::from_rows(mean.clone(), &rows, blocks)
                .map_err(|e| format!("density: {e}"))?;
            Ok(Density::Gaussian(g))
        }
        DensitySpec::Grid { expr, axes, params } => {
            let axis = GridAxis::new(axes.lo, axes.hi, axes.m)
                .map_err(|e| format!("density.axes: {e}"))?;
            let mut params = params.clone();
            if let Some((name, v)) = param {
                if name != "theta" {
                    params.insert(name.to_string(), v);
                }
            }
            let g = catalog::build(expr, &params, axis).map_err(|e| format!("density: {e}"))?;
            Ok(Density::Grid(g))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_gaussian_config() {
        let text = r#"{
            "density": {"kind": "gaussian", "mean": [0, 0],
                        "cov": [[1, 0.5], [0.5, 1]], "n": 2, "d": 1},
            "verifications": ["optimized_stam"]
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert!(cfg.validate().is_empty());
        assert_eq!(cfg.seed, 7);
        let p = build_density(&cfg.density, None).unwrap();
        assert_eq!(p.blocks().n(), 2);
    }

    #[test]
    fn rejects_unknown_verification_and_bad_sweep() {
        let text = r#"{
            "density": {"kind": "gaussian", "mean": [0, 0],
                        "cov": [[1, 0], [0, 1]], "n": 2, "d": 1},
            "verifications": ["no_such_check"],
            "sweep": {"parameter": "r", "lo": 0.5, "hi": 0.5, "steps": 1}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        let issues = cfg.validate();
        assert!(issues.iter().any(|i| i.contains("no_such_check")));
        assert!(issues.iter().any(|i| i.contains("steps")));
        assert!(issues.iter().any(|i| i.contains("lo must be below hi")));
    }

    #[test]
    fn sweep_parameter_override() {
        let spec = DensitySpec::Gaussian {
            mean: vec![0.0, 0.0],
            cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            n: 2,
            d: 1,
        };
        let p = build_density(&spec, Some(("r", 0.5))).unwrap();
        let g = p.as_gaussian().unwrap();
        assert!((g.cov()[(0, 1)] - 0.5).abs() < 1e-15);
    }
}
