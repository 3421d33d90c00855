//! Executes verification batches and parameter sweeps, and writes the
//! machine-readable reports.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use epilab_core::density::catalog::exchangeable_gaussian;
use epilab_core::density::{coverage_in_sigmas, Density, GridAxis, Weights, WARN_COVERAGE_SIGMAS};
use epilab_core::error::Error as CoreError;
use epilab_core::harness::{
    hao_jog_comparison, rioul_condition_check, verify_classical_epi, verify_conditional_epi,
    verify_conditional_linearized, verify_dependent_epi, verify_dependent_linearized,
    verify_lambda_fisher, verify_optimized_stam, verify_supermodular_epi, verify_weighted_fisher,
    HarnessConfig, Verdict, VerificationReport,
};
use epilab_core::supermodular::{
    class_c_check, gaussian_lsm_check, lattice_check, mixed_partials_check, LsmReport, LsmVerdict,
};

use crate::config::{build_density, DensitySpec, ExperimentConfig};

/// One output row: a verification report, tagged with the sweep parameter
/// value when produced by a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
    pub report: VerificationReport,
}

/// Sign-change and monotonicity digest of one verification across a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepDigest {
    pub id: String,
    pub values: Vec<f64>,
    pub margins: Vec<f64>,
    /// Parameter intervals (v_i, v_{i+1}) where the margin changes sign.
    pub sign_changes: Vec<(f64, f64)>,
    /// Parameter values where the margin is numerically zero.
    pub roots: Vec<f64>,
    pub monotone_nondecreasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub parameter: String,
    pub digests: Vec<SweepDigest>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub rows: Vec<ReportRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<SweepSummary>,
}

impl RunOutput {
    pub fn any_violated(&self) -> bool {
        self.rows
            .iter()
            .any(|r| r.report.verdict == Verdict::Violated)
    }
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Verified => "verified",
        Verdict::Violated => "violated",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn lsm_verification(id: String, rep: LsmReport) -> VerificationReport {
    let verdict = match rep.verdict {
        LsmVerdict::Holds => Verdict::Verified,
        LsmVerdict::Fails => Verdict::Violated,
        LsmVerdict::Inconclusive => Verdict::Inconclusive,
    };
    VerificationReport {
        id,
        lhs: rep.worst_violation,
        rhs: 0.0,
        margin: rep.worst_violation,
        tolerance: rep.tol,
        numeric_budget: 0.0,
        verdict,
        inputs: format!("{:?} certification", rep.method),
        notes: Vec::new(),
        remainder: None,
        certificate: Some(rep),
    }
}

struct RunContext {
    harness: HarnessConfig,
    lambda_raw: Option<Vec<f64>>,
    t_list: Vec<f64>,
    symmetric: bool,
}

impl RunContext {
    fn from_config(cfg: &ExperimentConfig) -> RunContext {
        RunContext {
            harness: cfg.harness_config(),
            lambda_raw: cfg.lambda.clone(),
            t_list: cfg.t_list.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]),
            symmetric: cfg.symmetric,
        }
    }

    fn raw_lambda(&self, n: usize) -> Vec<f64> {
        self.lambda_raw.clone().unwrap_or_else(|| vec![1.0; n])
    }

    fn weights(&self, n: usize) -> Result<Weights, CoreError> {
        match &self.lambda_raw {
            Some(l) => Weights::normalized(l.clone()),
            None => Weights::equal(n),
        }
    }
}

fn run_verification(
    id: &str,
    p: &Density,
    ctx: &RunContext,
) -> Result<Vec<VerificationReport>, CoreError> {
    let cfg = &ctx.harness;
    let n = p.blocks().n();
    match id {
        "classical_epi" => Ok(vec![verify_classical_epi(p, cfg)?]),
        "lambda_fisher" => Ok(vec![verify_lambda_fisher(p, &ctx.raw_lambda(n), cfg)?]),
        "optimized_stam" => Ok(vec![verify_optimized_stam(p, cfg)?]),
        "weighted_fisher" => Ok(vec![verify_weighted_fisher(p, &ctx.weights(n)?, cfg)?]),
        "dependent_linearized" => {
            verify_dependent_linearized(p, &ctx.weights(n)?, &ctx.t_list, cfg)
        }
        "dependent_epi" => Ok(vec![verify_dependent_epi(p, cfg)?]),
        "conditional_linearized" => {
            verify_conditional_linearized(p, &ctx.weights(n)?, &ctx.t_list, cfg)
        }
        "conditional_epi" => Ok(verify_conditional_epi(p, cfg)?
            .into_iter()
            .filter(|r| r.id == "conditional_epi")
            .collect()),
        "conditional_epi_clean" => Ok(verify_conditional_epi(p, cfg)?
            .into_iter()
            .filter(|r| r.id == "conditional_epi_clean")
            .collect()),
        "supermodular_epi" => Ok(vec![verify_supermodular_epi(p, cfg)?]),
        "rioul_condition" => Ok(vec![rioul_condition_check(p, &ctx.t_list, cfg)?]),
        "hao_jog" => Ok(vec![hao_jog_comparison(p, ctx.symmetric, cfg)?]),
        "lsm_certificate" => match p {
            Density::Gaussian(g) => Ok(vec![lsm_verification(
                "lsm_certificate[gaussian_inverse]".into(),
                gaussian_lsm_check(g)?,
            )]),
            Density::Grid(g) => Ok(vec![
                lsm_verification(
                    "lsm_certificate[mixed_partials]".into(),
                    mixed_partials_check(g, cfg.lsm.tol)?,
                ),
                lsm_verification("lsm_certificate[lattice]".into(), lattice_check(g, &cfg.lsm)),
            ]),
        },
        "class_c" => {
            let reports = class_c_check(p, &cfg.lsm)?;
            Ok(reports
                .into_iter()
                .map(|cr| lsm_verification(format!("class_c[s={}]", cr.s), cr.report))
                .collect())
        }
        other => Err(CoreError::InvalidInput(format!(
            "unknown verification id '{other}'"
        ))),
    }
}

/// Warns when a catalog Gaussian discretization covers between 6 and 8
/// standard deviations (below 6 the construction refuses outright).
fn warn_coverage(spec: &DensitySpec) {
    if let DensitySpec::Grid { expr, axes, params } = spec {
        let gaussian = match expr.as_str() {
            "correlated_gaussian" => {
                exchangeable_gaussian(2, params.get("r").copied().unwrap_or(0.5)).ok()
            }
            "gaussian_product" => {
                let v1 = params.get("v1").copied().unwrap_or(1.0);
                let v2 = params.get("v2").copied().unwrap_or(1.0);
                epilab_core::density::catalog::independent_gaussian(&[v1, v2]).ok()
            }
            _ => None,
        };
        if let (Some(g), Ok(axis)) = (gaussian, GridAxis::new(axes.lo, axes.hi, axes.m)) {
            if let Ok(cov) = coverage_in_sigmas(&g, &[axis, axis]) {
                if cov < WARN_COVERAGE_SIGMAS {
                    eprintln!(
                        "warning: grid covers only {cov:.1} standard deviations (8 recommended)"
                    );
                }
            }
        }
    }
}

pub fn execute_run(cfg: &ExperimentConfig) -> Result<RunOutput, String> {
    warn_coverage(&cfg.density);
    let p = build_density(&cfg.density, None)?;
    let ctx = RunContext::from_config(cfg);
    let results: Vec<Result<Vec<VerificationReport>, CoreError>> = cfg
        .verifications
        .par_iter()
        .map(|id| run_verification(id, &p, &ctx))
        .collect();
    let mut rows = Vec::new();
    for res in results {
        let reports = res.map_err(|e| format!("verification failed: {e}"))?;
        rows.extend(reports.into_iter().map(|report| ReportRow {
            param: None,
            report,
        }));
    }
    Ok(RunOutput {
        rows,
        summary: None,
    })
}

pub fn execute_sweep(cfg: &ExperimentConfig) -> Result<RunOutput, String> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| "sweep: config has no sweep section".to_string())?;
    warn_coverage(&cfg.density);
    let values = sweep.values();
    let per_point: Vec<Result<Vec<ReportRow>, String>> = values
        .par_iter()
        .map(|&v| {
            let (density_param, ctx) = if sweep.parameter == "theta" {
                let mut ctx = RunContext::from_config(cfg);
                ctx.lambda_raw = Some(vec![v.cos(), v.sin()]);
                (None, ctx)
            } else {
                (
                    Some((sweep.parameter.as_str(), v)),
                    RunContext::from_config(cfg),
                )
            };
            let p = build_density(&cfg.density, density_param)?;
            let mut rows = Vec::new();
            for id in &cfg.verifications {
                let reports = run_verification(id, &p, &ctx)
                    .map_err(|e| format!("verification '{id}' at {}={v}: {e}", sweep.parameter))?;
                rows.extend(reports.into_iter().map(|report| ReportRow {
                    param: Some(v),
                    report,
                }));
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for point in per_point {
        rows.extend(point?);
    }
    let summary = summarize_sweep(&sweep.parameter, &values, &rows);
    Ok(RunOutput {
        rows,
        summary: Some(summary),
    })
}

fn summarize_sweep(parameter: &str, values: &[f64], rows: &[ReportRow]) -> SweepSummary {
    let mut ids: Vec<String> = Vec::new();
    for row in rows {
        if !ids.contains(&row.report.id) {
            ids.push(row.report.id.clone());
        }
    }
    let digests = ids
        .into_iter()
        .map(|id| {
            let margins: Vec<f64> = values
                .iter()
                .map(|&v| {
                    rows.iter()
                        .find(|r| r.param == Some(v) && r.report.id == id)
                        .map(|r| r.report.margin)
                        .unwrap_or(f64::NAN)
                })
                .collect();
            let mut sign_changes = Vec::new();
            let mut roots = Vec::new();
            // Sign changes are bracketed between consecutive samples with a
            // resolvable margin, so an exact root between them still counts.
            let mut prev_nonzero: Option<usize> = None;
            for (k, &m) in margins.iter().enumerate() {
                if m.abs() < 1e-12 {
                    roots.push(values[k]);
                    continue;
                }
                if let Some(i) = prev_nonzero {
                    if margins[i] * m < 0.0 {
                        sign_changes.push((values[i], values[k]));
                    }
                }
                prev_nonzero = Some(k);
            }
            let monotone_nondecreasing = margins.windows(2).all(|w| w[1] >= w[0] - 1e-12);
            SweepDigest {
                id,
                values: values.to_vec(),
                margins,
                sign_changes,
                roots,
                monotone_nondecreasing,
            }
        })
        .collect();
    SweepSummary {
        parameter: parameter.to_string(),
        digests,
    }
}

/// Serialized alongside the rows so the JSON report is self-describing.
#[derive(Serialize)]
struct JsonReport<'a> {
    config: &'a ExperimentConfig,
    rows: &'a [ReportRow],
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<&'a SweepSummary>,
}

pub fn render_csv(output: &RunOutput) -> String {
    let mut s = String::from("id,param,lhs,rhs,margin,budget,verdict\n");
    for row in &output.rows {
        let param = row.param.map(|v| v.to_string()).unwrap_or_default();
        let r = &row.report;
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.id,
            param,
            r.lhs,
            r.rhs,
            r.margin,
            r.numeric_budget,
            verdict_str(r.verdict)
        ));
    }
    s
}

pub fn write_outputs(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    output: &RunOutput,
) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let json = JsonReport {
        config: cfg,
        rows: &output.rows,
        summary: output.summary.as_ref(),
    };
    let mut f = std::fs::File::create(out_dir.join("report.json"))?;
    f.write_all(serde_json::to_string_pretty(&json).expect("reports serialize").as_bytes())?;
    f.write_all(b"\n")?;
    let mut f = std::fs::File::create(out_dir.join("report.csv"))?;
    f.write_all(render_csv(output).as_bytes())?;
    Ok(())
}

pub fn print_table(output: &RunOutput) {
    println!(
        "{:<34} {:>8} {:>14} {:>14} {:>14} {:>14}  verdict",
        "id", "param", "lhs", "rhs", "margin", "budget"
    );
    for row in &output.rows {
        let r = &row.report;
        let param = row
            .param
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<34} {:>8} {:>14.6} {:>14.6} {:>14.6} {:>14.3e}  {}",
            r.id,
            param,
            r.lhs,
            r.rhs,
            r.margin,
            r.numeric_budget,
            verdict_str(r.verdict)
        );
    }
    if let Some(summary) = &output.summary {
        for d in &summary.digests {
            let changes: Vec<String> = d
                .sign_changes
                .iter()
                .map(|(a, b)| format!("({a}, {b})"))
                .collect();
            println!(
                "sweep {}: {} sign change(s) {:?}, roots {:?}, monotone nondecreasing: {}",
                d.id,
                d.sign_changes.len(),
                changes,
                d.roots,
                d.monotone_nondecreasing
            );
        }
    }
}
