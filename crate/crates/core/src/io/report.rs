//! Text, CSV and JSON renderings of a sweep.

use serde::Serialize;

use super::sweep::StepResult;
use crate::bounds::LeadingCycle;

pub const CSV_HEADER: [&str; 6] = ["h", "lb", "ub", "leading_cycle", "epsilon", "verdict"];

fn fmt_bound(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "inf".into()
    }
}

/// Table with four decimals, one row per step.
pub fn render_text(results: &[StepResult]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>8}  {:>9}  {:>9}  {:<24}  {}\n",
        "h", "lb", "ub", "leading cycle", "verdict"
    ));
    for r in results {
        match &r.outcome {
            Ok(o) => {
                let rep = &o.report;
                let ub = if rep.upper_available() {
                    format!("{:.4}", rep.sigma_upper)
                } else {
                    "n/a".into()
                };
                out.push_str(&format!(
                    "{:>8.4}  {:>9.4}  {:>9}  {:<24}  {}",
                    r.h,
                    rep.sigma_lower,
                    ub,
                    rep.leading_cycle.to_string(),
                    rep.verdict
                ));
                if !rep.upper_available() && rep.curvature.is_finite() {
                    out.push_str(&format!("  (C = {:.4} too large for this h)", rep.curvature));
                }
                if rep.epsilon > 0.0 && rep.epsilon.is_finite() {
                    out.push_str(&format!("  (epsilon = {:.3e}, candidate cycle possibly not leading)", rep.epsilon));
                }
                if let Some(e) = &o.ipa_error {
                    out.push_str(&format!("  (no upper bound: {e})"));
                }
                out.push('\n');
            }
            Err(e) => out.push_str(&format!("{:>8.4}  error: {e}\n", r.h)),
        }
    }
    out
}

pub fn render_csv(results: &[StepResult]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in results {
        match &r.outcome {
            Ok(o) => {
                let rep = &o.report;
                w.write_record([
                    format!("{}", r.h),
                    fmt_bound(rep.sigma_lower),
                    fmt_bound(rep.sigma_upper),
                    rep.leading_cycle.to_string(),
                    fmt_bound(rep.epsilon),
                    rep.verdict.to_string(),
                ])?;
            }
            Err(_) => {
                w.write_record([format!("{}", r.h), String::new(), String::new(), "error".into(), String::new(), "error".into()])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct JsonRow<'a> {
    h: f64,
    lb: Option<f64>,
    /// `null` when the upper bound is unavailable.
    ub: Option<f64>,
    curvature: Option<f64>,
    epsilon: Option<f64>,
    leading_cycle: String,
    cycle: Option<&'a LeadingCycle>,
    verdict: Option<String>,
    status: Option<&'static str>,
    iterations: Option<usize>,
    vertices: Option<usize>,
    error: Option<String>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn render_json(results: &[StepResult]) -> String {
    let rows: Vec<JsonRow> = results
        .iter()
        .map(|r| match &r.outcome {
            Ok(o) => {
                let rep = &o.report;
                JsonRow {
                    h: r.h,
                    lb: finite(rep.sigma_lower),
                    ub: finite(rep.sigma_upper),
                    curvature: finite(rep.curvature),
                    epsilon: finite(rep.epsilon),
                    leading_cycle: rep.leading_cycle.to_string(),
                    cycle: Some(&rep.leading_cycle),
                    verdict: Some(rep.verdict.to_string()),
                    status: o.certificate.as_ref().map(|c| match c.status {
                        crate::ipa::IpaStatus::Certified => "certified",
                        crate::ipa::IpaStatus::Approximate => "approximate",
                    }),
                    iterations: o.certificate.as_ref().map(|c| c.iterations_used),
                    vertices: o.certificate.as_ref().map(|c| c.total_vertices()),
                    error: o.ipa_error.clone(),
                }
            }
            Err(e) => JsonRow {
                h: r.h,
                lb: None,
                ub: None,
                curvature: None,
                epsilon: None,
                leading_cycle: "error".into(),
                cycle: None,
                verdict: None,
                status: None,
                iterations: None,
                vertices: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("rows serialize");
    s.push('\n');
    s
}
