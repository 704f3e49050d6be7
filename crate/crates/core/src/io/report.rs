//! Human-readable report rendering: the RMSE summary (estimators as
//! columns, head/flow rows, mean ± std cells) and the per-estimator
//! localization KPI table with per-leak rows and an AVERAGE row.

use crate::localization::LocalizationReport;
use crate::pipeline::BatchSummary;

/// Summary table in the estimation-results layout: one column per
/// estimator, one row per quantity.
pub fn render_summary_table(summary: &BatchSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "Estimation RMSE over {} scenarios (mean +/- std), seed {}\n",
        summary.scenarios.len(),
        summary.rng_seed
    ));
    if !summary.rmse_available {
        out.push_str("(ingested measurements: no ground truth, RMSE unavailable)\n");
        return out;
    }
    let width = 22usize;
    out.push_str(&format!("{:<12}", ""));
    for name in &summary.estimators {
        out.push_str(&format!("{name:>width$}"));
    }
    out.push('\n');
    for (label, pick) in [
        ("h (cm)", true),
        ("q (l/s)", false),
    ] {
        out.push_str(&format!("{label:<12}"));
        for name in &summary.estimators {
            let cell = match summary.stats.get(name) {
                Some(stats) => {
                    let (mean, std) = if pick {
                        (stats.head_mean_cm, stats.head_std_cm)
                    } else {
                        (stats.flow_mean_lps, stats.flow_std_lps)
                    };
                    format!("{mean:.2} +/- {std:.2}")
                }
                None => "-".to_string(),
            };
            out.push_str(&format!("{cell:>width$}"));
        }
        out.push('\n');
    }
    if summary.failed_scenarios > 0 {
        out.push_str(&format!(
            "WARNING: {} scenario(s) had failures; see summary.json\n",
            summary.failed_scenarios
        ));
    }
    out
}

/// Per-leak KPI table for one estimator: hit flag, weighted candidate
/// distances, search ratio, best-candidate distances, then the AVERAGE row
/// over the numeric columns (absent KPIs are skipped in the averages).
pub fn render_localization_table(
    estimator: &str,
    reports: &[(String, LocalizationReport)],
) -> String {
    let mut out = String::new();
    out.push_str(&format!("Localization KPIs: {estimator}\n"));
    out.push_str(&format!(
        "{:<12}{:>6}{:>14}{:>14}{:>10}{:>14}{:>14}\n",
        "leak", "b_c", "d_c2l (m)", "p_c2l (#)", "rho_c (%)", "d_best (m)", "p_best (#)"
    ));
    let fmt_opt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.2}"),
        None => "-".to_string(),
    };
    let mut sums = [0.0f64; 5];
    let mut counts = [0usize; 5];
    let mut accumulate = |idx: usize, v: Option<f64>| {
        if let Some(x) = v {
            sums[idx] += x;
            counts[idx] += 1;
        }
    };
    for (label, report) in reports {
        out.push_str(&format!(
            "{:<12}{:>6}{:>14}{:>14}{:>10}{:>14}{:>14}\n",
            label,
            if report.hit { 1 } else { 0 },
            fmt_opt(report.weighted_distance_m),
            fmt_opt(report.weighted_distance_pipes),
            format!("{:.2}", report.search_ratio_percent),
            fmt_opt(report.best_distance_m),
            fmt_opt(report.best_distance_pipes),
        ));
        accumulate(0, report.weighted_distance_m);
        accumulate(1, report.weighted_distance_pipes);
        accumulate(2, Some(report.search_ratio_percent));
        accumulate(3, report.best_distance_m);
        accumulate(4, report.best_distance_pipes);
    }
    let avg = |idx: usize| -> String {
        if counts[idx] == 0 {
            "-".to_string()
        } else {
            format!("{:.2}", sums[idx] / counts[idx] as f64)
        }
    };
    out.push_str(&format!(
        "{:<12}{:>6}{:>14}{:>14}{:>10}{:>14}{:>14}\n",
        "AVERAGE",
        "",
        avg(0),
        avg(1),
        avg(2),
        avg(3),
        avg(4),
    ));
    out
}
