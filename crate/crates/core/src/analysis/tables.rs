//! CSV renderings of comparison, coverage and prediction tables.

use super::compare::{ComparisonRow, CoverageRow};
use super::predict::PredictionReport;
use super::report::csv_lines;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per application; three columns per policy plus
/// `overhead_above_cntd`, the `;`-joined policies whose overhead exceeds
/// Countdown's. Every row must carry the same policy columns.
pub fn comparison_csv(rows: &[ComparisonRow]) -> Result<String, String> {
    let Some(first) = rows.first() else {
        return Ok(String::new());
    };
    let labels: Vec<&str> = first.outcomes.iter().map(|o| o.policy.as_str()).collect();
    let mut header = vec!["application".to_string()];
    for metric in ["overhead_pct", "energy_saving_pct", "power_saving_pct"] {
        header.extend(labels.iter().map(|l| format!("{l}_{metric}")));
    }
    header.push("overhead_above_cntd".into());
    let mut out = vec![header];
    for row in rows {
        let these: Vec<&str> = row.outcomes.iter().map(|o| o.policy.as_str()).collect();
        if these != labels {
            return Err(format!("{}: policy columns differ from the first row", row.application));
        }
        row.check_identity()?;
        let mut line = vec![row.application.clone()];
        line.extend(row.outcomes.iter().map(|o| o.metrics.overhead_pct.to_string()));
        line.extend(row.outcomes.iter().map(|o| o.metrics.energy_saving_pct.to_string()));
        line.extend(row.outcomes.iter().map(|o| o.metrics.power_saving_pct.to_string()));
        line.push(row.above_countdown().join(";"));
        out.push(line);
    }
    Ok(csv_lines(&out))
}

pub fn coverage_csv(rows: &[CoverageRow]) -> Result<String, String> {
    let Some(first) = rows.first() else {
        return Ok(String::new());
    };
    let labels: Vec<&str> = first.policies.iter().map(|c| c.policy.as_str()).collect();
    let mut header = vec!["application".to_string(), "tcomm_pct".into(), "tslack_pct".into()];
    header.extend(labels.iter().map(|l| format!("{l}_pct")));
    header.push("avg_mpi_ms".into());
    let mut out = vec![header];
    for row in rows {
        let these: Vec<&str> = row.policies.iter().map(|c| c.policy.as_str()).collect();
        if these != labels {
            return Err(format!("{}: policy columns differ from the first row", row.application));
        }
        let mut line = vec![
            row.application.clone(),
            row.tcomm_pct.to_string(),
            row.tslack_pct.to_string(),
        ];
        line.extend(row.policies.iter().map(|c| c.coverage_pct.to_string()));
        line.push(row.avg_mpi_ms.to_string());
        out.push(line);
    }
    Ok(csv_lines(&out))
}

/// Columns: application, records, then without/with SMAPE and sample
/// counts per target. Unscored cells are empty.
pub fn prediction_csv(reports: &[PredictionReport]) -> String {
    let mut header = vec!["application".to_string(), "records".into()];
    for variant in ["without_previous", "with_previous"] {
        for t in ["t_comp", "t_slack", "t_copy"] {
            header.push(format!("{t}_smape_{variant}"));
        }
    }
    header.push("samples_with_previous".into());
    let mut out = vec![header];
    for r in reports {
        let mut line = vec![r.application.clone(), r.records.to_string()];
        line.extend(r.targets.iter().map(|t| opt(t.smape_without_previous)));
        line.extend(r.targets.iter().map(|t| opt(t.smape_with_previous)));
        line.push(r.targets.first().map_or(0, |t| t.samples_with_previous).to_string());
        out.push(line);
    }
    csv_lines(&out)
}
