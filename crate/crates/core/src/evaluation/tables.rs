use std::fmt::Write as _;
use std::io::Write;

use super::{DensityStudyResult, NormComparison, ValidationReport};
use crate::error::{invalid, Result};
use crate::ingest::ObservationSet;

/// Per-flight RMSE and 2σ capture, one row per report.
pub fn validation_table(reports: &[ValidationReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>6} {:>9} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7}",
        "flight", "n", "rmse_x", "rmse_y", "rmse_z", "rmse_nrm", "cap_x", "cap_y", "cap_z"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<16} {:>6} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>6.1}% {:>6.1}% {:>6.1}%",
            r.label(),
            r.points,
            r.rmse[0],
            r.rmse[1],
            r.rmse[2],
            r.norm_rmse,
            100.0 * r.capture[0],
            100.0 * r.capture[1],
            100.0 * r.capture[2]
        );
    }
    s
}

pub fn density_table(result: &DensityStudyResult) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:>6} {:>6}", "S", "n1");
    for f in &result.flights {
        let _ = write!(s, " {f:>10}");
    }
    let _ = writeln!(s, "  note");
    for row in &result.rows {
        let spacing = if row.spacing.iter().all(|v| *v == row.spacing[0]) {
            format!("{:.2}", row.spacing[0])
        } else {
            format!(
                "{:.2},{:.2},{:.2}",
                row.spacing[0], row.spacing[1], row.spacing[2]
            )
        };
        let _ = write!(s, "{spacing:>6} {:>6}", row.n1);
        for v in &row.norm_rmse {
            let _ = write!(s, " {v:>10.3}");
        }
        let _ = writeln!(
            s,
            "  {}",
            if row.pathological { "coverage gap" } else { "" }
        );
    }
    s
}

pub fn comparison_table(rows: &[NormComparison]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>6} {:>11} {:>11} {:>9}",
        "flight", "n", "e_vec_nrm", "e_nrm_nrm", "diff"
    );
    for r in rows {
        let label = if r.sources.is_empty() {
            "-".to_string()
        } else {
            r.sources.join("+")
        };
        let _ = writeln!(
            s,
            "{:<16} {:>6} {:>11.4} {:>11.4} {:>9.4}",
            label,
            r.points,
            r.rmse_vec_nrm,
            r.rmse_nrm_nrm,
            r.difference()
        );
    }
    s
}

/// Per-point residuals and SDs with their locations, for plotting.
pub fn write_residuals_csv<W: Write>(
    report: &ValidationReport,
    obs: &ObservationSet,
    writer: W,
) -> Result<()> {
    if obs.len() != report.points {
        return Err(invalid("observation set does not match the report"));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "t_s", "x", "y", "z", "res_x_uT", "res_y_uT", "res_z_uT", "sd_x_uT", "sd_y_uT", "sd_z_uT",
    ])?;
    for i in 0..report.points {
        let p = obs.locations[i];
        let r = report.residuals[i];
        let sd = report.sd[i];
        let fields = [
            report.timestamps[i],
            p[0],
            p[1],
            p[2],
            r[0],
            r[1],
            r[2],
            sd[0],
            sd[1],
            sd[2],
        ];
        w.write_record(fields.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
