//! CSV emission for cohort statistics.
//!
//! The subject table has a fixed column order: subject_id, age, sex, bmi,
//! per-tissue volumes (mL, tissue code order), per-tissue masses (g, same
//! order), then tiv_l, gm_wm_ratio and gm_wm_ratio_cerebrum.

use super::ManifestError;
use crate::morpho::{CohortSummary, IcrpReport, RegressionResult, SubjectRecord};
use crate::vol::Tissue;
use std::path::Path;

pub fn stats_csv_header() -> Vec<String> {
    let mut cols = vec![
        "subject_id".to_string(),
        "age".to_string(),
        "sex".to_string(),
        "bmi".to_string(),
    ];
    for t in Tissue::TISSUES {
        cols.push(format!("vol_ml_{}", t.name()));
    }
    for t in Tissue::TISSUES {
        cols.push(format!("mass_g_{}", t.name()));
    }
    cols.push("tiv_l".into());
    cols.push("gm_wm_ratio".into());
    cols.push("gm_wm_ratio_cerebrum".into());
    cols
}

pub fn write_stats_csv(path: &Path, records: &[SubjectRecord]) -> Result<(), ManifestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(stats_csv_header())?;
    for r in records {
        let mut row = vec![
            r.id.clone(),
            format!("{}", r.age_years),
            r.sex.to_string(),
            format!("{:.6}", r.bmi),
        ];
        for t in Tissue::TISSUES {
            row.push(format!("{:.6}", r.volume_ml(t)));
        }
        for t in Tissue::TISSUES {
            row.push(format!("{:.6}", r.mass_g(t)));
        }
        row.push(format!("{:.6}", r.tiv_l));
        row.push(format!("{:.6}", r.gm_wm_ratio));
        row.push(format!("{:.6}", r.gm_wm_ratio_cerebrum));
        w.write_record(row)?;
    }
    w.flush().map_err(ManifestError::Io)?;
    Ok(())
}

pub fn write_regressions_csv(
    path: &Path,
    rows: &[(String, String, RegressionResult)],
) -> Result<(), ManifestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "group", "n", "slope", "intercept", "r_squared"])?;
    for (x, y, r) in rows {
        w.write_record([
            x.clone(),
            y.clone(),
            r.group.tag().to_string(),
            r.n.to_string(),
            format!("{:.9}", r.slope),
            format!("{:.9}", r.intercept),
            format!("{:.6}", r.r_squared),
        ])?;
    }
    w.flush().map_err(ManifestError::Io)?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, summary: &CohortSummary) -> Result<(), ManifestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "group", "tissue", "quantity", "n", "mean", "std", "min", "q1", "median", "q3", "max",
    ])?;
    for row in &summary.rows {
        for (quantity, s) in [("volume_ml", &row.volume_ml), ("mass_g", &row.mass_g)] {
            w.write_record([
                row.group.tag().to_string(),
                row.tissue.name().to_string(),
                quantity.to_string(),
                s.n.to_string(),
                format!("{:.6}", s.mean),
                format!("{:.6}", s.std),
                format!("{:.6}", s.min),
                format!("{:.6}", s.q1),
                format!("{:.6}", s.median),
                format!("{:.6}", s.q3),
                format!("{:.6}", s.max),
            ])?;
        }
    }
    w.flush().map_err(ManifestError::Io)?;
    Ok(())
}

pub fn write_icrp_csv(path: &Path, report: &IcrpReport) -> Result<(), ManifestError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "quantity", "group", "n", "mean", "std", "ref_lo", "ref_hi", "within_reference",
    ])?;
    for row in &report.rows {
        w.write_record([
            row.quantity.to_string(),
            row.group.tag().to_string(),
            row.n.to_string(),
            format!("{:.6}", row.mean),
            format!("{:.6}", row.std),
            format!("{:.6}", row.ref_lo),
            format!("{:.6}", row.ref_hi),
            row.within_reference.to_string(),
        ])?;
    }
    w.flush().map_err(ManifestError::Io)?;
    Ok(())
}
