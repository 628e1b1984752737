//! Dataset manifest: one CSV row per subject with volume paths and
//! demographics.
//!
//! Columns: `subject_id,t1,t2,labels,age,sex,height_m,weight_kg`.
//! Paths are stored relative to the manifest's directory and resolved on
//! load; every referenced file must exist.

use super::ManifestError;
use crate::morpho::{Demographics, Sex};
use std::path::{Path, PathBuf};

pub const MANIFEST_HEADER: [&str; 8] = [
    "subject_id",
    "t1",
    "t2",
    "labels",
    "age",
    "sex",
    "height_m",
    "weight_kg",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectEntry {
    pub id: String,
    pub t1: PathBuf,
    pub t2: PathBuf,
    pub labels: PathBuf,
    pub age_years: f64,
    pub sex: Sex,
    pub height_m: f64,
    pub weight_kg: f64,
}

impl SubjectEntry {
    pub fn demographics(&self) -> Demographics {
        Demographics {
            age_years: self.age_years,
            sex: self.sex,
            height_m: self.height_m,
            weight_kg: self.weight_kg,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DatasetManifest {
    pub subjects: Vec<SubjectEntry>,
}

impl DatasetManifest {
    /// Load a manifest, resolving relative paths against its directory and
    /// checking ids are unique and every referenced file exists.
    pub fn load(path: &Path) -> Result<DatasetManifest, ManifestError> {
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut subjects = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, row) in reader.records().enumerate() {
            let line = i + 2; // header is line 1
            let row = row?;
            if row.len() != MANIFEST_HEADER.len() {
                return Err(ManifestError::Parse {
                    line,
                    problem: format!("expected {} fields, got {}", MANIFEST_HEADER.len(), row.len()),
                });
            }
            let field = |k: usize| row.get(k).unwrap_or("").to_string();
            let parse_f64 = |k: usize, name: &str| -> Result<f64, ManifestError> {
                field(k).parse::<f64>().map_err(|_| ManifestError::Parse {
                    line,
                    problem: format!("bad {name} value {:?}", field(k)),
                })
            };
            let id = field(0);
            if !seen.insert(id.clone()) {
                return Err(ManifestError::DuplicateId(id));
            }
            let sex = Sex::parse(&field(5)).ok_or_else(|| ManifestError::Parse {
                line,
                problem: format!("bad sex value {:?} (expected F, M or unknown)", field(5)),
            })?;
            let resolve = |k: usize| -> PathBuf {
                let p = PathBuf::from(field(k));
                if p.is_absolute() {
                    p
                } else {
                    root.join(p)
                }
            };
            let entry = SubjectEntry {
                id: id.clone(),
                t1: resolve(1),
                t2: resolve(2),
                labels: resolve(3),
                age_years: parse_f64(4, "age")?,
                sex,
                height_m: parse_f64(6, "height_m")?,
                weight_kg: parse_f64(7, "weight_kg")?,
            };
            for (p, what) in [(&entry.t1, "t1"), (&entry.t2, "t2"), (&entry.labels, "labels")] {
                if !p.exists() {
                    return Err(ManifestError::MissingFile {
                        id: format!("{id} ({what})"),
                        path: p.display().to_string(),
                    });
                }
            }
            subjects.push(entry);
        }
        Ok(DatasetManifest { subjects })
    }

    /// Write the manifest with paths made relative to its directory where
    /// possible.
    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let root = path.parent().unwrap_or(Path::new("."));
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(MANIFEST_HEADER)?;
        for s in &self.subjects {
            let rel = |p: &Path| -> String {
                p.strip_prefix(root)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned()
            };
            writer.write_record([
                s.id.clone(),
                rel(&s.t1),
                rel(&s.t2),
                rel(&s.labels),
                format!("{}", s.age_years),
                s.sex.to_string(),
                format!("{}", s.height_m),
                format!("{}", s.weight_kg),
            ])?;
        }
        writer.flush().map_err(ManifestError::Io)?;
        Ok(())
    }
}
