use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{clip_fc, Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::numerics::Mat;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    pub label: i64,
    pub sc: String,
    pub fc: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi_names: Option<Vec<String>>,
    pub subjects: Vec<SubjectEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub planted_edges: Vec<[usize; 2]>,
}

/// Reads a headerless comma-separated matrix file.
pub fn read_matrix(path: &Path) -> Result<Mat> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ctx = || path.display().to_string();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| {
                    Error::load(ctx(), format!("line {}: bad number '{}': {e}", ln + 1, tok.trim()))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::load(
                    ctx(),
                    format!("line {} has {} values, expected {}", ln + 1, row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::load(ctx(), "empty matrix file"));
    }
    Mat::from_rows(&rows).map_err(|e| Error::load(ctx(), e.to_string()))
}

/// Writes with 17 significant digits so `read_matrix` recovers every bit.
pub fn write_matrix(path: &Path, m: &Mat) -> Result<()> {
    let mut out = String::with_capacity(m.rows() * m.cols() * 25);
    for i in 0..m.rows() {
        for (j, x) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{x:.16e}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::load(manifest_path.display().to_string(), e.to_string()))?;
    let n = manifest.n_nodes;

    let mut subjects = Vec::with_capacity(manifest.subjects.len());
    for entry in &manifest.subjects {
        let who = format!("subject '{}'", entry.id);
        let label = match entry.label {
            0 => 0u8,
            1 => 1u8,
            other => return Err(Error::load(who, format!("label must be 0 or 1, got {other}"))),
        };
        let load = |rel: &str, kind: &str| -> Result<Mat> {
            let path = dir.join(rel);
            let m = read_matrix(&path).map_err(|e| Error::load(who.clone(), e.to_string()))?;
            if m.shape() != (n, n) {
                return Err(Error::load(
                    who.clone(),
                    format!(
                        "{kind} file {} is {}x{}, expected {n}x{n}",
                        path.display(),
                        m.rows(),
                        m.cols()
                    ),
                ));
            }
            Ok(m)
        };
        let sc = load(&entry.sc, "SC")?;
        let raw_fc = load(&entry.fc, "FC")?;
        let fc = clip_fc(&raw_fc).map_err(|e| Error::load(who.clone(), format!("FC: {e}")))?;
        let rec = SubjectRecord::new(entry.id.clone(), label, sc, fc)
            .map_err(|e| Error::load(who.clone(), e.to_string()))?;
        subjects.push(rec);
    }

    let ds = Dataset {
        n_nodes: n,
        subjects,
        roi_names: manifest.roi_names,
        planted_edges: manifest.planted_edges.iter().map(|&[i, j]| (i, j)).collect(),
    };
    ds.validate()
        .map_err(|e| Error::load(dir.display().to_string(), e.to_string()))?;
    Ok(ds)
}

/// Writes `manifest.json` plus `sc/<id>.csv` and `fc/<id>.csv`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    for sub in ["sc", "fc"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut entries = Vec::with_capacity(ds.len());
    for s in &ds.subjects {
        let sc = format!("sc/{}.csv", s.id);
        let fc = format!("fc/{}.csv", s.id);
        write_matrix(&dir.join(&sc), &s.sc)?;
        write_matrix(&dir.join(&fc), &s.fc)?;
        entries.push(SubjectEntry {
            id: s.id.clone(),
            label: i64::from(s.label),
            sc,
            fc,
        });
    }
    let manifest = Manifest {
        n_nodes: ds.n_nodes,
        roi_names: ds.roi_names.clone(),
        subjects: entries,
        planted_edges: ds.planted_edges.iter().map(|&(i, j)| [i, j]).collect(),
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}
