use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EdgeTestResult, Subgraph};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Columns `i, j, roi_i, roi_j, t, p, direction, rejected`.
pub fn write_edge_tests_csv(path: &Path, results: &[EdgeTestResult], ds: &Dataset) -> Result<()> {
    let mut out = String::from("i,j,roi_i,roi_j,t,p,direction,rejected\n");
    for r in results {
        let (i, j) = r.edge;
        writeln!(
            out,
            "{i},{j},{},{},{},{},{},{}",
            field(&ds.roi_name(i)),
            field(&ds.roi_name(j)),
            r.t_stat,
            r.p_value,
            r.direction.as_str(),
            r.rejected
        )
        .expect("writing to a String cannot fail");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_subgraph_json(path: &Path, g: &Subgraph) -> Result<()> {
    let json = serde_json::to_string_pretty(g)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Columns `subject, label, e0..e{d-1}, pc1, pc2`.
pub fn write_embeddings_csv(path: &Path, ds: &Dataset, embeddings: &[Vec<f64>], pcs: &[[f64; 2]]) -> Result<()> {
    if embeddings.len() != ds.len() || pcs.len() != ds.len() {
        return Err(Error::shape(format!(
            "{} subjects, {} embeddings, {} projections",
            ds.len(),
            embeddings.len(),
            pcs.len()
        )));
    }
    let d = embeddings.first().map_or(0, Vec::len);
    let mut out = String::from("subject,label");
    for k in 0..d {
        write!(out, ",e{k}").expect("writing to a String cannot fail");
    }
    out.push_str(",pc1,pc2\n");
    for ((s, e), p) in ds.subjects.iter().zip(embeddings).zip(pcs) {
        write!(out, "{},{}", field(&s.id), s.label).expect("writing to a String cannot fail");
        for v in e {
            write!(out, ",{v}").expect("writing to a String cannot fail");
        }
        writeln!(out, ",{},{}", p[0], p[1]).expect("writing to a String cannot fail");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{group_edge_tests, significant_subgraphs};
    use crate::dataset::{synth_generate, SynthConfig};
    use crate::numerics::Mat;

    #[test]
    fn exports_have_expected_shape() {
        let ds = synth_generate(40, 6, 1, &SynthConfig::with_fc_effect(0.4)).unwrap();
        let fcs: Vec<Mat> = ds.subjects.iter().map(|s| s.fc.clone()).collect();
        let rs = group_edge_tests(&fcs, &ds.labels(), 0.05).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("edge_tests.csv");
        write_edge_tests_csv(&p, &rs, &ds).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1 + 15);
        assert!(text.starts_with("i,j,roi_i,roi_j,t,p,direction,rejected\n"));

        let (weak, _) = significant_subgraphs(&rs, 6, None).unwrap();
        let p = dir.path().join("subgraph_weaker.json");
        write_subgraph_json(&p, &weak).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert!(v["nodes"].is_array() && v["edges"].is_array() && v["components"].is_array());

        let embs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, 1.0]).collect();
        let pcs = vec![[0.0, 0.0]; 40];
        let p = dir.path().join("embeddings.csv");
        write_embeddings_csv(&p, &ds, &embs, &pcs).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "subject,label,e0,e1,pc1,pc2");
        assert_eq!(text.lines().count(), 41);
    }
}
