//! Subjects, datasets, FC preprocessing, cross-validation plans and the
//! synthetic connectome generator.

mod folds;
mod io;
mod synth;

pub use folds::{make_folds, Fold, FoldPlan};
pub use io::{load_dataset, read_matrix, save_dataset, write_matrix, Manifest, SubjectEntry, MANIFEST};
pub use synth::{synth_generate, SynthConfig, MAPPING_GAIN};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsp::validate_adjacency;
use crate::numerics::Mat;

const SYM_TOL: f64 = 1e-9;

/// One subject: structural and functional connectomes plus a binary label
/// (0 = non-drinker, 1 = heavy drinker in the original cohort).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub label: u8,
    pub sc: Mat,
    pub fc: Mat,
}

impl SubjectRecord {
    pub fn new(id: impl Into<String>, label: u8, sc: Mat, fc: Mat) -> Result<Self> {
        let rec = SubjectRecord {
            id: id.into(),
            label,
            sc,
            fc,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn n_nodes(&self) -> usize {
        self.sc.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |e: Error| Error::invalid(format!("subject '{}': {e}", self.id));
        if self.label > 1 {
            return Err(Error::invalid(format!(
                "subject '{}': label must be 0 or 1, got {}",
                self.id, self.label
            )));
        }
        validate_adjacency(&self.sc, "SC").map_err(ctx)?;
        validate_fc(&self.fc).map_err(ctx)?;
        if self.sc.shape() != self.fc.shape() {
            return Err(Error::shape(format!(
                "subject '{}': SC is {:?} but FC is {:?}",
                self.id,
                self.sc.shape(),
                self.fc.shape()
            )));
        }
        Ok(())
    }
}

/// FC invariants: square, symmetric, entries in `[0, 1]`, unit diagonal.
pub fn validate_fc(fc: &Mat) -> Result<()> {
    if !fc.is_square() {
        return Err(Error::invalid(format!(
            "FC must be square, got {}x{}",
            fc.rows(),
            fc.cols()
        )));
    }
    if fc.max_asymmetry() > SYM_TOL {
        return Err(Error::invalid("FC is not symmetric"));
    }
    if let Some(x) = fc.data().iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::invalid(format!("FC entry {x} outside [0, 1]")));
    }
    if fc.diagonal().iter().any(|&d| d != 1.0) {
        return Err(Error::invalid("FC diagonal must be exactly 1"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n_nodes: usize,
    pub subjects: Vec<SubjectRecord>,
    pub roi_names: Option<Vec<String>>,
    /// Ground-truth edges `(i, j)`, `i < j`, carrying a planted group effect.
    pub planted_edges: Vec<(usize, usize)>,
}

impl Dataset {
    pub fn new(n_nodes: usize, subjects: Vec<SubjectRecord>) -> Result<Self> {
        let ds = Dataset {
            n_nodes,
            subjects,
            roi_names: None,
            planted_edges: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.subjects.iter().map(|s| s.label).collect()
    }

    /// `(non-positive count, positive count)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.subjects.iter().filter(|s| s.label == 1).count();
        (self.len() - pos, pos)
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.subjects {
            if s.n_nodes() != self.n_nodes {
                return Err(Error::shape(format!(
                    "subject '{}' has {} nodes, dataset has {}",
                    s.id,
                    s.n_nodes(),
                    self.n_nodes
                )));
            }
            s.validate()?;
        }
        if let Some(names) = &self.roi_names {
            if names.len() != self.n_nodes {
                return Err(Error::invalid(format!(
                    "{} ROI names for {} nodes",
                    names.len(),
                    self.n_nodes
                )));
            }
        }
        for &(i, j) in &self.planted_edges {
            if !(i < j && j < self.n_nodes) {
                return Err(Error::invalid(format!("planted edge ({i}, {j}) is malformed")));
            }
        }
        Ok(())
    }

    /// Fails unless both classes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        let (neg, pos) = self.class_counts();
        if neg == 0 || pos == 0 {
            return Err(Error::invalid(format!(
                "training needs both classes, found {neg} negatives and {pos} positives"
            )));
        }
        Ok(())
    }

    pub fn roi_name(&self, i: usize) -> String {
        self.roi_names
            .as_ref()
            .map(|n| n[i].clone())
            .unwrap_or_else(|| format!("roi{i}"))
    }
}

/// Drops negative correlations: negatives become 0, the diagonal becomes 1.
pub fn clip_fc(raw: &Mat) -> Result<Mat> {
    if !raw.is_square() {
        return Err(Error::invalid(format!(
            "FC must be square, got {}x{}",
            raw.rows(),
            raw.cols()
        )));
    }
    if raw.max_asymmetry() > SYM_TOL {
        return Err(Error::invalid(format!(
            "FC is not symmetric (max |a_ij - a_ji| = {:e})",
            raw.max_asymmetry()
        )));
    }
    if let Some(x) = raw.data().iter().find(|x| !(x.abs() <= 1.0 + SYM_TOL)) {
        return Err(Error::invalid(format!("correlation {x} outside [-1, 1]")));
    }
    let n = raw.rows();
    Ok(Mat::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (0.5 * (raw[(i, j)] + raw[(j, i)])).clamp(0.0, 1.0)
        }
    }))
}

/// Block-diagonal `[[SC, 0], [0, FC − diag(FC)]]`.
pub fn combine_block(sc: &Mat, fc: &Mat) -> Result<Mat> {
    if !sc.is_square() || sc.shape() != fc.shape() {
        return Err(Error::shape(format!(
            "combine_block needs matching square inputs, got {:?} and {:?}",
            sc.shape(),
            fc.shape()
        )));
    }
    let n = sc.rows();
    let mut out = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = sc[(i, j)];
            if i != j {
                out[(n + i, n + j)] = fc[(i, j)];
            }
        }
    }
    Ok(out)
}

/// FC as an adjacency matrix: unit self-correlations removed.
pub fn fc_adjacency(fc: &Mat) -> Mat {
    let mut a = fc.clone();
    for i in 0..a.rows() {
        a[(i, i)] = 0.0;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn random_corr(rng: &mut Rng, n: usize) -> Mat {
        let mut m = Mat::identity(n);
        for i in 0..n {
            for j in i + 1..n {
                let r = rng.uniform(-1.0, 1.0);
                m[(i, j)] = r;
                m[(j, i)] = r;
            }
        }
        m
    }

    #[test]
    fn clip_leaves_nonnegative_entries() {
        let m = Mat::from_rows(&[[1.0, 0.4], [0.4, 1.0]]).unwrap();
        assert_eq!(clip_fc(&m).unwrap(), m);
    }

    #[test]
    fn clip_zeroes_negatives() {
        let m = Mat::from_rows(&[[0.9, -0.3], [-0.3, 1.0]]).unwrap();
        let c = clip_fc(&m).unwrap();
        assert_eq!(c, Mat::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap());
    }

    #[test]
    fn clip_zero_exactly_where_negative() {
        let mut rng = Rng::new(12);
        let raw = random_corr(&mut rng, 15);
        let c = clip_fc(&raw).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                if i == j {
                    assert_eq!(c[(i, j)], 1.0);
                } else if raw[(i, j)] < 0.0 {
                    assert_eq!(c[(i, j)], 0.0);
                } else {
                    assert_eq!(c[(i, j)], raw[(i, j)]);
                }
            }
        }
        validate_fc(&c).unwrap();
    }

    #[test]
    fn clip_rejects_out_of_range() {
        let m = Mat::from_rows(&[[1.0, 1.2], [1.2, 1.0]]).unwrap();
        assert!(matches!(clip_fc(&m), Err(Error::Validation(_))));
        let asym = Mat::from_rows(&[[1.0, 0.2], [0.3, 1.0]]).unwrap();
        assert!(clip_fc(&asym).is_err());
    }

    #[test]
    fn combine_block_layout() {
        let sc = Mat::from_rows(&[[0.0, 2.0], [2.0, 0.0]]).unwrap();
        let fc = Mat::from_rows(&[[1.0, 0.5], [0.5, 1.0]]).unwrap();
        let c = combine_block(&sc, &fc).unwrap();
        assert_eq!(
            c,
            Mat::from_rows(&[
                [0.0, 2.0, 0.0, 0.0],
                [2.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.5],
                [0.0, 0.0, 0.5, 0.0],
            ])
            .unwrap()
        );
        assert_eq!(
            combine_block(&Mat::zeros(3, 3), &Mat::zeros(3, 3)).unwrap(),
            Mat::zeros(6, 6)
        );
        assert!(combine_block(&sc, &Mat::zeros(3, 3)).is_err());
    }

    #[test]
    fn combine_block_row_sums_concatenate() {
        let mut rng = Rng::new(4);
        let n = 6;
        let mut sc = Mat::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let w = rng.uniform(0.0, 3.0);
                sc[(i, j)] = w;
                sc[(j, i)] = w;
            }
        }
        let fc = clip_fc(&random_corr(&mut rng, n)).unwrap();
        let c = combine_block(&sc, &fc).unwrap();
        let mut want = sc.row_sums();
        want.extend(fc_adjacency(&fc).row_sums());
        assert_eq!(c.row_sums(), want);
        assert_eq!(c.max_asymmetry(), 0.0);
    }

    #[test]
    fn subject_validation() {
        let sc = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let fc = Mat::identity(2);
        assert!(SubjectRecord::new("a", 1, sc.clone(), fc.clone()).is_ok());
        assert!(SubjectRecord::new("b", 2, sc.clone(), fc.clone()).is_err());
        assert!(SubjectRecord::new("c", 0, Mat::identity(2), fc.clone()).is_err());
        assert!(SubjectRecord::new("d", 0, sc, Mat::zeros(2, 2)).is_err());
    }
}
