//! Edge-wise group statistics on reconstructed FC, significant subgraphs,
//! and low-dimensional projections of the graph embeddings.

mod export;
mod stats;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use export::{write_edge_tests_csv, write_embeddings_csv, write_subgraph_json};
pub use stats::{bh_cutoff, bh_fdr, inc_beta, ln_gamma, student_t_two_sided, welch_t, WelchTest};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gsp::eig_sym;
use crate::model::{forward, Checkpoint};
use crate::numerics::Mat;

/// Per-subject decoder outputs and pooled embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub sigmas: Vec<Mat>,
    pub embeddings: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

pub fn reconstruct_all(ckpt: &Checkpoint, ds: &Dataset) -> Result<Reconstruction> {
    if ckpt.spec.d0 != ds.n_nodes {
        return Err(Error::load(
            "checkpoint",
            format!("model expects {} nodes, dataset has {}", ckpt.spec.d0, ds.n_nodes),
        ));
    }
    let params = ckpt.params();
    let traces = ds
        .subjects
        .par_iter()
        .map(|s| forward(&ckpt.spec, &params, s))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Reconstruction {
        sigmas: Vec::with_capacity(traces.len()),
        embeddings: Vec::with_capacity(traces.len()),
        probs: Vec::with_capacity(traces.len()),
    };
    for t in traces {
        out.probs.push(t.y_hat);
        out.embeddings.push(t.xg);
        out.sigmas.push(t.sigma_hat);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Group-1 mean below group-0 mean.
    Weaker,
    Stronger,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Weaker => "weaker",
            Direction::Stronger => "stronger",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeTestResult {
    pub edge: (usize, usize),
    pub t_stat: f64,
    pub p_value: f64,
    pub direction: Direction,
    pub rejected: bool,
    pub mean_group0: f64,
    pub mean_group1: f64,
}

/// One Welch test per upper-triangular edge, Benjamini–Hochberg over all
/// of them at level `q`. Results are ordered row-major by edge.
pub fn group_edge_tests(sigmas: &[Mat], labels: &[u8], q: f64) -> Result<Vec<EdgeTestResult>> {
    if sigmas.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} matrices but {} labels",
            sigmas.len(),
            labels.len()
        )));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("FDR level must lie in (0, 1), got {q}")));
    }
    let n = sigmas.first().map_or(0, Mat::rows);
    if sigmas.iter().any(|s| s.shape() != (n, n)) {
        return Err(Error::shape("all matrices must share one square shape"));
    }
    let g1: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let g0: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    if g0.len() < 2 || g1.len() < 2 {
        return Err(Error::invalid(format!(
            "each group needs at least 2 subjects, got {} and {}",
            g0.len(),
            g1.len()
        )));
    }
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let tests = edges
        .par_iter()
        .map(|&(i, j)| {
            // Sorted so the sums do not depend on subject order.
            let mut a: Vec<f64> = g1.iter().map(|&s| sigmas[s][(i, j)]).collect();
            let mut b: Vec<f64> = g0.iter().map(|&s| sigmas[s][(i, j)]).collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            let w = welch_t(&a, &b)?;
            let m1 = a.iter().sum::<f64>() / a.len() as f64;
            let m0 = b.iter().sum::<f64>() / b.len() as f64;
            Ok((w, m0, m1))
        })
        .collect::<Result<Vec<_>>>()?;
    let p: Vec<f64> = tests.iter().map(|(w, _, _)| w.p).collect();
    let rejected = bh_fdr(&p, q);
    Ok(edges
        .into_iter()
        .zip(tests)
        .zip(rejected)
        .map(|((edge, (w, m0, m1)), rejected)| EdgeTestResult {
            edge,
            t_stat: w.t,
            p_value: w.p,
            direction: if m1 < m0 { Direction::Weaker } else { Direction::Stronger },
            rejected,
            mean_group0: m0,
            mean_group1: m1,
        })
        .collect())
}

/// Recall and precision of the rejected set against known edges.
pub fn planted_recovery(results: &[EdgeTestResult], planted: &[(usize, usize)]) -> (f64, f64) {
    let norm = |(i, j): (usize, usize)| (i.min(j), i.max(j));
    let truth: std::collections::BTreeSet<(usize, usize)> = planted.iter().map(|&e| norm(e)).collect();
    let found: Vec<(usize, usize)> = results.iter().filter(|r| r.rejected).map(|r| r.edge).collect();
    let hits = found.iter().filter(|e| truth.contains(e)).count() as f64;
    let recall = if truth.is_empty() { f64::NAN } else { hits / truth.len() as f64 };
    let precision = if found.is_empty() { f64::NAN } else { hits / found.len() as f64 };
    (recall, precision)
}

/// Rejected edges of one direction with their group-0 mean strength.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subgraph {
    pub nodes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub roi_names: Vec<String>,
    pub edges: Vec<(usize, usize, f64)>,
    pub components: Vec<Vec<usize>>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut x = x;
        while self.0[x] != r {
            let next = self.0[x];
            self.0[x] = r;
            x = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn subgraph(results: &[EdgeTestResult], dir: Direction, n_nodes: usize, roi_names: Option<&[String]>) -> Subgraph {
    let edges: Vec<(usize, usize, f64)> = results
        .iter()
        .filter(|r| r.rejected && r.direction == dir)
        .map(|r| (r.edge.0, r.edge.1, r.mean_group0))
        .collect();
    let mut uf = UnionFind((0..n_nodes).collect());
    let mut present = vec![false; n_nodes];
    for &(i, j, _) in &edges {
        uf.union(i, j);
        present[i] = true;
        present[j] = true;
    }
    let nodes: Vec<usize> = (0..n_nodes).filter(|&v| present[v]).collect();
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &v in &nodes {
        groups.entry(uf.find(v)).or_default().push(v);
    }
    Subgraph {
        roi_names: roi_names
            .map(|names| nodes.iter().map(|&v| names[v].clone()).collect())
            .unwrap_or_default(),
        nodes,
        edges,
        components: groups.into_values().collect(),
    }
}

/// Splits the rejected edges into the weaker and stronger subgraphs.
pub fn significant_subgraphs(
    results: &[EdgeTestResult],
    n_nodes: usize,
    roi_names: Option<&[String]>,
) -> Result<(Subgraph, Subgraph)> {
    if let Some(bad) = results.iter().find(|r| r.edge.1 >= n_nodes || r.edge.0 >= r.edge.1) {
        return Err(Error::invalid(format!("edge {:?} is not an upper-triangular pair of {n_nodes} nodes", bad.edge)));
    }
    if roi_names.is_some_and(|r| r.len() != n_nodes) {
        return Err(Error::invalid("roi_names must have one entry per node"));
    }
    Ok((
        subgraph(results, Direction::Weaker, n_nodes, roi_names),
        subgraph(results, Direction::Stronger, n_nodes, roi_names),
    ))
}

/// Coordinates on the top two principal components of the embeddings.
pub fn project_embeddings(embeddings: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    if embeddings.len() < 2 {
        return Err(Error::invalid("projection needs at least 2 embeddings"));
    }
    let d = embeddings[0].len();
    if d < 2 {
        return Err(Error::invalid(format!("projection needs d_emb >= 2, got {d}")));
    }
    if embeddings.iter().any(|e| e.len() != d) {
        return Err(Error::shape("embeddings must share one dimension"));
    }
    let n = embeddings.len() as f64;
    let mean: Vec<f64> = (0..d).map(|k| embeddings.iter().map(|e| e[k]).sum::<f64>() / n).collect();
    let x = Mat::from_fn(embeddings.len(), d, |i, k| embeddings[i][k] - mean[k]);
    let cov = x.t_matmul(&x)?.scale(1.0 / (n - 1.0));
    let (_, vecs) = eig_sym(&cov)?;
    let (p1, p2) = (vecs.col_vec(d - 1), vecs.col_vec(d - 2));
    Ok((0..embeddings.len())
        .map(|i| {
            let r = x.row(i);
            [crate::numerics::dot(r, &p1), crate::numerics::dot(r, &p2)]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_generate, SynthConfig};
    use crate::model::{EncoderSpec, ModelParams, Pooling};
    use crate::numerics::Rng;
    use proptest::prelude::{prop_assert_eq, proptest};

    fn result(i: usize, j: usize, dir: Direction, rejected: bool) -> EdgeTestResult {
        EdgeTestResult {
            edge: (i, j),
            t_stat: 0.0,
            p_value: 0.5,
            direction: dir,
            rejected,
            mean_group0: 0.25,
            mean_group1: 0.5,
        }
    }

    #[test]
    fn subgraph_components() {
        let rs = vec![
            result(0, 1, Direction::Weaker, true),
            result(1, 2, Direction::Weaker, true),
            result(5, 6, Direction::Weaker, true),
            result(2, 3, Direction::Stronger, true),
            result(3, 4, Direction::Stronger, false),
        ];
        let (weak, strong) = significant_subgraphs(&rs, 7, None).unwrap();
        assert_eq!(weak.components, vec![vec![0, 1, 2], vec![5, 6]]);
        assert_eq!(weak.nodes, vec![0, 1, 2, 5, 6]);
        assert_eq!(strong.edges, vec![(2, 3, 0.25)]);
        assert_eq!(weak.edges.len() + strong.edges.len(), 4);

        let none: Vec<_> = rs.iter().map(|r| EdgeTestResult { rejected: false, ..r.clone() }).collect();
        let (w, s) = significant_subgraphs(&none, 7, None).unwrap();
        assert!(w.edges.is_empty() && s.edges.is_empty() && w.components.is_empty());
    }

    fn union_find_oracle(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
        // Flood fill over an adjacency matrix.
        let mut adj = vec![vec![false; n]; n];
        let mut touched = vec![false; n];
        for &(i, j) in edges {
            adj[i][j] = true;
            adj[j][i] = true;
            touched[i] = true;
            touched[j] = true;
        }
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if !touched[s] || seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut k = 0;
            while k < comp.len() {
                let u = comp[k];
                for v in 0..n {
                    if adj[u][v] && !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                    }
                }
                k += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    #[test]
    fn components_match_flood_fill() {
        let mut rng = Rng::new(4);
        for _ in 0..30 {
            let n = 12;
            let mut rs = Vec::new();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    let rej = rng.bernoulli(0.1);
                    if rej {
                        edges.push((i, j));
                    }
                    rs.push(result(i, j, Direction::Weaker, rej));
                }
            }
            let (w, _) = significant_subgraphs(&rs, n, None).unwrap();
            assert_eq!(w.components, union_find_oracle(n, &edges));
        }
    }

    #[test]
    fn edge_tests_detect_planted_shift() {
        let ds = synth_generate(120, 12, 3, &SynthConfig::with_fc_effect(0.3)).unwrap();
        let fcs: Vec<Mat> = ds.subjects.iter().map(|s| s.fc.clone()).collect();
        let rs = group_edge_tests(&fcs, &ds.labels(), 0.05).unwrap();
        assert_eq!(rs.len(), 66);
        let (recall, precision) = planted_recovery(&rs, &ds.planted_edges);
        assert!(recall > 0.8 && precision > 0.8, "{recall} {precision}");
        let cutoff = bh_cutoff(&rs.iter().map(|r| r.p_value).collect::<Vec<_>>(), 0.05).unwrap();
        assert!(rs.iter().all(|r| !r.rejected || r.p_value <= cutoff));
    }

    proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn edge_tests_invariant_to_subject_order(seed in 0u64..1000) {
            let ds = synth_generate(30, 8, 9, &SynthConfig::with_fc_effect(0.2)).unwrap();
            let fcs: Vec<Mat> = ds.subjects.iter().map(|s| s.fc.clone()).collect();
            let labels = ds.labels();
            let a = group_edge_tests(&fcs, &labels, 0.05).unwrap();
            let mut order: Vec<usize> = (0..fcs.len()).collect();
            Rng::new(seed).shuffle(&mut order);
            let fr: Vec<Mat> = order.iter().map(|&i| fcs[i].clone()).collect();
            let lr: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
            prop_assert_eq!(a, group_edge_tests(&fr, &lr, 0.05).unwrap());
        }
    }

    #[test]
    fn pca_of_planar_cloud_is_a_rotation() {
        let mut rng = Rng::new(8);
        let mut pts: Vec<Vec<f64>> = (0..30).map(|_| vec![3.0 * rng.normal(), rng.normal()]).collect();
        let m: Vec<f64> = (0..2).map(|k| pts.iter().map(|p| p[k]).sum::<f64>() / 30.0).collect();
        pts.iter_mut().for_each(|p| {
            p[0] -= m[0];
            p[1] -= m[1];
        });
        let out = project_embeddings(&pts).unwrap();
        assert_eq!(out.len(), 30);
        for i in 0..30 {
            for j in 0..30 {
                let d_in = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
                let d_out = ((out[i][0] - out[j][0]).powi(2) + (out[i][1] - out[j][1]).powi(2)).sqrt();
                assert!((d_in - d_out).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pca_separates_clusters() {
        let mut rng = Rng::new(1);
        let mut embs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let c = if i % 2 == 0 { 5.0 } else { -5.0 };
            embs.push((0..4).map(|k| c * (k as f64 + 1.0) + 0.1 * rng.normal()).collect::<Vec<_>>());
            labels.push(i % 2);
        }
        let pc = project_embeddings(&embs).unwrap();
        let (mut lo1, mut hi0) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lo0, mut hi1) = (f64::INFINITY, f64::NEG_INFINITY);
        for (p, &l) in pc.iter().zip(&labels) {
            if l == 0 {
                lo0 = lo0.min(p[0]);
                hi0 = hi0.max(p[0]);
            } else {
                lo1 = lo1.min(p[0]);
                hi1 = hi1.max(p[0]);
            }
        }
        assert!(hi1 < lo0 || hi0 < lo1);
        assert!(project_embeddings(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn reconstructions_are_deterministic_and_valid() {
        let ds = synth_generate(10, 8, 2, &SynthConfig::default()).unwrap();
        let spec = EncoderSpec::new(8, vec![4, 2], true, Pooling::Sum, 0.2).unwrap();
        let params = ModelParams::xavier(&spec, &mut Rng::new(3));
        let ck = Checkpoint::new(spec.clone(), params, 3, serde_json::Value::Null);
        let a = reconstruct_all(&ck, &ds).unwrap();
        assert_eq!(a, reconstruct_all(&ck, &ds).unwrap());
        assert_eq!(a.sigmas.len(), 10);
        for s in &a.sigmas {
            assert!(s.is_symmetric(0.0) && s.data().iter().all(|&x| x >= 0.0));
        }
        let bad = Checkpoint {
            spec: EncoderSpec { d0: 9, ..spec },
            ..ck
        };
        assert!(reconstruct_all(&bad, &ds).is_err());
    }
}
