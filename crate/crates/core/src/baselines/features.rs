use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{fc_adjacency, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::model::sigmoid;
use crate::numerics::Mat;
use crate::training::{accuracy, f_score, FoldResult, TimeBasis, TrialResult};

/// Binary graph measures of one thresholded network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFeatures {
    pub avg_path_length: f64,
    pub global_efficiency: f64,
    pub clustering_coefficient: f64,
    pub radius: f64,
    pub diameter: f64,
    pub transitivity: f64,
    pub density: f64,
    /// Set when no edge survived thresholding; every measure is then 0.
    pub empty: bool,
}

impl GraphFeatures {
    pub const LEN: usize = 7;

    pub fn to_vec(&self) -> [f64; Self::LEN] {
        [
            self.avg_path_length,
            self.global_efficiency,
            self.clustering_coefficient,
            self.radius,
            self.diameter,
            self.transitivity,
            self.density,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Sc,
    Fc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Sc,
    Fc,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearModel {
    Logistic,
    LinearSvm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sc_threshold: f64,
    pub fc_threshold: f64,
    pub lr: f64,
    pub iterations: usize,
    /// Hinge-loss weight `C` of the SVM objective `½‖w‖² + C·Σ hinge`.
    pub svm_c: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sc_threshold: 0.0,
            fc_threshold: 0.3,
            lr: 0.1,
            iterations: 2000,
            svm_c: 1.0,
        }
    }
}

/// Adjacency lists of `g` binarized at `w > tau`, ignoring the diagonal.
fn binarize(g: &Mat, tau: f64) -> Vec<Vec<usize>> {
    let n = g.rows();
    (0..n)
        .map(|i| (0..n).filter(|&j| j != i && g[(i, j)] > tau).collect())
        .collect()
}

fn bfs(adj: &[Vec<usize>], src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("queued nodes have a distance");
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Graph measures of `g` binarized at `tau`. Path-based measures use the
/// largest connected component (the one holding the smallest node index on
/// ties); global efficiency uses all pairs with `1/∞ = 0`.
pub fn graph_features(g: &Mat, tau: f64) -> Result<GraphFeatures> {
    if !g.is_square() || g.max_asymmetry() > 1e-9 {
        return Err(Error::invalid("graph features need a square symmetric matrix"));
    }
    if g.data().iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::invalid("graph features need nonnegative finite weights"));
    }
    let n = g.rows();
    let adj = binarize(g, tau);
    let m: usize = adj.iter().map(Vec::len).sum::<usize>() / 2;
    if m == 0 || n < 2 {
        return Ok(GraphFeatures {
            avg_path_length: 0.0,
            global_efficiency: 0.0,
            clustering_coefficient: 0.0,
            radius: 0.0,
            diameter: 0.0,
            transitivity: 0.0,
            density: 0.0,
            empty: true,
        });
    }

    let dists: Vec<Vec<Option<usize>>> = (0..n).map(|s| bfs(&adj, s)).collect();

    let mut eff = 0.0;
    for (i, row) in dists.iter().enumerate() {
        for (j, d) in row.iter().enumerate() {
            if i != j {
                if let Some(d) = d {
                    eff += 1.0 / *d as f64;
                }
            }
        }
    }
    let global_efficiency = eff / (n * (n - 1)) as f64;

    // Components, labelled by discovery from the lowest index.
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if comp[s] == usize::MAX {
            let id = sizes.len();
            let members: Vec<usize> = (0..n).filter(|&v| dists[s][v].is_some()).collect();
            for &v in &members {
                comp[v] = id;
            }
            sizes.push(members.len());
        }
    }
    let largest = (0..sizes.len())
        .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
        .expect("at least one component");
    let nodes: Vec<usize> = (0..n).filter(|&v| comp[v] == largest).collect();
    let (mut total, mut pairs) = (0usize, 0usize);
    let mut ecc = Vec::with_capacity(nodes.len());
    for &u in &nodes {
        let mut e = 0;
        for &v in &nodes {
            if u != v {
                let d = dists[u][v].expect("same component");
                total += d;
                pairs += 1;
                e = e.max(d);
            }
        }
        ecc.push(e);
    }
    let avg_path_length = if pairs > 0 { total as f64 / pairs as f64 } else { 0.0 };
    let diameter = *ecc.iter().max().expect("non-empty component") as f64;
    let radius = *ecc.iter().min().expect("non-empty component") as f64;

    let mut is_edge = vec![false; n * n];
    for (u, nb) in adj.iter().enumerate() {
        for &v in nb {
            is_edge[u * n + v] = true;
        }
    }
    let mut local_sum = 0.0;
    let (mut closed, mut triples) = (0usize, 0usize);
    for nb in &adj {
        let k = nb.len();
        if k < 2 {
            continue;
        }
        let mut links = 0usize;
        for (a, &x) in nb.iter().enumerate() {
            for &y in &nb[a + 1..] {
                if is_edge[x * n + y] {
                    links += 1;
                }
            }
        }
        let possible = k * (k - 1) / 2;
        local_sum += links as f64 / possible as f64;
        closed += links;
        triples += possible;
    }
    let clustering_coefficient = local_sum / n as f64;
    // Each triangle closes three triples, one at each corner.
    let transitivity = if triples > 0 { closed as f64 / triples as f64 } else { 0.0 };
    let density = m as f64 / (n * (n - 1) / 2) as f64;

    Ok(GraphFeatures {
        avg_path_length,
        global_efficiency,
        clustering_coefficient,
        radius,
        diameter,
        transitivity,
        density,
        empty: false,
    })
}

/// Per-subject feature rows, plus the number of subjects whose graph came
/// out empty after thresholding.
pub fn feature_matrix(ds: &Dataset, source: FeatureSource, cfg: &FeatureConfig) -> Result<(Vec<Vec<f64>>, usize)> {
    let mut empty = 0;
    let mut rows = Vec::with_capacity(ds.len());
    for s in &ds.subjects {
        let mut row = Vec::with_capacity(2 * GraphFeatures::LEN);
        if matches!(source, FeatureSource::Sc | FeatureSource::Both) {
            let f = graph_features(&s.sc, cfg.sc_threshold)?;
            empty += usize::from(f.empty);
            row.extend(f.to_vec());
        }
        if matches!(source, FeatureSource::Fc | FeatureSource::Both) {
            let f = graph_features(&fc_adjacency(&s.fc), cfg.fc_threshold)?;
            empty += usize::from(f.empty);
            row.extend(f.to_vec());
        }
        rows.push(row);
    }
    Ok((rows, empty))
}

/// Column means and standard deviations over `idx`; columns with zero
/// spread are reported separately.
fn standardizer(x: &[Vec<f64>], idx: &[usize]) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let d = x[idx[0]].len();
    let n = idx.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in idx {
        for (m, v) in mean.iter_mut().zip(&x[i]) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut sd = vec![0.0; d];
    for &i in idx {
        for ((s, v), m) in sd.iter_mut().zip(&x[i]).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    sd.iter_mut().for_each(|s| *s = (*s / n).sqrt());
    let constant = (0..d).filter(|&j| !(sd[j] > 1e-12)).collect();
    (mean, sd, constant)
}

/// Full-batch gradient descent for a linear classifier on rows `x` with
/// labels `y`. Returns `(w, b)`.
pub fn fit_linear(x: &[Vec<f64>], y: &[u8], model: LinearModel, cfg: &FeatureConfig) -> (Vec<f64>, f64) {
    let d = x.first().map_or(0, Vec::len);
    let n = x.len() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..cfg.iterations {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let z: f64 = w.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + b;
            let g = match model {
                LinearModel::Logistic => sigmoid(z) - f64::from(yi),
                LinearModel::LinearSvm => {
                    let t = if yi == 1 { 1.0 } else { -1.0 };
                    if t * z < 1.0 {
                        -cfg.svm_c * t
                    } else {
                        0.0
                    }
                }
            };
            for (gwj, xij) in gw.iter_mut().zip(xi) {
                *gwj += g * xij;
            }
            gb += g;
        }
        // Mean-scaled objective: same minimizer, stable step size.
        for (wj, gwj) in w.iter_mut().zip(&gw) {
            let reg = if model == LinearModel::LinearSvm { *wj } else { 0.0 };
            *wj -= cfg.lr * (gwj + reg) / n;
        }
        b -= cfg.lr * gb / n;
    }
    (w, b)
}

pub fn predict_linear(x: &[f64], w: &[f64], b: f64) -> u8 {
    let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b;
    u8::from(z >= 0.0)
}

/// Handcrafted-feature classifier under the shared fold plan. Features are
/// z-scored with training-split statistics; constant columns are dropped.
pub fn feature_classifier(
    ds: &Dataset,
    source: FeatureSource,
    model: LinearModel,
    folds: &FoldPlan,
    cfg: &FeatureConfig,
) -> Result<(TrialResult, Vec<String>)> {
    folds.validate(ds.len())?;
    let (x, empty) = feature_matrix(ds, source, cfg)?;
    let mut warnings = Vec::new();
    if empty > 0 {
        warnings.push(format!("{empty} graphs were empty after thresholding; their features are 0"));
    }
    let labels = ds.labels();
    let mut results = Vec::with_capacity(folds.k());
    for (f, fold) in folds.folds.iter().enumerate() {
        let start = Instant::now();
        let (mean, sd, constant) = standardizer(&x, &fold.train);
        if !constant.is_empty() {
            warnings.push(format!("fold {f}: dropped constant feature columns {constant:?}"));
        }
        let keep: Vec<usize> = (0..mean.len()).filter(|j| !constant.contains(j)).collect();
        let z = |i: usize| -> Vec<f64> { keep.iter().map(|&j| (x[i][j] - mean[j]) / sd[j]).collect() };
        let xt: Vec<Vec<f64>> = fold.train.iter().map(|&i| z(i)).collect();
        let yt: Vec<u8> = fold.train.iter().map(|&i| labels[i]).collect();
        let (w, b) = fit_linear(&xt, &yt, model, cfg);
        let seconds = start.elapsed().as_secs_f64();
        let preds: Vec<u8> = fold.test.iter().map(|&i| predict_linear(&z(i), &w, b)).collect();
        let truth: Vec<u8> = fold.test.iter().map(|&i| labels[i]).collect();
        results.push(FoldResult {
            fold: f,
            mse: None,
            accuracy: accuracy(&preds, &truth),
            f_score: f_score(&preds, &truth),
            train_seconds: seconds,
            stopped_epoch: cfg.iterations,
            best_epoch: cfg.iterations,
            best_val_loss: f64::NAN,
            initial_val_mse: None,
        });
    }
    let method = format!(
        "features-{}-{}",
        match source {
            FeatureSource::Sc => "sc",
            FeatureSource::Fc => "fc",
            FeatureSource::Both => "both",
        },
        match model {
            LinearModel::Logistic => "logistic",
            LinearModel::LinearSvm => "svm",
        }
    );
    Ok((
        TrialResult::from_folds(0, method, None, results, TimeBasis::Wall, None),
        warnings,
    ))
}
