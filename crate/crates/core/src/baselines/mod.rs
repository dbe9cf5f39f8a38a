//! Comparison arms for the end-to-end model: two-step training, a
//! combined SC+FC classifier, graph autoencoders and handcrafted graph
//! features with linear classifiers.

mod features;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use features::{
    feature_classifier, feature_matrix, fit_linear, graph_features, predict_linear, FeatureConfig, FeatureSource,
    GraphFeatures, GraphKind, LinearModel,
};

use crate::dataset::{combine_block, fc_adjacency, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::model::{classify, forward_with, EncoderSpec, LossWeights, ModelParams};
use crate::numerics::{AdamState, Mat};
use crate::training::{
    accuracy, cross_entropy, cross_validate, f_score, prepare_samples, run_fold, EarlyStopping, FoldResult, Sample,
    StopDecision, TrainConfig, TrialResult,
};

fn check_one_hot(spec: &EncoderSpec, ds: &Dataset, n: usize) -> Result<()> {
    ds.require_both_classes()?;
    spec.validate()?;
    if spec.d0 != n {
        return Err(Error::shape(format!("one-hot input needs d0 = {n}, spec has {}", spec.d0)));
    }
    Ok(())
}

/// Result of fitting the classifier head on frozen embeddings.
#[derive(Clone, Debug)]
pub struct HeadFit {
    pub w: Vec<f64>,
    pub b: f64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_epoch: usize,
}

fn mean_ce(xg: &[Vec<f64>], labels: &[u8], idx: &[usize], w: &[f64], b: f64) -> Result<f64> {
    let mut s = 0.0;
    for &i in idx {
        s += cross_entropy(classify(&xg[i], w, b)?, labels[i]);
    }
    Ok(s / idx.len() as f64)
}

/// Adam on the mean cross-entropy of the logistic head over fixed embeddings
/// `xg`, with early stopping on the validation cross-entropy.
pub fn fit_head(
    xg: &[Vec<f64>],
    labels: &[u8],
    train: &[usize],
    val: &[usize],
    cfg: &TrainConfig,
    w0: &[f64],
    b0: f64,
) -> Result<HeadFit> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let d = w0.len();
    let mut mats = vec![Mat::from_vec(1, d, w0.to_vec())?, Mat::from_vec(1, 1, vec![b0])?];
    let mut adam = AdamState::new(cfg.adam(), &mats);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = (w0.to_vec(), b0);
    let mut stopped_epoch = cfg.max_epochs;
    let inv = 1.0 / train.len() as f64;
    for epoch in 1..=cfg.max_epochs {
        let (w, b) = (mats[0].row(0).to_vec(), mats[1][(0, 0)]);
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for &i in train {
            let g = classify(&xg[i], &w, b)? - f64::from(labels[i]);
            for (a, x) in gw.iter_mut().zip(&xg[i]) {
                *a += g * x * inv;
            }
            gb += g * inv;
        }
        adam.step(&mut mats, &[Mat::from_vec(1, d, gw)?, Mat::from_vec(1, 1, vec![gb])?])?;
        let (w, b) = (mats[0].row(0), mats[1][(0, 0)]);
        let v = mean_ce(xg, labels, val, w, b)?;
        if !v.is_finite() {
            return Err(Error::numeric(format!("head validation loss diverged at epoch {epoch}")));
        }
        match stopper.observe(epoch, v) {
            StopDecision::Improved => best = (w.to_vec(), b),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_epoch = epoch;
                break;
            }
        }
    }
    let (best_epoch, best_val_loss) = stopper.best().expect("at least one epoch ran");
    Ok(HeadFit {
        w: best.0,
        b: best.1,
        best_epoch,
        best_val_loss,
        stopped_epoch,
    })
}

/// Reconstruction-only training (λ = 0), then a logistic head fitted on the
/// frozen encoder's pooled embeddings. MSE comes from the first step.
pub fn two_step(ds: &Dataset, spec: &EncoderSpec, folds: &FoldPlan, cfg: &TrainConfig) -> Result<TrialResult> {
    cfg.validate()?;
    check_one_hot(spec, ds, ds.n_nodes)?;
    folds.validate(ds.len())?;
    let samples = prepare_samples(ds)?;
    let labels = ds.labels();
    let spec0 = spec.with_lambda(0.0);
    let mut results = Vec::with_capacity(folds.k());
    let mut best: Option<(f64, ModelParams)> = None;
    for fold in 0..folds.k() {
        let step1 = run_fold(&spec0, &samples, folds, fold, LossWeights::joint(0.0), cfg);
        let (r1, out) = match step1 {
            Ok(x) => x,
            Err(Error::Numeric(msg)) => {
                return Ok(TrialResult::failed(0, "two-step", Some(spec0), format!("fold {fold}: {msg}"), cfg.time_basis))
            }
            Err(e) => return Err(e),
        };
        let start = Instant::now();
        let xg = samples
            .iter()
            .map(|s| forward_with(&spec0, &out.params, &s.a_norm).map(|t| t.xg))
            .collect::<Result<Vec<_>>>()?;
        let f = &folds.folds[fold];
        let head = match fit_head(&xg, &labels, &f.train, &f.val, cfg, &out.params.w_cls, out.params.b_cls) {
            Ok(h) => h,
            Err(Error::Numeric(msg)) => {
                return Ok(TrialResult::failed(0, "two-step", Some(spec0), format!("fold {fold}: {msg}"), cfg.time_basis))
            }
            Err(e) => return Err(e),
        };
        let seconds = r1.train_seconds + start.elapsed().as_secs_f64();
        let mut preds = Vec::with_capacity(f.test.len());
        for &i in &f.test {
            preds.push(u8::from(classify(&xg[i], &head.w, head.b)? >= 0.5));
        }
        let truth: Vec<u8> = f.test.iter().map(|&i| labels[i]).collect();
        let mut params = out.params;
        params.w_cls = head.w;
        params.b_cls = head.b;
        if best.as_ref().is_none_or(|(b, _)| r1.best_val_loss < *b) {
            best = Some((r1.best_val_loss, params));
        }
        results.push(FoldResult {
            accuracy: accuracy(&preds, &truth),
            f_score: f_score(&preds, &truth),
            train_seconds: seconds,
            stopped_epoch: r1.stopped_epoch + head.stopped_epoch,
            ..r1
        });
    }
    Ok(TrialResult::from_folds(
        0,
        "two-step",
        Some(spec0),
        results,
        cfg.time_basis,
        best.map(|(_, p)| p),
    ))
}

/// Samples for the combined classifier: the renormalized 2N×2N block
/// operator, no reconstruction target.
pub fn combined_samples(ds: &Dataset) -> Result<Vec<Sample>> {
    ds.subjects
        .iter()
        .map(|s| {
            Ok(Sample {
                a_norm: crate::model::renormalize(&combine_block(&s.sc, &s.fc)?)?,
                target: None,
                label: s.label,
            })
        })
        .collect()
}

/// Cross-entropy-only classifier on the block-diagonal SC+FC graph. The
/// encoder takes `spec`'s layers with a 2N one-hot input.
pub fn combined_input_classifier(
    ds: &Dataset,
    spec: &EncoderSpec,
    folds: &FoldPlan,
    cfg: &TrainConfig,
) -> Result<TrialResult> {
    let spec = EncoderSpec {
        d0: 2 * ds.n_nodes,
        ..spec.clone()
    };
    check_one_hot(&spec, ds, 2 * ds.n_nodes)?;
    folds.validate(ds.len())?;
    cross_validate(0, "combined", &spec, &combined_samples(ds)?, folds, LossWeights::ce_only(), cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoencoderKind {
    Sc,
    Fc,
}

/// Input and target are the same graph. SC weights are divided by the
/// subject's maximum; FC enters the operator without its unit diagonal.
pub fn autoencoder_samples(ds: &Dataset, which: AutoencoderKind) -> Result<Vec<Sample>> {
    ds.subjects
        .iter()
        .map(|s| {
            let (input, target) = match which {
                AutoencoderKind::Sc => {
                    let max = s.sc.data().iter().copied().fold(0.0, f64::max);
                    if !(max > 0.0) {
                        return Err(Error::invalid(format!(
                            "subject '{}': SC has no positive weight to scale by",
                            s.id
                        )));
                    }
                    let scaled = s.sc.map(|x| x / max);
                    (scaled.clone(), scaled)
                }
                AutoencoderKind::Fc => (fc_adjacency(&s.fc), s.fc.clone()),
            };
            Ok(Sample {
                a_norm: crate::model::renormalize(&input)?,
                target: Some(target),
                label: s.label,
            })
        })
        .collect()
}

/// Graph autoencoder with the main model's classifier branch and loss.
pub fn autoencoder(
    ds: &Dataset,
    which: AutoencoderKind,
    spec: &EncoderSpec,
    folds: &FoldPlan,
    cfg: &TrainConfig,
) -> Result<TrialResult> {
    check_one_hot(spec, ds, ds.n_nodes)?;
    folds.validate(ds.len())?;
    let samples = autoencoder_samples(ds, which)?;
    let method = match which {
        AutoencoderKind::Sc => "autoencoder-sc",
        AutoencoderKind::Fc => "autoencoder-fc",
    };
    cross_validate(0, method, spec, &samples, folds, LossWeights::joint(spec.lambda), cfg)
}
