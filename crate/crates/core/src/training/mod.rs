//! Joint loss, the full-batch training loop with early stopping, k-fold
//! evaluation, and the two-stage model-selection sweep.

mod report;
mod sweep;

pub use report::{render_csv, CsvOptions};
pub use sweep::{
    lambda_grid, rank_by_c_low, run_trials, stage_one_grid, stage_one_sweep, stage_two_lambda, StageOneReport,
    StageTwoReport, LAMBDA_GRID_LEN, STAGE_ONE_LAMBDA,
};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::model::{backward, forward_with, renormalize, EncoderSpec, LossWeights, ModelParams};
use crate::numerics::{derive_seed, AdamConfig, AdamState, Mat, Rng};

pub const CE_CLAMP: f64 = 1e-12;

/// How the time factor of the architecture score is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeBasis {
    /// Wall-clock seconds of the whole cross-validated training.
    Wall,
    /// Total epochs run across folds; machine independent.
    Epochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub k_folds: usize,
    pub base_seed: u64,
    pub time_basis: TimeBasis,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            max_epochs: 500,
            patience: 10,
            k_folds: 10,
            base_seed: 0,
            time_basis: TimeBasis::Wall,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("patience and max_epochs must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.k_folds < 3 {
            return Err(Error::invalid(format!("need at least 3 folds, got {}", self.k_folds)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    /// Seed for the weight initialization of fold `fold`. It depends on the
    /// fold only, so every configuration in a sweep starts from the same
    /// draw stream on a given fold.
    pub fn init_seed(&self, fold: usize) -> u64 {
        derive_seed(self.base_seed, fold as u64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub ce: f64,
}

/// Mean squared error over the `N(N−1)` off-diagonal entries.
pub fn mse_offdiag(pred: &Mat, target: &Mat) -> Result<f64> {
    if pred.shape() != target.shape() || !pred.is_square() {
        return Err(Error::shape(format!(
            "mse: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.rows();
    if n < 2 {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for i in 0..n {
        for (j, (p, t)) in pred.row(i).iter().zip(target.row(i)).enumerate() {
            if i != j {
                s += (p - t) * (p - t);
            }
        }
    }
    Ok(s / (n * (n - 1)) as f64)
}

/// Binary cross-entropy with `ŷ` clamped to `[1e-12, 1 − 1e-12]`.
pub fn cross_entropy(y_hat: f64, y: u8) -> f64 {
    let p = y_hat.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// `MSE_offdiag(Σ̂, Σ) + λ·CE(ŷ, y)`.
pub fn loss(sigma_hat: &Mat, sigma: &Mat, y_hat: f64, y: u8, lambda: f64) -> Result<LossParts> {
    let mse = mse_offdiag(sigma_hat, sigma)?;
    let ce = cross_entropy(y_hat, y);
    let total = if lambda == 0.0 { mse } else { mse + lambda * ce };
    Ok(LossParts { total, mse, ce })
}

/// F1 score of the positive class; 0 when precision + recall = 0.
pub fn f_score(preds: &[u8], truth: &[u8]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &t) in preds.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fneg += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fneg) as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn accuracy(preds: &[u8], truth: &[u8]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    let hits = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / preds.len() as f64
}

/// Stops once the monitored loss has risen for `patience` consecutive
/// observations, remembering the best observation seen.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    prev: Option<f64>,
    rises: usize,
    best: Option<(usize, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            prev: None,
            rises: 0,
            best: None,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        self.rises = match self.prev {
            Some(p) if loss > p => self.rises + 1,
            _ => 0,
        };
        self.prev = Some(loss);
        let improved = self.best.is_none_or(|(_, b)| loss < b);
        if improved {
            self.best = Some((epoch, loss));
        }
        if self.rises >= self.patience {
            StopDecision::Stop
        } else if improved {
            StopDecision::Improved
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// One training example: propagation operator, reconstruction target, label.
#[derive(Clone, Debug)]
pub struct Sample {
    pub a_norm: Mat,
    pub target: Option<Mat>,
    pub label: u8,
}

/// The main model's samples: renormalized SC in, FC as target.
pub fn prepare_samples(ds: &Dataset) -> Result<Vec<Sample>> {
    ds.subjects
        .iter()
        .map(|s| {
            Ok(Sample {
                a_norm: renormalize(&s.sc)?,
                target: Some(s.fc.clone()),
                label: s.label,
            })
        })
        .collect()
}

/// Subjects per gradient chunk; fixed so the summation order never depends
/// on the thread count.
const CHUNK: usize = 16;

/// Mean loss and gradient over `idx`, summed in index order.
fn batch_gradient(
    spec: &EncoderSpec,
    params: &ModelParams,
    samples: &[Sample],
    idx: &[usize],
    weights: LossWeights,
) -> Result<(ModelParams, LossParts)> {
    let partial: Vec<Result<(ModelParams, LossParts)>> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = ModelParams::zeros(spec);
            let mut acc = LossParts { total: 0.0, mse: 0.0, ce: 0.0 };
            for &i in chunk {
                let s = &samples[i];
                let trace = forward_with(spec, params, &s.a_norm)?;
                let parts = sample_loss(&trace.sigma_hat, s, trace.y_hat, weights)?;
                acc.total += parts.total;
                acc.mse += parts.mse;
                acc.ce += parts.ce;
                let gi = backward(spec, params, &trace, s.target.as_ref(), s.label, weights)?;
                g.add_scaled(&gi, 1.0);
            }
            Ok((g, acc))
        })
        .collect();
    let mut grad = ModelParams::zeros(spec);
    let mut tot = LossParts { total: 0.0, mse: 0.0, ce: 0.0 };
    for p in partial {
        let (g, l) = p?;
        grad.add_scaled(&g, 1.0);
        tot.total += l.total;
        tot.mse += l.mse;
        tot.ce += l.ce;
    }
    let inv = 1.0 / idx.len() as f64;
    let mut mean = ModelParams::zeros(spec);
    mean.add_scaled(&grad, inv);
    Ok((
        mean,
        LossParts {
            total: tot.total * inv,
            mse: tot.mse * inv,
            ce: tot.ce * inv,
        },
    ))
}

fn sample_loss(sigma_hat: &Mat, s: &Sample, y_hat: f64, w: LossWeights) -> Result<LossParts> {
    let mse = match &s.target {
        Some(t) if w.mse != 0.0 => mse_offdiag(sigma_hat, t)?,
        _ => 0.0,
    };
    let ce = cross_entropy(y_hat, s.label);
    Ok(LossParts {
        total: w.mse * mse + w.ce * ce,
        mse,
        ce,
    })
}

/// Per-sample predictions and losses on `idx`.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: LossParts,
    /// Mean reconstruction MSE, when every sample has a target.
    pub mse: Option<f64>,
    pub preds: Vec<u8>,
    pub truth: Vec<u8>,
    pub probs: Vec<f64>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        accuracy(&self.preds, &self.truth)
    }

    pub fn f_score(&self) -> f64 {
        f_score(&self.preds, &self.truth)
    }
}

pub fn evaluate(
    spec: &EncoderSpec,
    params: &ModelParams,
    samples: &[Sample],
    idx: &[usize],
    weights: LossWeights,
) -> Result<Evaluation> {
    let rows: Vec<Result<(LossParts, Option<f64>, f64)>> = idx
        .par_iter()
        .map(|&i| {
            let s = &samples[i];
            let t = forward_with(spec, params, &s.a_norm)?;
            let parts = sample_loss(&t.sigma_hat, s, t.y_hat, weights)?;
            let mse = match &s.target {
                Some(target) => Some(mse_offdiag(&t.sigma_hat, target)?),
                None => None,
            };
            Ok((parts, mse, t.y_hat))
        })
        .collect();
    let n = idx.len().max(1) as f64;
    let mut loss = LossParts { total: 0.0, mse: 0.0, ce: 0.0 };
    let mut mse_sum = Some(0.0);
    let mut probs = Vec::with_capacity(idx.len());
    for r in rows {
        let (p, m, y) = r?;
        loss.total += p.total;
        loss.mse += p.mse;
        loss.ce += p.ce;
        mse_sum = match (mse_sum, m) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        probs.push(y);
    }
    Ok(Evaluation {
        loss: LossParts {
            total: loss.total / n,
            mse: loss.mse / n,
            ce: loss.ce / n,
        },
        mse: mse_sum.map(|s| s / n),
        preds: probs.iter().map(|&p| u8::from(p >= 0.5)).collect(),
        truth: idx.iter().map(|&i| samples[i].label).collect(),
        probs,
    })
}

/// Training trajectory of one fold.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub params: ModelParams,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_epoch: usize,
    /// Validation loss and MSE before the first update.
    pub initial_val: LossParts,
    /// Validation loss after each epoch, starting at epoch 1.
    pub val_history: Vec<LossParts>,
    pub train_history: Vec<LossParts>,
}

/// Full-batch Adam from `init` with early stopping on the validation loss.
pub fn fit(
    spec: &EncoderSpec,
    samples: &[Sample],
    train: &[usize],
    val: &[usize],
    weights: LossWeights,
    cfg: &TrainConfig,
    init: ModelParams,
) -> Result<FitOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let mut params = init;
    let mut mats = params.to_mats();
    let mut adam = AdamState::new(cfg.adam(), &mats);
    let initial_val = evaluate(spec, &params, samples, val, weights)?.loss;
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut val_history = Vec::new();
    let mut train_history = Vec::new();
    let mut stopped_epoch = cfg.max_epochs;

    for epoch in 1..=cfg.max_epochs {
        let (grad, train_loss) = batch_gradient(spec, &params, samples, train, weights)?;
        if !train_loss.total.is_finite() {
            return Err(Error::numeric(format!("training loss diverged at epoch {epoch}")));
        }
        adam.step(&mut mats, &grad.to_mats())?;
        params = ModelParams::from_mats(&mats)?;
        let v = evaluate(spec, &params, samples, val, weights)?.loss;
        if !v.total.is_finite() {
            return Err(Error::numeric(format!("validation loss diverged at epoch {epoch}")));
        }
        train_history.push(train_loss);
        val_history.push(v);
        match stopper.observe(epoch, v.total) {
            StopDecision::Improved => best = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_epoch = epoch;
                break;
            }
        }
    }
    let (best_epoch, best_val_loss) = stopper.best().expect("at least one epoch ran");
    Ok(FitOutcome {
        params: best,
        best_epoch,
        best_val_loss,
        stopped_epoch,
        initial_val,
        val_history,
        train_history,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(deserialize_with = "nan_from_null")]
    pub mean: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub std: f64,
}

/// JSON has no NaN; serde_json writes it as `null`, so read `null` back as NaN.
fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl Summary {
    /// Mean and population standard deviation.
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Summary { mean: f64::NAN, std: f64::NAN };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub mse: Option<f64>,
    pub accuracy: f64,
    pub f_score: f64,
    pub train_seconds: f64,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    #[serde(deserialize_with = "nan_from_null")]
    pub best_val_loss: f64,
    pub initial_val_mse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: usize,
    pub method: String,
    /// `None` for methods without a graph encoder.
    pub spec: Option<EncoderSpec>,
    pub folds: Vec<FoldResult>,
    pub mse: Option<Summary>,
    pub accuracy: Summary,
    pub f_score: Summary,
    pub train_seconds: f64,
    pub total_epochs: usize,
    pub time_basis: TimeBasis,
    pub c_low: Option<f64>,
    pub c_high: Option<f64>,
    pub failed: Option<String>,
    /// Weights of the fold with the lowest best-validation loss.
    #[serde(skip)]
    pub best_params: Option<ModelParams>,
}

impl TrialResult {
    pub fn from_folds(
        trial_index: usize,
        method: impl Into<String>,
        spec: Option<EncoderSpec>,
        folds: Vec<FoldResult>,
        time_basis: TimeBasis,
        best_params: Option<ModelParams>,
    ) -> Self {
        let mse = if folds.iter().all(|f| f.mse.is_some()) && !folds.is_empty() {
            Some(Summary::of(&folds.iter().filter_map(|f| f.mse).collect::<Vec<_>>()))
        } else {
            None
        };
        let accuracy = Summary::of(&folds.iter().map(|f| f.accuracy).collect::<Vec<_>>());
        let f_score = Summary::of(&folds.iter().map(|f| f.f_score).collect::<Vec<_>>());
        let mut r = TrialResult {
            trial_index,
            method: method.into(),
            spec,
            train_seconds: folds.iter().map(|f| f.train_seconds).sum(),
            total_epochs: folds.iter().map(|f| f.stopped_epoch).sum(),
            folds,
            mse,
            accuracy,
            f_score,
            time_basis,
            c_low: None,
            c_high: None,
            failed: None,
            best_params,
        };
        r.c_low = c_low(&r).ok();
        r.c_high = c_high(&r).ok();
        r
    }

    pub fn failed(trial_index: usize, method: impl Into<String>, spec: Option<EncoderSpec>, why: String, time_basis: TimeBasis) -> Self {
        let nan = Summary { mean: f64::NAN, std: f64::NAN };
        TrialResult {
            trial_index,
            method: method.into(),
            spec,
            folds: Vec::new(),
            mse: None,
            accuracy: nan,
            f_score: nan,
            train_seconds: 0.0,
            total_epochs: 0,
            time_basis,
            c_low: None,
            c_high: None,
            failed: Some(why),
            best_params: None,
        }
    }

    /// Copy with every wall-clock measurement removed, for reproducible
    /// reports. Under the wall-clock basis `c_low` goes too.
    pub fn without_wall_clock(&self) -> TrialResult {
        let mut r = self.clone();
        r.train_seconds = 0.0;
        r.folds.iter_mut().for_each(|f| f.train_seconds = 0.0);
        if r.time_basis == TimeBasis::Wall {
            r.c_low = None;
        }
        r
    }

    /// The time factor of `c_low` under the configured basis.
    pub fn time_units(&self) -> f64 {
        match self.time_basis {
            TimeBasis::Wall => self.train_seconds,
            TimeBasis::Epochs => self.total_epochs as f64,
        }
    }
}

/// `accuracy · F / (MSE · time)`.
pub fn c_low(r: &TrialResult) -> Result<f64> {
    let t = r.time_units();
    if !(t > 0.0) {
        return Err(Error::UndefinedScore(format!("trial {} has no training time", r.trial_index)));
    }
    Ok(c_high(r)? / t)
}

/// `accuracy · F / MSE`.
pub fn c_high(r: &TrialResult) -> Result<f64> {
    if let Some(why) = &r.failed {
        return Err(Error::UndefinedScore(format!("trial {} failed: {why}", r.trial_index)));
    }
    let mse = r
        .mse
        .map(|s| s.mean)
        .ok_or_else(|| Error::UndefinedScore(format!("trial {} has no reconstruction MSE", r.trial_index)))?;
    if !(mse > 0.0) {
        return Err(Error::UndefinedScore(format!("trial {} has zero MSE", r.trial_index)));
    }
    Ok(r.accuracy.mean * r.f_score.mean / mse)
}

/// Trains and tests one fold from its own seeded initialization.
pub fn run_fold(
    spec: &EncoderSpec,
    samples: &[Sample],
    folds: &FoldPlan,
    fold: usize,
    weights: LossWeights,
    cfg: &TrainConfig,
) -> Result<(FoldResult, FitOutcome)> {
    let f = &folds.folds[fold];
    let start = Instant::now();
    let mut rng = Rng::new(cfg.init_seed(fold));
    let init = ModelParams::xavier(spec, &mut rng);
    let out = fit(spec, samples, &f.train, &f.val, weights, cfg, init)?;
    let seconds = start.elapsed().as_secs_f64();
    let test = evaluate(spec, &out.params, samples, &f.test, weights)?;
    let initial_val_mse = samples[f.val[0]].target.as_ref().map(|_| out.initial_val.mse);
    Ok((
        FoldResult {
            fold,
            mse: test.mse,
            accuracy: test.accuracy(),
            f_score: test.f_score(),
            train_seconds: seconds,
            stopped_epoch: out.stopped_epoch,
            best_epoch: out.best_epoch,
            best_val_loss: out.best_val_loss,
            initial_val_mse,
        },
        out,
    ))
}

/// k-fold evaluation of one configuration on prepared samples.
pub fn cross_validate(
    trial_index: usize,
    method: &str,
    spec: &EncoderSpec,
    samples: &[Sample],
    folds: &FoldPlan,
    weights: LossWeights,
    cfg: &TrainConfig,
) -> Result<TrialResult> {
    spec.validate()?;
    cfg.validate()?;
    let mut results = Vec::with_capacity(folds.k());
    let mut best: Option<(f64, ModelParams)> = None;
    for fold in 0..folds.k() {
        match run_fold(spec, samples, folds, fold, weights, cfg) {
            Ok((r, out)) => {
                if best.as_ref().is_none_or(|(b, _)| r.best_val_loss < *b) {
                    best = Some((r.best_val_loss, out.params));
                }
                results.push(r);
            }
            Err(Error::Numeric(msg)) => {
                return Ok(TrialResult::failed(
                    trial_index,
                    method,
                    Some(spec.clone()),
                    format!("fold {fold}: {msg}"),
                    cfg.time_basis,
                ))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrialResult::from_folds(
        trial_index,
        method,
        Some(spec.clone()),
        results,
        cfg.time_basis,
        best.map(|(_, p)| p),
    ))
}

/// The end-to-end model under k-fold cross-validation.
pub fn train_trial(spec: &EncoderSpec, dataset: &Dataset, folds: &FoldPlan, cfg: &TrainConfig) -> Result<TrialResult> {
    train_trial_indexed(0, spec, dataset, &prepare_samples(dataset)?, folds, cfg)
}

pub(crate) fn train_trial_indexed(
    trial_index: usize,
    spec: &EncoderSpec,
    dataset: &Dataset,
    samples: &[Sample],
    folds: &FoldPlan,
    cfg: &TrainConfig,
) -> Result<TrialResult> {
    dataset.require_both_classes()?;
    folds.validate(dataset.len())?;
    if spec.d0 != dataset.n_nodes {
        return Err(Error::shape(format!(
            "one-hot input needs d0 = {}, spec has {}",
            dataset.n_nodes, spec.d0
        )));
    }
    cross_validate(
        trial_index,
        "end-to-end",
        spec,
        samples,
        folds,
        LossWeights::joint(spec.lambda),
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_folds, synth_generate, SynthConfig};
    use crate::model::Pooling;

    #[test]
    fn loss_examples() {
        let s = Mat::from_rows(&[[1.0, 0.5], [0.5, 1.0]]).unwrap();
        assert_eq!(loss(&s, &s, 0.3, 1, 0.0).unwrap().total, 0.0);
        let l = loss(&s, &s, 0.5, 1, 1.0).unwrap();
        assert!((l.total - std::f64::consts::LN_2).abs() < 1e-15);
        let half = Mat::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.5 });
        assert_eq!(mse_offdiag(&Mat::zeros(4, 4), &half).unwrap(), 0.25);
        assert!(cross_entropy(0.0, 1).is_finite());
        assert!(cross_entropy(1.0, 0).is_finite());
        let at_zero = loss(&Mat::zeros(4, 4), &half, 0.7, 0, 0.0).unwrap();
        assert_eq!(at_zero.total, at_zero.mse);
    }

    #[test]
    fn f_score_examples() {
        assert_eq!(f_score(&[1, 0, 1], &[1, 0, 1]), 1.0);
        assert_eq!(f_score(&[0, 0, 0], &[1, 0, 1]), 0.0);
        let f = f_score(&[1, 1, 1, 0], &[1, 1, 0, 1]);
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
    }

    fn dummy_result(acc: f64, f: f64, mse: f64, seconds: f64) -> TrialResult {
        let spec = EncoderSpec::new(68, vec![32, 16, 8], true, Pooling::Mean, 0.2).unwrap();
        let fold = FoldResult {
            fold: 0,
            mse: Some(mse),
            accuracy: acc,
            f_score: f,
            train_seconds: seconds,
            stopped_epoch: 10,
            best_epoch: 1,
            best_val_loss: 0.0,
            initial_val_mse: None,
        };
        TrialResult::from_folds(0, "end-to-end", Some(spec), vec![fold], TimeBasis::Wall, None)
    }

    #[test]
    fn selection_scores() {
        let r = dummy_result(0.6610, 0.6962, 0.0398, 100.0);
        let lo = c_low(&r).unwrap();
        let hi = c_high(&r).unwrap();
        assert!((lo - 0.115_627).abs() < 1e-5, "{lo}");
        assert!((hi - 11.5627).abs() < 1e-3, "{hi}");
        assert!((hi - lo * 100.0).abs() < 1e-12);
        let slow = dummy_result(0.6610, 0.6962, 0.0398, 200.0);
        assert!((c_low(&slow).unwrap() - lo / 2.0).abs() < 1e-15);
        let sharp = dummy_result(0.6610, 0.6962, 0.0199, 100.0);
        assert!((c_high(&sharp).unwrap() - 2.0 * hi).abs() < 1e-12);
        assert_eq!(c_low(&dummy_result(0.6, 0.0, 0.04, 10.0)).unwrap(), 0.0);
        assert!(matches!(
            c_high(&dummy_result(0.6, 0.5, 0.0, 10.0)),
            Err(Error::UndefinedScore(_))
        ));
        assert!(c_low(&dummy_result(0.6, 0.5, 0.1, 0.0)).is_err());
    }

    #[test]
    fn early_stopping_on_rising_sequence() {
        let mut es = EarlyStopping::new(10);
        let mut stop_at = None;
        for epoch in 1..=50 {
            if es.observe(epoch, epoch as f64) == StopDecision::Stop {
                stop_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stop_at, Some(11));
        assert_eq!(es.best(), Some((1, 1.0)));
    }

    #[test]
    fn early_stopping_resets_on_any_drop() {
        let mut es = EarlyStopping::new(3);
        let seq = [5.0, 4.0, 4.5, 4.6, 4.4, 4.5, 4.7, 4.8];
        let decisions: Vec<_> = seq.iter().enumerate().map(|(e, &l)| es.observe(e + 1, l)).collect();
        assert_eq!(decisions[7], StopDecision::Stop);
        assert!(decisions[..7].iter().all(|d| *d != StopDecision::Stop));
        assert_eq!(es.best(), Some((2, 4.0)));
    }

    fn small_setup() -> (Dataset, FoldPlan, TrainConfig) {
        let ds = synth_generate(30, 8, 4, &SynthConfig::with_fc_effect(0.2)).unwrap();
        let folds = make_folds(&ds, 3, 4).unwrap();
        let cfg = TrainConfig {
            max_epochs: 40,
            k_folds: 3,
            base_seed: 4,
            lr: 0.01,
            ..TrainConfig::default()
        };
        (ds, folds, cfg)
    }

    #[test]
    fn training_is_reproducible() {
        let (ds, folds, cfg) = small_setup();
        let spec = EncoderSpec::new(8, vec![4, 2], true, Pooling::Mean, 0.3).unwrap();
        let a = train_trial(&spec, &ds, &folds, &cfg).unwrap();
        let b = train_trial(&spec, &ds, &folds, &cfg).unwrap();
        let strip = |r: &TrialResult| {
            r.folds
                .iter()
                .map(|f| (f.mse, f.accuracy, f.f_score, f.stopped_epoch, f.best_val_loss))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.best_params, b.best_params);
        assert_eq!(a.folds.len(), 3);
    }

    #[test]
    fn restored_weights_are_best_seen() {
        let (ds, folds, cfg) = small_setup();
        let spec = EncoderSpec::new(8, vec![3], false, Pooling::Sum, 0.5).unwrap();
        let samples = prepare_samples(&ds).unwrap();
        let (r, out) = run_fold(&spec, &samples, &folds, 1, LossWeights::joint(0.5), &cfg).unwrap();
        let min = out.val_history.iter().map(|l| l.total).fold(f64::INFINITY, f64::min);
        assert_eq!(out.best_val_loss, min);
        let f = &folds.folds[1];
        let again = evaluate(&spec, &out.params, &samples, &f.val, LossWeights::joint(0.5)).unwrap();
        assert_eq!(again.loss.total, min);
        assert!(r.stopped_epoch <= cfg.max_epochs);
    }

    #[test]
    fn reconstruction_improves_at_zero_lambda() {
        let (ds, folds, mut cfg) = small_setup();
        cfg.max_epochs = 150;
        let spec = EncoderSpec::new(8, vec![8, 4], true, Pooling::Mean, 0.0).unwrap();
        let samples = prepare_samples(&ds).unwrap();
        let f = &folds.folds[0];
        let init = ModelParams::xavier(&spec, &mut Rng::new(cfg.init_seed(0)));
        let out = fit(&spec, &samples, &f.train, &f.val, LossWeights::joint(0.0), &cfg, init).unwrap();
        let first = out.train_history[0].mse;
        let last = out.train_history.last().unwrap().mse;
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn parallel_gradient_matches_serial() {
        let (ds, _, _) = small_setup();
        let spec = EncoderSpec::new(8, vec![4], false, Pooling::Max, 0.3).unwrap();
        let params = ModelParams::xavier(&spec, &mut Rng::new(1));
        let samples = prepare_samples(&ds).unwrap();
        let idx: Vec<usize> = (0..samples.len()).collect();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let par = pool.install(|| batch_gradient(&spec, &params, &samples, &idx, LossWeights::joint(0.3)).unwrap());
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ser = one.install(|| batch_gradient(&spec, &params, &samples, &idx, LossWeights::joint(0.3)).unwrap());
        assert_eq!(par.0, ser.0);
        assert_eq!(par.1, ser.1);
    }
}
