use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{prepare_samples, train_trial_indexed, Sample, TrainConfig, TrialResult};
use crate::dataset::{make_folds, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::model::{EncoderSpec, Pooling};

/// λ used for every architecture in stage one.
pub const STAGE_ONE_LAMBDA: f64 = 0.1;

/// λ ∈ {0.0, 0.1, …, 1.5}.
pub const LAMBDA_GRID_LEN: usize = 16;

pub fn lambda_grid() -> Vec<f64> {
    (0..LAMBDA_GRID_LEN).map(|i| i as f64 / 10.0).collect()
}

const ONE_LAYER: [usize; 5] = [128, 64, 32, 16, 8];
const TWO_LAYER: [[usize; 2]; 4] = [[128, 64], [64, 32], [32, 16], [16, 8]];
const THREE_LAYER: [[usize; 3]; 3] = [[128, 64, 32], [64, 32, 16], [32, 16, 8]];

/// The 57 stage-one configurations in trial order. One-layer encoders have
/// no concatenation choice and are listed with `concat = false`.
pub fn stage_one_grid(d0: usize) -> Vec<EncoderSpec> {
    let mut out = Vec::with_capacity(57);
    let mk = |w: &[usize], concat, pooling| EncoderSpec {
        d0,
        layer_widths: w.to_vec(),
        concat,
        pooling,
        lambda: STAGE_ONE_LAMBDA,
    };
    for w in ONE_LAYER {
        for p in Pooling::ALL {
            out.push(mk(&[w], false, p));
        }
    }
    let deeper = TWO_LAYER
        .iter()
        .map(|w| w.to_vec())
        .chain(THREE_LAYER.iter().map(|w| w.to_vec()));
    for w in deeper {
        for p in Pooling::ALL {
            for concat in [true, false] {
                out.push(mk(&w, concat, p));
            }
        }
    }
    out
}

fn pool_for(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {threads} worker threads: {e}")))
}

/// Trains every spec under the same fold plan. Results come back in input
/// order regardless of `threads`.
pub fn run_trials(
    specs: &[EncoderSpec],
    dataset: &Dataset,
    samples: &[Sample],
    folds: &FoldPlan,
    cfg: &TrainConfig,
    threads: usize,
    progress: Option<&(dyn Fn(&TrialResult) + Sync)>,
) -> Result<Vec<TrialResult>> {
    pool_for(threads)?.install(|| {
        specs
            .par_iter()
            .enumerate()
            .map(|(i, spec)| {
                let r = train_trial_indexed(i, spec, dataset, samples, folds, cfg)?;
                if let Some(cb) = progress {
                    cb(&r);
                }
                Ok(r)
            })
            .collect()
    })
}

/// Positions of `trials` ordered by descending `c_low`; undefined scores go
/// last, ties keep trial order.
pub fn rank_by_c_low(trials: &[TrialResult]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (trials[a].c_low, trials[b].c_low);
        match (x, y) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then(trials[a].trial_index.cmp(&trials[b].trial_index))
    });
    order
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageOneReport {
    pub folds: FoldPlan,
    pub trials: Vec<TrialResult>,
    /// Positions into `trials`, best `c_low` first.
    pub ranking: Vec<usize>,
    /// Positions of the three best-scoring trials.
    pub top: Vec<usize>,
}

impl StageOneReport {
    pub fn top_specs(&self) -> Vec<EncoderSpec> {
        self.top
            .iter()
            .map(|&i| self.trials[i].spec.clone().expect("sweep trials carry a spec"))
            .collect()
    }
}

pub fn stage_one_sweep(
    dataset: &Dataset,
    cfg: &TrainConfig,
    threads: usize,
    progress: Option<&(dyn Fn(&TrialResult) + Sync)>,
) -> Result<StageOneReport> {
    cfg.validate()?;
    let folds = make_folds(dataset, cfg.k_folds, cfg.base_seed)?;
    let samples = prepare_samples(dataset)?;
    let specs = stage_one_grid(dataset.n_nodes);
    let trials = run_trials(&specs, dataset, &samples, &folds, cfg, threads, progress)?;
    let ranking = rank_by_c_low(&trials);
    let top = ranking
        .iter()
        .copied()
        .filter(|&i| trials[i].c_low.is_some())
        .take(3)
        .collect();
    Ok(StageOneReport {
        folds,
        trials,
        ranking,
        top,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageTwoReport {
    pub folds: FoldPlan,
    pub trials: Vec<TrialResult>,
    /// Position of the run with the highest `c_high`.
    pub winner: usize,
}

impl StageTwoReport {
    pub fn winner_spec(&self) -> &EncoderSpec {
        self.trials[self.winner].spec.as_ref().expect("sweep trials carry a spec")
    }
}

/// Every candidate at every λ of the grid: 16 runs per candidate, trial
/// order candidate-major.
pub fn stage_two_lambda(
    top_specs: &[EncoderSpec],
    dataset: &Dataset,
    cfg: &TrainConfig,
    threads: usize,
    progress: Option<&(dyn Fn(&TrialResult) + Sync)>,
) -> Result<StageTwoReport> {
    cfg.validate()?;
    if top_specs.is_empty() {
        return Err(Error::invalid("stage two needs at least one candidate spec"));
    }
    let folds = make_folds(dataset, cfg.k_folds, cfg.base_seed)?;
    let samples = prepare_samples(dataset)?;
    let specs: Vec<EncoderSpec> = top_specs
        .iter()
        .flat_map(|s| lambda_grid().into_iter().map(move |l| s.with_lambda(l)))
        .collect();
    let trials = run_trials(&specs, dataset, &samples, &folds, cfg, threads, progress)?;
    let winner = trials
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.c_high.map(|c| (i, c)))
        .fold(None, |best: Option<(usize, f64)>, (i, c)| match best {
            Some((_, b)) if b >= c => best,
            _ => Some((i, c)),
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::UndefinedScore("no stage-two run produced a defined score".into()))?;
    Ok(StageTwoReport {
        folds,
        trials,
        winner,
    })
}
