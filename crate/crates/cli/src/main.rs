//! `grl`: generate synthetic connectomes, train and sweep the encoder-decoder,
//! run baselines, and analyze reconstructions.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use connectome_grl::analysis::{
    group_edge_tests, planted_recovery, project_embeddings, reconstruct_all, significant_subgraphs,
    write_edge_tests_csv, write_embeddings_csv, write_subgraph_json,
};
use connectome_grl::baselines::{
    autoencoder, combined_input_classifier, feature_classifier, two_step, AutoencoderKind, FeatureConfig,
    FeatureSource, LinearModel,
};
use connectome_grl::dataset::{load_dataset, make_folds, save_dataset, synth_generate, Dataset, FoldPlan, SynthConfig};
use connectome_grl::model::{load_checkpoint, parse_arch, save_checkpoint, Checkpoint, EncoderSpec, Pooling};
use connectome_grl::training::{
    rank_by_c_low, render_csv, stage_one_sweep, stage_two_lambda, train_trial, CsvOptions, StageOneReport,
    TimeBasis, TrainConfig, TrialResult,
};
use serde::Serialize;
use serde_json::json;

use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "grl", version, about = "Supervised graph encoder-decoder for SC-to-FC connectome mapping")]
struct Cli {
    /// Base seed; every fold, trial and dataset seed derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for independent trials and per-subject work.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset with a planted group difference.
    Generate(GenerateArgs),
    /// Cross-validate one architecture and save the best fold's model.
    Train(TrainArgs),
    /// Run stage one (architecture grid) or stage two (lambda grid).
    Sweep(SweepArgs),
    /// Run one of the comparison methods.
    Baseline(BaselineArgs),
    /// Edge-wise group tests on a trained model's reconstructions.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenerateArgs {
    #[arg(long)]
    subjects: usize,
    #[arg(long)]
    nodes: usize,
    /// Size of the planted group difference.
    #[arg(long, default_value_t = 0.0)]
    effect: f64,
    /// Plant the difference on SC so FC inherits it through the mapping,
    /// instead of shifting FC directly.
    #[arg(long)]
    mapping: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Basis {
    Wall,
    Epochs,
}

#[derive(Args, Debug, Serialize)]
struct TrainOpts {
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 500)]
    max_epochs: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Time factor of the architecture score.
    #[arg(long, value_enum, default_value_t = Basis::Wall)]
    time_basis: Basis,
}

impl TrainOpts {
    fn config(&self, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            lr: self.lr,
            max_epochs: self.max_epochs,
            patience: self.patience,
            k_folds: self.folds,
            base_seed: seed,
            time_basis: match self.time_basis {
                Basis::Wall => TimeBasis::Wall,
                Basis::Epochs => TimeBasis::Epochs,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Serialize)]
struct ModelOpts {
    /// Layer widths, e.g. 32x16x8.
    #[arg(long, default_value = "32x16x8")]
    arch: String,
    /// Concatenate every layer's node embeddings.
    #[arg(long)]
    concat: bool,
    #[arg(long, default_value = "mean")]
    pool: String,
    /// Weight of the classification loss.
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    lambda: f64,
}

impl ModelOpts {
    fn spec(&self, d0: usize) -> Result<EncoderSpec> {
        let pooling: Pooling = self.pool.parse()?;
        Ok(EncoderSpec::new(d0, parse_arch(&self.arch)?, self.concat, pooling, self.lambda)?)
    }
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelOpts,
    #[command(flatten)]
    train: TrainOpts,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
enum Stage {
    One,
    Two,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    stage: Stage,
    /// Stage-one report (stage_one.json) supplying the top three specs.
    #[arg(long)]
    top_from: Option<PathBuf>,
    #[command(flatten)]
    train: TrainOpts,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    TwoStep,
    Combined,
    AeSc,
    AeFc,
    Features,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Source {
    Fc,
    Sc,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Clf {
    Logistic,
    Svm,
}

#[derive(Args, Debug, Serialize)]
struct BaselineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    #[command(flatten)]
    model: ModelOpts,
    #[command(flatten)]
    train: TrainOpts,
    #[arg(long, value_enum, default_value_t = Source::Both)]
    source: Source,
    #[arg(long, value_enum, default_value_t = Clf::Logistic)]
    clf: Clf,
    /// FC binarization threshold for graph features.
    #[arg(long, default_value_t = 0.3)]
    fc_threshold: f64,
    /// A `train` output directory to compare against fold by fold.
    #[arg(long)]
    compare: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct AnalyzeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// FDR level for the edge tests.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    ensure!(cli.parallel >= 1, "--parallel must be at least 1");
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.parallel)
        .build_global()
        .context("starting worker threads")?;
    let out = cli.out.clone().context("--out DIR is required")?;
    match &cli.command {
        Command::Generate(a) => generate(a, cli.seed, &out),
        Command::Train(a) => train(a, cli.seed, &out),
        Command::Sweep(a) => sweep(a, cli.seed, cli.parallel, &out),
        Command::Baseline(a) => baseline(a, cli.seed, &out),
        Command::Analyze(a) => analyze(a, cli.seed, &out),
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write(path, serde_json::to_string_pretty(v)?)
}

fn load(data: &Path) -> Result<Dataset> {
    load_dataset(data).with_context(|| format!("loading dataset {}", data.display()))
}

fn start(out: &Path, config: serde_json::Value, seed: u64, data: Option<&Path>) -> Result<()> {
    RunManifest::new(config, seed, data)?.write(out)
}

fn fail_on_failed(trials: &[TrialResult]) -> Result<()> {
    let failed: Vec<String> = trials
        .iter()
        .filter_map(|t| t.failed.as_ref().map(|why| format!("trial {}: {why}", t.trial_index)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        bail!("{} trial(s) failed:\n  {}", failed.len(), failed.join("\n  "))
    }
}

/// Report files for one set of trials: full CSV, a CSV without wall-clock
/// columns, and JSON without wall-clock values.
fn write_reports(out: &Path, stem: &str, trials: &[TrialResult], ranking: &[usize], selected: &[usize]) -> Result<()> {
    write(&out.join(format!("{stem}.csv")), render_csv(trials, ranking, selected, CsvOptions::default()))?;
    let stable = render_csv(trials, ranking, selected, CsvOptions { wall_clock: false });
    write(&out.join(format!("{stem}_stable.csv")), stable)?;
    let clean: Vec<TrialResult> = trials.iter().map(TrialResult::without_wall_clock).collect();
    write_json(&out.join(format!("{stem}_stable.json")), &clean)
}

fn progress(t: &TrialResult) {
    let spec = t.spec.as_ref().map(EncoderSpec::label).unwrap_or_default();
    eprintln!(
        "trial {:>2} {spec}: accuracy {:.4}, mse {}",
        t.trial_index,
        t.accuracy.mean,
        t.mse.map_or("n/a".into(), |m| format!("{:.5}", m.mean))
    );
}

fn generate(a: &GenerateArgs, seed: u64, out: &Path) -> Result<()> {
    start(out, json!({"command": "generate", "args": a}), seed, None)?;
    let cfg = if a.mapping {
        SynthConfig::mapping_borne(a.effect)
    } else {
        SynthConfig::with_fc_effect(a.effect)
    };
    let ds = synth_generate(a.subjects, a.nodes, seed, &cfg)?;
    save_dataset(&ds, out)?;
    let (neg, pos) = ds.class_counts();
    println!(
        "wrote {} subjects ({neg} label 0, {pos} label 1), {} nodes, {} planted edges to {}",
        ds.len(),
        ds.n_nodes,
        ds.planted_edges.len(),
        out.display()
    );
    println!("digest {}", manifest::dataset_digest(out)?);
    Ok(())
}

fn train(a: &TrainArgs, seed: u64, out: &Path) -> Result<()> {
    let cfg = a.train.config(seed)?;
    start(out, json!({"command": "train", "args": a}), seed, Some(&a.data))?;
    let ds = load(&a.data)?;
    let spec = a.model.spec(ds.n_nodes)?;
    let folds = make_folds(&ds, cfg.k_folds, seed)?;
    let r = train_trial(&spec, &ds, &folds, &cfg)?;
    write_json(&out.join("folds.json"), &folds)?;
    write_json(&out.join("metrics.json"), &r)?;
    write_reports(out, "metrics", std::slice::from_ref(&r), &[0], &[])?;
    fail_on_failed(std::slice::from_ref(&r))?;
    let params = r.best_params.clone().context("training produced no model")?;
    let meta = json!({"method": r.method, "accuracy": r.accuracy, "mse": r.mse, "folds": cfg.k_folds});
    save_checkpoint(&out.join("checkpoint.json"), &Checkpoint::new(spec.clone(), params, seed, meta))?;
    println!(
        "{}: accuracy {:.4} ± {:.4}, F {:.4}, mse {}",
        spec.label(),
        r.accuracy.mean,
        r.accuracy.std,
        r.f_score.mean,
        r.mse.map_or("n/a".into(), |m| format!("{:.5} ± {:.5}", m.mean, m.std))
    );
    Ok(())
}

fn sweep(a: &SweepArgs, seed: u64, threads: usize, out: &Path) -> Result<()> {
    let cfg = a.train.config(seed)?;
    let top_specs = match (a.stage, &a.top_from) {
        (Stage::Two, None) => bail!("stage two needs --top-from pointing at a stage-one report (stage_one.json)"),
        (Stage::Two, Some(p)) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let report: StageOneReport =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            ensure!(!report.top.is_empty(), "stage-one report {} names no top specs", p.display());
            Some(report.top_specs())
        }
        (Stage::One, _) => None,
    };
    start(out, json!({"command": "sweep", "args": a}), seed, Some(&a.data))?;
    let ds = load(&a.data)?;
    let cb = |t: &TrialResult| progress(t);
    match top_specs {
        None => {
            let rep = stage_one_sweep(&ds, &cfg, threads, Some(&cb))?;
            write_json(&out.join("stage_one.json"), &rep)?;
            write_reports(out, "stage_one", &rep.trials, &rep.ranking, &rep.top)?;
            println!("stage one: {} trials", rep.trials.len());
            for (rank, &i) in rep.top.iter().enumerate() {
                let t = &rep.trials[i];
                println!(
                    "  top {}: {} (c_low {})",
                    rank + 1,
                    t.spec.as_ref().map(EncoderSpec::label).unwrap_or_default(),
                    t.c_low.map_or("n/a".into(), |c| format!("{c:.6e}"))
                );
            }
            fail_on_failed(&rep.trials)
        }
        Some(specs) => {
            let rep = stage_two_lambda(&specs, &ds, &cfg, threads, Some(&cb))?;
            write_json(&out.join("stage_two.json"), &rep)?;
            let ranking = rank_by_c_low(&rep.trials);
            write_reports(out, "stage_two", &rep.trials, &ranking, &[rep.winner])?;
            let w = &rep.trials[rep.winner];
            let spec = rep.winner_spec().clone();
            if let Some(params) = w.best_params.clone() {
                let meta = json!({"method": "stage-two winner", "c_high": w.c_high});
                save_checkpoint(&out.join("checkpoint.json"), &Checkpoint::new(spec.clone(), params, seed, meta))?;
            }
            println!(
                "stage two: {} runs; winner {} λ={} (c_high {:.4})",
                rep.trials.len(),
                spec.label(),
                spec.lambda,
                w.c_high.unwrap_or(f64::NAN)
            );
            fail_on_failed(&rep.trials)
        }
    }
}

fn baseline(a: &BaselineArgs, seed: u64, out: &Path) -> Result<()> {
    let cfg = a.train.config(seed)?;
    start(out, json!({"command": "baseline", "args": a}), seed, Some(&a.data))?;
    let ds = load(&a.data)?;
    let folds = make_folds(&ds, cfg.k_folds, seed)?;
    let main_run = a.compare.as_ref().map(|dir| load_main_run(dir, &folds)).transpose()?;
    let r = match a.mode {
        Mode::Features => {
            let fcfg = FeatureConfig {
                fc_threshold: a.fc_threshold,
                ..FeatureConfig::default()
            };
            let source = match a.source {
                Source::Fc => FeatureSource::Fc,
                Source::Sc => FeatureSource::Sc,
                Source::Both => FeatureSource::Both,
            };
            let model = match a.clf {
                Clf::Logistic => LinearModel::Logistic,
                Clf::Svm => LinearModel::LinearSvm,
            };
            let per_graph = connectome_grl::baselines::GraphFeatures::LEN;
            let n_features = if matches!(source, FeatureSource::Both) { 2 * per_graph } else { per_graph };
            println!("graph features: {n_features} per subject");
            let (r, warnings) = feature_classifier(&ds, source, model, &folds, &fcfg)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            r
        }
        mode => {
            let spec = a.model.spec(ds.n_nodes)?;
            match mode {
                Mode::TwoStep => two_step(&ds, &spec, &folds, &cfg)?,
                Mode::Combined => combined_input_classifier(&ds, &spec, &folds, &cfg)?,
                Mode::AeSc => autoencoder(&ds, AutoencoderKind::Sc, &spec, &folds, &cfg)?,
                Mode::AeFc => autoencoder(&ds, AutoencoderKind::Fc, &spec, &folds, &cfg)?,
                Mode::Features => unreachable!("handled above"),
            }
        }
    };
    write_json(&out.join("folds.json"), &folds)?;
    write_json(&out.join("metrics.json"), &r)?;
    write_reports(out, "metrics", std::slice::from_ref(&r), &[0], &[])?;
    if let Some(main) = main_run {
        write(&out.join("comparison.csv"), comparison_csv(&main, &r))?;
    }
    println!(
        "{}: accuracy {:.4} ± {:.4}, F {:.4}, mse {}",
        r.method,
        r.accuracy.mean,
        r.accuracy.std,
        r.f_score.mean,
        r.mse.map_or("n/a".into(), |m| format!("{:.5}", m.mean))
    );
    fail_on_failed(std::slice::from_ref(&r))
}

fn load_main_run(dir: &Path, folds: &FoldPlan) -> Result<TrialResult> {
    let read = |name: &str| -> Result<String> {
        let p = dir.join(name);
        fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
    };
    let main_folds: FoldPlan = serde_json::from_str(&read("folds.json")?)?;
    ensure!(
        &main_folds == folds,
        "{} was trained on a different fold plan; rerun with the same --seed and --folds",
        dir.display()
    );
    Ok(serde_json::from_str(&read("metrics.json")?)?)
}

fn comparison_csv(main: &TrialResult, other: &TrialResult) -> String {
    let mut s = format!(
        "fold,{m}_accuracy,{o}_accuracy,{m}_f_score,{o}_f_score,{m}_mse,{o}_mse\n",
        m = main.method,
        o = other.method
    );
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for (a, b) in main.folds.iter().zip(&other.folds) {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            a.fold,
            a.accuracy,
            b.accuracy,
            a.f_score,
            b.f_score,
            opt(a.mse),
            opt(b.mse)
        ));
    }
    s
}

fn analyze(a: &AnalyzeArgs, seed: u64, out: &Path) -> Result<()> {
    ensure!(a.alpha > 0.0 && a.alpha < 1.0, "--alpha must lie in (0, 1)");
    start(out, json!({"command": "analyze", "args": a}), seed, Some(&a.data))?;
    println!("FDR level alpha = {}", a.alpha);
    let ds = load(&a.data)?;
    let ckpt = load_checkpoint(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let rec = reconstruct_all(&ckpt, &ds)?;
    let results = group_edge_tests(&rec.sigmas, &ds.labels(), a.alpha)?;
    let (weaker, stronger) = significant_subgraphs(&results, ds.n_nodes, ds.roi_names.as_deref())?;
    write_edge_tests_csv(&out.join("edge_tests.csv"), &results, &ds)?;
    write_subgraph_json(&out.join("subgraph_weaker.json"), &weaker)?;
    write_subgraph_json(&out.join("subgraph_stronger.json"), &stronger)?;
    let pcs = project_embeddings(&rec.embeddings)?;
    write_embeddings_csv(&out.join("embeddings.csv"), &ds, &rec.embeddings, &pcs)?;
    let rejected = results.iter().filter(|r| r.rejected).count();
    let mut summary = json!({
        "alpha": a.alpha,
        "tests": results.len(),
        "rejected": rejected,
        "weaker_edges": weaker.edges.len(),
        "stronger_edges": stronger.edges.len(),
    });
    println!(
        "{} edge tests, {rejected} rejected ({} weaker, {} stronger)",
        results.len(),
        weaker.edges.len(),
        stronger.edges.len()
    );
    if !ds.planted_edges.is_empty() {
        let (recall, precision) = planted_recovery(&results, &ds.planted_edges);
        summary["planted_recall"] = json!(recall);
        summary["planted_precision"] = json!(precision);
        println!("planted edges: recall {recall:.3}, precision {precision:.3}");
    }
    write_json(&out.join("summary.json"), &summary)
}
