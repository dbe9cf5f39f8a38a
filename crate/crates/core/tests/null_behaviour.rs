use connectome_grl::analysis::group_edge_tests;
use connectome_grl::baselines::{feature_classifier, FeatureConfig, FeatureSource, LinearModel};
use connectome_grl::dataset::{make_folds, synth_generate, SynthConfig};
use connectome_grl::numerics::{Mat, Rng};

fn balanced() -> SynthConfig {
    SynthConfig {
        positive_fraction: 0.5,
        ..SynthConfig::default()
    }
}

#[test]
fn edge_tests_are_calibrated_without_an_effect() {
    let seeds = 50;
    let mut raw_hits = 0usize;
    let mut raw_total = 0usize;
    let mut clipped_hits = 0usize;
    let mut clipped_total = 0usize;
    let mut seeds_with_rejection = 0usize;
    for seed in 0..seeds {
        let ds = synth_generate(60, 20, 1000 + seed, &balanced()).unwrap();
        let fcs: Vec<Mat> = ds.subjects.iter().map(|s| s.fc.clone()).collect();
        let res = group_edge_tests(&fcs, &ds.labels(), 0.05).unwrap();
        // Clipping to [0, 1] piles mass on the bounds, which makes the test
        // conservative there; calibration is judged on never-clipped edges.
        for r in &res {
            let (i, j) = r.edge;
            let interior = fcs.iter().all(|m| m[(i, j)] > 0.0 && m[(i, j)] < 1.0);
            let hit = usize::from(r.p_value < 0.05);
            if interior {
                raw_hits += hit;
                raw_total += 1;
            } else {
                clipped_hits += hit;
                clipped_total += 1;
            }
        }
        if res.iter().any(|r| r.rejected) {
            seeds_with_rejection += 1;
        }
    }
    let raw_rate = raw_hits as f64 / raw_total as f64;
    assert!(raw_total > 1000, "only {raw_total} interior edges");
    assert!((raw_rate - 0.05).abs() < 0.015, "uncorrected rate {raw_rate} over {raw_total} edges");
    if clipped_total > 0 {
        let rate = clipped_hits as f64 / clipped_total as f64;
        assert!(rate <= 0.065, "clipped-edge rate {rate}");
    }
    // Under the complete null BH bounds the chance of any rejection by q.
    assert!(seeds_with_rejection <= 7, "{seeds_with_rejection}/{seeds} seeds rejected something");
}

#[test]
fn feature_classifiers_are_at_chance_on_shuffled_labels() {
    let mut total = 0.0;
    let mut runs = 0;
    for seed in 0..4 {
        let mut ds = synth_generate(120, 12, 50 + seed, &SynthConfig { effect: 0.3, ..balanced() }).unwrap();
        let mut labels = ds.labels();
        Rng::new(seed).shuffle(&mut labels);
        for (s, &l) in ds.subjects.iter_mut().zip(&labels) {
            s.label = l;
        }
        let folds = make_folds(&ds, 5, seed).unwrap();
        for model in [LinearModel::Logistic, LinearModel::LinearSvm] {
            let (r, _) = feature_classifier(&ds, FeatureSource::Both, model, &folds, &FeatureConfig::default()).unwrap();
            total += r.accuracy.mean;
            runs += 1;
        }
    }
    let mean = total / runs as f64;
    assert!((mean - 0.5).abs() <= 0.1, "mean accuracy {mean}");
}
