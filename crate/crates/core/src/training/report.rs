use std::fmt::Write as _;

use super::{Summary, TimeBasis, TrialResult};

/// Which columns of the summary CSV to emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CsvOptions {
    /// Include wall-clock seconds and, under the wall-clock time basis,
    /// everything derived from them (`c_low`, `rank`, `selected`).
    pub wall_clock: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { wall_clock: true }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn summary(s: Option<Summary>) -> [String; 2] {
    match s {
        Some(s) => [s.mean.to_string(), s.std.to_string()],
        None => [String::new(), String::new()],
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per trial in trial order. `ranking` lists trial positions best
/// first; `selected` marks positions carried forward.
pub fn render_csv(trials: &[TrialResult], ranking: &[usize], selected: &[usize], opts: CsvOptions) -> String {
    let wall_scores = trials.iter().any(|t| t.time_basis == TimeBasis::Wall);
    let keep_c_low = opts.wall_clock || !wall_scores;

    let mut header = vec![
        "trial", "method", "spec", "layers", "pooling", "concat", "lambda", "mse_mean", "mse_std", "accuracy_mean",
        "accuracy_std", "f_score_mean", "f_score_std", "epochs",
    ];
    if opts.wall_clock {
        header.push("seconds");
    }
    if keep_c_low {
        header.push("c_low");
    }
    header.push("c_high");
    if keep_c_low {
        header.extend(["rank", "selected"]);
    }
    header.push("failed");

    let mut out = header.join(",");
    out.push('\n');
    for (pos, t) in trials.iter().enumerate() {
        let mut row = vec![t.trial_index.to_string(), t.method.clone()];
        match &t.spec {
            Some(s) => row.extend([
                s.label(),
                s.arch_string(),
                s.pooling.to_string(),
                s.concat.to_string(),
                s.lambda.to_string(),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 5)),
        }
        row.extend(summary(t.mse));
        row.extend(summary(Some(t.accuracy)));
        row.extend(summary(Some(t.f_score)));
        row.push(t.total_epochs.to_string());
        if opts.wall_clock {
            row.push(t.train_seconds.to_string());
        }
        if keep_c_low {
            row.push(opt(t.c_low));
        }
        row.push(opt(t.c_high));
        if keep_c_low {
            let rank = ranking.iter().position(|&r| r == pos).map(|r| r + 1);
            row.push(rank.map(|r| r.to_string()).unwrap_or_default());
            row.push(selected.contains(&pos).to_string());
        }
        row.push(t.failed.clone().unwrap_or_default());
        let line: Vec<String> = row.iter().map(|f| csv_field(f)).collect();
        writeln!(out, "{}", line.join(",")).expect("writing to a String cannot fail");
    }
    out
}
