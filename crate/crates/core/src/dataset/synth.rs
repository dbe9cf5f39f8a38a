use serde::{Deserialize, Serialize};

use super::{clip_fc, Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::model::renormalize;
use crate::numerics::{Mat, Rng};

/// Knobs of the synthetic connectome generator.
///
/// Subjects share a two-hemisphere template topology. Each subject's SC keeps
/// most template edges, gains a few spurious ones, and carries log-normal
/// weights. FC is the correlation-normalized polynomial
/// `α₁Â + α₂Â² + α₃Â³` of the renormalized SC plus symmetric Gaussian noise.
///
/// Positive-label subjects differ on a random clique of `planted_nodes`
/// nodes. `effect` shifts their FC additively by `±effect` on the planted
/// edges. `sc_effect` scales their SC weights on the same edges by
/// `exp(±sc_effect)`, so the difference reaches FC only through the mapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub p_in: f64,
    pub p_out: f64,
    pub keep_prob: f64,
    pub extra_prob: f64,
    pub weight_mu: f64,
    pub weight_sigma: f64,
    pub jitter_sigma: f64,
    pub alpha: [f64; 3],
    pub noise_sd: f64,
    pub effect: f64,
    pub sc_effect: f64,
    pub planted_nodes: usize,
    pub positive_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            p_in: 0.6,
            p_out: 0.2,
            keep_prob: 0.9,
            extra_prob: 0.02,
            weight_mu: 0.0,
            weight_sigma: 0.5,
            jitter_sigma: 0.2,
            alpha: [0.5, 0.3, 0.2],
            noise_sd: 0.1,
            effect: 0.0,
            sc_effect: 0.0,
            planted_nodes: 6,
            positive_fraction: 221.0 / 412.0,
        }
    }
}

impl SynthConfig {
    /// Group difference planted directly on FC edges.
    pub fn with_fc_effect(effect: f64) -> Self {
        SynthConfig {
            effect,
            ..Self::default()
        }
    }

    /// Group difference planted on SC edges only; FC inherits it through the
    /// generative mapping.
    pub fn mapping_borne(effect: f64) -> Self {
        SynthConfig {
            sc_effect: effect * MAPPING_GAIN,
            ..Self::default()
        }
    }

    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        prob("p_in", self.p_in)?;
        prob("p_out", self.p_out)?;
        prob("keep_prob", self.keep_prob)?;
        prob("extra_prob", self.extra_prob)?;
        prob("positive_fraction", self.positive_fraction)?;
        let nonneg = |name: &str, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite and >= 0, got {x}")))
            }
        };
        nonneg("effect", self.effect)?;
        nonneg("sc_effect", self.sc_effect)?;
        nonneg("noise_sd", self.noise_sd)?;
        nonneg("weight_sigma", self.weight_sigma)?;
        nonneg("jitter_sigma", self.jitter_sigma)?;
        if !self.weight_mu.is_finite() {
            return Err(Error::invalid("weight_mu must be finite"));
        }
        for (k, &a) in self.alpha.iter().enumerate() {
            nonneg(&format!("alpha[{k}]"), a)?;
        }
        if self.alpha.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("alpha coefficients must not all be zero"));
        }
        if self.planted_nodes > n_nodes {
            return Err(Error::invalid(format!(
                "cannot plant {} nodes in a {n_nodes}-node graph",
                self.planted_nodes
            )));
        }
        Ok(())
    }
}

/// SC log-weight shift per unit of mapping-borne effect.
pub const MAPPING_GAIN: f64 = 3.0;

pub fn synth_generate(
    n_subjects: usize,
    n_nodes: usize,
    seed: u64,
    cfg: &SynthConfig,
) -> Result<Dataset> {
    if n_nodes < 2 || n_nodes % 2 != 0 {
        return Err(Error::invalid(format!(
            "n_nodes must be even and >= 2, got {n_nodes}"
        )));
    }
    cfg.validate(n_nodes)?;
    let n = n_nodes;
    let half = n / 2;
    let mut rng = Rng::child(seed, 0);

    // Template topology and weights.
    let mut template = Mat::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let p = if (i < half) == (j < half) { cfg.p_in } else { cfg.p_out };
            if rng.bernoulli(p) {
                let w = rng.log_normal(cfg.weight_mu, cfg.weight_sigma);
                template[(i, j)] = w;
                template[(j, i)] = w;
            }
        }
    }

    // Planted clique with a sign per edge; planted pairs are always present.
    let mut nodes: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut nodes);
    let mut planted_nodes = nodes[..cfg.planted_nodes].to_vec();
    planted_nodes.sort_unstable();
    let mut planted = Vec::new();
    let mut sign = Mat::zeros(n, n);
    for (a, &i) in planted_nodes.iter().enumerate() {
        for &j in &planted_nodes[a + 1..] {
            let s = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
            sign[(i, j)] = s;
            sign[(j, i)] = s;
            planted.push((i, j));
            if template[(i, j)] == 0.0 {
                let w = rng.log_normal(cfg.weight_mu, cfg.weight_sigma);
                template[(i, j)] = w;
                template[(j, i)] = w;
            }
        }
    }

    let n_pos = (n_subjects as f64 * cfg.positive_fraction).round() as usize;
    let mut labels: Vec<u8> = (0..n_subjects).map(|s| u8::from(s < n_pos)).collect();
    rng.shuffle(&mut labels);

    let width = n_subjects.saturating_sub(1).to_string().len();
    let subjects = labels
        .iter()
        .enumerate()
        .map(|(s, &label)| {
            let mut r = Rng::child(seed, s as u64 + 1);
            let (sc, fc) = synth_subject(&template, &sign, label, cfg, &mut r)?;
            SubjectRecord::new(format!("synth{s:0width$}"), label, sc, fc)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ds = Dataset::new(n, subjects)?;
    ds.planted_edges = planted;
    Ok(ds)
}

fn synth_subject(
    template: &Mat,
    sign: &Mat,
    label: u8,
    cfg: &SynthConfig,
    rng: &mut Rng,
) -> Result<(Mat, Mat)> {
    let n = template.rows();
    let mut sc = Mat::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let planted = sign[(i, j)] != 0.0;
            let base = template[(i, j)];
            let w = if base > 0.0 {
                if planted || rng.bernoulli(cfg.keep_prob) {
                    base * rng.log_normal(0.0, cfg.jitter_sigma)
                } else {
                    0.0
                }
            } else if rng.bernoulli(cfg.extra_prob) {
                rng.log_normal(cfg.weight_mu, cfg.weight_sigma)
            } else {
                0.0
            };
            let w = if label == 1 && planted {
                w * (sign[(i, j)] * cfg.sc_effect).exp()
            } else {
                w
            };
            sc[(i, j)] = w;
            sc[(j, i)] = w;
        }
    }

    let a = renormalize(&sc)?;
    let a2 = a.matmul(&a)?;
    let a3 = a2.matmul(&a)?;
    let [c1, c2, c3] = cfg.alpha;
    let m = Mat::from_fn(n, n, |i, j| c1 * a[(i, j)] + c2 * a2[(i, j)] + c3 * a3[(i, j)]);

    let mut raw = Mat::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            let mut r = m[(i, j)] / (m[(i, i)] * m[(j, j)]).sqrt();
            r += cfg.noise_sd * rng.normal();
            if label == 1 {
                r += sign[(i, j)] * cfg.effect;
            }
            let r = r.clamp(-1.0, 1.0);
            raw[(i, j)] = r;
            raw[(j, i)] = r;
        }
    }
    Ok((sc, clip_fc(&raw)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SynthConfig::with_fc_effect(0.2);
        let a = synth_generate(12, 10, 5, &cfg).unwrap();
        let b = synth_generate(12, 10, 5, &cfg).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.subjects.iter().zip(&b.subjects) {
            assert_eq!(x.sc.to_le_bytes(), y.sc.to_le_bytes());
            assert_eq!(x.fc.to_le_bytes(), y.fc.to_le_bytes());
        }
        assert_ne!(a, synth_generate(12, 10, 6, &cfg).unwrap());
    }

    #[test]
    fn class_balance_and_metadata() {
        let ds = synth_generate(412, 8, 1, &SynthConfig::default()).unwrap();
        assert_eq!(ds.class_counts(), (191, 221));
        assert_eq!(ds.planted_edges.len(), 15);
        ds.validate().unwrap();
    }

    #[test]
    fn hemispheres_denser_inside() {
        let ds = synth_generate(40, 20, 2, &SynthConfig::default()).unwrap();
        let (mut within, mut between, mut nw, mut nb) = (0.0, 0.0, 0.0, 0.0);
        for s in &ds.subjects {
            for i in 0..20 {
                for j in i + 1..20 {
                    let e = f64::from(u8::from(s.sc[(i, j)] > 0.0));
                    if (i < 10) == (j < 10) {
                        within += e;
                        nw += 1.0;
                    } else {
                        between += e;
                        nb += 1.0;
                    }
                }
            }
        }
        assert!(within / nw > between / nb + 0.2, "{} vs {}", within / nw, between / nb);
    }

    #[test]
    fn fc_effect_moves_planted_edges() {
        let ds = synth_generate(200, 12, 3, &SynthConfig::with_fc_effect(0.3)).unwrap();
        let mut signed_gap = 0.0;
        for &(i, j) in &ds.planted_edges {
            let mean = |lab: u8| {
                let v: Vec<f64> = ds
                    .subjects
                    .iter()
                    .filter(|s| s.label == lab)
                    .map(|s| s.fc[(i, j)])
                    .collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            signed_gap += (mean(1) - mean(0)).abs();
        }
        assert!(signed_gap / ds.planted_edges.len() as f64 > 0.1);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SynthConfig::default();
        assert!(synth_generate(10, 7, 0, &cfg).is_err());
        let bad = SynthConfig {
            p_in: 1.5,
            ..cfg.clone()
        };
        assert!(synth_generate(10, 8, 0, &bad).is_err());
        let bad = SynthConfig {
            effect: -0.1,
            ..cfg.clone()
        };
        assert!(synth_generate(10, 8, 0, &bad).is_err());
        let bad = SynthConfig {
            planted_nodes: 9,
            ..cfg
        };
        assert!(synth_generate(10, 8, 0, &bad).is_err());
    }
}
