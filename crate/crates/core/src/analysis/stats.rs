use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos approximation, reflection below 1/2).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail `P(|T| ≥ |t|)` of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    inc_beta(0.5 * df, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    /// Both groups constant with different values.
    pub degenerate: bool,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance t-test, two-sided.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid(format!(
            "each group needs at least 2 values, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::invalid("t-test inputs must be finite"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Ok(if ma == mb {
            WelchTest { t: 0.0, df: f64::NAN, p: 1.0, degenerate: false }
        } else {
            WelchTest {
                t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
                df: f64::NAN,
                p: 0.0,
                degenerate: true,
            }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok(WelchTest {
        t,
        df,
        p: student_t_two_sided(t, df),
        degenerate: false,
    })
}

/// Largest p-value accepted by Benjamini–Hochberg at level `q`, if any.
pub fn bh_cutoff(p: &[f64], q: f64) -> Option<f64> {
    let mut sorted: Vec<f64> = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .filter(|&(k, &pk)| pk <= (k + 1) as f64 * q / m)
        .map(|(_, &pk)| pk)
        .next_back()
}

/// Benjamini–Hochberg decisions in input order.
pub fn bh_fdr(p: &[f64], q: f64) -> Vec<bool> {
    match bh_cutoff(p, q) {
        Some(c) => p.iter().map(|&x| x <= c).collect(),
        None => vec![false; p.len()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::function::{beta, gamma};

    #[test]
    fn special_functions_match_reference() {
        for &x in &[0.1, 0.5, 1.0, 2.5, 7.0, 30.0, 171.3] {
            let r = gamma::ln_gamma(x);
            assert!((ln_gamma(x) - r).abs() <= 1e-12 * r.abs().max(1.0), "{x}");
        }
        for &(a, b) in &[(0.5, 0.5), (2.0, 3.0), (4.0, 0.5), (50.0, 0.5), (0.7, 9.0)] {
            for i in 1..20 {
                let x = i as f64 / 20.0;
                let r = beta::beta_reg(a, b, x);
                assert!((inc_beta(a, b, x) - r).abs() < 1e-10, "I_{x}({a}, {b})");
            }
        }
    }

    #[test]
    fn t_tail_matches_reference() {
        for &df in &[1.0, 2.5, 8.0, 30.0, 200.0] {
            let d = StudentsT::new(0.0, 1.0, df).unwrap();
            for &t in &[0.0, 0.3, 1.0, 2.0, 4.5, 12.0] {
                let r = 2.0 * (1.0 - d.cdf(t));
                assert!((student_t_two_sided(t, df) - r).abs() < 1e-10, "t={t} df={df}");
            }
        }
    }

    #[test]
    fn welch_hand_example() {
        let r = welch_t(&[1.0, 2.0, 3.0, 4.0, 5.0], &[3.0, 4.0, 5.0, 6.0, 7.0]).unwrap();
        assert!((r.t + 2.0).abs() < 1e-12);
        assert!((r.df - 8.0).abs() < 1e-12);
        assert!((r.p - 0.0805).abs() < 5e-4, "{}", r.p);
    }

    #[test]
    fn welch_degenerate_cases() {
        let same = welch_t(&[2.0, 2.0, 2.0], &[2.0, 2.0]).unwrap();
        assert_eq!((same.t, same.p, same.degenerate), (0.0, 1.0, false));
        let diff = welch_t(&[2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert_eq!((diff.p, diff.degenerate), (0.0, true));
        let ident = welch_t(&[1.0, 4.0, 2.0], &[1.0, 4.0, 2.0]).unwrap();
        assert_eq!((ident.t, ident.p), (0.0, 1.0));
        assert!(welch_t(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn welch_p_matches_permutation_oracle() {
        let mut rng = Rng::new(11);
        for _ in 0..3 {
            let a: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
            let b: Vec<f64> = (0..8).map(|_| 0.8 + rng.normal()).collect();
            let obs = welch_t(&a, &b).unwrap();
            let mut pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
            let reps = 100_000;
            let mut hits = 0;
            for _ in 0..reps {
                rng.shuffle(&mut pooled);
                let r = welch_t(&pooled[..8], &pooled[8..]).unwrap();
                if r.t.abs() >= obs.t.abs() {
                    hits += 1;
                }
            }
            let perm = hits as f64 / reps as f64;
            assert!((perm - obs.p).abs() <= 0.02, "perm {perm} vs t {}", obs.p);
        }
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_fdr(&[0.01, 0.02, 0.04], 0.05), vec![true; 3]);
        assert_eq!(bh_fdr(&[1.0, 1.0], 0.05), vec![false; 2]);
        assert_eq!(bh_fdr(&[0.04], 0.05), vec![true]);
        assert_eq!(bh_fdr(&[0.04, 0.001, 0.9, 0.03], 0.05), vec![false, true, false, false]);
        assert_eq!(bh_fdr(&[0.02, 0.04, 0.045], 0.05), vec![true, true, true]);
        assert_eq!(bh_fdr(&[0.02, 0.06, 0.07], 0.05), vec![false; 3]);
    }

    #[test]
    fn extra_null_can_revoke_a_rejection() {
        // The step-up threshold shrinks with m, so a p = 1 hypothesis is not harmless.
        assert_eq!(bh_fdr(&[0.05], 0.05), vec![true]);
        assert_eq!(bh_fdr(&[0.05, 1.0], 0.05), vec![false, false]);
    }

    fn brute_bh(p: &[f64], q: f64) -> Vec<bool> {
        let m = p.len() as f64;
        let mut best = None;
        for &c in p {
            let rank = p.iter().filter(|&&x| x <= c).count() as f64;
            if c <= rank * q / m && best.is_none_or(|b| c > b) {
                best = Some(c);
            }
        }
        p.iter().map(|&x| best.is_some_and(|b| x <= b)).collect()
    }

    proptest! {
        #[test]
        fn welch_swap_negates_t(a in proptest::collection::vec(-10.0..10.0f64, 2..12), b in proptest::collection::vec(-10.0..10.0f64, 2..12)) {
            let x = welch_t(&a, &b).unwrap();
            let y = welch_t(&b, &a).unwrap();
            prop_assert_eq!(x.t.to_bits(), (-y.t).to_bits());
            prop_assert_eq!(x.p.to_bits(), y.p.to_bits());
            prop_assert!((0.0..=1.0).contains(&x.p));
        }

        #[test]
        fn bh_matches_brute_force(p in proptest::collection::vec(0.0..1.0f64, 1..40), q in 0.01..0.5f64) {
            prop_assert_eq!(bh_fdr(&p, q), brute_bh(&p, q));
        }

        #[test]
        fn bh_monotone_under_extra_certain_rejection(p in proptest::collection::vec(0.0..1.0f64, 1..40), q in 0.01..0.5f64) {
            let before = bh_fdr(&p, q);
            let mut more = p.clone();
            more.push(0.0);
            let after = bh_fdr(&more, q);
            for (b, a) in before.iter().zip(&after) {
                prop_assert!(!*b || *a);
            }
        }
    }
}
