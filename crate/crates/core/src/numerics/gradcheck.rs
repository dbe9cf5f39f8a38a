use super::Mat;
use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `params`, one entry at a time.
pub fn fd_gradient<F>(mut f: F, params: &[Mat], h: f64) -> Result<Vec<Mat>>
where
    F: FnMut(&[Mat]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {h}")));
    }
    let mut probe = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = Mat::zeros(params[p].rows(), params[p].cols());
        for k in 0..params[p].data().len() {
            let orig = probe[p].data()[k];
            probe[p].data_mut()[k] = orig + h;
            let plus = f(&probe);
            probe[p].data_mut()[k] = orig - h;
            let minus = f(&probe);
            probe[p].data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::numeric(format!(
                    "objective not finite when probing parameter {p} entry {k}"
                )));
            }
            g.data_mut()[k] = (plus - minus) / (2.0 * h);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Largest elementwise `|a - n| / max(1, |a|)` over a gradient set.
pub fn max_relative_error(analytic: &[Mat], numeric: &[Mat]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}
