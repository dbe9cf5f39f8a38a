//! Graph signal processing primitives: the combinatorial Laplacian, its
//! eigenbasis, the graph Fourier transform and polynomial graph filters.
//!
//! These exist mostly as independent references for the encoder's
//! propagation semantics; the encoder itself never calls into this module.

mod eig;

pub use eig::eig_sym;

use crate::error::{Error, Result};
use crate::numerics::Mat;

const ADJ_TOL: f64 = 1e-9;

/// Checks that `a` is square, symmetric, nonnegative, with zero diagonal.
pub(crate) fn validate_adjacency(a: &Mat, what: &str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::invalid(format!(
            "{what} must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if a.max_asymmetry() > ADJ_TOL {
        return Err(Error::invalid(format!(
            "{what} is not symmetric (max |a_ij - a_ji| = {:e})",
            a.max_asymmetry()
        )));
    }
    if let Some(x) = a.data().iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid(format!("{what} has a negative or non-finite entry {x}")));
    }
    if let Some(i) = (0..a.rows()).find(|&i| a[(i, i)] != 0.0) {
        return Err(Error::invalid(format!(
            "{what} has nonzero diagonal entry {} at node {i}",
            a[(i, i)]
        )));
    }
    Ok(())
}

/// `L = diag(A·1) − A`.
pub fn laplacian(a: &Mat) -> Result<Mat> {
    validate_adjacency(a, "adjacency")?;
    let deg = a.row_sums();
    let mut l = a.scale(-1.0);
    for (i, d) in deg.into_iter().enumerate() {
        l[(i, i)] = d;
    }
    Ok(l)
}

/// A Laplacian together with its eigendecomposition `L = U Λ Uᵀ`.
#[derive(Clone, Debug)]
pub struct GsoBundle {
    pub laplacian: Mat,
    pub eigvals: Vec<f64>,
    pub eigvecs: Mat,
}

impl GsoBundle {
    pub fn from_adjacency(a: &Mat) -> Result<Self> {
        let laplacian = laplacian(a)?;
        let (eigvals, eigvecs) = eig_sym(&laplacian)?;
        Ok(GsoBundle {
            laplacian,
            eigvals,
            eigvecs,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.laplacian.rows()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_nodes() {
            return Err(Error::shape(format!(
                "signal has length {}, graph has {} nodes",
                x.len(),
                self.n_nodes()
            )));
        }
        Ok(())
    }
}

/// Graph Fourier transform `Uᵀx`.
pub fn gft(bundle: &GsoBundle, x: &[f64]) -> Result<Vec<f64>> {
    bundle.check_len(x)?;
    bundle.eigvecs.transpose().matvec(x)
}

/// Inverse transform `U x̃`.
pub fn igft(bundle: &GsoBundle, xt: &[f64]) -> Result<Vec<f64>> {
    bundle.check_len(xt)?;
    bundle.eigvecs.matvec(xt)
}

/// Polynomial graph filter `H = Σₖ hₖ Lᵏ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyFilter {
    coeffs: Vec<f64>,
}

impl PolyFilter {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("a filter needs at least one tap"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("filter taps must be finite"));
        }
        Ok(PolyFilter { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `h̃(λ) = Σₖ hₖ λᵏ`.
    pub fn frequency_response(&self, lambda: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &h| acc * lambda + h)
    }
}

/// `Σₖ hₖ Lᵏ x` via Horner's scheme: K one-hop shifts by `L`.
pub fn apply_filter(filter: &PolyFilter, bundle: &GsoBundle, x: &[f64]) -> Result<Vec<f64>> {
    bundle.check_len(x)?;
    let taps = filter.coeffs();
    let mut y: Vec<f64> = x.iter().map(|v| taps[taps.len() - 1] * v).collect();
    for &h in taps[..taps.len() - 1].iter().rev() {
        y = bundle.laplacian.matvec(&y)?;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += h * xi;
        }
    }
    Ok(y)
}

/// Same filter evaluated in the frequency domain, `U diag(h̃(λᵢ)) Uᵀ x`.
pub fn apply_filter_spectral(
    filter: &PolyFilter,
    bundle: &GsoBundle,
    x: &[f64],
) -> Result<Vec<f64>> {
    let mut xt = gft(bundle, x)?;
    for (c, &lambda) in xt.iter_mut().zip(&bundle.eigvals) {
        *c *= filter.frequency_response(lambda);
    }
    igft(bundle, &xt)
}

/// `D^{-1/2} A D^{-1/2}`. An all-zero graph maps to the zero matrix; any
/// other graph with an isolated node is rejected.
pub fn sym_normalized_adjacency(a: &Mat) -> Result<Mat> {
    validate_adjacency(a, "adjacency")?;
    let deg = a.row_sums();
    if deg.iter().all(|&d| d == 0.0) {
        return Ok(Mat::zeros(a.rows(), a.cols()));
    }
    if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::invalid(format!(
            "node {i} has zero degree; degree normalization is undefined"
        )));
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    Ok(Mat::from_fn(a.rows(), a.cols(), |i, j| {
        inv_sqrt[i] * a[(i, j)] * inv_sqrt[j]
    }))
}

/// `I + D^{-1/2} A D^{-1/2}`.
pub fn first_order_operator(a: &Mat) -> Result<Mat> {
    let mut op = sym_normalized_adjacency(a)?;
    for i in 0..op.rows() {
        op[(i, i)] += 1.0;
    }
    Ok(op)
}

/// First-order graph convolution `θ (I + D^{-1/2} A D^{-1/2}) x`.
pub fn first_order_filter(a: &Mat, theta: f64, x: &[f64]) -> Result<Vec<f64>> {
    let op = first_order_operator(a)?;
    Ok(op.matvec(x)?.into_iter().map(|v| theta * v).collect())
}
