//! The graph encoder-decoder: a stack of renormalized-adjacency GCN layers
//! over one-hot node inputs, an outer-product FC decoder, global pooling and
//! a logistic head, with an analytic reverse pass.
//!
//! Layer ℓ computes `X⁽ˡ⁾ = ReLU(Ã X⁽ˡ⁻¹⁾ Θ⁽ˡ⁾)`. With one-hot input
//! `X⁽⁰⁾ = I_N` the first layer reduces to `ReLU(Ã Θ⁽¹⁾)`, so `d0 = N` and
//! row `i` of `Θ⁽¹⁾` is a learned embedding of node `i`.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::SubjectRecord;
use crate::error::{Error, Result};
use crate::gsp::validate_adjacency;
use crate::numerics::{dot, xavier_init, Mat, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Max,
    Sum,
}

impl Pooling {
    pub const ALL: [Pooling; 3] = [Pooling::Mean, Pooling::Max, Pooling::Sum];

    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Mean => "mean",
            Pooling::Max => "max",
            Pooling::Sum => "sum",
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            "sum" => Ok(Pooling::Sum),
            other => Err(Error::invalid(format!(
                "unknown pooling '{other}' (expected mean, max or sum)"
            ))),
        }
    }
}

/// Architecture plus loss weight.
/// Parses layer widths written as `d1xd2x...`, e.g. `32x16x8`.
pub fn parse_arch(s: &str) -> Result<Vec<usize>> {
    let widths = s
        .split('x')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|&w| w > 0)
                .ok_or_else(|| Error::invalid(format!("bad layer width '{t}' in architecture '{s}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(widths)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub d0: usize,
    pub layer_widths: Vec<usize>,
    pub concat: bool,
    pub pooling: Pooling,
    pub lambda: f64,
}

impl EncoderSpec {
    pub fn new(d0: usize, layer_widths: Vec<usize>, concat: bool, pooling: Pooling, lambda: f64) -> Result<Self> {
        let spec = EncoderSpec {
            d0,
            layer_widths,
            concat,
            pooling,
            lambda,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d0 == 0 {
            return Err(Error::invalid("d0 must be positive"));
        }
        if self.layer_widths.is_empty() {
            return Err(Error::invalid("encoder needs at least one layer"));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::invalid(format!(
                "layer widths must be positive, got {:?}",
                self.layer_widths
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.layer_widths.len()
    }

    /// Width of `X_C`.
    pub fn d_emb(&self) -> usize {
        if self.concat {
            self.layer_widths.iter().sum()
        } else {
            *self.layer_widths.last().expect("validated non-empty")
        }
    }

    /// `"32x16x8"`.
    pub fn arch_string(&self) -> String {
        self.layer_widths
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join("x")
    }

    /// `"32x16x8/concat/mean"`, without λ.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}",
            self.arch_string(),
            if self.concat { "concat" } else { "last" },
            self.pooling
        )
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        EncoderSpec {
            lambda,
            ..self.clone()
        }
    }

    fn theta_shape(&self, layer: usize) -> (usize, usize) {
        let fan_in = if layer == 0 { self.d0 } else { self.layer_widths[layer - 1] };
        (fan_in, self.layer_widths[layer])
    }
}

/// Learnable parameters: per-layer filters plus the logistic head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub thetas: Vec<Mat>,
    pub w_cls: Vec<f64>,
    pub b_cls: f64,
}

impl ModelParams {
    pub fn zeros(spec: &EncoderSpec) -> Self {
        ModelParams {
            thetas: (0..spec.n_layers())
                .map(|l| {
                    let (r, c) = spec.theta_shape(l);
                    Mat::zeros(r, c)
                })
                .collect(),
            w_cls: vec![0.0; spec.d_emb()],
            b_cls: 0.0,
        }
    }

    /// Glorot-uniform filters and head weights; zero bias.
    pub fn xavier(spec: &EncoderSpec, rng: &mut Rng) -> Self {
        let thetas = (0..spec.n_layers())
            .map(|l| {
                let (r, c) = spec.theta_shape(l);
                xavier_init(rng, r, c)
            })
            .collect();
        let w_cls = xavier_init(rng, spec.d_emb(), 1).into_data();
        ModelParams {
            thetas,
            w_cls,
            b_cls: 0.0,
        }
    }

    pub fn validate(&self, spec: &EncoderSpec) -> Result<()> {
        if self.thetas.len() != spec.n_layers() {
            return Err(Error::shape(format!(
                "{} filter matrices for {} layers",
                self.thetas.len(),
                spec.n_layers()
            )));
        }
        for (l, t) in self.thetas.iter().enumerate() {
            if t.shape() != spec.theta_shape(l) {
                return Err(Error::shape(format!(
                    "layer {} filter is {:?}, expected {:?}",
                    l + 1,
                    t.shape(),
                    spec.theta_shape(l)
                )));
            }
        }
        if self.w_cls.len() != spec.d_emb() {
            return Err(Error::shape(format!(
                "classifier weight has length {}, expected {}",
                self.w_cls.len(),
                spec.d_emb()
            )));
        }
        let finite = self.thetas.iter().all(Mat::all_finite)
            && self.w_cls.iter().all(|x| x.is_finite())
            && self.b_cls.is_finite();
        if !finite {
            return Err(Error::numeric("parameters contain non-finite values"));
        }
        Ok(())
    }

    /// `[Θ⁽¹⁾, …, Θ⁽ᴸ⁾, w (1×d), b (1×1)]`, the layout used by the optimizer.
    pub fn to_mats(&self) -> Vec<Mat> {
        let mut out = self.thetas.clone();
        out.push(Mat::from_vec(1, self.w_cls.len(), self.w_cls.clone()).expect("row vector"));
        out.push(Mat::from_vec(1, 1, vec![self.b_cls]).expect("scalar"));
        out
    }

    pub fn from_mats(mats: &[Mat]) -> Result<Self> {
        if mats.len() < 3 {
            return Err(Error::shape(format!(
                "need at least 3 parameter blocks, got {}",
                mats.len()
            )));
        }
        let l = mats.len() - 2;
        let w = &mats[l];
        let b = &mats[l + 1];
        if w.rows() != 1 || b.shape() != (1, 1) {
            return Err(Error::shape("classifier blocks must be 1xd and 1x1"));
        }
        Ok(ModelParams {
            thetas: mats[..l].to_vec(),
            w_cls: w.data().to_vec(),
            b_cls: b[(0, 0)],
        })
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &ModelParams, s: f64) {
        for (a, b) in self.thetas.iter_mut().zip(&other.thetas) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += s * y;
            }
        }
        for (x, y) in self.w_cls.iter_mut().zip(&other.w_cls) {
            *x += s * y;
        }
        self.b_cls += s * other.b_cls;
    }

    /// Cheap digest of every parameter bit, used to detect stale traces.
    pub fn fingerprint(&self) -> u64 {
        let mix = |h: u64, x: u64| (h.rotate_left(5) ^ x).wrapping_mul(0x517c_c1b7_2722_0a95);
        let mut h = 0u64;
        for t in &self.thetas {
            h = mix(h, (t.rows() as u64) << 32 | t.cols() as u64);
            h = t.data().iter().fold(h, |h, x| mix(h, x.to_bits()));
        }
        h = self.w_cls.iter().fold(h, |h, x| mix(h, x.to_bits()));
        mix(h, self.b_cls.to_bits())
    }
}

/// `D̂^{-1/2} (I + A) D̂^{-1/2}` with `D̂ = diag((I + A)·1)`. Exactly symmetric.
pub fn renormalize(a: &Mat) -> Result<Mat> {
    validate_adjacency(a, "adjacency")?;
    let n = a.rows();
    let d: Vec<f64> = a.row_sums().iter().map(|s| 1.0 + s).collect();
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = 1.0 / d[i];
        for j in i + 1..n {
            let v = a[(i, j)] / (d[i] * d[j]).sqrt();
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// `ReLU(Ã X Θ)`.
pub fn gcn_layer(a_norm: &Mat, x: &Mat, theta: &Mat) -> Result<Mat> {
    check_operator(a_norm, x.rows())?;
    Ok(a_norm.matmul(&x.matmul(theta)?)?.relu())
}

fn check_operator(a_norm: &Mat, n: usize) -> Result<()> {
    if !a_norm.is_square() || a_norm.rows() != n {
        return Err(Error::shape(format!(
            "operator is {}x{}, signal has {n} rows",
            a_norm.rows(),
            a_norm.cols()
        )));
    }
    Ok(())
}

/// Cached pre- and post-activations of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerCache {
    pub pre: Mat,
    pub act: Mat,
}

/// Everything the reverse pass needs from one forward evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub a_norm: Mat,
    /// Input features; `None` means one-hot (`I_N`).
    pub x0: Option<Mat>,
    pub layers: Vec<LayerCache>,
    pub xc: Mat,
    pub xg: Vec<f64>,
    /// Row index chosen per column by max pooling.
    pub argmax: Vec<usize>,
    pub sigma_hat: Mat,
    pub logit: f64,
    pub y_hat: f64,
    fingerprint: u64,
}

impl ForwardTrace {
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.pre.to_le_bytes());
            out.extend(l.act.to_le_bytes());
        }
        out.extend(self.xc.to_le_bytes());
        for x in &self.xg {
            out.extend(x.to_le_bytes());
        }
        out.extend(self.sigma_hat.to_le_bytes());
        out.extend(self.y_hat.to_le_bytes());
        out
    }
}

fn encode_layers(
    spec: &EncoderSpec,
    params: &ModelParams,
    a_norm: &Mat,
    x0: Option<&Mat>,
) -> Result<(Mat, Vec<LayerCache>)> {
    params.validate(spec)?;
    let n = a_norm.rows();
    check_operator(a_norm, n)?;
    match x0 {
        Some(x) if x.shape() != (n, spec.d0) => {
            return Err(Error::shape(format!(
                "input features are {}x{}, expected {n}x{}",
                x.rows(),
                x.cols(),
                spec.d0
            )))
        }
        None if spec.d0 != n => {
            return Err(Error::shape(format!(
                "one-hot input needs d0 = N = {n}, spec has d0 = {}",
                spec.d0
            )))
        }
        _ => {}
    }
    let mut layers: Vec<LayerCache> = Vec::with_capacity(spec.n_layers());
    for (l, theta) in params.thetas.iter().enumerate() {
        let h = match (l, x0) {
            (0, None) => theta.clone(),
            (0, Some(x)) => x.matmul(theta)?,
            _ => layers[l - 1].act.matmul(theta)?,
        };
        let pre = a_norm.matmul(&h)?;
        let act = pre.relu();
        layers.push(LayerCache { pre, act });
    }
    let xc = if spec.concat {
        let parts: Vec<&Mat> = layers.iter().map(|c| &c.act).collect();
        Mat::hcat(&parts)?
    } else {
        layers.last().expect("at least one layer").act.clone()
    };
    Ok((xc, layers))
}

/// Node embeddings `X_C` for an arbitrary input signal `x0` (N×d0).
pub fn encode(spec: &EncoderSpec, params: &ModelParams, a_norm: &Mat, x0: &Mat) -> Result<(Mat, Vec<LayerCache>)> {
    encode_layers(spec, params, a_norm, Some(x0))
}

/// Column-wise reduction over nodes. Returns the pooled vector and, for max
/// pooling, the first maximizing row of each column.
pub fn pool(xc: &Mat, kind: Pooling) -> Result<(Vec<f64>, Vec<usize>)> {
    let (n, d) = xc.shape();
    if n == 0 || d == 0 {
        return Err(Error::shape("cannot pool an empty embedding matrix"));
    }
    let mut out = xc.row(0).to_vec();
    let mut arg = vec![0usize; d];
    for i in 1..n {
        let row = xc.row(i);
        match kind {
            Pooling::Mean | Pooling::Sum => {
                for (o, x) in out.iter_mut().zip(row) {
                    *o += x;
                }
            }
            Pooling::Max => {
                for j in 0..d {
                    if row[j] > out[j] {
                        out[j] = row[j];
                        arg[j] = i;
                    }
                }
            }
        }
    }
    if kind == Pooling::Mean {
        let inv = n as f64;
        for o in &mut out {
            *o /= inv;
        }
    }
    if kind != Pooling::Max {
        arg.clear();
    }
    Ok((out, arg))
}

/// `ReLU(X_C X_Cᵀ)`.
pub fn decode_fc(xc: &Mat) -> Mat {
    xc.matmul_t(xc).expect("X Xᵀ is always conformable").relu()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `σ(w·x_G + b)`.
pub fn classify(xg: &[f64], w: &[f64], b: f64) -> Result<f64> {
    if xg.len() != w.len() {
        return Err(Error::shape(format!(
            "pooled vector has length {}, classifier expects {}",
            xg.len(),
            w.len()
        )));
    }
    Ok(sigmoid(dot(w, xg) + b))
}

/// Forward pass on a subject's SC with one-hot input.
pub fn forward(spec: &EncoderSpec, params: &ModelParams, subject: &SubjectRecord) -> Result<ForwardTrace> {
    forward_with(spec, params, &renormalize(&subject.sc)?)
}

/// Forward pass on a precomputed operator `Ã` with one-hot input.
pub fn forward_with(spec: &EncoderSpec, params: &ModelParams, a_norm: &Mat) -> Result<ForwardTrace> {
    forward_impl(spec, params, a_norm, None)
}

/// Forward pass with explicit input features.
pub fn forward_features(spec: &EncoderSpec, params: &ModelParams, a_norm: &Mat, x0: &Mat) -> Result<ForwardTrace> {
    forward_impl(spec, params, a_norm, Some(x0))
}

fn forward_impl(spec: &EncoderSpec, params: &ModelParams, a_norm: &Mat, x0: Option<&Mat>) -> Result<ForwardTrace> {
    let (xc, layers) = encode_layers(spec, params, a_norm, x0)?;
    let (xg, argmax) = pool(&xc, spec.pooling)?;
    let sigma_hat = decode_fc(&xc);
    let logit = dot(&params.w_cls, &xg) + params.b_cls;
    Ok(ForwardTrace {
        a_norm: a_norm.clone(),
        x0: x0.cloned(),
        layers,
        xc,
        xg,
        argmax,
        sigma_hat,
        logit,
        y_hat: sigmoid(logit),
        fingerprint: params.fingerprint(),
    })
}

/// Weights of the two loss terms: `mse · MSE + ce · CE`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub mse: f64,
    pub ce: f64,
}

impl LossWeights {
    /// The joint objective `MSE + λ·CE`.
    pub fn joint(lambda: f64) -> Self {
        LossWeights { mse: 1.0, ce: lambda }
    }

    pub fn ce_only() -> Self {
        LossWeights { mse: 0.0, ce: 1.0 }
    }
}

/// Gradient of `weights.mse · MSE_offdiag(Σ̂, target) + weights.ce · CE(ŷ, y)`
/// with respect to every parameter. `target` may be omitted when
/// `weights.mse == 0`.
pub fn backward(
    spec: &EncoderSpec,
    params: &ModelParams,
    trace: &ForwardTrace,
    target: Option<&Mat>,
    y: u8,
    weights: LossWeights,
) -> Result<ModelParams> {
    if trace.fingerprint != params.fingerprint() || trace.layers.len() != spec.n_layers() {
        return Err(Error::invalid(
            "stale trace: parameters changed since the forward pass",
        ));
    }
    let n = trace.xc.rows();
    let d = trace.xc.cols();
    let mut grads = ModelParams::zeros(spec);

    // Logistic head.
    let g = weights.ce * (trace.y_hat - f64::from(y));
    for (gw, x) in grads.w_cls.iter_mut().zip(&trace.xg) {
        *gw = g * x;
    }
    grads.b_cls = g;

    let mut dxc = Mat::zeros(n, d);
    if g != 0.0 {
        match spec.pooling {
            Pooling::Mean | Pooling::Sum => {
                let scale = if spec.pooling == Pooling::Mean { g / n as f64 } else { g };
                let dxg: Vec<f64> = params.w_cls.iter().map(|w| scale * w).collect();
                for i in 0..n {
                    dxc.row_mut(i).copy_from_slice(&dxg);
                }
            }
            Pooling::Max => {
                for (j, &i) in trace.argmax.iter().enumerate() {
                    dxc[(i, j)] += g * params.w_cls[j];
                }
            }
        }
    }

    // Decoder.
    if weights.mse != 0.0 {
        let target = target.ok_or_else(|| Error::invalid("reconstruction gradient needs a target"))?;
        if target.shape() != (n, n) {
            return Err(Error::shape(format!(
                "target is {:?}, reconstruction is {n}x{n}",
                target.shape()
            )));
        }
        let c = weights.mse * 2.0 / (n * n.saturating_sub(1)).max(1) as f64;
        let mut dp = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let s = trace.sigma_hat[(i, j)];
                if i != j && s > 0.0 {
                    dp[(i, j)] = c * (s - target[(i, j)]);
                }
            }
        }
        let sym = dp.add(&dp.transpose())?;
        dxc.add_assign(&sym.matmul(&trace.xc)?)?;
    }

    // Encoder, last layer first.
    let mut offset = d;
    let mut upstream: Option<Mat> = None;
    for l in (0..spec.n_layers()).rev() {
        let cache = &trace.layers[l];
        let width = spec.layer_widths[l];
        let mut dx = if spec.concat {
            offset -= width;
            dxc.col_block(offset, width)
        } else if l + 1 == spec.n_layers() {
            dxc.clone()
        } else {
            Mat::zeros(n, width)
        };
        if let Some(u) = upstream.take() {
            dx.add_assign(&u)?;
        }
        let mut dz = dx;
        for (g, z) in dz.data_mut().iter_mut().zip(cache.pre.data()) {
            if *z <= 0.0 {
                *g = 0.0;
            }
        }
        let dh = trace.a_norm.t_matmul(&dz)?;
        grads.thetas[l] = if l == 0 {
            match &trace.x0 {
                None => dh.clone(),
                Some(x) => x.t_matmul(&dh)?,
            }
        } else {
            trace.layers[l - 1].act.t_matmul(&dh)?
        };
        if l > 0 {
            upstream = Some(dh.matmul_t(&params.thetas[l])?);
        }
    }
    Ok(grads)
}
