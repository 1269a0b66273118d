//! The SBN computation graph: noisy-sign activations, Bernoulli-weight linear
//! layers, batch-norm affine, real layers and losses, with forward passes
//! recorded on a tape for the backward estimators.

pub mod loss;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::Error;
use crate::noise::NoiseModel;
use crate::stream::RandomStream;
use crate::Result;

pub use loss::{multilinear_correction, LossFn, Target};

/// Batch-norm defaults; the affine scale/bias are the learnable parameters.
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Clip applied to uniform weight-probability draws before inverting the cdf.
pub const THETA_CLIP: f64 = 1e-4;

/// Binary alphabet used by sign activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    PmOne,
    ZeroOne,
}

impl Encoding {
    /// Value for an "up" (+) or "down" (-) unit.
    #[inline]
    pub fn state(self, up: bool) -> f64 {
        match self {
            Encoding::PmOne => {
                if up {
                    1.0
                } else {
                    -1.0
                }
            }
            Encoding::ZeroOne => {
                if up {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// The other letter of the alphabet.
    #[inline]
    pub fn flip(self, v: f64) -> f64 {
        match self {
            Encoding::PmOne => -v,
            Encoding::ZeroOne => 1.0 - v,
        }
    }

    /// +1 for the up state, -1 for the down state.
    #[inline]
    pub fn sign_of(self, v: f64) -> f64 {
        match self {
            Encoding::PmOne => v,
            Encoding::ZeroOne => 2.0 * v - 1.0,
        }
    }

    /// Multiplier on `F'(a)` in the straight-through backward: the flip
    /// distance `x_up - x_down` (2 for +-1, 1 for {0,1}).
    #[inline]
    pub fn st_factor(self) -> f64 {
        match self {
            Encoding::PmOne => 2.0,
            Encoding::ZeroOne => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Encoding::PmOne => "pm_one",
            Encoding::ZeroOne => "zero_one",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pm_one" => Ok(Encoding::PmOne),
            "zero_one" => Ok(Encoding::ZeroOne),
            other => Err(Error::InvalidParam(format!("unknown encoding `{other}`"))),
        }
    }
}

/// A vector constrained to a two-letter alphabet.
#[derive(Clone, Debug)]
pub struct BinaryVec {
    pub values: Array1<f64>,
    pub encoding: Encoding,
}

impl BinaryVec {
    pub fn new(values: Array1<f64>, encoding: Encoding) -> Result<Self> {
        let (lo, hi) = (encoding.state(false), encoding.state(true));
        if values.iter().any(|&v| v != lo && v != hi) {
            return Err(Error::InvalidParam(format!(
                "binary vector entry outside {{{lo}, {hi}}}"
            )));
        }
        Ok(BinaryVec { values, encoding })
    }
}

/// One layer of a network.
#[derive(Clone, Debug)]
pub enum Layer {
    /// `y = W x + b` with a real weight matrix (out x in).
    RealLinear { weight: Array2<f64>, bias: Array1<f64> },
    /// `y = w x` with `w_ij = sign(eta_ij - z_ij)` sampled +-1 Bernoulli
    /// weights, `P(w_ij = +1) = F_w(eta_ij)`.
    BinaryLinear { logits: Array2<f64>, noise: NoiseModel },
    /// Batch normalisation with learnable affine scale/bias.
    BatchNormAffine {
        scale: Array1<f64>,
        bias: Array1<f64>,
        eps: f64,
        momentum: f64,
        running_mean: Array1<f64>,
        running_var: Array1<f64>,
    },
    /// `x_i = sign(a_i - z_i)` mapped onto the chosen encoding.
    SignActivation { noise: NoiseModel, encoding: Encoding },
    Softmax,
    Relu,
}

impl Layer {
    fn out_dim(&self, in_dim: usize) -> Result<usize> {
        match self {
            Layer::RealLinear { weight, bias } => {
                if weight.ncols() != in_dim {
                    return Err(Error::DimensionMismatch {
                        site: "linear input",
                        expected: weight.ncols(),
                        got: in_dim,
                    });
                }
                if bias.len() != weight.nrows() {
                    return Err(Error::DimensionMismatch {
                        site: "linear bias",
                        expected: weight.nrows(),
                        got: bias.len(),
                    });
                }
                Ok(weight.nrows())
            }
            Layer::BinaryLinear { logits, .. } => {
                if logits.ncols() != in_dim {
                    return Err(Error::DimensionMismatch {
                        site: "binary linear input",
                        expected: logits.ncols(),
                        got: in_dim,
                    });
                }
                if logits.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteInput);
                }
                Ok(logits.nrows())
            }
            Layer::BatchNormAffine { scale, eps, .. } => {
                if scale.len() != in_dim {
                    return Err(Error::DimensionMismatch {
                        site: "batch norm",
                        expected: scale.len(),
                        got: in_dim,
                    });
                }
                if !(*eps > 0.0) {
                    return Err(Error::InvalidParam("batch norm eps must be positive".into()));
                }
                Ok(in_dim)
            }
            Layer::SignActivation { .. } | Layer::Softmax | Layer::Relu => Ok(in_dim),
        }
    }

    /// Number of stochastic binary sites this layer contributes.
    fn stochastic_bits(&self, in_dim: usize) -> usize {
        match self {
            Layer::SignActivation { .. } => in_dim,
            Layer::BinaryLinear { logits, .. } => logits.len(),
            _ => 0,
        }
    }
}

/// One entry of the flat parameter layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat offsets of every trainable tensor, in layer order.
#[derive(Clone, Debug, Default)]
pub struct ParamLayout {
    pub entries: Vec<LayoutEntry>,
    pub total: usize,
}

impl ParamLayout {
    pub fn name_at(&self, flat_index: usize) -> &str {
        for e in &self.entries {
            if flat_index >= e.offset && flat_index < e.offset + e.len() {
                return &e.name;
            }
        }
        "<unknown>"
    }

    pub fn find(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// A layered SBN: layers, one loss, and the flat parameter layout.
#[derive(Clone, Debug)]
pub struct NetworkSpec {
    layers: Vec<Layer>,
    loss: LossFn,
    input_dim: usize,
    output_dim: usize,
    layout: ParamLayout,
}

/// Per-layer forward records.
#[derive(Clone, Debug)]
pub enum LayerRecord {
    RealLinear { input: Array2<f64> },
    BinaryLinear { input: Array2<f64>, weights: Array2<f64>, probs: Array2<f64> },
    BatchNorm {
        normalized: Array2<f64>,
        inv_std: Array1<f64>,
        mean: Array1<f64>,
        var: Array1<f64>,
        train: bool,
    },
    Sign {
        pre: Array2<f64>,
        states: Array2<f64>,
        probs: Array2<f64>,
        noise: Option<Array2<f64>>,
    },
    Softmax { output: Array2<f64> },
    Relu { input: Array2<f64> },
}

/// Everything one forward pass recorded. Single-owner; replaying the same
/// stream state reproduces it bit for bit.
#[derive(Clone, Debug)]
pub struct ForwardTape {
    pub records: Vec<LayerRecord>,
    pub input: Array2<f64>,
    pub output: Array2<f64>,
    /// Mean per-example loss; `None` if the loss needed absent targets.
    pub loss: Option<f64>,
}

/// How stochastic layers resolve their draws during a forward pass.
pub(crate) enum SampleMode<'a> {
    Stochastic { rng: &'a mut RandomStream, retain_noise: bool },
    Deterministic,
    /// Forced binary patterns, one entry per stochastic layer in order.
    Forced(&'a [ForcedLayer]),
}

#[derive(Clone, Debug)]
pub(crate) enum ForcedLayer {
    States(Array2<f64>),
    Weights(Array2<f64>),
}

impl NetworkSpec {
    pub fn new(layers: Vec<Layer>, loss: LossFn, input_dim: usize) -> Result<Self> {
        let mut dim = input_dim;
        let mut entries = Vec::new();
        let mut offset = 0usize;
        for (i, layer) in layers.iter().enumerate() {
            dim = layer.out_dim(dim)?;
            match layer {
                Layer::RealLinear { weight, bias } => {
                    entries.push(LayoutEntry {
                        name: format!("layer{i}.weight"),
                        offset,
                        shape: vec![weight.nrows(), weight.ncols()],
                    });
                    offset += weight.len();
                    entries.push(LayoutEntry {
                        name: format!("layer{i}.bias"),
                        offset,
                        shape: vec![bias.len()],
                    });
                    offset += bias.len();
                }
                Layer::BinaryLinear { logits, .. } => {
                    entries.push(LayoutEntry {
                        name: format!("layer{i}.logits"),
                        offset,
                        shape: vec![logits.nrows(), logits.ncols()],
                    });
                    offset += logits.len();
                }
                Layer::BatchNormAffine { scale, bias, .. } => {
                    entries.push(LayoutEntry {
                        name: format!("layer{i}.scale"),
                        offset,
                        shape: vec![scale.len()],
                    });
                    offset += scale.len();
                    entries.push(LayoutEntry {
                        name: format!("layer{i}.bias"),
                        offset,
                        shape: vec![bias.len()],
                    });
                    offset += bias.len();
                }
                _ => {}
            }
        }
        if let Some(need) = loss.input_dim() {
            if need != dim {
                return Err(Error::DimensionMismatch {
                    site: "loss input",
                    expected: need,
                    got: dim,
                });
            }
        }
        Ok(NetworkSpec {
            layers,
            loss,
            input_dim,
            output_dim: dim,
            layout: ParamLayout { entries, total: offset },
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn loss(&self) -> &LossFn {
        &self.loss
    }

    pub fn set_loss(&mut self, loss: LossFn) -> Result<()> {
        if let Some(need) = loss.input_dim() {
            if need != self.output_dim {
                return Err(Error::DimensionMismatch {
                    site: "loss input",
                    expected: need,
                    got: self.output_dim,
                });
            }
        }
        self.loss = loss;
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Indices of stochastic layers (sign activations and binary-weight
    /// linears), with their site counts.
    pub fn stochastic_layers(&self) -> Vec<(usize, usize)> {
        let mut dim = self.input_dim;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let bits = layer.stochastic_bits(dim);
            if bits > 0 {
                out.push((i, bits));
            }
            dim = layer.out_dim(dim).expect("validated at construction");
        }
        out
    }

    /// Gather all trainable parameters into one flat vector.
    pub fn params_flat(&self) -> Array1<f64> {
        let mut flat = Array1::zeros(self.layout.total);
        let mut off = 0usize;
        for layer in &self.layers {
            match layer {
                Layer::RealLinear { weight, bias } => {
                    for v in weight.iter() {
                        flat[off] = *v;
                        off += 1;
                    }
                    for v in bias.iter() {
                        flat[off] = *v;
                        off += 1;
                    }
                }
                Layer::BinaryLinear { logits, .. } => {
                    for v in logits.iter() {
                        flat[off] = *v;
                        off += 1;
                    }
                }
                Layer::BatchNormAffine { scale, bias, .. } => {
                    for v in scale.iter() {
                        flat[off] = *v;
                        off += 1;
                    }
                    for v in bias.iter() {
                        flat[off] = *v;
                        off += 1;
                    }
                }
                _ => {}
            }
        }
        flat
    }

    /// Scatter a flat vector back into the layer parameters.
    pub fn set_params_flat(&mut self, flat: ArrayView1<f64>) -> Result<()> {
        if flat.len() != self.layout.total {
            return Err(Error::DimensionMismatch {
                site: "flat parameters",
                expected: self.layout.total,
                got: flat.len(),
            });
        }
        let mut off = 0usize;
        for layer in &mut self.layers {
            match layer {
                Layer::RealLinear { weight, bias } => {
                    for v in weight.iter_mut() {
                        *v = flat[off];
                        off += 1;
                    }
                    for v in bias.iter_mut() {
                        *v = flat[off];
                        off += 1;
                    }
                }
                Layer::BinaryLinear { logits, .. } => {
                    for v in logits.iter_mut() {
                        *v = flat[off];
                        off += 1;
                    }
                }
                Layer::BatchNormAffine { scale, bias, .. } => {
                    for v in scale.iter_mut() {
                        *v = flat[off];
                        off += 1;
                    }
                    for v in bias.iter_mut() {
                        *v = flat[off];
                        off += 1;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Stochastic forward pass on a batch (rows are examples). `targets` must
    /// be one per example, or empty when the loss needs none.
    pub fn forward_sample(
        &self,
        input: ArrayView2<f64>,
        targets: &[Target],
        rng: &mut RandomStream,
        retain_noise: bool,
    ) -> Result<ForwardTape> {
        self.forward_with(input, targets, SampleMode::Stochastic { rng, retain_noise })
    }

    /// Deterministic forward: all noises fixed to zero, so `x = sign(a)` and
    /// `w = sign(eta)` with ties resolving to +1; batch norm uses running
    /// statistics.
    pub fn forward_det(&self, input: ArrayView2<f64>, targets: &[Target]) -> Result<ForwardTape> {
        self.forward_with(input, targets, SampleMode::Deterministic)
    }

    pub(crate) fn forward_forced(
        &self,
        input: ArrayView2<f64>,
        targets: &[Target],
        forced: &[ForcedLayer],
    ) -> Result<ForwardTape> {
        self.forward_with(input, targets, SampleMode::Forced(forced))
    }

    /// Forward pass with every stochastic layer pinned: sign activations take
    /// the given state matrices, binary-weight layers the given +-1 weight
    /// matrices, in layer order.
    pub fn forward_pinned(
        &self,
        input: ArrayView2<f64>,
        targets: &[Target],
        pinned: Vec<Array2<f64>>,
    ) -> Result<ForwardTape> {
        let mut forced = Vec::with_capacity(pinned.len());
        let mut it = pinned.into_iter();
        for layer in &self.layers {
            match layer {
                Layer::SignActivation { .. } => {
                    let states = it.next().ok_or(Error::InvalidParam(
                        "missing pinned states for a sign layer".into(),
                    ))?;
                    forced.push(ForcedLayer::States(states));
                }
                Layer::BinaryLinear { .. } => {
                    let weights = it.next().ok_or(Error::InvalidParam(
                        "missing pinned weights for a binary linear layer".into(),
                    ))?;
                    forced.push(ForcedLayer::Weights(weights));
                }
                _ => {}
            }
        }
        self.forward_forced(input, targets, &forced)
    }

    /// Mean of `k` stochastic forward outputs. The network must end in a
    /// softmax head so the average is a probability vector.
    pub fn forward_ensemble(
        &self,
        input: ArrayView2<f64>,
        k: usize,
        rng: &mut RandomStream,
    ) -> Result<Array2<f64>> {
        if k < 1 {
            return Err(Error::InvalidParam("ensemble size must be at least 1".into()));
        }
        if !matches!(self.layers.last(), Some(Layer::Softmax)) {
            return Err(Error::InvalidParam("ensemble needs a softmax head".into()));
        }
        let mut acc: Option<Array2<f64>> = None;
        for _ in 0..k {
            let tape = self.forward_sample(input, &[], rng, false)?;
            acc = Some(match acc {
                None => tape.output,
                Some(a) => a + &tape.output,
            });
        }
        Ok(acc.expect("k >= 1") / k as f64)
    }

    /// Fold the batch statistics recorded on `tape` into the running
    /// mean/variance of each batch-norm layer.
    pub fn absorb_bn_stats(&mut self, tape: &ForwardTape) {
        for (layer, rec) in self.layers.iter_mut().zip(tape.records.iter()) {
            if let (
                Layer::BatchNormAffine { momentum, running_mean, running_var, .. },
                LayerRecord::BatchNorm { mean, var, train: true, .. },
            ) = (layer, rec)
            {
                let m = *momentum;
                running_mean.zip_mut_with(mean, |r, b| *r = (1.0 - m) * *r + m * b);
                running_var.zip_mut_with(var, |r, b| *r = (1.0 - m) * *r + m * b);
            }
        }
    }

    pub(crate) fn forward_with(
        &self,
        input: ArrayView2<f64>,
        targets: &[Target],
        mut mode: SampleMode,
    ) -> Result<ForwardTape> {
        if input.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                site: "network input",
                expected: self.input_dim,
                got: input.ncols(),
            });
        }
        if !targets.is_empty() && targets.len() != input.nrows() {
            return Err(Error::DimensionMismatch {
                site: "targets",
                expected: input.nrows(),
                got: targets.len(),
            });
        }
        let mut x = input.to_owned();
        let mut records = Vec::with_capacity(self.layers.len());
        let mut forced_idx = 0usize;
        for (li, layer) in self.layers.iter().enumerate() {
            let (out, rec) = match layer {
                Layer::SignActivation { .. } | Layer::BinaryLinear { .. } => {
                    let forced_here = if let SampleMode::Forced(f) = &mode {
                        let item = f.get(forced_idx).cloned();
                        forced_idx += 1;
                        item
                    } else {
                        None
                    };
                    stochastic_forward(layer, &x, &mut mode, forced_here)?
                }
                _ => deterministic_forward(layer, &x, !matches!(mode, SampleMode::Deterministic))?,
            };
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: li });
            }
            records.push(rec);
            x = out;
        }
        let loss = if targets.is_empty() {
            match self.loss {
                LossFn::MultinomialReconstruction | LossFn::SoftmaxCrossEntropy => None,
                _ => Some(mean_loss(&self.loss, &x, targets)?),
            }
        } else {
            Some(mean_loss(&self.loss, &x, targets)?)
        };
        Ok(ForwardTape { records, input: input.to_owned(), output: x, loss })
    }
}

fn mean_loss(loss: &LossFn, output: &Array2<f64>, targets: &[Target]) -> Result<f64> {
    let mut total = 0.0;
    for (b, row) in output.rows().into_iter().enumerate() {
        let t = if targets.is_empty() { &Target::None } else { &targets[b] };
        total += loss.eval(row, t)?;
    }
    Ok(total / output.nrows() as f64)
}

/// Forward one deterministic layer. `train_stats` selects batch statistics in
/// batch norm (stochastic/forced modes) versus running statistics.
pub(crate) fn deterministic_forward(
    layer: &Layer,
    x: &Array2<f64>,
    train_stats: bool,
) -> Result<(Array2<f64>, LayerRecord)> {
    match layer {
        Layer::RealLinear { weight, bias } => {
            let out = x.dot(&weight.t()) + bias;
            Ok((out, LayerRecord::RealLinear { input: x.clone() }))
        }
        Layer::BatchNormAffine { scale, bias, eps, running_mean, running_var, .. } => {
            let (mean, var) = if train_stats {
                let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
                let mut var = Array1::zeros(x.ncols());
                for row in x.rows() {
                    for (j, v) in row.iter().enumerate() {
                        let d = v - mean[j];
                        var[j] += d * d;
                    }
                }
                var /= x.nrows() as f64;
                (mean, var)
            } else {
                (running_mean.clone(), running_var.clone())
            };
            let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
            let mut normalized = x.clone();
            for mut row in normalized.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (*v - mean[j]) * inv_std[j];
                }
            }
            let mut out = normalized.clone();
            for mut row in out.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = scale[j] * *v + bias[j];
                }
            }
            Ok((out, LayerRecord::BatchNorm { normalized, inv_std, mean, var, train: train_stats }))
        }
        Layer::Softmax => {
            let mut out = x.clone();
            for mut row in out.rows_mut() {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - m).exp();
                    sum += *v;
                }
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
            Ok((out.clone(), LayerRecord::Softmax { output: out }))
        }
        Layer::Relu => {
            let out = x.mapv(|v| v.max(0.0));
            Ok((out, LayerRecord::Relu { input: x.clone() }))
        }
        _ => unreachable!("stochastic layer in deterministic_forward"),
    }
}

fn stochastic_forward(
    layer: &Layer,
    x: &Array2<f64>,
    mode: &mut SampleMode,
    forced: Option<ForcedLayer>,
) -> Result<(Array2<f64>, LayerRecord)> {
    match layer {
        Layer::SignActivation { noise, encoding } => {
            let pre = x.clone();
            let probs = pre.mapv(|a| noise.cdf_raw(a));
            let (states, kept_noise) = match mode {
                SampleMode::Stochastic { rng, retain_noise } => {
                    let mut states = Array2::zeros(pre.raw_dim());
                    let mut zbuf = if *retain_noise {
                        Some(Array2::zeros(pre.raw_dim()))
                    } else {
                        None
                    };
                    for ((b, i), a) in pre.indexed_iter() {
                        let u = rng.open01();
                        let z = noise.quantile_raw(u);
                        states[(b, i)] = encoding.state(*a - z >= 0.0);
                        if let Some(zs) = zbuf.as_mut() {
                            zs[(b, i)] = z;
                        }
                    }
                    (states, zbuf)
                }
                SampleMode::Deterministic => {
                    (pre.mapv(|a| encoding.state(a >= 0.0)), None)
                }
                SampleMode::Forced(_) => match forced {
                    Some(ForcedLayer::States(s)) => {
                        if s.raw_dim() != pre.raw_dim() {
                            return Err(Error::DimensionMismatch {
                                site: "forced states",
                                expected: pre.len(),
                                got: s.len(),
                            });
                        }
                        (s, None)
                    }
                    _ => {
                        return Err(Error::InvalidParam(
                            "forced forward missing sign states".into(),
                        ))
                    }
                },
            };
            Ok((
                states.clone(),
                LayerRecord::Sign { pre, states, probs, noise: kept_noise },
            ))
        }
        Layer::BinaryLinear { logits, noise } => {
            let probs = logits.mapv(|e| noise.cdf_raw(e));
            let weights = match mode {
                SampleMode::Stochastic { rng, .. } => {
                    let mut w = Array2::zeros(logits.raw_dim());
                    for ((r, c), eta) in logits.indexed_iter() {
                        let z = noise.quantile_raw(rng.open01());
                        w[(r, c)] = if *eta - z >= 0.0 { 1.0 } else { -1.0 };
                    }
                    w
                }
                SampleMode::Deterministic => logits.mapv(|e| if e >= 0.0 { 1.0 } else { -1.0 }),
                SampleMode::Forced(_) => match forced {
                    Some(ForcedLayer::Weights(w)) => {
                        if w.raw_dim() != logits.raw_dim() {
                            return Err(Error::DimensionMismatch {
                                site: "forced weights",
                                expected: logits.len(),
                                got: w.len(),
                            });
                        }
                        w
                    }
                    _ => {
                        return Err(Error::InvalidParam(
                            "forced forward missing weight states".into(),
                        ))
                    }
                },
            };
            let out = x.dot(&weights.t());
            Ok((out, LayerRecord::BinaryLinear { input: x.clone(), weights, probs }))
        }
        _ => unreachable!("deterministic layer in stochastic_forward"),
    }
}

/// Shape-only description used by [`init_network`].
#[derive(Clone, Debug)]
pub enum LayerSkeleton {
    RealLinear { inp: usize, out: usize },
    BinaryLinear { inp: usize, out: usize, noise: NoiseModel },
    BatchNormAffine { dim: usize },
    SignActivation { noise: NoiseModel, encoding: Encoding },
    Softmax,
    Relu,
}

/// Initialise a network: real weights `U[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
/// with zero bias, weight probabilities uniform in [0,1] (clipped before the
/// quantile), batch-norm scale 1 / bias 0, and every noise model rescaled to
/// unit slope `2 F'(0) = 1`.
pub fn init_network(
    skeleton: &[LayerSkeleton],
    loss: LossFn,
    input_dim: usize,
    rng: &mut RandomStream,
) -> Result<NetworkSpec> {
    let mut layers = Vec::with_capacity(skeleton.len());
    for sk in skeleton {
        let layer = match sk {
            LayerSkeleton::RealLinear { inp, out } => {
                let bound = 1.0 / (*inp as f64).sqrt();
                let weight = Array2::from_shape_fn((*out, *inp), |_| rng.uniform(-bound, bound));
                Layer::RealLinear { weight, bias: Array1::zeros(*out) }
            }
            LayerSkeleton::BinaryLinear { inp, out, noise } => {
                let noise = noise.normalize_unit_slope();
                let logits = Array2::from_shape_fn((*out, *inp), |_| {
                    let theta = rng.open01().clamp(THETA_CLIP, 1.0 - THETA_CLIP);
                    noise.quantile_raw(theta)
                });
                Layer::BinaryLinear { logits, noise }
            }
            LayerSkeleton::BatchNormAffine { dim } => Layer::BatchNormAffine {
                scale: Array1::ones(*dim),
                bias: Array1::zeros(*dim),
                eps: BN_EPS,
                momentum: BN_MOMENTUM,
                running_mean: Array1::zeros(*dim),
                running_var: Array1::ones(*dim),
            },
            LayerSkeleton::SignActivation { noise, encoding } => Layer::SignActivation {
                noise: noise.normalize_unit_slope(),
                encoding: *encoding,
            },
            LayerSkeleton::Softmax => Layer::Softmax,
            LayerSkeleton::Relu => Layer::Relu,
        };
        layers.push(layer);
    }
    NetworkSpec::new(layers, loss, input_dim)
}
