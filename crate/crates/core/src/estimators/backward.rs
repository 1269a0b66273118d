//! Reverse-mode chain through recorded forward passes.
//!
//! One walker serves every estimator: straight-through variants differ only in
//! how sign layers are bridged, and the enumeration oracle uses the same walk
//! with sign layers treated as hard stops (binary states held fixed).

use ndarray::{Array1, Array2, Axis};

use crate::error::Error;
use crate::sbn::{Layer, LayerRecord, NetworkSpec, Target};
use crate::Result;

/// Surrogate Jacobian inserted at a sign activation on the way down.
#[derive(Clone, Debug)]
pub enum SignBridge<'a> {
    /// `(x_up - x_down) * F'(a)`: 2F' for +-1 encoding, F' for {0,1}.
    CdfSlope,
    /// Bypass the slope entirely (identity proxy).
    Identity,
    /// Replace the slope with a fixed non-negative diagonal.
    Rescaled(&'a Array1<f64>),
    /// Do not cross sign layers at all; the walk ends there.
    Stop,
}

/// Whether binary-weight layers emit `2 dL/dw` into their logit slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightsMode {
    /// Straight-through-weights: `dL/deta = 2 dL/dw`, bypassing `F_w'`.
    StGrad,
    /// Pass the gradient through the sampled weights without touching logits
    /// (used by the enumeration oracle, where logits get score terms instead).
    PassThrough,
}

pub(crate) struct ChainCfg<'a> {
    pub bridge: SignBridge<'a>,
    pub weights: WeightsMode,
}

/// Flat offset at which each layer's parameter block begins.
pub(crate) fn layer_offset_table(net: &NetworkSpec) -> Vec<usize> {
    let mut table = Vec::with_capacity(net.layers().len());
    let mut off = 0usize;
    for layer in net.layers() {
        table.push(off);
        off += match layer {
            Layer::RealLinear { weight, bias } => weight.len() + bias.len(),
            Layer::BinaryLinear { logits, .. } => logits.len(),
            Layer::BatchNormAffine { scale, bias, .. } => scale.len() + bias.len(),
            _ => 0,
        };
    }
    table
}

fn add_slice(flat: &mut Array1<f64>, off: usize, values: &Array2<f64>) {
    for (k, v) in values.iter().enumerate() {
        flat[off + k] += v;
    }
}

fn add_slice1(flat: &mut Array1<f64>, off: usize, values: &Array1<f64>) {
    for (k, v) in values.iter().enumerate() {
        flat[off + k] += v;
    }
}

/// Where a downward chain ended.
pub(crate) enum ChainOutcome {
    /// Walked all the way down; holds the gradient at the network input.
    Reached(Array2<f64>),
    /// Hit a sign layer under [`SignBridge::Stop`]; holds the gradient at
    /// that layer's output (the binary states).
    StoppedAtSign { grad: Array2<f64> },
}

impl ChainOutcome {
    pub(crate) fn reached(self) -> Option<Array2<f64>> {
        match self {
            ChainOutcome::Reached(g) => Some(g),
            ChainOutcome::StoppedAtSign { .. } => None,
        }
    }
}

/// Walk records `start-1 .. 0`, chaining `g` (batch x dim at layer `start`)
/// down to the input. Parameter gradients accumulate into `flat`.
pub(crate) fn chain_down(
    net: &NetworkSpec,
    records: &[LayerRecord],
    start: usize,
    mut g: Array2<f64>,
    cfg: &ChainCfg,
    flat: &mut Array1<f64>,
) -> Result<ChainOutcome> {
    let offsets = layer_offset_table(net);
    for i in (0..start).rev() {
        let layer = &net.layers()[i];
        let rec = &records[i];
        match (layer, rec) {
            (Layer::RealLinear { weight, .. }, LayerRecord::RealLinear { input }) => {
                let gw = g.t().dot(input);
                add_slice(flat, offsets[i], &gw);
                let gb = g.sum_axis(Axis(0));
                add_slice1(flat, offsets[i] + weight.len(), &gb);
                g = g.dot(weight);
            }
            (Layer::BinaryLinear { logits, .. }, LayerRecord::BinaryLinear { input, weights, .. }) => {
                if cfg.weights == WeightsMode::StGrad {
                    let gw = g.t().dot(input);
                    add_slice(flat, offsets[i], &(2.0 * gw));
                }
                let _ = logits;
                g = g.dot(weights);
            }
            (
                Layer::BatchNormAffine { scale, .. },
                LayerRecord::BatchNorm { normalized, inv_std, train, .. },
            ) => {
                let gscale = (&g * normalized).sum_axis(Axis(0));
                add_slice1(flat, offsets[i], &gscale);
                let gbias = g.sum_axis(Axis(0));
                add_slice1(flat, offsets[i] + scale.len(), &gbias);
                if *train {
                    let batch = g.nrows() as f64;
                    let mut dxhat = g.clone();
                    for mut row in dxhat.rows_mut() {
                        for (j, v) in row.iter_mut().enumerate() {
                            *v *= scale[j];
                        }
                    }
                    let m1 = dxhat.sum_axis(Axis(0)) / batch;
                    let m2 = (&dxhat * normalized).sum_axis(Axis(0)) / batch;
                    let mut out = dxhat;
                    for (b, mut row) in out.rows_mut().into_iter().enumerate() {
                        for (j, v) in row.iter_mut().enumerate() {
                            *v = inv_std[j] * (*v - m1[j] - normalized[(b, j)] * m2[j]);
                        }
                    }
                    g = out;
                } else {
                    for mut row in g.rows_mut() {
                        for (j, v) in row.iter_mut().enumerate() {
                            *v *= scale[j] * inv_std[j];
                        }
                    }
                }
            }
            (Layer::SignActivation { noise, encoding }, LayerRecord::Sign { pre, .. }) => {
                match &cfg.bridge {
                    SignBridge::Stop => return Ok(ChainOutcome::StoppedAtSign { grad: g }),
                    SignBridge::Identity => {}
                    SignBridge::CdfSlope => {
                        let factor = encoding.st_factor();
                        for (b, mut row) in g.rows_mut().into_iter().enumerate() {
                            for (j, v) in row.iter_mut().enumerate() {
                                *v *= factor * noise.pdf_raw(pre[(b, j)]);
                            }
                        }
                    }
                    SignBridge::Rescaled(lambda) => {
                        if lambda.len() != g.ncols() {
                            return Err(Error::DimensionMismatch {
                                site: "rescaling diagonal",
                                expected: g.ncols(),
                                got: lambda.len(),
                            });
                        }
                        for mut row in g.rows_mut() {
                            for (j, v) in row.iter_mut().enumerate() {
                                *v *= lambda[j];
                            }
                        }
                    }
                }
            }
            (Layer::Softmax, LayerRecord::Softmax { output }) => {
                let mut out = g.clone();
                for (b, mut row) in out.rows_mut().into_iter().enumerate() {
                    let f = output.row(b);
                    let dot = row.dot(&f);
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = f[j] * (*v - dot);
                    }
                }
                g = out;
            }
            (Layer::Relu, LayerRecord::Relu { input }) => {
                for (b, mut row) in g.rows_mut().into_iter().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        if input[(b, j)] <= 0.0 {
                            *v = 0.0;
                        }
                    }
                }
            }
            _ => {
                return Err(Error::InvalidParam(
                    "tape does not match network layers".into(),
                ))
            }
        }
    }
    Ok(ChainOutcome::Reached(g))
}

/// Mean-loss gradient at the network output, one row per example, already
/// scaled by 1/batch.
pub(crate) fn output_loss_grad(
    net: &NetworkSpec,
    output: &Array2<f64>,
    targets: &[Target],
) -> Result<Array2<f64>> {
    let batch = output.nrows();
    let mut g = Array2::zeros(output.raw_dim());
    for (b, row) in output.rows().into_iter().enumerate() {
        let t = if targets.is_empty() { &Target::None } else { &targets[b] };
        let gr = net.loss().grad(row, t)?;
        for (j, v) in gr.iter().enumerate() {
            g[(b, j)] = v / batch as f64;
        }
    }
    Ok(g)
}
