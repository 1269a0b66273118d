//! Exact expectations over all binary configurations.
//!
//! These oracles evaluate `E[L]` and its exact parameter gradient by summing
//! over every joint state of the stochastic layers, chaining conditional
//! probabilities layer by layer so that shared prefixes of the computation are
//! not repeated. They are the reference every estimator is measured against.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::Error;
use crate::sbn::{deterministic_forward, ForcedLayer, Layer, LayerRecord, NetworkSpec, Target};
use crate::Result;

use super::backward::{chain_down, layer_offset_table, ChainCfg, SignBridge, WeightsMode};
use super::{local, EstimatorKind, GradEstimate};

/// Joint configurations are capped at `2^ENUM_BUDGET_BITS`.
pub const ENUM_BUDGET_BITS: u32 = 20;

fn check_budget(net: &NetworkSpec) -> Result<Vec<(usize, usize)>> {
    let sites = net.stochastic_layers();
    let bits: usize = sites.iter().map(|(_, b)| b).sum();
    if bits as u32 > ENUM_BUDGET_BITS {
        return Err(Error::EnumerationBudget {
            required_bits: bits as u32,
            budget_bits: ENUM_BUDGET_BITS,
        });
    }
    Ok(sites)
}

struct EnumAccum {
    flat: Array1<f64>,
    input_grad: Array1<f64>,
    leaves: u64,
}

/// Exact `E[L]` for one example.
pub fn expected_loss_enum(net: &NetworkSpec, input: ArrayView1<f64>, target: &Target) -> Result<f64> {
    check_budget(net)?;
    let mut acc = EnumAccum {
        flat: Array1::zeros(net.layout().total),
        input_grad: Array1::zeros(input.len()),
        leaves: 0,
    };
    let x = input.insert_axis(ndarray::Axis(0)).to_owned();
    let mut records = Vec::new();
    walk(net, target, 0, x, 1.0, &mut records, &mut acc, false)
}

/// Exact gradient of `E[L]` in every trainable parameter, for one example.
pub fn exact_gradient_enum(
    net: &NetworkSpec,
    input: ArrayView1<f64>,
    target: &Target,
) -> Result<GradEstimate> {
    let (est, _) = exact_gradient_enum_with_input(net, input, target)?;
    Ok(est)
}

/// Exact gradient plus the gradient of `E[L]` at the network input.
pub fn exact_gradient_enum_with_input(
    net: &NetworkSpec,
    input: ArrayView1<f64>,
    target: &Target,
) -> Result<(GradEstimate, Array1<f64>)> {
    check_budget(net)?;
    let t0 = Instant::now();
    let mut acc = EnumAccum {
        flat: Array1::zeros(net.layout().total),
        input_grad: Array1::zeros(input.len()),
        leaves: 0,
    };
    let x = input.insert_axis(ndarray::Axis(0)).to_owned();
    let mut records = Vec::new();
    walk(net, target, 0, x, 1.0, &mut records, &mut acc, true)?;
    let est = GradEstimate::checked(acc.flat, EstimatorKind::ExactEnum, 0, acc.leaves, t0)?;
    Ok((est, acc.input_grad))
}

/// Mean of per-example exact gradients over a batch. Documents are
/// independent, so they are enumerated in parallel and reduced in index
/// order, keeping the result bit-deterministic.
pub fn exact_gradient_enum_batch(
    net: &NetworkSpec,
    inputs: ArrayView2<f64>,
    targets: &[Target],
) -> Result<GradEstimate> {
    use rayon::prelude::*;
    let t0 = Instant::now();
    let rows: Vec<_> = inputs.rows().into_iter().collect();
    let per_doc: Vec<Result<GradEstimate>> = rows
        .par_iter()
        .enumerate()
        .map(|(b, row)| {
            let t = if targets.is_empty() { &Target::None } else { &targets[b] };
            exact_gradient_enum(net, *row, t)
        })
        .collect();
    let mut flat = Array1::zeros(net.layout().total);
    let mut evals = 0u64;
    for est in per_doc {
        let est = est?;
        flat += &est.grad;
        evals += est.loss_evaluations;
    }
    flat /= inputs.nrows() as f64;
    GradEstimate::checked(flat, EstimatorKind::ExactEnum, 0, evals, t0)
}

/// Recursive sweep. `records` holds the forward records of layers `0..idx`
/// for the current prefix configuration; parameter gradients for the block
/// feeding each stochastic layer are seeded with the conditional expectation
/// of the loss over everything sampled above it. Returns the conditional
/// expected loss given the prefix.
#[allow(clippy::too_many_arguments)]
fn walk(
    net: &NetworkSpec,
    target: &Target,
    idx: usize,
    x: Array2<f64>,
    prefix_prob: f64,
    records: &mut Vec<LayerRecord>,
    acc: &mut EnumAccum,
    with_grad: bool,
) -> Result<f64> {
    if idx == net.layers().len() {
        acc.leaves += 1;
        let row = x.row(0);
        let l = net.loss().eval(row, target)?;
        if with_grad && prefix_prob != 0.0 {
            let g = net.loss().grad(row, target)?;
            let seed = g.insert_axis(ndarray::Axis(0)) * prefix_prob;
            seed_chain(net, records, idx, seed, acc)?;
        }
        return Ok(l);
    }
    match &net.layers()[idx] {
        Layer::SignActivation { noise, encoding } => {
            let pre = x;
            let width = pre.ncols();
            let probs = pre.mapv(|a| noise.cdf_raw(a));
            let mut total = 0.0;
            let mut accum_v: Array1<f64> = Array1::zeros(width);
            let mut site_p = vec![0.0; width];
            for mask in 0..(1usize << width) {
                // track impossible states separately: a config of probability
                // zero still contributes dP/da terms through its one (and
                // only one) vanishing factor
                let mut zeros = 0usize;
                let mut zero_at = usize::MAX;
                let mut prod_nz = 1.0;
                let mut states = Array2::zeros(pre.raw_dim());
                for i in 0..width {
                    let up = (mask >> i) & 1 == 1;
                    let p = if up { probs[(0, i)] } else { 1.0 - probs[(0, i)] };
                    site_p[i] = p;
                    if p == 0.0 {
                        zeros += 1;
                        zero_at = i;
                    } else {
                        prod_nz *= p;
                    }
                    states[(0, i)] = encoding.state(up);
                }
                let pk = if zeros == 0 { prod_nz } else { 0.0 };
                if !(zeros == 0 || (with_grad && zeros == 1)) {
                    continue;
                }
                records.push(LayerRecord::Sign {
                    pre: pre.clone(),
                    states: states.clone(),
                    probs: probs.clone(),
                    noise: None,
                });
                let sub = walk(net, target, idx + 1, states, prefix_prob * pk, records, acc, with_grad)?;
                records.pop();
                total += pk * sub;
                if with_grad {
                    for i in 0..width {
                        let excl = if zeros == 0 {
                            pk / site_p[i]
                        } else if i == zero_at {
                            prod_nz
                        } else {
                            continue;
                        };
                        let sgn = if (mask >> i) & 1 == 1 { 1.0 } else { -1.0 };
                        accum_v[i] += sub * excl * sgn * noise.pdf_raw(pre[(0, i)]);
                    }
                }
            }
            if with_grad && prefix_prob != 0.0 {
                let seed = accum_v.insert_axis(ndarray::Axis(0)) * prefix_prob;
                seed_chain(net, records, idx, seed, acc)?;
            }
            Ok(total)
        }
        Layer::BinaryLinear { logits, noise } => {
            let input_x = x;
            let (rows, cols) = (logits.nrows(), logits.ncols());
            let m = rows * cols;
            let probs = logits.mapv(|e| noise.cdf_raw(e));
            let offsets = layer_offset_table(net);
            let mut total = 0.0;
            let mut accum: Array1<f64> = Array1::zeros(m);
            let mut site_p = vec![0.0; m];
            for mask in 0..(1usize << m) {
                let mut zeros = 0usize;
                let mut zero_at = usize::MAX;
                let mut prod_nz = 1.0;
                let mut w = Array2::zeros((rows, cols));
                for k in 0..m {
                    let up = (mask >> k) & 1 == 1;
                    let (r, c) = (k / cols, k % cols);
                    let p = if up { probs[(r, c)] } else { 1.0 - probs[(r, c)] };
                    site_p[k] = p;
                    if p == 0.0 {
                        zeros += 1;
                        zero_at = k;
                    } else {
                        prod_nz *= p;
                    }
                    w[(r, c)] = if up { 1.0 } else { -1.0 };
                }
                let pk = if zeros == 0 { prod_nz } else { 0.0 };
                if !(zeros == 0 || (with_grad && zeros == 1)) {
                    continue;
                }
                let y = input_x.dot(&w.t());
                records.push(LayerRecord::BinaryLinear {
                    input: input_x.clone(),
                    weights: w.clone(),
                    probs: probs.clone(),
                });
                let sub = walk(net, target, idx + 1, y, prefix_prob * pk, records, acc, with_grad)?;
                records.pop();
                total += pk * sub;
                if with_grad {
                    for k in 0..m {
                        let excl = if zeros == 0 {
                            pk / site_p[k]
                        } else if k == zero_at {
                            prod_nz
                        } else {
                            continue;
                        };
                        let (r, c) = (k / cols, k % cols);
                        let sgn = if (mask >> k) & 1 == 1 { 1.0 } else { -1.0 };
                        accum[k] += sub * excl * sgn * noise.pdf_raw(logits[(r, c)]);
                    }
                }
            }
            if with_grad && prefix_prob != 0.0 {
                for k in 0..m {
                    acc.flat[offsets[idx] + k] += prefix_prob * accum[k];
                }
            }
            Ok(total)
        }
        layer => {
            let (out, rec) = deterministic_forward(layer, &x, false)?;
            records.push(rec);
            let r = walk(net, target, idx + 1, out, prefix_prob, records, acc, with_grad)?;
            records.pop();
            Ok(r)
        }
    }
}

/// Chain a weighted seed vector down from layer `idx` (exclusive), stopping at
/// sign layers, accumulating parameter and input gradients.
fn seed_chain(
    net: &NetworkSpec,
    records: &[LayerRecord],
    idx: usize,
    seed: Array2<f64>,
    acc: &mut EnumAccum,
) -> Result<()> {
    let cfg = ChainCfg { bridge: SignBridge::Stop, weights: WeightsMode::PassThrough };
    if let Some(g) = chain_down(net, &records[..idx], idx, seed, &cfg, &mut acc.flat)?.reached() {
        for (i, v) in g.row(0).iter().enumerate() {
            acc.input_grad[i] += v;
        }
    }
    Ok(())
}

/// Exact expectation over configurations of a one-sample estimator, for bias
/// measurement. Gumbel variants are excluded (their expectation needs noise
/// integration, not state enumeration).
pub fn expected_estimator_enum(
    kind: &EstimatorKind,
    net: &NetworkSpec,
    input: ArrayView1<f64>,
    target: &Target,
) -> Result<GradEstimate> {
    let (est, _) = expected_estimator_enum_with_input(kind, net, input, target)?;
    Ok(est)
}

/// Expected estimator and expected input gradient by enumeration.
pub fn expected_estimator_enum_with_input(
    kind: &EstimatorKind,
    net: &NetworkSpec,
    input: ArrayView1<f64>,
    target: &Target,
) -> Result<(GradEstimate, Array1<f64>)> {
    kind.validate()?;
    let t0 = Instant::now();
    let sites = check_budget(net)?;
    let input2 = input.insert_axis(ndarray::Axis(0)).to_owned();
    let targets = std::slice::from_ref(target);
    match kind {
        EstimatorKind::ExactEnum => {
            let (est, ig) = exact_gradient_enum_with_input(net, input, target)?;
            return Ok((est, ig));
        }
        EstimatorKind::DetSt => {
            let tape = net.forward_det(input2.view(), targets)?;
            let (flat, ig) =
                super::st_family_backward(net, &tape, targets, &SignBridge::CdfSlope)?;
            let est = GradEstimate::checked(flat, kind.clone(), 0, 1, t0)?;
            return Ok((est, ig.row(0).to_owned()));
        }
        EstimatorKind::GumbelSoftmax { .. } | EstimatorKind::StGumbelSoftmax { .. } => {
            return Err(Error::UnsupportedEstimator(kind.name()));
        }
        _ => {}
    }
    let total_bits: usize = sites.iter().map(|(_, b)| b).sum();
    let mut flat = Array1::zeros(net.layout().total);
    let mut input_grad = Array1::zeros(input.len());
    let mut evals = 0u64;
    let lambda_arr = match kind {
        EstimatorKind::RescaledSt { lambda } => Some(if lambda.len() == 1 {
            let width = sites
                .iter()
                .find(|(i, _)| matches!(net.layers()[*i], Layer::SignActivation { .. }))
                .map(|(_, b)| *b)
                .ok_or_else(|| Error::UnsupportedEstimator(kind.name()))?;
            Array1::from_elem(width, lambda[0])
        } else {
            Array1::from_vec(lambda.clone())
        }),
        _ => None,
    };
    for mask in 0..(1usize << total_bits) {
        let mut forced = Vec::with_capacity(sites.len());
        let mut shift = 0usize;
        for (layer_idx, bits) in &sites {
            let sub = (mask >> shift) & ((1usize << bits) - 1);
            shift += bits;
            match &net.layers()[*layer_idx] {
                Layer::SignActivation { encoding, .. } => {
                    let mut states = Array2::zeros((1, *bits));
                    for i in 0..*bits {
                        states[(0, i)] = encoding.state((sub >> i) & 1 == 1);
                    }
                    forced.push(ForcedLayer::States(states));
                }
                Layer::BinaryLinear { logits, .. } => {
                    let cols = logits.ncols();
                    let mut w = Array2::zeros(logits.raw_dim());
                    for k in 0..*bits {
                        w[(k / cols, k % cols)] = if (sub >> k) & 1 == 1 { 1.0 } else { -1.0 };
                    }
                    forced.push(ForcedLayer::Weights(w));
                }
                _ => unreachable!(),
            }
        }
        let tape = net.forward_forced(input2.view(), targets, &forced)?;
        let prob = config_probability(&tape);
        if prob == 0.0 {
            continue;
        }
        let (g, ig, used) = match kind {
            EstimatorKind::St => {
                let (f, ig) = super::st_family_backward(net, &tape, targets, &SignBridge::CdfSlope)?;
                (f, ig, 1)
            }
            EstimatorKind::IdentitySt => {
                let (f, ig) = super::st_family_backward(net, &tape, targets, &SignBridge::Identity)?;
                (f, ig, 1)
            }
            EstimatorKind::RescaledSt { .. } => {
                let lam = lambda_arr.as_ref().expect("prepared above");
                let (f, ig) =
                    super::st_family_backward(net, &tape, targets, &SignBridge::Rescaled(lam))?;
                (f, ig, 1)
            }
            EstimatorKind::LocalExpectations | EstimatorKind::LocalExpectationsAvg { .. } => {
                let (f, ig, used) = local::local_expectations_from_tape(net, &tape, targets)?;
                (f, ig, used)
            }
            _ => unreachable!(),
        };
        evals += used;
        flat.scaled_add(prob, &g);
        for (i, v) in ig.row(0).iter().enumerate() {
            input_grad[i] += prob * v;
        }
    }
    let est = GradEstimate::checked(flat, kind.clone(), 0, evals, t0)?;
    Ok((est, input_grad))
}

/// Product of the per-site probabilities of the recorded configuration.
pub(crate) fn config_probability(tape: &crate::sbn::ForwardTape) -> f64 {
    let mut p = 1.0;
    for rec in &tape.records {
        match rec {
            LayerRecord::Sign { states, probs, .. } => {
                for (s, q) in states.iter().zip(probs.iter()) {
                    p *= if *s > 0.5 { *q } else { 1.0 - q };
                }
            }
            LayerRecord::BinaryLinear { weights, probs, .. } => {
                for (w, q) in weights.iter().zip(probs.iter()) {
                    p *= if *w > 0.0 { *q } else { 1.0 - q };
                }
            }
            _ => {}
        }
    }
    p
}

/// Exact gradient of `E[L]` in the weight probabilities `theta` for a model
/// whose only stochastic layer is a binary-weight linear. The entries are laid
/// out row-major like the logits.
pub fn theta_gradient_enum(
    net: &NetworkSpec,
    input: ArrayView1<f64>,
    target: &Target,
) -> Result<Array1<f64>> {
    let sites = check_budget(net)?;
    if sites.len() != 1 {
        return Err(Error::SingleLayerRequired);
    }
    let (layer_idx, bits) = sites[0];
    let (logits, noise) = match &net.layers()[layer_idx] {
        Layer::BinaryLinear { logits, noise } => (logits, noise),
        _ => return Err(Error::UnsupportedEstimator("theta gradient needs binary weights".into())),
    };
    let cols = logits.ncols();
    let probs = logits.mapv(|e| noise.cdf_raw(e));
    let input2 = input.insert_axis(ndarray::Axis(0)).to_owned();
    let targets = std::slice::from_ref(target);
    let mut grad = Array1::zeros(bits);
    let mut site_p = vec![0.0; bits];
    for mask in 0..(1usize << bits) {
        let mut w = Array2::zeros(logits.raw_dim());
        let mut zeros = 0usize;
        let mut zero_at = usize::MAX;
        let mut prod_nz = 1.0;
        for k in 0..bits {
            let up = (mask >> k) & 1 == 1;
            let (r, c) = (k / cols, k % cols);
            let p = if up { probs[(r, c)] } else { 1.0 - probs[(r, c)] };
            site_p[k] = p;
            if p == 0.0 {
                zeros += 1;
                zero_at = k;
            } else {
                prod_nz *= p;
            }
            w[(r, c)] = if up { 1.0 } else { -1.0 };
        }
        if zeros > 1 {
            continue;
        }
        let pk = if zeros == 0 { prod_nz } else { 0.0 };
        let tape = net.forward_forced(input2.view(), targets, &[ForcedLayer::Weights(w.clone())])?;
        let l = tape.loss.ok_or(Error::InvalidParam("loss needs targets".into()))?;
        for k in 0..bits {
            // d P(w_k) / d theta_k = w_k, so the term carries the product of
            // the other sites' probabilities
            let excl = if zeros == 0 {
                pk / site_p[k]
            } else if k == zero_at {
                prod_nz
            } else {
                continue;
            };
            let (r, c) = (k / cols, k % cols);
            grad[k] += excl * w[(r, c)] * l;
        }
    }
    Ok(grad)
}
