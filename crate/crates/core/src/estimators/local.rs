//! Local expectations: the unbiased single-flip estimator.
//!
//! One sample `x` is drawn, then for each stochastic site the exact loss
//! difference under a single-bit flip multiplies the probability derivative:
//! `sum_i dp(x_i)/dphi * (L(x) - L(x_flip_i))`. Costs `n + 1` loss evaluations
//! per example; unbiased for any loss.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::Error;
use crate::sbn::{deterministic_forward, Layer, LayerRecord, NetworkSpec, Target};
use crate::stream::RandomStream;
use crate::Result;

use super::backward::{chain_down, layer_offset_table, output_loss_grad, ChainCfg, SignBridge, WeightsMode};
use super::{EstimatorKind, GradEstimate};

/// One draw of the local-expectations estimator.
pub fn local_expectations(
    net: &NetworkSpec,
    input: ArrayView2<f64>,
    targets: &[Target],
    rng: &mut RandomStream,
) -> Result<GradEstimate> {
    let t0 = Instant::now();
    let seed = rng.seed();
    let tape = net.forward_sample(input, targets, rng, false)?;
    let (flat, _, evals) = local_expectations_from_tape(net, &tape, targets)?;
    GradEstimate::checked(flat, EstimatorKind::LocalExpectations, seed, evals, t0)
}

/// Mean of `k` independent local-expectations draws; variance scales as 1/k.
pub fn local_expectations_avg(
    net: &NetworkSpec,
    input: ArrayView2<f64>,
    targets: &[Target],
    rng: &mut RandomStream,
    k: usize,
) -> Result<GradEstimate> {
    if k < 1 {
        return Err(Error::InvalidParam("averaging count must be >= 1".into()));
    }
    let t0 = Instant::now();
    let seed = rng.seed();
    let mut flat = Array1::zeros(net.layout().total);
    let mut evals = 0u64;
    for t in 0..k {
        let mut sub = rng.child(&[t as u64]);
        let tape = net.forward_sample(input, targets, &mut sub, false)?;
        let (g, _, used) = local_expectations_from_tape(net, &tape, targets)?;
        flat += &g;
        evals += used;
    }
    flat /= k as f64;
    GradEstimate::checked(flat, EstimatorKind::LocalExpectationsAvg { k }, seed, evals, t0)
}

/// The estimator as a deterministic function of a recorded sample. Returns the
/// flat gradient, the input gradient, and the number of loss evaluations.
pub(crate) fn local_expectations_from_tape(
    net: &NetworkSpec,
    tape: &crate::sbn::ForwardTape,
    targets: &[Target],
) -> Result<(Array1<f64>, Array2<f64>, u64)> {
    let sites = net.stochastic_layers();
    if sites.len() != 1 {
        return Err(Error::SingleLayerRequired);
    }
    let (site_idx, _) = sites[0];
    let batch = tape.input.nrows();
    let mut flat = Array1::zeros(net.layout().total);
    let mut input_grad = Array2::zeros((batch, net.input_dim()));
    let mut evals = 0u64;
    let offsets = layer_offset_table(net);
    let cfg = ChainCfg { bridge: SignBridge::Stop, weights: WeightsMode::PassThrough };

    // analytic gradient for everything above the stochastic site
    let g0 = output_loss_grad(net, &tape.output, targets)?;
    if let Some(g) =
        chain_down(net, &tape.records, net.layers().len(), g0, &cfg, &mut flat)?.reached()
    {
        input_grad += &g;
    }

    match (&net.layers()[site_idx], &tape.records[site_idx]) {
        (Layer::SignActivation { noise, encoding }, LayerRecord::Sign { pre, states, .. }) => {
            let width = pre.ncols();
            let mut v = Array2::zeros((batch, width));
            for b in 0..batch {
                let t = if targets.is_empty() { &Target::None } else { &targets[b] };
                let row = states.row(b).to_owned();
                let base = suffix_loss(net, site_idx + 1, row.view(), t)?;
                evals += 1;
                for i in 0..width {
                    let flip = encoding.flip(row[i]);
                    let flipped = flipped_suffix_loss(net, site_idx + 1, row.view(), t, i, flip)?;
                    evals += 1;
                    // dp(x_i)/da_i = sign(x_i) F'(a_i) in both encodings
                    let sgn = encoding.sign_of(row[i]);
                    v[(b, i)] = sgn * noise.pdf_raw(pre[(b, i)]) * (base - flipped);
                }
            }
            v /= batch as f64;
            if let Some(g) = chain_down(net, &tape.records, site_idx, v, &cfg, &mut flat)?.reached() {
                input_grad += &g;
            }
        }
        (
            Layer::BinaryLinear { logits, noise },
            LayerRecord::BinaryLinear { input, weights, .. },
        ) => {
            let cols = logits.ncols();
            let base_total: f64 = {
                let mut s = 0.0;
                for b in 0..batch {
                    let t = if targets.is_empty() { &Target::None } else { &targets[b] };
                    let y = input.row(b).dot(&weights.t());
                    s += suffix_loss(net, site_idx + 1, y.view(), t)?;
                    evals += 1;
                }
                s / batch as f64
            };
            for k in 0..logits.len() {
                let (r, c) = (k / cols, k % cols);
                let mut wf = weights.clone();
                wf[(r, c)] = -wf[(r, c)];
                let mut s = 0.0;
                for b in 0..batch {
                    let t = if targets.is_empty() { &Target::None } else { &targets[b] };
                    let y = input.row(b).dot(&wf.t());
                    s += suffix_loss(net, site_idx + 1, y.view(), t)?;
                    evals += 1;
                }
                let flipped_total = s / batch as f64;
                let w = weights[(r, c)];
                flat[offsets[site_idx] + k] +=
                    w * noise.pdf_raw(logits[(r, c)]) * (base_total - flipped_total);
            }
        }
        _ => unreachable!("site index points at a stochastic layer"),
    }
    Ok((flat, input_grad, evals))
}

/// Run the layers above the stochastic site on one row and evaluate the loss.
fn suffix_loss(net: &NetworkSpec, from: usize, row: ArrayView1<f64>, target: &Target) -> Result<f64> {
    let mut x = row.insert_axis(ndarray::Axis(0)).to_owned();
    for layer in &net.layers()[from..] {
        let (out, _) = deterministic_forward(layer, &x, false)?;
        x = out;
    }
    net.loss().eval(x.row(0), target)
}

/// Loss after flipping one coordinate, using the rank-1 update when the
/// stochastic layer feeds the loss directly.
fn flipped_suffix_loss(
    net: &NetworkSpec,
    from: usize,
    row: ArrayView1<f64>,
    target: &Target,
    i: usize,
    flip: f64,
) -> Result<f64> {
    if from == net.layers().len() {
        let base = net.loss().eval(row, target)?;
        if let Some(v) = net.loss().flipped_eval(row, target, base, i, flip) {
            return Ok(v);
        }
    }
    let mut flipped = row.to_owned();
    flipped[i] = flip;
    suffix_loss(net, from, flipped.view(), target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::enumeration::{exact_gradient_enum_with_input, expected_estimator_enum_with_input};
    use crate::noise::{NoiseKind, NoiseModel};
    use crate::sbn::{Encoding, LossFn, NetworkSpec};
    use ndarray::{array, Array2};

    fn sign_net(n: usize, loss: LossFn) -> NetworkSpec {
        NetworkSpec::new(
            vec![Layer::SignActivation {
                noise: NoiseModel::normalized(NoiseKind::Logistic),
                encoding: Encoding::PmOne,
            }],
            loss,
            n,
        )
        .unwrap()
    }

    #[test]
    fn linear_loss_matches_st_exactly() {
        // finite difference equals linearisation for linear losses
        let c = array![0.7, -1.2, 0.4];
        let terms = vec![(vec![0], c[0]), (vec![1], c[1]), (vec![2], c[2])];
        let net = sign_net(3, LossFn::polynomial(terms).unwrap());
        let input = array![[0.2, -0.5, 1.1]];
        let mut rng = RandomStream::new(9);
        let tape = net.forward_sample(input.view(), &[], &mut rng, false).unwrap();
        let (_, ig, evals) = local_expectations_from_tape(&net, &tape, &[]).unwrap();
        let st = super::super::st_input_gradient(&net, &tape, &[], &SignBridge::CdfSlope).unwrap();
        assert_eq!(evals, 4);
        for i in 0..3 {
            assert!((ig[(0, i)] - st[(0, i)]).abs() < 1e-12);
        }
    }

    #[test]
    fn squared_loss_estimate_is_identically_zero() {
        // flip difference of x^2 vanishes on +-1, matching the true gradient
        let net = sign_net(1, LossFn::quadratic(array![[1.0]], array![0.0]).unwrap());
        let mut rng = RandomStream::new(2);
        for a in [-1.0, 0.0, 2.0] {
            let tape = net
                .forward_sample(array![[a]].view(), &[], &mut rng, false)
                .unwrap();
            let (_, ig, _) = local_expectations_from_tape(&net, &tape, &[]).unwrap();
            assert_eq!(ig[(0, 0)], 0.0);
        }
    }

    #[test]
    fn expectation_matches_exact_gradient() {
        let mut rng = RandomStream::new(14);
        let n = 8;
        let mut terms = vec![(vec![], rng.uniform(-1.0, 1.0))];
        for i in 0..n {
            terms.push((vec![i], rng.uniform(-1.0, 1.0)));
        }
        terms.push((vec![0, 3], 0.8));
        terms.push((vec![2, 5, 7], -0.6));
        let net = sign_net(n, LossFn::polynomial(terms).unwrap());
        let input = ndarray::Array1::from_shape_fn(n, |_| rng.uniform(-1.0, 1.0));
        let (_, exact) = exact_gradient_enum_with_input(&net, input.view(), &Target::None).unwrap();
        let (_, le) = expected_estimator_enum_with_input(
            &EstimatorKind::LocalExpectations,
            &net,
            input.view(),
            &Target::None,
        )
        .unwrap();
        for i in 0..n {
            assert!((le[i] - exact[i]).abs() < 1e-10, "i={i}: {} vs {}", le[i], exact[i]);
        }
    }

    #[test]
    fn averaging_reduces_variance_and_k1_matches_single() {
        // encoder layer gives the estimate a non-empty parameter gradient
        let mut init_rng = RandomStream::new(55);
        let net = crate::sbn::init_network(
            &[
                crate::sbn::LayerSkeleton::RealLinear { inp: 4, out: 4 },
                crate::sbn::LayerSkeleton::SignActivation {
                    noise: NoiseModel::normalized(NoiseKind::Logistic),
                    encoding: Encoding::PmOne,
                },
            ],
            LossFn::quadratic(
                array![
                    [1.0, 0.2, -0.3, 0.0],
                    [0.0, 1.0, 0.5, -0.2],
                    [0.3, 0.0, 1.0, 0.4],
                    [-0.1, 0.6, 0.0, 1.0]
                ],
                array![0.5, -0.5, 0.2, 0.0],
            )
            .unwrap(),
            4,
            &mut init_rng,
        )
        .unwrap();
        let input = array![[0.4, -0.3, 0.8, -1.0]];
        // k = 1 equals one draw from the same child stream
        let root = RandomStream::new(123);
        let avg = local_expectations_avg(&net, input.view(), &[], &mut root.clone(), 1).unwrap();
        let single =
            local_expectations(&net, input.view(), &[], &mut root.child(&[0])).unwrap();
        assert_eq!(avg.grad, single.grad);
        // variance at k=10 is about a tenth of k=1
        let reps = 600;
        let dim = net.layout().total;
        let var_of = |k: usize, tag: u64| -> f64 {
            let mut sum = ndarray::Array1::<f64>::zeros(dim);
            let mut sumsq = ndarray::Array1::<f64>::zeros(dim);
            for r in 0..reps {
                let mut s = RandomStream::new(777).child(&[tag, r as u64]);
                let g = local_expectations_avg(&net, input.view(), &[], &mut s, k)
                    .unwrap()
                    .grad;
                sum += &g;
                sumsq += &g.mapv(|v| v * v);
            }
            let mean = sum / reps as f64;
            (sumsq / reps as f64 - mean.mapv(|v| v * v)).sum()
        };
        let v1 = var_of(1, 0);
        let v10 = var_of(10, 1);
        let ratio = v1 / v10;
        assert!(ratio > 5.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn multi_layer_models_are_rejected() {
        let net = NetworkSpec::new(
            vec![
                Layer::SignActivation {
                    noise: NoiseModel::normalized(NoiseKind::Logistic),
                    encoding: Encoding::PmOne,
                },
                Layer::SignActivation {
                    noise: NoiseModel::normalized(NoiseKind::Logistic),
                    encoding: Encoding::PmOne,
                },
            ],
            LossFn::quadratic(Array2::eye(2), array![0.0, 0.0]).unwrap(),
            2,
        )
        .unwrap();
        let mut rng = RandomStream::new(1);
        let err = local_expectations(&net, array![[0.1, 0.2]].view(), &[], &mut rng).unwrap_err();
        assert!(matches!(err, Error::SingleLayerRequired));
        assert_eq!(err.to_string(), "local expectations requires single layer");
    }
}
