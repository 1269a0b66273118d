//! Gumbel-Softmax relaxation for binary units, its straight-through variant,
//! and closed-form/quadrature analysis quantities.
//!
//! In the binary case the Gumbel-max construction reduces to a logistic noise
//! `z`: the hard sample is `x = [eta - z >= 0]` and the relaxed sample is
//! `y = sigma((eta - z)/tau)`. The expected relaxed gradient has the integral
//! form `int_0^1 L'(v) p_Z(eta - tau logit v) dv`.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::Error;
use crate::sbn::{Layer, LayerRecord, LossFn, NetworkSpec, Target};
use crate::stream::RandomStream;
use crate::Result;

use super::backward::{chain_down, output_loss_grad, ChainCfg, SignBridge, WeightsMode};
use super::{EstimatorKind, GradEstimate};

/// Standard logistic density, computed through `exp(-|z|)` so tails underflow
/// gracefully.
#[inline]
pub fn logistic_density(z: f64) -> f64 {
    let t = (-z.abs()).exp();
    t / ((1.0 + t) * (1.0 + t))
}

/// Standard logistic cdf.
#[inline]
fn logistic_cdf(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn logit(v: f64) -> f64 {
    v.ln() - (-v).ln_1p()
}

/// `sigma((eta - z)/tau)` and its slope `y(1-y)/tau`, saturating cleanly.
#[inline]
fn relaxed_unit(eta: f64, z: f64, tau: f64) -> (f64, f64) {
    let u = (eta - z) / tau;
    let y = logistic_cdf(u);
    let t = (-u.abs()).exp();
    let slope = t / ((1.0 + t) * (1.0 + t)) / tau;
    (y, slope)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParam("temperature must be positive".into()));
    }
    Ok(())
}

/// One Gumbel-Softmax draw on a bare vector of logits: samples logistic noise,
/// relaxes each unit to `y_i = sigma((eta_i - z_i)/tau)` and returns
/// `dL(y)/deta`.
pub fn gs_gradient(
    eta: ArrayView1<f64>,
    tau: f64,
    rng: &mut RandomStream,
    loss: &LossFn,
    target: &Target,
) -> Result<GradEstimate> {
    check_tau(tau)?;
    let t0 = Instant::now();
    let seed = rng.seed();
    let n = eta.len();
    let mut y = Array1::zeros(n);
    let mut slope = Array1::zeros(n);
    for i in 0..n {
        let z = rng.logistic();
        let (yi, si) = relaxed_unit(eta[i], z, tau);
        y[i] = yi;
        slope[i] = si;
    }
    let lg = loss.grad(y.view(), target)?;
    let grad = &lg * &slope;
    GradEstimate::checked(grad, EstimatorKind::GumbelSoftmax { tau }, seed, 1, t0)
}

/// Straight-through Gumbel-Softmax on a bare vector of logits: hard
/// `x_i = [eta_i - z_i >= 0]` on the forward, the relaxed slope on the
/// backward, sharing the same noise.
pub fn st_gs_gradient(
    eta: ArrayView1<f64>,
    tau: f64,
    rng: &mut RandomStream,
    loss: &LossFn,
    target: &Target,
) -> Result<GradEstimate> {
    check_tau(tau)?;
    let t0 = Instant::now();
    let seed = rng.seed();
    let n = eta.len();
    let mut x = Array1::zeros(n);
    let mut slope = Array1::zeros(n);
    for i in 0..n {
        let z = rng.logistic();
        let (_, si) = relaxed_unit(eta[i], z, tau);
        x[i] = if eta[i] - z >= 0.0 { 1.0 } else { 0.0 };
        slope[i] = si;
    }
    let lg = loss.grad(x.view(), target)?;
    let grad = &lg * &slope;
    GradEstimate::checked(grad, EstimatorKind::StGumbelSoftmax { tau }, seed, 1, t0)
}

/// Adaptive Simpson quadrature with an absolute tolerance.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::QuadratureNonConvergence);
        }
        let l = recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?;
        let r = recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?;
        Ok(l + r)
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 52)
}

const QUAD_TOL: f64 = 1e-10;

/// Integration bound in `u = logit(v)` space; tails beyond it carry less than
/// `sigma'(40) ~ 4e-18` of mass.
const U_CUT: f64 = 40.0;

#[inline]
fn sigma_prime(u: f64) -> f64 {
    logistic_density(u)
}

/// Expected Gumbel-Softmax gradient for one unit by adaptive quadrature. The
/// `v`-integral `int_0^1 L'(v) p_Z(eta - tau logit v) dv` is evaluated after
/// the substitution `u = logit(v)`, which removes the endpoint singularities:
/// `int L'(sigma(u)) p_Z(eta - tau u) sigma'(u) du`. At `tau = 0` the exact
/// limit `p_Z(eta) (L(1) - L(0))` is returned.
pub fn gs_expected_quadrature(lp: &dyn Fn(f64) -> f64, eta: f64, tau: f64) -> Result<f64> {
    if tau < 0.0 {
        return Err(Error::InvalidParam("temperature must be non-negative".into()));
    }
    if tau == 0.0 {
        let total = adaptive_simpson(&|u: f64| lp(logistic_cdf(u)) * sigma_prime(u), -U_CUT, U_CUT, QUAD_TOL)?;
        return Ok(logistic_density(eta) * total);
    }
    let f = |u: f64| lp(logistic_cdf(u)) * logistic_density(eta - tau * u) * sigma_prime(u);
    adaptive_simpson(&f, -U_CUT, U_CUT, QUAD_TOL)
}

/// Second moment of the Gumbel-Softmax gradient for one unit:
/// `(1/tau) int_0^1 L'(v)^2 v (1-v) p_Z(eta - tau logit v) dv`, evaluated in
/// `u = logit(v)` space where `v(1-v) = sigma'(u)`.
pub fn gs_second_moment_quadrature(lp: &dyn Fn(f64) -> f64, eta: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let f = |u: f64| {
        let l = lp(logistic_cdf(u));
        let sp = sigma_prime(u);
        l * l * sp * sp * logistic_density(eta - tau * u)
    };
    Ok(adaptive_simpson(&f, -U_CUT, U_CUT, QUAD_TOL)? / tau)
}

/// Expected straight-through Gumbel-Softmax gradient for one unit by
/// quadrature: the hard state is 1 on `z < eta` (u > 0) and 0 otherwise, so
/// the loss derivative is evaluated at the hard state in each region:
/// `L'(1) int_{1/2}^1 p_Z(eta - tau logit v) dv + L'(0) int_0^{1/2} ...`.
pub fn st_gs_expected_quadrature(lp0: f64, lp1: f64, eta: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let f = |u: f64| logistic_density(eta - tau * u) * sigma_prime(u);
    let hi = adaptive_simpson(&f, 0.0, U_CUT, QUAD_TOL)?;
    let lo = adaptive_simpson(&f, -U_CUT, 0.0, QUAD_TOL)?;
    Ok(lp1 * hi + lp0 * lo)
}

/// Exact one-unit gradient `d/d eta E[L(x)]` for `x = [eta - z >= 0]`,
/// given the two loss values.
pub fn exact_unit_gradient(l0: f64, l1: f64, eta: f64) -> f64 {
    (l1 - l0) * logistic_density(eta)
}

/// Closed-form probability that the pre-1/tau relaxation slope `y(1-y)`
/// reaches at least `eps`: the event is `z` in `eta +- tau |logit s*|` with
/// `s* = (1 - sqrt(1-4 eps))/2`.
pub fn gs_threshold_probability(eta: f64, tau: f64, eps: f64) -> Result<f64> {
    check_tau(tau)?;
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::InvalidParam(
            "threshold must lie in (0, 1/4): y(1-y) never exceeds 1/4".into(),
        ));
    }
    let s_star = 0.5 * (1.0 - (1.0 - 4.0 * eps).sqrt());
    let c = logit(s_star).abs();
    Ok(logistic_cdf(eta + tau * c) - logistic_cdf(eta - tau * c))
}

/// Network-level Gumbel-Softmax gradient for models with exactly one sign
/// layer. The unit logit is `eta = logit(F(a))`, the relaxation is
/// `y = sigma((eta - z)/tau)` mapped onto the layer's encoding, and the
/// backward chains `dL/dy * y(1-y)/tau * deta/da` through the encoder.
/// With `hard` set, the forward uses the hard sample (straight-through
/// Gumbel-Softmax) while the backward keeps the relaxed slope.
pub fn gs_network_gradient(
    net: &NetworkSpec,
    input: ArrayView2<f64>,
    targets: &[Target],
    tau: f64,
    rng: &mut RandomStream,
    hard: bool,
) -> Result<GradEstimate> {
    check_tau(tau)?;
    let t0 = Instant::now();
    let seed = rng.seed();
    let sites = net.stochastic_layers();
    if sites.len() != 1 {
        return Err(Error::SingleLayerRequired);
    }
    let (site_idx, width) = sites[0];
    let (noise, encoding) = match &net.layers()[site_idx] {
        Layer::SignActivation { noise, encoding } => (noise, *encoding),
        _ => {
            return Err(Error::UnsupportedEstimator(
                "gumbel relaxation needs a sign activation".into(),
            ))
        }
    };
    let batch = input.nrows();

    // encoder forward, recording deterministic layers
    let mut records: Vec<LayerRecord> = Vec::with_capacity(net.layers().len());
    let mut x = input.to_owned();
    for layer in &net.layers()[..site_idx] {
        let (out, rec) = crate::sbn::deterministic_forward(layer, &x, true)?;
        records.push(rec);
        x = out;
    }
    let pre = x;

    // relax each unit through its Bernoulli logit
    let mut latent = Array2::zeros((batch, width));
    let mut slope = Array2::zeros((batch, width)); // dy/deta = y(1-y)/tau
    let mut deta_da = Array2::zeros((batch, width));
    for b in 0..batch {
        for i in 0..width {
            let a = pre[(b, i)];
            let p = noise.cdf_raw(a);
            let eta = if p <= 0.0 {
                f64::NEG_INFINITY
            } else if p >= 1.0 {
                f64::INFINITY
            } else {
                logit(p)
            };
            let z = rng.logistic();
            let (y, s) = relaxed_unit(eta, z, tau);
            let value = if hard {
                let bit = eta - z >= 0.0;
                encoding.state(bit)
            } else {
                match encoding {
                    crate::sbn::Encoding::ZeroOne => y,
                    crate::sbn::Encoding::PmOne => 2.0 * y - 1.0,
                }
            };
            latent[(b, i)] = value;
            slope[(b, i)] = s;
            // deta/da = F'(a) / (F(a)(1 - F(a)))
            deta_da[(b, i)] = if p > 0.0 && p < 1.0 {
                noise.pdf_raw(a) / (p * (1.0 - p))
            } else {
                0.0
            };
        }
    }

    // decoder forward from the relaxed (or hard) latents
    let mut fwd = latent.clone();
    let mut dec_records: Vec<LayerRecord> = Vec::new();
    for layer in &net.layers()[site_idx + 1..] {
        let (out, rec) = crate::sbn::deterministic_forward(layer, &fwd, true)?;
        dec_records.push(rec);
        fwd = out;
    }
    if fwd.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteActivation { layer: net.layers().len() - 1 });
    }

    let mut flat = Array1::zeros(net.layout().total);
    let cfg = ChainCfg { bridge: SignBridge::Stop, weights: WeightsMode::PassThrough };

    // decoder backward stops at the sign record and hands back dL/dlatent
    let g0 = output_loss_grad(net, &fwd, targets)?;
    let mut all_records: Vec<LayerRecord> = records;
    all_records.push(LayerRecord::Sign {
        pre,
        states: latent,
        probs: Array2::zeros((batch, width)),
        noise: None,
    });
    all_records.extend(dec_records);
    let d_latent =
        match chain_down(net, &all_records, net.layers().len(), g0, &cfg, &mut flat)? {
            super::backward::ChainOutcome::StoppedAtSign { grad } => grad,
            super::backward::ChainOutcome::Reached(_) => {
                return Err(Error::InvalidParam("relaxed chain missed the sign layer".into()))
            }
        };

    // bridge: dL/da = dL/dlatent * (encoding span) * y(1-y)/tau * deta/da
    let enc_span = encoding.st_factor();
    let mut da = d_latent;
    for b in 0..batch {
        for i in 0..width {
            da[(b, i)] *= enc_span * slope[(b, i)] * deta_da[(b, i)];
        }
    }
    chain_down(net, &all_records[..site_idx], site_idx, da, &cfg, &mut flat)?;

    let kind = if hard {
        EstimatorKind::StGumbelSoftmax { tau }
    } else {
        EstimatorKind::GumbelSoftmax { tau }
    };
    GradEstimate::checked(flat, kind, seed, 1, t0)
}
