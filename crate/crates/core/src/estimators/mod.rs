//! Gradient estimators for stochastic binary networks.
//!
//! The derived straight-through family samples hard binary states forward and
//! substitutes a surrogate Jacobian for the sign backward; local expectations
//! and exact enumeration provide unbiased and exact references; the Gumbel
//! operations cover the relaxation-based alternatives.

pub mod ascent;
pub(crate) mod backward;
pub mod enumeration;
pub mod gumbel;
pub mod local;

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::Error;
use crate::sbn::{ForwardTape, NetworkSpec, Target};
use crate::stream::RandomStream;
use crate::Result;

pub use ascent::{ascent_condition_check, AscentReport};
pub use backward::{SignBridge, WeightsMode};
pub use enumeration::{
    exact_gradient_enum, exact_gradient_enum_batch, exact_gradient_enum_with_input,
    expected_estimator_enum, expected_estimator_enum_with_input, expected_loss_enum,
    theta_gradient_enum, ENUM_BUDGET_BITS,
};
pub use gumbel::{
    exact_unit_gradient, gs_expected_quadrature, gs_gradient, gs_network_gradient,
    gs_second_moment_quadrature, gs_threshold_probability, st_gs_expected_quadrature,
    st_gs_gradient,
};
pub use local::{local_expectations, local_expectations_avg};

/// The estimator palette selectable from configs and the CLI.
#[derive(Clone, Debug, PartialEq)]
pub enum EstimatorKind {
    St,
    DetSt,
    IdentitySt,
    RescaledSt { lambda: Vec<f64> },
    LocalExpectations,
    LocalExpectationsAvg { k: usize },
    ExactEnum,
    GumbelSoftmax { tau: f64 },
    StGumbelSoftmax { tau: f64 },
}

impl EstimatorKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorKind::RescaledSt { lambda } => {
                if lambda.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                    return Err(Error::InvalidParam(
                        "rescaling diagonal must be non-negative".into(),
                    ));
                }
            }
            EstimatorKind::LocalExpectationsAvg { k } => {
                if *k < 1 {
                    return Err(Error::InvalidParam("averaging count must be >= 1".into()));
                }
            }
            EstimatorKind::GumbelSoftmax { tau } | EstimatorKind::StGumbelSoftmax { tau } => {
                if !(*tau > 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidParam("temperature must be positive".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Config-string form, e.g. `gumbel_softmax(tau=0.5)`.
    pub fn name(&self) -> String {
        match self {
            EstimatorKind::St => "st".into(),
            EstimatorKind::DetSt => "det_st".into(),
            EstimatorKind::IdentitySt => "identity_st".into(),
            EstimatorKind::RescaledSt { lambda } => {
                if lambda.len() == 1 || lambda.windows(2).all(|w| w[0] == w[1]) {
                    format!("rescaled_st(scale={})", lambda.first().copied().unwrap_or(1.0))
                } else {
                    "rescaled_st(...)".into()
                }
            }
            EstimatorKind::LocalExpectations => "local_expectations".into(),
            EstimatorKind::LocalExpectationsAvg { k } => format!("local_expectations_avg(k={k})"),
            EstimatorKind::ExactEnum => "exact_enum".into(),
            EstimatorKind::GumbelSoftmax { tau } => format!("gumbel_softmax(tau={tau})"),
            EstimatorKind::StGumbelSoftmax { tau } => format!("st_gumbel_softmax(tau={tau})"),
        }
    }

    /// Stable small integer used when deriving per-estimator random streams.
    pub fn stream_id(&self) -> u64 {
        match self {
            EstimatorKind::St => 1,
            EstimatorKind::DetSt => 2,
            EstimatorKind::IdentitySt => 3,
            EstimatorKind::RescaledSt { .. } => 4,
            EstimatorKind::LocalExpectations => 5,
            EstimatorKind::LocalExpectationsAvg { .. } => 6,
            EstimatorKind::ExactEnum => 7,
            EstimatorKind::GumbelSoftmax { .. } => 8,
            EstimatorKind::StGumbelSoftmax { .. } => 9,
        }
    }

    /// Parse the config-string form.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, args) = match s.find('(') {
            Some(p) if s.ends_with(')') => (&s[..p], Some(&s[p + 1..s.len() - 1])),
            Some(_) => {
                return Err(Error::InvalidParam(format!("unbalanced parentheses in `{s}`")))
            }
            None => (s, None),
        };
        let one_f64 = |args: Option<&str>, key: &str| -> Result<f64> {
            let body = args
                .ok_or_else(|| Error::InvalidParam(format!("`{head}` needs `{key}=...`")))?;
            let mut found = None;
            for part in body.split(',') {
                let part = part.trim();
                if let Some(v) = part.strip_prefix(&format!("{key}=")) {
                    found = Some(v.parse::<f64>().map_err(|_| {
                        Error::InvalidParam(format!("bad number `{v}` for `{key}`"))
                    })?);
                } else if !part.is_empty() {
                    return Err(Error::InvalidParam(format!("unknown argument `{part}`")));
                }
            }
            found.ok_or_else(|| Error::InvalidParam(format!("`{head}` needs `{key}=...`")))
        };
        let kind = match head {
            "st" => EstimatorKind::St,
            "det_st" => EstimatorKind::DetSt,
            "identity_st" => EstimatorKind::IdentitySt,
            "rescaled_st" => {
                let scale = one_f64(args, "scale")?;
                EstimatorKind::RescaledSt { lambda: vec![scale] }
            }
            "local_expectations" => EstimatorKind::LocalExpectations,
            "local_expectations_avg" => {
                let k = one_f64(args, "k")?;
                if k < 1.0 || k.fract() != 0.0 {
                    return Err(Error::InvalidParam(format!("bad k={k}")));
                }
                EstimatorKind::LocalExpectationsAvg { k: k as usize }
            }
            "exact_enum" => EstimatorKind::ExactEnum,
            "gumbel_softmax" => EstimatorKind::GumbelSoftmax { tau: one_f64(args, "tau")? },
            "st_gumbel_softmax" => EstimatorKind::StGumbelSoftmax { tau: one_f64(args, "tau")? },
            other => return Err(Error::InvalidParam(format!("unknown estimator `{other}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A flat parameter-aligned gradient estimate plus provenance.
#[derive(Clone, Debug)]
pub struct GradEstimate {
    pub grad: Array1<f64>,
    pub kind: EstimatorKind,
    pub seed: u64,
    pub loss_evaluations: u64,
    pub wall_time: f64,
}

impl GradEstimate {
    pub(crate) fn checked(
        grad: Array1<f64>,
        kind: EstimatorKind,
        seed: u64,
        loss_evaluations: u64,
        started: Instant,
    ) -> Result<Self> {
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(GradEstimate {
            grad,
            kind,
            seed,
            loss_evaluations,
            wall_time: started.elapsed().as_secs_f64(),
        })
    }
}

/// Straight-through backward over a recorded stochastic forward: sign layers
/// bridged by `(x_up - x_down) F'(a)`, binary-weight layers by `2 dL/dw`.
pub fn st_backward(net: &NetworkSpec, tape: &ForwardTape, targets: &[Target]) -> Result<GradEstimate> {
    let t0 = Instant::now();
    let (flat, _) = st_family_backward(net, tape, targets, &SignBridge::CdfSlope)?;
    GradEstimate::checked(flat, EstimatorKind::St, 0, 1, t0)
}

/// Identity-proxy variant: the `F'` factor at sign activations is bypassed.
pub fn identity_st_backward(
    net: &NetworkSpec,
    tape: &ForwardTape,
    targets: &[Target],
) -> Result<GradEstimate> {
    let t0 = Instant::now();
    let (flat, _) = st_family_backward(net, tape, targets, &SignBridge::Identity)?;
    GradEstimate::checked(flat, EstimatorKind::IdentitySt, 0, 1, t0)
}

/// Replace the sign-layer slope `(x_up - x_down) F'(a)` by an arbitrary
/// non-negative diagonal.
pub fn rescaled_st_backward(
    net: &NetworkSpec,
    tape: &ForwardTape,
    targets: &[Target],
    lambda: &Array1<f64>,
) -> Result<GradEstimate> {
    if lambda.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParam("rescaling diagonal must be non-negative".into()));
    }
    let t0 = Instant::now();
    let (flat, _) = st_family_backward(net, tape, targets, &SignBridge::Rescaled(lambda))?;
    GradEstimate::checked(
        flat,
        EstimatorKind::RescaledSt { lambda: lambda.to_vec() },
        0,
        1,
        t0,
    )
}

/// Deterministic straight-through: zero-noise forward, then the usual ST
/// backward at `x* = sign(a)`.
pub fn det_st_backward(
    net: &NetworkSpec,
    input: ArrayView2<f64>,
    targets: &[Target],
) -> Result<GradEstimate> {
    let t0 = Instant::now();
    let tape = net.forward_det(input, targets)?;
    let (flat, _) = st_family_backward(net, &tape, targets, &SignBridge::CdfSlope)?;
    GradEstimate::checked(flat, EstimatorKind::DetSt, 0, 1, t0)
}

/// ST-family backward returning both the flat parameter gradient and the
/// gradient at the network input.
pub fn st_family_backward(
    net: &NetworkSpec,
    tape: &ForwardTape,
    targets: &[Target],
    bridge: &SignBridge,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let g0 = backward::output_loss_grad(net, &tape.output, targets)?;
    let mut flat = Array1::zeros(net.layout().total);
    let cfg = backward::ChainCfg { bridge: bridge.clone(), weights: WeightsMode::StGrad };
    let input_grad = chain_from_top(net, tape, g0, &cfg, &mut flat)?;
    Ok((flat, input_grad))
}

/// ST-family backward seeded with a caller-supplied upstream gradient
/// `dL/d(output)` instead of the loss gradient.
pub fn st_backward_from_output_grad(
    net: &NetworkSpec,
    tape: &ForwardTape,
    upstream: ArrayView2<f64>,
    bridge: &SignBridge,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let mut flat = Array1::zeros(net.layout().total);
    let cfg = backward::ChainCfg { bridge: bridge.clone(), weights: WeightsMode::StGrad };
    let input_grad = chain_from_top(net, tape, upstream.to_owned(), &cfg, &mut flat)?;
    Ok((flat, input_grad))
}

fn chain_from_top(
    net: &NetworkSpec,
    tape: &ForwardTape,
    g0: Array2<f64>,
    cfg: &backward::ChainCfg,
    flat: &mut Array1<f64>,
) -> Result<Array2<f64>> {
    match backward::chain_down(net, &tape.records, net.layers().len(), g0, cfg, flat)?.reached() {
        Some(g) => Ok(g),
        None => unreachable!("ST bridges never stop"),
    }
}

/// Run the chosen estimator once at the given parameter point. The stream is
/// consumed deterministically; the estimate records the stream's seed.
pub fn estimate_gradient(
    kind: &EstimatorKind,
    net: &NetworkSpec,
    input: ArrayView2<f64>,
    targets: &[Target],
    rng: &mut RandomStream,
) -> Result<GradEstimate> {
    kind.validate()?;
    let seed = rng.seed();
    let t0 = Instant::now();
    match kind {
        EstimatorKind::St | EstimatorKind::IdentitySt | EstimatorKind::RescaledSt { .. } => {
            let tape = net.forward_sample(input, targets, rng, false)?;
            let lambda_arr;
            let bridge = match kind {
                EstimatorKind::RescaledSt { lambda } => {
                    lambda_arr = if lambda.len() == 1 {
                        Array1::from_elem(guess_sign_width(net)?, lambda[0])
                    } else {
                        Array1::from_vec(lambda.clone())
                    };
                    SignBridge::Rescaled(&lambda_arr)
                }
                EstimatorKind::IdentitySt => SignBridge::Identity,
                _ => SignBridge::CdfSlope,
            };
            let (flat, _) = st_family_backward(net, &tape, targets, &bridge)?;
            GradEstimate::checked(flat, kind.clone(), seed, 1, t0)
        }
        EstimatorKind::DetSt => {
            let mut est = det_st_backward(net, input, targets)?;
            est.seed = seed;
            Ok(est)
        }
        EstimatorKind::LocalExpectations => {
            let mut est = local_expectations(net, input, targets, rng)?;
            est.seed = seed;
            Ok(est)
        }
        EstimatorKind::LocalExpectationsAvg { k } => {
            let mut est = local_expectations_avg(net, input, targets, rng, *k)?;
            est.seed = seed;
            Ok(est)
        }
        EstimatorKind::ExactEnum => {
            let mut est = exact_gradient_enum_batch(net, input, targets)?;
            est.seed = seed;
            Ok(est)
        }
        EstimatorKind::GumbelSoftmax { tau } => {
            let mut est = gs_network_gradient(net, input, targets, *tau, rng, false)?;
            est.seed = seed;
            Ok(est)
        }
        EstimatorKind::StGumbelSoftmax { tau } => {
            let mut est = gs_network_gradient(net, input, targets, *tau, rng, true)?;
            est.seed = seed;
            Ok(est)
        }
    }
}

/// Width of the unique sign layer (for scalar rescaling diagonals).
fn guess_sign_width(net: &NetworkSpec) -> Result<usize> {
    let sites = net.stochastic_layers();
    if sites.len() != 1 {
        return Err(Error::SingleLayerRequired);
    }
    Ok(sites[0].1)
}

/// Input-gradient variant for one-layer analyses: runs the chosen ST bridge
/// on a recorded tape and reports `dL/da` at the network input.
pub fn st_input_gradient(
    net: &NetworkSpec,
    tape: &ForwardTape,
    targets: &[Target],
    bridge: &SignBridge,
) -> Result<Array2<f64>> {
    let (_, g) = st_family_backward(net, tape, targets, bridge)?;
    Ok(g)
}
