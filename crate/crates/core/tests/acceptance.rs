//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with its measured numbers before asserting.

use std::sync::Mutex;
use std::time::Instant;

use ndarray::{array, Array1, Array2};

use sbnlab_core::estimators::gumbel::logistic_density;
use sbnlab_core::estimators::{
    exact_gradient_enum, exact_gradient_enum_with_input, expected_estimator_enum,
    expected_estimator_enum_with_input, gs_expected_quadrature, gs_second_moment_quadrature,
    gs_threshold_probability, st_family_backward, st_gs_expected_quadrature, theta_gradient_enum,
    EstimatorKind, SignBridge,
};
use sbnlab_core::harness::config::{DataSource, ExperimentConfig, ExperimentKind};
use sbnlab_core::metrics::{bias_variance, ecs, ei, ei_max, optimal_alpha, rmse, TrialSet};
use sbnlab_core::noise::{NoiseKind, NoiseModel};
use sbnlab_core::optim::{
    kl_prox_verify, logit_to_theta, md_kl_step, theta_to_logit, vb_step,
};
use sbnlab_core::sbn::{
    multilinear_correction, Encoding, Layer, LayerSkeleton, LossFn, NetworkSpec, Target,
};
use sbnlab_core::RandomStream;

/// The heavy criteria hold this lock so their runtime budgets are measured
/// without contention from sibling tests.
static SERIAL: Mutex<()> = Mutex::new(());

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("ACCEPTANCE {id:02} {name}: {} ({detail})", if pass { "pass" } else { "FAIL" });
}

fn all_kinds() -> [NoiseKind; 3] {
    [NoiseKind::Uniform, NoiseKind::Logistic, NoiseKind::Triangular]
}

fn bare_sign_net(n: usize, kind: NoiseKind, loss: LossFn) -> NetworkSpec {
    NetworkSpec::new(
        vec![Layer::SignActivation {
            noise: NoiseModel::normalized(kind),
            encoding: Encoding::PmOne,
        }],
        loss,
        n,
    )
    .expect("valid bare net")
}

fn random_multilinear(rng: &mut RandomStream, n: usize) -> LossFn {
    let mut terms = vec![(vec![], rng.uniform(-1.0, 1.0))];
    for i in 0..n {
        terms.push((vec![i], rng.uniform(-1.0, 1.0)));
    }
    let mut added = 0usize;
    while added < n {
        let i = rng.below(n);
        let j = rng.below(n);
        if i == j {
            added += 1;
            continue;
        }
        let (lo, hi) = (i.min(j), i.max(j));
        if !terms.iter().any(|(s, _)| s == &vec![lo, hi]) {
            terms.push((vec![lo, hi], rng.uniform(-1.0, 1.0)));
        }
        added += 1;
    }
    LossFn::polynomial(terms).expect("unique subsets")
}

#[test]
fn criterion_01_unbiasedness_on_multilinear_losses() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for (t, kind) in (0..50u64).zip(all_kinds().into_iter().cycle()) {
        let mut rng = RandomStream::new(100).child(&[t]);
        let n = 8;
        let net = bare_sign_net(n, kind, random_multilinear(&mut rng, n));
        let input = Array1::from_shape_fn(n, |_| rng.uniform(-1.5, 1.5));
        let (_, exact) =
            exact_gradient_enum_with_input(&net, input.view(), &Target::None).unwrap();
        let (_, st) = expected_estimator_enum_with_input(
            &EstimatorKind::St,
            &net,
            input.view(),
            &Target::None,
        )
        .unwrap();
        for i in 0..n {
            worst = worst.max((st[i] - exact[i]).abs() / exact[i].abs().max(1e-6));
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = worst < 1e-9 && elapsed < 10.0;
    report(1, "unbiasedness", pass, &format!("max rel dev {worst:.2e}, {elapsed:.1}s"));
    assert!(pass);
}

#[test]
fn criterion_02_counterexample_bias() {
    let loss = LossFn::quadratic(array![[1.0]], array![0.0]).unwrap();
    let mut worst = 0.0f64;
    for kind in all_kinds() {
        let net = bare_sign_net(1, kind, loss.clone());
        let noise = NoiseModel::normalized(kind);
        for a in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let input = array![a];
            let (_, true_grad) =
                exact_gradient_enum_with_input(&net, input.view(), &Target::None).unwrap();
            let (_, st) = expected_estimator_enum_with_input(
                &EstimatorKind::St,
                &net,
                input.view(),
                &Target::None,
            )
            .unwrap();
            let formula =
                4.0 * noise.pdf(a).unwrap() * (2.0 * noise.cdf(a).unwrap() - 1.0);
            worst = worst.max(true_grad[0].abs()).max((st[0] - formula).abs());
        }
    }
    let pass = worst < 1e-12;
    report(2, "counterexample bias", pass, &format!("max dev {worst:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_03_quadratic_repair() {
    let mut worst_bias = 0.0f64;
    let mut worst_agree = 0.0f64;
    for t in 0..20u64 {
        let mut rng = RandomStream::new(300).child(&[t]);
        let n = 8;
        let w = Array2::from_shape_fn((4, n), |_| rng.uniform(-1.0, 1.0));
        let y = Array1::from_shape_fn(4, |_| rng.uniform(-1.0, 1.0));
        let quad = LossFn::quadratic(w.clone(), y.clone()).unwrap();
        let corrected = multilinear_correction(w, y).unwrap();
        for mask in 0..(1usize << n) {
            let x = Array1::from_shape_fn(n, |i| if (mask >> i) & 1 == 1 { 1.0 } else { -1.0 });
            let a = quad.eval(x.view(), &Target::None).unwrap();
            let b = corrected.eval(x.view(), &Target::None).unwrap();
            worst_agree = worst_agree.max((a - b).abs());
        }
        let net = bare_sign_net(n, NoiseKind::Logistic, corrected);
        let input = Array1::from_shape_fn(n, |_| rng.uniform(-1.0, 1.0));
        let (_, exact) =
            exact_gradient_enum_with_input(&net, input.view(), &Target::None).unwrap();
        let (_, st) = expected_estimator_enum_with_input(
            &EstimatorKind::St,
            &net,
            input.view(),
            &Target::None,
        )
        .unwrap();
        for i in 0..n {
            worst_bias = worst_bias.max((st[i] - exact[i]).abs() / exact[i].abs().max(1e-6));
        }
    }
    let pass = worst_bias < 1e-9 && worst_agree < 1e-10;
    report(
        3,
        "quadratic repair",
        pass,
        &format!("max rel bias {worst_bias:.2e}, max disagreement {worst_agree:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_rescaling_ascent() {
    let mut worst = f64::INFINITY;
    for t in 0..100u64 {
        let mut rng = RandomStream::new(400).child(&[t]);
        let n = 6;
        let kind = all_kinds()[(t % 3) as usize];
        let net = bare_sign_net(n, kind, random_multilinear(&mut rng, n));
        let input = Array1::from_shape_fn(n, |_| rng.uniform(-1.5, 1.5));
        let lambda: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 2.0)).collect();
        let (_, st) = expected_estimator_enum_with_input(
            &EstimatorKind::St,
            &net,
            input.view(),
            &Target::None,
        )
        .unwrap();
        let (_, rescaled) = expected_estimator_enum_with_input(
            &EstimatorKind::RescaledSt { lambda },
            &net,
            input.view(),
            &Target::None,
        )
        .unwrap();
        worst = worst.min(st.dot(&rescaled));
    }
    let pass = worst >= -1e-12;
    report(4, "rescaling ascent", pass, &format!("min scalar product {worst:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_05_invariance_under_cdf_reparameterisation() {
    let mut worst = 0.0f64;
    for t in 0..20u64 {
        let mut rng = RandomStream::new(500).child(&[t]);
        let n = 5;
        let kind = all_kinds()[(t % 3) as usize];
        let noise = NoiseModel::normalized(kind);
        let loss = random_multilinear(&mut rng, n);
        let net_f = bare_sign_net(n, kind, loss.clone());
        let net_u = bare_sign_net(n, NoiseKind::Uniform, loss);
        let a = Array1::from_shape_fn(n, |_| rng.uniform(-1.8, 1.8));
        let a2 = a.clone().insert_axis(ndarray::Axis(0));
        let z: Vec<f64> = (0..n).map(|_| noise.quantile(rng.open01()).unwrap()).collect();
        let states =
            Array2::from_shape_fn((1, n), |(_, i)| if a[i] - z[i] >= 0.0 { 1.0 } else { -1.0 });
        let tape_f = net_f.forward_pinned(a2.view(), &[], vec![states.clone()]).unwrap();
        let ta = a2.mapv(|v| 2.0 * noise.cdf(v).unwrap() - 1.0);
        let tape_u = net_u.forward_pinned(ta.view(), &[], vec![states]).unwrap();
        let (_, gf) = st_family_backward(&net_f, &tape_f, &[], &SignBridge::CdfSlope).unwrap();
        let (_, gu) = st_family_backward(&net_u, &tape_u, &[], &SignBridge::CdfSlope).unwrap();
        for i in 0..n {
            let chained = gu[(0, i)] * 2.0 * noise.pdf(a[i]).unwrap();
            worst = worst.max((gf[(0, i)] - chained).abs());
        }
    }
    let pass = worst < 1e-12;
    report(5, "invariance under T = F", pass, &format!("max dev {worst:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_06_mirror_descent_equivalences() {
    // closed-form KL step vs independent per-coordinate prox minimisation
    let mut rng = RandomStream::new(600);
    let mut worst_prox = 0.0f64;
    for _ in 0..100 {
        let theta = array![rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)];
        let g = array![rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
        let eps = rng.uniform(0.05, 1.0);
        let eta2 = md_kl_step(theta_to_logit(theta.view()).view(), g.view(), eps);
        let cand = logit_to_theta(eta2.view());
        worst_prox = worst_prox.max(kl_prox_verify(theta.view(), g.view(), eps, cand.view()));
    }
    // identity straight-through-weights expectation equals the theta gradient
    let n = 8;
    let noise = NoiseModel::new(NoiseKind::Logistic, 2.0).unwrap();
    let logits = Array2::from_shape_fn((n, 1), |_| rng.uniform(-1.2, 1.2));
    let net = NetworkSpec::new(
        vec![Layer::BinaryLinear { logits, noise }],
        random_multilinear(&mut rng, n),
        1,
    )
    .unwrap();
    let input = array![1.0];
    let st = expected_estimator_enum(&EstimatorKind::St, &net, input.view(), &Target::None)
        .unwrap();
    let theta = theta_gradient_enum(&net, input.view(), &Target::None).unwrap();
    let mut worst_md = 0.0f64;
    for k in 0..n {
        worst_md = worst_md.max((st.grad[k] - theta[k]).abs() / theta[k].abs().max(1e-6));
    }
    let pass = worst_prox < 1e-8 && worst_md < 1e-9;
    report(
        6,
        "mirror-descent equivalence",
        pass,
        &format!("prox dev {worst_prox:.2e}, theta-grad dev {worst_md:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_07_variational_bayes_stationary_point() {
    let mut rng = RandomStream::new(700);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let theta: f64 = rng.uniform(0.05, 0.95);
        let g = rng.uniform(-2.0, 2.0);
        let eps = rng.uniform(0.05, 0.5);
        let lambda = rng.uniform(0.0, 2.0);
        let eta = array![(theta / (1.0 - theta)).ln()];
        let eta2 = vb_step(eta.view(), array![g].view(), eps, lambda, true).unwrap();
        let theta2 = logit_to_theta(eta2.view())[0];
        let lhs = (eps * lambda + 1.0) * (theta2 / (1.0 - theta2)).ln();
        let rhs = (theta / (1.0 - theta)).ln() - eps * g;
        worst = worst.max((lhs - rhs).abs());
    }
    let pass = worst < 1e-8;
    report(7, "variational-Bayes stationary point", pass, &format!("max residual {worst:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_08_gumbel_asymptotics() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    // quadrature bias ratio for L(v) = v^2 at eta = 0
    let lp = |v: f64| 2.0 * v;
    let truth = logistic_density(0.0);
    let bias = |tau: f64| gs_expected_quadrature(&lp, 0.0, tau).unwrap() - truth;
    let bias_ratio = bias(0.05) / bias(0.1);
    let bias_ok = (1.7..=2.3).contains(&bias_ratio);

    let var = |tau: f64| {
        let m1 = gs_expected_quadrature(&lp, 0.0, tau).unwrap();
        gs_second_moment_quadrature(&lp, 0.0, tau).unwrap() - m1 * m1
    };
    let var_ratio = var(0.05) / var(0.1);
    let var_ok = (1.6..=2.4).contains(&var_ratio);

    let mut thr_ok = true;
    let mut thr_detail = String::new();
    for (i, (eta, tau, eps)) in [(0.3, 0.01, 1e-4), (0.0, 0.01, 1e-4), (1.0, 0.02, 1e-3)]
        .into_iter()
        .enumerate()
    {
        let p = gs_threshold_probability(eta, tau, eps).unwrap();
        let mut rng = RandomStream::new(800).child(&[i as u64]);
        let draws = 1_000_000usize;
        let mut hits = 0usize;
        for _ in 0..draws {
            let z = rng.logistic();
            let u = (eta - z) / tau;
            let t = (-u.abs()).exp();
            if t / ((1.0 + t) * (1.0 + t)) >= eps {
                hits += 1;
            }
        }
        let mc = hits as f64 / draws as f64;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        let ok = (mc - p).abs() <= 3.0 * sigma;
        thr_ok &= ok;
        thr_detail.push_str(&format!(" [{eta};{tau};{eps}]: |mc-p|/sigma={:.2}", (mc - p).abs() / sigma));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let time_ok = elapsed < 60.0;
    println!(
        "ACCEPTANCE 08 gumbel asymptotics: bias(0.05)/bias(0.1) = {bias_ratio:.3} in [1.7,2.3] -> {}",
        if bias_ok { "pass" } else { "FAIL" }
    );
    println!(
        "ACCEPTANCE 08 gumbel asymptotics: var(0.05)/var(0.1) = {var_ratio:.3} in [1.6,2.4] -> {}",
        if var_ok { "pass" } else { "FAIL" }
    );
    println!(
        "ACCEPTANCE 08 gumbel asymptotics: threshold closed-form vs MC{thr_detail} -> {}",
        if thr_ok { "pass" } else { "FAIL" }
    );
    let pass = bias_ok && var_ok && thr_ok && time_ok;
    report(8, "gumbel asymptotics", pass, &format!("{elapsed:.1}s"));
    assert!(pass);
}

#[test]
fn criterion_09_st_gumbel_softmax_half_factor() {
    // linear loss: L'(0) = L'(1) = 1 and L(1) - L(0) = 1
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for eta in [0.0, 0.5, 1.0] {
        let quad = st_gs_expected_quadrature(1.0, 1.0, eta, 1e-3).unwrap();
        let target = 0.5 * logistic_density(eta);
        let rel = (quad - target).abs() / target;
        worst = worst.max(rel);
        detail.push_str(&format!(" eta={eta}: quad={quad:.5} vs half={target:.5}"));
    }
    let pass = worst <= 0.05;
    report(9, "ST-GS half factor", pass, &format!("max rel dev {worst:.3};{detail}"));
    assert!(pass);
}

#[test]
fn criterion_10_bayesbinn_collapse() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut cfg = ExperimentConfig::default();
    cfg.kind = ExperimentKind::Bayesbinn;
    cfg.base_seed = 0;
    cfg.output_dir = std::env::temp_dir().join("sbnlab_accept_bb");
    let out = sbnlab_core::harness::run_bayesbinn_demo(&cfg).unwrap();
    let pass = out.coincide_from == Some(0)
        && out.n_independent
        && out.tau1_diverges_at.map(|d| d < 100).unwrap_or(false);
    report(
        10,
        "bayesbinn collapse",
        pass,
        &format!(
            "trigger {}, replica==collapsed from {:?} over 1000 steps, N in {{1e3,1e5}} identical: {}, tau=1 diverges at {:?}",
            out.trigger_step, out.coincide_from, out.n_independent, out.tau1_diverges_at
        ),
    );
    assert!(pass);
}

fn accuracy_config(bits: usize, candidates: Vec<EstimatorKind>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.kind = ExperimentKind::Accuracy;
    cfg.base_seed = 0;
    cfg.bits = bits;
    cfg.trials = 100;
    cfg.train_epochs = 30;
    cfg.checkpoint_every = 3;
    cfg.batch_size = 64;
    cfg.candidates = candidates;
    cfg.data = DataSource::Synthetic { docs: 64, vocab: 500, topics: 12, seed: 1 };
    cfg.output_dir = std::env::temp_dir().join(format!("sbnlab_accept_acc_{bits}"));
    cfg
}

/// One-sided sign-test p-value for `wins` of `n` under the fair-coin null.
fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut p = 0.0;
    for k in wins..=n {
        let mut c = 1.0f64;
        for i in 0..k {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        p += c;
    }
    p / 2.0f64.powi(n as i32)
}

#[test]
fn criterion_11_estimator_accuracy_ordering() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let full = vec![
        EstimatorKind::ExactEnum,
        EstimatorKind::St,
        EstimatorKind::IdentitySt,
        EstimatorKind::DetSt,
    ];
    let out = sbnlab_core::harness::run_accuracy_protocol(&accuracy_config(8, full)).unwrap();
    let mut by_est: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for r in &out.records {
        by_est.entry(r.estimator.clone()).or_default().push(r.ecs);
    }
    let exact_ecs = &by_est["exact_enum"];
    let exact_exact = exact_ecs.iter().all(|&v| v == 1.0);
    let st = by_est["st"].clone();
    let n_ckpt = st.len();
    let wins_id = st.iter().zip(by_est["identity_st"].iter()).filter(|(a, b)| a > b).count();
    let wins_det = st.iter().zip(by_est["det_st"].iter()).filter(|(a, b)| a > b).count();
    let p_id = sign_test_p(wins_id, n_ckpt);
    let p_det = sign_test_p(wins_det, n_ckpt);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ordering_ok = mean(&st) > mean(&by_est["identity_st"])
        && mean(&st) > mean(&by_est["det_st"])
        && p_id <= 0.05
        && p_det <= 0.05;

    let st4 = sbnlab_core::harness::run_accuracy_protocol(&accuracy_config(
        4,
        vec![EstimatorKind::St],
    ))
    .unwrap();
    let st12 = sbnlab_core::harness::run_accuracy_protocol(&accuracy_config(
        12,
        vec![EstimatorKind::St],
    ))
    .unwrap();
    let ecs4 = mean(&st4.records.iter().map(|r| r.ecs).collect::<Vec<_>>());
    let ecs12 = mean(&st12.records.iter().map(|r| r.ecs).collect::<Vec<_>>());
    let trend_ok = ecs12 >= ecs4;

    let elapsed = t0.elapsed().as_secs_f64();
    let time_ok = elapsed < 600.0;
    let pass = exact_exact && ordering_ok && trend_ok && time_ok;
    report(
        11,
        "estimator-accuracy ordering",
        pass,
        &format!(
            "exact ECS == 1: {exact_exact}; st>id {wins_id}/{n_ckpt} (p={p_id:.4}), st>det {wins_det}/{n_ckpt} (p={p_det:.4}); ECS(st) n=12 {ecs12:.4} >= n=4 {ecs4:.4}: {trend_ok}; {elapsed:.0}s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_12_correction_phase_improvement() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut all_ok = true;
    let mut detail = String::new();
    for seed in [0u64, 1, 2] {
        let mut cfg = ExperimentConfig::default();
        cfg.kind = ExperimentKind::Autoenc;
        cfg.base_seed = seed;
        cfg.bits = 8;
        cfg.train_epochs = 200;
        cfg.correction_epochs = 100;
        cfg.data = DataSource::Synthetic { docs: 64, vocab: 500, topics: 8, seed: 1 };
        cfg.output_dir = std::env::temp_dir().join(format!("sbnlab_accept_auto_{seed}"));
        let out = sbnlab_core::harness::run_autoencoder(&cfg).unwrap();
        let ok = out.final_loss <= out.switch_loss;
        all_ok &= ok;
        detail.push_str(&format!(
            " seed {seed}: {:.2} -> {:.2} ({})",
            out.switch_loss,
            out.final_loss,
            if ok { "improved" } else { "worse" }
        ));
    }
    report(12, "correction-phase improvement", all_ok, &detail);
    assert!(all_ok);
}

#[test]
fn criterion_13_deep_st_ascent() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut hits = 0usize;
    for t in 0..20u64 {
        let mut rng = RandomStream::new(1300).child(&[t]);
        let net = sbnlab_core::sbn::init_network(
            &[
                LayerSkeleton::RealLinear { inp: 4, out: 6 },
                LayerSkeleton::SignActivation {
                    noise: NoiseModel::normalized(NoiseKind::Logistic),
                    encoding: Encoding::PmOne,
                },
                LayerSkeleton::RealLinear { inp: 6, out: 6 },
                LayerSkeleton::SignActivation {
                    noise: NoiseModel::normalized(NoiseKind::Logistic),
                    encoding: Encoding::PmOne,
                },
            ],
            LossFn::quadratic(
                Array2::from_shape_fn((4, 6), |_| rng.uniform(-0.5, 0.5)),
                Array1::from_shape_fn(4, |_| rng.uniform(-1.0, 1.0)),
            )
            .unwrap(),
            4,
            &mut rng,
        )
        .unwrap();
        let input = Array1::from_shape_fn(4, |_| rng.uniform(-1.0, 1.0));
        let exact = exact_gradient_enum(&net, input.view(), &Target::None).unwrap();
        let st = expected_estimator_enum(&EstimatorKind::St, &net, input.view(), &Target::None)
            .unwrap();
        let cos = exact.grad.dot(&st.grad)
            / (exact.grad.dot(&exact.grad).sqrt() * st.grad.dot(&st.grad).sqrt());
        if cos > 0.0 {
            hits += 1;
        }
    }
    let pass = hits >= 19;
    report(13, "deep ST ascent", pass, &format!("{hits}/20 positive cosines"));
    assert!(pass);
}

#[test]
fn criterion_14_metrics_identities() {
    let g = array![3.0, 4.0];
    let mut ok = true;
    let same = TrialSet::new(g.clone(), vec![g.clone()], "a".into()).unwrap();
    ok &= ecs(&same).unwrap().mean == 1.0;
    let opp = TrialSet::new(g.clone(), vec![-&g], "a".into()).unwrap();
    ok &= ecs(&opp).unwrap().mean == -1.0;
    let orth = TrialSet::new(g.clone(), vec![array![-4.0, 3.0]], "a".into()).unwrap();
    ok &= ecs(&orth).unwrap().mean.abs() < 1e-12;
    ok &= (ei(&same).unwrap() + 5.0).abs() < 1e-12;
    ok &= (ei(&opp).unwrap() - 5.0).abs() < 1e-12;
    ok &= (ei_max(&same) + 5.0).abs() < 1e-12;
    ok &= (optimal_alpha(&same, 0.25).unwrap() - 0.25).abs() < 1e-12;
    let double = TrialSet::new(g.clone(), vec![2.0 * &g], "a".into()).unwrap();
    ok &= (optimal_alpha(&double, 0.25).unwrap() - 0.125).abs() < 1e-12;
    ok &= rmse(&same) == 0.0;
    let shifted = TrialSet::new(g.clone(), vec![array![3.0, 7.0]], "a".into()).unwrap();
    ok &= (rmse(&shifted) - 3.0).abs() < 1e-12;
    // decomposition on synthetic trial sets
    let mut rng = RandomStream::new(1400);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let reference = Array1::from_shape_fn(6, |_| rng.uniform(-1.0, 1.0));
        let trials: Vec<Array1<f64>> =
            (0..50).map(|_| Array1::from_shape_fn(6, |_| rng.uniform(-2.0, 2.0))).collect();
        let set = TrialSet::new(reference, trials, "a".into()).unwrap();
        let r = rmse(&set);
        let (b2, var) = bias_variance(&set);
        worst = worst.max((r * r - (b2 + var)).abs());
    }
    ok &= worst < 1e-10;
    report(14, "metrics identities", ok, &format!("decomposition residual {worst:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_15_reproducibility() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let base = std::env::temp_dir().join("sbnlab_accept_repro");
    let mut ok = true;
    let mut detail = String::new();

    // verify report
    let v1 = sbnlab_core::harness::verify_report_csv(&sbnlab_core::harness::run_verify(0));
    let v2 = sbnlab_core::harness::verify_report_csv(&sbnlab_core::harness::run_verify(0));
    ok &= v1 == v2;
    detail.push_str(&format!("verify: {}", v1 == v2));

    // each experiment at a small scale, run twice
    let mut cfg = ExperimentConfig::default();
    cfg.base_seed = 3;
    cfg.bits = 4;
    cfg.hidden = 8;
    cfg.train_epochs = 4;
    cfg.correction_epochs = 2;
    cfg.checkpoint_every = 2;
    cfg.trials = 5;
    cfg.data = DataSource::Synthetic { docs: 12, vocab: 40, topics: 3, seed: 1 };

    cfg.kind = ExperimentKind::Autoenc;
    cfg.output_dir = base.join("a1");
    let a1 = sbnlab_core::harness::run_autoencoder(&cfg).unwrap().csv;
    cfg.output_dir = base.join("a2");
    let a2 = sbnlab_core::harness::run_autoencoder(&cfg).unwrap().csv;
    ok &= a1 == a2;
    detail.push_str(&format!(", autoenc: {}", a1 == a2));

    cfg.kind = ExperimentKind::Accuracy;
    cfg.candidates = vec![EstimatorKind::ExactEnum, EstimatorKind::St, EstimatorKind::DetSt];
    cfg.output_dir = base.join("c1");
    let c1 = sbnlab_core::harness::run_accuracy_protocol(&cfg).unwrap().csv;
    cfg.output_dir = base.join("c2");
    let c2 = sbnlab_core::harness::run_accuracy_protocol(&cfg).unwrap().csv;
    ok &= c1 == c2;
    detail.push_str(&format!(", accuracy: {}", c1 == c2));

    let mut gcfg = ExperimentConfig::default();
    gcfg.kind = ExperimentKind::Gumbel;
    gcfg.base_seed = 3;
    gcfg.taus = vec![0.5, 0.1];
    gcfg.mc_draws = 50_000;
    gcfg.output_dir = base.join("g1");
    let g1 = sbnlab_core::harness::run_gumbel_sweep(&gcfg).unwrap().csv;
    gcfg.output_dir = base.join("g2");
    let g2 = sbnlab_core::harness::run_gumbel_sweep(&gcfg).unwrap().csv;
    ok &= g1 == g2;
    detail.push_str(&format!(", gumbel: {}", g1 == g2));

    let mut bcfg = ExperimentConfig::default();
    bcfg.kind = ExperimentKind::Bayesbinn;
    bcfg.base_seed = 3;
    bcfg.output_dir = base.join("b1");
    let b1 = sbnlab_core::harness::run_bayesbinn_demo(&bcfg).unwrap().csv;
    bcfg.output_dir = base.join("b2");
    let b2 = sbnlab_core::harness::run_bayesbinn_demo(&bcfg).unwrap().csv;
    ok &= b1 == b2;
    detail.push_str(&format!(", bayesbinn: {}", b1 == b2));

    let mut ccfg = ExperimentConfig::default();
    ccfg.kind = ExperimentKind::TinyClassifier;
    ccfg.base_seed = 3;
    ccfg.train_epochs = 6;
    ccfg.output_dir = base.join("t1");
    let t1 = sbnlab_core::harness::run_classifier(&ccfg).unwrap().csv;
    ccfg.output_dir = base.join("t2");
    let t2 = sbnlab_core::harness::run_classifier(&ccfg).unwrap().csv;
    ok &= t1 == t2;
    detail.push_str(&format!(", classifier: {}", t1 == t2));

    report(15, "reproducibility", ok, &detail);
    assert!(ok);
}
