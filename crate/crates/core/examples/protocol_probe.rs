use sbnlab_core::harness::config::{DataSource, ExperimentConfig, ExperimentKind};

fn main() {
    let t0 = std::time::Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.kind = ExperimentKind::Accuracy;
    cfg.base_seed = 0;
    cfg.bits = 8;
    cfg.trials = 100;
    cfg.train_epochs = 100;
    cfg.checkpoint_every = 10;
    cfg.data = DataSource::Synthetic { docs: 64, vocab: 500, topics: 8, seed: 1 };
    cfg.output_dir = std::path::PathBuf::from("/tmp/probe_acc");
    let out = sbnlab_core::harness::run_accuracy_protocol(&cfg).unwrap();
    println!("accuracy protocol n=8: {:.1}s", t0.elapsed().as_secs_f64());
    // summarize mean ECS per estimator across checkpoints
    let mut by_est: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for r in &out.records {
        by_est.entry(r.estimator.clone()).or_default().push(r.ecs);
    }
    for (est, ecs) in &by_est {
        let mean = ecs.iter().sum::<f64>() / ecs.len() as f64;
        println!("{est}: mean ECS {mean:.4}  per-ckpt {:?}", ecs.iter().map(|v| (v*1000.0).round()/1000.0).collect::<Vec<_>>());
    }
    // sign-test wins
    let st: Vec<f64> = by_est["st"].clone();
    for other in ["identity_st", "det_st"] {
        let o = &by_est[other];
        let wins = st.iter().zip(o.iter()).filter(|(a, b)| a > b).count();
        println!("st > {other}: {wins}/{} checkpoints", st.len());
    }
}
