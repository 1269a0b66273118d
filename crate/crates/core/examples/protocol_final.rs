use sbnlab_core::estimators::EstimatorKind;
use sbnlab_core::harness::config::{DataSource, ExperimentConfig, ExperimentKind};

fn cfg_for(bits: usize, candidates: Vec<EstimatorKind>) -> ExperimentConfig {
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
    cfg.output_dir = std::path::PathBuf::from(format!("/tmp/probe_final_{bits}"));
    cfg
}

fn main() {
    let t0 = std::time::Instant::now();
    let full = vec![
        EstimatorKind::ExactEnum,
        EstimatorKind::St,
        EstimatorKind::IdentitySt,
        EstimatorKind::DetSt,
    ];
    let out = sbnlab_core::harness::run_accuracy_protocol(&cfg_for(8, full)).unwrap();
    let mut by_est: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for r in &out.records {
        by_est.entry(r.estimator.clone()).or_default().push(r.ecs);
    }
    for (est, ecs) in &by_est {
        let mean = ecs.iter().sum::<f64>() / ecs.len() as f64;
        println!("n=8 {est}: mean {mean:.4} {:?}", ecs.iter().map(|v| (v*1000.0).round()/1000.0).collect::<Vec<_>>());
    }
    let st = by_est["st"].clone();
    for other in ["identity_st", "det_st"] {
        let wins = st.iter().zip(by_est[other].iter()).filter(|(a, b)| a > b).count();
        println!("st > {other}: {wins}/10");
    }
    println!("n=8 took {:.0}s", t0.elapsed().as_secs_f64());
    for bits in [4usize, 12] {
        let t1 = std::time::Instant::now();
        let out = sbnlab_core::harness::run_accuracy_protocol(&cfg_for(bits, vec![EstimatorKind::St])).unwrap();
        let ecs: Vec<f64> = out.records.iter().map(|r| r.ecs).collect();
        println!("n={bits}: mean ECS(st) {:.4} in {:.0}s", ecs.iter().sum::<f64>() / ecs.len() as f64, t1.elapsed().as_secs_f64());
    }
    println!("total {:.0}s", t0.elapsed().as_secs_f64());
}
