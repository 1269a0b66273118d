use sbnlab_core::estimators::EstimatorKind;
use sbnlab_core::harness::config::{DataSource, ExperimentConfig, ExperimentKind};

fn main() {
    for bits in [4usize, 12] {
        let t0 = std::time::Instant::now();
        let mut cfg = ExperimentConfig::default();
        cfg.kind = ExperimentKind::Accuracy;
        cfg.base_seed = 0;
        cfg.bits = bits;
        cfg.trials = 100;
        cfg.train_epochs = 100;
        cfg.checkpoint_every = 10;
        cfg.candidates = vec![EstimatorKind::St];
        cfg.data = DataSource::Synthetic { docs: 64, vocab: 500, topics: 8, seed: 1 };
        cfg.output_dir = std::path::PathBuf::from(format!("/tmp/probe_acc_{bits}"));
        let out = sbnlab_core::harness::run_accuracy_protocol(&cfg).unwrap();
        let ecs: Vec<f64> = out.records.iter().map(|r| r.ecs).collect();
        let mean = ecs.iter().sum::<f64>() / ecs.len() as f64;
        println!("bits={bits}: mean ECS(st) {mean:.4} in {:.1}s", t0.elapsed().as_secs_f64());
    }
}
