use sbnlab_core::estimators::EstimatorKind;
use sbnlab_core::harness::config::{DataSource, ExperimentConfig, ExperimentKind};

fn main() {
    for (bits, epochs, every) in [(4usize, 30, 3), (12, 30, 3)] {
        let t0 = std::time::Instant::now();
        let mut cfg = ExperimentConfig::default();
        cfg.kind = ExperimentKind::Accuracy;
        cfg.base_seed = 0;
        cfg.bits = bits;
        cfg.trials = 50;
        cfg.train_epochs = epochs;
        cfg.checkpoint_every = every;
        cfg.candidates = vec![EstimatorKind::St];
        cfg.batch_size = 64;
        cfg.data = DataSource::Synthetic { docs: 64, vocab: 500, topics: 12, seed: 1 };
        cfg.output_dir = std::path::PathBuf::from(format!("/tmp/probe3_{bits}"));
        let out = sbnlab_core::harness::run_accuracy_protocol(&cfg).unwrap();
        let ecs: Vec<f64> = out.records.iter().map(|r| r.ecs).collect();
        let eimax: Vec<f64> = out.records.iter().map(|r| -r.ei_max).collect();
        let mean = ecs.iter().sum::<f64>() / ecs.len() as f64;
        println!("bits={bits}: mean ECS(st) {mean:.4} in {:.1}s", t0.elapsed().as_secs_f64());
        println!("  per-ckpt ecs: {:?}", ecs.iter().map(|v| (v*1000.0).round()/1000.0).collect::<Vec<_>>());
        println!("  per-ckpt |g|: {:?}", eimax.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
    }
}
