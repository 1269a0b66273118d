use sbnlab_core::harness::config::{DataSource, ExperimentConfig, ExperimentKind};

fn main() {
    for seed in [0u64, 1, 2] {
        let t0 = std::time::Instant::now();
        let mut cfg = ExperimentConfig::default();
        cfg.kind = ExperimentKind::Autoenc;
        cfg.base_seed = seed;
        cfg.bits = 8;
        cfg.train_epochs = 200;
        cfg.correction_epochs = 100;
        cfg.data = DataSource::Synthetic { docs: 64, vocab: 500, topics: 8, seed: 1 };
        cfg.output_dir = std::path::PathBuf::from(format!("/tmp/probe_auto_{seed}"));
        let out = sbnlab_core::harness::run_autoencoder(&cfg).unwrap();
        println!(
            "seed {seed}: switch {:.3} final {:.3} improved {} ({:.0}s)",
            out.switch_loss,
            out.final_loss,
            out.final_loss <= out.switch_loss,
            t0.elapsed().as_secs_f64()
        );
        // phase-1 trajectory sanity: first and last st-phase epoch losses
        let first = out.log.iter().find(|r| r.phase == "train").unwrap().loss;
        let last = out.log.iter().filter(|r| r.phase == "train").last().unwrap().loss;
        println!("  st-phase loss: {first:.3} -> {last:.3}");
    }
}
