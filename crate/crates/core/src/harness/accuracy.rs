//! Estimator-accuracy protocol: checkpoints are saved along an unbiased
//! reference trajectory; at each one every candidate estimator is evaluated
//! with fresh trials against the reference gradient at byte-identical
//! parameter snapshots, and the direction/improvement/error metrics are
//! aggregated over the flat (batch x trial) grid.

use ndarray::Array1;

use crate::error::Error;
use crate::estimators::{
    estimate_gradient, exact_gradient_enum_batch, local_expectations_avg, EstimatorKind,
};
use crate::harness::autoenc::{build_autoencoder, load_corpus, train_phase, TrainOptimizer};
use crate::harness::checkpoint::params_hash;
use crate::harness::config::ExperimentConfig;
use crate::harness::csvio::{render_csv, write_csv, Cell};
use crate::stream::RandomStream;
use crate::Result;

/// Exact enumeration is used for the reference gradient up to this latent
/// width; beyond it the 1000-sample averaged local expectations stands in.
pub const EXACT_REFERENCE_MAX_BITS: usize = 14;

const TAG_ACCURACY: u64 = 2;

pub const ACCURACY_HEADER: [&str; 15] = [
    "checkpoint",
    "estimator",
    "ecs",
    "ecs_lo",
    "ecs_hi",
    "ei",
    "ei_max",
    "rmse",
    "alpha_opt",
    "trials",
    "zero_trials",
    "epoch",
    "loss",
    "phase",
    "ckpt_hash",
];

#[derive(Clone, Debug)]
pub struct MeasurementRecord {
    pub checkpoint: String,
    pub estimator: String,
    pub ecs: f64,
    pub ecs_lo: f64,
    pub ecs_hi: f64,
    pub ei: f64,
    pub ei_max: f64,
    pub rmse: f64,
    pub alpha_opt: f64,
    pub trials: usize,
    pub zero_trials: usize,
    pub epoch: usize,
    pub loss: f64,
    pub phase: &'static str,
    pub ckpt_hash: String,
}

impl MeasurementRecord {
    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::from(self.checkpoint.clone()),
            Cell::from(self.estimator.clone()),
            Cell::from(self.ecs),
            Cell::from(self.ecs_lo),
            Cell::from(self.ecs_hi),
            Cell::from(self.ei),
            Cell::from(self.ei_max),
            Cell::from(self.rmse),
            Cell::from(self.alpha_opt),
            Cell::from(self.trials),
            Cell::from(self.zero_trials),
            Cell::from(self.epoch),
            Cell::from(self.loss),
            Cell::from(self.phase),
            Cell::from(self.ckpt_hash.clone()),
        ]
    }
}

pub struct AccuracyOutcome {
    pub records: Vec<MeasurementRecord>,
    pub csv: String,
}

/// Flat-grid aggregation of one estimator at one checkpoint.
fn aggregate_cells(
    references: &[Array1<f64>],
    cells: &[(usize, Array1<f64>)],
    base_step: f64,
) -> (f64, f64, f64, f64, f64, f64, usize) {
    let mut cosines = Vec::with_capacity(cells.len());
    let mut zero_trials = 0usize;
    let mut dot_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut err_sum = 0.0;
    for (b, est) in cells {
        let g = &references[*b];
        let gn = g.dot(g).sqrt();
        let en = est.dot(est).sqrt();
        if en == 0.0 {
            zero_trials += 1;
        } else if est == g {
            cosines.push(1.0);
        } else {
            cosines.push(g.dot(est) / (gn * en));
        }
        dot_sum += g.dot(est);
        sq_sum += est.dot(est);
        let d = est - g;
        err_sum += d.dot(&d);
    }
    let n = cells.len() as f64;
    let mean = if cosines.is_empty() {
        0.0
    } else {
        cosines.iter().sum::<f64>() / cosines.len() as f64
    };
    let (lo, hi) = if cosines.is_empty() {
        (0.0, 0.0)
    } else {
        let mut sorted = cosines;
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        (pct(&sorted, 0.15), pct(&sorted, 0.85))
    };
    let ei = -(dot_sum / n) / (sq_sum / n).sqrt();
    let alpha = base_step * dot_sum / sq_sum;
    let rmse = (err_sum / n).sqrt();
    (mean, lo, hi, ei, alpha, rmse, zero_trials)
}

fn pct(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub fn run_accuracy_protocol(cfg: &ExperimentConfig) -> Result<AccuracyOutcome> {
    let corpus = load_corpus(cfg)?;
    let root = RandomStream::new(cfg.base_seed);
    let mut net = build_autoencoder(
        corpus.vocab,
        cfg.hidden,
        cfg.bits,
        cfg.noise,
        cfg.encoding,
        &mut root.child(&[TAG_ACCURACY, 0]),
    )?;
    let mut opt = TrainOptimizer::new(cfg, net.layout().total)?;

    // reference trajectory trained with the unbiased 1-sample estimator
    let every = cfg.checkpoint_every.max(1);
    let mut snapshots: Vec<(usize, Array1<f64>)> = Vec::new();
    let mut log = Vec::new();
    train_phase(
        &mut net,
        &mut opt,
        &corpus,
        &EstimatorKind::LocalExpectations,
        cfg.train_epochs,
        0,
        "reference",
        1,
        cfg.batch_size,
        &root,
        &mut log,
        |epoch, net| {
            if epoch % every == 0 {
                snapshots.push((epoch, net.params_flat()));
            }
            Ok(())
        },
    )?;
    if snapshots.is_empty() {
        return Err(Error::InvalidParam(
            "no checkpoints: train_epochs shorter than checkpoint_every".into(),
        ));
    }

    let docs = corpus.inputs.nrows();
    let batch_size = cfg.batch_size;
    let mut records = Vec::new();
    for (ckpt_idx, (epoch, params)) in snapshots.iter().enumerate() {
        net.set_params_flat(params.view())?;
        let hash = params_hash(params);
        let ckpt_name = format!("ckpt{ckpt_idx:03}");

        // reference gradient per batch at this snapshot
        let mut references = Vec::new();
        let mut batch_bounds = Vec::new();
        let mut lo = 0usize;
        while lo < docs {
            let hi = (lo + batch_size).min(docs);
            let inputs = corpus.inputs.slice(ndarray::s![lo..hi, ..]);
            let targets = &corpus.targets[lo..hi];
            let reference = if cfg.bits <= EXACT_REFERENCE_MAX_BITS {
                exact_gradient_enum_batch(&net, inputs, targets)?.grad
            } else {
                let mut rng =
                    root.child(&[TAG_ACCURACY, 1, ckpt_idx as u64, batch_bounds.len() as u64]);
                local_expectations_avg(&net, inputs, targets, &mut rng, 1000)?.grad
            };
            references.push(reference);
            batch_bounds.push((lo, hi));
            lo = hi;
        }

        let loss = crate::harness::autoenc::eval_loss(
            &net,
            corpus.inputs.view(),
            &corpus.targets,
            &mut root.child(&[TAG_ACCURACY, 3, ckpt_idx as u64]),
            4,
        )?;

        for estimator in &cfg.candidates {
            // zero-noise and enumeration estimators are deterministic: every
            // trial would reproduce the same vector, so compute it once
            let deterministic =
                matches!(estimator, EstimatorKind::DetSt | EstimatorKind::ExactEnum);
            let mut cells = Vec::with_capacity(batch_bounds.len() * cfg.trials);
            for (b, &(lo, hi)) in batch_bounds.iter().enumerate() {
                let inputs = corpus.inputs.slice(ndarray::s![lo..hi, ..]);
                let targets = &corpus.targets[lo..hi];
                if deterministic {
                    let mut rng = root.child(&[
                        TAG_ACCURACY,
                        2,
                        ckpt_idx as u64,
                        estimator.stream_id(),
                        b as u64,
                        0,
                    ]);
                    let est = estimate_gradient(estimator, &net, inputs, targets, &mut rng)?;
                    for _ in 0..cfg.trials {
                        cells.push((b, est.grad.clone()));
                    }
                    continue;
                }
                // trials own derived streams, so they run in parallel and
                // land in index order
                use rayon::prelude::*;
                let trial_grads: Vec<Result<Array1<f64>>> = (0..cfg.trials)
                    .into_par_iter()
                    .map(|t| {
                        let mut rng = root.child(&[
                            TAG_ACCURACY,
                            2,
                            ckpt_idx as u64,
                            estimator.stream_id(),
                            b as u64,
                            t as u64,
                        ]);
                        Ok(estimate_gradient(estimator, &net, inputs, targets, &mut rng)?.grad)
                    })
                    .collect();
                for g in trial_grads {
                    cells.push((b, g?));
                }
            }
            let (ecs, lo_q, hi_q, ei, alpha, rmse, zero_trials) =
                aggregate_cells(&references, &cells, cfg.lr);
            let ei_max = -references
                .iter()
                .map(|g| g.dot(g).sqrt())
                .sum::<f64>()
                / references.len() as f64;
            records.push(MeasurementRecord {
                checkpoint: ckpt_name.clone(),
                estimator: estimator.name(),
                ecs,
                ecs_lo: lo_q,
                ecs_hi: hi_q,
                ei,
                ei_max,
                rmse,
                alpha_opt: alpha,
                trials: cfg.trials,
                zero_trials,
                epoch: *epoch,
                loss,
                phase: "reference",
                ckpt_hash: hash.clone(),
            });
        }
    }

    let rows: Vec<Vec<Cell>> = records.iter().map(|r| r.cells()).collect();
    let csv = render_csv(&ACCURACY_HEADER, &rows);
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_csv(&cfg.output_dir.join("accuracy.csv"), &ACCURACY_HEADER, &rows)?;
    Ok(AccuracyOutcome { records, csv })
}
