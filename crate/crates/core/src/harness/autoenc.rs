//! The stochastic-autoencoder experiment: train with a candidate estimator,
//! then switch to the unbiased averaged local-expectations reference and keep
//! training with a reinitialised optimizer.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::Error;
use crate::estimators::{estimate_gradient, EstimatorKind};
use crate::harness::bow::{generate_synthetic_bow, load_bow, top_words, BowData};
use crate::harness::config::{DataSource, ExperimentConfig, OptimKind};
use crate::harness::csvio::{write_csv, Cell};
use crate::noise::NoiseModel;
use crate::optim::{AdamState, SgdState};
use crate::sbn::{init_network, Encoding, LayerSkeleton, LossFn, NetworkSpec, Target};
use crate::stream::RandomStream;
use crate::Result;

/// Documents ready for training: dense frequency inputs and count targets.
pub struct CorpusTensors {
    pub inputs: Array2<f64>,
    pub targets: Vec<Target>,
    pub vocab: usize,
}

pub fn load_corpus(cfg: &ExperimentConfig) -> Result<CorpusTensors> {
    let data = match &cfg.data {
        DataSource::Path(p) => load_bow(p)?,
        DataSource::Synthetic { docs, vocab, topics, seed } => {
            generate_synthetic_bow(*docs, *vocab, *topics, *seed)
        }
    };
    let data: BowData = if cfg.top_words > 0 {
        top_words(&data, cfg.top_words).0
    } else {
        data
    };
    if data.is_empty() {
        return Err(Error::InvalidParam("corpus has no documents".into()));
    }
    let docs = data.len();
    let mut inputs = Array2::zeros((docs, data.vocab));
    let mut targets = Vec::with_capacity(docs);
    for d in 0..docs {
        inputs.row_mut(d).assign(&data.frequencies(d));
        targets.push(Target::Counts(data.counts(d)));
    }
    Ok(CorpusTensors { inputs, targets, vocab: data.vocab })
}

/// Encoder `d - hidden - bits` with a noisy-sign latent layer, symmetric
/// decoder with a softmax head, multinomial reconstruction loss.
pub fn build_autoencoder(
    vocab: usize,
    hidden: usize,
    bits: usize,
    noise: NoiseModel,
    encoding: Encoding,
    rng: &mut RandomStream,
) -> Result<NetworkSpec> {
    init_network(
        &[
            LayerSkeleton::RealLinear { inp: vocab, out: hidden },
            LayerSkeleton::Relu,
            LayerSkeleton::RealLinear { inp: hidden, out: bits },
            LayerSkeleton::SignActivation { noise, encoding },
            LayerSkeleton::RealLinear { inp: bits, out: hidden },
            LayerSkeleton::Relu,
            LayerSkeleton::RealLinear { inp: hidden, out: vocab },
            LayerSkeleton::Softmax,
        ],
        LossFn::MultinomialReconstruction,
        vocab,
        rng,
    )
}

pub enum TrainOptimizer {
    Sgd(SgdState),
    Adam(AdamState),
}

impl TrainOptimizer {
    pub fn new(cfg: &ExperimentConfig, dim: usize) -> Result<Self> {
        Ok(match cfg.optim_kind {
            OptimKind::Sgd => TrainOptimizer::Sgd(SgdState::new(cfg.lr)?),
            OptimKind::Adam => TrainOptimizer::Adam(AdamState::new(cfg.lr, dim)?),
        })
    }

    pub fn reinitialize(&mut self) {
        if let TrainOptimizer::Adam(a) = self {
            a.reinitialize();
        }
    }

    fn step(
        &mut self,
        params: &mut Array1<f64>,
        grad: ndarray::ArrayView1<f64>,
        layout: &crate::sbn::ParamLayout,
    ) -> Result<()> {
        match self {
            TrainOptimizer::Sgd(s) => s.step(params, grad, Some(layout)),
            TrainOptimizer::Adam(a) => a.step(params, grad, Some(layout)),
        }
    }
}

pub struct EpochRecord {
    pub epoch: usize,
    pub phase: &'static str,
    pub estimator: String,
    pub loss: f64,
}

/// Mean stochastic loss over the whole corpus with `k` samples per document.
pub fn eval_loss(
    net: &NetworkSpec,
    inputs: ArrayView2<f64>,
    targets: &[Target],
    rng: &mut RandomStream,
    k: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..k {
        let tape = net.forward_sample(inputs, targets, rng, false)?;
        total += tape.loss.ok_or(Error::InvalidParam("loss needs targets".into()))?;
    }
    Ok(total / k as f64)
}

/// Train `epochs` epochs with the given estimator; one optimizer step per
/// mini-batch in fixed order. Appends one loss record per epoch and invokes
/// `on_epoch_end` after each epoch (for checkpointing).
#[allow(clippy::too_many_arguments)]
pub fn train_phase(
    net: &mut NetworkSpec,
    opt: &mut TrainOptimizer,
    corpus: &CorpusTensors,
    estimator: &EstimatorKind,
    epochs: usize,
    start_epoch: usize,
    phase: &'static str,
    phase_id: u64,
    batch_size: usize,
    root: &RandomStream,
    log: &mut Vec<EpochRecord>,
    mut on_epoch_end: impl FnMut(usize, &NetworkSpec) -> Result<()>,
) -> Result<()> {
    let docs = corpus.inputs.nrows();
    for e in 0..epochs {
        let epoch = start_epoch + e + 1;
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        let mut lo = 0usize;
        let mut batch_idx = 0u64;
        while lo < docs {
            let hi = (lo + batch_size).min(docs);
            let inputs = corpus.inputs.slice(ndarray::s![lo..hi, ..]);
            let targets = &corpus.targets[lo..hi];
            let mut grad_rng = root.child(&[phase_id, epoch as u64, batch_idx]);
            let est = estimate_gradient(estimator, net, inputs, targets, &mut grad_rng)?;
            let mut params = net.params_flat();
            opt.step(&mut params, est.grad.view(), net.layout())?;
            net.set_params_flat(params.view())?;
            // one-sample readout of the batch loss at the new point
            let mut eval_rng = root.child(&[phase_id, epoch as u64, batch_idx, u64::MAX]);
            let tape = net.forward_sample(inputs, targets, &mut eval_rng, false)?;
            epoch_loss += tape.loss.ok_or(Error::InvalidParam("loss needs targets".into()))?;
            batches += 1;
            lo = hi;
            batch_idx += 1;
        }
        log.push(EpochRecord {
            epoch,
            phase,
            estimator: estimator.name(),
            loss: epoch_loss / batches as f64,
        });
        on_epoch_end(epoch, net)?;
    }
    Ok(())
}

pub struct AutoencOutcome {
    pub log: Vec<EpochRecord>,
    /// Corpus-level loss right at the estimator switch (16 samples/doc).
    pub switch_loss: f64,
    /// Corpus-level loss after the correction phase (16 samples/doc).
    pub final_loss: f64,
    pub csv: String,
}

/// Phase 1 trains with the configured candidate estimator, phase 2 switches
/// to averaged local expectations (k = 10) with the optimizer reinitialised.
/// Checkpoints and the epoch log land in the output directory.
pub fn run_autoencoder(cfg: &ExperimentConfig) -> Result<AutoencOutcome> {
    let corpus = load_corpus(cfg)?;
    let root = RandomStream::new(cfg.base_seed);
    let mut net = build_autoencoder(
        corpus.vocab,
        cfg.hidden,
        cfg.bits,
        cfg.noise,
        cfg.encoding,
        &mut root.child(&[TAG_AUTOENC, 0]),
    )?;
    let mut opt = TrainOptimizer::new(cfg, net.layout().total)?;
    let mut log = Vec::new();
    let ckpt_dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&ckpt_dir)?;
    super::checkpoint::save_checkpoint(&net, &ckpt_dir.join("ckpt_e0000.txt"))?;

    let every = cfg.checkpoint_every.max(1);
    train_phase(
        &mut net,
        &mut opt,
        &corpus,
        &cfg.estimator,
        cfg.train_epochs,
        0,
        "train",
        1,
        cfg.batch_size,
        &root,
        &mut log,
        |epoch, net| {
            if epoch % every == 0 {
                super::checkpoint::save_checkpoint(
                    net,
                    &ckpt_dir.join(format!("ckpt_e{epoch:04}.txt")),
                )?;
            }
            Ok(())
        },
    )?;
    let switch_loss = eval_loss(
        &net,
        corpus.inputs.view(),
        &corpus.targets,
        &mut root.child(&[TAG_AUTOENC, 2]),
        16,
    )?;

    opt.reinitialize();
    let reference = EstimatorKind::LocalExpectationsAvg { k: 10 };
    train_phase(
        &mut net,
        &mut opt,
        &corpus,
        &reference,
        cfg.correction_epochs,
        cfg.train_epochs,
        "correction",
        3,
        cfg.batch_size,
        &root,
        &mut log,
        |_, _| Ok(()),
    )?;
    let final_loss = eval_loss(
        &net,
        corpus.inputs.view(),
        &corpus.targets,
        &mut root.child(&[TAG_AUTOENC, 4]),
        16,
    )?;
    super::checkpoint::save_checkpoint(&net, &ckpt_dir.join("ckpt_final.txt"))?;

    let mut rows: Vec<Vec<Cell>> = log
        .iter()
        .map(|r| {
            vec![
                Cell::from(r.epoch),
                Cell::from(r.phase),
                Cell::from(r.estimator.clone()),
                Cell::from(r.loss),
            ]
        })
        .collect();
    rows.push(vec![
        Cell::from(cfg.train_epochs),
        Cell::from("eval_switch"),
        Cell::from(cfg.estimator.name()),
        Cell::from(switch_loss),
    ]);
    rows.push(vec![
        Cell::from(cfg.train_epochs + cfg.correction_epochs),
        Cell::from("eval_final"),
        Cell::from("local_expectations_avg(k=10)"),
        Cell::from(final_loss),
    ]);
    let csv = crate::harness::csvio::render_csv(&["epoch", "phase", "estimator", "loss"], &rows);
    write_csv(
        &ckpt_dir.join("train_log.csv"),
        &["epoch", "phase", "estimator", "loss"],
        &rows,
    )?;
    Ok(AutoencOutcome { log, switch_loss, final_loss, csv })
}

pub(crate) const TAG_AUTOENC: u64 = 1;
