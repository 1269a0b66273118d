//! Experiment driver and I/O: config parsing, bag-of-words data, CSV and
//! checkpoint formats, the experiment runners and the verification suite.

pub mod accuracy;
pub mod autoenc;
pub mod bayesbinn_demo;
pub mod bow;
pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod csvio;
pub mod gumbel_sweep;
pub mod verify;

pub use accuracy::{run_accuracy_protocol, AccuracyOutcome, MeasurementRecord};
pub use autoenc::{run_autoencoder, AutoencOutcome};
pub use bayesbinn_demo::{run_bayesbinn_demo, BayesbinnOutcome};
pub use bow::{generate_synthetic_bow, load_bow, save_bow, top_words, BowData};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use classifier::{run_classifier, ClassifierOutcome};
pub use config::{load_config, parse_config, ExperimentConfig, ExperimentKind};
pub use gumbel_sweep::{run_gumbel_sweep, GumbelOutcome};
pub use verify::{run_verify, verify_report_csv, CheckOutcome};
