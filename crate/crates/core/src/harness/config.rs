//! The `[section]` / `key = value` experiment config format.
//!
//! Unknown sections or keys are errors (no silent typos), duplicates are
//! errors, and type mismatches name the offending `section.key` and line.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::Error;
use crate::estimators::EstimatorKind;
use crate::noise::{NoiseKind, NoiseModel};
use crate::sbn::Encoding;
use crate::Result;

/// Which experiment a config drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Autoenc,
    Accuracy,
    Gumbel,
    Bayesbinn,
    Verify,
    TinyClassifier,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "autoenc" => ExperimentKind::Autoenc,
            "accuracy" => ExperimentKind::Accuracy,
            "gumbel" => ExperimentKind::Gumbel,
            "bayesbinn" => ExperimentKind::Bayesbinn,
            "verify" => ExperimentKind::Verify,
            "tiny_classifier" => ExperimentKind::TinyClassifier,
            other => {
                return Err(Error::Config {
                    line: None,
                    msg: format!("unknown experiment kind `{other}`"),
                })
            }
        })
    }
}

/// Where documents come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Path(PathBuf),
    Synthetic { docs: usize, vocab: usize, topics: usize, seed: u64 },
}

impl DataSource {
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(body) = s.strip_prefix("synthetic(").and_then(|r| r.strip_suffix(')')) {
            let parts: Vec<_> = body.split(',').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(Error::Config {
                    line: None,
                    msg: format!("synthetic(...) needs docs,vocab,topics,seed, got `{s}`"),
                });
            }
            let num = |p: &str| -> Result<u64> {
                p.parse::<u64>().map_err(|_| Error::Config {
                    line: None,
                    msg: format!("bad integer `{p}` in `{s}`"),
                })
            };
            return Ok(DataSource::Synthetic {
                docs: num(parts[0])? as usize,
                vocab: num(parts[1])? as usize,
                topics: num(parts[2])? as usize,
                seed: num(parts[3])?,
            });
        }
        Ok(DataSource::Path(PathBuf::from(s)))
    }
}

/// Fully resolved experiment configuration with documented defaults.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub base_seed: u64,
    pub trials: usize,
    pub train_epochs: usize,
    pub correction_epochs: usize,
    pub checkpoint_every: usize,
    pub batch_size: usize,
    pub output_dir: PathBuf,
    // network
    pub bits: usize,
    pub hidden: usize,
    pub encoding: Encoding,
    pub noise: NoiseModel,
    // data
    pub data: DataSource,
    pub top_words: usize,
    // estimators
    pub estimator: EstimatorKind,
    pub candidates: Vec<EstimatorKind>,
    // optimizer
    pub optim_kind: OptimKind,
    pub lr: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub tau: f64,
    pub eps_gs: f64,
    pub n_train: f64,
    // gumbel sweep
    pub taus: Vec<f64>,
    pub eta: f64,
    pub mc_draws: usize,
    pub threshold_eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimKind {
    Sgd,
    Adam,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Verify,
            base_seed: 0,
            trials: 100,
            train_epochs: 200,
            correction_epochs: 100,
            checkpoint_every: 20,
            batch_size: 32,
            output_dir: PathBuf::from("out"),
            bits: 8,
            hidden: 64,
            encoding: Encoding::ZeroOne,
            noise: NoiseModel::normalized(NoiseKind::Logistic),
            data: DataSource::Synthetic { docs: 64, vocab: 500, topics: 8, seed: 1 },
            top_words: 0,
            estimator: EstimatorKind::St,
            candidates: vec![
                EstimatorKind::ExactEnum,
                EstimatorKind::St,
                EstimatorKind::IdentitySt,
                EstimatorKind::DetSt,
            ],
            optim_kind: OptimKind::Adam,
            lr: 0.001,
            lambda: 0.0,
            alpha: 0.01,
            tau: 1e-10,
            eps_gs: 1e-10,
            n_train: 1000.0,
            taus: vec![1.0, 0.5, 0.1, 0.05],
            eta: 0.3,
            mc_draws: 1_000_000,
            threshold_eps: 1e-4,
        }
    }
}

struct RawConfig {
    /// (section, key) -> (line, value)
    entries: BTreeMap<(String, String), (usize, String)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw_line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = match raw_line.find(['#', ';']) {
                Some(p) => &raw_line[..p],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                section = name.trim().to_string();
                if !KNOWN_SECTIONS.contains(&section.as_str()) {
                    return Err(Error::Config {
                        line: Some(lineno),
                        msg: format!("unknown section `[{section}]`"),
                    });
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: Some(lineno),
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            if section.is_empty() {
                return Err(Error::Config {
                    line: Some(lineno),
                    msg: "key before any [section]".into(),
                });
            }
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            let slot = (section.clone(), key.clone());
            if entries.contains_key(&slot) {
                return Err(Error::Config {
                    line: Some(lineno),
                    msg: format!("duplicate key `{section}.{key}`"),
                });
            }
            entries.insert(slot, (lineno, value));
        }
        Ok(RawConfig { entries })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }
}

const KNOWN_SECTIONS: [&str; 6] = ["experiment", "network", "noise", "data", "estimator", "optim"];

fn parse_as<T: std::str::FromStr>(section: &str, key: &str, line: usize, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| Error::Config {
        line: Some(line),
        msg: format!("bad value `{v}` for `{section}.{key}`"),
    })
}

macro_rules! take_field {
    ($raw:expr, $cfg:expr, $sec:literal, $key:literal, $field:ident, $ty:ty) => {
        if let Some((line, v)) = $raw.take($sec, $key) {
            $cfg.$field = parse_as::<$ty>($sec, $key, line, &v)?;
        }
    };
}

/// Parse a config text into a fully defaulted [`ExperimentConfig`].
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut raw = RawConfig::parse(text)?;
    let mut cfg = ExperimentConfig::default();

    if let Some((line, v)) = raw.take("experiment", "kind") {
        cfg.kind = ExperimentKind::parse(&v).map_err(|e| at_line(e, line))?;
    }
    take_field!(raw, cfg, "experiment", "base_seed", base_seed, u64);
    take_field!(raw, cfg, "experiment", "trials", trials, usize);
    take_field!(raw, cfg, "experiment", "train_epochs", train_epochs, usize);
    take_field!(raw, cfg, "experiment", "correction_epochs", correction_epochs, usize);
    take_field!(raw, cfg, "experiment", "checkpoint_every", checkpoint_every, usize);
    take_field!(raw, cfg, "experiment", "batch_size", batch_size, usize);
    if let Some((_, v)) = raw.take("experiment", "output_dir") {
        cfg.output_dir = PathBuf::from(v);
    }

    take_field!(raw, cfg, "network", "bits", bits, usize);
    take_field!(raw, cfg, "network", "hidden", hidden, usize);
    if let Some((line, v)) = raw.take("network", "encoding") {
        cfg.encoding = Encoding::parse(&v).map_err(|e| at_line(e, line))?;
    }

    let noise_kind = raw.take("noise", "kind");
    let noise_scale = raw.take("noise", "scale");
    let kind = match &noise_kind {
        Some((line, v)) => NoiseKind::parse(v).map_err(|e| at_line(e, *line))?,
        None => cfg.noise.kind(),
    };
    cfg.noise = match noise_scale {
        Some((line, v)) => {
            let scale = parse_as::<f64>("noise", "scale", line, &v)?;
            NoiseModel::new(kind, scale).map_err(|e| at_line(e, line))?
        }
        None => NoiseModel::normalized(kind),
    };

    if let Some((_, v)) = raw.take("data", "source") {
        cfg.data = DataSource::parse(&v)?;
    }
    take_field!(raw, cfg, "data", "top_words", top_words, usize);

    if let Some((line, v)) = raw.take("estimator", "kind") {
        cfg.estimator = EstimatorKind::parse(&v).map_err(|e| at_line(e, line))?;
    }
    if let Some((line, v)) = raw.take("estimator", "candidates") {
        let mut list = Vec::new();
        for part in v.split(',') {
            list.push(EstimatorKind::parse(part.trim()).map_err(|e| at_line(e, line))?);
        }
        cfg.candidates = list;
    }

    if let Some((line, v)) = raw.take("optim", "kind") {
        cfg.optim_kind = match v.as_str() {
            "sgd" => OptimKind::Sgd,
            "adam" => OptimKind::Adam,
            other => {
                return Err(Error::Config {
                    line: Some(line),
                    msg: format!("unknown optimizer `{other}`"),
                })
            }
        };
    }
    take_field!(raw, cfg, "optim", "lr", lr, f64);
    take_field!(raw, cfg, "optim", "lambda", lambda, f64);
    take_field!(raw, cfg, "optim", "alpha", alpha, f64);
    take_field!(raw, cfg, "optim", "tau", tau, f64);
    take_field!(raw, cfg, "optim", "eps_gs", eps_gs, f64);
    take_field!(raw, cfg, "optim", "N", n_train, f64);

    if let Some((line, v)) = raw.take("estimator", "taus") {
        let mut taus = Vec::new();
        for part in v.split(',') {
            taus.push(parse_as::<f64>("estimator", "taus", line, part.trim())?);
        }
        cfg.taus = taus;
    }
    take_field!(raw, cfg, "estimator", "eta", eta, f64);
    take_field!(raw, cfg, "estimator", "mc_draws", mc_draws, usize);
    take_field!(raw, cfg, "estimator", "threshold_eps", threshold_eps, f64);

    if let Some(((section, key), (line, _))) = raw.entries.into_iter().next() {
        return Err(Error::Config {
            line: Some(line),
            msg: format!("unknown key `{section}.{key}`"),
        });
    }

    validate(&cfg)?;
    Ok(cfg)
}

fn at_line(e: Error, line: usize) -> Error {
    Error::Config { line: Some(line), msg: e.to_string() }
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.trials < 1 {
        return Err(Error::Config { line: None, msg: "trials must be >= 1".into() });
    }
    if cfg.bits == 0 || cfg.hidden == 0 {
        return Err(Error::Config { line: None, msg: "layer sizes must be positive".into() });
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config { line: None, msg: "batch_size must be positive".into() });
    }
    if cfg.bits as u32 > crate::estimators::ENUM_BUDGET_BITS {
        // enumeration-backed experiments must respect the configuration budget
        if matches!(cfg.kind, ExperimentKind::Accuracy) {
            return Err(Error::Config {
                line: None,
                msg: format!(
                    "bits={} exceeds the 2^{} enumeration budget",
                    cfg.bits,
                    crate::estimators::ENUM_BUDGET_BITS
                ),
            });
        }
    }
    Ok(())
}

/// Read a config file, applying the `SBNLAB_OUT` output-dir override.
pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    if let Ok(out) = std::env::var("SBNLAB_OUT") {
        if !out.is_empty() {
            cfg.output_dir = PathBuf::from(out);
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config("[experiment]\nkind = autoenc\n").unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Autoenc);
        assert_eq!(cfg.trials, 100);
        assert_eq!(cfg.bits, 8);
        assert_eq!(cfg.lr, 0.001);
        assert_eq!(cfg.noise.kind(), NoiseKind::Logistic);
        assert_eq!(cfg.noise.scale(), 1.0);
    }

    #[test]
    fn estimator_strings_parse() {
        let cfg =
            parse_config("[experiment]\nkind = autoenc\n[estimator]\nkind = gumbel_softmax(tau=0.5)\n")
                .unwrap();
        assert_eq!(cfg.estimator, EstimatorKind::GumbelSoftmax { tau: 0.5 });
    }

    #[test]
    fn type_error_names_key_and_line() {
        let err = parse_config("[experiment]\nkind = autoenc\n[optim]\nlr = abc\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4"), "{msg}");
        assert!(msg.contains("optim.lr"), "{msg}");
    }

    #[test]
    fn unknown_and_duplicate_keys_are_errors() {
        let err = parse_config("[experiment]\nkind = autoenc\nwhatever = 3\n").unwrap_err();
        assert!(err.to_string().contains("unknown key `experiment.whatever`"));
        let err = parse_config("[experiment]\nkind = autoenc\nkind = verify\n").unwrap_err();
        assert!(err.to_string().contains("duplicate key"));
        let err = parse_config("[nope]\nx = 1\n").unwrap_err();
        assert!(err.to_string().contains("unknown section"));
    }

    #[test]
    fn synthetic_source_parses() {
        let d = DataSource::parse("synthetic(64,500,8,1)").unwrap();
        assert_eq!(d, DataSource::Synthetic { docs: 64, vocab: 500, topics: 8, seed: 1 });
        let d = DataSource::parse("some/where.txt").unwrap();
        assert_eq!(d, DataSource::Path(PathBuf::from("some/where.txt")));
        assert!(DataSource::parse("synthetic(1,2)").is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = parse_config(
            "# heading\n[experiment]\nkind = gumbel  # inline\n\n[estimator]\ntaus = 1, 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Gumbel);
        assert_eq!(cfg.taus, vec![1.0, 0.5]);
    }
}
