//! Run configuration: a JSON file merged with command-line flags, flags
//! taking precedence.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use tutorgrade::classify::Schedule;
use tutorgrade::weights::WeightChoice;
use tutorgrade::{ClassWeightSpec, Track, TrainConfig};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_K: usize = 10;
pub const DEFAULT_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Built-in seeded hashing of unigrams and bigrams.
    Hashed,
    /// Fine-tuned transformer encoder (requires an external adapter).
    Transformer,
}

/// Contents of a `--config` file. Every field is optional; relative paths
/// are resolved against the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub corpus: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub workdir: Option<PathBuf>,
    pub cleaning: Option<PathBuf>,
    pub track: Option<Track>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub backend: Option<BackendKind>,
    pub dim: Option<usize>,
    pub weights: Option<WeightChoice>,
    pub jobs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub schedule: Option<Schedule>,
    pub dropout_rate: Option<f64>,
    pub truncation: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut cfg: ConfigFile = serde_json::from_str(&text)
            .with_context(|| format!("invalid config file {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.corpus,
            &mut cfg.test,
            &mut cfg.workdir,
            &mut cfg.cleaning,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for all artifacts [default: work].
    #[arg(long, short = 'w', global = true)]
    pub workdir: Option<PathBuf>,
    /// Annotated JSONL corpus used for cross-validation.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Held-out JSONL corpus to predict with the fold ensemble.
    #[arg(long, global = true)]
    pub test: Option<PathBuf>,
    /// JSON cleaning configuration.
    #[arg(long, global = true)]
    pub cleaning: Option<PathBuf>,
    /// mistake_identification or mistake_location [default: mistake_identification].
    #[arg(long, global = true)]
    pub track: Option<Track>,
    /// Number of cross-validation folds [default: 10].
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Seed for fold assignment, initialization and dropout [default: 42].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, global = true)]
    pub backend: Option<BackendKind>,
    /// Embedding size of the built-in backend [default: 256].
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// balanced, log[:epsilon] or manual:w0,w1,w2 [default: the track's manual vector].
    #[arg(long, global = true)]
    pub weights: Option<WeightChoice>,
    /// Folds trained in parallel [default: 1].
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Step size [default: 1.0 for hashed, 2e-5 for transformer].
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    /// Epoch cap [default: 20 for hashed, 10 for transformer].
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    /// Epochs without validation macro-F1 gain before stopping [default: 5 for hashed, 2 for transformer].
    #[arg(long, global = true)]
    pub patience: Option<usize>,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub workdir: PathBuf,
    pub cleaning: Option<PathBuf>,
    pub track: Track,
    pub k: usize,
    pub seed: u64,
    pub backend: BackendKind,
    pub dim: usize,
    pub weights: WeightChoice,
    pub jobs: usize,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub schedule: Option<Schedule>,
    pub dropout_rate: Option<f64>,
    pub truncation: Option<usize>,
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let track = args
            .track
            .or(file.track)
            .unwrap_or(Track::MistakeIdentification);
        let cfg = RunConfig {
            corpus: args.corpus.clone().or(file.corpus),
            test: args.test.clone().or(file.test),
            workdir: args
                .workdir
                .clone()
                .or(file.workdir)
                .unwrap_or_else(|| "work".into()),
            cleaning: args.cleaning.clone().or(file.cleaning),
            track,
            k: args.k.or(file.k).unwrap_or(DEFAULT_K),
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            backend: args.backend.or(file.backend).unwrap_or(BackendKind::Hashed),
            dim: args.dim.or(file.dim).unwrap_or(DEFAULT_DIM),
            weights: args
                .weights
                .clone()
                .or(file.weights)
                .unwrap_or(WeightChoice::Manual(track.default_manual_weights())),
            jobs: args.jobs.or(file.jobs).unwrap_or(1),
            learning_rate: args.learning_rate.or(file.learning_rate),
            batch_size: file.batch_size,
            max_epochs: args.max_epochs.or(file.max_epochs),
            patience: args.patience.or(file.patience),
            schedule: file.schedule,
            dropout_rate: file.dropout_rate,
            truncation: file.truncation,
        };
        if cfg.jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        Ok(cfg)
    }

    /// Checks that every declared input exists before any work starts.
    pub fn check_inputs(&self, need_corpus: bool) -> Result<()> {
        if need_corpus && self.corpus.is_none() {
            bail!("no corpus given; pass --corpus or set \"corpus\" in the config file");
        }
        for (what, p) in [
            ("corpus", &self.corpus),
            ("test corpus", &self.test),
            ("cleaning config", &self.cleaning),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    bail!("{what} {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    /// Training hyperparameters for the selected backend with overrides
    /// applied.
    pub fn train_config(&self, weights: ClassWeightSpec) -> TrainConfig {
        let mut t = match self.backend {
            BackendKind::Hashed => TrainConfig::builtin(weights),
            BackendKind::Transformer => TrainConfig::transformer(weights),
        };
        t.seed = self.seed;
        if let Some(v) = self.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.max_epochs {
            t.max_epochs = v;
        }
        if let Some(v) = self.patience {
            t.patience = v;
        }
        if let Some(v) = self.schedule {
            t.schedule = v;
        }
        if let Some(v) = self.dropout_rate {
            t.dropout_rate = v;
        }
        if let Some(v) = self.truncation {
            t.truncation = v;
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"corpus": "c.jsonl", "k": 4, "seed": 7, "weights": "balanced", "track": "mistake_location"}"#,
        )
        .unwrap();
        let args = CommonArgs {
            config: Some(path),
            k: Some(6),
            ..CommonArgs::default()
        };
        let cfg = RunConfig::resolve(&args).unwrap();
        assert_eq!(cfg.k, 6);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.weights, WeightChoice::Balanced);
        assert_eq!(cfg.track, Track::MistakeLocation);
        assert_eq!(cfg.corpus.unwrap(), dir.path().join("c.jsonl"));
    }

    #[test]
    fn defaults() {
        let cfg = RunConfig::resolve(&CommonArgs::default()).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.weights, WeightChoice::Manual([1.0, 3.0, 0.5]));
        let t = cfg.train_config(ClassWeightSpec::uniform());
        assert_eq!(t.learning_rate, 1.0);
    }

    #[test]
    fn unknown_config_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"folds": 3}"#).unwrap();
        let args = CommonArgs {
            config: Some(path),
            ..CommonArgs::default()
        };
        assert!(RunConfig::resolve(&args).is_err());
    }

    #[test]
    fn missing_inputs_reported() {
        let cfg = RunConfig::resolve(&CommonArgs {
            corpus: Some("/nonexistent/c.jsonl".into()),
            ..CommonArgs::default()
        })
        .unwrap();
        let err = cfg.check_inputs(true).unwrap_err().to_string();
        assert!(err.contains("does not exist"), "{err}");
    }
}
