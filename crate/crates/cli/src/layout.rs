//! Paths of every artifact inside a workdir.

use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

/// 1-based, zero-padded fold directory name.
pub fn fold_name(fold: usize) -> String {
    format!("fold-{:02}", fold + 1)
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cleaned(&self) -> PathBuf {
        self.root.join("cleaned.jsonl")
    }

    pub fn cleaning_report(&self) -> PathBuf {
        self.root.join("cleaning_report.csv")
    }

    pub fn cleaning_config(&self) -> PathBuf {
        self.root.join("cleaning_config.json")
    }

    pub fn test_cleaned(&self) -> PathBuf {
        self.root.join("test_cleaned.jsonl")
    }

    pub fn folds(&self) -> PathBuf {
        self.root.join("folds.json")
    }

    pub fn fold_table(&self) -> PathBuf {
        self.root.join("folds.txt")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn train_config(&self) -> PathBuf {
        self.checkpoints().join("train_config.json")
    }

    pub fn checkpoint(&self, fold: usize) -> PathBuf {
        self.checkpoints().join(fold_name(fold))
    }

    pub fn train_log(&self, fold: usize) -> PathBuf {
        self.checkpoint(fold).join("train_log.csv")
    }

    pub fn fold_weights(&self, fold: usize) -> PathBuf {
        self.checkpoint(fold).join("weights.json")
    }

    pub fn cv_predictions(&self, fold: usize) -> PathBuf {
        self.root
            .join("predictions/cv")
            .join(format!("{}.csv", fold_name(fold)))
    }

    pub fn test_predictions(&self, fold: usize) -> PathBuf {
        self.root
            .join("predictions/test")
            .join(format!("{}.csv", fold_name(fold)))
    }

    pub fn ensemble(&self) -> PathBuf {
        self.root.join("ensemble/test.csv")
    }

    pub fn ensemble_comparison(&self) -> PathBuf {
        self.root.join("ensemble/comparison.json")
    }

    pub fn metrics(&self, name: &str) -> PathBuf {
        self.root.join("metrics").join(name)
    }

    pub fn analysis(&self, name: &str) -> PathBuf {
        self.root.join("analysis").join(name)
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}
