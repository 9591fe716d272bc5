use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backend::EncoderBackend;
use super::head::{self, ClassificationHead, HeadGradients, DEFAULT_DROPOUT};
use super::predictions::{PredictionRow, PredictionSet};
use crate::corpus::{Corpus, Label};
use crate::error::{Error, Result};
use crate::folds::FoldPlan;
use crate::metrics;
use crate::preprocess::{truncate_tokens_keep_tail, Cleaner, TokenCounter};
use crate::weights::ClassWeightSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Decays linearly to zero at `max_epochs`.
    LinearDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub schedule: Schedule,
    pub seed: u64,
    pub weights: ClassWeightSpec,
    pub truncation: usize,
    pub dropout_rate: f64,
}

impl TrainConfig {
    /// Defaults for fine-tuning a transformer adapter.
    pub fn transformer(weights: ClassWeightSpec) -> Self {
        TrainConfig {
            learning_rate: 2e-5,
            batch_size: 32,
            max_epochs: 10,
            patience: 2,
            schedule: Schedule::LinearDecay,
            seed: 42,
            weights,
            truncation: 300,
            dropout_rate: DEFAULT_DROPOUT,
        }
    }

    /// Defaults for the built-in hashing backend, where only the linear head
    /// is trained and a much larger step size is appropriate.
    pub fn builtin(weights: ClassWeightSpec) -> Self {
        TrainConfig {
            learning_rate: 1.0,
            max_epochs: 20,
            patience: 5,
            ..Self::transformer(weights)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.truncation == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and truncation must be positive".into(),
            ));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "patience ({}) must be below max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        self.weights.validate()
    }

    fn learning_rate_at(&self, step: usize, total_steps: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::LinearDecay => {
                self.learning_rate * (1.0 - step as f64 / total_steps.max(1) as f64).max(0.0)
            }
        }
    }
}

/// A prepared sample: the model-input text plus grouping and gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub sample_id: String,
    pub dialogue_id: String,
    pub text: String,
    pub label: Option<Label>,
}

/// Builds one example per response (cleaned text when available) under the
/// cleaner's token budget.
pub fn prepare_examples(
    corpus: &Corpus,
    cleaner: &Cleaner,
    tokenizer: &dyn TokenCounter,
) -> Result<Vec<Example>> {
    corpus
        .responses()
        .map(|(d, r)| {
            let input = cleaner.build_model_input(&d.history, r.text(), tokenizer)?;
            Ok(Example {
                sample_id: r.response_id.clone(),
                dialogue_id: d.dialogue_id.clone(),
                text: input.text,
                label: r.label(corpus.track),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Early stopping on a score to maximize: stop once `patience` consecutive
/// epochs fail to beat the best score.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        match self.best {
            Some((_, b)) if score <= b => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, score));
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }

    /// (epoch, score) of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
}

/// Best head of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub fold: usize,
    pub epoch: usize,
    pub best_val_macro_f1: f64,
    pub seed: u64,
    pub truncation: usize,
    pub backend: String,
    pub head: ClassificationHead,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    dim: usize,
    fold: usize,
    epoch: usize,
    best_val_macro_f1: f64,
    seed: u64,
    dropout_rate: f64,
    truncation: usize,
    backend: String,
}

const HEAD_FILE: &str = "head.bin";
const MANIFEST_FILE: &str = "manifest.json";

impl Checkpoint {
    /// Writes `head.bin` (little-endian f64: weights row-major, then bias)
    /// and `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(8 * (self.head.weights().len() + 3));
        for x in self.head.weights().iter().chain(self.head.bias().iter()) {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        crate::io::write_atomic(&dir.join(HEAD_FILE), &bytes)?;
        let manifest = CheckpointManifest {
            dim: self.head.dim(),
            fold: self.fold,
            epoch: self.epoch,
            best_val_macro_f1: self.best_val_macro_f1,
            seed: self.seed,
            dropout_rate: self.head.dropout_rate(),
            truncation: self.truncation,
            backend: self.backend.clone(),
        };
        crate::io::write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m: CheckpointManifest = crate::io::read_json(&dir.join(MANIFEST_FILE))?;
        let path = dir.join(HEAD_FILE);
        let bytes = std::fs::read(&path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let expected = 8 * (3 * m.dim + 3);
        if bytes.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: bytes.len(),
            });
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let (w, b) = vals.split_at(3 * m.dim);
        let head =
            ClassificationHead::from_parts(m.dim, w.to_vec(), [b[0], b[1], b[2]], m.dropout_rate)?;
        Ok(Checkpoint {
            fold: m.fold,
            epoch: m.epoch,
            best_val_macro_f1: m.best_val_macro_f1,
            seed: m.seed,
            truncation: m.truncation,
            backend: m.backend,
            head,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_macro_f1\n");
        for e in &self.log {
            let _ = writeln!(out, "{},{},{}", e.epoch, e.train_loss, e.val_macro_f1);
        }
        out
    }
}

fn encode_all(
    backend: &dyn EncoderBackend,
    examples: &[&Example],
    truncation: usize,
) -> Result<Vec<Vec<f64>>> {
    examples
        .iter()
        .map(|e| {
            let v = backend.encode(&truncate_tokens_keep_tail(&e.text, truncation));
            if v.len() != backend.dim() {
                return Err(Error::DimensionMismatch {
                    expected: backend.dim(),
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!(
                    "backend produced a non-finite embedding for {:?}",
                    e.sample_id
                )));
            }
            Ok(v)
        })
        .collect()
}

fn eval_macro_f1(
    head: &ClassificationHead,
    embeddings: &[Vec<f64>],
    gold: &[Label],
) -> Result<f64> {
    let pred = embeddings
        .iter()
        .map(|h| Ok(head::argmax(&head::softmax(&head.logits(h)?))))
        .collect::<Result<Vec<_>>>()?;
    Ok(metrics::macro_f1(&metrics::confusion_matrix(gold, &pred)?))
}

/// Trains the head of one fold on the dialogues outside validation fold
/// `fold`, keeping the epoch with the best validation macro-F1.
///
/// The RNG for initialization, shuffling and dropout is seeded with
/// `seed + fold`, so folds can run in parallel and reruns are bit-identical.
pub fn train_fold(
    examples: &[Example],
    plan: &FoldPlan,
    fold: usize,
    backend: &mut dyn EncoderBackend,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if fold >= plan.k {
        return Err(Error::InvalidArgument(format!(
            "fold {fold} out of range for k = {}",
            plan.k
        )));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for e in examples {
        let f = plan.fold_of(&e.dialogue_id).ok_or_else(|| {
            Error::Validation(format!("plan does not cover dialogue {:?}", e.dialogue_id))
        })?;
        if e.label.is_none() {
            return Err(Error::Validation(format!(
                "sample {:?} has no gold label",
                e.sample_id
            )));
        }
        if f == fold {
            val.push(e);
        } else {
            train.push(e);
        }
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "fold {fold} has {} training and {} validation samples",
            train.len(),
            val.len()
        )));
    }
    let train_gold: Vec<Label> = train.iter().map(|e| e.label.expect("checked")).collect();
    let val_gold: Vec<Label> = val.iter().map(|e| e.label.expect("checked")).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(fold as u64));
    let dim = backend.dim();
    let mut head = ClassificationHead::init(dim, config.dropout_rate, &mut rng)?;

    let frozen = !backend.trainable();
    let mut train_emb = if frozen {
        Some(encode_all(backend, &train, config.truncation)?)
    } else {
        None
    };
    let mut val_emb = if frozen {
        Some(encode_all(backend, &val, config.truncation)?)
    } else {
        None
    };

    let batches_per_epoch = train.len().div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.max_epochs;
    let mut step = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_head = head.clone();
    let mut log = Vec::new();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let lr = config.learning_rate_at(step, total_steps);
            step += 1;
            let batch_examples: Vec<&Example> = batch.iter().map(|&i| train[i]).collect();
            let fresh;
            let embeddings: Vec<&Vec<f64>> = match &train_emb {
                Some(all) => batch.iter().map(|&i| &all[i]).collect(),
                None => {
                    fresh = encode_all(backend, &batch_examples, config.truncation)?;
                    fresh.iter().collect()
                }
            };
            let mut forwards = Vec::with_capacity(batch.len());
            for h in &embeddings {
                forwards.push(head::forward(&head, h, true, &mut rng)?);
            }
            let logits: Vec<[f64; 3]> = forwards.iter().map(|f| f.logits).collect();
            let gold: Vec<Label> = batch.iter().map(|&i| train_gold[i]).collect();
            let (loss, logit_grads) =
                head::batch_weighted_cross_entropy(&logits, &gold, &config.weights)?;
            loss_sum += loss * batch.len() as f64;

            if !frozen {
                let emb_grads: Vec<Vec<f64>> = forwards
                    .iter()
                    .zip(&logit_grads)
                    .map(|(f, g)| {
                        (0..dim)
                            .map(|j| {
                                f.dropout_scale[j]
                                    * (0..3).map(|c| g[c] * head.row(c)[j]).sum::<f64>()
                            })
                            .collect()
                    })
                    .collect();
                let texts: Vec<String> = batch_examples
                    .iter()
                    .map(|e| truncate_tokens_keep_tail(&e.text, config.truncation))
                    .collect();
                let text_refs: Vec<&str> = texts.iter().map(String::as_str).collect();
                backend.update(&text_refs, &emb_grads, lr)?;
            }

            let mut grads = HeadGradients::zeros(dim);
            for (f, g) in forwards.iter().zip(&logit_grads) {
                grads.accumulate(&f.dropped, g);
            }
            head.apply_gradients(&grads, lr);
        }
        if !frozen {
            train_emb = None;
            val_emb = Some(encode_all(backend, &val, config.truncation)?);
        }
        let val_f1 = eval_macro_f1(&head, val_emb.as_ref().expect("encoded"), &val_gold)?;
        if !frozen {
            val_emb = None;
        }
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_macro_f1: val_f1,
        });
        match stopper.observe(epoch, val_f1) {
            StopDecision::Improved => best_head = head.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }

    let (epoch, best) = stopper.best().expect("at least one epoch ran");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            fold,
            epoch,
            best_val_macro_f1: best,
            seed: config.seed,
            truncation: config.truncation,
            backend: backend.reference(),
            head: best_head,
        },
        log,
    })
}

/// Eval-mode predictions with softmax confidences.
pub fn predict_with_confidence(
    checkpoint: &Checkpoint,
    backend: &dyn EncoderBackend,
    examples: &[Example],
) -> Result<PredictionSet> {
    if backend.dim() != checkpoint.head.dim() {
        return Err(Error::DimensionMismatch {
            expected: checkpoint.head.dim(),
            actual: backend.dim(),
        });
    }
    let refs: Vec<&Example> = examples.iter().collect();
    let embeddings = encode_all(backend, &refs, checkpoint.truncation)?;
    let rows = examples
        .iter()
        .zip(&embeddings)
        .map(|(e, h)| {
            let probs = head::softmax(&checkpoint.head.logits(h)?);
            Ok(PredictionRow {
                sample_id: e.sample_id.clone(),
                label: head::argmax(&probs),
                probs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionSet {
        model_id: checkpoint.fold,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::HashedNgramBackend;
    use crate::desk;
    use crate::folds::grouped_kfold;
    use crate::preprocess::{CleaningConfig, WhitespaceTokenizer};

    fn examples(corpus: &Corpus) -> Vec<Example> {
        let cleaner = CleaningConfig::default().compile().unwrap();
        prepare_examples(corpus, &cleaner, &WhitespaceTokenizer).unwrap()
    }

    #[test]
    fn early_stopping_replay() {
        // Scores per epoch 0.5, 0.6, 0.55, 0.58 with patience 2: epoch 3 and
        // 4 fail to improve on epoch 2, so training stops after epoch 4.
        let mut s = EarlyStopping::new(2);
        let scores = [0.5, 0.6, 0.55, 0.58, 0.9];
        let mut stopped_after = None;
        for (i, &x) in scores.iter().enumerate() {
            if s.observe(i + 1, x) == StopDecision::Stop {
                stopped_after = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_after, Some(4));
        assert_eq!(s.best(), Some((2, 0.6)));
    }

    #[test]
    fn equal_score_is_not_improvement() {
        let mut s = EarlyStopping::new(1);
        assert_eq!(s.observe(1, 0.5), StopDecision::Improved);
        assert_eq!(s.observe(2, 0.5), StopDecision::Stop);
        assert_eq!(s.best(), Some((1, 0.5)));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::builtin(ClassWeightSpec::uniform());
        c.validate().unwrap();
        c.patience = c.max_epochs;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::transformer(ClassWeightSpec::uniform());
        assert_eq!(c.learning_rate, 2e-5);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.patience, 2);
        assert_eq!(c.dropout_rate, 0.1);
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn linear_decay_reaches_zero() {
        let c = TrainConfig::builtin(ClassWeightSpec::uniform());
        assert_eq!(c.learning_rate_at(0, 10), c.learning_rate);
        assert_eq!(c.learning_rate_at(10, 10), 0.0);
        assert!((c.learning_rate_at(5, 10) - c.learning_rate / 2.0).abs() < 1e-15);
    }

    #[test]
    fn deterministic_training() {
        let corpus = desk::separable_corpus(12, 6, 3);
        let ex = examples(&corpus);
        let plan = grouped_kfold(&corpus, 3, 42).unwrap();
        let cfg = TrainConfig::builtin(ClassWeightSpec::uniform());
        let mut b1 = HashedNgramBackend::new(128, 42).unwrap();
        let mut b2 = HashedNgramBackend::new(128, 42).unwrap();
        let a = train_fold(&ex, &plan, 1, &mut b1, &cfg).unwrap();
        let b = train_fold(&ex, &plan, 1, &mut b2, &cfg).unwrap();
        assert_eq!(a, b);
        let best = a.log.iter().map(|e| e.val_macro_f1).fold(0.0, f64::max);
        assert_eq!(a.checkpoint.best_val_macro_f1, best);
    }

    #[test]
    fn separable_corpus_reaches_perfect_f1() {
        let corpus = desk::separable_corpus(15, 6, 11);
        let ex = examples(&corpus);
        let plan = grouped_kfold(&corpus, 5, 42).unwrap();
        let cfg = TrainConfig::builtin(ClassWeightSpec::uniform());
        for fold in 0..5 {
            let mut b = HashedNgramBackend::new(256, 42).unwrap();
            let out = train_fold(&ex, &plan, fold, &mut b, &cfg).unwrap();
            assert_eq!(
                out.checkpoint.best_val_macro_f1, 1.0,
                "fold {fold}: {:?}",
                out.log
            );
        }
    }

    #[test]
    fn empty_validation_split_is_error() {
        let corpus = desk::separable_corpus(4, 3, 0);
        let ex = examples(&corpus);
        let mut plan = grouped_kfold(&corpus, 2, 0).unwrap();
        for f in plan.assignment.values_mut() {
            *f = 0;
        }
        let mut b = HashedNgramBackend::new(16, 0).unwrap();
        let cfg = TrainConfig::builtin(ClassWeightSpec::uniform());
        assert!(train_fold(&ex, &plan, 1, &mut b, &cfg).is_err());
        assert!(train_fold(&ex, &plan, 2, &mut b, &cfg).is_err());
    }

    fn zero_checkpoint(dim: usize) -> Checkpoint {
        Checkpoint {
            fold: 0,
            epoch: 1,
            best_val_macro_f1: 0.0,
            seed: 0,
            truncation: 300,
            backend: "hashed-ngram:dim=8:seed=0".into(),
            head: ClassificationHead::zeros(dim, 0.1).unwrap(),
        }
    }

    fn example(id: &str, text: &str) -> Example {
        Example {
            sample_id: id.into(),
            dialogue_id: "d".into(),
            text: text.into(),
            label: None,
        }
    }

    #[test]
    fn zero_head_predicts_no_with_uniform_probs() {
        let b = HashedNgramBackend::new(8, 0).unwrap();
        let set = predict_with_confidence(
            &zero_checkpoint(8),
            &b,
            &[example("a", "hello"), example("b", "check step two")],
        )
        .unwrap();
        set.validate().unwrap();
        for r in &set.rows {
            assert_eq!(r.label, Label::No);
            assert!(r.probs.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        }
        assert!(predict_with_confidence(&zero_checkpoint(8), &b, &[])
            .unwrap()
            .rows
            .is_empty());
    }

    #[test]
    fn strong_yes_logit() {
        let b = HashedNgramBackend::new(8, 0).unwrap();
        let mut ck = zero_checkpoint(8);
        ck.head.bias_mut()[2] = 5.0;
        let set = predict_with_confidence(&ck, &b, &[example("a", "x")]).unwrap();
        // Oracle: softmax(0, 0, 5)[2] = e^5 / (2 + e^5).
        let expect = 5f64.exp() / (2.0 + 5f64.exp());
        assert_eq!(set.rows[0].label, Label::Yes);
        assert!((set.rows[0].probs[2] - expect).abs() < 1e-15);
        assert!(set.rows[0].probs[2] > 0.9);
    }

    #[test]
    fn dim_mismatch_on_predict() {
        let b = HashedNgramBackend::new(16, 0).unwrap();
        assert!(predict_with_confidence(&zero_checkpoint(8), &b, &[example("a", "x")]).is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let corpus = desk::separable_corpus(6, 3, 1);
        let ex = examples(&corpus);
        let plan = grouped_kfold(&corpus, 2, 0).unwrap();
        let mut b = HashedNgramBackend::new(32, 5).unwrap();
        let out = train_fold(
            &ex,
            &plan,
            0,
            &mut b,
            &TrainConfig::builtin(ClassWeightSpec::uniform()),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        out.checkpoint.save(dir.path()).unwrap();
        assert_eq!(Checkpoint::load(dir.path()).unwrap(), out.checkpoint);
        let bytes = std::fs::read(dir.path().join("head.bin")).unwrap();
        assert_eq!(bytes.len(), 8 * (3 * 32 + 3));
        assert_eq!(
            f64::from_le_bytes(bytes[..8].try_into().unwrap()),
            out.checkpoint.head.weights()[0]
        );
        assert!(out.log_csv().starts_with("epoch,train_loss,val_macro_f1\n"));
    }

    /// Trainable toy backend: a learned per-bucket offset added to a frozen
    /// hashed encoding.
    struct Tunable {
        inner: HashedNgramBackend,
        offset: Vec<f64>,
        updates: usize,
    }

    impl EncoderBackend for Tunable {
        fn name(&self) -> &str {
            "tunable"
        }
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn encode(&self, text: &str) -> Vec<f64> {
            self.inner
                .encode(text)
                .iter()
                .zip(&self.offset)
                .map(|(a, b)| a + b)
                .collect()
        }
        fn trainable(&self) -> bool {
            true
        }
        fn update(&mut self, texts: &[&str], grads: &[Vec<f64>], lr: f64) -> Result<()> {
            assert_eq!(texts.len(), grads.len());
            for g in grads {
                for (o, x) in self.offset.iter_mut().zip(g) {
                    *o -= lr * x;
                }
            }
            self.updates += 1;
            Ok(())
        }
        fn reference(&self) -> String {
            "tunable".into()
        }
    }

    #[test]
    fn trainable_backend_receives_updates() {
        let corpus = desk::separable_corpus(6, 4, 2);
        let ex = examples(&corpus);
        let plan = grouped_kfold(&corpus, 2, 0).unwrap();
        let mut b = Tunable {
            inner: HashedNgramBackend::new(32, 1).unwrap(),
            offset: vec![0.0; 32],
            updates: 0,
        };
        let cfg = TrainConfig {
            max_epochs: 3,
            patience: 2,
            ..TrainConfig::builtin(ClassWeightSpec::uniform())
        };
        let out = train_fold(&ex, &plan, 0, &mut b, &cfg).unwrap();
        assert!(b.updates > 0);
        assert!(b.offset.iter().any(|x| *x != 0.0));
        assert_eq!(out.checkpoint.backend, "tunable");
    }
}
