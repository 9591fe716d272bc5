//! One function per pipeline stage. Each stage reads only files written by
//! earlier stages or declared inputs, so any stage can be rerun alone.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use tutorgrade::analysis::{
    confidence_stats, error_report, export_embeddings, pca_project, EmbeddingExport, TagRules,
};
use tutorgrade::classify::{
    backend_from_reference, predict_with_confidence, prepare_examples, train_fold, Example,
    PredictionRow, Schedule,
};
use tutorgrade::corpus::load_corpus;
use tutorgrade::ensemble::compare_to_members;
use tutorgrade::io::{write_atomic, write_json};
use tutorgrade::metrics::{aggregate_cv, evaluate, CvAggregate};
use tutorgrade::preprocess::{Cleaner, CleaningConfig, WhitespaceTokenizer};
use tutorgrade::weights::WeightChoice;
use tutorgrade::{
    grouped_kfold, hard_vote, verify_no_leakage, Checkpoint, Corpus, EncoderBackend,
    EnsembleResult, FoldPlan, HashedNgramBackend, Label, LabelCounts, MetricsReport, PredictionSet,
};

use crate::config::{BackendKind, RunConfig};
use crate::layout::{fold_name, Layout};
use crate::manifest::{self, Manifest};

pub const CONFIDENCE_BINS: usize = 10;

/// Runs `f`, prefixing any error with the stage name.
pub fn run_stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().with_context(|| format!("stage `{name}` failed"))
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!(
            "{} not found; run `tutorgrade {producer}` first",
            path.display()
        );
    }
    Ok(())
}

/// Removes a stage-owned output directory so reruns leave no stale files.
fn reset_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).with_context(|| format!("cannot clear {}", dir.display()))?;
    }
    Ok(())
}

fn remove_file_if_exists(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
            Err(anyhow!(e).context(format!("cannot remove {}", path.display())))
        }
        _ => Ok(()),
    }
}

fn load_cleaner(layout: &Layout) -> Result<Cleaner> {
    require(&layout.cleaning_config(), "clean")?;
    Ok(CleaningConfig::load(&layout.cleaning_config())?.compile()?)
}

fn load_cleaned(layout: &Layout, cfg: &RunConfig) -> Result<Corpus> {
    require(&layout.cleaned(), "clean")?;
    let corpus = load_corpus(&layout.cleaned(), cfg.track)?;
    if !corpus.is_annotated() {
        bail!(
            "{} carries no {} labels",
            layout.cleaned().display(),
            cfg.track
        );
    }
    Ok(corpus)
}

fn load_plan(layout: &Layout, corpus: &Corpus) -> Result<FoldPlan> {
    require(&layout.folds(), "split")?;
    let plan = FoldPlan::load(&layout.folds())?;
    let report = verify_no_leakage(&plan, corpus)?;
    if !report.is_clean() {
        bail!(
            "fold plan leaks dialogues across folds:\n{}",
            report.render_table()
        );
    }
    Ok(plan)
}

fn examples_in_fold(examples: &[Example], plan: &FoldPlan, fold: usize) -> Vec<Example> {
    examples
        .iter()
        .filter(|e| plan.fold_of(&e.dialogue_id) == Some(fold))
        .cloned()
        .collect::<Vec<_>>()
}

fn gold_map(corpus: &Corpus) -> BTreeMap<String, Label> {
    corpus
        .responses()
        .filter_map(|(_, r)| r.label(corpus.track).map(|l| (r.response_id.clone(), l)))
        .collect()
}

fn gold_of(
    set_ids: impl Iterator<Item = String>,
    gold: &BTreeMap<String, Label>,
) -> Result<Vec<Label>> {
    set_ids
        .map(|id| {
            gold.get(&id)
                .copied()
                .ok_or_else(|| anyhow!("no gold label for sample {id:?}"))
        })
        .collect()
}

/// Sanitizes the corpus (and the test corpus, if given) and records the
/// effective cleaning configuration for later stages.
pub fn clean(cfg: &RunConfig) -> Result<()> {
    cfg.check_inputs(true)?;
    let layout = Layout::new(&cfg.workdir);
    let cleaning = match &cfg.cleaning {
        Some(p) => CleaningConfig::load(p)?,
        None => CleaningConfig::default(),
    };
    let cleaner = cleaning.compile()?;
    let corpus_path = cfg.corpus.as_ref().expect("checked above");
    let corpus = load_corpus(corpus_path, cfg.track)?;
    let (cleaned, report) = cleaner.clean_corpus(&corpus)?;
    cleaned.save(&layout.cleaned())?;
    write_atomic(&layout.cleaning_report(), report.to_csv().as_bytes())?;
    write_json(&layout.cleaning_config(), &cleaning)?;
    println!(
        "clean: {} dialogues, {} responses, {} rule applications",
        cleaned.num_dialogues(),
        cleaned.num_responses(),
        report.grand_total()
    );
    match &cfg.test {
        Some(p) => {
            let test = load_corpus(p, cfg.track)?;
            let (test_cleaned, _) = cleaner.clean_corpus(&test)?;
            test_cleaned.save(&layout.test_cleaned())?;
            println!(
                "clean: test corpus with {} responses",
                test_cleaned.num_responses()
            );
        }
        None => remove_file_if_exists(&layout.test_cleaned())?,
    }
    Ok(())
}

/// Assigns dialogues to folds and checks the plan for leakage.
pub fn split(cfg: &RunConfig) -> Result<FoldPlan> {
    let layout = Layout::new(&cfg.workdir);
    let corpus = load_cleaned(&layout, cfg)?;
    let plan = grouped_kfold(&corpus, cfg.k, cfg.seed)?;
    let report = verify_no_leakage(&plan, &corpus)?;
    if !report.is_clean() {
        bail!(
            "fold assignment leaks dialogues:\n{}",
            report.render_table()
        );
    }
    plan.save(&layout.folds())?;
    let table = report.render_table();
    write_atomic(&layout.fold_table(), table.as_bytes())?;
    print!("{table}");
    Ok(plan)
}

#[derive(Debug, Serialize)]
struct TrainRecord {
    backend: String,
    weights: WeightChoice,
    learning_rate: f64,
    batch_size: usize,
    max_epochs: usize,
    patience: usize,
    schedule: Schedule,
    seed: u64,
    truncation: usize,
    dropout_rate: f64,
}

fn make_backend(cfg: &RunConfig) -> Result<HashedNgramBackend> {
    match cfg.backend {
        BackendKind::Hashed => Ok(HashedNgramBackend::new(cfg.dim, cfg.seed)?),
        BackendKind::Transformer => bail!(
            "the transformer backend is not available in this build; \
             implement EncoderBackend for it or use --backend hashed"
        ),
    }
}

/// Trains one head per fold, folds fanned out over `--jobs` workers.
pub fn train(cfg: &RunConfig) -> Result<Vec<Checkpoint>> {
    let layout = Layout::new(&cfg.workdir);
    let template = make_backend(cfg)?;
    let cleaner = load_cleaner(&layout)?;
    let corpus = load_cleaned(&layout, cfg)?;
    let plan = load_plan(&layout, &corpus)?;
    let examples = prepare_examples(&corpus, &cleaner, &WhitespaceTokenizer)?;
    reset_dir(&layout.checkpoints())?;

    let probe = cfg.train_config(tutorgrade::ClassWeightSpec::uniform());
    probe.validate()?;
    write_json(
        &layout.train_config(),
        &TrainRecord {
            backend: template.reference(),
            weights: cfg.weights.clone(),
            learning_rate: probe.learning_rate,
            batch_size: probe.batch_size,
            max_epochs: probe.max_epochs,
            patience: probe.patience,
            schedule: probe.schedule,
            seed: probe.seed,
            truncation: probe.truncation,
            dropout_rate: probe.dropout_rate,
        },
    )?;

    let train_one = |fold: usize| -> Result<Checkpoint> {
        let mut counts = [0usize; 3];
        for e in examples
            .iter()
            .filter(|e| plan.fold_of(&e.dialogue_id) != Some(fold))
        {
            if let Some(l) = e.label {
                counts[l.index()] += 1;
            }
        }
        let spec = cfg.weights.resolve(&LabelCounts(counts))?;
        let mut backend = template.clone();
        let outcome = train_fold(
            &examples,
            &plan,
            fold,
            &mut backend,
            &cfg.train_config(spec.clone()),
        )
        .with_context(|| format!("training {}", fold_name(fold)))?;
        outcome.checkpoint.save(&layout.checkpoint(fold))?;
        write_atomic(&layout.train_log(fold), outcome.log_csv().as_bytes())?;
        write_json(&layout.fold_weights(fold), &spec)?;
        Ok(outcome.checkpoint)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("cannot start worker pool")?;
    let checkpoints = pool.install(|| {
        (0..plan.k)
            .into_par_iter()
            .map(train_one)
            .collect::<Result<Vec<_>>>()
    })?;
    for ck in &checkpoints {
        println!(
            "train: {} best epoch {} val macro-F1 {:.4}",
            fold_name(ck.fold),
            ck.epoch,
            ck.best_val_macro_f1
        );
    }
    Ok(checkpoints)
}

fn load_checkpoints(
    layout: &Layout,
    k: usize,
) -> Result<Vec<(Checkpoint, Box<dyn EncoderBackend>)>> {
    (0..k)
        .map(|f| {
            require(&layout.checkpoint(f), "train")?;
            let ck = Checkpoint::load(&layout.checkpoint(f))?;
            let backend = backend_from_reference(&ck.backend)?;
            Ok((ck, backend))
        })
        .collect()
}

/// Writes each fold model's predictions on its validation split and, when a
/// test corpus was cleaned, every fold model's predictions on it.
pub fn predict(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(&cfg.workdir);
    let cleaner = load_cleaner(&layout)?;
    let corpus = load_cleaned(&layout, cfg)?;
    let plan = load_plan(&layout, &corpus)?;
    let examples = prepare_examples(&corpus, &cleaner, &WhitespaceTokenizer)?;
    let models = load_checkpoints(&layout, plan.k)?;
    reset_dir(&layout.root().join("predictions"))?;
    for (f, (ck, backend)) in models.iter().enumerate() {
        let val = examples_in_fold(&examples, &plan, f);
        predict_with_confidence(ck, backend.as_ref(), &val)?.save(&layout.cv_predictions(f))?;
    }
    println!("predict: {} validation prediction files", plan.k);
    if layout.test_cleaned().exists() {
        let test = load_corpus(&layout.test_cleaned(), cfg.track)?;
        let test_examples = prepare_examples(&test, &cleaner, &WhitespaceTokenizer)?;
        for (f, (ck, backend)) in models.iter().enumerate() {
            predict_with_confidence(ck, backend.as_ref(), &test_examples)?
                .save(&layout.test_predictions(f))?;
        }
        println!(
            "predict: {} test responses x {} models",
            test_examples.len(),
            plan.k
        );
    }
    Ok(())
}

fn load_test_sets(layout: &Layout, k: usize) -> Result<Vec<PredictionSet>> {
    (0..k)
        .map(|f| Ok(PredictionSet::load(&layout.test_predictions(f), f)?))
        .collect()
}

/// Hard-vote ensemble of the fold models on the test corpus.
pub fn ensemble(cfg: &RunConfig) -> Result<EnsembleResult> {
    let layout = Layout::new(&cfg.workdir);
    require(&layout.folds(), "split")?;
    let plan = FoldPlan::load(&layout.folds())?;
    if !layout.test_predictions(0).exists() {
        bail!("no test predictions; pass --test to `clean` and rerun `predict`");
    }
    let sets = load_test_sets(&layout, plan.k)?;
    reset_dir(&layout.root().join("ensemble"))?;
    let result = hard_vote(&sets)?;
    result.save(&layout.ensemble())?;
    let ties = result.rows.iter().filter(|r| r.tie_broken).count();
    println!(
        "ensemble: {} members, {} responses, {} vote ties broken by mean probability",
        result.num_models,
        result.rows.len(),
        ties
    );
    let test = load_corpus(&layout.test_cleaned(), cfg.track)?;
    if test.is_annotated() {
        let cmp = compare_to_members(&result, &sets, &gold_map(&test))?;
        write_json(&layout.ensemble_comparison(), &cmp)?;
        println!(
            "ensemble: macro-F1 {:.4} vs mean member {:.4} ({:+.4})",
            cmp.ensemble_macro_f1, cmp.mean_member_macro_f1, cmp.delta
        );
    }
    Ok(result)
}

#[derive(Debug, Serialize)]
struct CvMetrics {
    aggregate: CvAggregate,
    folds: Vec<MetricsReport>,
}

fn write_report(layout: &Layout, stem: &str, report: &MetricsReport) -> Result<()> {
    write_atomic(
        &layout.metrics(&format!("{stem}_confusion.csv")),
        report.confusion.to_csv().as_bytes(),
    )?;
    let mut text = format!(
        "accuracy {:.4}  macro-F1 {:.4}\n{}",
        report.accuracy,
        report.macro_f1,
        report.confusion.render()
    );
    if let Some(l) = &report.lenient {
        text.push_str(&format!(
            "\nlenient: accuracy {:.4}  macro-F1 {:.4}\n{}",
            l.accuracy,
            l.macro_f1,
            l.confusion.render()
        ));
    }
    write_atomic(
        &layout.metrics(&format!("{stem}_confusion.txt")),
        text.as_bytes(),
    )?;
    Ok(())
}

fn load_cv_sets(layout: &Layout, k: usize) -> Result<Vec<PredictionSet>> {
    (0..k)
        .map(|f| {
            require(&layout.cv_predictions(f), "predict")?;
            Ok(PredictionSet::load(&layout.cv_predictions(f), f)?)
        })
        .collect()
}

/// Per-fold, aggregated and pooled cross-validation metrics, plus test
/// metrics for the ensemble when test labels exist.
pub fn evaluate_stage(cfg: &RunConfig) -> Result<CvAggregate> {
    let layout = Layout::new(&cfg.workdir);
    let corpus = load_cleaned(&layout, cfg)?;
    let plan = load_plan(&layout, &corpus)?;
    let gold = gold_map(&corpus);
    let sets = load_cv_sets(&layout, plan.k)?;
    reset_dir(&layout.root().join("metrics"))?;
    let mut reports = Vec::new();
    let (mut pooled_gold, mut pooled_pred) = (Vec::new(), Vec::new());
    for set in &sets {
        let g = gold_of(set.rows.iter().map(|r| r.sample_id.clone()), &gold)?;
        let p = set.labels();
        reports.push(evaluate(&g, &p)?);
        pooled_gold.extend(g);
        pooled_pred.extend(p);
    }
    let aggregate = aggregate_cv(&reports, Some((&pooled_gold, &pooled_pred)))?;
    if let Some(pooled) = &aggregate.pooled {
        write_report(&layout, "cv", pooled)?;
    }
    println!(
        "evaluate: cv macro-F1 {:.4} +/- {:.4} over {} folds, pooled {:.4}",
        aggregate.mean_fold_macro_f1,
        aggregate.std_fold_macro_f1,
        plan.k,
        aggregate.pooled.as_ref().map_or(f64::NAN, |p| p.macro_f1)
    );
    write_json(
        &layout.metrics("cv.json"),
        &CvMetrics {
            aggregate: aggregate.clone(),
            folds: reports,
        },
    )?;
    if layout.ensemble().exists() && layout.test_cleaned().exists() {
        let test = load_corpus(&layout.test_cleaned(), cfg.track)?;
        if test.is_annotated() {
            let result = EnsembleResult::load(&layout.ensemble())?;
            let g = gold_of(
                result.rows.iter().map(|r| r.sample_id.clone()),
                &gold_map(&test),
            )?;
            let report = evaluate(&g, &result.labels())?;
            write_report(&layout, "test", &report)?;
            write_json(&layout.metrics("test.json"), &report)?;
            println!(
                "evaluate: test ensemble macro-F1 {:.4}, lenient {:.4}",
                report.macro_f1,
                report.lenient.as_ref().map_or(f64::NAN, |l| l.macro_f1)
            );
        }
    }
    Ok(aggregate)
}

#[derive(Debug, Serialize)]
struct PcaSummary {
    explained_variance_ratio: Vec<f64>,
}

/// Embedding export with a 2-d projection, confidence statistics and an
/// error report over the pooled validation predictions.
pub fn analyze(cfg: &RunConfig) -> Result<()> {
    let layout = Layout::new(&cfg.workdir);
    let cleaner = load_cleaner(&layout)?;
    let corpus = load_cleaned(&layout, cfg)?;
    let plan = load_plan(&layout, &corpus)?;
    let examples = prepare_examples(&corpus, &cleaner, &WhitespaceTokenizer)?;
    let models = load_checkpoints(&layout, plan.k)?;
    let sets = load_cv_sets(&layout, plan.k)?;
    reset_dir(&layout.root().join("analysis"))?;

    let mut export = EmbeddingExport::default();
    for (f, (ck, backend)) in models.iter().enumerate() {
        let val = examples_in_fold(&examples, &plan, f);
        export
            .rows
            .extend(export_embeddings(&[(ck, backend.as_ref())], &val)?.rows);
    }
    export.save(&layout.analysis("embeddings.csv"))?;
    let projection = pca_project(&export, 2.min(export.dim()))?;
    write_atomic(&layout.analysis("pca.csv"), projection.to_csv().as_bytes())?;
    write_json(
        &layout.analysis("pca.json"),
        &PcaSummary {
            explained_variance_ratio: projection.explained_variance_ratio.clone(),
        },
    )?;

    let pooled = PredictionSet {
        model_id: 0,
        rows: sets
            .iter()
            .flat_map(|s| s.rows.iter().cloned())
            .collect::<Vec<PredictionRow>>(),
    };
    let stats = confidence_stats(&pooled, CONFIDENCE_BINS)?;
    write_json(&layout.analysis("confidence_cv.json"), &stats)?;
    write_atomic(
        &layout.analysis("confidence_cv.txt"),
        stats.render().as_bytes(),
    )?;
    if layout.ensemble().exists() {
        let result = EnsembleResult::load(&layout.ensemble())?;
        let stats = confidence_stats(&result, CONFIDENCE_BINS)?;
        write_json(&layout.analysis("confidence_test.json"), &stats)?;
        write_atomic(
            &layout.analysis("confidence_test.txt"),
            stats.render().as_bytes(),
        )?;
    }

    let texts: BTreeMap<&str, &str> = corpus
        .responses()
        .map(|(_, r)| (r.response_id.as_str(), r.text()))
        .collect();
    let gold = gold_map(&corpus);
    let g = gold_of(pooled.rows.iter().map(|r| r.sample_id.clone()), &gold)?;
    let samples: Vec<(String, String)> = pooled
        .rows
        .iter()
        .map(|r| (r.sample_id.clone(), texts[r.sample_id.as_str()].to_string()))
        .collect();
    let errors = error_report(&g, &pooled.labels(), &samples, &TagRules::default())?;
    write_json(&layout.analysis("errors.json"), &errors)?;
    println!(
        "analyze: {} embedding rows, {} misclassified validation responses",
        export.rows.len(),
        errors.len()
    );
    Ok(())
}

/// Every stage in order, then the content-hash manifest.
pub fn pipeline(cfg: &RunConfig) -> Result<Manifest> {
    cfg.check_inputs(true)?;
    let layout = Layout::new(&cfg.workdir);
    remove_file_if_exists(&layout.manifest())?;
    run_stage("clean", || clean(cfg))?;
    run_stage("split", || split(cfg))?;
    run_stage("train", || train(cfg))?;
    run_stage("predict", || predict(cfg))?;
    if cfg.test.is_some() {
        run_stage("ensemble", || ensemble(cfg))?;
    } else {
        reset_dir(&layout.root().join("ensemble"))?;
    }
    run_stage("evaluate", || evaluate_stage(cfg))?;
    run_stage("analyze", || analyze(cfg))?;
    run_stage("manifest", || {
        let m = manifest::build(layout.root(), &layout.manifest())?;
        write_json(&layout.manifest(), &m)?;
        println!("manifest: {} artifacts", m.artifacts.len());
        Ok(m)
    })
}
