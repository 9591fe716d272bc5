//! Analysis artifacts: pooled-embedding exports with a PCA projection,
//! prediction-confidence statistics and misclassification reports tagged
//! with an error taxonomy.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::classify::{self, Checkpoint, EncoderBackend, Example, PredictionSet};
use crate::corpus::Label;
use crate::ensemble::EnsembleResult;
use crate::error::{Error, Result};
use crate::preprocess::truncate_tokens_keep_tail;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub sample_id: String,
    pub fold: usize,
    pub gold: Option<Label>,
    pub pred: Label,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmbeddingExport {
    pub rows: Vec<EmbeddingRow>,
}

/// One row per (sample, fold model): the encoder representation the head
/// saw plus that model's prediction.
pub fn export_embeddings(
    models: &[(&Checkpoint, &dyn EncoderBackend)],
    examples: &[Example],
) -> Result<EmbeddingExport> {
    let mut rows = Vec::with_capacity(models.len() * examples.len());
    for (ck, backend) in models {
        if backend.dim() != ck.head.dim() {
            return Err(Error::DimensionMismatch {
                expected: ck.head.dim(),
                actual: backend.dim(),
            });
        }
        for e in examples {
            let h = backend.encode(&truncate_tokens_keep_tail(&e.text, ck.truncation));
            let pred = classify::argmax(&classify::softmax(&ck.head.logits(&h)?));
            rows.push(EmbeddingRow {
                sample_id: e.sample_id.clone(),
                fold: ck.fold,
                gold: e.label,
                pred,
                embedding: h,
            });
        }
    }
    Ok(EmbeddingExport { rows })
}

impl EmbeddingExport {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.embedding.len())
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        for r in &self.rows {
            if r.embedding.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.embedding.len(),
                });
            }
            if r.embedding.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite embedding for {:?}",
                    r.sample_id
                )));
            }
        }
        Ok(())
    }

    /// CSV with header `sample_id,fold,gold,pred,e0..e{dim-1}`; folds are
    /// written 1-based, an unknown gold label as an empty field.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "sample_id".to_string(),
            "fold".into(),
            "gold".into(),
            "pred".into(),
        ];
        header.extend((0..self.dim()).map(|i| format!("e{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.sample_id.clone(),
                (r.fold + 1).to_string(),
                r.gold.map_or(String::new(), |g| g.as_str().to_string()),
                r.pred.as_str().to_string(),
            ];
            rec.extend(r.embedding.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.into_inner()
            .map_err(|e| Error::io("flushing embedding CSV", e.into_error()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_csv()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.len() < 4
            || headers
                .iter()
                .take(4)
                .ne(["sample_id", "fold", "gold", "pred"])
        {
            return Err(Error::Validation(format!(
                "{}: not an embedding export",
                path.display()
            )));
        }
        let bad = |what: &str| Error::Validation(format!("{}: bad {what}", path.display()));
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let fold: usize = rec[1].parse().map_err(|_| bad("fold"))?;
            rows.push(EmbeddingRow {
                sample_id: rec[0].to_string(),
                fold: fold.checked_sub(1).ok_or_else(|| bad("fold"))?,
                gold: if rec[2].is_empty() {
                    None
                } else {
                    Some(rec[2].parse()?)
                },
                pred: rec[3].parse()?,
                embedding: rec
                    .iter()
                    .skip(4)
                    .map(|x| x.parse::<f64>().map_err(|_| bad("embedding value")))
                    .collect::<Result<_>>()?,
            });
        }
        let export = EmbeddingExport { rows };
        export.validate()?;
        Ok(export)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedRow {
    pub sample_id: String,
    pub fold: usize,
    pub gold: Option<Label>,
    pub pred: Label,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub mean: Vec<f64>,
    /// Principal directions, one unit vector per output dimension.
    pub components: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
    pub rows: Vec<ProjectedRow>,
}

impl Projection {
    /// Maps projected coordinates back into embedding space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, comp) in coords.iter().zip(&self.components) {
            for (o, v) in out.iter_mut().zip(comp) {
                *o += c * v;
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,fold,gold,pred");
        for i in 0..self.components.len() {
            out.push_str(&format!(",pc{}", i + 1));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                r.sample_id,
                r.fold + 1,
                r.gold.map_or("", |g| g.as_str()),
                r.pred.as_str()
            ));
            for c in &r.coords {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Mean-centered projection onto the top `dims` principal directions. Each
/// direction's sign is fixed so that its largest-magnitude loading is
/// positive.
pub fn pca_project(export: &EmbeddingExport, dims: usize) -> Result<Projection> {
    export.validate()?;
    let n = export.rows.len();
    let d = export.dim();
    if n < 2 {
        return Err(Error::InvalidArgument("PCA needs at least two rows".into()));
    }
    if dims == 0 || dims > d {
        return Err(Error::InvalidArgument(format!(
            "cannot project {d}-d data onto {dims} dims"
        )));
    }
    let mut mean = vec![0.0; d];
    for r in &export.rows {
        for (m, x) in mean.iter_mut().zip(&r.embedding) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| export.rows[i].embedding[j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let total_var = cov.trace();
    if total_var <= f64::EPSILON * d as f64 {
        return Err(Error::Numeric(
            "embeddings have rank 0 (all rows identical)".into(),
        ));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(dims);
    let mut ratios = Vec::with_capacity(dims);
    for &k in order.iter().take(dims) {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, x)| x)
            .unwrap_or(1.0);
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        ratios.push(eig.eigenvalues[k].max(0.0) / total_var);
        components.push(v);
    }

    let rows = export
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| ProjectedRow {
            sample_id: r.sample_id.clone(),
            fold: r.fold,
            gold: r.gold,
            pred: r.pred,
            coords: components
                .iter()
                .map(|c| (0..d).map(|j| centered[(i, j)] * c[j]).sum())
                .collect(),
        })
        .collect();
    Ok(Projection {
        mean,
        components,
        explained_variance_ratio: ratios,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub count: usize,
}

/// Quantile by linear interpolation between closest ranks (`pos = q * (n-1)`)
/// of a sorted, non-empty slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(BoxStats {
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[v.len() - 1],
        count: v.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceStats {
    pub histogram: Histogram,
    pub overall: BoxStats,
    pub per_class_box: BTreeMap<String, BoxStats>,
}

/// Anything carrying a predicted label and a probability vector per sample.
pub trait ConfidenceSource {
    fn confidences(&self) -> Vec<(Label, f64)>;
}

impl ConfidenceSource for PredictionSet {
    fn confidences(&self) -> Vec<(Label, f64)> {
        self.rows
            .iter()
            .map(|r| (r.label, r.probs.iter().copied().fold(0.0, f64::max)))
            .collect()
    }
}

impl ConfidenceSource for EnsembleResult {
    fn confidences(&self) -> Vec<(Label, f64)> {
        self.rows
            .iter()
            .map(|r| (r.label, r.mean_probs.iter().copied().fold(0.0, f64::max)))
            .collect()
    }
}

/// Histogram of max-probability confidence over `[1/3, 1]` and box
/// statistics per predicted label.
pub fn confidence_stats(source: &dyn ConfidenceSource, bins: usize) -> Result<ConfidenceStats> {
    let conf = source.confidences();
    if conf.is_empty() {
        return Err(Error::InvalidArgument("no predictions".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument(
            "histogram needs at least one bin".into(),
        ));
    }
    let lo = 1.0 / 3.0;
    let width = (1.0 - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for &(_, c) in &conf {
        let idx = (((c - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let values: Vec<f64> = conf.iter().map(|(_, c)| *c).collect();
    let mut per_class_box = BTreeMap::new();
    for l in Label::ALL {
        let v: Vec<f64> = conf
            .iter()
            .filter(|(p, _)| *p == l)
            .map(|(_, c)| *c)
            .collect();
        if !v.is_empty() {
            per_class_box.insert(l.as_str().to_string(), box_stats(&v)?);
        }
    }
    Ok(ConfidenceStats {
        histogram: Histogram { edges, counts },
        overall: box_stats(&values)?,
        per_class_box,
    })
}

impl ConfidenceStats {
    pub fn render(&self) -> String {
        let mut out = String::from("confidence histogram\n");
        let max = self
            .histogram
            .counts
            .iter()
            .copied()
            .max()
            .unwrap_or(0)
            .max(1);
        for (i, c) in self.histogram.counts.iter().enumerate() {
            let bar = "#".repeat((c * 40).div_ceil(max));
            out.push_str(&format!(
                "[{:.3}, {:.3}) {:>6} {}\n",
                self.histogram.edges[i],
                self.histogram.edges[i + 1],
                c,
                bar
            ));
        }
        out.push_str("\nper predicted class: min q1 median q3 max (n)\n");
        for (l, b) in &self.per_class_box {
            out.push_str(&format!(
                "{l:>15}: {:.3} {:.3} {:.3} {:.3} {:.3} ({})\n",
                b.min, b.q1, b.median, b.q3, b.max, b.count
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorTag {
    FalseNegativeMissedSignal,
    FalsePositiveOverinterpretation,
    PartialFullConfusion,
    HedgedLanguageConfusion,
    ContextualMiss,
    TemplateBias,
}

/// Surface-pattern heuristics for suggesting taxonomy tags. Lexicon entries
/// match case-insensitively on word boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TagRules {
    pub hedge_lexicon: Vec<String>,
    pub praise_lexicon: Vec<String>,
    pub context_lexicon: Vec<String>,
}

impl Default for TagRules {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        TagRules {
            hedge_lexicon: v(&[
                "maybe",
                "perhaps",
                "might",
                "possibly",
                "could you",
                "can you",
                "let's",
            ]),
            praise_lexicon: v(&[
                "great work",
                "good job",
                "well done",
                "excellent",
                "nice work",
                "great job",
            ]),
            context_lexicon: v(&[
                "earlier",
                "previous",
                "before",
                "first step",
                "last step",
                "above",
            ]),
        }
    }
}

struct CompiledRules {
    hedge: Option<Regex>,
    praise: Option<Regex>,
    context: Option<Regex>,
}

fn lexicon_regex(words: &[String]) -> Result<Option<Regex>> {
    if words.is_empty() {
        return Ok(None);
    }
    let alts = words
        .iter()
        .map(|w| regex::escape(w))
        .collect::<Vec<_>>()
        .join("|");
    Regex::new(&format!(r"(?i)\b(?:{alts})\b"))
        .map(Some)
        .map_err(|e| Error::Config(format!("tag lexicon: {e}")))
}

impl TagRules {
    fn compile(&self) -> Result<CompiledRules> {
        Ok(CompiledRules {
            hedge: lexicon_regex(&self.hedge_lexicon)?,
            praise: lexicon_regex(&self.praise_lexicon)?,
            context: lexicon_regex(&self.context_lexicon)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub sample_id: String,
    pub gold: Label,
    pub predicted: Label,
    pub text: String,
    pub tags: Vec<ErrorTag>,
}

fn has(re: &Option<Regex>, text: &str) -> bool {
    re.as_ref().is_some_and(|r| r.is_match(text))
}

/// One record per misclassified sample with advisory taxonomy tags.
///
/// Structural tags: a gold *Yes* predicted lower is a missed signal, a gold
/// *No* predicted *Yes* an over-interpretation, and any Yes/To-some-extent
/// swap a partial-full confusion. Lexical tags come from `rules`: hedging
/// words, references to earlier context, and praise templates on a
/// predicted *Yes*.
pub fn error_report(
    gold: &[Label],
    predicted: &[Label],
    samples: &[(String, String)],
    rules: &TagRules,
) -> Result<Vec<ErrorRecord>> {
    if gold.len() != predicted.len() || gold.len() != samples.len() {
        return Err(Error::InvalidArgument(format!(
            "misaligned inputs: {} gold, {} predicted, {} samples",
            gold.len(),
            predicted.len(),
            samples.len()
        )));
    }
    let rules = rules.compile()?;
    let mut out = Vec::new();
    for ((&g, &p), (id, text)) in gold.iter().zip(predicted).zip(samples) {
        if g == p {
            continue;
        }
        let mut tags = Vec::new();
        if g == Label::Yes {
            tags.push(ErrorTag::FalseNegativeMissedSignal);
        }
        if g == Label::No && p == Label::Yes {
            tags.push(ErrorTag::FalsePositiveOverinterpretation);
        }
        if matches!(
            (g, p),
            (Label::Yes, Label::ToSomeExtent) | (Label::ToSomeExtent, Label::Yes)
        ) {
            tags.push(ErrorTag::PartialFullConfusion);
        }
        if has(&rules.hedge, text) {
            tags.push(ErrorTag::HedgedLanguageConfusion);
        }
        if has(&rules.context, text) {
            tags.push(ErrorTag::ContextualMiss);
        }
        if p == Label::Yes && has(&rules.praise, text) {
            tags.push(ErrorTag::TemplateBias);
        }
        out.push(ErrorRecord {
            sample_id: id.clone(),
            gold: g,
            predicted: p,
            text: text.clone(),
            tags,
        });
    }
    Ok(out)
}
