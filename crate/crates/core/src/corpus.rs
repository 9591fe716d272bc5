//! Data model for annotated tutoring dialogues and the line-delimited corpus
//! format.
//!
//! One dialogue per line:
//!
//! ```json
//! {"dialogue_id":"d1","history":[{"speaker":"student","text":"..."}],
//!  "responses":[{"response_id":"r1","tutor_source":"GPT-4","text":"...",
//!                "labels":{"mistake_identification":"Yes"}}]}
//! ```
//!
//! Responses may additionally carry a `cleaned_text` field once they have
//! gone through the sanitization stage.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::ops::{Index, IndexMut};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three annotation categories, in canonical index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    No = 0,
    ToSomeExtent = 1,
    Yes = 2,
}

impl Label {
    pub const COUNT: usize = 3;
    pub const ALL: [Label; 3] = [Label::No, Label::ToSomeExtent, Label::Yes];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    /// The exact annotation string used in corpus files.
    pub fn as_str(self) -> &'static str {
        match self {
            Label::No => "No",
            Label::ToSomeExtent => "To some extent",
            Label::Yes => "Yes",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_lowercase();
        match norm.as_str() {
            "no" => Ok(Label::No),
            "to some extent" => Ok(Label::ToSomeExtent),
            "yes" => Ok(Label::Yes),
            _ => Err(Error::Validation(format!("unknown label {s:?}"))),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Annotation track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    MistakeIdentification,
    MistakeLocation,
}

impl Track {
    pub const ALL: [Track; 2] = [Track::MistakeIdentification, Track::MistakeLocation];

    pub fn as_str(self) -> &'static str {
        match self {
            Track::MistakeIdentification => "mistake_identification",
            Track::MistakeLocation => "mistake_location",
        }
    }

    /// Hand-tuned class weights used for the submitted systems.
    pub fn default_manual_weights(self) -> [f64; 3] {
        match self {
            Track::MistakeIdentification => [1.0, 3.0, 0.5],
            Track::MistakeLocation => [0.8, 2.2, 0.9],
        }
    }
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Track {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "mistake_identification" | "1" | "track1" => Ok(Track::MistakeIdentification),
            "mistake_location" | "2" | "track2" => Ok(Track::MistakeLocation),
            _ => Err(Error::Validation(format!("unknown track {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Student,
    Tutor,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Student => "student",
            Speaker::Tutor => "tutor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TutorResponse {
    pub response_id: String,
    pub tutor_source: String,
    pub raw_text: String,
    pub cleaned_text: Option<String>,
    pub labels: BTreeMap<Track, Label>,
}

impl TutorResponse {
    /// Cleaned text when available, raw text otherwise.
    pub fn text(&self) -> &str {
        self.cleaned_text.as_deref().unwrap_or(&self.raw_text)
    }

    pub fn label(&self, track: Track) -> Option<Label> {
        self.labels.get(&track).copied()
    }
}

impl PartialOrd for Track {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Track {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.as_str().cmp(other.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub history: Vec<Turn>,
    pub responses: Vec<TutorResponse>,
}

/// A validated collection of dialogues viewed through one annotation track.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
    pub track: Track,
    annotated: bool,
}

/// Per-label counts indexed by [`Label`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts(pub [usize; 3]);

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

impl Index<Label> for LabelCounts {
    type Output = usize;
    fn index(&self, l: Label) -> &usize {
        &self.0[l.index()]
    }
}

impl IndexMut<Label> for LabelCounts {
    fn index_mut(&mut self, l: Label) -> &mut usize {
        &mut self.0[l.index()]
    }
}

// On-disk records. Labels are kept as strings here so that unknown values
// surface as validation errors rather than parse errors.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DialogueRecord {
    dialogue_id: String,
    history: Vec<Turn>,
    responses: Vec<ResponseRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseRecord {
    response_id: String,
    tutor_source: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cleaned_text: Option<String>,
    #[serde(default)]
    labels: BTreeMap<String, String>,
}

impl Corpus {
    /// Validates `dialogues` and wraps them. Annotated iff every response
    /// carries a label for `track`; a partially labeled corpus is rejected.
    pub fn new(dialogues: Vec<Dialogue>, track: Track) -> Result<Self> {
        let mut dialogue_ids = HashSet::new();
        let mut response_ids = HashSet::new();
        let mut labeled = 0usize;
        let mut total = 0usize;
        for d in &dialogues {
            if !dialogue_ids.insert(d.dialogue_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate dialogue_id {:?}",
                    d.dialogue_id
                )));
            }
            if d.history.is_empty() {
                return Err(Error::Validation(format!(
                    "dialogue {:?} has an empty history",
                    d.dialogue_id
                )));
            }
            if d.responses.is_empty() {
                return Err(Error::Validation(format!(
                    "dialogue {:?} has no responses",
                    d.dialogue_id
                )));
            }
            if let Some(i) = d.history.iter().position(|t| t.text.trim().is_empty()) {
                return Err(Error::Validation(format!(
                    "dialogue {:?}: history turn {i} is empty",
                    d.dialogue_id
                )));
            }
            for r in &d.responses {
                if !response_ids.insert(r.response_id.as_str()) {
                    return Err(Error::Validation(format!(
                        "duplicate response_id {:?}",
                        r.response_id
                    )));
                }
                total += 1;
                if r.labels.contains_key(&track) {
                    labeled += 1;
                }
            }
        }
        if labeled != 0 && labeled != total {
            return Err(Error::Validation(format!(
                "{labeled} of {total} responses carry a {track} label; expected all or none"
            )));
        }
        Ok(Corpus {
            dialogues,
            track,
            annotated: total > 0 && labeled == total,
        })
    }

    pub fn is_annotated(&self) -> bool {
        self.annotated
    }

    pub fn num_dialogues(&self) -> usize {
        self.dialogues.len()
    }

    pub fn num_responses(&self) -> usize {
        self.dialogues.iter().map(|d| d.responses.len()).sum()
    }

    /// All responses in corpus order, paired with their dialogue.
    pub fn responses(&self) -> impl Iterator<Item = (&Dialogue, &TutorResponse)> {
        self.dialogues
            .iter()
            .flat_map(|d| d.responses.iter().map(move |r| (d, r)))
    }

    /// Gold label of every response for the active track, in corpus order.
    pub fn gold_labels(&self) -> Result<Vec<Label>> {
        if !self.annotated {
            return Err(Error::Validation(format!(
                "corpus is not annotated for {}",
                self.track
            )));
        }
        Ok(self
            .responses()
            .map(|(_, r)| r.labels[&self.track])
            .collect())
    }

    pub fn parse_jsonl(text: &str, track: Track, origin: &Path) -> Result<Self> {
        let mut dialogues = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: DialogueRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            dialogues.push(rec.into_dialogue().map_err(|e| match e {
                Error::Validation(m) => Error::Validation(format!("line {}: {m}", i + 1)),
                other => other,
            })?);
        }
        Corpus::new(dialogues, track)
    }

    /// Canonical serialization: one record per line, fixed field order,
    /// canonical label strings.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.dialogues {
            let rec = DialogueRecord::from_dialogue(d);
            out.push_str(&serde_json::to_string(&rec).expect("corpus records always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_jsonl().as_bytes())
    }
}

impl DialogueRecord {
    fn into_dialogue(self) -> Result<Dialogue> {
        let responses = self
            .responses
            .into_iter()
            .map(|r| {
                let labels = r
                    .labels
                    .iter()
                    .map(|(k, v)| Ok((k.parse::<Track>()?, v.parse::<Label>()?)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                Ok(TutorResponse {
                    response_id: r.response_id,
                    tutor_source: r.tutor_source,
                    raw_text: r.text,
                    cleaned_text: r.cleaned_text,
                    labels,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dialogue {
            dialogue_id: self.dialogue_id,
            history: self.history,
            responses,
        })
    }

    fn from_dialogue(d: &Dialogue) -> Self {
        DialogueRecord {
            dialogue_id: d.dialogue_id.clone(),
            history: d.history.clone(),
            responses: d
                .responses
                .iter()
                .map(|r| ResponseRecord {
                    response_id: r.response_id.clone(),
                    tutor_source: r.tutor_source.clone(),
                    text: r.raw_text.clone(),
                    cleaned_text: r.cleaned_text.clone(),
                    labels: r
                        .labels
                        .iter()
                        .map(|(k, v)| (k.as_str().to_string(), v.as_str().to_string()))
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Reads and validates a corpus file.
pub fn load_corpus(path: &Path, track: Track) -> Result<Corpus> {
    let text = crate::io::read_to_string(path)?;
    Corpus::parse_jsonl(&text, track, path)
}

/// Counts gold labels of the active track.
pub fn label_distribution(corpus: &Corpus) -> Result<LabelCounts> {
    let mut counts = LabelCounts::default();
    for l in corpus.gold_labels()? {
        counts[l] += 1;
    }
    Ok(counts)
}
