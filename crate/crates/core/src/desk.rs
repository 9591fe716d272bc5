//! Seeded synthetic corpora for tests, benchmarks and the bundled desk-scale
//! example data. Nothing here is real annotation data.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Dialogue, Label, Speaker, Track, Turn, TutorResponse};
use crate::preprocess::CleaningConfig;

pub const TUTOR_SOURCES: [&str; 8] = [
    "Phi3",
    "Mistral",
    "Llama-3.1-8B",
    "Llama-3.1-405B",
    "GPT-4",
    "Gemini",
    "Sonnet",
    "Expert",
];

fn turn(speaker: Speaker, text: impl Into<String>) -> Turn {
    Turn {
        speaker,
        text: text.into(),
    }
}

fn response(id: String, source: &str, text: String, labels: &[(Track, Label)]) -> TutorResponse {
    TutorResponse {
        response_id: id,
        tutor_source: source.to_string(),
        raw_text: text,
        cleaned_text: None,
        labels: labels.iter().copied().collect::<BTreeMap<_, _>>(),
    }
}

fn build(dialogues: Vec<Dialogue>, track: Track) -> Corpus {
    Corpus::new(dialogues, track).expect("generated corpus is valid")
}

/// `n` dialogues with `per` responses each and random labels on both
/// tracks.
pub fn uniform_corpus(n: usize, per: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dialogues = (0..n)
        .map(|d| Dialogue {
            dialogue_id: format!("d{d:04}"),
            history: vec![turn(
                Speaker::Student,
                format!("my answer is {}", rng.gen_range(0..100)),
            )],
            responses: (0..per)
                .map(|r| {
                    let l1 = Label::ALL[rng.gen_range(0..3)];
                    let l2 = Label::ALL[rng.gen_range(0..3)];
                    response(
                        format!("d{d:04}-r{r}"),
                        TUTOR_SOURCES[r % TUTOR_SOURCES.len()],
                        format!("response {r} to dialogue {d}"),
                        &[
                            (Track::MistakeIdentification, l1),
                            (Track::MistakeLocation, l2),
                        ],
                    )
                })
                .collect(),
        })
        .collect();
    build(dialogues, Track::MistakeIdentification)
}

/// Dialogues of varying size (`1..=max_per` responses each).
pub fn ragged_corpus(n: usize, max_per: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dialogues = (0..n)
        .map(|d| {
            let per = rng.gen_range(1..=max_per);
            Dialogue {
                dialogue_id: format!("g{d:04}"),
                history: vec![turn(Speaker::Tutor, "what is 6 x 7?")],
                responses: (0..per)
                    .map(|r| {
                        response(
                            format!("g{d:04}-{r}"),
                            "GPT-4",
                            "check again".into(),
                            &[(
                                Track::MistakeIdentification,
                                Label::ALL[rng.gen_range(0..3)],
                            )],
                        )
                    })
                    .collect(),
            }
        })
        .collect();
    build(dialogues, Track::MistakeIdentification)
}

/// Class counts of the shared-task development data per track.
pub fn shared_task_label_counts(track: Track) -> [usize; 3] {
    match track {
        Track::MistakeIdentification => [370, 174, 1932],
        Track::MistakeLocation => [732, 240, 1504],
    }
}

/// 300 dialogues and 2,476 responses (76 dialogues of 9, 224 of 8) whose
/// labels reproduce the published class counts of both tracks. Texts are
/// placeholders.
pub fn shared_task_corpus(track: Track, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: Vec<Vec<Label>> = Track::ALL
        .iter()
        .map(|&t| {
            let c = shared_task_label_counts(t);
            let mut v: Vec<Label> = Label::ALL
                .iter()
                .flat_map(|&l| std::iter::repeat_n(l, c[l.index()]))
                .collect();
            v.shuffle(&mut rng);
            v
        })
        .collect();
    let mut dialogues = Vec::with_capacity(300);
    for d in 0..300 {
        let per = if d < 76 { 9 } else { 8 };
        let responses = (0..per)
            .map(|r| {
                let l1 = pools[0].pop().expect("enough labels");
                let l2 = pools[1].pop().expect("enough labels");
                response(
                    format!("p{d:03}-{r}"),
                    TUTOR_SOURCES[r % TUTOR_SOURCES.len()],
                    format!("tutor reply {r}"),
                    &[
                        (Track::MistakeIdentification, l1),
                        (Track::MistakeLocation, l2),
                    ],
                )
            })
            .collect();
        dialogues.push(Dialogue {
            dialogue_id: format!("p{d:03}"),
            history: vec![turn(Speaker::Student, "i got 12")],
            responses,
        });
    }
    build(dialogues, track)
}

/// Each class uses its own vocabulary, so a linear head over hashed n-grams
/// separates the classes by construction. Labels cycle so every dialogue
/// holds every class when `per >= 3`.
pub fn separable_corpus(n: usize, per: usize, seed: u64) -> Corpus {
    const VOCAB: [[&str; 4]; 3] = [
        ["wonderful", "onward", "celebrate", "flawless"],
        ["hmm", "perhaps", "wonder", "unsure"],
        ["mistake", "incorrect", "error", "wrong"],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dialogues = (0..n)
        .map(|d| Dialogue {
            dialogue_id: format!("s{d:03}"),
            history: vec![turn(Speaker::Student, "the answer is 41")],
            responses: (0..per)
                .map(|r| {
                    let label = Label::ALL[(d + r) % 3];
                    let words = &VOCAB[label.index()];
                    let text = (0..3)
                        .map(|_| *words.choose(&mut rng).expect("non-empty"))
                        .collect::<Vec<_>>()
                        .join(" ");
                    response(
                        format!("s{d:03}-{r}"),
                        TUTOR_SOURCES[r % TUTOR_SOURCES.len()],
                        text,
                        &[
                            (Track::MistakeIdentification, label),
                            (Track::MistakeLocation, label),
                        ],
                    )
                })
                .collect(),
        })
        .collect();
    build(dialogues, Track::MistakeIdentification)
}

struct Template {
    text: &'static str,
    identification: Label,
    location: Label,
    weight: u32,
}

const TEMPLATES: [Template; 9] = [
    Template {
        text: "There is a mistake in step {n}: {a} {sym} {b} is not {wrong}. Please redo the {op}.",
        identification: Label::Yes,
        location: Label::Yes,
        weight: 6,
    },
    Template {
        text: "You made an error when you did the {op} in step {n}.",
        identification: Label::Yes,
        location: Label::Yes,
        weight: 5,
    },
    Template {
        text: "Your answer {wrong} is wrong. Can you redo it?",
        identification: Label::Yes,
        location: Label::ToSomeExtent,
        weight: 4,
    },
    Template {
        text: "That is not quite right. Let's look at it together again.",
        identification: Label::Yes,
        location: Label::No,
        weight: 4,
    },
    Template {
        text: "Hmm, are you sure about {wrong}? Maybe check it once more.",
        identification: Label::ToSomeExtent,
        location: Label::No,
        weight: 2,
    },
    Template {
        text: "Maybe revisit the {op} in step {n}?",
        identification: Label::ToSomeExtent,
        location: Label::ToSomeExtent,
        weight: 2,
    },
    Template {
        text: "Great work! Let's try another one.",
        identification: Label::No,
        location: Label::No,
        weight: 2,
    },
    Template {
        text: "Can you tell me how you got {wrong}?",
        identification: Label::No,
        location: Label::No,
        weight: 2,
    },
    Template {
        text: "Good effort. Now explain your reasoning for step {n}.",
        identification: Label::No,
        location: Label::ToSomeExtent,
        weight: 1,
    },
];

const OPS: [(&str, &str); 4] = [
    ("multiplication", "x"),
    ("addition", "+"),
    ("subtraction", "-"),
    ("division", "/"),
];

fn fill(template: &str, vars: &[(&str, String)]) -> String {
    vars.iter().fold(template.to_string(), |t, (k, v)| {
        t.replace(&format!("{{{k}}}"), v)
    })
}

/// Desk-scale tutoring corpus: `n` dialogues with one response from each of
/// the eight tutor sources, labeled on both tracks from templated replies.
/// Some responses carry the artifacts the cleaning rules target.
pub fn desk_corpus(n: usize, seed: u64) -> Corpus {
    desk_corpus_with_prefix("desk", n, seed)
}

/// [`desk_corpus`] with dialogue ids `{prefix}00`, `{prefix}01`, ...
pub fn desk_corpus_with_prefix(prefix: &str, n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total_weight: u32 = TEMPLATES.iter().map(|t| t.weight).sum();
    let dialogues = (0..n)
        .map(|d| {
            let (op, sym) = OPS[rng.gen_range(0..OPS.len())];
            let b = rng.gen_range(2..12);
            let a = if sym == "/" {
                b * rng.gen_range(2..10)
            } else {
                rng.gen_range(b..20)
            };
            let correct = match sym {
                "x" => a * b,
                "+" => a + b,
                "-" => a - b,
                _ => a / b,
            };
            let wrong = correct + rng.gen_range(1..5);
            let step = rng.gen_range(1..4);
            let mut history = Vec::new();
            if rng.gen_bool(0.5) {
                history.push(turn(Speaker::Tutor, "Hi there, how are you today?"));
                history.push(turn(Speaker::Student, "Hello! I am good."));
            }
            history.push(turn(
                Speaker::Tutor,
                format!("Can you work out {a} {sym} {b} for me?"),
            ));
            history.push(turn(
                Speaker::Student,
                format!("In step {step} I did the {op} and I got {wrong}."),
            ));
            let vars = [
                ("n", step.to_string()),
                ("a", a.to_string()),
                ("b", b.to_string()),
                ("sym", sym.to_string()),
                ("op", op.to_string()),
                ("wrong", wrong.to_string()),
            ];
            let responses = TUTOR_SOURCES
                .iter()
                .enumerate()
                .map(|(r, source)| {
                    let mut pick = rng.gen_range(0..total_weight);
                    let t = TEMPLATES
                        .iter()
                        .find(|t| {
                            if pick < t.weight {
                                true
                            } else {
                                pick -= t.weight;
                                false
                            }
                        })
                        .expect("weights cover range");
                    let mut text = fill(t.text, &vars);
                    match rng.gen_range(0..12) {
                        0 => text.push_str("\nStudent: Oh, I see now."),
                        1 => text = format!("\"{text}"),
                        2 => text.push_str("!!!"),
                        3 => text.push_str(&format!(
                            "\n```python\nprint({a} {} {b})\n```",
                            if sym == "x" { "*" } else { sym }
                        )),
                        _ => {}
                    }
                    response(
                        format!("{prefix}{d:02}-{r}"),
                        source,
                        text,
                        &[
                            (Track::MistakeIdentification, t.identification),
                            (Track::MistakeLocation, t.location),
                        ],
                    )
                })
                .collect();
            Dialogue {
                dialogue_id: format!("{prefix}{d:02}"),
                history,
                responses,
            }
        })
        .collect();
    build(dialogues, Track::MistakeIdentification)
}

/// Per-source counts of responses that need each cleaning rule, in rule
/// order (extra info, appended dialogue, code, punctuation).
pub const CLEANING_TABLE: [(&str, [usize; 4]); 5] = [
    ("Phi3", [1, 19, 2, 3]),
    ("Mistral", [0, 0, 0, 2]),
    ("Llama-3.1-8B", [1, 0, 0, 0]),
    ("Llama-3.1-405B", [11, 0, 0, 0]),
    ("GPT-4", [1, 0, 0, 0]),
];

/// A corpus in which exactly the responses listed in [`CLEANING_TABLE`]
/// carry one artifact each, mixed with clean responses, together with the
/// cleaning config whose extra-info pattern matches the metadata tags.
pub fn cleaning_table_corpus(seed: u64) -> (Corpus, CleaningConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items: Vec<(&str, String)> = Vec::new();
    for (source, counts) in CLEANING_TABLE {
        for (rule, &count) in counts.iter().enumerate() {
            for i in 0..count {
                let text = match rule {
                    0 => format!("[meta: draft {i}] Check step {} again.", i % 3 + 1),
                    1 => format!("Good try. Student: Thanks, what about question {i}?"),
                    2 => format!("Try this:\n```python\nx = {i} * 4\n```\nWhat do you get?"),
                    _ => format!("Look at step {} again!!!!", i + 1),
                };
                items.push((source, text));
            }
        }
        for i in 0..4 {
            items.push((
                source,
                format!("Nice attempt, check your work on part {i}."),
            ));
        }
    }
    items.shuffle(&mut rng);
    let dialogues = items
        .chunks(6)
        .enumerate()
        .map(|(d, chunk)| Dialogue {
            dialogue_id: format!("c{d:03}"),
            history: vec![turn(Speaker::Student, "i think it is 15")],
            responses: chunk
                .iter()
                .enumerate()
                .map(|(r, (source, text))| {
                    response(
                        format!("c{d:03}-{r}"),
                        source,
                        text.clone(),
                        &[(Track::MistakeIdentification, Label::Yes)],
                    )
                })
                .collect(),
        })
        .collect();
    let config = CleaningConfig {
        extra_info_patterns: vec![r"\[meta:[^\]]*\]".to_string()],
        ..CleaningConfig::default()
    };
    (build(dialogues, Track::MistakeIdentification), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::label_distribution;

    #[test]
    fn shared_task_corpus_counts() {
        for track in Track::ALL {
            let c = shared_task_corpus(track, 0);
            assert_eq!(c.num_dialogues(), 300);
            assert_eq!(c.num_responses(), 2476);
            assert_eq!(
                label_distribution(&c).unwrap().0,
                shared_task_label_counts(track)
            );
        }
    }

    #[test]
    fn desk_corpus_shape() {
        let c = desk_corpus(30, 42);
        assert_eq!(c.num_dialogues(), 30);
        assert_eq!(c.num_responses(), 240);
        let dist = label_distribution(&c).unwrap();
        assert!(Label::ALL.iter().all(|&l| dist[l] > 0));
        assert_eq!(desk_corpus(30, 42), c);
    }

    #[test]
    fn cleaning_table_corpus_is_valid() {
        let (c, cfg) = cleaning_table_corpus(0);
        assert_eq!(c.num_responses(), 40 + 5 * 4);
        assert_eq!(cfg.extra_info_patterns.len(), 1);
    }
}
