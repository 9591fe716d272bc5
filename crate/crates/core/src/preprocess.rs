//! Sanitization of tutor responses and construction of model inputs.
//!
//! Cleaning runs four rule categories followed by lowercasing:
//! extra-info removal, appended-dialogue trimming, code abstraction and
//! punctuation cleanup. Each rule reports whether it changed the text so
//! that per-source frequencies can be tabulated in a [`CleaningReport`].

use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Turn, TutorResponse};
use crate::error::{Error, Result};

pub const CODE_PLACEHOLDER: &str = "<<python code>>";
pub const SEPARATOR: &str = "[SEP]";

/// Hard cap on cleaning passes; every rule shrinks or preserves the text so
/// a fixpoint is normally reached after one or two.
const MAX_CLEANING_PASSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CleaningRule {
    ExtraInfoRemoval,
    AppendedDialogueTrimming,
    CodeAbstraction,
    PunctuationCleanup,
}

impl CleaningRule {
    pub const ALL: [CleaningRule; 4] = [
        CleaningRule::ExtraInfoRemoval,
        CleaningRule::AppendedDialogueTrimming,
        CleaningRule::CodeAbstraction,
        CleaningRule::PunctuationCleanup,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn display_name(self) -> &'static str {
        match self {
            CleaningRule::ExtraInfoRemoval => "Extra Info",
            CleaningRule::AppendedDialogueTrimming => "Appended Dialogue Trimming",
            CleaningRule::CodeAbstraction => "Code Abstraction",
            CleaningRule::PunctuationCleanup => "Punctuation Cleanup",
        }
    }
}

/// On-disk cleaning configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    pub extra_info_patterns: Vec<String>,
    pub dialogue_markers: Vec<String>,
    pub greeting_lexicon: Vec<String>,
    pub budget: usize,
    pub train_truncation: usize,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            extra_info_patterns: Vec::new(),
            dialogue_markers: vec!["student:".into(), "tutor:".into(), "user:".into()],
            greeting_lexicon: [
                "hi",
                "hello",
                "hey",
                "good morning",
                "good afternoon",
                "good evening",
                "how are you",
                "nice to meet you",
                "thanks",
                "thank you",
                "bye",
                "goodbye",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            budget: 512,
            train_truncation: 300,
        }
    }
}

impl CleaningConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Compiles the configured patterns.
    pub fn compile(&self) -> Result<Cleaner> {
        let extra_info = compile_patterns(&self.extra_info_patterns)?;
        let markers = if self.dialogue_markers.is_empty() {
            None
        } else {
            let alts = self
                .dialogue_markers
                .iter()
                .map(|m| regex::escape(m.trim()))
                .collect::<Vec<_>>()
                .join("|");
            // A marker counts when it starts a line or follows a sentence end.
            let pat = format!(r"(?:\n[ \t]*|[.!?][ \t]+)(?:{alts})");
            Some(
                RegexBuilder::new(&pat)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| Error::Config(format!("dialogue marker: {e}")))?,
            )
        };
        if self.budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        Ok(Cleaner {
            extra_info,
            markers,
            greeting_lexicon: self
                .greeting_lexicon
                .iter()
                .map(|g| normalize_words(g))
                .filter(|g| !g.is_empty())
                .collect(),
            budget: self.budget,
        })
    }
}

/// Compiles extra-info removal patterns, reporting the first invalid one.
pub fn compile_patterns(patterns: &[String]) -> Result<Vec<Regex>> {
    patterns
        .iter()
        .map(|p| Regex::new(p).map_err(|e| Error::Config(format!("pattern {p:?}: {e}"))))
        .collect()
}

/// Compiled cleaning configuration.
#[derive(Debug, Clone)]
pub struct Cleaner {
    extra_info: Vec<Regex>,
    markers: Option<Regex>,
    greeting_lexicon: Vec<String>,
    budget: usize,
}

impl Cleaner {
    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn greeting_lexicon(&self) -> &[String] {
        &self.greeting_lexicon
    }

    /// Runs the rule chain to a fixpoint and returns the cleaned text with
    /// the rules that fired, in canonical rule order.
    pub fn clean_text(&self, raw: &str) -> (String, Vec<CleaningRule>) {
        let mut fired = [false; 4];
        let mut text = raw.to_string();
        for _ in 0..MAX_CLEANING_PASSES {
            let before = text.clone();
            let (t, a) = strip_extra_info(&text, &self.extra_info);
            fired[0] |= a;
            let (t, a) = self.trim_appended(&t);
            fired[1] |= a;
            let (t, a) = abstract_code_blocks(&t);
            fired[2] |= a;
            let (t, a) = cleanup_punctuation(&t);
            fired[3] |= a;
            text = lowercase_preserving_punct(&t);
            if text == before {
                break;
            }
        }
        let rules = CleaningRule::ALL
            .iter()
            .copied()
            .filter(|r| fired[r.index()])
            .collect();
        (text, rules)
    }

    fn trim_appended(&self, text: &str) -> (String, bool) {
        match &self.markers {
            Some(re) => trim_with(re, text),
            None => (text.to_string(), false),
        }
    }

    /// Sets `cleaned_text` on a copy of `resp`.
    pub fn clean_response(&self, resp: &TutorResponse) -> (TutorResponse, Vec<CleaningRule>) {
        let (cleaned, rules) = self.clean_text(&resp.raw_text);
        let mut out = resp.clone();
        out.cleaned_text = Some(cleaned);
        (out, rules)
    }

    /// Cleans every response of a corpus, accumulating the report in corpus
    /// order.
    pub fn clean_corpus(&self, corpus: &Corpus) -> Result<(Corpus, CleaningReport)> {
        let mut report = CleaningReport::default();
        let mut dialogues = corpus.dialogues.clone();
        for d in &mut dialogues {
            for r in &mut d.responses {
                let (cleaned, rules) = self.clean_response(r);
                report.record(&r.tutor_source, &rules);
                *r = cleaned;
            }
        }
        Ok((Corpus::new(dialogues, corpus.track)?, report))
    }

    /// Builds the model input for one response under the configured budget.
    pub fn build_model_input(
        &self,
        history: &[Turn],
        cleaned: &str,
        tokenizer: &dyn TokenCounter,
    ) -> Result<ModelInput> {
        build_model_input(
            history,
            cleaned,
            tokenizer,
            self.budget,
            &self.greeting_lexicon,
        )
    }
}

/// Lowercases every cased character; digits and punctuation pass through.
pub fn lowercase_preserving_punct(text: &str) -> String {
    text.to_lowercase()
}

fn code_line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^(?:[ ]{4}|\t)\s*(?:def\s+\w+\s*\(|class\s+\w+|import\s+\w|from\s+[\w.]+\s+import\s|return\b|for\s+\w+\s+in\s|while\s|if\s.*:\s*$|print\s*\(|[A-Za-z_]\w*(?:\[[^\]]*\])?\s*[-+*/]?=[^=])",
        )
        .expect("static regex")
    })
}

fn fence_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Unterminated fences run to the end of the text.
    RE.get_or_init(|| Regex::new(r"(?s)```.*?(?:```|\z)").expect("static regex"))
}

/// Replaces fenced code blocks, and runs of two or more indented code-like
/// lines, with [`CODE_PLACEHOLDER`].
pub fn abstract_code_blocks(text: &str) -> (String, bool) {
    let mut applied = false;
    let fenced = fence_regex().replace_all(text, |_: &regex::Captures| {
        applied = true;
        CODE_PLACEHOLDER
    });

    let lines: Vec<&str> = fenced.split('\n').collect();
    let is_code: Vec<bool> = lines
        .iter()
        .map(|l| code_line_regex().is_match(l))
        .collect();
    let mut out: Vec<&str> = Vec::with_capacity(lines.len());
    let mut i = 0;
    while i < lines.len() {
        if is_code[i] {
            let start = i;
            while i < lines.len() && is_code[i] {
                i += 1;
            }
            if i - start >= 2 {
                out.push(CODE_PLACEHOLDER);
                applied = true;
            } else {
                out.push(lines[start]);
            }
        } else {
            out.push(lines[i]);
            i += 1;
        }
    }
    (out.join("\n"), applied)
}

fn trim_with(markers: &Regex, text: &str) -> (String, bool) {
    let Some(m) = markers.find(text) else {
        return (text.to_string(), false);
    };
    // Keep sentence-ending punctuation that introduced the marker.
    let cut = match text[m.start()..].chars().next() {
        Some(c) if matches!(c, '.' | '!' | '?') => m.start() + c.len_utf8(),
        _ => m.start(),
    };
    let kept = text[..cut].trim_end();
    if kept.trim().is_empty() {
        return (text.to_string(), false);
    }
    (kept.to_string(), true)
}

/// Removes everything from the first appended speaker turn onward, using the
/// default markers (`student:`, `tutor:`, `user:`).
pub fn trim_appended_dialogue(text: &str) -> (String, bool) {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        CleaningConfig::default()
            .compile()
            .expect("default config compiles")
            .markers
            .expect("default markers")
    });
    trim_with(re, text)
}

/// Removes all matches of `patterns`, collapsing the horizontal whitespace
/// around each removal to at most one space.
pub fn strip_extra_info(text: &str, patterns: &[Regex]) -> (String, bool) {
    let mut current = text.to_string();
    let mut applied = false;
    // Removing one match can expose another; iterate to a fixpoint.
    loop {
        let mut changed = false;
        for re in patterns {
            if !re.is_match(&current) {
                continue;
            }
            let mut out = String::with_capacity(current.len());
            let mut last = 0;
            for m in re.find_iter(&current) {
                if m.start() == m.end() {
                    continue;
                }
                out.push_str(&current[last..m.start()]);
                let trimmed_len = out.trim_end_matches([' ', '\t']).len();
                let mut spaced = trimmed_len < out.len();
                out.truncate(trimmed_len);
                let rest = current[m.end()..].trim_start_matches([' ', '\t']);
                spaced |= rest.len() < current.len() - m.end();
                last = current.len() - rest.len();
                if spaced
                    && !out.is_empty()
                    && !out.ends_with('\n')
                    && !rest.is_empty()
                    && !rest.starts_with('\n')
                {
                    out.push(' ');
                }
                changed = true;
            }
            out.push_str(&current[last..]);
            current = out;
        }
        if !changed {
            break;
        }
        applied = true;
    }
    if applied {
        current = current.trim().to_string();
    }
    (current, applied)
}

const QUOTES: [char; 3] = ['"', '\u{201C}', '\u{201D}'];

fn is_collapsible_punct(c: char) -> bool {
    (c.is_ascii_punctuation() && c != '`') || matches!(c, '\u{2013}' | '\u{2014}' | '\u{2026}')
}

/// Collapses runs of three or more identical punctuation marks to a single
/// mark and strips an unmatched leading or trailing quote.
pub fn cleanup_punctuation(text: &str) -> (String, bool) {
    let chars: Vec<char> = text.chars().collect();
    let mut collapsed = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let mut j = i + 1;
        while j < chars.len() && chars[j] == c {
            j += 1;
        }
        if is_collapsible_punct(c) && j - i >= 3 {
            collapsed.push(c);
        } else {
            collapsed.extend(&chars[i..j]);
        }
        i = j;
    }

    let quote_count = collapsed.chars().filter(|c| QUOTES.contains(c)).count();
    let mut out = collapsed.as_str();
    if quote_count % 2 == 1 {
        let t = out.trim();
        let mut chars = t.chars();
        match (chars.next(), chars.next_back()) {
            (Some(first), _) if QUOTES.contains(&first) => out = t[first.len_utf8()..].trim(),
            (_, Some(last)) if QUOTES.contains(&last) => {
                out = t[..t.len() - last.len_utf8()].trim()
            }
            _ => {}
        }
    }
    let applied = out != text;
    (out.to_string(), applied)
}

/// Counts tokens under the active backend's tokenization.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Whitespace tokenization, used with the built-in hashing backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl TokenCounter for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Keeps the last `max_tokens` whitespace tokens of `text`, so that the
/// response at the end of a model input survives truncation.
pub fn truncate_tokens_keep_tail(text: &str, max_tokens: usize) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() <= max_tokens {
        return text.to_string();
    }
    tokens[tokens.len() - max_tokens..].join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInput {
    pub text: String,
    pub token_count: usize,
    pub pruned_turns: usize,
}

fn render_input(history: &[(String, &Turn)], kept: &[bool], response: &str) -> String {
    let mut parts: Vec<String> = history
        .iter()
        .zip(kept)
        .filter(|(_, k)| **k)
        .map(|((text, turn), _)| format!("{}: {}", turn.speaker.as_str(), text))
        .collect();
    parts.push(response.to_string());
    parts.join(&format!(" {SEPARATOR} "))
}

fn normalize_words(s: &str) -> String {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Small talk: a short turn containing a greeting-lexicon phrase as whole
/// words.
pub fn is_small_talk(text: &str, lexicon: &[String]) -> bool {
    let norm = normalize_words(text);
    if norm.split(' ').count() > 8 {
        return false;
    }
    let padded = format!(" {norm} ");
    lexicon.iter().any(|g| padded.contains(&format!(" {g} ")))
}

/// Concatenates speaker-prefixed (lowercased) history turns and the cleaned
/// response with separators. When the result exceeds `budget` tokens, whole
/// history turns are pruned one at a time: small-talk turns first, then the
/// earliest remaining turn.
pub fn build_model_input(
    history: &[Turn],
    cleaned: &str,
    tokenizer: &dyn TokenCounter,
    budget: usize,
    greeting_lexicon: &[String],
) -> Result<ModelInput> {
    let response_only = tokenizer.count(cleaned);
    if response_only > budget {
        return Err(Error::InvalidArgument(format!(
            "response alone has {response_only} tokens, budget is {budget}"
        )));
    }
    let lowered: Vec<(String, &Turn)> = history
        .iter()
        .map(|t| (lowercase_preserving_punct(&t.text), t))
        .collect();
    let mut kept = vec![true; lowered.len()];
    let mut text = render_input(&lowered, &kept, cleaned);
    let mut count = tokenizer.count(&text);
    let mut pruned = 0;
    while count > budget {
        let victim = (0..kept.len())
            .find(|&i| kept[i] && is_small_talk(&lowered[i].0, greeting_lexicon))
            .or_else(|| kept.iter().position(|&k| k))
            .expect("response fits, so some turn remains while over budget");
        kept[victim] = false;
        pruned += 1;
        text = render_input(&lowered, &kept, cleaned);
        count = tokenizer.count(&text);
    }
    Ok(ModelInput {
        text,
        token_count: count,
        pruned_turns: pruned,
    })
}

/// Per tutor source, how many responses each rule changed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    /// Sources in first-seen corpus order with per-rule counts.
    pub counts: Vec<(String, [usize; 4])>,
}

impl CleaningReport {
    pub fn record(&mut self, source: &str, rules: &[CleaningRule]) {
        let idx = match self.counts.iter().position(|(s, _)| s == source) {
            Some(i) => i,
            None => {
                self.counts.push((source.to_string(), [0; 4]));
                self.counts.len() - 1
            }
        };
        for r in rules {
            self.counts[idx].1[r.index()] += 1;
        }
    }

    pub fn count(&self, source: &str, rule: CleaningRule) -> usize {
        self.counts
            .iter()
            .find(|(s, _)| s == source)
            .map_or(0, |(_, c)| c[rule.index()])
    }

    pub fn source_total(&self, source: &str) -> usize {
        self.counts
            .iter()
            .find(|(s, _)| s == source)
            .map_or(0, |(_, c)| c.iter().sum())
    }

    pub fn rule_total(&self, rule: CleaningRule) -> usize {
        self.counts.iter().map(|(_, c)| c[rule.index()]).sum()
    }

    pub fn grand_total(&self) -> usize {
        self.counts
            .iter()
            .map(|(_, c)| c.iter().sum::<usize>())
            .sum()
    }

    /// Rule rows by source columns, with a totals column and a totals row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category");
        for (s, _) in &self.counts {
            out.push(',');
            out.push_str(&csv_field(s));
        }
        out.push_str(",total\n");
        for rule in CleaningRule::ALL {
            out.push_str(rule.display_name());
            for (_, c) in &self.counts {
                let _ = write!(out, ",{}", c[rule.index()]);
            }
            let _ = writeln!(out, ",{}", self.rule_total(rule));
        }
        out.push_str("Totals");
        for (s, _) in &self.counts {
            let _ = write!(out, ",{}", self.source_total(s));
        }
        let _ = writeln!(out, ",{}", self.grand_total());
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
