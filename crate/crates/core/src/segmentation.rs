//! Sentence segmentation.
//!
//! The builtin backend is a small rule engine keyed by script: terminal
//! punctuation ends a sentence, optionally followed by closing quotes and
//! brackets. Latin-script rules additionally require trailing whitespace and
//! guard a list of common abbreviations. Any other segmenter can be plugged
//! in as an external process that reads the document on stdin and writes one
//! sentence per line.
//!
//! All offsets are character (not byte) offsets into the NFC-normalized
//! document, see [`normalize`].

use std::collections::HashMap;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::{Error, Result};

/// Terminators that end a sentence regardless of what follows.
const CJK_TERMINALS: &[char] = &['。', '！', '？', '｡'];
const LATIN_TERMINALS: &[char] = &['.', '!', '?', '…'];
const CLOSERS: &[char] = &[
    '"', '\'', '”', '’', '»', ')', ']', '}', '」', '』', '》', '〉', '）', '】',
];
const OPENERS: &[char] = &['"', '\'', '“', '‘', '«', '(', '[', '{'];

/// Lowercased tokens that end in a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "e.g", "i.e", "cf", "fig", "figs",
    "vol", "approx", "dept", "est", "gen", "gov", "sen", "rep", "lt", "col", "capt", "sgt", "mt",
    "ft", "inc", "ltd", "corp", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept",
    "oct", "nov", "dec", "a.m", "p.m", "u.s", "u.k",
];

/// A segmented document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceList {
    pub doc_id: String,
    pub language: String,
    pub sentences: Vec<String>,
    /// `[start, end)` character offsets into the normalized document.
    pub spans: Vec<(usize, usize)>,
}

impl SentenceList {
    /// Builds a list from already-split sentences, as if they had been
    /// written out separated by single spaces.
    pub fn from_sentences<S: Into<String>>(
        language: &str,
        sentences: impl IntoIterator<Item = S>,
    ) -> Self {
        let mut spans = Vec::new();
        let mut out = Vec::new();
        let mut offset = 0;
        for s in sentences {
            let s = s.into();
            let len = s.chars().count();
            spans.push((offset, offset + len));
            offset += len + 1;
            out.push(s);
        }
        Self {
            doc_id: String::new(),
            language: language.to_string(),
            sentences: out,
            spans,
        }
    }

    pub fn with_doc_id(mut self, doc_id: impl Into<String>) -> Self {
        self.doc_id = doc_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(String::as_str)
    }

    /// Checks the list against the normalized document it was cut from.
    pub fn validate(&self, normalized: &str) -> Result<()> {
        if self.sentences.len() != self.spans.len() {
            return Err(Error::InvalidInput(format!(
                "{} sentences but {} spans",
                self.sentences.len(),
                self.spans.len()
            )));
        }
        let chars: Vec<char> = normalized.chars().collect();
        let mut prev_end = 0;
        for (i, (sentence, &(start, end))) in self.sentences.iter().zip(&self.spans).enumerate() {
            if start >= end || end > chars.len() || (i > 0 && start < prev_end) {
                return Err(Error::InvalidInput(format!(
                    "span {i} ({start}, {end}) out of order"
                )));
            }
            let slice: String = chars[start..end].iter().collect();
            if slice.trim() != sentence || sentence.trim().is_empty() {
                return Err(Error::InvalidInput(format!(
                    "sentence {i} does not match its span"
                )));
            }
            prev_end = end;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SegmenterBackend {
    #[default]
    BuiltinRules,
    External,
}

/// Script-level rule sets for the builtin backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleSet {
    Latin,
    Cjk,
}

impl std::str::FromStr for RuleSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "latin" => Ok(RuleSet::Latin),
            "cjk" => Ok(RuleSet::Cjk),
            other => Err(Error::InvalidInput(format!("unknown rule set `{other}`"))),
        }
    }
}

impl RuleSet {
    /// Rule set for a BCP-47-style code. Unknown languages use Latin rules.
    pub fn for_language(language: &str) -> Self {
        match primary_subtag(language).as_str() {
            "zh" | "ja" | "yue" | "wuu" | "lzh" => RuleSet::Cjk,
            _ => RuleSet::Latin,
        }
    }
}

fn primary_subtag(language: &str) -> String {
    language
        .split(['-', '_'])
        .next()
        .unwrap_or_default()
        .to_ascii_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub backend: SegmenterBackend,
    /// Shell command for the external backend. `{lang}` is replaced with
    /// the document language.
    pub external_command: Option<String>,
    /// Language code (or primary subtag) to rule set name.
    pub language_overrides: HashMap<String, RuleSet>,
    #[serde(with = "duration_secs")]
    pub external_timeout: Duration,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            backend: SegmenterBackend::BuiltinRules,
            external_command: None,
            language_overrides: HashMap::new(),
            external_timeout: Duration::from_secs(60),
        }
    }
}

impl SegmenterConfig {
    pub fn external(command: impl Into<String>) -> Self {
        Self {
            backend: SegmenterBackend::External,
            external_command: Some(command.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.backend == SegmenterBackend::External && self.external_command.is_none() {
            return Err(Error::InvalidInput(
                "external segmenter backend requires a command".into(),
            ));
        }
        Ok(())
    }

    fn rule_set(&self, language: &str) -> RuleSet {
        self.language_overrides
            .get(language)
            .or_else(|| self.language_overrides.get(&primary_subtag(language)))
            .copied()
            .unwrap_or_else(|| RuleSet::for_language(language))
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

/// NFC-normalizes a document. Spans always refer to this form.
pub fn normalize(document: &str) -> String {
    document.nfc().collect()
}

/// Splits a document into sentences with the configured backend.
pub fn segment(document: &str, language: &str, config: &SegmenterConfig) -> Result<SentenceList> {
    config.validate()?;
    if document.trim().is_empty() {
        return Err(Error::EmptyDocument);
    }
    match config.backend {
        SegmenterBackend::BuiltinRules => {
            let normalized = normalize(document);
            let chars: Vec<char> = normalized.chars().collect();
            let spans = split_spans(&chars, config.rule_set(language));
            let sentences = spans
                .iter()
                .map(|&(s, e)| chars[s..e].iter().collect())
                .collect();
            Ok(SentenceList {
                doc_id: String::new(),
                language: language.to_string(),
                sentences,
                spans,
            })
        }
        SegmenterBackend::External => {
            let command = config.external_command.as_deref().unwrap_or_default();
            segment_via_external(document, language, command, config.external_timeout)
        }
    }
}

fn split_spans(chars: &[char], rules: RuleSet) -> Vec<(usize, usize)> {
    let n = chars.len();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;

    let close = |spans: &mut Vec<(usize, usize)>, s: usize, mut e: usize| {
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if e > s {
            spans.push((s, e));
        }
    };

    while i < n {
        let c = chars[i];
        let Some(s) = start else {
            if !c.is_whitespace() {
                start = Some(i);
            }
            i += 1;
            continue;
        };

        if c == '\n' && is_paragraph_break(chars, i) {
            close(&mut spans, s, i);
            start = None;
            i += 1;
            continue;
        }

        if CJK_TERMINALS.contains(&c) || LATIN_TERMINALS.contains(&c) {
            let mut run_end = i + 1;
            while run_end < n
                && (CJK_TERMINALS.contains(&chars[run_end])
                    || LATIN_TERMINALS.contains(&chars[run_end]))
            {
                run_end += 1;
            }
            let mut after = run_end;
            while after < n && CLOSERS.contains(&chars[after]) {
                after += 1;
            }
            if is_boundary(chars, s, i, run_end, after, rules) {
                close(&mut spans, s, after);
                start = None;
            }
            i = after;
            continue;
        }
        i += 1;
    }
    if let Some(s) = start {
        close(&mut spans, s, n);
    }
    spans
}

fn is_paragraph_break(chars: &[char], newline: usize) -> bool {
    chars[newline + 1..]
        .iter()
        .take_while(|c| c.is_whitespace())
        .any(|&c| c == '\n')
}

fn is_boundary(
    chars: &[char],
    sentence_start: usize,
    run_start: usize,
    run_end: usize,
    after: usize,
    rules: RuleSet,
) -> bool {
    let run = &chars[run_start..run_end];
    if run.iter().any(|c| CJK_TERMINALS.contains(c)) {
        return true;
    }
    if rules == RuleSet::Cjk && run.iter().any(|&c| c != '.') {
        return true;
    }
    if after < chars.len() && !chars[after].is_whitespace() {
        return false;
    }
    if rules == RuleSet::Cjk || run != ['.'] {
        return true;
    }

    // A lone period: guard abbreviations, initials, and lowercase continuations.
    let word_start = chars[sentence_start..run_start]
        .iter()
        .rposition(|c| c.is_whitespace())
        .map_or(sentence_start, |p| sentence_start + p + 1);
    let word: String = chars[word_start..run_start]
        .iter()
        .skip_while(|c| OPENERS.contains(c))
        .flat_map(|c| c.to_lowercase())
        .collect();
    if ABBREVIATIONS.contains(&word.as_str()) {
        return false;
    }
    let mut letters = chars[word_start..run_start]
        .iter()
        .filter(|c| !OPENERS.contains(c));
    if let (Some(c), None) = (letters.next(), letters.next()) {
        if c.is_uppercase() {
            return false;
        }
    }
    match chars[after..].iter().find(|c| !c.is_whitespace()) {
        Some(c) => !c.is_lowercase(),
        None => true,
    }
}

/// Segments by running an external command.
///
/// The command runs under `sh -c` with `{lang}` substituted, receives the
/// normalized document on stdin and must print one sentence per line. Each
/// line is located in the document by a greedy left-to-right search.
pub fn segment_via_external(
    document: &str,
    language: &str,
    command: &str,
    timeout: Duration,
) -> Result<SentenceList> {
    if document.trim().is_empty() {
        return Err(Error::EmptyDocument);
    }
    let normalized = normalize(document);
    let command = command.replace("{lang}", language);
    let stdout = run_with_timeout(&command, &normalized, timeout)?;

    let mut sentences = Vec::new();
    let mut spans = Vec::new();
    let mut byte_cursor = 0;
    let mut char_cursor = 0;
    for (lineno, line) in stdout.lines().enumerate() {
        let line = normalize(line.trim());
        if line.is_empty() {
            continue;
        }
        let Some(found) = normalized[byte_cursor..].find(&line) else {
            return Err(Error::SegmenterBackend(format!(
                "output line {} not found in document after offset {char_cursor}: {line:?}",
                lineno + 1
            )));
        };
        let start = char_cursor + normalized[byte_cursor..byte_cursor + found].chars().count();
        let end = start + line.chars().count();
        byte_cursor += found + line.len();
        char_cursor = end;
        spans.push((start, end));
        sentences.push(line);
    }
    if sentences.is_empty() {
        return Err(Error::SegmenterBackend(
            "external segmenter produced no sentences".into(),
        ));
    }
    Ok(SentenceList {
        doc_id: String::new(),
        language: language.to_string(),
        sentences,
        spans,
    })
}

fn run_with_timeout(command: &str, input: &str, timeout: Duration) -> Result<String> {
    let backend_err =
        |what: &str, e: std::io::Error| Error::SegmenterBackend(format!("{what} `{command}`: {e}"));
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| backend_err("failed to spawn", e))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let input = input.to_owned();
    let writer = thread::spawn(move || {
        // A segmenter may exit without draining stdin; a broken pipe is fine.
        let _ = stdin.write_all(input.as_bytes());
    });
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = thread::spawn(move || {
        let mut buf = Vec::new();
        stdout.read_to_end(&mut buf).map(|_| buf)
    });
    let mut stderr = child.stderr.take().expect("piped stderr");
    let err_reader = thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr.read_to_string(&mut buf);
        buf
    });

    let deadline = Instant::now() + timeout;
    let status = loop {
        if let Some(status) = child
            .try_wait()
            .map_err(|e| backend_err("failed to wait on", e))?
        {
            break status;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::SegmenterBackend(format!(
                "`{command}` timed out after {:.1}s",
                timeout.as_secs_f64()
            )));
        }
        thread::sleep(Duration::from_millis(5));
    };
    let _ = writer.join();
    let out = reader
        .join()
        .expect("stdout reader panicked")
        .map_err(|e| backend_err("failed to read output of", e))?;
    let diagnostics = err_reader.join().unwrap_or_default();
    if !status.success() {
        return Err(Error::SegmenterBackend(format!(
            "`{command}` exited with {status}: {}",
            diagnostics.trim()
        )));
    }
    String::from_utf8(out)
        .map_err(|e| Error::SegmenterBackend(format!("`{command}` wrote invalid UTF-8: {e}")))
}
