//! SemEval-2010 Task 8 records: label scheme, parsing, tokenization,
//! vocabulary and span-mode encoding.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const RELATION_TYPES: [&str; 9] = [
    "Cause-Effect",
    "Component-Whole",
    "Content-Container",
    "Entity-Destination",
    "Entity-Origin",
    "Instrument-Agency",
    "Member-Collection",
    "Message-Topic",
    "Product-Producer",
];

pub const ARTIFICIAL_LABEL: &str = "Other";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// `(e1,e2)`
    Forward,
    /// `(e2,e1)`
    Reverse,
}

/// A parsed label: one of the directed actual labels (by class id) or the
/// artificial label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Actual(usize),
    Artificial,
}

impl Label {
    pub fn actual(self) -> Option<usize> {
        match self {
            Label::Actual(c) => Some(c),
            Label::Artificial => None,
        }
    }
}

/// The 18 directed labels plus the artificial one.
///
/// Actual class ids follow the lexicographic order of the directed label
/// names, so `Cause-Effect(e1,e2)` is 0 and `Product-Producer(e2,e1)` is 17.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelScheme {
    actual_labels: Vec<String>,
    artificial_label: String,
    relation_types: Vec<String>,
    /// directed class id -> (type index, direction)
    directed: Vec<(usize, Direction)>,
    index: HashMap<String, usize>,
}

impl Default for LabelScheme {
    fn default() -> Self {
        Self::semeval()
    }
}

impl LabelScheme {
    pub fn semeval() -> Self {
        Self::new(&RELATION_TYPES, ARTIFICIAL_LABEL).expect("builtin scheme is valid")
    }

    pub fn new(types: &[&str], artificial: &str) -> Result<Self> {
        let mut relation_types: Vec<String> = types.iter().map(|t| t.to_string()).collect();
        relation_types.sort();
        relation_types.dedup();
        if relation_types.len() != types.len() || relation_types.is_empty() {
            return Err(Error::Config("relation types must be non-empty and distinct".into()));
        }
        if relation_types.iter().any(|t| t == artificial) {
            return Err(Error::Config("artificial label collides with a relation type".into()));
        }
        let mut entries: Vec<(String, usize, Direction)> = Vec::new();
        for (ti, t) in relation_types.iter().enumerate() {
            entries.push((format!("{t}(e1,e2)"), ti, Direction::Forward));
            entries.push((format!("{t}(e2,e1)"), ti, Direction::Reverse));
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let index = entries.iter().enumerate().map(|(i, e)| (e.0.clone(), i)).collect();
        Ok(LabelScheme {
            actual_labels: entries.iter().map(|e| e.0.clone()).collect(),
            artificial_label: artificial.to_string(),
            relation_types,
            directed: entries.iter().map(|e| (e.1, e.2)).collect(),
            index,
        })
    }

    pub fn actual_labels(&self) -> &[String] {
        &self.actual_labels
    }

    pub fn n_actual(&self) -> usize {
        self.actual_labels.len()
    }

    pub fn artificial_label(&self) -> &str {
        &self.artificial_label
    }

    pub fn relation_types(&self) -> &[String] {
        &self.relation_types
    }

    pub fn n_types(&self) -> usize {
        self.relation_types.len()
    }

    pub fn type_of(&self, class: usize) -> usize {
        self.directed[class].0
    }

    pub fn direction_of(&self, class: usize) -> Direction {
        self.directed[class].1
    }

    pub fn parse_label(&self, s: &str) -> Option<Label> {
        let s = s.trim();
        if s == self.artificial_label {
            return Some(Label::Artificial);
        }
        self.index.get(s).map(|&c| Label::Actual(c))
    }

    pub fn name(&self, label: Label) -> &str {
        match label {
            Label::Actual(c) => &self.actual_labels[c],
            Label::Artificial => &self.artificial_label,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "(e1,e2)",
            Direction::Reverse => "(e2,e1)",
        })
    }
}

/// One parsed corpus record. Spans are half-open token ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawExample {
    pub id: u64,
    pub sentence_text: String,
    pub tokens: Vec<String>,
    pub e1_span: (usize, usize),
    pub e2_span: (usize, usize),
    /// `None` for unlabeled (test) files.
    pub label: Option<Label>,
}

impl RawExample {
    /// Head token of the first nominal: last token inside its tags.
    pub fn e1_head(&self) -> usize {
        self.e1_span.1 - 1
    }

    pub fn e2_head(&self) -> usize {
        self.e2_span.1 - 1
    }
}

/// Which part of the sentence the network sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpanMode {
    #[default]
    FullSentence,
    /// One token before the first head through one token after the second.
    BetweenNominals,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub id: u64,
    pub token_ids: Vec<usize>,
    /// Normalized surface tokens of the kept window, for rendering.
    pub tokens: Vec<String>,
    pub e1_pos: usize,
    pub e2_pos: usize,
    pub label: Option<Label>,
}

impl EncodedExample {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace())
}

fn normalize(word: &str) -> String {
    word.chars()
        .flat_map(|c| c.to_lowercase())
        .map(|c| if c.is_ascii_digit() { '0' } else { c })
        .collect()
}

/// Lowercase and map digits to `0`. Applied to corpus tokens and to the
/// words of a pretrained-vector file alike.
pub fn normalize_word(word: &str) -> String {
    normalize(word)
}

/// Split one whitespace-delimited chunk into tokens: leading and trailing
/// punctuation characters each become their own token.
fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut start = 0;
    let mut end = chars.len();
    while start < end && is_punct(chars[start]) {
        start += 1;
    }
    while end > start && is_punct(chars[end - 1]) {
        end -= 1;
    }
    for &c in &chars[..start] {
        out.push(normalize(&c.to_string()));
    }
    if start < end {
        out.push(normalize(&chars[start..end].iter().collect::<String>()));
    }
    for &c in &chars[end..] {
        out.push(normalize(&c.to_string()));
    }
}

const TAGS: [&str; 4] = ["<e1>", "</e1>", "<e2>", "</e2>"];

fn isolate_tags(text: &str) -> String {
    let mut s = text.to_string();
    for t in TAGS {
        s = s.replace(t, &format!(" {t} "));
    }
    s
}

/// Rule-based tokenizer: whitespace split, punctuation detachment, lowercase,
/// digit-to-zero. Entity tags are dropped.
pub fn tokenize_normalize(sentence_text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in isolate_tags(sentence_text).split_whitespace() {
        if !TAGS.contains(&chunk) {
            split_chunk(chunk, &mut out);
        }
    }
    out
}

type Spans = (Vec<String>, (usize, usize), (usize, usize));

/// Tokenize a tagged sentence, recording the token span of each nominal.
fn tokenize_tagged(text: &str) -> std::result::Result<Spans, String> {
    let mut tokens = Vec::new();
    let mut open: [Option<usize>; 2] = [None, None];
    let mut spans: [Option<(usize, usize)>; 2] = [None, None];
    for chunk in isolate_tags(text).split_whitespace() {
        match chunk {
            "<e1>" | "<e2>" => {
                let k = usize::from(chunk == "<e2>");
                if open[k].is_some() || spans[k].is_some() {
                    return Err(format!("duplicate {chunk} tag"));
                }
                open[k] = Some(tokens.len());
            }
            "</e1>" | "</e2>" => {
                let k = usize::from(chunk == "</e2>");
                let start = open[k].take().ok_or_else(|| format!("{chunk} without opening tag"))?;
                if start == tokens.len() {
                    return Err(format!("empty entity before {chunk}"));
                }
                spans[k] = Some((start, tokens.len()));
            }
            _ => split_chunk(chunk, &mut tokens),
        }
    }
    let e1 = spans[0].ok_or("missing <e1>...</e1>")?;
    let e2 = spans[1].ok_or("missing <e2>...</e2>")?;
    if e1.1 > e2.0 {
        return Err("<e1> must end before <e2> begins".into());
    }
    Ok((tokens, e1, e2))
}

fn is_record_start(line: &str) -> bool {
    match line.split_once('\t') {
        Some((id, _)) => !id.is_empty() && id.trim().chars().all(|c| c.is_ascii_digit()),
        None => false,
    }
}

/// Parse records from text already in memory. `path` is only used in errors.
pub fn parse_semeval_str(text: &str, path: &Path, scheme: &LabelScheme) -> Result<Vec<RawExample>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i].trim_end_matches('\r');
        let lineno = i + 1;
        i += 1;
        if line.trim().is_empty() {
            continue;
        }
        if !is_record_start(line) {
            return Err(Error::parse(path, lineno, "expected `ID<tab>sentence` record line"));
        }
        let (id_str, sentence) = line.split_once('\t').expect("checked by is_record_start");
        let id: u64 = id_str
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("unparseable ID {id_str:?}")))?;
        let mut sentence = sentence.trim();
        if sentence.len() >= 2 && sentence.starts_with('"') && sentence.ends_with('"') {
            sentence = &sentence[1..sentence.len() - 1];
        }
        let (tokens, e1_span, e2_span) =
            tokenize_tagged(sentence).map_err(|msg| Error::parse(path, lineno, msg))?;

        let mut label = None;
        while i < lines.len() {
            let l = lines[i].trim_end_matches('\r');
            if l.trim().is_empty() || is_record_start(l) {
                break;
            }
            let trimmed = l.trim();
            if !trimmed.starts_with("Comment") {
                if label.is_some() {
                    return Err(Error::parse(path, i + 1, "more than one label line"));
                }
                label = Some(scheme.parse_label(trimmed).ok_or_else(|| {
                    Error::parse(path, i + 1, format!("unknown label {trimmed:?}"))
                })?);
            }
            i += 1;
        }
        out.push(RawExample {
            id,
            sentence_text: sentence.to_string(),
            tokens,
            e1_span,
            e2_span,
            label,
        });
    }
    Ok(out)
}

pub fn parse_semeval_file(path: &Path, scheme: &LabelScheme) -> Result<Vec<RawExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_semeval_str(&text, path, scheme)
}

pub const PADDING: &str = "<PAD>";
pub const UNKNOWN: &str = "<UNK>";

/// Word <-> index map. Index 0 is padding, 1 is unknown, the rest are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PADDING_ID: usize = 0;
    pub const UNKNOWN_ID: usize = 1;

    /// Build from an explicit word list (reserved entries are prepended and
    /// duplicates dropped).
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut list = vec![PADDING.to_string(), UNKNOWN.to_string()];
        let mut index: HashMap<String, usize> =
            list.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        for w in words {
            let w = w.as_ref();
            if !index.contains_key(w) {
                index.insert(w.to_string(), list.len());
                list.push(w.to_string());
            }
        }
        Vocabulary { words: list, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn id_or_unknown(&self, word: &str) -> usize {
        self.get(word).unwrap_or(Self::UNKNOWN_ID)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Union of corpus tokens and (normalized) pretrained words, sorted.
pub fn build_vocabulary(examples: &[RawExample], pretrained_words: Option<&[String]>) -> Vocabulary {
    let mut set: BTreeSet<String> = BTreeSet::new();
    for ex in examples {
        set.extend(ex.tokens.iter().cloned());
    }
    if let Some(words) = pretrained_words {
        set.extend(words.iter().map(|w| normalize(w)));
    }
    set.remove(PADDING);
    set.remove(UNKNOWN);
    Vocabulary::from_words(set)
}

pub fn encode(example: &RawExample, vocab: &Vocabulary, span_mode: SpanMode) -> EncodedExample {
    let h1 = example.e1_head();
    let h2 = example.e2_head();
    let n = example.tokens.len();
    let (lo, hi) = match span_mode {
        SpanMode::FullSentence => (0, n),
        SpanMode::BetweenNominals => (h1.saturating_sub(1), (h2 + 2).min(n)),
    };
    let tokens: Vec<String> = example.tokens[lo..hi].to_vec();
    EncodedExample {
        id: example.id,
        token_ids: tokens.iter().map(|t| vocab.id_or_unknown(t)).collect(),
        tokens,
        e1_pos: h1 - lo,
        e2_pos: h2 - lo,
        label: example.label,
    }
}
