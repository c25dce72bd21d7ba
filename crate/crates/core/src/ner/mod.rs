//! Entity extraction from requirement sentences.
//!
//! Two taggers are provided: [`GeneralTagger`], a rule-and-lexicon noun/verb
//! tagger, and [`CrfModel`], a trainable linear-chain CRF over six
//! software-specific entity types. Both implement [`NerBackend`], as does
//! [`PretaggedBackend`], which serves tags produced by an external tool.
//!
//! Annotated corpora use one `token<TAB>label` line per token with a blank
//! line between sentences; labels follow the BIO scheme (`O`, `B-Actor`,
//! `I-Actor`, ...).

mod crf;
mod evaluate;
mod features;
mod general;
pub mod lbfgs;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::embedding::{tokenize, Token};

pub use crf::{train_crf, train_crf_with_report, viterbi_decode, CrfHyperParams, CrfModel, CrfTrainingProblem};
pub use evaluate::{best_grid_point, evaluate_ner, grid_search, EntityMetrics, GridPoint, NerReport};
pub use features::extract_features;
pub use general::{general_tag, GeneralTagger, WordClass};

#[derive(Debug, Error)]
pub enum NerError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `token<TAB>label`")]
    BadLine { line: usize },
    #[error("line {line}: unknown label `{label}`")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: `{label}` does not continue an entity of the same type")]
    InvalidBio { line: usize, label: String },
    #[error("sentence {sentence}: invalid BIO sequence at token {token}")]
    InvalidSequence { sentence: usize, token: usize },
    #[error("sentence {sentence}: {tokens} tokens but {labels} labels")]
    LengthMismatch { sentence: usize, tokens: usize, labels: usize },
    #[error("sentence {sentence}: label `{label}` is not in the tag set")]
    LabelNotInTagSet { sentence: usize, label: String },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("token index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("need at least {needed} sentences for {folds} folds, got {got}")]
    TooFewSentences { needed: usize, folds: usize, got: usize },
    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },
    #[error("no external tags for sentence `{0}`")]
    NotPretagged(String),
    #[error("no held-out fold contains any entity")]
    NoEntities,
    #[error("optimizer failed: {0}")]
    Optimizer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityType {
    Actor,
    Action,
    Object,
    Property,
    Metric,
    Operator,
    Noun,
    Verb,
}

impl EntityType {
    pub const SOFTWARE: [EntityType; 6] = [
        EntityType::Actor,
        EntityType::Action,
        EntityType::Object,
        EntityType::Property,
        EntityType::Metric,
        EntityType::Operator,
    ];
    pub const GENERAL: [EntityType; 2] = [EntityType::Noun, EntityType::Verb];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Actor => "Actor",
            EntityType::Action => "Action",
            EntityType::Object => "Object",
            EntityType::Property => "Property",
            EntityType::Metric => "Metric",
            EntityType::Operator => "Operator",
            EntityType::Noun => "Noun",
            EntityType::Verb => "Verb",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityType::SOFTWARE
            .iter()
            .chain(&EntityType::GENERAL)
            .find(|t| t.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown entity type `{s}`"))
    }
}

/// A BIO label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Outside,
    Begin(EntityType),
    Inside(EntityType),
}

impl Tag {
    pub fn entity_type(self) -> Option<EntityType> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(t) => write!(f, "B-{t}"),
            Tag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for Tag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        match s.split_once('-') {
            Some(("B", t)) => Ok(Tag::Begin(t.parse()?)),
            Some(("I", t)) => Ok(Tag::Inside(t.parse()?)),
            _ => Err(format!("unknown label `{s}`")),
        }
    }
}

/// Entity types plus the derived BIO label order: `O`, then `B-X`, `I-X`
/// for each type in turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSet {
    types: Vec<EntityType>,
    labels: Vec<Tag>,
}

impl TagSet {
    pub fn new(types: &[EntityType]) -> Self {
        let mut labels = vec![Tag::Outside];
        for &t in types {
            labels.push(Tag::Begin(t));
            labels.push(Tag::Inside(t));
        }
        TagSet { types: types.to_vec(), labels }
    }

    pub fn software() -> Self {
        Self::new(&EntityType::SOFTWARE)
    }

    pub fn general() -> Self {
        Self::new(&EntityType::GENERAL)
    }

    pub fn types(&self) -> &[EntityType] {
        &self.types
    }

    pub fn labels(&self) -> &[Tag] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index(&self, tag: Tag) -> Option<usize> {
        self.labels.iter().position(|&l| l == tag)
    }

    pub fn label(&self, i: usize) -> Tag {
        self.labels[i]
    }
}

/// Whether `tag` may follow `prev` (`None` at sentence start).
pub fn bio_allows(prev: Option<Tag>, tag: Tag) -> bool {
    match tag {
        Tag::Inside(t) => matches!(prev, Some(Tag::Begin(p)) | Some(Tag::Inside(p)) if p == t),
        _ => true,
    }
}

pub fn is_valid_bio(tags: &[Tag]) -> bool {
    let mut prev = None;
    tags.iter().all(|&t| {
        let ok = bio_allows(prev, t);
        prev = Some(t);
        ok
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub tokens: Vec<Token>,
    pub tags: Vec<Tag>,
}

impl AnnotatedSentence {
    pub fn new(tokens: Vec<Token>, tags: Vec<Tag>) -> Result<Self, NerError> {
        if tokens.len() != tags.len() {
            return Err(NerError::LengthMismatch { sentence: 0, tokens: tokens.len(), labels: tags.len() });
        }
        if let Some(i) = first_bio_error(&tags) {
            return Err(NerError::InvalidSequence { sentence: 0, token: i });
        }
        Ok(AnnotatedSentence { tokens, tags })
    }

    /// Builds a sentence from `(token, label)` pairs, e.g. `("UAV", "B-Actor")`.
    pub fn from_pairs(pairs: &[(&str, &str)]) -> Result<Self, NerError> {
        let tokens = pairs.iter().enumerate().map(|(i, (t, _))| Token::new(t, i)).collect();
        let tags = pairs
            .iter()
            .map(|(_, l)| l.parse::<Tag>().map_err(|_| NerError::UnknownLabel { line: 0, label: l.to_string() }))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(tokens, tags)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn spans(&self) -> Vec<EntitySpan> {
        spans_from_tags(&self.tokens, &self.tags)
    }
}

fn first_bio_error(tags: &[Tag]) -> Option<usize> {
    let mut prev = None;
    for (i, &t) in tags.iter().enumerate() {
        if !bio_allows(prev, t) {
            return Some(i);
        }
        prev = Some(t);
    }
    None
}

/// A typed run of tokens `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySpan {
    pub entity_type: EntityType,
    pub start: usize,
    pub end: usize,
    /// Token text (original casing) joined by single spaces.
    pub surface: String,
}

/// Maximal `B-X (I-X)*` runs become spans. A stray `I-X` that does not
/// continue an `X` entity starts a new one.
pub fn spans_from_tags(tokens: &[Token], tags: &[Tag]) -> Vec<EntitySpan> {
    let n = tokens.len().min(tags.len());
    let mut spans = Vec::new();
    let mut open: Option<(EntityType, usize)> = None;
    let close = |open: Option<(EntityType, usize)>, end: usize, spans: &mut Vec<EntitySpan>| {
        if let Some((t, s)) = open {
            let surface = tokens[s..end].iter().map(|tok| tok.raw.as_str()).collect::<Vec<_>>().join(" ");
            spans.push(EntitySpan { entity_type: t, start: s, end, surface });
        }
    };
    for (i, tag) in tags.iter().enumerate().take(n) {
        match *tag {
            Tag::Outside => {
                close(open.take(), i, &mut spans);
            }
            Tag::Begin(t) => {
                close(open.take(), i, &mut spans);
                open = Some((t, i));
            }
            Tag::Inside(t) => match open {
                Some((o, _)) if o == t => {}
                _ => {
                    close(open.take(), i, &mut spans);
                    open = Some((t, i));
                }
            },
        }
    }
    close(open, n, &mut spans);
    spans
}

/// Inverse of [`spans_from_tags`] for non-overlapping spans.
pub fn tags_from_spans(len: usize, spans: &[EntitySpan]) -> Vec<Tag> {
    let mut tags = vec![Tag::Outside; len];
    for s in spans {
        for (k, tag) in tags.iter_mut().enumerate().take(s.end).skip(s.start) {
            *tag = if k == s.start { Tag::Begin(s.entity_type) } else { Tag::Inside(s.entity_type) };
        }
    }
    tags
}

/// Reads an annotated corpus. Every label must belong to `tagset` and form a
/// valid BIO sequence.
pub fn parse_annotated<R: std::io::BufRead>(reader: R, tagset: &TagSet) -> Result<Vec<AnnotatedSentence>, NerError> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut tags: Vec<Tag> = Vec::new();
    let flush = |tokens: &mut Vec<Token>, tags: &mut Vec<Tag>, out: &mut Vec<AnnotatedSentence>| {
        if !tokens.is_empty() {
            out.push(AnnotatedSentence { tokens: std::mem::take(tokens), tags: std::mem::take(tags) });
        }
    };
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags, &mut out);
            continue;
        }
        let (token, label) = line.split_once('\t').ok_or(NerError::BadLine { line: line_no })?;
        let label = label.trim();
        if token.is_empty() || label.contains('\t') {
            return Err(NerError::BadLine { line: line_no });
        }
        let tag: Tag = label.parse().map_err(|_| NerError::UnknownLabel { line: line_no, label: label.to_string() })?;
        if tagset.index(tag).is_none() {
            return Err(NerError::UnknownLabel { line: line_no, label: label.to_string() });
        }
        if !bio_allows(tags.last().copied(), tag) {
            return Err(NerError::InvalidBio { line: line_no, label: label.to_string() });
        }
        tokens.push(Token::new(token, tokens.len()));
        tags.push(tag);
    }
    flush(&mut tokens, &mut tags, &mut out);
    Ok(out)
}

pub fn write_annotated(sentences: &[AnnotatedSentence]) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            out.push_str(&format!("{}\t{}\n", tok.raw, tag));
        }
    }
    out
}

/// Tokens of a sentence together with the entities found in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tagged {
    pub tokens: Vec<Token>,
    pub spans: Vec<EntitySpan>,
}

/// Anything that can find entities in a requirement sentence.
pub trait NerBackend {
    fn name(&self) -> String;
    fn tag_text(&self, text: &str) -> Result<Tagged, NerError>;
}

/// Serves tags produced elsewhere, looked up by the sentence's lowercased
/// token sequence.
#[derive(Debug, Clone, Default)]
pub struct PretaggedBackend {
    by_tokens: HashMap<String, AnnotatedSentence>,
}

impl PretaggedBackend {
    pub fn new(sentences: Vec<AnnotatedSentence>) -> Self {
        let by_tokens = sentences.into_iter().map(|s| (Self::key(&s.tokens), s)).collect();
        PretaggedBackend { by_tokens }
    }

    fn key(tokens: &[Token]) -> String {
        tokens.iter().map(|t| t.surface.as_str()).collect::<Vec<_>>().join(" ")
    }
}

impl NerBackend for PretaggedBackend {
    fn name(&self) -> String {
        "pretagged".to_string()
    }

    fn tag_text(&self, text: &str) -> Result<Tagged, NerError> {
        let tokens = tokenize(text);
        let sentence =
            self.by_tokens.get(&Self::key(&tokens)).ok_or_else(|| NerError::NotPretagged(text.to_string()))?;
        Ok(Tagged { spans: sentence.spans(), tokens })
    }
}
