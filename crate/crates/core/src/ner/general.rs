use std::collections::HashMap;
use std::sync::OnceLock;

use super::{spans_from_tags, EntityType, NerBackend, NerError, Tag, Tagged};
use crate::embedding::{tokenize, Token};

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");

const MODALS: [&str; 13] =
    ["shall", "should", "must", "will", "may", "can", "could", "would", "be", "is", "are", "been", "being"];
const SKIPPABLE: [&str; 5] = ["not", "never", "always", "also", "only"];

const NOUN_SUFFIXES: [&str; 4] = ["tion", "ment", "ity", "ness"];
const VERB_SUFFIXES: [&str; 3] = ["ize", "ate", "ify"];
const OTHER_SUFFIXES: [&str; 8] = ["ly", "ous", "ive", "able", "al", "ful", "less", "ic"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WordClass {
    Noun,
    Verb,
    Other,
}

/// Coarse noun/verb tagger for arbitrary requirement text.
///
/// Each token is classified by the first rule that applies: lexicon entry,
/// numeral (other), word following a modal or auxiliary possibly across
/// adverbs (verb), derivational suffix, and finally noun.
#[derive(Debug, Clone)]
pub struct GeneralTagger {
    lexicon: HashMap<String, WordClass>,
}

impl GeneralTagger {
    pub fn bundled() -> Self {
        Self::from_lexicon(BUNDLED_LEXICON).expect("bundled lexicon parses")
    }

    /// Parses `word<TAB>N|V|X` lines; `#` starts a comment line.
    pub fn from_lexicon(text: &str) -> Result<Self, NerError> {
        let mut lexicon = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || NerError::BadLine { line: i + 1 };
            let (word, class) = line.split_once('\t').ok_or_else(bad)?;
            let class = match class.trim() {
                "N" => WordClass::Noun,
                "V" => WordClass::Verb,
                "X" => WordClass::Other,
                _ => return Err(bad()),
            };
            if lexicon.insert(word.trim().to_lowercase(), class).is_some() {
                return Err(bad());
            }
        }
        Ok(GeneralTagger { lexicon })
    }

    pub fn lexicon_entry(&self, word: &str) -> Option<WordClass> {
        self.lexicon.get(&word.to_lowercase()).copied()
    }

    pub fn classify(&self, tokens: &[Token]) -> Vec<WordClass> {
        (0..tokens.len()).map(|i| self.classify_at(tokens, i)).collect()
    }

    fn classify_at(&self, tokens: &[Token], i: usize) -> WordClass {
        let w = tokens[i].surface.as_str();
        if let Some(&c) = self.lexicon.get(w) {
            return c;
        }
        if w.chars().any(|c| c.is_ascii_digit()) {
            return WordClass::Other;
        }
        let adverb = SKIPPABLE.contains(&w) || w.ends_with("ly");
        let mut j = if adverb { 0 } else { i };
        while j > 0 {
            j -= 1;
            let prev = tokens[j].surface.as_str();
            if MODALS.contains(&prev) {
                return WordClass::Verb;
            }
            if !(SKIPPABLE.contains(&prev) || prev.ends_with("ly")) {
                break;
            }
        }
        if NOUN_SUFFIXES.iter().any(|s| w.ends_with(s)) {
            WordClass::Noun
        } else if VERB_SUFFIXES.iter().any(|s| w.ends_with(s)) {
            WordClass::Verb
        } else if OTHER_SUFFIXES.iter().any(|s| w.ends_with(s)) {
            WordClass::Other
        } else {
            WordClass::Noun
        }
    }
}

impl Default for GeneralTagger {
    fn default() -> Self {
        Self::bundled()
    }
}

/// Tags text with the bundled lexicon; every noun and verb token is its
/// own single-token entity.
pub fn general_tag(text: &str) -> Tagged {
    static TAGGER: OnceLock<GeneralTagger> = OnceLock::new();
    TAGGER.get_or_init(GeneralTagger::bundled).tag_tokens(tokenize(text))
}

impl GeneralTagger {
    fn tag_tokens(&self, tokens: Vec<Token>) -> Tagged {
        let tags: Vec<Tag> = self
            .classify(&tokens)
            .into_iter()
            .map(|c| match c {
                WordClass::Noun => Tag::Begin(EntityType::Noun),
                WordClass::Verb => Tag::Begin(EntityType::Verb),
                WordClass::Other => Tag::Outside,
            })
            .collect();
        Tagged { spans: spans_from_tags(&tokens, &tags), tokens }
    }
}

impl NerBackend for GeneralTagger {
    fn name(&self) -> String {
        "general".to_string()
    }

    fn tag_text(&self, text: &str) -> Result<Tagged, NerError> {
        Ok(self.tag_tokens(tokenize(text)))
    }
}
