//! Datasets shipped with the crate.

use crate::corpus::{generate_synthetic, parse_requirements, RequirementSet};
use crate::ner::{parse_annotated, AnnotatedSentence, TagSet};

const BASE_CSV: &str = include_str!("../data/base_requirements.csv");
const SYNTHETIC_CSV: &str = include_str!("../data/synthetic.csv");
const TOY_NER: &str = include_str!("../data/toy_ner.tsv");

/// Seed and conflict count that produced `synthetic.csv` from the base set.
pub const SYNTHETIC_SEED: u64 = 7;
pub const SYNTHETIC_CONFLICTS: usize = 12;

/// Non-conflicting UAV requirements used as synthesis sources.
pub fn base_requirements() -> RequirementSet {
    parse_requirements("base", BASE_CSV.as_bytes()).expect("bundled base set is valid")
}

/// The base set plus planted conflicts.
pub fn synthetic_dataset() -> RequirementSet {
    parse_requirements("synthetic", SYNTHETIC_CSV.as_bytes()).expect("bundled synthetic set is valid")
}

pub fn synthetic_csv() -> &'static str {
    SYNTHETIC_CSV
}

/// Regenerates the synthetic set from the base set.
pub fn regenerate_synthetic() -> RequirementSet {
    let mut set = generate_synthetic(&base_requirements(), SYNTHETIC_CONFLICTS, SYNTHETIC_SEED)
        .expect("enough non-conflicting base requirements");
    set.name = "synthetic".into();
    set
}

/// Hand-annotated requirement sentences over the six software entity types.
pub fn toy_ner_corpus() -> Vec<AnnotatedSentence> {
    parse_annotated(TOY_NER.as_bytes(), &TagSet::software()).expect("bundled NER corpus is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::serialize_requirements;

    #[test]
    fn synthetic_file_matches_generator() {
        assert_eq!(serialize_requirements(&regenerate_synthetic()), synthetic_csv());
    }

    #[test]
    fn synthetic_shape() {
        let set = synthetic_dataset();
        assert_eq!(set.len(), base_requirements().len() + SYNTHETIC_CONFLICTS);
        assert_eq!(set.conflict_count(), 2 * SYNTHETIC_CONFLICTS);
    }

    #[test]
    fn toy_corpus_covers_all_types() {
        let corpus = toy_ner_corpus();
        assert!(corpus.len() >= 40);
        for t in TagSet::software().types() {
            assert!(corpus.iter().any(|s| s.tags.iter().any(|g| g.entity_type() == Some(*t))), "{t}");
        }
    }
}
