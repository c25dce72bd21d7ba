//! Entity-overlap filtering of candidate conflicts.
//!
//! A candidate survives if the entities it mentions also show up in its
//! most similar requirements: for the best of its `m_count` nearest
//! neighbours, the number of its entities found there must reach
//! `t_o * unique`, where `unique` is its own number of distinct entities.

use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;
use thiserror::Error;

use crate::corpus::RequirementSet;
use crate::ner::{EntityType, NerBackend, NerError, Tagged};
use crate::similarity::{top_m_indices, SimilarityError, SimilarityMatrix};
use crate::threshold::CandidateConflictSet;

#[derive(Debug, Error)]
pub enum SemanticError {
    #[error("tagging requirement `{id}`")]
    Ner { id: String, source: NerError },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("no entity profile for requirement `{0}`")]
    MissingProfile(String),
    #[error("m_count must be at least 1")]
    ZeroCount,
    #[error("overlap threshold must be a finite non-negative number, got {0}")]
    BadThreshold(f64),
}

/// Units of measure grouped by dimension. Two metric entities whose tokens
/// fall in the same group count as a match, so "20 kilometers" and
/// "20 miles" still overlap.
pub const UNIT_GROUPS: &[&[&str]] = &[
    &["kilometers", "kilometer", "km", "miles", "mile", "meters", "meter", "m", "feet", "foot", "ft"],
    &[
        "hours",
        "hour",
        "h",
        "minutes",
        "minute",
        "min",
        "seconds",
        "second",
        "s",
        "milliseconds",
        "ms",
        "days",
        "weeks",
    ],
    &["kg", "kilograms", "pounds", "lbs", "grams", "g"],
    &["mb", "gb", "kb", "tb"],
    &["fps", "hz"],
];

fn same_unit_group(a: &str, b: &str) -> bool {
    UNIT_GROUPS.iter().any(|g| g.contains(&a) && g.contains(&b))
}

/// The distinct `(lowercased token, type)` pairs of a requirement.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityProfile {
    entities: BTreeSet<(String, EntityType)>,
}

impl EntityProfile {
    /// Every token covered by a span contributes one pair.
    pub fn from_tagged(tagged: &Tagged) -> Self {
        let entities = tagged
            .spans
            .iter()
            .flat_map(|s| tagged.tokens[s.start..s.end].iter().map(move |t| (t.surface.clone(), s.entity_type)))
            .collect();
        EntityProfile { entities }
    }

    pub fn from_pairs(pairs: &[(&str, EntityType)]) -> Self {
        EntityProfile { entities: pairs.iter().map(|(w, t)| (w.to_lowercase(), *t)).collect() }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, EntityType)> {
        self.entities.iter()
    }

    fn matches(&self, word: &str, t: EntityType) -> bool {
        self.entities.iter().any(|(w, u)| w == word || (t == EntityType::Metric && *u == t && same_unit_group(word, w)))
    }
}

pub fn unique_entities(p: &EntityProfile) -> usize {
    p.len()
}

/// How many of `c`'s entities appear in `r`, by token or as metric units.
pub fn overlap(c: &EntityProfile, r: &EntityProfile) -> usize {
    c.entities.iter().filter(|(w, t)| r.matches(w, *t)).count()
}

pub fn overlap_ratio(c: &EntityProfile, r: &EntityProfile) -> f64 {
    let u = c.len();
    if u == 0 {
        0.0
    } else {
        overlap(c, r) as f64 / u as f64
    }
}

/// `overlap / unique` truncated (not rounded) to two decimals.
pub fn format_ratio(overlap: usize, unique: usize) -> String {
    if unique == 0 {
        return "0.00".to_string();
    }
    let hundredths = overlap * 100 / unique;
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase2Options {
    pub m_count: usize,
    pub t_o: f64,
}

impl Default for Phase2Options {
    fn default() -> Self {
        Phase2Options { m_count: 5, t_o: 1.0 }
    }
}

/// Overlap of one candidate against its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapResult {
    pub id: String,
    pub unique: usize,
    /// Neighbours most similar first, with their overlap counts.
    pub neighbours: Vec<(String, usize)>,
    pub best_match: String,
    pub overlap: usize,
    pub ratio: f64,
    pub kept: bool,
}

/// Candidates that passed the overlap check, in candidate order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FinalConflictSet {
    pub members: IndexMap<String, OverlapResult>,
}

impl FinalConflictSet {
    pub fn contains(&self, id: &str) -> bool {
        self.members.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase2Outcome {
    /// One entry per candidate, kept or not.
    pub results: Vec<OverlapResult>,
    pub final_set: FinalConflictSet,
}

/// Tags every requirement once.
pub fn build_profiles(
    set: &RequirementSet,
    backend: &dyn NerBackend,
) -> Result<HashMap<String, EntityProfile>, SemanticError> {
    set.iter()
        .map(|r| {
            let tagged = backend.tag_text(&r.text).map_err(|source| SemanticError::Ner { id: r.id.clone(), source })?;
            Ok((r.id.clone(), EntityProfile::from_tagged(&tagged)))
        })
        .collect()
}

/// Compares one candidate against the given neighbours. The best match is
/// the first neighbour with the highest overlap.
pub fn score_candidate(
    id: &str,
    profile: &EntityProfile,
    neighbours: &[(&str, &EntityProfile)],
    t_o: f64,
) -> OverlapResult {
    let unique = profile.len();
    let counts: Vec<(String, usize)> = neighbours.iter().map(|(n, p)| (n.to_string(), overlap(profile, p))).collect();
    let mut best: Option<&(String, usize)> = None;
    for c in &counts {
        if best.is_none_or(|b| c.1 > b.1) {
            best = Some(c);
        }
    }
    let (best_match, best_overlap) = best.cloned().unwrap_or_default();
    OverlapResult {
        id: id.to_string(),
        unique,
        best_match,
        overlap: best_overlap,
        ratio: if unique == 0 { 0.0 } else { best_overlap as f64 / unique as f64 },
        // no entities means ratio 0: nothing confirms the conflict
        kept: if unique == 0 { t_o <= 0.0 } else { best_overlap as f64 >= t_o * unique as f64 },
        neighbours: counts,
    }
}

/// Keeps each candidate whose best neighbour (among the `m_count` most
/// similar requirements in `m`) covers at least `t_o * unique` of its
/// entities.
pub fn phase2_filter(
    m: &SimilarityMatrix,
    candidates: &CandidateConflictSet,
    profiles: &HashMap<String, EntityProfile>,
    options: &Phase2Options,
) -> Result<Phase2Outcome, SemanticError> {
    if options.m_count == 0 {
        return Err(SemanticError::ZeroCount);
    }
    if !options.t_o.is_finite() || options.t_o < 0.0 {
        return Err(SemanticError::BadThreshold(options.t_o));
    }
    let profile = |id: &str| profiles.get(id).ok_or_else(|| SemanticError::MissingProfile(id.to_string()));
    let mut results = Vec::with_capacity(candidates.len());
    for id in candidates.ids() {
        let i = m.index_of(id)?;
        let neighbours = top_m_indices(m, i, options.m_count)
            .into_iter()
            .map(|j| {
                let nid = m.ids()[j].as_str();
                profile(nid).map(|p| (nid, p))
            })
            .collect::<Result<Vec<_>, _>>()?;
        results.push(score_candidate(id, profile(id)?, &neighbours, options.t_o));
    }
    let members = results.iter().filter(|r| r.kept).map(|r| (r.id.clone(), r.clone())).collect();
    Ok(Phase2Outcome { results, final_set: FinalConflictSet { members } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threshold::Evidence;
    use EntityType::*;

    fn candidate_profile() -> EntityProfile {
        EntityProfile::from_pairs(&[
            ("uav", Actor),
            ("flight", Object),
            ("range", Property),
            ("less", Operator),
            ("than", Operator),
            ("20", Metric),
            ("kilometers", Metric),
        ])
    }

    #[test]
    fn flight_range_table() {
        let c = candidate_profile();
        let r1 = EntityProfile::from_pairs(&[
            ("uav", Actor),
            ("flight", Object),
            ("range", Property),
            ("less", Operator),
            ("than", Operator),
            ("20", Metric),
            ("miles", Metric),
        ]);
        let r2 = EntityProfile::from_pairs(&[
            ("uav", Actor),
            ("flight", Object),
            ("range", Property),
            ("at", Operator),
            ("least", Operator),
            ("20", Metric),
            ("miles", Metric),
        ]);
        let r3 = EntityProfile::from_pairs(&[("uav", Actor), ("land", Action), ("range", Object)]);
        let r4 =
            EntityProfile::from_pairs(&[("operator", Actor), ("flight", Object), ("plan", Object), ("less", Noun)]);
        let r5 = EntityProfile::from_pairs(&[("uav", Actor), ("battery", Object), ("20", Metric)]);
        assert_eq!(unique_entities(&c), 7);
        let counts: Vec<usize> = [&r1, &r2, &r3, &r4, &r5].iter().map(|r| overlap(&c, r)).collect();
        assert_eq!(counts, [7, 5, 2, 2, 2]);
        assert_eq!(format_ratio(2, 7), "0.28");
        assert_eq!(format_ratio(5, 7), "0.71");
        assert_eq!(format_ratio(7, 7), "1.00");
        assert_eq!(format_ratio(0, 0), "0.00");

        let neigh = [("r1", &r1), ("r2", &r2), ("r3", &r3), ("r4", &r4), ("r5", &r5)];
        let res = score_candidate("c", &c, &neigh, 1.0);
        assert_eq!((res.best_match.as_str(), res.overlap, res.kept), ("r1", 7, true));
        let res = score_candidate("c", &c, &neigh[1..], 1.0);
        assert_eq!((res.best_match.as_str(), res.overlap, res.kept), ("r2", 5, false));
    }

    #[test]
    fn units_only_match_as_metrics() {
        let c = EntityProfile::from_pairs(&[("kilometers", Metric)]);
        assert_eq!(overlap(&c, &EntityProfile::from_pairs(&[("miles", Metric)])), 1);
        assert_eq!(overlap(&c, &EntityProfile::from_pairs(&[("miles", Noun)])), 0);
        assert_eq!(overlap(&c, &EntityProfile::from_pairs(&[("minutes", Metric)])), 0);
        let n = EntityProfile::from_pairs(&[("kilometers", Noun)]);
        assert_eq!(overlap(&n, &EntityProfile::from_pairs(&[("miles", Metric)])), 0);
        // exact tokens match across types
        assert_eq!(overlap(&n, &EntityProfile::from_pairs(&[("kilometers", Metric)])), 1);
    }

    #[test]
    fn ratio_edge_cases() {
        let empty = EntityProfile::default();
        assert_eq!(overlap_ratio(&empty, &candidate_profile()), 0.0);
        assert_eq!(overlap_ratio(&candidate_profile(), &candidate_profile()), 1.0);
        let res = score_candidate("x", &empty, &[("c", &candidate_profile())], 1.0);
        assert!(!res.kept && res.ratio == 0.0);
        assert!(score_candidate("x", &empty, &[], 0.0).kept);
        assert!(score_candidate("x", &empty, &[], 1.0).best_match.is_empty());
    }

    #[test]
    fn best_match_ties_go_to_first_neighbour() {
        let c = EntityProfile::from_pairs(&[("uav", Actor), ("land", Action)]);
        let a = EntityProfile::from_pairs(&[("uav", Actor)]);
        let b = EntityProfile::from_pairs(&[("land", Action)]);
        let res = score_candidate("c", &c, &[("b", &b), ("a", &a)], 0.5);
        assert_eq!(res.best_match, "b");
        assert!(res.kept);
    }

    #[test]
    fn filter_uses_top_m_neighbours() {
        let ids: Vec<String> = ["c", "x", "y"].iter().map(|s| s.to_string()).collect();
        let m = SimilarityMatrix::from_values(ids, vec![1.0, 0.9, 0.5, 0.9, 1.0, 0.1, 0.5, 0.1, 1.0]);
        let mut profiles = HashMap::new();
        profiles.insert("c".to_string(), EntityProfile::from_pairs(&[("uav", Actor), ("land", Action)]));
        profiles.insert("x".to_string(), EntityProfile::from_pairs(&[("uav", Actor)]));
        profiles.insert("y".to_string(), EntityProfile::from_pairs(&[("uav", Actor), ("land", Action)]));
        let mut cands = CandidateConflictSet::default();
        cands.members.insert("c".into(), Evidence { most_similar: "x".into(), similarity: 0.9 });

        let one = phase2_filter(&m, &cands, &profiles, &Phase2Options { m_count: 1, t_o: 1.0 }).unwrap();
        assert!(one.final_set.is_empty());
        let two = phase2_filter(&m, &cands, &profiles, &Phase2Options { m_count: 2, t_o: 1.0 }).unwrap();
        assert!(two.final_set.contains("c"));
        assert_eq!(two.results[0].best_match, "y");
        assert!(matches!(
            phase2_filter(&m, &cands, &profiles, &Phase2Options { m_count: 0, t_o: 1.0 }),
            Err(SemanticError::ZeroCount)
        ));
        profiles.remove("y");
        assert!(matches!(
            phase2_filter(&m, &cands, &profiles, &Phase2Options { m_count: 2, t_o: 1.0 }),
            Err(SemanticError::MissingProfile(_))
        ));
    }
}
