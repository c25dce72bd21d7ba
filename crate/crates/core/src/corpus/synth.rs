//! Synthetic conflict generation.
//!
//! Each planted conflict is a perturbed copy of an existing, non-conflicting
//! requirement, labelled as conflicting with its source.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, Requirement, RequirementSet};

const BUNDLED_TABLE: &str = include_str!("../../data/perturbations.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// `charge to 50 %` becomes `fully charge`.
    Percent,
    /// Swap a measurement unit, e.g. miles and kilometers.
    Unit,
    /// Swap a quantifier phrase, e.g. `less than` and `a minimum of`.
    Quantifier,
    /// Change the first number in the sentence.
    Numeric,
    /// Verbatim copy; duplicates count as conflicts.
    Duplicate,
}

#[derive(Debug, Clone)]
pub struct PerturbationTable {
    pub units: Vec<(String, String)>,
    pub quantifiers: Vec<(String, String)>,
    pub percent_adverb: String,
}

impl PerturbationTable {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TABLE).expect("bundled perturbation table is well formed")
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut table = PerturbationTable { units: Vec::new(), quantifiers: Vec::new(), percent_adverb: String::new() };
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = |message: &str| CorpusError::PerturbationTable { line: n + 1, message: message.to_string() };
            match cols.as_slice() {
                ["unit", a, b] => table.units.push((a.to_ascii_lowercase(), b.to_ascii_lowercase())),
                ["quantifier", a, b] => table.quantifiers.push((a.to_ascii_lowercase(), b.to_ascii_lowercase())),
                ["percent", adverb] => table.percent_adverb = adverb.to_string(),
                _ => return Err(bad("expected `unit|quantifier<TAB>a<TAB>b` or `percent<TAB>adverb`")),
            }
        }
        if table.percent_adverb.is_empty() {
            return Err(CorpusError::PerturbationTable { line: 0, message: "missing percent row".into() });
        }
        Ok(table)
    }

    /// Perturbations that change `text`, in a fixed order.
    pub fn applicable(&self, text: &str) -> Vec<Perturbation> {
        [Perturbation::Percent, Perturbation::Unit, Perturbation::Quantifier, Perturbation::Numeric]
            .into_iter()
            .filter(|&p| match p {
                Perturbation::Percent => percent_rewrite(text, &self.percent_adverb).is_some(),
                Perturbation::Unit => swap_first(text, &self.units).is_some(),
                Perturbation::Quantifier => swap_first(text, &self.quantifiers).is_some(),
                Perturbation::Numeric => first_number(text).is_some(),
                Perturbation::Duplicate => true,
            })
            .chain(std::iter::once(Perturbation::Duplicate))
            .collect()
    }
}

/// Applies one perturbation. Returns `None` when it does not apply to `text`.
pub fn perturb<R: Rng>(table: &PerturbationTable, kind: Perturbation, text: &str, rng: &mut R) -> Option<String> {
    match kind {
        Perturbation::Percent => percent_rewrite(text, &table.percent_adverb),
        Perturbation::Unit => swap_first(text, &table.units),
        Perturbation::Quantifier => swap_first(text, &table.quantifiers),
        Perturbation::Numeric => {
            let (start, end) = first_number(text)?;
            let replacement = changed_number(&text[start..end], rng);
            Some(format!("{}{}{}", &text[..start], replacement, &text[end..]))
        }
        Perturbation::Duplicate => Some(text.to_string()),
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Case-insensitive search for `phrase` at word boundaries; byte range in `text`.
fn find_phrase(text: &str, phrase: &str) -> Option<(usize, usize)> {
    let lower = text.to_ascii_lowercase();
    lower.match_indices(phrase).map(|(s, _)| (s, s + phrase.len())).find(|&(s, e)| {
        let before = lower[..s].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after = lower[e..].chars().next().is_none_or(|c| !is_word_char(c));
        before && after
    })
}

fn match_case(original: &str, replacement: &str) -> String {
    if original.chars().count() > 1 && original.chars().all(|c| !c.is_lowercase()) {
        replacement.to_uppercase()
    } else if original.chars().next().is_some_and(|c| c.is_uppercase()) {
        let mut chars = replacement.chars();
        match chars.next() {
            Some(f) => f.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    } else {
        replacement.to_string()
    }
}

fn swap_first(text: &str, pairs: &[(String, String)]) -> Option<String> {
    for (a, b) in pairs {
        for (from, to) in [(a, b), (b, a)] {
            if let Some((s, e)) = find_phrase(text, from) {
                let rep = match_case(&text[s..e], to);
                return Some(format!("{}{}{}", &text[..s], rep, &text[e..]));
            }
        }
    }
    None
}

fn is_number(word: &str) -> bool {
    let mut parts = word.split('.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    parts.next().is_none()
        && !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
}

fn split_trailing_punct(word: &str) -> (&str, &str) {
    let core = word.trim_end_matches(['.', ',', ';', ':', '!', '?', ')']);
    (core, &word[core.len()..])
}

fn first_number(text: &str) -> Option<(usize, usize)> {
    let mut offset = 0;
    for word in text.split(' ') {
        let (core, _) = split_trailing_punct(word);
        if is_number(core) {
            return Some((offset, offset + core.len()));
        }
        offset += word.len() + 1;
    }
    None
}

fn changed_number<R: Rng>(number: &str, rng: &mut R) -> String {
    match number.split_once('.') {
        None => {
            let n: u64 = number.parse().unwrap_or(0);
            let next = if n > 0 && rng.random_bool(0.5) { n * 2 } else { n + rng.random_range(1..=5u64) };
            next.to_string()
        }
        Some((_, frac)) => {
            let v: f64 = number.parse().unwrap_or(0.0);
            let factor = [0.5, 2.0, 1.5][rng.random_range(0..3usize)];
            format!("{:.*}", frac.len(), v * factor + if v == 0.0 { 1.0 } else { 0.0 })
        }
    }
}

/// `<verb> to N %` becomes `<adverb> <verb>`.
fn percent_rewrite(text: &str, adverb: &str) -> Option<String> {
    let words: Vec<&str> = text.split(' ').collect();
    for i in 0..words.len().saturating_sub(2) {
        let verb = words[i];
        if verb.is_empty() || !verb.chars().all(char::is_alphabetic) || !words[i + 1].eq_ignore_ascii_case("to") {
            continue;
        }
        let (consumed, tail) = if let Some((num, tail)) = words[i + 2].split_once('%') {
            if !is_number(num) {
                continue;
            }
            (3, tail)
        } else if is_number(words[i + 2]) && words.get(i + 3).is_some_and(|w| w.starts_with('%')) {
            (4, &words[i + 3][1..])
        } else {
            continue;
        };
        let mut out: Vec<String> = words[..i].iter().map(|w| w.to_string()).collect();
        out.push(match_case(verb, adverb));
        out.push(format!("{}{}", verb.to_lowercase(), tail));
        out.extend(words[i + consumed..].iter().map(|w| w.to_string()));
        return Some(out.join(" "));
    }
    None
}

fn next_ids(set: &RequirementSet, sources: &[usize]) -> Vec<String> {
    let numeric: Option<Vec<u64>> = set.ids().map(|id| id.parse::<u64>().ok()).collect();
    match numeric {
        Some(ids) => {
            let start = ids.into_iter().max().unwrap_or(0) + 1;
            (0..sources.len() as u64).map(|k| (start + k).to_string()).collect()
        }
        None => sources
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let base = format!("{}-s{}", set.requirements()[s].id, k + 1);
                let mut id = base.clone();
                let mut bump = 1;
                while set.get(&id).is_some() {
                    id = format!("{base}-{bump}");
                    bump += 1;
                }
                id
            })
            .collect(),
    }
}

/// Appends `n_conflicts` perturbed copies of randomly chosen non-conflicting
/// requirements, each labelled as conflicting with its source.
pub fn generate_synthetic(set: &RequirementSet, n_conflicts: usize, seed: u64) -> Result<RequirementSet, CorpusError> {
    generate_synthetic_with(set, n_conflicts, seed, &PerturbationTable::bundled())
}

pub fn generate_synthetic_with(
    set: &RequirementSet,
    n_conflicts: usize,
    seed: u64,
    table: &PerturbationTable,
) -> Result<RequirementSet, CorpusError> {
    if set.is_empty() {
        return Err(CorpusError::Empty);
    }
    if n_conflicts == 0 {
        return Ok(set.clone());
    }
    let mut eligible: Vec<usize> = (0..set.len()).filter(|&i| !set.requirements()[i].gold_conflict).collect();
    if n_conflicts > eligible.len() {
        return Err(CorpusError::NotEnoughSources { requested: n_conflicts, available: eligible.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    eligible.truncate(n_conflicts);

    let new_ids = next_ids(set, &eligible);
    let mut reqs = set.requirements().to_vec();
    for (&src, new_id) in eligible.iter().zip(&new_ids) {
        let text = reqs[src].text.clone();
        let kinds = table.applicable(&text);
        let kind = kinds[rng.random_range(0..kinds.len())];
        let variant = perturb(table, kind, &text, &mut rng).expect("applicable perturbation applies");
        reqs[src].gold_conflict = true;
        reqs[src].partners.push(new_id.clone());
        reqs.push(Requirement {
            id: new_id.clone(),
            text: variant,
            gold_conflict: true,
            partners: vec![reqs[src].id.clone()],
        });
    }
    RequirementSet::new(set.name.clone(), reqs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::serialize_requirements;

    fn table() -> PerturbationTable {
        PerturbationTable::bundled()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn percent_rewrite_reproduces_charging_pair() {
        let out =
            perturb(&table(), Perturbation::Percent, "The UAV shall charge to 50 % in less than 3 hours.", &mut rng());
        assert_eq!(out.as_deref(), Some("The UAV shall fully charge in less than 3 hours."));
        let attached = perturb(&table(), Perturbation::Percent, "It shall charge to 80%.", &mut rng());
        assert_eq!(attached.as_deref(), Some("It shall fully charge."));
    }

    #[test]
    fn unit_and_quantifier_swaps() {
        let t = table();
        assert_eq!(
            perturb(&t, Perturbation::Unit, "The UAV flight range shall be no less than 20 miles.", &mut rng())
                .unwrap(),
            "The UAV flight range shall be no less than 20 kilometers."
        );
        assert_eq!(
            perturb(&t, Perturbation::Quantifier, "The UAV flight range shall be no less than 20 miles.", &mut rng())
                .unwrap(),
            "The UAV flight range shall be no more than 20 miles."
        );
        assert_eq!(
            perturb(&t, Perturbation::Quantifier, "A minimum of 3 pilots.", &mut rng()).unwrap(),
            "Less than 3 pilots."
        );
        // word boundaries: "kmh" is not "km"
        assert!(perturb(&t, Perturbation::Unit, "speed in kmh", &mut rng()).is_none());
    }

    #[test]
    fn numeric_change_alters_the_number() {
        let out = perturb(&table(), Perturbation::Numeric, "Log every 15 seconds.", &mut rng()).unwrap();
        assert_ne!(out, "Log every 15 seconds.");
        assert!(out.starts_with("Log every ") && out.ends_with(" seconds."));
        let dec = perturb(&table(), Perturbation::Numeric, "within 32.19 Km.", &mut rng()).unwrap();
        assert_ne!(dec, "within 32.19 Km.");
        assert!(perturb(&table(), Perturbation::Numeric, "no digits here", &mut rng()).is_none());
    }

    fn base() -> RequirementSet {
        RequirementSet::new(
            "base",
            vec![
                Requirement::new("1", "The UAV shall charge to 50 % in less than 3 hours."),
                Requirement::new("2", "The operator shall view the map."),
                Requirement::new("3", "The system shall log telemetry every 5 seconds."),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_conflicts_is_identity() {
        assert_eq!(generate_synthetic(&base(), 0, 9).unwrap(), base());
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = serialize_requirements(&generate_synthetic(&base(), 2, 9).unwrap());
        let b = serialize_requirements(&generate_synthetic(&base(), 2, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn planted_conflicts_are_labelled_pairs() {
        let out = generate_synthetic(&base(), 3, 4).unwrap();
        assert_eq!(out.len(), 6);
        for r in out.requirements()[3..].iter() {
            assert!(r.gold_conflict);
            assert_eq!(r.partners.len(), 1);
            assert_eq!(out.get(&r.partners[0]).unwrap().partners, vec![r.id.clone()]);
        }
        assert_eq!(out.requirements()[3].id, "4");
    }

    #[test]
    fn too_many_conflicts() {
        assert!(matches!(
            generate_synthetic(&base(), 4, 0),
            Err(CorpusError::NotEnoughSources { requested: 4, available: 3 })
        ));
    }

    #[test]
    fn non_numeric_ids_get_derived_names() {
        let set = RequirementSet::new("b", vec![Requirement::new("FR-1", "The pilot shall land.")]).unwrap();
        let out = generate_synthetic(&set, 1, 0).unwrap();
        assert_eq!(out.requirements()[1].id, "FR-1-s1");
    }
}
