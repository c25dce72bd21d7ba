//! Requirement datasets.
//!
//! A dataset is a CSV file with the header `id,text,conflict,conflict_label`.
//! `conflict` is `Yes` or `No`; `conflict_label` is either `No` or
//! `Yes (id[,id]*)`, naming the requirements this one conflicts with.
//! Conflict labels must be symmetric and must only name ids present in the
//! file.

mod folds;
mod synth;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use folds::{conflict_components, make_folds, FoldAssignment};
pub use synth::{generate_synthetic, perturb, Perturbation, PerturbationTable};

/// Expected CSV header columns, in order.
pub const HEADER: [&str; 4] = ["id", "text", "conflict", "conflict_label"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("bad header: expected `id,text,conflict,conflict_label`, found `{0}`")]
    Header(String),
    #[error("{} violation(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
    #[error("n_folds must be at least 2, got {0}")]
    TooFewFolds(usize),
    #[error("requested {requested} synthetic conflicts but only {available} perturbable sources exist")]
    NotEnoughSources { requested: usize, available: usize },
    #[error("requirement set is empty")]
    Empty,
    #[error("bad perturbation table line {line}: {message}")]
    PerturbationTable { line: usize, message: String },
}

/// One data problem found while validating a requirement set. Row numbers
/// are 1-based file lines, so the header is row 1 and the first record row 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyText { row: usize },
    DuplicateId { id: String, row: usize, first_row: usize },
    DanglingPartner { id: String, partner: String, row: usize },
    Asymmetric { id: String, partner: String, row: usize, partner_row: usize },
    SelfPartner { id: String, row: usize },
    MalformedLabel { row: usize, cell: String },
    MalformedConflict { row: usize, cell: String },
    ConflictMismatch { row: usize, conflict: bool },
}

impl Violation {
    pub fn row(&self) -> usize {
        match self {
            Violation::EmptyText { row }
            | Violation::DuplicateId { row, .. }
            | Violation::DanglingPartner { row, .. }
            | Violation::Asymmetric { row, .. }
            | Violation::SelfPartner { row, .. }
            | Violation::MalformedLabel { row, .. }
            | Violation::MalformedConflict { row, .. }
            | Violation::ConflictMismatch { row, .. } => *row,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyText { row } => write!(f, "row {row}: empty requirement text"),
            Violation::DuplicateId { id, row, first_row } => {
                write!(f, "row {row}: duplicate id `{id}` (first seen at row {first_row})")
            }
            Violation::DanglingPartner { id, partner, row } => {
                write!(f, "row {row}: requirement `{id}` names unknown partner `{partner}`")
            }
            Violation::Asymmetric { id, partner, row, partner_row } => write!(
                f,
                "row {row}: requirement `{id}` lists `{partner}` as conflicting but row {partner_row} (`{partner}`) does not list `{id}`"
            ),
            Violation::SelfPartner { id, row } => {
                write!(f, "row {row}: requirement `{id}` lists itself as a conflict partner")
            }
            Violation::MalformedLabel { row, cell } => {
                write!(f, "row {row}: malformed conflict_label `{cell}` (expected `No` or `Yes (id, ...)`)")
            }
            Violation::MalformedConflict { row, cell } => {
                write!(f, "row {row}: malformed conflict cell `{cell}` (expected `Yes` or `No`)")
            }
            Violation::ConflictMismatch { row, conflict } => write!(
                f,
                "row {row}: conflict is `{}` but conflict_label {}",
                if *conflict { "Yes" } else { "No" },
                if *conflict { "lists no partners" } else { "lists partners" }
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Requirement {
    pub id: String,
    pub text: String,
    pub gold_conflict: bool,
    /// Ids of the requirements this one conflicts with. Empty iff
    /// `gold_conflict` is false.
    pub partners: Vec<String>,
}

impl Requirement {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Requirement { id: id.into(), text: text.into(), gold_conflict: false, partners: Vec::new() }
    }

    pub fn conflicting(id: impl Into<String>, text: impl Into<String>, partners: &[&str]) -> Self {
        Requirement {
            id: id.into(),
            text: text.into(),
            gold_conflict: !partners.is_empty(),
            partners: partners.iter().map(|p| p.to_string()).collect(),
        }
    }
}

/// An ordered, validated set of requirements.
#[derive(Debug, Clone, PartialEq)]
pub struct RequirementSet {
    pub name: String,
    requirements: Vec<Requirement>,
    index: HashMap<String, usize>,
}

impl RequirementSet {
    /// Builds a set, checking every invariant. Violations are reported with
    /// the row each requirement would occupy in a CSV file.
    pub fn new(name: impl Into<String>, requirements: Vec<Requirement>) -> Result<Self, CorpusError> {
        let rows: Vec<usize> = (0..requirements.len()).map(|i| i + 2).collect();
        let violations = validate(&requirements, &rows);
        if !violations.is_empty() {
            return Err(CorpusError::Invalid(violations));
        }
        Ok(Self::from_validated(name.into(), requirements))
    }

    fn from_validated(name: String, requirements: Vec<Requirement>) -> Self {
        let index = requirements.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        RequirementSet { name, requirements, index }
    }

    pub fn requirements(&self) -> &[Requirement] {
        &self.requirements
    }

    pub fn len(&self) -> usize {
        self.requirements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requirements.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Requirement> {
        self.index.get(id).map(|&i| &self.requirements[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.requirements.iter().map(|r| r.id.as_str())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Requirement> {
        self.requirements.iter()
    }

    pub fn into_requirements(self) -> Vec<Requirement> {
        self.requirements
    }

    pub fn conflict_count(&self) -> usize {
        self.requirements.iter().filter(|r| r.gold_conflict).count()
    }
}

fn validate(reqs: &[Requirement], rows: &[usize]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut first: HashMap<&str, usize> = HashMap::new();
    for (i, r) in reqs.iter().enumerate() {
        let row = rows[i];
        if r.text.trim().is_empty() {
            out.push(Violation::EmptyText { row });
        }
        if r.gold_conflict == r.partners.is_empty() {
            out.push(Violation::ConflictMismatch { row, conflict: r.gold_conflict });
        }
        match first.get(r.id.as_str()) {
            Some(&j) => out.push(Violation::DuplicateId { id: r.id.clone(), row, first_row: rows[j] }),
            None => {
                first.insert(&r.id, i);
            }
        }
    }
    for (i, r) in reqs.iter().enumerate() {
        let row = rows[i];
        for p in &r.partners {
            if *p == r.id {
                out.push(Violation::SelfPartner { id: r.id.clone(), row });
                continue;
            }
            match first.get(p.as_str()) {
                None => out.push(Violation::DanglingPartner { id: r.id.clone(), partner: p.clone(), row }),
                Some(&j) => {
                    if !reqs[j].partners.contains(&r.id) {
                        out.push(Violation::Asymmetric {
                            id: r.id.clone(),
                            partner: p.clone(),
                            row,
                            partner_row: rows[j],
                        });
                    }
                }
            }
        }
    }
    out.sort_by_key(|v| v.row());
    out
}

/// Parses a `conflict_label` cell. `No` yields an empty list; `Yes (a, b)`
/// yields `["a", "b"]`.
pub fn parse_conflict_label(cell: &str) -> Option<Vec<String>> {
    let cell = cell.trim();
    if cell.eq_ignore_ascii_case("no") {
        return Some(Vec::new());
    }
    let rest = cell.get(..3).filter(|p| p.eq_ignore_ascii_case("yes")).map(|_| cell[3..].trim())?;
    let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
    let ids: Vec<String> = inner.split(',').map(|s| s.trim().to_string()).collect();
    if ids.iter().any(|s| s.is_empty()) {
        return None;
    }
    Some(ids)
}

fn parse_conflict_cell(cell: &str) -> Option<bool> {
    match cell.trim() {
        c if c.eq_ignore_ascii_case("yes") => Some(true),
        c if c.eq_ignore_ascii_case("no") => Some(false),
        _ => None,
    }
}

/// Parses and validates a requirement CSV. All row-level problems are
/// collected and returned together in [`CorpusError::Invalid`].
pub fn parse_requirements<R: std::io::Read>(name: &str, raw: R) -> Result<RequirementSet, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).flexible(false).from_reader(raw);
    let header = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    let found: Vec<String> = header.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if found.len() != HEADER.len() || found.iter().zip(HEADER).any(|(f, h)| f != h) {
        return Err(CorpusError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut reqs = Vec::new();
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, rows.last().map_or(2, |r| r + 1)))?;
        let row = record.position().map_or(rows.len() + 2, |p| p.line() as usize);
        let (id, text, conflict, label) =
            (unquote(&record[0]), unquote(&record[1]), unquote(&record[2]), unquote(&record[3]));
        let gold = match parse_conflict_cell(&conflict) {
            Some(g) => g,
            None => {
                violations.push(Violation::MalformedConflict { row, cell: conflict.to_string() });
                false
            }
        };
        let partners = match parse_conflict_label(&label) {
            Some(p) => p,
            None => {
                violations.push(Violation::MalformedLabel { row, cell: label.to_string() });
                Vec::new()
            }
        };
        reqs.push(Requirement { id: id.to_string(), text: text.to_string(), gold_conflict: gold, partners });
        rows.push(row);
    }
    if !violations.is_empty() {
        // Structural cell errors make the semantic checks noisy; report them alone.
        return Err(CorpusError::Invalid(violations));
    }
    let violations = validate(&reqs, &rows);
    if !violations.is_empty() {
        return Err(CorpusError::Invalid(violations));
    }
    Ok(RequirementSet::from_validated(name.to_string(), reqs))
}

/// A field written as `, "text"` keeps its quotes because the quote does not
/// open the field; strip them here.
fn unquote(cell: &str) -> String {
    match cell.strip_prefix('"').and_then(|c| c.strip_suffix('"')) {
        Some(inner) => inner.replace("\"\"", "\""),
        None => cell.to_string(),
    }
}

fn csv_error(e: csv::Error, fallback_row: usize) -> CorpusError {
    let row = e.position().map_or(fallback_row, |p| p.line() as usize);
    CorpusError::Csv { row, message: e.to_string() }
}

fn quote(field: &str) -> String {
    format!("\"{}\"", field.replace('"', "\"\""))
}

/// Serializes a set back to the CSV schema. Text is always quoted; the label
/// cell is quoted when it lists more than one partner.
pub fn serialize_requirements(set: &RequirementSet) -> String {
    let mut out = String::from("id,text,conflict,conflict_label\n");
    for r in set.iter() {
        let id = if r.id.contains([',', '"', '\n']) { quote(&r.id) } else { r.id.clone() };
        let label = if r.partners.is_empty() {
            "No".to_string()
        } else {
            let l = format!("Yes ({})", r.partners.join(", "));
            if l.contains(',') {
                quote(&l)
            } else {
                l
            }
        };
        let conflict = if r.gold_conflict { "Yes" } else { "No" };
        out.push_str(&format!("{id},{},{conflict},{label}\n", quote(&r.text)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RequirementSet, CorpusError> {
        parse_requirements("t", s.as_bytes())
    }

    fn violations(s: &str) -> Vec<Violation> {
        match parse(s) {
            Err(CorpusError::Invalid(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn parses_sample_rows() {
        let set = parse(
            "id,text,conflict,conflict_label\n\
             1, \"The UAV shall charge to 50 % in less than 3 hours.\", Yes, Yes (2)\n\
             2, \"The UAV shall fully charge in less than 3 hours.\", Yes, Yes (1)\n\
             3, \"Remote surveillance shall include video streaming.\", No, No\n",
        )
        .unwrap();
        assert_eq!(set.len(), 3);
        let r1 = set.get("1").unwrap();
        assert!(r1.gold_conflict);
        assert_eq!(r1.partners, vec!["2"]);
        assert_eq!(r1.text, "The UAV shall charge to 50 % in less than 3 hours.");
        let r3 = set.get("3").unwrap();
        assert!(!r3.gold_conflict);
        assert!(r3.partners.is_empty());
    }

    #[test]
    fn asymmetric_labels_name_both_rows() {
        let v = violations("id,text,conflict,conflict_label\n1,\"a b\",Yes,Yes (2)\n2,\"c d\",No,No\n");
        assert_eq!(v, vec![Violation::Asymmetric { id: "1".into(), partner: "2".into(), row: 2, partner_row: 3 }]);
        let msg = v[0].to_string();
        assert!(msg.contains("row 2") && msg.contains("row 3"), "{msg}");
    }

    #[test]
    fn reports_duplicates_dangling_and_empty_text() {
        let v = violations("id,text,conflict,conflict_label\n1,\"a\",No,No\n1,\"b\",No,No\n3,\"  \",Yes,Yes (9)\n");
        assert!(v.contains(&Violation::DuplicateId { id: "1".into(), row: 3, first_row: 2 }));
        assert!(v.contains(&Violation::EmptyText { row: 4 }));
        assert!(v.contains(&Violation::DanglingPartner { id: "3".into(), partner: "9".into(), row: 4 }));
    }

    #[test]
    fn malformed_cells_are_rejected_with_row() {
        let v = violations("id,text,conflict,conflict_label\n1,\"a\",Maybe,Yes 2\n");
        assert_eq!(
            v,
            vec![
                Violation::MalformedConflict { row: 2, cell: "Maybe".into() },
                Violation::MalformedLabel { row: 2, cell: "Yes 2".into() },
            ]
        );
    }

    #[test]
    fn conflict_flag_must_agree_with_label() {
        let v = violations("id,text,conflict,conflict_label\n1,\"a\",Yes,No\n");
        assert_eq!(v, vec![Violation::ConflictMismatch { row: 2, conflict: true }]);
    }

    #[test]
    fn label_cell_grammar() {
        assert_eq!(parse_conflict_label("No"), Some(vec![]));
        assert_eq!(parse_conflict_label("Yes (2)"), Some(vec!["2".to_string()]));
        assert_eq!(parse_conflict_label("yes(2, 7)"), Some(vec!["2".to_string(), "7".to_string()]));
        assert_eq!(parse_conflict_label("Yes ()"), None);
        assert_eq!(parse_conflict_label("Yes"), None);
        assert_eq!(parse_conflict_label("Y"), None);
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(matches!(parse("a,b,c,d\n"), Err(CorpusError::Header(_))));
    }

    #[test]
    fn serialize_round_trips_multi_partner_labels() {
        let set = RequirementSet::new(
            "t",
            vec![
                Requirement::conflicting("a", "x, \"quoted\" y", &["b", "c"]),
                Requirement::conflicting("b", "z", &["a"]),
                Requirement::conflicting("c", "w", &["a"]),
                Requirement::new("d", "plain"),
            ],
        )
        .unwrap();
        let text = serialize_requirements(&set);
        let back = parse_requirements("t", text.as_bytes()).unwrap();
        assert_eq!(back, set);
    }
}
