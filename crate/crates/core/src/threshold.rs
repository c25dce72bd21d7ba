//! Phase I: learn a cosine cutoff from an ROC sweep over training
//! requirements, then flag test requirements whose nearest neighbour clears
//! it.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use thiserror::Error;

use crate::corpus::{FoldAssignment, RequirementSet};
use crate::similarity::{SimilarityError, SimilarityMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum ThresholdError {
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("gold labels contain no conflicts; TPR is undefined")]
    NoPositives,
    #[error("gold labels contain no non-conflicts; FPR is undefined")]
    NoNegatives,
    #[error("no ROC points to choose from")]
    EmptyPoints,
    #[error("fold {fold} out of range for {n_folds} folds")]
    UnknownFold { fold: usize, n_folds: usize },
    #[error("training data for test fold {fold}")]
    DegenerateTraining { fold: usize, source: Box<ThresholdError> },
    #[error("requirement `{0}` has no fold assignment")]
    Unassigned(String),
}

/// Objective maximized over the threshold grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// Youden's J, `TPR - FPR`.
    #[default]
    Youden,
    /// `TPR - (1 - FPR)`, kept for comparison. It rewards false positives.
    Literal,
}

impl Objective {
    pub fn score(self, tpr: f64, fpr: f64) -> f64 {
        match self {
            Objective::Youden => tpr - fpr,
            Objective::Literal => tpr - (1.0 - fpr),
        }
    }
}

impl FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "youden" => Ok(Objective::Youden),
            "literal" => Ok(Objective::Literal),
            other => Err(format!("unknown objective `{other}` (expected youden|literal)")),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Youden => "youden",
            Objective::Literal => "literal",
        })
    }
}

/// Which requirements a requirement's nearest neighbour is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimilarityScope {
    /// Every other requirement in the dataset.
    #[default]
    Global,
    /// Only requirements in the same split (training or test fold).
    Fold,
}

impl FromStr for SimilarityScope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global" => Ok(SimilarityScope::Global),
            "fold" => Ok(SimilarityScope::Fold),
            other => Err(format!("unknown similarity scope `{other}` (expected global|fold)")),
        }
    }
}

impl fmt::Display for SimilarityScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarityScope::Global => "global",
            SimilarityScope::Fold => "fold",
        })
    }
}

/// `{0.01, 0.02, ..., 1.00}`.
pub fn default_grid() -> Vec<f64> {
    (1..=100).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub k: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffSelection {
    pub delta: f64,
    pub objective: Objective,
    pub points: Vec<RocPoint>,
}

impl CutoffSelection {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.k).collect()
    }

    /// `k,tpr,fpr` rows in grid order.
    pub fn roc_csv(&self) -> String {
        roc_csv(&self.points)
    }
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("k,tpr,fpr\n");
    for p in points {
        out.push_str(&format!("{:.2},{:.6},{:.6}\n", p.k, p.tpr, p.fpr));
    }
    out
}

/// Why a requirement became a candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub most_similar: String,
    pub similarity: f64,
}

/// Requirements predicted as conflicting, in dataset order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateConflictSet {
    pub members: IndexMap<String, Evidence>,
}

impl CandidateConflictSet {
    pub fn contains(&self, id: &str) -> bool {
        self.members.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.members.keys().map(String::as_str)
    }
}

fn indices(m: &SimilarityMatrix, ids: &[&str]) -> Result<Vec<usize>, ThresholdError> {
    ids.iter().map(|id| m.index_of(id).map_err(ThresholdError::from)).collect()
}

/// Nearest neighbour of each id within `universe` (or the whole matrix).
fn nearest(m: &SimilarityMatrix, ids: &[usize], universe: Option<&[usize]>) -> Vec<Option<(usize, f64)>> {
    ids.iter()
        .map(|&i| match universe {
            Some(u) => m.best_among(i, u.iter().copied()),
            None => m.best_among(i, 0..m.len()),
        })
        .collect()
}

fn labels_at(m: &SimilarityMatrix, ids: &[usize], best: &[Option<(usize, f64)>], k: f64) -> IndexMap<String, bool> {
    ids.iter().zip(best).map(|(&i, b)| (m.ids()[i].clone(), b.is_some_and(|(_, v)| v >= k))).collect()
}

/// Labels each id as conflicting iff its most similar other requirement
/// (anywhere in the matrix) has similarity at least `k`.
pub fn predict_labels(m: &SimilarityMatrix, ids: &[&str], k: f64) -> Result<IndexMap<String, bool>, ThresholdError> {
    let idx = indices(m, ids)?;
    Ok(labels_at(m, &idx, &nearest(m, &idx, None), k))
}

/// As [`predict_labels`], with neighbours restricted to `universe`.
pub fn predict_labels_within(
    m: &SimilarityMatrix,
    ids: &[&str],
    universe: &[&str],
    k: f64,
) -> Result<IndexMap<String, bool>, ThresholdError> {
    let idx = indices(m, ids)?;
    let uni = indices(m, universe)?;
    Ok(labels_at(m, &idx, &nearest(m, &idx, Some(&uni)), k))
}

fn sweep(best: &[Option<(usize, f64)>], gold: &[bool], grid: &[f64]) -> Result<Vec<RocPoint>, ThresholdError> {
    let pos = gold.iter().filter(|&&g| g).count();
    let neg = gold.len() - pos;
    if pos == 0 {
        return Err(ThresholdError::NoPositives);
    }
    if neg == 0 {
        return Err(ThresholdError::NoNegatives);
    }
    Ok(grid
        .iter()
        .map(|&k| {
            let (mut tp, mut fp) = (0usize, 0usize);
            for (b, &g) in best.iter().zip(gold) {
                if b.is_some_and(|(_, v)| v >= k) {
                    if g {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            RocPoint { k, tpr: tp as f64 / pos as f64, fpr: fp as f64 / neg as f64 }
        })
        .collect())
}

/// TPR and FPR at each threshold, conflict as the positive class.
pub fn roc_points(
    m: &SimilarityMatrix,
    gold: &IndexMap<String, bool>,
    grid: &[f64],
) -> Result<Vec<RocPoint>, ThresholdError> {
    let ids: Vec<&str> = gold.keys().map(String::as_str).collect();
    let idx = indices(m, &ids)?;
    let g: Vec<bool> = gold.values().copied().collect();
    sweep(&nearest(m, &idx, None), &g, grid)
}

pub fn roc_points_within(
    m: &SimilarityMatrix,
    gold: &IndexMap<String, bool>,
    universe: &[&str],
    grid: &[f64],
) -> Result<Vec<RocPoint>, ThresholdError> {
    let ids: Vec<&str> = gold.keys().map(String::as_str).collect();
    let idx = indices(m, &ids)?;
    let uni = indices(m, universe)?;
    let g: Vec<bool> = gold.values().copied().collect();
    sweep(&nearest(m, &idx, Some(&uni)), &g, grid)
}

/// Objectives within this distance of the maximum count as tied.
const TIE: f64 = 1e-12;

/// Picks the threshold maximizing `objective`; ties go to the smallest k.
pub fn select_cutoff(points: &[RocPoint], objective: Objective) -> Result<CutoffSelection, ThresholdError> {
    let best = points
        .iter()
        .map(|p| objective.score(p.tpr, p.fpr))
        .max_by(f64::total_cmp)
        .ok_or(ThresholdError::EmptyPoints)?;
    let delta = points
        .iter()
        .filter(|p| objective.score(p.tpr, p.fpr) >= best - TIE)
        .map(|p| p.k)
        .min_by(f64::total_cmp)
        .expect("the maximizer itself qualifies");
    Ok(CutoffSelection { delta, objective, points: points.to_vec() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase1Options {
    pub objective: Objective,
    pub scope: SimilarityScope,
}

impl Default for Phase1Options {
    fn default() -> Self {
        Phase1Options { objective: Objective::Youden, scope: SimilarityScope::Global }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Outcome {
    pub test_fold: usize,
    pub selection: CutoffSelection,
    pub candidates: CandidateConflictSet,
    /// Predicted label for every test-fold requirement at the chosen cutoff.
    pub predictions: IndexMap<String, bool>,
}

/// Learns the cutoff on every fold except `test_fold` and applies it to
/// `test_fold`.
pub fn phase1_detect(
    set: &RequirementSet,
    m: &SimilarityMatrix,
    folds: &FoldAssignment,
    test_fold: usize,
    options: &Phase1Options,
) -> Result<Phase1Outcome, ThresholdError> {
    if test_fold >= folds.n_folds {
        return Err(ThresholdError::UnknownFold { fold: test_fold, n_folds: folds.n_folds });
    }
    if let Some(r) = set.iter().find(|r| folds.fold_of(&r.id).is_none()) {
        return Err(ThresholdError::Unassigned(r.id.clone()));
    }
    let train: Vec<&str> = folds.complement(test_fold);
    let test: Vec<&str> = folds.members(test_fold);
    let train_idx = indices(m, &train)?;
    let test_idx = indices(m, &test)?;

    let train_gold: Vec<bool> = train.iter().map(|id| set.get(id).is_some_and(|r| r.gold_conflict)).collect();
    let train_best = match options.scope {
        SimilarityScope::Global => nearest(m, &train_idx, None),
        SimilarityScope::Fold => nearest(m, &train_idx, Some(&train_idx)),
    };
    let points = sweep(&train_best, &train_gold, &default_grid())
        .map_err(|e| ThresholdError::DegenerateTraining { fold: test_fold, source: Box::new(e) })?;
    let selection = select_cutoff(&points, options.objective)?;

    let test_best = match options.scope {
        SimilarityScope::Global => nearest(m, &test_idx, None),
        SimilarityScope::Fold => nearest(m, &test_idx, Some(&test_idx)),
    };
    let predictions = labels_at(m, &test_idx, &test_best, selection.delta);
    let members = test_idx
        .iter()
        .zip(&test_best)
        .filter_map(|(&i, b)| {
            b.filter(|&(_, v)| v >= selection.delta)
                .map(|(j, v)| (m.ids()[i].clone(), Evidence { most_similar: m.ids()[j].clone(), similarity: v }))
        })
        .collect();
    Ok(Phase1Outcome { test_fold, selection, candidates: CandidateConflictSet { members }, predictions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(ids: &[&str], rows: &[&[f64]]) -> SimilarityMatrix {
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        SimilarityMatrix::from_values(ids.iter().map(|s| s.to_string()).collect(), values)
    }

    fn sample() -> SimilarityMatrix {
        matrix(
            &["a", "b", "c", "d"],
            &[&[1.0, 0.9, 0.1, 0.2], &[0.9, 1.0, 0.3, 0.1], &[0.1, 0.3, 1.0, 0.4], &[0.2, 0.1, 0.4, 1.0]],
        )
    }

    #[test]
    fn extreme_thresholds() {
        let m = sample();
        let ids = ["a", "b", "c", "d"];
        assert!(predict_labels(&m, &ids, 0.0).unwrap().values().all(|&l| l));
        assert!(predict_labels(&m, &ids, 1.01).unwrap().values().all(|&l| !l));
    }

    #[test]
    fn duplicates_flagged_at_every_k() {
        let m = matrix(&["a", "b", "c"], &[&[1.0, 1.0, 0.2], &[1.0, 1.0, 0.2], &[0.2, 0.2, 1.0]]);
        for k in default_grid() {
            let l = predict_labels(&m, &["a", "b"], k).unwrap();
            assert!(l["a"] && l["b"]);
        }
    }

    #[test]
    fn scoped_labels_ignore_outside_neighbours() {
        let m = sample();
        let l = predict_labels_within(&m, &["a", "c"], &["a", "c", "d"], 0.5).unwrap();
        assert!(!l["a"]);
    }

    #[test]
    fn separable_similarities_reach_perfect_point() {
        let m = sample();
        let gold: IndexMap<String, bool> =
            [("a", true), ("b", true), ("c", false), ("d", false)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let pts = roc_points(&m, &gold, &default_grid()).unwrap();
        assert!(pts.iter().any(|p| p.tpr == 1.0 && p.fpr == 0.0));
        for w in pts.windows(2) {
            assert!(w[1].tpr <= w[0].tpr && w[1].fpr <= w[0].fpr);
        }
    }

    #[test]
    fn single_class_gold_is_an_error() {
        let m = sample();
        let all_pos: IndexMap<String, bool> = ["a", "b"].iter().map(|k| (k.to_string(), true)).collect();
        assert_eq!(roc_points(&m, &all_pos, &default_grid()), Err(ThresholdError::NoNegatives));
        let all_neg: IndexMap<String, bool> = ["a", "b"].iter().map(|k| (k.to_string(), false)).collect();
        assert_eq!(roc_points(&m, &all_neg, &default_grid()), Err(ThresholdError::NoPositives));
    }

    #[test]
    fn cutoff_examples() {
        let pts = [
            RocPoint { k: 0.4, tpr: 1.0, fpr: 0.5 },
            RocPoint { k: 0.6, tpr: 0.9, fpr: 0.1 },
            RocPoint { k: 0.8, tpr: 0.5, fpr: 0.0 },
        ];
        assert_eq!(select_cutoff(&pts, Objective::Youden).unwrap().delta, 0.6);
        assert_eq!(select_cutoff(&pts[..1], Objective::Youden).unwrap().delta, 0.4);
        let tie = [RocPoint { k: 0.7, tpr: 0.5, fpr: 0.0 }, RocPoint { k: 0.3, tpr: 0.75, fpr: 0.25 }];
        assert_eq!(select_cutoff(&tie, Objective::Youden).unwrap().delta, 0.3);
        assert_eq!(select_cutoff(&[], Objective::Youden), Err(ThresholdError::EmptyPoints));
    }

    #[test]
    fn literal_objective_prefers_permissive_cutoffs() {
        let pts = [RocPoint { k: 0.4, tpr: 1.0, fpr: 0.5 }, RocPoint { k: 0.6, tpr: 0.9, fpr: 0.1 }];
        assert_eq!(select_cutoff(&pts, Objective::Literal).unwrap().delta, 0.4);
    }

    #[test]
    fn roc_csv_format() {
        let csv = roc_csv(&[RocPoint { k: 0.01, tpr: 1.0, fpr: 0.5 }]);
        assert_eq!(csv, "k,tpr,fpr\n0.01,1.000000,0.500000\n");
    }

    #[test]
    fn parse_options() {
        assert_eq!("literal".parse::<Objective>().unwrap(), Objective::Literal);
        assert_eq!("fold".parse::<SimilarityScope>().unwrap(), SimilarityScope::Fold);
        assert!("other".parse::<Objective>().is_err());
    }
}
