use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{train_crf, AnnotatedSentence, CrfHyperParams, EntityType, NerError, Tag, TagSet};
use crate::eval::{f1_score, safe_div, Stat};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Counts {
    fn prf(self) -> (f64, f64, f64) {
        let p = safe_div(self.tp as f64, (self.tp + self.fp) as f64);
        let r = safe_div(self.tp as f64, (self.tp + self.fn_) as f64);
        (p, r, f1_score(p, r))
    }
}

/// Precision, recall and F1 across folds.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityMetrics {
    pub precision: Stat,
    pub recall: Stat,
    pub f1: Stat,
    /// Folds in which the type occurred in the held-out part.
    pub folds: usize,
}

impl EntityMetrics {
    fn from_folds(rows: &[(f64, f64, f64)]) -> Option<Self> {
        let col = |k: usize| Stat::of(&rows.iter().map(|r| [r.0, r.1, r.2][k]).collect::<Vec<_>>());
        Some(EntityMetrics { precision: col(0)?, recall: col(1)?, f1: col(2)?, folds: rows.len() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NerReport {
    pub per_type: IndexMap<EntityType, EntityMetrics>,
    pub micro: EntityMetrics,
    pub macro_avg: EntityMetrics,
    pub weighted: EntityMetrics,
}

impl NerReport {
    pub fn render(&self) -> String {
        let mut out = format!("{:<10} {:>15} {:>15} {:>15}\n", "type", "precision", "recall", "f1");
        let row = |name: &str, m: &EntityMetrics| {
            format!("{:<10} {:>15} {:>15} {:>15}\n", name, m.precision.display(), m.recall.display(), m.f1.display())
        };
        for (t, m) in &self.per_type {
            out.push_str(&row(t.as_str(), m));
        }
        out.push_str(&row("micro", &self.micro));
        out.push_str(&row("macro", &self.macro_avg));
        out.push_str(&row("weighted", &self.weighted));
        out
    }
}

fn token_counts(gold: &[Tag], pred: &[Tag], t: EntityType) -> Counts {
    let mut c = Counts::default();
    for (g, p) in gold.iter().zip(pred) {
        match (g.entity_type() == Some(t), p.entity_type() == Some(t)) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

/// K-fold token-level evaluation of the CRF tagger. Sentences are shuffled
/// with `seed` and dealt round-robin into folds. A type with no gold tokens
/// in a held-out fold is left out of that fold's scores.
pub fn evaluate_ner(
    corpus: &[AnnotatedSentence],
    tagset: &TagSet,
    hp: &CrfHyperParams,
    n_folds: usize,
    seed: u64,
) -> Result<NerReport, NerError> {
    let needed = n_folds.max(2);
    if corpus.len() < needed {
        return Err(NerError::TooFewSentences { needed, folds: n_folds, got: corpus.len() });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of: Vec<usize> = {
        let mut f = vec![0; corpus.len()];
        for (k, &i) in order.iter().enumerate() {
            f[i] = k % n_folds;
        }
        f
    };

    let types = tagset.types();
    let mut per_type: IndexMap<EntityType, Vec<(f64, f64, f64)>> = types.iter().map(|&t| (t, Vec::new())).collect();
    let (mut micro, mut macro_rows, mut weighted) = (Vec::new(), Vec::new(), Vec::new());

    for fold in 0..n_folds {
        let train: Vec<AnnotatedSentence> =
            corpus.iter().zip(&fold_of).filter(|(_, &f)| f != fold).map(|(s, _)| s.clone()).collect();
        let model = train_crf(&train, tagset, hp)?;
        let (mut gold, mut pred) = (Vec::new(), Vec::new());
        for s in corpus.iter().zip(&fold_of).filter(|(_, &f)| f == fold).map(|(s, _)| s) {
            gold.extend_from_slice(&s.tags);
            pred.extend(model.predict(&s.tokens));
        }

        let mut total = Counts::default();
        let mut present = Vec::new();
        for &t in types {
            let c = token_counts(&gold, &pred, t);
            let support = c.tp + c.fn_;
            if support == 0 {
                log::warn!("fold {fold}: no {t} tokens in held-out sentences, skipping type");
                continue;
            }
            total.tp += c.tp;
            total.fp += c.fp;
            total.fn_ += c.fn_;
            let prf = c.prf();
            per_type[&t].push(prf);
            present.push((prf, support));
        }
        if present.is_empty() {
            continue;
        }
        micro.push(total.prf());
        let k = present.len() as f64;
        let support: usize = present.iter().map(|(_, s)| s).sum();
        let mut m = (0.0, 0.0, 0.0);
        let mut w = (0.0, 0.0, 0.0);
        for ((p, r, f), s) in &present {
            m = (m.0 + p / k, m.1 + r / k, m.2 + f / k);
            let share = *s as f64 / support as f64;
            w = (w.0 + p * share, w.1 + r * share, w.2 + f * share);
        }
        macro_rows.push(m);
        weighted.push(w);
    }

    let per_type =
        per_type.into_iter().filter_map(|(t, rows)| EntityMetrics::from_folds(&rows).map(|m| (t, m))).collect();
    Ok(NerReport {
        per_type,
        micro: EntityMetrics::from_folds(&micro).ok_or(NerError::NoEntities)?,
        macro_avg: EntityMetrics::from_folds(&macro_rows).ok_or(NerError::NoEntities)?,
        weighted: EntityMetrics::from_folds(&weighted).ok_or(NerError::NoEntities)?,
    })
}

/// One cell of a hyperparameter grid with its cross-validated scores.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub hyperparams: CrfHyperParams,
    pub report: NerReport,
}

/// Cross-validates every `(c1, c2)` combination, `c1` varying slowest.
pub fn grid_search(
    corpus: &[AnnotatedSentence],
    tagset: &TagSet,
    c1s: &[f64],
    c2s: &[f64],
    max_iterations: usize,
    n_folds: usize,
    seed: u64,
) -> Result<Vec<GridPoint>, NerError> {
    let mut out = Vec::with_capacity(c1s.len() * c2s.len());
    for &c1 in c1s {
        for &c2 in c2s {
            let hyperparams = CrfHyperParams { c1, c2, max_iterations };
            let report = evaluate_ner(corpus, tagset, &hyperparams, n_folds, seed)?;
            out.push(GridPoint { hyperparams, report });
        }
    }
    Ok(out)
}

/// The grid point with the highest mean macro F1; the earliest wins ties.
pub fn best_grid_point(points: &[GridPoint]) -> Option<&GridPoint> {
    points.iter().fold(None, |best: Option<&GridPoint>, p| match best {
        Some(b) if b.report.macro_avg.f1.mean >= p.report.macro_avg.f1.mean => Some(b),
        _ => Some(p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_counts_by_type() {
        let g: Vec<Tag> = ["B-Actor", "O", "B-Metric", "I-Metric"].iter().map(|s| s.parse().unwrap()).collect();
        let p: Vec<Tag> = ["B-Actor", "B-Metric", "B-Metric", "O"].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(token_counts(&g, &p, EntityType::Actor), Counts { tp: 1, fp: 0, fn_: 0 });
        assert_eq!(token_counts(&g, &p, EntityType::Metric), Counts { tp: 1, fp: 1, fn_: 1 });
        assert_eq!(Counts { tp: 1, fp: 1, fn_: 1 }.prf(), (0.5, 0.5, 0.5));
        assert_eq!(Counts::default().prf(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn five_fold_on_bundled_corpus() {
        let corpus = crate::bundled::toy_ner_corpus();
        let hp = CrfHyperParams { max_iterations: 40, ..CrfHyperParams::default() };
        let report = evaluate_ner(&corpus, &TagSet::software(), &hp, 5, 7).unwrap();
        assert!(report.micro.f1.mean > 0.5, "{}", report.render());
        for m in report.per_type.values() {
            assert!(m.f1.std >= 0.0 && m.f1.mean <= 1.0);
        }
    }

    #[test]
    fn too_few_sentences() {
        let s = AnnotatedSentence::from_pairs(&[("uav", "B-Actor")]).unwrap();
        assert!(matches!(
            evaluate_ner(&[s], &TagSet::software(), &CrfHyperParams::default(), 5, 0),
            Err(NerError::TooFewSentences { .. })
        ));
    }

    #[test]
    fn grid_runs_every_cell_and_picks_the_best() {
        let corpus: Vec<_> = crate::bundled::toy_ner_corpus().into_iter().take(24).collect();
        let grid = [0.1, 1.0];
        let points = grid_search(&corpus, &TagSet::software(), &grid, &grid, 15, 3, 5).unwrap();
        let cells: Vec<(f64, f64)> = points.iter().map(|p| (p.hyperparams.c1, p.hyperparams.c2)).collect();
        assert_eq!(cells, [(0.1, 0.1), (0.1, 1.0), (1.0, 0.1), (1.0, 1.0)]);
        let top = points.iter().map(|p| p.report.macro_avg.f1.mean).fold(f64::NEG_INFINITY, f64::max);
        let first_top = points.iter().position(|p| p.report.macro_avg.f1.mean == top).unwrap();
        assert_eq!(best_grid_point(&points), Some(&points[first_top]));
        assert_eq!(best_grid_point(&[]), None);
    }
}
