//! End-to-end runs over cross-validation folds and their on-disk layout:
//!
//! ```text
//! <out>/config.snapshot
//! <out>/similarity.csv                         (one matrix for all folds)
//! <out>/folds/<i>/similarity.csv               (TFIDF fit per fold)
//! <out>/summary.txt
//! <out>/report.md
//! <out>/folds/<i>/roc.csv
//! <out>/folds/<i>/candidates.csv
//! <out>/folds/<i>/confusion.csv
//! <out>/folds/<i>/final.csv                     (after phase 2)
//! <out>/folds/<i>/confusion-phase2-<backend>.csv (after phase 2)
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use thiserror::Error;

use crate::config::{BackendKind, ConfigError, EmbeddingKind, RunConfig, TfidfFit};
use crate::corpus::{make_folds, parse_requirements, CorpusError, FoldAssignment, RequirementSet};
use crate::embedding::{
    embed_table_tfidf, fit_tfidf, fuse, load_external_embeddings, EmbeddingError, EmbeddingTable, PcaReducer,
    TfidfModel,
};
use crate::eval::{
    aggregate_folds, confusion, format_f1_change, macro_metrics, ConfusionMatrix, EvalError, MacroMetrics,
    MetricSummary,
};
use crate::io::write_atomic;
use crate::ner::{
    parse_annotated, train_crf, CrfModel, EntityType, GeneralTagger, NerBackend, NerError, PretaggedBackend, TagSet,
};
use crate::semantic::{build_profiles, format_ratio, phase2_filter, Phase2Options, Phase2Outcome, SemanticError};
use crate::similarity::{pairwise_matrix, SimilarityError, SimilarityMatrix};
use crate::threshold::{phase1_detect, Phase1Options, Phase1Outcome, ThresholdError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error(transparent)]
    Ner(#[from] NerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {message}", path.display())]
    Summary { path: PathBuf, message: String },
    #[error("{}: no run directories (nothing with a summary.txt)", path.display())]
    NoRuns { path: PathBuf },
}

fn read(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
    }
    write_atomic(path, text.as_bytes()).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

/// The configured dataset, or the bundled synthetic set.
pub fn load_dataset(cfg: &RunConfig) -> Result<RequirementSet, PipelineError> {
    match &cfg.dataset {
        None => Ok(crate::bundled::synthetic_dataset()),
        Some(path) => {
            let text = read(path)?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(parse_requirements(&name, text.as_bytes())?)
        }
    }
}

/// Embeds every requirement, with TFIDF fit on the whole dataset.
pub fn build_embeddings(cfg: &RunConfig, set: &RequirementSet) -> Result<EmbeddingTable, PipelineError> {
    build_embeddings_fitted(cfg, set, None)
}

/// Embeds every requirement, with TFIDF fit only on `fit_ids` when given.
pub fn build_embeddings_fitted(
    cfg: &RunConfig,
    set: &RequirementSet,
    fit_ids: Option<&[&str]>,
) -> Result<EmbeddingTable, PipelineError> {
    let tfidf = || -> Result<EmbeddingTable, PipelineError> {
        let model = match fit_ids {
            None => fit_tfidf(set)?,
            Some(ids) => TfidfModel::fit(ids.iter().filter_map(|id| set.get(id)).map(|r| r.text.as_str()))?,
        };
        Ok(embed_table_tfidf(&model, set)?)
    };
    let external = || -> Result<EmbeddingTable, PipelineError> {
        let path = cfg.embeddings_file.as_ref().ok_or(ConfigError::Invalid("embeddings_file is not set".into()))?;
        let file = fs::File::open(path).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
        Ok(load_external_embeddings(std::io::BufReader::new(file))?.align_to(set)?)
    };
    match cfg.embedding {
        EmbeddingKind::Tfidf => tfidf(),
        EmbeddingKind::External => external(),
        EmbeddingKind::Fused => {
            let (a, b) = (external()?, tfidf()?);
            let max = set.len().min(a.dim() + b.dim());
            let dim = cfg.target_dim.min(max);
            if dim < cfg.target_dim {
                log::warn!("target_dim {} exceeds {} for this dataset; using {}", cfg.target_dim, max, dim);
            }
            Ok(fuse(&a, &b, dim, cfg.seed, &PcaReducer)?)
        }
    }
}

/// The configured Phase II tagger.
pub fn make_backend(cfg: &RunConfig) -> Result<Box<dyn NerBackend>, PipelineError> {
    match cfg.backend {
        BackendKind::General => Ok(Box::new(GeneralTagger::bundled())),
        BackendKind::Crf => {
            let model = match &cfg.ner_model {
                Some(path) => CrfModel::load(&read(path)?)?,
                None => train_crf(&crate::bundled::toy_ner_corpus(), &TagSet::software(), &cfg.crf_hyperparams())?,
            };
            Ok(Box::new(model))
        }
        BackendKind::Pretagged => {
            let path = cfg.pretagged_file.as_ref().ok_or(ConfigError::Invalid("pretagged_file is not set".into()))?;
            let all: Vec<EntityType> = EntityType::SOFTWARE.iter().chain(&EntityType::GENERAL).copied().collect();
            let sentences = parse_annotated(read(path)?.as_bytes(), &TagSet::new(&all))?;
            Ok(Box::new(PretaggedBackend::new(sentences)))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Fold {
    pub outcome: Phase1Outcome,
    pub gold: IndexMap<String, bool>,
    pub confusion: ConfusionMatrix,
    pub metrics: MacroMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Run {
    pub embedding: String,
    /// One matrix shared by every fold, or one per fold.
    pub matrices: Vec<SimilarityMatrix>,
    /// Vector width behind each matrix.
    pub dims: Vec<usize>,
    pub folds: FoldAssignment,
    pub results: Vec<Phase1Fold>,
    pub summary: MetricSummary,
}

impl Phase1Run {
    /// The similarity matrix used for test fold `fold`.
    pub fn matrix(&self, fold: usize) -> &SimilarityMatrix {
        if self.matrices.len() == 1 {
            &self.matrices[0]
        } else {
            &self.matrices[fold]
        }
    }
}

/// Phase I on every fold in turn, all folds sharing `table`.
pub fn run_phase1(
    set: &RequirementSet,
    table: &EmbeddingTable,
    n_folds: usize,
    seed: u64,
    options: &Phase1Options,
) -> Result<Phase1Run, PipelineError> {
    let matrix = pairwise_matrix(&table.align_to(set)?)?;
    let folds = make_folds(set, n_folds, seed)?;
    phase1_over(set, folds, vec![matrix], vec![table.dim()], table.source.to_string(), options)
}

/// Phase I as configured. With `tfidf_fit = fold` and a TFIDF-based
/// embedding, each test fold gets vectors fit on its training folds.
pub fn run_phase1_configured(cfg: &RunConfig, set: &RequirementSet) -> Result<Phase1Run, PipelineError> {
    let options = cfg.phase1_options();
    if cfg.tfidf_fit == TfidfFit::Global || cfg.embedding == EmbeddingKind::External {
        return run_phase1(set, &build_embeddings(cfg, set)?, cfg.folds, cfg.seed, &options);
    }
    let folds = make_folds(set, cfg.folds, cfg.seed)?;
    let mut matrices = Vec::with_capacity(cfg.folds);
    let mut dims = Vec::with_capacity(cfg.folds);
    let mut label = String::new();
    for f in 0..cfg.folds {
        let table = build_embeddings_fitted(cfg, set, Some(&folds.complement(f)))?;
        label = format!("{} (fit per fold)", table.source);
        dims.push(table.dim());
        matrices.push(pairwise_matrix(&table.align_to(set)?)?);
    }
    phase1_over(set, folds, matrices, dims, label, &options)
}

fn phase1_over(
    set: &RequirementSet,
    folds: FoldAssignment,
    matrices: Vec<SimilarityMatrix>,
    dims: Vec<usize>,
    embedding: String,
    options: &Phase1Options,
) -> Result<Phase1Run, PipelineError> {
    let n_folds = folds.n_folds;
    let mut results = Vec::with_capacity(n_folds);
    for f in 0..n_folds {
        let matrix = if matrices.len() == 1 { &matrices[0] } else { &matrices[f] };
        let outcome = phase1_detect(set, matrix, &folds, f, options)?;
        let gold: IndexMap<String, bool> = folds
            .members(f)
            .into_iter()
            .map(|id| (id.to_string(), set.get(id).is_some_and(|r| r.gold_conflict)))
            .collect();
        let cm = confusion(&gold, &outcome.predictions)?;
        results.push(Phase1Fold { outcome, gold, confusion: cm, metrics: macro_metrics(&cm) });
    }
    let summary = aggregate_folds(&results.iter().map(|r| r.metrics).collect::<Vec<_>>())?;
    Ok(Phase1Run { embedding, matrices, dims, folds, results, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase2Fold {
    pub outcome: Phase2Outcome,
    pub predictions: IndexMap<String, bool>,
    pub confusion: ConfusionMatrix,
    pub metrics: MacroMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase2Run {
    pub backend: String,
    pub results: Vec<Phase2Fold>,
    pub summary: MetricSummary,
}

/// Filters each fold's Phase I candidates by entity overlap.
pub fn run_phase2(
    set: &RequirementSet,
    phase1: &Phase1Run,
    backend: &dyn NerBackend,
    options: &Phase2Options,
) -> Result<Phase2Run, PipelineError> {
    let profiles: HashMap<_, _> = build_profiles(set, backend)?;
    let mut results = Vec::with_capacity(phase1.results.len());
    for (i, fold) in phase1.results.iter().enumerate() {
        let outcome = phase2_filter(phase1.matrix(i), &fold.outcome.candidates, &profiles, options)?;
        let predictions: IndexMap<String, bool> =
            fold.gold.keys().map(|id| (id.clone(), outcome.final_set.contains(id))).collect();
        let cm = confusion(&fold.gold, &predictions)?;
        results.push(Phase2Fold { outcome, predictions, confusion: cm, metrics: macro_metrics(&cm) });
    }
    let summary = aggregate_folds(&results.iter().map(|r| r.metrics).collect::<Vec<_>>())?;
    Ok(Phase2Run { backend: backend.name(), results, summary })
}

/// Ordered `key = value` pairs describing a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub entries: IndexMap<String, String>,
}

impl Summary {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn put(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    fn put_metrics(&mut self, prefix: &str, s: &MetricSummary, pooled: &ConfusionMatrix) {
        for (name, stat) in [("precision", s.precision), ("recall", s.recall), ("f1", s.f1), ("accuracy", s.accuracy)] {
            self.put(format!("{prefix}.{name}.mean"), format!("{:.4}", stat.mean));
            self.put(format!("{prefix}.{name}.std"), format!("{:.4}", stat.std));
        }
        self.put(format!("{prefix}.tp"), pooled.tp);
        self.put(format!("{prefix}.fp"), pooled.fp);
        self.put(format!("{prefix}.fn"), pooled.fn_);
        self.put(format!("{prefix}.tn"), pooled.tn);
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = IndexMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once(" = ").ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Summary { entries })
    }
}

fn pooled<'a>(cms: impl Iterator<Item = &'a ConfusionMatrix>) -> ConfusionMatrix {
    cms.fold(ConfusionMatrix::default(), |acc, c| acc.add(c))
}

fn put_undefined(s: &mut Summary, key: &str, cm: &ConfusionMatrix) {
    let undefined = cm.undefined_metrics();
    if !undefined.is_empty() {
        s.put(key, undefined.join("; "));
    }
}

pub fn summarize(cfg: &RunConfig, set: &RequirementSet, p1: &Phase1Run, p2: Option<&Phase2Run>) -> Summary {
    let mut s = Summary::default();
    s.put("dataset", &set.name);
    s.put("requirements", set.len());
    s.put("gold_conflicts", set.conflict_count());
    s.put("folds", p1.folds.n_folds);
    s.put("seed", cfg.seed);
    s.put("embedding", &p1.embedding);
    s.put("embedding.dim", p1.dims.iter().map(usize::to_string).collect::<Vec<_>>().join(" "));
    s.put("objective", cfg.objective);
    s.put("scope", cfg.scope);
    for (i, r) in p1.results.iter().enumerate() {
        s.put(format!("fold.{i}.size"), r.gold.len());
        s.put(format!("fold.{i}.delta"), format!("{:.2}", r.outcome.selection.delta));
        s.put(format!("fold.{i}.candidates"), r.outcome.candidates.len());
        s.put(format!("phase1.fold.{i}.f1"), format!("{:.4}", r.metrics.f1));
        put_undefined(&mut s, &format!("phase1.fold.{i}.undefined"), &r.confusion);
    }
    s.put_metrics("phase1", &p1.summary, &pooled(p1.results.iter().map(|r| &r.confusion)));
    if let Some(p2) = p2 {
        s.put("phase2.backend", &p2.backend);
        s.put("phase2.m_count", cfg.m_count);
        s.put("phase2.t_o", cfg.t_o);
        for (i, r) in p2.results.iter().enumerate() {
            s.put(format!("phase2.fold.{i}.kept"), r.outcome.final_set.len());
            s.put(format!("phase2.fold.{i}.f1"), format!("{:.4}", r.metrics.f1));
            put_undefined(&mut s, &format!("phase2.fold.{i}.undefined"), &r.confusion);
        }
        s.put_metrics("phase2", &p2.summary, &pooled(p2.results.iter().map(|r| &r.confusion)));
        s.put("phase2.f1_change", format_f1_change(p1.summary.f1.mean, p2.summary.f1.mean));
    }
    s
}

/// Markdown report built from a run summary.
pub fn render_report(s: &Summary) -> String {
    let g = |k: &str| s.get(k).unwrap_or("-").to_string();
    let mut out = String::from("# Conflict detection run\n\n");
    out.push_str("| setting | value |\n|---|---|\n");
    for k in [
        "dataset",
        "requirements",
        "gold_conflicts",
        "folds",
        "seed",
        "embedding",
        "embedding.dim",
        "objective",
        "scope",
    ] {
        out.push_str(&format!("| {k} | {} |\n", g(k)));
    }
    let folds: usize = s.get("folds").and_then(|f| f.parse().ok()).unwrap_or(0);
    out.push_str("\n## Folds\n\n| fold | size | cutoff | candidates | phase I F1 |");
    let has_p2 = s.get("phase2.backend").is_some();
    out.push_str(if has_p2 {
        " kept | phase II F1 |\n|---|---|---|---|---|---|---|\n"
    } else {
        "\n|---|---|---|---|---|\n"
    });
    for i in 0..folds {
        out.push_str(&format!(
            "| {i} | {} | {} | {} | {} |",
            g(&format!("fold.{i}.size")),
            g(&format!("fold.{i}.delta")),
            g(&format!("fold.{i}.candidates")),
            g(&format!("phase1.fold.{i}.f1"))
        ));
        if has_p2 {
            out.push_str(&format!(
                " {} | {} |",
                g(&format!("phase2.fold.{i}.kept")),
                g(&format!("phase2.fold.{i}.f1"))
            ));
        }
        out.push('\n');
    }
    out.push_str("\n## Macro metrics (mean ± std over folds)\n\n| phase | precision | recall | F1 | accuracy |\n|---|---|---|---|---|\n");
    let row = |p: &str| {
        let cell = |m: &str| format!("{} ± {}", g(&format!("{p}.{m}.mean")), g(&format!("{p}.{m}.std")));
        format!("| {} | {} | {} | {} |\n", cell("precision"), cell("recall"), cell("f1"), cell("accuracy"))
    };
    out.push_str(&format!("| I {}", row("phase1")));
    if has_p2 {
        out.push_str(&format!("| II ({}) {}", g("phase2.backend"), row("phase2")));
        out.push_str(&format!("\nF1 change from phase I to phase II: {}\n", g("phase2.f1_change")));
    }
    let notes: Vec<String> = s
        .entries
        .iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_suffix(".undefined")?;
            let (phase, fold) = rest.split_once(".fold.")?;
            let phase = if phase == "phase1" { "I" } else { "II" };
            Some(format!("- phase {phase}, fold {fold}: {v} undefined (zero denominator), scored as 0\n"))
        })
        .collect();
    if !notes.is_empty() {
        out.push_str("\n## Notes\n\n");
        out.extend(notes);
    }
    out
}

fn candidates_csv(fold: &Phase1Fold) -> String {
    let mut out = String::from("id,most_similar,similarity,gold\n");
    for (id, ev) in &fold.outcome.candidates.members {
        let gold = fold.gold.get(id).copied().unwrap_or(false);
        out.push_str(&format!("{id},{},{:.6},{}\n", ev.most_similar, ev.similarity, gold as u8));
    }
    out
}

fn final_csv(fold: &Phase2Fold, backend: &str) -> String {
    let mut out = String::from("id,unique,best_match,overlap,ratio,kept,backend\n");
    for r in &fold.outcome.results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{backend}\n",
            r.id,
            r.unique,
            r.best_match,
            r.overlap,
            format_ratio(r.overlap, r.unique),
            r.kept as u8
        ));
    }
    out
}

/// Writes every artifact of a run under `dir`.
pub fn write_run(
    dir: &Path,
    cfg: &RunConfig,
    set: &RequirementSet,
    p1: &Phase1Run,
    p2: Option<&Phase2Run>,
) -> Result<Summary, PipelineError> {
    write(&dir.join("config.snapshot"), &cfg.snapshot())?;
    if let [m] = p1.matrices.as_slice() {
        write(&dir.join("similarity.csv"), &m.to_csv())?;
    }
    for (i, r) in p1.results.iter().enumerate() {
        let fd = dir.join("folds").join(i.to_string());
        if p1.matrices.len() > 1 {
            write(&fd.join("similarity.csv"), &p1.matrix(i).to_csv())?;
        }
        write(&fd.join("roc.csv"), &r.outcome.selection.roc_csv())?;
        write(&fd.join("candidates.csv"), &candidates_csv(r))?;
        write(&fd.join("confusion.csv"), &r.confusion.normalized_csv())?;
    }
    if let Some(p2) = p2 {
        for (i, r) in p2.results.iter().enumerate() {
            let fd = dir.join("folds").join(i.to_string());
            write(&fd.join("final.csv"), &final_csv(r, &p2.backend))?;
            write(&fd.join(format!("confusion-phase2-{}.csv", p2.backend)), &r.confusion.normalized_csv())?;
        }
    }
    let summary = summarize(cfg, set, p1, p2);
    write(&dir.join("summary.txt"), &summary.render())?;
    write(&dir.join("report.md"), &render_report(&summary))?;
    Ok(summary)
}

fn load_summary(dir: &Path) -> Result<Summary, PipelineError> {
    let path = dir.join("summary.txt");
    Summary::parse(&read(&path)?).map_err(|message| PipelineError::Summary { path, message })
}

/// Re-renders `report.md` from an existing run's `summary.txt`.
pub fn rebuild_report(dir: &Path) -> Result<String, PipelineError> {
    let report = render_report(&load_summary(dir)?);
    write(&dir.join("report.md"), &report)?;
    Ok(report)
}

/// Side-by-side table of several runs, one row each.
pub fn render_comparison(runs: &[(String, Summary)]) -> String {
    let mut out = String::from("# Run comparison\n\n");
    out.push_str("| run | dataset | embedding | backend | phase I F1 | phase II F1 | F1 change |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for (name, s) in runs {
        let g = |k: &str| s.get(k).unwrap_or("-").to_string();
        let f1 = |p: &str| match (s.get(&format!("{p}.f1.mean")), s.get(&format!("{p}.f1.std"))) {
            (Some(m), Some(sd)) => format!("{m} ± {sd}"),
            _ => "-".to_string(),
        };
        out.push_str(&format!(
            "| {name} | {} | {} | {} | {} | {} | {} |\n",
            g("dataset"),
            g("embedding"),
            g("phase2.backend"),
            f1("phase1"),
            f1("phase2"),
            g("phase2.f1_change")
        ));
    }
    out
}

/// Rebuilds the report for a run directory, or, for a directory holding
/// several runs, writes a comparison of all of them to its `report.md`.
pub fn report(dir: &Path) -> Result<String, PipelineError> {
    if dir.join("summary.txt").is_file() {
        return rebuild_report(dir);
    }
    let entries = fs::read_dir(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
    let mut runs: Vec<PathBuf> =
        entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.join("summary.txt").is_file()).collect();
    if runs.is_empty() {
        return Err(PipelineError::NoRuns { path: dir.to_path_buf() });
    }
    runs.sort();
    let summaries = runs
        .iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            load_summary(p).map(|s| (name, s))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let out = render_comparison(&summaries);
    write(&dir.join("report.md"), &out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_round_trip() {
        let mut s = Summary::default();
        s.put("a", 1);
        s.put("phase2.f1_change", "↑ 0.04 / 9.30%");
        assert_eq!(Summary::parse(&s.render()).unwrap(), s);
        assert!(Summary::parse("junk").is_err());
    }

    #[test]
    fn bundled_run_writes_layout() {
        let cfg = RunConfig::default();
        let set = load_dataset(&cfg).unwrap();
        let table = build_embeddings(&cfg, &set).unwrap();
        let p1 = run_phase1(&set, &table, cfg.folds, cfg.seed, &cfg.phase1_options()).unwrap();
        let backend = make_backend(&cfg).unwrap();
        let p2 = run_phase2(&set, &p1, backend.as_ref(), &cfg.phase2_options()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let summary = write_run(dir.path(), &cfg, &set, &p1, Some(&p2)).unwrap();
        for f in ["config.snapshot", "summary.txt", "report.md", "similarity.csv"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        for i in 0..cfg.folds {
            let fd = dir.path().join("folds").join(i.to_string());
            for f in ["roc.csv", "candidates.csv", "confusion.csv", "final.csv", "confusion-phase2-general.csv"] {
                assert!(fd.join(f).is_file(), "{i}/{f}");
            }
        }
        assert_eq!(summary.get("phase2.backend"), Some("general"));
        assert_eq!(rebuild_report(dir.path()).unwrap(), fs::read_to_string(dir.path().join("report.md")).unwrap());
    }

    #[test]
    fn fold_fitted_tfidf_gets_one_matrix_per_fold() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("tfidf_fit=fold").unwrap();
        let set = load_dataset(&cfg).unwrap();
        let p1 = run_phase1_configured(&cfg, &set).unwrap();
        assert_eq!(p1.matrices.len(), cfg.folds);
        assert_ne!(p1.matrix(0), p1.matrix(1));
        assert!(p1.embedding.contains("per fold"));
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &cfg, &set, &p1, None).unwrap();
        assert!(!dir.path().join("similarity.csv").exists());
        assert!(dir.path().join("folds/2/similarity.csv").is_file());

        let global = run_phase1_configured(&RunConfig::default(), &set).unwrap();
        assert_eq!(global.matrices.len(), 1);
    }

    #[test]
    fn report_compares_sibling_runs() {
        let root = tempfile::tempdir().unwrap();
        assert!(matches!(report(root.path()), Err(PipelineError::NoRuns { .. })));
        let set = load_dataset(&RunConfig::default()).unwrap();
        for backend in ["general", "crf"] {
            let mut cfg = RunConfig::default();
            cfg.apply_override(&format!("backend={backend}")).unwrap();
            cfg.apply_override("crf_max_iterations=20").unwrap();
            let p1 = run_phase1_configured(&cfg, &set).unwrap();
            let p2 = run_phase2(&set, &p1, make_backend(&cfg).unwrap().as_ref(), &cfg.phase2_options()).unwrap();
            write_run(&root.path().join(backend), &cfg, &set, &p1, Some(&p2)).unwrap();
        }
        let out = report(root.path()).unwrap();
        assert_eq!(out.lines().filter(|l| l.starts_with("| crf |") || l.starts_with("| general |")).count(), 2);
        assert_eq!(fs::read_to_string(root.path().join("report.md")).unwrap(), out);

        fs::write(root.path().join("crf/summary.txt"), "garbage\n").unwrap();
        let err = report(root.path()).unwrap_err().to_string();
        assert!(err.contains("crf") && err.contains("summary.txt"), "{err}");
    }

    #[test]
    fn undefined_metrics_are_noted() {
        let mut s = Summary::default();
        s.put("folds", 1);
        s.put("phase1.fold.0.undefined", "conflict precision");
        assert!(render_report(&s).contains("phase I, fold 0: conflict precision undefined"));
    }
}
