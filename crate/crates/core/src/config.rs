//! Run configuration: `key = value` lines, `#` comments.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::ner::CrfHyperParams;
use crate::semantic::Phase2Options;
use crate::threshold::{Objective, Phase1Options, SimilarityScope};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("expected `key=value`, got `{0}`")]
    Override(String),
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value `{value}` for `{key}`: {message}")]
    BadValue { key: String, value: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    Tfidf,
    External,
    /// External vectors concatenated with TFIDF and reduced with PCA.
    Fused,
}

impl FromStr for EmbeddingKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tfidf" => Ok(EmbeddingKind::Tfidf),
            "external" => Ok(EmbeddingKind::External),
            "fused" => Ok(EmbeddingKind::Fused),
            _ => Err("expected tfidf, external or fused".into()),
        }
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingKind::Tfidf => "tfidf",
            EmbeddingKind::External => "external",
            EmbeddingKind::Fused => "fused",
        })
    }
}

/// What the TFIDF vocabulary and idf weights are fit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfidfFit {
    /// Every requirement; no labels are involved.
    Global,
    /// The training folds only, once per test fold.
    Fold,
}

impl FromStr for TfidfFit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global" => Ok(TfidfFit::Global),
            "fold" => Ok(TfidfFit::Fold),
            _ => Err("expected global or fold".into()),
        }
    }
}

impl fmt::Display for TfidfFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TfidfFit::Global => "global",
            TfidfFit::Fold => "fold",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    General,
    Crf,
    Pretagged,
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "general" => Ok(BackendKind::General),
            "crf" => Ok(BackendKind::Crf),
            "pretagged" => Ok(BackendKind::Pretagged),
            _ => Err("expected general, crf or pretagged".into()),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::General => "general",
            BackendKind::Crf => "crf",
            BackendKind::Pretagged => "pretagged",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Requirements CSV; the bundled synthetic set when unset.
    pub dataset: Option<PathBuf>,
    pub output: PathBuf,
    pub seed: u64,
    pub folds: usize,
    pub embedding: EmbeddingKind,
    pub embeddings_file: Option<PathBuf>,
    pub tfidf_fit: TfidfFit,
    pub target_dim: usize,
    pub objective: Objective,
    pub scope: SimilarityScope,
    pub backend: BackendKind,
    /// Trained CRF model; when unset the CRF backend trains on the bundled corpus.
    pub ner_model: Option<PathBuf>,
    pub pretagged_file: Option<PathBuf>,
    pub m_count: usize,
    pub t_o: f64,
    pub crf_c1: f64,
    pub crf_c2: f64,
    pub crf_max_iterations: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let crf = CrfHyperParams::default();
        let p2 = Phase2Options::default();
        RunConfig {
            dataset: None,
            output: PathBuf::from("runs"),
            seed: 42,
            folds: 3,
            embedding: EmbeddingKind::Tfidf,
            embeddings_file: None,
            tfidf_fit: TfidfFit::Global,
            target_dim: crate::embedding::DEFAULT_TARGET_DIM,
            objective: Objective::Youden,
            scope: SimilarityScope::Global,
            backend: BackendKind::General,
            ner_model: None,
            pretagged_file: None,
            m_count: p2.m_count,
            t_o: p2.t_o,
            crf_c1: crf.c1,
            crf_c2: crf.c2,
            crf_max_iterations: crf.max_iterations,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        message: e.to_string(),
    })
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        cfg.merge(text)?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn merge(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "dataset" => self.dataset = optional_path(value),
            "output" => self.output = PathBuf::from(value),
            "seed" => self.seed = parse_value(key, value)?,
            "folds" => self.folds = parse_value(key, value)?,
            "embedding" => self.embedding = parse_value(key, value)?,
            "embeddings_file" => self.embeddings_file = optional_path(value),
            "tfidf_fit" => self.tfidf_fit = parse_value(key, value)?,
            "target_dim" => self.target_dim = parse_value(key, value)?,
            "objective" => self.objective = parse_value(key, value)?,
            "scope" => self.scope = parse_value(key, value)?,
            "backend" => match value.strip_prefix("crf:") {
                Some(model) => {
                    self.backend = BackendKind::Crf;
                    self.ner_model = optional_path(model);
                }
                None => self.backend = parse_value(key, value)?,
            },
            "ner_model" => self.ner_model = optional_path(value),
            "pretagged_file" => self.pretagged_file = optional_path(value),
            "m_count" => self.m_count = parse_value(key, value)?,
            "t_o" => self.t_o = parse_value(key, value)?,
            "crf_c1" => self.crf_c1 = parse_value(key, value)?,
            "crf_c2" => self.crf_c2 = parse_value(key, value)?,
            "crf_max_iterations" => self.crf_max_iterations = parse_value(key, value)?,
            _ => return Err(ConfigError::UnknownKey { key: key.to_string() }),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.folds < 2 {
            return fail("folds must be at least 2");
        }
        if self.m_count == 0 {
            return fail("m_count must be at least 1");
        }
        if !self.t_o.is_finite() || self.t_o < 0.0 {
            return fail("t_o must be a non-negative number");
        }
        if self.target_dim == 0 {
            return fail("target_dim must be at least 1");
        }
        if [self.crf_c1, self.crf_c2].iter().any(|c| !c.is_finite() || *c < 0.0) {
            return fail("crf_c1 and crf_c2 must be non-negative");
        }
        if self.embedding != EmbeddingKind::Tfidf && self.embeddings_file.is_none() {
            return fail("embedding = external or fused needs embeddings_file");
        }
        if self.backend == BackendKind::Pretagged && self.pretagged_file.is_none() {
            return fail("backend = pretagged needs pretagged_file");
        }
        Ok(())
    }

    pub fn phase1_options(&self) -> Phase1Options {
        Phase1Options { objective: self.objective, scope: self.scope }
    }

    pub fn phase2_options(&self) -> Phase2Options {
        Phase2Options { m_count: self.m_count, t_o: self.t_o }
    }

    pub fn crf_hyperparams(&self) -> CrfHyperParams {
        CrfHyperParams { c1: self.crf_c1, c2: self.crf_c2, max_iterations: self.crf_max_iterations }
    }

    /// Every key with its effective value; parses back to the same config.
    pub fn snapshot(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let rows: Vec<(&str, String)> = vec![
            ("dataset", path(&self.dataset)),
            ("output", self.output.display().to_string()),
            ("seed", self.seed.to_string()),
            ("folds", self.folds.to_string()),
            ("embedding", self.embedding.to_string()),
            ("embeddings_file", path(&self.embeddings_file)),
            ("tfidf_fit", self.tfidf_fit.to_string()),
            ("target_dim", self.target_dim.to_string()),
            ("objective", self.objective.to_string()),
            ("scope", self.scope.to_string()),
            ("backend", self.backend.to_string()),
            ("ner_model", path(&self.ner_model)),
            ("pretagged_file", path(&self.pretagged_file)),
            ("m_count", self.m_count.to_string()),
            ("t_o", self.t_o.to_string()),
            ("crf_c1", self.crf_c1.to_string()),
            ("crf_c2", self.crf_c2.to_string()),
            ("crf_max_iterations", self.crf_max_iterations.to_string()),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
