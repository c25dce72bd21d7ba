use indexmap::IndexMap;

use super::features::extract_features;
use super::lbfgs::{minimize, OptimReport, OwlqnParams};
use super::{AnnotatedSentence, EntityType, NerBackend, NerError, Tag, TagSet, Tagged};
use crate::embedding::{tokenize, Token};

const FORMAT_HEADER: &str = "reqconflict-crf\t1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrfHyperParams {
    /// L1 coefficient.
    pub c1: f64,
    /// L2 coefficient.
    pub c2: f64,
    pub max_iterations: usize,
}

impl Default for CrfHyperParams {
    fn default() -> Self {
        CrfHyperParams { c1: 0.1, c2: 0.1, max_iterations: 100 }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Highest-scoring label sequence for `unary[t][y]` and `trans[prev * L + cur]`.
/// Among equally good sequences the lexicographically smallest (by label
/// index) wins.
pub fn viterbi_decode(unary: &[Vec<f64>], trans: &[f64], n_labels: usize) -> Vec<usize> {
    let n = unary.len();
    if n == 0 {
        return Vec::new();
    }
    let l = n_labels;
    // best[t][y]: best score of positions t.. given label y at t
    let mut best = vec![vec![0.0; l]; n];
    best[n - 1].copy_from_slice(&unary[n - 1]);
    for t in (0..n - 1).rev() {
        for y in 0..l {
            let tail = (0..l).map(|z| trans[y * l + z] + best[t + 1][z]).fold(f64::NEG_INFINITY, f64::max);
            best[t][y] = unary[t][y] + tail;
        }
    }
    let argmax_first = |scores: &mut dyn Iterator<Item = f64>| {
        let mut arg = 0;
        let mut top = f64::NEG_INFINITY;
        for (i, s) in scores.enumerate() {
            if s > top {
                top = s;
                arg = i;
            }
        }
        arg
    };
    let mut path = Vec::with_capacity(n);
    path.push(argmax_first(&mut best[0].iter().copied()));
    for t in 1..n {
        let prev = path[t - 1];
        path.push(argmax_first(&mut (0..l).map(|z| trans[prev * l + z] + best[t][z])));
    }
    path
}

#[derive(Debug, Clone)]
struct Instance {
    attrs: Vec<Vec<usize>>,
    labels: Vec<usize>,
}

/// The regularized negative log-likelihood of a corpus under a dense
/// linear-chain CRF. Parameters are laid out as state weights
/// `[attr * L + label]` followed by transitions `[prev * L + cur]`.
#[derive(Debug, Clone)]
pub struct CrfTrainingProblem {
    tagset: TagSet,
    attributes: IndexMap<String, usize>,
    instances: Vec<Instance>,
    c2: f64,
}

impl CrfTrainingProblem {
    pub fn new(corpus: &[AnnotatedSentence], tagset: &TagSet, c2: f64) -> Result<Self, NerError> {
        if corpus.iter().all(|s| s.is_empty()) {
            return Err(NerError::EmptyCorpus);
        }
        let mut attributes = IndexMap::new();
        let mut instances = Vec::with_capacity(corpus.len());
        for (si, s) in corpus.iter().enumerate() {
            if s.tokens.len() != s.tags.len() {
                return Err(NerError::LengthMismatch { sentence: si, tokens: s.tokens.len(), labels: s.tags.len() });
            }
            let labels = s
                .tags
                .iter()
                .map(|&t| tagset.index(t).ok_or(NerError::LabelNotInTagSet { sentence: si, label: t.to_string() }))
                .collect::<Result<Vec<_>, _>>()?;
            let attrs = extract_features(&s.tokens)
                .into_iter()
                .map(|fs| {
                    fs.into_iter()
                        .map(|a| {
                            let next = attributes.len();
                            *attributes.entry(a).or_insert(next)
                        })
                        .collect()
                })
                .collect();
            instances.push(Instance { attrs, labels });
        }
        Ok(CrfTrainingProblem { tagset: tagset.clone(), attributes, instances, c2 })
    }

    pub fn n_labels(&self) -> usize {
        self.tagset.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn n_params(&self) -> usize {
        let l = self.n_labels();
        self.n_attributes() * l + l * l
    }

    /// Negative log-likelihood plus `c2 * |w|^2`; writes the gradient into `grad`.
    pub fn value_and_gradient(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let l = self.n_labels();
        let off = self.n_attributes() * l;
        let trans = &w[off..];
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut nll = 0.0;
        for inst in &self.instances {
            let n = inst.labels.len();
            if n == 0 {
                continue;
            }
            let unary: Vec<Vec<f64>> = inst
                .attrs
                .iter()
                .map(|attrs| (0..l).map(|y| attrs.iter().map(|&a| w[a * l + y]).sum()).collect())
                .collect();
            let mut alpha = vec![vec![0.0; l]; n];
            alpha[0].copy_from_slice(&unary[0]);
            let mut buf = vec![0.0; l];
            for t in 1..n {
                for y in 0..l {
                    for p in 0..l {
                        buf[p] = alpha[t - 1][p] + trans[p * l + y];
                    }
                    alpha[t][y] = unary[t][y] + log_sum_exp(&buf);
                }
            }
            let mut beta = vec![vec![0.0; l]; n];
            for t in (0..n - 1).rev() {
                for y in 0..l {
                    for z in 0..l {
                        buf[z] = trans[y * l + z] + unary[t + 1][z] + beta[t + 1][z];
                    }
                    beta[t][y] = log_sum_exp(&buf);
                }
            }
            let log_z = log_sum_exp(&alpha[n - 1]);

            let mut gold = 0.0;
            for t in 0..n {
                let y = inst.labels[t];
                gold += unary[t][y];
                if t > 0 {
                    gold += trans[inst.labels[t - 1] * l + y];
                }
            }
            nll += log_z - gold;

            for t in 0..n {
                for y in 0..l {
                    let mut p = (alpha[t][y] + beta[t][y] - log_z).exp();
                    if y == inst.labels[t] {
                        p -= 1.0;
                    }
                    for &a in &inst.attrs[t] {
                        grad[a * l + y] += p;
                    }
                }
                if t > 0 {
                    for p in 0..l {
                        for y in 0..l {
                            let pair = (alpha[t - 1][p] + trans[p * l + y] + unary[t][y] + beta[t][y] - log_z).exp();
                            grad[off + p * l + y] += pair;
                        }
                    }
                    grad[off + inst.labels[t - 1] * l + inst.labels[t]] -= 1.0;
                }
            }
        }
        let mut reg = 0.0;
        for (g, &wi) in grad.iter_mut().zip(w) {
            reg += wi * wi;
            *g += 2.0 * self.c2 * wi;
        }
        nll + self.c2 * reg
    }

    /// Full training objective including the L1 term.
    pub fn objective(&self, w: &[f64], c1: f64) -> f64 {
        let mut g = vec![0.0; w.len()];
        self.value_and_gradient(w, &mut g) + c1 * w.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// A trained linear-chain CRF tagger.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    tagset: TagSet,
    attributes: IndexMap<String, usize>,
    state: Vec<f64>,
    transitions: Vec<f64>,
    hyperparams: CrfHyperParams,
}

pub fn train_crf(corpus: &[AnnotatedSentence], tagset: &TagSet, hp: &CrfHyperParams) -> Result<CrfModel, NerError> {
    train_crf_with_report(corpus, tagset, hp).map(|(m, _)| m)
}

/// Trains from zero weights and also returns the optimizer trace.
pub fn train_crf_with_report(
    corpus: &[AnnotatedSentence],
    tagset: &TagSet,
    hp: &CrfHyperParams,
) -> Result<(CrfModel, OptimReport), NerError> {
    let problem = CrfTrainingProblem::new(corpus, tagset, hp.c2)?;
    let params = OwlqnParams { c1: hp.c1, max_iterations: hp.max_iterations, ..OwlqnParams::default() };
    let (w, report) = minimize(|w, g| problem.value_and_gradient(w, g), vec![0.0; problem.n_params()], &params);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(NerError::Optimizer("non-finite weights".into()));
    }
    let off = problem.n_attributes() * problem.n_labels();
    let model = CrfModel {
        tagset: problem.tagset.clone(),
        attributes: problem.attributes,
        state: w[..off].to_vec(),
        transitions: w[off..].to_vec(),
        hyperparams: *hp,
    };
    Ok((model, report))
}

impl CrfModel {
    pub fn tagset(&self) -> &TagSet {
        &self.tagset
    }

    pub fn hyperparams(&self) -> &CrfHyperParams {
        &self.hyperparams
    }

    /// Weight of `attribute` for `tag`; zero for unseen attributes.
    pub fn state_weight(&self, attribute: &str, tag: Tag) -> f64 {
        match (self.attributes.get(attribute), self.tagset.index(tag)) {
            (Some(&a), Some(y)) => self.state[a * self.tagset.len() + y],
            _ => 0.0,
        }
    }

    pub fn transition_weight(&self, from: Tag, to: Tag) -> f64 {
        match (self.tagset.index(from), self.tagset.index(to)) {
            (Some(p), Some(y)) => self.transitions[p * self.tagset.len() + y],
            _ => 0.0,
        }
    }

    /// Number of nonzero weights.
    pub fn active_features(&self) -> usize {
        self.state.iter().chain(&self.transitions).filter(|w| **w != 0.0).count()
    }

    fn unary(&self, tokens: &[Token]) -> Vec<Vec<f64>> {
        let l = self.tagset.len();
        extract_features(tokens)
            .iter()
            .map(|fs| {
                let mut row = vec![0.0; l];
                for a in fs.iter().filter_map(|f| self.attributes.get(f)) {
                    for (y, v) in row.iter_mut().enumerate() {
                        *v += self.state[a * l + y];
                    }
                }
                row
            })
            .collect()
    }

    pub fn predict(&self, tokens: &[Token]) -> Vec<Tag> {
        viterbi_decode(&self.unary(tokens), &self.transitions, self.tagset.len())
            .into_iter()
            .map(|y| self.tagset.label(y))
            .collect()
    }

    /// Fraction of tokens whose predicted label matches the gold label.
    pub fn token_accuracy(&self, corpus: &[AnnotatedSentence]) -> f64 {
        let (mut right, mut total) = (0usize, 0usize);
        for s in corpus {
            for (p, g) in self.predict(&s.tokens).iter().zip(&s.tags) {
                right += (p == g) as usize;
                total += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            right as f64 / total as f64
        }
    }

    /// Text serialization. Only nonzero weights are written; numbers use the
    /// shortest representation that parses back to the same value.
    pub fn save(&self) -> String {
        let l = self.tagset.len();
        let mut out = format!("{FORMAT_HEADER}\n");
        let types: Vec<&str> = self.tagset.types().iter().map(|t| t.as_str()).collect();
        out.push_str(&format!("types\t{}\n", types.join(" ")));
        let hp = &self.hyperparams;
        out.push_str(&format!("c1\t{}\nc2\t{}\nmax_iterations\t{}\n", hp.c1, hp.c2, hp.max_iterations));
        for name in self.attributes.keys() {
            out.push_str(&format!("attr\t{name}\n"));
        }
        for (i, w) in self.state.iter().enumerate() {
            if *w != 0.0 {
                out.push_str(&format!("state\t{}\t{}\t{}\n", i / l, i % l, w));
            }
        }
        for (i, w) in self.transitions.iter().enumerate() {
            if *w != 0.0 {
                out.push_str(&format!("trans\t{}\t{}\t{}\n", i / l, i % l, w));
            }
        }
        out
    }

    pub fn load(text: &str) -> Result<Self, NerError> {
        let err = |line: usize, message: &str| NerError::ModelFormat { line, message: message.to_string() };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, h)) if h == FORMAT_HEADER => {}
            _ => return Err(err(1, "missing or unsupported header")),
        }
        let mut tagset = None;
        let mut hp = CrfHyperParams::default();
        let mut attributes = IndexMap::new();
        let mut weights: Vec<(bool, usize, usize, f64, usize)> = Vec::new();
        for (no, line) in lines {
            let fields: Vec<&str> = line.split('\t').collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(no, "bad number"));
            let idx = |s: &str| s.parse::<usize>().map_err(|_| err(no, "bad index"));
            match fields.as_slice() {
                ["types", list] => {
                    let types = list
                        .split(' ')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<EntityType>().map_err(|e| err(no, &e)))
                        .collect::<Result<Vec<_>, _>>()?;
                    tagset = Some(TagSet::new(&types));
                }
                ["c1", v] => hp.c1 = num(v)?,
                ["c2", v] => hp.c2 = num(v)?,
                ["max_iterations", v] => hp.max_iterations = idx(v)?,
                ["attr", name] => {
                    let next = attributes.len();
                    if attributes.insert(name.to_string(), next).is_some() {
                        return Err(err(no, "duplicate attribute"));
                    }
                }
                ["state", a, y, w] => weights.push((true, idx(a)?, idx(y)?, num(w)?, no)),
                ["trans", p, y, w] => weights.push((false, idx(p)?, idx(y)?, num(w)?, no)),
                _ => return Err(err(no, "unrecognized line")),
            }
        }
        let tagset = tagset.ok_or_else(|| err(0, "missing types line"))?;
        let l = tagset.len();
        let mut state = vec![0.0; attributes.len() * l];
        let mut transitions = vec![0.0; l * l];
        for (is_state, row, col, w, no) in weights {
            let rows = if is_state { attributes.len() } else { l };
            if row >= rows || col >= l {
                return Err(err(no, "index out of range"));
            }
            if !w.is_finite() {
                return Err(err(no, "non-finite weight"));
            }
            let target = if is_state { &mut state } else { &mut transitions };
            target[row * l + col] = w;
        }
        Ok(CrfModel { tagset, attributes, state, transitions, hyperparams: hp })
    }
}

impl NerBackend for CrfModel {
    fn name(&self) -> String {
        "crf".to_string()
    }

    fn tag_text(&self, text: &str) -> Result<Tagged, NerError> {
        let tokens = tokenize(text);
        let tags = self.predict(&tokens);
        Ok(Tagged { spans: super::spans_from_tags(&tokens, &tags), tokens })
    }
}
