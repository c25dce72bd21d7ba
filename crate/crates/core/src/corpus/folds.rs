use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, RequirementSet};

/// Assignment of every requirement id to one of `n_folds` folds. Conflict
/// partners always share a fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub n_folds: usize,
    assignment: IndexMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    /// Ids in `fold`, in dataset order.
    pub fn members(&self, fold: usize) -> Vec<&str> {
        self.assignment.iter().filter(|(_, &f)| f == fold).map(|(id, _)| id.as_str()).collect()
    }

    /// Ids outside `fold`, in dataset order.
    pub fn complement(&self, fold: usize) -> Vec<&str> {
        self.assignment.iter().filter(|(_, &f)| f != fold).map(|(id, _)| id.as_str()).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.assignment.iter().map(|(id, &f)| (id.as_str(), f))
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

/// Connected components of the partner graph, each listed in dataset order;
/// components are ordered by their first member.
pub fn conflict_components(set: &RequirementSet) -> Vec<Vec<usize>> {
    let n = set.len();
    let mut component = vec![usize::MAX; n];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let c = out.len();
        let mut members = vec![start];
        component[start] = c;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for p in &set.requirements()[i].partners {
                let j = set.position(p).expect("validated set has no dangling partners");
                if component[j] == usize::MAX {
                    component[j] = c;
                    members.push(j);
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Splits `set` into `n_folds` folds keeping every conflict component whole.
///
/// Components are shuffled with `seed`, stably sorted largest first, and each
/// is placed on the currently smallest fold (lowest index on ties). A
/// component larger than the ideal fold size is still placed whole.
pub fn make_folds(set: &RequirementSet, n_folds: usize, seed: u64) -> Result<FoldAssignment, CorpusError> {
    if n_folds < 2 {
        return Err(CorpusError::TooFewFolds(n_folds));
    }
    let mut components = conflict_components(set);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    components.shuffle(&mut rng);
    components.sort_by_key(|c| std::cmp::Reverse(c.len()));

    let mut fold_of = vec![0usize; set.len()];
    let mut sizes = vec![0usize; n_folds];
    for comp in &components {
        let target = (0..n_folds).min_by_key(|&f| (sizes[f], f)).unwrap();
        sizes[target] += comp.len();
        for &i in comp {
            fold_of[i] = target;
        }
    }
    let assignment = set.ids().zip(fold_of).map(|(id, f)| (id.to_string(), f)).collect();
    Ok(FoldAssignment { n_folds, assignment })
}
